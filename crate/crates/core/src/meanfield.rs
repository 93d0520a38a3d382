//! Interacting M-host systems sharing one empirical measure per generation,
//! their coupling against independent measure-dependent chains, chaos-rate
//! experiments, and the diffusively rescaled systems.

use crate::engine::{self, ReplicateStream};
use crate::kernel::{self, GridDensity};
use crate::nonlinear::{
    self, endpoint_sample_against_flow, law_flow, GapSeries, LawView, NonLinearDriftSpec,
};
use crate::stats::{self, SampleVector};
use crate::{Error, Result};

/// State of an M-host system: one replacement frequency per host.
///
/// The empirical measure over hosts is derived on demand; it is never stored
/// because every generation rebuilds it from the current coordinates.
#[derive(Debug, Clone)]
pub struct HostSystemState {
    pub frequencies: Vec<f64>,
    pub generation: u64,
}

impl HostSystemState {
    pub fn new(frequencies: Vec<f64>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::invalid("a host system needs at least one host"));
        }
        if let Some(z) = frequencies.iter().find(|z| !(0.0..=1.0).contains(*z)) {
            return Err(Error::invalid(format!("host frequency {z} outside [0, 1]")));
        }
        Ok(HostSystemState {
            frequencies,
            generation: 0,
        })
    }

    pub fn host_count(&self) -> u64 {
        self.frequencies.len() as u64
    }

    /// Mean of the empirical measure over hosts.
    pub fn empirical_mean(&self) -> f64 {
        self.frequencies.iter().sum::<f64>() / self.frequencies.len() as f64
    }
}

/// One generation of the M-host system: the empirical measure is frozen once,
/// then every coordinate moves through the upper update with its own fresh
/// uniform pair, in coordinate order on the replicate stream.
///
/// Mean-only drifts read the frozen empirical mean directly; other drifts
/// receive the full empirical view, which costs one pass over the hosts per
/// evaluation.
pub fn system_step(
    state: &HostSystemState,
    delta: f64,
    drift: &NonLinearDriftSpec,
    stream: &mut ReplicateStream,
) -> Result<HostSystemState> {
    let frozen_mean;
    let view = if drift.law_mean_only() {
        frozen_mean = state.empirical_mean();
        LawView::Mean(frozen_mean)
    } else {
        LawView::Empirical(&state.frequencies)
    };
    let mut next = Vec::with_capacity(state.frequencies.len());
    for &z in &state.frequencies {
        let p = drift.eval(z, &view)?;
        let (u, v) = stream.uniform_pair();
        next.push(kernel::update_sup(p, delta, z, u, v)?);
    }
    Ok(HostSystemState {
        frequencies: next,
        generation: state.generation + 1,
    })
}

/// Draws an M-host initial state from `mu0` and runs `n` generations.
pub fn system_run(
    hosts: u64,
    delta: f64,
    drift: &NonLinearDriftSpec,
    mu0: &GridDensity,
    n: u64,
    stream: &mut ReplicateStream,
) -> Result<HostSystemState> {
    let sampler = mu0.sampler()?;
    let init: Vec<f64> = (0..hosts).map(|_| sampler.sample(stream)).collect();
    let mut state = HostSystemState::new(init)?;
    for _ in 0..n {
        state = system_step(&state, delta, drift, stream)?;
    }
    Ok(state)
}

/// Couples the M-host system to M independent copies of the measure-dependent
/// chain, both started from the same per-coordinate draws of `mu0`.
///
/// Per generation, coordinate i pairs the host update at the frozen empirical
/// measure with the chain update at the deterministic grid law, through the
/// shared-uniform coupled kernel step (three uniforms per coordinate).
/// Returns the sampled mean absolute gap of coordinate 1 per generation.
pub fn twolevel_coupled_run(
    hosts: u64,
    delta: f64,
    drift: &NonLinearDriftSpec,
    mu0: &GridDensity,
    n: u64,
    reps: u64,
    master_seed: u64,
) -> Result<GapSeries> {
    if hosts == 0 {
        return Err(Error::invalid("a host system needs at least one host"));
    }
    if reps == 0 {
        return Err(Error::invalid("coupling needs reps >= 1"));
    }
    let flow = law_flow(mu0, delta, drift, n)?;
    let sampler = mu0.sampler()?;
    let flow_means = nonlinear::flow_means(&flow, drift);
    let mean_only = drift.law_mean_only();
    let m = hosts as usize;
    let len = n as usize + 1;
    let (sum, sum_sq) = engine::parallel_replicates(
        master_seed,
        reps,
        |stream: &mut ReplicateStream| {
            let mut zs: Vec<f64> = (0..m).map(|_| sampler.sample(stream)).collect();
            let mut zbars = zs.clone();
            let mut gaps = vec![0.0_f64; len];
            for k in 0..n {
                let host_mean;
                let host_view = if mean_only {
                    host_mean = zs.iter().sum::<f64>() / m as f64;
                    LawView::Mean(host_mean)
                } else {
                    LawView::Empirical(&zs)
                };
                let chain_view = nonlinear::flow_view(&flow, flow_means.as_deref(), k);
                let mut next_zs = Vec::with_capacity(m);
                let mut next_zbars = Vec::with_capacity(m);
                for i in 0..m {
                    let p = drift.eval(zs[i], &host_view)?;
                    let q = drift.eval(zbars[i], &chain_view)?;
                    let (z, zbar) = kernel::coupled_step(zs[i], zbars[i], p, q, delta, stream)?;
                    next_zs.push(z);
                    next_zbars.push(zbar);
                }
                zs = next_zs;
                zbars = next_zbars;
                gaps[k as usize + 1] = (zs[0] - zbars[0]).abs();
            }
            let sq: Vec<f64> = gaps.iter().map(|g| g * g).collect();
            Ok((gaps, sq))
        },
        (vec![0.0_f64; len], vec![0.0_f64; len]),
        |mut acc, v| {
            for i in 0..len {
                acc.0[i] += v.0[i];
                acc.1[i] += v.1[i];
            }
            acc
        },
    )?;
    let r = reps as f64;
    let gap: Vec<f64> = sum.iter().map(|s| s / r).collect();
    let stderr: Vec<f64> = gap
        .iter()
        .zip(&sum_sq)
        .map(|(&g, &s2)| ((s2 / r - g * g).max(0.0) / r).sqrt())
        .collect();
    Ok(GapSeries { gap, stderr })
}

/// Expected W1 distance between the within-system empirical measure of an
/// M-host system at a fixed generation and the deterministic grid law.
#[derive(Debug, Clone)]
pub struct ChaosPoint {
    pub hosts: u64,
    pub w1: f64,
    /// Standard error of the replicate mean.
    pub stderr: f64,
}

/// Chaos-rate experiment outcome: per-M W1 estimates and the fitted slope of
/// log W1 against log M.
#[derive(Debug, Clone)]
pub struct ChaosRate {
    pub points: Vec<ChaosPoint>,
    pub slope: f64,
}

/// For each host count, estimates E[W1(empirical measure of the M hosts at
/// generation `n`, grid law at `n`)] over `reps` independent systems, then
/// fits the log-log slope across host counts. This is the transport distance
/// whose 1/sqrt(M) order drives the finite-M error of the whole system; the
/// coordinate-1 marginal itself converges faster (order 1/M for smooth
/// drifts) and its across-replicate estimate saturates at the Monte Carlo
/// resolution floor, so its fitted slope reflects the floor, not the rate.
///
/// The reference is the grid law flow, not a second simulated system.
pub fn chaos_rate_experiment(
    host_counts: &[u64],
    delta: f64,
    drift: &NonLinearDriftSpec,
    mu0: &GridDensity,
    n: u64,
    reps: u64,
    master_seed: u64,
) -> Result<ChaosRate> {
    if host_counts.len() < 2 {
        return Err(Error::invalid("slope fitting needs at least two host counts"));
    }
    if host_counts.iter().any(|&m| m == 0) {
        return Err(Error::invalid("host counts must be >= 1"));
    }
    if reps < 2 {
        return Err(Error::invalid("chaos experiment needs reps >= 2"));
    }
    if !(drift.lip_sum() < 1.0) {
        return Err(Error::invalid(format!(
            "chaos rate needs l1 + l2 < 1, got {}",
            drift.lip_sum()
        )));
    }
    let flow = law_flow(mu0, delta, drift, n)?;
    let reference = flow.last();
    let mut points = Vec::with_capacity(host_counts.len());
    for (lane, &hosts) in host_counts.iter().enumerate() {
        let seed = engine::lane_seed(master_seed, lane as u64);
        let w1s = engine::parallel_collect(seed, reps, |stream| {
            let state = system_run(hosts, delta, drift, mu0, n, stream)?;
            stats::w1_sample_vs_grid(&SampleVector::new(state.frequencies)?, reference)
        })?;
        let r = reps as f64;
        let mean = w1s.iter().sum::<f64>() / r;
        let var = w1s.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / r;
        points.push(ChaosPoint {
            hosts,
            w1: mean,
            stderr: (var / r).sqrt(),
        });
    }
    let slope = log_log_slope(
        &points.iter().map(|p| p.hosts as f64).collect::<Vec<_>>(),
        &points.iter().map(|p| p.w1).collect::<Vec<_>>(),
    )?;
    Ok(ChaosRate { points, slope })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("slope fit needs matching series of length >= 2"));
    }
    if x.iter().chain(y).any(|&v| !(v > 0.0)) {
        return Err(Error::invalid("log-log slope needs strictly positive data"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let sxx: f64 = lx.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::invalid("slope fit needs at least two distinct x values"));
    }
    Ok(sxy / sxx)
}

/// Diffusive scale: N sets the step size `delta_N = sqrt(3/N)`, the host
/// count stands alone, and time t maps to generation floor(N t).
#[derive(Debug, Clone, Copy)]
pub struct ScalingParams {
    pub big_n: u64,
    pub hosts: u64,
}

impl ScalingParams {
    pub fn new(big_n: u64, hosts: u64) -> Result<Self> {
        if big_n < 3 {
            return Err(Error::invalid(format!(
                "diffusive scale N = {big_n} puts delta_N = sqrt(3/N) above 1"
            )));
        }
        if hosts == 0 {
            return Err(Error::invalid("a host system needs at least one host"));
        }
        Ok(ScalingParams { big_n, hosts })
    }

    pub fn delta(&self) -> f64 {
        (3.0 / self.big_n as f64).sqrt()
    }

    pub fn generations(&self, t: f64) -> Result<u64> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::invalid(format!("time {t} must be finite and >= 0")));
        }
        Ok((self.big_n as f64 * t).floor() as u64)
    }
}

/// Terminal samples of the two scaled systems at generation floor(N t).
#[derive(Debug, Clone)]
pub struct ScaledRun {
    /// Coordinate-1 terminals of the M-host system across replicates.
    pub system: SampleVector,
    /// Terminals of the measure-dependent chain across replicates.
    pub nonlinear: SampleVector,
    pub generations: u64,
    pub delta: f64,
}

/// Runs the diffusively scaled M-host system and the matching scaled
/// measure-dependent chain to generation floor(N t), returning terminal
/// samples of both for downstream W1 comparison.
///
/// `drift` must already be the rescaled map, normally built through
/// `NonLinearDriftSpec::diffusion_scaled`, whose construction-time range
/// probe enforces that the underlying drift pushes inward at both ends.
pub fn scaled_system_run(
    scaling: &ScalingParams,
    drift: &NonLinearDriftSpec,
    mu0: &GridDensity,
    t_end: f64,
    reps: u64,
    master_seed: u64,
) -> Result<ScaledRun> {
    if reps == 0 {
        return Err(Error::invalid("scaled run needs reps >= 1"));
    }
    let delta = scaling.delta();
    let generations = scaling.generations(t_end)?;
    let flow = law_flow(mu0, delta, drift, generations)?;
    let hosts = scaling.hosts;
    let system_vals = engine::parallel_collect(
        engine::lane_seed(master_seed, 0),
        reps,
        |stream| Ok(system_run(hosts, delta, drift, mu0, generations, stream)?.frequencies[0]),
    )?;
    let nonlinear = endpoint_sample_against_flow(
        &flow,
        delta,
        drift,
        reps,
        engine::lane_seed(master_seed, 1),
    )?;
    Ok(ScaledRun {
        system: SampleVector::new(system_vals)?,
        nonlinear,
        generations,
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::derive_stream;
    use crate::kernel::DENSITY_GRID_DEFAULT;
    use crate::nonlinear::law_flow;
    use crate::stats::{ks_two_sample_pvalue, BetaSampler};

    fn uniform_law() -> GridDensity {
        GridDensity::uniform(DENSITY_GRID_DEFAULT).unwrap()
    }

    fn affine(a: f64, b: f64, c: f64) -> NonLinearDriftSpec {
        NonLinearDriftSpec::affine_in_mean(a, b, c).unwrap()
    }

    #[test]
    fn state_validation() {
        assert!(HostSystemState::new(vec![]).is_err());
        assert!(HostSystemState::new(vec![0.2, 1.4]).is_err());
        let s = HostSystemState::new(vec![0.25, 0.75]).unwrap();
        assert_eq!(s.host_count(), 2);
        assert!((s.empirical_mean() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_host_matches_linear_chain_exactly() {
        // One host makes the empirical measure a point mass, so the drift
        // collapses to x -> a + (b + c) x and the stream consumption layout
        // coincides with a hand-rolled linear chain: same draws, same states.
        let (delta, n, reps) = (0.5, 40u64, 200u64);
        let drift = affine(0.1, 0.2, 0.3);
        let mu0 = uniform_law();
        let sampler = mu0.sampler().unwrap();
        let system = engine::parallel_collect(91, reps, |stream| {
            Ok(system_run(1, delta, &drift, &mu0, n, stream)?.frequencies[0])
        })
        .unwrap();
        let manual = engine::parallel_collect(91, reps, |stream| {
            let mut z = sampler.sample(stream);
            for _ in 0..n {
                let p = 0.1 + (0.2 + 0.3) * z;
                let (u, v) = stream.uniform_pair();
                z = kernel::update_sup(p, delta, z, u, v)?;
            }
            Ok(z)
        })
        .unwrap();
        assert_eq!(system, manual);
    }

    #[test]
    fn stream_accounting_matches_manual_replay() {
        // Coordinate i of generation k consumes exactly the (2i, 2i+1)-th
        // uniforms drawn in that generation: replaying the stream by hand
        // reproduces the system bit for bit.
        let (m, delta, n) = (16usize, 0.7, 5u64);
        let drift = affine(0.2, 0.1, 0.4);
        let mu0 = uniform_law();
        let sampler = mu0.sampler().unwrap();
        let mut stream_a = derive_stream(1234, 7);
        let mut stream_b = derive_stream(1234, 7);
        let state = system_run(m as u64, delta, &drift, &mu0, n, &mut stream_a).unwrap();
        let mut manual: Vec<f64> = (0..m).map(|_| sampler.sample(&mut stream_b)).collect();
        for _ in 0..n {
            let mean = manual.iter().sum::<f64>() / m as f64;
            let mut next = Vec::with_capacity(m);
            for &z in &manual {
                let p = drift.eval(z, &LawView::Mean(mean)).unwrap();
                let (u, v) = stream_b.uniform_pair();
                next.push(kernel::update_sup(p, delta, z, u, v).unwrap());
            }
            manual = next;
        }
        assert_eq!(state.frequencies, manual);
        assert_eq!(state.generation, n);
    }

    #[test]
    fn exchangeability_under_initial_permutation() {
        // Permuting initial coordinates then stepping equals stepping then
        // permuting, in law: coordinate 1 after a reversed start must match
        // the last coordinate of a plain run.
        let (m, delta, n, reps) = (8usize, 0.5, 20u64, 3000u64);
        let drift = affine(0.1, 0.2, 0.3);
        let mu0 = uniform_law();
        let sampler = mu0.sampler().unwrap();
        let mut reversed = engine::parallel_collect(3100, reps, |stream| {
            let mut init: Vec<f64> = (0..m).map(|_| sampler.sample(stream)).collect();
            init.reverse();
            let mut state = HostSystemState::new(init)?;
            for _ in 0..n {
                state = system_step(&state, delta, &drift, stream)?;
            }
            Ok(state.frequencies[0])
        })
        .unwrap();
        let mut plain = engine::parallel_collect(3200, reps, |stream| {
            Ok(system_run(m as u64, delta, &drift, &mu0, n, stream)?.frequencies[m - 1])
        })
        .unwrap();
        let p = ks_two_sample_pvalue(&mut reversed, &mut plain);
        assert!(p > 0.01, "KS p-value {p}");
    }

    #[test]
    fn coordinate_laws_agree_across_index() {
        let (m, delta, n, reps) = (6usize, 0.5, 25u64, 3000u64);
        let drift = affine(0.15, 0.25, 0.2);
        let mu0 = uniform_law();
        let mut first = engine::parallel_collect(3300, reps, |stream| {
            Ok(system_run(m as u64, delta, &drift, &mu0, n, stream)?.frequencies[0])
        })
        .unwrap();
        let mut middle = engine::parallel_collect(3400, reps, |stream| {
            Ok(system_run(m as u64, delta, &drift, &mu0, n, stream)?.frequencies[m / 2])
        })
        .unwrap();
        let p = ks_two_sample_pvalue(&mut first, &mut middle);
        assert!(p > 0.01, "KS p-value {p}");
    }

    #[test]
    fn measure_free_coordinates_uncorrelated() {
        // c = 0 makes the product dynamics exact; terminal coordinates of a
        // two-host system must show no cross-correlation.
        let (delta, n, reps) = (0.5, 50u64, 20_000u64);
        let drift = affine(0.2, 0.3, 0.0);
        let mu0 = uniform_law();
        let pairs = engine::parallel_collect(3500, reps, |stream| {
            let state = system_run(2, delta, &drift, &mu0, n, stream)?;
            Ok((state.frequencies[0], state.frequencies[1]))
        })
        .unwrap();
        let r = reps as f64;
        let mx = pairs.iter().map(|p| p.0).sum::<f64>() / r;
        let my = pairs.iter().map(|p| p.1).sum::<f64>() / r;
        let sxx = pairs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<f64>();
        let syy = pairs.iter().map(|p| (p.1 - my) * (p.1 - my)).sum::<f64>();
        let sxy = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>();
        let corr = sxy / (sxx * syy).sqrt();
        assert!(
            corr.abs() <= 3.0 / r.sqrt(),
            "cross-correlation {corr} exceeds 3/sqrt(reps)"
        );
    }

    #[test]
    fn twolevel_gap_zero_trivials() {
        let mu0 = uniform_law();
        // n = 0: shared starts, nothing moves.
        let g0 = twolevel_coupled_run(4, 0.5, &affine(0.1, 0.2, 0.3), &mu0, 0, 50, 3600).unwrap();
        assert_eq!(g0.gap, vec![0.0]);
        // Measure-free drift: both levels see identical parameters at equal
        // states, so the coupling keeps them identical forever.
        let g = twolevel_coupled_run(4, 0.5, &affine(0.2, 0.3, 0.0), &mu0, 15, 50, 3700).unwrap();
        assert!(g.gap.iter().all(|&x| x == 0.0), "gaps {:?}", g.gap);
        assert!(g.stderr.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn twolevel_gap_plateau_decays_in_hosts() {
        // The coupled gap settles at a plateau of order 1/sqrt(M); quadrupling
        // M should roughly halve it, tested with generous margins.
        let (delta, n, reps) = (0.5, 60u64, 1500u64);
        let drift = affine(0.1, 0.2, 0.3);
        let mu0 = uniform_law();
        let sup_gap = |hosts: u64| -> f64 {
            let series = twolevel_coupled_run(hosts, delta, &drift, &mu0, n, reps, 3800).unwrap();
            series.gap.iter().cloned().fold(0.0, f64::max)
        };
        let (s16, s64, s256) = (sup_gap(16), sup_gap(64), sup_gap(256));
        assert!(s64 < 0.8 * s16, "sup gaps {s16} {s64}");
        assert!(s256 < 0.8 * s64, "sup gaps {s64} {s256}");
    }

    #[test]
    fn critical_lipschitz_sum_gap_grows_at_most_linearly() {
        // At l1 + l2 = 1 the contraction budget vanishes; the gap may drift
        // but no faster than linearly in n.
        let (delta, n, reps) = (0.5, 200u64, 600u64);
        let drift = affine(0.0, 0.5, 0.5);
        assert!((drift.lip_sum() - 1.0).abs() < 1e-15);
        let series = twolevel_coupled_run(64, delta, &drift, &uniform_law(), n, reps, 3900).unwrap();
        let (g100, g200) = (series.gap[100], series.gap[200]);
        let noise = 6.0 * (series.stderr[100] + series.stderr[200]);
        assert!(g200 > 0.0);
        assert!(
            g200 <= 2.6 * g100 + noise,
            "gap grew faster than linearly: {g100} -> {g200}"
        );
    }

    #[test]
    fn chaos_slope_smoke() {
        // Reduced-scale slope check; the full-scale band lives in the
        // acceptance suite.
        let drift = affine(0.1, 0.2, 0.3);
        let mu0 = uniform_law();
        let result =
            chaos_rate_experiment(&[16, 64, 256], 0.5, &drift, &mu0, 30, 500, 4000).unwrap();
        assert!(
            result.points.windows(2).all(|w| w[1].w1 < w[0].w1),
            "W1 not decreasing: {:?}",
            result.points
        );
        assert!(
            (-0.7..=-0.3).contains(&result.slope),
            "slope {} outside loose band",
            result.slope
        );
        // Infinite-host surrogate: the reference law against itself.
        let flow = law_flow(&mu0, 0.5, &drift, 30).unwrap();
        assert_eq!(flow.last().w1(flow.last()).unwrap(), 0.0);
    }

    #[test]
    fn chaos_experiment_rejects_bad_inputs() {
        let mu0 = uniform_law();
        let drift = affine(0.1, 0.2, 0.3);
        assert!(chaos_rate_experiment(&[16], 0.5, &drift, &mu0, 5, 100, 1).is_err());
        assert!(chaos_rate_experiment(&[16, 0], 0.5, &drift, &mu0, 5, 100, 1).is_err());
        assert!(chaos_rate_experiment(&[16, 64], 0.5, &drift, &mu0, 5, 1, 1).is_err());
        let critical = affine(0.0, 0.5, 0.5);
        assert!(chaos_rate_experiment(&[16, 64], 0.5, &critical, &mu0, 5, 100, 1).is_err());
    }

    #[test]
    fn glivenko_cantelli_slope_for_iid_beta() {
        // Mean W1 between an M-sample empirical law and its Beta source
        // decays like 1/sqrt(M).
        let (a, b, reps) = (2.0, 3.0, 400u64);
        let grid = {
            let cells = DENSITY_GRID_DEFAULT;
            let h = 1.0 / cells as f64;
            let vals: Vec<f64> = (0..cells)
                .map(|i| stats::beta_pdf((i as f64 + 0.5) * h, a, b))
                .collect();
            let mut g = GridDensity::from_values(vals).unwrap();
            g.normalize().unwrap();
            g
        };
        let sampler = BetaSampler::new(a, b).unwrap();
        let sizes = [16u64, 64, 256, 1024];
        let mut means = Vec::new();
        for (lane, &m) in sizes.iter().enumerate() {
            let w1s = engine::parallel_collect(
                engine::lane_seed(4100, lane as u64),
                reps,
                |stream| {
                    let draws: Vec<f64> = (0..m).map(|_| sampler.sample(stream)).collect();
                    stats::w1_sample_vs_grid(&SampleVector::new(draws)?, &grid)
                },
            )
            .unwrap();
            means.push(w1s.iter().sum::<f64>() / reps as f64);
        }
        let slope =
            log_log_slope(&sizes.map(|m| m as f64), &means).unwrap();
        assert!(
            (-0.65..=-0.35).contains(&slope),
            "empirical-law W1 slope {slope}"
        );
    }

    #[test]
    fn scaling_params_validation() {
        assert!(ScalingParams::new(2, 10).is_err());
        assert!(ScalingParams::new(100, 0).is_err());
        let s = ScalingParams::new(300, 50).unwrap();
        assert!((s.delta() - 0.1).abs() < 1e-15);
        assert_eq!(s.generations(1.5).unwrap(), 450);
        assert_eq!(s.generations(0.0).unwrap(), 0);
        assert!(s.generations(-1.0).is_err());
        assert!(s.generations(f64::NAN).is_err());
    }

    fn mutation_selection_scaled(
        theta0: f64,
        theta1: f64,
        gamma: f64,
        big_n: u64,
    ) -> NonLinearDriftSpec {
        let scale = 2.0 / (3.0 * big_n as f64).sqrt();
        NonLinearDriftSpec::diffusion_scaled(
            move |x, law: &LawView| theta0 * (1.0 - x) - theta1 * x - gamma * (x - law.mean()),
            big_n,
            (1.0 - scale * (theta0 + theta1 + gamma)).abs(),
            scale * gamma,
        )
        .unwrap()
        .declare_law_mean_only()
        .unwrap()
    }

    #[test]
    fn scaled_run_time_zero_draws_from_initial_law() {
        let scaling = ScalingParams::new(200, 50).unwrap();
        let drift = mutation_selection_scaled(0.8, 0.6, 0.0, 200);
        let mu0 = uniform_law();
        let run = scaled_system_run(&scaling, &drift, &mu0, 0.0, 3000, 4200).unwrap();
        assert_eq!(run.generations, 0);
        let mut a = run.system.values().to_vec();
        let mut b = run.nonlinear.values().to_vec();
        let p = ks_two_sample_pvalue(&mut a, &mut b);
        assert!(p > 0.01, "KS p-value {p}");
        assert!((run.system.mean() - 0.5).abs() < 4.0 * run.system.stderr_of_mean() + 0.01);
    }

    #[test]
    fn scaled_runs_chaos_error_decays_in_scale() {
        // Both systems share the finite-sample W1 floor against the grid law;
        // the excess of the host system over the independent chain isolates
        // the finite-M error, which must shrink as N (and with it M = N)
        // grows. Checkpoints at quarter times keep the check uniform in time.
        let (theta0, theta1, gamma) = (0.8, 0.6, 3.0);
        let reps = 1200u64;
        let mu0 = GridDensity::uniform(1024).unwrap();
        let mut sup_excess = Vec::new();
        for (lane, &big_n) in [150u64, 300, 600].iter().enumerate() {
            let scaling = ScalingParams::new(big_n, big_n).unwrap();
            let drift = mutation_selection_scaled(theta0, theta1, gamma, big_n);
            let delta = scaling.delta();
            let gens = scaling.generations(1.0).unwrap();
            let checkpoints: Vec<u64> = (1..=4).map(|q| q * gens / 4).collect();
            let flow = law_flow(&mu0, delta, &drift, gens).unwrap();
            let flow_means = nonlinear::flow_means(&flow, &drift);
            let sampler = mu0.sampler().unwrap();
            let base = engine::lane_seed(4300, lane as u64);
            let cps = checkpoints.clone();
            let host_rows = engine::parallel_collect(engine::lane_seed(base, 0), reps, |stream| {
                let init: Vec<f64> = (0..big_n).map(|_| sampler.sample(stream)).collect();
                let mut state = HostSystemState::new(init)?;
                let mut row = Vec::with_capacity(cps.len());
                for gen in 1..=gens {
                    state = system_step(&state, delta, &drift, stream)?;
                    if cps.contains(&gen) {
                        row.push(state.frequencies[0]);
                    }
                }
                Ok(row)
            })
            .unwrap();
            let cps = checkpoints.clone();
            let means = flow_means.clone();
            let chain_rows = engine::parallel_collect(engine::lane_seed(base, 1), reps, |stream| {
                let mut z = sampler.sample(stream);
                let mut row = Vec::with_capacity(cps.len());
                for k in 0..gens {
                    let p = drift.eval(z, &nonlinear::flow_view(&flow, means.as_deref(), k))?;
                    let (u, v) = stream.uniform_pair();
                    z = kernel::update_sup(p, delta, z, u, v)?;
                    if cps.contains(&(k + 1)) {
                        row.push(z);
                    }
                }
                Ok(row)
            })
            .unwrap();
            let mut worst = f64::MIN;
            for (ci, &gen) in checkpoints.iter().enumerate() {
                let reference = flow.density(gen);
                let host: Vec<f64> = host_rows.iter().map(|r| r[ci]).collect();
                let chain: Vec<f64> = chain_rows.iter().map(|r| r[ci]).collect();
                let w_host =
                    stats::w1_sample_vs_grid(&SampleVector::new(host).unwrap(), reference)
                        .unwrap();
                let w_chain =
                    stats::w1_sample_vs_grid(&SampleVector::new(chain).unwrap(), reference)
                        .unwrap();
                worst = worst.max(w_host - w_chain);
            }
            sup_excess.push(worst);
        }
        let (e150, e300, e600) = (sup_excess[0], sup_excess[1], sup_excess[2]);
        assert!(e150 > 0.004, "finite-M signal too small to test: {sup_excess:?}");
        assert!(e300 <= e150 + 0.006, "excess rose 150 -> 300: {sup_excess:?}");
        assert!(e600 <= e300 + 0.006, "excess rose 300 -> 600: {sup_excess:?}");
        assert!(e600 < e150, "no overall decay: {sup_excess:?}");
    }

    #[test]
    fn scaled_run_rejects_bad_inputs() {
        let scaling = ScalingParams::new(200, 50).unwrap();
        let drift = mutation_selection_scaled(0.8, 0.6, 0.0, 200);
        let mu0 = uniform_law();
        assert!(scaled_system_run(&scaling, &drift, &mu0, 1.0, 0, 1).is_err());
        assert!(scaled_system_run(&scaling, &drift, &mu0, -0.5, 100, 1).is_err());
    }

    #[test]
    fn mean_only_declaration_rejects_shape_readers() {
        // A drift that reads more of the law than its mean must fail the
        // declaration probe.
        let spec = NonLinearDriftSpec::general(
            |_x, law: &LawView| match law {
                LawView::Empirical(values) if values.len() > 1 => 0.9,
                _ => 0.1,
            },
            0.0,
            1.0,
        )
        .unwrap();
        assert!(spec.declare_law_mean_only().is_err());
        let ok = NonLinearDriftSpec::general(|_x, law: &LawView| 0.2 + 0.5 * law.mean(), 0.0, 0.5)
            .unwrap();
        assert!(!ok.law_mean_only());
        assert!(ok.declare_law_mean_only().unwrap().law_mean_only());
    }
}
