//! One-level forward chains: drift specifications, chain simulation, the
//! standard coupling between two chains, heterozygosity decay, and fixation
//! estimation.
//!
//! A chain at replacement cap `delta` with drift `p` makes the transition
//! `Z_{n+1} = update_sup(p(Z_n), delta, Z_n, U, V)`, so the kernel parameter
//! is re-evaluated from the current state each generation.

use std::fmt;
use std::sync::Arc;

use crate::engine::{self, ReplicateStream};
use crate::kernel::{check_unit, coupled_step, update_sup};
use crate::{Error, Result};

/// Grid resolution of the construction-time range check on drifts.
pub const DRIFT_CHECK_GRID: usize = 10_000;
/// Default half-width of the fixation detection band around 0 and 1.
pub const FIXATION_EPS_DEFAULT: f64 = 1e-9;

type DriftFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A state-dependent replacement probability `x -> p(x)` mapping [0,1] into
/// [0,1].
///
/// Construction validates the range contract on a uniform grid of
/// [`DRIFT_CHECK_GRID`] points plus the endpoints; evaluation re-checks the
/// output, so a drift that escapes [0,1] between grid points still fails
/// loudly instead of corrupting a run.
#[derive(Clone)]
pub enum DriftSpec {
    /// `p(x) = x`: the neutral chain.
    Identity,
    /// `p(x) = x + (2 delta/3) (-x(1-x) sum_i sigma_i x^i + theta0 (1-x) - theta1 x)`:
    /// frequency-dependent selection favoring type 1, plus two-sided mutation.
    /// The coefficient vector is the already-truncated selection series.
    FittestTypeWins {
        sigma: Vec<f64>,
        theta0: f64,
        theta1: f64,
        delta: f64,
    },
    /// `p(x) = x + (2 / sqrt(3 N)) b(x)`: the diffusive rescaling of a drift
    /// function `b` with `b(0) >= 0` and `b(1) <= 0`.
    DiffusionScaled { b: DriftFn, big_n: u64 },
    /// Piecewise-linear interpolation of values at uniformly spaced nodes on
    /// [0,1], endpoints included.
    Tabulated { values: Vec<f64> },
}

impl fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriftSpec::Identity => write!(f, "Identity"),
            DriftSpec::FittestTypeWins {
                sigma,
                theta0,
                theta1,
                delta,
            } => f
                .debug_struct("FittestTypeWins")
                .field("sigma", sigma)
                .field("theta0", theta0)
                .field("theta1", theta1)
                .field("delta", delta)
                .finish(),
            DriftSpec::DiffusionScaled { big_n, .. } => {
                f.debug_struct("DiffusionScaled").field("big_n", big_n).finish()
            }
            DriftSpec::Tabulated { values } => f
                .debug_struct("Tabulated")
                .field("nodes", &values.len())
                .finish(),
        }
    }
}

impl DriftSpec {
    pub fn identity() -> Self {
        DriftSpec::Identity
    }

    /// Fittest-type-wins drift with mutation. Requires every coefficient
    /// positive and non-increasing and `(2 delta/3)(sigma_0 + theta0 + theta1) < 1`;
    /// an empty `sigma` gives the mutation-only drift.
    pub fn fittest_type_wins(sigma: Vec<f64>, theta0: f64, theta1: f64, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::invalid(format!("delta = {delta} outside (0, 1]")));
        }
        for (name, v) in [("theta0", theta0), ("theta1", theta1)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("{name} = {v} must be nonnegative")));
            }
        }
        for (i, &s) in sigma.iter().enumerate() {
            if !s.is_finite() || s <= 0.0 {
                return Err(Error::invalid(format!("sigma[{i}] = {s} must be positive")));
            }
            if i > 0 && s > sigma[i - 1] {
                return Err(Error::invalid(format!(
                    "sigma must be non-increasing, sigma[{i}] = {s} exceeds sigma[{}] = {}",
                    i - 1,
                    sigma[i - 1]
                )));
            }
        }
        let sigma0 = sigma.first().copied().unwrap_or(0.0);
        let load = 2.0 * delta / 3.0 * (sigma0 + theta0 + theta1);
        if load >= 1.0 {
            return Err(Error::invalid(format!(
                "(2 delta/3)(sigma0 + theta0 + theta1) = {load} must be < 1"
            )));
        }
        let spec = DriftSpec::FittestTypeWins {
            sigma,
            theta0,
            theta1,
            delta,
        };
        spec.check_range_on_grid()?;
        Ok(spec)
    }

    /// Diffusive rescaling of `b`, the drift of the limiting diffusion.
    /// `b` must be Lipschitz with `b(0) >= 0` and `b(1) <= 0`; `big_n` must be
    /// large enough that `x + (2/sqrt(3 big_n)) b(x)` stays in [0,1], which
    /// the grid check verifies.
    pub fn diffusion_scaled<F>(b: F, big_n: u64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if big_n < 3 {
            return Err(Error::invalid(format!(
                "big_n = {big_n} too small; the step scale sqrt(3/big_n) must be <= 1"
            )));
        }
        let b0 = b(0.0);
        let b1 = b(1.0);
        if !(b0 >= 0.0) {
            return Err(Error::invalid(format!("b(0) = {b0} must be nonnegative")));
        }
        if !(b1 <= 0.0) {
            return Err(Error::invalid(format!("b(1) = {b1} must be nonpositive")));
        }
        let spec = DriftSpec::DiffusionScaled {
            b: Arc::new(b),
            big_n,
        };
        spec.check_range_on_grid()?;
        Ok(spec)
    }

    /// Piecewise-linear drift through `values` at uniform nodes.
    pub fn tabulated(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid("tabulated drift needs at least two nodes"));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("tabulated value [{i}] = {v} outside [0, 1]")));
            }
        }
        Ok(DriftSpec::Tabulated { values })
    }

    /// Kernel scale `delta_N = sqrt(3 / N)` under which a diffusion-scaled
    /// drift approximates its diffusion.
    pub fn diffusion_delta(big_n: u64) -> f64 {
        (3.0 / big_n as f64).sqrt()
    }

    fn eval_raw(&self, x: f64) -> f64 {
        match self {
            DriftSpec::Identity => x,
            DriftSpec::FittestTypeWins {
                sigma,
                theta0,
                theta1,
                delta,
            } => {
                let mut series = 0.0;
                for &s in sigma.iter().rev() {
                    series = series * x + s;
                }
                let delta0 = 2.0 * delta / 3.0;
                x + delta0 * (-x * (1.0 - x) * series + theta0 * (1.0 - x) - theta1 * x)
            }
            DriftSpec::DiffusionScaled { b, big_n } => {
                x + 2.0 / (3.0 * *big_n as f64).sqrt() * b(x)
            }
            DriftSpec::Tabulated { values } => {
                let segments = values.len() - 1;
                let t = x * segments as f64;
                let i = (t as usize).min(segments - 1);
                let frac = t - i as f64;
                values[i] * (1.0 - frac) + values[i + 1] * frac
            }
        }
    }

    /// Drift value at `x`, with the range contract enforced.
    pub fn eval(&self, x: f64) -> Result<f64> {
        check_unit(x, "x")?;
        let v = self.eval_raw(x);
        if !v.is_finite() || !(0.0..=1.0).contains(&v) {
            return Err(Error::ContractViolation(format!(
                "drift value {v} at x = {x} outside [0, 1]"
            )));
        }
        Ok(v)
    }

    fn check_range_on_grid(&self) -> Result<()> {
        for i in 0..=DRIFT_CHECK_GRID {
            let x = i as f64 / DRIFT_CHECK_GRID as f64;
            self.eval(x)?;
        }
        Ok(())
    }
}

/// A simulated trajectory: `values[n]` is the state at generation `n`.
#[derive(Debug, Clone)]
pub struct ChainPath {
    pub delta: f64,
    pub values: Vec<f64>,
}

impl ChainPath {
    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("non-empty path")
    }

    pub fn generations(&self) -> u64 {
        self.values.len() as u64 - 1
    }
}

/// One forward transition from `x`. Consumes two uniforms.
pub fn chain_step(delta: f64, drift: &DriftSpec, x: f64, stream: &mut ReplicateStream) -> Result<f64> {
    let q = drift.eval(x)?;
    let (u, v) = stream.uniform_pair();
    update_sup(q, delta, x, u, v)
}

/// Simulates `n` generations from `z0`; the path has `n + 1` entries.
pub fn simulate_chain(
    delta: f64,
    drift: &DriftSpec,
    z0: f64,
    n: u64,
    stream: &mut ReplicateStream,
) -> Result<ChainPath> {
    check_unit(z0, "z0")?;
    let mut values = Vec::with_capacity(n as usize + 1);
    let mut z = z0;
    values.push(z);
    for _ in 0..n {
        z = chain_step(delta, drift, z, stream)?;
        values.push(z);
    }
    Ok(ChainPath {
        delta,
        values,
    })
}

/// Runs two chains under the standard coupling: each generation evaluates
/// each drift at its own chain's state and feeds both parameters to one
/// coupled kernel transition sharing all three uniforms.
pub fn coupled_chains(
    delta: f64,
    drift_p: &DriftSpec,
    drift_q: &DriftSpec,
    x0: f64,
    y0: f64,
    n: u64,
    stream: &mut ReplicateStream,
) -> Result<(ChainPath, ChainPath)> {
    check_unit(x0, "x0")?;
    check_unit(y0, "y0")?;
    let mut xs = Vec::with_capacity(n as usize + 1);
    let mut ys = Vec::with_capacity(n as usize + 1);
    let (mut x, mut y) = (x0, y0);
    xs.push(x);
    ys.push(y);
    for _ in 0..n {
        let p = drift_p.eval(x)?;
        let q = drift_q.eval(y)?;
        let (xn, yn) = coupled_step(x, y, p, q, delta, stream)?;
        x = xn;
        y = yn;
        xs.push(x);
        ys.push(y);
    }
    Ok((
        ChainPath {
            delta,
            values: xs,
        },
        ChainPath {
            delta,
            values: ys,
        },
    ))
}

/// Fractions of replicates absorbed near 0, near 1, or still undecided at the
/// horizon.
#[derive(Debug, Clone, Copy)]
pub struct FixationEstimate {
    pub p_fix0: f64,
    pub p_fix1: f64,
    pub p_undecided: f64,
    pub reps: u64,
}

impl FixationEstimate {
    pub fn stderr_fix0(&self) -> f64 {
        binomial_stderr(self.p_fix0, self.reps)
    }

    pub fn stderr_fix1(&self) -> f64 {
        binomial_stderr(self.p_fix1, self.reps)
    }
}

fn binomial_stderr(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Estimates fixation probabilities by running `reps` independent chains for
/// `horizon` generations and classifying terminals below `eps`, above
/// `1 - eps`, or neither. The undecided fraction is reported, never folded
/// into either fixation estimate.
///
/// Meaningful when the drift fixes the boundaries (`p(x) = 0` iff `x = 0`,
/// `p(x) = 1` iff `x = 1`) and the chain has an almost-sure limit.
pub fn fixation_estimate(
    delta: f64,
    drift: &DriftSpec,
    z0: f64,
    horizon: u64,
    eps: f64,
    reps: u64,
    master_seed: u64,
) -> Result<FixationEstimate> {
    check_unit(z0, "z0")?;
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::invalid(format!("eps = {eps} outside (0, 0.5)")));
    }
    if reps == 0 {
        return Err(Error::invalid("fixation estimate needs reps >= 1"));
    }
    let counts = engine::parallel_replicates(
        master_seed,
        reps,
        |stream: &mut ReplicateStream| {
            let mut z = z0;
            for _ in 0..horizon {
                z = chain_step(delta, drift, z, stream)?;
            }
            Ok(if z < eps {
                (1u64, 0u64, 0u64)
            } else if z > 1.0 - eps {
                (0, 1, 0)
            } else {
                (0, 0, 1)
            })
        },
        (0u64, 0u64, 0u64),
        |acc, c| (acc.0 + c.0, acc.1 + c.1, acc.2 + c.2),
    )?;
    let r = reps as f64;
    Ok(FixationEstimate {
        p_fix0: counts.0 as f64 / r,
        p_fix1: counts.1 as f64 / r,
        p_undecided: counts.2 as f64 / r,
        reps,
    })
}

/// Mean heterozygosity `E[Z_n (1 - Z_n)]` of the neutral chain per
/// generation, with Monte Carlo standard errors.
#[derive(Debug, Clone, Copy)]
pub struct HeterozygosityPoint {
    pub n: u64,
    pub mean: f64,
    pub stderr: f64,
}

/// Profiles neutral-chain heterozygosity over generations `0..=n_max`.
///
/// The per-generation mean decays geometrically with factor `1 - delta^2/3`.
pub fn heterozygosity_profile(
    delta: f64,
    z0: f64,
    n_max: u64,
    reps: u64,
    master_seed: u64,
) -> Result<Vec<HeterozygosityPoint>> {
    check_unit(delta, "delta")?;
    check_unit(z0, "z0")?;
    if reps == 0 {
        return Err(Error::invalid("heterozygosity profile needs reps >= 1"));
    }
    let len = n_max as usize + 1;
    let drift = DriftSpec::identity();
    let (sum, sum_sq) = engine::parallel_replicates(
        master_seed,
        reps,
        |stream: &mut ReplicateStream| {
            let mut hs = Vec::with_capacity(len);
            let mut z = z0;
            hs.push(z * (1.0 - z));
            for _ in 0..n_max {
                z = chain_step(delta, &drift, z, stream)?;
                hs.push(z * (1.0 - z));
            }
            Ok(hs)
        },
        (vec![0.0_f64; len], vec![0.0_f64; len]),
        |(mut s, mut s2), hs| {
            for (i, h) in hs.into_iter().enumerate() {
                s[i] += h;
                s2[i] += h * h;
            }
            (s, s2)
        },
    )?;
    let r = reps as f64;
    Ok((0..len)
        .map(|i| {
            let mean = sum[i] / r;
            let var = (sum_sq[i] / r - mean * mean).max(0.0) * r / (r - 1.0).max(1.0);
            HeterozygosityPoint {
                n: i as u64,
                mean,
                stderr: (var / r).sqrt(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::derive_stream;
    use crate::stats;

    #[test]
    fn boundaries_absorb_under_identity_drift() {
        let drift = DriftSpec::identity();
        let mut stream = derive_stream(20, 0);
        let path0 = simulate_chain(0.7, &drift, 0.0, 200, &mut stream).unwrap();
        assert!(path0.values.iter().all(|&z| z == 0.0));
        let path1 = simulate_chain(0.7, &drift, 1.0, 200, &mut stream).unwrap();
        assert!(path1.values.iter().all(|&z| z == 1.0));
    }

    #[test]
    fn neutral_one_step_mean_is_current_state() {
        let drift = DriftSpec::identity();
        let mut stream = derive_stream(21, 0);
        let x = 0.37;
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| chain_step(0.8, &drift, x, &mut stream).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let se = stats::mc_stderr(&draws).unwrap();
        assert!((mean - x).abs() < 3.0 * se, "mean {mean}, stderr {se}");
    }

    #[test]
    fn selection_without_mutation_is_supermartingale_step() {
        let drift = DriftSpec::fittest_type_wins(vec![0.4], 0.0, 0.0, 0.5).unwrap();
        let mut stream = derive_stream(22, 0);
        let x = 0.5;
        let n = 1_000_000;
        let mean = (0..n)
            .map(|_| chain_step(0.5, &drift, x, &mut stream).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!(mean <= x, "mean {mean} should not exceed {x}");
    }

    #[test]
    fn zero_generation_path_is_initial_state() {
        let drift = DriftSpec::identity();
        let mut stream = derive_stream(23, 0);
        let path = simulate_chain(0.5, &drift, 0.42, 0, &mut stream).unwrap();
        assert_eq!(path.values, vec![0.42]);
        assert_eq!(path.generations(), 0);
    }

    #[test]
    fn neutral_fixation_frequency_matches_initial_mean() {
        // P(fix at 1) = z0; 10^4 replicates of 200 generations at delta = 1.
        let est = fixation_estimate(1.0, &DriftSpec::identity(), 0.5, 200, 1e-6, 10_000, 24).unwrap();
        assert!(
            (est.p_fix1 - 0.5).abs() < 3.0 * est.stderr_fix1() + 3.0 * binomial_stderr(est.p_undecided, est.reps),
            "p_fix1 {}",
            est.p_fix1
        );
        assert!(est.p_undecided < 0.05, "undecided {}", est.p_undecided);
    }

    #[test]
    fn heterozygosity_decays_geometrically() {
        // E[H_n] = H_0 (1 - delta^2/3)^n; at delta=0.6, z0=0.5, n=10:
        // 0.25 * 0.88^10.
        let profile = heterozygosity_profile(0.6, 0.5, 10, 100_000, 25).unwrap();
        let expect = 0.25 * 0.88_f64.powi(10);
        let p10 = profile[10];
        assert!(
            (p10.mean - expect).abs() < 3.0 * p10.stderr,
            "mean {} expect {expect} stderr {}",
            p10.mean,
            p10.stderr
        );
        assert_eq!(profile[0].mean, 0.25);
        assert_eq!(profile[0].stderr, 0.0);
    }

    #[test]
    fn coupled_chains_coincide_for_equal_specs() {
        let drift = DriftSpec::identity();
        let mut stream = derive_stream(26, 0);
        let (a, b) = coupled_chains(0.6, &drift, &drift, 0.3, 0.3, 100, &mut stream).unwrap();
        assert_eq!(a.values, b.values);
    }

    fn clamped_shift_drift() -> DriftSpec {
        // q(x) = min(x + 0.1, 1), represented exactly: piecewise linear with
        // the knot at a grid node.
        let n = DRIFT_CHECK_GRID;
        let values: Vec<f64> = (0..=n)
            .map(|i| (i as f64 / n as f64 + 0.1).min(1.0))
            .collect();
        DriftSpec::tabulated(values).unwrap()
    }

    #[test]
    fn dominating_drift_preserves_pathwise_order() {
        let p = DriftSpec::identity();
        let q = clamped_shift_drift();
        for rep in 0..100 {
            let mut stream = derive_stream(27, rep);
            let (a, b) = coupled_chains(0.5, &p, &q, 0.3, 0.3, 50, &mut stream).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!(x <= y, "rep {rep}: {x} > {y}");
            }
        }
    }

    #[test]
    fn coupled_gap_satisfies_one_step_recursion() {
        // Under pathwise ordering the one-step bound
        //   E gap_{n+1} = (1 - delta/2) E gap_n + (delta/2) E|p(X_n) - q(Y_n)|
        // holds with equality; check it two-sided at each generation with
        // sampled inputs.
        let delta = 0.5;
        let p = DriftSpec::identity();
        let q = clamped_shift_drift();
        let reps = 10_000usize;
        let n_gen = 30usize;
        let mut gap_sum = vec![0.0; n_gen + 1];
        let mut resid_sum = vec![0.0; n_gen];
        let mut resid_sq = vec![0.0; n_gen];
        for rep in 0..reps {
            let mut stream = derive_stream(28, rep as u64);
            let (a, b) = coupled_chains(delta, &p, &q, 0.5, 0.5, n_gen as u64, &mut stream).unwrap();
            for n in 0..=n_gen {
                let gap = (b.values[n] - a.values[n]).abs();
                gap_sum[n] += gap;
                if n < n_gen {
                    let d = (p.eval(a.values[n]).unwrap() - q.eval(b.values[n]).unwrap()).abs();
                    let next_gap = (b.values[n + 1] - a.values[n + 1]).abs();
                    let resid = next_gap - (1.0 - delta / 2.0) * gap - delta / 2.0 * d;
                    resid_sum[n] += resid;
                    resid_sq[n] += resid * resid;
                }
            }
        }
        for n in 0..n_gen {
            let mean = resid_sum[n] / reps as f64;
            let var = (resid_sq[n] / reps as f64 - mean * mean).max(0.0);
            let se = (var / reps as f64).sqrt();
            assert!(
                mean.abs() <= 4.0 * se + 1e-12,
                "generation {n}: residual {mean}, stderr {se}"
            );
        }
        // The gap grows well past the naive sup-difference level 0.1: the
        // upper chain fixes at 1 while the neutral one splits.
        assert!(gap_sum[n_gen] / reps as f64 > 0.15);
    }

    #[test]
    fn fixation_from_boundary_is_certain() {
        let est = fixation_estimate(0.8, &DriftSpec::identity(), 1.0, 10, 1e-9, 100, 29).unwrap();
        assert_eq!(est.p_fix1, 1.0);
        assert_eq!(est.p_fix0, 0.0);
        assert_eq!(est.p_undecided, 0.0);
    }

    #[test]
    fn selection_raises_extinction_probability() {
        // P(extinction) >= 1 - z0 for pure selection favoring type 1.
        let drift = DriftSpec::fittest_type_wins(vec![0.5, 0.25], 0.0, 0.0, 1.0).unwrap();
        let z0 = 0.4;
        let est = fixation_estimate(1.0, &drift, z0, 400, 1e-9, 10_000, 30).unwrap();
        assert!(
            est.p_fix0 >= 1.0 - z0 - 3.0 * est.stderr_fix0(),
            "p_fix0 {}",
            est.p_fix0
        );
    }

    #[test]
    fn drift_constructors_validate_contracts() {
        assert!(DriftSpec::fittest_type_wins(vec![0.4, 0.5], 0.0, 0.0, 0.5).is_err());
        assert!(DriftSpec::fittest_type_wins(vec![2.0], 0.0, 0.0, 1.0).is_err());
        assert!(DriftSpec::fittest_type_wins(vec![0.4], 0.9, 0.9, 1.0).is_err());
        assert!(DriftSpec::fittest_type_wins(vec![0.4], 0.1, 0.1, 0.5).is_ok());
        assert!(DriftSpec::tabulated(vec![0.5]).is_err());
        assert!(DriftSpec::tabulated(vec![0.5, 1.2]).is_err());
        // b(0) < 0 violates the boundary contract.
        assert!(DriftSpec::diffusion_scaled(|_| -1.0, 100).is_err());
        // Valid logistic-type drift.
        assert!(DriftSpec::diffusion_scaled(|x| 0.3 * (1.0 - x) - 0.2 * x, 100).is_ok());
        // Drift escaping [0,1] inside the interval is caught by the grid check.
        assert!(DriftSpec::diffusion_scaled(|x| 40.0 * (0.5 - (x - 0.5).abs()), 100).is_err());
    }

    #[test]
    fn fittest_type_wins_matches_series_form() {
        // Cross-check the Horner evaluation against the generating-function
        // form sigma0 x (phi(x) - 1) of the selective term.
        let sigma = vec![0.5, 0.3, 0.3, 0.1];
        let (theta0, theta1, delta) = (0.2, 0.1, 0.6);
        let drift = DriftSpec::fittest_type_wins(sigma.clone(), theta0, theta1, delta).unwrap();
        let sigma0 = sigma[0];
        let mut rho: Vec<f64> = Vec::new();
        for i in 0..sigma.len() {
            let next = sigma.get(i + 1).copied().unwrap_or(0.0);
            rho.push((sigma[i] - next) / sigma0);
        }
        for &x in &[0.0_f64, 0.2, 0.5, 0.9, 1.0] {
            let phi: f64 = rho
                .iter()
                .enumerate()
                .map(|(i, r)| r * x.powi(i as i32 + 1))
                .sum();
            let delta0 = 2.0 * delta / 3.0;
            let expect =
                x + delta0 * (sigma0 * x * (phi - 1.0) + theta0 * (1.0 - x) - theta1 * x);
            let got = drift.eval(x).unwrap();
            assert!((got - expect).abs() < 1e-14, "x={x}: {got} vs {expect}");
        }
    }

    #[test]
    fn tabulated_drift_interpolates_linearly() {
        let drift = DriftSpec::tabulated(vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(drift.eval(0.0).unwrap(), 0.0);
        assert_eq!(drift.eval(1.0).unwrap(), 1.0);
        assert!((drift.eval(0.25).unwrap() - 0.25).abs() < 1e-15);
        let step = DriftSpec::tabulated(vec![0.2, 0.8]).unwrap();
        assert!((step.eval(0.5).unwrap() - 0.5).abs() < 1e-15);
    }
}
