//! One function per subcommand: runs the experiment with resolved
//! parameters, returns the CSV artifacts, a JSON result block, and the
//! pass/fail checks.

use std::sync::atomic::Ordering;

use anyhow::{bail, Result};
use serde::Serialize;
use serde_json::json;

use wf_core::chains;
use wf_core::diffusion::{self, CaseStudyParams, SDEParams, X0Law};
use wf_core::duals::{self, FtwDualParams};
use wf_core::engine::{self, lane_seed};
use wf_core::kernel::{self, GridDensity, KernelParams};
use wf_core::meanfield;
use wf_core::nonlinear::{self, NonLinearDriftSpec};
use wf_core::report::{self, DualityRow};
use wf_core::stats::{self, BetaSampler, SampleVector};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
}

pub struct RunOutput {
    pub files: Vec<(&'static str, String)>,
    pub results: serde_json::Value,
    pub checks: Vec<Check>,
}

impl RunOutput {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn sample_raw_moments(sv: &SampleVector, k_max: u32) -> Vec<f64> {
    stats::moments_empirical(sv.values(), k_max).expect("non-empty sample")
}

/// Long-run kernel sample started at the stationary mean.
fn kernel_long_run(params: KernelParams, burn_in: u64, reps: u64, seed: u64) -> Result<SampleVector> {
    let terminal = engine::parallel_collect(seed, reps, |stream| {
        let mut x = params.p;
        for _ in 0..burn_in {
            x = kernel::kernel_step(params, x, stream)?;
        }
        Ok(x)
    })?;
    Ok(SampleVector::new(terminal)?)
}

pub struct KernelInvariantArgs {
    pub delta: f64,
    pub p: f64,
    pub burn_in: u64,
    pub reps: u64,
    pub seed: u64,
}

pub fn kernel_invariant(a: KernelInvariantArgs) -> Result<RunOutput> {
    let params = KernelParams::new(a.delta, a.p)?;
    let sv = kernel_long_run(params, a.burn_in, a.reps, a.seed)?;
    let moments = sample_raw_moments(&sv, 4);
    let var = moments[1] - moments[0] * moments[0];
    let target_var = kernel::invariant_variance(a.delta, a.p);
    let mean_z = (sv.mean() - a.p).abs() / sv.stderr_of_mean();
    let var_rel = (var - target_var).abs() / target_var;
    let checks = vec![
        Check { name: "mean_within_3_stderr", pass: mean_z <= 3.0 },
        Check { name: "variance_within_5_percent", pass: var_rel <= 0.05 },
    ];
    Ok(RunOutput {
        files: vec![
            ("histogram.csv", report::histogram_csv(&sv, report::HISTOGRAM_BINS)?),
            ("moments.csv", report::moments_csv(&moments)),
        ],
        results: json!({
            "mean": sv.mean(),
            "mean_stderr": sv.stderr_of_mean(),
            "mean_target": a.p,
            "variance": var,
            "variance_target": target_var,
        }),
        checks,
    })
}

pub struct DensitySolveArgs {
    pub delta: f64,
    pub p: f64,
    pub grid: u64,
    pub tol: f64,
    pub max_iter: u64,
}

pub fn density_solve(a: DensitySolveArgs) -> Result<RunOutput> {
    let solve = kernel::invariant_density(a.delta, a.p, a.grid as usize, a.tol, a.max_iter)?;
    let exact = kernel::invariant_moments(a.delta, a.p, 4)?;
    let grid_moments: Vec<f64> = (1..=4).map(|k| solve.density.moment(k)).collect();
    let worst = grid_moments
        .iter()
        .zip(exact.moments.iter().skip(1))
        .map(|(g, e)| (g - e).abs())
        .fold(0.0f64, f64::max);
    let checks = vec![
        Check { name: "moments_match_recursion", pass: worst <= 1e-3 },
        Check { name: "residual_below_tolerance", pass: solve.residual <= a.tol },
    ];
    Ok(RunOutput {
        files: vec![
            ("density.csv", report::density_csv(&solve.density)),
            ("moments.csv", report::moments_csv(&grid_moments)),
        ],
        results: json!({
            "iterations": solve.iterations,
            "residual": solve.residual,
            "grid_moments": grid_moments,
            "exact_moments": exact.moments[1..].to_vec(),
            "worst_moment_error": worst,
        }),
        checks,
    })
}

pub struct DualityNeutralArgs {
    pub z: f64,
    pub m: u64,
    pub n: u64,
    pub delta: f64,
    pub reps: u64,
    pub seed: u64,
}

pub fn duality_neutral(a: DualityNeutralArgs) -> Result<RunOutput> {
    if a.m > u32::MAX as u64 {
        bail!("m = {} is out of range", a.m);
    }
    let c = duals::duality_check_neutral(a.z, a.m as u32, a.n, a.delta, a.reps, a.seed)?;
    let pass = (c.lhs - c.rhs).abs() <= 3.0 * c.stderr;
    let row = DualityRow {
        z: a.z,
        m: a.m,
        n: a.n,
        lhs: c.lhs,
        rhs: c.rhs,
        stderr: c.stderr,
        pass,
    };
    Ok(RunOutput {
        files: vec![("duality.csv", report::duality_csv(&[row]))],
        results: json!({
            "lhs": c.lhs,
            "rhs": c.rhs,
            "stderr": c.stderr,
        }),
        checks: vec![Check { name: "agree_within_3_stderr", pass }],
    })
}

pub struct DualityFtwArgs {
    pub z: f64,
    pub m: u64,
    pub n: u64,
    pub delta: f64,
    pub theta0: f64,
    pub theta1: f64,
    pub sigma: Vec<f64>,
    pub reps: u64,
    pub seed: u64,
}

pub fn duality_ftw(a: DualityFtwArgs) -> Result<RunOutput> {
    let params = FtwDualParams::new(a.delta, a.theta0, a.theta1, a.sigma)?;
    let c = duals::duality_check_ftw(a.z, a.m, a.n, &params, a.reps, a.seed)?;
    let stderr = (c.stderr_lhs * c.stderr_lhs + c.stderr_rhs * c.stderr_rhs).sqrt();
    let pass = (c.lhs - c.rhs).abs() <= 3.0 * stderr;
    let row = DualityRow {
        z: a.z,
        m: a.m,
        n: a.n,
        lhs: c.lhs,
        rhs: c.rhs,
        stderr,
        pass,
    };
    Ok(RunOutput {
        files: vec![("duality.csv", report::duality_csv(&[row]))],
        results: json!({
            "lhs": c.lhs,
            "rhs": c.rhs,
            "stderr_lhs": c.stderr_lhs,
            "stderr_rhs": c.stderr_rhs,
        }),
        checks: vec![Check { name: "agree_within_3_stderr", pass }],
    })
}

pub struct AbsorptionArgs {
    pub delta: f64,
    pub theta0: f64,
    pub theta1: f64,
    pub m_max: u64,
    pub tol: f64,
}

pub fn absorption(a: AbsorptionArgs) -> Result<RunOutput> {
    if a.m_max < 1 {
        bail!("m_max must be at least 1");
    }
    let mut rows = Vec::new();
    let mut ratios = Vec::new();
    let mut limits = Vec::new();
    let mut worst = 0.0f64;
    let mut h_prev = 1.0;
    for m in 1..=a.m_max {
        let h = duals::absorption_prob_exact(m, a.delta, a.theta0, a.theta1)?;
        rows.push((m, a.delta, h));
        let ratio = h / h_prev;
        let limit = (m as f64 - 1.0 + 2.0 * a.theta0)
            / (m as f64 - 1.0 + 2.0 * (a.theta0 + a.theta1));
        worst = worst.max((ratio - limit).abs());
        ratios.push(ratio);
        limits.push(limit);
        h_prev = h;
    }
    Ok(RunOutput {
        files: vec![("absorption.csv", report::absorption_csv(&rows))],
        results: json!({
            "h": rows.iter().map(|r| r.2).collect::<Vec<_>>(),
            "ratios": ratios,
            "small_scale_limits": limits,
            "worst_ratio_error": worst,
        }),
        checks: vec![Check { name: "ratios_near_small_scale_limit", pass: worst <= a.tol }],
    })
}

pub struct HeterozygosityArgs {
    pub delta: f64,
    pub z0: f64,
    pub n_max: u64,
    pub reps: u64,
    pub seed: u64,
}

/// Weighted least squares of ln(mean) on n; the weight (mean/stderr)^2 is
/// the inverse variance of the log estimate.
fn log_slope_weighted(points: &[chains::HeterozygosityPoint]) -> Result<f64> {
    let pts: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|h| h.mean > 0.0 && h.stderr > 0.0)
        .map(|h| (h.n as f64, h.mean.ln(), (h.mean / h.stderr).powi(2)))
        .collect();
    if pts.len() < 2 {
        bail!("log-slope fit needs at least two generations with positive error bars");
    }
    let wsum: f64 = pts.iter().map(|p| p.2).sum();
    let xbar = pts.iter().map(|p| p.0 * p.2).sum::<f64>() / wsum;
    let ybar = pts.iter().map(|p| p.1 * p.2).sum::<f64>() / wsum;
    let num: f64 = pts.iter().map(|p| p.2 * (p.0 - xbar) * (p.1 - ybar)).sum();
    let den: f64 = pts.iter().map(|p| p.2 * (p.0 - xbar) * (p.0 - xbar)).sum();
    Ok(num / den)
}

pub fn heterozygosity(a: HeterozygosityArgs) -> Result<RunOutput> {
    let prof = chains::heterozygosity_profile(a.delta, a.z0, a.n_max, a.reps, a.seed)?;
    let slope = log_slope_weighted(&prof[1..])?;
    let target = (1.0 - a.delta * a.delta / 3.0).ln();
    let rel = ((slope - target) / target).abs();
    Ok(RunOutput {
        files: vec![("heterozygosity.csv", report::heterozygosity_csv(&prof))],
        results: json!({
            "fitted_log_slope": slope,
            "target_log_slope": target,
            "relative_error": rel,
        }),
        checks: vec![Check { name: "decay_rate_within_2_percent", pass: rel <= 0.02 }],
    })
}

pub struct NonlinearErgodicityArgs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub delta: f64,
    pub n: u64,
    pub reps: u64,
    pub seed: u64,
}

pub fn nonlinear_ergodicity(a: NonlinearErgodicityArgs) -> Result<RunOutput> {
    if a.n < 4 {
        bail!("contraction fit needs at least 4 generations");
    }
    let drift = NonLinearDriftSpec::affine_in_mean(a.a, a.b, a.c)?;
    let uniform = GridDensity::uniform(kernel::DENSITY_GRID_DEFAULT)?;
    let (eta, _) = nonlinear::flow_to_fixed_point(&uniform, a.delta, &drift, 1e-10, 10_000)?;
    let target_mean = a.a / (1.0 - a.b - a.c);
    let mean_ok = (eta.mean() - target_mean).abs() <= 1e-4;

    let gaps =
        nonlinear::nonlinear_coupling(&drift, &drift, a.delta, &eta, &uniform, a.n, a.reps, a.seed)?;
    // Contraction fit over an interior window, skipping the transient head
    // and the noisy tail.
    let k0 = (a.n / 10).max(1) as usize;
    let k1 = a.n as usize - k0;
    let fitted = (gaps.gap[k1] / gaps.gap[k0]).powf(1.0 / (k1 - k0) as f64);
    let rate = 1.0 - a.delta * (1.0 - drift.l1() - drift.l2()) / 2.0;
    let rate_ok = fitted <= rate + 0.02;
    Ok(RunOutput {
        files: vec![
            ("gap.csv", report::gap_csv(&gaps)),
            ("fixed_point.csv", report::density_csv(&eta)),
        ],
        results: json!({
            "fixed_point_mean": eta.mean(),
            "fixed_point_mean_target": target_mean,
            "fitted_contraction": fitted,
            "contraction_rate_bound": rate,
        }),
        checks: vec![
            Check { name: "fixed_point_mean_within_1e-4", pass: mean_ok },
            Check { name: "gap_contracts_at_stated_rate", pass: rate_ok },
        ],
    })
}

pub struct PerturbationArgs {
    pub a: f64,
    pub b: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub n: u64,
    pub reps: u64,
    pub seed: u64,
}

pub fn perturbation(a: PerturbationArgs) -> Result<RunOutput> {
    let drift = NonLinearDriftSpec::epsilon_interpolated(a.a, a.b, a.epsilon)?;
    let target = nonlinear::perturbation_stats(a.a, a.b, a.epsilon, a.delta)?;
    let uniform = GridDensity::uniform(kernel::DENSITY_GRID_DEFAULT)?;
    let (eta, _) = nonlinear::flow_to_fixed_point(&uniform, a.delta, &drift, 1e-10, 10_000)?;
    let flow = nonlinear::law_flow(&eta, a.delta, &drift, a.n)?;
    let sv = nonlinear::endpoint_sample_against_flow(&flow, a.delta, &drift, a.reps, a.seed)?;
    let m = sample_raw_moments(&sv, 4);
    let var = m[1] - m[0] * m[0];
    let c4 = m[3] - 4.0 * m[0] * m[2] + 6.0 * m[0] * m[0] * m[1] - 3.0 * m[0].powi(4);
    let se = ((c4 - var * var).max(0.0) / a.reps as f64).sqrt();
    let pass = (var - target.variance).abs() <= 3.0 * se;
    Ok(RunOutput {
        files: vec![("histogram.csv", report::histogram_csv(&sv, report::HISTOGRAM_BINS)?)],
        results: json!({
            "mean": m[0],
            "variance": var,
            "variance_target": target.variance,
            "variance_stderr": se,
        }),
        checks: vec![Check { name: "variance_within_3_stderr", pass }],
    })
}

pub struct ChaosRateArgs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub delta: f64,
    pub hosts: Vec<u64>,
    pub n: u64,
    pub reps: u64,
    pub seed: u64,
}

pub fn chaos_rate(a: ChaosRateArgs) -> Result<RunOutput> {
    let drift = NonLinearDriftSpec::affine_in_mean(a.a, a.b, a.c)?;
    let mu0 = GridDensity::uniform(kernel::DENSITY_GRID_DEFAULT)?;
    let rate =
        meanfield::chaos_rate_experiment(&a.hosts, a.delta, &drift, &mu0, a.n, a.reps, a.seed)?;
    let pass = rate.slope >= -0.65 && rate.slope <= -0.35;
    Ok(RunOutput {
        files: vec![("chaos.csv", report::chaos_csv(&rate.points, a.n))],
        results: json!({
            "w1": rate.points.iter().map(|p| p.w1).collect::<Vec<_>>(),
            "slope": rate.slope,
        }),
        checks: vec![Check { name: "slope_in_half_order_band", pass }],
    })
}

pub struct ScalingLimitArgs {
    pub theta0: f64,
    pub theta1: f64,
    pub t: f64,
    pub dt: f64,
    pub scales: Vec<u64>,
    pub reps: u64,
    pub seed: u64,
}

pub fn scaling_limit(a: ScalingLimitArgs) -> Result<RunOutput> {
    let oracle = SDEParams::mutation(a.theta0, a.theta1, a.dt, a.t)?;
    let check = diffusion::scaling_limit_check(&a.scales, &oracle, &X0Law::Uniform, a.reps, a.seed)?;
    Ok(RunOutput {
        files: vec![("scaling.csv", report::scaling_csv(&check))],
        results: json!({
            "w1": check.points.iter().map(|p| p.w1).collect::<Vec<_>>(),
            "final_w1": check.last_w1(),
        }),
        checks: vec![
            Check { name: "w1_non_increasing", pass: check.non_increasing_within(2.0) },
            Check { name: "final_w1_below_0.02", pass: check.last_w1() <= 0.02 },
        ],
    })
}

pub struct CaseStudyArgs {
    pub theta0: f64,
    pub theta1: f64,
    pub gamma: f64,
    pub n: u64,
    pub t: f64,
    pub reps: u64,
    pub seed: u64,
}

pub fn case_study(a: CaseStudyArgs) -> Result<RunOutput> {
    let case = CaseStudyParams::new(a.theta0, a.theta1, a.gamma)?;
    let (drift, clamps) = case.scaled_chain_drift(a.n)?;
    let delta_n = (3.0 / a.n as f64).sqrt();
    let gens = (a.n as f64 * a.t).floor() as u64;
    let systems = a.reps.div_ceil(a.n);
    let mu0 = GridDensity::uniform(kernel::DENSITY_GRID_DEFAULT)?;
    let runs = engine::parallel_collect(a.seed, systems, |stream| {
        Ok(meanfield::system_run(a.n, delta_n, &drift, &mu0, gens, stream)?.frequencies)
    })?;
    // Coordinates inside one system share the empirical-mean feedback, so
    // the mean is judged with across-system spread.
    let k = systems as f64;
    let cluster_means: Vec<f64> = runs
        .iter()
        .map(|r| r.iter().sum::<f64>() / r.len() as f64)
        .collect();
    let grand = cluster_means.iter().sum::<f64>() / k;
    let se_mean = if systems > 1 {
        (cluster_means
            .iter()
            .map(|m| (m - grand) * (m - grand))
            .sum::<f64>()
            / (k - 1.0)
            / k)
            .sqrt()
    } else {
        f64::INFINITY
    };
    let pooled: Vec<f64> = runs.into_iter().flatten().take(a.reps as usize).collect();
    let sv = SampleVector::new(pooled)?;
    let inv = diffusion::case_study_invariant(&case);
    let w1 = stats::w1_beta_sample(&sv, inv.shape_alpha, inv.shape_beta, lane_seed(a.seed, u64::MAX))?;
    let mean_z = (grand - case.mean()).abs() / se_mean;
    Ok(RunOutput {
        files: vec![
            ("histogram.csv", report::histogram_csv(&sv, report::HISTOGRAM_BINS)?),
            (
                "beta_overlay.csv",
                report::beta_overlay_csv(inv.shape_alpha, inv.shape_beta, report::HISTOGRAM_BINS)?,
            ),
        ],
        results: json!({
            "w1_vs_beta": w1,
            "terminal_mean": grand,
            "terminal_mean_target": case.mean(),
            "terminal_variance": sample_raw_moments(&sv, 2)[1] - sv.mean() * sv.mean(),
            "beta_shape_alpha": inv.shape_alpha,
            "beta_shape_beta": inv.shape_beta,
            "systems": systems,
            "drift_clamps": clamps.load(Ordering::Relaxed),
            "range_extension": case.range_extension(),
        }),
        checks: vec![
            Check { name: "w1_vs_beta_below_0.015", pass: w1 <= 0.015 },
            Check { name: "mean_within_3_stderr", pass: mean_z <= 3.0 },
        ],
    })
}

pub struct BetaW1Args {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
    pub reps: u64,
    pub tol: f64,
    pub seed: u64,
}

pub fn beta_w1(a: BetaW1Args) -> Result<RunOutput> {
    let sampler = BetaSampler::new(a.a1, a.b1)?;
    let draws = engine::parallel_collect(a.seed, a.reps, |stream| Ok(sampler.sample(stream)))?;
    let sv = SampleVector::new(draws)?;
    let empirical = stats::w1_beta_sample(&sv, a.a2, a.b2, lane_seed(a.seed, u64::MAX))?;
    let closed = stats::w1_beta_closed(a.a1, a.b1, a.a2, a.b2)?;
    let diff = (empirical - closed).abs();
    let pass = diff <= a.tol;
    let csv = format!(
        "a1,b1,a2,b2,empirical,closed,diff,pass\n{},{},{},{},{},{},{},{}\n",
        a.a1, a.b1, a.a2, a.b2, empirical, closed, diff, pass
    );
    Ok(RunOutput {
        files: vec![("w1.csv", csv)],
        results: json!({
            "empirical": empirical,
            "closed_form": closed,
            "difference": diff,
        }),
        checks: vec![Check { name: "matches_closed_form", pass }],
    })
}
