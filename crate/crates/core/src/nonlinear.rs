//! Measure-dependent chains: the one-step kernel's drift parameter reads the
//! current marginal law, so the law evolves by a deterministic nonlinear
//! pushforward while sample paths are drawn against that law flow.
//!
//! The law is represented as a grid density and propagated exactly: a source
//! cell at `x` with mass `w` and drift value `p` sends `w (1-p)` uniformly
//! onto `[x(1-delta), x]` and `w p` uniformly onto `[x, x + delta(1-x)]`,
//! both integrated cell-by-cell in closed form. Monte Carlo ensembles serve
//! only as cross-checks.

use std::sync::Arc;

use crate::chains::ChainPath;
use crate::engine::{self, ReplicateStream};
use crate::kernel::{self, check_unit, GridDensity};
use crate::stats::SampleVector;
use crate::{Error, Result};

/// Relative mass drift tolerated in one exact pushforward sweep.
pub const MASS_DRIFT_TOL: f64 = 1e-10;
/// Slack beyond [0,1] tolerated from a drift before it is a contract error.
const DRIFT_RANGE_SLACK: f64 = 1e-12;
/// Grid used for construction-time drift range probes.
const PROBE_GRID: usize = 33;

/// What a measure-dependent drift may read of the current law.
#[derive(Debug, Clone, Copy)]
pub enum LawView<'a> {
    /// The full grid density.
    Grid(&'a GridDensity),
    /// An empirical ensemble of coordinates.
    Empirical(&'a [f64]),
    /// A bare first moment (sufficient for mean-feedback drifts).
    Mean(f64),
}

impl LawView<'_> {
    pub fn mean(&self) -> f64 {
        match self {
            LawView::Grid(g) => g.mean(),
            LawView::Empirical(v) => {
                if v.is_empty() {
                    0.0
                } else {
                    v.iter().sum::<f64>() / v.len() as f64
                }
            }
            LawView::Mean(m) => *m,
        }
    }
}

type MeasureDrift = Arc<dyn Fn(f64, &LawView) -> f64 + Send + Sync>;

#[derive(Clone)]
enum MeasureKind {
    /// `p(x, mu) = a + b x + c <mu>`.
    AffineInMean { a: f64, b: f64, c: f64 },
    /// `p(x, mu) = a + b (eps x + (1 - eps) <mu>)`.
    EpsilonInterpolated { a: f64, b: f64, eps: f64 },
    /// `p(x, mu) = x + (2 / sqrt(3 N)) b(x, mu)`.
    DiffusionScaled { b: MeasureDrift, big_n: u64 },
    /// Arbitrary evaluable drift.
    General { pbar: MeasureDrift },
}

impl std::fmt::Debug for MeasureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MeasureKind::AffineInMean { a, b, c } => {
                write!(f, "AffineInMean {{ a: {a}, b: {b}, c: {c} }}")
            }
            MeasureKind::EpsilonInterpolated { a, b, eps } => {
                write!(f, "EpsilonInterpolated {{ a: {a}, b: {b}, eps: {eps} }}")
            }
            MeasureKind::DiffusionScaled { big_n, .. } => {
                write!(f, "DiffusionScaled {{ big_n: {big_n}, .. }}")
            }
            MeasureKind::General { .. } => write!(f, "General {{ .. }}"),
        }
    }
}

/// A measure-dependent drift `(x, mu) -> p(x, mu)` with declared Lipschitz
/// constants: `|p(x,mu) - p(y,nu)| <= l1 |x - y| + l2 W1(mu, nu)`.
///
/// For the structured kinds the constants are derived; for the evaluable
/// kinds they are caller-declared and only spot-checked downstream, never
/// certified globally.
#[derive(Debug, Clone)]
pub struct NonLinearDriftSpec {
    kind: MeasureKind,
    l1: f64,
    l2: f64,
    law_mean_only: bool,
}

impl NonLinearDriftSpec {
    /// `p = a + b x + c <mu>` with `a, b, c >= 0` and `a + b + c <= 1`,
    /// which keeps the range inside [0,1] for every x and law.
    pub fn affine_in_mean(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a >= 0.0 && b >= 0.0 && c >= 0.0) || !(a + b + c <= 1.0) {
            return Err(Error::invalid(format!(
                "affine drift needs a, b, c >= 0 with a + b + c <= 1; got ({a}, {b}, {c})"
            )));
        }
        Ok(NonLinearDriftSpec {
            kind: MeasureKind::AffineInMean { a, b, c },
            l1: b,
            l2: c,
            law_mean_only: true,
        })
    }

    /// `p = a + b (eps x + (1 - eps) <mu>)` with `a` in (0,1), `b` in
    /// (0, 1/2), `a + b < 1`, `eps` in [0,1].
    pub fn epsilon_interpolated(a: f64, b: f64, eps: f64) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) || !(b > 0.0 && b < 0.5) || !(a + b < 1.0) {
            return Err(Error::invalid(format!(
                "interpolated drift needs a in (0,1), b in (0,1/2), a + b < 1; got ({a}, {b})"
            )));
        }
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::invalid(format!("eps = {eps} outside [0, 1]")));
        }
        Ok(NonLinearDriftSpec {
            kind: MeasureKind::EpsilonInterpolated { a, b, eps },
            l1: b * eps,
            l2: b * (1.0 - eps),
            law_mean_only: true,
        })
    }

    /// `p(x, mu) = x + (2 / sqrt(3 N)) b(x, mu)`: the diffusive rescaling of
    /// a measure-dependent drift. `l1`, `l2` are the declared constants of
    /// the rescaled map. The range is probed on a grid of states against a
    /// family of probe laws.
    pub fn diffusion_scaled<F>(b: F, big_n: u64, l1: f64, l2: f64) -> Result<Self>
    where
        F: Fn(f64, &LawView) -> f64 + Send + Sync + 'static,
    {
        if big_n == 0 {
            return Err(Error::invalid("diffusive scale N must be positive"));
        }
        let spec = NonLinearDriftSpec {
            kind: MeasureKind::DiffusionScaled {
                b: Arc::new(b),
                big_n,
            },
            l1,
            l2,
            law_mean_only: false,
        };
        spec.probe_range()?;
        Ok(spec)
    }

    /// Arbitrary evaluable drift with declared constants, range-probed at
    /// construction.
    pub fn general<F>(pbar: F, l1: f64, l2: f64) -> Result<Self>
    where
        F: Fn(f64, &LawView) -> f64 + Send + Sync + 'static,
    {
        let spec = NonLinearDriftSpec {
            kind: MeasureKind::General {
                pbar: Arc::new(pbar),
            },
            l1,
            l2,
            law_mean_only: false,
        };
        spec.probe_range()?;
        Ok(spec)
    }

    /// Declares that the drift reads the law only through its mean, so
    /// measure arguments may be reduced to `LawView::Mean` by bulk drivers.
    /// Spot-checked here against two-point laws of matching mean; a closure
    /// that actually reads more of the law is rejected when the probe can
    /// see it and would otherwise silently change semantics.
    pub fn declare_law_mean_only(mut self) -> Result<Self> {
        for (lo, hi) in [(0.0, 0.0), (0.1, 0.3), (0.3, 0.7), (0.55, 0.95), (1.0, 1.0)] {
            let pair = [lo, hi];
            let m = (lo + hi) / 2.0;
            for i in 0..PROBE_GRID {
                let x = i as f64 / (PROBE_GRID - 1) as f64;
                let via_mean = self.eval(x, &LawView::Mean(m))?;
                let via_law = self.eval(x, &LawView::Empirical(&pair))?;
                if (via_mean - via_law).abs() > 1e-12 {
                    return Err(Error::invalid(format!(
                        "drift is not mean-only: values {via_law} and {via_mean} \
                         at x = {x} for laws sharing mean {m}"
                    )));
                }
            }
        }
        self.law_mean_only = true;
        Ok(self)
    }

    /// True when measure arguments may be reduced to their mean.
    pub fn law_mean_only(&self) -> bool {
        self.law_mean_only
    }

    fn probe_range(&self) -> Result<()> {
        let uniform = GridDensity::uniform(64)?;
        for i in 0..PROBE_GRID {
            let x = i as f64 / (PROBE_GRID - 1) as f64;
            for m in [0.0, 0.25, 0.5, 0.75, 1.0] {
                self.eval(x, &LawView::Mean(m))?;
            }
            self.eval(x, &LawView::Grid(&uniform))?;
        }
        Ok(())
    }

    pub fn l1(&self) -> f64 {
        self.l1
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    /// `l1 + l2`, the contraction budget of the coupled recursion.
    pub fn lip_sum(&self) -> f64 {
        self.l1 + self.l2
    }

    /// True when the drift reads the law only through its mean.
    pub fn is_mean_only(&self) -> bool {
        match &self.kind {
            MeasureKind::AffineInMean { b, .. } => *b == 0.0,
            MeasureKind::EpsilonInterpolated { eps, .. } => *eps == 0.0,
            _ => false,
        }
    }

    /// Drift value at `(x, law)`, validated into [0,1].
    pub fn eval(&self, x: f64, law: &LawView) -> Result<f64> {
        check_unit(x, "x")?;
        let raw = match &self.kind {
            MeasureKind::AffineInMean { a, b, c } => a + b * x + c * law.mean(),
            MeasureKind::EpsilonInterpolated { a, b, eps } => {
                a + b * (eps * x + (1.0 - eps) * law.mean())
            }
            MeasureKind::DiffusionScaled { b, big_n } => {
                x + 2.0 / (3.0 * *big_n as f64).sqrt() * b(x, law)
            }
            MeasureKind::General { pbar } => pbar(x, law),
        };
        if !raw.is_finite() || raw < -DRIFT_RANGE_SLACK || raw > 1.0 + DRIFT_RANGE_SLACK {
            return Err(Error::ContractViolation(format!(
                "drift value {raw} at x = {x} outside [0, 1]"
            )));
        }
        Ok(raw.clamp(0.0, 1.0))
    }
}

/// A deterministic sequence of marginal laws `mu_0, ..., mu_n`.
#[derive(Debug, Clone)]
pub struct LawFlow {
    densities: Vec<GridDensity>,
}

impl LawFlow {
    pub fn generations(&self) -> u64 {
        self.densities.len() as u64 - 1
    }

    pub fn density(&self, n: u64) -> &GridDensity {
        &self.densities[n as usize]
    }

    pub fn last(&self) -> &GridDensity {
        self.densities.last().expect("non-empty flow")
    }

    pub fn mean(&self, n: u64) -> f64 {
        self.density(n).mean()
    }

    pub fn means(&self) -> Vec<f64> {
        self.densities.iter().map(|d| d.mean()).collect()
    }
}

/// Deposits `amount` uniformly spread over `[lo, hi]` into the cell masses.
fn deposit(masses: &mut [f64], h: f64, lo: f64, hi: f64, amount: f64) {
    if amount == 0.0 {
        return;
    }
    let n = masses.len();
    let width = hi - lo;
    if width <= f64::EPSILON {
        let cell = (((lo + hi) / 2.0 / h) as usize).min(n - 1);
        masses[cell] += amount;
        return;
    }
    let inv_w = 1.0 / width;
    let mut j = ((lo / h) as usize).min(n - 1);
    while j < n {
        let e_lo = j as f64 * h;
        if e_lo >= hi {
            break;
        }
        let e_hi = (j as f64 + 1.0) * h;
        let overlap = hi.min(e_hi) - lo.max(e_lo);
        if overlap > 0.0 {
            masses[j] += amount * overlap * inv_w;
        }
        j += 1;
    }
}

/// One pushforward sweep of a grid law under the measure-dependent kernel.
///
/// Each source cell is represented by its two-point Gauss nodes (the deposit
/// interval endpoints are affine in the source point, so this removes the
/// first-order cell-width bias of a midpoint atom); the deposit onto target
/// cells is then exact per node. Total mass must be conserved within
/// [`MASS_DRIFT_TOL`] before renormalization.
pub fn propagate_law(mu: &GridDensity, delta: f64, drift: &NonLinearDriftSpec) -> Result<GridDensity> {
    check_unit(delta, "delta")?;
    if (mu.mass() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "source law must be normalized; mass = {}",
            mu.mass()
        )));
    }
    let n = mu.cell_count();
    let h = mu.cell_width();
    let view = LawView::Grid(mu);
    let gauss_off = h / (2.0 * 3.0_f64.sqrt());
    let mut masses = vec![0.0_f64; n];
    for (i, &dens) in mu.densities().iter().enumerate() {
        let w = dens * h;
        if w == 0.0 {
            continue;
        }
        let mid = (i as f64 + 0.5) * h;
        for x in [mid - gauss_off, mid + gauss_off] {
            let p = drift.eval(x, &view)?;
            deposit(&mut masses, h, x * (1.0 - delta), x, 0.5 * w * (1.0 - p));
            deposit(&mut masses, h, x, x + delta * (1.0 - x), 0.5 * w * p);
        }
    }
    let total: f64 = masses.iter().sum();
    if (total - 1.0).abs() > MASS_DRIFT_TOL {
        return Err(Error::ContractViolation(format!(
            "pushforward mass drifted to {total}"
        )));
    }
    GridDensity::from_cell_masses(masses)
}

/// The law flow `mu_0, ..., mu_n` from an initial grid law.
pub fn law_flow(
    mu0: &GridDensity,
    delta: f64,
    drift: &NonLinearDriftSpec,
    n: u64,
) -> Result<LawFlow> {
    let mut densities = Vec::with_capacity(n as usize + 1);
    densities.push(mu0.clone());
    for k in 0..n {
        let next = propagate_law(&densities[k as usize], delta, drift)?;
        densities.push(next);
    }
    Ok(LawFlow { densities })
}

/// Iterates the pushforward to its fixed point: stops when consecutive laws
/// differ by less than `tol` in L1. Returns the invariant law and the sweep
/// count.
pub fn flow_to_fixed_point(
    mu0: &GridDensity,
    delta: f64,
    drift: &NonLinearDriftSpec,
    tol: f64,
    max_iter: u64,
) -> Result<(GridDensity, u64)> {
    if !(tol > 0.0) {
        return Err(Error::invalid("fixed-point tolerance must be positive"));
    }
    let mut current = mu0.clone();
    let mut last_residual = f64::INFINITY;
    for iter in 1..=max_iter {
        let next = propagate_law(&current, delta, drift)?;
        last_residual = next.l1_distance(&current)?;
        current = next;
        if last_residual < tol {
            return Ok((current, iter));
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: last_residual,
    })
}

/// Simulates one sample path against its deterministically precomputed law
/// flow: `Z_0 ~ mu_0`, then each step applies the one-sided update at drift
/// `p(Z_k, mu_k)`.
pub fn nonlinear_chain_simulate(
    mu0: &GridDensity,
    delta: f64,
    drift: &NonLinearDriftSpec,
    n: u64,
    stream: &mut ReplicateStream,
) -> Result<(ChainPath, LawFlow)> {
    let flow = law_flow(mu0, delta, drift, n)?;
    let sampler = flow.density(0).sampler()?;
    let means = flow_means(&flow, drift);
    let path =
        sample_path_against_flow(&flow, delta, drift, n, &sampler, means.as_deref(), stream)?;
    Ok((ChainPath { delta, values: path }, flow))
}

/// Per-generation law views for path sampling: mean-only drifts read a
/// precomputed mean instead of walking the grid at every step.
pub(crate) fn flow_means(flow: &LawFlow, drift: &NonLinearDriftSpec) -> Option<Vec<f64>> {
    drift
        .law_mean_only()
        .then(|| (0..=flow.generations()).map(|k| flow.mean(k)).collect())
}

pub(crate) fn flow_view<'a>(
    flow: &'a LawFlow,
    means: Option<&'a [f64]>,
    k: u64,
) -> LawView<'a> {
    match means {
        Some(ms) => LawView::Mean(ms[k as usize]),
        None => LawView::Grid(flow.density(k)),
    }
}

fn sample_path_against_flow(
    flow: &LawFlow,
    delta: f64,
    drift: &NonLinearDriftSpec,
    n: u64,
    sampler: &kernel::GridSampler,
    means: Option<&[f64]>,
    stream: &mut ReplicateStream,
) -> Result<Vec<f64>> {
    let mut values = Vec::with_capacity(n as usize + 1);
    let mut z = sampler.sample(stream);
    values.push(z);
    for k in 0..n {
        let p = drift.eval(z, &flow_view(flow, means, k))?;
        let (u, v) = stream.uniform_pair();
        z = kernel::update_sup(p, delta, z, u, v)?;
        values.push(z);
    }
    Ok(values)
}

/// Terminal states of `reps` independent sample paths at generation `n`,
/// all drawn against one shared law flow.
pub fn nonlinear_endpoint_sample(
    mu0: &GridDensity,
    delta: f64,
    drift: &NonLinearDriftSpec,
    n: u64,
    reps: u64,
    master_seed: u64,
) -> Result<SampleVector> {
    let flow = law_flow(mu0, delta, drift, n)?;
    endpoint_sample_against_flow(&flow, delta, drift, reps, master_seed)
}

/// As `nonlinear_endpoint_sample`, but reusing an already-computed flow.
pub fn endpoint_sample_against_flow(
    flow: &LawFlow,
    delta: f64,
    drift: &NonLinearDriftSpec,
    reps: u64,
    master_seed: u64,
) -> Result<SampleVector> {
    let n = flow.generations();
    let sampler = flow.density(0).sampler()?;
    let means = flow_means(flow, drift);
    let endpoints = engine::parallel_collect(master_seed, reps, |stream| {
        Ok(
            *sample_path_against_flow(flow, delta, drift, n, &sampler, means.as_deref(), stream)?
                .last()
                .expect("non-empty path"),
        )
    })?;
    SampleVector::new(endpoints)
}

/// Sampled mean gap per generation between two coupled measure-dependent
/// chains, with its standard errors.
#[derive(Debug, Clone)]
pub struct GapSeries {
    pub gap: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Couples two measure-dependent chains through the shared-uniform coupled
/// kernel step, each drift evaluated at its own chain state against its own
/// law flow. Initial states share one quantile draw. Returns the sampled
/// per-generation mean absolute gap over `reps` replicates.
pub fn nonlinear_coupling(
    drift_p: &NonLinearDriftSpec,
    drift_q: &NonLinearDriftSpec,
    delta: f64,
    mu0_p: &GridDensity,
    mu0_q: &GridDensity,
    n: u64,
    reps: u64,
    master_seed: u64,
) -> Result<GapSeries> {
    if reps == 0 {
        return Err(Error::invalid("coupling needs reps >= 1"));
    }
    let flow_p = law_flow(mu0_p, delta, drift_p, n)?;
    let flow_q = law_flow(mu0_q, delta, drift_q, n)?;
    let sampler_p = flow_p.density(0).sampler()?;
    let sampler_q = flow_q.density(0).sampler()?;
    let means_p = flow_means(&flow_p, drift_p);
    let means_q = flow_means(&flow_q, drift_q);
    let len = n as usize + 1;
    let (sum, sum_sq) = engine::parallel_replicates(
        master_seed,
        reps,
        |stream: &mut ReplicateStream| {
            let q0 = stream.uniform();
            let mut x = sampler_p.quantile(q0);
            let mut y = sampler_q.quantile(q0);
            let mut gaps = Vec::with_capacity(len);
            let mut sq = Vec::with_capacity(len);
            let g0 = (x - y).abs();
            gaps.push(g0);
            sq.push(g0 * g0);
            for k in 0..n {
                let p = drift_p.eval(x, &flow_view(&flow_p, means_p.as_deref(), k))?;
                let q = drift_q.eval(y, &flow_view(&flow_q, means_q.as_deref(), k))?;
                let (nx, ny) = kernel::coupled_step(x, y, p, q, delta, stream)?;
                x = nx;
                y = ny;
                let g = (x - y).abs();
                gaps.push(g);
                sq.push(g * g);
            }
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
        .map(|(&m, &s2)| ((s2 / r - m * m).max(0.0) / r).sqrt())
        .collect();
    Ok(GapSeries { gap, stderr })
}

/// Invariant law of a mean-feedback drift (`p` constant in `x`): solves
/// `p(0, law-with-mean-s) = s` by bisection, then returns the fixed point
/// and the one-level invariant density at that drift value.
///
/// Valid because the one-level invariant law at constant drift `s` has mean
/// exactly `s`, so a mean-only drift closes on itself through this scalar.
pub fn invariant_fixed_point_mean_only(
    drift: &NonLinearDriftSpec,
    delta: f64,
    tol: f64,
) -> Result<(f64, GridDensity)> {
    if !(tol > 0.0) {
        return Err(Error::invalid("bisection tolerance must be positive"));
    }
    // The drift must not read x: probe across states at fixed mean.
    for m in [0.0, 0.3, 0.7, 1.0] {
        let at0 = drift.eval(0.0, &LawView::Mean(m))?;
        for x in [0.25, 0.5, 0.75, 1.0] {
            if (drift.eval(x, &LawView::Mean(m))? - at0).abs() > 1e-12 {
                return Err(Error::invalid(
                    "mean-only fixed point needs a drift independent of x",
                ));
            }
        }
    }
    let f = |s: f64| -> Result<f64> { Ok(drift.eval(0.0, &LawView::Mean(s))? - s) };
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    let f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if f_lo == 0.0 {
        hi = lo;
    } else if f_hi == 0.0 {
        lo = hi;
    } else if f_lo < 0.0 || f_hi > 0.0 {
        return Err(Error::ContractViolation(
            "no sign change for the mean fixed point on [0, 1]".into(),
        ));
    }
    while hi - lo > tol {
        let mid = (lo + hi) / 2.0;
        if f(mid)? >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s_bar = (lo + hi) / 2.0;
    if !(s_bar > 0.0 && s_bar < 1.0) {
        return Err(Error::invalid(format!(
            "mean fixed point {s_bar} sits on the boundary; no interior density exists"
        )));
    }
    let solve = kernel::invariant_density(
        delta,
        s_bar,
        kernel::DENSITY_GRID_DEFAULT,
        kernel::DENSITY_TOL_DEFAULT,
        kernel::DENSITY_MAX_ITER_DEFAULT,
    )?;
    Ok((s_bar, solve.density))
}

/// Closed-form stationary mean and variance of the mean-perturbation family
/// `p = a + b (eps x + (1 - eps) <mu>)`.
#[derive(Debug, Clone, Copy)]
pub struct PerturbationStats {
    pub mean: f64,
    pub variance: f64,
}

/// Stationary mean `s = a/(1-b)` (independent of `eps`) and variance
/// `var = [delta s (1-s)/(3-delta)] / (1 - eps b (3-2 delta)/(3-delta))`.
pub fn perturbation_stats(a: f64, b: f64, epsilon: f64, delta: f64) -> Result<PerturbationStats> {
    // Parameter gates shared with the drift constructor.
    NonLinearDriftSpec::epsilon_interpolated(a, b, epsilon)?;
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!("delta = {delta} outside (0, 1]")));
    }
    let s = a / (1.0 - b);
    let base = delta * s * (1.0 - s) / (3.0 - delta);
    let shrink = 1.0 - epsilon * b * (3.0 - 2.0 * delta) / (3.0 - delta);
    Ok(PerturbationStats {
        mean: s,
        variance: base / shrink,
    })
}
