//! Euler integration of the limiting diffusions on [0,1]: the one-level
//! square-root diffusion, its interacting-particle (mean-feedback) variant,
//! closed forms for the self-stabilizing case study, and the checks that
//! compare rescaled chains against these continuous references.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};

use crate::engine::{self, ReplicateStream};
use crate::kernel::GridDensity;
use crate::nonlinear::{LawView, NonLinearDriftSpec};
use crate::stats::{self, BetaSampler, SampleVector};
use crate::{Error, Result};

/// Oracle time step for continuous references used as comparison targets.
pub const ORACLE_DT: f64 = 1e-4;

/// Probe resolution for drift sign and finiteness checks.
const DRIFT_PROBE: usize = 33;

pub type ScalarDrift = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type MeanFeedbackDrift = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Initial law for diffusion runs.
#[derive(Debug, Clone)]
pub enum X0Law {
    Point(f64),
    Uniform,
    Beta { alpha: f64, beta: f64 },
    Grid(GridDensity),
}

enum PreparedX0 {
    Point(f64),
    Uniform,
    Beta(BetaSampler),
    Grid(crate::kernel::GridSampler),
}

impl X0Law {
    fn prepare(&self) -> Result<PreparedX0> {
        match self {
            X0Law::Point(x) => {
                if !(0.0..=1.0).contains(x) {
                    return Err(Error::invalid(format!("initial point {x} outside [0, 1]")));
                }
                Ok(PreparedX0::Point(*x))
            }
            X0Law::Uniform => Ok(PreparedX0::Uniform),
            X0Law::Beta { alpha, beta } => Ok(PreparedX0::Beta(BetaSampler::new(*alpha, *beta)?)),
            X0Law::Grid(g) => Ok(PreparedX0::Grid(g.sampler()?)),
        }
    }
}

impl PreparedX0 {
    fn sample(&self, stream: &mut ReplicateStream) -> f64 {
        match self {
            PreparedX0::Point(x) => *x,
            PreparedX0::Uniform => stream.uniform(),
            PreparedX0::Beta(s) => s.sample(stream),
            PreparedX0::Grid(s) => s.sample(stream),
        }
    }
}

/// Euler scheme for `dX = b(X) dt + sqrt(X(1-X)) dW` on [0,1].
///
/// `t_end` is truncated to a whole number of `dt` steps. The drift must push
/// inward at both ends: `b(0) >= 0` and `b(1) <= 0`.
#[derive(Clone)]
pub struct SDEParams {
    drift: ScalarDrift,
    dt: f64,
    t_end: f64,
}

impl std::fmt::Debug for SDEParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SDEParams {{ dt: {}, t_end: {}, .. }}", self.dt, self.t_end)
    }
}

impl SDEParams {
    pub fn new<F>(b: F, dt: f64, t_end: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid(format!("dt = {dt} must be positive and finite")));
        }
        if !(t_end >= 0.0) || !t_end.is_finite() {
            return Err(Error::invalid(format!("t_end = {t_end} must be finite and >= 0")));
        }
        let b0 = b(0.0);
        if !(b0 >= 0.0) {
            return Err(Error::invalid(format!("b(0) = {b0} must be nonnegative")));
        }
        let b1 = b(1.0);
        if !(b1 <= 0.0) {
            return Err(Error::invalid(format!("b(1) = {b1} must be nonpositive")));
        }
        for i in 0..DRIFT_PROBE {
            let x = i as f64 / (DRIFT_PROBE - 1) as f64;
            let v = b(x);
            if !v.is_finite() {
                return Err(Error::invalid(format!("b({x}) = {v} is not finite")));
            }
        }
        Ok(SDEParams {
            drift: Arc::new(b),
            dt,
            t_end,
        })
    }

    /// Mutation drift `b(x) = theta0 (1 - x) - theta1 x`.
    pub fn mutation(theta0: f64, theta1: f64, dt: f64, t_end: f64) -> Result<Self> {
        for (name, v) in [("theta0", theta0), ("theta1", theta1)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("{name} = {v} must be nonnegative")));
            }
        }
        SDEParams::new(move |x| theta0 * (1.0 - x) - theta1 * x, dt, t_end)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn steps(&self) -> u64 {
        (self.t_end / self.dt + 1e-9).floor() as u64
    }

    pub fn drift(&self) -> ScalarDrift {
        self.drift.clone()
    }

    /// Same drift and horizon on a different step size.
    pub fn with_dt(&self, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid(format!("dt = {dt} must be positive and finite")));
        }
        Ok(SDEParams {
            drift: self.drift.clone(),
            dt,
            t_end: self.t_end,
        })
    }
}

/// Terminal sample of a diffusion run plus the observed clamp rate.
#[derive(Debug, Clone)]
pub struct DiffusionRun {
    pub sample: SampleVector,
    /// Fraction of Euler steps whose increment left [0,1] and was clamped.
    pub clamp_fraction: f64,
    pub steps: u64,
}

fn em_step(x: f64, b: f64, dt: f64, z: f64, clamps: &mut u64) -> f64 {
    let next = x + b * dt + (x * (1.0 - x)).max(0.0).sqrt() * (dt.sqrt() * z);
    if (0.0..=1.0).contains(&next) {
        next
    } else {
        *clamps += 1;
        next.clamp(0.0, 1.0)
    }
}

/// Independent Euler paths of the one-level diffusion; returns the terminal
/// empirical sample and the clamp rate over all steps of all replicates.
pub fn em_wf_simulate(
    params: &SDEParams,
    x0: &X0Law,
    reps: u64,
    master_seed: u64,
) -> Result<DiffusionRun> {
    if reps == 0 {
        return Err(Error::invalid("diffusion run needs reps >= 1"));
    }
    let prepared = x0.prepare()?;
    let steps = params.steps();
    let b = params.drift.clone();
    let dt = params.dt;
    let outcomes = engine::parallel_collect(master_seed, reps, |stream| {
        let mut x = prepared.sample(stream);
        let mut clamps = 0u64;
        for _ in 0..steps {
            let z: f64 = StandardNormal.sample(stream);
            x = em_step(x, b(x), dt, z, &mut clamps);
        }
        Ok((x, clamps))
    })?;
    let total_clamps: u64 = outcomes.iter().map(|o| o.1).sum();
    let denom = (steps * reps).max(1) as f64;
    Ok(DiffusionRun {
        sample: SampleVector::new(outcomes.into_iter().map(|o| o.0).collect())?,
        clamp_fraction: total_clamps as f64 / denom,
        steps,
    })
}

/// Euler scheme for the mean-feedback equation
/// `dX = b(X, E[X]) dt + sqrt(X(1-X)) dW`, integrated as K interacting
/// particles whose empirical mean stands in for `E[X]`.
#[derive(Clone)]
pub struct MvSystemParams {
    drift: MeanFeedbackDrift,
    dt: f64,
    t_end: f64,
}

impl std::fmt::Debug for MvSystemParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MvSystemParams {{ dt: {}, t_end: {}, .. }}", self.dt, self.t_end)
    }
}

impl MvSystemParams {
    pub fn new<F>(b: F, dt: f64, t_end: f64) -> Result<Self>
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid(format!("dt = {dt} must be positive and finite")));
        }
        if !(t_end >= 0.0) || !t_end.is_finite() {
            return Err(Error::invalid(format!("t_end = {t_end} must be finite and >= 0")));
        }
        for i in 0..DRIFT_PROBE {
            let m = i as f64 / (DRIFT_PROBE - 1) as f64;
            let b0 = b(0.0, m);
            if !(b0 >= 0.0) {
                return Err(Error::invalid(format!(
                    "b(0, {m}) = {b0} must be nonnegative"
                )));
            }
            let b1 = b(1.0, m);
            if !(b1 <= 0.0) {
                return Err(Error::invalid(format!(
                    "b(1, {m}) = {b1} must be nonpositive"
                )));
            }
        }
        Ok(MvSystemParams {
            drift: Arc::new(b),
            dt,
            t_end,
        })
    }

    pub fn from_case(case: &CaseStudyParams, dt: f64, t_end: f64) -> Result<Self> {
        let (t0, t1, g) = (case.theta0, case.theta1, case.gamma);
        MvSystemParams::new(
            move |x, mean| t0 * (1.0 - x) - t1 * x - g * (x - mean),
            dt,
            t_end,
        )
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> u64 {
        (self.t_end / self.dt + 1e-9).floor() as u64
    }
}

struct ParticleSlot {
    x: f64,
    stream: ReplicateStream,
    clamps: u64,
}

/// K interacting Euler particles. Each step freezes the particle mean, then
/// every particle moves with its own pre-assigned stream, so results do not
/// depend on the thread count. Returns the terminal K-sample.
pub fn mv_particle_em_simulate(
    k: u64,
    params: &MvSystemParams,
    x0: &X0Law,
    master_seed: u64,
) -> Result<DiffusionRun> {
    let run = mv_run_with_snapshots(k, params, x0, &[params.steps()], master_seed)?;
    let (sample, clamp_fraction, steps) = finish_mv(run, params.steps(), k);
    Ok(DiffusionRun {
        sample: SampleVector::new(sample.into_iter().next().expect("one snapshot"))?,
        clamp_fraction,
        steps,
    })
}

struct MvSnapshots {
    snapshots: Vec<Vec<f64>>,
    total_clamps: u64,
}

fn finish_mv(run: MvSnapshots, steps: u64, k: u64) -> (Vec<Vec<f64>>, f64, u64) {
    let denom = (steps * k).max(1) as f64;
    (run.snapshots, run.total_clamps as f64 / denom, steps)
}

/// Runs the particle system once, recording the full particle vector at each
/// requested step index (sorted, may include 0 and the final step).
fn mv_run_with_snapshots(
    k: u64,
    params: &MvSystemParams,
    x0: &X0Law,
    snapshot_steps: &[u64],
    master_seed: u64,
) -> Result<MvSnapshots> {
    if k < 2 {
        return Err(Error::invalid("particle system needs K >= 2"));
    }
    let steps = params.steps();
    if snapshot_steps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("snapshot steps must be strictly increasing"));
    }
    if let Some(&last) = snapshot_steps.last() {
        if last > steps {
            return Err(Error::invalid(format!(
                "snapshot step {last} beyond the run's {steps} steps"
            )));
        }
    }
    let prepared = x0.prepare()?;
    let mut slots: Vec<ParticleSlot> = (0..k)
        .map(|i| {
            let mut stream = engine::derive_stream(master_seed, i);
            let x = prepared.sample(&mut stream);
            ParticleSlot {
                x,
                stream,
                clamps: 0,
            }
        })
        .collect();
    let dt = params.dt;
    let drift = params.drift.clone();
    let mut snapshots = Vec::with_capacity(snapshot_steps.len());
    let mut want = snapshot_steps.iter().copied().peekable();
    if want.peek() == Some(&0) {
        want.next();
        snapshots.push(slots.iter().map(|s| s.x).collect());
    }
    for step in 1..=steps {
        let mean = slots.iter().map(|s| s.x).sum::<f64>() / k as f64;
        engine::parallel_for_mut(&mut slots, |_, slot| {
            let z: f64 = StandardNormal.sample(&mut slot.stream);
            slot.x = em_step(slot.x, drift(slot.x, mean), dt, z, &mut slot.clamps);
        });
        if want.peek() == Some(&step) {
            want.next();
            snapshots.push(slots.iter().map(|s| s.x).collect());
        }
    }
    Ok(MvSnapshots {
        snapshots,
        total_clamps: slots.iter().map(|s| s.clamps).sum(),
    })
}

/// Self-stabilizing case study: mutation rates plus a mean-reversion pull of
/// strength gamma. The stated parameter range is gamma in (0,1); larger
/// values are accepted and flagged, matching the figure this reproduces.
#[derive(Debug, Clone, Copy)]
pub struct CaseStudyParams {
    pub theta0: f64,
    pub theta1: f64,
    pub gamma: f64,
}

impl CaseStudyParams {
    pub fn new(theta0: f64, theta1: f64, gamma: f64) -> Result<Self> {
        for (name, v) in [("theta0", theta0), ("theta1", theta1)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} = {v} must be positive")));
            }
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::invalid(format!("gamma = {gamma} must be nonnegative")));
        }
        Ok(CaseStudyParams {
            theta0,
            theta1,
            gamma,
        })
    }

    /// True when gamma exceeds the stated range (0,1) and the closed forms
    /// are being extrapolated to reproduce the reference figure.
    pub fn range_extension(&self) -> bool {
        self.gamma >= 1.0
    }

    /// Invariant mean `m = theta0 / (theta0 + theta1)`, independent of gamma.
    pub fn mean(&self) -> f64 {
        self.theta0 / (self.theta0 + self.theta1)
    }

    /// Effective mutation rates after absorbing the self-stabilizing pull:
    /// `theta_i (1 + gamma / (theta0 + theta1))`.
    pub fn effective_rates(&self) -> (f64, f64) {
        let lift = 1.0 + self.gamma / (self.theta0 + self.theta1);
        (self.theta0 * lift, self.theta1 * lift)
    }

    /// Drift with the invariant mean substituted for the feedback term,
    /// `b(x) = tb0 (1 - x) - tb1 x` at the effective rates.
    pub fn frozen_drift(&self, dt: f64, t_end: f64) -> Result<SDEParams> {
        let (tb0, tb1) = self.effective_rates();
        SDEParams::mutation(tb0, tb1, dt, t_end)
    }

    /// The rescaled measure-dependent drift for the discrete N-system:
    /// `x + (2 / sqrt(3 N)) b(x, <mu>)`, clamped into [0,1]. The counter
    /// records how many drift evaluations hit the clamp; it stays at zero
    /// whenever N is large enough for the unclamped map to stay in range.
    pub fn scaled_chain_drift(
        &self,
        big_n: u64,
    ) -> Result<(NonLinearDriftSpec, Arc<AtomicU64>)> {
        if big_n < 3 {
            return Err(Error::invalid(format!(
                "diffusive scale N = {big_n} puts the step scale above 1"
            )));
        }
        let (t0, t1, g) = (self.theta0, self.theta1, self.gamma);
        let scale = 2.0 / (3.0 * big_n as f64).sqrt();
        let counter = Arc::new(AtomicU64::new(0));
        let hits = counter.clone();
        let drift = NonLinearDriftSpec::general(
            move |x, law: &LawView| {
                let raw = x + scale * (t0 * (1.0 - x) - t1 * x - g * (x - law.mean()));
                if (0.0..=1.0).contains(&raw) {
                    raw
                } else {
                    hits.fetch_add(1, Ordering::Relaxed);
                    raw.clamp(0.0, 1.0)
                }
            },
            (1.0 - scale * (t0 + t1 + g)).abs(),
            scale * g,
        )?
        .declare_law_mean_only()?;
        Ok((drift, counter))
    }
}

/// Closed-form invariant law of the case study: a Beta law at the effective
/// rates, with its mean and variance.
#[derive(Debug, Clone, Copy)]
pub struct CaseStudyInvariant {
    pub shape_alpha: f64,
    pub shape_beta: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Shapes `(2 tb0, 2 tb1)` at the effective rates; the variance comes from
/// the second moment `m (2 (theta0 + gamma m) + 1) / (2 (theta0 + theta1 +
/// gamma) + 1)`.
pub fn case_study_invariant(case: &CaseStudyParams) -> CaseStudyInvariant {
    let (tb0, tb1) = case.effective_rates();
    let m = case.mean();
    let total = case.theta0 + case.theta1 + case.gamma;
    let second = m * (2.0 * (case.theta0 + case.gamma * m) + 1.0) / (2.0 * total + 1.0);
    CaseStudyInvariant {
        shape_alpha: 2.0 * tb0,
        shape_beta: 2.0 * tb1,
        mean: m,
        variance: second - m * m,
    }
}

/// One point of a scaling-limit comparison: the rescaled chain at scale N
/// against the continuous reference.
#[derive(Debug, Clone)]
pub struct ScalingCheckPoint {
    pub big_n: u64,
    pub w1: f64,
    /// Dispersion of W1 over consecutive replicate batches.
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct ScalingCheck {
    pub points: Vec<ScalingCheckPoint>,
}

impl ScalingCheck {
    /// True when the W1 series never rises by more than `k` combined batch
    /// dispersions between consecutive scales.
    pub fn non_increasing_within(&self, k: f64) -> bool {
        self.points
            .windows(2)
            .all(|w| w[1].w1 <= w[0].w1 + k * (w[0].stderr + w[1].stderr))
    }

    pub fn last_w1(&self) -> f64 {
        self.points.last().map(|p| p.w1).unwrap_or(0.0)
    }
}

const SCALING_BATCHES: usize = 8;

fn batch_w1(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    let w1 = stats::w1_empirical(&SampleVector::new(a.to_vec())?, &SampleVector::new(b.to_vec())?)?;
    let batch = a.len() / SCALING_BATCHES;
    if batch == 0 {
        return Ok((w1, 0.0));
    }
    let per: Vec<f64> = (0..SCALING_BATCHES)
        .map(|i| {
            let sl = i * batch..(i + 1) * batch;
            stats::w1_empirical(
                &SampleVector::new(a[sl.clone()].to_vec())?,
                &SampleVector::new(b[sl].to_vec())?,
            )
        })
        .collect::<Result<_>>()?;
    let mean = per.iter().sum::<f64>() / per.len() as f64;
    let var = per.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / per.len() as f64;
    Ok((w1, (var / per.len() as f64).sqrt()))
}

/// For each N, runs the rescaled one-level chain (step sqrt(3/N), drift
/// `x + (2/sqrt(3N)) b(x)`, floor(N t) generations) and compares its
/// terminal sample against an Euler reference driven by the same `b` at the
/// oracle step size carried by `oracle`.
pub fn scaling_limit_check(
    n_list: &[u64],
    oracle: &SDEParams,
    x0: &X0Law,
    reps: u64,
    master_seed: u64,
) -> Result<ScalingCheck> {
    if n_list.is_empty() {
        return Err(Error::invalid("scaling check needs at least one scale"));
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("scales must be strictly increasing"));
    }
    let reference = em_wf_simulate(oracle, x0, reps, engine::lane_seed(master_seed, u64::MAX))?;
    let prepared = x0.prepare()?;
    let t = oracle.t_end();
    let mut points = Vec::with_capacity(n_list.len());
    for (lane, &big_n) in n_list.iter().enumerate() {
        let b = oracle.drift();
        let drift = crate::chains::DriftSpec::diffusion_scaled(move |x| b(x), big_n)?;
        let delta = crate::chains::DriftSpec::diffusion_delta(big_n);
        let gens = (big_n as f64 * t).floor() as u64;
        let terminals = engine::parallel_collect(
            engine::lane_seed(master_seed, lane as u64),
            reps,
            |stream| {
                let z0 = prepared.sample(stream);
                Ok(crate::chains::simulate_chain(delta, &drift, z0, gens, stream)?.terminal())
            },
        )?;
        let (w1, stderr) = batch_w1(&terminals, reference.sample.values())?;
        points.push(ScalingCheckPoint { big_n, w1, stderr });
    }
    Ok(ScalingCheck { points })
}

/// As `scaling_limit_check`, for the measure-dependent case: the rescaled
/// non-linear chain at each N against a K-particle Euler reference for the
/// mean-feedback equation, K equal to `reps`.
pub fn scaling_limit_check_mv(
    n_list: &[u64],
    case: &CaseStudyParams,
    x0: &X0Law,
    t: f64,
    reps: u64,
    master_seed: u64,
) -> Result<ScalingCheck> {
    if n_list.is_empty() {
        return Err(Error::invalid("scaling check needs at least one scale"));
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("scales must be strictly increasing"));
    }
    let mv = MvSystemParams::from_case(case, ORACLE_DT, t)?;
    let reference =
        mv_particle_em_simulate(reps, &mv, x0, engine::lane_seed(master_seed, u64::MAX))?;
    let mu0 = match x0 {
        X0Law::Grid(g) => g.clone(),
        X0Law::Uniform => GridDensity::uniform(crate::kernel::DENSITY_GRID_DEFAULT)?,
        _ => {
            return Err(Error::invalid(
                "the non-linear chain needs a gridded or uniform initial law",
            ))
        }
    };
    let mut points = Vec::with_capacity(n_list.len());
    for (lane, &big_n) in n_list.iter().enumerate() {
        let (drift, _clamps) = case.scaled_chain_drift(big_n)?;
        let delta = (3.0 / big_n as f64).sqrt();
        let gens = (big_n as f64 * t).floor() as u64;
        let flow = crate::nonlinear::law_flow(&mu0, delta, &drift, gens)?;
        let sample = crate::nonlinear::endpoint_sample_against_flow(
            &flow,
            delta,
            &drift,
            reps,
            engine::lane_seed(master_seed, lane as u64),
        )?;
        let (w1, stderr) = batch_w1(sample.values(), reference.sample.values())?;
        points.push(ScalingCheckPoint { big_n, w1, stderr });
    }
    Ok(ScalingCheck { points })
}

/// W1 between the particle law at time t and the invariant Beta law.
#[derive(Debug, Clone)]
pub struct ErgodicPoint {
    pub t: f64,
    pub w1: f64,
}

#[derive(Debug, Clone)]
pub struct ErgodicRate {
    pub points: Vec<ErgodicPoint>,
    /// Exponential decay rate fitted by least squares on log W1 against t.
    pub rate: f64,
}

/// Runs one K-particle system across `t_list`, comparing the particle law at
/// each time against a fresh exact sample of the invariant Beta law, then
/// fits `W1(t) ~ exp(-rate t)`.
pub fn ergodic_rate_check(
    case: &CaseStudyParams,
    t_list: &[f64],
    k: u64,
    dt: f64,
    x0: &X0Law,
    master_seed: u64,
) -> Result<ErgodicRate> {
    if t_list.len() < 2 {
        return Err(Error::invalid("rate fitting needs at least two times"));
    }
    if t_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("times must be strictly increasing"));
    }
    let t_end = *t_list.last().expect("non-empty");
    let params = MvSystemParams::from_case(case, dt, t_end)?;
    let snapshot_steps: Vec<u64> = t_list.iter().map(|t| (t / dt).round() as u64).collect();
    let mut dedup = snapshot_steps.clone();
    dedup.dedup();
    if dedup.len() != snapshot_steps.len() {
        return Err(Error::invalid("times collide on the step grid; reduce dt"));
    }
    let run = mv_run_with_snapshots(k, &params, x0, &dedup, master_seed)?;
    let invariant = case_study_invariant(case);
    let beta = BetaSampler::new(invariant.shape_alpha, invariant.shape_beta)?;
    let mut points = Vec::with_capacity(t_list.len());
    for (i, (&t, snapshot)) in t_list.iter().zip(run.snapshots).enumerate() {
        let mut stream = engine::derive_stream(engine::lane_seed(master_seed, 7000 + i as u64), 0);
        let exact: Vec<f64> = (0..k).map(|_| beta.sample(&mut stream)).collect();
        let w1 = stats::w1_empirical(&SampleVector::new(snapshot)?, &SampleVector::new(exact)?)?;
        points.push(ErgodicPoint { t, w1 });
    }
    if points.iter().any(|p| !(p.w1 > 0.0)) {
        return Err(Error::invalid("zero W1 in rate fit"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.t).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.w1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxx: f64 = xs.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(ErgodicRate {
        points,
        rate: -(sxy / sxx),
    })
}
