//! Backward block-counting duals: mixing coefficients, the neutral dual on
//! {1..m}, the selection-with-mutation dual on the extended nonnegative
//! integers, duality certification, and exact absorption probabilities.
//!
//! The recurring coefficient is `lambda_{n,k} = (1/delta) * integral of
//! x^k (1-x)^(n-k) over [0, delta]`; rows of every dual are built from the
//! weighted form `B(n,k) = C(n,k) lambda_{n,k}`, which satisfies the
//! all-positive identity `B(n,k) = sum_{j>=k} C(n,j) delta^j (1-delta)^(n-j) / (j+1)`
//! and therefore evaluates stably at any order.

use crate::chains::{self, DriftSpec};
use crate::engine::{self, ReplicateStream};
#[cfg(test)]
use crate::exact;
use crate::kernel::check_unit;
use crate::stats::ln_gamma;
use crate::{Error, Result};

/// Row-sum conservation tolerance for every transition row.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Largest supported dual state; tables are dense in the state index.
pub const DUAL_STATE_CAP: u64 = 4096;

/// Mixing coefficient `lambda_{n,k}`, evaluated by the descending positive
/// recurrence on `I(a,b) = integral of x^a (1-x)^b over [0, delta]`:
/// `I(a,b) = delta^(a+1) (1-delta)^b / (a+1) + b/(a+1) I(a+1, b-1)`.
/// Every term is positive, so no cancellation occurs at any order.
pub fn lambda_coeff(n: u32, k: u32, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!("delta = {delta} outside (0, 1]")));
    }
    if k > n {
        return Err(Error::invalid(format!("lambda index k = {k} exceeds n = {n}")));
    }
    let b = n - k;
    let mut val = 0.0;
    for bb in 0..=b {
        let aa = (k + b - bb) as f64;
        let base = delta.powi(aa as i32 + 1) * (1.0 - delta).powi(bb as i32) / (aa + 1.0);
        val = base + if bb == 0 { 0.0 } else { bb as f64 / (aa + 1.0) * val };
    }
    Ok(val / delta)
}

/// Precomputed weighted coefficients `B(n,k) = C(n,k) lambda_{n,k}` for all
/// `0 <= k <= n <= n_max`.
///
/// `B(n, .)` is a probability vector over {0..n}; each row is validated to
/// sum to 1 within [`ROW_SUM_TOL`] at construction.
#[derive(Debug, Clone)]
pub struct LambdaTable {
    delta: f64,
    blam: Vec<Vec<f64>>,
}

impl LambdaTable {
    pub fn new(delta: f64, n_max: u32) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::invalid(format!("delta = {delta} outside (0, 1]")));
        }
        if n_max as u64 > DUAL_STATE_CAP {
            return Err(Error::invalid(format!(
                "n_max = {n_max} exceeds supported cap {DUAL_STATE_CAP}"
            )));
        }
        let mut blam = Vec::with_capacity(n_max as usize + 1);
        for n in 0..=n_max {
            let row = Self::weighted_row(n, delta);
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::ContractViolation(format!(
                    "coefficient row n = {n} sums to {sum}"
                )));
            }
            blam.push(row);
        }
        Ok(LambdaTable { delta, blam })
    }

    /// `B(n, k) = sum_{j=k}^n T(n,j)` with
    /// `T(n,j) = C(n,j) delta^j (1-delta)^(n-j) / (j+1)`, the binomial pmf
    /// damped by `1/(j+1)`. T is anchored in log space at the binomial mode
    /// and extended by exact multiplicative ratios, so every entry keeps full
    /// relative accuracy without overflow at any order.
    fn weighted_row(n: u32, delta: f64) -> Vec<f64> {
        let len = n as usize + 1;
        if delta == 1.0 {
            // Only j = n survives: every B(n,k) equals 1/(n+1).
            return vec![1.0 / len as f64; len];
        }
        let nf = n as f64;
        let mut t = vec![0.0_f64; len];
        let anchor = (((nf + 1.0) * delta) as usize).min(n as usize);
        let af = anchor as f64;
        let ln_c = ln_gamma(nf + 1.0) - ln_gamma(af + 1.0) - ln_gamma(nf - af + 1.0);
        t[anchor] =
            (ln_c + af * delta.ln() + (nf - af) * (1.0 - delta).ln() - (af + 1.0).ln()).exp();
        for j in anchor..n as usize {
            let jf = j as f64;
            t[j + 1] = t[j] * delta * (nf - jf) / ((1.0 - delta) * (jf + 2.0));
        }
        for j in (0..anchor).rev() {
            let jf = j as f64;
            t[j] = t[j + 1] * (1.0 - delta) * (jf + 2.0) / (delta * (nf - jf));
        }
        // The anchor constant is the only inexact factor and scales the row
        // uniformly; pin it through the exact identity
        // sum_j (j+1) T(n,j) = 1 (binomial theorem).
        let scale: f64 = t
            .iter()
            .enumerate()
            .map(|(j, &v)| (j as f64 + 1.0) * v)
            .sum();
        for v in &mut t {
            *v /= scale;
        }
        let mut b = vec![0.0_f64; len];
        let mut acc = 0.0;
        for j in (0..len).rev() {
            acc += t[j];
            b[j] = acc;
        }
        b
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn n_max(&self) -> u32 {
        self.blam.len() as u32 - 1
    }

    /// Weighted coefficient `C(n,k) lambda_{n,k}`.
    pub fn binom_lambda(&self, n: u32, k: u32) -> f64 {
        self.blam[n as usize][k as usize]
    }

    /// Bare coefficient `lambda_{n,k}`, recomputed on demand.
    pub fn lambda(&self, n: u32, k: u32) -> Result<f64> {
        lambda_coeff(n, k, self.delta)
    }
}

/// A dual-chain state: a particle count or the cemetery.
///
/// The derived order puts counts first in numeric order and the cemetery
/// last, which is the layout transition rows use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DualState {
    Count(u64),
    Cemetery,
}

impl DualState {
    pub fn count(self) -> Option<u64> {
        match self {
            DualState::Count(m) => Some(m),
            DualState::Cemetery => None,
        }
    }

    pub fn is_absorbing_for_duality(self) -> bool {
        matches!(self, DualState::Count(0) | DualState::Cemetery)
    }

    /// `z^state` with the conventions `z^0 = 1` and `z^cemetery = 0`.
    pub fn z_pow(self, z: f64) -> f64 {
        match self {
            DualState::Count(m) => z.powi(m as i32),
            DualState::Cemetery => 0.0,
        }
    }
}

/// One sparse transition row: destinations in ascending order (cemetery last
/// when present), probabilities summing to 1.
#[derive(Debug, Clone)]
pub struct TransitionRow {
    pub source: u64,
    pub dests: Vec<(DualState, f64)>,
    /// Numerical mass shortfall that was folded into the stay probability,
    /// always below [`ROW_SUM_TOL`].
    pub folded: f64,
}

impl TransitionRow {
    fn from_parts(source: u64, mut dests: Vec<(DualState, f64)>) -> Result<Self> {
        dests.retain(|&(_, p)| p != 0.0);
        for &(d, p) in &dests {
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::ContractViolation(format!(
                    "row {source}: probability {p} to {d:?}"
                )));
            }
        }
        dests.sort_by(|a, b| a.0.cmp(&b.0));
        let sum: f64 = dests.iter().map(|&(_, p)| p).sum();
        let folded = 1.0 - sum;
        if folded.abs() > ROW_SUM_TOL {
            return Err(Error::ContractViolation(format!(
                "row {source} sums to {sum}, off by more than {ROW_SUM_TOL}"
            )));
        }
        // Keep the row exactly stochastic: assign the shortfall to the stay
        // entry (creating it if absent).
        let stay = DualState::Count(source);
        match dests.iter_mut().find(|(d, _)| *d == stay) {
            Some(entry) => entry.1 += folded,
            None => {
                dests.push((stay, folded));
                dests.sort_by(|a, b| a.0.cmp(&b.0));
            }
        }
        Ok(TransitionRow {
            source,
            dests,
            folded,
        })
    }

    pub fn probability_to(&self, dest: DualState) -> f64 {
        self.dests
            .iter()
            .find(|&&(d, _)| d == dest)
            .map(|&(_, p)| p)
            .unwrap_or(0.0)
    }

    /// Expectation of `z^destination` under this row.
    pub fn expectation_z_pow(&self, z: f64) -> f64 {
        self.dests.iter().map(|&(d, p)| p * d.z_pow(z)).sum()
    }

    /// Inverse-CDF draw over the ascending destinations.
    pub fn sample(&self, stream: &mut ReplicateStream) -> DualState {
        let u = stream.uniform();
        let mut acc = 0.0;
        for &(d, p) in &self.dests {
            acc += p;
            if u < acc {
                return d;
            }
        }
        self.dests.last().expect("non-empty row").0
    }
}

/// Transition rows of the neutral dual for every state in {1..m}: the chain
/// stays with probability `lambda_{n,0} + n lambda_{n,1}` and drops to
/// `n - k + 1` with probability `C(n,k) lambda_{n,k}` for `2 <= k <= n`.
/// Destinations never exceed the source.
pub fn neutral_dual_matrix(m: u32, delta: f64) -> Result<Vec<TransitionRow>> {
    if m < 1 {
        return Err(Error::invalid("neutral dual needs m >= 1"));
    }
    let table = LambdaTable::new(delta, m)?;
    (1..=m)
        .map(|n| {
            let mut dests = Vec::with_capacity(n as usize);
            dests.push((
                DualState::Count(n as u64),
                table.binom_lambda(n, 0) + table.binom_lambda(n, 1),
            ));
            for k in 2..=n {
                dests.push((
                    DualState::Count((n - k + 1) as u64),
                    table.binom_lambda(n, k),
                ));
            }
            TransitionRow::from_parts(n as u64, dests)
        })
        .collect()
}

/// Outcome of a neutral duality check: a forward Monte Carlo moment against
/// the exact dual expectation.
#[derive(Debug, Clone, Copy)]
pub struct NeutralDualityCheck {
    /// Monte Carlo estimate of the forward moment `E_z[Z_n^m]`.
    pub lhs: f64,
    /// Exact dual expectation `E_m[z^(M_n)]` by matrix powers.
    pub rhs: f64,
    /// Standard error of `lhs`.
    pub stderr: f64,
}

/// Certifies `E_z[Z_n^m] = E_m[z^(M_n)]` for the neutral chain: the forward
/// side by `reps` simulated chains, the dual side exactly by applying the
/// transition matrix `n` times to the point mass at `m`.
pub fn duality_check_neutral(
    z: f64,
    m: u32,
    n: u64,
    delta: f64,
    reps: u64,
    master_seed: u64,
) -> Result<NeutralDualityCheck> {
    check_unit(z, "z")?;
    if m < 1 {
        return Err(Error::invalid("duality check needs m >= 1"));
    }
    if reps == 0 {
        return Err(Error::invalid("duality check needs reps >= 1"));
    }
    let rows = neutral_dual_matrix(m, delta)?;
    // Distribution over states 1..=m, index state-1.
    let mut dist = vec![0.0_f64; m as usize];
    dist[m as usize - 1] = 1.0;
    for _ in 0..n {
        let mut next = vec![0.0_f64; m as usize];
        for (src_idx, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for &(d, p) in &rows[src_idx].dests {
                let dest = d.count().expect("neutral dual has no cemetery") as usize;
                next[dest - 1] += mass * p;
            }
        }
        dist = next;
    }
    let rhs: f64 = dist
        .iter()
        .enumerate()
        .map(|(i, &mass)| mass * z.powi(i as i32 + 1))
        .sum();

    let drift = DriftSpec::identity();
    let (sum, sum_sq) = engine::parallel_replicates(
        master_seed,
        reps,
        |stream: &mut ReplicateStream| {
            let mut state = z;
            for _ in 0..n {
                state = chains::chain_step(delta, &drift, state, stream)?;
            }
            let v = state.powi(m as i32);
            Ok((v, v * v))
        },
        (0.0_f64, 0.0_f64),
        |acc, v| (acc.0 + v.0, acc.1 + v.1),
    )?;
    let r = reps as f64;
    let lhs = sum / r;
    let var = (sum_sq / r - lhs * lhs).max(0.0);
    Ok(NeutralDualityCheck {
        lhs,
        rhs,
        stderr: (var / r).sqrt(),
    })
}

/// Parameters of the selection-with-mutation dual: replacement cap, mutation
/// strengths, and the truncated selection series with its induced jump law.
#[derive(Debug, Clone)]
pub struct FtwDualParams {
    delta: f64,
    theta0: f64,
    theta1: f64,
    sigma: Vec<f64>,
    /// `rho[i-1]` is the probability of selective range `i`, on {1..J}.
    rho: Vec<f64>,
}

impl FtwDualParams {
    /// Validates the standing assumption (coefficients positive,
    /// non-increasing, `(2 delta/3)(sigma_0 + theta0 + theta1) < 1`) and
    /// builds the range distribution `rho_i = (sigma_(i-1) - sigma_i)/sigma_0`
    /// with the truncation convention `sigma_J = 0`.
    pub fn new(delta: f64, theta0: f64, theta1: f64, sigma: Vec<f64>) -> Result<Self> {
        // Shares the validation rules with the forward drift.
        DriftSpec::fittest_type_wins(sigma.clone(), theta0, theta1, delta)?;
        let rho = if sigma.is_empty() {
            Vec::new()
        } else {
            let sigma0 = sigma[0];
            let mut rho: Vec<f64> = (0..sigma.len())
                .map(|i| {
                    let next = sigma.get(i + 1).copied().unwrap_or(0.0);
                    (sigma[i] - next) / sigma0
                })
                .collect();
            let total: f64 = rho.iter().sum();
            if (total - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::ContractViolation(format!(
                    "range distribution sums to {total}"
                )));
            }
            // Zero differences (repeated coefficients) contribute nothing.
            while rho.last() == Some(&0.0) {
                rho.pop();
            }
            rho
        };
        Ok(FtwDualParams {
            delta,
            theta0,
            theta1,
            sigma,
            rho,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    pub fn theta1(&self) -> f64 {
        self.theta1
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn sigma0(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    /// `delta_0 = 2 delta / 3`, the event-intensity scale.
    pub fn delta0(&self) -> f64 {
        2.0 * self.delta / 3.0
    }

    pub fn theta(&self) -> f64 {
        self.theta0 + self.theta1
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    /// Largest selective range J (0 when selection is absent).
    pub fn max_range(&self) -> u64 {
        self.rho.len() as u64
    }

    /// Mean selective range `sum_k k rho_k`.
    pub fn branching_mean(&self) -> f64 {
        self.rho
            .iter()
            .enumerate()
            .map(|(i, r)| (i as f64 + 1.0) * r)
            .sum()
    }

    /// The forward drift this dual is in moment duality with.
    pub fn drift(&self) -> DriftSpec {
        DriftSpec::fittest_type_wins(self.sigma.clone(), self.theta0, self.theta1, self.delta)
            .expect("validated at construction")
    }
}

/// Dense cache of dual transition rows for states `1..=max_state`.
#[derive(Debug, Clone)]
pub struct FtwDualTable {
    params: FtwDualParams,
    rows: Vec<TransitionRow>,
}

impl FtwDualTable {
    pub fn new(params: FtwDualParams, max_state: u64) -> Result<Self> {
        if max_state < 1 {
            return Err(Error::invalid("dual table needs max_state >= 1"));
        }
        if max_state > DUAL_STATE_CAP {
            return Err(Error::invalid(format!(
                "max_state = {max_state} exceeds supported cap {DUAL_STATE_CAP}"
            )));
        }
        let table = LambdaTable::new(params.delta, max_state as u32)?;
        let rows = (1..=max_state)
            .map(|m| build_row(m, &params, &table))
            .collect::<Result<Vec<_>>>()?;
        Ok(FtwDualTable { params, rows })
    }

    /// Table sized for paths from states up to `m0_max` over `n` generations:
    /// each generation raises the state by at most the maximum selective
    /// range, so the reachable set is bounded by `m0_max + n * J`.
    pub fn for_simulation(params: FtwDualParams, m0_max: u64, n: u64) -> Result<Self> {
        let bound = m0_max
            .checked_add(n.saturating_mul(params.max_range()))
            .ok_or_else(|| Error::invalid("reachability bound overflows"))?;
        FtwDualTable::new(params, bound.max(1))
    }

    pub fn params(&self) -> &FtwDualParams {
        &self.params
    }

    pub fn max_state(&self) -> u64 {
        self.rows.len() as u64
    }

    pub fn row(&self, m: u64) -> Result<&TransitionRow> {
        if m < 1 || m > self.max_state() {
            return Err(Error::invalid(format!(
                "state {m} outside cached range 1..={}",
                self.max_state()
            )));
        }
        Ok(&self.rows[m as usize - 1])
    }
}

/// One transition row of the selection-with-mutation dual at state `m`.
///
/// Five families: stay; down-jumps combining deleterious mutation, neutral
/// merging, and selective overshoot; up-jumps of range at most J (exact, the
/// range law has finite support after truncation); and the cemetery move
/// with probability `delta_0 theta_1 (1 - lambda_{m,0})`.
pub fn ftw_dual_row(m: u64, params: &FtwDualParams) -> Result<TransitionRow> {
    if m < 1 {
        return Err(Error::invalid("dual row needs m >= 1"));
    }
    if m > DUAL_STATE_CAP {
        return Err(Error::invalid(format!("state {m} exceeds cap {DUAL_STATE_CAP}")));
    }
    let table = LambdaTable::new(params.delta, m as u32)?;
    build_row(m, params, &table)
}

fn build_row(m: u64, params: &FtwDualParams, table: &LambdaTable) -> Result<TransitionRow> {
    let mu = m as u32;
    let d0 = params.delta0();
    let s0 = params.sigma0();
    let neutral_w = 1.0 - d0 * (params.theta() + s0);
    let rho = params.rho();
    let j_max = rho.len() as u64;
    let b = |k: u32| table.binom_lambda(mu, k);
    // rho_{i} for i >= 1; zero outside the support.
    let rho_at = |i: u64| {
        if i >= 1 && i <= j_max {
            rho[i as usize - 1]
        } else {
            0.0
        }
    };

    let mut dests: Vec<(DualState, f64)> = Vec::with_capacity(m as usize + rho.len() + 2);

    let mut stay = b(0) + neutral_w * b(1);
    if s0 > 0.0 {
        for k in 2..=mu.min((j_max + 1) as u32) {
            stay += d0 * s0 * b(k) * rho_at(k as u64 - 1);
        }
    }
    dests.push((DualState::Count(m), stay));

    for j in 1..=mu {
        let mut p = params.theta0 * d0 * b(j);
        if j + 1 <= mu {
            p += neutral_w * b(j + 1);
        }
        if s0 > 0.0 {
            let k_hi = mu.min(j + 1 + j_max as u32);
            for k in (j + 2)..=k_hi {
                p += d0 * s0 * b(k) * rho_at((k - j - 1) as u64);
            }
        }
        dests.push((DualState::Count(m - j as u64), p));
    }

    if s0 > 0.0 {
        for j in 1..=j_max {
            let k_hi = mu.min((j_max - j + 1) as u32);
            let mut p = 0.0;
            for k in 1..=k_hi {
                p += d0 * s0 * b(k) * rho_at(j + k as u64 - 1);
            }
            dests.push((DualState::Count(m + j), p));
        }
    }

    dests.push((DualState::Cemetery, d0 * params.theta1 * (1.0 - b(0))));

    TransitionRow::from_parts(m, dests)
}

/// Simulates the dual for `n` generations; the path has `n + 1` entries.
/// States 0 and the cemetery are absorbing.
pub fn ftw_dual_simulate(
    m0: DualState,
    table: &FtwDualTable,
    n: u64,
    stream: &mut ReplicateStream,
) -> Result<Vec<DualState>> {
    let mut path = Vec::with_capacity(n as usize + 1);
    let mut state = m0;
    path.push(state);
    for _ in 0..n {
        state = match state {
            DualState::Cemetery | DualState::Count(0) => state,
            DualState::Count(m) => table.row(m)?.sample(stream),
        };
        path.push(state);
    }
    Ok(path)
}

/// Outcome of a two-sided Monte Carlo duality check for the
/// selection-with-mutation pair.
#[derive(Debug, Clone, Copy)]
pub struct FtwDualityCheck {
    /// Forward estimate of `E_z[Z_n^m]`.
    pub lhs: f64,
    /// Dual estimate of `E_m[z^(M_n)]` with `z^cemetery = 0`.
    pub rhs: f64,
    pub stderr_lhs: f64,
    pub stderr_rhs: f64,
}

/// Certifies the selection-with-mutation duality by Monte Carlo on both
/// sides with matched budgets: `reps` forward chains started at `z` against
/// `reps` dual chains started at `m`.
pub fn duality_check_ftw(
    z: f64,
    m: u64,
    n: u64,
    params: &FtwDualParams,
    reps: u64,
    master_seed: u64,
) -> Result<FtwDualityCheck> {
    check_unit(z, "z")?;
    if m < 1 {
        return Err(Error::invalid("duality check needs m >= 1"));
    }
    if reps == 0 {
        return Err(Error::invalid("duality check needs reps >= 1"));
    }
    let drift = params.drift();
    let delta = params.delta();
    let (fwd_sum, fwd_sq) = engine::parallel_replicates(
        engine::lane_seed(master_seed, 0),
        reps,
        |stream: &mut ReplicateStream| {
            let mut state = z;
            for _ in 0..n {
                state = chains::chain_step(delta, &drift, state, stream)?;
            }
            let v = state.powi(m as i32);
            Ok((v, v * v))
        },
        (0.0_f64, 0.0_f64),
        |acc, v| (acc.0 + v.0, acc.1 + v.1),
    )?;
    let table = FtwDualTable::for_simulation(params.clone(), m, n)?;
    let (bwd_sum, bwd_sq) = engine::parallel_replicates(
        engine::lane_seed(master_seed, 1),
        reps,
        |stream: &mut ReplicateStream| {
            let path = ftw_dual_simulate(DualState::Count(m), &table, n, stream)?;
            let v = path.last().expect("non-empty").z_pow(z);
            Ok((v, v * v))
        },
        (0.0_f64, 0.0_f64),
        |acc, v| (acc.0 + v.0, acc.1 + v.1),
    )?;
    let r = reps as f64;
    let lhs = fwd_sum / r;
    let rhs = bwd_sum / r;
    let var_l = (fwd_sq / r - lhs * lhs).max(0.0);
    let var_r = (bwd_sq / r - rhs * rhs).max(0.0);
    Ok(FtwDualityCheck {
        lhs,
        rhs,
        stderr_lhs: (var_l / r).sqrt(),
        stderr_rhs: (var_r / r).sqrt(),
    })
}

/// Exact absorption probability `h(m) = P_m(reach 0 before the cemetery)`
/// for the mutation-only dual (`sigma` absent), by the first-step triangular
/// solve `h(j) = [sum_i P(j -> j-i) h(j-i)] / (1 - P(j -> j))`, `h(0) = 1`.
///
/// This equals the m-th moment of the stationary law of the mutation-only
/// forward chain.
pub fn absorption_prob_exact(m: u64, delta: f64, theta0: f64, theta1: f64) -> Result<f64> {
    if !(theta0 > 0.0 && theta1 > 0.0) {
        return Err(Error::invalid("absorption solve needs theta0 > 0 and theta1 > 0"));
    }
    if m == 0 {
        return Ok(1.0);
    }
    let params = FtwDualParams::new(delta, theta0, theta1, Vec::new())?;
    let table = LambdaTable::new(delta, m as u32)?;
    let mut h = vec![1.0_f64; m as usize + 1];
    for j in 1..=m {
        let row = build_row(j, &params, &table)?;
        let mut num = 0.0;
        let mut stay = 0.0;
        for &(d, p) in &row.dests {
            match d {
                DualState::Count(c) if c == j => stay = p,
                DualState::Count(c) if c < j => num += p * h[c as usize],
                DualState::Count(c) => {
                    return Err(Error::ContractViolation(format!(
                        "mutation-only dual moved up from {j} to {c}"
                    )))
                }
                DualState::Cemetery => {}
            }
        }
        let denom = 1.0 - stay;
        if !(denom > 0.0) {
            return Err(Error::ContractViolation(format!(
                "absorption solve singular at state {j}"
            )));
        }
        h[j as usize] = num / denom;
    }
    Ok(h[m as usize])
}
