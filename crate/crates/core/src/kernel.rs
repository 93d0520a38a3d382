//! The two-branch replacement kernel family: one-step sampling, the monotone
//! coupled update functions, invariant-law moments, and the invariant density
//! solver.
//!
//! A step replaces a uniform fraction `delta * U` of the population either
//! with type 0 (probability `p`, moving `x` up to `x + (1-x) delta U`) or with
//! type 1 (moving `x` down to `x (1 - delta U)`).

use num::rational::BigRational;
use num::{One, Zero};

use crate::engine::ReplicateStream;
use crate::exact;
use crate::stats::segment_abs_integral;
use crate::{Error, Result};

pub const DENSITY_GRID_DEFAULT: usize = 2048;
pub const DENSITY_TOL_DEFAULT: f64 = 1e-8;
pub const DENSITY_MAX_ITER_DEFAULT: u64 = 100_000;

/// Parameters of one kernel: replacement-fraction cap `delta` and type-0
/// replacement probability `p`.
///
/// `delta = 0` is admitted and gives the identity kernel; the invariant-law
/// operations reject it separately.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub delta: f64,
    pub p: f64,
}

impl KernelParams {
    pub fn new(delta: f64, p: f64) -> Result<Self> {
        check_unit(delta, "delta")?;
        check_unit(p, "p")?;
        Ok(KernelParams { delta, p })
    }
}

pub(crate) fn check_unit(v: f64, name: &str) -> Result<()> {
    if !v.is_finite() || !(0.0..=1.0).contains(&v) {
        return Err(Error::invalid(format!("{name} = {v} outside [0, 1]")));
    }
    Ok(())
}

/// One kernel transition from `x`, consuming two uniforms.
///
/// Equivalent to `update_sup(p, delta, x, u, v)` with fresh draws: with
/// probability `p` the step is `x + (1-x) delta u`, otherwise `x (1 - delta u)`.
pub fn kernel_step(params: KernelParams, x: f64, stream: &mut ReplicateStream) -> Result<f64> {
    check_unit(x, "x")?;
    let (u, v) = stream.uniform_pair();
    update_sup(params.p, params.delta, x, u, v)
}

/// Lower coupled update: moves down by `x delta u` always, then back up by
/// `delta u` only when both the `q`-branch test and the `p/q` thinning test
/// pass. Requires `p <= q`; with `q = 0` the thinning branch is unreachable
/// (convention `p/q := 1`).
pub fn update_inf(p: f64, q: f64, delta: f64, x: f64, u: f64, v: f64, w: f64) -> Result<f64> {
    check_unit(delta, "delta")?;
    check_unit(p, "p")?;
    check_unit(q, "q")?;
    check_unit(x, "x")?;
    if p > q {
        return Err(Error::invalid(format!("update_inf requires p <= q, got p = {p}, q = {q}")));
    }
    let ratio = if q == 0.0 { 1.0 } else { p / q };
    let up = v > 1.0 - q && w <= ratio;
    Ok(x * (1.0 - delta * u) + if up { delta * u } else { 0.0 })
}

/// Upper coupled update: moves down by `y delta u` always, then back up by
/// `delta u` when the `q`-branch test passes.
pub fn update_sup(q: f64, delta: f64, y: f64, u: f64, v: f64) -> Result<f64> {
    check_unit(delta, "delta")?;
    check_unit(q, "q")?;
    check_unit(y, "y")?;
    let up = v > 1.0 - q;
    Ok(y * (1.0 - delta * u) + if up { delta * u } else { 0.0 })
}

/// One coupled transition with marginals at parameters `p` (for `x`) and `q`
/// (for `y`), sharing all three uniforms.
///
/// The smaller parameter takes the thinned lower update, so the expected gap
/// contracts: `E|X' - Y'| <= |x - y| (1 - delta/2) + |q - p| delta/2`.
/// Always consumes exactly three uniforms.
pub fn coupled_step(
    x: f64,
    y: f64,
    p: f64,
    q: f64,
    delta: f64,
    stream: &mut ReplicateStream,
) -> Result<(f64, f64)> {
    let (u, v, w) = stream.uniform_triple();
    if p <= q {
        let xp = update_inf(p, q, delta, x, u, v, w)?;
        let yp = update_sup(q, delta, y, u, v)?;
        Ok((xp, yp))
    } else {
        let xp = update_sup(p, delta, x, u, v)?;
        let yp = update_inf(q, p, delta, y, u, v, w)?;
        Ok((xp, yp))
    }
}

/// Moments of the invariant law of the kernel at `(delta, p)`.
#[derive(Debug, Clone)]
pub struct InvariantMoments {
    pub delta: f64,
    pub p: f64,
    /// `moments[k]` is the k-th raw moment; `moments[0] = 1`.
    pub moments: Vec<f64>,
}

impl InvariantMoments {
    pub fn variance(&self) -> f64 {
        self.moments[2] - self.moments[1] * self.moments[1]
    }
}

pub const MOMENT_ORDER_MAX: u32 = 64;

/// Raw moments of the invariant law up to order `k_max`, by exact rational
/// recursion.
///
/// Order k satisfies
/// `m_k (1 - lambda_{k,0}) = (p/delta) * sum_{j<k} C(k,j) m_j I(k-j, j)`
/// with `I(a, b)` the integral of `x^a (1-x)^b` over `[0, delta]`. Every
/// coefficient alternates in sign under expansion, so the recursion runs in
/// exact rationals and rounds only the final values.
pub fn invariant_moments(delta: f64, p: f64, k_max: u32) -> Result<InvariantMoments> {
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("invariant law requires delta > 0, got {delta}")));
    }
    if k_max < 1 {
        return Err(Error::invalid("k_max must be at least 1"));
    }
    if k_max > MOMENT_ORDER_MAX {
        return Err(Error::invalid(format!(
            "moment order {k_max} exceeds supported maximum {MOMENT_ORDER_MAX}"
        )));
    }
    let delta_r = exact::unit_rational(delta, "delta")?;
    let p_r = exact::unit_rational(p, "p")?;
    let mut m: Vec<BigRational> = Vec::with_capacity(k_max as usize + 1);
    m.push(BigRational::one());
    for k in 1..=k_max {
        let lam_k0 = exact::lambda_rational(&delta_r, k, 0)?;
        let mut sum = BigRational::zero();
        for (j, mj) in m.iter().enumerate() {
            let j = j as u32;
            let coef = BigRational::from(exact::binomial(k, j));
            sum += coef * mj * exact::int_power_product(&delta_r, k - j, j);
        }
        let rhs = &p_r / &delta_r * sum;
        m.push(rhs / (BigRational::one() - lam_k0));
    }
    Ok(InvariantMoments {
        delta,
        p,
        moments: m.iter().map(exact::ratio_to_f64).collect(),
    })
}

/// Closed-form invariant variance `delta p (1-p) / (3 - delta)`.
pub fn invariant_variance(delta: f64, p: f64) -> f64 {
    delta * p * (1.0 - p) / (3.0 - delta)
}

/// Probability density on the midpoints of a uniform partition of [0,1],
/// piecewise constant on cells.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    values: Vec<f64>,
}

impl GridDensity {
    /// Uniform density on `n` cells.
    pub fn uniform(n: usize) -> Result<Self> {
        GridDensity::from_values(vec![1.0; n])
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("grid density needs at least one cell"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("grid density values must be finite and nonnegative"));
        }
        Ok(GridDensity { values })
    }

    /// Density whose cell masses are given (masses need not be normalized).
    pub fn from_cell_masses(masses: Vec<f64>) -> Result<Self> {
        let n = masses.len() as f64;
        GridDensity::from_values(masses.into_iter().map(|m| m * n).collect())
    }

    pub fn cell_count(&self) -> usize {
        self.values.len()
    }

    pub fn cell_width(&self) -> f64 {
        1.0 / self.values.len() as f64
    }

    pub fn densities(&self) -> &[f64] {
        &self.values
    }

    pub fn midpoints(&self) -> Vec<f64> {
        let h = self.cell_width();
        (0..self.values.len()).map(|i| (i as f64 + 0.5) * h).collect()
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_width()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let mass = self.mass();
        if !(mass > 0.0) {
            return Err(Error::invalid(format!("cannot normalize density with mass {mass}")));
        }
        for v in &mut self.values {
            *v /= mass;
        }
        Ok(())
    }

    /// Raw moment `E[Z^k]`, integrating `z^k` exactly over each cell.
    pub fn moment(&self, k: u32) -> f64 {
        let h = self.cell_width();
        let e = k as i32 + 1;
        self.values
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let lo = i as f64 * h;
                let hi = lo + h;
                g * (hi.powi(e) - lo.powi(e)) / e as f64
            })
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    /// Cumulative masses at the `n + 1` cell edges.
    pub fn cumulative_masses(&self) -> Vec<f64> {
        let h = self.cell_width();
        let mut cum = Vec::with_capacity(self.values.len() + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        for v in &self.values {
            acc += v * h;
            cum.push(acc);
        }
        cum
    }

    /// CDF at `z`, linear within each cell.
    pub fn cdf(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        if z >= 1.0 {
            return self.mass();
        }
        let h = self.cell_width();
        let i = ((z / h) as usize).min(self.values.len() - 1);
        let below: f64 = self.values[..i].iter().sum::<f64>() * h;
        below + self.values[i] * (z - i as f64 * h)
    }

    /// Inverse-CDF point at probability level `q` of the normalized law.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::invalid(format!("quantile level {q} outside [0, 1]")));
        }
        Ok(self.sampler()?.quantile(q))
    }

    /// Reusable inverse-CDF sampler over the normalized law.
    pub fn sampler(&self) -> Result<GridSampler> {
        let mut cum = self.cumulative_masses();
        let total = *cum.last().expect("non-empty");
        if !(total > 0.0) {
            return Err(Error::invalid("cannot sample from a zero-mass density"));
        }
        for c in &mut cum {
            *c /= total;
        }
        Ok(GridSampler {
            cum,
            h: self.cell_width(),
        })
    }

    /// Exact Wasserstein-1 distance to another density on the same grid:
    /// integral of the absolute CDF difference, piecewise linear per cell.
    pub fn w1(&self, other: &GridDensity) -> Result<f64> {
        if self.cell_count() != other.cell_count() {
            return Err(Error::invalid(format!(
                "W1 of grid densities needs matching grids, got {} and {} cells",
                self.cell_count(),
                other.cell_count()
            )));
        }
        let h = self.cell_width();
        let ca = self.cumulative_masses();
        let cb = other.cumulative_masses();
        let mut total = 0.0;
        for i in 0..self.cell_count() {
            total += segment_abs_integral(ca[i] - cb[i], ca[i + 1] - cb[i + 1], h);
        }
        Ok(total)
    }

    /// Exact L1 distance between the two piecewise-constant densities.
    pub fn l1_distance(&self, other: &GridDensity) -> Result<f64> {
        if self.cell_count() != other.cell_count() {
            return Err(Error::invalid("L1 of grid densities needs matching grids"));
        }
        let h = self.cell_width();
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs() * h)
            .sum())
    }
}

/// Inverse-CDF sampler for a [`GridDensity`], with cumulative masses
/// precomputed and normalized.
#[derive(Debug, Clone)]
pub struct GridSampler {
    cum: Vec<f64>,
    h: f64,
}

impl GridSampler {
    pub fn quantile(&self, q: f64) -> f64 {
        // Last edge with cum <= q; CDF is linear on the following cell.
        let i = match self
            .cum
            .binary_search_by(|c| c.partial_cmp(&q).expect("finite"))
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        if i >= self.cum.len() - 1 {
            return 1.0;
        }
        let span = self.cum[i + 1] - self.cum[i];
        if span <= 0.0 {
            // Zero-mass cell: jump to its left edge.
            return (i as f64) * self.h;
        }
        ((i as f64) + (q - self.cum[i]) / span) * self.h
    }

    pub fn sample(&self, stream: &mut ReplicateStream) -> f64 {
        self.quantile(stream.uniform())
    }
}

/// Invariant density solve outcome: the normalized density plus convergence
/// diagnostics.
#[derive(Debug, Clone)]
pub struct DensitySolve {
    pub density: GridDensity,
    pub iterations: u64,
    pub residual: f64,
}

/// Internal resolution target: the Picard sweeps are O(cells), so the
/// equation is solved on a refined grid and restricted by cell-averaging.
/// The density's boundary behavior (singular derivative) makes midpoint
/// collocation converge like h^1.1 in L1; refinement buys that accuracy back
/// for coarse requested grids at negligible cost.
const DENSITY_SOLVE_TARGET: usize = 32_768;

/// Solves the invariant-density integral equation
/// `g(z) = ((1-p)/delta) * int_z^{min(z/(1-delta),1)} g(x)/x dx
///       + (p/delta) * int_{max((z-delta)/(1-delta),0)}^z g(x)/(1-x) dx`
/// by fixed-point sweeps on a midpoint grid.
///
/// Each sweep costs O(cells) using prefix sums of per-cell log weights; the
/// 1/x and 1/(1-x) factors integrate in closed form per cell, so the endpoint
/// singularities never enter the quadrature. The iterate is renormalized to
/// unit mass every sweep; convergence is sup-norm change below `tol`.
/// Internally the solve runs on a grid refined toward
/// [`DENSITY_SOLVE_TARGET`] cells and the result is cell-averaged down to
/// `grid_size`; the reported residual is the fine-grid residual.
pub fn invariant_density(
    delta: f64,
    p: f64,
    grid_size: usize,
    tol: f64,
    max_iter: u64,
) -> Result<DensitySolve> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!(
            "density solver requires delta in (0,1), got {delta}"
        )));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("density solver requires p in (0,1), got {p}")));
    }
    if grid_size < 64 {
        return Err(Error::invalid(format!("grid_size {grid_size} below minimum 64")));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::invalid("tol must be positive and max_iter nonzero"));
    }

    let refine = (DENSITY_SOLVE_TARGET / grid_size).max(1);
    let n = grid_size * refine;
    let h = 1.0 / n as f64;
    let edge = |j: usize| j as f64 * h;
    let mid = |i: usize| (i as f64 + 0.5) * h;
    // Per-cell closed-form weights for the 1/x and 1/(1-x) factors.
    // Cell 0 is never a full interior cell of the first integral, nor cell
    // n-1 of the second, so the log arguments stay positive.
    let w_low: Vec<f64> = (0..n)
        .map(|j| if j == 0 { 0.0 } else { (edge(j + 1) / edge(j)).ln() })
        .collect();
    let w_high: Vec<f64> = (0..n)
        .map(|j| {
            if j == n - 1 {
                0.0
            } else {
                ((1.0 - edge(j)) / (1.0 - edge(j + 1))).ln()
            }
        })
        .collect();
    let c_down = (1.0 - p) / delta;
    let c_up = p / delta;
    let shrink = 1.0 - delta;

    // The integration ranges and their partial-cell log weights do not depend
    // on the iterate; precompute them so each sweep is pure arithmetic.
    // First term integrates g(x)/x over [z, b1], b1 = min(z/(1-delta), 1);
    // second integrates g(x)/(1-x) over [a2, z], a2 = max((z-delta)/(1-delta), 0).
    struct CellPlan {
        j1: usize,
        t1_same: f64,
        t1_lo: f64,
        t1_hi: f64,
        j2: usize,
        t2_same: f64,
        t2_lo: f64,
        t2_hi: f64,
    }
    let plan: Vec<CellPlan> = (0..n)
        .map(|i| {
            let z = mid(i);
            let b1 = (z / shrink).min(1.0);
            let j1 = ((b1 / h) as usize).min(n - 1);
            let a2 = ((z - delta) / shrink).max(0.0);
            let j2 = ((a2 / h) as usize).min(n - 1);
            CellPlan {
                j1,
                t1_same: (b1 / z).ln(),
                t1_lo: (edge(i + 1) / z).ln(),
                t1_hi: if j1 == i { 0.0 } else { (b1 / edge(j1)).ln() },
                j2,
                t2_same: ((1.0 - a2) / (1.0 - z)).ln(),
                t2_lo: ((1.0 - edge(i)) / (1.0 - z)).ln(),
                t2_hi: if j2 == i {
                    0.0
                } else {
                    ((1.0 - a2) / (1.0 - edge(j2 + 1))).ln()
                },
            }
        })
        .collect();

    let mut g = vec![1.0; n];
    let mut g_new = vec![0.0; n];
    // Prefix[j] = sum over cells m < j of g_m * w_low[m]; suffix analogous.
    let mut prefix = vec![0.0; n + 1];
    let mut suffix = vec![0.0; n + 1];
    let mut residual = f64::INFINITY;

    for iter in 1..=max_iter {
        for j in 0..n {
            prefix[j + 1] = prefix[j] + g[j] * w_low[j];
        }
        for j in (0..n).rev() {
            suffix[j] = suffix[j + 1] + g[j] * w_high[j];
        }
        for (i, pl) in plan.iter().enumerate() {
            let t1 = if pl.j1 == i {
                g[i] * pl.t1_same
            } else {
                g[i] * pl.t1_lo + (prefix[pl.j1] - prefix[i + 1]) + g[pl.j1] * pl.t1_hi
            };
            let t2 = if pl.j2 == i {
                g[i] * pl.t2_same
            } else {
                g[pl.j2] * pl.t2_hi + (suffix[pl.j2 + 1] - suffix[i]) + g[i] * pl.t2_lo
            };
            g_new[i] = c_down * t1 + c_up * t2;
        }
        let mass: f64 = g_new.iter().sum::<f64>() * h;
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::ContractViolation(format!(
                "density sweep produced mass {mass} at iteration {iter}"
            )));
        }
        residual = 0.0_f64;
        for i in 0..n {
            g_new[i] /= mass;
            residual = residual.max((g_new[i] - g[i]).abs());
        }
        std::mem::swap(&mut g, &mut g_new);
        if residual < tol {
            let coarse: Vec<f64> = g
                .chunks_exact(refine)
                .map(|c| c.iter().sum::<f64>() / refine as f64)
                .collect();
            return Ok(DensitySolve {
                density: GridDensity::from_values(coarse)?,
                iterations: iter,
                residual,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual,
    })
}
