//! Sample statistics shared by every experiment: empirical moments, Monte
//! Carlo error bars, Beta sampling, and exact Wasserstein-1 distances between
//! empirical, gridded, and Beta laws.

use rand::RngCore;
use rand_distr::{Distribution, Gamma};

use crate::kernel::GridDensity;
use crate::{Error, Result};

/// A batch of scalar observations, stored in ascending order.
///
/// Construction validates that every value is finite; order statistics are
/// then available without re-sorting.
#[derive(Debug, Clone)]
pub struct SampleVector {
    values: Vec<f64>,
}

impl SampleVector {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("sample vector must be non-empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sample vector contains a non-finite value"));
        }
        values.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite values"));
        Ok(SampleVector { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Observations in ascending order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    /// Raw moment `E[X^k]`; `k = 0` gives 1.
    pub fn raw_moment(&self, k: u32) -> f64 {
        self.values
            .iter()
            .map(|v| v.powi(k as i32))
            .sum::<f64>()
            / self.len() as f64
    }

    /// Unbiased sample variance; 0 for a single observation.
    pub fn variance(&self) -> f64 {
        if self.len() < 2 {
            return 0.0;
        }
        let m = self.mean();
        self.values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (self.len() as f64 - 1.0)
    }

    /// Monte Carlo standard error of the sample mean.
    pub fn stderr_of_mean(&self) -> f64 {
        (self.variance() / self.len() as f64).sqrt()
    }
}

/// Raw moments `E[X^1] .. E[X^k_max]` of a sample.
pub fn moments_empirical(values: &[f64], k_max: u32) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::invalid("moments require a non-empty sample"));
    }
    if k_max == 0 {
        return Err(Error::invalid("k_max must be at least 1"));
    }
    let n = values.len() as f64;
    let mut sums = vec![0.0; k_max as usize];
    for &v in values {
        let mut p = 1.0;
        for s in sums.iter_mut() {
            p *= v;
            *s += p;
        }
    }
    Ok(sums.into_iter().map(|s| s / n).collect())
}

/// Monte Carlo standard error of the mean of `values`.
pub fn mc_stderr(values: &[f64]) -> Result<f64> {
    Ok(SampleVector::new(values.to_vec())?.stderr_of_mean())
}

/// Exact Wasserstein-1 distance between two empirical laws with the same
/// number of atoms: the mean absolute difference of paired order statistics.
pub fn w1_empirical(a: &SampleVector, b: &SampleVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "empirical W1 needs equal sample sizes, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let sum: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .sum();
    Ok(sum / a.len() as f64)
}

/// Wasserstein-1 distance between `Beta(a1, b1)` and `Beta(a2, b2)` when both
/// share the same total shape mass `a + b`.
///
/// Equal total mass makes the two laws likelihood-ratio ordered, so the
/// distance collapses to the difference of means, `|a1 - a2| / (a1 + b1)`.
pub fn w1_beta_closed(a1: f64, b1: f64, a2: f64, b2: f64) -> Result<f64> {
    for (name, v) in [("a1", a1), ("b1", b1), ("a2", a2), ("b2", b2)] {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::invalid(format!("beta shape {name} = {v} must be positive")));
        }
    }
    let mass1 = a1 + b1;
    let mass2 = a2 + b2;
    if (mass1 - mass2).abs() > 1e-12 {
        return Err(Error::invalid(format!(
            "closed-form beta W1 needs equal shape mass, got {mass1} and {mass2}"
        )));
    }
    Ok((a1 - a2).abs() / mass1)
}

/// Reusable `Beta(a, b)` sampler built from two Gamma draws:
/// `G_a / (G_a + G_b)` with unit scale.
#[derive(Debug, Clone)]
pub struct BetaSampler {
    gamma_a: Gamma<f64>,
    gamma_b: Gamma<f64>,
}

impl BetaSampler {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        for (name, v) in [("a", a), ("b", b)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::invalid(format!("beta shape {name} = {v} must be positive")));
            }
        }
        let gamma_a = Gamma::new(a, 1.0).map_err(|e| Error::invalid(format!("gamma setup: {e}")))?;
        let gamma_b = Gamma::new(b, 1.0).map_err(|e| Error::invalid(format!("gamma setup: {e}")))?;
        Ok(BetaSampler { gamma_a, gamma_b })
    }

    pub fn sample<R: RngCore>(&self, rng: &mut R) -> f64 {
        loop {
            let ga = self.gamma_a.sample(rng);
            let gb = self.gamma_b.sample(rng);
            let sum = ga + gb;
            // Both draws can underflow to zero at small shapes; redraw.
            if sum > 0.0 {
                return ga / sum;
            }
        }
    }
}

/// One `Beta(a, b)` draw from the given stream.
pub fn beta_sample<R: RngCore>(rng: &mut R, a: f64, b: f64) -> Result<f64> {
    Ok(BetaSampler::new(a, b)?.sample(rng))
}

/// Wasserstein-1 distance between an empirical law and a fresh, equally
/// sized exact `Beta(a, b)` sample drawn from the seeded stream.
pub fn w1_beta_sample(sample: &SampleVector, a: f64, b: f64, seed: u64) -> Result<f64> {
    let sampler = BetaSampler::new(a, b)?;
    let mut stream = crate::engine::derive_stream(seed, 0);
    let draws: Vec<f64> = (0..sample.len()).map(|_| sampler.sample(&mut stream)).collect();
    w1_empirical(sample, &SampleVector::new(draws)?)
}

/// Exact Wasserstein-1 distance between an empirical law and a grid density:
/// the integral over [0,1] of the absolute CDF difference.
///
/// The empirical CDF is a right-continuous staircase and the grid CDF is
/// piecewise linear, so the difference is linear between consecutive
/// breakpoints and each piece integrates in closed form.
pub fn w1_sample_vs_grid(sample: &SampleVector, grid: &GridDensity) -> Result<f64> {
    if sample
        .values()
        .iter()
        .any(|&v| !(0.0..=1.0).contains(&v))
    {
        return Err(Error::invalid("sample values must lie in [0, 1]"));
    }
    let n_cells = grid.cell_count();
    let h = 1.0 / n_cells as f64;
    let cum = grid.cumulative_masses();
    let dens = grid.densities();
    let n_s = sample.len() as f64;
    let svals = sample.values();

    let mut total = 0.0;
    let mut z = 0.0_f64;
    let mut cell = 0usize;
    let mut s_idx = 0usize;
    // Empirical CDF value on the interval just right of z.
    let advance_staircase = |z: f64, s_idx: &mut usize| {
        while *s_idx < svals.len() && svals[*s_idx] <= z {
            *s_idx += 1;
        }
        *s_idx as f64 / n_s
    };
    let mut f_s = advance_staircase(0.0, &mut s_idx);
    let mut f_left = cum[0] - f_s;
    loop {
        let next_edge = (cell + 1) as f64 * h;
        let next_sample = if s_idx < svals.len() { svals[s_idx] } else { 2.0 };
        let z_next = next_edge.min(next_sample).min(1.0);
        if z_next > z {
            let grid_cdf = cum[cell] + dens[cell] * (z_next - cell as f64 * h);
            let f_right = grid_cdf - f_s;
            total += segment_abs_integral(f_left, f_right, z_next - z);
            z = z_next;
            f_left = f_right;
        }
        if z >= 1.0 {
            break;
        }
        if z_next == next_sample {
            f_s = advance_staircase(z, &mut s_idx);
            // Staircase jumps down the difference; re-anchor the left value.
            f_left = cum[cell] + dens[cell] * (z - cell as f64 * h) - f_s;
        }
        if z >= next_edge {
            cell += 1;
        }
    }
    Ok(total)
}

/// Integral of `|f|` over an interval of width `w` where `f` is linear with
/// endpoint values `f0`, `f1`.
pub(crate) fn segment_abs_integral(f0: f64, f1: f64, w: f64) -> f64 {
    if f0 * f1 >= 0.0 {
        (f0.abs() + f1.abs()) * w / 2.0
    } else {
        // Sign change splits the interval into two triangles.
        w * (f0 * f0 + f1 * f1) / (2.0 * (f0.abs() + f1.abs()))
    }
}

/// Two-sample Kolmogorov-Smirnov asymptotic p-value. Sorts both inputs.
pub fn ks_two_sample_pvalue(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_unstable_by(|x, y| x.partial_cmp(y).expect("finite values"));
    b.sort_unstable_by(|x, y| x.partial_cmp(y).expect("finite values"));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut d: f64 = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let n_eff = (na * nb / (na + nb)).sqrt();
    let lambda = (n_eff + 0.12 + 0.11 / n_eff) * d;
    let mut p = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        p += sign * 2.0 * (-2.0 * (k as f64 * lambda).powi(2)).exp();
        sign = -sign;
    }
    p.clamp(0.0, 1.0)
}

/// Natural log of the gamma function, Lanczos approximation (g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return pi.ln() - (pi * x).sin().abs().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `Beta(a, b)` density at an interior point; 0 outside (0, 1).
pub fn beta_pdf(x: f64, a: f64, b: f64) -> f64 {
    if !(0.0 < x && x < 1.0) {
        return 0.0;
    }
    let ln_b = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    ((a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_b).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::derive_stream;
    use approx::assert_abs_diff_eq;

    /// Raw moment of Beta(a,b): product over i of (a+i)/(a+b+i).
    fn beta_raw_moment(a: f64, b: f64, k: u32) -> f64 {
        (0..k).map(|i| (a + i as f64) / (a + b + i as f64)).product()
    }

    #[test]
    fn sample_vector_orders_and_summarizes() {
        let s = SampleVector::new(vec![0.3, 0.1, 0.2]).unwrap();
        assert_eq!(s.values(), &[0.1, 0.2, 0.3]);
        assert_abs_diff_eq!(s.mean(), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(s.variance(), 0.01, epsilon = 1e-15);
        assert!(SampleVector::new(vec![]).is_err());
        assert!(SampleVector::new(vec![0.1, f64::NAN]).is_err());
    }

    #[test]
    fn empirical_w1_known_values() {
        let a = SampleVector::new(vec![0.0, 1.0]).unwrap();
        let b = SampleVector::new(vec![0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(w1_empirical(&a, &b).unwrap(), 0.5, epsilon = 1e-15);
        // Shift by a constant moves W1 by exactly that constant.
        let c = SampleVector::new(vec![0.2, 0.7, 0.4]).unwrap();
        let d = SampleVector::new(vec![0.3, 0.8, 0.5]).unwrap();
        assert_abs_diff_eq!(w1_empirical(&c, &d).unwrap(), 0.1, epsilon = 1e-15);
        let e = SampleVector::new(vec![0.1]).unwrap();
        assert!(w1_empirical(&a, &e).is_err());
    }

    #[test]
    fn beta_w1_closed_form_oracles() {
        // Uniform = Beta(1,1) vs Beta(1.5,0.5): means 1/2 and 3/4.
        assert_abs_diff_eq!(w1_beta_closed(1.0, 1.0, 1.5, 0.5).unwrap(), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(
            w1_beta_closed(1.6, 1.2, 2.0, 0.8).unwrap(),
            0.4 / 2.8,
            epsilon = 1e-15
        );
        assert!(w1_beta_closed(1.0, 1.0, 2.0, 1.0).is_err());
        assert!(w1_beta_closed(0.0, 1.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn beta_sampler_matches_first_three_moments() {
        let (a, b) = (1.6, 1.2);
        let sampler = BetaSampler::new(a, b).unwrap();
        let mut stream = derive_stream(2024, 0);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| sampler.sample(&mut stream)).collect();
        assert!(draws.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let moments = moments_empirical(&draws, 3).unwrap();
        let se = mc_stderr(&draws).unwrap();
        for (k, m) in moments.iter().enumerate() {
            let expect = beta_raw_moment(a, b, k as u32 + 1);
            // Moment k has smaller spread than the mean; 5 mean-stderrs is ample.
            assert!(
                (m - expect).abs() < 5.0 * se,
                "moment {} got {m}, expect {expect}",
                k + 1
            );
        }
        // Frozen variance of Beta(1.6, 1.2).
        let var = moments[1] - moments[0] * moments[0];
        assert!((var - 0.064447).abs() < 3e-3, "variance {var}");
    }

    #[test]
    fn beta_third_moment_oracle_value() {
        // Beta(0.3, 0.7): E[X^3] = 0.3/1 * 1.3/2 * 2.3/3 = 0.1495 exactly.
        assert_abs_diff_eq!(beta_raw_moment(0.3, 0.7, 3), 0.1495, epsilon = 1e-15);
        let mut stream = derive_stream(7, 0);
        let sampler = BetaSampler::new(0.3, 0.7).unwrap();
        let draws: Vec<f64> = (0..200_000).map(|_| sampler.sample(&mut stream)).collect();
        let m3 = moments_empirical(&draws, 3).unwrap()[2];
        assert!((m3 - 0.1495).abs() < 5e-3, "third moment {m3}");
    }

    #[test]
    fn ks_separates_shifted_from_identical() {
        let mut s0 = derive_stream(9, 0);
        let mut s1 = derive_stream(9, 1);
        let n = 20_000;
        let mut a: Vec<f64> = (0..n).map(|_| s0.uniform()).collect();
        let mut b: Vec<f64> = (0..n).map(|_| s1.uniform()).collect();
        assert!(ks_two_sample_pvalue(&mut a, &mut b) > 0.01);
        let mut shifted: Vec<f64> = b.iter().map(|x| x * 0.9 + 0.1).collect();
        assert!(ks_two_sample_pvalue(&mut a, &mut shifted) < 1e-6);
    }

    #[test]
    fn ln_gamma_reference_points() {
        assert_abs_diff_eq!(ln_gamma(1.0), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ln_gamma(5.0), 24.0_f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            ln_gamma(0.5),
            std::f64::consts::PI.sqrt().ln(),
            epsilon = 1e-12
        );
        // Recurrence Gamma(x+1) = x Gamma(x) across the reflection split.
        for &x in &[0.1, 0.3, 0.9, 1.7, 6.4] {
            assert_abs_diff_eq!(ln_gamma(x + 1.0), ln_gamma(x) + x.ln(), epsilon = 1e-10);
        }
    }

    #[test]
    fn beta_pdf_integrates_to_one() {
        let (a, b) = (2.0, 0.8);
        let n = 20_000;
        let h = 1.0 / n as f64;
        let mass: f64 = (0..n)
            .map(|i| beta_pdf((i as f64 + 0.5) * h, a, b) * h)
            .sum();
        // Midpoint rule with an integrable edge singularity at 1.
        assert!((mass - 1.0).abs() < 2e-3, "mass {mass}");
    }

    #[test]
    fn segment_integral_handles_sign_change() {
        // f goes 1 -> -1 over width 2: two unit triangles, area 1.
        assert_abs_diff_eq!(segment_abs_integral(1.0, -1.0, 2.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(segment_abs_integral(2.0, 1.0, 1.0), 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(segment_abs_integral(0.0, -3.0, 2.0), 3.0, epsilon = 1e-15);
    }
}
