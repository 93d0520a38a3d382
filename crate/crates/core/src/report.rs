//! Deterministic text output: CSV tables with fixed headers for every
//! experiment artifact. All numbers are formatted with Rust's shortest
//! round-trip float notation, so identical runs emit identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use crate::chains::HeterozygosityPoint;
use crate::diffusion::{ErgodicRate, ScalingCheck};
use crate::kernel::GridDensity;
use crate::meanfield::ChaosPoint;
use crate::nonlinear::{GapSeries, LawFlow};
use crate::stats::SampleVector;
use crate::{Error, Result};

/// Histogram bin count used by distribution snapshots.
pub const HISTOGRAM_BINS: usize = 100;

fn csv<I, R>(header: &str, rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: AsRef<str>,
{
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        out.push_str(row.as_ref());
        out.push('\n');
    }
    out
}

/// `z,g`: cell midpoints and density values of a grid law.
pub fn density_csv(grid: &GridDensity) -> String {
    let mids = grid.midpoints();
    csv(
        "z,g",
        grid.densities()
            .iter()
            .zip(&mids)
            .map(|(g, z)| format!("{z},{g}")),
    )
}

/// `k,moment`: raw moments indexed from 1.
pub fn moments_csv(moments: &[f64]) -> String {
    csv(
        "k,moment",
        moments
            .iter()
            .enumerate()
            .map(|(i, m)| format!("{},{m}", i + 1)),
    )
}

/// One duality comparison cell.
#[derive(Debug, Clone)]
pub struct DualityRow {
    pub z: f64,
    pub m: u64,
    pub n: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub stderr: f64,
    pub pass: bool,
}

/// `z,m,n,lhs,rhs,stderr,pass`: forward Monte Carlo against the dual value.
pub fn duality_csv(rows: &[DualityRow]) -> String {
    csv(
        "z,m,n,lhs,rhs,stderr,pass",
        rows.iter().map(|r| {
            format!(
                "{},{},{},{},{},{},{}",
                r.z, r.m, r.n, r.lhs, r.rhs, r.stderr, r.pass
            )
        }),
    )
}

/// `m,delta,h`: absorption values by block count and step scale.
pub fn absorption_csv(rows: &[(u64, f64, f64)]) -> String {
    csv(
        "m,delta,h",
        rows.iter().map(|(m, delta, h)| format!("{m},{delta},{h}")),
    )
}

/// `n,z`: one sampled trajectory.
pub fn path_csv(path: &[f64]) -> String {
    csv(
        "n,z",
        path.iter().enumerate().map(|(n, z)| format!("{n},{z}")),
    )
}

/// `n,z,density`: the law flow, one block of rows per generation.
pub fn law_flow_csv(flow: &LawFlow) -> String {
    let mut out = String::from("n,z,density\n");
    for n in 0..=flow.generations() {
        let grid = flow.density(n);
        let mids = grid.midpoints();
        for (g, z) in grid.densities().iter().zip(&mids) {
            let _ = writeln!(out, "{n},{z},{g}");
        }
    }
    out
}

/// `n,mean,var`: moment trajectory of a law flow or sampled chain family.
pub fn moment_series_csv(rows: &[(u64, f64, f64)]) -> String {
    csv(
        "n,mean,var",
        rows.iter().map(|(n, mean, var)| format!("{n},{mean},{var}")),
    )
}

/// `n,mean,stderr`: heterozygosity trajectory with Monte Carlo errors.
pub fn heterozygosity_csv(points: &[HeterozygosityPoint]) -> String {
    csv(
        "n,mean,stderr",
        points
            .iter()
            .map(|p| format!("{},{},{}", p.n, p.mean, p.stderr)),
    )
}

/// `n,gap,stderr`: coupled-chain gap trajectory.
pub fn gap_csv(series: &GapSeries) -> String {
    csv(
        "n,gap,stderr",
        series
            .gap
            .iter()
            .zip(&series.stderr)
            .enumerate()
            .map(|(n, (g, s))| format!("{n},{g},{s}")),
    )
}

/// `M,n,w1,stderr`: transport error of the M-host empirical law at
/// generation n.
pub fn chaos_csv(points: &[ChaosPoint], n: u64) -> String {
    csv(
        "M,n,w1,stderr",
        points
            .iter()
            .map(|p| format!("{},{n},{},{}", p.hosts, p.w1, p.stderr)),
    )
}

/// `N,w1,stderr`: scaling-limit comparison per diffusive scale.
pub fn scaling_csv(check: &ScalingCheck) -> String {
    csv(
        "N,w1,stderr",
        check
            .points
            .iter()
            .map(|p| format!("{},{},{}", p.big_n, p.w1, p.stderr)),
    )
}

/// `t,w1`: distance to the invariant law over time.
pub fn ergodic_csv(rate: &ErgodicRate) -> String {
    csv(
        "t,w1",
        rate.points.iter().map(|p| format!("{},{}", p.t, p.w1)),
    )
}

/// Equal-width histogram of a sample over [0,1].
#[derive(Debug, Clone)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn from_sample(sample: &SampleVector, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::invalid("histogram needs at least one bin"));
        }
        let mut counts = vec![0u64; bins];
        for &v in sample.values() {
            // Values exactly at 1 land in the last bin.
            let i = ((v * bins as f64) as usize).min(bins - 1);
            counts[i] += 1;
        }
        let edges = (0..=bins).map(|i| i as f64 / bins as f64).collect();
        Ok(Histogram { edges, counts })
    }
}

/// `bin_left,bin_right,count`: histogram of a terminal sample.
pub fn histogram_csv(sample: &SampleVector, bins: usize) -> Result<String> {
    let hist = Histogram::from_sample(sample, bins)?;
    Ok(csv(
        "bin_left,bin_right,count",
        hist.counts
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{},{},{c}", hist.edges[i], hist.edges[i + 1])),
    ))
}

/// `z,pdf`: Beta density overlay on the histogram's bin midpoints.
pub fn beta_overlay_csv(a: f64, b: f64, bins: usize) -> Result<String> {
    if bins == 0 {
        return Err(Error::invalid("overlay needs at least one point"));
    }
    for (name, v) in [("a", a), ("b", b)] {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::invalid(format!("beta shape {name} = {v} must be positive")));
        }
    }
    Ok(csv(
        "z,pdf",
        (0..bins).map(|i| {
            let z = (i as f64 + 0.5) / bins as f64;
            format!("{z},{}", crate::stats::beta_pdf(z, a, b))
        }),
    ))
}

/// Writes UTF-8 text, creating parent directories as needed.
pub fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| Error::invalid(format!("creating {}: {e}", parent.display())))?;
    }
    std::fs::write(path, content)
        .map_err(|e| Error::invalid(format!("writing {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_csv_shape() {
        let grid = GridDensity::uniform(4).unwrap();
        let text = density_csv(&grid);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "z,g");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1], "0.125,1");
        assert_eq!(lines[4], "0.875,1");
    }

    #[test]
    fn duality_and_absorption_headers() {
        let rows = [DualityRow {
            z: 0.5,
            m: 2,
            n: 3,
            lhs: 0.25,
            rhs: 0.26,
            stderr: 0.01,
            pass: true,
        }];
        let text = duality_csv(&rows);
        assert_eq!(text, "z,m,n,lhs,rhs,stderr,pass\n0.5,2,3,0.25,0.26,0.01,true\n");
        let text = absorption_csv(&[(2, 0.5, 0.75)]);
        assert_eq!(text, "m,delta,h\n2,0.5,0.75\n");
    }

    #[test]
    fn histogram_counts_complete_and_boundary_lands_inside() {
        let sample = SampleVector::new(vec![0.0, 0.1, 0.999, 1.0, 0.5]).unwrap();
        let hist = Histogram::from_sample(&sample, 10).unwrap();
        assert_eq!(hist.counts.iter().sum::<u64>(), 5);
        assert_eq!(hist.counts[9], 2, "0.999 and 1.0 share the last bin");
        // Bins are half-open, so the edge value 0.1 falls in the second bin.
        assert_eq!(hist.counts[0], 1);
        assert_eq!(hist.counts[1], 1);
        assert_eq!(hist.counts[5], 1);
        let text = histogram_csv(&sample, 10).unwrap();
        assert!(text.starts_with("bin_left,bin_right,count\n0,0.1,1\n"));
        assert_eq!(text.lines().count(), 11);
    }

    #[test]
    fn overlay_is_positive_and_deterministic() {
        let a = beta_overlay_csv(1.6, 1.2, HISTOGRAM_BINS).unwrap();
        let b = beta_overlay_csv(1.6, 1.2, HISTOGRAM_BINS).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), HISTOGRAM_BINS + 1);
        for line in a.lines().skip(1) {
            let pdf: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            assert!(pdf > 0.0);
        }
    }

    #[test]
    fn law_flow_csv_blocks() {
        let mu0 = GridDensity::uniform(8).unwrap();
        let drift = crate::nonlinear::NonLinearDriftSpec::affine_in_mean(0.2, 0.1, 0.3).unwrap();
        let flow = crate::nonlinear::law_flow(&mu0, 0.5, &drift, 2).unwrap();
        let text = law_flow_csv(&flow);
        assert_eq!(text.lines().count(), 1 + 3 * 8);
        assert!(text.starts_with("n,z,density\n0,"));
    }

    #[test]
    fn file_writer_round_trips() {
        let dir = std::env::temp_dir().join("wf-report-test");
        let path = dir.join("nested/out.csv");
        write_text(&path, "a,b\n1,2\n").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "a,b\n1,2\n");
        std::fs::remove_dir_all(&dir).ok();
    }
}
