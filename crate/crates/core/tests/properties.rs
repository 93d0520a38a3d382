//! Standalone property suites: coupling monotonicity at scale, dual row-sum
//! conservation, byte-identical determinism across thread counts, and
//! density-propagation mass and mean checks.

use proptest::prelude::*;

use wf_core::engine::{self, derive_stream};
use wf_core::kernel::{self, GridDensity};
use wf_core::nonlinear::{self, LawView, NonLinearDriftSpec};
use wf_core::stats::{self, SampleVector};
use wf_core::{duals, DriftSpec, FtwDualParams, LambdaTable};

/// The monotone coupling never lets the lower chain overtake the upper one:
/// for x <= y, p <= q and shared driving noise, the thinned lower update
/// stays below the upper update. One million random tuples, zero violations.
#[test]
fn coupling_monotonicity_one_million_tuples() {
    let mut stream = derive_stream(0x7421, 0);
    for i in 0..1_000_000u64 {
        let (mut x, mut y) = stream.uniform_pair();
        if x > y {
            std::mem::swap(&mut x, &mut y);
        }
        let (mut p, mut q) = stream.uniform_pair();
        if p > q {
            std::mem::swap(&mut p, &mut q);
        }
        let delta = stream.uniform();
        let (u, v, w) = stream.uniform_triple();
        let lo = kernel::update_inf(p, q, delta, x, u, v, w).unwrap();
        let hi = kernel::update_sup(q, delta, y, u, v).unwrap();
        assert!(
            lo <= hi,
            "violation at tuple {i}: inf {lo} > sup {hi} \
             (x={x}, y={y}, p={p}, q={q}, delta={delta})"
        );
        assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
    }
}

/// The coupled one-step API preserves initial order regardless of which
/// parameter is larger, and replaying its stream through the raw update
/// functions reproduces both outputs bitwise.
#[test]
fn coupled_step_order_and_replay() {
    let mut stream = derive_stream(0x7422, 0);
    let mut replay = derive_stream(0x7422, 0);
    for _ in 0..100_000u64 {
        let (mut x, mut y) = stream.uniform_pair();
        let (mut rx, mut ry) = replay.uniform_pair();
        if x > y {
            std::mem::swap(&mut x, &mut y);
            std::mem::swap(&mut rx, &mut ry);
        }
        let (p, q) = stream.uniform_pair();
        let (rp, rq) = replay.uniform_pair();
        let delta = stream.uniform();
        let rdelta = replay.uniform();
        let (xn, yn) = kernel::coupled_step(x, y, p, q, delta, &mut stream).unwrap();
        let (ru, rv, rw) = replay.uniform_triple();
        let (ex, ey) = if rp <= rq {
            (
                kernel::update_inf(rp, rq, rdelta, rx, ru, rv, rw).unwrap(),
                kernel::update_sup(rq, rdelta, ry, ru, rv).unwrap(),
            )
        } else {
            (
                kernel::update_sup(rp, rdelta, rx, ru, rv).unwrap(),
                kernel::update_inf(rq, rp, rdelta, ry, ru, rv, rw).unwrap(),
            )
        };
        assert_eq!(xn.to_bits(), ex.to_bits());
        assert_eq!(yn.to_bits(), ey.to_bits());
        if p <= q {
            assert!(xn <= yn, "order lost: {xn} > {yn}");
        }
    }
}

/// Dual transition weights conserve probability mass: for every state up to
/// 20 and a spread of replacement scales, the raw weighted row sums sit
/// within 1e-12 of one, both for the neutral merger rows and for the
/// branching rows with selection and mutation.
#[test]
fn dual_row_sums_conserve_mass() {
    let deltas = [0.05, 0.17, 0.3, 0.5, 0.77, 0.93, 1.0];
    for &delta in &deltas {
        let table = LambdaTable::new(delta, 20).unwrap();
        for n in 1..=20u32 {
            let sum: f64 = (0..=n).map(|k| table.binom_lambda(n, k)).sum();
            assert!(
                (sum - 1.0).abs() < 1e-12,
                "weighted row n={n}, delta={delta}: sum {sum}"
            );
        }
        for row in duals::neutral_dual_matrix(20, delta).unwrap() {
            assert!(
                row.folded.abs() < 1e-12,
                "neutral row {} at delta={delta}: shortfall {}",
                row.source,
                row.folded
            );
        }
    }
    let params = FtwDualParams::new(0.4, 0.3, 0.2, vec![0.3, 0.15]).unwrap();
    for m in 1..=20u64 {
        let row = duals::ftw_dual_row(m, &params).unwrap();
        assert!(
            row.folded.abs() < 1e-12,
            "branching row {m}: shortfall {}",
            row.folded
        );
    }
}

/// The same seed produces byte-identical results at every thread-pool size,
/// for an embarrassingly parallel chain sample and for a particle system
/// whose generations share a frozen empirical mean.
#[test]
fn determinism_byte_identical_across_thread_counts() {
    let run_chains = |threads: usize| -> Vec<f64> {
        engine::run_with_threads(Some(threads), || {
            let drift = DriftSpec::fittest_type_wins(vec![0.3, 0.15], 0.3, 0.2, 0.4).unwrap();
            engine::parallel_collect(0xD17E, 20_000, |stream| {
                Ok(wf_core::chains::simulate_chain(0.4, &drift, 0.3, 25, stream)?.terminal())
            })
            .unwrap()
        })
    };
    let run_hosts = |threads: usize| -> Vec<f64> {
        engine::run_with_threads(Some(threads), || {
            let drift = NonLinearDriftSpec::affine_in_mean(0.2, 0.1, 0.3).unwrap();
            let mu0 = GridDensity::uniform(64).unwrap();
            let state = wf_core::meanfield::system_run(
                256,
                0.5,
                &drift,
                &mu0,
                50,
                &mut derive_stream(0xD17F, 0),
            )
            .unwrap();
            state.frequencies
        })
    };
    let base_chains = run_chains(1);
    let base_hosts = run_hosts(1);
    for threads in [2, 4, 8] {
        assert_eq!(run_chains(threads), base_chains, "{threads} threads");
        assert_eq!(run_hosts(threads), base_hosts, "{threads} threads");
    }
    // Rerun at an already-used pool size: bytes again, through the CSV layer.
    let again = run_chains(4);
    let csv_a = wf_core::report::histogram_csv(&SampleVector::new(base_chains).unwrap(), 100);
    let csv_b = wf_core::report::histogram_csv(&SampleVector::new(again).unwrap(), 100);
    assert_eq!(csv_a.unwrap().into_bytes(), csv_b.unwrap().into_bytes());
}

/// Law propagation conserves mass to near machine precision over many
/// generations and drives the mean along its closed-form recursion
/// `mu' = mu + (delta/2)(a + (b + c - 1) mu)`.
#[test]
fn density_propagation_mass_and_mean() {
    let (a, b, c, delta) = (0.2, 0.1, 0.3, 0.5);
    let drift = NonLinearDriftSpec::affine_in_mean(a, b, c).unwrap();
    let mut law = GridDensity::uniform(kernel::DENSITY_GRID_DEFAULT).unwrap();
    let mut mean = law.mean();
    for gen in 0..30 {
        law = nonlinear::propagate_law(&law, delta, &drift).unwrap();
        assert!(
            (law.mass() - 1.0).abs() < 1e-10,
            "generation {gen}: mass {}",
            law.mass()
        );
        mean += delta / 2.0 * (a + (b + c - 1.0) * mean);
        // Per-step quadrature error of the two-point cell rule is ~1e-8 at
        // this resolution; 30 generations stay well under 1e-6.
        assert!(
            (law.mean() - mean).abs() < 1e-6,
            "generation {gen}: mean {} vs recursion {mean}",
            law.mean()
        );
    }
    // The flow's fixed point sits at the stationary mean a / (1 - b - c).
    let (invariant, _sweeps) =
        nonlinear::flow_to_fixed_point(&law, delta, &drift, 1e-12, 10_000).unwrap();
    assert!(
        (invariant.mean() - a / (1.0 - b - c)).abs() < 1e-4,
        "fixed-point mean {}",
        invariant.mean()
    );
    assert!((invariant.mass() - 1.0).abs() < 1e-9);
}

/// Every uniform draw is strictly interior, so indicator comparisons at the
/// boundaries are never ambiguous.
#[test]
fn uniform_draws_strictly_interior() {
    let mut stream = derive_stream(0x7423, 0);
    for _ in 0..1_000_000u64 {
        let u = stream.uniform();
        assert!(u > 0.0 && u < 1.0);
    }
}

proptest! {
    /// Single-parameter updates map [0,1] x noise into [0,1] for any valid
    /// parameter combination.
    #[test]
    fn updates_stay_in_unit_interval(
        p in 0.0..=1.0f64,
        q in 0.0..=1.0f64,
        delta in 0.0..=1.0f64,
        x in 0.0..=1.0f64,
        u in 1e-12..1.0f64,
        v in 1e-12..1.0f64,
        w in 1e-12..1.0f64,
    ) {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        let a = kernel::update_inf(lo, hi, delta, x, u, v, w).unwrap();
        let b = kernel::update_sup(hi, delta, x, u, v).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((0.0..=1.0).contains(&b));
        prop_assert!(a <= b);
    }

    /// Empirical W1 is symmetric exactly and satisfies the triangle
    /// inequality within floating-point slack on random triples.
    #[test]
    fn w1_metric_axioms(
        xs in prop::collection::vec(0.0..=1.0f64, 24),
        ys in prop::collection::vec(0.0..=1.0f64, 24),
        zs in prop::collection::vec(0.0..=1.0f64, 24),
    ) {
        let a = SampleVector::new(xs).unwrap();
        let b = SampleVector::new(ys).unwrap();
        let c = SampleVector::new(zs).unwrap();
        let ab = stats::w1_empirical(&a, &b).unwrap();
        let ba = stats::w1_empirical(&b, &a).unwrap();
        prop_assert_eq!(ab.to_bits(), ba.to_bits());
        let ac = stats::w1_empirical(&a, &c).unwrap();
        let cb = stats::w1_empirical(&c, &b).unwrap();
        prop_assert!(ab <= ac + cb + 1e-12);
        prop_assert!(stats::w1_empirical(&a, &a).unwrap() == 0.0);
    }

    /// One kernel step from a Lipschitz drift moves the state by at most
    /// delta, so paths cannot jump across the interval.
    #[test]
    fn kernel_step_increment_bounded_by_delta(
        q in 0.0..=1.0f64,
        delta in 0.0..=1.0f64,
        y in 0.0..=1.0f64,
        u in 1e-12..1.0f64,
        v in 1e-12..1.0f64,
    ) {
        let next = kernel::update_sup(q, delta, y, u, v).unwrap();
        prop_assert!((next - y).abs() <= delta + 1e-15);
    }

    /// Drift evaluation agrees between a mean view and any law view carrying
    /// the same mean for drifts declared mean-only.
    #[test]
    fn mean_only_views_agree(
        x in 0.0..=1.0f64,
        lo in 0.0..=0.5f64,
        spread in 0.0..=0.5f64,
    ) {
        let drift = NonLinearDriftSpec::affine_in_mean(0.2, 0.1, 0.3).unwrap();
        let pair = [lo, lo + spread];
        let mean = lo + spread / 2.0;
        let via_mean = drift.eval(x, &LawView::Mean(mean)).unwrap();
        let via_emp = drift.eval(x, &LawView::Empirical(&pair)).unwrap();
        prop_assert!((via_mean - via_emp).abs() < 1e-12);
    }
}
