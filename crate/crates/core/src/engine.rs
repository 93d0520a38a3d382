//! Deterministic randomness, replicate orchestration, and the parallelism
//! contract every simulation module relies on.
//!
//! Every replicate owns a [`ReplicateStream`] derived from
//! `(master_seed, replicate_index)`. Streams with equal keys are bit-identical;
//! streams with distinct replicate indices are independent ChaCha streams.
//! Parallel batches gather per-replicate outputs and reduce them in ascending
//! replicate-index order, so floating-point aggregates do not depend on the
//! thread count.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::{Error, Result};

const SEED_TAG: [u8; 24] = *b"wf-replicate-stream.v1\0\0";
const F64_FROM_53: f64 = 1.0 / (1u64 << 53) as f64;

/// Counter-based random stream for one replicate.
///
/// ChaCha8 in stream-cipher counter mode: the key carries the master seed, the
/// 64-bit stream id carries the replicate index. Two streams with the same
/// `(master_seed, replicate_index)` produce identical output sequences.
#[derive(Debug, Clone)]
pub struct ReplicateStream {
    master_seed: u64,
    replicate_index: u64,
    rng: ChaCha8Rng,
}

impl ReplicateStream {
    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn replicate_index(&self) -> u64 {
        self.replicate_index
    }

    /// Next uniform draw, strictly inside (0,1), with 53 random bits.
    ///
    /// The offset keeps draws off both endpoints, so indicator tests of the
    /// form `v > 1 - q` are exact at q = 0 (never fires) and q = 1 (always
    /// fires), which makes absorbing boundaries absorbing bit-exactly.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * F64_FROM_53
    }

    #[inline]
    pub fn uniform_pair(&mut self) -> (f64, f64) {
        (self.uniform(), self.uniform())
    }

    #[inline]
    pub fn uniform_triple(&mut self) -> (f64, f64, f64) {
        (self.uniform(), self.uniform(), self.uniform())
    }
}

impl RngCore for ReplicateStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}

/// Derives the deterministic stream for one replicate of one experiment.
pub fn derive_stream(master_seed: u64, replicate_index: u64) -> ReplicateStream {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..].copy_from_slice(&SEED_TAG);
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(replicate_index);
    ReplicateStream {
        master_seed,
        replicate_index,
        rng,
    }
}

/// Derives an independent master seed for a named lane of an experiment.
///
/// Experiments with several independent sampling phases (a reference sample
/// and a chain sample, say) give each phase its own lane so replicate indices
/// never collide across phases.
pub fn lane_seed(master_seed: u64, lane: u64) -> u64 {
    // splitmix64 finalizer; bijective per lane, avalanche mixes every bit.
    let mut z = master_seed ^ lane.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs `count` replicate jobs in parallel and reduces their outputs in
/// ascending replicate-index order.
///
/// The reduction order is fixed, so the aggregate is identical at any thread
/// count. `count = 0` returns the identity element. A failing job aborts the
/// whole batch and reports its replicate index.
pub fn parallel_replicates<T, A, J, R>(
    master_seed: u64,
    count: u64,
    job: J,
    identity: A,
    mut reduce: R,
) -> Result<A>
where
    T: Send,
    J: Fn(&mut ReplicateStream) -> Result<T> + Sync,
    R: FnMut(A, T) -> A,
{
    let outputs = parallel_collect(master_seed, count, job)?;
    let mut acc = identity;
    for out in outputs {
        acc = reduce(acc, out);
    }
    Ok(acc)
}

/// Runs `count` replicate jobs in parallel and returns their outputs ordered
/// by replicate index.
pub fn parallel_collect<T, J>(master_seed: u64, count: u64, job: J) -> Result<Vec<T>>
where
    T: Send,
    J: Fn(&mut ReplicateStream) -> Result<T> + Sync,
{
    let run = |index: u64| -> std::result::Result<T, (u64, Error)> {
        let mut stream = derive_stream(master_seed, index);
        job(&mut stream).map_err(|e| (index, e))
    };
    (0..count)
        .into_par_iter()
        .map(run)
        .collect::<std::result::Result<Vec<T>, (u64, Error)>>()
        .map_err(|(index, e)| Error::ReplicateFailed {
            index,
            message: e.to_string(),
        })
}

/// Applies `f` to every element of `items` in parallel.
///
/// Entry point for the data-parallel inner loops of particle systems; each
/// element must carry its own stream, so the result does not depend on the
/// execution order.
pub fn parallel_for_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync,
{
    items
        .par_iter_mut()
        .enumerate()
        .for_each(|(i, item)| f(i, item));
}

/// Runs `f` inside a dedicated thread pool of the given size.
///
/// `threads = None` uses all logical cores. All determinism guarantees hold at
/// any pool size.
pub fn run_with_threads<T, F>(threads: Option<usize>, f: F) -> T
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().expect("thread pool construction");
    pool.install(f)
}
