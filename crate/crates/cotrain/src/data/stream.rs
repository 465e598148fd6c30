//! Infinite batch streams and bundles.
//!
//! A [`Stream`] interleaves a labeled and an unlabeled pool into fixed-size
//! batches. Each pool is an endless concatenation of seeded permutations
//! (reshuffled on exhaustion), so within one pass every pool index appears
//! exactly once. The supervised rows per batch follow the proportional
//! share `batch·|S|/|D|`, realized with integer Bresenham rounding: any two
//! batches differ by at most one supervised row, and long-run proportions
//! are exact.
//!
//! A [`StreamBundle`] is a pair of streams that draw their supervised rows
//! in different orders but share the unlabeled schedule: at iteration `t`
//! both streams produce bit-identical unlabeled batches. That shared
//! schedule is realized by seeding both unlabeled cursors identically, so
//! the property holds per-iteration even if one stream runs ahead.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use std::sync::Arc;

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// splitmix64-style seed derivation: one base seed, many decorrelated
/// component seeds.
pub(crate) fn mix_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Endless seeded permutation walk over `0..len`.
#[derive(Debug, Clone)]
struct PoolCursor {
    order: Vec<usize>,
    pos: usize,
    rng: StdRng,
}

impl PoolCursor {
    fn new(len: usize, seed: u64) -> Self {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        Self { order, pos: 0, rng }
    }

    fn next_n(&mut self, n: usize) -> Vec<usize> {
        assert!(n == 0 || !self.order.is_empty(), "draw from an empty pool");
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// One training batch: supervised rows plus shared unlabeled rows.
///
/// `x_s`/`x_u` are `None` exactly when the corresponding part is empty;
/// the two part sizes always add up to the configured batch size. The
/// index vectors record which pool rows were drawn, which diagnostics and
/// coverage checks rely on.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x_s: Option<Tensor>,
    pub y_s: Vec<usize>,
    pub x_u: Option<Tensor>,
    pub s_indices: Vec<usize>,
    pub u_indices: Vec<usize>,
}

impl Batch {
    pub fn supervised_count(&self) -> usize {
        self.s_indices.len()
    }

    pub fn unlabeled_count(&self) -> usize {
        self.u_indices.len()
    }
}

/// An infinite deterministic sequence of batches over one labeled pool and
/// one (possibly absent) unlabeled pool.
#[derive(Debug, Clone)]
pub struct Stream {
    labeled_data: Arc<Dataset>,
    unlabeled_data: Option<Arc<Dataset>>,
    labeled: PoolCursor,
    unlabeled: PoolCursor,
    batch_size: usize,
    iteration: u64,
    seed: u64,
}

impl Stream {
    fn new(
        labeled_data: Arc<Dataset>,
        unlabeled_data: Option<Arc<Dataset>>,
        batch_size: usize,
        labeled_seed: u64,
        unlabeled_seed: u64,
    ) -> Self {
        let u_len = unlabeled_data.as_ref().map_or(0, |d| d.len());
        Self {
            labeled: PoolCursor::new(labeled_data.len(), labeled_seed),
            unlabeled: PoolCursor::new(u_len, unlabeled_seed),
            labeled_data,
            unlabeled_data,
            batch_size,
            iteration: 0,
            seed: labeled_seed,
        }
    }

    /// The stream's own (supervised-order) seed.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn s_len(&self) -> usize {
        self.labeled_data.len()
    }

    fn u_len(&self) -> usize {
        self.unlabeled_data.as_ref().map_or(0, |d| d.len())
    }

    /// Supervised rows in batch `t`: `floor((t+1)q) - floor(tq)` with
    /// `q = batch·|S|/|D|`, so counts take only the two values `{⌊q⌋, ⌈q⌉}`.
    fn supervised_count_at(&self, t: u64) -> usize {
        let num = self.batch_size as u128 * self.s_len() as u128;
        let den = (self.s_len() + self.u_len()) as u128;
        let t = t as u128;
        (((t + 1) * num) / den - (t * num) / den) as usize
    }

    /// Draws the next batch; streams never end, pools reshuffle on
    /// exhaustion.
    pub fn next_batch(&mut self) -> Batch {
        let b_s = self.supervised_count_at(self.iteration);
        let b_u = self.batch_size - b_s;
        self.iteration += 1;

        let s_indices = self.labeled.next_n(b_s);
        let u_indices = self.unlabeled.next_n(b_u);

        let gather = |data: &Dataset, idx: &[usize]| -> Option<Tensor> {
            if idx.is_empty() {
                return None;
            }
            let rows: Vec<Vec<f64>> = idx.iter().map(|&r| data.features.row(r).to_vec()).collect();
            Some(Tensor::from_rows(&rows).expect("rows from a valid dataset"))
        };
        let x_s = gather(&self.labeled_data, &s_indices);
        let y_s = s_indices
            .iter()
            .map(|&r| self.labeled_data.labels[r].expect("labeled pool"))
            .collect();
        let x_u = self
            .unlabeled_data
            .as_deref()
            .and_then(|d| gather(d, &u_indices));

        Batch {
            x_s,
            y_s,
            x_u,
            s_indices,
            u_indices,
        }
    }
}

/// A pair of streams feeding two views: different supervised orders, one
/// shared unlabeled schedule.
#[derive(Debug, Clone)]
pub struct StreamBundle {
    pub first: Stream,
    pub second: Stream,
}

impl StreamBundle {
    /// One batch from each stream, drawn in lockstep.
    ///
    /// Panics in debug builds if the unlabeled halves ever disagree; they
    /// are constructed from identical schedules.
    pub fn next_pair(&mut self) -> (Batch, Batch) {
        let a = self.first.next_batch();
        let b = self.second.next_batch();
        debug_assert_eq!(
            a.u_indices, b.u_indices,
            "bundle unlabeled schedules diverged"
        );
        (a, b)
    }

    /// Total pool size |S| + |U| behind this bundle.
    pub fn data_len(&self) -> usize {
        self.first.s_len() + self.first.u_len()
    }
}

/// Builds `n_views / 2` independent stream bundles over a split.
///
/// Each bundle gets its own unlabeled schedule and two distinct
/// supervised-order seeds, all derived deterministically from `seed`.
pub fn make_bundles(
    labeled: &Dataset,
    unlabeled: Option<&Dataset>,
    n_views: usize,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<StreamBundle>> {
    if n_views < 2 || !n_views.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "n_views must be an even number >= 2, got {n_views}"
        )));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let labeled = Arc::new(labeled.clone());
    let unlabeled = unlabeled.map(|d| Arc::new(d.clone()));
    let mut bundles = Vec::with_capacity(n_views / 2);
    for i in 0..(n_views / 2) as u64 {
        let shared_unlabeled_seed = mix_seed(seed, 3 * i);
        let first = Stream::new(
            Arc::clone(&labeled),
            unlabeled.clone(),
            batch_size,
            mix_seed(seed, 3 * i + 1),
            shared_unlabeled_seed,
        );
        let second = Stream::new(
            Arc::clone(&labeled),
            unlabeled.clone(),
            batch_size,
            mix_seed(seed, 3 * i + 2),
            shared_unlabeled_seed,
        );
        bundles.push(StreamBundle { first, second });
    }
    Ok(bundles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split, two_moons, SplitSpec};
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn pools(n: usize, n_labeled: usize) -> (Dataset, Option<Dataset>) {
        let d = two_moons(n, 0.1, 42).unwrap();
        let s = split(&d, &SplitSpec { n_labeled, seed: 7 }).unwrap();
        (s.labeled, s.unlabeled)
    }

    #[test]
    fn exact_division_gives_constant_counts() {
        let (s, u) = pools(1000, 100);
        let mut bundles = make_bundles(&s, u.as_ref(), 2, 100, 1).unwrap();
        for _ in 0..30 {
            let (a, _) = bundles[0].next_pair();
            assert_eq!(a.supervised_count(), 10);
            assert_eq!(a.unlabeled_count(), 90);
        }
    }

    #[test]
    fn supervised_counts_spread_at_most_one() {
        // 250 labeled, 750 unlabeled, batch 99: share is 24.75 per batch.
        let (s, u) = pools(1000, 250);
        let mut bundles = make_bundles(&s, u.as_ref(), 2, 99, 3).unwrap();
        let counts: Vec<usize> = (0..40)
            .map(|_| bundles[0].next_pair().0.supervised_count())
            .collect();
        assert!(counts.iter().all(|&c| c == 24 || c == 25));
        let total: usize = counts.iter().take(40).sum();
        assert_eq!(total, ((40u128 * 99 * 250) / 1000) as usize);
    }

    #[test]
    fn unlabeled_halves_are_bit_identical() {
        let (s, u) = pools(600, 60);
        let mut bundles = make_bundles(&s, u.as_ref(), 2, 64, 9).unwrap();
        for _ in 0..25 {
            let (a, b) = bundles[0].next_pair();
            assert_eq!(a.u_indices, b.u_indices);
            match (&a.x_u, &b.x_u) {
                (Some(x), Some(y)) => assert!(x.bits_eq(y)),
                (None, None) => {}
                _ => panic!("one stream produced unlabeled rows, the other none"),
            }
        }
    }

    #[test]
    fn supervised_orders_differ_between_the_two_streams() {
        let (s, u) = pools(600, 60);
        let mut bundles = make_bundles(&s, u.as_ref(), 2, 64, 9).unwrap();
        let mut a_order = Vec::new();
        let mut b_order = Vec::new();
        for _ in 0..10 {
            let (a, b) = bundles[0].next_pair();
            a_order.extend(a.s_indices);
            b_order.extend(b.s_indices);
        }
        assert_ne!(a_order, b_order);
    }

    #[test]
    fn pool_cycles_cover_every_index_exactly_once() {
        let (s, u) = pools(1000, 250);
        let mut bundles = make_bundles(&s, u.as_ref(), 2, 99, 5).unwrap();
        let mut s_drawn = Vec::new();
        let mut u_drawn = Vec::new();
        while s_drawn.len() < 250 || u_drawn.len() < 750 {
            let (a, _) = bundles[0].next_pair();
            s_drawn.extend(a.s_indices);
            u_drawn.extend(a.u_indices);
        }
        let s_cycle: HashSet<usize> = s_drawn[..250].iter().copied().collect();
        let u_cycle: HashSet<usize> = u_drawn[..750].iter().copied().collect();
        assert_eq!(s_cycle.len(), 250);
        assert_eq!(u_cycle.len(), 750);
    }

    #[test]
    fn no_unlabeled_pool_means_fully_supervised_batches() {
        let (s, _) = pools(100, 50);
        let mut bundles = make_bundles(&s, None, 2, 10, 2).unwrap();
        let (a, _) = bundles[0].next_pair();
        assert_eq!(a.supervised_count(), 10);
        assert_eq!(a.unlabeled_count(), 0);
        assert!(a.x_u.is_none());
    }

    #[test]
    fn bundle_count_and_seed_distinctness() {
        let (s, u) = pools(200, 20);
        assert_eq!(make_bundles(&s, u.as_ref(), 2, 10, 0).unwrap().len(), 1);
        let bundles = make_bundles(&s, u.as_ref(), 8, 10, 0).unwrap();
        assert_eq!(bundles.len(), 4);
        let seeds: HashSet<u64> = bundles
            .iter()
            .flat_map(|b| [b.first.seed(), b.second.seed()])
            .collect();
        assert_eq!(seeds.len(), 8);
        assert!(matches!(
            make_bundles(&s, u.as_ref(), 3, 10, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn streams_are_deterministic_in_their_seeds() {
        let (s, u) = pools(300, 30);
        let mut a = make_bundles(&s, u.as_ref(), 2, 32, 77).unwrap();
        let mut b = make_bundles(&s, u.as_ref(), 2, 32, 77).unwrap();
        for _ in 0..12 {
            let (a1, a2) = a[0].next_pair();
            let (b1, b2) = b[0].next_pair();
            assert_eq!(a1.s_indices, b1.s_indices);
            assert_eq!(a2.s_indices, b2.s_indices);
            assert_eq!(a1.u_indices, b1.u_indices);
        }
    }

    proptest! {
        /// Batch composition proportions stay balanced for arbitrary pool
        /// and batch geometry.
        #[test]
        fn bresenham_counts_stay_within_one(
            s_len in 1usize..400,
            u_len in 0usize..1200,
            batch in 1usize..128,
            draws in 1usize..60,
        ) {
            let num = batch as u128 * s_len as u128;
            let den = (s_len + u_len) as u128;
            let counts: Vec<u128> = (0..draws as u128)
                .map(|t| ((t + 1) * num) / den - (t * num) / den)
                .collect();
            let lo = *counts.iter().min().unwrap();
            let hi = *counts.iter().max().unwrap();
            prop_assert!(hi - lo <= 1);
            prop_assert!(hi <= batch as u128);
            // Long-run total is the exact proportional share, floored.
            let total: u128 = counts.iter().sum();
            prop_assert_eq!(total, (draws as u128 * num) / den);
        }
    }
}
