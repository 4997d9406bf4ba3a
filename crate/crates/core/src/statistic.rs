//! Studentized differences of conditional frequencies and their suprema.
//!
//! For a member `h` on a pair `(g1, g2)` the difference is
//! `φ̂ = P̂(h·g2)/P̂(g2) − P̂(h·g1)/P̂(g1)` and its variance estimate is
//! `σ̂² = T_n · Σ_k p_k (1 − p_k) / N_k`, where `p_k` is the conditional frequency
//! of `|h|` in cell `g_k` and `N_k` the cell size. Cells without observations
//! contribute zero to both. The statistic at trimming value `ξ` is the
//! supremum of `√T_n φ̂ / max(ξ, σ̂)` over every index.

use std::borrow::Cow;
use std::ops::Range;

use rayon::prelude::*;

use crate::model::{Dataset, NuMeasure};
use crate::spaces::{Block, CountTable, IndexKey, IndexLayout, IntervalIndex, Member, PairFamily};

/// Target number of indices per parallel work item. Fixed, so the partition
/// (and with it every reduction) does not depend on the worker count.
const SEGMENT_TARGET: usize = 1 << 16;

/// Λ̂ (product of cell frequencies over the family's Λ cells) and `T_n = n·Λ̂`.
pub fn compute_lambda_t(table: &CountTable, family: &PairFamily) -> (f64, f64) {
    let n = table.total() as f64;
    if n == 0.0 {
        return (0.0, 0.0);
    }
    let lambda: f64 = family
        .lambda_cells()
        .iter()
        .map(|&c| table.cell_total(c) as f64 / n)
        .product();
    (lambda, n * lambda)
}

/// `sqrt(1/4 · max over pairs {Λ̂/P̂(g2) + Λ̂/P̂(g1)})`, with empty cells contributing 0.
pub fn empirical_sigma_bound(table: &CountTable, family: &PairFamily, lambda_hat: f64) -> f64 {
    let n = table.total() as f64;
    let term = |cell: usize| {
        let count = table.cell_total(cell) as f64;
        if count == 0.0 {
            0.0
        } else {
            lambda_hat * n / count
        }
    };
    let worst = family
        .pairs()
        .iter()
        .map(|p| term(p.g1) + term(p.g2))
        .fold(0.0, f64::max);
    (0.25 * worst).sqrt()
}

/// Counts of one member on one pair, arranged as cumulative arrays over
/// outcome ranks. Threshold members are a single pseudo-interval.
pub(crate) struct LevelCounts<'a> {
    pub c1: Cow<'a, [u32]>,
    pub c2: Cow<'a, [u32]>,
    pub inv1: f64,
    pub inv2: f64,
    pub sign: f64,
}

impl LevelCounts<'_> {
    pub(crate) fn new<'a>(family: &PairFamily, table: &'a CountTable, block: &Block) -> LevelCounts<'a> {
        let pair = &family.pairs()[block.pair];
        let inv = |cell: usize| {
            let n = table.cell_total(cell);
            if n == 0 {
                0.0
            } else {
                1.0 / n as f64
            }
        };
        let (c1, c2, sign) = match block.member {
            Member::Interval { d, sign } => (
                Cow::Borrowed(table.cumulative(pair.g1, d)),
                Cow::Borrowed(table.cumulative(pair.g2, d)),
                sign as f64,
            ),
            Member::Threshold { c } => (
                Cow::Owned(vec![0, table.at_most(pair.g1, c)]),
                Cow::Owned(vec![0, table.at_most(pair.g2, c)]),
                1.0,
            ),
        };
        LevelCounts {
            c1,
            c2,
            inv1: inv(pair.g1),
            inv2: inv(pair.g2),
            sign,
        }
    }

    /// Number of distinct outcome ranks covered (1 for a threshold).
    pub(crate) fn m(&self) -> usize {
        self.c1.len() - 1
    }

    /// `(φ̂, σ̂)` for the interval `[lo, hi]`.
    #[inline(always)]
    pub(crate) fn eval(&self, lo: usize, hi: usize, t_n: f64) -> (f64, f64) {
        let a1 = (self.c1[hi + 1] - self.c1[lo]) as f64;
        let a2 = (self.c2[hi + 1] - self.c2[lo]) as f64;
        phi_sigma(a1, a2, self.inv1, self.inv2, self.sign, t_n)
    }
}

#[inline(always)]
pub(crate) fn phi_sigma(a1: f64, a2: f64, inv1: f64, inv2: f64, sign: f64, t_n: f64) -> (f64, f64) {
    let p1 = a1 * inv1;
    let p2 = a2 * inv2;
    let phi = sign * (p2 - p1);
    let var = t_n * (p2 * (1.0 - p2) * inv2 + p1 * (1.0 - p1) * inv1);
    (phi, var.max(0.0).sqrt())
}

/// A block of flat indices restricted to a range of interval rows.
#[derive(Debug, Clone)]
pub(crate) struct Segment {
    pub block: usize,
    pub rows: Range<usize>,
    /// flat index of the first interval in the segment
    pub start: usize,
    pub len: usize,
}

pub(crate) fn segments(layout: &IndexLayout) -> Vec<Segment> {
    let m = layout.m();
    let chunk_rows = (SEGMENT_TARGET / m.max(1)).max(1);
    let mut out = Vec::new();
    for (b, block) in layout.blocks().iter().enumerate() {
        match block.member {
            Member::Threshold { .. } => out.push(Segment {
                block: b,
                rows: 0..1,
                start: block.offset,
                len: 1,
            }),
            Member::Interval { .. } => {
                let mut lo = 0;
                while lo < m {
                    let hi = (lo + chunk_rows).min(m);
                    let start = block.offset + layout.row_offset(lo);
                    let end = block.offset + layout.row_offset(hi);
                    out.push(Segment {
                        block: b,
                        rows: lo..hi,
                        start,
                        len: end - start,
                    });
                    lo = hi;
                }
            }
        }
    }
    out
}

/// Marks a supremum attained only by members that vanish on the sample.
pub const VANISHING: usize = usize::MAX;

/// Per-ξ suprema with the first index (in layout order) attaining each.
///
/// Every family also contains members that are zero on the whole sample
/// (a dominance threshold below the smallest treatment, an interval between
/// two adjacent observations), so each supremum is at least 0. When no
/// enumerated index exceeds 0 the argmax is [`VANISHING`].
#[derive(Debug, Clone, PartialEq)]
pub struct SupSummary {
    pub xis: Vec<f64>,
    pub sup: Vec<f64>,
    pub argmax: Vec<usize>,
}

impl SupSummary {
    pub(crate) fn empty(xis: &[f64]) -> Self {
        Self {
            xis: xis.to_vec(),
            sup: vec![0.0; xis.len()],
            argmax: vec![VANISHING; xis.len()],
        }
    }

    /// Merges a later segment; ties keep the earlier index.
    pub(crate) fn absorb(&mut self, later: &SupSummary) {
        for k in 0..self.sup.len() {
            if later.sup[k] > self.sup[k] {
                self.sup[k] = later.sup[k];
                self.argmax[k] = later.argmax[k];
            }
        }
    }

    /// Smallest running maximum; no index whose ratio bound is at most this can change any entry.
    #[inline]
    pub(crate) fn floor(&self) -> f64 {
        self.sup.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Updates with ratio numerator `r` and standard error `sigma` at index `flat`.
    /// `xis` is sorted ascending.
    #[inline(always)]
    pub(crate) fn offer(&mut self, r: f64, sigma: f64, flat: usize, floor: &mut f64) {
        let xi_lo = self.xis[0];
        let xi_hi = self.xis[self.xis.len() - 1];
        let bound = if r >= 0.0 {
            r / xi_lo.max(sigma)
        } else {
            r / xi_hi.max(sigma)
        };
        if bound <= *floor {
            return;
        }
        let mut changed = false;
        for k in 0..self.xis.len() {
            let v = r / self.xis[k].max(sigma);
            if v > self.sup[k] {
                self.sup[k] = v;
                self.argmax[k] = flat;
                changed = true;
            }
        }
        if changed {
            *floor = self.floor();
        }
    }
}

/// Everything the statistic and the bootstrap need from the original sample.
#[derive(Debug, Clone)]
pub struct StatisticCache {
    family: PairFamily,
    index: IntervalIndex,
    layout: IndexLayout,
    lambda_hat: f64,
    t_n: f64,
    sigma_bound: f64,
}

impl StatisticCache {
    pub fn new(dataset: &Dataset, family: PairFamily) -> Self {
        let index = IntervalIndex::new(dataset, &family);
        let layout = IndexLayout::new(&family, index.m());
        let (lambda_hat, t_n) = compute_lambda_t(index.counts(), &family);
        let sigma_bound = empirical_sigma_bound(index.counts(), &family, lambda_hat);
        Self {
            family,
            index,
            layout,
            lambda_hat,
            t_n,
            sigma_bound,
        }
    }

    pub fn family(&self) -> &PairFamily {
        &self.family
    }

    pub fn index(&self) -> &IntervalIndex {
        &self.index
    }

    pub fn layout(&self) -> &IndexLayout {
        &self.layout
    }

    pub fn lambda_hat(&self) -> f64 {
        self.lambda_hat
    }

    pub fn t_n(&self) -> f64 {
        self.t_n
    }

    /// See [`empirical_sigma_bound`].
    pub fn sigma_bound(&self) -> f64 {
        self.sigma_bound
    }

    /// Number of (pair, member, interval) indices.
    pub fn len(&self) -> usize {
        self.layout.total()
    }

    pub fn is_empty(&self) -> bool {
        self.layout.total() == 0
    }

    /// `(φ̂, σ̂)` of a flat index under the given counts and `T_n`.
    pub fn evaluate_with(&self, table: &CountTable, t_n: f64, flat: usize) -> Option<(f64, f64)> {
        let key = self.layout.decode(flat)?;
        let (block, lo, hi) = match key {
            IndexKey::Interval { lo, hi, .. } => {
                let b = self.block_of(flat);
                (b, lo, hi)
            }
            IndexKey::Threshold { .. } => (self.block_of(flat), 0, 0),
        };
        Some(LevelCounts::new(&self.family, table, block).eval(lo, hi, t_n))
    }

    fn block_of(&self, flat: usize) -> &Block {
        let blocks = self.layout.blocks();
        &blocks[blocks.partition_point(|b| b.offset + b.len <= flat)]
    }

    pub fn phi_hat(&self, flat: usize) -> f64 {
        self.evaluate_with(self.index.counts(), self.t_n, flat)
            .expect("index in range")
            .0
    }

    pub fn sigma_hat(&self, flat: usize) -> f64 {
        self.evaluate_with(self.index.counts(), self.t_n, flat)
            .expect("index in range")
            .1
    }

    /// Suprema of `√T_n φ̂ / max(ξ, σ̂)` over the full index set, one per ξ.
    pub fn sup_summary(&self, xis: &[f64]) -> SupSummary {
        let mut order: Vec<usize> = (0..xis.len()).collect();
        order.sort_by(|&a, &b| xis[a].total_cmp(&xis[b]));
        let sorted: Vec<f64> = order.iter().map(|&k| xis[k]).collect();
        let sqrt_tn = self.t_n.sqrt();
        let table = self.index.counts();
        let parts: Vec<SupSummary> = segments(&self.layout)
            .into_par_iter()
            .map(|seg| {
                let block = &self.layout.blocks()[seg.block];
                let lc = LevelCounts::new(&self.family, table, block);
                let m = lc.m();
                let mut acc = SupSummary::empty(&sorted);
                let mut floor = acc.floor();
                let mut flat = seg.start;
                for lo in seg.rows.clone() {
                    for hi in lo..m {
                        let (phi, sigma) = lc.eval(lo, hi, self.t_n);
                        acc.offer(sqrt_tn * phi, sigma, flat, &mut floor);
                        flat += 1;
                    }
                }
                acc
            })
            .collect();
        let mut total = SupSummary::empty(&sorted);
        for p in &parts {
            total.absorb(p);
        }
        // back to the caller's ξ order
        let mut out = SupSummary::empty(xis);
        for (pos, &k) in order.iter().enumerate() {
            out.sup[k] = total.sup[pos];
            out.argmax[k] = total.argmax[pos];
        }
        out
    }

    /// Membership of every index in the estimated contact set
    /// `{ √T_n |φ̂| / max(ξ0, σ̂) ≤ τ }`.
    pub fn contact_mask(&self, tau_n: f64, xi0: f64) -> Vec<bool> {
        let sqrt_tn = self.t_n.sqrt();
        let table = self.index.counts();
        let parts: Vec<Vec<bool>> = segments(&self.layout)
            .into_par_iter()
            .map(|seg| {
                let block = &self.layout.blocks()[seg.block];
                let lc = LevelCounts::new(&self.family, table, block);
                let m = lc.m();
                let mut out = Vec::with_capacity(seg.len);
                for lo in seg.rows.clone() {
                    for hi in lo..m {
                        let (phi, sigma) = lc.eval(lo, hi, self.t_n);
                        out.push(in_contact_set(sqrt_tn, phi, sigma, tau_n, xi0));
                    }
                }
                out
            })
            .collect();
        parts.concat()
    }
}

#[inline(always)]
pub(crate) fn contact_score(sqrt_tn: f64, phi: f64, sigma: f64, xi0: f64) -> f64 {
    sqrt_tn * phi.abs() / xi0.max(sigma)
}

#[inline(always)]
pub(crate) fn in_contact_set(sqrt_tn: f64, phi: f64, sigma: f64, tau_n: f64, xi0: f64) -> bool {
    tau_n == f64::INFINITY || contact_score(sqrt_tn, phi, sigma, xi0) <= tau_n
}

/// `Σ_ξ ν(ξ) · sup √T_n φ̂ / max(ξ, σ̂)` over the full index set.
pub fn test_statistic(cache: &StatisticCache, nu: &NuMeasure) -> f64 {
    nu.integrate(&cache.sup_summary(nu.points()).sup)
}

/// The estimated contact set.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactSet {
    mask: Vec<bool>,
    size: usize,
}

impl ContactSet {
    pub fn from_mask(mask: Vec<bool>) -> Self {
        let size = mask.iter().filter(|&&b| b).count();
        Self { mask, size }
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn contains(&self, flat: usize) -> bool {
        self.mask[flat]
    }

    pub fn is_subset_of(&self, other: &ContactSet) -> bool {
        self.mask.len() == other.mask.len() && self.mask.iter().zip(&other.mask).all(|(a, b)| !a || *b)
    }
}

pub fn estimate_contact_set(cache: &StatisticCache, tau_n: f64, xi0: f64) -> ContactSet {
    ContactSet::from_mask(cache.contact_mask(tau_n, xi0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::build_ordered_space;

    fn constant_balanced() -> Dataset {
        // (y, d, z): (0,0,0) (0,1,0) (0,0,1) (0,1,1)
        Dataset::from_codes(vec![0.0; 4], vec![0, 1, 0, 1], vec![0, 0, 1, 1], None).unwrap()
    }

    fn cache(ds: &Dataset) -> StatisticCache {
        StatisticCache::new(ds, build_ordered_space(ds).unwrap())
    }

    #[test]
    fn lambda_and_t_n() {
        let c = cache(&constant_balanced());
        assert_eq!(c.lambda_hat(), 0.25);
        assert_eq!(c.t_n(), 1.0);

        let z: Vec<u32> = [vec![0; 3], vec![1; 2], vec![2; 5]].concat();
        let d: Vec<u32> = (0..10).map(|i| (i % 2) as u32).collect();
        let ds = Dataset::from_codes((0..10).map(f64::from).collect(), d, z, None).unwrap();
        let c = cache(&ds);
        assert!((c.lambda_hat() - 0.03).abs() < 1e-15);
        assert!((c.t_n() - 0.3).abs() < 1e-14);
    }

    #[test]
    fn empty_instrument_cell_zeroes_everything() {
        let ds = Dataset::with_labels(
            vec![0.0, 1.0, 2.0],
            vec![0, 1, 0],
            vec![0, 0, 2],
            None,
            vec!["0".into(), "1".into()],
            vec!["0".into(), "1".into(), "2".into()],
            None,
        )
        .unwrap();
        let c = cache(&ds);
        assert_eq!(c.lambda_hat(), 0.0);
        assert_eq!(c.t_n(), 0.0);
        let ts = test_statistic(&c, &NuMeasure::dirac(0.07).unwrap());
        assert_eq!(ts, 0.0);
        for flat in 0..c.len() {
            assert!(c.phi_hat(flat).is_finite());
            assert_eq!(c.sigma_hat(flat), 0.0);
        }
    }

    #[test]
    fn constant_outcome_has_zero_differences() {
        let c = cache(&constant_balanced());
        for flat in 0..c.len() {
            assert_eq!(c.phi_hat(flat), 0.0);
        }
        assert_eq!(test_statistic(&c, &NuMeasure::dirac(1.0).unwrap()), 0.0);
        // full range × {0}: σ̂² = 0.25 · (0.5 + 0.5)
        assert!((c.sigma_hat(0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn binary_difference_direct_formula() {
        // P̂(Y∈B, D=1 | Z=1) = 0.6 and P̂(· | Z=0) = 0.4 with B the full range
        let mut d = vec![1, 1, 1, 1, 0, 0, 0, 0, 0, 0];
        d.extend([1, 1, 1, 1, 1, 1, 0, 0, 0, 0]);
        let z = [vec![0; 10], vec![1; 10]].concat();
        let ds = Dataset::from_codes(vec![0.0; 20], d, z, None).unwrap();
        let c = cache(&ds);
        let key = IndexKey::Interval { pair: 0, d: 1, sign: -1, lo: 0, hi: 0 };
        let flat = c.layout().encode(key).unwrap();
        assert!((c.phi_hat(flat) + 0.2).abs() < 1e-15);
    }

    #[test]
    fn sigma_bound_cases() {
        let c = cache(&constant_balanced());
        assert!((c.sigma_bound() - 0.5).abs() < 1e-15);
        let ds = Dataset::from_codes(
            (0..6).map(f64::from).collect(),
            vec![0, 1, 0, 1, 0, 1],
            vec![0, 0, 1, 1, 2, 2],
            None,
        )
        .unwrap();
        let c = cache(&ds);
        let b2 = c.sigma_bound().powi(2);
        assert!((b2 - 1.0 / 18.0).abs() < 1e-15);
        assert!(b2 <= 0.125);
    }

    #[test]
    fn contact_set_extremes() {
        let ds = Dataset::from_codes(
            vec![0.3, 1.2, 0.7, 2.5, 1.1, 0.2, 0.9, 1.8],
            vec![0, 1, 0, 1, 1, 0, 0, 1],
            vec![0, 0, 0, 0, 1, 1, 1, 1],
            None,
        )
        .unwrap();
        let c = cache(&ds);
        let all = estimate_contact_set(&c, f64::INFINITY, 0.001);
        assert_eq!(all.size(), c.len());
        let zero = estimate_contact_set(&c, 0.0, 0.001);
        for flat in 0..c.len() {
            assert_eq!(zero.contains(flat), c.phi_hat(flat) == 0.0);
        }
        assert!(zero.size() > 0);
        let two = estimate_contact_set(&c, 2.0, 0.001);
        assert!(zero.is_subset_of(&two) && two.is_subset_of(&all));
    }

    #[test]
    fn sup_summary_respects_caller_order_and_monotonicity() {
        let ds = Dataset::from_codes(
            vec![0.3, 1.2, 0.7, 2.5, 1.1, 0.2, 0.9, 1.8, 0.5, 0.6],
            vec![0, 1, 0, 1, 1, 0, 0, 1, 2, 2],
            vec![0, 0, 0, 1, 1, 1, 1, 2, 2, 0],
            None,
        )
        .unwrap();
        let c = cache(&ds);
        let forward = c.sup_summary(&[0.01, 0.07, 0.3, 1.0]);
        let backward = c.sup_summary(&[1.0, 0.3, 0.07, 0.01]);
        let rev: Vec<f64> = backward.sup.iter().rev().copied().collect();
        assert_eq!(forward.sup, rev);
        assert!(forward.sup.windows(2).all(|w| w[0] >= w[1]));
        for k in 0..4 {
            let flat = forward.argmax[k];
            if flat == VANISHING {
                assert_eq!(forward.sup[k], 0.0);
                continue;
            }
            let v = c.t_n().sqrt() * c.phi_hat(flat) / forward.xis[k].max(c.sigma_hat(flat));
            assert_eq!(v, forward.sup[k]);
        }
    }
}
