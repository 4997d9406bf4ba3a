//! Finite index sets standing in for the indicator function families.
//!
//! A family is a list of instrument-cell pairs `(g1, g2)`. Each pair carries
//! signed treatment levels whose members are the indicators of `Y ∈ [a, b], D = d`
//! with `a ≤ b` drawn from the distinct observed outcomes, and optionally the
//! dominance thresholds `D ≤ c`.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::model::{normalize_extremes, CTriple, Dataset, Mode};

/// A treatment level together with the sign of its interval indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignedLevel {
    pub d: u32,
    pub sign: i8,
}

/// One `(g1, g2)` pair of conditioning cells with the members tested on it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pair {
    pub g1: usize,
    pub g2: usize,
    pub allowed_d: Vec<SignedLevel>,
    pub include_fosd: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairFamily {
    mode: Mode,
    pairs: Vec<Pair>,
    instrument_levels: usize,
    covariate_levels: usize,
    lambda_cells: Vec<usize>,
    thresholds: Vec<u32>,
}

impl PairFamily {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Number of conditioning cells (instrument levels × covariate levels).
    pub fn n_cells(&self) -> usize {
        self.instrument_levels * self.covariate_levels
    }

    pub fn covariate_levels(&self) -> usize {
        self.covariate_levels
    }

    /// Cells whose frequencies multiply into Λ̂.
    pub fn lambda_cells(&self) -> &[usize] {
        &self.lambda_cells
    }

    /// Treatment codes `c` of the dominance members `1{D ≤ c}`.
    pub fn thresholds(&self) -> &[u32] {
        &self.thresholds
    }

    /// Conditioning cell of an observation.
    pub fn cell_of(&self, z: u32, x: Option<u32>) -> usize {
        z as usize * self.covariate_levels + x.unwrap_or(0) as usize
    }

    /// Treatment codes that appear in some interval member.
    pub fn interval_levels(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self
            .pairs
            .iter()
            .flat_map(|p| p.allowed_d.iter().map(|s| s.d))
            .collect();
        set.into_iter().collect()
    }

    /// The same family with the dominance members removed.
    pub fn without_thresholds(mut self) -> Self {
        for p in &mut self.pairs {
            p.include_fosd = false;
        }
        self.thresholds.clear();
        self
    }

    fn replicate_over_covariates(self, covariate_levels: usize, mode: Mode) -> Self {
        let l = covariate_levels;
        let mut pairs = Vec::with_capacity(self.pairs.len() * l);
        for x in 0..l {
            for p in &self.pairs {
                pairs.push(Pair {
                    g1: p.g1 * l + x,
                    g2: p.g2 * l + x,
                    allowed_d: p.allowed_d.clone(),
                    include_fosd: p.include_fosd,
                });
            }
        }
        let lambda_cells = self
            .lambda_cells
            .iter()
            .flat_map(|&z| (0..l).map(move |x| z * l + x))
            .collect();
        Self {
            mode,
            pairs,
            instrument_levels: self.instrument_levels,
            covariate_levels: l,
            lambda_cells,
            thresholds: self.thresholds,
        }
    }
}

/// Consecutive instrument pairs with the signed extreme treatment levels and
/// the dominance thresholds.
pub fn build_ordered_space(dataset: &Dataset) -> Result<PairFamily> {
    let k = dataset.instrument_levels();
    if k < 2 {
        return Err(Error::TooFewInstrumentLevels(k));
    }
    let (d_min, d_max) = normalize_extremes(dataset)?;
    let counts = dataset.treatment_counts();
    // {D ≤ d_max} is the whole sample, so its member is identically zero.
    let thresholds = (d_min..d_max).filter(|&c| counts[c as usize] > 0).collect();
    let allowed_d = vec![
        SignedLevel { d: d_min, sign: 1 },
        SignedLevel { d: d_max, sign: -1 },
    ];
    let pairs = (0..k - 1)
        .map(|z| Pair {
            g1: z,
            g2: z + 1,
            allowed_d: allowed_d.clone(),
            include_fosd: true,
        })
        .collect();
    Ok(PairFamily {
        mode: Mode::Ordered,
        pairs,
        instrument_levels: k,
        covariate_levels: 1,
        lambda_cells: (0..k).collect(),
        thresholds,
    })
}

/// The ordered family restricted to a binary treatment and a binary instrument.
pub fn build_binary_space(dataset: &Dataset) -> Result<PairFamily> {
    if dataset.instrument_levels() != 2 {
        return Err(Error::NotBinary {
            column: "instrument",
            found: dataset.instrument_levels(),
        });
    }
    if dataset.treatment_levels() != 2 {
        return Err(Error::NotBinary {
            column: "treatment",
            found: dataset.treatment_levels(),
        });
    }
    let mut family = build_ordered_space(dataset)?;
    family.mode = Mode::Binary;
    Ok(family)
}

/// One pair `(z, z')` per distinct triple `(d, z, z')` of the c-set.
pub fn build_unordered_space(dataset: &Dataset, c_set: &[CTriple]) -> Result<PairFamily> {
    if c_set.is_empty() {
        return Err(Error::EmptyCSet);
    }
    let invalid = |t: &CTriple, reason: &str| Error::InvalidTriple {
        d: t.d.clone(),
        z: t.z.clone(),
        z_prime: t.z_prime.clone(),
        reason: reason.to_string(),
    };
    let mut seen = BTreeSet::new();
    let mut pairs = Vec::new();
    let mut used_z = BTreeSet::new();
    for t in c_set {
        let d = dataset.d_code(&t.d).ok_or_else(|| invalid(t, "unknown treatment label"))?;
        let z = dataset.z_code(&t.z).ok_or_else(|| invalid(t, "unknown instrument label"))?;
        let zp = dataset
            .z_code(&t.z_prime)
            .ok_or_else(|| invalid(t, "unknown instrument label"))?;
        if z == zp {
            return Err(invalid(t, "z and z' must differ"));
        }
        if !seen.insert((d, z, zp)) {
            continue;
        }
        used_z.insert(z as usize);
        used_z.insert(zp as usize);
        pairs.push(Pair {
            g1: z as usize,
            g2: zp as usize,
            allowed_d: vec![SignedLevel { d, sign: 1 }],
            include_fosd: false,
        });
    }
    Ok(PairFamily {
        mode: Mode::Unordered,
        pairs,
        instrument_levels: dataset.instrument_levels(),
        covariate_levels: 1,
        lambda_cells: used_z.into_iter().collect(),
        thresholds: Vec::new(),
    })
}

/// The base family replicated over every covariate level; cells become `(z, x)`.
pub fn build_covariate_space(
    dataset: &Dataset,
    base_mode: Mode,
    c_set: &[CTriple],
) -> Result<PairFamily> {
    let l = match dataset.x_labels() {
        Some(labels) => labels.len(),
        None => return Err(Error::MissingCovariates(base_mode.with_covariates().as_str())),
    };
    let (base, mode) = match base_mode {
        Mode::Ordered | Mode::Binary | Mode::OrderedWithCovariates => {
            (build_ordered_space(dataset)?, Mode::OrderedWithCovariates)
        }
        Mode::Unordered | Mode::UnorderedWithCovariates => (
            build_unordered_space(dataset, c_set)?,
            Mode::UnorderedWithCovariates,
        ),
    };
    Ok(base.replicate_over_covariates(l, mode))
}

/// Builds the family for `mode`.
pub fn build_space(dataset: &Dataset, mode: Mode, c_set: &[CTriple]) -> Result<PairFamily> {
    match mode {
        Mode::Ordered => build_ordered_space(dataset),
        Mode::Binary => build_binary_space(dataset),
        Mode::Unordered => build_unordered_space(dataset, c_set),
        Mode::OrderedWithCovariates | Mode::UnorderedWithCovariates => {
            build_covariate_space(dataset, mode, c_set)
        }
    }
}

/// Distinct sorted outcomes plus per-observation rank and cell, the shared
/// structure behind every count table.
#[derive(Debug, Clone)]
pub struct IntervalIndex {
    sorted_y: Vec<f64>,
    rank: Vec<u32>,
    cell: Vec<u32>,
    d: Vec<u32>,
    n_cells: usize,
    n_levels: usize,
    /// slot of each treatment code in the cumulative table, `u32::MAX` when unused
    slot_of: Vec<u32>,
    slots: usize,
    counts: CountTable,
}

impl IntervalIndex {
    pub fn new(dataset: &Dataset, family: &PairFamily) -> Self {
        let mut sorted_y = dataset.y().to_vec();
        sorted_y.sort_by(f64::total_cmp);
        sorted_y.dedup();
        let rank = dataset
            .y()
            .iter()
            .map(|v| sorted_y.partition_point(|s| s < v) as u32)
            .collect();
        let x = dataset.x();
        let cell = dataset
            .z()
            .iter()
            .enumerate()
            .map(|(i, &z)| {
                let xi = if family.mode().uses_covariates() {
                    x.map(|x| x[i])
                } else {
                    None
                };
                family.cell_of(z, xi) as u32
            })
            .collect();
        let n_levels = dataset.treatment_levels();
        let mut slot_of = vec![u32::MAX; n_levels];
        let active = family.interval_levels();
        for (s, &d) in active.iter().enumerate() {
            slot_of[d as usize] = s as u32;
        }
        let mut index = Self {
            sorted_y,
            rank,
            cell,
            d: dataset.d().to_vec(),
            n_cells: family.n_cells(),
            n_levels,
            slot_of,
            slots: active.len(),
            counts: CountTable::default(),
        };
        index.counts = CountTable::build(&index, None);
        index
    }

    /// Number of distinct outcome values.
    pub fn m(&self) -> usize {
        self.sorted_y.len()
    }

    pub fn n(&self) -> usize {
        self.rank.len()
    }

    pub fn sorted_y(&self) -> &[f64] {
        &self.sorted_y
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Counts of the original sample.
    pub fn counts(&self) -> &CountTable {
        &self.counts
    }

    /// Intervals per (pair, treatment level): `m(m+1)/2`.
    pub fn intervals_per_level(&self) -> usize {
        self.m() * (self.m() + 1) / 2
    }
}

/// Cumulative (possibly weighted) counts by cell, treatment level and outcome rank.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CountTable {
    m: usize,
    slots: usize,
    n_levels: usize,
    total: u64,
    /// `[(cell * slots + slot) * (m + 1) + i]` = count of rank `< i`
    cum: Vec<u32>,
    cell_totals: Vec<u32>,
    /// `[cell * n_levels + c]` = count of `D ≤ c`
    cdf: Vec<u32>,
    slot_of: Vec<u32>,
}

impl CountTable {
    /// Counts with each observation repeated `weights[i]` times (once when `None`).
    pub fn build(index: &IntervalIndex, weights: Option<&[u32]>) -> Self {
        let mut table = Self::default();
        table.refill(index, weights);
        table
    }

    /// Recomputes in place, reusing the allocation.
    pub fn refill(&mut self, index: &IntervalIndex, weights: Option<&[u32]>) {
        let m = index.m();
        let stride = m + 1;
        self.m = m;
        self.slots = index.slots;
        self.n_levels = index.n_levels;
        self.slot_of.clone_from(&index.slot_of);
        self.cum.clear();
        self.cum.resize(index.n_cells * index.slots * stride, 0);
        self.cell_totals.clear();
        self.cell_totals.resize(index.n_cells, 0);
        self.cdf.clear();
        self.cdf.resize(index.n_cells * index.n_levels, 0);
        let mut total = 0u64;
        for i in 0..index.n() {
            let w = weights.map_or(1, |w| w[i]);
            if w == 0 {
                continue;
            }
            total += w as u64;
            let cell = index.cell[i] as usize;
            let d = index.d[i] as usize;
            self.cell_totals[cell] += w;
            self.cdf[cell * index.n_levels + d] += w;
            let slot = index.slot_of[d];
            if slot != u32::MAX {
                // shifted by one so that the running sum yields "rank < i"
                self.cum[(cell * index.slots + slot as usize) * stride + index.rank[i] as usize + 1] += w;
            }
        }
        self.total = total;
        for block in self.cum.chunks_mut(stride) {
            for i in 1..stride {
                block[i] += block[i - 1];
            }
        }
        for block in self.cdf.chunks_mut(index.n_levels.max(1)) {
            for c in 1..block.len() {
                block[c] += block[c - 1];
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn cell_total(&self, cell: usize) -> u32 {
        self.cell_totals[cell]
    }

    /// Cumulative counts over ranks for `(cell, d)`; entry `i` counts ranks `< i`.
    ///
    /// Panics when `d` is not a level of any interval member.
    pub fn cumulative(&self, cell: usize, d: u32) -> &[u32] {
        let slot = self.slot_of[d as usize];
        assert!(slot != u32::MAX, "treatment level {d} has no interval members");
        let stride = self.m + 1;
        let start = (cell * self.slots + slot as usize) * stride;
        &self.cum[start..start + stride]
    }

    /// Observations in `cell` with `D = d` and outcome in `[sorted_y[lo], sorted_y[hi]]`.
    pub fn interval_count(&self, cell: usize, d: u32, lo: usize, hi: usize) -> u32 {
        let c = self.cumulative(cell, d);
        c[hi + 1] - c[lo]
    }

    /// Observations in `cell` with `D ≤ c`.
    pub fn at_most(&self, cell: usize, c: u32) -> u32 {
        self.cdf[cell * self.n_levels + c as usize]
    }
}

/// The member an index refers to within its pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Member {
    Interval { d: u32, sign: i8 },
    Threshold { c: u32 },
}

/// A contiguous run of flat indices belonging to one member of one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    pub pair: usize,
    pub member: Member,
    pub offset: usize,
    pub len: usize,
}

/// Decoded flat index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IndexKey {
    Interval {
        pair: usize,
        d: u32,
        sign: i8,
        lo: usize,
        hi: usize,
    },
    Threshold {
        pair: usize,
        c: u32,
    },
}

/// Flat numbering of every (pair, member, interval) index.
///
/// Order: pairs as declared; within a pair the interval members (in the order
/// of `allowed_d`) before the thresholds; intervals `(lo, hi)` lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexLayout {
    m: usize,
    blocks: Vec<Block>,
    total: usize,
}

impl IndexLayout {
    pub fn new(family: &PairFamily, m: usize) -> Self {
        let per_level = m * (m + 1) / 2;
        let mut blocks = Vec::new();
        let mut offset = 0;
        for (p, pair) in family.pairs().iter().enumerate() {
            for s in &pair.allowed_d {
                blocks.push(Block {
                    pair: p,
                    member: Member::Interval { d: s.d, sign: s.sign },
                    offset,
                    len: per_level,
                });
                offset += per_level;
            }
            if pair.include_fosd {
                for &c in family.thresholds() {
                    blocks.push(Block {
                        pair: p,
                        member: Member::Threshold { c },
                        offset,
                        len: 1,
                    });
                    offset += 1;
                }
            }
        }
        Self { m, blocks, total: offset }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Offset of interval row `lo` inside an interval block.
    pub fn row_offset(&self, lo: usize) -> usize {
        lo * (2 * self.m - lo + 1) / 2
    }

    pub fn decode(&self, flat: usize) -> Option<IndexKey> {
        if flat >= self.total {
            return None;
        }
        let b = self.blocks[self.blocks.partition_point(|b| b.offset + b.len <= flat)];
        let local = flat - b.offset;
        Some(match b.member {
            Member::Threshold { c } => IndexKey::Threshold { pair: b.pair, c },
            Member::Interval { d, sign } => {
                let (mut lo, mut top) = (0, self.m);
                while lo + 1 < top {
                    let mid = (lo + top) / 2;
                    if self.row_offset(mid) <= local {
                        lo = mid;
                    } else {
                        top = mid;
                    }
                }
                let hi = lo + local - self.row_offset(lo);
                IndexKey::Interval {
                    pair: b.pair,
                    d,
                    sign,
                    lo,
                    hi,
                }
            }
        })
    }

    pub fn encode(&self, key: IndexKey) -> Option<usize> {
        self.blocks.iter().find_map(|b| match (key, b.member) {
            (IndexKey::Threshold { pair, c }, Member::Threshold { c: bc }) if b.pair == pair && bc == c => {
                Some(b.offset)
            }
            (IndexKey::Interval { pair, d, sign, lo, hi }, Member::Interval { d: bd, sign: bs })
                if b.pair == pair && bd == d && bs == sign && lo <= hi && hi < self.m =>
            {
                Some(b.offset + self.row_offset(lo) + hi - lo)
            }
            _ => None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ds(y: &[f64], d: &[u32], z: &[u32]) -> Dataset {
        Dataset::from_codes(y.to_vec(), d.to_vec(), z.to_vec(), None).unwrap()
    }

    #[test]
    fn ordered_pairs_are_consecutive() {
        let data = ds(&[0.0; 6], &[0, 1, 2, 0, 1, 2], &[0, 1, 2, 2, 1, 0]);
        let f = build_ordered_space(&data).unwrap();
        let pairs: Vec<(usize, usize)> = f.pairs().iter().map(|p| (p.g1, p.g2)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 2)]);
        // two signed interval sub-families and two non-trivial thresholds per pair
        for p in f.pairs() {
            assert_eq!(
                p.allowed_d,
                vec![SignedLevel { d: 0, sign: 1 }, SignedLevel { d: 2, sign: -1 }]
            );
            assert!(p.include_fosd);
        }
        assert_eq!(f.thresholds(), &[0, 1]);
        let data = ds(&[0.0; 2], &[0, 1], &[0, 1]);
        assert_eq!(build_ordered_space(&data).unwrap().len(), 1);
    }

    #[test]
    fn binary_space_rejects_wider_supports() {
        let data = ds(&[0.0; 3], &[0, 1, 2], &[0, 1, 0]);
        assert!(matches!(build_binary_space(&data), Err(Error::NotBinary { .. })));
        let data = ds(&[0.0; 2], &[0, 1], &[0, 1]);
        assert_eq!(build_binary_space(&data).unwrap().mode(), Mode::Binary);
    }

    fn abc() -> Dataset {
        Dataset::with_labels(
            vec![0.0; 6],
            vec![0, 1, 2, 0, 1, 2],
            vec![0, 1, 0, 1, 0, 1],
            Some(vec![0, 0, 0, 1, 1, 1]),
            vec!["a".into(), "b".into(), "c".into()],
            vec!["0".into(), "1".into()],
            Some(vec!["0".into(), "1".into()]),
        )
        .unwrap()
    }

    fn paper_c_set() -> Vec<CTriple> {
        vec![
            CTriple::new("a", "0", "1"),
            CTriple::new("b", "1", "0"),
            CTriple::new("c", "1", "0"),
        ]
    }

    #[test]
    fn unordered_space_from_c_set() {
        let f = build_unordered_space(&abc(), &paper_c_set()).unwrap();
        assert_eq!(f.len(), 3);
        assert_eq!((f.pairs()[0].g1, f.pairs()[0].g2), (0, 1));
        assert_eq!((f.pairs()[1].g1, f.pairs()[1].g2), (1, 0));
        assert!(f.pairs().iter().all(|p| !p.include_fosd && p.allowed_d[0].sign == 1));
        assert!(matches!(build_unordered_space(&abc(), &[]), Err(Error::EmptyCSet)));
        let unknown = [CTriple::new("q", "0", "1")];
        assert!(matches!(
            build_unordered_space(&abc(), &unknown),
            Err(Error::InvalidTriple { .. })
        ));
        let same = [CTriple::new("a", "1", "1")];
        assert!(build_unordered_space(&abc(), &same).is_err());
    }

    #[test]
    fn duplicate_triples_are_collapsed() {
        let mut c = paper_c_set();
        c.push(CTriple::new("a", "0", "1"));
        c.push(CTriple::new("b", "1", "0"));
        let f = build_unordered_space(&abc(), &c).unwrap();
        // oracle: distinct triples by set semantics
        let distinct: BTreeSet<&CTriple> = c.iter().collect();
        assert_eq!(f.len(), distinct.len());
    }

    #[test]
    fn covariate_space_replicates_base() {
        let f = build_covariate_space(&abc(), Mode::Unordered, &paper_c_set()).unwrap();
        assert_eq!(f.len(), 6);
        assert_eq!(f.mode(), Mode::UnorderedWithCovariates);
        assert_eq!(f.lambda_cells(), &[0, 1, 2, 3]);
        let f = build_covariate_space(&abc(), Mode::Ordered, &[]).unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!((f.pairs()[1].g1, f.pairs()[1].g2), (1, 3));
        let plain = ds(&[0.0; 2], &[0, 1], &[0, 1]);
        assert!(matches!(
            build_covariate_space(&plain, Mode::Ordered, &[]),
            Err(Error::MissingCovariates(_))
        ));
    }

    #[test]
    fn single_covariate_level_matches_base() {
        let data = Dataset::from_codes(
            vec![1.0, 2.0, 3.0, 4.0],
            vec![0, 1, 0, 1],
            vec![0, 0, 1, 1],
            Some(vec![0, 0, 0, 0]),
        )
        .unwrap();
        let cov = build_covariate_space(&data, Mode::Ordered, &[]).unwrap();
        let base = build_ordered_space(&data).unwrap();
        assert_eq!(cov.pairs(), base.pairs());
        assert_eq!(cov.lambda_cells(), base.lambda_cells());
    }

    #[test]
    fn interval_counts_small_cases() {
        let data = ds(&[0.0; 4], &[0, 1, 0, 1], &[0, 0, 1, 1]);
        let f = build_ordered_space(&data).unwrap();
        let idx = IntervalIndex::new(&data, &f);
        assert_eq!(idx.m(), 1);
        assert_eq!(idx.intervals_per_level(), 1);

        let data = ds(&[3.0, 1.0, 2.0], &[0, 1, 0], &[0, 1, 1]);
        let idx = IntervalIndex::new(&data, &build_ordered_space(&data).unwrap());
        assert_eq!(idx.m(), 3);
        assert_eq!(idx.intervals_per_level(), 6);
    }

    fn random_dataset(rng: &mut ChaCha8Rng, n: usize) -> Dataset {
        let y = (0..n).map(|_| rng.random_range(0..5) as f64).collect();
        let d = (0..n).map(|_| rng.random_range(0..3)).collect();
        let mut z: Vec<u32> = (0..n).map(|_| rng.random_range(0..3)).collect();
        z[0] = 0;
        z[1] = 2;
        let mut dd: Vec<u32> = d;
        dd[0] = 0;
        dd[1] = 2;
        Dataset::from_codes(y, dd, z, None).unwrap()
    }

    #[test]
    fn interval_counts_match_filter_and_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let data = random_dataset(&mut rng, 10);
            let f = build_ordered_space(&data).unwrap();
            let idx = IntervalIndex::new(&data, &f);
            let t = idx.counts();
            let sy = idx.sorted_y();
            for cell in 0..f.n_cells() {
                for &d in &f.interval_levels() {
                    for lo in 0..idx.m() {
                        for hi in lo..idx.m() {
                            let naive = (0..data.n())
                                .filter(|&i| {
                                    data.z()[i] as usize == cell
                                        && data.d()[i] == d
                                        && data.y()[i] >= sy[lo]
                                        && data.y()[i] <= sy[hi]
                                })
                                .count() as u32;
                            assert_eq!(t.interval_count(cell, d, lo, hi), naive);
                        }
                    }
                    // full range equals the raw cell-by-treatment count
                    let raw = (0..data.n())
                        .filter(|&i| data.z()[i] as usize == cell && data.d()[i] == d)
                        .count() as u32;
                    assert_eq!(t.interval_count(cell, d, 0, idx.m() - 1), raw);
                }
                for &c in f.thresholds() {
                    let naive = (0..data.n())
                        .filter(|&i| data.z()[i] as usize == cell && data.d()[i] <= c)
                        .count() as u32;
                    assert_eq!(t.at_most(cell, c), naive);
                }
            }
            let sum: u32 = (0..f.n_cells()).map(|c| t.cell_total(c)).sum();
            assert_eq!(sum as usize, data.n());
        }
    }

    #[test]
    fn weighted_counts_equal_materialized_resample() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = random_dataset(&mut rng, 12);
        let f = build_ordered_space(&data).unwrap();
        let idx = IntervalIndex::new(&data, &f);
        let w: Vec<u32> = (0..data.n()).map(|_| rng.random_range(0..3)).collect();
        let t = CountTable::build(&idx, Some(&w));
        for cell in 0..f.n_cells() {
            for &d in &f.interval_levels() {
                let naive: u32 = (0..data.n())
                    .filter(|&i| data.z()[i] as usize == cell && data.d()[i] == d)
                    .map(|i| w[i])
                    .sum();
                assert_eq!(t.interval_count(cell, d, 0, idx.m() - 1), naive);
            }
        }
        assert_eq!(t.total(), w.iter().map(|&v| v as u64).sum::<u64>());
    }

    #[test]
    fn layout_round_trips() {
        let data = ds(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[0, 1, 2, 0, 1, 2], &[0, 1, 2, 2, 1, 0]);
        let f = build_ordered_space(&data).unwrap();
        let layout = IndexLayout::new(&f, 6);
        assert_eq!(layout.total(), 2 * (2 * 21 + 2));
        for flat in 0..layout.total() {
            let key = layout.decode(flat).unwrap();
            assert_eq!(layout.encode(key), Some(flat));
        }
        assert_eq!(layout.decode(layout.total()), None);
        assert_eq!(
            layout.decode(0),
            Some(IndexKey::Interval { pair: 0, d: 0, sign: 1, lo: 0, hi: 0 })
        );
        assert_eq!(layout.decode(42), Some(IndexKey::Threshold { pair: 0, c: 0 }));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn counts_are_additive_over_adjacent_intervals(
                obs in prop::collection::vec((0u8..6, 0u32..2, 0u32..2), 3..30),
                cut in 0usize..6,
            ) {
                let mut d: Vec<u32> = obs.iter().map(|o| o.1).collect();
                let mut z: Vec<u32> = obs.iter().map(|o| o.2).collect();
                d[0] = 0; d[1] = 1; z[0] = 0; z[1] = 1;
                let y: Vec<f64> = obs.iter().map(|o| o.0 as f64).collect();
                let data = Dataset::from_codes(y, d, z, None).unwrap();
                let f = build_ordered_space(&data).unwrap();
                let idx = IntervalIndex::new(&data, &f);
                let m = idx.m();
                let t = idx.counts();
                for cell in 0..2 {
                    for d in [0u32, 1] {
                        for lo in 0..m {
                            for hi in lo..m {
                                let b = lo + cut % (hi - lo + 1);
                                if b < hi {
                                    prop_assert_eq!(
                                        t.interval_count(cell, d, lo, b) + t.interval_count(cell, d, b + 1, hi),
                                        t.interval_count(cell, d, lo, hi)
                                    );
                                }
                                prop_assert!(t.interval_count(cell, d, lo, hi) <= t.cell_total(cell));
                            }
                        }
                    }
                }
            }
        }
    }
}
