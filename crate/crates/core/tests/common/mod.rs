//! Brute-force reference implementation and random small datasets.
//!
//! Everything here works on raw rows with plain loops: empirical means of
//! indicator products, the textbook variance estimator and an explicit
//! enumeration of every function in the family.

#![allow(dead_code)]

use ivtest::model::Dataset;
use rand::seq::SliceRandom;
use rand::Rng;

/// A function `h` of one observation.
#[derive(Debug, Clone, Copy)]
pub enum H {
    /// `sign · 1{a ≤ Y ≤ b, D = d}`
    Interval { a: f64, b: f64, d: u32, sign: f64 },
    /// `1{D ≤ c}`; `c = -1` gives the zero function.
    Threshold { c: i64 },
}

impl H {
    fn at(&self, y: f64, d: u32) -> f64 {
        match *self {
            H::Interval { a, b, d: level, sign } => {
                if d == level && a <= y && y <= b {
                    sign
                } else {
                    0.0
                }
            }
            H::Threshold { c } => {
                if (d as i64) <= c {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Conditioning cell `(z, x)`.
pub type Cell = (u32, Option<u32>);

fn in_cell(ds: &Dataset, i: usize, cell: Cell) -> bool {
    ds.z()[i] == cell.0 && cell.1.is_none_or(|x| ds.x().expect("covariates")[i] == x)
}

fn mean(ds: &Dataset, f: impl Fn(usize) -> f64) -> f64 {
    (0..ds.n()).map(f).sum::<f64>() / ds.n() as f64
}

/// `Q(v) / Q(g)` with the `0 · ∞ = 0` convention.
fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// `(φ̂, σ̂²)` of one `(h, g1, g2)`, straight from the empirical measure.
pub fn phi_var(ds: &Dataset, lambda: f64, h: &H, g1: Cell, g2: Cell) -> (f64, f64) {
    let pg = |g: Cell| mean(ds, |i| if in_cell(ds, i, g) { 1.0 } else { 0.0 });
    let phg = |g: Cell| mean(ds, |i| if in_cell(ds, i, g) { h.at(ds.y()[i], ds.d()[i]) } else { 0.0 });
    let ph2g = |g: Cell| {
        mean(ds, |i| {
            if in_cell(ds, i, g) {
                h.at(ds.y()[i], ds.d()[i]).powi(2)
            } else {
                0.0
            }
        })
    };
    let (p1, p2) = (pg(g1), pg(g2));
    let (a1, a2) = (phg(g1), phg(g2));
    let (b1, b2) = (ph2g(g1), ph2g(g2));
    let phi = ratio(a2, p2) - ratio(a1, p1);
    let var = lambda
        * (ratio(b2, p2 * p2) - ratio(a2 * a2, p2 * p2 * p2) + ratio(b1, p1 * p1) - ratio(a1 * a1, p1 * p1 * p1));
    (phi, var)
}

/// Every `(h, g1, g2)` of a family together with `Λ̂`.
pub struct NaiveFamily {
    pub lambda: f64,
    pub members: Vec<(H, Cell, Cell)>,
    /// Pairs `(g1, g2)`, for the variance bound.
    pub pairs: Vec<(Cell, Cell)>,
    pub instrument_levels: usize,
}

fn share(ds: &Dataset, cell: Cell) -> f64 {
    mean(ds, |i| if in_cell(ds, i, cell) { 1.0 } else { 0.0 })
}

fn observed_extremes(ds: &Dataset) -> (u32, u32) {
    let lo = *ds.d().iter().min().unwrap();
    let hi = *ds.d().iter().max().unwrap();
    (lo, hi)
}

fn intervals(endpoints: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for (i, &a) in endpoints.iter().enumerate() {
        for &b in &endpoints[i..] {
            out.push((a, b));
        }
    }
    out
}

/// Ordered family: consecutive instrument levels (per covariate value when
/// the dataset has covariates), intervals at the extreme treatments with
/// endpoints from `endpoints`, and every threshold `c` from below the smallest
/// declared level to the largest.
pub fn ordered_family(ds: &Dataset, endpoints: &[f64]) -> NaiveFamily {
    let k = ds.z_labels().len() as u32;
    let xs: Vec<Option<u32>> = match ds.x_labels() {
        Some(l) => (0..l.len() as u32).map(Some).collect(),
        None => vec![None],
    };
    let mut lambda = 1.0;
    for z in 0..k {
        for &x in &xs {
            lambda *= share(ds, (z, x));
        }
    }
    let (d_min, d_max) = observed_extremes(ds);
    let mut hs = Vec::new();
    for (a, b) in intervals(endpoints) {
        hs.push(H::Interval { a, b, d: d_min, sign: 1.0 });
        hs.push(H::Interval { a, b, d: d_max, sign: -1.0 });
    }
    for c in -1..ds.d_labels().len() as i64 {
        hs.push(H::Threshold { c });
    }
    let mut members = Vec::new();
    let mut pairs = Vec::new();
    for &x in &xs {
        for z in 0..k - 1 {
            let (g1, g2) = ((z, x), (z + 1, x));
            pairs.push((g1, g2));
            for h in &hs {
                members.push((*h, g1, g2));
            }
        }
    }
    NaiveFamily {
        lambda,
        members,
        pairs,
        instrument_levels: k as usize,
    }
}

/// Unordered family for triples `(d, z, z')` given as codes; the interval
/// list always contains one interval holding no observation.
pub fn unordered_family(ds: &Dataset, triples: &[(u32, u32, u32)], endpoints: &[f64]) -> NaiveFamily {
    let xs: Vec<Option<u32>> = match ds.x_labels() {
        Some(l) => (0..l.len() as u32).map(Some).collect(),
        None => vec![None],
    };
    let mut used: Vec<u32> = triples.iter().flat_map(|t| [t.1, t.2]).collect();
    used.sort();
    used.dedup();
    let mut lambda = 1.0;
    for &z in &used {
        for &x in &xs {
            lambda *= share(ds, (z, x));
        }
    }
    let below = ds.y().iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let mut ivs = intervals(endpoints);
    ivs.push((below, below));
    let mut members = Vec::new();
    let mut pairs = Vec::new();
    for &x in &xs {
        for &(d, z, zp) in triples {
            pairs.push(((z, x), (zp, x)));
            for &(a, b) in &ivs {
                members.push((H::Interval { a, b, d, sign: 1.0 }, (z, x), (zp, x)));
            }
        }
    }
    NaiveFamily {
        lambda,
        members,
        pairs,
        instrument_levels: used.len(),
    }
}

/// `(φ̂, σ̂²)` of every member.
pub fn evaluate(ds: &Dataset, family: &NaiveFamily) -> Vec<(f64, f64)> {
    family
        .members
        .iter()
        .map(|(h, g1, g2)| phi_var(ds, family.lambda, h, *g1, *g2))
        .collect()
}

/// `sup √T_n φ̂ / max(ξ, σ̂)` over the evaluated members.
pub fn sup_at(values: &[(f64, f64)], t_n: f64, xi: f64) -> f64 {
    values
        .iter()
        .map(|&(phi, var)| t_n.sqrt() * phi / xi.max(var.max(0.0).sqrt()))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `Σ ν(ξ) · sup_ξ`
pub fn statistic(values: &[(f64, f64)], t_n: f64, points: &[f64], weights: &[f64]) -> f64 {
    points
        .iter()
        .zip(weights)
        .map(|(&xi, &w)| w * sup_at(values, t_n, xi))
        .sum()
}

/// `1/4 · max over pairs {Λ̂/P̂(g2) + Λ̂/P̂(g1)}` with `0 · ∞ = 0`.
pub fn variance_bound(ds: &Dataset, family: &NaiveFamily) -> f64 {
    family
        .pairs
        .iter()
        .map(|&(g1, g2)| 0.25 * (ratio(family.lambda, share(ds, g2)) + ratio(family.lambda, share(ds, g1))))
        .fold(0.0, f64::max)
}

pub fn distinct_sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Observed outcomes, the midpoints between them and one point beyond each end.
pub fn refined_endpoints(y: &[f64]) -> Vec<f64> {
    let obs = distinct_sorted(y);
    let mut out = obs.clone();
    out.extend(obs.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    out.push(obs[0] - 1.0);
    out.push(obs[obs.len() - 1] + 1.0);
    distinct_sorted(&out)
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * 1f64.max(a.abs()).max(b.abs())
}

/// Shape of a random small dataset.
#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub n: usize,
    pub k: usize,
    pub j: usize,
    pub covariate_levels: Option<usize>,
    /// Outcomes drawn from a handful of values, so ties are common.
    pub tied: bool,
}

pub fn random_shape<R: Rng>(rng: &mut R, max_n: usize) -> Shape {
    Shape {
        n: rng.random_range(2..=max_n),
        k: rng.random_range(2..=3),
        j: rng.random_range(2..=3),
        covariate_levels: None,
        tied: rng.random_bool(0.5),
    }
}

/// A dataset of the given shape with at least two observed treatment levels.
/// Declared instrument levels may be empty, which makes `Λ̂ = 0`.
pub fn random_dataset<R: Rng>(rng: &mut R, shape: Shape) -> Dataset {
    loop {
        let y: Vec<f64> = (0..shape.n)
            .map(|_| {
                if shape.tied {
                    rng.random_range(0..4) as f64 * 0.5
                } else {
                    rng.random_range(-2.0..2.0)
                }
            })
            .collect();
        let mut d: Vec<u32> = (0..shape.n).map(|_| rng.random_range(0..shape.j as u32)).collect();
        if d.iter().all(|&v| v == d[0]) {
            continue;
        }
        d.shuffle(rng);
        let z: Vec<u32> = (0..shape.n).map(|_| rng.random_range(0..shape.k as u32)).collect();
        let x = shape
            .covariate_levels
            .map(|l| (0..shape.n).map(|_| rng.random_range(0..l as u32)).collect::<Vec<_>>());
        let labels = |m: usize| (0..m).map(|c| c.to_string()).collect::<Vec<_>>();
        return Dataset::with_labels(
            y,
            d,
            z,
            x,
            labels(shape.j),
            labels(shape.k),
            shape.covariate_levels.map(labels),
        )
        .expect("valid random dataset");
    }
}

/// A dataset in which every declared instrument level is observed.
pub fn random_full_dataset<R: Rng>(rng: &mut R, shape: Shape) -> Dataset {
    let shape = Shape {
        n: shape.n.max(shape.k + 1),
        ..shape
    };
    loop {
        let ds = random_dataset(rng, shape);
        if ds.instrument_counts().iter().all(|&c| c > 0) {
            return ds;
        }
    }
}
