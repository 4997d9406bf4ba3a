//! Declarative catalog of data generating processes.
//!
//! Every design draws independent uniforms `U` (instrument), `V` (treatment)
//! and, where present, `U_X` (covariate). Categorical variables are read off
//! a [`Partition`] of the unit interval. The outcome law depends on the
//! realized `(d, z)` cell; mixture laws draw a further uniform `W`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CTriple, Dataset, Mode};

/// Maps a uniform draw `u` to the level of the first bin with `u ≤ upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub bins: Vec<(f64, u32)>,
}

impl Partition {
    pub fn new(bins: Vec<(f64, u32)>) -> Self {
        Self { bins }
    }

    #[inline]
    pub fn level(&self, u: f64) -> u32 {
        self.bins
            .iter()
            .find(|(upper, _)| u <= *upper)
            .map_or(self.bins[self.bins.len() - 1].1, |&(_, l)| l)
    }

    /// Probability of `level` under a uniform draw.
    pub fn mass(&self, level: u32) -> f64 {
        let mut lower = 0.0;
        let mut total = 0.0;
        for &(upper, l) in &self.bins {
            let upper = upper.min(1.0);
            if l == level {
                total += (upper - lower).max(0.0);
            }
            lower = lower.max(upper);
        }
        total
    }

    fn validate(&self, levels: usize) -> Result<()> {
        let ok = !self.bins.is_empty()
            && self.bins.windows(2).all(|w| w[0].0 <= w[1].0)
            && self.bins.iter().all(|&(u, l)| (0.0..=1.0).contains(&u) && (l as usize) < levels)
            && self.bins[self.bins.len() - 1].0 == 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSimulation(format!("malformed partition {:?}", self.bins)))
        }
    }
}

/// Outcome distribution in one `(d, z)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum OutcomeLaw {
    Normal { mean: f64, sd: f64 },
    Point { value: f64 },
    /// Component `k` is chosen when `W` falls in the `k`-th bin of `cuts` (upper bounds, last = 1).
    Mixture { cuts: Vec<f64>, components: Vec<(f64, f64)> },
}

impl OutcomeLaw {
    fn normal(mean: f64, sd: f64) -> Self {
        OutcomeLaw::Normal { mean, sd }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            OutcomeLaw::Normal { mean, sd } => Normal::new(*mean, *sd).expect("finite sd").sample(rng),
            OutcomeLaw::Point { value } => *value,
            OutcomeLaw::Mixture { cuts, components } => {
                let w: f64 = rng.random();
                let k = cuts.iter().position(|&c| w <= c).unwrap_or(components.len() - 1);
                let (mean, sd) = components[k];
                Normal::new(mean, sd).expect("finite sd").sample(rng)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            OutcomeLaw::Normal { mean, sd } => mean.is_finite() && *sd > 0.0 && sd.is_finite(),
            OutcomeLaw::Point { value } => value.is_finite(),
            OutcomeLaw::Mixture { cuts, components } => {
                cuts.len() == components.len()
                    && !cuts.is_empty()
                    && cuts.windows(2).all(|w| w[0] <= w[1])
                    && cuts[cuts.len() - 1] == 1.0
                    && components.iter().all(|&(m, s)| m.is_finite() && s > 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSimulation(format!("malformed outcome law {self:?}")))
        }
    }
}

/// Constants of one design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpParams {
    pub mode: Mode,
    pub d_labels: Vec<String>,
    pub z_labels: Vec<String>,
    pub instrument: Partition,
    /// Potential treatment `D_z`, one partition of `V` per instrument level.
    pub treatment: Vec<Partition>,
    /// Indexed `[d][z]`.
    pub outcome: Vec<Vec<OutcomeLaw>>,
    /// `P(X = 1)` for a binary covariate independent of everything else.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariate: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub c_set: Vec<CTriple>,
}

/// A catalog design at a given sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub name: String,
    pub n: usize,
    /// Probability of the instrument level that the design shifts with the sample size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_n: Option<f64>,
    pub params: DgpParams,
}

impl DgpSpec {
    pub fn mode(&self) -> Mode {
        self.params.mode
    }

    pub fn c_set(&self) -> &[CTriple] {
        &self.params.c_set
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        if self.n == 0 {
            return Err(Error::InvalidSimulation("sample size must be at least 1".into()));
        }
        if let Some(r) = self.r_n {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidSimulation(format!("r_n = {r} is not a probability")));
            }
        }
        if let Some(q) = p.covariate {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::InvalidSimulation(format!("P(X = 1) = {q} is not a probability")));
            }
        }
        let (nd, nz) = (p.d_labels.len(), p.z_labels.len());
        p.instrument.validate(nz)?;
        if p.treatment.len() != nz || p.outcome.len() != nd || p.outcome.iter().any(|r| r.len() != nz) {
            return Err(Error::InvalidSimulation("treatment or outcome table has the wrong shape".into()));
        }
        for t in &p.treatment {
            t.validate(nd)?;
        }
        for law in p.outcome.iter().flatten() {
            law.validate()?;
        }
        Ok(())
    }
}

/// Every catalog name, base designs first.
pub const CATALOG: &[&str] = &[
    "multivalued-null",
    "degenerate-null",
    "multivalued-dgp1",
    "multivalued-dgp2",
    "multivalued-dgp3",
    "multivalued-dgp4",
    "multivalued-dgp5",
    "multivalued-dgp6",
    "unordered-null",
    "unordered-dgp1",
    "unordered-dgp2",
    "unordered-dgp3",
    "unordered-dgp4",
    "unordered-dgp5",
    "binary-null",
    "binary-dgp1",
    "binary-dgp2",
    "binary-dgp3",
    "binary-dgp4",
];

/// Instrument-mixing probability used with each sample size: 1/6 at 600, 1/11 at 1100, 1/2 otherwise.
pub fn default_r_n(n: usize) -> f64 {
    match n {
        600 => 1.0 / 6.0,
        1100 => 1.0 / 11.0,
        _ => 0.5,
    }
}

fn canonical(name: &str) -> Option<&'static str> {
    let lower = name.trim().to_ascii_lowercase();
    let alias = match lower.as_str() {
        "null" | "ordered-null" => "multivalued-null",
        s if s.starts_with("dgp") => return CATALOG.iter().copied().find(|c| *c == format!("multivalued-{s}")),
        s if s.starts_with("ordered-dgp") => {
            return CATALOG
                .iter()
                .copied()
                .find(|c| *c == format!("multivalued-{}", &s["ordered-".len()..]))
        }
        s => s,
    };
    CATALOG.iter().copied().find(|c| *c == alias)
}

fn labels(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

/// `2·1{V ≤ lo} + 1{lo < V ≤ hi}`.
fn three_level(lo: f64, hi: f64) -> Partition {
    Partition::new(vec![(lo, 2), (hi, 1), (1.0, 0)])
}

fn standard_normal() -> OutcomeLaw {
    OutcomeLaw::normal(0.0, 1.0)
}

/// The four deviations shared by the power designs for the one distorted cell.
fn distorted(variant: usize) -> OutcomeLaw {
    match variant {
        1 => OutcomeLaw::normal(-0.7, 1.0),
        2 => OutcomeLaw::normal(0.0, 1.675),
        3 => OutcomeLaw::normal(0.0, 0.515),
        _ => OutcomeLaw::Mixture {
            cuts: vec![0.15, 0.35, 0.65, 0.85, 1.0],
            components: vec![(-1.0, 0.125), (-0.5, 0.125), (0.0, 0.125), (0.5, 0.125), (1.0, 0.125)],
        },
    }
}

/// `Y = N_D` with `N_d ~ N(d, 1)` regardless of the instrument.
fn by_treatment(nd: usize, nz: usize) -> Vec<Vec<OutcomeLaw>> {
    (0..nd)
        .map(|d| vec![OutcomeLaw::normal(d as f64, 1.0); nz])
        .collect()
}

fn unordered_c_set() -> Vec<CTriple> {
    vec![
        CTriple::new("a", "0", "1"),
        CTriple::new("b", "1", "0"),
        CTriple::new("c", "1", "0"),
    ]
}

/// Unordered treatment: `a` if `V > hi`, `b` if `lo < V ≤ hi`, `c` if `V ≤ lo`.
fn abc(lo: f64, hi: f64) -> Partition {
    Partition::new(vec![(lo, 2), (hi, 1), (1.0, 0)])
}

/// Looks up a catalog design. `r_n` defaults to [`default_r_n`] for designs that use it.
pub fn dgp(name: &str, n: usize, r_n: Option<f64>) -> Result<DgpSpec> {
    let name = canonical(name).ok_or_else(|| Error::UnknownDgp(name.to_string()))?;
    let (family, tail) = name.split_once('-').expect("catalog names are hyphenated");
    let variant: Option<usize> = tail.strip_prefix("dgp").and_then(|v| v.parse().ok());
    let uses_r = variant.is_some();
    let r = r_n.unwrap_or_else(|| default_r_n(n));

    let params = match (family, tail) {
        ("multivalued", "null") | ("degenerate", "null") => {
            let treatment = if family == "degenerate" {
                vec![three_level(0.328, 0.658), three_level(0.329, 0.659), three_level(0.33, 0.66)]
            } else {
                vec![three_level(0.33, 0.66); 3]
            };
            DgpParams {
                mode: Mode::Ordered,
                d_labels: labels(&["0", "1", "2"]),
                z_labels: labels(&["0", "1", "2"]),
                instrument: three_level(0.5, 0.7),
                treatment,
                outcome: by_treatment(3, 3),
                covariate: None,
                c_set: Vec::new(),
            }
        }
        ("multivalued", _) => {
            let v = variant.expect("power design");
            let instrument = three_level(r, r + 0.2);
            let (treatment, outcome) = if v <= 4 {
                let mut outcome = vec![vec![standard_normal(); 3]; 3];
                outcome[2][0] = distorted(v);
                (vec![three_level(0.45, 0.55); 3], outcome)
            } else if v == 5 {
                let (shifted, base) = (three_level(0.6, 0.8), three_level(0.33, 0.66));
                (vec![shifted, base.clone(), base], by_treatment(3, 3))
            } else {
                let (shifted, base) = (three_level(0.6, 0.8), three_level(0.33, 0.66));
                (vec![base.clone(), shifted, base], by_treatment(3, 3))
            };
            DgpParams {
                mode: Mode::Ordered,
                d_labels: labels(&["0", "1", "2"]),
                z_labels: labels(&["0", "1", "2"]),
                instrument,
                treatment,
                outcome,
                covariate: None,
                c_set: Vec::new(),
            }
        }
        ("unordered", _) => {
            let p_one = if uses_r { r } else { 0.5 };
            let instrument = Partition::new(vec![(p_one, 1), (1.0, 0)]);
            let (treatment, outcome) = match variant {
                None => (vec![abc(0.5, 0.6); 2], by_treatment(3, 2)),
                Some(v) if v <= 4 => {
                    let mut outcome = vec![vec![standard_normal(); 2]; 3];
                    outcome[2][0] = distorted(v);
                    (vec![abc(0.5, 0.6); 2], outcome)
                }
                Some(_) => (vec![abc(0.5, 0.6), abc(0.2, 0.3)], by_treatment(3, 2)),
            };
            DgpParams {
                mode: Mode::UnorderedWithCovariates,
                d_labels: labels(&["a", "b", "c"]),
                z_labels: labels(&["0", "1"]),
                instrument,
                treatment,
                outcome,
                covariate: Some(0.5),
                c_set: unordered_c_set(),
            }
        }
        ("binary", _) => {
            let p_one = if uses_r { r } else { 0.5 };
            let instrument = Partition::new(vec![(p_one, 1), (1.0, 0)]);
            let (treatment, outcome) = match variant {
                None => (
                    vec![Partition::new(vec![(0.5, 1), (1.0, 0)]); 2],
                    by_treatment(2, 2),
                ),
                Some(v) => {
                    let mut outcome = vec![vec![standard_normal(); 2]; 2];
                    outcome[1][0] = distorted(v);
                    (
                        vec![
                            Partition::new(vec![(0.45, 1), (1.0, 0)]),
                            Partition::new(vec![(0.55, 1), (1.0, 0)]),
                        ],
                        outcome,
                    )
                }
            };
            DgpParams {
                mode: Mode::Binary,
                d_labels: labels(&["0", "1"]),
                z_labels: labels(&["0", "1"]),
                instrument,
                treatment,
                outcome,
                covariate: None,
                c_set: Vec::new(),
            }
        }
        _ => unreachable!("catalog entry without a recipe: {name}"),
    };
    let spec = DgpSpec {
        name: name.to_string(),
        n,
        r_n: uses_r.then_some(r),
        params,
    };
    spec.validate()?;
    Ok(spec)
}

/// Draws `spec.n` i.i.d. observations. Labels declare the full support, so
/// instrument cells may be empty in small samples.
pub fn generate<R: Rng + ?Sized>(spec: &DgpSpec, rng: &mut R) -> Result<Dataset> {
    spec.validate()?;
    let p = &spec.params;
    let n = spec.n;
    let mut y = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut x = p.covariate.map(|_| Vec::with_capacity(n));
    for _ in 0..n {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        let zi = p.instrument.level(u);
        let di = p.treatment[zi as usize].level(v);
        if let (Some(q), Some(xs)) = (p.covariate, x.as_mut()) {
            let ux: f64 = rng.random();
            xs.push(u32::from(ux <= q));
        }
        y.push(p.outcome[di as usize][zi as usize].sample(rng));
        d.push(di);
        z.push(zi);
    }
    let x_labels = x.as_ref().map(|_| labels(&["0", "1"]));
    Dataset::with_labels(y, d, z, x, p.d_labels.clone(), p.z_labels.clone(), x_labels)
}
