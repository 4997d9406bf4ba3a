//! Shared domain types: datasets, the trimming measure, test configuration and results.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Aligned observations of outcome, treatment code, instrument code and an
/// optional covariate cell code.
///
/// Codes index into the label tables. The label tables declare the support of
/// each column; a declared level may have no observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    d: Vec<u32>,
    z: Vec<u32>,
    x: Option<Vec<u32>>,
    d_labels: Vec<String>,
    z_labels: Vec<String>,
    x_labels: Option<Vec<String>>,
}

impl Dataset {
    /// Builds a dataset from already-encoded columns, labelling every level by its code.
    /// The declared support of each column is `0..=max(code)`.
    pub fn from_codes(y: Vec<f64>, d: Vec<u32>, z: Vec<u32>, x: Option<Vec<u32>>) -> Result<Self> {
        let labels = |codes: &[u32]| -> Vec<String> {
            let top = codes.iter().copied().max().map_or(0, |m| m + 1);
            (0..top).map(|c| c.to_string()).collect()
        };
        let d_labels = labels(&d);
        let z_labels = labels(&z);
        let x_labels = x.as_deref().map(labels);
        Self::with_labels(y, d, z, x, d_labels, z_labels, x_labels)
    }

    /// Builds a dataset from codes plus explicit label tables (declared supports).
    pub fn with_labels(
        y: Vec<f64>,
        d: Vec<u32>,
        z: Vec<u32>,
        x: Option<Vec<u32>>,
        d_labels: Vec<String>,
        z_labels: Vec<String>,
        x_labels: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::EmptyData);
        }
        let check_len = |column: &'static str, found: usize| {
            if found == n {
                Ok(())
            } else {
                Err(Error::LengthMismatch {
                    column,
                    expected: n,
                    found,
                })
            }
        };
        check_len("treatment", d.len())?;
        check_len("instrument", z.len())?;
        if let Some(x) = &x {
            check_len("covariate", x.len())?;
        }
        if x.is_some() != x_labels.is_some() {
            return Err(Error::InvalidConfig(
                "covariate codes and covariate labels must be given together".into(),
            ));
        }
        if let Some(row) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteOutcome { row });
        }
        check_codes("treatment", &d, d_labels.len())?;
        check_codes("instrument", &z, z_labels.len())?;
        if let (Some(x), Some(xl)) = (&x, &x_labels) {
            check_codes("covariate", x, xl.len())?;
        }
        if z_labels.len() < 2 {
            return Err(Error::TooFewInstrumentLevels(z_labels.len()));
        }
        Ok(Self {
            y,
            d,
            z,
            x,
            d_labels,
            z_labels,
            x_labels,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn d(&self) -> &[u32] {
        &self.d
    }

    pub fn z(&self) -> &[u32] {
        &self.z
    }

    pub fn x(&self) -> Option<&[u32]> {
        self.x.as_deref()
    }

    pub fn d_labels(&self) -> &[String] {
        &self.d_labels
    }

    pub fn z_labels(&self) -> &[String] {
        &self.z_labels
    }

    pub fn x_labels(&self) -> Option<&[String]> {
        self.x_labels.as_deref()
    }

    pub fn treatment_levels(&self) -> usize {
        self.d_labels.len()
    }

    pub fn instrument_levels(&self) -> usize {
        self.z_labels.len()
    }

    /// Number of covariate cells, 1 when there is no covariate column.
    pub fn covariate_levels(&self) -> usize {
        self.x_labels.as_ref().map_or(1, Vec::len)
    }

    /// Observation counts per treatment code.
    pub fn treatment_counts(&self) -> Vec<usize> {
        level_counts(&self.d, self.treatment_levels())
    }

    pub fn instrument_counts(&self) -> Vec<usize> {
        level_counts(&self.z, self.instrument_levels())
    }

    pub fn covariate_counts(&self) -> Option<Vec<usize>> {
        self.x.as_ref().map(|x| level_counts(x, self.covariate_levels()))
    }

    pub fn d_code(&self, label: &str) -> Option<u32> {
        position(&self.d_labels, label)
    }

    pub fn z_code(&self, label: &str) -> Option<u32> {
        position(&self.z_labels, label)
    }

    /// Original labels of row `i`, the inverse of [`encode_dataset`].
    pub fn decode_row(&self, i: usize) -> Row {
        Row {
            y: self.y[i],
            d: self.d_labels[self.d[i] as usize].clone(),
            z: self.z_labels[self.z[i] as usize].clone(),
            x: match (&self.x, &self.x_labels) {
                (Some(x), Some(xl)) => Some(xl[x[i] as usize].clone()),
                _ => None,
            },
        }
    }

    /// A copy of this dataset without its covariate column.
    pub fn without_covariates(&self) -> Self {
        Self {
            x: None,
            x_labels: None,
            ..self.clone()
        }
    }

    /// Recodes the instrument so its levels follow `order`, which must list every declared label.
    pub fn with_instrument_order(&self, order: &[String]) -> Result<Self> {
        let given: BTreeSet<&String> = order.iter().collect();
        if given.len() != order.len() {
            return Err(Error::InvalidInstrumentOrder("duplicate label".into()));
        }
        let mut recode = Vec::with_capacity(self.z_labels.len());
        for label in &self.z_labels {
            match position(order, label) {
                Some(p) => recode.push(p),
                None => {
                    return Err(Error::InvalidInstrumentOrder(format!(
                        "label `{label}` is not listed"
                    )))
                }
            }
        }
        let z = self.z.iter().map(|&c| recode[c as usize]).collect();
        Self::with_labels(
            self.y.clone(),
            self.d.clone(),
            z,
            self.x.clone(),
            self.d_labels.clone(),
            order.to_vec(),
            self.x_labels.clone(),
        )
    }
}

fn check_codes(column: &'static str, codes: &[u32], levels: usize) -> Result<()> {
    match codes.iter().position(|&c| c as usize >= levels) {
        Some(row) => Err(Error::CodeOutOfRange {
            column,
            row,
            code: codes[row],
            levels,
        }),
        None => Ok(()),
    }
}

fn level_counts(codes: &[u32], levels: usize) -> Vec<usize> {
    let mut counts = vec![0; levels];
    for &c in codes {
        counts[c as usize] += 1;
    }
    counts
}

fn position(labels: &[String], label: &str) -> Option<u32> {
    labels.iter().position(|l| l == label).map(|p| p as u32)
}

/// One raw observation, with categorical columns still as labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub y: f64,
    pub d: String,
    pub z: String,
    pub x: Option<String>,
}

impl Row {
    pub fn new(y: f64, d: impl Into<String>, z: impl Into<String>) -> Self {
        Self {
            y,
            d: d.into(),
            z: z.into(),
            x: None,
        }
    }

    pub fn with_covariate(mut self, x: impl Into<String>) -> Self {
        self.x = Some(x.into());
        self
    }
}

/// Orders labels numerically when every label parses as a number, lexicographically otherwise.
pub fn natural_order(labels: impl IntoIterator<Item = String>) -> Vec<String> {
    let set: BTreeSet<String> = labels.into_iter().collect();
    let mut out: Vec<String> = set.into_iter().collect();
    let numeric: Option<Vec<f64>> = out.iter().map(|l| l.trim().parse::<f64>().ok()).collect();
    if numeric.is_some() {
        out.sort_by(|a, b| {
            let (x, y) = (a.trim().parse::<f64>().unwrap(), b.trim().parse::<f64>().unwrap());
            x.partial_cmp(&y).unwrap_or(Ordering::Equal).then_with(|| a.cmp(b))
        });
    }
    out
}

/// Assigns codes `0..L` to the observed labels of every column.
///
/// Treatment, instrument and covariate labels are ordered by [`natural_order`]
/// unless `instrument_order` lists the instrument labels explicitly.
pub fn encode_dataset(rows: &[Row], instrument_order: Option<&[String]>) -> Result<Dataset> {
    if rows.is_empty() {
        return Err(Error::EmptyData);
    }
    if let Some(row) = rows.iter().position(|r| !r.y.is_finite()) {
        return Err(Error::NonFiniteOutcome { row });
    }
    let has_x = rows[0].x.is_some();
    if rows.iter().any(|r| r.x.is_some() != has_x) {
        return Err(Error::InvalidConfig(
            "covariate label present on some rows but not others".into(),
        ));
    }

    let d_labels = natural_order(rows.iter().map(|r| r.d.clone()));
    let observed_z = natural_order(rows.iter().map(|r| r.z.clone()));
    if observed_z.len() < 2 {
        return Err(Error::TooFewInstrumentLevels(observed_z.len()));
    }
    let z_labels = match instrument_order {
        None => observed_z,
        Some(order) => {
            let given: BTreeSet<&String> = order.iter().collect();
            if given.len() != order.len() {
                return Err(Error::InvalidInstrumentOrder("duplicate label".into()));
            }
            let seen: BTreeSet<&String> = observed_z.iter().collect();
            if let Some(missing) = seen.iter().find(|l| !given.contains(*l)) {
                return Err(Error::InvalidInstrumentOrder(format!(
                    "observed label `{missing}` is not listed"
                )));
            }
            order.to_vec()
        }
    };
    let x_labels = has_x.then(|| natural_order(rows.iter().filter_map(|r| r.x.clone())));

    let index = |labels: &[String]| -> BTreeMap<String, u32> {
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i as u32))
            .collect()
    };
    let (d_map, z_map) = (index(&d_labels), index(&z_labels));
    let x_map = x_labels.as_deref().map(index);

    let y = rows.iter().map(|r| r.y).collect();
    let d = rows.iter().map(|r| d_map[&r.d]).collect();
    let z = rows.iter().map(|r| z_map[&r.z]).collect();
    let x = x_map.map(|m| rows.iter().map(|r| m[r.x.as_ref().unwrap()]).collect());
    Dataset::with_labels(y, d, z, x, d_labels, z_labels, x_labels)
}

/// Codes of the smallest and largest observed treatment.
///
/// Interval members at the smallest code carry sign +1 and those at the
/// largest carry sign −1.
pub fn normalize_extremes(dataset: &Dataset) -> Result<(u32, u32)> {
    let counts = dataset.treatment_counts();
    let observed: Vec<u32> = (0..counts.len() as u32)
        .filter(|&c| counts[c as usize] > 0)
        .collect();
    match (observed.first(), observed.last()) {
        (Some(&lo), Some(&hi)) if lo != hi => Ok((lo, hi)),
        _ => Err(Error::SingleTreatmentLevel),
    }
}

/// Trimming values commonly used for the ξ grid of the ordered experiments.
pub const STANDARD_XI_GRID: [f64; 10] = [0.07, 0.1, 0.13, 0.16, 0.19, 0.22, 0.25, 0.28, 0.3, 1.0];

/// A finite positive measure on trimming values in (0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub struct NuMeasure {
    points: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MeasureRepr {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl TryFrom<MeasureRepr> for NuMeasure {
    type Error = Error;
    fn try_from(r: MeasureRepr) -> Result<Self> {
        NuMeasure::new(r.points, r.weights)
    }
}

impl From<NuMeasure> for MeasureRepr {
    fn from(m: NuMeasure) -> Self {
        MeasureRepr {
            points: m.points,
            weights: m.weights,
        }
    }
}

impl NuMeasure {
    /// Builds a measure from (ξ, weight) pairs given in any order.
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidMeasure("no points".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return Err(Error::InvalidMeasure(format!("point {p} is outside (0, 1]")));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidMeasure(format!("weight {w} is not positive and finite")));
        }
        let mut pairs: Vec<(f64, f64)> = points.into_iter().zip(weights).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidMeasure("repeated point".into()));
        }
        let (points, weights): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let total: f64 = weights.iter().sum();
        if !total.is_finite() {
            return Err(Error::InvalidMeasure("total mass is not finite".into()));
        }
        Ok(Self { points, weights })
    }

    /// Unit mass at a single trimming value.
    pub fn dirac(xi: f64) -> Result<Self> {
        Self::new(vec![xi], vec![1.0])
    }

    /// Equal weights `1/|Ξ|` on every point.
    pub fn uniform(points: &[f64]) -> Result<Self> {
        let w = 1.0 / points.len().max(1) as f64;
        Self::new(points.to_vec(), vec![w; points.len()])
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The same points with every weight multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.points.clone(), self.weights.iter().map(|w| w * c).collect())
    }

    /// Whether some point reaches `bound`, so the unweighted statistic is represented.
    pub fn covers(&self, bound: f64) -> bool {
        self.points.last().is_some_and(|&p| p >= bound)
    }

    /// ν-weighted sum of per-point values aligned with [`points`](Self::points).
    pub fn integrate(&self, per_point: &[f64]) -> f64 {
        debug_assert_eq!(per_point.len(), self.points.len());
        self.weights.iter().zip(per_point).map(|(w, v)| w * v).sum()
    }
}

/// Which testable implication is tested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Ordered,
    Unordered,
    Binary,
    OrderedWithCovariates,
    UnorderedWithCovariates,
}

impl Mode {
    pub fn uses_covariates(self) -> bool {
        matches!(self, Mode::OrderedWithCovariates | Mode::UnorderedWithCovariates)
    }

    pub fn is_unordered(self) -> bool {
        matches!(self, Mode::Unordered | Mode::UnorderedWithCovariates)
    }

    /// The covariate variant of this mode.
    pub fn with_covariates(self) -> Mode {
        match self {
            Mode::Ordered | Mode::Binary | Mode::OrderedWithCovariates => Mode::OrderedWithCovariates,
            Mode::Unordered | Mode::UnorderedWithCovariates => Mode::UnorderedWithCovariates,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Ordered => "ordered",
            Mode::Unordered => "unordered",
            Mode::Binary => "binary",
            Mode::OrderedWithCovariates => "ordered-with-covariates",
            Mode::UnorderedWithCovariates => "unordered-with-covariates",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ordered" => Mode::Ordered,
            "unordered" => Mode::Unordered,
            "binary" => Mode::Binary,
            "ordered-with-covariates" | "ordered-covariates" => Mode::OrderedWithCovariates,
            "unordered-with-covariates" | "unordered-covariates" => Mode::UnorderedWithCovariates,
            other => return Err(Error::InvalidConfig(format!("unknown mode `{other}`"))),
        })
    }
}

/// Monotonicity restriction `1{D_z' = d} <= 1{D_z = d}`, given by labels.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CTriple {
    pub d: String,
    pub z: String,
    pub z_prime: String,
}

impl CTriple {
    pub fn new(d: impl Into<String>, z: impl Into<String>, z_prime: impl Into<String>) -> Self {
        Self {
            d: d.into(),
            z: z.into(),
            z_prime: z_prime.into(),
        }
    }
}

impl FromStr for CTriple {
    type Err = Error;
    /// Parses `d:z:z'`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            [d, z, zp] if !d.is_empty() && !z.is_empty() && !zp.is_empty() => {
                Ok(CTriple::new(*d, *z, *zp))
            }
            _ => Err(Error::InvalidConfig(format!("c-set triple `{s}` is not of the form d:z:z'"))),
        }
    }
}

/// Tuning and bookkeeping for one run of the test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    /// Contact-set threshold; `f64::INFINITY` keeps every index.
    #[serde(with = "serde_extended_real")]
    pub tau_n: f64,
    pub xi0: f64,
    pub n_bootstrap: usize,
    pub alpha: f64,
    pub eta: f64,
    pub seed: u64,
    pub mode: Mode,
    pub nu: NuMeasure,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub c_set: Vec<CTriple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instrument_order: Option<Vec<String>>,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            tau_n: 2.0,
            xi0: 0.001,
            n_bootstrap: 1000,
            alpha: 0.05,
            eta: 0.0,
            seed: 0,
            mode: Mode::Ordered,
            nu: NuMeasure::dirac(0.07).expect("valid point"),
            c_set: Vec::new(),
            instrument_order: None,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_n > 0.0) {
            return Err(Error::InvalidConfig(format!("tau_n must be positive, got {}", self.tau_n)));
        }
        if !(self.xi0 > 0.0 && self.xi0.is_finite()) {
            return Err(Error::InvalidConfig(format!("xi0 must be positive, got {}", self.xi0)));
        }
        if self.n_bootstrap == 0 {
            return Err(Error::InvalidConfig("at least one bootstrap replication is required".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidConfig(format!("eta must be non-negative, got {}", self.eta)));
        }
        if self.mode.is_unordered() && self.c_set.is_empty() {
            return Err(Error::EmptyCSet);
        }
        Ok(())
    }
}

/// Outcome of one run of the test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub ts: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
    pub per_xi_sup: Vec<XiSup>,
    pub contact_set_size: usize,
    pub index_count: usize,
    pub lambda_hat: f64,
    pub effective_t_n: f64,
    pub sigma_bound: f64,
    pub bootstrap_stats: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

/// Realized supremum at one trimming value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiSup {
    pub xi: f64,
    pub sup: f64,
}

/// Serializes reals that may be `+inf` (as the string `"inf"`), since JSON has no infinity.
pub mod serde_extended_real {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(de::Error::custom(format!("expected number or \"inf\", got {t}"))),
        }
    }
}
