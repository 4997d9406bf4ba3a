//! Warp-speed Monte Carlo experiments and rejection-rate tables.
//!
//! Each Monte Carlo iteration draws one dataset, computes its statistic and
//! exactly one bootstrap statistic under that dataset's own contact set. The
//! bootstrap statistics of all iterations are pooled into a single critical
//! value, and the rejection rate is the share of iterations whose statistic
//! exceeds it.

mod dgp;
mod reference;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dgp::{default_r_n, dgp, generate, DgpParams, DgpSpec, OutcomeLaw, Partition, CATALOG};

use crate::bootstrap::{bootstrap_sups, empirical_quantile, replication_rng, resample, Selection};
use crate::error::{Error, Result};
use crate::model::{serde_extended_real, NuMeasure, TestConfig, STANDARD_XI_GRID};
use crate::spaces::{build_space, CountTable};
use crate::statistic::StatisticCache;

/// Trimming grid of the unordered experiments: 0.01, 0.02, …, 0.1.
pub const UNORDERED_XI_GRID: [f64; 10] = [0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.1];

/// Trimming values of the binary experiments.
pub const BINARY_XI_GRID: [f64; 4] = [0.07, 0.22, 0.3, 1.0];

/// Contact-set thresholds compared in the size tables.
pub const SIZE_TAUS: [f64; 7] = [0.1, 0.5, 1.0, 2.0, 3.0, 4.0, f64::INFINITY];

/// Sample sizes of the power tables.
pub const POWER_SIZES: [usize; 5] = [200, 600, 1000, 1100, 2000];

/// One rejection rate with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McCell {
    pub rate: f64,
    pub mc_se: f64,
    pub n_mc: usize,
}

impl McCell {
    fn new(rejections: usize, n_mc: usize) -> Self {
        let rate = rejections as f64 / n_mc as f64;
        Self {
            rate,
            mc_se: (rate * (1.0 - rate) / n_mc as f64).sqrt(),
            n_mc,
        }
    }
}

/// A weighting measure evaluated as one column of a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub label: String,
    pub nu: NuMeasure,
}

impl Column {
    /// One Dirac column per point, followed by the equal-weight measure when `with_average` is set.
    pub fn grid(points: &[f64], with_average: bool) -> Result<Vec<Column>> {
        let mut out: Vec<Column> = points
            .iter()
            .map(|&xi| {
                Ok(Column {
                    label: format!("{xi}"),
                    nu: NuMeasure::dirac(xi)?,
                })
            })
            .collect::<Result<_>>()?;
        if with_average {
            out.push(Column {
                label: "nu_bar".into(),
                nu: NuMeasure::uniform(points)?,
            });
        }
        Ok(out)
    }
}

/// Settings shared by every cell of a warp-speed grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSettings {
    /// Contact-set thresholds, one table row each.
    pub taus: Vec<f64>,
    pub columns: Vec<Column>,
    pub xi0: f64,
    pub alpha: f64,
    pub eta: f64,
}

/// Raw output of a warp-speed grid run.
#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    /// `[tau][column]`
    pub cells: Vec<Vec<McCell>>,
    /// `[tau][column]` pooled critical values
    pub critical_values: Vec<Vec<f64>>,
    /// `[iteration][column]`
    pub statistics: Vec<Vec<f64>>,
    /// `[iteration][tau][column]`
    pub bootstrap: Vec<Vec<Vec<f64>>>,
    /// Bootstrap draws made, one per iteration.
    pub draws: usize,
}

struct Iteration {
    ts: Vec<f64>,
    tsb: Vec<Vec<f64>>,
}

/// Runs `n_mc` warp-speed iterations; iteration `r` draws from [`replication_rng`]`(seed, r)`,
/// first its dataset and then its single resample.
pub fn warp_speed_grid(spec: &DgpSpec, settings: &GridSettings, n_mc: usize, seed: u64) -> Result<GridOutcome> {
    if n_mc == 0 {
        return Err(Error::InvalidSimulation("at least one Monte Carlo iteration is required".into()));
    }
    if settings.columns.is_empty() || settings.taus.is_empty() {
        return Err(Error::InvalidSimulation("no columns or thresholds to evaluate".into()));
    }
    if !(settings.alpha > 0.0 && settings.alpha < 1.0) || !(settings.xi0 > 0.0) || settings.taus.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidConfig("alpha, xi0 or a threshold is out of range".into()));
    }
    spec.validate()?;

    let mut taus = settings.taus.clone();
    let mut tau_order: Vec<usize> = (0..taus.len()).collect();
    tau_order.sort_by(|&a, &b| settings.taus[a].total_cmp(&settings.taus[b]));
    taus.sort_by(f64::total_cmp);

    let mut xis: Vec<f64> = settings.columns.iter().flat_map(|c| c.nu.points().to_vec()).collect();
    xis.sort_by(f64::total_cmp);
    xis.dedup();
    let lookup: Vec<Vec<usize>> = settings
        .columns
        .iter()
        .map(|c| {
            c.nu
                .points()
                .iter()
                .map(|p| xis.iter().position(|x| x == p).expect("point collected above"))
                .collect()
        })
        .collect();
    let integrate = |sups: &[f64]| -> Vec<f64> {
        settings
            .columns
            .iter()
            .zip(&lookup)
            .map(|(c, idx)| c.nu.integrate(&idx.iter().map(|&k| sups[k]).collect::<Vec<_>>()))
            .collect()
    };

    let runs: Vec<Iteration> = (0..n_mc as u64)
        .into_par_iter()
        .map(|r| -> Result<Iteration> {
            let mut rng = replication_rng(seed, r);
            let data = generate(spec, &mut rng)?;
            let family = build_space(&data, spec.mode(), spec.c_set())?;
            let cache = StatisticCache::new(&data, family);
            let ts = integrate(&cache.sup_summary(&xis).sup);
            let weights = resample(data.n(), &mut rng);
            let boot = CountTable::build(cache.index(), Some(&weights));
            let per_tier = bootstrap_sups(
                &cache,
                &boot,
                Selection::Nested {
                    taus: &taus,
                    xi0: settings.xi0,
                },
                &xis,
            );
            // back to the caller's threshold order
            let mut tsb = vec![Vec::new(); taus.len()];
            for (pos, &k) in tau_order.iter().enumerate() {
                tsb[k] = integrate(&per_tier[pos]);
            }
            Ok(Iteration { ts, tsb })
        })
        .collect::<Result<_>>()?;

    let (n_tau, n_col) = (settings.taus.len(), settings.columns.len());
    let mut cells = vec![Vec::with_capacity(n_col); n_tau];
    let mut critical_values = vec![Vec::with_capacity(n_col); n_tau];
    for t in 0..n_tau {
        for c in 0..n_col {
            let pooled: Vec<f64> = runs.iter().map(|it| it.tsb[t][c]).collect();
            let crit = empirical_quantile(&pooled, settings.alpha)?.max(settings.eta);
            let rejections = runs.iter().filter(|it| it.ts[c] > crit).count();
            cells[t].push(McCell::new(rejections, n_mc));
            critical_values[t].push(crit);
        }
    }
    Ok(GridOutcome {
        cells,
        critical_values,
        draws: runs.len(),
        statistics: runs.iter().map(|it| it.ts.clone()).collect(),
        bootstrap: runs.into_iter().map(|it| it.tsb).collect(),
    })
}

/// Result of a single warp-speed experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpSpeedOutcome {
    pub dgp: String,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_n: Option<f64>,
    #[serde(with = "serde_extended_real")]
    pub tau_n: f64,
    pub rate: f64,
    pub mc_se: f64,
    pub n_mc: usize,
    pub critical_value: f64,
    pub seed: u64,
}

/// Warp-speed rejection rate of the test configured by `config` (threshold,
/// measure, `ξ0`, `α`, `η`) on data from `spec`. The design fixes the mode
/// and c-set; `config.mode` and `config.c_set` are ignored.
pub fn warp_speed_mc(spec: &DgpSpec, config: &TestConfig, n_mc: usize, seed: u64) -> Result<WarpSpeedOutcome> {
    let settings = GridSettings {
        taus: vec![config.tau_n],
        columns: vec![Column {
            label: "nu".into(),
            nu: config.nu.clone(),
        }],
        xi0: config.xi0,
        alpha: config.alpha,
        eta: config.eta,
    };
    let out = warp_speed_grid(spec, &settings, n_mc, seed)?;
    debug_assert_eq!(out.draws, n_mc);
    let cell = out.cells[0][0];
    Ok(WarpSpeedOutcome {
        dgp: spec.name.clone(),
        n: spec.n,
        r_n: spec.r_n,
        tau_n: config.tau_n,
        rate: cell.rate,
        mc_se: cell.mc_se,
        n_mc,
        critical_value: out.critical_values[0][0],
        seed,
    })
}

/// How much work a table reproduction does.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub mc_iters: usize,
    /// Replaces every row's sample size (the instrument-mixing probability keeps its original value).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_override: Option<usize>,
}

/// One row of a rejection-rate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub dgp: String,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_n: Option<f64>,
    #[serde(with = "serde_extended_real")]
    pub tau_n: f64,
    pub cells: Vec<McCell>,
    /// Full-scale reference rates for the same row, when available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<f64>>,
}

/// A reproduced table: rows × measure columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub id: String,
    pub title: String,
    pub seed: u64,
    pub n_mc: usize,
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

/// Identifiers accepted by [`reproduce_table`].
pub const TABLES: &[&str] = &[
    "table1",
    "table2",
    "degenerate-null",
    "unordered-null",
    "unordered-power",
    "binary-null",
    "binary-power",
];

struct TablePlan {
    title: &'static str,
    /// (design, n, reference per threshold)
    designs: Vec<(String, usize, Vec<Option<Vec<f64>>>)>,
    taus: Vec<f64>,
    xis: &'static [f64],
    average: bool,
}

fn null_plan(
    title: &'static str,
    design: &str,
    n: usize,
    taus: &[f64],
    xis: &'static [f64],
    average: bool,
    reference: &[(f64, &[f64])],
) -> TablePlan {
    let refs = taus
        .iter()
        .map(|t| reference.iter().find(|(rt, _)| rt == t).map(|(_, v)| v.to_vec()))
        .collect();
    TablePlan {
        title,
        designs: vec![(design.to_string(), n, refs)],
        taus: taus.to_vec(),
        xis,
        average,
    }
}

fn power_plan(
    title: &'static str,
    family: &str,
    variants: usize,
    taus: &[f64],
    xis: &'static [f64],
    average: bool,
    references: &[&[(usize, usize, &[f64])]],
) -> TablePlan {
    let mut designs = Vec::new();
    for v in 1..=variants {
        for &n in &POWER_SIZES {
            let refs = references
                .iter()
                .map(|table| {
                    table
                        .iter()
                        .find(|(rv, rn, _)| *rv == v && *rn == n)
                        .map(|(_, _, vals)| vals.to_vec())
                })
                .collect();
            designs.push((format!("{family}-dgp{v}"), n, refs));
        }
    }
    TablePlan {
        title,
        designs,
        taus: taus.to_vec(),
        xis,
        average,
    }
}

fn plan(table_id: &str) -> Result<TablePlan> {
    use reference::*;
    Ok(match table_id {
        "table1" => null_plan(
            "Rejection rates under the null, multivalued treatment and instrument",
            "multivalued-null",
            3000,
            &SIZE_TAUS,
            &STANDARD_XI_GRID,
            true,
            TABLE1,
        ),
        "degenerate-null" => null_plan(
            "Rejection rates under a null with zero limiting statistic",
            "degenerate-null",
            3000,
            &SIZE_TAUS,
            &STANDARD_XI_GRID,
            true,
            DEGENERATE_NULL,
        ),
        "unordered-null" => null_plan(
            "Rejection rates under the null, unordered treatment with a covariate",
            "unordered-null",
            2000,
            &SIZE_TAUS,
            &UNORDERED_XI_GRID,
            true,
            UNORDERED_NULL,
        ),
        "binary-null" => null_plan(
            "Rejection rates under the null, binary treatment and instrument",
            "binary-null",
            2000,
            &[1.0, 2.0, 3.0, 4.0, f64::INFINITY],
            &BINARY_XI_GRID,
            false,
            BINARY_NULL,
        ),
        "table2" => power_plan(
            "Rejection rates under fixed alternatives, multivalued treatment and instrument",
            "multivalued",
            6,
            &[2.0],
            &STANDARD_XI_GRID,
            true,
            &[TABLE2],
        ),
        "unordered-power" => power_plan(
            "Rejection rates under fixed alternatives, unordered treatment with a covariate",
            "unordered",
            5,
            &[2.0],
            &UNORDERED_XI_GRID,
            true,
            &[UNORDERED_POWER],
        ),
        "binary-power" => power_plan(
            "Rejection rates under fixed alternatives, binary treatment and instrument (tau = inf is the conservative baseline)",
            "binary",
            4,
            &[2.0, f64::INFINITY],
            &BINARY_XI_GRID,
            false,
            &[BINARY_POWER, BINARY_POWER_BASELINE],
        ),
        other => return Err(Error::UnknownTable(other.to_string())),
    })
}

/// Reproduces a catalog table at the requested scale. Design `k` of the table
/// uses seed `seed + k`; all thresholds of a design share its draws.
pub fn reproduce_table(table_id: &str, scale: Scale, seed: u64) -> Result<Table> {
    let plan = plan(table_id)?;
    if scale.mc_iters == 0 {
        return Err(Error::InvalidSimulation("at least one Monte Carlo iteration is required".into()));
    }
    let columns = Column::grid(plan.xis, plan.average)?;
    let settings = GridSettings {
        taus: plan.taus.clone(),
        columns: columns.clone(),
        xi0: 0.001,
        alpha: 0.05,
        eta: 0.0,
    };
    let mut rows = Vec::new();
    for (k, (design, n, refs)) in plan.designs.iter().enumerate() {
        let base = dgp(design, *n, None)?;
        let spec = match scale.n_override {
            Some(n) => dgp(design, n, base.r_n)?,
            None => base,
        };
        let out = warp_speed_grid(&spec, &settings, scale.mc_iters, seed.wrapping_add(k as u64))?;
        for (t, &tau) in plan.taus.iter().enumerate() {
            rows.push(TableRow {
                dgp: spec.name.clone(),
                n: spec.n,
                r_n: spec.r_n,
                tau_n: tau,
                cells: out.cells[t].clone(),
                reference: refs.get(t).cloned().flatten(),
            });
        }
    }
    Ok(Table {
        id: table_id.to_string(),
        title: plan.title.to_string(),
        seed,
        n_mc: scale.mc_iters,
        columns: columns.into_iter().map(|c| c.label).collect(),
        rows,
    })
}

fn tau_label(tau: f64) -> String {
    if tau == f64::INFINITY {
        "inf".into()
    } else {
        format!("{tau}")
    }
}

impl Table {
    /// Aligned plain-text rendering: each cell as `rate(se)`, reference rows prefixed `ref`.
    pub fn to_text(&self) -> String {
        let mut head = vec!["dgp".to_string(), "n".into(), "tau".into()];
        head.extend(self.columns.iter().cloned());
        let mut lines = vec![head];
        for row in &self.rows {
            let mut line = vec![row.dgp.clone(), row.n.to_string(), tau_label(row.tau_n)];
            line.extend(row.cells.iter().map(|c| format!("{:.3}({:.3})", c.rate, c.mc_se)));
            lines.push(line);
            if let Some(reference) = &row.reference {
                let mut line = vec!["  ref".to_string(), String::new(), String::new()];
                line.extend(reference.iter().map(|v| format!("{v:.3}")));
                lines.push(line);
            }
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|j| lines.iter().map(|l| l.get(j).map_or(0, |s| s.chars().count())).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let _ = writeln!(out, "{} [{}; n_mc = {}, seed = {}]", self.title, self.id, self.n_mc, self.seed);
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    if j == 0 {
                        format!("{s:<w$}", w = widths[j])
                    } else {
                        format!("{s:>w$}", w = widths[j])
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}
