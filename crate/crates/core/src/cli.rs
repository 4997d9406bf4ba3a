//! Command-line front end: `ivtest test` and `ivtest simulate`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bootstrap::run_test;
use crate::error::{Error, Result};
use crate::model::{encode_dataset, CTriple, Dataset, Mode, NuMeasure, Row, TestConfig, TestResult, STANDARD_XI_GRID};
use crate::simulation::{dgp, reproduce_table, warp_speed_mc, Scale, Table, WarpSpeedOutcome};
use crate::spaces::build_space;
use crate::statistic::StatisticCache;

pub const TOOL: &str = "ivtest";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exit status for malformed or unusable data.
pub const EXIT_DATA: i32 = 2;
/// Exit status for invalid settings.
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ivtest", version, about = "Test instrument validity for local average treatment effects")]
struct Cli {
    /// Worker threads (defaults to all cores)
    #[arg(long, global = true, env = "IVTEST_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the bootstrap test on a CSV file
    Test(TestArgs),
    /// Run a warp-speed Monte Carlo experiment or reproduce a rejection-rate table
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NuKind {
    Dirac,
    Uniform,
    Custom,
}

#[derive(Debug, Args)]
struct MeasureArgs {
    /// Trimming values, comma separated (repeatable)
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    xi: Vec<f64>,

    /// Trimming grid as `start:stop:step` ranges and single values, comma separated
    #[arg(long)]
    xi_grid: Option<String>,

    /// Weighting measure over the trimming values
    #[arg(long, value_enum, default_value = "dirac")]
    nu: NuKind,

    /// Weights for `--nu custom`, aligned with the trimming values
    #[arg(long, value_delimiter = ',')]
    nu_weights: Vec<f64>,

    /// Contact-set threshold (`inf` keeps every index)
    #[arg(long, default_value = "2", value_parser = parse_extended)]
    tau: f64,

    /// Trimming used when estimating the contact set
    #[arg(long, default_value_t = 0.001)]
    xi0: f64,

    /// Lower bound applied to the critical value
    #[arg(long, default_value_t = 0.0)]
    eta: f64,

    /// Nominal level
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,

    /// Seed of every random stream
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Emit JSON instead of text
    #[arg(long)]
    json: bool,

    /// Include wall-clock timing in the report
    #[arg(long)]
    timing: bool,
}

#[derive(Debug, Args)]
struct TestArgs {
    /// Input file with a header row
    #[arg(long)]
    csv: PathBuf,

    /// Outcome column
    #[arg(long)]
    y: String,

    /// Treatment column
    #[arg(long)]
    d: String,

    /// Instrument column
    #[arg(long)]
    z: String,

    /// Covariate columns, comma separated; their joint values form the covariate cells
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,

    #[arg(long, default_value = "ordered")]
    mode: String,

    /// Monotonicity triples `d:z:z'`, comma separated (unordered modes)
    #[arg(long, value_delimiter = ',')]
    c_set: Vec<String>,

    /// Instrument labels from lowest to highest, comma separated
    #[arg(long, value_delimiter = ',')]
    instrument_order: Vec<String>,

    /// Bootstrap replications
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,

    #[command(flatten)]
    measure: MeasureArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Catalog design
    #[arg(long, conflicts_with = "table")]
    dgp: Option<String>,

    /// Table to reproduce
    #[arg(long)]
    table: Option<String>,

    /// Sample size (for a table, replaces every row's sample size)
    #[arg(long)]
    n: Option<usize>,

    /// Instrument-mixing probability of power designs
    #[arg(long)]
    r_n: Option<f64>,

    /// Monte Carlo iterations
    #[arg(long, default_value_t = 500)]
    mc: usize,

    #[command(flatten)]
    measure: MeasureArgs,
}

fn parse_extended(s: &str) -> std::result::Result<f64, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "infinity" | "+inf" | "∞" => Ok(f64::INFINITY),
        t => t.parse::<f64>().map_err(|e| format!("{s}: {e}")),
    }
}

/// Expands `start:stop:step` items to `{start + k·step < stop} ∪ {stop}`; plain numbers pass through.
pub fn parse_xi_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = |item: &str| Error::InvalidConfig(format!("cannot read `{item}` in the trimming grid"));
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = item.split(':').collect();
        match parts.as_slice() {
            [v] => out.push(v.parse::<f64>().map_err(|_| bad(item))?),
            [a, b, s] => {
                let (a, b, s): (f64, f64, f64) = (
                    a.parse().map_err(|_| bad(item))?,
                    b.parse().map_err(|_| bad(item))?,
                    s.parse().map_err(|_| bad(item))?,
                );
                if !(s > 0.0) || !(a <= b) || !a.is_finite() || !b.is_finite() {
                    return Err(bad(item));
                }
                let mut k = 0.0;
                loop {
                    let v = round_grid(a + k * s);
                    if v >= b - 1e-12 {
                        break;
                    }
                    out.push(v);
                    k += 1.0;
                }
                out.push(b);
            }
            _ => return Err(bad(item)),
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidConfig("the trimming grid is empty".into()));
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    Ok(out)
}

fn round_grid(v: f64) -> f64 {
    (v * 1e10).round() / 1e10
}

/// `0.1·b, 0.2·b, …, 0.9·b, b` for the variance bound `b`.
pub fn covariate_xi_grid(bound: f64) -> Vec<f64> {
    let mut out: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0 * bound).collect();
    out.push(bound);
    out
}

impl MeasureArgs {
    fn points(&self) -> Result<Option<Vec<f64>>> {
        let mut pts = self.xi.clone();
        if let Some(g) = &self.xi_grid {
            pts.extend(parse_xi_grid(g)?);
        }
        if pts.is_empty() {
            return Ok(None);
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        Ok(Some(pts))
    }

    /// Builds the measure; `fallback` supplies points when none were given.
    fn measure(&self, fallback: impl FnOnce() -> Result<Vec<f64>>) -> Result<NuMeasure> {
        let points = match self.points()? {
            Some(p) => p,
            None => fallback()?,
        };
        match self.nu {
            NuKind::Dirac => match points.as_slice() {
                [xi] => NuMeasure::dirac(*xi),
                _ => Err(Error::InvalidConfig(format!(
                    "--nu dirac needs exactly one trimming value, got {}",
                    points.len()
                ))),
            },
            NuKind::Uniform => NuMeasure::uniform(&points),
            NuKind::Custom => {
                if self.nu_weights.len() != points.len() {
                    return Err(Error::InvalidConfig(format!(
                        "--nu-weights has {} entries for {} trimming values",
                        self.nu_weights.len(),
                        points.len()
                    )));
                }
                NuMeasure::new(points, self.nu_weights.clone())
            }
        }
    }

    fn default_points(&self) -> Vec<f64> {
        match self.nu {
            NuKind::Dirac => vec![0.07],
            _ => STANDARD_XI_GRID.to_vec(),
        }
    }
}

/// CSV columns to read.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ColumnMap {
    pub y: String,
    pub d: String,
    pub z: String,
    pub covariates: Vec<String>,
    pub instrument_order: Option<Vec<String>>,
}

/// Reads a headed CSV file. Several covariate columns are combined into one
/// label per row, so the covariate cells are their observed joint values.
pub fn read_csv(path: &Path, map: &ColumnMap) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let (iy, id, iz) = (find(&map.y)?, find(&map.d)?, find(&map.z)?);
    let ix: Vec<usize> = map.covariates.iter().map(|c| find(c)).collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row_no = i + 1;
        let field = |k: usize| record.get(k).unwrap_or("");
        let raw = field(iy);
        let y: f64 = raw.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| Error::Parse {
            row: row_no,
            column: map.y.clone(),
            value: raw.to_string(),
        })?;
        let mut row = Row::new(y, field(id), field(iz));
        if !ix.is_empty() {
            let joint: Vec<&str> = ix.iter().map(|&k| field(k)).collect();
            row = row.with_covariate(joint.join("|"));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyData);
    }
    encode_dataset(&rows, map.instrument_order.as_deref())
}

/// Per-column level counts of the analysed data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n: usize,
    pub treatment: Vec<LevelCount>,
    pub instrument: Vec<LevelCount>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariate: Option<Vec<LevelCount>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCount {
    pub label: String,
    pub count: usize,
}

impl DatasetSummary {
    pub fn of(ds: &Dataset) -> Self {
        let pair = |labels: &[String], counts: Vec<usize>| {
            labels
                .iter()
                .zip(counts)
                .map(|(l, c)| LevelCount {
                    label: l.clone(),
                    count: c,
                })
                .collect()
        };
        Self {
            n: ds.n(),
            treatment: pair(ds.d_labels(), ds.treatment_counts()),
            instrument: pair(ds.z_labels(), ds.instrument_counts()),
            covariate: match (ds.x_labels(), ds.covariate_counts()) {
                (Some(l), Some(c)) => Some(pair(l, c)),
                _ => None,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seconds: f64,
}

/// Everything `ivtest test` reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: TestConfig,
    pub dataset: DatasetSummary,
    pub result: TestResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

/// Everything `ivtest simulate` reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<WarpSpeedOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Table>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

fn exit_code(e: &Error) -> i32 {
    if e.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_DATA
    }
}

/// Entry point of the binary.
pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

/// Parses `args` (program name first), runs the command and returns the exit status.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_CONFIG
                }
            };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start worker threads: {e}");
            return EXIT_CONFIG;
        }
    };
    let outcome = pool.install(|| match &cli.command {
        Command::Test(a) => cmd_test(a),
        Command::Simulate(a) => cmd_simulate(a),
    });
    match outcome {
        Ok(text) => {
            let _ = out.write_all(text.as_bytes());
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn cmd_test(a: &TestArgs) -> Result<String> {
    let started = Instant::now();
    let mut mode: Mode = a.mode.parse()?;
    if !a.covariates.is_empty() && !mode.uses_covariates() {
        mode = mode.with_covariates();
    }
    if mode.uses_covariates() && a.covariates.is_empty() {
        return Err(Error::MissingCovariates(mode.as_str()));
    }
    let c_set: Vec<CTriple> = a.c_set.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    if mode.is_unordered() && c_set.is_empty() {
        return Err(Error::EmptyCSet);
    }
    let instrument_order = (!a.instrument_order.is_empty()).then(|| a.instrument_order.clone());

    let dataset = read_csv(
        &a.csv,
        &ColumnMap {
            y: a.y.clone(),
            d: a.d.clone(),
            z: a.z.clone(),
            covariates: a.covariates.clone(),
            instrument_order: instrument_order.clone(),
        },
    )?;
    let nu = a.measure.measure(|| {
        if mode.uses_covariates() {
            let family = build_space(&dataset, mode, &c_set)?;
            let bound = StatisticCache::new(&dataset, family).sigma_bound();
            if !(bound > 0.0) {
                return Err(Error::InvalidConfig(
                    "the variance bound is zero; pass trimming values explicitly".into(),
                ));
            }
            Ok(covariate_xi_grid(bound))
        } else {
            Ok(a.measure.default_points())
        }
    })?;
    let config = TestConfig {
        tau_n: a.measure.tau,
        xi0: a.measure.xi0,
        n_bootstrap: a.bootstrap,
        alpha: a.measure.alpha,
        eta: a.measure.eta,
        seed: a.measure.seed,
        mode,
        nu,
        c_set,
        // the dataset is already coded in this order
        instrument_order: None,
    };
    let result = run_test(&dataset, &config)?;
    let report = RunReport {
        tool: TOOL.into(),
        version: VERSION.into(),
        seed: config.seed,
        config: TestConfig {
            instrument_order,
            ..config
        },
        dataset: DatasetSummary::of(&dataset),
        result,
        timing: a.measure.timing.then(|| Timing {
            seconds: started.elapsed().as_secs_f64(),
        }),
    };
    if a.measure.json {
        to_json(&report)
    } else {
        Ok(render_report(&report))
    }
}

fn render_report(r: &RunReport) -> String {
    let res = &r.result;
    let mut s = String::new();
    let tau = if r.config.tau_n.is_infinite() {
        "inf".to_string()
    } else {
        r.config.tau_n.to_string()
    };
    s.push_str(&format!(
        "{} {}: mode {}, n = {}, tau = {}, {} bootstrap draws, seed {}\n",
        r.tool, r.version, r.config.mode, r.dataset.n, tau, r.config.n_bootstrap, r.seed
    ));
    s.push_str(&format!(
        "statistic {:.6}  critical value {:.6}  p-value {:.4}  {}\n",
        res.ts,
        res.critical_value,
        res.p_value,
        if res.reject { "REJECT" } else { "do not reject" }
    ));
    s.push_str(&format!(
        "contact set {} of {} indices; lambda {:.6}; T_n {:.4}; variance bound {:.6}\n",
        res.contact_set_size, res.index_count, res.lambda_hat, res.effective_t_n, res.sigma_bound
    ));
    for x in &res.per_xi_sup {
        s.push_str(&format!("  xi {:<10} sup {:.6}\n", x.xi, x.sup));
    }
    for d in &res.diagnostics {
        s.push_str(&format!("note: {d}\n"));
    }
    if let Some(t) = r.timing {
        s.push_str(&format!("elapsed {:.3} s\n", t.seconds));
    }
    s
}

fn cmd_simulate(a: &SimulateArgs) -> Result<String> {
    let started = Instant::now();
    let m = &a.measure;
    let (experiment, table) = match (&a.dgp, &a.table) {
        (Some(name), None) => {
            let n = a.n.ok_or_else(|| Error::InvalidConfig("--dgp needs --n".into()))?;
            let spec = dgp(name, n, a.r_n)?;
            let config = TestConfig {
                tau_n: m.tau,
                xi0: m.xi0,
                alpha: m.alpha,
                eta: m.eta,
                seed: m.seed,
                mode: spec.mode(),
                nu: m.measure(|| Ok(m.default_points()))?,
                c_set: spec.c_set().to_vec(),
                ..TestConfig::default()
            };
            config.validate()?;
            if a.mc == 0 {
                return Err(Error::InvalidSimulation("--mc must be at least 1".into()));
            }
            (Some(warp_speed_mc(&spec, &config, a.mc, m.seed)?), None)
        }
        (None, Some(id)) => {
            let scale = Scale {
                mc_iters: a.mc,
                n_override: a.n,
            };
            (None, Some(reproduce_table(id, scale, m.seed)?))
        }
        _ => return Err(Error::InvalidConfig("pass exactly one of --dgp or --table".into())),
    };
    let report = SimulationReport {
        tool: TOOL.into(),
        version: VERSION.into(),
        seed: m.seed,
        experiment,
        table,
        timing: m.timing.then(|| Timing {
            seconds: started.elapsed().as_secs_f64(),
        }),
    };
    if m.json {
        return to_json(&report);
    }
    let mut s = String::new();
    if let Some(e) = &report.experiment {
        s.push_str(&format!(
            "{} n = {}{}: rejection rate {:.3} (MC s.e. {:.3}, {} iterations), pooled critical value {:.6}\n",
            e.dgp,
            e.n,
            e.r_n.map(|r| format!(", r_n = {r:.4}")).unwrap_or_default(),
            e.rate,
            e.mc_se,
            e.n_mc,
            e.critical_value
        ));
    }
    if let Some(t) = &report.table {
        s.push_str(&t.to_text());
    }
    if let Some(t) = report.timing {
        s.push_str(&format!("elapsed {:.3} s\n", t.seconds));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_syntax() {
        assert_eq!(parse_xi_grid("0.07:0.3:0.03,1").unwrap(), STANDARD_XI_GRID.to_vec());
        assert_eq!(parse_xi_grid("0.2").unwrap(), vec![0.2]);
        assert_eq!(parse_xi_grid("0.1:0.1:0.05").unwrap(), vec![0.1]);
        assert!(parse_xi_grid("a:b").is_err());
        assert!(parse_xi_grid("0.3:0.1:0.1").is_err());
        assert!(parse_xi_grid("").is_err());
    }

    #[test]
    fn covariate_grid_ends_at_bound() {
        let g = covariate_xi_grid(0.0004);
        assert_eq!(g.len(), 10);
        assert_eq!(*g.last().unwrap(), 0.0004);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn extended_reals() {
        assert_eq!(parse_extended("inf").unwrap(), f64::INFINITY);
        assert_eq!(parse_extended("2").unwrap(), 2.0);
        assert!(parse_extended("two").is_err());
    }

    #[test]
    fn parse_errors_are_config_errors() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run_with(["ivtest", "test"], &mut out, &mut err), EXIT_CONFIG);
        assert_eq!(run_with(["ivtest", "--version"], &mut out, &mut err), 0);
    }
}
