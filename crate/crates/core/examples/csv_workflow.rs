//! File in, JSON out: the same path `ivtest test --csv … --json` takes.

use std::io::Write;

use ivtest::bootstrap::{replication_rng, run_test};
use ivtest::cli::{read_csv, ColumnMap, DatasetSummary, RunReport};
use ivtest::model::TestConfig;
use ivtest::simulation::{dgp, generate};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("ivtest-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("schooling.csv");

    let sample = generate(&dgp("multivalued-dgp2", 500, None)?, &mut replication_rng(8, 0))?;
    let mut f = std::fs::File::create(&path)?;
    writeln!(f, "log_wage,years,near_college")?;
    for i in 0..sample.n() {
        let r = sample.decode_row(i);
        writeln!(f, "{},{},{}", r.y, r.d, r.z)?;
    }
    drop(f);

    let map = ColumnMap {
        y: "log_wage".into(),
        d: "years".into(),
        z: "near_college".into(),
        ..ColumnMap::default()
    };
    let data = read_csv(&path, &map)?;
    let config = TestConfig {
        n_bootstrap: 300,
        seed: 1,
        ..TestConfig::default()
    };
    let result = run_test(&data, &config)?;
    let report = RunReport {
        tool: "ivtest".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: config.seed,
        config,
        dataset: DatasetSummary::of(&data),
        result,
        timing: None,
    };
    let mut json: serde_json::Value = serde_json::to_value(&report)?;
    // the resampled statistics are long; keep the summary readable
    json["result"]["bootstrap_stats"] = serde_json::json!("…");
    println!("{}", serde_json::to_string_pretty(&json)?);
    Ok(())
}
