//! Conditioning on a discrete covariate. Cells become `(z, x)` pairs, `T_n`
//! shrinks accordingly and the trimming grid is scaled to the empirical
//! variance bound.

use ivtest::bootstrap::run_test;
use ivtest::cli::covariate_xi_grid;
use ivtest::model::{encode_dataset, Mode, NuMeasure, Row, TestConfig};
use ivtest::spaces::build_space;
use ivtest::statistic::StatisticCache;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> ivtest::error::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<Row> = (0..1200)
        .map(|_| {
            let region = if rng.random_bool(0.4) { "south" } else { "north" };
            let z = rng.random_range(0..2u32);
            let v: f64 = rng.random();
            let d = (v * 3.0 + z as f64 * 0.6).min(3.0) as u32;
            let y = d as f64 + if region == "south" { -0.3 } else { 0.0 } + rng.random::<f64>();
            Row::new(y, d.to_string(), z.to_string()).with_covariate(region)
        })
        .collect();
    let data = encode_dataset(&rows, None)?;

    let family = build_space(&data, Mode::OrderedWithCovariates, &[])?;
    let cache = StatisticCache::new(&data, family);
    let grid = covariate_xi_grid(cache.sigma_bound());
    println!("lambda {:.5}  T_n {:.1}  variance bound {:.4}", cache.lambda_hat(), cache.t_n(), cache.sigma_bound());
    println!("grid {:?}", grid.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>());

    let config = TestConfig {
        mode: Mode::OrderedWithCovariates,
        nu: NuMeasure::uniform(&grid)?,
        n_bootstrap: 300,
        ..TestConfig::default()
    };
    let res = run_test(&data, &config)?;
    println!("TS {:.4}  c {:.4}  p {:.3}", res.ts, res.critical_value, res.p_value);
    Ok(())
}
