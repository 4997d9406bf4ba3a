//! Warp-speed Monte Carlo: one resample per simulated dataset, pooled into a
//! single critical value.

use ivtest::model::{NuMeasure, TestConfig, STANDARD_XI_GRID};
use ivtest::simulation::{dgp, warp_speed_grid, warp_speed_mc, Column, GridSettings, SIZE_TAUS};

fn main() -> ivtest::error::Result<()> {
    let spec = dgp("multivalued-null", 600, None)?;
    let config = TestConfig {
        nu: NuMeasure::dirac(0.07)?,
        ..TestConfig::default()
    };
    let one = warp_speed_mc(&spec, &config, 200, 1)?;
    println!("{} n={} tau=2: rate {:.3} ± {:.3}", one.dgp, one.n, one.rate, one.mc_se);

    // every threshold and trimming column from the same 200 datasets
    let settings = GridSettings {
        taus: SIZE_TAUS.to_vec(),
        columns: Column::grid(&STANDARD_XI_GRID[..4], true)?,
        xi0: 0.001,
        alpha: 0.05,
        eta: 0.0,
    };
    let grid = warp_speed_grid(&spec, &settings, 200, 1)?;
    assert_eq!(grid.draws, 200);
    print!("{:>6}", "tau");
    for c in &settings.columns {
        print!("{:>8}", c.label);
    }
    println!();
    for (tau, row) in settings.taus.iter().zip(&grid.cells) {
        print!("{tau:>6}");
        for cell in row {
            print!("{:>8.3}", cell.rate);
        }
        println!();
    }
    Ok(())
}
