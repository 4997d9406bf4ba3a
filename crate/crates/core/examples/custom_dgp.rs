//! Designs are data: build one by hand, check it and run a small experiment.
//! The catalog entries serialize to the same JSON shape.

use ivtest::model::{Mode, NuMeasure, TestConfig};
use ivtest::simulation::{dgp, warp_speed_mc, DgpParams, DgpSpec, OutcomeLaw, Partition};

fn main() -> ivtest::error::Result<()> {
    let normal = |mean| OutcomeLaw::Normal { mean, sd: 1.0 };
    // More defiers than compliers: switching the instrument on lowers the
    // treated share from 0.4 to 0.3, which no valid instrument can do.
    let spec = DgpSpec {
        name: "defiers".into(),
        n: 800,
        r_n: None,
        params: DgpParams {
            mode: Mode::Binary,
            d_labels: vec!["0".into(), "1".into()],
            z_labels: vec!["0".into(), "1".into()],
            instrument: Partition::new(vec![(0.5, 0), (1.0, 1)]),
            treatment: vec![
                Partition::new(vec![(0.6, 0), (1.0, 1)]),
                Partition::new(vec![(0.4, 0), (0.5, 1), (0.8, 0), (1.0, 1)]),
            ],
            outcome: vec![vec![normal(0.0), normal(0.0)], vec![normal(1.0), normal(1.0)]],
            covariate: None,
            c_set: Vec::new(),
        },
    };
    spec.validate()?;

    let config = TestConfig {
        nu: NuMeasure::dirac(0.3)?,
        ..TestConfig::default()
    };
    let out = warp_speed_mc(&spec, &config, 150, 4)?;
    println!("{}: rate {:.3} ± {:.3}", out.dgp, out.rate, out.mc_se);

    let catalog = dgp("binary-dgp1", 1000, None)?;
    println!("{}", serde_json::to_string_pretty(&catalog).expect("serializable"));
    Ok(())
}
