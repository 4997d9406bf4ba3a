//! How the contact-set threshold τ trades off: smaller τ keeps fewer indices
//! in the bootstrap, which lowers the critical value.

use ivtest::bootstrap::{bootstrap_distribution, critical_value, replication_rng};
use ivtest::model::{NuMeasure, Mode};
use ivtest::simulation::{dgp, generate};
use ivtest::spaces::build_space;
use ivtest::statistic::{estimate_contact_set, test_statistic, StatisticCache};

fn main() -> ivtest::error::Result<()> {
    let spec = dgp("binary-dgp2", 1000, None)?;
    let data = generate(&spec, &mut replication_rng(11, 0))?;
    let cache = StatisticCache::new(&data, build_space(&data, Mode::Binary, &[])?);
    let nu = NuMeasure::dirac(0.3)?;
    let ts = test_statistic(&cache, &nu);
    println!("{} indices, TS = {ts:.4}", cache.len());

    println!("{:>6} {:>10} {:>10} {:>8}", "tau", "|contact|", "crit", "reject");
    for tau in [0.5, 1.0, 2.0, 4.0, f64::INFINITY] {
        let contact = estimate_contact_set(&cache, tau, 0.001);
        // identical seeds, so every tau sees the same resamples
        let stats = bootstrap_distribution(&cache, &contact, &nu, 500, 99);
        let c = critical_value(&stats, 0.05, 0.0)?;
        println!("{tau:>6} {:>10} {c:>10.4} {:>8}", contact.size(), ts > c);
    }
    Ok(())
}
