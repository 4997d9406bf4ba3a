//! Where the supremum is attained: decode the maximizing index of each
//! trimming value back into its interval, treatment level and instrument pair.

use ivtest::bootstrap::replication_rng;
use ivtest::model::Mode;
use ivtest::simulation::{dgp, generate};
use ivtest::spaces::{build_space, IndexKey};
use ivtest::statistic::{StatisticCache, VANISHING};

fn main() -> ivtest::error::Result<()> {
    let spec = dgp("multivalued-dgp1", 1000, None)?;
    let data = generate(&spec, &mut replication_rng(3, 0))?;
    let cache = StatisticCache::new(&data, build_space(&data, Mode::Ordered, &[])?);
    let y = cache.index().sorted_y();
    let pairs = cache.family().pairs();

    let xis = [0.07, 0.16, 0.3, 1.0];
    let summary = cache.sup_summary(&xis);
    for ((xi, sup), &arg) in xis.iter().zip(&summary.sup).zip(&summary.argmax) {
        if arg == VANISHING {
            println!("xi {xi:<5} sup 0 (no positive violation)");
            continue;
        }
        let what = match cache.layout().decode(arg).expect("in range") {
            IndexKey::Interval { pair, d, sign, lo, hi } => format!(
                "{}·1{{Y ∈ [{:.3}, {:.3}], D = {}}} on z {} → {}",
                sign,
                y[lo],
                y[hi],
                data.d_labels()[d as usize],
                pairs[pair].g1,
                pairs[pair].g2
            ),
            IndexKey::Threshold { pair, c } => format!(
                "1{{D ≤ {}}} on z {} → {}",
                data.d_labels()[c as usize],
                pairs[pair].g1,
                pairs[pair].g2
            ),
        };
        println!(
            "xi {xi:<5} sup {sup:.4}  phi {:.4}  sigma {:.4}  {what}",
            cache.phi_hat(arg),
            cache.sigma_hat(arg)
        );
    }
    Ok(())
}
