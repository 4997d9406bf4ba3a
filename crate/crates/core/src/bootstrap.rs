//! Multinomial bootstrap restricted to the estimated contact set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Dataset, NuMeasure, TestConfig, TestResult, XiSup};
use crate::spaces::{build_space, CountTable};
use crate::statistic::{
    compute_lambda_t, contact_score, estimate_contact_set, segments, ContactSet, LevelCounts, StatisticCache,
    SupSummary,
};

/// Multinomial resampling weights: `n` index draws with replacement, counted per observation.
pub fn resample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<u32> {
    let mut w = vec![0u32; n];
    for _ in 0..n {
        w[rng.random_range(0..n)] += 1;
    }
    w
}

/// Generator for replication `b` of a run seeded with `seed`.
pub fn replication_rng(seed: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b);
    rng
}

/// Which indices enter the bootstrap supremum.
#[derive(Debug, Clone, Copy)]
pub enum Selection<'a> {
    /// A single precomputed contact set.
    Mask(&'a ContactSet),
    /// Nested contact sets, one per threshold in ascending order, all derived
    /// from the original sample with trimming `xi0`.
    Nested { taus: &'a [f64], xi0: f64 },
}

impl Selection<'_> {
    fn tiers(&self) -> usize {
        match self {
            Selection::Mask(_) => 1,
            Selection::Nested { taus, .. } => taus.len(),
        }
    }
}

/// Recentered bootstrap suprema `sup √T_nᴮ (φ̂ᴮ − φ̂) / max(ξ, σ̂ᴮ)`, one row per
/// contact-set tier and one column per entry of `xis`. Members vanishing on the
/// sample lie in every contact set and contribute 0, so an otherwise empty set gives 0.
pub fn bootstrap_sups(cache: &StatisticCache, boot: &CountTable, selection: Selection<'_>, xis: &[f64]) -> Vec<Vec<f64>> {
    if let Selection::Nested { taus, .. } = selection {
        assert!(taus.windows(2).all(|w| w[0] <= w[1]), "thresholds must be ascending");
    }
    let mut order: Vec<usize> = (0..xis.len()).collect();
    order.sort_by(|&a, &b| xis[a].total_cmp(&xis[b]));
    let sorted: Vec<f64> = order.iter().map(|&k| xis[k]).collect();

    let family = cache.family();
    let layout = cache.layout();
    let original = cache.index().counts();
    let t_n = cache.t_n();
    let sqrt_tn = t_n.sqrt();
    let (_, t_b) = compute_lambda_t(boot, family);
    let sqrt_tb = t_b.sqrt();
    let tiers = selection.tiers();

    let parts: Vec<Vec<SupSummary>> = segments(layout)
        .into_par_iter()
        .map(|seg| {
            let block = &layout.blocks()[seg.block];
            let orig = LevelCounts::new(family, original, block);
            let bs = LevelCounts::new(family, boot, block);
            let m = orig.m();
            let mut acc = vec![SupSummary::empty(&sorted); tiers];
            let mut floors: Vec<f64> = acc.iter().map(SupSummary::floor).collect();
            let mut flat = seg.start;
            for lo in seg.rows.clone() {
                for hi in lo..m {
                    let here = flat;
                    flat += 1;
                    let (phi, sigma) = orig.eval(lo, hi, t_n);
                    let tier = match selection {
                        Selection::Mask(c) => {
                            if !c.contains(here) {
                                continue;
                            }
                            0
                        }
                        Selection::Nested { taus, xi0 } => {
                            let score = contact_score(sqrt_tn, phi, sigma, xi0);
                            match taus.iter().position(|&t| t == f64::INFINITY || score <= t) {
                                Some(k) => k,
                                None => continue,
                            }
                        }
                    };
                    let (phi_b, sigma_b) = bs.eval(lo, hi, t_b);
                    acc[tier].offer(sqrt_tb * (phi_b - phi), sigma_b, here, &mut floors[tier]);
                }
            }
            acc
        })
        .collect();

    let mut merged = vec![SupSummary::empty(&sorted); tiers];
    for part in &parts {
        for (m, p) in merged.iter_mut().zip(part) {
            m.absorb(p);
        }
    }
    // a larger threshold's contact set contains every smaller one
    for t in 1..tiers {
        let (head, tail) = merged.split_at_mut(t);
        let prev = &head[t - 1];
        for k in 0..sorted.len() {
            tail[0].sup[k] = tail[0].sup[k].max(prev.sup[k]);
        }
    }
    merged
        .into_iter()
        .map(|s| {
            let mut row = vec![0.0; xis.len()];
            for (pos, &k) in order.iter().enumerate() {
                row[k] = s.sup[pos];
            }
            row
        })
        .collect()
}

/// `TSᴮ` for one set of resampling weights.
pub fn bootstrap_statistic(cache: &StatisticCache, contact: &ContactSet, weights: &[u32], nu: &NuMeasure) -> f64 {
    let boot = CountTable::build(cache.index(), Some(weights));
    let sups = bootstrap_sups(cache, &boot, Selection::Mask(contact), nu.points());
    nu.integrate(&sups[0])
}

/// `n_bootstrap` statistics, replication `b` drawing from [`replication_rng`]`(seed, b)`.
/// The output does not depend on the number of worker threads.
pub fn bootstrap_distribution(
    cache: &StatisticCache,
    contact: &ContactSet,
    nu: &NuMeasure,
    n_bootstrap: usize,
    seed: u64,
) -> Vec<f64> {
    let n = cache.index().n();
    (0..n_bootstrap as u64)
        .into_par_iter()
        .map(|b| {
            let weights = resample(n, &mut replication_rng(seed, b));
            bootstrap_statistic(cache, contact, &weights, nu)
        })
        .collect()
}

/// Position (1-based) of the `(1 − α)` order statistic among `len` values.
pub fn quantile_rank(len: usize, alpha: f64) -> usize {
    let k = ((1.0 - alpha) * len as f64 - 1e-9).ceil();
    (k.max(1.0) as usize).min(len)
}

/// `(1 − α)` empirical quantile by the order-statistic convention of [`quantile_rank`].
pub fn empirical_quantile(values: &[f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyBootstrap);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[quantile_rank(sorted.len(), alpha) - 1])
}

/// `max(ĉ, η)` with `ĉ` the `(1 − α)` quantile of the bootstrap statistics.
pub fn critical_value(stats: &[f64], alpha: f64, eta: f64) -> Result<f64> {
    Ok(empirical_quantile(stats, alpha)?.max(eta))
}

/// Share of bootstrap statistics at least as large as `ts`.
pub fn p_value(stats: &[f64], ts: f64) -> f64 {
    if stats.is_empty() {
        return f64::NAN;
    }
    stats.iter().filter(|&&s| s >= ts).count() as f64 / stats.len() as f64
}

/// Runs the full test on `dataset`.
pub fn run_test(dataset: &Dataset, config: &TestConfig) -> Result<TestResult> {
    config.validate()?;
    let reordered;
    let dataset = match &config.instrument_order {
        Some(order) => {
            reordered = dataset.with_instrument_order(order)?;
            &reordered
        }
        None => dataset,
    };
    let family = build_space(dataset, config.mode, &config.c_set)?;
    let cache = StatisticCache::new(dataset, family);

    let summary = cache.sup_summary(config.nu.points());
    let ts = config.nu.integrate(&summary.sup);
    let contact = estimate_contact_set(&cache, config.tau_n, config.xi0);
    let stats = bootstrap_distribution(&cache, &contact, &config.nu, config.n_bootstrap, config.seed);
    let critical = critical_value(&stats, config.alpha, config.eta)?;

    let mut diagnostics = Vec::new();
    if cache.t_n() == 0.0 {
        diagnostics.push("an instrument cell is empty; the statistic is identically zero".to_string());
    }
    if !config.nu.covers(cache.sigma_bound()) {
        diagnostics.push(format!(
            "largest trimming value {} is below the variance bound {:.6}",
            config.nu.points().last().copied().unwrap_or(f64::NAN),
            cache.sigma_bound()
        ));
    }

    Ok(TestResult {
        ts,
        critical_value: critical,
        p_value: p_value(&stats, ts),
        reject: ts > critical,
        per_xi_sup: summary
            .xis
            .iter()
            .zip(&summary.sup)
            .map(|(&xi, &sup)| XiSup { xi, sup })
            .collect(),
        contact_set_size: contact.size(),
        index_count: cache.len(),
        lambda_hat: cache.lambda_hat(),
        effective_t_n: cache.t_n(),
        sigma_bound: cache.sigma_bound(),
        bootstrap_stats: stats,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::STANDARD_XI_GRID;
    use crate::spaces::build_ordered_space;
    use rand_distr::{Distribution, StandardNormal};

    fn sample(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = Vec::new();
        let mut d = Vec::new();
        let mut z = Vec::new();
        for _ in 0..n {
            let zi = rng.random_range(0..3u32);
            let di = rng.random_range(0..3u32);
            let e: f64 = StandardNormal.sample(&mut rng);
            y.push(di as f64 + e);
            d.push(di);
            z.push(zi);
        }
        Dataset::from_codes(y, d, z, None).unwrap()
    }

    fn cache(ds: &Dataset) -> StatisticCache {
        StatisticCache::new(ds, build_ordered_space(ds).unwrap())
    }

    #[test]
    fn resample_sums_to_n() {
        let mut rng = replication_rng(3, 7);
        let w = resample(57, &mut rng);
        assert_eq!(w.iter().sum::<u32>(), 57);
        assert_eq!(resample(57, &mut replication_rng(3, 7)), w);
        assert_ne!(resample(57, &mut replication_rng(3, 8)), w);
    }

    #[test]
    fn identity_weights_give_zero() {
        let ds = sample(80, 1);
        let c = cache(&ds);
        let nu = NuMeasure::uniform(&STANDARD_XI_GRID).unwrap();
        for tau in [0.5, 2.0, f64::INFINITY] {
            let contact = estimate_contact_set(&c, tau, 0.001);
            assert_eq!(bootstrap_statistic(&c, &contact, &vec![1; 80], &nu), 0.0);
        }
    }

    #[test]
    fn nested_selection_matches_single_masks() {
        let ds = sample(60, 2);
        let c = cache(&ds);
        let taus = [0.3, 1.0, 2.0, f64::INFINITY];
        let xis = [0.3, 0.07, 1.0];
        for b in 0..5 {
            let w = resample(60, &mut replication_rng(11, b));
            let boot = CountTable::build(c.index(), Some(&w));
            let nested = bootstrap_sups(&c, &boot, Selection::Nested { taus: &taus, xi0: 0.001 }, &xis);
            for (t, &tau) in taus.iter().enumerate() {
                let contact = estimate_contact_set(&c, tau, 0.001);
                let single = bootstrap_sups(&c, &boot, Selection::Mask(&contact), &xis);
                assert_eq!(nested[t], single[0]);
            }
        }
    }

    #[test]
    fn quantile_convention() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(quantile_rank(100, 0.05), 95);
        assert_eq!(empirical_quantile(&v, 0.05).unwrap(), 95.0);
        assert_eq!(quantile_rank(1, 0.05), 1);
        assert_eq!(quantile_rank(10, 0.99), 1);
        assert_eq!(critical_value(&v, 0.05, 200.0).unwrap(), 200.0);
        assert!(matches!(empirical_quantile(&[], 0.05), Err(Error::EmptyBootstrap)));
        assert_eq!(p_value(&v, 95.0), 0.06);
    }

    #[test]
    fn run_test_is_reproducible_and_consistent() {
        let ds = sample(150, 4);
        let config = TestConfig {
            n_bootstrap: 60,
            seed: 9,
            ..TestConfig::default()
        };
        let a = run_test(&ds, &config).unwrap();
        let b = run_test(&ds, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.bootstrap_stats.len(), 60);
        assert_eq!(a.reject, a.ts > a.critical_value);
        assert!(a.contact_set_size <= a.index_count);
        assert!((0.0..=1.0).contains(&a.p_value));
    }
}
