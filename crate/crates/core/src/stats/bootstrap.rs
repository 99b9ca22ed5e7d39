use rand::Rng;
use rayon::prelude::*;

use super::{Estimate, Resampler};
use crate::error::{Error, Result};

/// Percentile bootstrap over clusters resampled with replacement.
///
/// `statistic` receives one resample (a list of cluster references) and
/// returns a scalar; non-finite results are discarded. The returned
/// `p_value` is the two-sided share of resampled statistics on the far
/// side of zero.
pub fn bootstrap_ci<C, F>(clusters: &[C], statistic: F, resampler: &Resampler) -> Result<Estimate>
where
    C: Sync,
    F: Fn(&[&C]) -> f64 + Sync,
{
    if clusters.len() < 2 {
        return Err(Error::TooFewClusters {
            found: clusters.len(),
            required: 2,
        });
    }
    if resampler.resamples == 0 {
        return Err(Error::InvalidConfig("resamples must be positive".into()));
    }
    let all: Vec<&C> = clusters.iter().collect();
    let point = statistic(&all);

    let n = clusters.len();
    let one = |i: usize| -> f64 {
        let mut rng = resampler.rng.stream(i as u64);
        let draw: Vec<&C> = (0..n).map(|_| &clusters[rng.random_range(0..n)]).collect();
        statistic(&draw)
    };
    let mut stats: Vec<f64> = if resampler.workers <= 1 {
        (0..resampler.resamples).map(one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(resampler.workers)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| (0..resampler.resamples).into_par_iter().map(one).collect())
    };
    stats.retain(|s| s.is_finite());
    if stats.is_empty() {
        return Err(Error::DegenerateVariance(
            "every bootstrap resample produced a non-finite statistic".into(),
        ));
    }
    stats.sort_by(f64::total_cmp);
    let m = stats.len() as f64;
    let below = stats.iter().filter(|&&s| s <= 0.0).count() as f64 / m;
    let above = stats.iter().filter(|&&s| s >= 0.0).count() as f64 / m;
    Ok(Estimate {
        point,
        ci_low: percentile(&stats, 0.025),
        ci_high: percentile(&stats, 0.975),
        p_value: (2.0 * below.min(above)).min(1.0),
        n,
        method: "cluster-bootstrap-percentile".into(),
        statistic: None,
    })
}

/// Linear-interpolation quantile of sorted data (the "type 7" rule).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mean;

    fn mean_of(draw: &[&f64]) -> f64 {
        draw.iter().copied().sum::<f64>() / draw.len() as f64
    }

    #[test]
    fn zero_dispersion_gives_degenerate_interval() {
        let data = vec![0.25; 10];
        let est = bootstrap_ci(&data, mean_of, &Resampler::new(500, 1)).unwrap();
        assert_eq!((est.ci_low, est.point, est.ci_high), (0.25, 0.25, 0.25));
    }

    #[test]
    fn schedule_invariant() {
        let data: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64 / 10.0).collect();
        let r1 = Resampler::new(2000, 99);
        let a = bootstrap_ci(&data, mean_of, &r1).unwrap();
        let b = bootstrap_ci(&data, mean_of, &r1.with_workers(8)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.ci_low.to_bits(), b.ci_low.to_bits());
        assert!((a.point - mean(&data)).abs() < 1e-15);
        assert!(a.ci_low < a.point && a.point < a.ci_high);
    }

    #[test]
    fn clusters_are_resampled_whole() {
        // Two clusters: statistic counts members; a resample always has 2 clusters.
        let clusters = vec![vec![1.0, 2.0, 3.0], vec![4.0]];
        let est = bootstrap_ci(
            &clusters,
            |d: &[&Vec<f64>]| d.iter().map(|c| c.len()).sum::<usize>() as f64,
            &Resampler::new(200, 3),
        )
        .unwrap();
        assert!(est.ci_low >= 2.0 && est.ci_high <= 6.0);
    }

    #[test]
    fn too_few_clusters() {
        assert!(matches!(
            bootstrap_ci(&[1.0], mean_of, &Resampler::default()),
            Err(Error::TooFewClusters { found: 1, .. })
        ));
    }

    #[test]
    fn percentile_interpolates() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&s, 0.0), 1.0);
        assert_eq!(percentile(&s, 0.5), 3.0);
        assert_eq!(percentile(&s, 0.125), 1.5);
        assert_eq!(percentile(&s, 1.0), 5.0);
    }
}
