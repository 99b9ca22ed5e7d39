use statrs::distribution::{Beta, Binomial, ContinuousCDF, Discrete, Normal, StudentsT};

use super::{all_identical, mean, require_n, sample_variance, Estimate};
use crate::error::{Error, Result};

fn students_t(df: f64) -> StudentsT {
    StudentsT::new(0.0, 1.0, df).expect("degrees of freedom are positive")
}

/// Two-sided p-value of a t statistic.
pub(crate) fn t_p_value(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    (2.0 * (1.0 - students_t(df).cdf(t.abs()))).clamp(0.0, 1.0)
}

pub(crate) fn t_critical(df: f64, level: f64) -> f64 {
    students_t(df).inverse_cdf(1.0 - (1.0 - level) / 2.0)
}

/// One-sample t-test of mean zero on paired differences, df = n - 1.
pub fn paired_t(deltas: &[f64]) -> Result<Estimate> {
    require_n(deltas.len(), 2, "paired t-test")?;
    if all_identical(deltas) {
        return Err(Error::DegenerateVariance("all paired differences are equal".into()));
    }
    let n = deltas.len() as f64;
    let m = mean(deltas);
    let se = (sample_variance(deltas) / n).sqrt();
    let t = m / se;
    let df = n - 1.0;
    let half = t_critical(df, 0.95) * se;
    Ok(Estimate {
        point: m,
        ci_low: m - half,
        ci_high: m + half,
        p_value: t_p_value(t, df),
        n: deltas.len(),
        method: "paired-t".into(),
        statistic: Some(t),
    })
}

/// Welch two-sample t-test of mean(a) - mean(b).
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<Estimate> {
    require_n(a.len(), 2, "two-sample t-test (first group)")?;
    require_n(b.len(), 2, "two-sample t-test (second group)")?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_variance(a) / na, sample_variance(b) / nb);
    let se2 = va + vb;
    if se2 <= 0.0 {
        return Err(Error::DegenerateVariance("both groups have zero variance".into()));
    }
    let se = se2.sqrt();
    let diff = mean(a) - mean(b);
    let t = diff / se;
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let half = t_critical(df, 0.95) * se;
    Ok(Estimate {
        point: diff,
        ci_low: diff - half,
        ci_high: diff + half,
        p_value: t_p_value(t, df),
        n: a.len() + b.len(),
        method: "welch-t".into(),
        statistic: Some(t),
    })
}

/// Exact two-sided binomial test with a Clopper-Pearson interval for k/n.
///
/// The p-value sums the probabilities of every outcome no more likely
/// than the observed one.
pub fn binomial_test(k: u64, n: u64, p0: f64) -> Result<Estimate> {
    if k > n {
        return Err(Error::InvalidConfig(format!("k = {k} exceeds n = {n}")));
    }
    if n == 0 {
        return Err(Error::NoEligible("binomial test with n = 0".into()));
    }
    if !(0.0..=1.0).contains(&p0) {
        return Err(Error::InvalidConfig(format!("p0 = {p0} outside [0, 1]")));
    }
    let dist = Binomial::new(p0, n).expect("valid binomial parameters");
    let observed = dist.pmf(k);
    let cutoff = observed * (1.0 + 1e-7);
    let p_value: f64 = (0..=n).map(|i| dist.pmf(i)).filter(|&p| p <= cutoff).sum();

    let alpha = 0.05;
    let (kf, nf) = (k as f64, n as f64);
    let ci_low = if k == 0 {
        0.0
    } else {
        Beta::new(kf, nf - kf + 1.0)
            .expect("positive shape")
            .inverse_cdf(alpha / 2.0)
    };
    let ci_high = if k == n {
        1.0
    } else {
        Beta::new(kf + 1.0, nf - kf)
            .expect("positive shape")
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    Ok(Estimate {
        point: kf / nf,
        ci_low,
        ci_high,
        p_value: p_value.min(1.0),
        n: n as usize,
        method: "exact-binomial".into(),
        statistic: None,
    })
}

/// Pearson correlation with a t-transform p-value and Fisher-z interval.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Estimate> {
    if x.len() != y.len() {
        return Err(Error::InvalidConfig(format!(
            "pearson: {} x values vs {} y values",
            x.len(),
            y.len()
        )));
    }
    require_n(x.len(), 3, "pearson correlation")?;
    if all_identical(x) || all_identical(y) {
        return Err(Error::DegenerateVariance("correlation with a constant series".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let n = x.len() as f64;
    let df = n - 2.0;
    let (t, p) = if r.abs() >= 1.0 {
        (f64::INFINITY.copysign(r), 0.0)
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        (t, t_p_value(t, df))
    };
    let (ci_low, ci_high) = if r.abs() >= 1.0 {
        (r, r)
    } else if x.len() > 3 {
        let z = r.atanh();
        let se = 1.0 / (n - 3.0).sqrt();
        let q = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.975);
        ((z - q * se).tanh(), (z + q * se).tanh())
    } else {
        (-1.0, 1.0)
    };
    Ok(Estimate {
        point: r,
        ci_low,
        ci_high,
        p_value: p,
        n: x.len(),
        method: "pearson".into(),
        statistic: Some(t),
    })
}
