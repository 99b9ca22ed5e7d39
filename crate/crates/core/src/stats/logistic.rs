use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 100;
const TOLERANCE: f64 = 1e-8;

/// Logistic regression of success on within-group demeaned adherence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub intercept: f64,
    pub coefficient: f64,
    pub std_error: f64,
    pub n: usize,
    pub iterations: usize,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl LogisticFit {
    /// Success probability at a demeaned covariate value.
    pub fn predict(&self, demeaned: f64) -> f64 {
        sigmoid(self.intercept + self.coefficient * demeaned)
    }

    /// Fitted probability at the covariate mean (zero after demeaning).
    pub fn mean_probability(&self) -> f64 {
        sigmoid(self.intercept)
    }

    pub fn odds_ratio(&self, gap: f64) -> f64 {
        (self.coefficient * gap).exp()
    }

    /// Change in success probability when moving `gap` from a point where
    /// the probability is `base`.
    pub fn discrete_lift(&self, gap: f64, base: f64) -> f64 {
        sigmoid(logit(base) + self.coefficient * gap) - base
    }

    /// First-order lift: slope of the logistic curve at `base` times `gap`.
    pub fn marginal_lift(&self, gap: f64, base: f64) -> f64 {
        self.coefficient * base * (1.0 - base) * gap
    }
}

/// Fits `success ~ 1 + (adherence - group mean)` by Newton-Raphson
/// (iteratively reweighted least squares) until both coefficients move by
/// less than 1e-8.
///
/// Each inner vector holds the `(adherence, success)` observations of one
/// group (unit). Separation in the demeaned covariate aborts the fit.
pub fn logistic_demeaned(groups: &[Vec<(f64, bool)>]) -> Result<LogisticFit> {
    if !groups.iter().any(|g| g.iter().any(|o| o.1) && g.iter().any(|o| !o.1)) {
        return Err(Error::NoEligible(
            "logistic fit needs at least one group with both outcomes".into(),
        ));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for g in groups.iter().filter(|g| !g.is_empty()) {
        let m = g.iter().map(|o| o.0).sum::<f64>() / g.len() as f64;
        for &(a, s) in g {
            xs.push(a - m);
            ys.push(if s { 1.0 } else { 0.0 });
        }
    }
    check_separation(&xs, &ys)?;

    let n = xs.len();
    let mut a = {
        let rate = ys.iter().sum::<f64>() / n as f64;
        logit(rate)
    };
    let mut b = 0.0;
    for iteration in 1..=MAX_ITERATIONS {
        let (mut g0, mut g1) = (0.0, 0.0);
        let (mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            let p = sigmoid(a + b * x);
            let w = p * (1.0 - p);
            g0 += y - p;
            g1 += (y - p) * x;
            h00 += w;
            h01 += w * x;
            h11 += w * x * x;
        }
        let det = h00 * h11 - h01 * h01;
        if det <= 0.0 || !det.is_finite() {
            return Err(Error::DegenerateVariance(
                "singular information matrix in logistic fit".into(),
            ));
        }
        let da = (h11 * g0 - h01 * g1) / det;
        let db = (h00 * g1 - h01 * g0) / det;
        a += da;
        b += db;
        if da.abs() < TOLERANCE && db.abs() < TOLERANCE {
            let (mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0);
            for &x in &xs {
                let p = sigmoid(a + b * x);
                let w = p * (1.0 - p);
                h00 += w;
                h01 += w * x;
                h11 += w * x * x;
            }
            let det = h00 * h11 - h01 * h01;
            return Ok(LogisticFit {
                intercept: a,
                coefficient: b,
                std_error: (h00 / det).sqrt(),
                n,
                iterations: iteration,
            });
        }
    }
    Err(Error::NoConvergence(MAX_ITERATIONS))
}

fn check_separation(xs: &[f64], ys: &[f64]) -> Result<()> {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for (&x, &y) in xs.iter().zip(ys) {
        let k = y as usize;
        lo[k] = lo[k].min(x);
        hi[k] = hi[k].max(x);
    }
    if hi[0] <= lo[1] || hi[1] <= lo[0] {
        return Err(Error::PerfectSeparation(format!(
            "failures span [{:.4}, {:.4}], successes span [{:.4}, {:.4}]",
            lo[0], hi[0], lo[1], hi[1]
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lift_translations() {
        let fit = LogisticFit {
            intercept: 0.0,
            coefficient: 3.549,
            std_error: 0.0,
            n: 0,
            iterations: 0,
        };
        assert!((fit.odds_ratio(0.060) - (3.549f64 * 0.060).exp()).abs() < 1e-12);
        assert!((fit.odds_ratio(0.060) - 1.24).abs() < 0.005);
        assert!((fit.marginal_lift(0.060, 0.5) - 0.25 * 3.549 * 0.060).abs() < 1e-12);
        assert!((fit.marginal_lift(0.060, 0.5) - 0.053).abs() < 0.0005);
        assert!((fit.discrete_lift(0.082, 0.5) - 0.072).abs() < 0.0005);
        assert!((fit.odds_ratio(0.082) - 1.34).abs() < 0.005);
        assert_eq!(fit.discrete_lift(0.0, 0.5), 0.0);
        assert_eq!(fit.odds_ratio(0.0), 1.0);
    }

    #[test]
    fn separation_is_reported() {
        let groups = vec![
            vec![(0.9, true), (0.1, false)],
            vec![(0.8, true), (0.2, false), (0.3, false)],
        ];
        assert!(matches!(logistic_demeaned(&groups), Err(Error::PerfectSeparation(_))));
    }

    #[test]
    fn null_relationship_gives_zero_slope() {
        // Each group mirrors its outcomes across the same covariate values.
        let groups: Vec<Vec<(f64, bool)>> = (0..50)
            .map(|i| {
                let lo = 0.1 + (i % 5) as f64 * 0.05;
                vec![(lo, true), (lo, false), (lo + 0.3, true), (lo + 0.3, false)]
            })
            .collect();
        let fit = logistic_demeaned(&groups).unwrap();
        assert!(fit.coefficient.abs() < 1e-9);
        assert!(fit.intercept.abs() < 1e-9);
    }

    #[test]
    fn requires_a_mixed_group() {
        let groups = vec![vec![(0.5, true), (0.6, true)], vec![(0.1, false), (0.2, false)]];
        assert!(matches!(logistic_demeaned(&groups), Err(Error::NoEligible(_))));
    }
}
