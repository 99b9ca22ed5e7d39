use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::hypothesis::{t_critical, t_p_value};
use crate::error::{Error, Result};

/// One observation of a fixed-effects panel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelObs {
    /// Fixed-effect group (one trajectory).
    pub trajectory: String,
    /// Cluster for standard errors.
    pub cluster: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeLpmFit {
    pub beta: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub n_pairs: usize,
    pub n_trajectories: usize,
    pub n_clusters: usize,
}

/// Linear probability model `y ~ x` with one fixed effect per trajectory,
/// estimated by within-trajectory demeaning.
///
/// Standard errors are cluster-robust (CR1, small-sample factor G/(G-1))
/// and the interval uses a t distribution with G-1 degrees of freedom.
pub fn fe_lpm(obs: &[PanelObs]) -> Result<FeLpmFit> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, o) in obs.iter().enumerate() {
        groups.entry(o.trajectory.as_str()).or_default().push(i);
    }
    let mut xt = vec![0.0; obs.len()];
    let mut yt = vec![0.0; obs.len()];
    for idx in groups.values() {
        let n = idx.len() as f64;
        let mx = idx.iter().map(|&i| obs[i].x).sum::<f64>() / n;
        let my = idx.iter().map(|&i| obs[i].y).sum::<f64>() / n;
        for &i in idx {
            xt[i] = obs[i].x - mx;
            yt[i] = obs[i].y - my;
        }
    }
    let sxx: f64 = xt.iter().map(|x| x * x).sum();
    if sxx <= 0.0 {
        return Err(Error::NoWithinVariance);
    }
    let beta = xt.iter().zip(&yt).map(|(x, y)| x * y).sum::<f64>() / sxx;

    let mut scores: BTreeMap<&str, f64> = BTreeMap::new();
    for (i, o) in obs.iter().enumerate() {
        let resid = yt[i] - beta * xt[i];
        *scores.entry(o.cluster.as_str()).or_default() += xt[i] * resid;
    }
    let g = scores.len();
    if g < 2 {
        return Err(Error::TooFewClusters { found: g, required: 2 });
    }
    let gf = g as f64;
    let meat: f64 = scores.values().map(|s| s * s).sum();
    let std_error = (gf / (gf - 1.0) * meat).sqrt() / sxx;
    let df = gf - 1.0;
    let (p_value, half) = if std_error > 0.0 {
        (t_p_value(beta / std_error, df), t_critical(df, 0.95) * std_error)
    } else {
        (if beta == 0.0 { 1.0 } else { 0.0 }, 0.0)
    };
    Ok(FeLpmFit {
        beta,
        std_error,
        ci_low: beta - half,
        ci_high: beta + half,
        p_value,
        n_pairs: obs.len(),
        n_trajectories: groups.len(),
        n_clusters: g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ob(t: &str, c: &str, x: f64, y: f64) -> PanelObs {
        PanelObs {
            trajectory: t.into(),
            cluster: c.into(),
            x,
            y,
        }
    }

    #[test]
    fn recovers_within_slope_despite_level_shifts() {
        // y = 0.4 x + trajectory level; levels differ wildly.
        let mut obs = Vec::new();
        for (t, level) in [("a", 0.0), ("b", 5.0), ("c", -3.0)] {
            for x in [0.0, 1.0, 1.0, 0.0, 1.0] {
                obs.push(ob(t, t, x, level + 0.4 * x));
            }
        }
        let fit = fe_lpm(&obs).unwrap();
        assert!((fit.beta - 0.4).abs() < 1e-12);
        assert!(fit.std_error < 1e-9);
        assert_eq!(fit.n_clusters, 3);
        assert_eq!(fit.n_trajectories, 3);
    }

    #[test]
    fn cluster_robust_se_by_hand() {
        // Two trajectories in two clusters, two obs each.
        // a: x (0,1), y (0,1) -> xt (-.5,.5), yt (-.5,.5)
        // b: x (0,1), y (0,0) -> xt (-.5,.5), yt (0,0)
        let obs = [
            ob("a", "a", 0.0, 0.0),
            ob("a", "a", 1.0, 1.0),
            ob("b", "b", 0.0, 0.0),
            ob("b", "b", 1.0, 0.0),
        ];
        let fit = fe_lpm(&obs).unwrap();
        // sxx = 1, sxy = 0.5 -> beta = 0.5
        assert!((fit.beta - 0.5).abs() < 1e-12);
        // residuals a: (-.25, .25), b: (.25, -.25); scores a = .25, b = -.25
        // V = 2 * (0.0625 + 0.0625) / 1 = 0.25 -> se 0.5
        assert!((fit.std_error - 0.5).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let flat = [ob("a", "a", 1.0, 0.0), ob("a", "a", 1.0, 1.0)];
        assert!(matches!(fe_lpm(&flat), Err(Error::NoWithinVariance)));
        let one = [ob("a", "k", 0.0, 0.0), ob("a", "k", 1.0, 1.0)];
        assert!(matches!(fe_lpm(&one), Err(Error::TooFewClusters { .. })));
    }
}
