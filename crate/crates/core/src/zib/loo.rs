//! Pareto-smoothed importance-sampling leave-one-out.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::special::log_sum_exp;

pub const K_THRESHOLD: f64 = 0.7;

/// Generalized Pareto fit (empirical Bayes with the weakly informative
/// shrinkage of k towards 0.5). `x` must be sorted ascending.
pub fn gpd_fit(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    let prior = 3.0;
    let m = 30 + (n as f64).sqrt() as usize;
    let xstar = x[((n as f64 / 4.0 + 0.5).floor() as usize).max(1) - 1];
    let theta: Vec<f64> = (1..=m)
        .map(|j| 1.0 / x[n - 1] + (1.0 - (m as f64 / (j as f64 - 0.5)).sqrt()) / prior / xstar)
        .collect();
    let l_theta: Vec<f64> = theta
        .iter()
        .map(|&t| {
            let a = -t;
            let k = x.iter().map(|&v| (a * v).ln_1p()).sum::<f64>() / n as f64;
            n as f64 * ((a / k).ln() - k - 1.0)
        })
        .collect();
    let lse = log_sum_exp(&l_theta);
    let theta_hat: f64 = theta.iter().zip(&l_theta).map(|(t, l)| t * (l - lse).exp()).sum();
    let k = x.iter().map(|&v| (-theta_hat * v).ln_1p()).sum::<f64>() / n as f64;
    let sigma = -k / theta_hat;
    let k = (k * n as f64 + 0.5 * 10.0) / (n as f64 + 10.0);
    (k, sigma)
}

fn qgpd(p: f64, k: f64, sigma: f64) -> f64 {
    if k.abs() < 1e-12 {
        -sigma * (-p).ln_1p()
    } else {
        sigma * ((-k * (-p).ln_1p()).exp_m1()) / k
    }
}

/// Smoothed, unnormalized log weights and the Pareto shape estimate.
pub fn psis_smooth(log_ratios: &[f64]) -> (Vec<f64>, f64) {
    let s = log_ratios.len();
    let max = log_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut lw: Vec<f64> = log_ratios.iter().map(|v| v - max).collect();
    let m = (0.2 * s as f64).min(3.0 * (s as f64).sqrt()).ceil() as usize;
    if m < 5 || s <= m + 1 {
        return (lw, f64::INFINITY);
    }
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| lw[a].total_cmp(&lw[b]));
    let cutoff = lw[order[s - m - 1]];
    let tail_idx = &order[s - m..];
    let exp_cutoff = cutoff.exp();
    let tail: Vec<f64> = tail_idx.iter().map(|&i| lw[i].exp() - exp_cutoff).collect();
    if tail.iter().all(|&v| v == tail[0]) {
        return (lw, f64::INFINITY);
    }
    let (k, sigma) = gpd_fit(&tail);
    if k.is_finite() {
        for (j, &i) in tail_idx.iter().enumerate() {
            let p = (j as f64 + 0.5) / m as f64;
            lw[i] = (qgpd(p, k, sigma) + exp_cutoff).ln();
        }
    }
    for v in lw.iter_mut() {
        if *v > 0.0 {
            *v = 0.0;
        }
    }
    (lw, k)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LooResult {
    pub elpd: f64,
    pub se: f64,
    pub pointwise: Vec<f64>,
    pub pareto_k: Vec<f64>,
    pub n_high_k: usize,
    pub warning: Option<String>,
}

/// `loglik` is `draws x rows`, row-major.
pub fn elpd_loo(loglik: &[f64], n_draws: usize, n_rows: usize) -> Result<LooResult> {
    if loglik.len() != n_draws * n_rows || n_draws < 2 || n_rows == 0 {
        return Err(Error::Argument("pointwise log-likelihood has the wrong shape".into()));
    }
    let mut pointwise = Vec::with_capacity(n_rows);
    let mut ks = Vec::with_capacity(n_rows);
    let mut col = vec![0.0; n_draws];
    for i in 0..n_rows {
        for s in 0..n_draws {
            col[s] = loglik[s * n_rows + i];
        }
        let neg: Vec<f64> = col.iter().map(|v| -v).collect();
        let (lw, k) = psis_smooth(&neg);
        let norm = log_sum_exp(&lw);
        let terms: Vec<f64> = lw.iter().zip(&col).map(|(w, l)| w - norm + l).collect();
        pointwise.push(log_sum_exp(&terms));
        ks.push(k);
    }
    let elpd = pointwise.iter().sum::<f64>();
    let se = paired_se(&pointwise);
    let n_high_k = ks.iter().filter(|&&k| k > K_THRESHOLD).count();
    let warning = (n_high_k as f64 > 0.1 * n_rows as f64).then(|| {
        format!("{n_high_k} of {n_rows} rows have Pareto k > {K_THRESHOLD}; LOO estimate unreliable")
    });
    Ok(LooResult { elpd, se, pointwise, pareto_k: ks, n_high_k, warning })
}

fn paired_se(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / n;
    (n * v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Δelpd of `other` relative to `reference` on identical rows (negative: worse).
pub fn elpd_diff(reference: &LooResult, other: &LooResult) -> Result<(f64, f64)> {
    if reference.pointwise.len() != other.pointwise.len() {
        return Err(Error::Argument("LOO results cover different rows".into()));
    }
    let d: Vec<f64> = other.pointwise.iter().zip(&reference.pointwise).map(|(b, a)| b - a).collect();
    Ok((d.iter().sum(), paired_se(&d)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamKind};
    use rand::Rng;
    use rand_distr::{Distribution, Normal, StandardNormal};

    #[test]
    fn gpd_recovers_shape() {
        // draws from GPD(k = 0.3, sigma = 1) by inversion
        let mut r = stream(1, StreamKind::Simulate, 0);
        let mut x: Vec<f64> = (0..4000).map(|_| qgpd(r.random::<f64>(), 0.3, 1.0)).collect();
        x.sort_by(f64::total_cmp);
        let (k, sigma) = gpd_fit(&x);
        assert!((k - 0.3).abs() < 0.08, "{k}");
        assert!((sigma - 1.0).abs() < 0.15, "{sigma}");
    }

    #[test]
    fn self_comparison_is_zero() {
        let mut r = stream(2, StreamKind::Simulate, 0);
        let ll: Vec<f64> = (0..400 * 30).map(|_| -1.0 + 0.1 * r.sample::<f64, _>(StandardNormal)).collect();
        let a = elpd_loo(&ll, 400, 30).unwrap();
        assert_eq!(elpd_diff(&a, &a).unwrap(), (0.0, 0.0));
        assert!(a.pareto_k.iter().all(|k| *k < 0.7));
    }

    #[test]
    fn matches_analytic_normal_mean_model() {
        // y_i ~ N(theta, 1), flat prior: posterior theta ~ N(ybar, 1/n); exact
        // LOO predictive for y_i is N(ybar_{-i}, 1 + 1/(n-1)).
        let n = 20;
        let mut r = stream(4, StreamKind::Simulate, 0);
        let y: Vec<f64> = (0..n).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let ybar = y.iter().sum::<f64>() / n as f64;
        let post = Normal::new(ybar, (1.0 / n as f64).sqrt()).unwrap();
        let draws = 4000;
        let mut ll = Vec::with_capacity(draws * n);
        for _ in 0..draws {
            let th = post.sample(&mut r);
            for yi in &y {
                ll.push(-0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * (yi - th).powi(2));
            }
        }
        let res = elpd_loo(&ll, draws, n).unwrap();
        let exact: f64 = y
            .iter()
            .map(|yi| {
                let m = (ybar * n as f64 - yi) / (n - 1) as f64;
                let v = 1.0 + 1.0 / (n - 1) as f64;
                -0.5 * (2.0 * std::f64::consts::PI * v).ln() - 0.5 * (yi - m).powi(2) / v
            })
            .sum();
        assert!((res.elpd - exact).abs() < 0.1, "{} vs {exact}", res.elpd);
    }
}
