//! Rank-normalized split R-hat and bulk effective sample size.

use statrs::distribution::{ContinuousCDF, Normal};

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

fn split(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

/// Normal scores of pooled average ranks, keeping the chain shape.
fn z_scale(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let all: Vec<f64> = chains.iter().flatten().copied().collect();
    let s = all.len();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| all[a].total_cmp(&all[b]));
    let mut ranks = vec![0.0; s];
    let mut i = 0;
    while i < s {
        let mut j = i;
        while j + 1 < s && all[order[j + 1]] == all[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = r;
        }
        i = j + 1;
    }
    let normal = Normal::standard();
    let mut it = ranks.into_iter().map(|r| normal.inverse_cdf((r - 0.375) / (s as f64 + 0.25)));
    chains.iter().map(|c| (0..c.len()).map(|_| it.next().expect("sized")).collect()).collect()
}

fn rhat_basic(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = mean(&chains.iter().map(|c| var(c)).collect::<Vec<_>>());
    let b = n * if means.len() > 1 { var(&means) } else { 0.0 };
    let var_hat = (n - 1.0) / n * w + b / n;
    (var_hat / w).sqrt()
}

fn autocovariance(x: &[f64]) -> Vec<f64> {
    use rustfft::num_complex::Complex64;
    let n = x.len();
    let m = mean(x);
    let nfft = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = x.iter().map(|v| Complex64::new(v - m, 0.0)).collect();
    buf.resize(nfft, Complex64::new(0.0, 0.0));
    let mut planner = rustfft::FftPlanner::new();
    planner.plan_fft_forward(nfft).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex64::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(nfft).process(&mut buf);
    (0..n).map(|k| buf[k].re / (nfft as f64 * n as f64)).collect()
}

/// Geyer initial-monotone ESS over several chains.
fn ess_basic(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains[0].len();
    if n < 4 {
        return f64::NAN;
    }
    let acov: Vec<Vec<f64>> = chains.iter().map(|c| autocovariance(c)).collect();
    let chain_mean: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let chain_var: Vec<f64> = acov.iter().map(|a| a[0] * n as f64 / (n as f64 - 1.0)).collect();
    let mean_var = mean(&chain_var);
    let mut var_plus = mean_var * (n as f64 - 1.0) / n as f64;
    if m > 1 {
        var_plus += var(&chain_mean);
    }
    if !(var_plus > 0.0) {
        return f64::NAN;
    }
    let acov_t = |t: usize| mean(&acov.iter().map(|a| a[t]).collect::<Vec<_>>());
    let mut rho = vec![0.0; n];
    rho[0] = 1.0;
    let mut even = 1.0;
    let mut odd = 1.0 - (mean_var - acov_t(1)) / var_plus;
    rho[1] = odd;
    let mut t = 1;
    while t + 5 < n && even + odd > 0.0 {
        even = 1.0 - (mean_var - acov_t(t + 1)) / var_plus;
        odd = 1.0 - (mean_var - acov_t(t + 2)) / var_plus;
        if even + odd >= 0.0 {
            rho[t + 1] = even;
            rho[t + 2] = odd;
        }
        t += 2;
    }
    let max_t = t;
    if even > 0.0 {
        rho[max_t + 1] = even;
    }
    let mut t = 1;
    while t + 2 <= max_t {
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t] {
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0;
            rho[t + 2] = rho[t + 1];
        }
        t += 2;
    }
    let s = (m * n) as f64;
    let mut tau = -1.0 + 2.0 * rho[..=max_t].iter().sum::<f64>() + rho[max_t + 1];
    tau = tau.max(1.0 / s.log10());
    s / tau
}

fn is_constant(chains: &[Vec<f64>]) -> bool {
    let first = chains[0][0];
    chains.iter().flatten().all(|&v| v == first)
}

/// max(bulk, tail) rank-normalized split R-hat. Constant draws give 1.
pub fn rhat(chains: &[Vec<f64>]) -> f64 {
    if is_constant(chains) {
        return 1.0;
    }
    let s = split(chains);
    let bulk = rhat_basic(&z_scale(&s));
    let all: Vec<f64> = chains.iter().flatten().copied().collect();
    let med = quantile(&all, 0.5);
    let folded: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|v| (v - med).abs()).collect()).collect();
    let tail = rhat_basic(&z_scale(&split(&folded)));
    bulk.max(tail)
}

pub fn ess_bulk(chains: &[Vec<f64>]) -> f64 {
    if is_constant(chains) {
        return f64::NAN;
    }
    ess_basic(&z_scale(&split(chains)))
}

/// Linear-interpolation quantile (R type 7).
pub fn quantile(x: &[f64], p: f64) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}
