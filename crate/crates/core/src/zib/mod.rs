//! Bayesian zero-inflated beta panel regression.

pub mod density;
pub mod diagnostics;
pub mod loo;
pub mod model;
pub mod nuts;
pub mod prior;

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::RegressionDataset;
use crate::rng::{stream, StreamKind};

pub use density::{links, zib_logdensity};
pub use diagnostics::{ess_bulk, quantile, rhat};
pub use loo::{elpd_diff, elpd_loo, LooResult};
pub use model::{linear_predictors, predictors, Layout, ZibModel, ZibParams};
pub use prior::{Prior, PriorRegime, Priors};

/// How the per-dyad effects are structured; written to fit metadata.
pub const RANDOM_EFFECTS_NOTE: &str =
    "three correlated per-dyad intercepts (mu, zi, phi) with LKJ-priored correlation, non-centered";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    pub draws: usize,
    pub seed: u64,
    pub max_treedepth: usize,
    pub target_accept: f64,
    /// SD of the Normal(0, sd) jitter used for initial values.
    pub init_sd: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            warmup: 1000,
            draws: 1000,
            seed: 0,
            max_treedepth: 10,
            target_accept: 0.8,
            init_sd: 0.1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.draws < 4 {
            return Err(Error::Config("sampler needs at least 1 chain and 4 draws".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config(format!("target_accept must be in (0, 1), got {}", self.target_accept)));
        }
        if self.max_treedepth == 0 || self.max_treedepth > 15 {
            return Err(Error::Config("max_treedepth must be in 1..=15".into()));
        }
        if !(self.init_sd >= 0.0) {
            return Err(Error::Config("init_sd must be nonnegative".into()));
        }
        Ok(())
    }
}

impl nuts::LogDensity for ZibModel<'_> {
    fn dim(&self) -> usize {
        self.layout.dim()
    }
    fn logp_grad(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        ZibModel::logp_grad(self, q, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainStats {
    pub step_size: f64,
    pub divergences: usize,
    pub treedepth_hits: usize,
    pub mean_accept: f64,
    pub mean_leapfrog: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitDiagnostics {
    pub rhat: Vec<f64>,
    pub ess_bulk: Vec<f64>,
    pub chains: Vec<ChainStats>,
    pub divergence_rate: f64,
    pub share_rhat_above: f64,
    pub converged: bool,
    pub warnings: Vec<String>,
}

/// Posterior draws of the reported parameters plus pointwise log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct ZibFit {
    pub names: Vec<String>,
    pub chains: usize,
    pub draws_per_chain: usize,
    /// `(chain·draws + d) x names`, row-major.
    pub values: Vec<f64>,
    /// `(chain·draws + d) x rows`, row-major.
    pub pointwise_loglik: Vec<f64>,
    pub n_rows: usize,
    pub regime: PriorRegime,
    pub config: SamplerConfig,
    pub diagnostics: FitDiagnostics,
}

pub fn parameter_names(ds: &RegressionDataset) -> Vec<String> {
    let mut names = vec!["mu:(Intercept)".to_string()];
    names.extend(ds.mu.names.iter().map(|n| format!("mu:{n}")));
    names.push("zi:(Intercept)".into());
    names.extend(ds.zi.names.iter().map(|n| format!("zi:{n}")));
    names.push("phi:(Intercept)".into());
    names.extend(ds.phi.names.iter().map(|n| format!("phi:{n}")));
    for n in ["sd(mu)", "sd(zi)", "sd(phi)", "cor(mu,zi)", "cor(mu,phi)", "cor(zi,phi)"] {
        names.push(n.into());
    }
    names
}

fn reported(p: &ZibParams) -> Vec<f64> {
    let mut v = vec![p.alpha_mu];
    v.extend(&p.beta_mu);
    v.push(p.alpha_zi);
    v.extend(&p.beta_zi);
    v.push(p.alpha_phi);
    v.extend(&p.beta_phi);
    v.extend(p.sd_u);
    v.extend(p.correlations());
    v
}

fn initial_point<R: Rng>(model: &ZibModel, sd: f64, rng: &mut R) -> Result<Vec<f64>> {
    let jitter = Normal::new(0.0, sd.max(1e-12)).map_err(|e| Error::Config(e.to_string()))?;
    let mut g = vec![0.0; model.dim()];
    for _ in 0..100 {
        let theta: Vec<f64> = (0..model.dim()).map(|_| jitter.sample(rng)).collect();
        if model.logp_grad(&theta, &mut g).is_finite() {
            return Ok(theta);
        }
    }
    Err(Error::Domain("no finite initial point found in 100 attempts".into()))
}

/// Runs NUTS chains in parallel; output is independent of thread count.
pub fn sample_posterior(ds: &RegressionDataset, regime: PriorRegime, cfg: &SamplerConfig) -> Result<ZibFit> {
    cfg.validate()?;
    if ds.n() == 0 {
        return Err(Error::Argument("empty dataset".into()));
    }
    if ds.y.iter().any(|&y| !(0.0..1.0).contains(&y)) {
        return Err(Error::Domain("outcomes must lie in [0, 1)".into()));
    }
    let model = ZibModel::new(ds, regime.priors());
    let settings = nuts::NutsSettings {
        warmup: cfg.warmup,
        draws: cfg.draws,
        max_treedepth: cfg.max_treedepth,
        target_accept: cfg.target_accept,
    };
    let outputs: Vec<nuts::ChainOutput> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| -> Result<nuts::ChainOutput> {
            let mut rng = stream(cfg.seed, StreamKind::Chain, c as u64);
            let init = initial_point(&model, cfg.init_sd, &mut rng)?;
            Ok(nuts::run_chain(&model, init, &settings, rng))
        })
        .collect::<Result<_>>()?;

    let names = parameter_names(ds);
    let d = model.dim();
    let n = ds.n();
    let total = cfg.chains * cfg.draws;
    let mut values = Vec::with_capacity(total * names.len());
    let mut loglik = vec![0.0; total * n];
    for (c, out) in outputs.iter().enumerate() {
        for s in 0..cfg.draws {
            let theta = &out.samples[s * d..(s + 1) * d];
            values.extend(reported(&model.unpack(theta)));
            let row = c * cfg.draws + s;
            model.pointwise_loglik(theta, &mut loglik[row * n..(row + 1) * n]);
        }
    }

    let k = names.len();
    let per_chain = |j: usize| -> Vec<Vec<f64>> {
        (0..cfg.chains)
            .map(|c| (0..cfg.draws).map(|s| values[(c * cfg.draws + s) * k + j]).collect())
            .collect()
    };
    let rh: Vec<f64> = (0..k).map(|j| rhat(&per_chain(j))).collect();
    let ess: Vec<f64> = (0..k).map(|j| ess_bulk(&per_chain(j))).collect();
    let chains: Vec<ChainStats> = outputs
        .iter()
        .map(|o| ChainStats {
            step_size: o.step_size,
            divergences: o.divergent.iter().filter(|&&d| d).count(),
            treedepth_hits: o.treedepth.iter().filter(|&&t| t >= cfg.max_treedepth).count(),
            mean_accept: o.accept_stat.iter().sum::<f64>() / o.accept_stat.len() as f64,
            mean_leapfrog: o.n_leapfrog.iter().sum::<usize>() as f64 / o.n_leapfrog.len() as f64,
        })
        .collect();
    let divergence_rate = chains.iter().map(|c| c.divergences).sum::<usize>() as f64 / total as f64;
    let share_rhat_above = rh.iter().filter(|&&r| !(r <= 1.1)).count() as f64 / k as f64;
    let mut warnings = Vec::new();
    if divergence_rate > 0.1 {
        warnings.push(format!("divergence rate {:.3} exceeds 0.10", divergence_rate));
    }
    if share_rhat_above > 0.05 {
        warnings.push(format!("{:.1}% of parameters have rhat > 1.1", 100.0 * share_rhat_above));
    }
    let converged = warnings.is_empty();
    let n_div: usize = chains.iter().map(|c| c.divergences).sum();
    if n_div > 0 && converged {
        warnings.push(format!("{n_div} divergent transitions after warmup"));
    }
    Ok(ZibFit {
        names,
        chains: cfg.chains,
        draws_per_chain: cfg.draws,
        values,
        pointwise_loglik: loglik,
        n_rows: n,
        regime,
        config: *cfg,
        diagnostics: FitDiagnostics {
            rhat: rh,
            ess_bulk: ess,
            chains,
            divergence_rate,
            share_rhat_above,
            converged,
            warnings,
        },
    })
}

/// Interval-exclusion stars: 90% `*`, 95% `**`, 99% `***`.
pub fn stars(draws: &[f64]) -> &'static str {
    let excl = |level: f64| {
        let a = (1.0 - level) / 2.0;
        let lo = quantile(draws, a);
        let hi = quantile(draws, 1.0 - a);
        lo > 0.0 || hi < 0.0
    };
    if excl(0.99) {
        "***"
    } else if excl(0.95) {
        "**"
    } else if excl(0.90) {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub parameter: String,
    pub estimate: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    pub stars: String,
    pub rhat: f64,
    pub ess_bulk: f64,
}

impl ZibFit {
    pub fn n_draws(&self) -> usize {
        self.chains * self.draws_per_chain
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn draws_of(&self, j: usize) -> Vec<f64> {
        let k = self.names.len();
        (0..self.n_draws()).map(|s| self.values[s * k + j]).collect()
    }

    pub fn summarize(&self) -> Vec<SummaryRow> {
        (0..self.names.len())
            .map(|j| {
                let x = self.draws_of(j);
                let m = x.iter().sum::<f64>() / x.len() as f64;
                let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt();
                SummaryRow {
                    parameter: self.names[j].clone(),
                    estimate: m,
                    sd,
                    lower: quantile(&x, 0.025),
                    upper: quantile(&x, 0.975),
                    stars: stars(&x).into(),
                    rhat: self.diagnostics.rhat[j],
                    ess_bulk: self.diagnostics.ess_bulk[j],
                }
            })
            .collect()
    }

    pub fn loo(&self) -> Result<LooResult> {
        elpd_loo(&self.pointwise_loglik, self.n_draws(), self.n_rows)
    }

    /// Long format `chain,draw,parameter,value`.
    pub fn write_draws<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "chain,draw,parameter,value")?;
        let k = self.names.len();
        for c in 0..self.chains {
            for s in 0..self.draws_per_chain {
                let row = &self.values[(c * self.draws_per_chain + s) * k..][..k];
                for (name, v) in self.names.iter().zip(row) {
                    writeln!(w, "{},{},{},{:e}", c + 1, s + 1, name, v)?;
                }
            }
        }
        Ok(())
    }
}

pub fn write_summary<W: Write>(mut w: W, rows: &[SummaryRow]) -> std::io::Result<()> {
    writeln!(w, "parameter,estimate,sd,lower,upper,stars,rhat,ess_bulk")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{:.6},{},{:.4},{:.1}",
            r.parameter, r.estimate, r.sd, r.lower, r.upper, r.stars, r.rhat, r.ess_bulk
        )?;
    }
    Ok(())
}
