//! Synthetic data with known structure: coupled cyclical pairs, ZIB panels
//! and a small multi-country monthly panel with dyad covariates.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Beta, Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DyadCovariates, DyadId, TimeSeries, YearMonth, DYAD_CONTINUOUS};
use crate::panel::{assemble, EquationSpec, ModelSpec, PanelInput, PanelRow, RegressionDataset};
use crate::rng::{derive_seed, stream, StreamKind};
use crate::special::inv_logit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledPairSpec {
    pub period: f64,
    pub lag: f64,
    pub common_amp: f64,
    pub idio_noise_sd: f64,
    pub length: usize,
    pub seed: u64,
}

impl CoupledPairSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0) || self.length < 4 || self.common_amp < 0.0 || self.idio_noise_sd < 0.0 {
            return Err(Error::Argument(format!("invalid coupled pair spec {self:?}")));
        }
        if (self.length as f64) < 4.0 * self.period {
            log::warn!("series length {} is below 4 periods ({})", self.length, self.period);
        }
        Ok(())
    }
}

/// x(t) = A·cos(2πt/P) + e_x, y(t) = A·cos(2π(t − lag)/P) + e_y.
pub fn gen_coupled_pair(spec: &CoupledPairSpec) -> Result<(TimeSeries, TimeSeries)> {
    spec.validate()?;
    let mut rx = stream(spec.seed, StreamKind::Synth, 0);
    let mut ry = stream(spec.seed, StreamKind::Synth, 1);
    let mut x = Vec::with_capacity(spec.length);
    let mut y = Vec::with_capacity(spec.length);
    for t in 0..spec.length {
        let t = t as f64;
        let ex: f64 = rx.sample(StandardNormal);
        let ey: f64 = ry.sample(StandardNormal);
        x.push(spec.common_amp * (2.0 * PI * t / spec.period).cos() + spec.idio_noise_sd * ex);
        y.push(spec.common_amp * (2.0 * PI * (t - spec.lag) / spec.period).cos() + spec.idio_noise_sd * ey);
    }
    let start = YearMonth { year: 2000, month: 1 };
    Ok((TimeSeries::new("X", start, x)?, TimeSeries::new("Y", start, y)?))
}

/// Generating structure of one covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateTruth {
    pub name: String,
    pub between_sd: f64,
    pub within_sd: f64,
    pub ar: f64,
}

/// Every parameter used to draw a synthetic ZIB panel. Coefficients are keyed
/// by design column (`<name>_w` / `<name>_b`) of the standardized dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZibTruth {
    pub n_groups: usize,
    pub n_years: usize,
    pub first_year: i32,
    pub covariates: Vec<CovariateTruth>,
    pub zi_terms: Vec<String>,
    pub alpha_mu: f64,
    pub alpha_zi: f64,
    pub alpha_phi: f64,
    pub beta_mu: BTreeMap<String, f64>,
    pub beta_zi: BTreeMap<String, f64>,
    pub sd_u: [f64; 3],
    /// (mu,zi), (mu,phi), (zi,phi).
    pub corr_u: [f64; 3],
    /// Overrides: force pi ≡ 0 or pi ≡ 1.
    pub pi_override: Option<f64>,
}

impl ZibTruth {
    /// Zero-inflation near 0.18, six covariates in mu, two in zi.
    pub fn moderate(n_groups: usize, n_years: usize, n_cov: usize) -> Self {
        let names: Vec<String> = DYAD_CONTINUOUS.iter().take(n_cov).map(|s| s.to_string()).collect();
        let w = [0.30, -0.20, 0.15, 0.0, 0.25, -0.10];
        let b = [0.20, 0.0, -0.25, 0.15, 0.10, 0.30];
        let mut beta_mu = BTreeMap::new();
        for (k, n) in names.iter().enumerate() {
            beta_mu.insert(format!("{n}_w"), w[k % 6]);
            beta_mu.insert(format!("{n}_b"), b[k % 6]);
        }
        let zi_terms: Vec<String> = names.iter().take(2).cloned().collect();
        let mut beta_zi = BTreeMap::new();
        for (k, n) in zi_terms.iter().enumerate() {
            beta_zi.insert(format!("{n}_w"), [-0.30, 0.20][k]);
            beta_zi.insert(format!("{n}_b"), [0.25, -0.20][k]);
        }
        Self {
            n_groups,
            n_years,
            first_year: 2000,
            covariates: names
                .into_iter()
                .map(|name| CovariateTruth {
                    name,
                    between_sd: 1.0,
                    within_sd: 1.0,
                    ar: 0.5,
                })
                .collect(),
            zi_terms,
            alpha_mu: -0.8,
            alpha_zi: -1.55,
            alpha_phi: 2.0,
            beta_mu,
            beta_zi,
            sd_u: [0.4, 0.3, 0.2],
            corr_u: [0.3, 0.0, 0.0],
            pi_override: None,
        }
    }

    /// All coefficients zero.
    pub fn null(n_groups: usize, n_years: usize, n_cov: usize) -> Self {
        let mut t = Self::moderate(n_groups, n_years, n_cov);
        t.beta_mu.values_mut().for_each(|v| *v = 0.0);
        t.beta_zi.values_mut().for_each(|v| *v = 0.0);
        t
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            mu: EquationSpec {
                terms: self.covariates.iter().map(|c| c.name.clone()).collect(),
                ..Default::default()
            },
            zi: EquationSpec {
                terms: self.zi_terms.clone(),
                ..Default::default()
            },
            year_effects: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_groups < 2 || self.n_years < 2 {
            return Err(Error::Argument("synthetic panel needs G, T >= 2".into()));
        }
        for c in &self.covariates {
            if !(c.ar.abs() < 1.0) || c.between_sd < 0.0 || c.within_sd < 0.0 {
                return Err(Error::Argument(format!("invalid covariate truth {c:?}")));
            }
        }
        Ok(())
    }
}

/// Extra outputs of [`gen_zib_panel`].
#[derive(Debug, Clone, PartialEq)]
pub struct ZibDraw {
    pub truth: ZibTruth,
    /// Model-implied zero probability per row.
    pub pi: Vec<f64>,
    pub expected_zero_share: f64,
    /// Raw between and within components, `[covariate][row]` order by dyad then year.
    pub between: Vec<Vec<f64>>,
    pub within: Vec<Vec<f64>>,
}

fn group_rng(seed: u64, g: usize) -> ChaCha20Rng {
    stream(derive_seed(seed, g as u64), StreamKind::Synth, 0)
}

fn dyad_label(g: usize) -> DyadId {
    DyadId::new(&format!("D{g:03}"), &format!("E{g:03}"))
}

/// Draws covariates, then outcomes from the ZIB model on the assembled design.
pub fn gen_zib_panel(truth: &ZibTruth, seed: u64) -> Result<(RegressionDataset, ZibDraw)> {
    truth.validate()?;
    let (g_n, t_n) = (truth.n_groups, truth.n_years);
    let k = truth.covariates.len();
    let mut between = vec![Vec::with_capacity(g_n * t_n); k];
    let mut within = vec![Vec::with_capacity(g_n * t_n); k];
    let mut input = PanelInput::default();
    let mut raw: Vec<Vec<f64>> = vec![Vec::with_capacity(g_n * t_n); k];
    let mut u = Vec::with_capacity(g_n);

    let l = {
        let [c1, c2, c3] = truth.corr_u;
        let l10 = c1;
        let l11 = (1.0 - c1 * c1).sqrt();
        let l20 = c2;
        let l21 = (c3 - c2 * c1) / l11;
        let l22 = (1.0 - l20 * l20 - l21 * l21).max(0.0).sqrt();
        [[1.0, 0.0, 0.0], [l10, l11, 0.0], [l20, l21, l22]]
    };

    let mut grngs: Vec<ChaCha20Rng> = (0..g_n).map(|g| group_rng(seed, g)).collect();
    for (g, rng) in grngs.iter_mut().enumerate() {
        let dyad = dyad_label(g);
        for (c, cov) in truth.covariates.iter().enumerate() {
            let b = cov.between_sd * rng.sample::<f64, _>(StandardNormal);
            let innov = cov.within_sd * (1.0 - cov.ar * cov.ar).sqrt();
            let mut w = cov.within_sd * rng.sample::<f64, _>(StandardNormal);
            for t in 0..t_n {
                if t > 0 {
                    w = cov.ar * w + innov * rng.sample::<f64, _>(StandardNormal);
                }
                between[c].push(b);
                within[c].push(w);
                raw[c].push(b + w);
            }
        }
        let z: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
        u.push(std::array::from_fn::<f64, 3, _>(|r| {
            truth.sd_u[r] * (l[r][0] * z[0] + l[r][1] * z[1] + l[r][2] * z[2])
        }));
        for t in 0..t_n {
            input.rows.push(PanelRow {
                dyad: dyad.clone(),
                year: truth.first_year + t as i32,
                y: 0.5,
                lag: None,
            });
        }
    }
    for (c, cov) in truth.covariates.iter().enumerate() {
        input.continuous.insert(cov.name.clone(), raw[c].clone());
    }
    let mut ds = assemble(&input, &truth.model_spec())?;

    let coef = |design: &crate::panel::Design, betas: &BTreeMap<String, f64>| -> Result<Vec<f64>> {
        design
            .names
            .iter()
            .map(|n| {
                betas
                    .get(n)
                    .copied()
                    .ok_or_else(|| Error::Argument(format!("no true coefficient for `{n}`")))
            })
            .collect()
    };
    let bm = coef(&ds.mu, &truth.beta_mu)?;
    let bz = coef(&ds.zi, &truth.beta_zi)?;
    let mut pis = Vec::with_capacity(ds.n());
    for i in 0..ds.n() {
        let g = ds.group[i];
        let rng = &mut grngs[g];
        let dot = |b: &[f64], x: &[f64]| b.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
        let mu = inv_logit(truth.alpha_mu + dot(&bm, ds.mu.row(i)) + u[g][0]);
        let pi = truth
            .pi_override
            .unwrap_or_else(|| inv_logit(truth.alpha_zi + dot(&bz, ds.zi.row(i)) + u[g][1]));
        let phi = (truth.alpha_phi + u[g][2]).exp();
        pis.push(pi);
        let zero = rng.random::<f64>() < pi;
        ds.y[i] = if zero {
            0.0
        } else {
            let beta = Beta::new(mu * phi, (1.0 - mu) * phi).map_err(|e| Error::Domain(e.to_string()))?;
            beta.sample(rng).clamp(1e-12, 1.0 - 1e-6)
        };
    }
    let expected = pis.iter().sum::<f64>() / pis.len() as f64;
    Ok((
        ds,
        ZibDraw {
            truth: truth.clone(),
            pi: pis,
            expected_zero_share: expected,
            between,
            within,
        },
    ))
}

/// Toy multi-country panel: monthly activity series and dyad covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountryPanelSpec {
    pub n_countries: usize,
    pub start_year: i32,
    pub n_years: usize,
    /// Periods (months) of the two common cycles.
    pub short_period: f64,
    pub long_period: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for CountryPanelSpec {
    fn default() -> Self {
        Self {
            n_countries: 10,
            start_year: 2000,
            n_years: 20,
            short_period: 36.0,
            long_period: 80.0,
            noise_sd: 0.6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountryPanel {
    pub series: BTreeMap<String, TimeSeries>,
    pub dyad_covariates: Vec<DyadCovariates>,
}

pub fn country_code(i: usize) -> String {
    let a = (b'A' + (i / 26 % 26) as u8) as char;
    let b = (b'A' + (i % 26) as u8) as char;
    format!("C{a}{b}")
}

/// Countries load on two common cycles with country-specific phase shifts
/// and loadings; dyad covariates are random with persistent structure.
pub fn gen_country_panel(spec: &CountryPanelSpec) -> Result<CountryPanel> {
    if spec.n_countries < 2 || spec.n_years < 2 {
        return Err(Error::Argument("country panel needs >= 2 countries and years".into()));
    }
    let months = spec.n_years * 12;
    let start = YearMonth { year: spec.start_year, month: 1 };
    let mut series = BTreeMap::new();
    let shift = Normal::new(0.0, 2.0).expect("valid");
    for c in 0..spec.n_countries {
        let mut rng = stream(spec.seed, StreamKind::Synth, 100 + c as u64);
        let lag_s: f64 = shift.sample(&mut rng);
        let lag_l: f64 = shift.sample(&mut rng);
        let load_s = 0.6 + 0.8 * rng.random::<f64>();
        let load_l = 0.6 + 0.8 * rng.random::<f64>();
        let mut ar = 0.0;
        let values: Vec<f64> = (0..months)
            .map(|t| {
                let t = t as f64;
                ar = 0.5 * ar + spec.noise_sd * rng.sample::<f64, _>(StandardNormal);
                load_s * (2.0 * PI * (t - lag_s) / spec.short_period).cos()
                    + load_l * (2.0 * PI * (t - lag_l) / spec.long_period).cos()
                    + ar
            })
            .collect();
        let code = country_code(c);
        series.insert(code.clone(), TimeSeries::new(code, start, values)?);
    }
    let codes: Vec<String> = series.keys().cloned().collect();
    let mut dyad_covariates = Vec::new();
    let mut idx = 0u64;
    for i in 0..codes.len() {
        for j in i + 1..codes.len() {
            let mut rng = stream(spec.seed, StreamKind::Synth, 10_000 + idx);
            idx += 1;
            let base: Vec<f64> = (0..DYAD_CONTINUOUS.len()).map(|_| rng.sample(StandardNormal)).collect();
            let mut state = vec![0.0; DYAD_CONTINUOUS.len()];
            let emu_from = spec.start_year + rng.random_range(0..spec.n_years as i32 + 5);
            let eu_from = emu_from - rng.random_range(0..5);
            for t in 0..spec.n_years {
                let year = spec.start_year + t as i32;
                for s in state.iter_mut() {
                    *s = 0.6 * *s + 0.5 * rng.sample::<f64, _>(StandardNormal);
                }
                let v = |k: usize| base[k] + state[k];
                let emu = u8::from(year >= emu_from);
                let eu = u8::from(year >= eu_from);
                dyad_covariates.push(DyadCovariates {
                    dyad: DyadId::new(&codes[i], &codes[j]),
                    year,
                    trade_intensity: (0.02 * v(0).exp()).min(1.0),
                    fin_open: v(1).exp(),
                    d_eu_not_emu: eu * (1 - emu),
                    d_emu: emu,
                    fiscal_gap: v(2).abs(),
                    inflation_gap: v(3).abs(),
                    spec_distance: (0.3 + 0.2 * v(4)).clamp(0.0, 2.0),
                    capital_gap: v(5).abs(),
                    urban_gap: v(6).abs(),
                    remit_gap: v(7).abs(),
                    liquid_gap: v(8).abs(),
                    fsd_gap: v(9).abs(),
                    bankdep_gap: v(10).abs(),
                });
            }
        }
    }
    Ok(CountryPanel { series, dyad_covariates })
}

/// Long monthly CSV `country,date,value`.
pub fn write_monthly_panel<W: std::io::Write>(mut w: W, series: &BTreeMap<String, TimeSeries>) -> std::io::Result<()> {
    writeln!(w, "country,date,value")?;
    for (id, s) in series {
        for (t, v) in s.values.iter().enumerate() {
            writeln!(w, "{id},{},{v}", s.month_at(t))?;
        }
    }
    Ok(())
}
