//! Fourier phase-randomized surrogates and pointwise coherence p-values.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::cwt::ScaleGrid;
use crate::error::{Error, Result};
use crate::ingest::TimeSeries;
use crate::rng::{stream, StreamKind};
use crate::xwt::{CoherenceField, CoherencePlan, SmoothingSpec};

/// Smallest ensemble that can resolve p = 0.05.
pub const MIN_SURROGATES: usize = 19;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub n_surrogates: usize,
    pub seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            n_surrogates: 300,
            seed: 0,
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_surrogates < MIN_SURROGATES {
            return Err(Error::Argument(format!(
                "n_surrogates must be at least {MIN_SURROGATES}, got {}",
                self.n_surrogates
            )));
        }
        Ok(())
    }
}

/// Holds the spectrum of one series and draws surrogates from it.
pub struct SurrogateMaker {
    n: usize,
    magnitudes: Vec<f64>,
    dc: Complex64,
    nyquist: Option<Complex64>,
    inv: Arc<dyn Fft<f64>>,
}

impl SurrogateMaker {
    pub fn new(values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n < 4 {
            return Err(Error::Argument(format!("surrogates need at least 4 points, got {n}")));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let mut spec: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fwd.process(&mut spec);
        let nyquist = (n % 2 == 0).then(|| spec[n / 2]);
        Ok(Self {
            n,
            magnitudes: spec.iter().map(|c| c.norm()).collect(),
            dc: spec[0],
            nyquist,
            inv,
        })
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.n;
        let mut spec = vec![Complex64::new(0.0, 0.0); n];
        spec[0] = self.dc;
        let last = if n % 2 == 0 { n / 2 - 1 } else { (n - 1) / 2 };
        for k in 1..=last {
            let theta = rng.random_range(-PI..PI);
            spec[k] = Complex64::from_polar(self.magnitudes[k], theta);
            spec[n - k] = spec[k].conj();
        }
        if let Some(nq) = self.nyquist {
            spec[n / 2] = nq;
        }
        self.inv.process(&mut spec);
        spec.iter().map(|c| c.re / n as f64).collect()
    }
}

pub fn fourier_surrogate<R: Rng>(series: &TimeSeries, rng: &mut R) -> Result<TimeSeries> {
    let maker = SurrogateMaker::new(&series.values)?;
    TimeSeries::new(series.entity_id.clone(), series.start, maker.draw(rng))
}

/// Plus-one surrogate p-values for every `(scale, time)` cell.
///
/// Surrogate pair `k` draws x from stream `2k` and y from stream `2k + 1`,
/// so the result does not depend on thread count or scheduling.
pub fn pvalues_with_plan(
    plan: &CoherencePlan,
    x: &[f64],
    y: &[f64],
    observed: &Array2<f64>,
    cfg: &SurrogateConfig,
) -> Result<Array2<f64>> {
    cfg.validate()?;
    let mx = SurrogateMaker::new(x)?;
    let my = SurrogateMaker::new(y)?;
    let counts = (0..cfg.n_surrogates as u64)
        .into_par_iter()
        .map(|k| -> Result<Array2<u32>> {
            let sx = mx.draw(&mut stream(cfg.seed, StreamKind::Surrogate, 2 * k));
            let sy = my.draw(&mut stream(cfg.seed, StreamKind::Surrogate, 2 * k + 1));
            let r = plan.coherence_r(&sx, &sy)?;
            Ok(ndarray::Zip::from(&r)
                .and(observed)
                .map_collect(|rs, ro| u32::from(rs >= ro)))
        })
        .try_reduce(
            || Array2::zeros(observed.dim()),
            |a, b| Ok(a + b),
        )?;
    let denom = (cfg.n_surrogates + 1) as f64;
    Ok(counts.mapv(|c| (1.0 + c as f64) / denom))
}

pub fn coherence_pvalues(
    x: &TimeSeries,
    y: &TimeSeries,
    grid: &ScaleGrid,
    spec: &SmoothingSpec,
    cfg: &SurrogateConfig,
) -> Result<Array2<f64>> {
    Ok(significant_coherence(x, y, grid, spec, cfg)?
        .pvals
        .expect("p-values computed"))
}

/// Coherence field with surrogate p-values attached.
pub fn significant_coherence(
    x: &TimeSeries,
    y: &TimeSeries,
    grid: &ScaleGrid,
    spec: &SmoothingSpec,
    cfg: &SurrogateConfig,
) -> Result<CoherenceField> {
    let plan = CoherencePlan::new(grid, x.len(), spec)?;
    significant_coherence_with_plan(&plan, x, y, cfg)
}

pub fn significant_coherence_with_plan(
    plan: &CoherencePlan,
    x: &TimeSeries,
    y: &TimeSeries,
    cfg: &SurrogateConfig,
) -> Result<CoherenceField> {
    let mut field = plan.coherence(x, y)?;
    field.pvals = Some(pvalues_with_plan(plan, &x.values, &y.values, &field.r, cfg)?);
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cwt::make_scale_grid;
    use crate::ingest::YearMonth;
    use rand_distr::{Distribution, StandardNormal};
    use rustfft::FftPlanner;

    fn dft_mag(x: &[f64]) -> Vec<f64> {
        let mut s: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(x.len()).process(&mut s);
        s.iter().map(|c| c.norm()).collect()
    }

    fn ar1(n: usize, rho: f64, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, StreamKind::Synth, 0);
        let mut v = Vec::with_capacity(n);
        let mut prev = 0.0;
        for _ in 0..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            prev = rho * prev + e;
            v.push(prev);
        }
        v
    }

    fn lag1(x: &[f64]) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let num: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        let den: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
        num / den
    }

    #[test]
    fn preserves_spectrum_and_mean() {
        for n in [64, 65, 200, 201] {
            let x: Vec<f64> = ar1(n, 0.5, n as u64).iter().map(|v| v + 3.0).collect();
            let maker = SurrogateMaker::new(&x).unwrap();
            let s = maker.draw(&mut stream(1, StreamKind::Surrogate, 0));
            let (a, b) = (dft_mag(&x), dft_mag(&s));
            for (p, q) in a.iter().zip(&b) {
                assert!((p - q).abs() <= 1e-9 * p.max(1.0));
            }
            let mx = x.iter().sum::<f64>() / n as f64;
            let ms = s.iter().sum::<f64>() / n as f64;
            assert!((mx - ms).abs() < 1e-9);
            assert_ne!(x, s);
        }
    }

    #[test]
    fn autocorrelation_preserved() {
        let x = ar1(512, 0.8, 11);
        let maker = SurrogateMaker::new(&x).unwrap();
        let mean: f64 = (0..100)
            .map(|k| lag1(&maker.draw(&mut stream(2, StreamKind::Surrogate, k))))
            .sum::<f64>()
            / 100.0;
        assert!((mean - lag1(&x)).abs() < 0.1, "{mean} vs {}", lag1(&x));
    }

    #[test]
    fn too_short_rejected() {
        assert!(SurrogateMaker::new(&[1.0, 2.0, 3.0]).is_err());
        let cfg = SurrogateConfig { n_surrogates: 10, seed: 0 };
        assert!(cfg.validate().is_err());
    }

    fn ts(v: Vec<f64>) -> TimeSeries {
        TimeSeries::new("s", YearMonth { year: 2000, month: 1 }, v).unwrap()
    }

    #[test]
    fn pvalues_bounded_and_deterministic() {
        let g = make_scale_grid(18.0, 54.0, 6, 6.0).unwrap();
        let x = ts(ar1(128, 0.3, 1));
        let y = ts(ar1(128, 0.3, 2));
        let cfg = SurrogateConfig { n_surrogates: 29, seed: 42 };
        let p1 = coherence_pvalues(&x, &y, &g, &SmoothingSpec::default(), &cfg).unwrap();
        let p2 = coherence_pvalues(&x, &y, &g, &SmoothingSpec::default(), &cfg).unwrap();
        assert_eq!(p1, p2);
        assert!(p1.iter().all(|&p| (1.0 / 30.0..=1.0).contains(&p)));
        // a single-threaded pool gives the same answer
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let p3 = pool
            .install(|| coherence_pvalues(&x, &y, &g, &SmoothingSpec::default(), &cfg))
            .unwrap();
        assert_eq!(p1, p3);
    }

    #[test]
    fn self_pair_hits_minimum_p() {
        // identical series: R = 1 and almost no surrogate pair matches it
        let g = make_scale_grid(18.0, 54.0, 6, 6.0).unwrap();
        let x = ts(ar1(128, 0.3, 1));
        let cfg = SurrogateConfig { n_surrogates: 19, seed: 1 };
        let p = coherence_pvalues(&x, &x, &g, &SmoothingSpec::default(), &cfg).unwrap();
        let min = p.iter().copied().fold(1.0, f64::min);
        assert_eq!(min, 1.0 / 20.0);
    }
}
