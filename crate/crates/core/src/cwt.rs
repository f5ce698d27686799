//! Morlet continuous wavelet transform on a dyadic scale grid.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{TimeSeries, YearMonth};

pub const DEFAULT_ETA: f64 = 6.0;
pub const DEFAULT_VOICES: u32 = 12;
pub const DEFAULT_COI_FACTOR: f64 = SQRT_2;

/// Kernel support in units of the scale; the envelope is below 1e-13 beyond it.
const KERNEL_SUPPORT: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleGrid {
    pub scales: Vec<f64>,
    pub periods: Vec<f64>,
    pub mu_f: f64,
    pub eta: f64,
    pub voices_per_octave: u32,
    /// COI half-width = `coi_factor * scale`, in months.
    pub coi_factor: f64,
}

pub fn make_scale_grid(period_min: f64, period_max: f64, voices_per_octave: u32, eta: f64) -> Result<ScaleGrid> {
    if !(period_min > 0.0 && period_min < period_max && period_max.is_finite()) {
        return Err(Error::Argument(format!(
            "period bounds must satisfy 0 < min < max, got [{period_min}, {period_max}]"
        )));
    }
    if voices_per_octave == 0 {
        return Err(Error::Argument("voices_per_octave must be at least 1".into()));
    }
    if !(eta > 0.0) {
        return Err(Error::Argument(format!("eta must be positive, got {eta}")));
    }
    let mu_f = eta / (2.0 * PI);
    let mut scales = Vec::new();
    let mut j = 0u32;
    loop {
        let p = period_min * 2f64.powf(j as f64 / voices_per_octave as f64);
        if p > period_max * (1.0 + 1e-12) {
            break;
        }
        scales.push(p * mu_f);
        j += 1;
    }
    let periods = scales.iter().map(|s| s / mu_f).collect();
    Ok(ScaleGrid {
        scales,
        periods,
        mu_f,
        eta,
        voices_per_octave,
        coi_factor: DEFAULT_COI_FACTOR,
    })
}

impl ScaleGrid {
    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    pub fn with_coi_factor(mut self, factor: f64) -> Self {
        self.coi_factor = factor;
        self
    }

    /// Indices of grid periods in `[lo, hi)`.
    pub fn band_indices(&self, lo: f64, hi: f64) -> Vec<usize> {
        self.periods
            .iter()
            .enumerate()
            .filter(|(_, &p)| p >= lo && p < hi)
            .map(|(i, _)| i)
            .collect()
    }

    /// Grid index whose period is nearest to `period` on a log scale.
    pub fn nearest(&self, period: f64) -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (i, p) in self.periods.iter().enumerate() {
            let d = (p / period).ln().abs();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        best
    }

    pub fn coi_half_width(&self, scale_index: usize) -> f64 {
        self.coi_factor * self.scales[scale_index]
    }

    pub fn same_as(&self, other: &ScaleGrid) -> bool {
        self.scales == other.scales && self.coi_factor == other.coi_factor
    }
}

/// Morlet mother wavelet, `π^{-1/4} e^{iηu} e^{-u²/2}`.
pub fn morlet(u: f64, eta: f64) -> Complex64 {
    let env = PI.powf(-0.25) * (-0.5 * u * u).exp();
    Complex64::from_polar(env, eta * u)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CwtField {
    pub grid: ScaleGrid,
    pub start: YearMonth,
    /// scale × time
    pub coeffs: Array2<Complex64>,
    /// true = inside the cone of influence
    pub coi_mask: Array2<bool>,
}

impl CwtField {
    pub fn n_times(&self) -> usize {
        self.coeffs.ncols()
    }
}

/// `(s, τ)` is masked when τ lies within `coi_factor·s` of either end.
pub fn coi_mask(grid: &ScaleGrid, n_times: usize) -> Array2<bool> {
    let mut mask = Array2::from_elem((grid.len(), n_times), false);
    for (j, mut row) in mask.rows_mut().into_iter().enumerate() {
        let h = grid.coi_half_width(j);
        for (t, m) in row.iter_mut().enumerate() {
            *m = (t as f64) < h || ((n_times - 1 - t) as f64) < h;
        }
    }
    mask
}

pub fn power(field: &CwtField) -> Array2<f64> {
    field.coeffs.mapv(|c| c.norm_sqr())
}

/// Precomputed FFTs and kernel spectra for one grid and series length.
pub struct CwtPlan {
    grid: ScaleGrid,
    n: usize,
    nfft: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    kernels: Vec<Vec<Complex64>>,
    coi: Array2<bool>,
}

impl CwtPlan {
    pub fn new(grid: &ScaleGrid, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Argument("transform needs at least 2 observations".into()));
        }
        if grid.is_empty() {
            return Err(Error::Argument("empty scale grid".into()));
        }
        let max_half = grid
            .scales
            .iter()
            .map(|&s| kernel_half_len(s, n))
            .max()
            .expect("non-empty grid");
        let nfft = (n + max_half).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(nfft);
        let inv = planner.plan_fft_inverse(nfft);
        let scale_norm = 1.0 / nfft as f64;
        let kernels = grid
            .scales
            .iter()
            .map(|&s| {
                // W(τ) = Σ_m x(m) h(τ − m) with h(j) = ψ(j/s)/√s
                let half = kernel_half_len(s, n) as isize;
                let mut h = vec![Complex64::new(0.0, 0.0); nfft];
                let norm = 1.0 / s.sqrt();
                for j in -half..=half {
                    let idx = j.rem_euclid(nfft as isize) as usize;
                    h[idx] = morlet(j as f64 / s, grid.eta) * norm;
                }
                fwd.process(&mut h);
                for v in h.iter_mut() {
                    *v *= scale_norm;
                }
                h
            })
            .collect();
        Ok(Self {
            grid: grid.clone(),
            n,
            nfft,
            fwd,
            inv,
            kernels,
            coi: coi_mask(grid, n),
        })
    }

    pub fn grid(&self) -> &ScaleGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn coi(&self) -> &Array2<bool> {
        &self.coi
    }

    /// Coefficients (scale × time) of the mean-removed `values`.
    pub fn transform(&self, values: &[f64]) -> Result<Array2<Complex64>> {
        if values.len() != self.n {
            return Err(Error::Alignment(format!(
                "plan built for length {}, got {}",
                self.n,
                values.len()
            )));
        }
        let mean = values.iter().sum::<f64>() / self.n as f64;
        let mut xf = vec![Complex64::new(0.0, 0.0); self.nfft];
        for (dst, &v) in xf.iter_mut().zip(values) {
            dst.re = v - mean;
        }
        self.fwd.process(&mut xf);

        let mut out = Array2::from_elem((self.grid.len(), self.n), Complex64::new(0.0, 0.0));
        let mut buf = vec![Complex64::new(0.0, 0.0); self.nfft];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inv.get_inplace_scratch_len()];
        for (j, kernel) in self.kernels.iter().enumerate() {
            for ((b, x), k) in buf.iter_mut().zip(&xf).zip(kernel) {
                *b = x * k;
            }
            self.inv.process_with_scratch(&mut buf, &mut scratch);
            let mut row = out.row_mut(j);
            for (dst, src) in row.iter_mut().zip(&buf[..self.n]) {
                *dst = *src;
            }
        }
        Ok(out)
    }

    pub fn field(&self, series: &TimeSeries) -> Result<CwtField> {
        Ok(CwtField {
            grid: self.grid.clone(),
            start: series.start,
            coeffs: self.transform(&series.values)?,
            coi_mask: self.coi.clone(),
        })
    }
}

fn kernel_half_len(scale: f64, n: usize) -> usize {
    ((KERNEL_SUPPORT * scale).ceil() as usize).min(n - 1)
}

/// One-shot transform; build a [`CwtPlan`] to reuse kernels across series.
pub fn cwt_morlet(series: &TimeSeries, grid: &ScaleGrid) -> Result<CwtField> {
    if series.is_empty() {
        return Err(Error::Argument("empty series".into()));
    }
    let longest = grid.periods.last().copied().unwrap_or(0.0);
    if (series.len() as f64) < 2.0 * longest {
        log::warn!(
            "series {} has {} months, shorter than twice the longest period {:.1}",
            series.entity_id,
            series.len(),
            longest
        );
    }
    CwtPlan::new(grid, series.len())?.field(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn series(values: Vec<f64>) -> TimeSeries {
        TimeSeries::new("x", YearMonth { year: 2000, month: 1 }, values).unwrap()
    }

    fn cosine(n: usize, period: f64) -> Vec<f64> {
        (0..n).map(|t| (2.0 * PI * t as f64 / period).cos()).collect()
    }

    /// Direct evaluation of the transform sum over the whole series.
    fn direct(values: &[f64], s: f64, tau: usize, eta: f64) -> Complex64 {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        values
            .iter()
            .enumerate()
            .map(|(t, &v)| (v - mean) * morlet((t as f64 - tau as f64) / s, eta).conj() / s.sqrt())
            .sum()
    }

    #[test]
    fn grid_scale_period_relation() {
        let g = make_scale_grid(18.0, 54.0, 12, 6.0).unwrap();
        for (s, p) in g.scales.iter().zip(&g.periods) {
            assert_eq!(*p, s / g.mu_f);
            assert_relative_eq!(*s, p * 0.954_929_658_551_372, max_relative = 1e-12);
        }
        assert!(g.periods.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn dyadic_grid_one_voice() {
        let g = make_scale_grid(12.0, 48.0, 1, 6.0).unwrap();
        assert_eq!(g.len(), 3);
        for (p, want) in g.periods.iter().zip([12.0, 24.0, 48.0]) {
            assert_relative_eq!(*p, want, max_relative = 1e-12);
        }
    }

    #[test]
    fn long_band_grid_within_bounds() {
        let g = make_scale_grid(54.0, 102.0, 12, 6.0).unwrap();
        assert!(g.periods.iter().all(|&p| (54.0..=102.0).contains(&p)));
    }

    #[test]
    fn inverted_bounds_rejected() {
        assert!(make_scale_grid(54.0, 18.0, 12, 6.0).is_err());
        assert!(make_scale_grid(0.0, 18.0, 12, 6.0).is_err());
        assert!(make_scale_grid(12.0, 18.0, 0, 6.0).is_err());
    }

    #[test]
    fn zero_series_gives_zero() {
        let g = make_scale_grid(18.0, 102.0, 12, 6.0).unwrap();
        let f = cwt_morlet(&series(vec![0.0; 200]), &g).unwrap();
        assert!(f.coeffs.iter().all(|c| *c == Complex64::new(0.0, 0.0)));
        assert!(power(&f).iter().all(|p| *p == 0.0));
    }

    #[test]
    fn constant_series_is_removed() {
        let g = make_scale_grid(18.0, 102.0, 12, 6.0).unwrap();
        let f = cwt_morlet(&series(vec![4.2; 150]), &g).unwrap();
        assert!(f.coeffs.iter().all(|c| c.norm() < 1e-10));
    }

    #[test]
    fn matches_direct_sum() {
        let g = make_scale_grid(18.0, 102.0, 12, 6.0).unwrap();
        let x: Vec<f64> = (0..240).map(|t| (t as f64 * 0.37).sin() + 0.01 * t as f64).collect();
        let f = cwt_morlet(&series(x.clone()), &g).unwrap();
        for j in [0, 7, 19, g.len() - 1] {
            for tau in [0, 13, 120, 239] {
                let want = direct(&x, g.scales[j], tau, 6.0);
                let got = f.coeffs[[j, tau]];
                assert!((got - want).norm() <= 1e-10 * want.norm().max(1.0), "j={j} tau={tau}");
            }
        }
    }

    #[test]
    fn cosine_peaks_at_nearest_period() {
        let g = make_scale_grid(18.0, 102.0, 12, 6.0).unwrap();
        let x = cosine(288, 36.0);
        let f = cwt_morlet(&series(x.clone()), &g).unwrap();
        let p = power(&f);
        let tau = 144;
        let argmax = (0..g.len())
            .max_by(|&a, &b| p[[a, tau]].partial_cmp(&p[[b, tau]]).unwrap())
            .unwrap();
        // within one voice of 36
        assert!((argmax as isize - g.nearest(36.0) as isize).abs() <= 1);
        let want = direct(&x, g.scales[argmax], tau, 6.0);
        assert!((f.coeffs[[argmax, tau]] - want).norm() < 1e-10 * want.norm());
    }

    #[test]
    fn power_of_known_coefficient() {
        let g = make_scale_grid(12.0, 24.0, 1, 6.0).unwrap();
        let mut coeffs = Array2::from_elem((2, 3), Complex64::new(0.0, 0.0));
        coeffs[[0, 1]] = Complex64::new(3.0, 4.0);
        let f = CwtField {
            grid: g.clone(),
            start: YearMonth { year: 2000, month: 1 },
            coeffs,
            coi_mask: coi_mask(&g, 3),
        };
        assert_eq!(power(&f)[[0, 1]], 25.0);
    }

    #[test]
    fn coi_half_width_ten() {
        // choose the factor so that the single scale has half-width exactly 10
        let g = make_scale_grid(12.0, 13.0, 1, 6.0).unwrap();
        let g = g.clone().with_coi_factor(10.0 / g.scales[0]);
        let m = coi_mask(&g, 100);
        let masked: Vec<usize> = (0..100).filter(|&t| m[[0, t]]).collect();
        let want: Vec<usize> = (0..10).chain(90..100).collect();
        assert_eq!(masked, want);
    }

    #[test]
    fn coi_default_is_sqrt2_scale() {
        let g = make_scale_grid(18.0, 102.0, 12, 6.0).unwrap();
        assert_relative_eq!(g.coi_half_width(3), SQRT_2 * g.scales[3]);
        let m = coi_mask(&g, 60);
        // largest scale half-width ~137 > 30 → fully masked
        assert!(m.row(g.len() - 1).iter().all(|&b| b));
        let counts: Vec<usize> = m.rows().into_iter().map(|r| r.iter().filter(|&&b| b).count()).collect();
        assert!(counts.windows(2).all(|w| w[1] >= w[0]));
        for j in 0..g.len() {
            for t in 0..60 {
                assert_eq!(m[[j, t]], m[[j, 59 - t]]);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn linearity(x in proptest::collection::vec(-3.0f64..3.0, 64..160),
                         a in -4.0f64..4.0, b in -4.0f64..4.0, seed in 0u64..1000) {
                let n = x.len();
                let y: Vec<f64> = (0..n).map(|t| ((t as u64 * 2654435761 + seed) % 97) as f64 / 50.0 - 1.0).collect();
                let g = make_scale_grid(6.0, 30.0, 4, 6.0).unwrap();
                let plan = CwtPlan::new(&g, n).unwrap();
                let z: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
                let wx = plan.transform(&x).unwrap();
                let wy = plan.transform(&y).unwrap();
                let wz = plan.transform(&z).unwrap();
                let scale = wz.iter().map(|c| c.norm()).fold(1.0, f64::max);
                for ((cz, cx), cy) in wz.iter().zip(wx.iter()).zip(wy.iter()) {
                    let lin = cx * a + cy * b;
                    prop_assert!((cz - lin).norm() <= 1e-10 * scale);
                }
            }

            #[test]
            fn sinusoid_peak_within_one_voice(period in 20.0f64..90.0) {
                let g = make_scale_grid(18.0, 102.0, 12, 6.0).unwrap();
                let n = 512;
                let plan = CwtPlan::new(&g, n).unwrap();
                let w = plan.transform(&cosine(n, period)).unwrap();
                let tau = n / 2;
                let argmax = (0..g.len())
                    .max_by(|&a, &b| w[[a, tau]].norm().partial_cmp(&w[[b, tau]].norm()).unwrap())
                    .unwrap();
                let voices = (g.periods[argmax] / period).log2().abs() * 12.0;
                prop_assert!(voices <= 1.0 + 1e-9, "peak {} vs {}", g.periods[argmax], period);
            }
        }
    }
}
