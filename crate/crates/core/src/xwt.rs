//! Cross-wavelet spectrum, time/scale smoothing, coherence, phase and band lag.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::cwt::{CwtField, CwtPlan, ScaleGrid};
use crate::error::{Error, Result};
use crate::ingest::{TimeSeries, YearMonth};

/// Written to output metadata so readers can interpret signs.
pub const PHASE_CONVENTION: &str =
    "phase = arg(S(Wx * conj(Wy))); for y(t) = x(t - d) phase = +2*pi*d/P and lag = +d months (reported as: y leads x)";

/// Cells whose auto-spectrum falls below this fraction of the matrix max are degenerate.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

const GAUSS_SUPPORT: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingSpec {
    /// Gaussian std along time = `time_bandwidth * scale` months.
    pub time_bandwidth: f64,
    /// Odd number of adjacent scale bins in the boxcar.
    pub scale_window: usize,
}

impl Default for SmoothingSpec {
    fn default() -> Self {
        Self {
            time_bandwidth: 0.6,
            scale_window: 3,
        }
    }
}

impl SmoothingSpec {
    /// Effectively no smoothing at all.
    pub fn degenerate() -> Self {
        Self {
            time_bandwidth: 1e-9,
            scale_window: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.time_bandwidth > 0.0 && self.time_bandwidth.is_finite()) {
            return Err(Error::Argument(format!(
                "time_bandwidth must be positive, got {}",
                self.time_bandwidth
            )));
        }
        if self.scale_window == 0 || self.scale_window % 2 == 0 {
            return Err(Error::Argument(format!(
                "scale_window must be odd and at least 1, got {}",
                self.scale_window
            )));
        }
        Ok(())
    }
}

/// Half-open period interval `[lo, hi)` in months.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn new(name: impl Into<String>, lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && lo < hi) {
            return Err(Error::Argument(format!("invalid band [{lo}, {hi})")));
        }
        Ok(Self {
            name: name.into(),
            lo,
            hi,
        })
    }

    /// 1.5 to 4.5 years.
    pub fn short() -> Self {
        Self {
            name: "short".into(),
            lo: 18.0,
            hi: 54.0,
        }
    }

    /// 4.5 to 8.5 years.
    pub fn long() -> Self {
        Self {
            name: "long".into(),
            lo: 54.0,
            hi: 102.0,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "short" => Ok(Self::short()),
            "long" => Ok(Self::long()),
            other => Err(Error::Argument(format!("unknown band `{other}` (expected short or long)"))),
        }
    }

    pub fn indices(&self, grid: &ScaleGrid) -> Result<Vec<usize>> {
        let idx = grid.band_indices(self.lo, self.hi);
        if idx.is_empty() {
            return Err(Error::Argument(format!(
                "band {} [{}, {}) contains no grid periods",
                self.name, self.lo, self.hi
            )));
        }
        Ok(idx)
    }
}

pub fn cross_wavelet(wx: &CwtField, wy: &CwtField) -> Result<Array2<Complex64>> {
    check_aligned(wx, wy)?;
    Ok(cross_of(&wx.coeffs, &wy.coeffs))
}

fn cross_of(wx: &Array2<Complex64>, wy: &Array2<Complex64>) -> Array2<Complex64> {
    let mut out = wx.clone();
    out.zip_mut_with(wy, |a, b| *a *= b.conj());
    out
}

fn check_aligned(wx: &CwtField, wy: &CwtField) -> Result<()> {
    if !wx.grid.same_as(&wy.grid) {
        return Err(Error::Alignment("fields use different scale grids".into()));
    }
    if wx.start != wy.start || wx.n_times() != wy.n_times() {
        return Err(Error::Alignment(format!(
            "fields span different months ({} x {} vs {} x {})",
            wx.start,
            wx.n_times(),
            wy.start,
            wy.n_times()
        )));
    }
    Ok(())
}

/// Gaussian-in-time / boxcar-in-scale smoother for one grid and length.
pub struct Smoother {
    n: usize,
    nfft: usize,
    scale_window: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// per-scale kernel spectra, pre-divided by nfft
    kernels: Vec<Vec<Complex64>>,
    /// per-scale reciprocal of the in-range kernel mass at each time
    inv_mass: Vec<Vec<f64>>,
}

impl Smoother {
    pub fn new(grid: &ScaleGrid, n: usize, spec: &SmoothingSpec) -> Result<Self> {
        spec.validate()?;
        if n == 0 {
            return Err(Error::Argument("cannot smooth an empty field".into()));
        }
        let sigmas: Vec<f64> = grid.scales.iter().map(|s| spec.time_bandwidth * s).collect();
        let halves: Vec<usize> = sigmas
            .iter()
            .map(|sd| ((GAUSS_SUPPORT * sd).ceil() as usize).min(n.saturating_sub(1)))
            .collect();
        let nfft = (n + halves.iter().copied().max().unwrap_or(0)).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(nfft);
        let inv = planner.plan_fft_inverse(nfft);
        let mut kernels = Vec::with_capacity(grid.len());
        let mut inv_mass = Vec::with_capacity(grid.len());
        for (&sd, &half) in sigmas.iter().zip(&halves) {
            let weights: Vec<f64> = (0..=half)
                .map(|k| (-0.5 * (k as f64 / sd).powi(2)).exp())
                .collect();
            let mut h = vec![Complex64::new(0.0, 0.0); nfft];
            for (k, &w) in weights.iter().enumerate() {
                h[k].re = w / nfft as f64;
                if k > 0 {
                    h[nfft - k].re = w / nfft as f64;
                }
            }
            fwd.process(&mut h);
            // mass of the window that falls inside [0, n)
            let mut prefix = vec![0.0; half + 2];
            for k in 0..=half {
                prefix[k + 1] = prefix[k] + weights[k];
            }
            let mass = (0..n)
                .map(|t| {
                    let left = t.min(half);
                    let right = (n - 1 - t).min(half);
                    1.0 / (prefix[left + 1] + prefix[right + 1] - weights[0])
                })
                .collect();
            kernels.push(h);
            inv_mass.push(mass);
        }
        Ok(Self {
            n,
            nfft,
            scale_window: spec.scale_window,
            fwd,
            inv,
            kernels,
            inv_mass,
        })
    }

    fn time_row(&self, j: usize, row: &mut [Complex64], buf: &mut [Complex64], scratch: &mut [Complex64]) {
        buf.fill(Complex64::new(0.0, 0.0));
        buf[..self.n].copy_from_slice(row);
        self.fwd.process_with_scratch(buf, scratch);
        for (b, k) in buf.iter_mut().zip(&self.kernels[j]) {
            *b *= k;
        }
        self.inv.process_with_scratch(buf, scratch);
        for ((dst, src), m) in row.iter_mut().zip(&buf[..self.n]).zip(&self.inv_mass[j]) {
            *dst = src * m;
        }
    }

    fn scale_boxcar<T>(&self, field: &Array2<T>) -> Array2<T>
    where
        T: Copy + Default + std::ops::AddAssign + std::ops::Mul<f64, Output = T>,
    {
        let h = self.scale_window / 2;
        if h == 0 {
            return field.clone();
        }
        let (ns, nt) = field.dim();
        let mut out = Array2::from_elem((ns, nt), T::default());
        for j in 0..ns {
            let lo = j.saturating_sub(h);
            let hi = (j + h).min(ns - 1);
            let w = 1.0 / (hi - lo + 1) as f64;
            for k in lo..=hi {
                for t in 0..nt {
                    let v = field[[k, t]];
                    out[[j, t]] += v * w;
                }
            }
        }
        out
    }

    pub fn smooth_complex(&self, field: &Array2<Complex64>) -> Array2<Complex64> {
        let mut tmp = field.clone();
        let mut buf = vec![Complex64::new(0.0, 0.0); self.nfft];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.scratch_len()];
        for (j, mut row) in tmp.rows_mut().into_iter().enumerate() {
            let row = row.as_slice_mut().expect("standard layout");
            self.time_row(j, row, &mut buf, &mut scratch);
        }
        self.scale_boxcar(&tmp)
    }

    pub fn smooth_real(&self, field: &Array2<f64>) -> Array2<f64> {
        let packed = field.mapv(|v| Complex64::new(v, 0.0));
        self.smooth_complex(&packed).mapv(|c| c.re)
    }

    /// Smooths two real fields at once (as real and imaginary parts).
    pub fn smooth_real_pair(&self, a: &Array2<f64>, b: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let mut packed = Array2::from_elem(a.dim(), Complex64::new(0.0, 0.0));
        ndarray::Zip::from(&mut packed)
            .and(a)
            .and(b)
            .for_each(|p, &x, &y| *p = Complex64::new(x, y));
        let s = self.smooth_complex(&packed);
        (s.mapv(|c| c.re), s.mapv(|c| c.im))
    }

    fn scratch_len(&self) -> usize {
        self.fwd
            .get_inplace_scratch_len()
            .max(self.inv.get_inplace_scratch_len())
    }
}

/// One-shot smoothing of a complex field.
pub fn smooth(field: &Array2<Complex64>, grid: &ScaleGrid, spec: &SmoothingSpec) -> Result<Array2<Complex64>> {
    if field.nrows() != grid.len() {
        return Err(Error::Alignment(format!(
            "field has {} scales, grid has {}",
            field.nrows(),
            grid.len()
        )));
    }
    Ok(Smoother::new(grid, field.ncols(), spec)?.smooth_complex(field))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceField {
    pub grid: ScaleGrid,
    pub start: YearMonth,
    /// Magnitude coherence in [0, 1]; 0 on degenerate cells.
    pub r: Array2<f64>,
    /// Phase of the smoothed cross spectrum in [−π, π]; 0 on degenerate cells.
    pub phase: Array2<f64>,
    pub coi_mask: Array2<bool>,
    /// Auto-spectrum below the floor: R and phase undefined, excluded downstream.
    pub degenerate: Array2<bool>,
    pub smoothed_cross: Array2<Complex64>,
    pub pvals: Option<Array2<f64>>,
}

impl CoherenceField {
    pub fn n_times(&self) -> usize {
        self.r.ncols()
    }

    pub fn month(&self, t: usize) -> YearMonth {
        self.start.add_months(t as i64)
    }

    /// True when the band's longest in-band scale is outside the COI at `t`.
    pub fn eligible(&self, band_idx: &[usize], t: usize) -> bool {
        band_idx.last().is_some_and(|&j| !self.coi_mask[[j, t]])
    }

    /// True when some in-band scale outside the COI has p ≤ `alpha`.
    pub fn significant(&self, band_idx: &[usize], t: usize, alpha: f64) -> bool {
        let Some(p) = &self.pvals else { return false };
        band_idx
            .iter()
            .any(|&j| !self.coi_mask[[j, t]] && !self.degenerate[[j, t]] && p[[j, t]] <= alpha)
    }

    /// Mean R over the non-degenerate in-band scales at `t`.
    pub fn band_mean_r(&self, band_idx: &[usize], t: usize) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for &j in band_idx {
            if !self.degenerate[[j, t]] {
                sum += self.r[[j, t]];
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }
}

struct Parts {
    cross: Array2<Complex64>,
    sxx: Array2<f64>,
    syy: Array2<f64>,
}

/// Everything needed to compute coherence repeatedly for one grid/length.
pub struct CoherencePlan {
    cwt: CwtPlan,
    smoother: Smoother,
}

impl CoherencePlan {
    pub fn new(grid: &ScaleGrid, n: usize, spec: &SmoothingSpec) -> Result<Self> {
        Ok(Self {
            cwt: CwtPlan::new(grid, n)?,
            smoother: Smoother::new(grid, n, spec)?,
        })
    }

    pub fn grid(&self) -> &ScaleGrid {
        self.cwt.grid()
    }

    pub fn len(&self) -> usize {
        self.cwt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cwt.is_empty()
    }

    pub fn cwt(&self) -> &CwtPlan {
        &self.cwt
    }

    fn parts(&self, wx: &Array2<Complex64>, wy: &Array2<Complex64>) -> Parts {
        let cross = self.smoother.smooth_complex(&cross_of(wx, wy));
        // both auto-spectra go through one FFT; equalize magnitudes first so
        // rounding in one part does not leak into the other
        let px = wx.mapv(|c| c.norm_sqr());
        let py = wy.mapv(|c| c.norm_sqr());
        let mx = px.iter().copied().fold(0.0, f64::max);
        let my = py.iter().copied().fold(0.0, f64::max);
        let ux = if mx > 0.0 { 1.0 / mx } else { 1.0 };
        let uy = if my > 0.0 { 1.0 / my } else { 1.0 };
        let (sxx, syy) = self.smoother.smooth_real_pair(&(px * ux), &(py * uy));
        Parts {
            cross,
            sxx: sxx / ux,
            syy: syy / uy,
        }
    }

    /// Coherence matrix only (used by the surrogate loop).
    pub fn coherence_r(&self, x: &[f64], y: &[f64]) -> Result<Array2<f64>> {
        let wx = self.cwt.transform(x)?;
        let wy = self.cwt.transform(y)?;
        let p = self.parts(&wx, &wy);
        Ok(ratio(&p).0)
    }

    pub fn coherence(&self, x: &TimeSeries, y: &TimeSeries) -> Result<CoherenceField> {
        if x.start != y.start || x.len() != y.len() {
            return Err(Error::Alignment(format!(
                "{} and {} are not aligned",
                x.entity_id, y.entity_id
            )));
        }
        let wx = self.cwt.transform(&x.values)?;
        let wy = self.cwt.transform(&y.values)?;
        Ok(self.assemble(x.start, &wx, &wy))
    }

    fn assemble(&self, start: YearMonth, wx: &Array2<Complex64>, wy: &Array2<Complex64>) -> CoherenceField {
        let p = self.parts(wx, wy);
        let (r, degenerate) = ratio(&p);
        let mut phase = p.cross.mapv(|c| c.im.atan2(c.re));
        ndarray::Zip::from(&mut phase).and(&degenerate).for_each(|ph, &d| {
            if d {
                *ph = 0.0;
            }
        });
        CoherenceField {
            grid: self.cwt.grid().clone(),
            start,
            r,
            phase,
            coi_mask: self.cwt.coi().clone(),
            degenerate,
            smoothed_cross: p.cross,
            pvals: None,
        }
    }
}

fn ratio(p: &Parts) -> (Array2<f64>, Array2<bool>) {
    let fx = DENOMINATOR_FLOOR * p.sxx.iter().copied().fold(0.0, f64::max);
    let fy = DENOMINATOR_FLOOR * p.syy.iter().copied().fold(0.0, f64::max);
    let mut r = Array2::zeros(p.cross.dim());
    let mut degenerate = Array2::from_elem(p.cross.dim(), false);
    ndarray::Zip::from(&mut r)
        .and(&mut degenerate)
        .and(&p.cross)
        .and(&p.sxx)
        .and(&p.syy)
        .for_each(|r, d, c, &sx, &sy| {
            if sx <= fx || sy <= fy {
                *d = true;
                *r = 0.0;
            } else {
                let v = c.norm() / (sx * sy).sqrt();
                debug_assert!(v <= 1.0 + 1e-9, "coherence {v} exceeds 1");
                *r = v.min(1.0);
            }
        });
    (r, degenerate)
}

/// Coherence from two precomputed transforms.
pub fn coherence(wx: &CwtField, wy: &CwtField, spec: &SmoothingSpec) -> Result<CoherenceField> {
    check_aligned(wx, wy)?;
    let plan = CoherencePlan::new(&wx.grid, wx.n_times(), spec)?;
    Ok(plan.assemble(wx.start, &wx.coeffs, &wy.coeffs))
}

/// Elementwise phase of a (smoothed) cross spectrum.
pub fn phase_difference(smoothed_cross: &Array2<Complex64>) -> Array2<f64> {
    smoothed_cross.mapv(|c| c.im.atan2(c.re))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LagPoint {
    pub time: usize,
    pub month: YearMonth,
    /// Months; positive = y leads x in the reported convention.
    pub delta_t: f64,
    pub band_phase: f64,
    pub mean_frequency: f64,
    /// Band eligible (outside COI) and significant at `alpha`.
    pub reliable: bool,
}

/// Band-integrated phase converted to a time lag at every month.
pub fn band_time_lag(field: &CoherenceField, band: &Band, alpha: f64) -> Result<Vec<LagPoint>> {
    let idx = band.indices(&field.grid)?;
    let freqs: Vec<f64> = idx.iter().map(|&j| 1.0 / field.grid.periods[j]).collect();
    let mut out = Vec::with_capacity(field.n_times());
    for t in 0..field.n_times() {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut num = 0.0;
        let mut den = 0.0;
        for (&j, &f) in idx.iter().zip(&freqs) {
            if field.degenerate[[j, t]] {
                continue;
            }
            // on a log-spaced grid df is proportional to f
            let c = field.smoothed_cross[[j, t]];
            acc += c * f;
            num += f * c.norm() * f;
            den += c.norm() * f;
        }
        let (band_phase, mean_frequency, delta_t) = if den > 0.0 {
            let ph = acc.im.atan2(acc.re);
            let mf = num / den;
            (ph, mf, ph / (2.0 * PI * mf))
        } else {
            (0.0, f64::NAN, 0.0)
        };
        out.push(LagPoint {
            time: t,
            month: field.month(t),
            delta_t,
            band_phase,
            mean_frequency,
            reliable: den > 0.0 && field.eligible(&idx, t) && field.significant(&idx, t, alpha),
        });
    }
    Ok(out)
}
