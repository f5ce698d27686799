//! C ABI over the wavesync library.
//!
//! Objects cross the boundary as opaque handles created by `ws_*_new` or
//! `ws_*_from_*` and released by the matching `ws_*_free`. Every fallible
//! call returns a [`WsStatus`]; the message of the most recent failure on the
//! calling thread is available from [`ws_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use wavesync::ingest::{TimeSeries, YearMonth};
use wavesync::panel::{assemble, panel_input, read_dyad_covariates, ModelSpec};
use wavesync::surrogate::{significant_coherence, SurrogateConfig};
use wavesync::syncindex::{read_sync_csv, SyncConfig};
use wavesync::xwt::{band_time_lag, Band, CoherenceField};
use wavesync::zib::{sample_posterior, zib_logdensity, LooResult, SummaryRow, ZibFit};
use wavesync::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Malformed or inconsistent input data.
    Input = 3,
    Config = 4,
    Io = 5,
    Numerical = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(err: &Error) -> WsStatus {
    match err {
        Error::Argument(_) => WsStatus::InvalidArgument,
        Error::Domain(_) => WsStatus::Numerical,
        Error::ModelSpec(_) | Error::Config(_) => WsStatus::Config,
        Error::Io { .. } | Error::Csv { .. } => WsStatus::Io,
        _ => WsStatus::Input,
    }
}

fn fail(status: WsStatus, msg: impl Into<String>) -> WsStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> Result<(), WsStatus>) -> WsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            WsStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => fail(WsStatus::Panic, "internal panic"),
    }
}

fn lib(err: Error) -> WsStatus {
    fail(status_of(&err), err.to_string())
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a Path, WsStatus> {
    if p.is_null() {
        return Err(fail(WsStatus::NullPointer, format!("{what} is null")));
    }
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| fail(WsStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(Path::new(s))
}

unsafe fn out_slice<'a, T>(out: *mut T, len: usize, need: usize) -> Result<&'a mut [T], WsStatus> {
    if out.is_null() {
        return Err(fail(WsStatus::NullPointer, "output buffer is null"));
    }
    if len < need {
        return Err(fail(WsStatus::BufferTooSmall, format!("buffer holds {len}, need {need}")));
    }
    Ok(unsafe { std::slice::from_raw_parts_mut(out, need) })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ws_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (truncated, always
/// NUL-terminated when `len > 0`). Returns the full length including the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ws_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
                *buf.add(n - 1) = 0;
            }
        }
        bytes.len()
    })
}

/// Log density of the zero-inflated beta distribution.
///
/// # Safety
/// `out` must be a valid pointer to one `double`.
#[no_mangle]
pub unsafe extern "C" fn ws_zib_logdensity(y: f64, pi: f64, mu: f64, phi: f64, out: *mut f64) -> WsStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(WsStatus::NullPointer, "out is null"));
        }
        let v = zib_logdensity(y, pi, mu, phi).map_err(lib)?;
        unsafe { *out = v };
        Ok(())
    })
}

/// Coherence field of two aligned monthly series with surrogate p-values.
pub struct WsCoherence {
    field: CoherenceField,
}

/// Computes wavelet coherence on the default 18 to 102 month grid.
///
/// # Safety
/// `x` and `y` must point to `n` doubles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ws_coherence_new(
    x: *const f64,
    y: *const f64,
    n: usize,
    start_year: i32,
    start_month: u32,
    n_surrogates: usize,
    seed: u64,
    out: *mut *mut WsCoherence,
) -> WsStatus {
    guard(|| {
        if x.is_null() || y.is_null() || out.is_null() {
            return Err(fail(WsStatus::NullPointer, "null series or output pointer"));
        }
        unsafe { *out = std::ptr::null_mut() };
        let start = YearMonth::new(start_year, start_month).map_err(lib)?;
        let xs = unsafe { std::slice::from_raw_parts(x, n) }.to_vec();
        let ys = unsafe { std::slice::from_raw_parts(y, n) }.to_vec();
        let sx = TimeSeries::new("x", start, xs).map_err(lib)?;
        let sy = TimeSeries::new("y", start, ys).map_err(lib)?;
        let cfg = SyncConfig::default();
        let grid = cfg.grid().map_err(lib)?;
        let sc = SurrogateConfig { n_surrogates, seed };
        let field = significant_coherence(&sx, &sy, &grid, &cfg.smoothing, &sc).map_err(lib)?;
        unsafe { *out = Box::into_raw(Box::new(WsCoherence { field })) };
        Ok(())
    })
}

unsafe fn coh<'a>(h: *const WsCoherence) -> Result<&'a WsCoherence, WsStatus> {
    unsafe { h.as_ref() }.ok_or_else(|| fail(WsStatus::NullPointer, "coherence handle is null"))
}

/// # Safety
/// `h` must be a live handle; the outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ws_coherence_shape(h: *const WsCoherence, n_scales: *mut usize, n_times: *mut usize) -> WsStatus {
    guard(|| {
        let h = unsafe { coh(h) }?;
        if n_scales.is_null() || n_times.is_null() {
            return Err(fail(WsStatus::NullPointer, "output is null"));
        }
        unsafe {
            *n_scales = h.field.grid.len();
            *n_times = h.field.n_times();
        }
        Ok(())
    })
}

/// Fourier periods (months) of the scale grid.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ws_coherence_periods(h: *const WsCoherence, out: *mut f64, len: usize) -> WsStatus {
    guard(|| {
        let h = unsafe { coh(h) }?;
        let p = &h.field.grid.periods;
        unsafe { out_slice(out, len, p.len()) }?.copy_from_slice(p);
        Ok(())
    })
}

/// Coherence magnitudes, scale-major (`scale * n_times + time`).
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ws_coherence_values(h: *const WsCoherence, out: *mut f64, len: usize) -> WsStatus {
    guard(|| {
        let h = unsafe { coh(h) }?;
        let dst = unsafe { out_slice(out, len, h.field.r.len()) }?;
        for (d, v) in dst.iter_mut().zip(h.field.r.iter()) {
            *d = *v;
        }
        Ok(())
    })
}

/// Surrogate p-values in the same layout as [`ws_coherence_values`].
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ws_coherence_pvalues(h: *const WsCoherence, out: *mut f64, len: usize) -> WsStatus {
    guard(|| {
        let h = unsafe { coh(h) }?;
        let p = h.field.pvals.as_ref().expect("computed with surrogates");
        let dst = unsafe { out_slice(out, len, p.len()) }?;
        for (d, v) in dst.iter_mut().zip(p.iter()) {
            *d = *v;
        }
        Ok(())
    })
}

/// 1 where the cell lies inside the cone of influence.
///
/// # Safety
/// `out` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ws_coherence_coi(h: *const WsCoherence, out: *mut u8, len: usize) -> WsStatus {
    guard(|| {
        let h = unsafe { coh(h) }?;
        let dst = unsafe { out_slice(out, len, h.field.coi_mask.len()) }?;
        for (d, v) in dst.iter_mut().zip(h.field.coi_mask.iter()) {
            *d = u8::from(*v);
        }
        Ok(())
    })
}

/// Band time lag per month (`band` is "short" or "long"). Positive values
/// mean y leads x. `reliable` may be null.
///
/// # Safety
/// `band` must be a NUL-terminated string; `delta_t` and (if non-null)
/// `reliable` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn ws_coherence_band_lag(
    h: *const WsCoherence,
    band: *const c_char,
    alpha: f64,
    delta_t: *mut f64,
    reliable: *mut u8,
    len: usize,
) -> WsStatus {
    guard(|| {
        let h = unsafe { coh(h) }?;
        let name = unsafe { path_arg(band, "band") }?.to_str().unwrap_or_default();
        let band = Band::by_name(name).map_err(lib)?;
        let lags = band_time_lag(&h.field, &band, alpha).map_err(lib)?;
        let dt = unsafe { out_slice(delta_t, len, lags.len()) }?;
        for (d, p) in dt.iter_mut().zip(&lags) {
            *d = p.delta_t;
        }
        if !reliable.is_null() {
            let rel = unsafe { out_slice(reliable, len, lags.len()) }?;
            for (d, p) in rel.iter_mut().zip(&lags) {
                *d = u8::from(p.reliable);
            }
        }
        Ok(())
    })
}

/// # Safety
/// `h` must be null or a handle from [`ws_coherence_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ws_coherence_free(h: *mut WsCoherence) {
    if !h.is_null() {
        drop(unsafe { Box::from_raw(h) });
    }
}

/// Posterior summary of a fitted panel model.
pub struct WsFit {
    summary: Vec<SummaryRow>,
    names: Vec<CString>,
    loo: LooResult,
    n_rows: usize,
    converged: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct WsSummary {
    pub estimate: f64,
    pub sd: f64,
    /// 2.5% posterior quantile.
    pub lower: f64,
    /// 97.5% posterior quantile.
    pub upper: f64,
    pub rhat: f64,
    pub ess_bulk: f64,
}

/// Assembles the regression panel from a sync file, dyad covariates and a
/// TOML model spec, then samples the posterior. `seed` overrides the spec's
/// sampler seed.
///
/// # Safety
/// Paths must be NUL-terminated strings; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ws_fit_from_files(
    sync_csv: *const c_char,
    covariates_csv: *const c_char,
    model_toml: *const c_char,
    seed: u64,
    out: *mut *mut WsFit,
) -> WsStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(WsStatus::NullPointer, "out is null"));
        }
        unsafe { *out = std::ptr::null_mut() };
        let sync_path = unsafe { path_arg(sync_csv, "sync_csv") }?;
        let cov_path = unsafe { path_arg(covariates_csv, "covariates_csv") }?;
        let model_path = unsafe { path_arg(model_toml, "model_toml") }?;
        let text = std::fs::read_to_string(model_path)
            .map_err(|e| fail(WsStatus::Io, format!("cannot read {}: {e}", model_path.display())))?;
        let mut spec = ModelSpec::from_toml(&text).map_err(lib)?;
        spec.sampler.seed = seed;
        let sync = read_sync_csv(sync_path).map_err(lib)?;
        let covs = read_dyad_covariates(cov_path).map_err(lib)?;
        let ds = panel_input(&sync, &covs, &spec.band)
            .and_then(|input| assemble(&input, &spec))
            .map_err(lib)?;
        let fit: ZibFit = sample_posterior(&ds, spec.regime, &spec.sampler).map_err(lib)?;
        let loo = fit.loo().map_err(lib)?;
        let summary = fit.summarize();
        let names = summary
            .iter()
            .map(|r| CString::new(r.parameter.clone()).unwrap_or_default())
            .collect();
        let handle = WsFit {
            summary,
            names,
            loo,
            n_rows: ds.n(),
            converged: fit.diagnostics.converged,
        };
        unsafe { *out = Box::into_raw(Box::new(handle)) };
        Ok(())
    })
}

unsafe fn fit_ref<'a>(h: *const WsFit) -> Result<&'a WsFit, WsStatus> {
    unsafe { h.as_ref() }.ok_or_else(|| fail(WsStatus::NullPointer, "fit handle is null"))
}

/// Number of reported parameters, 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ws_fit_n_params(h: *const WsFit) -> usize {
    unsafe { h.as_ref() }.map_or(0, |f| f.summary.len())
}

/// Rows of the estimation sample, 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ws_fit_n_rows(h: *const WsFit) -> usize {
    unsafe { h.as_ref() }.map_or(0, |f| f.n_rows)
}

/// 1 when the convergence checks passed.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ws_fit_converged(h: *const WsFit) -> i32 {
    unsafe { h.as_ref() }.map_or(0, |f| i32::from(f.converged))
}

/// Parameter name owned by the handle, or null when out of range.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ws_fit_param_name(h: *const WsFit, index: usize) -> *const c_char {
    unsafe { h.as_ref() }
        .and_then(|f| f.names.get(index))
        .map_or(std::ptr::null(), |s| s.as_ptr())
}

/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ws_fit_summary(h: *const WsFit, index: usize, out: *mut WsSummary) -> WsStatus {
    guard(|| {
        let f = unsafe { fit_ref(h) }?;
        if out.is_null() {
            return Err(fail(WsStatus::NullPointer, "out is null"));
        }
        let r = f
            .summary
            .get(index)
            .ok_or_else(|| fail(WsStatus::InvalidArgument, format!("parameter index {index} out of range")))?;
        unsafe {
            *out = WsSummary {
                estimate: r.estimate,
                sd: r.sd,
                lower: r.lower,
                upper: r.upper,
                rhat: r.rhat,
                ess_bulk: r.ess_bulk,
            }
        };
        Ok(())
    })
}

/// PSIS-LOO expected log predictive density and its standard error.
///
/// # Safety
/// `h` must be a live handle; outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ws_fit_elpd(h: *const WsFit, elpd: *mut f64, se: *mut f64) -> WsStatus {
    guard(|| {
        let f = unsafe { fit_ref(h) }?;
        if elpd.is_null() || se.is_null() {
            return Err(fail(WsStatus::NullPointer, "output is null"));
        }
        unsafe {
            *elpd = f.loo.elpd;
            *se = f.loo.se;
        }
        Ok(())
    })
}

/// # Safety
/// `h` must be null or a handle from [`ws_fit_from_files`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ws_fit_free(h: *mut WsFit) {
    if !h.is_null() {
        drop(unsafe { Box::from_raw(h) });
    }
}
