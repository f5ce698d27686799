//! Band-averaged coherence, the significance indicator and the annual
//! in-phase synchronization index.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cwt::{make_scale_grid, ScaleGrid, DEFAULT_COI_FACTOR, DEFAULT_ETA, DEFAULT_VOICES};
use crate::error::{Error, Result};
use crate::ingest::{align_pair, DyadId, SeriesTransform, TimeSeries, YearMonth};
use crate::rng::derive_seed;
use crate::surrogate::{significant_coherence_with_plan, SurrogateConfig};
use crate::xwt::{Band, CoherenceField, CoherencePlan, SmoothingSpec};

pub type BandSpec = Band;

pub const MIN_TOTAL_MONTHS: usize = 9;
pub const MIN_ELIGIBLE_MONTHS: usize = 6;
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Inverse-period weights normalized to sum to one.
pub fn band_weights(periods: &[f64]) -> Result<Vec<f64>> {
    if periods.is_empty() {
        return Err(Error::Argument("band contains no periods".into()));
    }
    let total: f64 = periods.iter().map(|p| 1.0 / p).sum();
    Ok(periods.iter().map(|p| (1.0 / p) / total).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonthlyBand {
    pub month: YearMonth,
    /// Weighted band coherence.
    pub c: f64,
    pub eligible: bool,
    pub significant: bool,
}

pub fn monthly_band_coherence(field: &CoherenceField, band: &BandSpec, alpha: f64) -> Result<Vec<MonthlyBand>> {
    let idx = band.indices(&field.grid)?;
    let periods: Vec<f64> = idx.iter().map(|&j| field.grid.periods[j]).collect();
    let weights = band_weights(&periods)?;
    Ok((0..field.n_times())
        .map(|t| {
            let mut num = 0.0;
            let mut den = 0.0;
            for (&j, &w) in idx.iter().zip(&weights) {
                if !field.degenerate[[j, t]] {
                    num += w * field.r[[j, t]];
                    den += w;
                }
            }
            MonthlyBand {
                month: field.month(t),
                c: if den > 0.0 { num / den } else { 0.0 },
                eligible: field.eligible(&idx, t),
                significant: field.significant(&idx, t, alpha),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropReason {
    /// Fewer calendar months than the threshold.
    TooFewMonths(usize),
    /// Fewer eligible months than the threshold.
    TooFewEligible(usize),
}

impl DropReason {
    pub fn label(self) -> String {
        match self {
            DropReason::TooFewMonths(n) => format!("total<{n}"),
            DropReason::TooFewEligible(n) => format!("eligible<{n}"),
        }
    }
}

/// Minimum month counts for a dyad-year to be kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thresholds {
    pub min_total: usize,
    pub min_eligible: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            min_total: MIN_TOTAL_MONTHS,
            min_eligible: MIN_ELIGIBLE_MONTHS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DyadYearSync {
    pub dyad: DyadId,
    pub year: i32,
    pub band: String,
    pub sync: f64,
    pub share: f64,
    pub mean_coh: f64,
    pub n_total: usize,
    pub n_eligible: usize,
    pub n_significant: usize,
    pub drop_reason: Option<DropReason>,
}

impl DyadYearSync {
    pub fn dropped(&self) -> bool {
        self.drop_reason.is_some()
    }
}

/// Aggregates one calendar year of monthly band values with the default thresholds.
pub fn annual_sync(dyad: &DyadId, band: &str, year: i32, months: &[MonthlyBand]) -> DyadYearSync {
    annual_sync_with(dyad, band, year, months, &Thresholds::default())
}

pub fn annual_sync_with(
    dyad: &DyadId,
    band: &str,
    year: i32,
    months: &[MonthlyBand],
    thresholds: &Thresholds,
) -> DyadYearSync {
    let n_total = months.len();
    let n_eligible = months.iter().filter(|m| m.eligible).count();
    let sig: Vec<f64> = months
        .iter()
        .filter(|m| m.eligible && m.significant)
        .map(|m| m.c)
        .collect();
    let n_significant = sig.len();
    let share = if n_eligible > 0 {
        n_significant as f64 / n_eligible as f64
    } else {
        0.0
    };
    let mean_coh = if n_significant > 0 {
        sig.iter().sum::<f64>() / n_significant as f64
    } else {
        0.0
    };
    let drop_reason = if n_total < thresholds.min_total {
        Some(DropReason::TooFewMonths(thresholds.min_total))
    } else if n_eligible < thresholds.min_eligible {
        Some(DropReason::TooFewEligible(thresholds.min_eligible))
    } else {
        None
    };
    DyadYearSync {
        dyad: dyad.clone(),
        year,
        band: band.to_string(),
        sync: share * mean_coh,
        share,
        mean_coh,
        n_total,
        n_eligible,
        n_significant,
        drop_reason,
    }
}

/// Groups months into years (shifted by `offset_months`) and aggregates each.
pub fn aggregate_years(
    dyad: &DyadId,
    band: &str,
    monthly: &[MonthlyBand],
    offset_months: i64,
    thresholds: &Thresholds,
) -> Vec<DyadYearSync> {
    let mut years: BTreeMap<i32, Vec<MonthlyBand>> = BTreeMap::new();
    for m in monthly {
        let year = (m.month.ordinal() - offset_months).div_euclid(12) as i32;
        years.entry(year).or_default().push(*m);
    }
    years
        .into_iter()
        .map(|(y, ms)| annual_sync_with(dyad, band, y, &ms, thresholds))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyncConfig {
    pub period_min: f64,
    pub period_max: f64,
    pub voices_per_octave: u32,
    pub eta: f64,
    pub coi_factor: f64,
    pub smoothing: SmoothingSpec,
    pub n_surrogates: usize,
    pub alpha: f64,
    pub bands: Vec<Band>,
    pub year_offset_months: i64,
    pub thresholds: Thresholds,
    pub transform: SeriesTransform,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            period_min: 18.0,
            period_max: 102.0,
            voices_per_octave: DEFAULT_VOICES,
            eta: DEFAULT_ETA,
            coi_factor: DEFAULT_COI_FACTOR,
            smoothing: SmoothingSpec::default(),
            n_surrogates: 300,
            alpha: DEFAULT_ALPHA,
            bands: vec![Band::short(), Band::long()],
            year_offset_months: 0,
            thresholds: Thresholds::default(),
            transform: SeriesTransform::None,
        }
    }
}

impl SyncConfig {
    pub fn grid(&self) -> Result<ScaleGrid> {
        Ok(make_scale_grid(self.period_min, self.period_max, self.voices_per_octave, self.eta)?
            .with_coi_factor(self.coi_factor))
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        self.smoothing.validate()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if self.thresholds.min_total == 0 || self.thresholds.min_eligible == 0 {
            return Err(Error::Config("eligibility thresholds must be positive".into()));
        }
        if self.bands.is_empty() {
            return Err(Error::Config("at least one band is required".into()));
        }
        for b in &self.bands {
            Band::new(b.name.clone(), b.lo, b.hi)?;
            b.indices(&grid)?;
        }
        SurrogateConfig {
            n_surrogates: self.n_surrogates,
            seed: 0,
        }
        .validate()
    }
}

/// Seed for one dyad, independent of processing order.
pub fn dyad_seed(seed: u64, dyad: &DyadId) -> u64 {
    let digest = Sha256::digest(dyad.to_string().as_bytes());
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    derive_seed(seed, u64::from_le_bytes(b))
}

#[derive(Debug, Clone)]
pub struct DyadResult {
    pub dyad: DyadId,
    pub field: CoherenceField,
    pub years: Vec<DyadYearSync>,
}

/// Coherence with surrogates and annual sync rows for every configured band.
/// `x` is the first country of the dyad id; series are cut to their overlap.
pub fn dyad_sync(
    x: &TimeSeries,
    y: &TimeSeries,
    cfg: &SyncConfig,
    seed: u64,
    plans: &PlanCache,
) -> Result<DyadResult> {
    let dyad = DyadId::new(&x.entity_id, &y.entity_id);
    let (x, y) = if x.entity_id <= y.entity_id { (x, y) } else { (y, x) };
    let x = cfg.transform.apply(x)?;
    let y = cfg.transform.apply(y)?;
    let (x, y) = align_pair(&x, &y)?;
    let plan = plans.get(x.len())?;
    let sc = SurrogateConfig {
        n_surrogates: cfg.n_surrogates,
        seed: dyad_seed(seed, &dyad),
    };
    let field = significant_coherence_with_plan(&plan, &x, &y, &sc)?;
    let mut years = Vec::new();
    for band in &cfg.bands {
        let monthly = monthly_band_coherence(&field, band, cfg.alpha)?;
        years.extend(aggregate_years(
            &dyad,
            &band.name,
            &monthly,
            cfg.year_offset_months,
            &cfg.thresholds,
        ));
    }
    Ok(DyadResult { dyad, field, years })
}

/// Coherence plans shared across dyads of equal length.
pub struct PlanCache {
    grid: ScaleGrid,
    spec: SmoothingSpec,
    plans: std::sync::Mutex<HashMap<usize, std::sync::Arc<CoherencePlan>>>,
}

impl PlanCache {
    pub fn new(grid: ScaleGrid, spec: SmoothingSpec) -> Self {
        Self {
            grid,
            spec,
            plans: Default::default(),
        }
    }

    pub fn get(&self, n: usize) -> Result<std::sync::Arc<CoherencePlan>> {
        let mut plans = self.plans.lock().expect("plan cache poisoned");
        if let Some(p) = plans.get(&n) {
            return Ok(p.clone());
        }
        let p = std::sync::Arc::new(CoherencePlan::new(&self.grid, n, &self.spec)?);
        plans.insert(n, p.clone());
        Ok(p)
    }
}

/// All unordered pairs of `series` (including a benchmark entity if present).
/// Results are sorted by dyad id.
pub fn sync_panel(series: &BTreeMap<String, TimeSeries>, cfg: &SyncConfig, seed: u64) -> Result<Vec<DyadResult>> {
    cfg.validate()?;
    let cache = PlanCache::new(cfg.grid()?, cfg.smoothing);
    let ids: Vec<&String> = series.keys().collect();
    let mut pairs = Vec::new();
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            pairs.push((ids[i], ids[j]));
        }
    }
    let mut out: Vec<DyadResult> = pairs
        .par_iter()
        .map(|(a, b)| dyad_sync(&series[*a], &series[*b], cfg, seed, &cache))
        .collect::<Result<_>>()?;
    out.sort_by(|a, b| a.dyad.cmp(&b.dyad));
    Ok(out)
}

pub const SYNC_HEADER: &str = "dyad,iso_a,iso_b,year,band,sync,share,mean_coh,n_total,n_eligible,dropped,drop_reason";

pub fn write_sync_csv<W: Write>(mut w: W, rows: &[DyadYearSync]) -> std::io::Result<()> {
    writeln!(w, "{SYNC_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.dyad,
            r.dyad.a,
            r.dyad.b,
            r.year,
            r.band,
            r.sync,
            r.share,
            r.mean_coh,
            r.n_total,
            r.n_eligible,
            r.dropped(),
            r.drop_reason.map(|d| d.label()).unwrap_or_default()
        )?;
    }
    Ok(())
}

/// Parsed row of a sync CSV.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SyncRow {
    pub dyad: String,
    pub iso_a: String,
    pub iso_b: String,
    pub year: i32,
    pub band: String,
    pub sync: f64,
    pub share: f64,
    pub mean_coh: f64,
    pub n_total: usize,
    pub n_eligible: usize,
    pub dropped: bool,
    pub drop_reason: String,
}

pub fn read_sync_csv(path: &std::path::Path) -> Result<Vec<SyncRow>> {
    let label = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(label.clone(), e))?;
    rdr.deserialize()
        .map(|r| r.map_err(|e| Error::csv(label.clone(), e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cwt::make_scale_grid;
    use ndarray::Array2;

    fn dyad() -> DyadId {
        DyadId::new("HRV", "SVN")
    }

    fn month(i: i64) -> YearMonth {
        YearMonth { year: 2005, month: 1 }.add_months(i)
    }

    fn mb(i: i64, c: f64, eligible: bool, significant: bool) -> MonthlyBand {
        MonthlyBand {
            month: month(i),
            c,
            eligible,
            significant,
        }
    }

    #[test]
    fn weights_examples() {
        assert_eq!(band_weights(&[30.0]).unwrap(), vec![1.0]);
        let w = band_weights(&[2.0, 4.0]).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15 && (w[1] - 1.0 / 3.0).abs() < 1e-15);
        let w = band_weights(&[18.0, 54.0]).unwrap();
        assert!((w[0] / w[1] - 3.0).abs() < 1e-12);
        assert!(band_weights(&[]).is_err());
    }

    #[test]
    fn annual_examples() {
        let all: Vec<_> = (0..12).map(|i| mb(i, 0.8, true, true)).collect();
        let s = annual_sync(&dyad(), "short", 2005, &all);
        assert!((s.sync - 0.8).abs() < 1e-15);
        assert!(!s.dropped());

        let half: Vec<_> = (0..12).map(|i| mb(i, 0.6, true, i % 2 == 0)).collect();
        let s = annual_sync(&dyad(), "short", 2005, &half);
        assert_eq!(s.share, 0.5);
        assert!((s.sync - 0.3).abs() < 1e-15);

        let few: Vec<_> = (0..9).map(|i| mb(i, 0.6, i < 5, true)).collect();
        let s = annual_sync(&dyad(), "short", 2005, &few);
        assert_eq!(s.drop_reason, Some(DropReason::TooFewEligible(6)));
        assert_eq!(s.drop_reason.unwrap().label(), "eligible<6");

        let short: Vec<_> = (0..8).map(|i| mb(i, 0.6, true, true)).collect();
        assert_eq!(annual_sync(&dyad(), "short", 2005, &short).drop_reason, Some(DropReason::TooFewMonths(9)));
    }

    #[test]
    fn insignificant_months_contribute_zero() {
        let none: Vec<_> = (0..12).map(|i| mb(i, 0.9, true, false)).collect();
        let s = annual_sync(&dyad(), "short", 2005, &none);
        assert_eq!(s.sync, 0.0);
        assert_eq!(s.mean_coh, 0.0);
        assert!(!s.dropped());
    }

    fn field_with(r: f64, p: f64, n: usize) -> CoherenceField {
        let g = make_scale_grid(18.0, 102.0, 12, 6.0).unwrap();
        let ns = g.len();
        CoherenceField {
            coi_mask: crate::cwt::coi_mask(&g, n),
            grid: g,
            start: YearMonth { year: 2000, month: 1 },
            r: Array2::from_elem((ns, n), r),
            phase: Array2::zeros((ns, n)),
            degenerate: Array2::from_elem((ns, n), false),
            smoothed_cross: Array2::zeros((ns, n)),
            pvals: Some(Array2::from_elem((ns, n), p)),
        }
    }

    #[test]
    fn constant_r_gives_constant_c() {
        let f = field_with(0.8, 0.01, 240);
        let m = monthly_band_coherence(&f, &Band::short(), 0.05).unwrap();
        assert!(m.iter().all(|x| (x.c - 0.8).abs() < 1e-14));
        let f = field_with(0.8, 0.2, 240);
        let m = monthly_band_coherence(&f, &Band::short(), 0.05).unwrap();
        assert!(m.iter().all(|x| !x.significant));
    }

    #[test]
    fn coi_at_longest_scale_blocks_eligibility() {
        let f = field_with(0.8, 0.01, 240);
        let idx = Band::short().indices(&f.grid).unwrap();
        let jmax = *idx.last().unwrap();
        let m = monthly_band_coherence(&f, &Band::short(), 0.05).unwrap();
        for (t, x) in m.iter().enumerate() {
            assert_eq!(x.eligible, !f.coi_mask[[jmax, t]]);
        }
        // first month is always masked
        assert!(!m[0].eligible);
    }

    #[test]
    fn bands_partition_grid() {
        let g = make_scale_grid(18.0, 102.0, 12, 6.0).unwrap();
        let s = Band::short().indices(&g).unwrap();
        let l = Band::long().indices(&g).unwrap();
        assert!(s.iter().all(|i| !l.contains(i)));
        assert_eq!(s.len() + l.len(), g.len());
    }

    #[test]
    fn year_grouping_and_offset() {
        let ms: Vec<_> = (0..24).map(|i| mb(i, 0.5, true, true)).collect();
        let ys = aggregate_years(&dyad(), "short", &ms, 0, &Thresholds::default());
        assert_eq!(ys.len(), 2);
        assert_eq!(ys[0].year, 2005);
        assert_eq!(ys[0].n_total, 12);
        let ys = aggregate_years(&dyad(), "short", &ms, 6, &Thresholds::default());
        assert_eq!(ys.len(), 3);
        assert_eq!(ys[0].n_total, 6);
    }

    #[test]
    fn csv_roundtrip() {
        let ms: Vec<_> = (0..12).map(|i| mb(i, 0.5, true, i < 3)).collect();
        let rows = vec![annual_sync(&dyad(), "short", 2005, &ms)];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sync.csv");
        write_sync_csv(std::fs::File::create(&path).unwrap(), &rows).unwrap();
        let back = read_sync_csv(&path).unwrap();
        assert_eq!(back[0].dyad, "HRV-SVN");
        assert_eq!(back[0].sync, rows[0].sync);
        assert!(!back[0].dropped);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_months() -> impl Strategy<Value = Vec<MonthlyBand>> {
            proptest::collection::vec((0.0f64..=1.0, any::<bool>(), any::<bool>()), 1..=12).prop_map(|v| {
                v.into_iter()
                    .enumerate()
                    .map(|(i, (c, e, s))| mb(i as i64, c, e, s))
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn identity_and_bounds(ms in arb_months()) {
                let s = annual_sync(&dyad(), "short", 2005, &ms);
                prop_assert!((0.0..=1.0).contains(&s.sync));
                // mean over eligible months of I·C
                let elig: Vec<_> = ms.iter().filter(|m| m.eligible).collect();
                let direct = if elig.is_empty() { 0.0 } else {
                    elig.iter().map(|m| if m.significant { m.c } else { 0.0 }).sum::<f64>() / elig.len() as f64
                };
                prop_assert!((s.sync - direct).abs() < 1e-12);
                prop_assert!((s.sync - s.share * s.mean_coh).abs() < 1e-12);
                if s.dropped() {
                    prop_assert!(s.n_total < 9 || s.n_eligible < 6);
                }
            }

            #[test]
            fn monotone_in_c(ms in arb_months(), k in 0usize..12, bump in 0.0f64..0.5) {
                let base = annual_sync(&dyad(), "short", 2005, &ms);
                let mut up = ms.clone();
                let k = k % up.len();
                up[k].c = (up[k].c + bump).min(1.0);
                prop_assert!(annual_sync(&dyad(), "short", 2005, &up).sync >= base.sync - 1e-15);
                let mut flip = ms.clone();
                if flip[k].eligible && !flip[k].significant && flip[k].c > 0.0 {
                    flip[k].significant = true;
                    prop_assert!(annual_sync(&dyad(), "short", 2005, &flip).sync > base.sync);
                }
            }
        }
    }
}
