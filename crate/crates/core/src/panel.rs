//! Regression dataset assembly: lagged outcome, collinearity filter,
//! standardization and within/between (REWB) decomposition.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DyadCovariates, DyadId, DYAD_CONTINUOUS, DYAD_DUMMIES};
use crate::syncindex::SyncRow;
use crate::zib::{PriorRegime, SamplerConfig};

pub const DEFAULT_COLLINEARITY: f64 = 0.85;
/// Exact ones are moved this far inside the unit interval.
pub const ONE_CLAMP: f64 = 1e-6;
pub const LAG_COLUMN: &str = "lag_sync";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
}

/// z-scores with the sample standard deviation.
pub fn standardize(column: &[f64]) -> Result<(Vec<f64>, Moments)> {
    standardize_named("column", column)
}

fn standardize_named(name: &str, column: &[f64]) -> Result<(Vec<f64>, Moments)> {
    let n = column.len();
    if n < 2 {
        return Err(Error::ConstantColumn(name.to_string()));
    }
    let mean = column.iter().sum::<f64>() / n as f64;
    let var = column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if !(sd > 1e-12 * mean.abs().max(1.0)) {
        return Err(Error::ConstantColumn(name.to_string()));
    }
    Ok((column.iter().map(|v| (v - mean) / sd).collect(), Moments { mean, sd }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewbVariable {
    pub name: String,
    /// Per row: x − dyad mean.
    pub within: Vec<f64>,
    /// Per group: dyad mean − grand mean.
    pub between: Vec<f64>,
    pub group_means: Vec<f64>,
    pub grand_mean: f64,
}

impl RewbVariable {
    pub fn between_for_rows(&self, groups: &[usize]) -> Vec<f64> {
        groups.iter().map(|&g| self.between[g]).collect()
    }
}

/// Within/between split; `groups[i]` is the dyad index of row `i`.
pub fn rewb_decompose(name: &str, x: &[f64], groups: &[usize], n_groups: usize) -> Result<RewbVariable> {
    if x.len() != groups.len() {
        return Err(Error::Alignment(format!(
            "{name}: {} values for {} group labels",
            x.len(),
            groups.len()
        )));
    }
    let mut sums = vec![0.0; n_groups];
    let mut counts = vec![0usize; n_groups];
    for (&v, &g) in x.iter().zip(groups) {
        if g >= n_groups {
            return Err(Error::Argument(format!("group index {g} out of range")));
        }
        sums[g] += v;
        counts[g] += 1;
    }
    if let Some(g) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Argument(format!("{name}: group {g} has no observations")));
    }
    let group_means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    let grand_mean = x.iter().sum::<f64>() / x.len() as f64;
    Ok(RewbVariable {
        name: name.to_string(),
        within: x.iter().zip(groups).map(|(v, &g)| v - group_means[g]).collect(),
        between: group_means.iter().map(|m| m - grand_mean).collect(),
        group_means,
        grand_mean,
    })
}

/// Logit-scale contribution of one decomposed covariate.
pub fn linear_contribution(within: f64, between: f64, beta_w: f64, beta_b: f64) -> f64 {
    beta_w * within + beta_b * between
}

/// Previous-year outcome of the same dyad, `None` when that year is absent.
pub fn build_lagged_dv(obs: &[(DyadId, i32, f64)]) -> Vec<Option<f64>> {
    let index: HashMap<(&DyadId, i32), f64> = obs.iter().map(|(d, y, v)| ((d, *y), *v)).collect();
    obs.iter()
        .map(|(d, y, _)| index.get(&(d, y - 1)).copied())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedColumn {
    pub name: String,
    pub reason: String,
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Greedy elimination until no pair has |corr| above `threshold`.
///
/// The most correlated pair is resolved first; of its two columns the one with
/// the larger mean |corr| against the remaining columns goes, and on a tie the
/// later name goes. Returns `(kept, dropped)`, both sorted by name.
pub fn collinearity_filter(columns: &BTreeMap<String, Vec<f64>>, threshold: f64) -> (Vec<String>, Vec<DroppedColumn>) {
    let names: Vec<&String> = columns.keys().collect();
    let k = names.len();
    let mut corr = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let c = pearson(&columns[names[i]], &columns[names[j]]).abs();
            corr[i][j] = c;
            corr[j][i] = c;
        }
    }
    let mut alive = vec![true; k];
    let mut dropped = Vec::new();
    loop {
        let mut worst: Option<(usize, usize, f64)> = None;
        for i in 0..k {
            for j in i + 1..k {
                if alive[i] && alive[j] && corr[i][j] > threshold && worst.is_none_or(|(_, _, c)| corr[i][j] > c) {
                    worst = Some((i, j, corr[i][j]));
                }
            }
        }
        let Some((i, j, c)) = worst else { break };
        let mean_abs = |a: usize| {
            let others: Vec<f64> = (0..k).filter(|&b| b != a && alive[b]).map(|b| corr[a][b]).collect();
            others.iter().sum::<f64>() / others.len().max(1) as f64
        };
        let (mi, mj) = (mean_abs(i), mean_abs(j));
        // names are sorted, so j is the later name
        let (drop, keep) = if mi > mj { (i, j) } else { (j, i) };
        alive[drop] = false;
        dropped.push(DroppedColumn {
            name: names[drop].clone(),
            reason: format!("collinear with {} (|r| = {:.3})", names[keep], c),
        });
    }
    let kept = (0..k).filter(|&i| alive[i]).map(|i| names[i].clone()).collect();
    dropped.sort_by(|a, b| a.name.cmp(&b.name));
    (kept, dropped)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquationSpec {
    /// Covariates entering as `<name>_w` and `<name>_b`.
    pub terms: Vec<String>,
    /// Extra design columns: indicators, `_w`/`_b` columns, or `a:b` interactions.
    pub extra: Vec<String>,
    pub lagged_dv: bool,
}

/// `name` = 1 when exactly one country of the dyad is in `countries`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndicatorSpec {
    pub name: String,
    pub countries: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub band: String,
    pub regime: PriorRegime,
    pub mu: EquationSpec,
    pub zi: EquationSpec,
    pub year_effects: bool,
    #[serde(rename = "indicator")]
    pub indicators: Vec<IndicatorSpec>,
    /// Dyads with both countries in this set are excluded.
    pub exclude_within: Vec<String>,
    pub collinearity_threshold: f64,
    pub sampler: SamplerConfig,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            band: "short".into(),
            regime: PriorRegime::Moderate,
            mu: EquationSpec::default(),
            zi: EquationSpec::default(),
            year_effects: true,
            indicators: Vec::new(),
            exclude_within: Vec::new(),
            collinearity_threshold: DEFAULT_COLLINEARITY,
            sampler: SamplerConfig::default(),
        }
    }
}

impl ModelSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ModelSpec = toml::from_str(text).map_err(|e| Error::ModelSpec(toml_message(text, &e)))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.collinearity_threshold > 0.0 && self.collinearity_threshold <= 1.0) {
            return Err(Error::ModelSpec(format!(
                "collinearity_threshold must be in (0, 1], got {}",
                self.collinearity_threshold
            )));
        }
        for t in self.mu.terms.iter().chain(&self.zi.terms) {
            if !DYAD_CONTINUOUS.contains(&t.as_str()) && !DYAD_DUMMIES.contains(&t.as_str()) {
                return Err(Error::ModelSpec(format!("unknown term `{t}`")));
            }
        }
        for ind in &self.indicators {
            if ind.countries.is_empty() {
                return Err(Error::ModelSpec(format!("indicator `{}` lists no countries", ind.name)));
            }
        }
        self.sampler.validate()
    }

    fn needs_lag(&self) -> bool {
        self.mu.lagged_dv || self.zi.lagged_dv
    }
}

/// `line:col: message` for toml parse errors.
pub(crate) fn toml_message(text: &str, e: &toml::de::Error) -> String {
    match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let col = before.len() - before.rfind('\n').map(|i| i + 1).unwrap_or(0) + 1;
            format!("line {line}, column {col}: {}", e.message())
        }
        None => e.message().to_string(),
    }
}

/// Row-major design block.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    pub data: Vec<f64>,
    pub n: usize,
}

impl Design {
    pub fn from_columns(names: Vec<String>, cols: &[&[f64]], n: usize) -> Self {
        let p = names.len();
        let mut data = vec![0.0; n * p];
        for (j, c) in cols.iter().enumerate() {
            for i in 0..n {
                data[i * p + j] = c[i];
            }
        }
        Self { names, data, n }
    }

    pub fn p(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.names.iter().position(|n| n == name)?;
        Some((0..self.n).map(|i| self.data[i * self.p() + j]).collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DatasetMeta {
    pub band: String,
    pub standardization: BTreeMap<String, Moments>,
    pub grand_means: BTreeMap<String, f64>,
    pub dropped_columns: Vec<DroppedColumn>,
    pub reference_year: Option<i32>,
    pub n_clamped_ones: usize,
    pub n_rows_without_lag: usize,
    pub n_rows_without_covariates: usize,
    pub n_rows_excluded_pairs: usize,
    pub standardization_sample: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    pub dyads: Vec<DyadId>,
    pub group: Vec<usize>,
    pub row_dyad: Vec<DyadId>,
    pub row_year: Vec<i32>,
    pub y: Vec<f64>,
    pub mu: Design,
    pub zi: Design,
    /// Year dummies only.
    pub phi: Design,
    /// Every constructed column, for export.
    pub columns: BTreeMap<String, Vec<f64>>,
    pub meta: DatasetMeta,
}

impl RegressionDataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn n_groups(&self) -> usize {
        self.dyads.len()
    }

    pub fn zero_share(&self) -> f64 {
        self.y.iter().filter(|&&v| v == 0.0).count() as f64 / self.n().max(1) as f64
    }

    /// Same rows and designs with one design column removed.
    pub fn without_column(&self, eq: &str, name: &str) -> Result<Self> {
        let mut out = self.clone();
        let d = match eq {
            "mu" => &mut out.mu,
            "zi" => &mut out.zi,
            other => return Err(Error::Argument(format!("unknown equation `{other}`"))),
        };
        let j = d
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Argument(format!("no column `{name}` in {eq}")))?;
        let keep: Vec<usize> = (0..d.p()).filter(|&k| k != j).collect();
        let cols: Vec<Vec<f64>> = keep.iter().map(|&k| d.column(&d.names[k]).expect("exists")).collect();
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        *d = Design::from_columns(keep.iter().map(|&k| d.names[k].clone()).collect(), &refs, d.n);
        Ok(out)
    }
}

/// One outcome row before assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelRow {
    pub dyad: DyadId,
    pub year: i32,
    pub y: f64,
    pub lag: Option<f64>,
}

/// Outcome rows plus raw covariate columns aligned with them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PanelInput {
    pub rows: Vec<PanelRow>,
    pub continuous: BTreeMap<String, Vec<f64>>,
    pub dummies: BTreeMap<String, Vec<f64>>,
    pub n_rows_without_covariates: usize,
}

/// Joins kept sync rows of `band` with dyad covariates and attaches lags.
pub fn panel_input(sync: &[SyncRow], covariates: &[DyadCovariates], band: &str) -> Result<PanelInput> {
    let mut outcomes: BTreeMap<(DyadId, i32), f64> = BTreeMap::new();
    for r in sync.iter().filter(|r| r.band == band && !r.dropped) {
        let d = DyadId::new(&r.iso_a, &r.iso_b);
        if outcomes.insert((d.clone(), r.year), r.sync).is_some() {
            return Err(Error::Duplicate {
                entity: d.to_string(),
                key: format!("{}/{band}", r.year),
            });
        }
    }
    if outcomes.is_empty() {
        return Err(Error::Argument(format!("no usable sync rows for band `{band}`")));
    }
    let cov: HashMap<(&DyadId, i32), &DyadCovariates> = covariates.iter().map(|c| ((&c.dyad, c.year), c)).collect();
    let mut input = PanelInput::default();
    for name in DYAD_CONTINUOUS {
        input.continuous.insert(name.to_string(), Vec::new());
    }
    for name in DYAD_DUMMIES {
        input.dummies.insert(name.to_string(), Vec::new());
    }
    for ((dyad, year), &y) in &outcomes {
        let Some(c) = cov.get(&(dyad, *year)) else {
            input.n_rows_without_covariates += 1;
            continue;
        };
        for (name, col) in input.continuous.iter_mut().chain(input.dummies.iter_mut()) {
            col.push(c.get(name).expect("known field"));
        }
        input.rows.push(PanelRow {
            dyad: dyad.clone(),
            year: *year,
            y,
            lag: outcomes.get(&(dyad.clone(), year - 1)).copied(),
        });
    }
    Ok(input)
}

fn indicator_value(ind: &IndicatorSpec, d: &DyadId) -> f64 {
    let a = ind.countries.contains(&d.a);
    let b = ind.countries.contains(&d.b);
    f64::from(u8::from(a ^ b))
}

/// Builds the estimation dataset from raw rows according to `spec`.
pub fn assemble(input: &PanelInput, spec: &ModelSpec) -> Result<RegressionDataset> {
    spec.validate()?;
    let mut meta = DatasetMeta {
        band: spec.band.clone(),
        n_rows_without_covariates: input.n_rows_without_covariates,
        standardization_sample: "final estimation sample (after lag and exclusions)".into(),
        ..Default::default()
    };

    // row selection
    let mut keep = Vec::new();
    for (i, r) in input.rows.iter().enumerate() {
        if !spec.exclude_within.is_empty()
            && spec.exclude_within.contains(&r.dyad.a)
            && spec.exclude_within.contains(&r.dyad.b)
        {
            meta.n_rows_excluded_pairs += 1;
            continue;
        }
        if spec.needs_lag() && r.lag.is_none() {
            meta.n_rows_without_lag += 1;
            continue;
        }
        if !(0.0..=1.0).contains(&r.y) || !r.y.is_finite() {
            return Err(Error::Domain(format!("outcome {} for {} {} outside [0, 1]", r.y, r.dyad, r.year)));
        }
        keep.push(i);
    }
    if keep.is_empty() {
        return Err(Error::Argument("no rows left after lag and exclusion filters".into()));
    }
    let rows: Vec<&PanelRow> = keep.iter().map(|&i| &input.rows[i]).collect();
    let n = rows.len();
    let take = |col: &Vec<f64>| -> Vec<f64> { keep.iter().map(|&i| col[i]).collect() };

    let dyads: Vec<DyadId> = rows.iter().map(|r| r.dyad.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let gindex: HashMap<&DyadId, usize> = dyads.iter().enumerate().map(|(i, d)| (d, i)).collect();
    let group: Vec<usize> = rows.iter().map(|r| gindex[&r.dyad]).collect();

    let mut y: Vec<f64> = rows.iter().map(|r| r.y).collect();
    for v in y.iter_mut() {
        if *v >= 1.0 {
            *v = 1.0 - ONE_CLAMP;
            meta.n_clamped_ones += 1;
        }
    }
    if meta.n_clamped_ones > 0 {
        log::warn!("{} outcomes equal to 1 clamped to 1 - {ONE_CLAMP}", meta.n_clamped_ones);
    }

    // which base covariates are referenced
    let mut bases: BTreeSet<String> = spec.mu.terms.iter().chain(&spec.zi.terms).cloned().collect();
    for e in spec.mu.extra.iter().chain(&spec.zi.extra) {
        for part in e.split(':') {
            let base = part.strip_suffix("_w").or_else(|| part.strip_suffix("_b")).unwrap_or(part);
            if DYAD_CONTINUOUS.contains(&base) || DYAD_DUMMIES.contains(&base) {
                bases.insert(base.to_string());
            }
        }
    }

    // constant columns, then collinearity, on raw continuous values
    let mut raw: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for b in bases.iter().filter(|b| input.continuous.contains_key(*b)) {
        let col = take(&input.continuous[b]);
        match standardize_named(b, &col) {
            Ok(_) => {
                raw.insert(b.clone(), col);
            }
            Err(_) => meta.dropped_columns.push(DroppedColumn {
                name: b.clone(),
                reason: "constant on estimation sample".into(),
            }),
        }
    }
    let (kept, dropped) = collinearity_filter(&raw, spec.collinearity_threshold);
    meta.dropped_columns.extend(dropped);

    let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    if spec.needs_lag() {
        columns.insert(LAG_COLUMN.into(), rows.iter().map(|r| r.lag.expect("filtered")).collect());
    }
    for b in &kept {
        let (z, m) = standardize_named(b, &raw[b])?;
        meta.standardization.insert(b.clone(), m);
        let rv = rewb_decompose(b, &z, &group, dyads.len())?;
        meta.grand_means.insert(b.clone(), rv.grand_mean);
        columns.insert(format!("{b}_b"), rv.between_for_rows(&group));
        columns.insert(format!("{b}_w"), rv.within);
        columns.insert(b.clone(), z);
    }
    for b in bases.iter().filter(|b| input.dummies.contains_key(*b)) {
        let col = take(&input.dummies[b]);
        let rv = rewb_decompose(b, &col, &group, dyads.len())?;
        meta.grand_means.insert(b.clone(), rv.grand_mean);
        columns.insert(format!("{b}_b"), rv.between_for_rows(&group));
        columns.insert(format!("{b}_w"), rv.within);
        columns.insert(b.clone(), col);
    }
    for ind in &spec.indicators {
        columns.insert(ind.name.clone(), rows.iter().map(|r| indicator_value(ind, &r.dyad)).collect());
    }

    let years: BTreeSet<i32> = rows.iter().map(|r| r.year).collect();
    let mut year_names = Vec::new();
    if spec.year_effects {
        meta.reference_year = years.iter().next().copied();
        for &yr in years.iter().skip(1) {
            let name = format!("year[{yr}]");
            columns.insert(name.clone(), rows.iter().map(|r| f64::from(u8::from(r.year == yr))).collect());
            year_names.push(name);
        }
    }

    let dropped_names: BTreeSet<&str> = meta.dropped_columns.iter().map(|d| d.name.as_str()).collect();
    let mut extra_drops = Vec::new();
    let mut design = |eq: &EquationSpec, label: &str, columns: &mut BTreeMap<String, Vec<f64>>| -> Result<Design> {
        let mut names = Vec::new();
        if eq.lagged_dv {
            names.push(LAG_COLUMN.to_string());
        }
        for t in &eq.terms {
            if dropped_names.contains(t.as_str()) {
                continue;
            }
            names.push(format!("{t}_w"));
            names.push(format!("{t}_b"));
        }
        for e in &eq.extra {
            let parts: Vec<&str> = e.split(':').collect();
            let base_of = |p: &str| p.strip_suffix("_w").or_else(|| p.strip_suffix("_b")).unwrap_or(p).to_string();
            if parts.iter().any(|p| dropped_names.contains(base_of(p).as_str())) {
                extra_drops.push(DroppedColumn {
                    name: format!("{label}:{e}"),
                    reason: "references a dropped covariate".into(),
                });
                continue;
            }
            if !columns.contains_key(e) {
                let mut prod = vec![1.0; n];
                for p in &parts {
                    let col = columns
                        .get(*p)
                        .ok_or_else(|| Error::ModelSpec(format!("{label}: unknown column `{p}` in `{e}`")))?;
                    for (a, b) in prod.iter_mut().zip(col) {
                        *a *= b;
                    }
                }
                columns.insert(e.clone(), prod);
            }
            names.push(e.clone());
        }
        names.extend(year_names.iter().cloned());
        let mut seen = BTreeSet::new();
        for nm in &names {
            if !seen.insert(nm) {
                return Err(Error::ModelSpec(format!("{label}: column `{nm}` listed twice")));
            }
        }
        let cols: Vec<&[f64]> = names.iter().map(|nm| columns[nm].as_slice()).collect();
        Ok(Design::from_columns(names.clone(), &cols, n))
    };
    let mu = design(&spec.mu, "mu", &mut columns)?;
    let zi = design(&spec.zi, "zi", &mut columns)?;
    meta.dropped_columns.extend(extra_drops);
    let ycols: Vec<&[f64]> = year_names.iter().map(|nm| columns[nm].as_slice()).collect();
    let phi = Design::from_columns(year_names.clone(), &ycols, n);

    Ok(RegressionDataset {
        row_dyad: rows.iter().map(|r| r.dyad.clone()).collect(),
        row_year: rows.iter().map(|r| r.year).collect(),
        dyads,
        group,
        y,
        mu,
        zi,
        phi,
        columns,
        meta,
    })
}

/// Wide CSV: `dyad,year,y` then every constructed column in name order.
pub fn write_dataset_csv<W: Write>(mut w: W, ds: &RegressionDataset) -> std::io::Result<()> {
    let names: Vec<&String> = ds.columns.keys().collect();
    write!(w, "dyad,year,y")?;
    for nm in &names {
        write!(w, ",{nm}")?;
    }
    writeln!(w)?;
    for i in 0..ds.n() {
        write!(w, "{},{},{}", ds.row_dyad[i], ds.row_year[i], ds.y[i])?;
        for nm in &names {
            write!(w, ",{}", ds.columns[*nm][i])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub const DYAD_COVARIATE_HEADER: [&str; 4] = ["dyad", "iso_a", "iso_b", "year"];

pub fn write_dyad_covariates<W: Write>(w: W, rows: &[DyadCovariates]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = DYAD_COVARIATE_HEADER.to_vec();
    header.extend(DYAD_CONTINUOUS);
    header.extend(DYAD_DUMMIES);
    wr.write_record(&header).map_err(|e| Error::csv("dyad covariates", e))?;
    for r in rows {
        let mut rec = vec![r.dyad.to_string(), r.dyad.a.clone(), r.dyad.b.clone(), r.year.to_string()];
        for f in DYAD_CONTINUOUS.iter().chain(&DYAD_DUMMIES) {
            rec.push(r.get(f).expect("known field").to_string());
        }
        wr.write_record(&rec).map_err(|e| Error::csv("dyad covariates", e))?;
    }
    wr.flush().map_err(|e| Error::io("dyad covariates", e))
}

pub fn read_dyad_covariates(path: &std::path::Path) -> Result<Vec<DyadCovariates>> {
    let label = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(label.clone(), e))?;
    let headers = rdr.headers().map_err(|e| Error::csv(label.clone(), e))?.clone();
    let idx = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Schema {
            path: label.clone(),
            message: format!("missing column `{name}`"),
        })
    };
    let ia = idx("iso_a")?;
    let ib = idx("iso_b")?;
    let iy = idx("year")?;
    let fields: Vec<(&str, usize)> = DYAD_CONTINUOUS
        .iter()
        .chain(&DYAD_DUMMIES)
        .map(|f| idx(f).map(|i| (*f, i)))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(label.clone(), e))?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i).unwrap_or("").parse().map_err(|_| Error::Schema {
                path: label.clone(),
                message: format!("non-numeric value `{}`", rec.get(i).unwrap_or("")),
            })
        };
        let mut vals: HashMap<&str, f64> = HashMap::new();
        for (f, i) in &fields {
            vals.insert(f, num(*i)?);
        }
        let year = num(iy)? as i32;
        out.push(DyadCovariates {
            dyad: DyadId::new(rec.get(ia).unwrap_or(""), rec.get(ib).unwrap_or("")),
            year,
            trade_intensity: vals["trade_intensity"],
            fin_open: vals["fin_open"],
            d_eu_not_emu: vals["d_eu_not_emu"] as u8,
            d_emu: vals["d_emu"] as u8,
            fiscal_gap: vals["fiscal_gap"],
            inflation_gap: vals["inflation_gap"],
            spec_distance: vals["spec_distance"],
            capital_gap: vals["capital_gap"],
            urban_gap: vals["urban_gap"],
            remit_gap: vals["remit_gap"],
            liquid_gap: vals["liquid_gap"],
            fsd_gap: vals["fsd_gap"],
            bankdep_gap: vals["bankdep_gap"],
        });
    }
    Ok(out)
}
