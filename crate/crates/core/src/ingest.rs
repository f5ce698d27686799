//! Loading monthly activity panels and annual covariates, building the
//! GDP-weighted benchmark and the undirected dyad-year covariates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longest run of missing years that linear interpolation will fill.
pub const MAX_INTERPOLATION_GAP: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: i32,
    /// 1..=12
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Argument(format!("month {month} out of range")));
        }
        Ok(Self { year, month })
    }

    /// Months since year 0; consecutive months differ by one.
    pub fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn from_ordinal(ord: i64) -> Self {
        Self {
            year: ord.div_euclid(12) as i32,
            month: (ord.rem_euclid(12) + 1) as u32,
        }
    }

    pub fn add_months(self, n: i64) -> Self {
        Self::from_ordinal(self.ordinal() + n)
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Argument(format!("invalid year-month `{s}`, expected YYYY-MM"));
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        let year: i32 = y.parse().map_err(|_| bad())?;
        // tolerate YYYY-MM-DD
        let m = m.split('-').next().unwrap_or(m);
        let month: u32 = m.parse().map_err(|_| bad())?;
        YearMonth::new(year, month)
    }
}

/// A contiguous, monthly-sampled series for one entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub entity_id: String,
    pub start: YearMonth,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(entity_id: impl Into<String>, start: YearMonth, values: Vec<f64>) -> Result<Self> {
        let entity_id = entity_id.into();
        if values.len() < 2 {
            return Err(Error::Argument(format!(
                "series {entity_id} has {} observations, need at least 2",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!(
                "series {entity_id} has a non-finite value at {}",
                start.add_months(i as i64)
            )));
        }
        Ok(Self {
            entity_id,
            start,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Last observed month.
    pub fn end(&self) -> YearMonth {
        self.start.add_months(self.values.len() as i64 - 1)
    }

    pub fn month_at(&self, i: usize) -> YearMonth {
        self.start.add_months(i as i64)
    }

    /// Restricts the series to `[from, to]` (inclusive), if that span lies inside it.
    pub fn window(&self, from: YearMonth, to: YearMonth) -> Option<TimeSeries> {
        let lo = from.ordinal() - self.start.ordinal();
        let hi = to.ordinal() - self.start.ordinal();
        if lo < 0 || hi >= self.values.len() as i64 || hi - lo < 1 {
            return None;
        }
        Some(TimeSeries {
            entity_id: self.entity_id.clone(),
            start: from,
            values: self.values[lo as usize..=hi as usize].to_vec(),
        })
    }
}

/// Restricts two series to their common span.
pub fn align_pair(a: &TimeSeries, b: &TimeSeries) -> Result<(TimeSeries, TimeSeries)> {
    let from = a.start.max(b.start);
    let to = a.end().min(b.end());
    match (a.window(from, to), b.window(from, to)) {
        (Some(x), Some(y)) => Ok((x, y)),
        _ => Err(Error::Alignment(format!(
            "{} and {} share fewer than two months",
            a.entity_id, b.entity_id
        ))),
    }
}

/// Optional pre-transform applied to activity series before the wavelet step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesTransform {
    #[default]
    None,
    Log,
    LogDiff,
}

impl SeriesTransform {
    pub fn name(self) -> &'static str {
        match self {
            SeriesTransform::None => "none",
            SeriesTransform::Log => "log",
            SeriesTransform::LogDiff => "log-diff",
        }
    }

    pub fn apply(self, series: &TimeSeries) -> Result<TimeSeries> {
        let logs = || -> Result<Vec<f64>> {
            series
                .values
                .iter()
                .map(|&v| {
                    if v > 0.0 {
                        Ok(v.ln())
                    } else {
                        Err(Error::Domain(format!(
                            "log transform of non-positive value in {}",
                            series.entity_id
                        )))
                    }
                })
                .collect()
        };
        match self {
            SeriesTransform::None => Ok(series.clone()),
            SeriesTransform::Log => TimeSeries::new(series.entity_id.clone(), series.start, logs()?),
            SeriesTransform::LogDiff => {
                let l = logs()?;
                let d = l.windows(2).map(|w| w[1] - w[0]).collect();
                TimeSeries::new(series.entity_id.clone(), series.start.add_months(1), d)
            }
        }
    }
}

impl FromStr for SeriesTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "log" => Ok(Self::Log),
            "log-diff" => Ok(Self::LogDiff),
            other => Err(Error::Argument(format!("unknown transform `{other}`"))),
        }
    }
}

/// Column names of the monthly panel CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthlySchema {
    pub entity: String,
    pub date: String,
    pub value: String,
}

impl Default for MonthlySchema {
    fn default() -> Self {
        Self {
            entity: "entity".into(),
            date: "date".into(),
            value: "value".into(),
        }
    }
}

fn column_index(headers: &csv::StringRecord, name: &str, label: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Schema {
            path: label.to_string(),
            message: format!("missing column `{name}`"),
        })
}

pub fn load_monthly_panel(path: &Path, schema: &MonthlySchema) -> Result<BTreeMap<String, TimeSeries>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_monthly_panel(file, &path.display().to_string(), schema)
}

/// Reads `entity,date,value` rows into one series per entity.
pub fn read_monthly_panel<R: Read>(
    reader: R,
    label: &str,
    schema: &MonthlySchema,
) -> Result<BTreeMap<String, TimeSeries>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv(label, e))?.clone();
    let ie = column_index(&headers, &schema.entity, label)?;
    let id = column_index(&headers, &schema.date, label)?;
    let iv = column_index(&headers, &schema.value, label)?;

    let mut obs: BTreeMap<String, BTreeMap<YearMonth, Option<f64>>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(label, e))?;
        let entity = rec.get(ie).unwrap_or("").to_string();
        let month: YearMonth = rec.get(id).unwrap_or("").parse()?;
        let raw = rec.get(iv).unwrap_or("");
        let value = if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
            None
        } else {
            Some(raw.parse::<f64>().map_err(|_| Error::Schema {
                path: label.to_string(),
                message: format!("non-numeric value `{raw}` for {entity} {month}"),
            })?)
        };
        let slot = obs.entry(entity.clone()).or_default();
        if slot.insert(month, value).is_some() {
            return Err(Error::Duplicate {
                entity,
                key: month.to_string(),
            });
        }
    }

    let mut out = BTreeMap::new();
    for (entity, months) in obs {
        let start = *months.keys().next().expect("non-empty");
        let mut values = Vec::with_capacity(months.len());
        let mut expected = start;
        for (&m, &v) in &months {
            if m != expected {
                return Err(Error::Gap {
                    entity,
                    month: expected.to_string(),
                });
            }
            match v {
                Some(v) => values.push(v),
                None => {
                    return Err(Error::Gap {
                        entity,
                        month: m.to_string(),
                    })
                }
            }
            expected = expected.add_months(1);
        }
        let ts = TimeSeries::new(entity.clone(), start, values)?;
        out.insert(entity, ts);
    }
    Ok(out)
}

/// Aggregation weights for the benchmark series.
#[derive(Debug, Clone, PartialEq)]
pub enum BenchmarkWeights {
    /// One weight per member for the whole span.
    Fixed(BTreeMap<String, f64>),
    /// Per-year weights (e.g. annual GDP); every member needs every covered year.
    Annual(BTreeMap<String, BTreeMap<i32, f64>>),
}

impl BenchmarkWeights {
    fn weight(&self, entity: &str, year: i32) -> Result<f64> {
        let w = match self {
            BenchmarkWeights::Fixed(m) => m.get(entity).copied(),
            BenchmarkWeights::Annual(m) => m.get(entity).and_then(|y| y.get(&year)).copied(),
        };
        match w {
            Some(w) if w >= 0.0 && w.is_finite() => Ok(w),
            Some(w) => Err(Error::Weight(format!("weight {w} for {entity} is negative or non-finite"))),
            None => Err(Error::Weight(format!("no weight for {entity} in {year}"))),
        }
    }
}

/// Weighted per-month mean of the member series; weights are normalized to sum 1.
pub fn build_benchmark(
    id: &str,
    members: &[&TimeSeries],
    weights: &BenchmarkWeights,
) -> Result<TimeSeries> {
    let first = members
        .first()
        .ok_or_else(|| Error::Argument("benchmark needs at least one member".into()))?;
    for m in members {
        if m.start != first.start || m.len() != first.len() {
            return Err(Error::Alignment(format!(
                "{} spans {}..{} but {} spans {}..{}",
                m.entity_id,
                m.start,
                m.end(),
                first.entity_id,
                first.start,
                first.end()
            )));
        }
    }
    let mut values = Vec::with_capacity(first.len());
    for t in 0..first.len() {
        let year = first.month_at(t).year;
        let mut num = 0.0;
        let mut den = 0.0;
        for m in members {
            let w = weights.weight(&m.entity_id, year)?;
            num += w * m.values[t];
            den += w;
        }
        if den <= 0.0 {
            return Err(Error::Weight(format!("benchmark weights sum to zero in {year}")));
        }
        values.push(num / den);
    }
    TimeSeries::new(id, first.start, values)
}

/// Fills internal runs of at most [`MAX_INTERPOLATION_GAP`] missing years linearly.
pub fn interpolate_covariate(values: &[Option<f64>]) -> Vec<Option<f64>> {
    interpolate_with_max_gap(values, MAX_INTERPOLATION_GAP)
}

pub fn interpolate_with_max_gap(values: &[Option<f64>], max_gap: usize) -> Vec<Option<f64>> {
    let mut out = values.to_vec();
    let mut last: Option<usize> = None;
    for i in 0..values.len() {
        if let Some(v) = values[i] {
            if let Some(j) = last {
                let gap = i - j - 1;
                if gap > 0 && gap <= max_gap {
                    let v0 = values[j].expect("observed");
                    for (k, slot) in out.iter_mut().enumerate().take(i).skip(j + 1) {
                        let frac = (k - j) as f64 / (i - j) as f64;
                        *slot = Some(v0 + frac * (v - v0));
                    }
                }
            }
            last = Some(i);
        }
    }
    out
}

/// Membership calendar: first year in the EU / EMU (None = never in sample).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MembershipCalendar {
    entries: BTreeMap<String, (Option<i32>, Option<i32>)>,
}

impl MembershipCalendar {
    pub fn insert(&mut self, country: &str, eu_from: Option<i32>, emu_from: Option<i32>) -> Result<()> {
        match (eu_from, emu_from) {
            (None, Some(_)) => {
                return Err(Error::Membership(format!("{country} is in EMU without EU membership")))
            }
            (Some(eu), Some(emu)) if emu < eu => {
                return Err(Error::Membership(format!(
                    "{country} joins EMU ({emu}) before the EU ({eu})"
                )))
            }
            _ => {}
        }
        self.entries.insert(country.to_string(), (eu_from, emu_from));
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(file, &path.display().to_string())
    }

    /// Reads `country,eu_from_year,emu_from_year`; blank means never.
    pub fn read<R: Read>(reader: R, label: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::csv(label, e))?.clone();
        let ic = column_index(&headers, "country", label)?;
        let ieu = column_index(&headers, "eu_from_year", label)?;
        let iemu = column_index(&headers, "emu_from_year", label)?;
        let mut cal = Self::default();
        let parse = |s: &str| -> Result<Option<i32>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| Error::Schema {
                    path: label.to_string(),
                    message: format!("invalid year `{s}`"),
                })
            }
        };
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::csv(label, e))?;
            let c = rec.get(ic).unwrap_or("");
            if cal.entries.contains_key(c) {
                return Err(Error::Duplicate {
                    entity: c.to_string(),
                    key: "membership".into(),
                });
            }
            cal.insert(c, parse(rec.get(ieu).unwrap_or(""))?, parse(rec.get(iemu).unwrap_or(""))?)?;
        }
        Ok(cal)
    }

    pub fn is_eu(&self, country: &str, year: i32) -> bool {
        matches!(self.entries.get(country), Some((Some(y), _)) if year >= *y)
    }

    pub fn is_emu(&self, country: &str, year: i32) -> bool {
        matches!(self.entries.get(country), Some((_, Some(y))) if year >= *y)
    }
}

/// Names of the per-country numeric covariate fields, as used in CSV headers.
pub const COUNTRY_FIELDS: [&str; 15] = [
    "gdp",
    "ext_assets",
    "ext_liabilities",
    "gov_exp",
    "inflation",
    "share_agriculture",
    "share_industry",
    "share_services",
    "capital_pc",
    "urban",
    "remittances",
    "liquid_liabilities",
    "fin_system_deposits",
    "bank_deposits",
    "human_capital",
];

/// One country-year of covariates (missing values are `None`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CountryYearCovariates {
    pub country: String,
    pub year: i32,
    /// Values indexed like [`COUNTRY_FIELDS`].
    pub fields: [Option<f64>; 15],
    /// Exports to each partner in this year.
    pub exports_to: BTreeMap<String, f64>,
    pub eu: bool,
    pub emu: bool,
}

impl CountryYearCovariates {
    pub fn get(&self, field: &str) -> Option<f64> {
        COUNTRY_FIELDS
            .iter()
            .position(|f| *f == field)
            .and_then(|i| self.fields[i])
    }

    pub fn set(&mut self, field: &str, value: Option<f64>) -> Result<()> {
        let i = COUNTRY_FIELDS
            .iter()
            .position(|f| *f == field)
            .ok_or_else(|| Error::Argument(format!("unknown covariate field `{field}`")))?;
        self.fields[i] = value;
        Ok(())
    }

    fn require(&self, field: &str) -> Result<f64> {
        self.get(field).ok_or_else(|| Error::Coverage {
            country: self.country.clone(),
            year: self.year,
            field: field.to_string(),
        })
    }

    /// Sectoral shares rescaled to sum to one.
    pub fn sector_shares(&self) -> Result<[f64; 3]> {
        let s = [
            self.require("share_agriculture")?,
            self.require("share_industry")?,
            self.require("share_services")?,
        ];
        if s.iter().any(|v| *v < 0.0) {
            return Err(Error::Domain(format!(
                "negative sectoral share for {} in {}",
                self.country, self.year
            )));
        }
        let total: f64 = s.iter().sum();
        if total <= 0.0 {
            return Err(Error::Domain(format!(
                "sectoral shares sum to zero for {} in {}",
                self.country, self.year
            )));
        }
        Ok([s[0] / total, s[1] / total, s[2] / total])
    }
}

/// Country-year covariate panel.
#[derive(Debug, Clone, Default)]
pub struct CovariatePanel {
    pub rows: BTreeMap<(String, i32), CountryYearCovariates>,
}

impl CovariatePanel {
    fn row_mut(&mut self, country: &str, year: i32) -> &mut CountryYearCovariates {
        self.rows
            .entry((country.to_string(), year))
            .or_insert_with(|| CountryYearCovariates {
                country: country.to_string(),
                year,
                ..Default::default()
            })
    }

    pub fn get(&self, country: &str, year: i32) -> Option<&CountryYearCovariates> {
        self.rows.get(&(country.to_string(), year))
    }

    pub fn countries(&self) -> BTreeSet<String> {
        self.rows.keys().map(|(c, _)| c.clone()).collect()
    }

    pub fn load_wide(path: &Path, percent_columns: &[String]) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut panel = Self::default();
        panel.read_wide(file, &path.display().to_string(), percent_columns)?;
        Ok(panel)
    }

    /// Reads `country,year,<field>...`; unknown columns are a schema error.
    /// Columns listed in `percent_columns` are divided by 100.
    pub fn read_wide<R: Read>(&mut self, reader: R, label: &str, percent_columns: &[String]) -> Result<()> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::csv(label, e))?.clone();
        let ic = column_index(&headers, "country", label)?;
        let iy = column_index(&headers, "year", label)?;
        let mut fields = Vec::new();
        for (i, h) in headers.iter().enumerate() {
            if i == ic || i == iy {
                continue;
            }
            if !COUNTRY_FIELDS.contains(&h) {
                return Err(Error::Schema {
                    path: label.to_string(),
                    message: format!("unknown covariate column `{h}`"),
                });
            }
            let scale = if percent_columns.iter().any(|p| p == h) { 0.01 } else { 1.0 };
            fields.push((i, h.to_string(), scale));
        }
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::csv(label, e))?;
            let country = rec.get(ic).unwrap_or("").to_string();
            let year: i32 = rec.get(iy).unwrap_or("").parse().map_err(|_| Error::Schema {
                path: label.to_string(),
                message: format!("invalid year for {country}"),
            })?;
            for (i, name, scale) in &fields {
                let raw = rec.get(*i).unwrap_or("");
                let v = parse_optional(raw, label)?.map(|v| v * scale);
                let row = self.row_mut(&country, year);
                if v.is_some() && row.get(name).is_some() {
                    return Err(Error::Duplicate {
                        entity: country,
                        key: format!("{year}/{name}"),
                    });
                }
                if v.is_some() {
                    row.set(name, v)?;
                }
            }
        }
        Ok(())
    }

    /// Reads a long-format file `country,year,<field>` carrying one field.
    pub fn read_long<R: Read>(&mut self, reader: R, label: &str, field: &str, percent: bool) -> Result<()> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::csv(label, e))?.clone();
        let ic = column_index(&headers, "country", label)?;
        let iy = column_index(&headers, "year", label)?;
        let iv = column_index(&headers, field, label)?;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::csv(label, e))?;
            let country = rec.get(ic).unwrap_or("").to_string();
            let year: i32 = rec.get(iy).unwrap_or("").parse().map_err(|_| Error::Schema {
                path: label.to_string(),
                message: format!("invalid year for {country}"),
            })?;
            let v = parse_optional(rec.get(iv).unwrap_or(""), label)?.map(|v| if percent { v / 100.0 } else { v });
            self.row_mut(&country, year).set(field, v)?;
        }
        Ok(())
    }

    pub fn load_trade(&mut self, path: &Path) -> Result<()> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        self.read_trade(file, &path.display().to_string())
    }

    /// Reads bilateral flows `exporter,importer,year,value`.
    pub fn read_trade<R: Read>(&mut self, reader: R, label: &str) -> Result<()> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::csv(label, e))?.clone();
        let ie = column_index(&headers, "exporter", label)?;
        let ii = column_index(&headers, "importer", label)?;
        let iy = column_index(&headers, "year", label)?;
        let iv = column_index(&headers, "value", label)?;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::csv(label, e))?;
            let exporter = rec.get(ie).unwrap_or("").to_string();
            let importer = rec.get(ii).unwrap_or("").to_string();
            let year: i32 = rec.get(iy).unwrap_or("").parse().map_err(|_| Error::Schema {
                path: label.to_string(),
                message: "invalid trade year".into(),
            })?;
            if let Some(v) = parse_optional(rec.get(iv).unwrap_or(""), label)? {
                let prev = self.row_mut(&exporter, year).exports_to.insert(importer.clone(), v);
                if prev.is_some() {
                    return Err(Error::Duplicate {
                        entity: exporter,
                        key: format!("{importer}/{year}"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Sets the EU/EMU flags of every row from the calendar.
    pub fn apply_membership(&mut self, calendar: &MembershipCalendar) {
        for row in self.rows.values_mut() {
            row.eu = calendar.is_eu(&row.country, row.year);
            row.emu = calendar.is_emu(&row.country, row.year);
        }
    }

    /// Linear interpolation of internal gaps per country and field over the
    /// country's observed year range.
    pub fn interpolate(&mut self, max_gap: usize) {
        for country in self.countries() {
            let years: Vec<i32> = self
                .rows
                .keys()
                .filter(|(c, _)| *c == country)
                .map(|(_, y)| *y)
                .collect();
            let (lo, hi) = (years[0], *years.last().expect("non-empty"));
            for fi in 0..COUNTRY_FIELDS.len() {
                let series: Vec<Option<f64>> = (lo..=hi)
                    .map(|y| self.get(&country, y).and_then(|r| r.fields[fi]))
                    .collect();
                let filled = interpolate_with_max_gap(&series, max_gap);
                for (k, v) in filled.into_iter().enumerate() {
                    if v.is_some() && series[k].is_none() {
                        self.row_mut(&country, lo + k as i32).fields[fi] = v;
                    }
                }
            }
        }
    }
}

fn parse_optional(raw: &str, label: &str) -> Result<Option<f64>> {
    if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    raw.parse::<f64>().map(Some).map_err(|_| Error::Schema {
        path: label.to_string(),
        message: format!("non-numeric value `{raw}`"),
    })
}

/// Unordered country pair, stored with `a < b`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DyadId {
    pub a: String,
    pub b: String,
}

impl DyadId {
    pub fn new(x: &str, y: &str) -> Self {
        if x <= y {
            Self {
                a: x.to_string(),
                b: y.to_string(),
            }
        } else {
            Self {
                a: y.to_string(),
                b: x.to_string(),
            }
        }
    }

    pub fn contains(&self, c: &str) -> bool {
        self.a == c || self.b == c
    }
}

impl fmt::Display for DyadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.a, self.b)
    }
}

impl FromStr for DyadId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once('-')
            .ok_or_else(|| Error::Argument(format!("invalid dyad id `{s}`")))?;
        Ok(DyadId::new(a, b))
    }
}

/// Dyad-year regressors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadCovariates {
    pub dyad: DyadId,
    pub year: i32,
    pub trade_intensity: f64,
    pub fin_open: f64,
    pub d_eu_not_emu: u8,
    pub d_emu: u8,
    pub fiscal_gap: f64,
    pub inflation_gap: f64,
    pub spec_distance: f64,
    pub capital_gap: f64,
    pub urban_gap: f64,
    pub remit_gap: f64,
    pub liquid_gap: f64,
    pub fsd_gap: f64,
    pub bankdep_gap: f64,
}

/// Names of the continuous dyad regressors, in column order.
pub const DYAD_CONTINUOUS: [&str; 11] = [
    "trade_intensity",
    "fin_open",
    "fiscal_gap",
    "inflation_gap",
    "spec_distance",
    "capital_gap",
    "urban_gap",
    "remit_gap",
    "liquid_gap",
    "fsd_gap",
    "bankdep_gap",
];

/// Membership dummies (REWB-decomposed, never standardized).
pub const DYAD_DUMMIES: [&str; 2] = ["d_eu_not_emu", "d_emu"];

impl DyadCovariates {
    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "trade_intensity" => self.trade_intensity,
            "fin_open" => self.fin_open,
            "d_eu_not_emu" => self.d_eu_not_emu as f64,
            "d_emu" => self.d_emu as f64,
            "fiscal_gap" => self.fiscal_gap,
            "inflation_gap" => self.inflation_gap,
            "spec_distance" => self.spec_distance,
            "capital_gap" => self.capital_gap,
            "urban_gap" => self.urban_gap,
            "remit_gap" => self.remit_gap,
            "liquid_gap" => self.liquid_gap,
            "fsd_gap" => self.fsd_gap,
            "bankdep_gap" => self.bankdep_gap,
            _ => return None,
        })
    }
}

/// Applies the dyad formulas to two countries' covariates for one year.
///
/// The pair is put in canonical order first, so the result does not depend on
/// argument order. Imports of `a` from `b` are taken as the mirror flow
/// (exports of `b` to `a`); absent flows count as zero trade.
pub fn build_dyad_covariates(
    x: &CountryYearCovariates,
    y: &CountryYearCovariates,
    year: i32,
) -> Result<DyadCovariates> {
    if x.year != year || y.year != year {
        return Err(Error::Argument(format!(
            "covariates for {}/{} and {}/{} do not match year {year}",
            x.country, x.year, y.country, y.year
        )));
    }
    if x.country == y.country {
        return Err(Error::Argument(format!("dyad needs two distinct countries, got {}", x.country)));
    }
    let (a, b) = if x.country <= y.country { (x, y) } else { (y, x) };

    let gdp_a = a.require("gdp")?;
    let gdp_b = b.require("gdp")?;
    if gdp_a <= 0.0 || gdp_b <= 0.0 {
        return Err(Error::Domain(format!("non-positive GDP in dyad {}-{} {year}", a.country, b.country)));
    }
    let exports_ab = a.exports_to.get(&b.country).copied().unwrap_or(0.0);
    let imports_ab = b.exports_to.get(&a.country).copied().unwrap_or(0.0);
    let trade_intensity = (exports_ab + imports_ab) / (gdp_a + gdp_b);

    let fin_open = (a.require("ext_assets")? + a.require("ext_liabilities")?) / gdp_a
        + (b.require("ext_assets")? + b.require("ext_liabilities")?) / gdp_b;

    let both_eu = (a.eu && b.eu) as u8;
    let both_emu = (a.emu && b.emu) as u8;

    let gap = |field: &str| -> Result<f64> { Ok((a.require(field)? - b.require(field)?).abs()) };

    let sa = a.sector_shares()?;
    let sb = b.sector_shares()?;
    let spec_distance = sa.iter().zip(sb.iter()).map(|(p, q)| (p - q).abs()).sum();

    Ok(DyadCovariates {
        dyad: DyadId::new(&a.country, &b.country),
        year,
        trade_intensity,
        fin_open,
        d_eu_not_emu: both_eu * (1 - both_emu),
        d_emu: both_emu,
        fiscal_gap: gap("gov_exp")?,
        inflation_gap: gap("inflation")?,
        spec_distance,
        capital_gap: gap("capital_pc")?,
        urban_gap: gap("urban")?,
        remit_gap: gap("remittances")?,
        liquid_gap: gap("liquid_liabilities")?,
        fsd_gap: gap("fin_system_deposits")?,
        bankdep_gap: gap("bank_deposits")?,
    })
}

/// Builds dyad covariates for every unordered pair and year where both
/// countries have full coverage. Pairs lacking a field are skipped and
/// reported in the second return value.
pub fn build_all_dyads(panel: &CovariatePanel) -> (Vec<DyadCovariates>, Vec<Error>) {
    let countries: Vec<String> = panel.countries().into_iter().collect();
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for i in 0..countries.len() {
        for j in i + 1..countries.len() {
            let years: BTreeSet<i32> = panel
                .rows
                .keys()
                .filter(|(c, _)| *c == countries[i])
                .map(|(_, y)| *y)
                .collect();
            for year in years {
                let (Some(a), Some(b)) = (panel.get(&countries[i], year), panel.get(&countries[j], year)) else {
                    continue;
                };
                match build_dyad_covariates(a, b, year) {
                    Ok(d) => out.push(d),
                    Err(e) => skipped.push(e),
                }
            }
        }
    }
    (out, skipped)
}
