//! Command-line front end.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::{build_benchmark, load_monthly_panel, BenchmarkWeights, MonthlySchema};
use crate::panel::{assemble, panel_input, read_dyad_covariates, write_dataset_csv, write_dyad_covariates, ModelSpec};
use crate::syncindex::{dyad_sync, read_sync_csv, write_sync_csv, PlanCache, SyncConfig};
use crate::synth::{gen_country_panel, write_monthly_panel, CountryPanelSpec};
use crate::xwt::{band_time_lag, PHASE_CONVENTION};
use crate::zib::{elpd_diff, sample_posterior, write_summary, LooResult, RANDOM_EFFECTS_NOTE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_WARNINGS: i32 = 3;
pub const OUTPUT_DIR_ENV: &str = "WAVESYNC_OUTPUT_DIR";

const DEFAULTS_HELP: &str = "\
Defaults (override in the [sync] table of the config file):
  bands            short = [18, 54) months, long = [54, 102) months
  wavelet          Morlet, eta = 6, 12 voices per octave, periods 18..102
  cone of influence  sqrt(2) * scale
  smoothing        Gaussian in time (0.6 * scale), 3-bin boxcar in scale
  significance     300 phase-randomized surrogate pairs, p <= 0.05
  eligibility      year dropped with fewer than 9 months or 6 COI-eligible months
  priors           moderate: Normal(0, 1) coefficients (model spec `regime`)
  sampler          4 chains, 1000 warmup, 1000 draws";

#[derive(Debug, Parser)]
#[command(name = "wavesync", version, about = "Wavelet-coherence synchronization panels and ZIB regression", after_help = DEFAULTS_HELP)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Restrict to one band by name.
    #[arg(long, global = true)]
    pub band: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = OUTPUT_DIR_ENV)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Coherence, phase, p-value and COI dump for one pair, plus band lag files.
    Coherence(CoherenceArgs),
    /// Annual dyad-year sync indices for all pairs and bands.
    SyncPanel(SyncPanelArgs),
    /// Fit the ZIB model to a sync panel.
    Fit(FitArgs),
    /// Write a synthetic monthly panel and dyad covariates.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct CoherenceArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub x: String,
    #[arg(long)]
    pub y: String,
}

#[derive(Debug, Args)]
pub struct SyncPanelArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Add the configured benchmark aggregate as an extra entity.
    #[arg(long)]
    pub benchmark: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub sync: Option<PathBuf>,
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Pointwise elpd file of the reference fit for Δelpd.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub countries: Option<usize>,
    #[arg(long)]
    pub years: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub monthly: Option<PathBuf>,
    pub schema: Option<MonthlySchema>,
    pub dyad_covariates: Option<PathBuf>,
    pub sync: Option<PathBuf>,
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub id: String,
    pub weights: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub input: InputConfig,
    pub sync: SyncConfig,
    pub benchmark: Option<BenchmarkConfig>,
    pub simulate: CountryPanelSpec,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), crate::panel::toml_message(&text, &e))))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(q) = p.as_mut() {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        fix(&mut cfg.output_dir);
        fix(&mut cfg.input.monthly);
        fix(&mut cfg.input.dyad_covariates);
        fix(&mut cfg.input.sync);
        fix(&mut cfg.input.model);
        Ok(cfg)
    }
}

#[derive(Debug, Serialize)]
struct Meta<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config_hash: &'a str,
    #[serde(flatten)]
    extra: T,
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    hash: String,
    command: &'static str,
    band: Option<String>,
}

impl Ctx {
    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.out.join(name);
        Ok(BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?))
    }

    fn write_with<F>(&self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let path = self.out.join(name);
        let mut w = self.create(name)?;
        f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))
    }

    fn meta<T: Serialize>(&self, name: &str, extra: T) -> Result<()> {
        let m = Meta {
            tool: "wavesync",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            seed: self.cfg.seed,
            config_hash: &self.hash,
            extra,
        };
        let text = serde_json::to_string_pretty(&m).map_err(|e| Error::Config(e.to_string()))?;
        self.write_with(&format!("{name}.meta.json"), |w| writeln!(w, "{text}"))
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
        self.write_with(name, |w| writeln!(w, "{text}"))
    }
}

fn need(p: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    p.clone().ok_or_else(|| Error::Config(format!("no {what} path given (flag or config file)")))
}

fn check_exists(p: &Path) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "file not found")))
    }
}

fn load_series(ctx: &Ctx, input: &Option<PathBuf>) -> Result<BTreeMap<String, crate::ingest::TimeSeries>> {
    let path = input.clone().or_else(|| ctx.cfg.input.monthly.clone());
    let path = need(&path, "monthly panel")?;
    check_exists(&path)?;
    let schema = ctx.cfg.input.schema.clone().unwrap_or(MonthlySchema {
        entity: "country".into(),
        date: "date".into(),
        value: "value".into(),
    });
    load_monthly_panel(&path, &schema)
}

fn cmd_coherence(ctx: &Ctx, args: &CoherenceArgs) -> Result<i32> {
    let series = load_series(ctx, &args.input)?;
    let get = |id: &str| {
        series
            .get(id)
            .ok_or_else(|| Error::Argument(format!("entity `{id}` not in the monthly panel")))
    };
    let (x, y) = (get(&args.x)?, get(&args.y)?);
    let cfg = &ctx.cfg.sync;
    let plans = PlanCache::new(cfg.grid()?, cfg.smoothing);
    let res = dyad_sync(x, y, cfg, ctx.cfg.seed, &plans)?;
    let f = &res.field;
    let pv = f.pvals.as_ref().expect("p-values computed");
    let tag = res.dyad.to_string();
    let name = format!("coherence_{tag}.csv");
    ctx.write_with(&name, |w| {
        writeln!(w, "time,month,scale_index,scale,period,r,phase,pval,coi,degenerate")?;
        for t in 0..f.n_times() {
            for j in 0..f.grid.len() {
                writeln!(
                    w,
                    "{t},{},{j},{},{},{},{},{},{},{}",
                    f.month(t),
                    f.grid.scales[j],
                    f.grid.periods[j],
                    f.r[[j, t]],
                    f.phase[[j, t]],
                    pv[[j, t]],
                    u8::from(f.coi_mask[[j, t]]),
                    u8::from(f.degenerate[[j, t]])
                )?;
            }
        }
        Ok(())
    })?;
    #[derive(Serialize)]
    struct CohMeta<'a> {
        dyad: String,
        x: &'a str,
        y: &'a str,
        phase_convention: &'static str,
        sync: &'a SyncConfig,
    }
    // the dyad id orders the pair; x is its first entity
    let meta = CohMeta {
        dyad: tag.clone(),
        x: &res.dyad.a,
        y: &res.dyad.b,
        phase_convention: PHASE_CONVENTION,
        sync: cfg,
    };
    ctx.meta(&name, &meta)?;
    for band in &cfg.bands {
        let lags = band_time_lag(f, band, cfg.alpha)?;
        let lname = format!("lag_{tag}_{}.csv", band.name);
        ctx.write_with(&lname, |w| {
            writeln!(w, "time,month,delta_t,band_phase,mean_frequency,reliable")?;
            for p in &lags {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    p.time,
                    p.month,
                    p.delta_t,
                    p.band_phase,
                    p.mean_frequency,
                    u8::from(p.reliable)
                )?;
            }
            Ok(())
        })?;
        ctx.meta(&lname, &meta)?;
    }
    Ok(EXIT_OK)
}

fn cmd_sync_panel(ctx: &Ctx, args: &SyncPanelArgs) -> Result<i32> {
    let mut series = load_series(ctx, &args.input)?;
    if args.benchmark {
        let b = ctx
            .cfg
            .benchmark
            .as_ref()
            .ok_or_else(|| Error::Config("--benchmark needs a [benchmark] table in the config".into()))?;
        let members: Vec<&crate::ingest::TimeSeries> = b
            .weights
            .keys()
            .map(|k| series.get(k).ok_or_else(|| Error::Argument(format!("benchmark member `{k}` missing"))))
            .collect::<Result<_>>()?;
        let bench = build_benchmark(&b.id, &members, &BenchmarkWeights::Fixed(b.weights.clone()))?;
        series.insert(b.id.clone(), bench);
    }
    let results = crate::syncindex::sync_panel(&series, &ctx.cfg.sync, ctx.cfg.seed)?;
    let rows: Vec<_> = results.into_iter().flat_map(|r| r.years).collect();
    ctx.write_with("sync.csv", |w| write_sync_csv(w, &rows))?;
    #[derive(Serialize)]
    struct SyncMeta<'a> {
        entities: Vec<&'a String>,
        n_dyads: usize,
        n_rows: usize,
        n_dropped: usize,
        sync: &'a SyncConfig,
        benchmark: Option<&'a BenchmarkConfig>,
    }
    ctx.meta(
        "sync.csv",
        SyncMeta {
            entities: series.keys().collect(),
            n_dyads: series.len() * (series.len() - 1) / 2,
            n_rows: rows.len(),
            n_dropped: rows.iter().filter(|r| r.dropped()).count(),
            sync: &ctx.cfg.sync,
            benchmark: if args.benchmark { ctx.cfg.benchmark.as_ref() } else { None },
        },
    )?;
    Ok(EXIT_OK)
}

fn read_pointwise(path: &Path) -> Result<Vec<(String, i32, f64)>> {
    check_exists(path)?;
    let label = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(label.clone(), e))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(label.clone(), e))?;
        let bad = || Error::Schema {
            path: label.clone(),
            message: "expected dyad,year,elpd,pareto_k".into(),
        };
        out.push((
            rec.get(0).ok_or_else(bad)?.to_string(),
            rec.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())?,
            rec.get(2).ok_or_else(bad)?.parse().map_err(|_| bad())?,
        ));
    }
    Ok(out)
}

fn cmd_fit(ctx: &Ctx, args: &FitArgs) -> Result<i32> {
    let model_path = need(&args.model.clone().or_else(|| ctx.cfg.input.model.clone()), "model spec")?;
    check_exists(&model_path)?;
    let text = std::fs::read_to_string(&model_path).map_err(|e| Error::io(&model_path, e))?;
    let mut spec = ModelSpec::from_toml(&text).map_err(|e| match e {
        Error::ModelSpec(m) => Error::ModelSpec(format!("{}: {m}", model_path.display())),
        other => other,
    })?;
    if let Some(b) = &ctx.band {
        spec.band = b.clone();
    }
    let sync_path = args
        .sync
        .clone()
        .or_else(|| ctx.cfg.input.sync.clone())
        .unwrap_or_else(|| ctx.out.join("sync.csv"));
    check_exists(&sync_path)?;
    let cov_path = need(&args.covariates.clone().or_else(|| ctx.cfg.input.dyad_covariates.clone()), "dyad covariates")?;
    check_exists(&cov_path)?;
    let sync = read_sync_csv(&sync_path)?;
    let covs = read_dyad_covariates(&cov_path)?;
    let input = panel_input(&sync, &covs, &spec.band)?;
    let ds = assemble(&input, &spec)?;
    ctx.write_with("dataset.csv", |w| write_dataset_csv(w, &ds))?;
    ctx.meta("dataset.csv", &ds.meta)?;

    let mut sampler = spec.sampler;
    sampler.seed = crate::rng::derive_seed(ctx.cfg.seed, sampler.seed);
    let fit = sample_posterior(&ds, spec.regime, &sampler)?;
    ctx.write_with("draws.csv", |w| fit.write_draws(w))?;
    let summary = fit.summarize();
    ctx.write_with("summary.csv", |w| write_summary(w, &summary))?;
    let loo = fit.loo()?;
    ctx.write_with("elpd_pointwise.csv", |w| {
        writeln!(w, "dyad,year,elpd,pareto_k")?;
        for i in 0..ds.n() {
            writeln!(w, "{},{},{},{}", ds.row_dyad[i], ds.row_year[i], loo.pointwise[i], loo.pareto_k[i])?;
        }
        Ok(())
    })?;

    let mut delta = None;
    if let Some(r) = &args.reference {
        let reference = read_pointwise(r)?;
        let keys: Vec<(String, i32)> = (0..ds.n()).map(|i| (ds.row_dyad[i].to_string(), ds.row_year[i])).collect();
        let ref_keys: Vec<(String, i32)> = reference.iter().map(|(d, y, _)| (d.clone(), *y)).collect();
        if keys != ref_keys {
            return Err(Error::Alignment(format!("{} covers different rows than this fit", r.display())));
        }
        let ref_loo = LooResult {
            elpd: reference.iter().map(|r| r.2).sum(),
            se: 0.0,
            pointwise: reference.iter().map(|r| r.2).collect(),
            pareto_k: vec![0.0; reference.len()],
            n_high_k: 0,
            warning: None,
        };
        delta = Some(elpd_diff(&ref_loo, &loo)?);
    }

    #[derive(Serialize)]
    struct ElpdOut<'a> {
        elpd_loo: f64,
        se: f64,
        n_rows: usize,
        n_high_pareto_k: usize,
        max_pareto_k: f64,
        warning: &'a Option<String>,
        delta_elpd_vs_reference: Option<f64>,
        delta_se: Option<f64>,
    }
    ctx.json(
        "elpd.json",
        &ElpdOut {
            elpd_loo: loo.elpd,
            se: loo.se,
            n_rows: ds.n(),
            n_high_pareto_k: loo.n_high_k,
            max_pareto_k: loo.pareto_k.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            warning: &loo.warning,
            delta_elpd_vs_reference: delta.map(|d| d.0),
            delta_se: delta.map(|d| d.1),
        },
    )?;
    ctx.json("diagnostics.json", &fit.diagnostics)?;

    #[derive(Serialize)]
    struct FitMeta<'a> {
        prior_regime: &'a str,
        random_effects: &'static str,
        model: &'a ModelSpec,
        sampler: crate::zib::SamplerConfig,
        dataset: &'a crate::panel::DatasetMeta,
        converged: bool,
        warnings: Vec<String>,
    }
    let mut warnings = fit.diagnostics.warnings.clone();
    warnings.extend(loo.warning.clone());
    let meta = FitMeta {
        prior_regime: spec.regime.name(),
        random_effects: RANDOM_EFFECTS_NOTE,
        model: &spec,
        sampler,
        dataset: &ds.meta,
        converged: fit.diagnostics.converged,
        warnings: warnings.clone(),
    };
    for f in ["draws.csv", "summary.csv", "elpd.json", "elpd_pointwise.csv", "diagnostics.json"] {
        ctx.meta(f, &meta)?;
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    if !fit.diagnostics.converged || loo.warning.is_some() {
        return Ok(EXIT_WARNINGS);
    }
    Ok(EXIT_OK)
}

fn cmd_simulate(ctx: &Ctx, args: &SimulateArgs) -> Result<i32> {
    let mut spec = ctx.cfg.simulate.clone();
    spec.seed = ctx.cfg.seed;
    if let Some(c) = args.countries {
        spec.n_countries = c;
    }
    if let Some(y) = args.years {
        spec.n_years = y;
    }
    let panel = gen_country_panel(&spec)?;
    ctx.write_with("monthly.csv", |w| write_monthly_panel(w, &panel.series))?;
    ctx.meta("monthly.csv", &spec)?;
    let path = ctx.out.join("dyad_covariates.csv");
    write_dyad_covariates(ctx.create("dyad_covariates.csv")?, &panel.dyad_covariates)
        .map_err(|e| match e {
            Error::Csv { source, .. } => Error::csv(path.display().to_string(), source),
            other => other,
        })?;
    ctx.meta("dyad_covariates.csv", &spec)?;
    Ok(EXIT_OK)
}

fn config_hash(cfg: &RunConfig, command: &Command) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_string(cfg).unwrap_or_default().as_bytes());
    h.update(format!("{command:?}").as_bytes());
    hex::encode(h.finalize())
}

fn execute(cli: Cli) -> Result<i32> {
    let mut cfg = match &cli.config {
        Some(p) => {
            check_exists(p)?;
            RunConfig::load(p)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(b) = &cli.band {
        if !matches!(cli.command, Command::Fit(_)) {
            let keep: Vec<_> = cfg.sync.bands.iter().filter(|x| &x.name == b).cloned().collect();
            if keep.is_empty() {
                return Err(Error::Config(format!("band `{b}` is not configured")));
            }
            cfg.sync.bands = keep;
        }
    }
    cfg.sync.validate()?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("wavesync-out"));
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let command = match cli.command {
        Command::Coherence(_) => "coherence",
        Command::SyncPanel(_) => "sync-panel",
        Command::Fit(_) => "fit",
        Command::Simulate(_) => "simulate",
    };
    let ctx = Ctx {
        hash: config_hash(&cfg, &cli.command),
        cfg,
        out,
        command,
        band: cli.band.clone(),
    };
    let run = || match &cli.command {
        Command::Coherence(a) => cmd_coherence(&ctx, a),
        Command::SyncPanel(a) => cmd_sync_panel(&ctx, a),
        Command::Fit(a) => cmd_fit(&ctx, a),
        Command::Simulate(a) => cmd_simulate(&ctx, a),
    };
    match cli.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(run),
        None => run(),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INPUT,
            };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}
