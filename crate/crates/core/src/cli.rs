//! Command-line front end. Every subcommand reads its inputs, calls the
//! library, and writes CSV/JSON artifacts under `--out`.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::calibration::{self, LineWindow};
use crate::dataset::{self, Dataset, Wavelength, FEATURE_NAMES};
use crate::error::{Error, Result};
use crate::hpo::{self, report, GaConfig, Method, RunSummary, TuneRequest};
use crate::matrix::Matrix;
use crate::metrics;
use crate::models::{self, HyperParams, ModelKind, TrainedModel};
use crate::seed;
use crate::spectral;

pub const THREADS_ENV: &str = "SOILTN_THREADS";

#[derive(Debug, Parser)]
#[command(name = "soiltn", version, about = "Soil total-nitrogen estimation pipeline")]
pub struct Cli {
    /// Master seed; every random consumer derives its own stream from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Zonal features from a three-channel frame and a zone mask.
    Extract(ExtractArgs),
    /// Fit an intensity-to-TN line, or convert a directory of spectra to TN.
    Calibrate(CalibrateArgs),
    /// Tune hyper-parameters with cross-validation, refit, and test.
    Tune(TuneArgs),
    /// Train one model on the whole table.
    Train(TrainArgs),
    /// Predict with a saved model.
    Predict(PredictArgs),
    /// Collect finished tune runs into summary tables.
    Report(ReportArgs),
    /// Recompute NDVI from each table row's band means and compare.
    DiagnoseTable(DiagnoseArgs),
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub ch1: PathBuf,
    #[arg(long)]
    pub ch2: PathBuf,
    #[arg(long)]
    pub ch3: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    /// Relative humidity, percent.
    #[arg(long)]
    pub rh: f64,
    /// Air temperature, °C.
    #[arg(long = "air-temp", allow_negative_numbers = true)]
    pub air_temp: f64,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["pairs", "spectra_dir"])))]
pub struct CalibrateArgs {
    /// CSV with `peak_intensity,actual_tn` columns.
    #[arg(long, requires = "line")]
    pub pairs: Option<PathBuf>,
    /// Emission line center (nm) the pairs were measured at.
    #[arg(long)]
    pub line: Option<f64>,
    /// Directory of `wavelength_nm,intensity` spectrum CSVs.
    #[arg(long = "spectra-dir", requires = "model")]
    pub spectra_dir: Option<PathBuf>,
    /// Calibration JSON files, one per line.
    #[arg(long, num_args = 1..)]
    pub model: Vec<PathBuf>,
    /// Peak search half-width (nm).
    #[arg(long = "half-width", default_value_t = LineWindow::DEFAULT_HALF_WIDTH)]
    pub half_width: f64,
}

#[derive(Debug, Args)]
pub struct TableArg {
    /// Corpus CSV; the shipped table when omitted.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

impl TableArg {
    fn load(&self) -> Result<Dataset> {
        match &self.table {
            Some(p) => dataset::load_table(p),
            None => Ok(dataset::shipped_table()),
        }
    }
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub table: TableArg,
    #[arg(long, value_parser = parse_with::<ModelKind>)]
    pub model: ModelKind,
    #[arg(long, value_parser = parse_with::<Method>)]
    pub method: Method,
    #[arg(long, value_parser = parse_with::<Wavelength>)]
    pub wavelength: Wavelength,
    /// RS evaluation count (default: grid size / 4).
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long, default_value_t = hpo::DEFAULT_K)]
    pub k: usize,
    #[command(flatten)]
    pub ga: GaArgs,
}

#[derive(Debug, Args)]
pub struct GaArgs {
    #[arg(long, default_value_t = GaConfig::default().population)]
    pub population: usize,
    #[arg(long, default_value_t = GaConfig::default().generations)]
    pub generations: usize,
    #[arg(long, default_value_t = GaConfig::default().tournament)]
    pub tournament: usize,
    #[arg(long = "crossover-rate", default_value_t = GaConfig::default().crossover_rate)]
    pub crossover_rate: f64,
    #[arg(long = "mutation-rate", default_value_t = GaConfig::default().mutation_rate)]
    pub mutation_rate: f64,
    #[arg(long, default_value_t = GaConfig::default().elitism)]
    pub elitism: usize,
    #[arg(long = "mutation-sigma", default_value_t = GaConfig::default().mutation_sigma)]
    pub mutation_sigma: f64,
}

impl GaArgs {
    fn config(&self) -> GaConfig {
        GaConfig {
            population: self.population,
            generations: self.generations,
            tournament: self.tournament,
            crossover_rate: self.crossover_rate,
            mutation_rate: self.mutation_rate,
            elitism: self.elitism,
            mutation_sigma: self.mutation_sigma,
            ..GaConfig::default()
        }
    }
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("config").required(true).args(["model", "params"])))]
pub struct TrainArgs {
    #[command(flatten)]
    pub table: TableArg,
    #[arg(long, value_parser = parse_with::<Wavelength>)]
    pub wavelength: Wavelength,
    /// Train the default configuration of this model.
    #[arg(long, value_parser = parse_with::<ModelKind>)]
    pub model: Option<ModelKind>,
    /// Hyper-parameter JSON, or a `best_params.json` from `tune`.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Where to save the model (default `<out>/model.json`).
    #[arg(long = "model-out")]
    pub model_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model JSON written by `train` or `tune`.
    #[arg(long)]
    pub model: PathBuf,
    /// CSV holding the feature columns by name (extra columns are ignored).
    #[arg(long)]
    pub features: PathBuf,
    /// Column with true values; adds it to the output and reports RMSE.
    #[arg(long)]
    pub target: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding tune run subdirectories (default: `--out`).
    #[arg(long)]
    pub runs: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub table: TableArg,
}

fn parse_with<T: FromStr<Err = Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Measured wall-clock time of a tune run (`timing.json`), kept apart from
/// the deterministic `best_params.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub ct_seconds: f64,
    pub evaluations: usize,
}

pub fn run() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return 2;
    }
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_internal() {
                3
            } else {
                2
            }
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidInput(format!("{THREADS_ENV}=`{raw}` is not a positive integer")))?;
    // A second call in the same process finds the pool already built; keep it.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    match &cli.command {
        Command::Extract(a) => cmd_extract(a, &cli.out),
        Command::Calibrate(a) => cmd_calibrate(a, &cli.out),
        Command::Tune(a) => cmd_tune(a, cli.seed, &cli.out),
        Command::Train(a) => cmd_train(a, cli.seed, &cli.out),
        Command::Predict(a) => cmd_predict(a, &cli.out),
        Command::Report(a) => cmd_report(a, &cli.out),
        Command::DiagnoseTable(a) => cmd_diagnose(a, &cli.out),
    }
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_extract(a: &ExtractArgs, out: &Path) -> Result<()> {
    let frame = spectral::read_frame(&a.ch1, &a.ch2, &a.ch3)?;
    let mask = spectral::read_mask(&a.mask)?;
    let env = spectral::EnvReading::new(a.rh, a.air_temp)?;
    let (rows, diag) = spectral::extract_features(&frame, &mask, env)?;
    let path = out.join("features.csv");
    spectral::write_features_csv(create(&path)?, &rows)?;
    if diag.invalid_pixels > 0 {
        eprintln!("warning: {} pixels have an undefined NDVI", diag.invalid_pixels);
    }
    println!("{} zones -> {}", rows.len(), path.display());
    Ok(())
}

fn cmd_calibrate(a: &CalibrateArgs, out: &Path) -> Result<()> {
    if let (Some(pairs), Some(line)) = (&a.pairs, a.line) {
        let pairs = calibration::read_pairs_csv(pairs)?;
        let model = calibration::fit_calibration(&pairs, line)?;
        let path = out.join(format!("calibration_{}.json", calibration::tn_column(line)));
        write_json(&path, &model)?;
        println!("{}", serde_json::to_string(&model)?);
        return Ok(());
    }
    let dir = a.spectra_dir.as_ref().expect("clap enforces one mode");
    let mut lines = Vec::with_capacity(a.model.len());
    for p in &a.model {
        let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        let model: calibration::CalibrationModel = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", p.display())))?;
        lines.push((LineWindow::new(model.line_center, a.half_width)?, model));
    }
    let report = calibration::batch_calibrate(dir, &lines)?;
    for (p, msg) in &report.failures {
        eprintln!("warning: {}: {msg}", p.display());
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let path = out.join("tn.csv");
    report.write_csv(create(&path)?)?;
    println!("{} samples -> {}", report.rows.len(), path.display());
    Ok(())
}

/// Directory name of a tune run, e.g. `gs_mlp_493_4_s7`.
pub fn run_dir_name(method: Method, model: ModelKind, wavelength: Wavelength, seed: u64) -> String {
    format!(
        "{}_{}_{}_s{seed}",
        method.as_str(),
        model.as_str(),
        wavelength.to_string().replace('.', "_")
    )
}

fn cmd_tune(a: &TuneArgs, seed: u64, out: &Path) -> Result<()> {
    let table = a.table.load()?;
    let req = TuneRequest {
        budget: a.budget,
        k: a.k,
        ga: a.ga.config(),
        ..TuneRequest::new(a.method, a.model, a.wavelength, seed)
    };
    let outcome = hpo::tune(&table, &req)?;
    let dir = out.join(run_dir_name(a.method, a.model, a.wavelength, seed));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    write_json(&dir.join("best_params.json"), &outcome.summary)?;
    report::write_evals_csv(&outcome.hpo, a.k, create(&dir.join("evals.csv"))?)?;
    let ct = outcome.hpo.computational_time;
    write_json(
        &dir.join("timing.json"),
        &Timing {
            ct_seconds: ct,
            evaluations: outcome.hpo.log.len(),
        },
    )?;
    models::save_model(&outcome.model, &dir.join("model.json"))?;
    append_comparison(&out.join("comparison.csv"), &outcome.summary, ct)?;

    let s = &outcome.summary;
    println!("best: {}", s.best_params);
    println!(
        "cv_rmse {:.4} (default {:.4}); test rmse {:.4}, rmspe {:.2}%, mean |err| {:.2}; {} evaluations in {ct:.2} s",
        s.cv_rmse, s.default_cv_rmse, s.test.rmse, s.test.rmspe, s.test.abs_error.mean_abs_error, s.evaluations
    );
    println!("-> {}", dir.display());
    Ok(())
}

fn append_comparison(path: &Path, summary: &RunSummary, ct: f64) -> Result<()> {
    let fresh = fs::metadata(path).map_or(true, |m| m.len() == 0);
    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(report::COMPARISON_HEADER)?;
    }
    w.write_record(report::comparison_row(summary, ct))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads either bare hyper-parameters or a tune summary's `best_params`.
pub fn read_params(path: &Path) -> Result<HyperParams> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    let inner = value.get("best_params").cloned().unwrap_or(value);
    serde_json::from_value(inner).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn cmd_train(a: &TrainArgs, seed: u64, out: &Path) -> Result<()> {
    let params = match (&a.params, a.model) {
        (Some(p), _) => read_params(p)?,
        (None, Some(kind)) => HyperParams::default_for(kind),
        (None, None) => unreachable!("clap enforces a config"),
    };
    let ds = a.table.load()?.with_target(a.wavelength);
    let (x, y) = (ds.features(), ds.targets());
    let model = TrainedModel::train(&x, &y, &params, seed::derive(seed, seed::FINAL))?;
    let rmse = metrics::rmse(&y, &model.predict_all(&x)?)?;
    let path = a.model_out.clone().unwrap_or_else(|| out.join("model.json"));
    models::save_model(&model, &path)?;
    write_json(
        &out.join("train.json"),
        &serde_json::json!({
            "params": params,
            "wavelength": a.wavelength,
            "n_rows": y.len(),
            "training_rmse": rmse,
        }),
    )?;
    println!("training_rmse {rmse}");
    println!("-> {}", path.display());
    Ok(())
}

/// Feature matrix from the named columns of a CSV, plus an optional target column.
pub fn read_feature_csv(path: &Path, target: Option<&str>) -> Result<(Matrix, Option<Vec<f64>>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            row: 0,
            column: name.to_string(),
            message: "column missing from header".into(),
        })
    };
    let cols = FEATURE_NAMES.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;
    let tcol = target.map(find).transpose()?;
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cell = |c: usize| -> Result<f64> {
            let raw = rec.get(c).unwrap_or("").trim();
            raw.parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                row: r + 1,
                column: headers[c].to_string(),
                message: format!("not a number: `{raw}`"),
            })
        };
        rows.push(cols.iter().map(|&c| cell(c)).collect::<Result<Vec<_>>>()?);
        if let Some(t) = tcol {
            ys.push(cell(t)?);
        }
    }
    if rows.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    Ok((Matrix::from_rows(&rows)?, tcol.map(|_| ys)))
}

fn cmd_predict(a: &PredictArgs, out: &Path) -> Result<()> {
    let model = models::load_model(&a.model)?;
    let (x, y) = read_feature_csv(&a.features, a.target.as_deref())?;
    if model.n_features() != x.cols() {
        return Err(Error::Dimension {
            expected: model.n_features(),
            got: x.cols(),
        });
    }
    let yhat = model.predict_all(&x)?;
    let path = out.join("predictions.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    match &y {
        Some(_) => w.write_record(["row", "prediction", "target"])?,
        None => w.write_record(["row", "prediction"])?,
    }
    for (i, p) in yhat.iter().enumerate() {
        let mut rec = vec![i.to_string(), p.to_string()];
        if let Some(y) = &y {
            rec.push(y[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    if let Some(y) = &y {
        println!("rmse {}", metrics::rmse(y, &yhat)?);
    }
    println!("{} predictions -> {}", yhat.len(), path.display());
    Ok(())
}

/// Loads every `<dir>/*/best_params.json` (with its `timing.json` when present).
pub fn collect_runs(dir: &Path) -> Result<Vec<report::RunRecord>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut subdirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("best_params.json").is_file())
        .collect();
    subdirs.sort();
    subdirs
        .iter()
        .map(|d| {
            let p = d.join("best_params.json");
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            let summary: RunSummary = serde_json::from_str(&text)
                .map_err(|e| Error::InvalidInput(format!("{}: {e}", p.display())))?;
            let tp = d.join("timing.json");
            let ct_seconds = fs::read_to_string(&tp)
                .ok()
                .and_then(|t| serde_json::from_str::<Timing>(&t).ok())
                .map(|t| t.ct_seconds);
            Ok(report::RunRecord { summary, ct_seconds })
        })
        .collect()
}

fn cmd_report(a: &ReportArgs, out: &Path) -> Result<()> {
    let dir = a.runs.as_deref().unwrap_or(out);
    let runs = collect_runs(dir)?;
    if runs.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no tune runs (*/best_params.json) under {}",
            dir.display()
        )));
    }
    report::write_table3(&runs, create(&out.join("table3.csv"))?)?;
    report::write_table4(&runs, create(&out.join("table4.csv"))?)?;
    report::write_fig10(&runs, create(&out.join("fig10.csv"))?)?;
    println!("{} runs -> table3.csv, table4.csv, fig10.csv in {}", runs.len(), out.display());
    Ok(())
}

/// Per row: channel means recovered from the band means, NDVI recomputed from
/// them, and its difference from the tabulated NDVI.
pub fn write_diagnosis<W: Write>(table: &Dataset, out: W) -> Result<(usize, f64)> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "ch1", "ch3", "ndvi_table", "ndvi_recomputed", "abs_diff"])?;
    let mut worst = 0.0f64;
    let mut undefined = 0;
    for r in &table.records {
        let (ch1, ch3) = spectral::unmix_inverse(r.red, r.nir);
        let ndvi = spectral::ndvi_of(ch1, ch3);
        let diff = ndvi.map(|v| (v - r.ndvi).abs());
        match diff {
            Some(d) => worst = worst.max(d),
            None => undefined += 1,
        }
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        w.write_record([
            r.index.to_string(),
            ch1.to_string(),
            ch3.to_string(),
            r.ndvi.to_string(),
            opt(ndvi),
            opt(diff),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<diagnosis>", e))?;
    Ok((undefined, worst))
}

fn cmd_diagnose(a: &DiagnoseArgs, out: &Path) -> Result<()> {
    let table = a.table.load()?;
    let path = out.join("diagnose_table.csv");
    let (undefined, worst) = write_diagnosis(&table, create(&path)?)?;
    println!(
        "{} rows, max |ndvi_table - ndvi_recomputed| = {worst:.4}, {undefined} undefined -> {}",
        table.len(),
        path.display()
    );
    Ok(())
}
