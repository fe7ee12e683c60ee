//! CSV layouts for evaluation logs, comparison rows and the summary tables.

use std::io::Write;

use super::{HpoResult, Method, RunSummary};
use crate::error::Result;
use crate::models::HyperParams;

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

/// One row per evaluation: index, candidate, per-fold RMSEs, mean, std, error.
pub fn write_evals_csv<W: Write>(hpo: &HpoResult, k: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["index".to_string(), "candidate".to_string()];
    header.extend((1..=k).map(|f| format!("fold_{f}")));
    header.extend(["mean", "std", "error"].map(String::from));
    w.write_record(&header)?;
    for (i, e) in hpo.log.iter().enumerate() {
        let mut row = vec![i.to_string(), e.params.to_string()];
        row.extend((0..k).map(|f| e.folds.get(f).map_or(String::new(), |v| num(*v))));
        row.push(num(e.score));
        row.push(num(e.std));
        row.push(e.error.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| crate::error::Error::io("evals.csv", e))?;
    Ok(())
}

pub const COMPARISON_HEADER: [&str; 5] = ["method", "model", "wavelength", "rmse", "ct_seconds"];

pub fn comparison_row(s: &RunSummary, ct_seconds: f64) -> [String; 5] {
    [
        s.method.to_string(),
        s.model.to_string(),
        s.wavelength.to_string(),
        num(s.cv_rmse),
        format!("{ct_seconds:.6}"),
    ]
}

/// A finished run as found on disk: its summary plus the measured time.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub summary: RunSummary,
    pub ct_seconds: Option<f64>,
}

fn method_rank(m: Method) -> usize {
    Method::ALL.iter().position(|x| *x == m).unwrap_or(usize::MAX)
}

fn sorted(runs: &[RunRecord]) -> Vec<&RunRecord> {
    let mut v: Vec<&RunRecord> = runs.iter().collect();
    v.sort_by(|a, b| {
        let (a, b) = (&a.summary, &b.summary);
        (a.model as u8)
            .cmp(&(b.model as u8))
            .then(a.wavelength.nm().total_cmp(&b.wavelength.nm()))
            .then(method_rank(a.method).cmp(&method_rank(b.method)))
            .then(a.seed.cmp(&b.seed))
    });
    v
}

fn param_cells(p: &HyperParams) -> [String; 7] {
    match p {
        HyperParams::Mlp(m) => [
            m.activation.to_string(),
            m.solver.to_string(),
            m.learning_rate.to_string(),
            m.hidden_layer_size.to_string(),
            String::new(),
            String::new(),
            String::new(),
        ],
        HyperParams::Svr(s) => [
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            s.kernel.to_string(),
            s.c.to_string(),
            s.epsilon.to_string(),
        ],
    }
}

/// Best configuration per run.
pub fn write_table3<W: Write>(runs: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "method",
        "model",
        "wavelength",
        "seed",
        "activation",
        "solver",
        "learning_rate",
        "hidden_layer_sizes",
        "kernel",
        "C",
        "epsilon",
        "cv_rmse",
    ])?;
    for r in sorted(runs) {
        let s = &r.summary;
        let mut row = vec![s.method.to_string(), s.model.to_string(), s.wavelength.to_string(), s.seed.to_string()];
        row.extend(param_cells(&s.best_params));
        row.push(num(s.cv_rmse));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| crate::error::Error::io("table3.csv", e))?;
    Ok(())
}

/// Held-out absolute error per run, plus one default-configuration row per
/// (model, wavelength, seed) group.
pub fn write_table4<W: Write>(runs: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "model",
        "wavelength",
        "seed",
        "method",
        "mean_abs_error",
        "std_abs_error",
        "rmse",
        "rmspe",
    ])?;
    let rows = sorted(runs);
    for (i, r) in rows.iter().enumerate() {
        let s = &r.summary;
        let key = |x: &RunSummary| (x.model, x.wavelength, x.seed);
        let row = |label: String, t: &super::TestReport| {
            vec![
                s.model.to_string(),
                s.wavelength.to_string(),
                s.seed.to_string(),
                label,
                num(t.abs_error.mean_abs_error),
                num(t.abs_error.std_abs_error),
                num(t.rmse),
                num(t.rmspe),
            ]
        };
        w.write_record(row(s.method.to_string(), &s.test))?;
        let last_of_group = rows.get(i + 1).is_none_or(|n| key(&n.summary) != key(s));
        if last_of_group {
            w.write_record(row("Default".to_string(), &s.default_test))?;
        }
    }
    w.flush().map_err(|e| crate::error::Error::io("table4.csv", e))?;
    Ok(())
}

/// CV RMSE and computational time per run.
pub fn write_fig10<W: Write>(runs: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "model", "wavelength", "seed", "rmse", "ct_seconds"])?;
    for r in sorted(runs) {
        let s = &r.summary;
        w.write_record([
            s.method.to_string(),
            s.model.to_string(),
            s.wavelength.to_string(),
            s.seed.to_string(),
            num(s.cv_rmse),
            r.ct_seconds.map_or(String::new(), |c| format!("{c:.6}")),
        ])?;
    }
    w.flush().map_err(|e| crate::error::Error::io("fig10.csv", e))?;
    Ok(())
}
