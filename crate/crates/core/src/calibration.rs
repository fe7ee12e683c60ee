//! Nitrogen-line peak extraction from LIBS spectra and the linear
//! peak-intensity → TN calibration.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Intensity-vs-wavelength samples, strictly increasing in wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    samples: Vec<(f64, f64)>,
}

impl Spectrum {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        for (i, &(wl, it)) in samples.iter().enumerate() {
            if !wl.is_finite() || !it.is_finite() || it < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "sample {i}: wavelength {wl}, intensity {it}"
                )));
            }
            if i > 0 && wl <= samples[i - 1].0 {
                return Err(Error::InvalidInput(format!(
                    "wavelengths must be strictly increasing (sample {i})"
                )));
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    /// Reads a two-column `wavelength_nm,intensity` CSV.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = open_csv(path)?;
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "wavelength_nm" || &headers[1] != "intensity" {
            return Err(Error::Parse {
                path: path.display().to_string(),
                row: 0,
                column: "header".into(),
                message: "expected `wavelength_nm,intensity`".into(),
            });
        }
        let mut samples = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let cell = |c: usize| -> Result<f64> {
                rec.get(c)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Parse {
                        path: path.display().to_string(),
                        row,
                        column: headers[c].to_string(),
                        message: format!("not a number: `{}`", rec.get(c).unwrap_or("")),
                    })
            };
            samples.push((cell(0)?, cell(1)?));
        }
        Self::new(samples)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineWindow {
    pub center: f64,
    pub half_width: f64,
}

impl LineWindow {
    pub const DEFAULT_HALF_WIDTH: f64 = 1.0;

    pub fn new(center: f64, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0) || !center.is_finite() {
            return Err(Error::InvalidInput(format!(
                "line window ({center}, {half_width}) needs a positive half-width"
            )));
        }
        Ok(Self { center, half_width })
    }

    pub fn at(center: f64) -> Self {
        Self {
            center,
            half_width: Self::DEFAULT_HALF_WIDTH,
        }
    }

    fn bounds(&self) -> (f64, f64) {
        (self.center - self.half_width, self.center + self.half_width)
    }
}

/// A nitrogen emission line known to the pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NitrogenLine {
    pub center: f64,
    /// Identified but not used (weak, inconsistent intensity response).
    pub discarded: bool,
}

pub const NITROGEN_LINES: [NitrogenLine; 4] = [
    NitrogenLine { center: 493.4, discarded: false },
    NitrogenLine { center: 746.6, discarded: true },
    NitrogenLine { center: 821.4, discarded: false },
    NitrogenLine { center: 868.1, discarded: false },
];

/// The retained line centers, in ascending order.
pub fn active_lines() -> impl Iterator<Item = f64> {
    NITROGEN_LINES.iter().filter(|l| !l.discarded).map(|l| l.center)
}

/// Maximum-intensity sample inside the window; ties go to the lowest wavelength.
pub fn find_peak(spectrum: &Spectrum, window: LineWindow) -> Result<(f64, f64)> {
    let (lo, hi) = window.bounds();
    let mut best: Option<(f64, f64)> = None;
    for &(wl, it) in spectrum.samples.iter().filter(|(wl, _)| (lo..=hi).contains(wl)) {
        if best.is_none_or(|(_, b)| it > b) {
            best = Some((wl, it));
        }
    }
    best.ok_or(Error::OutOfRange { lo, hi })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPair {
    pub peak_intensity: f64,
    pub actual_tn: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub line_center: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n_points: usize,
}

/// Ordinary least squares of TN on peak intensity.
///
/// When every target is equal and the fit is exact, `r2` is 1; a nonzero
/// residual with zero target variance is rejected.
pub fn fit_calibration(pairs: &[CalibrationPair], line_center: f64) -> Result<CalibrationModel> {
    if pairs.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: pairs.len(),
        });
    }
    for (i, p) in pairs.iter().enumerate() {
        if !p.peak_intensity.is_finite() || !p.actual_tn.is_finite() || p.actual_tn < 0.0 {
            return Err(Error::InvalidInput(format!("calibration pair {i}: {p:?}")));
        }
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.peak_intensity).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.actual_tn).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.peak_intensity - mx).powi(2)).sum();
    let sxy: f64 = pairs
        .iter()
        .map(|p| (p.peak_intensity - mx) * (p.actual_tn - my))
        .sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit(
            "all peak intensities are equal".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pairs
        .iter()
        .map(|p| (p.actual_tn - (slope * p.peak_intensity + intercept)).powi(2))
        .sum();
    let sst: f64 = pairs.iter().map(|p| (p.actual_tn - my).powi(2)).sum();
    let r2 = if sst == 0.0 {
        // An exact constant fit can leave rounding-level residue.
        if sse > f64::EPSILON * (1.0 + my * my) * n {
            return Err(Error::DegenerateFit(
                "targets have zero variance but the fit leaves residuals".into(),
            ));
        }
        1.0
    } else {
        (1.0 - sse / sst).clamp(0.0, 1.0)
    };
    Ok(CalibrationModel {
        line_center,
        slope,
        intercept,
        r2,
        n_points: pairs.len(),
    })
}

/// TN in ppm. Negative results are returned as-is; see [`BatchReport::warnings`].
pub fn apply_calibration(model: &CalibrationModel, intensity: f64) -> Result<f64> {
    if !intensity.is_finite() {
        return Err(Error::InvalidInput(format!("intensity {intensity}")));
    }
    Ok(model.slope * intensity + model.intercept)
}

pub fn read_pairs_csv(path: &Path) -> Result<Vec<CalibrationPair>> {
    let mut rdr = open_csv(path)?;
    let mut out = Vec::new();
    for (row, rec) in rdr.deserialize::<CalibrationPair>().enumerate() {
        out.push(rec.map_err(|e| Error::Parse {
            path: path.display().to_string(),
            row,
            column: "peak_intensity,actual_tn".into(),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TnRow {
    pub sample_id: String,
    pub tn: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct BatchReport {
    pub line_centers: Vec<f64>,
    pub rows: Vec<TnRow>,
    pub failures: Vec<(PathBuf, String)>,
    pub warnings: Vec<String>,
}

/// Column name for a line center, e.g. `493.4` → `tn_493_4`.
pub fn tn_column(center: f64) -> String {
    format!("tn_{}", format!("{center:.1}").replace('.', "_"))
}

impl BatchReport {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["sample_id".to_string()];
        header.extend(self.line_centers.iter().map(|&c| tn_column(c)));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.sample_id.clone()];
            rec.extend(row.tn.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<tn table>", e))?;
        Ok(())
    }
}

/// Converts every `*.csv` spectrum in `dir` to TN at each calibrated line.
///
/// Rows are ordered by sample id (file stem). Unreadable files are collected in
/// `failures`; the call fails only when every file fails.
pub fn batch_calibrate(
    dir: &Path,
    lines: &[(LineWindow, CalibrationModel)],
) -> Result<BatchReport> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort_by_key(|p| sample_id(p));

    let mut report = BatchReport {
        line_centers: lines.iter().map(|(w, _)| w.center).collect(),
        ..Default::default()
    };
    if files.is_empty() {
        report
            .warnings
            .push(format!("no spectrum files in {}", dir.display()));
        return Ok(report);
    }

    let results: Vec<Result<TnRow>> = files
        .par_iter()
        .map(|path| {
            let spectrum = Spectrum::read_csv(path)?;
            let tn = lines
                .iter()
                .map(|(w, m)| {
                    let (_, peak) = find_peak(&spectrum, *w)?;
                    apply_calibration(m, peak)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(TnRow {
                sample_id: sample_id(path),
                tn,
            })
        })
        .collect();

    for (path, res) in files.iter().zip(results) {
        match res {
            Ok(row) => {
                for (c, v) in report.line_centers.iter().zip(&row.tn) {
                    if *v < 0.0 {
                        report.warnings.push(format!(
                            "{}: negative TN {v} at {c} nm",
                            row.sample_id
                        ));
                    }
                }
                report.rows.push(row);
            }
            Err(e) => report.failures.push((path.clone(), e.to_string())),
        }
    }
    if report.rows.is_empty() {
        return Err(Error::InvalidInput(format!(
            "all {} spectrum files failed; first: {}",
            report.failures.len(),
            report.failures[0].1
        )));
    }
    Ok(report)
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Reader::from_reader(file))
}

fn sample_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}
