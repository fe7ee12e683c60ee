//! The training corpus: 54 zonal feature rows with LIBS-derived TN targets at
//! three nitrogen lines.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

/// The shipped corpus, one row per soil sample, in sample order.
pub const SHIPPED_TABLE: &str = include_str!("../../../data/table1.csv");

pub const FEATURE_NAMES: [&str; 6] = ["red", "nir", "green", "ndvi", "rh", "air_temp"];
pub const TARGET_NAMES: [&str; 3] = ["tn_493_4", "tn_821_4", "tn_868_1"];

/// Decimal places of each column in the corpus file, used to write it back verbatim.
const COLUMN_DECIMALS: [usize; 9] = [2, 2, 2, 2, 1, 1, 2, 2, 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Wavelength {
    #[serde(rename = "493.4")]
    Nm493_4,
    #[serde(rename = "821.4")]
    Nm821_4,
    #[serde(rename = "868.1")]
    Nm868_1,
}

impl Wavelength {
    pub const ALL: [Wavelength; 3] = [Wavelength::Nm493_4, Wavelength::Nm821_4, Wavelength::Nm868_1];

    pub fn nm(self) -> f64 {
        match self {
            Wavelength::Nm493_4 => 493.4,
            Wavelength::Nm821_4 => 821.4,
            Wavelength::Nm868_1 => 868.1,
        }
    }

    fn column(self) -> usize {
        match self {
            Wavelength::Nm493_4 => 0,
            Wavelength::Nm821_4 => 1,
            Wavelength::Nm868_1 => 2,
        }
    }
}

impl fmt::Display for Wavelength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}", self.nm())
    }
}

impl FromStr for Wavelength {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "493.4" => Ok(Wavelength::Nm493_4),
            "821.4" => Ok(Wavelength::Nm821_4),
            "868.1" => Ok(Wavelength::Nm868_1),
            other => Err(Error::InvalidInput(format!(
                "wavelength `{other}` is not one of 493.4, 821.4, 868.1"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRecord {
    pub index: usize,
    pub red: f64,
    pub nir: f64,
    pub green: f64,
    pub ndvi: f64,
    pub rh: f64,
    pub air_temp: f64,
    pub tn: [f64; 3],
}

impl SampleRecord {
    pub fn features(&self) -> [f64; 6] {
        [self.red, self.nir, self.green, self.ndvi, self.rh, self.air_temp]
    }

    pub fn target(&self, line: Wavelength) -> f64 {
        self.tn[line.column()]
    }

    fn cells(&self) -> [f64; 9] {
        let f = self.features();
        [f[0], f[1], f[2], f[3], f[4], f[5], self.tn[0], self.tn[1], self.tn[2]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<SampleRecord>,
    pub target_line: Wavelength,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn with_target(&self, line: Wavelength) -> Dataset {
        Dataset {
            records: self.records.clone(),
            target_line: line,
        }
    }

    pub fn features(&self) -> Matrix {
        let rows: Vec<[f64; 6]> = self.records.iter().map(SampleRecord::features).collect();
        Matrix::from_rows(&rows).expect("fixed-width rows")
    }

    pub fn targets(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.target(self.target_line)).collect()
    }

    fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            records: idx.iter().map(|&i| self.records[i]).collect(),
            target_line: self.target_line,
        }
    }

    /// Writes the corpus in its original number format (header without index).
    pub fn write_table<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = FEATURE_NAMES.to_vec();
        header.extend(TARGET_NAMES);
        w.write_record(&header)?;
        for r in &self.records {
            let rec: Vec<String> = r
                .cells()
                .iter()
                .zip(COLUMN_DECIMALS)
                .map(|(v, d)| format!("{v:.d$}"))
                .collect();
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<table>", e))?;
        Ok(())
    }
}

pub fn shipped_table() -> Dataset {
    parse_table(SHIPPED_TABLE, "data/table1.csv", Wavelength::Nm493_4).expect("shipped corpus is valid")
}

pub fn load_table(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_table(&text, &path.display().to_string(), Wavelength::Nm493_4)
}

/// Parses the corpus CSV. The header is the nine data columns, optionally
/// preceded by an explicit `index` column; without it the row number is the index.
pub fn parse_table(text: &str, origin: &str, target_line: Wavelength) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let mut expected: Vec<&str> = FEATURE_NAMES.to_vec();
    expected.extend(TARGET_NAMES);
    let explicit_index = names.first() == Some(&"index");
    let data_names = if explicit_index { &names[1..] } else { &names[..] };
    if data_names != expected.as_slice() {
        return Err(Error::Parse {
            path: origin.into(),
            row: 0,
            column: "header".into(),
            message: format!(
                "expected `{}{}`, got `{}`",
                if explicit_index { "index," } else { "" },
                expected.join(","),
                names.join(",")
            ),
        });
    }
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != names.len() {
            return Err(Error::Parse {
                path: origin.into(),
                row,
                column: "*".into(),
                message: format!("{} columns, expected {}", rec.len(), names.len()),
            });
        }
        let cell = |c: usize| -> Result<f64> {
            let s = rec[c].trim();
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    path: origin.into(),
                    row,
                    column: names[c].to_string(),
                    message: format!("not a finite number: `{s}`"),
                })
        };
        let (index, off) = if explicit_index {
            let s = rec[0].trim();
            let i = s.parse::<usize>().map_err(|_| Error::Parse {
                path: origin.into(),
                row,
                column: "index".into(),
                message: format!("not a non-negative integer: `{s}`"),
            })?;
            (i, 1)
        } else {
            (row, 0)
        };
        if !seen.insert(index) {
            return Err(Error::DuplicateIndex { index, row });
        }
        let v: Vec<f64> = (0..9).map(|c| cell(c + off)).collect::<Result<_>>()?;
        for (t, name) in TARGET_NAMES.iter().enumerate() {
            if v[6 + t] <= 0.0 {
                return Err(Error::Parse {
                    path: origin.into(),
                    row,
                    column: name.to_string(),
                    message: "TN must be positive".into(),
                });
            }
        }
        records.push(SampleRecord {
            index,
            red: v[0],
            nir: v[1],
            green: v[2],
            ndvi: v[3],
            rh: v[4],
            air_temp: v[5],
            tn: [v[6], v[7], v[8]],
        });
    }
    Ok(Dataset {
        records,
        target_line,
    })
}

/// Rounds half away from zero.
fn round_half_away(x: f64) -> usize {
    x.round() as usize
}

/// Seeded shuffle split. Both parts keep the original record order.
pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let n = ds.len();
    let n_test = round_half_away(test_fraction * n as f64);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seed::rng(seed));
    let mut is_test = vec![false; n];
    for &i in &perm[..n_test] {
        is_test[i] = true;
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| is_test[i]);
    Ok((ds.subset(&train), ds.subset(&test)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    /// `(train, held_out)` row indices for `fold`, each ascending.
    pub fn indices(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.assignments.len()).partition(|&i| self.assignments[i] != fold)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

/// Seeded shuffle, then contiguous chunks; the first `n % k` folds get one extra row.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > n {
        return Err(Error::InvalidInput(format!(
            "k = {k} outside [2, {n}] for {n} records"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seed::rng(seed));
    let (base, extra) = (n / k, n % k);
    let mut assignments = vec![0; n];
    let mut pos = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &i in &perm[pos..pos + size] {
            assignments[i] = fold;
        }
        pos += size;
    }
    Ok(FoldPlan {
        k,
        assignments,
        seed,
    })
}

/// Per-feature mean and population standard deviation, fit on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        let n = x.rows() as f64;
        let mut mean = Vec::with_capacity(x.cols());
        let mut std = Vec::with_capacity(x.cols());
        for j in 0..x.cols() {
            let m = x.column(j).sum::<f64>() / n;
            let s = (x.column(j).map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
            if !(s > 1e-12 * (1.0 + m.abs())) {
                let name = if x.cols() == FEATURE_NAMES.len() {
                    FEATURE_NAMES[j].to_string()
                } else {
                    format!("feature {j}")
                };
                return Err(Error::DegenerateFeature(name));
            }
            mean.push(m);
            std.push(s);
        }
        Ok(Self { mean, std })
    }

    pub fn transform_row(&self, row: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = (row[j] - self.mean[j]) / self.std[j];
        }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::Dimension {
                expected: self.mean.len(),
                got: x.cols(),
            });
        }
        let mut data = vec![0.0; x.rows() * x.cols()];
        for (r, out) in x.iter_rows().zip(data.chunks_exact_mut(x.cols().max(1))) {
            self.transform_row(r, out);
        }
        Matrix::new(x.rows(), x.cols(), data)
    }

    pub fn inverse(&self, x: &Matrix) -> Result<Matrix> {
        let mut data = x.as_slice().to_vec();
        for row in data.chunks_exact_mut(x.cols().max(1)) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * self.std[j] + self.mean[j];
            }
        }
        Matrix::new(x.rows(), x.cols(), data)
    }
}
