//! Plain-text grid rasters with a JSON sidecar header.
//!
//! `ch1.txt` holds one raster row per line, values separated by spaces;
//! `ch1.json` next to it holds `{"width": W, "height": H, "role": "ch1"}`.
//! Zone masks use the same layout with integer labels and role `"mask"`.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Grid, MultispectralFrame, ZoneMask};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridHeader {
    pub width: usize,
    pub height: usize,
    pub role: String,
}

pub fn header_path(grid: &Path) -> PathBuf {
    grid.with_extension("json")
}

fn read_header(grid: &Path) -> Result<GridHeader> {
    let hp = header_path(grid);
    let text = fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidInput(format!("{}: bad grid header: {e}", hp.display())))
}

fn parse_grid<T: FromStr + Copy>(path: &Path, header: &GridHeader) -> Result<Grid<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut data = Vec::with_capacity(header.width * header.height);
    let mut rows = 0;
    for (r, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let before = data.len();
        for (c, tok) in line.split_whitespace().enumerate() {
            let v = tok.parse::<T>().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                row: r,
                column: c.to_string(),
                message: format!("cannot parse `{tok}`"),
            })?;
            data.push(v);
        }
        if data.len() - before != header.width {
            return Err(Error::Shape(format!(
                "{}: row {r} has {} values, header says width {}",
                path.display(),
                data.len() - before,
                header.width
            )));
        }
        rows += 1;
    }
    if rows != header.height {
        return Err(Error::Shape(format!(
            "{}: {rows} rows, header says height {}",
            path.display(),
            header.height
        )));
    }
    Grid::new(header.width, header.height, data)
}

fn expect_role(path: &Path, header: &GridHeader, role: &str) -> Result<()> {
    if header.role != role {
        return Err(Error::InvalidInput(format!(
            "{}: header role `{}`, expected `{role}`",
            path.display(),
            header.role
        )));
    }
    Ok(())
}

pub fn read_grid(path: &Path, role: &str) -> Result<Grid<f64>> {
    let header = read_header(path)?;
    expect_role(path, &header, role)?;
    parse_grid(path, &header)
}

pub fn read_mask(path: &Path) -> Result<ZoneMask> {
    let header = read_header(path)?;
    expect_role(path, &header, "mask")?;
    parse_grid(path, &header)
}

pub fn read_frame(ch1: &Path, ch2: &Path, ch3: &Path) -> Result<MultispectralFrame> {
    MultispectralFrame::new(
        read_grid(ch1, "ch1")?,
        read_grid(ch2, "ch2")?,
        read_grid(ch3, "ch3")?,
    )
}

/// Writes `grid` to `path` and its header next to it.
pub fn write_grid<T: Copy + ToString>(path: &Path, grid: &Grid<T>, role: &str) -> Result<()> {
    let mut body = String::new();
    for row in grid.as_slice().chunks(grid.width().max(1)) {
        let line: Vec<String> = row.iter().map(ToString::to_string).collect();
        body.push_str(&line.join(" "));
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))?;
    let header = GridHeader {
        width: grid.width(),
        height: grid.height(),
        role: role.to_string(),
    };
    let hp = header_path(path);
    fs::write(&hp, serde_json::to_string_pretty(&header)?).map_err(|e| Error::io(&hp, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_round_trip_is_bit_transparent() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ch1.txt");
        let g = Grid::new(3, 2, vec![0.1, 1e-17, 3.0, 12345.678, 0.0, 7.25]).unwrap();
        write_grid(&p, &g, "ch1").unwrap();
        assert_eq!(read_grid(&p, "ch1").unwrap(), g);
        assert!(matches!(read_grid(&p, "ch3"), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn bad_cells_and_shapes_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.txt");
        fs::write(&p, "1 2\n3 x\n").unwrap();
        fs::write(header_path(&p), r#"{"width":2,"height":2,"role":"mask"}"#).unwrap();
        match read_mask(&p) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column.as_str()), (1, "1")),
            other => panic!("{other:?}"),
        }
        fs::write(&p, "1 2\n3\n").unwrap();
        assert!(matches!(read_mask(&p), Err(Error::Shape(_))));
        fs::write(&p, "1 2\n").unwrap();
        assert!(matches!(read_mask(&p), Err(Error::Shape(_))));
    }
}
