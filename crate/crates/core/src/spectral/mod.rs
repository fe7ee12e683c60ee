//! Band separation, NDVI and zonal feature extraction for the three-channel
//! NDVI sensor.
//!
//! Channel 1 carries red light contaminated by NIR, channel 2 green, channel 3
//! NIR. Red and NIR are recovered by a fixed 2x2 linear unmixing; NDVI uses the
//! sensor's own rational form directly on the digital numbers.

mod raster_io;

pub use raster_io::{read_frame, read_grid, read_mask, write_grid, GridHeader};

use serde::Serialize;

use crate::error::{Error, Result};

/// Unmixing coefficients: `r = R_CH1·ch1 + R_CH3·ch3`, `nir = NIR_CH3·ch3 + NIR_CH1·ch1`.
pub const R_CH1: f64 = 1.0;
pub const R_CH3: f64 = -1.012;
pub const NIR_CH3: f64 = 9.605;
pub const NIR_CH1: f64 = -0.6182;

/// NDVI numerator and denominator coefficients on (ch3, ch1).
pub const NDVI_NUM_CH3: f64 = 1.236;
pub const NDVI_NUM_CH1: f64 = -0.188;
pub const NDVI_DEN_CH3: f64 = 1.000;
pub const NDVI_DEN_CH1: f64 = 0.044;

/// Row-major 2-D raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "{}x{} grid needs {} values, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().position(|r| r.len() != width) {
            return Err(Error::Shape(format!(
                "row {r} has {} values, expected {width}",
                rows[r].len()
            )));
        }
        Self::new(width, height, rows.concat())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip_with<U: Copy, V: Copy>(&self, other: &Grid<U>, f: impl Fn(T, U) -> V) -> Grid<V> {
        debug_assert_eq!(self.dims(), other.dims());
        Grid {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

/// Raw digital numbers of the three sensor channels.
#[derive(Debug, Clone, PartialEq)]
pub struct MultispectralFrame {
    ch1: Grid<f64>,
    ch2: Grid<f64>,
    ch3: Grid<f64>,
}

impl MultispectralFrame {
    pub fn new(ch1: Grid<f64>, ch2: Grid<f64>, ch3: Grid<f64>) -> Result<Self> {
        if ch1.dims() != ch2.dims() || ch1.dims() != ch3.dims() {
            return Err(Error::Shape(format!(
                "channel dimensions differ: ch1 {:?}, ch2 {:?}, ch3 {:?}",
                ch1.dims(),
                ch2.dims(),
                ch3.dims()
            )));
        }
        for (name, ch) in [("ch1", &ch1), ("ch2", &ch2), ("ch3", &ch3)] {
            if let Some(i) = ch.data.iter().position(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} pixel ({}, {}) is {}; DN must be finite and non-negative",
                    i % ch.width,
                    i / ch.width,
                    ch.data[i]
                )));
            }
        }
        Ok(Self { ch1, ch2, ch3 })
    }

    pub fn ch1(&self) -> &Grid<f64> {
        &self.ch1
    }

    pub fn ch2(&self) -> &Grid<f64> {
        &self.ch2
    }

    pub fn ch3(&self) -> &Grid<f64> {
        &self.ch3
    }

    pub fn dims(&self) -> (usize, usize) {
        self.ch1.dims()
    }
}

/// Corrected red, NIR and green bands. `g` is channel 2 unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectanceBands {
    pub r: Grid<f64>,
    pub nir: Grid<f64>,
    pub g: Grid<f64>,
}

/// Zone labels; 0 means unassigned.
pub type ZoneMask = Grid<u32>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvReading {
    pub rh: f64,
    pub air_temp: f64,
}

impl EnvReading {
    pub fn new(rh: f64, air_temp: f64) -> Result<Self> {
        if !(0.0..=100.0).contains(&rh) {
            return Err(Error::InvalidInput(format!("relative humidity {rh} outside [0, 100]")));
        }
        if !air_temp.is_finite() {
            return Err(Error::InvalidInput("air temperature must be finite".into()));
        }
        Ok(Self { rh, air_temp })
    }
}

#[inline]
pub fn red_of(ch1: f64, ch3: f64) -> f64 {
    R_CH1 * ch1 + R_CH3 * ch3
}

#[inline]
pub fn nir_of(ch1: f64, ch3: f64) -> f64 {
    NIR_CH3 * ch3 + NIR_CH1 * ch1
}

/// Per-pixel NDVI, or `None` when the denominator is not positive.
#[inline]
pub fn ndvi_of(ch1: f64, ch3: f64) -> Option<f64> {
    let den = NDVI_DEN_CH3 * ch3 + NDVI_DEN_CH1 * ch1;
    (den > 0.0).then(|| (NDVI_NUM_CH3 * ch3 + NDVI_NUM_CH1 * ch1) / den)
}

/// Inverts the unmixing: recovers `(ch1, ch3)` from `(r, nir)`.
pub fn unmix_inverse(r: f64, nir: f64) -> (f64, f64) {
    let det = R_CH1 * NIR_CH3 - R_CH3 * NIR_CH1;
    let ch1 = (NIR_CH3 * r - R_CH3 * nir) / det;
    let ch3 = (R_CH1 * nir - NIR_CH1 * r) / det;
    (ch1, ch3)
}

pub fn separate_bands(frame: &MultispectralFrame) -> ReflectanceBands {
    ReflectanceBands {
        r: frame.ch1.zip_with(&frame.ch3, red_of),
        nir: frame.ch1.zip_with(&frame.ch3, nir_of),
        g: frame.ch2.clone(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct NdviDiagnostics {
    pub invalid_pixels: usize,
}

/// Per-pixel NDVI. Pixels with a zero denominator are NaN and counted as invalid.
pub fn compute_ndvi(frame: &MultispectralFrame) -> (Grid<f64>, NdviDiagnostics) {
    let ndvi = frame
        .ch1
        .zip_with(&frame.ch3, |a, b| ndvi_of(a, b).unwrap_or(f64::NAN));
    let invalid_pixels = ndvi.data.iter().filter(|v| v.is_nan()).count();
    (ndvi, NdviDiagnostics { invalid_pixels })
}

/// Mean over the finite pixels of `zone`, summed in row-major order.
pub fn zonal_mean(raster: &Grid<f64>, mask: &ZoneMask, zone: u32) -> Result<f64> {
    if raster.dims() != mask.dims() {
        return Err(Error::Shape(format!(
            "raster {:?} vs mask {:?}",
            raster.dims(),
            mask.dims()
        )));
    }
    let (sum, count) = raster
        .data
        .iter()
        .zip(&mask.data)
        .filter(|(v, &z)| z == zone && v.is_finite())
        .fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
    if count == 0 {
        return Err(Error::EmptyZone { zone });
    }
    Ok(sum / count as f64)
}

/// One zone's features, in the column order of the features CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeatureRow {
    pub zone: u32,
    pub red: f64,
    pub nir: f64,
    pub green: f64,
    pub ndvi: f64,
    pub rh: f64,
    pub air_temp: f64,
}

impl FeatureRow {
    pub fn features(&self) -> [f64; 6] {
        [
            self.red,
            self.nir,
            self.green,
            self.ndvi,
            self.rh,
            self.air_temp,
        ]
    }
}

pub const FEATURE_CSV_HEADER: &str = "zone,red,nir,green,ndvi,rh,air_temp";

/// Zonal features for every non-zero zone in `mask`, sorted by zone id.
///
/// Band means are taken over all zone pixels of the separated bands; the NDVI
/// mean is the mean of per-pixel NDVI over valid pixels only.
pub fn extract_features(
    frame: &MultispectralFrame,
    mask: &ZoneMask,
    env: EnvReading,
) -> Result<(Vec<FeatureRow>, NdviDiagnostics)> {
    if frame.dims() != mask.dims() {
        return Err(Error::Shape(format!(
            "frame {:?} vs mask {:?}",
            frame.dims(),
            mask.dims()
        )));
    }
    let bands = separate_bands(frame);
    let (ndvi, diag) = compute_ndvi(frame);
    let mut zones: Vec<u32> = mask.data.iter().copied().filter(|&z| z != 0).collect();
    zones.sort_unstable();
    zones.dedup();
    let rows = zones
        .into_iter()
        .map(|zone| {
            Ok(FeatureRow {
                zone,
                red: zonal_mean(&bands.r, mask, zone)?,
                nir: zonal_mean(&bands.nir, mask, zone)?,
                green: zonal_mean(&bands.g, mask, zone)?,
                ndvi: zonal_mean(&ndvi, mask, zone)?,
                rh: env.rh,
                air_temp: env.air_temp,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, diag))
}

pub fn write_features_csv<W: std::io::Write>(out: W, rows: &[FeatureRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FEATURE_CSV_HEADER.split(','))?;
    for r in rows {
        w.write_record([
            r.zone.to_string(),
            r.red.to_string(),
            r.nir.to_string(),
            r.green.to_string(),
            r.ndvi.to_string(),
            r.rh.to_string(),
            r.air_temp.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<features>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame_1px(ch1: f64, ch2: f64, ch3: f64) -> MultispectralFrame {
        MultispectralFrame::new(
            Grid::filled(1, 1, ch1),
            Grid::filled(1, 1, ch2),
            Grid::filled(1, 1, ch3),
        )
        .unwrap()
    }

    #[test]
    fn band_separation_examples() {
        let b = separate_bands(&frame_1px(0.0, 3.0, 0.0));
        assert_eq!((b.r.get(0, 0), b.nir.get(0, 0)), (0.0, 0.0));
        assert_eq!(b.g.get(0, 0), 3.0);
        assert!(red_of(1.012, 1.0).abs() < 1e-15);
        let b = separate_bands(&frame_1px(100.0, 0.0, 50.0));
        assert!((b.r.get(0, 0) - 49.4).abs() < 1e-12);
        assert!((b.nir.get(0, 0) - 418.43).abs() < 1e-12);
    }

    #[test]
    fn ndvi_examples() {
        assert!((ndvi_of(0.0, 7.0).unwrap() - 1.236).abs() < 1e-15);
        assert!((ndvi_of(9.0, 0.0).unwrap() - (-0.188 / 0.044)).abs() < 1e-12);
        assert!((ndvi_of(100.0, 50.0).unwrap() - 43.0 / 54.4).abs() < 1e-15);
        assert!((ndvi_of(100.0, 50.0).unwrap() - 0.79044).abs() < 1e-5);
        assert_eq!(ndvi_of(0.0, 0.0), None);
    }

    #[test]
    fn zero_denominator_pixels_are_reported_not_fatal() {
        let f = MultispectralFrame::new(
            Grid::new(2, 1, vec![0.0, 100.0]).unwrap(),
            Grid::filled(2, 1, 1.0),
            Grid::new(2, 1, vec![0.0, 50.0]).unwrap(),
        )
        .unwrap();
        let (ndvi, diag) = compute_ndvi(&f);
        assert_eq!(diag.invalid_pixels, 1);
        assert!(ndvi.get(0, 0).is_nan());
        let mask = Grid::filled(2, 1, 1u32);
        let (rows, _) = extract_features(&f, &mask, EnvReading::new(40.0, 20.0).unwrap()).unwrap();
        assert!((rows[0].ndvi - 43.0 / 54.4).abs() < 1e-15);
    }

    #[test]
    fn zonal_mean_examples() {
        let mask = Grid::new(3, 1, vec![1, 1, 1]).unwrap();
        let c = Grid::filled(3, 1, 4.25);
        assert_eq!(zonal_mean(&c, &mask, 1).unwrap(), 4.25);
        let r = Grid::new(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(zonal_mean(&r, &mask, 1).unwrap(), 2.0);
        let r = Grid::new(3, 1, vec![1.0, 2.0, f64::NAN]).unwrap();
        assert_eq!(zonal_mean(&r, &mask, 1).unwrap(), 1.5);
        assert!(matches!(zonal_mean(&r, &mask, 2), Err(Error::EmptyZone { zone: 2 })));
        let all_bad = Grid::filled(3, 1, f64::NAN);
        assert!(matches!(zonal_mean(&all_bad, &mask, 1), Err(Error::EmptyZone { zone: 1 })));
    }

    #[test]
    fn uniform_frame_single_zone() {
        let f = MultispectralFrame::new(
            Grid::filled(3, 2, 100.0),
            Grid::filled(3, 2, 30.0),
            Grid::filled(3, 2, 50.0),
        )
        .unwrap();
        let mask = Grid::filled(3, 2, 5u32);
        let env = EnvReading::new(33.8, 23.2).unwrap();
        let (rows, diag) = extract_features(&f, &mask, env).unwrap();
        assert_eq!(diag.invalid_pixels, 0);
        assert_eq!(rows.len(), 1);
        let row = rows[0];
        assert_eq!(row.zone, 5);
        assert_eq!(row.red, red_of(100.0, 50.0));
        assert_eq!(row.nir, nir_of(100.0, 50.0));
        assert_eq!(row.green, 30.0);
        assert_eq!(row.ndvi, ndvi_of(100.0, 50.0).unwrap());
        assert_eq!((row.rh, row.air_temp), (33.8, 23.2));
    }

    #[test]
    fn two_disjoint_zones() {
        let f = MultispectralFrame::new(
            Grid::new(2, 1, vec![10.0, 200.0]).unwrap(),
            Grid::new(2, 1, vec![1.0, 2.0]).unwrap(),
            Grid::new(2, 1, vec![20.0, 40.0]).unwrap(),
        )
        .unwrap();
        let mask = Grid::new(2, 1, vec![7, 3]).unwrap();
        let (rows, _) = extract_features(&f, &mask, EnvReading::new(50.0, 20.0).unwrap()).unwrap();
        assert_eq!(rows.iter().map(|r| r.zone).collect::<Vec<_>>(), vec![3, 7]);
        assert_eq!(rows[0].red, red_of(200.0, 40.0));
        assert_eq!(rows[1].red, red_of(10.0, 20.0));
        assert_eq!(rows[0].green, 2.0);
    }

    #[test]
    fn mixed_2x2_zone_averages_per_pixel_values() {
        // Hand evaluation: pixels (100, 50) twice and (0, 50) twice.
        // red: 49.4, 49.4, -50.6, -50.6 -> -0.6
        // nir: 418.43, 418.43, 480.25, 480.25 -> 449.34
        // ndvi: 43/54.4 twice, 1.236 twice -> (0.790441... + 1.236) / 2
        let f = MultispectralFrame::new(
            Grid::new(2, 2, vec![100.0, 100.0, 0.0, 0.0]).unwrap(),
            Grid::filled(2, 2, 0.0),
            Grid::filled(2, 2, 50.0),
        )
        .unwrap();
        let mask = Grid::filled(2, 2, 1u32);
        let (rows, _) = extract_features(&f, &mask, EnvReading::new(0.0, 0.0).unwrap()).unwrap();
        assert!((rows[0].red - (-0.6)).abs() < 1e-12);
        assert!((rows[0].nir - 449.34).abs() < 1e-12);
        assert!((rows[0].ndvi - (43.0 / 54.4 + 1.236) / 2.0).abs() < 1e-15);
        assert!((rows[0].ndvi - 1.01322).abs() < 1e-5);
    }

    #[test]
    fn frame_validation() {
        assert!(matches!(
            MultispectralFrame::new(
                Grid::filled(2, 2, 0.0),
                Grid::filled(2, 1, 0.0),
                Grid::filled(2, 2, 0.0)
            ),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            MultispectralFrame::new(
                Grid::filled(1, 1, -1.0),
                Grid::filled(1, 1, 0.0),
                Grid::filled(1, 1, 0.0)
            ),
            Err(Error::InvalidInput(_))
        ));
        assert!(EnvReading::new(101.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn zonal_mean_bounded_and_permutation_invariant(
            vals in prop::collection::vec(-1e4f64..1e4, 1..64),
            rot in 0usize..64,
        ) {
            let n = vals.len();
            let mask = Grid::filled(n, 1, 1u32);
            let g = Grid::new(n, 1, vals.clone()).unwrap();
            let m = zonal_mean(&g, &mask, 1).unwrap();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(m >= lo - 1e-9 && m <= hi + 1e-9);
            let mut p = vals.clone();
            p.rotate_left(rot % n);
            let m2 = zonal_mean(&Grid::new(n, 1, p).unwrap(), &mask, 1).unwrap();
            prop_assert!((m - m2).abs() <= 1e-9 * (1.0 + m.abs()));
        }
    }
}
