//! Georeferenced single-band grids.
//!
//! A [`RasterGrid`] is a row-major field of `f64` values with a north-up
//! [`GeoTransform`], a [`Crs`] tag and a nodata sentinel. Rows increase
//! southward. Grids are immutable once built; every operation in the crate
//! returns a new grid.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sentinel used when a file carries no nodata metadata.
pub const DEFAULT_NODATA: f64 = -9999.0;

/// Spherical-earth arc length of one degree, in meters.
pub const METERS_PER_DEGREE: f64 = 111_320.0;

/// North-up affine transform. `origin_*` is the upper-left corner of the
/// upper-left cell; both pixel sizes are positive magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_width: f64,
    pub pixel_height: f64,
}

impl GeoTransform {
    pub fn new(origin_x: f64, origin_y: f64, pixel_width: f64, pixel_height: f64) -> Result<Self> {
        let t = GeoTransform {
            origin_x,
            origin_y,
            pixel_width,
            pixel_height,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.origin_x.is_finite() && self.origin_y.is_finite()) {
            return Err(Error::InvalidParameter("geotransform origin must be finite".into()));
        }
        if !(self.pixel_width.is_finite() && self.pixel_width > 0.0)
            || !(self.pixel_height.is_finite() && self.pixel_height > 0.0)
        {
            return Err(Error::InvalidParameter(format!(
                "pixel size must be positive, got {} x {}",
                self.pixel_width, self.pixel_height
            )));
        }
        Ok(())
    }

    /// Center of cell (row, col) in map units.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.pixel_width,
            self.origin_y - (row as f64 + 0.5) * self.pixel_height,
        )
    }

    /// Fractional (col, row) position of a map coordinate; integer values
    /// fall on cell edges.
    pub fn fractional_position(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.origin_x) / self.pixel_width,
            (self.origin_y - y) / self.pixel_height,
        )
    }

    fn approx_eq(&self, other: &GeoTransform) -> bool {
        let tol_x = 1e-9 * self.pixel_width.max(other.pixel_width);
        let tol_y = 1e-9 * self.pixel_height.max(other.pixel_height);
        (self.origin_x - other.origin_x).abs() <= tol_x
            && (self.origin_y - other.origin_y).abs() <= tol_y
            && (self.pixel_width - other.pixel_width).abs() <= tol_x
            && (self.pixel_height - other.pixel_height).abs() <= tol_y
    }
}

/// Coordinate reference system tag. No reprojection is ever performed; the
/// tag decides whether map units are degrees or meters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Crs {
    /// WGS84 longitude/latitude in degrees.
    Geographic,
    /// Projected system in meters, identified e.g. as `EPSG:32643`.
    Projected(String),
}

impl Crs {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Crs::Geographic => "geographic",
            Crs::Projected(_) => "projected",
        }
    }

    pub fn same_kind(&self, other: &Crs) -> bool {
        matches!(
            (self, other),
            (Crs::Geographic, Crs::Geographic) | (Crs::Projected(_), Crs::Projected(_))
        )
    }

    /// EPSG code for `EPSG:<n>` style identifiers.
    pub fn epsg_code(&self) -> Option<u16> {
        match self {
            Crs::Geographic => Some(4326),
            Crs::Projected(id) => id
                .strip_prefix("EPSG:")
                .and_then(|code| code.parse::<u16>().ok())
                .filter(|code| *code > 0 && *code < 32767 && id == &format!("EPSG:{code}")),
        }
    }
}

impl fmt::Display for Crs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Crs::Geographic => f.write_str("EPSG:4326"),
            Crs::Projected(id) => f.write_str(id),
        }
    }
}

/// Axis-aligned bounding box in map units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Extent {
    /// Convenience preset covering South Asia (lon 60..98, lat 5..38).
    pub const SOUTH_ASIA: Extent = Extent {
        min_x: 60.0,
        min_y: 5.0,
        max_x: 98.0,
        max_y: 38.0,
    };

    pub fn intersection(&self, other: &Extent) -> Option<Extent> {
        let e = Extent {
            min_x: self.min_x.max(other.min_x),
            min_y: self.min_y.max(other.min_y),
            max_x: self.max_x.min(other.max_x),
            max_y: self.max_y.min(other.max_y),
        };
        (e.min_x < e.max_x && e.min_y < e.max_y).then_some(e)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleMethod {
    Nearest,
    /// Continuous layers only; never used for masks or categories.
    Bilinear,
}

impl FromStr for ResampleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nearest" => Ok(ResampleMethod::Nearest),
            "bilinear" => Ok(ResampleMethod::Bilinear),
            other => Err(Error::InvalidParameter(format!("unknown resample method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    rows: usize,
    cols: usize,
    transform: GeoTransform,
    crs: Crs,
    nodata: f64,
    values: Vec<f64>,
}

impl RasterGrid {
    /// Builds a grid, rejecting empty shapes, length mismatches and
    /// non-finite values that are not the nodata sentinel.
    pub fn new(
        rows: usize,
        cols: usize,
        transform: GeoTransform,
        crs: Crs,
        nodata: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid must have at least one row and column, got {rows}x{cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::InvalidParameter(format!(
                "expected {} values for a {rows}x{cols} grid, got {}",
                rows * cols,
                values.len()
            )));
        }
        transform.validate()?;
        let grid = RasterGrid {
            rows,
            cols,
            transform,
            crs,
            nodata,
            values,
        };
        if let Some(i) = grid.values.iter().position(|&v| !v.is_finite() && !grid.is_nodata(v)) {
            return Err(Error::InvalidParameter(format!(
                "value at index {i} is {} and not the nodata sentinel",
                grid.values[i]
            )));
        }
        Ok(grid)
    }

    pub fn filled(rows: usize, cols: usize, transform: GeoTransform, crs: Crs, nodata: f64, value: f64) -> Result<Self> {
        Self::new(rows, cols, transform, crs, nodata, vec![value; rows * cols])
    }

    /// Same geometry as `self` with new values and nodata sentinel.
    /// Callers guarantee the length and value invariants.
    pub(crate) fn derive(&self, nodata: f64, values: Vec<f64>) -> RasterGrid {
        debug_assert_eq!(values.len(), self.rows * self.cols);
        RasterGrid {
            rows: self.rows,
            cols: self.cols,
            transform: self.transform,
            crs: self.crs.clone(),
            nodata,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn transform(&self) -> &GeoTransform {
        &self.transform
    }

    pub fn crs(&self) -> &Crs {
        &self.crs
    }

    pub fn nodata(&self) -> f64 {
        self.nodata
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata || (self.nodata.is_nan() && v.is_nan())
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols);
        row * self.cols + col
    }

    /// Raw stored value, nodata included.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.index(row, col)]
    }

    /// Stored value, or `None` for nodata.
    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        let v = self.get(row, col);
        (!self.is_nodata(v)).then_some(v)
    }

    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied().filter(move |&v| !self.is_nodata(v))
    }

    /// Cellwise map over valid values; nodata cells keep the sentinel.
    pub fn map_valid(&self, f: impl Fn(f64) -> f64) -> RasterGrid {
        let values = self
            .values
            .iter()
            .map(|&v| if self.is_nodata(v) { self.nodata } else { f(v) })
            .collect();
        self.derive(self.nodata, values)
    }

    /// Rounds every valid value to the nearest `f32`, the precision at which
    /// grids are persisted.
    pub fn narrowed_to_f32(&self) -> RasterGrid {
        self.map_valid(|v| v as f32 as f64)
    }

    pub fn extent(&self) -> Extent {
        let t = &self.transform;
        Extent {
            min_x: t.origin_x,
            max_x: t.origin_x + self.cols as f64 * t.pixel_width,
            max_y: t.origin_y,
            min_y: t.origin_y - self.rows as f64 * t.pixel_height,
        }
    }

    /// True when both grids share shape, transform and CRS kind.
    pub fn same_grid(&self, other: &RasterGrid) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.crs.same_kind(&other.crs)
            && self.transform.approx_eq(&other.transform)
    }

    pub fn ensure_same_grid(&self, other: &RasterGrid, what: &str) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{what}: {}x{} grid {:?} does not match {}x{} grid {:?}",
                other.rows, other.cols, other.transform, self.rows, self.cols, self.transform
            )))
        }
    }

    /// Sub-grid of the cells whose centers fall inside `extent`.
    pub fn crop(&self, extent: &Extent) -> Result<RasterGrid> {
        let cols: Vec<usize> = (0..self.cols)
            .filter(|&c| {
                let (x, _) = self.transform.cell_center(0, c);
                x >= extent.min_x && x <= extent.max_x
            })
            .collect();
        let rows: Vec<usize> = (0..self.rows)
            .filter(|&r| {
                let (_, y) = self.transform.cell_center(r, 0);
                y >= extent.min_y && y <= extent.max_y
            })
            .collect();
        let (Some(&c0), Some(&r0)) = (cols.first(), rows.first()) else {
            return Err(Error::InvalidParameter(format!(
                "extent {extent:?} contains no cell centers of the grid"
            )));
        };
        if c0 == 0 && r0 == 0 && cols.len() == self.cols && rows.len() == self.rows {
            return Ok(self.clone());
        }
        let mut values = Vec::with_capacity(rows.len() * cols.len());
        for &r in &rows {
            let start = self.index(r, c0);
            values.extend_from_slice(&self.values[start..start + cols.len()]);
        }
        let t = &self.transform;
        let transform = GeoTransform {
            origin_x: t.origin_x + c0 as f64 * t.pixel_width,
            origin_y: t.origin_y - r0 as f64 * t.pixel_height,
            ..*t
        };
        Ok(RasterGrid {
            rows: rows.len(),
            cols: cols.len(),
            transform,
            crs: self.crs.clone(),
            nodata: self.nodata,
            values,
        })
    }
}

/// East-west cell width in meters at a latitude, for a geographic grid.
pub(crate) fn geographic_ew_meters(pixel_width: f64, lat_deg: f64) -> f64 {
    pixel_width * METERS_PER_DEGREE * lat_deg.to_radians().cos()
}

/// `(east-west, north-south)` size in meters of the cells in `row`.
///
/// Projected grids pass the pixel size through. Geographic grids use the
/// spherical constant [`METERS_PER_DEGREE`], scaling the east-west size by
/// the cosine of the row-center latitude.
pub fn cell_size_meters(grid: &RasterGrid, row: usize) -> Result<(f64, f64)> {
    if row >= grid.rows {
        return Err(Error::RowOutOfRange { row, rows: grid.rows });
    }
    Ok(row_cell_size(grid, row))
}

pub(crate) fn row_cell_size(grid: &RasterGrid, row: usize) -> (f64, f64) {
    let t = &grid.transform;
    match grid.crs {
        Crs::Projected(_) => (t.pixel_width, t.pixel_height),
        Crs::Geographic => {
            let (_, lat) = t.cell_center(row, 0);
            (
                geographic_ew_meters(t.pixel_width, lat),
                t.pixel_height * METERS_PER_DEGREE,
            )
        }
    }
}

/// Snap distance below which a fractional sample offset is treated as lying
/// exactly on a source cell center.
const CENTER_SNAP: f64 = 1e-9;

/// Resamples `source` onto the grid of `reference`.
///
/// Output cells take reference geometry and CRS and the source's nodata
/// sentinel. A cell is nodata when its center falls outside the source
/// extent or when any sample with nonzero weight is nodata.
pub fn align_to(source: &RasterGrid, reference: &RasterGrid, method: ResampleMethod) -> Result<RasterGrid> {
    if !source.crs.same_kind(&reference.crs) {
        return Err(Error::CrsMismatch {
            source_kind: source.crs.kind_name(),
            reference_kind: reference.crs.kind_name(),
        });
    }
    let st = &source.transform;
    let nodata = source.nodata;
    let mut values = Vec::with_capacity(reference.len());
    for r in 0..reference.rows {
        for c in 0..reference.cols {
            let (x, y) = reference.transform.cell_center(r, c);
            let (fc, fr) = st.fractional_position(x, y);
            let inside = fc >= 0.0 && fr >= 0.0 && fc < source.cols as f64 && fr < source.rows as f64;
            let v = if !inside {
                nodata
            } else {
                match method {
                    ResampleMethod::Nearest => source.get(fr.floor() as usize, fc.floor() as usize),
                    ResampleMethod::Bilinear => bilinear_sample(source, fc - 0.5, fr - 0.5),
                }
            };
            values.push(v);
        }
    }
    Ok(RasterGrid {
        rows: reference.rows,
        cols: reference.cols,
        transform: reference.transform,
        crs: reference.crs.clone(),
        nodata,
        values,
    })
}

/// Splits a center-based coordinate into a base index and a weight toward
/// the next index, clamping at the grid border.
fn split_axis(u: f64, n: usize) -> (usize, usize, f64) {
    let last = n - 1;
    if u <= 0.0 {
        return (0, 0, 0.0);
    }
    if u >= last as f64 {
        return (last, last, 0.0);
    }
    let base = u.floor();
    let mut i0 = base as usize;
    let mut t = u - base;
    if t < CENTER_SNAP {
        t = 0.0;
    } else if t > 1.0 - CENTER_SNAP {
        i0 += 1;
        t = 0.0;
    }
    let i1 = (i0 + 1).min(last);
    (i0, i1, t)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        return a;
    }
    let v = a + t * (b - a);
    v.clamp(a.min(b), a.max(b))
}

fn bilinear_sample(source: &RasterGrid, u: f64, v: f64) -> f64 {
    let (c0, c1, tx) = split_axis(u, source.cols);
    let (r0, r1, ty) = split_axis(v, source.rows);
    let nodata = source.nodata;
    let sample = |r: usize, c: usize| source.value(r, c);

    let row_value = |r: usize| -> Option<f64> {
        let a = sample(r, c0)?;
        if tx == 0.0 {
            return Some(a);
        }
        let b = sample(r, c1)?;
        Some(lerp(a, b, tx))
    };
    let Some(top) = row_value(r0) else { return nodata };
    if ty == 0.0 {
        return top;
    }
    let Some(bottom) = row_value(r1) else { return nodata };
    lerp(top, bottom, ty)
}
