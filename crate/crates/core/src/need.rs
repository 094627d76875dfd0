//! Per-pixel need, 25 km disk aggregation, percentile selection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::BoolMask;
use crate::raster::{row_cell_size, RasterGrid};

/// Tunable thresholds of the gap-mapping run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeedParams {
    /// Travel times strictly above this many minutes count as poor access.
    pub travel_minutes: f64,
    /// Densities at or above this many persons/km² count as populated.
    pub density_threshold: f64,
    /// Radiance strictly below this counts as low nighttime light.
    pub ntl_threshold: f64,
    pub radius_km: f64,
    pub percentile: f64,
    pub exclude_zeros: bool,
}

impl Default for NeedParams {
    fn default() -> Self {
        NeedParams {
            travel_minutes: 30.0,
            density_threshold: 50.0,
            ntl_threshold: 20.0,
            radius_km: 25.0,
            percentile: 99.0,
            exclude_zeros: true,
        }
    }
}

impl NeedParams {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str, v: f64| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{what} out of range: {v}")))
            }
        };
        check(self.travel_minutes > 0.0, "travel_minutes", self.travel_minutes)?;
        check(self.density_threshold >= 0.0, "density_threshold", self.density_threshold)?;
        check(self.ntl_threshold >= 0.0, "ntl_threshold", self.ntl_threshold)?;
        check(
            self.radius_km > 0.0 && self.radius_km.is_finite(),
            "radius_km",
            self.radius_km,
        )?;
        check(
            self.percentile > 0.0 && self.percentile <= 100.0,
            "percentile",
            self.percentile,
        )
    }
}

/// Need units per pixel: population density on qualifying pixels, 0 elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct NeedRaster(RasterGrid);

impl NeedRaster {
    pub fn new(grid: RasterGrid) -> Result<Self> {
        if let Some(v) = grid.valid_values().find(|v| *v < 0.0) {
            return Err(Error::InvalidParameter(format!("need raster contains negative value {v}")));
        }
        Ok(NeedRaster(grid))
    }

    pub fn grid(&self) -> &RasterGrid {
        &self.0
    }

    pub fn into_grid(self) -> RasterGrid {
        self.0
    }
}

/// Need summed over each cell's disk neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionalNeedRaster(RasterGrid);

impl RegionalNeedRaster {
    pub fn new(grid: RasterGrid) -> Result<Self> {
        NeedRaster::new(grid).map(|n| RegionalNeedRaster(n.0))
    }

    pub fn grid(&self) -> &RasterGrid {
        &self.0
    }

    pub fn into_grid(self) -> RasterGrid {
        self.0
    }

    /// Same raster rounded to `f32` precision, as it would be after a
    /// GeoTIFF round trip.
    pub fn narrowed_to_f32(&self) -> RegionalNeedRaster {
        RegionalNeedRaster(self.0.narrowed_to_f32())
    }
}

/// Maps a qualifying pixel's population density to need units.
pub trait NeedWeighting: Sync {
    fn weight(&self, density: f64) -> f64;
}

/// Need equals population density.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityWeighting;

impl NeedWeighting for IdentityWeighting {
    fn weight(&self, density: f64) -> f64 {
        density
    }
}

pub fn need_per_pixel(pop: &RasterGrid, combined: &BoolMask) -> Result<NeedRaster> {
    need_per_pixel_with(pop, combined, &IdentityWeighting)
}

/// Gated need: `weighting(pop)` where the mask is 1, 0 where it is 0.
/// Cells where either the population or the mask is nodata are nodata.
pub fn need_per_pixel_with(pop: &RasterGrid, combined: &BoolMask, weighting: &dyn NeedWeighting) -> Result<NeedRaster> {
    pop.ensure_same_grid(combined.grid(), "need_per_pixel")?;
    let nodata = pop.nodata();
    let values = pop
        .values()
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if pop.is_nodata(p) {
                return nodata;
            }
            match combined.state(i) {
                Some(true) => weighting.weight(p),
                Some(false) => 0.0,
                None => nodata,
            }
        })
        .collect();
    NeedRaster::new(pop.derive(nodata, values))
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Row prefix sums kept as unevaluated `hi + lo` pairs so that span sums
/// taken as differences stay accurate far from the row start.
struct RowPrefix {
    hi: Vec<f64>,
    lo: Vec<f64>,
}

impl RowPrefix {
    fn new(values: &[f64], is_nodata: impl Fn(f64) -> bool) -> Self {
        let mut hi = Vec::with_capacity(values.len() + 1);
        let mut lo = Vec::with_capacity(values.len() + 1);
        let (mut h, mut l) = (0.0f64, 0.0f64);
        hi.push(h);
        lo.push(l);
        for &v in values {
            let v = if is_nodata(v) { 0.0 } else { v };
            let (s, e) = two_sum(h, v);
            let (s, e) = two_sum(s, l + e);
            h = s;
            l = e;
            hi.push(h);
            lo.push(l);
        }
        RowPrefix { hi, lo }
    }

    /// Sum of columns `a..b`.
    #[inline]
    fn span(&self, a: usize, b: usize) -> f64 {
        let (s, e) = two_sum(self.hi[b], -self.hi[a]);
        s + (e + (self.lo[b] - self.lo[a]))
    }
}

#[inline]
fn within(dx: f64, dy: f64, r2: f64) -> bool {
    dx * dx + dy * dy <= r2
}

/// Largest column offset `h` with `(h·ew, dy)` inside the disk, capped so a
/// window never exceeds the row.
fn half_width(ew: f64, dy: f64, r2: f64, cap: usize) -> usize {
    let rem = (r2 - dy * dy).max(0.0).sqrt();
    let mut h = if ew > 0.0 { (rem / ew).floor().min(cap as f64) as usize } else { cap };
    while h < cap && within((h + 1) as f64 * ew, dy, r2) {
        h += 1;
    }
    while h > 0 && !within(h as f64 * ew, dy, r2) {
        h -= 1;
    }
    h
}

/// Output rows handled per work unit.
const BAND_ROWS: usize = 128;

/// Sums need over every cell whose center lies within `radius_km` of each
/// output cell's center.
///
/// Offsets between cells p and q are measured as `dc · ew(q)` east-west and
/// `dr · ns` north-south, with sizes from [`crate::raster::cell_size_meters`].
/// Nodata cells contribute nothing and stay nodata in the output.
///
/// The disk is decomposed into one column span per kernel row. Each span is
/// read from compensated row prefix sums, and the spans of one output cell
/// are added in ascending source-row order, so results do not depend on the
/// number of worker threads.
pub fn focal_sum_disk(need: &NeedRaster, radius_km: f64) -> Result<RegionalNeedRaster> {
    if !(radius_km > 0.0 && radius_km.is_finite()) {
        return Err(Error::InvalidParameter(format!("radius_km must be > 0, got {radius_km}")));
    }
    let grid = need.grid();
    let (rows, cols) = (grid.rows(), grid.cols());
    let radius = radius_km * 1000.0;
    let r2 = radius * radius;
    let sizes: Vec<(f64, f64)> = (0..rows).map(|r| row_cell_size(grid, r)).collect();
    let ns = sizes[0].1;

    let mut max_dr = ((radius / ns).floor() as usize).min(rows - 1);
    while max_dr < rows - 1 && within(0.0, (max_dr + 1) as f64 * ns, r2) {
        max_dr += 1;
    }
    while max_dr > 0 && !within(0.0, max_dr as f64 * ns, r2) {
        max_dr -= 1;
    }

    // widths[q][dr]: half-width in columns for source row q at row offset dr
    let widths: Vec<Vec<usize>> = sizes
        .iter()
        .map(|&(ew, _)| {
            (0..=max_dr)
                .map(|dr| half_width(ew, dr as f64 * ns, r2, cols - 1))
                .collect()
        })
        .collect();

    let nodata = grid.nodata();
    let values = grid.values();
    let mut out = vec![0.0f64; rows * cols];
    out.par_chunks_mut(BAND_ROWS * cols)
        .enumerate()
        .for_each(|(band, chunk)| {
            let r_start = band * BAND_ROWS;
            let r_end = (r_start + BAND_ROWS).min(rows);
            let q_start = r_start.saturating_sub(max_dr);
            let q_end = (r_end + max_dr).min(rows);
            let prefixes: Vec<RowPrefix> = (q_start..q_end)
                .map(|q| RowPrefix::new(&values[q * cols..(q + 1) * cols], |v| grid.is_nodata(v)))
                .collect();

            for r in r_start..r_end {
                let out_row = &mut chunk[(r - r_start) * cols..(r - r_start + 1) * cols];
                let lo = r.saturating_sub(max_dr);
                let hi = (r + max_dr).min(rows - 1);
                for q in lo..=hi {
                    let h = widths[q][r.abs_diff(q)];
                    let prefix = &prefixes[q - q_start];
                    for (c, acc) in out_row.iter_mut().enumerate() {
                        let a = c.saturating_sub(h);
                        let b = (c + h + 1).min(cols);
                        *acc += prefix.span(a, b);
                    }
                }
                let in_row = &values[r * cols..(r + 1) * cols];
                for (acc, &v) in out_row.iter_mut().zip(in_row) {
                    if grid.is_nodata(v) {
                        *acc = nodata;
                    }
                }
            }
        });
    Ok(RegionalNeedRaster(grid.derive(nodata, out)))
}

/// Nearest-rank percentile: the value at 1-based index `ceil(p/100 · n)` of
/// the ascending eligible values. Eligible means valid, and nonzero when
/// `exclude_zeros` is set.
pub fn percentile_threshold(regional: &RegionalNeedRaster, p: f64, exclude_zeros: bool) -> Result<f64> {
    if !(p > 0.0 && p <= 100.0) {
        return Err(Error::InvalidParameter(format!("percentile must be in (0, 100], got {p}")));
    }
    let mut eligible: Vec<f64> = regional
        .grid()
        .valid_values()
        .filter(|&v| !(exclude_zeros && v == 0.0))
        .collect();
    if eligible.is_empty() {
        return Err(Error::EmptyEligibleSet { exclude_zeros });
    }
    let n = eligible.len();
    let rank = ((p * n as f64) / 100.0).ceil().clamp(1.0, n as f64) as usize;
    let (_, value, _) = eligible.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(*value)
}

/// Number of eligible cells the percentile is taken over.
pub fn eligible_count(regional: &RegionalNeedRaster, exclude_zeros: bool) -> usize {
    regional
        .grid()
        .valid_values()
        .filter(|&v| !(exclude_zeros && v == 0.0))
        .count()
}

/// 1 where regional need is strictly greater than `threshold`.
pub fn high_need_mask(regional: &RegionalNeedRaster, threshold: f64) -> BoolMask {
    let g = regional.grid();
    BoolMask::from_states(g, g.values().iter().map(|&v| (!g.is_nodata(v)).then_some(v > threshold)))
}
