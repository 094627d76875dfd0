//! Threshold filters and nighttime-light band categorization.
//!
//! Masks hold 0/1 on valid cells and [`MASK_NODATA`] wherever an input was
//! nodata, so missing data is never counted as served or unserved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{RasterGrid, DEFAULT_NODATA};

/// Nodata sentinel of every mask and category raster.
pub const MASK_NODATA: f64 = DEFAULT_NODATA;

/// A grid whose valid values are exactly 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BoolMask(RasterGrid);

impl BoolMask {
    /// Wraps a grid, checking that every valid value is 0 or 1.
    pub fn from_grid(grid: RasterGrid) -> Result<Self> {
        if let Some(v) = grid.valid_values().find(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidParameter(format!("mask contains non-binary value {v}")));
        }
        Ok(BoolMask(grid))
    }

    /// Builds a mask on the geometry of `like` from a per-cell tri-state.
    pub(crate) fn from_states(like: &RasterGrid, states: impl Iterator<Item = Option<bool>>) -> Self {
        let values = states
            .map(|s| match s {
                Some(true) => 1.0,
                Some(false) => 0.0,
                None => MASK_NODATA,
            })
            .collect();
        BoolMask(like.derive(MASK_NODATA, values))
    }

    pub fn grid(&self) -> &RasterGrid {
        &self.0
    }

    pub fn into_grid(self) -> RasterGrid {
        self.0
    }

    /// `Some(true)` for 1, `Some(false)` for 0, `None` for nodata.
    pub fn state(&self, index: usize) -> Option<bool> {
        let v = self.0.values()[index];
        (!self.0.is_nodata(v)).then_some(v == 1.0)
    }

    pub fn states(&self) -> impl Iterator<Item = Option<bool>> + '_ {
        (0..self.0.len()).map(|i| self.state(i))
    }

    pub fn count_ones(&self) -> usize {
        self.states().filter(|s| *s == Some(true)).count()
    }
}

/// Closed radiance interval `[low, high]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NtlBand {
    pub low: f64,
    pub high: f64,
}

impl NtlBand {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        let band = NtlBand { low, high };
        band.validate()?;
        Ok(band)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.low >= 0.0 && self.low < self.high) {
            return Err(Error::InvalidParameter(format!(
                "NTL band must satisfy 0 <= low < high, got [{}, {}]",
                self.low, self.high
            )));
        }
        Ok(())
    }

    pub fn contains(&self, v: f64) -> bool {
        self.low <= v && v <= self.high
    }
}

/// The three radiance bands used for the display layers.
pub fn default_ntl_bands() -> Vec<NtlBand> {
    vec![
        NtlBand { low: 0.0, high: 10.0 },
        NtlBand { low: 10.0, high: 20.0 },
        NtlBand { low: 20.0, high: 30.0 },
    ]
}

fn threshold(grid: &RasterGrid, keep: impl Fn(f64) -> bool) -> BoolMask {
    BoolMask::from_states(grid, grid.values().iter().map(|&v| (!grid.is_nodata(v)).then(|| keep(v))))
}

/// 1 where travel time is strictly greater than `minutes`.
pub fn mask_low_access(travel: &RasterGrid, minutes: f64) -> Result<BoolMask> {
    if !(minutes > 0.0) {
        return Err(Error::InvalidParameter(format!("travel minutes must be > 0, got {minutes}")));
    }
    Ok(threshold(travel, |v| v > minutes))
}

/// 1 where population density is at least `density`.
pub fn mask_populated(pop: &RasterGrid, density: f64) -> Result<BoolMask> {
    if !(density >= 0.0) {
        return Err(Error::InvalidParameter(format!("density threshold must be >= 0, got {density}")));
    }
    Ok(threshold(pop, |v| v >= density))
}

/// 1 where nighttime radiance is strictly below `th`.
pub fn mask_low_ntl(ntl: &RasterGrid, th: f64) -> Result<BoolMask> {
    if !(th >= 0.0) {
        return Err(Error::InvalidParameter(format!("NTL threshold must be >= 0, got {th}")));
    }
    Ok(threshold(ntl, |v| v < th))
}

/// Cellwise AND; a cell is nodata if any input is nodata there.
pub fn intersect(masks: &[&BoolMask]) -> Result<BoolMask> {
    let (first, rest) = masks
        .split_first()
        .ok_or_else(|| Error::InvalidParameter("intersect needs at least one mask".into()))?;
    for m in rest {
        first.grid().ensure_same_grid(m.grid(), "intersect")?;
    }
    let states = (0..first.grid().len()).map(|i| {
        masks.iter().try_fold(true, |acc, m| m.state(i).map(|s| acc && s))
    });
    Ok(BoolMask::from_states(first.grid(), states))
}

/// Category raster: 1-based index of the first band containing the value,
/// 0 when no band does. Shared endpoints go to the earlier band.
pub fn ntl_categorize(ntl: &RasterGrid, bands: &[NtlBand]) -> Result<RasterGrid> {
    if bands.is_empty() {
        return Err(Error::InvalidParameter("at least one NTL band is required".into()));
    }
    for b in bands {
        b.validate()?;
    }
    let values = ntl
        .values()
        .iter()
        .map(|&v| {
            if ntl.is_nodata(v) {
                MASK_NODATA
            } else {
                bands
                    .iter()
                    .position(|b| b.contains(v))
                    .map_or(0.0, |k| (k + 1) as f64)
            }
        })
        .collect();
    Ok(ntl.derive(MASK_NODATA, values))
}

/// Low-access cells whose radiance lies inside `band`.
pub fn underserved_by_band(access_mask: &BoolMask, ntl: &RasterGrid, band: NtlBand) -> Result<BoolMask> {
    band.validate()?;
    access_mask.grid().ensure_same_grid(ntl, "underserved_by_band")?;
    let states = ntl.values().iter().enumerate().map(|(i, &v)| {
        let access = access_mask.state(i)?;
        if ntl.is_nodata(v) {
            return None;
        }
        Some(access && band.contains(v))
    });
    Ok(BoolMask::from_states(ntl, states))
}
