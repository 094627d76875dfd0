//! Raster toolkit for mapping gaps in healthcare access.
//!
//! The analysis combines three aligned layers (travel time to the nearest
//! facility, population density and nighttime-light radiance), gates
//! population on poor access, density and low radiance, sums the resulting
//! need over a disk around every cell and keeps the cells above a
//! percentile of that regional need. Travel-time layers can be synthesized
//! from a friction surface with [`traveltime::cost_distance`].

pub mod clusters;
pub mod error;
pub mod geotiff;
pub mod masking;
pub mod need;
pub mod pipeline;
pub mod raster;
pub mod report;
pub mod traveltime;
pub mod zonal;

pub use error::{Error, Result};
pub use masking::BoolMask;
pub use need::{NeedParams, NeedRaster, RegionalNeedRaster};
pub use pipeline::{run_pipeline, PipelineConfig, RunManifest};
pub use raster::{Crs, Extent, GeoTransform, RasterGrid, ResampleMethod};
