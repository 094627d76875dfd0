//! Region polygons and per-region mean need.

use std::cmp::Ordering;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::need::RegionalNeedRaster;

/// Closed ring of `(x, y)` vertices; the closing vertex may be repeated.
pub type Ring = Vec<(f64, f64)>;

/// One polygon: exterior ring followed by holes.
pub type Polygon = Vec<Ring>;

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: String,
    pub name: String,
    pub polygons: Vec<Polygon>,
}

impl Region {
    fn bbox(&self) -> Option<(f64, f64, f64, f64)> {
        let mut pts = self.polygons.iter().flatten().flatten();
        let first = pts.next()?;
        Some(pts.fold((first.0, first.1, first.0, first.1), |(x0, y0, x1, y1), p| {
            (x0.min(p.0), y0.min(p.1), x1.max(p.0), y1.max(p.1))
        }))
    }

    /// Even-odd crossing test over every ring, so holes and disjoint parts
    /// both fall out of the parity count.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let mut inside = false;
        for ring in self.polygons.iter().flatten() {
            let n = ring.len();
            if n < 3 {
                continue;
            }
            let mut j = n - 1;
            for i in 0..n {
                let (xi, yi) = ring[i];
                let (xj, yj) = ring[j];
                if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
                    inside = !inside;
                }
                j = i;
            }
        }
        inside
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionSummary {
    pub region_id: String,
    pub name: String,
    /// `None` when no valid cell center falls inside the region.
    pub mean_need: Option<f64>,
    pub pixel_count: usize,
    /// 1-based rank among regions with data, ascending by mean.
    pub rank: Option<usize>,
}

pub fn read_regions_geojson(path: impl AsRef<Path>) -> Result<Vec<Region>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::input(path, e))?;
    parse_regions_geojson(&text).map_err(|e| match e {
        Error::Geometry(reason) => Error::input(path, format!("invalid geometry: {reason}")),
        other => other,
    })
}

/// Parses a FeatureCollection of Polygon/MultiPolygon features. Each
/// feature needs an `id` property (string or number); `name` is optional.
pub fn parse_regions_geojson(text: &str) -> Result<Vec<Region>> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::Geometry(format!("not JSON: {e}")))?;
    let features = match doc.get("type").and_then(Value::as_str) {
        Some("FeatureCollection") => doc
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Geometry("FeatureCollection without features array".into()))?
            .clone(),
        Some("Feature") => vec![doc.clone()],
        other => return Err(Error::Geometry(format!("expected FeatureCollection, got {other:?}"))),
    };
    features.iter().enumerate().map(|(i, f)| parse_region(i, f)).collect()
}

fn parse_region(index: usize, feature: &Value) -> Result<Region> {
    let props = feature.get("properties");
    let id = match props.and_then(|p| p.get("id")) {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => return Err(Error::Geometry(format!("feature {index} has no `id` property"))),
    };
    let name = props
        .and_then(|p| p.get("name"))
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let geometry = feature
        .get("geometry")
        .ok_or_else(|| Error::Geometry(format!("feature `{id}` has no geometry")))?;
    let coords = geometry
        .get("coordinates")
        .ok_or_else(|| Error::Geometry(format!("feature `{id}` geometry has no coordinates")))?;
    let polygons = match geometry.get("type").and_then(Value::as_str) {
        Some("Polygon") => vec![parse_polygon(coords, &id)?],
        Some("MultiPolygon") => coords
            .as_array()
            .ok_or_else(|| Error::Geometry(format!("feature `{id}`: MultiPolygon coordinates must be an array")))?
            .iter()
            .map(|p| parse_polygon(p, &id))
            .collect::<Result<_>>()?,
        other => {
            return Err(Error::Geometry(format!(
                "feature `{id}`: unsupported geometry type {other:?}"
            )))
        }
    };
    Ok(Region { id, name, polygons })
}

fn parse_polygon(value: &Value, id: &str) -> Result<Polygon> {
    let bad = || Error::Geometry(format!("feature `{id}`: malformed polygon coordinates"));
    value
        .as_array()
        .ok_or_else(bad)?
        .iter()
        .map(|ring| {
            let ring: Ring = ring
                .as_array()
                .ok_or_else(bad)?
                .iter()
                .map(|pt| {
                    let xy = pt.as_array().filter(|a| a.len() >= 2).ok_or_else(bad)?;
                    match (xy[0].as_f64(), xy[1].as_f64()) {
                        (Some(x), Some(y)) if x.is_finite() && y.is_finite() => Ok((x, y)),
                        _ => Err(bad()),
                    }
                })
                .collect::<Result<_>>()?;
            if ring.len() < 3 {
                return Err(Error::Geometry(format!("feature `{id}`: ring with fewer than 3 vertices")));
            }
            Ok(ring)
        })
        .collect()
}

/// Mean regional need over the valid cells whose centers fall inside each
/// region, sorted ascending by mean (ties by region id). Regions without
/// coverage come last, unranked.
pub fn zonal_mean(regional: &RegionalNeedRaster, regions: &[Region]) -> Vec<RegionSummary> {
    let grid = regional.grid();
    let t = *grid.transform();
    let mut summaries: Vec<RegionSummary> = regions
        .par_iter()
        .map(|region| {
            let (mut sum, mut count) = (0.0f64, 0usize);
            if let Some((x0, y0, x1, y1)) = region.bbox() {
                let (fc0, fr0) = t.fractional_position(x0, y1);
                let (fc1, fr1) = t.fractional_position(x1, y0);
                let clamp = |v: f64, n: usize| v.max(0.0).min(n as f64) as usize;
                let (c_lo, c_hi) = (clamp(fc0.floor(), grid.cols()), clamp(fc1.ceil(), grid.cols()));
                let (r_lo, r_hi) = (clamp(fr0.floor(), grid.rows()), clamp(fr1.ceil(), grid.rows()));
                for r in r_lo..r_hi {
                    for c in c_lo..c_hi {
                        let Some(v) = grid.value(r, c) else { continue };
                        let (x, y) = t.cell_center(r, c);
                        if region.contains(x, y) {
                            sum += v;
                            count += 1;
                        }
                    }
                }
            }
            RegionSummary {
                region_id: region.id.clone(),
                name: region.name.clone(),
                mean_need: (count > 0).then(|| sum / count as f64),
                pixel_count: count,
                rank: None,
            }
        })
        .collect();

    summaries.sort_by(|a, b| match (a.mean_need, b.mean_need) {
        (Some(x), Some(y)) => x.total_cmp(&y).then_with(|| a.region_id.cmp(&b.region_id)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.region_id.cmp(&b.region_id),
    });
    for (i, s) in summaries.iter_mut().filter(|s| s.mean_need.is_some()).enumerate() {
        s.rank = Some(i + 1);
    }
    summaries
}
