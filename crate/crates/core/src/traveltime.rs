//! Travel-time synthesis from a friction surface and facility locations.
//!
//! Travel time is the multi-source least-cost distance over the 8-connected
//! cell graph. Moving between adjacent cells `a` and `b` costs
//! `length(a, b) · (friction(a) + friction(b)) / 2` minutes, where the length
//! is the east-west or north-south cell size for axis moves and the
//! hypotenuse of both for diagonals, taken at the mean latitude of the pair.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::masking::BoolMask;
use crate::raster::{geographic_ew_meters, Crs, RasterGrid, METERS_PER_DEGREE};

/// Converts a travel speed to traversal cost in minutes per meter.
pub fn minutes_per_meter(speed_kmh: f64) -> f64 {
    60.0 / (speed_kmh * 1000.0)
}

/// Per-cell traversal cost in minutes per meter; nodata cells are impassable.
#[derive(Debug, Clone, PartialEq)]
pub struct FrictionSurface(RasterGrid);

impl FrictionSurface {
    pub fn new(grid: RasterGrid) -> Result<Self> {
        if let Some(v) = grid.valid_values().find(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "friction must be positive and finite, found {v}"
            )));
        }
        Ok(FrictionSurface(grid))
    }

    /// Builds a friction surface from a speed raster in km/h.
    pub fn from_speed_kmh(speed: &RasterGrid) -> Result<Self> {
        Self::new(speed.map_valid(minutes_per_meter))
    }

    pub fn grid(&self) -> &RasterGrid {
        &self.0
    }

    pub fn into_grid(self) -> RasterGrid {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Facility {
    pub x: f64,
    pub y: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FacilitySet {
    pub points: Vec<Facility>,
}

impl FacilitySet {
    pub fn new(points: Vec<Facility>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "facility `{}` has non-finite coordinates",
                p.label
            )));
        }
        Ok(FacilitySet { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Reads facilities from GeoJSON points (`.geojson`/`.json`) or from CSV
/// with a `lon,lat,name` header.
pub fn read_facilities(path: impl AsRef<Path>) -> Result<FacilitySet> {
    let path = path.as_ref();
    let is_json = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("geojson") || e.eq_ignore_ascii_case("json"));
    let points = if is_json {
        let text = std::fs::read_to_string(path).map_err(|e| Error::input(path, e))?;
        parse_facilities_geojson(&text).map_err(|reason| Error::input(path, reason))?
    } else {
        read_facilities_csv(path)?
    };
    FacilitySet::new(points)
}

fn read_facilities_csv(path: &Path) -> Result<Vec<Facility>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::input(path, e))?;
    let headers = reader.headers().map_err(|e| Error::input(path, e))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::input(path, format!("missing `{name}` column")))
    };
    let (lon, lat) = (column("lon")?, column("lat")?);
    let name = headers.iter().position(|h| h.trim().eq_ignore_ascii_case("name"));
    let mut points = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::input(path, e))?;
        let number = |i: usize| -> Result<f64> {
            let field = record.get(i).unwrap_or("").trim();
            field
                .parse::<f64>()
                .map_err(|_| Error::input(path, format!("row {}: bad coordinate `{field}`", line + 2)))
        };
        points.push(Facility {
            x: number(lon)?,
            y: number(lat)?,
            label: name.and_then(|i| record.get(i)).unwrap_or("").to_string(),
        });
    }
    Ok(points)
}

fn parse_facilities_geojson(text: &str) -> std::result::Result<Vec<Facility>, String> {
    let doc: Value = serde_json::from_str(text).map_err(|e| format!("not JSON: {e}"))?;
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or("expected a FeatureCollection")?;
    features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let geom = f.get("geometry").ok_or(format!("feature {i} has no geometry"))?;
            if geom.get("type").and_then(Value::as_str) != Some("Point") {
                return Err(format!("feature {i} is not a Point"));
            }
            let xy = geom
                .get("coordinates")
                .and_then(Value::as_array)
                .filter(|a| a.len() >= 2)
                .ok_or(format!("feature {i} has malformed coordinates"))?;
            let (Some(x), Some(y)) = (xy[0].as_f64(), xy[1].as_f64()) else {
                return Err(format!("feature {i} has non-numeric coordinates"));
            };
            let label = f
                .get("properties")
                .and_then(|p| p.get("name"))
                .and_then(Value::as_str)
                .unwrap_or("")
                .to_string();
            Ok(Facility { x, y, label })
        })
        .collect()
}

/// Marks every cell containing at least one facility. A point on a shared
/// edge belongs to the cell to its right / below (floor of the fractional
/// position).
pub fn rasterize_facilities(facilities: &FacilitySet, reference: &RasterGrid) -> Result<BoolMask> {
    let (rows, cols) = (reference.rows(), reference.cols());
    let mut values = vec![0.0; rows * cols];
    let mut hits = 0usize;
    for p in &facilities.points {
        let (fc, fr) = reference.transform().fractional_position(p.x, p.y);
        let (c, r) = (fc.floor(), fr.floor());
        if c >= 0.0 && r >= 0.0 && c < cols as f64 && r < rows as f64 {
            values[r as usize * cols + c as usize] = 1.0;
            hits += 1;
        }
    }
    if hits == 0 {
        return Err(Error::NoFacilityInExtent);
    }
    Ok(BoolMask::from_states(reference, values.iter().map(|&v| Some(v == 1.0))))
}

/// Minutes from the nearest seed; nodata where unreachable or impassable.
#[derive(Debug, Clone, PartialEq)]
pub struct TravelTimeRaster(RasterGrid);

impl TravelTimeRaster {
    pub fn grid(&self) -> &RasterGrid {
        &self.0
    }

    pub fn into_grid(self) -> RasterGrid {
        self.0
    }
}

/// Edge lengths in meters for the 8-connected moves of a grid.
pub(crate) struct EdgeLengths {
    /// East-west step within row `r`.
    pub ew: Vec<f64>,
    pub ns: f64,
    /// Diagonal step between rows `r` and `r + 1`.
    pub diagonal: Vec<f64>,
}

impl EdgeLengths {
    pub(crate) fn for_grid(grid: &RasterGrid) -> Self {
        let t = grid.transform();
        let rows = grid.rows();
        let (ew, ns, ew_between): (Vec<f64>, f64, Vec<f64>) = match grid.crs() {
            Crs::Projected(_) => (
                vec![t.pixel_width; rows],
                t.pixel_height,
                vec![t.pixel_width; rows.saturating_sub(1)],
            ),
            Crs::Geographic => {
                let lat = |r: usize| t.cell_center(r, 0).1;
                (
                    (0..rows).map(|r| geographic_ew_meters(t.pixel_width, lat(r))).collect(),
                    t.pixel_height * METERS_PER_DEGREE,
                    (0..rows.saturating_sub(1))
                        .map(|r| geographic_ew_meters(t.pixel_width, (lat(r) + lat(r + 1)) / 2.0))
                        .collect(),
                )
            }
        };
        let diagonal = ew_between.iter().map(|&e| (e * e + ns * ns).sqrt()).collect();
        EdgeLengths { ew, ns, diagonal }
    }

    /// Length of the move from row `r` by `dr` rows and `dc` columns.
    #[inline]
    pub(crate) fn length(&self, r: usize, dr: isize, dc: isize) -> f64 {
        match (dr, dc) {
            (0, _) => self.ew[r],
            (_, 0) => self.ns,
            (-1, _) => self.diagonal[r - 1],
            _ => self.diagonal[r],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    cost: f64,
    index: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const MOVES: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Exact multi-source shortest paths (Dijkstra with a binary heap).
pub fn cost_distance(friction: &FrictionSurface, seeds: &BoolMask) -> Result<TravelTimeRaster> {
    let grid = friction.grid();
    grid.ensure_same_grid(seeds.grid(), "cost_distance seeds")?;
    let (rows, cols) = (grid.rows(), grid.cols());
    let lengths = EdgeLengths::for_grid(grid);
    let cost_of = |i: usize| grid.value(i / cols, i % cols);

    let mut dist = vec![f64::INFINITY; rows * cols];
    let mut heap = BinaryHeap::new();
    for i in 0..rows * cols {
        if seeds.state(i) == Some(true) && cost_of(i).is_some() {
            dist[i] = 0.0;
            heap.push(Entry { cost: 0.0, index: i });
        }
    }
    if heap.is_empty() {
        return Err(Error::NoPassableSeed);
    }

    while let Some(Entry { cost, index }) = heap.pop() {
        if cost > dist[index] {
            continue;
        }
        let (r, c) = (index / cols, index % cols);
        let Some(fa) = cost_of(index) else { continue };
        for (dr, dc) in MOVES {
            let (nr, nc) = (r as isize + dr, c as isize + dc);
            if nr < 0 || nc < 0 || nr >= rows as isize || nc >= cols as isize {
                continue;
            }
            let j = nr as usize * cols + nc as usize;
            let Some(fb) = cost_of(j) else { continue };
            let next = cost + lengths.length(r, dr, dc) * (fa + fb) / 2.0;
            if next < dist[j] {
                dist[j] = next;
                heap.push(Entry { cost: next, index: j });
            }
        }
    }

    let nodata = grid.nodata();
    let values = dist
        .into_iter()
        .map(|d| if d.is_finite() { d } else { nodata })
        .collect();
    Ok(TravelTimeRaster(grid.derive(nodata, values)))
}
