#![allow(dead_code)]

use std::path::{Path, PathBuf};

use healthgap::raster::cell_size_meters;
use healthgap::{Crs, GeoTransform, RasterGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const NODATA: f64 = -9999.0;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn utm() -> Crs {
    Crs::Projected("EPSG:32643".into())
}

/// Projected grid with square cells of `cell` meters.
pub fn projected(rows: usize, cols: usize, cell: f64, values: Vec<f64>) -> RasterGrid {
    let t = GeoTransform::new(500_000.0, 3_000_000.0, cell, cell).unwrap();
    RasterGrid::new(rows, cols, t, utm(), NODATA, values).unwrap()
}

pub fn geographic(rows: usize, cols: usize, origin: (f64, f64), pixel: f64, values: Vec<f64>) -> RasterGrid {
    let t = GeoTransform::new(origin.0, origin.1, pixel, pixel).unwrap();
    RasterGrid::new(rows, cols, t, Crs::Geographic, NODATA, values).unwrap()
}

pub fn like(grid: &RasterGrid, values: Vec<f64>) -> RasterGrid {
    RasterGrid::new(grid.rows(), grid.cols(), *grid.transform(), grid.crs().clone(), NODATA, values).unwrap()
}

/// Random f32-exact values in `[0, hi)` with the given nodata fraction.
pub fn random_values(rng: &mut ChaCha8Rng, n: usize, hi: f64, nodata_frac: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if rng.random::<f64>() < nodata_frac {
                NODATA
            } else {
                (rng.random::<f64>() * hi) as f32 as f64
            }
        })
        .collect()
}

/// Direct disk enumeration around every cell with plain summation.
pub fn brute_disk_sum(grid: &RasterGrid, radius_km: f64) -> Vec<f64> {
    let (rows, cols) = (grid.rows(), grid.cols());
    let r = radius_km * 1000.0;
    let sizes: Vec<(f64, f64)> = (0..rows).map(|q| cell_size_meters(grid, q).unwrap()).collect();
    let mut out = vec![NODATA; rows * cols];
    for pr in 0..rows {
        for pc in 0..cols {
            if grid.value(pr, pc).is_none() {
                continue;
            }
            let mut sum = 0.0;
            for qr in 0..rows {
                let (ew, ns) = sizes[qr];
                let dy = (qr as f64 - pr as f64) * ns;
                if dy.abs() > r {
                    continue;
                }
                for qc in 0..cols {
                    let dx = (qc as f64 - pc as f64) * ew;
                    if dx * dx + dy * dy <= r * r {
                        if let Some(v) = grid.value(qr, qc) {
                            sum += v;
                        }
                    }
                }
            }
            out[pr * cols + pc] = sum;
        }
    }
    out
}

/// Nearest-rank percentile after a full sort. `None` when nothing is eligible.
pub fn sorted_percentile(values: &[f64], p: f64, exclude_zeros: bool) -> Option<f64> {
    let mut v: Vec<f64> = values
        .iter()
        .copied()
        .filter(|&x| x != NODATA && !(exclude_zeros && x == 0.0))
        .collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    let mut rank = ((p * n as f64) / 100.0).ceil() as usize;
    rank = rank.clamp(1, n);
    Some(v[rank - 1])
}

/// Shortest paths by repeated linear scan for the closest unsettled cell,
/// on a projected grid with square `cell`-meter cells. `NODATA` friction is
/// impassable.
pub fn scan_dijkstra(friction: &[f64], rows: usize, cols: usize, cell: f64, seeds: &[usize]) -> Vec<f64> {
    let n = rows * cols;
    let diag = (cell * cell + cell * cell).sqrt();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    for &s in seeds {
        if friction[s] != NODATA {
            dist[s] = 0.0;
        }
    }
    loop {
        let mut best = None;
        for i in 0..n {
            if !done[i] && dist[i].is_finite() && best.is_none_or(|b: usize| dist[i] < dist[b]) {
                best = Some(i);
            }
        }
        let Some(u) = best else { break };
        done[u] = true;
        let (r, c) = ((u / cols) as i64, (u % cols) as i64);
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= rows as i64 || nc >= cols as i64 {
                    continue;
                }
                let v = (nr * cols as i64 + nc) as usize;
                if done[v] || friction[v] == NODATA {
                    continue;
                }
                let len = if dr != 0 && dc != 0 { diag } else { cell };
                let cand = dist[u] + len * (friction[u] + friction[v]) / 2.0;
                if cand < dist[v] {
                    dist[v] = cand;
                }
            }
        }
    }
    dist
}

/// Component sizes of 8-connected 1-cells, found by depth-first search,
/// listed in order of each component's first row-major cell.
pub fn flood_fill(ones: &[bool], rows: usize, cols: usize) -> Vec<Vec<usize>> {
    let mut label = vec![usize::MAX; rows * cols];
    let mut comps = Vec::new();
    for s in 0..rows * cols {
        if !ones[s] || label[s] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut members = Vec::new();
        let mut stack = vec![s];
        label[s] = id;
        while let Some(i) = stack.pop() {
            members.push(i);
            let (r, c) = (i / cols, i % cols);
            for nr in r.saturating_sub(1)..=(r + 1).min(rows - 1) {
                for nc in c.saturating_sub(1)..=(c + 1).min(cols - 1) {
                    let j = nr * cols + nc;
                    if ones[j] && label[j] == usize::MAX {
                        label[j] = id;
                        stack.push(j);
                    }
                }
            }
        }
        members.sort_unstable();
        comps.push(members);
    }
    comps
}

/// Winding number of a closed ring around a point.
pub fn winding(ring: &[(f64, f64)], x: f64, y: f64) -> i32 {
    let mut w = 0;
    for k in 0..ring.len() {
        let (x0, y0) = ring[k];
        let (x1, y1) = ring[(k + 1) % ring.len()];
        let side = (x1 - x0) * (y - y0) - (x - x0) * (y1 - y0);
        if y0 <= y && y1 > y && side > 0.0 {
            w += 1;
        } else if y0 > y && y1 <= y && side < 0.0 {
            w -= 1;
        }
    }
    w
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_healthgap"))
}

pub fn healthgap(args: &[&str]) -> std::process::Output {
    std::process::Command::new(bin())
        .args(args)
        .output()
        .expect("spawn healthgap")
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}
