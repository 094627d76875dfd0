//! 8-connected components of a mask, reported as georeferenced clusters.

use std::collections::VecDeque;

use serde::Serialize;

use crate::masking::BoolMask;

/// Bounding box of member cell centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CenterBounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cluster {
    /// 1-based, in row-major order of each cluster's first cell.
    pub id: usize,
    pub pixel_count: usize,
    /// Mean of member cell centers, `(x, y)` (lon/lat on geographic grids).
    pub centroid: (f64, f64),
    pub bbox: CenterBounds,
}

const NEIGHBORS: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Labels 8-connected groups of 1-cells by breadth-first flood fill.
pub fn connected_components(mask: &BoolMask) -> Vec<Cluster> {
    let grid = mask.grid();
    let (rows, cols) = (grid.rows(), grid.cols());
    let t = grid.transform();
    let mut seen = vec![false; rows * cols];
    let mut clusters = Vec::new();
    let mut queue = VecDeque::new();
    let mut members = Vec::new();

    for start in 0..rows * cols {
        if seen[start] || mask.state(start) != Some(true) {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        members.clear();
        while let Some(i) = queue.pop_front() {
            members.push(i);
            let (r, c) = ((i / cols) as isize, (i % cols) as isize);
            for (dr, dc) in NEIGHBORS {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= rows as isize || nc >= cols as isize {
                    continue;
                }
                let j = nr as usize * cols + nc as usize;
                if !seen[j] && mask.state(j) == Some(true) {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        members.sort_unstable();

        let (mut sx, mut sy) = (0.0, 0.0);
        let mut bbox = CenterBounds {
            min_x: f64::INFINITY,
            min_y: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            max_y: f64::NEG_INFINITY,
        };
        for &i in &members {
            let (x, y) = t.cell_center(i / cols, i % cols);
            sx += x;
            sy += y;
            bbox.min_x = bbox.min_x.min(x);
            bbox.min_y = bbox.min_y.min(y);
            bbox.max_x = bbox.max_x.max(x);
            bbox.max_y = bbox.max_y.max(y);
        }
        let n = members.len() as f64;
        clusters.push(Cluster {
            id: clusters.len() + 1,
            pixel_count: members.len(),
            centroid: (sx / n, sy / n),
            bbox,
        });
    }
    clusters
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{Crs, GeoTransform, RasterGrid, DEFAULT_NODATA};

    fn mask(rows: usize, cols: usize, ones: &[(usize, usize)]) -> BoolMask {
        let mut values = vec![0.0; rows * cols];
        for &(r, c) in ones {
            values[r * cols + c] = 1.0;
        }
        BoolMask::from_grid(
            RasterGrid::new(
                rows,
                cols,
                GeoTransform::new(100.0, 50.0, 2.0, 1.0).unwrap(),
                Crs::Geographic,
                DEFAULT_NODATA,
                values,
            )
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn single_cell() {
        let out = connected_components(&mask(3, 3, &[(1, 2)]));
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].pixel_count, 1);
        assert_eq!(out[0].centroid, (105.0, 48.5));
        assert_eq!(out[0].bbox.min_x, 105.0);
        assert_eq!(out[0].bbox.max_y, 48.5);
    }

    #[test]
    fn diagonal_touch_joins() {
        let out = connected_components(&mask(3, 3, &[(0, 0), (1, 1)]));
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].pixel_count, 2);
    }

    #[test]
    fn ids_follow_discovery_order() {
        let out = connected_components(&mask(4, 6, &[(0, 5), (3, 0), (3, 1)]));
        assert_eq!(out.len(), 2);
        assert_eq!((out[0].id, out[0].pixel_count), (1, 1));
        assert_eq!((out[1].id, out[1].pixel_count), (2, 2));
    }

    #[test]
    fn nodata_and_zero_cells_separate() {
        let mut m = mask(1, 3, &[(0, 0), (0, 2)]).into_grid().into_values();
        m[1] = DEFAULT_NODATA;
        let g = RasterGrid::new(
            1,
            3,
            GeoTransform::new(0.0, 0.0, 1.0, 1.0).unwrap(),
            Crs::Geographic,
            DEFAULT_NODATA,
            m,
        )
        .unwrap();
        assert_eq!(connected_components(&BoolMask::from_grid(g).unwrap()).len(), 2);
    }
}
