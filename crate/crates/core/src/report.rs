//! CSV rankings, GeoJSON cluster points and PNG quicklooks.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::clusters::Cluster;
use crate::error::{Error, Result};
use crate::masking::BoolMask;
use crate::raster::RasterGrid;
use crate::zonal::RegionSummary;

pub type Rgb = [u8; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct ColorRamp {
    stops: Vec<(f64, Rgb)>,
    pub nodata_color: Rgb,
    pub mask_color: Option<Rgb>,
}

impl ColorRamp {
    /// Stops must start at 0, end at 1 and increase strictly.
    pub fn new(stops: Vec<(f64, Rgb)>, nodata_color: Rgb, mask_color: Option<Rgb>) -> Result<Self> {
        let ok = stops.len() >= 2
            && stops.first().map(|s| s.0) == Some(0.0)
            && stops.last().map(|s| s.0) == Some(1.0)
            && stops.windows(2).all(|w| w[0].0 < w[1].0);
        if !ok {
            return Err(Error::InvalidParameter(
                "color ramp stops must rise strictly from 0 to 1".into(),
            ));
        }
        Ok(ColorRamp {
            stops,
            nodata_color,
            mask_color,
        })
    }

    /// Dark blue through green to yellow.
    pub fn need() -> Self {
        ColorRamp {
            stops: vec![
                (0.0, [68, 1, 84]),
                (0.25, [59, 82, 139]),
                (0.5, [33, 145, 140]),
                (0.75, [94, 201, 98]),
                (1.0, [253, 231, 37]),
            ],
            nodata_color: [255, 255, 255],
            mask_color: Some([228, 26, 28]),
        }
    }

    pub fn stops(&self) -> &[(f64, Rgb)] {
        &self.stops
    }

    /// Color at fraction `t` in [0, 1], linearly interpolated per channel.
    pub fn color_at(&self, t: f64) -> Rgb {
        let t = t.clamp(0.0, 1.0);
        let k = self.stops.partition_point(|s| s.0 <= t);
        if k >= self.stops.len() {
            return self.stops[self.stops.len() - 1].1;
        }
        let (t0, c0) = self.stops[k - 1];
        let (t1, c1) = self.stops[k];
        let f = (t - t0) / (t1 - t0);
        let mut out = [0u8; 3];
        for ch in 0..3 {
            let a = c0[ch] as f64;
            let b = c1[ch] as f64;
            out[ch] = (a + (b - a) * f).round().clamp(0.0, 255.0) as u8;
        }
        out
    }
}

/// `%g`-style formatting with up to `digits` significant digits. Exponents
/// use Rust notation (`1.5e8`).
pub fn format_significant(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent in scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        let mantissa = trim_fraction(mantissa);
        format!("{mantissa}e{exp}")
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_fraction(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Header `rank,region_id,name,mean_need,pixel_count`; regions without data
/// leave rank and mean empty.
pub fn write_region_csv(summaries: &[RegionSummary], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let write = || -> std::result::Result<(), Box<dyn std::error::Error>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)?;
        w.write_record(["rank", "region_id", "name", "mean_need", "pixel_count"])?;
        for s in summaries {
            w.write_record([
                s.rank.map(|r| r.to_string()).unwrap_or_default(),
                s.region_id.clone(),
                s.name.clone(),
                s.mean_need.map(|m| format_significant(m, 6)).unwrap_or_default(),
                s.pixel_count.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    write().map_err(|e| Error::output(path, e))
}

/// RFC 7946 FeatureCollection with one Point per cluster centroid.
pub fn clusters_geojson(clusters: &[Cluster]) -> serde_json::Value {
    let features: Vec<_> = clusters
        .iter()
        .map(|c| {
            json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [c.centroid.0, c.centroid.1]},
                "properties": {
                    "id": c.id,
                    "pixel_count": c.pixel_count,
                    "bbox": [c.bbox.min_x, c.bbox.min_y, c.bbox.max_x, c.bbox.max_y],
                },
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

pub fn export_clusters_geojson(clusters: &[Cluster], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(&clusters_geojson(clusters)).map_err(|e| Error::output(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::output(path, e))
}

/// Sidecar holding the value range a PNG was stretched over.
pub fn range_sidecar_path(png_path: &Path) -> PathBuf {
    png_path.with_extension("range.txt")
}

/// Min-max stretched RGB image, one pixel per cell. Returns the `(min, max)`
/// range used, or `None` when the layer has no valid cells.
pub fn render_rgb(layer: &RasterGrid, ramp: &ColorRamp, overlay: Option<&BoolMask>) -> Result<(Vec<u8>, Option<(f64, f64)>)> {
    if let Some(m) = overlay {
        layer.ensure_same_grid(m.grid(), "render overlay")?;
    }
    let range = layer.valid_values().fold(None, |acc: Option<(f64, f64)>, v| {
        Some(acc.map_or((v, v), |(lo, hi)| (lo.min(v), hi.max(v))))
    });
    let mut rgb = Vec::with_capacity(layer.len() * 3);
    for (i, &v) in layer.values().iter().enumerate() {
        let color = if let (Some(m), Some(mask_color)) = (overlay, ramp.mask_color) {
            if m.state(i) == Some(true) {
                Some(mask_color)
            } else {
                None
            }
        } else {
            None
        };
        let color = color.unwrap_or_else(|| match (layer.is_nodata(v), range) {
            (true, _) | (false, None) => ramp.nodata_color,
            (false, Some((lo, hi))) => {
                let t = if hi > lo { (v - lo) / (hi - lo) } else { 1.0 };
                ramp.color_at(t)
            }
        });
        rgb.extend_from_slice(&color);
    }
    Ok((rgb, range))
}

/// Writes an 8-bit RGB PNG and its `.range.txt` sidecar.
pub fn render_png(layer: &RasterGrid, ramp: &ColorRamp, overlay: Option<&BoolMask>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (rgb, range) = render_rgb(layer, ramp, overlay)?;
    let width = u32::try_from(layer.cols()).map_err(|_| Error::InvalidParameter("layer too wide for PNG".into()))?;
    let height = u32::try_from(layer.rows()).map_err(|_| Error::InvalidParameter("layer too tall for PNG".into()))?;

    let file = File::create(path).map_err(|e| Error::output(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width, height);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    encoder.set_compression(png::Compression::Balanced);
    let mut writer = encoder.write_header().map_err(|e| Error::output(path, e))?;
    writer.write_image_data(&rgb).map_err(|e| Error::output(path, e))?;
    writer.finish().map_err(|e| Error::output(path, e))?;

    let sidecar = range_sidecar_path(path);
    let text = match range {
        Some((lo, hi)) => format!("min={lo}\nmax={hi}\n"),
        None => "min=\nmax=\n".to_string(),
    };
    let mut f = File::create(&sidecar).map_err(|e| Error::output(&sidecar, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::output(&sidecar, e))
}
