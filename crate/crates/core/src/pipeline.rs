//! Config-driven end-to-end run.
//!
//! Every intermediate layer is rounded to `f32` before it feeds the next
//! stage, which is the precision it is persisted at. A run is therefore
//! bit-identical to chaining the individual CLI subcommands over the files
//! each one writes.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clusters::connected_components;
use crate::error::{Error, Result};
use crate::geotiff::{read_geotiff, write_geotiff};
use crate::masking::{
    default_ntl_bands, intersect, mask_low_access, mask_low_ntl, mask_populated, ntl_categorize,
    underserved_by_band, NtlBand,
};
use crate::need::{
    eligible_count, focal_sum_disk, high_need_mask, need_per_pixel, percentile_threshold, NeedParams, NeedRaster,
};
use crate::raster::{align_to, Extent, GeoTransform, RasterGrid, ResampleMethod};
use crate::report::{export_clusters_geojson, render_png, write_region_csv, ColorRamp};
use crate::traveltime::{cost_distance, rasterize_facilities, read_facilities, FrictionSurface};
use crate::zonal::{read_regions_geojson, zonal_mean};

/// `inputs.travel_time` is either a raster path or the pair of inputs a
/// travel-time raster is computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TravelTimeInput {
    Raster(PathBuf),
    CostDistance(CostDistanceInputs),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostDistanceInputs {
    pub friction: PathBuf,
    pub facilities: PathBuf,
}

/// The friction and facilities may also be given as siblings of
/// `population` instead of nested under `travel_time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub travel_time: Option<TravelTimeInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub friction: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub facilities: Option<PathBuf>,
    pub population: PathBuf,
    pub ntl: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

/// Either a named preset (`"south-asia"`) or explicit bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExtentSpec {
    Preset(String),
    Bounds(Bounds),
}

impl ExtentSpec {
    pub fn resolve(&self) -> Result<Extent> {
        match self {
            ExtentSpec::Preset(name) if name == "south-asia" => Ok(Extent::SOUTH_ASIA),
            ExtentSpec::Preset(name) => Err(Error::Config(format!("unknown extent preset `{name}`"))),
            ExtentSpec::Bounds(b) => {
                if !(b.min_lon < b.max_lon && b.min_lat < b.max_lat) {
                    return Err(Error::Config(format!("empty analysis extent {b:?}")));
                }
                Ok(Extent {
                    min_x: b.min_lon,
                    min_y: b.min_lat,
                    max_x: b.max_lon,
                    max_y: b.max_lat,
                })
            }
        }
    }
}

impl std::str::FromStr for ExtentSpec {
    type Err = Error;

    /// `south-asia` or `min_lon,min_lat,max_lon,max_lat`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() == 4 {
            let n: Vec<f64> = parts
                .iter()
                .map(|p| p.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Config(format!("bad extent `{s}`")))?;
            return Ok(ExtentSpec::Bounds(Bounds {
                min_lon: n[0],
                min_lat: n[1],
                max_lon: n[2],
                max_lat: n[3],
            }));
        }
        Ok(ExtentSpec::Preset(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emit {
    Masks,
    Need,
    Regional,
    HighNeed,
    Clusters,
    RegionCsv,
    Png,
}

impl Emit {
    pub const ALL: [Emit; 7] = [
        Emit::Masks,
        Emit::Need,
        Emit::Regional,
        Emit::HighNeed,
        Emit::Clusters,
        Emit::RegionCsv,
        Emit::Png,
    ];
}

fn all_emits() -> BTreeSet<Emit> {
    Emit::ALL.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: Inputs,
    #[serde(default)]
    pub analysis_extent: Option<ExtentSpec>,
    #[serde(default)]
    pub params: NeedParams,
    #[serde(default)]
    pub regions: Option<PathBuf>,
    #[serde(default = "default_ntl_bands")]
    pub ntl_bands: Vec<NtlBand>,
    pub outputs: PathBuf,
    #[serde(default = "all_emits")]
    pub emit: BTreeSet<Emit>,
}

impl PipelineConfig {
    /// Minimal config with the default parameters and every output enabled.
    pub fn new(inputs: Inputs, outputs: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            inputs,
            analysis_extent: None,
            params: NeedParams::default(),
            regions: None,
            ntl_bands: default_ntl_bands(),
            outputs: outputs.into(),
            emit: all_emits(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a JSON config; relative paths resolve against its directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::input(path, e))?;
        let mut config = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_relative_to(base);
        Ok(config)
    }

    fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let inputs = &mut self.inputs;
        match &mut inputs.travel_time {
            Some(TravelTimeInput::Raster(p)) => fix(p),
            Some(TravelTimeInput::CostDistance(cd)) => {
                fix(&mut cd.friction);
                fix(&mut cd.facilities);
            }
            None => {}
        }
        for p in [&mut inputs.friction, &mut inputs.facilities, &mut self.regions]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        fix(&mut inputs.population);
        fix(&mut inputs.ntl);
        fix(&mut self.outputs);
    }

    pub fn validate(&self) -> Result<()> {
        self.travel_source()?;
        self.params.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.ntl_bands.is_empty() {
            return Err(Error::Config("ntl_bands must not be empty".into()));
        }
        for b in &self.ntl_bands {
            b.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Some(e) = &self.analysis_extent {
            e.resolve()?;
        }
        Ok(())
    }

    /// The travel-time source after folding the flat and nested forms.
    pub fn travel_source(&self) -> Result<TravelTimeInput> {
        let i = &self.inputs;
        match (&i.travel_time, &i.friction, &i.facilities) {
            (Some(t), None, None) => Ok(t.clone()),
            (None, Some(friction), Some(facilities)) => Ok(TravelTimeInput::CostDistance(CostDistanceInputs {
                friction: friction.clone(),
                facilities: facilities.clone(),
            })),
            (Some(_), _, _) => Err(Error::Config(
                "inputs.travel_time conflicts with inputs.friction/facilities; provide exactly one".into(),
            )),
            (None, None, None) => Err(Error::Config(
                "one of inputs.travel_time or inputs.friction + inputs.facilities is required".into(),
            )),
            (None, _, _) => Err(Error::Config(
                "inputs.friction and inputs.facilities must be given together".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputChecksum {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridInfo {
    pub rows: usize,
    pub cols: usize,
    pub transform: GeoTransform,
    pub crs: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PercentileInfo {
    pub p: f64,
    pub exclude_zeros: bool,
    /// The percentile is taken over the cropped analysis extent.
    pub scope: String,
    pub eligible_cells: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub millis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub started_unix_ms: u128,
    pub stages: Vec<StageTiming>,
}

/// Everything needed to reproduce a run. Only `timing` varies between
/// reruns with identical inputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: PipelineConfig,
    pub inputs: Vec<InputChecksum>,
    pub params: NeedParams,
    pub ntl_bands: Vec<NtlBand>,
    pub analysis_extent: Extent,
    pub grid: GridInfo,
    pub percentile: PercentileInfo,
    pub high_need_cells: usize,
    pub cluster_count: usize,
    pub regions_reported: Option<usize>,
    pub outputs: Vec<String>,
    pub timing: Timing,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::input(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

struct Stages {
    timings: Vec<StageTiming>,
}

impl Stages {
    fn run<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        self.timings.push(StageTiming {
            stage: name.to_string(),
            millis: start.elapsed().as_secs_f64() * 1000.0,
        });
        Ok(out)
    }
}

struct Emitter<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl Emitter<'_> {
    fn tif(&mut self, name: &str, grid: &RasterGrid) -> Result<()> {
        write_geotiff(grid, self.dir.join(name))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn record(&mut self, name: &str) {
        self.written.push(name.to_string());
    }
}

/// Runs the full analysis and writes the requested products plus
/// `manifest.json` into `config.outputs`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunManifest> {
    config.validate()?;
    let started_unix_ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    std::fs::create_dir_all(&config.outputs).map_err(|e| {
        Error::Config(format!("cannot create outputs directory {}: {e}", config.outputs.display()))
    })?;
    let params = config.params;
    let mut stages = Stages { timings: Vec::new() };
    let mut out = Emitter {
        dir: &config.outputs,
        written: Vec::new(),
    };

    let inputs = &config.inputs;
    let mut checksums = vec![
        InputChecksum {
            role: "population".into(),
            path: inputs.population.clone(),
            sha256: sha256_file(&inputs.population)?,
        },
        InputChecksum {
            role: "ntl".into(),
            path: inputs.ntl.clone(),
            sha256: sha256_file(&inputs.ntl)?,
        },
    ];
    let (pop, ntl) = stages.run("read", || Ok((read_geotiff(&inputs.population)?, read_geotiff(&inputs.ntl)?)))?;

    let travel = match config.travel_source()? {
        TravelTimeInput::Raster(path) => {
            checksums.push(InputChecksum {
                role: "travel_time".into(),
                path: path.clone(),
                sha256: sha256_file(&path)?,
            });
            stages.run("read_travel_time", || read_geotiff(&path))?
        }
        TravelTimeInput::CostDistance(CostDistanceInputs {
            friction: friction_path,
            facilities: facilities_path,
        }) => {
            checksums.push(InputChecksum {
                role: "friction".into(),
                path: friction_path.clone(),
                sha256: sha256_file(&friction_path)?,
            });
            checksums.push(InputChecksum {
                role: "facilities".into(),
                path: facilities_path.clone(),
                sha256: sha256_file(&facilities_path)?,
            });
            let travel = stages.run("cost_distance", || {
                let friction = FrictionSurface::new(read_geotiff(&friction_path)?)?;
                let facilities = read_facilities(&facilities_path)?;
                let seeds = rasterize_facilities(&facilities, friction.grid())?;
                Ok(cost_distance(&friction, &seeds)?.into_grid().narrowed_to_f32())
            })?;
            out.tif("travel_time.tif", &travel)?;
            travel
        }
    };

    let (reference, extent) = stages.run("align", || {
        for layer in [&ntl, &travel] {
            if !layer.crs().same_kind(pop.crs()) {
                return Err(Error::CrsMismatch {
                    source_kind: layer.crs().kind_name(),
                    reference_kind: pop.crs().kind_name(),
                });
            }
        }
        let mut extent = pop
            .extent()
            .intersection(&ntl.extent())
            .and_then(|e| e.intersection(&travel.extent()))
            .ok_or_else(|| Error::Config("input extents do not overlap".into()))?;
        if let Some(spec) = &config.analysis_extent {
            extent = extent
                .intersection(&spec.resolve()?)
                .ok_or_else(|| Error::Config("analysis extent does not overlap the inputs".into()))?;
        }
        Ok((pop.crop(&extent).map_err(|e| Error::Config(e.to_string()))?, extent))
    })?;
    let (ntl, travel) = stages.run("resample", || {
        Ok((
            align_to(&ntl, &reference, ResampleMethod::Nearest)?.narrowed_to_f32(),
            align_to(&travel, &reference, ResampleMethod::Bilinear)?.narrowed_to_f32(),
        ))
    })?;
    let pop = reference;

    let (access, populated, dark, combined) = stages.run("masks", || {
        let access = mask_low_access(&travel, params.travel_minutes)?;
        let populated = mask_populated(&pop, params.density_threshold)?;
        let dark = mask_low_ntl(&ntl, params.ntl_threshold)?;
        let combined = intersect(&[&access, &populated, &dark])?;
        Ok((access, populated, dark, combined))
    })?;
    if config.emit.contains(&Emit::Masks) {
        out.tif("mask_low_access.tif", access.grid())?;
        out.tif("mask_populated.tif", populated.grid())?;
        out.tif("mask_low_ntl.tif", dark.grid())?;
        out.tif("mask_combined.tif", combined.grid())?;
        out.tif("ntl_category.tif", &ntl_categorize(&ntl, &config.ntl_bands)?)?;
        for (k, band) in config.ntl_bands.iter().enumerate() {
            let layer = underserved_by_band(&access, &ntl, *band)?;
            out.tif(&format!("underserved_band_{}.tif", k + 1), layer.grid())?;
        }
    }

    let need = stages.run("need", || {
        NeedRaster::new(need_per_pixel(&pop, &combined)?.grid().narrowed_to_f32())
    })?;
    if config.emit.contains(&Emit::Need) {
        out.tif("need.tif", need.grid())?;
    }

    let regional = stages.run("focal_sum", || Ok(focal_sum_disk(&need, params.radius_km)?.narrowed_to_f32()))?;
    if config.emit.contains(&Emit::Regional) {
        out.tif("regional_need.tif", regional.grid())?;
    }

    let threshold = stages.run("percentile", || {
        percentile_threshold(&regional, params.percentile, params.exclude_zeros)
    })?;
    let high = high_need_mask(&regional, threshold);
    if config.emit.contains(&Emit::HighNeed) {
        out.tif("high_need.tif", high.grid())?;
    }

    let clusters = stages.run("clusters", || Ok(connected_components(&high)))?;
    if config.emit.contains(&Emit::Clusters) {
        export_clusters_geojson(&clusters, config.outputs.join("clusters.geojson"))?;
        out.record("clusters.geojson");
    }

    let mut regions_reported = None;
    if let Some(regions_path) = &config.regions {
        checksums.push(InputChecksum {
            role: "regions".into(),
            path: regions_path.clone(),
            sha256: sha256_file(regions_path)?,
        });
        let summaries = stages.run("zonal", || Ok(zonal_mean(&regional, &read_regions_geojson(regions_path)?)))?;
        regions_reported = Some(summaries.len());
        if config.emit.contains(&Emit::RegionCsv) {
            write_region_csv(&summaries, config.outputs.join("regions.csv"))?;
            out.record("regions.csv");
        }
    }

    if config.emit.contains(&Emit::Png) {
        stages.run("render", || {
            render_png(
                regional.grid(),
                &ColorRamp::need(),
                Some(&high),
                config.outputs.join("regional_need.png"),
            )
        })?;
        out.record("regional_need.png");
        out.record("regional_need.range.txt");
    }

    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        inputs: checksums,
        params,
        ntl_bands: config.ntl_bands.clone(),
        analysis_extent: extent,
        grid: GridInfo {
            rows: pop.rows(),
            cols: pop.cols(),
            transform: *pop.transform(),
            crs: pop.crs().to_string(),
        },
        percentile: PercentileInfo {
            p: params.percentile,
            exclude_zeros: params.exclude_zeros,
            scope: "analysis_extent".into(),
            eligible_cells: eligible_count(&regional, params.exclude_zeros),
            threshold,
        },
        high_need_cells: high.count_ones(),
        cluster_count: clusters.len(),
        regions_reported,
        outputs: out.written,
        timing: Timing {
            started_unix_ms,
            stages: stages.timings,
        },
    };
    let manifest_path = config.outputs.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::output(&manifest_path, e))?;
    text.push('\n');
    std::fs::write(&manifest_path, text).map_err(|e| Error::output(&manifest_path, e))?;
    Ok(manifest)
}
