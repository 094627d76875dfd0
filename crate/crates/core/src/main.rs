use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use healthgap::clusters::connected_components;
use healthgap::geotiff::{read_geotiff, write_geotiff};
use healthgap::masking::{
    default_ntl_bands, intersect, mask_low_access, mask_low_ntl, mask_populated, ntl_categorize,
    underserved_by_band, NtlBand,
};
use healthgap::need::{focal_sum_disk, high_need_mask, need_per_pixel, percentile_threshold};
use healthgap::pipeline::ExtentSpec;
use healthgap::raster::align_to;
use healthgap::report::{export_clusters_geojson, format_significant, render_png, write_region_csv, ColorRamp};
use healthgap::traveltime::{cost_distance, rasterize_facilities, read_facilities, FrictionSurface};
use healthgap::zonal::{read_regions_geojson, zonal_mean};
use healthgap::{
    run_pipeline, BoolMask, Error, NeedRaster, PipelineConfig, RegionalNeedRaster, ResampleMethod, Result,
};

const THREADS_VAR: &str = "HEALTHGAP_THREADS";

#[derive(Parser)]
#[command(name = "healthgap", version, about = "Map underserved populations from travel time, density and nighttime lights")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the whole analysis from a JSON config.
    Run(RunArgs),
    /// Travel time to the nearest facility over a friction surface.
    Traveltime {
        #[arg(long)]
        friction: PathBuf,
        /// Treat the friction raster as travel speed in km/h.
        #[arg(long)]
        speed: bool,
        #[arg(long)]
        facilities: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Threshold one or more layers and intersect the results.
    Mask(MaskArgs),
    /// Classify nighttime-light radiance into bands (1-based, 0 outside all bands).
    Categorize {
        #[arg(long)]
        ntl: PathBuf,
        /// Band as `low:high`; repeat for several. Defaults to 0:10, 10:20, 20:30.
        #[arg(long = "band", value_parser = parse_band)]
        bands: Vec<NtlBand>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Poor-access cells whose radiance falls in one band.
    Underserved {
        #[arg(long)]
        access: PathBuf,
        #[arg(long)]
        ntl: PathBuf,
        #[arg(long, value_parser = parse_band)]
        band: NtlBand,
        #[arg(long)]
        out: PathBuf,
    },
    /// Resample a raster onto the grid of another.
    Align {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        like: PathBuf,
        #[arg(long, default_value = "nearest")]
        method: ResampleMethod,
        #[arg(long)]
        out: PathBuf,
    },
    /// Population gated by a mask.
    Need {
        #[arg(long)]
        pop: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sum need over a disk around every cell.
    Aggregate {
        #[arg(long)]
        need: PathBuf,
        #[arg(long, default_value_t = 25.0)]
        radius_km: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a nearest-rank percentile of a raster.
    Percentile {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 99.0)]
        p: f64,
        #[command(flatten)]
        zeros: ZeroFlags,
        /// Also write the mask of cells strictly above the threshold.
        #[arg(long)]
        mask_out: Option<PathBuf>,
    },
    /// Mean regional need per polygon, ranked.
    Zones {
        #[arg(long)]
        regional: PathBuf,
        #[arg(long)]
        regions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Connected high-need clusters as GeoJSON points.
    Clusters {
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a raster to PNG with an optional mask overlay.
    Render {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        overlay: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
#[group(multiple = false)]
struct ZeroFlags {
    /// Leave zero cells out of the percentile (the default).
    #[arg(long)]
    exclude_zeros: bool,
    #[arg(long)]
    include_zeros: bool,
}

impl ZeroFlags {
    fn resolve(&self) -> Option<bool> {
        match (self.exclude_zeros, self.include_zeros) {
            (true, _) => Some(true),
            (_, true) => Some(false),
            _ => None,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    outputs: Option<PathBuf>,
    /// `south-asia` or `min_lon,min_lat,max_lon,max_lat`.
    #[arg(long)]
    extent: Option<String>,
    #[arg(long)]
    travel_minutes: Option<f64>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    ntl_threshold: Option<f64>,
    #[arg(long)]
    radius_km: Option<f64>,
    #[arg(long)]
    percentile: Option<f64>,
    #[command(flatten)]
    zeros: ZeroFlags,
}

#[derive(Args)]
struct MaskArgs {
    #[arg(long, requires = "minutes")]
    travel: Option<PathBuf>,
    #[arg(long)]
    minutes: Option<f64>,
    #[arg(long, requires = "density")]
    pop: Option<PathBuf>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long, requires = "th")]
    ntl: Option<PathBuf>,
    #[arg(long)]
    th: Option<f64>,
    /// Existing mask to intersect with; repeatable.
    #[arg(long = "mask")]
    masks: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_band(s: &str) -> std::result::Result<NtlBand, String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected low:high, got `{s}`"))?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad band low `{lo}`"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad band high `{hi}`"))?;
    NtlBand::new(lo, hi).map_err(|e| e.to_string())
}

fn read_mask(path: &PathBuf) -> Result<BoolMask> {
    BoolMask::from_grid(read_geotiff(path)?)
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_VAR} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn run(args: RunArgs) -> Result<()> {
    let mut config = PipelineConfig::from_file(&args.config)?;
    if let Some(dir) = args.outputs {
        config.outputs = dir;
    }
    if let Some(extent) = args.extent {
        config.analysis_extent = Some(extent.parse::<ExtentSpec>()?);
    }
    let p = &mut config.params;
    let overrides = [
        (&mut p.travel_minutes, args.travel_minutes),
        (&mut p.density_threshold, args.density),
        (&mut p.ntl_threshold, args.ntl_threshold),
        (&mut p.radius_km, args.radius_km),
        (&mut p.percentile, args.percentile),
    ];
    for (slot, value) in overrides {
        if let Some(v) = value {
            *slot = v;
        }
    }
    if let Some(ex) = args.zeros.resolve() {
        p.exclude_zeros = ex;
    }
    let manifest = run_pipeline(&config)?;
    println!(
        "threshold={} high_need_cells={} clusters={} outputs={}",
        format_significant(manifest.percentile.threshold, 10),
        manifest.high_need_cells,
        manifest.cluster_count,
        config.outputs.display()
    );
    Ok(())
}

fn mask(args: MaskArgs) -> Result<()> {
    let mut layers = Vec::new();
    if let (Some(path), Some(minutes)) = (&args.travel, args.minutes) {
        layers.push(mask_low_access(&read_geotiff(path)?, minutes)?);
    }
    if let (Some(path), Some(density)) = (&args.pop, args.density) {
        layers.push(mask_populated(&read_geotiff(path)?, density)?);
    }
    if let (Some(path), Some(th)) = (&args.ntl, args.th) {
        layers.push(mask_low_ntl(&read_geotiff(path)?, th)?);
    }
    for path in &args.masks {
        layers.push(read_mask(path)?);
    }
    if layers.is_empty() {
        return Err(Error::InvalidParameter(
            "give at least one of --travel, --pop, --ntl or --mask".into(),
        ));
    }
    let refs: Vec<&BoolMask> = layers.iter().collect();
    write_geotiff(intersect(&refs)?.grid(), &args.out)
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(args) => run(args),
        Command::Traveltime {
            friction,
            speed,
            facilities,
            out,
        } => {
            let grid = read_geotiff(&friction)?;
            let friction = if speed {
                FrictionSurface::from_speed_kmh(&grid)?
            } else {
                FrictionSurface::new(grid)?
            };
            let seeds = rasterize_facilities(&read_facilities(&facilities)?, friction.grid())?;
            write_geotiff(cost_distance(&friction, &seeds)?.grid(), out)
        }
        Command::Mask(args) => mask(args),
        Command::Categorize { ntl, bands, out } => {
            let bands = if bands.is_empty() { default_ntl_bands() } else { bands };
            write_geotiff(&ntl_categorize(&read_geotiff(&ntl)?, &bands)?, out)
        }
        Command::Underserved {
            access,
            ntl,
            band,
            out,
        } => write_geotiff(underserved_by_band(&read_mask(&access)?, &read_geotiff(&ntl)?, band)?.grid(), out),
        Command::Align {
            input,
            like,
            method,
            out,
        } => write_geotiff(&align_to(&read_geotiff(&input)?, &read_geotiff(&like)?, method)?, out),
        Command::Need { pop, mask, out } => {
            write_geotiff(need_per_pixel(&read_geotiff(&pop)?, &read_mask(&mask)?)?.grid(), out)
        }
        Command::Aggregate { need, radius_km, out } => {
            let need = NeedRaster::new(read_geotiff(&need)?)?;
            write_geotiff(focal_sum_disk(&need, radius_km)?.grid(), out)
        }
        Command::Percentile {
            input,
            p,
            zeros,
            mask_out,
        } => {
            let regional = RegionalNeedRaster::new(read_geotiff(&input)?)?;
            let threshold = percentile_threshold(&regional, p, zeros.resolve().unwrap_or(true))?;
            if let Some(path) = mask_out {
                write_geotiff(high_need_mask(&regional, threshold).grid(), path)?;
            }
            println!("{}", format_significant(threshold, 10));
            Ok(())
        }
        Command::Zones {
            regional,
            regions,
            out,
        } => {
            let regional = RegionalNeedRaster::new(read_geotiff(&regional)?)?;
            write_region_csv(&zonal_mean(&regional, &read_regions_geojson(&regions)?), out)
        }
        Command::Clusters { mask, out } => export_clusters_geojson(&connected_components(&read_mask(&mask)?), out),
        Command::Render { input, overlay, out } => {
            let overlay = overlay.as_ref().map(read_mask).transpose()?;
            render_png(&read_geotiff(&input)?, &ColorRamp::need(), overlay.as_ref(), out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|()| dispatch(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("healthgap: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
