mod common;

use std::path::Path;

use common::*;
use healthgap::geotiff::{read_geotiff, write_geotiff};
use healthgap::RasterGrid;
use serde_json::json;

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    /// 30x30 geographic inputs where a central block qualifies.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let n = 30;
        let mk = |f: &dyn Fn(usize, usize) -> f64| {
            geographic(n, n, (80.0, 20.0), 0.05, (0..n * n).map(|i| f(i / n, i % n)).collect())
        };
        let block = |r: usize, c: usize| (10..20).contains(&r) && (10..20).contains(&c);
        let travel = mk(&|r, c| if block(r, c) { 40.0 + (r + c) as f64 } else { 5.0 });
        let pop = mk(&|r, c| 60.0 + (r * 7 % 13) as f64 + c as f64);
        let ntl = mk(&|r, c| if block(r, c) { 3.0 } else { 25.0 });
        for (name, g) in [("travel.tif", &travel), ("pop.tif", &pop), ("ntl.tif", &ntl)] {
            write_geotiff(g, dir.path().join(name)).unwrap();
        }
        Fixture { dir }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_str().unwrap().to_string()
    }

    fn config(&self, extra: serde_json::Value) -> String {
        let mut c = json!({
            "inputs": {"travel_time": "travel.tif", "population": "pop.tif", "ntl": "ntl.tif"},
            "outputs": "out"
        });
        for (k, v) in extra.as_object().unwrap() {
            c[k] = v.clone();
        }
        let path = self.dir.path().join("config.json");
        std::fs::write(&path, c.to_string()).unwrap();
        path.to_str().unwrap().to_string()
    }
}

fn code(out: &std::process::Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn run_writes_products_and_manifest() {
    let fx = Fixture::new();
    let cfg = fx.config(json!({}));
    let out = healthgap(&["run", "--config", &cfg]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for name in [
        "mask_low_access.tif",
        "mask_populated.tif",
        "mask_low_ntl.tif",
        "mask_combined.tif",
        "ntl_category.tif",
        "underserved_band_1.tif",
        "need.tif",
        "regional_need.tif",
        "high_need.tif",
        "clusters.geojson",
        "regional_need.png",
        "regional_need.range.txt",
        "manifest.json",
    ] {
        assert!(Path::new(&fx.path(&format!("out/{name}"))).exists(), "{name}");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(fx.path("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["params"]["travel_minutes"], 30.0);
    assert_eq!(manifest["percentile"]["scope"], "analysis_extent");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 3);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["timing"]["stages"].as_array().unwrap().len() >= 5);
    let combined = read_geotiff(fx.path("out/mask_combined.tif")).unwrap();
    assert_eq!(combined.values().iter().filter(|&&v| v == 1.0).count(), 100);
}

#[test]
fn flags_override_config() {
    let fx = Fixture::new();
    let cfg = fx.config(json!({"params": {"travel_minutes": 10.0}}));
    let out = healthgap(&["run", "--config", &cfg, "--travel-minutes", "50", "--outputs", &fx.path("o2")]);
    assert_eq!(code(&out), 0);
    let combined = read_geotiff(fx.path("o2/mask_combined.tif")).unwrap();
    // travel in the block is 40 + r + c, so > 50 keeps r + c > 10
    let want = (10..20)
        .flat_map(|r| (10..20).map(move |c| (r, c)))
        .filter(|&(r, c)| 40 + r + c > 50)
        .count();
    assert_eq!(combined.values().iter().filter(|&&v| v == 1.0).count(), want);
}

#[test]
fn conflicting_travel_inputs_exit_2() {
    let fx = Fixture::new();
    let cfg = fx.config(json!({"inputs": {
        "travel_time": "travel.tif", "friction": "f.tif", "facilities": "h.csv",
        "population": "pop.tif", "ntl": "ntl.tif"}}));
    let out = healthgap(&["run", "--config", &cfg]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("travel_time") && err.contains("friction"), "{err}");
}

#[test]
fn unknown_config_field_exits_2() {
    let fx = Fixture::new();
    let cfg = fx.config(json!({"bogus": true}));
    assert_eq!(code(&healthgap(&["run", "--config", &cfg])), 2);
}

#[test]
fn missing_input_exits_3() {
    let fx = Fixture::new();
    let cfg = fx.config(json!({"inputs": {"travel_time": "nope.tif", "population": "pop.tif", "ntl": "ntl.tif"}}));
    assert_eq!(code(&healthgap(&["run", "--config", &cfg])), 3);
    assert_eq!(code(&healthgap(&["run", "--config", &fx.path("absent.json")])), 3);
}

#[test]
fn empty_eligible_set_exits_4() {
    let fx = Fixture::new();
    let cfg = fx.config(json!({"params": {"travel_minutes": 1000.0}}));
    let out = healthgap(&["run", "--config", &cfg]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!Path::new(&fx.path("out/manifest.json")).exists());
}

#[test]
fn bad_thread_count_exits_2() {
    let fx = Fixture::new();
    let out = std::process::Command::new(bin())
        .env("HEALTHGAP_THREADS", "zero")
        .args(["percentile", "--in", &fx.path("pop.tif"), "--p", "50"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    let ok = std::process::Command::new(bin())
        .env("HEALTHGAP_THREADS", "2")
        .args(["percentile", "--in", &fx.path("pop.tif"), "--p", "50"])
        .output()
        .unwrap();
    assert_eq!(code(&ok), 0);
}

#[test]
fn percentile_prints_ten_significant_digits() {
    let fx = Fixture::new();
    let g = geographic(1, 3, (0.0, 0.0), 1.0, vec![1.0 / 3.0, 0.0, 2.0]);
    write_geotiff(&g, fx.path("r.tif")).unwrap();
    let out = healthgap(&["percentile", "--in", &fx.path("r.tif"), "--p", "50", "--exclude-zeros"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "0.3333333433\n");
    let out = healthgap(&["percentile", "--in", &fx.path("r.tif"), "--p", "50", "--include-zeros"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "0.3333333433\n");
    let out = healthgap(&["percentile", "--in", &fx.path("r.tif"), "--p", "34", "--include-zeros"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "0.3333333433\n");
    let out = healthgap(&["percentile", "--in", &fx.path("r.tif"), "--p", "33", "--include-zeros"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "0\n");
}

#[test]
fn align_then_mask_matches_passthrough() {
    let fx = Fixture::new();
    let out = healthgap(&[
        "align",
        "--in",
        &fx.path("travel.tif"),
        "--like",
        &fx.path("pop.tif"),
        "--method",
        "bilinear",
        "--out",
        &fx.path("aligned.tif"),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        std::fs::read(fx.path("aligned.tif")).unwrap(),
        std::fs::read(fx.path("travel.tif")).unwrap()
    );
    let out = healthgap(&["mask", "--out", &fx.path("m.tif")]);
    assert_eq!(code(&out), 2);
}

#[test]
fn geometry_mismatch_exits_2() {
    let fx = Fixture::new();
    let small: RasterGrid = geographic(4, 4, (80.0, 20.0), 0.05, vec![1.0; 16]);
    write_geotiff(&small, fx.path("small.tif")).unwrap();
    healthgap(&["mask", "--pop", &fx.path("pop.tif"), "--density", "50", "--out", &fx.path("a.tif")]);
    let out = healthgap(&["need", "--pop", &fx.path("small.tif"), "--mask", &fx.path("a.tif"), "--out", &fx.path("n.tif")]);
    assert_eq!(code(&out), 2);
}

#[test]
fn omitted_stages_leave_earlier_outputs_unchanged() {
    let fx = Fixture::new();
    let cfg = fx.config(json!({}));
    assert_eq!(code(&healthgap(&["run", "--config", &cfg])), 0);
    let cfg = fx.config(json!({"emit": ["masks", "need"], "outputs": "partial"}));
    assert_eq!(code(&healthgap(&["run", "--config", &cfg])), 0);
    for name in ["mask_combined.tif", "mask_low_ntl.tif", "need.tif", "ntl_category.tif"] {
        assert_eq!(
            std::fs::read(fx.path(&format!("out/{name}"))).unwrap(),
            std::fs::read(fx.path(&format!("partial/{name}"))).unwrap(),
            "{name}"
        );
    }
    assert!(!Path::new(&fx.path("partial/regional_need.tif")).exists());
    assert!(Path::new(&fx.path("partial/manifest.json")).exists());
}

#[test]
fn extent_preset_and_bounds() {
    let fx = Fixture::new();
    let cfg = fx.config(json!({}));
    let out = healthgap(&["run", "--config", &cfg, "--extent", "80.0,19.0,80.75,20.0", "--outputs", &fx.path("crop")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let need = read_geotiff(fx.path("crop/need.tif")).unwrap();
    assert_eq!((need.rows(), need.cols()), (20, 15));
    let out = healthgap(&["run", "--config", &cfg, "--extent", "south-asia", "--outputs", &fx.path("sa")]);
    assert_eq!(code(&out), 0);
    let out = healthgap(&["run", "--config", &cfg, "--extent", "0,0,1,1", "--outputs", &fx.path("none")]);
    assert_eq!(code(&out), 2);
}

#[test]
fn traveltime_with_geojson_facilities() {
    let fx = Fixture::new();
    let f = geographic(10, 10, (80.0, 20.0), 0.05, vec![0.001; 100]);
    write_geotiff(&f, fx.path("f.tif")).unwrap();
    std::fs::write(
        fx.path("h.geojson"),
        json!({"type": "FeatureCollection", "features": [
            {"type": "Feature", "properties": {"name": "clinic"},
             "geometry": {"type": "Point", "coordinates": [80.125, 19.875]}}]})
        .to_string(),
    )
    .unwrap();
    let out = healthgap(&["traveltime", "--friction", &fx.path("f.tif"), "--facilities", &fx.path("h.geojson"), "--out", &fx.path("t.tif")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let t = read_geotiff(fx.path("t.tif")).unwrap();
    assert_eq!(t.get(2, 2), 0.0);
    assert!(t.get(0, 0) > 0.0);
    std::fs::write(fx.path("far.csv"), "lon,lat\n0,0\n").unwrap();
    let out = healthgap(&["traveltime", "--friction", &fx.path("f.tif"), "--facilities", &fx.path("far.csv"), "--out", &fx.path("t2.tif")]);
    assert_eq!(code(&out), 2);
}
