use std::fs;

use usbf_core::config::{PhantomSpec, PipelineConfig};
use usbf_core::container::Container;
use usbf_core::pipeline::{self, Dataset};
use usbf_core::raster::read_pgm;
use usbf_core::Error;

fn point_phantom() -> PhantomSpec {
    PhantomSpec::from_toml("[[scatterer]]\nx = 0.0\nz = 0.02\nreflectivity = 1.0\n").unwrap()
}

fn report_value(entries: &[(String, String, String)], section: &str, key: &str) -> String {
    entries
        .iter()
        .find(|(s, k, _)| s == section && k == key)
        .map(|(_, _, v)| v.clone())
        .unwrap_or_else(|| panic!("[{section}] {key} missing"))
}

#[test]
fn default_config_point_target_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = PipelineConfig::default();
    pipeline::run_pipeline(&config, &point_phantom(), dir.path()).unwrap();

    for name in [pipeline::SPW_BMODE_FILE, pipeline::CPWC_BMODE_FILE, pipeline::BPM_FILE, pipeline::BEAM_FILE] {
        let img = read_pgm(&dir.path().join(name)).unwrap();
        assert_eq!(img.dim(), (config.grid.nz, config.grid.nx), "{name}");
    }
    let text = fs::read_to_string(dir.path().join(pipeline::METRICS_FILE)).unwrap();
    let entries = pipeline::parse_metrics(&text).unwrap();
    assert_eq!(report_value(&entries, "", "angle_count"), "73");
    let spw: f64 = report_value(&entries, "spw", "lateral_fwhm_m").parse().unwrap();
    let cpwc: f64 = report_value(&entries, "cpwc", "lateral_fwhm_m").parse().unwrap();
    assert!(cpwc < spw, "compounded FWHM {cpwc} not below single-angle {spw}");
}

fn small_config() -> PipelineConfig {
    let mut config = PipelineConfig::default();
    config.acquisition.angle_count = 3;
    config.grid.x_min = -4e-3;
    config.grid.x_max = 4e-3;
    config.grid.nx = 40;
    config.grid.z_min = 14e-3;
    config.grid.z_max = 22e-3;
    config.grid.nz = 64;
    config
}

fn speckle_phantom() -> PhantomSpec {
    PhantomSpec::from_toml(
        r#"
[[surface]]
points = [[-0.005, 0.017], [0.005, 0.019]]
reflectivity = 10.0
angular_falloff_deg = 8.0

[[speckle]]
x_range = [-0.005, 0.005]
z_range = [0.014, 0.022]
count = 150
amplitude = 0.1
"#,
    )
    .unwrap()
}

#[test]
fn eight_phantoms_give_eight_distinct_records() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("set.usbf");
    let config = small_config();
    let phantoms = vec![speckle_phantom(); 8];
    let written = pipeline::export_dataset(&config, &phantoms, &path).unwrap();

    let read = Dataset::load(&path).unwrap();
    assert_eq!(read, written);
    assert_eq!(read.config_digest, config.digest());
    let seeds: Vec<u64> = read.records.iter().map(|r| r.seed).collect();
    assert_eq!(seeds, (0..8).collect::<Vec<_>>());
    for (i, a) in read.records.iter().enumerate() {
        assert_eq!(a.index, i);
        for b in &read.records[i + 1..] {
            assert_ne!(a.spw_rf, b.spw_rf);
        }
    }
}

#[test]
fn single_record_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.usbf");
    pipeline::export_dataset(&small_config(), &[speckle_phantom()], &path).unwrap();
    let bytes = fs::read(&path).unwrap();
    let container = Container::decode(&bytes).unwrap();
    assert_eq!(container.records.len(), 1);
    assert_eq!(container.encode().unwrap(), bytes);

    let summary = pipeline::inspect(&path).unwrap();
    assert!(summary.contains("records: 1"), "{summary}");
    assert!(summary.contains("geometry: 128 elements"), "{summary}");
    assert!(summary.contains(&small_config().digest()), "{summary}");
}

#[test]
fn unknown_version_and_truncation_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.usbf");
    pipeline::export_dataset(&small_config(), &[speckle_phantom()], &path).unwrap();
    let bytes = fs::read(&path).unwrap();

    let mut future = bytes.clone();
    future[5..7].copy_from_slice(&9u16.to_le_bytes());
    fs::write(&path, &future).unwrap();
    let err = pipeline::inspect(&path).unwrap_err();
    assert!(err.to_string().contains("unsupported format version 9"), "{err}");

    let cut = bytes.len() / 2;
    fs::write(&path, &bytes[..cut]).unwrap();
    match pipeline::inspect(&path) {
        Err(Error::Format { offset, .. }) => assert_eq!(offset, cut as u64),
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn export_needs_a_phantom() {
    let dir = tempfile::tempdir().unwrap();
    assert!(pipeline::export_dataset(&small_config(), &[], &dir.path().join("x.usbf")).is_err());
}
