//! End-to-end orchestration: simulate, beamform, bone map, enhance, score.
//!
//! Also defines the on-disk forms used by the command-line tool: RF sweeps
//! and paired training datasets in the `USBF1` container, display images as
//! 16-bit PGM, and metric reports as `key = value` text.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayD};
use rayon::prelude::*;

use crate::acquisition::{ArrayGeometry, ImagingGrid, PlaneWaveFrame, RfSweep};
use crate::beamformer::{
    compound, das_beamform, envelope_detect, lateral_fwhm, log_compress, BModeImage, BeamformedImage,
};
use crate::bone::{bone_probability_map, BoneProbabilityMap};
use crate::config::{PhantomSpec, PipelineConfig};
use crate::container::{Container, Metadata, NamedArray, Record, MAGIC};
use crate::enhancement::{beam_enhance, otsu_threshold, EnhancedImage};
use crate::metrics::{evaluate, make_background, MetricsReport, RoiMask};
use crate::raster::{decode_pgm, write_pgm};
use crate::simulator::{add_noise, required_samples, simulate_sweep};
use crate::{Error, Result};

/// File names written by [`run_pipeline`].
pub const SPW_BMODE_FILE: &str = "spw_bmode.pgm";
pub const CPWC_BMODE_FILE: &str = "cpwc_bmode.pgm";
pub const BPM_FILE: &str = "bpm.pgm";
pub const BEAM_FILE: &str = "beam.pgm";
pub const METRICS_FILE: &str = "metrics.txt";

pub const KIND_RF: &str = "rf_sweep";
pub const KIND_DATASET: &str = "dataset";

fn noise_seed(seed: u64, frame: usize) -> u64 {
    seed.wrapping_mul(0xD1B5_4A32_D192_ED03).wrapping_add(frame as u64)
}

/// Simulate the configured sweep over `phantom`, drawing speckle and channel
/// noise from `seed`.
pub fn acquire(config: &PipelineConfig, phantom: &PhantomSpec, seed: u64) -> Result<RfSweep> {
    let geometry = config.geometry.build()?;
    let angles = config.acquisition.angles(&geometry)?;
    let pulse = config.acquisition.pulse(&geometry)?;
    let phantom = phantom.build(seed)?;
    // The deepest grid row must lie inside the sampled window as well.
    let grid_depth = 2.0 * config.grid.z_max / geometry.sound_speed() * geometry.sampling_frequency();
    let n_samples = required_samples(&phantom, &geometry, &angles, &pulse).max(grid_depth.ceil() as usize + 2);
    let sweep = simulate_sweep(&phantom, &geometry, &angles, &pulse, n_samples)?;
    match config.acquisition.channel_snr_db {
        None => Ok(sweep),
        Some(snr) => {
            let frames = sweep
                .frames()
                .par_iter()
                .enumerate()
                .map(|(i, f)| add_noise(f, snr, noise_seed(seed, i)))
                .collect::<Result<Vec<_>>>()?;
            RfSweep::new(geometry, frames)
        }
    }
}

/// Single-angle and compounded reconstructions of one sweep.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    /// Beamformed RF of the transmission closest to normal incidence.
    pub spw: BeamformedImage,
    /// Coherent sum over all transmissions.
    pub cpwc: BeamformedImage,
}

/// Beamform every frame once; the center frame doubles as the single-angle image.
pub fn reconstruct(sweep: &RfSweep, config: &PipelineConfig) -> Result<Reconstruction> {
    let grid = config.grid.build()?;
    let apo = config.beamformer.apodization()?;
    let center = sweep.center_frame().steering_angle();
    let mut spw = None;
    let mut sum: Option<Array2<f64>> = None;
    for frame in sweep.frames() {
        let img = das_beamform(frame, sweep.geometry(), &grid, &apo)?;
        match &mut sum {
            Some(acc) => *acc += img.values(),
            None => sum = Some(img.values().clone()),
        }
        if frame.steering_angle() == center {
            spw = Some(img);
        }
    }
    let spw = spw.expect("center frame belongs to the sweep");
    let cpwc = BeamformedImage::new(grid, sum.expect("sweep is non-empty"))?;
    Ok(Reconstruction { spw, cpwc })
}

/// Foreground pixels within `half_width` of any polyline segment.
pub fn surface_foreground(grid: &ImagingGrid, polylines: &[Vec<(f64, f64)>], half_width: f64) -> Array2<bool> {
    let segments: Vec<((f64, f64), (f64, f64))> = polylines
        .iter()
        .flat_map(|p| p.windows(2).map(|w| (w[0], w[1])))
        .collect();
    let (rows, cols) = grid.shape();
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        let (x, z) = (grid.lateral()[c], grid.axial()[r]);
        segments.iter().any(|&(a, b)| point_segment_distance((x, z), a, b) <= half_width)
    })
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dz) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dz * dz;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dz) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dz)
}

/// ROI around the phantom surfaces, or around the Otsu-gated bone map when
/// the phantom has none.
pub fn build_roi(
    grid: &ImagingGrid,
    phantom: &PhantomSpec,
    bpm: &BoneProbabilityMap,
    config: &PipelineConfig,
) -> Result<RoiMask> {
    let mut foreground = surface_foreground(grid, &phantom.surface_polylines(), config.metrics.roi_half_width);
    if !foreground.iter().any(|&f| f) {
        foreground = otsu_threshold(bpm).1;
    }
    make_background(&foreground, config.metrics.dilation_radius)
}

/// Everything [`run`] produces.
#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub config_digest: String,
    pub seed: u64,
    pub angle_count: usize,
    pub spw_bmode: BModeImage,
    pub cpwc_bmode: BModeImage,
    pub bpm: BoneProbabilityMap,
    pub beam: EnhancedImage,
    pub roi: RoiMask,
    pub spw_report: MetricsReport,
    pub cpwc_report: MetricsReport,
    pub beam_report: MetricsReport,
    pub spw_fwhm: Option<f64>,
    pub cpwc_fwhm: Option<f64>,
}

/// Run all stages in memory. Errors name the failing stage.
pub fn run(config: &PipelineConfig, phantom: &PhantomSpec) -> Result<PipelineResult> {
    config.validate()?;
    let sweep = acquire(config, phantom, config.seed).map_err(|e| e.in_stage("simulate"))?;
    let recon = reconstruct(&sweep, config).map_err(|e| e.in_stage("beamform"))?;
    let dr = config.beamformer.dynamic_range_db;
    let (spw_env, cpwc_env) = envelope_detect(&recon.spw)
        .and_then(|s| Ok((s, envelope_detect(&recon.cpwc)?)))
        .map_err(|e| e.in_stage("beamform"))?;
    let spw_bmode = log_compress(&spw_env, dr).map_err(|e| e.in_stage("beamform"))?;
    let cpwc_bmode = log_compress(&cpwc_env, dr).map_err(|e| e.in_stage("beamform"))?;

    let bpm_config = config.bpm.build()?;
    let bpm = bone_probability_map(cpwc_bmode.values(), &bpm_config).map_err(|e| e.in_stage("bpm"))?;
    let weights = config.enhance.build()?;
    let beam = beam_enhance(cpwc_bmode.values(), &bpm, weights).map_err(|e| e.in_stage("enhance"))?;

    let metrics_config = config.metrics.build()?;
    let score = || -> Result<_> {
        let roi = build_roi(spw_bmode.grid(), phantom, &bpm, config)?;
        let target = beam.values();
        let spw_report = evaluate(spw_bmode.values(), Some(target), &roi, &metrics_config)?;
        let cpwc_report = evaluate(cpwc_bmode.values(), Some(target), &roi, &metrics_config)?;
        let beam_report = evaluate(target, None, &roi, &metrics_config)?;
        Ok((roi, spw_report, cpwc_report, beam_report))
    };
    let (roi, spw_report, cpwc_report, beam_report) = score().map_err(|e| e.in_stage("metrics"))?;

    Ok(PipelineResult {
        config_digest: config.digest(),
        seed: config.seed,
        angle_count: sweep.frames().len(),
        spw_fwhm: lateral_fwhm(&spw_env),
        cpwc_fwhm: lateral_fwhm(&cpwc_env),
        spw_bmode,
        cpwc_bmode,
        bpm,
        beam,
        roi,
        spw_report,
        cpwc_report,
        beam_report,
    })
}

fn write_report(out: &mut String, section: &str, report: &MetricsReport, fwhm: Option<Option<f64>>) {
    let _ = writeln!(out, "\n[{section}]");
    let _ = writeln!(out, "cr_db = {}", report.cr_db);
    let _ = writeln!(out, "snr_db = {}", report.snr_db);
    if let Some(s) = report.similarity {
        let _ = writeln!(out, "ssi = {}", s.ssi);
        let _ = writeln!(out, "ssim = {}", s.ssim);
        let _ = writeln!(out, "epi_percent = {}", s.epi_percent);
    }
    match fwhm {
        Some(Some(w)) => {
            let _ = writeln!(out, "lateral_fwhm_m = {w}");
        }
        Some(None) => {
            let _ = writeln!(out, "lateral_fwhm_m = none");
        }
        None => {}
    }
}

/// Line-oriented metrics report. Similarity scores compare each B-mode
/// image against the enhanced target.
pub fn format_metrics(result: &PipelineResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "config_digest = {}", result.config_digest);
    let _ = writeln!(out, "seed = {}", result.seed);
    let _ = writeln!(out, "angle_count = {}", result.angle_count);
    let fg = result.roi.foreground().iter().filter(|&&f| f).count();
    let bg = result.roi.background().iter().filter(|&&b| b).count();
    let _ = writeln!(out, "roi_foreground_pixels = {fg}");
    let _ = writeln!(out, "roi_background_pixels = {bg}");
    write_report(&mut out, "spw", &result.spw_report, Some(result.spw_fwhm));
    write_report(&mut out, "cpwc", &result.cpwc_report, Some(result.cpwc_fwhm));
    write_report(&mut out, "beam", &result.beam_report, None);
    out
}

/// Parse a report written by [`format_metrics`] into `(section, key, value)`
/// triples; keys before the first section get an empty section name.
pub fn parse_metrics(text: &str) -> Result<Vec<(String, String, String)>> {
    let mut section = String::new();
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.to_string();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        entries.push((section.clone(), k.trim().to_string(), v.trim().to_string()));
    }
    Ok(entries)
}

/// Run the pipeline and write its five output files into `out_dir`.
pub fn run_pipeline(config: &PipelineConfig, phantom: &PhantomSpec, out_dir: &Path) -> Result<PipelineResult> {
    let result = run(config, phantom)?;
    let write = || -> Result<()> {
        fs::create_dir_all(out_dir)?;
        write_pgm(&out_dir.join(SPW_BMODE_FILE), result.spw_bmode.values())?;
        write_pgm(&out_dir.join(CPWC_BMODE_FILE), result.cpwc_bmode.values())?;
        write_pgm(&out_dir.join(BPM_FILE), result.bpm.values())?;
        write_pgm(&out_dir.join(BEAM_FILE), &result.beam.clamped())?;
        fs::write(out_dir.join(METRICS_FILE), format_metrics(&result))?;
        Ok(())
    };
    write().map_err(|e| e.in_stage("write"))?;
    Ok(result)
}

fn geometry_metadata(geometry: &ArrayGeometry, meta: &mut Metadata) {
    meta.insert("element_count".into(), geometry.element_count().to_string());
    meta.insert("pitch".into(), geometry.pitch().to_string());
    meta.insert("center_frequency".into(), geometry.center_frequency().to_string());
    meta.insert("sampling_frequency".into(), geometry.sampling_frequency().to_string());
    meta.insert("sound_speed".into(), geometry.sound_speed().to_string());
}

fn meta_value<T: std::str::FromStr>(meta: &Metadata, key: &str) -> Result<T> {
    meta.get(key)
        .ok_or_else(|| Error::Config(format!("missing metadata key {key:?}")))?
        .parse()
        .map_err(|_| Error::Config(format!("metadata key {key:?} does not parse")))
}

fn geometry_from_metadata(meta: &Metadata) -> Result<ArrayGeometry> {
    ArrayGeometry::new(
        meta_value(meta, "element_count")?,
        meta_value(meta, "pitch")?,
        meta_value(meta, "center_frequency")?,
        meta_value(meta, "sampling_frequency")?,
        meta_value(meta, "sound_speed")?,
    )
}

fn base_header(kind: &str, geometry: &ArrayGeometry, config: &PipelineConfig) -> Metadata {
    let mut header = Metadata::new();
    header.insert("kind".into(), kind.into());
    header.insert("config_digest".into(), config.digest());
    header.insert("config".into(), config.to_toml());
    geometry_metadata(geometry, &mut header);
    header
}

/// RF sweep as a container: one record per transmission with its angle and
/// start time, holding a `[samples, elements]` array named `rf`.
pub fn sweep_to_container(sweep: &RfSweep, config: &PipelineConfig) -> Result<Container> {
    let header = base_header(KIND_RF, sweep.geometry(), config);
    let records = sweep
        .frames()
        .iter()
        .map(|f| {
            let mut metadata = Metadata::new();
            metadata.insert("steering_angle".into(), f.steering_angle().to_string());
            metadata.insert("t0".into(), f.t0().to_string());
            Ok(Record {
                metadata,
                arrays: vec![NamedArray::from_f64("rf", f.samples())?],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Container { header, records })
}

pub fn sweep_from_container(container: &Container) -> Result<RfSweep> {
    expect_kind(container, KIND_RF)?;
    let geometry = geometry_from_metadata(&container.header)?;
    let frames = container
        .records
        .iter()
        .map(|r| {
            PlaneWaveFrame::new(
                meta_value(&r.metadata, "steering_angle")?,
                r.require("rf")?.to_f64_2d()?,
                meta_value(&r.metadata, "t0")?,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    RfSweep::new(geometry, frames)
}

fn expect_kind(container: &Container, kind: &str) -> Result<()> {
    match container.header.get("kind") {
        Some(k) if k == kind => Ok(()),
        other => Err(Error::Config(format!("expected a {kind} container, found {other:?}"))),
    }
}

/// The `count` transmissions closest to normal incidence, in sweep order.
pub fn center_subset(sweep: &RfSweep, count: usize) -> Result<RfSweep> {
    let n = sweep.frames().len();
    if count == 0 || count > n {
        return Err(Error::invalid("angles", format!("need 1..={n} transmissions, got {count}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (&sweep.frames()[a], &sweep.frames()[b]);
        fa.steering_angle().abs().total_cmp(&fb.steering_angle().abs()).then(a.cmp(&b))
    });
    let mut keep: Vec<usize> = order[..count].to_vec();
    keep.sort_unstable();
    RfSweep::new(
        sweep.geometry().clone(),
        keep.into_iter().map(|i| sweep.frames()[i].clone()).collect(),
    )
}

/// Compounded B-mode image and envelope of every frame in `sweep`.
pub fn bmode_from_sweep(sweep: &RfSweep, config: &PipelineConfig) -> Result<(BModeImage, BeamformedImage)> {
    let grid = config.grid.build()?;
    let apo = config.beamformer.apodization()?;
    let images = sweep
        .frames()
        .iter()
        .map(|f| das_beamform(f, sweep.geometry(), &grid, &apo))
        .collect::<Result<Vec<_>>>()?;
    let envelope = envelope_detect(&compound(&images)?)?;
    Ok((log_compress(&envelope, config.beamformer.dynamic_range_db)?, envelope))
}

/// One training example: single-angle RF input, enhanced target, bone map
/// and ROI masks.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub index: usize,
    pub seed: u64,
    pub steering_angle: f64,
    pub t0: f64,
    pub spw_rf: Array2<f32>,
    pub beam: Array2<f32>,
    pub bpm: Array2<f32>,
    pub roi_foreground: Array2<bool>,
    pub roi_background: Array2<bool>,
}

impl DatasetRecord {
    fn to_record(&self) -> Result<Record> {
        let mut metadata = Metadata::new();
        metadata.insert("index".into(), self.index.to_string());
        metadata.insert("seed".into(), self.seed.to_string());
        metadata.insert("steering_angle".into(), self.steering_angle.to_string());
        metadata.insert("t0".into(), self.t0.to_string());
        let f32_array = |name: &str, a: &Array2<f32>| NamedArray::new(name, a.clone().into_dyn());
        Ok(Record {
            metadata,
            arrays: vec![
                f32_array("spw_rf", &self.spw_rf)?,
                f32_array("beam", &self.beam)?,
                f32_array("bpm", &self.bpm)?,
                NamedArray::from_mask("roi_fg", &self.roi_foreground)?,
                NamedArray::from_mask("roi_bg", &self.roi_background)?,
            ],
        })
    }

    fn from_record(record: &Record) -> Result<Self> {
        let f32_2d = |name: &str| -> Result<Array2<f32>> {
            let a: &ArrayD<f32> = record.require(name)?.data();
            a.clone()
                .into_dimensionality()
                .map_err(|_| Error::Shape(format!("{name} is not 2-D")))
        };
        let beam = f32_2d("beam")?;
        let bpm = f32_2d("bpm")?;
        let fg = f32_2d("roi_fg")?.mapv(|v| v != 0.0);
        let bg = f32_2d("roi_bg")?.mapv(|v| v != 0.0);
        if bpm.dim() != beam.dim() || fg.dim() != beam.dim() || bg.dim() != beam.dim() {
            return Err(Error::Shape("record image shapes differ".into()));
        }
        Ok(Self {
            index: meta_value(&record.metadata, "index")?,
            seed: meta_value(&record.metadata, "seed")?,
            steering_angle: meta_value(&record.metadata, "steering_angle")?,
            t0: meta_value(&record.metadata, "t0")?,
            spw_rf: f32_2d("spw_rf")?,
            beam,
            bpm,
            roi_foreground: fg,
            roi_background: bg,
        })
    }
}

/// A paired training set together with the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub geometry: ArrayGeometry,
    pub config_digest: String,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn to_container(&self, config: &PipelineConfig) -> Result<Container> {
        let mut header = base_header(KIND_DATASET, &self.geometry, config);
        header.insert("config_digest".into(), self.config_digest.clone());
        let records = self.records.iter().map(DatasetRecord::to_record).collect::<Result<Vec<_>>>()?;
        Ok(Container { header, records })
    }

    pub fn from_container(container: &Container) -> Result<Self> {
        expect_kind(container, KIND_DATASET)?;
        Ok(Self {
            geometry: geometry_from_metadata(&container.header)?,
            config_digest: meta_value(&container.header, "config_digest")?,
            records: container
                .records
                .iter()
                .map(DatasetRecord::from_record)
                .collect::<Result<Vec<_>>>()?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

fn dataset_record(config: &PipelineConfig, phantom: &PhantomSpec, index: usize) -> Result<DatasetRecord> {
    let mut local = config.clone();
    local.seed = config.seed.wrapping_add(index as u64);
    let result = run(&local, phantom)?;
    let sweep = acquire(&local, phantom, local.seed)?;
    let frame = sweep.center_frame();
    Ok(DatasetRecord {
        index,
        seed: local.seed,
        steering_angle: frame.steering_angle(),
        t0: frame.t0(),
        spw_rf: frame.samples().mapv(|v| v as f32),
        beam: result.beam.values().mapv(|v| v as f32),
        bpm: result.bpm.values().mapv(|v| v as f32),
        roi_foreground: result.roi.foreground().clone(),
        roi_background: result.roi.background().clone(),
    })
}

/// Build one record per phantom (record `i` uses seed `config.seed + i`)
/// and write them to `out_path`. Record order follows `phantoms`.
pub fn export_dataset(config: &PipelineConfig, phantoms: &[PhantomSpec], out_path: &Path) -> Result<Dataset> {
    if phantoms.is_empty() {
        return Err(Error::invalid("phantoms", "need at least one phantom"));
    }
    config.validate()?;
    let records = phantoms
        .par_iter()
        .enumerate()
        .map(|(i, p)| dataset_record(config, p, i).map_err(|e| Error::Config(format!("record {i}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let dataset = Dataset {
        geometry: config.geometry.build()?,
        config_digest: config.digest(),
        records,
    };
    dataset.to_container(config)?.save(out_path)?;
    Ok(dataset)
}

fn shape_list(record: &Record) -> String {
    record
        .arrays
        .iter()
        .map(|a| format!("{} {:?}", a.name(), a.shape()))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Human-readable summary of a container or PGM file.
pub fn inspect(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"P5") {
        let img = decode_pgm(&bytes)?;
        let (lo, hi) = crate::bone::min_max(&img);
        return Ok(format!(
            "format: PGM\nrows: {}\ncols: {}\nmin: {lo}\nmax: {hi}\n",
            img.nrows(),
            img.ncols()
        ));
    }
    let container = Container::decode(&bytes)?;
    let mut out = String::new();
    let _ = writeln!(out, "format: {} v{}", String::from_utf8_lossy(MAGIC), crate::container::VERSION);
    let kind = container.header.get("kind").map(String::as_str).unwrap_or("unknown");
    let _ = writeln!(out, "kind: {kind}");
    if let Some(d) = container.header.get("config_digest") {
        let _ = writeln!(out, "config_digest: {d}");
    }
    if let Ok(g) = geometry_from_metadata(&container.header) {
        let _ = writeln!(
            out,
            "geometry: {} elements, pitch {} m, center frequency {} Hz, sampling {} Hz, sound speed {} m/s",
            g.element_count(),
            g.pitch(),
            g.center_frequency(),
            g.sampling_frequency(),
            g.sound_speed()
        );
    }
    let _ = writeln!(out, "records: {}", container.records.len());
    match kind {
        KIND_RF => {
            let _ = writeln!(out, "angles: {}", container.records.len());
            if let Some(rf) = container.records.first().and_then(|r| r.array("rf")) {
                let _ = writeln!(out, "samples: {} x {} elements", rf.shape()[0], rf.shape().get(1).copied().unwrap_or(1));
            }
            let angles: Vec<f64> = container
                .records
                .iter()
                .filter_map(|r| r.metadata.get("steering_angle")?.parse().ok())
                .collect();
            if let (Some(lo), Some(hi)) = (
                angles.iter().cloned().reduce(f64::min),
                angles.iter().cloned().reduce(f64::max),
            ) {
                let _ = writeln!(out, "angle_range_deg: {:.3} .. {:.3}", lo.to_degrees(), hi.to_degrees());
            }
        }
        _ => {
            for (i, r) in container.records.iter().enumerate() {
                let seed = r.metadata.get("seed").map(|s| format!(" seed {s}:")).unwrap_or_default();
                let _ = writeln!(out, "record {i}:{seed} {}", shape_list(r));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ScattererSpec, SurfaceSpec};

    #[test]
    fn segment_distance() {
        assert_eq!(point_segment_distance((0.0, 1.0), (-1.0, 0.0), (1.0, 0.0)), 1.0);
        assert_eq!(point_segment_distance((3.0, 4.0), (0.0, 0.0), (0.0, 0.0)), 5.0);
        assert_eq!(point_segment_distance((2.0, 0.0), (-1.0, 0.0), (1.0, 0.0)), 1.0);
    }

    #[test]
    fn surface_band_covers_line() {
        let grid = ImagingGrid::uniform(-1e-3, 1e-3, 21, 0.0, 2e-3, 21).unwrap();
        let fg = surface_foreground(&grid, &[vec![(-1e-3, 1e-3), (1e-3, 1e-3)]], 0.15e-3);
        // rows 9..=11 lie within 0.15 mm of z = 1 mm on a 0.1 mm grid
        for ((r, _), &f) in fg.indexed_iter() {
            assert_eq!(f, (9..=11).contains(&r), "row {r}");
        }
    }

    #[test]
    fn center_subset_picks_smallest_angles() {
        let g = crate::acquisition::make_linear_array(4, 1e-3, 1e6, 4e6, 1540.0).unwrap();
        let frames = [-0.2, -0.1, 0.0, 0.1, 0.2]
            .iter()
            .map(|&a| PlaneWaveFrame::new(a, Array2::zeros((8, 4)), 0.0).unwrap())
            .collect();
        let sweep = RfSweep::new(g, frames).unwrap();
        assert_eq!(center_subset(&sweep, 1).unwrap().angles(), vec![0.0]);
        assert_eq!(center_subset(&sweep, 3).unwrap().angles(), vec![-0.1, 0.0, 0.1]);
        assert!(center_subset(&sweep, 6).is_err());
    }

    #[test]
    fn metrics_text_parses() {
        let text = "a = 1\n\n[spw]\ncr_db = 2.5\n";
        let entries = parse_metrics(text).unwrap();
        assert_eq!(entries[1], ("spw".into(), "cr_db".into(), "2.5".into()));
        assert!(parse_metrics("nonsense").is_err());
    }

    fn tiny_config() -> PipelineConfig {
        let mut c = PipelineConfig::default();
        c.geometry.element_count = 32;
        c.acquisition.angle_count = 3;
        c.grid = crate::config::GridSection {
            x_min: -3e-3,
            x_max: 3e-3,
            nx: 32,
            z_min: 8e-3,
            z_max: 12e-3,
            nz: 64,
        };
        c.metrics.dilation_radius = 3;
        c
    }

    fn tiny_phantom() -> PhantomSpec {
        PhantomSpec {
            scatterer: vec![ScattererSpec { x: 0.0, z: 10e-3, reflectivity: 1.0 }],
            surface: vec![SurfaceSpec {
                points: vec![[-3e-3, 11e-3], [3e-3, 11e-3]],
                reflectivity: 2.0,
                angular_falloff_deg: 10.0,
            }],
            speckle: vec![],
        }
    }

    #[test]
    fn rf_container_round_trip() {
        let c = tiny_config();
        let sweep = acquire(&c, &tiny_phantom(), 0).unwrap();
        let container = sweep_to_container(&sweep, &c).unwrap();
        let back = sweep_from_container(&Container::decode(&container.encode().unwrap()).unwrap()).unwrap();
        assert_eq!(back.angles(), sweep.angles());
        assert_eq!(back.geometry(), sweep.geometry());
        let a = &sweep.frames()[1].samples().mapv(|v| v as f32 as f64);
        assert_eq!(back.frames()[1].samples(), a);
    }

    #[test]
    fn stage_errors_name_the_stage() {
        let mut c = tiny_config();
        c.grid.nz = 4;
        let err = run(&c, &tiny_phantom()).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "beamform", .. }), "{err}");
    }
}
