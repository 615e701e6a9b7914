//! TOML pipeline configuration and phantom description files.
//!
//! Every section has defaults, so an empty file is a valid configuration.
//! Unknown keys are rejected to catch typos.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acquisition::{linear_angle_sweep, steering_angle_set, ArrayGeometry, ImagingGrid};
use crate::beamformer::{ApodizationSpec, Window};
use crate::bone::{BpmConfig, FilterBankConfig};
use crate::enhancement::AttentionWeights;
use crate::metrics::MetricsConfig;
use crate::simulator::{speckle_scatterers, Phantom, PointScatterer, PulseModel, SpecularSurface};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub element_count: usize,
    pub pitch: f64,
    pub center_frequency: f64,
    pub sampling_frequency: f64,
    pub sound_speed: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            element_count: 128,
            pitch: 0.3e-3,
            center_frequency: 7.6e6,
            sampling_frequency: 31.25e6,
            sound_speed: 1540.0,
        }
    }
}

impl GeometrySection {
    pub fn build(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::new(
            self.element_count,
            self.pitch,
            self.center_frequency,
            self.sampling_frequency,
            self.sound_speed,
        )
    }
}

/// How steering angles are spaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleSpacing {
    /// Evenly spread over `[-max_angle_deg, max_angle_deg]`.
    Span,
    /// Multiples of `λ / aperture` around zero.
    Wavelength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionSection {
    pub angle_count: usize,
    pub spacing: AngleSpacing,
    pub max_angle_deg: f64,
    pub fractional_bandwidth: f64,
    /// Per-frame channel SNR in dB; no noise when absent.
    pub channel_snr_db: Option<f64>,
}

impl Default for AcquisitionSection {
    fn default() -> Self {
        Self {
            angle_count: 73,
            spacing: AngleSpacing::Span,
            max_angle_deg: 18.0,
            fractional_bandwidth: 0.67,
            channel_snr_db: None,
        }
    }
}

impl AcquisitionSection {
    pub fn angles(&self, geometry: &ArrayGeometry) -> Result<Vec<f64>> {
        match self.spacing {
            AngleSpacing::Span => linear_angle_sweep(self.angle_count, self.max_angle_deg.to_radians()),
            AngleSpacing::Wavelength => steering_angle_set(geometry, self.angle_count),
        }
    }

    pub fn pulse(&self, geometry: &ArrayGeometry) -> Result<PulseModel> {
        PulseModel::new(geometry.center_frequency(), self.fractional_bandwidth)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub z_min: f64,
    pub z_max: f64,
    pub nz: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            x_min: -9.6e-3,
            x_max: 9.6e-3,
            nx: 128,
            z_min: 5e-3,
            z_max: 30e-3,
            nz: 512,
        }
    }
}

impl GridSection {
    pub fn build(&self) -> Result<ImagingGrid> {
        ImagingGrid::uniform(self.x_min, self.x_max, self.nx, self.z_min, self.z_max, self.nz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Rectangular,
    Hann,
    Tukey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamformerSection {
    pub window: WindowKind,
    pub tukey_ratio: f64,
    pub f_number: f64,
    pub dynamic_range_db: f64,
}

impl Default for BeamformerSection {
    fn default() -> Self {
        Self {
            window: WindowKind::Hann,
            tukey_ratio: 0.5,
            f_number: 1.5,
            dynamic_range_db: 60.0,
        }
    }
}

impl BeamformerSection {
    pub fn apodization(&self) -> Result<ApodizationSpec> {
        let window = match self.window {
            WindowKind::Rectangular => Window::Rectangular,
            WindowKind::Hann => Window::Hann,
            WindowKind::Tukey => Window::Tukey(self.tukey_ratio),
        };
        ApodizationSpec::new(window, self.f_number)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BpmSection {
    pub wavelengths: Vec<f64>,
    pub sigma_on_f: f64,
    pub tau_fraction: f64,
    pub shadow_sigma: f64,
}

impl Default for BpmSection {
    fn default() -> Self {
        let d = BpmConfig::default();
        Self {
            wavelengths: d.filter_bank.wavelengths().to_vec(),
            sigma_on_f: d.filter_bank.sigma_on_f(),
            tau_fraction: d.tau_fraction,
            shadow_sigma: d.shadow_sigma,
        }
    }
}

impl BpmSection {
    pub fn build(&self) -> Result<BpmConfig> {
        let config = BpmConfig {
            filter_bank: FilterBankConfig::new(self.wavelengths.clone(), self.sigma_on_f)?,
            tau_fraction: self.tau_fraction,
            shadow_sigma: self.shadow_sigma,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnhanceSection {
    /// `[alpha, beta, gamma]`.
    pub weights: [f64; 3],
}

impl Default for EnhanceSection {
    fn default() -> Self {
        let w = AttentionWeights::default();
        Self {
            weights: [w.alpha(), w.beta(), w.gamma()],
        }
    }
}

impl EnhanceSection {
    pub fn build(&self) -> Result<AttentionWeights> {
        let [a, b, g] = self.weights;
        AttentionWeights::new(a, b, g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub ssi_bins: usize,
    pub dilation_radius: usize,
    /// Foreground half-width around phantom surfaces, meters.
    pub roi_half_width: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        let d = MetricsConfig::default();
        Self {
            ssi_bins: d.ssi_bins,
            dilation_radius: d.dilation_radius,
            roi_half_width: 0.5e-3,
        }
    }
}

impl MetricsSection {
    pub fn build(&self) -> Result<MetricsConfig> {
        let config = MetricsConfig {
            ssi_bins: self.ssi_bins,
            dilation_radius: self.dilation_radius,
        };
        config.validate()?;
        if !(self.roi_half_width.is_finite() && self.roi_half_width > 0.0) {
            return Err(Error::invalid("roi_half_width", "must be > 0"));
        }
        Ok(config)
    }
}

/// Full pipeline configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub geometry: GeometrySection,
    pub acquisition: AcquisitionSection,
    pub grid: GridSection,
    pub beamformer: BeamformerSection,
    pub bpm: BpmSection,
    pub enhance: EnhanceSection,
    pub metrics: MetricsSection,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Check every section against its owning module.
    pub fn validate(&self) -> Result<()> {
        let geometry = self.geometry.build()?;
        self.acquisition.angles(&geometry)?;
        self.acquisition.pulse(&geometry)?;
        if let Some(snr) = self.acquisition.channel_snr_db {
            if !snr.is_finite() {
                return Err(Error::invalid("channel_snr_db", "must be finite"));
            }
        }
        self.grid.build()?;
        self.beamformer.apodization()?;
        if !(self.beamformer.dynamic_range_db.is_finite() && self.beamformer.dynamic_range_db > 0.0) {
            return Err(Error::invalid("dynamic_range_db", "must be > 0"));
        }
        self.bpm.build()?;
        self.enhance.build()?;
        self.metrics.build()?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical TOML serialization.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScattererSpec {
    pub x: f64,
    pub z: f64,
    pub reflectivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    /// Polyline vertices `[x, z]` in meters.
    pub points: Vec<[f64; 2]>,
    pub reflectivity: f64,
    pub angular_falloff_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeckleSpec {
    pub x_range: [f64; 2],
    pub z_range: [f64; 2],
    pub count: usize,
    pub amplitude: f64,
    /// Added to the run seed, so one file can yield several realizations.
    #[serde(default)]
    pub seed: u64,
    /// Drop scatterers lying beneath a surface: nothing reaches them
    /// through a strong reflector.
    #[serde(default = "default_true")]
    pub clip_below_surfaces: bool,
}

fn default_true() -> bool {
    true
}

/// Depth of the first polyline segment spanning `x`, if any.
fn surface_depth_at(points: &[[f64; 2]], x: f64) -> Option<f64> {
    points.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        let (lo, hi) = (a[0].min(b[0]), a[0].max(b[0]));
        if x < lo || x > hi {
            return None;
        }
        if hi == lo {
            return Some(a[1].min(b[1]));
        }
        Some(a[1] + (x - a[0]) / (b[0] - a[0]) * (b[1] - a[1]))
    })
}

/// Phantom description file.
///
/// ```toml
/// [[scatterer]]
/// x = 0.0
/// z = 0.02
/// reflectivity = 1.0
///
/// [[surface]]
/// points = [[-0.008, 0.018], [0.008, 0.016]]
/// reflectivity = 4.0
/// angular_falloff_deg = 10.0
///
/// [[speckle]]
/// x_range = [-0.0096, 0.0096]
/// z_range = [0.005, 0.03]
/// count = 3000
/// amplitude = 0.05
/// ```
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub scatterer: Vec<ScattererSpec>,
    pub surface: Vec<SurfaceSpec>,
    pub speckle: Vec<SpeckleSpec>,
}

impl PhantomSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("phantom serializes")
    }

    /// Surface polylines as `(x, z)` pairs.
    pub fn surface_polylines(&self) -> Vec<Vec<(f64, f64)>> {
        self.surface
            .iter()
            .map(|s| s.points.iter().map(|p| (p[0], p[1])).collect())
            .collect()
    }

    /// Instantiate the phantom; speckle blocks draw from `seed + block seed`.
    pub fn build(&self, seed: u64) -> Result<Phantom> {
        let mut scatterers = self
            .scatterer
            .iter()
            .map(|s| PointScatterer::new(s.x, s.z, s.reflectivity))
            .collect::<Result<Vec<_>>>()?;
        for (i, s) in self.speckle.iter().enumerate() {
            // Distinct blocks get distinct streams even with equal seeds.
            let stream = seed.wrapping_add(s.seed).wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64);
            let block = speckle_scatterers(
                (s.x_range[0], s.x_range[1]),
                (s.z_range[0], s.z_range[1]),
                s.count,
                s.amplitude,
                stream,
            )?;
            scatterers.extend(block.into_iter().filter(|p| {
                !s.clip_below_surfaces
                    || self
                        .surface
                        .iter()
                        .all(|surf| surface_depth_at(&surf.points, p.x).is_none_or(|depth| p.z < depth))
            }));
        }
        let surfaces = self
            .surface
            .iter()
            .map(|s| {
                SpecularSurface::new(
                    s.points.iter().map(|p| (p[0], p[1])).collect(),
                    s.reflectivity,
                    s.angular_falloff_deg.to_radians(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Phantom::new(scatterers, surfaces)
    }
}
