//! Synthetic RF channel data for plane-wave transmissions.
//!
//! Each echo is a Gaussian-modulated sinusoid placed at the round-trip time
//! of flight `δ_tx + δ_rx`, using the same delay model as the beamformer.
//! There is no attenuation and no multiple scattering, so the output is
//! exactly linear in target amplitudes.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;

use crate::acquisition::{ArrayGeometry, PlaneWaveFrame, RfSweep};
use crate::beamformer::{receive_delay, transmit_delay};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointScatterer {
    pub x: f64,
    pub z: f64,
    pub reflectivity: f64,
}

impl PointScatterer {
    pub fn new(x: f64, z: f64, reflectivity: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::invalid("scatterer.x", "must be finite"));
        }
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::invalid("scatterer.z", format!("must be > 0, got {z}")));
        }
        if !reflectivity.is_finite() {
            return Err(Error::invalid("scatterer.reflectivity", "must be finite"));
        }
        Ok(Self { x, z, reflectivity })
    }
}

/// Mirror-like reflector described by a polyline.
///
/// The echo from each segment is weighted by a Gaussian lobe
/// `exp(-(φ/angular_falloff)²)`, where `φ` is the angle between the surface
/// normal and the direction back toward the transmitting array. A flat
/// horizontal surface under a plane wave steered by `θ` therefore has
/// `φ = |θ|`, which reproduces the brightness drop seen when the beam is not
/// perpendicular to bone.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecularSurface {
    polyline: Vec<(f64, f64)>,
    reflectivity: f64,
    angular_falloff: f64,
}

impl SpecularSurface {
    pub fn new(polyline: Vec<(f64, f64)>, reflectivity: f64, angular_falloff: f64) -> Result<Self> {
        if polyline.len() < 2 {
            return Err(Error::invalid("surface.polyline", "needs at least 2 points"));
        }
        if polyline
            .iter()
            .any(|&(x, z)| !(x.is_finite() && z.is_finite() && z > 0.0))
        {
            return Err(Error::invalid("surface.polyline", "points must be finite with z > 0"));
        }
        if !reflectivity.is_finite() {
            return Err(Error::invalid("surface.reflectivity", "must be finite"));
        }
        if !(angular_falloff.is_finite() && angular_falloff > 0.0) {
            return Err(Error::invalid("surface.angular_falloff", "must be > 0"));
        }
        Ok(Self {
            polyline,
            reflectivity,
            angular_falloff,
        })
    }

    pub fn polyline(&self) -> &[(f64, f64)] {
        &self.polyline
    }

    pub fn reflectivity(&self) -> f64 {
        self.reflectivity
    }

    pub fn angular_falloff(&self) -> f64 {
        self.angular_falloff
    }

    /// Specular weight of a segment with unit upward normal `normal` under
    /// a plane wave steered by `angle`.
    pub fn lobe(&self, normal: (f64, f64), angle: f64) -> f64 {
        let back = (-angle.sin(), -angle.cos());
        let cos_mis = (back.0 * normal.0 + back.1 * normal.1).clamp(-1.0, 1.0);
        let mismatch = cos_mis.acos();
        (-(mismatch / self.angular_falloff).powi(2)).exp()
    }

    /// Point-source decomposition of the surface at `spacing` meters.
    ///
    /// Amplitudes are scaled by `segment_length / wavelength` so the total
    /// echo does not depend on the discretisation step.
    fn point_sources(&self, angle: f64, spacing: f64, wavelength: f64, out: &mut Vec<Target>) {
        for seg in self.polyline.windows(2) {
            let (x0, z0) = seg[0];
            let (x1, z1) = seg[1];
            let (dx, dz) = (x1 - x0, z1 - z0);
            let len = dx.hypot(dz);
            if len == 0.0 {
                continue;
            }
            // Normal pointing toward the array (negative z).
            let mut normal = (-dz / len, dx / len);
            if normal.1 > 0.0 {
                normal = (-normal.0, -normal.1);
            }
            let weight = self.reflectivity * self.lobe(normal, angle);
            let pieces = (len / spacing).ceil().max(1.0) as usize;
            let piece_len = len / pieces as f64;
            let amp = weight * piece_len / wavelength;
            for p in 0..pieces {
                let s = (p as f64 + 0.5) / pieces as f64;
                out.push(Target {
                    x: x0 + s * dx,
                    z: z0 + s * dz,
                    amplitude: amp,
                });
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Phantom {
    scatterers: Vec<PointScatterer>,
    surfaces: Vec<SpecularSurface>,
}

impl Phantom {
    pub fn new(scatterers: Vec<PointScatterer>, surfaces: Vec<SpecularSurface>) -> Result<Self> {
        if scatterers.is_empty() && surfaces.is_empty() {
            return Err(Error::invalid("phantom", "contains no scatterers or surfaces"));
        }
        Ok(Self {
            scatterers,
            surfaces,
        })
    }

    pub fn scatterers(&self) -> &[PointScatterer] {
        &self.scatterers
    }

    pub fn surfaces(&self) -> &[SpecularSurface] {
        &self.surfaces
    }
}

/// Uniformly placed scatterers with zero-mean Gaussian amplitudes.
pub fn speckle_scatterers(
    x_range: (f64, f64),
    z_range: (f64, f64),
    count: usize,
    amplitude: f64,
    seed: u64,
) -> Result<Vec<PointScatterer>> {
    if !(x_range.0 < x_range.1 && z_range.0 < z_range.1 && z_range.0 > 0.0) {
        return Err(Error::invalid("speckle", "ranges must be increasing with z > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ux = Uniform::new(x_range.0, x_range.1).map_err(|e| Error::invalid("speckle", e.to_string()))?;
    let uz = Uniform::new(z_range.0, z_range.1).map_err(|e| Error::invalid("speckle", e.to_string()))?;
    let amp = Normal::new(0.0, amplitude.abs()).map_err(|e| Error::invalid("speckle", e.to_string()))?;
    (0..count)
        .map(|_| {
            let x = ux.sample(&mut rng);
            let z = uz.sample(&mut rng);
            PointScatterer::new(x, z, amp.sample(&mut rng))
        })
        .collect()
}

/// Gaussian-modulated sinusoid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseModel {
    center_frequency: f64,
    fractional_bandwidth: f64,
    sigma_t: f64,
}

impl PulseModel {
    /// `fractional_bandwidth` is the -6 dB width relative to the center frequency.
    pub fn new(center_frequency: f64, fractional_bandwidth: f64) -> Result<Self> {
        if !(center_frequency.is_finite() && center_frequency > 0.0) {
            return Err(Error::invalid("pulse.center_frequency", "must be > 0"));
        }
        if !(fractional_bandwidth > 0.0 && fractional_bandwidth < 2.0) {
            return Err(Error::invalid(
                "pulse.fractional_bandwidth",
                format!("must lie in (0, 2), got {fractional_bandwidth}"),
            ));
        }
        let sigma_f = fractional_bandwidth * center_frequency / (2.0 * (2.0 * 2f64.ln()).sqrt());
        let sigma_t = 1.0 / (2.0 * std::f64::consts::PI * sigma_f);
        Ok(Self {
            center_frequency,
            fractional_bandwidth,
            sigma_t,
        })
    }

    pub fn for_geometry(geometry: &ArrayGeometry) -> Self {
        Self::new(geometry.center_frequency(), 0.67).expect("default bandwidth is valid")
    }

    pub fn center_frequency(&self) -> f64 {
        self.center_frequency
    }

    pub fn fractional_bandwidth(&self) -> f64 {
        self.fractional_bandwidth
    }

    /// Half the support; the envelope is below 1e-7 beyond it.
    pub fn half_length(&self) -> f64 {
        6.0 * self.sigma_t
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        if t.abs() > self.half_length() {
            return 0.0;
        }
        let envelope = (-0.5 * (t / self.sigma_t).powi(2)).exp();
        envelope * (2.0 * std::f64::consts::PI * self.center_frequency * t).cos()
    }

    /// Add `amplitude * evaluate(i / fs - tau)` to `out[i - first]` for
    /// consecutive samples starting at index `first`.
    ///
    /// Envelope and carrier are advanced by multiplicative recurrences, so
    /// only the first sample pays for `exp` and `cos`.
    fn accumulate(&self, out: &mut [f64], first: usize, fs: f64, tau: f64, amplitude: f64) {
        let dt = 1.0 / fs;
        let t0 = first as f64 * dt - tau;
        let inv_var = 1.0 / (self.sigma_t * self.sigma_t);
        let mut env = (-0.5 * t0 * t0 * inv_var).exp() * amplitude;
        let mut ratio = (-(t0 * dt + 0.5 * dt * dt) * inv_var).exp();
        let step = (-dt * dt * inv_var).exp();
        let w = 2.0 * std::f64::consts::PI * self.center_frequency;
        let (mut s, mut c) = (w * t0).sin_cos();
        let (ds, dc) = (w * dt).sin_cos();
        for v in out {
            *v += env * c;
            env *= ratio;
            ratio *= step;
            (c, s) = (c * dc - s * ds, s * dc + c * ds);
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Target {
    x: f64,
    z: f64,
    amplitude: f64,
}

fn collect_targets(phantom: &Phantom, geometry: &ArrayGeometry, angle: f64) -> Vec<Target> {
    let mut targets: Vec<Target> = phantom
        .scatterers
        .iter()
        .map(|s| Target {
            x: s.x,
            z: s.z,
            amplitude: s.reflectivity,
        })
        .collect();
    let lambda = geometry.wavelength();
    for surface in &phantom.surfaces {
        surface.point_sources(angle, lambda / 4.0, lambda, &mut targets);
    }
    targets
}

/// Smallest sample count (with `t0 = 0`) that holds every echo of
/// `phantom` for all `angles`.
pub fn required_samples(
    phantom: &Phantom,
    geometry: &ArrayGeometry,
    angles: &[f64],
    pulse: &PulseModel,
) -> usize {
    let c = geometry.sound_speed();
    let elements = geometry.element_positions();
    let mut latest: f64 = 0.0;
    for &angle in angles {
        for t in collect_targets(phantom, geometry, angle) {
            let tx = transmit_delay((t.x, t.z), angle, c);
            for &ex in [elements[0], elements[elements.len() - 1]].iter() {
                latest = latest.max(tx + receive_delay((t.x, t.z), ex, c));
            }
        }
    }
    ((latest + pulse.half_length()) * geometry.sampling_frequency()).ceil() as usize + 1
}

/// RF data of one steered plane wave over `phantom`, sampled from `t = 0`.
pub fn simulate_frame(
    phantom: &Phantom,
    geometry: &ArrayGeometry,
    angle: f64,
    pulse: &PulseModel,
    n_samples: usize,
) -> Result<PlaneWaveFrame> {
    let required = required_samples(phantom, geometry, &[angle], pulse);
    if required > n_samples {
        return Err(Error::Depth {
            required_samples: required,
            available: n_samples,
        });
    }
    let targets = collect_targets(phantom, geometry, angle);
    let c = geometry.sound_speed();
    let fs = geometry.sampling_frequency();
    let half = pulse.half_length();
    let n = geometry.element_count();

    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let ex = geometry.element_x(k);
            let mut col = vec![0.0; n_samples];
            for t in &targets {
                if t.amplitude == 0.0 {
                    continue;
                }
                let tau = transmit_delay((t.x, t.z), angle, c) + receive_delay((t.x, t.z), ex, c);
                let first = ((tau - half) * fs).ceil().max(0.0) as usize;
                let last = (((tau + half) * fs).floor().max(-1.0) + 1.0) as usize;
                let last = last.min(n_samples);
                if first < last {
                    pulse.accumulate(&mut col[first..last], first, fs, tau, t.amplitude);
                }
            }
            col
        })
        .collect();

    let mut samples = Array2::zeros((n_samples, n));
    for (k, col) in columns.into_iter().enumerate() {
        for (i, v) in col.into_iter().enumerate() {
            samples[[i, k]] = v;
        }
    }
    PlaneWaveFrame::new(angle, samples, 0.0)
}

/// One frame per angle, in input order.
pub fn simulate_sweep(
    phantom: &Phantom,
    geometry: &ArrayGeometry,
    angles: &[f64],
    pulse: &PulseModel,
    n_samples: usize,
) -> Result<RfSweep> {
    let frames = angles
        .par_iter()
        .map(|&a| simulate_frame(phantom, geometry, a, pulse, n_samples))
        .collect::<Result<Vec<_>>>()?;
    RfSweep::new(geometry.clone(), frames)
}

/// Add white Gaussian noise so that `10 log10(P_signal / P_noise) = snr_db`.
///
/// An all-zero frame has no signal power and is returned unchanged.
pub fn add_noise(frame: &PlaneWaveFrame, snr_db: f64, seed: u64) -> Result<PlaneWaveFrame> {
    if !snr_db.is_finite() {
        return Err(Error::invalid("snr_db", format!("must be finite, got {snr_db}")));
    }
    let samples = frame.samples();
    let power = samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64;
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut noisy = samples.clone();
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid("snr_db", e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        noisy.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
    }
    PlaneWaveFrame::new(frame.steering_angle(), noisy, frame.t0())
}
