//! Delay-and-sum reconstruction for steered plane waves.
//!
//! A pixel `(x, z)` of transmission `θ` collects, from every element `k`,
//! the RF sample at `δ_tx + δ_rx(k)` where
//!
//! ```text
//! δ_tx = (z cos θ + x sin θ) / c
//! δ_rx = sqrt(z² + (x - x_k)²) / c
//! ```
//!
//! Samples are linearly interpolated in time and lookups outside the recorded
//! window contribute nothing. Summing the per-angle images gives the
//! coherently compounded image.

use ndarray::Array2;
use rayon::prelude::*;

use crate::acquisition::{ArrayGeometry, ImagingGrid, PlaneWaveFrame, RfSweep};
use crate::fft::column_envelope;
use crate::{Error, Result};

/// Plane-wave transmit delay of pixel `(x, z)` for steering `angle`.
pub fn transmit_delay(pixel: (f64, f64), angle: f64, c: f64) -> f64 {
    let (x, z) = pixel;
    (z * angle.cos() + x * angle.sin()) / c
}

/// One-way delay from pixel `(x, z)` back to an element at `(element_x, 0)`.
pub fn receive_delay(pixel: (f64, f64), element_x: f64, c: f64) -> f64 {
    let (x, z) = pixel;
    z.hypot(x - element_x) / c
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Window {
    Rectangular,
    Hann,
    /// Tapered cosine; the ratio is the tapered fraction of the aperture.
    Tukey(f64),
}

impl Window {
    /// Weight at normalized aperture position `u` in `[0, 1]`.
    pub fn weight(&self, u: f64) -> f64 {
        match *self {
            Window::Rectangular => 1.0,
            Window::Hann => Window::Tukey(1.0).weight(u),
            Window::Tukey(r) => {
                if r <= 0.0 {
                    return 1.0;
                }
                let u = u.clamp(0.0, 1.0);
                let half = r / 2.0;
                if u < half {
                    0.5 * (1.0 + (std::f64::consts::PI * (u / half - 1.0)).cos())
                } else if u > 1.0 - half {
                    0.5 * (1.0 + (std::f64::consts::PI * ((u - 1.0) / half + 1.0)).cos())
                } else {
                    1.0
                }
            }
        }
    }
}

/// Receive apodization: a window over the active aperture, optionally
/// limited by an f-number (0 keeps the full array).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApodizationSpec {
    window: Window,
    f_number: f64,
}

impl Default for ApodizationSpec {
    fn default() -> Self {
        Self {
            window: Window::Hann,
            f_number: 0.0,
        }
    }
}

impl ApodizationSpec {
    pub fn new(window: Window, f_number: f64) -> Result<Self> {
        if let Window::Tukey(r) = window {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::invalid("tukey_ratio", format!("must lie in [0, 1], got {r}")));
            }
        }
        if !(f_number.is_finite() && f_number >= 0.0) {
            return Err(Error::invalid("f_number", format!("must be >= 0, got {f_number}")));
        }
        Ok(Self { window, f_number })
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn f_number(&self) -> f64 {
        self.f_number
    }
}

/// Summed RF on an imaging grid, before envelope detection.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformedImage {
    grid: ImagingGrid,
    values: Array2<f64>,
}

impl BeamformedImage {
    pub fn new(grid: ImagingGrid, values: Array2<f64>) -> Result<Self> {
        if values.dim() != grid.shape() {
            return Err(Error::Shape(format!(
                "values {:?} do not match grid {:?}",
                values.dim(),
                grid.shape()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("values", "beamformed image contains non-finite values"));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &ImagingGrid {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}

/// Normalized log-compressed envelope in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BModeImage {
    grid: ImagingGrid,
    values: Array2<f64>,
    dynamic_range: f64,
}

impl BModeImage {
    pub fn grid(&self) -> &ImagingGrid {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn dynamic_range(&self) -> f64 {
        self.dynamic_range
    }
}

/// Delay-and-sum image of a single transmission.
pub fn das_beamform(
    frame: &PlaneWaveFrame,
    geometry: &ArrayGeometry,
    grid: &ImagingGrid,
    apo: &ApodizationSpec,
) -> Result<BeamformedImage> {
    let n_el = geometry.element_count();
    if frame.element_count() != n_el {
        return Err(Error::Shape(format!(
            "frame has {} channels, geometry has {n_el} elements",
            frame.element_count()
        )));
    }
    let c = geometry.sound_speed();
    let fs = geometry.sampling_frequency();
    let t0 = frame.t0();
    let angle = frame.steering_angle();
    let n_samples = frame.n_samples();
    let last_t = t0 + (n_samples - 1) as f64 / fs;

    // Deepest row must be reachable by at least its earliest possible echo.
    let z_max = *grid.axial().last().expect("grid is non-empty");
    let earliest = grid
        .lateral()
        .iter()
        .map(|&x| transmit_delay((x, z_max), angle, c) + z_max / c)
        .fold(f64::INFINITY, f64::min);
    if earliest > last_t {
        return Err(Error::Depth {
            required_samples: ((earliest - t0) * fs).ceil() as usize + 1,
            available: n_samples,
        });
    }

    let channels: Vec<Vec<f64>> = (0..n_el)
        .map(|k| frame.samples().column(k).to_vec())
        .collect();
    let element_x = geometry.element_positions();
    let full_weights: Vec<f64> = (0..n_el)
        .map(|k| apo.window.weight(k as f64 / (n_el - 1) as f64))
        .collect();

    let lateral = grid.lateral();
    let rows: Vec<Vec<f64>> = grid
        .axial()
        .par_iter()
        .map(|&z| {
            lateral
                .iter()
                .map(|&x| {
                    let tx = transmit_delay((x, z), angle, c);
                    let half_aperture = if apo.f_number > 0.0 {
                        z / (2.0 * apo.f_number)
                    } else {
                        f64::INFINITY
                    };
                    let mut acc = 0.0;
                    for (k, channel) in channels.iter().enumerate() {
                        let offset = element_x[k] - x;
                        let weight = if half_aperture.is_finite() {
                            if offset.abs() > half_aperture {
                                continue;
                            }
                            if half_aperture > 0.0 {
                                apo.window.weight(0.5 + offset / (2.0 * half_aperture))
                            } else {
                                1.0
                            }
                        } else {
                            full_weights[k]
                        };
                        if weight == 0.0 {
                            continue;
                        }
                        let t = tx + receive_delay((x, z), element_x[k], c);
                        let pos = (t - t0) * fs;
                        if !(pos >= 0.0 && pos <= (n_samples - 1) as f64) {
                            continue;
                        }
                        let i = pos.floor() as usize;
                        let frac = pos - i as f64;
                        let v = if i + 1 < n_samples {
                            channel[i] + frac * (channel[i + 1] - channel[i])
                        } else {
                            channel[i]
                        };
                        acc += weight * v;
                    }
                    acc
                })
                .collect()
        })
        .collect();

    let (nz, nx) = grid.shape();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let values = Array2::from_shape_vec((nz, nx), flat).expect("row lengths match grid");
    BeamformedImage::new(grid.clone(), values)
}

/// Pixel-wise sum of per-transmission images.
pub fn compound(images: &[BeamformedImage]) -> Result<BeamformedImage> {
    let Some(first) = images.first() else {
        return Err(Error::invalid("images", "nothing to compound"));
    };
    let mut acc = first.values.clone();
    for (i, img) in images.iter().enumerate().skip(1) {
        if img.grid != first.grid {
            return Err(Error::Shape(format!("image {i} uses a different grid")));
        }
        acc += &img.values;
    }
    BeamformedImage::new(first.grid.clone(), acc)
}

/// Beamform every frame of `sweep` and compound the results.
pub fn beamform_sweep(
    sweep: &RfSweep,
    grid: &ImagingGrid,
    apo: &ApodizationSpec,
) -> Result<BeamformedImage> {
    let images = sweep
        .frames()
        .iter()
        .map(|f| das_beamform(f, sweep.geometry(), grid, apo))
        .collect::<Result<Vec<_>>>()?;
    compound(&images)
}

/// Column-wise analytic-signal magnitude.
pub fn envelope_detect(image: &BeamformedImage) -> Result<BeamformedImage> {
    if image.values.nrows() < 8 {
        return Err(Error::invalid(
            "image",
            format!("envelope needs at least 8 axial samples, got {}", image.values.nrows()),
        ));
    }
    BeamformedImage::new(image.grid.clone(), column_envelope(&image.values))
}

/// Map an envelope to `[0, 1]`: the peak goes to 1 and `-dynamic_range` dB to 0.
pub fn log_compress(envelope: &BeamformedImage, dynamic_range: f64) -> Result<BModeImage> {
    if !(dynamic_range.is_finite() && dynamic_range > 0.0) {
        return Err(Error::invalid("dynamic_range", format!("must be > 0, got {dynamic_range}")));
    }
    let values = envelope.values();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("envelope", "contains non-finite values"));
    }
    if values.iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("envelope", "contains negative values"));
    }
    let peak = values.iter().cloned().fold(0.0, f64::max);
    let out = if peak == 0.0 {
        Array2::zeros(values.dim())
    } else {
        values.mapv(|v| {
            let db = if v > 0.0 { 20.0 * (v / peak).log10() } else { -dynamic_range };
            db.clamp(-dynamic_range, 0.0) / dynamic_range + 1.0
        })
    };
    Ok(BModeImage {
        grid: envelope.grid.clone(),
        values: out,
        dynamic_range,
    })
}

/// Envelope detection followed by log compression.
pub fn to_bmode(image: &BeamformedImage, dynamic_range: f64) -> Result<BModeImage> {
    log_compress(&envelope_detect(image)?, dynamic_range)
}

/// Row and column of the largest value.
pub fn peak_index(values: &Array2<f64>) -> (usize, usize) {
    let mut best = (0, 0);
    let mut best_v = f64::NEG_INFINITY;
    for ((r, c), &v) in values.indexed_iter() {
        if v > best_v {
            best_v = v;
            best = (r, c);
        }
    }
    best
}

/// Full width at half maximum along `row`, around the row's peak, in the
/// units of `coords`. `None` if the response does not fall below half on
/// both sides within the row.
pub fn fwhm_along_row(values: &Array2<f64>, row: usize, coords: &[f64]) -> Option<f64> {
    let line = values.row(row);
    let (peak_col, &peak) = line
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    if peak <= 0.0 {
        return None;
    }
    let half = peak / 2.0;
    let cross = |a: usize, b: usize| {
        // linear interpolation between coords[a] (>= half) and coords[b] (< half)
        let (va, vb) = (line[a], line[b]);
        coords[a] + (va - half) / (va - vb) * (coords[b] - coords[a])
    };
    let left = (1..=peak_col).rev().find(|&i| line[i - 1] < half).map(|i| cross(i, i - 1))?;
    let right = (peak_col..line.len() - 1).find(|&i| line[i + 1] < half).map(|i| cross(i, i + 1))?;
    Some(right - left)
}

/// Lateral FWHM through the global peak of an envelope image.
pub fn lateral_fwhm(envelope: &BeamformedImage) -> Option<f64> {
    let (row, _) = peak_index(envelope.values());
    fwhm_along_row(envelope.values(), row, envelope.grid().lateral())
}
