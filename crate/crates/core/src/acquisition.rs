//! Transducer geometry, imaging grids and RF frame containers.
//!
//! Everything here is an immutable value object: constructors validate and
//! the fields are only reachable through accessors, so a frame or sweep can be
//! shared across beamforming threads without copying.

use std::f64::consts::FRAC_PI_2;

use ndarray::Array2;

use crate::{Error, Result};

/// Uniform linear array.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    element_count: usize,
    pitch: f64,
    center_frequency: f64,
    sampling_frequency: f64,
    sound_speed: f64,
}

fn positive(field: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be finite and positive, got {value}")))
    }
}

impl ArrayGeometry {
    /// Build and validate a linear array description.
    pub fn new(
        element_count: usize,
        pitch: f64,
        center_frequency: f64,
        sampling_frequency: f64,
        sound_speed: f64,
    ) -> Result<Self> {
        if element_count < 2 {
            return Err(Error::invalid(
                "element_count",
                format!("need at least 2 elements, got {element_count}"),
            ));
        }
        positive("pitch", pitch)?;
        positive("center_frequency", center_frequency)?;
        positive("sampling_frequency", sampling_frequency)?;
        positive("sound_speed", sound_speed)?;
        if sampling_frequency <= 2.0 * center_frequency {
            return Err(Error::invalid(
                "sampling_frequency",
                format!(
                    "{sampling_frequency} Hz does not exceed twice the center frequency {center_frequency} Hz"
                ),
            ));
        }
        Ok(Self {
            element_count,
            pitch,
            center_frequency,
            sampling_frequency,
            sound_speed,
        })
    }

    pub fn element_count(&self) -> usize {
        self.element_count
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn center_frequency(&self) -> f64 {
        self.center_frequency
    }

    pub fn sampling_frequency(&self) -> f64 {
        self.sampling_frequency
    }

    pub fn sound_speed(&self) -> f64 {
        self.sound_speed
    }

    /// Aperture length `element_count * pitch`.
    pub fn aperture(&self) -> f64 {
        self.element_count as f64 * self.pitch
    }

    /// Acoustic wavelength at the center frequency.
    pub fn wavelength(&self) -> f64 {
        self.sound_speed / self.center_frequency
    }

    /// Lateral position of element `k`; the array is centered on x = 0.
    pub fn element_x(&self, k: usize) -> f64 {
        (k as f64 - (self.element_count as f64 - 1.0) / 2.0) * self.pitch
    }

    pub fn element_positions(&self) -> Vec<f64> {
        (0..self.element_count).map(|k| self.element_x(k)).collect()
    }
}

/// Shorthand for [`ArrayGeometry::new`].
pub fn make_linear_array(
    element_count: usize,
    pitch: f64,
    f0: f64,
    fs: f64,
    c: f64,
) -> Result<ArrayGeometry> {
    ArrayGeometry::new(element_count, pitch, f0, fs, c)
}

/// Steering angles spaced by `λ/L`, taken from the center of the index set
/// `n = -N/2 ..= N/2 - 1`.
///
/// Odd counts are symmetric around an exact zero; even counts keep the
/// index set's extra negative angle.
pub fn steering_angle_set(geometry: &ArrayGeometry, count: usize) -> Result<Vec<f64>> {
    if count == 0 || count > geometry.element_count() {
        return Err(Error::invalid(
            "count",
            format!(
                "angle count must be in 1..={}, got {count}",
                geometry.element_count()
            ),
        ));
    }
    let step = geometry.wavelength() / geometry.aperture();
    let first = -((count / 2) as i64);
    Ok((0..count as i64)
        .map(|i| (first + i) as f64 * step)
        .collect())
}

/// `count` angles evenly spaced over `[-max_angle, max_angle]`.
pub fn linear_angle_sweep(count: usize, max_angle: f64) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::invalid("count", "angle count must be at least 1"));
    }
    if !(0.0..FRAC_PI_2).contains(&max_angle) {
        return Err(Error::invalid(
            "max_angle",
            format!("must lie in [0, pi/2), got {max_angle}"),
        ));
    }
    if count == 1 {
        return Ok(vec![0.0]);
    }
    if max_angle == 0.0 {
        return Err(Error::invalid(
            "max_angle",
            "a zero span cannot hold distinct angles",
        ));
    }
    let step = 2.0 * max_angle / (count - 1) as f64;
    Ok((0..count).map(|i| -max_angle + i as f64 * step).collect())
}

/// Pixel coordinates of a reconstruction; z = 0 is the array face.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagingGrid {
    lateral: Vec<f64>,
    axial: Vec<f64>,
}

fn strictly_increasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] > w[0]) && values.iter().all(|v| v.is_finite())
}

impl ImagingGrid {
    pub fn new(lateral: Vec<f64>, axial: Vec<f64>) -> Result<Self> {
        if lateral.is_empty() || axial.is_empty() {
            return Err(Error::invalid("grid", "coordinate lists must be non-empty"));
        }
        if !strictly_increasing(&lateral) {
            return Err(Error::invalid(
                "lateral_positions",
                "must be finite and strictly increasing",
            ));
        }
        if !strictly_increasing(&axial) {
            return Err(Error::invalid(
                "axial_positions",
                "must be finite and strictly increasing",
            ));
        }
        if axial[0] < 0.0 {
            return Err(Error::invalid(
                "axial_positions",
                format!("must be >= 0, first is {}", axial[0]),
            ));
        }
        Ok(Self { lateral, axial })
    }

    /// Evenly spaced grid with `nx` columns over `[x_min, x_max]` and `nz`
    /// rows over `[z_min, z_max]`.
    pub fn uniform(x_min: f64, x_max: f64, nx: usize, z_min: f64, z_max: f64, nz: usize) -> Result<Self> {
        Self::new(linspace(x_min, x_max, nx), linspace(z_min, z_max, nz))
    }

    pub fn lateral(&self) -> &[f64] {
        &self.lateral
    }

    pub fn axial(&self) -> &[f64] {
        &self.axial
    }

    /// `(rows, cols)` = `(axial, lateral)` counts.
    pub fn shape(&self) -> (usize, usize) {
        (self.axial.len(), self.lateral.len())
    }
}

fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (end - start) / (n - 1) as f64;
            (0..n).map(|i| start + i as f64 * step).collect()
        }
    }
}

/// RF channel data of one plane-wave transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneWaveFrame {
    steering_angle: f64,
    samples: Array2<f64>,
    t0: f64,
}

impl PlaneWaveFrame {
    /// `samples` is `[n_samples, element_count]`; `t0` is the time of the first row.
    pub fn new(steering_angle: f64, samples: Array2<f64>, t0: f64) -> Result<Self> {
        if !(steering_angle.is_finite() && steering_angle.abs() < FRAC_PI_2) {
            return Err(Error::invalid(
                "steering_angle",
                format!("|angle| must be below pi/2, got {steering_angle}"),
            ));
        }
        if !t0.is_finite() {
            return Err(Error::invalid("t0", "must be finite"));
        }
        if samples.nrows() == 0 || samples.ncols() == 0 {
            return Err(Error::invalid("samples", "RF array is empty"));
        }
        Ok(Self {
            steering_angle,
            samples,
            t0,
        })
    }

    pub fn steering_angle(&self) -> f64 {
        self.steering_angle
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn n_samples(&self) -> usize {
        self.samples.nrows()
    }

    pub fn element_count(&self) -> usize {
        self.samples.ncols()
    }

    pub fn into_samples(self) -> Array2<f64> {
        self.samples
    }
}

/// Check that every frame fits `geometry` and that the sweep is coherent.
///
/// Reports the first violated invariant together with the frame index.
pub fn validate_sweep(geometry: &ArrayGeometry, frames: &[PlaneWaveFrame]) -> Result<()> {
    let Some(first) = frames.first() else {
        return Err(Error::invalid("frames", "sweep contains no transmissions"));
    };
    for (i, frame) in frames.iter().enumerate() {
        if frame.element_count() != geometry.element_count() {
            return Err(Error::Sweep {
                frame: i,
                reason: format!(
                    "{} columns but geometry has {} elements",
                    frame.element_count(),
                    geometry.element_count()
                ),
            });
        }
        if frame.n_samples() != first.n_samples() {
            return Err(Error::Sweep {
                frame: i,
                reason: format!(
                    "{} samples but frame 0 has {}",
                    frame.n_samples(),
                    first.n_samples()
                ),
            });
        }
        if let Some(j) = frames[..i]
            .iter()
            .position(|f| f.steering_angle() == frame.steering_angle())
        {
            return Err(Error::Sweep {
                frame: i,
                reason: format!("steering angle duplicates frame {j}"),
            });
        }
    }
    Ok(())
}

/// A validated set of transmissions sharing one geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct RfSweep {
    geometry: ArrayGeometry,
    frames: Vec<PlaneWaveFrame>,
}

impl RfSweep {
    pub fn new(geometry: ArrayGeometry, frames: Vec<PlaneWaveFrame>) -> Result<Self> {
        validate_sweep(&geometry, &frames)?;
        Ok(Self { geometry, frames })
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn frames(&self) -> &[PlaneWaveFrame] {
        &self.frames
    }

    pub fn angles(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.steering_angle()).collect()
    }

    /// Frame closest to normal incidence.
    pub fn center_frame(&self) -> &PlaneWaveFrame {
        self.frames
            .iter()
            .min_by(|a, b| a.steering_angle().abs().total_cmp(&b.steering_angle().abs()))
            .expect("sweep is non-empty")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l11() -> ArrayGeometry {
        make_linear_array(128, 0.3e-3, 7.6e6, 31.25e6, 1540.0).unwrap()
    }

    #[test]
    fn l11_aperture_and_wavelength() {
        let g = l11();
        assert!((g.aperture() - 38.4e-3).abs() < 1e-12);
        assert!((g.wavelength() - 202.63e-6).abs() < 0.01e-6);
        assert!((g.element_x(0) + g.element_x(127)).abs() < 1e-15);
    }

    #[test]
    fn minimal_and_rejected_geometries() {
        assert!(make_linear_array(2, 1e-3, 1e6, 3e6, 1540.0).is_ok());
        match make_linear_array(128, 0.3e-3, 7.6e6, 10e6, 1540.0) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "sampling_frequency"),
            other => panic!("expected Nyquist error, got {other:?}"),
        }
        match make_linear_array(128, -0.3e-3, 7.6e6, 31.25e6, 1540.0) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "pitch"),
            other => panic!("expected pitch error, got {other:?}"),
        }
        assert!(make_linear_array(1, 1e-3, 1e6, 3e6, 1540.0).is_err());
    }

    #[test]
    fn full_angle_set_extremes() {
        let g = l11();
        let angles = steering_angle_set(&g, 128).unwrap();
        let step = 1540.0 / 7.6e6 / 38.4e-3;
        assert_eq!(angles.len(), 128);
        assert!((angles[0] + 64.0 * step).abs() < 1e-15);
        assert!((angles[127] - 63.0 * step).abs() < 1e-15);
        // 63 λ/L ≈ 0.3324 rad ≈ 19.0°
        assert!((angles[127] - 0.3324).abs() < 1e-3);
        assert!((angles[127].to_degrees() - 19.05).abs() < 0.05);
    }

    #[test]
    fn single_and_73_angle_sets() {
        let g = l11();
        assert_eq!(steering_angle_set(&g, 1).unwrap(), vec![0.0]);
        let a = steering_angle_set(&g, 73).unwrap();
        assert_eq!(a.len(), 73);
        assert_eq!(a[36], 0.0);
        let step = g.wavelength() / g.aperture();
        assert!((a[72] - 36.0 * step).abs() < 1e-15);
        assert!((a[0] + a[72]).abs() < 1e-15);
        assert!(steering_angle_set(&g, 0).is_err());
        assert!(steering_angle_set(&g, 129).is_err());
    }

    #[test]
    fn linear_sweep_spans_requested_range() {
        let a = linear_angle_sweep(73, 18f64.to_radians()).unwrap();
        assert_eq!(a.len(), 73);
        assert!((a[0] + 18f64.to_radians()).abs() < 1e-15);
        assert!((a[72] - 18f64.to_radians()).abs() < 1e-12);
        assert!(a[36].abs() < 1e-15);
        assert_eq!(linear_angle_sweep(1, 0.3).unwrap(), vec![0.0]);
    }

    #[test]
    fn sweep_validation() {
        let g = l11();
        let frame = |angle: f64, cols: usize| {
            PlaneWaveFrame::new(angle, Array2::zeros((64, cols)), 0.0).unwrap()
        };
        assert!(RfSweep::new(g.clone(), vec![frame(-0.1, 128), frame(0.0, 128), frame(0.1, 128)]).is_ok());
        match RfSweep::new(g.clone(), vec![frame(-0.1, 128), frame(0.0, 127)]) {
            Err(Error::Sweep { frame, .. }) => assert_eq!(frame, 1),
            other => panic!("expected frame error, got {other:?}"),
        }
        assert!(matches!(
            RfSweep::new(g.clone(), vec![]),
            Err(Error::Validation { field: "frames", .. })
        ));
        assert!(matches!(
            RfSweep::new(g, vec![frame(0.0, 128), frame(0.0, 128)]),
            Err(Error::Sweep { frame: 1, .. })
        ));
    }

    #[test]
    fn frame_and_grid_invariants() {
        assert!(PlaneWaveFrame::new(FRAC_PI_2, Array2::zeros((4, 2)), 0.0).is_err());
        assert!(ImagingGrid::new(vec![0.0, 1.0], vec![-0.1, 0.2]).is_err());
        assert!(ImagingGrid::new(vec![1.0, 0.0], vec![0.1, 0.2]).is_err());
        let g = ImagingGrid::uniform(-1e-3, 1e-3, 5, 0.0, 2e-3, 3).unwrap();
        assert_eq!(g.shape(), (3, 5));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn angle_set_uniform_and_bounded(
                n in 2usize..200,
                pitch in 0.05e-3f64..1e-3,
                f0 in 1e6f64..15e6,
                frac in 0.0f64..1.0,
            ) {
                let g = make_linear_array(n, pitch, f0, 2.5 * f0, 1540.0).unwrap();
                let count = 1 + ((n - 1) as f64 * frac) as usize;
                let a = steering_angle_set(&g, count).unwrap();
                let step = g.wavelength() / g.aperture();
                prop_assert_eq!(a.len(), count);
                for w in a.windows(2) {
                    prop_assert!(((w[1] - w[0]) - step).abs() <= 1e-12 * step);
                }
                let bound = (n / 2) as f64 * step;
                prop_assert!(a.iter().all(|x| x.abs() <= bound * (1.0 + 1e-12)));
                if count % 2 == 1 {
                    prop_assert_eq!(a[count / 2], 0.0);
                    for i in 0..count {
                        prop_assert!((a[i] + a[count - 1 - i]).abs() <= 1e-12 * step.max(1.0));
                    }
                }
            }
        }
    }
}
