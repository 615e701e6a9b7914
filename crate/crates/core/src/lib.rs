//! Plane-wave ultrasound beamforming with bone enhancement.
//!
//! The crate covers the full chain from raw RF channel data to a
//! bone-enhanced display image:
//!
//! - [`acquisition`]: array geometry, imaging grids, RF frames and sweeps
//! - [`simulator`]: synthetic RF for point scatterers and specular surfaces
//! - [`beamformer`]: delay-and-sum, coherent compounding, envelope, log compression
//! - [`bone`]: integrated backscatter, log-Gabor bank, phase tensors, monogenic
//!   signal and the bone probability map
//! - [`enhancement`]: Otsu gating and the attention-weighted blend
//! - [`metrics`]: ROI construction, CR, SNR, SSI, SSIM and EPI
//! - [`container`], [`raster`], [`config`], [`pipeline`]: file formats and
//!   orchestration used by the `usbf` command-line tool

pub mod acquisition;
pub mod beamformer;
pub mod bone;
pub mod config;
pub mod container;
pub mod enhancement;
mod error;
mod fft;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod simulator;

pub use error::{Error, Result};
