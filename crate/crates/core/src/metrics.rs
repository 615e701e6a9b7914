//! Region-of-interest construction and image-quality metrics.
//!
//! Contrast metrics (CR, SNR) compare a foreground region against the band
//! around it; similarity metrics (SSI, SSIM, EPI) compare a prediction with a
//! reference image of the same shape.

use ndarray::{Array2, Zip};

use crate::{Error, Result};

/// Foreground and background masks of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiMask {
    foreground: Array2<bool>,
    background: Array2<bool>,
}

impl RoiMask {
    /// Masks must share a shape, be disjoint and both be non-empty.
    pub fn new(foreground: Array2<bool>, background: Array2<bool>) -> Result<Self> {
        if foreground.dim() != background.dim() {
            return Err(Error::Shape(format!(
                "foreground {:?} vs background {:?}",
                foreground.dim(),
                background.dim()
            )));
        }
        if Zip::from(&foreground).and(&background).any(|&f, &b| f && b) {
            return Err(Error::invalid("roi", "foreground and background overlap"));
        }
        if !foreground.iter().any(|&f| f) {
            return Err(Error::invalid("foreground", "mask is empty"));
        }
        if !background.iter().any(|&b| b) {
            return Err(Error::invalid("background", "mask is empty"));
        }
        Ok(Self {
            foreground,
            background,
        })
    }

    pub fn foreground(&self) -> &Array2<bool> {
        &self.foreground
    }

    pub fn background(&self) -> &Array2<bool> {
        &self.background
    }

    pub fn shape(&self) -> (usize, usize) {
        self.foreground.dim()
    }
}

/// Background band: dilation of `foreground` by a disk of `radius` pixels
/// (`dy² + dx² <= radius²`) with the foreground removed.
pub fn make_background(foreground: &Array2<bool>, radius: usize) -> Result<RoiMask> {
    if radius == 0 {
        return Err(Error::invalid("dilation_radius", "must be >= 1"));
    }
    if !foreground.iter().any(|&f| f) {
        return Err(Error::invalid("foreground", "mask is empty"));
    }
    let (rows, cols) = foreground.dim();
    let r = radius as isize;
    let offsets: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dy, dx)))
        .filter(|&(dy, dx)| dy * dy + dx * dx <= r * r)
        .collect();

    let mut background = Array2::from_elem((rows, cols), false);
    for ((y, x), _) in foreground.indexed_iter().filter(|(_, &f)| f) {
        for &(dy, dx) in &offsets {
            let (ny, nx) = (y as isize + dy, x as isize + dx);
            if ny >= 0 && nx >= 0 && (ny as usize) < rows && (nx as usize) < cols {
                background[[ny as usize, nx as usize]] = true;
            }
        }
    }
    Zip::from(&mut background)
        .and(foreground)
        .for_each(|b, &f| *b &= !f);
    if !background.iter().any(|&b| b) {
        return Err(Error::Degenerate(
            "dilated foreground covers the whole image".into(),
        ));
    }
    RoiMask::new(foreground.clone(), background)
}

/// Mean and population variance of the pixels selected by `mask`.
fn masked_stats(image: &Array2<f64>, mask: &Array2<bool>) -> (f64, f64) {
    let mut n = 0usize;
    let mut sum = 0.0;
    for (&v, _) in image.iter().zip(mask).filter(|(_, &m)| m) {
        n += 1;
        sum += v;
    }
    let mean = sum / n as f64;
    let var = image
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| (v - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    (mean, var)
}

fn check_roi(image: &Array2<f64>, roi: &RoiMask) -> Result<()> {
    if image.dim() != roi.shape() {
        return Err(Error::Shape(format!(
            "image is {:?} but ROI is {:?}",
            image.dim(),
            roi.shape()
        )));
    }
    Ok(())
}

/// `20·log10(μ_in / μ_out)` in dB.
pub fn contrast_ratio(image: &Array2<f64>, roi: &RoiMask) -> Result<f64> {
    check_roi(image, roi)?;
    let (mu_in, _) = masked_stats(image, roi.foreground());
    let (mu_out, _) = masked_stats(image, roi.background());
    if mu_out == 0.0 {
        return Err(Error::Degenerate("background mean is zero".into()));
    }
    Ok(20.0 * (mu_in / mu_out).log10())
}

/// `10·log10((μ_in² + σ_in²) / (μ_out² + σ_out²))` in dB.
pub fn snr(image: &Array2<f64>, roi: &RoiMask) -> Result<f64> {
    check_roi(image, roi)?;
    let (mu_in, var_in) = masked_stats(image, roi.foreground());
    let (mu_out, var_out) = masked_stats(image, roi.background());
    let denominator = mu_out * mu_out + var_out;
    if denominator == 0.0 {
        return Err(Error::Degenerate("background power is zero".into()));
    }
    Ok(10.0 * ((mu_in * mu_in + var_in) / denominator).log10())
}

fn histogram(image: &Array2<f64>, n_bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; n_bins];
    for &v in image {
        let b = (v.clamp(0.0, 1.0) * n_bins as f64) as usize;
        h[b.min(n_bins - 1)] += 1.0;
    }
    let n = image.len() as f64;
    h.iter_mut().for_each(|v| *v /= n);
    h
}

/// Intersection of the normalized intensity histograms of two `[0, 1]` images.
pub fn ssi(ground_truth: &Array2<f64>, predicted: &Array2<f64>, n_bins: usize) -> Result<f64> {
    if n_bins < 2 {
        return Err(Error::invalid("ssi_bins", format!("need at least 2 bins, got {n_bins}")));
    }
    if ground_truth.is_empty() || predicted.is_empty() {
        return Err(Error::invalid("image", "empty image"));
    }
    let a = histogram(ground_truth, n_bins);
    let b = histogram(predicted, n_bins);
    let s: f64 = a.iter().zip(&b).map(|(x, y)| x.min(*y)).sum();
    Ok(s.min(1.0))
}

/// Stabilizing constants of [`ssim`].
pub const SSIM_C1: f64 = 0.01;
pub const SSIM_C2: f64 = 0.01;

fn check_pair(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    if a.is_empty() {
        return Err(Error::invalid("image", "empty image"));
    }
    Ok(())
}

/// Structural similarity evaluated once over the whole image.
pub fn ssim(ground_truth: &Array2<f64>, predicted: &Array2<f64>) -> Result<f64> {
    check_pair(ground_truth, predicted)?;
    let n = ground_truth.len() as f64;
    let mx = ground_truth.sum() / n;
    let my = predicted.sum() / n;
    let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
    Zip::from(ground_truth).and(predicted).for_each(|&x, &y| {
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
        cov += (x - mx) * (y - my);
    });
    vx /= n;
    vy /= n;
    cov /= n;
    Ok((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2)
        / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2)))
}

/// 4-neighbour Laplacian with replicated borders.
fn laplacian(image: &Array2<f64>) -> Array2<f64> {
    let (rows, cols) = image.dim();
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        let up = image[[r.saturating_sub(1), c]];
        let down = image[[(r + 1).min(rows - 1), c]];
        let left = image[[r, c.saturating_sub(1)]];
        let right = image[[r, (c + 1).min(cols - 1)]];
        up + down + left + right - 4.0 * image[[r, c]]
    })
}

/// Edge preservation index in percent: correlation of the mean-centered
/// Laplacian responses of both images. Zero variance on either side gives 0.
pub fn epi(ground_truth: &Array2<f64>, predicted: &Array2<f64>) -> Result<f64> {
    check_pair(ground_truth, predicted)?;
    let (rows, cols) = ground_truth.dim();
    if rows < 3 || cols < 3 {
        return Err(Error::Shape(format!(
            "edge index needs at least 3x3, got {rows}x{cols}"
        )));
    }
    let mut a = laplacian(ground_truth);
    let mut b = laplacian(predicted);
    let n = a.len() as f64;
    let (ma, mb) = (a.sum() / n, b.sum() / n);
    a.mapv_inplace(|v| v - ma);
    b.mapv_inplace(|v| v - mb);
    let num = (&a * &b).sum();
    let den = ((&a * &a).sum() * (&b * &b).sum()).sqrt();
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok((100.0 * (num / den)).clamp(-100.0, 100.0))
}

/// Parameters of [`evaluate`] and ROI construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsConfig {
    pub ssi_bins: usize,
    pub dilation_radius: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            ssi_bins: 256,
            dilation_radius: 10,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ssi_bins < 2 {
            return Err(Error::invalid("ssi_bins", "need at least 2 bins"));
        }
        if self.dilation_radius == 0 {
            return Err(Error::invalid("dilation_radius", "must be >= 1"));
        }
        Ok(())
    }
}

/// Similarity scores against a reference image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub ssi: f64,
    pub ssim: f64,
    pub epi_percent: f64,
}

/// Output of [`evaluate`]. `similarity` is present only when a reference
/// image was supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub cr_db: f64,
    pub snr_db: f64,
    pub similarity: Option<Similarity>,
    pub roi: RoiMask,
}

pub fn evaluate(
    image: &Array2<f64>,
    reference: Option<&Array2<f64>>,
    roi: &RoiMask,
    config: &MetricsConfig,
) -> Result<MetricsReport> {
    config.validate()?;
    let cr_db = contrast_ratio(image, roi)?;
    let snr_db = snr(image, roi)?;
    let similarity = match reference {
        Some(gt) => Some(Similarity {
            ssi: ssi(gt, image, config.ssi_bins)?,
            ssim: ssim(gt, image)?,
            epi_percent: epi(gt, image)?,
        }),
        None => None,
    };
    Ok(MetricsReport {
        cr_db,
        snr_db,
        similarity,
        roi: roi.clone(),
    })
}
