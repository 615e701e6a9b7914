//! Bone probability map from a normalized B-mode image.
//!
//! The map combines three cues:
//!
//! - integrated backscatter, the cumulative squared intensity down each
//!   column, which grows below strong reflectors;
//! - local phase `LP` and feature symmetry `FS`, both derived from a
//!   log-Gabor band-pass, the local phase tensor and its monogenic signal;
//! - a final min-max normalization of `LP · FS · (1 - IBS)` to `[0, 1]`.
//!
//! Image axis 0 is depth (rows), axis 1 is lateral (columns).

use ndarray::{Array2, Zip};
use rustfft::num_complex::Complex64;

use crate::fft::{bin_frequency, fft2, spectrum};
use crate::{Error, Result};

/// Guards the monogenic energy in the feature-symmetry denominator.
pub const ENERGY_EPSILON: f64 = 1e-12;

/// Log-Gabor scales and bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBankConfig {
    wavelengths: Vec<f64>,
    sigma_on_f: f64,
}

impl Default for FilterBankConfig {
    fn default() -> Self {
        Self {
            wavelengths: vec![16.0, 32.0],
            sigma_on_f: 0.55,
        }
    }
}

impl FilterBankConfig {
    /// `wavelengths` in pixels, strictly increasing and at least 2;
    /// `sigma_on_f` in `(0, 1)`.
    pub fn new(wavelengths: Vec<f64>, sigma_on_f: f64) -> Result<Self> {
        if wavelengths.is_empty() {
            return Err(Error::invalid("wavelengths", "need at least one scale"));
        }
        if wavelengths.iter().any(|&w| !(w.is_finite() && w >= 2.0)) {
            return Err(Error::invalid("wavelengths", "each wavelength must be >= 2 pixels"));
        }
        if wavelengths.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("wavelengths", "must be strictly increasing"));
        }
        if !(sigma_on_f > 0.0 && sigma_on_f < 1.0) {
            return Err(Error::invalid(
                "sigma_on_f",
                format!("must lie in (0, 1), got {sigma_on_f}"),
            ));
        }
        Ok(Self {
            wavelengths,
            sigma_on_f,
        })
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn sigma_on_f(&self) -> f64 {
        self.sigma_on_f
    }

    /// Radial transfer function of scale `scale` at angular frequency `omega`
    /// (radians/pixel); zero at DC.
    pub fn gain(&self, scale: usize, omega: f64) -> f64 {
        let omega0 = 2.0 * std::f64::consts::PI / self.wavelengths[scale];
        if omega <= 0.0 {
            return 0.0;
        }
        let log_ratio = (omega / omega0).ln();
        (-(log_ratio * log_ratio) / (2.0 * self.sigma_on_f.ln().powi(2))).exp()
    }
}

/// Parameters of [`bone_probability_map`].
#[derive(Debug, Clone, PartialEq)]
pub struct BpmConfig {
    pub filter_bank: FilterBankConfig,
    /// Noise floor `τ` as a fraction of the largest even-tensor magnitude of
    /// each scale.
    ///
    /// The symmetry ratio is insensitive to contrast, so this floor is what
    /// separates a bright interface from speckle. Below roughly 0.2 the
    /// negative side lobes of a band-passed ridge and speckle blobs start
    /// to win over the ridge itself.
    pub tau_fraction: f64,
    /// Shadow-map window parameter, pixels. Not part of the map itself.
    pub shadow_sigma: f64,
}

impl Default for BpmConfig {
    fn default() -> Self {
        Self {
            filter_bank: FilterBankConfig::default(),
            tau_fraction: 0.3,
            shadow_sigma: 5.0,
        }
    }
}

impl BpmConfig {
    pub fn validate(&self) -> Result<()> {
        FilterBankConfig::new(self.filter_bank.wavelengths.clone(), self.filter_bank.sigma_on_f)?;
        if !(self.tau_fraction.is_finite() && self.tau_fraction >= 0.0) {
            return Err(Error::invalid("tau_fraction", "must be >= 0"));
        }
        if !(self.shadow_sigma.is_finite() && self.shadow_sigma > 0.0) {
            return Err(Error::invalid("shadow_sigma", "must be > 0"));
        }
        Ok(())
    }
}

/// Even component `m1` and odd components `m2`, `m3` of a monogenic signal.
#[derive(Debug, Clone, PartialEq)]
pub struct MonogenicField {
    pub m1: Array2<f64>,
    pub m2: Array2<f64>,
    pub m3: Array2<f64>,
}

impl MonogenicField {
    pub fn energy(&self) -> Array2<f64> {
        let mut e = Array2::zeros(self.m1.dim());
        Zip::from(&mut e)
            .and(&self.m1)
            .and(&self.m2)
            .and(&self.m3)
            .for_each(|e, &a, &b, &c| *e = a * a + b * b + c * c);
        e
    }
}

/// Scalar phase-tensor fields of one band-passed image.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTensor {
    /// Frobenius norm of the Hessian outer product.
    pub even: Array2<f64>,
    /// Frobenius norm of the symmetrized gradient / Laplacian-gradient product.
    pub odd: Array2<f64>,
    /// Local phase tensor `sqrt(even² + odd²) · cos(atan2(odd, even))`.
    pub lpt: Array2<f64>,
}

/// Values in `[0, 1]`; exact 0 and 1 endpoints unless the map is all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BoneProbabilityMap {
    values: Array2<f64>,
}

impl BoneProbabilityMap {
    /// Wrap values already in `[0, 1]`.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && (0.0..=1.0).contains(v))) {
            return Err(Error::invalid("bpm", "values must be finite and in [0, 1]"));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}

fn check_non_empty(image: &Array2<f64>) -> Result<()> {
    if image.is_empty() {
        return Err(Error::invalid("image", "image is empty"));
    }
    Ok(())
}

/// Cumulative sum of squared intensity down each column (row 0 included).
pub fn integrated_backscatter(image: &Array2<f64>) -> Result<Array2<f64>> {
    check_non_empty(image)?;
    let mut out = image.mapv(|v| v * v);
    for mut col in out.columns_mut() {
        let mut acc = 0.0;
        for v in col.iter_mut() {
            acc += *v;
            *v = acc;
        }
    }
    Ok(out)
}

/// [`integrated_backscatter`] divided by its global maximum.
pub fn normalized_backscatter(image: &Array2<f64>) -> Result<Array2<f64>> {
    let mut ibs = integrated_backscatter(image)?;
    let max = ibs.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        ibs.mapv_inplace(|v| v / max);
    }
    Ok(ibs)
}

/// Per-column Gaussian-weighted mean over each pixel and the `ceil(3σ)`
/// pixels above it, weights `exp(-i²/(2σ²))` renormalized at the top edge.
pub fn shadow_map(image: &Array2<f64>, sigma: f64) -> Result<Array2<f64>> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid("sigma", format!("must be > 0, got {sigma}")));
    }
    let window = (3.0 * sigma).ceil() as usize;
    let weights: Vec<f64> = (0..=window)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let (rows, cols) = image.dim();
    let mut out = Array2::zeros((rows, cols));
    for c in 0..cols {
        for r in 0..rows {
            let mut num = 0.0;
            let mut den = 0.0;
            for (i, w) in weights.iter().enumerate().take(r.min(window) + 1) {
                num += w * image[[r - i, c]];
                den += w;
            }
            out[[r, c]] = num / den;
        }
    }
    Ok(out)
}

/// Multiply `spec` in place by the radial log-Gabor gain of `scale`.
fn apply_log_gabor(spec: &mut Array2<Complex64>, config: &FilterBankConfig, scale: usize) {
    let (rows, cols) = spec.dim();
    for ((r, c), v) in spec.indexed_iter_mut() {
        let wy = bin_frequency(r, rows);
        let wx = bin_frequency(c, cols);
        *v *= config.gain(scale, wx.hypot(wy));
    }
}

fn check_scale(image: &Array2<f64>, config: &FilterBankConfig, scale: usize) -> Result<()> {
    let (rows, cols) = image.dim();
    if rows < 8 || cols < 8 {
        return Err(Error::invalid("image", format!("needs at least 8x8 pixels, got {rows}x{cols}")));
    }
    let Some(&lambda) = config.wavelengths.get(scale) else {
        return Err(Error::invalid("scale_index", format!("no scale {scale}")));
    };
    if lambda > rows.min(cols) as f64 {
        return Err(Error::invalid(
            "wavelengths",
            format!("wavelength {lambda} exceeds image size {rows}x{cols}"),
        ));
    }
    Ok(())
}

/// Band-pass `image` with the log-Gabor filter of `scale_index`.
pub fn log_gabor_filter(
    image: &Array2<f64>,
    config: &FilterBankConfig,
    scale_index: usize,
) -> Result<Array2<f64>> {
    check_scale(image, config, scale_index)?;
    let mut spec = spectrum(image);
    apply_log_gabor(&mut spec, config, scale_index);
    fft2(&mut spec, true);
    Ok(spec.mapv(|v| v.re))
}

/// Central difference along `axis` with replicated borders.
fn diff(f: &Array2<f64>, axis: usize) -> Array2<f64> {
    let (rows, cols) = f.dim();
    let mut out = Array2::zeros((rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            let (prev, next) = if axis == 0 {
                (f[[r.saturating_sub(1), c]], f[[(r + 1).min(rows - 1), c]])
            } else {
                (f[[r, c.saturating_sub(1)]], f[[r, (c + 1).min(cols - 1)]])
            };
            out[[r, c]] = 0.5 * (next - prev);
        }
    }
    out
}

/// Second difference along `axis` with replicated borders.
fn diff2(f: &Array2<f64>, axis: usize) -> Array2<f64> {
    let (rows, cols) = f.dim();
    let mut out = Array2::zeros((rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            let (prev, next) = if axis == 0 {
                (f[[r.saturating_sub(1), c]], f[[(r + 1).min(rows - 1), c]])
            } else {
                (f[[r, c.saturating_sub(1)]], f[[r, (c + 1).min(cols - 1)]])
            };
            out[[r, c]] = next - 2.0 * f[[r, c]] + prev;
        }
    }
    out
}

/// Even and odd phase tensors of a band-passed image, reduced to scalars.
pub fn phase_tensor(band_passed: &Array2<f64>) -> PhaseTensor {
    let f = band_passed;
    let f_r = diff(f, 0);
    let f_c = diff(f, 1);
    let f_rr = diff2(f, 0);
    let f_cc = diff2(f, 1);
    let f_rc = diff(&f_r, 1);
    let laplacian = &f_rr + &f_cc;
    let l_r = diff(&laplacian, 0);
    let l_c = diff(&laplacian, 1);

    let dim = f.dim();
    let mut even = Array2::zeros(dim);
    let mut odd = Array2::zeros(dim);
    for idx in 0..dim.0 {
        for jdx in 0..dim.1 {
            let p = [idx, jdx];
            let (a, b, d) = (f_rr[p], f_rc[p], f_cc[p]);
            // H Hᵀ for the symmetric Hessian [[a, b], [b, d]]
            let e11 = a * a + b * b;
            let e12 = a * b + b * d;
            let e22 = b * b + d * d;
            even[p] = (e11 * e11 + 2.0 * e12 * e12 + e22 * e22).sqrt();

            // -0.5 (g lᵀ + l gᵀ) with g the gradient and l the Laplacian gradient
            let (g1, g2, l1, l2) = (f_r[p], f_c[p], l_r[p], l_c[p]);
            let o11 = -g1 * l1;
            let o12 = -0.5 * (g1 * l2 + g2 * l1);
            let o22 = -g2 * l2;
            odd[p] = (o11 * o11 + 2.0 * o12 * o12 + o22 * o22).sqrt();
        }
    }
    let mut lpt = Array2::zeros(dim);
    Zip::from(&mut lpt)
        .and(&even)
        .and(&odd)
        .for_each(|l, &e: &f64, &o: &f64| *l = e.hypot(o) * o.atan2(e).cos());
    PhaseTensor { even, odd, lpt }
}

/// Monogenic signal of `lpt` band-passed at scale `scale_index`.
///
/// `m1` is the band-passed signal; `m2`/`m3` are the real and imaginary
/// parts of its Riesz transform with multiplier `(ω_x + iω_y)/|ω|`, where
/// `ω_x` is the lateral and `ω_y` the axial frequency.
pub fn monogenic(
    lpt: &Array2<f64>,
    config: &FilterBankConfig,
    scale_index: usize,
) -> Result<MonogenicField> {
    check_scale(lpt, config, scale_index)?;
    let (rows, cols) = lpt.dim();
    let mut band = spectrum(lpt);
    apply_log_gabor(&mut band, config, scale_index);
    let mut riesz = band.clone();
    for ((r, c), v) in riesz.indexed_iter_mut() {
        let wy = bin_frequency(r, rows);
        let wx = bin_frequency(c, cols);
        let norm = wx.hypot(wy);
        *v = if norm == 0.0 {
            Complex64::default()
        } else {
            *v * Complex64::new(wx / norm, wy / norm)
        };
    }
    fft2(&mut band, true);
    fft2(&mut riesz, true);
    Ok(MonogenicField {
        m1: band.mapv(|v| v.re),
        m2: riesz.mapv(|v| v.re),
        m3: riesz.mapv(|v| v.im),
    })
}

/// `LP = 1 + atan2(sqrt(m2² + m3²), m1)`, in `[1, 1 + π]`.
pub fn local_phase(field: &MonogenicField) -> Array2<f64> {
    let mut out = Array2::zeros(field.m1.dim());
    Zip::from(&mut out)
        .and(&field.m1)
        .and(&field.m2)
        .and(&field.m3)
        .for_each(|o, &a, &b, &c| *o = 1.0 + b.hypot(c).atan2(a));
    out
}

/// Rectified symmetry `max(|even| - |odd| - τ, 0)` over the monogenic
/// energy, rescaled by its global maximum into `[0, 1]`.
pub fn feature_symmetry(
    even: &Array2<f64>,
    odd: &Array2<f64>,
    field: &MonogenicField,
    tau: f64,
) -> Result<Array2<f64>> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::invalid("tau", format!("must be >= 0, got {tau}")));
    }
    if even.dim() != odd.dim() || even.dim() != field.m1.dim() {
        return Err(Error::Shape("tensor and monogenic fields differ in shape".into()));
    }
    let energy = field.energy();
    let mut fs = Array2::zeros(even.dim());
    Zip::from(&mut fs)
        .and(even)
        .and(odd)
        .and(&energy)
        .for_each(|f, &e: &f64, &o: &f64, &m| {
            *f = (e.abs() - o.abs() - tau).max(0.0) / (m + ENERGY_EPSILON);
        });
    let max = fs.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 && max.is_finite() {
        fs.mapv_inplace(|v| (v / max).clamp(0.0, 1.0));
    } else {
        fs.fill(0.0);
    }
    Ok(fs)
}

/// Bone probability map of a normalized B-mode image.
///
/// `LP · FS` is averaged across scales, multiplied by `1 - IBS` (IBS
/// rescaled to `[0, 1]`), then min-max normalized. A constant image or a
/// constant product yields an all-zero map.
pub fn bone_probability_map(image: &Array2<f64>, config: &BpmConfig) -> Result<BoneProbabilityMap> {
    check_non_empty(image)?;
    config.validate()?;
    if image.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("image", "contains non-finite values"));
    }
    let (lo, hi) = min_max(image);
    if hi - lo == 0.0 {
        return Ok(BoneProbabilityMap {
            values: Array2::zeros(image.dim()),
        });
    }

    let bank = &config.filter_bank;
    let mut product = Array2::<f64>::zeros(image.dim());
    for scale in 0..bank.wavelengths.len() {
        let band = log_gabor_filter(image, bank, scale)?;
        let tensor = phase_tensor(&band);
        let field = monogenic(&tensor.lpt, bank, scale)?;
        let lp = local_phase(&field);
        let tau = config.tau_fraction * tensor.even.iter().cloned().fold(0.0, f64::max);
        let fs = feature_symmetry(&tensor.even, &tensor.odd, &field, tau)?;
        Zip::from(&mut product)
            .and(&lp)
            .and(&fs)
            .for_each(|p, &l, &f| *p += l * f);
    }
    let scales = bank.wavelengths.len() as f64;
    let ibs = normalized_backscatter(image)?;
    Zip::from(&mut product)
        .and(&ibs)
        .for_each(|p, &b| *p = *p / scales * (1.0 - b));

    Ok(BoneProbabilityMap {
        values: min_max_normalize(product),
    })
}

pub(crate) fn min_max(values: &Array2<f64>) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Affine map onto `[0, 1]`; constant input maps to zeros.
pub(crate) fn min_max_normalize(mut values: Array2<f64>) -> Array2<f64> {
    let (lo, hi) = min_max(&values);
    let span = hi - lo;
    if !(span > 0.0 && span.is_finite()) {
        values.fill(0.0);
        return values;
    }
    values.mapv_inplace(|v| ((v - lo) / span).clamp(0.0, 1.0));
    values
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn sinusoid(rows: usize, cols: usize, wavelength: f64, lateral: bool) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |(r, c)| {
            let t = if lateral { c } else { r } as f64;
            (2.0 * PI * t / wavelength).cos()
        })
    }

    pub(crate) fn line_phantom(size: usize, line_row: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((size, size), |(r, _)| {
            let speckle: f64 = rng.random_range(0.0..0.4);
            let d = r as f64 - line_row as f64;
            (speckle + (-(d * d) / (2.0 * 1.5 * 1.5)).exp()).min(1.0)
        })
    }

    #[test]
    fn backscatter_examples() {
        let ones = Array2::from_elem((5, 2), 1.0);
        let ibs = integrated_backscatter(&ones).unwrap();
        for k in 0..5 {
            assert_eq!(ibs[[k, 0]], (k + 1) as f64);
        }
        let scaled = normalized_backscatter(&ones).unwrap();
        for k in 0..5 {
            assert!((scaled[[k, 1]] - (k + 1) as f64 / 5.0).abs() < 1e-15);
        }
        let col = Array2::from_shape_vec((2, 1), vec![0.5, 1.0]).unwrap();
        let ibs = integrated_backscatter(&col).unwrap();
        assert_eq!(ibs.column(0).to_vec(), vec![0.25, 1.25]);
        assert!(integrated_backscatter(&Array2::zeros((3, 3))).unwrap().iter().all(|&v| v == 0.0));
        assert!(integrated_backscatter(&Array2::zeros((0, 3))).is_err());
    }

    #[test]
    fn shadow_map_examples() {
        let c = Array2::from_elem((20, 4), 0.37);
        let out = shadow_map(&c, 3.0).unwrap();
        assert!(out.iter().all(|&v| (v - 0.37).abs() < 1e-15));

        let smooth = Array2::from_shape_fn((40, 3), |(r, _)| 0.5 + 0.3 * (r as f64 / 12.0).sin());
        let near = shadow_map(&smooth, 0.5).unwrap();
        for (a, b) in near.iter().zip(smooth.iter()) {
            assert!((a - b).abs() <= 0.05 * b.abs());
        }

        let step = Array2::from_shape_fn((30, 1), |(r, _)| if r < 15 { 1.0 } else { 0.0 });
        let out = shadow_map(&step, 2.0).unwrap();
        let col = out.column(0).to_vec();
        for w in col.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(col[16] > 0.0 && col[16] < 1.0);
        assert!(shadow_map(&step, 0.0).is_err());
    }

    #[test]
    fn log_gabor_examples() {
        let bank = FilterBankConfig::new(vec![16.0], 0.55).unwrap();
        let constant = Array2::from_elem((64, 64), 3.0);
        let out = log_gabor_filter(&constant, &bank, 0).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-12));

        let at_peak = sinusoid(128, 128, 16.0, true);
        let out = log_gabor_filter(&at_peak, &bank, 0).unwrap();
        for (a, b) in out.iter().zip(at_peak.iter()) {
            assert!((a - b).abs() <= 0.02);
        }

        let four = sinusoid(128, 128, 4.0, false);
        let out = log_gabor_filter(&four, &bank, 0).unwrap();
        let expected = (-(4f64.ln()).powi(2) / (2.0 * 0.55f64.ln().powi(2))).exp();
        let amp = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((amp - expected).abs() <= 0.05 * expected, "{amp} vs {expected}");

        assert!(log_gabor_filter(&Array2::zeros((32, 32)), &FilterBankConfig::new(vec![40.0], 0.55).unwrap(), 0).is_err());
        assert!(log_gabor_filter(&Array2::zeros((4, 32)), &bank, 0).is_err());
    }

    #[test]
    fn filter_bank_validation() {
        assert!(FilterBankConfig::new(vec![], 0.5).is_err());
        assert!(FilterBankConfig::new(vec![1.0], 0.5).is_err());
        assert!(FilterBankConfig::new(vec![16.0, 8.0], 0.5).is_err());
        assert!(FilterBankConfig::new(vec![16.0], 1.0).is_err());
        let b = FilterBankConfig::default();
        assert_eq!(b.gain(0, 0.0), 0.0);
        assert!((b.gain(0, 2.0 * PI / 16.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn phase_tensor_examples() {
        let zero = phase_tensor(&Array2::zeros((16, 16)));
        assert!(zero.even.iter().chain(zero.odd.iter()).chain(zero.lpt.iter()).all(|&v| v == 0.0));

        let ridge = Array2::from_shape_fn((32, 32), |(r, _)| {
            let d = r as f64 - 16.0;
            (-(d * d) / 8.0).exp()
        });
        let t = phase_tensor(&ridge);
        for c in 0..32 {
            assert!(t.even[[16, c]].abs() > t.odd[[16, c]].abs());
        }
        for ((e, o), l) in t.even.iter().zip(t.odd.iter()).zip(t.lpt.iter()) {
            let sign = o.atan2(*e).cos().signum();
            assert!(*l == 0.0 || l.signum() == sign);
        }
    }

    #[test]
    fn monogenic_examples() {
        let bank = FilterBankConfig::default();
        let field = monogenic(&Array2::from_elem((32, 32), 2.0), &bank, 0).unwrap();
        assert!(field.m2.iter().chain(field.m3.iter()).all(|v| v.abs() < 1e-12));

        let lateral = sinusoid(64, 64, 16.0, true);
        let field = monogenic(&lateral, &bank, 0).unwrap();
        let e2: f64 = field.m2.iter().map(|v| v * v).sum();
        let e3: f64 = field.m3.iter().map(|v| v * v).sum();
        assert!(e2.min(e3) <= 0.01 * (e2 + e3));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Array2::from_shape_fn((48, 40), |_| rng.random_range(-1.0..1.0));
        let field = monogenic(&noise, &bank, 0).unwrap();
        let e1: f64 = field.m1.iter().map(|v| v * v).sum();
        let odd: f64 = field.m2.iter().chain(field.m3.iter()).map(|v| v * v).sum();
        assert!((odd - e1).abs() <= 1e-6 * e1);
    }

    #[test]
    fn local_phase_examples() {
        let field = |a: f64, b: f64, c: f64| MonogenicField {
            m1: Array2::from_elem((1, 1), a),
            m2: Array2::from_elem((1, 1), b),
            m3: Array2::from_elem((1, 1), c),
        };
        assert_eq!(local_phase(&field(2.0, 0.0, 0.0))[[0, 0]], 1.0);
        assert!((local_phase(&field(0.0, 0.3, 0.4))[[0, 0]] - (1.0 + PI / 2.0)).abs() < 1e-15);
        assert!((local_phase(&field(1.0, 1.0, 0.0))[[0, 0]] - (1.0 + PI / 4.0)).abs() < 1e-15);
    }

    #[test]
    fn feature_symmetry_examples() {
        let z = Array2::<f64>::zeros((8, 8));
        let field = MonogenicField { m1: z.clone(), m2: z.clone(), m3: z.clone() };
        assert!(feature_symmetry(&z, &z, &field, 0.0).unwrap().iter().all(|&v| v == 0.0));
        let even = Array2::from_elem((8, 8), 1.0);
        let odd = Array2::from_elem((8, 8), 2.0);
        assert!(feature_symmetry(&even, &odd, &field, 0.0).unwrap().iter().all(|&v| v == 0.0));
        assert!(feature_symmetry(&even, &odd, &field, -1.0).is_err());
    }

    #[test]
    fn ridge_maximizes_feature_symmetry_row() {
        let bank = FilterBankConfig::default();
        let img = Array2::from_shape_fn((64, 64), |(r, _)| {
            let d = r as f64 - 32.0;
            (-(d * d) / 8.0).exp()
        });
        let band = log_gabor_filter(&img, &bank, 0).unwrap();
        let t = phase_tensor(&band);
        let field = monogenic(&t.lpt, &bank, 0).unwrap();
        let tau = 0.3 * t.even.iter().cloned().fold(0.0, f64::max);
        let fs = feature_symmetry(&t.even, &t.odd, &field, tau).unwrap();
        let row_max: Vec<f64> = fs.rows().into_iter().map(|r| r.iter().cloned().fold(0.0, f64::max)).collect();
        let best = row_max.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!((best as i64 - 32).abs() <= 1, "FS row max at {best}");
    }

    #[test]
    fn bpm_on_line_phantom() {
        for (seed, row) in [(11, 60), (3, 25), (7, 100)] {
            let img = line_phantom(128, row, seed);
            let bpm = bone_probability_map(&img, &BpmConfig::default()).unwrap();
            let (lo, hi) = min_max(bpm.values());
            assert_eq!((lo, hi), (0.0, 1.0));
            let (r, _) = crate::beamformer::peak_index(bpm.values());
            assert!((r as i64 - row as i64).abs() <= 2, "argmax row {r}, line at {row}");
        }
    }

    #[test]
    fn degenerate_maps_are_zero() {
        let cfg = BpmConfig::default();
        for v in [0.0, 0.6] {
            let bpm = bone_probability_map(&Array2::from_elem((64, 64), v), &cfg).unwrap();
            assert!(bpm.values().iter().all(|&x| x == 0.0));
        }
    }
}
