//! Otsu gating of a bone probability map and the attention-weighted blend
//! that produces the enhanced target image.

use ndarray::{Array2, Zip};

use crate::bone::{min_max, BoneProbabilityMap};
use crate::{Error, Result};

/// Histogram resolution used by [`otsu_threshold`].
pub const OTSU_BINS: usize = 256;

/// Blend weights of `α·I + β·BPM + γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionWeights {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl Default for AttentionWeights {
    fn default() -> Self {
        Self {
            alpha: 0.30,
            beta: 0.09,
            gamma: 0.50,
        }
    }
}

impl AttentionWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        for (field, v) in [("alpha", alpha), ("beta", beta), ("gamma", gamma)] {
            if !v.is_finite() {
                return Err(Error::invalid(field, format!("must be finite, got {v}")));
            }
        }
        if alpha < 0.0 {
            return Err(Error::invalid("alpha", format!("must be >= 0, got {alpha}")));
        }
        if beta < 0.0 {
            return Err(Error::invalid("beta", format!("must be >= 0, got {beta}")));
        }
        Ok(Self { alpha, beta, gamma })
    }

    /// `(1, 0, 0)`: the image passes through unchanged.
    pub fn identity() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.0,
            gamma: 0.0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// Result of [`beam_enhance`]. Values are kept unclamped; use
/// [`EnhancedImage::clamped`] for display or export.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancedImage {
    values: Array2<f64>,
    weights: AttentionWeights,
}

impl EnhancedImage {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn source_weights(&self) -> AttentionWeights {
        self.weights
    }

    pub fn clamped(&self) -> Array2<f64> {
        self.values.mapv(|v| v.clamp(0.0, 1.0))
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}

/// Otsu threshold of the map over a 256-bin histogram of its value range.
///
/// The threshold is the upper edge of the last bin of the lower class, and
/// the mask selects `value >= threshold`. When several consecutive splits
/// tie, the middle one is used. A constant map yields threshold 0
/// and an empty mask.
pub fn otsu_threshold(map: &BoneProbabilityMap) -> (f64, Array2<bool>) {
    let values = map.values();
    let (lo, hi) = min_max(values);
    let span = hi - lo;
    // also catches NaN
    if span.is_nan() || span <= 0.0 {
        return (0.0, Array2::from_elem(values.dim(), false));
    }

    let mut hist = [0u64; OTSU_BINS];
    for &v in values {
        let b = (((v - lo) / span) * OTSU_BINS as f64) as usize;
        hist[b.min(OTSU_BINS - 1)] += 1;
    }
    let total = values.len() as f64;
    let total_moment: f64 = hist.iter().enumerate().map(|(i, &h)| i as f64 * h as f64).sum();

    let mut between = [f64::NEG_INFINITY; OTSU_BINS - 1];
    let (mut w0, mut m0) = (0.0, 0.0);
    for (k, &h) in hist.iter().enumerate().take(OTSU_BINS - 1) {
        w0 += h as f64;
        m0 += k as f64 * h as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mu0 = m0 / w0;
        let mu1 = (total_moment - m0) / w1;
        between[k] = w0 * w1 * (mu0 - mu1).powi(2);
    }
    // Empty bins between two classes leave a plateau of equal scores; its
    // center sits midway between the classes.
    let peak = between.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let is_peak = |v: f64| v >= peak * (1.0 - 1e-12);
    let first = between.iter().position(|&v| is_peak(v)).unwrap_or(0);
    let last = first + between[first..].iter().take_while(|&&v| is_peak(v)).count() - 1;
    let best = (first + last) / 2;

    let threshold = lo + span * (best + 1) as f64 / OTSU_BINS as f64;
    (threshold, values.mapv(|v| v >= threshold))
}

/// `α·I + β·(BPM inside the Otsu mask) + γ`.
pub fn beam_enhance(
    image: &Array2<f64>,
    map: &BoneProbabilityMap,
    weights: AttentionWeights,
) -> Result<EnhancedImage> {
    if image.dim() != map.values().dim() {
        return Err(Error::Shape(format!(
            "image is {:?} but bone map is {:?}",
            image.dim(),
            map.values().dim()
        )));
    }
    let (_, mask) = otsu_threshold(map);
    let mut values = Array2::zeros(image.dim());
    Zip::from(&mut values)
        .and(image)
        .and(map.values())
        .and(&mask)
        .for_each(|o, &i, &p, &m| {
            let gated = if m { p } else { 0.0 };
            *o = weights.alpha * i + weights.beta * gated + weights.gamma;
        });
    Ok(EnhancedImage { values, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn map(values: Array2<f64>) -> BoneProbabilityMap {
        BoneProbabilityMap::from_values(values).unwrap()
    }

    #[test]
    fn bimodal_split() {
        let m = map(Array2::from_shape_fn((10, 10), |(r, _)| if r < 5 { 0.1 } else { 0.9 }));
        let (t, mask) = otsu_threshold(&m);
        assert!(t > 0.1 && t < 0.9, "threshold {t}");
        for ((r, _), &sel) in mask.indexed_iter() {
            assert_eq!(sel, r >= 5);
        }
    }

    #[test]
    fn constant_map_has_empty_mask() {
        let (t, mask) = otsu_threshold(&map(Array2::from_elem((6, 6), 0.4)));
        assert_eq!(t, 0.0);
        assert!(mask.iter().all(|&m| !m));
    }

    /// Exhaustive between-class variance search over raw sample values.
    fn brute_force_threshold(samples: &[f64]) -> f64 {
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let total: f64 = sorted.iter().sum();
        let mut best = (f64::NEG_INFINITY, 0.0);
        let mut s0 = 0.0;
        for i in 0..sorted.len() - 1 {
            s0 += sorted[i];
            let w0 = (i + 1) as f64;
            let w1 = n - w0;
            let between = w0 * w1 * (s0 / w0 - (total - s0) / w1).powi(2);
            if between > best.0 {
                best = (between, 0.5 * (sorted[i] + sorted[i + 1]));
            }
        }
        best.1
    }

    #[test]
    fn two_gaussian_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lo = Normal::new(0.2, 0.05).unwrap();
        let hi = Normal::new(0.8, 0.05).unwrap();
        let values = Array2::from_shape_fn((64, 64), |(r, _)| {
            let v: f64 = if r % 2 == 0 { lo.sample(&mut rng) } else { hi.sample(&mut rng) };
            v.clamp(0.0, 1.0)
        });
        let reference = brute_force_threshold(values.as_slice().unwrap());
        let (t, _) = otsu_threshold(&map(values));
        assert!((0.4..=0.6).contains(&t), "threshold {t}");
        assert!((0.4..=0.6).contains(&reference));
    }

    #[test]
    fn blend_identities() {
        let zeros = Array2::<f64>::zeros((4, 4));
        let out = beam_enhance(&zeros, &map(zeros.clone()), AttentionWeights::default()).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.5));

        // One dark pixel makes the map non-constant so the bright ones gate in.
        let mut ones = Array2::from_elem((4, 4), 1.0);
        ones[[0, 0]] = 0.0;
        let out = beam_enhance(&ones, &map(ones.clone()), AttentionWeights::default()).unwrap();
        assert!((out.values()[[2, 2]] - 0.89).abs() < 1e-15);
        assert_eq!(out.values()[[0, 0]], 0.5);

        let img = Array2::from_shape_fn((4, 4), |(r, c)| (r * 4 + c) as f64 / 16.0);
        let out = beam_enhance(&img, &map(img.clone()), AttentionWeights::identity()).unwrap();
        assert_eq!(out.values(), &img);
    }

    #[test]
    fn ungated_pixels_skip_the_map_term() {
        let img = Array2::from_shape_fn((8, 8), |(r, c)| ((r + c) % 5) as f64 / 4.0);
        let bpm = map(Array2::from_shape_fn((8, 8), |(r, _)| if r < 6 { 0.05 } else { 0.95 }));
        let w = AttentionWeights::default();
        let out = beam_enhance(&img, &bpm, w).unwrap();
        for ((r, c), &v) in out.values().indexed_iter() {
            let base = w.alpha() * img[[r, c]] + w.gamma();
            if r < 6 {
                assert_eq!(v, base);
            } else {
                assert!((v - (base + w.beta() * 0.95)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let a = Array2::<f64>::zeros((4, 4));
        let b = map(Array2::zeros((4, 5)));
        assert!(matches!(beam_enhance(&a, &b, AttentionWeights::default()), Err(Error::Shape(_))));
        assert!(AttentionWeights::new(-0.1, 0.0, 0.0).is_err());
        assert!(AttentionWeights::new(0.1, f64::NAN, 0.0).is_err());
        assert!(AttentionWeights::new(0.3, 0.1, -0.2).is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn output_is_monotone_and_bounded(
                pixels in proptest::collection::vec(0.0f64..1.0, 36),
                bpm in proptest::collection::vec(0.0f64..1.0, 36),
                idx in 0usize..36,
                bump in 0.0f64..1.0,
            ) {
                let img = Array2::from_shape_vec((6, 6), pixels).unwrap();
                let m = map(Array2::from_shape_vec((6, 6), bpm).unwrap());
                let w = AttentionWeights::default();
                let before = beam_enhance(&img, &m, w).unwrap();
                let mut brighter = img.clone();
                let (r, c) = (idx / 6, idx % 6);
                brighter[[r, c]] += bump;
                let after = beam_enhance(&brighter, &m, w).unwrap();
                prop_assert!(after.values()[[r, c]] >= before.values()[[r, c]]);
                for &v in before.values() {
                    prop_assert!((0.5..=0.89 + 1e-12).contains(&v));
                }
            }
        }
    }
}
