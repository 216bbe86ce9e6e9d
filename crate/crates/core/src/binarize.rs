//! Gray-scale conversion and statistical binarization of spectrograms.
//!
//! Power is converted to dB with a floor `dyn_range_db` below the image
//! maximum, then min-max normalized to `[0, 1]` per image. The binarization
//! level is `gamma = coefficient * sigma + mu` over the normalized pixels,
//! and a pixel is white iff its intensity is strictly greater than `gamma`.

use thiserror::Error;

use crate::dsp::{Spectrogram, TfGeometry};
use crate::grid::Grid;

pub const DEFAULT_GAMMA_COEFFICIENT: f64 = 1.75;
pub const DEFAULT_DYN_RANGE_DB: f64 = 60.0;

#[derive(Debug, Error)]
pub enum BinarizeError {
    #[error("mask level computed for a {expected:?} image applied to a {actual:?} image")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntensityImage {
    pub pixels: Grid<f64>,
    pub geometry: TfGeometry,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskLevel {
    pub gamma: f64,
    pub mu: f64,
    pub sigma: f64,
    pub coefficient: f64,
    /// Shape of the image the statistics were taken over.
    pub shape: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryImage {
    pub bits: Grid<bool>,
    pub geometry: TfGeometry,
}

impl BinaryImage {
    pub fn white_count(&self) -> usize {
        self.bits.as_slice().iter().filter(|&&b| b).count()
    }

    pub fn white_fraction(&self) -> f64 {
        if self.bits.is_empty() {
            0.0
        } else {
            self.white_count() as f64 / self.bits.as_slice().len() as f64
        }
    }
}

pub fn to_intensity_image(spec: &Spectrogram, dyn_range_db: f64) -> IntensityImage {
    assert!(dyn_range_db > 0.0, "dynamic range must be positive");
    let max_power = spec
        .power
        .as_slice()
        .iter()
        .cloned()
        .fold(0.0_f64, f64::max);
    if max_power <= 0.0 {
        return IntensityImage {
            pixels: spec.power.map(|_| 0.0),
            geometry: spec.geometry,
        };
    }

    let top_db = 10.0 * max_power.log10();
    let floor_db = top_db - dyn_range_db;
    let db = spec.power.map(|&p| {
        if p > 0.0 {
            (10.0 * p.log10()).max(floor_db)
        } else {
            floor_db
        }
    });
    let lo = db.as_slice().iter().cloned().fold(f64::INFINITY, f64::min);
    let range = top_db - lo;
    let pixels = if range > 0.0 {
        db.map(|&v| ((v - lo) / range).clamp(0.0, 1.0))
    } else {
        db.map(|_| 0.0)
    };
    IntensityImage {
        pixels,
        geometry: spec.geometry,
    }
}

/// Mean and population standard deviation of the image, single pass
/// (Welford), combined into the binarization level.
pub fn compute_mask_level(img: &IntensityImage, coefficient: f64) -> MaskLevel {
    let mut count = 0.0;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for &x in img.pixels.as_slice() {
        count += 1.0;
        let delta = x - mean;
        mean += delta / count;
        m2 += delta * (x - mean);
    }
    let sigma = if count > 0.0 { (m2 / count).sqrt() } else { 0.0 };
    MaskLevel {
        gamma: coefficient * sigma + mean,
        mu: mean,
        sigma,
        coefficient,
        shape: img.pixels.shape(),
    }
}

pub fn apply_mask(img: &IntensityImage, level: &MaskLevel) -> Result<BinaryImage, BinarizeError> {
    if img.pixels.shape() != level.shape {
        return Err(BinarizeError::ShapeMismatch {
            expected: level.shape,
            actual: img.pixels.shape(),
        });
    }
    Ok(BinaryImage {
        bits: img.pixels.map(|&p| p > level.gamma),
        geometry: img.geometry,
    })
}

/// Intensity conversion, level and mask in one step.
pub fn binarize(spec: &Spectrogram, dyn_range_db: f64, coefficient: f64) -> (BinaryImage, MaskLevel) {
    let img = to_intensity_image(spec, dyn_range_db);
    let level = compute_mask_level(&img, coefficient);
    let bw = apply_mask(&img, &level).expect("level computed from this image");
    (bw, level)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    use super::*;

    fn geometry() -> TfGeometry {
        TfGeometry {
            time_bin_s: 0.0205,
            freq_bin_hz: 3.90625,
            f0_hz: 78.125,
            start_time: 0.0,
            frame_offset_s: 0.128,
        }
    }

    fn spectrogram(rows: usize, cols: usize, power: Vec<f64>) -> Spectrogram {
        Spectrogram {
            power: Grid::from_vec(rows, cols, power),
            geometry: geometry(),
        }
    }

    fn image(rows: usize, cols: usize, pixels: Vec<f64>) -> IntensityImage {
        IntensityImage {
            pixels: Grid::from_vec(rows, cols, pixels),
            geometry: geometry(),
        }
    }

    #[test]
    fn constant_power_maps_to_zero() {
        let img = to_intensity_image(&spectrogram(4, 5, vec![3.0; 20]), 60.0);
        assert!(img.pixels.as_slice().iter().all(|&p| p == 0.0));
        let img = to_intensity_image(&spectrogram(4, 5, vec![0.0; 20]), 60.0);
        assert!(img.pixels.as_slice().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn two_valued_power_maps_to_zero_and_one() {
        let power: Vec<f64> = (0..20).map(|i| if i % 3 == 0 { 1e-3 } else { 1e-1 }).collect();
        let img = to_intensity_image(&spectrogram(4, 5, power.clone()), 60.0);
        for (p, v) in power.iter().zip(img.pixels.as_slice()) {
            assert_eq!(*v, if *p < 1e-2 { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn power_below_dynamic_range_is_floored() {
        // 1, 1e-3 (30 dB down), 1e-9 and 0 (beyond 60 dB) -> floor.
        let img = to_intensity_image(&spectrogram(1, 4, vec![1.0, 1e-3, 1e-9, 0.0]), 60.0);
        let px = img.pixels.as_slice();
        assert_eq!(px[0], 1.0);
        assert!((px[1] - 0.5).abs() < 1e-12);
        assert_eq!(px[2], 0.0);
        assert_eq!(px[3], 0.0);
    }

    #[test]
    fn constant_image_level() {
        let level = compute_mask_level(&image(3, 3, vec![0.4; 9]), 1.75);
        assert!((level.mu - 0.4).abs() < 1e-15);
        assert_eq!(level.sigma, 0.0);
        assert!((level.gamma - 0.4).abs() < 1e-15);
        let bw = apply_mask(&image(3, 3, vec![0.4; 9]), &level).unwrap();
        assert_eq!(bw.white_count(), 0);
    }

    #[test]
    fn bernoulli_half_level() {
        let px: Vec<f64> = (0..64).map(|i| (i % 2) as f64).collect();
        let img = image(8, 8, px);
        let level = compute_mask_level(&img, 1.75);
        assert_eq!(level.mu, 0.5);
        assert_eq!(level.sigma, 0.5);
        assert_eq!(level.gamma, 1.375);
        assert_eq!(apply_mask(&img, &level).unwrap().white_count(), 0);
    }

    #[test]
    fn bimodal_image_whitens_only_the_bright_cluster() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 2500;
        let bright: Vec<bool> = (0..n).map(|i| i % 25 == 0).collect();
        let px: Vec<f64> = bright
            .iter()
            .map(|&b| if b { 1.0 } else { rng.random_range(0.0..0.05) })
            .collect();
        let img = image(50, 50, px);
        let level = compute_mask_level(&img, 1.75);
        // 4% ones: mu ~ 0.064, sigma ~ 0.19, gamma ~ 0.40 sits between clusters.
        assert!(level.gamma > 0.05 && level.gamma < 1.0);
        let bw = apply_mask(&img, &level).unwrap();
        assert_eq!(bw.bits.as_slice(), &bright[..]);
    }

    #[test]
    fn shape_mismatch() {
        let level = compute_mask_level(&image(2, 2, vec![0.0; 4]), 1.75);
        assert!(matches!(
            apply_mask(&image(1, 4, vec![0.0; 4]), &level),
            Err(BinarizeError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn gaussian_images_whiten_the_upper_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let px: Vec<f64> = (0..64 * 64).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let img = image(64, 64, px);
            let level = compute_mask_level(&img, 1.75);
            let frac = apply_mask(&img, &level).unwrap().white_fraction();
            assert!((0.01..=0.08).contains(&frac), "white fraction {frac}");
        }
    }

    proptest! {
        #[test]
        fn raising_gamma_only_removes_white_pixels(
            px in prop::collection::vec(0.0f64..1.0, 36),
            bump in 0.0f64..0.5,
        ) {
            let img = image(6, 6, px);
            let level = compute_mask_level(&img, 1.75);
            let higher = MaskLevel { gamma: level.gamma + bump, ..level };
            let a = apply_mask(&img, &level).unwrap();
            let b = apply_mask(&img, &higher).unwrap();
            for (x, y) in a.bits.as_slice().iter().zip(b.bits.as_slice()) {
                prop_assert!(*x || !*y);
            }
        }

        #[test]
        fn binarization_is_gain_invariant(
            power in prop::collection::vec(1e-6f64..1.0, 48),
            exponent in -4i32..4,
        ) {
            let c2 = 10f64.powi(exponent);
            let scaled: Vec<f64> = power.iter().map(|p| p * c2).collect();
            let (a, _) = binarize(&spectrogram(6, 8, power), 60.0, 1.75);
            let (b, _) = binarize(&spectrogram(6, 8, scaled), 60.0, 1.75);
            prop_assert_eq!(a.bits, b.bits);
        }
    }
}
