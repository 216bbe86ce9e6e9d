//! Analysis and design windows.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Spectrogram analysis window. All windows are the symmetric variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    #[default]
    Blackman,
    Hann,
    Hamming,
    Rectangular,
}

impl WindowKind {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        if len == 1 {
            return vec![1.0];
        }
        let denom = (len - 1) as f64;
        (0..len)
            .map(|n| {
                let x = 2.0 * PI * n as f64 / denom;
                match self {
                    WindowKind::Blackman => 0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos(),
                    WindowKind::Hann => 0.5 - 0.5 * x.cos(),
                    WindowKind::Hamming => 0.54 - 0.46 * x.cos(),
                    WindowKind::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

/// Chebyshev polynomial of the first kind, valid for any real argument.
fn chebyshev_poly(order: usize, x: f64) -> f64 {
    let m = order as f64;
    if x.abs() <= 1.0 {
        (m * x.acos()).cos()
    } else if x > 1.0 {
        (m * x.acosh()).cosh()
    } else {
        let sign = if order.is_multiple_of(2) { 1.0 } else { -1.0 };
        sign * (m * (-x).acosh()).cosh()
    }
}

/// Dolph-Chebyshev window of odd length `len` with all sidelobes
/// `attenuation_db` below the main lobe. Normalized to a unit peak.
pub fn dolph_chebyshev(len: usize, attenuation_db: f64) -> Vec<f64> {
    assert!(len % 2 == 1, "Dolph-Chebyshev window length must be odd");
    if len == 1 {
        return vec![1.0];
    }
    let order = len - 1;
    let ripple = 10f64.powf(attenuation_db / 20.0);
    let x0 = (ripple.acosh() / order as f64).cosh();
    let n_f = len as f64;
    let half = order / 2;

    // Samples of the window's frequency response on the len-point DFT grid.
    let spectrum: Vec<f64> = (1..=half)
        .map(|k| chebyshev_poly(order, x0 * (PI * k as f64 / n_f).cos()))
        .collect();

    let mut w: Vec<f64> = (0..len)
        .map(|n| {
            let centered = n as f64 - half as f64;
            let sum: f64 = spectrum
                .iter()
                .enumerate()
                .map(|(i, &p)| p * (2.0 * PI * (i + 1) as f64 * centered / n_f).cos())
                .sum();
            (ripple + 2.0 * sum) / n_f
        })
        .collect();

    let peak = w.iter().cloned().fold(f64::MIN, f64::max);
    for v in &mut w {
        *v /= peak;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blackman_is_symmetric_with_unit_center() {
        let w = WindowKind::Blackman.coefficients(513);
        assert!(w[0].abs() < 1e-12);
        assert!((w[256] - 1.0).abs() < 1e-12);
        for i in 0..513 {
            assert!((w[i] - w[512 - i]).abs() < 1e-12);
        }
    }

    #[test]
    fn chebyshev_matches_reference_values() {
        // Reference: scipy.signal.windows.chebwin(11, 40).
        let expected = [
            0.117905297, 0.277629355, 0.506434348, 0.746832593, 0.930919514, 1.0, 0.930919514,
            0.746832593, 0.506434348, 0.277629355, 0.117905297,
        ];
        let w = dolph_chebyshev(11, 40.0);
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn chebyshev_sidelobes_are_equiripple() {
        let len = 61;
        let atten = 45.0;
        let w = dolph_chebyshev(len, atten);
        // Dense DTFT magnitude on [0, pi].
        let grid = 8192;
        let mag: Vec<f64> = (0..=grid)
            .map(|i| {
                let omega = PI * i as f64 / grid as f64;
                let (re, im) = w.iter().enumerate().fold((0.0, 0.0), |(re, im), (n, &c)| {
                    (re + c * (omega * n as f64).cos(), im - c * (omega * n as f64).sin())
                });
                (re * re + im * im).sqrt()
            })
            .collect();
        let peak = mag[0];
        // Skip the main lobe: walk until the first local minimum.
        let mut i = 1;
        while mag[i + 1] < mag[i] {
            i += 1;
        }
        let max_side = mag[i..].iter().cloned().fold(0.0, f64::max);
        let level = 20.0 * (max_side / peak).log10();
        assert!((level + atten).abs() < 0.05, "sidelobe level {level}");
    }
}
