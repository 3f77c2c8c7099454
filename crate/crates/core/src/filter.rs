//! Separable 2-D filtering with reflect padding, shared by the smoothing
//! layer and the robustness blurs.
//!
//! Padding mirrors without repeating the edge sample (indices fold as
//! `-1 -> 1`, `n -> n-2`), so a constant field convolved with any
//! normalized kernel is preserved exactly.

use crate::image::ImageTensor;

/// Normalized 1-D Gaussian taps for an odd kernel size with sigma = size/6.
pub(crate) fn gaussian_taps(size: usize) -> Vec<f64> {
    let sigma = size as f64 / 6.0;
    let center = (size - 1) as f64 / 2.0;
    let mut taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - center;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Normalized 1-D uniform taps.
pub(crate) fn uniform_taps(size: usize) -> Vec<f64> {
    vec![1.0 / size as f64; size]
}

/// Folds an out-of-range index back into [0, n) by mirror reflection.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - j;
    }
    j as usize
}

/// Applies the same 1-D kernel along rows then columns of every channel.
/// For a separable kernel this equals the full 2-D convolution because the
/// reflect extension of a rectangle factors per axis.
pub(crate) fn separable_filter(x: &ImageTensor, taps: &[f64]) -> ImageTensor {
    debug_assert!(taps.len() % 2 == 1);
    let (h, w, c) = x.shape();
    let r = (taps.len() / 2) as isize;

    let mut horiz = vec![0.0; h * w * c];
    for y in 0..h {
        for xx in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (k, &t) in taps.iter().enumerate() {
                    let sx = reflect(xx as isize + k as isize - r, w);
                    acc += t * x.get(y, sx, ch);
                }
                horiz[(y * w + xx) * c + ch] = acc;
            }
        }
    }

    let mut out = vec![0.0; h * w * c];
    for y in 0..h {
        for xx in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (k, &t) in taps.iter().enumerate() {
                    let sy = reflect(y as isize + k as isize - r, h);
                    acc += t * horiz[(sy * w + xx) * c + ch];
                }
                out[(y * w + xx) * c + ch] = acc;
            }
        }
    }
    x.with_data(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{NormKind, PixelRange};

    #[test]
    fn taps_are_normalized() {
        for size in [1, 3, 5, 7, 11] {
            let sum: f64 = gaussian_taps(size).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            let sum: f64 = uniform_taps(size).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reflect_folds_without_edge_repeat() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-2, 5), 2);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(6, 5), 2);
        assert_eq!(reflect(0, 1), 0);
        assert_eq!(reflect(-3, 1), 0);
    }

    #[test]
    fn constant_field_preserved() {
        let x = ImageTensor::constant(5, 7, 3, 0.42);
        let y = separable_filter(&x, &gaussian_taps(5));
        let err = y.sub(&x).unwrap().norm(NormKind::Linf).unwrap();
        assert!(err < 1e-12);
    }

    #[test]
    fn impulse_reproduces_kernel_center() {
        let mut data = vec![0.0; 9 * 9];
        data[(4 * 9 + 4) as usize] = 1.0;
        let x = ImageTensor::new(9, 9, 1, data, PixelRange::UNIT).unwrap();
        let taps = gaussian_taps(3);
        let y = separable_filter(&x, &taps);
        let expected = taps[1] * taps[1];
        assert!((y.get(4, 4, 0) - expected).abs() < 1e-15);
    }
}
