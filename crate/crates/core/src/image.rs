//! Image tensor representation, pixel-domain conventions, norms, and the
//! ε-ball / range clipping primitives everything else builds on.
//!
//! An [`ImageTensor`] is an immutable H×W×C block of `f64` values in
//! row-major, channel-interleaved order, carrying the closed pixel interval
//! it is meant to live in. The interval is metadata: values may leave it
//! freely (gradients do), and only the explicit clip operations re-impose it.

use crate::error::{Error, Result};

/// Closed pixel interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelRange {
    pub lo: f64,
    pub hi: f64,
}

impl PixelRange {
    pub const UNIT: PixelRange = PixelRange { lo: 0.0, hi: 1.0 };

    /// Symmetric range `[-half, half]`.
    pub fn symmetric(half: f64) -> Self {
        PixelRange { lo: -half, hi: half }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

impl Default for PixelRange {
    fn default() -> Self {
        PixelRange::UNIT
    }
}

/// The three norms used anywhere in the artifact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// Σ|v|
    L1Sum,
    /// (1/N)·Σv²
    L2Mean,
    /// max|v|
    Linf,
}

/// H×W×C floating image; the carrier of originals, adversarial images, and
/// perturbations. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
    pixel_range: PixelRange,
}

impl ImageTensor {
    /// Builds a tensor, checking the data length and channel count.
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
        pixel_range: PixelRange,
    ) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::InvalidInput(format!(
                "data length {} does not match {height}x{width}x{channels} = {expected}",
                data.len()
            )));
        }
        Ok(ImageTensor { height, width, channels, data, pixel_range })
    }

    /// All-zero tensor on the unit range.
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        ImageTensor {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
            pixel_range: PixelRange::UNIT,
        }
    }

    /// Constant-valued tensor on the unit range.
    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Self {
        ImageTensor {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
            pixel_range: PixelRange::UNIT,
        }
    }

    /// Uniform-noise tensor on the unit range, reproducible from the seed
    /// via the crate's documented PRNG. Used for seeded test suites and
    /// the gradient-check harness.
    pub fn seeded_noise(height: usize, width: usize, channels: usize, seed: u64) -> Self {
        let mut rng = crate::rng::XorShift64::from_seed(seed);
        ImageTensor {
            height,
            width,
            channels,
            data: (0..height * width * channels).map(|_| rng.next_uniform()).collect(),
            pixel_range: PixelRange::UNIT,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn pixel_range(&self) -> PixelRange {
        self.pixel_range
    }

    /// Same data, re-stamped with a different declared range.
    pub fn with_pixel_range(mut self, range: PixelRange) -> Self {
        self.pixel_range = range;
        self
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn same_shape(&self, other: &ImageTensor) -> bool {
        self.shape() == other.shape()
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        debug_assert!(y < self.height && x < self.width && c < self.channels);
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Elementwise map; keeps shape and declared range.
    pub(crate) fn map(&self, f: impl Fn(f64) -> f64) -> ImageTensor {
        ImageTensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
            pixel_range: self.pixel_range,
        }
    }

    pub(crate) fn zip_map(&self, other: &ImageTensor, f: impl Fn(f64, f64) -> f64) -> ImageTensor {
        debug_assert!(self.same_shape(other));
        ImageTensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
            pixel_range: self.pixel_range,
        }
    }

    /// Rebuilds a tensor of this shape from raw values.
    pub(crate) fn with_data(&self, data: Vec<f64>) -> ImageTensor {
        debug_assert_eq!(data.len(), self.data.len());
        ImageTensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data,
            pixel_range: self.pixel_range,
        }
    }

    fn check_same_shape(&self, other: &ImageTensor, what: &str) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::shape_mismatch(what, self.shape(), other.shape()));
        }
        Ok(())
    }

    /// Elementwise sum.
    pub fn add(&self, other: &ImageTensor) -> Result<ImageTensor> {
        self.check_same_shape(other, "add")?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    /// Elementwise difference.
    pub fn sub(&self, other: &ImageTensor) -> Result<ImageTensor> {
        self.check_same_shape(other, "sub")?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    /// Scale by a scalar.
    pub fn scale(&self, k: f64) -> ImageTensor {
        self.map(|v| k * v)
    }

    /// Inner product over the flattened tensors.
    pub fn dot(&self, other: &ImageTensor) -> Result<f64> {
        self.check_same_shape(other, "dot")?;
        Ok(self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| a * b)
            .sum())
    }

    /// Norm of the flattened tensor.
    pub fn norm(&self, kind: NormKind) -> Result<f64> {
        if self.data.is_empty() {
            return Err(Error::InvalidInput("norm of an empty tensor".into()));
        }
        Ok(match kind {
            NormKind::L1Sum => self.data.iter().map(|v| v.abs()).sum(),
            NormKind::L2Mean => {
                self.data.iter().map(|v| v * v).sum::<f64>() / self.data.len() as f64
            }
            NormKind::Linf => self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        })
    }

    /// Euclidean length, used for relative orthogonality tolerances.
    pub fn euclidean(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Clips every element into the ε-ball around `anchor`, then into the
    /// anchor's declared pixel range. The result is the closest in-ball
    /// value to each candidate element.
    pub fn clip_to_ball(&self, anchor: &ImageTensor, epsilon: f64) -> Result<ImageTensor> {
        self.check_same_shape(anchor, "clip_to_ball")?;
        if epsilon.is_nan() || epsilon < 0.0 {
            return Err(Error::InvalidInput(format!("epsilon must be >= 0, got {epsilon}")));
        }
        let range = anchor.pixel_range;
        let data = self
            .data
            .iter()
            .zip(anchor.data.iter())
            .map(|(&c, &a)| c.clamp(a - epsilon, a + epsilon).clamp(range.lo, range.hi))
            .collect();
        Ok(ImageTensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data,
            pixel_range: range,
        })
    }

    /// Errors unless both dimensions are even (one-level DWT requirement,
    /// enforced at engine entry rather than construction).
    pub fn require_even_dims(&self) -> Result<()> {
        if !self.height.is_multiple_of(2) || !self.width.is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "even height and width required, got {}x{}",
                self.height, self.width
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(h: usize, w: usize, c: usize, data: &[f64]) -> ImageTensor {
        ImageTensor::new(h, w, c, data.to_vec(), PixelRange::UNIT).unwrap()
    }

    #[test]
    fn norm_l1_sum_definition() {
        let t = tensor(2, 1, 1, &[3.0, -1.0]);
        assert_eq!(t.norm(NormKind::L1Sum).unwrap(), 4.0);
    }

    #[test]
    fn norm_zero_tensor_is_zero() {
        let t = ImageTensor::zeros(3, 5, 1);
        assert_eq!(t.norm(NormKind::L1Sum).unwrap(), 0.0);
        assert_eq!(t.norm(NormKind::L2Mean).unwrap(), 0.0);
        assert_eq!(t.norm(NormKind::Linf).unwrap(), 0.0);
    }

    #[test]
    fn norm_l2_mean_constant() {
        let t = tensor(2, 2, 1, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(t.norm(NormKind::L2Mean).unwrap(), 1.0);
    }

    #[test]
    fn norm_empty_tensor_errors() {
        let t = ImageTensor::new(0, 0, 1, vec![], PixelRange::UNIT).unwrap();
        assert!(matches!(t.norm(NormKind::L1Sum), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn clip_to_ball_examples() {
        let anchor = tensor(1, 1, 1, &[0.5]);
        let cases = [(0.58, 0.55), (0.52, 0.52), (0.40, 0.45)];
        for (candidate, expected) in cases {
            let c = tensor(1, 1, 1, &[candidate]);
            let out = c.clip_to_ball(&anchor, 0.05).unwrap();
            assert!((out.data()[0] - expected).abs() < 1e-15, "{candidate} -> {expected}");
        }
    }

    #[test]
    fn clip_to_ball_respects_pixel_range() {
        let anchor = tensor(1, 1, 1, &[0.01]);
        let candidate = tensor(1, 1, 1, &[-0.2]);
        let out = candidate.clip_to_ball(&anchor, 0.05).unwrap();
        assert_eq!(out.data()[0], 0.0); // ball allows -0.04, range floor wins
    }

    #[test]
    fn clip_to_ball_is_idempotent() {
        let mut rng = crate::rng::XorShift64::from_seed(11);
        for _ in 0..200 {
            let anchor = ImageTensor::new(
                2,
                2,
                1,
                (0..4).map(|_| rng.next_uniform()).collect(),
                PixelRange::UNIT,
            )
            .unwrap();
            let cand = ImageTensor::new(
                2,
                2,
                1,
                (0..4).map(|_| rng.next_uniform() * 2.0 - 0.5).collect(),
                PixelRange::UNIT,
            )
            .unwrap();
            let eps = rng.next_uniform() * 0.2;
            let once = cand.clip_to_ball(&anchor, eps).unwrap();
            let twice = once.clip_to_ball(&anchor, eps).unwrap();
            assert_eq!(once.data(), twice.data());
        }
    }

    #[test]
    fn clip_to_ball_bounds_linf_over_random_triples() {
        let mut rng = crate::rng::XorShift64::from_seed(4242);
        for _ in 0..10_000 {
            let anchor = ImageTensor::new(
                1,
                2,
                1,
                vec![rng.next_uniform(), rng.next_uniform()],
                PixelRange::UNIT,
            )
            .unwrap();
            let cand = ImageTensor::new(
                1,
                2,
                1,
                vec![rng.next_uniform() * 3.0 - 1.0, rng.next_uniform() * 3.0 - 1.0],
                PixelRange::UNIT,
            )
            .unwrap();
            let eps = rng.next_uniform() * 0.5;
            let out = cand.clip_to_ball(&anchor, eps).unwrap();
            let linf = out.sub(&anchor).unwrap().norm(NormKind::Linf).unwrap();
            assert!(linf <= eps + 1e-12);
        }
    }

    #[test]
    fn clip_shape_mismatch_errors() {
        let a = ImageTensor::zeros(2, 2, 1);
        let b = ImageTensor::zeros(2, 3, 1);
        assert!(matches!(b.clip_to_ball(&a, 0.1), Err(Error::Shape(_))));
    }

    #[test]
    fn elementwise_examples() {
        let a = tensor(1, 2, 1, &[1.0, 2.0]);
        let b = tensor(1, 2, 1, &[3.0, 4.0]);
        assert_eq!(a.dot(&b).unwrap(), 11.0);
        let z = a.sub(&a).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        let s = tensor(1, 2, 1, &[1.0, -1.0]).scale(0.5);
        assert_eq!(s.data(), &[0.5, -0.5]);
    }

    #[test]
    fn dot_is_symmetric_and_l1_homogeneous() {
        let mut rng = crate::rng::XorShift64::from_seed(99);
        for _ in 0..100 {
            let a = ImageTensor::new(
                2,
                3,
                1,
                (0..6).map(|_| rng.next_symmetric() * 4.0).collect(),
                PixelRange::UNIT,
            )
            .unwrap();
            let b = ImageTensor::new(
                2,
                3,
                1,
                (0..6).map(|_| rng.next_symmetric() * 4.0).collect(),
                PixelRange::UNIT,
            )
            .unwrap();
            assert_eq!(a.dot(&b).unwrap(), b.dot(&a).unwrap());
            let k = rng.next_symmetric() * 10.0;
            let lhs = a.scale(k).norm(NormKind::L1Sum).unwrap();
            let rhs = k.abs() * a.norm(NormKind::L1Sum).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
        }
    }

    #[test]
    fn constructor_rejects_bad_shapes() {
        assert!(ImageTensor::new(2, 2, 2, vec![0.0; 8], PixelRange::UNIT).is_err());
        assert!(ImageTensor::new(2, 2, 1, vec![0.0; 3], PixelRange::UNIT).is_err());
    }
}
