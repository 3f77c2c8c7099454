//! The pluggable differentiable manipulation-model abstraction, plus the
//! built-in analytic surrogates that stand in for pretrained generators.
//!
//! A model only has to expose a deterministic forward map and a
//! vector-Jacobian product; loss gradients flow through it without ever
//! materializing the Jacobian.

use crate::error::{Error, Result};
use crate::image::{ImageTensor, PixelRange};
use crate::rng::XorShift64;

/// What input shapes a model accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimsSpec {
    /// Any height/width/channel combination.
    Any,
    /// Any height/width, fixed channel count.
    Channels(usize),
    /// Fully fixed dimensions (bridge models declare these).
    Fixed { height: usize, width: usize, channels: usize },
}

impl DimsSpec {
    pub fn accepts(&self, x: &ImageTensor) -> bool {
        match *self {
            DimsSpec::Any => true,
            DimsSpec::Channels(c) => x.channels() == c,
            DimsSpec::Fixed { height, width, channels } => {
                x.shape() == (height, width, channels)
            }
        }
    }
}

/// A differentiable image-to-image model. Forward must be deterministic for
/// fixed parameters, and `vjp(x, c)` must return a tensor of x's shape.
pub trait ManipulationModel: Send + Sync {
    fn name(&self) -> &str;

    fn input_dims(&self) -> DimsSpec;

    /// Declared interval of output values; metrics rescale by its width.
    fn output_range(&self) -> PixelRange;

    /// The manipulated image. Output dims equal input dims.
    fn forward(&self, x: &ImageTensor) -> Result<ImageTensor>;

    /// Jᵀ·cotangent where J is the Jacobian of `forward` at `x`.
    fn vjp(&self, x: &ImageTensor, cotangent: &ImageTensor) -> Result<ImageTensor>;
}

fn check_cotangent(x: &ImageTensor, cotangent: &ImageTensor) -> Result<()> {
    if !x.same_shape(cotangent) {
        return Err(Error::shape_mismatch("vjp cotangent", x.shape(), cotangent.shape()));
    }
    Ok(())
}

/// Passes images through unchanged. J = I.
#[derive(Debug, Clone, Default)]
pub struct IdentitySurrogate;

impl ManipulationModel for IdentitySurrogate {
    fn name(&self) -> &str {
        "identity"
    }

    fn input_dims(&self) -> DimsSpec {
        DimsSpec::Any
    }

    fn output_range(&self) -> PixelRange {
        PixelRange::UNIT
    }

    fn forward(&self, x: &ImageTensor) -> Result<ImageTensor> {
        Ok(x.clone())
    }

    fn vjp(&self, x: &ImageTensor, cotangent: &ImageTensor) -> Result<ImageTensor> {
        check_cotangent(x, cotangent)?;
        Ok(cotangent.clone())
    }
}

/// Per-channel `gain·x + bias`; constant diagonal Jacobian.
#[derive(Debug, Clone)]
pub struct AffineSurrogate {
    gains: Vec<f64>,
    biases: Vec<f64>,
    range: PixelRange,
}

impl AffineSurrogate {
    pub fn new(gains: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        if gains.len() != biases.len() || gains.is_empty() {
            return Err(Error::InvalidInput("affine gains/biases must be equal-length and nonempty".into()));
        }
        // Declared range = image of the unit interval under every channel map.
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (&g, &b) in gains.iter().zip(&biases) {
            lo = lo.min(b).min(g + b);
            hi = hi.max(b).max(g + b);
        }
        Ok(AffineSurrogate { gains, biases, range: PixelRange { lo, hi } })
    }

    /// Gain 1, bias 0 on every channel.
    pub fn neutral(channels: usize) -> Self {
        AffineSurrogate::new(vec![1.0; channels], vec![0.0; channels]).unwrap()
    }

    /// Uniform gain across channels, zero bias.
    pub fn uniform_gain(channels: usize, gain: f64) -> Self {
        AffineSurrogate::new(vec![gain; channels], vec![0.0; channels]).unwrap()
    }
}

impl ManipulationModel for AffineSurrogate {
    fn name(&self) -> &str {
        "affine"
    }

    fn input_dims(&self) -> DimsSpec {
        DimsSpec::Channels(self.gains.len())
    }

    fn output_range(&self) -> PixelRange {
        self.range
    }

    fn forward(&self, x: &ImageTensor) -> Result<ImageTensor> {
        if !self.input_dims().accepts(x) {
            return Err(Error::Shape(format!(
                "affine surrogate expects {} channels, got {}",
                self.gains.len(),
                x.channels()
            )));
        }
        let c = x.channels();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| self.gains[i % c] * v + self.biases[i % c])
            .collect();
        Ok(x.with_data(data).with_pixel_range(self.range))
    }

    fn vjp(&self, x: &ImageTensor, cotangent: &ImageTensor) -> Result<ImageTensor> {
        check_cotangent(x, cotangent)?;
        let c = x.channels();
        let data = cotangent
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| self.gains[i % c] * v)
            .collect();
        Ok(x.with_data(data))
    }
}

const KERNEL: usize = 3;
const LAYERS: usize = 2;

#[derive(Debug, Clone)]
struct ConvLayer {
    /// Flattened [out][in][ky][kx].
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl ConvLayer {
    #[inline]
    fn weight(&self, c: usize, out: usize, inp: usize, ky: usize, kx: usize) -> f64 {
        self.weights[((out * c + inp) * KERNEL + ky) * KERNEL + kx]
    }

    /// Cross-correlation with zero same-padding, then tanh.
    fn forward(&self, h: usize, w: usize, c: usize, input: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; h * w * c];
        for y in 0..h {
            for x in 0..w {
                for o in 0..c {
                    let mut acc = self.biases[o];
                    for ky in 0..KERNEL {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for kx in 0..KERNEL {
                            let sx = x as isize + kx as isize - 1;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let base = (sy as usize * w + sx as usize) * c;
                            for i in 0..c {
                                acc += self.weight(c, o, i, ky, kx) * input[base + i];
                            }
                        }
                    }
                    out[(y * w + x) * c + o] = acc.tanh();
                }
            }
        }
        out
    }

    /// Input gradient given the layer output and the gradient at the output.
    /// tanh' is recovered from the stored activation (1 - out²); the adjoint
    /// of zero-padded cross-correlation scatters through the same taps.
    fn backward(&self, h: usize, w: usize, c: usize, output: &[f64], g_out: &[f64]) -> Vec<f64> {
        let mut g_pre = vec![0.0; h * w * c];
        for (i, g) in g_pre.iter_mut().enumerate() {
            let o = output[i];
            *g = g_out[i] * (1.0 - o * o);
        }
        let mut g_in = vec![0.0; h * w * c];
        for y in 0..h {
            for x in 0..w {
                for o in 0..c {
                    let g = g_pre[(y * w + x) * c + o];
                    if g == 0.0 {
                        continue;
                    }
                    for ky in 0..KERNEL {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for kx in 0..KERNEL {
                            let sx = x as isize + kx as isize - 1;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let base = (sy as usize * w + sx as usize) * c;
                            for i in 0..c {
                                g_in[base + i] += self.weight(c, o, i, ky, kx) * g;
                            }
                        }
                    }
                }
            }
        }
        g_in
    }
}

/// Two 3×3 conv layers (same padding, stride 1) with tanh after each — a
/// desk-scale stand-in for an attribute editor. Parameters are fully
/// determined by the seed: the documented PRNG draws, per layer, all
/// weights in [out][in][ky][kx] order and then the biases, each uniform in
/// [-0.5, 0.5).
#[derive(Debug, Clone)]
pub struct ConvSurrogate {
    seed: u64,
    channels: usize,
    layers: Vec<ConvLayer>,
    name: String,
}

impl ConvSurrogate {
    pub fn new(seed: u64, channels: usize) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!(
                "conv surrogate supports 1 or 3 channels, got {channels}"
            )));
        }
        let mut rng = XorShift64::from_seed(seed);
        let layers = (0..LAYERS)
            .map(|_| {
                let weights = (0..channels * channels * KERNEL * KERNEL)
                    .map(|_| rng.next_symmetric())
                    .collect();
                let biases = (0..channels).map(|_| rng.next_symmetric()).collect();
                ConvLayer { weights, biases }
            })
            .collect();
        Ok(ConvSurrogate { seed, channels, layers, name: format!("conv(seed={seed})") })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn check_input(&self, x: &ImageTensor) -> Result<()> {
        if !self.input_dims().accepts(x) {
            return Err(Error::Shape(format!(
                "conv surrogate expects {} channels, got {}",
                self.channels,
                x.channels()
            )));
        }
        Ok(())
    }
}

impl ManipulationModel for ConvSurrogate {
    fn name(&self) -> &str {
        &self.name
    }

    fn input_dims(&self) -> DimsSpec {
        DimsSpec::Channels(self.channels)
    }

    fn output_range(&self) -> PixelRange {
        PixelRange::symmetric(1.0)
    }

    fn forward(&self, x: &ImageTensor) -> Result<ImageTensor> {
        self.check_input(x)?;
        let (h, w, c) = x.shape();
        let mut cur = x.data().to_vec();
        for layer in &self.layers {
            cur = layer.forward(h, w, c, &cur);
        }
        ImageTensor::new(h, w, c, cur, self.output_range())
    }

    fn vjp(&self, x: &ImageTensor, cotangent: &ImageTensor) -> Result<ImageTensor> {
        self.check_input(x)?;
        check_cotangent(x, cotangent)?;
        let (h, w, c) = x.shape();
        let mut activations = Vec::with_capacity(LAYERS + 1);
        activations.push(x.data().to_vec());
        for layer in &self.layers {
            let next = layer.forward(h, w, c, activations.last().unwrap());
            activations.push(next);
        }
        let mut g = cotangent.data().to_vec();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            g = layer.backward(h, w, c, &activations[idx + 1], &g);
        }
        Ok(x.with_data(g))
    }
}

/// Looks up a built-in surrogate by the name the CLI exposes.
pub fn builtin_model(name: &str, seed: u64, channels: usize) -> Result<Box<dyn ManipulationModel>> {
    match name {
        "identity" => Ok(Box::new(IdentitySurrogate)),
        "affine" => Ok(Box::new(AffineSurrogate::neutral(channels))),
        "conv" => Ok(Box::new(ConvSurrogate::new(seed, channels)?)),
        other => Err(Error::Config(format!(
            "unknown model '{other}' (builtins: identity, affine, conv)"
        ))),
    }
}
