//! The three supervision terms — output MSE, SSIM, low-frequency L1 — each
//! exposed as a raw value plus its analytic gradient with respect to the
//! adversarial image, and a finite-difference oracle to check them.
//!
//! Losses carry no ascent/descent orientation; the engine decides signs.

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::models::ManipulationModel;
use crate::wavelet::low_freq_reconstruct;

/// Which SSIM numerator the structural term uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SsimFormulation {
    /// Windowed covariance (2σ_xy + C2): the established SSIM index.
    #[default]
    Standard,
    /// Literal product of standard deviations (2σ_x·σ_y + C2), selectable
    /// for comparison; its sqrt kink at zero variance uses subgradient 0.
    VarianceProduct,
}

/// Gaussian-windowed SSIM parameters.
#[derive(Debug, Clone)]
pub struct SsimConfig {
    window_size: usize,
    /// 2-D window weights (size × size, row-major), summing to 1.
    window: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
    pub formulation: SsimFormulation,
}

impl SsimConfig {
    /// Gaussian window (σ = 1.5) of the given odd size, stabilizers
    /// c1 = (0.01·L)², c2 = (0.03·L)² for a pixel range of width L.
    pub fn new(window_size: usize, range_width: f64) -> Result<Self> {
        if window_size.is_multiple_of(2) || window_size == 0 {
            return Err(Error::InvalidInput(format!(
                "SSIM window size must be odd, got {window_size}"
            )));
        }
        if range_width.is_nan() || range_width <= 0.0 {
            return Err(Error::InvalidInput("pixel range width must be positive".into()));
        }
        let sigma = 1.5;
        let center = (window_size - 1) as f64 / 2.0;
        let taps: Vec<f64> = (0..window_size)
            .map(|i| {
                let d = i as f64 - center;
                (-(d * d) / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let mut window = Vec::with_capacity(window_size * window_size);
        for wy in &taps {
            for wx in &taps {
                window.push(wy * wx);
            }
        }
        let sum: f64 = window.iter().sum();
        for w in &mut window {
            *w /= sum;
        }
        Ok(SsimConfig {
            window_size,
            window,
            c1: (0.01 * range_width).powi(2),
            c2: (0.03 * range_width).powi(2),
            formulation: SsimFormulation::Standard,
        })
    }

    pub fn with_formulation(mut self, formulation: SsimFormulation) -> Self {
        self.formulation = formulation;
        self
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig::new(11, 1.0).unwrap()
    }
}

/// A loss value together with its gradient at the adversarial image.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub value: f64,
    pub grad_wrt_adv: ImageTensor,
}

/// Σ(M(x) − M(x_adv))² over all output elements; the gradient flows through
/// the model's VJP with cotangent −2(M(x) − M(x_adv)).
pub fn mse_output_loss(
    model: &dyn ManipulationModel,
    x: &ImageTensor,
    x_adv: &ImageTensor,
) -> Result<LossEval> {
    if !x.same_shape(x_adv) {
        return Err(Error::shape_mismatch("mse_output_loss", x.shape(), x_adv.shape()));
    }
    let y = model.forward(x)?;
    let y_adv = model.forward(x_adv)?;
    if !y.same_shape(&y_adv) {
        return Err(Error::Model(format!(
            "model produced mismatched output shapes {:?} vs {:?}",
            y.shape(),
            y_adv.shape()
        )));
    }
    let diff = y.sub(&y_adv)?;
    let value = diff.dot(&diff)?;
    let cotangent = diff.scale(-2.0);
    let grad = model.vjp(x_adv, &cotangent)?;
    Ok(LossEval { value, grad_wrt_adv: grad })
}

/// Mean windowed SSIM index over all valid window positions and channels
/// (stride 1, no padding), with its analytic gradient in the second image.
pub fn ssim_loss(x: &ImageTensor, x_adv: &ImageTensor, cfg: &SsimConfig) -> Result<LossEval> {
    if !x.same_shape(x_adv) {
        return Err(Error::shape_mismatch("ssim_loss", x.shape(), x_adv.shape()));
    }
    let (h, w, c) = x.shape();
    let k = cfg.window_size;
    if h < k || w < k {
        return Err(Error::InvalidInput(format!(
            "image {h}x{w} smaller than SSIM window {k}"
        )));
    }
    let positions_y = h - k + 1;
    let positions_x = w - k + 1;
    let window_count = (positions_y * positions_x * c) as f64;

    let mut total = 0.0;
    let mut grad = vec![0.0; h * w * c];

    for wy in 0..positions_y {
        for wx in 0..positions_x {
            for ch in 0..c {
                // Windowed statistics.
                let mut mu_x = 0.0;
                let mut mu_y = 0.0;
                let mut xx = 0.0;
                let mut yy = 0.0;
                let mut xy = 0.0;
                for ky in 0..k {
                    for kx in 0..k {
                        let wgt = cfg.window[ky * k + kx];
                        let a = x.get(wy + ky, wx + kx, ch);
                        let b = x_adv.get(wy + ky, wx + kx, ch);
                        mu_x += wgt * a;
                        mu_y += wgt * b;
                        xx += wgt * a * a;
                        yy += wgt * b * b;
                        xy += wgt * a * b;
                    }
                }
                let var_x = xx - mu_x * mu_x;
                let var_y = yy - mu_y * mu_y;
                let cov = xy - mu_x * mu_y;

                let a1 = 2.0 * mu_x * mu_y + cfg.c1;
                let b1 = mu_x * mu_x + mu_y * mu_y + cfg.c1;
                let b2 = var_x + var_y + cfg.c2;
                let (a2, structural_grad_scale) = match cfg.formulation {
                    SsimFormulation::Standard => (2.0 * cov + cfg.c2, 0.0),
                    SsimFormulation::VarianceProduct => {
                        let sx = var_x.max(0.0).sqrt();
                        let sy = var_y.max(0.0).sqrt();
                        // d(2·sx·sy)/dσ_y² = sx/sy, subgradient 0 at sy = 0.
                        let scale = if sy > 0.0 { sx / sy } else { 0.0 };
                        (2.0 * sx * sy + cfg.c2, scale)
                    }
                };
                let denom = b1 * b2;
                let s = (a1 * a2) / denom;
                total += s;

                // Gradient in the window's x_adv pixels.
                //   ∂μ_y/∂y_k = w_k, ∂σ_y²/∂y_k = 2w_k(y_k − μ_y),
                //   ∂σ_xy/∂y_k = w_k(x_k − μ_x).
                for ky in 0..k {
                    for kx in 0..k {
                        let wgt = cfg.window[ky * k + kx];
                        let a = x.get(wy + ky, wx + kx, ch);
                        let b = x_adv.get(wy + ky, wx + kx, ch);
                        let da1 = 2.0 * mu_x * wgt;
                        let da2 = match cfg.formulation {
                            SsimFormulation::Standard => 2.0 * wgt * (a - mu_x),
                            SsimFormulation::VarianceProduct => {
                                structural_grad_scale * 2.0 * wgt * (b - mu_y)
                            }
                        };
                        let db1 = 2.0 * mu_y * wgt;
                        let db2 = 2.0 * wgt * (b - mu_y);
                        let ds = (da1 * a2 + a1 * da2) / denom - s * (db1 / b1 + db2 / b2);
                        grad[((wy + ky) * w + (wx + kx)) * c + ch] += ds;
                    }
                }
            }
        }
    }

    // Division keeps value == 1.0 exact for identical inputs (count/count),
    // which a reciprocal multiply would not for non-power-of-two counts.
    Ok(LossEval {
        value: total / window_count,
        grad_wrt_adv: x.with_data(grad.into_iter().map(|g| g / window_count).collect()),
    })
}

/// ‖φ(x) − φ(x_adv)‖₁ over the low-frequency reconstructions; the gradient
/// is −φ(sign(φ(x) − φ(x_adv))) since φ is a self-adjoint projection.
/// Ties (zero difference) contribute subgradient 0.
pub fn lf_loss(x: &ImageTensor, x_adv: &ImageTensor) -> Result<LossEval> {
    if !x.same_shape(x_adv) {
        return Err(Error::shape_mismatch("lf_loss", x.shape(), x_adv.shape()));
    }
    let px = low_freq_reconstruct(x)?;
    let py = low_freq_reconstruct(x_adv)?;
    let diff = px.sub(&py)?;
    let value = diff.data().iter().map(|v| v.abs()).sum();
    let sign = diff.map(|v| {
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }
    });
    let grad = low_freq_reconstruct(&sign)?.scale(-1.0);
    Ok(LossEval { value, grad_wrt_adv: grad })
}

/// Central-difference gradient oracle: (f(x+h·e_i) − f(x−h·e_i)) / 2h.
pub fn finite_diff_grad(
    f: impl Fn(&ImageTensor) -> f64,
    x: &ImageTensor,
    h: f64,
) -> Result<ImageTensor> {
    if h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidInput(format!("finite-difference step must be > 0, got {h}")));
    }
    let mut grad = Vec::with_capacity(x.len());
    let mut work = x.data().to_vec();
    for i in 0..x.len() {
        let original = work[i];
        work[i] = original + h;
        let plus = f(&x.with_data(work.clone()));
        work[i] = original - h;
        let minus = f(&x.with_data(work.clone()));
        work[i] = original;
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(x.with_data(grad))
}

/// Max relative deviation between an analytic gradient and the oracle,
/// normalized by the oracle's Euclidean length.
pub fn relative_grad_error(analytic: &ImageTensor, oracle: &ImageTensor) -> Result<f64> {
    let num = analytic.sub(oracle)?.euclidean();
    let den = oracle.euclidean().max(1e-12);
    Ok(num / den)
}
