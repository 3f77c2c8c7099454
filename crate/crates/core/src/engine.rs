//! The adversarial-image generation loop: evaluate the three losses,
//! normalize and orient their gradients, resolve conflicts by projection,
//! step, clip to the ε-ball, smooth the perturbation, repeat.
//!
//! Orientation: the engine ascends the output-MSE term (drive the model's
//! outputs apart), ascends SSIM (keep the carrier similar), and descends the
//! low-frequency term (keep the visible band faithful):
//!
//! ```text
//! g = +normalize(∇L_MSE)   h = +normalize(∇SSIM)   z = −normalize(∇L_LF)
//! x_adv ← clip_ε(x + smooth(clip_ε(x_adv + κ·G_total) − x))
//! ```
//!
//! Smoothing targets the perturbation, not the composite image, and the
//! result is re-clipped so the ε budget survives the blur.

use crate::error::{Error, Result};
use crate::filter::{gaussian_taps, separable_filter};
use crate::image::{ImageTensor, NormKind};
use crate::losses::{lf_loss, mse_output_loss, ssim_loss, SsimConfig};
use crate::models::ManipulationModel;
use crate::projection::{normalize_l1, total_gradient, ProjectionConfig};
use crate::rng::XorShift64;
use thiserror::Error as ThisError;

/// Which supervision terms participate (the output-MSE term always does).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossSelection {
    pub ssim: bool,
    pub lf: bool,
}

impl Default for LossSelection {
    fn default() -> Self {
        LossSelection { ssim: true, lf: true }
    }
}

/// Every hyperparameter of the generation loop.
#[derive(Debug, Clone)]
pub struct DefenseConfig {
    /// ℓ∞ perturbation budget.
    pub epsilon: f64,
    /// Iteration count T.
    pub iterations: usize,
    /// Step scale κ.
    pub kappa: f64,
    /// Odd Gaussian smoothing kernel size (σ = size/6); 1 disables smoothing.
    pub smoothing_kernel: usize,
    pub projection: ProjectionConfig,
    pub ssim: SsimConfig,
    /// Normalization stabilizer ξ for the three loss gradients.
    pub xi: f64,
    /// Ablation switches: which losses are active.
    pub losses: LossSelection,
    /// Ablation switch: false sums the oriented normalized gradients
    /// directly instead of running the projection composite.
    pub use_projection: bool,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        DefenseConfig {
            epsilon: 0.05,
            iterations: 20,
            kappa: 10.0,
            smoothing_kernel: 11,
            projection: ProjectionConfig::default(),
            ssim: SsimConfig::default(),
            xi: 1e-12,
            losses: LossSelection::default(),
            use_projection: true,
        }
    }
}

impl DefenseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(Error::Config(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if self.smoothing_kernel.is_multiple_of(2) || self.smoothing_kernel == 0 {
            return Err(Error::Config(format!(
                "smoothing kernel must be odd, got {}",
                self.smoothing_kernel
            )));
        }
        if !self.kappa.is_finite() {
            return Err(Error::Config("kappa must be finite".into()));
        }
        if self.xi.is_nan() || self.xi <= 0.0 {
            return Err(Error::Config(format!("xi must be positive, got {}", self.xi)));
        }
        self.projection.validate()
    }
}

/// One iteration of observability: loss values at the step's start,
/// conflict flags, and the perturbation ℓ∞ after the update.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub mse: f64,
    /// None when the SSIM term is ablated away.
    pub ssim: Option<f64>,
    /// None when the low-frequency term is ablated away.
    pub lf: Option<f64>,
    pub conflicts: [bool; 3],
    pub degenerate_projections: u32,
    pub perturbation_linf: f64,
}

/// Per-iteration records of one generation run.
#[derive(Debug, Clone, Default)]
pub struct DefenseTrace {
    pub records: Vec<IterationRecord>,
}

impl DefenseTrace {
    /// Largest per-iteration perturbation ℓ∞ seen in the run.
    pub fn max_linf(&self) -> f64 {
        self.records.iter().fold(0.0, |m, r| m.max(r.perturbation_linf))
    }
}

/// A finished run: the shielded image and its trace.
#[derive(Debug, Clone)]
pub struct DefenseOutcome {
    pub adversarial: ImageTensor,
    pub trace: DefenseTrace,
}

/// A run that died mid-loop; carries whatever trace existed.
#[derive(Debug, ThisError)]
#[error("defense aborted after {} iterations: {source}", partial_trace.records.len())]
pub struct DefenseAborted {
    #[source]
    pub source: Error,
    pub partial_trace: DefenseTrace,
}

/// Smooths a perturbation with a Gaussian (σ = kernel/6, reflect padding),
/// each channel independently. Kernel 1 is the identity.
pub fn gaussian_smooth_perturbation(eta: &ImageTensor, kernel: usize) -> Result<ImageTensor> {
    if kernel.is_multiple_of(2) || kernel == 0 {
        return Err(Error::InvalidInput(format!("smoothing kernel must be odd, got {kernel}")));
    }
    if kernel == 1 {
        return Ok(eta.clone());
    }
    Ok(separable_filter(eta, &gaussian_taps(kernel)))
}

/// Seed for the deterministic direction used when every loss gradient
/// vanishes identically (which happens at the x_adv = x start, where the
/// objective is stationary by symmetry). Arbitrary but fixed.
const PROBE_SEED: u64 = 0x4752_4153_5021;

fn probe_direction(like: &ImageTensor) -> ImageTensor {
    let mut rng = XorShift64::from_seed(PROBE_SEED);
    like.with_data((0..like.len()).map(|_| rng.next_symmetric()).collect())
}

fn is_all_zero(t: &ImageTensor) -> bool {
    t.data().iter().all(|&v| v == 0.0)
}

/// Runs the full generation loop. Model failures abort with the partial
/// trace attached; the returned trace always has exactly `iterations`
/// records on success.
pub fn generate_adversarial(
    model: &dyn ManipulationModel,
    x: &ImageTensor,
    cfg: &DefenseConfig,
) -> std::result::Result<DefenseOutcome, Box<DefenseAborted>> {
    let mut trace = DefenseTrace::default();
    let abort = |source: Error, trace: DefenseTrace| {
        Box::new(DefenseAborted { source, partial_trace: trace })
    };

    if let Err(e) = cfg.validate() {
        return Err(abort(e, trace));
    }
    if let Err(e) = x.require_even_dims() {
        return Err(abort(e, trace));
    }
    if !model.input_dims().accepts(x) {
        return Err(abort(
            Error::Shape(format!(
                "input {:?} does not match model '{}' dims {:?}",
                x.shape(),
                model.name(),
                model.input_dims()
            )),
            trace,
        ));
    }

    let mut x_adv = x.clone();
    for _ in 0..cfg.iterations {
        macro_rules! try_or_abort {
            ($expr:expr) => {
                match $expr {
                    Ok(v) => v,
                    Err(e) => return Err(abort(e, trace)),
                }
            };
        }

        // (1) losses and gradients at the current iterate
        let mse = try_or_abort!(mse_output_loss(model, x, &x_adv));
        let ssim = if cfg.losses.ssim {
            Some(try_or_abort!(ssim_loss(x, &x_adv, &cfg.ssim)))
        } else {
            None
        };
        let lf = if cfg.losses.lf {
            Some(try_or_abort!(lf_loss(x, &x_adv)))
        } else {
            None
        };

        // (2) oriented normalized directions
        let mut g = try_or_abort!(normalize_l1(&mse.grad_wrt_adv, cfg.xi));
        let h = match &ssim {
            Some(eval) => try_or_abort!(normalize_l1(&eval.grad_wrt_adv, cfg.xi)),
            None => x.scale(0.0),
        };
        let z = match &lf {
            Some(eval) => try_or_abort!(normalize_l1(&eval.grad_wrt_adv, cfg.xi)).scale(-1.0),
            None => x.scale(0.0),
        };

        // Stationary start: all gradients vanish exactly at x_adv = x, so
        // substitute a deterministic probe for the effectiveness direction.
        if is_all_zero(&g) && is_all_zero(&h) && is_all_zero(&z) {
            g = try_or_abort!(normalize_l1(&probe_direction(x), cfg.xi));
        }

        // (3) conflict-free composite (or the ablation's plain sum)
        let (step_dir, conflicts, degenerate) = if cfg.use_projection {
            let bundle = try_or_abort!(total_gradient(&g, &h, &z, &cfg.projection));
            (bundle.g_total, bundle.conflict_flags, bundle.degenerate_projections)
        } else {
            let sum = try_or_abort!(try_or_abort!(g.add(&h)).add(&z));
            (sum, [false; 3], 0)
        };

        // (4) step, (5) clip to the ball and range
        let candidate = try_or_abort!(x_adv.add(&step_dir.scale(cfg.kappa)));
        let candidate = try_or_abort!(candidate.clip_to_ball(x, cfg.epsilon));

        // (6) smooth the perturbation and re-clip
        let eta = try_or_abort!(candidate.sub(x));
        let eta = try_or_abort!(gaussian_smooth_perturbation(&eta, cfg.smoothing_kernel));
        x_adv = try_or_abort!(try_or_abort!(x.add(&eta)).clip_to_ball(x, cfg.epsilon));

        let linf = try_or_abort!(try_or_abort!(x_adv.sub(x)).norm(NormKind::Linf));
        trace.records.push(IterationRecord {
            mse: mse.value,
            ssim: ssim.as_ref().map(|e| e.value),
            lf: lf.as_ref().map(|e| e.value),
            conflicts,
            degenerate_projections: degenerate,
            perturbation_linf: linf,
        });
    }

    Ok(DefenseOutcome { adversarial: x_adv, trace })
}
