//! ℓ1 gradient normalization, the conditional cross-projection operator, and
//! the three-pair composite total gradient.
//!
//! Two directions conflict when their inner product is non-positive; only
//! then are they mutually projected onto each other's normal planes. The
//! dot = 0 boundary is benign: orthogonal vectors pass through projection
//! unchanged, so both branches coincide there.

use crate::error::{Error, Result};
use crate::image::{ImageTensor, NormKind};

/// Pair weights (λ_i, μ_i), composite weights (η_1..3), and the
/// normalization stabilizer ξ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionConfig {
    pub lambda1: f64,
    pub mu1: f64,
    pub lambda2: f64,
    pub mu2: f64,
    pub lambda3: f64,
    pub mu3: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub xi: f64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            lambda1: 10.0,
            mu1: 1.0,
            lambda2: 5.0,
            mu2: 1.0,
            lambda3: 1.0,
            mu3: 1.0,
            eta1: 11.0,
            eta2: 3.0,
            eta3: 19.0,
            xi: 1e-12,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            self.lambda1, self.mu1, self.lambda2, self.mu2, self.lambda3, self.mu3, self.eta1,
            self.eta2, self.eta3,
        ];
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("projection weights must be finite".into()));
        }
        if self.xi.is_nan() || self.xi <= 0.0 {
            return Err(Error::Config(format!("xi must be positive, got {}", self.xi)));
        }
        Ok(())
    }
}

/// Normalized directions, pairwise projected composites, and the total
/// gradient for one iteration.
#[derive(Debug, Clone)]
pub struct GradientBundle {
    pub g: ImageTensor,
    pub h: ImageTensor,
    pub z: ImageTensor,
    pub gs1: ImageTensor,
    pub gs2: ImageTensor,
    pub gs3: ImageTensor,
    pub g_total: ImageTensor,
    /// Whether each pair (g,h), (h,z), (g,z) had inner product ≤ 0.
    pub conflict_flags: [bool; 3],
    /// How many projections hit a zero-length counterpart (diagnostic).
    pub degenerate_projections: u32,
}

/// grad / (‖grad‖₁ + ξ).
pub fn normalize_l1(grad: &ImageTensor, xi: f64) -> Result<ImageTensor> {
    if xi.is_nan() || xi <= 0.0 {
        return Err(Error::InvalidInput(format!("xi must be positive, got {xi}")));
    }
    let l1 = grad.norm(NormKind::L1Sum)?;
    Ok(grad.scale(1.0 / (l1 + xi)))
}

/// a minus its component along b. A zero b cannot define a plane; the input
/// comes back unchanged with the degenerate flag raised.
pub fn project_onto_normal_plane(
    a: &ImageTensor,
    b: &ImageTensor,
) -> Result<(ImageTensor, bool)> {
    if !a.same_shape(b) {
        return Err(Error::shape_mismatch("project_onto_normal_plane", a.shape(), b.shape()));
    }
    let bb = b.dot(b)?;
    if bb == 0.0 {
        return Ok((a.clone(), true));
    }
    let coef = a.dot(b)? / bb;
    Ok((a.sub(&b.scale(coef))?, false))
}

/// Outcome of combining one gradient pair.
#[derive(Debug, Clone)]
pub struct CombinedPair {
    pub gradient: ImageTensor,
    pub conflict: bool,
    pub degenerate_projections: u32,
}

/// λ·Proj_b(a) + μ·Proj_a(b) when ⟨a,b⟩ ≤ 0, else λ·a + μ·b.
pub fn combine_pair(
    a: &ImageTensor,
    b: &ImageTensor,
    lambda: f64,
    mu: f64,
) -> Result<CombinedPair> {
    if !a.same_shape(b) {
        return Err(Error::shape_mismatch("combine_pair", a.shape(), b.shape()));
    }
    let inner = a.dot(b)?;
    if inner <= 0.0 {
        let (pa, da) = project_onto_normal_plane(a, b)?;
        let (pb, db) = project_onto_normal_plane(b, a)?;
        Ok(CombinedPair {
            gradient: pa.scale(lambda).add(&pb.scale(mu))?,
            conflict: true,
            degenerate_projections: u32::from(da) + u32::from(db),
        })
    } else {
        Ok(CombinedPair {
            gradient: a.scale(lambda).add(&b.scale(mu))?,
            conflict: false,
            degenerate_projections: 0,
        })
    }
}

/// Builds the three pairwise composites and their η-weighted total.
pub fn total_gradient(
    g: &ImageTensor,
    h: &ImageTensor,
    z: &ImageTensor,
    cfg: &ProjectionConfig,
) -> Result<GradientBundle> {
    cfg.validate()?;
    let p1 = combine_pair(g, h, cfg.lambda1, cfg.mu1)?;
    let p2 = combine_pair(h, z, cfg.lambda2, cfg.mu2)?;
    let p3 = combine_pair(g, z, cfg.lambda3, cfg.mu3)?;
    let g_total = p1
        .gradient
        .scale(cfg.eta1)
        .add(&p2.gradient.scale(cfg.eta2))?
        .add(&p3.gradient.scale(cfg.eta3))?;
    Ok(GradientBundle {
        g: g.clone(),
        h: h.clone(),
        z: z.clone(),
        conflict_flags: [p1.conflict, p2.conflict, p3.conflict],
        degenerate_projections: p1.degenerate_projections
            + p2.degenerate_projections
            + p3.degenerate_projections,
        gs1: p1.gradient,
        gs2: p2.gradient,
        gs3: p3.gradient,
        g_total,
    })
}
