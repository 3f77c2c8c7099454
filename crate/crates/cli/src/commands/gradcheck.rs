//! `grasp gradcheck`: verifies every analytic gradient against central
//! finite differences on seeded random images, and the surrogate's VJP
//! against its directional derivatives. Exit 0 only if all checks land
//! inside their tolerances.

use crate::config::{ModelSpec, Settings};
use crate::report::write_json;
use grasp_core::image::ImageTensor;
use grasp_core::losses::{
    finite_diff_grad, lf_loss, mse_output_loss, relative_grad_error, ssim_loss, SsimConfig,
};
use grasp_core::models::builtin_model;
use grasp_core::{Error, Result};
use serde::Serialize;
use std::path::Path;

const TOL_SMOOTH: f64 = 1e-4;
const TOL_LF: f64 = 1e-3; // looser near the L1 kink
const TOL_DUALITY: f64 = 1e-5;

#[derive(Debug, Clone, Serialize)]
struct GradcheckReport {
    seeds: usize,
    size: usize,
    model: String,
    max_rel_err_mse: f64,
    max_rel_err_ssim: f64,
    max_rel_err_lf: f64,
    max_duality_gap: f64,
    tol_smooth: f64,
    tol_lf: f64,
    tol_duality: f64,
    pass: bool,
}

pub fn run(settings: &Settings, seeds: usize, size: usize, out_dir: &Path) -> Result<u8> {
    if size < 6 || !size.is_multiple_of(2) {
        return Err(Error::Config(format!("gradcheck size must be even and >= 6, got {size}")));
    }
    let model = match &settings.model {
        ModelSpec::Builtin { name, seed, .. } => builtin_model(name, *seed, 1)?,
        ModelSpec::Bridge { .. } => {
            return Err(Error::Config(
                "gradcheck drives finite differences and needs a builtin model".into(),
            ))
        }
    };
    let window = if size >= 11 { 11 } else { 5 };
    let ssim_cfg = SsimConfig::new(window, 1.0)?;

    let mut worst_mse: f64 = 0.0;
    let mut worst_ssim: f64 = 0.0;
    let mut worst_lf: f64 = 0.0;
    let mut worst_duality: f64 = 0.0;

    for seed in 0..seeds as u64 {
        let h = size;
        let w = size;
        let x = ImageTensor::seeded_noise(h, w, 1, 7_000 + seed);
        let x_adv = ImageTensor::seeded_noise(h, w, 1, 8_000 + seed);

        let eval = mse_output_loss(model.as_ref(), &x, &x_adv)?;
        let oracle = finite_diff_grad(
            |p| mse_output_loss(model.as_ref(), &x, p).unwrap().value,
            &x_adv,
            1e-6,
        )?;
        worst_mse = worst_mse.max(relative_grad_error(&eval.grad_wrt_adv, &oracle)?);

        let eval = ssim_loss(&x, &x_adv, &ssim_cfg)?;
        let oracle =
            finite_diff_grad(|p| ssim_loss(&x, p, &ssim_cfg).unwrap().value, &x_adv, 1e-6)?;
        worst_ssim = worst_ssim.max(relative_grad_error(&eval.grad_wrt_adv, &oracle)?);

        let eval = lf_loss(&x, &x_adv)?;
        let oracle = finite_diff_grad(|p| lf_loss(&x, p).unwrap().value, &x_adv, 1e-7)?;
        worst_lf = worst_lf.max(relative_grad_error(&eval.grad_wrt_adv, &oracle)?);

        // VJP/JVP duality through the model.
        let cot = ImageTensor::seeded_noise(h, w, 1, 9_000 + seed);
        let dir = ImageTensor::seeded_noise(h, w, 1, 10_000 + seed);
        let lhs = model.vjp(&x, &cot)?.dot(&dir)?;
        let t = 1e-6;
        let plus = model.forward(&x.add(&dir.scale(t))?)?;
        let minus = model.forward(&x.sub(&dir.scale(t))?)?;
        let jvp = plus.sub(&minus)?.scale(1.0 / (2.0 * t));
        let rhs = cot.dot(&jvp)?;
        worst_duality =
            worst_duality.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-9));
    }

    let pass = worst_mse <= TOL_SMOOTH
        && worst_ssim <= TOL_SMOOTH
        && worst_lf <= TOL_LF
        && worst_duality <= TOL_DUALITY;
    let report = GradcheckReport {
        seeds,
        size,
        model: match &settings.model {
            ModelSpec::Builtin { name, seed, .. } => format!("{name}(seed={seed})"),
            ModelSpec::Bridge { endpoint } => endpoint.clone(),
        },
        max_rel_err_mse: worst_mse,
        max_rel_err_ssim: worst_ssim,
        max_rel_err_lf: worst_lf,
        max_duality_gap: worst_duality,
        tol_smooth: TOL_SMOOTH,
        tol_lf: TOL_LF,
        tol_duality: TOL_DUALITY,
        pass,
    };
    write_json(&out_dir.join("gradcheck.json"), &report)?;
    println!(
        "gradcheck over {seeds} seeds at {size}x{size}: mse {worst_mse:.3e} ssim {worst_ssim:.3e} \
         lf {worst_lf:.3e} duality {worst_duality:.3e} -> {}",
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(if pass { 0 } else { 1 })
}
