//! The evaluation suite: defense success rate, output distances, PSNR, SSIM,
//! the low-frequency discrepancy metric, and the robustness transform
//! battery (blurs and rotations).
//!
//! Scale conventions, declared in every report: output distances are mean
//! squared (or mean absolute) differences after rescaling the model's
//! declared output range to unit width, thresholded at
//! [`DSR_THRESHOLD`]; the low-frequency metric is a per-image sum of
//! squared differences on a 0-255 scale, averaged over images.

use crate::error::{Error, Result};
use crate::filter::{gaussian_taps, separable_filter, uniform_taps};
use crate::image::ImageTensor;
use crate::losses::{ssim_loss, SsimConfig};
use crate::models::ManipulationModel;
use crate::wavelet::low_freq_reconstruct;

/// Success threshold on the unit-scale output distance.
pub const DSR_THRESHOLD: f64 = 0.05;

/// Convention note embedded in every report.
pub const PIXEL_SCALE_NOTE: &str = "output distances: mean per-element difference on the model's \
     output range rescaled to unit width, DSR threshold 0.05 (strict); \
     LF: per-image sum of squared low-frequency differences on a 0-255 scale, averaged over images";

fn output_scale(y: &ImageTensor) -> Result<f64> {
    let w = y.pixel_range().width();
    if w.is_nan() || w <= 0.0 {
        return Err(Error::InvalidInput(format!("degenerate output range width {w}")));
    }
    Ok(w)
}

/// Mean squared output difference on the unit-width scale.
pub fn l2_output_distance(y: &ImageTensor, y_adv: &ImageTensor) -> Result<f64> {
    if !y.same_shape(y_adv) {
        return Err(Error::shape_mismatch("l2_output_distance", y.shape(), y_adv.shape()));
    }
    if y.is_empty() {
        return Err(Error::InvalidInput("empty output tensors".into()));
    }
    let scale = output_scale(y)?;
    let sum: f64 = y
        .data()
        .iter()
        .zip(y_adv.data())
        .map(|(&a, &b)| {
            let d = (a - b) / scale;
            d * d
        })
        .sum();
    Ok(sum / y.len() as f64)
}

/// Mean absolute output difference on the unit-width scale (face-swap
/// evaluations prefer this for sparse, localized changes).
pub fn l1_output_distance(y: &ImageTensor, y_adv: &ImageTensor) -> Result<f64> {
    if !y.same_shape(y_adv) {
        return Err(Error::shape_mismatch("l1_output_distance", y.shape(), y_adv.shape()));
    }
    if y.is_empty() {
        return Err(Error::InvalidInput("empty output tensors".into()));
    }
    let scale = output_scale(y)?;
    let sum: f64 = y
        .data()
        .iter()
        .zip(y_adv.data())
        .map(|(&a, &b)| ((a - b) / scale).abs())
        .sum();
    Ok(sum / y.len() as f64)
}

/// Fraction of distances strictly above [`DSR_THRESHOLD`].
pub fn dsr_over_distances(distances: &[f64]) -> Result<f64> {
    if distances.is_empty() {
        return Err(Error::InvalidInput("DSR over an empty list".into()));
    }
    let hits = distances.iter().filter(|&&d| d > DSR_THRESHOLD).count();
    Ok(hits as f64 / distances.len() as f64)
}

/// Defense success rate over output pairs.
pub fn dsr(outputs: &[(ImageTensor, ImageTensor)]) -> Result<f64> {
    if outputs.is_empty() {
        return Err(Error::InvalidInput("DSR over an empty list".into()));
    }
    let distances = outputs
        .iter()
        .map(|(y, ya)| l2_output_distance(y, ya))
        .collect::<Result<Vec<_>>>()?;
    dsr_over_distances(&distances)
}

/// 10·log10(L²/MSE) in dB; +∞ for identical images.
pub fn psnr(x: &ImageTensor, x_adv: &ImageTensor) -> Result<f64> {
    if !x.same_shape(x_adv) {
        return Err(Error::shape_mismatch("psnr", x.shape(), x_adv.shape()));
    }
    if x.is_empty() {
        return Err(Error::InvalidInput("psnr of empty tensors".into()));
    }
    let l = x.pixel_range().width();
    let mse: f64 = x
        .data()
        .iter()
        .zip(x_adv.data())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        / x.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * ((l * l) / mse).log10())
}

/// Per-image low-frequency discrepancy: ‖φ(x) − φ(x_adv)‖² summed on the
/// 0-255 scale.
pub fn lf_discrepancy(x: &ImageTensor, x_adv: &ImageTensor) -> Result<f64> {
    if !x.same_shape(x_adv) {
        return Err(Error::shape_mismatch("lf_discrepancy", x.shape(), x_adv.shape()));
    }
    let scale = 255.0 / x.pixel_range().width();
    let px = low_freq_reconstruct(x)?;
    let py = low_freq_reconstruct(x_adv)?;
    Ok(px
        .data()
        .iter()
        .zip(py.data())
        .map(|(&a, &b)| {
            let d = (a - b) * scale;
            d * d
        })
        .sum())
}

/// Mean of [`lf_discrepancy`] over image pairs.
pub fn lf_metric(pairs: &[(ImageTensor, ImageTensor)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("LF metric over an empty list".into()));
    }
    let sum: f64 = pairs
        .iter()
        .map(|(x, xa)| lf_discrepancy(x, xa))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .sum();
    Ok(sum / pairs.len() as f64)
}

/// Post-processing transforms of the robustness battery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransformKind {
    /// Gaussian blur with odd kernel size (σ = size/6).
    GaussianBlur(usize),
    /// Uniform k×k blur.
    AverageBlur(usize),
    /// Rotation about the image center, degrees counterclockwise; bilinear
    /// sampling, out-of-frame filled with 0; exact multiples of 90° use the
    /// index permutation.
    Rotate(f64),
}

impl TransformKind {
    pub fn label(&self) -> String {
        match self {
            TransformKind::GaussianBlur(k) => format!("gaussian_blur_{k}"),
            TransformKind::AverageBlur(k) => format!("average_blur_{k}"),
            TransformKind::Rotate(deg) => format!("rotate_{deg}"),
        }
    }
}

fn rotate_exact_multiple(x: &ImageTensor, quarter_turns: u32) -> Option<ImageTensor> {
    let (h, w, c) = x.shape();
    match quarter_turns % 4 {
        0 => Some(x.clone()),
        2 => {
            // 180°: reverse both axes, any aspect ratio.
            let mut data = vec![0.0; h * w * c];
            for y in 0..h {
                for xx in 0..w {
                    for ch in 0..c {
                        data[((h - 1 - y) * w + (w - 1 - xx)) * c + ch] = x.get(y, xx, ch);
                    }
                }
            }
            Some(x.with_data(data))
        }
        q @ (1 | 3) => {
            // Quarter turns permute indices only for square frames; the
            // bilinear path covers the rest.
            if h != w {
                return None;
            }
            let mut data = vec![0.0; h * w * c];
            for y in 0..h {
                for xx in 0..w {
                    for ch in 0..c {
                        // 90° CCW: out[r][c] = in[h-1-c][r]
                        let v = if q == 1 {
                            x.get(h - 1 - xx, y, ch)
                        } else {
                            x.get(xx, w - 1 - y, ch)
                        };
                        data[(y * w + xx) * c + ch] = v;
                    }
                }
            }
            Some(x.with_data(data))
        }
        _ => unreachable!(),
    }
}

fn rotate_bilinear(x: &ImageTensor, degrees: f64) -> ImageTensor {
    let (h, w, c) = x.shape();
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let mut data = vec![0.0; h * w * c];
    for y in 0..h {
        for xx in 0..w {
            let dy = y as f64 - cy;
            let dx = xx as f64 - cx;
            // Sample the source at the inverse rotation of the output offset.
            let sx = cos * dx + sin * dy + cx;
            let sy = -sin * dx + cos * dy + cy;
            if sx < -1.0 || sy < -1.0 || sx > w as f64 || sy > h as f64 {
                continue; // fully outside, keep 0
            }
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let sample = |yy: f64, xxx: f64, ch: usize| -> f64 {
                if yy < 0.0 || xxx < 0.0 || yy >= h as f64 || xxx >= w as f64 {
                    0.0
                } else {
                    x.get(yy as usize, xxx as usize, ch)
                }
            };
            for ch in 0..c {
                let v00 = sample(y0, x0, ch);
                let v01 = sample(y0, x0 + 1.0, ch);
                let v10 = sample(y0 + 1.0, x0, ch);
                let v11 = sample(y0 + 1.0, x0 + 1.0, ch);
                let top = v00 * (1.0 - fx) + v01 * fx;
                let bottom = v10 * (1.0 - fx) + v11 * fx;
                data[(y * w + xx) * c + ch] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    x.with_data(data)
}

/// Applies one robustness transform.
pub fn robustness_transform(x: &ImageTensor, kind: TransformKind) -> Result<ImageTensor> {
    match kind {
        TransformKind::GaussianBlur(k) => {
            if k.is_multiple_of(2) || k == 0 {
                return Err(Error::InvalidInput(format!("blur kernel must be odd, got {k}")));
            }
            if k == 1 {
                return Ok(x.clone());
            }
            Ok(separable_filter(x, &gaussian_taps(k)))
        }
        TransformKind::AverageBlur(k) => {
            if k.is_multiple_of(2) || k == 0 {
                return Err(Error::InvalidInput(format!("blur kernel must be odd, got {k}")));
            }
            if k == 1 {
                return Ok(x.clone());
            }
            Ok(separable_filter(x, &uniform_taps(k)))
        }
        TransformKind::Rotate(degrees) => {
            let quarter = degrees / 90.0;
            if quarter.fract() == 0.0 {
                if let Some(out) = rotate_exact_multiple(x, quarter.rem_euclid(4.0) as u32) {
                    return Ok(out);
                }
            }
            Ok(rotate_bilinear(x, degrees))
        }
    }
}

/// Per-image evaluation record. Input-side metrics are absent in reports
/// that only look at model outputs (the robustness battery).
#[derive(Debug, Clone)]
pub struct ImageRecord {
    pub index: usize,
    pub l2_out: f64,
    pub l1_out: f64,
    pub defense_success: bool,
    pub psnr_in: Option<f64>,
    pub ssim_in: Option<f64>,
    pub lf_in: Option<f64>,
}

/// Per-image records plus aggregates for one evaluation pass.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub records: Vec<ImageRecord>,
    pub n_images: usize,
    pub dsr: f64,
    pub mean_l2_out: f64,
    pub mean_l1_out: f64,
    pub mean_psnr_in: Option<f64>,
    pub mean_ssim_in: Option<f64>,
    pub mean_lf_in: Option<f64>,
    pub pixel_scale_note: &'static str,
}

/// Folds per-image records into a report. Optional input-side means are
/// present only when every record carries the field.
pub fn aggregate_records(records: Vec<ImageRecord>) -> Result<MetricsReport> {
    let n = records.len();
    if n == 0 {
        return Err(Error::InvalidInput("no records to aggregate".into()));
    }
    let mean =
        |f: &dyn Fn(&ImageRecord) -> f64| records.iter().map(f).sum::<f64>() / n as f64;
    let opt_mean = |f: &dyn Fn(&ImageRecord) -> Option<f64>| -> Option<f64> {
        let vals: Vec<f64> = records.iter().filter_map(f).collect();
        if vals.len() == n {
            Some(vals.iter().sum::<f64>() / n as f64)
        } else {
            None
        }
    };
    Ok(MetricsReport {
        dsr: records.iter().filter(|r| r.defense_success).count() as f64 / n as f64,
        mean_l2_out: mean(&|r| r.l2_out),
        mean_l1_out: mean(&|r| r.l1_out),
        mean_psnr_in: opt_mean(&|r| r.psnr_in),
        mean_ssim_in: opt_mean(&|r| r.ssim_in),
        mean_lf_in: opt_mean(&|r| r.lf_in),
        n_images: n,
        pixel_scale_note: PIXEL_SCALE_NOTE,
        records,
    })
}

/// Full evaluation of (original, adversarial) image pairs through a model:
/// output-side distances and DSR, input-side PSNR/SSIM/LF. The LF entry is
/// absent for odd-sized images (the transform needs even dims).
pub fn evaluate_pairs(
    model: &dyn ManipulationModel,
    pairs: &[(ImageTensor, ImageTensor)],
    ssim_cfg: &SsimConfig,
) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no image pairs to evaluate".into()));
    }
    let mut records = Vec::with_capacity(pairs.len());
    for (index, (x, x_adv)) in pairs.iter().enumerate() {
        let y = model.forward(x)?;
        let y_adv = model.forward(x_adv)?;
        let l2 = l2_output_distance(&y, &y_adv)?;
        let l1 = l1_output_distance(&y, &y_adv)?;
        let lf = if x.height().is_multiple_of(2) && x.width().is_multiple_of(2) {
            Some(lf_discrepancy(x, x_adv)?)
        } else {
            None
        };
        records.push(ImageRecord {
            index,
            l2_out: l2,
            l1_out: l1,
            defense_success: l2 > DSR_THRESHOLD,
            psnr_in: Some(psnr(x, x_adv)?),
            ssim_in: Some(ssim_loss(x, x_adv, ssim_cfg)?.value),
            lf_in: lf,
        });
    }
    aggregate_records(records)
}

/// Table-2 protocol: each transform is applied to the adversarial image
/// before manipulation, and outputs are compared against the clean
/// manipulation of the untouched original.
pub fn evaluate_robustness(
    model: &dyn ManipulationModel,
    pairs: &[(ImageTensor, ImageTensor)],
    battery: &[TransformKind],
) -> Result<Vec<(TransformKind, MetricsReport)>> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no image pairs to evaluate".into()));
    }
    let clean_outputs = pairs
        .iter()
        .map(|(x, _)| model.forward(x))
        .collect::<Result<Vec<_>>>()?;
    let mut results = Vec::with_capacity(battery.len());
    for &kind in battery {
        let mut records = Vec::with_capacity(pairs.len());
        for (index, ((_, x_adv), y)) in pairs.iter().zip(&clean_outputs).enumerate() {
            let transformed = robustness_transform(x_adv, kind)?;
            let y_adv = model.forward(&transformed)?;
            let l2 = l2_output_distance(y, &y_adv)?;
            let l1 = l1_output_distance(y, &y_adv)?;
            records.push(ImageRecord {
                index,
                l2_out: l2,
                l1_out: l1,
                defense_success: l2 > DSR_THRESHOLD,
                psnr_in: None,
                ssim_in: None,
                lf_in: None,
            });
        }
        results.push((kind, aggregate_records(records)?));
    }
    Ok(results)
}
