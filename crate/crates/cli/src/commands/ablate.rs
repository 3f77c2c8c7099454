//! `grasp ablate`: the four-row component study — output-MSE supervision
//! alone, plus SSIM, plus the low-frequency term (plain gradient sum), and
//! the full defense with conflict projection. All rows run on the same
//! image set with the same budget.

use super::{build_model, fit_to_model, load_inputs, parallel_map, write_manifest};
use crate::config::Settings;
use crate::report::{write_csv, write_jsonl, Decibels};
use grasp_core::engine::{generate_adversarial, DefenseConfig, LossSelection};
use grasp_core::image::ImageTensor;
use grasp_core::metrics::aggregate_records;
use grasp_core::{Error, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize)]
struct AblationLine {
    record: &'static str, // "ablation_row"
    label: String,
    dsr: f64,
    mean_l2_out: f64,
    mean_psnr_in: Decibels,
    mean_ssim_in: Option<f64>,
    mean_lf_in: Option<f64>,
}

/// The four Table-style rows, in order of added components.
pub fn rows(base: &DefenseConfig) -> Vec<(String, DefenseConfig)> {
    let make = |label: &str, ssim: bool, lf: bool, projection: bool| {
        let mut cfg = base.clone();
        cfg.losses = LossSelection { ssim, lf };
        cfg.use_projection = projection;
        (label.to_string(), cfg)
    };
    vec![
        make("mse", false, false, false),
        make("mse+ssim", true, false, false),
        make("mse+ssim+lf", true, true, false),
        make("mse+ssim+lf+projection", true, true, true),
    ]
}

pub fn run(settings: &Settings, inputs: &[PathBuf], out_dir: &Path) -> Result<u8> {
    settings.defense.validate()?;
    let loaded = load_inputs(inputs)?;
    let channels = loaded
        .iter()
        .find_map(|l| l.tensor.as_ref().ok().map(|t| t.channels()))
        .ok_or_else(|| Error::InvalidInput("no decodable input images".into()))?;
    let model = build_model(&settings.model, channels)?;

    let mut notes = Vec::new();
    let mut images: Vec<ImageTensor> = Vec::new();
    let mut n_failed = 0;
    for l in loaded {
        match l.tensor.and_then(|t| fit_to_model(t, model.input_dims(), &l.path, &mut notes)) {
            Ok(t) => images.push(t),
            Err(e) => {
                log::error!("{}: {e}", l.path.display());
                n_failed += 1;
            }
        }
    }
    if images.is_empty() {
        return Err(Error::InvalidInput("no usable input images".into()));
    }

    let mut lines = Vec::new();
    for (label, cfg) in rows(&settings.defense) {
        let outcomes = parallel_map(&images, settings.jobs, |index, x| {
            let run = generate_adversarial(model.as_ref(), x, &cfg)
                .map_err(|e| Error::Model(e.to_string()))?;
            super::defend::image_metrics(model.as_ref(), x, &run.adversarial, settings, index)
        });
        let records = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
        let report = aggregate_records(records)?;
        lines.push(AblationLine {
            record: "ablation_row",
            label,
            dsr: report.dsr,
            mean_l2_out: report.mean_l2_out,
            mean_psnr_in: Decibels::from(report.mean_psnr_in.unwrap_or(f64::INFINITY)),
            mean_ssim_in: report.mean_ssim_in,
            mean_lf_in: report.mean_lf_in,
        });
    }

    let report_bytes = write_jsonl(&out_dir.join("ablation.jsonl"), &lines)?;
    let rows_csv: Vec<Vec<String>> = lines
        .iter()
        .map(|l| {
            vec![
                l.label.clone(),
                format!("{}", l.dsr),
                format!("{}", l.mean_l2_out),
                l.mean_psnr_in.db.map_or("inf".into(), |v| format!("{v}")),
                l.mean_ssim_in.map_or(String::new(), |v| format!("{v}")),
                l.mean_lf_in.map_or(String::new(), |v| format!("{v}")),
            ]
        })
        .collect();
    write_csv(&out_dir.join("ablation.csv"), "loss,dsr,l2,psnr_db,ssim,lf", &rows_csv)?;
    write_manifest(out_dir, "ablate", settings, inputs, &[], notes, &report_bytes)?;

    Ok(if n_failed == 0 { 0 } else { 1 })
}
