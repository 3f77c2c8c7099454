//! `grasp robustness`: the post-processing battery. Each transform hits the
//! adversarial image before manipulation; outputs are compared against the
//! clean manipulation of the untouched original.

use super::evaluate::adversarial_counterpart;
use super::{build_model, load_inputs, write_manifest};
use crate::config::Settings;
use crate::io::load_png;
use crate::report::{write_csv, write_jsonl};
use grasp_core::image::ImageTensor;
use grasp_core::metrics::{evaluate_robustness, TransformKind};
use grasp_core::{Error, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize)]
struct TransformLine {
    record: &'static str, // "transform"
    transform: String,
    dsr: f64,
    mean_l2_out: f64,
    mean_l1_out: f64,
    l2_out: Vec<f64>,
}

pub struct Battery {
    pub gaussian_kernels: Vec<usize>,
    pub average_kernels: Vec<usize>,
    pub rotations: Vec<f64>,
}

impl Battery {
    pub fn transforms(&self) -> Vec<TransformKind> {
        let mut battery = Vec::new();
        battery.extend(self.gaussian_kernels.iter().map(|&k| TransformKind::GaussianBlur(k)));
        battery.extend(self.average_kernels.iter().map(|&k| TransformKind::AverageBlur(k)));
        battery.extend(self.rotations.iter().map(|&r| TransformKind::Rotate(r)));
        battery
    }
}

impl Default for Battery {
    /// The standard battery: blur kernels 1/3/5/7, rotations 45/90/135/180.
    fn default() -> Self {
        Battery {
            gaussian_kernels: vec![1, 3, 5, 7],
            average_kernels: vec![1, 3, 5, 7],
            rotations: vec![45.0, 90.0, 135.0, 180.0],
        }
    }
}

pub fn run(
    settings: &Settings,
    inputs: &[PathBuf],
    adv_dir: &Path,
    battery: &Battery,
    out_dir: &Path,
) -> Result<u8> {
    if !adv_dir.is_dir() {
        return Err(Error::Config(format!("--adv {} is not a directory", adv_dir.display())));
    }
    let transforms = battery.transforms();
    if transforms.is_empty() {
        return Err(Error::Config("empty robustness battery".into()));
    }
    let loaded = load_inputs(inputs)?;

    let mut pairs: Vec<(ImageTensor, ImageTensor)> = Vec::new();
    let mut n_failed = 0;
    for l in loaded {
        let outcome = l.tensor.and_then(|x| {
            let adv = load_png(&adversarial_counterpart(&l.path, adv_dir)?)?;
            if !x.same_shape(&adv) {
                return Err(Error::Shape(format!("{}: pair shape mismatch", l.path.display())));
            }
            Ok((x, adv))
        });
        match outcome {
            Ok(pair) => pairs.push(pair),
            Err(e) => {
                log::error!("{}: {e}", l.path.display());
                n_failed += 1;
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no usable (original, adversarial) pairs".into()));
    }

    let channels = pairs[0].0.channels();
    let model = build_model(&settings.model, channels)?;
    let results = evaluate_robustness(model.as_ref(), &pairs, &transforms)?;

    let lines: Vec<TransformLine> = results
        .iter()
        .map(|(kind, report)| TransformLine {
            record: "transform",
            transform: kind.label(),
            dsr: report.dsr,
            mean_l2_out: report.mean_l2_out,
            mean_l1_out: report.mean_l1_out,
            l2_out: report.records.iter().map(|r| r.l2_out).collect(),
        })
        .collect();

    let report_bytes = write_jsonl(&out_dir.join("robustness.jsonl"), &lines)?;
    let rows: Vec<Vec<String>> = lines
        .iter()
        .map(|l| {
            vec![
                l.transform.clone(),
                format!("{}", l.dsr),
                format!("{}", l.mean_l2_out),
                format!("{}", l.mean_l1_out),
            ]
        })
        .collect();
    write_csv(&out_dir.join("robustness.csv"), "transform,dsr,l2,l1", &rows)?;
    write_manifest(out_dir, "robustness", settings, inputs, &[], Vec::new(), &report_bytes)?;

    Ok(if n_failed == 0 { 0 } else { 1 })
}
