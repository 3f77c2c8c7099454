//! `grasp sweep`: re-run the defense while varying one hyperparameter,
//! emitting a (value, DSR, PSNR, LF) series as CSV plus plot-ready JSON.

use super::{build_model, fit_to_model, load_inputs, parallel_map, write_manifest};
use crate::config::{with_axis, Settings, SWEEP_AXES};
use crate::report::{write_csv, write_json, Decibels};
use grasp_core::engine::generate_adversarial;
use grasp_core::image::ImageTensor;
use grasp_core::metrics::aggregate_records;
use grasp_core::{Error, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize)]
struct SweepPoint {
    value: f64,
    dsr: f64,
    psnr: Decibels,
    lf: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct SweepSeries {
    axis: String,
    points: Vec<SweepPoint>,
}

pub fn run(
    settings: &Settings,
    inputs: &[PathBuf],
    axis: &str,
    values: &[f64],
    out_dir: &Path,
) -> Result<u8> {
    if !SWEEP_AXES.contains(&axis) {
        return Err(Error::Config(format!(
            "unknown sweep axis '{axis}' (choose one of {SWEEP_AXES:?})"
        )));
    }
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one --values entry".into()));
    }
    let loaded = load_inputs(inputs)?;
    let channels = loaded
        .iter()
        .find_map(|l| l.tensor.as_ref().ok().map(|t| t.channels()))
        .ok_or_else(|| Error::InvalidInput("no decodable input images".into()))?;
    let model = build_model(&settings.model, channels)?;

    let mut notes = Vec::new();
    let mut images: Vec<ImageTensor> = Vec::new();
    for l in loaded {
        match l.tensor.and_then(|t| fit_to_model(t, model.input_dims(), &l.path, &mut notes)) {
            Ok(t) => images.push(t),
            Err(e) => log::error!("{}: {e}", l.path.display()),
        }
    }
    if images.is_empty() {
        return Err(Error::InvalidInput("no usable input images".into()));
    }

    let mut points = Vec::new();
    for &value in values {
        let run_settings = with_axis(settings, axis, value)?;
        run_settings.defense.validate()?;
        let outcomes = parallel_map(&images, settings.jobs, |index, x| {
            let run = generate_adversarial(model.as_ref(), x, &run_settings.defense)
                .map_err(|e| Error::Model(e.to_string()))?;
            super::defend::image_metrics(model.as_ref(), x, &run.adversarial, settings, index)
        });
        let records = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
        let report = aggregate_records(records)?;
        points.push(SweepPoint {
            value,
            dsr: report.dsr,
            psnr: Decibels::from(report.mean_psnr_in.unwrap_or(f64::INFINITY)),
            lf: report.mean_lf_in,
        });
    }

    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            vec![
                format!("{}", p.value),
                format!("{}", p.dsr),
                p.psnr.db.map_or("inf".into(), |v| format!("{v}")),
                p.lf.map_or(String::new(), |v| format!("{v}")),
            ]
        })
        .collect();
    write_csv(&out_dir.join("sweep.csv"), "value,dsr,psnr_db,lf", &rows)?;
    let series = SweepSeries { axis: axis.to_string(), points };
    write_json(&out_dir.join("sweep.json"), &series)?;
    let report_bytes = serde_json::to_vec(&series)
        .map_err(|e| Error::InvalidInput(format!("serialization failure: {e}")))?;
    write_manifest(out_dir, "sweep", settings, inputs, &[], notes, &report_bytes)?;
    Ok(0)
}
