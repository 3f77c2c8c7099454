//! `grasp evaluate`: metrics for existing (original, adversarial) pairs.
//! Adversarial counterparts are found by file stem under the --adv directory.

use super::{build_model, load_inputs, parallel_map, write_manifest};
use crate::config::Settings;
use crate::io::load_png;
use crate::report::{write_bytes, write_jsonl, AggregateLine, ImageLine, REPORT_SCHEMA};
use grasp_core::image::ImageTensor;
use grasp_core::metrics::aggregate_records;
use grasp_core::{Error, Result};
use std::path::{Path, PathBuf};

pub fn adversarial_counterpart(input: &Path, adv_dir: &Path) -> Result<PathBuf> {
    let stem = input
        .file_stem()
        .ok_or_else(|| Error::Config(format!("input has no file stem: {}", input.display())))?;
    let candidate = adv_dir.join(format!("{}.png", stem.to_string_lossy()));
    if candidate.exists() {
        Ok(candidate)
    } else {
        Err(Error::InvalidInput(format!("no adversarial counterpart {}", candidate.display())))
    }
}

pub fn run(settings: &Settings, inputs: &[PathBuf], adv_dir: &Path, out_dir: &Path) -> Result<u8> {
    if !adv_dir.is_dir() {
        return Err(Error::Config(format!("--adv {} is not a directory", adv_dir.display())));
    }
    let loaded = load_inputs(inputs)?;
    let channels = loaded
        .iter()
        .find_map(|l| l.tensor.as_ref().ok().map(|t| t.channels()))
        .ok_or_else(|| Error::InvalidInput("no decodable input images".into()))?;
    let model = build_model(&settings.model, channels)?;

    let pairs: Vec<(PathBuf, Result<(ImageTensor, ImageTensor)>)> = loaded
        .into_iter()
        .map(|l| {
            let pair = l.tensor.and_then(|x| {
                let adv_path = adversarial_counterpart(&l.path, adv_dir)?;
                let x_adv = load_png(&adv_path)?;
                if !x.same_shape(&x_adv) {
                    return Err(Error::Shape(format!(
                        "{}: adversarial shape {:?} != original {:?}",
                        l.path.display(),
                        x_adv.shape(),
                        x.shape()
                    )));
                }
                Ok((x, x_adv))
            });
            (l.path, pair)
        })
        .collect();

    let outcomes = parallel_map(&pairs, settings.jobs, |index, (_, pair)| match pair {
        Ok((x, x_adv)) => super::defend::image_metrics(model.as_ref(), x, x_adv, settings, index)
            .map_err(|e| e.to_string()),
        Err(e) => Err(e.to_string()),
    });

    let mut lines = Vec::new();
    let mut ok_records = Vec::new();
    let mut n_failed = 0;
    for (index, ((path, _), outcome)) in pairs.iter().zip(outcomes).enumerate() {
        let input_name = path.display().to_string();
        match outcome {
            Ok(record) => {
                lines.push(ImageLine::ok(index, input_name, &record));
                ok_records.push(record);
            }
            Err(error) => {
                log::error!("{input_name}: {error}");
                n_failed += 1;
                lines.push(ImageLine::failed(index, input_name, error));
            }
        }
    }

    let mut report_bytes = write_jsonl(&out_dir.join("report.jsonl"), &lines)?;
    if !ok_records.is_empty() {
        let aggregate = AggregateLine::from_report(&aggregate_records(ok_records)?, n_failed);
        let mut tail = serde_json::to_vec(&aggregate)
            .map_err(|e| Error::InvalidInput(format!("serialization failure: {e}")))?;
        tail.push(b'\n');
        report_bytes.extend_from_slice(&tail);
        write_bytes(&out_dir.join("report.jsonl"), &report_bytes)?;
    }
    write_bytes(&out_dir.join("report.schema.json"), REPORT_SCHEMA.as_bytes())?;
    write_manifest(out_dir, "evaluate", settings, inputs, &[], Vec::new(), &report_bytes)?;

    Ok(if n_failed == 0 { 0 } else { 1 })
}
