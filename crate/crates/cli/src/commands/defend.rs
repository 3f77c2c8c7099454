//! `grasp defend`: shield every input image, write 16-bit PNGs, a JSON-lines
//! report with per-image metrics and traces, and the run manifest.

use super::{build_model, fit_to_model, load_inputs, parallel_map, write_manifest};
use crate::config::Settings;
use crate::io::save_png_16bit;
use crate::report::{write_bytes, write_jsonl, AggregateLine, ImageLine, TraceDump, REPORT_SCHEMA};
use grasp_core::engine::generate_adversarial;
use grasp_core::image::ImageTensor;
use grasp_core::losses::ssim_loss;
use grasp_core::metrics::{
    aggregate_records, l1_output_distance, l2_output_distance, lf_discrepancy, psnr, ImageRecord,
    DSR_THRESHOLD,
};
use grasp_core::{Error, Result};
use std::path::{Path, PathBuf};

enum Outcome {
    Ok { record: ImageRecord, trace: TraceDump, output: PathBuf },
    Failed(String),
}

pub fn run(settings: &Settings, inputs: &[PathBuf], out_dir: &Path) -> Result<u8> {
    settings.defense.validate()?;
    let loaded = load_inputs(inputs)?;

    // Builtins take their channel count from the first decodable image.
    let channels = loaded
        .iter()
        .find_map(|l| l.tensor.as_ref().ok().map(|t| t.channels()))
        .ok_or_else(|| Error::InvalidInput("no decodable input images".into()))?;
    let model = build_model(&settings.model, channels)?;

    let mut notes = Vec::new();
    let prepared: Vec<(PathBuf, Result<ImageTensor>)> = loaded
        .into_iter()
        .map(|l| {
            let tensor = l.tensor.and_then(|t| {
                fit_to_model(t, model.input_dims(), &l.path, &mut notes)
            });
            (l.path, tensor)
        })
        .collect();

    let adv_dir = out_dir.join("adv");
    std::fs::create_dir_all(&adv_dir)
        .map_err(|e| Error::InvalidInput(format!("cannot create {}: {e}", adv_dir.display())))?;

    let outcomes: Vec<Outcome> = parallel_map(&prepared, settings.jobs, |index, (path, tensor)| {
        let tensor = match tensor {
            Ok(t) => t,
            Err(e) => return Outcome::Failed(e.to_string()),
        };
        let run = match generate_adversarial(model.as_ref(), tensor, &settings.defense) {
            Ok(r) => r,
            Err(aborted) => return Outcome::Failed(aborted.to_string()),
        };
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| format!("image{index}"));
        let output = adv_dir.join(format!("{stem}.png"));
        if let Err(e) = save_png_16bit(&output, &run.adversarial) {
            return Outcome::Failed(e.to_string());
        }
        match image_metrics(model.as_ref(), tensor, &run.adversarial, settings, index) {
            Ok(record) => Outcome::Ok { record, trace: TraceDump::from(&run.trace), output },
            Err(e) => Outcome::Failed(e.to_string()),
        }
    });

    let mut lines: Vec<ImageLine> = Vec::new();
    let mut ok_records = Vec::new();
    let mut output_files = vec![];
    let mut n_failed = 0;
    for (index, ((path, _), outcome)) in prepared.iter().zip(outcomes).enumerate() {
        let input_name = path.display().to_string();
        match outcome {
            Outcome::Ok { record, trace, output } => {
                let mut line = ImageLine::ok(index, input_name, &record);
                line.output = Some(
                    output.strip_prefix(out_dir).unwrap_or(&output).display().to_string(),
                );
                line.trace = Some(trace);
                lines.push(line);
                ok_records.push(record);
                output_files.push(output);
            }
            Outcome::Failed(error) => {
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

    write_manifest(out_dir, "defend", settings, inputs, &output_files, notes, &report_bytes)?;

    Ok(if n_failed == 0 {
        0
    } else {
        1
    })
}

/// Output-side and input-side metrics for one shielded image.
pub fn image_metrics(
    model: &dyn grasp_core::models::ManipulationModel,
    x: &ImageTensor,
    x_adv: &ImageTensor,
    settings: &Settings,
    index: usize,
) -> Result<ImageRecord> {
    let y = model.forward(x)?;
    let y_adv = model.forward(x_adv)?;
    let l2 = l2_output_distance(&y, &y_adv)?;
    let lf = if x.height().is_multiple_of(2) && x.width().is_multiple_of(2) {
        Some(lf_discrepancy(x, x_adv)?)
    } else {
        None
    };
    Ok(ImageRecord {
        index,
        l2_out: l2,
        l1_out: l1_output_distance(&y, &y_adv)?,
        defense_success: l2 > DSR_THRESHOLD,
        psnr_in: Some(psnr(x, x_adv)?),
        ssim_in: Some(ssim_loss(x, x_adv, &settings.defense.ssim)?.value),
        lf_in: lf,
    })
}
