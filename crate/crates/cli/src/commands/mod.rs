//! Subcommand implementations and the machinery they share: input loading,
//! model construction, the worker pool, and manifest assembly.

pub mod ablate;
pub mod defend;
pub mod evaluate;
pub mod gradcheck;
pub mod robustness;
pub mod sweep;

use crate::config::{ModelSpec, Settings};
use crate::io::{load_png, resize_bilinear};
use crate::report::{sha256_file, FileDigest, Manifest};
use grasp_core::bridge::{self, BridgeEndpoint};
use grasp_core::image::ImageTensor;
use grasp_core::models::{builtin_model, AffineSurrogate, DimsSpec, ManipulationModel};
use grasp_core::{Error, Result};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// A loaded input: original path plus the tensor, or the load failure.
pub struct LoadedInput {
    pub path: PathBuf,
    pub tensor: Result<ImageTensor>,
}

/// Fails fast (config error) if any referenced path is missing; decoding
/// failures are per-image and recorded, not fatal.
pub fn load_inputs(paths: &[PathBuf]) -> Result<Vec<LoadedInput>> {
    for path in paths {
        if !path.exists() {
            return Err(Error::Config(format!("input path does not exist: {}", path.display())));
        }
    }
    Ok(paths
        .iter()
        .map(|path| LoadedInput { path: path.clone(), tensor: load_png(path) })
        .collect())
}

/// Builds the model for a run. Builtins take their channel count from the
/// images; bridge endpoints declare their own dims.
pub fn build_model(spec: &ModelSpec, channels: usize) -> Result<Box<dyn ManipulationModel>> {
    match spec {
        ModelSpec::Builtin { name, seed, gain, bias } => {
            if name == "affine" && (*gain != 1.0 || *bias != 0.0) {
                Ok(Box::new(AffineSurrogate::new(
                    vec![*gain; channels],
                    vec![*bias; channels],
                )?))
            } else {
                builtin_model(name, *seed, channels)
            }
        }
        ModelSpec::Bridge { endpoint } => {
            let endpoint = parse_bridge_endpoint(endpoint)?;
            Ok(Box::new(bridge::connect(&endpoint)?))
        }
    }
}

/// `HOST:PORT`, `tcp://HOST:PORT`, or `exec:PROGRAM ARG...`.
pub fn parse_bridge_endpoint(spec: &str) -> Result<BridgeEndpoint> {
    if let Some(rest) = spec.strip_prefix("exec:") {
        let mut parts = rest.split_whitespace().map(String::from);
        let program = parts
            .next()
            .ok_or_else(|| Error::Config("empty exec bridge endpoint".into()))?;
        Ok(BridgeEndpoint::ChildProcess { program, args: parts.collect() })
    } else {
        let addr = spec.strip_prefix("tcp://").unwrap_or(spec);
        if !addr.contains(':') {
            return Err(Error::Config(format!(
                "bridge endpoint '{spec}' is not HOST:PORT, tcp://HOST:PORT, or exec:CMD"
            )));
        }
        Ok(BridgeEndpoint::Tcp(addr.to_string()))
    }
}

/// Resizes an input to the model's fixed dims when they disagree, recording
/// a manifest note. Channel mismatches are not bridged automatically.
pub fn fit_to_model(
    tensor: ImageTensor,
    dims: DimsSpec,
    path: &Path,
    notes: &mut Vec<String>,
) -> Result<ImageTensor> {
    match dims {
        DimsSpec::Fixed { height, width, channels } => {
            if tensor.channels() != channels {
                return Err(Error::Shape(format!(
                    "{}: {} channels, model expects {channels}",
                    path.display(),
                    tensor.channels()
                )));
            }
            if (tensor.height(), tensor.width()) != (height, width) {
                notes.push(format!(
                    "resized {} from {}x{} to {height}x{width} (bilinear)",
                    path.display(),
                    tensor.height(),
                    tensor.width()
                ));
                resize_bilinear(&tensor, height, width)
            } else {
                Ok(tensor)
            }
        }
        _ => Ok(tensor),
    }
}

/// Index-ordered parallel map over a worker pool; results come back in
/// input order regardless of completion order.
pub fn parallel_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let n = items.len();
    if n == 0 {
        return Vec::new();
    }
    let workers = jobs.max(1).min(n);
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let result = f(i, &items[i]);
                *slots[i].lock().expect("worker slot poisoned") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().expect("worker slot poisoned").expect("slot filled"))
        .collect()
}

/// Assembles and writes the manifest next to the report.
pub fn write_manifest(
    out_dir: &Path,
    command: &str,
    settings: &Settings,
    input_paths: &[PathBuf],
    output_files: &[PathBuf],
    notes: Vec<String>,
    report_bytes: &[u8],
) -> Result<()> {
    let inputs = input_paths
        .iter()
        .map(|p| {
            Ok(FileDigest { path: p.display().to_string(), sha256: sha256_file(p)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let outputs = output_files
        .iter()
        .map(|p| {
            let rel = p.strip_prefix(out_dir).unwrap_or(p);
            Ok(FileDigest { path: rel.display().to_string(), sha256: sha256_file(p)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        tool: "grasp",
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        settings: settings.dump(),
        inputs,
        outputs,
        notes,
        report_sha256: crate::report::sha256_hex(report_bytes),
    };
    crate::report::write_json(&out_dir.join("manifest.json"), &manifest)
}

/// Exit codes: 0 ok, 1 partial failure, 2 config error, 3 protocol error.
pub fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::Config(_) => 2,
        Error::Protocol(_) => 3,
        _ => 1,
    }
}
