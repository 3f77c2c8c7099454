//! Run configuration: flat key-value config files with dotted keys, merged
//! with CLI flag overrides into a fully resolved settings struct that is
//! echoed verbatim into every run manifest.

use grasp_core::engine::DefenseConfig;
use grasp_core::losses::{SsimConfig, SsimFormulation};
use grasp_core::{Error, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;

/// Which model a run drives.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Builtin { name: String, seed: u64, gain: f64, bias: f64 },
    Bridge { endpoint: String },
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Builtin { name: "conv".into(), seed: 42, gain: 1.0, bias: 0.0 }
    }
}

/// Fully resolved run settings.
#[derive(Debug, Clone)]
pub struct Settings {
    pub defense: DefenseConfig,
    pub model: ModelSpec,
    pub jobs: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Settings { defense: DefenseConfig::default(), model: ModelSpec::default(), jobs: 1 }
    }
}

/// Serializable mirror of the resolved defense config for manifests.
#[derive(Debug, Clone, Serialize)]
pub struct SettingsDump {
    pub epsilon: f64,
    pub iterations: usize,
    pub kappa: f64,
    pub smoothing_kernel: usize,
    pub xi: f64,
    pub ssim_window_size: usize,
    pub ssim_formulation: String,
    pub lambda1: f64,
    pub mu1: f64,
    pub lambda2: f64,
    pub mu2: f64,
    pub lambda3: f64,
    pub mu3: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub use_ssim_loss: bool,
    pub use_lf_loss: bool,
    pub use_projection: bool,
    pub model: ModelSpec,
    pub jobs: usize,
}

impl Settings {
    pub fn dump(&self) -> SettingsDump {
        let d = &self.defense;
        SettingsDump {
            epsilon: d.epsilon,
            iterations: d.iterations,
            kappa: d.kappa,
            smoothing_kernel: d.smoothing_kernel,
            xi: d.xi,
            ssim_window_size: d.ssim.window_size(),
            ssim_formulation: match d.ssim.formulation {
                SsimFormulation::Standard => "standard".into(),
                SsimFormulation::VarianceProduct => "variance_product".into(),
            },
            lambda1: d.projection.lambda1,
            mu1: d.projection.mu1,
            lambda2: d.projection.lambda2,
            mu2: d.projection.mu2,
            lambda3: d.projection.lambda3,
            mu3: d.projection.mu3,
            eta1: d.projection.eta1,
            eta2: d.projection.eta2,
            eta3: d.projection.eta3,
            use_ssim_loss: d.losses.ssim,
            use_lf_loss: d.losses.lf,
            use_projection: d.use_projection,
            model: self.model.clone(),
            jobs: self.jobs,
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment; keys are dotted.
pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "{}:{}: expected 'key = value', got '{raw}'",
                path.display(),
                lineno + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::Config(format!("config key '{key}': cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(Error::Config(format!("config key '{key}': expected bool, got '{other}'"))),
    }
}

/// Applies a parsed config file onto settings. Unknown keys are errors so
/// typos fail before any work starts.
pub fn apply_config(settings: &mut Settings, map: &BTreeMap<String, String>) -> Result<()> {
    let mut ssim_window: Option<usize> = None;
    let mut ssim_formulation: Option<SsimFormulation> = None;

    for (key, value) in map {
        let d = &mut settings.defense;
        match key.as_str() {
            "epsilon" => d.epsilon = parse(key, value)?,
            "iterations" => d.iterations = parse(key, value)?,
            "kappa" => d.kappa = parse(key, value)?,
            "smoothing_kernel" => d.smoothing_kernel = parse(key, value)?,
            "xi" => d.xi = parse(key, value)?,
            "use_projection" => d.use_projection = parse_bool(key, value)?,
            "losses.ssim" => d.losses.ssim = parse_bool(key, value)?,
            "losses.lf" => d.losses.lf = parse_bool(key, value)?,
            "projection.lambda1" => d.projection.lambda1 = parse(key, value)?,
            "projection.mu1" => d.projection.mu1 = parse(key, value)?,
            "projection.lambda2" => d.projection.lambda2 = parse(key, value)?,
            "projection.mu2" => d.projection.mu2 = parse(key, value)?,
            "projection.lambda3" => d.projection.lambda3 = parse(key, value)?,
            "projection.mu3" => d.projection.mu3 = parse(key, value)?,
            "projection.eta1" => d.projection.eta1 = parse(key, value)?,
            "projection.eta2" => d.projection.eta2 = parse(key, value)?,
            "projection.eta3" => d.projection.eta3 = parse(key, value)?,
            "projection.xi" => d.projection.xi = parse(key, value)?,
            "ssim.window_size" => ssim_window = Some(parse(key, value)?),
            "ssim.formulation" => {
                ssim_formulation = Some(match value.as_str() {
                    "standard" => SsimFormulation::Standard,
                    "variance_product" => SsimFormulation::VarianceProduct,
                    other => {
                        return Err(Error::Config(format!(
                            "ssim.formulation must be standard|variance_product, got '{other}'"
                        )))
                    }
                })
            }
            "model.name" => {
                if let ModelSpec::Builtin { name, .. } = &mut settings.model {
                    *name = value.clone();
                } else {
                    return Err(Error::Config(
                        "model.name conflicts with a bridge endpoint".into(),
                    ));
                }
            }
            "model.seed" => {
                if let ModelSpec::Builtin { seed, .. } = &mut settings.model {
                    *seed = parse(key, value)?;
                }
            }
            "model.gain" => {
                if let ModelSpec::Builtin { gain, .. } = &mut settings.model {
                    *gain = parse(key, value)?;
                }
            }
            "model.bias" => {
                if let ModelSpec::Builtin { bias, .. } = &mut settings.model {
                    *bias = parse(key, value)?;
                }
            }
            "jobs" => settings.jobs = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
    }

    if ssim_window.is_some() || ssim_formulation.is_some() {
        let window = ssim_window.unwrap_or(settings.defense.ssim.window_size());
        let mut cfg = SsimConfig::new(window, 1.0).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(f) = ssim_formulation {
            cfg = cfg.with_formulation(f);
        } else {
            cfg = cfg.with_formulation(settings.defense.ssim.formulation);
        }
        settings.defense.ssim = cfg;
    }
    Ok(())
}

/// Rebuilds a default-shaped settings struct (used by sweeps to reset one
/// axis at a time without touching the rest).
pub fn with_axis(settings: &Settings, axis: &str, value: f64) -> Result<Settings> {
    let mut out = settings.clone();
    match axis {
        "eta1" => out.defense.projection.eta1 = value,
        "eta2" => out.defense.projection.eta2 = value,
        "eta3" => out.defense.projection.eta3 = value,
        "kappa" => out.defense.kappa = value,
        "epsilon" => out.defense.epsilon = value,
        "iters" | "iterations" | "T" => {
            if value < 0.0 || value.fract() != 0.0 {
                return Err(Error::Config(format!("iteration sweep value {value} is not a count")));
            }
            out.defense.iterations = value as usize;
        }
        other => {
            return Err(Error::Config(format!(
                "unknown sweep axis '{other}' (choose eta1|eta2|eta3|kappa|epsilon|iters)"
            )))
        }
    }
    Ok(out)
}

pub const SWEEP_AXES: [&str; 6] = ["eta1", "eta2", "eta3", "kappa", "epsilon", "iters"];

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn parse_and_apply_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "# comment\nepsilon = 0.1\nprojection.eta1 = 7.5").unwrap();
        writeln!(f, "losses.lf = false\nmodel.name = identity\nmodel.seed = 9").unwrap();
        writeln!(f, "ssim.window_size = 7").unwrap();
        drop(f);
        let map = parse_config_file(&path).unwrap();
        let mut settings = Settings::default();
        apply_config(&mut settings, &map).unwrap();
        assert_eq!(settings.defense.epsilon, 0.1);
        assert_eq!(settings.defense.projection.eta1, 7.5);
        assert!(!settings.defense.losses.lf);
        assert_eq!(settings.defense.ssim.window_size(), 7);
        match &settings.model {
            ModelSpec::Builtin { name, seed, .. } => {
                assert_eq!(name, "identity");
                assert_eq!(*seed, 9);
            }
            other => panic!("unexpected model {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.conf");
        std::fs::write(&path, "epsilonn = 0.1").unwrap();
        let map = parse_config_file(&path).unwrap();
        let mut settings = Settings::default();
        assert!(matches!(apply_config(&mut settings, &map), Err(grasp_core::Error::Config(_))));
    }

    #[test]
    fn malformed_line_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.conf");
        std::fs::write(&path, "no equals sign here").unwrap();
        assert!(parse_config_file(&path).is_err());
    }

    #[test]
    fn sweep_axis_validation() {
        let s = Settings::default();
        assert!(with_axis(&s, "kappa", 12.0).is_ok());
        assert!(with_axis(&s, "iters", 2.5).is_err());
        assert!(with_axis(&s, "nope", 1.0).is_err());
        assert_eq!(with_axis(&s, "eta2", 4.0).unwrap().defense.projection.eta2, 4.0);
    }
}
