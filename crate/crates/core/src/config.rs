//! TOML run files and the shipped presets.
//!
//! A run file has an optional top-level `problem`, a `[solver]` table
//! mirroring [`SolverConfig`] and a `[trial]` table. Unknown keys are
//! rejected and missing ones take the values in `configs/defaults.toml`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blackbox::{builtin_problem, Problem};
use crate::error::{Error, Result};
use crate::smoothing::KernelKind;
use crate::solver::SolverConfig;

/// Documented defaults, shipped with the crate.
pub const DEFAULTS_TOML: &str = include_str!("../configs/defaults.toml");

/// Named presets: `(name, file contents)`.
pub const PRESETS: [(&str, &str); 10] = [
    ("SCD", include_str!("../configs/scd.toml")),
    ("WBD", include_str!("../configs/wbd.toml")),
    ("VSI", include_str!("../configs/vsi.toml")),
    ("SRD", include_str!("../configs/srd.toml")),
    ("SCD-truncated", include_str!("../configs/scd-truncated.toml")),
    ("WBD-truncated", include_str!("../configs/wbd-truncated.toml")),
    ("VSI-truncated", include_str!("../configs/vsi-truncated.toml")),
    ("SRD-truncated", include_str!("../configs/srd-truncated.toml")),
    (
        "VSI-epistemic-points",
        include_str!("../configs/vsi-epistemic-points.toml"),
    ),
    (
        "VSI-epistemic-interval",
        include_str!("../configs/vsi-epistemic-interval.toml"),
    ),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrialSettings {
    pub runs: usize,
    pub mc_samples: usize,
    pub master_seed: u64,
}

impl Default for TrialSettings {
    fn default() -> Self {
        Self {
            runs: 100,
            mc_samples: 10_000,
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
    pub solver: SolverConfig,
    pub trial: TrialSettings,
}

impl RunConfigFile {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.solver.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    /// The named built-in problem, with truncated uncertainty when the
    /// solver uses the truncated kernel.
    pub fn build_problem(&self) -> Result<Problem> {
        let name = self
            .problem
            .as_deref()
            .ok_or_else(|| Error::Config("no problem given".into()))?;
        problem_for_kernel(name, self.solver.kernel)
    }
}

/// Built-in problem prepared for `kernel`: the truncated kernel only makes
/// sense if no realization pushes `x + xi` out of the box.
pub fn problem_for_kernel(name: &str, kernel: KernelKind) -> Result<Problem> {
    let p = builtin_problem(name)?;
    Ok(match kernel {
        KernelKind::Gaussian => p,
        KernelKind::TruncatedGaussian => p.with_truncated_uncertainty(),
    })
}

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

/// Case-insensitive preset lookup.
pub fn preset(name: &str) -> Result<RunConfigFile> {
    PRESETS
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name.trim()))
        .ok_or_else(|| {
            Error::Config(format!(
                "unknown preset `{name}` (known: {})",
                preset_names().join(", ")
            ))
        })
        .and_then(|(_, text)| RunConfigFile::from_toml_str(text))
}
