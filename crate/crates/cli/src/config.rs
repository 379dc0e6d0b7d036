//! Run configuration. JSON, unknown keys rejected, every section optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spinsqz_core::experiments::{AxisSpec, LinearRange, Scenario, SweepParam, DEFAULT_GRID_POINTS};
use spinsqz_core::{HybridParams, SpinSystem};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub params: HybridParams,
    pub spin: SpinSystem,
    pub scenario: Option<Scenario>,
    pub io: IoPaths,
    pub spectrum: SpectrumGrid,
    pub efficiency: EfficiencyGrid,
    pub seed: u64,
}

/// Input files; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoPaths {
    pub reference: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
}

/// Probe detuning from `f_r` and spin-resonator detuning, Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumGrid {
    pub probe: LinearRange,
    pub detuning: LinearRange,
}

impl Default for SpectrumGrid {
    fn default() -> Self {
        Self {
            probe: LinearRange {
                min: -5e6,
                max: 5e6,
                points: DEFAULT_GRID_POINTS,
            },
            detuning: LinearRange {
                min: -10e6,
                max: 10e6,
                points: DEFAULT_GRID_POINTS,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EfficiencyGrid {
    pub x: AxisSpec,
    pub y: AxisSpec,
}

impl Default for EfficiencyGrid {
    fn default() -> Self {
        Self {
            x: AxisSpec::linear(SweepParam::KappaExt, 0.01e6, 2e6, DEFAULT_GRID_POINTS),
            y: AxisSpec::linear(SweepParam::KappaInt, 1e2, 1e6, DEFAULT_GRID_POINTS),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let cfg = match path {
            None => Self::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                serde_json::from_str(&text).map_err(|e| CliError::validation(format!("config {}: {e}", p.display())))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.params.validate()?;
        self.spin.validate()?;
        if let Some(s) = &self.scenario {
            s.validate()?;
        }
        self.spectrum.probe.validate()?;
        self.spectrum.detuning.validate()?;
        self.efficiency.x.validate()?;
        self.efficiency.y.validate()?;
        if self.efficiency.x.name == self.efficiency.y.name {
            return Err(CliError::validation("efficiency axes must sweep different parameters"));
        }
        Ok(())
    }

    /// Canonical serialization used for the provenance hash.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_sections_fill_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"params": {"g_eff": 1e5}, "seed": 4}"#).unwrap();
        assert_eq!(cfg.params.g_eff, 1e5);
        assert_eq!(cfg.params.kappa_ext, 1.49e6);
        assert_eq!(cfg.seed, 4);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"parms": {}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"params": {"kappa": 1.0}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(
            r#"{"spectrum": {"probe": {"min": 0, "max": 1, "points": 2, "step": 1}}}"#
        )
        .is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"spectrum": {"probe": {"min": 1, "max": 0, "points": 3}}}"#).unwrap();
        assert!(cfg.validate().is_err());
        let cfg: RunConfig = serde_json::from_str(r#"{"params": {"gamma_s": -1}}"#).unwrap();
        assert!(cfg.validate().is_err());
    }
}
