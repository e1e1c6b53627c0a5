//! Planner configuration document.
//!
//! One TOML file holds every tunable constant. Missing keys take their
//! defaults, unknown keys are rejected, and `version` must equal
//! [`CONFIG_VERSION`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::easa::EasaParams;
use crate::error::{PlannerError, Result};
use crate::high_mpcc::HighMpccConfig;
use crate::low_mpc::LowMpcConfig;
use crate::optimizer::OptimizeOptions;
use crate::sim::SimConfig;

pub const CONFIG_VERSION: u32 = 1;

/// Optimiser options per layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub low: OptimizeOptions,
    pub high: OptimizeOptions,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            low: OptimizeOptions {
                max_iterations: 100,
                gradient_tolerance: 1e-5,
                ..Default::default()
            },
            high: OptimizeOptions {
                max_iterations: 60,
                gradient_tolerance: 1e-5,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub version: u32,
    pub easa: EasaParams,
    pub low_mpc: LowMpcConfig,
    pub high_mpcc: HighMpccConfig,
    pub optimizer: OptimizerConfig,
    pub sim: SimConfig,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            easa: EasaParams::default(),
            low_mpc: LowMpcConfig::default(),
            high_mpcc: HighMpccConfig::default(),
            optimizer: OptimizerConfig::default(),
            sim: SimConfig::default(),
        }
    }
}

impl PlannerConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| PlannerError::Config(e.to_string()))?;
        cfg.validate().map_err(PlannerError::Config)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| {
            PlannerError::Config(format!(
                "{}: {}",
                path.display(),
                e.to_string().trim_start_matches("config: ")
            ))
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.version != CONFIG_VERSION {
            return Err(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            ));
        }
        self.easa.validate()?;
        self.low_mpc.validate()?;
        self.high_mpcc.validate()?;
        self.optimizer.low.validate()?;
        self.optimizer.high.validate()?;
        self.sim.validate()?;
        Ok(())
    }

    /// Same configuration with the risk-weight term switched off.
    pub fn without_easa(&self) -> Self {
        let mut cfg = self.clone();
        cfg.high_mpcc.lambda[2] = 0.0;
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let text = PlannerConfig::default().to_toml_string();
        let parsed = PlannerConfig::from_toml_str(&text).unwrap();
        assert_eq!(parsed, PlannerConfig::default());
        assert_eq!(parsed.to_toml_string(), text);
    }

    #[test]
    fn missing_keys_take_defaults() {
        let cfg = PlannerConfig::from_toml_str("[easa]\nalpha = 9.0\n").unwrap();
        assert_eq!(cfg.easa.alpha, 9.0);
        assert_eq!(cfg.high_mpcc, HighMpccConfig::default());
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let err = PlannerConfig::from_toml_str("version = 1\n\n[easa]\nalpah = 3.0\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("alpah"), "{msg}");
        assert!(msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn wrong_weight_count_is_rejected() {
        let err = PlannerConfig::from_toml_str("[high_mpcc]\nlambda = [1.0, 2.0, 3.0, 4.0]\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let err = PlannerConfig::from_toml_str("version = 2\n").unwrap_err();
        assert!(err.to_string().contains("version 2"));
    }

    #[test]
    fn invalid_bounds_are_rejected() {
        let err = PlannerConfig::from_toml_str("[high_mpcc.limits]\nvelocity = [3.0, -3.0]\n").unwrap_err();
        assert!(err.to_string().contains("velocity"));
    }

    #[test]
    fn ablation_only_touches_easa_weight() {
        let on = PlannerConfig::default();
        let off = on.without_easa();
        assert_eq!(off.high_mpcc.lambda[2], 0.0);
        let mut restored = off.clone();
        restored.high_mpcc.lambda[2] = on.high_mpcc.lambda[2];
        assert_eq!(restored, on);
    }
}
