//! Experiment configuration.
//!
//! TOML with sections `[family]`, `[envelope]`, `[run]`, `[bounds]` and
//! `[output]`. Unknown keys are rejected. Command-line flags and the
//! `ISQ_OUTPUT_DIR` variable are applied on top through [`Overrides`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use isq_core::bounds::busy_bound;
use isq_core::{Envelope, Family, Intensity};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.toml");
pub const OUTPUT_DIR_ENV: &str = "ISQ_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySection {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSection {
    #[serde(rename = "K")]
    pub k: f64,
    pub lambda0: f64,
    #[serde(rename = "Lambda")]
    pub lambda_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub horizon: f64,
    pub replications: usize,
    pub master_seed: u64,
    pub time_grid: Vec<f64>,
    #[serde(default)]
    pub warmup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub r: Vec<f64>,
    #[serde(default)]
    pub varpi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    #[serde(default = "yes")]
    pub csv: bool,
    #[serde(default = "yes")]
    pub json: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: FamilySection,
    pub envelope: EnvelopeSection,
    pub run: RunSection,
    pub bounds: BoundsSection,
    pub output: OutputSection,
}

/// Values taken from the command line or the environment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub horizon: Option<f64>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| LabError::Config {
            origin: origin.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate().map_err(|message| LabError::Config {
            origin: origin.to_string(),
            message,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| LabError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn shipped_default() -> Self {
        Self::parse(DEFAULT_CONFIG, "default.toml").expect("shipped default config is valid")
    }

    pub fn apply(mut self, o: &Overrides) -> Result<Self> {
        if let Some(s) = o.seed {
            self.run.master_seed = s;
        }
        if let Some(r) = o.reps {
            self.run.replications = r;
        }
        if let Some(h) = o.horizon {
            self.run.horizon = h;
        }
        if let Some(d) = &o.output_dir {
            self.output.directory = d.clone();
        }
        self.validate().map_err(|message| LabError::Config {
            origin: "command line".into(),
            message,
        })?;
        Ok(self)
    }

    pub fn envelope(&self) -> Envelope {
        Envelope {
            k: self.envelope.k,
            lambda0: self.envelope.lambda0,
            lambda_max: self.envelope.lambda_max,
        }
    }

    pub fn family(&self) -> Result<Family> {
        Ok(Family::from_params(&self.family.name, &self.family.params)?)
    }

    /// Warm-up before sampling the stationary proxy.
    pub fn warmup(&self) -> Result<f64> {
        match self.run.warmup {
            Some(w) => Ok(w),
            None => Ok(50.0 * busy_bound(&self.envelope(), 1.0)?.max(1.0)),
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let env = self.envelope();
        env.validate().map_err(|e| format!("[envelope]: {e}"))?;
        let family = Family::from_params(&self.family.name, &self.family.params)
            .map_err(|e| format!("[family]: {e}"))?;
        let own = family.envelope();
        let tol = 1e-12;
        if own.k < env.k * (1.0 - tol)
            || own.lambda0 < env.lambda0 * (1.0 - tol)
            || own.lambda_max > env.lambda_max * (1.0 + tol)
        {
            return Err(format!(
                "[family]: envelope (K={}, lambda0={}, Lambda={}) is not inside [envelope] (K={}, lambda0={}, Lambda={})",
                own.k, own.lambda0, own.lambda_max, env.k, env.lambda0, env.lambda_max
            ));
        }
        let run = &self.run;
        if !(run.horizon > 0.0 && run.horizon.is_finite()) {
            return Err(format!("[run].horizon: must be positive and finite, got {}", run.horizon));
        }
        if run.replications == 0 {
            return Err("[run].replications: must be at least 1".into());
        }
        if run.time_grid.is_empty() {
            return Err("[run].time_grid: must not be empty".into());
        }
        if run.time_grid.iter().any(|t| !(*t > 0.0 && t.is_finite()))
            || run.time_grid.windows(2).any(|w| w[1] <= w[0])
        {
            return Err("[run].time_grid: must be positive and strictly increasing".into());
        }
        if let Some(w) = run.warmup {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(format!("[run].warmup: must be nonnegative, got {w}"));
            }
        }
        if self.bounds.r.is_empty() {
            return Err("[bounds].r: must not be empty".into());
        }
        for &r in &self.bounds.r {
            if !(r >= 1.0 && r < env.k - 1.0) {
                return Err(format!("[bounds].r: {r} outside [1, K-1) = [1, {})", env.k - 1.0));
            }
        }
        if let Some(v) = self.bounds.varpi {
            if !(v > 0.0 && v <= 1.0) {
                return Err(format!("[bounds].varpi: must lie in (0, 1], got {v}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_default_parses() {
        let cfg = ExperimentConfig::shipped_default();
        assert_eq!(cfg.family.name, "state-modulated");
        assert_eq!(cfg.bounds.r, vec![1.0, 2.0]);
    }

    #[test]
    fn parse_errors_name_the_field() {
        let bad = DEFAULT_CONFIG.replace("replications = 1000", "replications = \"many\"");
        let msg = ExperimentConfig::parse(&bad, "x.toml").unwrap_err().to_string();
        assert!(msg.contains("replications") && msg.contains("line"), "{msg}");
        let bad = DEFAULT_CONFIG.replace("r = [1.0, 2.0]", "r = [1.0, 3.5]");
        let msg = ExperimentConfig::parse(&bad, "x.toml").unwrap_err().to_string();
        assert!(msg.contains("[bounds].r"), "{msg}");
        let bad = DEFAULT_CONFIG.replace("[output]", "[output]\ncolour = 1");
        assert!(ExperimentConfig::parse(&bad, "x.toml").is_err());
    }

    #[test]
    fn family_must_fit_the_envelope() {
        let bad = DEFAULT_CONFIG.replace("lambda0 = 0.5\nLambda = 1.0\nK = 4.0", "lambda0 = 0.5\nLambda = 2.0\nK = 4.0");
        let msg = ExperimentConfig::parse(&bad, "x.toml").unwrap_err().to_string();
        assert!(msg.contains("not inside"), "{msg}");
    }

    #[test]
    fn overrides_apply() {
        let cfg = ExperimentConfig::shipped_default()
            .apply(&Overrides {
                seed: Some(9),
                reps: Some(3),
                horizon: Some(7.0),
                output_dir: Some("elsewhere".into()),
            })
            .unwrap();
        assert_eq!(cfg.run.master_seed, 9);
        assert_eq!(cfg.run.replications, 3);
        assert_eq!(cfg.run.horizon, 7.0);
        assert_eq!(cfg.output.directory, PathBuf::from("elsewhere"));
        assert!(ExperimentConfig::shipped_default()
            .apply(&Overrides { reps: Some(0), ..Default::default() })
            .is_err());
    }
}
