//! `--config <json>` bundles. Keys are the long flag names in snake_case;
//! a flag given on the command line wins over the file. Keys that a command
//! does not use are ignored, so one file can drive several commands.

use std::path::{Path, PathBuf};

use brtwarn_core::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mu_log: Option<f64>,
    pub sigma_log: Option<f64>,
    pub population: Option<bool>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub p_accident: Option<f64>,
    pub p_min: Option<f64>,
    pub p_max: Option<f64>,
    pub points: Option<usize>,
    pub abs_tol: Option<f64>,
    pub rel_tol: Option<f64>,
    pub n: Option<u64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    pub mismatched: Option<bool>,
    pub kind: Option<String>,
    pub values: Option<Vec<f64>>,
    pub fixed: Option<f64>,
    pub p_ref: Option<f64>,
    pub plot: Option<bool>,
    pub obs: Option<PathBuf>,
    pub state: Option<PathBuf>,
    pub state_out: Option<PathBuf>,
    pub prior_within_std: Option<f64>,
    pub prior_weight: Option<f64>,
    pub prior_shape: Option<f64>,
    pub offset_std: Option<f64>,
    pub scenarios: Option<usize>,
    pub threshold: Option<f64>,
    pub policy: Option<String>,
    pub horizon: Option<f64>,
    pub check: Option<bool>,
    pub trace: Option<PathBuf>,
    pub kinematic: Option<bool>,
    pub speed: Option<Vec<f64>>,
    pub gap: Option<Vec<f64>>,
    pub lead_decel: Option<Vec<f64>>,
    pub extra_decel: Option<Vec<f64>>,
    pub individual_std: Option<f64>,
    pub family: Option<String>,
    pub rejection_threshold: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Usage(format!("invalid config {}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects_unknown_keys() {
        let c: RunConfig = serde_json::from_str(
            r#"{"p_accident": 0.01, "values": [0.2, 0.4], "population": true}"#,
        )
        .unwrap();
        assert_eq!(c.p_accident, Some(0.01));
        assert_eq!(c.values, Some(vec![0.2, 0.4]));
        assert!(serde_json::from_str::<RunConfig>(r#"{"p_acident": 0.01}"#).is_err());
    }
}
