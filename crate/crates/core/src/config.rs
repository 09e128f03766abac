//! The JSON run description.
//!
//! ```json
//! {
//!   "dim": 3,
//!   "delta": 0.05,
//!   "init": {"kind": "gaussian_pair", "r0": 1, "z0": 0.5, "sigma": 0.15, "grid_n": 50},
//!   "control": {"t_end": 10, "cfl": 0.25, "output_every": 0.1},
//!   "moments_j": [2],
//!   "output_dir": "runs",
//!   "run_id": "d3"
//! }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::integrate::{StepControl, DEFAULT_CFL};
use crate::io::read_to_string;
use crate::specfun::{Dimension, TableOptions};
use crate::state::InitialData;
use crate::{Error, Result};

/// Kernel evaluation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    /// Use the interpolation table; `false` evaluates every kernel by quadrature.
    #[serde(default = "yes")]
    pub table: bool,
    #[serde(default = "table_s_min")]
    pub s_min: f64,
    #[serde(default = "table_s_max")]
    pub s_max: f64,
    #[serde(default = "table_rel_tol")]
    pub rel_tol: f64,
}

fn yes() -> bool {
    true
}

fn table_s_min() -> f64 {
    TableOptions::default().s_min
}

fn table_s_max() -> f64 {
    TableOptions::default().s_max
}

fn table_rel_tol() -> f64 {
    TableOptions::default().rel_tol
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            table: true,
            s_min: table_s_min(),
            s_max: table_s_max(),
            rel_tol: table_rel_tol(),
        }
    }
}

impl KernelConfig {
    pub fn table_options(&self, seed: u64) -> TableOptions {
        TableOptions {
            s_min: self.s_min,
            s_max: self.s_max,
            rel_tol: self.rel_tol,
            seed,
            ..TableOptions::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dim: u32,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub init: InitialData,
    pub control: StepControl,
    /// Extra moments `R_j`; `R_(d-1)` is always recorded.
    #[serde(default)]
    pub moments_j: Vec<f64>,
    #[serde(default = "default_logmom_p")]
    pub logmom_p: f64,
    #[serde(default = "yes")]
    pub deterministic: bool,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_run_id")]
    pub run_id: String,
    #[serde(default)]
    pub seed: u64,
    /// Exponent-fit window `[t_a, t_b]`; defaults to the last half of the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<[f64; 2]>,
    #[serde(default)]
    pub kernel: KernelConfig,
}

fn default_delta() -> f64 {
    0.05
}

fn default_logmom_p() -> f64 {
    2.0
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_run_id() -> String {
    "run".into()
}

const TOP_KEYS: &[&str] = &[
    "dim",
    "delta",
    "init",
    "control",
    "moments_j",
    "logmom_p",
    "deterministic",
    "output_dir",
    "run_id",
    "seed",
    "fit_window",
    "kernel",
];
const INIT_KEYS: &[&str] = &["kind", "r0", "z0", "sigma", "strength", "grid_n", "cutoff", "jitter"];
const CONTROL_KEYS: &[&str] = &["scheme", "dt", "cfl", "t_end", "output_every", "dt_max"];
const KERNEL_KEYS: &[&str] = &["table", "s_min", "s_max", "rel_tol"];

fn unknown_keys(value: &Value, prefix: &str, known: &[&str], out: &mut Vec<String>) {
    if let Value::Object(map) = value {
        for k in map.keys() {
            if !known.contains(&k.as_str()) {
                out.push(format!("{prefix}{k}"));
            }
        }
    }
}

impl SimConfig {
    pub fn dimension(&self) -> Result<Dimension> {
        Dimension::new(self.dim)
    }

    /// `moments_j` without `d - 1`, which has its own column.
    pub fn extra_moments(&self) -> Vec<f64> {
        let dm1 = self.dim as f64 - 1.0;
        let mut out: Vec<f64> = Vec::new();
        for &j in &self.moments_j {
            if j != dm1 && !out.contains(&j) {
                out.push(j);
            }
        }
        out
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.run_id)
    }

    pub fn validate(&self) -> Result<()> {
        self.dimension()?;
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!("delta must be ≥ 0, got {}", self.delta)));
        }
        self.init.validate()?;
        self.control.validate()?;
        if !(self.logmom_p >= 1.0 && self.logmom_p.is_finite()) {
            return Err(Error::Config(format!("logmom_p must be ≥ 1, got {}", self.logmom_p)));
        }
        if let Some(j) = self.moments_j.iter().find(|j| !(**j >= 0.0 && j.is_finite())) {
            return Err(Error::Config(format!("moments_j entries must be ≥ 0, got {j}")));
        }
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) || self.run_id == ".." {
            return Err(Error::Config(format!(
                "run_id must be a plain directory name, got {:?}",
                self.run_id
            )));
        }
        if let Some([a, b]) = self.fit_window {
            if !(a < b) {
                return Err(Error::Config(format!("fit_window needs t_a < t_b, got [{a}, {b}]")));
            }
        }
        if self.kernel.table {
            let k = &self.kernel;
            if !(k.s_min > 0.0 && k.s_max > k.s_min && k.s_max.is_finite()) {
                return Err(Error::Config(format!(
                    "kernel.s_min/s_max must satisfy 0 < s_min < s_max, got [{}, {}]",
                    k.s_min, k.s_max
                )));
            }
            if !(k.rel_tol > 0.0 && k.rel_tol <= 1e-3) {
                return Err(Error::Config(format!(
                    "kernel.rel_tol must lie in (0, 1e-3], got {}",
                    k.rel_tol
                )));
            }
        }
        Ok(())
    }

    /// The control block with the documented defaults made explicit.
    fn fill_defaults(&mut self) {
        if self.control.dt.is_none() && self.control.cfl.is_none() {
            self.control.cfl = Some(DEFAULT_CFL);
        }
        if self.control.output_every.is_none() && self.control.t_end > 0.0 {
            self.control.output_every = Some(self.control.output_every());
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}

/// Parses and validates a config document, reporting every unknown key.
pub fn parse_config(text: &str) -> Result<SimConfig> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Json {
        context: "config".into(),
        source: e,
    })?;
    if !value.is_object() {
        return Err(Error::Config("config must be a JSON object".into()));
    }
    let mut unknown = Vec::new();
    unknown_keys(&value, "", TOP_KEYS, &mut unknown);
    unknown_keys(&value["init"], "init.", INIT_KEYS, &mut unknown);
    unknown_keys(&value["control"], "control.", CONTROL_KEYS, &mut unknown);
    unknown_keys(&value["kernel"], "kernel.", KERNEL_KEYS, &mut unknown);
    if !unknown.is_empty() {
        return Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))));
    }
    if let Some(d) = value.get("dim").and_then(Value::as_u64) {
        if d < 3 {
            return Err(Error::Config(format!("dim ≥ 3 required, got {d}")));
        }
    }
    let mut cfg: SimConfig = serde_json::from_value(value).map_err(|e| Error::Json {
        context: "config".into(),
        source: e,
    })?;
    cfg.fill_defaults();
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<SimConfig> {
    parse_config(&read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::Scheme;

    const MINIMAL: &str =
        r#"{"dim":3,"init":{"kind":"gaussian_pair","r0":1,"z0":0.5,"sigma":0.15,"grid_n":20},"control":{"t_end":10}}"#;

    #[test]
    fn minimal_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.delta, 0.05);
        assert_eq!(c.control.cfl, Some(0.25));
        assert_eq!(c.control.scheme, Scheme::Rk4);
        assert_eq!(c.logmom_p, 2.0);
        assert!(c.deterministic);
        assert_eq!(c.init.strength, 1.0);
        assert_eq!(c.control.output_every, Some(0.1));
    }

    #[test]
    fn low_dimension_rejected() {
        let err = parse_config(&MINIMAL.replace("\"dim\":3", "\"dim\":2")).unwrap_err();
        assert!(err.to_string().contains("dim ≥ 3"), "{err}");
    }

    #[test]
    fn unknown_keys_are_all_listed() {
        let text = MINIMAL
            .replace("\"dim\":3", "\"dim\":3,\"bogus\":1")
            .replace("\"t_end\":10", "\"t_end\":10,\"nope\":2");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("bogus") && err.contains("control.nope"), "{err}");
    }

    #[test]
    fn round_trip() {
        let c = parse_config(MINIMAL).unwrap();
        let again = parse_config(&c.to_json()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn invariant_violations_name_fields() {
        let err = parse_config(&MINIMAL.replace("\"t_end\":10", "\"t_end\":10,\"dt\":0.1,\"cfl\":0.2")).unwrap_err();
        assert!(err.to_string().contains("mutually exclusive"));
        let err = parse_config(&MINIMAL.replace("\"dim\":3", "\"dim\":3,\"logmom_p\":0.5")).unwrap_err();
        assert!(err.to_string().contains("logmom_p"));
        assert!(parse_config("[1]").unwrap_err().is_config());
    }

    #[test]
    fn extra_moments_skip_d_minus_one() {
        let c = parse_config(&MINIMAL.replace("\"dim\":3", "\"dim\":3,\"moments_j\":[2,1,1]")).unwrap();
        assert_eq!(c.extra_moments(), vec![1.0]);
    }
}
