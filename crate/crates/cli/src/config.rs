//! Experiment configuration: parsing, defaults, flag overrides and validation.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use seplab::ModelParams;

/// A configuration problem located by its field path, e.g. `model.rho_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageError {
    pub path: String,
    pub message: String,
}

impl UsageError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for UsageError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl clap::ValueEnum for Format {
    fn value_variants<'a>() -> &'a [Self] {
        &[Format::Csv, Format::Json]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelBlock {
    pub alpha: u32,
    pub lambda_l: f64,
    pub lambda_r: f64,
    pub rho_l: f64,
    pub rho_r: f64,
    pub theta: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self { alpha: 2, lambda_l: 1.0, lambda_r: 1.0, rho_l: 0.5, rho_r: 1.5, theta: 0.0, n: 16 }
    }
}

impl ModelBlock {
    pub fn params(&self) -> Result<ModelParams, UsageError> {
        ModelParams::new(self.alpha, self.lambda_l, self.lambda_r, self.rho_l, self.rho_r, self.theta, self.n).map_err(
            |e| {
                // core messages lead with the offending field name
                let msg = match e {
                    seplab::Error::Domain(m) => m,
                    other => other.to_string(),
                };
                let field = msg.split_whitespace().next().unwrap_or("").to_string();
                UsageError::new(format!("model.{field}"), msg)
            },
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunBlock {
    pub t_end: f64,
    /// Number of uniform steps on [0, t_end]; ignored when `times` is given.
    pub steps: usize,
    pub times: Option<Vec<f64>>,
    pub replicas: usize,
    pub seed: Option<u64>,
}

impl Default for RunBlock {
    fn default() -> Self {
        Self { t_end: 1.0, steps: 10, times: None, replicas: 100, seed: None }
    }
}

impl RunBlock {
    pub fn grid(&self) -> Vec<f64> {
        match &self.times {
            Some(t) => t.clone(),
            None => (0..=self.steps).map(|k| self.t_end * k as f64 / self.steps as f64).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Initial {
    /// The stationary profile of the density equation.
    Stationary,
    Constant {
        value: f64,
    },
    /// Lattice stationary profile plus `amplitude` times a bump on `support`.
    Bump {
        amplitude: f64,
        support: (f64, f64),
    },
    /// Explicit values at sites 1..N-1.
    Profile {
        values: Vec<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spectrum {
    Semigroup,
    Kernel,
    Roots,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskBlock {
    pub initial: Initial,
    pub integrator: Option<String>,
    pub spectrum: Spectrum,
    pub modes: usize,
    pub points: usize,
    pub thetas: Vec<f64>,
    #[serde(rename = "N_list")]
    pub n_list: Vec<usize>,
    pub state_cap: usize,
    pub criteria: Vec<u8>,
}

impl Default for TaskBlock {
    fn default() -> Self {
        Self {
            initial: Initial::Stationary,
            integrator: None,
            spectrum: Spectrum::Semigroup,
            modes: 32,
            points: 51,
            thetas: vec![-1.0, 0.0, 0.5, 1.0, 2.0],
            n_list: vec![8, 16, 32],
            state_cap: 20_000,
            criteria: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub dir: PathBuf,
    pub format: Format,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), format: Format::Csv }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelBlock,
    pub run: RunBlock,
    pub task: TaskBlock,
    pub output: OutputBlock,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub format: Option<Format>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, UsageError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { String::new() } else { path };
            UsageError::new(path, e.into_inner().to_string())
        })
    }

    pub fn load(path: Option<&Path>, o: &Overrides) -> Result<Self, UsageError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| UsageError::new("", format!("cannot read {}: {e}", p.display())))?;
                Self::from_json(&text)?
            }
            None => Self::default(),
        };
        if o.seed.is_some() {
            cfg.run.seed = o.seed;
        }
        if let Some(d) = &o.out_dir {
            cfg.output.dir = d.clone();
        }
        if let Some(f) = o.format {
            cfg.output.format = f;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<ModelParams, UsageError> {
        let p = self.model.params()?;
        let r = &self.run;
        if !(r.t_end.is_finite() && r.t_end > 0.0) {
            return Err(UsageError::new("run.t_end", format!("must be positive and finite, got {}", r.t_end)));
        }
        if r.steps == 0 {
            return Err(UsageError::new("run.steps", "must be at least 1"));
        }
        if let Some(ts) = &r.times {
            if ts.is_empty() {
                return Err(UsageError::new("run.times", "must not be empty"));
            }
            for (i, &t) in ts.iter().enumerate() {
                if !(t.is_finite() && t >= 0.0) {
                    return Err(UsageError::new(
                        format!("run.times[{i}]"),
                        format!("must be finite and non-negative, got {t}"),
                    ));
                }
                if i > 0 && t <= ts[i - 1] {
                    return Err(UsageError::new(format!("run.times[{i}]"), "times must be strictly increasing"));
                }
            }
        }
        if r.replicas < 2 {
            return Err(UsageError::new("run.replicas", "must be at least 2"));
        }
        let t = &self.task;
        let a = p.a();
        match &t.initial {
            Initial::Constant { value } if !(0.0..=a).contains(value) => {
                return Err(UsageError::new("task.initial.value", format!("must lie in [0, alpha], got {value}")));
            }
            Initial::Bump { support: (lo, hi), .. } if !(0.0 <= *lo && lo < hi && *hi <= 1.0) => {
                return Err(UsageError::new("task.initial.support", "need 0 <= a < b <= 1"));
            }
            Initial::Profile { values } => {
                if values.len() != p.sites() {
                    return Err(UsageError::new(
                        "task.initial.values",
                        format!("need {} entries (sites 1..N-1), got {}", p.sites(), values.len()),
                    ));
                }
                if let Some(i) = values.iter().position(|v| !(0.0..=a).contains(v)) {
                    return Err(UsageError::new(format!("task.initial.values[{i}]"), "must lie in [0, alpha]"));
                }
            }
            _ => {}
        }
        if t.modes == 0 {
            return Err(UsageError::new("task.modes", "must be at least 1"));
        }
        if t.points < 2 {
            return Err(UsageError::new("task.points", "must be at least 2"));
        }
        if t.n_list.len() < 3 {
            return Err(UsageError::new("task.N_list", "a fit needs at least three values of N"));
        }
        if let Some(i) = t.n_list.iter().position(|&n| n < 3) {
            return Err(UsageError::new(format!("task.N_list[{i}]"), "N must be at least 3"));
        }
        if let Some(i) = t.thetas.iter().position(|v| !v.is_finite()) {
            return Err(UsageError::new(format!("task.thetas[{i}]"), "must be finite"));
        }
        if let Some(i) = t.criteria.iter().position(|&c| !(1..=14).contains(&c)) {
            return Err(UsageError::new(format!("task.criteria[{i}]"), "criterion ids run from 1 to 14"));
        }
        Ok(p)
    }

    /// Seed for stochastic tasks; absent seeds are a usage error.
    pub fn seed(&self, command: &str) -> Result<u64, UsageError> {
        self.run.seed.ok_or_else(|| UsageError::new("run.seed", format!("required by `{command}` (or pass --seed)")))
    }

    /// SHA-256 of the canonical JSON of the model, run and task blocks.
    pub fn hash(&self) -> String {
        let v = serde_json::json!({ "model": self.model, "run": self.run, "task": self.task });
        format!("{:x}", Sha256::digest(v.to_string().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        assert_eq!(ExperimentConfig::from_json("{}").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn type_errors_carry_the_field_path() {
        let e = ExperimentConfig::from_json(r#"{"model": {"alpha": "two"}}"#).unwrap_err();
        assert_eq!(e.path, "model.alpha");
        let e = ExperimentConfig::from_json(r#"{"run": {"times": [0.1, "x"]}}"#).unwrap_err();
        assert_eq!(e.path, "run.times[1]");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let e = ExperimentConfig::from_json(r#"{"model": {"gamma": 1}}"#).unwrap_err();
        assert_eq!(e.path, "model.gamma");
        assert!(e.message.contains("gamma"));
    }

    #[test]
    fn model_invariants_map_to_fields() {
        let mut c = ExperimentConfig::default();
        c.model.rho_l = 3.0;
        assert_eq!(c.validate().unwrap_err().path, "model.rho_l");
        c.model.rho_l = 0.5;
        c.model.n = 2;
        assert_eq!(c.validate().unwrap_err().path, "model.N");
        c.model.n = 8;
        c.model.lambda_r = 0.0;
        assert_eq!(c.validate().unwrap_err().path, "model.lambda_r");
    }

    #[test]
    fn run_and_task_checks() {
        let mut c = ExperimentConfig::default();
        c.run.times = Some(vec![0.0, 0.5, 0.5]);
        assert_eq!(c.validate().unwrap_err().path, "run.times[2]");
        let mut c = ExperimentConfig::default();
        c.task.initial = Initial::Profile { values: vec![1.0; 3] };
        assert_eq!(c.validate().unwrap_err().path, "task.initial.values");
        assert_eq!(c.seed("simulate").unwrap_err().path, "run.seed");
    }

    #[test]
    fn hash_ignores_output_and_tracks_model() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output.dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.model.theta = 0.5;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn sample_configs_load_and_schema_matches_fields() {
        let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
        for e in std::fs::read_dir(root.join("configs")).unwrap() {
            let path = e.unwrap().path();
            ExperimentConfig::load(Some(&path), &Overrides::default()).unwrap_or_else(|e| panic!("{path:?}: {e}"));
        }
        let schema: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(root.join("docs/config.schema.json")).unwrap()).unwrap();
        let defaults = serde_json::to_value(ExperimentConfig::default()).unwrap();
        let keys = |v: &serde_json::Value| -> Vec<String> {
            let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
            k.sort();
            k
        };
        assert_eq!(keys(&schema["properties"]), keys(&defaults));
        for block in ["model", "run", "task", "output"] {
            assert_eq!(keys(&schema["properties"][block]["properties"]), keys(&defaults[block]), "{block}");
        }
    }
}
