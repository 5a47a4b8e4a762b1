//! Experiment configuration: dimensions, horizon, seeds, policy list,
//! age-compensation weight, and parameter source, loadable from a flat
//! TOML document whose keys mirror the field names.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, MAX_EVENTS};
use crate::sched::{PolicyKind, SteadyAggregate};

/// The age-compensation weight: either an explicit value or the request to
/// tune it before the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaSetting {
    Value(f64),
    Keyword(String),
}

impl BetaSetting {
    pub fn optimize() -> Self {
        BetaSetting::Keyword("optimize".to_string())
    }

    pub fn is_optimize(&self) -> bool {
        matches!(self, BetaSetting::Keyword(s) if s == "optimize")
    }

    pub fn explicit_value(&self) -> Option<f64> {
        match self {
            BetaSetting::Value(v) => Some(*v),
            BetaSetting::Keyword(_) => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BetaSetting::Value(v) if v.is_finite() && *v >= 0.0 => Ok(()),
            BetaSetting::Value(v) => Err(Error::config(
                "beta",
                format!("must be a finite nonnegative number, got {v}"),
            )),
            BetaSetting::Keyword(s) if s == "optimize" => Ok(()),
            BetaSetting::Keyword(s) => Err(Error::config(
                "beta",
                format!("expected a number or the keyword \"optimize\", got \"{s}\""),
            )),
        }
    }
}

/// Output encoding for the per-policy series files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::config(
                "format",
                format!("expected \"csv\" or \"json\", got \"{other}\""),
            )),
        }
    }
}

/// Full description of a multi-seed experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_events: usize,
    pub n_devices: usize,
    pub n_slots: usize,
    /// Number of simulated time steps per run.
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub policies: Vec<PolicyKind>,
    pub beta: BetaSetting,
    /// Iteration cap of the estimation loop.
    pub em_max_iters: usize,
    /// Length of the training trace for the offline-learning policy.
    pub train_horizon: usize,
    /// Explicit transition probabilities (both present, or neither — then
    /// parameters are drawn per seed).
    pub eps0: Option<Vec<f64>>,
    pub eps1: Option<Vec<f64>>,
    /// Explicit activation probabilities, one row per event of length
    /// `n_devices`.
    pub q: Option<Vec<Vec<f64>>>,
    pub out_dir: Option<PathBuf>,
    pub format: OutputFormat,
    pub steady_aggregate: SteadyAggregate,
    /// Cap on the online learner's observation history; absent keeps all.
    pub online_window: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_events: 5,
            n_devices: 50,
            n_slots: 10,
            horizon: 100,
            seeds: (1..=10).collect(),
            policies: vec![
                PolicyKind::Tdma,
                PolicyKind::Gf,
                PolicyKind::FuBaseline,
                PolicyKind::FuFeedback,
                PolicyKind::FuGenie,
            ],
            beta: BetaSetting::Value(0.0233),
            em_max_iters: 40,
            train_horizon: 100,
            eps0: None,
            eps1: None,
            q: None,
            out_dir: None,
            format: OutputFormat::Csv,
            steady_aggregate: SteadyAggregate::Mean,
            online_window: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(s)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_events == 0 {
            return Err(Error::config("n_events", "must be at least 1"));
        }
        if self.n_events > MAX_EVENTS {
            return Err(Error::config(
                "n_events",
                format!("joint filtering caps the event count at {MAX_EVENTS}"),
            ));
        }
        if self.n_devices == 0 {
            return Err(Error::config("n_devices", "must be at least 1"));
        }
        if self.n_slots == 0 || self.n_slots > self.n_devices {
            return Err(Error::config(
                "n_slots",
                format!(
                    "must satisfy 1 <= n_slots <= n_devices, got {} with n_devices = {}",
                    self.n_slots, self.n_devices
                ),
            ));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if self.train_horizon == 0 {
            return Err(Error::config("train_horizon", "must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        if self.policies.is_empty() {
            return Err(Error::config("policies", "need at least one policy"));
        }
        for (i, p) in self.policies.iter().enumerate() {
            if self.policies[..i].contains(p) {
                return Err(Error::config(
                    "policies",
                    format!("policy \"{p}\" listed more than once"),
                ));
            }
        }
        self.beta.validate()?;
        if self.em_max_iters == 0 {
            return Err(Error::config("em_max_iters", "must be at least 1"));
        }
        if self.online_window == Some(0) {
            return Err(Error::config(
                "online_window",
                "must be at least 1 when present",
            ));
        }
        self.validate_explicit_params()?;
        Ok(())
    }

    fn validate_explicit_params(&self) -> Result<()> {
        let given = [self.eps0.is_some(), self.eps1.is_some(), self.q.is_some()];
        if given.iter().all(|g| !g) {
            return Ok(());
        }
        if !given.iter().all(|g| *g) {
            return Err(Error::config(
                "eps0",
                "explicit parameters need all of eps0, eps1 and q",
            ));
        }
        let eps0 = self.eps0.as_ref().unwrap();
        let eps1 = self.eps1.as_ref().unwrap();
        let q = self.q.as_ref().unwrap();
        if eps0.len() != self.n_events {
            return Err(Error::config(
                "eps0",
                format!(
                    "has {} entries, expected n_events = {}",
                    eps0.len(),
                    self.n_events
                ),
            ));
        }
        if eps1.len() != self.n_events {
            return Err(Error::config(
                "eps1",
                format!(
                    "has {} entries, expected n_events = {}",
                    eps1.len(),
                    self.n_events
                ),
            ));
        }
        if q.len() != self.n_events {
            return Err(Error::config(
                "q",
                format!(
                    "has {} rows, expected n_events = {}",
                    q.len(),
                    self.n_events
                ),
            ));
        }
        for (n, row) in q.iter().enumerate() {
            if row.len() != self.n_devices {
                return Err(Error::config(
                    "q",
                    format!(
                        "row {n} has {} entries, expected n_devices = {}",
                        row.len(),
                        self.n_devices
                    ),
                ));
            }
        }
        for (name, values) in [("eps0", eps0), ("eps1", eps1)] {
            if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::config(name, "entries must lie in [0, 1]"));
            }
        }
        if q.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::config("q", "entries must lie in [0, 1]"));
        }
        for n in 0..self.n_events {
            if eps0[n] + eps1[n] == 0.0 {
                return Err(Error::config(
                    "eps0",
                    format!("event {n}: eps0 + eps1 must be positive so the steady state exists"),
                ));
            }
        }
        Ok(())
    }

    /// The explicit model parameters, if the config pins them.
    pub fn explicit_params(&self) -> Result<Option<ModelParams>> {
        match (&self.eps0, &self.eps1, &self.q) {
            (Some(e0), Some(e1), Some(q)) => {
                let flat: Vec<f64> = q.iter().flatten().copied().collect();
                Ok(Some(ModelParams::new(
                    self.n_slots,
                    e0.clone(),
                    e1.clone(),
                    flat,
                    self.n_devices,
                )?))
            }
            _ => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_standard_experiment() {
        let c = ExperimentConfig::default();
        assert_eq!(c.n_events, 5);
        assert_eq!(c.n_devices, 50);
        assert_eq!(c.n_slots, 10);
        assert_eq!(c.horizon, 100);
        assert_eq!(c.em_max_iters, 40);
        assert_eq!(c.beta, BetaSetting::Value(0.0233));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
            n_events = 2
            n_devices = 4
            n_slots = 2
            horizon = 20
            seeds = [1, 2, 3]
            policies = ["tdma", "fu-feedback"]
            beta = 0.1
        "#;
        let c = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(c.n_events, 2);
        assert_eq!(c.seeds, vec![1, 2, 3]);
        assert_eq!(c.policies, vec![PolicyKind::Tdma, PolicyKind::FuFeedback]);
        assert_eq!(c.beta.explicit_value(), Some(0.1));
    }

    #[test]
    fn beta_keyword_parses() {
        let c = ExperimentConfig::from_toml_str("beta = \"optimize\"").unwrap();
        assert!(c.beta.is_optimize());
        assert!(ExperimentConfig::from_toml_str("beta = \"maximize\"").is_err());
        assert!(ExperimentConfig::from_toml_str("beta = -0.5").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("horizonn = 5").is_err());
    }

    #[test]
    fn field_level_validation_errors() {
        let bad = |text: &str, field: &str| match ExperimentConfig::from_toml_str(text) {
            Err(Error::Config { field: f, .. }) => assert_eq!(f, field, "for {text}"),
            other => panic!("expected config error for {text}, got {other:?}"),
        };
        bad("n_events = 0", "n_events");
        bad("n_events = 17", "n_events");
        bad("n_slots = 60", "n_slots");
        bad("horizon = 0", "horizon");
        bad("seeds = []", "seeds");
        bad("policies = []", "policies");
        bad("policies = [\"tdma\", \"tdma\"]", "policies");
        bad("em_max_iters = 0", "em_max_iters");
        bad("online_window = 0", "online_window");
        bad("eps0 = [0.1]", "eps0");
    }

    #[test]
    fn explicit_params_validated_and_built() {
        let text = r#"
            n_events = 2
            n_devices = 3
            n_slots = 2
            eps0 = [0.1, 0.2]
            eps1 = [0.3, 0.4]
            q = [[0.5, 0.6, 0.7], [0.1, 0.2, 0.3]]
        "#;
        let c = ExperimentConfig::from_toml_str(text).unwrap();
        let params = c.explicit_params().unwrap().unwrap();
        assert_eq!(params.n_events(), 2);
        assert_eq!(params.q(1, 2), 0.3);

        let degenerate = r#"
            n_events = 1
            n_devices = 2
            n_slots = 1
            eps0 = [0.0]
            eps1 = [0.0]
            q = [[0.5, 0.5]]
        "#;
        assert!(ExperimentConfig::from_toml_str(degenerate).is_err());
    }

    #[test]
    fn json_round_trip_preserves_config() {
        let c = ExperimentConfig {
            beta: BetaSetting::optimize(),
            eps0: Some(vec![0.1; 5]),
            eps1: Some(vec![0.2; 5]),
            q: Some(vec![vec![0.5; 50]; 5]),
            ..ExperimentConfig::default()
        };
        let json = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(c, back);
    }
}
