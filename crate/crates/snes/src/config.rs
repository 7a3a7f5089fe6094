//! Run configuration read from TOML. Every key is optional; missing keys take
//! the experimental defaults and unknown keys are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use snes_core::apinn::PolicyMode;
use snes_core::bench::ClassId;
use snes_core::regress::{AdamParams, SvrParams, TrainConfig};
use snes_core::{ApinnConfig, Architecture, BatteryParams, ProcessConfig, Scenario};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Benchmark class, `S1` to `S13`.
    pub class: String,
    /// `high` or `low` battery efficiency.
    pub scenario: String,
    /// `nn`, `ols` (alias `lr`) or `svr`.
    pub architecture: String,
    pub horizon: usize,
    /// Trajectories per initial level and round.
    pub trajectories: usize,
    pub rounds: usize,
    /// Initial battery levels swept in evaluation and improvement.
    pub levels: Vec<i64>,
    pub improvement_samples: usize,
    /// `online_greedy` or `table`.
    pub rollout: String,
    pub seed: u64,
    /// Starting battery level for `eval` and `oracle`; benchmarks start empty.
    pub initial_storage: i64,
    pub battery: BatterySection,
    pub train: TrainSection,
    pub bench: BenchSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            class: "S1".into(),
            scenario: "high".into(),
            architecture: "nn".into(),
            horizon: 10,
            trajectories: 3000,
            rounds: 10,
            levels: (0..10).collect(),
            improvement_samples: 200,
            rollout: PolicyMode::OnlineGreedy.name().into(),
            seed: 0,
            initial_storage: 0,
            battery: BatterySection::default(),
            train: TrainSection::default(),
            bench: BenchSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatterySection {
    pub capacity: i64,
    pub max_inject: i64,
    pub max_withdraw: i64,
    pub hold_cost: f64,
    /// Overrides the scenario's injection loss when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inject_loss: Option<f64>,
    /// Overrides the scenario's withdrawal loss when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub withdraw_loss: Option<f64>,
}

impl Default for BatterySection {
    fn default() -> Self {
        let p = BatteryParams::standard(Scenario::High);
        BatterySection {
            capacity: p.capacity,
            max_inject: p.max_inject,
            max_withdraw: p.max_withdraw,
            hold_cost: p.hold_cost,
            inject_loss: None,
            withdraw_loss: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub epochs: usize,
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub dropout: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub svr_penalty: f64,
    pub svr_epsilon: f64,
    pub svr_max_iter: usize,
    pub svr_tol: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            batch_size: t.batch_size,
            epochs: t.epochs,
            train_fraction: t.train_fraction,
            validation_fraction: t.validation_fraction,
            dropout: t.dropout,
            learning_rate: t.adam.step,
            beta1: t.adam.beta1,
            beta2: t.adam.beta2,
            adam_epsilon: t.adam.epsilon,
            svr_penalty: t.svr.penalty,
            svr_epsilon: t.svr.epsilon,
            svr_max_iter: t.svr.max_iter,
            svr_tol: t.svr.tol,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            train_fraction: self.train_fraction,
            validation_fraction: self.validation_fraction,
            adam: AdamParams {
                step: self.learning_rate,
                beta1: self.beta1,
                beta2: self.beta2,
                epsilon: self.adam_epsilon,
            },
            dropout: self.dropout,
            svr: SvrParams {
                penalty: self.svr_penalty,
                epsilon: self.svr_epsilon,
                max_iter: self.svr_max_iter,
                tol: self.svr_tol,
            },
        }
    }
}

/// Sweep settings. The defaults are a desk-sized run; `full` switches to
/// the experimental scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub instances: usize,
    pub classes: Vec<String>,
    pub scenarios: Vec<String>,
    pub architectures: Vec<String>,
    /// Trajectories per level and round used by the sweep.
    pub trajectories: usize,
    pub rounds: usize,
    /// Share threshold, in percent, for the proportion column.
    pub threshold: f64,
    /// Root of the evaluation instance streams, kept apart from `seed` so
    /// every cell and approach sees the same instances.
    pub instance_seed: u64,
    /// Worker threads; 0 means all available cores.
    pub jobs: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            instances: 200,
            classes: ["S1", "S3", "S7", "S12"].map(String::from).to_vec(),
            scenarios: ["high", "low"].map(String::from).to_vec(),
            architectures: ["nn", "ols", "svr"].map(String::from).to_vec(),
            trajectories: 300,
            rounds: 3,
            threshold: 80.0,
            instance_seed: 2024,
            jobs: 0,
        }
    }
}

impl BenchSection {
    /// Experimental scale: every class, 2000 instances, the top-level `M` and `N`.
    pub fn full(base: &RunConfig) -> Self {
        BenchSection {
            instances: 2000,
            classes: ClassId::all().map(|c| c.to_string()).collect(),
            trajectories: base.trajectories,
            rounds: base.rounds,
            ..base.bench.clone()
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serialises")
    }

    pub fn class_id(&self) -> Result<ClassId> {
        parse_class(&self.class)
    }

    pub fn scenario(&self) -> Result<Scenario> {
        parse_scenario(&self.scenario)
    }

    pub fn architecture(&self) -> Result<Architecture> {
        parse_architecture(&self.architecture)
    }

    pub fn rollout(&self) -> Result<PolicyMode> {
        PolicyMode::parse(&self.rollout)
            .ok_or_else(|| Error::config(format!("rollout must be online_greedy or table, got '{}'", self.rollout)))
    }

    pub fn battery_params(&self, scenario: Scenario) -> Result<BatteryParams> {
        let b = &self.battery;
        let p = BatteryParams {
            capacity: b.capacity,
            max_inject: b.max_inject,
            max_withdraw: b.max_withdraw,
            hold_cost: b.hold_cost,
            inject_loss: b.inject_loss.unwrap_or(scenario.loss_rate()),
            withdraw_loss: b.withdraw_loss.unwrap_or(scenario.loss_rate()),
        };
        p.validate().map_err(|e| Error::config(format!("battery: {e}")))?;
        Ok(p)
    }

    pub fn process(&self, class: ClassId) -> Result<ProcessConfig> {
        class.spec().process_config(self.horizon).map_err(|e| Error::config(format!("process: {e}")))
    }

    /// Loop settings for one `(class, scenario, architecture)` cell.
    pub fn apinn_config(&self, class: ClassId, scenario: Scenario, arch: Architecture) -> Result<ApinnConfig> {
        let cfg = ApinnConfig {
            process: self.process(class)?,
            battery: self.battery_params(scenario)?,
            trajectories: self.trajectories,
            rounds: self.rounds,
            levels: self.levels.clone(),
            architecture: arch,
            improvement_samples: self.improvement_samples,
            rollout: self.rollout()?,
            train: self.train.to_train_config(),
            seed: self.seed,
        };
        cfg.validate().map_err(|e| Error::config(e.to_string()))?;
        Ok(cfg)
    }

    /// Checks every field, reporting the first problem.
    pub fn validate(&self) -> Result<()> {
        let class = self.class_id()?;
        let scenario = self.scenario()?;
        let arch = self.architecture()?;
        if self.horizon == 0 {
            return Err(Error::config("horizon must be positive"));
        }
        let params = self.battery_params(scenario)?;
        if !(0..=params.capacity).contains(&self.initial_storage) {
            return Err(Error::config(format!(
                "initial_storage {} outside [0, {}]",
                self.initial_storage, params.capacity
            )));
        }
        self.apinn_config(class, scenario, arch)?;
        let b = &self.bench;
        if b.instances == 0 || b.trajectories == 0 || b.rounds == 0 {
            return Err(Error::config("bench instances, trajectories and rounds must be positive"));
        }
        if !(b.threshold.is_finite()) {
            return Err(Error::config("bench threshold must be finite"));
        }
        if b.classes.is_empty() || b.scenarios.is_empty() || b.architectures.is_empty() {
            return Err(Error::config("bench needs at least one class, scenario and architecture"));
        }
        for c in &b.classes {
            parse_class(c)?;
        }
        for s in &b.scenarios {
            parse_scenario(s)?;
        }
        for a in &b.architectures {
            parse_architecture(a)?;
        }
        Ok(())
    }
}

pub fn parse_class(s: &str) -> Result<ClassId> {
    ClassId::parse(s).ok_or_else(|| Error::config(format!("unknown class '{s}', expected S1..S13")))
}

pub fn parse_scenario(s: &str) -> Result<Scenario> {
    Scenario::parse(s).ok_or_else(|| Error::config(format!("scenario must be high or low, got '{s}'")))
}

pub fn parse_architecture(s: &str) -> Result<Architecture> {
    Architecture::parse(s).ok_or_else(|| Error::config(format!("architecture must be nn, ols or svr, got '{s}'")))
}
