//! Approximate policy iteration.
//!
//! Each round simulates the current policy from a sweep of initial battery
//! levels, fits a value model to the realised value-to-go, and rebuilds the
//! policy by enumerating every feasible storage level on sampled states:
//!
//! ```text
//! pi^n_t(prior, W_t) = argmax_{x^r_t} [ g_t(prior, x^r_t, W_t) + V^{n-1}(t, prior, x^b, x^s, x^r_t) ]
//! ```
//!
//! The starting policy is the naive one. Policies are applied either through
//! the sampled lookup table (unseen states fall back to the naive policy) or
//! greedily on the fly with the value model that produced the table.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::model::{
    feasible_storage_range, naive_policy, net_trade, stage_profit, validate_decision, BatteryParams, Decision,
    ModelError, Netting, StageState, Violation,
};
use crate::regress::{
    fit_linear_svr, fit_ols, mse, msle, nn_train, Architecture, FeatureVector, RegressError, TrainConfig,
    TrainingSample, ValueModel,
};
use crate::rng::StreamSeed;
use crate::stochastic::{sample_trajectory, ExogenousState, ProcessConfig, ProcessError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ApinnError {
    #[error("policy produced an infeasible decision at {key}: {violations:?}")]
    InfeasibleDecision { key: StateKey, violations: Vec<Violation> },
    #[error("empty evaluation dataset")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Regress(#[from] RegressError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Process(#[from] ProcessError),
}

/// How a [`PolicyTable`] turns a state into a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyMode {
    /// Exact lookup on the sampled state; naive policy on a miss.
    Table,
    /// Argmax with the table's value model at every state. Tables without a
    /// model (the initial policy) act naively.
    OnlineGreedy,
}

impl PolicyMode {
    pub fn name(self) -> &'static str {
        match self {
            PolicyMode::Table => "table",
            PolicyMode::OnlineGreedy => "online_greedy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "table" => Some(PolicyMode::Table),
            "online_greedy" | "greedy" => Some(PolicyMode::OnlineGreedy),
            _ => None,
        }
    }
}

/// `(t, x^r_{t-1}, E, D, C, P)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateKey {
    pub t: usize,
    pub prior: i64,
    pub w: ExogenousState,
}

impl StateKey {
    pub fn of(state: &StageState) -> Self {
        StateKey { t: state.t, prior: state.prior, w: state.w }
    }

    pub fn state(&self) -> StageState {
        StageState::new(self.t, self.prior, self.w)
    }
}

impl fmt::Display for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={} prior={} {}", self.t, self.prior, self.w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionSource {
    Table,
    Greedy,
    Naive,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolicyTable {
    entries: BTreeMap<StateKey, Decision>,
    /// Improvement round that produced the table; 0 for the naive policy.
    pub generation: usize,
    /// Value model behind the entries, if any.
    pub model: Option<ValueModel>,
}

impl PolicyTable {
    /// The initial policy: empty table, no model.
    pub fn naive() -> Self {
        PolicyTable::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &StateKey) -> Option<&Decision> {
        self.entries.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StateKey, &Decision)> {
        self.entries.iter()
    }

    /// Inserts after checking the decision against its key.
    pub fn insert(
        &mut self,
        key: StateKey,
        decision: Decision,
        params: &BatteryParams,
        horizon: usize,
    ) -> Result<(), ApinnError> {
        validate_decision(&decision, &key.state(), params, horizon, Netting::Required)
            .map_err(|violations| ApinnError::InfeasibleDecision { key, violations })?;
        self.entries.insert(key, decision);
        Ok(())
    }

    pub fn decide(
        &self,
        state: &StageState,
        params: &BatteryParams,
        horizon: usize,
        mode: PolicyMode,
    ) -> (Decision, DecisionSource) {
        match (mode, &self.model) {
            (PolicyMode::OnlineGreedy, Some(model)) => {
                (greedy_decision(model, state, params, horizon), DecisionSource::Greedy)
            }
            _ => match self.entries.get(&StateKey::of(state)) {
                Some(d) if mode == PolicyMode::Table => (*d, DecisionSource::Table),
                _ => (naive_policy(state, params, horizon), DecisionSource::Naive),
            },
        }
    }
}

/// Best storage level under `profit + predicted value-to-go`; ties go to
/// the smallest level.
pub fn greedy_decision(model: &ValueModel, state: &StageState, params: &BatteryParams, horizon: usize) -> Decision {
    let range = feasible_storage_range(state.prior, params, state.t >= horizon).expect("prior within capacity");
    let mut best = f64::NEG_INFINITY;
    let mut arg = net_trade(&state.w, state.prior, state.prior);
    for store in range {
        let d = net_trade(&state.w, store, state.prior);
        let score = stage_profit(&d, state.prior, &state.w, params)
            + model.predict(&FeatureVector::new(state.t, state.prior, d.buy, d.sell, d.store));
        if score > best {
            best = score;
            arg = d;
        }
    }
    arg
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub revenue: f64,
    pub decisions: Vec<Decision>,
    pub profits: Vec<f64>,
    pub sources: Vec<DecisionSource>,
    /// Decisions that came from the naive fallback rather than the table or
    /// the model.
    pub fallbacks: usize,
}

/// Applies `policy` causally along `trajectory`.
pub fn apply_policy(
    policy: &PolicyTable,
    trajectory: &[ExogenousState],
    initial_storage: i64,
    params: &BatteryParams,
    mode: PolicyMode,
) -> Rollout {
    let horizon = trajectory.len();
    let mut prior = initial_storage;
    let mut out = Rollout {
        revenue: 0.0,
        decisions: Vec::with_capacity(horizon),
        profits: Vec::with_capacity(horizon),
        sources: Vec::with_capacity(horizon),
        fallbacks: 0,
    };
    let learned = policy.model.is_some() || !policy.is_empty();
    for (i, w) in trajectory.iter().enumerate() {
        let state = StageState::new(i + 1, prior, *w);
        let (d, source) = policy.decide(&state, params, horizon, mode);
        let profit = stage_profit(&d, prior, w, params);
        if source == DecisionSource::Naive && learned {
            out.fallbacks += 1;
        }
        out.sources.push(source);
        out.revenue += profit;
        out.decisions.push(d);
        out.profits.push(profit);
        prior = d.store;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApinnConfig {
    pub process: ProcessConfig,
    pub battery: BatteryParams,
    /// Simulated trajectories per initial level and round (`M`).
    pub trajectories: usize,
    /// Improvement rounds (`N`).
    pub rounds: usize,
    /// Initial battery levels swept during evaluation and improvement.
    pub levels: Vec<i64>,
    pub architecture: Architecture,
    /// Exogenous samples per initial level during improvement.
    pub improvement_samples: usize,
    pub rollout: PolicyMode,
    pub train: TrainConfig,
    pub seed: u64,
}

impl ApinnConfig {
    /// `M = 3000`, `N = 10`, levels `0..=9`, 200 improvement samples.
    pub fn standard(process: ProcessConfig, battery: BatteryParams, architecture: Architecture) -> Self {
        ApinnConfig {
            process,
            battery,
            trajectories: 3000,
            rounds: 10,
            levels: (0..10).collect(),
            architecture,
            improvement_samples: 200,
            rollout: PolicyMode::OnlineGreedy,
            train: TrainConfig::default(),
            seed: 0,
        }
    }

    pub fn horizon(&self) -> usize {
        self.process.horizon
    }

    pub fn validate(&self) -> Result<(), ApinnError> {
        self.process.validate()?;
        self.battery.validate()?;
        self.train.validate()?;
        if self.trajectories == 0 || self.rounds == 0 || self.improvement_samples == 0 {
            return Err(ApinnError::Config("trajectories, rounds and improvement samples must be positive"));
        }
        if self.levels.is_empty() {
            return Err(ApinnError::Config("at least one initial level is required"));
        }
        if self.levels.iter().any(|&l| l < 0 || l > self.battery.capacity) {
            return Err(ApinnError::Config("initial levels must lie within battery capacity"));
        }
        Ok(())
    }
}

/// One simulated period: features, stage profit and the realised tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluationRow {
    pub trajectory: usize,
    pub t: usize,
    pub prior: i64,
    pub buy: i64,
    pub sell: i64,
    pub store: i64,
    pub profit: f64,
    /// Sum of stage profits over `t+1..=T` on the same trajectory.
    pub value_to_go: f64,
}

impl EvaluationRow {
    pub fn features(&self) -> FeatureVector {
        FeatureVector::new(self.t, self.prior, self.buy, self.sell, self.store)
    }

    pub fn sample(&self) -> TrainingSample {
        TrainingSample::new(self.features(), self.value_to_go)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationDataset {
    pub rows: Vec<EvaluationRow>,
    /// Total revenue of each simulated trajectory.
    pub revenues: Vec<f64>,
    pub fallbacks: usize,
}

impl EvaluationDataset {
    pub fn mean_revenue(&self) -> f64 {
        if self.revenues.is_empty() {
            0.0
        } else {
            self.revenues.iter().sum::<f64>() / self.revenues.len() as f64
        }
    }
}

/// Trajectory stream for initial level index `level` and replicate `m`.
pub fn trajectory_seed(seed: StreamSeed, level: usize, m: usize) -> StreamSeed {
    seed.index(level as u64).index(m as u64)
}

/// Simulates one trajectory under `policy` and returns its rows.
pub fn simulate_one(
    policy: &PolicyTable,
    cfg: &ApinnConfig,
    seed: StreamSeed,
    initial: i64,
    trajectory_id: usize,
) -> Result<(Vec<EvaluationRow>, f64, usize), ApinnError> {
    let horizon = cfg.horizon();
    let traj = sample_trajectory(&cfg.process, &mut seed.rng());
    let rollout = apply_policy(policy, &traj, initial, &cfg.battery, cfg.rollout);
    let mut rows = Vec::with_capacity(horizon);
    let mut prior = initial;
    for (i, (d, &profit)) in rollout.decisions.iter().zip(&rollout.profits).enumerate() {
        let state = StageState::new(i + 1, prior, traj[i]);
        let netting = match rollout.sources[i] {
            DecisionSource::Naive => Netting::Allowed,
            DecisionSource::Table | DecisionSource::Greedy => Netting::Required,
        };
        validate_decision(d, &state, &cfg.battery, horizon, netting)
            .map_err(|violations| ApinnError::InfeasibleDecision { key: StateKey::of(&state), violations })?;
        rows.push(EvaluationRow {
            trajectory: trajectory_id,
            t: i + 1,
            prior,
            buy: d.buy,
            sell: d.sell,
            store: d.store,
            profit,
            value_to_go: 0.0,
        });
        prior = d.store;
    }
    let mut tail = 0.0;
    for row in rows.iter_mut().rev() {
        row.value_to_go = tail;
        tail += row.profit;
    }
    Ok((rows, rollout.revenue, rollout.fallbacks))
}

/// Simulates `M` trajectories from every initial level.
pub fn evaluate_policy(
    policy: &PolicyTable,
    cfg: &ApinnConfig,
    seed: StreamSeed,
) -> Result<EvaluationDataset, ApinnError> {
    let n = cfg.trajectories * cfg.levels.len();
    let mut out = EvaluationDataset {
        rows: Vec::with_capacity(n * cfg.horizon()),
        revenues: Vec::with_capacity(n),
        fallbacks: 0,
    };
    for (li, &level) in cfg.levels.iter().enumerate() {
        for m in 0..cfg.trajectories {
            let id = out.revenues.len();
            let (rows, revenue, fallbacks) = simulate_one(policy, cfg, trajectory_seed(seed, li, m), level, id)?;
            out.rows.extend(rows);
            out.revenues.push(revenue);
            out.fallbacks += fallbacks;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMetric {
    Msle,
    Mse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    pub metric: LossMetric,
    pub training_loss: f64,
    /// Early-stopping loss for the network; held-out loss for linear models.
    pub validation_loss: f64,
    /// Loss on the held-out partition that was never fitted.
    pub test_loss: f64,
    pub train_rows: usize,
    pub test_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub model: ValueModel,
    pub report: FitReport,
}

/// Splits the rows into fitting and held-out partitions and trains the
/// requested architecture on the fitting part.
pub fn fit_value_function<R: Rng + ?Sized>(
    rows: &[EvaluationRow],
    architecture: Architecture,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<FittedModel, ApinnError> {
    if rows.is_empty() {
        return Err(ApinnError::EmptyDataset);
    }
    cfg.validate()?;
    let mut samples: Vec<TrainingSample> = rows.iter().map(EvaluationRow::sample).collect();
    samples.shuffle(rng);
    let n_train = (libm::round(samples.len() as f64 * cfg.train_fraction) as usize).clamp(1, samples.len());
    let (train, test) = samples.split_at(n_train);

    let (model, metric, training_loss, validation_loss) = match architecture {
        Architecture::Ols => {
            let m = ValueModel::Ols(fit_ols(train)?);
            let tr = mse(train.iter().map(|s| (m.predict(&s.features), s.label)));
            let te = mse(test.iter().map(|s| (m.predict(&s.features), s.label)));
            (m, LossMetric::Mse, tr, te)
        }
        Architecture::Svr => {
            let m = ValueModel::Svr(fit_linear_svr(train, &cfg.svr)?.model);
            let tr = mse(train.iter().map(|s| (m.predict(&s.features), s.label)));
            let te = mse(test.iter().map(|s| (m.predict(&s.features), s.label)));
            (m, LossMetric::Mse, tr, te)
        }
        Architecture::Nn => {
            let fit = nn_train(train, cfg, rng)?;
            let r = fit.report;
            (ValueModel::Nn(fit.model), LossMetric::Msle, r.train_loss, r.validation_loss)
        }
    };
    let test_loss = match (&model, metric) {
        (ValueModel::Nn(nn), _) => msle(test.iter().map(|s| (nn.raw(&s.features), nn.shift.transform(s.label)))),
        _ => validation_loss,
    };
    Ok(FittedModel {
        model,
        report: FitReport {
            metric,
            training_loss,
            validation_loss,
            test_loss,
            train_rows: train.len(),
            test_rows: test.len(),
        },
    })
}

/// Builds a table over sampled states `(t, level, W_t)` using greedy
/// decisions under `model`.
pub fn improve_policy(model: &ValueModel, cfg: &ApinnConfig, seed: StreamSeed) -> Result<PolicyTable, ApinnError> {
    let horizon = cfg.horizon();
    let mut table = PolicyTable { model: Some(model.clone()), ..PolicyTable::default() };
    for (li, &level) in cfg.levels.iter().enumerate() {
        for k in 0..cfg.improvement_samples {
            let traj = sample_trajectory(&cfg.process, &mut trajectory_seed(seed, li, k).rng());
            for (i, w) in traj.iter().enumerate() {
                let state = StageState::new(i + 1, level, *w);
                let key = StateKey::of(&state);
                if table.get(&key).is_none() {
                    let d = greedy_decision(model, &state, &cfg.battery, horizon);
                    table.insert(key, d, &cfg.battery, horizon)?;
                }
            }
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundDiagnostics {
    pub round: usize,
    pub dataset_size: usize,
    pub training_loss: f64,
    pub validation_loss: f64,
    pub test_loss: f64,
    /// Mean revenue of the policy evaluated in this round (`pi^{round-1}`).
    pub mean_revenue: f64,
    pub fallbacks: usize,
    pub table_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApinnRun {
    pub policy: PolicyTable,
    pub rounds: Vec<RoundDiagnostics>,
    /// Mean revenue of the final policy on the first round's trajectories.
    pub final_mean_revenue: f64,
}

pub fn run_apinn(cfg: &ApinnConfig) -> Result<ApinnRun, ApinnError> {
    cfg.validate()?;
    let root = StreamSeed::new(cfg.seed);
    let eval_seed = |n: usize| root.derive("evaluate").index(n as u64);
    let mut policy = PolicyTable::naive();
    let mut rounds = Vec::with_capacity(cfg.rounds);

    for n in 1..=cfg.rounds {
        let data = evaluate_policy(&policy, cfg, eval_seed(n))?;
        let fitted = fit_value_function(
            &data.rows,
            cfg.architecture,
            &cfg.train,
            &mut root.derive("fit").index(n as u64).rng(),
        )?;
        let mut next = improve_policy(&fitted.model, cfg, root.derive("improve").index(n as u64))?;
        next.generation = n;
        rounds.push(RoundDiagnostics {
            round: n,
            dataset_size: data.rows.len(),
            training_loss: fitted.report.training_loss,
            validation_loss: fitted.report.validation_loss,
            test_loss: fitted.report.test_loss,
            mean_revenue: data.mean_revenue(),
            fallbacks: data.fallbacks,
            table_size: next.len(),
        });
        policy = next;
    }
    let final_mean_revenue = evaluate_policy(&policy, cfg, eval_seed(1))?.mean_revenue();
    Ok(ApinnRun { policy, rounds, final_mean_revenue })
}
