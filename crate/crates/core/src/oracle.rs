//! Exact optima used as ground truth.
//!
//! [`solve_deterministic`] is the hindsight optimum over a known trajectory:
//! a backward recursion over `(t, battery level)`. Because the buy and sell
//! amounts follow from the storage level, this is the same problem as the
//! lot-sizing integer program with losses and bounded rates;
//! [`check_ip_feasibility`] translates a solution into that program's
//! variables and verifies every constraint. [`brute_force_deterministic`]
//! enumerates storage paths and exists purely as a cross-check.
//!
//! [`solve_exact_mdp`] runs the finite-horizon stochastic recursion on small
//! enumerated Markov models of the exogenous state.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::model::{
    feasible_storage_range, net_trade, stage_profit, ActionLabel, BatteryParams, Decision, ModelError, Netting,
    StageState,
};
use crate::stochastic::ExogenousState;

/// Largest search space the brute-force and exact-MDP solvers accept.
pub const ENUMERATION_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("initial storage {0} outside battery range")]
    InitialStorage(i64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("instance too large to enumerate: {size} > {limit}")]
    TooLarge { size: u64, limit: u64 },
    #[error("malformed transition model: {0}")]
    BadTransitions(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicInstance {
    pub trajectory: Vec<ExogenousState>,
    pub params: BatteryParams,
    pub initial_storage: i64,
}

impl DeterministicInstance {
    pub fn new(
        trajectory: Vec<ExogenousState>,
        params: BatteryParams,
        initial_storage: i64,
    ) -> Result<Self, OracleError> {
        let inst = DeterministicInstance { trajectory, params, initial_storage };
        inst.validate()?;
        Ok(inst)
    }

    pub fn horizon(&self) -> usize {
        self.trajectory.len()
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if self.trajectory.is_empty() {
            return Err(OracleError::EmptyTrajectory);
        }
        self.params.validate()?;
        if self.initial_storage < 0 || self.initial_storage > self.params.capacity {
            return Err(OracleError::InitialStorage(self.initial_storage));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub revenue: f64,
    pub decisions: Vec<Decision>,
    pub labels: Vec<ActionLabel>,
}

impl OracleSolution {
    fn from_path(inst: &DeterministicInstance, path: &[i64]) -> Self {
        let mut prior = inst.initial_storage;
        let mut revenue = 0.0;
        let mut decisions = Vec::with_capacity(path.len());
        let mut labels = Vec::with_capacity(path.len());
        for (w, &store) in inst.trajectory.iter().zip(path) {
            let d = net_trade(w, store, prior);
            revenue += stage_profit(&d, prior, w, &inst.params);
            labels.push(ActionLabel::classify(&d, prior).expect("net trades never buy and sell"));
            decisions.push(d);
            prior = store;
        }
        OracleSolution { revenue, decisions, labels }
    }
}

#[inline]
fn transition_profit(w: &ExogenousState, prior: i64, store: i64, params: &BatteryParams) -> f64 {
    stage_profit(&net_trade(w, store, prior), prior, w, params)
}

/// Hindsight optimum by backward recursion. Ties go to the smallest storage
/// level.
pub fn solve_deterministic(inst: &DeterministicInstance) -> Result<OracleSolution, OracleError> {
    inst.validate()?;
    let horizon = inst.horizon();
    let levels = (inst.params.capacity + 1) as usize;
    // value[t * levels + r]: best profit from period t+1 (0-based t) onward with prior r
    let mut value = vec![0.0f64; (horizon + 1) * levels];
    let mut choice = vec![0i64; horizon * levels];

    for t in (0..horizon).rev() {
        let w = &inst.trajectory[t];
        let terminal = t + 1 == horizon;
        for r in 0..levels {
            let prior = r as i64;
            let mut best = f64::NEG_INFINITY;
            let mut arg = prior;
            for store in feasible_storage_range(prior, &inst.params, terminal)? {
                let v = transition_profit(w, prior, store, &inst.params) + value[(t + 1) * levels + store as usize];
                if v > best {
                    best = v;
                    arg = store;
                }
            }
            value[t * levels + r] = best;
            choice[t * levels + r] = arg;
        }
    }

    let mut path = Vec::with_capacity(horizon);
    let mut prior = inst.initial_storage;
    for t in 0..horizon {
        let store = choice[t * levels + prior as usize];
        path.push(store);
        prior = store;
    }
    let mut sol = OracleSolution::from_path(inst, &path);
    // report the recursion's own value; the forward re-summation can differ
    // in the last bits
    sol.revenue = value[inst.initial_storage as usize];
    Ok(sol)
}

/// Exhaustive enumeration of storage paths. Refuses instances with more than
/// [`ENUMERATION_LIMIT`] candidate paths.
pub fn brute_force_deterministic(inst: &DeterministicInstance) -> Result<OracleSolution, OracleError> {
    inst.validate()?;
    let levels = (inst.params.capacity + 1) as u64;
    let size = levels.saturating_pow(inst.horizon() as u32);
    if size > ENUMERATION_LIMIT {
        return Err(OracleError::TooLarge { size, limit: ENUMERATION_LIMIT });
    }

    struct Search<'a> {
        inst: &'a DeterministicInstance,
        path: Vec<i64>,
        best: f64,
        best_path: Vec<i64>,
    }

    impl Search<'_> {
        fn go(&mut self, t: usize, prior: i64, acc: f64) {
            let horizon = self.inst.horizon();
            if t == horizon {
                if acc > self.best {
                    self.best = acc;
                    self.best_path.clone_from(&self.path);
                }
                return;
            }
            let w = self.inst.trajectory[t];
            let terminal = t + 1 == horizon;
            let range = feasible_storage_range(prior, &self.inst.params, terminal).expect("levels stay in range");
            for store in range {
                let p = transition_profit(&w, prior, store, &self.inst.params);
                self.path.push(store);
                self.go(t + 1, store, acc + p);
                self.path.pop();
            }
        }
    }

    let mut search =
        Search { inst, path: Vec::with_capacity(inst.horizon()), best: f64::NEG_INFINITY, best_path: Vec::new() };
    search.go(0, inst.initial_storage, 0.0);
    Ok(OracleSolution::from_path(inst, &search.best_path))
}

/// Time-homogeneous Markov chain over an enumerated set of exogenous states.
#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousChain {
    pub states: Vec<ExogenousState>,
    /// Row-stochastic, `transition[i][j] = Pr(W_{t+1} = j | W_t = i)`.
    pub transition: Vec<Vec<f64>>,
}

impl ExogenousChain {
    pub fn validate(&self) -> Result<(), OracleError> {
        let n = self.states.len();
        if n == 0 {
            return Err(OracleError::BadTransitions("no states"));
        }
        if self.transition.len() != n {
            return Err(OracleError::BadTransitions("row count differs from state count"));
        }
        for row in &self.transition {
            if row.len() != n {
                return Err(OracleError::BadTransitions("transition matrix is not square"));
            }
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(OracleError::BadTransitions("negative or non-finite probability"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(OracleError::BadTransitions("row does not sum to one"));
            }
        }
        Ok(())
    }

    /// A chain that walks through `trajectory` deterministically, staying in
    /// the last state.
    pub fn deterministic(trajectory: &[ExogenousState]) -> Self {
        let n = trajectory.len();
        let transition = (0..n)
            .map(|i| {
                let mut row = vec![0.0; n];
                row[(i + 1).min(n - 1)] = 1.0;
                row
            })
            .collect();
        ExogenousChain { states: trajectory.to_vec(), transition }
    }
}

/// Value table `V_t(x^r_{t-1}, W_t)` with the greedy storage choice.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpSolution {
    pub horizon: usize,
    pub capacity: i64,
    pub n_states: usize,
    values: Vec<f64>,
    actions: Vec<i64>,
}

impl MdpSolution {
    #[inline]
    fn idx(&self, t: usize, prior: i64, w: usize) -> usize {
        ((t - 1) * (self.capacity as usize + 1) + prior as usize) * self.n_states + w
    }

    /// `t` is 1-based.
    pub fn value(&self, t: usize, prior: i64, w: usize) -> f64 {
        self.values[self.idx(t, prior, w)]
    }

    pub fn action(&self, t: usize, prior: i64, w: usize) -> i64 {
        self.actions[self.idx(t, prior, w)]
    }
}

fn continuation(sol_values: &[f64], chain: &ExogenousChain, next_base: Option<usize>, store: i64, w: usize) -> f64 {
    let Some(base) = next_base else { return 0.0 };
    let n = chain.states.len();
    let row = &chain.transition[w];
    let start = base + store as usize * n;
    row.iter().zip(&sol_values[start..start + n]).map(|(p, v)| p * v).sum()
}

/// Finite-horizon recursion
/// `V_t(r, w) = max_{r'} [g_t(r, r', w) + discount * E[V_{t+1}(r', W') | w]]`
/// with `V_{T+1} = 0` and no injection at `t = T`. Ties go to the smallest
/// storage level.
pub fn solve_exact_mdp(
    chain: &ExogenousChain,
    params: &BatteryParams,
    horizon: usize,
    discount: f64,
) -> Result<MdpSolution, OracleError> {
    chain.validate()?;
    params.validate()?;
    if horizon == 0 {
        return Err(OracleError::EmptyTrajectory);
    }
    let n = chain.states.len();
    let levels = params.capacity as usize + 1;
    let size = (n * levels * horizon) as u64;
    if size > ENUMERATION_LIMIT {
        return Err(OracleError::TooLarge { size, limit: ENUMERATION_LIMIT });
    }
    let mut sol = MdpSolution {
        horizon,
        capacity: params.capacity,
        n_states: n,
        values: vec![0.0; size as usize],
        actions: vec![0; size as usize],
    };
    let stage = levels * n;
    for t in (1..=horizon).rev() {
        let next_base = (t < horizon).then(|| t * stage);
        for prior in 0..levels as i64 {
            for (wi, w) in chain.states.iter().enumerate() {
                let mut best = f64::NEG_INFINITY;
                let mut arg = prior;
                for store in feasible_storage_range(prior, params, t == horizon)? {
                    let v = transition_profit(w, prior, store, params)
                        + discount * continuation(&sol.values, chain, next_base, store, wi);
                    if v > best {
                        best = v;
                        arg = store;
                    }
                }
                let i = sol.idx(t, prior, wi);
                sol.values[i] = best;
                sol.actions[i] = arg;
            }
        }
    }
    Ok(sol)
}

/// Largest absolute Bellman residual over all states of `sol`.
pub fn bellman_residual(sol: &MdpSolution, chain: &ExogenousChain, params: &BatteryParams, discount: f64) -> f64 {
    let n = chain.states.len();
    let stage = (params.capacity as usize + 1) * n;
    let mut worst: f64 = 0.0;
    for t in 1..=sol.horizon {
        let next_base = (t < sol.horizon).then(|| t * stage);
        for prior in 0..=params.capacity {
            for (wi, w) in chain.states.iter().enumerate() {
                let best = feasible_storage_range(prior, params, t == sol.horizon)
                    .expect("levels in range")
                    .map(|store| {
                        transition_profit(w, prior, store, params)
                            + discount * continuation(&sol.values, chain, next_base, store, wi)
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                worst = worst.max((best - sol.value(t, prior, wi)).abs());
            }
        }
    }
    worst
}

/// Constraint families of the lot-sizing integer program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpConstraint {
    /// Exactly one decision type per period.
    OneDecisionType,
    /// Injection only under an injecting type, at most `gamma^I`.
    InjectRateLink,
    /// Withdrawal only under a withdrawing type, at most `gamma^W`.
    WithdrawRateLink,
    /// `w^j <= M z^j`.
    BigMLink,
    /// Injection variables cover the storage increase.
    InjectCover,
    /// Withdrawal variables cover the storage decrease.
    WithdrawCover,
    Balance,
    Capacity,
    /// Binary / nonnegative integer domains.
    Domain,
    /// The recorded label disagrees with the decision's signs.
    LabelMismatch,
    /// The recorded revenue differs from the program's objective.
    Objective,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpViolation {
    /// 1-based period; 0 for whole-solution checks.
    pub period: usize,
    pub constraint: IpConstraint,
}

impl fmt::Display for IpViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "period {}: {:?}", self.period, self.constraint)
    }
}

/// One period of the program: type indicators `z`, per-type injected or
/// withdrawn amounts `w`, and the trade variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IpPeriod {
    pub z: [u8; 9],
    pub w: [i64; 9],
    pub buy: i64,
    pub sell: i64,
    pub store: i64,
    /// The label recorded by the solver, if any.
    pub label: Option<ActionLabel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpAssignment {
    pub periods: Vec<IpPeriod>,
    pub objective: f64,
}

impl IpAssignment {
    pub fn from_solution(sol: &OracleSolution, inst: &DeterministicInstance) -> Self {
        let mut prior = inst.initial_storage;
        let periods = sol
            .decisions
            .iter()
            .zip(sol.labels.iter().map(Some).chain(core::iter::repeat(None)))
            .map(|(d, label)| {
                let mut z = [0u8; 9];
                let mut w = [0i64; 9];
                if let Some(&l) = label {
                    z[l.index()] = 1;
                    w[l.index()] = (d.store - prior).abs() * i64::from(l.is_inject() || l.is_withdraw());
                }
                prior = d.store;
                IpPeriod { z, w, buy: d.buy, sell: d.sell, store: d.store, label: label.copied() }
            })
            .collect();
        IpAssignment { periods, objective: sol.revenue }
    }

    /// Checks every constraint of the program plus label and objective
    /// consistency.
    pub fn check(&self, inst: &DeterministicInstance) -> Result<(), Vec<IpViolation>> {
        let p = &inst.params;
        let big_m = p.capacity.max(p.max_inject).max(p.max_withdraw);
        let mut out = Vec::new();
        let mut push = |period, constraint| out.push(IpViolation { period, constraint });

        if self.periods.len() != inst.horizon() {
            push(0, IpConstraint::Balance);
        }
        let mut prior = inst.initial_storage;
        let mut objective = 0.0;
        for (i, (per, w)) in self.periods.iter().zip(&inst.trajectory).enumerate() {
            let t = i + 1;
            let delta = per.store - prior;
            let z_sum: u32 = per.z.iter().map(|&z| u32::from(z)).sum();
            if per.z.iter().any(|&z| z > 1)
                || per.w.iter().any(|&x| x < 0)
                || per.buy < 0
                || per.sell < 0
                || per.store < 0
            {
                push(t, IpConstraint::Domain);
            }
            if z_sum != 1 {
                push(t, IpConstraint::OneDecisionType);
            }
            let z_inject: i64 =
                ActionLabel::ALL.iter().filter(|l| l.is_inject()).map(|l| i64::from(per.z[l.index()])).sum();
            let z_withdraw: i64 =
                ActionLabel::ALL.iter().filter(|l| l.is_withdraw()).map(|l| i64::from(per.z[l.index()])).sum();
            if p.max_inject * z_inject < delta {
                push(t, IpConstraint::InjectRateLink);
            }
            if p.max_withdraw * z_withdraw < -delta {
                push(t, IpConstraint::WithdrawRateLink);
            }
            let mut w_inject = 0;
            let mut w_withdraw = 0;
            for l in ActionLabel::ALL {
                let amount = per.w[l.index()];
                if l.is_inject() || l.is_withdraw() {
                    if amount > big_m * i64::from(per.z[l.index()]) {
                        push(t, IpConstraint::BigMLink);
                    }
                    if l.is_inject() {
                        w_inject += amount;
                    } else {
                        w_withdraw += amount;
                    }
                } else if amount != 0 {
                    push(t, IpConstraint::Domain);
                }
            }
            if w_inject < delta {
                push(t, IpConstraint::InjectCover);
            }
            if w_withdraw < -delta {
                push(t, IpConstraint::WithdrawCover);
            }
            if per.buy - per.store - per.sell != w.demand - w.energy - prior {
                push(t, IpConstraint::Balance);
            }
            if t < inst.horizon() && per.store > p.capacity {
                push(t, IpConstraint::Capacity);
            }
            let d = Decision::new(per.sell, per.buy, per.store);
            if let Some(label) = per.label {
                if ActionLabel::classify(&d, prior) != Some(label) {
                    push(t, IpConstraint::LabelMismatch);
                }
            }
            let valuation = w.buy_price as f64;
            objective += w.sell_price as f64 * per.sell as f64
                - w.buy_price as f64 * per.buy as f64
                - p.hold_cost * per.store as f64
                - p.inject_loss * valuation * w_inject as f64
                - p.withdraw_loss * valuation * w_withdraw as f64;
            prior = per.store;
        }
        if (objective - self.objective).abs() > 1e-9 * (1.0 + objective.abs()) {
            push(0, IpConstraint::Objective);
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }
}

/// Translates a solution into integer-program variables and checks them.
pub fn check_ip_feasibility(sol: &OracleSolution, inst: &DeterministicInstance) -> Result<(), Vec<IpViolation>> {
    IpAssignment::from_solution(sol, inst).check(inst)
}

/// Feasibility of every decision in a solution under the aggregate model.
pub fn decisions_feasible(sol: &OracleSolution, inst: &DeterministicInstance) -> bool {
    let mut prior = inst.initial_storage;
    let horizon = inst.horizon();
    sol.decisions.iter().enumerate().all(|(i, d)| {
        let state = StageState::new(i + 1, prior, inst.trajectory[i]);
        prior = d.store;
        crate::model::validate_decision(d, &state, &inst.params, horizon, Netting::Required).is_ok()
    })
}
