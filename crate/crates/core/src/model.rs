//! Aggregate decision model.
//!
//! A period's decision is fully determined by the post-decision battery level
//! `x^r_t`: the flow balance `x^b - x^r - x^s = D - E - x^r_{t-1}` then fixes
//! the net grid trade. Energy quantities are integers, money is `f64`.

use alloc::vec::Vec;
use core::fmt;
use core::ops::RangeInclusive;

use thiserror::Error;

use crate::stochastic::ExogenousState;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("prior storage {prior} outside [0, {capacity}]")]
    PriorOutOfRange { prior: i64, capacity: i64 },
    #[error("storage level {store} not reachable from {prior} (feasible {lo}..={hi})")]
    InfeasibleStore { store: i64, prior: i64, lo: i64, hi: i64 },
    #[error("invalid battery parameters: {0}")]
    BadParams(&'static str),
}

/// Battery efficiency scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    /// `eta^I = eta^W = 0.05`
    High,
    /// `eta^I = eta^W = 0.3`
    Low,
}

impl Scenario {
    pub fn loss_rate(self) -> f64 {
        match self {
            Scenario::High => 0.05,
            Scenario::Low => 0.3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::High => "high",
            Scenario::Low => "low",
        }
    }

    pub fn parse(s: &str) -> Option<Scenario> {
        match s {
            "high" => Some(Scenario::High),
            "low" => Some(Scenario::Low),
            _ => None,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryParams {
    /// `R^M`
    pub capacity: i64,
    /// `gamma^I`, units per period.
    pub max_inject: i64,
    /// `gamma^W`, units per period.
    pub max_withdraw: i64,
    /// `c^h`, money per stored unit per period.
    pub hold_cost: f64,
    /// `eta^I`
    pub inject_loss: f64,
    /// `eta^W`
    pub withdraw_loss: f64,
}

impl BatteryParams {
    /// `R^M = 30`, `gamma^I = 6`, `gamma^W = 3`, `c^h = 0.0005`.
    pub fn standard(scenario: Scenario) -> Self {
        BatteryParams {
            capacity: 30,
            max_inject: 6,
            max_withdraw: 3,
            hold_cost: 0.0005,
            inject_loss: scenario.loss_rate(),
            withdraw_loss: scenario.loss_rate(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.capacity <= 0 {
            return Err(ModelError::BadParams("capacity must be positive"));
        }
        if self.max_inject <= 0 || self.max_withdraw <= 0 {
            return Err(ModelError::BadParams("injection and withdrawal rates must be positive"));
        }
        if self.max_inject > self.capacity || self.max_withdraw > self.capacity {
            return Err(ModelError::BadParams("rates cannot exceed capacity"));
        }
        if !(self.hold_cost >= 0.0 && self.hold_cost.is_finite()) {
            return Err(ModelError::BadParams("holding cost must be finite and nonnegative"));
        }
        for eta in [self.inject_loss, self.withdraw_loss] {
            if !(0.0..=1.0).contains(&eta) {
                return Err(ModelError::BadParams("loss rates must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// `(x^s, x^b, x^r)`: sold, bought, and the post-decision battery level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Decision {
    pub sell: i64,
    pub buy: i64,
    pub store: i64,
}

impl Decision {
    pub const fn new(sell: i64, buy: i64, store: i64) -> Self {
        Decision { sell, buy, store }
    }
}

/// Pre-decision state of period `t` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageState {
    pub t: usize,
    /// `x^r_{t-1}`
    pub prior: i64,
    pub w: ExogenousState,
}

impl StageState {
    pub const fn new(t: usize, prior: i64, w: ExogenousState) -> Self {
        StageState { t, prior, w }
    }
}

/// Post-decision levels reachable from `prior`. The last period may withdraw
/// but never inject.
pub fn feasible_storage_range(
    prior: i64,
    params: &BatteryParams,
    is_terminal: bool,
) -> Result<RangeInclusive<i64>, ModelError> {
    if prior < 0 || prior > params.capacity {
        return Err(ModelError::PriorOutOfRange { prior, capacity: params.capacity });
    }
    let lo = (prior - params.max_withdraw).max(0);
    let hi = if is_terminal { prior } else { (prior + params.max_inject).min(params.capacity) };
    Ok(lo..=hi)
}

/// Derives the grid trade for a chosen storage level: whatever the battery
/// move leaves over is sold, whatever is missing is bought.
pub fn compute_decisions(
    w: &ExogenousState,
    store: i64,
    prior: i64,
    t: usize,
    horizon: usize,
    params: &BatteryParams,
) -> Result<Decision, ModelError> {
    let range = feasible_storage_range(prior, params, t >= horizon)?;
    if !range.contains(&store) {
        return Err(ModelError::InfeasibleStore { store, prior, lo: *range.start(), hi: *range.end() });
    }
    Ok(net_trade(w, store, prior))
}

#[inline]
pub(crate) fn net_trade(w: &ExogenousState, store: i64, prior: i64) -> Decision {
    let surplus = w.energy - w.demand + prior - store;
    if surplus >= 0 {
        Decision::new(surplus, 0, store)
    } else {
        Decision::new(0, -surplus, store)
    }
}

/// `P x^s - C x^b - c^h x^r - C (eta^I (x^r - prior)^+ + eta^W (x^r - prior)^-)`.
///
/// Conversion losses are always valued at the buying price.
pub fn stage_profit(d: &Decision, prior: i64, w: &ExogenousState, params: &BatteryParams) -> f64 {
    let delta = d.store - prior;
    let valuation = w.buy_price as f64;
    let loss = if delta > 0 {
        valuation * params.inject_loss * delta as f64
    } else {
        valuation * params.withdraw_loss * (-delta) as f64
    };
    w.sell_price as f64 * d.sell as f64 - w.buy_price as f64 * d.buy as f64 - params.hold_cost * d.store as f64 - loss
}

/// Sell all production, buy all demand, keep the battery untouched; in the
/// last period withdraw as much as the rate allows and sell it.
pub fn naive_policy(state: &StageState, params: &BatteryParams, horizon: usize) -> Decision {
    let w = &state.w;
    if state.t < horizon {
        Decision::new(w.energy, w.demand, state.prior)
    } else {
        let out = params.max_withdraw.min(state.prior).max(0);
        Decision::new(w.energy + out, w.demand, state.prior - out)
    }
}

/// Whether a decision may buy and sell in the same period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Netting {
    /// Buy-xor-sell is enforced (optimal and derived decisions).
    Required,
    /// Gross trading is allowed (the naive policy).
    Allowed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    /// `x^b - x^r - x^s` differs from `D - E - x^r_{t-1}`.
    FlowBalance {
        lhs: i64,
        rhs: i64,
    },
    InjectRate {
        delta: i64,
        limit: i64,
    },
    WithdrawRate {
        delta: i64,
        limit: i64,
    },
    Capacity {
        store: i64,
        capacity: i64,
    },
    Negative,
    BuyAndSell,
    TerminalInjection,
    PriorOutOfRange,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::FlowBalance { lhs, rhs } => write!(f, "flow balance {lhs} != {rhs}"),
            Violation::InjectRate { delta, limit } => write!(f, "injection {delta} > {limit}"),
            Violation::WithdrawRate { delta, limit } => write!(f, "withdrawal {delta} > {limit}"),
            Violation::Capacity { store, capacity } => write!(f, "storage {store} outside [0, {capacity}]"),
            Violation::Negative => f.write_str("negative trade"),
            Violation::BuyAndSell => f.write_str("buys and sells in the same period"),
            Violation::TerminalInjection => f.write_str("injects in the last period"),
            Violation::PriorOutOfRange => f.write_str("prior storage out of range"),
        }
    }
}

/// Lists every violated constraint; `Ok` when there are none.
pub fn validate_decision(
    d: &Decision,
    state: &StageState,
    params: &BatteryParams,
    horizon: usize,
    netting: Netting,
) -> Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    let w = &state.w;
    if state.prior < 0 || state.prior > params.capacity {
        v.push(Violation::PriorOutOfRange);
    }
    let lhs = d.buy - d.store - d.sell;
    let rhs = w.demand - w.energy - state.prior;
    if lhs != rhs {
        v.push(Violation::FlowBalance { lhs, rhs });
    }
    let delta = d.store - state.prior;
    if delta > params.max_inject {
        v.push(Violation::InjectRate { delta, limit: params.max_inject });
    }
    if -delta > params.max_withdraw {
        v.push(Violation::WithdrawRate { delta: -delta, limit: params.max_withdraw });
    }
    if d.store < 0 || d.store > params.capacity {
        v.push(Violation::Capacity { store: d.store, capacity: params.capacity });
    }
    if d.sell < 0 || d.buy < 0 {
        v.push(Violation::Negative);
    }
    if netting == Netting::Required && d.sell > 0 && d.buy > 0 {
        v.push(Violation::BuyAndSell);
    }
    if state.t >= horizon && delta > 0 {
        v.push(Violation::TerminalInjection);
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

/// The nine mutually exclusive decision types of the integer program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionLabel {
    BuyInject,
    SellInject,
    Inject,
    BuyWithdraw,
    SellWithdraw,
    Withdraw,
    Buy,
    Sell,
    DoNothing,
}

impl ActionLabel {
    pub const ALL: [ActionLabel; 9] = [
        ActionLabel::BuyInject,
        ActionLabel::SellInject,
        ActionLabel::Inject,
        ActionLabel::BuyWithdraw,
        ActionLabel::SellWithdraw,
        ActionLabel::Withdraw,
        ActionLabel::Buy,
        ActionLabel::Sell,
        ActionLabel::DoNothing,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_inject(self) -> bool {
        matches!(self, ActionLabel::BuyInject | ActionLabel::SellInject | ActionLabel::Inject)
    }

    pub fn is_withdraw(self) -> bool {
        matches!(self, ActionLabel::BuyWithdraw | ActionLabel::SellWithdraw | ActionLabel::Withdraw)
    }

    pub fn buys(self) -> bool {
        matches!(self, ActionLabel::BuyInject | ActionLabel::BuyWithdraw | ActionLabel::Buy)
    }

    pub fn sells(self) -> bool {
        matches!(self, ActionLabel::SellInject | ActionLabel::SellWithdraw | ActionLabel::Sell)
    }

    /// `None` when the decision both buys and sells.
    pub fn classify(d: &Decision, prior: i64) -> Option<ActionLabel> {
        use ActionLabel::*;
        let delta = d.store - prior;
        let trade = match (d.buy > 0, d.sell > 0) {
            (true, true) => return None,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 0,
        };
        Some(match (delta.signum(), trade) {
            (1, 1) => BuyInject,
            (1, 2) => SellInject,
            (1, _) => Inject,
            (-1, 1) => BuyWithdraw,
            (-1, 2) => SellWithdraw,
            (-1, _) => Withdraw,
            (_, 1) => Buy,
            (_, 2) => Sell,
            _ => DoNothing,
        })
    }

    pub fn name(self) -> &'static str {
        use ActionLabel::*;
        match self {
            BuyInject => "buy-inject",
            SellInject => "sell-inject",
            Inject => "inject",
            BuyWithdraw => "buy-withdraw",
            SellWithdraw => "sell-withdraw",
            Withdraw => "withdraw",
            Buy => "buy",
            Sell => "sell",
            DoNothing => "do-nothing",
        }
    }
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(eta: f64) -> BatteryParams {
        BatteryParams { inject_loss: eta, withdraw_loss: eta, ..BatteryParams::standard(Scenario::High) }
    }

    #[test]
    fn storage_ranges() {
        let p = params(0.05);
        assert_eq!(feasible_storage_range(0, &p, false).unwrap(), 0..=6);
        assert_eq!(feasible_storage_range(30, &p, false).unwrap(), 27..=30);
        assert_eq!(feasible_storage_range(2, &p, true).unwrap(), 0..=2);
        assert!(matches!(feasible_storage_range(31, &p, false), Err(ModelError::PriorOutOfRange { .. })));
        assert!(feasible_storage_range(-1, &p, false).is_err());
    }

    #[test]
    fn decision_branches() {
        let p = params(0.05);
        let d = compute_decisions(&ExogenousState::new(5, 2, 13, 12), 4, 3, 1, 10, &p).unwrap();
        assert_eq!(d, Decision::new(2, 0, 4));
        let d = compute_decisions(&ExogenousState::new(1, 5, 13, 12), 2, 0, 1, 10, &p).unwrap();
        assert_eq!(d, Decision::new(0, 6, 2));
        let d = compute_decisions(&ExogenousState::new(3, 3, 13, 12), 7, 7, 1, 10, &p).unwrap();
        assert_eq!(d, Decision::new(0, 0, 7));
        // withdrawing covers a deficit
        let d = compute_decisions(&ExogenousState::new(1, 3, 13, 12), 4, 7, 1, 10, &p).unwrap();
        assert_eq!(d, Decision::new(1, 0, 4));
    }

    #[test]
    fn decisions_reject_infeasible_levels() {
        let p = params(0.05);
        let w = ExogenousState::new(3, 3, 13, 12);
        assert!(matches!(compute_decisions(&w, 7, 0, 1, 10, &p), Err(ModelError::InfeasibleStore { .. })));
        // terminal period: no injection
        assert!(compute_decisions(&w, 3, 2, 10, 10, &p).is_err());
        assert!(compute_decisions(&w, 1, 2, 10, 10, &p).is_ok());
    }

    #[test]
    fn profit_examples() {
        let w = ExogenousState::new(0, 0, 13, 12);
        assert_eq!(stage_profit(&Decision::new(0, 0, 0), 0, &w, &params(0.05)), 0.0);
        let got = stage_profit(&Decision::new(2, 0, 4), 3, &w, &params(0.05));
        assert!((got - 23.348).abs() < 1e-12, "{got}");
        let w = ExogenousState::new(0, 0, 4, 2);
        let got = stage_profit(&Decision::new(0, 6, 2), 0, &w, &params(0.3));
        assert!((got + 26.401).abs() < 1e-12, "{got}");
    }

    #[test]
    fn naive_examples() {
        let p = params(0.05);
        let w = ExogenousState::new(4, 2, 13, 12);
        assert_eq!(naive_policy(&StageState::new(3, 5, w), &p, 10), Decision::new(4, 2, 5));
        assert_eq!(naive_policy(&StageState::new(10, 5, w), &p, 10), Decision::new(7, 2, 2));
        assert_eq!(naive_policy(&StageState::new(10, 0, w), &p, 10), Decision::new(4, 2, 0));
        assert_eq!(naive_policy(&StageState::new(10, 2, w), &p, 10), Decision::new(6, 2, 0));
    }

    #[test]
    fn validation_flags_each_constraint() {
        let p = params(0.05);
        let w = ExogenousState::new(3, 3, 13, 12);
        let s = StageState::new(1, 0, w);
        let too_fast = Decision::new(0, 7, 7);
        let errs = validate_decision(&too_fast, &s, &p, 10, Netting::Required).unwrap_err();
        assert_eq!(errs, [Violation::InjectRate { delta: 7, limit: 6 }]);

        let both = Decision::new(2, 2, 0);
        let errs = validate_decision(&both, &s, &p, 10, Netting::Required).unwrap_err();
        assert_eq!(errs, [Violation::BuyAndSell]);
        assert!(validate_decision(&both, &s, &p, 10, Netting::Allowed).is_ok());

        let unbalanced = Decision::new(1, 0, 0);
        let errs = validate_decision(&unbalanced, &s, &p, 10, Netting::Required).unwrap_err();
        assert_eq!(errs, [Violation::FlowBalance { lhs: -1, rhs: 0 }]);

        let last = StageState::new(10, 0, w);
        let errs = validate_decision(&Decision::new(0, 1, 1), &last, &p, 10, Netting::Required).unwrap_err();
        assert_eq!(errs, [Violation::TerminalInjection]);
    }

    #[test]
    fn labels_follow_signs() {
        use ActionLabel::*;
        assert_eq!(ActionLabel::classify(&Decision::new(0, 2, 3), 1), Some(BuyInject));
        assert_eq!(ActionLabel::classify(&Decision::new(2, 0, 0), 1), Some(SellWithdraw));
        assert_eq!(ActionLabel::classify(&Decision::new(0, 0, 1), 1), Some(DoNothing));
        assert_eq!(ActionLabel::classify(&Decision::new(0, 0, 0), 1), Some(Withdraw));
        assert_eq!(ActionLabel::classify(&Decision::new(1, 1, 1), 1), None);
    }
}
