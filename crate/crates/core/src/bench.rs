//! Benchmark classes and the percent-of-optimal metric.

use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::apinn::{apply_policy, PolicyMode, PolicyTable};
use crate::model::{BatteryParams, Scenario};
use crate::oracle::{solve_deterministic, DeterministicInstance, OracleError};
use crate::regress::Architecture;
use crate::rng::StreamSeed;
use crate::stochastic::{
    sample_trajectory, DiscretizedGaussian, ExogenousState, NoiseDist, ProcessConfig, ProcessError,
};

/// Slack allowed on `policy / oracle <= 1` for floating-point summation.
pub const HINDSIGHT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchError {
    #[error("no instances to evaluate")]
    NoInstances,
    #[error("instance {instance}: policy revenue {policy} exceeds hindsight optimum {oracle}")]
    HindsightViolation { instance: usize, policy: f64, oracle: f64 },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Process(#[from] ProcessError),
}

/// One of the thirteen benchmark classes `S1..S13`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassId(u8);

impl ClassId {
    pub fn new(n: u8) -> Option<Self> {
        (1..=13).contains(&n).then_some(ClassId(n))
    }

    pub fn all() -> impl Iterator<Item = ClassId> {
        (1..=13).map(ClassId)
    }

    pub fn number(self) -> u8 {
        self.0
    }

    pub fn parse(s: &str) -> Option<Self> {
        let digits = s.strip_prefix('S').or_else(|| s.strip_prefix('s'))?;
        ClassId::new(digits.parse().ok()?)
    }

    /// Energy increments, price process and price noise scale.
    pub fn spec(self) -> DataClassSpec {
        // (energy sigma or None for uniform {0, ±1}, jumps, price sigma)
        let (energy, jumps, price_sigma) = match self.0 {
            1 => (None, true, 0.5),
            2 => (None, true, 1.0),
            3 => (None, true, 2.5),
            4 => (None, true, 5.0),
            5 => (Some(0.5), true, 5.0),
            6 => (Some(1.0), true, 5.0),
            7 => (Some(1.5), true, 5.0),
            8 => (Some(2.0), true, 5.0),
            9 => (Some(0.5), true, 1.0),
            10 => (Some(1.0), true, 1.0),
            11 => (Some(1.5), true, 1.0),
            12 => (Some(0.5), false, 1.0),
            13 => (Some(1.0), false, 1.0),
            _ => unreachable!("class ids are 1..=13"),
        };
        let energy_noise = match energy {
            None => NoiseDist::Uniform { half_width: 1 },
            Some(sigma) => NoiseDist::Pseudonormal(DiscretizedGaussian::new(sigma, 5).expect("table sigmas are valid")),
        };
        DataClassSpec { id: self, energy_noise, jumps, price_sigma }
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataClassSpec {
    pub id: ClassId,
    pub energy_noise: NoiseDist,
    /// Markov chain with jumps when set, plain Markov chain otherwise.
    pub jumps: bool,
    pub price_sigma: f64,
}

impl DataClassSpec {
    pub fn process_config(&self, horizon: usize) -> Result<ProcessConfig, ProcessError> {
        ProcessConfig::standard(horizon, self.energy_noise, self.price_sigma, self.jumps)
    }
}

pub fn instance_seed(seed: StreamSeed, class: ClassId, i: usize) -> StreamSeed {
    seed.derive("instances").index(u64::from(class.number())).index(i as u64)
}

/// `n` trajectories of the class, deterministic in `seed`.
pub fn generate_instances(
    process: &ProcessConfig,
    class: ClassId,
    n: usize,
    seed: StreamSeed,
) -> Vec<Vec<ExogenousState>> {
    (0..n).map(|i| sample_trajectory(process, &mut instance_seed(seed, class, i).rng())).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceResult {
    pub instance: usize,
    pub policy_revenue: f64,
    pub oracle_revenue: f64,
    /// `None` when the hindsight optimum is not positive.
    pub pct_optimal: Option<f64>,
}

/// `100 * policy / oracle`, undefined for a nonpositive oracle.
pub fn pct_optimal(policy: f64, oracle: f64) -> Option<f64> {
    (oracle > 0.0).then(|| 100.0 * policy / oracle)
}

/// Applies `policy` from an empty battery and compares it with the hindsight
/// optimum of the same trajectory.
pub fn evaluate_instance(
    policy: &PolicyTable,
    mode: PolicyMode,
    instance: usize,
    trajectory: &[ExogenousState],
    params: &BatteryParams,
) -> Result<InstanceResult, BenchError> {
    let inst = DeterministicInstance::new(trajectory.to_vec(), *params, 0)?;
    let oracle = solve_deterministic(&inst)?.revenue;
    let rollout = apply_policy(policy, trajectory, 0, params, mode);
    check_result(InstanceResult {
        instance,
        policy_revenue: rollout.revenue,
        oracle_revenue: oracle,
        pct_optimal: pct_optimal(rollout.revenue, oracle),
    })
}

/// Enforces the hindsight bound on a result.
pub fn check_result(r: InstanceResult) -> Result<InstanceResult, BenchError> {
    let slack = HINDSIGHT_TOLERANCE * r.oracle_revenue.abs().max(1.0) / 100.0;
    let pct_ok = r.pct_optimal.is_none_or(|p| p <= 100.0 + HINDSIGHT_TOLERANCE);
    if r.policy_revenue > r.oracle_revenue + slack || !pct_ok {
        return Err(BenchError::HindsightViolation {
            instance: r.instance,
            policy: r.policy_revenue,
            oracle: r.oracle_revenue,
        });
    }
    Ok(r)
}

pub fn evaluate_policy_on_class(
    policy: &PolicyTable,
    mode: PolicyMode,
    instances: &[Vec<ExogenousState>],
    params: &BatteryParams,
) -> Result<Vec<InstanceResult>, BenchError> {
    if instances.is_empty() {
        return Err(BenchError::NoInstances);
    }
    instances.iter().enumerate().map(|(i, traj)| evaluate_instance(policy, mode, i, traj, params)).collect()
}

/// What produced a set of results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Approach {
    Naive,
    Learned(Architecture),
}

impl Approach {
    pub fn name(self) -> &'static str {
        match self {
            Approach::Naive => "naive",
            Approach::Learned(a) => a.name(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        if s == "naive" {
            Some(Approach::Naive)
        } else {
            Architecture::parse(s).map(Approach::Learned)
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub n_included: usize,
    pub n_excluded: usize,
    /// NaN when no instance has a positive optimum.
    pub mean_pct_optimal: f64,
    /// Share of included instances strictly above the threshold.
    pub prop_above: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassSummary {
    pub class: ClassId,
    pub scenario: Scenario,
    pub approach: Approach,
    pub stats: SummaryStats,
}

pub fn summarize(results: &[InstanceResult], threshold: f64) -> SummaryStats {
    let included: Vec<f64> = results.iter().filter_map(|r| r.pct_optimal).collect();
    let n = included.len();
    let (mean, prop) = if n == 0 {
        (f64::NAN, f64::NAN)
    } else {
        let mean = included.iter().sum::<f64>() / n as f64;
        let above = included.iter().filter(|&&p| p > threshold).count();
        (mean, above as f64 / n as f64)
    };
    SummaryStats { n_included: n, n_excluded: results.len() - n, mean_pct_optimal: mean, prop_above: prop }
}
