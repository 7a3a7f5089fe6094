//! Exogenous information: seasonal demand, renewable output and the two
//! price processes.
//!
//! Every sampler takes an explicit random stream and is otherwise pure. The
//! deterministic step functions (`demand_from_noise`, `energy_step`,
//! `price_step`) are exposed separately so the transition formulas can be
//! checked without going through a random stream.

use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProcessError {
    #[error("noise scale must be finite and nonnegative, got {0}")]
    BadSigma(f64),
    #[error("support half-width must be nonnegative, got {0}")]
    BadSupport(i64),
    #[error("jump probability must lie in [0, 1], got {0}")]
    BadJumpProb(f64),
    #[error("{name} bounds are inverted: min {min} > max {max}")]
    InvertedBounds { name: &'static str, min: i64, max: i64 },
    #[error("{0}")]
    Invalid(&'static str),
}

/// Integer-valued, support-clamped Gaussian ("pseudonormal") noise.
///
/// The support is the contiguous symmetric range `-half_width..=half_width`.
/// A draw is `round(sigma * z)` with ties away from zero, clamped to the
/// nearest support endpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscretizedGaussian {
    sigma: f64,
    half_width: i64,
}

impl DiscretizedGaussian {
    pub fn new(sigma: f64, half_width: i64) -> Result<Self, ProcessError> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(ProcessError::BadSigma(sigma));
        }
        if half_width < 0 {
            return Err(ProcessError::BadSupport(half_width));
        }
        Ok(DiscretizedGaussian { sigma, half_width })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn half_width(&self) -> i64 {
        self.half_width
    }

    pub fn contains(&self, v: i64) -> bool {
        v.abs() <= self.half_width
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        if self.sigma == 0.0 {
            return 0;
        }
        let z: f64 = StandardNormal.sample(rng);
        let v = libm::round(self.sigma * z);
        let hw = self.half_width as f64;
        v.clamp(-hw, hw) as i64
    }
}

/// Increment distribution for a Markov chain level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseDist {
    Pseudonormal(DiscretizedGaussian),
    /// Uniform over `-half_width..=half_width`.
    Uniform {
        half_width: i64,
    },
}

impl NoiseDist {
    pub fn half_width(&self) -> i64 {
        match self {
            NoiseDist::Pseudonormal(g) => g.half_width(),
            NoiseDist::Uniform { half_width } => *half_width,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        match self {
            NoiseDist::Pseudonormal(g) => g.sample(rng),
            NoiseDist::Uniform { half_width } => rng.random_range(-*half_width..=*half_width),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriceProcessKind {
    MarkovChain,
    /// Adds `1{u <= jump_prob} * jump` to the increment, `u ~ U(0, 1)`.
    MarkovChainWithJumps {
        jump_prob: f64,
        jump: DiscretizedGaussian,
    },
}

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bounds {
    pub min: i64,
    pub max: i64,
}

impl Bounds {
    pub const fn new(min: i64, max: i64) -> Self {
        Bounds { min, max }
    }

    pub fn clamp(&self, v: i64) -> i64 {
        v.clamp(self.min, self.max)
    }

    pub fn contains(&self, v: i64) -> bool {
        self.min <= v && v <= self.max
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessConfig {
    pub demand: Bounds,
    pub energy: Bounds,
    pub buy_price: Bounds,
    pub sell_price: Bounds,
    pub demand_noise: DiscretizedGaussian,
    pub energy_noise: NoiseDist,
    pub price_noise: DiscretizedGaussian,
    pub price_kind: PriceProcessKind,
    pub horizon: usize,
}

/// Jump probability of the spiky price process.
pub const JUMP_PROB: f64 = 0.031;

impl ProcessConfig {
    /// Bounds and noise supports used throughout the experiments:
    /// demand in `[1, 15]` with `PN(0, 2^2)` on `{0, ±1, ±2}`, energy in
    /// `[1, 7]`, buying price in `[3, 13]`, selling price in `[2, 12]`, price
    /// increments on `{0, ±1, ..., ±8}` and jumps `PN(0, 50^2)` on
    /// `{0, ±1, ..., ±40}`.
    pub fn standard(
        horizon: usize,
        energy_noise: NoiseDist,
        price_sigma: f64,
        with_jumps: bool,
    ) -> Result<Self, ProcessError> {
        let price_kind = if with_jumps {
            PriceProcessKind::MarkovChainWithJumps { jump_prob: JUMP_PROB, jump: DiscretizedGaussian::new(50.0, 40)? }
        } else {
            PriceProcessKind::MarkovChain
        };
        let cfg = ProcessConfig {
            demand: Bounds::new(1, 15),
            energy: Bounds::new(1, 7),
            buy_price: Bounds::new(3, 13),
            sell_price: Bounds::new(2, 12),
            demand_noise: DiscretizedGaussian::new(2.0, 2)?,
            energy_noise,
            price_noise: DiscretizedGaussian::new(price_sigma, 8)?,
            price_kind,
            horizon,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ProcessError> {
        for (name, b) in [
            ("demand", self.demand),
            ("energy", self.energy),
            ("buying price", self.buy_price),
            ("selling price", self.sell_price),
        ] {
            if b.min > b.max {
                return Err(ProcessError::InvertedBounds { name, min: b.min, max: b.max });
            }
        }
        if self.demand.min < 0 || self.energy.min < 0 {
            return Err(ProcessError::Invalid("demand and energy must be nonnegative"));
        }
        if self.buy_price.min < self.sell_price.min || self.buy_price.max < self.sell_price.max {
            return Err(ProcessError::Invalid("buying price bounds must dominate selling price bounds"));
        }
        if self.horizon == 0 {
            return Err(ProcessError::Invalid("horizon must be positive"));
        }
        if self.energy_noise.half_width() < 0 {
            return Err(ProcessError::BadSupport(self.energy_noise.half_width()));
        }
        if let PriceProcessKind::MarkovChainWithJumps { jump_prob, .. } = self.price_kind {
            if !(0.0..=1.0).contains(&jump_prob) {
                return Err(ProcessError::BadJumpProb(jump_prob));
            }
        }
        Ok(())
    }
}

/// One period's realisation `(E, D, C, P)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExogenousState {
    pub energy: i64,
    pub demand: i64,
    pub buy_price: i64,
    pub sell_price: i64,
}

impl ExogenousState {
    pub const fn new(energy: i64, demand: i64, buy_price: i64, sell_price: i64) -> Self {
        ExogenousState { energy, demand, buy_price, sell_price }
    }

    /// `D - E`.
    pub fn net_demand(&self) -> i64 {
        self.demand - self.energy
    }

    pub fn within(&self, cfg: &ProcessConfig) -> bool {
        cfg.energy.contains(self.energy)
            && cfg.demand.contains(self.demand)
            && cfg.buy_price.contains(self.buy_price)
            && cfg.sell_price.contains(self.sell_price)
            && self.sell_price <= self.buy_price
    }
}

impl fmt::Display for ExogenousState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(E={}, D={}, C={}, P={})", self.energy, self.demand, self.buy_price, self.sell_price)
    }
}

/// `floor(3 - 4 sin(2 pi t / T))` for `t` in `1..=T`.
pub fn seasonal_demand_base(t: usize, horizon: usize) -> i64 {
    let phase = 2.0 * core::f64::consts::PI * t as f64 / horizon as f64;
    let raw = 3.0 - 4.0 * libm::sin(phase);
    // sin(k*pi) is off by ~1e-16 in floating point; snap before flooring so
    // the half and full periods land on the exact integer.
    libm::floor(raw + 1e-9) as i64
}

pub fn demand_from_noise(t: usize, horizon: usize, noise: i64, bounds: Bounds) -> i64 {
    bounds.clamp(seasonal_demand_base(t, horizon) + noise)
}

pub fn energy_step(prev: i64, noise: i64, bounds: Bounds) -> i64 {
    bounds.clamp(prev + noise)
}

/// `clamp(prev + noise + 1{jumped} * jump)`.
pub fn price_step(prev: i64, noise: i64, jumped: bool, jump: i64, bounds: Bounds) -> i64 {
    let spike = if jumped { jump } else { 0 };
    bounds.clamp(prev + noise + spike)
}

pub fn sample_discretized_gaussian<R: Rng + ?Sized>(dist: &DiscretizedGaussian, rng: &mut R) -> i64 {
    dist.sample(rng)
}

pub fn next_demand<R: Rng + ?Sized>(t: usize, cfg: &ProcessConfig, rng: &mut R) -> i64 {
    let noise = cfg.demand_noise.sample(rng);
    demand_from_noise(t, cfg.horizon, noise, cfg.demand)
}

pub fn next_energy<R: Rng + ?Sized>(prev: i64, cfg: &ProcessConfig, rng: &mut R) -> i64 {
    energy_step(prev, cfg.energy_noise.sample(rng), cfg.energy)
}

/// Result of one price transition, with the jump indicator exposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PriceStep {
    pub price: i64,
    pub jumped: bool,
}

pub fn next_price_traced<R: Rng + ?Sized>(
    prev: i64,
    bounds: Bounds,
    kind: &PriceProcessKind,
    noise: &DiscretizedGaussian,
    rng: &mut R,
) -> PriceStep {
    let eps = noise.sample(rng);
    match kind {
        PriceProcessKind::MarkovChain => PriceStep { price: price_step(prev, eps, false, 0, bounds), jumped: false },
        PriceProcessKind::MarkovChainWithJumps { jump_prob, jump } => {
            let u: f64 = rng.random();
            let jumped = u <= *jump_prob;
            let spike = if jumped { jump.sample(rng) } else { 0 };
            PriceStep { price: price_step(prev, eps, jumped, spike, bounds), jumped }
        }
    }
}

pub fn next_price<R: Rng + ?Sized>(
    prev: i64,
    bounds: Bounds,
    kind: &PriceProcessKind,
    noise: &DiscretizedGaussian,
    rng: &mut R,
) -> i64 {
    next_price_traced(prev, bounds, kind, noise, rng).price
}

/// Jump indicator counts over a sampled trajectory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct JumpTally {
    /// Price transitions drawn (two per period after the first).
    pub transitions: u64,
    pub jumps: u64,
}

impl JumpTally {
    pub fn merge(&mut self, other: JumpTally) {
        self.transitions += other.transitions;
        self.jumps += other.jumps;
    }
}

pub fn sample_trajectory<R: Rng + ?Sized>(cfg: &ProcessConfig, rng: &mut R) -> Vec<ExogenousState> {
    sample_trajectory_traced(cfg, rng).0
}

/// Samples `T` periods. `E_1`, `C_1`, `P_1` are uniform on their ranges and
/// `D_1` follows the seasonal formula. Every emitted selling price is capped
/// at the buying price of the same period and the chains continue from the
/// emitted values.
pub fn sample_trajectory_traced<R: Rng + ?Sized>(cfg: &ProcessConfig, rng: &mut R) -> (Vec<ExogenousState>, JumpTally) {
    let mut out = Vec::with_capacity(cfg.horizon);
    let mut tally = JumpTally::default();

    let energy = rng.random_range(cfg.energy.min..=cfg.energy.max);
    let buy = rng.random_range(cfg.buy_price.min..=cfg.buy_price.max);
    let sell = rng.random_range(cfg.sell_price.min..=cfg.sell_price.max);
    let demand = next_demand(1, cfg, rng);
    let mut state = ExogenousState::new(energy, demand, buy, sell.min(buy));
    out.push(state);

    for t in 2..=cfg.horizon {
        let energy = next_energy(state.energy, cfg, rng);
        let demand = next_demand(t, cfg, rng);
        let c = next_price_traced(state.buy_price, cfg.buy_price, &cfg.price_kind, &cfg.price_noise, rng);
        let p = next_price_traced(state.sell_price, cfg.sell_price, &cfg.price_kind, &cfg.price_noise, rng);
        tally.transitions += 2;
        tally.jumps += u64::from(c.jumped) + u64::from(p.jumped);
        state = ExogenousState::new(energy, demand, c.price, p.price.min(c.price));
        out.push(state);
    }
    (out, tally)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamSeed;

    fn s1_like() -> ProcessConfig {
        ProcessConfig::standard(10, NoiseDist::Uniform { half_width: 1 }, 0.5, true).unwrap()
    }

    #[test]
    fn zero_sigma_always_zero() {
        let g = DiscretizedGaussian::new(0.0, 2).unwrap();
        let mut rng = StreamSeed::new(1).rng();
        assert!((0..1000).all(|_| g.sample(&mut rng) == 0));
    }

    #[test]
    fn draws_stay_in_support() {
        let g = DiscretizedGaussian::new(2.0, 2).unwrap();
        let mut rng = StreamSeed::new(2).rng();
        for _ in 0..10_000 {
            assert!(g.contains(g.sample(&mut rng)));
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(DiscretizedGaussian::new(-1.0, 2).is_err());
        assert!(DiscretizedGaussian::new(f64::NAN, 2).is_err());
        assert!(DiscretizedGaussian::new(1.0, -1).is_err());
        let mut cfg = s1_like();
        cfg.sell_price = Bounds::new(4, 12);
        assert!(cfg.validate().is_err());
        let mut cfg = s1_like();
        cfg.demand = Bounds::new(5, 4);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn seasonal_demand_examples() {
        let b = Bounds::new(1, 15);
        assert_eq!(demand_from_noise(10, 10, 0, b), 3);
        // sin(2 pi t / 10) = 1 needs t = 2.5; the closest periods clamp too.
        assert_eq!(seasonal_demand_base(5, 20), -1);
        assert_eq!(demand_from_noise(5, 20, 0, b), 1);
        // floor(3 - 4 * 0.5878) = 0, plus 2.
        assert_eq!(seasonal_demand_base(1, 10), 0);
        assert_eq!(demand_from_noise(1, 10, 2, b), 2);
        // half period: sin(pi) must count as zero.
        assert_eq!(seasonal_demand_base(5, 10), 3);
    }

    #[test]
    fn energy_examples() {
        let b = Bounds::new(1, 7);
        assert_eq!(energy_step(7, 1, b), 7);
        assert_eq!(energy_step(1, -1, b), 1);
        assert_eq!(energy_step(4, -2, b), 2);
    }

    #[test]
    fn price_examples() {
        let b = Bounds::new(3, 13);
        assert_eq!(price_step(8, 0, false, 0, b), 8);
        // u = 0.5 > p: jump suppressed whatever its draw
        assert_eq!(price_step(8, 1, 0.5 <= JUMP_PROB, 40, b), 9);
        // u = 0.01 <= p with a +40 spike
        assert_eq!(price_step(5, 0, 0.01 <= JUMP_PROB, 40, b), 13);
    }

    #[test]
    fn zero_noise_trajectory_is_flat_in_prices() {
        let g0 = DiscretizedGaussian::new(0.0, 2).unwrap();
        let cfg = ProcessConfig {
            demand_noise: g0,
            energy_noise: NoiseDist::Pseudonormal(g0),
            price_noise: g0,
            price_kind: PriceProcessKind::MarkovChain,
            ..s1_like()
        };
        let mut rng = StreamSeed::new(9).rng();
        let traj = sample_trajectory(&cfg, &mut rng);
        assert_eq!(traj.len(), 10);
        for w in &traj {
            assert_eq!(w.buy_price, traj[0].buy_price);
            assert_eq!(w.sell_price, traj[0].sell_price);
            assert_eq!(w.energy, traj[0].energy);
        }
        for (i, w) in traj.iter().enumerate() {
            assert_eq!(w.demand, demand_from_noise(i + 1, 10, 0, cfg.demand));
        }
    }

    #[test]
    fn trajectories_reproducible() {
        let cfg = s1_like();
        let a = sample_trajectory(&cfg, &mut StreamSeed::new(5).rng());
        let b = sample_trajectory(&cfg, &mut StreamSeed::new(5).rng());
        let c = sample_trajectory(&cfg, &mut StreamSeed::new(6).rng());
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
