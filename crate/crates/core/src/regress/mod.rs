//! Value-function approximators.
//!
//! All three architectures map the five features
//! `(t, x^r_{t-1}, x^b_t, x^s_t, x^r_t)` to a predicted value-to-go.

use core::fmt;

use thiserror::Error;

pub mod adam;
pub mod nn;
pub mod ols;
pub mod svr;

pub use adam::{Adam, AdamParams};
pub use nn::{nn_forward, nn_train, InputScaling, NnModel, NnReport, NnTraining};
pub use ols::{fit_ols, LinearModel};
pub use svr::{fit_linear_svr, svr_objective, SvrFit, SvrModel, SvrParams};

pub const N_FEATURES: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegressError {
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("non-finite feature or label in training data")]
    NonFinite,
    #[error("invalid training configuration: {0}")]
    BadConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn new(t: usize, prior: i64, buy: i64, sell: i64, store: i64) -> Self {
        FeatureVector([t as f64, prior as f64, buy as f64, sell as f64, store as f64])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingSample {
    pub features: FeatureVector,
    /// Observed value-to-go.
    pub label: f64,
}

impl TrainingSample {
    pub fn new(features: FeatureVector, label: f64) -> Self {
        TrainingSample { features, label }
    }
}

pub(crate) fn check_finite(samples: &[TrainingSample]) -> Result<(), RegressError> {
    let ok = samples.iter().all(|s| s.label.is_finite() && s.features.0.iter().all(|x| x.is_finite()));
    if ok {
        Ok(())
    } else {
        Err(RegressError::NonFinite)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Architecture {
    Ols,
    Svr,
    Nn,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [Architecture::Ols, Architecture::Svr, Architecture::Nn];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Ols => "ols",
            Architecture::Svr => "svr",
            Architecture::Nn => "nn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ols" | "lr" => Some(Architecture::Ols),
            "svr" => Some(Architecture::Svr),
            "nn" => Some(Architecture::Nn),
            _ => None,
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A trained approximator.
#[derive(Debug, Clone, PartialEq)]
pub enum ValueModel {
    Ols(LinearModel),
    Svr(SvrModel),
    Nn(NnModel),
}

impl ValueModel {
    pub fn predict(&self, x: &FeatureVector) -> f64 {
        match self {
            ValueModel::Ols(m) => m.predict(x),
            ValueModel::Svr(m) => m.predict(x),
            ValueModel::Nn(m) => m.predict(x),
        }
    }

    pub fn architecture(&self) -> Architecture {
        match self {
            ValueModel::Ols(_) => Architecture::Ols,
            ValueModel::Svr(_) => Architecture::Svr,
            ValueModel::Nn(_) => Architecture::Nn,
        }
    }
}

pub fn predict(model: &ValueModel, x: &FeatureVector) -> f64 {
    model.predict(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// Share of the data used for fitting; the rest is a held-out test set.
    pub train_fraction: f64,
    /// Share of the fitting partition held out for early stopping.
    pub validation_fraction: f64,
    pub adam: AdamParams,
    pub dropout: f64,
    pub svr: SvrParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 100,
            epochs: 15,
            train_fraction: 0.7,
            validation_fraction: 0.2,
            adam: AdamParams::default(),
            dropout: 0.2,
            svr: SvrParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RegressError> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(RegressError::BadConfig("batch size and epochs must be positive"));
        }
        let in_unit = |f: f64| f > 0.0 && f < 1.0;
        if !in_unit(self.train_fraction) || !in_unit(self.validation_fraction) {
            return Err(RegressError::BadConfig("fractions must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(RegressError::BadConfig("dropout must lie in [0, 1)"));
        }
        self.adam.validate()?;
        self.svr.validate()
    }
}

/// Affine shift making every label at least one, so `ln(1 + y)` is defined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelShift {
    pub offset: f64,
}

impl LabelShift {
    pub fn fit(labels: impl Iterator<Item = f64>) -> Self {
        let min = labels.fold(f64::INFINITY, f64::min);
        LabelShift { offset: if min.is_finite() { min - 1.0 } else { 0.0 } }
    }

    pub fn transform(&self, y: f64) -> f64 {
        y - self.offset
    }

    pub fn inverse(&self, y: f64) -> f64 {
        y + self.offset
    }
}

/// Mean squared logarithmic error on already shifted values. Predictions are
/// clipped at a tiny positive floor.
pub fn msle(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut n = 0usize;
    let mut acc = 0.0;
    for (pred, target) in pairs {
        let d = libm::log1p(pred.max(nn::CLIP_FLOOR)) - libm::log1p(target.max(nn::CLIP_FLOOR));
        acc += d * d;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        acc / n as f64
    }
}

pub fn mse(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut n = 0usize;
    let mut acc = 0.0;
    for (pred, target) in pairs {
        acc += (pred - target) * (pred - target);
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        acc / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn trivial_predictions() {
        let x = FeatureVector::new(3, 4, 0, 2, 5);
        let lin = ValueModel::Ols(LinearModel { intercept: 1.0, coef: [0.0; 5] });
        assert_eq!(predict(&lin, &x), 1.0);
        let svr = ValueModel::Svr(SvrModel { weights: [0.0; 5], bias: 5.0 });
        assert_eq!(predict(&svr, &x), 5.0);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { train_fraction: 1.0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { batch_size: 0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn label_shift_round_trip(labels in proptest::collection::vec(-1e4f64..1e4, 1..50)) {
            let shift = LabelShift::fit(labels.iter().copied());
            for &y in &labels {
                prop_assert!(shift.transform(y) >= 1.0 - 1e-9);
                prop_assert!((shift.inverse(shift.transform(y)) - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }
}
