//! Linear epsilon-insensitive support vector regression, trained in the
//! primal by full-batch subgradient descent.
//!
//! Objective: `1/2 |w|^2 + penalty * sum_i max(0, |y_i - w.x_i - b| - epsilon)`.
//!
//! Features and labels are standardised internally and the objective is
//! divided by `penalty * n * label_scale`; the minimiser is unchanged, only
//! the step geometry is. Steps follow `step0 / sqrt(k)` and the best iterate
//! seen is returned.

use alloc::vec::Vec;

use super::{check_finite, FeatureVector, RegressError, TrainingSample, N_FEATURES};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrParams {
    pub penalty: f64,
    pub epsilon: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SvrParams {
    fn default() -> Self {
        SvrParams { penalty: 1.0, epsilon: 0.0, max_iter: 1000, tol: 1e-5 }
    }
}

impl SvrParams {
    pub fn validate(&self) -> Result<(), RegressError> {
        if !(self.penalty > 0.0) || !(self.epsilon >= 0.0) || self.max_iter == 0 || !(self.tol >= 0.0) {
            return Err(RegressError::BadConfig("svr needs penalty > 0, epsilon >= 0, max_iter > 0, tol >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrModel {
    pub weights: [f64; N_FEATURES],
    pub bias: f64,
}

impl SvrModel {
    pub fn predict(&self, x: &FeatureVector) -> f64 {
        self.bias + self.weights.iter().zip(&x.0).map(|(w, v)| w * v).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrFit {
    pub model: SvrModel,
    pub iterations: usize,
    /// Primal objective of `model` in original units.
    pub objective: f64,
}

/// Primal objective in original units.
pub fn svr_objective(model: &SvrModel, samples: &[TrainingSample], params: &SvrParams) -> f64 {
    let reg: f64 = 0.5 * model.weights.iter().map(|w| w * w).sum::<f64>();
    let loss: f64 =
        samples.iter().map(|s| ((s.label - model.predict(&s.features)).abs() - params.epsilon).max(0.0)).sum();
    reg + params.penalty * loss
}

/// Iterations between stopping checks on the best objective.
const CHECK_EVERY: usize = 50;
const STEP0: f64 = 0.5;

pub fn fit_linear_svr(samples: &[TrainingSample], params: &SvrParams) -> Result<SvrFit, RegressError> {
    params.validate()?;
    if samples.is_empty() {
        return Err(RegressError::InsufficientSamples { needed: 1, got: 0 });
    }
    check_finite(samples)?;
    let n = samples.len() as f64;

    let mut mean = [0.0; N_FEATURES];
    let mut scale = [0.0; N_FEATURES];
    for s in samples {
        for j in 0..N_FEATURES {
            mean[j] += s.features.0[j] / n;
        }
    }
    for s in samples {
        for j in 0..N_FEATURES {
            let d = s.features.0[j] - mean[j];
            scale[j] += d * d / n;
        }
    }
    for sc in &mut scale {
        *sc = if *sc > 0.0 { libm::sqrt(*sc) } else { 1.0 };
    }
    let y_mean = samples.iter().map(|s| s.label).sum::<f64>() / n;
    let y_var = samples.iter().map(|s| (s.label - y_mean) * (s.label - y_mean)).sum::<f64>() / n;
    let y_scale = if y_var > 0.0 { libm::sqrt(y_var) } else { 1.0 };

    let z: Vec<[f64; N_FEATURES]> =
        samples.iter().map(|s| core::array::from_fn(|j| (s.features.0[j] - mean[j]) / scale[j])).collect();
    let y: Vec<f64> = samples.iter().map(|s| (s.label - y_mean) / y_scale).collect();
    let eps = params.epsilon / y_scale;
    // regulariser weight per standardised coordinate
    let reg: [f64; N_FEATURES] = core::array::from_fn(|j| y_scale / (params.penalty * n * scale[j] * scale[j]));

    let objective = |u: &[f64; N_FEATURES], c: f64| -> f64 {
        let r: f64 = 0.5 * (0..N_FEATURES).map(|j| reg[j] * u[j] * u[j]).sum::<f64>();
        let loss: f64 = z.iter().zip(&y).map(|(zi, yi)| ((yi - c - dot(u, zi)).abs() - eps).max(0.0)).sum();
        r + loss / n
    };

    let mut u = [0.0; N_FEATURES];
    let mut c = median(&y);
    let mut best = (objective(&u, c), u, c);
    let mut checkpoint = best.0;
    let mut iterations = 0;

    for k in 1..=params.max_iter {
        iterations = k;
        let mut gu = [0.0; N_FEATURES];
        let mut gc = 0.0;
        for (zi, yi) in z.iter().zip(&y) {
            let r = yi - c - dot(&u, zi);
            if r.abs() > eps {
                let s = r.signum();
                gc -= s;
                for j in 0..N_FEATURES {
                    gu[j] -= s * zi[j];
                }
            }
        }
        gc /= n;
        for j in 0..N_FEATURES {
            gu[j] = gu[j] / n + reg[j] * u[j];
        }
        let gnorm = libm::sqrt(gc * gc + gu.iter().map(|g| g * g).sum::<f64>());
        if gnorm == 0.0 {
            break;
        }
        let eta = STEP0 / libm::sqrt(k as f64);
        c -= eta * gc;
        for j in 0..N_FEATURES {
            u[j] -= eta * gu[j];
        }
        let obj = objective(&u, c);
        if obj < best.0 {
            best = (obj, u, c);
        }
        if k % CHECK_EVERY == 0 {
            if checkpoint - best.0 < params.tol * checkpoint.abs().max(1e-12) {
                break;
            }
            checkpoint = best.0;
        }
    }

    let (_, u, c) = best;
    let mut weights = [0.0; N_FEATURES];
    let mut bias = y_mean + y_scale * c;
    for j in 0..N_FEATURES {
        weights[j] = y_scale * u[j] / scale[j];
        bias -= weights[j] * mean[j];
    }
    let model = SvrModel { weights, bias };
    Ok(SvrFit { model, iterations, objective: svr_objective(&model, samples, params) })
}

fn dot(a: &[f64; N_FEATURES], b: &[f64; N_FEATURES]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn median(v: &[f64]) -> f64 {
    let mut s: Vec<f64> = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}
