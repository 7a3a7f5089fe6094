//! Adam with bias correction.

use alloc::vec;
use alloc::vec::Vec;

use super::RegressError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub step: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { step: 0.001, beta1: 0.9, beta2: 0.999, epsilon: 1e-7 }
    }
}

impl AdamParams {
    pub fn validate(&self) -> Result<(), RegressError> {
        let ok = self.step > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(RegressError::BadConfig("adam constants out of range"))
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    params: AdamParams,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(params: AdamParams, n: usize) -> Self {
        Adam { params, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(theta.len(), grad.len());
        let AdamParams { step, beta1, beta2, epsilon } = self.params;
        self.t += 1;
        let c1 = 1.0 - libm::pow(beta1, f64::from(self.t));
        let c2 = 1.0 - libm::pow(beta2, f64::from(self.t));
        for i in 0..theta.len() {
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            theta[i] -= step * m_hat / (libm::sqrt(v_hat) + epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn first_step_is_signed_learning_rate(g in prop_oneof![-1e3f64..-1e-2, 1e-2f64..1e3], x0 in -10.0f64..10.0) {
            let mut opt = Adam::new(AdamParams::default(), 1);
            let mut theta = [x0];
            opt.step(&mut theta, &[g]);
            let moved = theta[0] - x0;
            let expected = -0.001 * g.signum();
            prop_assert!((moved / expected - 1.0).abs() <= 1e-3);
        }
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut opt = Adam::new(AdamParams { step: 0.05, ..AdamParams::default() }, 2);
        let mut x = [3.0, -2.0];
        for _ in 0..2000 {
            let g = [2.0 * (x[0] - 1.0), 2.0 * (x[1] + 0.5)];
            opt.step(&mut x, &g);
        }
        assert!((x[0] - 1.0).abs() < 1e-3 && (x[1] + 0.5).abs() < 1e-3, "{x:?}");
    }
}
