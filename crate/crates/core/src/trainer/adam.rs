use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Bias-corrected adaptive-moment optimizer state for one parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    first: Vec<f64>,
    second: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            first: vec![0.0; len],
            second: vec![0.0; len],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second
    }
}

pub fn adam_apply(state: &mut AdamState, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
    if params.len() != state.first.len() {
        return Err(Error::shape("adam parameters", state.first.len(), params.len()));
    }
    if grad.len() != params.len() {
        return Err(Error::shape("adam gradient", params.len(), grad.len()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for i in 0..params.len() {
        let g = grad[i];
        let m = ADAM_BETA1 * state.first[i] + (1.0 - ADAM_BETA1) * g;
        let v = ADAM_BETA2 * state.second[i] + (1.0 - ADAM_BETA2) * g * g;
        state.first[i] = m;
        state.second[i] = v;
        params[i] -= lr * (m / c1) / ((v / c2).sqrt() + ADAM_EPS);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params_and_decays_moments() {
        let mut st = AdamState::new(2);
        let mut p = vec![1.0, -2.0];
        adam_apply(&mut st, &mut p, &[1.0, 1.0], 0.1).unwrap();
        let before = p.clone();
        let m_before = st.first_moment().to_vec();
        let mut st2 = st.clone();
        // a zero step with zero moments would not move anything either
        adam_apply(&mut st2, &mut p.clone(), &[0.0, 0.0], 0.1).unwrap();
        assert_eq!(st2.first_moment()[0], ADAM_BETA1 * m_before[0]);
        let mut fresh = AdamState::new(2);
        adam_apply(&mut fresh, &mut p, &[0.0, 0.0], 0.1).unwrap();
        assert_eq!(p, before);
        assert_eq!(fresh.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut st = AdamState::new(1);
        let mut p = vec![0.0];
        adam_apply(&mut st, &mut p, &[1.0], 0.1).unwrap();
        // −lr·1/(1 + ε)
        assert!((p[0] + 0.1).abs() < 1e-8);
        let mut st = AdamState::new(1);
        let mut q = vec![0.0];
        adam_apply(&mut st, &mut q, &[-250.0], 0.1).unwrap();
        assert!((q[0] - 0.1).abs() < 1e-8);
    }

    #[test]
    fn deterministic_trajectory() {
        let run = || {
            let mut st = AdamState::new(3);
            let mut p = vec![0.5, -0.5, 2.0];
            for k in 0..50 {
                let g: Vec<f64> = p.iter().map(|x| 2.0 * x + k as f64 * 0.01).collect();
                adam_apply(&mut st, &mut p, &g, 0.05).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch() {
        let mut st = AdamState::new(2);
        assert!(adam_apply(&mut st, &mut [0.0; 3], &[0.0; 3], 0.1).is_err());
        assert!(adam_apply(&mut st, &mut [0.0; 2], &[0.0; 3], 0.1).is_err());
    }
}
