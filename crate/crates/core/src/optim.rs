//! Adam with bias correction and a multi-step learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Moment accumulators for one parameter group. Several parameter slices can
/// share a state; their moments are laid out back to back.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step_count: u64,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self::with_constants(len, 0.9, 0.999, 1e-8)
    }

    pub fn with_constants(len: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            step_count: 0,
            beta1: T::lit(beta1),
            beta2: T::lit(beta2),
            eps: T::lit(eps),
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// One bias-corrected Adam update over `params[k] -= lr · m̂ / (√v̂ + eps)`.
///
/// `params` and `grads` are matched slice by slice and must together cover the
/// state exactly. Nothing is modified when any gradient is non-finite.
pub fn adam_step<T: Real>(params: &mut [&mut [T]], grads: &[&[T]], state: &mut AdamState<T>, lr: T) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape("one gradient slice per parameter slice required"));
    }
    let mut total = 0;
    for (p, g) in params.iter().zip(grads) {
        if p.len() != g.len() {
            return Err(Error::shape(format!("parameter slice {} vs gradient {}", p.len(), g.len())));
        }
        total += p.len();
    }
    if total != state.len() {
        return Err(Error::shape(format!("{total} parameters for an Adam state of {}", state.len())));
    }
    if !(lr >= T::zero()) {
        return Err(Error::invalid("learning rate must be non-negative"));
    }
    if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
        return Err(Error::Diverged("non-finite gradient".into()));
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    let one = T::one();
    let mut offset = 0;
    for (p, g) in params.iter_mut().zip(grads) {
        let m = &mut state.m[offset..offset + p.len()];
        let v = &mut state.v[offset..offset + p.len()];
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = b1 * m[i] + (one - b1) * gi;
            v[i] = b2 * v[i] + (one - b2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        offset += p.len();
    }
    Ok(())
}

/// Piecewise-constant decay at fixed fractions of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrSchedule {
    pub grid_lr: f64,
    pub atmosphere_lr: f64,
    /// Fractions of the total iteration count, strictly increasing in (0, 1).
    pub milestones: Vec<f64>,
    pub decay: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            grid_lr: 1e-2,
            atmosphere_lr: 1e-2,
            milestones: vec![1.0 / 3.0, 3.0 / 5.0, 4.0 / 5.0, 9.0 / 10.0],
            decay: 0.33,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupRates {
    pub grid: f64,
    pub atmosphere: f64,
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.grid_lr > 0.0 && self.atmosphere_lr > 0.0) {
            return Err(Error::invalid("base learning rates must be positive"));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::invalid("decay must lie in (0, 1)"));
        }
        let ok = self.milestones.iter().all(|&f| f > 0.0 && f < 1.0)
            && self.milestones.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(Error::invalid("milestones must increase strictly inside (0, 1)"));
        }
        Ok(())
    }

    /// Iteration at which each milestone takes effect.
    pub fn milestone_iterations(&self, total_iterations: u64) -> Vec<u64> {
        self.milestones
            .iter()
            .map(|f| (f * total_iterations as f64).round() as u64)
            .collect()
    }

    pub fn lr_at(&self, iteration: u64, total_iterations: u64) -> Result<GroupRates> {
        if iteration >= total_iterations {
            return Err(Error::invalid(format!(
                "iteration {iteration} outside [0, {total_iterations})"
            )));
        }
        let passed = self
            .milestone_iterations(total_iterations)
            .iter()
            .filter(|&&m| iteration >= m)
            .count();
        let factor = self.decay.powi(passed as i32);
        Ok(GroupRates {
            grid: self.grid_lr * factor,
            atmosphere: self.atmosphere_lr * factor,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = vec![0.3f64, -1.0];
        let mut s = AdamState::new(2);
        adam_step(&mut [&mut p[..]], &[&[0.0, 0.0][..]], &mut s, 0.01).unwrap();
        assert_eq!(p, vec![0.3, -1.0]);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![2.0f64];
        let mut s = AdamState::new(1);
        adam_step(&mut [&mut p[..]], &[&[1.0][..]], &mut s, 0.01).unwrap();
        // m̂ = 1, v̂ = 1 → Δ = −0.01 / (1 + 1e-8)
        assert!((p[0] - (2.0 - 0.01 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn multi_slice_matches_single_slice() {
        let g = [0.5, -2.0, 0.1, 3.0];
        let mut a = vec![1.0f64, 2.0, 3.0, 4.0];
        let mut sa = AdamState::new(4);
        let mut b = a.clone();
        let mut sb = AdamState::new(4);
        for _ in 0..3 {
            adam_step(&mut [&mut a[..]], &[&g[..]], &mut sa, 0.05).unwrap();
            let (b0, b1) = b.split_at_mut(1);
            adam_step(&mut [b0, b1], &[&g[..1], &g[1..]], &mut sb, 0.05).unwrap();
        }
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut p = vec![1.0f64];
        let mut s = AdamState::new(1);
        let r = adam_step(&mut [&mut p[..]], &[&[f64::NAN][..]], &mut s, 0.01);
        assert!(matches!(r, Err(Error::Diverged(_))));
        assert_eq!(s.step_count, 0);
        assert_eq!(p[0], 1.0);
    }

    #[test]
    fn schedule_examples() {
        let s = LrSchedule::default();
        let t = 3000;
        assert_eq!(s.lr_at(0, t).unwrap().grid, 1e-2);
        assert_eq!(s.lr_at(999, t).unwrap().grid, 1e-2);
        assert!((s.lr_at(1001, t).unwrap().grid - 3.3e-3).abs() < 1e-15);
        assert!((s.lr_at(2701, t).unwrap().grid - 1e-2 * 0.33f64.powi(4)).abs() < 1e-15);
        assert!((s.lr_at(2701, t).unwrap().grid - 1.186e-4).abs() < 1e-7);
        assert_eq!(s.milestone_iterations(t), vec![1000, 1800, 2400, 2700]);
        assert!(s.lr_at(t, t).is_err());
    }

    #[test]
    fn slow_atmosphere_rate_is_representable() {
        let s = LrSchedule {
            atmosphere_lr: 3e-4,
            ..Default::default()
        };
        s.validate().unwrap();
        assert_eq!(s.lr_at(0, 100).unwrap().atmosphere, 3e-4);
        let bad = LrSchedule {
            milestones: vec![0.5, 0.4],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
