//! Adam optimizer over a [`ParameterStore`].

use crate::error::{Error, Result};
use crate::numerics::store::ParameterStore;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First/second moment accumulators plus the step counter, laid out
/// identically to the parameters they update.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ParameterStore,
    pub v: ParameterStore,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ParameterStore) -> Self {
        AdamState { m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }
}

/// One bias-corrected Adam update, applied in place.
///
/// The step is rejected (and nothing mutated) when any gradient is
/// non-finite.
pub fn adam_step(
    params: &mut ParameterStore,
    grads: &ParameterStore,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    assert!(params.same_layout(grads), "adam: gradient layout mismatch");
    assert!(params.same_layout(&state.m), "adam: moment layout mismatch");
    if !grads.all_finite() {
        return Err(Error::Train("non-finite gradient; step aborted".into()));
    }
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - ADAM_BETA1.powf(t);
    let bc2 = 1.0 - ADAM_BETA2.powf(t);
    let p = params.data_mut();
    let g = grads.data();
    let m = state.m.data_mut();
    let v = state.v.data_mut();
    for i in 0..p.len() {
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::SeededRng;

    fn store_with(vals: &[f64]) -> ParameterStore {
        let mut s = ParameterStore::new();
        s.register("p", vals.len(), 1);
        s.data_mut().copy_from_slice(vals);
        s
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = store_with(&[1.0, -2.0, 0.5]);
        let g = p.zeros_like();
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st, 5e-4).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0, 0.5]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_matches_closed_form() {
        // Fresh state, constant gradient g: delta = -lr * g / (|g| + eps).
        let lr = 5e-4;
        for &g0 in &[0.3, -1.7, 42.0] {
            let mut p = store_with(&[1.0]);
            let g = store_with(&[g0]);
            let mut st = AdamState::new(&p);
            adam_step(&mut p, &g, &mut st, lr).unwrap();
            let expected = 1.0 - lr * g0 / (g0.abs() + ADAM_EPS);
            assert!((p.data()[0] - expected).abs() < 1e-15, "g = {g0}");
        }
    }

    #[test]
    fn non_finite_gradient_rejected_without_mutation() {
        let mut p = store_with(&[1.0, 2.0]);
        let g = store_with(&[f64::NAN, 0.0]);
        let mut st = AdamState::new(&p);
        let err = adam_step(&mut p, &g, &mut st, 1e-3).unwrap_err();
        assert!(matches!(err, Error::Train(_)));
        assert_eq!(p.data(), &[1.0, 2.0]);
        assert_eq!(st.step, 0);
    }

    #[test]
    fn hundred_steps_bit_identical_across_runs() {
        let run = || {
            let mut rng = SeededRng::new(21);
            let mut p = store_with(&[0.0; 16]);
            p.data_mut().iter_mut().for_each(|x| *x = rng.uniform_signed(1.0));
            let mut st = AdamState::new(&p);
            for _ in 0..100 {
                let mut g = p.zeros_like();
                for (gi, pi) in g.data_mut().iter_mut().zip(p.data()) {
                    *gi = pi * 2.0 + rng.uniform_signed(0.1);
                }
                adam_step(&mut p, &g, &mut st, 1e-3).unwrap();
            }
            p.data().to_vec()
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
