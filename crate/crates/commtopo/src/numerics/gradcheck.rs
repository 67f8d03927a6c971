//! Central-finite-difference gradient verification.
//!
//! Used by `commtopo verify` and the test suite to confirm that every
//! analytic backward pass agrees with a numeric derivative of the same
//! scalar objective.

use crate::numerics::store::ParameterStore;

/// Default perturbation for central differences.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_segment: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub params_checked: usize,
}

/// Relative error with a floor so that near-zero gradient pairs compare on
/// an absolute scale.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Checks analytic gradients in `grads` against central differences of
/// `loss` over every entry of `params`.
///
/// `loss` must be a deterministic function of the store contents.
pub fn check_gradients(
    params: &mut ParameterStore,
    grads: &ParameterStore,
    h: f64,
    mut loss: impl FnMut(&ParameterStore) -> f64,
) -> GradCheckReport {
    assert!(params.same_layout(grads), "gradcheck: layout mismatch");
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_segment: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        params_checked: params.len(),
    };
    let seg_of = |store: &ParameterStore, flat: usize| -> String {
        let mut offset = 0;
        for id in store.segment_ids() {
            let (r, c) = store.segment_shape(id);
            if flat < offset + r * c {
                return store.segment_name(id).to_string();
            }
            offset += r * c;
        }
        "<unknown>".into()
    };
    for i in 0..params.len() {
        let orig = params.data()[i];
        params.data_mut()[i] = orig + h;
        let up = loss(params);
        params.data_mut()[i] = orig - h;
        let down = loss(params);
        params.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads.data()[i];
        let rel = relative_error(analytic, numeric);
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst_segment = seg_of(params, i);
            report.worst_index = i;
            report.analytic = analytic;
            report.numeric = numeric;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_a_wrong_gradient() {
        let mut p = ParameterStore::new();
        p.register("x", 3, 1);
        p.data_mut().copy_from_slice(&[1.0, 2.0, 3.0]);
        // loss = sum x^2, true grad = 2x
        let mut g = p.zeros_like();
        g.data_mut().copy_from_slice(&[2.0, 4.0, 6.0]);
        let report = check_gradients(&mut p, &g, FD_STEP, |s| {
            s.data().iter().map(|x| x * x).sum()
        });
        assert!(report.max_rel_err < 1e-8, "{report:?}");

        g.data_mut()[1] = 3.9; // corrupt one entry
        let report = check_gradients(&mut p, &g, FD_STEP, |s| {
            s.data().iter().map(|x| x * x).sum()
        });
        assert!(report.max_rel_err > 1e-2);
        assert_eq!(report.worst_segment, "x");
        assert_eq!(report.worst_index, 1);
    }
}
