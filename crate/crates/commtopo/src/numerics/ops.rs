//! Dense forward/backward primitives: affine maps, activations, Xavier
//! initialization, and global-norm gradient clipping.
//!
//! Backward passes accumulate (`+=`) into their gradient outputs so a caller
//! can sum contributions over a batch before stepping the optimizer.

use crate::numerics::rng::SeededRng;
use crate::numerics::store::{DenseMatrix, MatRef};

/// y = W x + b.
pub fn affine(w: MatRef<'_>, b: &[f64], x: &[f64], y: &mut [f64]) {
    assert_eq!(w.cols, x.len(), "affine: input dim mismatch");
    assert_eq!(w.rows, b.len(), "affine: bias dim mismatch");
    assert_eq!(w.rows, y.len(), "affine: output dim mismatch");
    for r in 0..w.rows {
        let row = w.row(r);
        let mut acc = b[r];
        for c in 0..w.cols {
            acc += row[c] * x[c];
        }
        y[r] = acc;
    }
}

/// Backward of `y = W x + b` given upstream `dy`. Accumulates into `dw`,
/// `db`, and (when provided) `dx`.
pub fn affine_backward(
    w: MatRef<'_>,
    x: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    mut dx: Option<&mut [f64]>,
) {
    assert_eq!(w.rows, dy.len(), "affine_backward: dy dim mismatch");
    assert_eq!(w.cols, x.len(), "affine_backward: x dim mismatch");
    assert_eq!(dw.len(), w.rows * w.cols);
    assert_eq!(db.len(), w.rows);
    if let Some(ref dx) = dx {
        assert_eq!(dx.len(), w.cols);
    }
    for r in 0..w.rows {
        let g = dy[r];
        db[r] += g;
        let dwr = &mut dw[r * w.cols..(r + 1) * w.cols];
        for c in 0..w.cols {
            dwr[c] += g * x[c];
        }
        if let Some(ref mut dx) = dx {
            let row = w.row(r);
            for c in 0..w.cols {
                dx[c] += g * row[c];
            }
        }
    }
}

/// ELU with alpha = 1: x for x >= 0, exp(x) - 1 otherwise.
#[inline]
pub fn elu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

/// d/dx elu(x); strictly positive everywhere.
#[inline]
pub fn elu_deriv(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        x.exp()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Xavier-uniform matrix: entries in +-sqrt(6 / (fan_in + fan_out)).
pub fn xavier_init(rows: usize, cols: usize, rng: &mut SeededRng) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(rows, cols);
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    for x in &mut m.data {
        *x = rng.uniform_signed(limit);
    }
    m
}

/// Euclidean norm over a set of gradient slices.
pub fn global_norm(grads: &[&[f64]]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}

/// Scales all gradients by `max_norm / norm` when their joint L2 norm
/// exceeds `max_norm`. Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm = {
        let views: Vec<&[f64]> = grads.iter().map(|g| &**g).collect();
        global_norm(&views)
    };
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for x in g.iter_mut() {
                *x *= scale;
            }
        }
    }
    norm
}
