//! Gated recurrent unit cell with exact backward pass.
//!
//! Gate equations:
//!
//! ```text
//! r  = sigmoid(W_r x + U_r h + b_r)
//! z  = sigmoid(W_z x + U_z h + b_z)
//! n  = tanh(W_n x + r . (U_n h + b_nh) + b_nx)
//! h' = (1 - z) . n + z . h
//! ```

use crate::numerics::ops::{affine, sigmoid};
use crate::numerics::store::{ParameterStore, SegId};

/// Segment handles for one GRU cell (`input_dim -> hidden_dim`).
#[derive(Debug, Clone, Copy)]
pub struct GruIds {
    pub w_r: SegId,
    pub u_r: SegId,
    pub w_z: SegId,
    pub u_z: SegId,
    pub w_n: SegId,
    pub u_n: SegId,
    pub b_r: SegId,
    pub b_z: SegId,
    pub b_nx: SegId,
    pub b_nh: SegId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl GruIds {
    pub fn register(
        store: &mut ParameterStore,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
    ) -> Self {
        let m = |s: &mut ParameterStore, g: &str, cols: usize| {
            s.register(&format!("{name}.{g}"), hidden_dim, cols)
        };
        GruIds {
            w_r: m(store, "w_r", input_dim),
            u_r: m(store, "u_r", hidden_dim),
            w_z: m(store, "w_z", input_dim),
            u_z: m(store, "u_z", hidden_dim),
            w_n: m(store, "w_n", input_dim),
            u_n: m(store, "u_n", hidden_dim),
            b_r: m(store, "b_r", 1),
            b_z: m(store, "b_z", 1),
            b_nx: m(store, "b_nx", 1),
            b_nh: m(store, "b_nh", 1),
            input_dim,
            hidden_dim,
        }
    }
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct GruCache {
    pub x: Vec<f64>,
    pub h: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    /// Hidden-side candidate pre-product: U_n h + b_nh.
    u_pre: Vec<f64>,
}

/// Computes h' and records the cache.
pub fn gru_forward(
    ids: &GruIds,
    store: &ParameterStore,
    x: &[f64],
    h: &[f64],
    h_out: &mut [f64],
) -> GruCache {
    let d = ids.hidden_dim;
    assert_eq!(x.len(), ids.input_dim, "gru: input dim mismatch");
    assert_eq!(h.len(), d, "gru: hidden dim mismatch");
    assert_eq!(h_out.len(), d);

    let mut r = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut n = vec![0.0; d];
    let mut u_pre = vec![0.0; d];
    let mut tmp = vec![0.0; d];

    // r gate
    affine(store.mat(ids.w_r), store.vec(ids.b_r), x, &mut r);
    affine(store.mat(ids.u_r), &vec![0.0; d], h, &mut tmp);
    for j in 0..d {
        r[j] = sigmoid(r[j] + tmp[j]);
    }
    // z gate
    affine(store.mat(ids.w_z), store.vec(ids.b_z), x, &mut z);
    affine(store.mat(ids.u_z), &vec![0.0; d], h, &mut tmp);
    for j in 0..d {
        z[j] = sigmoid(z[j] + tmp[j]);
    }
    // candidate
    affine(store.mat(ids.u_n), store.vec(ids.b_nh), h, &mut u_pre);
    affine(store.mat(ids.w_n), store.vec(ids.b_nx), x, &mut n);
    for j in 0..d {
        n[j] = (n[j] + r[j] * u_pre[j]).tanh();
    }
    for j in 0..d {
        h_out[j] = (1.0 - z[j]) * n[j] + z[j] * h[j];
    }
    GruCache { x: x.to_vec(), h: h.to_vec(), r, z, n, u_pre }
}

/// Backward pass. Accumulates parameter gradients into `grads` and the
/// input/hidden gradients into `dx` / `dh`.
pub fn gru_backward(
    ids: &GruIds,
    store: &ParameterStore,
    cache: &GruCache,
    dh_out: &[f64],
    grads: &mut ParameterStore,
    dx: &mut [f64],
    dh: &mut [f64],
) {
    let d = ids.hidden_dim;
    assert_eq!(dh_out.len(), d);
    assert_eq!(dx.len(), ids.input_dim);
    assert_eq!(dh.len(), d);

    let mut da_n = vec![0.0; d];
    let mut du = vec![0.0; d];
    let mut da_z = vec![0.0; d];
    let mut da_r = vec![0.0; d];

    for j in 0..d {
        let g = dh_out[j];
        let (r, z, n) = (cache.r[j], cache.z[j], cache.n[j]);
        dh[j] += g * z;
        let dn = g * (1.0 - z);
        let dz = g * (cache.h[j] - n);
        da_n[j] = dn * (1.0 - n * n);
        du[j] = da_n[j] * r;
        let dr = da_n[j] * cache.u_pre[j];
        da_z[j] = dz * z * (1.0 - z);
        da_r[j] = dr * r * (1.0 - r);
    }

    let mut acc = |w: SegId, b: Option<SegId>, input: &[f64], dy: &[f64], dinput: &mut [f64]| {
        let wm = store.mat(w);
        for row in 0..wm.rows {
            let g = dy[row];
            let wrow = wm.row(row);
            let dwrow = {
                let dwm = grads.vec_mut(w);
                &mut dwm[row * wm.cols..(row + 1) * wm.cols]
            };
            for c in 0..wm.cols {
                dwrow[c] += g * input[c];
            }
            for c in 0..wm.cols {
                dinput[c] += g * wrow[c];
            }
        }
        if let Some(b) = b {
            let db = grads.vec_mut(b);
            for row in 0..dy.len() {
                db[row] += dy[row];
            }
        }
    };

    acc(ids.w_n, Some(ids.b_nx), &cache.x, &da_n, dx);
    acc(ids.u_n, Some(ids.b_nh), &cache.h, &du, dh);
    acc(ids.w_z, Some(ids.b_z), &cache.x, &da_z, dx);
    acc(ids.u_z, None, &cache.h, &da_z, dh);
    acc(ids.w_r, Some(ids.b_r), &cache.x, &da_r, dx);
    acc(ids.u_r, None, &cache.h, &da_r, dh);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::SeededRng;

    fn cell(input: usize, hidden: usize) -> (GruIds, ParameterStore) {
        let mut store = ParameterStore::new();
        let ids = GruIds::register(&mut store, "gru", input, hidden);
        (ids, store)
    }

    #[test]
    fn zero_params_zero_hidden() {
        // All gates at zero pre-activation: r = z = 0.5, n = 0, h' = 0.
        let (ids, store) = cell(3, 4);
        let mut out = vec![1.0; 4];
        let cache = gru_forward(&ids, &store, &[0.3, -0.5, 0.8], &[0.0; 4], &mut out);
        assert!(out.iter().all(|&x| x == 0.0));
        assert!(cache.r.iter().all(|&x| x == 0.5));
        assert!(cache.z.iter().all(|&x| x == 0.5));
        assert!(cache.n.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn saturated_update_gate_carries_hidden() {
        // Large b_z drives z to 1, so h' ~ h regardless of input.
        let (ids, mut store) = cell(2, 3);
        store.init_xavier(&mut SeededRng::new(4));
        for b in store.vec_mut(ids.b_z) {
            *b = 30.0;
        }
        let h = [0.3, -0.7, 0.1];
        let mut out = vec![0.0; 3];
        gru_forward(&ids, &store, &[1.0, -1.0], &h, &mut out);
        for j in 0..3 {
            assert!((out[j] - h[j]).abs() < 1e-9, "{} vs {}", out[j], h[j]);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let (ids, mut store) = cell(3, 4);
        store.init_xavier(&mut SeededRng::new(7));
        let mut rng = SeededRng::new(8);
        let x: Vec<f64> = (0..3).map(|_| rng.uniform_signed(1.0)).collect();
        let h: Vec<f64> = (0..4).map(|_| rng.uniform_signed(1.0)).collect();

        // Scalar objective: sum of h'.
        let eval = |store: &ParameterStore, x: &[f64], h: &[f64]| {
            let mut out = vec![0.0; 4];
            gru_forward(&ids, store, x, h, &mut out);
            out.iter().sum::<f64>()
        };

        let mut out = vec![0.0; 4];
        let cache = gru_forward(&ids, &store, &x, &h, &mut out);
        let mut grads = store.zeros_like();
        let mut dx = vec![0.0; 3];
        let mut dh = vec![0.0; 4];
        gru_backward(&ids, &store, &cache, &[1.0; 4], &mut grads, &mut dx, &mut dh);

        let step = 1e-6;
        // d(sum h')/dh via central differences
        for j in 0..4 {
            let mut hp = h.clone();
            let mut hm = h.clone();
            hp[j] += step;
            hm[j] -= step;
            let num = (eval(&store, &x, &hp) - eval(&store, &x, &hm)) / (2.0 * step);
            let rel = (dh[j] - num).abs() / num.abs().max(dh[j].abs()).max(1e-6);
            assert!(rel < 1e-6, "dh[{j}]: analytic {} numeric {num}", dh[j]);
        }
        // d/dx
        for j in 0..3 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += step;
            xm[j] -= step;
            let num = (eval(&store, &xp, &h) - eval(&store, &xm, &h)) / (2.0 * step);
            let rel = (dx[j] - num).abs() / num.abs().max(dx[j].abs()).max(1e-6);
            assert!(rel < 1e-6, "dx[{j}]: analytic {} numeric {num}", dx[j]);
        }
        // every parameter
        for i in 0..store.len() {
            let orig = store.data()[i];
            store.data_mut()[i] = orig + step;
            let up = eval(&store, &x, &h);
            store.data_mut()[i] = orig - step;
            let down = eval(&store, &x, &h);
            store.data_mut()[i] = orig;
            let num = (up - down) / (2.0 * step);
            let a = grads.data()[i];
            let rel = (a - num).abs() / num.abs().max(a.abs()).max(1e-6);
            assert!(rel < 1e-5, "param {i}: analytic {a} numeric {num}");
        }
    }
}
