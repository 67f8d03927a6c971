//! QMIX monotonic mixing, the decentralized/brute-force argmax pair, and the
//! TD loss.
//!
//! Four hypernetworks (single hidden layer, ELU) map the global state to the
//! mixing parameters; the first- and second-layer mixing weights pass
//! through an element-wise absolute value, which is what guarantees
//! dQ_tot/dq_i >= 0 and therefore consistency between the joint argmax and
//! the per-agent argmaxes.

use crate::config::{RunConfig, NUM_ACTIONS};
use crate::domain::{CommAction, Episode, GlobalState, JointAction};
use crate::error::{Error, Result};
use crate::numerics::{affine, affine_backward, elu, elu_deriv, AffineIds, ParameterStore};
use crate::qnet::{argmax, backward_round, forward_round, AgentNet, RoundForward};

/// Transform applied to the hypernetwork outputs that become mixing weights.
///
/// `Monotonic` is the real mixer. `SignedFault` skips the absolute value and
/// exists purely to demonstrate (in `verify` and in tests) that doing so
/// breaks the argmax consistency; the `fault-signed-mixing` cargo feature
/// makes it the default so a whole build can be run in the broken
/// configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    Monotonic,
    SignedFault,
}

impl Default for WeightMode {
    fn default() -> Self {
        if cfg!(feature = "fault-signed-mixing") {
            WeightMode::SignedFault
        } else {
            WeightMode::Monotonic
        }
    }
}

#[inline]
fn weight_transform(x: f64, mode: WeightMode) -> f64 {
    match mode {
        WeightMode::Monotonic => x.abs(),
        WeightMode::SignedFault => x,
    }
}

#[inline]
fn weight_transform_deriv(x: f64, mode: WeightMode) -> f64 {
    match mode {
        WeightMode::Monotonic => {
            if x >= 0.0 {
                1.0
            } else {
                -1.0
            }
        }
        WeightMode::SignedFault => 1.0,
    }
}

#[derive(Debug, Clone, Copy)]
struct HyperIds {
    hidden: AffineIds,
    out: AffineIds,
}

impl HyperIds {
    fn register(
        store: &mut ParameterStore,
        name: &str,
        state_dim: usize,
        hidden: usize,
        out: usize,
    ) -> Self {
        HyperIds {
            hidden: AffineIds::register(store, &format!("{name}.hidden"), hidden, state_dim),
            out: AffineIds::register(store, &format!("{name}.out"), out, hidden),
        }
    }
}

/// Segment handles for the mixing network psi.
#[derive(Debug, Clone)]
pub struct MixerNet {
    hyper_w1: HyperIds,
    hyper_b1: HyperIds,
    hyper_w2: HyperIds,
    hyper_b2: HyperIds,
    pub state_dim: usize,
    pub mixing_dim: usize,
    pub agents: usize,
}

impl MixerNet {
    pub fn build(cfg: &RunConfig) -> (MixerNet, ParameterStore) {
        let mut store = ParameterStore::new();
        let s = cfg.state_dim();
        let m = cfg.mixing_hidden;
        let p = cfg.hypernet_hidden;
        let n = cfg.agents;
        let net = MixerNet {
            hyper_w1: HyperIds::register(&mut store, "hyper_w1", s, p, m * n),
            hyper_b1: HyperIds::register(&mut store, "hyper_b1", s, p, m),
            hyper_w2: HyperIds::register(&mut store, "hyper_w2", s, p, m),
            hyper_b2: HyperIds::register(&mut store, "hyper_b2", s, p, 1),
            state_dim: s,
            mixing_dim: m,
            agents: n,
        };
        (net, store)
    }

    /// Evaluates the four hypernetworks on one global state. The returned
    /// weights can mix any number of q-vectors for that state, which is what
    /// the brute-force argmax and the TD target both rely on.
    pub fn weights(
        &self,
        store: &ParameterStore,
        state: &GlobalState,
        mode: WeightMode,
    ) -> MixingWeights {
        assert_eq!(state.dim(), self.state_dim, "mixer: state dim mismatch");
        let eval = |ids: &HyperIds, out_dim: usize| -> HyperForward {
            let p = store.mat(ids.hidden.w).rows;
            let mut pre = vec![0.0; p];
            affine(store.mat(ids.hidden.w), store.vec(ids.hidden.b), &state.features, &mut pre);
            let act: Vec<f64> = pre.iter().map(|&x| elu(x)).collect();
            let mut out = vec![0.0; out_dim];
            affine(store.mat(ids.out.w), store.vec(ids.out.b), &act, &mut out);
            HyperForward { pre, act, out }
        };
        let m = self.mixing_dim;
        let n = self.agents;
        MixingWeights {
            w1: eval(&self.hyper_w1, m * n),
            b1: eval(&self.hyper_b1, m),
            w2: eval(&self.hyper_w2, m),
            b2: eval(&self.hyper_b2, 1),
            state: state.features.clone(),
            mixing_dim: m,
            agents: n,
            mode,
        }
    }

    /// Q_tot for one (q, s) pair under the given mode.
    pub fn mix(
        &self,
        store: &ParameterStore,
        q: &[f64],
        state: &GlobalState,
        mode: WeightMode,
    ) -> f64 {
        self.weights(store, state, mode).mix_value(q)
    }

    /// Backward through the mixing layer and all four hypernetworks.
    /// Accumulates psi gradients into `grads` and returns dL/dq.
    pub fn backward(
        &self,
        store: &ParameterStore,
        weights: &MixingWeights,
        cache: &MixCache,
        d_qtot: f64,
        grads: &mut ParameterStore,
    ) -> Vec<f64> {
        let m = self.mixing_dim;
        let n = self.agents;
        let mode = weights.mode;

        let mut d_w1_out = vec![0.0; m * n];
        let mut d_b1_out = vec![0.0; m];
        let mut d_w2_out = vec![0.0; m];
        let d_b2_out = vec![d_qtot];
        let mut dq = vec![0.0; n];
        for j in 0..m {
            let act_j = elu(cache.pre[j]);
            let w2_j = weight_transform(weights.w2.out[j], mode);
            d_w2_out[j] = d_qtot * act_j * weight_transform_deriv(weights.w2.out[j], mode);
            let d_pre = d_qtot * w2_j * elu_deriv(cache.pre[j]);
            d_b1_out[j] = d_pre;
            for i in 0..n {
                let raw = weights.w1.out[j * n + i];
                dq[i] += d_pre * weight_transform(raw, mode);
                d_w1_out[j * n + i] = d_pre * cache.q[i] * weight_transform_deriv(raw, mode);
            }
        }

        let mut hyper_backward = |ids: &HyperIds, fwd: &HyperForward, d_out: &[f64]| {
            let mut d_act = vec![0.0; fwd.act.len()];
            {
                let (dw, db) = grads.pair_mut(ids.out.w, ids.out.b);
                affine_backward(store.mat(ids.out.w), &fwd.act, d_out, dw, db, Some(&mut d_act));
            }
            let d_pre: Vec<f64> =
                d_act.iter().zip(&fwd.pre).map(|(d, &p)| d * elu_deriv(p)).collect();
            let (dw, db) = grads.pair_mut(ids.hidden.w, ids.hidden.b);
            affine_backward(store.mat(ids.hidden.w), &weights.state, &d_pre, dw, db, None);
        };
        hyper_backward(&self.hyper_w1, &weights.w1, &d_w1_out);
        hyper_backward(&self.hyper_b1, &weights.b1, &d_b1_out);
        hyper_backward(&self.hyper_w2, &weights.w2, &d_w2_out);
        hyper_backward(&self.hyper_b2, &weights.b2, &d_b2_out);
        dq
    }
}

struct HyperForward {
    pre: Vec<f64>,
    act: Vec<f64>,
    out: Vec<f64>,
}

/// State-conditioned mixing parameters, reusable across q-vectors.
pub struct MixingWeights {
    w1: HyperForward,
    b1: HyperForward,
    w2: HyperForward,
    b2: HyperForward,
    state: Vec<f64>,
    mixing_dim: usize,
    agents: usize,
    mode: WeightMode,
}

/// Mixing-layer intermediates needed by the backward pass.
pub struct MixCache {
    pre: Vec<f64>,
    q: Vec<f64>,
}

impl MixingWeights {
    /// Q_tot = |W2| . ELU(|W1| q + b1) + b2.
    pub fn mix_value(&self, q: &[f64]) -> f64 {
        assert_eq!(q.len(), self.agents, "mix: q length mismatch");
        let mut total = self.b2.out[0];
        for j in 0..self.mixing_dim {
            let mut pre = self.b1.out[j];
            for (i, &qi) in q.iter().enumerate() {
                pre += weight_transform(self.w1.out[j * self.agents + i], self.mode) * qi;
            }
            total += weight_transform(self.w2.out[j], self.mode) * elu(pre);
        }
        total
    }

    /// Q_tot plus the cache for [`MixerNet::backward`].
    pub fn mix(&self, q: &[f64]) -> (f64, MixCache) {
        assert_eq!(q.len(), self.agents, "mix: q length mismatch");
        let mut pre = vec![0.0; self.mixing_dim];
        let mut total = self.b2.out[0];
        for j in 0..self.mixing_dim {
            let mut p = self.b1.out[j];
            for (i, &qi) in q.iter().enumerate() {
                p += weight_transform(self.w1.out[j * self.agents + i], self.mode) * qi;
            }
            pre[j] = p;
            total += weight_transform(self.w2.out[j], self.mode) * elu(p);
        }
        (total, MixCache { pre, q: q.to_vec() })
    }
}

/// Per-agent argmax with lowest-index tie-break: the decentralized greedy
/// joint action.
pub fn decentralized_argmax(q_tables: &[Vec<f64>]) -> JointAction {
    JointAction(
        q_tables
            .iter()
            .map(|q| {
                assert_eq!(q.len(), NUM_ACTIONS);
                CommAction::from_code(argmax(q)).unwrap()
            })
            .collect(),
    )
}

/// Exhaustive argmax of Q_tot over all 6^N joint actions, lowest
/// lexicographic tie-break. This is the test oracle for argmax consistency;
/// the training path never enumerates jointly.
pub fn joint_bruteforce_argmax(
    q_tables: &[Vec<f64>],
    weights: &MixingWeights,
) -> Result<JointAction> {
    let n = q_tables.len();
    if n > 6 {
        return Err(Error::Enumeration(format!(
            "joint argmax over 6^{n} actions refused (limit N <= 6)"
        )));
    }
    let mut codes = vec![0usize; n];
    let mut best_codes = codes.clone();
    let mut best = f64::NEG_INFINITY;
    let mut q_sel = vec![0.0; n];
    loop {
        for i in 0..n {
            q_sel[i] = q_tables[i][codes[i]];
        }
        let value = weights.mix_value(&q_sel);
        if value > best {
            best = value;
            best_codes.copy_from_slice(&codes);
        }
        let mut pos = n;
        loop {
            if pos == 0 {
                let actions =
                    best_codes.iter().map(|&c| CommAction::from_code(c).unwrap()).collect();
                return Ok(JointAction(actions));
            }
            pos -= 1;
            codes[pos] += 1;
            if codes[pos] < NUM_ACTIONS {
                break;
            }
            codes[pos] = 0;
        }
    }
}

// ---------------------------------------------------------------------------
// TD loss
// ---------------------------------------------------------------------------

/// Bootstrapped regression targets for one episode, computed entirely on the
/// target networks: y_t = gamma * Q_tot(max) at t+1 for t < T, y_T = R.
/// The max at t+1 is the per-agent argmax (licensed by the monotone mixer).
pub fn td_targets(
    episode: &Episode,
    net: &AgentNet,
    mixer: &MixerNet,
    target_agent: &ParameterStore,
    target_mixer: &ParameterStore,
    gamma: f64,
    mode: WeightMode,
) -> Vec<f64> {
    let rounds = episode.len();
    assert!(rounds > 0, "empty episode");
    let n = episode.rounds[0].observations.len();
    let mut q_tot_max = vec![0.0; rounds];
    let mut z = net.initial_temporal_state(n);
    for (t, round) in episode.rounds.iter().enumerate() {
        let graph = episode.message_graph(t);
        let fwd = forward_round(net, target_agent, &round.observations, &graph, &z);
        let q_max: Vec<f64> = fwd.q.iter().map(|q| q[argmax(q)]).collect();
        let weights = mixer.weights(target_mixer, &round.global_state, mode);
        q_tot_max[t] = weights.mix_value(&q_max);
        z = fwd.z;
    }
    (0..rounds)
        .map(|t| {
            if t + 1 == rounds {
                episode.reward
            } else {
                gamma * q_tot_max[t + 1]
            }
        })
        .collect()
}

/// Mean squared TD error over the batch, with gradients for theta and psi
/// accumulated into `grad_agent` / `grad_mixer` (which are zeroed first).
///
/// Each episode is replayed from z_0 = 0 through the online networks;
/// gradients flow from the mixer through the Q-heads, the temporal GRU
/// (through time), and the GNN stack.
pub fn td_loss(
    batch: &[&Episode],
    net: &AgentNet,
    mixer: &MixerNet,
    online_agent: &ParameterStore,
    online_mixer: &ParameterStore,
    target_agent: &ParameterStore,
    target_mixer: &ParameterStore,
    gamma: f64,
    mode: WeightMode,
    grad_agent: &mut ParameterStore,
    grad_mixer: &mut ParameterStore,
) -> f64 {
    assert!(!batch.is_empty(), "td_loss: empty batch");
    grad_agent.zero();
    grad_mixer.zero();

    let total_terms: usize = batch.iter().map(|e| e.len()).sum();
    let scale = 1.0 / total_terms as f64;
    let mut loss = 0.0;

    for episode in batch {
        let rounds = episode.len();
        let n = episode.rounds[0].observations.len();
        let targets =
            td_targets(episode, net, mixer, target_agent, target_mixer, gamma, mode);

        // online forward, keeping every cache for the reverse sweep
        let mut forwards: Vec<RoundForward> = Vec::with_capacity(rounds);
        let mut mix_weights = Vec::with_capacity(rounds);
        let mut mix_caches = Vec::with_capacity(rounds);
        let mut q_tot = vec![0.0; rounds];
        let mut z = net.initial_temporal_state(n);
        for (t, round) in episode.rounds.iter().enumerate() {
            let graph = episode.message_graph(t);
            let fwd = forward_round(net, online_agent, &round.observations, &graph, &z);
            let q_taken: Vec<f64> = fwd
                .q
                .iter()
                .zip(round.joint_action.actions())
                .map(|(q, &a)| q[a.code()])
                .collect();
            let weights = mixer.weights(online_mixer, &round.global_state, mode);
            let (tot, cache) = weights.mix(&q_taken);
            q_tot[t] = tot;
            z = fwd.z.clone();
            forwards.push(fwd);
            mix_weights.push(weights);
            mix_caches.push(cache);
        }

        for t in 0..rounds {
            let err = q_tot[t] - targets[t];
            loss += scale * err * err;
        }

        // reverse sweep with the temporal carry
        let mut dz_future = vec![vec![0.0; net.hidden]; n];
        for t in (0..rounds).rev() {
            let d_qtot = 2.0 * scale * (q_tot[t] - targets[t]);
            let dq_taken = mixer.backward(
                online_mixer,
                &mix_weights[t],
                &mix_caches[t],
                d_qtot,
                grad_mixer,
            );
            let mut dq = vec![vec![0.0; NUM_ACTIONS]; n];
            for (i, &a) in episode.rounds[t].joint_action.actions().iter().enumerate() {
                dq[i][a.code()] = dq_taken[i];
            }
            dz_future = backward_round(
                net,
                online_agent,
                &forwards[t],
                &dq,
                &dz_future,
                grad_agent,
            );
        }
    }
    loss
}
