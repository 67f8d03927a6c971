//! Training loop: episode rollout, replay, epsilon schedule, batched TD
//! updates with global-norm clipping, periodic target sync, and binary
//! checkpoints that capture enough state (parameters, optimizer moments,
//! RNG, replay buffer) to resume bit-exactly.

use std::collections::VecDeque;
use std::path::Path;

use crate::config::{EnvConfig, RunConfig, NUM_ACTIONS};
use crate::domain::{
    active_agents, encode_global_state, encode_observation, CommGraph, Episode, JointAction,
    Observation, RoundRecord,
};
use crate::env::{self, TaskSpec};
use crate::error::{Error, Result};
use crate::metrics::MetricsRecord;
use crate::mixer::{td_loss, MixerNet, WeightMode};
use crate::numerics::{adam_step, clip_global_norm, AdamState, ParameterStore, SeededRng};
use crate::qnet::{forward_round, select_actions, AgentNet};
use crate::topology::{action_to_adjacency, execution_order};

/// FIFO ring of episodes.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    episodes: VecDeque<Episode>,
    capacity: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer { episodes: VecDeque::with_capacity(capacity), capacity, inserted: 0 }
    }

    pub fn push(&mut self, episode: Episode) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn get(&self, index: usize) -> &Episode {
        &self.episodes[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Episode> {
        self.episodes.iter()
    }

    /// `batch` distinct indices, uniform without replacement (partial
    /// Fisher-Yates).
    pub fn sample_indices(&self, batch: usize, rng: &mut SeededRng) -> Vec<usize> {
        assert!(batch <= self.len(), "cannot sample {batch} of {}", self.len());
        let mut indices: Vec<usize> = (0..self.len()).collect();
        for i in 0..batch {
            let j = i + rng.gen_range(self.len() - i);
            indices.swap(i, j);
        }
        indices.truncate(batch);
        indices
    }
}

/// Linear anneal from `start` (episode 0) to `end` (final episode).
pub fn epsilon_schedule(episode_index: usize, total_episodes: usize, start: f64, end: f64) -> f64 {
    assert!(episode_index < total_episodes.max(1), "episode index past the schedule");
    if total_episodes <= 1 {
        return start;
    }
    let frac = episode_index as f64 / (total_episodes - 1) as f64;
    // two-sided form is exact at both endpoints
    start * (1.0 - frac) + end * frac
}

/// Per-episode rollout summary, for metrics and evaluation reports.
#[derive(Debug, Clone)]
pub struct EpisodeStats {
    pub accuracy: f64,
    pub tokens: f64,
    pub reward: f64,
    pub action_counts: [u64; NUM_ACTIONS],
    pub round_densities: Vec<f64>,
    /// Executed graphs, one per round.
    pub graphs: Vec<CommGraph>,
}

impl EpisodeStats {
    pub fn mean_density(&self) -> f64 {
        self.round_densities.iter().sum::<f64>() / self.round_densities.len() as f64
    }
}

/// Rolls out one episode with epsilon-greedy decentralized execution.
///
/// Per round: observations come from the current message graph (identity at
/// round 1), the network picks the joint action, the induced graph is
/// executed through the environment, and the global state is recorded from
/// that induced graph. The terminal reward lands on the returned episode.
pub fn run_episode(
    net: &AgentNet,
    agent_store: &ParameterStore,
    cfg: &RunConfig,
    env_cfg: &EnvConfig,
    task: &TaskSpec,
    epsilon: f64,
    rng: &mut SeededRng,
) -> (Episode, EpisodeStats) {
    let n = cfg.agents;
    assert_eq!(task.agents(), n, "task agent count mismatch");
    let (mut env_state, features) = env::reset(task, env_cfg, rng);
    let mut message_graph = CommGraph::identity(n);
    let mut z = net.initial_temporal_state(n);
    let mut prev: Option<JointAction> = None;
    let mut rounds = Vec::with_capacity(cfg.rounds);
    let mut action_counts = [0u64; NUM_ACTIONS];
    let mut round_densities = Vec::with_capacity(cfg.rounds);
    let mut graphs = Vec::with_capacity(cfg.rounds);

    for t in 1..=cfg.rounds {
        let observations: Vec<Observation> = (0..n)
            .map(|i| {
                encode_observation(
                    cfg,
                    i,
                    t,
                    prev.as_ref().map(|j| j.actions()[i]),
                    &message_graph,
                    env_state.tokens,
                    &features[i],
                )
                .expect("trainer validated the feature layout")
            })
            .collect();
        let fwd = forward_round(net, agent_store, &observations, &message_graph, &z);
        let joint = select_actions(&fwd.q, epsilon, rng);
        z = fwd.z;
        for &a in joint.actions() {
            action_counts[a.code()] += 1;
        }
        let exec_graph = action_to_adjacency(&joint, n);
        let state = encode_global_state(cfg, &observations, &exec_graph, active_agents(n, prev.as_ref()))
            .expect("observation count matches agent count");
        let order = execution_order(&exec_graph);
        env::propagate(&mut env_state, &exec_graph, &order, task, env_cfg);
        round_densities.push(exec_graph.density());
        graphs.push(exec_graph.clone());
        message_graph = exec_graph.clone();
        rounds.push(RoundRecord {
            observations,
            joint_action: joint.clone(),
            graph: exec_graph,
            global_state: state,
        });
        prev = Some(joint);
    }

    let (accuracy, tokens) = env::finish(&env_state, task);
    let reward = env::reward(accuracy, tokens, cfg.w_acc, cfg.w_tok, cfg.max_tokens);
    let stats =
        EpisodeStats { accuracy, tokens, reward, action_counts, round_densities, graphs };
    (Episode { rounds, reward }, stats)
}

/// Everything that trains: online and target parameters, optimizer state,
/// replay buffer, RNG, and counters.
#[derive(Debug)]
pub struct Trainer {
    pub cfg: RunConfig,
    pub env_cfg: EnvConfig,
    pub suite: Vec<TaskSpec>,
    pub net: AgentNet,
    pub mixer: MixerNet,
    pub online_agent: ParameterStore,
    pub online_mixer: ParameterStore,
    pub target_agent: ParameterStore,
    pub target_mixer: ParameterStore,
    grad_agent: ParameterStore,
    grad_mixer: ParameterStore,
    pub adam_agent: AdamState,
    pub adam_mixer: AdamState,
    pub buffer: ReplayBuffer,
    pub rng: SeededRng,
    pub grad_steps: u64,
    pub episodes_done: u64,
    pub mode: WeightMode,
}

impl Trainer {
    /// Fresh trainer with Xavier-initialized online networks (targets start
    /// as copies). All randomness derives from `cfg.seed`.
    pub fn new(cfg: RunConfig, env_cfg: EnvConfig, suite: Vec<TaskSpec>) -> Result<Trainer> {
        cfg.validate()?;
        env_cfg.validate()?;
        Self::validate_suite(&cfg, &suite)?;
        let (net, mut online_agent) = AgentNet::build(&cfg);
        let (mixer, mut online_mixer) = MixerNet::build(&cfg);
        let mut rng = SeededRng::new(cfg.seed);
        online_agent.init_xavier(&mut rng);
        online_mixer.init_xavier(&mut rng);
        let target_agent = online_agent.clone();
        let target_mixer = online_mixer.clone();
        let grad_agent = online_agent.zeros_like();
        let grad_mixer = online_mixer.zeros_like();
        let adam_agent = AdamState::new(&online_agent);
        let adam_mixer = AdamState::new(&online_mixer);
        let buffer = ReplayBuffer::new(cfg.buffer_capacity);
        Ok(Trainer {
            cfg,
            env_cfg,
            suite,
            net,
            mixer,
            online_agent,
            online_mixer,
            target_agent,
            target_mixer,
            grad_agent,
            grad_mixer,
            adam_agent,
            adam_mixer,
            buffer,
            rng,
            grad_steps: 0,
            episodes_done: 0,
            mode: WeightMode::default(),
        })
    }

    fn validate_suite(cfg: &RunConfig, suite: &[TaskSpec]) -> Result<()> {
        if cfg.task_features != env::task_feature_len(cfg.agents) {
            return Err(Error::Config(format!(
                "task_features = {} does not match the environment layout ({})",
                cfg.task_features,
                env::task_feature_len(cfg.agents)
            )));
        }
        if suite.is_empty() {
            return Err(Error::Config("task suite is empty".into()));
        }
        for (i, task) in suite.iter().enumerate() {
            if task.agents() != cfg.agents {
                return Err(Error::Config(format!(
                    "task {i} has {} agents but the config expects {}",
                    task.agents(),
                    cfg.agents
                )));
            }
        }
        Ok(())
    }

    /// Replaces the task suite (used after loading a checkpoint, which does
    /// not serialize tasks).
    pub fn set_suite(&mut self, suite: Vec<TaskSpec>) -> Result<()> {
        Self::validate_suite(&self.cfg, &suite)?;
        self.suite = suite;
        Ok(())
    }

    pub fn epsilon(&self) -> f64 {
        epsilon_schedule(
            (self.episodes_done as usize).min(self.cfg.episodes.saturating_sub(1)),
            self.cfg.episodes,
            self.cfg.epsilon_start,
            self.cfg.epsilon_end,
        )
    }

    /// One full training episode: rollout, buffer insert, and (once the
    /// buffer holds a batch) one gradient step.
    ///
    /// RNG draw order per episode, which checkpointing relies on: task
    /// index, adversary coin (then slot when it hits), reset reliability
    /// flags, per-round per-agent exploration draws, then batch-sampling
    /// draws when a step fires.
    pub fn train_episode(&mut self) -> Result<MetricsRecord> {
        assert!(!self.suite.is_empty(), "trainer has no task suite");
        let epsilon = self.epsilon();
        let task_index = self.rng.gen_range(self.suite.len());
        let mut task = self.suite[task_index].clone();
        if self.env_cfg.adversary_prob > 0.0
            && self.rng.next_f64() < self.env_cfg.adversary_prob
        {
            let slot = self.rng.gen_range(self.cfg.agents);
            task = task.with_adversary(slot);
        }
        let (episode, stats) = run_episode(
            &self.net,
            &self.online_agent,
            &self.cfg,
            &self.env_cfg,
            &task,
            epsilon,
            &mut self.rng,
        );
        self.buffer.push(episode);
        let loss = if self.buffer.len() >= self.cfg.batch_size {
            self.train_step()?
        } else {
            0.0
        };
        let record = MetricsRecord {
            episode: self.episodes_done,
            epsilon,
            reward: stats.reward,
            accuracy: stats.accuracy,
            tokens_used: stats.tokens,
            td_loss: loss,
            action_counts: stats.action_counts,
            mean_density: stats.mean_density(),
        };
        self.episodes_done += 1;
        Ok(record)
    }

    /// One batched TD update: sample, backprop, clip jointly across theta
    /// and psi, Adam both stores, and sync targets on the interval.
    pub fn train_step(&mut self) -> Result<f64> {
        let indices = self.buffer.sample_indices(self.cfg.batch_size, &mut self.rng);
        let batch: Vec<&Episode> = indices.iter().map(|&i| self.buffer.get(i)).collect();
        let loss = td_loss(
            &batch,
            &self.net,
            &self.mixer,
            &self.online_agent,
            &self.online_mixer,
            &self.target_agent,
            &self.target_mixer,
            self.cfg.gamma,
            self.mode,
            &mut self.grad_agent,
            &mut self.grad_mixer,
        );
        if !loss.is_finite() {
            let rewards: Vec<f64> = batch.iter().map(|e| e.reward).collect();
            return Err(Error::Train(format!(
                "non-finite TD loss {loss}; batch indices {indices:?}, rewards {rewards:?}"
            )));
        }
        clip_global_norm(
            &mut [self.grad_agent.data_mut(), self.grad_mixer.data_mut()],
            self.cfg.grad_clip_norm,
        );
        adam_step(
            &mut self.online_agent,
            &self.grad_agent,
            &mut self.adam_agent,
            self.cfg.learning_rate,
        )?;
        adam_step(
            &mut self.online_mixer,
            &self.grad_mixer,
            &mut self.adam_mixer,
            self.cfg.learning_rate,
        )?;
        self.grad_steps += 1;
        if self.grad_steps % self.cfg.target_update_interval == 0 {
            self.target_agent.copy_from(&self.online_agent);
            self.target_mixer.copy_from(&self.online_mixer);
        }
        Ok(loss)
    }

    /// Runs episodes until the configured count, invoking `on_record` after
    /// each one.
    pub fn train<F: FnMut(&MetricsRecord) -> Result<()>>(&mut self, mut on_record: F) -> Result<()> {
        while self.episodes_done < self.cfg.episodes as u64 {
            let record = self.train_episode()?;
            on_record(&record)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------
//
// Little-endian binary, documented layout (see README):
//
//   magic "AQMX" | version u32
//   u32 x 8: agents, rounds, obs_dim, task_features, hidden_dim, gnn_layers,
//            mixing_hidden, hypernet_hidden
//   u64 x 5: episodes, buffer_capacity, batch_size, target_update_interval,
//            checkpoint_interval
//   u64 x 5: seed, grad_steps, episodes_done, adam_agent_step, adam_mixer_step
//   f64 x 12: learning_rate, gamma, grad_clip_norm, epsilon_start,
//             epsilon_end, w_acc, w_tok, max_tokens, base_tokens,
//             edge_tokens, reliability_rho, adversary_prob
//   u64 x 4: RNG state
//   8 parameter stores in fixed order (online_agent, online_mixer,
//   target_agent, target_mixer, adam m/v for agent then mixer), each:
//     u32 segment count, then per segment: u32 name length, name bytes,
//     u32 rows, u32 cols, rows*cols f64
//   replay buffer: u64 inserted, u32 episode count, then per episode:
//     f64 reward, u32 rounds, per round: N*D obs f64, N action bytes,
//     N*N adjacency bytes, state f64
//
// Loading rebuilds the network layouts from the header and refuses any
// checkpoint whose segment names or shapes disagree with them.

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AQMX";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }
    fn store(&mut self, store: &ParameterStore) {
        self.u32(store.num_segments() as u32);
        for id in store.segment_ids() {
            let name = store.segment_name(id).as_bytes();
            self.u32(name.len() as u32);
            self.bytes(name);
            let (rows, cols) = store.segment_shape(id);
            self.u32(rows as u32);
            self.u32(cols as u32);
            for &x in store.vec(id) {
                self.f64(x);
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.pos + len > self.buf.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }

    /// Reads one store section into `store`, refusing on any layout
    /// difference.
    fn store_into(&mut self, store: &mut ParameterStore, which: &str) -> Result<()> {
        let count = self.u32()? as usize;
        if count != store.num_segments() {
            return Err(Error::Checkpoint(format!(
                "{which}: {count} segments in file, expected {}",
                store.num_segments()
            )));
        }
        for id in store.segment_ids().collect::<Vec<_>>() {
            let name_len = self.u32()? as usize;
            let name = String::from_utf8(self.take(name_len)?.to_vec())
                .map_err(|_| Error::Checkpoint(format!("{which}: bad segment name")))?;
            if name != store.segment_name(id) {
                return Err(Error::Checkpoint(format!(
                    "{which}: segment `{name}` does not match layout `{}`",
                    store.segment_name(id)
                )));
            }
            let rows = self.u32()? as usize;
            let cols = self.u32()? as usize;
            if (rows, cols) != store.segment_shape(id) {
                return Err(Error::Checkpoint(format!(
                    "{which}: segment `{name}` has shape {rows}x{cols}, expected {:?}",
                    store.segment_shape(id)
                )));
            }
            for x in store.vec_mut(id) {
                *x = self.f64()?;
            }
        }
        Ok(())
    }
}

pub fn save_checkpoint(trainer: &Trainer, path: &Path) -> Result<()> {
    let cfg = &trainer.cfg;
    let mut w = Writer::new();
    w.bytes(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    for v in [
        cfg.agents,
        cfg.rounds,
        cfg.obs_dim(),
        cfg.task_features,
        cfg.hidden_dim,
        cfg.gnn_layers,
        cfg.mixing_hidden,
        cfg.hypernet_hidden,
    ] {
        w.u32(v as u32);
    }
    for v in [
        cfg.episodes as u64,
        cfg.buffer_capacity as u64,
        cfg.batch_size as u64,
        cfg.target_update_interval,
        cfg.checkpoint_interval as u64,
    ] {
        w.u64(v);
    }
    for v in [
        cfg.seed,
        trainer.grad_steps,
        trainer.episodes_done,
        trainer.adam_agent.step,
        trainer.adam_mixer.step,
    ] {
        w.u64(v);
    }
    for v in [
        cfg.learning_rate,
        cfg.gamma,
        cfg.grad_clip_norm,
        cfg.epsilon_start,
        cfg.epsilon_end,
        cfg.w_acc,
        cfg.w_tok,
        cfg.max_tokens,
        trainer.env_cfg.base_tokens,
        trainer.env_cfg.edge_tokens,
        trainer.env_cfg.reliability_rho,
        trainer.env_cfg.adversary_prob,
    ] {
        w.f64(v);
    }
    for word in trainer.rng.state() {
        w.u64(word);
    }
    for store in [
        &trainer.online_agent,
        &trainer.online_mixer,
        &trainer.target_agent,
        &trainer.target_mixer,
        &trainer.adam_agent.m,
        &trainer.adam_agent.v,
        &trainer.adam_mixer.m,
        &trainer.adam_mixer.v,
    ] {
        w.store(store);
    }
    w.u64(trainer.buffer.inserted());
    w.u32(trainer.buffer.len() as u32);
    let n = cfg.agents;
    for episode in trainer.buffer.iter() {
        w.f64(episode.reward);
        w.u32(episode.len() as u32);
        for round in &episode.rounds {
            for obs in &round.observations {
                for &x in &obs.features {
                    w.f64(x);
                }
            }
            for &a in round.joint_action.actions() {
                w.buf.push(a.code() as u8);
            }
            w.bytes(&round.graph.to_bytes());
            debug_assert_eq!(round.graph.n(), n);
            for &x in &round.global_state.features {
                w.f64(x);
            }
        }
    }
    std::fs::write(path, &w.buf)?;
    Ok(())
}

/// Restores a trainer from a checkpoint. The task suite is not serialized;
/// call [`Trainer::set_suite`] before resuming training.
pub fn load_checkpoint(path: &Path) -> Result<Trainer> {
    let data = std::fs::read(path)
        .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
    let mut r = Reader::new(&data);
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let agents = r.u32()? as usize;
    let rounds = r.u32()? as usize;
    let obs_dim = r.u32()? as usize;
    let task_features = r.u32()? as usize;
    let hidden_dim = r.u32()? as usize;
    let gnn_layers = r.u32()? as usize;
    let mixing_hidden = r.u32()? as usize;
    let hypernet_hidden = r.u32()? as usize;

    let episodes = r.u64()? as usize;
    let buffer_capacity = r.u64()? as usize;
    let batch_size = r.u64()? as usize;
    let target_update_interval = r.u64()?;
    let checkpoint_interval = r.u64()? as usize;

    let seed = r.u64()?;
    let grad_steps = r.u64()?;
    let episodes_done = r.u64()?;
    let adam_agent_step = r.u64()?;
    let adam_mixer_step = r.u64()?;

    let mut cfg = RunConfig::new(agents.max(2), rounds.max(1));
    cfg.agents = agents;
    cfg.rounds = rounds;
    cfg.task_features = task_features;
    cfg.hidden_dim = hidden_dim;
    cfg.gnn_layers = gnn_layers;
    cfg.mixing_hidden = mixing_hidden;
    cfg.hypernet_hidden = hypernet_hidden;
    cfg.episodes = episodes;
    cfg.buffer_capacity = buffer_capacity;
    cfg.batch_size = batch_size;
    cfg.target_update_interval = target_update_interval;
    cfg.checkpoint_interval = checkpoint_interval;
    cfg.seed = seed;
    cfg.learning_rate = r.f64()?;
    cfg.gamma = r.f64()?;
    cfg.grad_clip_norm = r.f64()?;
    cfg.epsilon_start = r.f64()?;
    cfg.epsilon_end = r.f64()?;
    cfg.w_acc = r.f64()?;
    cfg.w_tok = r.f64()?;
    cfg.max_tokens = r.f64()?;
    let env_cfg = EnvConfig {
        base_tokens: r.f64()?,
        edge_tokens: r.f64()?,
        reliability_rho: r.f64()?,
        adversary_prob: r.f64()?,
    };
    cfg.validate().map_err(|e| Error::Checkpoint(format!("invalid header: {e}")))?;
    env_cfg.validate().map_err(|e| Error::Checkpoint(format!("invalid header: {e}")))?;
    if cfg.obs_dim() != obs_dim {
        return Err(Error::Checkpoint(format!(
            "header observation dim {obs_dim} does not match derived {}",
            cfg.obs_dim()
        )));
    }

    let rng_state = [r.u64()?, r.u64()?, r.u64()?, r.u64()?];

    let (net, mut online_agent) = AgentNet::build(&cfg);
    let (mixer, mut online_mixer) = MixerNet::build(&cfg);
    let mut target_agent = online_agent.zeros_like();
    let mut target_mixer = online_mixer.zeros_like();
    let mut adam_agent = AdamState::new(&online_agent);
    let mut adam_mixer = AdamState::new(&online_mixer);
    r.store_into(&mut online_agent, "online_agent")?;
    r.store_into(&mut online_mixer, "online_mixer")?;
    r.store_into(&mut target_agent, "target_agent")?;
    r.store_into(&mut target_mixer, "target_mixer")?;
    r.store_into(&mut adam_agent.m, "adam_agent.m")?;
    r.store_into(&mut adam_agent.v, "adam_agent.v")?;
    r.store_into(&mut adam_mixer.m, "adam_mixer.m")?;
    r.store_into(&mut adam_mixer.v, "adam_mixer.v")?;
    adam_agent.step = adam_agent_step;
    adam_mixer.step = adam_mixer_step;

    let inserted = r.u64()?;
    let count = r.u32()? as usize;
    let mut buffer = ReplayBuffer::new(buffer_capacity);
    let state_dim = cfg.state_dim();
    for _ in 0..count {
        let reward = r.f64()?;
        let ep_rounds = r.u32()? as usize;
        if ep_rounds != rounds {
            return Err(Error::Checkpoint(format!(
                "buffered episode has {ep_rounds} rounds, expected {rounds}"
            )));
        }
        let mut recs = Vec::with_capacity(ep_rounds);
        for _ in 0..ep_rounds {
            let mut observations = Vec::with_capacity(agents);
            for _ in 0..agents {
                let mut features = Vec::with_capacity(obs_dim);
                for _ in 0..obs_dim {
                    features.push(r.f64()?);
                }
                observations.push(Observation { features });
            }
            let mut actions = Vec::with_capacity(agents);
            for &b in r.take(agents)? {
                let action = crate::domain::CommAction::from_code(b as usize).ok_or_else(
                    || Error::Checkpoint(format!("invalid action code {b} in buffer")),
                )?;
                actions.push(action);
            }
            let graph = CommGraph::from_bytes(agents, r.take(agents * agents)?)
                .map_err(|e| Error::Checkpoint(format!("buffered graph: {e}")))?;
            let mut features = Vec::with_capacity(state_dim);
            for _ in 0..state_dim {
                features.push(r.f64()?);
            }
            recs.push(RoundRecord {
                observations,
                joint_action: JointAction(actions),
                graph,
                global_state: crate::domain::GlobalState { features },
            });
        }
        buffer.push(Episode { rounds: recs, reward });
    }
    buffer.inserted = inserted;
    if !r.done() {
        return Err(Error::Checkpoint("trailing bytes after checkpoint payload".into()));
    }

    let grad_agent = online_agent.zeros_like();
    let grad_mixer = online_mixer.zeros_like();
    Ok(Trainer {
        cfg,
        env_cfg,
        suite: Vec::new(),
        net,
        mixer,
        online_agent,
        online_mixer,
        target_agent,
        target_mixer,
        grad_agent,
        grad_mixer,
        adam_agent,
        adam_mixer,
        buffer,
        rng: SeededRng::from_state(rng_state),
        grad_steps,
        episodes_done,
        mode: WeightMode::default(),
    })
}
