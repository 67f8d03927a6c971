//! Core domain types: communication actions, the round graph, observation
//! and global-state encodings, and the episode record used for replay.

use crate::config::{RunConfig, NUM_ACTIONS};
use crate::error::{Error, Result};

/// The six discrete communication choices available to every agent each
/// round. The integer code doubles as the Q-head output index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum CommAction {
    /// Work independently; no outgoing edges.
    SoloProcess = 0,
    /// Send to all other agents.
    BroadcastAll = 1,
    /// Targeted query to one neighbor (the next agent).
    SelectiveQuery = 2,
    /// Collect responses from all others through incoming edges.
    AggregateRefine = 3,
    /// Forward own output to the next agent.
    ExecuteVerify = 4,
    /// Mutual exchange with one partner (the next agent).
    DebateCheck = 5,
}

pub const ALL_ACTIONS: [CommAction; NUM_ACTIONS] = [
    CommAction::SoloProcess,
    CommAction::BroadcastAll,
    CommAction::SelectiveQuery,
    CommAction::AggregateRefine,
    CommAction::ExecuteVerify,
    CommAction::DebateCheck,
];

impl CommAction {
    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<CommAction> {
        ALL_ACTIONS.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            CommAction::SoloProcess => "solo_process",
            CommAction::BroadcastAll => "broadcast_all",
            CommAction::SelectiveQuery => "selective_query",
            CommAction::AggregateRefine => "aggregate_refine",
            CommAction::ExecuteVerify => "execute_verify",
            CommAction::DebateCheck => "debate_check",
        }
    }
}

impl std::fmt::Display for CommAction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One communication action per agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointAction(pub Vec<CommAction>);

impl JointAction {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn actions(&self) -> &[CommAction] {
        &self.0
    }
}

/// Directed communication graph over `n` agents. Self-loops are always
/// present and never counted as edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommGraph {
    n: usize,
    adj: Vec<bool>, // row-major: adj[i * n + j] == edge i -> j
}

impl CommGraph {
    /// The identity graph (self-loops only): the no-communication baseline.
    pub fn identity(n: usize) -> Self {
        assert!(n >= 1);
        let mut adj = vec![false; n * n];
        for i in 0..n {
            adj[i * n + i] = true;
        }
        CommGraph { n, adj }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.adj[from * self.n + to]
    }

    /// Adds a directed edge. Self-loops are already present.
    pub fn add_edge(&mut self, from: usize, to: usize) {
        assert!(from < self.n && to < self.n, "edge endpoint out of range");
        self.adj[from * self.n + to] = true;
    }

    /// Non-self directed edges, ascending by (from, to).
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j && self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Number of non-self edges, in `[0, n(n-1)]`.
    pub fn edge_count(&self) -> usize {
        let mut count = 0;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j && self.has_edge(i, j) {
                    count += 1;
                }
            }
        }
        count
    }

    /// edge_count / (n(n-1)), self-loops excluded.
    pub fn density(&self) -> f64 {
        self.edge_count() as f64 / (self.n * (self.n - 1)) as f64
    }

    /// Non-self in-degree of `node`.
    pub fn in_degree(&self, node: usize) -> usize {
        (0..self.n).filter(|&u| u != node && self.has_edge(u, node)).count()
    }

    /// Non-self out-degree of `node`.
    pub fn out_degree(&self, node: usize) -> usize {
        (0..self.n).filter(|&v| v != node && self.has_edge(node, v)).count()
    }

    /// In-neighbors of `node` including itself (self-loops always present),
    /// ascending.
    pub fn in_neighbors_with_self(&self, node: usize) -> Vec<usize> {
        (0..self.n).filter(|&u| self.has_edge(u, node)).collect()
    }

    /// Row-major adjacency bytes, for serialization.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.adj.iter().map(|&b| b as u8).collect()
    }

    pub fn from_bytes(n: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != n * n {
            return Err(Error::Data(format!(
                "adjacency byte length {} does not match n = {n}",
                bytes.len()
            )));
        }
        let mut g = CommGraph::identity(n);
        for i in 0..n {
            for j in 0..n {
                if bytes[i * n + j] != 0 {
                    g.adj[i * n + j] = true;
                }
            }
        }
        for i in 0..n {
            if bytes[i * n + i] == 0 {
                return Err(Error::Data(format!("missing self-loop on agent {i}")));
            }
        }
        Ok(g)
    }
}

/// Per-agent feature vector x_t^i.
///
/// Layout (dimension `D = N + 1 + 6 + 2 + 1 + F`):
///
/// ```text
/// [one-hot agent id (N)]
/// [round index t / T (1)]
/// [one-hot previous own action; all-zero at round 1 (6)]
/// [in-degree/(N-1), out-degree/(N-1) in the current graph (2)]
/// [cumulative tokens / max_tokens, clipped to [0,1] (1)]
/// [environment task features (F)]
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub features: Vec<f64>,
}

impl Observation {
    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// Builds the observation of `agent_id` at 1-based `round`.
///
/// `graph` is the round's current graph (identity at round 1);
/// `prev_action` is the agent's own action from the previous round and must
/// be `None` exactly at round 1.
pub fn encode_observation(
    cfg: &RunConfig,
    agent_id: usize,
    round: usize,
    prev_action: Option<CommAction>,
    graph: &CommGraph,
    tokens_so_far: f64,
    task_features: &[f64],
) -> Result<Observation> {
    let n = cfg.agents;
    assert!(agent_id < n, "agent_id {agent_id} out of range");
    assert!(round >= 1 && round <= cfg.rounds, "round {round} out of range");
    assert_eq!(graph.n(), n, "graph size mismatch");
    assert_eq!(prev_action.is_none(), round == 1, "prev_action set iff round > 1");
    if task_features.len() != cfg.task_features {
        return Err(Error::Config(format!(
            "task feature length {} does not match configured F = {}",
            task_features.len(),
            cfg.task_features
        )));
    }
    let mut f = Vec::with_capacity(cfg.obs_dim());
    for i in 0..n {
        f.push(if i == agent_id { 1.0 } else { 0.0 });
    }
    f.push(round as f64 / cfg.rounds as f64);
    let prev_code = prev_action.map(CommAction::code);
    for a in 0..NUM_ACTIONS {
        f.push(if prev_code == Some(a) { 1.0 } else { 0.0 });
    }
    let denom = (n - 1) as f64;
    f.push(graph.in_degree(agent_id) as f64 / denom);
    f.push(graph.out_degree(agent_id) as f64 / denom);
    f.push((tokens_so_far / cfg.max_tokens).clamp(0.0, 1.0));
    f.extend_from_slice(task_features);
    debug_assert_eq!(f.len(), cfg.obs_dim());
    Ok(Observation { features: f })
}

/// Recovers the agent id from the leading one-hot block.
pub fn decode_agent_id(cfg: &RunConfig, obs: &Observation) -> Option<usize> {
    let block = &obs.features[..cfg.agents];
    let ones: Vec<usize> =
        block.iter().enumerate().filter(|(_, &v)| v == 1.0).map(|(i, _)| i).collect();
    match ones.as_slice() {
        [i] if block.iter().map(|v| v.abs()).sum::<f64>() == 1.0 => Some(*i),
        _ => None,
    }
}

/// Recovers the previous-action block; `None` means the all-zero round-1
/// block.
pub fn decode_prev_action(cfg: &RunConfig, obs: &Observation) -> Option<CommAction> {
    let start = cfg.agents + 1;
    let block = &obs.features[start..start + NUM_ACTIONS];
    block
        .iter()
        .position(|&v| v == 1.0)
        .and_then(CommAction::from_code)
}

/// Mixer input s_t: all observations concatenated plus
/// `[edge_count/(N(N-1)), density, active_agents/N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalState {
    pub features: Vec<f64>,
}

impl GlobalState {
    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

pub fn encode_global_state(
    cfg: &RunConfig,
    observations: &[Observation],
    graph: &CommGraph,
    active_agents: usize,
) -> Result<GlobalState> {
    let n = cfg.agents;
    if observations.len() != n {
        return Err(Error::Config(format!(
            "expected {n} observations, got {}",
            observations.len()
        )));
    }
    assert!(active_agents <= n);
    assert_eq!(graph.n(), n);
    let mut f = Vec::with_capacity(cfg.state_dim());
    for obs in observations {
        assert_eq!(obs.dim(), cfg.obs_dim(), "observation dim mismatch");
        f.extend_from_slice(&obs.features);
    }
    let max_edges = (n * (n - 1)) as f64;
    f.push(graph.edge_count() as f64 / max_edges);
    f.push(graph.density());
    f.push(active_agents as f64 / n as f64);
    debug_assert_eq!(f.len(), cfg.state_dim());
    Ok(GlobalState { features: f })
}

/// Agents counted as active for the global state: those whose previous-round
/// action was not `solo_process`; all N at round 1.
pub fn active_agents(n: usize, prev_joint: Option<&JointAction>) -> usize {
    match prev_joint {
        None => n,
        Some(joint) => joint
            .actions()
            .iter()
            .filter(|&&a| a != CommAction::SoloProcess)
            .count(),
    }
}

/// One stored round: the observations the agents acted on, the joint action,
/// the executed graph phi(u_t), and the mixer state.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub observations: Vec<Observation>,
    pub joint_action: JointAction,
    /// The graph induced by `joint_action` and executed this round.
    pub graph: CommGraph,
    pub global_state: GlobalState,
}

/// The replay unit: exactly T rounds plus one terminal reward.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub rounds: Vec<RoundRecord>,
    pub reward: f64,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// The graph the round-`t` (0-based) observations and GNN conditioned
    /// on: identity at round 0, otherwise the previous round's executed
    /// graph.
    pub fn message_graph(&self, t: usize) -> CommGraph {
        if t == 0 {
            CommGraph::identity(self.rounds[0].graph.n())
        } else {
            self.rounds[t - 1].graph.clone()
        }
    }
}
