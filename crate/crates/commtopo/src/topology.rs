//! Action-to-adjacency mapping and the execution-order rule.
//!
//! Each agent's communication action contributes a fixed edge pattern; the
//! round graph is the union of all contributions on top of the identity.
//! Agents then execute in topological order over the non-self edges, with a
//! deterministic cycle-breaking rule: edges whose sender runs after its
//! receiver are "deferred" and deliver the sender's previous-round output.

use std::collections::BTreeSet;

use crate::domain::{CommAction, CommGraph, JointAction};

/// Deterministic execution schedule for one round graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionOrder {
    /// Permutation of agent ids in execution sequence.
    pub order: Vec<usize>,
    /// Edges (u, v) whose sender u executes after receiver v this round.
    pub deferred_edges: BTreeSet<(usize, usize)>,
}

impl ExecutionOrder {
    /// True when edge (u, v) delivers u's already-updated output this round.
    pub fn is_fresh(&self, from: usize, to: usize) -> bool {
        !self.deferred_edges.contains(&(from, to))
    }
}

/// The mapping phi: joint action -> round adjacency matrix.
///
/// Per-agent contributions, with partner/target fixed to the next agent
/// `(i + 1) mod n`:
///
/// * `solo_process`: no edges
/// * `broadcast_all`: i -> j for all j != i
/// * `selective_query`: i -> target
/// * `aggregate_refine`: j -> i for all j != i
/// * `execute_verify`: i -> target
/// * `debate_check`: i -> target and target -> i
pub fn action_to_adjacency(joint: &JointAction, n: usize) -> CommGraph {
    assert!(n >= 2, "communication patterns need at least two agents");
    assert_eq!(joint.len(), n, "joint action length must equal agent count");
    let mut g = CommGraph::identity(n);
    for (i, &action) in joint.actions().iter().enumerate() {
        let partner = (i + 1) % n;
        match action {
            CommAction::SoloProcess => {}
            CommAction::BroadcastAll => {
                for j in 0..n {
                    if j != i {
                        g.add_edge(i, j);
                    }
                }
            }
            CommAction::SelectiveQuery | CommAction::ExecuteVerify => {
                g.add_edge(i, partner);
            }
            CommAction::AggregateRefine => {
                for j in 0..n {
                    if j != i {
                        g.add_edge(j, i);
                    }
                }
            }
            CommAction::DebateCheck => {
                g.add_edge(i, partner);
                g.add_edge(partner, i);
            }
        }
    }
    g
}

/// Kahn's algorithm over the non-self edges, ties broken by ascending agent
/// id. When a cycle blocks progress the lowest-id remaining agent is emitted
/// next and each of its still-unsatisfied incoming edges is deferred.
pub fn execution_order(graph: &CommGraph) -> ExecutionOrder {
    let n = graph.n();
    let mut indegree = vec![0usize; n];
    for (_, to) in graph.edges() {
        indegree[to] += 1;
    }
    let mut emitted = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut deferred = BTreeSet::new();

    while order.len() < n {
        let next_ready = (0..n).find(|&v| !emitted[v] && indegree[v] == 0);
        let v = match next_ready {
            Some(v) => v,
            None => {
                // Cycle: emit the lowest-id remaining agent; its unsatisfied
                // incoming edges deliver previous-round output.
                let v = (0..n).find(|&v| !emitted[v]).unwrap();
                for u in 0..n {
                    if u != v && !emitted[u] && graph.has_edge(u, v) {
                        deferred.insert((u, v));
                    }
                }
                v
            }
        };
        emitted[v] = true;
        order.push(v);
        for w in 0..n {
            if w != v && !emitted[w] && graph.has_edge(v, w) && indegree[w] > 0 {
                indegree[w] -= 1;
            }
        }
    }
    ExecutionOrder { order, deferred_edges: deferred }
}

/// True when the non-self-edge graph has no directed cycle. Used to check
/// the deferred-edge invariant independently of Kahn's algorithm.
pub fn is_acyclic(graph: &CommGraph) -> bool {
    let n = graph.n();
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; n];
    fn dfs(graph: &CommGraph, v: usize, state: &mut [u8]) -> bool {
        state[v] = 1;
        for w in 0..graph.n() {
            if w == v || !graph.has_edge(v, w) {
                continue;
            }
            if state[w] == 1 {
                return false;
            }
            if state[w] == 0 && !dfs(graph, w, state) {
                return false;
            }
        }
        state[v] = 2;
        true
    }
    (0..n).all(|v| state[v] != 0 || dfs(graph, v, &mut state))
}
