//! ClueRelay: a deterministic synthetic team task.
//!
//! Each agent starts with a subset of `K` clues. Executing the round's graph
//! propagates clues along edges; the team scores by the best single agent's
//! assembled clue count against the assembly threshold `kappa`, minus a
//! poison penalty for edges received from an adversarial agent. Tokens
//! accrue per agent and per edge each round, and the terminal reward trades
//! accuracy against normalized token cost.
//!
//! All stochasticity lives in task sampling and exploration; given a task
//! and an action sequence the outcome is exact, which is what makes the
//! brute-force sequence oracle an exact optimum.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::{EnvConfig, NUM_ACTIONS};
use crate::domain::{CommAction, CommGraph, JointAction};
use crate::error::{Error, Result};
use crate::numerics::SeededRng;
use crate::topology::{action_to_adjacency, execution_order, ExecutionOrder};

/// Maximum clue count; clue sets are u64 bitmasks.
pub const MAX_CLUES: usize = 64;

/// Task-feature length for `n` agents: own clue share, assembly threshold
/// share, one reliability flag per agent, difficulty bit.
pub fn task_feature_len(n: usize) -> usize {
    n + 3
}

/// Set of clue indices, stored as a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClueSet(pub u64);

impl ClueSet {
    pub fn from_indices(indices: &[usize]) -> Result<Self> {
        let mut mask = 0u64;
        for &i in indices {
            if i >= MAX_CLUES {
                return Err(Error::Data(format!("clue index {i} exceeds limit {MAX_CLUES}")));
            }
            mask |= 1 << i;
        }
        Ok(ClueSet(mask))
    }

    pub fn indices(self) -> Vec<usize> {
        (0..MAX_CLUES).filter(|&i| self.0 & (1 << i) != 0).collect()
    }

    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn union(self, other: ClueSet) -> ClueSet {
        ClueSet(self.0 | other.0)
    }

    pub fn contains_all(self, other: ClueSet) -> bool {
        self.0 & other.0 == other.0
    }
}

/// One ClueRelay task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    /// Total clue count K.
    pub total_clues: usize,
    /// Clues a single agent must assemble for full credit.
    pub kappa: usize,
    /// Initial clue assignment, one set per agent.
    pub assignment: Vec<ClueSet>,
    /// Adversarial slot, when present.
    pub adversary: Option<usize>,
    /// Poison penalty weight lambda.
    pub poison_weight: f64,
    /// Easy tasks have some agent starting with >= kappa clues.
    pub easy: bool,
}

impl TaskSpec {
    pub fn new(
        total_clues: usize,
        kappa: usize,
        assignment: Vec<ClueSet>,
        adversary: Option<usize>,
        poison_weight: f64,
    ) -> Result<Self> {
        let n = assignment.len();
        if n < 2 {
            return Err(Error::Data("a task needs at least two agents".into()));
        }
        if total_clues == 0 || total_clues > MAX_CLUES {
            return Err(Error::Data(format!("total clue count {total_clues} out of range")));
        }
        if kappa == 0 || kappa > total_clues {
            return Err(Error::Data(format!(
                "kappa {kappa} must lie in [1, {total_clues}]"
            )));
        }
        let union = assignment.iter().fold(ClueSet::default(), |a, &b| a.union(b));
        if union.indices().iter().any(|&i| i >= total_clues) {
            return Err(Error::Data("assigned clue index exceeds K".into()));
        }
        if let Some(a) = adversary {
            if a >= n {
                return Err(Error::Data(format!("adversary id {a} out of range for {n} agents")));
            }
        }
        if poison_weight < 0.0 {
            return Err(Error::Data("poison weight must be nonnegative".into()));
        }
        let easy = assignment.iter().any(|s| s.count() >= kappa);
        Ok(TaskSpec { total_clues, kappa, assignment, adversary, poison_weight, easy })
    }

    pub fn agents(&self) -> usize {
        self.assignment.len()
    }

    /// Copy of this task with the adversary slot replaced.
    pub fn with_adversary(&self, slot: usize) -> TaskSpec {
        let mut t = self.clone();
        assert!(slot < t.agents());
        t.adversary = Some(slot);
        t
    }

    pub fn without_adversary(&self) -> TaskSpec {
        let mut t = self.clone();
        t.adversary = None;
        t
    }
}

/// Mutable per-episode environment state. Clue sets, poison counters, and
/// the token tally only ever grow.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub clue_sets: Vec<ClueSet>,
    pub poison: Vec<u32>,
    pub tokens: f64,
    pub round: usize,
}

/// Initializes the episode state and the per-agent task features.
///
/// Feature layout per agent (length `n + 3`): own clue count / K, kappa / K,
/// one reliability flag per agent (1.0 marks a suspected adversary; each
/// flag is correct with probability rho), difficulty bit (1.0 = easy).
/// Flags are sampled once here and held constant for the episode.
pub fn reset(
    task: &TaskSpec,
    env_cfg: &EnvConfig,
    rng: &mut SeededRng,
) -> (EnvState, Vec<Vec<f64>>) {
    let n = task.agents();
    let state = EnvState {
        clue_sets: task.assignment.clone(),
        poison: vec![0; n],
        tokens: 0.0,
        round: 0,
    };
    let k = task.total_clues as f64;
    let mut features = Vec::with_capacity(n);
    for i in 0..n {
        let mut f = Vec::with_capacity(task_feature_len(n));
        f.push(task.assignment[i].count() as f64 / k);
        f.push(task.kappa as f64 / k);
        for j in 0..n {
            let truth = task.adversary == Some(j);
            let correct = rng.next_f64() < env_cfg.reliability_rho;
            let flagged = truth == correct;
            f.push(if flagged { 1.0 } else { 0.0 });
        }
        f.push(if task.easy { 1.0 } else { 0.0 });
        features.push(f);
    }
    (state, features)
}

/// Executes one round: agents run in `order`; each receiver gains the union
/// of its in-neighbors' clue sets (the sender's already-updated set over a
/// fresh edge, its round-start set over a deferred edge). Any edge received
/// from the adversary delivers no clues and increments the receiver's poison
/// counter. Tokens accrue for every agent plus every non-self edge.
pub fn propagate(
    state: &mut EnvState,
    graph: &CommGraph,
    order: &ExecutionOrder,
    task: &TaskSpec,
    env_cfg: &EnvConfig,
) {
    let n = graph.n();
    assert_eq!(task.agents(), n, "task/graph agent count mismatch");
    validate_order(graph, order);

    let round_start = state.clue_sets.clone();
    for &v in &order.order {
        for u in 0..n {
            if u == v || !graph.has_edge(u, v) {
                continue;
            }
            if task.adversary == Some(u) {
                state.poison[v] += 1;
                continue;
            }
            let incoming = if order.is_fresh(u, v) { state.clue_sets[u] } else { round_start[u] };
            state.clue_sets[v] = state.clue_sets[v].union(incoming);
        }
    }
    state.tokens +=
        env_cfg.base_tokens * n as f64 + env_cfg.edge_tokens * graph.edge_count() as f64;
    state.round += 1;
}

fn validate_order(graph: &CommGraph, order: &ExecutionOrder) {
    let n = graph.n();
    assert_eq!(order.order.len(), n, "execution order length mismatch");
    let mut pos = vec![usize::MAX; n];
    for (idx, &v) in order.order.iter().enumerate() {
        assert!(v < n && pos[v] == usize::MAX, "execution order is not a permutation");
        pos[v] = idx;
    }
    for (u, v) in graph.edges() {
        assert!(
            pos[u] < pos[v] || order.deferred_edges.contains(&(u, v)),
            "edge {u}->{v} is neither fresh nor deferred"
        );
    }
}

/// Scores a finished episode: accuracy is the best non-adversarial agent's
/// clamp((clues - lambda * poison) / kappa, 0, 1); tokens are the
/// accumulated tally.
pub fn finish(state: &EnvState, task: &TaskSpec) -> (f64, f64) {
    let accuracy = state
        .clue_sets
        .iter()
        .enumerate()
        .filter(|(i, _)| task.adversary != Some(*i))
        .map(|(i, set)| {
            let score = set.count() as f64 - task.poison_weight * state.poison[i] as f64;
            (score / task.kappa as f64).clamp(0.0, 1.0)
        })
        .fold(0.0f64, f64::max);
    (accuracy, state.tokens)
}

/// R = w_acc * accuracy - w_tok * min(tokens / max_tokens, 1).
pub fn reward(accuracy: f64, tokens_used: f64, w_acc: f64, w_tok: f64, max_tokens: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&accuracy));
    debug_assert!(tokens_used >= 0.0);
    w_acc * accuracy - w_tok * (tokens_used / max_tokens).min(1.0)
}

/// Runs a fixed open-loop action sequence through the environment.
/// Returns (accuracy, tokens, reward).
pub fn simulate_sequence(
    task: &TaskSpec,
    sequence: &[JointAction],
    env_cfg: &EnvConfig,
    w_acc: f64,
    w_tok: f64,
    max_tokens: f64,
) -> (f64, f64, f64) {
    let n = task.agents();
    let mut rng = SeededRng::new(0); // flags unused by scoring
    let (mut state, _) = reset(task, env_cfg, &mut rng);
    for joint in sequence {
        let graph = action_to_adjacency(joint, n);
        let order = execution_order(&graph);
        propagate(&mut state, &graph, &order, task, env_cfg);
    }
    let (accuracy, tokens) = finish(&state, task);
    (accuracy, tokens, reward(accuracy, tokens, w_acc, w_tok, max_tokens))
}

/// Exhaustive open-loop optimum over all `6^(N*T)` action sequences.
#[derive(Debug, Clone)]
pub struct OracleResult {
    /// Lexicographically-first argmax, indexed `[round][agent]`.
    pub best_sequence: Vec<JointAction>,
    pub best_return: f64,
    pub best_accuracy: f64,
    pub best_tokens: f64,
    /// Highest return strictly below the optimum (the sequence-level action
    /// gap is `best_return - runner_up_return`); NaN when all sequences tie.
    pub runner_up_return: f64,
    pub sequences_evaluated: u64,
}

/// Enumeration size guard for the sequence oracle.
pub const ORACLE_MAX_SEQUENCES: u64 = 2_000_000;

pub fn oracle_sequence_count(n: usize, rounds: usize) -> u128 {
    (NUM_ACTIONS as u128).pow((n * rounds) as u32)
}

/// Enumerates every open-loop joint-action sequence for `rounds` rounds and
/// returns the exact optimum. Sequences are scanned in lexicographic order
/// over the flattened (round-major, agent-minor) action codes, so ties keep
/// the lexicographically smallest argmax.
pub fn oracle_enumerate(
    task: &TaskSpec,
    env_cfg: &EnvConfig,
    rounds: usize,
    w_acc: f64,
    w_tok: f64,
    max_tokens: f64,
) -> Result<OracleResult> {
    let n = task.agents();
    let count = oracle_sequence_count(n, rounds);
    if count > ORACLE_MAX_SEQUENCES as u128 {
        return Err(Error::Enumeration(format!(
            "6^({n}*{rounds}) = {count} sequences exceeds the bound of {ORACLE_MAX_SEQUENCES}"
        )));
    }

    let slots = n * rounds;
    let mut codes = vec![0usize; slots];
    let mut best_return = f64::NEG_INFINITY;
    let mut runner_up = f64::NEG_INFINITY;
    let mut best = OracleResult {
        best_sequence: Vec::new(),
        best_return: f64::NEG_INFINITY,
        best_accuracy: 0.0,
        best_tokens: 0.0,
        runner_up_return: f64::NAN,
        sequences_evaluated: 0,
    };
    let mut evaluated = 0u64;
    loop {
        let sequence: Vec<JointAction> = (0..rounds)
            .map(|t| {
                JointAction(
                    (0..n)
                        .map(|i| CommAction::from_code(codes[t * n + i]).unwrap())
                        .collect(),
                )
            })
            .collect();
        let (acc, tokens, ret) =
            simulate_sequence(task, &sequence, env_cfg, w_acc, w_tok, max_tokens);
        evaluated += 1;
        if ret > best_return {
            if best_return > f64::NEG_INFINITY {
                runner_up = runner_up.max(best_return);
            }
            best_return = ret;
            best.best_sequence = sequence;
            best.best_accuracy = acc;
            best.best_tokens = tokens;
        } else if ret < best_return {
            runner_up = runner_up.max(ret);
        }

        // odometer increment, least-significant slot last
        let mut pos = slots;
        loop {
            if pos == 0 {
                best.best_return = best_return;
                best.runner_up_return =
                    if runner_up > f64::NEG_INFINITY { runner_up } else { f64::NAN };
                best.sequences_evaluated = evaluated;
                return Ok(best);
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

/// (best sequence, best return) of the exhaustive open-loop oracle.
pub fn oracle_optimal(
    task: &TaskSpec,
    env_cfg: &EnvConfig,
    rounds: usize,
    w_acc: f64,
    w_tok: f64,
    max_tokens: f64,
) -> Result<(Vec<JointAction>, f64)> {
    let r = oracle_enumerate(task, env_cfg, rounds, w_acc, w_tok, max_tokens)?;
    Ok((r.best_sequence, r.best_return))
}

// ---------------------------------------------------------------------------
// Task suite file format
// ---------------------------------------------------------------------------
//
// One task per line:
//
//     K kappa clues adversary lambda
//
// where `clues` is one `|`-separated group per agent, each group a
// comma-separated list of clue indices or `-` for an empty set;
// `adversary` is an agent id or -1. Blank lines and `#` comments are
// skipped.

pub fn parse_task_line(line: &str) -> Result<TaskSpec> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(Error::Data(format!(
            "expected 5 fields (K kappa clues adversary lambda), got {}",
            fields.len()
        )));
    }
    let bad = |what: &str, v: &str| Error::Data(format!("invalid {what} `{v}`"));
    let total: usize = fields[0].parse().map_err(|_| bad("K", fields[0]))?;
    let kappa: usize = fields[1].parse().map_err(|_| bad("kappa", fields[1]))?;
    let mut assignment = Vec::new();
    for group in fields[2].split('|') {
        if group == "-" {
            assignment.push(ClueSet::default());
            continue;
        }
        let mut indices = Vec::new();
        for part in group.split(',') {
            indices.push(part.parse::<usize>().map_err(|_| bad("clue index", part))?);
        }
        assignment.push(ClueSet::from_indices(&indices)?);
    }
    let adversary: i64 = fields[3].parse().map_err(|_| bad("adversary", fields[3]))?;
    let adversary = if adversary < 0 { None } else { Some(adversary as usize) };
    let lambda: f64 = fields[4].parse().map_err(|_| bad("lambda", fields[4]))?;
    TaskSpec::new(total, kappa, assignment, adversary, lambda)
}

/// Canonical single-line form of a task; `parse_task_line` inverts it.
pub fn format_task_line(task: &TaskSpec) -> String {
    let mut clues = String::new();
    for (i, set) in task.assignment.iter().enumerate() {
        if i > 0 {
            clues.push('|');
        }
        let idx = set.indices();
        if idx.is_empty() {
            clues.push('-');
        } else {
            for (j, c) in idx.iter().enumerate() {
                if j > 0 {
                    clues.push(',');
                }
                let _ = write!(clues, "{c}");
            }
        }
    }
    format!(
        "{} {} {} {} {}",
        task.total_clues,
        task.kappa,
        clues,
        task.adversary.map(|a| a as i64).unwrap_or(-1),
        task.poison_weight
    )
}

pub fn parse_suite(text: &str) -> Result<Vec<TaskSpec>> {
    let mut tasks = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let task = parse_task_line(line)
            .map_err(|e| Error::Data(format!("line {}: {e}", lineno + 1)))?;
        tasks.push(task);
    }
    Ok(tasks)
}

pub fn load_suite(path: &Path) -> Result<Vec<TaskSpec>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let tasks = parse_suite(&text)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok(tasks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::JointAction;
    use proptest::prelude::*;
    use CommAction::*;

    fn env_cfg() -> EnvConfig {
        EnvConfig::default()
    }

    fn task_one_clue_each() -> TaskSpec {
        TaskSpec::new(
            3,
            3,
            vec![
                ClueSet::from_indices(&[0]).unwrap(),
                ClueSet::from_indices(&[1]).unwrap(),
                ClueSet::from_indices(&[2]).unwrap(),
            ],
            None,
            1.0,
        )
        .unwrap()
    }

    fn easy_task() -> TaskSpec {
        TaskSpec::new(
            3,
            2,
            vec![
                ClueSet::from_indices(&[0, 1]).unwrap(),
                ClueSet::from_indices(&[2]).unwrap(),
                ClueSet::default(),
            ],
            None,
            1.0,
        )
        .unwrap()
    }

    fn step(state: &mut EnvState, actions: &[CommAction], task: &TaskSpec) {
        let joint = JointAction(actions.to_vec());
        let graph = action_to_adjacency(&joint, task.agents());
        let order = execution_order(&graph);
        propagate(state, &graph, &order, task, &env_cfg());
    }

    #[test]
    fn difficulty_tag_follows_definition() {
        assert!(easy_task().easy);
        assert!(!task_one_clue_each().easy);
    }

    #[test]
    fn reset_features_layout() {
        // Agent holding all clues gets own-share 1.0; rho = 1 flags exactly
        // the adversary for every observer.
        let task = TaskSpec::new(
            4,
            2,
            vec![
                ClueSet::from_indices(&[0, 1, 2, 3]).unwrap(),
                ClueSet::default(),
                ClueSet::default(),
            ],
            Some(2),
            1.0,
        )
        .unwrap();
        let mut cfg = env_cfg();
        cfg.reliability_rho = 1.0;
        let mut rng = SeededRng::new(0);
        let (_, features) = reset(&task, &cfg, &mut rng);
        assert_eq!(features.len(), 3);
        assert_eq!(features[0].len(), task_feature_len(3));
        assert_eq!(features[0][0], 1.0);
        assert_eq!(features[0][1], 0.5); // kappa / K
        for f in &features {
            assert_eq!(&f[2..5], &[0.0, 0.0, 1.0]); // flags exactly agent 2
            assert_eq!(f[5], 1.0); // easy bit
        }
    }

    #[test]
    fn identity_round_only_counts_tokens() {
        let task = task_one_clue_each();
        let mut rng = SeededRng::new(1);
        let (mut state, _) = reset(&task, &env_cfg(), &mut rng);
        let before = state.clue_sets.clone();
        step(&mut state, &[SoloProcess; 3], &task);
        assert_eq!(state.clue_sets, before);
        assert_eq!(state.poison, vec![0; 3]);
        assert_eq!(state.round, 1);
        assert_eq!(state.tokens, 3.0 * 200.0);
    }

    #[test]
    fn chained_fresh_edges_deliver_updated_sets() {
        // Edges {0->1, 1->2} via execute_verify; agent 2 assembles all three
        // clues in one round.
        let task = task_one_clue_each();
        let mut rng = SeededRng::new(1);
        let (mut state, _) = reset(&task, &env_cfg(), &mut rng);
        step(&mut state, &[ExecuteVerify, ExecuteVerify, SoloProcess], &task);
        assert_eq!(state.clue_sets[2].indices(), vec![0, 1, 2]);
        assert_eq!(state.clue_sets[1].indices(), vec![0, 1]);
        assert_eq!(state.clue_sets[0].indices(), vec![0]);
    }

    #[test]
    fn deferred_edge_delivers_round_start_set() {
        // Debate cycle between 0 and 1: order (0,1), deferred {1->0}.
        // Agent 0 receives 1's round-start set; agent 1 receives 0's
        // updated set.
        let task = TaskSpec::new(
            4,
            4,
            vec![
                ClueSet::from_indices(&[0]).unwrap(),
                ClueSet::from_indices(&[1]).unwrap(),
                ClueSet::from_indices(&[2, 3]).unwrap(),
            ],
            None,
            1.0,
        )
        .unwrap();
        let mut rng = SeededRng::new(1);
        let (mut state, _) = reset(&task, &env_cfg(), &mut rng);
        // Give agent 0 a fresh in-edge from 2 that lands before the debate
        // exchange so "updated" and "round-start" differ.
        let joint = JointAction(vec![DebateCheck, SoloProcess, SoloProcess]);
        let mut graph = action_to_adjacency(&joint, 3);
        graph.add_edge(2, 0);
        let order = execution_order(&graph);
        assert_eq!(order.order, vec![2, 0, 1]);
        assert_eq!(order.deferred_edges.iter().copied().collect::<Vec<_>>(), vec![(1, 0)]);
        propagate(&mut state, &graph, &order, &task, &env_cfg());
        // 0 executed after 2: gains {2,3} fresh, gains 1's round-start {1}.
        assert_eq!(state.clue_sets[0].indices(), vec![0, 1, 2, 3]);
        // 1 executed last: gains 0's updated set {0,1,2,3}.
        assert_eq!(state.clue_sets[1].indices(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn adversary_poisons_and_sends_nothing() {
        let task = task_one_clue_each().with_adversary(0);
        let mut rng = SeededRng::new(1);
        let (mut state, _) = reset(&task, &env_cfg(), &mut rng);
        step(&mut state, &[BroadcastAll, SoloProcess, SoloProcess], &task);
        assert_eq!(state.poison, vec![0, 1, 1]);
        // no clues delivered from the adversary
        assert_eq!(state.clue_sets[1].indices(), vec![1]);
        assert_eq!(state.clue_sets[2].indices(), vec![2]);
    }

    #[test]
    fn finish_scores_and_token_totals() {
        // Easy task, all-solo for two rounds: accuracy 1, tokens T*base*N.
        let task = easy_task();
        let mut rng = SeededRng::new(1);
        let (mut state, _) = reset(&task, &env_cfg(), &mut rng);
        step(&mut state, &[SoloProcess; 3], &task);
        step(&mut state, &[SoloProcess; 3], &task);
        let (acc, tokens) = finish(&state, &task);
        assert_eq!(acc, 1.0);
        assert_eq!(tokens, 2.0 * 200.0 * 3.0);
    }

    #[test]
    fn unsolved_task_scores_fractionally() {
        let task = task_one_clue_each();
        let mut rng = SeededRng::new(1);
        let (mut state, _) = reset(&task, &env_cfg(), &mut rng);
        step(&mut state, &[SoloProcess; 3], &task);
        let (acc, _) = finish(&state, &task);
        assert!((acc - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn poison_penalty_arithmetic() {
        // kappa=4, lambda=0.5, 4 true clues, poison 2 -> (4 - 1)/4 = 0.75.
        let task = TaskSpec::new(
            4,
            4,
            vec![ClueSet::default(), ClueSet::from_indices(&[0, 1, 2, 3]).unwrap()],
            Some(0),
            0.5,
        )
        .unwrap();
        let state = EnvState {
            clue_sets: vec![ClueSet::default(), ClueSet::from_indices(&[0, 1, 2, 3]).unwrap()],
            poison: vec![0, 2],
            tokens: 0.0,
            round: 2,
        };
        let (acc, _) = finish(&state, &task);
        assert!((acc - 0.75).abs() < 1e-15);
    }

    #[test]
    fn reward_exact_values() {
        assert!((reward(1.0, 0.0, 1.25, 0.10, 10_000.0) - 1.25).abs() < 1e-12);
        assert!((reward(1.0, 10_000.0, 1.25, 0.10, 10_000.0) - 1.15).abs() < 1e-12);
        let capped = reward(1.0, 25_000.0, 1.25, 0.10, 10_000.0);
        let at_budget = reward(1.0, 10_000.0, 1.25, 0.10, 10_000.0);
        assert!((capped - at_budget).abs() < 1e-12);
    }

    #[test]
    fn oracle_easy_task_prefers_all_solo() {
        let task = easy_task();
        let r = oracle_enumerate(&task, &env_cfg(), 2, 1.25, 0.10, 10_000.0).unwrap();
        assert_eq!(r.sequences_evaluated, 46_656);
        for joint in &r.best_sequence {
            assert!(joint.actions().iter().all(|&a| a == SoloProcess));
        }
        assert_eq!(r.best_accuracy, 1.0);
        assert_eq!(r.best_tokens, 1200.0);
    }

    #[test]
    fn oracle_hard_task_beats_all_solo() {
        let task = task_one_clue_each();
        let (_, best) = oracle_optimal(&task, &env_cfg(), 2, 1.25, 0.10, 10_000.0).unwrap();
        let solo = vec![JointAction(vec![SoloProcess; 3]); 2];
        let (_, _, solo_ret) = simulate_sequence(&task, &solo, &env_cfg(), 1.25, 0.10, 10_000.0);
        assert!(best > solo_ret + 0.5, "best {best} solo {solo_ret}");
    }

    #[test]
    fn oracle_free_tokens_reaches_full_accuracy() {
        let task = task_one_clue_each();
        let r = oracle_enumerate(&task, &env_cfg(), 2, 1.25, 0.0, 10_000.0).unwrap();
        assert_eq!(r.best_accuracy, 1.0);
        assert!((r.best_return - 1.25).abs() < 1e-12);
    }

    #[test]
    fn oracle_refuses_oversized_spaces() {
        let task = task_one_clue_each();
        let err = oracle_enumerate(&task, &env_cfg(), 10, 1.25, 0.10, 10_000.0).unwrap_err();
        assert!(err.to_string().contains("sequences"));
    }

    #[test]
    fn suite_line_roundtrip() {
        let line = "6 3 0,1|2,3|4,5 -1 1";
        let task = parse_task_line(line).unwrap();
        assert_eq!(task.total_clues, 6);
        assert_eq!(task.kappa, 3);
        assert_eq!(task.agents(), 3);
        assert_eq!(format_task_line(&task), line);

        let with_adv = "4 2 0|-|1,2 2 0.5";
        let task = parse_task_line(with_adv).unwrap();
        assert_eq!(task.adversary, Some(2));
        assert_eq!(format_task_line(&task), with_adv);
    }

    #[test]
    fn malformed_suite_lines_rejected() {
        for bad in [
            "3 3 0|1|2 -1",        // missing lambda
            "3 5 0|1|2 -1 1.0",    // kappa > K
            "3 3 0|1|9 -1 1.0",    // clue index >= K
            "3 3 0|1|2 7 1.0",     // adversary out of range
            "3 3 0|1|2 -1 -0.5",   // negative lambda
            "0 1 0|1 -1 1.0",      // K = 0
        ] {
            assert!(parse_task_line(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn suite_parser_skips_comments() {
        let text = "# header\n\n3 3 0|1|2 -1 1.0 # inline\n";
        let tasks = parse_suite(text).unwrap();
        assert_eq!(tasks.len(), 1);
    }

    proptest! {
        #[test]
        fn determinism_and_monotone_information(
            seed in 0u64..300,
            codes in proptest::collection::vec(0usize..6, 6),
        ) {
            let task = task_one_clue_each();
            let seq: Vec<JointAction> = codes
                .chunks(3)
                .map(|c| JointAction(c.iter().map(|&x| CommAction::from_code(x).unwrap()).collect()))
                .collect();
            let a = simulate_sequence(&task, &seq, &env_cfg(), 1.25, 0.10, 10_000.0);
            let b = simulate_sequence(&task, &seq, &env_cfg(), 1.25, 0.10, 10_000.0);
            prop_assert_eq!(a, b);

            // clue sets only grow round over round
            let mut rng = SeededRng::new(seed);
            let (mut state, _) = reset(&task, &env_cfg(), &mut rng);
            for joint in &seq {
                let before = state.clue_sets.clone();
                let graph = action_to_adjacency(joint, 3);
                let order = execution_order(&graph);
                propagate(&mut state, &graph, &order, &task, &env_cfg());
                for (b, a) in before.iter().zip(&state.clue_sets) {
                    prop_assert!(a.contains_all(*b));
                }
            }
        }

        #[test]
        fn adversary_never_helps(
            codes in proptest::collection::vec(0usize..6, 6),
            slot in 0usize..3,
        ) {
            let clean = task_one_clue_each();
            let seq: Vec<JointAction> = codes
                .chunks(3)
                .map(|c| JointAction(c.iter().map(|&x| CommAction::from_code(x).unwrap()).collect()))
                .collect();
            let (acc_clean, _, _) =
                simulate_sequence(&clean, &seq, &env_cfg(), 1.25, 0.10, 10_000.0);
            let (acc_adv, _, _) = simulate_sequence(
                &clean.with_adversary(slot),
                &seq,
                &env_cfg(),
                1.25,
                0.10,
                10_000.0,
            );
            prop_assert!(acc_adv <= acc_clean + 1e-12);
        }
    }
}
