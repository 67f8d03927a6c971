//! Greedy evaluation, policy diagnostics, the topology-frozen broadcast
//! baseline, and the property-verification suite behind `commtopo verify`.

use crate::config::{EnvConfig, RunConfig, NUM_ACTIONS};
use crate::domain::{CommAction, GlobalState, JointAction};
use crate::env::{self, TaskSpec};
use crate::error::{Error, Result};
use crate::mixer::{
    decentralized_argmax, joint_bruteforce_argmax, td_loss, MixerNet, WeightMode,
};
use crate::numerics::{check_gradients, ParameterStore, SeededRng, FD_STEP};
use crate::qnet::AgentNet;
use crate::trainer::{run_episode, save_checkpoint, EpisodeStats, Trainer};

/// Base seed for evaluation rollouts; each task uses `EVAL_SEED_BASE ^ index`
/// so greedy evaluation is a pure function of (checkpoint, suite).
pub const EVAL_SEED_BASE: u64 = 0x5eed_ba5e_0000_0001;

/// Greedy rollout results over one suite.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub per_task: Vec<EpisodeStats>,
    pub mean_accuracy: f64,
    pub mean_tokens: f64,
    pub mean_reward: f64,
}

fn summarize(per_task: Vec<EpisodeStats>) -> EvalReport {
    let n = per_task.len() as f64;
    let mean = |f: fn(&EpisodeStats) -> f64| per_task.iter().map(f).sum::<f64>() / n;
    EvalReport {
        mean_accuracy: mean(|s| s.accuracy),
        mean_tokens: mean(|s| s.tokens),
        mean_reward: mean(|s| s.reward),
        per_task,
    }
}

/// Greedy (epsilon = 0) evaluation over a suite, optionally with an
/// adversary injected at a fixed slot.
pub fn eval_suite(
    net: &AgentNet,
    store: &ParameterStore,
    cfg: &RunConfig,
    env_cfg: &EnvConfig,
    suite: &[TaskSpec],
    adversary: Option<usize>,
) -> Result<EvalReport> {
    if suite.is_empty() {
        return Err(Error::Data("task suite is empty".into()));
    }
    let mut per_task = Vec::with_capacity(suite.len());
    for (index, task) in suite.iter().enumerate() {
        if task.agents() != cfg.agents {
            return Err(Error::Data(format!(
                "task {index} has {} agents, checkpoint expects {}",
                task.agents(),
                cfg.agents
            )));
        }
        let task = match adversary {
            Some(slot) => task.with_adversary(slot),
            None => task.clone(),
        };
        let mut rng = SeededRng::new(EVAL_SEED_BASE ^ index as u64);
        let (_, stats) = run_episode(net, store, cfg, env_cfg, &task, 0.0, &mut rng);
        per_task.push(stats);
    }
    Ok(summarize(per_task))
}

/// Topology-frozen baseline: every agent broadcasts every round.
pub fn broadcast_eval(
    cfg: &RunConfig,
    env_cfg: &EnvConfig,
    suite: &[TaskSpec],
    adversary: Option<usize>,
) -> Result<EvalReport> {
    if suite.is_empty() {
        return Err(Error::Data("task suite is empty".into()));
    }
    let n = cfg.agents;
    let joint = JointAction(vec![CommAction::BroadcastAll; n]);
    let graph = crate::topology::action_to_adjacency(&joint, n);
    let sequence = vec![joint; cfg.rounds];
    let mut per_task = Vec::with_capacity(suite.len());
    for task in suite {
        let task = match adversary {
            Some(slot) => task.with_adversary(slot),
            None => task.clone(),
        };
        let (accuracy, tokens, reward) = env::simulate_sequence(
            &task,
            &sequence,
            env_cfg,
            cfg.w_acc,
            cfg.w_tok,
            cfg.max_tokens,
        );
        let mut action_counts = [0u64; NUM_ACTIONS];
        action_counts[CommAction::BroadcastAll.code()] = (n * cfg.rounds) as u64;
        per_task.push(EpisodeStats {
            accuracy,
            tokens,
            reward,
            action_counts,
            round_densities: vec![graph.density(); cfg.rounds],
            graphs: vec![graph.clone(); cfg.rounds],
        });
    }
    Ok(summarize(per_task))
}

/// Mean outgoing non-self edge count of `slot`, averaged over all rounds of
/// all evaluated episodes.
pub fn mean_outgoing_edges(report: &EvalReport, slot: usize) -> f64 {
    let mut total = 0usize;
    let mut rounds = 0usize;
    for stats in &report.per_task {
        for graph in &stats.graphs {
            total += graph.out_degree(slot);
            rounds += 1;
        }
    }
    total as f64 / rounds as f64
}

/// Fraction of greedy actions equal to `action` across the whole report.
pub fn action_share(report: &EvalReport, action: CommAction) -> f64 {
    let mut chosen = 0u64;
    let mut total = 0u64;
    for stats in &report.per_task {
        chosen += stats.action_counts[action.code()];
        total += stats.action_counts.iter().sum::<u64>();
    }
    chosen as f64 / total as f64
}

/// Per-round diagnostics of a greedy policy over a suite.
#[derive(Debug, Clone)]
pub struct AnalyzeReport {
    /// Action histogram per round; each row sums to N * |suite|.
    pub per_round_action_counts: Vec<[u64; NUM_ACTIONS]>,
    pub per_round_mean_density: Vec<f64>,
    /// Mean adjacency over all episodes and rounds (self-loops included).
    pub mean_adjacency: Vec<Vec<f64>>,
    pub episodes: usize,
}

pub fn analyze_suite(
    net: &AgentNet,
    store: &ParameterStore,
    cfg: &RunConfig,
    env_cfg: &EnvConfig,
    suite: &[TaskSpec],
) -> Result<AnalyzeReport> {
    let report = eval_suite(net, store, cfg, env_cfg, suite, None)?;
    let n = cfg.agents;
    let rounds = cfg.rounds;
    let mut per_round_action_counts = vec![[0u64; NUM_ACTIONS]; rounds];
    let mut per_round_mean_density = vec![0.0; rounds];
    let mut mean_adjacency = vec![vec![0.0; n]; n];
    for stats in &report.per_task {
        for (t, graph) in stats.graphs.iter().enumerate() {
            per_round_mean_density[t] += graph.density();
            for i in 0..n {
                for j in 0..n {
                    if graph.has_edge(i, j) {
                        mean_adjacency[i][j] += 1.0;
                    }
                }
            }
        }
    }
    // action counts need per-round attribution, which EpisodeStats does not
    // keep; rerun the rollouts and read the stored joint actions instead
    for (index, task) in suite.iter().enumerate() {
        let mut rng = SeededRng::new(EVAL_SEED_BASE ^ index as u64);
        let (episode, _) = run_episode(net, store, cfg, env_cfg, task, 0.0, &mut rng);
        for (t, round) in episode.rounds.iter().enumerate() {
            for &a in round.joint_action.actions() {
                per_round_action_counts[t][a.code()] += 1;
            }
        }
    }
    let episodes = suite.len();
    let denom = (episodes * 1) as f64;
    for d in &mut per_round_mean_density {
        *d /= denom;
    }
    for row in &mut mean_adjacency {
        for v in row.iter_mut() {
            *v /= (episodes * rounds) as f64;
        }
    }
    Ok(AnalyzeReport {
        per_round_action_counts,
        per_round_mean_density,
        mean_adjacency,
        episodes,
    })
}

// ---------------------------------------------------------------------------
// Verification suite
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst-case deviation observed (meaning depends on the check).
    pub worst: f64,
    pub detail: String,
}

fn random_state(dim: usize, rng: &mut SeededRng) -> GlobalState {
    GlobalState { features: (0..dim).map(|_| rng.next_f64()).collect() }
}

fn random_tables(n: usize, rng: &mut SeededRng) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..NUM_ACTIONS).map(|_| rng.uniform_signed(1.0)).collect()).collect()
}

/// Monotonicity of Q_tot in every agent utility: 1000 random draws, +0.1
/// perturbations. Worst value is the most negative observed increase.
pub fn check_monotonicity(draws: usize, seed: u64, mode: WeightMode) -> CheckResult {
    let cfg = RunConfig::new(3, 2);
    let (mixer, mut store) = MixerNet::build(&cfg);
    let mut rng = SeededRng::new(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..draws {
        store.init_xavier(&mut rng);
        let s = random_state(mixer.state_dim, &mut rng);
        let weights = mixer.weights(&store, &s, mode);
        let q: Vec<f64> = (0..3).map(|_| rng.uniform_signed(1.0)).collect();
        let base = weights.mix_value(&q);
        for i in 0..3 {
            let mut bumped = q.clone();
            bumped[i] += 0.1;
            worst = worst.min(weights.mix_value(&bumped) - base);
        }
    }
    CheckResult {
        name: "monotonicity",
        passed: worst >= -1e-12,
        worst,
        detail: format!("min increase over {draws} draws x 3 coordinates: {worst:e}"),
    }
}

/// Exact agreement between decentralized per-agent argmax and the exhaustive
/// joint argmax over all 216 joint actions, 1000 draws.
pub fn check_igm(draws: usize, seed: u64, mode: WeightMode) -> CheckResult {
    let cfg = RunConfig::new(3, 2);
    let (mixer, mut store) = MixerNet::build(&cfg);
    let mut rng = SeededRng::new(seed);
    let mut mismatches = 0usize;
    let mut first = None;
    for draw in 0..draws {
        store.init_xavier(&mut rng);
        let s = random_state(mixer.state_dim, &mut rng);
        let tables = random_tables(3, &mut rng);
        let weights = mixer.weights(&store, &s, mode);
        let dec = decentralized_argmax(&tables);
        let brute = joint_bruteforce_argmax(&tables, &weights).expect("N = 3");
        if dec != brute {
            mismatches += 1;
            first.get_or_insert(draw);
        }
    }
    CheckResult {
        name: "igm_equivalence",
        passed: mismatches == 0,
        worst: mismatches as f64,
        detail: match first {
            None => format!("{draws}/{draws} exact matches"),
            Some(d) => format!("{mismatches} mismatches (first at draw {d})"),
        },
    }
}

/// With the absolute value removed, a counterexample to argmax consistency
/// must exist; this check passes when the search finds one.
pub fn check_fault_injection(draws: usize, seed: u64) -> CheckResult {
    let faulty = check_igm(draws, seed, WeightMode::SignedFault);
    CheckResult {
        name: "fault_injection_counterexample",
        passed: !faulty.passed,
        worst: faulty.worst,
        detail: if faulty.passed {
            format!("no counterexample found in {draws} draws")
        } else {
            format!("signed weights break the argmax agreement: {}", faulty.detail)
        },
    }
}

/// Full-stack finite-difference check of d(TD loss)/d(theta, psi) on a
/// small N=2, T=2, D=12 instance.
pub fn check_gradient_fidelity(seed: u64, mode: WeightMode) -> CheckResult {
    let mut cfg = RunConfig::new(2, 2);
    cfg.task_features = 0;
    cfg.hidden_dim = 8;
    cfg.gnn_layers = 2;
    cfg.mixing_hidden = 5;
    cfg.hypernet_hidden = 6;
    assert_eq!(cfg.obs_dim(), 12);

    let (net, mut agent) = AgentNet::build(&cfg);
    let (mixer, mut mix_store) = MixerNet::build(&cfg);
    let mut rng = SeededRng::new(seed);
    agent.init_xavier(&mut rng);
    mix_store.init_xavier(&mut rng);
    let mut target_agent = agent.clone();
    let mut target_mixer = mix_store.clone();
    target_agent.init_xavier(&mut SeededRng::new(seed ^ 0xa5));
    target_mixer.init_xavier(&mut SeededRng::new(seed ^ 0x5a));

    let episodes: Vec<crate::domain::Episode> =
        (0..2).map(|i| synthetic_episode(&cfg, &mut rng, 0.3 + 0.7 * i as f64)).collect();
    let batch: Vec<&crate::domain::Episode> = episodes.iter().collect();

    let mut grad_agent = agent.zeros_like();
    let mut grad_mixer = mix_store.zeros_like();
    td_loss(
        &batch,
        &net,
        &mixer,
        &agent,
        &mix_store,
        &target_agent,
        &target_mixer,
        0.99,
        mode,
        &mut grad_agent,
        &mut grad_mixer,
    );

    let agent_report = check_gradients(&mut agent, &grad_agent, FD_STEP, |theta| {
        let mut ga = theta.zeros_like();
        let mut gm = mix_store.zeros_like();
        td_loss(
            &batch, &net, &mixer, theta, &mix_store, &target_agent, &target_mixer, 0.99, mode,
            &mut ga, &mut gm,
        )
    });
    let mixer_report = check_gradients(&mut mix_store, &grad_mixer, FD_STEP, |psi| {
        let mut ga = agent.zeros_like();
        let mut gm = psi.zeros_like();
        td_loss(
            &batch, &net, &mixer, &agent, psi, &target_agent, &target_mixer, 0.99, mode,
            &mut ga, &mut gm,
        )
    });

    let worst = agent_report.max_rel_err.max(mixer_report.max_rel_err);
    let (which, report) = if agent_report.max_rel_err >= mixer_report.max_rel_err {
        ("theta", &agent_report)
    } else {
        ("psi", &mixer_report)
    };
    CheckResult {
        name: "gradient_check",
        passed: worst <= 1e-4,
        worst,
        detail: format!(
            "max rel err {worst:.3e} over {} params ({which}: {}[{}])",
            agent_report.params_checked + mixer_report.params_checked,
            report.worst_segment,
            report.worst_index
        ),
    }
}

/// Builds a structurally valid episode with random actions, for gradient
/// checks that need no environment.
pub fn synthetic_episode(
    cfg: &RunConfig,
    rng: &mut SeededRng,
    reward: f64,
) -> crate::domain::Episode {
    use crate::domain::{
        active_agents, encode_global_state, encode_observation, CommGraph, Observation,
        RoundRecord,
    };
    let n = cfg.agents;
    let mut prev: Option<JointAction> = None;
    let mut graph = CommGraph::identity(n);
    let mut rounds = Vec::new();
    let features = vec![0.0; cfg.task_features];
    for t in 1..=cfg.rounds {
        let obs: Vec<Observation> = (0..n)
            .map(|i| {
                encode_observation(
                    cfg,
                    i,
                    t,
                    prev.as_ref().map(|j| j.actions()[i]),
                    &graph,
                    rng.next_f64() * 3000.0,
                    &features,
                )
                .unwrap()
            })
            .collect();
        let joint = JointAction(
            (0..n).map(|_| CommAction::from_code(rng.gen_range(NUM_ACTIONS)).unwrap()).collect(),
        );
        let new_graph = crate::topology::action_to_adjacency(&joint, n);
        let state = encode_global_state(cfg, &obs, &new_graph, active_agents(n, prev.as_ref()))
            .unwrap();
        rounds.push(RoundRecord {
            observations: obs,
            joint_action: joint.clone(),
            graph: new_graph.clone(),
            global_state: state,
        });
        graph = new_graph;
        prev = Some(joint);
    }
    crate::domain::Episode { rounds, reward }
}

/// Two short identically-seeded trainings must produce bit-identical
/// parameters and metrics, and a checkpoint must survive save -> load ->
/// save byte-identically.
pub fn check_determinism(episodes: usize, seed: u64) -> CheckResult {
    let suite = crate::env::parse_suite("3 3 0|1|2 -1 1.0\n4 2 0,1|2|3 -1 1.0\n").unwrap();
    let mut cfg = RunConfig::new(3, 2);
    cfg.hidden_dim = 16;
    cfg.gnn_layers = 2;
    cfg.mixing_hidden = 8;
    cfg.hypernet_hidden = 8;
    cfg.episodes = episodes;
    cfg.batch_size = 4;
    cfg.buffer_capacity = 64;
    cfg.target_update_interval = 10;
    cfg.seed = seed;

    let run = || -> Result<(Trainer, Vec<String>)> {
        let mut trainer = Trainer::new(cfg.clone(), EnvConfig::default(), suite.clone())?;
        let mut rows = Vec::new();
        trainer.train(|r| {
            rows.push(r.to_csv_row());
            Ok(())
        })?;
        Ok((trainer, rows))
    };
    let (a, rows_a) = match run() {
        Ok(v) => v,
        Err(e) => {
            return CheckResult {
                name: "determinism",
                passed: false,
                worst: f64::INFINITY,
                detail: format!("training failed: {e}"),
            }
        }
    };
    let (b, rows_b) = run().expect("second run mirrors the first");

    let params_equal = a
        .online_agent
        .data()
        .iter()
        .zip(b.online_agent.data())
        .all(|(x, y)| x.to_bits() == y.to_bits())
        && a.online_mixer
            .data()
            .iter()
            .zip(b.online_mixer.data())
            .all(|(x, y)| x.to_bits() == y.to_bits());
    let rows_equal = rows_a == rows_b;

    let dir = std::env::temp_dir().join(format!("commtopo_verify_{}", std::process::id()));
    let _ = std::fs::create_dir_all(&dir);
    let p1 = dir.join("v1.bin");
    let p2 = dir.join("v2.bin");
    let roundtrip = save_checkpoint(&a, &p1)
        .and_then(|_| crate::trainer::load_checkpoint(&p1))
        .and_then(|loaded| save_checkpoint(&loaded, &p2))
        .map(|_| std::fs::read(&p1).unwrap() == std::fs::read(&p2).unwrap())
        .unwrap_or(false);
    let _ = std::fs::remove_dir_all(&dir);

    let passed = params_equal && rows_equal && roundtrip;
    CheckResult {
        name: "determinism",
        passed,
        worst: if passed { 0.0 } else { 1.0 },
        detail: format!(
            "params identical: {params_equal}, metrics identical: {rows_equal}, \
             checkpoint byte-stable: {roundtrip}"
        ),
    }
}

/// The full verification battery behind `commtopo verify`.
pub fn verify_all() -> Vec<CheckResult> {
    vec![
        check_monotonicity(1000, 101, WeightMode::default()),
        check_igm(1000, 202, WeightMode::default()),
        check_fault_injection(1000, 303),
        check_gradient_fidelity(404, WeightMode::default()),
        check_determinism(40, 505),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::parse_suite;

    fn tiny_setup() -> (Trainer, Vec<TaskSpec>) {
        let suite = parse_suite("3 2 0,1|2|- -1 1.0\n3 3 0|1|2 -1 1.0\n").unwrap();
        let mut cfg = RunConfig::new(3, 2);
        cfg.hidden_dim = 8;
        cfg.mixing_hidden = 4;
        cfg.hypernet_hidden = 4;
        cfg.episodes = 8;
        cfg.batch_size = 4;
        let trainer = Trainer::new(cfg, EnvConfig::default(), suite.clone()).unwrap();
        (trainer, suite)
    }

    #[test]
    fn eval_is_deterministic_and_scores_easy_tasks() {
        let (mut trainer, suite) = tiny_setup();
        trainer.online_agent.zero();
        let a = eval_suite(
            &trainer.net,
            &trainer.online_agent,
            &trainer.cfg,
            &trainer.env_cfg,
            &suite,
            None,
        )
        .unwrap();
        let b = eval_suite(
            &trainer.net,
            &trainer.online_agent,
            &trainer.cfg,
            &trainer.env_cfg,
            &suite,
            None,
        )
        .unwrap();
        assert_eq!(a.mean_reward.to_bits(), b.mean_reward.to_bits());
        // zero nets act solo: easy task solves itself, hard stays at 1/3
        assert_eq!(a.per_task[0].accuracy, 1.0);
        assert!((a.per_task[1].accuracy - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(a.per_task[0].tokens, 1200.0);
    }

    #[test]
    fn empty_suite_is_an_error() {
        let (trainer, _) = tiny_setup();
        let err = eval_suite(
            &trainer.net,
            &trainer.online_agent,
            &trainer.cfg,
            &trainer.env_cfg,
            &[],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn broadcast_baseline_uses_complete_graphs() {
        let (trainer, suite) = tiny_setup();
        let report = broadcast_eval(&trainer.cfg, &trainer.env_cfg, &suite, None).unwrap();
        assert_eq!(report.per_task[0].tokens, 2.0 * (600.0 + 6.0 * 400.0));
        assert_eq!(mean_outgoing_edges(&report, 2), 2.0);
        assert_eq!(action_share(&report, CommAction::BroadcastAll), 1.0);
        // broadcasting solves the hard task in the clean setting
        assert_eq!(report.per_task[1].accuracy, 1.0);
    }

    #[test]
    fn adversarial_injection_reduces_broadcast_accuracy() {
        let (trainer, suite) = tiny_setup();
        let clean = broadcast_eval(&trainer.cfg, &trainer.env_cfg, &suite, None).unwrap();
        let adv = broadcast_eval(&trainer.cfg, &trainer.env_cfg, &suite, Some(2)).unwrap();
        assert!(adv.mean_accuracy < clean.mean_accuracy);
    }

    #[test]
    fn analyze_histograms_count_every_action() {
        let (mut trainer, suite) = tiny_setup();
        trainer.online_agent.zero();
        let report = analyze_suite(
            &trainer.net,
            &trainer.online_agent,
            &trainer.cfg,
            &trainer.env_cfg,
            &suite,
        )
        .unwrap();
        assert_eq!(report.per_round_action_counts.len(), 2);
        for row in &report.per_round_action_counts {
            assert_eq!(row.iter().sum::<u64>(), 3 * suite.len() as u64);
        }
        // zero nets: all solo, so density 0 and identity mean adjacency
        assert!(report.per_round_mean_density.iter().all(|&d| d == 0.0));
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_eq!(report.mean_adjacency[i][j], expected);
            }
        }
    }

    #[test]
    fn verify_checks_pass_on_the_real_mixer() {
        let mono = check_monotonicity(200, 1, WeightMode::Monotonic);
        assert!(mono.passed, "{}", mono.detail);
        let igm = check_igm(200, 2, WeightMode::Monotonic);
        assert!(igm.passed, "{}", igm.detail);
        let fault = check_fault_injection(200, 3);
        assert!(fault.passed, "{}", fault.detail);
    }

    #[test]
    fn gradient_fidelity_check_passes() {
        let report = check_gradient_fidelity(11, WeightMode::Monotonic);
        assert!(report.passed, "{}", report.detail);
    }
}
