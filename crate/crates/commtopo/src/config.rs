//! Run and environment configuration, plus the `key = value` config file
//! format used by the CLI.
//!
//! Unknown and duplicate keys are hard errors so that typos in experiment
//! configs surface immediately instead of silently falling back to defaults.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Number of discrete communication actions per agent.
pub const NUM_ACTIONS: usize = 6;

/// Training and network hyperparameters.
///
/// The observation dimension decomposes as
/// `d = n + 1 + NUM_ACTIONS + 2 + 1 + f`: one-hot agent id, normalized round
/// index, one-hot previous own action, normalized in/out degree, normalized
/// cumulative token usage, then `f` environment task features.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Agent count N.
    pub agents: usize,
    /// Communication rounds T per episode.
    pub rounds: usize,
    /// Training episodes.
    pub episodes: usize,
    /// Master RNG seed.
    pub seed: u64,
    /// Environment task-feature count F.
    pub task_features: usize,
    /// GNN / GRU hidden width.
    pub hidden_dim: usize,
    /// GNN message-passing layers.
    pub gnn_layers: usize,
    /// Mixing-layer width M.
    pub mixing_hidden: usize,
    /// Hypernetwork hidden width.
    pub hypernet_hidden: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub grad_clip_norm: f64,
    /// Gradient steps between target-network copies.
    pub target_update_interval: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub w_acc: f64,
    pub w_tok: f64,
    pub max_tokens: f64,
    /// Episodes between periodic checkpoints (0 disables them).
    pub checkpoint_interval: usize,
}

impl RunConfig {
    /// Default configuration for `agents` agents and `rounds` rounds, with
    /// the task-feature count of the clue-relay environment.
    pub fn new(agents: usize, rounds: usize) -> Self {
        RunConfig {
            agents,
            rounds,
            episodes: 2000,
            seed: 0,
            task_features: crate::env::task_feature_len(agents),
            hidden_dim: 128,
            gnn_layers: 2,
            mixing_hidden: 64,
            hypernet_hidden: 64,
            learning_rate: 5e-4,
            gamma: 0.99,
            buffer_capacity: 5000,
            batch_size: 8,
            grad_clip_norm: 10.0,
            target_update_interval: 200,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            w_acc: 1.25,
            w_tok: 0.10,
            max_tokens: 10_000.0,
            checkpoint_interval: 500,
        }
    }

    /// Observation dimension D.
    pub fn obs_dim(&self) -> usize {
        self.agents + 1 + NUM_ACTIONS + 2 + 1 + self.task_features
    }

    /// Global-state dimension: all observations concatenated plus three
    /// graph statistics.
    pub fn state_dim(&self) -> usize {
        self.agents * self.obs_dim() + 3
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.agents < 2 {
            return fail(format!("agents must be >= 2, got {}", self.agents));
        }
        if self.rounds < 1 {
            return fail("rounds must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return fail(format!("gamma must be in [0, 1), got {}", self.gamma));
        }
        if self.epsilon_end > self.epsilon_start {
            return fail(format!(
                "epsilon_end ({}) must not exceed epsilon_start ({})",
                self.epsilon_end, self.epsilon_start
            ));
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return fail("epsilon bounds must lie in [0, 1]".into());
        }
        if self.buffer_capacity == 0 || self.batch_size == 0 {
            return fail("buffer_capacity and batch_size must be positive".into());
        }
        if self.batch_size > self.buffer_capacity {
            return fail("batch_size must not exceed buffer_capacity".into());
        }
        if self.hidden_dim == 0
            || self.gnn_layers == 0
            || self.mixing_hidden == 0
            || self.hypernet_hidden == 0
        {
            return fail("network dimensions must be positive".into());
        }
        if self.learning_rate <= 0.0 || self.grad_clip_norm <= 0.0 {
            return fail("learning_rate and grad_clip_norm must be positive".into());
        }
        if self.target_update_interval == 0 {
            return fail("target_update_interval must be positive".into());
        }
        if self.max_tokens <= 0.0 {
            return fail("max_tokens must be positive".into());
        }
        Ok(())
    }
}

/// Clue-relay environment parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    /// Tokens charged per agent per round.
    pub base_tokens: f64,
    /// Tokens charged per non-self edge per round.
    pub edge_tokens: f64,
    /// Probability that each reliability flag in the task features is
    /// correct.
    pub reliability_rho: f64,
    /// Probability that a training episode replaces one agent with an
    /// adversary.
    pub adversary_prob: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            base_tokens: 200.0,
            edge_tokens: 400.0,
            reliability_rho: 0.9,
            adversary_prob: 0.25,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_tokens < 0.0 || self.edge_tokens < 0.0 {
            return Err(Error::Config("token costs must be nonnegative".into()));
        }
        if !(0.5..=1.0).contains(&self.reliability_rho) {
            return Err(Error::Config(format!(
                "reliability_rho must be in [0.5, 1], got {}",
                self.reliability_rho
            )));
        }
        if !(0.0..=1.0).contains(&self.adversary_prob) {
            return Err(Error::Config("adversary_prob must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Everything a `train` invocation needs: run parameters, environment
/// parameters, and the task suite to train on.
#[derive(Debug, Clone)]
pub struct FileConfig {
    pub run: RunConfig,
    pub env: EnvConfig,
    /// Task suite path; relative paths resolve against the config file's
    /// directory.
    pub task_suite: PathBuf,
}

/// Parses a `key = value` config file. Lines starting with `#` and blank
/// lines are skipped; inline `#` comments are stripped.
pub fn load_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let base_dir = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config(&text, base_dir)
}

pub fn parse_config(text: &str, base_dir: &Path) -> Result<FileConfig> {
    let mut agents = 3usize;
    let mut rounds = 2usize;
    let mut run = RunConfig::new(agents, rounds);
    let mut env = EnvConfig::default();
    let mut task_suite: Option<PathBuf> = None;
    let mut seen: HashSet<String> = HashSet::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        if !seen.insert(key.to_string()) {
            return Err(Error::Config(format!("duplicate key `{key}`")));
        }

        let bad = |what: &str| Error::Config(format!("key `{key}`: invalid {what} `{value}`"));
        let parse_usize = || value.parse::<usize>().map_err(|_| bad("integer"));
        let parse_f64 = || value.parse::<f64>().map_err(|_| bad("number"));
        let parse_u64 = || value.parse::<u64>().map_err(|_| bad("integer"));

        match key {
            "agents" => agents = parse_usize()?,
            "rounds" => rounds = parse_usize()?,
            "episodes" => run.episodes = parse_usize()?,
            "seed" => run.seed = parse_u64()?,
            "hidden_dim" => run.hidden_dim = parse_usize()?,
            "gnn_layers" => run.gnn_layers = parse_usize()?,
            "mixing_hidden" => run.mixing_hidden = parse_usize()?,
            "hypernet_hidden" => run.hypernet_hidden = parse_usize()?,
            "learning_rate" => run.learning_rate = parse_f64()?,
            "gamma" => run.gamma = parse_f64()?,
            "buffer_capacity" => run.buffer_capacity = parse_usize()?,
            "batch_size" => run.batch_size = parse_usize()?,
            "grad_clip_norm" => run.grad_clip_norm = parse_f64()?,
            "target_update_interval" => run.target_update_interval = parse_u64()?,
            "epsilon_start" => run.epsilon_start = parse_f64()?,
            "epsilon_end" => run.epsilon_end = parse_f64()?,
            "w_acc" => run.w_acc = parse_f64()?,
            "w_tok" => run.w_tok = parse_f64()?,
            "max_tokens" => run.max_tokens = parse_f64()?,
            "checkpoint_interval" => run.checkpoint_interval = parse_usize()?,
            "base_tokens" => env.base_tokens = parse_f64()?,
            "edge_tokens" => env.edge_tokens = parse_f64()?,
            "reliability_rho" => env.reliability_rho = parse_f64()?,
            "adversary_prob" => env.adversary_prob = parse_f64()?,
            "task_suite" => {
                let p = PathBuf::from(value);
                task_suite = Some(if p.is_relative() { base_dir.join(p) } else { p });
            }
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
    }

    run.agents = agents;
    run.rounds = rounds;
    run.task_features = crate::env::task_feature_len(agents);
    run.validate()?;
    env.validate()?;
    let task_suite =
        task_suite.ok_or_else(|| Error::Config("missing required key `task_suite`".into()))?;
    Ok(FileConfig { run, env, task_suite })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_dims_for_three_agents() {
        let cfg = RunConfig::new(3, 2);
        // F = N + 3 for the clue-relay feature layout, D follows.
        assert_eq!(cfg.task_features, 6);
        assert_eq!(cfg.obs_dim(), 19);
        assert_eq!(cfg.state_dim(), 3 * 19 + 3);
        cfg.validate().unwrap();
    }

    #[test]
    fn parse_roundtrip_and_overrides() {
        let text = "\
# comment
agents = 4
rounds = 3
episodes = 10   # trailing comment
learning_rate = 1e-3
task_suite = tasks.txt
";
        let cfg = parse_config(text, Path::new("/some/dir")).unwrap();
        assert_eq!(cfg.run.agents, 4);
        assert_eq!(cfg.run.rounds, 3);
        assert_eq!(cfg.run.episodes, 10);
        assert_eq!(cfg.run.learning_rate, 1e-3);
        assert_eq!(cfg.run.task_features, 7);
        assert_eq!(cfg.task_suite, PathBuf::from("/some/dir/tasks.txt"));
    }

    #[test]
    fn unknown_key_rejected() {
        let err = parse_config("agnts = 3\ntask_suite = x", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("unknown key"));
    }

    #[test]
    fn duplicate_key_rejected() {
        let err = parse_config("agents = 3\nagents = 4\ntask_suite = x", Path::new("."))
            .unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn missing_suite_rejected() {
        let err = parse_config("agents = 3", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("task_suite"));
    }

    #[test]
    fn invalid_values_rejected() {
        for bad in [
            "agents = 1",
            "gamma = 1.0",
            "epsilon_start = 0.1\nepsilon_end = 0.5",
            "batch_size = 0",
            "rounds = 0",
        ] {
            let text = format!("{bad}\ntask_suite = x");
            assert!(parse_config(&text, Path::new(".")).is_err(), "{bad}");
        }
    }
}
