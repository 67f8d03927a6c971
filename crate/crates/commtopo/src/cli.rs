//! Command-line entry points.
//!
//! Exit codes: 0 success, 1 failed verification property, 2 bad
//! configuration or data, 3 training fault.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::analysis::{
    action_share, analyze_suite, broadcast_eval, eval_suite, mean_outgoing_edges, verify_all,
};
use crate::config::load_config;
use crate::domain::ALL_ACTIONS;
use crate::env::{load_suite, oracle_enumerate};
use crate::error::Error;
use crate::metrics::MetricsWriter;
use crate::trainer::{load_checkpoint, save_checkpoint, Trainer};

#[derive(Debug, Parser)]
#[command(
    name = "commtopo",
    about = "Learned communication topologies for cooperative agent teams",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy and write metrics plus checkpoints.
    Train {
        /// Config file (key = value).
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for metrics.csv and checkpoints.
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy evaluation of a checkpoint over a task suite.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        suite: PathBuf,
        /// Also evaluate with an adversary injected at the last agent slot
        /// and report the accuracy drop.
        #[arg(long)]
        adversary: bool,
    },
    /// Exhaustive open-loop optimum per task.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        suite: PathBuf,
    },
    /// Per-round action histograms, densities, and the mean adjacency of a
    /// greedy policy.
    Analyze {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        suite: PathBuf,
    },
    /// Runs the monotonicity, argmax-consistency, gradient, and determinism
    /// property suites.
    Verify,
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Train(_) => 3,
        _ => 2,
    }
}

/// Runs one parsed command, returning the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Train { config, seed, out } => cmd_train(&config, seed, &out),
        Command::Eval { checkpoint, suite, adversary } => cmd_eval(&checkpoint, &suite, adversary),
        Command::Oracle { config, suite } => cmd_oracle(&config, &suite),
        Command::Analyze { checkpoint, suite } => cmd_analyze(&checkpoint, &suite),
        Command::Verify => return cmd_verify(),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn cmd_train(config_path: &Path, seed: Option<u64>, out_dir: &Path) -> crate::Result<()> {
    let mut file_cfg = load_config(config_path)?;
    if let Some(seed) = seed {
        file_cfg.run.seed = seed;
    }
    let suite = load_suite(&file_cfg.task_suite)?;
    std::fs::create_dir_all(out_dir)?;
    let mut trainer = Trainer::new(file_cfg.run, file_cfg.env, suite)?;
    let mut writer = MetricsWriter::create(&out_dir.join("metrics.csv"))?;
    let interval = trainer.cfg.checkpoint_interval;
    let out = out_dir.to_path_buf();
    trainer_loop(&mut trainer, &mut writer, interval, &out)?;
    save_checkpoint(&trainer, &out.join("checkpoint_final.bin"))?;
    println!("episodes,{}", trainer.episodes_done);
    println!("grad_steps,{}", trainer.grad_steps);
    println!("final_epsilon,{}", trainer.cfg.epsilon_end);
    println!("metrics,{}", out.join("metrics.csv").display());
    println!("checkpoint,{}", out.join("checkpoint_final.bin").display());
    Ok(())
}

fn trainer_loop(
    trainer: &mut Trainer,
    writer: &mut MetricsWriter,
    interval: usize,
    out: &Path,
) -> crate::Result<()> {
    while trainer.episodes_done < trainer.cfg.episodes as u64 {
        let record = trainer.train_episode()?;
        writer.append(&record)?;
        let done = trainer.episodes_done;
        if interval > 0 && done % interval as u64 == 0 && done < trainer.cfg.episodes as u64 {
            save_checkpoint(trainer, &out.join(format!("checkpoint_ep{done}.bin")))?;
        }
    }
    Ok(())
}

fn cmd_eval(checkpoint: &Path, suite_path: &Path, adversary: bool) -> crate::Result<()> {
    let trainer = load_checkpoint(checkpoint)?;
    let suite = load_suite(suite_path)?;
    let clean = eval_suite(
        &trainer.net,
        &trainer.online_agent,
        &trainer.cfg,
        &trainer.env_cfg,
        &suite,
        None,
    )?;
    println!("tasks,{}", suite.len());
    println!("mean_accuracy,{}", clean.mean_accuracy);
    println!("mean_tokens,{}", clean.mean_tokens);
    println!("mean_reward,{}", clean.mean_reward);
    for action in ALL_ACTIONS {
        println!("share_{},{}", action.name(), action_share(&clean, action));
    }
    if adversary {
        let slot = trainer.cfg.agents - 1;
        let adv = eval_suite(
            &trainer.net,
            &trainer.online_agent,
            &trainer.cfg,
            &trainer.env_cfg,
            &suite,
            Some(slot),
        )?;
        println!("adversary_slot,{slot}");
        println!("adversarial_mean_accuracy,{}", adv.mean_accuracy);
        println!("adversarial_mean_tokens,{}", adv.mean_tokens);
        println!("adversarial_mean_reward,{}", adv.mean_reward);
        println!("accuracy_drop,{}", clean.mean_accuracy - adv.mean_accuracy);
        println!("adversary_mean_outgoing_edges,{}", mean_outgoing_edges(&adv, slot));
        println!("clean_slot_mean_outgoing_edges,{}", mean_outgoing_edges(&clean, slot));
    }
    Ok(())
}

fn cmd_oracle(config_path: &Path, suite_path: &Path) -> crate::Result<()> {
    let file_cfg = load_config(config_path)?;
    let cfg = file_cfg.run;
    let suite = load_suite(suite_path)?;
    if suite.is_empty() {
        return Err(Error::Data("task suite is empty".into()));
    }
    println!("task,best_return,accuracy,tokens,gap,sequence");
    let mut total = 0.0;
    for (index, task) in suite.iter().enumerate() {
        let result = oracle_enumerate(
            task,
            &file_cfg.env,
            cfg.rounds,
            cfg.w_acc,
            cfg.w_tok,
            cfg.max_tokens,
        )?;
        let sequence = result
            .best_sequence
            .iter()
            .map(|joint| {
                joint
                    .actions()
                    .iter()
                    .map(|a| a.code().to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect::<Vec<_>>()
            .join("|");
        let gap = if result.runner_up_return.is_nan() {
            String::new()
        } else {
            (result.best_return - result.runner_up_return).to_string()
        };
        println!(
            "{index},{},{},{},{gap},{sequence}",
            result.best_return, result.best_accuracy, result.best_tokens
        );
        total += result.best_return;
    }
    println!("mean,{},,,,", total / suite.len() as f64);
    Ok(())
}

fn cmd_analyze(checkpoint: &Path, suite_path: &Path) -> crate::Result<()> {
    let trainer = load_checkpoint(checkpoint)?;
    let suite = load_suite(suite_path)?;
    let report = analyze_suite(
        &trainer.net,
        &trainer.online_agent,
        &trainer.cfg,
        &trainer.env_cfg,
        &suite,
    )?;
    // baseline tokens for scale, useful when eyeballing efficiency
    let baseline = broadcast_eval(&trainer.cfg, &trainer.env_cfg, &suite, None)?;

    println!("# action_histogram");
    let names: Vec<&str> = ALL_ACTIONS.iter().map(|a| a.name()).collect();
    println!("round,{}", names.join(","));
    for (t, row) in report.per_round_action_counts.iter().enumerate() {
        let counts: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        println!("{},{}", t + 1, counts.join(","));
    }
    println!("# mean_density");
    println!("round,density");
    for (t, d) in report.per_round_mean_density.iter().enumerate() {
        println!("{},{}", t + 1, d);
    }
    println!("# mean_adjacency");
    for row in &report.mean_adjacency {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        println!("{}", cells.join(","));
    }
    println!("# baseline");
    println!("all_broadcast_mean_tokens,{}", baseline.mean_tokens);
    Ok(())
}

fn cmd_verify() -> i32 {
    let results = verify_all();
    let mut failed = 0;
    for check in &results {
        let status = if check.passed { "pass" } else { "FAIL" };
        println!("{},{},{},{}", check.name, status, check.worst, check.detail);
        if !check.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        eprintln!("{failed} verification check(s) failed");
        1
    } else {
        0
    }
}
