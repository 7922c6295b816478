use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use curio_diffcore::{op_oracle_suite, GradCheckConfig};
use curio_drivesim::{LayoutId, Task};
use curio_evalharness::{plot_reward_rate, report_csv, run_eval, EvalReport};
use curio_pipeline::{
    append_metrics, finetune_phase, load_checkpoint, save_checkpoint, Config, FinetuneMode, Trainer,
};

#[derive(Parser)]
#[command(name = "curio", version, about = "Curiosity-driven world-model agent for a top-down driving simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Task-agnostic exploration from scratch, checkpointing after every chunk.
    Explore {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Append metrics rows to this CSV.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Overrides `train.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from the checkpoint at `--out` if it exists.
        #[arg(long)]
        resume: bool,
    },
    /// Zero- or few-shot adaptation of an explored checkpoint to one task.
    Finetune {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        task: Task,
        #[arg(long)]
        mode: FinetuneMode,
        /// Where to save the adapted run.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Evaluate afterwards and write the report here.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        layout: Option<LayoutId>,
        #[arg(long, default_value_t = 5000)]
        eval_steps: usize,
        /// Evaluation seed; defaults to `train.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Greedy evaluation of a checkpoint.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        task: Task,
        #[arg(long)]
        layout: LayoutId,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        report: PathBuf,
    },
    /// Reward-rate chart from one or more metrics files.
    Plot {
        #[arg(long, num_args = 1.., required = true)]
        metrics: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference checks of every differentiable operation.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Cmd) -> anyhow::Result<()> {
    match cmd {
        Cmd::Explore {
            config,
            out,
            metrics,
            seed,
            resume,
        } => {
            let mut cfg = Config::load(&config)?;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            cfg.validate()?;
            let mut trainer = if resume && out.exists() {
                let t = load_checkpoint(&out)?;
                if t.cfg.fingerprint() != cfg.fingerprint() {
                    bail!("{} was written with a different architecture", out.display());
                }
                t
            } else {
                if let Some(m) = metrics.as_deref().filter(|m| m.exists()) {
                    std::fs::remove_file(m).with_context(|| format!("removing stale {}", m.display()))?;
                }
                Trainer::new(cfg.clone())?
            };
            let total = cfg.train.n_explore as u64;
            let chunk = cfg.train.chunk.max(1) as u64;
            if trainer.counters.phase_steps == 0 {
                // nothing run yet: still leave a checkpoint behind
                save_checkpoint(&trainer, &out)?;
            }
            while trainer.counters.phase_steps < total {
                let n = chunk.min(total - trainer.counters.phase_steps);
                trainer.run(n, &mut |_| {})?;
                flush_metrics(&mut trainer, metrics.as_deref())?;
                save_checkpoint(&trainer, &out)?;
                println!(
                    "explore {}/{} steps, {} updates",
                    trainer.counters.phase_steps, total, trainer.counters.updates
                );
            }
            Ok(())
        }
        Cmd::Finetune {
            config,
            ckpt,
            task,
            mode,
            out,
            metrics,
            report,
            layout,
            eval_steps,
            seed,
        } => {
            let cfg = Config::load(&config)?;
            let trainer = load_checkpoint(&ckpt)?;
            let before = trainer.optimizer_steps();
            let mut tuned = finetune_phase(trainer, &cfg, task, mode)?;
            flush_metrics(&mut tuned, metrics.as_deref())?;
            println!(
                "finetune {task} ({mode:?}): {} env steps, {} optimizer steps",
                tuned.counters.phase_steps,
                tuned.optimizer_steps() - before
            );
            if let Some(out) = out {
                save_checkpoint(&tuned, &out)?;
            }
            if let Some(path) = report {
                let layout = layout.unwrap_or(cfg.train.layout);
                let r = run_eval(&tuned, task, layout, eval_steps, seed.unwrap_or(cfg.train.seed))?;
                write_report(&path, &r)?;
            }
            Ok(())
        }
        Cmd::Eval {
            ckpt,
            task,
            layout,
            steps,
            seed,
            report,
        } => {
            let trainer = load_checkpoint(&ckpt)?;
            let r = run_eval(&trainer, task, layout, steps, seed)?;
            write_report(&report, &r)
        }
        Cmd::Plot { metrics, out } => {
            plot_reward_rate(&metrics, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Cmd::Gradcheck { trials, seed } => {
            let checks = op_oracle_suite(trials, seed, &GradCheckConfig::default())?;
            let mut failed = 0;
            for c in &checks {
                println!(
                    "{:<16} {:>4} trials  worst rel err {:.3e}  {}",
                    c.name,
                    c.trials,
                    c.worst_rel_err,
                    if c.passed { "ok" } else { "FAIL" }
                );
                failed += usize::from(!c.passed);
            }
            if failed > 0 {
                bail!("{failed} of {} operations failed the gradient check", checks.len());
            }
            Ok(())
        }
    }
}

/// The error chain on one line, skipping causes their parent already quotes.
fn one_line(e: &anyhow::Error) -> String {
    let mut line = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !line.contains(&c) {
            line = format!("{line}: {c}");
        }
    }
    line.replace('\n', " ")
}

fn flush_metrics(trainer: &mut Trainer, path: Option<&Path>) -> anyhow::Result<()> {
    let rows = trainer.drain_metrics();
    if let Some(p) = path {
        append_metrics(p, &rows)?;
    }
    Ok(())
}

fn write_report(path: &Path, r: &EvalReport) -> anyhow::Result<()> {
    std::fs::write(path, report_csv(std::slice::from_ref(r)))
        .with_context(|| format!("writing {}", path.display()))?;
    println!("{}", r.summary());
    Ok(())
}
