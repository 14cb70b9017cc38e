use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use v2vrl::config::SimConfig;
use v2vrl::env::Environment;
use v2vrl::exec::{configure_threads_from_env, Execution};
use v2vrl::gradcheck::run_gradcheck;
use v2vrl::policies::{micro_instance, oracle_best_return, PolicyKind};
use v2vrl::qnet::QNetwork;
use v2vrl::rng::rng_stream;
use v2vrl::sweep::{parse_list, parse_seeds, run_sweep};
use v2vrl::trainer::{evaluate, run_episode, train, EvalOptions, Policy, TrainerConfig};
use v2vrl::{Error, Result};

const GRADCHECK_TOL: f64 = 1e-5;
const ORACLE_GAP_TOL: f64 = 0.01;

#[derive(Parser)]
#[command(
    name = "v2vrl",
    version,
    about = "V2V spectrum sharing with decentralized deep Q-learning"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a shared Q-network and save a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-episode training log as CSV.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Evaluate one policy and print its success probability.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long, default_value = "dqn")]
        policy: PolicyKind,
    },
    /// Train and evaluate every (vehicle count, seed) cell and write a CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "20,40,60,80,100")]
        vehicles: String,
        #[arg(long, default_value = "1..5")]
        seeds: String,
        #[arg(long, default_value = "random,dqn")]
        policies: String,
        /// Defaults to `output_path` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        sequential: bool,
    },
    /// Compare backpropagated gradients with central differences.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Train on the frozen two-agent instance and compare with exhaustive search.
    OracleCheck {
        #[arg(long, default_value_t = 2000)]
        episodes: usize,
        #[arg(long, default_value_t = 3)]
        horizon: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn cmd_train(config: PathBuf, out: PathBuf, log: Option<PathBuf>) -> Result<()> {
    let cfg = SimConfig::load(&config)?;
    let mut env = Environment::new(cfg.env_config()?)?;
    let outcome = train(&mut env, &cfg.trainer_config(), cfg.seed)?;
    outcome.net.save(&out)?;
    if let Some(path) = log {
        std::fs::write(path, outcome.log.to_csv())?;
    }
    let tail = &outcome.log.episodes[outcome.log.episodes.len().saturating_sub(100)..];
    let recent = tail.iter().map(|e| e.success_rate).sum::<f64>() / tail.len().max(1) as f64;
    println!(
        "trained {} episodes, {} updates; recent success rate {recent:.4}; checkpoint {}",
        outcome.log.episodes.len(),
        outcome.log.updates,
        out.display()
    );
    Ok(())
}

fn cmd_eval(config: PathBuf, ckpt: Option<PathBuf>, policy: PolicyKind) -> Result<()> {
    let cfg = SimConfig::load(&config)?;
    let env_cfg = cfg.env_config()?;
    let tr_cfg = cfg.trainer_config();
    let template = Environment::new(env_cfg.clone())?;
    let opts = EvalOptions {
        episodes: cfg.eval_episodes,
        seed: cfg.seed,
        gamma: tr_cfg.gamma,
        record_actions: false,
        exec: Execution::default(),
    };
    let report = match policy {
        PolicyKind::RandomBaseline => evaluate(&template, &Policy::Random, &opts)?,
        PolicyKind::GreedyQnet => {
            let path = ckpt.ok_or_else(|| Error::Contract("--ckpt is required for --policy dqn".into()))?;
            let net = QNetwork::load(&path)?;
            let want = tr_cfg.layer_dims(&env_cfg);
            if net.dims() != want {
                return Err(Error::Checkpoint(format!(
                    "network shape {:?} does not match the config's {:?}",
                    net.dims(),
                    want
                )));
            }
            evaluate(&template, &Policy::Greedy(&net), &opts)?
        }
        PolicyKind::Oracle => {
            let mut env = template.clone();
            env.reset(&mut rng_stream(cfg.seed, "eval/0"))?;
            let best = oracle_best_return(&env, tr_cfg.gamma)?;
            evaluate(&template, &Policy::Sequence(&best.best_sequence), &opts)?
        }
    };
    println!(
        "policy={policy} n_vehicles={} episodes={} success_probability={:.6} mean_v2i_capacity_bps={:.1}",
        env_cfg.n_vehicles,
        report.episodes.len(),
        report.success_probability,
        report.mean_v2i_capacity_bps
    );
    Ok(())
}

fn cmd_sweep(
    config: PathBuf,
    vehicles: &str,
    seeds: &str,
    policies: &str,
    out: Option<PathBuf>,
    sequential: bool,
) -> Result<()> {
    let cfg = SimConfig::load(&config)?;
    let counts = parse_list(vehicles)?;
    let seeds = parse_seeds(seeds)?;
    let policies = policies
        .split(',')
        .map(|p| p.trim().parse::<PolicyKind>())
        .collect::<Result<Vec<_>>>()?;
    let exec = if sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let result = run_sweep(&cfg, &counts, &policies, &seeds, exec)?;
    let out = out.unwrap_or_else(|| cfg.output_path.clone());
    result.write_csv(&out)?;
    println!("wrote {} rows to {}", result.rows.len(), out.display());
    Ok(())
}

fn cmd_gradcheck(trials: usize, seed: u64) -> Result<ExitCode> {
    let dims = TrainerConfig::default().layer_dims(&Default::default());
    let report = run_gradcheck(&dims, trials, seed)?;
    let ok = report.max_rel_error < GRADCHECK_TOL;
    println!(
        "gradcheck dims={dims:?} trials={} params={} max_rel_error={:.3e} tol={GRADCHECK_TOL:e} {}",
        report.trials,
        report.params_checked,
        report.max_rel_error,
        if ok { "PASS" } else { "FAIL" }
    );
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn cmd_oracle_check(episodes: usize, horizon: usize, seed: u64) -> Result<ExitCode> {
    let mut env = micro_instance(horizon)?;
    let tr_cfg = TrainerConfig {
        episodes,
        ..TrainerConfig::default()
    };
    env.reset(&mut rng_stream(seed, "oracle"))?;
    let best = oracle_best_return(&env, tr_cfg.gamma)?;
    let net = train(&mut env, &tr_cfg, seed)?.net;
    // Channels are frozen, so the streams below do not affect the outcome.
    let greedy = run_episode(
        &mut env,
        &Policy::Greedy(&net),
        tr_cfg.gamma,
        false,
        &mut rng_stream(seed, "eval/0"),
        &mut rng_stream(seed, "eval-policy/0"),
    )?;
    let gap = (greedy.discounted_return - best.best_return).abs() / best.best_return.abs().max(f64::MIN_POSITIVE);
    let ok = gap <= ORACLE_GAP_TOL;
    println!(
        "oracle_return={:.9} greedy_return={:.9} relative_gap={gap:.3e} sequences={} {}",
        best.best_return,
        greedy.discounted_return,
        best.sequences_evaluated,
        if ok { "PASS" } else { "FAIL" }
    );
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Train { config, out, log } => cmd_train(config, out, log).map(|_| ExitCode::SUCCESS),
        Cmd::Eval { config, ckpt, policy } => cmd_eval(config, ckpt, policy).map(|_| ExitCode::SUCCESS),
        Cmd::Sweep {
            config,
            vehicles,
            seeds,
            policies,
            out,
            sequential,
        } => cmd_sweep(config, &vehicles, &seeds, &policies, out, sequential).map(|_| ExitCode::SUCCESS),
        Cmd::Gradcheck { trials, seed } => cmd_gradcheck(trials, seed),
        Cmd::OracleCheck {
            episodes,
            horizon,
            seed,
        } => cmd_oracle_check(episodes, horizon, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads_from_env();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("v2vrl: error: {e}");
            ExitCode::FAILURE
        }
    }
}
