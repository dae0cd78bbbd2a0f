//! `leosched` command-line front end.
//!
//! Exit codes: 0 success, 1 EPFD audit found violations, 2 configuration or
//! schema error, 3 training diverged, 4 any other failure.

use clap::{Args, Parser, Subcommand};
use leosched::audit::audit;
use leosched::policy::{train, BanditEnv, Environment, PolicyParams, TrainConfig};
use leosched::simharness::config::{PolicyKind, ScenarioConfig, Strategy};
use leosched::simharness::engine::{run_episode, write_trace_jsonl, PolicyHandle, RunOptions};
use leosched::simharness::output::{write_csv, write_file, ArtifactHeader};
use leosched::simharness::sweep::{apply_axis, preset, run_sweep, summarize, Axis, ScenarioEnv, SweepRun, SweepSpec, SUMMARY_METRICS};
use leosched::simharness::world::{rng_for, stream};
use leosched::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "leosched", version, about = "Beam, channel and power scheduling simulator for multi-beam LEO downlinks")]
struct Cli {
    /// Worker threads for per-satellite and sweep parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct OutDir {
    /// Output directory.
    #[arg(long, env = "LEOSCHED_OUT_DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write metrics.csv, completions.csv and optionally trace.jsonl.
    Simulate {
        /// Scenario config (JSON).
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the strategy: proposed, full_reuse or single_channel.
        #[arg(long)]
        strategy: Option<Strategy>,
        /// Override the slot count.
        #[arg(long)]
        slots: Option<u64>,
        /// Use these policy parameters (implies the neural policy).
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Also write the per-slot allocation trace.
        #[arg(long)]
        trace: bool,
        #[command(flatten)]
        out: OutDir,
    },
    /// Sweep one axis over seeds and strategies; writes a tidy summary CSV per sweep.
    Sweep {
        /// Scenario config (JSON); required unless --preset is given.
        #[arg(long, required_unless_present = "preset")]
        config: Option<PathBuf>,
        /// Named sweep family: fig3, fig4 or fig5.
        #[arg(long, conflicts_with_all = ["config", "axis", "values"])]
        preset: Option<String>,
        /// neighbors, power, beams, uts, arrival_rate or max_channels.
        #[arg(long, requires = "config")]
        axis: Option<String>,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', requires = "axis")]
        values: Vec<f64>,
        /// Comma-separated strategies (default: all three).
        #[arg(long, value_delimiter = ',')]
        strategies: Vec<Strategy>,
        /// Number of seeds per cell, numbered from 1.
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        /// Policy parameters for the proposed strategy (implies the neural policy).
        #[arg(long)]
        policy: Option<PathBuf>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Train the neural policy; writes policy.json and train_log.csv.
    Train {
        /// Scenario config (JSON) whose runs are the training episodes.
        #[arg(long, required_unless_present = "bandit")]
        config: Option<PathBuf>,
        /// Train on the two-beam bandit instead of a scenario.
        #[arg(long)]
        bandit: bool,
        #[arg(long, default_value_t = 200)]
        iterations: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        /// Episodes per update.
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        /// Training seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Parameter file name inside the output directory.
        #[arg(long, default_value = "policy.json")]
        params_out: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Recompute EPFD at every protected user from a recorded trace.
    EpfdAudit {
        /// Scenario config the trace was produced with.
        config: PathBuf,
        /// JSONL trace written by `simulate --trace`.
        trace: PathBuf,
    },
    /// Parse and validate a scenario config.
    ValidateConfig { config: PathBuf },
}

enum Failure {
    Config(String),
    Violation(String),
    Diverged(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Schema(_) | Error::Json(_) | Error::Io { .. } => Failure::Config(e.to_string()),
            Error::Diverged { .. } => Failure::Diverged(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

fn load(path: &Path) -> Result<ScenarioConfig, Failure> {
    Ok(ScenarioConfig::load(path)?)
}

fn use_params(cfg: &mut ScenarioConfig, params: &Option<PathBuf>) -> Result<(), Failure> {
    if let Some(p) = params {
        if !p.exists() {
            return Err(Failure::Config(format!("policy file {} does not exist", p.display())));
        }
        cfg.policy.kind = PolicyKind::Neural;
        cfg.policy.params_path = Some(p.clone());
    }
    Ok(())
}

fn simulate(config: &Path, seed: Option<u64>, strategy: Option<Strategy>, slots: Option<u64>, policy: &Option<PathBuf>, trace: bool, out: &Path) -> Result<(), Failure> {
    let mut cfg = load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(s) = strategy {
        cfg.strategy = s;
    }
    if let Some(n) = slots {
        cfg.num_slots = n;
    }
    use_params(&mut cfg, policy)?;
    cfg.validate()?;
    let handle = PolicyHandle::from_config(&cfg)?;
    let run = run_episode(&cfg, &handle, &RunOptions { trace, ..Default::default() })?;
    let header = ArtifactHeader::for_config(&cfg);
    write_csv(&out.join("metrics.csv"), &header, &[&run.metrics])?;
    write_csv(&out.join("completions.csv"), &header, &run.completions)?;
    write_file(&out.join("config.json"), serde_json::to_string_pretty(&cfg).map_err(Error::from)?.as_bytes())?;
    if trace {
        let mut buf = Vec::new();
        write_trace_jsonl(&mut buf, &header.json(), &run.trace)?;
        write_file(&out.join("trace.jsonl"), &buf)?;
    }
    let m = &run.metrics;
    println!(
        "strategy {} seed {}: throughput/sat {:.4e} bit/s, throughput/UT {:.4e} bit/s, mean latency {:.3} slots, expiry rate {:.4}, violations {}",
        m.strategy, m.seed, m.throughput_per_sat_bps, m.throughput_per_ut_bps, m.mean_latency_slots, m.expiry_rate, m.total_violations()
    );
    Ok(())
}

/// Raw per-run rows: sweep name and axis value followed by every metric column.
fn run_rows(name: &str, runs: &[SweepRun], header: &ArtifactHeader) -> Result<Vec<u8>, Failure> {
    let mut out = header.comment_lines().into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for (i, r) in runs.iter().enumerate() {
            let v = serde_json::to_value(&r.metrics).map_err(Error::from)?;
            let obj = v.as_object().ok_or_else(|| Failure::Other("metrics are not an object".into()))?;
            if i == 0 {
                let mut h = vec!["sweep".to_string(), "axis_value".to_string()];
                h.extend(obj.keys().cloned());
                w.write_record(&h).map_err(Error::from)?;
            }
            let mut rec = vec![name.to_string(), r.axis_value.to_string()];
            rec.extend(obj.values().map(|x| match x {
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Null => "inf".to_string(),
                other => other.to_string(),
            }));
            w.write_record(&rec).map_err(Error::from)?;
        }
        w.flush().map_err(|e| Error::io("csv buffer", e))?;
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn sweep(config: &Option<PathBuf>, preset_name: &Option<String>, axis: &Option<String>, values: &[f64], strategies: &[Strategy], seeds: usize, policy: &Option<PathBuf>, out: &Path) -> Result<(), Failure> {
    if seeds == 0 {
        return Err(Failure::Config("--seeds must be at least 1".into()));
    }
    let mut specs: Vec<SweepSpec> = match (preset_name, config) {
        (Some(p), _) => preset(p, seeds)?,
        (None, Some(c)) => {
            let base = load(c)?;
            let axis_name = axis.as_deref().ok_or_else(|| Failure::Config("--axis is required with --config".into()))?;
            let axis: Axis = axis_name.parse()?;
            if values.is_empty() {
                return Err(Failure::Config("--values is required with --axis".into()));
            }
            for &v in values {
                let mut probe = base.clone();
                apply_axis(&mut probe, axis, v)?;
                probe.validate()?;
            }
            vec![SweepSpec { name: axis.name().to_string(), base, axis, values: values.to_vec(), strategies: Strategy::ALL.to_vec(), seeds: (1..=seeds as u64).collect() }]
        }
        (None, None) => return Err(Failure::Config("give --config or --preset".into())),
    };
    for s in &mut specs {
        if !strategies.is_empty() {
            s.strategies = strategies.to_vec();
        }
        use_params(&mut s.base, policy)?;
    }
    for spec in &specs {
        let runs: Vec<SweepRun> = run_sweep(spec, None)?;
        let rows = summarize(spec, &runs, SUMMARY_METRICS);
        let header = ArtifactHeader::for_config(&spec.base);
        write_csv(&out.join(format!("sweep_{}.csv", spec.name)), &header, &rows)?;
        write_file(&out.join(format!("sweep_{}_runs.csv", spec.name)), &run_rows(&spec.name, &runs, &header)?)?;
        println!("sweep {}: {} runs, {} summary rows", spec.name, runs.len(), rows.len());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train_cmd(config: &Option<PathBuf>, bandit: bool, iterations: usize, lr: f64, episodes: usize, seed: u64, params_out: &Path, out: &Path) -> Result<(), Failure> {
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(Failure::Config("--lr must be finite and >= 0".into()));
    }
    let (env, init_cfg, header): (Box<dyn Environment>, _, ArtifactHeader) = if bandit {
        let cfg = ScenarioConfig::with_seed(seed);
        let h = ArtifactHeader::for_config(&cfg);
        (Box::new(BanditEnv::default()), cfg.policy.init, h)
    } else {
        let path = config.as_ref().ok_or_else(|| Failure::Config("--config is required".into()))?;
        let cfg = load(path)?;
        let h = ArtifactHeader::for_config(&cfg);
        let init = cfg.policy.init;
        (Box::new(ScenarioEnv { base: cfg }), init, h)
    };
    let init = PolicyParams::init(&init_cfg, &mut rng_for(0, &[stream::POLICY_INIT]));
    let tc = TrainConfig { iterations, learning_rate: lr, episodes_per_update: episodes.max(1), ..Default::default() };
    let outcome = train(env.as_ref(), init, &tc, seed)?;
    let params_path = out.join(params_out);
    if let Some(dir) = params_path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    outcome.params.save(&params_path)?;
    write_csv(&out.join("train_log.csv"), &header, &outcome.log)?;
    if let Some((it, why)) = outcome.diverged {
        return Err(Failure::Diverged(format!("training diverged at iteration {it}: {why}; last good parameters written to {}", params_path.display())));
    }
    if let (Some(first), Some(last)) = (outcome.log.first(), outcome.log.last()) {
        println!("trained {} iterations: mean latency {:.4} -> {:.4}; parameters in {}", outcome.log.len(), first.mean_latency, last.mean_latency, params_path.display());
    } else {
        println!("0 iterations; initial parameters in {}", params_path.display());
    }
    Ok(())
}

fn audit_cmd(config: &Path, trace: &Path) -> Result<(), Failure> {
    let cfg = load(config)?;
    let text = std::fs::read_to_string(trace).map_err(|e| Error::io(trace, e))?;
    let report = audit(&cfg, &text)?;
    println!("{}", report.summary());
    if report.is_compliant() {
        Ok(())
    } else {
        Err(Failure::Violation(format!("{} EPFD violations", report.violations.len())))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().map_err(|e| Failure::Other(e.to_string()))?;
    }
    match cli.cmd {
        Command::Simulate { config, seed, strategy, slots, policy, trace, out } => simulate(&config, seed, strategy, slots, &policy, trace, &out.out),
        Command::Sweep { config, preset, axis, values, strategies, seeds, policy, out } => sweep(&config, &preset, &axis, &values, &strategies, seeds, &policy, &out.out),
        Command::Train { config, bandit, iterations, lr, episodes, seed, params_out, out } => train_cmd(&config, bandit, iterations, lr, episodes, seed, &params_out, &out.out),
        Command::EpfdAudit { config, trace } => audit_cmd(&config, &trace),
        Command::ValidateConfig { config } => {
            let cfg = load(&config)?;
            cfg.protected_specs()?;
            println!("ok {} (config_sha256 {})", config.display(), cfg.hash());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violation(m)) => {
            eprintln!("{m}");
            ExitCode::from(1)
        }
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Diverged(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(4)
        }
    }
}
