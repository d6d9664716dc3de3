use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use cfmdp::bounds::build_interval_cfmdp;
use cfmdp::experiments::{self, EnvConfig, RunConfig};
use cfmdp::gumbel::build_gumbel_cfmdp;
use cfmdp::interval_vi::{point_value_iteration, robust_value_iteration, RobustMode};
use cfmdp::io::{self, CfMdpJson, IcfMdpJson, SolutionJson};
use cfmdp::{AssumptionSet, Error, Mdp, ObservedPath};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

/// Interval counterfactual MDPs from observed paths.
#[derive(Debug, Parser)]
#[command(name = "cfmdp", version)]
struct Cli {
    /// Run seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; without it single results go to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Causal assumptions (overrides the config file).
    #[arg(long, global = true, value_parser = parse_assumptions)]
    assumptions: Option<AssumptionSet>,
    #[command(subcommand)]
    command: Command,
}

fn parse_assumptions(s: &str) -> Result<AssumptionSet, String> {
    s.parse()
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EnvName {
    Toy,
    Gridworld,
    FrozenLake,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Pessimistic,
    Optimistic,
}

impl From<Mode> for RobustMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Pessimistic => RobustMode::Pessimistic,
            Mode::Optimistic => RobustMode::Optimistic,
        }
    }
}

/// Where the model and observed path come from.
#[derive(Debug, Args)]
struct Input {
    /// MDP JSON file (defaults to the configured environment).
    #[arg(long)]
    mdp: Option<PathBuf>,
    /// Path JSON file (defaults to a path sampled under a random policy).
    #[arg(long)]
    path: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Emit a benchmark MDP as JSON.
    Env {
        #[arg(value_enum)]
        name: EnvName,
        /// Intended-move probability for GridWorld.
        #[arg(long, default_value_t = 0.9)]
        p: f64,
    },
    /// Interval CFMDP for an observed path.
    Bounds {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Compare the closed-form bounds with the coupling LP, as CSV.
    Verify {
        #[command(flatten)]
        input: Input,
    },
    /// Robust value iteration on the interval CFMDP.
    Solve {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value_t = Mode::Pessimistic)]
        mode: Mode,
    },
    /// Gumbel-max CFMDP and its optimal policy.
    Gumbel {
        #[command(flatten)]
        input: Input,
        /// Posterior samples per time step (defaults to the config value).
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Off-policy evaluation bounds.
    Ope,
    /// Worst-case values of the robust and Gumbel-max policies.
    Robustness,
    /// Mean bound widths per assumption set.
    Boundstats,
    /// ICFMDP versus Gumbel-max generation time.
    Timing,
    /// Reward traces on CFMDPs sampled from the interval model.
    Traces,
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg: RunConfig = match &cli.config {
        Some(p) => io::load_json(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(a) = cli.assumptions {
        cfg.assumptions = a;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if cfg.run_id.is_empty() {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        cfg.run_id = format!("{}-{secs}", cfg.seed);
    }
    Ok(cfg)
}

fn load_inputs(input: &Input, cfg: &RunConfig) -> Result<(Mdp, ObservedPath), Error> {
    let m: Mdp = match &input.mdp {
        Some(p) => io::load_json(p)?,
        None => cfg.validate()?,
    };
    let path = match &input.path {
        Some(p) => {
            let path: ObservedPath = io::load_json(p)?;
            path.check_against(&m)?;
            path
        }
        None => experiments::trial(&m, cfg, 0)?.path,
    };
    Ok((m, path))
}

/// Writes `text` to `out/name`, or to stdout without an output directory.
fn emit(out: Option<&Path>, name: &str, text: &str) -> Result<(), Error> {
    match out {
        Some(dir) => {
            let file = dir.join(name);
            let mut f = io::create_file(&file)?;
            std::io::Write::write_all(&mut f, text.as_bytes()).map_err(io::IoError::from)?;
            eprintln!("wrote {}", file.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data serialises") + "\n"
}

fn csv_string<T: serde::Serialize>(records: &[T]) -> Result<String, Error> {
    let mut buf = Vec::new();
    io::write_csv(&mut buf, records)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

fn append(cfg: &RunConfig, name: &str, records: &[impl serde::Serialize]) -> Result<(), Error> {
    let file = cfg.output_dir.join(name);
    io::append_csv(&file, records)?;
    eprintln!("appended {} rows to {}", records.len(), file.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = load_config(&cli)?;
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Env { name, p } => {
            let env = match name {
                EnvName::Toy => EnvConfig::Toy,
                EnvName::Gridworld => EnvConfig::Gridworld { p: *p },
                EnvName::FrozenLake => EnvConfig::FrozenLake,
            };
            emit(out, "mdp.json", &to_json(&env.build()?))
        }
        Command::Bounds { input, format } => {
            let (m, path) = load_inputs(input, &cfg)?;
            let icf = build_interval_cfmdp(&m, &path, cfg.assumptions)?;
            match format {
                Format::Json => emit(out, "icfmdp.json", &to_json(&IcfMdpJson::from(&icf))),
                Format::Csv => {
                    let mut buf = Vec::new();
                    io::write_icfmdp_csv(&mut buf, &icf)?;
                    emit(out, "icfmdp.csv", &String::from_utf8(buf).expect("csv output is utf-8"))
                }
            }
        }
        Command::Verify { input } => {
            let (m, path) = load_inputs(input, &cfg)?;
            let records = experiments::verify_path(&m, &path, cfg.assumptions)
                .map_err(|e| Error::Invariant(format!("oracle failed: {e}")))?;
            emit(out, "verify.csv", &csv_string(&records)?)?;
            let worst = records.iter().map(|r| r.delta).fold(0.0, f64::max);
            if worst > 1e-8 {
                return Err(Error::Invariant(format!("closed form and LP differ by {worst:e}")));
            }
            Ok(())
        }
        Command::Solve { input, mode } => {
            let (m, path) = load_inputs(input, &cfg)?;
            let icf = build_interval_cfmdp(&m, &path, cfg.assumptions)?;
            let sol = robust_value_iteration(&icf, (*mode).into())?;
            emit(out, "solution.json", &to_json(&SolutionJson::from(&sol)))
        }
        Command::Gumbel { input, samples } => {
            let (m, path) = load_inputs(input, &cfg)?;
            let n = samples.unwrap_or(cfg.gumbel_samples);
            let g = build_gumbel_cfmdp(&m, &path, n, cfg.seed)?;
            let (policy, values) = point_value_iteration(&g.model, &m);
            let doc = json!({
                "cfmdp": CfMdpJson::from_gumbel(&g, &m),
                "policy": policy.nested(),
                "values": values.nested(),
            });
            emit(out, "gumbel.json", &to_json(&doc))
        }
        Command::Ope => {
            let r = experiments::run_ope(&cfg)?;
            append(&cfg, "ope.csv", &r.records)?;
            let bracketed = r.mean_pessimistic <= r.true_value && r.true_value <= r.mean_optimistic;
            println!(
                "{}",
                json!({
                    "true_value": r.true_value,
                    "mean_pessimistic": r.mean_pessimistic,
                    "mean_optimistic": r.mean_optimistic,
                    "mean_gumbel": r.mean_gumbel,
                    "se_gumbel": r.se_gumbel,
                    "bracketed": bracketed,
                })
            );
            Ok(())
        }
        Command::Robustness => {
            let records = experiments::run_robustness(&cfg)?;
            append(&cfg, "robustness.csv", &records)?;
            let gaps: Vec<f64> = records.iter().map(|r| r.gap).collect();
            let icf: Vec<f64> = records.iter().map(|r| r.icf_policy_value).collect();
            let gum: Vec<f64> = records.iter().map(|r| r.gumbel_policy_value).collect();
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            println!(
                "{}",
                json!({
                    "trials": records.len(),
                    "mean_icf_policy_value": mean(&icf),
                    "se_icf_policy_value": experiments::std_error(&icf),
                    "mean_gumbel_policy_value": mean(&gum),
                    "se_gumbel_policy_value": experiments::std_error(&gum),
                    "mean_gap": mean(&gaps),
                    "dominated_trials": gaps.iter().filter(|&&g| g < -1e-9).count(),
                })
            );
            Ok(())
        }
        Command::Boundstats => {
            let r = experiments::run_bound_stats(&cfg)?;
            append(&cfg, "bound_widths.csv", &r.transitions)?;
            append(&cfg, "bound_width_means.csv", &r.means)?;
            println!("{}", serde_json::to_string(&r.means).expect("plain data serialises"));
            Ok(())
        }
        Command::Timing => {
            let records = experiments::run_timing(&cfg)?;
            append(&cfg, "timing.csv", &records)?;
            let n = records.len() as f64;
            let icf = records.iter().map(|r| r.icf_seconds).sum::<f64>() / n;
            let gum = records.iter().map(|r| r.gumbel_seconds).sum::<f64>() / n;
            println!(
                "{}",
                json!({ "mean_icf_seconds": icf, "mean_gumbel_seconds": gum, "speedup": gum / icf })
            );
            Ok(())
        }
        Command::Traces => {
            let r = experiments::run_cf_traces(&cfg)?;
            append(&cfg, "traces.csv", &r.steps)?;
            append(&cfg, "trace_summary.csv", &r.summaries)?;
            println!("{}", serde_json::to_string(&r.summaries).expect("plain data serialises"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
