use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use bars_core::ledger::{dump_chain, load_chain};
use bars_core::simkit::bench::{bench_auth, BenchConfig};
use bars_core::simkit::overhead::calc_overhead;
use bars_core::simkit::plots::emit_plots;
use bars_core::simkit::{run_scenario, write_bench, write_run, Scenario};

#[derive(Parser)]
#[command(name = "bars", version, about = "Anonymous authentication and reputation for simulated vehicular networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write its run directory. Exits nonzero if any probe fails.
    RunScenario {
        file: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Defaults to runs/<scenario name>.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Time proof verification against CerBC size.
    BenchAuth {
        /// CerBC sizes; repeat or comma-separate.
        #[arg(long = "n", value_delimiter = ',', num_args = 1..)]
        n: Vec<u64>,
        #[arg(long, default_value_t = 0.1)]
        revoked_frac: f64,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 25)]
        rounds: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "runs/bench")]
        out_dir: PathBuf,
    },
    /// Closed-form storage, bandwidth and authentication-time figures.
    CalcOverhead {
        /// Issued certificates.
        #[arg(long)]
        n: u64,
        /// Revoked keys.
        #[arg(long)]
        m: u64,
        /// Packets received per second.
        #[arg(long)]
        i: f64,
        /// Packets per second that carry a new key.
        #[arg(long)]
        j: f64,
        #[arg(long)]
        json: bool,
    },
    /// Validate a persisted chain file and print its blocks.
    DumpChain { file: PathBuf },
    /// Render score or benchmark CSVs to SVG.
    EmitPlots {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long, default_value = "plots")]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::RunScenario { file, seed, out_dir } => {
            let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let mut scenario = Scenario::from_toml(&text).with_context(|| format!("loading {}", file.display()))?;
            if let Some(seed) = seed {
                scenario.seed = seed;
            }
            let out = run_scenario(&scenario)?;
            let dir = out_dir.unwrap_or_else(|| PathBuf::from("runs").join(&scenario.name));
            write_run(&out, &scenario, &dir)?;
            let s = &out.stats;
            println!(
                "{}: seed {}, {} broadcasts ({} accepted), {} judgments, {} key updates, {} revocations",
                scenario.name, scenario.seed, s.broadcasts, s.accepted, s.judgments, s.key_updates, s.revocations
            );
            println!("{} cover revocations, {} privacy holds", s.cover_revocations, s.privacy_holds);
            for p in &out.probes {
                println!("{} {:<34} {}", if p.passed { "PASS" } else { "FAIL" }, p.name, p.detail);
            }
            println!("wrote {}", dir.display());
            Ok(if out.all_probes_pass() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::BenchAuth { n, revoked_frac, trials, rounds, seed, out_dir } => {
            let defaults = BenchConfig::default();
            let cfg = BenchConfig {
                n_values: if n.is_empty() { defaults.n_values } else { n },
                revoked_frac,
                trials,
                rounds,
                seed,
            };
            let table = bench_auth(&cfg)?;
            let manifest = write_bench(&table, &out_dir)?;
            print!("{}", table.to_csv());
            let fit = &manifest.fit;
            println!(
                "fit: verify_ms = {:.6} + {:.6} * (log2 n + log2 m), R^2 = {:.4}",
                fit.intercept, fit.slope, fit.r2
            );
            println!("wrote {}", out_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::CalcOverhead { n, m, i, j, json } => {
            let report = calc_overhead(n, m, i, j)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!("{report}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::DumpChain { file } => {
            let bytes = fs::read(&file).with_context(|| format!("reading {}", file.display()))?;
            let chain = load_chain(&bytes).with_context(|| format!("{} is not a valid chain", file.display()))?;
            print!("{}", dump_chain(&chain));
            Ok(ExitCode::SUCCESS)
        }
        Command::EmitPlots { csv, out_dir } => {
            for path in emit_plots(&csv, &out_dir)? {
                println!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
