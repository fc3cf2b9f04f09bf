// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use collachain_sim::config::CommitModeName;
use collachain_sim::explorer::{explore, ExploreConfig};
use collachain_sim::report::{
    plot_mode_comparison, plot_scaling, plot_throughput, read_runs_csv, write_comparison_csv, write_runs_csv, RunRow,
};
use collachain_sim::sharding::wall_clock_scaling;
use collachain_sim::{run_simulation, slowdown_model, RunMetrics, SimConfig, SimError, WorkloadKind};

/// Exit status when a safety violation is found.
const EXIT_VIOLATION: u8 = 2;

#[derive(Parser)]
#[command(name = "collachain", version, about = "Simulate and benchmark CollaChain networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation from a TOML configuration.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Write the full event trace here, one event per line.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Sweep network sizes and seeds at a constant rate.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "4,10,20")]
        nodes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        /// Transactions per second.
        #[arg(long, default_value_t = 500)]
        rate: u64,
        /// Workload length in milliseconds of simulated time.
        #[arg(long, default_value_t = 3_000)]
        duration_ms: u64,
        #[arg(long, default_value_t = 100)]
        block_size: usize,
        /// Also compare per-block and whole-superblock persistence.
        #[arg(long)]
        compare_modes: bool,
        /// Also time this many independent shards in parallel (wall clock).
        #[arg(long)]
        shards: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Exhaustively explore delivery orders of one consensus index.
    Explore {
        #[arg(long, default_value_t = 10)]
        depth: usize,
    },
    /// Eager-validation slowdown of a propagating node.
    AnalyzeSlowdown {
        /// Eager validation time of the non-propagating node (seconds).
        delta: f64,
        /// Total time of the non-propagating node (seconds).
        total: f64,
        /// Number of nodes.
        n: u64,
    },
    /// Plot a run or bench CSV.
    Report {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

type CliResult = Result<ExitCode, Box<dyn std::error::Error>>;

fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::Run { config, seed, out, trace } => run(config, seed, &out, trace),
        Command::Bench {
            nodes,
            seeds,
            rate,
            duration_ms,
            block_size,
            compare_modes,
            shards,
            out,
        } => bench(&nodes, seeds, rate, duration_ms * 1_000, block_size, compare_modes, shards, &out),
        Command::Explore { depth } => {
            let r = explore(ExploreConfig {
                depth,
                ..ExploreConfig::default()
            });
            println!("depth {} states {} leaves {} pruned {}", r.depth, r.states, r.leaves, r.pruned);
            if r.violations.is_empty() {
                println!("no violations");
                Ok(ExitCode::SUCCESS)
            } else {
                for v in &r.violations {
                    println!("violation: {v}");
                }
                Ok(ExitCode::from(EXIT_VIOLATION))
            }
        }
        Command::AnalyzeSlowdown { delta, total, n } => {
            let s = slowdown_model(delta, total, n)?;
            println!("beta      {:.4}", s.beta);
            println!("delta_evm {:.4}", s.delta_evm);
            println!("Delta_evm {:.4}", s.total_evm);
            println!("S         {:.4} ({:.1}%)", s.s, s.s * 100.0);
            println!("S_limit   {:.4} ({:.1}%)", s.s_limit, s.s_limit * 100.0);
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { csv, out } => {
            fs::create_dir_all(&out)?;
            let rows = read_runs_csv(&csv)?;
            plot_scaling(&out.join("throughput_vs_n.svg"), &out.join("latency_vs_n.svg"), &rows)?;
            println!("{} rows plotted into {}", rows.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn summarize(m: &RunMetrics) {
    let secs = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}s"));
    println!(
        "{}: submitted {} committed {} dropped {} pending {} | {:.1} tx/s | p50 {} p90 {} p99 {} | {:.2} blocks/superblock",
        m.run_id,
        m.submitted,
        m.committed,
        m.dropped,
        m.pending,
        m.tps_mean,
        secs(m.p50),
        secs(m.p90),
        secs(m.p99),
        m.superblock_mean_blocks()
    );
}

fn report_failure(e: SimError, out: &Path) -> CliResult {
    match e {
        SimError::Violation(v) => {
            eprintln!("{v}");
            fs::create_dir_all(out)?;
            let path = out.join("violation.txt");
            let lines: Vec<String> = v.trace.iter().map(|t| format!("{t:?}")).collect();
            fs::write(&path, lines.join("\n"))?;
            eprintln!("trace of the violating index written to {}", path.display());
            Ok(ExitCode::from(EXIT_VIOLATION))
        }
        other => Err(other.into()),
    }
}

fn run(config: Option<PathBuf>, seed: Option<u64>, out: &Path, trace: Option<PathBuf>) -> CliResult {
    let mut cfg = match config {
        Some(p) => SimConfig::load(&p)?,
        None => SimConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.record_trace |= trace.is_some();
    let output = match run_simulation(&cfg) {
        Ok(o) => o,
        Err(e) => return report_failure(e, out),
    };
    fs::create_dir_all(out)?;
    summarize(&output.metrics);
    println!("trace digest {}", output.trace_digest.to_hex());
    write_runs_csv(&out.join("runs.csv"), std::slice::from_ref(&output.metrics))?;
    plot_throughput(&out.join("throughput.svg"), std::slice::from_ref(&output.metrics))?;
    if let Some(path) = trace {
        let lines: Vec<String> = output.trace.iter().map(|t| format!("{t:?}")).collect();
        fs::write(path, lines.join("\n"))?;
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn bench(
    nodes: &[usize],
    seeds: u64,
    rate: u64,
    duration: u64,
    block_size: usize,
    compare_modes: bool,
    shards: Option<usize>,
    out: &Path,
) -> CliResult {
    fs::create_dir_all(out)?;
    let base = |n: usize, seed: u64| {
        let mut cfg = SimConfig::for_nodes(n);
        cfg.seed = seed;
        cfg.chain.proposal_threshold = block_size;
        cfg.workload = WorkloadKind::ConstantRate { rate, duration };
        cfg.duration = duration * 3 + 5_000_000;
        cfg
    };
    let mut runs = Vec::new();
    for &n in nodes {
        for seed in 0..seeds {
            let output = match run_simulation(&base(n, seed)) {
                Ok(o) => o,
                Err(e) => return report_failure(e, out),
            };
            summarize(&output.metrics);
            runs.push(output.metrics);
        }
    }
    let csv = out.join("bench.csv");
    write_runs_csv(&csv, &runs)?;
    let rows: Vec<RunRow> = runs.iter().map(RunRow::from).collect();
    plot_scaling(&out.join("throughput_vs_n.svg"), &out.join("latency_vs_n.svg"), &rows)?;
    plot_throughput(&out.join("throughput.svg"), &runs)?;
    println!("wrote {}", csv.display());

    if compare_modes {
        let n = nodes.first().copied().unwrap_or(4);
        let mut pair = Vec::new();
        for mode in [CommitModeName::PerBlock, CommitModeName::WholeSuperblock] {
            let mut cfg = base(n, 0);
            cfg.commit_mode = mode;
            let mut m = match run_simulation(&cfg) {
                Ok(o) => o.metrics,
                Err(e) => return report_failure(e, out),
            };
            m.run_id = format!("{}-{}", m.run_id, m.commit_mode);
            summarize(&m);
            pair.push(m);
        }
        write_comparison_csv(&out.join("comparison.csv"), &pair)?;
        plot_mode_comparison(&out.join("modes.svg"), &pair[0], &pair[1])?;
        println!(
            "state digests {} {}",
            if pair[0].state_digest == pair[1].state_digest { "match" } else { "DIFFER" },
            pair[0].state_digest
        );
    }
    if let Some(k) = shards {
        let cfg = base(nodes.first().copied().unwrap_or(4), 0);
        let (single, aggregate) = wall_clock_scaling(&cfg, rate, duration, k);
        println!(
            "wall clock: 1 shard {single:.0} tx/s, {k} shards {aggregate:.0} tx/s aggregate ({:.2}x, informal)",
            aggregate / single.max(f64::MIN_POSITIVE)
        );
    }
    Ok(ExitCode::SUCCESS)
}
