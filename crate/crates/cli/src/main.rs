use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use cpm_core::harness::{
    presets, run_scenario, to_csv, trace_scenario, write_trace, MetricsRecord,
};
use cpm_core::Scenario;

/// Monte-Carlo runner for CSI exchange by continuous power modulation.
#[derive(Parser)]
#[command(name = "cpm-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sum-rate vs SNR for perfect-CSI BRD, CPM + BRD and IWFA.
    Fig1(Common),
    /// ESNR vs SIR for three feedback qualities.
    Fig2(Common),
    /// Run a scenario described in a TOML file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Trials per sweep point (overrides the preset or config).
    #[arg(long)]
    trials: Option<usize>,
    /// Base seed; trial t uses seed + t.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scale sum-rates by the fraction of the frame left after exploration.
    #[arg(long)]
    discount_exploration: bool,
    /// Frame length in slots used with --discount-exploration.
    #[arg(long)]
    frame_length: Option<usize>,
    /// Write the exploration slots of trial 0 as JSON lines to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

const DEFAULT_SEED: u64 = 1;

impl Common {
    fn apply(&self, scenario: &mut Scenario) {
        if let Some(t) = self.trials {
            scenario.trials = t;
        }
        if let Some(s) = self.seed {
            scenario.seed = s;
        }
        if let Some(f) = self.frame_length {
            scenario.frame_length = f;
        }
        scenario.discount_exploration |= self.discount_exploration;
    }
}

fn scenarios(command: &Command) -> Result<(Vec<Scenario>, &Common)> {
    let (mut list, common) = match command {
        Command::Fig1(c) => (
            vec![presets::fig1(presets::FIG1_DEFAULT_TRIALS, DEFAULT_SEED)],
            c,
        ),
        Command::Fig2(c) => (presets::fig2(presets::FIG2_DEFAULT_TRIALS, DEFAULT_SEED), c),
        Command::Run { config, common } => {
            let s = Scenario::load(config)
                .with_context(|| format!("loading scenario {}", config.display()))?;
            (vec![s], common)
        }
    };
    for s in &mut list {
        common.apply(s);
        s.validate()?;
    }
    Ok((list, common))
}

fn run(cli: Cli) -> Result<()> {
    let (list, common) = scenarios(&cli.command)?;
    let start = Instant::now();
    let mut records: Vec<MetricsRecord> = Vec::new();
    for s in &list {
        log::info!(
            "running {} sweep points x {} trials ({})",
            s.sweep.values.len(),
            s.trials,
            s.label.as_deref().unwrap_or("unlabelled")
        );
        records.extend(run_scenario(s)?);
    }
    log::info!("finished in {:.1}s", start.elapsed().as_secs_f64());

    let csv = to_csv(&records)?;
    match &common.out {
        Some(path) => cpm_core::emit_csv(&records, path)?,
        None => io::stdout().write_all(csv.as_bytes())?,
    }

    if let Some(path) = &common.trace {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut out = BufWriter::new(file);
        for s in &list {
            write_trace(&mut out, s.label.as_deref(), &trace_scenario(s)?)?;
        }
        out.flush()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
