use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;

use tomguard::scenario::{format_sig9, parse_config, run_scenario, write_artifact, ScenarioConfig};
use tomguard::Execution;

/// Run seeded batches of coverage episodes and write CSV/JSON artifacts.
#[derive(Debug, Parser)]
#[command(name = "tomguard", version)]
struct Args {
    /// Experiment file (TOML).
    #[arg(short, long)]
    config: PathBuf,

    /// Output directory; created if missing.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,

    /// Only run the named scenario. Repeatable.
    #[arg(short, long = "scenario")]
    scenarios: Vec<String>,

    /// Run this many episodes: keeps the first n seeds, or continues the
    /// seed list with consecutive seeds.
    #[arg(short, long)]
    episodes: Option<usize>,

    /// Added to every seed.
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,

    /// Run episodes one after another instead of across threads.
    #[arg(long)]
    sequential: bool,
}

fn reseed(cfg: &mut ScenarioConfig, episodes: Option<usize>, offset: u64) -> Result<()> {
    if let Some(n) = episodes {
        if n == 0 {
            bail!("--episodes must be at least 1");
        }
        let mut next = cfg.seeds.last().map_or(0, |s| s + 1);
        cfg.seeds.truncate(n);
        while cfg.seeds.len() < n {
            cfg.seeds.push(next);
            next += 1;
        }
    }
    for s in &mut cfg.seeds {
        *s = s
            .checked_add(offset)
            .with_context(|| format!("seed {s} + offset {offset} overflows"))?;
    }
    Ok(())
}

fn run(args: &Args) -> Result<()> {
    let experiment = parse_config(&args.config)?;
    let mut selected: Vec<ScenarioConfig> = if args.scenarios.is_empty() {
        experiment.scenarios.clone()
    } else {
        args.scenarios
            .iter()
            .map(|name| {
                experiment.scenario(name).cloned().with_context(|| {
                    let known: Vec<&str> = experiment
                        .scenarios
                        .iter()
                        .map(|s| s.name.as_str())
                        .collect();
                    format!("no scenario named {name:?} (have {})", known.join(", "))
                })
            })
            .collect::<Result<_>>()?
    };
    let exec = if args.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    for cfg in &mut selected {
        reseed(cfg, args.episodes, args.seed_offset)?;
        let artifact = run_scenario(cfg, exec).with_context(|| format!("scenario {}", cfg.name))?;
        let paths = write_artifact(&artifact, &args.out)?;
        let s = &artifact.summary;
        println!(
            "{}: {} episodes x {} steps, final coverage {} (cooperative {}), mean F1 {}",
            s.scenario,
            s.episodes,
            s.steps,
            format_sig9(s.final_coverage.mean),
            format_sig9(s.final_cooperative_coverage.mean),
            format_sig9(s.mean_f1)
        );
        for p in paths {
            println!("  wrote {}", p.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
