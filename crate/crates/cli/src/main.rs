//! `flexsim`: runs scenario files and experiment presets.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Parser;
use flexsim_core::scenario::{default_config, preset, run_scenario, WorkloadSource, PRESETS};
use flexsim_core::{parse_config, Mode, Scenario, ScenarioReport};
use rayon::prelude::*;

#[derive(Parser, Debug)]
#[command(name = "flexsim", version, about = "Cluster simulator for fixed and malleable jobs")]
struct Cli {
    /// Scenario file.
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named experiment grid.
    #[arg(long, value_name = "NAME", value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
    preset: Option<String>,
    /// Workload seed.
    #[arg(long, value_name = "N", conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Run every seed of an inclusive range, e.g. `1..10`.
    #[arg(long, value_name = "A..B", value_parser = parse_seed_range)]
    seeds: Option<(u64, u64)>,
    /// Scheduling mode.
    #[arg(long, value_name = "sync|async")]
    mode: Option<Mode>,
    /// Also run a rigid copy of the workload and report the gains.
    #[arg(long)]
    paired: bool,
    /// Directory for traces, CSV files and the serialized workload.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Replay a serialized workload instead of generating one.
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    replay: Option<PathBuf>,
    /// Print every setting with its default value and exit.
    #[arg(long)]
    print_defaults: bool,
}

fn parse_seed_range(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s.split_once("..").ok_or("expected A..B")?;
    let a: u64 = a.parse().map_err(|_| format!("bad seed `{a}`"))?;
    let b: u64 = b.parse().map_err(|_| format!("bad seed `{b}`"))?;
    if a > b {
        return Err(format!("empty range {a}..{b}"));
    }
    Ok((a, b))
}

/// Scenarios to run for one seed, before command-line overrides.
fn base_scenarios(cli: &Cli, seed: Option<u64>) -> Result<Vec<Scenario>> {
    if let Some(name) = &cli.preset {
        return Ok(preset(name, seed.unwrap_or(1))?);
    }
    let mut s = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_config(&text).with_context(|| format!("in {}", path.display()))?
        }
        None if cli.replay.is_some() => Scenario::default(),
        None => bail!("nothing to run: pass --config, --preset or --replay (see --help)"),
    };
    if let Some(path) = &cli.replay {
        s.source = WorkloadSource::Replay(path.clone());
    }
    if let Some(seed) = seed {
        match s.workload_params_mut() {
            Some(p) => p.seed = seed,
            None => bail!("--seed has no effect on a replayed workload"),
        }
    }
    Ok(vec![s])
}

fn scenarios(cli: &Cli) -> Result<Vec<(Option<u64>, Scenario)>> {
    let seeds: Vec<Option<u64>> = match cli.seeds {
        Some((a, b)) => (a..=b).map(Some).collect(),
        None => vec![cli.seed],
    };
    let multiple_seeds = seeds.len() > 1;
    let mut out = Vec::new();
    for seed in seeds {
        let grid = base_scenarios(cli, seed)?;
        let multiple = grid.len() > 1;
        for mut s in grid {
            if let Some(m) = cli.mode {
                s.mode = m;
            }
            s.paired |= cli.paired;
            s.apply_env()?;
            if let Some(root) = cli.out.as_ref().or(s.out_dir.as_ref()) {
                let mut dir = root.clone();
                if multiple_seeds {
                    dir.push(format!("seed-{}", seed.unwrap_or_default()));
                }
                if multiple {
                    dir.push(&s.name);
                }
                s.out_dir = Some(dir);
            }
            out.push((seed, s));
        }
    }
    Ok(out)
}

fn report(seed: Option<u64>, s: &Scenario, r: &ScenarioReport, out: &mut impl Write) -> Result<()> {
    match seed {
        Some(seed) => writeln!(out, "## {} (seed {seed}, {})", s.name, s.mode)?,
        None => writeln!(out, "## {} ({})", s.name, s.mode)?,
    }
    write!(out, "{}", r.summary_csv()?)?;
    if let Some(dir) = &s.out_dir {
        writeln!(out, "# outputs in {}", dir.display())?;
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if cli.print_defaults {
        print!("{}", default_config());
        return Ok(());
    }
    let runs = scenarios(&cli)?;
    let results: Vec<Result<ScenarioReport>> = runs
        .par_iter()
        .map(|(_, s)| run_scenario(s).with_context(|| format!("scenario {}", s.name)))
        .collect();
    let mut stdout = std::io::stdout().lock();
    for ((seed, s), r) in runs.iter().zip(results) {
        report(*seed, s, &r?, &mut stdout)?;
    }
    Ok(())
}
