//! Scenario files, experiment presets and the scenario runner.
//!
//! A scenario is flat `key = value` text grouped in sections:
//!
//! ```text
//! [cluster]
//! nodes = 20
//! [workload]
//! jobs = 50
//! seed = 7
//! [policy]
//! mode = async
//! [app.CG]
//! inhibitor_period = 15
//! [output]
//! paired = true
//! ```
//!
//! `#` starts a comment. `none` clears an optional value.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::appmodel::{AppCatalog, AppKind, CostModelParams};
use crate::error::{ConfigError, ScenarioError};
use crate::metrics::{self, gain_report, GainReport};
use crate::rms::PolicyToggles;
use crate::sim::{Mode, SimConfig, SimOutput, Simulation};
use crate::simcore::SimTime;
use crate::workload::{generate_workload, parse_workload, write_workload, JobDescriptor, WorkloadParams};

/// Environment variable overriding every application's inhibitor period
/// (`none` or seconds).
pub const INHIBITOR_ENV: &str = "FLEXSIM_INHIBITOR_PERIOD";

#[derive(Clone, Debug, PartialEq)]
pub enum WorkloadSource {
    Generate(WorkloadParams),
    Replay(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub nodes: u32,
    pub source: WorkloadSource,
    pub mode: Mode,
    pub toggles: PolicyToggles,
    pub backfill: bool,
    pub expand_timeout: f64,
    /// Overrides the per-application inhibitor periods when set.
    pub inhibitor_period: Option<Option<f64>>,
    pub cost: CostModelParams,
    pub apps: AppCatalog,
    /// Run a rigid copy of the workload next to the flexible one.
    pub paired: bool,
    pub out_dir: Option<PathBuf>,
    pub trace_plans: bool,
    /// Simulated horizon in seconds.
    pub until: Option<f64>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "scenario".into(),
            nodes: 20,
            source: WorkloadSource::Generate(WorkloadParams::default()),
            mode: Mode::Sync,
            toggles: PolicyToggles::default(),
            backfill: true,
            expand_timeout: 40.0,
            inhibitor_period: None,
            cost: CostModelParams::default(),
            apps: AppCatalog::default(),
            paired: false,
            out_dir: None,
            trace_plans: false,
            until: None,
        }
    }
}

impl Scenario {
    pub fn workload_params(&self) -> Option<&WorkloadParams> {
        match &self.source {
            WorkloadSource::Generate(p) => Some(p),
            WorkloadSource::Replay(_) => None,
        }
    }

    pub fn workload_params_mut(&mut self) -> Option<&mut WorkloadParams> {
        match &mut self.source {
            WorkloadSource::Generate(p) => Some(p),
            WorkloadSource::Replay(_) => None,
        }
    }

    /// Engine configuration for one run of this scenario.
    pub fn sim_config(&self, label: &str) -> SimConfig {
        let mut apps = self.apps.clone();
        if let Some(p) = self.inhibitor_period {
            apps.set_inhibitor_period(p);
        }
        SimConfig {
            label: label.to_string(),
            nodes: self.nodes,
            mode: self.mode,
            toggles: self.toggles,
            backfill: self.backfill,
            expand_timeout: self.expand_timeout,
            cost: self.cost,
            apps,
            trace_plans: self.trace_plans,
        }
    }

    /// Applies [`INHIBITOR_ENV`] when it is set.
    pub fn apply_env(&mut self) -> Result<(), ScenarioError> {
        if let Ok(v) = std::env::var(INHIBITOR_ENV) {
            let p = parse_opt_f64(v.trim()).map_err(|m| ConfigError {
                line: 0,
                message: format!("{INHIBITOR_ENV}: {m}"),
            })?;
            self.inhibitor_period = Some(p);
        }
        Ok(())
    }

    /// Produces the job list, generated or read from the replay file.
    pub fn load_workload(&self) -> Result<Vec<JobDescriptor>, ScenarioError> {
        match &self.source {
            WorkloadSource::Generate(p) => Ok(generate_workload(p, &self.apps)?),
            WorkloadSource::Replay(path) => {
                let text = fs::read_to_string(path).map_err(|e| ScenarioError::io(path, e))?;
                Ok(parse_workload(&text)?)
            }
        }
    }
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(format!("expected a boolean, got `{v}`")),
    }
}

fn parse_f64(v: &str) -> Result<f64, String> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| format!("expected a number, got `{v}`"))
}

fn parse_opt_f64(v: &str) -> Result<Option<f64>, String> {
    if v == "none" {
        return Ok(None);
    }
    let x = parse_f64(v)?;
    if x < 0.0 {
        return Err(format!("expected a non-negative number, got `{v}`"));
    }
    Ok(Some(x))
}

fn parse_u32(v: &str) -> Result<u32, String> {
    v.parse()
        .map_err(|_| format!("expected a non-negative integer, got `{v}`"))
}

fn parse_opt_u32(v: &str) -> Result<Option<u32>, String> {
    if v == "none" {
        Ok(None)
    } else {
        parse_u32(v).map(Some)
    }
}

/// Byte counts accept integers and exponent notation (`1e9`).
fn parse_bytes(v: &str) -> Result<u64, String> {
    if let Ok(n) = v.parse::<u64>() {
        return Ok(n);
    }
    match v.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x < u64::MAX as f64 => Ok(x as u64),
        _ => Err(format!("expected a byte count, got `{v}`")),
    }
}

fn parse_mix(v: &str) -> Result<Vec<(AppKind, f64)>, String> {
    v.split(',')
        .map(|part| {
            let (app, w) = part
                .trim()
                .split_once(':')
                .ok_or_else(|| format!("expected APP:WEIGHT, got `{part}`"))?;
            Ok((app.trim().parse()?, parse_f64(w.trim())?))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Section {
    Cluster,
    Workload,
    Policy,
    Cost,
    App(AppKind),
    Output,
}

/// Parses and validates a scenario file.
pub fn parse_config(text: &str) -> Result<Scenario, ConfigError> {
    let mut s = Scenario::default();
    let mut params = WorkloadParams::default();
    let mut jobs_line = None;
    let mut replay: Option<(usize, PathBuf)> = None;
    let mut section = None;
    let mut seen = std::collections::HashSet::new();
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let err = |message: String| ConfigError { line, message };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            let name = name.trim();
            section = Some(match name {
                "cluster" => Section::Cluster,
                "workload" => Section::Workload,
                "policy" => Section::Policy,
                "cost" => Section::Cost,
                "output" => Section::Output,
                _ => match name.strip_prefix("app.") {
                    Some(app) => Section::App(app.parse().map_err(err)?),
                    None => return Err(err(format!("unknown section `[{name}]`"))),
                },
            });
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| err(format!("expected `key = value`, got `{content}`")))?;
        let sec = section.ok_or_else(|| err(format!("`{key}` appears before any section")))?;
        if !seen.insert((sec, key.to_string())) {
            return Err(err(format!("duplicate key `{key}`")));
        }
        let unknown = || err(format!("unknown key `{key}`"));
        let r: Result<(), String> = (|| {
            match sec {
                Section::Cluster => match key {
                    "nodes" => s.nodes = parse_u32(value)?,
                    _ => return Err(unknown().message),
                },
                Section::Workload => match key {
                    "jobs" => {
                        params.jobs = parse_u32(value)?;
                        jobs_line = Some(line);
                    }
                    "replay" => replay = Some((line, PathBuf::from(value))),
                    "seed" => params.seed = value.parse().map_err(|_| format!("expected a seed, got `{value}`"))?,
                    "max_job_size" => params.max_job_size = parse_u32(value)?,
                    "mean_interarrival" => params.mean_interarrival = parse_f64(value)?,
                    "max_step_runtime" => params.max_step_runtime = parse_f64(value)?,
                    "step_mean_base" => params.step_mean_base = parse_f64(value)?,
                    "long_branch_prob" => params.long_branch_prob = parse_f64(value)?,
                    "long_mean_ratio" => params.long_mean_ratio = parse_f64(value)?,
                    "pow2_snap_prob" => params.pow2_snap_prob = parse_f64(value)?,
                    "iterations" => params.iterations = parse_opt_u32(value)?,
                    "flexible_ratio" => params.flexible_ratio = parse_f64(value)?,
                    "app_mix" => params.app_mix = parse_mix(value)?,
                    "factor" => params.factor = parse_u32(value)?,
                    "data_volume" => params.data_volume = parse_bytes(value)?,
                    _ => return Err(unknown().message),
                },
                Section::Policy => match key {
                    "mode" => s.mode = value.parse()?,
                    "expand_timeout" => s.expand_timeout = parse_f64(value)?,
                    "backfill" => s.backfill = parse_bool(value)?,
                    "requested_action" => s.toggles.requested_action = parse_bool(value)?,
                    "preferred" => s.toggles.preferred = parse_bool(value)?,
                    "wide_optimization" => s.toggles.wide_optimization = parse_bool(value)?,
                    "inhibitor_period" => s.inhibitor_period = Some(parse_opt_f64(value)?),
                    _ => return Err(unknown().message),
                },
                Section::Cost => match key {
                    "bandwidth" => s.cost.bandwidth = parse_f64(value)?,
                    "shrink_sync_base" => s.cost.shrink_sync_base = parse_f64(value)?,
                    "shrink_sync_per_ratio" => s.cost.shrink_sync_per_ratio = parse_f64(value)?,
                    "sched_base" => s.cost.sched_base = parse_f64(value)?,
                    "sched_per_node" => s.cost.sched_per_node = parse_f64(value)?,
                    _ => return Err(unknown().message),
                },
                Section::App(kind) => {
                    let m = s.apps.get_mut(kind);
                    match key {
                        "speedup" => m.speedup = value.parse()?,
                        "min_procs" => m.min_procs = parse_u32(value)?,
                        "max_procs" => m.max_procs = parse_u32(value)?,
                        "preferred_procs" => m.preferred_procs = parse_opt_u32(value)?,
                        "iterations" => m.iterations = parse_u32(value)?,
                        "inhibitor_period" => m.inhibitor_period = parse_opt_f64(value)?,
                        _ => return Err(unknown().message),
                    }
                }
                Section::Output => match key {
                    "dir" => s.out_dir = Some(PathBuf::from(value)),
                    "name" => s.name = value.to_string(),
                    "paired" => s.paired = parse_bool(value)?,
                    "trace_plans" => s.trace_plans = parse_bool(value)?,
                    "until" => s.until = parse_opt_f64(value)?,
                    _ => return Err(unknown().message),
                },
            }
            Ok(())
        })();
        r.map_err(|m| err(format!("`{key}`: {m}")))?;
    }

    s.source = match (jobs_line, replay) {
        (Some(_), None) => WorkloadSource::Generate(params),
        (None, Some((_, path))) => WorkloadSource::Replay(path),
        (Some(a), Some((b, _))) => {
            return Err(ConfigError {
                line: a.max(b),
                message: "`jobs` and `replay` are mutually exclusive".into(),
            })
        }
        (None, None) => {
            return Err(ConfigError {
                line: last_line,
                message: "missing required `jobs` or `replay` in [workload]".into(),
            })
        }
    };
    validate(&s).map_err(|message| ConfigError {
        line: last_line,
        message,
    })?;
    Ok(s)
}

/// Checks cross-field constraints of a scenario.
pub fn validate(s: &Scenario) -> Result<(), String> {
    if let Some(p) = s.workload_params() {
        p.validate().map_err(|e| e.to_string())?;
    }
    s.sim_config("check").validate().map_err(|e| e.to_string())?;
    for m in s.apps.iter() {
        if m.min_procs == 0 || m.min_procs > m.max_procs {
            return Err(format!("{}: need 1 <= min_procs <= max_procs", m.kind));
        }
        if m.preferred_procs.is_some_and(|p| p < m.min_procs || p > m.max_procs) {
            return Err(format!("{}: preferred_procs outside [min_procs, max_procs]", m.kind));
        }
        if m.iterations == 0 {
            return Err(format!("{}: iterations must be at least 1", m.kind));
        }
    }
    Ok(())
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or("none".to_string(), |x| x.to_string())
}

/// Renders a scenario in the configuration format; parsing the result
/// yields the same scenario.
pub fn render_config(s: &Scenario) -> String {
    let mut out = String::new();
    let o = &mut out;
    let _ = writeln!(o, "[cluster]\nnodes = {}\n", s.nodes);
    let _ = writeln!(o, "[workload]");
    match &s.source {
        WorkloadSource::Replay(path) => {
            let _ = writeln!(o, "replay = {}", path.display());
        }
        WorkloadSource::Generate(p) => {
            let mix: Vec<String> = p.app_mix.iter().map(|(a, w)| format!("{a}:{w}")).collect();
            let _ = writeln!(
                o,
                "jobs = {}\nseed = {}\nmax_job_size = {}\nmean_interarrival = {}\nmax_step_runtime = {}\n\
                 step_mean_base = {}\nlong_branch_prob = {}\nlong_mean_ratio = {}\npow2_snap_prob = {}\n\
                 iterations = {}\nflexible_ratio = {}\napp_mix = {}\nfactor = {}\ndata_volume = {}",
                p.jobs,
                p.seed,
                p.max_job_size,
                p.mean_interarrival,
                p.max_step_runtime,
                p.step_mean_base,
                p.long_branch_prob,
                p.long_mean_ratio,
                p.pow2_snap_prob,
                opt(p.iterations),
                p.flexible_ratio,
                mix.join(","),
                p.factor,
                p.data_volume
            );
        }
    }
    let t = &s.toggles;
    let _ = writeln!(
        o,
        "\n[policy]\nmode = {}\nexpand_timeout = {}\nbackfill = {}\nrequested_action = {}\npreferred = {}\nwide_optimization = {}",
        s.mode, s.expand_timeout, s.backfill, t.requested_action, t.preferred, t.wide_optimization
    );
    if let Some(p) = s.inhibitor_period {
        let _ = writeln!(o, "inhibitor_period = {}", opt(p));
    }
    let c = &s.cost;
    let _ = writeln!(
        o,
        "\n[cost]\nbandwidth = {}\nshrink_sync_base = {}\nshrink_sync_per_ratio = {}\nsched_base = {}\nsched_per_node = {}",
        c.bandwidth, c.shrink_sync_base, c.shrink_sync_per_ratio, c.sched_base, c.sched_per_node
    );
    for m in s.apps.iter() {
        let _ = writeln!(
            o,
            "\n[app.{}]\nspeedup = {}\nmin_procs = {}\nmax_procs = {}\npreferred_procs = {}\niterations = {}\ninhibitor_period = {}",
            m.kind,
            m.speedup,
            m.min_procs,
            m.max_procs,
            opt(m.preferred_procs),
            m.iterations,
            opt(m.inhibitor_period)
        );
    }
    let _ = writeln!(
        o,
        "\n[output]\nname = {}\npaired = {}\ntrace_plans = {}\nuntil = {}",
        s.name,
        s.paired,
        s.trace_plans,
        opt(s.until)
    );
    if let Some(d) = &s.out_dir {
        let _ = writeln!(o, "dir = {}", d.display());
    }
    out
}

/// The documented defaults, as a configuration file.
pub fn default_config() -> String {
    let s = Scenario {
        name: "default".into(),
        ..Scenario::default()
    };
    format!(
        "# Defaults of every setting. Exactly one of `jobs` and `replay` must be\n\
         # given in [workload]; the inhibitor period can also be overridden\n\
         # through {INHIBITOR_ENV}.\n\n{}",
        render_config(&s)
    )
}

pub const PRESETS: [&str; 5] = [
    "sync-sweep",
    "async-sweep",
    "hetero-sweep",
    "inhibitor-sweep",
    "overhead",
];

fn fs_scenario(name: String, jobs: u32, seed: u64) -> Scenario {
    Scenario {
        name,
        source: WorkloadSource::Generate(WorkloadParams {
            jobs,
            seed,
            ..WorkloadParams::default()
        }),
        paired: true,
        ..Scenario::default()
    }
}

/// Period values of the inhibitor sweep.
pub const INHIBITOR_PERIODS: [Option<f64>; 5] = [None, Some(2.0), Some(5.0), Some(10.0), Some(20.0)];
/// Flexible-job percentages of the heterogeneous sweep.
pub const FLEXIBLE_RATIOS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
/// Workload sizes of the mode sweeps.
pub const SWEEP_SIZES: [u32; 6] = [10, 25, 50, 100, 200, 400];

/// Scenario grid of a named experiment.
pub fn preset(name: &str, seed: u64) -> Result<Vec<Scenario>, ScenarioError> {
    let grid = match name {
        "sync-sweep" | "async-sweep" => {
            let mode = if name == "sync-sweep" { Mode::Sync } else { Mode::Async };
            SWEEP_SIZES
                .iter()
                .map(|&n| Scenario {
                    mode,
                    ..fs_scenario(format!("{}-{n}", mode.name()), n, seed)
                })
                .collect()
        }
        "hetero-sweep" => FLEXIBLE_RATIOS
            .iter()
            .map(|&r| {
                let mut s = fs_scenario(format!("flex-{:03}", (r * 100.0).round() as u32), 100, seed);
                s.workload_params_mut().expect("generated").flexible_ratio = r;
                s
            })
            .collect(),
        "inhibitor-sweep" => INHIBITOR_PERIODS
            .iter()
            .map(|&p| {
                let label = p.map_or("none".to_string(), |x| format!("{x}"));
                let mut s = fs_scenario(format!("period-{label}"), 100, seed);
                s.inhibitor_period = Some(p);
                let w = s.workload_params_mut().expect("generated");
                // every sampled step lands on the 2 s clamp
                w.max_step_runtime = 2.0;
                w.step_mean_base = 200.0;
                w.iterations = Some(50);
                s
            })
            .collect(),
        "overhead" => {
            let mut s = fs_scenario("overhead".into(), 100, seed);
            s.paired = false;
            s.trace_plans = true;
            let w = s.workload_params_mut().expect("generated");
            w.iterations = Some(2);
            w.data_volume = 1_000_000_000;
            vec![s]
        }
        _ => return Err(ScenarioError::UnknownPreset(name.to_string())),
    };
    Ok(grid)
}

/// Results of one scenario: the runs in order (rigid first when paired).
#[derive(Clone, Debug)]
pub struct ScenarioReport {
    pub name: String,
    pub workload: Vec<JobDescriptor>,
    pub runs: Vec<SimOutput>,
    pub gain: Option<GainReport>,
}

impl ScenarioReport {
    pub fn flexible(&self) -> &SimOutput {
        self.runs.last().expect("at least one run")
    }

    pub fn fixed(&self) -> Option<&SimOutput> {
        (self.runs.len() == 2).then(|| &self.runs[0])
    }

    /// Summary table of the runs, with the gain row when paired.
    pub fn summary_csv(&self) -> Result<String, ScenarioError> {
        let runs: Vec<_> = self.runs.iter().map(|r| &r.summary).collect();
        let mut buf = Vec::new();
        metrics::write_summary_csv(&runs, self.gain.as_ref(), &mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Makes every job of a workload rigid.
pub fn rigid_copy(jobs: &[JobDescriptor]) -> Vec<JobDescriptor> {
    jobs.iter()
        .map(|j| JobDescriptor {
            flexible: false,
            ..j.clone()
        })
        .collect()
}

/// Runs a scenario on an already loaded workload.
pub fn run_workload(s: &Scenario, workload: Vec<JobDescriptor>) -> Result<ScenarioReport, ScenarioError> {
    let until = s.until.map(SimTime::from_secs_f64);
    let mut runs = Vec::new();
    if s.paired {
        let fixed = Simulation::new(s.sim_config("fixed"), rigid_copy(&workload))?.run(until)?;
        runs.push(fixed);
    }
    runs.push(Simulation::new(s.sim_config("flexible"), workload.clone())?.run(until)?);
    let gain = if s.paired {
        Some(gain_report(&runs[0].summary, &runs[1].summary)?)
    } else {
        None
    };
    Ok(ScenarioReport {
        name: s.name.clone(),
        workload,
        runs,
        gain,
    })
}

/// Loads the workload and runs the scenario; outputs are written when the
/// scenario names an output directory.
pub fn run_scenario(s: &Scenario) -> Result<ScenarioReport, ScenarioError> {
    let report = run_workload(s, s.load_workload()?)?;
    if let Some(dir) = &s.out_dir {
        write_outputs(&report, dir)?;
    }
    Ok(report)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), ScenarioError> {
    fs::write(path, contents).map_err(|e| ScenarioError::io(path, e))
}

/// Writes `workload.txt` and `summary.csv` into `dir`, and the trace and
/// per-run CSV files into one subdirectory per run.
pub fn write_outputs(report: &ScenarioReport, dir: &Path) -> Result<(), ScenarioError> {
    fs::create_dir_all(dir).map_err(|e| ScenarioError::io(dir, e))?;
    write_file(&dir.join("workload.txt"), write_workload(&report.workload).as_bytes())?;
    write_file(&dir.join("summary.csv"), report.summary_csv()?.as_bytes())?;
    for run in &report.runs {
        let sub = dir.join(&run.summary.label);
        fs::create_dir_all(&sub).map_err(|e| ScenarioError::io(&sub, e))?;
        write_file(&sub.join("trace.txt"), run.trace.as_bytes())?;
        let mut buf = Vec::new();
        metrics::write_jobs_csv(&run.summary, &mut buf)?;
        write_file(&sub.join("jobs.csv"), &buf)?;
        buf.clear();
        metrics::write_timeline_csv(&run.summary, &mut buf)?;
        write_file(&sub.join("timeline.csv"), &buf)?;
        buf.clear();
        metrics::write_actions_csv(&run.summary, &mut buf)?;
        write_file(&sub.join("actions.csv"), &buf)?;
    }
    Ok(())
}
