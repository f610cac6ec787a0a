//! Acceptance suite. Every criterion prints one PASS/FAIL line; the process
//! exits non-zero when any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use flexsim_core::appmodel::{resize_cost, scheduling_overhead, CostModelParams};
use flexsim_core::audit::audit_trace;
use flexsim_core::dmr::{plan_expand, plan_shrink, RedistributionPlan};
use flexsim_core::metrics::{ActionOutcome, RunSummary};
use flexsim_core::rms::ActionKind;
use flexsim_core::scenario::{preset, run_scenario, run_workload, Scenario, ScenarioReport, WorkloadSource, PRESETS};
use flexsim_core::{simulate, AppKind, JobDescriptor, JobId, Mode, SimConfig, SimTime};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rayon::prelude::*;

const SEEDS: std::ops::RangeInclusive<u64> = 1..=10;
/// Seed of the single-scenario criteria; the default of every preset.
const PRESET_SEED: u64 = 1;
const MIN_GAIN_PCT: f64 = 5.0;
const INHIBITOR_MAKESPAN_TOL: f64 = 0.01;
const ORACLE_ELEMENTS: u64 = 1024;
const GB: u64 = 1_000_000_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn named(preset_name: &str, seed: u64, scenario: &str) -> Scenario {
    preset(preset_name, seed)
        .unwrap()
        .into_iter()
        .find(|s| s.name == scenario)
        .unwrap_or_else(|| panic!("{preset_name} has no scenario {scenario}"))
}

fn run(s: &Scenario) -> ScenarioReport {
    run_scenario(s).unwrap_or_else(|e| panic!("{}: {e}", s.name))
}

fn criterion_1() -> Outcome {
    let sizes = [25u32, 50, 100];
    let medians: Vec<f64> = sizes
        .iter()
        .map(|&n| {
            let gains: Vec<f64> = SEEDS
                .into_par_iter()
                .map(|seed| {
                    run(&named("sync-sweep", seed, &format!("sync-{n}")))
                        .gain
                        .unwrap()
                        .makespan
                })
                .collect();
            median(gains)
        })
        .collect();
    let positive = medians.iter().all(|&g| g > 0.0);
    let strong = medians.iter().filter(|&&g| g >= MIN_GAIN_PCT).count();
    let detail = sizes
        .iter()
        .zip(&medians)
        .map(|(n, g)| format!("n={n}: {g:.2}%"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(positive && strong >= 2, format!("median makespan gain {detail}"))
}

/// Paired 400-job runs of both modes for one seed.
struct ModeRuns {
    sync: ScenarioReport,
    asynchronous: ScenarioReport,
}

impl ModeRuns {
    fn new(seed: u64) -> Self {
        let (sync, asynchronous) = rayon::join(
            || run(&named("sync-sweep", seed, "sync-400")),
            || run(&named("async-sweep", seed, "async-400")),
        );
        ModeRuns { sync, asynchronous }
    }

    fn util(s: &RunSummary) -> (f64, f64) {
        (s.utilization_avg().unwrap(), s.utilization_std().unwrap())
    }

    fn ordering(&self) -> (bool, String) {
        let (us, ss) = Self::util(&self.sync.flexible().summary);
        let (ua, sa) = Self::util(&self.asynchronous.flexible().summary);
        let (uf, _) = Self::util(&self.sync.fixed().unwrap().summary);
        let ok = us > ua && ua > uf && ss < sa;
        (
            ok,
            format!("util sync {us:.2} async {ua:.2} fixed {uf:.2}; std sync {ss:.2} async {sa:.2}"),
        )
    }

    fn timing_signs(&self) -> (bool, String) {
        let gs = self.sync.gain.as_ref().unwrap();
        let ga = self.asynchronous.gain.as_ref().unwrap();
        let ok = gs.mean_wait > 0.0
            && ga.mean_wait > 0.0
            && gs.mean_exec < 0.0
            && ga.mean_exec < 0.0
            && gs.mean_completion > 0.0;
        let detail = format!(
            "sync wait {:+.2}% exec {:+.2}% completion {:+.2}%; async wait {:+.2}% exec {:+.2}% completion {:+.2}%",
            gs.mean_wait, gs.mean_exec, gs.mean_completion, ga.mean_wait, ga.mean_exec, ga.mean_completion
        );
        (ok, detail)
    }
}

fn criteria_2_3() -> (Outcome, Outcome) {
    let runs: Vec<(u64, ModeRuns)> = SEEDS.into_par_iter().map(|s| (s, ModeRuns::new(s))).collect();
    let main = &runs.iter().find(|(s, _)| *s == PRESET_SEED).unwrap().1;
    let sweep = |f: &dyn Fn(&ModeRuns) -> bool| runs.iter().filter(|(_, r)| f(r)).count();
    let (ok2, d2) = main.ordering();
    let (ok3, d3) = main.timing_signs();
    let rate2 = sweep(&|r| r.ordering().0);
    let rate3 = sweep(&|r| r.timing_signs().0);
    let n = runs.len();
    (
        outcome(ok2, format!("seed {PRESET_SEED}: {d2} (holds on {rate2}/{n} seeds)")),
        outcome(ok3, format!("seed {PRESET_SEED}: {d3} (holds on {rate3}/{n} seeds)")),
    )
}

fn fs_job(id: u32, size: u32, steps: u32, step: f64, flexible: bool) -> JobDescriptor {
    JobDescriptor {
        id: JobId(id),
        arrival: SimTime::ZERO,
        initial_size: size,
        min_procs: 1,
        max_procs: 20,
        preferred_procs: None,
        factor: 2,
        flexible,
        app: AppKind::Fs,
        iterations: steps,
        base_step_time: SimTime::from_secs_f64(step),
        data_volume: 0,
    }
}

/// Decision and application lines of the flexible job.
const GOLDEN_ASYNC_LOG: &str = "\
0.000000 decide job=3 step=0 current=1 action=expand(2) reason=WideOptExpand free=1 incoming=0 queued=0 fits=0 enabled=- boosted=0
30.000000 apply job=3 action=expand(2) decided=0.000000 step=0
30.000000 decide job=3 step=1 current=2 action=expand(16) reason=WideOptExpand free=16 incoming=0 queued=0 fits=0 enabled=- boosted=0
45.000000 apply job=3 action=expand(16) decided=30.000000 step=1
45.000000 decide job=3 step=2 current=16 action=none reason=NoChange free=2 incoming=0 queued=0 fits=0 enabled=- boosted=0";

fn criterion_4() -> Outcome {
    // 16 nodes are busy until t=10; the flexible job checks at t=0 and t=30
    let jobs = vec![
        fs_job(1, 16, 1, 10.0, false),
        fs_job(2, 2, 1, 100.0, false),
        fs_job(3, 1, 3, 30.0, true),
    ];
    let cfg = SimConfig {
        mode: Mode::Async,
        ..SimConfig::default()
    };
    let out = simulate(cfg, jobs.clone()).unwrap();
    let log: Vec<&str> = out
        .trace
        .lines()
        .filter(|l| l.contains("job=3") && (l.contains(" decide ") || l.contains(" apply ")))
        .collect();
    let golden: Vec<&str> = GOLDEN_ASYNC_LOG.lines().collect();
    let first = out.summary.actions.iter().find(|a| a.job == JobId(3)).unwrap();
    let applied_stale = first.kind == ActionKind::Expand
        && first.target == Some(2)
        && first.outcome == ActionOutcome::Applied
        && first.context.free == 1;

    // what a synchronous decision takes at the moment the stale one lands
    let sync_cfg = SimConfig {
        mode: Mode::Sync,
        ..SimConfig::default()
    };
    let late = vec![
        fs_job(1, 16, 1, 10.0, false),
        fs_job(2, 2, 1, 100.0, false),
        JobDescriptor {
            arrival: SimTime::from_secs_f64(30.0),
            ..fs_job(3, 1, 3, 30.0, true)
        },
    ];
    let sync = simulate(sync_cfg, late).unwrap();
    let sync_target = sync
        .summary
        .actions
        .iter()
        .find(|a| a.job == JobId(3))
        .and_then(|a| a.target);

    let ok = log == golden && applied_stale && sync_target == Some(16);
    let mut detail = format!(
        "applied target {:?} decided with {} free; synchronous choice at t=30 {:?}",
        first.target, first.context.free, sync_target
    );
    if log != golden {
        detail += &format!("; decision log differs:\n{}", log.join("\n"));
    }
    outcome(ok, detail)
}

fn criterion_5() -> Outcome {
    let grids: Vec<Vec<Scenario>> = SEEDS.map(|s| preset("hetero-sweep", s).unwrap()).collect();
    let ratios: Vec<String> = grids[0].iter().map(|s| s.name.clone()).collect();
    let flat: Vec<(usize, usize)> = (0..grids.len())
        .flat_map(|g| (0..ratios.len()).map(move |r| (g, r)))
        .collect();
    let makespans: BTreeMap<(usize, usize), f64> = flat
        .par_iter()
        .map(|&(g, r)| {
            let mut s = grids[g][r].clone();
            s.paired = false;
            ((g, r), run(&s).flexible().summary.makespan)
        })
        .collect();
    let medians: Vec<f64> = (0..ratios.len())
        .map(|r| median((0..grids.len()).map(|g| makespans[&(g, r)]).collect()))
        .collect();
    let monotone = medians.windows(2).all(|w| w[1] <= w[0]);
    let strict = medians.last() < medians.first();
    let detail = ratios
        .iter()
        .zip(&medians)
        .map(|(n, m)| format!("{n} {m:.1}s"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(monotone && strict, format!("median makespan {detail}"))
}

fn inhibitor_runs(seed: u64) -> BTreeMap<String, RunSummary> {
    preset("inhibitor-sweep", seed)
        .unwrap()
        .into_par_iter()
        .map(|mut s| {
            s.paired = false;
            (s.name.clone(), run(&s).flexible().summary.clone())
        })
        .collect()
}

fn inhibitor_holds(r: &BTreeMap<String, RunSummary>) -> bool {
    let (none, p2, p5) = (&r["period-none"], &r["period-2"], &r["period-5"]);
    p5.forwarded_checks < p2.forwarded_checks
        && p2.forwarded_checks < none.forwarded_checks
        && p5.makespan <= none.makespan * (1.0 + INHIBITOR_MAKESPAN_TOL)
}

fn criterion_6() -> Outcome {
    let r = inhibitor_runs(PRESET_SEED);
    let rate = SEEDS.filter(|&s| inhibitor_holds(&inhibitor_runs(s))).count();
    let (none, p2, p5) = (&r["period-none"], &r["period-2"], &r["period-5"]);
    outcome(
        inhibitor_holds(&r),
        format!(
            "forwarded checks P=5 {} < P=2 {} < none {}; makespan P=5 {:.1}s vs none {:.1}s (holds on {rate}/{} seeds)",
            p5.forwarded_checks,
            p2.forwarded_checks,
            none.forwarded_checks,
            p5.makespan,
            none.makespan,
            SEEDS.count()
        ),
    )
}

/// Element-wise chunk movement on a block-partitioned array, following the
/// sender/receiver rules directly.
struct Oracle {
    /// Elements held by each rank.
    held: Vec<Vec<u64>>,
    /// Elements moved per `(src, dst)`.
    moved: BTreeMap<(u32, u32), u64>,
}

fn oracle_blocks(elements: &[u64], parts: u32) -> Vec<Vec<u64>> {
    let parts = parts as usize;
    let mut out = vec![Vec::new(); parts];
    let (base, extra) = (elements.len() / parts, elements.len() % parts);
    let mut it = elements.iter().copied();
    for (i, block) in out.iter_mut().enumerate() {
        let n = base + usize::from(i < extra);
        block.extend(it.by_ref().take(n));
    }
    out
}

fn oracle_expand(held: &[Vec<u64>], factor: u32) -> Oracle {
    let mut out = vec![Vec::new(); held.len() * factor as usize];
    let mut moved = BTreeMap::new();
    for (r, chunk) in held.iter().enumerate() {
        for (i, piece) in oracle_blocks(chunk, factor).into_iter().enumerate() {
            let dst = r * factor as usize + i;
            *moved.entry((r as u32, dst as u32)).or_insert(0) += piece.len() as u64;
            out[dst].extend(piece);
        }
    }
    Oracle { held: out, moved }
}

fn oracle_shrink(held: &[Vec<u64>], factor: u32) -> Oracle {
    let f = factor as usize;
    let mut receivers: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    let mut moved = BTreeMap::new();
    for (r, chunk) in held.iter().enumerate() {
        let recv = f * (r / f + 1) - 1;
        if r != recv {
            *moved.entry((r as u32, recv as u32)).or_insert(0) += chunk.len() as u64;
        }
        receivers.entry(recv).or_default().extend(chunk);
    }
    // receiver r continues as rank r / factor
    let held = receivers.into_values().collect();
    Oracle { held, moved }
}

fn plan_edges(plan: &RedistributionPlan) -> BTreeMap<(u32, u32), u64> {
    let mut m = BTreeMap::new();
    for t in &plan.transfers {
        *m.entry((t.src, t.dst)).or_insert(0) += t.bytes;
    }
    m.retain(|_, b| *b > 0);
    m
}

fn as_elements(ranges: &[std::ops::Range<u64>]) -> Vec<Vec<u64>> {
    ranges.iter().map(|r| r.clone().collect()).collect()
}

/// Checks one `(old_world, factor, volume)` case; the element oracle runs
/// when `volume` is the oracle array size.
fn check_plans(n: u32, factor: u32, volume: u64) -> Result<(), String> {
    let expand = plan_expand(n, factor, volume).map_err(|e| e.to_string())?;
    let own = expand.ownership();
    // conservation and partition
    if expand.total_transferred() != volume {
        return Err(format!(
            "expand {n}x{factor}: moved {} of {volume}",
            expand.total_transferred()
        ));
    }
    let mut covered = 0;
    for r in &own {
        if r.start != covered {
            return Err(format!("expand {n}x{factor}: ownership gap or overlap at {covered}"));
        }
        covered = r.end;
    }
    if covered != volume {
        return Err(format!("expand {n}x{factor}: ownership covers {covered} of {volume}"));
    }
    // shrink after expand restores every rank's data
    let back = plan_shrink(n * factor, factor, volume).map_err(|e| e.to_string())?;
    if back.apply(&own) != expand.old_chunks() {
        return Err(format!("shrink after expand {n}x{factor} does not restore ownership"));
    }
    for (k, olds) in back.rank_map.iter().enumerate() {
        let origins: Vec<u32> = olds.iter().flat_map(|&o| expand.rank_map[o as usize].clone()).collect();
        if origins.iter().any(|&o| o != k as u32) {
            return Err(format!("rank {k} maps back to {origins:?}"));
        }
    }
    if n.is_multiple_of(factor) {
        let shrink = plan_shrink(n, factor, volume).map_err(|e| e.to_string())?;
        let moved: u64 = shrink.total_transferred();
        let kept: u64 = shrink
            .rank_map
            .iter()
            .map(|olds| {
                let last = *olds.last().unwrap() as usize;
                let c = &shrink.old_chunks()[last];
                c.end - c.start
            })
            .sum();
        if moved + kept != volume {
            return Err(format!("shrink {n}/{factor}: moved {moved} + kept {kept} != {volume}"));
        }
    }

    if volume == ORACLE_ELEMENTS {
        let array: Vec<u64> = (0..volume).collect();
        let start = oracle_blocks(&array, n);
        let o = oracle_expand(&start, factor);
        if o.held != as_elements(&own) || o.moved != plan_edges(&expand) {
            return Err(format!("expand {n}x{factor} differs from the element oracle"));
        }
        if n.is_multiple_of(factor) {
            let shrink = plan_shrink(n, factor, volume).map_err(|e| e.to_string())?;
            let o = oracle_shrink(&start, factor);
            if o.held != as_elements(&shrink.ownership()) || o.moved != plan_edges(&shrink) {
                return Err(format!("shrink {n}/{factor} differs from the element oracle"));
            }
        }
    }
    Ok(())
}

fn criterion_7() -> Outcome {
    let mut cases = 0;
    for n in 1..=64u32 {
        for factor in [2u32, 4] {
            if let Err(e) = check_plans(n, factor, ORACLE_ELEMENTS) {
                return outcome(false, e);
            }
            cases += 1;
        }
    }
    let mut runner = TestRunner::new(PropConfig {
        cases: 512,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let strategy = (1u32..=64, prop_oneof![Just(2u32), Just(4u32)], 0u64..4 * GB);
    let prop = runner.run(&strategy, |(n, f, v)| {
        check_plans(n, f, v).map_err(proptest::test_runner::TestCaseError::fail)
    });
    match prop {
        Ok(()) => outcome(
            true,
            format!("{cases} exhaustive oracle cases on {ORACLE_ELEMENTS} elements, 512 random volumes"),
        ),
        Err(e) => outcome(false, format!("property failure: {e}")),
    }
}

fn criterion_8() -> Outcome {
    let p = CostModelParams::default();
    let pairs: Vec<(u32, u32)> = (1..=64u32).flat_map(|a| (1..=64u32).map(move |b| (a, b))).collect();
    let mut failures = Vec::new();

    // within each direction, at a fixed old/new ratio for shrinks
    let class = |a: u32, b: u32| -> (u8, u32, u32) {
        let g = gcd(a, b);
        if b > a {
            (0, 0, 0)
        } else {
            (1, a / g, b / g)
        }
    };
    let mut classes: BTreeMap<(u8, u32, u32), Vec<(u32, f64)>> = BTreeMap::new();
    for &(a, b) in pairs.iter().filter(|(a, b)| a != b) {
        classes
            .entry(class(a, b))
            .or_default()
            .push((a.min(b), resize_cost(GB, a, b, &p)));
    }
    for v in classes.values() {
        for x in v {
            for y in v {
                if x.0 < y.0 && x.1 <= y.1 {
                    failures.push(format!(
                        "cost not decreasing: min {} -> {:.6}, min {} -> {:.6}",
                        x.0, x.1, y.0, y.1
                    ));
                }
            }
        }
    }
    // transfer component across every pair
    let transfer = |a: u32, b: u32| resize_cost(GB, a, b.max(a), &p);
    for &(a, b) in &pairs {
        for &(c, d) in &pairs {
            if a.min(b) < c.min(d) && transfer(a.min(b), a.max(b)) <= transfer(c.min(d), c.max(d)) {
                failures.push(format!("transfer term not decreasing for ({a},{b}) vs ({c},{d})"));
            }
        }
    }
    // shrink synchronization term against p_old / p_new
    let shrinks: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(a, b)| b < a)
        .map(|&(a, b)| (f64::from(a) / f64::from(b), resize_cost(0, a, b, &p)))
        .collect();
    for x in &shrinks {
        for y in &shrinks {
            if x.0 < y.0 && x.1 >= y.1 {
                failures.push(format!("sync term not increasing at ratios {} and {}", x.0, y.0));
            }
        }
    }
    for n in 0..64 {
        if scheduling_overhead(n, &p) >= scheduling_overhead(n + 1, &p) {
            failures.push(format!("scheduling overhead not increasing at {n}"));
        }
    }
    failures.truncate(3);
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "{} pairs over [1, 64], {} shrink ratio classes",
                pairs.len(),
                classes.len() - 1
            )
        } else {
            failures.join("; ")
        },
    )
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn all_presets() -> Vec<Scenario> {
    PRESETS.iter().flat_map(|p| preset(p, PRESET_SEED).unwrap()).collect()
}

fn read_dir_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    walkdir::WalkDir::new(dir)
        .into_iter()
        .map(Result::unwrap)
        .filter(|e| e.file_type().is_file())
        .map(|e| {
            let rel = e.path().strip_prefix(dir).unwrap().display().to_string();
            (rel, fs::read(e.path()).unwrap())
        })
        .collect()
}

fn criterion_9(scenarios: &[Scenario]) -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let failures: Vec<String> = scenarios
        .par_iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let dirs: Vec<_> = ["a", "b"]
                .iter()
                .map(|r| tmp.path().join(format!("{i}-{}", s.name)).join(r))
                .collect();
            let reports: Vec<ScenarioReport> = dirs
                .iter()
                .map(|d| {
                    run(&Scenario {
                        out_dir: Some(d.clone()),
                        ..s.clone()
                    })
                })
                .collect();
            let (a, b) = (read_dir_files(&dirs[0]), read_dir_files(&dirs[1]));
            if a.is_empty() || a != b {
                return Some(format!("{}: outputs differ between runs", s.name));
            }
            let replay = Scenario {
                source: WorkloadSource::Replay(dirs[0].join("workload.txt")),
                out_dir: None,
                ..s.clone()
            };
            let r = run(&replay);
            let same = r.runs.len() == reports[0].runs.len()
                && r.runs
                    .iter()
                    .zip(&reports[0].runs)
                    .all(|(x, y)| x.summary == y.summary && x.trace == y.trace);
            (!same).then(|| format!("{}: replay summary differs", s.name))
        })
        .collect();
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "{} preset scenarios byte-identical across runs and replays",
                scenarios.len()
            )
        } else {
            failures.join("; ")
        },
    )
}

fn criterion_10(scenarios: &[Scenario]) -> Outcome {
    let reports: Vec<_> = scenarios
        .par_iter()
        .map(|s| {
            let r = run_workload(s, s.load_workload().unwrap()).unwrap();
            let audits: Vec<_> = r
                .runs
                .iter()
                .map(|run| (run.summary.label.clone(), audit_trace(&run.trace, &r.workload)))
                .collect();
            (s.name.clone(), audits)
        })
        .collect();
    let (mut runs, mut decisions, mut shrinks, mut expands, mut events) = (0, 0, 0, 0, 0);
    let mut failures = Vec::new();
    for (name, audits) in &reports {
        for (label, a) in audits {
            runs += 1;
            decisions += a.decisions;
            shrinks += a.shrinks;
            expands += a.wide_expands;
            events += a.events;
            if !a.is_clean() {
                failures.push(format!("{name}/{label}: {}", a.violations[0]));
            }
        }
    }
    let pass = failures.is_empty() && decisions > 0 && shrinks > 0;
    failures.truncate(3);
    outcome(
        pass,
        format!(
            "{runs} runs, {events} events, {decisions} decisions ({shrinks} shrinks, {expands} wide expansions) audited{}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Outcome, f64)> = Vec::new();
    let timed = |id: u32, name: &'static str, f: &dyn Fn() -> Outcome, results: &mut Vec<_>| {
        let t = Instant::now();
        let o = f();
        results.push((id, name, o, t.elapsed().as_secs_f64()));
    };
    timed(1, "flexible beats fixed", &criterion_1, &mut results);
    let t = Instant::now();
    let (c2, c3) = criteria_2_3();
    let shared = t.elapsed().as_secs_f64();
    results.push((2, "mode ordering", c2, shared));
    results.push((3, "timing signs", c3, shared));
    timed(4, "async staleness", &criterion_4, &mut results);
    timed(5, "heterogeneous trend", &criterion_5, &mut results);
    timed(6, "inhibitor effectiveness", &criterion_6, &mut results);
    timed(7, "redistribution correctness", &criterion_7, &mut results);
    timed(8, "cost-model laws", &criterion_8, &mut results);
    let scenarios = all_presets();
    timed(9, "determinism", &|| criterion_9(&scenarios), &mut results);
    timed(10, "policy justification", &|| criterion_10(&scenarios), &mut results);

    let mut failed = 0;
    for (id, name, o, secs) in &results {
        failed += usize::from(!o.pass);
        println!(
            "criterion {id:>2} {:<4} {name} [{secs:.1}s]: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
