//! Run measurements: per-job timings, the allocation timeline, action
//! statistics, fixed-vs-flexible gains and the CSV reports.

use std::io::Write;

use crate::appmodel::AppKind;
use crate::error::ScenarioError;
use crate::rms::{ActionKind, DecisionContext, Reason};
use crate::simcore::{JobId, SimTime};

/// Wait, execution and completion time of a finished job, in seconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JobTiming {
    pub wait: f64,
    pub exec: f64,
    pub completion: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JobRecord {
    pub id: JobId,
    pub app: AppKind,
    pub flexible: bool,
    pub arrival: SimTime,
    pub start: Option<SimTime>,
    pub finish: Option<SimTime>,
    pub resizes: u32,
    pub unschedulable: bool,
}

impl JobRecord {
    pub fn timing(&self) -> Option<JobTiming> {
        let (start, finish) = (self.start?, self.finish?);
        let wait = (start - self.arrival).as_secs_f64();
        let exec = (finish - start).as_secs_f64();
        Some(JobTiming {
            wait,
            exec,
            completion: (finish - self.arrival).as_secs_f64(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimelinePoint {
    pub time: SimTime,
    pub allocated: u32,
    pub running: u32,
    pub completed: u32,
}

/// Step function of cluster occupancy; each point holds until the next.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AllocationTimeline {
    pub total_nodes: u32,
    pub points: Vec<TimelinePoint>,
}

impl AllocationTimeline {
    pub fn new(total_nodes: u32) -> Self {
        AllocationTimeline {
            total_nodes,
            points: Vec::new(),
        }
    }

    /// Records the state after an event; later records at the same time win.
    pub fn record(&mut self, point: TimelinePoint) {
        if let Some(last) = self.points.last_mut() {
            debug_assert!(point.time >= last.time);
            if last.time == point.time {
                *last = point;
                let n = self.points.len();
                if n >= 2 && same_values(&self.points[n - 2], &self.points[n - 1]) {
                    self.points.pop();
                }
                return;
            }
            if same_values(last, &point) {
                return;
            }
        }
        self.points.push(point);
    }

    /// Allocated nodes at `t`, zero before the first point.
    pub fn allocated_at(&self, t: SimTime) -> u32 {
        match self.points.partition_point(|p| p.time <= t) {
            0 => 0,
            i => self.points[i - 1].allocated,
        }
    }

    /// Time-weighted mean and standard deviation, in percent, of the
    /// allocated fraction over `[start, end]`. `None` for an empty window.
    pub fn utilization(&self, start: SimTime, end: SimTime) -> Option<(f64, f64)> {
        if end <= start || self.total_nodes == 0 {
            return None;
        }
        let span = (end - start).as_micros() as f64;
        let total = f64::from(self.total_nodes);
        let (mut m1, mut m2) = (0.0, 0.0);
        let mut t = start;
        let mut level = self.allocated_at(start);
        let from = self.points.partition_point(|p| p.time <= start);
        for p in &self.points[from..] {
            if p.time >= end {
                break;
            }
            let w = (p.time - t).as_micros() as f64 / span;
            let x = f64::from(level) / total;
            m1 += w * x;
            m2 += w * x * x;
            t = p.time;
            level = p.allocated;
        }
        let w = (end - t).as_micros() as f64 / span;
        let x = f64::from(level) / total;
        m1 += w * x;
        m2 += w * x * x;
        let var = (m2 - m1 * m1).max(0.0);
        Some((100.0 * m1, 100.0 * var.sqrt()))
    }
}

fn same_values(a: &TimelinePoint, b: &TimelinePoint) -> bool {
    (a.allocated, a.running, a.completed) == (b.allocated, b.running, b.completed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionOutcome {
    Applied,
    /// Decided asynchronously and not yet applied when the run ended.
    Pending,
    /// Expansion whose resizer timed out.
    Cancelled,
    /// Pending action dropped because the job completed.
    Discarded,
}

impl ActionOutcome {
    pub fn name(self) -> &'static str {
        match self {
            ActionOutcome::Applied => "applied",
            ActionOutcome::Pending => "pending",
            ActionOutcome::Cancelled => "cancelled",
            ActionOutcome::Discarded => "discarded",
        }
    }
}

/// One resource-manager decision and what became of it.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionRecord {
    pub time: SimTime,
    pub job: JobId,
    pub kind: ActionKind,
    pub target: Option<u32>,
    pub reason: Reason,
    /// Seconds from the check until the job computes again.
    pub duration: f64,
    pub outcome: ActionOutcome,
    pub context: DecisionContext,
    /// Whether the job enabled by a shrink held maximum priority right after.
    pub boosted: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionStats {
    pub count: usize,
    pub per_job: f64,
    pub min: f64,
    pub max: f64,
    pub avg: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub label: String,
    pub total_nodes: u32,
    pub jobs: Vec<JobRecord>,
    pub timeline: AllocationTimeline,
    pub actions: Vec<ActionRecord>,
    pub forwarded_checks: u64,
    pub inhibited_checks: u64,
    pub makespan: f64,
    pub utilization: Option<(f64, f64)>,
}

impl RunSummary {
    /// Builds the summary; the measurement window runs from the first
    /// arrival to the last completion.
    pub fn new(
        label: impl Into<String>,
        total_nodes: u32,
        jobs: Vec<JobRecord>,
        timeline: AllocationTimeline,
        actions: Vec<ActionRecord>,
        forwarded_checks: u64,
        inhibited_checks: u64,
    ) -> Self {
        let first = jobs.iter().filter(|j| !j.unschedulable).map(|j| j.arrival).min();
        let last = jobs.iter().filter_map(|j| j.finish).max();
        let (makespan, utilization) = match (first, last) {
            (Some(a), Some(b)) if b > a => ((b - a).as_secs_f64(), timeline.utilization(a, b)),
            _ => (0.0, None),
        };
        RunSummary {
            label: label.into(),
            total_nodes,
            jobs,
            timeline,
            actions,
            forwarded_checks,
            inhibited_checks,
            makespan,
            utilization,
        }
    }

    pub fn completed(&self) -> usize {
        self.jobs.iter().filter(|j| j.finish.is_some()).count()
    }

    pub fn unschedulable(&self) -> usize {
        self.jobs.iter().filter(|j| j.unschedulable).count()
    }

    pub fn timings(&self) -> impl Iterator<Item = (JobId, JobTiming)> + '_ {
        self.jobs
            .iter()
            .filter(|j| !j.unschedulable)
            .filter_map(|j| j.timing().map(|t| (j.id, t)))
    }

    fn mean_of(&self, f: impl Fn(&JobTiming) -> f64) -> f64 {
        let (sum, n) = self.timings().fold((0.0, 0usize), |(s, n), (_, t)| (s + f(&t), n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    pub fn mean_wait(&self) -> f64 {
        self.mean_of(|t| t.wait)
    }

    pub fn mean_exec(&self) -> f64 {
        self.mean_of(|t| t.exec)
    }

    pub fn mean_completion(&self) -> f64 {
        self.mean_of(|t| t.completion)
    }

    pub fn utilization_avg(&self) -> Option<f64> {
        self.utilization.map(|u| u.0)
    }

    pub fn utilization_std(&self) -> Option<f64> {
        self.utilization.map(|u| u.1)
    }

    pub fn action_count(&self, kind: ActionKind) -> usize {
        self.actions.iter().filter(|a| a.kind == kind).count()
    }

    /// Statistics over decisions of one kind; durations in seconds.
    pub fn action_stats(&self, kind: ActionKind) -> ActionStats {
        let d: Vec<f64> = self
            .actions
            .iter()
            .filter(|a| a.kind == kind)
            .map(|a| a.duration)
            .collect();
        let count = d.len();
        let jobs = self.jobs.len();
        let per_job = if jobs == 0 { 0.0 } else { count as f64 / jobs as f64 };
        if count == 0 {
            return ActionStats {
                count,
                per_job,
                min: 0.0,
                max: 0.0,
                avg: 0.0,
                std: 0.0,
            };
        }
        let avg = d.iter().sum::<f64>() / count as f64;
        let var = d.iter().map(|x| (x - avg).powi(2)).sum::<f64>() / count as f64;
        ActionStats {
            count,
            per_job,
            min: d.iter().copied().fold(f64::INFINITY, f64::min),
            max: d.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            avg,
            std: var.sqrt(),
        }
    }
}

/// Per-job differences `fixed - flexible`, in seconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairedDiff {
    pub id: JobId,
    pub wait: f64,
    pub exec: f64,
    pub completion: f64,
}

/// Percent reductions achieved by the flexible run over the fixed one.
#[derive(Clone, Debug, PartialEq)]
pub struct GainReport {
    pub makespan: f64,
    pub mean_wait: f64,
    pub mean_exec: f64,
    pub mean_completion: f64,
    pub per_job: Vec<PairedDiff>,
}

pub fn gain_pct(fixed: f64, flexible: f64) -> f64 {
    if fixed == flexible {
        0.0
    } else {
        (fixed - flexible) / fixed * 100.0
    }
}

/// Compares two runs of the same workload.
pub fn gain_report(fixed: &RunSummary, flexible: &RunSummary) -> Result<GainReport, ScenarioError> {
    let key = |s: &RunSummary| s.jobs.iter().map(|j| (j.id, j.arrival, j.app)).collect::<Vec<_>>();
    if key(fixed) != key(flexible) {
        return Err(ScenarioError::WorkloadMismatch(format!(
            "`{}` has {} jobs, `{}` has {}",
            fixed.label,
            fixed.jobs.len(),
            flexible.label,
            flexible.jobs.len()
        )));
    }
    let per_job = fixed
        .jobs
        .iter()
        .zip(&flexible.jobs)
        .filter_map(|(a, b)| {
            let (ta, tb) = (a.timing()?, b.timing()?);
            Some(PairedDiff {
                id: a.id,
                wait: ta.wait - tb.wait,
                exec: ta.exec - tb.exec,
                completion: ta.completion - tb.completion,
            })
        })
        .collect();
    Ok(GainReport {
        makespan: gain_pct(fixed.makespan, flexible.makespan),
        mean_wait: gain_pct(fixed.mean_wait(), flexible.mean_wait()),
        mean_exec: gain_pct(fixed.mean_exec(), flexible.mean_exec()),
        mean_completion: gain_pct(fixed.mean_completion(), flexible.mean_completion()),
        per_job,
    })
}

fn secs(t: SimTime) -> String {
    t.to_string()
}

fn opt_secs(t: Option<SimTime>) -> String {
    t.map(secs).unwrap_or_default()
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

pub fn write_jobs_csv<W: Write>(summary: &RunSummary, out: W) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "id",
        "app",
        "flexible",
        "arrival",
        "start",
        "finish",
        "wait",
        "exec",
        "completion",
        "resizes",
    ])?;
    for j in &summary.jobs {
        let t = j.timing();
        w.write_record([
            j.id.to_string(),
            j.app.to_string(),
            u8::from(j.flexible).to_string(),
            secs(j.arrival),
            opt_secs(j.start),
            opt_secs(j.finish),
            t.map(|t| f6(t.wait)).unwrap_or_default(),
            t.map(|t| f6(t.exec)).unwrap_or_default(),
            t.map(|t| f6(t.completion)).unwrap_or_default(),
            j.resizes.to_string(),
        ])?;
    }
    w.flush().map_err(|e| ScenarioError::io("jobs.csv", e))?;
    Ok(())
}

pub fn write_timeline_csv<W: Write>(summary: &RunSummary, out: W) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "allocated", "running", "completed"])?;
    for p in &summary.timeline.points {
        w.write_record([
            secs(p.time),
            p.allocated.to_string(),
            p.running.to_string(),
            p.completed.to_string(),
        ])?;
    }
    w.flush().map_err(|e| ScenarioError::io("timeline.csv", e))?;
    Ok(())
}

pub fn write_actions_csv<W: Write>(summary: &RunSummary, out: W) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "job", "kind", "target", "duration", "reason", "outcome"])?;
    for a in &summary.actions {
        w.write_record([
            secs(a.time),
            a.job.to_string(),
            a.kind.name().to_string(),
            a.target.map(|t| t.to_string()).unwrap_or_default(),
            f6(a.duration),
            a.reason.name().to_string(),
            a.outcome.name().to_string(),
        ])?;
    }
    w.flush().map_err(|e| ScenarioError::io("actions.csv", e))?;
    Ok(())
}

const SUMMARY_HEADER: [&str; 25] = [
    "run",
    "jobs",
    "completed",
    "unschedulable",
    "makespan",
    "utilization_avg",
    "utilization_std",
    "mean_wait",
    "mean_exec",
    "mean_completion",
    "expand_actions",
    "shrink_actions",
    "none_actions",
    "expands_per_job",
    "shrinks_per_job",
    "expand_time_min",
    "expand_time_max",
    "expand_time_avg",
    "expand_time_std",
    "shrink_time_min",
    "shrink_time_max",
    "shrink_time_avg",
    "shrink_time_std",
    "forwarded_checks",
    "inhibited_checks",
];

fn summary_row(s: &RunSummary) -> Vec<String> {
    let expand = s.action_stats(ActionKind::Expand);
    let shrink = s.action_stats(ActionKind::Shrink);
    vec![
        s.label.clone(),
        s.jobs.len().to_string(),
        s.completed().to_string(),
        s.unschedulable().to_string(),
        f6(s.makespan),
        s.utilization_avg().map(f6).unwrap_or_default(),
        s.utilization_std().map(f6).unwrap_or_default(),
        f6(s.mean_wait()),
        f6(s.mean_exec()),
        f6(s.mean_completion()),
        expand.count.to_string(),
        shrink.count.to_string(),
        s.action_count(ActionKind::None).to_string(),
        f6(expand.per_job),
        f6(shrink.per_job),
        f6(expand.min),
        f6(expand.max),
        f6(expand.avg),
        f6(expand.std),
        f6(shrink.min),
        f6(shrink.max),
        f6(shrink.avg),
        f6(shrink.std),
        s.forwarded_checks.to_string(),
        s.inhibited_checks.to_string(),
    ]
}

/// One row per run; with a gain report, a final `gain_pct` row carries the
/// percent reductions in makespan and mean wait/exec/completion.
pub fn write_summary_csv<W: Write>(
    runs: &[&RunSummary],
    gain: Option<&GainReport>,
    out: W,
) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for s in runs {
        w.write_record(summary_row(s))?;
    }
    if let Some(g) = gain {
        let mut row = vec![String::new(); SUMMARY_HEADER.len()];
        row[0] = "gain_pct".into();
        row[4] = f6(g.makespan);
        row[7] = f6(g.mean_wait);
        row[8] = f6(g.mean_exec);
        row[9] = f6(g.mean_completion);
        w.write_record(row)?;
    }
    w.flush().map_err(|e| ScenarioError::io("summary.csv", e))?;
    Ok(())
}
