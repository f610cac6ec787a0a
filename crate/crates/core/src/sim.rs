//! The simulation loop. Jobs arrive, compute step by step, consult the
//! resource manager at reconfiguring points (between steps) and resize.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::appmodel::{resize_cost, scheduling_overhead, step_time, AppCatalog, AppModel, CostModelParams};
use crate::dmr::{check_status, icheck_status, plan_resize, CheckCall, CheckOutcome, CheckState, DmrRequest};
use crate::error::{RmsError, SimError};
use crate::metrics::{ActionOutcome, ActionRecord, AllocationTimeline, JobRecord, RunSummary, TimelinePoint};
use crate::rms::{
    begin_expand, begin_shrink, cancel_resizer, complete_shrink, Action, ActionKind, Admission, ClusterState, Decision,
    PolicyToggles, PriorityClass, QueueItem, Reason, Release, ResizerJob, ResizerState,
};
use crate::simcore::{Event, EventKind, EventQueue, JobId, QueueStats, SimTime};
use crate::workload::JobDescriptor;

/// When decided actions take effect.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Applied at the reconfiguring point where they are decided.
    #[default]
    Sync,
    /// Decided as a step starts, applied at the next reconfiguring point.
    Async,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Sync => "sync",
            Mode::Async => "async",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sync" => Ok(Mode::Sync),
            "async" => Ok(Mode::Async),
            _ => Err(format!("unknown mode `{s}` (expected sync or async)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub label: String,
    pub nodes: u32,
    pub mode: Mode,
    pub toggles: PolicyToggles,
    pub backfill: bool,
    /// Seconds a resizer may wait before the expansion is aborted.
    pub expand_timeout: f64,
    pub cost: CostModelParams,
    pub apps: AppCatalog,
    /// Dump every redistribution plan to the trace.
    pub trace_plans: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            label: "run".into(),
            nodes: 20,
            mode: Mode::Sync,
            toggles: PolicyToggles::default(),
            backfill: true,
            expand_timeout: 40.0,
            cost: CostModelParams::default(),
            apps: AppCatalog::default(),
            trace_plans: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.nodes == 0 {
            return Err(SimError::Config("cluster needs at least one node".into()));
        }
        if !self.expand_timeout.is_finite() || self.expand_timeout < 0.0 {
            return Err(SimError::Config("expand_timeout must be a non-negative number".into()));
        }
        self.cost.validate().map_err(SimError::Config)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Waiting,
    Queued,
    Computing,
    Resizing,
    /// Expansion waiting for its resizer.
    Stalled,
    Done,
    Unschedulable,
}

#[derive(Clone, Copy, Debug)]
struct InFlight {
    kind: ActionKind,
    target: u32,
    record: Option<usize>,
    applied_at: SimTime,
}

#[derive(Debug)]
struct JobRun {
    desc: JobDescriptor,
    request: DmrRequest,
    model: AppModel,
    period: Option<f64>,
    phase: Phase,
    size: u32,
    steps_done: u32,
    generation: u64,
    check: CheckState,
    pending_record: Option<usize>,
    in_flight: Option<InFlight>,
    resizer: Option<ResizerJob>,
    est_finish: SimTime,
    start: Option<SimTime>,
    finish: Option<SimTime>,
    resizes: u32,
}

impl JobRun {
    fn step_at(&self, procs: u32) -> Result<SimTime, SimError> {
        let secs = step_time(
            &self.model,
            self.desc.base_step_time.as_secs_f64(),
            self.desc.initial_size,
            procs,
        )?;
        Ok(SimTime::from_secs_f64(secs).max(SimTime::from_micros(1)))
    }

    fn remaining_steps(&self) -> u32 {
        self.desc.iterations - self.steps_done
    }

    fn estimate_after(&self, from: SimTime, steps: u32, procs: u32) -> Result<SimTime, SimError> {
        let step = self.step_at(procs)?;
        Ok(from + SimTime::from_micros(step.as_micros().saturating_mul(u64::from(steps))))
    }
}

/// Everything a finished run produces.
#[derive(Clone, Debug)]
pub struct SimOutput {
    pub summary: RunSummary,
    pub trace: String,
    pub queue_stats: QueueStats,
    /// Events still queued when the run stopped at its horizon.
    pub pending_events: usize,
}

pub struct Simulation {
    config: SimConfig,
    queue: EventQueue,
    cluster: ClusterState,
    jobs: Vec<JobRun>,
    index: HashMap<JobId, usize>,
    actions: Vec<ActionRecord>,
    timeline: AllocationTimeline,
    completed: u32,
    trace: String,
}

macro_rules! trace {
    ($sim:expr, $($arg:tt)*) => {{
        let _ = writeln!($sim.trace, $($arg)*);
    }};
}

impl Simulation {
    pub fn new(config: SimConfig, workload: Vec<JobDescriptor>) -> Result<Self, SimError> {
        config.validate()?;
        let mut queue = EventQueue::new();
        let mut index = HashMap::new();
        let mut jobs = Vec::with_capacity(workload.len());
        for desc in workload {
            desc.validate().map_err(SimError::Workload)?;
            if index.insert(desc.id, jobs.len()).is_some() {
                return Err(SimError::Workload(format!("duplicate job id {}", desc.id)));
            }
            let app = config.apps.get(desc.app);
            queue.schedule(desc.arrival, EventKind::JobArrival, Some(desc.id), 0)?;
            jobs.push(JobRun {
                request: DmrRequest::for_job(&desc),
                model: app.with_bounds(desc.min_procs, desc.max_procs),
                period: app.inhibitor_period,
                phase: Phase::Waiting,
                size: desc.initial_size,
                steps_done: 0,
                generation: 0,
                check: CheckState::default(),
                pending_record: None,
                in_flight: None,
                resizer: None,
                est_finish: SimTime::MAX,
                start: None,
                finish: None,
                resizes: 0,
                desc,
            });
        }
        let mut sim = Simulation {
            cluster: ClusterState::new(config.nodes),
            timeline: AllocationTimeline::new(config.nodes),
            config,
            queue,
            jobs,
            index,
            actions: Vec::new(),
            completed: 0,
            trace: String::new(),
        };
        trace!(
            sim,
            "# run={} nodes={} mode={} backfill={} timeout={} jobs={}",
            sim.config.label,
            sim.config.nodes,
            sim.config.mode,
            u8::from(sim.config.backfill),
            sim.config.expand_timeout,
            sim.jobs.len()
        );
        Ok(sim)
    }

    /// Processes events until the queue is exhausted or `until` is reached.
    pub fn run(mut self, until: Option<SimTime>) -> Result<SimOutput, SimError> {
        if let Some(t) = until {
            self.queue.schedule(t, EventKind::SimulationEnd, None, 0)?;
        }
        loop {
            let jobs = &self.jobs;
            let index = &self.index;
            let Some(ev) = self.queue.next_live(|e| match e.subject {
                Some(id) => index.get(&id).is_some_and(|&i| jobs[i].generation == e.generation),
                None => true,
            }) else {
                break;
            };
            if ev.kind == EventKind::SimulationEnd {
                trace!(self, "{} SimulationEnd", ev.time);
                break;
            }
            self.handle(ev)?;
            self.after_event(&ev);
        }
        Ok(self.finish())
    }

    fn handle(&mut self, ev: Event) -> Result<(), SimError> {
        let id = ev
            .subject
            .ok_or_else(|| SimError::Config(format!("{} event without a job", ev.kind.name())))?;
        let i = self.index[&id];
        match ev.kind {
            EventKind::JobArrival => self.on_arrival(i),
            EventKind::StepComplete => self.on_step_complete(i),
            EventKind::CheckPoint => self.on_checkpoint(i),
            EventKind::ResizeComplete => self.on_resize_complete(i),
            EventKind::ResizerTimeout => self.on_resizer_timeout(i),
            EventKind::SimulationEnd => Ok(()),
        }
    }

    fn after_event(&mut self, ev: &Event) {
        let c = &self.cluster;
        let allocated = c.allocated_nodes();
        let running = c.running_jobs() as u32;
        trace!(
            self,
            "{} {} job={} free={} incoming={} alloc={} queued={} running={}",
            ev.time,
            ev.kind.name(),
            ev.subject.map_or("-".to_string(), |j| j.to_string()),
            c.free_nodes(),
            c.incoming_nodes(),
            allocated,
            c.queue_len(),
            running
        );
        self.timeline.record(TimelinePoint {
            time: ev.time,
            allocated,
            running,
            completed: self.completed,
        });
    }

    fn finish(self) -> SimOutput {
        let jobs = self
            .jobs
            .iter()
            .map(|j| JobRecord {
                id: j.desc.id,
                app: j.desc.app,
                flexible: j.desc.flexible,
                arrival: j.desc.arrival,
                start: j.start,
                finish: j.finish,
                resizes: j.resizes,
                unschedulable: j.phase == Phase::Unschedulable,
            })
            .collect();
        let forwarded = self.jobs.iter().map(|j| j.check.forwarded).sum();
        let inhibited = self.jobs.iter().map(|j| j.check.inhibited).sum();
        let summary = RunSummary::new(
            self.config.label.clone(),
            self.config.nodes,
            jobs,
            self.timeline,
            self.actions,
            forwarded,
            inhibited,
        );
        SimOutput {
            summary,
            trace: self.trace,
            queue_stats: self.queue.stats(),
            pending_events: self.queue.len(),
        }
    }

    fn now(&self) -> SimTime {
        self.queue.now()
    }

    fn schedule(&mut self, i: usize, at: SimTime, kind: EventKind) -> Result<(), SimError> {
        let j = &self.jobs[i];
        self.queue.schedule(at, kind, Some(j.desc.id), j.generation)?;
        Ok(())
    }

    fn on_arrival(&mut self, i: usize) -> Result<(), SimError> {
        let j = &self.jobs[i];
        let est = j.estimate_after(SimTime::ZERO, j.desc.iterations, j.desc.initial_size)?;
        let id = j.desc.id;
        match self.cluster.submit(id, j.desc.initial_size, est)? {
            Admission::Queued => self.jobs[i].phase = Phase::Queued,
            Admission::Unschedulable => {
                self.jobs[i].phase = Phase::Unschedulable;
                trace!(
                    self,
                    "{} unschedulable job={id} size={}",
                    self.now(),
                    self.jobs[i].desc.initial_size
                );
            }
        }
        self.schedule_queue()
    }

    /// Expected node releases of running work, used for backfill reservations.
    fn releases(&self) -> Vec<Release> {
        let mut out = Vec::new();
        for j in &self.jobs {
            let Some(alloc) = self.cluster.allocation(j.desc.id) else {
                continue;
            };
            match (j.phase, j.in_flight) {
                (Phase::Resizing, Some(f)) if f.kind == ActionKind::Shrink => {
                    out.push(Release {
                        at: j.est_finish.min(SimTime::MAX),
                        nodes: f.target,
                    });
                    out.push(Release {
                        at: self.now(),
                        nodes: alloc - f.target,
                    });
                }
                _ => out.push(Release {
                    at: j.est_finish,
                    nodes: alloc,
                }),
            }
        }
        out
    }

    fn schedule_queue(&mut self) -> Result<(), SimError> {
        let releases = self.releases();
        let now = self.now();
        let started = self.cluster.schedule_queue(&releases, now, self.config.backfill);
        for item in started {
            let i = self.index[&item.job()];
            match item {
                QueueItem::Job(_) => self.start_job(i)?,
                QueueItem::Resizer(_) => self.grant_resizer(i)?,
            }
        }
        Ok(())
    }

    fn start_job(&mut self, i: usize) -> Result<(), SimError> {
        let now = self.now();
        let j = &mut self.jobs[i];
        j.phase = Phase::Computing;
        j.start = Some(now);
        j.est_finish = j.estimate_after(now, j.desc.iterations, j.size)?;
        let (id, size) = (j.desc.id, j.size);
        trace!(self, "{now} start job={id} size={size}");
        if self.jobs[i].desc.flexible {
            self.schedule(i, now, EventKind::CheckPoint)
        } else {
            // rigid jobs never reach a reconfiguring point, so the whole run is one event
            let end = self.jobs[i].est_finish;
            self.schedule(i, end, EventKind::StepComplete)
        }
    }

    fn on_step_complete(&mut self, i: usize) -> Result<(), SimError> {
        let j = &mut self.jobs[i];
        if j.desc.flexible {
            j.steps_done += 1;
        } else {
            j.steps_done = j.desc.iterations;
        }
        if j.steps_done < j.desc.iterations {
            let now = self.now();
            return self.schedule(i, now, EventKind::CheckPoint);
        }
        self.complete_job(i)
    }

    fn complete_job(&mut self, i: usize) -> Result<(), SimError> {
        let now = self.now();
        let id = self.jobs[i].desc.id;
        self.cluster.finish(id)?;
        let j = &mut self.jobs[i];
        j.phase = Phase::Done;
        j.finish = Some(now);
        j.check.pending = None;
        let discarded = j.pending_record.take();
        if let Some(mut rj) = j.resizer.take() {
            cancel_resizer(&mut rj, &mut self.cluster);
        }
        self.completed += 1;
        trace!(self, "{now} finish job={id} resizes={}", self.jobs[i].resizes);
        if let Some(r) = discarded {
            self.actions[r].outcome = ActionOutcome::Discarded;
            trace!(self, "{now} discard job={id} action={}", action_of(&self.actions[r]));
        }
        self.schedule_queue()
    }

    /// Contacts the resource manager through the synchronous or the
    /// asynchronous entry point.
    fn consult(&mut self, i: usize, asynchronous: bool) -> Result<CheckOutcome, SimError> {
        let now = self.queue.now();
        let toggles = self.config.toggles;
        let j = &mut self.jobs[i];
        let call = CheckCall {
            job: &j.desc,
            flexible: j.desc.flexible,
            now,
            step: j.steps_done,
            period: j.period,
        };
        let outcome = if asynchronous {
            icheck_status(call, &j.request, &mut j.check, &mut self.cluster, toggles)?
        } else {
            check_status(call, &j.request, &mut j.check, &mut self.cluster, toggles)?
        };
        Ok(outcome)
    }

    fn on_checkpoint(&mut self, i: usize) -> Result<(), SimError> {
        let now = self.now();
        match self.config.mode {
            Mode::Sync => match self.consult(i, false)? {
                CheckOutcome::Decided(d) => {
                    let current = self.jobs[i].size;
                    let overhead = scheduling_overhead(involved(&d.action, current), &self.config.cost);
                    let r = self.record(i, d, ActionOutcome::Applied);
                    self.apply(i, d.action, Some(r), overhead)
                }
                CheckOutcome::Inhibited | CheckOutcome::PendingOutstanding => {
                    trace!(self, "{now} inhibited job={}", self.jobs[i].desc.id);
                    self.resume(i, now)
                }
            },
            Mode::Async => {
                let j = &mut self.jobs[i];
                match j.check.pending.take() {
                    Some(p) => {
                        let r = j.pending_record.take();
                        trace!(
                            self,
                            "{now} apply job={} action={} decided={} step={}",
                            self.jobs[i].desc.id,
                            p.action,
                            p.decided_at,
                            p.decided_at_step
                        );
                        self.apply(i, p.action, r, 0.0)
                    }
                    None => self.resume(i, now),
                }
            }
        }
    }

    fn record(&mut self, i: usize, d: Decision, outcome: ActionOutcome) -> usize {
        let now = self.now();
        let id = self.jobs[i].desc.id;
        let boosted = match (d.action.reason, d.context.enabled) {
            (Reason::WideOptShrink, Some((e, _))) => self
                .cluster
                .priority_of(QueueItem::Job(e))
                .is_some_and(|p| p.class == PriorityClass::Boosted),
            _ => false,
        };
        let c = &d.context;
        trace!(
            self,
            "{now} decide job={id} step={} current={} action={} reason={} free={} incoming={} queued={} fits={} enabled={} boosted={}",
            self.jobs[i].steps_done,
            c.current,
            d.action,
            d.action.reason.name(),
            c.free,
            c.incoming,
            c.queued,
            u8::from(c.queued_fits),
            c.enabled.map_or("-".to_string(), |(j, n)| format!("{j}:{n}")),
            u8::from(boosted)
        );
        self.actions.push(ActionRecord {
            time: now,
            job: id,
            kind: d.action.kind,
            target: d.action.target,
            reason: d.action.reason,
            duration: 0.0,
            outcome,
            context: d.context,
            boosted,
        });
        self.actions.len() - 1
    }

    /// Puts a decided action into effect. `overhead` seconds of scheduling
    /// time elapse before the job computes again or its data moves.
    fn apply(&mut self, i: usize, action: Action, record: Option<usize>, overhead: f64) -> Result<(), SimError> {
        let now = self.now();
        let j = &self.jobs[i];
        let (id, current) = (j.desc.id, j.size);
        let valid = action.is_valid_for(current, &j.request);
        let kind = if valid { action.kind } else { ActionKind::None };
        let ready = now + SimTime::from_secs_f64(overhead);
        let flight = InFlight {
            kind,
            target: action.target.unwrap_or(current),
            record,
            applied_at: now,
        };
        match kind {
            ActionKind::None => {
                if !valid {
                    trace!(self, "{now} invalid job={id} action={action} current={current}");
                }
                self.close(record, now, ready, ActionOutcome::Applied);
                self.resume(i, ready)
            }
            ActionKind::Expand => {
                let timeout = SimTime::from_secs_f64(self.config.expand_timeout);
                let rj = begin_expand(id, flight.target, &mut self.cluster, now, timeout)?;
                let j = &mut self.jobs[i];
                j.resizer = Some(rj);
                match rj.state {
                    ResizerState::Granted => {
                        j.in_flight = Some(flight);
                        self.begin_resize(i, ready)
                    }
                    _ => {
                        // data moves once the resizer is granted
                        j.in_flight = Some(flight);
                        j.phase = Phase::Stalled;
                        j.est_finish = j.estimate_after(rj.deadline, j.remaining_steps(), current)?;
                        trace!(
                            self,
                            "{now} resizer job={id} extra={} deadline={}",
                            rj.extra_nodes,
                            rj.deadline
                        );
                        self.schedule(i, rj.deadline, EventKind::ResizerTimeout)
                    }
                }
            }
            ActionKind::Shrink => {
                begin_shrink(id, flight.target, &mut self.cluster)?;
                self.jobs[i].in_flight = Some(flight);
                self.begin_resize(i, ready)
            }
        }
    }

    /// Starts moving data for an in-flight resize whose nodes are settled.
    fn begin_resize(&mut self, i: usize, from: SimTime) -> Result<(), SimError> {
        let j = &mut self.jobs[i];
        let f = j.in_flight.ok_or(RmsError::NotRunning(j.desc.id))?;
        let cost = resize_cost(j.desc.data_volume, j.size, f.target, &self.config.cost);
        let done = from + SimTime::from_secs_f64(cost);
        j.phase = Phase::Resizing;
        j.est_finish = j.estimate_after(done, j.remaining_steps(), f.target)?;
        if self.config.trace_plans {
            let plan = plan_resize(j.size, f.target, j.desc.data_volume)?;
            let id = j.desc.id;
            trace!(self, "{} plan job={id} {plan}", self.now());
        }
        self.schedule(i, done, EventKind::ResizeComplete)
    }

    fn grant_resizer(&mut self, i: usize) -> Result<(), SimError> {
        let now = self.now();
        let j = &mut self.jobs[i];
        let Some(rj) = j.resizer.as_mut() else {
            return Err(RmsError::InconsistentRequest(format!("job {} has no resizer", j.desc.id)).into());
        };
        rj.state = ResizerState::Granted;
        rj.granted_at = Some(now);
        // tombstones the pending timeout
        j.generation += 1;
        trace!(self, "{now} grant job={}", self.jobs[i].desc.id);
        self.begin_resize(i, now)
    }

    fn on_resize_complete(&mut self, i: usize) -> Result<(), SimError> {
        let now = self.now();
        let j = &mut self.jobs[i];
        let id = j.desc.id;
        let f = j.in_flight.take().ok_or(RmsError::NotRunning(id))?;
        let from = j.size;
        if f.kind == ActionKind::Shrink {
            complete_shrink(id, f.target, &mut self.cluster)?;
        }
        let j = &mut self.jobs[i];
        j.resizer = None;
        j.size = f.target;
        j.resizes += 1;
        self.close(f.record, f.applied_at, now, ActionOutcome::Applied);
        trace!(self, "{now} resized job={id} from={from} to={}", f.target);
        if f.kind == ActionKind::Shrink {
            self.schedule_queue()?;
        }
        self.resume(i, now)
    }

    fn on_resizer_timeout(&mut self, i: usize) -> Result<(), SimError> {
        let now = self.now();
        let j = &mut self.jobs[i];
        let id = j.desc.id;
        let f = j.in_flight.take().ok_or(RmsError::NotRunning(id))?;
        if let Some(mut rj) = j.resizer.take() {
            cancel_resizer(&mut rj, &mut self.cluster);
        }
        self.close(f.record, f.applied_at, now, ActionOutcome::Cancelled);
        trace!(self, "{now} cancel job={id} target={}", f.target);
        self.resume(i, now)
    }

    fn close(&mut self, record: Option<usize>, applied_at: SimTime, end: SimTime, outcome: ActionOutcome) {
        if let Some(r) = record {
            let a = &mut self.actions[r];
            a.duration = (end - applied_at).as_secs_f64();
            a.outcome = outcome;
        }
    }

    /// The job computes its next step from `at`. In asynchronous mode the
    /// resource manager is consulted first, without blocking the step.
    fn resume(&mut self, i: usize, at: SimTime) -> Result<(), SimError> {
        if self.config.mode == Mode::Async && self.jobs[i].desc.flexible {
            match self.consult(i, true)? {
                CheckOutcome::Decided(d) => {
                    let r = self.record(i, d, ActionOutcome::Pending);
                    self.jobs[i].pending_record = Some(r);
                }
                CheckOutcome::Inhibited => trace!(self, "{} inhibited job={}", self.now(), self.jobs[i].desc.id),
                CheckOutcome::PendingOutstanding => {}
            }
        }
        let j = &mut self.jobs[i];
        j.phase = Phase::Computing;
        let step = j.step_at(j.size)?;
        j.est_finish = j.estimate_after(at, j.remaining_steps(), j.size)?;
        self.schedule(i, at + step, EventKind::StepComplete)
    }
}

fn involved(action: &Action, current: u32) -> u32 {
    action.target.map_or(0, |t| t.abs_diff(current))
}

fn action_of(a: &ActionRecord) -> Action {
    Action {
        kind: a.kind,
        target: a.target,
        reason: a.reason,
    }
}

/// Runs a workload to exhaustion.
pub fn simulate(config: SimConfig, workload: Vec<JobDescriptor>) -> Result<SimOutput, SimError> {
    Simulation::new(config, workload)?.run(None)
}
