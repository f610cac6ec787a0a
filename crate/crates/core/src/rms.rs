//! Resource manager model: node accounting, the priority queue with EASY
//! backfill, the reconfiguration policy and resizer jobs.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use crate::dmr::DmrRequest;
use crate::error::RmsError;
use crate::simcore::{JobId, SimTime};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PriorityClass {
    Base,
    /// Queued job that triggered a shrink.
    Boosted,
    Resizer,
}

/// Higher class first; within a class, lower `order` first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Priority {
    pub class: PriorityClass,
    pub order: u64,
}

impl Priority {
    fn rank(&self) -> (std::cmp::Reverse<PriorityClass>, u64) {
        (std::cmp::Reverse(self.class), self.order)
    }
}

/// Something waiting for nodes: a job, or the resizer of a running job.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QueueItem {
    Job(JobId),
    Resizer(JobId),
}

impl QueueItem {
    pub fn job(self) -> JobId {
        match self {
            QueueItem::Job(id) | QueueItem::Resizer(id) => id,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueueEntry {
    pub item: QueueItem,
    pub need: u32,
    pub priority: Priority,
    /// Runtime estimate used for backfill decisions.
    pub est_runtime: SimTime,
}

/// Nodes expected to be released by running work at `at`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Release {
    pub at: SimTime,
    pub nodes: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Admission {
    Queued,
    /// Larger than the whole cluster; never started.
    Unschedulable,
}

#[derive(Clone, Debug)]
pub struct ClusterState {
    total: u32,
    free: u32,
    /// Nodes held by jobs whose shrink is in flight and will be freed.
    incoming: u32,
    allocations: BTreeMap<JobId, u32>,
    queue: Vec<QueueEntry>,
    known: HashSet<JobId>,
    unschedulable: Vec<JobId>,
    next_order: u64,
}

impl ClusterState {
    pub fn new(total_nodes: u32) -> Self {
        ClusterState {
            total: total_nodes,
            free: total_nodes,
            incoming: 0,
            allocations: BTreeMap::new(),
            queue: Vec::new(),
            known: HashSet::new(),
            unschedulable: Vec::new(),
            next_order: 0,
        }
    }

    pub fn total_nodes(&self) -> u32 {
        self.total
    }

    pub fn free_nodes(&self) -> u32 {
        self.free
    }

    pub fn incoming_nodes(&self) -> u32 {
        self.incoming
    }

    pub fn allocated_nodes(&self) -> u32 {
        self.allocations.values().sum()
    }

    pub fn allocation(&self, job: JobId) -> Option<u32> {
        self.allocations.get(&job).copied()
    }

    pub fn running_jobs(&self) -> usize {
        self.allocations.len()
    }

    pub fn unschedulable(&self) -> &[JobId] {
        &self.unschedulable
    }

    /// Queue entries in priority order.
    pub fn queue(&self) -> Vec<&QueueEntry> {
        let mut q: Vec<&QueueEntry> = self.queue.iter().collect();
        q.sort_by_key(|e| e.priority.rank());
        q
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn priority_of(&self, item: QueueItem) -> Option<Priority> {
        self.queue.iter().find(|e| e.item == item).map(|e| e.priority)
    }

    pub fn is_conserved(&self) -> bool {
        self.free + self.allocated_nodes() == self.total
    }

    fn next_order(&mut self) -> u64 {
        let o = self.next_order;
        self.next_order += 1;
        o
    }

    /// Queues a job with base priority (older submissions rank higher).
    pub fn submit(&mut self, job: JobId, need: u32, est_runtime: SimTime) -> Result<Admission, RmsError> {
        if !self.known.insert(job) {
            return Err(RmsError::DuplicateJob(job));
        }
        if need > self.total {
            self.unschedulable.push(job);
            return Ok(Admission::Unschedulable);
        }
        let order = self.next_order();
        self.queue.push(QueueEntry {
            item: QueueItem::Job(job),
            need,
            priority: Priority {
                class: PriorityClass::Base,
                order,
            },
            est_runtime,
        });
        Ok(Admission::Queued)
    }

    /// Raises a queued job above every base-priority job.
    pub fn boost(&mut self, job: JobId) -> bool {
        let order = self.next_order();
        match self.queue.iter_mut().find(|e| e.item == QueueItem::Job(job)) {
            Some(e) => {
                if e.priority.class == PriorityClass::Base {
                    e.priority = Priority {
                        class: PriorityClass::Boosted,
                        order,
                    };
                }
                true
            }
            None => false,
        }
    }

    fn take(&mut self, job: JobId, nodes: u32) {
        debug_assert!(nodes <= self.free);
        self.free -= nodes;
        *self.allocations.entry(job).or_insert(0) += nodes;
    }

    /// Frees every node of a finished job.
    pub fn finish(&mut self, job: JobId) -> Result<u32, RmsError> {
        let nodes = self.allocations.remove(&job).ok_or(RmsError::NotRunning(job))?;
        self.free += nodes;
        Ok(nodes)
    }

    /// Starts queued work in priority order with EASY backfill.
    ///
    /// The head of the queue gets a reservation at the earliest time enough
    /// nodes are released; a later entry may start now only if it fits in the
    /// free nodes and either ends before the reservation or only uses nodes
    /// the head will not need.
    pub fn schedule_queue(&mut self, releases: &[Release], now: SimTime, backfill: bool) -> Vec<QueueItem> {
        self.queue.sort_by_key(|e| e.priority.rank());
        let mut started = Vec::new();
        while let Some(head) = self.queue.first() {
            if head.need > self.free {
                break;
            }
            let e = self.queue.remove(0);
            self.take(e.item.job(), e.need);
            started.push(e.item);
        }
        if !backfill || self.queue.len() < 2 {
            return started;
        }

        let head_need = self.queue[0].need;
        let mut rel: Vec<Release> = releases.to_vec();
        rel.sort_by_key(|r| (r.at, r.nodes));
        let mut avail = self.free;
        let mut shadow = SimTime::MAX;
        let mut extra = 0;
        for r in &rel {
            avail += r.nodes;
            if avail >= head_need {
                shadow = r.at;
                extra = avail - head_need;
                break;
            }
        }

        let mut i = 1;
        while i < self.queue.len() {
            let e = &self.queue[i];
            if e.need <= self.free {
                let ends_before = now + e.est_runtime <= shadow;
                if ends_before || e.need <= extra {
                    if !ends_before {
                        extra -= e.need;
                    }
                    let e = self.queue.remove(i);
                    self.take(e.item.job(), e.need);
                    started.push(e.item);
                    continue;
                }
            }
            i += 1;
        }
        started
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ActionKind {
    Expand,
    Shrink,
    None,
}

impl ActionKind {
    pub fn name(self) -> &'static str {
        match self {
            ActionKind::Expand => "expand",
            ActionKind::Shrink => "shrink",
            ActionKind::None => "none",
        }
    }
}

/// Which policy mode produced a decision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Reason {
    RequestedAction,
    PreferredMatch,
    WideOptExpand,
    WideOptShrink,
    NoChange,
}

impl Reason {
    pub fn name(self) -> &'static str {
        match self {
            Reason::RequestedAction => "RequestedAction",
            Reason::PreferredMatch => "PreferredMatch",
            Reason::WideOptExpand => "WideOptExpand",
            Reason::WideOptShrink => "WideOptShrink",
            Reason::NoChange => "NoChange",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Action {
    pub kind: ActionKind,
    pub target: Option<u32>,
    pub reason: Reason,
}

impl Action {
    pub fn expand(target: u32, reason: Reason) -> Self {
        Action {
            kind: ActionKind::Expand,
            target: Some(target),
            reason,
        }
    }

    pub fn shrink(target: u32, reason: Reason) -> Self {
        Action {
            kind: ActionKind::Shrink,
            target: Some(target),
            reason,
        }
    }

    pub fn none(reason: Reason) -> Self {
        Action {
            kind: ActionKind::None,
            target: None,
            reason,
        }
    }

    /// Checks the action against the allocation it applies to.
    pub fn is_valid_for(&self, current: u32, request: &DmrRequest) -> bool {
        match (self.kind, self.target) {
            (ActionKind::None, None) => true,
            (ActionKind::Expand, Some(t)) => {
                t > current && t <= request.max && is_factor_reachable(current, t, request.factor)
            }
            (ActionKind::Shrink, Some(t)) => {
                t < current && t >= request.min && is_factor_reachable(t, current, request.factor)
            }
            _ => false,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.target {
            Some(t) => write!(f, "{}({})", self.kind.name(), t),
            None => f.write_str(self.kind.name()),
        }
    }
}

/// True when `large = small * factor^k` for some `k >= 0`.
pub fn is_factor_reachable(small: u32, large: u32, factor: u32) -> bool {
    let mut x = small;
    while x < large {
        match x.checked_mul(factor) {
            Some(n) => x = n,
            None => return false,
        }
    }
    x == large
}

/// Sizes `current * factor^k <= max` for `k >= 1`, ascending.
pub fn expansion_targets(current: u32, max: u32, factor: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut x = current;
    while let Some(n) = x.checked_mul(factor) {
        if n > max {
            break;
        }
        out.push(n);
        x = n;
    }
    out
}

/// Sizes `current / factor^k >= min` for `k >= 1` with exact division, descending.
pub fn shrink_targets(current: u32, min: u32, factor: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut x = current;
    while x.is_multiple_of(factor) && x / factor >= min.max(1) {
        x /= factor;
        out.push(x);
    }
    out
}

/// Policy modes that may be switched off in a scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PolicyToggles {
    pub requested_action: bool,
    pub preferred: bool,
    pub wide_optimization: bool,
}

impl Default for PolicyToggles {
    fn default() -> Self {
        PolicyToggles {
            requested_action: true,
            preferred: true,
            wide_optimization: true,
        }
    }
}

/// Cluster view at decision time, kept for auditing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecisionContext {
    pub current: u32,
    pub free: u32,
    pub incoming: u32,
    pub queued: usize,
    /// Whether some queued entry already fits in `free + incoming`.
    pub queued_fits: bool,
    /// Queued job enabled (and boosted) by a shrink, with its node need.
    pub enabled: Option<(JobId, u32)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Decision {
    pub action: Action,
    pub context: DecisionContext,
}

/// Decides the reconfiguration of a running job.
///
/// Modes are tried in order: an explicit request (`min` above the current
/// size), a preferred size, then wide optimization. A shrink taken by wide
/// optimization boosts the queued job it enables.
pub fn decide_action(
    job: JobId,
    request: &DmrRequest,
    state: &mut ClusterState,
    toggles: PolicyToggles,
) -> Result<Decision, RmsError> {
    request.validate()?;
    let current = state.allocation(job).ok_or(RmsError::NotRunning(job))?;
    let free = state.free;
    let avail = state.free + state.incoming;
    let queued_fits = state.queue.iter().any(|e| e.need <= avail);
    let mut context = DecisionContext {
        current,
        free,
        incoming: state.incoming,
        queued: state.queue.len(),
        queued_fits,
        enabled: None,
    };
    let decided = |action: Action, context: DecisionContext| Ok(Decision { action, context });
    let up = expansion_targets(current, request.max, request.factor);
    let largest_fitting_up = |limit: u32| up.iter().copied().filter(|t| *t <= limit && t - current <= free).max();

    if toggles.requested_action && request.min > current {
        let action = match up.iter().copied().find(|t| *t >= request.min) {
            Some(t) if t - current <= free => Action::expand(t, Reason::RequestedAction),
            _ => Action::none(Reason::RequestedAction),
        };
        return decided(action, context);
    }

    if toggles.preferred {
        if let Some(pref) = request.preferred {
            let action = if pref == current {
                Action::none(Reason::PreferredMatch)
            } else if pref < current {
                match shrink_targets(current, request.min.max(pref), request.factor).last() {
                    Some(&t) => Action::shrink(t, Reason::PreferredMatch),
                    None => Action::none(Reason::PreferredMatch),
                }
            } else {
                match largest_fitting_up(pref) {
                    Some(t) => Action::expand(t, Reason::PreferredMatch),
                    None => Action::none(Reason::PreferredMatch),
                }
            };
            return decided(action, context);
        }
    }

    if toggles.wide_optimization {
        if !state.queue.is_empty() {
            let down = shrink_targets(current, request.min, request.factor);
            // jobs that already fit are held back by the backfill reservation only
            let mut candidates: Vec<&QueueEntry> = state
                .queue
                .iter()
                .filter(|e| matches!(e.item, QueueItem::Job(_)) && e.need > avail)
                .collect();
            candidates.sort_by_key(|e| e.priority.rank());
            for e in candidates {
                // down is descending: the first hit is the smallest shrink
                if let Some(&t) = down.iter().find(|t| avail + (current - **t) >= e.need) {
                    let enabled = e.item.job();
                    context.enabled = Some((enabled, e.need));
                    state.boost(enabled);
                    return decided(Action::shrink(t, Reason::WideOptShrink), context);
                }
            }
        }
        if !queued_fits {
            if let Some(t) = largest_fitting_up(request.max) {
                return decided(Action::expand(t, Reason::WideOptExpand), context);
            }
        }
    }
    decided(Action::none(Reason::NoChange), context)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResizerState {
    Pending,
    Granted,
    Cancelled,
}

/// Auxiliary allocation request whose nodes are handed to an expanding job.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResizerJob {
    pub parent: JobId,
    pub extra_nodes: u32,
    pub target: u32,
    pub submitted: SimTime,
    pub deadline: SimTime,
    pub state: ResizerState,
    pub granted_at: Option<SimTime>,
}

/// Submits a maximum-priority resizer for `target - current` nodes. It is
/// granted at once when the nodes are free, otherwise it waits in the queue
/// until granted by [`ClusterState::schedule_queue`] or cancelled at `deadline`.
pub fn begin_expand(
    job: JobId,
    target: u32,
    state: &mut ClusterState,
    now: SimTime,
    timeout: SimTime,
) -> Result<ResizerJob, RmsError> {
    let current = state.allocation(job).ok_or(RmsError::NotRunning(job))?;
    if target <= current {
        return Err(RmsError::InconsistentRequest(format!(
            "expand target {target} not above current {current}"
        )));
    }
    let extra = target - current;
    let mut rj = ResizerJob {
        parent: job,
        extra_nodes: extra,
        target,
        submitted: now,
        deadline: now + timeout,
        state: ResizerState::Pending,
        granted_at: None,
    };
    if extra <= state.free {
        state.take(job, extra);
        rj.state = ResizerState::Granted;
        rj.granted_at = Some(now);
    } else {
        let order = state.next_order();
        state.queue.push(QueueEntry {
            item: QueueItem::Resizer(job),
            need: extra,
            priority: Priority {
                class: PriorityClass::Resizer,
                order,
            },
            est_runtime: SimTime::ZERO,
        });
    }
    Ok(rj)
}

/// Withdraws a pending resizer; allocations are untouched.
pub fn cancel_resizer(rj: &mut ResizerJob, state: &mut ClusterState) {
    if rj.state == ResizerState::Pending {
        state.queue.retain(|e| e.item != QueueItem::Resizer(rj.parent));
        rj.state = ResizerState::Cancelled;
    }
}

/// Marks the nodes a shrink will free as incoming until the barrier completes.
pub fn begin_shrink(job: JobId, target: u32, state: &mut ClusterState) -> Result<u32, RmsError> {
    let current = state.allocation(job).ok_or(RmsError::NotRunning(job))?;
    if target >= current || target == 0 {
        return Err(RmsError::InconsistentRequest(format!(
            "shrink target {target} not below current {current}"
        )));
    }
    let released = current - target;
    state.incoming += released;
    Ok(released)
}

/// Applies a shrink once every released rank has acknowledged.
pub fn complete_shrink(job: JobId, target: u32, state: &mut ClusterState) -> Result<u32, RmsError> {
    let current = state.allocation(job).ok_or(RmsError::NotRunning(job))?;
    if target >= current {
        return Err(RmsError::InconsistentRequest(format!(
            "shrink target {target} not below current {current}"
        )));
    }
    let released = current - target;
    state.allocations.insert(job, target);
    state.free += released;
    state.incoming = state.incoming.saturating_sub(released);
    Ok(released)
}
