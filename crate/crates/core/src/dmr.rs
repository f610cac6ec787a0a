//! Runtime side of dynamic reconfiguration: synchronous and asynchronous
//! checks, the checking inhibitor, and data redistribution plans.

use std::fmt::{self, Write as _};
use std::ops::Range;

use crate::error::{DmrError, RmsError};
use crate::rms::{decide_action, Action, ClusterState, Decision, PolicyToggles};
use crate::simcore::SimTime;
use crate::workload::JobDescriptor;

/// Arguments a job passes when asking for a reconfiguration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DmrRequest {
    pub min: u32,
    pub max: u32,
    pub factor: u32,
    pub preferred: Option<u32>,
}

impl DmrRequest {
    pub fn for_job(job: &JobDescriptor) -> Self {
        DmrRequest {
            min: job.min_procs,
            max: job.max_procs,
            factor: job.factor,
            preferred: job.preferred_procs,
        }
    }

    pub fn validate(&self) -> Result<(), RmsError> {
        if self.min > self.max {
            return Err(RmsError::InconsistentRequest(format!(
                "min {} > max {}",
                self.min, self.max
            )));
        }
        if self.min == 0 {
            return Err(RmsError::InconsistentRequest("min must be at least 1".into()));
        }
        if self.factor < 2 {
            return Err(RmsError::InconsistentRequest(format!("factor {} < 2", self.factor)));
        }
        if let Some(p) = self.preferred {
            if p < self.min || p > self.max {
                return Err(RmsError::InconsistentRequest(format!(
                    "preferred {p} outside [{}, {}]",
                    self.min, self.max
                )));
            }
        }
        Ok(())
    }
}

/// Action decided at one reconfiguring point and applied at the next.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PendingAction {
    pub action: Action,
    pub decided_at_step: u32,
    pub decided_at: SimTime,
}

/// Per-job state of the checking machinery.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CheckState {
    pub last_forwarded: Option<SimTime>,
    pub forwarded: u64,
    pub inhibited: u64,
    pub pending: Option<PendingAction>,
}

impl CheckState {
    /// True iff a check at `now` may reach the resource manager. A `true`
    /// result records `now` as the last forwarded check.
    pub fn inhibitor_gate(&mut self, now: SimTime, period: Option<f64>) -> bool {
        let open = match (period, self.last_forwarded) {
            (None, _) | (_, None) => true,
            (Some(p), Some(last)) => now.saturating_sub(last) >= SimTime::from_secs_f64(p),
        };
        if open {
            self.last_forwarded = Some(now);
            self.forwarded += 1;
        } else {
            self.inhibited += 1;
        }
        open
    }
}

/// Result of a check call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckOutcome {
    /// Dropped by the inhibitor; the resource manager was not contacted.
    Inhibited,
    /// An asynchronous decision is already waiting to be applied.
    PendingOutstanding,
    Decided(Decision),
}

/// Everything a check needs to know about the calling job.
#[derive(Clone, Copy, Debug)]
pub struct CheckCall<'a> {
    pub job: &'a JobDescriptor,
    pub flexible: bool,
    pub now: SimTime,
    pub step: u32,
    pub period: Option<f64>,
}

/// Synchronous check: the returned decision is applied immediately.
pub fn check_status(
    call: CheckCall<'_>,
    request: &DmrRequest,
    check: &mut CheckState,
    state: &mut ClusterState,
    toggles: PolicyToggles,
) -> Result<CheckOutcome, DmrError> {
    if !call.flexible {
        return Err(DmrError::NotFlexible(call.job.id));
    }
    request.validate()?;
    if !check.inhibitor_gate(call.now, call.period) {
        return Ok(CheckOutcome::Inhibited);
    }
    Ok(CheckOutcome::Decided(decide_action(
        call.job.id,
        request,
        state,
        toggles,
    )?))
}

/// Asynchronous check: the decision is taken against the current cluster
/// state and stored, to be applied verbatim at the next reconfiguring point.
pub fn icheck_status(
    call: CheckCall<'_>,
    request: &DmrRequest,
    check: &mut CheckState,
    state: &mut ClusterState,
    toggles: PolicyToggles,
) -> Result<CheckOutcome, DmrError> {
    if !call.flexible {
        return Err(DmrError::NotFlexible(call.job.id));
    }
    request.validate()?;
    if check.pending.is_some() {
        return Ok(CheckOutcome::PendingOutstanding);
    }
    if !check.inhibitor_gate(call.now, call.period) {
        return Ok(CheckOutcome::Inhibited);
    }
    let decision = decide_action(call.job.id, request, state, toggles)?;
    check.pending = Some(PendingAction {
        action: decision.action,
        decided_at_step: call.step,
        decided_at: call.now,
    });
    Ok(CheckOutcome::Decided(decision))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Expand,
    Shrink,
    Identity,
}

/// One point-to-point data movement.
///
/// For expansions `dst` is a rank of the new process set. For shrinks it is
/// the receiving rank of the old set; receivers are then renumbered through
/// [`RedistributionPlan::rank_map`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transfer {
    pub src: u32,
    pub dst: u32,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RedistributionPlan {
    pub old_world: u32,
    pub new_world: u32,
    pub direction: Direction,
    pub volume: u64,
    pub transfers: Vec<Transfer>,
    /// For each new rank, the old ranks whose data it ends up holding.
    pub rank_map: Vec<Vec<u32>>,
}

/// Splits `len` units into `parts` contiguous pieces; the first `len % parts`
/// pieces are one unit longer.
pub fn block_ranges(start: u64, len: u64, parts: u32) -> Vec<Range<u64>> {
    let parts = u64::from(parts);
    let (base, rem) = (len / parts, len % parts);
    let mut out = Vec::with_capacity(parts as usize);
    let mut at = start;
    for i in 0..parts {
        let n = base + u64::from(i < rem);
        out.push(at..at + n);
        at += n;
    }
    out
}

impl RedistributionPlan {
    /// Byte range held by each rank of the old process set.
    pub fn old_chunks(&self) -> Vec<Range<u64>> {
        block_ranges(0, self.volume, self.old_world)
    }

    /// Byte range held by each new rank once the plan has run on a
    /// block-partitioned dataset.
    pub fn ownership(&self) -> Vec<Range<u64>> {
        self.apply(&self.old_chunks())
    }

    /// Moves arbitrary per-rank holdings through the plan. Each old rank
    /// holds one contiguous range; so does each new rank afterwards.
    pub fn apply(&self, holdings: &[Range<u64>]) -> Vec<Range<u64>> {
        assert_eq!(
            holdings.len(),
            self.old_world as usize,
            "holdings must cover the old world"
        );
        match self.direction {
            Direction::Identity => holdings.to_vec(),
            Direction::Expand => {
                let factor = self.new_world / self.old_world;
                holdings
                    .iter()
                    .flat_map(|c| block_ranges(c.start, c.end - c.start, factor))
                    .collect()
            }
            Direction::Shrink => self
                .rank_map
                .iter()
                .map(|olds| {
                    let first = &holdings[olds[0] as usize];
                    let last = &holdings[*olds.last().unwrap() as usize];
                    first.start..last.end
                })
                .collect(),
        }
    }

    pub fn total_transferred(&self) -> u64 {
        self.transfers.iter().map(|t| t.bytes).sum()
    }
}

impl fmt::Display for RedistributionPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dir = match self.direction {
            Direction::Expand => "expand",
            Direction::Shrink => "shrink",
            Direction::Identity => "identity",
        };
        let mut edges = String::new();
        for (i, t) in self.transfers.iter().enumerate() {
            if i > 0 {
                edges.push(',');
            }
            write!(edges, "{}->{}:{}", t.src, t.dst, t.bytes)?;
        }
        write!(f, "{dir} {}->{} [{edges}]", self.old_world, self.new_world)
    }
}

fn identity_plan(old_world: u32, volume: u64) -> RedistributionPlan {
    RedistributionPlan {
        old_world,
        new_world: old_world,
        direction: Direction::Identity,
        volume,
        transfers: Vec::new(),
        rank_map: (0..old_world).map(|r| vec![r]).collect(),
    }
}

/// Each old rank `r` partitions its chunk into `factor` pieces and sends
/// piece `i` to new rank `r * factor + i`.
pub fn plan_expand(old_world: u32, factor: u32, volume: u64) -> Result<RedistributionPlan, DmrError> {
    if old_world == 0 {
        return Err(DmrError::Indivisible { old_world, factor });
    }
    if factor == 0 {
        return Err(DmrError::InvalidFactor(factor));
    }
    if factor == 1 {
        return Ok(identity_plan(old_world, volume));
    }
    let chunks = block_ranges(0, volume, old_world);
    let mut transfers = Vec::with_capacity((old_world * factor) as usize);
    let mut rank_map = vec![Vec::new(); (old_world * factor) as usize];
    for (r, chunk) in (0..old_world).zip(&chunks) {
        for (i, piece) in (0..factor).zip(block_ranges(chunk.start, chunk.end - chunk.start, factor)) {
            let dst = r * factor + i;
            transfers.push(Transfer {
                src: r,
                dst,
                bytes: piece.end - piece.start,
            });
            rank_map[dst as usize].push(r);
        }
    }
    Ok(RedistributionPlan {
        old_world,
        new_world: old_world * factor,
        direction: Direction::Expand,
        volume,
        transfers,
        rank_map,
    })
}

/// Ranks with `r % factor == factor - 1` receive; every other rank sends its
/// whole chunk to `factor * (r / factor + 1) - 1`. Receiver `r` becomes new
/// rank `r / factor`.
pub fn plan_shrink(old_world: u32, factor: u32, volume: u64) -> Result<RedistributionPlan, DmrError> {
    if factor == 0 {
        return Err(DmrError::InvalidFactor(factor));
    }
    if factor == 1 {
        return Ok(identity_plan(old_world, volume));
    }
    if old_world == 0 || !old_world.is_multiple_of(factor) {
        return Err(DmrError::Indivisible { old_world, factor });
    }
    let chunks = block_ranges(0, volume, old_world);
    let mut transfers = Vec::new();
    let mut rank_map = vec![Vec::new(); (old_world / factor) as usize];
    for r in 0..old_world {
        let sender = r % factor != factor - 1;
        let receiver = factor * (r / factor + 1) - 1;
        if sender {
            let c = &chunks[r as usize];
            transfers.push(Transfer {
                src: r,
                dst: receiver,
                bytes: c.end - c.start,
            });
        }
        rank_map[(receiver / factor) as usize].push(r);
    }
    Ok(RedistributionPlan {
        old_world,
        new_world: old_world / factor,
        direction: Direction::Shrink,
        volume,
        transfers,
        rank_map,
    })
}

/// Plan for a resize between two factor-reachable sizes, applying all
/// levels at once.
pub fn plan_resize(from: u32, to: u32, volume: u64) -> Result<RedistributionPlan, DmrError> {
    use std::cmp::Ordering::*;
    match to.cmp(&from) {
        Equal => Ok(identity_plan(from, volume)),
        Greater if to.is_multiple_of(from) => plan_expand(from, to / from, volume),
        Less if to > 0 && from.is_multiple_of(to) => plan_shrink(from, from / to, volume),
        _ => Err(DmrError::Indivisible {
            old_world: from,
            factor: 0,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::appmodel::AppKind;
    use crate::rms::{ActionKind, Reason};
    use crate::simcore::JobId;

    const GB: u64 = 1 << 30;

    fn t(src: u32, dst: u32, bytes: u64) -> Transfer {
        Transfer { src, dst, bytes }
    }

    #[test]
    fn expand_two_by_two() {
        let p = plan_expand(2, 2, GB).unwrap();
        let q = GB / 4;
        assert_eq!(p.transfers, vec![t(0, 0, q), t(0, 1, q), t(1, 2, q), t(1, 3, q)]);
        assert_eq!(p.new_world, 4);
        assert_eq!(
            p.to_string(),
            format!("expand 2->4 [0->0:{q},0->1:{q},1->2:{q},1->3:{q}]")
        );
    }

    #[test]
    fn expand_identity_and_single_rank() {
        let p = plan_expand(3, 1, 300).unwrap();
        assert_eq!(p.direction, Direction::Identity);
        assert!(p.transfers.is_empty());
        let p = plan_expand(1, 4, 1000).unwrap();
        let dsts: Vec<_> = p.transfers.iter().map(|t| (t.src, t.dst, t.bytes)).collect();
        assert_eq!(dsts, vec![(0, 0, 250), (0, 1, 250), (0, 2, 250), (0, 3, 250)]);
    }

    #[test]
    fn shrink_four_by_two() {
        let p = plan_shrink(4, 2, 400).unwrap();
        assert_eq!(p.transfers, vec![t(0, 1, 100), t(2, 3, 100)]);
        assert_eq!(p.rank_map, vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn shrink_four_by_four() {
        let p = plan_shrink(4, 4, 400).unwrap();
        assert_eq!(p.transfers, vec![t(0, 3, 100), t(1, 3, 100), t(2, 3, 100)]);
        assert_eq!(p.rank_map, vec![vec![0, 1, 2, 3]]);
        assert_eq!(p.new_world, 1);
    }

    #[test]
    fn shrink_requires_divisibility() {
        assert_eq!(
            plan_shrink(3, 2, 10),
            Err(DmrError::Indivisible {
                old_world: 3,
                factor: 2
            })
        );
    }

    #[test]
    fn multi_level_resize() {
        let p = plan_resize(4, 16, 1600).unwrap();
        assert_eq!((p.direction, p.new_world), (Direction::Expand, 16));
        let p = plan_resize(16, 2, 1600).unwrap();
        assert_eq!((p.direction, p.new_world), (Direction::Shrink, 2));
        assert!(plan_resize(3, 4, 10).is_err());
    }

    #[test]
    fn gate_arithmetic() {
        let mut c = CheckState::default();
        assert!(c.inhibitor_gate(SimTime::from_secs_f64(10.0), Some(15.0)));
        assert!(!c.inhibitor_gate(SimTime::from_secs_f64(20.0), Some(15.0)));
        assert!(c.inhibitor_gate(SimTime::from_secs_f64(25.0), Some(15.0)));
        assert_eq!((c.forwarded, c.inhibited), (2, 1));
        let mut open = CheckState::default();
        for s in 0..100 {
            assert!(open.inhibitor_gate(SimTime::from_micros(s), None));
        }
    }

    #[test]
    fn gate_bounds_forwarded_checks() {
        // 2 s steps, 5 s period
        let mut c = CheckState::default();
        let mut now = 0.0;
        for _ in 0..500 {
            now += 2.0;
            c.inhibitor_gate(SimTime::from_secs_f64(now), Some(5.0));
        }
        assert!(c.forwarded as f64 <= (now / 5.0).ceil());
    }

    fn job(flexible: bool) -> JobDescriptor {
        JobDescriptor {
            id: JobId(0),
            arrival: SimTime::ZERO,
            initial_size: 4,
            min_procs: 1,
            max_procs: 16,
            preferred_procs: None,
            factor: 2,
            flexible,
            app: AppKind::Fs,
            iterations: 10,
            base_step_time: SimTime::from_secs_f64(1.0),
            data_volume: 0,
        }
    }

    fn started(state: &mut ClusterState, j: &JobDescriptor) {
        state.submit(j.id, j.initial_size, SimTime::ZERO).unwrap();
        state.schedule_queue(&[], SimTime::ZERO, false);
    }

    #[test]
    fn check_status_paths() {
        let j = job(true);
        let mut state = ClusterState::new(20);
        started(&mut state, &j);
        let mut check = CheckState::default();
        let call = CheckCall {
            job: &j,
            flexible: true,
            now: SimTime::ZERO,
            step: 1,
            period: Some(10.0),
        };
        let req = DmrRequest::for_job(&j);
        let out = check_status(call, &req, &mut check, &mut state, PolicyToggles::default()).unwrap();
        let CheckOutcome::Decided(d) = out else {
            panic!("{out:?}")
        };
        assert_eq!(
            (d.action.kind, d.action.target, d.action.reason),
            (ActionKind::Expand, Some(16), Reason::WideOptExpand)
        );
        // inside the period: inhibited, no decision
        let call = CheckCall {
            now: SimTime::from_secs_f64(5.0),
            ..call
        };
        assert_eq!(
            check_status(call, &req, &mut check, &mut state, PolicyToggles::default()),
            Ok(CheckOutcome::Inhibited)
        );
        assert_eq!(check.forwarded, 1);

        let fixed = job(false);
        let call = CheckCall {
            job: &fixed,
            flexible: false,
            ..call
        };
        assert_eq!(
            check_status(call, &req, &mut check, &mut state, PolicyToggles::default()),
            Err(DmrError::NotFlexible(JobId(0)))
        );
        let bad = DmrRequest { min: 8, max: 4, ..req };
        let call = CheckCall {
            job: &j,
            flexible: true,
            now: SimTime::from_secs_f64(50.0),
            ..call
        };
        assert!(matches!(
            check_status(call, &bad, &mut check, &mut state, PolicyToggles::default()),
            Err(DmrError::Rms(RmsError::InconsistentRequest(_)))
        ));
    }

    #[test]
    fn icheck_stores_one_pending_action() {
        let j = job(true);
        let mut state = ClusterState::new(20);
        started(&mut state, &j);
        let mut check = CheckState::default();
        let req = DmrRequest::for_job(&j);
        let call = CheckCall {
            job: &j,
            flexible: true,
            now: SimTime::ZERO,
            step: 3,
            period: None,
        };
        let out = icheck_status(call, &req, &mut check, &mut state, PolicyToggles::default()).unwrap();
        assert!(matches!(out, CheckOutcome::Decided(_)));
        let pending = check.pending.unwrap();
        assert_eq!(pending.decided_at_step, 3);
        assert_eq!(pending.action.target, Some(16));
        assert_eq!(
            icheck_status(call, &req, &mut check, &mut state, PolicyToggles::default()),
            Ok(CheckOutcome::PendingOutstanding)
        );
        assert_eq!(check.forwarded, 1);
    }
}
