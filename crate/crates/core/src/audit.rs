//! Trace auditor. Re-reads a run's trace and checks node conservation,
//! allocation bounds and the justification of every policy decision.

use std::collections::HashMap;

use crate::simcore::JobId;
use crate::workload::JobDescriptor;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AuditReport {
    pub events: usize,
    pub decisions: usize,
    pub shrinks: usize,
    pub wide_expands: usize,
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `key=value` fields of a trace line.
fn fields(line: &str) -> HashMap<&str, &str> {
    line.split_whitespace().filter_map(|f| f.split_once('=')).collect()
}

fn num<T: std::str::FromStr>(f: &HashMap<&str, &str>, key: &str) -> Option<T> {
    f.get(key)?.parse().ok()
}

/// Splits `shrink(8)` into its kind and target.
fn parse_action(s: &str) -> (&str, Option<u32>) {
    match s.split_once('(') {
        Some((kind, rest)) => (kind, rest.trim_end_matches(')').parse().ok()),
        None => (s, None),
    }
}

/// Audits a trace against the workload it was produced from.
pub fn audit_trace(trace: &str, jobs: &[JobDescriptor]) -> AuditReport {
    let bounds: HashMap<JobId, &JobDescriptor> = jobs.iter().map(|j| (j.id, j)).collect();
    let mut report = AuditReport::default();
    let mut total: Option<u32> = None;
    let mut last_alloc: Option<u32> = None;
    let bad = |report: &mut AuditReport, lineno: usize, msg: String| {
        report.violations.push(format!("line {}: {msg}", lineno + 1));
    };

    for (n, line) in trace.lines().enumerate() {
        let f = fields(line);
        if line.starts_with('#') {
            total = num(&f, "nodes");
            continue;
        }
        let mut words = line.split_whitespace();
        let (Some(_time), Some(kind)) = (words.next(), words.next()) else {
            continue;
        };
        match kind {
            "decide" => {
                report.decisions += 1;
                let (Some(action), Some(reason)) = (f.get("action"), f.get("reason")) else {
                    bad(&mut report, n, "malformed decision".into());
                    continue;
                };
                let (act, target) = parse_action(action);
                let current: u32 = num(&f, "current").unwrap_or(0);
                let free: u32 = num(&f, "free").unwrap_or(0);
                let incoming: u32 = num(&f, "incoming").unwrap_or(0);
                let queued: u32 = num(&f, "queued").unwrap_or(0);
                let fits = f.get("fits") == Some(&"1");
                match (act, *reason) {
                    ("shrink", "WideOptShrink") => {
                        report.shrinks += 1;
                        let t = target.unwrap_or(current);
                        let enabled = f.get("enabled").and_then(|e| e.split_once(':'));
                        match enabled.and_then(|(_, need)| need.parse::<u32>().ok()) {
                            Some(need) => {
                                let avail = free + incoming;
                                if need > avail + current.saturating_sub(t) {
                                    bad(
                                        &mut report,
                                        n,
                                        format!("shrink to {t} cannot admit a job needing {need}"),
                                    );
                                }
                                if need <= avail {
                                    bad(
                                        &mut report,
                                        n,
                                        format!("shrink for a job needing {need} that already fits"),
                                    );
                                }
                            }
                            None => bad(&mut report, n, "shrink without an enabled queued job".into()),
                        }
                        if f.get("boosted") != Some(&"1") {
                            bad(&mut report, n, "shrink did not boost the enabled job".into());
                        }
                    }
                    ("shrink", "PreferredMatch") => report.shrinks += 1,
                    ("shrink", r) => bad(&mut report, n, format!("shrink with reason {r}")),
                    ("expand", r) => {
                        if r == "WideOptExpand" {
                            report.wide_expands += 1;
                            if queued > 0 && fits {
                                bad(&mut report, n, "wide expansion while a queued job fits".into());
                            }
                        }
                        if let Some(t) = target {
                            if t.saturating_sub(current) > free {
                                bad(&mut report, n, format!("expansion to {t} exceeds {free} free nodes"));
                            }
                        }
                    }
                    _ => {}
                }
            }
            "start" | "resized" => {
                let (Some(id), Some(size)) = (num::<u32>(&f, "job"), num::<u32>(&f, "size").or(num(&f, "to"))) else {
                    continue;
                };
                if let Some(j) = bounds.get(&JobId(id)) {
                    if j.flexible && (size < j.min_procs || size > j.max_procs) {
                        bad(
                            &mut report,
                            n,
                            format!("job {id} at {size} outside [{}, {}]", j.min_procs, j.max_procs),
                        );
                    }
                }
            }
            _ => {
                let (Some(free), Some(alloc)) = (num::<u32>(&f, "free"), num::<u32>(&f, "alloc")) else {
                    continue;
                };
                report.events += 1;
                if let Some(t) = total {
                    if free + alloc != t {
                        bad(&mut report, n, format!("free {free} + allocated {alloc} != {t}"));
                    }
                }
                if kind == "ResizerTimeout" && last_alloc.is_some_and(|a| a != alloc) {
                    bad(&mut report, n, "cancelled resizer changed allocations".into());
                }
                last_alloc = Some(alloc);
            }
        }
    }
    if total.is_none() {
        report.violations.push("trace has no header".into());
    }
    report
}
