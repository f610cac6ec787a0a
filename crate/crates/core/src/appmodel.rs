//! Application performance models and reconfiguration cost model.

use std::fmt;
use std::str::FromStr;

use crate::error::ModelError;

/// The four application classes of the workloads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AppKind {
    /// Flexible Sleep: synthetic, perfectly scalable.
    Fs,
    Cg,
    Jacobi,
    Nbody,
}

impl AppKind {
    pub const ALL: [AppKind; 4] = [AppKind::Fs, AppKind::Cg, AppKind::Jacobi, AppKind::Nbody];

    pub fn name(self) -> &'static str {
        match self {
            AppKind::Fs => "FS",
            AppKind::Cg => "CG",
            AppKind::Jacobi => "Jacobi",
            AppKind::Nbody => "Nbody",
        }
    }
}

impl fmt::Display for AppKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AppKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "FS" => Ok(AppKind::Fs),
            "CG" => Ok(AppKind::Cg),
            "Jacobi" => Ok(AppKind::Jacobi),
            "Nbody" | "N-body" => Ok(AppKind::Nbody),
            other => Err(format!("unknown application `{other}`")),
        }
    }
}

/// Speedup curve relative to a single process.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Speedup {
    /// `speedup(p) = p`
    Linear,
    /// Amdahl's law: `speedup(p) = 1 / ((1 - f) + f / p)` with parallel fraction `f`.
    Amdahl { parallel_fraction: f64 },
}

impl Speedup {
    pub fn at(&self, procs: u32) -> f64 {
        let p = f64::from(procs);
        match *self {
            Speedup::Linear => p,
            Speedup::Amdahl { parallel_fraction } => 1.0 / ((1.0 - parallel_fraction) + parallel_fraction / p),
        }
    }
}

impl fmt::Display for Speedup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Speedup::Linear => f.write_str("linear"),
            Speedup::Amdahl { parallel_fraction } => write!(f, "amdahl:{parallel_fraction}"),
        }
    }
}

impl FromStr for Speedup {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "linear" {
            return Ok(Speedup::Linear);
        }
        let frac = s
            .strip_prefix("amdahl:")
            .ok_or_else(|| format!("expected `linear` or `amdahl:<fraction>`, got `{s}`"))?;
        let parallel_fraction: f64 = frac
            .parse()
            .map_err(|_| format!("invalid parallel fraction `{frac}`"))?;
        if !(0.0..=1.0).contains(&parallel_fraction) {
            return Err(format!("parallel fraction {parallel_fraction} outside [0, 1]"));
        }
        Ok(Speedup::Amdahl { parallel_fraction })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AppModel {
    pub kind: AppKind,
    pub speedup: Speedup,
    pub min_procs: u32,
    pub max_procs: u32,
    pub preferred_procs: Option<u32>,
    pub iterations: u32,
    /// Minimum simulated seconds between forwarded checks, if any.
    pub inhibitor_period: Option<f64>,
}

impl AppModel {
    /// Default configuration of each application class.
    pub fn defaults(kind: AppKind) -> Self {
        match kind {
            AppKind::Fs => AppModel {
                kind,
                speedup: Speedup::Linear,
                min_procs: 1,
                max_procs: 20,
                preferred_procs: None,
                iterations: 25,
                inhibitor_period: None,
            },
            AppKind::Cg | AppKind::Jacobi => AppModel {
                kind,
                speedup: Speedup::Amdahl { parallel_fraction: 0.5 },
                min_procs: 2,
                max_procs: 32,
                preferred_procs: Some(8),
                iterations: 10_000,
                inhibitor_period: Some(15.0),
            },
            AppKind::Nbody => AppModel {
                kind,
                speedup: Speedup::Amdahl {
                    parallel_fraction: 0.08,
                },
                min_procs: 1,
                max_procs: 16,
                preferred_procs: Some(1),
                iterations: 25,
                inhibitor_period: None,
            },
        }
    }

    pub fn with_bounds(&self, min_procs: u32, max_procs: u32) -> Self {
        AppModel {
            min_procs,
            max_procs,
            ..self.clone()
        }
    }
}

/// Per-application models used by a scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct AppCatalog {
    models: [AppModel; 4],
}

impl Default for AppCatalog {
    fn default() -> Self {
        AppCatalog {
            models: AppKind::ALL.map(AppModel::defaults),
        }
    }
}

impl AppCatalog {
    fn index(kind: AppKind) -> usize {
        AppKind::ALL.iter().position(|k| *k == kind).unwrap()
    }

    pub fn get(&self, kind: AppKind) -> &AppModel {
        &self.models[Self::index(kind)]
    }

    pub fn get_mut(&mut self, kind: AppKind) -> &mut AppModel {
        &mut self.models[Self::index(kind)]
    }

    pub fn iter(&self) -> impl Iterator<Item = &AppModel> {
        self.models.iter()
    }

    pub fn set_inhibitor_period(&mut self, period: Option<f64>) {
        for m in &mut self.models {
            m.inhibitor_period = period;
        }
    }
}

/// Step duration at `procs` processes given the duration at `initial_size`.
pub fn step_time(app: &AppModel, base_step_time: f64, initial_size: u32, procs: u32) -> Result<f64, ModelError> {
    if procs < app.min_procs || procs > app.max_procs {
        return Err(ModelError::OutOfDomain {
            procs,
            min: app.min_procs,
            max: app.max_procs,
        });
    }
    if procs == initial_size {
        return Ok(base_step_time);
    }
    Ok(base_step_time * app.speedup.at(initial_size) / app.speedup.at(procs))
}

/// Constants of the reconfiguration cost model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostModelParams {
    /// Bytes per second moved by each transferring process pair.
    pub bandwidth: f64,
    pub shrink_sync_base: f64,
    /// Seconds per unit of `p_old / p_new` on shrinks.
    pub shrink_sync_per_ratio: f64,
    pub sched_base: f64,
    pub sched_per_node: f64,
}

impl Default for CostModelParams {
    fn default() -> Self {
        CostModelParams {
            bandwidth: 1.0e9,
            shrink_sync_base: 0.1,
            shrink_sync_per_ratio: 0.0005,
            sched_base: 0.0094,
            sched_per_node: 0.001,
        }
    }
}

impl CostModelParams {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("bandwidth", self.bandwidth),
            ("shrink_sync_base", self.shrink_sync_base),
            ("shrink_sync_per_ratio", self.shrink_sync_per_ratio),
            ("sched_base", self.sched_base),
            ("sched_per_node", self.sched_per_node),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(format!("{name} must be a non-negative number"));
            }
        }
        if self.bandwidth == 0.0 {
            return Err("bandwidth must be positive".into());
        }
        Ok(())
    }
}

/// Seconds spent redistributing `volume` bytes from `p_old` to `p_new`
/// processes, including the shrink acknowledgement barrier.
pub fn resize_cost(volume: u64, p_old: u32, p_new: u32, params: &CostModelParams) -> f64 {
    debug_assert!(p_old >= 1 && p_new >= 1);
    let movers = f64::from(p_old.min(p_new));
    let transfer = volume as f64 / (movers * params.bandwidth);
    let sync = if p_new < p_old {
        params.shrink_sync_base + params.shrink_sync_per_ratio * (f64::from(p_old) / f64::from(p_new))
    } else {
        0.0
    };
    transfer + sync
}

/// Time for the resource manager to reach a decision involving `p_involved` nodes.
pub fn scheduling_overhead(p_involved: u32, params: &CostModelParams) -> f64 {
    params.sched_base + params.sched_per_node * f64::from(p_involved)
}
