//! Synthetic workload generation and the replayable workload text format.
//!
//! Jobs arrive as a Poisson process, sizes follow a log-uniform law with
//! extra mass on powers of two, and per-step runtimes are two-branch
//! hyperexponential with the short-branch mean growing with job size.
//! Every sampler draws from its own ChaCha stream so that changing one
//! sampler never perturbs the others.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;

use crate::appmodel::{AppCatalog, AppKind};
use crate::error::WorkloadError;
use crate::simcore::{JobId, SimTime};

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadParams {
    pub jobs: u32,
    pub max_job_size: u32,
    pub mean_interarrival: f64,
    /// Upper clamp on a sampled step runtime, in seconds.
    pub max_step_runtime: f64,
    /// Short-branch mean for a zero-size job; scaled by `1 + size / max_job_size`.
    pub step_mean_base: f64,
    pub long_branch_prob: f64,
    /// Long-branch mean as a multiple of the short-branch mean.
    pub long_mean_ratio: f64,
    pub pow2_snap_prob: f64,
    /// Overrides every application's default iteration count.
    pub iterations: Option<u32>,
    pub flexible_ratio: f64,
    pub app_mix: Vec<(AppKind, f64)>,
    pub factor: u32,
    pub data_volume: u64,
    pub seed: u64,
}

impl Default for WorkloadParams {
    fn default() -> Self {
        WorkloadParams {
            jobs: 0,
            max_job_size: 20,
            mean_interarrival: 10.0,
            max_step_runtime: 60.0,
            step_mean_base: 7.5,
            long_branch_prob: 0.3,
            long_mean_ratio: 4.0,
            pow2_snap_prob: 0.3,
            iterations: None,
            flexible_ratio: 1.0,
            app_mix: vec![(AppKind::Fs, 1.0)],
            factor: 2,
            data_volume: 1_000_000_000,
            seed: 1,
        }
    }
}

impl WorkloadParams {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: &str| Err(WorkloadError::InvalidParams(m.to_string()));
        if self.max_job_size < 1 {
            return bad("max_job_size must be at least 1");
        }
        if !self.mean_interarrival.is_finite() || self.mean_interarrival <= 0.0 {
            return bad("mean_interarrival must be positive");
        }
        if !(self.max_step_runtime.is_finite() && self.max_step_runtime > 0.0)
            || !(self.step_mean_base.is_finite() && self.step_mean_base > 0.0)
        {
            return bad("step runtimes must be positive");
        }
        if !(0.0..=1.0).contains(&self.long_branch_prob) || !(0.0..=1.0).contains(&self.pow2_snap_prob) {
            return bad("probabilities must lie in [0, 1]");
        }
        if self.long_mean_ratio.is_nan() || self.long_mean_ratio <= 0.0 {
            return bad("long_mean_ratio must be positive");
        }
        if !(0.0..=1.0).contains(&self.flexible_ratio) {
            return bad("flexible_ratio must lie in [0, 1]");
        }
        if self.factor < 2 {
            return bad("factor must be at least 2");
        }
        if self.iterations == Some(0) {
            return bad("iterations must be at least 1");
        }
        if self.app_mix.is_empty() || self.app_mix.iter().any(|(_, w)| w.is_nan() || *w < 0.0) {
            return bad("app_mix needs non-negative weights");
        }
        let total: f64 = self.app_mix.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-6 {
            return bad("app_mix weights must sum to 1");
        }
        Ok(())
    }
}

/// Static submission data of one job.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JobDescriptor {
    pub id: JobId,
    pub arrival: SimTime,
    pub initial_size: u32,
    pub min_procs: u32,
    pub max_procs: u32,
    pub preferred_procs: Option<u32>,
    pub factor: u32,
    pub flexible: bool,
    pub app: AppKind,
    pub iterations: u32,
    /// Duration of one step at `initial_size`.
    pub base_step_time: SimTime,
    /// Bytes redistributed on every reconfiguration.
    pub data_volume: u64,
}

impl JobDescriptor {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.min_procs <= self.initial_size && self.initial_size <= self.max_procs) {
            return Err(format!(
                "job {}: initial size {} outside [{}, {}]",
                self.id, self.initial_size, self.min_procs, self.max_procs
            ));
        }
        if self.min_procs < 1 {
            return Err(format!("job {}: min_procs must be at least 1", self.id));
        }
        if let Some(p) = self.preferred_procs {
            if p < self.min_procs || p > self.max_procs {
                return Err(format!(
                    "job {}: preferred {} outside [{}, {}]",
                    self.id, p, self.min_procs, self.max_procs
                ));
            }
        }
        if self.factor < 2 {
            return Err(format!("job {}: factor must be at least 2", self.id));
        }
        if self.iterations < 1 {
            return Err(format!("job {}: needs at least one iteration", self.id));
        }
        if self.base_step_time == SimTime::ZERO {
            return Err(format!("job {}: step time must be positive", self.id));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
enum Stream {
    Arrivals = 0,
    Sizes = 1,
    Runtimes = 2,
    Tagging = 3,
    Apps = 4,
}

fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Log-uniform node count in `[1, max_job_size]`, snapped to the nearest
/// power of two with probability `snap_prob`.
pub fn sample_job_size<R: Rng + ?Sized>(max_job_size: u32, snap_prob: f64, rng: &mut R) -> u32 {
    debug_assert!(max_job_size >= 1);
    let upper = f64::from(max_job_size).log2();
    let x: f64 = rng.random::<f64>() * upper;
    let size = (x.exp2().round() as u32).clamp(1, max_job_size);
    if rng.random::<f64>() < snap_prob {
        nearest_power_of_two(size, max_job_size)
    } else {
        size
    }
}

fn nearest_power_of_two(n: u32, max: u32) -> u32 {
    let lower = 1u32 << (31 - n.leading_zeros());
    let upper = lower << 1;
    if upper <= max && upper - n < n - lower {
        upper
    } else {
        lower
    }
}

/// Parameters of the size-correlated hyperexponential step runtime.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RuntimeModel {
    pub step_mean_base: f64,
    pub long_branch_prob: f64,
    pub long_mean_ratio: f64,
    pub max_job_size: u32,
    pub max_step_runtime: f64,
}

impl From<&WorkloadParams> for RuntimeModel {
    fn from(p: &WorkloadParams) -> Self {
        RuntimeModel {
            step_mean_base: p.step_mean_base,
            long_branch_prob: p.long_branch_prob,
            long_mean_ratio: p.long_mean_ratio,
            max_job_size: p.max_job_size,
            max_step_runtime: p.max_step_runtime,
        }
    }
}

impl RuntimeModel {
    pub fn short_mean(&self, size: u32) -> f64 {
        self.step_mean_base * (1.0 + f64::from(size) / f64::from(self.max_job_size))
    }
}

/// Step runtime in seconds, in `(0, max_step_runtime]`.
pub fn sample_step_runtime<R: Rng + ?Sized>(size: u32, model: &RuntimeModel, rng: &mut R) -> f64 {
    let short = model.short_mean(size);
    let mean = if rng.random::<f64>() < model.long_branch_prob {
        short * model.long_mean_ratio
    } else {
        short
    };
    let exp = Exp::new(1.0 / mean).expect("positive rate");
    let t: f64 = exp.sample(rng);
    t.clamp(1e-6, model.max_step_runtime)
}

/// Generates `params.jobs` descriptors with strictly increasing arrivals.
pub fn generate_workload(params: &WorkloadParams, apps: &AppCatalog) -> Result<Vec<JobDescriptor>, WorkloadError> {
    params.validate()?;
    let mut arrivals = stream_rng(params.seed, Stream::Arrivals);
    let mut sizes = stream_rng(params.seed, Stream::Sizes);
    let mut runtimes = stream_rng(params.seed, Stream::Runtimes);
    let mut tagging = stream_rng(params.seed, Stream::Tagging);
    let mut app_rng = stream_rng(params.seed, Stream::Apps);

    let interarrival =
        Exp::new(1.0 / params.mean_interarrival).map_err(|e| WorkloadError::InvalidParams(e.to_string()))?;
    let weights = WeightedIndex::new(params.app_mix.iter().map(|(_, w)| *w))
        .map_err(|e| WorkloadError::InvalidParams(e.to_string()))?;
    let runtime_model = RuntimeModel::from(params);

    let mut jobs = Vec::with_capacity(params.jobs as usize);
    let mut clock = 0.0f64;
    let mut last = None::<SimTime>;
    for i in 0..params.jobs {
        clock += interarrival.sample(&mut arrivals);
        let mut arrival = SimTime::from_secs_f64(clock);
        if let Some(prev) = last {
            if arrival <= prev {
                arrival = prev + SimTime::from_micros(1);
            }
        }
        last = Some(arrival);

        let sampled_size = sample_job_size(params.max_job_size, params.pow2_snap_prob, &mut sizes);
        let kind = params.app_mix[weights.sample(&mut app_rng)].0;
        let flexible = tagging.random_bool(params.flexible_ratio);
        let model = apps.get(kind);
        let (initial_size, min_procs, max_procs) = match kind {
            AppKind::Fs => {
                let min = model.min_procs.min(params.max_job_size);
                (sampled_size.max(min), min, params.max_job_size)
            }
            // real applications are submitted at their maximum size
            _ => (model.max_procs, model.min_procs, model.max_procs),
        };
        let step = sample_step_runtime(initial_size, &runtime_model, &mut runtimes);
        let job = JobDescriptor {
            id: JobId(i),
            arrival,
            initial_size,
            min_procs,
            max_procs,
            preferred_procs: model.preferred_procs,
            factor: params.factor,
            flexible,
            app: kind,
            iterations: params.iterations.unwrap_or(model.iterations),
            base_step_time: SimTime::from_secs_f64(step).max(SimTime::from_micros(1)),
            data_volume: params.data_volume,
        };
        job.validate().map_err(WorkloadError::InvalidParams)?;
        jobs.push(job);
    }
    Ok(jobs)
}

pub const WORKLOAD_HEADER: &str =
    "# id arrival size min max preferred factor flexible app iterations step_time data_volume";

/// Serializes a workload, one job per line.
pub fn write_workload(jobs: &[JobDescriptor]) -> String {
    let mut out = String::with_capacity(64 * (jobs.len() + 1));
    out.push_str(WORKLOAD_HEADER);
    out.push('\n');
    for j in jobs {
        let preferred = j.preferred_procs.map_or_else(|| "-".to_string(), |p| p.to_string());
        writeln!(
            out,
            "{} {} {} {} {} {} {} {} {} {} {} {}",
            j.id,
            j.arrival,
            j.initial_size,
            j.min_procs,
            j.max_procs,
            preferred,
            j.factor,
            u8::from(j.flexible),
            j.app,
            j.iterations,
            j.base_step_time,
            j.data_volume
        )
        .unwrap();
    }
    out
}

/// Parses the output of [`write_workload`]. Blank lines and `#` comments are ignored.
pub fn parse_workload(text: &str) -> Result<Vec<JobDescriptor>, WorkloadError> {
    let mut jobs = Vec::new();
    let mut ids = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| WorkloadError::Parse { line, message };
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 12 {
            return Err(err(format!("expected 12 fields, found {}", fields.len())));
        }
        let int = |i: usize, name: &str| -> Result<u64, WorkloadError> {
            fields[i]
                .parse::<u64>()
                .map_err(|_| err(format!("invalid {name} `{}`", fields[i])))
        };
        let small = |i: usize, name: &str| -> Result<u32, WorkloadError> {
            u32::try_from(int(i, name)?).map_err(|_| err(format!("{name} out of range")))
        };
        let time = |i: usize| fields[i].parse::<SimTime>().map_err(err);
        let preferred = match fields[5] {
            "-" => None,
            _ => Some(small(5, "preferred")?),
        };
        let flexible = match fields[7] {
            "0" => false,
            "1" => true,
            other => return Err(err(format!("flexible must be 0 or 1, got `{other}`"))),
        };
        let job = JobDescriptor {
            id: JobId(small(0, "id")?),
            arrival: time(1)?,
            initial_size: small(2, "size")?,
            min_procs: small(3, "min")?,
            max_procs: small(4, "max")?,
            preferred_procs: preferred,
            factor: small(6, "factor")?,
            flexible,
            app: fields[8].parse().map_err(err)?,
            iterations: small(9, "iterations")?,
            base_step_time: time(10)?,
            data_volume: int(11, "data_volume")?,
        };
        job.validate().map_err(err)?;
        if !ids.insert(job.id) {
            return Err(err(format!("duplicate job id {}", job.id)));
        }
        jobs.push(job);
    }
    Ok(jobs)
}
