//! Expands a manifest into entries and runs them on a worker pool.

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use varmdp::augmented::{
    history_pmf, realize_history_policy, trajectory_oracle, AugmentedPolicy, HistoryPolicy, Pmf,
};
use varmdp::finite::{
    baseline_finite_at, certify_finite, solve_finite, FiniteContext, FiniteOptions,
};
use varmdp::instances::{build_microgrid, gen_random, read_instance, MicrogridSpec, RandomSpec};
use varmdp::steady::{
    baseline_steady, certify_steady, exhaustive_policy_oracle, solve_steady, steady_cdf,
    BaselineMode, SteadyOptions, DEFAULT_ORACLE_CAP,
};
use varmdp::{validate, FiniteMdp, ProbabilityLevel, StationaryPolicy, VarMdpError};

use crate::error::{CliError, CliResult};
use crate::manifest::{InitKind, InstanceSource, RunManifest, SolverKind};

/// Largest trajectory tree the oracle subcommand expands per entry.
const TRAJECTORY_CAP: u128 = 1_000_000;

pub struct Instance {
    /// Generator seed of random instances.
    pub seed: Option<u64>,
    pub mdp: FiniteMdp,
}

pub fn load_instances(m: &RunManifest) -> CliResult<Vec<Instance>> {
    match &m.instance {
        InstanceSource::File { path } => {
            let (mdp, _) = read_instance(path).map_err(|e| match e {
                VarMdpError::Io(io) => {
                    CliError::Manifest(format!("cannot read instance {}: {io}", path.display()))
                }
                other => other.into(),
            })?;
            validate(&mdp).into_result()?;
            Ok(vec![Instance { seed: None, mdp }])
        }
        InstanceSource::Random(spec) => {
            let seeds = m.seeds.clone().unwrap_or_else(|| vec![spec.seed]);
            seeds
                .into_iter()
                .map(|seed| {
                    let mdp = gen_random(&RandomSpec {
                        seed,
                        ..spec.clone()
                    })?;
                    Ok(Instance {
                        seed: Some(seed),
                        mdp,
                    })
                })
                .collect()
        }
        InstanceSource::Microgrid => Ok(vec![Instance {
            seed: None,
            mdp: build_microgrid(&MicrogridSpec::default())?,
        }]),
    }
}

/// One (instance, alpha, s0) combination.
#[derive(Debug, Clone)]
pub struct Job {
    pub id: String,
    pub index: usize,
    pub instance: usize,
    pub alpha: f64,
    pub s0: Option<usize>,
}

/// Entries in stable order: instance, then alpha, then initial state.
pub fn expand(m: &RunManifest, instances: &[Instance]) -> CliResult<Vec<Job>> {
    let mut jobs = Vec::new();
    for (i, inst) in instances.iter().enumerate() {
        let n = inst.mdp.num_states();
        let starts: Vec<Option<usize>> = if m.problem.is_finite() {
            let s0 = m.s0.clone().unwrap_or_else(|| (0..n).collect());
            if let Some(bad) = s0.iter().find(|&&s| s >= n) {
                return Err(CliError::Manifest(format!(
                    "initial state {bad} out of range for {n} states"
                )));
            }
            s0.into_iter().map(Some).collect()
        } else {
            vec![None]
        };
        for &alpha in &m.alpha {
            for &s0 in &starts {
                let index = jobs.len();
                jobs.push(Job {
                    id: format!("e{index:03}"),
                    index,
                    instance: i,
                    alpha,
                    s0,
                });
            }
        }
    }
    Ok(jobs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub lambda_k: f64,
    pub inner_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_iters: Option<usize>,
}

/// Deterministic part of one entry's result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_seed: Option<u64>,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s0: Option<usize>,
    pub var_star: f64,
    pub certified: bool,
    /// Outer levels for iterate, inner solves for baseline, policies for oracle.
    pub iterations: usize,
    /// Stationary policy of steady problems.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<Vec<usize>>,
    /// Initial target at which the optimal augmented policy is realized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_lambda0: Option<f64>,
    pub trace: Vec<TraceRow>,
}

/// Everything one entry produces.
pub struct Outcome {
    pub record: EntryRecord,
    pub initial_cdf: Option<Vec<(f64, f64)>>,
    pub final_cdf: Vec<(f64, f64)>,
    pub millis: f64,
    pub trace_millis: Vec<f64>,
}

/// Shared read-only state of a batch.
pub struct Batch<'a> {
    pub manifest: &'a RunManifest,
    pub instances: &'a [Instance],
    /// Mode of the steady baseline; comparisons time the full sweep.
    pub baseline_mode: BaselineMode,
    contexts: Vec<Option<FiniteContext<'a>>>,
}

impl<'a> Batch<'a> {
    pub fn new(manifest: &'a RunManifest, instances: &'a [Instance]) -> CliResult<Self> {
        let contexts = instances
            .iter()
            .map(|inst| match manifest.horizon {
                Some(t) if manifest.problem.is_finite() => {
                    FiniteContext::new(&inst.mdp, t).map(Some)
                }
                _ => Ok(None),
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            manifest,
            instances,
            baseline_mode: BaselineMode::EarlyExit,
            contexts,
        })
    }

    fn context(&self, job: &Job) -> &FiniteContext<'a> {
        self.contexts[job.instance]
            .as_ref()
            .expect("finite problem has a context")
    }

    fn level(job: &Job) -> CliResult<ProbabilityLevel> {
        Ok(ProbabilityLevel::new(job.alpha)?)
    }

    fn seed(&self, job: &Job) -> u64 {
        self.manifest.seed.wrapping_add(job.index as u64)
    }

    fn record(&self, job: &Job, var_star: f64, certified: bool, iterations: usize) -> EntryRecord {
        EntryRecord {
            id: job.id.clone(),
            instance_seed: self.instances[job.instance].seed,
            alpha: job.alpha,
            s0: job.s0,
            var_star,
            certified,
            iterations,
            policy: None,
            policy_lambda0: None,
            trace: Vec::new(),
        }
    }

    /// Runs `job` with `solver`.
    pub fn run(&self, job: &Job, solver: SolverKind) -> CliResult<Outcome> {
        let start = Instant::now();
        let mut out = if self.manifest.problem.is_finite() {
            self.run_finite(job, solver)?
        } else {
            self.run_steady(job, solver)?
        };
        out.millis = start.elapsed().as_secs_f64() * 1e3;
        Ok(out)
    }

    fn run_steady(&self, job: &Job, solver: SolverKind) -> CliResult<Outcome> {
        let mdp = &self.instances[job.instance].mdp;
        let alpha = Self::level(job)?;
        let sense = self.manifest.problem.sense();
        let cdf = |u: &StationaryPolicy| -> CliResult<Vec<(f64, f64)>> {
            Ok(steady_cdf(mdp, u)?.points().collect())
        };
        let (record, policy, initial_cdf, trace_millis) = match solver {
            SolverKind::Iterate => {
                let init = match self.manifest.init {
                    InitKind::Lowest => StationaryPolicy::lowest(mdp),
                    InitKind::Random => StationaryPolicy::random(
                        mdp,
                        &mut ChaCha8Rng::seed_from_u64(self.seed(job)),
                    ),
                };
                let r = solve_steady(mdp, alpha, sense, Some(&init), SteadyOptions::default())?;
                let mut record = self.record(job, r.var_star, r.certified, r.trace.len());
                record.trace = r
                    .trace
                    .iter()
                    .map(|e| TraceRow {
                        k: e.k,
                        lambda_k: e.lambda,
                        inner_value: e.inner_value,
                        inner_iters: Some(e.inner_iterations),
                    })
                    .collect();
                let millis = r.trace.iter().map(|e| e.millis).collect();
                (record, r.policy_star, Some(cdf(&r.initial_policy)?), millis)
            }
            SolverKind::Baseline => {
                let r = baseline_steady(mdp, alpha, sense, self.baseline_mode)?;
                let certified = certify_steady(mdp, &r.policy_star, alpha, sense)?;
                (
                    self.record(job, r.var_star, certified, r.levels.len()),
                    r.policy_star,
                    None,
                    Vec::new(),
                )
            }
            SolverKind::Oracle => {
                let r = exhaustive_policy_oracle(mdp, alpha, sense, DEFAULT_ORACLE_CAP)?;
                let certified = certify_steady(mdp, &r.policy_star, alpha, sense)?;
                (
                    self.record(job, r.var_star, certified, r.evaluated),
                    r.policy_star,
                    None,
                    Vec::new(),
                )
            }
        };
        let final_cdf = cdf(&policy)?;
        let mut record = record;
        record.policy = Some(policy.into_inner());
        Ok(Outcome {
            record,
            initial_cdf,
            final_cdf,
            millis: 0.0,
            trace_millis,
        })
    }

    fn initial_history_policy(&self, job: &Job) -> CliResult<HistoryPolicy> {
        let ctx = self.context(job);
        match self.manifest.init {
            InitKind::Lowest => Ok(ctx.default_policy()?),
            InitKind::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed(job));
                let mdp = ctx.mdp;
                let base = AugmentedPolicy::from_fn(mdp, &ctx.grid, |_, s, _| {
                    let acts = mdp.actions(s);
                    acts[rand::Rng::random_range(&mut rng, 0..acts.len())]
                })?;
                Ok(realize_history_policy(
                    Arc::new(base),
                    ctx.grid.lambda0_range().1,
                ))
            }
        }
    }

    fn run_finite(&self, job: &Job, solver: SolverKind) -> CliResult<Outcome> {
        let ctx = self.context(job);
        let alpha = Self::level(job)?;
        let sense = self.manifest.problem.sense();
        let s0 = job.s0.expect("finite entries carry an initial state");
        let cdf = |u: &HistoryPolicy| -> CliResult<Vec<(f64, f64)>> {
            Ok(pmf_points(&history_pmf(ctx.mdp, u, s0)?))
        };
        let (mut record, policy, initial_cdf, trace_millis) = match solver {
            SolverKind::Iterate => {
                let init = self.initial_history_policy(job)?;
                let r = solve_finite(ctx, alpha, s0, sense, Some(&init), FiniteOptions::default())?;
                let mut record = self.record(job, r.var_star, r.certified, r.trace.len());
                record.trace = r
                    .trace
                    .iter()
                    .map(|e| TraceRow {
                        k: e.k,
                        lambda_k: e.lambda0,
                        inner_value: e.inner_value,
                        inner_iters: None,
                    })
                    .collect();
                let millis = r.trace.iter().map(|e| e.millis).collect();
                (record, r.policy_star, Some(cdf(&r.initial_policy)?), millis)
            }
            SolverKind::Baseline => {
                let r = baseline_finite_at(ctx, alpha, sense, s0)?;
                let certified = certify_finite(ctx, &r.policy_star, alpha, s0, sense)?;
                let (lo, hi) = ctx.grid.lambda0_range();
                (
                    self.record(job, r.var_star, certified, (hi - lo + 1) as usize),
                    r.policy_star,
                    None,
                    Vec::new(),
                )
            }
            SolverKind::Oracle => unreachable!("rejected by manifest validation"),
        };
        record.policy_lambda0 = Some(policy.lambda0_value());
        Ok(Outcome {
            record,
            initial_cdf,
            final_cdf: cdf(&policy)?,
            millis: 0.0,
            trace_millis,
        })
    }

    /// Largest CDF discrepancy between the forward pass and the trajectory
    /// expansion of the iterate solver's final policy, for finite entries.
    pub fn trajectory_gap(&self, job: &Job) -> CliResult<f64> {
        let ctx = self.context(job);
        let s0 = job.s0.expect("finite entries carry an initial state");
        let r = solve_finite(
            ctx,
            Self::level(job)?,
            s0,
            self.manifest.problem.sense(),
            None,
            FiniteOptions::default(),
        )?;
        let forward = history_pmf(ctx.mdp, &r.policy_star, s0)?;
        let expanded = trajectory_oracle(ctx.mdp, &r.policy_star, s0, TRAJECTORY_CAP)?;
        Ok(forward
            .masses
            .iter()
            .chain(&expanded.masses)
            .map(|&(v, _)| (forward.cdf(v) - expanded.cdf(v)).abs())
            .fold(0.0, f64::max))
    }
}

fn pmf_points(pmf: &Pmf) -> Vec<(f64, f64)> {
    let mut acc = 0.0;
    pmf.masses
        .iter()
        .map(|&(v, p)| {
            acc += p;
            (pmf.resolution.from_units(v), acc)
        })
        .collect()
}

/// Runs every job on a pool of `workers` threads; results keep job order.
pub fn run_all<T: Send>(
    workers: usize,
    jobs: &[Job],
    f: impl Fn(&Job) -> CliResult<T> + Sync,
) -> CliResult<Vec<T>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Failed(format!("cannot start worker pool: {e}")))?;
    pool.install(|| jobs.par_iter().map(&f).collect::<Vec<_>>())
        .into_iter()
        .collect()
}
