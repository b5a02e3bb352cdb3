//! Steady-state VaR: evaluation, the policy-iteration type solvers for both
//! senses, the level-scan baselines, optimality certificates and a brute-force
//! policy oracle.

use std::time::Instant;

use serde::Serialize;

use crate::average::{solve_average, threshold_mdp, AverageOptions};
use crate::chain::stationary_distribution;
use crate::error::{Result, VarMdpError};
use crate::mdp::{FiniteMdp, ProbabilityLevel, RewardSupport, Sense, StationaryPolicy};

/// Slack on `F* < alpha` style stopping tests.
pub const ALPHA_TOL: f64 = 1e-9;

/// Slack on `F(lambda) >= alpha` when scanning a CDF.
pub const CDF_TOL: f64 = 1e-12;

/// Default cap on policies visited by [`exhaustive_policy_oracle`].
pub const DEFAULT_ORACLE_CAP: u128 = 100_000;

/// Steady-state reward CDF `F^u(lambda)` at every support point of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyCdf {
    pub support: RewardSupport,
    pub cdf: Vec<f64>,
}

impl SteadyCdf {
    /// `min { lambda in support : F(lambda) >= alpha }`.
    pub fn var(&self, alpha: ProbabilityLevel) -> f64 {
        let a = alpha.get() - CDF_TOL;
        let i = self
            .cdf
            .iter()
            .position(|&f| f >= a)
            .unwrap_or(self.cdf.len() - 1);
        self.support.values()[i]
    }

    /// `F(lambda)` for any real `lambda`.
    pub fn at(&self, lambda: f64) -> f64 {
        match self.support.count_le(lambda) {
            0 => 0.0,
            c => self.cdf[c - 1],
        }
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.support
            .values()
            .iter()
            .copied()
            .zip(self.cdf.iter().copied())
    }
}

/// CDF of the steady-state reward under `policy`.
pub fn steady_cdf(mdp: &FiniteMdp, policy: &StationaryPolicy) -> Result<SteadyCdf> {
    let support = RewardSupport::of(mdp);
    cdf_on(mdp, &support, policy)
}

fn cdf_on(
    mdp: &FiniteMdp,
    support: &RewardSupport,
    policy: &StationaryPolicy,
) -> Result<SteadyCdf> {
    let pi = stationary_distribution(mdp, policy)?;
    let mut mass = vec![0.0; support.len()];
    for (k, &p) in pi.prob.iter().enumerate() {
        if p > 0.0 {
            let c = support.count_le(mdp.reward(k));
            mass[c - 1] += p;
        }
    }
    let mut acc = 0.0;
    let cdf = mass
        .into_iter()
        .map(|m| {
            acc += m;
            acc.min(1.0)
        })
        .collect();
    Ok(SteadyCdf {
        support: support.clone(),
        cdf,
    })
}

/// Steady-state VaR of `policy` at level `alpha`.
pub fn steady_var(
    mdp: &FiniteMdp,
    policy: &StationaryPolicy,
    alpha: ProbabilityLevel,
) -> Result<f64> {
    Ok(steady_cdf(mdp, policy)?.var(alpha))
}

/// Solver knobs shared by the steady-state routines.
#[derive(Debug, Clone, Copy)]
pub struct SteadyOptions {
    pub alpha_tol: f64,
    /// Cap on evaluated target levels; `None` means the support size.
    pub outer_cap: Option<usize>,
    pub inner: AverageOptions,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            alpha_tol: ALPHA_TOL,
            outer_cap: None,
            inner: AverageOptions::default(),
        }
    }
}

/// One outer iteration: the target level, the inner optimum and its cost.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub k: usize,
    pub lambda: f64,
    pub inner_value: f64,
    pub inner_iterations: usize,
    pub millis: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadySolveResult {
    pub sense: Sense,
    pub alpha: f64,
    pub var_star: f64,
    pub policy_star: StationaryPolicy,
    pub initial_policy: StationaryPolicy,
    pub trace: Vec<TraceEntry>,
    pub certified: bool,
}

impl SteadySolveResult {
    /// Number of accepted improvement steps.
    pub fn improvements(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }
}

/// True when the inner optimum at the current level licenses another step.
fn continues(sense: Sense, inner: f64, alpha: f64, opts: &SteadyOptions) -> bool {
    match sense {
        Sense::Max => inner < alpha - opts.alpha_tol,
        Sense::Min => inner >= alpha - CDF_TOL,
    }
}

/// Target level for the inner problem given the incumbent's VaR.
fn target_level(sense: Sense, var: f64, support: &RewardSupport) -> f64 {
    match sense {
        Sense::Max => var,
        Sense::Min => support.left_predecessor(var),
    }
}

/// Maximizes steady-state VaR by alternating VaR evaluation with the inner
/// probability-minimization problem at the incumbent's VaR.
pub fn solve_steady_max(
    mdp: &FiniteMdp,
    alpha: ProbabilityLevel,
    init: Option<&StationaryPolicy>,
    opts: SteadyOptions,
) -> Result<SteadySolveResult> {
    solve_steady(mdp, alpha, Sense::Max, init, opts)
}

/// Minimizes steady-state VaR; the inner problem maximizes the probability of
/// falling at or below the left predecessor of the incumbent's VaR.
pub fn solve_steady_min(
    mdp: &FiniteMdp,
    alpha: ProbabilityLevel,
    init: Option<&StationaryPolicy>,
    opts: SteadyOptions,
) -> Result<SteadySolveResult> {
    solve_steady(mdp, alpha, Sense::Min, init, opts)
}

/// Dispatches on `sense`.
pub fn solve_steady(
    mdp: &FiniteMdp,
    alpha: ProbabilityLevel,
    sense: Sense,
    init: Option<&StationaryPolicy>,
    opts: SteadyOptions,
) -> Result<SteadySolveResult> {
    let support = RewardSupport::of(mdp);
    let cap = opts.outer_cap.unwrap_or(support.len());
    let initial = init
        .cloned()
        .unwrap_or_else(|| StationaryPolicy::lowest(mdp));
    initial.check(mdp)?;
    let a = alpha.get();

    let mut clock = Instant::now();
    let mut policy = initial.clone();
    let mut var = cdf_on(mdp, &support, &policy)?.var(alpha);
    let mut trace = Vec::new();
    loop {
        if trace.len() >= cap {
            return Err(VarMdpError::IterationCapExceeded { cap });
        }
        let lambda = target_level(sense, var, &support);
        let inner = solve_average(
            &threshold_mdp(mdp, lambda, sense.opposite()),
            &policy,
            opts.inner,
        )?;
        let go_on = continues(sense, inner.gain, a, &opts);
        let next_var = if go_on {
            Some(cdf_on(mdp, &support, &inner.policy)?.var(alpha))
        } else {
            None
        };
        trace.push(TraceEntry {
            k: trace.len(),
            lambda,
            inner_value: inner.gain,
            inner_iterations: inner.iterations,
            millis: clock.elapsed().as_secs_f64() * 1e3,
        });
        clock = Instant::now();
        let Some(next_var) = next_var else {
            return Ok(SteadySolveResult {
                sense,
                alpha: a,
                var_star: var,
                policy_star: policy,
                initial_policy: initial,
                trace,
                certified: true,
            });
        };
        if sense.improves(next_var, var, 0.0) {
            policy = inner.policy;
            var = next_var;
        } else {
            return Err(VarMdpError::NonConvergence {
                what: "strict VaR improvement",
                iterations: trace.len(),
            });
        }
    }
}

/// Whether `policy` satisfies the optimality certificate for `sense`.
pub fn certify_steady(
    mdp: &FiniteMdp,
    policy: &StationaryPolicy,
    alpha: ProbabilityLevel,
    sense: Sense,
) -> Result<bool> {
    let support = RewardSupport::of(mdp);
    let opts = SteadyOptions::default();
    let var = cdf_on(mdp, &support, policy)?.var(alpha);
    let lambda = target_level(sense, var, &support);
    let inner = solve_average(
        &threshold_mdp(mdp, lambda, sense.opposite()),
        policy,
        opts.inner,
    )?;
    Ok(!continues(sense, inner.gain, alpha.get(), &opts))
}

/// How [`baseline_steady`] walks the support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMode {
    /// Stop at the first level whose inner optimum reaches `alpha`.
    #[default]
    EarlyExit,
    /// Solve the inner problem at every support point.
    FullSweep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub var_star: f64,
    pub policy_star: StationaryPolicy,
    /// `(lambda, inner optimum)` for every solved level, ascending.
    pub levels: Vec<(f64, f64)>,
}

/// Scans the support for the smallest level whose inner optimum reaches
/// `alpha` and extracts an optimal policy from one more inner solve.
pub fn baseline_steady(
    mdp: &FiniteMdp,
    alpha: ProbabilityLevel,
    sense: Sense,
    mode: BaselineMode,
) -> Result<BaselineResult> {
    let support = RewardSupport::of(mdp);
    let opts = SteadyOptions::default();
    let cold = StationaryPolicy::lowest(mdp);
    let a = alpha.get();
    let reached = |f: f64| match sense {
        Sense::Max => f >= a - opts.alpha_tol,
        Sense::Min => f >= a - CDF_TOL,
    };

    let mut levels = Vec::new();
    let mut policies = Vec::new();
    let mut star: Option<usize> = None;
    for (i, &lambda) in support.values().iter().enumerate() {
        let inner = solve_average(
            &threshold_mdp(mdp, lambda, sense.opposite()),
            &cold,
            opts.inner,
        )?;
        levels.push((lambda, inner.gain));
        policies.push(inner.policy);
        if star.is_none() && reached(inner.gain) {
            star = Some(i);
            if mode == BaselineMode::EarlyExit {
                break;
            }
        }
    }
    // The top support point always reaches alpha up to round-off.
    let i = star.unwrap_or(support.len() - 1);
    let var_star = support.values()[i];
    let policy_star = match sense {
        Sense::Min => policies.swap_remove(i),
        Sense::Max if i > 0 => policies.swap_remove(i - 1),
        Sense::Max => {
            let below = support.left_predecessor(var_star);
            solve_average(&threshold_mdp(mdp, below, Sense::Min), &cold, opts.inner)?.policy
        }
    };
    Ok(BaselineResult {
        var_star,
        policy_star,
        levels,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub var_star: f64,
    pub policy_star: StationaryPolicy,
    /// Policies skipped because their chain is multichain or periodic.
    pub skipped: Vec<StationaryPolicy>,
    pub evaluated: usize,
}

/// Number of deterministic stationary policies of `mdp`.
pub fn policy_count(mdp: &FiniteMdp) -> u128 {
    (0..mdp.num_states())
        .map(|s| mdp.actions(s).len() as u128)
        .try_fold(1u128, |acc, m| acc.checked_mul(m))
        .unwrap_or(u128::MAX)
}

/// Evaluates every deterministic stationary policy and returns the best VaR,
/// breaking ties toward the lexicographically smallest action vector.
pub fn exhaustive_policy_oracle(
    mdp: &FiniteMdp,
    alpha: ProbabilityLevel,
    sense: Sense,
    cap: u128,
) -> Result<OracleResult> {
    let count = policy_count(mdp);
    if count > cap {
        return Err(VarMdpError::CapExceeded { size: count, cap });
    }
    let support = RewardSupport::of(mdp);
    let n = mdp.num_states();
    let mut digits = vec![0usize; n];
    let mut best: Option<(f64, StationaryPolicy)> = None;
    let mut skipped = Vec::new();
    let mut evaluated = 0;
    loop {
        let policy = StationaryPolicy::new((0..n).map(|s| mdp.actions(s)[digits[s]]).collect());
        match cdf_on(mdp, &support, &policy) {
            Ok(cdf) => {
                evaluated += 1;
                let v = cdf.var(alpha);
                if best
                    .as_ref()
                    .is_none_or(|(b, _)| sense.improves(v, *b, 0.0))
                {
                    best = Some((v, policy));
                }
            }
            Err(VarMdpError::Multichain { .. } | VarMdpError::Periodic { .. }) => {
                skipped.push(policy)
            }
            Err(e) => return Err(e),
        }
        // Odometer with the last state fastest gives lexicographic order.
        let mut s = n;
        loop {
            if s == 0 {
                let (var_star, policy_star) = best.ok_or_else(|| {
                    VarMdpError::Malformed("no policy induces a unichain aperiodic chain".into())
                })?;
                return Ok(OracleResult {
                    var_star,
                    policy_star,
                    skipped,
                    evaluated,
                });
            }
            s -= 1;
            digits[s] += 1;
            if digits[s] < mdp.actions(s).len() {
                break;
            }
            digits[s] = 0;
        }
    }
}
