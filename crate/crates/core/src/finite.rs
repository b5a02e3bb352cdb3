//! Finite-horizon VaR of the accumulated reward `R_{0:T} = sum_{t<T} r(s_t, a_t)`:
//! evaluation, policy-iteration type solvers for both senses, the one-pass
//! baselines and optimality certificates.

use std::sync::{Arc, OnceLock};
use std::time::Instant;

use serde::Serialize;

use crate::augmented::{
    history_pmf, reachable_sums, realize_history_policy, solve_augmented, AugmentedPolicy,
    HistoryPolicy, LambdaGrid, ValueTable,
};
use crate::error::{Result, VarMdpError};
use crate::mdp::{FiniteMdp, ProbabilityLevel, Sense};
use crate::steady::{ALPHA_TOL, CDF_TOL};

type Solved = (ValueTable, Arc<AugmentedPolicy>);

/// A model, a horizon and the lazily computed full-grid optimal solves,
/// shared by every solve, baseline and certificate on that model.
#[derive(Debug)]
pub struct FiniteContext<'a> {
    pub mdp: &'a FiniteMdp,
    pub grid: LambdaGrid,
    min: OnceLock<Solved>,
    max: OnceLock<Solved>,
}

impl<'a> FiniteContext<'a> {
    /// Context over the full initial-target range `[T*r_min, T*r_max]`.
    pub fn new(mdp: &'a FiniteMdp, horizon: usize) -> Result<Self> {
        Ok(Self {
            grid: LambdaGrid::build(mdp, horizon, None)?,
            mdp,
            min: OnceLock::new(),
            max: OnceLock::new(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.grid.horizon()
    }

    /// Optimal table and policy for inner sense `sense`, computed once.
    pub fn solved(&self, sense: Sense) -> Result<&Solved> {
        let cell = match sense {
            Sense::Min => &self.min,
            Sense::Max => &self.max,
        };
        if let Some(s) = cell.get() {
            return Ok(s);
        }
        let (table, policy) = solve_augmented(self.mdp, &self.grid, sense)?;
        Ok(cell.get_or_init(|| (table, Arc::new(policy))))
    }

    /// Optimal inner probability `F*(s0, lambda0)` for inner sense `sense`.
    pub fn optimal_probability(&self, sense: Sense, s0: usize, lambda0: i64) -> Result<f64> {
        let (table, _) = self.solved(sense)?;
        table
            .initial_value(s0, lambda0)
            .ok_or(VarMdpError::GridUnderflow {
                stage: 0,
                state: s0,
                lambda: lambda0,
            })
    }

    /// The lowest-action policy realized at `T*r_max`.
    pub fn default_policy(&self) -> Result<HistoryPolicy> {
        let base = AugmentedPolicy::lowest(self.mdp, &self.grid)?;
        Ok(realize_history_policy(
            Arc::new(base),
            self.grid.lambda0_range().1,
        ))
    }

    fn check_state(&self, s0: usize) -> Result<()> {
        if s0 < self.mdp.num_states() {
            Ok(())
        } else {
            Err(VarMdpError::Malformed(format!(
                "initial state {s0} out of range"
            )))
        }
    }
}

/// VaR of `policy`'s accumulated reward from `s0`, in resolution units.
pub fn finite_var_units(
    mdp: &FiniteMdp,
    policy: &HistoryPolicy,
    alpha: ProbabilityLevel,
    s0: usize,
) -> Result<i64> {
    Ok(history_pmf(mdp, policy, s0)?.var_units(alpha))
}

/// VaR of `policy`'s accumulated reward from `s0`.
pub fn finite_var(
    mdp: &FiniteMdp,
    policy: &HistoryPolicy,
    alpha: ProbabilityLevel,
    s0: usize,
) -> Result<f64> {
    let units = finite_var_units(mdp, policy, alpha, s0)?;
    Ok(policy.base.grid.value(units))
}

#[derive(Debug, Clone, Copy)]
pub struct FiniteOptions {
    pub alpha_tol: f64,
    /// Cap on evaluated target levels; `None` means the grid size.
    pub outer_cap: Option<usize>,
}

impl Default for FiniteOptions {
    fn default() -> Self {
        Self {
            alpha_tol: ALPHA_TOL,
            outer_cap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteTraceEntry {
    pub k: usize,
    pub lambda0: f64,
    pub inner_value: f64,
    pub millis: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSolveResult {
    pub sense: Sense,
    pub alpha: f64,
    pub s0: usize,
    pub var_star: f64,
    pub var_units: i64,
    pub policy_star: HistoryPolicy,
    pub initial_policy: HistoryPolicy,
    pub trace: Vec<FiniteTraceEntry>,
    pub certified: bool,
}

impl FiniteSolveResult {
    pub fn improvements(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }
}

fn continues(sense: Sense, inner: f64, alpha: f64, alpha_tol: f64) -> bool {
    match sense {
        Sense::Max => inner < alpha - alpha_tol,
        Sense::Min => inner >= alpha - CDF_TOL,
    }
}

/// Largest reachable total strictly below `var`, or one unit below it.
fn predecessor_in(sums: &[i64], var: i64) -> i64 {
    let below = sums.partition_point(|&x| x < var);
    if below == 0 {
        var - 1
    } else {
        sums[below - 1]
    }
}

fn target_level(sense: Sense, var: i64, sums: &[i64]) -> i64 {
    match sense {
        Sense::Max => var,
        Sense::Min => predecessor_in(sums, var),
    }
}

/// Maximizes the VaR of the accumulated reward from `s0`.
pub fn solve_finite_max(
    ctx: &FiniteContext<'_>,
    alpha: ProbabilityLevel,
    s0: usize,
    init: Option<&HistoryPolicy>,
    opts: FiniteOptions,
) -> Result<FiniteSolveResult> {
    solve_finite(ctx, alpha, s0, Sense::Max, init, opts)
}

/// Minimizes the VaR of the accumulated reward from `s0`.
pub fn solve_finite_min(
    ctx: &FiniteContext<'_>,
    alpha: ProbabilityLevel,
    s0: usize,
    init: Option<&HistoryPolicy>,
    opts: FiniteOptions,
) -> Result<FiniteSolveResult> {
    solve_finite(ctx, alpha, s0, Sense::Min, init, opts)
}

/// Alternates VaR evaluation of the incumbent with a lookup of the optimal
/// inner probability at the matching target level; dispatches on `sense`.
pub fn solve_finite(
    ctx: &FiniteContext<'_>,
    alpha: ProbabilityLevel,
    s0: usize,
    sense: Sense,
    init: Option<&HistoryPolicy>,
    opts: FiniteOptions,
) -> Result<FiniteSolveResult> {
    ctx.check_state(s0)?;
    let mdp = ctx.mdp;
    let (lo, hi) = ctx.grid.lambda0_range();
    let cap = opts.outer_cap.unwrap_or((hi - lo + 2) as usize);
    let initial = match init {
        Some(u) => u.clone(),
        None => ctx.default_policy()?,
    };
    let sums = match sense {
        Sense::Min => reachable_sums(mdp, ctx.horizon(), s0)?,
        Sense::Max => Vec::new(),
    };

    let mut clock = Instant::now();
    let mut policy = initial.clone();
    let mut var = finite_var_units(mdp, &policy, alpha, s0)?;
    let mut trace = Vec::new();
    loop {
        if trace.len() >= cap {
            return Err(VarMdpError::IterationCapExceeded { cap });
        }
        let lambda = target_level(sense, var, &sums);
        let inner = ctx.optimal_probability(sense.opposite(), s0, lambda)?;
        let go_on = continues(sense, inner, alpha.get(), opts.alpha_tol);
        let next = if go_on {
            let base = ctx.solved(sense.opposite())?.1.clone();
            let u = realize_history_policy(base, lambda);
            let v = finite_var_units(mdp, &u, alpha, s0)?;
            Some((u, v))
        } else {
            None
        };
        trace.push(FiniteTraceEntry {
            k: trace.len(),
            lambda0: ctx.grid.value(lambda),
            inner_value: inner,
            millis: clock.elapsed().as_secs_f64() * 1e3,
        });
        clock = Instant::now();
        let Some((u, v)) = next else {
            return Ok(FiniteSolveResult {
                sense,
                alpha: alpha.get(),
                s0,
                var_star: ctx.grid.value(var),
                var_units: var,
                policy_star: policy,
                initial_policy: initial,
                trace,
                certified: true,
            });
        };
        let improved = match sense {
            Sense::Max => v > var,
            Sense::Min => v < var,
        };
        if !improved {
            return Err(VarMdpError::NonConvergence {
                what: "strict VaR improvement",
                iterations: trace.len(),
            });
        }
        policy = u;
        var = v;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteBaseline {
    pub s0: usize,
    pub var_star: f64,
    pub var_units: i64,
    pub policy_star: HistoryPolicy,
}

/// Reads the optimal VaR for every initial state off one full-grid solve and
/// realizes an optimal history policy for each.
pub fn baseline_finite(
    ctx: &FiniteContext<'_>,
    alpha: ProbabilityLevel,
    sense: Sense,
) -> Result<Vec<FiniteBaseline>> {
    (0..ctx.mdp.num_states())
        .map(|s0| baseline_finite_at(ctx, alpha, sense, s0))
        .collect()
}

/// [`baseline_finite`] for a single initial state.
pub fn baseline_finite_at(
    ctx: &FiniteContext<'_>,
    alpha: ProbabilityLevel,
    sense: Sense,
    s0: usize,
) -> Result<FiniteBaseline> {
    ctx.check_state(s0)?;
    let (table, base) = ctx.solved(sense.opposite())?;
    let (lo, hi) = ctx.grid.lambda0_range();
    let a = alpha.get();
    let reached = |f: f64| match sense {
        Sense::Max => f >= a - ALPHA_TOL,
        Sense::Min => f >= a - CDF_TOL,
    };
    let mut star = hi;
    for lambda in lo..=hi {
        let f = table
            .initial_value(s0, lambda)
            .ok_or(VarMdpError::GridUnderflow {
                stage: 0,
                state: s0,
                lambda,
            })?;
        if reached(f) {
            star = lambda;
            break;
        }
    }
    let realize_at = match sense {
        Sense::Min => star,
        Sense::Max => {
            let sums = reachable_sums(ctx.mdp, ctx.horizon(), s0)?;
            // Below the grid every policy is optimal; any on-grid target will do.
            predecessor_in(&sums, star).max(lo)
        }
    };
    Ok(FiniteBaseline {
        s0,
        var_star: ctx.grid.value(star),
        var_units: star,
        policy_star: realize_history_policy(base.clone(), realize_at),
    })
}

/// Whether `policy` satisfies the optimality certificate for `sense` at `s0`.
pub fn certify_finite(
    ctx: &FiniteContext<'_>,
    policy: &HistoryPolicy,
    alpha: ProbabilityLevel,
    s0: usize,
    sense: Sense,
) -> Result<bool> {
    ctx.check_state(s0)?;
    let var = finite_var_units(ctx.mdp, policy, alpha, s0)?;
    let sums = match sense {
        Sense::Min => reachable_sums(ctx.mdp, ctx.horizon(), s0)?,
        Sense::Max => Vec::new(),
    };
    let lambda = target_level(sense, var, &sums);
    let inner = ctx.optimal_probability(sense.opposite(), s0, lambda)?;
    Ok(!continues(sense, inner, alpha.get(), ALPHA_TOL))
}
