//! Finite-horizon dynamic programming on the augmented state `(s, lambda)`,
//! where `lambda` is the remaining goal: the target level minus the rewards
//! collected so far.
//!
//! Remaining goals live on an integer grid in units of the model's reward
//! resolution. `V_t(s, lambda)` is the probability that the rewards of stages
//! `t..T` sum to at most `lambda`, with terminal value `V_T = I{0 <= lambda}`.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Result, VarMdpError};
use crate::mdp::{FiniteMdp, ProbabilityLevel, Resolution, Sense};

/// Ties within this slack go to the lowest action index in optimal backups.
pub const BACKUP_TIE_TOL: f64 = 1e-12;

/// Default cap on branches expanded by [`trajectory_oracle`].
pub const DEFAULT_TRAJECTORY_CAP: u128 = 10_000_000;

/// Remaining-goal grid for horizon `T`.
///
/// Stage `t` covers `[lo0 - t*r_max, hi0 - t*r_min]`, which contains
/// `lambda - r(s, a)` for every `lambda` of stage `t - 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LambdaGrid {
    resolution: Resolution,
    horizon: usize,
    r_min: i64,
    r_max: i64,
    lambda0_lo: i64,
    lambda0_hi: i64,
}

impl LambdaGrid {
    /// Grid serving every initial target in `lambda0` (in resolution units);
    /// `None` means the full range `[T*r_min, T*r_max]`.
    pub fn build(mdp: &FiniteMdp, horizon: usize, lambda0: Option<(i64, i64)>) -> Result<Self> {
        let resolution = mdp.resolution().ok_or(VarMdpError::MissingResolution)?;
        let units = mdp.reward_units()?;
        if horizon == 0 {
            return Err(VarMdpError::Malformed("horizon must be at least 1".into()));
        }
        let r_min = *units
            .iter()
            .min()
            .ok_or_else(|| VarMdpError::Malformed("model has no pairs".into()))?;
        let r_max = *units.iter().max().unwrap();
        let t = horizon as i64;
        let (lambda0_lo, lambda0_hi) = lambda0.unwrap_or((t * r_min, t * r_max));
        if lambda0_lo > lambda0_hi {
            return Err(VarMdpError::Malformed(format!(
                "empty initial target range [{lambda0_lo}, {lambda0_hi}]"
            )));
        }
        Ok(Self {
            resolution,
            horizon,
            r_min,
            r_max,
            lambda0_lo,
            lambda0_hi,
        })
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Smallest and largest reward, in units.
    pub fn reward_range(&self) -> (i64, i64) {
        (self.r_min, self.r_max)
    }

    pub fn lambda0_range(&self) -> (i64, i64) {
        (self.lambda0_lo, self.lambda0_hi)
    }

    /// Inclusive remaining-goal range of stage `t`.
    pub fn stage_range(&self, t: usize) -> (i64, i64) {
        let t = t as i64;
        (
            self.lambda0_lo - t * self.r_max,
            self.lambda0_hi - t * self.r_min,
        )
    }

    pub fn stage_width(&self, t: usize) -> usize {
        let (lo, hi) = self.stage_range(t);
        (hi - lo + 1) as usize
    }

    /// Inclusive union of all stage ranges.
    pub fn span(&self) -> (i64, i64) {
        (0..=self.horizon)
            .map(|t| self.stage_range(t))
            .fold((i64::MAX, i64::MIN), |(a, b), (lo, hi)| {
                (a.min(lo), b.max(hi))
            })
    }

    pub fn to_units(&self, value: f64) -> Option<i64> {
        self.resolution.to_units(value)
    }

    pub fn value(&self, units: i64) -> f64 {
        self.resolution.from_units(units)
    }

    /// Smallest and largest total reward of stages `t..T`, in units.
    pub fn remaining_sum_range(&self, t: usize) -> (i64, i64) {
        let left = (self.horizon - t) as i64;
        (left * self.r_min, left * self.r_max)
    }
}

/// Builds the remaining-goal grid; see [`LambdaGrid::build`].
pub fn build_grid(
    mdp: &FiniteMdp,
    horizon: usize,
    lambda0: Option<(i64, i64)>,
) -> Result<LambdaGrid> {
    LambdaGrid::build(mdp, horizon, lambda0)
}

/// `V_t(s, lambda)` for one stage, state-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTable {
    pub stage: usize,
    pub lo: i64,
    pub width: usize,
    pub num_states: usize,
    pub values: Vec<f64>,
}

impl StageTable {
    /// The terminal table `I{0 <= lambda}`.
    pub fn terminal(grid: &LambdaGrid, num_states: usize) -> Self {
        let t = grid.horizon();
        let (lo, _) = grid.stage_range(t);
        let width = grid.stage_width(t);
        let row: Vec<f64> = (0..width)
            .map(|i| if lo + i as i64 >= 0 { 1.0 } else { 0.0 })
            .collect();
        Self {
            stage: t,
            lo,
            width,
            num_states,
            values: row.repeat(num_states),
        }
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.width as i64 - 1
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.width..(s + 1) * self.width]
    }

    /// Value at grid point `lambda`, if it lies on this stage's range.
    pub fn get(&self, s: usize, lambda: i64) -> Option<f64> {
        if lambda < self.lo || lambda > self.hi() {
            return None;
        }
        Some(self.values[s * self.width + (lambda - self.lo) as usize])
    }
}

/// `V_t` for every stage `0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub grid: LambdaGrid,
    pub stages: Vec<StageTable>,
}

impl ValueTable {
    pub fn stage(&self, t: usize) -> &StageTable {
        &self.stages[t]
    }

    /// `V_0(s0, lambda0)`; off the grid the value is pinned when the target
    /// lies outside `[T*r_min, T*r_max)`.
    pub fn initial_value(&self, s0: usize, lambda0: i64) -> Option<f64> {
        if let Some(v) = self.stages[0].get(s0, lambda0) {
            return Some(v);
        }
        let (lo, hi) = self.grid.remaining_sum_range(0);
        if lambda0 < lo {
            Some(0.0)
        } else if lambda0 >= hi {
            Some(1.0)
        } else {
            None
        }
    }
}

/// Decision rule `u_t(s, lambda)` for one stage, state-major, as action indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageRule {
    pub stage: usize,
    pub lo: i64,
    pub width: usize,
    pub actions: Vec<usize>,
}

impl StageRule {
    pub fn get(&self, s: usize, lambda: i64) -> Option<usize> {
        if lambda < self.lo || lambda >= self.lo + self.width as i64 {
            return None;
        }
        Some(self.actions[s * self.width + (lambda - self.lo) as usize])
    }
}

/// Deterministic Markov policy on the augmented state, one rule per stage `t < T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedPolicy {
    pub grid: LambdaGrid,
    pub rules: Vec<StageRule>,
}

impl AugmentedPolicy {
    /// Builds `u_t(s, lambda) = f(t, s, lambda)` over the whole grid.
    pub fn from_fn(
        mdp: &FiniteMdp,
        grid: &LambdaGrid,
        mut f: impl FnMut(usize, usize, i64) -> usize,
    ) -> Result<Self> {
        let n = mdp.num_states();
        let mut rules = Vec::with_capacity(grid.horizon());
        for t in 0..grid.horizon() {
            let (lo, _) = grid.stage_range(t);
            let width = grid.stage_width(t);
            let mut actions = Vec::with_capacity(n * width);
            for s in 0..n {
                for i in 0..width {
                    let a = f(t, s, lo + i as i64);
                    if mdp.pair_index(s, a).is_none() {
                        return Err(VarMdpError::InadmissiblePolicy(format!(
                            "action {a} in state {s} at stage {t}"
                        )));
                    }
                    actions.push(a);
                }
            }
            rules.push(StageRule {
                stage: t,
                lo,
                width,
                actions,
            });
        }
        Ok(Self {
            grid: grid.clone(),
            rules,
        })
    }

    /// Lowest admissible action everywhere.
    pub fn lowest(mdp: &FiniteMdp, grid: &LambdaGrid) -> Result<Self> {
        Self::from_fn(mdp, grid, |_, s, _| mdp.actions(s)[0])
    }

    pub fn action(&self, t: usize, s: usize, lambda: i64) -> Option<usize> {
        self.rules.get(t)?.get(s, lambda)
    }
}

fn underflow(stage: usize, state: usize, lambda: i64) -> VarMdpError {
    VarMdpError::GridUnderflow {
        stage,
        state,
        lambda,
    }
}

/// Adds `p * next[s'][lambda - r]` over `lambda in [lo, lo + width)` to `acc`.
fn accumulate(
    mdp: &FiniteMdp,
    next: &StageTable,
    k: usize,
    shift_lo: i64,
    width: usize,
    acc: &mut [f64],
) {
    let offset = (shift_lo - next.lo) as usize;
    mdp.row(k).for_each(|t, p| {
        if p != 0.0 {
            let src = &next.row(t)[offset..offset + width];
            for (a, &v) in acc.iter_mut().zip(src) {
                *a += p * v;
            }
        }
    });
}

/// One evaluation backup:
/// `V_t(s, lambda) = sum_{s'} P(s'|s, u_t(s, lambda)) V_{t+1}(s', lambda - r(s, u_t(s, lambda)))`.
pub fn bellman_backup(mdp: &FiniteMdp, next: &StageTable, rule: &StageRule) -> Result<StageTable> {
    let units = mdp.reward_units()?;
    let n = mdp.num_states();
    let t = rule.stage;
    let mut values = vec![0.0; n * rule.width];
    for s in 0..n {
        for i in 0..rule.width {
            let lambda = rule.lo + i as i64;
            let a = rule.actions[s * rule.width + i];
            let k = mdp.pair_index(s, a).ok_or_else(|| {
                VarMdpError::InadmissiblePolicy(format!("action {a} in state {s} at stage {t}"))
            })?;
            let shifted = lambda - units[k];
            if shifted < next.lo || shifted > next.hi() {
                return Err(underflow(t, s, shifted));
            }
            let mut cell = [0.0];
            accumulate(mdp, next, k, shifted, 1, &mut cell);
            values[s * rule.width + i] = cell[0];
        }
    }
    Ok(StageTable {
        stage: t,
        lo: rule.lo,
        width: rule.width,
        num_states: n,
        values,
    })
}

/// One optimality backup on the range `[lo, lo + width)` of stage `t`,
/// recording the optimizing action (lowest index on ties).
pub fn bellman_optimal_backup(
    mdp: &FiniteMdp,
    next: &StageTable,
    stage: usize,
    lo: i64,
    width: usize,
    sense: Sense,
) -> Result<(StageTable, StageRule)> {
    let units = mdp.reward_units()?;
    let n = mdp.num_states();
    let mut values = vec![0.0; n * width];
    let mut actions = vec![0usize; n * width];
    let mut q = vec![0.0; width];
    for s in 0..n {
        let best = &mut values[s * width..(s + 1) * width];
        let chosen = &mut actions[s * width..(s + 1) * width];
        for (j, k) in mdp.pairs(s).enumerate() {
            let shift_lo = lo - units[k];
            let shift_hi = shift_lo + width as i64 - 1;
            if shift_lo < next.lo {
                return Err(underflow(stage, s, shift_lo));
            }
            if shift_hi > next.hi() {
                return Err(underflow(stage, s, shift_hi));
            }
            q.iter_mut().for_each(|x| *x = 0.0);
            accumulate(mdp, next, k, shift_lo, width, &mut q);
            let a = mdp.pair_action(k);
            for i in 0..width {
                if j == 0 || sense.improves(q[i], best[i], BACKUP_TIE_TOL) {
                    best[i] = q[i];
                    chosen[i] = a;
                }
            }
        }
    }
    Ok((
        StageTable {
            stage,
            lo,
            width,
            num_states: n,
            values,
        },
        StageRule {
            stage,
            lo,
            width,
            actions,
        },
    ))
}

/// Sets `V_t` to exactly 1 at or above the largest remaining sum and exactly 0
/// below the smallest, and clamps the rest to `[0, 1]` against rounding.
fn pin(grid: &LambdaGrid, table: &mut StageTable) {
    let (min_sum, max_sum) = grid.remaining_sum_range(table.stage);
    let width = table.width;
    for (i, v) in table.values.iter_mut().enumerate() {
        let lambda = table.lo + (i % width) as i64;
        *v = if lambda >= max_sum {
            1.0
        } else if lambda < min_sum {
            0.0
        } else {
            v.clamp(0.0, 1.0)
        };
    }
}

/// `V^u_t` for every stage by backward evaluation backups.
pub fn evaluate_augmented(mdp: &FiniteMdp, policy: &AugmentedPolicy) -> Result<ValueTable> {
    let grid = &policy.grid;
    let mut stages = vec![StageTable::terminal(grid, mdp.num_states())];
    for rule in policy.rules.iter().rev() {
        let mut v = bellman_backup(mdp, stages.last().unwrap(), rule)?;
        pin(grid, &mut v);
        stages.push(v);
    }
    stages.reverse();
    Ok(ValueTable {
        grid: grid.clone(),
        stages,
    })
}

/// Optimal `V*_t` for every stage and an optimal augmented policy; the inner
/// probabilities are minimized (`Sense::Min`) or maximized (`Sense::Max`).
pub fn solve_augmented(
    mdp: &FiniteMdp,
    grid: &LambdaGrid,
    sense: Sense,
) -> Result<(ValueTable, AugmentedPolicy)> {
    let mut stages = vec![StageTable::terminal(grid, mdp.num_states())];
    let mut rules = Vec::with_capacity(grid.horizon());
    for t in (0..grid.horizon()).rev() {
        let (lo, _) = grid.stage_range(t);
        let (mut v, rule) = bellman_optimal_backup(
            mdp,
            stages.last().unwrap(),
            t,
            lo,
            grid.stage_width(t),
            sense,
        )?;
        pin(grid, &mut v);
        stages.push(v);
        rules.push(rule);
    }
    stages.reverse();
    rules.reverse();
    Ok((
        ValueTable {
            grid: grid.clone(),
            stages,
        },
        AugmentedPolicy {
            grid: grid.clone(),
            rules,
        },
    ))
}

/// History-dependent policy obtained by tracking the remaining goal:
/// at history `(s_0, a_0, .., s_t)` it plays `u_t(s_t, lambda0 - sum_{tau<t} r(s_tau, a_tau))`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryPolicy {
    pub base: Arc<AugmentedPolicy>,
    /// Initial target in resolution units.
    pub lambda0: i64,
}

impl HistoryPolicy {
    pub fn horizon(&self) -> usize {
        self.base.grid.horizon()
    }

    pub fn lambda0_value(&self) -> f64 {
        self.base.grid.value(self.lambda0)
    }

    /// Action at stage `t` in state `s` after collecting `collected` units of reward.
    pub fn action(&self, t: usize, s: usize, collected: i64) -> Result<usize> {
        let goal = self.lambda0 - collected;
        self.base
            .action(t, s, goal)
            .ok_or_else(|| underflow(t, s, goal))
    }

    /// Action for the history `states[0], actions[0], .., states[t]`.
    pub fn act_on_history(
        &self,
        mdp: &FiniteMdp,
        states: &[usize],
        actions: &[usize],
    ) -> Result<usize> {
        let t = states.len() - 1;
        let units = mdp.reward_units()?;
        let mut collected = 0;
        for (&s, &a) in states.iter().zip(actions).take(t) {
            let k = mdp.pair_index(s, a).ok_or_else(|| {
                VarMdpError::InadmissiblePolicy(format!("action {a} in state {s}"))
            })?;
            collected += units[k];
        }
        self.action(t, states[t], collected)
    }
}

/// Realizes `policy` as a history-dependent policy for initial target `lambda0` (units).
pub fn realize_history_policy(policy: Arc<AugmentedPolicy>, lambda0: i64) -> HistoryPolicy {
    HistoryPolicy {
        base: policy,
        lambda0,
    }
}

/// Exact distribution of a reward total on the resolution grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    pub resolution: Resolution,
    /// `(total in units, probability)`, ascending and with positive mass.
    pub masses: Vec<(i64, f64)>,
}

impl Pmf {
    fn from_map(resolution: Resolution, map: BTreeMap<i64, f64>) -> Self {
        Self {
            resolution,
            masses: map.into_iter().filter(|&(_, p)| p > 0.0).collect(),
        }
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().map(|m| m.1).sum()
    }

    /// `P(R <= lambda)` for `lambda` in units.
    pub fn cdf(&self, lambda: i64) -> f64 {
        self.masses
            .iter()
            .take_while(|m| m.0 <= lambda)
            .map(|m| m.1)
            .sum()
    }

    /// `min { v : P(R <= v) >= alpha }` in units, scanning the support.
    pub fn var_units(&self, alpha: ProbabilityLevel) -> i64 {
        let target = alpha.get() - crate::steady::CDF_TOL;
        let mut acc = 0.0;
        for &(v, p) in &self.masses {
            acc += p;
            if acc >= target {
                return v;
            }
        }
        self.masses.last().map_or(0, |m| m.0)
    }
}

/// Exact distribution of the accumulated reward of `policy` from `s0` by a
/// forward pass over `(state, collected reward)`.
pub fn history_pmf(mdp: &FiniteMdp, policy: &HistoryPolicy, s0: usize) -> Result<Pmf> {
    let units = mdp.reward_units()?;
    let mut layer: BTreeMap<(usize, i64), f64> = BTreeMap::new();
    layer.insert((s0, 0), 1.0);
    for t in 0..policy.horizon() {
        let mut next: BTreeMap<(usize, i64), f64> = BTreeMap::new();
        for (&(s, collected), &mass) in &layer {
            let a = policy.action(t, s, collected)?;
            let k = mdp.pair_index(s, a).unwrap();
            let c = collected + units[k];
            mdp.row(k).for_each(|s2, p| {
                if p > 0.0 {
                    *next.entry((s2, c)).or_insert(0.0) += mass * p;
                }
            });
        }
        layer = next;
    }
    let mut totals = BTreeMap::new();
    for ((_, c), mass) in layer {
        *totals.entry(c).or_insert(0.0) += mass;
    }
    Ok(Pmf::from_map(policy.base.grid.resolution(), totals))
}

/// Exact distribution of the accumulated reward by expanding every
/// trajectory of `policy` from `s0`.
pub fn trajectory_oracle(
    mdp: &FiniteMdp,
    policy: &HistoryPolicy,
    s0: usize,
    cap: u128,
) -> Result<Pmf> {
    let horizon = policy.horizon();
    let branching = (mdp.num_states() as u128).saturating_mul(mdp.num_actions() as u128);
    let size = (0..horizon)
        .try_fold(1u128, |acc, _| acc.checked_mul(branching))
        .unwrap_or(u128::MAX);
    if size > cap {
        return Err(VarMdpError::CapExceeded { size, cap });
    }
    let units = mdp.reward_units()?;
    let mut totals = BTreeMap::new();

    struct Walk<'a> {
        mdp: &'a FiniteMdp,
        policy: &'a HistoryPolicy,
        units: &'a [i64],
        horizon: usize,
        totals: &'a mut BTreeMap<i64, f64>,
    }
    impl Walk<'_> {
        fn go(&mut self, t: usize, s: usize, collected: i64, prob: f64) -> Result<()> {
            if t == self.horizon {
                *self.totals.entry(collected).or_insert(0.0) += prob;
                return Ok(());
            }
            let a = self.policy.action(t, s, collected)?;
            let k = self.mdp.pair_index(s, a).unwrap();
            let c = collected + self.units[k];
            let row: Vec<(usize, f64)> = self.mdp.row(k).iter().filter(|e| e.1 > 0.0).collect();
            for (s2, p) in row {
                self.go(t + 1, s2, c, prob * p)?;
            }
            Ok(())
        }
    }
    Walk {
        mdp,
        policy,
        units,
        horizon,
        totals: &mut totals,
    }
    .go(0, s0, 0, 1.0)?;
    Ok(Pmf::from_map(policy.base.grid.resolution(), totals))
}

/// Every total reward reachable from `s0` in `T` steps with positive
/// probability under some policy, in units, ascending.
pub fn reachable_sums(mdp: &FiniteMdp, horizon: usize, s0: usize) -> Result<Vec<i64>> {
    let units = mdp.reward_units()?;
    let mut layer: std::collections::BTreeSet<(usize, i64)> = [(s0, 0)].into();
    for _ in 0..horizon {
        let mut next = std::collections::BTreeSet::new();
        for &(s, c) in &layer {
            for k in mdp.pairs(s) {
                mdp.row(k).for_each(|s2, p| {
                    if p > 0.0 {
                        next.insert((s2, c + units[k]));
                    }
                });
            }
        }
        layer = next;
    }
    let mut sums: Vec<i64> = layer.into_iter().map(|(_, c)| c).collect();
    sums.sort_unstable();
    sums.dedup();
    Ok(sums)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::MdpBuilder;

    fn int_mdp(pairs: &[(usize, usize, f64, &[f64])], n: usize, m: usize) -> FiniteMdp {
        let mut b = MdpBuilder::new(n, m).resolution(Resolution::integer());
        for &(s, a, r, row) in pairs {
            b.dense_pair(s, a, r, row);
        }
        b.build().unwrap()
    }

    fn coin() -> FiniteMdp {
        int_mdp(&[(0, 0, 0.0, &[0.5, 0.5]), (1, 0, 1.0, &[0.5, 0.5])], 2, 1)
    }

    #[test]
    fn grid_examples() {
        let mdp = int_mdp(&[(0, 0, 0.0, &[1.0]), (0, 1, 1.0, &[1.0])], 1, 2);
        let grid = build_grid(&mdp, 1, Some((0, 1))).unwrap();
        assert_eq!(grid.span(), (-1, 1));

        let rows: Vec<(usize, usize, f64, &[f64])> =
            (0..6).map(|a| (0, a, a as f64, &[1.0][..])).collect();
        let mdp = int_mdp(&rows, 1, 6);
        let grid = build_grid(&mdp, 3, None).unwrap();
        let (lo, hi) = grid.lambda0_range();
        assert_eq!(hi - lo + 1, 16);

        let mut b = MdpBuilder::new(1, 1);
        b.pair(0, 0, 1.0, [(0, 1.0)]);
        assert!(matches!(
            build_grid(&b.build().unwrap(), 2, None),
            Err(VarMdpError::MissingResolution)
        ));
    }

    #[test]
    fn backup_of_ones_is_ones() {
        let mdp = coin();
        let grid = build_grid(&mdp, 2, None).unwrap();
        let policy = AugmentedPolicy::lowest(&mdp, &grid).unwrap();
        let (lo, _) = grid.stage_range(2);
        let ones = StageTable {
            stage: 2,
            lo,
            width: grid.stage_width(2),
            num_states: 2,
            values: vec![1.0; 2 * grid.stage_width(2)],
        };
        let v = bellman_backup(&mdp, &ones, &policy.rules[1]).unwrap();
        assert!(v.values.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn deterministic_backup_is_a_shift() {
        let mdp = int_mdp(&[(0, 0, 1.0, &[0.0, 1.0]), (1, 0, 1.0, &[1.0, 0.0])], 2, 1);
        let grid = build_grid(&mdp, 3, None).unwrap();
        let table =
            evaluate_augmented(&mdp, &AugmentedPolicy::lowest(&mdp, &grid).unwrap()).unwrap();
        for t in 0..3 {
            let cur = table.stage(t);
            for lambda in cur.lo..=cur.hi() {
                assert_eq!(cur.get(0, lambda), table.stage(t + 1).get(1, lambda - 1));
            }
        }
    }

    #[test]
    fn one_step_optimum_is_extreme_indicator() {
        let mdp = int_mdp(&[(0, 0, 1.0, &[1.0]), (0, 1, 3.0, &[1.0])], 1, 2);
        let grid = build_grid(&mdp, 1, None).unwrap();
        let (min, pmin) = solve_augmented(&mdp, &grid, Sense::Min).unwrap();
        let (max, _) = solve_augmented(&mdp, &grid, Sense::Max).unwrap();
        for lambda in 1..=3 {
            let lo = if lambda >= 3 { 1.0 } else { 0.0 };
            let hi = if lambda >= 1 { 1.0 } else { 0.0 };
            assert_eq!(min.initial_value(0, lambda), Some(lo));
            assert_eq!(max.initial_value(0, lambda), Some(hi));
        }
        // At lambda = 3 both actions give probability one: lowest index wins.
        assert_eq!(pmin.action(0, 0, 3), Some(0));
        assert_eq!(pmin.action(0, 0, 1), Some(1));
    }

    #[test]
    fn zero_continuation_ties_to_lowest_action() {
        let mdp = int_mdp(&[(0, 0, 0.0, &[1.0]), (0, 1, 0.0, &[1.0])], 1, 2);
        let grid = build_grid(&mdp, 1, Some((-3, -1))).unwrap();
        let zeros = StageTable {
            stage: 1,
            lo: grid.stage_range(1).0,
            width: grid.stage_width(1),
            num_states: 1,
            values: vec![0.0; grid.stage_width(1)],
        };
        let (lo, _) = grid.stage_range(0);
        let (v, rule) =
            bellman_optimal_backup(&mdp, &zeros, 0, lo, grid.stage_width(0), Sense::Max).unwrap();
        assert!(v.values.iter().all(|&x| x == 0.0));
        assert!(rule.actions.iter().all(|&a| a == 0));
    }

    #[test]
    fn single_action_solve_equals_evaluation() {
        let mdp = coin();
        let grid = build_grid(&mdp, 3, None).unwrap();
        let eval =
            evaluate_augmented(&mdp, &AugmentedPolicy::lowest(&mdp, &grid).unwrap()).unwrap();
        for sense in [Sense::Min, Sense::Max] {
            assert_eq!(solve_augmented(&mdp, &grid, sense).unwrap().0, eval);
        }
    }

    #[test]
    fn coin_flips_are_binomial() {
        let mdp = int_mdp(&[(0, 0, 0.0, &[0.5, 0.5]), (1, 0, 1.0, &[0.5, 0.5])], 2, 1);
        let grid = build_grid(&mdp, 3, None).unwrap();
        let policy = Arc::new(AugmentedPolicy::lowest(&mdp, &grid).unwrap());
        // Two random rewards after a deterministic first step from state 0.
        let h = realize_history_policy(policy, 0);
        let pmf = trajectory_oracle(&mdp, &h, 0, DEFAULT_TRAJECTORY_CAP).unwrap();
        assert_eq!(pmf.masses, vec![(0, 0.25), (1, 0.5), (2, 0.25)]);
        assert_eq!(history_pmf(&mdp, &h, 0).unwrap(), pmf);
        assert_eq!(pmf.var_units(ProbabilityLevel::new(0.25).unwrap()), 0);
        assert_eq!(pmf.var_units(ProbabilityLevel::new(0.26).unwrap()), 1);
    }

    #[test]
    fn pinned_outside_the_grid() {
        let mdp = coin();
        let grid = build_grid(&mdp, 2, None).unwrap();
        let (table, _) = solve_augmented(&mdp, &grid, Sense::Min).unwrap();
        assert_eq!(table.initial_value(0, -1), Some(0.0));
        assert_eq!(table.initial_value(1, 5), Some(1.0));
        assert_eq!(table.initial_value(0, 2), Some(1.0));
    }

    #[test]
    fn history_policy_tracks_collected_reward() {
        let mdp = int_mdp(
            &[
                (0, 0, 0.0, &[0.0, 1.0]),
                (0, 1, 2.0, &[0.0, 1.0]),
                (1, 0, 0.0, &[1.0, 0.0]),
                (1, 1, 1.0, &[1.0, 0.0]),
            ],
            2,
            2,
        );
        let grid = build_grid(&mdp, 2, None).unwrap();
        let base = Arc::new(
            AugmentedPolicy::from_fn(&mdp, &grid, |_, _, lambda| usize::from(lambda >= 2)).unwrap(),
        );
        let h = realize_history_policy(base.clone(), 2);
        assert_eq!(
            h.act_on_history(&mdp, &[0, 1], &[0]).unwrap(),
            base.action(1, 1, 2).unwrap()
        );
        assert_eq!(
            h.act_on_history(&mdp, &[0, 1], &[1]).unwrap(),
            base.action(1, 1, 0).unwrap()
        );
        assert_ne!(
            h.act_on_history(&mdp, &[0, 1], &[0]).unwrap(),
            h.act_on_history(&mdp, &[0, 1], &[1]).unwrap()
        );
    }

    #[test]
    fn reachable_sums_skip_impossible_totals() {
        let mdp = int_mdp(&[(0, 0, 0.0, &[1.0]), (0, 1, 3.0, &[1.0])], 1, 2);
        assert_eq!(reachable_sums(&mdp, 2, 0).unwrap(), vec![0, 3, 6]);
    }

    #[test]
    fn trajectory_cap_is_enforced() {
        let mdp = coin();
        let grid = build_grid(&mdp, 3, None).unwrap();
        let h = realize_history_policy(Arc::new(AugmentedPolicy::lowest(&mdp, &grid).unwrap()), 0);
        assert!(matches!(
            trajectory_oracle(&mdp, &h, 0, 7),
            Err(VarMdpError::CapExceeded { size: 8, cap: 7 })
        ));
    }
}
