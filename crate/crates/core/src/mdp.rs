//! The finite MDP model `<S, A, A(s), P, r>` and the reward-support arithmetic
//! shared by every solver.

use std::fmt;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VarMdpError};

/// Up to this many states transition rows are stored densely.
pub const DENSE_STATE_LIMIT: usize = 1000;

/// Slack allowed on a transition row sum.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Rewards closer than this are one support point when no resolution is declared.
pub const SUPPORT_MERGE_TOL: f64 = 1e-12;

/// Optimization direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Min,
    Max,
}

impl Sense {
    pub fn opposite(self) -> Sense {
        match self {
            Sense::Min => Sense::Max,
            Sense::Max => Sense::Min,
        }
    }

    /// True when `candidate` beats `incumbent` by more than `tol`.
    #[inline]
    pub fn improves(self, candidate: f64, incumbent: f64, tol: f64) -> bool {
        match self {
            Sense::Min => candidate < incumbent - tol,
            Sense::Max => candidate > incumbent + tol,
        }
    }
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Min => "min",
            Sense::Max => "max",
        })
    }
}

/// A VaR confidence level in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct ProbabilityLevel(f64);

impl ProbabilityLevel {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha <= 1.0 {
            Ok(Self(alpha))
        } else {
            Err(VarMdpError::InvalidAlpha(alpha))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

/// A positive rational grid step `numer / denom`.
///
/// Rewards declared on a resolution are stored as integer multiples of the
/// step so that support membership and the remaining-goal grid are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Resolution {
    numer: i64,
    denom: i64,
}

impl Resolution {
    pub fn new(numer: i64, denom: i64) -> Result<Self> {
        if numer <= 0 || denom <= 0 {
            return Err(VarMdpError::Malformed(format!(
                "resolution must be positive, got {numer}/{denom}"
            )));
        }
        let g = gcd(numer, denom);
        Ok(Self {
            numer: numer / g,
            denom: denom / g,
        })
    }

    pub fn integer() -> Self {
        Self { numer: 1, denom: 1 }
    }

    /// Recovers a decimal step such as `0.1` or `0.25` from its float value.
    pub fn from_f64(step: f64) -> Option<Self> {
        if !(step.is_finite() && step > 0.0) {
            return None;
        }
        let mut denom: i64 = 1;
        for _ in 0..=9 {
            let scaled = step * denom as f64;
            let numer = scaled.round();
            if numer >= 1.0 && (numer / denom as f64 - step).abs() <= 1e-12 * step.max(1.0) {
                return Self::new(numer as i64, denom).ok();
            }
            denom *= 10;
        }
        None
    }

    pub fn numer(self) -> i64 {
        self.numer
    }

    pub fn denom(self) -> i64 {
        self.denom
    }

    pub fn step(self) -> f64 {
        self.numer as f64 / self.denom as f64
    }

    /// `value / step` when it is an integer within `1e-9`.
    pub fn to_units(self, value: f64) -> Option<i64> {
        if !value.is_finite() {
            return None;
        }
        let scaled = value * self.denom as f64 / self.numer as f64;
        let rounded = scaled.round();
        if (scaled - rounded).abs() <= 1e-9 && rounded.abs() < 9.0e15 {
            Some(rounded as i64)
        } else {
            None
        }
    }

    /// The correctly rounded float of `units * step`.
    pub fn from_units(self, units: i64) -> f64 {
        (units as i128 * self.numer as i128) as f64 / self.denom as f64
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom == 1 {
            write!(f, "{}", self.numer)
        } else {
            write!(f, "{}/{}", self.numer, self.denom)
        }
    }
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.abs().max(1)
}

#[derive(Debug, Clone, PartialEq)]
enum Row {
    Dense(Box<[f64]>),
    Sparse { index: Box<[u32]>, prob: Box<[f64]> },
}

/// Borrowed view of one transition row `P(. | s, a)`.
#[derive(Debug, Clone, Copy)]
pub struct RowView<'a>(&'a Row);

impl<'a> RowView<'a> {
    /// Nonzero entries `(s', p)` (dense rows also yield explicit zeros).
    pub fn iter(self) -> Box<dyn Iterator<Item = (usize, f64)> + 'a> {
        match self.0 {
            Row::Dense(p) => Box::new(p.iter().copied().enumerate()),
            Row::Sparse { index, prob } => Box::new(
                index
                    .iter()
                    .zip(prob.iter())
                    .map(|(&i, &p)| (i as usize, p)),
            ),
        }
    }

    /// Calls `f(s', p)` for every stored entry; faster than [`RowView::iter`].
    #[inline]
    pub fn for_each(self, mut f: impl FnMut(usize, f64)) {
        match self.0 {
            Row::Dense(p) => {
                for (i, &v) in p.iter().enumerate() {
                    f(i, v)
                }
            }
            Row::Sparse { index, prob } => {
                for (&i, &v) in index.iter().zip(prob.iter()) {
                    f(i as usize, v)
                }
            }
        }
    }

    /// `sum_{s'} P(s'|s,a) * v[s']`.
    #[inline]
    pub fn dot(self, v: &[f64]) -> f64 {
        match self.0 {
            Row::Dense(p) => p.iter().zip(v).map(|(a, b)| a * b).sum(),
            Row::Sparse { index, prob } => index
                .iter()
                .zip(prob.iter())
                .map(|(&i, &p)| p * v[i as usize])
                .sum(),
        }
    }

    pub fn sum(self) -> f64 {
        match self.0 {
            Row::Dense(p) => p.iter().sum(),
            Row::Sparse { prob, .. } => prob.iter().sum(),
        }
    }

    pub fn is_dense(self) -> bool {
        matches!(self.0, Row::Dense(_))
    }

    /// Number of stored entries.
    pub fn len(self) -> usize {
        match self.0 {
            Row::Dense(p) => p.len(),
            Row::Sparse { index, .. } => index.len(),
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }

    pub fn prob(self, next: usize) -> f64 {
        match self.0 {
            Row::Dense(p) => p.get(next).copied().unwrap_or(0.0),
            Row::Sparse { index, prob } => index
                .iter()
                .position(|&i| i as usize == next)
                .map_or(0.0, |k| prob[k]),
        }
    }
}

/// A finite MDP.
///
/// Admissible state-action pairs are numbered consecutively, state by state
/// and in increasing action order; most solver loops work on pair indices.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    num_states: usize,
    num_actions: usize,
    pair_start: Vec<usize>,
    pair_state: Vec<usize>,
    pair_action: Vec<usize>,
    rows: Vec<Row>,
    rewards: Vec<f64>,
    reward_units: Option<Vec<i64>>,
    resolution: Option<Resolution>,
}

impl FiniteMdp {
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_pairs(&self) -> usize {
        self.rewards.len()
    }

    /// Pair indices of state `s`.
    #[inline]
    pub fn pairs(&self, s: usize) -> Range<usize> {
        self.pair_start[s]..self.pair_start[s + 1]
    }

    /// Admissible actions of `s`, ascending.
    #[inline]
    pub fn actions(&self, s: usize) -> &[usize] {
        &self.pair_action[self.pairs(s)]
    }

    #[inline]
    pub fn pair_state(&self, k: usize) -> usize {
        self.pair_state[k]
    }

    #[inline]
    pub fn pair_action(&self, k: usize) -> usize {
        self.pair_action[k]
    }

    pub fn pair_index(&self, s: usize, a: usize) -> Option<usize> {
        if s >= self.num_states {
            return None;
        }
        let range = self.pairs(s);
        self.pair_action[range.clone()]
            .binary_search(&a)
            .ok()
            .map(|i| range.start + i)
    }

    #[inline]
    pub fn row(&self, k: usize) -> RowView<'_> {
        RowView(&self.rows[k])
    }

    #[inline]
    pub fn reward(&self, k: usize) -> f64 {
        self.rewards[k]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn reward_at(&self, s: usize, a: usize) -> Option<f64> {
        self.pair_index(s, a).map(|k| self.rewards[k])
    }

    pub fn resolution(&self) -> Option<Resolution> {
        self.resolution
    }

    /// Rewards as integer multiples of the declared resolution.
    pub fn reward_units(&self) -> Result<&[i64]> {
        self.reward_units
            .as_deref()
            .ok_or(VarMdpError::MissingResolution)
    }

    pub fn has_dense_rows(&self) -> bool {
        self.rows
            .first()
            .is_some_and(|r| matches!(r, Row::Dense(_)))
    }
}

/// Incremental constructor for [`FiniteMdp`].
///
/// Only shape errors that would make the model unrepresentable are rejected
/// here; everything else is left to [`validate`].
#[derive(Debug, Clone)]
pub struct MdpBuilder {
    num_states: usize,
    num_actions: usize,
    resolution: Option<Resolution>,
    pairs: Vec<Vec<(usize, f64, Pending)>>,
    force_sparse: bool,
}

#[derive(Debug, Clone)]
enum Pending {
    Entries(Vec<(usize, f64)>),
    Full(Vec<f64>),
}

impl MdpBuilder {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            resolution: None,
            pairs: vec![Vec::new(); num_states],
            force_sparse: false,
        }
    }

    pub fn resolution(mut self, resolution: Resolution) -> Self {
        self.resolution = Some(resolution);
        self
    }

    pub fn set_resolution(&mut self, resolution: Option<Resolution>) -> &mut Self {
        self.resolution = resolution;
        self
    }

    /// Store rows sparsely even below [`DENSE_STATE_LIMIT`].
    pub fn sparse(mut self) -> Self {
        self.force_sparse = true;
        self
    }

    /// Adds admissible pair `(s, a)` with sparse transition entries `(s', p)`.
    pub fn pair(
        &mut self,
        state: usize,
        action: usize,
        reward: f64,
        row: impl IntoIterator<Item = (usize, f64)>,
    ) -> &mut Self {
        self.push(
            state,
            action,
            reward,
            Pending::Entries(row.into_iter().collect()),
        )
    }

    fn push(&mut self, state: usize, action: usize, reward: f64, row: Pending) -> &mut Self {
        if let Some(list) = self.pairs.get_mut(state) {
            list.push((action, reward, row));
        } else {
            // Recorded so that build() reports it.
            self.pairs
                .push(vec![(action, reward, Pending::Entries(Vec::new()))]);
        }
        self
    }

    /// Adds admissible pair `(s, a)` with a full row over next states.
    pub fn dense_pair(
        &mut self,
        state: usize,
        action: usize,
        reward: f64,
        row: &[f64],
    ) -> &mut Self {
        if row.len() != self.num_states {
            let bad = vec![(self.num_states, f64::NAN)];
            return self.pair(state, action, reward, bad);
        }
        self.push(state, action, reward, Pending::Full(row.to_vec()))
    }

    pub fn build(self) -> Result<FiniteMdp> {
        let n = self.num_states;
        if self.pairs.len() != n {
            return Err(VarMdpError::Malformed(format!(
                "pair declared for a state outside 0..{n}"
            )));
        }
        let dense = n <= DENSE_STATE_LIMIT && !self.force_sparse;
        let mut pair_start = Vec::with_capacity(n + 1);
        let mut pair_state = Vec::new();
        let mut pair_action = Vec::new();
        let mut rows = Vec::new();
        let mut rewards = Vec::new();
        pair_start.push(0);
        for (s, mut list) in self.pairs.into_iter().enumerate() {
            list.sort_by_key(|p| p.0);
            for w in list.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(VarMdpError::Malformed(format!(
                        "action {} declared twice in state {s}",
                        w[0].0
                    )));
                }
            }
            for (a, r, pending) in list {
                let entries = match pending {
                    Pending::Full(p) if dense => {
                        pair_state.push(s);
                        pair_action.push(a);
                        rows.push(Row::Dense(p.into_boxed_slice()));
                        rewards.push(r);
                        continue;
                    }
                    Pending::Full(p) => p.into_iter().enumerate().collect(),
                    Pending::Entries(e) => e,
                };
                let row = if dense {
                    let mut p = vec![0.0; n];
                    for (next, v) in entries {
                        *p.get_mut(next).ok_or_else(|| out_of_range(s, a, next, n))? += v;
                    }
                    Row::Dense(p.into_boxed_slice())
                } else {
                    let mut entries: Vec<(usize, f64)> =
                        entries.into_iter().filter(|e| e.1 != 0.0).collect();
                    entries.sort_by_key(|e| e.0);
                    let mut index: Vec<u32> = Vec::with_capacity(entries.len());
                    let mut prob: Vec<f64> = Vec::with_capacity(entries.len());
                    for (next, v) in entries {
                        if next >= n {
                            return Err(out_of_range(s, a, next, n));
                        }
                        if index.last() == Some(&(next as u32)) {
                            *prob.last_mut().unwrap() += v;
                        } else {
                            index.push(next as u32);
                            prob.push(v);
                        }
                    }
                    Row::Sparse {
                        index: index.into_boxed_slice(),
                        prob: prob.into_boxed_slice(),
                    }
                };
                pair_state.push(s);
                pair_action.push(a);
                rows.push(row);
                rewards.push(r);
            }
            pair_start.push(pair_action.len());
        }

        let reward_units = self.resolution.and_then(|res| {
            rewards
                .iter()
                .map(|&r| res.to_units(r))
                .collect::<Option<Vec<i64>>>()
        });
        if let (Some(res), Some(units)) = (self.resolution, reward_units.as_ref()) {
            for (r, &u) in rewards.iter_mut().zip(units) {
                *r = res.from_units(u);
            }
        }

        Ok(FiniteMdp {
            num_states: n,
            num_actions: self.num_actions,
            pair_start,
            pair_state,
            pair_action,
            rows,
            rewards,
            reward_units,
            resolution: self.resolution,
        })
    }
}

fn out_of_range(s: usize, a: usize, next: usize, n: usize) -> VarMdpError {
    VarMdpError::Malformed(format!(
        "transition (s={s},a={a}) targets state {next} outside 0..{n}"
    ))
}

/// One violated model invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

/// Every violated [`FiniteMdp`] invariant; empty iff the model is valid.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, location: String, message: String) {
        self.violations.push(Violation { location, message });
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(VarMdpError::Invalid(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("valid");
        }
        for v in &self.violations {
            writeln!(f, "{}: {}", v.location, v.message)?;
        }
        Ok(())
    }
}

/// Checks every model invariant and reports all violations.
pub fn validate(mdp: &FiniteMdp) -> ValidationReport {
    let mut report = ValidationReport::default();
    if mdp.num_states == 0 {
        report.push("model".into(), "no states".into());
    }
    if mdp.num_actions == 0 {
        report.push("model".into(), "no actions".into());
    }
    for s in 0..mdp.num_states {
        if mdp.pairs(s).is_empty() {
            report.push(format!("state {s}"), "no admissible action".into());
        }
        for k in mdp.pairs(s) {
            let a = mdp.pair_action[k];
            let at = format!("(s={s},a={a})");
            if a >= mdp.num_actions {
                report.push(
                    at.clone(),
                    format!("action index {a} outside 0..{}", mdp.num_actions),
                );
            }
            let mut bad_entry = false;
            mdp.row(k).for_each(|next, p| {
                if !(p.is_finite() && p >= 0.0) && !bad_entry {
                    bad_entry = true;
                    report.push(
                        at.clone(),
                        format!("transition to {next} has probability {p}"),
                    );
                }
            });
            let sum = mdp.row(k).sum();
            if !(sum - 1.0).abs().le(&ROW_SUM_TOL) {
                report.push(at.clone(), format!("transition row {at} sums to {sum}"));
            }
            let r = mdp.rewards[k];
            if !r.is_finite() {
                report.push(at.clone(), format!("reward {r} is not finite"));
            } else if let Some(res) = mdp.resolution {
                if res.to_units(r).is_none() {
                    report.push(
                        at,
                        format!("reward {r} is not a multiple of resolution {res}"),
                    );
                }
            }
        }
    }
    report
}

/// The sorted distinct reward values `{ r(s,a) : (s,a) admissible }`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardSupport {
    values: Vec<f64>,
    units: Option<Vec<i64>>,
    resolution: Option<Resolution>,
}

impl RewardSupport {
    pub fn of(mdp: &FiniteMdp) -> Self {
        match (mdp.resolution, mdp.reward_units.as_ref()) {
            (Some(res), Some(units)) => Self::from_units(res, units.iter().copied()),
            _ => Self::from_values(mdp.rewards.iter().copied()),
        }
    }

    /// Support of arbitrary values, merging points within [`SUPPORT_MERGE_TOL`].
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        let mut out: Vec<f64> = Vec::with_capacity(v.len());
        for x in v {
            match out.last() {
                Some(&last) if x - last <= SUPPORT_MERGE_TOL => {}
                _ => out.push(x),
            }
        }
        Self {
            values: out,
            units: None,
            resolution: None,
        }
    }

    /// Support of integer multiples of `resolution`.
    pub fn from_units(resolution: Resolution, units: impl IntoIterator<Item = i64>) -> Self {
        let mut u: Vec<i64> = units.into_iter().collect();
        u.sort_unstable();
        u.dedup();
        Self {
            values: u.iter().map(|&x| resolution.from_units(x)).collect(),
            units: Some(u),
            resolution: Some(resolution),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn units(&self) -> Option<&[i64]> {
        self.units.as_deref()
    }

    pub fn resolution(&self) -> Option<Resolution> {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Number of support points `<= lambda`.
    pub fn count_le(&self, lambda: f64) -> usize {
        if let (Some(units), Some(res)) = (&self.units, self.resolution) {
            if let Some(lu) = res.to_units(lambda) {
                return units.partition_point(|&u| u <= lu);
            }
        }
        self.values
            .partition_point(|&v| v <= lambda + SUPPORT_MERGE_TOL)
    }

    /// Index of the support point equal to `value`, if any.
    pub fn index_of(&self, value: f64) -> Option<usize> {
        let c = self.count_le(value);
        if c == 0 {
            return None;
        }
        let cand = c - 1;
        let hit = match (&self.units, self.resolution) {
            (Some(units), Some(res)) => res.to_units(value) == Some(units[cand]),
            _ => (self.values[cand] - value).abs() <= SUPPORT_MERGE_TOL,
        };
        hit.then_some(cand)
    }

    /// Largest support point strictly below `lambda`; below the minimum this
    /// is `lambda` minus one grid step (or minus one without a resolution).
    pub fn left_predecessor(&self, lambda: f64) -> f64 {
        if let (Some(units), Some(res)) = (&self.units, self.resolution) {
            if let Some(lu) = res.to_units(lambda) {
                let below = units.partition_point(|&u| u < lu);
                return if below == 0 {
                    res.from_units(lu - 1)
                } else {
                    res.from_units(units[below - 1])
                };
            }
        }
        let below = self
            .values
            .partition_point(|&v| v < lambda - SUPPORT_MERGE_TOL);
        if below == 0 {
            lambda - self.resolution.map_or(1.0, Resolution::step)
        } else {
            self.values[below - 1]
        }
    }
}

/// Sorted distinct rewards over all admissible pairs.
pub fn reward_support(mdp: &FiniteMdp) -> RewardSupport {
    RewardSupport::of(mdp)
}

/// `max { y in support : y < lambda }`, or one step below `lambda` when no
/// support point lies below it.
pub fn left_predecessor(lambda: f64, support: &RewardSupport) -> f64 {
    support.left_predecessor(lambda)
}

/// A deterministic stationary policy: one admissible action per state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StationaryPolicy(Vec<usize>);

impl StationaryPolicy {
    pub fn new(actions: Vec<usize>) -> Self {
        Self(actions)
    }

    /// Every state takes its lowest admissible action.
    pub fn lowest(mdp: &FiniteMdp) -> Self {
        Self(
            (0..mdp.num_states())
                .map(|s| mdp.actions(s).first().copied().unwrap_or(0))
                .collect(),
        )
    }

    pub fn random<R: Rng + ?Sized>(mdp: &FiniteMdp, rng: &mut R) -> Self {
        Self(
            (0..mdp.num_states())
                .map(|s| {
                    let acts = mdp.actions(s);
                    acts[rng.random_range(0..acts.len())]
                })
                .collect(),
        )
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn action(&self, s: usize) -> usize {
        self.0[s]
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }

    /// The pair index selected in each state.
    pub fn pairs(&self, mdp: &FiniteMdp) -> Result<Vec<usize>> {
        if self.0.len() != mdp.num_states() {
            return Err(VarMdpError::InadmissiblePolicy(format!(
                "policy covers {} states, model has {}",
                self.0.len(),
                mdp.num_states()
            )));
        }
        self.0
            .iter()
            .enumerate()
            .map(|(s, &a)| {
                mdp.pair_index(s, a).ok_or_else(|| {
                    VarMdpError::InadmissiblePolicy(format!("action {a} in state {s}"))
                })
            })
            .collect()
    }

    pub fn check(&self, mdp: &FiniteMdp) -> Result<()> {
        self.pairs(mdp).map(|_| ())
    }
}
