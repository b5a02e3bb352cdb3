//! Test-side oracles, written independently of the library's solvers.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use varmdp::augmented::{HistoryPolicy, LambdaGrid, ValueTable};
use varmdp::instances::{gen_random, RandomSpec, RewardModel};
use varmdp::{FiniteMdp, MdpBuilder, Resolution, Sense, StationaryPolicy};

/// Lookup tolerance shared with the library's VaR scan.
pub const CDF_TOL: f64 = 1e-12;

/// Finitely supported distribution with integer weights summing to `total`.
#[derive(Debug, Clone)]
pub struct IntDist {
    /// `(value, weight)`, values distinct and ascending, weights positive.
    pub atoms: Vec<(i64, u32)>,
    pub total: u32,
}

impl IntDist {
    /// Up to `max_atoms` distinct values in `0..=max_value`, weights summing to `total`.
    pub fn random(rng: &mut impl Rng, max_atoms: usize, max_value: i64, total: u32) -> Self {
        let k = rng.random_range(1..=max_atoms);
        let mut values: Vec<i64> = (0..=max_value).collect();
        for i in (1..values.len()).rev() {
            values.swap(i, rng.random_range(0..=i));
        }
        let mut values: Vec<i64> = values.into_iter().take(k).collect();
        values.sort_unstable();
        let k = values.len();
        let mut cuts: Vec<u32> = (0..k - 1).map(|_| rng.random_range(1..total)).collect();
        cuts.sort_unstable();
        cuts.dedup();
        let mut weights = Vec::new();
        let mut prev = 0;
        for c in cuts.into_iter().chain([total]) {
            weights.push(c - prev);
            prev = c;
        }
        let atoms = values.into_iter().zip(weights).collect();
        Self { atoms, total }
    }

    /// `P(X <= lambda) >= num/total` decided in integers.
    pub fn cdf_reaches(&self, lambda: i64, num: u32) -> bool {
        self.weight_le(lambda) >= num
    }

    pub fn weight_le(&self, lambda: i64) -> u32 {
        self.atoms
            .iter()
            .filter(|a| a.0 <= lambda)
            .map(|a| a.1)
            .sum()
    }

    /// `min { v in support : P(X <= v) >= num/total }` by direct scan.
    pub fn var(&self, num: u32) -> i64 {
        let mut acc = 0;
        for &(v, w) in &self.atoms {
            acc += w;
            if acc >= num {
                return v;
            }
        }
        self.atoms.last().unwrap().0
    }

    /// Largest support value below `lambda`, else `lambda - 1`.
    pub fn predecessor(&self, lambda: i64) -> i64 {
        self.atoms
            .iter()
            .rev()
            .map(|a| a.0)
            .find(|&v| v < lambda)
            .unwrap_or(lambda - 1)
    }

    /// A chain whose rows all equal this distribution, so its stationary
    /// pair distribution is the distribution itself; one action per state,
    /// state `i` earns the `i`-th value.
    pub fn as_mdp(&self) -> FiniteMdp {
        let n = self.atoms.len();
        let row: Vec<f64> = self
            .atoms
            .iter()
            .map(|a| f64::from(a.1) / f64::from(self.total))
            .collect();
        let mut b = MdpBuilder::new(n, 1).resolution(Resolution::integer());
        for (s, &(v, _)) in self.atoms.iter().enumerate() {
            b.dense_pair(s, 0, v as f64, &row);
        }
        b.build().unwrap()
    }
}

/// State distribution after `steps` left multiplications from uniform.
pub fn power_pi(mdp: &FiniteMdp, policy: &StationaryPolicy, steps: usize) -> Vec<f64> {
    let n = mdp.num_states();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            let k = mdp.pair_index(s, policy.action(s)).unwrap();
            (0..n).map(|j| mdp.row(k).prob(j)).collect()
        })
        .collect();
    let mut d = vec![1.0 / n as f64; n];
    for _ in 0..steps {
        let mut next = vec![0.0; n];
        for (i, row) in rows.iter().enumerate() {
            for (j, p) in row.iter().enumerate() {
                next[j] += d[i] * p;
            }
        }
        d = next;
    }
    d
}

/// VaR of the steady reward of `policy` by sorting rewards and scanning.
pub fn scan_steady_var(mdp: &FiniteMdp, policy: &StationaryPolicy, pi: &[f64], alpha: f64) -> f64 {
    let mut atoms: Vec<(f64, f64)> = (0..mdp.num_states())
        .map(|s| (mdp.reward_at(s, policy.action(s)).unwrap(), pi[s]))
        .collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = 0.0;
    for &(v, p) in &atoms {
        acc += p;
        if acc >= alpha - CDF_TOL {
            return v;
        }
    }
    atoms.last().unwrap().0
}

/// Every deterministic stationary policy, last state varying fastest.
pub fn all_policies(mdp: &FiniteMdp) -> Vec<StationaryPolicy> {
    let mut out = vec![Vec::new()];
    for s in 0..mdp.num_states() {
        out = out
            .into_iter()
            .flat_map(|p: Vec<usize>| {
                mdp.actions(s).iter().map(move |&a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    out.into_iter().map(StationaryPolicy::new).collect()
}

/// Optimal steady VaR over all stationary policies, each evaluated by
/// 10,000-step power iteration.
pub struct BruteSteady {
    pub policies: Vec<StationaryPolicy>,
    pub pis: Vec<Vec<f64>>,
}

impl BruteSteady {
    pub fn new(mdp: &FiniteMdp) -> Self {
        let policies = all_policies(mdp);
        let pis = policies.iter().map(|u| power_pi(mdp, u, 10_000)).collect();
        Self { policies, pis }
    }

    pub fn optimum(&self, mdp: &FiniteMdp, alpha: f64, sense: Sense) -> f64 {
        let vars = self
            .policies
            .iter()
            .zip(&self.pis)
            .map(|(u, pi)| scan_steady_var(mdp, u, pi, alpha));
        match sense {
            Sense::Max => vars.fold(f64::NEG_INFINITY, f64::max),
            Sense::Min => vars.fold(f64::INFINITY, f64::min),
        }
    }
}

/// Random ergodic instance with continuous rewards in `(0, 100)`.
pub fn small_steady(seed: u64, states: usize, actions: usize) -> FiniteMdp {
    gen_random(&RandomSpec::new(
        states,
        actions,
        RewardModel::ContinuousUniform { lo: 0.0, hi: 100.0 },
        seed,
    ))
    .unwrap()
}

/// Tiny integer-reward instance: `|S| <= 3`, `|A| <= 3`, rewards in `0..=3`,
/// sometimes with sparse rows.
pub fn tiny_finite(seed: u64) -> (FiniteMdp, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let states = rng.random_range(1..=3);
    let actions = rng.random_range(1..=3);
    let horizon = rng.random_range(1..=4);
    let density = if rng.random_bool(0.5) { 1.0 } else { 0.5 };
    let spec = RandomSpec {
        density,
        ..RandomSpec::new(
            states,
            actions,
            RewardModel::IntegerUniform { max: 3 },
            seed,
        )
    };
    (gen_random(&spec).unwrap(), horizon)
}

/// Optimal finite-horizon VaR over all deterministic history-dependent
/// policies, by enumerating the achievable reward distributions node by node.
/// Returns `None` when the enumeration would exceed `cap` distributions.
pub fn history_optimum(
    mdp: &FiniteMdp,
    horizon: usize,
    s0: usize,
    alpha: f64,
    sense: Sense,
    cap: usize,
) -> Option<i64> {
    let units = mdp.reward_units().unwrap();
    let n = mdp.num_states();
    let mut level: Vec<Vec<BTreeMap<i64, f64>>> = vec![vec![BTreeMap::from([(0, 1.0)])]; n];
    for _ in 0..horizon {
        let mut next = Vec::with_capacity(n);
        for s in 0..n {
            let mut options = Vec::new();
            for k in mdp.pairs(s) {
                let succ: Vec<(usize, f64)> = mdp.row(k).iter().filter(|e| e.1 > 0.0).collect();
                let combos: usize = succ.iter().map(|&(s2, _)| level[s2].len()).product();
                if options.len() + combos > cap {
                    return None;
                }
                let mut picks = vec![0usize; succ.len()];
                loop {
                    let mut mix = BTreeMap::new();
                    for (i, &(s2, p)) in succ.iter().enumerate() {
                        for (&v, &q) in &level[s2][picks[i]] {
                            *mix.entry(v + units[k]).or_insert(0.0) += p * q;
                        }
                    }
                    options.push(mix);
                    if !advance(&mut picks, |i| level[succ[i].0].len()) {
                        break;
                    }
                }
            }
            next.push(options);
        }
        level = next;
    }
    let vars = level[s0].iter().map(|pmf| {
        let mut acc = 0.0;
        let mut out = *pmf.keys().last().unwrap();
        for (&v, &p) in pmf {
            acc += p;
            if acc >= alpha - CDF_TOL {
                out = v;
                break;
            }
        }
        out
    });
    match sense {
        Sense::Max => vars.max(),
        Sense::Min => vars.min(),
    }
}

/// Odometer step over `picks` with digit `i` ranging in `0..radix(i)`, last
/// digit fastest; false once every combination has been visited.
fn advance(picks: &mut [usize], radix: impl Fn(usize) -> usize) -> bool {
    for i in (0..picks.len()).rev() {
        picks[i] += 1;
        if picks[i] < radix(i) {
            return true;
        }
        picks[i] = 0;
    }
    false
}

/// Empirical `P(R <= lambda)` of `policy` from `s0` over `rollouts` samples.
pub fn monte_carlo_cdf(
    mdp: &FiniteMdp,
    policy: &HistoryPolicy,
    s0: usize,
    rollouts: usize,
    seed: u64,
) -> BTreeMap<i64, f64> {
    let units = mdp.reward_units().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for _ in 0..rollouts {
        let mut s = s0;
        let mut collected = 0;
        for t in 0..policy.horizon() {
            let a = policy.action(t, s, collected).unwrap();
            let k = mdp.pair_index(s, a).unwrap();
            collected += units[k];
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = None;
            for (s2, p) in mdp.row(k).iter() {
                if p > 0.0 {
                    chosen = Some(s2);
                    acc += p;
                    if u < acc {
                        break;
                    }
                }
            }
            s = chosen.unwrap();
        }
        *counts.entry(collected).or_insert(0) += 1;
    }
    let mut acc = 0;
    counts
        .into_iter()
        .map(|(v, c)| {
            acc += c;
            (v, acc as f64 / rollouts as f64)
        })
        .collect()
}

/// Checks `[0, 1]` confinement and boundary pinning of every stage of `table`,
/// and λ-monotonicity when `monotone`. Monotonicity holds for optimal tables
/// and for policies that ignore λ, not for arbitrary λ-dependent policies.
pub fn table_invariants(
    table: &ValueTable,
    grid: &LambdaGrid,
    monotone: bool,
) -> Result<(), String> {
    for stage in &table.stages {
        let (min_sum, max_sum) = grid.remaining_sum_range(stage.stage);
        for s in 0..stage.num_states {
            let row = stage.row(s);
            for (i, &v) in row.iter().enumerate() {
                let lambda = stage.lo + i as i64;
                if !(-CDF_TOL..=1.0 + CDF_TOL).contains(&v) {
                    return Err(format!(
                        "t={} s={s} lambda={lambda}: value {v} outside [0,1]",
                        stage.stage
                    ));
                }
                if monotone && i > 0 && v < row[i - 1] - CDF_TOL {
                    return Err(format!(
                        "t={} s={s} lambda={lambda}: value decreases",
                        stage.stage
                    ));
                }
                if lambda >= max_sum && v != 1.0 {
                    return Err(format!(
                        "t={} s={s} lambda={lambda}: {v} not pinned to 1",
                        stage.stage
                    ));
                }
                if lambda < min_sum && v != 0.0 {
                    return Err(format!(
                        "t={} s={s} lambda={lambda}: {v} not pinned to 0",
                        stage.stage
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Deterministic pseudo-random augmented decision: a hash of the arguments
/// picks one admissible action.
pub fn hashed_action(mdp: &FiniteMdp, salt: u64, t: usize, s: usize, lambda: i64) -> usize {
    let mut x = salt
        ^ (t as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (s as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= (lambda as u64).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^= x >> 31;
    x = x.wrapping_mul(0xd6e8_feb8_6659_fd93);
    x ^= x >> 29;
    let acts = mdp.actions(s);
    acts[(x % acts.len() as u64) as usize]
}
