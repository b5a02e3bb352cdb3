//! Average-reward MDPs with indicator rewards, solved by Howard policy iteration.

use nalgebra::{DMatrix, DVector};

use crate::chain::{diagnose_pairs, require_ergodic, require_unichain, DENSE_SOLVE_LIMIT};
use crate::error::{Result, VarMdpError};
use crate::mdp::{FiniteMdp, Sense, StationaryPolicy, SUPPORT_MERGE_TOL};

/// An action replaces the incumbent only when it is better by more than this.
pub const IMPROVEMENT_TOL: f64 = 1e-9;

/// Default cap on Howard iterations.
pub const DEFAULT_ITERATION_CAP: usize = 10_000;

const BIAS_ITERATION_CAP: usize = 1_000_000;
const BIAS_ITERATION_TOL: f64 = 1e-13;

/// The base MDP with rewards replaced by `r_lambda(s, a) = I{r(s, a) <= lambda}`.
#[derive(Debug, Clone)]
pub struct ThresholdMdp<'a> {
    pub base: &'a FiniteMdp,
    pub lambda: f64,
    pub sense: Sense,
    indicator: Vec<f64>,
}

impl<'a> ThresholdMdp<'a> {
    /// Indicator reward per pair index.
    pub fn indicator(&self) -> &[f64] {
        &self.indicator
    }

    /// True when every pair has the same indicator value.
    pub fn constant_reward(&self) -> Option<f64> {
        let first = *self.indicator.first()?;
        self.indicator.iter().all(|&x| x == first).then_some(first)
    }
}

/// Builds the indicator-reward MDP for target level `lambda`.
pub fn threshold_mdp(mdp: &FiniteMdp, lambda: f64, sense: Sense) -> ThresholdMdp<'_> {
    let units = mdp
        .resolution()
        .and_then(|res| Some((res.to_units(lambda)?, mdp.reward_units().ok()?)));
    let indicator = match units {
        Some((lu, ru)) => ru.iter().map(|&u| f64::from(u8::from(u <= lu))).collect(),
        None => mdp
            .rewards()
            .iter()
            .map(|&r| f64::from(u8::from(r <= lambda + SUPPORT_MERGE_TOL)))
            .collect(),
    };
    ThresholdMdp {
        base: mdp,
        lambda,
        sense,
        indicator,
    }
}

/// Gain and bias of a unichain policy; `bias[reference_state] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainBias {
    pub gain: f64,
    pub bias: Vec<f64>,
    pub reference_state: usize,
}

/// Solves `r(s,u(s)) - g + sum_{s'} P(s'|s,u(s)) h(s') - h(s) = 0` with `h(0) = 0`.
pub fn evaluate_gain(tmdp: &ThresholdMdp<'_>, policy: &StationaryPolicy) -> Result<GainBias> {
    let pairs = policy.pairs(tmdp.base)?;
    evaluate_pairs(tmdp, &pairs, policy.actions())
}

fn evaluate_pairs(tmdp: &ThresholdMdp<'_>, pairs: &[usize], actions: &[usize]) -> Result<GainBias> {
    let mdp = tmdp.base;
    let n = mdp.num_states();
    let diag = diagnose_pairs(mdp, pairs);
    require_unichain(&diag, actions)?;
    let r: Vec<f64> = pairs.iter().map(|&k| tmdp.indicator[k]).collect();

    if n <= DENSE_SOLVE_LIMIT {
        // Unknowns (g, h_1, .., h_{n-1}); column 0 carries g in place of h_0.
        let mut m = DMatrix::<f64>::zeros(n, n);
        for (s, &k) in pairs.iter().enumerate() {
            mdp.row(k).for_each(|t, p| {
                if t != 0 {
                    m[(s, t)] -= p;
                }
            });
            if s != 0 {
                m[(s, s)] += 1.0;
            }
            m[(s, 0)] = 1.0;
        }
        let sol = m
            .lu()
            .solve(&DVector::from_vec(r))
            .ok_or(VarMdpError::Singular("gain/bias evaluation"))?;
        let gain = sol[0];
        let mut bias: Vec<f64> = sol.iter().copied().collect();
        bias[0] = 0.0;
        return Ok(GainBias {
            gain,
            bias,
            reference_state: 0,
        });
    }

    // Large chains: relative value iteration, which needs aperiodicity.
    require_ergodic(&diag, actions)?;
    let mut h = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..BIAS_ITERATION_CAP {
        for (s, &k) in pairs.iter().enumerate() {
            next[s] = r[s] + mdp.row(k).dot(&h);
        }
        let gain = next[0];
        let mut delta: f64 = 0.0;
        for s in 0..n {
            let v = next[s] - gain;
            delta = delta.max((v - h[s]).abs());
            h[s] = v;
        }
        if delta <= BIAS_ITERATION_TOL {
            return Ok(GainBias {
                gain,
                bias: h,
                reference_state: 0,
            });
        }
    }
    Err(VarMdpError::NonConvergence {
        what: "relative value iteration",
        iterations: BIAS_ITERATION_CAP,
    })
}

/// Howard improvement: per state the action optimizing
/// `r_lambda(s,a) + sum_{s'} P(s'|s,a) h(s')` in the declared sense.
///
/// The incumbent action is kept unless beaten by more than [`IMPROVEMENT_TOL`];
/// otherwise, or without an incumbent, the lowest index within the tolerance
/// of the optimum wins.
pub fn improve_rule(
    tmdp: &ThresholdMdp<'_>,
    gb: &GainBias,
    incumbent: Option<&StationaryPolicy>,
) -> StationaryPolicy {
    let mdp = tmdp.base;
    let sense = tmdp.sense;
    let mut actions = Vec::with_capacity(mdp.num_states());
    let mut q = Vec::new();
    for s in 0..mdp.num_states() {
        q.clear();
        q.extend(
            mdp.pairs(s)
                .map(|k| tmdp.indicator[k] + mdp.row(k).dot(&gb.bias)),
        );
        let best = match sense {
            Sense::Min => q.iter().copied().fold(f64::INFINITY, f64::min),
            Sense::Max => q.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        };
        let acts = mdp.actions(s);
        let keep = incumbent.and_then(|u| {
            let a = u.action(s);
            let i = acts.binary_search(&a).ok()?;
            (!sense.improves(best, q[i], IMPROVEMENT_TOL)).then_some(a)
        });
        let chosen = keep.unwrap_or_else(|| {
            let i = q
                .iter()
                .position(|&v| !sense.improves(best, v, IMPROVEMENT_TOL))
                .unwrap_or(0);
            acts[i]
        });
        actions.push(chosen);
    }
    StationaryPolicy::new(actions)
}

/// Options for [`solve_average`].
#[derive(Debug, Clone, Copy)]
pub struct AverageOptions {
    pub iteration_cap: usize,
}

impl Default for AverageOptions {
    fn default() -> Self {
        Self {
            iteration_cap: DEFAULT_ITERATION_CAP,
        }
    }
}

/// Result of [`solve_average`].
#[derive(Debug, Clone, PartialEq)]
pub struct AverageSolution {
    pub gain: f64,
    pub policy: StationaryPolicy,
    /// Number of policy evaluations performed.
    pub iterations: usize,
    /// Gain of each evaluated policy, in order.
    pub gains: Vec<f64>,
}

/// Howard policy iteration from `init` until the policy repeats.
pub fn solve_average(
    tmdp: &ThresholdMdp<'_>,
    init: &StationaryPolicy,
    opts: AverageOptions,
) -> Result<AverageSolution> {
    init.check(tmdp.base)?;
    if let Some(c) = tmdp.constant_reward() {
        return Ok(AverageSolution {
            gain: c,
            policy: init.clone(),
            iterations: 0,
            gains: Vec::new(),
        });
    }
    let mut policy = init.clone();
    let mut gains = Vec::new();
    for iteration in 1..=opts.iteration_cap {
        let gb = evaluate_gain(tmdp, &policy)?;
        gains.push(gb.gain);
        let next = improve_rule(tmdp, &gb, Some(&policy));
        if next == policy {
            return Ok(AverageSolution {
                gain: gb.gain.clamp(0.0, 1.0),
                policy,
                iterations: iteration,
                gains,
            });
        }
        policy = next;
    }
    Err(VarMdpError::NonConvergence {
        what: "Howard policy iteration",
        iterations: opts.iteration_cap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::stationary_distribution;
    use crate::mdp::MdpBuilder;

    fn two_by_two() -> FiniteMdp {
        let mut b = MdpBuilder::new(2, 2);
        b.dense_pair(0, 0, 2.0, &[0.9, 0.1]);
        b.dense_pair(0, 1, 7.0, &[0.2, 0.8]);
        b.dense_pair(1, 0, 7.0, &[0.5, 0.5]);
        b.dense_pair(1, 1, 2.0, &[0.7, 0.3]);
        b.build().unwrap()
    }

    #[test]
    fn indicator_examples() {
        let mut b = MdpBuilder::new(1, 2);
        b.pair(0, 0, 2.0, [(0, 1.0)]);
        b.pair(0, 1, 7.0, [(0, 1.0)]);
        let mdp = b.build().unwrap();
        assert_eq!(
            threshold_mdp(&mdp, 2.0, Sense::Min).indicator(),
            &[1.0, 0.0]
        );
        assert_eq!(
            threshold_mdp(&mdp, 1.0, Sense::Min).indicator(),
            &[0.0, 0.0]
        );
        assert_eq!(
            threshold_mdp(&mdp, 7.0, Sense::Min).indicator(),
            &[1.0, 1.0]
        );
    }

    #[test]
    fn constant_indicators_give_constant_gain() {
        let mdp = two_by_two();
        let u = StationaryPolicy::lowest(&mdp);
        let zero = evaluate_gain(&threshold_mdp(&mdp, 0.0, Sense::Min), &u).unwrap();
        assert!(zero.gain.abs() < 1e-12);
        assert!(zero.bias.iter().all(|h| h.abs() < 1e-12));
        let one = evaluate_gain(&threshold_mdp(&mdp, 9.0, Sense::Min), &u).unwrap();
        assert!((one.gain - 1.0).abs() < 1e-12);
        for lambda in [0.0, 9.0] {
            let t = threshold_mdp(&mdp, lambda, Sense::Max);
            let sol = solve_average(&t, &u, AverageOptions::default()).unwrap();
            assert_eq!(sol.gain, if lambda > 1.0 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn evaluation_equations_hold() {
        let mdp = two_by_two();
        let t = threshold_mdp(&mdp, 2.0, Sense::Min);
        let u = StationaryPolicy::new(vec![1, 0]);
        let gb = evaluate_gain(&t, &u).unwrap();
        let pairs = u.pairs(&mdp).unwrap();
        for (s, &k) in pairs.iter().enumerate() {
            let lhs = t.indicator()[k] - gb.gain + mdp.row(k).dot(&gb.bias) - gb.bias[s];
            assert!(lhs.abs() < 1e-12);
        }
        let pi = stationary_distribution(&mdp, &u).unwrap();
        let via_pi: f64 = pi.prob.iter().zip(t.indicator()).map(|(p, r)| p * r).sum();
        assert!((via_pi - gb.gain).abs() < 1e-12);
    }

    #[test]
    fn zero_bias_improvement_is_argmin_lowest_index() {
        let mdp = two_by_two();
        let t = threshold_mdp(&mdp, 2.0, Sense::Min);
        let gb = GainBias {
            gain: 0.0,
            bias: vec![0.0, 0.0],
            reference_state: 0,
        };
        assert_eq!(improve_rule(&t, &gb, None).actions(), &[1, 0]);
        let t = threshold_mdp(&mdp, 9.0, Sense::Min);
        assert_eq!(improve_rule(&t, &gb, None).actions(), &[0, 0]);
        let keep = StationaryPolicy::new(vec![1, 1]);
        assert_eq!(improve_rule(&t, &gb, Some(&keep)).actions(), &[1, 1]);
    }

    #[test]
    fn single_action_policy_is_unchanged() {
        let mut b = MdpBuilder::new(2, 3);
        b.dense_pair(0, 2, 1.0, &[0.5, 0.5]);
        b.dense_pair(1, 1, 3.0, &[0.4, 0.6]);
        let mdp = b.build().unwrap();
        let t = threshold_mdp(&mdp, 1.0, Sense::Max);
        let u = StationaryPolicy::lowest(&mdp);
        let gb = evaluate_gain(&t, &u).unwrap();
        assert_eq!(improve_rule(&t, &gb, Some(&u)), u);
    }

    #[test]
    fn gains_are_monotone_and_optimal_on_two_by_two() {
        let mdp = two_by_two();
        for sense in [Sense::Min, Sense::Max] {
            let t = threshold_mdp(&mdp, 2.0, sense);
            let sol = solve_average(
                &t,
                &StationaryPolicy::new(vec![1, 1]),
                AverageOptions::default(),
            )
            .unwrap();
            for w in sol.gains.windows(2) {
                assert!(!sense.improves(w[0], w[1], 1e-9));
            }
            let mut best: Option<f64> = None;
            for a0 in 0..2 {
                for a1 in 0..2 {
                    let g = evaluate_gain(&t, &StationaryPolicy::new(vec![a0, a1]))
                        .unwrap()
                        .gain;
                    best = Some(match best {
                        Some(b) if !sense.improves(g, b, 0.0) => b,
                        _ => g,
                    });
                }
            }
            assert!((sol.gain - best.unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn multichain_policy_is_rejected() {
        let mut b = MdpBuilder::new(2, 2);
        b.dense_pair(0, 0, 0.0, &[1.0, 0.0]);
        b.dense_pair(0, 1, 1.0, &[0.0, 1.0]);
        b.dense_pair(1, 0, 1.0, &[0.0, 1.0]);
        let mdp = b.build().unwrap();
        let t = threshold_mdp(&mdp, 0.0, Sense::Min);
        assert!(matches!(
            evaluate_gain(&t, &StationaryPolicy::new(vec![0, 0])),
            Err(VarMdpError::Multichain { .. })
        ));
    }
}
