//! Structure and limiting distribution of the Markov chain a stationary policy
//! induces on the state space.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use crate::error::{Result, VarMdpError};
use crate::mdp::{FiniteMdp, StationaryPolicy};

/// Up to this many recurrent states the limiting distribution is a direct solve.
pub const DENSE_SOLVE_LIMIT: usize = 2000;

/// Convergence threshold of the power iteration used above [`DENSE_SOLVE_LIMIT`].
pub const POWER_ITERATION_TOL: f64 = 1e-12;

const POWER_ITERATION_CAP: usize = 1_000_000;

/// Recurrent-class structure of a policy-induced chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChainDiagnosis {
    /// Closed communicating classes, each sorted, ordered by smallest state.
    pub recurrent_classes: Vec<Vec<usize>>,
    /// Period of each recurrent class.
    pub periods: Vec<usize>,
    pub is_unichain: bool,
    pub is_aperiodic: bool,
}

/// Limiting state-action distribution of a unichain aperiodic policy.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    /// Mass per pair index; zero off the policy.
    pub prob: Vec<f64>,
    /// Mass per state.
    pub state_prob: Vec<f64>,
    /// The recurrent class carrying all mass.
    pub support_states: Vec<usize>,
}

/// Classifies the chain induced by `policy`.
pub fn diagnose_chain(mdp: &FiniteMdp, policy: &StationaryPolicy) -> Result<ChainDiagnosis> {
    let pairs = policy.pairs(mdp)?;
    Ok(diagnose_pairs(mdp, &pairs))
}

/// [`diagnose_chain`] for a policy given as one pair index per state.
pub fn diagnose_pairs(mdp: &FiniteMdp, pairs: &[usize]) -> ChainDiagnosis {
    let n = mdp.num_states();
    let mut graph = DiGraph::<(), ()>::with_capacity(n, n);
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for (s, &k) in pairs.iter().enumerate() {
        mdp.row(k).for_each(|next, p| {
            if p > 0.0 {
                graph.add_edge(nodes[s], nodes[next], ());
            }
        });
    }

    let sccs = tarjan_scc(&graph);
    let mut component = vec![usize::MAX; n];
    for (c, scc) in sccs.iter().enumerate() {
        for node in scc {
            component[node.index()] = c;
        }
    }
    let mut closed = vec![true; sccs.len()];
    for edge in graph.raw_edges() {
        let (a, b) = (edge.source().index(), edge.target().index());
        if component[a] != component[b] {
            closed[component[a]] = false;
        }
    }

    let mut classes: Vec<Vec<usize>> = sccs
        .iter()
        .zip(&closed)
        .filter(|(_, &c)| c)
        .map(|(scc, _)| {
            let mut states: Vec<usize> = scc.iter().map(|v| v.index()).collect();
            states.sort_unstable();
            states
        })
        .collect();
    classes.sort_by_key(|c| c[0]);

    let periods: Vec<usize> = classes
        .iter()
        .map(|class| class_period(mdp, pairs, class))
        .collect();
    ChainDiagnosis {
        is_unichain: classes.len() == 1,
        is_aperiodic: periods.iter().all(|&d| d == 1),
        recurrent_classes: classes,
        periods,
    }
}

/// gcd of `level(u) + 1 - level(v)` over the edges of a closed class, with
/// levels from a breadth-first search; this equals the gcd of cycle lengths.
fn class_period(mdp: &FiniteMdp, pairs: &[usize], class: &[usize]) -> usize {
    let mut level = vec![usize::MAX; mdp.num_states()];
    let mut queue = std::collections::VecDeque::new();
    level[class[0]] = 0;
    queue.push_back(class[0]);
    let mut period = 0usize;
    while let Some(u) = queue.pop_front() {
        let lu = level[u];
        mdp.row(pairs[u]).for_each(|v, p| {
            if p > 0.0 {
                if level[v] == usize::MAX {
                    level[v] = lu + 1;
                    queue.push_back(v);
                } else {
                    let diff = (lu + 1).abs_diff(level[v]);
                    period = gcd(period, diff);
                }
            }
        });
    }
    period.max(1)
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Fails unless the diagnosis is unichain and aperiodic.
pub fn require_ergodic(diag: &ChainDiagnosis, policy: &[usize]) -> Result<()> {
    require_unichain(diag, policy)?;
    if let Some(&period) = diag.periods.iter().find(|&&d| d != 1) {
        return Err(VarMdpError::Periodic {
            policy: policy.to_vec(),
            period,
        });
    }
    Ok(())
}

/// Fails unless the diagnosis has exactly one recurrent class.
pub fn require_unichain(diag: &ChainDiagnosis, policy: &[usize]) -> Result<()> {
    if diag.is_unichain {
        Ok(())
    } else {
        Err(VarMdpError::Multichain {
            policy: policy.to_vec(),
            classes: diag.recurrent_classes.clone(),
        })
    }
}

/// Limiting state-action distribution `pi^u(s, a)` of a unichain aperiodic policy.
pub fn stationary_distribution(
    mdp: &FiniteMdp,
    policy: &StationaryPolicy,
) -> Result<StationaryDistribution> {
    let pairs = policy.pairs(mdp)?;
    let diag = diagnose_pairs(mdp, &pairs);
    require_ergodic(&diag, policy.actions())?;
    let class = diag.recurrent_classes.into_iter().next().unwrap();
    let on_class = class_distribution(mdp, &pairs, &class)?;

    let mut state_prob = vec![0.0; mdp.num_states()];
    let mut prob = vec![0.0; mdp.num_pairs()];
    for (&s, &p) in class.iter().zip(&on_class) {
        state_prob[s] = p;
        prob[pairs[s]] = p;
    }
    Ok(StationaryDistribution {
        prob,
        state_prob,
        support_states: class,
    })
}

/// Stationary vector of the chain restricted to the closed class `class`.
fn class_distribution(mdp: &FiniteMdp, pairs: &[usize], class: &[usize]) -> Result<Vec<f64>> {
    let m = class.len();
    let mut local = vec![usize::MAX; mdp.num_states()];
    for (i, &s) in class.iter().enumerate() {
        local[s] = i;
    }
    let mut pi = if m <= DENSE_SOLVE_LIMIT {
        // Columns of (P_CC^T - I); the last balance equation becomes sum(pi) = 1.
        let mut a = DMatrix::<f64>::zeros(m, m);
        for (i, &s) in class.iter().enumerate() {
            mdp.row(pairs[s]).for_each(|next, p| {
                let j = local[next];
                if j != usize::MAX {
                    a[(j, i)] += p;
                }
            });
            a[(i, i)] -= 1.0;
        }
        for i in 0..m {
            a[(m - 1, i)] = 1.0;
        }
        let mut rhs = DVector::<f64>::zeros(m);
        rhs[m - 1] = 1.0;
        let sol = a
            .lu()
            .solve(&rhs)
            .ok_or(VarMdpError::Singular("stationary distribution"))?;
        sol.iter().copied().collect::<Vec<f64>>()
    } else {
        power_iteration(mdp, pairs, class, &local)?
    };
    for p in &mut pi {
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    let total: f64 = pi.iter().sum();
    for p in &mut pi {
        *p /= total;
    }
    Ok(pi)
}

fn power_iteration(
    mdp: &FiniteMdp,
    pairs: &[usize],
    class: &[usize],
    local: &[usize],
) -> Result<Vec<f64>> {
    let m = class.len();
    let mut pi = vec![1.0 / m as f64; m];
    let mut next = vec![0.0; m];
    for _ in 0..POWER_ITERATION_CAP {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (i, &s) in class.iter().enumerate() {
            let mass = pi[i];
            mdp.row(pairs[s]).for_each(|t, p| {
                let j = local[t];
                if j != usize::MAX {
                    next[j] += mass * p;
                }
            });
        }
        let delta = pi
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut pi, &mut next);
        if delta <= POWER_ITERATION_TOL {
            return Ok(pi);
        }
    }
    Err(VarMdpError::NonConvergence {
        what: "stationary power iteration",
        iterations: POWER_ITERATION_CAP,
    })
}

/// `max_s |(pi P)(s) - pi(s)|` for a state distribution under `policy`.
pub fn balance_residual(
    mdp: &FiniteMdp,
    policy: &StationaryPolicy,
    state_prob: &[f64],
) -> Result<f64> {
    let pairs = policy.pairs(mdp)?;
    let mut flow = vec![0.0; mdp.num_states()];
    for (s, &k) in pairs.iter().enumerate() {
        let mass = state_prob[s];
        mdp.row(k).for_each(|t, p| flow[t] += mass * p);
    }
    Ok(flow
        .iter()
        .zip(state_prob)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}
