//! Acceptance suite: one PASS/FAIL line per criterion; exits nonzero on any FAIL.

mod common;

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use common::{hashed_action, table_invariants, tiny_finite, BruteSteady, IntDist};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use varmdp::augmented::{
    evaluate_augmented, realize_history_policy, trajectory_oracle, AugmentedPolicy, ValueTable,
    DEFAULT_TRAJECTORY_CAP,
};
use varmdp::finite::{baseline_finite, solve_finite, FiniteContext, FiniteOptions};
use varmdp::instances::{build_microgrid, gen_random, MicrogridSpec, RandomSpec, RewardModel};
use varmdp::steady::{
    baseline_steady, certify_steady, exhaustive_policy_oracle, solve_steady, steady_var,
    BaselineMode, SteadyOptions, SteadySolveResult, DEFAULT_ORACLE_CAP,
};
use varmdp::{reward_support, ProbabilityLevel, Sense, StationaryPolicy};

type Outcome = Result<String, String>;

fn level(alpha: f64) -> ProbabilityLevel {
    ProbabilityLevel::new(alpha).unwrap()
}

fn continuous(seed: u64, states: usize, actions: usize) -> varmdp::FiniteMdp {
    gen_random(&RandomSpec::new(
        states,
        actions,
        RewardModel::ContinuousUniform { lo: 0.0, hi: 100.0 },
        seed,
    ))
    .unwrap()
}

/// Microgrid solves shared by criteria 1 and 2.
struct MicrogridRuns {
    mdp: varmdp::FiniteMdp,
    runs: Vec<(f64, SteadySolveResult)>,
    seconds: f64,
}

fn microgrid_runs() -> Result<MicrogridRuns, String> {
    let start = Instant::now();
    let mdp = build_microgrid(&MicrogridSpec::default()).map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for alpha in [0.9, 0.5, 0.1] {
        let r = solve_steady(
            &mdp,
            level(alpha),
            Sense::Max,
            None,
            SteadyOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        runs.push((alpha, r));
    }
    Ok(MicrogridRuns {
        mdp,
        runs,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn criterion_1(m: &MicrogridRuns) -> Outcome {
    let expected = [0.6, -0.6, -1.6];
    let mut detail = Vec::new();
    let mut ok = m.mdp.num_states() == 1116;
    for ((alpha, r), want) in m.runs.iter().zip(expected) {
        ok &= r.var_star == want && r.certified;
        detail.push(format!(
            "alpha={alpha}: var*={} certified={}",
            r.var_star, r.certified
        ));
    }
    ok &= m.seconds < 600.0;
    detail.push(format!(
        "states={} total {:.1}s",
        m.mdp.num_states(),
        m.seconds
    ));
    let detail = detail.join(", ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_2(m: &MicrogridRuns) -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for (alpha, r) in &m.runs {
        let increasing = r.trace.windows(2).all(|w| w[1].lambda > w[0].lambda);
        let certified = certify_steady(&m.mdp, &r.policy_star, level(*alpha), Sense::Max)
            .map_err(|e| e.to_string())?;
        ok &= increasing && certified;
        detail.push(format!(
            "alpha={alpha}: {} levels, increasing={increasing}, certificate={certified}",
            r.trace.len()
        ));
    }
    let detail = detail.join(", ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_3() -> Outcome {
    let mut checks = 0;
    let mut failures = Vec::new();
    for seed in 0..100u64 {
        let states = 2 + (seed % 3) as usize;
        let actions = 2 + ((seed / 3) % 2) as usize;
        let mdp = continuous(seed, states, actions);
        let brute = BruteSteady::new(&mdp);
        for alpha in [0.1, 0.3, 0.5, 0.7, 0.9] {
            for sense in [Sense::Max, Sense::Min] {
                let solved =
                    solve_steady(&mdp, level(alpha), sense, None, SteadyOptions::default())
                        .map_err(|e| format!("seed {seed}: {e}"))?;
                let oracle =
                    exhaustive_policy_oracle(&mdp, level(alpha), sense, DEFAULT_ORACLE_CAP)
                        .map_err(|e| format!("seed {seed}: {e}"))?;
                let independent = brute.optimum(&mdp, alpha, sense);
                checks += 1;
                if solved.var_star != oracle.var_star || oracle.var_star != independent {
                    failures.push(format!(
                        "seed {seed} alpha={alpha} {sense}: solver {} oracle {} brute {independent}",
                        solved.var_star, oracle.var_star
                    ));
                }
            }
        }
    }
    if failures.is_empty() {
        Ok(format!("{checks} solves match the exhaustive oracle"))
    } else {
        Err(format!(
            "{} of {checks} mismatches; first: {}",
            failures.len(),
            failures[0]
        ))
    }
}

fn criterion_4() -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for (sense, alpha) in [(Sense::Max, 0.1), (Sense::Min, 0.9)] {
        let mut faster = 0;
        let mut mismatches = 0;
        for seed in 0..20u64 {
            let mdp = continuous(1000 + seed, 50, 20);
            let start = Instant::now();
            let solved = solve_steady(&mdp, level(alpha), sense, None, SteadyOptions::default())
                .map_err(|e| e.to_string())?;
            let iterate = start.elapsed();
            let start = Instant::now();
            let sweep = baseline_steady(&mdp, level(alpha), sense, BaselineMode::FullSweep)
                .map_err(|e| e.to_string())?;
            let baseline = start.elapsed();
            let early = baseline_steady(&mdp, level(alpha), sense, BaselineMode::EarlyExit)
                .map_err(|e| e.to_string())?;
            if solved.var_star != sweep.var_star || solved.var_star != early.var_star {
                mismatches += 1;
            }
            if iterate < baseline {
                faster += 1;
            }
        }
        ok &= mismatches == 0 && faster >= 18;
        detail.push(format!(
            "{sense} alpha={alpha}: {mismatches} mismatches, iterate faster on {faster}/20"
        ));
    }
    let detail = detail.join(", ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Runs suite 5 and hands every produced table to criterion 7.
fn criterion_5(tables: &mut Vec<(ValueTable, bool)>) -> Outcome {
    const ALPHAS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
    let mut tails = 0;
    let mut solves = 0;
    let mut failures = Vec::new();
    for seed in 0..100u64 {
        let (mdp, horizon) = tiny_finite(seed);
        let ctx = FiniteContext::new(&mdp, horizon).map_err(|e| e.to_string())?;
        let grid = ctx.grid.clone();
        let mut policies = Vec::new();
        policies.push((
            AugmentedPolicy::from_fn(&mdp, &grid, |t, s, l| hashed_action(&mdp, seed, t, s, l))
                .unwrap(),
            false,
        ));
        policies.push((
            AugmentedPolicy::from_fn(&mdp, &grid, |t, s, _| hashed_action(&mdp, seed, t, s, 0))
                .unwrap(),
            true,
        ));
        for sense in [Sense::Min, Sense::Max] {
            let (table, policy) = ctx.solved(sense).map_err(|e| e.to_string())?;
            tables.push((table.clone(), true));
            policies.push(((**policy).clone(), true));
        }
        let (lo, hi) = grid.lambda0_range();
        for (policy, monotone) in policies {
            let table = evaluate_augmented(&mdp, &policy).map_err(|e| e.to_string())?;
            let policy = Arc::new(policy);
            for s0 in 0..mdp.num_states() {
                for lambda0 in lo..=hi {
                    let hp = realize_history_policy(policy.clone(), lambda0);
                    let pmf = trajectory_oracle(&mdp, &hp, s0, DEFAULT_TRAJECTORY_CAP)
                        .map_err(|e| e.to_string())?;
                    let v = table.initial_value(s0, lambda0).unwrap();
                    tails += 1;
                    if (v - pmf.cdf(lambda0)).abs() > 1e-10 {
                        failures.push(format!(
                            "seed {seed} s0={s0} lambda0={lambda0}: {v} vs {}",
                            pmf.cdf(lambda0)
                        ));
                    }
                }
            }
            tables.push((table, monotone));
        }
        for alpha in ALPHAS {
            for sense in [Sense::Max, Sense::Min] {
                for b in baseline_finite(&ctx, level(alpha), sense).map_err(|e| e.to_string())? {
                    let solved = solve_finite(
                        &ctx,
                        level(alpha),
                        b.s0,
                        sense,
                        None,
                        FiniteOptions::default(),
                    )
                    .map_err(|e| e.to_string())?;
                    solves += 1;
                    if solved.var_units != b.var_units {
                        failures.push(format!(
                            "seed {seed} s0={} alpha={alpha} {sense}: iterate {} baseline {}",
                            b.s0, solved.var_star, b.var_star
                        ));
                    }
                }
            }
        }
    }
    if failures.is_empty() {
        Ok(format!(
            "{tails} tail checks, {solves} solve/baseline pairs agree"
        ))
    } else {
        Err(format!(
            "{} failures; first: {}",
            failures.len(),
            failures[0]
        ))
    }
}

fn criterion_6() -> Outcome {
    const TOTAL: u32 = 60;
    let mut max_bad = 0;
    let mut min_bad = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let x = IntDist::random(&mut rng, 5, 8, TOTAL);
        let y = IntDist::random(&mut rng, 5, 8, TOTAL);
        let m = rand::Rng::random_range(&mut rng, 1..TOTAL);
        let alpha = level(f64::from(m) / f64::from(TOTAL));
        let (xm, ym) = (x.as_mdp(), y.as_mdp());
        let var_x =
            steady_var(&xm, &StationaryPolicy::lowest(&xm), alpha).map_err(|e| e.to_string())?;
        let var_y =
            steady_var(&ym, &StationaryPolicy::lowest(&ym), alpha).map_err(|e| e.to_string())?;
        if var_x != x.var(m) as f64 || var_y != y.var(m) as f64 {
            max_bad += 1;
            continue;
        }
        if y.cdf_reaches(var_x as i64, m) == (var_y > var_x) {
            max_bad += 1;
        }
        let pred = reward_support(&ym).left_predecessor(var_x);
        if y.cdf_reaches(pred as i64, m) != (var_y < var_x) {
            min_bad += 1;
        }
    }
    if max_bad == 0 && min_bad == 0 {
        Ok("1000 pairs per relation, zero counterexamples".into())
    } else {
        Err(format!(
            "{max_bad} maximization and {min_bad} minimization counterexamples"
        ))
    }
}

fn criterion_7(tables: &[(ValueTable, bool)]) -> Outcome {
    for (i, (table, monotone)) in tables.iter().enumerate() {
        table_invariants(table, &table.grid, *monotone).map_err(|e| format!("table {i}: {e}"))?;
    }
    let monotone = tables.iter().filter(|t| t.1).count();
    Ok(format!(
        "{} tables from suite 5 ({monotone} optimal or λ-independent, checked for monotonicity too); suites 1-4 produce none",
        tables.len()
    ))
}

fn criterion_8() -> Outcome {
    let mdp = continuous(2024, 1000, 100);
    let start = Instant::now();
    let r = solve_steady(&mdp, level(0.1), Sense::Max, None, SteadyOptions::default())
        .map_err(|e| e.to_string())?;
    let seconds = start.elapsed().as_secs_f64();
    let detail = format!(
        "var*={} certified={} iterations={} (limit 30) wall time {seconds:.1}s",
        r.var_star,
        r.certified,
        r.trace.len()
    );
    if r.certified && r.trace.len() <= 30 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn report(n: usize, name: &str, outcome: &Outcome) -> bool {
    match outcome {
        Ok(d) => println!("criterion {n} ({name}): PASS: {d}"),
        Err(d) => println!("criterion {n} ({name}): FAIL: {d}"),
    }
    outcome.is_ok()
}

fn main() -> ExitCode {
    let mut all = true;
    let microgrid = microgrid_runs();
    let (c1, c2) = match &microgrid {
        Ok(m) => (criterion_1(m), criterion_2(m)),
        Err(e) => (Err(e.clone()), Err(e.clone())),
    };
    all &= report(1, "microgrid reproduction", &c1);
    all &= report(2, "monotone improvement traces", &c2);
    all &= report(3, "steady-state oracle equivalence", &criterion_3());
    all &= report(4, "baseline agreement and timing", &criterion_4());
    let mut tables = Vec::new();
    all &= report(
        5,
        "finite-horizon path agreement",
        &criterion_5(&mut tables),
    );
    all &= report(6, "duality relations", &criterion_6());
    all &= report(7, "augmented table invariants", &criterion_7(&tables));
    all &= report(8, "scaling smoke test", &criterion_8());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
