//! `varmdp`: validate and generate instances, solve VaR-optimal MDP batches
//! from manifests, compare against baselines and oracles, export results.
//!
//! Every command prints one `key=value` summary line on stdout; numeric
//! results go to files. Exit codes: 0 success, 2 invalid manifest, 3 instance
//! validation failure, 4 multichain or periodic policy, 5 enumeration or
//! iteration cap exceeded, 1 anything else (including an uncertified result
//! or a solver disagreement).

mod artifacts;
mod error;
mod manifest;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use varmdp::chain::diagnose_chain;
use varmdp::instances::{
    build_microgrid, gen_random, read_instance, write_instance, MicrogridSpec, RandomSpec,
    RewardModel,
};
use varmdp::steady::{certify_steady, steady_var, BaselineMode};
use varmdp::{validate, ProbabilityLevel, Sense, StationaryPolicy};

use crate::error::{CliError, CliResult};
use crate::manifest::{RunManifest, SolverKind};
use crate::run::{expand, load_instances, run_all, Batch, Instance, Job};

#[derive(Parser, Debug)]
#[command(
    name = "varmdp",
    version,
    about = "Value-at-risk optimal policies for finite MDPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the manifest-driven commands.
#[derive(Args, Debug)]
struct RunArgs {
    /// Experiment manifest (TOML)
    #[arg(long)]
    manifest: PathBuf,

    /// Output directory; overrides the manifest's `out`
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads; defaults to the available parallelism
    #[arg(long, env = "VARMDP_WORKERS")]
    workers: Option<usize>,

    /// Seed of random initial policies; overrides the manifest's `seed`
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SenseArg {
    Max,
    Min,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check an instance file for structural and stochastic validity
    Validate { instance: PathBuf },

    /// Generate a seeded random instance
    Gen {
        #[arg(long)]
        states: usize,
        #[arg(long)]
        actions: usize,
        /// Integer rewards uniform on 0..=MAX; continuous rewards when absent
        #[arg(long)]
        integer_max: Option<u32>,
        #[arg(long, default_value_t = 0.0)]
        lo: f64,
        #[arg(long, default_value_t = 100.0)]
        hi: f64,
        /// Probability that a transition entry is positive
        #[arg(long, default_value_t = 1.0)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },

    /// Write the battery-storage microgrid instance
    Microgrid {
        #[arg(long)]
        out: PathBuf,
    },

    /// Solve every manifest entry
    Solve(RunArgs),

    /// Run the iterative solver and the baseline side by side
    Compare(RunArgs),

    /// Cross-check the iterative solver against exhaustive oracles
    Oracle(RunArgs),

    /// Check the optimality certificate of a stationary policy
    Certify {
        #[arg(long)]
        instance: PathBuf,
        /// Action per state, comma separated
        #[arg(long, value_delimiter = ',', required = true)]
        policy: Vec<usize>,
        #[arg(long)]
        alpha: f64,
        #[arg(long, value_enum)]
        sense: SenseArg,
    },

    /// Collect traces with timings and CDFs of a completed run
    Export {
        run_dir: PathBuf,
        /// Defaults to `<run_dir>/export`
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn summary(fields: &[(&str, String)]) {
    let line: Vec<String> = fields.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("{}", line.join(" "));
}

fn joined<T: ToString>(values: impl IntoIterator<Item = T>) -> String {
    values
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn cmd_validate(path: &Path) -> CliResult<()> {
    let (mdp, _) = read_instance(path)?;
    let report = validate(&mdp);
    if !report.is_valid() {
        eprint!("{report}");
        return Err(varmdp::VarMdpError::Invalid(report).into());
    }
    let diag = diagnose_chain(&mdp, &StationaryPolicy::lowest(&mdp))?;
    summary(&[
        ("command", "validate".into()),
        ("status", "ok".into()),
        ("states", mdp.num_states().to_string()),
        ("actions", mdp.num_actions().to_string()),
        ("pairs", mdp.num_pairs().to_string()),
        (
            "resolution",
            mdp.resolution()
                .map_or("none".into(), |r| r.step().to_string()),
        ),
        ("lowest_policy_unichain", diag.is_unichain.to_string()),
    ]);
    Ok(())
}

fn cmd_gen(spec: RandomSpec, out: &Path) -> CliResult<()> {
    let mdp = gen_random(&spec)?;
    write_instance(&mdp, out, Some(&json!({ "generator": spec })))?;
    summary(&[
        ("command", "gen".into()),
        ("status", "ok".into()),
        ("states", spec.num_states.to_string()),
        ("actions", spec.num_actions.to_string()),
        ("seed", spec.seed.to_string()),
        ("out", out.display().to_string()),
    ]);
    Ok(())
}

fn cmd_microgrid(out: &Path) -> CliResult<()> {
    let mdp = build_microgrid(&MicrogridSpec::default())?;
    write_instance(&mdp, out, Some(&json!({ "model": "microgrid" })))?;
    summary(&[
        ("command", "microgrid".into()),
        ("status", "ok".into()),
        ("states", mdp.num_states().to_string()),
        ("pairs", mdp.num_pairs().to_string()),
        ("out", out.display().to_string()),
    ]);
    Ok(())
}

/// A loaded manifest with its instances, entries and run settings.
struct Prepared {
    manifest: RunManifest,
    instances: Vec<Instance>,
    jobs: Vec<Job>,
    out: PathBuf,
    workers: usize,
}

fn prepare(args: &RunArgs) -> CliResult<Prepared> {
    let mut manifest = RunManifest::load(&args.manifest)?;
    if let Some(seed) = args.seed {
        manifest.seed = seed;
    }
    let out = args
        .out
        .clone()
        .or_else(|| manifest.out.clone())
        .ok_or_else(|| {
            CliError::Manifest("no output directory (set `out` or pass --out)".into())
        })?;
    let workers = match args.workers {
        Some(0) => return Err(CliError::Manifest("worker count must be at least 1".into())),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let instances = load_instances(&manifest)?;
    let jobs = expand(&manifest, &instances)?;
    Ok(Prepared {
        manifest,
        instances,
        jobs,
        out,
        workers,
    })
}

fn cmd_solve(args: &RunArgs) -> CliResult<()> {
    let p = prepare(args)?;
    let batch = Batch::new(&p.manifest, &p.instances)?;
    let start = Instant::now();
    let outcomes = run_all(p.workers, &p.jobs, |job| batch.run(job, p.manifest.solver))?;
    let total = start.elapsed().as_secs_f64() * 1e3;
    artifacts::write_run(&p.out, &p.manifest, &outcomes, p.workers, total)?;
    let certified = outcomes.iter().filter(|o| o.record.certified).count();
    let ok = certified == outcomes.len();
    summary(&[
        ("command", "solve".into()),
        ("status", if ok { "ok" } else { "uncertified" }.into()),
        ("entries", outcomes.len().to_string()),
        ("certified", certified.to_string()),
        (
            "var_star",
            joined(outcomes.iter().map(|o| o.record.var_star)),
        ),
        (
            "iterations",
            joined(outcomes.iter().map(|o| o.record.iterations)),
        ),
        ("out", p.out.display().to_string()),
    ]);
    if ok {
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "{} of {} entries not certified",
            outcomes.len() - certified,
            outcomes.len()
        )))
    }
}

#[derive(Serialize)]
struct PairTiming {
    id: String,
    iterate_millis: f64,
    reference_millis: f64,
}

/// One row of a side-by-side report.
struct Pair {
    id: String,
    alpha: f64,
    s0: Option<usize>,
    instance_seed: Option<u64>,
    iterate: f64,
    reference: f64,
    extra: Option<f64>,
    timing: PairTiming,
}

fn write_pairs(path: &Path, reference: &str, extra: Option<&str>, pairs: &[Pair]) -> CliResult<()> {
    std::fs::create_dir_all(path.parent().unwrap_or(Path::new(".")))?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        "id",
        "instance_seed",
        "alpha",
        "s0",
        "iterate_var",
        reference,
        "agree",
    ];
    header.extend(extra);
    w.write_record(&header)?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for p in pairs {
        let mut row = vec![
            p.id.clone(),
            opt(p.instance_seed.map(|s| s.to_string())),
            p.alpha.to_string(),
            opt(p.s0.map(|s| s.to_string())),
            p.iterate.to_string(),
            p.reference.to_string(),
            (p.iterate == p.reference).to_string(),
        ];
        if extra.is_some() {
            row.push(opt(p.extra.map(|g| g.to_string())));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn report_pairs(
    command: &str,
    out: &Path,
    pairs: &[Pair],
    workers: usize,
    failed_extra: usize,
) -> CliResult<()> {
    let timings: Vec<&PairTiming> = pairs.iter().map(|p| &p.timing).collect();
    let mut text =
        serde_json::to_string_pretty(&json!({ "workers": workers, "entries": timings }))?;
    text.push('\n');
    std::fs::write(out.join(format!("{command}_meta.json")), text)?;
    let disagreements = pairs.iter().filter(|p| p.iterate != p.reference).count();
    let iterate: f64 = pairs.iter().map(|p| p.timing.iterate_millis).sum();
    let reference: f64 = pairs.iter().map(|p| p.timing.reference_millis).sum();
    let ok = disagreements == 0 && failed_extra == 0;
    summary(&[
        ("command", command.into()),
        ("status", if ok { "ok" } else { "disagreement" }.into()),
        ("entries", pairs.len().to_string()),
        ("disagreements", (disagreements + failed_extra).to_string()),
        ("iterate_ms", format!("{iterate:.3}")),
        ("reference_ms", format!("{reference:.3}")),
        ("out", out.display().to_string()),
    ]);
    if ok {
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "{command}: {} disagreements",
            disagreements + failed_extra
        )))
    }
}

fn cmd_compare(args: &RunArgs) -> CliResult<()> {
    let p = prepare(args)?;
    let mut batch = Batch::new(&p.manifest, &p.instances)?;
    batch.baseline_mode = BaselineMode::FullSweep;
    let pairs = run_all(p.workers, &p.jobs, |job| {
        let it = batch.run(job, SolverKind::Iterate)?;
        let base = batch.run(job, SolverKind::Baseline)?;
        Ok(Pair {
            id: job.id.clone(),
            alpha: job.alpha,
            s0: job.s0,
            instance_seed: it.record.instance_seed,
            iterate: it.record.var_star,
            reference: base.record.var_star,
            extra: None,
            timing: PairTiming {
                id: job.id.clone(),
                iterate_millis: it.millis,
                reference_millis: base.millis,
            },
        })
    })?;
    write_pairs(&p.out.join("compare.csv"), "baseline_var", None, &pairs)?;
    report_pairs("compare", &p.out, &pairs, p.workers, 0)
}

/// Largest tolerated CDF gap between the forward pass and the trajectory tree.
const TRAJECTORY_TOL: f64 = 1e-10;

fn cmd_oracle(args: &RunArgs) -> CliResult<()> {
    let p = prepare(args)?;
    let batch = Batch::new(&p.manifest, &p.instances)?;
    let finite = p.manifest.problem.is_finite();
    let pairs = run_all(p.workers, &p.jobs, |job| {
        let it = batch.run(job, SolverKind::Iterate)?;
        let reference = if finite {
            SolverKind::Baseline
        } else {
            SolverKind::Oracle
        };
        let oracle = batch.run(job, reference)?;
        Ok(Pair {
            id: job.id.clone(),
            alpha: job.alpha,
            s0: job.s0,
            instance_seed: it.record.instance_seed,
            iterate: it.record.var_star,
            reference: oracle.record.var_star,
            extra: if finite {
                Some(batch.trajectory_gap(job)?)
            } else {
                None
            },
            timing: PairTiming {
                id: job.id.clone(),
                iterate_millis: it.millis,
                reference_millis: oracle.millis,
            },
        })
    })?;
    let (reference, extra) = if finite {
        ("baseline_var", Some("trajectory_gap"))
    } else {
        ("oracle_var", None)
    };
    write_pairs(&p.out.join("oracle.csv"), reference, extra, &pairs)?;
    let gaps = pairs
        .iter()
        .filter(|p| p.extra.is_some_and(|g| g > TRAJECTORY_TOL))
        .count();
    report_pairs("oracle", &p.out, &pairs, p.workers, gaps)
}

fn cmd_certify(instance: &Path, policy: Vec<usize>, alpha: f64, sense: SenseArg) -> CliResult<()> {
    let (mdp, _) = read_instance(instance)?;
    validate(&mdp).into_result()?;
    let alpha = ProbabilityLevel::new(alpha)?;
    let sense = match sense {
        SenseArg::Max => Sense::Max,
        SenseArg::Min => Sense::Min,
    };
    let policy = StationaryPolicy::new(policy);
    policy.check(&mdp)?;
    let var = steady_var(&mdp, &policy, alpha)?;
    let certified = certify_steady(&mdp, &policy, alpha, sense)?;
    summary(&[
        ("command", "certify".into()),
        (
            "status",
            if certified { "ok" } else { "uncertified" }.into(),
        ),
        ("var", var.to_string()),
        ("certified", certified.to_string()),
    ]);
    if certified {
        Ok(())
    } else {
        Err(CliError::Failed("policy is not optimal".into()))
    }
}

fn cmd_export(run_dir: &Path, out: Option<PathBuf>) -> CliResult<()> {
    let out = out.unwrap_or_else(|| artifacts::default_export_dir(run_dir));
    let n = artifacts::export(run_dir, &out)?;
    summary(&[
        ("command", "export".into()),
        ("status", "ok".into()),
        ("entries", n.to_string()),
        ("out", out.display().to_string()),
    ]);
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Validate { instance } => cmd_validate(&instance),
        Command::Gen {
            states,
            actions,
            integer_max,
            lo,
            hi,
            density,
            seed,
            out,
        } => {
            let reward_model = match integer_max {
                Some(max) => RewardModel::IntegerUniform { max },
                None => RewardModel::ContinuousUniform { lo, hi },
            };
            let spec = RandomSpec {
                density,
                ..RandomSpec::new(states, actions, reward_model, seed)
            };
            cmd_gen(spec, &out)
        }
        Command::Microgrid { out } => cmd_microgrid(&out),
        Command::Solve(args) => cmd_solve(&args),
        Command::Compare(args) => cmd_compare(&args),
        Command::Oracle(args) => cmd_oracle(&args),
        Command::Certify {
            instance,
            policy,
            alpha,
            sense,
        } => cmd_certify(&instance, policy, alpha, sense),
        Command::Export { run_dir, out } => cmd_export(&run_dir, out),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
