//! Experiment manifests: one TOML document per batch of runs.
//!
//! ```toml
//! problem = "steady-max"
//! solver = "iterate"
//! alpha = [0.1, 0.5, 0.9]
//! out = "runs/microgrid"
//!
//! [instance]
//! source = "microgrid"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use varmdp::instances::RandomSpec;
use varmdp::Sense;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    SteadyMax,
    SteadyMin,
    FiniteMax,
    FiniteMin,
}

impl Problem {
    pub fn sense(self) -> Sense {
        match self {
            Problem::SteadyMax | Problem::FiniteMax => Sense::Max,
            Problem::SteadyMin | Problem::FiniteMin => Sense::Min,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Problem::FiniteMax | Problem::FiniteMin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    #[default]
    Iterate,
    Baseline,
    Oracle,
}

/// Initial policy of the iterative solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    #[default]
    Lowest,
    /// Drawn from ChaCha8 seeded with `seed + entry index`.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum InstanceSource {
    /// Instance file; relative paths resolve against the manifest's directory.
    File {
        path: PathBuf,
    },
    Random(RandomSpec),
    Microgrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub instance: InstanceSource,
    pub problem: Problem,
    #[serde(default)]
    pub solver: SolverKind,
    #[serde(default)]
    pub init: InitKind,
    pub alpha: Vec<f64>,
    /// Horizon of finite problems.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Initial states of finite problems; all states when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s0: Option<Vec<usize>>,
    /// Generator seeds, one instance each; random sources only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl RunManifest {
    pub fn parse(text: &str) -> CliResult<Self> {
        let m: RunManifest = toml::from_str(text).map_err(|e| CliError::Manifest(e.to_string()))?;
        m.check()?;
        Ok(m)
    }

    /// Reads `path` and resolves a relative instance path against its directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Manifest(format!("cannot read {}: {e}", path.display())))?;
        let mut m = Self::parse(&text)?;
        if let InstanceSource::File { path: p } = &mut m.instance {
            if p.is_relative() {
                *p = path.parent().unwrap_or(Path::new(".")).join(&*p);
            }
        }
        Ok(m)
    }

    pub fn check(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::Manifest(m.to_string()));
        if self.alpha.is_empty() {
            return bad("alpha list is empty");
        }
        if let Some(a) = self.alpha.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
            return Err(CliError::Manifest(format!("alpha {a} outside (0, 1]")));
        }
        if self.problem.is_finite() {
            match self.horizon {
                None => return bad("finite problems need a horizon"),
                Some(0) => return bad("horizon must be at least 1"),
                Some(_) => {}
            }
            if self.solver == SolverKind::Oracle {
                return bad("the oracle solver applies to steady problems only");
            }
        } else if self.horizon.is_some() || self.s0.is_some() {
            return bad("horizon and s0 apply to finite problems only");
        }
        if self.seeds.is_some() && !matches!(self.instance, InstanceSource::Random(_)) {
            return bad("seeds apply to random instances only");
        }
        if self.init == InitKind::Random && self.solver != SolverKind::Iterate {
            return bad("random initialization applies to the iterate solver only");
        }
        Ok(())
    }
}
