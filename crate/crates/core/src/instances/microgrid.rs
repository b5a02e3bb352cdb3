//! Microgrid with renewable generation, storage and demand.
//!
//! State `(g, b, d)`: generation level, storage level, demand level. Action
//! `a` is the storage discharge (negative means charge), `b' = b - a`, and the
//! reward is the power sold to the main grid, `g + a - d`. Generation and
//! demand evolve as independent Markov chains.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VarMdpError};
use crate::mdp::{FiniteMdp, MdpBuilder, Resolution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicrogridSpec {
    pub generation_levels: Vec<f64>,
    pub demand_levels: Vec<f64>,
    pub b_min: f64,
    pub b_max: f64,
    pub c_max: f64,
    pub resolution: f64,
    /// Row `i` is the next-level distribution from generation level `i`.
    pub p_g: Vec<Vec<f64>>,
    /// Row `i` is the next-level distribution from demand level `i`.
    pub p_d: Vec<Vec<f64>>,
}

impl Default for MicrogridSpec {
    fn default() -> Self {
        Self {
            generation_levels: vec![0.0, 0.6, 1.2, 1.8, 2.4, 3.0],
            demand_levels: vec![0.6, 1.2, 1.8, 2.4, 3.0, 3.6],
            b_min: 0.4,
            b_max: 3.4,
            c_max: 1.2,
            resolution: 0.1,
            p_g: vec![
                vec![0.939, 0.051, 0.006, 0.002, 0.001, 0.001],
                vec![0.400, 0.443, 0.103, 0.029, 0.011, 0.014],
                vec![0.157, 0.373, 0.260, 0.115, 0.045, 0.050],
                vec![0.079, 0.240, 0.250, 0.192, 0.104, 0.135],
                vec![0.078, 0.139, 0.183, 0.192, 0.140, 0.268],
                vec![0.042, 0.074, 0.081, 0.099, 0.095, 0.609],
            ],
            p_d: vec![
                vec![0.751, 0.249, 0.000, 0.000, 0.000, 0.000],
                vec![0.031, 0.834, 0.135, 0.000, 0.000, 0.000],
                vec![0.000, 0.107, 0.819, 0.074, 0.000, 0.000],
                vec![0.000, 0.000, 0.139, 0.838, 0.023, 0.000],
                vec![0.000, 0.000, 0.000, 0.189, 0.794, 0.017],
                vec![0.000, 0.000, 0.000, 0.000, 0.267, 0.733],
            ],
        }
    }
}

/// Grid coordinates of a microgrid state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridState {
    pub generation: usize,
    pub storage: usize,
    pub demand: usize,
}

/// Index arithmetic for a built microgrid, in resolution units.
#[derive(Debug, Clone, PartialEq)]
pub struct MicrogridLayout {
    pub resolution: Resolution,
    pub generation_units: Vec<i64>,
    pub demand_units: Vec<i64>,
    pub b_min_units: i64,
    pub b_max_units: i64,
    pub c_max_units: i64,
}

impl MicrogridLayout {
    pub fn new(spec: &MicrogridSpec) -> Result<Self> {
        let resolution = Resolution::from_f64(spec.resolution).ok_or_else(|| {
            VarMdpError::Malformed(format!(
                "resolution {} is not a decimal step",
                spec.resolution
            ))
        })?;
        let units = |v: f64, what: &str| {
            resolution.to_units(v).ok_or_else(|| {
                VarMdpError::Malformed(format!("{what} {v} is off the {} grid", spec.resolution))
            })
        };
        let layout = Self {
            generation_units: spec
                .generation_levels
                .iter()
                .map(|&g| units(g, "generation level"))
                .collect::<Result<_>>()?,
            demand_units: spec
                .demand_levels
                .iter()
                .map(|&d| units(d, "demand level"))
                .collect::<Result<_>>()?,
            b_min_units: units(spec.b_min, "B_min")?,
            b_max_units: units(spec.b_max, "B_max")?,
            c_max_units: units(spec.c_max, "C_max")?,
            resolution,
        };
        if layout.b_min_units > layout.b_max_units || layout.c_max_units < 0 {
            return Err(VarMdpError::Malformed(
                "empty storage or action range".into(),
            ));
        }
        Ok(layout)
    }

    pub fn storage_levels(&self) -> usize {
        (self.b_max_units - self.b_min_units + 1) as usize
    }

    pub fn num_states(&self) -> usize {
        self.generation_units.len() * self.storage_levels() * self.demand_units.len()
    }

    /// Number of gridded actions `-C_max, .., C_max`.
    pub fn num_actions(&self) -> usize {
        (2 * self.c_max_units + 1) as usize
    }

    pub fn state_index(&self, s: GridState) -> usize {
        (s.generation * self.storage_levels() + s.storage) * self.demand_units.len() + s.demand
    }

    pub fn grid_state(&self, index: usize) -> GridState {
        let nd = self.demand_units.len();
        let nb = self.storage_levels();
        GridState {
            generation: index / (nb * nd),
            storage: (index / nd) % nb,
            demand: index % nd,
        }
    }

    /// Action index of a discharge of `units` resolution steps.
    pub fn action_index(&self, units: i64) -> usize {
        (units + self.c_max_units) as usize
    }

    pub fn action_units(&self, index: usize) -> i64 {
        index as i64 - self.c_max_units
    }

    pub fn storage_units(&self, storage: usize) -> i64 {
        self.b_min_units + storage as i64
    }

    /// Admissible discharges at storage level `b`, in units:
    /// `max(-C_max, b - B_max) ..= min(C_max, b - B_min)`.
    pub fn admissible_units(&self, b_units: i64) -> std::ops::RangeInclusive<i64> {
        let lo = (-self.c_max_units).max(b_units - self.b_max_units);
        let hi = self.c_max_units.min(b_units - self.b_min_units);
        lo..=hi
    }
}

fn check_stochastic(name: &str, m: &[Vec<f64>], size: usize) -> Result<()> {
    if m.len() != size || m.iter().any(|row| row.len() != size) {
        return Err(VarMdpError::Malformed(format!(
            "{name} must be {size}x{size}"
        )));
    }
    for (i, row) in m.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if row.iter().any(|&p| p.is_nan() || p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(VarMdpError::Malformed(format!(
                "{name} row {i} is not a distribution"
            )));
        }
    }
    Ok(())
}

/// Builds the microgrid MDP with rewards on the declared resolution grid.
pub fn build_microgrid(spec: &MicrogridSpec) -> Result<FiniteMdp> {
    let layout = MicrogridLayout::new(spec)?;
    let ng = layout.generation_units.len();
    let nd = layout.demand_units.len();
    check_stochastic("P_g", &spec.p_g, ng)?;
    check_stochastic("P_d", &spec.p_d, nd)?;

    let n = layout.num_states();
    let mut builder = MdpBuilder::new(n, layout.num_actions()).resolution(layout.resolution);
    for s in 0..n {
        let gs = layout.grid_state(s);
        let b = layout.storage_units(gs.storage);
        let actions = layout.admissible_units(b);
        if actions.is_empty() {
            return Err(VarMdpError::InfeasibleState { state: s });
        }
        for a in actions {
            let next_storage = (b - a - layout.b_min_units) as usize;
            let mut row = Vec::with_capacity(ng * nd);
            for (g2, &pg) in spec.p_g[gs.generation].iter().enumerate() {
                for (d2, &pd) in spec.p_d[gs.demand].iter().enumerate() {
                    let p = pg * pd;
                    if p > 0.0 {
                        let next = GridState {
                            generation: g2,
                            storage: next_storage,
                            demand: d2,
                        };
                        row.push((layout.state_index(next), p));
                    }
                }
            }
            let reward_units =
                layout.generation_units[gs.generation] + a - layout.demand_units[gs.demand];
            builder.pair(
                s,
                layout.action_index(a),
                layout.resolution.from_units(reward_units),
                row,
            );
        }
    }
    builder.build()
}
