//! Experiment harnesses built on the engine.

pub mod dominance;
pub mod monte_carlo;
pub mod presets;
pub mod scaling;
pub mod svd_transfer;

use serde::{Deserialize, Serialize};

use crate::engine::{run, EngineConfig};
use crate::error::{domain, Result};
use crate::model::{ChunkSpec, DEFAULT_R_OFF, R_ON_MAX};
use crate::policy::Policy;
use crate::rng::SplitMix64;

pub use dominance::{dominance_condition, dominance_study, Dominance, DominanceRecord, DominanceSpec};
pub use monte_carlo::{monte_carlo, McRow, McTable, MonteCarloSpec};
pub use scaling::{linear_fit, scaling_study, LinearFit, ScalingReport, ScalingRow, ScalingSpec};
pub use svd_transfer::{
    chunks_from_svd, count_crossings, fixture_image, reconstruction_error, run_svd_experiment, ChunkMap,
    ErrorCurve, PolicyOutcome, SvdInstance, SvdReport,
};

/// Generator for `r_on` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Distribution {
    /// Every chunk has `r_on = value`.
    Constant { value: f64 },
    /// `r_on` uniform in `[lo, hi)`.
    Uniform { lo: f64, hi: f64 },
    /// One chunk at `r_best` in a random position, the rest uniform in
    /// `[r_rest, 100)`.
    OneRich { r_best: f64, r_rest: f64 },
}

impl Distribution {
    pub fn label(&self) -> String {
        match self {
            Distribution::Constant { value } => format!("constant({value})"),
            Distribution::Uniform { lo, hi } => format!("uniform({lo},{hi})"),
            Distribution::OneRich { r_best, r_rest } => format!("one-rich({r_best},{r_rest})"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |what, v: f64| {
            if v > 0.0 && v <= R_ON_MAX {
                Ok(())
            } else {
                Err(domain(what, v, "(0, 100]"))
            }
        };
        match *self {
            Distribution::Constant { value } => check("distribution.value", value),
            Distribution::Uniform { lo, hi } => {
                check("distribution.lo", lo)?;
                check("distribution.hi", hi)?;
                if hi < lo {
                    return Err(domain("distribution.hi", hi, "hi >= lo"));
                }
                Ok(())
            }
            Distribution::OneRich { r_best, r_rest } => {
                check("distribution.r_best", r_best)?;
                check("distribution.r_rest", r_rest)
            }
        }
    }

    pub fn sample(&self, n: usize, rng: &mut SplitMix64) -> Vec<f64> {
        match *self {
            Distribution::Constant { value } => vec![value; n],
            Distribution::Uniform { lo, hi } => (0..n).map(|_| rng.uniform(lo, hi)).collect(),
            Distribution::OneRich { r_best, r_rest } => {
                let best = rng.below(n);
                (0..n)
                    .map(|i| if i == best { r_best } else { rng.uniform(r_rest, R_ON_MAX) })
                    .collect()
            }
        }
    }
}

/// Fixed chunk parameters shared by generated instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChunkTemplate {
    pub r_off: f64,
    pub beta: f64,
    pub window: Option<u32>,
}

impl Default for ChunkTemplate {
    fn default() -> Self {
        ChunkTemplate {
            r_off: DEFAULT_R_OFF,
            beta: 1.0,
            window: None,
        }
    }
}

impl ChunkTemplate {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_off > R_ON_MAX && self.r_off.is_finite()) {
            return Err(domain("template.r_off", self.r_off, "(100, inf)"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(domain("template.beta", self.beta, "(0, inf)"));
        }
        if self.window == Some(0) {
            return Err(domain("template.window", 0.0, "positive integer"));
        }
        Ok(())
    }

    /// Chunks with ids `0..r_ons.len()`.
    pub fn build(&self, r_ons: &[f64]) -> Result<Vec<ChunkSpec>> {
        r_ons
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let mut c = ChunkSpec::new(i as u32, r)?.with_r_off(self.r_off).with_beta(self.beta);
                if let Some(w) = self.window {
                    c = c.with_window(w);
                }
                c.validate()?;
                Ok(c)
            })
            .collect()
    }
}

/// Makespans (in steps) of each policy on the same chunks.
pub fn makespans(specs: &[ChunkSpec], policies: &[Policy], config: &EngineConfig) -> Result<Vec<Option<u64>>> {
    let config = config.clone().summary_only();
    policies
        .iter()
        .map(|&p| Ok(run(specs, p, &config)?.makespan))
        .collect()
}

/// Indices of the strictly minimal entries (all tied minima win).
pub fn winners(makespans: &[Option<u64>]) -> Vec<usize> {
    let best = makespans.iter().flatten().min();
    match best {
        None => Vec::new(),
        Some(&b) => (0..makespans.len()).filter(|&i| makespans[i] == Some(b)).collect(),
    }
}
