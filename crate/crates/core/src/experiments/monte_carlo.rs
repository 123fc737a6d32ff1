//! Seeded Monte Carlo comparison of the allocation policies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{makespans, winners, ChunkTemplate, Distribution};
use crate::engine::EngineConfig;
use crate::error::{Error, Result};
use crate::policy::{Policy, PolicyKind};
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSpec {
    #[serde(default = "default_n_range")]
    pub n_range: Vec<usize>,
    pub distribution: Distribution,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub template: ChunkTemplate,
    /// Freshness settings to report; both by default.
    #[serde(default = "default_modes")]
    pub freshness_modes: Vec<bool>,
}

fn default_n_range() -> Vec<usize> {
    vec![2, 3, 5, 10, 20, 40, 75, 1000]
}

fn default_trials() -> usize {
    100
}

fn default_modes() -> Vec<bool> {
    vec![true, false]
}

impl MonteCarloSpec {
    pub fn new(distribution: Distribution, n_range: Vec<usize>, trials: usize, seed: u64) -> Self {
        MonteCarloSpec {
            n_range,
            distribution,
            trials,
            seed,
            template: ChunkTemplate::default(),
            freshness_modes: default_modes(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.n_range.is_empty() || self.n_range.contains(&0) {
            return Err(Error::Config("n_range must be nonempty with n >= 1".into()));
        }
        if self.freshness_modes.is_empty() {
            return Err(Error::Config("freshness_modes must be nonempty".into()));
        }
        self.distribution.validate()?;
        self.template.validate()
    }
}

/// Aggregate for one (distribution, freshness, n, policy).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub distribution: String,
    pub freshness: bool,
    pub n: usize,
    pub policy: String,
    pub trials: usize,
    /// Mean over completed trials, in steps.
    pub mean_makespan: f64,
    pub wins: usize,
    pub win_rate: f64,
    pub truncated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McTable {
    pub rows: Vec<McRow>,
}

impl McTable {
    pub fn row(&self, freshness: bool, n: usize, policy: PolicyKind) -> Option<&McRow> {
        self.rows
            .iter()
            .find(|r| r.freshness == freshness && r.n == n && r.policy == policy.name())
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "distribution,freshness,n,policy,trials,mean_makespan,wins,win_rate,truncated")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.distribution, r.freshness, r.n, r.policy, r.trials, r.mean_makespan, r.wins, r.win_rate, r.truncated
            )?;
        }
        Ok(())
    }
}

/// Runs every policy on `spec.trials` generated instances per chunk count
/// and freshness mode. All policies in a trial see identical chunks.
pub fn monte_carlo(spec: &MonteCarloSpec, policies: &[Policy], config: &EngineConfig) -> Result<McTable> {
    spec.validate()?;
    config.validate()?;
    if policies.is_empty() {
        return Err(Error::Config("no policies given".into()));
    }
    let jobs: Vec<(usize, usize)> = spec
        .n_range
        .iter()
        .flat_map(|&n| (0..spec.trials).map(move |t| (n, t)))
        .collect();
    let label = spec.distribution.label();
    let mut rows = Vec::new();
    for &fresh in &spec.freshness_modes {
        let cfg = config.clone().with_freshness(fresh);
        let results: Vec<Vec<Option<u64>>> = jobs
            .par_iter()
            .map(|&(n, t)| {
                let mut rng = SplitMix64::new(derive_seed(spec.seed, &[n as u64, t as u64]));
                let chunks = spec.template.build(&spec.distribution.sample(n, &mut rng))?;
                makespans(&chunks, policies, &cfg)
            })
            .collect::<Result<_>>()?;

        for (gi, &n) in spec.n_range.iter().enumerate() {
            let group = &results[gi * spec.trials..(gi + 1) * spec.trials];
            for (pi, p) in policies.iter().enumerate() {
                let done: Vec<u64> = group.iter().filter_map(|m| m[pi]).collect();
                let wins = group.iter().filter(|m| winners(m).contains(&pi)).count();
                let mean = if done.is_empty() {
                    f64::NAN
                } else {
                    done.iter().sum::<u64>() as f64 / done.len() as f64
                };
                rows.push(McRow {
                    distribution: label.clone(),
                    freshness: fresh,
                    n,
                    policy: p.kind.name().to_owned(),
                    trials: spec.trials,
                    mean_makespan: mean,
                    wins,
                    win_rate: wins as f64 / spec.trials as f64,
                    truncated: spec.trials - done.len(),
                });
            }
        }
    }
    Ok(McTable { rows })
}
