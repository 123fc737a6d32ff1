//! Makespan growth with the number of chunks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{makespans, ChunkTemplate, Distribution};
use crate::engine::{makespan_oracle, EngineConfig};
use crate::error::{Error, Result};
use crate::policy::{Policy, PolicyKind};
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSpec {
    #[serde(default = "default_n_values")]
    pub n_values: Vec<usize>,
    #[serde(default = "default_distribution")]
    pub distribution: Distribution,
    #[serde(default)]
    pub template: ChunkTemplate,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_modes")]
    pub freshness_modes: Vec<bool>,
}

fn default_n_values() -> Vec<usize> {
    vec![10, 100, 1000]
}

fn default_distribution() -> Distribution {
    Distribution::Uniform { lo: 1.0, hi: 100.0 }
}

fn default_modes() -> Vec<bool> {
    vec![true, false]
}

impl ScalingSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_values.iter().any(|&n| n < 2) || self.n_values.is_empty() {
            return Err(Error::Config("n_values must be nonempty with n >= 2".into()));
        }
        if self.freshness_modes.is_empty() {
            return Err(Error::Config("freshness_modes must be nonempty".into()));
        }
        self.distribution.validate()?;
        self.template.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub freshness: bool,
    pub n: usize,
    pub policy: String,
    /// Steps; absent if the run was truncated.
    pub makespan: Option<u64>,
    pub makespan_time: Option<f64>,
    /// Continuum, no-reset makespan for the same chunks.
    pub oracle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    /// Sequential makespan against n, one entry per freshness mode.
    pub sequential_fit: Vec<(bool, LinearFit)>,
}

impl ScalingReport {
    pub fn makespan(&self, freshness: bool, n: usize, policy: PolicyKind) -> Option<u64> {
        self.rows
            .iter()
            .find(|r| r.freshness == freshness && r.n == n && r.policy == policy.name())
            .and_then(|r| r.makespan)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "freshness,n,policy,makespan,makespan_time,oracle")?;
        for r in &self.rows {
            let opt = |v: Option<String>| v.unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.freshness,
                r.n,
                r.policy,
                opt(r.makespan.map(|m| m.to_string())),
                opt(r.makespan_time.map(|m| m.to_string())),
                r.oracle
            )?;
        }
        Ok(())
    }
}

/// Ordinary least squares `y = slope x + intercept`.
pub fn linear_fit(points: &[(f64, f64)]) -> LinearFit {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    LinearFit {
        slope,
        intercept,
        r_squared,
    }
}

/// One instance per `n` (seeded from `spec.seed` and `n`), all policies
/// and freshness modes on that instance.
pub fn scaling_study(spec: &ScalingSpec, policies: &[Policy], config: &EngineConfig) -> Result<ScalingReport> {
    spec.validate()?;
    config.validate()?;
    let instances = spec
        .n_values
        .iter()
        .map(|&n| {
            let mut rng = SplitMix64::new(derive_seed(spec.seed, &[n as u64]));
            spec.template.build(&spec.distribution.sample(n, &mut rng))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut sequential_fit = Vec::new();
    for &fresh in &spec.freshness_modes {
        let cfg = config.clone().with_freshness(fresh);
        let results = instances
            .par_iter()
            .map(|chunks| makespans(chunks, policies, &cfg))
            .collect::<Result<Vec<_>>>()?;
        let mut seq_points = Vec::new();
        for ((&n, chunks), ms) in spec.n_values.iter().zip(&instances).zip(&results) {
            let oracle = makespan_oracle(chunks, config.v_total);
            for (p, &m) in policies.iter().zip(ms) {
                if p.kind == PolicyKind::Sequential {
                    if let Some(m) = m {
                        seq_points.push((n as f64, m as f64 * config.dt));
                    }
                }
                rows.push(ScalingRow {
                    freshness: fresh,
                    n,
                    policy: p.kind.name().to_owned(),
                    makespan: m,
                    makespan_time: m.map(|m| m as f64 * config.dt),
                    oracle,
                });
            }
        }
        if seq_points.len() >= 2 {
            sequential_fit.push((fresh, linear_fit(&seq_points)));
        }
    }
    Ok(ScalingReport { rows, sequential_fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_line() {
        let f = linear_fit(&[(1.0, 3.0), (2.0, 5.0), (4.0, 9.0)]);
        assert_relative_eq!(f.slope, 2.0, epsilon = 1e-12);
        assert_relative_eq!(f.intercept, 1.0, epsilon = 1e-12);
        assert_relative_eq!(f.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn noisy_line_r_squared() {
        let pts = [(0.0, 1.0), (1.0, 0.0), (2.0, 3.0), (3.0, 2.0)];
        let f = linear_fit(&pts);
        // sxx = 5, sxy = 3, syy = 5, ss_res = 5 - 9/5
        assert_relative_eq!(f.slope, 0.6, epsilon = 1e-12);
        assert_relative_eq!(f.intercept, 0.6, epsilon = 1e-12);
        assert_relative_eq!(f.r_squared, 1.0 - 3.2 / 5.0, epsilon = 1e-12);
    }

    #[test]
    fn small_study_runs() {
        let spec = ScalingSpec {
            n_values: vec![2, 4, 8],
            distribution: default_distribution(),
            template: ChunkTemplate::default(),
            seed: 5,
            freshness_modes: vec![false],
        };
        let policies: Vec<Policy> = PolicyKind::CLASSIC.iter().map(|&k| k.into()).collect();
        let r = scaling_study(&spec, &policies, &EngineConfig::new(1.0, 1.0)).unwrap();
        assert_eq!(r.rows.len(), 9);
        assert_eq!(r.sequential_fit.len(), 1);
        assert!(r.rows.iter().all(|row| row.makespan.is_some()));
    }
}
