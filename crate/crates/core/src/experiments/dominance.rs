//! When does serving the richest chunk first beat sharing with it?

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ChunkTemplate, Distribution};
use crate::engine::{run, EngineConfig};
use crate::error::{Error, Result};
use crate::model::{ChunkId, ChunkSpec};
use crate::policy::PolicyKind;
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dominance {
    /// Extra All Sites time caused by adding the richest chunk.
    pub lhs: f64,
    /// Time to transfer the richest chunk alone at full bandwidth.
    pub rhs: f64,
    pub holds: bool,
    pub richest: ChunkId,
}

fn makespan_time(specs: &[ChunkSpec], kind: PolicyKind, config: &EngineConfig) -> Result<f64> {
    let trace = run(specs, kind, config)?;
    trace
        .makespan_time()
        .ok_or_else(|| Error::Config(format!("{kind} run truncated at max_steps")))
}

/// Measures both sides by simulation under `config`.
pub fn dominance_condition(specs: &[ChunkSpec], config: &EngineConfig) -> Result<Dominance> {
    if specs.len() < 2 {
        return Err(Error::Config("dominance needs at least two chunks".into()));
    }
    let config = config.clone().summary_only();
    let best = (0..specs.len())
        .min_by(|&a, &b| {
            specs[a]
                .r_on
                .total_cmp(&specs[b].r_on)
                .then(specs[a].id.cmp(&specs[b].id))
        })
        .unwrap();
    let rest: Vec<ChunkSpec> = specs
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, s)| s.clone())
        .collect();
    let lhs = makespan_time(specs, PolicyKind::AllSites, &config)?
        - makespan_time(&rest, PolicyKind::AllSites, &config)?;
    let rhs = makespan_time(std::slice::from_ref(&specs[best]), PolicyKind::Sequential, &config)?;
    Ok(Dominance {
        lhs,
        rhs,
        holds: lhs < rhs,
        richest: specs[best].id,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DominanceSpec {
    pub n: usize,
    pub distribution: Distribution,
    pub instances: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub template: ChunkTemplate,
}

impl DominanceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config("dominance n must be >= 2".into()));
        }
        if self.instances == 0 {
            return Err(Error::Config("instances must be >= 1".into()));
        }
        self.distribution.validate()?;
        self.template.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceRecord {
    pub instance: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub leaf_cutter: f64,
    pub all_sites: f64,
}

/// Evaluates the condition and both policies on `spec.instances` seeded
/// instances.
pub fn dominance_study(spec: &DominanceSpec, config: &EngineConfig) -> Result<Vec<DominanceRecord>> {
    spec.validate()?;
    config.validate()?;
    let config = config.clone().summary_only();
    (0..spec.instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = SplitMix64::new(derive_seed(spec.seed, &[i as u64]));
            let chunks = spec.template.build(&spec.distribution.sample(spec.n, &mut rng))?;
            let d = dominance_condition(&chunks, &config)?;
            Ok(DominanceRecord {
                instance: i,
                lhs: d.lhs,
                rhs: d.rhs,
                holds: d.holds,
                leaf_cutter: makespan_time(&chunks, PolicyKind::LeafCutter, &config)?,
                all_sites: makespan_time(&chunks, PolicyKind::AllSites, &config)?,
            })
        })
        .collect()
}

pub fn write_csv<W: std::io::Write>(records: &[DominanceRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "instance,lhs,rhs,holds,leaf_cutter,all_sites")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.instance, r.lhs, r.rhs, r.holds, r.leaf_cutter, r.all_sites
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::makespan_oracle;

    #[test]
    fn continuum_boundary_case() {
        let specs = vec![
            ChunkSpec::new(0u32, 5.0).unwrap(),
            ChunkSpec::new(1u32, 40.0).unwrap(),
            ChunkSpec::new(2u32, 70.0).unwrap(),
        ];
        let cfg = EngineConfig::new(1.0, 1e-3);
        let d = dominance_condition(&specs, &cfg).unwrap();
        let oracle = makespan_oracle(&specs[..1], 1.0);
        assert!((d.lhs - oracle).abs() / oracle < 0.01, "{d:?}");
        assert!((d.rhs - oracle).abs() / oracle < 0.01, "{d:?}");
    }

    #[test]
    fn two_chunk_baseline() {
        let specs = vec![ChunkSpec::new(0u32, 50.0).unwrap(), ChunkSpec::new(1u32, 10.0).unwrap()];
        let d = dominance_condition(&specs, &EngineConfig::new(1.0, 1.0)).unwrap();
        assert_eq!(d.richest, ChunkId(1));
        assert!(dominance_condition(&specs[..1], &EngineConfig::new(1.0, 1.0)).is_err());
    }
}
