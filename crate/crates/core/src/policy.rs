//! Bandwidth allocation policies.
//!
//! Each policy divides the total bandwidth `v_total` among the incomplete
//! chunks for one step. Completed chunks never receive bandwidth. The "best"
//! chunk is the one with the lowest `r_on`, ties broken by lowest id.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChunkId, ChunkSpec, ChunkState};

/// Selects one of the allocation algorithms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyKind {
    /// Richest incomplete chunk takes everything.
    Sequential,
    /// Series-circuit division over all incomplete chunks.
    AllSites,
    /// Richest chunk alone until complete, then All Sites over the rest.
    LeafCutter,
    /// All Sites restricted to incomplete chunks with
    /// `importance >= threshold`, falling back to all incomplete chunks.
    ImportanceLeafCutter { threshold: f64 },
}

impl PolicyKind {
    /// The three policies compared by the experiment harnesses.
    pub const CLASSIC: [PolicyKind; 3] = [
        PolicyKind::Sequential,
        PolicyKind::AllSites,
        PolicyKind::LeafCutter,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Sequential => "sequential",
            PolicyKind::AllSites => "all-sites",
            PolicyKind::LeafCutter => "leaf-cutter",
            PolicyKind::ImportanceLeafCutter { .. } => "importance-leaf-cutter",
        }
    }

    /// Parses a policy name; `threshold` is used only by
    /// `importance-leaf-cutter`.
    pub fn from_name(name: &str, threshold: f64) -> Result<Self> {
        match name {
            "sequential" => Ok(PolicyKind::Sequential),
            "all-sites" => Ok(PolicyKind::AllSites),
            "leaf-cutter" => Ok(PolicyKind::LeafCutter),
            "importance-leaf-cutter" => {
                if !(threshold.is_finite() && threshold >= 0.0) {
                    return Err(Error::Config(format!(
                        "importance threshold {threshold} must be finite and >= 0"
                    )));
                }
                Ok(PolicyKind::ImportanceLeafCutter { threshold })
            }
            other => Err(Error::Config(format!(
                "unknown policy `{other}` (expected sequential, all-sites, leaf-cutter or importance-leaf-cutter)"
            ))),
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::from_name(s, 0.0)
    }
}

/// How All Sites weights the chunks it divides bandwidth among.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// Share proportional to the current memristance `M(x)`.
    #[default]
    Series,
    /// Share proportional to the static `r_on`.
    StaticROn,
}

/// A policy together with its All Sites weighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Policy {
    pub kind: PolicyKind,
    pub weighting: Weighting,
}

impl From<PolicyKind> for Policy {
    fn from(kind: PolicyKind) -> Self {
        Policy {
            kind,
            weighting: Weighting::Series,
        }
    }
}

/// One step's division of bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Allocation {
    pub v_total: f64,
    /// Positive shares, in input order.
    pub shares: Vec<(ChunkId, f64)>,
}

impl Allocation {
    pub fn share(&self, id: ChunkId) -> f64 {
        self.shares
            .iter()
            .find(|(i, _)| *i == id)
            .map_or(0.0, |(_, v)| *v)
    }

    pub fn total(&self) -> f64 {
        self.shares.iter().map(|(_, v)| v).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.shares.is_empty()
    }

    pub(crate) fn from_dense(specs: &[ChunkSpec], dense: &[f64], v_total: f64) -> Self {
        let shares = specs
            .iter()
            .zip(dense)
            .filter(|(_, v)| **v > 0.0)
            .map(|(s, v)| (s.id, *v))
            .collect();
        Allocation { v_total, shares }
    }
}

fn richer(a: &ChunkSpec, b: &ChunkSpec) -> bool {
    a.r_on
        .total_cmp(&b.r_on)
        .then(a.id.cmp(&b.id))
        .is_lt()
}

/// Index of the richest chunk among those accepted by `filter`.
fn richest(specs: &[ChunkSpec], mut filter: impl FnMut(usize) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for j in 0..specs.len() {
        if !filter(j) {
            continue;
        }
        match best {
            Some(b) if !richer(&specs[j], &specs[b]) => {}
            _ => best = Some(j),
        }
    }
    best
}

/// Divides `v_total` among the chunks accepted by `member` in proportion to
/// their weight. Returns false when no chunk is accepted.
fn divide(
    specs: &[ChunkSpec],
    states: &[ChunkState],
    v_total: f64,
    weighting: Weighting,
    out: &mut [f64],
    member: impl Fn(usize) -> bool,
) -> bool {
    let weight = |j: usize| match weighting {
        Weighting::Series => specs[j].resistance(states[j].x),
        Weighting::StaticROn => specs[j].r_on,
    };
    let total: f64 = (0..specs.len()).filter(|&j| member(j)).map(weight).sum();
    if total <= 0.0 {
        return false;
    }
    for (j, o) in out.iter_mut().enumerate() {
        if member(j) {
            *o = v_total * (weight(j) / total);
        }
    }
    true
}

impl Policy {
    pub fn new(kind: PolicyKind, weighting: Weighting) -> Self {
        Policy { kind, weighting }
    }

    /// Writes the per-chunk voltage for one step into `out` (aligned with
    /// `specs`). Every entry is overwritten.
    pub fn fill(&self, specs: &[ChunkSpec], states: &[ChunkState], v_total: f64, out: &mut [f64]) {
        assert_eq!(specs.len(), states.len());
        assert_eq!(specs.len(), out.len());
        out.iter_mut().for_each(|v| *v = 0.0);
        let open = |j: usize| !states[j].completed;
        match self.kind {
            PolicyKind::Sequential => {
                if let Some(j) = richest(specs, open) {
                    out[j] = v_total;
                }
            }
            PolicyKind::AllSites => {
                divide(specs, states, v_total, self.weighting, out, open);
            }
            PolicyKind::LeafCutter => match richest(specs, |_| true) {
                Some(best) if !states[best].completed => out[best] = v_total,
                _ => {
                    divide(specs, states, v_total, self.weighting, out, open);
                }
            },
            PolicyKind::ImportanceLeafCutter { threshold } => {
                let critical = |j: usize| open(j) && specs[j].importance >= threshold;
                if !divide(specs, states, v_total, self.weighting, out, critical) {
                    divide(specs, states, v_total, self.weighting, out, open);
                }
            }
        }
    }

    pub fn allocate(&self, specs: &[ChunkSpec], states: &[ChunkState], v_total: f64) -> Allocation {
        let mut dense = vec![0.0; specs.len()];
        self.fill(specs, states, v_total, &mut dense);
        Allocation::from_dense(specs, &dense, v_total)
    }
}

pub fn allocate_sequential(specs: &[ChunkSpec], states: &[ChunkState], v_total: f64) -> Allocation {
    Policy::from(PolicyKind::Sequential).allocate(specs, states, v_total)
}

pub fn allocate_all_sites(specs: &[ChunkSpec], states: &[ChunkState], v_total: f64) -> Allocation {
    Policy::from(PolicyKind::AllSites).allocate(specs, states, v_total)
}

pub fn allocate_leaf_cutter(specs: &[ChunkSpec], states: &[ChunkState], v_total: f64) -> Allocation {
    Policy::from(PolicyKind::LeafCutter).allocate(specs, states, v_total)
}

pub fn allocate_importance_leaf_cutter(
    specs: &[ChunkSpec],
    states: &[ChunkState],
    v_total: f64,
    threshold: f64,
) -> Allocation {
    Policy::from(PolicyKind::ImportanceLeafCutter { threshold }).allocate(specs, states, v_total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn chunks(r_ons: &[f64]) -> (Vec<ChunkSpec>, Vec<ChunkState>) {
        let specs = r_ons
            .iter()
            .enumerate()
            .map(|(i, &r)| ChunkSpec::new(i as u32, r).unwrap())
            .collect::<Vec<_>>();
        let states = vec![ChunkState::fresh(); specs.len()];
        (specs, states)
    }

    fn done() -> ChunkState {
        ChunkState {
            x: 1.0,
            completed: true,
            ..ChunkState::fresh()
        }
    }

    #[test]
    fn sequential_picks_lowest_r_on() {
        let (specs, mut states) = chunks(&[20.0, 5.0, 50.0]);
        let a = allocate_sequential(&specs, &states, 1.0);
        assert_eq!(a.shares, vec![(ChunkId(1), 1.0)]);

        states[1] = done();
        let a = allocate_sequential(&specs, &states, 1.0);
        assert_eq!(a.shares, vec![(ChunkId(0), 1.0)]);

        let states = vec![done(); 3];
        assert!(allocate_sequential(&specs, &states, 1.0).is_empty());
    }

    #[test]
    fn sequential_ties_go_to_lowest_id() {
        let (specs, states) = chunks(&[7.0, 7.0, 7.0]);
        let a = allocate_sequential(&specs, &states, 2.0);
        assert_eq!(a.shares, vec![(ChunkId(0), 2.0)]);
    }

    #[test]
    fn all_sites_divides_by_memristance() {
        // M = 10 and 30 at x = 0 with r_on = 10, 30
        let (specs, states) = chunks(&[10.0, 30.0]);
        let a = allocate_all_sites(&specs, &states, 1.0);
        assert_relative_eq!(a.share(ChunkId(0)), 0.25);
        assert_relative_eq!(a.share(ChunkId(1)), 0.75);

        let (specs, states) = chunks(&[40.0; 4]);
        let a = allocate_all_sites(&specs, &states, 1.0);
        for (_, v) in &a.shares {
            assert_relative_eq!(*v, 0.25);
        }

        let (specs, states) = chunks(&[12.0]);
        assert_eq!(
            allocate_all_sites(&specs, &states, 3.0),
            allocate_sequential(&specs, &states, 3.0)
        );
    }

    #[test]
    fn all_sites_uses_current_memristance() {
        let specs = vec![
            ChunkSpec::try_from((0, 10.0, 110.0, 1.0)).unwrap(),
            ChunkSpec::try_from((1, 10.0, 110.0, 1.0)).unwrap(),
        ];
        let states = vec![
            ChunkState {
                x: 0.5,
                ..ChunkState::fresh()
            },
            ChunkState::fresh(),
        ];
        // M = 60 and 10
        let a = allocate_all_sites(&specs, &states, 7.0);
        assert_relative_eq!(a.share(ChunkId(0)), 6.0);
        assert_relative_eq!(a.share(ChunkId(1)), 1.0);

        let stat = Policy::new(PolicyKind::AllSites, Weighting::StaticROn);
        let a = stat.allocate(&specs, &states, 7.0);
        assert_relative_eq!(a.share(ChunkId(0)), 3.5);
    }

    #[test]
    fn leaf_cutter_phases() {
        let (specs, mut states) = chunks(&[2.0, 40.0, 60.0]);
        let a = allocate_leaf_cutter(&specs, &states, 1.5);
        assert_eq!(a.shares, vec![(ChunkId(0), 1.5)]);

        // best done; M = 50 and 70 remain
        let specs = vec![
            specs[0].clone(),
            ChunkSpec::new(1, 50.0).unwrap(),
            ChunkSpec::new(2, 70.0).unwrap(),
        ];
        states[0] = done();
        let a = allocate_leaf_cutter(&specs, &states, 1.0);
        assert_relative_eq!(a.share(ChunkId(1)), 5.0 / 12.0);
        assert_relative_eq!(a.share(ChunkId(2)), 7.0 / 12.0);
        assert_eq!(a.share(ChunkId(0)), 0.0);
    }

    #[test]
    fn importance_leaf_cutter_examples() {
        let (mut specs, states) = chunks(&[30.0, 30.0, 30.0]);
        for (s, imp) in specs.iter_mut().zip([9.0, 8.0, 1.0]) {
            s.importance = imp;
        }
        let a = allocate_importance_leaf_cutter(&specs, &states, 1.0, 5.0);
        assert_relative_eq!(a.share(ChunkId(0)), 0.5);
        assert_relative_eq!(a.share(ChunkId(1)), 0.5);
        assert_eq!(a.share(ChunkId(2)), 0.0);

        assert_eq!(
            allocate_importance_leaf_cutter(&specs, &states, 1.0, 0.0),
            allocate_all_sites(&specs, &states, 1.0)
        );

        let mut states = states;
        states[0] = done();
        states[1] = done();
        let a = allocate_importance_leaf_cutter(&specs, &states, 1.0, 5.0);
        assert_eq!(a.shares, vec![(ChunkId(2), 1.0)]);
    }

    #[test]
    fn names_round_trip() {
        for kind in PolicyKind::CLASSIC {
            assert_eq!(kind.name().parse::<PolicyKind>().unwrap(), kind);
        }
        assert_eq!(
            PolicyKind::from_name("importance-leaf-cutter", 2.5).unwrap(),
            PolicyKind::ImportanceLeafCutter { threshold: 2.5 }
        );
        assert!("polcy".parse::<PolicyKind>().is_err());
        assert!(PolicyKind::from_name("importance-leaf-cutter", -1.0).is_err());
    }
}
