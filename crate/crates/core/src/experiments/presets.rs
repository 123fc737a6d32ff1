//! Documented experiment configurations.
//!
//! At `dt = 1` two step-quantization effects separate the policies. A chunk
//! finishing mid-step wastes the rest of that step (about half a step per
//! completion), which penalizes serving chunks one at a time. A chunk served
//! at full bandwidth from `x = 0` gains from the start-of-step rate of the
//! explicit update (about `ln(r_off / r_on) / 2` steps), which rewards
//! serving a very rich chunk alone. With `r_off = 101` the first effect
//! dominates for ordinary chunks and the second for very rich ones.

use super::{ChunkMap, ChunkTemplate, Distribution};
use crate::engine::EngineConfig;

pub const REGIME_N_RANGE: [usize; 7] = [2, 3, 5, 10, 20, 40, 75];
pub const REGIME_TRIALS: usize = 100;
pub const REGIME_SEED: u64 = 2024;

/// Unit bandwidth, unit steps, freshness on.
pub fn regime_engine() -> EngineConfig {
    EngineConfig::new(1.0, 1.0).with_freshness(true)
}

/// `r_off = 101`, `beta = 1`, window of 4 steps.
pub fn regime_template() -> ChunkTemplate {
    ChunkTemplate {
        r_off: 101.0,
        beta: 1.0,
        window: Some(4),
    }
}

pub fn constant_richness() -> Distribution {
    Distribution::Constant { value: 80.0 }
}

pub fn one_rich() -> Distribution {
    Distribution::OneRich {
        r_best: 1.0,
        r_rest: 50.0,
    }
}

pub fn uniform_richness() -> Distribution {
    Distribution::Uniform { lo: 20.0, hi: 100.0 }
}

/// Bandwidth scaled with the chunk count: 1000 units for 1000 chunks, so
/// the per-chunk average matches [`regime_engine`].
pub fn thousand_chunk_engine() -> EngineConfig {
    EngineConfig::new(1000.0, 1.0).with_freshness(true)
}

pub fn scaling_distribution() -> Distribution {
    Distribution::Uniform { lo: 1.0, hi: 100.0 }
}

/// No freshness windows, `r_off = 200`: every chunk needs at least 100
/// steps, so clamp losses are small against the makespan.
pub fn continuum_template() -> ChunkTemplate {
    ChunkTemplate {
        r_off: 200.0,
        beta: 1.0,
        window: None,
    }
}

pub fn continuum_engine() -> EngineConfig {
    EngineConfig::new(1.0, 1.0)
}

/// The regime template with `r_min = 2`. At `r_min = 1` the top triplet
/// completes in a single full-bandwidth step, far ahead of its continuous
/// time, and that gain outweighs the clamp losses of Sequential.
pub fn svd_chunk_map() -> ChunkMap {
    let t = regime_template();
    ChunkMap {
        r_min: 2.0,
        r_off: t.r_off,
        beta: t.beta,
        window: t.window,
    }
}

pub const DOMINANCE_N: usize = 10;
pub const DOMINANCE_INSTANCES: usize = 2000;
