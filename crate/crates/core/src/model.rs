//! Memristor-as-data-chunk dynamics.
//!
//! A data chunk is modelled as a linear-drift memristor whose normalised
//! state `x` is the fraction of the chunk already delivered to the control
//! system. Memristance interpolates linearly from `r_on` (fresh) to `r_off`
//! (fully transferred), the voltage across the device is the bandwidth it is
//! currently given, and the current is the information influx rate:
//!
//! ```text
//! M(x)  = r_on + (r_off - r_on) * x
//! dx/dt = beta * v / M(x)
//! ```
//!
//! Integration is explicit Euler with clamping at `x = 1`; any motion past
//! completion is discarded.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Upper bound of the `r_on` range (inverse richness).
pub const R_ON_MAX: f64 = 100.0;
/// Default `r_off`, strictly above the `r_on` ceiling.
pub const DEFAULT_R_OFF: f64 = 200.0;

/// Identifier of a data chunk.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct ChunkId(pub u32);

impl fmt::Display for ChunkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u32> for ChunkId {
    fn from(v: u32) -> Self {
        ChunkId(v)
    }
}

fn default_r_off() -> f64 {
    DEFAULT_R_OFF
}

fn default_beta() -> f64 {
    1.0
}

/// Static description of one data chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkSpec {
    pub id: ChunkId,
    /// Inverse richness, in `(0, 100]`.
    pub r_on: f64,
    /// Resistance at transfer completion, `> r_on`.
    #[serde(default = "default_r_off")]
    pub r_off: f64,
    /// Rate scale of state change, `> 0`.
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub importance: f64,
    /// Consecutive unserved steps before partial progress is discarded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<u32>,
    /// Optional name used by look-up tables (e.g. `"proximity"`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

impl ChunkSpec {
    /// Creates a validated spec with `r_off = 200`, `beta = 1`, zero
    /// importance and no freshness window.
    pub fn new(id: impl Into<ChunkId>, r_on: f64) -> Result<Self> {
        let spec = ChunkSpec {
            id: id.into(),
            r_on,
            r_off: DEFAULT_R_OFF,
            beta: 1.0,
            importance: 0.0,
            window: None,
            tag: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_r_off(mut self, r_off: f64) -> Self {
        self.r_off = r_off;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_importance(mut self, importance: f64) -> Self {
        self.importance = importance;
        self
    }

    pub fn with_window(mut self, window: u32) -> Self {
        self.window = Some(window);
        self
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = Some(tag.into());
        self
    }

    /// Checks every field bound.
    pub fn validate(&self) -> Result<()> {
        if !(self.r_on > 0.0 && self.r_on <= R_ON_MAX) {
            return Err(domain("r_on", self.r_on, "(0, 100]"));
        }
        if !(self.r_off.is_finite() && self.r_off > self.r_on) {
            return Err(domain("r_off", self.r_off, "finite and > r_on"));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(domain("beta", self.beta, "finite and > 0"));
        }
        if !(self.importance.is_finite() && self.importance >= 0.0) {
            return Err(domain("importance", self.importance, "finite and >= 0"));
        }
        if self.window == Some(0) {
            return Err(domain("window", 0.0, "a positive integer"));
        }
        Ok(())
    }

    /// `M(x)` without range checks.
    #[inline]
    pub(crate) fn resistance(&self, x: f64) -> f64 {
        self.r_on + (self.r_off - self.r_on) * x
    }

    /// Work (voltage-time) needed to move this chunk from `x = 0` to `x = 1`
    /// at unit voltage: `(r_on + (r_off - r_on) / 2) / beta`.
    pub fn transfer_work(&self) -> f64 {
        (self.r_on + (self.r_off - self.r_on) / 2.0) / self.beta
    }
}

/// Evolving transfer state of one chunk.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChunkState {
    /// Fraction transferred, in `[0, 1]`.
    pub x: f64,
    /// Consecutive steps without bandwidth since last service.
    pub age: u32,
    pub completed: bool,
    pub reset_count: u32,
}

impl ChunkState {
    pub fn fresh() -> Self {
        Self::default()
    }
}

fn check_x(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(domain("x", x, "[0, 1]"))
    }
}

/// Instantaneous resistance `r_on + (r_off - r_on) * x`.
pub fn memristance(spec: &ChunkSpec, x: f64) -> Result<f64> {
    check_x(x)?;
    Ok(spec.resistance(x))
}

/// State velocity `beta * v / M(x)` for voltage `v`.
pub fn transfer_rate(spec: &ChunkSpec, x: f64, v: f64) -> Result<f64> {
    check_x(x)?;
    if v.is_nan() || v < 0.0 {
        return Err(domain("v", v, ">= 0"));
    }
    if v == 0.0 {
        return Ok(0.0);
    }
    Ok(spec.beta * v / spec.resistance(x))
}

/// Advances one chunk by one explicit-Euler step of length `dt` at voltage `v`.
///
/// Completed chunks are returned unchanged. `v` must be non-negative and `dt`
/// positive.
pub fn step(state: ChunkState, spec: &ChunkSpec, v: f64, dt: f64) -> ChunkState {
    debug_assert!(v >= 0.0 && dt > 0.0);
    if state.completed {
        return state;
    }
    let mut next = state;
    if v > 0.0 {
        let x = state.x + spec.beta * v / spec.resistance(state.x) * dt;
        if x >= 1.0 {
            next.x = 1.0;
            next.completed = true;
        } else {
            next.x = x;
        }
        next.age = 0;
    } else {
        next.age = state.age.saturating_add(1);
    }
    next
}

/// Discards partial progress of a chunk left unserved for `window` steps.
///
/// A no-op when the spec has no window or the chunk is complete.
pub fn apply_freshness_reset(state: ChunkState, spec: &ChunkSpec) -> ChunkState {
    match spec.window {
        Some(w) if !state.completed && state.age >= w => ChunkState {
            x: 0.0,
            age: 0,
            completed: false,
            reset_count: state.reset_count + 1,
        },
        _ => state,
    }
}

/// Exact continuum time for a single chunk to go from `x = 0` to `x = 1`
/// under constant voltage `v_total`.
pub fn analytic_completion_time(spec: &ChunkSpec, v_total: f64) -> Result<f64> {
    if !(v_total > 0.0 && v_total.is_finite()) {
        return Err(domain("v_total", v_total, "finite and > 0"));
    }
    Ok(spec.transfer_work() / v_total)
}

impl TryFrom<(u32, f64, f64, f64)> for ChunkSpec {
    type Error = Error;

    /// `(id, r_on, r_off, beta)`.
    fn try_from((id, r_on, r_off, beta): (u32, f64, f64, f64)) -> Result<Self> {
        let spec = ChunkSpec {
            id: ChunkId(id),
            r_on,
            r_off,
            beta,
            importance: 0.0,
            window: None,
            tag: None,
        };
        spec.validate()?;
        Ok(spec)
    }
}
