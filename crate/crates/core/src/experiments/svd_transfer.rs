//! Progressive image transfer: each singular triplet of an image is one
//! chunk, and the receiver's approximation is the sum of completed triplets.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::engine::{run, EngineConfig};
use crate::error::{domain, Error, Result};
use crate::model::{ChunkId, ChunkSpec, DEFAULT_R_OFF, R_ON_MAX};
use crate::pgm::GrayImage;
use crate::policy::{Policy, PolicyKind};
use crate::svd::{svd, Matrix, Triplet};

/// Parameters of the map from normalized singular value to chunk spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChunkMap {
    pub r_min: f64,
    pub r_off: f64,
    pub beta: f64,
    pub window: Option<u32>,
}

impl Default for ChunkMap {
    fn default() -> Self {
        ChunkMap {
            r_min: 1.0,
            r_off: DEFAULT_R_OFF,
            beta: 1.0,
            window: None,
        }
    }
}

impl ChunkMap {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_min > 0.0 && self.r_min <= R_ON_MAX) {
            return Err(domain("chunk_map.r_min", self.r_min, "(0, 100]"));
        }
        if !(self.r_off > R_ON_MAX && self.r_off.is_finite()) {
            return Err(domain("chunk_map.r_off", self.r_off, "(100, inf)"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(domain("chunk_map.beta", self.beta, "(0, inf)"));
        }
        if self.window == Some(0) {
            return Err(domain("chunk_map.window", 0.0, "positive integer"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvdInstance {
    /// Absent when the instance was built from a bare spectrum.
    pub matrix: Option<Matrix>,
    pub triplets: Vec<Triplet>,
    pub chunk_map: ChunkMap,
}

impl SvdInstance {
    pub fn from_matrix(matrix: Matrix, chunk_map: ChunkMap) -> Result<Self> {
        chunk_map.validate()?;
        let triplets = svd(&matrix)?;
        Ok(SvdInstance {
            matrix: Some(matrix),
            triplets,
            chunk_map,
        })
    }

    /// Instance from singular values alone; errors are computed from the
    /// spectrum energy instead of a residual matrix.
    pub fn from_spectrum(mut sigmas: Vec<f64>, chunk_map: ChunkMap) -> Result<Self> {
        chunk_map.validate()?;
        if sigmas.is_empty() {
            return Err(Error::Config("empty singular value list".into()));
        }
        if let Some(&s) = sigmas.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(domain("sigma", s, "[0, inf)"));
        }
        sigmas.sort_by(|a, b| b.total_cmp(a));
        let triplets = sigmas
            .into_iter()
            .map(|sigma| Triplet {
                sigma,
                u: Vec::new(),
                v: Vec::new(),
            })
            .collect();
        Ok(SvdInstance {
            matrix: None,
            triplets,
            chunk_map,
        })
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.triplets.iter().map(|t| t.sigma).collect()
    }
}

/// One chunk per triplet; chunk id `k` is triplet index `k`.
pub fn chunks_from_svd(instance: &SvdInstance) -> Result<Vec<ChunkSpec>> {
    let map = &instance.chunk_map;
    let s1 = instance.triplets.first().map_or(0.0, |t| t.sigma);
    if s1 <= 0.0 {
        return Err(Error::ZeroSpectrum);
    }
    instance
        .triplets
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let richness = t.sigma / s1;
            let r_on = (map.r_min + (R_ON_MAX - map.r_min) * (1.0 - richness)).clamp(f64::MIN_POSITIVE, R_ON_MAX);
            let mut spec = ChunkSpec::new(k as u32, r_on)?
                .with_r_off(map.r_off)
                .with_beta(map.beta)
                .with_importance(richness);
            if let Some(w) = map.window {
                spec = spec.with_window(w);
            }
            spec.validate()?;
            Ok(spec)
        })
        .collect()
}

/// Relative Frobenius error of the approximation built from `done`.
pub fn reconstruction_error(instance: &SvdInstance, done: &BTreeSet<usize>) -> Result<f64> {
    if let Some(&k) = done.iter().find(|&&k| k >= instance.triplets.len()) {
        return Err(Error::Config(format!("triplet index {k} out of range")));
    }
    match &instance.matrix {
        Some(a) => {
            let total = a.frobenius_norm();
            if total == 0.0 {
                return Ok(0.0);
            }
            let mut r = a.clone();
            for &k in done {
                let t = &instance.triplets[k];
                r.sub_outer(t.sigma, &t.u, &t.v);
            }
            Ok(r.frobenius_norm() / total)
        }
        None => Ok(spectrum_error(&instance.sigmas(), done)),
    }
}

fn spectrum_error(sigmas: &[f64], done: &BTreeSet<usize>) -> f64 {
    let total: f64 = sigmas.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return 0.0;
    }
    let kept: f64 = done.iter().map(|&k| sigmas[k] * sigmas[k]).sum();
    ((total - kept).max(0.0) / total).sqrt()
}

/// Error-vs-step curve stored at its change points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    /// `(step, error)` pairs; the error holds from `step` until the next entry.
    /// The first entry is `(0, initial error)`.
    pub points: Vec<(u64, f64)>,
    pub last_step: u64,
}

impl ErrorCurve {
    pub fn at(&self, step: u64) -> f64 {
        let idx = self.points.partition_point(|&(s, _)| s <= step);
        self.points[idx.saturating_sub(1)].1
    }

    pub fn dense(&self) -> Vec<f64> {
        (0..=self.last_step).map(|s| self.at(s)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyOutcome {
    pub policy: String,
    pub makespan: Option<u64>,
    pub resets: u64,
    pub curve: ErrorCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdReport {
    pub sigmas: Vec<f64>,
    pub chunks: Vec<ChunkSpec>,
    pub outcomes: Vec<PolicyOutcome>,
}

impl SvdReport {
    pub fn outcome(&self, kind: PolicyKind) -> Option<&PolicyOutcome> {
        self.outcomes.iter().find(|o| o.policy == kind.name())
    }

    /// Longest horizon over all curves.
    pub fn horizon(&self) -> u64 {
        self.outcomes.iter().map(|o| o.curve.last_step).max().unwrap_or(0)
    }
}

pub fn run_svd_experiment(
    instance: &SvdInstance,
    policies: &[Policy],
    config: &EngineConfig,
) -> Result<SvdReport> {
    if policies.is_empty() {
        return Err(Error::Config("no policies given".into()));
    }
    let chunks = chunks_from_svd(instance)?;
    let config = config.clone().summary_only();
    let mut outcomes = Vec::with_capacity(policies.len());
    for &policy in policies {
        let trace = run(&chunks, policy, &config)?;
        let mut events: Vec<(u64, ChunkId)> = trace.completions.iter().map(|(&id, &s)| (s, id)).collect();
        events.sort();

        let mut done = BTreeSet::new();
        let mut points = vec![(0, reconstruction_error(instance, &done)?)];
        for group in events.chunk_by(|a, b| a.0 == b.0) {
            for &(_, id) in group {
                done.insert(id.0 as usize);
            }
            points.push((group[0].0, reconstruction_error(instance, &done)?));
        }
        outcomes.push(PolicyOutcome {
            policy: policy.kind.name().to_owned(),
            makespan: trace.makespan,
            resets: trace.resets,
            curve: ErrorCurve {
                points,
                last_step: trace.steps_run,
            },
        });
    }
    Ok(SvdReport {
        sigmas: instance.sigmas(),
        chunks,
        outcomes,
    })
}

/// Sign changes of `a - b` over steps `0..=horizon`, ignoring steps where
/// the curves coincide.
pub fn count_crossings(a: &ErrorCurve, b: &ErrorCurve, horizon: u64) -> usize {
    let mut last = 0i8;
    let mut crossings = 0;
    let mut steps: Vec<u64> = a.points.iter().chain(&b.points).map(|p| p.0).filter(|&s| s <= horizon).collect();
    steps.sort_unstable();
    steps.dedup();
    for s in steps {
        let d = a.at(s) - b.at(s);
        let sign = if d > 0.0 {
            1
        } else if d < 0.0 {
            -1
        } else {
            0
        };
        if sign != 0 {
            if last != 0 && sign != last {
                crossings += 1;
            }
            last = sign;
        }
    }
    crossings
}

pub const FIXTURE_SIZE: usize = 64;

/// The shipped 64x64 test image: an 8x8-cell checkerboard over a smooth
/// low-rank gradient, quantized to 8 bits.
pub fn fixture_image() -> GrayImage {
    let n = FIXTURE_SIZE;
    let mut pixels = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let g = i as f64 / (n - 1) as f64;
            let h = j as f64 / (n - 1) as f64;
            let checker = if (i / 8 + j / 8) % 2 == 0 { 1.0 } else { -1.0 };
            let v = 110.0 + 45.0 * checker + 50.0 * g * h + 20.0 * (PI * g).sin() * (2.0 * PI * h).cos();
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage {
        width: n,
        height: n,
        pixels,
    }
}
