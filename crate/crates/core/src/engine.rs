//! Fixed-step simulation loop.
//!
//! Each step: apply parameter schedules, ask the policy for an allocation,
//! advance every chunk by one Euler step, apply freshness resets (when
//! enabled), then record. The loop stops when every chunk is complete or
//! `max_steps` is reached.

use std::collections::{BTreeMap, HashSet};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{self, ChunkId, ChunkSpec, ChunkState, R_ON_MAX};
use crate::policy::{Allocation, Policy};
use crate::rng::SplitMix64;

/// A value that changes at given step indices and holds in between.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule(pub Vec<Breakpoint>);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Breakpoint {
    /// First step (1-based) at which `value` applies.
    pub from_step: u64,
    pub value: f64,
}

impl Schedule {
    pub fn new(mut points: Vec<Breakpoint>) -> Self {
        points.sort_by_key(|b| b.from_step);
        Schedule(points)
    }

    /// Value in force at `step`, or `None` before the first breakpoint.
    pub fn value_at(&self, step: u64) -> Option<f64> {
        let idx = self.0.partition_point(|b| b.from_step <= step);
        idx.checked_sub(1).map(|i| self.0[i].value)
    }

    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().map(|b| b.value)
    }
}

/// Piecewise-constant overrides of the total bandwidth and per-chunk
/// parameters, keyed by step index.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedules {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_total: Option<Schedule>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub beta: BTreeMap<ChunkId, Schedule>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub r_on: BTreeMap<ChunkId, Schedule>,
}

impl Schedules {
    pub fn is_empty(&self) -> bool {
        self.v_total.is_none() && self.beta.is_empty() && self.r_on.is_empty()
    }
}

/// What a freshness reset does besides discarding progress.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ResetMode {
    /// Restart from `x = 0` with the same richness.
    #[default]
    Progress,
    /// Restart from `x = 0` with a new `r_on` drawn uniformly from `[lo, hi)`.
    Resample { lo: f64, hi: f64 },
}

/// How much of the run is kept in the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recording {
    /// Every step's allocation and states.
    #[default]
    Full,
    /// Completions, makespan and counters only.
    Summary,
}

fn default_dt() -> f64 {
    1.0
}

fn default_max_steps() -> u64 {
    1_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    /// Total processor bandwidth.
    pub v_total: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    #[serde(default)]
    pub freshness_enabled: bool,
    #[serde(default)]
    pub reset_mode: ResetMode,
    #[serde(default)]
    pub schedules: Schedules,
    #[serde(default)]
    pub recording: Recording,
    /// Seeds the resample reset mode.
    #[serde(default)]
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            v_total: 1.0,
            dt: 1.0,
            max_steps: default_max_steps(),
            freshness_enabled: false,
            reset_mode: ResetMode::Progress,
            schedules: Schedules::default(),
            recording: Recording::Full,
            seed: 0,
        }
    }
}

impl EngineConfig {
    pub fn new(v_total: f64, dt: f64) -> Self {
        EngineConfig {
            v_total,
            dt,
            ..Self::default()
        }
    }

    pub fn with_max_steps(mut self, max_steps: u64) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn with_freshness(mut self, enabled: bool) -> Self {
        self.freshness_enabled = enabled;
        self
    }

    pub fn summary_only(mut self) -> Self {
        self.recording = Recording::Summary;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("v_total", self.v_total)?;
        check_positive("dt", self.dt)?;
        if self.max_steps == 0 {
            return Err(domain("max_steps", 0.0, ">= 1"));
        }
        if let Some(s) = &self.schedules.v_total {
            for v in s.values() {
                check_positive("schedules.v_total", v)?;
            }
        }
        for s in self.schedules.beta.values() {
            for v in s.values() {
                check_positive("schedules.beta", v)?;
            }
        }
        for s in self.schedules.r_on.values() {
            for v in s.values() {
                if !(v > 0.0 && v <= R_ON_MAX) {
                    return Err(domain("schedules.r_on", v, "(0, 100]"));
                }
            }
        }
        if let ResetMode::Resample { lo, hi } = self.reset_mode {
            if !(lo > 0.0 && lo <= hi && hi <= R_ON_MAX) {
                return Err(Error::Config(format!(
                    "resample range [{lo}, {hi}) must satisfy 0 < lo <= hi <= 100"
                )));
            }
        }
        Ok(())
    }

    fn check_against(&self, specs: &[ChunkSpec]) -> Result<()> {
        let by_id: BTreeMap<ChunkId, &ChunkSpec> = specs.iter().map(|s| (s.id, s)).collect();
        for id in self.schedules.beta.keys().chain(self.schedules.r_on.keys()) {
            if !by_id.contains_key(id) {
                return Err(Error::Config(format!("schedule for unknown chunk {id}")));
            }
        }
        for (id, sched) in &self.schedules.r_on {
            let spec = by_id[id];
            if let Some(v) = sched.values().find(|&v| v >= spec.r_off) {
                return Err(Error::Config(format!(
                    "r_on schedule value {v} for chunk {id} is not below r_off {}",
                    spec.r_off
                )));
            }
        }
        if let ResetMode::Resample { hi, .. } = self.reset_mode {
            if let Some(s) = specs.iter().find(|s| s.r_off <= hi) {
                return Err(Error::Config(format!(
                    "chunk {} has r_off {} not above the resample ceiling {hi}",
                    s.id, s.r_off
                )));
            }
        }
        Ok(())
    }
}

fn check_positive(what: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(domain(what, v, "finite and > 0"))
    }
}

/// One recorded step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: u64,
    pub allocation: Allocation,
    /// States after the step, aligned with `Trace::ids`.
    pub states: Vec<ChunkState>,
    /// Total information influx `sum(v_j / M_j)`.
    pub influx: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub ids: Vec<ChunkId>,
    pub dt: f64,
    /// Empty under [`Recording::Summary`].
    pub steps: Vec<StepRecord>,
    /// Number of steps executed.
    pub steps_run: u64,
    /// Step index at which each chunk completed.
    pub completions: BTreeMap<ChunkId, u64>,
    /// Steps until every chunk completed; `None` when truncated.
    pub makespan: Option<u64>,
    pub resets: u64,
    /// Resets that discarded a non-zero amount of progress.
    pub lost_progress_resets: u64,
    pub truncated: bool,
}

/// Compact JSON view of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub completions: BTreeMap<ChunkId, u64>,
    pub makespan: Option<u64>,
    pub resets: u64,
    pub lost_progress_resets: u64,
    pub truncated: bool,
    pub steps_run: u64,
    pub dt: f64,
}

impl Trace {
    /// Makespan in time units.
    pub fn makespan_time(&self) -> Option<f64> {
        self.makespan.map(|m| m as f64 * self.dt)
    }

    pub fn summary(&self) -> TraceSummary {
        TraceSummary {
            completions: self.completions.clone(),
            makespan: self.makespan,
            resets: self.resets,
            lost_progress_resets: self.lost_progress_resets,
            truncated: self.truncated,
            steps_run: self.steps_run,
            dt: self.dt,
        }
    }

    /// Writes `step,chunk_id,share,x,age,completed`, one row per step per
    /// chunk. Requires a fully recorded trace.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "step,chunk_id,share,x,age,completed")?;
        for rec in &self.steps {
            for (id, st) in self.ids.iter().zip(&rec.states) {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    rec.step,
                    id,
                    rec.allocation.share(*id),
                    st.x,
                    st.age,
                    u8::from(st.completed)
                )?;
            }
        }
        Ok(())
    }
}

/// Runs `policy` over `specs` until all chunks complete or `max_steps`.
pub fn run(specs: &[ChunkSpec], policy: impl Into<Policy>, config: &EngineConfig) -> Result<Trace> {
    let policy = policy.into();
    if specs.is_empty() {
        return Err(Error::Config("at least one chunk is required".into()));
    }
    let mut seen = HashSet::with_capacity(specs.len());
    for s in specs {
        s.validate()?;
        if !seen.insert(s.id) {
            return Err(Error::DuplicateId(s.id));
        }
    }
    config.validate()?;
    config.check_against(specs)?;

    let n = specs.len();
    let mut specs = specs.to_vec();
    let ids: Vec<ChunkId> = specs.iter().map(|s| s.id).collect();
    let index: BTreeMap<ChunkId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut states = vec![ChunkState::fresh(); n];
    let mut shares = vec![0.0; n];
    let mut rng = SplitMix64::new(config.seed);
    let record = config.recording == Recording::Full;
    let sched = &config.schedules;

    let mut trace = Trace {
        ids: ids.clone(),
        dt: config.dt,
        steps: Vec::new(),
        steps_run: 0,
        completions: BTreeMap::new(),
        makespan: None,
        resets: 0,
        lost_progress_resets: 0,
        truncated: false,
    };
    let mut remaining = n;

    for step in 1..=config.max_steps {
        let v_total = sched
            .v_total
            .as_ref()
            .and_then(|s| s.value_at(step))
            .unwrap_or(config.v_total);
        for (id, s) in &sched.beta {
            if let Some(v) = s.value_at(step) {
                specs[index[id]].beta = v;
            }
        }
        for (id, s) in &sched.r_on {
            if let Some(v) = s.value_at(step) {
                specs[index[id]].r_on = v;
            }
        }

        policy.fill(&specs, &states, v_total, &mut shares);

        let mut influx = 0.0;
        for j in 0..n {
            if states[j].completed {
                continue;
            }
            let v = shares[j];
            if v > 0.0 {
                influx += v / specs[j].resistance(states[j].x);
            }
            states[j] = model::step(states[j], &specs[j], v, config.dt);
            if states[j].completed {
                trace.completions.insert(ids[j], step);
                remaining -= 1;
            }
        }

        if config.freshness_enabled {
            for j in 0..n {
                let before = states[j];
                let after = model::apply_freshness_reset(before, &specs[j]);
                if after.reset_count != before.reset_count {
                    trace.resets += 1;
                    if before.x > 0.0 {
                        trace.lost_progress_resets += 1;
                    }
                    if let ResetMode::Resample { lo, hi } = config.reset_mode {
                        specs[j].r_on = rng.uniform(lo, hi).max(f64::MIN_POSITIVE);
                    }
                }
                states[j] = after;
            }
        }

        trace.steps_run = step;
        if record {
            trace.steps.push(StepRecord {
                step,
                allocation: Allocation::from_dense(&specs, &shares, v_total),
                states: states.clone(),
                influx,
            });
        }
        if remaining == 0 {
            trace.makespan = Some(step);
            return Ok(trace);
        }
    }
    trace.truncated = true;
    Ok(trace)
}

/// Policy-independent continuum makespan with no resets:
/// `sum_j (r_on_j + (r_off_j - r_on_j) / 2) / (beta_j * v_total)`.
pub fn makespan_oracle(specs: &[ChunkSpec], v_total: f64) -> f64 {
    specs.iter().map(ChunkSpec::transfer_work).sum::<f64>() / v_total
}

/// Fraction of chunks complete after each executed step.
pub fn completion_curve(trace: &Trace) -> Vec<(u64, f64)> {
    let n = trace.ids.len() as f64;
    let mut per_step: BTreeMap<u64, usize> = BTreeMap::new();
    for &s in trace.completions.values() {
        *per_step.entry(s).or_default() += 1;
    }
    let mut done = 0usize;
    (1..=trace.steps_run)
        .map(|s| {
            done += per_step.get(&s).copied().unwrap_or(0);
            (s, done as f64 / n)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyKind;
    use approx::assert_relative_eq;

    fn one(r_on: f64, r_off: f64, beta: f64) -> ChunkSpec {
        ChunkSpec::try_from((0, r_on, r_off, beta)).unwrap()
    }

    #[test]
    fn single_chunk_matches_oracle() {
        let specs = [one(10.0, 100.0, 1.0)];
        let cfg = EngineConfig::new(1.0, 1e-3).summary_only();
        for kind in PolicyKind::CLASSIC {
            let t = run(&specs, kind, &cfg).unwrap();
            let sim = t.makespan_time().unwrap();
            assert!((sim - 55.0).abs() / 55.0 < 0.005, "{kind}: {sim}");
        }
    }

    #[test]
    fn makespan_oracle_examples() {
        let a = one(10.0, 100.0, 1.0);
        let b = ChunkSpec { id: ChunkId(1), ..a.clone() };
        assert_relative_eq!(makespan_oracle(std::slice::from_ref(&a), 1.0), 55.0);
        assert_relative_eq!(makespan_oracle(&[a.clone(), b], 1.0), 110.0);
        let fast = a.clone().with_beta(2.0);
        assert_relative_eq!(makespan_oracle(&[fast], 1.0), 27.5);
    }

    #[test]
    fn max_steps_one_gives_one_step() {
        let specs = [one(10.0, 100.0, 1.0)];
        let cfg = EngineConfig::new(1.0, 1.0).with_max_steps(1);
        let t = run(&specs, PolicyKind::Sequential, &cfg).unwrap();
        assert_eq!(t.steps.len(), 1);
        assert!(t.truncated);
        assert_eq!(t.makespan, None);
        let zero = EngineConfig::new(1.0, 1.0).with_max_steps(0);
        assert!(run(&specs, PolicyKind::Sequential, &zero).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let specs = [one(10.0, 100.0, 1.0), one(20.0, 100.0, 1.0)];
        let err = run(&specs, PolicyKind::AllSites, &EngineConfig::default()).unwrap_err();
        assert_eq!(err, Error::DuplicateId(ChunkId(0)));
        assert!(run(&[], PolicyKind::AllSites, &EngineConfig::default()).is_err());
    }

    #[test]
    fn completion_curve_shapes() {
        let specs = [one(10.0, 100.0, 1.0)];
        let t = run(&specs, PolicyKind::Sequential, &EngineConfig::default()).unwrap();
        let curve = completion_curve(&t);
        let m = t.makespan.unwrap();
        assert_eq!(curve.len() as u64, m);
        assert!(curve[..curve.len() - 1].iter().all(|&(_, f)| f == 0.0));
        assert_eq!(curve.last().unwrap().1, 1.0);

        let cut = EngineConfig::default().with_max_steps(m - 1);
        let t = run(&specs, PolicyKind::Sequential, &cut).unwrap();
        assert!(completion_curve(&t).last().unwrap().1 < 1.0);
    }

    #[test]
    fn sequential_equal_chunks_complete_evenly() {
        let specs: Vec<_> = (0..4)
            .map(|i| ChunkSpec::try_from((i, 10.0, 100.0, 1.0)).unwrap())
            .collect();
        let t = run(&specs, PolicyKind::Sequential, &EngineConfig::new(1.0, 0.01).summary_only())
            .unwrap();
        let steps: Vec<u64> = t.completions.values().copied().collect();
        let gaps: Vec<u64> = steps.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(gaps.iter().all(|&g| g == gaps[0]), "{gaps:?}");
        assert_relative_eq!(steps[0] as f64 * 0.01, 55.0, max_relative = 1e-3);
    }

    #[test]
    fn schedules_apply_from_their_step() {
        let s = Schedule::new(vec![
            Breakpoint { from_step: 10, value: 2.0 },
            Breakpoint { from_step: 3, value: 1.0 },
        ]);
        assert_eq!(s.value_at(2), None);
        assert_eq!(s.value_at(3), Some(1.0));
        assert_eq!(s.value_at(9), Some(1.0));
        assert_eq!(s.value_at(10), Some(2.0));
        assert_eq!(s.value_at(u64::MAX), Some(2.0));

        // doubling the bandwidth from step 1 halves the makespan
        let specs = [one(10.0, 100.0, 1.0)];
        let mut cfg = EngineConfig::new(1.0, 0.01).summary_only();
        let base = run(&specs, PolicyKind::Sequential, &cfg).unwrap().makespan.unwrap();
        cfg.schedules.v_total = Some(Schedule::new(vec![Breakpoint { from_step: 1, value: 2.0 }]));
        let fast = run(&specs, PolicyKind::Sequential, &cfg).unwrap().makespan.unwrap();
        assert!((fast as f64 - base as f64 / 2.0).abs() <= 1.0, "{base} {fast}");
    }

    #[test]
    fn schedule_bounds_are_checked() {
        let specs = [one(10.0, 100.0, 1.0)];
        let mut cfg = EngineConfig::default();
        cfg.schedules
            .r_on
            .insert(ChunkId(0), Schedule::new(vec![Breakpoint { from_step: 1, value: 150.0 }]));
        assert!(run(&specs, PolicyKind::Sequential, &cfg).is_err());

        let mut cfg = EngineConfig::default();
        cfg.schedules
            .beta
            .insert(ChunkId(7), Schedule::new(vec![Breakpoint { from_step: 1, value: 1.0 }]));
        assert!(run(&specs, PolicyKind::Sequential, &cfg).is_err());
    }

    #[test]
    fn freshness_discards_preempted_progress() {
        // r_on of chunk 0 rises above chunk 1 at step 5, so Sequential
        // switches away and chunk 0 goes stale.
        let specs = [
            one(10.0, 200.0, 1.0).with_window(3),
            ChunkSpec::try_from((1, 20.0, 200.0, 1.0)).unwrap().with_window(3),
        ];
        let mut cfg = EngineConfig::new(1.0, 1.0).with_freshness(true);
        cfg.schedules
            .r_on
            .insert(ChunkId(0), Schedule::new(vec![Breakpoint { from_step: 5, value: 30.0 }]));
        let t = run(&specs, PolicyKind::Sequential, &cfg).unwrap();
        assert!(t.lost_progress_resets >= 1);
        assert!(t.makespan.is_some());
    }

    #[test]
    fn resample_mode_redraws_r_on() {
        let specs: Vec<_> = (0..3)
            .map(|i| ChunkSpec::try_from((i, 50.0, 200.0, 1.0)).unwrap().with_window(2))
            .collect();
        let mut cfg = EngineConfig::new(1.0, 1.0).with_freshness(true);
        cfg.reset_mode = ResetMode::Resample { lo: 1.0, hi: 100.0 };
        cfg.seed = 11;
        let a = run(&specs, PolicyKind::Sequential, &cfg).unwrap();
        let b = run(&specs, PolicyKind::Sequential, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.resets > 0);

        cfg.reset_mode = ResetMode::Resample { lo: 1.0, hi: 250.0 };
        assert!(run(&specs, PolicyKind::Sequential, &cfg).is_err());
    }

    #[test]
    fn csv_layout() {
        let specs = [one(10.0, 100.0, 1.0)];
        let t = run(&specs, PolicyKind::Sequential, &EngineConfig::new(10.0, 1.0)).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("step,chunk_id,share,x,age,completed"));
        assert_eq!(lines.next(), Some("1,0,10,1,0,1"));
    }
}
