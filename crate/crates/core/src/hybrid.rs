//! Reactive/deliberative control layered on the transfer engine.
//!
//! Chunks with importance at or above a threshold are critical and drive a
//! first-match look-up table. Every delivered value also feeds a long-term
//! model, whose override rules may replace the reactive action. `eta` sets
//! how many steps the controller waits between actions: `eta = 1` acts every
//! step, `eta = N` acts once all information has arrived.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::{run, EngineConfig, Trace};
use crate::error::{domain, Error, Result};
use crate::model::{ChunkId, ChunkSpec};
use crate::policy::{Policy, PolicyKind};

/// Refers to a chunk by numeric id or by tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChunkRef {
    Id(u32),
    Tag(String),
}

impl ChunkRef {
    /// The id this reference names among `specs`; a tag resolves to the
    /// first chunk carrying it.
    pub fn resolve(&self, specs: &[ChunkSpec]) -> Option<ChunkId> {
        match self {
            ChunkRef::Id(id) => specs.iter().find(|s| s.id.0 == *id).map(|s| s.id),
            ChunkRef::Tag(tag) => specs.iter().find(|s| s.tag.as_deref() == Some(tag)).map(|s| s.id),
        }
    }
}

impl fmt::Display for ChunkRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChunkRef::Id(id) => write!(f, "#{id}"),
            ChunkRef::Tag(tag) => f.write_str(tag),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cmp {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
}

/// `value <op> constant`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Predicate {
    pub op: Cmp,
    pub value: f64,
}

impl Predicate {
    pub fn new(op: Cmp, value: f64) -> Self {
        Predicate { op, value }
    }

    pub fn eval(&self, x: f64) -> bool {
        match self.op {
            Cmp::Lt => x < self.value,
            Cmp::Le => x <= self.value,
            Cmp::Gt => x > self.value,
            Cmp::Ge => x >= self.value,
            Cmp::Eq => x == self.value,
            Cmp::Ne => x != self.value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LookupRule {
    pub chunk: ChunkRef,
    #[serde(rename = "when")]
    pub predicate: Predicate,
    pub action: String,
}

/// Aggregate of a chunk's history that an override rule inspects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stat {
    Count,
    Mean,
    Last,
    LastChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideRule {
    pub chunk: ChunkRef,
    pub stat: Stat,
    #[serde(rename = "when")]
    pub predicate: Predicate,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridConfig {
    pub eta: u64,
    #[serde(default)]
    pub importance_threshold: f64,
    #[serde(default)]
    pub lookup_table: Vec<LookupRule>,
    #[serde(default)]
    pub override_rules: Vec<OverrideRule>,
    #[serde(default)]
    pub change_boost: f64,
}

impl HybridConfig {
    pub fn new(eta: u64) -> Self {
        HybridConfig {
            eta,
            importance_threshold: 0.0,
            lookup_table: Vec::new(),
            override_rules: Vec::new(),
            change_boost: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eta == 0 {
            return Err(domain("hybrid.eta", 0.0, "integer >= 1"));
        }
        if !(self.importance_threshold.is_finite() && self.importance_threshold >= 0.0) {
            return Err(domain("hybrid.importance_threshold", self.importance_threshold, "[0, inf)"));
        }
        if !(self.change_boost.is_finite() && self.change_boost >= 0.0) {
            return Err(domain("hybrid.change_boost", self.change_boost, "[0, inf)"));
        }
        let constants = self
            .lookup_table
            .iter()
            .map(|r| r.predicate.value)
            .chain(self.override_rules.iter().map(|r| r.predicate.value));
        for v in constants {
            if !v.is_finite() {
                return Err(Error::Config(format!("rule threshold {v} is not finite")));
            }
        }
        Ok(())
    }
}

/// Splits ids into `(critical, routine)` by `importance >= threshold`.
pub fn classify(specs: &[ChunkSpec], threshold: f64) -> (Vec<ChunkId>, Vec<ChunkId>) {
    let (c, r): (Vec<&ChunkSpec>, Vec<&ChunkSpec>) = specs.iter().partition(|s| s.importance >= threshold);
    (c.iter().map(|s| s.id).collect(), r.iter().map(|s| s.id).collect())
}

/// First rule whose chunk has a value satisfying its predicate. Rules
/// naming chunks without a value are skipped.
pub fn reactive_step(values: &BTreeMap<ChunkId, f64>, table: &[LookupRule], specs: &[ChunkSpec]) -> Option<String> {
    for rule in table {
        let value = rule.chunk.resolve(specs).and_then(|id| values.get(&id));
        match value {
            Some(&v) if rule.predicate.eval(v) => return Some(rule.action.clone()),
            Some(_) => {}
            None => log::debug!("look-up rule on {} skipped: no value", rule.chunk),
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionPoint {
    pub step: u64,
    /// Chunks completed by `step`.
    pub basis: Vec<ChunkId>,
}

/// Action points at `eta, 2 eta, ...` up to `N`, where `N` is the makespan
/// (or the trace length when truncated); the last point is always at `N`.
pub fn hybrid_schedule(trace: &Trace, eta: u64) -> Result<Vec<ActionPoint>> {
    if eta == 0 {
        return Err(domain("eta", 0.0, "integer >= 1"));
    }
    let n = trace.makespan.unwrap_or(trace.steps_run);
    if eta > n {
        log::warn!("eta {eta} exceeds N = {n}; acting once at step {n}");
    }
    let mut steps: Vec<u64> = (1..=n / eta).map(|k| k * eta).collect();
    if steps.last() != Some(&n) {
        steps.push(n);
    }
    Ok(steps
        .into_iter()
        .map(|step| ActionPoint {
            step,
            basis: trace
                .completions
                .iter()
                .filter(|&(_, &s)| s <= step)
                .map(|(&id, _)| id)
                .collect(),
        })
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChunkStats {
    pub count: u64,
    pub mean: f64,
    pub last: f64,
    /// Value before `last`, if any.
    pub previous: Option<f64>,
    /// `|last - previous|`, zero until two values were seen.
    pub last_change: f64,
}

impl ChunkStats {
    pub fn stat(&self, stat: Stat) -> f64 {
        match stat {
            Stat::Count => self.count as f64,
            Stat::Mean => self.mean,
            Stat::Last => self.last,
            Stat::LastChange => self.last_change,
        }
    }

    /// `last_change` relative to the previous value (absolute when the
    /// previous value was zero).
    pub fn relative_change(&self) -> f64 {
        match self.previous {
            Some(p) if p != 0.0 => self.last_change / p.abs(),
            _ => self.last_change,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub chunk: ChunkId,
    pub value: f64,
    pub step: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LongTermModel {
    pub chunks: BTreeMap<ChunkId, ChunkStats>,
    /// Step of the most recent completion folded in.
    pub step: u64,
}

impl LongTermModel {
    pub fn observe(&mut self, c: Completion) {
        let s = self.chunks.entry(c.chunk).or_default();
        if s.count > 0 {
            s.previous = Some(s.last);
            s.last_change = (c.value - s.last).abs();
        }
        s.count += 1;
        s.mean += (c.value - s.mean) / s.count as f64;
        s.last = c.value;
        self.step = self.step.max(c.step);
    }

    pub fn stats(&self, id: ChunkId) -> Option<&ChunkStats> {
        self.chunks.get(&id)
    }
}

pub fn update_model(model: &LongTermModel, completion: Completion) -> LongTermModel {
    let mut m = model.clone();
    m.observe(completion);
    m
}

/// The first override rule that holds replaces `reactive`.
pub fn resolve_action(
    reactive: Option<String>,
    model: &LongTermModel,
    rules: &[OverrideRule],
    specs: &[ChunkSpec],
) -> Option<String> {
    for rule in rules {
        let stats = rule.chunk.resolve(specs).and_then(|id| model.stats(id));
        if let Some(s) = stats {
            if rule.predicate.eval(s.stat(rule.stat)) {
                return Some(rule.action.clone());
            }
        }
    }
    reactive
}

/// `importance * (1 + change_boost * relative change)`.
pub fn effective_importance(spec: &ChunkSpec, model: &LongTermModel, change_boost: f64) -> f64 {
    let rel = model.stats(spec.id).map_or(0.0, ChunkStats::relative_change);
    spec.importance * (1.0 + change_boost * rel)
}

/// Values delivered by one chunk, one per episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayloadSeries {
    pub chunk: ChunkRef,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub episode: usize,
    pub step: u64,
    pub basis: usize,
    pub reactive: Option<String>,
    pub resolved: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridReport {
    pub actions: Vec<ActionRecord>,
    /// Full-gather step count of each episode.
    pub n_per_episode: Vec<u64>,
    pub model: LongTermModel,
}

impl HybridReport {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "episode,step,basis,reactive,resolved")?;
        for a in &self.actions {
            writeln!(
                w,
                "{},{},{},{},{}",
                a.episode,
                a.step,
                a.basis,
                a.reactive.as_deref().unwrap_or(""),
                a.resolved.as_deref().unwrap_or("")
            )?;
        }
        Ok(())
    }
}

/// Runs one transfer per episode and acts at the `eta` schedule.
///
/// Before each episode the chunks' importances are replaced by their
/// effective importances under the model so far, and the transfer uses the
/// importance-extended Leaf Cutter at the configured threshold unless
/// `policy` says otherwise. At each action point the model first absorbs
/// the completions up to that step; the look-up table then sees the values
/// of completed critical chunks, and the override rules see the model.
pub fn run_hybrid(
    specs: &[ChunkSpec],
    payloads: &[PayloadSeries],
    hybrid: &HybridConfig,
    policy: Option<Policy>,
    engine: &EngineConfig,
) -> Result<HybridReport> {
    hybrid.validate()?;
    let mut values: BTreeMap<ChunkId, &[f64]> = BTreeMap::new();
    for p in payloads {
        let id = p
            .chunk
            .resolve(specs)
            .ok_or_else(|| Error::Config(format!("payload names unknown chunk {}", p.chunk)))?;
        values.insert(id, &p.values);
    }
    let episodes = values.values().map(|v| v.len()).max().unwrap_or(0);
    let engine = engine.clone().summary_only();
    let mut model = LongTermModel::default();
    let mut actions = Vec::new();
    let mut n_per_episode = Vec::with_capacity(episodes);

    for ep in 0..episodes {
        let current: Vec<ChunkSpec> = specs
            .iter()
            .map(|s| {
                let mut s = s.clone();
                s.importance = effective_importance(&s, &model, hybrid.change_boost);
                s
            })
            .collect();
        let (critical, _) = classify(&current, hybrid.importance_threshold);
        let critical: BTreeSet<ChunkId> = critical.into_iter().collect();
        let policy = policy.unwrap_or_else(|| {
            PolicyKind::ImportanceLeafCutter {
                threshold: hybrid.importance_threshold,
            }
            .into()
        });
        let trace = run(&current, policy, &engine)?;
        n_per_episode.push(trace.makespan.unwrap_or(trace.steps_run));

        let mut events: Vec<(u64, ChunkId)> = trace.completions.iter().map(|(&id, &s)| (s, id)).collect();
        events.sort();
        let payload = |id: &ChunkId| values.get(id).and_then(|v| v.get(ep)).copied();
        let mut next = 0;
        for point in hybrid_schedule(&trace, hybrid.eta)? {
            while next < events.len() && events[next].0 <= point.step {
                let (step, id) = events[next];
                if let Some(value) = payload(&id) {
                    model.observe(Completion { chunk: id, value, step });
                }
                next += 1;
            }
            let seen: BTreeMap<ChunkId, f64> = point
                .basis
                .iter()
                .filter(|id| critical.contains(id))
                .filter_map(|id| payload(id).map(|v| (*id, v)))
                .collect();
            let reactive = reactive_step(&seen, &hybrid.lookup_table, specs);
            let resolved = resolve_action(reactive.clone(), &model, &hybrid.override_rules, specs);
            actions.push(ActionRecord {
                episode: ep,
                step: point.step,
                basis: point.basis.len(),
                reactive,
                resolved,
            });
        }
    }
    Ok(HybridReport {
        actions,
        n_per_episode,
        model,
    })
}
