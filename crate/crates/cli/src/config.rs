//! Run configuration: JSON schema, parsing and validation.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use memsched::experiments::{ChunkMap, ChunkTemplate, Distribution, DominanceSpec, ScalingSpec};
use memsched::hybrid::{HybridConfig, PayloadSeries};
use memsched::{ChunkSpec, EngineConfig, Error, Policy, PolicyKind, Weighting};
use serde::{Deserialize, Serialize};

/// One problem found in a config, located by JSON path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(v: &[Violation]) -> String {
    let lines: Vec<String> = v.iter().map(|x| format!("  {x}")).collect();
    format!("invalid config:\n{}", lines.join("\n"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub name: String,
    #[serde(default)]
    pub threshold: f64,
    #[serde(default)]
    pub weighting: Weighting,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            name: "all-sites".into(),
            threshold: 0.0,
            weighting: Weighting::Series,
        }
    }
}

impl PolicyConfig {
    pub fn resolve(&self) -> Result<Policy, Error> {
        Ok(Policy::new(PolicyKind::from_name(&self.name, self.threshold)?, self.weighting))
    }
}

/// Generated chunks: `n` draws from `distribution` over `template`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub n: usize,
    pub distribution: Distribution,
    #[serde(default)]
    pub template: ChunkTemplate,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvdBlock {
    /// PGM image; the built-in 64x64 fixture when neither source is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<PathBuf>,
    /// One singular value per line (an optional `sigma` header is allowed).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum_csv: Option<PathBuf>,
    #[serde(default)]
    pub chunk_map: ChunkMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloBlock {
    pub n_range: Vec<usize>,
    pub distributions: Vec<Distribution>,
    pub trials: usize,
    #[serde(default)]
    pub template: ChunkTemplate,
    #[serde(default = "both_modes")]
    pub freshness_modes: Vec<bool>,
}

fn both_modes() -> Vec<bool> {
    vec![true, false]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    Svd(SvdBlock),
    MonteCarlo(MonteCarloBlock),
    Scaling(ScalingSpec),
    Dominance(DominanceSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    /// Write the per-step trace CSV for `simulate`.
    #[serde(default = "yes")]
    pub trace_csv: bool,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn yes() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_out_dir(),
            trace_csv: true,
        }
    }
}

fn classic_names() -> Vec<String> {
    PolicyKind::CLASSIC.iter().map(|k| k.name().to_owned()).collect()
}

/// The whole run description. Nested `seed` fields are replaced by the
/// top-level `seed` when the config is resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub chunks: Vec<ChunkSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Generator>,
    #[serde(default)]
    pub policy: PolicyConfig,
    /// Policies compared by the experiment subcommands.
    #[serde(default = "classic_names")]
    pub policies: Vec<String>,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hybrid: Option<HybridConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub payloads: Vec<PayloadSeries>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Parses and validates the file at `path`. Relative paths inside the
/// config are resolved against the config's directory.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_owned(),
        source,
    })?;
    let mut cfg = parse_str(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    if let Some(Experiment::Svd(svd)) = &mut cfg.experiment {
        for p in [&mut svd.image, &mut svd.spectrum_csv].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
    Ok(cfg)
}

pub fn parse_str(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        if inner.is_data() {
            ConfigError::Invalid(vec![Violation {
                path: e.path().to_string(),
                message: inner.to_string(),
            }])
        } else {
            ConfigError::Syntax {
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        }
    })?;
    let violations = cfg.violations();
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(violations))
    }
}

fn violation(path: impl Into<String>, err: Error) -> Violation {
    let path = path.into();
    match err {
        Error::Domain { what, value, expected } => Violation {
            path: if path.is_empty() { what.to_owned() } else { format!("{path}.{what}") },
            message: format!("{value} is out of range (expected {expected})"),
        },
        other => Violation {
            path,
            message: other.to_string(),
        },
    }
}

impl RunConfig {
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let mut ids = BTreeSet::new();
        for (i, c) in self.chunks.iter().enumerate() {
            if let Err(e) = c.validate() {
                v.push(violation(format!("chunks[{i}]"), e));
            }
            if !ids.insert(c.id) {
                v.push(Violation {
                    path: format!("chunks[{i}].id"),
                    message: format!("duplicate chunk id {}", c.id),
                });
            }
        }
        if let Some(g) = &self.generator {
            if !self.chunks.is_empty() {
                v.push(Violation {
                    path: "generator".into(),
                    message: "give either `chunks` or `generator`, not both".into(),
                });
            }
            if g.n == 0 {
                v.push(Violation {
                    path: "generator.n".into(),
                    message: "must be >= 1".into(),
                });
            }
            if let Err(e) = g.distribution.validate().and(g.template.validate()) {
                v.push(violation("generator", e));
            }
        }
        if let Err(e) = self.policy.resolve() {
            v.push(violation("policy", e));
        }
        for (i, name) in self.policies.iter().enumerate() {
            if let Err(e) = PolicyKind::from_name(name, self.policy.threshold) {
                v.push(violation(format!("policies[{i}]"), e));
            }
        }
        if self.policies.is_empty() {
            v.push(Violation {
                path: "policies".into(),
                message: "must name at least one policy".into(),
            });
        }
        if let Err(e) = self.engine.validate() {
            v.push(violation("engine", e));
        }
        if let Some(h) = &self.hybrid {
            if let Err(e) = h.validate() {
                // domain errors already name `hybrid.<field>`
                let path = if matches!(e, Error::Domain { .. }) { "" } else { "hybrid" };
                v.push(violation(path, e));
            }
        }
        match &self.experiment {
            Some(Experiment::Svd(s)) => {
                if let Err(e) = s.chunk_map.validate() {
                    v.push(violation("experiment.svd", e));
                }
                if s.image.is_some() && s.spectrum_csv.is_some() {
                    v.push(Violation {
                        path: "experiment.svd".into(),
                        message: "give either `image` or `spectrum_csv`, not both".into(),
                    });
                }
            }
            Some(Experiment::MonteCarlo(m)) => {
                if m.distributions.is_empty() {
                    v.push(Violation {
                        path: "experiment.monte-carlo.distributions".into(),
                        message: "must be nonempty".into(),
                    });
                }
                for (i, d) in m.distributions.iter().enumerate() {
                    if let Err(Error::Domain { what, value, expected }) = d.validate() {
                        v.push(Violation {
                            path: format!(
                                "experiment.monte-carlo.distributions[{i}].{}",
                                what.trim_start_matches("distribution.")
                            ),
                            message: format!("{value} is out of range (expected {expected})"),
                        });
                    } else if let Err(e) = mc_spec(m, d.clone(), self.seed).validate() {
                        v.push(violation("experiment.monte-carlo", e));
                    }
                }
            }
            Some(Experiment::Scaling(s)) => {
                if let Err(e) = s.validate() {
                    v.push(violation("experiment.scaling", e));
                }
            }
            Some(Experiment::Dominance(d)) => {
                if let Err(e) = d.validate() {
                    v.push(violation("experiment.dominance", e));
                }
            }
            None => {}
        }
        v
    }

    /// Applies command-line overrides and propagates the seed.
    pub fn resolve(mut self, seed: Option<u64>, out_dir: Option<PathBuf>, policy: Option<String>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(d) = out_dir {
            self.output.dir = d;
        }
        if let Some(p) = policy {
            self.policy.name = p.clone();
            self.policies = vec![p];
        }
        self.engine.seed = self.seed;
        match &mut self.experiment {
            Some(Experiment::Scaling(s)) => s.seed = self.seed,
            Some(Experiment::Dominance(d)) => d.seed = self.seed,
            _ => {}
        }
        self
    }

    pub fn resolved_policies(&self) -> Result<Vec<Policy>, Error> {
        self.policies
            .iter()
            .map(|n| Ok(Policy::new(PolicyKind::from_name(n, self.policy.threshold)?, self.policy.weighting)))
            .collect()
    }
}

pub fn mc_spec(block: &MonteCarloBlock, distribution: Distribution, seed: u64) -> memsched::experiments::MonteCarloSpec {
    memsched::experiments::MonteCarloSpec {
        n_range: block.n_range.clone(),
        distribution,
        trials: block.trials,
        seed,
        template: block.template.clone(),
        freshness_modes: block.freshness_modes.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn invalid(text: &str) -> Vec<Violation> {
        match parse_str(text) {
            Err(ConfigError::Invalid(v)) => v,
            other => panic!("expected violations, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config() {
        let cfg = parse_str(r#"{"chunks": [{"id": 0, "r_on": 10}], "policy": {"name": "sequential"}}"#).unwrap();
        assert_eq!(cfg.chunks[0].r_off, 200.0);
        assert_eq!(cfg.engine.v_total, 1.0);
    }

    #[test]
    fn r_on_bound_names_the_field() {
        let v = invalid(r#"{"chunks": [{"id": 0, "r_on": 150}]}"#);
        assert_eq!(v[0].path, "chunks[0].r_on");
        assert!(v[0].message.contains("(0, 100]"), "{}", v[0].message);
    }

    #[test]
    fn unknown_key_is_named() {
        let v = invalid(r#"{"polcy": {"name": "sequential"}}"#);
        assert!(v[0].message.contains("polcy"), "{:?}", v);
        let v = invalid(r#"{"chunks": [{"id": 0, "r_on": 1, "rn_off": 3}]}"#);
        assert_eq!(v[0].path, "chunks[0].rn_off");
        assert!(v[0].message.contains("rn_off"));
    }

    #[test]
    fn syntax_error_has_position() {
        match parse_str("{\n  \"seed\": ,\n}") {
            Err(ConfigError::Syntax { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn collects_several_violations() {
        let v = invalid(
            r#"{"chunks": [{"id": 0, "r_on": 0}, {"id": 0, "r_on": 5}], "engine": {"v_total": -1},
                "policy": {"name": "greedy"}}"#,
        );
        let paths: Vec<&str> = v.iter().map(|x| x.path.as_str()).collect();
        assert!(paths.contains(&"chunks[0].r_on"));
        assert!(paths.contains(&"chunks[1].id"));
        assert!(paths.contains(&"engine.v_total"));
        assert!(paths.contains(&"policy"));
    }

    #[test]
    fn seed_override_propagates() {
        let cfg = parse_str(r#"{"seed": 3, "experiment": {"dominance": {"n": 4, "distribution": {"kind": "constant", "value": 5}, "instances": 2, "seed": 99}}}"#)
            .unwrap()
            .resolve(Some(7), None, None);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.engine.seed, 7);
        match cfg.experiment {
            Some(Experiment::Dominance(d)) => assert_eq!(d.seed, 7),
            _ => unreachable!(),
        }
    }
}
