//! Subcommand bodies. Each returns its output files in memory; nothing
//! touches the disk until the whole run has succeeded.

use std::collections::BTreeMap;
use std::path::Path;

use memsched::experiments::{
    count_crossings, dominance, fixture_image, monte_carlo, run_svd_experiment, scaling_study, McTable,
    SvdInstance,
};
use memsched::hybrid::run_hybrid;
use memsched::rng::SplitMix64;
use memsched::{completion_curve, makespan_oracle, pgm, run, ChunkSpec, PolicyKind, Recording};
use serde::Serialize;
use serde_json::json;

use crate::config::{mc_spec, Experiment, RunConfig, SvdBlock};

#[derive(Debug, thiserror::Error)]
pub enum CmdError {
    /// The config is well-formed but does not fit the subcommand.
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Runtime(#[from] memsched::Error),
}

pub type Outputs = Vec<(String, Vec<u8>)>;

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory");
    buf
}

fn chunks(cfg: &RunConfig) -> Result<Vec<ChunkSpec>, CmdError> {
    if let Some(g) = &cfg.generator {
        let mut rng = SplitMix64::new(cfg.seed);
        return Ok(g.template.build(&g.distribution.sample(g.n, &mut rng))?);
    }
    if cfg.chunks.is_empty() {
        return Err(CmdError::Config("this subcommand needs `chunks` or `generator`".into()));
    }
    Ok(cfg.chunks.clone())
}

pub fn simulate(cfg: &RunConfig) -> Result<Outputs, CmdError> {
    let specs = chunks(cfg)?;
    let policy = cfg.policy.resolve()?;
    let trace = run(&specs, policy, &cfg.engine)?;
    let mut out = Vec::new();
    if cfg.output.trace_csv && cfg.engine.recording == Recording::Full {
        out.push(("trace.csv".to_owned(), csv_bytes(|w| trace.write_csv(w))));
    }
    let curve = csv_bytes(|w| {
        use std::io::Write;
        writeln!(w, "step,fraction_complete")?;
        for (s, f) in completion_curve(&trace) {
            writeln!(w, "{s},{f}")?;
        }
        Ok(())
    });
    out.push(("completion_curve.csv".to_owned(), curve));
    let summary = json!({
        "policy": policy.kind.name(),
        "chunks": specs.len(),
        "summary": trace.summary(),
        "makespan_time": trace.makespan_time(),
        "makespan_oracle": makespan_oracle(&specs, cfg.engine.v_total),
    });
    out.push(("summary.json".to_owned(), json_bytes(&summary)));
    Ok(out)
}

fn read_spectrum(path: &Path) -> Result<Vec<f64>, CmdError> {
    let text = std::fs::read_to_string(path).map_err(memsched::Error::from)?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let field = line.split(',').next_back().unwrap_or("").trim();
        if field.is_empty() || (i == 0 && field.parse::<f64>().is_err()) {
            continue;
        }
        let v = field
            .parse()
            .map_err(|_| memsched::Error::Config(format!("{}:{}: bad singular value {field:?}", path.display(), i + 1)))?;
        values.push(v);
    }
    Ok(values)
}

fn svd_instance(block: &SvdBlock) -> Result<SvdInstance, CmdError> {
    let map = block.chunk_map.clone();
    Ok(match (&block.image, &block.spectrum_csv) {
        (Some(path), _) => SvdInstance::from_matrix(pgm::read(path)?.to_matrix(), map)?,
        (None, Some(path)) => SvdInstance::from_spectrum(read_spectrum(path)?, map)?,
        (None, None) => SvdInstance::from_matrix(fixture_image().to_matrix(), map)?,
    })
}

fn experiment<'a, T>(cfg: &'a RunConfig, name: &str, pick: impl Fn(&'a Experiment) -> Option<&'a T>) -> Result<&'a T, CmdError> {
    cfg.experiment
        .as_ref()
        .and_then(pick)
        .ok_or_else(|| CmdError::Config(format!("this subcommand needs an `experiment.{name}` block")))
}

pub fn svd_demo(cfg: &RunConfig) -> Result<Outputs, CmdError> {
    let default = SvdBlock::default();
    let block = match &cfg.experiment {
        None => &default,
        Some(Experiment::Svd(b)) => b,
        Some(_) => return Err(CmdError::Config("svd-demo needs an `experiment.svd` block".into())),
    };
    let instance = svd_instance(block)?;
    let policies = cfg.resolved_policies()?;
    let report = run_svd_experiment(&instance, &policies, &cfg.engine)?;

    let horizon = report.horizon();
    let curves = csv_bytes(|w| {
        use std::io::Write;
        let names: Vec<&str> = report.outcomes.iter().map(|o| o.policy.as_str()).collect();
        writeln!(w, "step,{}", names.join(","))?;
        for s in 0..=horizon {
            let row: Vec<String> = report.outcomes.iter().map(|o| o.curve.at(s).to_string()).collect();
            writeln!(w, "{s},{}", row.join(","))?;
        }
        Ok(())
    });
    let chunks = csv_bytes(|w| {
        use std::io::Write;
        writeln!(w, "k,sigma,r_on,importance")?;
        for (c, s) in report.chunks.iter().zip(&report.sigmas) {
            writeln!(w, "{},{},{},{}", c.id, s, c.r_on, c.importance)?;
        }
        Ok(())
    });
    let crossings = match (report.outcome(PolicyKind::Sequential), report.outcome(PolicyKind::LeafCutter)) {
        (Some(a), Some(b)) => Some(count_crossings(&a.curve, &b.curve, horizon)),
        _ => None,
    };
    let makespans: BTreeMap<&str, Option<u64>> =
        report.outcomes.iter().map(|o| (o.policy.as_str(), o.makespan)).collect();
    let resets: BTreeMap<&str, u64> = report.outcomes.iter().map(|o| (o.policy.as_str(), o.resets)).collect();
    let summary = json!({
        "triplets": report.sigmas.len(),
        "makespans": makespans,
        "resets": resets,
        "sequential_leaf_cutter_crossings": crossings,
    });
    Ok(vec![
        ("svd_curves.csv".to_owned(), curves),
        ("svd_chunks.csv".to_owned(), chunks),
        ("svd_summary.json".to_owned(), json_bytes(&summary)),
    ])
}

pub fn monte_carlo_cmd(cfg: &RunConfig) -> Result<Outputs, CmdError> {
    let block = experiment(cfg, "monte-carlo", |e| match e {
        Experiment::MonteCarlo(b) => Some(b),
        _ => None,
    })?;
    let policies = cfg.resolved_policies()?;
    let mut table = McTable { rows: Vec::new() };
    for d in &block.distributions {
        let spec = mc_spec(block, d.clone(), cfg.seed);
        table.rows.extend(monte_carlo(&spec, &policies, &cfg.engine)?.rows);
    }
    Ok(vec![
        ("monte_carlo.csv".to_owned(), csv_bytes(|w| table.write_csv(w))),
        ("monte_carlo.json".to_owned(), json_bytes(&table)),
    ])
}

pub fn scaling_cmd(cfg: &RunConfig) -> Result<Outputs, CmdError> {
    let spec = experiment(cfg, "scaling", |e| match e {
        Experiment::Scaling(s) => Some(s),
        _ => None,
    })?;
    let report = scaling_study(spec, &cfg.resolved_policies()?, &cfg.engine)?;
    let fits: Vec<_> = report
        .sequential_fit
        .iter()
        .map(|(fresh, f)| json!({"freshness": fresh, "slope": f.slope, "intercept": f.intercept, "r_squared": f.r_squared}))
        .collect();
    Ok(vec![
        ("scaling.csv".to_owned(), csv_bytes(|w| report.write_csv(w))),
        ("scaling_fit.json".to_owned(), json_bytes(&json!({ "sequential_fit": fits }))),
    ])
}

pub fn dominance_cmd(cfg: &RunConfig) -> Result<Outputs, CmdError> {
    let spec = experiment(cfg, "dominance", |e| match e {
        Experiment::Dominance(d) => Some(d),
        _ => None,
    })?;
    let records = dominance::dominance_study(spec, &cfg.engine)?;
    let holding: Vec<_> = records.iter().filter(|r| r.holds).collect();
    let lc_wins = holding.iter().filter(|r| r.leaf_cutter <= r.all_sites).count();
    let summary = json!({
        "instances": records.len(),
        "holds": holding.len(),
        "leaf_cutter_not_slower_when_holds": lc_wins,
    });
    Ok(vec![
        ("dominance.csv".to_owned(), csv_bytes(|w| dominance::write_csv(&records, w))),
        ("dominance_summary.json".to_owned(), json_bytes(&summary)),
    ])
}

pub fn hybrid_demo(cfg: &RunConfig) -> Result<Outputs, CmdError> {
    let hybrid = cfg
        .hybrid
        .as_ref()
        .ok_or_else(|| CmdError::Config("hybrid-demo needs a `hybrid` block".into()))?;
    let specs = chunks(cfg)?;
    let policy = cfg.policy.resolve()?;
    let report = run_hybrid(&specs, &cfg.payloads, hybrid, Some(policy), &cfg.engine)?;
    Ok(vec![
        ("hybrid_actions.csv".to_owned(), csv_bytes(|w| report.write_csv(w))),
        ("hybrid_summary.json".to_owned(), json_bytes(&report)),
    ])
}
