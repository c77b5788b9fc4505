//! Subcommands of the `mvsum` executable.
//!
//! Every output file records the seed and the configuration hash, either in a
//! leading `# seed=... config_hash=...` line (CSV), as fields (JSON), or as the
//! first line (JSONL).

pub mod config;
pub mod io;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{f1_score, map_estimate, map_estimate_records, mspace_study, report_from, ChangepointEstimate};
use crate::par::Exec;
use crate::sampler::{run_chains, MoveKind, Segmentation, TraceRecord};
use crate::simulator::{simulate_changepoint_series, GroundTruth};

pub use config::RunConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Fit,
    Evaluate,
    MspaceStudy,
}

#[derive(Clone, Debug)]
pub struct Options {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub standard: bool,
    pub out: PathBuf,
}

/// Contents of `truth.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub seed: u64,
    pub config_hash: String,
    #[serde(flatten)]
    pub truth: GroundTruth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainEstimate {
    pub chain: usize,
    #[serde(flatten)]
    pub estimate: ChangepointEstimate,
}

/// Contents of `estimate.json`: the estimate from all chains pooled, then one
/// per chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateFile {
    pub seed: u64,
    pub config_hash: String,
    pub t_len: usize,
    pub standard: bool,
    pub pooled: ChangepointEstimate,
    pub chains: Vec<ChainEstimate>,
}

#[derive(Serialize)]
struct ChainMetadata {
    chain: usize,
    initial_tau: Vec<usize>,
    retained: usize,
    acceptance: BTreeMap<MoveKind, Option<f64>>,
    proposed: BTreeMap<MoveKind, u64>,
}

#[derive(Serialize)]
struct FitMetadata<'a> {
    seed: u64,
    config_hash: &'a str,
    version: &'static str,
    t_len: usize,
    standard: bool,
    config: &'a RunConfig,
    chains: Vec<ChainMetadata>,
}

#[derive(Serialize)]
struct TraceLine<'a> {
    chain: usize,
    #[serde(flatten)]
    record: &'a TraceRecord,
}

/// Loads the configuration, applies overrides and runs `cmd`.
pub fn run(cmd: Command, opts: &Options) -> Result<()> {
    let mut cfg = RunConfig::load(&opts.config)?;
    cfg.apply_overrides(opts.seed, opts.standard);
    std::fs::create_dir_all(&opts.out).map_err(|e| Error::io(&opts.out, e))?;
    match cmd {
        Command::Simulate => simulate(&cfg, &opts.out),
        Command::Fit => fit(&cfg, &opts.out),
        Command::Evaluate => evaluate(&cfg, &opts.out),
        Command::MspaceStudy => mspace(&cfg, &opts.out),
    }
}

/// Writes `series.csv` and `truth.json`.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let f = cfg.family()?;
    f.validate().map_err(|e| Error::Config(e.to_string()))?;
    let spec = cfg
        .scenario
        .as_ref()
        .ok_or_else(|| Error::Config("missing [scenario] section".into()))?;
    let hash = cfg.hash();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sim = simulate_changepoint_series(spec, f, &mut rng)?;
    io::write_series(&out.join("series.csv"), &sim.x, cfg.seed, &hash)?;
    io::write_json(
        &out.join("truth.json"),
        &TruthFile {
            seed: cfg.seed,
            config_hash: hash,
            truth: sim.truth,
        },
    )
}

/// Writes `trace.jsonl`, `estimate.json`, `metadata.json` and `k_trace.csv`.
pub fn fit(cfg: &RunConfig, out: &Path) -> Result<()> {
    let f = cfg.family()?;
    f.validate().map_err(|e| Error::Config(e.to_string()))?;
    cfg.sampler.validate()?;
    let input = &cfg
        .fit
        .as_ref()
        .ok_or_else(|| Error::Config("missing [fit] section".into()))?
        .input;
    let x = io::read_series(input, f.support())?;
    let hash = cfg.hash();
    let traces = run_chains(&x, f, &cfg.sampler, Exec::Parallel)?;

    let path = out.join("trace.jsonl");
    let mut w = io::create(&path)?;
    let write = (|| -> std::io::Result<()> {
        serde_json::to_writer(&mut w, &serde_json::json!({ "seed": cfg.seed, "config_hash": hash }))?;
        writeln!(w)?;
        for t in &traces {
            for record in &t.records {
                serde_json::to_writer(&mut w, &TraceLine { chain: t.chain, record })?;
                writeln!(w)?;
            }
        }
        w.flush()
    })();
    write.map_err(|e| Error::io(&path, e))?;

    let pooled: Vec<TraceRecord> = traces.iter().flat_map(|t| t.records.iter().cloned()).collect();
    let chains = traces
        .iter()
        .map(|t| {
            Ok(ChainEstimate {
                chain: t.chain,
                estimate: map_estimate(t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    io::write_json(
        &out.join("estimate.json"),
        &EstimateFile {
            seed: cfg.seed,
            config_hash: hash.clone(),
            t_len: x.len(),
            standard: cfg.sampler.standard,
            pooled: map_estimate_records(&pooled)?,
            chains,
        },
    )?;

    let metadata = FitMetadata {
        seed: cfg.seed,
        config_hash: &hash,
        version: env!("CARGO_PKG_VERSION"),
        t_len: x.len(),
        standard: cfg.sampler.standard,
        config: cfg,
        chains: traces
            .iter()
            .map(|t| ChainMetadata {
                chain: t.chain,
                initial_tau: t.initial.tau.clone(),
                retained: t.records.len(),
                acceptance: MoveKind::ALL
                    .iter()
                    .map(|&k| (k, t.stats.get(k).acceptance_rate()))
                    .collect(),
                proposed: MoveKind::ALL.iter().map(|&k| (k, t.stats.get(k).proposed)).collect(),
            })
            .collect(),
    };
    io::write_json(&out.join("metadata.json"), &metadata)?;

    let mut header = vec!["iteration".to_string()];
    header.extend(traces.iter().map(|t| format!("chain{}", t.chain)));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let len = traces.first().map_or(0, |t| t.k_path.len());
    io::write_csv(
        &out.join("k_trace.csv"),
        cfg.seed,
        &hash,
        &header,
        (0..len).map(|i| {
            let mut row = vec![i.to_string()];
            row.extend(traces.iter().map(|t| t.k_path[i].to_string()));
            row
        }),
    )
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

/// Writes `f1.csv` and, for multi-chain fits, `convergence.csv`.
pub fn evaluate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let section = cfg
        .evaluate
        .as_ref()
        .ok_or_else(|| Error::Config("missing [evaluate] section".into()))?;
    let est: EstimateFile = io::read_json(&section.estimate)?;
    let truth: TruthFile = io::read_json(&section.truth)?;
    if est.t_len != truth.truth.t_len {
        return Err(Error::Data(format!(
            "estimate has T = {} but truth has T = {}",
            est.t_len, truth.truth.t_len
        )));
    }
    Segmentation::new(truth.truth.t_len, truth.truth.tau.clone())
        .map_err(|e| Error::Data(format!("truth: {e}")))?;
    let eps = section.epsilon;
    let hash = cfg.hash();
    let tau = &truth.truth.tau;
    let rows = std::iter::once(("pooled".to_string(), &est.pooled))
        .chain(est.chains.iter().map(|c| (format!("chain{}", c.chain), &c.estimate)))
        .map(|(name, e)| {
            let s = f1_score(tau, &e.tau_hat, eps);
            vec![
                name,
                e.k_hat.to_string(),
                join(&e.tau_hat),
                s.precision.to_string(),
                s.recall.to_string(),
                s.f1.to_string(),
            ]
        })
        .collect::<Vec<_>>();
    io::write_csv(
        &out.join("f1.csv"),
        cfg.seed,
        &hash,
        &["estimate", "k_hat", "tau_hat", "precision", "recall", "f1"],
        rows,
    )?;
    if est.chains.len() >= 2 {
        let estimates: Vec<ChangepointEstimate> = est.chains.iter().map(|c| c.estimate.clone()).collect();
        let report = report_from(estimates, std::iter::empty(), Some(tau), eps);
        io::write_csv(
            &out.join("convergence.csv"),
            cfg.seed,
            &hash,
            &["chain", "k_hat", "f1", "f1_variance", "flagged", "consensus_k"],
            est.chains.iter().zip(&report.f1).map(|(c, f1)| {
                vec![
                    c.chain.to_string(),
                    c.estimate.k_hat.to_string(),
                    f1.to_string(),
                    report.f1_variance.to_string(),
                    report.flagged.to_string(),
                    report.consensus_k.to_string(),
                ]
            }),
        )?;
    }
    Ok(())
}

/// Writes `mspace.csv`.
pub fn mspace(cfg: &RunConfig, out: &Path) -> Result<()> {
    let f = cfg.family()?;
    f.validate().map_err(|e| Error::Config(e.to_string()))?;
    let grid = cfg
        .mspace
        .as_ref()
        .ok_or_else(|| Error::Config("missing [mspace] section".into()))?;
    let rows = mspace_study(f, grid, cfg.seed, Exec::Parallel)?;
    io::write_csv(
        &out.join("mspace.csv"),
        cfg.seed,
        &cfg.hash(),
        &["n", "m", "theta", "m_prime", "Q"],
        rows.iter().map(|r| {
            vec![
                r.n.to_string(),
                r.m.to_string(),
                r.theta.to_string(),
                r.m_prime.to_string(),
                r.q.to_string(),
            ]
        }),
    )
}
