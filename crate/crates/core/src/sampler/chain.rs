use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::FamilySpec;
use crate::par::{self, Exec};
use crate::series_space::{feasibility_tolerance, membership_gamma, LatentState, ObservedSeries};

use super::config::{InitStrategy, MoveProbabilities, SamplerConfig};
use super::model::Model;
use super::moves::{self, MoveKind, Proposal};
use super::state::{ChainState, SegmentState, Segmentation};

/// Diagnostics of one iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub kind: MoveKind,
    pub available: bool,
    pub accepted: bool,
    pub log_ratio: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveCounts {
    pub proposed: u64,
    pub accepted: u64,
    pub unavailable: u64,
}

impl MoveCounts {
    /// Accepted fraction of the proposals that were available.
    pub fn acceptance_rate(&self) -> Option<f64> {
        let made = self.proposed - self.unavailable;
        (made > 0).then(|| self.accepted as f64 / made as f64)
    }
}

/// Per-move proposal and acceptance counts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveStats(pub BTreeMap<MoveKind, MoveCounts>);

impl MoveStats {
    pub fn record(&mut self, info: &StepInfo) {
        let c = self.0.entry(info.kind).or_default();
        c.proposed += 1;
        c.accepted += info.accepted as u64;
        c.unavailable += (!info.available) as u64;
    }

    pub fn get(&self, kind: MoveKind) -> MoveCounts {
        self.0.get(&kind).copied().unwrap_or_default()
    }
}

/// One retained sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub k: usize,
    pub tau: Vec<usize>,
    pub m: Vec<usize>,
    pub gamma: Vec<Vec<f64>>,
    pub log_target: f64,
    #[serde(rename = "move")]
    pub move_kind: MoveKind,
    pub accepted: bool,
    /// Absent when the move was unavailable or the ratio was not finite.
    pub log_ratio: Option<f64>,
}

impl TraceRecord {
    fn new(iteration: usize, state: &ChainState, log_target: f64, info: &StepInfo) -> Self {
        Self {
            iteration,
            k: state.k(),
            tau: state.tau(),
            m: state.orders(),
            gamma: state.segments.iter().map(|s| s.latent.gamma.clone()).collect(),
            log_target,
            move_kind: info.kind,
            accepted: info.accepted,
            log_ratio: info.log_ratio.is_finite().then_some(info.log_ratio),
        }
    }
}

/// Output of one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub chain: usize,
    pub t_len: usize,
    pub initial: Segmentation,
    pub records: Vec<TraceRecord>,
    /// Changepoint count at initialisation and after every iteration.
    pub k_path: Vec<usize>,
    pub stats: MoveStats,
}

/// Summary of a run whose samples were streamed to an observer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub initial: Segmentation,
    pub k_path: Vec<usize>,
    pub stats: MoveStats,
}

/// A single Markov chain over segmentations, orders and latents.
pub struct Chain {
    model: Model,
    state: ChainState,
    log_target: f64,
    rng: ChaCha8Rng,
    moves: MoveProbabilities,
    stats: MoveStats,
    iteration: usize,
}

impl Chain {
    /// Starts from `state`, recomputing every cached likelihood.
    pub fn new(model: Model, mut state: ChainState, rng: ChaCha8Rng) -> Result<Self> {
        if state.t_len != model.t_len() {
            return Err(Error::Domain(format!(
                "state covers {} points but the series has {}",
                state.t_len,
                model.t_len()
            )));
        }
        state.check_layout()?;
        for s in &mut state.segments {
            s.loglik = model.segment_loglik(s.start, s.end, &s.latent.gamma);
        }
        let log_target = model.log_target(&state);
        if !log_target.is_finite() {
            return Err(Error::Domain("initial state has zero posterior density".into()));
        }
        let moves = model.config().effective_moves();
        Ok(Self {
            model,
            state,
            log_target,
            rng,
            moves,
            stats: MoveStats::default(),
            iteration: 0,
        })
    }

    /// Starts from a segmentation with every order set to zero.
    pub fn from_segmentation(model: Model, seg: &Segmentation, rng: ChaCha8Rng) -> Result<Self> {
        let state = ChainState {
            t_len: seg.t_len,
            segments: seg
                .segments()
                .into_iter()
                .map(|(start, end)| SegmentState {
                    start,
                    end,
                    latent: LatentState::exchangeable(),
                    loglik: 0.0,
                })
                .collect(),
        };
        Self::new(model, state, rng)
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn log_target(&self) -> f64 {
        self.log_target
    }

    pub fn stats(&self) -> &MoveStats {
        &self.stats
    }

    fn select(&mut self) -> MoveKind {
        let p = self.moves;
        let u: f64 = self.rng.random();
        let half = 0.5 * p.param;
        let edges = [
            (p.shift, MoveKind::Shift),
            (half, MoveKind::UpdateGamma),
            (half, MoveKind::UpdateOrder),
            (p.birth, MoveKind::Birth),
        ];
        let mut acc = 0.0;
        for (w, kind) in edges {
            acc += w;
            if u < acc {
                return kind;
            }
        }
        MoveKind::Death
    }

    /// Runs one iteration.
    pub fn step(&mut self) -> Result<StepInfo> {
        let kind = self.select();
        let (pb, pd) = (self.moves.birth, self.moves.death);
        let proposal = match kind {
            MoveKind::Shift => moves::propose_shift(&self.model, &self.state, &mut self.rng),
            MoveKind::UpdateGamma => moves::update_gamma(&self.model, &self.state, &mut self.rng)?,
            MoveKind::UpdateOrder => moves::update_order(&self.model, &self.state, &mut self.rng),
            MoveKind::Birth => moves::propose_birth(&self.model, &self.state, pb, pd, &mut self.rng),
            MoveKind::Death => moves::propose_death(&self.model, &self.state, pb, pd, &mut self.rng),
        };
        let info = match proposal {
            Proposal::Unavailable => StepInfo {
                kind,
                available: false,
                accepted: false,
                log_ratio: f64::NEG_INFINITY,
            },
            Proposal::Splice {
                lo,
                hi,
                replacement,
                log_ratio,
            } => {
                let u: f64 = self.rng.random();
                let accepted = u.ln() < log_ratio;
                if accepted {
                    self.state.segments.splice(lo..hi, replacement);
                    self.refresh_target()?;
                }
                StepInfo {
                    kind,
                    available: true,
                    accepted,
                    log_ratio,
                }
            }
            Proposal::Resolved {
                index,
                segment,
                accepted,
                log_ratio,
            } => {
                self.state.segments[index] = segment;
                self.refresh_target()?;
                StepInfo {
                    kind,
                    available: true,
                    accepted,
                    log_ratio,
                }
            }
        };
        self.stats.record(&info);
        self.iteration += 1;
        let every = self.model.config().audit_every;
        if every > 0 && self.iteration.is_multiple_of(every) {
            self.audit()?;
        }
        Ok(info)
    }

    fn refresh_target(&mut self) -> Result<()> {
        self.log_target = self.model.log_target(&self.state);
        if !self.log_target.is_finite() {
            return Err(Error::Invariant(format!(
                "accepted state has log target {} at iteration {}",
                self.log_target, self.iteration
            )));
        }
        Ok(())
    }

    /// Checks feasibility through the bounds and the cached likelihoods
    /// against fresh recomputation.
    pub fn audit(&self) -> Result<()> {
        self.state.check_layout()?;
        let support = self.model.support();
        for s in &self.state.segments {
            let data = self.model.data(s.start, s.end);
            if !membership_gamma(data, support, &s.latent.gamma) {
                let tol = feasibility_tolerance(data, support);
                return Err(Error::Invariant(format!(
                    "latents {:?} infeasible for segment [{}, {}] (tolerance {tol})",
                    s.latent.gamma, s.start, s.end
                )));
            }
            let fresh = self.model.segment_loglik(s.start, s.end, &s.latent.gamma);
            if (fresh - s.loglik).abs() > 1e-9 * fresh.abs().max(1.0) {
                return Err(Error::Invariant(format!(
                    "cached log-likelihood {} differs from {fresh} on segment [{}, {}]",
                    s.loglik, s.start, s.end
                )));
            }
        }
        Ok(())
    }
}

/// Random number generator of chain `chain`; stream `2c` drives the chain and
/// stream `2c + 1` its initialisation.
pub fn chain_rng(seed: u64, chain: usize, init: bool) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * chain as u64 + init as u64);
    rng
}

/// Most frequent changepoint count (ties to the lower count), then the most
/// frequent positions with that count (ties to the lexicographically smaller).
pub fn modal_segmentation(counts: &BTreeMap<Vec<usize>, u64>) -> Option<Vec<usize>> {
    let mut by_k: BTreeMap<usize, u64> = BTreeMap::new();
    for (tau, c) in counts {
        *by_k.entry(tau.len()).or_default() += c;
    }
    let mut k_hat = None;
    let mut best = 0;
    for (&k, &c) in &by_k {
        if c > best {
            best = c;
            k_hat = Some(k);
        }
    }
    let k_hat = k_hat?;
    let mut tau_hat = None;
    let mut best = 0;
    for (tau, &c) in counts.iter().filter(|(t, _)| t.len() == k_hat) {
        if c > best {
            best = c;
            tau_hat = Some(tau.clone());
        }
    }
    tau_hat
}

/// Initial segmentation of chain `chain` according to `cfg.init`.
pub fn initialize_chain(
    x: &ObservedSeries,
    f: &FamilySpec,
    cfg: &SamplerConfig,
    chain: usize,
) -> Result<Segmentation> {
    let t_len = x.len();
    let mut rng = chain_rng(cfg.seed, chain, true);
    match cfg.init {
        InitStrategy::Empty => Segmentation::new(t_len, Vec::new()),
        InitStrategy::Random => {
            let k = rng.random_range(0..=20.min(t_len - 1));
            let mut tau: Vec<usize> = sample(&mut rng, t_len - 1, k)
                .into_iter()
                .map(|i| i + 2)
                .collect();
            tau.sort_unstable();
            Segmentation::new(t_len, tau)
        }
        InitStrategy::Standard => {
            if cfg.warmup == 0 {
                return Segmentation::new(t_len, Vec::new());
            }
            let burn_in = cfg.warmup / 2;
            let warm = SamplerConfig {
                standard: true,
                iterations: cfg.warmup - burn_in,
                burn_in,
                thin: 1,
                ..cfg.clone()
            };
            let model = Model::new(x, f, &warm)?;
            let empty = Segmentation::new(t_len, Vec::new())?;
            let mut chain = Chain::from_segmentation(model, &empty, rng)?;
            let mut counts: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
            for it in 0..cfg.warmup {
                chain.step()?;
                if it >= burn_in {
                    *counts.entry(chain.state().tau()).or_default() += 1;
                }
            }
            let tau = modal_segmentation(&counts).unwrap_or_default();
            Segmentation::new(t_len, tau)
        }
    }
}

/// Runs chain `chain`, passing every retained sample to `observe`.
pub fn run_chain_with(
    x: &ObservedSeries,
    f: &FamilySpec,
    cfg: &SamplerConfig,
    chain: usize,
    mut observe: impl FnMut(usize, &Chain, &StepInfo),
) -> Result<RunSummary> {
    let model = Model::new(x, f, cfg)?;
    let initial = initialize_chain(x, f, cfg, chain)?;
    let mut c = Chain::from_segmentation(model, &initial, chain_rng(cfg.seed, chain, false))?;
    let total = cfg.burn_in + cfg.iterations;
    let mut k_path = Vec::with_capacity(total + 1);
    k_path.push(c.state().k());
    for it in 0..total {
        let info = c.step()?;
        k_path.push(c.state().k());
        if it >= cfg.burn_in && (it - cfg.burn_in).is_multiple_of(cfg.thin) {
            observe(it + 1, &c, &info);
        }
    }
    Ok(RunSummary {
        initial,
        k_path,
        stats: c.stats,
    })
}

/// Runs chain `chain` and keeps every retained sample.
pub fn run_chain(
    x: &ObservedSeries,
    f: &FamilySpec,
    cfg: &SamplerConfig,
    chain: usize,
) -> Result<ChainTrace> {
    let mut records = Vec::new();
    let summary = run_chain_with(x, f, cfg, chain, |it, c, info| {
        records.push(TraceRecord::new(it, c.state(), c.log_target(), info));
    })?;
    Ok(ChainTrace {
        chain,
        t_len: x.len(),
        initial: summary.initial,
        records,
        k_path: summary.k_path,
        stats: summary.stats,
    })
}

/// Runs `cfg.n_chains` independent chains.
pub fn run_chains(
    x: &ObservedSeries,
    f: &FamilySpec,
    cfg: &SamplerConfig,
    exec: Exec,
) -> Result<Vec<ChainTrace>> {
    let chains: Vec<usize> = (0..cfg.n_chains).collect();
    par::map(exec, &chains, |&c| run_chain(x, f, cfg, c))
        .into_iter()
        .collect()
}
