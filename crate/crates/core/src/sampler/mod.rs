//! Reversible-jump sampler over changepoints, segment orders and latents.
//!
//! The state is a tiling of `1..=T` into segments, each with an order `m` and
//! initial latents `gamma`. Segment parameters `theta` are integrated out, so
//! the target is
//!
//! ```text
//! k log p + (T - 1 - k) log(1 - p) + sum_j [log pi(m_j) + log L(x_j, gamma_j | m_j)]
//! ```
//!
//! with `pi(m) = rho (1 - rho)^m`. Standard mode pins every order to zero and
//! drops the order prior, which gives the exchangeable changepoint model.

mod chain;
mod config;
mod model;
mod moves;
mod proposal;
mod state;

pub use chain::{
    chain_rng, initialize_chain, modal_segmentation, run_chain, run_chain_with, run_chains,
    Chain, ChainTrace, MoveCounts, MoveStats, RunSummary, StepInfo, TraceRecord,
};
pub use config::{InitStrategy, MoveProbabilities, SamplerConfig};
pub use model::{ClassLayout, Conditional, Model, SegmentInfo};
pub use moves::MoveKind;
pub use proposal::{
    coordinate, draw_fresh, fresh_log_density, latents_log_density, propose_latents, CoordDist,
    FreshDraw,
};
pub use state::{ChainState, SegmentState, Segmentation};

use crate::families::FamilySpec;
use crate::series_space::ObservedSeries;

/// Log target density of a state, recomputing every segment likelihood.
pub fn target_log_density(
    state: &ChainState,
    x: &ObservedSeries,
    f: &FamilySpec,
    cfg: &SamplerConfig,
) -> crate::Result<f64> {
    let model = Model::new(x, f, cfg)?;
    let mut fresh = state.clone();
    for s in &mut fresh.segments {
        s.loglik = model.segment_loglik(s.start, s.end, &s.latent.gamma);
    }
    Ok(model.log_target(&fresh))
}
