//! The four move types and their acceptance ratios.
//!
//! Each proposal lists the segments it replaces and the full log acceptance
//! ratio: target ratio plus reverse minus forward proposal log densities.
//! Deterministic parts are coordinate reshuffles and the shift map, so no
//! Jacobian terms appear.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series_space::{shift_window, LatentState};

use super::model::Model;
use super::proposal::{coordinate, draw_fresh, fresh_log_density};
use super::state::{ChainState, SegmentState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MoveKind {
    Shift,
    UpdateGamma,
    UpdateOrder,
    Birth,
    Death,
}

impl MoveKind {
    pub const ALL: [MoveKind; 5] = [
        MoveKind::Shift,
        MoveKind::UpdateGamma,
        MoveKind::UpdateOrder,
        MoveKind::Birth,
        MoveKind::Death,
    ];
}

/// Outcome of building a proposal.
pub enum Proposal {
    /// The move cannot be made from this state.
    Unavailable,
    /// Replace `segments[lo..hi]` by `replacement`.
    Splice {
        lo: usize,
        hi: usize,
        replacement: Vec<SegmentState>,
        log_ratio: f64,
    },
    /// The move already resolved itself (systematic-scan latent updates).
    Resolved {
        index: usize,
        segment: SegmentState,
        accepted: bool,
        log_ratio: f64,
    },
}

fn rejected() -> Proposal {
    Proposal::Splice {
        lo: 0,
        hi: 0,
        replacement: Vec::new(),
        log_ratio: f64::NEG_INFINITY,
    }
}

fn segment(model: &Model, start: usize, end: usize, latent: LatentState) -> SegmentState {
    let loglik = model.segment_loglik(start, end, &latent.gamma);
    SegmentState {
        start,
        end,
        latent,
        loglik,
    }
}

/// Shifted latents for a segment whose start moves from `old_start` to
/// `new_start`.
fn reanchor(model: &Model, latent: &LatentState, old_start: usize, new_start: usize) -> LatentState {
    if latent.m == 0 || old_start == new_start {
        return latent.clone();
    }
    let steps = new_start as i64 - old_start as i64;
    let gamma = shift_window(model.x(), &latent.gamma, old_start - 1, steps)
        .expect("shift stays inside the series");
    LatentState::new(gamma)
}

/// Moves one changepoint uniformly between its neighbours.
pub fn propose_shift<R: Rng + ?Sized>(model: &Model, state: &ChainState, rng: &mut R) -> Proposal {
    let k = state.k();
    if k == 0 {
        return Proposal::Unavailable;
    }
    let j = rng.random_range(0..k);
    let (left, right) = (&state.segments[j], &state.segments[j + 1]);
    let new_tau = rng.random_range(left.start + 1..=right.end);
    if new_tau == right.start {
        return Proposal::Splice {
            lo: j,
            hi: j + 2,
            replacement: vec![left.clone(), right.clone()],
            log_ratio: 0.0,
        };
    }
    let new_left = segment(model, left.start, new_tau - 1, left.latent.clone());
    let new_right = segment(
        model,
        new_tau,
        right.end,
        reanchor(model, &right.latent, right.start, new_tau),
    );
    let log_ratio = new_left.loglik + new_right.loglik - left.loglik - right.loglik;
    Proposal::Splice {
        lo: j,
        hi: j + 2,
        replacement: vec![new_left, new_right],
        log_ratio: nan_to_reject(log_ratio),
    }
}

/// Systematic-scan update of the latents of one segment at fixed order.
///
/// Discrete families draw each coordinate from its exact full conditional;
/// continuous families make a Metropolis-Hastings step per coordinate with
/// the step-density proposal.
pub fn update_gamma<R: Rng + ?Sized>(
    model: &Model,
    state: &ChainState,
    rng: &mut R,
) -> Result<Proposal> {
    if model.standard() {
        return Ok(Proposal::Unavailable);
    }
    let j = rng.random_range(0..state.segments.len());
    let seg = &state.segments[j];
    let m = seg.m();
    if m == 0 {
        return Ok(Proposal::Unavailable);
    }
    let info = model.info(seg.start, seg.end);
    let layout = model.layout(seg.start, seg.end, m);
    let mut gamma = seg.latent.gamma.clone();
    let mut accepted = false;
    let mut last_ratio = 0.0;
    for r in 1..=m {
        let dist = coordinate(model, &info, &layout, &gamma, r);
        if layout.is_discrete() {
            let v = dist.sample(rng).ok_or_else(|| {
                Error::Invariant(format!(
                    "empty conditional for coordinate {r} of segment [{}, {}]",
                    seg.start, seg.end
                ))
            })?;
            accepted |= v != gamma[r - 1];
            gamma[r - 1] = v;
            continue;
        }
        let Some(v) = dist.sample(rng) else {
            continue;
        };
        let cur = gamma[r - 1];
        let cond = layout.conditional(&gamma, r);
        let log_ratio = cond.loglik(v) - cond.loglik(cur) + dist.log_density(cur)
            - dist.log_density(v);
        last_ratio = log_ratio;
        let u: f64 = rng.random();
        if u.ln() < log_ratio {
            gamma[r - 1] = v;
            accepted = true;
        }
    }
    let new = segment(model, seg.start, seg.end, LatentState::new(gamma));
    Ok(Proposal::Resolved {
        index: j,
        segment: new,
        accepted: accepted || layout.is_discrete(),
        log_ratio: last_ratio,
    })
}

/// Joint proposal of a new order and latents for one segment.
pub fn update_order<R: Rng + ?Sized>(model: &Model, state: &ChainState, rng: &mut R) -> Proposal {
    if model.standard() {
        return Proposal::Unavailable;
    }
    let j = rng.random_range(0..state.segments.len());
    let seg = &state.segments[j];
    let Some(fresh) = draw_fresh(model, seg.start, seg.end, rng) else {
        return rejected();
    };
    let reverse = fresh_log_density(model, seg.start, seg.end, &seg.latent);
    let log_ratio = fresh.loglik - seg.loglik + model.log_order_prior(fresh.latent.m)
        - model.log_order_prior(seg.m())
        + reverse
        - fresh.log_q;
    Proposal::Splice {
        lo: j,
        hi: j + 1,
        replacement: vec![SegmentState {
            start: seg.start,
            end: seg.end,
            latent: fresh.latent,
            loglik: fresh.loglik,
        }],
        log_ratio: nan_to_reject(log_ratio),
    }
}

/// Inserts a changepoint at a uniformly chosen free site.
pub fn propose_birth<R: Rng + ?Sized>(
    model: &Model,
    state: &ChainState,
    p_birth: f64,
    p_death: f64,
    rng: &mut R,
) -> Proposal {
    let k = state.k();
    let free = model.t_len() - 1 - k;
    if free == 0 {
        return Proposal::Unavailable;
    }
    // free sites of segment [a, b] are a+1..=b
    let mut pick = rng.random_range(0..free);
    let mut j = 0;
    while pick >= state.segments[j].end - state.segments[j].start {
        pick -= state.segments[j].end - state.segments[j].start;
        j += 1;
    }
    let seg = &state.segments[j];
    let (a, b) = (seg.start, seg.end);
    let c = a + 1 + pick;
    let n_left = c - a;
    let n = b - a + 1;
    let donor_left = rng.random_range(0..n) < n_left;
    let (left, right, fresh_log_q, fresh_m) = if donor_left {
        let left = segment(model, a, c - 1, seg.latent.clone());
        let Some(fresh) = draw_fresh(model, c, b, rng) else {
            return rejected();
        };
        let m = fresh.latent.m;
        let right = SegmentState {
            start: c,
            end: b,
            latent: fresh.latent,
            loglik: fresh.loglik,
        };
        (left, right, fresh.log_q, m)
    } else {
        let right = segment(model, c, b, reanchor(model, &seg.latent, a, c));
        let Some(fresh) = draw_fresh(model, a, c - 1, rng) else {
            return rejected();
        };
        let m = fresh.latent.m;
        let left = SegmentState {
            start: a,
            end: c - 1,
            latent: fresh.latent,
            loglik: fresh.loglik,
        };
        (left, right, fresh.log_q, m)
    };
    let delta = left.loglik + right.loglik - seg.loglik + model.log_order_prior(fresh_m)
        + model.log_p()
        - model.log_1m_p();
    let log_ratio = delta + p_death.ln() - ((k + 1) as f64).ln() - p_birth.ln()
        + (free as f64).ln()
        - fresh_log_q;
    Proposal::Splice {
        lo: j,
        hi: j + 1,
        replacement: vec![left, right],
        log_ratio: nan_to_reject(log_ratio),
    }
}

/// Removes a uniformly chosen changepoint; the merged segment extends one
/// neighbour chosen with probability proportional to its length.
pub fn propose_death<R: Rng + ?Sized>(
    model: &Model,
    state: &ChainState,
    p_birth: f64,
    p_death: f64,
    rng: &mut R,
) -> Proposal {
    let k = state.k();
    if k == 0 {
        return Proposal::Unavailable;
    }
    let j = rng.random_range(0..k);
    let (left, right) = (&state.segments[j], &state.segments[j + 1]);
    let (a, c, b) = (left.start, right.start, right.end);
    let n = b - a + 1;
    let donor_left = rng.random_range(0..n) < left.len();
    let (latent, other) = if donor_left {
        (left.latent.clone(), right)
    } else {
        (reanchor(model, &right.latent, c, a), left)
    };
    let merged = segment(model, a, b, latent);
    if merged.loglik == f64::NEG_INFINITY {
        return rejected();
    }
    let reverse = fresh_log_density(model, other.start, other.end, &other.latent);
    let delta = merged.loglik - left.loglik - right.loglik - model.log_order_prior(other.m())
        - model.log_p()
        + model.log_1m_p();
    let free_after = (model.t_len() - k) as f64;
    let log_ratio = delta + p_birth.ln() - free_after.ln() + reverse - p_death.ln()
        + (k as f64).ln();
    Proposal::Splice {
        lo: j,
        hi: j + 2,
        replacement: vec![merged],
        log_ratio: nan_to_reject(log_ratio),
    }
}

fn nan_to_reject(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}
