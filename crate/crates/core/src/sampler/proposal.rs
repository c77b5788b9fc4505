//! Proposal distributions for segment latents and orders.
//!
//! Every proposal here can be both sampled and evaluated, so the reverse
//! density of a move is computed by replaying the same construction on the
//! target point.

use rand::Rng;

use crate::families::{gamma_star, latent_central_interval};
use crate::series_space::LatentState;

use super::model::{log_sum_exp, ClassLayout, Conditional, Model, SegmentInfo};

/// Distribution of one latent coordinate given the others.
#[derive(Clone, Debug)]
pub enum CoordDist {
    /// Integer values `lo, lo + 1, ...` with normalised log-probabilities.
    Lattice { lo: f64, log_p: Vec<f64> },
    /// Equal-width bins on `[lo, lo + width * len)` with normalised bin
    /// log-probabilities.
    Grid { lo: f64, width: f64, log_p: Vec<f64> },
    /// No admissible value.
    Empty,
}

impl CoordDist {
    /// Full conditional on the feasible integer range.
    pub fn lattice(cond: &Conditional<'_>) -> Self {
        let (lo, hi) = cond.range();
        if !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
            return CoordDist::Empty;
        }
        let n = (hi - lo).round() as usize + 1;
        let log_p: Vec<f64> = (0..n).map(|i| cond.loglik(lo + i as f64)).collect();
        Self::normalised(log_p, |log_p| CoordDist::Lattice { lo, log_p })
    }

    /// Step density over `N` bins on the central `eta` interval of the latent
    /// density intersected with the feasible range; heights are the
    /// conditional likelihood at the bin midpoints.
    pub fn grid(cond: &Conditional<'_>, interval: (f64, f64), bins: usize) -> Self {
        let (flo, fhi) = cond.range();
        let lo = interval.0.max(flo);
        let hi = interval.1.min(fhi);
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return CoordDist::Empty;
        }
        let width = (hi - lo) / bins as f64;
        if !(width > 0.0) {
            return CoordDist::Empty;
        }
        let log_p: Vec<f64> = (0..bins)
            .map(|i| cond.loglik(lo + (i as f64 + 0.5) * width))
            .collect();
        Self::normalised(log_p, |log_p| CoordDist::Grid { lo, width, log_p })
    }

    fn normalised(mut log_p: Vec<f64>, build: impl FnOnce(Vec<f64>) -> Self) -> Self {
        let norm = log_sum_exp(log_p.iter().copied());
        if !norm.is_finite() {
            return CoordDist::Empty;
        }
        for v in &mut log_p {
            *v -= norm;
        }
        build(log_p)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<f64> {
        match self {
            CoordDist::Lattice { lo, log_p } => Some(lo + categorical(log_p, rng) as f64),
            CoordDist::Grid { lo, width, log_p } => {
                let i = categorical(log_p, rng);
                let u: f64 = rng.random();
                Some(lo + (i as f64 + u) * width)
            }
            CoordDist::Empty => None,
        }
    }

    /// Log probability (lattice) or log density (grid) at `v`.
    pub fn log_density(&self, v: f64) -> f64 {
        match self {
            CoordDist::Lattice { lo, log_p } => {
                let i = v - lo;
                if i < 0.0 || i.fract() != 0.0 {
                    return f64::NEG_INFINITY;
                }
                log_p.get(i as usize).copied().unwrap_or(f64::NEG_INFINITY)
            }
            CoordDist::Grid { lo, width, log_p } => {
                let i = ((v - lo) / width).floor();
                if !(i >= 0.0) || i as usize >= log_p.len() {
                    return f64::NEG_INFINITY;
                }
                log_p[i as usize] - width.ln()
            }
            CoordDist::Empty => f64::NEG_INFINITY,
        }
    }
}

/// Index drawn from normalised log-probabilities.
pub fn categorical<R: Rng + ?Sized>(log_p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &lp) in log_p.iter().enumerate() {
        if lp == f64::NEG_INFINITY {
            continue;
        }
        acc += lp.exp();
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Coordinate proposal used by both latent moves.
pub fn coordinate(model: &Model, info: &SegmentInfo, layout: &ClassLayout, gamma: &[f64], r: usize) -> CoordDist {
    let cond = layout.conditional(gamma, r);
    if layout.is_discrete() {
        CoordDist::lattice(&cond)
    } else {
        let cfg = model.config();
        let interval =
            latent_central_interval(model.family(), layout.m(), &info.theta.value, cfg.eta);
        CoordDist::grid(&cond, interval, cfg.grid_size)
    }
}

fn start_point(model: &Model, info: &SegmentInfo, m: usize) -> Option<Vec<f64>> {
    let data = model.data(info.start, info.end);
    gamma_star(model.family(), data, m, &info.theta)
        .ok()
        .map(|s| s.gamma)
}

/// One coordinate pass started at the water-filled point; returns the
/// proposed latents and their log proposal density.
pub fn propose_latents<R: Rng + ?Sized>(
    model: &Model,
    info: &SegmentInfo,
    layout: &ClassLayout,
    rng: &mut R,
) -> Option<(Vec<f64>, f64)> {
    let mut gamma = start_point(model, info, layout.m())?;
    let mut log_q = 0.0;
    for r in 1..=layout.m() {
        let dist = coordinate(model, info, layout, &gamma, r);
        let v = dist.sample(rng)?;
        log_q += dist.log_density(v);
        gamma[r - 1] = v;
    }
    Some((gamma, log_q))
}

/// Log density of [`propose_latents`] producing `target`.
pub fn latents_log_density(
    model: &Model,
    info: &SegmentInfo,
    layout: &ClassLayout,
    target: &[f64],
) -> f64 {
    let Some(mut gamma) = start_point(model, info, layout.m()) else {
        return f64::NEG_INFINITY;
    };
    let mut log_q = 0.0;
    for r in 1..=layout.m() {
        let dist = coordinate(model, info, layout, &gamma, r);
        log_q += dist.log_density(target[r - 1]);
        if log_q == f64::NEG_INFINITY {
            return log_q;
        }
        gamma[r - 1] = target[r - 1];
    }
    log_q
}

/// A freshly proposed segment parameter `(m, gamma)` with its log density.
pub struct FreshDraw {
    pub latent: LatentState,
    pub loglik: f64,
    pub log_q: f64,
}

/// Draws `(m', gamma')` for the segment `[start, end]` from the order proposal
/// followed by one latent pass.
pub fn draw_fresh<R: Rng + ?Sized>(
    model: &Model,
    start: usize,
    end: usize,
    rng: &mut R,
) -> Option<FreshDraw> {
    if model.standard() {
        return Some(FreshDraw {
            latent: LatentState::exchangeable(),
            loglik: model.segment_loglik(start, end, &[]),
            log_q: 0.0,
        });
    }
    let info = model.info(start, end);
    let order = model.order_proposal(&info);
    let weights: Vec<f64> = order.iter().map(|v| v.1).collect();
    let (m, log_qm) = order[categorical(&weights, rng)];
    if m == 0 {
        return Some(FreshDraw {
            latent: LatentState::exchangeable(),
            loglik: model.segment_loglik(start, end, &[]),
            log_q: log_qm,
        });
    }
    let layout = model.layout(start, end, m);
    let (gamma, log_qg) = propose_latents(model, &info, &layout, rng)?;
    let loglik = model.segment_loglik(start, end, &gamma);
    Some(FreshDraw {
        latent: LatentState::new(gamma),
        loglik,
        log_q: log_qm + log_qg,
    })
}

/// Log density of [`draw_fresh`] producing `latent` on `[start, end]`.
pub fn fresh_log_density(model: &Model, start: usize, end: usize, latent: &LatentState) -> f64 {
    if model.standard() {
        return if latent.m == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let info = model.info(start, end);
    let order = model.order_proposal(&info);
    let Some(&(_, log_qm)) = order.iter().find(|v| v.0 == latent.m) else {
        return f64::NEG_INFINITY;
    };
    if latent.m == 0 {
        return log_qm;
    }
    let layout = model.layout(start, end, latent.m);
    log_qm + latents_log_density(model, &info, &layout, &latent.gamma)
}
