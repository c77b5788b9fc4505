use std::cell::{OnceCell, RefCell};
use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::families::{
    jump_variance_g, stat_shift, theta_hat, FamilySpec, LatentStats, LatentTerm, Theta,
    ThetaEstimate,
};
use crate::series_space::{
    backward_differences, compute_bounds, feasibility_tolerance, latent_sequence, membership_m,
    ObservedSeries, SupportClass,
};

use super::config::SamplerConfig;
use super::state::ChainState;

const LN_2PI: f64 = 1.837_877_066_409_345_3;
const THETA_EDGE: f64 = 1e-9;
const INFO_CACHE_LIMIT: usize = 1 << 16;

/// Quantities of a segment that depend only on its data.
#[derive(Debug)]
pub struct SegmentInfo {
    pub start: usize,
    pub end: usize,
    /// Posterior mode under the exchangeable model, kept off the boundary.
    pub theta: ThetaEstimate,
    order: OnceCell<Vec<(usize, f64)>>,
}

/// Data, family and configuration shared by every move of one chain.
pub struct Model {
    x: Vec<f64>,
    family: FamilySpec,
    support: SupportClass,
    cfg: SamplerConfig,
    log_p: f64,
    log_q: f64,
    ln_rho: f64,
    ln_1m_rho: f64,
    max_count: usize,
    tables: RefCell<HashMap<usize, Rc<Vec<f64>>>>,
    infos: RefCell<HashMap<(usize, usize), Rc<SegmentInfo>>>,
}

impl Model {
    pub fn new(x: &ObservedSeries, family: &FamilySpec, cfg: &SamplerConfig) -> Result<Self> {
        family
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        if x.support() != family.support() {
            // re-validate against the family support so count data errors name the row
            ObservedSeries::new(x.values().to_vec(), family.support())?;
        }
        let t_len = x.len();
        let p = cfg.changepoint_rate(t_len);
        let max_count = if family.support().is_discrete() {
            x.values().iter().fold(0.0_f64, |a, &v| a.max(v)) as usize
        } else {
            0
        };
        Ok(Self {
            x: x.values().to_vec(),
            family: family.clone(),
            support: family.support(),
            cfg: cfg.clone(),
            log_p: p.ln(),
            log_q: (-p).ln_1p(),
            ln_rho: cfg.rho.ln(),
            ln_1m_rho: (-cfg.rho).ln_1p(),
            max_count,
            tables: RefCell::new(HashMap::new()),
            infos: RefCell::new(HashMap::new()),
        })
    }

    pub fn t_len(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn family(&self) -> &FamilySpec {
        &self.family
    }

    pub fn support(&self) -> SupportClass {
        self.support
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    pub fn standard(&self) -> bool {
        self.cfg.standard
    }

    /// Data of the inclusive 1-based segment `[start, end]`.
    pub fn data(&self, start: usize, end: usize) -> &[f64] {
        &self.x[start - 1..end]
    }

    pub fn log_p(&self) -> f64 {
        self.log_p
    }

    pub fn log_1m_p(&self) -> f64 {
        self.log_q
    }

    /// `log pi(m)`; zero in standard mode where the order is pinned.
    pub fn log_order_prior(&self, m: usize) -> f64 {
        if self.cfg.standard {
            0.0
        } else {
            self.ln_rho + m as f64 * self.ln_1m_rho
        }
    }

    pub fn term(&self, data: &[f64], m: usize) -> LatentTerm {
        let term = LatentTerm::new(&self.family, m, stat_shift(&self.family, data, m));
        match self.table(m) {
            Some(t) => term.with_table(t),
            None => term,
        }
    }

    fn table(&self, m: usize) -> Option<Rc<Vec<f64>>> {
        if !self.support.is_discrete() {
            return None;
        }
        let mut tables = self.tables.borrow_mut();
        if let Some(t) = tables.get(&m) {
            return Some(t.clone());
        }
        let t = Rc::new(LatentTerm::build_table(&self.family, m, self.max_count)?);
        tables.insert(m, t.clone());
        Some(t)
    }

    /// Closed-form segment log-likelihood; `-inf` for infeasible latents.
    pub fn segment_loglik(&self, start: usize, end: usize, gamma: &[f64]) -> f64 {
        let data = self.data(start, end);
        let term = self.term(data, gamma.len());
        term.loglik(&term.stats(&latent_sequence(data, gamma)))
    }

    /// `log pi(k, tau) + sum_j [log pi(m_j) + log L_j]` from cached log-likelihoods.
    pub fn log_target(&self, state: &ChainState) -> f64 {
        let k = state.k() as f64;
        let free = (self.t_len() - 1) as f64 - k;
        let mut total = k * self.log_p + free * self.log_q;
        for s in &state.segments {
            total += self.log_order_prior(s.m()) + s.loglik;
        }
        total
    }

    pub fn info(&self, start: usize, end: usize) -> Rc<SegmentInfo> {
        if let Some(info) = self.infos.borrow().get(&(start, end)) {
            return info.clone();
        }
        let data = self.data(start, end);
        let mut theta = theta_hat(&self.family, data).expect("validated family and data");
        if let Theta::Negbin { prob } = &mut theta.value {
            *prob = prob.clamp(THETA_EDGE, 1.0 - THETA_EDGE);
        }
        let info = Rc::new(SegmentInfo {
            start,
            end,
            theta,
            order: OnceCell::new(),
        });
        let mut infos = self.infos.borrow_mut();
        if infos.len() >= INFO_CACHE_LIMIT {
            infos.clear();
        }
        infos.insert((start, end), info.clone());
        info
    }

    /// Normalised `log q(m')` over the feasible orders `0..=m_max`.
    pub fn order_proposal<'a>(&self, info: &'a SegmentInfo) -> &'a [(usize, f64)] {
        info.order.get_or_init(|| {
            let data = self.data(info.start, info.end);
            let jumps = backward_differences(data);
            let n_jumps = jumps.len().saturating_sub(1) as f64;
            let sq: f64 = jumps.iter().skip(1).map(|d| d * d).sum();
            let mut out: Vec<(usize, f64)> = Vec::new();
            for m in 0..=self.cfg.m_max {
                if !self.offers_order(data, m) {
                    continue;
                }
                let g = jump_variance_g(&self.family, &info.theta.value, m)
                    .expect("interior theta estimate");
                let var = 2.0 * g;
                let lw = -0.5 * n_jumps * (LN_2PI + var.ln()) - sq / (2.0 * var)
                    + self.ln_rho
                    + m as f64 * self.ln_1m_rho;
                out.push((m, lw));
            }
            let norm = log_sum_exp(out.iter().map(|v| v.1));
            for v in &mut out {
                v.1 -= norm;
            }
            out
        })
    }

    /// Whether the order proposal may offer `m` for `data`. Continuous
    /// bounded data additionally need a polytope with non-empty interior,
    /// since a single feasible point carries no posterior mass.
    fn offers_order(&self, data: &[f64], m: usize) -> bool {
        if self.support != SupportClass::NonnegContinuous || m == 0 {
            return membership_m(data, self.support, m);
        }
        compute_bounds(data, m).slack > feasibility_tolerance(data, self.support)
    }

    /// Latents of a segment split into dependence classes.
    pub fn layout(&self, start: usize, end: usize, m: usize) -> ClassLayout {
        let data = self.data(start, end);
        ClassLayout::new(self.term(data, m), data, m, self.support)
    }
}

/// Latents of one segment and order grouped by how they depend on `gamma`.
///
/// With `gamma = 0` the difference equation gives base latents `b`. Raising
/// `gamma_r` by `d` adds `d` to every latent of class `r` (which holds
/// `gamma_r` itself) and subtracts `d` from every latent of class 0, so a
/// latent of class `c` equals `b + o_c` with offsets `o_r = gamma_r` and
/// `o_0 = -sum(gamma)`.
pub struct ClassLayout {
    m: usize,
    term: LatentTerm,
    classes: Vec<Vec<f64>>,
    sums: Vec<f64>,
    squares: Vec<f64>,
    bounded: bool,
    discrete: bool,
    lower: Vec<f64>,
    upper: f64,
    count: usize,
    normal: bool,
}

impl ClassLayout {
    fn new(term: LatentTerm, data: &[f64], m: usize, support: SupportClass) -> Self {
        let mbar = m + 1;
        let base = latent_sequence(data, &vec![0.0; m]);
        let mut classes = vec![Vec::with_capacity(base.len() / mbar + 1); mbar];
        for (e, &b) in base.iter().enumerate() {
            let r = e % mbar;
            let c = if r == m { 0 } else { r + 1 };
            classes[c].push(b);
        }
        let shift = term.shift();
        let sums = classes
            .iter()
            .map(|c| c.iter().map(|b| b - shift).sum())
            .collect();
        let squares = classes
            .iter()
            .map(|c| c.iter().map(|b| (b - shift) * (b - shift)).sum())
            .collect();
        let lower = (1..=m)
            .map(|r| classes[r].iter().fold(0.0_f64, |a, &b| a.max(-b)))
            .collect();
        let upper = classes[0].iter().fold(f64::INFINITY, |a, &b| a.min(b));
        let normal = matches!(support, SupportClass::UnboundedContinuous);
        Self {
            m,
            term,
            classes,
            sums,
            squares,
            bounded: support.is_bounded(),
            discrete: support.is_discrete(),
            lower,
            upper,
            count: base.len(),
            normal,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn is_bounded(&self) -> bool {
        self.bounded
    }

    pub fn is_discrete(&self) -> bool {
        self.discrete
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    fn class_phi(&self, c: usize, offset: f64) -> f64 {
        if self.normal {
            let n = self.classes[c].len() as f64;
            return self.squares[c] + 2.0 * offset * self.sums[c] + n * offset * offset;
        }
        let mut acc = 0.0;
        for &b in &self.classes[c] {
            acc += self.term.phi(b + offset);
            if acc == f64::NEG_INFINITY {
                break;
            }
        }
        acc
    }

    fn class_sum(&self, c: usize, offset: f64) -> f64 {
        self.sums[c] + self.classes[c].len() as f64 * offset
    }

    /// Log-likelihood at `gamma`.
    pub fn loglik(&self, gamma: &[f64]) -> f64 {
        let dot: f64 = gamma.iter().sum();
        let mut stats = LatentStats {
            count: self.count,
            sum: self.class_sum(0, -dot),
            phi: self.class_phi(0, -dot),
        };
        for (r, &g) in gamma.iter().enumerate() {
            stats.sum += self.class_sum(r + 1, g);
            stats.phi += self.class_phi(r + 1, g);
        }
        self.term.loglik(&stats)
    }

    /// Log-likelihood as a function of coordinate `r` (1-based) with the
    /// other coordinates of `gamma` held fixed.
    pub fn conditional(&self, gamma: &[f64], r: usize) -> Conditional<'_> {
        let rest: f64 = gamma
            .iter()
            .enumerate()
            .filter(|(i, _)| *i + 1 != r)
            .map(|(_, g)| g)
            .sum();
        let mut sum = 0.0;
        let mut phi = 0.0;
        for (i, &g) in gamma.iter().enumerate() {
            if i + 1 != r {
                sum += self.class_sum(i + 1, g);
                phi += self.class_phi(i + 1, g);
            }
        }
        Conditional {
            layout: self,
            r,
            rest,
            sum,
            phi,
        }
    }
}

/// Conditional log-likelihood of one latent coordinate.
pub struct Conditional<'a> {
    layout: &'a ClassLayout,
    r: usize,
    rest: f64,
    sum: f64,
    phi: f64,
}

impl Conditional<'_> {
    /// Feasible range `[L_r, U - sum_{i != r} gamma_i]` (unbounded for the
    /// normal family).
    pub fn range(&self) -> (f64, f64) {
        if self.layout.bounded {
            (self.layout.lower[self.r - 1], self.layout.upper - self.rest)
        } else {
            (f64::NEG_INFINITY, f64::INFINITY)
        }
    }

    pub fn loglik(&self, v: f64) -> f64 {
        let l = self.layout;
        let o0 = -(self.rest + v);
        let stats = LatentStats {
            count: l.count,
            sum: self.sum + l.class_sum(self.r, v) + l.class_sum(0, o0),
            phi: self.phi + l.class_phi(self.r, v) + l.class_phi(0, o0),
        };
        l.term.loglik(&stats)
    }
}

pub fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}
