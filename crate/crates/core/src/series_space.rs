//! Deterministic structure linking an observed segment to its latent variables.
//!
//! A segment `x_1..x_n` with order of dependence `m` is the moving sum
//! `x_t = y_t + y_{t-1} + ... + y_{t-m}` of iid latents. Given the `m` initial
//! latents `gamma = (y_{-m+1}, ..., y_0)` every other latent is implied by the
//! data. When the latent support is bounded below by zero the admissible
//! `gamma` form the polytope
//!
//! ```text
//! { gamma : gamma_r >= L_r for all r, sum(gamma) <= U }
//! ```
//!
//! whose bounds are computed by [`compute_bounds`]. The order `m` is feasible
//! iff the slack `U - sum(L)` is non-negative.
//!
//! Time indices in this module are 1-based in the documentation and 0-based
//! in slices; the convention `x_0 = 0` is applied inside the operations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Support class of an observed series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupportClass {
    UnboundedContinuous,
    NonnegContinuous,
    NonnegDiscrete,
}

impl SupportClass {
    pub fn is_bounded(self) -> bool {
        !matches!(self, SupportClass::UnboundedContinuous)
    }

    /// Why `v` cannot be an observation with this support, if it cannot.
    pub fn check(self, v: f64) -> std::result::Result<(), String> {
        if !v.is_finite() {
            return Err(format!("non-finite value {v}"));
        }
        if self.is_bounded() && v < 0.0 {
            return Err(format!("negative value {v} for non-negative support"));
        }
        if self.is_discrete() && v.fract() != 0.0 {
            return Err(format!("non-integer value {v} for discrete support"));
        }
        Ok(())
    }

    pub fn is_discrete(self) -> bool {
        matches!(self, SupportClass::NonnegDiscrete)
    }
}

/// A finite observed series together with its declared support.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedSeries {
    values: Vec<f64>,
    support: SupportClass,
}

impl ObservedSeries {
    pub fn new(values: Vec<f64>, support: SupportClass) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("series must contain at least one value".into()));
        }
        for (i, &v) in values.iter().enumerate() {
            support
                .check(v)
                .map_err(|why| Error::Data(format!("row {}: {why}", i + 1)))?;
        }
        Ok(Self { values, support })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> SupportClass {
        self.support
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sub-series `x_{s..=t}` with 1-based inclusive bounds.
    pub fn subseries(&self, s: usize, t: usize) -> Result<ObservedSeries> {
        if s == 0 || s > t || t > self.len() {
            return Err(Error::Range {
                offset: t as i64,
                len: self.len(),
            });
        }
        Ok(ObservedSeries {
            values: self.values[s - 1..t].to_vec(),
            support: self.support,
        })
    }
}

/// Order of dependence and initial latent values of one segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    pub m: usize,
    pub gamma: Vec<f64>,
    pub gamma_dot: f64,
}

impl LatentState {
    pub fn new(gamma: Vec<f64>) -> Self {
        let gamma_dot = gamma.iter().sum();
        Self {
            m: gamma.len(),
            gamma,
            gamma_dot,
        }
    }

    pub fn exchangeable() -> Self {
        Self::new(Vec::new())
    }
}

/// Bounds of the feasible polytope for one order `m`.
///
/// For `m = 0` the bounds are degenerate: `upper` is `+inf`, `lower` is empty
/// and `slack` is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentBounds {
    pub m: usize,
    pub upper: f64,
    pub lower: Vec<f64>,
    pub slack: f64,
}

impl SegmentBounds {
    pub fn is_feasible(&self) -> bool {
        self.slack >= 0.0
    }

    /// Bounds-route membership test with an absolute tolerance.
    pub fn contains(&self, gamma: &[f64], tol: f64) -> bool {
        if gamma.len() != self.m {
            return false;
        }
        if self.m == 0 {
            return true;
        }
        let mut sum = 0.0;
        for (&g, &l) in gamma.iter().zip(&self.lower) {
            if !(g >= l - tol) {
                return false;
            }
            sum += g;
        }
        sum <= self.upper + tol
    }
}

/// `(x_1 - x_0, ..., x_n - x_{n-1})` with `x_0 = 0`.
pub fn backward_differences(x: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    x.iter()
        .map(|&v| {
            let d = v - prev;
            prev = v;
            d
        })
        .collect()
}

/// `(x_1 - x_2, ..., x_{n-1} - x_n)`, i.e. `-backward_differences` shifted by one.
pub fn forward_differences(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[0] - w[1]).collect()
}

/// Latents `y_1..y_n` implied by the data and the initial latents `gamma`.
pub fn reconstruct_latents(x: &[f64], gamma: &[f64]) -> Vec<f64> {
    let mut full = latent_sequence(x, gamma);
    full.drain(..gamma.len());
    full
}

/// Full latent sequence `(gamma_1, ..., gamma_m, y_1, ..., y_n)`.
///
/// Uses the difference equation `y_t = y_{t-m-1} + (x_t - x_{t-1})` for
/// `t >= 2` and `y_1 = x_1 - sum(gamma)`.
pub fn latent_sequence(x: &[f64], gamma: &[f64]) -> Vec<f64> {
    let m = gamma.len();
    let mut out = Vec::with_capacity(m + x.len());
    out.extend_from_slice(gamma);
    if m == 0 {
        out.extend_from_slice(x);
        return out;
    }
    let mut prev_x = 0.0;
    for (i, &xt) in x.iter().enumerate() {
        let y = if i == 0 {
            xt - gamma.iter().sum::<f64>()
        } else {
            // out index of y_t is t + m - 1; y_{t-m-1} sits m+1 slots earlier
            out[i + m - (m + 1)] + (xt - prev_x)
        };
        out.push(y);
        prev_x = xt;
    }
    out
}

/// Applies the shift map `steps` times to a window of `m` consecutive latents
/// ending at offset `u` (the window holds `y_{u-m+1..=u}`).
///
/// Positive steps move forward using `x_{u+1}, ...`; negative steps move
/// backward using `x_u, x_{u-1}, ...`.
pub fn shift_window(x: &[f64], window: &[f64], offset: usize, steps: i64) -> Result<Vec<f64>> {
    let n = x.len();
    let target = offset as i64 + steps;
    if offset > n || target < 0 || target > n as i64 {
        return Err(Error::Range {
            offset: target.max(offset as i64),
            len: n,
        });
    }
    let m = window.len();
    let mut w = window.to_vec();
    if m == 0 || steps == 0 {
        return Ok(w);
    }
    let mut u = offset;
    if steps > 0 {
        for _ in 0..steps {
            let next = x[u] - w.iter().sum::<f64>();
            w.rotate_left(1);
            w[m - 1] = next;
            u += 1;
        }
    } else {
        for _ in 0..(-steps) {
            // x_u = y_u + ... + y_{u-m}
            let prev = x[u - 1] - w.iter().sum::<f64>();
            w.rotate_right(1);
            w[0] = prev;
            u -= 1;
        }
    }
    Ok(w)
}

/// Bounds `U^m`, `L^m_{1..m}` and slack `D^m` of the feasible polytope.
///
/// Runs in `O(n)` with streaming partial sums.
pub fn compute_bounds(x: &[f64], m: usize) -> SegmentBounds {
    if m == 0 {
        return SegmentBounds {
            m: 0,
            upper: f64::INFINITY,
            lower: Vec::new(),
            slack: 0.0,
        };
    }
    let n = x.len();
    let mbar = m + 1;
    // latents with t = q*mbar + 1 carry -sum(gamma)
    let mut partial = 0.0;
    let mut upper = f64::INFINITY;
    let mut t = 1;
    let mut prev_x = 0.0;
    while t <= n {
        partial += x[t - 1] - prev_x;
        upper = upper.min(partial);
        if t + mbar <= n {
            prev_x = x[t + mbar - 2];
        }
        t += mbar;
    }
    // latents with t = q*mbar + r + 1 carry +gamma_r
    let mut lower = vec![0.0; m];
    for (r, l) in (1..=m).zip(lower.iter_mut()) {
        let mut partial = 0.0;
        let mut j = r;
        while j < n {
            partial += x[j - 1] - x[j];
            if partial > *l {
                *l = partial;
            }
            j += mbar;
        }
    }
    let slack = upper - lower.iter().sum::<f64>();
    SegmentBounds {
        m,
        upper,
        lower,
        slack,
    }
}

/// Absolute tolerance for the `y_t >= 0` checks.
///
/// Zero for discrete data; `1e-12` times the data scale for continuous data.
pub fn feasibility_tolerance(x: &[f64], support: SupportClass) -> f64 {
    match support {
        SupportClass::NonnegContinuous => {
            1e-12 * x.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()))
        }
        _ => 0.0,
    }
}

/// Whether the order `m` is feasible for the data.
pub fn membership_m(x: &[f64], support: SupportClass, m: usize) -> bool {
    if m == 0 || !support.is_bounded() {
        return true;
    }
    compute_bounds(x, m).slack >= -feasibility_tolerance(x, support)
}

/// Whether `gamma` lies in the feasible set, decided through the bounds.
pub fn membership_gamma(x: &[f64], support: SupportClass, gamma: &[f64]) -> bool {
    if !gamma_in_support(support, gamma) {
        return false;
    }
    if gamma.is_empty() || !support.is_bounded() {
        return true;
    }
    let tol = feasibility_tolerance(x, support);
    compute_bounds(x, gamma.len()).contains(gamma, tol)
}

/// Same decision as [`membership_gamma`], made by reconstructing every latent.
pub fn membership_gamma_by_scan(x: &[f64], support: SupportClass, gamma: &[f64]) -> bool {
    if !gamma_in_support(support, gamma) {
        return false;
    }
    if !support.is_bounded() {
        return true;
    }
    let tol = feasibility_tolerance(x, support);
    latent_sequence(x, gamma).iter().all(|&y| y >= -tol)
}

fn gamma_in_support(support: SupportClass, gamma: &[f64]) -> bool {
    gamma.iter().all(|&g| {
        g.is_finite()
            && match support {
                SupportClass::UnboundedContinuous => true,
                SupportClass::NonnegContinuous => true,
                SupportClass::NonnegDiscrete => g.fract() == 0.0,
            }
    })
}

/// Aggregation map onto an order `m_prime` whose `m_prime + 1` divides `m + 1`.
///
/// `out_r = sum_{j < l} gamma_{j (m_prime+1) + r}` for `r = 1..=m_prime`.
pub fn aggregate_j(gamma: &[f64], m_prime: usize) -> Result<Vec<f64>> {
    let m = gamma.len();
    let (mbar, mbar_p) = (m + 1, m_prime + 1);
    if m_prime > m || mbar % mbar_p != 0 {
        return Err(Error::Domain(format!(
            "order {m_prime} does not aggregate order {m}: {mbar_p} does not divide {mbar}"
        )));
    }
    let ell = mbar / mbar_p;
    Ok((1..=m_prime)
        .map(|r| (0..ell).map(|j| gamma[j * mbar_p + r - 1]).sum())
        .collect())
}

/// Orders `m'` with `m' + 1` dividing `m + 1`, ascending.
pub fn divisor_orders(m: usize) -> Vec<usize> {
    let mbar = m + 1;
    (1..=mbar).filter(|d| mbar.is_multiple_of(*d)).map(|d| d - 1).collect()
}
