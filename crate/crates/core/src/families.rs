//! Conjugate moving-sum segment families.
//!
//! Each family fixes a marginal distribution for the observed data that is
//! closed under convolution, so the latents of an order-`m` segment follow the
//! same family with a parameter divided by `m + 1`:
//!
//! | family | marginal           | latent `f_m(. | theta)`       | prior on theta            |
//! |--------|--------------------|-------------------------------|---------------------------|
//! | normal | `N(mu, sigma^2)`   | `N(mu/mbar, sigma^2/mbar)`    | normal-gamma `(mu0, lambda, alpha, beta)` |
//! | gamma  | `Gamma(lambda, theta)` (rate) | `Gamma(lambda/mbar, theta)` | `Gamma(alpha, beta)` |
//! | negbin | `NB(r, theta)`     | `NB(r/mbar, theta)`           | `Beta(alpha, beta)`       |
//!
//! The negative binomial pmf is `C(y + r - 1, y) theta^r (1 - theta)^y`, so
//! `theta` is the success probability and the marginal mean is
//! `r (1 - theta) / theta`.
//!
//! Likelihoods integrate `theta` out in closed form and are evaluated in log
//! space through sufficient statistics of the full latent sequence
//! `(gamma_1..gamma_m, y_1..y_n)`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma as GammaDist, Normal as NormalDist};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::series_space::{
    compute_bounds, latent_sequence, LatentState, SegmentBounds, SupportClass,
};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Normal,
    Gamma,
    Negbin,
}

/// A conjugate segment family with its hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FamilySpec {
    Normal {
        mu0: f64,
        lambda: f64,
        alpha: f64,
        beta: f64,
    },
    Gamma {
        lambda: f64,
        alpha: f64,
        beta: f64,
    },
    Negbin {
        r: f64,
        alpha: f64,
        beta: f64,
    },
}

/// A point of the family parameter space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Theta {
    Normal { mu: f64, sigma: f64 },
    /// Rate of the gamma family.
    Gamma { rate: f64 },
    /// Success probability of the negative binomial family.
    Negbin { prob: f64 },
}

/// Mode (or mean, see `fallback`) of the exchangeable-case posterior.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThetaEstimate {
    pub value: Theta,
    /// Set when the posterior mode was undefined and the mean was used.
    pub fallback: bool,
}

impl FamilySpec {
    pub fn kind(&self) -> FamilyKind {
        match self {
            FamilySpec::Normal { .. } => FamilyKind::Normal,
            FamilySpec::Gamma { .. } => FamilyKind::Gamma,
            FamilySpec::Negbin { .. } => FamilyKind::Negbin,
        }
    }

    pub fn support(&self) -> SupportClass {
        match self {
            FamilySpec::Normal { .. } => SupportClass::UnboundedContinuous,
            FamilySpec::Gamma { .. } => SupportClass::NonnegContinuous,
            FamilySpec::Negbin { .. } => SupportClass::NonnegDiscrete,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Domain(format!("hyperparameter {name} must be positive, got {v}")))
            }
        };
        match *self {
            FamilySpec::Normal {
                mu0,
                lambda,
                alpha,
                beta,
            } => {
                if !mu0.is_finite() {
                    return Err(Error::Domain(format!("mu0 must be finite, got {mu0}")));
                }
                positive("lambda", lambda)?;
                positive("alpha", alpha)?;
                positive("beta", beta)
            }
            FamilySpec::Gamma {
                lambda,
                alpha,
                beta,
            } => {
                positive("lambda", lambda)?;
                positive("alpha", alpha)?;
                positive("beta", beta)
            }
            FamilySpec::Negbin { r, alpha, beta } => {
                positive("r", r)?;
                positive("alpha", alpha)?;
                positive("beta", beta)
            }
        }
    }

    /// Whether `theta` lies in the parameter space of this family.
    pub fn theta_in_space(&self, theta: &Theta) -> bool {
        match (self, theta) {
            (FamilySpec::Normal { .. }, Theta::Normal { mu, sigma }) => {
                mu.is_finite() && *sigma > 0.0 && sigma.is_finite()
            }
            (FamilySpec::Gamma { .. }, Theta::Gamma { rate }) => *rate > 0.0 && rate.is_finite(),
            (FamilySpec::Negbin { .. }, Theta::Negbin { prob }) => (0.0..=1.0).contains(prob),
            _ => false,
        }
    }
}

/// `log f_m(y | theta)`; `-inf` outside the latent support.
pub fn latent_log_density(f: &FamilySpec, m: usize, theta: &Theta, y: f64) -> f64 {
    let mbar = (m + 1) as f64;
    match (f, *theta) {
        (FamilySpec::Normal { .. }, Theta::Normal { mu, sigma }) => {
            let var = sigma * sigma / mbar;
            let z = y - mu / mbar;
            -0.5 * (LN_2PI + var.ln()) - z * z / (2.0 * var)
        }
        (FamilySpec::Gamma { lambda, .. }, Theta::Gamma { rate }) => {
            if !(y > 0.0) {
                return f64::NEG_INFINITY;
            }
            let shape = lambda / mbar;
            shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * y.ln() - rate * y
        }
        (FamilySpec::Negbin { r, .. }, Theta::Negbin { prob }) => {
            if y < 0.0 || y.fract() != 0.0 {
                return f64::NEG_INFINITY;
            }
            let rm = r / mbar;
            // at prob = 1 the mass sits on zero; skip the 0 * ln 0 term there
            let fail = if y == 0.0 { 0.0 } else { y * (-prob).ln_1p() };
            ln_gamma(y + rm) - ln_gamma(y + 1.0) - ln_gamma(rm) + rm * prob.ln() + fail
        }
        _ => f64::NAN,
    }
}

/// Mode of `f_m(. | theta)`. Integer for the negative binomial family.
pub fn latent_mode(f: &FamilySpec, m: usize, theta: &Theta) -> f64 {
    let mbar = (m + 1) as f64;
    match (f, *theta) {
        (FamilySpec::Normal { .. }, Theta::Normal { mu, .. }) => mu / mbar,
        (FamilySpec::Gamma { lambda, .. }, Theta::Gamma { rate }) => {
            let shape = lambda / mbar;
            if shape > 1.0 {
                (shape - 1.0) / rate
            } else {
                0.0
            }
        }
        (FamilySpec::Negbin { r, .. }, Theta::Negbin { prob }) => {
            let rm = r / mbar;
            if rm > 1.0 && prob < 1.0 {
                ((rm - 1.0) * (1.0 - prob) / prob).floor()
            } else {
                0.0
            }
        }
        _ => f64::NAN,
    }
}

/// Central interval holding mass `eta` of a continuous latent density.
pub fn latent_central_interval(f: &FamilySpec, m: usize, theta: &Theta, eta: f64) -> (f64, f64) {
    let mbar = (m + 1) as f64;
    let (lo_p, hi_p) = (0.5 * (1.0 - eta), 0.5 * (1.0 + eta));
    match (f, *theta) {
        (FamilySpec::Normal { .. }, Theta::Normal { mu, sigma }) => {
            let d = NormalDist::new(mu / mbar, sigma / mbar.sqrt()).expect("valid normal");
            (d.inverse_cdf(lo_p), d.inverse_cdf(hi_p))
        }
        (FamilySpec::Gamma { lambda, .. }, Theta::Gamma { rate }) => {
            let d = GammaDist::new(lambda / mbar, rate).expect("valid gamma");
            (d.inverse_cdf(lo_p), d.inverse_cdf(hi_p))
        }
        _ => (f64::NEG_INFINITY, f64::INFINITY),
    }
}

/// Per-latent contribution to the sufficient statistics of one family and order.
///
/// The statistics of a latent sequence are `(count, sum(y - shift), sum(phi(y)))`
/// where `phi` is `(y - shift)^2` for the normal family, `ln y` for the gamma
/// family and `lnGamma(y + r_m) - lnGamma(y + 1)` for the negative binomial
/// family. The shift is only non-zero for the normal family, where it keeps
/// the centred second moment well conditioned.
#[derive(Clone, Debug)]
pub struct LatentTerm {
    family: FamilySpec,
    mbar: f64,
    shift: f64,
    table: Option<std::rc::Rc<Vec<f64>>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LatentStats {
    pub count: usize,
    pub sum: f64,
    pub phi: f64,
}

impl LatentStats {
    pub fn add(&mut self, term: &LatentTerm, y: f64) {
        self.count += 1;
        self.sum += y - term.shift;
        self.phi += term.phi(y);
    }
}

impl LatentTerm {
    pub fn new(family: &FamilySpec, m: usize, shift: f64) -> Self {
        let shift = match family {
            FamilySpec::Normal { .. } => shift,
            _ => 0.0,
        };
        Self {
            family: family.clone(),
            mbar: (m + 1) as f64,
            shift,
            table: None,
        }
    }

    /// Attaches a lookup table of `phi(k)` for integer `k` in `0..table.len()`.
    pub fn with_table(mut self, table: std::rc::Rc<Vec<f64>>) -> Self {
        self.table = Some(table);
        self
    }

    /// Builds the lookup table of `phi(k)` for `k = 0..=max_value`
    /// (negative binomial only).
    pub fn build_table(family: &FamilySpec, m: usize, max_value: usize) -> Option<Vec<f64>> {
        match *family {
            FamilySpec::Negbin { r, .. } => {
                let rm = r / (m + 1) as f64;
                Some(
                    (0..=max_value)
                        .map(|k| ln_gamma(k as f64 + rm) - ln_gamma(k as f64 + 1.0))
                        .collect(),
                )
            }
            _ => None,
        }
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    #[inline]
    pub fn phi(&self, y: f64) -> f64 {
        match self.family {
            FamilySpec::Normal { .. } => {
                let d = y - self.shift;
                d * d
            }
            FamilySpec::Gamma { .. } => {
                if y > 0.0 {
                    y.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            FamilySpec::Negbin { r, .. } => {
                if y < 0.0 || y.fract() != 0.0 {
                    return f64::NEG_INFINITY;
                }
                if let Some(t) = &self.table {
                    if let Some(v) = t.get(y as usize) {
                        return *v;
                    }
                }
                let rm = r / self.mbar;
                ln_gamma(y + rm) - ln_gamma(y + 1.0)
            }
        }
    }

    pub fn stats(&self, latents: &[f64]) -> LatentStats {
        let mut s = LatentStats::default();
        for &y in latents {
            s.add(self, y);
        }
        s
    }

    /// Closed-form `log L(x, gamma | m)` from the statistics of all latents.
    pub fn loglik(&self, s: &LatentStats) -> f64 {
        if s.phi == f64::NEG_INFINITY || s.phi.is_nan() {
            return f64::NEG_INFINITY;
        }
        let n = s.count as f64;
        let mbar = self.mbar;
        match self.family {
            FamilySpec::Normal {
                mu0,
                lambda,
                alpha,
                beta,
            } => {
                if s.count == 0 {
                    return 0.0;
                }
                let a = n / mbar;
                let lambda_post = a + lambda;
                let alpha_post = alpha + 0.5 * n;
                let centred = (s.phi - s.sum * s.sum / n).max(0.0);
                let mean = self.shift + s.sum / n;
                let dev = mbar * mean - mu0;
                let beta_post =
                    beta + 0.5 * mbar * centred + a * lambda * dev * dev / (2.0 * lambda_post);
                0.5 * n * (mbar.ln() - LN_2PI) + 0.5 * (lambda.ln() - lambda_post.ln())
                    + alpha * beta.ln()
                    - ln_gamma(alpha)
                    + ln_gamma(alpha_post)
                    - alpha_post * beta_post.ln()
            }
            FamilySpec::Gamma {
                lambda,
                alpha,
                beta,
            } => {
                let shape = lambda / mbar;
                ln_gamma(alpha + n * shape) - ln_gamma(alpha) - n * ln_gamma(shape)
                    + alpha * beta.ln()
                    + (shape - 1.0) * s.phi
                    - (alpha + n * shape) * (beta + s.sum).ln()
            }
            FamilySpec::Negbin { r, alpha, beta } => {
                let rm = r / mbar;
                ln_beta(alpha + n * rm, beta + s.sum) - ln_beta(alpha, beta) + s.phi
                    - n * ln_gamma(rm)
            }
        }
    }
}

/// Shift used to centre the normal family's statistics for a segment.
pub fn stat_shift(f: &FamilySpec, x: &[f64], m: usize) -> f64 {
    match f {
        FamilySpec::Normal { .. } if !x.is_empty() => {
            x.iter().sum::<f64>() / (x.len() as f64 * (m + 1) as f64)
        }
        _ => 0.0,
    }
}

/// `log L(x_{1:n}, gamma_{1:m} | m)` with `theta` integrated out.
///
/// Returns `-inf` when a reconstructed latent leaves the family support.
pub fn joint_loglik(f: &FamilySpec, x: &[f64], gamma: &[f64]) -> Result<f64> {
    f.validate()?;
    let m = gamma.len();
    let term = LatentTerm::new(f, m, stat_shift(f, x, m));
    let latents = latent_sequence(x, gamma);
    Ok(term.loglik(&term.stats(&latents)))
}

/// Same as [`joint_loglik`] for a [`LatentState`].
pub fn joint_loglik_state(f: &FamilySpec, x: &[f64], s: &LatentState) -> Result<f64> {
    joint_loglik(f, x, &s.gamma)
}

/// Mode of the conjugate posterior of `theta` under the exchangeable model.
///
/// * normal: joint mode of the normal-gamma posterior over `(mu, sigma^-2)`;
/// * gamma: `(alpha + n lambda - 1) / (beta + sum x)`, or the mean when the
///   posterior shape is at most one;
/// * negbin: mode of `Beta(alpha + n r, beta + sum x)`, or its mean when the
///   beta density has no interior or boundary maximum.
pub fn theta_hat(f: &FamilySpec, x: &[f64]) -> Result<ThetaEstimate> {
    f.validate()?;
    if x.is_empty() {
        return Err(Error::Domain("theta_hat needs at least one observation".into()));
    }
    let n = x.len() as f64;
    let sum: f64 = x.iter().sum();
    Ok(match *f {
        FamilySpec::Normal {
            mu0,
            lambda,
            alpha,
            beta,
        } => {
            let mean = sum / n;
            let ss: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
            let lambda_n = lambda + n;
            let mu_n = (lambda * mu0 + sum) / lambda_n;
            let alpha_n = alpha + 0.5 * n;
            let beta_n = beta + 0.5 * ss + lambda * n * (mean - mu0).powi(2) / (2.0 * lambda_n);
            // density of (mu, tau) is proportional to tau^(alpha_n - 1/2) exp(-tau (...))
            let tau = (alpha_n - 0.5) / beta_n;
            ThetaEstimate {
                value: Theta::Normal {
                    mu: mu_n,
                    sigma: tau.recip().sqrt(),
                },
                fallback: false,
            }
        }
        FamilySpec::Gamma {
            lambda,
            alpha,
            beta,
        } => {
            let shape = alpha + n * lambda;
            let rate = beta + sum;
            let (value, fallback) = if shape > 1.0 {
                ((shape - 1.0) / rate, false)
            } else {
                (shape / rate, true)
            };
            ThetaEstimate {
                value: Theta::Gamma { rate: value },
                fallback,
            }
        }
        FamilySpec::Negbin { r, alpha, beta } => {
            let a = alpha + n * r;
            let b = beta + sum;
            let (prob, fallback) = if a >= 1.0 && b >= 1.0 && a + b > 2.0 {
                ((a - 1.0) / (a + b - 2.0), false)
            } else {
                (a / (a + b), true)
            };
            ThetaEstimate {
                value: Theta::Negbin { prob },
                fallback,
            }
        }
    })
}

/// Variance of the order-`m` latent density, `g(theta, m)`.
///
/// Jumps `x_t - x_{t-1} = y_t - y_{t-m-1}` then have variance `2 g(theta, m)`.
pub fn jump_variance_g(f: &FamilySpec, theta: &Theta, m: usize) -> Result<f64> {
    let mbar = (m + 1) as f64;
    match (f, *theta) {
        (FamilySpec::Normal { .. }, Theta::Normal { sigma, .. }) if sigma > 0.0 => {
            Ok(sigma * sigma / mbar)
        }
        (FamilySpec::Gamma { lambda, .. }, Theta::Gamma { rate }) if rate > 0.0 => {
            Ok(lambda / mbar / (rate * rate))
        }
        (FamilySpec::Negbin { r, .. }, Theta::Negbin { prob }) if prob > 0.0 && prob < 1.0 => {
            Ok(r / mbar * (1.0 - prob) / (prob * prob))
        }
        _ => Err(Error::Domain(format!(
            "theta {theta:?} is not an interior point for this family"
        ))),
    }
}

/// Feasible initial latents maximising `prod_r f_{m'}(gamma_r | theta_hat)`.
///
/// The objective is separable with identical unimodal factors, so the optimum
/// over `{gamma_r >= L_r, sum <= U}` is `gamma_r = max(L_r, v)` for a common
/// water level `v` no larger than the mode. Discrete families use the largest
/// integer level and distribute the remaining units one by one.
pub fn gamma_star(
    f: &FamilySpec,
    x: &[f64],
    m_prime: usize,
    theta_hat: &ThetaEstimate,
) -> Result<LatentState> {
    if m_prime == 0 {
        return Ok(LatentState::exchangeable());
    }
    let mode = latent_mode(f, m_prime, &theta_hat.value);
    let support = f.support();
    if !support.is_bounded() {
        return Ok(LatentState::new(vec![mode; m_prime]));
    }
    let bounds = compute_bounds(x, m_prime);
    let tol = crate::series_space::feasibility_tolerance(x, support);
    if bounds.slack < -tol {
        return Err(Error::Domain(format!(
            "order {m_prime} is infeasible for this segment (slack {})",
            bounds.slack
        )));
    }
    let lower = &bounds.lower;
    let clamped: Vec<f64> = lower.iter().map(|&l| l.max(mode)).collect();
    if clamped.iter().sum::<f64>() <= bounds.upper {
        return Ok(LatentState::new(pull_inside(support, &bounds, clamped)));
    }
    let level = water_level(lower, bounds.upper);
    if support.is_discrete() {
        let v = level.floor();
        let mut gamma: Vec<f64> = lower.iter().map(|&l| l.max(v)).collect();
        let mut remaining = (bounds.upper - gamma.iter().sum::<f64>()).round() as i64;
        for (g, &l) in gamma.iter_mut().zip(lower) {
            if remaining <= 0 {
                break;
            }
            if l <= v {
                *g += 1.0;
                remaining -= 1;
            }
        }
        Ok(LatentState::new(gamma))
    } else {
        let mut gamma: Vec<f64> = lower.iter().map(|&l| l.max(level)).collect();
        // pin the sum onto the face exactly when rounding pushed it over
        let excess = gamma.iter().sum::<f64>() - bounds.upper;
        if excess > 0.0 {
            if let Some(g) = gamma
                .iter_mut()
                .zip(lower)
                .filter(|(g, l)| **g > **l)
                .map(|(g, _)| g)
                .next()
            {
                *g -= excess;
            }
        }
        Ok(LatentState::new(pull_inside(support, &bounds, gamma)))
    }
}

/// Moves a continuous boundary point a tiny fraction towards the centre of
/// the polytope so that every implied latent is strictly positive.
fn pull_inside(support: SupportClass, bounds: &SegmentBounds, gamma: Vec<f64>) -> Vec<f64> {
    const PULL: f64 = 1e-6;
    if support != SupportClass::NonnegContinuous || !(bounds.slack > 0.0) {
        return gamma;
    }
    let inner = bounds.slack / (bounds.m + 1) as f64;
    gamma
        .iter()
        .zip(&bounds.lower)
        .map(|(&g, &l)| (1.0 - PULL) * g + PULL * (l + inner))
        .collect()
}

/// Level `v` solving `sum_r max(L_r, v) = upper`, assuming `sum(L) <= upper`.
fn water_level(lower: &[f64], upper: f64) -> f64 {
    let mut sorted = lower.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let m = sorted.len();
    let mut tail: f64 = sorted.iter().sum();
    for j in 1..=m {
        // first j coordinates raised to v, the rest stay at their bounds
        tail -= sorted[j - 1];
        let v = (upper - tail) / j as f64;
        let next = if j < m { sorted[j] } else { f64::INFINITY };
        if v <= next {
            return v.max(sorted[j - 1]);
        }
    }
    sorted[m - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn negbin(r: f64, alpha: f64, beta: f64) -> FamilySpec {
        FamilySpec::Negbin { r, alpha, beta }
    }

    #[test]
    fn standard_normal_mode_density() {
        let f = FamilySpec::Normal {
            mu0: 0.0,
            lambda: 1.0,
            alpha: 1.0,
            beta: 1.0,
        };
        let theta = Theta::Normal { mu: 0.0, sigma: 1.0 };
        let v = latent_log_density(&f, 0, &theta, 0.0);
        assert!((v + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
    }

    #[test]
    fn negbin_density_at_unit_probability() {
        let f = FamilySpec::Negbin {
            r: 3.0,
            alpha: 1.0,
            beta: 1.0,
        };
        let theta = Theta::Negbin { prob: 1.0 };
        assert!(latent_log_density(&f, 1, &theta, 0.0).abs() < 1e-12);
        assert_eq!(latent_log_density(&f, 1, &theta, 2.0), f64::NEG_INFINITY);
    }

    #[test]
    fn negbin_density_outside_support() {
        let f = negbin(3.0, 1.0, 1.0);
        let theta = Theta::Negbin { prob: 0.4 };
        for m in 0..4 {
            assert_eq!(latent_log_density(&f, m, &theta, -1.0), f64::NEG_INFINITY);
            assert_eq!(latent_log_density(&f, m, &theta, 1.5), f64::NEG_INFINITY);
        }
    }

    #[test]
    fn negbin_single_point_closed_form() {
        let (r, alpha, beta) = (3.0, 2.0, 5.0);
        let f = negbin(r, alpha, beta);
        for x1 in [0.0, 1.0, 4.0, 17.0] {
            let got = joint_loglik(&f, &[x1], &[]).unwrap();
            let binom = ln_gamma(x1 + r) - ln_gamma(x1 + 1.0) - ln_gamma(r);
            let want = ln_beta(alpha + r, beta + x1) - ln_beta(alpha, beta) + binom;
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn bounded_infeasible_gamma_is_neg_infinity() {
        let x = [5.0, 3.0, 4.0, 2.0, 6.0, 1.0, 4.0];
        let nb = negbin(3.0, 1.0, 1.0);
        assert_eq!(joint_loglik(&nb, &x, &[0.0]).unwrap(), f64::NEG_INFINITY);
        let ga = FamilySpec::Gamma {
            lambda: 2.0,
            alpha: 1.0,
            beta: 1.0,
        };
        assert_eq!(joint_loglik(&ga, &x, &[0.5]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn invalid_hyperparameters_are_domain_errors() {
        let f = negbin(-1.0, 1.0, 1.0);
        assert!(matches!(joint_loglik(&f, &[1.0], &[]), Err(Error::Domain(_))));
    }

    #[test]
    fn theta_hat_examples() {
        let est = theta_hat(&negbin(1.0, 1.0, 1.0), &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(est.value, Theta::Negbin { prob: 1.0 });
        let ga = FamilySpec::Gamma {
            lambda: 1.0,
            alpha: 2.0,
            beta: 1.0,
        };
        let est = theta_hat(&ga, &[1.0]).unwrap();
        assert_eq!(est.value, Theta::Gamma { rate: 1.0 });
        assert!(!est.fallback);
    }

    #[test]
    fn theta_hat_falls_back_to_mean() {
        let ga = FamilySpec::Gamma {
            lambda: 0.1,
            alpha: 0.5,
            beta: 1.0,
        };
        let est = theta_hat(&ga, &[2.0]).unwrap();
        assert!(est.fallback);
        assert_eq!(est.value, Theta::Gamma { rate: 0.6 / 3.0 });
    }

    #[test]
    fn theta_hat_normal_is_consistent() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let d = Normal::new(3.0, 2.0).unwrap();
        let x: Vec<f64> = (0..200_000).map(|_| d.sample(&mut rng)).collect();
        let f = FamilySpec::Normal {
            mu0: 0.0,
            lambda: 1.0,
            alpha: 1.0,
            beta: 1.0,
        };
        match theta_hat(&f, &x).unwrap().value {
            Theta::Normal { mu, sigma } => {
                assert!((mu - 3.0).abs() < 0.02);
                assert!((sigma - 2.0).abs() < 0.02);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn jump_variance_examples() {
        let f = FamilySpec::Normal {
            mu0: 0.0,
            lambda: 1.0,
            alpha: 1.0,
            beta: 1.0,
        };
        let theta = Theta::Normal { mu: 0.0, sigma: 1.0 };
        assert_eq!(jump_variance_g(&f, &theta, 0).unwrap(), 1.0);
        assert_eq!(jump_variance_g(&f, &theta, 1).unwrap(), 0.5);
        let nb = negbin(300.0, 1.0, 1.0);
        let g = jump_variance_g(&nb, &Theta::Negbin { prob: 0.4 }, 2).unwrap();
        assert!((g - 375.0).abs() < 1e-9);
        assert!(jump_variance_g(&nb, &Theta::Negbin { prob: 0.0 }, 2).is_err());
    }

    #[test]
    fn gamma_star_unbounded_is_mode() {
        let f = FamilySpec::Normal {
            mu0: 0.0,
            lambda: 1.0,
            alpha: 1.0,
            beta: 1.0,
        };
        let est = ThetaEstimate {
            value: Theta::Normal { mu: 6.0, sigma: 1.0 },
            fallback: false,
        };
        let s = gamma_star(&f, &[1.0, 2.0, 3.0], 2, &est).unwrap();
        assert_eq!(s.gamma, vec![2.0, 2.0]);
    }

    #[test]
    fn gamma_star_zero_slack_is_lower_vertex() {
        let x = [1.0, 2.0, 5.0, 3.0];
        let b = compute_bounds(&x, 1);
        assert_eq!(b.slack, 0.0);
        let f = negbin(50.0, 1.0, 1.0);
        let est = ThetaEstimate {
            value: Theta::Negbin { prob: 0.1 },
            fallback: false,
        };
        let s = gamma_star(&f, &x, 1, &est).unwrap();
        assert_eq!(s.gamma, b.lower);
    }

    #[test]
    fn gamma_star_rejects_infeasible_order() {
        let x = [5.0, 3.0, 4.0, 2.0, 6.0, 1.0, 4.0];
        let f = negbin(3.0, 1.0, 1.0);
        let est = theta_hat(&f, &x).unwrap();
        assert!(matches!(gamma_star(&f, &x, 1, &est), Err(Error::Domain(_))));
    }

    #[test]
    fn water_level_solves_sum() {
        let lower = [3.0, 0.0, 1.0, 7.0];
        let v = water_level(&lower, 15.0);
        let s: f64 = lower.iter().map(|&l| l.max(v)).sum();
        assert!((s - 15.0).abs() < 1e-12, "level {v} gives {s}");
    }
}
