//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

pub mod props;

use std::collections::BTreeMap;

use mvsum::families::{FamilySpec, Theta};
use mvsum::series_space::latent_sequence;
use mvsum::simulator::simulate_segment;
use quadrature::double_exponential;
use rand::Rng;
use statrs::distribution::{Beta, Continuous, Discrete, Gamma, NegativeBinomial, Normal};

/// `ln` of the integral of `exp(log_f)` over `[lo, hi]`.
///
/// A coarse scan locates the region within `60` nats of the maximum, which is
/// then integrated with the double-exponential rule after factoring out the
/// maximum.
pub fn log_integral(log_f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let steps = 400;
    let h = (hi - lo) / steps as f64;
    let grid: Vec<(f64, f64)> = (0..=steps)
        .map(|i| {
            let u = lo + i as f64 * h;
            (u, log_f(u))
        })
        .collect();
    let peak = grid.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let inside: Vec<f64> = grid.iter().filter(|p| p.1 > peak - 60.0).map(|p| p.0).collect();
    let a = (inside[0] - h).max(lo);
    let b = (inside[inside.len() - 1] + h).min(hi);
    let g = |u: f64| {
        let v = log_f(u) - peak;
        if v.is_finite() {
            v.exp()
        } else {
            0.0
        }
    };
    let out = double_exponential::integrate(g, a, b, 1e-13);
    peak + out.integral.ln()
}

fn order_ln_pdf(f: &FamilySpec, m: usize, theta: &Theta, y: f64) -> f64 {
    let mbar = (m + 1) as f64;
    match (f, *theta) {
        (FamilySpec::Normal { .. }, Theta::Normal { mu, sigma }) => {
            Normal::new(mu / mbar, sigma / mbar.sqrt()).unwrap().ln_pdf(y)
        }
        (FamilySpec::Gamma { lambda, .. }, Theta::Gamma { rate }) => {
            if y <= 0.0 {
                return f64::NEG_INFINITY;
            }
            Gamma::new(lambda / mbar, rate).unwrap().ln_pdf(y)
        }
        (FamilySpec::Negbin { r, .. }, Theta::Negbin { prob }) => {
            if y < 0.0 || y.fract() != 0.0 {
                return f64::NEG_INFINITY;
            }
            NegativeBinomial::new(r / mbar, prob).unwrap().ln_pmf(y as u64)
        }
        _ => unreachable!(),
    }
}

/// `ln` of the latent likelihood with `theta` integrated numerically against
/// its prior.
pub fn marginal_oracle(f: &FamilySpec, m: usize, latents: &[f64]) -> f64 {
    let mbar = (m + 1) as f64;
    match *f {
        FamilySpec::Normal {
            mu0,
            lambda,
            alpha,
            beta,
        } => {
            let n = latents.len() as f64;
            let mean = latents.iter().sum::<f64>() / n;
            let prior_tau = Gamma::new(alpha, beta).unwrap();
            // outer variable u = ln tau; inner variable mu
            let outer = |u: f64| {
                let tau = u.exp();
                let sd = 1.0 / (tau * (lambda + n / mbar)).sqrt();
                let centre = (lambda * mu0 + mbar * n * mean / mbar) / (lambda + n / mbar);
                let centre = if centre.is_finite() { centre } else { mu0 };
                let inner = |mu: f64| {
                    let sigma = tau.recip().sqrt();
                    let theta = Theta::Normal { mu, sigma };
                    let prior = Normal::new(mu0, 1.0 / (lambda * tau).sqrt()).unwrap().ln_pdf(mu);
                    prior + latents.iter().map(|&y| order_ln_pdf(f, m, &theta, y)).sum::<f64>()
                };
                let width = 40.0 * sd + 40.0 * (centre - mu0).abs();
                log_integral(inner, centre - width, centre + width) + prior_tau.ln_pdf(tau) + u
            };
            let mode = ((alpha + 0.5 * n) / beta).ln();
            log_integral(outer, mode - 40.0, mode + 15.0)
        }
        FamilySpec::Gamma { alpha, beta, .. } => {
            let prior = Gamma::new(alpha, beta).unwrap();
            let log_f = |u: f64| {
                let rate = u.exp();
                let theta = Theta::Gamma { rate };
                prior.ln_pdf(rate) + u + latents.iter().map(|&y| order_ln_pdf(f, m, &theta, y)).sum::<f64>()
            };
            log_integral(log_f, -40.0, 25.0)
        }
        FamilySpec::Negbin { alpha, beta, .. } => {
            let prior = Beta::new(alpha, beta).unwrap();
            // logit scale keeps both endpoints of (0, 1) reachable
            let log_f = |u: f64| {
                let prob = 1.0 / (1.0 + (-u).exp());
                let theta = Theta::Negbin { prob };
                let jac = -(u.abs()) - 2.0 * (-(u.abs())).exp().ln_1p();
                prior.ln_pdf(prob) + jac + latents.iter().map(|&y| order_ln_pdf(f, m, &theta, y)).sum::<f64>()
            };
            log_integral(log_f, -40.0, 40.0)
        }
    }
}

/// Oracle value of `log L(x, gamma | m)`.
pub fn joint_loglik_oracle(f: &FamilySpec, x: &[f64], gamma: &[f64]) -> f64 {
    let latents = latent_sequence(x, gamma);
    marginal_oracle(f, gamma.len(), &latents)
}

/// A random hyperparameter set of the given kind.
pub fn random_family<R: Rng>(kind: usize, rng: &mut R) -> FamilySpec {
    match kind {
        0 => FamilySpec::Normal {
            mu0: rng.random_range(-2.0..2.0),
            lambda: rng.random_range(0.5..3.0),
            alpha: rng.random_range(1.0..4.0),
            beta: rng.random_range(0.5..3.0),
        },
        1 => FamilySpec::Gamma {
            lambda: rng.random_range(0.5..5.0),
            alpha: rng.random_range(1.0..4.0),
            beta: rng.random_range(0.5..3.0),
        },
        _ => FamilySpec::Negbin {
            r: rng.random_range(1.0..10.0),
            alpha: rng.random_range(0.5..4.0),
            beta: rng.random_range(0.5..4.0),
        },
    }
}

/// A feasible segment of length `n` and order `m` with its true latents.
pub fn random_instance<R: Rng>(f: &FamilySpec, n: usize, m: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let theta = match f {
        FamilySpec::Normal { .. } => Theta::Normal {
            mu: rng.random_range(-3.0..3.0),
            sigma: rng.random_range(0.5..2.0),
        },
        FamilySpec::Gamma { .. } => Theta::Gamma {
            rate: rng.random_range(0.5..3.0),
        },
        FamilySpec::Negbin { .. } => Theta::Negbin {
            prob: rng.random_range(0.2..0.8),
        },
    };
    simulate_segment(f, &theta, m, n, rng)
}

/// Exact posterior over segmentations of the exchangeable model by enumerating
/// all `2^(T-1)` changepoint sets, with segment marginals from `segment_ln`.
pub fn enumerate_posterior(
    t_len: usize,
    p: f64,
    segment_ln: impl Fn(usize, usize) -> f64,
) -> BTreeMap<Vec<usize>, f64> {
    let mut cache = BTreeMap::new();
    let mut ln_seg = |a: usize, b: usize| *cache.entry((a, b)).or_insert_with(|| segment_ln(a, b));
    let mut logs = Vec::new();
    for mask in 0u64..(1 << (t_len - 1)) {
        let tau: Vec<usize> = (0..t_len - 1).filter(|i| mask >> i & 1 == 1).map(|i| i + 2).collect();
        let k = tau.len();
        let mut bounds = vec![1];
        bounds.extend(&tau);
        bounds.push(t_len + 1);
        let mut lp = k as f64 * p.ln() + (t_len - 1 - k) as f64 * (1.0 - p).ln();
        for w in bounds.windows(2) {
            lp += ln_seg(w[0], w[1] - 1);
        }
        logs.push((tau, lp));
    }
    let max = logs.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logs.iter().map(|v| (v.1 - max).exp()).sum();
    logs.into_iter().map(|(t, l)| (t, (l - max).exp() / z)).collect()
}

/// Total variation distance between two distributions on the same keys.
pub fn total_variation<K: Ord>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> f64 {
    let mut tv = 0.0;
    for (k, pa) in a {
        tv += (pa - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, pb) in b {
        if !a.contains_key(k) {
            tv += pb;
        }
    }
    0.5 * tv
}
