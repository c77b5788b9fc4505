//! Forward simulation of moving-sum segments and changepoint series.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Geometric, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{FamilySpec, Theta};
use crate::sampler::Segmentation;

/// Normal-family scenario: alternating means and a random precision per segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalScenario {
    /// Segment `j` (1-based) has mean `+mu` when `j` is odd and `-mu` otherwise.
    pub mu: f64,
    /// Shape of the gamma distribution of each segment precision.
    pub alpha0: f64,
    /// Rate of the gamma distribution of each segment precision.
    #[serde(default = "default_beta0")]
    pub beta0: f64,
}

fn default_beta0() -> f64 {
    100.0
}

fn default_nu() -> f64 {
    1.0
}

/// Layout and segment parameters of a simulated series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub t_len: usize,
    #[serde(default)]
    pub tau: Vec<usize>,
    /// Segment orders are `Geometric(nu)` on `0, 1, ...` unless `orders` is set.
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default)]
    pub orders: Option<Vec<usize>>,
    /// Per-segment parameter (gamma rate or negative binomial probability);
    /// drawn from the prior when absent.
    #[serde(default)]
    pub thetas: Option<Vec<f64>>,
    #[serde(default)]
    pub normal: Option<NormalScenario>,
}

impl ScenarioSpec {
    pub fn validate(&self, f: &FamilySpec) -> Result<()> {
        let seg = Segmentation::new(self.t_len, self.tau.clone())
            .map_err(|e| Error::Config(e.to_string()))?;
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::Config(format!("nu must lie in (0, 1], got {}", self.nu)));
        }
        let segments = seg.k() + 1;
        if let Some(o) = &self.orders {
            if o.len() != segments {
                return Err(Error::Config(format!(
                    "{} orders given for {segments} segments",
                    o.len()
                )));
            }
        }
        if let Some(t) = &self.thetas {
            if t.len() != segments {
                return Err(Error::Config(format!(
                    "{} thetas given for {segments} segments",
                    t.len()
                )));
            }
            if matches!(f, FamilySpec::Normal { .. }) {
                return Err(Error::Config(
                    "thetas apply to the gamma and negbin families; use [scenario.normal]".into(),
                ));
            }
            for &v in t {
                if !f.theta_in_space(&scalar_theta(f, v)) || v <= 0.0 {
                    return Err(Error::Config(format!("theta {v} outside the parameter space")));
                }
            }
        }
        if let Some(n) = &self.normal {
            if !matches!(f, FamilySpec::Normal { .. }) {
                return Err(Error::Config("[scenario.normal] needs the normal family".into()));
            }
            if !(n.alpha0 > 0.0 && n.beta0 > 0.0 && n.mu.is_finite()) {
                return Err(Error::Config("normal scenario needs alpha0, beta0 > 0".into()));
            }
        }
        Ok(())
    }
}

fn scalar_theta(f: &FamilySpec, v: f64) -> Theta {
    match f {
        FamilySpec::Gamma { .. } => Theta::Gamma { rate: v },
        FamilySpec::Negbin { .. } => Theta::Negbin { prob: v },
        FamilySpec::Normal { .. } => Theta::Normal { mu: v, sigma: 1.0 },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthSegment {
    pub start: usize,
    pub end: usize,
    pub m: usize,
    pub theta: Theta,
    pub gamma: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub t_len: usize,
    pub tau: Vec<usize>,
    pub segments: Vec<TruthSegment>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedSeries {
    pub x: Vec<f64>,
    pub truth: GroundTruth,
}

/// One draw from `f_m(. | theta)`.
pub fn draw_latent<R: Rng + ?Sized>(f: &FamilySpec, theta: &Theta, m: usize, rng: &mut R) -> f64 {
    let mbar = (m + 1) as f64;
    match (f, *theta) {
        (FamilySpec::Normal { .. }, Theta::Normal { mu, sigma }) => {
            Normal::new(mu / mbar, sigma / mbar.sqrt())
                .expect("valid normal")
                .sample(rng)
        }
        (FamilySpec::Gamma { lambda, .. }, Theta::Gamma { rate }) => {
            Gamma::new(lambda / mbar, 1.0 / rate)
                .expect("valid gamma")
                .sample(rng)
        }
        (FamilySpec::Negbin { r, .. }, Theta::Negbin { prob }) => {
            // gamma-Poisson mixture with mean r_m (1 - prob) / prob
            let scale = (1.0 - prob) / prob;
            if scale == 0.0 {
                return 0.0;
            }
            let lambda: f64 = Gamma::new(r / mbar, scale).expect("valid gamma").sample(rng);
            if lambda > 0.0 {
                Poisson::new(lambda).expect("valid poisson").sample(rng)
            } else {
                0.0
            }
        }
        _ => panic!("theta {theta:?} does not belong to family {:?}", f.kind()),
    }
}

/// Draws `m + n` latents and returns the moving sums `x_1..x_n` with the
/// realised initial latents.
pub fn simulate_segment<R: Rng + ?Sized>(
    f: &FamilySpec,
    theta: &Theta,
    m: usize,
    n: usize,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let latents: Vec<f64> = (0..m + n).map(|_| draw_latent(f, theta, m, rng)).collect();
    let x = latents.windows(m + 1).map(|w| w.iter().sum()).collect();
    (x, latents[..m].to_vec())
}

/// Draws a segment parameter from the prior of `f`.
pub fn draw_theta<R: Rng + ?Sized>(f: &FamilySpec, rng: &mut R) -> Theta {
    match *f {
        FamilySpec::Normal {
            mu0,
            lambda,
            alpha,
            beta,
        } => {
            let tau: f64 = Gamma::new(alpha, 1.0 / beta).expect("valid gamma").sample(rng);
            let mu = Normal::new(mu0, (lambda * tau).recip().sqrt())
                .expect("valid normal")
                .sample(rng);
            Theta::Normal {
                mu,
                sigma: tau.recip().sqrt(),
            }
        }
        FamilySpec::Gamma { alpha, beta, .. } => Theta::Gamma {
            rate: Gamma::new(alpha, 1.0 / beta).expect("valid gamma").sample(rng),
        },
        FamilySpec::Negbin { alpha, beta, .. } => Theta::Negbin {
            prob: Beta::new(alpha, beta).expect("valid beta").sample(rng),
        },
    }
}

/// Simulates a full series from the changepoint model of `spec`.
pub fn simulate_changepoint_series<R: Rng + ?Sized>(
    spec: &ScenarioSpec,
    f: &FamilySpec,
    rng: &mut R,
) -> Result<SimulatedSeries> {
    spec.validate(f)?;
    let seg = Segmentation::new(spec.t_len, spec.tau.clone())?;
    let geometric = Geometric::new(spec.nu).map_err(|e| Error::Config(e.to_string()))?;
    let mut x = Vec::with_capacity(spec.t_len);
    let mut segments = Vec::new();
    for (j, (start, end)) in seg.segments().into_iter().enumerate() {
        let m = match &spec.orders {
            Some(o) => o[j],
            None => geometric.sample(rng) as usize,
        };
        let theta = match (&spec.thetas, &spec.normal) {
            (Some(t), _) => scalar_theta(f, t[j]),
            (None, Some(n)) => {
                let precision: f64 = Gamma::new(n.alpha0, 1.0 / n.beta0)
                    .expect("valid gamma")
                    .sample(rng);
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                Theta::Normal {
                    mu: sign * n.mu,
                    sigma: precision.recip().sqrt(),
                }
            }
            (None, None) => draw_theta(f, rng),
        };
        let (xs, gamma) = simulate_segment(f, &theta, m, end + 1 - start, rng);
        x.extend(xs);
        segments.push(TruthSegment {
            start,
            end,
            m,
            theta,
            gamma,
        });
    }
    Ok(SimulatedSeries {
        x,
        truth: GroundTruth {
            t_len: spec.t_len,
            tau: spec.tau.clone(),
            segments,
        },
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::series_space::{membership_gamma, SupportClass};

    fn acf(x: &[f64], lag: usize) -> f64 {
        let n = x.len();
        let mean = x.iter().sum::<f64>() / n as f64;
        let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        let cov: f64 = (0..n - lag).map(|t| (x[t] - mean) * (x[t + lag] - mean)).sum();
        cov / var
    }

    #[test]
    fn moving_sum_autocorrelation() {
        let f = FamilySpec::Normal {
            mu0: 0.0,
            lambda: 1.0,
            alpha: 1.0,
            beta: 1.0,
        };
        let theta = Theta::Normal { mu: 2.0, sigma: 1.5 };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = 3;
        let (x, _) = simulate_segment(&f, &theta, m, 100_000, &mut rng);
        let mbar = (m + 1) as f64;
        for lag in 1..=m + 2 {
            let want = if lag <= m { (mbar - lag as f64) / mbar } else { 0.0 };
            let got = acf(&x, lag);
            assert!((got - want).abs() < 0.02, "lag {lag}: {got} vs {want}");
        }
    }

    #[test]
    fn negbin_marginal_moments() {
        let (r, prob) = (300.0, 0.4);
        let f = FamilySpec::Negbin {
            r,
            alpha: 1.0,
            beta: 1.0,
        };
        let theta = Theta::Negbin { prob };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 20_000;
        for m in [0, 2] {
            let (x, _) = simulate_segment(&f, &theta, m, n, &mut rng);
            let mean_want = r * (1.0 - prob) / prob;
            let var_want = r * (1.0 - prob) / (prob * prob);
            let mean = x.iter().sum::<f64>() / n as f64;
            // moving sums are correlated: the mean's variance is inflated by mbar
            let se = ((m + 1) as f64 * var_want / n as f64).sqrt();
            assert!((mean - mean_want).abs() < 4.0 * se, "m={m}: mean {mean}");
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            assert!((var / var_want - 1.0).abs() < 0.1, "m={m}: var {var}");
        }
    }

    #[test]
    fn truth_is_feasible() {
        let f = FamilySpec::Negbin {
            r: 30.0,
            alpha: 2.0,
            beta: 2.0,
        };
        let spec = ScenarioSpec {
            t_len: 300,
            tau: vec![100, 200],
            nu: 0.3,
            orders: None,
            thetas: None,
            normal: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let sim = simulate_changepoint_series(&spec, &f, &mut rng).unwrap();
            assert_eq!(sim.x.len(), 300);
            for s in &sim.truth.segments {
                let data = &sim.x[s.start - 1..s.end];
                assert!(membership_gamma(data, SupportClass::NonnegDiscrete, &s.gamma));
                assert_eq!(s.gamma.len(), s.m);
            }
        }
    }

    #[test]
    fn nu_one_gives_exchangeable_segments() {
        let f = FamilySpec::Normal {
            mu0: 0.0,
            lambda: 1.0,
            alpha: 1.0,
            beta: 1.0,
        };
        let spec = ScenarioSpec {
            t_len: 1200,
            tau: vec![300, 600, 900],
            nu: 1.0,
            orders: None,
            thetas: None,
            normal: Some(NormalScenario {
                mu: 8.0,
                alpha0: 25.0,
                beta0: 100.0,
            }),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let sim = simulate_changepoint_series(&spec, &f, &mut rng).unwrap();
        assert_eq!(sim.truth.tau.len(), 3);
        let mus: Vec<f64> = sim
            .truth
            .segments
            .iter()
            .map(|s| match s.theta {
                Theta::Normal { mu, .. } => mu,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(mus, vec![8.0, -8.0, 8.0, -8.0]);
        assert!(sim.truth.segments.iter().all(|s| s.m == 0));
    }

    #[test]
    fn higher_order_segments_are_smoother() {
        let f = FamilySpec::Gamma {
            lambda: 20.0,
            alpha: 1.0,
            beta: 1.0,
        };
        let spec = ScenarioSpec {
            t_len: 3000,
            tau: vec![1001, 2001],
            nu: 1.0,
            orders: Some(vec![0, 2, 6]),
            thetas: Some(vec![1.0, 1.0, 1.0]),
            normal: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let sim = simulate_changepoint_series(&spec, &f, &mut rng).unwrap();
        let lag1: Vec<f64> = sim
            .truth
            .segments
            .iter()
            .map(|s| acf(&sim.x[s.start - 1..s.end], 1))
            .collect();
        assert!(lag1[0] < lag1[1] && lag1[1] < lag1[2], "{lag1:?}");
    }

    #[test]
    fn adjacent_segments_are_uncorrelated() {
        let f = FamilySpec::Negbin {
            r: 10.0,
            alpha: 1.0,
            beta: 1.0,
        };
        let spec = ScenarioSpec {
            t_len: 20,
            tau: vec![11],
            nu: 0.5,
            orders: Some(vec![3, 3]),
            thetas: Some(vec![0.5, 0.5]),
            normal: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let reps = 1000;
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for _ in 0..reps {
            let sim = simulate_changepoint_series(&spec, &f, &mut rng).unwrap();
            a.push(sim.x[9]);
            b.push(sim.x[10]);
        }
        let r = {
            let ma = a.iter().sum::<f64>() / reps as f64;
            let mb = b.iter().sum::<f64>() / reps as f64;
            let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
            let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
            let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
            cov / (va * vb).sqrt()
        };
        assert!(r.abs() < 3.0 / (reps as f64).sqrt(), "correlation {r}");
    }

    #[test]
    fn invalid_scenarios_are_config_errors() {
        let f = FamilySpec::Negbin {
            r: 10.0,
            alpha: 1.0,
            beta: 1.0,
        };
        let mut spec = ScenarioSpec {
            t_len: 20,
            tau: vec![11],
            nu: 0.0,
            orders: None,
            thetas: None,
            normal: None,
        };
        assert!(matches!(spec.validate(&f), Err(Error::Config(_))));
        spec.nu = 0.5;
        spec.tau = vec![25];
        assert!(matches!(spec.validate(&f), Err(Error::Config(_))));
    }
}
