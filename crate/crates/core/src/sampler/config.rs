use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities of the four move types.
///
/// `param` is split evenly between the latent update at fixed order and the
/// joint order/latent update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoveProbabilities {
    pub shift: f64,
    pub param: f64,
    pub birth: f64,
    pub death: f64,
}

impl Default for MoveProbabilities {
    fn default() -> Self {
        Self {
            shift: 0.3,
            param: 0.4,
            birth: 0.15,
            death: 0.15,
        }
    }
}

/// How a chain picks its first state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// MAP segmentation of a standard-model warm-up run, all orders zero.
    Standard,
    /// No changepoints.
    Empty,
    /// Uniformly many (up to 20) changepoints at uniform positions.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub moves: MoveProbabilities,
    /// Changepoint prior rate; `1/T` when unset.
    pub p: Option<f64>,
    /// Geometric prior rate on each segment order.
    pub rho: f64,
    /// Largest order offered by the order proposal.
    pub m_max: usize,
    /// Number of bins of the continuous latent proposal.
    pub grid_size: usize,
    /// Mass of the latent density covered by the continuous proposal grid.
    pub eta: f64,
    /// Retained iterations after burn-in.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub n_chains: usize,
    /// Pins every order to zero (the exchangeable changepoint model).
    pub standard: bool,
    pub init: InitStrategy,
    /// Iterations of the standard-model run used by [`InitStrategy::Standard`].
    pub warmup: usize,
    /// Period of the state audit; zero disables it.
    pub audit_every: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            moves: MoveProbabilities::default(),
            p: None,
            rho: 0.1,
            m_max: 30,
            grid_size: 100,
            eta: 0.99,
            iterations: 50_000,
            burn_in: 10_000,
            thin: 1,
            seed: 1,
            n_chains: 1,
            standard: false,
            init: InitStrategy::Standard,
            warmup: 5_000,
            audit_every: 1_000,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let m = &self.moves;
        let probs = [m.shift, m.param, m.birth, m.death];
        if probs.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config("move probabilities must be non-negative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("move probabilities sum to {total}, expected 1")));
        }
        if let Some(p) = self.p {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Config(format!("p must lie in (0, 1), got {p}")));
            }
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if self.grid_size < 2 {
            return Err(Error::Config("grid_size must be at least 2".into()));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Config(format!("eta must lie in (0, 1), got {}", self.eta)));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be positive".into()));
        }
        if self.n_chains == 0 {
            return Err(Error::Config("n_chains must be positive".into()));
        }
        Ok(())
    }

    /// Move probabilities actually used; standard mode drops parameter moves.
    pub fn effective_moves(&self) -> MoveProbabilities {
        let m = self.moves;
        if !self.standard {
            return m;
        }
        let rest = m.shift + m.birth + m.death;
        if rest <= 0.0 {
            return MoveProbabilities {
                shift: 0.0,
                param: 1.0,
                birth: 0.0,
                death: 0.0,
            };
        }
        MoveProbabilities {
            shift: m.shift / rest,
            param: 0.0,
            birth: m.birth / rest,
            death: m.death / rest,
        }
    }

    pub fn changepoint_rate(&self, t_len: usize) -> f64 {
        self.p.unwrap_or(1.0 / t_len.max(2) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SamplerConfig::default().validate().unwrap();
    }

    #[test]
    fn probabilities_must_sum_to_one() {
        let mut cfg = SamplerConfig::default();
        cfg.moves.birth = 0.5;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn standard_mode_renormalises() {
        let cfg = SamplerConfig {
            standard: true,
            ..Default::default()
        };
        let m = cfg.effective_moves();
        assert_eq!(m.param, 0.0);
        assert!((m.shift + m.birth + m.death - 1.0).abs() < 1e-12);
        assert!((m.shift - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unset_rate_is_inverse_length() {
        assert_eq!(SamplerConfig::default().changepoint_rate(600), 1.0 / 600.0);
    }
}
