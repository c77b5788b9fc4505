//! Point estimates from traces, F1 scoring, cross-chain diagnostics and the
//! study harnesses built on the simulator and the sampler.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{FamilySpec, Theta};
use crate::par::{self, Exec};
use crate::sampler::{modal_segmentation, run_chain, ChainTrace, SamplerConfig, TraceRecord};
use crate::series_space::{divisor_orders, membership_m, ObservedSeries};
use crate::simulator::{simulate_changepoint_series, simulate_segment, NormalScenario, ScenarioSpec};

/// Variance of per-chain F1 scores above which chains are flagged.
pub const F1_VARIANCE_THRESHOLD: f64 = 0.1;

/// MAP changepoint count, positions given that count, and per-segment orders.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangepointEstimate {
    pub k_hat: usize,
    pub tau_hat: Vec<usize>,
    pub m_hat: Vec<usize>,
}

/// MAP estimate of a set of samples.
///
/// Ties go to the smaller count, the lexicographically smaller positions and
/// the smaller order.
pub fn map_estimate_records(records: &[TraceRecord]) -> Result<ChangepointEstimate> {
    if records.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let mut counts: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
    for r in records {
        *counts.entry(r.tau.clone()).or_default() += 1;
    }
    let tau_hat = modal_segmentation(&counts).ok_or(Error::EmptyTrace)?;
    let mut orders: Vec<BTreeMap<usize, u64>> = vec![BTreeMap::new(); tau_hat.len() + 1];
    for r in records.iter().filter(|r| r.tau == tau_hat) {
        for (slot, &m) in orders.iter_mut().zip(&r.m) {
            *slot.entry(m).or_default() += 1;
        }
    }
    let m_hat = orders
        .iter()
        .map(|c| {
            c.iter()
                .fold((0, 0), |best, (&m, &n)| if n > best.1 { (m, n) } else { best })
                .0
        })
        .collect();
    Ok(ChangepointEstimate {
        k_hat: tau_hat.len(),
        tau_hat,
        m_hat,
    })
}

pub fn map_estimate(trace: &ChainTrace) -> Result<ChangepointEstimate> {
    map_estimate_records(&trace.records)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Detection score with tolerance `epsilon`.
///
/// Pairs (true, estimated) within `epsilon` are matched one-to-one, closest
/// first. Both sets empty scores 1; exactly one empty scores 0.
pub fn f1_score(truth: &[usize], est: &[usize], epsilon: usize) -> F1Score {
    if truth.is_empty() && est.is_empty() {
        return F1Score {
            f1: 1.0,
            precision: 1.0,
            recall: 1.0,
        };
    }
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for (i, &t) in truth.iter().enumerate() {
        for (j, &e) in est.iter().enumerate() {
            let d = t.abs_diff(e);
            if d <= epsilon {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_unstable();
    let mut used_t = vec![false; truth.len()];
    let mut used_e = vec![false; est.len()];
    let mut matched = 0;
    for (_, i, j) in pairs {
        if !used_t[i] && !used_e[j] {
            used_t[i] = true;
            used_e[j] = true;
            matched += 1;
        }
    }
    let precision = if est.is_empty() {
        1.0
    } else {
        matched as f64 / est.len() as f64
    };
    let recall = if truth.is_empty() {
        1.0
    } else {
        matched as f64 / truth.len() as f64
    };
    let f1 = if matched == 0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    F1Score {
        f1,
        precision,
        recall,
    }
}

/// Cross-chain agreement of a multi-chain run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub estimates: Vec<ChangepointEstimate>,
    /// F1 of each chain against the reference.
    pub f1: Vec<f64>,
    /// Population variance of `f1`.
    pub f1_variance: f64,
    /// Set when the variance exceeds [`F1_VARIANCE_THRESHOLD`].
    pub flagged: bool,
    /// Most frequent MAP count across chains (ties to the smaller).
    pub consensus_k: usize,
    /// First index of each chain's `k_path` at the consensus count.
    pub first_hit: Vec<Option<usize>>,
}

/// Compares chains against `truth`, or against chain 0 when no truth is known.
pub fn convergence_report(
    traces: &[ChainTrace],
    truth: Option<&[usize]>,
    epsilon: usize,
) -> Result<ConvergenceReport> {
    if traces.len() < 2 {
        return Err(Error::Domain("a convergence report needs at least two chains".into()));
    }
    let estimates = traces.iter().map(map_estimate).collect::<Result<Vec<_>>>()?;
    Ok(report_from(
        estimates,
        traces.iter().map(|t| t.k_path.as_slice()),
        truth,
        epsilon,
    ))
}

/// Same as [`convergence_report`] for precomputed estimates and k paths.
pub fn report_from<'a>(
    estimates: Vec<ChangepointEstimate>,
    k_paths: impl Iterator<Item = &'a [usize]>,
    truth: Option<&[usize]>,
    epsilon: usize,
) -> ConvergenceReport {
    let reference: Vec<usize> = match truth {
        Some(t) => t.to_vec(),
        None => estimates[0].tau_hat.clone(),
    };
    let f1: Vec<f64> = estimates
        .iter()
        .map(|e| f1_score(&reference, &e.tau_hat, epsilon).f1)
        .collect();
    let f1_variance = population_variance(&f1);
    let mut k_counts: BTreeMap<usize, usize> = BTreeMap::new();
    for e in &estimates {
        *k_counts.entry(e.k_hat).or_default() += 1;
    }
    let consensus_k = k_counts
        .iter()
        .fold((0, 0), |best, (&k, &n)| if n > best.1 { (k, n) } else { best })
        .0;
    let first_hit = k_paths
        .map(|p| p.iter().position(|&k| k == consensus_k))
        .collect();
    ConvergenceReport {
        estimates,
        f1,
        f1_variance,
        flagged: f1_variance > F1_VARIANCE_THRESHOLD,
        consensus_k,
        first_hit,
    }
}

pub fn population_variance(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Grid of an order-feasibility study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MspaceGrid {
    pub m: Vec<usize>,
    pub n: Vec<usize>,
    /// Family parameter of the simulated segments (gamma rate or negbin probability).
    pub theta: Vec<f64>,
    /// Largest candidate order `m'`; defaults to the largest simulated order.
    #[serde(default)]
    pub m_prime_max: Option<usize>,
    pub replicates: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MspaceRow {
    pub n: usize,
    pub m: usize,
    pub theta: f64,
    pub m_prime: usize,
    /// Proportion of replicates for which `m'` is a feasible order.
    pub q: f64,
}

/// Proportion of simulated order-`m` segments of length `n` for which each
/// `m'` is feasible. Every `(m, theta)` cell simulates segments of the largest
/// `n` and scores their prefixes, so the proportions of one cell share draws
/// across `n`.
pub fn mspace_study(f: &FamilySpec, grid: &MspaceGrid, seed: u64, exec: Exec) -> Result<Vec<MspaceRow>> {
    if grid.m.is_empty() || grid.n.is_empty() || grid.theta.is_empty() || grid.replicates == 0 {
        return Err(Error::Config("m-space grid must be non-empty".into()));
    }
    if grid.n.contains(&0) {
        return Err(Error::Config("segment lengths must be positive".into()));
    }
    let theta_of = |v: f64| -> Result<Theta> {
        let t = match f {
            FamilySpec::Gamma { .. } => Theta::Gamma { rate: v },
            FamilySpec::Negbin { .. } => Theta::Negbin { prob: v },
            FamilySpec::Normal { .. } => {
                return Err(Error::Config("the m-space study needs a bounded family".into()))
            }
        };
        let interior = match t {
            Theta::Negbin { prob } => prob > 0.0 && prob < 1.0,
            _ => f.theta_in_space(&t),
        };
        if !interior {
            return Err(Error::Config(format!("theta {v} outside the parameter space")));
        }
        Ok(t)
    };
    let m_prime_max = grid
        .m_prime_max
        .unwrap_or_else(|| *grid.m.iter().max().expect("non-empty"));
    let n_max = *grid.n.iter().max().expect("non-empty");
    let mut ns = grid.n.clone();
    ns.sort_unstable();
    ns.dedup();
    let mut cells = Vec::new();
    for &m in &grid.m {
        for &theta in &grid.theta {
            cells.push((cells.len(), m, theta, theta_of(theta)?));
        }
    }
    let support = f.support();
    let per_cell = par::map(exec, &cells, |&(idx, m, theta, th)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(idx as u64);
        // hits[n index][m']
        let mut hits = vec![vec![0usize; m_prime_max + 1]; ns.len()];
        for _ in 0..grid.replicates {
            let (x, _) = simulate_segment(f, &th, m, n_max, &mut rng);
            for (ni, &n) in ns.iter().enumerate() {
                for (mp, h) in hits[ni].iter_mut().enumerate() {
                    *h += membership_m(&x[..n], support, mp) as usize;
                }
            }
        }
        let mut rows = Vec::new();
        for (ni, &n) in ns.iter().enumerate() {
            for (mp, &h) in hits[ni].iter().enumerate() {
                rows.push(MspaceRow {
                    n,
                    m,
                    theta,
                    m_prime: mp,
                    q: h as f64 / grid.replicates as f64,
                });
            }
        }
        rows
    });
    let mut rows: Vec<MspaceRow> = per_cell.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        (a.n, a.m, a.m_prime)
            .cmp(&(b.n, b.m, b.m_prime))
            .then(a.theta.total_cmp(&b.theta))
    });
    Ok(rows)
}

/// Whether `m'` aggregates `m` (`m' + 1` divides `m + 1`).
pub fn is_divisor_order(m: usize, m_prime: usize) -> bool {
    divisor_orders(m).contains(&m_prime)
}

/// One scenario of the normal-family simulation study.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyScenario {
    pub nu: f64,
    pub mu: f64,
    pub alpha0: f64,
}

/// Simulation study comparing the moving-sum and standard models on
/// normal-family data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationStudy {
    pub t_len: usize,
    pub tau: Vec<usize>,
    pub scenarios: Vec<StudyScenario>,
    pub replicates: usize,
    #[serde(default = "default_beta0")]
    pub beta0: f64,
    /// Prior mean multiplier: `lambda = lambda_scale * beta / alpha`.
    #[serde(default = "default_lambda_scale")]
    pub lambda_scale: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: usize,
    pub sampler: SamplerConfig,
}

fn default_beta0() -> f64 {
    100.0
}

fn default_lambda_scale() -> f64 {
    0.05
}

fn default_epsilon() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub scenario: usize,
    pub replicate: usize,
    pub standard: bool,
    pub k_hat: usize,
    pub tau_hat: Vec<usize>,
    pub f1: f64,
}

impl SimulationStudy {
    /// Normal family with `alpha = alpha0`, `beta = beta0`,
    /// `lambda = lambda_scale * beta / alpha` and `mu0 = 0`.
    pub fn family(&self, s: &StudyScenario) -> FamilySpec {
        FamilySpec::Normal {
            mu0: 0.0,
            lambda: self.lambda_scale * self.beta0 / s.alpha0,
            alpha: s.alpha0,
            beta: self.beta0,
        }
    }

    pub fn scenario_spec(&self, s: &StudyScenario) -> ScenarioSpec {
        ScenarioSpec {
            t_len: self.t_len,
            tau: self.tau.clone(),
            nu: s.nu,
            orders: None,
            thetas: None,
            normal: Some(NormalScenario {
                mu: s.mu,
                alpha0: s.alpha0,
                beta0: self.beta0,
            }),
        }
    }

    /// Fits both models to every replicate; replicate series are shared by
    /// the two models.
    pub fn run(&self, seed: u64, exec: Exec) -> Result<Vec<StudyRow>> {
        let mut items = Vec::new();
        for si in 0..self.scenarios.len() {
            for rep in 0..self.replicates {
                for standard in [false, true] {
                    items.push((si, rep, standard));
                }
            }
        }
        par::map(exec, &items, |&(si, rep, standard)| {
            let s = &self.scenarios[si];
            let f = self.family(s);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((si * self.replicates + rep) as u64);
            let sim = simulate_changepoint_series(&self.scenario_spec(s), &f, &mut rng)?;
            let x = ObservedSeries::new(sim.x, f.support())?;
            let cfg = SamplerConfig {
                standard,
                seed: seed ^ ((si * self.replicates + rep) as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                ..self.sampler.clone()
            };
            let trace = run_chain(&x, &f, &cfg, 0)?;
            let est = map_estimate(&trace)?;
            let f1 = f1_score(&sim.truth.tau, &est.tau_hat, self.epsilon).f1;
            Ok(StudyRow {
                scenario: si,
                replicate: rep,
                standard,
                k_hat: est.k_hat,
                tau_hat: est.tau_hat,
                f1,
            })
        })
        .into_iter()
        .collect()
    }
}

/// Mean F1 per scenario for `(moving-sum, standard)`.
pub fn study_means(rows: &[StudyRow], scenarios: usize) -> Vec<(f64, f64)> {
    (0..scenarios)
        .map(|s| {
            let mean = |standard: bool| {
                let v: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.scenario == s && r.standard == standard)
                    .map(|r| r.f1)
                    .collect();
                v.iter().sum::<f64>() / v.len().max(1) as f64
            };
            (mean(false), mean(true))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{MoveKind, MoveStats, Segmentation};

    fn record(tau: Vec<usize>, m: Vec<usize>) -> TraceRecord {
        TraceRecord {
            iteration: 0,
            k: tau.len(),
            tau,
            gamma: m.iter().map(|&mm| vec![0.0; mm]).collect(),
            m,
            log_target: 0.0,
            move_kind: MoveKind::Shift,
            accepted: false,
            log_ratio: None,
        }
    }

    fn trace(records: Vec<TraceRecord>, k_path: Vec<usize>) -> ChainTrace {
        ChainTrace {
            chain: 0,
            t_len: 100,
            initial: Segmentation::new(100, vec![]).unwrap(),
            records,
            k_path,
            stats: MoveStats::default(),
        }
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1_score(&[300, 600, 900], &[300, 600, 900], 5).f1, 1.0);
        let s = f1_score(&[300, 600, 900], &[300, 600], 5);
        assert_eq!(s.precision, 1.0);
        assert!((s.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.f1 - 0.8).abs() < 1e-12);
        assert_eq!(f1_score(&[300], &[306], 5).f1, 0.0);
        assert_eq!(f1_score(&[300], &[305], 5).f1, 1.0);
        assert_eq!(f1_score(&[], &[], 5).f1, 1.0);
        assert_eq!(f1_score(&[], &[4], 5).f1, 0.0);
        assert_eq!(f1_score(&[4], &[], 5).f1, 0.0);
    }

    #[test]
    fn f1_matching_is_one_to_one() {
        // two estimates near one truth count once
        let s = f1_score(&[100], &[99, 101], 5);
        assert_eq!(s.recall, 1.0);
        assert_eq!(s.precision, 0.5);
        // closest pair first: 104 belongs to 105, 100 to 99
        let s = f1_score(&[99, 105], &[100, 104], 5);
        assert_eq!(s.f1, 1.0);
    }

    #[test]
    fn map_of_identical_states() {
        let recs = vec![record(vec![10, 40], vec![0, 2, 1]); 5];
        let e = map_estimate_records(&recs).unwrap();
        assert_eq!(
            e,
            ChangepointEstimate {
                k_hat: 2,
                tau_hat: vec![10, 40],
                m_hat: vec![0, 2, 1]
            }
        );
    }

    #[test]
    fn map_with_known_frequencies() {
        let mut recs = Vec::new();
        recs.extend(vec![record(vec![10], vec![0, 0]); 3]);
        recs.extend(vec![record(vec![20, 30], vec![0, 1, 0]); 2]);
        recs.extend(vec![record(vec![21, 30], vec![0, 1, 0]); 2]);
        recs.extend(vec![record(vec![20, 30], vec![2, 1, 0]); 1]);
        let e = map_estimate_records(&recs).unwrap();
        assert_eq!(e.k_hat, 2);
        assert_eq!(e.tau_hat, vec![20, 30]);
        assert_eq!(e.m_hat, vec![0, 1, 0]);
    }

    #[test]
    fn map_k_tie_goes_low() {
        let recs = vec![record(vec![10], vec![0, 0]), record(vec![], vec![0])];
        assert_eq!(map_estimate_records(&recs).unwrap().k_hat, 0);
    }

    #[test]
    fn map_of_empty_trace_fails() {
        assert!(matches!(map_estimate_records(&[]), Err(Error::EmptyTrace)));
    }

    #[test]
    fn identical_chains_have_zero_variance() {
        let t = trace(vec![record(vec![50], vec![0, 0])], vec![0, 1, 1]);
        let r = convergence_report(&[t.clone(), t], None, 5).unwrap();
        assert_eq!(r.f1_variance, 0.0);
        assert!(!r.flagged);
        assert_eq!(r.consensus_k, 1);
        assert_eq!(r.first_hit, vec![Some(1), Some(1)]);
    }

    #[test]
    fn disagreeing_chains_are_flagged() {
        let a = trace(vec![record(vec![50], vec![0, 0])], vec![1]);
        let b = trace(vec![record(vec![], vec![0])], vec![0]);
        let r = convergence_report(&[a, b], Some(&[50]), 5).unwrap();
        assert_eq!(r.f1, vec![1.0, 0.0]);
        assert_eq!(r.f1_variance, 0.25);
        assert!(r.flagged);
    }

    #[test]
    fn single_chain_report_is_an_error() {
        let t = trace(vec![record(vec![], vec![0])], vec![0]);
        assert!(convergence_report(&[t], None, 5).is_err());
    }

    #[test]
    fn mspace_divisor_orders_are_always_feasible() {
        let f = FamilySpec::Negbin {
            r: 300.0,
            alpha: 1.0,
            beta: 1.0,
        };
        let grid = MspaceGrid {
            m: (0..=4).collect(),
            n: vec![100],
            theta: vec![0.4],
            m_prime_max: None,
            replicates: 10,
        };
        let rows = mspace_study(&f, &grid, 5, Exec::Sequential).unwrap();
        assert_eq!(rows.len(), 25);
        for r in &rows {
            assert!((0.0..=1.0).contains(&r.q));
            if is_divisor_order(r.m, r.m_prime) {
                assert_eq!(r.q, 1.0, "{r:?}");
            }
        }
        let par_rows = mspace_study(&f, &grid, 5, Exec::Parallel).unwrap();
        assert_eq!(rows, par_rows);
    }
}
