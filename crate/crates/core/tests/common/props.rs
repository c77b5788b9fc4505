//! Checks of the latent-space propositions on a single instance.

use mvsum::families::{FamilySpec, Theta};
use mvsum::series_space::{
    aggregate_j, compute_bounds, divisor_orders, membership_gamma, membership_m, shift_window,
    SupportClass,
};
use mvsum::simulator::simulate_segment;
use rand::Rng;

/// A bounded-support segment simulated with its true order and latents.
#[derive(Clone, Debug)]
pub struct Instance {
    pub x: Vec<f64>,
    pub gamma: Vec<f64>,
    pub support: SupportClass,
}

impl Instance {
    pub fn m(&self) -> usize {
        self.gamma.len()
    }
}

pub fn random_instance<R: Rng>(rng: &mut R) -> Instance {
    let m = rng.random_range(0..=5);
    let n = rng.random_range(1..=40);
    let (f, theta) = if rng.random_bool(0.5) {
        (
            FamilySpec::Negbin {
                r: rng.random_range(0.5..40.0),
                alpha: 1.0,
                beta: 1.0,
            },
            Theta::Negbin {
                prob: rng.random_range(0.1..0.9),
            },
        )
    } else {
        (
            FamilySpec::Gamma {
                lambda: rng.random_range(0.5..20.0),
                alpha: 1.0,
                beta: 1.0,
            },
            Theta::Gamma {
                rate: rng.random_range(0.2..5.0),
            },
        )
    };
    let (x, gamma) = simulate_segment(&f, &theta, m, n, rng);
    Instance {
        x,
        gamma,
        support: f.support(),
    }
}

fn tol(x: &[f64]) -> f64 {
    1e-9 * x.iter().fold(1.0_f64, |a, v| a.max(v.abs()))
}

/// Feasibility carries over to every contiguous subsequence, with the latents
/// moved by the shift map.
pub fn subsequence(inst: &Instance, s: usize, t: usize) -> Result<(), String> {
    let m = inst.m();
    let x = &inst.x;
    if !membership_m(x, inst.support, m) || !membership_gamma(x, inst.support, &inst.gamma) {
        return Err(format!("true latents infeasible for {x:?}"));
    }
    let sub = &x[s - 1..t];
    if !membership_m(sub, inst.support, m) {
        return Err(format!("order {m} lost on x[{s}..={t}]"));
    }
    let shifted = shift_window(x, &inst.gamma, 0, s as i64 - 1).map_err(|e| e.to_string())?;
    if !membership_gamma(sub, inst.support, &shifted) {
        return Err(format!("shifted latents {shifted:?} infeasible on x[{s}..={t}]"));
    }
    Ok(())
}

/// Extending the data never raises the upper bound nor lowers a lower bound.
pub fn shrinkage(x: &[f64], m: usize) -> Result<(), String> {
    if m == 0 {
        return Ok(());
    }
    let mut prev = compute_bounds(&x[..1], m);
    for n in 2..=x.len() {
        let b = compute_bounds(&x[..n], m);
        if b.upper > prev.upper {
            return Err(format!("U grew from {} to {} at n={n}", prev.upper, b.upper));
        }
        if let Some(r) = (0..m).find(|&r| b.lower[r] < prev.lower[r]) {
            return Err(format!("L_{} fell from {} to {} at n={n}", r + 1, prev.lower[r], b.lower[r]));
        }
        prev = b;
    }
    Ok(())
}

/// Every divisor order is feasible and the aggregated latents are feasible.
pub fn divisor_membership(inst: &Instance) -> Result<(), String> {
    let m = inst.m();
    for mp in divisor_orders(m).into_iter().filter(|&mp| mp != m) {
        if !membership_m(&inst.x, inst.support, mp) {
            return Err(format!("divisor order {mp} of {m} infeasible"));
        }
        let agg = aggregate_j(&inst.gamma, mp).map_err(|e| e.to_string())?;
        if !membership_gamma(&inst.x, inst.support, &agg) {
            return Err(format!("aggregated latents {agg:?} infeasible at order {mp}"));
        }
    }
    Ok(())
}

/// Adding a constant to the data adds it to the slack.
pub fn translation(x: &[f64], m: usize, mu: f64) -> Result<(), String> {
    if m == 0 {
        return Ok(());
    }
    let shifted: Vec<f64> = x.iter().map(|v| v + mu).collect();
    let a = compute_bounds(x, m).slack;
    let b = compute_bounds(&shifted, m).slack;
    if (b - (a + mu)).abs() > tol(&shifted) {
        return Err(format!("D(x + {mu}) = {b}, D(x) + mu = {}", a + mu));
    }
    Ok(())
}

/// Bounds at every prefix length bracket the aggregated true latents, and the
/// lower bounds are non-decreasing in the prefix length.
pub fn finite_n_bracket(inst: &Instance) -> Result<(), String> {
    let m = inst.m();
    for mp in divisor_orders(m).into_iter().filter(|&mp| mp > 0) {
        let truth = aggregate_j(&inst.gamma, mp).map_err(|e| e.to_string())?;
        let mut prev: Option<Vec<f64>> = None;
        for n in 1..=inst.x.len() {
            let b = compute_bounds(&inst.x[..n], mp);
            let t = tol(&inst.x);
            if b.upper < truth.iter().sum::<f64>() - t {
                return Err(format!("U^{mp} below the aggregated sum at n={n}"));
            }
            if let Some(r) = (0..mp).find(|&r| b.lower[r] > truth[r] + t) {
                return Err(format!("L^{mp}_{} above the aggregated latent at n={n}", r + 1));
            }
            if let Some(p) = &prev {
                if (0..mp).any(|r| b.lower[r] < p[r]) {
                    return Err(format!("L^{mp} decreased at n={n}"));
                }
            }
            prev = Some(b.lower);
        }
    }
    Ok(())
}
