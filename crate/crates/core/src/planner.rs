//! Unconstrained planners for the primal update.

use nalgebra::{DMatrix, DVector};

use crate::chain::{discounted_from, start_gains};
use crate::error::{arg, Error, Result};
use crate::generative::{EmpiricalModel, PerturbedReward};
use crate::model::{deterministic_policies, CmdpInstance, DeterministicPolicy, Signal};

fn check_inputs(model: &CmdpInstance, reward: &[f64], gamma: f64, tol: f64) -> Result<()> {
    if reward.len() != model.n_pairs() {
        return arg("reward has the wrong length");
    }
    if reward.iter().any(|r| !r.is_finite()) {
        return arg("reward has non-finite entries");
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return arg(format!("discount {gamma} outside (0, 1)"));
    }
    if !(tol > 0.0) {
        return arg("tolerance must be positive");
    }
    Ok(())
}

fn q_value(model: &CmdpInstance, reward: &[f64], gamma: f64, v: &[f64], s: usize, a: usize) -> f64 {
    let cont: f64 = model.row(s, a).iter().zip(v).map(|(p, x)| p * x).sum();
    reward[s * model.n_actions() + a] + gamma * cont
}

/// Greedy policy; ties go to the lowest action index.
fn greedy(model: &CmdpInstance, reward: &[f64], gamma: f64, v: &[f64]) -> Vec<usize> {
    (0..model.n_states())
        .map(|s| {
            let mut best = (0, q_value(model, reward, gamma, v, s, 0));
            for a in 1..model.n_actions() {
                let q = q_value(model, reward, gamma, v, s, a);
                if q > best.1 {
                    best = (a, q);
                }
            }
            best.0
        })
        .collect()
}

/// Value iteration from `V = 0` until `span(TV - V) <= tol (1 - gamma) / gamma`, then greedy extraction.
pub fn solve_discounted(model: &CmdpInstance, reward: &[f64], gamma: f64, tol: f64) -> Result<DeterministicPolicy> {
    check_inputs(model, reward, gamma, tol)?;
    let n = model.n_states();
    let stop = tol * (1.0 - gamma) / gamma;
    let rmax = reward.iter().fold(0.0f64, |m, r| m.max(r.abs())).max(f64::MIN_POSITIVE);
    // sup-norm contraction bounds the span after k steps by 2 gamma^k rmax / (1 - gamma)
    let budget = ((2.0 * rmax / ((1.0 - gamma) * stop)).ln() / -gamma.ln()).max(1.0);
    let max_iter = (budget.ceil() as u64).saturating_add(16);
    let mut v = vec![0.0; n];
    let mut tv = vec![0.0; n];
    for _ in 0..max_iter {
        for (s, out) in tv.iter_mut().enumerate() {
            *out = (0..model.n_actions())
                .map(|a| q_value(model, reward, gamma, &v, s, a))
                .fold(f64::NEG_INFINITY, f64::max);
        }
        let (lo, hi) = tv
            .iter()
            .zip(&v)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| (lo.min(a - b), hi.max(a - b)));
        std::mem::swap(&mut v, &mut tv);
        if hi - lo <= stop {
            return DeterministicPolicy::new(greedy(model, reward, gamma, &v), model.n_actions());
        }
    }
    Err(Error::Numerical(format!("value iteration exceeded {max_iter} sweeps")))
}

/// Value iteration followed by Howard improvement steps, giving an exactly discount-optimal policy.
pub fn solve_discounted_exact(
    model: &CmdpInstance,
    reward: &[f64],
    gamma: f64,
    tol: f64,
) -> Result<DeterministicPolicy> {
    let mut pi = solve_discounted(model, reward, gamma, tol)?.actions().to_vec();
    let (n, na) = (model.n_states(), model.n_actions());
    for _ in 0..10_000 {
        let p = DMatrix::from_fn(n, n, |s, s2| model.row(s, pi[s])[s2]);
        let r = DVector::from_fn(n, |s, _| reward[s * na + pi[s]]);
        let v = discounted_from(&p, &r, gamma)?;
        let mut changed = false;
        for s in 0..n {
            let cur = q_value(model, reward, gamma, &v, s, pi[s]);
            let slack = 1e-12 * (1.0 + cur.abs());
            let mut best = (pi[s], cur + slack);
            for a in 0..na {
                let q = q_value(model, reward, gamma, &v, s, a);
                if q > best.1 {
                    best = (a, q);
                }
            }
            if best.0 != pi[s] {
                pi[s] = best.0;
                changed = true;
            }
        }
        if !changed {
            return DeterministicPolicy::new(pi, na);
        }
    }
    Err(Error::Numerical("policy iteration did not stabilise".into()))
}

/// Margin by which a policy must beat every alternative for a dual range to be reported.
const RANGE_MARGIN: f64 = 1e-9;

/// Differences below this (relative to `scale`) mark an equivalent alternative.
const EQUIVALENT: f64 = 1e-11;

/// Shrink `[lo, hi]` to `{lambda : a + lambda b <= -margin}`; alternatives that tie in
/// both coordinates are skipped since they never change the objective.
fn clip_range(lo: &mut f64, hi: &mut f64, a: f64, b: f64, scale: f64) {
    if a.abs() <= EQUIVALENT * scale && b.abs() <= EQUIVALENT * scale {
        return;
    }
    let a = a + RANGE_MARGIN * (1.0 + a.abs());
    if b > 0.0 {
        *hi = hi.min(-a / b);
    } else if b < 0.0 {
        *lo = lo.max(-a / b);
    } else if a > 0.0 {
        *hi = f64::NEG_INFINITY;
    }
}

/// Dual values `lambda >= 0` at which `pi` is discount-optimal for `r + lambda c` by a
/// small margin; values are linear in `lambda` for a fixed policy, so this is an interval.
/// `None` if no such value exists.
pub fn optimality_range(
    model: &CmdpInstance,
    r: &[f64],
    c: &[f64],
    gamma: f64,
    pi: &DeterministicPolicy,
) -> Result<Option<(f64, f64)>> {
    check_inputs(model, r, gamma, 1.0)?;
    if c.len() != model.n_pairs() || pi.n_states() != model.n_states() {
        return arg("constraint or policy has the wrong shape");
    }
    let (n, na) = (model.n_states(), model.n_actions());
    let p = DMatrix::from_fn(n, n, |s, s2| model.row(s, pi.action(s))[s2]);
    let vr = discounted_from(&p, &DVector::from_fn(n, |s, _| r[s * na + pi.action(s)]), gamma)?;
    let vc = discounted_from(&p, &DVector::from_fn(n, |s, _| c[s * na + pi.action(s)]), gamma)?;
    let scale = 1.0 + vr.iter().chain(&vc).fold(0.0f64, |m, v| m.max(v.abs()));
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    for s in 0..n {
        for a in (0..na).filter(|&a| a != pi.action(s)) {
            let adv_r = q_value(model, r, gamma, &vr, s, a) - vr[s];
            let adv_c = q_value(model, c, gamma, &vc, s, a) - vc[s];
            clip_range(&mut lo, &mut hi, adv_r, adv_c, scale);
        }
    }
    Ok((lo <= hi).then_some((lo, hi)))
}

/// `(r_p + lambda c) / (1 + lambda)`.
pub fn combined_reward(r_p: &[f64], c: &[f64], lambda: f64) -> Vec<f64> {
    let k = 1.0 / (1.0 + lambda);
    r_p.iter().zip(c).map(|(r, c)| (r + lambda * c) * k).collect()
}

/// Primal step on the empirical model with the combined reward.
pub fn primal_update(
    empirical: &EmpiricalModel,
    r_p: &PerturbedReward,
    c: &[f64],
    lambda: f64,
    gamma: f64,
    tol: f64,
) -> Result<DeterministicPolicy> {
    if !(lambda >= 0.0) {
        return arg("dual variable must be non-negative");
    }
    solve_discounted(empirical.model(), &combined_reward(&r_p.values, c, lambda), gamma, tol)
}

/// Exact average-reward planner for small models: every deterministic policy's
/// start gains are tabulated once, then ranked by `rho_r + lambda rho_c`.
#[derive(Debug, Clone)]
pub struct AverageEnumerator {
    pub policies: Vec<DeterministicPolicy>,
    pub reward_gain: Vec<f64>,
    pub constraint_gain: Vec<f64>,
}

impl AverageEnumerator {
    pub fn new(model: &CmdpInstance, reward: &[f64], c: &[f64], cap: u64) -> Result<Self> {
        let mut out = Self { policies: Vec::new(), reward_gain: Vec::new(), constraint_gain: Vec::new() };
        for pi in deterministic_policies(model.n_states(), model.n_actions(), cap)? {
            let g = start_gains(&pi.to_stochastic(model.n_actions()), model, &[Signal::Custom(reward), Signal::Custom(c)])?;
            out.policies.push(pi);
            out.reward_gain.push(g[0]);
            out.constraint_gain.push(g[1]);
        }
        Ok(out)
    }

    /// Index of the best policy at `lambda`; ties to the lexicographically smallest.
    pub fn best(&self, lambda: f64) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, (r, c)) in self.reward_gain.iter().zip(&self.constraint_gain).enumerate() {
            let v = r + lambda * c;
            if v > best.1 + 1e-12 * (1.0 + lambda) {
                best = (i, v);
            }
        }
        best.0
    }

    /// Dual values at which policy `i` beats every other tabulated policy by a small margin.
    pub fn optimality_range(&self, i: usize) -> Option<(f64, f64)> {
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        for j in (0..self.policies.len()).filter(|&j| j != i) {
            let a = self.reward_gain[j] - self.reward_gain[i];
            let b = self.constraint_gain[j] - self.constraint_gain[i];
            clip_range(&mut lo, &mut hi, a, b, 1.0);
        }
        (lo <= hi).then_some((lo, hi))
    }
}
