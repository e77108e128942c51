//! Structural parameters H (bias span), B (transient time), D (diameter) and zeta.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chain::{cesaro_limit, gain_bias_from, span, transient_times};
use crate::error::{Error, Result};
use crate::model::{deterministic_policies, CmdpInstance, Signal, DEFAULT_POLICY_CAP};
use crate::oracle::slater_constant;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuralParams {
    /// H: max bias span over deterministic policies, for both reward and constraint.
    pub span_bound: f64,
    /// B: max expected time to a policy's recurrent classes.
    pub transient_bound: f64,
    /// D: max over ordered pairs of the minimal expected hitting time (infinite if not communicating).
    pub diameter: f64,
    pub zeta: f64,
}

pub fn structural_params(inst: &CmdpInstance) -> Result<StructuralParams> {
    structural_params_with_cap(inst, DEFAULT_POLICY_CAP)
}

pub fn structural_params_with_cap(inst: &CmdpInstance, cap: u64) -> Result<StructuralParams> {
    let (span_bound, transient_bound) = span_and_transient(inst, cap)?;
    Ok(StructuralParams { span_bound, transient_bound, diameter: diameter(inst)?, zeta: slater_constant(inst)? })
}

/// (H, B) by enumerating deterministic policies.
pub fn span_and_transient(inst: &CmdpInstance, cap: u64) -> Result<(f64, f64)> {
    let mut h = 0.0f64;
    let mut b = 0.0f64;
    for pi in deterministic_policies(inst.n_states(), inst.n_actions(), cap)? {
        let sp = pi.to_stochastic(inst.n_actions());
        let p = inst.policy_matrix(&sp)?;
        let limit = cesaro_limit(&p).map_err(|e| Error::Numerical(format!("{e} for policy {:?}", pi.actions())))?;
        for which in [Signal::Reward, Signal::Constraint] {
            let r = inst.policy_reward(&sp, which)?;
            h = h.max(span(&gain_bias_from(&p, &limit, &r)?.bias)?);
        }
        b = b.max(transient_times(&p)?.into_iter().fold(0.0, f64::max));
    }
    Ok((h, b))
}

/// Max over ordered pairs of the minimal expected hitting time.
pub fn diameter(inst: &CmdpInstance) -> Result<f64> {
    let n = inst.n_states();
    let mut d = 0.0f64;
    for t in 0..n {
        for v in hitting_times_to(inst, t)? {
            d = d.max(v);
        }
    }
    Ok(d)
}

/// Minimal expected steps to reach `target` from each state: stochastic shortest path
/// value iteration, then an exact solve for the greedy policy.
pub fn hitting_times_to(inst: &CmdpInstance, target: usize) -> Result<Vec<f64>> {
    let (n, na) = (inst.n_states(), inst.n_actions());
    let mut reach = vec![false; n];
    reach[target] = true;
    loop {
        let mut changed = false;
        for s in 0..n {
            if !reach[s] && (0..na).any(|a| inst.row(s, a).iter().zip(&reach).any(|(&p, &r)| r && p > 0.0)) {
                reach[s] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    // Actions that keep all mass inside the reachable set.
    let proper = |s: usize, a: usize| inst.row(s, a).iter().zip(&reach).all(|(&p, &r)| r || p == 0.0);

    let q = |v: &[f64], s: usize, a: usize| 1.0 + inst.row(s, a).iter().zip(v).map(|(p, x)| p * x).sum::<f64>();
    let mut v = vec![0.0; n];
    for it in 0.. {
        let mut delta = 0.0f64;
        let mut next = v.clone();
        for s in (0..n).filter(|&s| s != target && reach[s]) {
            let best = (0..na).filter(|&a| proper(s, a)).map(|a| q(&v, s, a)).fold(f64::INFINITY, f64::min);
            delta = delta.max((best - v[s]).abs() / best.max(1.0));
            next[s] = best;
        }
        v = next;
        if delta < 1e-13 {
            break;
        }
        if it > 10_000_000 {
            return Err(Error::Numerical(format!("hitting-time iteration to state {target} did not converge")));
        }
    }
    // Polish with an exact evaluation of the greedy policy.
    let idx: Vec<usize> = (0..n).filter(|&s| s != target && reach[s]).collect();
    if !idx.is_empty() {
        let greedy: Vec<usize> = idx
            .iter()
            .map(|&s| {
                (0..na)
                    .filter(|&a| proper(s, a))
                    .min_by(|&a1, &a2| q(&v, s, a1).total_cmp(&q(&v, s, a2)))
                    .expect("reachable states have a proper action")
            })
            .collect();
        let m = DMatrix::from_fn(idx.len(), idx.len(), |i, j| {
            (if i == j { 1.0 } else { 0.0 }) - inst.row(idx[i], greedy[i])[idx[j]]
        });
        if let Some(x) = m.lu().solve(&DVector::from_element(idx.len(), 1.0)) {
            if x.iter().all(|t| t.is_finite() && *t >= 1.0) {
                for (i, &s) in idx.iter().enumerate() {
                    v[s] = x[i];
                }
            }
        }
    }
    for s in 0..n {
        if !reach[s] {
            v[s] = f64::INFINITY;
        }
    }
    Ok(v)
}
