//! Exact evaluation of a fixed stationary policy: Cesàro limit, gain, bias,
//! discounted values and hitting times.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::model::{CmdpInstance, MixturePolicy, Signal, StochasticPolicy};

/// Kernel entries below this are structural zeros for class detection.
pub const STRUCTURAL_ZERO: f64 = 1e-15;

const LIMIT_TOL: f64 = 1e-10;
const BELLMAN_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainClasses {
    /// Closed communicating classes, each sorted, ordered by smallest member.
    pub recurrent: Vec<Vec<usize>>,
    pub transient: Vec<usize>,
}

pub fn chain_classes(p: &DMatrix<f64>) -> ChainClasses {
    let n = p.nrows();
    let mut g = DiGraph::<(), ()>::with_capacity(n, n * n);
    let nodes: Vec<NodeIndex> = (0..n).map(|_| g.add_node(())).collect();
    for i in 0..n {
        for j in 0..n {
            if p[(i, j)] >= STRUCTURAL_ZERO {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let mut comp_of = vec![0usize; n];
    let sccs: Vec<Vec<usize>> = tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut v: Vec<usize> = c.into_iter().map(NodeIndex::index).collect();
            v.sort_unstable();
            v
        })
        .collect();
    for (k, c) in sccs.iter().enumerate() {
        for &i in c {
            comp_of[i] = k;
        }
    }
    let mut recurrent = Vec::new();
    let mut transient = Vec::new();
    for (k, c) in sccs.into_iter().enumerate() {
        let closed = c.iter().all(|&i| (0..n).all(|j| p[(i, j)] < STRUCTURAL_ZERO || comp_of[j] == k));
        if closed {
            recurrent.push(c);
        } else {
            transient.extend(c);
        }
    }
    recurrent.sort_by_key(|c| c[0]);
    transient.sort_unstable();
    ChainClasses { recurrent, transient }
}

fn solve(m: DMatrix<f64>, rhs: DMatrix<f64>, what: &str) -> std::result::Result<DMatrix<f64>, String> {
    let x = m.lu().solve(&rhs).ok_or_else(|| format!("singular system in {what}"))?;
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(format!("non-finite solution in {what}"))
    }
}

/// Cesàro limit of a stochastic matrix, per recurrent class plus absorption probabilities.
pub fn cesaro_limit(p: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, String> {
    let n = p.nrows();
    let classes = chain_classes(p);
    let mut limit = DMatrix::zeros(n, n);
    let mut stationary = Vec::with_capacity(classes.recurrent.len());
    for class in &classes.recurrent {
        let k = class.len();
        let mut m = DMatrix::from_fn(k, k, |i, j| p[(class[j], class[i])] - if i == j { 1.0 } else { 0.0 });
        m.row_mut(k - 1).fill(1.0);
        let mut rhs = DMatrix::zeros(k, 1);
        rhs[(k - 1, 0)] = 1.0;
        let pi = solve(m, rhs, "stationary distribution")?;
        for &i in class {
            for (jj, &j) in class.iter().enumerate() {
                limit[(i, j)] = pi[(jj, 0)];
            }
        }
        stationary.push(pi);
    }
    let t = &classes.transient;
    if !t.is_empty() {
        let m = DMatrix::from_fn(t.len(), t.len(), |i, j| if i == j { 1.0 } else { 0.0 } - p[(t[i], t[j])]);
        let rhs = DMatrix::from_fn(t.len(), classes.recurrent.len(), |i, k| {
            classes.recurrent[k].iter().map(|&j| p[(t[i], j)]).sum()
        });
        let absorb = solve(m, rhs, "absorption probabilities")?;
        for (ii, &i) in t.iter().enumerate() {
            for (k, class) in classes.recurrent.iter().enumerate() {
                for (jj, &j) in class.iter().enumerate() {
                    limit[(i, j)] = absorb[(ii, k)] * stationary[k][(jj, 0)];
                }
            }
        }
    }
    let resid = (&limit * p - &limit).amax();
    if resid > LIMIT_TOL {
        return Err(format!("Cesàro limit residual {resid:.3e}"));
    }
    Ok(limit)
}

/// `P_pi^inf` for a policy on an instance.
pub fn stationary_matrix(policy: &StochasticPolicy, inst: &CmdpInstance) -> Result<DMatrix<f64>> {
    let p = inst.policy_matrix(policy)?;
    cesaro_limit(&p).map_err(|e| Error::Numerical(format!("{e} for policy {:?}", policy.probs())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainBias {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
}

impl GainBias {
    /// `<start, rho>`.
    pub fn gain_at(&self, start: &[f64]) -> f64 {
        dot(start, &self.gain)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gain and deviation-normalised bias (`P^inf h = 0`) from a policy matrix and its reward.
pub fn gain_bias_from(p: &DMatrix<f64>, limit: &DMatrix<f64>, r: &DVector<f64>) -> Result<GainBias> {
    let n = p.nrows();
    let gain = limit * r;
    let eye = DMatrix::<f64>::identity(n, n);
    let fundamental = &eye - p + limit;
    let rhs = r - &gain;
    let bias = fundamental
        .lu()
        .solve(&rhs)
        .filter(|h| h.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Numerical("singular fundamental matrix".into()))?;
    let scale = r.amax().max(1.0);
    let checks = [
        ("P rho = rho", (p * &gain - &gain).amax()),
        ("rho + h = r + P h", (&gain + &bias - r - p * &bias).amax()),
        ("P^inf h = 0", (limit * &bias).amax()),
    ];
    for (name, v) in checks {
        if !(v <= BELLMAN_TOL * scale) {
            return Err(Error::Numerical(format!("{name} residual {v:.3e}")));
        }
    }
    Ok(GainBias { gain: gain.as_slice().to_vec(), bias: bias.as_slice().to_vec() })
}

pub fn gain_bias(policy: &StochasticPolicy, inst: &CmdpInstance, which: Signal<'_>) -> Result<GainBias> {
    let p = inst.policy_matrix(policy)?;
    let limit = cesaro_limit(&p).map_err(|e| Error::Numerical(format!("{e} for policy {:?}", policy.probs())))?;
    let r = inst.policy_reward(policy, which)?;
    gain_bias_from(&p, &limit, &r)
}

/// `V = (I - gamma P_pi)^{-1} r_pi`.
pub fn discounted_value(
    policy: &StochasticPolicy,
    inst: &CmdpInstance,
    which: Signal<'_>,
    gamma: f64,
) -> Result<Vec<f64>> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return arg(format!("discount {gamma} outside (0, 1)"));
    }
    let p = inst.policy_matrix(policy)?;
    let r = inst.policy_reward(policy, which)?;
    discounted_from(&p, &r, gamma)
}

pub(crate) fn discounted_from(p: &DMatrix<f64>, r: &DVector<f64>, gamma: f64) -> Result<Vec<f64>> {
    let n = p.nrows();
    let m = DMatrix::<f64>::identity(n, n) - p * gamma;
    let v = m
        .clone()
        .lu()
        .solve(r)
        .filter(|v| v.iter().all(|x| x.is_finite()))
        .ok_or_else(|| Error::Numerical("singular discounted system".into()))?;
    let resid = (&m * &v - r).amax();
    if resid > 1e-10 * r.amax().max(1.0) {
        return Err(Error::Numerical(format!("discounted residual {resid:.3e}")));
    }
    Ok(v.as_slice().to_vec())
}

pub fn span(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return arg("span of an empty vector");
    }
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    Ok(hi - lo)
}

/// `sum_i w_i <at, rho^{pi_i}>`.
pub fn mixture_value(mix: &MixturePolicy, inst: &CmdpInstance, which: Signal<'_>, at: &[f64]) -> Result<f64> {
    if at.len() != inst.n_states() {
        return arg("evaluation distribution has the wrong length");
    }
    let mut total = 0.0;
    for (w, pi) in mix.members() {
        total += w * gain_bias(pi, inst, which)?.gain_at(at);
    }
    Ok(total)
}

/// Expected steps to reach the recurrent classes; zero on recurrent states.
pub fn transient_times(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let classes = chain_classes(p);
    let t = &classes.transient;
    let mut out = vec![0.0; p.nrows()];
    if t.is_empty() {
        return Ok(out);
    }
    let m = DMatrix::from_fn(t.len(), t.len(), |i, j| if i == j { 1.0 } else { 0.0 } - p[(t[i], t[j])]);
    let times = solve(m, DMatrix::from_element(t.len(), 1, 1.0), "transient times").map_err(Error::Numerical)?;
    for (ii, &i) in t.iter().enumerate() {
        out[i] = times[(ii, 0)];
    }
    Ok(out)
}

/// `<start, rho>` for several signals, sharing one Cesàro limit.
pub fn start_gains(policy: &StochasticPolicy, inst: &CmdpInstance, signals: &[Signal<'_>]) -> Result<Vec<f64>> {
    let limit = stationary_matrix(policy, inst)?;
    let start = DVector::from_column_slice(inst.start());
    let weights = limit.transpose() * start;
    signals
        .iter()
        .map(|&w| Ok(weights.dot(&inst.policy_reward(policy, w)?)))
        .collect()
}
