//! Tabular CAMDP instances and policies.
//!
//! Arrays are stored flat and row-major: `kernel[(s * A + a) * S + s2]`,
//! `reward[s * A + a]`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};

const SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceFile", into = "InstanceFile")]
pub struct CmdpInstance {
    n_states: usize,
    n_actions: usize,
    kernel: Vec<f64>,
    reward: Vec<f64>,
    constraint: Vec<f64>,
    threshold: f64,
    start: Vec<f64>,
}

/// Which per-(s,a) signal to evaluate.
#[derive(Debug, Clone, Copy)]
pub enum Signal<'a> {
    Reward,
    Constraint,
    Custom(&'a [f64]),
}

impl CmdpInstance {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        kernel: Vec<f64>,
        reward: Vec<f64>,
        constraint: Vec<f64>,
        threshold: f64,
        start: Vec<f64>,
    ) -> Result<Self> {
        let inst = Self { n_states, n_actions, kernel, reward, constraint, threshold, start };
        inst.validate()?;
        Ok(inst)
    }

    fn validate(&self) -> Result<()> {
        let (s, a) = (self.n_states, self.n_actions);
        let bad = |m: String| Err(Error::Instance(m));
        if s == 0 || a == 0 {
            return bad("n_states and n_actions must be positive".into());
        }
        if self.kernel.len() != s * a * s {
            return bad(format!("kernel has {} entries, expected {}", self.kernel.len(), s * a * s));
        }
        if self.reward.len() != s * a || self.constraint.len() != s * a {
            return bad(format!("reward and constraint need {} entries", s * a));
        }
        if self.start.len() != s {
            return bad(format!("start has {} entries, expected {s}", self.start.len()));
        }
        for (i, row) in self.kernel.chunks(s).enumerate() {
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return bad(format!("kernel row ({}, {}) has a negative or non-finite entry", i / a, i % a));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > SUM_TOL {
                return bad(format!("kernel row ({}, {}) sums to {total}", i / a, i % a));
            }
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !self.reward.iter().all(|&v| unit(v)) {
            return bad("reward entries must lie in [0, 1]".into());
        }
        if !self.constraint.iter().all(|&v| unit(v)) {
            return bad("constraint entries must lie in [0, 1]".into());
        }
        if !unit(self.threshold) {
            return bad(format!("threshold {} outside [0, 1]", self.threshold));
        }
        if self.start.iter().any(|p| !(p.is_finite() && *p >= 0.0))
            || (self.start.iter().sum::<f64>() - 1.0).abs() > SUM_TOL
        {
            return bad("start must be a probability vector".into());
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn reward(&self) -> &[f64] {
        &self.reward
    }

    pub fn constraint(&self) -> &[f64] {
        &self.constraint
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn start(&self) -> &[f64] {
        &self.start
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let n = self.n_states;
        let i = (s * self.n_actions + a) * n;
        &self.kernel[i..i + n]
    }

    pub fn signal<'a>(&'a self, which: Signal<'a>) -> Result<&'a [f64]> {
        match which {
            Signal::Reward => Ok(&self.reward),
            Signal::Constraint => Ok(&self.constraint),
            Signal::Custom(v) if v.len() == self.n_pairs() => {
                if v.iter().all(|x| x.is_finite()) {
                    Ok(v)
                } else {
                    arg("custom reward has non-finite entries")
                }
            }
            Signal::Custom(v) => arg(format!("custom reward has {} entries, expected {}", v.len(), self.n_pairs())),
        }
    }

    /// Same instance with a different threshold.
    pub fn with_threshold(&self, b: f64) -> Result<Self> {
        let mut out = self.clone();
        out.threshold = b;
        out.validate()?;
        Ok(out)
    }

    /// Same rewards, threshold and start on a different kernel.
    pub fn with_kernel(&self, kernel: Vec<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.kernel = kernel;
        out.validate()?;
        Ok(out)
    }

    pub fn with_start(&self, start: Vec<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.start = start;
        out.validate()?;
        Ok(out)
    }

    /// `P_pi` as a dense S x S matrix.
    pub fn policy_matrix(&self, policy: &StochasticPolicy) -> Result<DMatrix<f64>> {
        policy.check(self)?;
        let n = self.n_states;
        let mut p = DMatrix::zeros(n, n);
        for s in 0..n {
            for a in 0..self.n_actions {
                let w = policy.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                for (s2, &q) in self.row(s, a).iter().enumerate() {
                    p[(s, s2)] += w * q;
                }
            }
        }
        Ok(p)
    }

    /// `r_pi(s) = sum_a pi(a|s) r(s,a)`.
    pub fn policy_reward(&self, policy: &StochasticPolicy, which: Signal<'_>) -> Result<DVector<f64>> {
        policy.check(self)?;
        let r = self.signal(which)?;
        let a_n = self.n_actions;
        Ok(DVector::from_fn(self.n_states, |s, _| {
            (0..a_n).map(|a| policy.prob(s, a) * r[s * a_n + a]).sum()
        }))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// On-disk layout with nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct InstanceFile {
    pub n_states: usize,
    pub n_actions: usize,
    pub kernel: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
    pub constraint: Vec<Vec<f64>>,
    pub threshold: f64,
    pub start: Vec<f64>,
}

pub(crate) fn nest2(flat: &[f64], cols: usize) -> Vec<Vec<f64>> {
    flat.chunks(cols).map(<[f64]>::to_vec).collect()
}

impl From<CmdpInstance> for InstanceFile {
    fn from(m: CmdpInstance) -> Self {
        let (s, a) = (m.n_states, m.n_actions);
        let kernel = m.kernel.chunks(a * s).map(|blk| nest2(blk, s)).collect();
        InstanceFile {
            n_states: s,
            n_actions: a,
            kernel,
            reward: nest2(&m.reward, a),
            constraint: nest2(&m.constraint, a),
            threshold: m.threshold,
            start: m.start,
        }
    }
}

impl TryFrom<InstanceFile> for CmdpInstance {
    type Error = Error;

    fn try_from(f: InstanceFile) -> Result<Self> {
        let (s, a) = (f.n_states, f.n_actions);
        let shape_err = |what: &str| Error::Instance(format!("{what} has the wrong shape for {s} states x {a} actions"));
        if f.kernel.len() != s || f.kernel.iter().any(|r| r.len() != a || r.iter().any(|q| q.len() != s)) {
            return Err(shape_err("kernel"));
        }
        let flat2 = |v: Vec<Vec<f64>>, what: &str| {
            if v.len() != s || v.iter().any(|r| r.len() != a) {
                Err(shape_err(what))
            } else {
                Ok(v.concat())
            }
        };
        let reward = flat2(f.reward, "reward")?;
        let constraint = flat2(f.constraint, "constraint")?;
        let kernel = f.kernel.into_iter().flatten().flatten().collect();
        CmdpInstance::new(s, a, kernel, reward, constraint, f.threshold, f.start)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeterministicPolicy(Vec<usize>);

impl DeterministicPolicy {
    pub fn new(actions: Vec<usize>, n_actions: usize) -> Result<Self> {
        if let Some(s) = actions.iter().position(|&a| a >= n_actions) {
            return arg(format!("state {s} uses action {} but only {n_actions} exist", actions[s]));
        }
        Ok(Self(actions))
    }

    pub fn constant(n_states: usize, action: usize) -> Self {
        Self(vec![action; n_states])
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn action(&self, s: usize) -> usize {
        self.0[s]
    }

    pub fn n_states(&self) -> usize {
        self.0.len()
    }

    pub fn to_stochastic(&self, n_actions: usize) -> StochasticPolicy {
        let mut probs = vec![0.0; self.0.len() * n_actions];
        for (s, &a) in self.0.iter().enumerate() {
            probs[s * n_actions + a] = 1.0;
        }
        StochasticPolicy { n_actions, probs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticPolicy {
    n_actions: usize,
    probs: Vec<f64>,
}

impl StochasticPolicy {
    pub fn new(n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if n_actions == 0 || probs.is_empty() || !probs.len().is_multiple_of(n_actions) {
            return arg("policy table shape does not match the action count");
        }
        for (s, row) in probs.chunks(n_actions).enumerate() {
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > SUM_TOL {
                return arg(format!("policy row {s} is not a probability vector"));
            }
        }
        Ok(Self { n_actions, probs })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let a = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != a) {
            return arg("ragged policy rows");
        }
        Self::new(a, rows.concat())
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self { n_actions, probs: vec![1.0 / n_actions as f64; n_states * n_actions] }
    }

    pub fn n_states(&self) -> usize {
        self.probs.len() / self.n_actions
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// The deterministic policy this represents, if every row is a point mass.
    pub fn as_deterministic(&self) -> Option<DeterministicPolicy> {
        let mut out = Vec::with_capacity(self.n_states());
        for row in self.probs.chunks(self.n_actions) {
            out.push(row.iter().position(|&p| p == 1.0)?);
        }
        Some(DeterministicPolicy(out))
    }

    pub(crate) fn check(&self, inst: &CmdpInstance) -> Result<()> {
        if self.n_actions != inst.n_actions() || self.n_states() != inst.n_states() {
            return arg(format!(
                "policy is {}x{} but the instance is {}x{}",
                self.n_states(),
                self.n_actions,
                inst.n_states(),
                inst.n_actions()
            ));
        }
        Ok(())
    }
}

/// Weighted list of stationary policies; its value is the weighted average of member values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePolicy {
    members: Vec<(f64, StochasticPolicy)>,
}

impl MixturePolicy {
    pub fn new(members: Vec<(f64, StochasticPolicy)>) -> Result<Self> {
        if members.is_empty() {
            return arg("mixture needs at least one member");
        }
        if members.iter().any(|(w, _)| !(w.is_finite() && *w >= 0.0)) {
            return arg("mixture weights must be non-negative");
        }
        let total: f64 = members.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > SUM_TOL {
            return arg(format!("mixture weights sum to {total}"));
        }
        Ok(Self { members })
    }

    pub fn singleton(policy: StochasticPolicy) -> Self {
        Self { members: vec![(1.0, policy)] }
    }

    pub fn members(&self) -> &[(f64, StochasticPolicy)] {
        &self.members
    }
}

/// Shape of a seeded random instance used by tests, verification suites and benches.
#[derive(Debug, Clone)]
pub struct RandomSpec {
    pub n_states: usize,
    pub n_actions: usize,
    /// Probability that a kernel entry is structurally non-zero (at least one per row survives).
    pub density: f64,
    pub threshold: f64,
}

impl RandomSpec {
    pub fn dense(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions, density: 1.0, threshold: 0.5 }
    }
}

/// Seeded random instance with start mass on state 0.
pub fn random_instance(spec: &RandomSpec, seed: u64) -> Result<CmdpInstance> {
    let (s, a) = (spec.n_states, spec.n_actions);
    if s == 0 || a == 0 || !(spec.density > 0.0 && spec.density <= 1.0) {
        return arg("random instance needs positive sizes and density in (0, 1]");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kernel = Vec::with_capacity(s * a * s);
    for _ in 0..s * a {
        let mut row: Vec<f64> = (0..s)
            .map(|_| if rng.random::<f64>() < spec.density { rng.random::<f64>() + 0.05 } else { 0.0 })
            .collect();
        if row.iter().all(|&p| p == 0.0) {
            row[rng.random_range(0..s)] = 1.0;
        }
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= total);
        normalize_exact(&mut row);
        kernel.extend(row);
    }
    let reward = (0..s * a).map(|_| rng.random::<f64>()).collect();
    let constraint = (0..s * a).map(|_| rng.random::<f64>()).collect();
    let mut start = vec![0.0; s];
    start[0] = 1.0;
    CmdpInstance::new(s, a, kernel, reward, constraint, spec.threshold, start)
}

/// Push the rounding residue of a probability row onto its largest entry.
pub(crate) fn normalize_exact(row: &mut [f64]) {
    let total: f64 = row.iter().sum();
    if let Some(i) = (0..row.len()).max_by(|&i, &j| row[i].total_cmp(&row[j])) {
        row[i] += 1.0 - total;
    }
}

/// Default cap on `A^S` for anything that enumerates deterministic policies.
pub const DEFAULT_POLICY_CAP: u64 = 1_000_000;

/// All deterministic policies in lexicographic order (state 0 most significant).
pub fn deterministic_policies(
    n_states: usize,
    n_actions: usize,
    cap: u64,
) -> Result<impl Iterator<Item = DeterministicPolicy>> {
    let count = (n_actions as f64).powi(n_states as i32);
    if count > cap as f64 {
        return Err(Error::Scope { count, cap });
    }
    let total = count as u64;
    Ok((0..total).map(move |mut k| {
        let mut acts = vec![0; n_states];
        for s in (0..n_states).rev() {
            acts[s] = (k % n_actions as u64) as usize;
            k /= n_actions as u64;
        }
        DeterministicPolicy(acts)
    }))
}
