//! Lower-bound instance families: the branched master CAMDP with absorbing
//! components, and a best-effort communicating tree variant.
//!
//! Component layout (offsets inside a branch): 0 root, 1 the decision state,
//! 2..=5 absorbing. Action 0 at state 1 is the safe-reward action `a_1`; actions
//! `a >= 1` exit slowly to states 2/3. The root's action 1 leads to the
//! high-constraint sink 5. The master puts the hub last.

use serde::{Deserialize, Serialize};

use crate::chain::stationary_matrix;
use crate::error::{arg, Result};
use crate::model::{CmdpInstance, StochasticPolicy};
use crate::oracle::{solve_camdp_lp_with, Cut, LpOptions, OccupancySolution, Sense};

/// Threshold used by every generated instance.
pub const HARD_THRESHOLD: f64 = 0.5;

const COMPONENT: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralHardParams {
    /// Total states, `6 m + 1`.
    pub n_states: usize,
    pub n_actions: usize,
    /// Expected dwell time at the decision state under exit actions.
    pub transient: f64,
    pub epsilon: f64,
    pub zeta: f64,
    /// Branch holding the advantaged action; `None` gives the base instance.
    pub s_star: Option<usize>,
    /// Advantaged exit action, in `1..n_actions`.
    pub a_star: usize,
}

impl GeneralHardParams {
    pub fn n_branches(&self) -> usize {
        (self.n_states.saturating_sub(1)) / COMPONENT
    }

    pub fn validate(&self) -> Result<()> {
        check_component(self.n_actions, self.transient, self.epsilon, self.zeta)?;
        let m = self.n_branches();
        if m == 0 || self.n_states != COMPONENT * m + 1 {
            return arg(format!("n_states {} is not 6 m + 1", self.n_states));
        }
        if m > self.n_actions {
            return arg(format!("{m} branches need at least {m} hub actions"));
        }
        if self.s_star.is_some_and(|s| s >= m) {
            return arg("designated branch out of range");
        }
        if !(1..self.n_actions).contains(&self.a_star) {
            return arg(format!("designated action must lie in 1..{}", self.n_actions));
        }
        Ok(())
    }
}

fn check_component(n_actions: usize, transient: f64, epsilon: f64, zeta: f64) -> Result<()> {
    if n_actions < 3 {
        return arg("hard instances need at least 3 actions");
    }
    if !(transient >= 1.0 && transient.is_finite()) {
        return arg("transient parameter must be at least 1");
    }
    if !((0.0..=1.0).contains(&epsilon) && zeta > 0.0) {
        return arg("need epsilon in [0, 1] and zeta > 0");
    }
    if epsilon * zeta > 0.25 {
        return arg("epsilon * zeta must not exceed 1/4");
    }
    // keeps every constraint entry inside [0, 1]
    if zeta * (1.0 + epsilon) > 0.5 {
        return arg("need zeta (1 + epsilon) <= 1/2");
    }
    Ok(())
}

/// Per-step payoffs of a decision-state action: `(reward, constraint)`.
fn exit_payoff(designated: bool, epsilon: f64, zeta: f64) -> (f64, f64) {
    let d = epsilon * zeta;
    let k = HARD_THRESHOLD - zeta - d;
    if designated {
        (0.5 + d, k * (1.0 + 2.0 * d) / (1.0 - 2.0 * d))
    } else {
        (0.5 - d, k)
    }
}

/// Best long-run reward reachable inside a component.
fn component_gain(designated: bool, epsilon: f64, zeta: f64) -> f64 {
    if designated {
        0.5 + epsilon * zeta
    } else {
        0.5
    }
}

struct Tables {
    n: usize,
    na: usize,
    kernel: Vec<f64>,
    reward: Vec<f64>,
    constraint: Vec<f64>,
}

impl Tables {
    fn new(n: usize, na: usize) -> Self {
        Self { n, na, kernel: vec![0.0; n * na * n], reward: vec![0.0; n * na], constraint: vec![0.0; n * na] }
    }

    fn set(&mut self, s: usize, a: usize, next: &[(usize, f64)], r: f64, c: f64) {
        let base = (s * self.na + a) * self.n;
        for &(s2, p) in next {
            self.kernel[base + s2] += p;
        }
        self.reward[s * self.na + a] = r;
        self.constraint[s * self.na + a] = c;
    }

    fn finish(self, start: usize) -> Result<CmdpInstance> {
        let mut st = vec![0.0; self.n];
        st[start] = 1.0;
        CmdpInstance::new(self.n, self.na, self.kernel, self.reward, self.constraint, HARD_THRESHOLD, st)
    }
}

fn write_component(t: &mut Tables, o: usize, a_star: Option<usize>, transient: f64, epsilon: f64, zeta: f64) {
    let b = HARD_THRESHOLD;
    let d = epsilon * zeta;
    let g = component_gain(a_star.is_some(), epsilon, zeta);
    for a in 0..t.na {
        if a == 1 {
            t.set(o, a, &[(o + 5, 1.0)], 0.0, b + zeta);
        } else {
            t.set(o, a, &[(o + 1, 1.0)], g, b - zeta);
        }
    }
    t.set(o + 1, 0, &[(o + 4, 1.0)], 0.5, b - zeta);
    for a in 1..t.na {
        let designated = a_star == Some(a);
        let (to2, to3) = if designated { (1.0 - 2.0 * d, 1.0 + 2.0 * d) } else { (1.0 + 2.0 * d, 1.0 - 2.0 * d) };
        let (r, c) = exit_payoff(designated, epsilon, zeta);
        let stay = 1.0 - 1.0 / transient;
        t.set(
            o + 1,
            a,
            &[(o + 1, stay), (o + 2, to2 / (2.0 * transient)), (o + 3, to3 / (2.0 * transient))],
            r,
            c,
        );
    }
    let k = b - zeta - d;
    let sinks = [(2, 0.0, 0.0), (3, 1.0, 2.0 * k / (1.0 - 2.0 * d)), (4, 0.5, b - zeta), (5, 0.0, b + zeta)];
    for (off, r, c) in sinks {
        for a in 0..t.na {
            t.set(o + off, a, &[(o + off, 1.0)], r, c);
        }
    }
}

/// Six-state component started at its root. `a_star = None` gives the base component.
pub fn build_general_component(
    a_star: Option<usize>,
    n_actions: usize,
    transient: f64,
    epsilon: f64,
    zeta: f64,
) -> Result<CmdpInstance> {
    check_component(n_actions, transient, epsilon, zeta)?;
    if a_star.is_some_and(|a| !(1..n_actions).contains(&a)) {
        return arg(format!("designated action must lie in 1..{n_actions}"));
    }
    let mut t = Tables::new(COMPONENT, n_actions);
    write_component(&mut t, 0, a_star, transient, epsilon, zeta);
    t.finish(0)
}

/// Hub (last state) choosing one of `m` components; hub action `a` enters branch `min(a, m - 1)`.
pub fn build_general_master(params: &GeneralHardParams) -> Result<CmdpInstance> {
    params.validate()?;
    let m = params.n_branches();
    let hub = COMPONENT * m;
    let mut t = Tables::new(params.n_states, params.n_actions);
    for k in 0..m {
        let a_star = (params.s_star == Some(k)).then_some(params.a_star);
        write_component(&mut t, COMPONENT * k, a_star, params.transient, params.epsilon, params.zeta);
    }
    for a in 0..params.n_actions {
        let k = a.min(m - 1);
        let g = component_gain(params.s_star == Some(k), params.epsilon, params.zeta);
        t.set(hub, a, &[(COMPONENT * k, 1.0)], g, HARD_THRESHOLD);
    }
    t.finish(hub)
}

/// Closed-form LP optimum of a master with a designated branch.
pub fn perturbed_optimum(epsilon: f64, zeta: f64) -> f64 {
    let d = epsilon * zeta;
    (1.0 - 4.0 * d * d) / (2.0 * (2.0 - epsilon + 2.0 * epsilon * d))
}

fn is_self_loop(inst: &CmdpInstance, s: usize) -> bool {
    (0..inst.n_actions()).all(|a| inst.row(s, a)[s] == 1.0)
}

/// Number of branches if `inst` has the master layout.
fn master_branches(inst: &CmdpInstance) -> Result<usize> {
    let n = inst.n_states();
    let m = n.saturating_sub(1) / COMPONENT;
    let foreign = || arg("instance does not have the hard-instance layout");
    if m == 0 || n != COMPONENT * m + 1 || inst.n_actions() < 3 || inst.start()[n - 1] != 1.0 {
        return foreign();
    }
    for k in 0..m {
        let o = COMPONENT * k;
        if !(2..=5).all(|off| is_self_loop(inst, o + off))
            || inst.row(o + 1, 0)[o + 4] != 1.0
            || inst.row(o, 1)[o + 5] != 1.0
        {
            return foreign();
        }
    }
    Ok(m)
}

/// Long-run masses of a master instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchMasses {
    /// On the high-constraint sinks.
    pub mu0: f64,
    /// On the safe-reward sinks reached by `a_1`.
    pub mu1: f64,
    /// On the exit sinks (states 2 and 3).
    pub mu2: f64,
}

impl BranchMasses {
    /// `mu1 / (1 - mu0)`.
    pub fn mu1_prime(&self) -> Result<f64> {
        let rest = 1.0 - self.mu0;
        if rest <= 1e-12 {
            return Err(crate::error::Error::Numerical("mu1' undefined: all mass on the high-constraint sinks".into()));
        }
        Ok(self.mu1 / rest)
    }
}

/// Occupancy source for the separation diagnostics.
#[derive(Debug, Clone, Copy)]
pub enum Occupancy<'a> {
    Policy(&'a StochasticPolicy),
    /// Flat `S x A` long-run frequencies.
    Measure(&'a [f64]),
}

fn state_masses(inst: &CmdpInstance, occ: Occupancy<'_>) -> Result<Vec<f64>> {
    let n = inst.n_states();
    match occ {
        Occupancy::Policy(pi) => {
            let limit = stationary_matrix(pi, inst)?;
            Ok((0..n).map(|j| (0..n).map(|i| inst.start()[i] * limit[(i, j)]).sum()).collect())
        }
        Occupancy::Measure(mu) => {
            if mu.len() != inst.n_pairs() {
                return arg("occupancy has the wrong shape");
            }
            Ok(mu.chunks(inst.n_actions()).map(|r| r.iter().sum()).collect())
        }
    }
}

pub fn branch_masses(inst: &CmdpInstance, occ: Occupancy<'_>) -> Result<BranchMasses> {
    let m = master_branches(inst)?;
    let mass = state_masses(inst, occ)?;
    let sum = |offs: &[usize]| (0..m).flat_map(|k| offs.iter().map(move |o| COMPONENT * k + o)).map(|s| mass[s]).sum();
    Ok(BranchMasses { mu0: sum(&[5]), mu1: sum(&[4]), mu2: sum(&[2, 3]) })
}

/// `mu1' = mu1 / (1 - mu0)` for a master instance built by this module.
pub fn occupancy_fraction_mu1(inst: &CmdpInstance, occ: Occupancy<'_>) -> Result<f64> {
    branch_masses(inst, occ)?.mu1_prime()
}

/// LP optimum of a master with the extra row `mu1' <= 2/3` (`Le`) or `>= 2/3` (`Ge`).
pub fn separation_lp(inst: &CmdpInstance, sense: Sense) -> Result<OccupancySolution> {
    let m = master_branches(inst)?;
    let na = inst.n_actions();
    // mu1 - (2/3)(1 - mu0) written per state
    let mut coeffs = vec![-2.0 / 3.0; inst.n_pairs()];
    for k in 0..m {
        let (s4, s5) = (COMPONENT * k + 4, COMPONENT * k + 5);
        coeffs[s4 * na..(s4 + 1) * na].fill(1.0 / 3.0);
        coeffs[s5 * na..(s5 + 1) * na].fill(0.0);
    }
    let cuts = [Cut { coeffs, sense, rhs: 0.0 }];
    solve_camdp_lp_with(inst, &LpOptions { cuts: &cuts, ..Default::default() })
}

/// `KL(Q1 || Q2)` between the designated and non-designated exit rows, and the bound `32 eps^2 zeta^2 / B`.
pub fn kl_designated_rows(epsilon: f64, zeta: f64, transient: f64) -> Result<(f64, f64)> {
    if !(transient >= 1.0 && epsilon >= 0.0 && zeta >= 0.0) || epsilon * zeta > 0.25 {
        return arg("need B >= 1, epsilon, zeta >= 0 and epsilon * zeta <= 1/4");
    }
    let d = 2.0 * epsilon * zeta;
    let q1 = [1.0 - 1.0 / transient, (1.0 - d) / (2.0 * transient), (1.0 + d) / (2.0 * transient)];
    let q2 = [q1[0], q1[2], q1[1]];
    Ok((kl(&q1, &q2), 32.0 * epsilon * epsilon * zeta * zeta / transient))
}

pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(&a, _)| a > 0.0).map(|(&a, &b)| a * (a / b).ln()).sum()
}

/// Layout of a communicating instance: per leaf component `(x, y, z)` state indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeLayout {
    pub internal: usize,
    pub parent: Vec<Option<usize>>,
    pub leaves: Vec<(usize, usize, usize)>,
}

/// Best-effort communicating construction: an `(A-1)`-ary tree of internal nodes whose
/// leaves are three-state components. Leaf `x` has the safe loop (action 0), slow exit
/// actions `1..A-1` towards `y`/`z`, and action `A-1` to its parent. `y` holds the
/// high-constraint loop on action 0; `y` and `z` return to `x` on action `A-1`.
/// `perturbed = Some((k, l))` makes exit action `l` advantaged at leaf `k`.
pub fn build_communicating_hard(
    n_states: usize,
    n_actions: usize,
    diameter: f64,
    epsilon: f64,
    zeta: f64,
    perturbed: Option<(usize, usize)>,
) -> Result<(CmdpInstance, TreeLayout)> {
    check_component(n_actions, 1.0, epsilon, zeta)?;
    if epsilon > 1.0 / 16.0 {
        return arg("epsilon must not exceed 1/16");
    }
    let log_a = ((n_states as f64).ln() / (n_actions as f64).ln()).ceil();
    if !(diameter >= (16.0 * log_a).max(16.0)) {
        return arg(format!("diameter {diameter} below max(16 ceil(log_A S), 16)"));
    }
    let k_leaves = n_states.div_ceil(4);
    if n_states < 3 * k_leaves + 1 {
        return arg(format!("{n_states} states leave no internal node"));
    }
    let internal = n_states - 3 * k_leaves;
    let arity = n_actions - 1;
    if let Some((k, l)) = perturbed {
        if k >= k_leaves || !(1..n_actions - 1).contains(&l) {
            return arg("perturbed leaf or action out of range");
        }
    }

    // Internal nodes form a complete arity-ary tree; leaves fill childless nodes first.
    let mut parent: Vec<Option<usize>> = (0..internal).map(|j| (j > 0).then(|| (j - 1) / arity)).collect();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); internal];
    for j in 1..internal {
        children[(j - 1) / arity].push(j);
    }
    let mut used: Vec<usize> = children.iter().map(Vec::len).collect();
    let mut leaf_parent: Vec<usize> = (0..internal).filter(|&j| used[j] == 0).collect();
    if leaf_parent.len() > k_leaves {
        return arg("too few leaf components to terminate every internal branch");
    }
    for &j in &leaf_parent {
        used[j] = 1;
    }
    for j in 0..internal {
        while used[j] < arity && leaf_parent.len() < k_leaves {
            used[j] += 1;
            leaf_parent.push(j);
        }
    }
    if leaf_parent.len() < k_leaves {
        return arg("tree has too few child slots for the leaf components");
    }

    let leaves: Vec<(usize, usize, usize)> =
        (0..k_leaves).map(|k| (internal + 3 * k, internal + 3 * k + 1, internal + 3 * k + 2)).collect();
    let mut kids: Vec<Vec<usize>> = children;
    for (k, &j) in leaf_parent.iter().enumerate() {
        kids[j].push(leaves[k].0);
    }
    parent.resize(n_states, None);
    for (k, &(x, y, z)) in leaves.iter().enumerate() {
        parent[x] = Some(leaf_parent[k]);
        parent[y] = Some(x);
        parent[z] = Some(x);
    }

    let b = HARD_THRESHOLD;
    let d = epsilon * zeta;
    let dp = diameter / 8.0;
    let up = n_actions - 1;
    let mut t = Tables::new(n_states, n_actions);
    for j in 0..internal {
        for a in 0..n_actions {
            if a < kids[j].len() {
                t.set(j, a, &[(kids[j][a], 1.0)], 0.0, 0.0);
            } else if a == up {
                t.set(j, a, &[(parent[j].unwrap_or(j), 1.0)], 0.0, 0.0);
            } else {
                t.set(j, a, &[(j, 1.0)], 0.0, 0.0);
            }
        }
    }
    let k_const = b - zeta - d;
    for (k, &(x, y, z)) in leaves.iter().enumerate() {
        t.set(x, 0, &[(x, 1.0)], 0.5, b - zeta);
        for a in 1..up {
            let designated = perturbed == Some((k, a));
            let (to_y, to_z) = if designated { (1.0 - 2.0 * d, 1.0 + 2.0 * d) } else { (1.0 + 2.0 * d, 1.0 - 2.0 * d) };
            let (r, c) = exit_payoff(designated, epsilon, zeta);
            t.set(x, a, &[(x, 1.0 - 1.0 / dp), (y, to_y / (2.0 * dp)), (z, to_z / (2.0 * dp))], r, c);
        }
        t.set(x, up, &[(leaf_parent[k], 1.0)], 0.0, 0.0);
        t.set(y, 0, &[(y, 1.0)], 0.0, b + zeta);
        t.set(z, 0, &[(z, 1.0)], 0.0, 0.0);
        for a in 1..up {
            t.set(y, a, &[(y, 1.0)], 0.0, 0.0);
            t.set(z, a, &[(z, 1.0)], 0.0, 0.0);
        }
        t.set(y, up, &[(x, 1.0)], 0.0, 0.0);
        t.set(z, up, &[(x, 1.0)], 1.0, 2.0 * k_const / (1.0 - 2.0 * d));
    }
    let inst = t.finish(0)?;
    Ok((inst, TreeLayout { internal, parent, leaves }))
}

/// `mu1'` analog for the communicating family: mass on the leaf safe loops over
/// everything outside the high-constraint loops.
pub fn communicating_mu1(inst: &CmdpInstance, layout: &TreeLayout, mu: &[f64]) -> Result<f64> {
    let na = inst.n_actions();
    if mu.len() != inst.n_pairs() {
        return arg("occupancy has the wrong shape");
    }
    let mu0: f64 = layout.leaves.iter().map(|&(_, y, _)| mu[y * na]).sum();
    let mu1: f64 = layout.leaves.iter().map(|&(x, _, _)| mu[x * na]).sum();
    let total: f64 = mu.iter().sum();
    let rest = total - mu0;
    if rest <= 1e-12 {
        return Err(crate::error::Error::Numerical("mu1' undefined: all mass on the high-constraint loops".into()));
    }
    Ok(mu1 / rest)
}
