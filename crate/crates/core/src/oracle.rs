//! Occupancy-measure LP for CAMDPs, Slater constant and brute-force enumeration.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::chain::start_gains;
use crate::error::{arg, Result};
use crate::model::{deterministic_policies, nest2, CmdpInstance, DeterministicPolicy, Signal, StochasticPolicy};
use crate::simplex::{self, LinearProgram, LpStatus};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum LpForm {
    /// Two flow blocks (recurrent frequencies plus transient routing from the start distribution).
    #[default]
    Multichain,
    /// Single flow block with normalization; valid when every policy is unichain.
    Unichain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
}

/// Extra linear row on the occupancy `mu` (S x A, flat).
#[derive(Debug, Clone)]
pub struct Cut {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default)]
pub struct LpOptions<'a> {
    pub form: LpForm,
    /// Replaces the instance threshold.
    pub threshold: Option<f64>,
    /// Replaces the instance reward as objective.
    pub reward: Option<&'a [f64]>,
    /// Drop the constraint row entirely.
    pub unconstrained: bool,
    pub cuts: &'a [Cut],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpOutcome {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancySolution {
    pub n_actions: usize,
    /// Long-run state-action frequencies, flat S x A.
    pub mu: Vec<f64>,
    /// Transient routing flows of the multichain form (empty for the unichain form).
    pub flow: Vec<f64>,
    pub objective: f64,
    pub constraint_value: f64,
    /// Multiplier of the constraint row, `-y_con >= 0`; 0 when unconstrained.
    pub dual_lambda: f64,
    pub status: LpOutcome,
    /// `|primal - dual|` objective difference at the final basis.
    pub duality_gap: f64,
    pub dual_infeasibility: f64,
}

#[derive(Serialize)]
struct SolutionFile<'a> {
    mu: Vec<Vec<f64>>,
    objective: Option<f64>,
    constraint_value: Option<f64>,
    lambda: Option<f64>,
    status: &'a LpOutcome,
}

impl OccupancySolution {
    pub fn to_json(&self) -> Result<String> {
        let ok = self.status == LpOutcome::Optimal;
        let f = SolutionFile {
            mu: nest2(&self.mu, self.n_actions),
            objective: ok.then_some(self.objective),
            constraint_value: ok.then_some(self.constraint_value),
            lambda: ok.then_some(self.dual_lambda),
            status: &self.status,
        };
        Ok(serde_json::to_string_pretty(&f)?)
    }

    /// Stationary policy realizing the solution: recurrent frequencies where positive,
    /// transient flows elsewhere, uniform on unvisited states.
    pub fn policy(&self) -> Result<StochasticPolicy> {
        let a = self.n_actions;
        let mut probs = Vec::with_capacity(self.mu.len());
        for s in 0..self.mu.len() / a {
            let x = &self.mu[s * a..(s + 1) * a];
            let row = if x.iter().sum::<f64>() > 1e-12 || self.flow.is_empty() {
                x
            } else {
                &self.flow[s * a..(s + 1) * a]
            };
            probs.extend(normalized_row(row));
        }
        StochasticPolicy::new(a, probs)
    }
}

fn normalized_row(row: &[f64]) -> Vec<f64> {
    let total: f64 = row.iter().sum();
    if total > 1e-12 {
        row.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / row.len() as f64; row.len()]
    }
}

/// `pi(a|s) = mu(s,a) / sum_a mu(s,a)`; uniform where the occupancy vanishes.
pub fn policy_from_occupancy(mu: &[f64], n_actions: usize) -> Result<StochasticPolicy> {
    if n_actions == 0 || mu.is_empty() || !mu.len().is_multiple_of(n_actions) {
        return arg("occupancy shape does not match the action count");
    }
    if mu.iter().any(|v| !(*v >= 0.0)) {
        return arg("occupancy has negative entries");
    }
    let probs = mu.chunks(n_actions).flat_map(normalized_row).collect();
    StochasticPolicy::new(n_actions, probs)
}

pub fn solve_camdp_lp(inst: &CmdpInstance, threshold_override: Option<f64>) -> Result<OccupancySolution> {
    solve_camdp_lp_with(inst, &LpOptions { threshold: threshold_override, ..Default::default() })
}

pub fn solve_camdp_lp_with(inst: &CmdpInstance, opts: &LpOptions<'_>) -> Result<OccupancySolution> {
    let (ns, na) = (inst.n_states(), inst.n_actions());
    let sa = ns * na;
    let reward = match opts.reward {
        Some(r) => inst.signal(Signal::Custom(r))?,
        None => inst.reward(),
    };
    let b = opts.threshold.unwrap_or(inst.threshold());
    if !b.is_finite() {
        return arg("threshold must be finite");
    }
    for cut in opts.cuts {
        if cut.coeffs.len() != sa || !cut.rhs.is_finite() {
            return arg("cut has the wrong shape");
        }
    }
    let multichain = opts.form == LpForm::Multichain;
    let flow_vars = if multichain { sa } else { 0 };
    let con_vars = usize::from(!opts.unconstrained);
    let n = sa + flow_vars + con_vars + opts.cuts.len();
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();

    let balance = |j: usize, offset: usize, row: &mut [f64]| {
        for a in 0..na {
            row[offset + j * na + a] += 1.0;
        }
        for s in 0..ns {
            for a in 0..na {
                row[offset + s * na + a] -= inst.row(s, a)[j];
            }
        }
    };
    for j in 0..ns {
        let mut row = vec![0.0; n];
        balance(j, 0, &mut row);
        rows.push((row, 0.0));
    }
    if multichain {
        for j in 0..ns {
            let mut row = vec![0.0; n];
            row[j * na..(j + 1) * na].fill(1.0);
            balance(j, sa, &mut row);
            rows.push((row, inst.start()[j]));
        }
    } else {
        let mut row = vec![0.0; n];
        row[..sa].fill(1.0);
        rows.push((row, 1.0));
    }
    let con_row = (!opts.unconstrained).then(|| {
        let mut row = vec![0.0; n];
        row[..sa].copy_from_slice(inst.constraint());
        row[sa + flow_vars] = -1.0;
        rows.push((row, b));
        rows.len() - 1
    });
    for (k, cut) in opts.cuts.iter().enumerate() {
        let mut row = vec![0.0; n];
        row[..sa].copy_from_slice(&cut.coeffs);
        row[sa + flow_vars + con_vars + k] = match cut.sense {
            Sense::Le => 1.0,
            Sense::Ge => -1.0,
        };
        rows.push((row, cut.rhs));
    }

    let m = rows.len();
    let mut c = vec![0.0; n];
    c[..sa].copy_from_slice(reward);
    let lp = LinearProgram {
        a: DMatrix::from_fn(m, n, |i, j| rows[i].0[j]),
        b: rows.iter().map(|r| r.1).collect(),
        c,
    };
    let sol = simplex::solve(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Ok(OccupancySolution {
                n_actions: na,
                mu: vec![0.0; sa],
                flow: Vec::new(),
                objective: f64::NAN,
                constraint_value: f64::NAN,
                dual_lambda: f64::NAN,
                status: LpOutcome::Infeasible,
                duality_gap: f64::NAN,
                dual_infeasibility: f64::NAN,
            })
        }
        LpStatus::Unbounded => unreachable!("occupancy LP is bounded by normalization"),
    }
    let mu = sol.x[..sa].to_vec();
    let constraint_value = mu.iter().zip(inst.constraint()).map(|(x, c)| x * c).sum();
    Ok(OccupancySolution {
        n_actions: na,
        flow: sol.x[sa..sa + flow_vars].to_vec(),
        mu,
        objective: sol.objective,
        constraint_value,
        dual_lambda: con_row.map_or(0.0, |r| -sol.duals[r]),
        status: LpOutcome::Optimal,
        duality_gap: (sol.objective - sol.dual_objective).abs(),
        dual_infeasibility: sol.dual_infeasibility,
    })
}

/// `max_pi rho_c(start) - b`.
pub fn slater_constant(inst: &CmdpInstance) -> Result<f64> {
    let opts = LpOptions { reward: Some(inst.constraint()), unconstrained: true, ..Default::default() };
    Ok(solve_camdp_lp_with(inst, &opts)?.objective - inst.threshold())
}

/// Best deterministic policy for `<start, rho>`; ties go to the lexicographically smallest.
pub fn enumerate_policies(inst: &CmdpInstance, which: Signal<'_>, cap: u64) -> Result<(DeterministicPolicy, f64)> {
    let mut best: Option<(DeterministicPolicy, f64)> = None;
    for pi in deterministic_policies(inst.n_states(), inst.n_actions(), cap)? {
        let g = start_gains(&pi.to_stochastic(inst.n_actions()), inst, &[which])?[0];
        if best.as_ref().is_none_or(|(_, v)| g > v + 1e-12) {
            best = Some((pi, g));
        }
    }
    Ok(best.expect("at least one deterministic policy"))
}
