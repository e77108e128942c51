//! One sweep cell: sample, schedule, run the primal-dual loop, then score the
//! mixture on the true model.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use camdp_core::chain::start_gains;
use camdp_core::dual::{guarantee_config, relaxed_schedule, strict_schedule_with, Provenance, StrictConstants, Truncation};
use camdp_core::oracle::{slater_constant, LpOutcome};
use camdp_core::structure::span_and_transient;
use camdp_core::{
    build_empirical_model, perturb_rewards, run_primal_dual, solve_camdp_lp, CmdpInstance, PlannerKind,
    PrimalDualConfig, PrimalDualRun, Signal,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DEFAULT_ITERATION_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMode {
    Relaxed,
    Strict,
    /// Direct primal-dual at `b' = b` without perturbation, dual box `4 / zeta`, run for
    /// the whole iteration budget; isolates the statistical error for scaling studies.
    Unshifted,
}

impl fmt::Display for SolveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveMode::Relaxed => "relaxed",
            SolveMode::Strict => "strict",
            SolveMode::Unshifted => "unshifted",
        })
    }
}

impl FromStr for SolveMode {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s.trim() {
            "relaxed" => Ok(SolveMode::Relaxed),
            "strict" => Ok(SolveMode::Strict),
            "unshifted" => Ok(SolveMode::Unshifted),
            other => Err(CliError::Input(format!("unknown mode {other:?} (relaxed | strict | unshifted)"))),
        }
    }
}

pub fn parse_planner(s: &str) -> CliResult<PlannerKind> {
    match s.trim() {
        "value-iteration" => Ok(PlannerKind::ValueIteration),
        "discounted" => Ok(PlannerKind::Discounted),
        "exact-average" => Ok(PlannerKind::ExactAverage),
        other => Err(CliError::Input(format!(
            "unknown planner {other:?} (value-iteration | discounted | exact-average)"
        ))),
    }
}

pub fn parse_truncation(s: &str) -> CliResult<Truncation> {
    match s.trim() {
        "keep-step" => Ok(Truncation::KeepStep),
        "rescale-step" => Ok(Truncation::RescaleStep),
        other => Err(CliError::Input(format!("unknown truncation {other:?} (keep-step | rescale-step)"))),
    }
}

pub fn parse_strict_constants(s: &str) -> CliResult<StrictConstants> {
    match s.trim() {
        "proof" => Ok(StrictConstants::Proof),
        "statement" => Ok(StrictConstants::Statement),
        other => Err(CliError::Input(format!("unknown strict constants {other:?} (proof | statement)"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellOptions {
    pub iteration_cap: u64,
    pub planner: PlannerKind,
    pub strict_constants: StrictConstants,
    pub truncation: Truncation,
    pub timing: bool,
    pub record_trace: bool,
}

impl Default for CellOptions {
    fn default() -> Self {
        CellOptions {
            iteration_cap: DEFAULT_ITERATION_CAP,
            planner: PlannerKind::default(),
            strict_constants: StrictConstants::default(),
            truncation: Truncation::default(),
            timing: false,
            record_trace: false,
        }
    }
}

/// Known values of `H` and `B`, for instances too large to enumerate.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StructureOverride {
    pub span: Option<f64>,
    pub transient: Option<f64>,
}

/// A true instance with the quantities shared by all of its cells.
#[derive(Debug, Clone)]
pub struct Bench {
    instance: CmdpInstance,
    span: f64,
    transient: f64,
    zeta: f64,
    rho_star: Option<f64>,
}

impl Bench {
    pub fn new(instance: CmdpInstance) -> CliResult<Self> {
        Self::with_structure(instance, StructureOverride::default())
    }

    pub fn with_structure(instance: CmdpInstance, known: StructureOverride) -> CliResult<Self> {
        let (span, transient) = match (known.span, known.transient) {
            (Some(h), Some(b)) => (h, b),
            (h, b) => {
                let (h0, b0) = span_and_transient(&instance, camdp_core::model::DEFAULT_POLICY_CAP)?;
                (h.unwrap_or(h0), b.unwrap_or(b0))
            }
        };
        let zeta = slater_constant(&instance)?;
        let lp = solve_camdp_lp(&instance, None)?;
        let rho_star = (lp.status == LpOutcome::Optimal).then_some(lp.objective);
        Ok(Bench { instance, span, transient, zeta, rho_star })
    }

    pub fn instance(&self) -> &CmdpInstance {
        &self.instance
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    pub fn transient(&self) -> f64 {
        self.transient
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    /// Constrained optimum of the true model at its own threshold.
    pub fn rho_star(&self) -> Option<f64> {
        self.rho_star
    }

    pub fn config(&self, mode: SolveMode, epsilon: f64, seed: u64, opts: &CellOptions) -> CliResult<PrimalDualConfig> {
        let b = self.instance.threshold();
        let mut cfg = match mode {
            SolveMode::Relaxed => relaxed_schedule(b, epsilon, self.transient, self.span)?,
            SolveMode::Unshifted => self.unshifted(epsilon, opts.iteration_cap)?,
            SolveMode::Strict => {
                if !(self.zeta > 0.0) {
                    return Err(CliError::Infeasible(format!("Slater constant {} is not positive", self.zeta)));
                }
                strict_schedule_with(b, epsilon, self.transient, self.span, self.zeta, opts.strict_constants)?
            }
        };
        cfg.seed = seed;
        cfg.planner = opts.planner;
        cfg.planner_tol = cfg.planner_tol.max(1e-12);
        cfg.record_trace = opts.record_trace;
        Ok(cfg.capped(opts.iteration_cap, opts.truncation))
    }

    fn unshifted(&self, epsilon: f64, budget: u64) -> CliResult<PrimalDualConfig> {
        if !(self.zeta > 0.0) {
            return Err(CliError::Infeasible(format!("Slater constant {} is not positive", self.zeta)));
        }
        let b = self.instance.threshold();
        // the discount only matters for the discounted planners
        let gamma = relaxed_schedule(b, epsilon, self.transient, self.span)?.gamma;
        let (u, lambda_bar) = (4.0 / self.zeta, 2.0 / self.zeta);
        let t = budget as f64;
        // accuracy that the iteration budget buys
        let eps_opt = u * (1.0 + 1.0 / (u - lambda_bar).powi(2)).sqrt() / t.sqrt();
        let mut cfg = guarantee_config(b, eps_opt, u, lambda_bar, gamma)?;
        cfg.iterations = budget;
        cfg.scheduled_iterations = t;
        cfg.eta = u / t.sqrt();
        // a coarser net would round away the sampling noise in the dual steps
        cfg.eps_net = cfg.eta * 1e-6;
        cfg.provenance.push(Provenance { name: "eps_net".into(), value: cfg.eps_net, rule: "eta / 10^6".into() });
        cfg.provenance.push(Provenance { name: "U".into(), value: u, rule: "4 / zeta, unshifted".into() });
        cfg.provenance.push(Provenance { name: "T".into(), value: t, rule: "iteration budget, unshifted".into() });
        Ok(cfg)
    }

    pub fn solve(&self, mode: SolveMode, epsilon: f64, n: u64, seed: u64, opts: &CellOptions) -> CliResult<Solved> {
        let started = Instant::now();
        let rho_star = self.rho_star.ok_or_else(|| CliError::Infeasible("the constraint LP is infeasible".into()))?;
        let config = self.config(mode, epsilon, seed, opts)?;
        let empirical = build_empirical_model(&self.instance, n, seed)?;
        let r_p = perturb_rewards(self.instance.reward(), config.omega, seed)?;
        let run = run_primal_dual(&empirical, &r_p, self.instance.constraint(), &config)?;
        let (rho_hat, constraint_value) = self.true_gains(&run)?;
        let (rho_hat_empirical, constraint_hat_empirical) = run.empirical_gains();
        let b = self.instance.threshold();
        let gap = rho_star - rho_hat;
        let violation = (b - constraint_value).max(0.0);
        let objective_met = match mode {
            SolveMode::Strict => gap <= epsilon && violation == 0.0,
            SolveMode::Relaxed | SolveMode::Unshifted => gap <= epsilon && violation <= epsilon,
        };
        let report = SolveReport {
            mode,
            epsilon,
            n,
            seed,
            total_samples: empirical.total_samples(),
            rho_hat,
            rho_star,
            gap,
            constraint_value,
            violation,
            threshold: b,
            b_prime: config.b_prime,
            iterations: config.iterations,
            scheduled_iterations: config.scheduled_iterations,
            truncated: config.truncated,
            objective_met,
            rho_hat_empirical,
            constraint_hat_empirical,
            final_lambda: run.trace.final_lambda,
            planner_calls: run.planner_calls,
            distinct_policies: run.visits.iter().filter(|&&v| v > 0).count(),
            gamma: config.gamma,
            u: config.u,
            eta: config.eta,
            eps_net: config.eps_net,
            omega: config.omega,
            wall_ms: opts.timing.then(|| started.elapsed().as_secs_f64() * 1e3),
        };
        Ok(Solved { report, config, run })
    }

    /// Mixture gains on the true model: visit-weighted average of member gains.
    fn true_gains(&self, run: &PrimalDualRun) -> CliResult<(f64, f64)> {
        let total: u64 = run.visits.iter().sum();
        let na = self.instance.n_actions();
        let (mut r, mut c) = (0.0, 0.0);
        for (pi, &v) in run.policies.iter().zip(&run.visits) {
            if v == 0 {
                continue;
            }
            let g = start_gains(&pi.to_stochastic(na), &self.instance, &[Signal::Reward, Signal::Constraint])?;
            let w = v as f64 / total as f64;
            r += w * g[0];
            c += w * g[1];
        }
        Ok((r, c))
    }
}

#[derive(Debug, Clone)]
pub struct Solved {
    pub report: SolveReport,
    pub config: PrimalDualConfig,
    pub run: PrimalDualRun,
}

/// Scores of one cell; `gap` and `violation` are measured on the true model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub mode: SolveMode,
    pub epsilon: f64,
    #[serde(rename = "N")]
    pub n: u64,
    pub seed: u64,
    pub total_samples: u64,
    pub rho_hat: f64,
    pub rho_star: f64,
    pub gap: f64,
    pub constraint_value: f64,
    pub violation: f64,
    pub threshold: f64,
    pub b_prime: f64,
    #[serde(rename = "T")]
    pub iterations: u64,
    pub scheduled_iterations: f64,
    pub truncated: bool,
    pub objective_met: bool,
    pub rho_hat_empirical: f64,
    pub constraint_hat_empirical: f64,
    pub final_lambda: f64,
    pub planner_calls: u64,
    pub distinct_policies: usize,
    pub gamma: f64,
    pub u: f64,
    pub eta: f64,
    pub eps_net: f64,
    pub omega: f64,
    pub wall_ms: Option<f64>,
}

impl SolveReport {
    pub fn status(&self) -> &'static str {
        match (self.truncated, self.objective_met) {
            (false, true) => "met",
            (false, false) => "unmet",
            (true, true) => "truncated-met",
            (true, false) => "truncated-unmet",
        }
    }
}
