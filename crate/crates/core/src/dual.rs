//! Primal-dual loop over an epsilon-net of dual values, with the relaxed and
//! strict parameter schedules.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::chain::start_gains;
use crate::error::{arg, Error, Result};
use crate::generative::{EmpiricalModel, PerturbedReward};
use crate::model::{DeterministicPolicy, MixturePolicy, Signal, DEFAULT_POLICY_CAP};
use crate::planner::{combined_reward, optimality_range, solve_discounted, solve_discounted_exact, AverageEnumerator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Relaxed,
    Strict,
    Manual,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Relaxed => "relaxed",
            Mode::Strict => "strict",
            Mode::Manual => "manual",
        })
    }
}

/// How the primal update is computed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerKind {
    /// Value iteration with the span stopping rule; results memoised per dual value.
    ValueIteration,
    /// Value iteration polished by policy iteration (exactly discount-optimal),
    /// memoised over dual intervals.
    #[default]
    Discounted,
    /// Enumeration of deterministic policies by empirical average reward at the start.
    ExactAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub name: String,
    pub value: f64,
    pub rule: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalDualConfig {
    pub mode: Mode,
    pub u: f64,
    pub eta: f64,
    pub iterations: u64,
    pub eps_net: f64,
    pub omega: f64,
    pub b_prime: f64,
    pub gamma: f64,
    pub eps_opt: f64,
    pub seed: u64,
    /// Surrogate for the optimal dual value in the T and net formulas.
    pub lambda_bar: f64,
    pub planner: PlannerKind,
    pub planner_tol: f64,
    /// T from the schedule before any ceiling.
    pub scheduled_iterations: f64,
    pub truncated: bool,
    pub record_trace: bool,
    pub provenance: Vec<Provenance>,
}

impl PrimalDualConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.u > 0.0
            && self.eps_net > 0.0
            && self.eps_net <= self.u
            && self.eta > 0.0
            && self.iterations >= 1
            && self.gamma > 0.0
            && self.gamma < 1.0
            && (-1.0..=2.0).contains(&self.b_prime)
            && self.omega >= 0.0
            && self.planner_tol > 0.0;
        if ok && [self.u, self.eta, self.eps_net, self.b_prime].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            arg(format!("invalid primal-dual configuration: {self:?}"))
        }
    }

    fn note(&mut self, name: &str, value: f64, rule: impl Into<String>) {
        self.provenance.push(Provenance { name: name.into(), value, rule: rule.into() });
    }

    /// Cap T and stop early, keeping the scheduled step size.
    pub fn with_iteration_cap(self, cap: u64) -> Self {
        self.capped(cap, Truncation::KeepStep)
    }

    /// Cap T, re-deriving the step size `U / sqrt(T)` for the iterations actually run.
    pub fn with_iteration_cap_rescaled(self, cap: u64) -> Self {
        self.capped(cap, Truncation::RescaleStep)
    }

    pub fn capped(mut self, cap: u64, how: Truncation) -> Self {
        if (self.iterations as f64) > cap as f64 || self.scheduled_iterations > cap as f64 {
            self.iterations = cap;
            self.truncated = true;
            self.note("T", cap as f64, "iteration ceiling");
            if how == Truncation::RescaleStep {
                self.eta = self.u / (cap as f64).sqrt();
                self.note("eta", self.eta, "U / sqrt(T) with the capped T");
            }
        }
        self
    }
}

/// What happens to the step size when T hits the ceiling.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Truncation {
    /// Run the scheduled algorithm and stop at the ceiling.
    #[default]
    KeepStep,
    /// Re-tune the step size to the shorter horizon.
    RescaleStep,
}

fn horizon(u: f64, eps_opt: f64, one_minus_gamma: f64, lambda_bar: f64) -> f64 {
    (4.0 * u * u / (eps_opt * eps_opt * one_minus_gamma * one_minus_gamma) * (1.0 + 1.0 / (u - lambda_bar).powi(2)))
        .ceil()
}

fn iterations_of(t: f64) -> u64 {
    if t >= u64::MAX as f64 {
        u64::MAX
    } else {
        t.max(1.0) as u64
    }
}

/// Effective `B + H` for the discount; floored so that the discount stays at least 1/2.
fn effective_bh(transient: f64, span: f64, budget: f64) -> Result<f64> {
    if !(transient >= 0.0 && span >= 0.0) || !(transient + span).is_finite() {
        return arg("B and H must be finite and non-negative");
    }
    Ok((transient + span).max(budget / 2.0))
}

/// Relaxed-feasibility schedule for threshold `b`.
pub fn relaxed_schedule(b: f64, epsilon: f64, transient: f64, span: f64) -> Result<PrimalDualConfig> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return arg(format!("epsilon {epsilon} outside (0, 1]"));
    }
    let eps_opt = epsilon / 4.0;
    let bh = effective_bh(transient, span, eps_opt)?;
    let omg = eps_opt / (4.0 * bh);
    let gamma = 1.0 - omg;
    let u = 32.0 / (5.0 * epsilon * omg);
    let lambda_bar = u / 2.0;
    let t = horizon(u, eps_opt, omg, lambda_bar);
    let eta = u / t.sqrt();
    let mut cfg = PrimalDualConfig {
        mode: Mode::Relaxed,
        u,
        eta,
        iterations: iterations_of(t),
        eps_net: epsilon * epsilon * omg * omg / 96.0,
        omega: epsilon * omg / 8.0,
        b_prime: b - 3.0 * epsilon / 8.0,
        gamma,
        eps_opt,
        seed: 0,
        lambda_bar,
        planner: PlannerKind::default(),
        planner_tol: eps_opt / 8.0,
        scheduled_iterations: t,
        truncated: false,
        record_trace: true,
        provenance: Vec::new(),
    };
    cfg.note("eps_opt", eps_opt, "eps / 4");
    cfg.note("gamma", gamma, format!("1 - eps_opt / (4 (B + H)), B + H = {bh}"));
    cfg.note("b_prime", cfg.b_prime, "b - 3 eps / 8");
    cfg.note("omega", cfg.omega, "eps (1 - gamma) / 8");
    cfg.note("U", u, "32 / (5 eps (1 - gamma))");
    cfg.note("eps_net", cfg.eps_net, "eps^2 (1 - gamma)^2 / 96");
    cfg.note("lambda_bar", lambda_bar, "U / 2");
    cfg.note("T", t, "ceil(4 U^2 / (eps_opt^2 (1 - gamma)^2) (1 + 1 / (U - lambda_bar)^2))");
    cfg.note("eta", eta, "U / sqrt(T)");
    cfg.note("planner_tol", cfg.planner_tol, "eps_opt / 8");
    Ok(cfg)
}

/// Which constants the strict schedule uses for the threshold shift and the dual bound.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrictConstants {
    /// Shift `eps (1 - gamma) zeta / 40`, `U = 8 / (zeta (1 - gamma))`.
    #[default]
    Proof,
    /// Shift `eps (1 - gamma) zeta / 20`, `U = 4 (1 + omega) / (zeta (1 - gamma))`.
    Statement,
}

pub fn strict_schedule(b: f64, epsilon: f64, transient: f64, span: f64, zeta: f64) -> Result<PrimalDualConfig> {
    strict_schedule_with(b, epsilon, transient, span, zeta, StrictConstants::Proof)
}

/// Strict-feasibility schedule. The discount uses the reward-error budget `eps / 5`
/// (the shift itself depends on the discount, so it cannot set it).
pub fn strict_schedule_with(
    b: f64,
    epsilon: f64,
    transient: f64,
    span: f64,
    zeta: f64,
    constants: StrictConstants,
) -> Result<PrimalDualConfig> {
    if !(zeta > 0.0) {
        return arg(format!("strict mode needs a positive Slater constant, got {zeta}"));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return arg(format!("epsilon {epsilon} outside (0, 1]"));
    }
    let budget = epsilon / 5.0;
    let bh = effective_bh(transient, span, budget)?;
    let omg = budget / (4.0 * bh);
    let gamma = 1.0 - omg;
    let omega = epsilon * omg / 10.0;
    let (delta, u) = match constants {
        StrictConstants::Proof => (epsilon * omg * zeta / 40.0, 8.0 / (zeta * omg)),
        StrictConstants::Statement => (epsilon * omg * zeta / 20.0, 4.0 * (1.0 + omega) / (zeta * omg)),
    };
    let eps_opt = delta / 5.0;
    let lambda_bar = u / 2.0;
    let t = horizon(u, eps_opt, omg, lambda_bar);
    let eta = u / t.sqrt();
    let mut cfg = PrimalDualConfig {
        mode: Mode::Strict,
        u,
        eta,
        iterations: iterations_of(t),
        eps_net: epsilon * epsilon * zeta * zeta * omg.powi(4) / 240_000.0,
        omega,
        b_prime: b + delta,
        gamma,
        eps_opt,
        seed: 0,
        lambda_bar,
        planner: PlannerKind::default(),
        planner_tol: eps_opt / 8.0,
        scheduled_iterations: t,
        truncated: false,
        record_trace: true,
        provenance: Vec::new(),
    };
    cfg.note("gamma", gamma, format!("1 - (eps / 5) / (4 (B + H)), B + H = {bh}"));
    cfg.note("delta", delta, match constants {
        StrictConstants::Proof => "eps (1 - gamma) zeta / 40",
        StrictConstants::Statement => "eps (1 - gamma) zeta / 20",
    });
    cfg.note("b_prime", cfg.b_prime, "b + delta");
    cfg.note("eps_opt", eps_opt, "delta / 5");
    cfg.note("omega", omega, "eps (1 - gamma) / 10");
    cfg.note("U", u, match constants {
        StrictConstants::Proof => "8 / (zeta (1 - gamma))",
        StrictConstants::Statement => "4 (1 + omega) / (zeta (1 - gamma))",
    });
    cfg.note("eps_net", cfg.eps_net, "eps^2 zeta^2 (1 - gamma)^4 / 240000");
    cfg.note("lambda_bar", lambda_bar, "U / 2");
    cfg.note("T", t, "ceil(4 U^2 / (eps_opt^2 (1 - gamma)^2) (1 + 1 / (U - lambda_bar)^2))");
    cfg.note("eta", eta, "U / sqrt(T)");
    cfg.note("planner_tol", cfg.planner_tol, "eps_opt / 8");
    Ok(cfg)
}

/// Direct primal-dual guarantee setting with a known dual optimum `lambda_star < u`:
/// `T = U^2 / eps_opt^2 (1 + 1 / (U - lambda*)^2)`, `eps_net = eps_opt^2 (U - lambda*) / (6 U)`.
pub fn guarantee_config(b_prime: f64, eps_opt: f64, u: f64, lambda_star: f64, gamma: f64) -> Result<PrimalDualConfig> {
    if !(eps_opt > 0.0 && u > lambda_star && lambda_star >= 0.0) {
        return arg("need eps_opt > 0 and 0 <= lambda* < U");
    }
    let gap = u - lambda_star;
    let t = (u * u / (eps_opt * eps_opt) * (1.0 + 1.0 / (gap * gap))).ceil();
    let mut cfg = PrimalDualConfig {
        mode: Mode::Manual,
        u,
        eta: u / t.sqrt(),
        iterations: iterations_of(t),
        eps_net: eps_opt * eps_opt * gap / (6.0 * u),
        omega: 0.0,
        b_prime,
        gamma,
        eps_opt,
        seed: 0,
        lambda_bar: lambda_star,
        planner: PlannerKind::ExactAverage,
        planner_tol: eps_opt / 8.0,
        scheduled_iterations: t,
        truncated: false,
        record_trace: true,
        provenance: Vec::new(),
    };
    cfg.note("T", t, "ceil(U^2 / eps_opt^2 (1 + 1 / (U - lambda*)^2))");
    cfg.note("eps_net", cfg.eps_net, "eps_opt^2 (U - lambda*) / (6 U)");
    cfg.note("eta", cfg.eta, "U / sqrt(T)");
    cfg.validate()?;
    Ok(cfg)
}

pub fn project_interval(x: f64, u: f64) -> f64 {
    let y = x.max(0.0).min(u);
    if y == 0.0 {
        0.0
    } else {
        y
    }
}

fn net_round(x: f64, eps: f64, u: f64) -> f64 {
    let k = (x / eps).floor();
    let lo = (k * eps).min(u);
    let hi = ((k + 1.0) * eps).min(u);
    let out = if x - lo <= hi - x { lo } else { hi };
    if out <= 0.0 {
        0.0
    } else {
        out
    }
}

/// Nearest point of `{0, eps, 2 eps, ..} U {U}`; ties round down.
pub fn round_to_net(x: f64, eps: f64, u: f64) -> Result<f64> {
    if !(eps > 0.0 && u > 0.0) {
        return arg("net resolution and upper bound must be positive");
    }
    if !(0.0..=u).contains(&x) {
        return arg(format!("{x} outside [0, {u}]; project first"));
    }
    Ok(net_round(x, eps, u))
}

pub fn dual_step(lambda: f64, eta: f64, rho_c_hat: f64, b_prime: f64, u: f64, eps: f64) -> f64 {
    net_round(project_interval(lambda - eta * (rho_c_hat - b_prime), u), eps, u)
}

/// Whether `x` is a net point, up to floating resolution.
pub fn on_net(x: f64, eps: f64, u: f64) -> bool {
    if x == u || x == 0.0 {
        return true;
    }
    let k = x / eps;
    x > 0.0 && x < u && (k - k.round()).abs() <= 1e-9 * k.max(1.0)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualRecord {
    pub iter: u64,
    pub lambda: f64,
    pub rho_c_hat: f64,
    pub rho_combined_hat: f64,
    pub policy_id: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DualTrace {
    /// Empty when the run was configured without trace recording.
    pub records: Vec<DualRecord>,
    pub iterations: u64,
    pub final_lambda: f64,
    /// Running sums of `lambda_t rho_t`, `lambda_t` and `rho_t` (rho = empirical constraint gain).
    sum_lambda_rho: Compensated,
    sum_lambda: Compensated,
    sum_rho: Compensated,
}

impl DualTrace {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        if self.records.is_empty() {
            out.write_record(["iter", "lambda", "rho_c_hat", "rho_combined_hat", "policy_id"])?;
        }
        for r in &self.records {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `R(lambda, T) = sum_t (lambda_t - lambda)(rho_c_t - b')`.
pub fn dual_regret(trace: &DualTrace, lambda: f64, b_prime: f64) -> f64 {
    if !trace.records.is_empty() || trace.iterations == 0 {
        let mut acc = Compensated::default();
        for r in &trace.records {
            acc.add((r.lambda - lambda) * (r.rho_c_hat - b_prime));
        }
        return acc.value();
    }
    let t = trace.iterations as f64;
    trace.sum_lambda_rho.value() - b_prime * trace.sum_lambda.value() - lambda * trace.sum_rho.value()
        + lambda * t * b_prime
}

/// `T^{3/2} (eps^2 + 2 eps U) / (2U) + U sqrt(T)`, valid for `eta = U / sqrt(T)`.
pub fn dual_regret_bound(iterations: u64, eps_net: f64, u: f64) -> f64 {
    let t = iterations as f64;
    t.powf(1.5) * (eps_net * eps_net + 2.0 * eps_net * u) / (2.0 * u) + u * t.sqrt()
}

/// Same bound for an arbitrary step size and gradient magnitude `g_max`:
/// `T (eps^2 + 2 eps U) / (2 eta) + U^2 / (2 eta) + eta T g_max^2 / 2`.
pub fn dual_regret_bound_eta(iterations: u64, eta: f64, eps_net: f64, u: f64, g_max: f64) -> f64 {
    let t = iterations as f64;
    t * (eps_net * eps_net + 2.0 * eps_net * u) / (2.0 * eta) + u * u / (2.0 * eta) + eta * t * g_max * g_max / 2.0
}

/// Dual intervals on which a policy is known to be the planner's answer. The set of
/// dual values selecting a given policy is an interval for exact planners, so the
/// cache merges neighbouring hits.
#[derive(Debug, Default)]
struct IntervalCache {
    map: BTreeMap<u64, (f64, f64, u32)>,
    last: Option<(f64, f64, u32)>,
}

impl IntervalCache {
    fn get(&mut self, x: f64) -> Option<u32> {
        if let Some((lo, hi, id)) = self.last {
            if lo <= x && x <= hi {
                return Some(id);
            }
        }
        let (_, &(lo, hi, id)) = self.map.range(..=x.to_bits()).next_back()?;
        if x <= hi {
            self.last = Some((lo, hi, id));
            Some(id)
        } else {
            None
        }
    }

    /// Record that `id` is the planner's answer at `x` and, when known, on all of `range`.
    /// A policy's optimality set is an interval, so equal neighbours are merged.
    fn insert(&mut self, x: f64, id: u32, range: Option<(f64, f64)>) {
        let (mut lo, mut hi) = match range {
            Some((l, h)) if l <= x && x <= h => (l.max(0.0), h),
            _ => (x, x),
        };
        while let Some((&k, &(l, h, i))) = self.map.range(..x.to_bits()).next_back() {
            if i == id {
                self.map.remove(&k);
                lo = lo.min(l);
                hi = hi.max(h);
                continue;
            }
            if h >= lo {
                lo = next_up(h);
            }
            break;
        }
        while let Some((&k, &(l, h, i))) = self.map.range(x.to_bits()..).next() {
            if i == id {
                self.map.remove(&k);
                hi = hi.max(h);
                continue;
            }
            if l <= hi {
                hi = next_down(l);
            }
            break;
        }
        self.map.insert(lo.to_bits(), (lo, hi, id));
        self.last = None;
    }
}

/// Neighbouring floats for non-negative finite `x`.
fn next_up(x: f64) -> f64 {
    f64::from_bits(x.to_bits() + 1)
}

fn next_down(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        f64::from_bits(x.to_bits() - 1)
    }
}

#[derive(Debug, Clone)]
pub struct PrimalDualRun {
    pub mixture: MixturePolicy,
    pub trace: DualTrace,
    /// Distinct iterate policies by id.
    pub policies: Vec<DeterministicPolicy>,
    pub visits: Vec<u64>,
    /// Empirical start gains of each policy under the perturbed reward and the constraint.
    pub reward_gain_hat: Vec<f64>,
    pub constraint_gain_hat: Vec<f64>,
    pub planner_calls: u64,
}

impl PrimalDualRun {
    /// Mixture gains on the empirical model, `(reward, constraint)`.
    pub fn empirical_gains(&self) -> (f64, f64) {
        let t = self.trace.iterations as f64;
        let mut r = Compensated::default();
        let mut c = Compensated::default();
        for (i, &n) in self.visits.iter().enumerate() {
            r.add(n as f64 / t * self.reward_gain_hat[i]);
            c.add(n as f64 / t * self.constraint_gain_hat[i]);
        }
        (r.value(), c.value())
    }
}

struct Registry<'a> {
    empirical: &'a EmpiricalModel,
    reward: &'a [f64],
    constraint: &'a [f64],
    ids: HashMap<DeterministicPolicy, u32>,
    policies: Vec<DeterministicPolicy>,
    reward_gain: Vec<f64>,
    constraint_gain: Vec<f64>,
}

impl Registry<'_> {
    fn id_of(&mut self, pi: DeterministicPolicy) -> Result<u32> {
        if let Some(&id) = self.ids.get(&pi) {
            return Ok(id);
        }
        let model = self.empirical.model();
        let g = start_gains(
            &pi.to_stochastic(model.n_actions()),
            model,
            &[Signal::Custom(self.reward), Signal::Custom(self.constraint)],
        )?;
        let id = self.policies.len() as u32;
        self.ids.insert(pi.clone(), id);
        self.policies.push(pi);
        self.reward_gain.push(g[0]);
        self.constraint_gain.push(g[1]);
        Ok(id)
    }
}

/// Run the primal-dual loop on the empirical model.
pub fn run_primal_dual(
    empirical: &EmpiricalModel,
    r_p: &PerturbedReward,
    c: &[f64],
    config: &PrimalDualConfig,
) -> Result<PrimalDualRun> {
    config.validate()?;
    let model = empirical.model();
    if r_p.values.len() != model.n_pairs() || c.len() != model.n_pairs() {
        return arg("reward or constraint has the wrong length");
    }
    let mut reg = Registry {
        empirical,
        reward: &r_p.values,
        constraint: c,
        ids: HashMap::new(),
        policies: Vec::new(),
        reward_gain: Vec::new(),
        constraint_gain: Vec::new(),
    };
    let enumerator = match config.planner {
        PlannerKind::ExactAverage => Some(AverageEnumerator::new(model, &r_p.values, c, DEFAULT_POLICY_CAP)?),
        _ => None,
    };
    let mut intervals = IntervalCache::default();
    let mut memo: HashMap<u64, u32> = HashMap::new();
    let mut planner_calls = 0u64;
    let mut plan = |lambda: f64, reg: &mut Registry<'_>| -> Result<(u32, Option<(f64, f64)>)> {
        planner_calls += 1;
        let (pi, range) = match config.planner {
            PlannerKind::ExactAverage => {
                let en = enumerator.as_ref().expect("built above");
                let i = en.best(lambda);
                (en.policies[i].clone(), en.optimality_range(i))
            }
            PlannerKind::Discounted => {
                let pi = solve_discounted_exact(
                    model,
                    &combined_reward(&r_p.values, c, lambda),
                    config.gamma,
                    config.planner_tol,
                )?;
                let range = optimality_range(model, &r_p.values, c, config.gamma, &pi)?;
                (pi, range)
            }
            PlannerKind::ValueIteration => {
                let pi =
                    solve_discounted(model, &combined_reward(&r_p.values, c, lambda), config.gamma, config.planner_tol)?;
                (pi, None)
            }
        };
        Ok((reg.id_of(pi)?, range))
    };

    let mut trace = DualTrace { iterations: config.iterations, ..Default::default() };
    if config.record_trace {
        trace.records.reserve(config.iterations.min(1 << 24) as usize);
    }
    let mut visits: Vec<u64> = Vec::new();
    let mut lambda = 0.0f64;
    for t in 0..config.iterations {
        let cached = match config.planner {
            PlannerKind::ValueIteration => memo.get(&lambda.to_bits()).copied(),
            _ => intervals.get(lambda),
        };
        let id = match cached {
            Some(id) => id,
            None => {
                let (id, range) =
                    plan(lambda, &mut reg).map_err(|e| Error::Planner { iteration: t, source: Box::new(e) })?;
                match config.planner {
                    PlannerKind::ValueIteration => {
                        memo.insert(lambda.to_bits(), id);
                    }
                    _ => intervals.insert(lambda, id, range),
                }
                id
            }
        };
        let i = id as usize;
        if visits.len() <= i {
            visits.resize(i + 1, 0);
        }
        visits[i] += 1;
        let rho_c = reg.constraint_gain[i];
        if config.record_trace {
            trace.records.push(DualRecord {
                iter: t,
                lambda,
                policy_id: id,
                rho_c_hat: rho_c,
                rho_combined_hat: reg.reward_gain[i] + lambda * rho_c,
            });
        }
        trace.sum_lambda_rho.add(lambda * rho_c);
        trace.sum_lambda.add(lambda);
        trace.sum_rho.add(rho_c);
        lambda = dual_step(lambda, config.eta, rho_c, config.b_prime, config.u, config.eps_net);
    }
    trace.final_lambda = lambda;
    visits.resize(reg.policies.len(), 0);

    let total = config.iterations as f64;
    let na = model.n_actions();
    let members = visits
        .iter()
        .zip(&reg.policies)
        .filter(|(&n, _)| n > 0)
        .map(|(&n, pi)| (n as f64 / total, pi.to_stochastic(na)))
        .collect();
    Ok(PrimalDualRun {
        mixture: MixturePolicy::new(members)?,
        trace,
        policies: reg.policies,
        visits,
        reward_gain_hat: reg.reward_gain,
        constraint_gain_hat: reg.constraint_gain,
        planner_calls,
    })
}
