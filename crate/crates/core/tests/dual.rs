use approx::assert_abs_diff_eq;
use camdp_core::chain::{mixture_value, start_gains};
use camdp_core::dual::{
    dual_regret, dual_regret_bound, dual_regret_bound_eta, dual_step, guarantee_config, on_net, project_interval,
    relaxed_schedule, round_to_net, run_primal_dual, strict_schedule, strict_schedule_with, Mode, PlannerKind,
    StrictConstants,
};
use camdp_core::generative::{build_empirical_model, perturb_rewards};
use camdp_core::model::{random_instance, CmdpInstance, RandomSpec, Signal};
use camdp_core::oracle::{solve_camdp_lp_with, LpOptions, LpOutcome};
use camdp_core::planner::{combined_reward, solve_discounted_exact};
use proptest::prelude::*;

#[test]
fn projection_examples() {
    assert_eq!(project_interval(-0.3, 1.0), 0.0);
    assert_eq!(project_interval(0.4, 1.0), 0.4);
    assert_eq!(project_interval(7.0, 1.0), 1.0);
}

#[test]
fn rounding_examples() {
    assert_eq!(round_to_net(0.24, 0.1, 1.0).unwrap(), 0.2);
    assert_eq!(round_to_net(0.25, 0.1, 1.0).unwrap(), 0.2);
    assert_eq!(round_to_net(0.3, 0.1, 1.0).unwrap(), 0.30000000000000004);
    assert_eq!(round_to_net(0.0, 0.1, 1.0).unwrap(), 0.0);
    assert_eq!(round_to_net(1.0, 0.3, 1.0).unwrap(), 1.0);
    // the top cell [0.9, 1.0] is shorter than eps
    assert_eq!(round_to_net(0.96, 0.3, 1.0).unwrap(), 1.0);
    assert!(round_to_net(1.2, 0.1, 1.0).is_err());
    assert!(round_to_net(-0.01, 0.1, 1.0).is_err());
}

#[test]
fn dual_step_examples() {
    assert_eq!(dual_step(0.0, 1.0, 0.2, 0.57, 1.0, 0.1), 0.4);
    let lam = 0.30000000000000004;
    assert_eq!(dual_step(lam, 0.7, 0.5, 0.5, 1.0, 0.1), lam);
    let mut l = 0.0;
    for _ in 0..10 {
        l = dual_step(l, 0.5, 0.9, 0.4, 2.0, 0.1);
    }
    assert_eq!(l, 0.0);
}

proptest! {
    #[test]
    fn rounding_stays_within_eps(x in 0.0f64..=1.0, u in 0.05f64..10.0, frac in 0.001f64..=1.0) {
        let x = x * u;
        let eps = frac * u;
        let y = round_to_net(x, eps, u).unwrap();
        prop_assert!((x - y).abs() <= eps / 2.0 + 1e-12 * u);
        prop_assert!((0.0..=u).contains(&y));
        prop_assert!(on_net(y, eps, u));
    }

    #[test]
    fn steps_stay_on_the_net(lam_k in 0u32..50, eta in 0.01f64..5.0, rho in 0.0f64..1.0, b in -0.5f64..1.5) {
        let (u, eps) = (2.5, 0.05);
        let lam = round_to_net((lam_k as f64 * eps).min(u), eps, u).unwrap();
        let next = dual_step(lam, eta, rho, b, u, eps);
        prop_assert!((0.0..=u).contains(&next) && on_net(next, eps, u));
    }
}

#[test]
fn relaxed_schedule_constants() {
    let cfg = relaxed_schedule(0.5, 0.1, 2.0, 3.0).unwrap();
    for v in [cfg.u, cfg.eta, cfg.eps_net, cfg.omega, cfg.eps_opt, cfg.planner_tol] {
        assert!(v > 0.0);
    }
    assert!(cfg.gamma > 0.0 && cfg.gamma < 1.0);
    assert_eq!(cfg.mode, Mode::Relaxed);
    assert_abs_diff_eq!(cfg.u * 0.1 * (1.0 - cfg.gamma), 32.0 / 5.0, epsilon = 1e-9);
    assert_abs_diff_eq!(cfg.gamma, 1.0 - 0.025 / 20.0, epsilon = 1e-15);
    assert_abs_diff_eq!(cfg.b_prime, 0.5 - 0.0375, epsilon = 1e-15);
    assert_abs_diff_eq!(cfg.eta * (cfg.scheduled_iterations).sqrt(), cfg.u, epsilon = 1e-9 * cfg.u);
    assert!(!cfg.provenance.is_empty());
    assert!(relaxed_schedule(0.5, 0.0, 2.0, 3.0).is_err());
    assert!(relaxed_schedule(0.5, 1.5, 2.0, 3.0).is_err());
}

#[test]
fn relaxed_horizon_scales_as_inverse_fourth_power() {
    // hold gamma fixed by scaling B + H with eps
    let a = relaxed_schedule(0.5, 0.1, 1.0, 1.0).unwrap();
    let b = relaxed_schedule(0.5, 0.2, 2.0, 2.0).unwrap();
    assert_abs_diff_eq!(a.gamma, b.gamma, epsilon = 1e-15);
    let ratio = a.scheduled_iterations / b.scheduled_iterations;
    assert!((ratio - 16.0).abs() < 0.01, "ratio {ratio}");
}

#[test]
fn strict_schedule_constants() {
    for (eps, bb, h, zeta) in [(0.1, 2.0, 3.0, 0.3), (1.0, 0.0, 0.0, 0.05), (0.02, 10.0, 1.0, 0.9)] {
        let cfg = strict_schedule(0.4, eps, bb, h, zeta).unwrap();
        assert!(cfg.b_prime > 0.4);
        assert_abs_diff_eq!(cfg.u * zeta * (1.0 - cfg.gamma), 8.0, epsilon = 1e-9);
        assert_abs_diff_eq!(cfg.b_prime - 0.4, eps * (1.0 - cfg.gamma) * zeta / 40.0, epsilon = 1e-15);
        let alt = strict_schedule_with(0.4, eps, bb, h, zeta, StrictConstants::Statement).unwrap();
        assert_abs_diff_eq!(alt.b_prime - 0.4, eps * (1.0 - alt.gamma) * zeta / 20.0, epsilon = 1e-15);
        assert_abs_diff_eq!(alt.u, 4.0 * (1.0 + alt.omega) / (zeta * (1.0 - alt.gamma)), epsilon = 1e-9 * alt.u);
    }
    assert!(strict_schedule(0.4, 0.1, 1.0, 1.0, 0.0).is_err());
    assert!(strict_schedule(0.4, 0.1, 1.0, 1.0, -0.2).is_err());
}

#[test]
fn strict_horizon_scaling() {
    // at fixed gamma: eps^-2 and zeta^-4
    let base = strict_schedule(0.4, 0.1, 1.0, 1.0, 0.2).unwrap();
    let eps2 = strict_schedule(0.4, 0.2, 2.0, 2.0, 0.2).unwrap();
    let zeta2 = strict_schedule(0.4, 0.1, 1.0, 1.0, 0.4).unwrap();
    assert_abs_diff_eq!(base.gamma, eps2.gamma, epsilon = 1e-15);
    assert!((base.scheduled_iterations / eps2.scheduled_iterations - 4.0).abs() < 0.01);
    assert!((base.scheduled_iterations / zeta2.scheduled_iterations - 16.0).abs() < 0.01);
}

#[test]
fn iteration_cap_keeps_or_rescales_step() {
    let sched = relaxed_schedule(0.5, 0.2, 1.0, 1.0).unwrap();
    let kept = sched.clone().with_iteration_cap(1000);
    assert!(kept.truncated);
    assert_eq!(kept.iterations, 1000);
    assert_eq!(kept.eta, sched.eta);
    let rescaled = sched.clone().with_iteration_cap_rescaled(1000);
    assert!(rescaled.truncated);
    assert_eq!(rescaled.iterations, 1000);
    assert_abs_diff_eq!(rescaled.eta, rescaled.u / 1000f64.sqrt(), epsilon = 1e-12);
    // a ceiling above the schedule changes nothing
    let loose = sched.clone().with_iteration_cap(u64::MAX);
    assert!(!loose.truncated);
    assert_eq!(loose, sched);
}

#[test]
fn regret_of_trivial_traces() {
    let inst = random_instance(&RandomSpec::dense(3, 2), 1).unwrap();
    let emp = build_empirical_model(&inst, 50, 1).unwrap();
    let rp = perturb_rewards(inst.reward(), 0.0, 1).unwrap();
    let ones = vec![1.0; 6];
    let mut cfg = guarantee_config(0.0, 0.1, 2.0, 0.0, 0.9).unwrap();
    cfg.iterations = 40;
    let run = run_primal_dual(&emp, &rp, &ones, &cfg).unwrap();
    assert!(run.trace.records.iter().all(|r| r.lambda == 0.0));
    assert_eq!(run.mixture.members().len(), 1);
    assert_eq!(dual_regret(&run.trace, 0.0, cfg.b_prime), 0.0);
    assert_eq!(dual_regret(&Default::default(), 1.0, 0.3), 0.0);
}

/// A 4-state instance with a binding constraint.
fn binding(seed: u64) -> (CmdpInstance, f64) {
    let inst = random_instance(&RandomSpec { n_states: 4, n_actions: 3, density: 0.8, threshold: 0.0 }, seed).unwrap();
    let free = solve_camdp_lp_with(&inst, &LpOptions { unconstrained: true, ..Default::default() }).unwrap();
    let cmax = camdp_core::oracle::slater_constant(&inst).unwrap();
    let b = 0.5 * (free.constraint_value + cmax);
    (inst.with_threshold(b).unwrap(), b)
}

#[test]
fn guarantee_run_meets_targets_and_regret_bound() {
    let eps_opt = 0.05;
    for seed in 0..6 {
        let (inst, b) = binding(seed);
        let emp = build_empirical_model(&inst, 500, seed).unwrap();
        let rp = perturb_rewards(inst.reward(), 0.0, seed).unwrap();
        let model = emp.model();
        let lp = solve_camdp_lp_with(model, &LpOptions { reward: Some(&rp.values), ..Default::default() }).unwrap();
        assert_eq!(lp.status, LpOutcome::Optimal);
        let u = (2.0 * lp.dual_lambda).max(1.0);
        let cfg = guarantee_config(b, eps_opt, u, lp.dual_lambda, 0.99).unwrap();
        let run = run_primal_dual(&emp, &rp, model.constraint(), &cfg).unwrap();
        let (r_hat, c_hat) = run.empirical_gains();
        assert!(r_hat >= lp.objective - eps_opt, "seed {seed}");
        assert!(c_hat >= b - eps_opt, "seed {seed}");
        let bound = dual_regret_bound(cfg.iterations, cfg.eps_net, cfg.u);
        for lam in [0.0, cfg.u] {
            assert!(dual_regret(&run.trace, lam, cfg.b_prime) <= bound);
        }
        // direct summation of member gains
        let direct: f64 = run.trace.records.iter().map(|r| run.reward_gain_hat[r.policy_id as usize]).sum::<f64>()
            / cfg.iterations as f64;
        assert_abs_diff_eq!(r_hat, direct, epsilon = 1e-12);
        let mv = mixture_value(&run.mixture, model, Signal::Custom(&rp.values), model.start()).unwrap();
        assert_abs_diff_eq!(mv, direct, epsilon = 1e-12);
        for rec in &run.trace.records {
            assert!(on_net(rec.lambda, cfg.eps_net, cfg.u));
        }
        assert_eq!(run.trace.records[0].lambda, 0.0);
    }
}

#[test]
fn interval_cache_matches_direct_planning() {
    let (inst, b) = binding(3);
    let emp = build_empirical_model(&inst, 300, 9).unwrap();
    let rp = perturb_rewards(inst.reward(), 0.01, 9).unwrap();
    let model = emp.model();
    let mut cfg = relaxed_schedule(b, 0.5, 1.0, 1.0).unwrap().with_iteration_cap_rescaled(3000);
    cfg.planner = PlannerKind::Discounted;
    let run = run_primal_dual(&emp, &rp, model.constraint(), &cfg).unwrap();
    assert!(run.planner_calls < 3000);
    // replay without any caching
    let mut lam = 0.0;
    for rec in &run.trace.records {
        assert_eq!(rec.lambda, lam);
        let pi = solve_discounted_exact(model, &combined_reward(&rp.values, model.constraint(), lam), cfg.gamma, cfg.planner_tol)
            .unwrap();
        assert_eq!(&pi, &run.policies[rec.policy_id as usize], "iteration {}", rec.iter);
        let g = start_gains(&pi.to_stochastic(3), model, &[Signal::Constraint]).unwrap()[0];
        assert_eq!(g, rec.rho_c_hat);
        lam = dual_step(lam, cfg.eta, g, cfg.b_prime, cfg.u, cfg.eps_net);
    }
}

#[test]
fn summary_regret_matches_records() {
    let (inst, b) = binding(5);
    let emp = build_empirical_model(&inst, 300, 2).unwrap();
    let rp = perturb_rewards(inst.reward(), 0.0, 2).unwrap();
    let mut cfg = strict_schedule(b, 0.5, 1.0, 1.0, 0.1).unwrap().with_iteration_cap_rescaled(5000);
    let full = run_primal_dual(&emp, &rp, emp.model().constraint(), &cfg).unwrap();
    cfg.record_trace = false;
    let lean = run_primal_dual(&emp, &rp, emp.model().constraint(), &cfg).unwrap();
    assert!(lean.trace.records.is_empty());
    assert_eq!(full.visits, lean.visits);
    for lam in [0.0, cfg.u / 3.0, cfg.u] {
        let a = dual_regret(&full.trace, lam, cfg.b_prime);
        let c = dual_regret(&lean.trace, lam, cfg.b_prime);
        assert!((a - c).abs() <= 1e-9 * (1.0 + a.abs()), "{a} vs {c}");
        assert!(a <= dual_regret_bound_eta(cfg.iterations, cfg.eta, cfg.eps_net, cfg.u, 1.0));
    }
}

#[test]
fn runs_are_deterministic_and_validated() {
    let (inst, b) = binding(0);
    let emp = build_empirical_model(&inst, 100, 0).unwrap();
    let rp = perturb_rewards(inst.reward(), 0.02, 0).unwrap();
    let mut cfg = relaxed_schedule(b, 0.4, 1.0, 1.0).unwrap().with_iteration_cap_rescaled(500);
    cfg.planner = PlannerKind::ValueIteration;
    let a = run_primal_dual(&emp, &rp, inst.constraint(), &cfg).unwrap();
    let b2 = run_primal_dual(&emp, &rp, inst.constraint(), &cfg).unwrap();
    assert_eq!(a.trace, b2.trace);
    let mut bad = cfg.clone();
    bad.eps_net = 2.0 * bad.u;
    assert!(run_primal_dual(&emp, &rp, inst.constraint(), &bad).is_err());
    let mut csv = Vec::new();
    a.trace.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("iter,lambda,rho_c_hat,rho_combined_hat,policy_id\n"));
    assert_eq!(text.lines().count(), 501);
}
