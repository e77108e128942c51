use camdp_core::chain::{discounted_value, gain_bias};
use camdp_core::generative::{build_empirical_model, perturb_rewards};
use camdp_core::model::{deterministic_policies, random_instance, CmdpInstance, RandomSpec, Signal};
use camdp_core::planner::{
    combined_reward, optimality_range, primal_update, solve_discounted, solve_discounted_exact, AverageEnumerator,
};
use camdp_core::structure::span_and_transient;

/// Best discounted value per state over all deterministic policies.
fn enumerated_optimum(inst: &CmdpInstance, reward: &[f64], gamma: f64) -> Vec<f64> {
    let mut best = vec![f64::NEG_INFINITY; inst.n_states()];
    for pi in deterministic_policies(inst.n_states(), inst.n_actions(), 1 << 20).unwrap() {
        let v = discounted_value(&pi.to_stochastic(inst.n_actions()), inst, Signal::Custom(reward), gamma).unwrap();
        for (b, x) in best.iter_mut().zip(v) {
            *b = b.max(x);
        }
    }
    best
}

#[test]
fn single_state_picks_max_reward() {
    let inst = CmdpInstance::new(1, 3, vec![1.0; 3], vec![0.2, 0.9, 0.4], vec![0.0; 3], 0.0, vec![1.0]).unwrap();
    assert_eq!(solve_discounted(&inst, inst.reward(), 0.9, 1e-6).unwrap().actions(), &[1]);
}

#[test]
fn dominant_action_everywhere() {
    // both actions keep the chain on the same states; action 0 pays 1, action 1 pays 0
    let kernel = vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
    let inst = CmdpInstance::new(2, 2, kernel, vec![1.0, 0.0, 1.0, 0.0], vec![0.0; 4], 0.0, vec![1.0, 0.0]).unwrap();
    assert_eq!(solve_discounted(&inst, inst.reward(), 0.95, 1e-8).unwrap().actions(), &[0, 0]);
}

#[test]
fn value_iteration_is_tol_optimal() {
    for seed in 0..6 {
        let inst = random_instance(&RandomSpec::dense(5, 3), seed).unwrap();
        let (gamma, tol) = (0.95, 1e-4);
        let opt = enumerated_optimum(&inst, inst.reward(), gamma);
        let pi = solve_discounted(&inst, inst.reward(), gamma, tol).unwrap();
        let v = discounted_value(&pi.to_stochastic(3), &inst, Signal::Reward, gamma).unwrap();
        for s in 0..5 {
            assert!(opt[s] - v[s] <= tol, "seed {seed} state {s}: {} vs {}", v[s], opt[s]);
        }
        let exact = solve_discounted_exact(&inst, inst.reward(), gamma, tol).unwrap();
        let ve = discounted_value(&exact.to_stochastic(3), &inst, Signal::Reward, gamma).unwrap();
        for s in 0..5 {
            assert!(opt[s] - ve[s] <= 1e-10, "seed {seed} state {s}");
        }
    }
}

#[test]
fn bad_inputs_are_rejected() {
    let inst = random_instance(&RandomSpec::dense(2, 2), 0).unwrap();
    assert!(solve_discounted(&inst, &[0.0, f64::NAN, 0.0, 0.0], 0.9, 1e-3).is_err());
    assert!(solve_discounted(&inst, inst.reward(), 1.0, 1e-3).is_err());
    assert!(solve_discounted(&inst, inst.reward(), 0.9, 0.0).is_err());
}

#[test]
fn normalization_does_not_change_the_argmax() {
    for seed in 0..10 {
        let inst = random_instance(&RandomSpec::dense(4, 3), seed).unwrap();
        let lambda = 0.3 + seed as f64;
        let scaled = combined_reward(inst.reward(), inst.constraint(), lambda);
        let raw: Vec<f64> = inst.reward().iter().zip(inst.constraint()).map(|(r, c)| r + lambda * c).collect();
        let a = solve_discounted_exact(&inst, &scaled, 0.9, 1e-9).unwrap();
        let b = solve_discounted_exact(&inst, &raw, 0.9, 1e-9).unwrap();
        assert_eq!(a, b, "seed {seed}");
    }
}

#[test]
fn primal_update_limits() {
    let inst = random_instance(&RandomSpec::dense(4, 3), 3).unwrap();
    let emp = build_empirical_model(&inst, 200, 1).unwrap();
    let rp = perturb_rewards(inst.reward(), 0.01, 1).unwrap();
    let at_zero = primal_update(&emp, &rp, inst.constraint(), 0.0, 0.9, 1e-6).unwrap();
    assert_eq!(at_zero, solve_discounted(emp.model(), &rp.values, 0.9, 1e-6).unwrap());
    let huge = primal_update(&emp, &rp, inst.constraint(), 1e6, 0.9, 1e-6).unwrap();
    let pure_c = solve_discounted(emp.model(), inst.constraint(), 0.9, 1e-6).unwrap();
    assert_eq!(huge, pure_c);
    assert!(primal_update(&emp, &rp, inst.constraint(), -1.0, 0.9, 1e-6).is_err());
}

#[test]
fn planner_average_reward_within_budget() {
    // the prescribed discount and tolerance keep the average-reward loss within eps_opt / 4
    let eps_opt = 0.05;
    for seed in 0..10 {
        let inst = random_instance(&RandomSpec { n_states: 4, n_actions: 2, density: 0.6, threshold: 0.5 }, seed).unwrap();
        let emp = build_empirical_model(&inst, 100, seed).unwrap();
        let model = emp.model();
        let (h, b) = span_and_transient(model, 1 << 20).unwrap();
        let gamma = 1.0 - eps_opt / (4.0 * (b + h).max(eps_opt / 2.0));
        for lambda in [0.0, 0.5, 3.0] {
            let reward = combined_reward(model.reward(), model.constraint(), lambda);
            let en = AverageEnumerator::new(model, &reward, model.constraint(), 1 << 20).unwrap();
            let best = en.reward_gain.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let pi = solve_discounted(model, &reward, gamma, eps_opt / 8.0).unwrap();
            let g = gain_bias(&pi.to_stochastic(2), model, Signal::Custom(&reward)).unwrap().gain_at(model.start());
            assert!(best - g <= eps_opt / 4.0, "seed {seed} lambda {lambda}: {g} vs {best}");
        }
    }
}

#[test]
fn enumerator_ranks_combined_gains() {
    let inst = random_instance(&RandomSpec::dense(3, 2), 12).unwrap();
    let en = AverageEnumerator::new(&inst, inst.reward(), inst.constraint(), 1 << 20).unwrap();
    for lambda in [0.0, 0.7, 4.0] {
        let i = en.best(lambda);
        let v = en.reward_gain[i] + lambda * en.constraint_gain[i];
        for j in 0..en.policies.len() {
            assert!(en.reward_gain[j] + lambda * en.constraint_gain[j] <= v + 1e-12);
        }
    }
}

fn probes(lo: f64, hi: f64) -> Vec<f64> {
    let hi = if hi.is_finite() { hi } else { lo + 50.0 };
    (0..=8).map(|k| lo + (hi - lo) * k as f64 / 8.0).collect()
}

#[test]
fn discounted_range_holds_the_policy_fixed() {
    let gamma = 0.9;
    for seed in 0..6 {
        let inst = random_instance(&RandomSpec::dense(4, 3), 40 + seed).unwrap();
        let (r, c) = (inst.reward(), inst.constraint());
        let mut covered = 0;
        for lambda in [0.0, 0.3, 1.0, 2.5, 9.0] {
            let scaled: Vec<f64> = r.iter().zip(c).map(|(r, c)| r + lambda * c).collect();
            let pi = solve_discounted_exact(&inst, &scaled, gamma, 1e-10).unwrap();
            let Some((lo, hi)) = optimality_range(&inst, r, c, gamma, &pi).unwrap() else { continue };
            covered += 1;
            assert!(lo <= hi && lo >= 0.0);
            for l in probes(lo, hi) {
                let at: Vec<f64> = r.iter().zip(c).map(|(r, c)| r + l * c).collect();
                let best = enumerated_optimum(&inst, &at, gamma);
                let v = discounted_value(&pi.to_stochastic(3), &inst, Signal::Custom(&at), gamma).unwrap();
                for (a, b) in v.iter().zip(&best) {
                    assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "seed {seed} lambda {l}");
                }
            }
        }
        assert!(covered > 0, "seed {seed}: no policy had a range");
    }
}

#[test]
fn enumerator_ranges_partition_the_line() {
    let inst = random_instance(&RandomSpec::dense(3, 2), 7).unwrap();
    let en = AverageEnumerator::new(&inst, inst.reward(), inst.constraint(), 1 << 20).unwrap();
    for lambda in [0.0, 0.2, 1.0, 3.0, 40.0] {
        let i = en.best(lambda);
        if let Some((lo, hi)) = en.optimality_range(i) {
            for l in probes(lo, hi) {
                let v = en.reward_gain[i] + l * en.constraint_gain[i];
                let top = (0..en.policies.len())
                    .map(|j| en.reward_gain[j] + l * en.constraint_gain[j])
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!(v >= top - 1e-12, "lambda {l}");
            }
        }
    }
    let ranges: Vec<_> = (0..en.policies.len()).filter_map(|i| en.optimality_range(i).map(|r| (i, r))).collect();
    for (x, (i, a)) in ranges.iter().enumerate() {
        for (j, b) in &ranges[x + 1..] {
            let same = en.reward_gain[*i] == en.reward_gain[*j] && en.constraint_gain[*i] == en.constraint_gain[*j];
            assert!(same || a.1 < b.0 || b.1 < a.0, "ranges of {i} and {j} overlap");
        }
    }
}
