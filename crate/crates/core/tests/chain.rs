use approx::assert_abs_diff_eq;
use camdp_core::chain::{cesaro_limit, chain_classes, discounted_value, gain_bias, mixture_value, span, transient_times};
use camdp_core::model::{random_instance, CmdpInstance, DeterministicPolicy, MixturePolicy, RandomSpec, Signal, StochasticPolicy};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn two_state(p: f64, q: f64) -> CmdpInstance {
    let kernel = vec![1.0 - p, p, q, 1.0 - q];
    CmdpInstance::new(2, 1, kernel, vec![1.0, 0.0], vec![0.0, 1.0], 0.5, vec![1.0, 0.0]).unwrap()
}

fn random_policy(n_states: usize, n_actions: usize, seed: u64) -> StochasticPolicy {
    // splitmix-style mixing keeps the test independent of the library RNG
    let mut x = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut next = || {
        x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        ((z ^ (z >> 31)) >> 11) as f64 / (1u64 << 53) as f64
    };
    let rows: Vec<Vec<f64>> = (0..n_states)
        .map(|_| {
            let w: Vec<f64> = (0..n_actions).map(|_| next() + 0.01).collect();
            let t: f64 = w.iter().sum();
            let mut row: Vec<f64> = w.iter().map(|v| v / t).collect();
            let resid = 1.0 - row.iter().sum::<f64>();
            row[0] += resid;
            row
        })
        .collect();
    StochasticPolicy::from_rows(&rows).unwrap()
}

#[test]
fn two_state_chain_matches_closed_form() {
    let (p, q) = (0.3, 0.2);
    let inst = two_state(p, q);
    let pi = StochasticPolicy::uniform(2, 1);
    let gb = gain_bias(&pi, &inst, Signal::Reward).unwrap();
    let g = q / (p + q);
    for s in 0..2 {
        assert_abs_diff_eq!(gb.gain[s], g, epsilon = 1e-12);
    }
    // h = sum_t (P^t - P^inf) r = (p, -q) / (p + q)^2
    assert_abs_diff_eq!(gb.bias[0], p / (p + q).powi(2), epsilon = 1e-12);
    assert_abs_diff_eq!(gb.bias[1], -q / (p + q).powi(2), epsilon = 1e-12);
}

#[test]
fn absorbing_split_gain() {
    // state 0 leaves to absorbing 1 w.p. 0.3 and to absorbing 2 w.p. 0.7
    let kernel = vec![0.0, 0.3, 0.7, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    let inst = CmdpInstance::new(3, 1, kernel, vec![0.5, 1.0, 0.2], vec![0.0; 3], 0.0, vec![1.0, 0.0, 0.0]).unwrap();
    let gb = gain_bias(&StochasticPolicy::uniform(3, 1), &inst, Signal::Reward).unwrap();
    assert_abs_diff_eq!(gb.gain[0], 0.3 * 1.0 + 0.7 * 0.2, epsilon = 1e-12);
    assert_abs_diff_eq!(gb.gain[1], 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(gb.gain[2], 0.2, epsilon = 1e-12);
    // one step at 0 pays 0.5 against the eventual gain 0.44
    assert_abs_diff_eq!(gb.bias[0], 0.5 - 0.44, epsilon = 1e-12);
}

#[test]
fn chain_classes_of_periodic_and_absorbing() {
    let p = DMatrix::from_row_slice(4, 4, &[
        0.0, 1.0, 0.0, 0.0, //
        1.0, 0.0, 0.0, 0.0, //
        0.5, 0.0, 0.0, 0.5, //
        0.0, 0.0, 0.0, 1.0,
    ]);
    let cl = chain_classes(&p);
    let mut rec: Vec<Vec<usize>> = cl.recurrent.iter().map(|c| { let mut c = c.clone(); c.sort(); c }).collect();
    rec.sort();
    assert_eq!(rec, vec![vec![0, 1], vec![3]]);
    assert_eq!(cl.transient, vec![2]);
    let lim = cesaro_limit(&p).unwrap();
    assert_abs_diff_eq!(lim[(2, 0)], 0.25, epsilon = 1e-12);
    assert_abs_diff_eq!(lim[(2, 1)], 0.25, epsilon = 1e-12);
    assert_abs_diff_eq!(lim[(2, 3)], 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(lim[(0, 0)], 0.5, epsilon = 1e-12);
}

#[test]
fn transient_time_of_geometric_dwell() {
    let b = 7.0;
    let p = DMatrix::from_row_slice(2, 2, &[1.0 - 1.0 / b, 1.0 / b, 0.0, 1.0]);
    let t = transient_times(&p).unwrap();
    assert_abs_diff_eq!(t[0], b, epsilon = 1e-9);
    assert_eq!(t[1], 0.0);
}

#[test]
fn span_examples() {
    assert_eq!(span(&[3.0, -1.0, 2.0]).unwrap(), 4.0);
    assert_eq!(span(&[1.5]).unwrap(), 0.0);
    assert!(span(&[]).is_err());
}

#[test]
fn mixture_value_is_weighted_average() {
    let inst = random_instance(&RandomSpec::dense(4, 3), 11).unwrap();
    let a = DeterministicPolicy::constant(4, 0).to_stochastic(3);
    let b = DeterministicPolicy::constant(4, 2).to_stochastic(3);
    let ga = gain_bias(&a, &inst, Signal::Reward).unwrap().gain_at(inst.start());
    let gb = gain_bias(&b, &inst, Signal::Reward).unwrap().gain_at(inst.start());
    let mix = MixturePolicy::new(vec![(0.25, a), (0.75, b)]).unwrap();
    let v = mixture_value(&mix, &inst, Signal::Reward, inst.start()).unwrap();
    assert_abs_diff_eq!(v, 0.25 * ga + 0.75 * gb, epsilon = 1e-14);
}

fn check_identities(inst: &CmdpInstance, pi: &StochasticPolicy) -> Result<(), TestCaseError> {
    let p = inst.policy_matrix(pi).unwrap();
    for which in [Signal::Reward, Signal::Constraint] {
        let r = inst.policy_reward(pi, which).unwrap();
        let gb = gain_bias(pi, inst, which).unwrap();
        let n = inst.n_states();
        for s in 0..n {
            let ph: f64 = (0..n).map(|j| p[(s, j)] * gb.bias[j]).sum();
            let pg: f64 = (0..n).map(|j| p[(s, j)] * gb.gain[j]).sum();
            prop_assert!((gb.gain[s] + gb.bias[s] - r[s] - ph).abs() <= 1e-8);
            prop_assert!((pg - gb.gain[s]).abs() <= 1e-8);
        }
        let h = span(&gb.bias).unwrap();
        for gamma in [0.5, 0.9, 0.99] {
            let v = discounted_value(pi, inst, which, gamma).unwrap();
            for s in 0..n {
                prop_assert!((v[s] - gb.gain[s] / (1.0 - gamma)).abs() <= h + 1e-9, "gamma {gamma} state {s}");
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bellman_and_discount_identities(seed in any::<u64>(), s in 1usize..=6, a in 1usize..=4, density in 0.2f64..=1.0) {
        let inst = random_instance(&RandomSpec { n_states: s, n_actions: a, density, threshold: 0.5 }, seed).unwrap();
        check_identities(&inst, &random_policy(s, a, seed))?;
        check_identities(&inst, &DeterministicPolicy::constant(s, (seed as usize) % a).to_stochastic(a))?;
    }

    #[test]
    fn gain_matches_power_averages(seed in any::<u64>(), s in 1usize..=5, a in 1usize..=3) {
        // independent oracle: Cesàro average of matrix powers, with the tail error O(1/n)
        let inst = random_instance(&RandomSpec { n_states: s, n_actions: a, density: 0.6, threshold: 0.5 }, seed).unwrap();
        let pi = random_policy(s, a, seed ^ 0xABCD);
        let p = inst.policy_matrix(&pi).unwrap();
        let r = inst.policy_reward(&pi, Signal::Reward).unwrap();
        let n = 20_000;
        let mut acc = nalgebra::DVector::zeros(s);
        let mut v = r.clone();
        for _ in 0..n {
            acc += &v;
            v = &p * v;
        }
        let gb = gain_bias(&pi, &inst, Signal::Reward).unwrap();
        for i in 0..s {
            prop_assert!((acc[i] / n as f64 - gb.gain[i]).abs() <= (2.0 * span(&gb.bias).unwrap() + 1.0) / n as f64 + 1e-9);
        }
    }
}

fn two_cycle(r: [f64; 2]) -> CmdpInstance {
    CmdpInstance::new(2, 1, vec![0.0, 1.0, 1.0, 0.0], r.to_vec(), vec![0.0; 2], 0.0, vec![1.0, 0.0]).unwrap()
}

#[test]
fn single_state_values() {
    let inst = CmdpInstance::new(1, 1, vec![1.0], vec![0.7], vec![0.0], 0.0, vec![1.0]).unwrap();
    let pi = StochasticPolicy::uniform(1, 1);
    assert_eq!(camdp_core::chain::stationary_matrix(&pi, &inst).unwrap()[(0, 0)], 1.0);
    let gb = gain_bias(&pi, &inst, Signal::Reward).unwrap();
    assert_abs_diff_eq!(gb.gain[0], 0.7, epsilon = 1e-15);
    assert_abs_diff_eq!(gb.bias[0], 0.0, epsilon = 1e-15);
    let one = CmdpInstance::new(1, 1, vec![1.0], vec![1.0], vec![0.0], 0.0, vec![1.0]).unwrap();
    assert_abs_diff_eq!(discounted_value(&pi, &one, Signal::Reward, 0.9).unwrap()[0], 10.0, epsilon = 1e-12);
}

#[test]
fn periodic_cycle_values() {
    let inst = two_cycle([1.0, 0.0]);
    let pi = StochasticPolicy::uniform(2, 1);
    let lim = camdp_core::chain::stationary_matrix(&pi, &inst).unwrap();
    for v in lim.iter() {
        assert_abs_diff_eq!(*v, 0.5, epsilon = 1e-14);
    }
    let gb = gain_bias(&pi, &inst, Signal::Reward).unwrap();
    assert_abs_diff_eq!(gb.gain[0], 0.5, epsilon = 1e-14);
    assert_abs_diff_eq!(gb.gain[1], 0.5, epsilon = 1e-14);
    assert_abs_diff_eq!(gb.bias[0], 0.25, epsilon = 1e-14);
    assert_abs_diff_eq!(gb.bias[1], -0.25, epsilon = 1e-14);
    let v = discounted_value(&pi, &inst, Signal::Reward, 0.5).unwrap();
    assert_abs_diff_eq!(v[0], 4.0 / 3.0, epsilon = 1e-14);
    assert_abs_diff_eq!(v[1], 2.0 / 3.0, epsilon = 1e-14);
}

#[test]
fn span_is_shift_invariant() {
    let v = [0.3, -2.0, 5.5, 1.0];
    let shifted: Vec<f64> = v.iter().map(|x| x + 17.25).collect();
    assert_eq!(span(&v).unwrap(), span(&shifted).unwrap());
    assert_eq!(span(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
    assert_eq!(span(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
}

#[test]
fn unichain_limit_matches_power_iteration() {
    let inst = random_instance(&RandomSpec::dense(4, 2), 5).unwrap();
    let pi = DeterministicPolicy::constant(4, 1).to_stochastic(2);
    let p = inst.policy_matrix(&pi).unwrap();
    let lim = camdp_core::chain::stationary_matrix(&pi, &inst).unwrap();
    let mut q = p.clone();
    for _ in 0..200 {
        q = &q * &p;
    }
    for (a, b) in lim.iter().zip(q.iter()) {
        assert_abs_diff_eq!(*a, *b, epsilon = 1e-8);
    }
    // row-constant and invariant
    assert!((&lim * &p - &lim).amax() <= 1e-10);
    for s in 1..4 {
        assert_abs_diff_eq!(lim[(s, 2)], lim[(0, 2)], epsilon = 1e-12);
    }
}

#[test]
fn bias_is_normalized() {
    for seed in 0..10 {
        let inst = random_instance(&RandomSpec { n_states: 5, n_actions: 2, density: 0.4, threshold: 0.5 }, seed).unwrap();
        let pi = random_policy(5, 2, seed);
        let lim = camdp_core::chain::stationary_matrix(&pi, &inst).unwrap();
        let gb = gain_bias(&pi, &inst, Signal::Constraint).unwrap();
        let h = nalgebra::DVector::from_vec(gb.bias.clone());
        assert!((&lim * h).amax() <= 1e-8, "seed {seed}");
    }
}

#[test]
fn mixture_value_linear_in_weights() {
    let inst = random_instance(&RandomSpec::dense(3, 2), 3).unwrap();
    let members = [random_policy(3, 2, 1), random_policy(3, 2, 2), random_policy(3, 2, 3)];
    let w1 = [0.2, 0.5, 0.3];
    let w2 = [0.6, 0.1, 0.3];
    let val = |w: &[f64]| {
        let mix = MixturePolicy::new(w.iter().copied().zip(members.iter().cloned()).collect()).unwrap();
        mixture_value(&mix, &inst, Signal::Reward, inst.start()).unwrap()
    };
    let alpha = 0.35;
    let blend: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
    assert_abs_diff_eq!(val(&blend), alpha * val(&w1) + (1.0 - alpha) * val(&w2), epsilon = 1e-12);
    let single = MixturePolicy::singleton(members[0].clone());
    let g = gain_bias(&members[0], &inst, Signal::Reward).unwrap().gain_at(inst.start());
    assert_abs_diff_eq!(mixture_value(&single, &inst, Signal::Reward, inst.start()).unwrap(), g, epsilon = 1e-15);
}

#[test]
fn combined_reward_keeps_span_bound() {
    use camdp_core::model::deterministic_policies;
    use camdp_core::planner::combined_reward;
    use camdp_core::structure::span_and_transient;
    for seed in 0..8 {
        let inst = random_instance(&RandomSpec { n_states: 4, n_actions: 2, density: 0.5, threshold: 0.5 }, seed).unwrap();
        let (h, _) = span_and_transient(&inst, 1 << 20).unwrap();
        for lambda in [0.0, 0.3, 1.0, 7.0, 1e3] {
            let mixed = combined_reward(inst.reward(), inst.constraint(), lambda);
            let mut best: Option<(f64, f64)> = None;
            for pi in deterministic_policies(4, 2, 1 << 20).unwrap() {
                let gb = gain_bias(&pi.to_stochastic(2), &inst, Signal::Custom(&mixed)).unwrap();
                let g = gb.gain_at(inst.start());
                if best.is_none_or(|(v, _)| g > v + 1e-12) {
                    best = Some((g, span(&gb.bias).unwrap()));
                }
            }
            let (_, sp) = best.unwrap();
            assert!(sp <= h + 1e-9, "seed {seed} lambda {lambda}: {sp} > {h}");
        }
    }
}
