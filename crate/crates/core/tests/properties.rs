use proptest::prelude::*;

use mechpoly_core::bic::{is_individually_bic, is_profile_bic, sample_bic, BicPolytope};
use mechpoly_core::catalog::{self, random_separable_game, RandomGameSpec};
use mechpoly_core::mechanisms::{
    check_continuation_equilibrium, deviator_reporting_branch, enumerate_pure_continuation_equilibria,
    induce_direct_mechanism, random_mechanism, EnumerationCaps, GeneralMechanism,
};
use mechpoly_core::solver::{
    best_response, maxmin, minmax, punishment_profile, MaxminParams, MinmaxMode, MinmaxParams,
};
use mechpoly_core::{simulate, DirectMechanism, FiniteGame, PureStrategyProfile};

fn game(seed: u64, principals: std::ops::RangeInclusive<usize>) -> FiniteGame {
    let spec = RandomGameSpec::default()
        .with_principals(principals)
        .with_agents(1..=2)
        .with_types(1..=2)
        .with_actions(2..=3);
    random_separable_game(&mut catalog::rng(seed), &spec)
}

fn bic_profile(g: &FiniteGame, seed: u64) -> Vec<DirectMechanism> {
    (0..g.num_principals())
        .map(|k| sample_bic(&BicPolytope::new(g, k), seed.wrapping_add(k as u64)).unwrap())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bic_polytope_is_convex(seed in any::<u64>(), s1 in any::<u64>(), s2 in any::<u64>(), lambda in 0.0..=1.0f64) {
        let g = game(seed, 2..=3);
        let poly = BicPolytope::new(&g, 0);
        let a = sample_bic(&poly, s1).unwrap();
        let b = sample_bic(&poly, s2).unwrap();
        prop_assert!(is_individually_bic(&g, 0, &a.mix(&b, lambda), 1e-9).unwrap().ok);
    }

    #[test]
    fn joint_bic_is_the_conjunction(seed in any::<u64>(), ms in any::<u64>(), mix in 0.0..=1.0f64) {
        let g = game(seed, 2..=3);
        // Pull sampled vertices toward the uniform mechanism so both verdicts occur.
        let profile: Vec<DirectMechanism> = bic_profile(&g, ms)
            .into_iter()
            .enumerate()
            .map(|(k, m)| {
                let u = DirectMechanism::uniform(k, g.num_profiles(), g.num_actions(k));
                let d = DirectMechanism::deterministic(k, g.num_actions(k), &vec![0; g.num_profiles()]);
                m.mix(&u, mix).mix(&d, 1.0 - mix)
            })
            .collect();
        let each = profile
            .iter()
            .enumerate()
            .all(|(k, m)| is_individually_bic(&g, k, m, 1e-9).unwrap().ok);
        prop_assert_eq!(is_profile_bic(&g, &profile, 1e-9).unwrap().ok, each);
    }

    #[test]
    fn best_response_beats_any_feasible_mechanism(seed in any::<u64>(), ms in any::<u64>()) {
        let g = game(seed, 2..=3);
        let profile = bic_profile(&g, ms);
        let others: Vec<DirectMechanism> = profile[1..].to_vec();
        let br = best_response(&g, 0, &others).unwrap();
        let own = g.expected_principal_payoff(0, &profile).unwrap();
        prop_assert!(br.value >= own - 1e-9);
        prop_assert!(is_individually_bic(&g, 0, &br.mechanism, 1e-9).unwrap().ok);
    }

    #[test]
    fn two_principal_values_bracket_responses(seed in any::<u64>(), ms in any::<u64>()) {
        let g = game(seed, 2..=2);
        let mm = minmax(&g, 0, MinmaxMode::Exact2, &MinmaxParams::default()).unwrap();
        let xm = maxmin(&g, 0, &MaxminParams::default()).unwrap();
        prop_assert!((mm.value - xm.value).abs() <= 1e-6);
        // Any punisher leaves at least the minmax; the maxmin witness guarantees it.
        let profile = bic_profile(&g, ms);
        let br = best_response(&g, 0, &profile[1..]).unwrap();
        prop_assert!(br.value >= mm.value - 1e-7);
        let guaranteed = g
            .expected_principal_payoff(0, &[xm.witness[0].clone(), profile[1].clone()])
            .unwrap();
        prop_assert!(guaranteed >= xm.value - 1e-7);
    }

    #[test]
    fn punishments_are_bic(seed in any::<u64>()) {
        let g = game(seed, 2..=2);
        let p = punishment_profile(&g, 1, MinmaxMode::Exact2, &MinmaxParams::default()).unwrap();
        prop_assert_eq!(p.others.len(), 1);
        prop_assert!(is_individually_bic(&g, 0, &p.others[0], 1e-9).unwrap().ok);
        let br = best_response(&g, 1, &p.others).unwrap();
        prop_assert!((br.value - p.value).abs() <= 1e-7);
    }

    #[test]
    fn one_agent_cannot_move_a_unanimous_report(
        agents in 3usize..8,
        principals in 2usize..5,
        culprit in 0usize..8,
        flip in 0usize..5,
    ) {
        let k = 0;
        let named = vec![1usize; agents];
        prop_assert_eq!(deviator_reporting_branch(k, principals, &named), Some(1));
        let mut flipped = named.clone();
        flipped[culprit % agents] = flip % principals;
        prop_assert_eq!(deviator_reporting_branch(k, principals, &flipped), Some(1));
    }

    #[test]
    fn constant_in_the_principal_message_means_standard(
        n0 in 1usize..4,
        n1 in 1usize..4,
        n2 in 1usize..3,
        seed in any::<u64>(),
    ) {
        let mut rng = catalog::rng(seed);
        let rows: Vec<f64> = (0..n1 * n2).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        let labels = |n: usize| (0..n).map(|m| format!("m{m}")).collect::<Vec<_>>();
        let g = GeneralMechanism::from_fn(0, labels(n0), vec![labels(n1), labels(n2)], |_, m| {
            let p = rows[m[0] * n2 + m[1]];
            vec![p, 1.0 - p]
        })
        .unwrap();
        prop_assert!(g.is_standard());
        let depends = GeneralMechanism::from_fn(0, labels(n0), vec![labels(n1), labels(n2)], |m0, _| {
            if m0 == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }
        })
        .unwrap();
        prop_assert_eq!(depends.is_standard(), n0 == 1);
    }

    #[test]
    fn continuation_equilibria_induce_bic_mechanisms(seed in any::<u64>()) {
        let g = game(seed, 2..=2);
        let mut rng = catalog::rng(seed ^ 1);
        let mechs: Vec<GeneralMechanism> = (0..2)
            .map(|k| random_mechanism(&g, k, 2, &mut rng).unwrap())
            .collect();
        let eqs = enumerate_pure_continuation_equilibria(&g, &mechs, &EnumerationCaps::default(), 1e-9)
            .unwrap();
        for e in 0..eqs.len() {
            let s = eqs.profile(e).to_mixed(&mechs);
            prop_assert!(check_continuation_equilibrium(&g, &mechs, &s, 1e-9).unwrap().ok);
            for (k, m) in mechs.iter().enumerate() {
                let induced = induce_direct_mechanism(&g, m, &s).unwrap();
                prop_assert!(is_individually_bic(&g, k, &induced, 1e-8).unwrap().ok);
            }
        }
    }

    #[test]
    fn seeded_runs_repeat(seed in any::<u64>()) {
        let g = game(seed, 2..=3);
        let poly = BicPolytope::new(&g, 0);
        prop_assert_eq!(sample_bic(&poly, seed).unwrap(), sample_bic(&poly, seed).unwrap());
        let mechs: Vec<GeneralMechanism> = bic_profile(&g, seed)
            .iter()
            .map(|m| GeneralMechanism::from_direct(&g, m).unwrap())
            .collect();
        let s = PureStrategyProfile::truthful(&g, &mechs).to_mixed(&mechs);
        let a = simulate(&g, &mechs, &s, 500, seed).unwrap();
        let b = simulate(&g, &mechs, &s, 500, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}
