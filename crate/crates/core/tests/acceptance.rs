//! Acceptance suite: one PASS/FAIL line per criterion, with counts and
//! runtime. Exits nonzero when any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use mechpoly_core::bic::{is_individually_bic, is_profile_bic, sample_bic, BicPolytope};
use mechpoly_core::catalog::{self, mp2, random_separable_game, GapFamily, RandomGameSpec};
use mechpoly_core::lp::{solve_lp, LpProblem, Sense};
use mechpoly_core::mechanisms::{
    build_deviator_reporting, check_continuation_equilibrium, check_equilibrium_notion,
    deviator_reporting_branch, enumerate_pure_continuation_equilibria, full_menu_type_and_dm,
    induce_direct_mechanism, nest_szentes_contract, random_deviation_mechanism, random_mechanism,
    simulate, Candidate, EnumerationCaps, GeneralMechanism, MechanismError, Notion, NotionStatus,
    PureStrategyProfile, SetValuedContract,
};
use mechpoly_core::solver::{
    maxmin, minmax, punishment_profile, robust_pbe_membership, search_minmax_maxmin_gap,
    GapSearchParams, MaxminParams, MembershipStatus, MinmaxMode, MinmaxParams,
};
use mechpoly_core::{DirectMechanism, FiniteGame, ProfileSpace};

struct Outcome {
    pass: bool,
    detail: String,
}

fn random_direct(rng: &mut impl Rng, game: &FiniteGame, j: usize) -> DirectMechanism {
    let n_x = game.num_profiles();
    let n_a = game.num_actions(j);
    match rng.random_range(0..3) {
        0 => sample_bic(&BicPolytope::new(game, j), rng.random()).unwrap(),
        1 => {
            let choice: Vec<usize> = (0..n_x).map(|_| rng.random_range(0..n_a)).collect();
            DirectMechanism::deterministic(j, n_a, &choice)
        }
        _ => {
            let flat: Vec<f64> = (0..n_x * n_a).map(|_| rng.random::<f64>()).collect();
            DirectMechanism::from_flat(j, n_a, &flat)
        }
    }
}

fn product_structure() -> Outcome {
    let mut rng = catalog::rng(101);
    let spec = RandomGameSpec::default()
        .with_principals(2..=3)
        .with_agents(1..=3)
        .with_types(1..=2)
        .with_actions(2..=3);
    let (mut mismatches, mut bic, mut total) = (0, 0, 0);
    for _ in 0..200 {
        let g = random_separable_game(&mut rng, &spec);
        for _ in 0..50 {
            let profile: Vec<DirectMechanism> = (0..g.num_principals())
                .map(|j| random_direct(&mut rng, &g, j))
                .collect();
            let joint = is_profile_bic(&g, &profile, 1e-9).unwrap().ok;
            let each = profile
                .iter()
                .enumerate()
                .all(|(j, m)| is_individually_bic(&g, j, m, 1e-9).unwrap().ok);
            total += 1;
            bic += usize::from(joint);
            mismatches += usize::from(joint != each);
        }
    }
    Outcome {
        pass: mismatches == 0,
        detail: format!("{total} profiles, {bic} jointly BIC, {mismatches} mismatches"),
    }
}

fn convexity() -> Outcome {
    let mut rng = catalog::rng(202);
    let spec = RandomGameSpec::default().with_agents(1..=3).with_types(1..=2);
    let (mut pairs, mut skipped, mut failures) = (0, 0, 0);
    while pairs < 100 {
        let g = random_separable_game(&mut rng, &spec);
        let j = rng.random_range(0..g.num_principals());
        let poly = BicPolytope::new(&g, j);
        let a = sample_bic(&poly, rng.random()).unwrap();
        let b = random_direct(&mut rng, &g, j);
        let exact = |m: &DirectMechanism| poly.check(m, 0.0).unwrap().ok;
        if !exact(&a) || !exact(&b) {
            skipped += 1;
            continue;
        }
        pairs += 1;
        for lambda in [0.25, 0.5, 0.75] {
            if !poly.check(&a.mix(&b, lambda), 1e-12).unwrap().ok {
                failures += 1;
            }
        }
    }
    Outcome {
        pass: failures == 0,
        detail: format!("{pairs} pairs ({skipped} draws not BIC at tol 0), {failures} failing mixtures"),
    }
}

fn induced_bic() -> Outcome {
    let mut rng = catalog::rng(303);
    let spec = RandomGameSpec::default()
        .with_principals(2..=3)
        .with_agents(1..=3)
        .with_types(1..=2)
        .with_actions(2..=3);
    let caps = EnumerationCaps::default();
    let (mut games, mut equilibria, mut violations, mut too_large) = (0, 0, 0, 0);
    while games < 100 {
        let g = random_separable_game(&mut rng, &spec);
        let mechs: Vec<GeneralMechanism> = (0..g.num_principals())
            .map(|j| random_mechanism(&g, j, 3, &mut rng).unwrap())
            .collect();
        let eqs = match enumerate_pure_continuation_equilibria(&g, &mechs, &caps, 1e-9) {
            Ok(e) => e,
            Err(MechanismError::EnumerationTooLarge { .. }) => {
                too_large += 1;
                continue;
            }
            Err(e) => panic!("{e}"),
        };
        games += 1;
        for e in 0..eqs.len() {
            let s = eqs.profile(e).to_mixed(&mechs);
            if !check_continuation_equilibrium(&g, &mechs, &s, 1e-9).unwrap().ok {
                violations += 1;
                continue;
            }
            equilibria += 1;
            for m in &mechs {
                let pi = induce_direct_mechanism(&g, m, &s).unwrap();
                if !is_individually_bic(&g, m.owner(), &pi, 1e-8).unwrap().ok {
                    violations += 1;
                }
            }
        }
    }
    Outcome {
        pass: violations == 0 && equilibria > 0,
        detail: format!(
            "{games} games ({too_large} over caps redrawn), {equilibria} equilibria, {violations} violations"
        ),
    }
}

fn sion() -> Outcome {
    let mut rng = catalog::rng(404);
    let spec = RandomGameSpec::default()
        .with_principals(2..=2)
        .with_agents(1..=2)
        .with_types(1..=2)
        .with_actions(2..=3);
    let maxmin_params = MaxminParams {
        force_exact: true,
        ..MaxminParams::default()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let g = random_separable_game(&mut rng, &spec);
        for j in 0..2 {
            let high = minmax(&g, j, MinmaxMode::Exact2, &MinmaxParams::default()).unwrap();
            let low = maxmin(&g, j, &maxmin_params).unwrap();
            worst = worst.max((high.value - low.value).abs());
        }
    }
    Outcome {
        pass: worst <= 1e-6,
        detail: format!("100 games, both principals, max |minmax - maxmin| = {worst:.2e}"),
    }
}

fn gap_search() -> Outcome {
    let params = GapSearchParams {
        family: GapFamily::gap3(),
        budget: 500,
        seed: 42,
        delta: 1e-2,
        ..GapSearchParams::default()
    };
    let res = search_minmax_maxmin_gap(&params).unwrap();
    let best = res.best.expect("nonzero budget");
    Outcome {
        pass: best.gap > 0.01,
        detail: format!(
            "{} instances, {} with positive certified gap; best #{}: minmax >= {:.6}, maxmin = {:.6}, gap {:.6}",
            res.evaluated, res.positive_gaps, best.index, best.minmax_lower, best.maxmin, best.gap
        ),
    }
}

fn two_principal_games() -> Vec<FiniteGame> {
    let mut rng = catalog::rng(606);
    let spec = RandomGameSpec::default()
        .with_principals(2..=2)
        .with_agents(3..=3)
        .with_types(1..=2)
        .with_actions(2..=3);
    let mut games = vec![mp2()];
    games.extend((0..20).map(|_| random_separable_game(&mut rng, &spec)));
    games
}

/// `punish[j]` is principal `1 - j`'s mechanism in the exact punishment of `j`.
fn punishments(g: &FiniteGame) -> (Vec<DirectMechanism>, Vec<f64>) {
    (0..2)
        .map(|j| {
            let p = punishment_profile(g, j, MinmaxMode::Exact2, &MinmaxParams::default()).unwrap();
            (p.others[0].clone(), p.certificate.value)
        })
        .unzip()
}

fn supporting_mechanisms(g: &FiniteGame, target: &[DirectMechanism], punish: &[DirectMechanism]) -> Vec<GeneralMechanism> {
    (0..2)
        .map(|k| build_deviator_reporting(g, k, &target[k], &[(1 - k, punish[1 - k].clone())]).unwrap())
        .collect()
}

/// Lowest payoff `j` can get from a BIC mechanism against `others`.
fn worst_response(g: &FiniteGame, j: usize, other: &DirectMechanism) -> DirectMechanism {
    let poly = BicPolytope::new(g, j);
    let placeholder = DirectMechanism::uniform(j, g.num_profiles(), g.num_actions(j));
    let mut profile = vec![other.clone()];
    profile.insert(j, placeholder);
    let c: Vec<f64> = g.linear_coefficients(j, j, &profile).unwrap().into_iter().flatten().collect();
    let mut lp = LpProblem::new(Sense::Minimize, c);
    poly.add_to_lp(&mut lp, 0);
    let sol = solve_lp(&lp).unwrap();
    DirectMechanism::from_flat(j, g.num_actions(j), &sol.x)
}

fn lower_bound() -> Outcome {
    let caps = EnumerationCaps::default();
    let mut rng = catalog::rng(6060);
    let (mut candidates, mut rejected, mut other) = (0, 0, 0);
    for g in two_principal_games() {
        let (punish, values) = punishments(&g);
        let mut profiles: Vec<Vec<DirectMechanism>> = (0..2)
            .map(|j| {
                let own = worst_response(&g, j, &punish[j]);
                let mut p = vec![punish[j].clone()];
                p.insert(j, own);
                p
            })
            .collect();
        for _ in 0..3 {
            profiles.push(
                (0..2)
                    .map(|k| sample_bic(&BicPolytope::new(&g, k), rng.random()).unwrap())
                    .collect(),
            );
        }
        for target in profiles {
            let short: Vec<usize> = (0..2)
                .filter(|&j| g.expected_principal_payoff(j, &target).unwrap() < values[j] - 1e-6)
                .collect();
            if short.is_empty() {
                continue;
            }
            candidates += 1;
            let mechanisms = supporting_mechanisms(&g, &target, &punish);
            let deviations = (0..2)
                .map(|j| vec![full_menu_type_and_dm(&g, j, &mechanisms, &caps, 1e-9).unwrap()])
                .collect();
            let cand = Candidate {
                on_path: PureStrategyProfile::truthful(&g, &mechanisms),
                mechanisms,
                deviations,
            };
            let v = check_equilibrium_notion(&g, &cand, Notion::Robust, &caps, 1e-6).unwrap();
            let by_short = short
                .iter()
                .any(|&j| v.deviations.iter().any(|d| d.principal == j && d.profitable));
            if v.status == NotionStatus::Fails && v.on_path_equilibrium && by_short {
                rejected += 1;
            } else {
                other += 1;
            }
        }
    }
    Outcome {
        pass: candidates > 0 && other == 0,
        detail: format!("{candidates} candidates below a minmax value, {rejected} rejected by a profitable deviation"),
    }
}

/// A member of the Theorem-1 set: mixtures of random BIC mechanisms with the
/// exact maxmin witnesses, accepted by the exact membership test.
fn sample_member(g: &FiniteGame, rng: &mut impl Rng) -> Vec<DirectMechanism> {
    let certs: Vec<_> = (0..2)
        .map(|j| minmax(g, j, MinmaxMode::Exact2, &MinmaxParams::default()).unwrap())
        .collect();
    let witnesses: Vec<DirectMechanism> = (0..2)
        .map(|j| maxmin(g, j, &MaxminParams::default()).unwrap().witness[0].clone())
        .collect();
    for lambda in [0.75, 0.5, 0.25, 0.0] {
        let profile: Vec<DirectMechanism> = (0..2)
            .map(|k| {
                let s = sample_bic(&BicPolytope::new(g, k), rng.random()).unwrap();
                s.mix(&witnesses[k], lambda)
            })
            .collect();
        let v = robust_pbe_membership(g, &profile, &certs, 1e-7).unwrap();
        if v.status == MembershipStatus::Member {
            return profile;
        }
    }
    panic!("maxmin witnesses always form a member");
}

fn construction() -> Outcome {
    let caps = EnumerationCaps::default();
    let mut rng = catalog::rng(707);
    let (mut holds, mut games, mut random_devs) = (0, 0, 0);
    let mut failures = Vec::new();
    for (n, g) in two_principal_games().into_iter().enumerate() {
        games += 1;
        let (punish, _) = punishments(&g);
        let target = sample_member(&g, &mut rng);
        let mechanisms = supporting_mechanisms(&g, &target, &punish);
        let deviations: Vec<Vec<GeneralMechanism>> = (0..2)
            .map(|j| {
                let mut set = Vec::new();
                for _ in 0..5 {
                    let m = random_deviation_mechanism(
                        &g,
                        j,
                        &mechanisms,
                        std::slice::from_ref(&punish[j]),
                        2,
                        200,
                        &caps,
                        1e-9,
                        &mut rng,
                    )
                    .unwrap()
                    .expect("a deviation with a punishing equilibrium");
                    set.push(m);
                }
                set.push(full_menu_type_and_dm(&g, j, &mechanisms, &caps, 1e-9).unwrap());
                set
            })
            .collect();
        random_devs += 10;
        let cand = Candidate {
            on_path: PureStrategyProfile::truthful(&g, &mechanisms),
            mechanisms,
            deviations,
        };
        let v = check_equilibrium_notion(&g, &cand, Notion::Robust, &caps, 1e-6).unwrap();
        if v.status == NotionStatus::Holds {
            holds += 1;
        } else {
            failures.push(format!("game {n}: {}", v.status.as_str()));
        }
    }
    Outcome {
        pass: holds == games,
        detail: format!(
            "{holds}/{games} games hold against {random_devs} random deviations plus full menus{}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join(", ")) }
        ),
    }
}

fn branch_logic() -> Outcome {
    let n_p = 3;
    let (mut checked, mut errors) = (0, 0);
    for n_agents in [3usize, 4] {
        let g = FiniteGame::from_fn(
            catalog::binary_principals(n_p),
            catalog::singleton_agents(n_agents),
            vec![1.0],
            |_, _, _, _| 0.0,
            |_, _, _| 0.0,
        )
        .unwrap();
        for k in 0..n_p {
            let row = |p: f64| DirectMechanism::constant(k, 1, &[p, 1.0 - p]).unwrap();
            let target = row(0.5);
            let punish: Vec<(usize, DirectMechanism)> = (0..n_p)
                .filter(|&j| j != k)
                .map(|j| (j, row(0.1 * (j + 1) as f64)))
                .collect();
            let gamma = build_deviator_reporting(&g, k, &target, &punish).unwrap();
            let total = n_p.pow(n_agents as u32);
            for code in 0..total {
                let named: Vec<usize> = (0..n_agents).map(|i| (code / n_p.pow(i as u32)) % n_p).collect();
                let counts: Vec<usize> = (0..n_p).map(|j| named.iter().filter(|&&l| l == j).count()).collect();
                let expected = (0..n_p).find(|&j| j != k && counts[j] * 2 > n_agents);
                let got = deviator_reporting_branch(k, n_p, &named);
                let outcome = gamma.outcome(0, &named);
                let want = match expected {
                    Some(j) => punish.iter().find(|(l, _)| *l == j).unwrap().1.row(0).to_vec(),
                    None => target.row(0).to_vec(),
                };
                checked += 1;
                if got != expected || outcome != want.as_slice() {
                    errors += 1;
                }
            }
            for l in 0..n_p {
                let unanimous = vec![l; n_agents];
                let base = deviator_reporting_branch(k, n_p, &unanimous);
                for i in 0..n_agents {
                    for flip in 0..n_p {
                        let mut v = unanimous.clone();
                        v[i] = flip;
                        checked += 1;
                        if deviator_reporting_branch(k, n_p, &v) != base {
                            errors += 1;
                        }
                    }
                }
            }
        }
    }
    Outcome {
        pass: errors == 0,
        detail: format!("{checked} report vectors and flips, {errors} errors"),
    }
}

fn szentes() -> Outcome {
    let mut rng = catalog::rng(909);
    let (mut contracts, mut checked, mut errors) = (0, 0u64, 0);
    while contracts < 50 {
        let n_agents = rng.random_range(1..=3);
        let n_a = rng.random_range(2..=3);
        let agent_messages: Vec<Vec<String>> = (0..n_agents)
            .map(|_| (0..rng.random_range(1..=3)).map(|m| format!("m{m}")).collect())
            .collect();
        let n_m: usize = agent_messages.iter().map(Vec::len).product();
        let pool: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let w: Vec<f64> = (0..n_a).map(|_| rng.random::<f64>() + 1e-3).collect();
                let s: f64 = w.iter().sum();
                w.into_iter().map(|x| x / s).collect()
            })
            .collect();
        let sets: Vec<Vec<Vec<f64>>> = (0..n_m)
            .map(|_| {
                let mut members: Vec<usize> = (0..pool.len()).filter(|_| rng.random_bool(0.5)).collect();
                if members.is_empty() {
                    members.push(rng.random_range(0..pool.len()));
                }
                members.iter().map(|&p| pool[p].clone()).collect()
            })
            .collect();
        let h = SetValuedContract::new(0, agent_messages, sets).unwrap();
        let (gamma, nesting) = match nest_szentes_contract(&h) {
            Ok(x) => x,
            Err(MechanismError::SelectionSpaceTooLarge { .. }) => continue,
            Err(e) => panic!("{e}"),
        };
        if nesting.selections.len() > 10_000 {
            continue;
        }
        contracts += 1;
        let agent_space =
            ProfileSpace::new((0..gamma.num_agents()).map(|i| gamma.num_agent_messages(i)).collect());
        for m0 in 0..gamma.num_principal_messages() {
            for m in agent_space.iter() {
                checked += 1;
                if !h.set(&m).iter().any(|d| d.as_slice() == gamma.outcome(m0, &m)) {
                    errors += 1;
                }
            }
        }
    }
    Outcome {
        pass: errors == 0,
        detail: format!("{contracts} contracts, {checked} (selection, message) pairs, {errors} outside h(m)"),
    }
}

fn monte_carlo() -> Outcome {
    let g = mp2();
    let mechs: Vec<GeneralMechanism> = (0..2)
        .map(|k| GeneralMechanism::from_direct(&g, &DirectMechanism::uniform(k, 1, 2)).unwrap())
        .collect();
    let s = PureStrategyProfile::truthful(&g, &mechs).to_mixed(&mechs);
    let r = simulate(&g, &mechs, &s, 100_000, 1010).unwrap();
    let players: Vec<_> = r.principals.iter().chain(&r.agents).collect();
    let off = players
        .iter()
        .filter(|p| (p.mean - p.expected).abs() > 3.0 * p.std_error + 1e-12)
        .count();
    let worst = players
        .iter()
        .map(|p| if p.std_error > 0.0 { (p.mean - p.expected).abs() / p.std_error } else { 0.0 })
        .fold(0.0, f64::max);
    Outcome {
        pass: off == 0,
        detail: format!("{} players, worst deviation {worst:.2} standard errors", players.len()),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, u64, fn() -> Outcome); 10] = [
        ("product structure of joint BIC", 60, product_structure),
        ("convexity of BIC polytopes", 10, convexity),
        ("continuation equilibria induce BIC mechanisms", 120, induced_bic),
        ("minmax equals maxmin with two principals", 120, sion),
        ("certified minmax/maxmin gap with three principals", 600, gap_search),
        ("payoffs below minmax are not robust", 300, lower_bound),
        ("deviator-reporting profiles are robust", 600, construction),
        ("deviator-reporting branch logic", 5, branch_logic),
        ("set-valued contract nesting", 30, szentes),
        ("Monte Carlo consistency", 10, monte_carlo),
    ];
    let mut failed = 0;
    for (n, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(*limit);
        let pass = out.pass && in_time;
        failed += usize::from(!pass);
        println!(
            "criterion {:>2} {:<50} {}  [{}] {:.1}s (limit {}s{})",
            n + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64(),
            limit,
            if in_time { "" } else { ", exceeded" }
        );
    }
    println!("acceptance: {} passed, {} failed", criteria.len() - failed, failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
