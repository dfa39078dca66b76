use serde::{Deserialize, Serialize};

use super::minmax::{bilinear_tensor, saddle_lp};
use super::{assemble_profile, CertificateKind, SolverError, ValueCertificate};
use crate::bic::{self, BicError, BicPolytope, DEFAULT_DIM_CAP};
use crate::game::{DirectMechanism, FiniteGame, ProfileSpace};
use crate::lp::{self, Bounds, LpProblem, Relation, Sense};

/// Above this many vertex products the exact LP is not attempted.
const VERTEX_PRODUCT_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxminParams {
    pub dim_cap: usize,
    /// Fail instead of falling back to the heuristic.
    pub force_exact: bool,
    pub restarts: usize,
    pub seed: u64,
    pub max_rounds: usize,
}

impl Default for MaxminParams {
    fn default() -> Self {
        Self {
            dim_cap: DEFAULT_DIM_CAP,
            force_exact: false,
            restarts: 32,
            seed: 0,
            max_rounds: 50,
        }
    }
}

/// `max_{π_j} min_{π_{-j}}` over the BIC polytopes.
///
/// The objective is linear in each opponent's mechanism, so the inner
/// minimum is attained at a product of opponent vertices; with those
/// enumerated the whole problem is one LP in `(π_j, t)`.
pub fn maxmin(
    game: &FiniteGame,
    j: usize,
    params: &MaxminParams,
) -> Result<ValueCertificate, SolverError> {
    let polys: Vec<BicPolytope> = (0..game.num_principals())
        .map(|k| BicPolytope::new(game, k))
        .collect();
    let mut vertex_sets = Vec::new();
    let mut too_large: Option<SolverError> = None;
    for (k, poly) in polys.iter().enumerate() {
        if k == j {
            continue;
        }
        match bic::enumerate_vertices(poly, params.dim_cap) {
            Ok(v) => vertex_sets.push(v),
            Err(BicError::DimensionTooLarge { vars, cap }) => {
                too_large = Some(SolverError::DimensionTooLarge {
                    what: "opponent polytope variables",
                    size: vars,
                    cap,
                });
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    if too_large.is_none() {
        let products: usize = vertex_sets
            .iter()
            .map(Vec::len)
            .fold(1usize, |a, b| a.saturating_mul(b));
        if products > VERTEX_PRODUCT_CAP {
            too_large = Some(SolverError::DimensionTooLarge {
                what: "opponent vertex products",
                size: products,
                cap: VERTEX_PRODUCT_CAP,
            });
        }
    }
    match too_large {
        None => exact(game, j, &polys[j], &vertex_sets),
        Some(_) if game.num_principals() == 2 => exact_dual(game, j, &polys),
        Some(e) if params.force_exact => Err(e),
        Some(_) => heuristic(game, j, &polys, params),
    }
}

/// Two principals: `max_{π_j} min_{π_k} V_j = -min_{π_j} max_{π_k} (-V_j)`,
/// one LP after dualising the inner maximisation over `Π_k^B`.
fn exact_dual(
    game: &FiniteGame,
    j: usize,
    polys: &[BicPolytope],
) -> Result<ValueCertificate, SolverError> {
    let k = 1 - j;
    let placeholders: Vec<DirectMechanism> = (0..2)
        .map(|l| DirectMechanism::uniform(l, game.num_profiles(), game.num_actions(l)))
        .collect();
    let tensor = bilinear_tensor(game, j, k, &placeholders);
    let flipped: Vec<Vec<Vec<f64>>> = tensor
        .iter()
        .map(|per_x| {
            (0..game.num_actions(k))
                .map(|a_k| per_x.iter().map(|row| -row[a_k]).collect())
                .collect()
        })
        .collect();
    let (neg, mechanism) = saddle_lp(&polys[k], &polys[j], &flipped)?;
    Ok(ValueCertificate {
        principal: j,
        kind: CertificateKind::ExactLp,
        value: -neg,
        gap_bound: 0.0,
        witness: vec![mechanism],
        witness_value: -neg,
    })
}

fn exact(
    game: &FiniteGame,
    j: usize,
    poly: &BicPolytope,
    vertex_sets: &[Vec<DirectMechanism>],
) -> Result<ValueCertificate, SolverError> {
    let product = ProfileSpace::new(vertex_sets.iter().map(Vec::len).collect());
    let placeholder = DirectMechanism::uniform(j, game.num_profiles(), game.num_actions(j));
    let mut cuts: Vec<Vec<f64>> = Vec::new();
    let mut digits = vec![0usize; vertex_sets.len()];
    for w in 0..product.len() {
        product.decode_into(w, &mut digits);
        let others: Vec<DirectMechanism> = digits
            .iter()
            .zip(vertex_sets)
            .map(|(&d, set)| set[d].clone())
            .collect();
        let profile = assemble_profile(j, &others, placeholder.clone());
        let c: Vec<f64> = game
            .linear_coefficients(j, j, &profile)?
            .into_iter()
            .flatten()
            .collect();
        if !cuts.contains(&c) {
            cuts.push(c);
        }
    }
    let mechanism = solve_cut_lp(poly, &cuts)?;
    let value = guarantee(&mechanism, &cuts);
    Ok(ValueCertificate {
        principal: j,
        kind: CertificateKind::VertexProductExact,
        value,
        gap_bound: 0.0,
        witness: vec![mechanism],
        witness_value: value,
    })
}

/// `max t` s.t. `t <= c·p` for every cut, `p` in the polytope.
fn solve_cut_lp(poly: &BicPolytope, cuts: &[Vec<f64>]) -> Result<DirectMechanism, SolverError> {
    let n = poly.num_vars();
    let mut objective = vec![0.0; n + 1];
    objective[n] = 1.0;
    let mut problem = LpProblem::new(Sense::Maximize, objective);
    problem.set_bounds(n, Bounds::FREE);
    poly.add_to_lp(&mut problem, 0);
    for c in cuts {
        let mut row: Vec<f64> = c.iter().map(|v| -v).collect();
        row.push(1.0);
        problem.add(row, Relation::Le, 0.0);
    }
    let solution = lp::solve_lp(&problem)?;
    Ok(DirectMechanism::from_flat(
        poly.owner(),
        poly.num_actions(),
        &solution.x[..n],
    ))
}

fn guarantee(mechanism: &DirectMechanism, cuts: &[Vec<f64>]) -> f64 {
    let flat = mechanism.to_flat();
    cuts.iter()
        .map(|c| c.iter().zip(&flat).map(|(a, b)| a * b).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// Cutting planes on `π_j` against opponent responses found by
/// block-coordinate descent. The reported value is the smallest payoff the
/// descent found against the final mechanism, so it is only an estimate of
/// that mechanism's guarantee.
fn heuristic(
    game: &FiniteGame,
    j: usize,
    polys: &[BicPolytope],
    params: &MaxminParams,
) -> Result<ValueCertificate, SolverError> {
    let placeholder = DirectMechanism::uniform(j, game.num_profiles(), game.num_actions(j));
    let mut mechanism = bic::sample_bic(&polys[j], params.seed)?;
    let mut cuts: Vec<Vec<f64>> = Vec::new();
    let mut best: Option<(f64, DirectMechanism)> = None;
    for _ in 0..params.max_rounds.max(1) {
        let (found, others) = min_response(game, j, &mechanism, polys, params)?;
        if best.as_ref().is_none_or(|(v, _)| found > *v) {
            best = Some((found, mechanism.clone()));
        }
        let profile = assemble_profile(j, &others, placeholder.clone());
        let c: Vec<f64> = game
            .linear_coefficients(j, j, &profile)?
            .into_iter()
            .flatten()
            .collect();
        if cuts.contains(&c) {
            break;
        }
        cuts.push(c);
        let next = solve_cut_lp(&polys[j], &cuts)?;
        let bound = guarantee(&next, &cuts);
        mechanism = next;
        if bound <= best.as_ref().map_or(f64::NEG_INFINITY, |b| b.0) + 1e-9 {
            break;
        }
    }
    let (value, mechanism) = best.expect("at least one round");
    Ok(ValueCertificate {
        principal: j,
        kind: CertificateKind::AlternatingHeuristic,
        value,
        gap_bound: -1.0,
        witness: vec![mechanism],
        witness_value: value,
    })
}

/// Lowest payoff to `j` found by block descent over the opponents.
fn min_response(
    game: &FiniteGame,
    j: usize,
    own: &DirectMechanism,
    polys: &[BicPolytope],
    params: &MaxminParams,
) -> Result<(f64, Vec<DirectMechanism>), SolverError> {
    let mut best: Option<(f64, Vec<DirectMechanism>)> = None;
    for r in 0..params.restarts.max(1) {
        let mut profile: Vec<DirectMechanism> = Vec::with_capacity(polys.len());
        for (k, poly) in polys.iter().enumerate() {
            profile.push(if k == j {
                own.clone()
            } else {
                bic::sample_bic(poly, params.seed.wrapping_add(r as u64))?
            });
        }
        let mut value = game.expected_principal_payoff(j, &profile)?;
        for _ in 0..params.max_rounds.max(1) {
            for (k, poly) in polys.iter().enumerate() {
                if k == j {
                    continue;
                }
                let objective: Vec<f64> = game
                    .linear_coefficients(j, k, &profile)?
                    .into_iter()
                    .flatten()
                    .collect();
                let mut problem = LpProblem::new(Sense::Minimize, objective);
                poly.add_to_lp(&mut problem, 0);
                let solution = lp::solve_lp(&problem)?;
                profile[k] = DirectMechanism::from_flat(k, poly.num_actions(), &solution.x);
            }
            let next = game.expected_principal_payoff(j, &profile)?;
            let done = next >= value - 1e-12;
            value = value.min(next);
            if done {
                break;
            }
        }
        if best.as_ref().is_none_or(|(v, _)| value < *v) {
            let others = super::others_of(j, &profile);
            best = Some((value, others));
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{self, mp2};

    #[test]
    fn mp2_maxmin_is_one_half() {
        let cert = maxmin(&mp2(), 0, &MaxminParams::default()).unwrap();
        assert_eq!(cert.kind, CertificateKind::VertexProductExact);
        assert!((cert.value - 0.5).abs() < 1e-12);
        assert!((cert.witness[0].row(0)[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_payoff_maxmin() {
        let g = catalog::with_constant_payoffs(&catalog::screen1(), 0.75);
        let cert = maxmin(&g, 0, &MaxminParams::default()).unwrap();
        assert!((cert.value - 0.75).abs() < 1e-12);
    }

    #[test]
    fn pure_gap3_seed_maxmin() {
        let g = catalog::GapFamily::Gap3 {
            min_seed_weight: 1.0,
        }
        .sample(&mut catalog::rng(0));
        let cert = maxmin(&g, 0, &MaxminParams::default()).unwrap();
        // Against (a2, a3) = (1, 0) or (0, 1) principal 1 earns p or 1 - p.
        assert!((cert.value - 0.5).abs() < 1e-9);
    }

    #[test]
    fn two_principals_use_duality_above_the_cap() {
        let g = catalog::random_separable_game(
            &mut catalog::rng(5),
            &catalog::RandomGameSpec::default()
                .with_principals(2..=2)
                .with_agents(2..=2)
                .with_types(2..=2)
                .with_actions(3..=3),
        );
        let exact = maxmin(&g, 0, &MaxminParams::default()).unwrap();
        let dual = maxmin(&g, 0, &MaxminParams { dim_cap: 1, ..MaxminParams::default() }).unwrap();
        assert_eq!(exact.kind, CertificateKind::VertexProductExact);
        assert_eq!(dual.kind, CertificateKind::ExactLp);
        assert!((exact.value - dual.value).abs() < 1e-7);
    }

    #[test]
    fn heuristic_fallback_and_forced_exact() {
        let g = catalog::GapFamily::gap3().sample(&mut catalog::rng(2));
        let params = MaxminParams {
            dim_cap: 1,
            ..MaxminParams::default()
        };
        let cert = maxmin(&g, 0, &params).unwrap();
        assert_eq!(cert.kind, CertificateKind::AlternatingHeuristic);
        assert_eq!(cert.gap_bound, -1.0);
        assert!((0.0..=1.0).contains(&cert.value));

        let forced = MaxminParams {
            force_exact: true,
            ..params
        };
        assert!(matches!(
            maxmin(&g, 0, &forced),
            Err(SolverError::DimensionTooLarge { .. })
        ));
    }
}
