use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

use super::{best_response_unchecked, CertificateKind, SolverError, ValueCertificate};
use crate::bic::{self, BicError, BicPolytope, DEFAULT_DIM_CAP};
use crate::game::{DirectMechanism, FiniteGame, ProfileSpace};
use crate::lp::{self, Bounds, LpProblem, Relation, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MinmaxMode {
    Exact2,
    Grid,
    Alternating,
}

impl MinmaxMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            MinmaxMode::Exact2 => "exact2",
            MinmaxMode::Grid => "grid",
            MinmaxMode::Alternating => "alternating",
        }
    }
}

impl FromStr for MinmaxMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact2" => Ok(MinmaxMode::Exact2),
            "grid" => Ok(MinmaxMode::Grid),
            "alternating" => Ok(MinmaxMode::Alternating),
            other => Err(format!("unknown mode {other:?} (exact2|grid|alternating)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinmaxParams {
    /// Grid step.
    pub delta: f64,
    /// Cap on the number of free grid coordinates.
    pub grid_dim_cap: usize,
    /// Cap on the number of grid points.
    pub grid_point_cap: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Vertex enumeration cap used to evaluate best responses on the grid.
    pub dim_cap: usize,
    pub max_rounds: usize,
}

impl Default for MinmaxParams {
    fn default() -> Self {
        Self {
            delta: 1e-2,
            grid_dim_cap: 4,
            grid_point_cap: 5_000_000,
            restarts: 32,
            seed: 0,
            dim_cap: DEFAULT_DIM_CAP,
            max_rounds: 100,
        }
    }
}

impl MinmaxParams {
    fn validate(&self) -> Result<(), SolverError> {
        if !(self.delta > 0.0 && self.delta <= 0.5) {
            return Err(SolverError::InvalidParameter(format!(
                "grid step {} outside (0, 0.5]",
                self.delta
            )));
        }
        if self.restarts == 0 {
            return Err(SolverError::InvalidParameter(
                "restarts must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Principal `j`'s minmax value `min_{π_{-j}} max_{π_j}` over BIC polytopes.
pub fn minmax(
    game: &FiniteGame,
    j: usize,
    mode: MinmaxMode,
    params: &MinmaxParams,
) -> Result<ValueCertificate, SolverError> {
    params.validate()?;
    let polys: Vec<BicPolytope> = (0..game.num_principals())
        .map(|k| BicPolytope::new(game, k))
        .collect();
    match mode {
        MinmaxMode::Exact2 => exact2(game, j, &polys),
        MinmaxMode::Grid => grid(game, j, &polys, params),
        MinmaxMode::Alternating => alternating(game, j, &polys, params),
    }
}

/// The minimising witness `π_{-j}` and `j`'s best-response value against it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Punishment {
    pub others: Vec<DirectMechanism>,
    pub value: f64,
    pub certificate: ValueCertificate,
}

pub fn punishment_profile(
    game: &FiniteGame,
    j: usize,
    mode: MinmaxMode,
    params: &MinmaxParams,
) -> Result<Punishment, SolverError> {
    let certificate = minmax(game, j, mode, params)?;
    Ok(Punishment {
        others: certificate.witness.clone(),
        value: certificate.witness_value,
        certificate,
    })
}

/// `T[x][a_j][a_k] = F(x) Σ v_j(a, x) Π_{l ∉ {j,k}} p_l(x, a_l)`, the
/// bilinear form of `j`'s payoff in `(π_j, π_k)` with every other
/// principal's mechanism taken from `profile`.
pub(crate) fn bilinear_tensor(
    game: &FiniteGame,
    j: usize,
    k: usize,
    profile: &[DirectMechanism],
) -> Vec<Vec<Vec<f64>>> {
    let n_j = game.num_actions(j);
    let n_k = game.num_actions(k);
    let actions = game.action_space();
    let mut digits = vec![0usize; game.num_principals()];
    let mut out = vec![vec![vec![0.0; n_k]; n_j]; game.num_profiles()];
    for (x, block) in out.iter_mut().enumerate() {
        let f = game.prior()[x];
        if f == 0.0 {
            continue;
        }
        for a in 0..actions.len() {
            actions.decode_into(a, &mut digits);
            let mut w = f;
            for (l, &d) in digits.iter().enumerate() {
                if l != j && l != k {
                    w *= profile[l].prob(x, d);
                }
            }
            if w != 0.0 {
                block[digits[j]][digits[k]] += w * game.principal_payoff(j, a, x);
            }
        }
    }
    out
}

/// `min_{p_k ∈ P_k} max_{p_j ∈ P_j} Σ_x p_j[x]ᵀ T[x] p_k[x]` as one LP: the
/// inner maximum is replaced by its dual, `min Σ_x z_x` subject to
/// `z_x - Σ_r y_r G_r[x, a_j] >= (T[x] p_k[x])[a_j]`, `y >= 0`.
pub(crate) fn saddle_lp(
    poly_j: &BicPolytope,
    poly_k: &BicPolytope,
    tensor: &[Vec<Vec<f64>>],
) -> Result<(f64, DirectMechanism), SolverError> {
    let n_x = poly_j.num_profiles();
    let n_j = poly_j.num_actions();
    let n_k = poly_k.num_actions();
    let rows: Vec<&bic::IcRow> = poly_j
        .ic_rows()
        .iter()
        .filter(|r| r.coeffs.iter().any(|c| *c != 0.0))
        .collect();
    let pk_vars = n_x * n_k;
    let z0 = pk_vars;
    let y0 = z0 + n_x;
    let total = y0 + rows.len();
    let mut objective = vec![0.0; total];
    for v in objective.iter_mut().skip(z0).take(n_x) {
        *v = 1.0;
    }
    let mut problem = LpProblem::new(Sense::Minimize, objective);
    for x in 0..n_x {
        problem.set_bounds(z0 + x, Bounds::FREE);
    }
    poly_k.add_to_lp(&mut problem, 0);
    for x in 0..n_x {
        for a_j in 0..n_j {
            let mut coeffs = vec![0.0; total];
            coeffs[z0 + x] = 1.0;
            for (r, row) in rows.iter().enumerate() {
                coeffs[y0 + r] = -row.coeffs[x * n_j + a_j];
            }
            for a_k in 0..n_k {
                coeffs[x * n_k + a_k] = -tensor[x][a_j][a_k];
            }
            problem.add(coeffs, Relation::Ge, 0.0);
        }
    }
    let solution = lp::solve_lp(&problem)?;
    let mechanism = DirectMechanism::from_flat(poly_k.owner(), n_k, &solution.x[..pk_vars]);
    Ok((solution.value, mechanism))
}

fn exact2(
    game: &FiniteGame,
    j: usize,
    polys: &[BicPolytope],
) -> Result<ValueCertificate, SolverError> {
    if game.num_principals() != 2 {
        return Err(SolverError::ModeUnsupported {
            mode: "exact2",
            num_principals: game.num_principals(),
        });
    }
    let k = 1 - j;
    let placeholders: Vec<DirectMechanism> = (0..2)
        .map(|l| DirectMechanism::uniform(l, game.num_profiles(), game.num_actions(l)))
        .collect();
    let tensor = bilinear_tensor(game, j, k, &placeholders);
    let (value, punisher) = saddle_lp(&polys[j], &polys[k], &tensor)?;
    let others = vec![punisher];
    let witness_value = best_response_unchecked(game, &polys[j], &others)?.value;
    Ok(ValueCertificate {
        principal: j,
        kind: CertificateKind::ExactLp,
        value,
        gap_bound: 0.0,
        witness: others,
        witness_value,
    })
}

struct GridBlock {
    principal: usize,
    profile: usize,
    options: Vec<Vec<f64>>,
}

/// Integer vectors of length `free` with sum at most `n`, as distributions
/// of length `free + 1` (the last coordinate takes the remainder).
fn grid_options(free: usize, n: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut current = vec![0usize; free];
    fn rec(pos: usize, left: usize, n: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if pos == current.len() {
            let mut dist: Vec<f64> = current.iter().map(|&c| c as f64 / n as f64).collect();
            dist.push(left as f64 / n as f64);
            out.push(dist);
            return;
        }
        for c in 0..=left {
            current[pos] = c;
            rec(pos + 1, left - c, n, current, out);
        }
    }
    rec(0, n, n, &mut current, &mut out);
    out
}

#[derive(Clone, Copy)]
struct GridBest {
    relaxed: Option<(f64, usize)>,
    strict: Option<(f64, usize)>,
}

fn better(a: Option<(f64, usize)>, b: Option<(f64, usize)>) -> Option<(f64, usize)> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(p), Some(q)) => {
            if q.0 < p.0 || (q.0 == p.0 && q.1 < p.1) {
                Some(q)
            } else {
                Some(p)
            }
        }
    }
}

/// Certified lower bound from a uniform grid over the opponents' free
/// coordinates.
///
/// A grid point is kept if every opponent incentive row is at least minus
/// the most that rounding a feasible point down onto the grid can cost it,
/// so the nearest-below grid point of the true minimiser is always kept.
/// The minimum over kept points, less the Lipschitz slack of that rounding,
/// bounds the minmax value from below. Points that are feasible outright
/// supply the witness, whose best-response value bounds it from above.
fn grid(
    game: &FiniteGame,
    j: usize,
    polys: &[BicPolytope],
    params: &MinmaxParams,
) -> Result<ValueCertificate, SolverError> {
    let n_x = game.num_profiles();
    let free_dim: usize = (0..game.num_principals())
        .filter(|&k| k != j)
        .map(|k| n_x * (game.num_actions(k) - 1))
        .sum();
    if free_dim > params.grid_dim_cap {
        return Err(SolverError::DimensionTooLarge {
            what: "grid free dimension",
            size: free_dim,
            cap: params.grid_dim_cap,
        });
    }
    let steps = {
        let r = (1.0 / params.delta).round();
        if (r * params.delta - 1.0).abs() <= 1e-9 {
            r as usize
        } else {
            (1.0 / params.delta).ceil() as usize
        }
    };
    let delta = 1.0 / steps as f64;

    let mut blocks = Vec::new();
    for k in (0..game.num_principals()).filter(|&k| k != j) {
        let options = grid_options(game.num_actions(k) - 1, steps);
        for x in 0..n_x {
            blocks.push(GridBlock {
                principal: k,
                profile: x,
                options: options.clone(),
            });
        }
    }
    let space = ProfileSpace::new(blocks.iter().map(|b| b.options.len()).collect());
    let points = space.len();
    if points > params.grid_point_cap || points == usize::MAX {
        return Err(SolverError::DimensionTooLarge {
            what: "grid points",
            size: points,
            cap: params.grid_point_cap,
        });
    }

    // Relaxation allowance per opponent row: Σ_v |coef_v| dev_v with
    // dev = δ on free coordinates and (|A_k|-1)δ on the remainder.
    let opponent_rows: Vec<(usize, Vec<(&bic::IcRow, f64)>)> = (0..game.num_principals())
        .filter(|&k| k != j)
        .map(|k| {
            let n_k = game.num_actions(k);
            let rows = polys[k]
                .ic_rows()
                .iter()
                .filter(|r| r.coeffs.iter().any(|c| *c != 0.0))
                .map(|r| {
                    let allowance: f64 = r
                        .coeffs
                        .iter()
                        .enumerate()
                        .map(|(v, c)| {
                            let dev = if v % n_k == n_k - 1 {
                                (n_k - 1) as f64 * delta
                            } else {
                                delta
                            };
                            c.abs() * dev
                        })
                        .sum();
                    (r, allowance)
                })
                .collect();
            (k, rows)
        })
        .collect();

    let own_vertices = match bic::enumerate_vertices(&polys[j], params.dim_cap) {
        Ok(v) => Some(v.iter().map(DirectMechanism::to_flat).collect::<Vec<_>>()),
        Err(BicError::DimensionTooLarge { .. }) => None,
        Err(e) => return Err(e.into()),
    };

    let weighted: Vec<Vec<f64>> = (0..game.action_space().len())
        .map(|a| {
            (0..n_x)
                .map(|x| game.prior()[x] * game.principal_payoff(j, a, x))
                .collect()
        })
        .collect();
    let n_j = game.num_actions(j);
    let num_principals = game.num_principals();

    let build = |idx: usize| -> Vec<DirectMechanism> {
        let mut rows: Vec<Vec<Vec<f64>>> = (0..num_principals)
            .map(|k| vec![Vec::new(); if k == j { 0 } else { n_x }])
            .collect();
        for (b, block) in blocks.iter().enumerate() {
            rows[block.principal][block.profile] = block.options[space.component(idx, b)].clone();
        }
        rows.into_iter()
            .enumerate()
            .filter(|&(k, _)| k != j)
            .map(|(k, r)| DirectMechanism::new(k, r).expect("grid rows are distributions"))
            .collect()
    };

    let evaluate = |idx: usize| -> Result<GridBest, SolverError> {
        let others = build(idx);
        let mut relaxed_ok = true;
        let mut strict_ok = true;
        for ((_, rows), m) in opponent_rows.iter().zip(&others) {
            let flat = m.to_flat();
            for (row, allowance) in rows {
                let v = row.eval(&flat);
                if v < -1e-9 {
                    strict_ok = false;
                }
                if v < -allowance - 1e-12 {
                    relaxed_ok = false;
                    break;
                }
            }
            if !relaxed_ok {
                break;
            }
        }
        if !relaxed_ok {
            return Ok(GridBest {
                relaxed: None,
                strict: None,
            });
        }
        let value = match &own_vertices {
            Some(vertices) => {
                let mut coeffs = vec![0.0; n_x * n_j];
                let actions = game.action_space();
                for (a, row) in weighted.iter().enumerate() {
                    for (x, &fv) in row.iter().enumerate() {
                        if fv == 0.0 {
                            continue;
                        }
                        let mut w = fv;
                        for (slot, m) in others.iter().enumerate() {
                            let k = if slot < j { slot } else { slot + 1 };
                            w *= m.prob(x, actions.component(a, k));
                            if w == 0.0 {
                                break;
                            }
                        }
                        coeffs[x * n_j + actions.component(a, j)] += w;
                    }
                }
                vertices
                    .iter()
                    .map(|v| v.iter().zip(&coeffs).map(|(p, c)| p * c).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max)
            }
            None => best_response_unchecked(game, &polys[j], &others)?.value,
        };
        Ok(GridBest {
            relaxed: Some((value, idx)),
            strict: strict_ok.then_some((value, idx)),
        })
    };

    let best = (0..points)
        .into_par_iter()
        .map(evaluate)
        .try_reduce(
            || GridBest {
                relaxed: None,
                strict: None,
            },
            |a, b| {
                Ok(GridBest {
                    relaxed: better(a.relaxed, b.relaxed),
                    strict: better(a.strict, b.strict),
                })
            },
        )?;
    let (relaxed_min, _) = best.relaxed.expect("constant grid points are feasible");
    let (_, strict_idx) = best.strict.expect("constant grid points are feasible");

    let max_abs: Vec<f64> = (0..n_x)
        .map(|x| {
            (0..game.action_space().len())
                .map(|a| game.principal_payoff(j, a, x).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let weighted_max: f64 = (0..n_x).map(|x| game.prior()[x] * max_abs[x]).sum();
    let free_blocks = blocks.iter().filter(|b| b.options[0].len() > 1).count();
    let crude = weighted_max * free_blocks as f64 * delta * free_dim as f64;
    let rigorous: f64 = blocks
        .iter()
        .map(|b| {
            let n_k = b.options[0].len();
            game.prior()[b.profile] * max_abs[b.profile] * 2.0 * (n_k - 1) as f64 * delta
        })
        .sum();
    let slack = crude.max(rigorous);

    let witness = build(strict_idx);
    let witness_value = best_response_unchecked(game, &polys[j], &witness)?.value;
    Ok(ValueCertificate {
        principal: j,
        kind: CertificateKind::GridCertifiedLowerBound,
        value: relaxed_min - slack,
        gap_bound: slack,
        witness,
        witness_value,
    })
}

/// Block-coordinate descent on `π_{-j}`. Each block step solves the exact
/// saddle LP for one opponent with the others held fixed, so `j`'s
/// best-response value never increases along a run. Ties between runs go
/// to the lowest run index.
fn alternating(
    game: &FiniteGame,
    j: usize,
    polys: &[BicPolytope],
    params: &MinmaxParams,
) -> Result<ValueCertificate, SolverError> {
    // Run r < R starts from sample_bic(seed + r); run R starts from the
    // uniform constant profile, since vertex starts often sit on plateaus.
    let runs: Vec<Result<(f64, Vec<DirectMechanism>), SolverError>> = (0..=params.restarts)
        .into_par_iter()
        .map(|r| {
            let seed = params.seed.wrapping_add(r as u64);
            let mut profile = Vec::with_capacity(polys.len());
            for (k, poly) in polys.iter().enumerate() {
                let uniform = DirectMechanism::uniform(k, game.num_profiles(), game.num_actions(k));
                profile.push(if k == j || r == params.restarts {
                    uniform
                } else {
                    bic::sample_bic(poly, seed)?
                });
            }
            let mut value = f64::INFINITY;
            for _ in 0..params.max_rounds.max(1) {
                let start = value;
                for k in (0..polys.len()).filter(|&k| k != j) {
                    let tensor = bilinear_tensor(game, j, k, &profile);
                    let (v, m) = saddle_lp(&polys[j], &polys[k], &tensor)?;
                    if v < value {
                        value = v;
                        profile[k] = m;
                    }
                }
                if value >= start - 1e-12 {
                    break;
                }
            }
            let others = super::others_of(j, &profile);
            let value = best_response_unchecked(game, &polys[j], &others)?.value;
            Ok((value, others))
        })
        .collect();
    let mut best: Option<(f64, Vec<DirectMechanism>)> = None;
    for run in runs {
        let (value, others) = run?;
        if best.as_ref().is_none_or(|(v, _)| value < *v) {
            best = Some((value, others));
        }
    }
    let (value, witness) = best.expect("restarts >= 1");
    Ok(ValueCertificate {
        principal: j,
        kind: CertificateKind::AlternatingUpperBound,
        value,
        gap_bound: 0.0,
        witness,
        witness_value: value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{self, mp2};

    #[test]
    fn mp2_exact2() {
        let cert = minmax(&mp2(), 0, MinmaxMode::Exact2, &MinmaxParams::default()).unwrap();
        assert_eq!(cert.kind, CertificateKind::ExactLp);
        assert!((cert.value - 0.5).abs() < 1e-12);
        assert!((cert.witness[0].row(0)[0] - 0.5).abs() < 1e-9);
        assert!((cert.witness_value - 0.5).abs() < 1e-9);
    }

    #[test]
    fn exact2_requires_two_principals() {
        let g = catalog::GapFamily::gap3().sample(&mut catalog::rng(1));
        assert!(matches!(
            minmax(&g, 0, MinmaxMode::Exact2, &MinmaxParams::default()),
            Err(SolverError::ModeUnsupported { .. })
        ));
    }

    #[test]
    fn mp2_grid_brackets_one_half() {
        let params = MinmaxParams {
            delta: 1e-3,
            ..MinmaxParams::default()
        };
        let cert = minmax(&mp2(), 0, MinmaxMode::Grid, &params).unwrap();
        assert!(cert.value <= 0.5 && cert.value > 0.49);
        assert!((cert.witness_value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mp2_alternating() {
        let params = MinmaxParams {
            restarts: 4,
            ..MinmaxParams::default()
        };
        let cert = minmax(&mp2(), 0, MinmaxMode::Alternating, &params).unwrap();
        assert!((cert.value - 0.5).abs() < 1e-9);
    }

    #[test]
    fn pure_gap3_minmax_is_three_quarters() {
        let g = catalog::GapFamily::Gap3 {
            min_seed_weight: 1.0,
        }
        .sample(&mut catalog::rng(0));
        let params = MinmaxParams {
            restarts: 8,
            ..MinmaxParams::default()
        };
        let alt = minmax(&g, 0, MinmaxMode::Alternating, &params).unwrap();
        let grid = minmax(&g, 0, MinmaxMode::Grid, &params).unwrap();
        // Opponents both mixing 1/2 leave max(q2 + (1-q2)(1-q3), q3 + (1-q2)(1-q3)) = 3/4.
        assert!((alt.value - 0.75).abs() < 1e-6);
        assert!(grid.value <= 0.75 + 1e-9);
        assert!(grid.value > 0.7);
        assert!((grid.witness_value - 0.75).abs() < 1e-9);
    }

    #[test]
    fn grid_dimension_cap() {
        let g = catalog::random_separable_game(
            &mut catalog::rng(3),
            &catalog::RandomGameSpec::default()
                .with_principals(2..=2)
                .with_agents(2..=2)
                .with_types(2..=2)
                .with_actions(3..=3),
        );
        assert!(matches!(
            minmax(&g, 0, MinmaxMode::Grid, &MinmaxParams::default()),
            Err(SolverError::DimensionTooLarge { .. })
        ));
    }

    #[test]
    fn constant_payoff_all_modes() {
        let g = catalog::with_constant_payoffs(&mp2(), 0.3);
        for mode in [MinmaxMode::Exact2, MinmaxMode::Grid, MinmaxMode::Alternating] {
            let params = MinmaxParams {
                restarts: 2,
                ..MinmaxParams::default()
            };
            let cert = minmax(&g, 0, mode, &params).unwrap();
            assert!((cert.witness_value - 0.3).abs() < 1e-12, "{mode:?}");
            if mode == MinmaxMode::Exact2 {
                assert!((cert.value - 0.3).abs() < 1e-12);
                assert_eq!(cert.gap_bound, 0.0);
            }
        }
    }

    #[test]
    fn punishment_in_mp2() {
        let p = punishment_profile(&mp2(), 0, MinmaxMode::Exact2, &MinmaxParams::default())
            .unwrap();
        assert!((p.value - 0.5).abs() < 1e-9);
        assert!((p.others[0].row(0)[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn grid_options_count() {
        assert_eq!(grid_options(1, 4).len(), 5);
        assert_eq!(grid_options(2, 4).len(), 15);
        assert_eq!(grid_options(0, 4), vec![vec![1.0]]);
    }
}
