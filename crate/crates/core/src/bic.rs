//! The polytope of individually BIC direct mechanisms for one principal.
//!
//! Variables are the entries `p[x][a]` of the mechanism, flattened
//! profile-major (`x * |A_j| + a`). The simplex equalities and the
//! nonnegativity bounds are implicit; the incentive rows are stored
//! explicitly, one per (agent, positive-mass truth, alternative report).

use fixedbitset::FixedBitSet;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

use crate::catalog;
use crate::game::{DirectMechanism, FiniteGame, GameError};
use crate::lp::{self, Constraint, LpError, LpProblem, Relation, Sense};

/// Default membership tolerance.
pub const BIC_TOL: f64 = 1e-9;
/// Default cap on the number of polytope variables for vertex enumeration.
pub const DEFAULT_DIM_CAP: usize = 12;

const SNAP_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BicError {
    #[error("polytope has {vars} variables, above the enumeration cap {cap}")]
    DimensionTooLarge { vars: usize, cap: usize },
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// `Σ_{x_{-i}} F(x_{-i}|x_i) Σ_a (p[(x_i,x_{-i})][a] - p[(x'_i,x_{-i})][a]) u_{ij}(a, x) >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcRow {
    pub agent: usize,
    pub truth: usize,
    pub report: usize,
    pub coeffs: Vec<f64>,
    /// `(x, x', F(x|x_i) u_{ij}(·, x))` per conditional profile, kept so
    /// evaluation differences rows before weighting.
    terms: Vec<(usize, usize, Vec<f64>)>,
}

impl IcRow {
    /// Row value at a profile-major flattened mechanism.
    pub fn eval(&self, flat: &[f64]) -> f64 {
        let n_a = self.terms.first().map_or(0, |t| t.2.len());
        self.terms
            .iter()
            .map(|(x, x_dev, wu)| {
                wu.iter()
                    .enumerate()
                    .map(|(a, c)| c * (flat[x * n_a + a] - flat[x_dev * n_a + a]))
                    .sum::<f64>()
            })
            .sum()
    }

    fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicPolytope {
    owner: usize,
    num_profiles: usize,
    num_actions: usize,
    ic_rows: Vec<IcRow>,
}

/// The most negative incentive row and its value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcWitness {
    pub agent: usize,
    pub truth: usize,
    pub report: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicVerdict {
    pub ok: bool,
    /// `None` only when the polytope has no incentive rows.
    pub worst: Option<IcWitness>,
}

/// Worst joint misreport: `reports[k]` is the type reported to principal `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointWitness {
    pub agent: usize,
    pub truth: usize,
    pub reports: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileBicVerdict {
    pub ok: bool,
    pub worst: Option<JointWitness>,
}

pub fn build_bic_polytope(game: &FiniteGame, j: usize) -> BicPolytope {
    BicPolytope::new(game, j)
}

impl BicPolytope {
    pub fn new(game: &FiniteGame, j: usize) -> Self {
        let n_a = game.num_actions(j);
        let n_x = game.num_profiles();
        let space = game.type_space();
        let mut ic_rows = Vec::new();
        for i in 0..game.num_agents() {
            for truth in 0..game.num_types(i) {
                let Ok(weights) = game.conditional_weights(i, truth) else {
                    continue;
                };
                for report in 0..game.num_types(i) {
                    if report == truth {
                        continue;
                    }
                    let mut coeffs = vec![0.0; n_x * n_a];
                    let mut terms = Vec::with_capacity(weights.len());
                    for &(x, w) in &weights {
                        let x_dev = space.with_component(x, i, report);
                        let wu: Vec<f64> =
                            (0..n_a).map(|a| w * game.agent_component(i, j, a, x)).collect();
                        for (a, u) in wu.iter().enumerate() {
                            coeffs[x * n_a + a] += u;
                            coeffs[x_dev * n_a + a] -= u;
                        }
                        terms.push((x, x_dev, wu));
                    }
                    ic_rows.push(IcRow {
                        agent: i,
                        truth,
                        report,
                        coeffs,
                        terms,
                    });
                }
            }
        }
        Self {
            owner: j,
            num_profiles: n_x,
            num_actions: n_a,
            ic_rows,
        }
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn num_profiles(&self) -> usize {
        self.num_profiles
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_vars(&self) -> usize {
        self.num_profiles * self.num_actions
    }

    pub fn ic_rows(&self) -> &[IcRow] {
        &self.ic_rows
    }

    /// Simplex equalities plus incentive rows.
    pub fn row_count(&self) -> usize {
        self.num_profiles + self.ic_rows.len()
    }

    /// Number of free coordinates once the simplex equalities are solved out.
    pub fn free_dimension(&self) -> usize {
        self.num_profiles * (self.num_actions - 1)
    }

    /// Appends the polytope's equalities and incentive rows to `lp`, with
    /// the mechanism variables starting at column `offset`.
    pub fn add_to_lp(&self, problem: &mut LpProblem, offset: usize) {
        let total = problem.num_vars();
        for x in 0..self.num_profiles {
            let mut coeffs = vec![0.0; total];
            for a in 0..self.num_actions {
                coeffs[offset + x * self.num_actions + a] = 1.0;
            }
            problem.add(coeffs, Relation::Eq, 1.0);
        }
        for row in &self.ic_rows {
            if row.is_zero() {
                continue;
            }
            let mut coeffs = vec![0.0; total];
            coeffs[offset..offset + row.coeffs.len()].copy_from_slice(&row.coeffs);
            problem.add(coeffs, Relation::Ge, 0.0);
        }
    }

    /// Evaluates every incentive row at `mechanism`.
    pub fn check(&self, mechanism: &DirectMechanism, tol: f64) -> Result<BicVerdict, GameError> {
        if mechanism.num_profiles() != self.num_profiles
            || mechanism.num_actions() != self.num_actions
        {
            return Err(GameError::Shape(format!(
                "mechanism is {}x{}, polytope expects {}x{}",
                mechanism.num_profiles(),
                mechanism.num_actions(),
                self.num_profiles,
                self.num_actions
            )));
        }
        let flat = mechanism.to_flat();
        let mut worst: Option<IcWitness> = None;
        for row in &self.ic_rows {
            let value = row.eval(&flat);
            if worst.as_ref().is_none_or(|w| value < w.value) {
                worst = Some(IcWitness {
                    agent: row.agent,
                    truth: row.truth,
                    report: row.report,
                    value,
                });
            }
        }
        let ok = worst.as_ref().is_none_or(|w| w.value >= -tol);
        Ok(BicVerdict { ok, worst })
    }

    /// Textual H-representation: a header line, the simplex equalities, then
    /// one line per incentive row in (agent, truth, report) order.
    pub fn to_text(&self) -> String {
        let n = self.num_vars();
        let mut out = format!(
            "# principal {} vars {} equalities {} ic_rows {}\n",
            self.owner,
            n,
            self.num_profiles,
            self.ic_rows.len()
        );
        let mut line = |coeffs: &[f64], rel: &str, rhs: f64| {
            let body: Vec<String> = coeffs.iter().map(|c| format!("{c}")).collect();
            let _ = writeln!(out, "{} {rel} {rhs}", body.join(" "));
        };
        for x in 0..self.num_profiles {
            let mut coeffs = vec![0.0; n];
            for a in 0..self.num_actions {
                coeffs[x * self.num_actions + a] = 1.0;
            }
            line(&coeffs, "=", 1.0);
        }
        for row in &self.ic_rows {
            line(&row.coeffs, ">=", 0.0);
        }
        out
    }
}

pub fn is_individually_bic(
    game: &FiniteGame,
    j: usize,
    mechanism: &DirectMechanism,
    tol: f64,
) -> Result<BicVerdict, GameError> {
    game.check_mechanism(j, mechanism)?;
    BicPolytope::new(game, j).check(mechanism, tol)
}

/// Joint truthfulness across all principals: every agent type compares
/// truth-telling with every vector of (possibly different) reports to the
/// principals, using the full joint payoff.
pub fn is_profile_bic(
    game: &FiniteGame,
    profile: &[DirectMechanism],
    tol: f64,
) -> Result<ProfileBicVerdict, GameError> {
    game.check_profile(profile)?;
    let num_j = game.num_principals();
    let space = game.type_space();
    let actions = game.action_space();
    let mut worst: Option<JointWitness> = None;
    let mut digits = vec![0usize; num_j];
    for i in 0..game.num_agents() {
        let joint = game.joint_agent_payoff(i);
        let n_t = game.num_types(i);
        let reports_space = crate::game::ProfileSpace::new(vec![n_t; num_j]);
        // U_i at type profile x when principal k sees profile rows[k].
        let payoff = |x: usize, rows: &[usize]| -> f64 {
            let mut total = 0.0;
            for (a, row) in joint.iter().enumerate() {
                let mut w = 1.0;
                for k in 0..num_j {
                    w *= profile[k].prob(rows[k], actions.component(a, k));
                    if w == 0.0 {
                        break;
                    }
                }
                if w != 0.0 {
                    total += w * row[x];
                }
            }
            total
        };
        for truth in 0..n_t {
            let Ok(weights) = game.conditional_weights(i, truth) else {
                continue;
            };
            let truthful: f64 = weights
                .iter()
                .map(|&(x, w)| w * payoff(x, &vec![x; num_j]))
                .sum();
            for r in 0..reports_space.len() {
                reports_space.decode_into(r, &mut digits);
                if digits.iter().all(|&d| d == truth) {
                    continue;
                }
                let deviated: f64 = weights
                    .iter()
                    .map(|&(x, w)| {
                        let rows: Vec<usize> = digits
                            .iter()
                            .map(|&d| space.with_component(x, i, d))
                            .collect();
                        w * payoff(x, &rows)
                    })
                    .sum();
                let value = truthful - deviated;
                if worst.as_ref().is_none_or(|w| value < w.value) {
                    worst = Some(JointWitness {
                        agent: i,
                        truth,
                        reports: digits.clone(),
                        value,
                    });
                }
            }
        }
    }
    let ok = worst.as_ref().is_none_or(|w| w.value >= -tol);
    Ok(ProfileBicVerdict { ok, worst })
}

#[derive(Clone)]
struct DdVertex {
    point: Vec<f64>,
    tight: FixedBitSet,
}

/// All extreme points of the polytope, lexicographically sorted.
///
/// Incremental double description: start from the vertices of the simplex
/// product and cut with one incentive halfspace at a time. Two vertices are
/// adjacent iff no third vertex is tight on every constraint they share.
pub fn enumerate_vertices(
    poly: &BicPolytope,
    dim_cap: usize,
) -> Result<Vec<DirectMechanism>, BicError> {
    let n = poly.num_vars();
    if n > dim_cap {
        return Err(BicError::DimensionTooLarge {
            vars: n,
            cap: dim_cap,
        });
    }
    let n_a = poly.num_actions;
    let mut rows: Vec<&IcRow> = Vec::new();
    for row in &poly.ic_rows {
        if !row.is_zero() && !rows.iter().any(|r| r.coeffs == row.coeffs) {
            rows.push(row);
        }
    }
    // Constraint ids: 0..n are p_v >= 0, n + r is incentive row r.
    let total_constraints = n + rows.len();
    let tight_of = |point: &[f64], upto: usize| -> FixedBitSet {
        let mut set = FixedBitSet::with_capacity(total_constraints);
        for (v, p) in point.iter().enumerate() {
            if p.abs() <= SNAP_TOL {
                set.insert(v);
            }
        }
        for (r, row) in rows.iter().enumerate().take(upto) {
            if row.eval(point).abs() <= row_tol(row) {
                set.insert(n + r);
            }
        }
        set
    };

    let product = crate::game::ProfileSpace::new(vec![n_a; poly.num_profiles]);
    let mut vertices: Vec<DdVertex> = (0..product.len())
        .map(|idx| {
            let mut point = vec![0.0; n];
            for x in 0..poly.num_profiles {
                point[x * n_a + product.component(idx, x)] = 1.0;
            }
            let tight = tight_of(&point, 0);
            DdVertex { point, tight }
        })
        .collect();

    for (r, row) in rows.iter().enumerate() {
        let tol = row_tol(row);
        let values: Vec<f64> = vertices.iter().map(|v| row.eval(&v.point)).collect();
        let plus: Vec<usize> = (0..vertices.len()).filter(|&v| values[v] > tol).collect();
        let minus: Vec<usize> = (0..vertices.len()).filter(|&v| values[v] < -tol).collect();
        if minus.is_empty() {
            for (v, val) in vertices.iter_mut().zip(&values) {
                if val.abs() <= tol {
                    v.tight.insert(n + r);
                }
            }
            continue;
        }
        let mut next: Vec<DdVertex> = Vec::new();
        for &u in &plus {
            for &w in &minus {
                let mut common = vertices[u].tight.clone();
                common.intersect_with(&vertices[w].tight);
                let blocked = vertices.iter().enumerate().any(|(v, vert)| {
                    v != u && v != w && common.is_subset(&vert.tight)
                });
                if blocked {
                    continue;
                }
                let t = values[u] / (values[u] - values[w]);
                let point: Vec<f64> = vertices[u]
                    .point
                    .iter()
                    .zip(&vertices[w].point)
                    .map(|(a, b)| a + t * (b - a))
                    .collect();
                let mut tight = tight_of(&point, r);
                tight.union_with(&common);
                tight.insert(n + r);
                next.push(DdVertex { point, tight });
            }
        }
        for (v, val) in vertices.iter().zip(&values) {
            if *val >= -tol {
                let mut kept = v.clone();
                if val.abs() <= tol {
                    kept.tight.insert(n + r);
                }
                next.push(kept);
            }
        }
        vertices = dedup_vertices(next);
    }

    let mut points: Vec<Vec<f64>> = vertices
        .into_iter()
        .map(|v| v.point.into_iter().map(snap).collect())
        .collect();
    points.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    points.dedup_by(|a, b| max_diff(a, b) <= SNAP_TOL);
    Ok(points
        .iter()
        .map(|p| DirectMechanism::from_flat(poly.owner, n_a, p))
        .collect())
}

fn row_tol(row: &IcRow) -> f64 {
    1e-10 * (1.0 + row.coeffs.iter().map(|c| c.abs()).sum::<f64>())
}

fn snap(v: f64) -> f64 {
    if v.abs() <= SNAP_TOL {
        0.0
    } else if (v - 1.0).abs() <= SNAP_TOL {
        1.0
    } else {
        v
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn dedup_vertices(list: Vec<DdVertex>) -> Vec<DdVertex> {
    let mut out: Vec<DdVertex> = Vec::with_capacity(list.len());
    for v in list {
        match out.iter_mut().find(|o| max_diff(&o.point, &v.point) <= SNAP_TOL) {
            Some(existing) => existing.tight.union_with(&v.tight),
            None => out.push(v),
        }
    }
    out
}

/// A feasible point found by maximising a seeded random linear objective.
pub fn sample_bic(poly: &BicPolytope, seed: u64) -> Result<DirectMechanism, BicError> {
    let mut rng = catalog::rng(seed);
    let objective: Vec<f64> = (0..poly.num_vars())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let mut problem = LpProblem::new(Sense::Maximize, objective);
    poly.add_to_lp(&mut problem, 0);
    let solution = lp::solve_lp(&problem)?;
    Ok(DirectMechanism::from_flat(
        poly.owner,
        poly.num_actions,
        &solution.x,
    ))
}

/// Builds the LP rows of `poly` as standalone constraints over `total`
/// variables with the mechanism block at `offset`.
pub fn polytope_constraints(poly: &BicPolytope, total: usize, offset: usize) -> Vec<Constraint> {
    let mut problem = LpProblem::new(Sense::Maximize, vec![0.0; total]);
    poly.add_to_lp(&mut problem, offset);
    problem.constraints
}
