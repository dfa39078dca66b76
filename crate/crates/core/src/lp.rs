//! Dense two-phase simplex with a Bland fallback against cycling.
//!
//! Problems are small (a few hundred rows at most), so the solver keeps a
//! full tableau. After the simplex terminates the final basis is re-solved
//! with an LU factorisation of the original standard-form matrix, which
//! tightens primal feasibility and yields dual prices for the gap check.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Primal feasibility tolerance (scaled by the largest right-hand side).
pub const PRIMAL_TOL: f64 = 1e-9;
/// Duality gap tolerance (scaled by the objective magnitude).
pub const GAP_TOL: f64 = 1e-7;

const COST_EPS: f64 = 1e-11;
const PIVOT_EPS: f64 = 1e-9;
/// Basic values below this are snapped to zero so degenerate pivots stay
/// exactly degenerate and Bland's rule cannot cycle on noise.
const RHS_EPS: f64 = 1e-11;
const MAX_ITERATIONS: usize = 200_000;
const BLAND_AFTER: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl Bounds {
    pub const NONNEG: Bounds = Bounds {
        lower: Some(0.0),
        upper: None,
    };
    pub const FREE: Bounds = Bounds {
        lower: None,
        upper: None,
    };
}

/// `optimise objective·x subject to constraints and per-variable bounds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<Bounds>,
}

impl LpProblem {
    /// All variables start non-negative.
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            sense,
            objective,
            constraints: Vec::new(),
            bounds: vec![Bounds::NONNEG; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> &mut Self {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        self
    }

    pub fn set_bounds(&mut self, var: usize, bounds: Bounds) -> &mut Self {
        self.bounds[var] = bounds;
        self
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            let viol = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        for (b, v) in self.bounds.iter().zip(x) {
            if let Some(l) = b.lower {
                worst = worst.max(l - v);
            }
            if let Some(u) = b.upper {
                worst = worst.max(v - u);
            }
        }
        worst
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.objective.len();
        if self.bounds.len() != n {
            return Err(LpError::DimensionMismatch(format!(
                "{} bounds for {n} variables",
                self.bounds.len()
            )));
        }
        for (r, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(LpError::DimensionMismatch(format!(
                    "constraint {r} has {} coefficients, expected {n}",
                    c.coeffs.len()
                )));
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|v| !v.is_finite()) {
                return Err(LpError::DimensionMismatch(format!(
                    "constraint {r} has non-finite entries"
                )));
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(LpError::DimensionMismatch(
                "objective has non-finite entries".to_string(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
    pub primal_residual: f64,
    pub duality_gap: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Maps an original variable onto standard-form columns.
struct VarMap {
    terms: Vec<(usize, f64)>,
    offset: f64,
}

struct StandardForm {
    /// Rows after sign normalisation (rhs >= 0), columns = struct + slack.
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
    /// Initial basic column per row, if a slack can serve.
    slack_basis: Vec<Option<usize>>,
    vars: Vec<VarMap>,
    objective_offset: f64,
}

fn standardise(p: &LpProblem) -> StandardForm {
    let mut vars = Vec::with_capacity(p.num_vars());
    let mut n_struct = 0;
    let mut extra_rows: Vec<(usize, f64)> = Vec::new();
    for b in &p.bounds {
        match (b.lower, b.upper) {
            (Some(l), u) => {
                let col = n_struct;
                n_struct += 1;
                if let Some(u) = u {
                    extra_rows.push((col, u - l));
                }
                vars.push(VarMap {
                    terms: vec![(col, 1.0)],
                    offset: l,
                });
            }
            (None, Some(u)) => {
                vars.push(VarMap {
                    terms: vec![(n_struct, -1.0)],
                    offset: u,
                });
                n_struct += 1;
            }
            (None, None) => {
                vars.push(VarMap {
                    terms: vec![(n_struct, 1.0), (n_struct + 1, -1.0)],
                    offset: 0.0,
                });
                n_struct += 2;
            }
        }
    }

    let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::new();
    for con in &p.constraints {
        let mut row = vec![0.0; n_struct];
        let mut rhs = con.rhs;
        for (v, &a) in con.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for &(col, s) in &vars[v].terms {
                row[col] += a * s;
            }
            rhs -= a * vars[v].offset;
        }
        rows.push((row, con.relation, rhs));
    }
    for (col, ub) in extra_rows {
        let mut row = vec![0.0; n_struct];
        row[col] = 1.0;
        rows.push((row, Relation::Le, ub));
    }

    let n_slack = rows
        .iter()
        .filter(|(_, rel, _)| *rel != Relation::Eq)
        .count();
    let n = n_struct + n_slack;
    let mut a = Vec::with_capacity(rows.len());
    let mut b = Vec::with_capacity(rows.len());
    let mut slack_basis = Vec::with_capacity(rows.len());
    let mut next_slack = n_struct;
    for (mut row, rel, mut rhs) in rows {
        row.resize(n, 0.0);
        let slack = match rel {
            Relation::Le => {
                row[next_slack] = 1.0;
                next_slack += 1;
                Some(next_slack - 1)
            }
            Relation::Ge => {
                row[next_slack] = -1.0;
                next_slack += 1;
                Some(next_slack - 1)
            }
            Relation::Eq => None,
        };
        if rhs < 0.0 {
            for v in row.iter_mut() {
                *v = -*v;
            }
            rhs = -rhs;
        }
        slack_basis.push(slack.filter(|&s| row[s] > 0.0));
        a.push(row);
        b.push(rhs);
    }

    let sign = match p.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut c = vec![0.0; n];
    let mut objective_offset = 0.0;
    for (v, &coef) in p.objective.iter().enumerate() {
        for &(col, s) in &vars[v].terms {
            c[col] += sign * coef * s;
        }
        objective_offset += coef * vars[v].offset;
    }
    StandardForm {
        a,
        b,
        c,
        slack_basis,
        vars,
        objective_offset,
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    cost: Vec<f64>,
    basis: Vec<usize>,
    /// Original standard-form row behind each tableau row.
    row_ids: Vec<usize>,
    width: usize,
    iterations: usize,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.rows[r][self.width]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let piv = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= piv;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(pivot_row.iter()) {
                    *v -= f * p;
                }
                row[c] = 0.0;
            }
        }
        let w = self.width;
        for row in self.rows.iter_mut() {
            if row[w].abs() < RHS_EPS {
                row[w] = 0.0;
            }
        }
        let f = self.cost[c];
        if f != 0.0 {
            for (v, p) in self.cost.iter_mut().zip(pivot_row.iter()) {
                *v -= f * p;
            }
            self.cost[c] = 0.0;
        }
        self.basis[r] = c;
        self.iterations += 1;
    }

    /// Dantzig pricing with the largest pivot among minimum-ratio ties.
    /// After a run of degenerate pivots it switches to Bland's rule, which
    /// cannot cycle, until the objective moves again.
    fn optimise(&mut self, allowed: usize) -> Result<(), LpError> {
        let mut degenerate_run = 0;
        loop {
            if self.iterations > MAX_ITERATIONS {
                return Err(LpError::NumericalFailure(
                    "simplex iteration limit reached".to_string(),
                ));
            }
            let bland = degenerate_run >= BLAND_AFTER;
            let mut enter: Option<usize> = None;
            for j in 0..allowed {
                if self.cost[j] < -COST_EPS {
                    if bland {
                        enter = Some(j);
                        break;
                    }
                    if enter.is_none_or(|e| self.cost[j] < self.cost[e]) {
                        enter = Some(j);
                    }
                }
            }
            let Some(enter) = enter else {
                return Ok(());
            };
            let mut min_ratio = f64::INFINITY;
            for row in &self.rows {
                let coef = row[enter];
                if coef > PIVOT_EPS {
                    min_ratio = min_ratio.min(row[self.width].max(0.0) / coef);
                }
            }
            if min_ratio.is_infinite() {
                return Err(LpError::Unbounded);
            }
            let tie_tol = 1e-12 * (1.0 + min_ratio);
            let mut leave: Option<usize> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let coef = row[enter];
                if coef <= PIVOT_EPS || row[self.width].max(0.0) / coef > min_ratio + tie_tol {
                    continue;
                }
                leave = match leave {
                    None => Some(i),
                    Some(l) => {
                        let better = if bland {
                            self.basis[i] < self.basis[l]
                        } else {
                            coef > self.rows[l][enter]
                        };
                        Some(if better { i } else { l })
                    }
                };
            }
            let r = leave.expect("a row attains the minimum ratio");
            if self.rhs(r) <= RHS_EPS {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, enter);
        }
    }
}

/// Solves `p`, returning an optimal vertex or a distinct failure outcome.
pub fn solve_lp(p: &LpProblem) -> Result<LpSolution, LpError> {
    p.validate()?;
    let sf = standardise(p);
    let m = sf.a.len();
    let n = sf.c.len();

    // Artificial columns for rows without a usable slack.
    let artificial_rows: Vec<usize> = (0..m).filter(|&r| sf.slack_basis[r].is_none()).collect();
    let width = n + artificial_rows.len();
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut art = 0;
    for r in 0..m {
        let mut row = vec![0.0; width + 1];
        row[..n].copy_from_slice(&sf.a[r]);
        row[width] = sf.b[r];
        match sf.slack_basis[r] {
            Some(s) => basis.push(s),
            None => {
                row[n + art] = 1.0;
                basis.push(n + art);
                art += 1;
            }
        }
        rows.push(row);
    }
    let mut t = Tableau {
        rows,
        cost: vec![0.0; width + 1],
        basis,
        row_ids: (0..m).collect(),
        width,
        iterations: 0,
    };

    let b_scale = 1.0 + sf.b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if !artificial_rows.is_empty() {
        for j in n..width {
            t.cost[j] = 1.0;
        }
        for &r in &artificial_rows {
            for j in 0..=width {
                t.cost[j] -= t.rows[r][j];
            }
        }
        t.optimise(width)?;
        let infeasibility = -t.cost[width];
        if infeasibility > 1e-9 * b_scale {
            return Err(LpError::Infeasible);
        }
        // Drive zero-level artificials out of the basis; drop redundant rows.
        let mut r = 0;
        while r < t.rows.len() {
            if t.basis[r] >= n {
                let col = (0..n)
                    .filter(|&j| t.rows[r][j].abs() > 1e-9)
                    .max_by(|&a, &b| {
                        t.rows[r][a]
                            .abs()
                            .partial_cmp(&t.rows[r][b].abs())
                            .unwrap()
                            .then(b.cmp(&a))
                    });
                match col {
                    Some(c) => {
                        t.pivot(r, c);
                        r += 1;
                    }
                    None => {
                        t.rows.remove(r);
                        t.basis.remove(r);
                        t.row_ids.remove(r);
                    }
                }
            } else {
                r += 1;
            }
        }
    }
    let kept_rows = t.row_ids.clone();

    // Phase two on the original costs.
    for j in 0..=width {
        t.cost[j] = if j < n { sf.c[j] } else { 0.0 };
    }
    for (r, &bcol) in t.basis.clone().iter().enumerate() {
        let cb = sf.c[bcol];
        if cb != 0.0 {
            for j in 0..=width {
                t.cost[j] -= cb * t.rows[r][j];
            }
        }
    }
    t.optimise(n)?;

    let mut x_std = vec![0.0; n];
    for (r, &bcol) in t.basis.iter().enumerate() {
        x_std[bcol] = t.rhs(r);
    }
    let (x_std, gap, dual_infeas) = refine(&sf, &kept_rows, &t.basis, x_std);

    let x: Vec<f64> = sf
        .vars
        .iter()
        .map(|vm| vm.offset + vm.terms.iter().map(|&(c, s)| s * x_std[c]).sum::<f64>())
        .collect();
    let value: f64 = p.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    let residual = p.residual(&x);
    let rhs_scale = 1.0
        + p.constraints
            .iter()
            .fold(0.0f64, |acc, c| acc.max(c.rhs.abs()));
    if residual > PRIMAL_TOL * rhs_scale {
        return Err(LpError::NumericalFailure(format!(
            "primal residual {residual:e} after refinement"
        )));
    }
    let obj_scale = 1.0 + value.abs() + sf.objective_offset.abs();
    if gap > GAP_TOL * obj_scale || dual_infeas > GAP_TOL * obj_scale {
        return Err(LpError::NumericalFailure(format!(
            "duality gap {gap:e}, dual infeasibility {dual_infeas:e}"
        )));
    }
    Ok(LpSolution {
        value,
        x,
        primal_residual: residual,
        duality_gap: gap,
        dual_infeasibility: dual_infeas,
        iterations: t.iterations,
    })
}

/// Re-solves the final basis against the original matrix and computes dual
/// prices. Falls back to the tableau point if the refined one is worse.
fn refine(
    sf: &StandardForm,
    kept_rows: &[usize],
    basis: &[usize],
    tableau_x: Vec<f64>,
) -> (Vec<f64>, f64, f64) {
    let m = basis.len();
    let n = sf.c.len();
    if m == 0 {
        // Only bounds remain; optimality means every cost is non-negative.
        let dual_infeas = sf.c.iter().fold(0.0f64, |acc, &c| acc.max(-c));
        return (tableau_x, 0.0, dual_infeas);
    }
    let bmat = DMatrix::from_fn(m, m, |i, j| sf.a[kept_rows[i]][basis[j]]);
    let rhs = DVector::from_iterator(m, kept_rows.iter().map(|&r| sf.b[r]));
    let cb = DVector::from_iterator(m, basis.iter().map(|&j| sf.c[j]));
    let lu = bmat.clone().lu();

    let std_residual = |x: &[f64]| -> f64 {
        let mut worst: f64 = 0.0;
        for &r in kept_rows {
            let lhs: f64 = sf.a[r].iter().zip(x).map(|(a, v)| a * v).sum();
            worst = worst.max((lhs - sf.b[r]).abs());
        }
        for v in x {
            worst = worst.max(-v);
        }
        worst
    };

    let mut x = tableau_x.clone();
    if let Some(xb) = lu.solve(&rhs) {
        let mut candidate = vec![0.0; n];
        for (j, &col) in basis.iter().enumerate() {
            candidate[col] = if xb[j].abs() < 1e-13 { 0.0 } else { xb[j] };
        }
        for v in candidate.iter_mut() {
            if *v < 0.0 && *v > -1e-12 {
                *v = 0.0;
            }
        }
        if std_residual(&candidate) <= std_residual(&tableau_x) {
            x = candidate;
        }
    }

    let (gap, dual_infeas) = match bmat.transpose().lu().solve(&cb) {
        Some(y) => {
            let primal: f64 = sf.c.iter().zip(&x).map(|(c, v)| c * v).sum();
            let dual: f64 = kept_rows.iter().zip(y.iter()).map(|(&r, yi)| sf.b[r] * yi).sum();
            let mut infeas: f64 = 0.0;
            for j in 0..n {
                let reduced =
                    sf.c[j] - kept_rows.iter().zip(y.iter()).map(|(&r, yi)| sf.a[r][j] * yi).sum::<f64>();
                infeas = infeas.max(-reduced);
            }
            ((primal - dual).abs(), infeas)
        }
        None => (f64::INFINITY, f64::INFINITY),
    };
    (x, gap, dual_infeas)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_variable_upper_bound() {
        let mut p = LpProblem::new(Sense::Maximize, vec![1.0]);
        p.add(vec![1.0], Relation::Le, 3.0);
        let s = solve_lp(&p).unwrap();
        assert!((s.value - 3.0).abs() < 1e-12);
        assert!((s.x[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn simplex_face() {
        let mut p = LpProblem::new(Sense::Maximize, vec![1.0, 1.0, 0.0]);
        p.add(vec![1.0, 1.0, 1.0], Relation::Eq, 1.0);
        let s = solve_lp(&p).unwrap();
        assert!((s.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut p = LpProblem::new(Sense::Maximize, vec![1.0]);
        p.add(vec![1.0], Relation::Le, 0.0);
        p.add(vec![1.0], Relation::Ge, 1.0);
        assert_eq!(solve_lp(&p), Err(LpError::Infeasible));
    }

    #[test]
    fn unbounded_ray() {
        let mut p = LpProblem::new(Sense::Maximize, vec![1.0, 1.0]);
        p.add(vec![1.0, -1.0], Relation::Le, 1.0);
        assert_eq!(solve_lp(&p), Err(LpError::Unbounded));
    }

    #[test]
    fn free_and_bounded_variables() {
        // min t subject to t >= 2 - x, t >= x - 4, x in [0, 10], t free.
        let mut p = LpProblem::new(Sense::Minimize, vec![1.0, 0.0]);
        p.set_bounds(0, Bounds::FREE);
        p.set_bounds(
            1,
            Bounds {
                lower: Some(0.0),
                upper: Some(10.0),
            },
        );
        p.add(vec![1.0, 1.0], Relation::Ge, 2.0);
        p.add(vec![1.0, -1.0], Relation::Ge, -4.0);
        let s = solve_lp(&p).unwrap();
        assert!((s.value + 1.0).abs() < 1e-10, "{s:?}");
    }

    #[test]
    fn negative_values_reached_through_free_variable() {
        let mut p = LpProblem::new(Sense::Maximize, vec![1.0]);
        p.set_bounds(0, Bounds::FREE);
        p.add(vec![1.0], Relation::Le, -2.5);
        let s = solve_lp(&p).unwrap();
        assert!((s.value + 2.5).abs() < 1e-12);
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let mut p = LpProblem::new(Sense::Minimize, vec![1.0, 2.0]);
        p.add(vec![1.0, 1.0], Relation::Eq, 1.0);
        p.add(vec![2.0, 2.0], Relation::Eq, 2.0);
        let s = solve_lp(&p).unwrap();
        assert!((s.value - 1.0).abs() < 1e-12);
        assert!(s.duality_gap < 1e-9);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's classic cycling instance under Dantzig's rule.
        let mut p = LpProblem::new(Sense::Minimize, vec![-0.75, 150.0, -0.02, 6.0]);
        p.add(vec![0.25, -60.0, -0.04, 9.0], Relation::Le, 0.0);
        p.add(vec![0.5, -90.0, -0.02, 3.0], Relation::Le, 0.0);
        p.add(vec![0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0);
        let s = solve_lp(&p).unwrap();
        assert!((s.value + 0.05).abs() < 1e-9, "{s:?}");
    }

    #[test]
    fn degenerate_bic_sampling_lp_terminates() {
        let text = include_str!("../tests/data/degenerate_bic_lp.json");
        let p: LpProblem = serde_json::from_str(text).unwrap();
        let s = solve_lp(&p).unwrap();
        assert!(s.primal_residual < 1e-9);
    }

    #[test]
    fn ill_conditioned_saddle_lp_stays_bounded() {
        let text = include_str!("../tests/data/ill_conditioned_saddle_lp.json");
        let p: LpProblem = serde_json::from_str(text).unwrap();
        let s = solve_lp(&p).unwrap();
        assert!((s.value + 0.310_448_501_556_807).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut p = LpProblem::new(Sense::Maximize, vec![1.0, 1.0]);
        p.add(vec![1.0], Relation::Le, 1.0);
        assert!(matches!(solve_lp(&p), Err(LpError::DimensionMismatch(_))));
    }

    #[test]
    fn deterministic_given_input() {
        let mut p = LpProblem::new(Sense::Maximize, vec![1.0, 1.0, 1.0]);
        p.add(vec![1.0, 1.0, 1.0], Relation::Le, 1.0);
        let a = solve_lp(&p).unwrap();
        let b = solve_lp(&p).unwrap();
        assert_eq!(a, b);
    }
}
