use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{maxmin, minmax, MaxminParams, MinmaxMode, MinmaxParams, SolverError};
use crate::bic::DEFAULT_DIM_CAP;
use crate::catalog::{self, GapFamily};
use crate::game::GameFile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSearchParams {
    pub family: GapFamily,
    pub budget: usize,
    pub seed: u64,
    pub delta: f64,
    /// Principal whose values are compared.
    pub principal: usize,
    pub grid_dim_cap: usize,
    pub dim_cap: usize,
}

impl Default for GapSearchParams {
    fn default() -> Self {
        Self {
            family: GapFamily::gap3(),
            budget: 500,
            seed: 42,
            delta: 1e-2,
            principal: 0,
            grid_dim_cap: 4,
            dim_cap: DEFAULT_DIM_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapInstance {
    pub index: usize,
    pub instance_seed: u64,
    pub maxmin: f64,
    pub minmax_lower: f64,
    /// Best-response value at the grid witness.
    pub minmax_upper: f64,
    /// `max(0, minmax_lower - maxmin)`: minmax never falls below maxmin, so
    /// this is a certified lower bound on the true gap.
    pub gap: f64,
    pub game: GameFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSearchResult {
    pub family: String,
    pub budget: usize,
    pub evaluated: usize,
    /// Instances with a strictly positive certified gap.
    pub positive_gaps: usize,
    /// `None` only for a zero budget.
    pub best: Option<GapInstance>,
}

/// Samples `budget` games from the family and returns the one with the
/// largest certified gap between the grid minmax lower bound and the exact
/// maxmin. Ties go to the earliest instance.
pub fn search_minmax_maxmin_gap(params: &GapSearchParams) -> Result<GapSearchResult, SolverError> {
    let mut rng = catalog::rng(params.seed);
    let seeds: Vec<u64> = (0..params.budget).map(|_| rng.random()).collect();
    let minmax_params = MinmaxParams {
        delta: params.delta,
        grid_dim_cap: params.grid_dim_cap,
        dim_cap: params.dim_cap,
        ..MinmaxParams::default()
    };
    let maxmin_params = MaxminParams {
        dim_cap: params.dim_cap,
        force_exact: true,
        ..MaxminParams::default()
    };
    let scored: Vec<Result<(usize, u64, f64, f64, f64), SolverError>> = seeds
        .par_iter()
        .enumerate()
        .map(|(index, &instance_seed)| {
            let game = params.family.sample(&mut catalog::rng(instance_seed));
            let low = maxmin(&game, params.principal, &maxmin_params)?;
            let high = minmax(&game, params.principal, MinmaxMode::Grid, &minmax_params)?;
            Ok((index, instance_seed, low.value, high.value, high.witness_value))
        })
        .collect();

    let mut best: Option<(f64, usize, u64, f64, f64, f64)> = None;
    let mut positive = 0;
    for entry in scored {
        let (index, instance_seed, low, lower, upper) = entry?;
        let gap = (lower - low).max(0.0);
        if gap > 0.0 {
            positive += 1;
        }
        if best.as_ref().is_none_or(|b| gap > b.0) {
            best = Some((gap, index, instance_seed, low, lower, upper));
        }
    }
    let best = best.map(|(gap, index, instance_seed, low, lower, upper)| GapInstance {
        index,
        instance_seed,
        maxmin: low,
        minmax_lower: lower,
        minmax_upper: upper,
        gap,
        game: params
            .family
            .sample(&mut catalog::rng(instance_seed))
            .to_game_file(),
    });
    Ok(GapSearchResult {
        family: params.family.name().to_string(),
        budget: params.budget,
        evaluated: params.budget,
        positive_gaps: positive,
        best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_principal_family_has_no_gap() {
        let params = GapSearchParams {
            family: GapFamily::TwoPrincipal,
            budget: 10,
            ..GapSearchParams::default()
        };
        let res = search_minmax_maxmin_gap(&params).unwrap();
        assert_eq!(res.positive_gaps, 0);
        assert_eq!(res.best.unwrap().gap, 0.0);
    }

    #[test]
    fn constant_family_has_no_gap() {
        let params = GapSearchParams {
            family: GapFamily::ConstantPayoff,
            budget: 5,
            ..GapSearchParams::default()
        };
        let res = search_minmax_maxmin_gap(&params).unwrap();
        assert_eq!(res.best.unwrap().gap, 0.0);
    }

    #[test]
    fn small_gap3_search_is_deterministic() {
        let params = GapSearchParams {
            budget: 6,
            seed: 9,
            ..GapSearchParams::default()
        };
        let a = search_minmax_maxmin_gap(&params).unwrap();
        let b = search_minmax_maxmin_gap(&params).unwrap();
        assert_eq!(a, b);
        assert!(a.best.unwrap().gap > 0.01);
    }
}
