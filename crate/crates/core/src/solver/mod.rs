//! Best responses, minmax and maxmin values over BIC polytopes, punishment
//! profiles, robust-PBE membership, and the minmax/maxmin gap search.

mod gap;
mod maxmin;
mod minmax;

pub use gap::{search_minmax_maxmin_gap, GapInstance, GapSearchParams, GapSearchResult};
pub use maxmin::{maxmin, MaxminParams};
pub use minmax::{minmax, punishment_profile, MinmaxMode, MinmaxParams, Punishment};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bic::{self, BicError, BicPolytope, BIC_TOL};
use crate::game::{DirectMechanism, FiniteGame, GameError};
use crate::lp::{self, LpError, LpProblem, Sense};

/// Default tolerance on value comparisons.
pub const VALUE_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("mode {mode} needs exactly two principals, game has {num_principals}")]
    ModeUnsupported {
        mode: &'static str,
        num_principals: usize,
    },
    #[error("{what} is {size}, above the cap {cap}")]
    DimensionTooLarge {
        what: &'static str,
        size: usize,
        cap: usize,
    },
    #[error("mechanism of principal {principal} is not individually BIC (row value {value:e})")]
    NotBic { principal: usize, value: f64 },
    #[error("expected {expected} certificates, got {got}")]
    CertificateCount { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Bic(#[from] BicError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Game(#[from] GameError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateKind {
    ExactLp,
    VertexProductExact,
    AlternatingUpperBound,
    GridCertifiedLowerBound,
    AlternatingHeuristic,
}

impl CertificateKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CertificateKind::ExactLp => "exact-lp",
            CertificateKind::VertexProductExact => "vertex-product-exact",
            CertificateKind::AlternatingUpperBound => "alternating-upper-bound",
            CertificateKind::GridCertifiedLowerBound => "grid-certified-lower-bound",
            CertificateKind::AlternatingHeuristic => "alternating-heuristic",
        }
    }
}

/// A computed value with its witness.
///
/// For minmax certificates the witness is the punishment profile `π_{-j}`
/// (principals other than `j`, in index order) and `witness_value` is `j`'s
/// best-response value against it. For maxmin certificates the witness is
/// `j`'s own mechanism and `witness_value` its guaranteed payoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueCertificate {
    pub principal: usize,
    pub kind: CertificateKind,
    pub value: f64,
    /// 0 for exact kinds, the certified slack for grid certificates, and
    /// -1 when unknown (heuristic maxmin).
    pub gap_bound: f64,
    pub witness: Vec<DirectMechanism>,
    pub witness_value: f64,
}

impl ValueCertificate {
    /// Interval known to contain the principal's minmax value.
    pub fn minmax_bounds(&self) -> (f64, f64) {
        match self.kind {
            CertificateKind::ExactLp => (self.value, self.value),
            CertificateKind::GridCertifiedLowerBound => (self.value, self.witness_value),
            CertificateKind::AlternatingUpperBound => (f64::NEG_INFINITY, self.value),
            // Maxmin never exceeds minmax.
            CertificateKind::VertexProductExact => (self.value, f64::INFINITY),
            CertificateKind::AlternatingHeuristic => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    pub value: f64,
    pub mechanism: DirectMechanism,
}

/// Full profile from `π_{-j}` (principals other than `j` in index order) and `π_j`.
pub fn assemble_profile(
    j: usize,
    others: &[DirectMechanism],
    own: DirectMechanism,
) -> Vec<DirectMechanism> {
    let mut out = others.to_vec();
    out.insert(j, own);
    out
}

/// `π_{-j}` from a full profile.
pub fn others_of(j: usize, profile: &[DirectMechanism]) -> Vec<DirectMechanism> {
    profile
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != j)
        .map(|(_, m)| m.clone())
        .collect()
}

pub(crate) fn check_others(
    game: &FiniteGame,
    j: usize,
    others: &[DirectMechanism],
) -> Result<(), SolverError> {
    if others.len() + 1 != game.num_principals() {
        return Err(GameError::Shape(format!(
            "{} punishing mechanisms for {} principals",
            others.len(),
            game.num_principals()
        ))
        .into());
    }
    for (idx, m) in others.iter().enumerate() {
        let k = if idx < j { idx } else { idx + 1 };
        game.check_mechanism(k, m)?;
        let verdict = BicPolytope::new(game, k).check(m, BIC_TOL)?;
        if !verdict.ok {
            return Err(SolverError::NotBic {
                principal: k,
                value: verdict.worst.map_or(0.0, |w| w.value),
            });
        }
    }
    Ok(())
}

/// Maximises `j`'s expected payoff over `Π_j^B` against `π_{-j}`.
pub fn best_response(
    game: &FiniteGame,
    j: usize,
    others: &[DirectMechanism],
) -> Result<BestResponse, SolverError> {
    check_others(game, j, others)?;
    let poly = BicPolytope::new(game, j);
    best_response_unchecked(game, &poly, others)
}

pub(crate) fn best_response_unchecked(
    game: &FiniteGame,
    poly: &BicPolytope,
    others: &[DirectMechanism],
) -> Result<BestResponse, SolverError> {
    let j = poly.owner();
    let placeholder = DirectMechanism::uniform(j, game.num_profiles(), game.num_actions(j));
    let profile = assemble_profile(j, others, placeholder);
    let coeffs = game.linear_coefficients(j, j, &profile)?;
    let objective: Vec<f64> = coeffs.into_iter().flatten().collect();
    let mut problem = LpProblem::new(Sense::Maximize, objective);
    poly.add_to_lp(&mut problem, 0);
    let solution = lp::solve_lp(&problem)?;
    let mechanism = DirectMechanism::from_flat(j, poly.num_actions(), &solution.x);
    let profile = assemble_profile(j, others, mechanism.clone());
    let value = game.expected_principal_payoff(j, &profile)?;
    Ok(BestResponse { value, mechanism })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MembershipStatus {
    Member,
    NonMember,
    ConsistentWithMembership,
}

impl MembershipStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            MembershipStatus::Member => "member",
            MembershipStatus::NonMember => "non-member",
            MembershipStatus::ConsistentWithMembership => "consistent-with-membership",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipalSlack {
    pub principal: usize,
    pub payoff: f64,
    pub kind: CertificateKind,
    pub certificate_value: f64,
    pub lower: f64,
    pub upper: f64,
    /// `payoff - certificate_value`.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipVerdict {
    pub status: MembershipStatus,
    pub bic: bool,
    pub principals: Vec<PrincipalSlack>,
}

/// Checks whether `profile` is a robust-PBE allocation: jointly BIC and
/// paying every principal at least their minmax value.
///
/// Each certificate brackets the minmax value in `[lower, upper]`. A
/// principal is certainly satisfied when `payoff >= upper - tol` and
/// certainly not when `payoff < lower - tol`; anything in between (or any
/// upper-bound-only certificate) yields `ConsistentWithMembership`.
pub fn robust_pbe_membership(
    game: &FiniteGame,
    profile: &[DirectMechanism],
    certificates: &[ValueCertificate],
    tol: f64,
) -> Result<MembershipVerdict, SolverError> {
    if certificates.len() != game.num_principals() {
        return Err(SolverError::CertificateCount {
            expected: game.num_principals(),
            got: certificates.len(),
        });
    }
    let bic = bic::is_profile_bic(game, profile, BIC_TOL)?.ok;
    let mut principals = Vec::with_capacity(certificates.len());
    let mut certain = true;
    let mut violated = false;
    for (j, cert) in certificates.iter().enumerate() {
        let payoff = game.expected_principal_payoff(j, profile)?;
        let (lower, upper) = cert.minmax_bounds();
        if payoff < lower - tol {
            violated = true;
        }
        let upper_only = matches!(
            cert.kind,
            CertificateKind::AlternatingUpperBound | CertificateKind::AlternatingHeuristic
        );
        if upper_only || payoff < upper - tol {
            certain = false;
        }
        principals.push(PrincipalSlack {
            principal: j,
            payoff,
            kind: cert.kind,
            certificate_value: cert.value,
            lower,
            upper,
            slack: payoff - cert.value,
        });
    }
    let status = if !bic || violated {
        MembershipStatus::NonMember
    } else if certain {
        MembershipStatus::Member
    } else {
        MembershipStatus::ConsistentWithMembership
    };
    Ok(MembershipVerdict {
        status,
        bic,
        principals,
    })
}
