//! Finite competing-mechanism games: BIC direct-mechanism polytopes,
//! minmax and maxmin values, robust-PBE membership, and finite-message
//! mechanism constructions with exhaustive equilibrium checks.

pub mod bic;
pub mod catalog;
pub mod game;
pub mod lp;
pub mod mechanisms;
pub mod report;
pub mod solver;

pub use game::{
    validate_game, DirectMechanism, FiniteGame, GameError, ProfileSpace, RandomActionProfile,
    ValidationResult,
};
pub use bic::{
    build_bic_polytope, enumerate_vertices, is_individually_bic, is_profile_bic, sample_bic,
    BicError, BicPolytope,
};
pub use report::SolveReport;
pub use lp::{solve_lp, LpError, LpProblem, LpSolution};
pub use solver::{
    best_response, maxmin, minmax, punishment_profile, robust_pbe_membership,
    search_minmax_maxmin_gap, CertificateKind, MinmaxMode, SolverError, ValueCertificate,
};
pub use mechanisms::{
    build_deviator_reporting, build_type_and_dm_mechanism, check_continuation_equilibrium,
    check_equilibrium_notion, enumerate_pure_continuation_equilibria, induce_direct_mechanism,
    nest_szentes_contract, simulate, GeneralMechanism, MechanismError, Notion, NotionStatus,
    PureStrategyProfile, StrategyProfile,
};
