//! Finite-message general mechanisms, communication strategies, the
//! constructions used to support robust equilibria, and exhaustive checks of
//! continuation equilibria and equilibrium notions.

mod construct;
mod equilibrium;
mod file;
mod simulate;

pub use construct::{
    build_deviator_reporting, build_type_and_dm_mechanism, deviator_reporting_branch,
    nest_szentes_contract, SetValuedContract, SzentesNesting, SELECTION_CAP,
};
pub use equilibrium::{
    check_continuation_equilibrium, check_equilibrium_notion, enumerate_pure_continuation_equilibria,
    full_menu_type_and_dm, random_deviation_mechanism, random_mechanism, Candidate,
    ComponentEquilibrium, ContinuationEquilibria, ContinuationVerdict, Deviation, DeviationOutcome,
    EnumerationCaps, Notion, NotionStatus, NotionVerdict,
};
pub use file::{
    mechanism_profile_hash, CandidateFile, DeviationEntry, MechanismFile, OutcomeRow,
    StrategyEntry, StrategyFile,
};
pub use simulate::{simulate, PlayerEstimate, SimulationReport};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{DirectMechanism, FiniteGame, GameError, GameFileError, ProfileSpace, MASS_TOL};
use crate::solver::SolverError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MechanismError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid distribution ({context}): {reason}")]
    InvalidDistribution { context: String, reason: String },
    #[error("deviator reporting needs at least three agents, game has {agents}")]
    TooFewAgents { agents: usize },
    #[error("{which} is not individually BIC (row value {value:e})")]
    NotBic { which: String, value: f64 },
    #[error("menu entry {index} is not individually BIC (row value {value:e})")]
    MenuEntryNotBic { index: usize, value: f64 },
    #[error("selection space has {size} maps, above the cap {cap}")]
    SelectionSpaceTooLarge { size: u128, cap: u128 },
    #[error("{what} has {size} elements, above the cap {cap}")]
    EnumerationTooLarge {
        what: &'static str,
        size: u128,
        cap: u128,
    },
    #[error("deviation set of principal {principal} is empty")]
    DeviationSetEmpty { principal: usize },
    #[error("{path}: {message}")]
    Field { path: String, message: String },
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    File(#[from] GameFileError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

fn check_dist(row: &[f64], context: impl FnOnce() -> String) -> Result<(), MechanismError> {
    let bad = row.iter().any(|p| !p.is_finite() || *p < 0.0);
    let mass: f64 = row.iter().sum();
    if bad || (mass - 1.0).abs() > MASS_TOL {
        return Err(MechanismError::InvalidDistribution {
            context: context(),
            reason: format!("entries {row:?} (mass {mass})"),
        });
    }
    Ok(())
}

/// `γ_j : M_0j × M_1j × ⋯ × M_Ij → Δ(A_j)`.
///
/// Outcome rows are stored flat over the message space with the principal's
/// own message as the most significant component.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralMechanism {
    owner: usize,
    principal_messages: Vec<String>,
    agent_messages: Vec<Vec<String>>,
    space: ProfileSpace,
    agent_space: ProfileSpace,
    outcomes: Vec<Vec<f64>>,
    standard: bool,
}

impl GeneralMechanism {
    pub fn new(
        owner: usize,
        principal_messages: Vec<String>,
        agent_messages: Vec<Vec<String>>,
        outcomes: Vec<Vec<f64>>,
    ) -> Result<Self, MechanismError> {
        let mut sizes = vec![principal_messages.len()];
        sizes.extend(agent_messages.iter().map(Vec::len));
        if sizes.contains(&0) {
            return Err(MechanismError::Shape("message sets must be nonempty".into()));
        }
        let space = ProfileSpace::new(sizes);
        if outcomes.len() != space.len() {
            return Err(MechanismError::Shape(format!(
                "{} outcome rows for {} message profiles",
                outcomes.len(),
                space.len()
            )));
        }
        let width = outcomes[0].len();
        for (m, row) in outcomes.iter().enumerate() {
            if row.len() != width || width == 0 {
                return Err(MechanismError::Shape(format!(
                    "outcome row {m} has {} entries, expected {width}",
                    row.len()
                )));
            }
            check_dist(row, || format!("principal {owner}, message profile {m}"))?;
        }
        let agent_space = ProfileSpace::new(space.sizes()[1..].to_vec());
        let per_m0 = agent_space.len();
        let standard = outcomes
            .chunks(per_m0)
            .all(|chunk| chunk == &outcomes[..per_m0]);
        Ok(Self {
            owner,
            principal_messages,
            agent_messages,
            space,
            agent_space,
            outcomes,
            standard,
        })
    }

    /// Builds outcome rows from `f(m0, agent_messages)`.
    pub fn from_fn(
        owner: usize,
        principal_messages: Vec<String>,
        agent_messages: Vec<Vec<String>>,
        mut f: impl FnMut(usize, &[usize]) -> Vec<f64>,
    ) -> Result<Self, MechanismError> {
        let mut sizes = vec![principal_messages.len()];
        sizes.extend(agent_messages.iter().map(Vec::len));
        let space = ProfileSpace::new(sizes);
        let outcomes = space.iter().map(|m| f(m[0], &m[1..])).collect();
        Self::new(owner, principal_messages, agent_messages, outcomes)
    }

    /// The direct mechanism as a standard mechanism with type messages.
    pub fn from_direct(game: &FiniteGame, mechanism: &DirectMechanism) -> Result<Self, MechanismError> {
        game.check_mechanism(mechanism.owner(), mechanism)?;
        let agent_messages = game.agents().iter().map(|a| a.types.clone()).collect();
        Self::from_fn(
            mechanism.owner(),
            vec!["_".into()],
            agent_messages,
            |_, m| mechanism.row(game.type_space().index(m)).to_vec(),
        )
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn num_actions(&self) -> usize {
        self.outcomes[0].len()
    }

    pub fn num_agents(&self) -> usize {
        self.agent_messages.len()
    }

    pub fn principal_messages(&self) -> &[String] {
        &self.principal_messages
    }

    pub fn agent_messages(&self, i: usize) -> &[String] {
        &self.agent_messages[i]
    }

    pub fn num_principal_messages(&self) -> usize {
        self.principal_messages.len()
    }

    pub fn num_agent_messages(&self, i: usize) -> usize {
        self.agent_messages[i].len()
    }

    /// Whether the outcome ignores the principal's own message.
    pub fn is_standard(&self) -> bool {
        self.standard
    }

    pub fn message_space(&self) -> &ProfileSpace {
        &self.space
    }

    pub fn outcome(&self, m0: usize, agent_messages: &[usize]) -> &[f64] {
        &self.outcomes[m0 * self.agent_space.len() + self.agent_space.index(agent_messages)]
    }

    pub(crate) fn outcome_flat(&self, idx: usize) -> &[f64] {
        &self.outcomes[idx]
    }

    pub(crate) fn check_against(&self, game: &FiniteGame) -> Result<(), MechanismError> {
        if self.owner >= game.num_principals()
            || self.num_actions() != game.num_actions(self.owner)
            || self.num_agents() != game.num_agents()
        {
            return Err(MechanismError::Shape(format!(
                "mechanism for principal {} does not fit the game",
                self.owner
            )));
        }
        Ok(())
    }
}

/// Mixed communication strategies for a fixed mechanism profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    /// `[j]`: distribution over `M_0j`.
    pub principal: Vec<Vec<f64>>,
    /// `[i][j][x_i]`: distribution over `M_ij`.
    pub agents: Vec<Vec<Vec<Vec<f64>>>>,
}

impl StrategyProfile {
    pub fn validate(
        &self,
        game: &FiniteGame,
        mechanisms: &[GeneralMechanism],
    ) -> Result<(), MechanismError> {
        if self.principal.len() != mechanisms.len() || self.agents.len() != game.num_agents() {
            return Err(MechanismError::Shape("strategy profile dimensions".into()));
        }
        for (j, (dist, mech)) in self.principal.iter().zip(mechanisms).enumerate() {
            if dist.len() != mech.num_principal_messages() {
                return Err(MechanismError::Shape(format!(
                    "principal {j} strategy has {} entries",
                    dist.len()
                )));
            }
            check_dist(dist, || format!("principal {j} message"))?;
        }
        for (i, per_agent) in self.agents.iter().enumerate() {
            if per_agent.len() != mechanisms.len() {
                return Err(MechanismError::Shape(format!("agent {i} strategy count")));
            }
            for (j, per_type) in per_agent.iter().enumerate() {
                if per_type.len() != game.num_types(i) {
                    return Err(MechanismError::Shape(format!(
                        "agent {i} strategy towards principal {j} covers {} types",
                        per_type.len()
                    )));
                }
                for (t, dist) in per_type.iter().enumerate() {
                    if dist.len() != mechanisms[j].num_agent_messages(i) {
                        return Err(MechanismError::Shape(format!(
                            "agent {i}, principal {j}, type {t}: {} entries",
                            dist.len()
                        )));
                    }
                    check_dist(dist, || format!("agent {i}, principal {j}, type {t}"))?;
                }
            }
        }
        Ok(())
    }
}

/// Pure communication strategies.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PureStrategyProfile {
    /// `[j]`: message in `M_0j`.
    pub principal: Vec<usize>,
    /// `[i][j][x_i]`: message in `M_ij`.
    pub agents: Vec<Vec<Vec<usize>>>,
}

impl PureStrategyProfile {
    pub fn to_mixed(&self, mechanisms: &[GeneralMechanism]) -> StrategyProfile {
        let one_hot = |n: usize, k: usize| {
            let mut v = vec![0.0; n];
            v[k] = 1.0;
            v
        };
        StrategyProfile {
            principal: self
                .principal
                .iter()
                .zip(mechanisms)
                .map(|(&m, mech)| one_hot(mech.num_principal_messages(), m))
                .collect(),
            agents: self
                .agents
                .iter()
                .enumerate()
                .map(|(i, per_agent)| {
                    per_agent
                        .iter()
                        .zip(mechanisms)
                        .map(|(per_type, mech)| {
                            per_type
                                .iter()
                                .map(|&m| one_hot(mech.num_agent_messages(i), m))
                                .collect()
                        })
                        .collect()
                })
                .collect(),
        }
    }

    /// Truthful type reports to mechanisms whose agent messages are the
    /// type labels (or, for deviator-reporting mechanisms, the pair naming
    /// the owner and the type).
    pub fn truthful(game: &FiniteGame, mechanisms: &[GeneralMechanism]) -> Self {
        let agents = (0..game.num_agents())
            .map(|i| {
                mechanisms
                    .iter()
                    .map(|mech| {
                        let n_t = game.num_types(i);
                        let n_m = mech.num_agent_messages(i);
                        (0..n_t)
                            .map(|t| {
                                if n_m == n_t {
                                    t
                                } else {
                                    // Deviator-reporting layout: (ℓ = owner, t).
                                    mech.owner() * n_t + t
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self {
            principal: vec![0; mechanisms.len()],
            agents,
        }
    }
}

/// `g_j(γ_j, c_0j, c_1j, …, c_Ij)`: the direct mechanism obtained by
/// composing `γ_j` with the communication strategies directed at it.
pub fn induce_direct_mechanism(
    game: &FiniteGame,
    mechanism: &GeneralMechanism,
    strategies: &StrategyProfile,
) -> Result<DirectMechanism, MechanismError> {
    mechanism.check_against(game)?;
    let j = mechanism.owner();
    let principal = strategies
        .principal
        .get(j)
        .ok_or_else(|| MechanismError::Shape(format!("no strategy for principal {j}")))?;
    let agent_dists: Vec<&Vec<Vec<f64>>> = (0..game.num_agents())
        .map(|i| {
            strategies
                .agents
                .get(i)
                .and_then(|a| a.get(j))
                .ok_or_else(|| MechanismError::Shape(format!("no strategy for agent {i}")))
        })
        .collect::<Result<_, _>>()?;
    let n_a = mechanism.num_actions();
    let space = game.type_space();
    let mut rows = Vec::with_capacity(space.len());
    let mut types = vec![0usize; game.num_agents()];
    for x in 0..space.len() {
        space.decode_into(x, &mut types);
        let supports: Vec<Vec<(usize, f64)>> = types
            .iter()
            .enumerate()
            .map(|(i, &t)| support(&agent_dists[i][t]))
            .collect();
        let mut row = vec![0.0; n_a];
        for (m0, &p0) in principal.iter().enumerate() {
            if p0 == 0.0 {
                continue;
            }
            for_each_combination(&supports, |msgs, w| {
                let out = mechanism.outcome(m0, msgs);
                for (r, o) in row.iter_mut().zip(out) {
                    *r += p0 * w * o;
                }
            });
        }
        rows.push(row);
    }
    Ok(DirectMechanism::from_flat(j, n_a, &rows.concat()))
}

pub(crate) fn support(dist: &[f64]) -> Vec<(usize, f64)> {
    dist.iter()
        .enumerate()
        .filter(|(_, p)| **p > 0.0)
        .map(|(m, p)| (m, *p))
        .collect()
}

/// Calls `f(messages, weight)` for every combination of supported messages.
pub(crate) fn for_each_combination(
    supports: &[Vec<(usize, f64)>],
    mut f: impl FnMut(&[usize], f64),
) {
    let mut msgs = vec![0usize; supports.len()];
    fn rec(
        pos: usize,
        w: f64,
        supports: &[Vec<(usize, f64)>],
        msgs: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize], f64),
    ) {
        if pos == supports.len() {
            f(msgs, w);
            return;
        }
        for &(m, p) in &supports[pos] {
            msgs[pos] = m;
            rec(pos + 1, w * p, supports, msgs, f);
        }
    }
    rec(0, 1.0, supports, &mut msgs, &mut f);
}
