//! Finite competing-mechanism games: players, type and action spaces, the
//! common prior, payoff tables, and the expected-payoff functionals built on
//! top of them.
//!
//! Agent payoffs are stored in separable form: one component table per
//! (agent, principal) pair, so agent `i`'s utility at action profile `a` is
//! the sum over principals `k` of `u[i][k][a_k][x]`.

mod file;
mod space;

pub use file::{
    AgentEntry, AgentPayoffEntry, DirectMechanismFile, DirectRow, GameFile, GameFileError,
    PrincipalEntry, PrincipalPayoffEntry, PriorEntry,
};
pub use space::ProfileSpace;
pub(crate) use file::{label_map, parse_json};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on probability mass (prior and mechanism rows).
pub const MASS_TOL: f64 = 1e-12;

/// Residual above which a joint agent payoff is declared non-separable.
pub const SEPARABILITY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("agent {agent} type {type_index} has zero prior mass; no conditional exists")]
    ZeroProbabilityType { agent: usize, type_index: usize },
    #[error(
        "payoff is not separable across principals: residual {residual:e} at action profile \
         {action_profile:?}, type profile {type_profile:?}"
    )]
    NotSeparable {
        action_profile: Vec<usize>,
        type_profile: Vec<usize>,
        residual: f64,
    },
    #[error("invalid distribution ({context}): {reason}")]
    InvalidDistribution { context: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Principal {
    pub id: String,
    pub actions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: String,
    pub types: Vec<String>,
}

/// A finite game instance. Construction only checks table shapes; use
/// [`FiniteGame::validate`] for the semantic invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteGame {
    principals: Vec<Principal>,
    agents: Vec<Agent>,
    types: ProfileSpace,
    actions: ProfileSpace,
    prior: Vec<f64>,
    /// `[i][k][a_k][x]`
    agent_payoffs: Vec<Vec<Vec<Vec<f64>>>>,
    /// `[j][a][x]`, `a` a flat action-profile index.
    principal_payoffs: Vec<Vec<Vec<f64>>>,
}

impl FiniteGame {
    pub fn new(
        principals: Vec<Principal>,
        agents: Vec<Agent>,
        prior: Vec<f64>,
        agent_payoffs: Vec<Vec<Vec<Vec<f64>>>>,
        principal_payoffs: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self, GameError> {
        let types = ProfileSpace::new(agents.iter().map(|a| a.types.len()).collect());
        let actions = ProfileSpace::new(principals.iter().map(|p| p.actions.len()).collect());
        if prior.len() != types.len() {
            return Err(GameError::Shape(format!(
                "prior has {} entries, type space has {} profiles",
                prior.len(),
                types.len()
            )));
        }
        if agent_payoffs.len() != agents.len() {
            return Err(GameError::Shape(format!(
                "agent payoff table covers {} agents, game has {}",
                agent_payoffs.len(),
                agents.len()
            )));
        }
        for (i, per_agent) in agent_payoffs.iter().enumerate() {
            if per_agent.len() != principals.len() {
                return Err(GameError::Shape(format!(
                    "agent {i} payoff table covers {} principals, game has {}",
                    per_agent.len(),
                    principals.len()
                )));
            }
            for (k, per_principal) in per_agent.iter().enumerate() {
                if per_principal.len() != principals[k].actions.len()
                    || per_principal.iter().any(|row| row.len() != types.len())
                {
                    return Err(GameError::Shape(format!(
                        "agent {i} component for principal {k} must be {}x{}",
                        principals[k].actions.len(),
                        types.len()
                    )));
                }
            }
        }
        if principal_payoffs.len() != principals.len() {
            return Err(GameError::Shape(format!(
                "principal payoff table covers {} principals, game has {}",
                principal_payoffs.len(),
                principals.len()
            )));
        }
        for (j, table) in principal_payoffs.iter().enumerate() {
            if table.len() != actions.len() || table.iter().any(|row| row.len() != types.len()) {
                return Err(GameError::Shape(format!(
                    "principal {j} payoff table must be {}x{}",
                    actions.len(),
                    types.len()
                )));
            }
        }
        Ok(Self {
            principals,
            agents,
            types,
            actions,
            prior,
            agent_payoffs,
            principal_payoffs,
        })
    }

    /// Builds a game from payoff closures.
    ///
    /// `agent_u(i, k, a_k, x)` and `principal_v(j, a, x)` receive decoded
    /// profiles.
    pub fn from_fn(
        principals: Vec<Principal>,
        agents: Vec<Agent>,
        prior: Vec<f64>,
        mut agent_u: impl FnMut(usize, usize, usize, &[usize]) -> f64,
        mut principal_v: impl FnMut(usize, &[usize], &[usize]) -> f64,
    ) -> Result<Self, GameError> {
        let types = ProfileSpace::new(agents.iter().map(|a| a.types.len()).collect());
        let actions = ProfileSpace::new(principals.iter().map(|p| p.actions.len()).collect());
        let type_profiles: Vec<Vec<usize>> = types.iter().collect();
        let agent_payoffs = (0..agents.len())
            .map(|i| {
                principals
                    .iter()
                    .enumerate()
                    .map(|(k, p)| {
                        (0..p.actions.len())
                            .map(|a| type_profiles.iter().map(|x| agent_u(i, k, a, x)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let principal_payoffs = (0..principals.len())
            .map(|j| {
                actions
                    .iter()
                    .map(|a| type_profiles.iter().map(|x| principal_v(j, &a, x)).collect())
                    .collect()
            })
            .collect();
        Self::new(principals, agents, prior, agent_payoffs, principal_payoffs)
    }

    pub fn principals(&self) -> &[Principal] {
        &self.principals
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn num_principals(&self) -> usize {
        self.principals.len()
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn num_actions(&self, j: usize) -> usize {
        self.principals[j].actions.len()
    }

    pub fn num_types(&self, i: usize) -> usize {
        self.agents[i].types.len()
    }

    /// Type-profile space `X = X_1 × ⋯ × X_I`.
    pub fn type_space(&self) -> &ProfileSpace {
        &self.types
    }

    /// Action-profile space `A = A_1 × ⋯ × A_J`.
    pub fn action_space(&self) -> &ProfileSpace {
        &self.actions
    }

    pub fn num_profiles(&self) -> usize {
        self.types.len()
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn agent_component(&self, i: usize, k: usize, a_k: usize, x: usize) -> f64 {
        self.agent_payoffs[i][k][a_k][x]
    }

    pub fn agent_component_table(&self, i: usize, k: usize) -> &[Vec<f64>] {
        &self.agent_payoffs[i][k]
    }

    pub fn principal_payoff(&self, j: usize, a: usize, x: usize) -> f64 {
        self.principal_payoffs[j][a][x]
    }

    pub fn principal_index(&self, key: &str) -> Option<usize> {
        self.principals.iter().position(|p| p.id == key).or_else(|| {
            key.parse::<usize>()
                .ok()
                .filter(|&n| n >= 1 && n <= self.principals.len())
                .map(|n| n - 1)
        })
    }

    pub fn agent_index(&self, key: &str) -> Option<usize> {
        self.agents.iter().position(|a| a.id == key)
    }

    /// Marginal prior probability of agent `i` having type `t`.
    pub fn type_marginal(&self, i: usize, t: usize) -> f64 {
        (0..self.types.len())
            .filter(|&x| self.types.component(x, i) == t)
            .map(|x| self.prior[x])
            .sum()
    }

    /// Types with strictly positive marginal mass; only these generate
    /// incentive constraints.
    pub fn has_positive_mass(&self, i: usize, t: usize) -> bool {
        self.type_marginal(i, t) > 0.0
    }

    /// Validates every semantic invariant, collecting all violations.
    pub fn validate(&self) -> ValidationResult {
        let mut result = ValidationResult::default();
        if self.principals.len() < 2 {
            result.violation(
                "principals",
                format!(
                    "J >= 2 required (found J = {})",
                    self.principals.len()
                ),
            );
        }
        if self.agents.is_empty() {
            result.violation("agents", "I >= 1 required (found no agents)".to_string());
        }
        for (j, p) in self.principals.iter().enumerate() {
            if p.actions.is_empty() {
                result.violation(
                    format!("principals[{j}].actions"),
                    format!("principal {} has an empty action set", p.id),
                );
            }
        }
        for (i, a) in self.agents.iter().enumerate() {
            if a.types.is_empty() {
                result.violation(
                    format!("agents[{i}].types"),
                    format!("agent {} has an empty type set", a.id),
                );
            }
        }
        for (x, &p) in self.prior.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                result.violation(
                    format!("prior[{}]", self.type_labels(x).join(",")),
                    format!("prior entry {p} is negative or not finite"),
                );
            }
        }
        let mass: f64 = self.prior.iter().sum();
        if !self.prior.is_empty() && (mass - 1.0).abs() > MASS_TOL {
            result.violation("prior", format!("prior mass {mass} != 1"));
        }
        for (i, per_agent) in self.agent_payoffs.iter().enumerate() {
            for (k, table) in per_agent.iter().enumerate() {
                for (a, row) in table.iter().enumerate() {
                    if let Some(x) = row.iter().position(|v| !v.is_finite()) {
                        result.violation(
                            format!("agent_payoffs[{i}][{k}][{a}][{x}]"),
                            "agent payoff entry is not finite".to_string(),
                        );
                    }
                }
            }
        }
        for (j, table) in self.principal_payoffs.iter().enumerate() {
            for (a, row) in table.iter().enumerate() {
                if let Some(x) = row.iter().position(|v| !v.is_finite()) {
                    result.violation(
                        format!("principal_payoffs[{j}][{a}][{x}]"),
                        "principal payoff entry is not finite".to_string(),
                    );
                }
            }
        }
        if result.violations.is_empty() {
            for (i, agent) in self.agents.iter().enumerate() {
                for (t, label) in agent.types.iter().enumerate() {
                    if !self.has_positive_mass(i, t) {
                        result.warning(
                            format!("agents[{i}].types[{t}]"),
                            format!(
                                "type {label} of agent {} has zero prior mass; excluded from \
                                 incentive constraints",
                                agent.id
                            ),
                        );
                    }
                }
            }
        }
        result
    }

    pub fn type_labels(&self, x: usize) -> Vec<String> {
        self.types
            .decode(x)
            .iter()
            .enumerate()
            .map(|(i, &t)| self.agents[i].types[t].clone())
            .collect()
    }

    pub fn action_labels(&self, a: usize) -> Vec<String> {
        self.actions
            .decode(a)
            .iter()
            .enumerate()
            .map(|(j, &b)| self.principals[j].actions[b].clone())
            .collect()
    }

    /// `F(x_{-i} | x_i = t)` over the profiles of the other agents, indexed
    /// by [`FiniteGame::others_space`].
    pub fn conditional_prior(&self, i: usize, t: usize) -> Result<Vec<f64>, GameError> {
        self.check_agent_type(i, t)?;
        let others = self.others_space(i);
        let mut out = vec![0.0; others.len()];
        for (x, w) in self.conditional_weights(i, t)? {
            out[self.others_index(i, x)] = w;
        }
        Ok(out)
    }

    /// Conditional weights `F(x | x_i = t)` listed against full profile
    /// indices. Zero-mass profiles are dropped.
    pub fn conditional_weights(&self, i: usize, t: usize) -> Result<Vec<(usize, f64)>, GameError> {
        self.check_agent_type(i, t)?;
        let marginal = self.type_marginal(i, t);
        if marginal <= 0.0 {
            return Err(GameError::ZeroProbabilityType {
                agent: i,
                type_index: t,
            });
        }
        Ok((0..self.types.len())
            .filter(|&x| self.types.component(x, i) == t && self.prior[x] > 0.0)
            .map(|x| (x, self.prior[x] / marginal))
            .collect())
    }

    /// Profile space of every agent except `i`, in declaration order.
    pub fn others_space(&self, i: usize) -> ProfileSpace {
        ProfileSpace::new(
            self.agents
                .iter()
                .enumerate()
                .filter(|&(l, _)| l != i)
                .map(|(_, a)| a.types.len())
                .collect(),
        )
    }

    fn others_index(&self, i: usize, x: usize) -> usize {
        let profile: Vec<usize> = self
            .types
            .decode(x)
            .into_iter()
            .enumerate()
            .filter(|&(l, _)| l != i)
            .map(|(_, t)| t)
            .collect();
        self.others_space(i).index(&profile)
    }

    fn check_agent_type(&self, i: usize, t: usize) -> Result<(), GameError> {
        if i >= self.agents.len() {
            return Err(GameError::IndexOutOfRange {
                what: "agent",
                index: i,
                len: self.agents.len(),
            });
        }
        if t >= self.agents[i].types.len() {
            return Err(GameError::IndexOutOfRange {
                what: "type",
                index: t,
                len: self.agents[i].types.len(),
            });
        }
        Ok(())
    }

    /// `U_{ik}(α_k, x) = Σ_{a_k} α_k(a_k) u_{ik}(a_k, x)`.
    pub fn expected_agent_component(
        &self,
        i: usize,
        k: usize,
        alpha: &[f64],
        x: usize,
    ) -> Result<f64, GameError> {
        if i >= self.agents.len() {
            return Err(GameError::IndexOutOfRange {
                what: "agent",
                index: i,
                len: self.agents.len(),
            });
        }
        if k >= self.principals.len() {
            return Err(GameError::IndexOutOfRange {
                what: "principal",
                index: k,
                len: self.principals.len(),
            });
        }
        if x >= self.types.len() {
            return Err(GameError::IndexOutOfRange {
                what: "type profile",
                index: x,
                len: self.types.len(),
            });
        }
        if alpha.len() != self.num_actions(k) {
            return Err(GameError::Shape(format!(
                "distribution over A_{k} has {} entries, expected {}",
                alpha.len(),
                self.num_actions(k)
            )));
        }
        Ok(alpha
            .iter()
            .zip(self.agent_payoffs[i][k].iter())
            .map(|(p, row)| p * row[x])
            .sum())
    }

    /// Ex-ante expected payoff of principal `j` under a profile of direct
    /// mechanisms (one per principal).
    pub fn expected_principal_payoff(
        &self,
        j: usize,
        profile: &[DirectMechanism],
    ) -> Result<f64, GameError> {
        self.check_profile(profile)?;
        let mut total = 0.0;
        for x in 0..self.types.len() {
            let weight = self.prior[x];
            if weight == 0.0 {
                continue;
            }
            let rows: Vec<&[f64]> = profile.iter().map(|m| m.row(x)).collect();
            total += weight * self.expected_at_profile(j, &rows, x);
        }
        Ok(total)
    }

    /// `V_j(α_1, …, α_J, x)` for independent random actions.
    pub fn expected_at_profile(&self, j: usize, alphas: &[&[f64]], x: usize) -> f64 {
        let table = &self.principal_payoffs[j];
        let mut sum = 0.0;
        let mut digits = vec![0usize; alphas.len()];
        for (a, row) in table.iter().enumerate() {
            self.actions.decode_into(a, &mut digits);
            let mut weight = 1.0;
            for (alpha, &d) in alphas.iter().zip(digits.iter()) {
                weight *= alpha[d];
                if weight == 0.0 {
                    break;
                }
            }
            if weight != 0.0 {
                sum += weight * row[x];
            }
        }
        sum
    }

    /// Coefficients `c[x][a_k]` of principal `j`'s payoff as a linear function
    /// of principal `k`'s mechanism, holding every other mechanism fixed.
    /// Entry `k` of `profile` is ignored.
    pub fn linear_coefficients(
        &self,
        j: usize,
        k: usize,
        profile: &[DirectMechanism],
    ) -> Result<Vec<Vec<f64>>, GameError> {
        if profile.len() != self.principals.len() {
            return Err(GameError::Shape(format!(
                "profile has {} mechanisms, game has {} principals",
                profile.len(),
                self.principals.len()
            )));
        }
        for (l, m) in profile.iter().enumerate() {
            if l != k {
                self.check_mechanism(l, m)?;
            }
        }
        let n_k = self.num_actions(k);
        let mut out = vec![vec![0.0; n_k]; self.types.len()];
        let mut digits = vec![0usize; self.principals.len()];
        for (x, coeffs) in out.iter_mut().enumerate() {
            let weight = self.prior[x];
            if weight == 0.0 {
                continue;
            }
            for (a, row) in self.principal_payoffs[j].iter().enumerate() {
                self.actions.decode_into(a, &mut digits);
                let mut w = weight;
                for (l, &d) in digits.iter().enumerate() {
                    if l != k {
                        w *= profile[l].prob(x, d);
                        if w == 0.0 {
                            break;
                        }
                    }
                }
                if w != 0.0 {
                    coeffs[digits[k]] += w * row[x];
                }
            }
        }
        Ok(out)
    }

    /// Least-squares separable decomposition of a joint agent payoff table
    /// `joint[a][x]` into components `u_k[a_k][x]`, pinned so that
    /// `u_k(first action, x) = 0` for every principal after the first.
    pub fn decompose_separable(
        &self,
        joint: &[Vec<f64>],
    ) -> Result<Vec<Vec<Vec<f64>>>, GameError> {
        let space = &self.actions;
        if joint.len() != space.len() || joint.iter().any(|r| r.len() != self.types.len()) {
            return Err(GameError::Shape(format!(
                "joint table must be {}x{}",
                space.len(),
                self.types.len()
            )));
        }
        let num_j = self.principals.len();
        let mut components: Vec<Vec<Vec<f64>>> = (0..num_j)
            .map(|k| vec![vec![0.0; self.types.len()]; self.num_actions(k)])
            .collect();
        let mut worst: Option<(f64, usize, usize)> = None;
        let mut digits = vec![0usize; num_j];
        for x in 0..self.types.len() {
            let total = space.len() as f64;
            let grand: f64 = joint.iter().map(|r| r[x]).sum::<f64>() / total;
            // Main-effect means: the least-squares additive fit on a full
            // factorial grid is grand + Σ_k (mean_k(a_k) - grand).
            let mut means: Vec<Vec<f64>> =
                (0..num_j).map(|k| vec![0.0; self.num_actions(k)]).collect();
            for (a, row) in joint.iter().enumerate() {
                space.decode_into(a, &mut digits);
                for (k, &d) in digits.iter().enumerate() {
                    means[k][d] += row[x];
                }
            }
            for (k, m) in means.iter_mut().enumerate() {
                let count = total / self.num_actions(k) as f64;
                for v in m.iter_mut() {
                    *v /= count;
                }
            }
            for (a, row) in joint.iter().enumerate() {
                space.decode_into(a, &mut digits);
                let fit = grand
                    + digits
                        .iter()
                        .enumerate()
                        .map(|(k, &d)| means[k][d] - grand)
                        .sum::<f64>();
                let residual = (row[x] - fit).abs();
                if worst.is_none_or(|(r, _, _)| residual > r) {
                    worst = Some((residual, a, x));
                }
            }
            let pinned_shift: f64 = (1..num_j).map(|k| means[k][0] - grand).sum();
            for (k, comp) in components.iter_mut().enumerate() {
                for (d, row) in comp.iter_mut().enumerate() {
                    row[x] = if k == 0 {
                        grand + (means[0][d] - grand) + pinned_shift
                    } else {
                        means[k][d] - means[k][0]
                    };
                }
            }
        }
        if let Some((residual, a, x)) = worst {
            if residual > SEPARABILITY_TOL {
                return Err(GameError::NotSeparable {
                    action_profile: space.decode(a),
                    type_profile: self.types.decode(x),
                    residual,
                });
            }
        }
        Ok(components)
    }

    /// Agent `i`'s joint payoff table `u_i[a][x] = Σ_k u_{ik}(a_k, x)`.
    pub fn joint_agent_payoff(&self, i: usize) -> Vec<Vec<f64>> {
        let mut digits = vec![0usize; self.principals.len()];
        (0..self.actions.len())
            .map(|a| {
                self.actions.decode_into(a, &mut digits);
                (0..self.types.len())
                    .map(|x| {
                        digits
                            .iter()
                            .enumerate()
                            .map(|(k, &d)| self.agent_payoffs[i][k][d][x])
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }

    pub(crate) fn check_profile(&self, profile: &[DirectMechanism]) -> Result<(), GameError> {
        if profile.len() != self.principals.len() {
            return Err(GameError::Shape(format!(
                "profile has {} mechanisms, game has {} principals",
                profile.len(),
                self.principals.len()
            )));
        }
        for (k, m) in profile.iter().enumerate() {
            self.check_mechanism(k, m)?;
        }
        Ok(())
    }

    pub(crate) fn check_mechanism(&self, k: usize, m: &DirectMechanism) -> Result<(), GameError> {
        if m.num_profiles() != self.types.len() || m.num_actions() != self.num_actions(k) {
            return Err(GameError::Shape(format!(
                "mechanism for principal {k} is {}x{}, expected {}x{}",
                m.num_profiles(),
                m.num_actions(),
                self.types.len(),
                self.num_actions(k)
            )));
        }
        Ok(())
    }
}

/// Outcome of [`FiniteGame::validate`]: violations make the game unusable,
/// warnings (zero-mass types) do not.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub violations: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl ValidationResult {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn violation(&mut self, path: impl Into<String>, message: String) {
        self.violations.push(Issue {
            path: path.into(),
            message,
        });
    }

    fn warning(&mut self, path: impl Into<String>, message: String) {
        self.warnings.push(Issue {
            path: path.into(),
            message,
        });
    }
}

/// Free-function form of [`FiniteGame::validate`].
pub fn validate_game(game: &FiniteGame) -> ValidationResult {
    game.validate()
}

fn check_distribution(row: &[f64], context: impl FnOnce() -> String) -> Result<(), GameError> {
    if let Some(p) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(GameError::InvalidDistribution {
            context: context(),
            reason: format!("entry {p} is negative or not finite"),
        });
    }
    let mass: f64 = row.iter().sum();
    if (mass - 1.0).abs() > MASS_TOL {
        return Err(GameError::InvalidDistribution {
            context: context(),
            reason: format!("mass {mass} != 1"),
        });
    }
    Ok(())
}

/// A direct mechanism `π_j : X → Δ(A_j)` stored as one probability row per
/// type profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectMechanism {
    owner: usize,
    rows: Vec<Vec<f64>>,
}

impl DirectMechanism {
    pub fn new(owner: usize, rows: Vec<Vec<f64>>) -> Result<Self, GameError> {
        let width = rows.first().map_or(0, Vec::len);
        if width == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(GameError::Shape(
                "mechanism rows must be nonempty and of equal width".to_string(),
            ));
        }
        for (x, row) in rows.iter().enumerate() {
            check_distribution(row, || format!("principal {owner}, profile {x}"))?;
        }
        Ok(Self { owner, rows })
    }

    /// Same row at every profile.
    pub fn constant(owner: usize, num_profiles: usize, alpha: &[f64]) -> Result<Self, GameError> {
        Self::new(owner, vec![alpha.to_vec(); num_profiles])
    }

    pub fn degenerate(owner: usize, num_profiles: usize, num_actions: usize, action: usize) -> Self {
        let mut row = vec![0.0; num_actions];
        row[action] = 1.0;
        Self {
            owner,
            rows: vec![row; num_profiles],
        }
    }

    pub fn uniform(owner: usize, num_profiles: usize, num_actions: usize) -> Self {
        Self {
            owner,
            rows: vec![vec![1.0 / num_actions as f64; num_actions]; num_profiles],
        }
    }

    /// Deterministic mechanism playing `choice[x]` at profile `x`.
    pub fn deterministic(owner: usize, num_actions: usize, choice: &[usize]) -> Self {
        let rows = choice
            .iter()
            .map(|&a| {
                let mut row = vec![0.0; num_actions];
                row[a] = 1.0;
                row
            })
            .collect();
        Self { owner, rows }
    }

    /// Reads a flat solver vector (profile-major), clamping round-off
    /// negatives and renormalising each row.
    pub fn from_flat(owner: usize, num_actions: usize, flat: &[f64]) -> Self {
        let rows = flat
            .chunks(num_actions)
            .map(|chunk| {
                let mut row: Vec<f64> = chunk.iter().map(|&p| p.max(0.0)).collect();
                let mass: f64 = row.iter().sum();
                if mass > 0.0 {
                    for p in row.iter_mut() {
                        *p /= mass;
                    }
                } else {
                    row = vec![1.0 / num_actions as f64; num_actions];
                }
                row
            })
            .collect();
        Self { owner, rows }
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn num_profiles(&self) -> usize {
        self.rows.len()
    }

    pub fn num_actions(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.rows[x]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn prob(&self, x: usize, a: usize) -> f64 {
        self.rows[x][a]
    }

    /// Profile-major flattening, matching the polytope variable order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }

    /// `λ·self + (1-λ)·other`.
    pub fn mix(&self, other: &DirectMechanism, lambda: f64) -> DirectMechanism {
        let rows = self
            .rows
            .iter()
            .zip(other.rows.iter())
            .map(|(a, b)| {
                a.iter()
                    .zip(b.iter())
                    .map(|(p, q)| lambda * p + (1.0 - lambda) * q)
                    .collect()
            })
            .collect();
        DirectMechanism {
            owner: self.owner,
            rows,
        }
    }

    pub fn max_abs_diff(&self, other: &DirectMechanism) -> f64 {
        self.rows
            .iter()
            .flatten()
            .zip(other.rows.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// One independent random action per principal, `(α_1, …, α_J)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomActionProfile {
    alphas: Vec<Vec<f64>>,
}

impl RandomActionProfile {
    pub fn new(game: &FiniteGame, alphas: Vec<Vec<f64>>) -> Result<Self, GameError> {
        if alphas.len() != game.num_principals() {
            return Err(GameError::Shape(format!(
                "{} distributions for {} principals",
                alphas.len(),
                game.num_principals()
            )));
        }
        for (j, alpha) in alphas.iter().enumerate() {
            if alpha.len() != game.num_actions(j) {
                return Err(GameError::Shape(format!(
                    "distribution for principal {j} has {} entries, expected {}",
                    alpha.len(),
                    game.num_actions(j)
                )));
            }
            check_distribution(alpha, || format!("random action of principal {j}"))?;
        }
        Ok(Self { alphas })
    }

    pub fn alpha(&self, j: usize) -> &[f64] {
        &self.alphas[j]
    }

    /// `U_i(α, x)` integrated over the joint product distribution, without
    /// using the separable decomposition.
    pub fn agent_payoff(&self, game: &FiniteGame, i: usize, x: usize) -> f64 {
        let joint = game.joint_agent_payoff(i);
        let mut digits = vec![0usize; self.alphas.len()];
        joint
            .iter()
            .enumerate()
            .map(|(a, row)| {
                game.action_space().decode_into(a, &mut digits);
                let w: f64 = digits
                    .iter()
                    .enumerate()
                    .map(|(k, &d)| self.alphas[k][d])
                    .product();
                w * row[x]
            })
            .sum()
    }

    /// `V_j(α, x)`.
    pub fn principal_payoff(&self, game: &FiniteGame, j: usize, x: usize) -> f64 {
        let refs: Vec<&[f64]> = self.alphas.iter().map(Vec::as_slice).collect();
        game.expected_at_profile(j, &refs, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    fn two_by_two(prior: Vec<f64>) -> FiniteGame {
        FiniteGame::from_fn(
            vec![
                Principal {
                    id: "P1".into(),
                    actions: vec!["a".into(), "b".into()],
                },
                Principal {
                    id: "P2".into(),
                    actions: vec!["c".into(), "d".into()],
                },
            ],
            vec![
                Agent {
                    id: "A1".into(),
                    types: vec!["L".into(), "H".into()],
                },
                Agent {
                    id: "A2".into(),
                    types: vec!["L".into(), "H".into()],
                },
            ],
            prior,
            |_, _, _, _| 0.0,
            |_, _, _| 1.0,
        )
        .unwrap()
    }

    #[test]
    fn well_formed_game_validates() {
        let g = catalog::mp2();
        assert!(g.validate().is_ok());
    }

    #[test]
    fn prior_mass_violation_is_reported() {
        let g = two_by_two(vec![0.25, 0.25, 0.25, 0.24]);
        let res = g.validate();
        assert!(!res.is_ok());
        assert_eq!(res.violations[0].path, "prior");
        assert!(res.violations[0].message.contains("0.99"));
    }

    #[test]
    fn single_principal_is_a_violation() {
        let g = FiniteGame::from_fn(
            vec![Principal {
                id: "P1".into(),
                actions: vec!["a".into()],
            }],
            vec![Agent {
                id: "A1".into(),
                types: vec!["t".into()],
            }],
            vec![1.0],
            |_, _, _, _| 0.0,
            |_, _, _| 0.0,
        )
        .unwrap();
        let res = g.validate();
        assert!(res.violations.iter().any(|v| v.message.contains("J >= 2")));
    }

    #[test]
    fn zero_mass_type_is_a_warning() {
        let g = two_by_two(vec![0.5, 0.5, 0.0, 0.0]);
        let res = g.validate();
        assert!(res.is_ok());
        assert_eq!(res.warnings.len(), 1);
        assert_eq!(res.warnings[0].path, "agents[0].types[1]");
    }

    #[test]
    fn conditional_prior_cases() {
        let g = two_by_two(vec![0.25; 4]);
        assert_eq!(g.conditional_prior(0, 0).unwrap(), vec![0.5, 0.5]);

        let g = two_by_two(vec![0.4, 0.1, 0.1, 0.4]);
        let c = g.conditional_prior(0, 0).unwrap();
        // Bayes by hand: 0.4 / 0.5 and 0.1 / 0.5.
        assert!((c[0] - 0.8).abs() < 1e-15 && (c[1] - 0.2).abs() < 1e-15);

        let g = two_by_two(vec![0.5, 0.5, 0.0, 0.0]);
        assert_eq!(
            g.conditional_prior(0, 1),
            Err(GameError::ZeroProbabilityType {
                agent: 0,
                type_index: 1
            })
        );
    }

    #[test]
    fn conditional_prior_for_second_agent() {
        let g = two_by_two(vec![0.4, 0.1, 0.2, 0.3]);
        // x_2 = H: F(L,H) = 0.1, F(H,H) = 0.3.
        let c = g.conditional_prior(1, 1).unwrap();
        assert!((c[0] - 0.25).abs() < 1e-15 && (c[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn expected_agent_component_cases() {
        let g = FiniteGame::from_fn(
            catalog::binary_principals(2),
            vec![Agent {
                id: "A1".into(),
                types: vec!["t".into()],
            }],
            vec![1.0],
            |_, k, a, _| if k == 0 { [1.0, 0.0][a] } else { 3.0 },
            |_, _, _| 0.0,
        )
        .unwrap();
        assert_eq!(g.expected_agent_component(0, 0, &[1.0, 0.0], 0).unwrap(), 1.0);
        assert_eq!(g.expected_agent_component(0, 0, &[0.5, 0.5], 0).unwrap(), 0.5);
        assert!((g.expected_agent_component(0, 1, &[0.3, 0.7], 0).unwrap() - 3.0).abs() < 1e-15);
        assert!(matches!(
            g.expected_agent_component(1, 0, &[1.0, 0.0], 0),
            Err(GameError::IndexOutOfRange { what: "agent", .. })
        ));
    }

    #[test]
    fn principal_payoff_cases() {
        let g = two_by_two(vec![0.25; 4]);
        let profile = [DirectMechanism::uniform(0, 4, 2), DirectMechanism::uniform(1, 4, 2)];
        assert!((g.expected_principal_payoff(0, &profile).unwrap() - 1.0).abs() < 1e-15);

        let mp2 = catalog::mp2();
        let coin = [DirectMechanism::uniform(0, 1, 2), DirectMechanism::uniform(1, 1, 2)];
        // Four equally likely action pairs, two of which match.
        assert!((mp2.expected_principal_payoff(0, &coin).unwrap() - 0.5).abs() < 1e-15);
        let pure = [
            DirectMechanism::degenerate(0, 1, 2, 0),
            DirectMechanism::degenerate(1, 1, 2, 1),
        ];
        assert_eq!(mp2.expected_principal_payoff(0, &pure).unwrap(), 0.0);
        assert_eq!(mp2.expected_principal_payoff(1, &pure).unwrap(), 1.0);

        let bad = [DirectMechanism::uniform(0, 2, 2), DirectMechanism::uniform(1, 1, 2)];
        assert!(matches!(
            mp2.expected_principal_payoff(0, &bad),
            Err(GameError::Shape(_))
        ));
    }

    #[test]
    fn decompose_constructed_separable() {
        let g = catalog::random_separable_game(&mut catalog::rng(7), &catalog::RandomGameSpec::default());
        for i in 0..g.num_agents() {
            let joint = g.joint_agent_payoff(i);
            let comps = g.decompose_separable(&joint).unwrap();
            let mut digits = vec![0; g.num_principals()];
            for (a, row) in joint.iter().enumerate() {
                g.action_space().decode_into(a, &mut digits);
                for (x, &u) in row.iter().enumerate() {
                    let s: f64 = digits.iter().enumerate().map(|(k, &d)| comps[k][d][x]).sum();
                    assert!((s - u).abs() <= 1e-12);
                }
            }
            for comp in comps.iter().skip(1) {
                assert!(comp[0].iter().all(|v| *v == 0.0));
            }
            // Pinned components differ from the originals only by per-x shifts.
            for k in 0..g.num_principals() {
                for x in 0..g.num_profiles() {
                    let shift = comps[k][0][x] - g.agent_component(i, k, 0, x);
                    for a in 0..g.num_actions(k) {
                        let d = comps[k][a][x] - g.agent_component(i, k, a, x);
                        assert!((d - shift).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn product_interaction_is_not_separable() {
        let g = FiniteGame::from_fn(
            catalog::binary_principals(2),
            vec![Agent {
                id: "A1".into(),
                types: vec!["t".into()],
            }],
            vec![1.0],
            |_, _, _, _| 0.0,
            |_, _, _| 0.0,
        )
        .unwrap();
        // u(a) = a_1 a_2 over {0,1}^2. Additive solutions require
        // u(0,0) + u(1,1) - u(0,1) - u(1,0) = 0, but here it is 1.
        let joint: Vec<Vec<f64>> = (0..4).map(|a| vec![((a >> 1) & (a & 1)) as f64]).collect();
        let interaction = joint[0][0] + joint[3][0] - joint[1][0] - joint[2][0];
        assert_eq!(interaction, 1.0);
        match g.decompose_separable(&joint) {
            Err(GameError::NotSeparable { residual, .. }) => assert!(residual > 0.2),
            other => panic!("expected NotSeparable, got {other:?}"),
        }
    }

    #[test]
    fn zero_table_decomposes_to_zero() {
        let g = catalog::mp2();
        let joint = vec![vec![0.0; 1]; 4];
        let comps = g.decompose_separable(&joint).unwrap();
        assert!(comps.iter().flatten().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn mechanism_rows_must_be_distributions() {
        assert!(DirectMechanism::new(0, vec![vec![0.5, 0.4]]).is_err());
        assert!(DirectMechanism::new(0, vec![vec![1.5, -0.5]]).is_err());
        assert!(DirectMechanism::new(0, vec![vec![0.25, 0.75]]).is_ok());
    }
}
