use std::collections::HashMap;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    build_type_and_dm_mechanism, for_each_combination, induce_direct_mechanism, support,
    GeneralMechanism, MechanismError, PureStrategyProfile, StrategyProfile,
};
use crate::bic::BicPolytope;
use crate::game::{DirectMechanism, FiniteGame, ProfileSpace};
use crate::solver::best_response_unchecked;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumerationCaps {
    /// Agent message assignments tried per (principal, principal message).
    pub component_profiles: u128,
    /// Combinations of per-principal agent equilibria.
    pub joint_profiles: u128,
    /// Distinct opponent profiles answered by a full-menu mechanism.
    pub menu_entries: u128,
}

impl Default for EnumerationCaps {
    fn default() -> Self {
        Self {
            component_profiles: 2_000_000,
            joint_profiles: 5_000_000,
            menu_entries: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "player", rename_all = "kebab-case")]
pub enum Deviation {
    Agent {
        agent: usize,
        type_index: usize,
        gain: f64,
        /// `(principal, message)` for every component with a profitable switch.
        messages: Vec<(usize, usize)>,
    },
    Principal {
        principal: usize,
        message: usize,
        gain: f64,
    },
}

impl Deviation {
    pub fn gain(&self) -> f64 {
        match self {
            Deviation::Agent { gain, .. } | Deviation::Principal { gain, .. } => *gain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationVerdict {
    pub ok: bool,
    pub max_gain: f64,
    pub worst: Option<Deviation>,
}

fn check_profile_shape(
    game: &FiniteGame,
    mechanisms: &[GeneralMechanism],
) -> Result<(), MechanismError> {
    if mechanisms.len() != game.num_principals() {
        return Err(MechanismError::Shape(format!(
            "{} mechanisms for {} principals",
            mechanisms.len(),
            game.num_principals()
        )));
    }
    for (j, m) in mechanisms.iter().enumerate() {
        if m.owner() != j {
            return Err(MechanismError::Shape(format!(
                "mechanism {j} belongs to principal {}",
                m.owner()
            )));
        }
        m.check_against(game)?;
    }
    Ok(())
}

/// Distribution of `a_k` at type profile `x` when agent `fixed.0` sends
/// `fixed.1` to principal `k` and everyone else follows `strategies`.
fn outcome_with(
    mechanism: &GeneralMechanism,
    strategies: &StrategyProfile,
    types: &[usize],
    fixed: Option<(usize, usize)>,
) -> Vec<f64> {
    let k = mechanism.owner();
    let supports: Vec<Vec<(usize, f64)>> = types
        .iter()
        .enumerate()
        .map(|(i, &t)| match fixed {
            Some((fi, m)) if fi == i => vec![(m, 1.0)],
            _ => support(&strategies.agents[i][k][t]),
        })
        .collect();
    let mut row = vec![0.0; mechanism.num_actions()];
    for (m0, &p0) in strategies.principal[k].iter().enumerate() {
        if p0 == 0.0 {
            continue;
        }
        for_each_combination(&supports, |msgs, w| {
            for (r, o) in row.iter_mut().zip(mechanism.outcome(m0, msgs)) {
                *r += p0 * w * o;
            }
        });
    }
    row
}

fn payoff_of(game: &FiniteGame, j: usize, profile: &[&DirectMechanism]) -> f64 {
    let mut total = 0.0;
    let mut rows: Vec<&[f64]> = Vec::with_capacity(profile.len());
    for (x, &w) in game.prior().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        rows.clear();
        rows.extend(profile.iter().map(|m| m.row(x)));
        total += w * game.expected_at_profile(j, &rows, x);
    }
    total
}

/// Checks both continuation-equilibrium conditions: no agent type gains by
/// changing its messages and no principal gains by changing its own message.
/// Agent deviations are evaluated component by component, which is exact
/// because agent payoffs are separable across principals.
pub fn check_continuation_equilibrium(
    game: &FiniteGame,
    mechanisms: &[GeneralMechanism],
    strategies: &StrategyProfile,
    tol: f64,
) -> Result<ContinuationVerdict, MechanismError> {
    check_profile_shape(game, mechanisms)?;
    strategies.validate(game, mechanisms)?;
    let space = game.type_space();
    let decoded: Vec<Vec<usize>> = space.iter().collect();
    let mut worst: Option<Deviation> = None;
    let mut record = |d: Deviation| {
        if worst.as_ref().is_none_or(|w| d.gain() > w.gain()) {
            worst = Some(d);
        }
    };

    for i in 0..game.num_agents() {
        for t in 0..game.num_types(i) {
            if !game.has_positive_mass(i, t) {
                continue;
            }
            let weights = game.conditional_weights(i, t)?;
            let mut gain = 0.0;
            let mut messages = Vec::new();
            for (k, mech) in mechanisms.iter().enumerate() {
                let table = game.agent_component_table(i, k);
                let values: Vec<f64> = (0..mech.num_agent_messages(i))
                    .map(|m| {
                        weights
                            .iter()
                            .map(|&(x, w)| {
                                let dist = outcome_with(mech, strategies, &decoded[x], Some((i, m)));
                                w * dist.iter().zip(table).map(|(p, u)| p * u[x]).sum::<f64>()
                            })
                            .sum()
                    })
                    .collect();
                let current: f64 = strategies.agents[i][k][t]
                    .iter()
                    .zip(&values)
                    .map(|(p, v)| p * v)
                    .sum();
                let (best_m, best_v) = argmax(&values);
                if best_v - current > 0.0 {
                    gain += best_v - current;
                    messages.push((k, best_m));
                }
            }
            record(Deviation::Agent {
                agent: i,
                type_index: t,
                gain,
                messages,
            });
        }
    }

    let induced: Vec<DirectMechanism> = mechanisms
        .iter()
        .map(|m| induce_direct_mechanism(game, m, strategies))
        .collect::<Result<_, _>>()?;
    for (j, mech) in mechanisms.iter().enumerate() {
        let refs: Vec<&DirectMechanism> = induced.iter().collect();
        let current = payoff_of(game, j, &refs);
        for m0 in 0..mech.num_principal_messages() {
            let mut alt = strategies.clone();
            alt.principal[j] = vec![0.0; mech.num_principal_messages()];
            alt.principal[j][m0] = 1.0;
            let deviated = induce_direct_mechanism(game, mech, &alt)?;
            let mut refs = refs.clone();
            refs[j] = &deviated;
            record(Deviation::Principal {
                principal: j,
                message: m0,
                gain: payoff_of(game, j, &refs) - current,
            });
        }
    }
    let max_gain = worst.as_ref().map_or(0.0, Deviation::gain).max(0.0);
    Ok(ContinuationVerdict {
        ok: max_gain <= tol,
        max_gain,
        worst: worst.filter(|w| w.gain() > 0.0),
    })
}

fn argmax(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (m, &v)| if v > bv { (m, v) } else { (bi, bv) })
}

/// Pure agent messages to one principal, for one principal message, that are
/// mutually optimal for the agents.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentEquilibrium {
    pub principal_message: usize,
    /// `[i][x_i]`; zero-mass types send message 0.
    pub agent_messages: Vec<Vec<usize>>,
    /// Induced direct mechanism for every principal message, agents fixed.
    pub alternatives: Vec<DirectMechanism>,
}

impl ComponentEquilibrium {
    pub fn induced(&self) -> &DirectMechanism {
        &self.alternatives[self.principal_message]
    }
}

/// All pure continuation equilibria of a mechanism profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationEquilibria {
    /// Per principal, the component equilibria.
    pub components: Vec<Vec<ComponentEquilibrium>>,
    /// Each equilibrium as one component index per principal.
    pub equilibria: Vec<Vec<usize>>,
}

impl ContinuationEquilibria {
    pub fn len(&self) -> usize {
        self.equilibria.len()
    }

    pub fn is_empty(&self) -> bool {
        self.equilibria.is_empty()
    }

    pub fn profile(&self, e: usize) -> PureStrategyProfile {
        let picks = &self.equilibria[e];
        let n_agents = self.components[0][picks[0]].agent_messages.len();
        PureStrategyProfile {
            principal: picks
                .iter()
                .enumerate()
                .map(|(k, &c)| self.components[k][c].principal_message)
                .collect(),
            agents: (0..n_agents)
                .map(|i| {
                    picks
                        .iter()
                        .enumerate()
                        .map(|(k, &c)| self.components[k][c].agent_messages[i].clone())
                        .collect()
                })
                .collect(),
        }
    }

    pub fn induced(&self, e: usize) -> Vec<&DirectMechanism> {
        self.equilibria[e]
            .iter()
            .enumerate()
            .map(|(k, &c)| self.components[k][c].induced())
            .collect()
    }

    pub fn payoff(&self, game: &FiniteGame, j: usize, e: usize) -> f64 {
        payoff_of(game, j, &self.induced(e))
    }
}

/// Component equilibria of principal `k`'s mechanism.
fn component_equilibria(
    game: &FiniteGame,
    mechanism: &GeneralMechanism,
    caps: &EnumerationCaps,
    tol: f64,
) -> Result<Vec<ComponentEquilibrium>, MechanismError> {
    let k = mechanism.owner();
    let n_agents = game.num_agents();
    let space = game.type_space();
    let decoded: Vec<Vec<usize>> = space.iter().collect();
    let mut slots: Vec<(usize, usize, Vec<(usize, f64)>)> = Vec::new();
    for i in 0..n_agents {
        for t in 0..game.num_types(i) {
            if game.has_positive_mass(i, t) {
                slots.push((i, t, game.conditional_weights(i, t)?));
            }
        }
    }
    let radix = ProfileSpace::new(
        slots
            .iter()
            .map(|&(i, _, _)| mechanism.num_agent_messages(i))
            .collect(),
    );
    let size = slots.iter().fold(1u128, |acc, &(i, _, _)| {
        acc.saturating_mul(mechanism.num_agent_messages(i) as u128)
    });
    let total = size.saturating_mul(mechanism.num_principal_messages() as u128);
    if total > caps.component_profiles {
        return Err(MechanismError::EnumerationTooLarge {
            what: "agent message assignments",
            size: total,
            cap: caps.component_profiles,
        });
    }
    let tables: Vec<&[Vec<f64>]> = (0..n_agents)
        .map(|i| game.agent_component_table(i, k))
        .collect();
    let n_a = mechanism.num_actions();

    let assignment = |digits: &[usize]| {
        let mut s: Vec<Vec<usize>> = (0..n_agents).map(|i| vec![0; game.num_types(i)]).collect();
        for (&(i, t, _), &d) in slots.iter().zip(digits) {
            s[i][t] = d;
        }
        s
    };
    let messages_at = |s: &[Vec<usize>], x: usize, out: &mut [usize]| {
        for (i, o) in out.iter_mut().enumerate() {
            *o = s[i][decoded[x][i]];
        }
    };
    let induce = |s: &[Vec<usize>], m0: usize| {
        let mut msgs = vec![0usize; n_agents];
        let mut flat = Vec::with_capacity(space.len() * n_a);
        for x in 0..space.len() {
            messages_at(s, x, &mut msgs);
            flat.extend_from_slice(mechanism.outcome(m0, &msgs));
        }
        DirectMechanism::from_flat(k, n_a, &flat)
    };

    let per_m0: Vec<Vec<ComponentEquilibrium>> = (0..mechanism.num_principal_messages())
        .into_par_iter()
        .map(|m0| {
            let mut found = Vec::new();
            let mut digits = vec![0usize; slots.len()];
            let mut msgs = vec![0usize; n_agents];
            for idx in 0..radix.len() {
                radix.decode_into(idx, &mut digits);
                let s = assignment(&digits);
                let stable = slots.iter().all(|(i, t, weights)| {
                    let i = *i;
                    let value = |m: usize, msgs: &mut Vec<usize>| -> f64 {
                        weights
                            .iter()
                            .map(|&(x, w)| {
                                messages_at(&s, x, msgs);
                                msgs[i] = m;
                                let out = mechanism.outcome(m0, msgs);
                                w * out.iter().zip(tables[i]).map(|(p, u)| p * u[x]).sum::<f64>()
                            })
                            .sum()
                    };
                    let current = value(s[i][*t], &mut msgs);
                    (0..mechanism.num_agent_messages(i)).all(|m| value(m, &mut msgs) <= current + tol)
                });
                if stable {
                    let alternatives = (0..mechanism.num_principal_messages())
                        .map(|alt| induce(&s, alt))
                        .collect();
                    found.push(ComponentEquilibrium {
                        principal_message: m0,
                        agent_messages: s,
                        alternatives,
                    });
                }
            }
            found
        })
        .collect();
    Ok(per_m0.into_iter().flatten().collect())
}

/// Enumerates every pure-strategy continuation equilibrium.
///
/// Agent incentives separate by principal, so the agent side is solved per
/// mechanism and the principal condition is then checked on the product.
pub fn enumerate_pure_continuation_equilibria(
    game: &FiniteGame,
    mechanisms: &[GeneralMechanism],
    caps: &EnumerationCaps,
    tol: f64,
) -> Result<ContinuationEquilibria, MechanismError> {
    check_profile_shape(game, mechanisms)?;
    let components: Vec<Vec<ComponentEquilibrium>> = mechanisms
        .iter()
        .map(|m| component_equilibria(game, m, caps, tol))
        .collect::<Result<_, _>>()?;
    let product = ProfileSpace::new(components.iter().map(Vec::len).collect());
    let size = components
        .iter()
        .fold(1u128, |acc, c| acc.saturating_mul(c.len() as u128));
    if size > caps.joint_profiles {
        return Err(MechanismError::EnumerationTooLarge {
            what: "joint continuation profiles",
            size,
            cap: caps.joint_profiles,
        });
    }
    let equilibria: Vec<Vec<usize>> = (0..product.len())
        .into_par_iter()
        .filter_map(|idx| {
            let picks = product.decode(idx);
            let current: Vec<&DirectMechanism> = picks
                .iter()
                .enumerate()
                .map(|(k, &c)| components[k][c].induced())
                .collect();
            let stable = (0..mechanisms.len()).all(|j| {
                let base = payoff_of(game, j, &current);
                let comp = &components[j][picks[j]];
                comp.alternatives.iter().enumerate().all(|(m0, alt)| {
                    if m0 == comp.principal_message {
                        return true;
                    }
                    let mut swapped = current.clone();
                    swapped[j] = alt;
                    payoff_of(game, j, &swapped) <= base + tol
                })
            });
            stable.then_some(picks)
        })
        .collect();
    Ok(ContinuationEquilibria {
        components,
        equilibria,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Notion {
    Pbe,
    Robust,
    StronglyRobust,
}

impl Notion {
    pub fn as_str(&self) -> &'static str {
        match self {
            Notion::Pbe => "pbe",
            Notion::Robust => "robust",
            Notion::StronglyRobust => "strongly-robust",
        }
    }
}

impl FromStr for Notion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pbe" => Ok(Notion::Pbe),
            "robust" => Ok(Notion::Robust),
            "strongly-robust" => Ok(Notion::StronglyRobust),
            other => Err(format!(
                "unknown notion `{other}` (expected pbe, robust or strongly-robust)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NotionStatus {
    Holds,
    Fails,
    InfeasibleCheck,
}

impl NotionStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            NotionStatus::Holds => "holds",
            NotionStatus::Fails => "fails",
            NotionStatus::InfeasibleCheck => "infeasible-check",
        }
    }
}

/// Equilibrium mechanisms, on-path play and the finite deviation sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub mechanisms: Vec<GeneralMechanism>,
    pub on_path: PureStrategyProfile,
    /// `[j]`: mechanisms principal `j` may deviate to.
    pub deviations: Vec<Vec<GeneralMechanism>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationOutcome {
    pub principal: usize,
    pub index: usize,
    /// Number of pure continuation equilibria after the deviation.
    pub equilibria: usize,
    /// Deviator's payoff under the notion's selection; `None` when the
    /// subgame has no pure continuation equilibrium.
    pub value: Option<f64>,
    pub profitable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotionVerdict {
    pub notion: Notion,
    pub status: NotionStatus,
    /// Continuation equilibria are searched over pure strategies only.
    pub strategy_restriction: String,
    pub on_path_equilibrium: bool,
    pub on_path_worst: Option<Deviation>,
    pub payoffs: Vec<f64>,
    pub deviations: Vec<DeviationOutcome>,
    pub tol: f64,
}

/// Deviator `j`'s payoff after a deviation under the notion's selection of
/// continuation equilibria: the least favourable one (pbe), the most
/// favourable one (strongly robust), or the least favourable play towards
/// the other principals with the most favourable completion towards `j`
/// (robust).
fn notion_value(
    game: &FiniteGame,
    eqs: &ContinuationEquilibria,
    j: usize,
    notion: Notion,
) -> Option<f64> {
    if eqs.is_empty() {
        return None;
    }
    let values = (0..eqs.len()).map(|e| eqs.payoff(game, j, e));
    Some(match notion {
        Notion::Pbe => values.fold(f64::INFINITY, f64::min),
        Notion::StronglyRobust => values.fold(f64::NEG_INFINITY, f64::max),
        Notion::Robust => {
            let mut groups: HashMap<Vec<usize>, f64> = HashMap::new();
            for (e, v) in values.enumerate() {
                let mut key = eqs.equilibria[e].clone();
                key.remove(j);
                let slot = groups.entry(key).or_insert(f64::NEG_INFINITY);
                *slot = slot.max(v);
            }
            groups.into_values().fold(f64::INFINITY, f64::min)
        }
    })
}

/// Checks whether the candidate is an equilibrium of the given notion against
/// its finite deviation sets, restricting continuation play to pure strategies.
pub fn check_equilibrium_notion(
    game: &FiniteGame,
    candidate: &Candidate,
    notion: Notion,
    caps: &EnumerationCaps,
    tol: f64,
) -> Result<NotionVerdict, MechanismError> {
    check_profile_shape(game, &candidate.mechanisms)?;
    if candidate.deviations.len() != game.num_principals() {
        return Err(MechanismError::Shape(format!(
            "{} deviation sets for {} principals",
            candidate.deviations.len(),
            game.num_principals()
        )));
    }
    if let Some(j) = candidate.deviations.iter().position(Vec::is_empty) {
        return Err(MechanismError::DeviationSetEmpty { principal: j });
    }
    let on_path = candidate.on_path.to_mixed(&candidate.mechanisms);
    let verdict = check_continuation_equilibrium(game, &candidate.mechanisms, &on_path, tol)?;
    let induced: Vec<DirectMechanism> = candidate
        .mechanisms
        .iter()
        .map(|m| induce_direct_mechanism(game, m, &on_path))
        .collect::<Result<_, _>>()?;
    let refs: Vec<&DirectMechanism> = induced.iter().collect();
    let payoffs: Vec<f64> = (0..game.num_principals())
        .map(|j| payoff_of(game, j, &refs))
        .collect();

    let jobs: Vec<(usize, usize)> = candidate
        .deviations
        .iter()
        .enumerate()
        .flat_map(|(j, set)| (0..set.len()).map(move |d| (j, d)))
        .collect();
    let deviations: Vec<DeviationOutcome> = jobs
        .par_iter()
        .map(|&(j, d)| {
            let mut mechs = candidate.mechanisms.clone();
            mechs[j] = candidate.deviations[j][d].clone();
            let eqs = enumerate_pure_continuation_equilibria(game, &mechs, caps, tol)?;
            let value = notion_value(game, &eqs, j, notion);
            Ok(DeviationOutcome {
                principal: j,
                index: d,
                equilibria: eqs.len(),
                value,
                profitable: value.is_some_and(|v| v > payoffs[j] + tol),
            })
        })
        .collect::<Result<_, MechanismError>>()?;

    let status = if !verdict.ok || deviations.iter().any(|d| d.profitable) {
        NotionStatus::Fails
    } else if deviations.iter().any(|d| d.value.is_none()) {
        NotionStatus::InfeasibleCheck
    } else {
        NotionStatus::Holds
    };
    Ok(NotionVerdict {
        notion,
        status,
        strategy_restriction: "pure-strategy".into(),
        on_path_equilibrium: verdict.ok,
        on_path_worst: verdict.worst,
        payoffs,
        deviations,
        tol,
    })
}

/// Type-and-DM mechanism for `j` whose menu holds a best response to every
/// distinct direct mechanism profile the other principals' mechanisms can
/// induce in an agent equilibrium. Entry `j` of `mechanisms` is ignored.
pub fn full_menu_type_and_dm(
    game: &FiniteGame,
    j: usize,
    mechanisms: &[GeneralMechanism],
    caps: &EnumerationCaps,
    tol: f64,
) -> Result<GeneralMechanism, MechanismError> {
    check_profile_shape(game, mechanisms)?;
    let mut realized: Vec<Vec<DirectMechanism>> = Vec::new();
    for (k, mech) in mechanisms.iter().enumerate() {
        if k == j {
            continue;
        }
        let mut distinct: Vec<DirectMechanism> = Vec::new();
        for comp in component_equilibria(game, mech, caps, tol)? {
            for alt in comp.alternatives {
                if !distinct.iter().any(|d| d.max_abs_diff(&alt) <= 1e-12) {
                    distinct.push(alt);
                }
            }
        }
        realized.push(distinct);
    }
    let size = realized
        .iter()
        .fold(1u128, |acc, r| acc.saturating_mul(r.len() as u128));
    if size > caps.menu_entries {
        return Err(MechanismError::EnumerationTooLarge {
            what: "opponent profiles for the menu",
            size,
            cap: caps.menu_entries,
        });
    }
    let poly = BicPolytope::new(game, j);
    let product = ProfileSpace::new(realized.iter().map(Vec::len).collect());
    let mut menu: Vec<DirectMechanism> = Vec::new();
    for digits in product.iter() {
        let others: Vec<DirectMechanism> = digits
            .iter()
            .zip(&realized)
            .map(|(&d, set)| set[d].clone())
            .collect();
        let br = best_response_unchecked(game, &poly, &others)?;
        if !menu.iter().any(|m| m.max_abs_diff(&br.mechanism) <= 1e-12) {
            menu.push(br.mechanism);
        }
    }
    build_type_and_dm_mechanism(game, j, &menu)
}

/// A random finite mechanism for principal `j` with up to `max_messages`
/// messages per player. Rows are degenerate or uniformly drawn weights.
pub fn random_mechanism<R: Rng + ?Sized>(
    game: &FiniteGame,
    j: usize,
    max_messages: usize,
    rng: &mut R,
) -> Result<GeneralMechanism, MechanismError> {
    let max_messages = max_messages.max(1);
    let labels = |n: usize, prefix: &str| (0..n).map(|m| format!("{prefix}{m}")).collect::<Vec<_>>();
    let m0 = labels(rng.random_range(1..=max_messages), "r");
    let agents = (0..game.num_agents())
        .map(|_| labels(rng.random_range(1..=max_messages), "m"))
        .collect();
    let n_a = game.num_actions(j);
    GeneralMechanism::from_fn(j, m0, agents, |_, _| {
        let mut row = vec![0.0; n_a];
        if rng.random_bool(0.5) {
            row[rng.random_range(0..n_a)] = 1.0;
        } else {
            for r in row.iter_mut() {
                *r = rng.random::<f64>() + 1e-3;
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|r| *r /= s);
        }
        row
    })
}

/// Draws random mechanisms for `j` until the subgame against `mechanisms`
/// (entry `j` replaced) has a pure continuation equilibrium in which every
/// other principal's mechanism induces its punishment `punishments`
/// (principals other than `j`, in index order). `None` after `max_tries`.
#[allow(clippy::too_many_arguments)]
pub fn random_deviation_mechanism<R: Rng + ?Sized>(
    game: &FiniteGame,
    j: usize,
    mechanisms: &[GeneralMechanism],
    punishments: &[DirectMechanism],
    max_messages: usize,
    max_tries: usize,
    caps: &EnumerationCaps,
    tol: f64,
    rng: &mut R,
) -> Result<Option<GeneralMechanism>, MechanismError> {
    for _ in 0..max_tries {
        let candidate = random_mechanism(game, j, max_messages, rng)?;
        let mut mechs = mechanisms.to_vec();
        mechs[j] = candidate.clone();
        let eqs = enumerate_pure_continuation_equilibria(game, &mechs, caps, tol)?;
        let punishing = (0..eqs.len()).any(|e| {
            eqs.induced(e)
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .zip(punishments)
                .all(|((_, m), p)| m.max_abs_diff(p) <= 1e-9)
        });
        if punishing {
            return Ok(Some(candidate));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{mp2, screen1};
    use crate::mechanisms::build_deviator_reporting;

    fn direct(g: &FiniteGame, m: &DirectMechanism) -> GeneralMechanism {
        GeneralMechanism::from_direct(g, m).unwrap()
    }

    #[test]
    fn truthful_bic_is_continuation_equilibrium() {
        let g = screen1();
        let mechs = [
            direct(&g, &DirectMechanism::deterministic(0, 2, &[0, 1])),
            direct(&g, &DirectMechanism::degenerate(1, 2, 1, 0)),
        ];
        let s = PureStrategyProfile::truthful(&g, &mechs).to_mixed(&mechs);
        let v = check_continuation_equilibrium(&g, &mechs, &s, 1e-9).unwrap();
        assert!(v.ok, "{v:?}");
    }

    #[test]
    fn misreporting_is_detected() {
        let g = screen1();
        let mechs = [
            direct(&g, &DirectMechanism::deterministic(0, 2, &[0, 1])),
            direct(&g, &DirectMechanism::degenerate(1, 2, 1, 0)),
        ];
        let mut pure = PureStrategyProfile::truthful(&g, &mechs);
        pure.agents[0][0] = vec![1, 0];
        let v = check_continuation_equilibrium(&g, &mechs, &pure.to_mixed(&mechs), 1e-9).unwrap();
        assert!(!v.ok);
        match v.worst.unwrap() {
            Deviation::Agent { agent, gain, messages, .. } => {
                assert_eq!(agent, 0);
                assert!((gain - 1.0).abs() < 1e-12);
                assert_eq!(messages.len(), 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn principal_menu_choice_is_checked() {
        let g = mp2();
        let menu = GeneralMechanism::from_fn(0, vec!["h".into(), "t".into()], vec![vec!["t".into()]; 3], |m0, _| {
            if m0 == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }
        })
        .unwrap();
        let heads = direct(&g, &DirectMechanism::degenerate(1, 1, 2, 0));
        let mechs = [menu, heads];
        let mut pure = PureStrategyProfile::truthful(&g, &mechs);
        pure.principal[0] = 1;
        let v = check_continuation_equilibrium(&g, &mechs, &pure.to_mixed(&mechs), 1e-9).unwrap();
        assert!(!v.ok);
        assert_eq!(
            v.worst,
            Some(Deviation::Principal { principal: 0, message: 0, gain: 1.0 })
        );
        let eqs = enumerate_pure_continuation_equilibria(&g, &mechs, &EnumerationCaps::default(), 1e-9).unwrap();
        assert_eq!(eqs.len(), 1);
        assert_eq!(eqs.profile(0).principal, vec![0, 0]);
    }

    #[test]
    fn enumeration_matches_direct_check() {
        let g = screen1();
        let mechs = [
            direct(&g, &DirectMechanism::deterministic(0, 2, &[0, 1])),
            direct(&g, &DirectMechanism::degenerate(1, 2, 1, 0)),
        ];
        let eqs = enumerate_pure_continuation_equilibria(&g, &mechs, &EnumerationCaps::default(), 1e-9).unwrap();
        // Truthful towards P1; anything towards the constant P2 mechanism.
        assert_eq!(eqs.len(), 4);
        assert!((0..4).all(|e| eqs.profile(e).agents[0][0] == vec![0, 1]));
        for e in 0..eqs.len() {
            let s = eqs.profile(e).to_mixed(&mechs);
            assert!(check_continuation_equilibrium(&g, &mechs, &s, 1e-9).unwrap().ok);
        }
    }

    #[test]
    fn enumeration_cap() {
        let g = screen1();
        let mechs = [
            direct(&g, &DirectMechanism::deterministic(0, 2, &[0, 1])),
            direct(&g, &DirectMechanism::degenerate(1, 2, 1, 0)),
        ];
        let caps = EnumerationCaps {
            component_profiles: 1,
            ..EnumerationCaps::default()
        };
        assert!(matches!(
            enumerate_pure_continuation_equilibria(&g, &mechs, &caps, 1e-9),
            Err(MechanismError::EnumerationTooLarge { .. })
        ));
    }

    fn mp2_candidate() -> (FiniteGame, Candidate) {
        let g = mp2();
        let coin = |k| DirectMechanism::uniform(k, 1, 2);
        let mechs: Vec<GeneralMechanism> = (0..2)
            .map(|k| build_deviator_reporting(&g, k, &coin(k), &[(1 - k, coin(k))]).unwrap())
            .collect();
        let on_path = PureStrategyProfile::truthful(&g, &mechs);
        let deviations = (0..2)
            .map(|j| vec![full_menu_type_and_dm(&g, j, &mechs, &EnumerationCaps::default(), 1e-9).unwrap()])
            .collect();
        (
            g,
            Candidate {
                mechanisms: mechs,
                on_path,
                deviations,
            },
        )
    }

    #[test]
    fn mp2_mixed_outcome_is_robust() {
        let (g, cand) = mp2_candidate();
        for notion in [Notion::Pbe, Notion::Robust, Notion::StronglyRobust] {
            let v = check_equilibrium_notion(&g, &cand, notion, &EnumerationCaps::default(), 1e-9).unwrap();
            assert_eq!(v.status, NotionStatus::Holds, "{notion:?}: {v:?}");
            assert!(v.payoffs.iter().all(|p| (p - 0.5).abs() < 1e-12));
        }
    }

    #[test]
    fn empty_deviation_set_is_rejected() {
        let (g, mut cand) = mp2_candidate();
        cand.deviations[1].clear();
        assert!(matches!(
            check_equilibrium_notion(&g, &cand, Notion::Robust, &EnumerationCaps::default(), 1e-9),
            Err(MechanismError::DeviationSetEmpty { principal: 1 })
        ));
    }

    #[test]
    fn pure_outcome_in_mp2_fails() {
        let g = mp2();
        let heads = |k| DirectMechanism::degenerate(k, 1, 2, 0);
        let mechs: Vec<GeneralMechanism> = (0..2)
            .map(|k| build_deviator_reporting(&g, k, &heads(k), &[(1 - k, heads(k))]).unwrap())
            .collect();
        let on_path = PureStrategyProfile::truthful(&g, &mechs);
        let tails = direct(&g, &DirectMechanism::degenerate(1, 1, 2, 1));
        let cand = Candidate {
            deviations: vec![vec![mechs[0].clone()], vec![tails]],
            mechanisms: mechs,
            on_path,
        };
        let v = check_equilibrium_notion(&g, &cand, Notion::Pbe, &EnumerationCaps::default(), 1e-9).unwrap();
        assert_eq!(v.status, NotionStatus::Fails);
        assert!(v.deviations[1].profitable);
    }

    #[test]
    fn random_mechanisms_are_valid() {
        let g = screen1();
        let mut rng = crate::catalog::rng(3);
        for _ in 0..20 {
            let m = random_mechanism(&g, 0, 2, &mut rng).unwrap();
            assert!(m.check_against(&g).is_ok());
        }
    }
}
