//! JSON game files and direct-mechanism files.
//!
//! Prior entries that are not listed default to zero; every payoff entry must
//! be listed exactly once.

use std::collections::HashMap;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use std::hash::Hasher;
use thiserror::Error;

use super::{Agent, DirectMechanism, FiniteGame, GameError, Principal};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameFileError {
    #[error("{path}: {message} (line {line}, column {column})")]
    Syntax {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Field { path: String, message: String },
    #[error(transparent)]
    Game(#[from] GameError),
}

impl GameFileError {
    fn field(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Field {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Field path of the offending entry, when known.
    pub fn path(&self) -> Option<&str> {
        match self {
            Self::Syntax { path, .. } | Self::Field { path, .. } => Some(path),
            Self::Game(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrincipalEntry {
    pub id: String,
    pub actions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    pub id: String,
    pub types: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorEntry {
    pub profile: Vec<String>,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentPayoffEntry {
    pub agent: String,
    pub principal: String,
    pub action: String,
    pub profile: Vec<String>,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrincipalPayoffEntry {
    pub principal: String,
    pub action_profile: Vec<String>,
    pub profile: Vec<String>,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameFile {
    pub principals: Vec<PrincipalEntry>,
    pub agents: Vec<AgentEntry>,
    #[serde(default)]
    pub prior: Vec<PriorEntry>,
    pub agent_payoffs: Vec<AgentPayoffEntry>,
    pub principal_payoffs: Vec<PrincipalPayoffEntry>,
}

pub(crate) fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, GameFileError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        let text = inner.to_string();
        let message = match text.rsplit_once(" at line ") {
            Some((head, _)) if inner.line() > 0 => head.to_string(),
            _ => text,
        };
        GameFileError::Syntax {
            path,
            line: inner.line(),
            column: inner.column(),
            message,
        }
    })
}

fn lookup(labels: &[String], label: &str, path: &str, what: &str) -> Result<usize, GameFileError> {
    labels
        .iter()
        .position(|l| l == label)
        .ok_or_else(|| GameFileError::field(path, format!("unknown {what} '{label}'")))
}

fn profile_index(
    space_labels: &[&[String]],
    profile: &[String],
    path: &str,
    what: &str,
) -> Result<Vec<usize>, GameFileError> {
    if profile.len() != space_labels.len() {
        return Err(GameFileError::field(
            path,
            format!(
                "{what} has {} entries, expected {}",
                profile.len(),
                space_labels.len()
            ),
        ));
    }
    profile
        .iter()
        .zip(space_labels.iter())
        .map(|(label, labels)| lookup(labels, label, path, what))
        .collect()
}

impl GameFile {
    pub fn from_json(text: &str) -> Result<Self, GameFileError> {
        parse_json(text)
    }

    pub fn into_game(self) -> Result<FiniteGame, GameFileError> {
        let principals: Vec<Principal> = self
            .principals
            .into_iter()
            .map(|p| Principal {
                id: p.id,
                actions: p.actions,
            })
            .collect();
        let agents: Vec<Agent> = self
            .agents
            .into_iter()
            .map(|a| Agent {
                id: a.id,
                types: a.types,
            })
            .collect();
        let principal_ids: Vec<String> = principals.iter().map(|p| p.id.clone()).collect();
        let agent_ids: Vec<String> = agents.iter().map(|a| a.id.clone()).collect();
        let type_labels: Vec<&[String]> = agents.iter().map(|a| a.types.as_slice()).collect();
        let action_labels: Vec<&[String]> =
            principals.iter().map(|p| p.actions.as_slice()).collect();
        let types = super::ProfileSpace::new(type_labels.iter().map(|l| l.len()).collect());
        let actions = super::ProfileSpace::new(action_labels.iter().map(|l| l.len()).collect());

        let mut prior = vec![0.0; types.len()];
        let mut seen_prior = vec![false; types.len()];
        for (n, entry) in self.prior.iter().enumerate() {
            let path = format!("prior[{n}].profile");
            let x = types.index(&profile_index(&type_labels, &entry.profile, &path, "type")?);
            if seen_prior[x] {
                return Err(GameFileError::field(path, "duplicate prior entry"));
            }
            seen_prior[x] = true;
            prior[x] = entry.p;
        }

        let mut u: Vec<Vec<Vec<Vec<Option<f64>>>>> = agents
            .iter()
            .map(|_| {
                principals
                    .iter()
                    .map(|p| vec![vec![None; types.len()]; p.actions.len()])
                    .collect()
            })
            .collect();
        for (n, entry) in self.agent_payoffs.iter().enumerate() {
            let base = format!("agent_payoffs[{n}]");
            let i = lookup(&agent_ids, &entry.agent, &format!("{base}.agent"), "agent")?;
            let k = lookup(
                &principal_ids,
                &entry.principal,
                &format!("{base}.principal"),
                "principal",
            )?;
            let a = lookup(
                &principals[k].actions,
                &entry.action,
                &format!("{base}.action"),
                "action",
            )?;
            let x = types.index(&profile_index(
                &type_labels,
                &entry.profile,
                &format!("{base}.profile"),
                "type",
            )?);
            let slot = &mut u[i][k][a][x];
            if slot.is_some() {
                return Err(GameFileError::field(base, "duplicate agent payoff entry"));
            }
            *slot = Some(entry.u);
        }
        let mut v: Vec<Vec<Vec<Option<f64>>>> = principals
            .iter()
            .map(|_| vec![vec![None; types.len()]; actions.len()])
            .collect();
        for (n, entry) in self.principal_payoffs.iter().enumerate() {
            let base = format!("principal_payoffs[{n}]");
            let j = lookup(
                &principal_ids,
                &entry.principal,
                &format!("{base}.principal"),
                "principal",
            )?;
            let a = actions.index(&profile_index(
                &action_labels,
                &entry.action_profile,
                &format!("{base}.action_profile"),
                "action",
            )?);
            let x = types.index(&profile_index(
                &type_labels,
                &entry.profile,
                &format!("{base}.profile"),
                "type",
            )?);
            let slot = &mut v[j][a][x];
            if slot.is_some() {
                return Err(GameFileError::field(base, "duplicate principal payoff entry"));
            }
            *slot = Some(entry.v);
        }

        let mut agent_payoffs = Vec::with_capacity(agents.len());
        for (i, per_agent) in u.into_iter().enumerate() {
            let mut comps = Vec::with_capacity(principals.len());
            for (k, table) in per_agent.into_iter().enumerate() {
                let mut rows = Vec::with_capacity(table.len());
                for (a, row) in table.into_iter().enumerate() {
                    let mut filled = Vec::with_capacity(row.len());
                    for (x, val) in row.into_iter().enumerate() {
                        filled.push(val.ok_or_else(|| {
                            GameFileError::field(
                                "agent_payoffs",
                                format!(
                                    "missing entry for agent {}, principal {}, action {}, profile [{}]",
                                    agent_ids[i],
                                    principal_ids[k],
                                    principals[k].actions[a],
                                    label_profile(&type_labels, &types.decode(x)).join(",")
                                ),
                            )
                        })?);
                    }
                    rows.push(filled);
                }
                comps.push(rows);
            }
            agent_payoffs.push(comps);
        }
        let mut principal_payoffs = Vec::with_capacity(principals.len());
        for (j, table) in v.into_iter().enumerate() {
            let mut rows = Vec::with_capacity(table.len());
            for (a, row) in table.into_iter().enumerate() {
                let mut filled = Vec::with_capacity(row.len());
                for (x, val) in row.into_iter().enumerate() {
                    filled.push(val.ok_or_else(|| {
                        GameFileError::field(
                            "principal_payoffs",
                            format!(
                                "missing entry for principal {}, action profile [{}], profile [{}]",
                                principal_ids[j],
                                label_profile(&action_labels, &actions.decode(a)).join(","),
                                label_profile(&type_labels, &types.decode(x)).join(",")
                            ),
                        )
                    })?);
                }
                rows.push(filled);
            }
            principal_payoffs.push(rows);
        }
        Ok(FiniteGame::new(
            principals,
            agents,
            prior,
            agent_payoffs,
            principal_payoffs,
        )?)
    }
}

fn label_profile(labels: &[&[String]], profile: &[usize]) -> Vec<String> {
    profile
        .iter()
        .zip(labels.iter())
        .map(|(&d, l)| l[d].clone())
        .collect()
}

impl FiniteGame {
    pub fn from_json_str(text: &str) -> Result<Self, GameFileError> {
        GameFile::from_json(text)?.into_game()
    }

    /// Dense file representation in declaration order.
    pub fn to_game_file(&self) -> GameFile {
        let xs: Vec<Vec<String>> = (0..self.num_profiles()).map(|x| self.type_labels(x)).collect();
        let prior = xs
            .iter()
            .zip(self.prior().iter())
            .map(|(profile, &p)| PriorEntry {
                profile: profile.clone(),
                p,
            })
            .collect();
        let mut agent_payoffs = Vec::new();
        for (i, agent) in self.agents().iter().enumerate() {
            for (k, principal) in self.principals().iter().enumerate() {
                for (a, action) in principal.actions.iter().enumerate() {
                    for (x, profile) in xs.iter().enumerate() {
                        agent_payoffs.push(AgentPayoffEntry {
                            agent: agent.id.clone(),
                            principal: principal.id.clone(),
                            action: action.clone(),
                            profile: profile.clone(),
                            u: self.agent_component(i, k, a, x),
                        });
                    }
                }
            }
        }
        let mut principal_payoffs = Vec::new();
        for (j, principal) in self.principals().iter().enumerate() {
            for a in 0..self.action_space().len() {
                let action_profile = self.action_labels(a);
                for (x, profile) in xs.iter().enumerate() {
                    principal_payoffs.push(PrincipalPayoffEntry {
                        principal: principal.id.clone(),
                        action_profile: action_profile.clone(),
                        profile: profile.clone(),
                        v: self.principal_payoff(j, a, x),
                    });
                }
            }
        }
        GameFile {
            principals: self
                .principals()
                .iter()
                .map(|p| PrincipalEntry {
                    id: p.id.clone(),
                    actions: p.actions.clone(),
                })
                .collect(),
            agents: self
                .agents()
                .iter()
                .map(|a| AgentEntry {
                    id: a.id.clone(),
                    types: a.types.clone(),
                })
                .collect(),
            prior,
            agent_payoffs,
            principal_payoffs,
        }
    }

    /// Compact JSON of the dense file representation.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.to_game_file()).expect("game file serialises")
    }

    /// 64-bit FNV-1a over [`FiniteGame::canonical_bytes`].
    pub fn game_hash(&self) -> u64 {
        let mut hasher = FnvHasher::default();
        hasher.write(&self.canonical_bytes());
        hasher.finish()
    }

    pub fn direct_mechanism_from_file(
        &self,
        file: &DirectMechanismFile,
    ) -> Result<DirectMechanism, GameFileError> {
        let owner = self.principal_index(&file.owner).ok_or_else(|| {
            GameFileError::field("owner", format!("unknown principal '{}'", file.owner))
        })?;
        let type_labels: Vec<&[String]> =
            self.agents().iter().map(|a| a.types.as_slice()).collect();
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; self.num_profiles()];
        for (n, row) in file.rows.iter().enumerate() {
            let path = format!("rows[{n}]");
            let x = self.type_space().index(&profile_index(
                &type_labels,
                &row.profile,
                &format!("{path}.profile"),
                "type",
            )?);
            if row.dist.len() != self.num_actions(owner) {
                return Err(GameFileError::field(
                    format!("{path}.dist"),
                    format!(
                        "distribution has {} entries, principal {} has {} actions",
                        row.dist.len(),
                        file.owner,
                        self.num_actions(owner)
                    ),
                ));
            }
            if rows[x].replace(row.dist.clone()).is_some() {
                return Err(GameFileError::field(path, "duplicate row"));
            }
        }
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(x, r)| {
                r.ok_or_else(|| {
                    GameFileError::field(
                        "rows",
                        format!("missing row for profile [{}]", self.type_labels(x).join(",")),
                    )
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(DirectMechanism::new(owner, rows)?)
    }

    pub fn direct_mechanism_to_file(&self, mechanism: &DirectMechanism) -> DirectMechanismFile {
        DirectMechanismFile {
            owner: self.principals()[mechanism.owner()].id.clone(),
            rows: mechanism
                .rows()
                .iter()
                .enumerate()
                .map(|(x, dist)| DirectRow {
                    profile: self.type_labels(x),
                    dist: dist.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectRow {
    pub profile: Vec<String>,
    pub dist: Vec<f64>,
}

/// `{owner, rows: [{profile, dist}]}`, one row per type profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectMechanismFile {
    pub owner: String,
    pub rows: Vec<DirectRow>,
}

impl DirectMechanismFile {
    pub fn from_json(text: &str) -> Result<Self, GameFileError> {
        parse_json(text)
    }
}

/// Quick lookup of label positions, used by the other file readers.
pub(crate) fn label_map(labels: &[String]) -> HashMap<&str, usize> {
    labels
        .iter()
        .enumerate()
        .map(|(n, l)| (l.as_str(), n))
        .collect()
}
