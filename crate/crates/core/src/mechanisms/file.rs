//! JSON formats for general mechanisms, strategy profiles and equilibrium
//! candidates. Messages and types are referenced by label.

use std::collections::BTreeMap;
use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use super::{Candidate, GeneralMechanism, MechanismError, PureStrategyProfile, StrategyProfile};
use crate::game::{label_map, parse_json, FiniteGame, GameFileError, ProfileSpace};

fn field(path: impl Into<String>, message: impl Into<String>) -> MechanismError {
    MechanismError::Field {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeRow {
    /// Principal message followed by one message per agent.
    pub m: Vec<String>,
    pub dist: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismFile {
    pub owner: String,
    /// The principal's own messages first, then one set per agent.
    pub message_sets: Vec<Vec<String>>,
    pub outcome_rows: Vec<OutcomeRow>,
    /// Checked against the outcome table when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standard: Option<bool>,
}

impl MechanismFile {
    pub fn from_json(text: &str) -> Result<Self, GameFileError> {
        parse_json(text)
    }

    pub fn from_mechanism(game: &FiniteGame, mechanism: &GeneralMechanism) -> Self {
        let mut sets = vec![mechanism.principal_messages()];
        sets.extend((0..mechanism.num_agents()).map(|i| mechanism.agent_messages(i)));
        let outcomes = mechanism
            .message_space()
            .iter()
            .enumerate()
            .map(|(idx, m)| OutcomeRow {
                m: m
                    .iter()
                    .zip(&sets)
                    .map(|(&d, labels)| labels[d].clone())
                    .collect(),
                dist: mechanism.outcome_flat(idx).to_vec(),
            })
            .collect();
        Self {
            owner: game.principals()[mechanism.owner()].id.clone(),
            message_sets: sets.iter().map(|s| s.to_vec()).collect(),
            outcome_rows: outcomes,
            standard: Some(mechanism.is_standard()),
        }
    }

    pub fn to_mechanism(&self, game: &FiniteGame) -> Result<GeneralMechanism, MechanismError> {
        let owner = game
            .principal_index(&self.owner)
            .ok_or_else(|| field("owner", format!("unknown principal '{}'", self.owner)))?;
        if self.message_sets.len() != game.num_agents() + 1 {
            return Err(field(
                "message_sets",
                format!(
                    "{} message sets, expected {} (principal then agents)",
                    self.message_sets.len(),
                    game.num_agents() + 1
                ),
            ));
        }
        let sets: Vec<&Vec<String>> = self.message_sets.iter().collect();
        let maps: Vec<_> = sets.iter().map(|s| label_map(s)).collect();
        for (n, (set, map)) in sets.iter().zip(&maps).enumerate() {
            if set.is_empty() || map.len() != set.len() {
                return Err(field(
                    format!("message_sets[{n}]"),
                    "message labels must be nonempty and distinct",
                ));
            }
        }
        let space = ProfileSpace::new(sets.iter().map(|s| s.len()).collect());
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; space.len()];
        for (n, row) in self.outcome_rows.iter().enumerate() {
            let path = format!("outcome_rows[{n}]");
            if row.m.len() != sets.len() {
                return Err(field(
                    format!("{path}.m"),
                    format!("{} messages, expected {}", row.m.len(), sets.len()),
                ));
            }
            let idx: Vec<usize> = row
                .m
                .iter()
                .zip(&maps)
                .map(|(label, map)| {
                    map.get(label.as_str())
                        .copied()
                        .ok_or_else(|| field(format!("{path}.m"), format!("unknown message '{label}'")))
                })
                .collect::<Result<_, _>>()?;
            if row.dist.len() != game.num_actions(owner) {
                return Err(field(
                    format!("{path}.dist"),
                    format!(
                        "distribution has {} entries, principal {} has {} actions",
                        row.dist.len(),
                        self.owner,
                        game.num_actions(owner)
                    ),
                ));
            }
            if rows[space.index(&idx)].replace(row.dist.clone()).is_some() {
                return Err(field(path, "duplicate message profile"));
            }
        }
        let outcomes = rows
            .into_iter()
            .enumerate()
            .map(|(idx, r)| {
                r.ok_or_else(|| {
                    let labels: Vec<&str> = space
                        .decode(idx)
                        .iter()
                        .zip(&sets)
                        .map(|(&d, s)| s[d].as_str())
                        .collect();
                    field("outcome_rows", format!("missing row for [{}]", labels.join(",")))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mechanism = GeneralMechanism::new(
            owner,
            self.message_sets[0].clone(),
            self.message_sets[1..].to_vec(),
            outcomes,
        )?;
        if let Some(flag) = self.standard {
            if flag != mechanism.is_standard() {
                return Err(field(
                    "standard",
                    format!("declared {flag} but the outcome table says {}", mechanism.is_standard()),
                ));
            }
        }
        Ok(mechanism)
    }
}

/// Hex FNV-1a hash identifying a mechanism profile.
pub fn mechanism_profile_hash(game: &FiniteGame, mechanisms: &[GeneralMechanism]) -> String {
    let files: Vec<MechanismFile> = mechanisms
        .iter()
        .map(|m| MechanismFile::from_mechanism(game, m))
        .collect();
    let mut hasher = FnvHasher::default();
    hasher.write(&serde_json::to_vec(&files).expect("mechanism files serialise"));
    format!("{:016x}", hasher.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyEntry {
    /// Principal or agent id.
    pub player: String,
    /// For agents: the principal the messages are sent to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub principal: Option<String>,
    /// For agents: the type label.
    #[serde(default, rename = "type", skip_serializing_if = "Option::is_none")]
    pub type_label: Option<String>,
    /// Message label to probability; unlisted messages have probability 0.
    pub dist: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyFile {
    pub mechanism_profile_hash: String,
    pub entries: Vec<StrategyEntry>,
}

impl StrategyFile {
    pub fn from_json(text: &str) -> Result<Self, GameFileError> {
        parse_json(text)
    }

    pub fn from_profile(
        game: &FiniteGame,
        mechanisms: &[GeneralMechanism],
        strategies: &StrategyProfile,
    ) -> Self {
        let dist = |labels: &[String], probs: &[f64]| {
            labels
                .iter()
                .zip(probs)
                .filter(|(_, p)| **p > 0.0)
                .map(|(l, p)| (l.clone(), *p))
                .collect()
        };
        let mut entries = Vec::new();
        for (j, mech) in mechanisms.iter().enumerate() {
            entries.push(StrategyEntry {
                player: game.principals()[j].id.clone(),
                principal: None,
                type_label: None,
                dist: dist(mech.principal_messages(), &strategies.principal[j]),
            });
        }
        for (i, agent) in game.agents().iter().enumerate() {
            for (j, mech) in mechanisms.iter().enumerate() {
                for (t, label) in agent.types.iter().enumerate() {
                    entries.push(StrategyEntry {
                        player: agent.id.clone(),
                        principal: Some(game.principals()[j].id.clone()),
                        type_label: Some(label.clone()),
                        dist: dist(mech.agent_messages(i), &strategies.agents[i][j][t]),
                    });
                }
            }
        }
        Self {
            mechanism_profile_hash: mechanism_profile_hash(game, mechanisms),
            entries,
        }
    }

    pub fn to_profile(
        &self,
        game: &FiniteGame,
        mechanisms: &[GeneralMechanism],
    ) -> Result<StrategyProfile, MechanismError> {
        let expected = mechanism_profile_hash(game, mechanisms);
        if self.mechanism_profile_hash != expected {
            return Err(field(
                "mechanism_profile_hash",
                format!(
                    "strategies were written for {} but the mechanisms hash to {expected}",
                    self.mechanism_profile_hash
                ),
            ));
        }
        let mut principal: Vec<Option<Vec<f64>>> = vec![None; mechanisms.len()];
        let mut agents: Vec<Vec<Vec<Option<Vec<f64>>>>> = (0..game.num_agents())
            .map(|i| vec![vec![None; game.num_types(i)]; mechanisms.len()])
            .collect();
        for (n, e) in self.entries.iter().enumerate() {
            let path = format!("entries[{n}]");
            let to_vec = |labels: &[String]| -> Result<Vec<f64>, MechanismError> {
                let map = label_map(labels);
                let mut v = vec![0.0; labels.len()];
                for (label, &p) in &e.dist {
                    let m = map
                        .get(label.as_str())
                        .ok_or_else(|| field(format!("{path}.dist"), format!("unknown message '{label}'")))?;
                    v[*m] = p;
                }
                Ok(v)
            };
            if let Some(j) = game.principal_index(&e.player) {
                if e.principal.is_some() || e.type_label.is_some() {
                    return Err(field(&path, "principal entries take no principal or type"));
                }
                if principal[j].replace(to_vec(mechanisms[j].principal_messages())?).is_some() {
                    return Err(field(&path, "duplicate entry"));
                }
            } else if let Some(i) = game.agent_index(&e.player) {
                let (Some(pid), Some(tl)) = (&e.principal, &e.type_label) else {
                    return Err(field(&path, "agent entries need a principal and a type"));
                };
                let j = game
                    .principal_index(pid)
                    .ok_or_else(|| field(format!("{path}.principal"), format!("unknown principal '{pid}'")))?;
                let t = game.agents()[i]
                    .types
                    .iter()
                    .position(|l| l == tl)
                    .ok_or_else(|| field(format!("{path}.type"), format!("unknown type '{tl}'")))?;
                if agents[i][j][t].replace(to_vec(mechanisms[j].agent_messages(i))?).is_some() {
                    return Err(field(&path, "duplicate entry"));
                }
            } else {
                return Err(field(format!("{path}.player"), format!("unknown player '{}'", e.player)));
            }
        }
        let principal = principal
            .into_iter()
            .enumerate()
            .map(|(j, d)| {
                d.ok_or_else(|| field("entries", format!("no entry for principal {}", game.principals()[j].id)))
            })
            .collect::<Result<_, _>>()?;
        let agents = agents
            .into_iter()
            .enumerate()
            .map(|(i, per_agent)| {
                per_agent
                    .into_iter()
                    .enumerate()
                    .map(|(j, per_type)| {
                        per_type
                            .into_iter()
                            .enumerate()
                            .map(|(t, d)| {
                                d.ok_or_else(|| {
                                    field(
                                        "entries",
                                        format!(
                                            "no entry for agent {} towards {} at type {}",
                                            game.agents()[i].id,
                                            game.principals()[j].id,
                                            game.agents()[i].types[t]
                                        ),
                                    )
                                })
                            })
                            .collect::<Result<Vec<_>, _>>()
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;
        let profile = StrategyProfile { principal, agents };
        profile.validate(game, mechanisms)?;
        Ok(profile)
    }
}

fn to_pure(profile: &StrategyProfile) -> Option<PureStrategyProfile> {
    let pick = |d: &[f64]| d.iter().position(|&p| (p - 1.0).abs() <= 1e-12);
    Some(PureStrategyProfile {
        principal: profile.principal.iter().map(|d| pick(d)).collect::<Option<_>>()?,
        agents: profile
            .agents
            .iter()
            .map(|a| {
                a.iter()
                    .map(|per_type| per_type.iter().map(|d| pick(d)).collect::<Option<Vec<_>>>())
                    .collect::<Option<Vec<_>>>()
            })
            .collect::<Option<_>>()?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviationEntry {
    pub principal: String,
    pub mechanisms: Vec<MechanismFile>,
}

/// Equilibrium mechanisms, pure on-path strategies and deviation sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateFile {
    pub mechanisms: Vec<MechanismFile>,
    pub on_path: StrategyFile,
    pub deviations: Vec<DeviationEntry>,
}

impl CandidateFile {
    pub fn from_json(text: &str) -> Result<Self, GameFileError> {
        parse_json(text)
    }

    pub fn from_candidate(game: &FiniteGame, candidate: &Candidate) -> Self {
        let files = |ms: &[GeneralMechanism]| {
            ms.iter()
                .map(|m| MechanismFile::from_mechanism(game, m))
                .collect::<Vec<_>>()
        };
        Self {
            mechanisms: files(&candidate.mechanisms),
            on_path: StrategyFile::from_profile(
                game,
                &candidate.mechanisms,
                &candidate.on_path.to_mixed(&candidate.mechanisms),
            ),
            deviations: candidate
                .deviations
                .iter()
                .enumerate()
                .map(|(j, set)| DeviationEntry {
                    principal: game.principals()[j].id.clone(),
                    mechanisms: files(set),
                })
                .collect(),
        }
    }

    pub fn to_candidate(&self, game: &FiniteGame) -> Result<Candidate, MechanismError> {
        let mut mechanisms = Vec::with_capacity(self.mechanisms.len());
        for (n, f) in self.mechanisms.iter().enumerate() {
            let m = f.to_mechanism(game).map_err(|e| prefix(e, &format!("mechanisms[{n}]")))?;
            if m.owner() != n {
                return Err(field(
                    format!("mechanisms[{n}].owner"),
                    "mechanisms must be listed in principal order",
                ));
            }
            mechanisms.push(m);
        }
        if mechanisms.len() != game.num_principals() {
            return Err(field(
                "mechanisms",
                format!("{} mechanisms for {} principals", mechanisms.len(), game.num_principals()),
            ));
        }
        let mixed = self
            .on_path
            .to_profile(game, &mechanisms)
            .map_err(|e| prefix(e, "on_path"))?;
        let on_path = to_pure(&mixed).ok_or_else(|| field("on_path", "on-path strategies must be pure"))?;
        let mut deviations = vec![Vec::new(); game.num_principals()];
        for (n, entry) in self.deviations.iter().enumerate() {
            let j = game.principal_index(&entry.principal).ok_or_else(|| {
                field(
                    format!("deviations[{n}].principal"),
                    format!("unknown principal '{}'", entry.principal),
                )
            })?;
            for (d, f) in entry.mechanisms.iter().enumerate() {
                let m = f
                    .to_mechanism(game)
                    .map_err(|e| prefix(e, &format!("deviations[{n}].mechanisms[{d}]")))?;
                if m.owner() != j {
                    return Err(field(
                        format!("deviations[{n}].mechanisms[{d}].owner"),
                        "deviation must belong to the listed principal",
                    ));
                }
                deviations[j].push(m);
            }
        }
        Ok(Candidate {
            mechanisms,
            on_path,
            deviations,
        })
    }
}

fn prefix(err: MechanismError, at: &str) -> MechanismError {
    match err {
        MechanismError::Field { path, message } => MechanismError::Field {
            path: format!("{at}.{path}"),
            message,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{mp2, screen1};
    use crate::game::DirectMechanism;
    use crate::mechanisms::{build_type_and_dm_mechanism, PureStrategyProfile};

    #[test]
    fn mechanism_file_roundtrip() {
        let g = screen1();
        let menu = [
            DirectMechanism::deterministic(0, 2, &[0, 1]),
            DirectMechanism::degenerate(0, 2, 2, 1),
        ];
        let gamma = build_type_and_dm_mechanism(&g, 0, &menu).unwrap();
        let file = MechanismFile::from_mechanism(&g, &gamma);
        let text = serde_json::to_string(&file).unwrap();
        let back = MechanismFile::from_json(&text).unwrap().to_mechanism(&g).unwrap();
        assert_eq!(back, gamma);
    }

    #[test]
    fn wrong_standard_flag_is_rejected() {
        let g = mp2();
        let gamma = GeneralMechanism::from_direct(&g, &DirectMechanism::uniform(0, 1, 2)).unwrap();
        let mut file = MechanismFile::from_mechanism(&g, &gamma);
        file.standard = Some(false);
        let err = file.to_mechanism(&g).unwrap_err();
        assert!(matches!(err, MechanismError::Field { ref path, .. } if path == "standard"));
    }

    #[test]
    fn strategy_file_checks_hash_and_coverage() {
        let g = mp2();
        let mechs: Vec<GeneralMechanism> = (0..2)
            .map(|k| GeneralMechanism::from_direct(&g, &DirectMechanism::uniform(k, 1, 2)).unwrap())
            .collect();
        let s = PureStrategyProfile::truthful(&g, &mechs).to_mixed(&mechs);
        let file = StrategyFile::from_profile(&g, &mechs, &s);
        assert_eq!(file.to_profile(&g, &mechs).unwrap(), s);

        let mut stale = file.clone();
        stale.mechanism_profile_hash = "0".repeat(16);
        assert!(stale.to_profile(&g, &mechs).is_err());

        let mut short = file.clone();
        short.entries.pop();
        let err = short.to_profile(&g, &mechs).unwrap_err();
        assert!(err.to_string().contains("no entry for agent A3"), "{err}");
    }
}
