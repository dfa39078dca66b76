//! Named example games and seeded random game generators.

use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::game::{Agent, FiniteGame, Principal};

/// The crate-wide seeded generator.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Principals `P1..Pn`, each with actions `{0, 1}`.
pub fn binary_principals(n: usize) -> Vec<Principal> {
    (1..=n)
        .map(|j| Principal {
            id: format!("P{j}"),
            actions: vec!["0".into(), "1".into()],
        })
        .collect()
}

/// Agents `A1..An`, each with a single type `t`.
pub fn singleton_agents(n: usize) -> Vec<Agent> {
    (1..=n)
        .map(|i| Agent {
            id: format!("A{i}"),
            types: vec!["t".into()],
        })
        .collect()
}

/// Matching pennies between two principals with three uninformed,
/// indifferent agents. Principal 1 wins on a match.
pub fn mp2() -> FiniteGame {
    let principals = ["P1", "P2"]
        .iter()
        .map(|id| Principal {
            id: (*id).into(),
            actions: vec!["H".into(), "T".into()],
        })
        .collect();
    FiniteGame::from_fn(
        principals,
        singleton_agents(3),
        vec![1.0],
        |_, _, _, _| 0.0,
        |j, a, _| {
            let matched = if a[0] == a[1] { 1.0 } else { 0.0 };
            if j == 0 {
                matched
            } else {
                1.0 - matched
            }
        },
    )
    .expect("static game")
}

/// A screening game: agent 1 has an equiprobable type in `{L, H}` and
/// prefers action `a` when `L`, `b` when `H`. Principal 1 also wants to
/// match the type; principal 2 has a single action and a zero payoff.
pub fn screen1() -> FiniteGame {
    let principals = vec![
        Principal {
            id: "P1".into(),
            actions: vec!["a".into(), "b".into()],
        },
        Principal {
            id: "P2".into(),
            actions: vec!["c".into()],
        },
    ];
    let mut agents = vec![Agent {
        id: "A1".into(),
        types: vec!["L".into(), "H".into()],
    }];
    agents.extend(singleton_agents(3).into_iter().skip(1));
    FiniteGame::from_fn(
        principals,
        agents,
        vec![0.5, 0.5],
        |i, k, a, x| {
            if i == 0 && k == 0 && a == x[0] {
                1.0
            } else {
                0.0
            }
        },
        |j, a, x| {
            if j == 0 && a[0] == x[0] {
                1.0
            } else {
                0.0
            }
        },
    )
    .expect("static game")
}

/// Parameters for [`random_separable_game`]. Each size is drawn uniformly
/// from its range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomGameSpec {
    pub principals: RangeInclusive<usize>,
    pub agents: RangeInclusive<usize>,
    pub types: RangeInclusive<usize>,
    pub actions: RangeInclusive<usize>,
    /// Draw a correlated full-support prior instead of a uniform one.
    pub correlated_prior: bool,
}

impl Default for RandomGameSpec {
    fn default() -> Self {
        Self {
            principals: 2..=3,
            agents: 1..=3,
            types: 1..=2,
            actions: 2..=3,
            correlated_prior: true,
        }
    }
}

impl RandomGameSpec {
    pub fn with_principals(mut self, j: RangeInclusive<usize>) -> Self {
        self.principals = j;
        self
    }

    pub fn with_agents(mut self, i: RangeInclusive<usize>) -> Self {
        self.agents = i;
        self
    }

    pub fn with_types(mut self, t: RangeInclusive<usize>) -> Self {
        self.types = t;
        self
    }

    pub fn with_actions(mut self, a: RangeInclusive<usize>) -> Self {
        self.actions = a;
        self
    }
}

/// Random game with uniform `[0, 1]` payoffs and (optionally correlated)
/// full-support prior.
pub fn random_separable_game(rng: &mut impl Rng, spec: &RandomGameSpec) -> FiniteGame {
    let num_j = rng.random_range(spec.principals.clone());
    let num_i = rng.random_range(spec.agents.clone());
    let principals: Vec<Principal> = (1..=num_j)
        .map(|j| {
            let n = rng.random_range(spec.actions.clone());
            Principal {
                id: format!("P{j}"),
                actions: (0..n).map(|a| format!("a{a}")).collect(),
            }
        })
        .collect();
    let agents: Vec<Agent> = (1..=num_i)
        .map(|i| {
            let n = rng.random_range(spec.types.clone());
            Agent {
                id: format!("A{i}"),
                types: (0..n).map(|t| format!("x{t}")).collect(),
            }
        })
        .collect();
    let num_profiles: usize = agents.iter().map(|a| a.types.len()).product();
    let prior = random_prior(rng, num_profiles, spec.correlated_prior);
    let seed: u64 = rng.random();
    let mut inner = ChaCha8Rng::seed_from_u64(seed);
    let mut inner2 = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    FiniteGame::from_fn(
        principals,
        agents,
        prior,
        |_, _, _, _| inner.random::<f64>(),
        |_, _, _| inner2.random::<f64>(),
    )
    .expect("generated shapes are consistent")
}

fn random_prior(rng: &mut impl Rng, n: usize, correlated: bool) -> Vec<f64> {
    if !correlated {
        return vec![1.0 / n as f64; n];
    }
    let raw: Vec<f64> = (0..n).map(|_| 0.05 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

/// Candidate families for the minmax/maxmin gap search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapFamily {
    /// Three principals and three uninformed agents, binary actions.
    /// Principal 1's payoff mixes a coordination seed (1 when principals 2
    /// and 3 agree, matching pennies against principal 2 otherwise) with
    /// random noise; principals 2 and 3 get random payoffs.
    Gap3 { min_seed_weight: f64 },
    /// Same shape with only two principals.
    TwoPrincipal,
    /// Three principals whose payoffs are all the same constant.
    ConstantPayoff,
}

impl GapFamily {
    pub fn gap3() -> Self {
        GapFamily::Gap3 {
            min_seed_weight: 0.5,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GapFamily::Gap3 { .. } => "gap3",
            GapFamily::TwoPrincipal => "two-principal",
            GapFamily::ConstantPayoff => "constant-payoff",
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> FiniteGame {
        match *self {
            GapFamily::Gap3 { min_seed_weight } => {
                let w = min_seed_weight + (1.0 - min_seed_weight) * rng.random::<f64>();
                let noise: Vec<Vec<f64>> =
                    (0..3).map(|_| (0..8).map(|_| rng.random::<f64>()).collect()).collect();
                FiniteGame::from_fn(
                    binary_principals(3),
                    singleton_agents(3),
                    vec![1.0],
                    |_, _, _, _| 0.0,
                    |j, a, _| {
                        let idx = a[0] * 4 + a[1] * 2 + a[2];
                        if j == 0 {
                            w * gap3_seed(a) + (1.0 - w) * noise[0][idx]
                        } else {
                            noise[j][idx]
                        }
                    },
                )
                .expect("static shape")
            }
            GapFamily::TwoPrincipal => {
                let noise: Vec<Vec<f64>> =
                    (0..2).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
                FiniteGame::from_fn(
                    binary_principals(2),
                    singleton_agents(3),
                    vec![1.0],
                    |_, _, _, _| 0.0,
                    |j, a, _| noise[j][a[0] * 2 + a[1]],
                )
                .expect("static shape")
            }
            GapFamily::ConstantPayoff => {
                let c = rng.random::<f64>();
                FiniteGame::from_fn(
                    binary_principals(3),
                    singleton_agents(3),
                    vec![1.0],
                    |_, _, _, _| 0.0,
                    |_, _, _| c,
                )
                .expect("static shape")
            }
        }
    }
}

fn gap3_seed(a: &[usize]) -> f64 {
    if a[1] == a[2] || a[0] == a[1] {
        1.0
    } else {
        0.0
    }
}

/// A copy of `game` with every principal payoff replaced by `c`.
pub fn with_constant_payoffs(game: &FiniteGame, c: f64) -> FiniteGame {
    FiniteGame::from_fn(
        game.principals().to_vec(),
        game.agents().to_vec(),
        game.prior().to_vec(),
        |i, k, a, x| game.agent_component(i, k, a, game.type_space().index(x)),
        |_, _, _| c,
    )
    .expect("same shapes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_games_validate() {
        assert!(mp2().validate().is_ok());
        assert!(screen1().validate().is_ok());
        assert_eq!(screen1().agent_component(0, 0, 0, 0), 1.0);
        assert_eq!(screen1().agent_component(0, 0, 1, 1), 1.0);
        assert_eq!(screen1().agent_component(0, 0, 0, 1), 0.0);
    }

    #[test]
    fn random_games_are_valid_and_reproducible() {
        let spec = RandomGameSpec::default();
        for seed in 0..20 {
            let g = random_separable_game(&mut rng(seed), &spec);
            assert!(g.validate().is_ok());
            assert_eq!(g, random_separable_game(&mut rng(seed), &spec));
        }
    }

    #[test]
    fn gap3_pure_seed_shape() {
        let g = GapFamily::Gap3 {
            min_seed_weight: 1.0,
        }
        .sample(&mut rng(1));
        let v = |a: usize| g.principal_payoff(0, a, 0);
        // a = (a1, a2, a3) with a1 most significant.
        assert_eq!(v(0b000), 1.0);
        assert_eq!(v(0b011), 1.0);
        assert_eq!(v(0b001), 1.0);
        assert_eq!(v(0b101), 0.0);
        assert_eq!(v(0b010), 0.0);
    }
}
