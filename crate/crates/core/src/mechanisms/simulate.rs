use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use super::{induce_direct_mechanism, GeneralMechanism, MechanismError, StrategyProfile};
use crate::catalog;
use crate::game::{DirectMechanism, FiniteGame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Exact expectation for comparison.
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub seed: u64,
    pub rounds: usize,
    pub principals: Vec<PlayerEstimate>,
    pub agents: Vec<PlayerEstimate>,
    /// `[j][a_j]`: empirical action frequencies.
    pub action_frequencies: Vec<Vec<f64>>,
}

struct Moments {
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.sum_sq += v * v;
    }

    fn finish(&self, n: usize, expected: f64) -> PlayerEstimate {
        let nf = n as f64;
        let mean = if n == 0 { 0.0 } else { self.sum / nf };
        let var = if n < 2 {
            0.0
        } else {
            ((self.sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
        };
        PlayerEstimate {
            mean,
            std_error: if n == 0 { 0.0 } else { (var / nf).sqrt() },
            expected,
        }
    }
}

fn sampler(weights: &[f64]) -> Result<WeightedIndex<f64>, MechanismError> {
    WeightedIndex::new(weights).map_err(|e| MechanismError::InvalidDistribution {
        context: "sampling".into(),
        reason: e.to_string(),
    })
}

/// Monte Carlo play of the communication game: types, messages and actions
/// are drawn each round from a ChaCha stream seeded with `seed`.
pub fn simulate(
    game: &FiniteGame,
    mechanisms: &[GeneralMechanism],
    strategies: &StrategyProfile,
    rounds: usize,
    seed: u64,
) -> Result<SimulationReport, MechanismError> {
    if mechanisms.len() != game.num_principals()
        || mechanisms.iter().enumerate().any(|(j, m)| m.owner() != j)
    {
        return Err(MechanismError::Shape("one mechanism per principal, in order".into()));
    }
    for m in mechanisms {
        m.check_against(game)?;
    }
    strategies.validate(game, mechanisms)?;
    let n_p = game.num_principals();
    let n_i = game.num_agents();

    let induced: Vec<DirectMechanism> = mechanisms
        .iter()
        .map(|m| induce_direct_mechanism(game, m, strategies))
        .collect::<Result<_, _>>()?;
    let principal_expected: Vec<f64> = (0..n_p)
        .map(|j| game.expected_principal_payoff(j, &induced))
        .collect::<Result<_, _>>()?;
    let agent_expected: Vec<f64> = (0..n_i)
        .map(|i| {
            let mut total = 0.0;
            for (x, &w) in game.prior().iter().enumerate() {
                for (k, m) in induced.iter().enumerate() {
                    total += w * game.expected_agent_component(i, k, m.row(x), x)?;
                }
            }
            Ok(total)
        })
        .collect::<Result<_, MechanismError>>()?;

    let prior = sampler(game.prior())?;
    let principal_draws: Vec<WeightedIndex<f64>> = strategies
        .principal
        .iter()
        .map(|d| sampler(d))
        .collect::<Result<_, _>>()?;
    let agent_draws: Vec<Vec<Vec<WeightedIndex<f64>>>> = strategies
        .agents
        .iter()
        .map(|per_agent| {
            per_agent
                .iter()
                .map(|per_type| per_type.iter().map(|d| sampler(d)).collect())
                .collect()
        })
        .collect::<Result<_, _>>()?;

    let mut rng = catalog::rng(seed);
    let space = game.type_space();
    let actions = game.action_space();
    let mut types = vec![0usize; n_i];
    let mut msgs = vec![0usize; n_i];
    let mut a = vec![0usize; n_p];
    let mut principal_stats: Vec<Moments> = (0..n_p).map(|_| Moments { sum: 0.0, sum_sq: 0.0 }).collect();
    let mut agent_stats: Vec<Moments> = (0..n_i).map(|_| Moments { sum: 0.0, sum_sq: 0.0 }).collect();
    let mut counts: Vec<Vec<usize>> = (0..n_p).map(|j| vec![0; game.num_actions(j)]).collect();

    for _ in 0..rounds {
        let x = prior.sample(&mut rng);
        space.decode_into(x, &mut types);
        for (j, mech) in mechanisms.iter().enumerate() {
            let m0 = principal_draws[j].sample(&mut rng);
            for i in 0..n_i {
                msgs[i] = agent_draws[i][j][types[i]].sample(&mut rng);
            }
            a[j] = sampler(mech.outcome(m0, &msgs))?.sample(&mut rng);
            counts[j][a[j]] += 1;
        }
        let a_idx = actions.index(&a);
        for (j, s) in principal_stats.iter_mut().enumerate() {
            s.push(game.principal_payoff(j, a_idx, x));
        }
        for (i, s) in agent_stats.iter_mut().enumerate() {
            let u: f64 = (0..n_p).map(|k| game.agent_component(i, k, a[k], x)).sum();
            s.push(u);
        }
    }

    let denom = rounds.max(1) as f64;
    Ok(SimulationReport {
        seed,
        rounds,
        principals: principal_stats
            .iter()
            .zip(&principal_expected)
            .map(|(s, &e)| s.finish(rounds, e))
            .collect(),
        agents: agent_stats
            .iter()
            .zip(&agent_expected)
            .map(|(s, &e)| s.finish(rounds, e))
            .collect(),
        action_frequencies: counts
            .iter()
            .map(|c| c.iter().map(|&n| n as f64 / denom).collect())
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::mp2;
    use crate::mechanisms::PureStrategyProfile;

    #[test]
    fn mp2_coin_flips() {
        let g = mp2();
        let mechs: Vec<GeneralMechanism> = (0..2)
            .map(|k| GeneralMechanism::from_direct(&g, &DirectMechanism::uniform(k, 1, 2)).unwrap())
            .collect();
        let s = PureStrategyProfile::truthful(&g, &mechs).to_mixed(&mechs);
        let r = simulate(&g, &mechs, &s, 20_000, 7).unwrap();
        for p in &r.principals {
            assert!((p.expected - 0.5).abs() < 1e-12);
            assert!((p.mean - 0.5).abs() < 4.0 * p.std_error + 1e-9);
        }
        assert_eq!(r, simulate(&g, &mechs, &s, 20_000, 7).unwrap());
    }
}
