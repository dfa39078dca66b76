use super::{check_dist, GeneralMechanism, MechanismError};
use crate::bic::{BicPolytope, BIC_TOL};
use crate::game::{DirectMechanism, FiniteGame, ProfileSpace};

/// Largest selection space `nest_szentes_contract` will materialise.
pub const SELECTION_CAP: u128 = 1_000_000;

fn require_bic(
    game: &FiniteGame,
    mechanism: &DirectMechanism,
    err: impl FnOnce(f64) -> MechanismError,
) -> Result<(), MechanismError> {
    game.check_mechanism(mechanism.owner(), mechanism)?;
    let verdict = BicPolytope::new(game, mechanism.owner()).check(mechanism, BIC_TOL)?;
    if !verdict.ok {
        return Err(err(verdict.worst.map_or(0.0, |w| w.value)));
    }
    Ok(())
}

/// Principal `j` picks a menu entry with its own message and agents report
/// types. Every entry must be individually BIC.
pub fn build_type_and_dm_mechanism(
    game: &FiniteGame,
    j: usize,
    menu: &[DirectMechanism],
) -> Result<GeneralMechanism, MechanismError> {
    if menu.is_empty() {
        return Err(MechanismError::Shape("empty menu".into()));
    }
    for (index, entry) in menu.iter().enumerate() {
        if entry.owner() != j {
            return Err(MechanismError::Shape(format!(
                "menu entry {index} belongs to principal {}",
                entry.owner()
            )));
        }
        require_bic(game, entry, |value| MechanismError::MenuEntryNotBic { index, value })?;
    }
    let labels = (0..menu.len()).map(|n| format!("menu{n}")).collect();
    let agent_messages = game.agents().iter().map(|a| a.types.clone()).collect();
    let space = game.type_space();
    GeneralMechanism::from_fn(j, labels, agent_messages, |m0, reports| {
        menu[m0].row(space.index(reports)).to_vec()
    })
}

/// The principal whose punishment branch a report profile selects: `Some(j)`
/// when a strict majority of agents name the same `j != k`.
pub fn deviator_reporting_branch(k: usize, num_principals: usize, named: &[usize]) -> Option<usize> {
    let mut counts = vec![0usize; num_principals];
    for &l in named {
        counts[l] += 1;
    }
    counts
        .iter()
        .enumerate()
        .find(|&(l, &c)| l != k && 2 * c > named.len())
        .map(|(l, _)| l)
}

/// Standard mechanism for principal `k` in which agents report a suspected
/// deviator together with their type. A strict majority naming `j != k`
/// triggers `π_k^j`; otherwise the target `π_k^*` is played on the reported
/// types.
///
/// Agent messages are indexed `ℓ * |X_i| + x_i`.
pub fn build_deviator_reporting(
    game: &FiniteGame,
    k: usize,
    target: &DirectMechanism,
    punishments: &[(usize, DirectMechanism)],
) -> Result<GeneralMechanism, MechanismError> {
    let n_agents = game.num_agents();
    if n_agents < 3 {
        return Err(MechanismError::TooFewAgents { agents: n_agents });
    }
    let n_p = game.num_principals();
    if target.owner() != k {
        return Err(MechanismError::Shape(format!(
            "target belongs to principal {}",
            target.owner()
        )));
    }
    require_bic(game, target, |value| MechanismError::NotBic {
        which: format!("target mechanism of principal {k}"),
        value,
    })?;
    let mut branch: Vec<Option<&DirectMechanism>> = vec![None; n_p];
    for (j, m) in punishments {
        if *j >= n_p || *j == k || branch[*j].is_some() || m.owner() != k {
            return Err(MechanismError::Shape(format!(
                "punishment entry for principal {j} is misplaced"
            )));
        }
        require_bic(game, m, |value| MechanismError::NotBic {
            which: format!("punishment of principal {k} against {j}"),
            value,
        })?;
        branch[*j] = Some(m);
    }
    if let Some(j) = (0..n_p).find(|&j| j != k && branch[j].is_none()) {
        return Err(MechanismError::Shape(format!(
            "no punishment given against principal {j}"
        )));
    }
    let agent_messages: Vec<Vec<String>> = game
        .agents()
        .iter()
        .map(|agent| {
            game.principals()
                .iter()
                .flat_map(|p| agent.types.iter().map(move |t| format!("{}:{t}", p.id)))
                .collect()
        })
        .collect();
    let space = game.type_space();
    let mut named = vec![0usize; n_agents];
    let mut reports = vec![0usize; n_agents];
    GeneralMechanism::from_fn(k, vec!["_".into()], agent_messages, |_, m| {
        for i in 0..n_agents {
            let n_t = game.num_types(i);
            named[i] = m[i] / n_t;
            reports[i] = m[i] % n_t;
        }
        let x = space.index(&reports);
        match deviator_reporting_branch(k, n_p, &named) {
            Some(j) => branch[j].expect("checked above").row(x).to_vec(),
            None => target.row(x).to_vec(),
        }
    })
}

/// A contract assigning a nonempty set of action distributions to every
/// agent message profile.
#[derive(Debug, Clone, PartialEq)]
pub struct SetValuedContract {
    owner: usize,
    agent_messages: Vec<Vec<String>>,
    space: ProfileSpace,
    sets: Vec<Vec<Vec<f64>>>,
}

impl SetValuedContract {
    pub fn new(
        owner: usize,
        agent_messages: Vec<Vec<String>>,
        sets: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self, MechanismError> {
        let space = ProfileSpace::new(agent_messages.iter().map(Vec::len).collect());
        if space.is_empty() || sets.len() != space.len() {
            return Err(MechanismError::Shape(format!(
                "{} outcome sets for {} message profiles",
                sets.len(),
                space.len()
            )));
        }
        for (m, set) in sets.iter().enumerate() {
            if set.is_empty() {
                return Err(MechanismError::Shape(format!("outcome set {m} is empty")));
            }
            for dist in set {
                check_dist(dist, || format!("outcome set {m}"))?;
            }
        }
        Ok(Self {
            owner,
            agent_messages,
            space,
            sets,
        })
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn set(&self, agent_messages: &[usize]) -> &[Vec<f64>] {
        &self.sets[self.space.index(agent_messages)]
    }
}

/// How a nested contract encodes selections as principal messages.
#[derive(Debug, Clone, PartialEq)]
pub struct SzentesNesting {
    /// Distinct outcome sets in order of first appearance.
    pub images: Vec<Vec<Vec<f64>>>,
    /// Image index of each agent message profile.
    pub image_of: Vec<usize>,
    /// `[m0][image]`: member chosen from each image set.
    pub selections: Vec<Vec<usize>>,
}

impl SzentesNesting {
    /// The principal message encoding `selection` (one member index per image).
    pub fn message_for_selection(&self, selection: &[usize]) -> Option<usize> {
        if selection.len() != self.images.len()
            || selection.iter().zip(&self.images).any(|(&s, set)| s >= set.len())
        {
            return None;
        }
        let radix = ProfileSpace::new(self.images.iter().map(Vec::len).collect());
        Some(radix.index(selection))
    }
}

/// Nests a set-valued contract as a general mechanism whose principal
/// messages are all selections from the contract's image.
pub fn nest_szentes_contract(
    contract: &SetValuedContract,
) -> Result<(GeneralMechanism, SzentesNesting), MechanismError> {
    let mut images: Vec<Vec<Vec<f64>>> = Vec::new();
    let image_of: Vec<usize> = contract
        .sets
        .iter()
        .map(|set| match images.iter().position(|s| s == set) {
            Some(p) => p,
            None => {
                images.push(set.clone());
                images.len() - 1
            }
        })
        .collect();
    let size = images
        .iter()
        .fold(1u128, |acc, s| acc.saturating_mul(s.len() as u128));
    if size > SELECTION_CAP {
        return Err(MechanismError::SelectionSpaceTooLarge {
            size,
            cap: SELECTION_CAP,
        });
    }
    let radix = ProfileSpace::new(images.iter().map(Vec::len).collect());
    let selections: Vec<Vec<usize>> = radix.iter().collect();
    let labels = selections
        .iter()
        .map(|s| {
            let digits: Vec<String> = s.iter().map(usize::to_string).collect();
            format!("s{}", digits.join("."))
        })
        .collect();
    let mechanism = GeneralMechanism::from_fn(
        contract.owner,
        labels,
        contract.agent_messages.clone(),
        |m0, m| {
            let img = image_of[contract.space.index(m)];
            images[img][selections[m0][img]].clone()
        },
    )?;
    Ok((
        mechanism,
        SzentesNesting {
            images,
            image_of,
            selections,
        },
    ))
}
