use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use mechpoly_core::bic::BicError;
use mechpoly_core::game::{DirectMechanismFile, GameFileError};
use mechpoly_core::mechanisms::{MechanismFile, StrategyFile};
use mechpoly_core::solver::SolverError;
use mechpoly_core::{
    DirectMechanism, FiniteGame, GameError, GeneralMechanism, LpError, MechanismError,
    SolveReport, StrategyProfile,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", file.display())]
    Parse {
        file: PathBuf,
        source: GameFileError,
    },
    #[error("{}: {source}", file.display())]
    Input {
        file: PathBuf,
        source: MechanismError,
    },
    #[error("{0}")]
    Usage(String),
    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Bic(#[from] BicError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
}

fn solver_is_numerical(e: &SolverError) -> bool {
    matches!(e, SolverError::Lp(_) | SolverError::Bic(BicError::Lp(_)))
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        let numerical = match self {
            CliError::Bic(BicError::Lp(_)) => true,
            CliError::Solver(e) => solver_is_numerical(e),
            CliError::Mechanism(MechanismError::Solver(e)) => solver_is_numerical(e),
            _ => false,
        };
        if numerical {
            3
        } else {
            2
        }
    }
}

impl From<LpError> for CliError {
    fn from(e: LpError) -> Self {
        CliError::Solver(SolverError::Lp(e))
    }
}

pub fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a game file without checking its semantic invariants.
pub fn parse_game(path: &Path) -> Result<FiniteGame, CliError> {
    FiniteGame::from_json_str(&read(path)?).map_err(|source| CliError::Parse {
        file: path.to_path_buf(),
        source,
    })
}

/// Parses and validates a game file.
pub fn load_game(path: &Path) -> Result<FiniteGame, CliError> {
    let game = parse_game(path)?;
    let v = game.validate();
    if let Some(first) = v.violations.first() {
        return Err(CliError::Parse {
            file: path.to_path_buf(),
            source: GameFileError::Field {
                path: first.path.clone(),
                message: first.message.clone(),
            },
        });
    }
    Ok(game)
}

pub fn principal(game: &FiniteGame, key: &str) -> Result<usize, CliError> {
    game.principal_index(key).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown principal '{key}' (use an id or a 1-based index up to {})",
            game.num_principals()
        ))
    })
}

pub fn load_direct(game: &FiniteGame, path: &Path) -> Result<DirectMechanism, CliError> {
    let parse = |source| CliError::Parse {
        file: path.to_path_buf(),
        source,
    };
    let file = DirectMechanismFile::from_json(&read(path)?).map_err(parse)?;
    game.direct_mechanism_from_file(&file).map_err(parse)
}

/// Loads one direct mechanism per listed file and orders them by owner.
/// Every principal in `owners` must appear exactly once.
pub fn load_direct_set(
    game: &FiniteGame,
    paths: &[PathBuf],
    owners: &[usize],
) -> Result<Vec<DirectMechanism>, CliError> {
    let mut slots: Vec<Option<DirectMechanism>> = vec![None; game.num_principals()];
    for path in paths {
        let m = load_direct(game, path)?;
        let j = m.owner();
        if !owners.contains(&j) {
            return Err(CliError::Usage(format!(
                "{}: mechanism of {} is not expected here",
                path.display(),
                game.principals()[j].id
            )));
        }
        if slots[j].replace(m).is_some() {
            return Err(CliError::Usage(format!(
                "two mechanisms given for {}",
                game.principals()[j].id
            )));
        }
    }
    owners
        .iter()
        .map(|&j| {
            slots[j].take().ok_or_else(|| {
                CliError::Usage(format!("no mechanism given for {}", game.principals()[j].id))
            })
        })
        .collect()
}

/// Accepts either a general mechanism file or a direct mechanism file.
pub fn load_general(game: &FiniteGame, path: &Path) -> Result<GeneralMechanism, CliError> {
    let text = read(path)?;
    let is_direct = serde_json::from_str::<serde_json::Value>(&text)
        .ok()
        .is_some_and(|v| v.get("rows").is_some());
    if is_direct {
        let m = load_direct(game, path)?;
        return GeneralMechanism::from_direct(game, &m).map_err(|source| CliError::Input {
            file: path.to_path_buf(),
            source,
        });
    }
    let file = MechanismFile::from_json(&text).map_err(|source| CliError::Parse {
        file: path.to_path_buf(),
        source,
    })?;
    file.to_mechanism(game).map_err(|source| CliError::Input {
        file: path.to_path_buf(),
        source,
    })
}

pub fn load_strategies(
    game: &FiniteGame,
    mechanisms: &[GeneralMechanism],
    path: &Path,
) -> Result<StrategyProfile, CliError> {
    let file = StrategyFile::from_json(&read(path)?).map_err(|source| CliError::Parse {
        file: path.to_path_buf(),
        source,
    })?;
    file.to_profile(game, mechanisms)
        .map_err(|source| CliError::Input {
            file: path.to_path_buf(),
            source,
        })
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serialisable");
    text.push('\n');
    fs::write(path, text).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes the report without ever replacing an existing file. With no
/// explicit path the name is `<command>-<UTC timestamp>.json` in `dir`.
pub fn write_report(
    report: &SolveReport,
    explicit: Option<&Path>,
    dir: &Path,
) -> Result<PathBuf, CliError> {
    let wrap = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Write { path, source }
    };
    let text = report.to_json_pretty();
    if let Some(path) = explicit {
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(path)
            .map_err(wrap(path))?;
        f.write_all(text.as_bytes()).map_err(wrap(path))?;
        return Ok(path.to_path_buf());
    }
    fs::create_dir_all(dir).map_err(wrap(dir))?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    for n in 0.. {
        let name = if n == 0 {
            format!("{}-{stamp}.json", report.command)
        } else {
            format!("{}-{stamp}-{n}.json", report.command)
        };
        let path = dir.join(name);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                f.write_all(text.as_bytes()).map_err(wrap(&path))?;
                return Ok(path);
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(wrap(&path)(e)),
        }
    }
    unreachable!()
}
