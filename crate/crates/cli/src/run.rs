use std::path::Path;

use mechpoly_core::bic::{build_bic_polytope, enumerate_vertices, is_individually_bic, is_profile_bic};
use mechpoly_core::catalog::GapFamily;
use mechpoly_core::mechanisms::{
    build_deviator_reporting, check_equilibrium_notion, simulate, CandidateFile, EnumerationCaps,
    MechanismFile, Notion, NotionStatus, PureStrategyProfile,
};
use mechpoly_core::report::{hash_hex, mechanisms_json};
use mechpoly_core::solver::{
    best_response, maxmin, minmax, punishment_profile, robust_pbe_membership,
    search_minmax_maxmin_gap, GapSearchParams, MaxminParams, MembershipStatus, MinmaxMode,
    MinmaxParams,
};
use mechpoly_core::{DirectMechanism, FiniteGame, SolveReport};
use serde_json::json;

use crate::io::{self, CliError};
use crate::{Command, FamilyArg, Mode, NotionArg, RunConfig, SolveArgs};

pub struct Outcome {
    pub report: SolveReport,
    pub exit: u8,
}

fn done(report: SolveReport, ok: bool) -> Result<Outcome, CliError> {
    Ok(Outcome {
        report,
        exit: if ok { 0 } else { 1 },
    })
}

fn base(command: &str, game: &FiniteGame, config: &RunConfig, seed: u64) -> SolveReport {
    let mut r = SolveReport::new(command, game)
        .setting("membership_tol", config.membership_tol)
        .setting("value_tol", config.value_tol);
    r.seed = Some(seed);
    r
}

fn minmax_mode(game: &FiniteGame, mode: Option<Mode>) -> MinmaxMode {
    match mode {
        Some(Mode::Exact2) => MinmaxMode::Exact2,
        Some(Mode::Grid) => MinmaxMode::Grid,
        Some(Mode::Alternating) => MinmaxMode::Alternating,
        None if game.num_principals() == 2 => MinmaxMode::Exact2,
        None => MinmaxMode::Grid,
    }
}

fn minmax_params(s: &SolveArgs, seed: u64) -> Result<MinmaxParams, CliError> {
    if !(s.delta > 0.0 && s.delta <= 0.5) {
        return Err(CliError::Usage(format!("--delta {} is outside (0, 0.5]", s.delta)));
    }
    if s.restarts == 0 {
        return Err(CliError::Usage("--restarts must be at least 1".into()));
    }
    Ok(MinmaxParams {
        delta: s.delta,
        grid_dim_cap: s.grid_dim_cap,
        restarts: s.restarts,
        seed,
        dim_cap: s.dim_cap,
        ..MinmaxParams::default()
    })
}

fn with_solve_settings(r: SolveReport, mode: MinmaxMode, p: &MinmaxParams) -> SolveReport {
    r.setting("mode", mode.as_str())
        .setting("delta", p.delta)
        .setting("restarts", p.restarts)
        .setting("dim_cap", p.dim_cap)
        .setting("grid_dim_cap", p.grid_dim_cap)
}

fn others(game: &FiniteGame, j: usize) -> Vec<usize> {
    (0..game.num_principals()).filter(|&k| k != j).collect()
}

pub fn run(command: &Command, config: &RunConfig, seed: u64) -> Result<Outcome, CliError> {
    match command {
        Command::Validate { game } => validate(game, config, seed),
        Command::BicCheck { game, mechanisms } => {
            let g = io::load_game(game)?;
            let all: Vec<usize> = (0..g.num_principals()).collect();
            let mut loaded = Vec::new();
            for path in mechanisms {
                loaded.push(io::load_direct(&g, path)?);
            }
            let mut individual = Vec::new();
            let mut ok = true;
            for m in &loaded {
                let v = is_individually_bic(&g, m.owner(), m, config.membership_tol)?;
                ok &= v.ok;
                individual.push(json!({
                    "principal": g.principals()[m.owner()].id,
                    "ok": v.ok,
                    "worst": v.worst,
                }));
            }
            let mut joint = serde_json::Value::Null;
            let mut owners: Vec<usize> = loaded.iter().map(DirectMechanism::owner).collect();
            owners.sort_unstable();
            if owners == all {
                let profile = io::load_direct_set(&g, mechanisms, &all)?;
                let v = is_profile_bic(&g, &profile, config.membership_tol)?;
                ok &= v.ok;
                joint = serde_json::to_value(&v).expect("serialisable");
            }
            let mut r = base("bic-check", &g, config, seed);
            r.verdict = Some(if ok { "bic" } else { "not-bic" }.into());
            r.summary = format!(
                "{} mechanism(s) {}",
                loaded.len(),
                if ok { "are BIC" } else { "violate BIC" }
            );
            r.details = json!({ "individual": individual, "joint": joint });
            done(r, ok)
        }
        Command::Vertices { game, j, dim_cap } => {
            let g = io::load_game(game)?;
            let j = io::principal(&g, j)?;
            let vs = enumerate_vertices(&build_bic_polytope(&g, j), *dim_cap)?;
            let mut r = base("vertices", &g, config, seed).setting("dim_cap", dim_cap);
            r.principal = Some(g.principals()[j].id.clone());
            r.summary = format!("{}: {} vertices", g.principals()[j].id, vs.len());
            r.details = json!({ "count": vs.len() });
            r.witness = Some(mechanisms_json(&g, &vs));
            done(r, true)
        }
        Command::BestResponse { game, j, mechanisms } => {
            let g = io::load_game(game)?;
            let j = io::principal(&g, j)?;
            let rest = io::load_direct_set(&g, mechanisms, &others(&g, j))?;
            let br = best_response(&g, j, &rest)?;
            let mut r = base("best-response", &g, config, seed);
            r.principal = Some(g.principals()[j].id.clone());
            r.value = Some(br.value);
            r.witness = Some(mechanisms_json(&g, &[br.mechanism]));
            r.summary = format!("best response of {} = {:.6}", g.principals()[j].id, br.value);
            done(r, true)
        }
        Command::Minmax { game, j, solve } => {
            let g = io::load_game(game)?;
            let j = io::principal(&g, j)?;
            let mode = minmax_mode(&g, solve.mode);
            let params = minmax_params(solve, seed)?;
            let cert = minmax(&g, j, mode, &params)?;
            let mut r = with_solve_settings(base("minmax", &g, config, seed), mode, &params)
                .with_certificate(&g, &cert);
            r.summary = format!(
                "minmax of {} = {:.6} ({}, gap bound {:.2e})",
                g.principals()[j].id,
                cert.value,
                cert.kind.as_str(),
                cert.gap_bound
            );
            r.details = json!({ "witness_value": cert.witness_value });
            done(r, true)
        }
        Command::Maxmin {
            game,
            j,
            force_exact,
            solve,
        } => {
            let g = io::load_game(game)?;
            let j = io::principal(&g, j)?;
            let params = MaxminParams {
                dim_cap: solve.dim_cap,
                force_exact: *force_exact,
                restarts: solve.restarts.max(1),
                seed,
                ..MaxminParams::default()
            };
            let cert = maxmin(&g, j, &params)?;
            let mut r = base("maxmin", &g, config, seed)
                .setting("dim_cap", params.dim_cap)
                .setting("force_exact", params.force_exact)
                .setting("restarts", params.restarts)
                .with_certificate(&g, &cert);
            r.summary = format!(
                "maxmin of {} = {:.6} ({})",
                g.principals()[j].id,
                cert.value,
                cert.kind.as_str()
            );
            done(r, true)
        }
        Command::Punish { game, j, solve } => {
            let g = io::load_game(game)?;
            let j = io::principal(&g, j)?;
            let mode = minmax_mode(&g, solve.mode);
            let params = minmax_params(solve, seed)?;
            let p = punishment_profile(&g, j, mode, &params)?;
            let mut r = with_solve_settings(base("punish", &g, config, seed), mode, &params)
                .with_certificate(&g, &p.certificate);
            r.value = Some(p.value);
            r.summary = format!(
                "punishing {} holds it to {:.6} ({})",
                g.principals()[j].id,
                p.value,
                p.certificate.kind.as_str()
            );
            r.details = json!({ "certificate_value": p.certificate.value });
            done(r, true)
        }
        Command::Membership {
            game,
            mechanisms,
            solve,
        } => {
            let g = io::load_game(game)?;
            let all: Vec<usize> = (0..g.num_principals()).collect();
            let profile = io::load_direct_set(&g, mechanisms, &all)?;
            let mode = minmax_mode(&g, solve.mode);
            let params = minmax_params(solve, seed)?;
            let certs = all
                .iter()
                .map(|&j| minmax(&g, j, mode, &params))
                .collect::<Result<Vec<_>, _>>()?;
            let v = robust_pbe_membership(&g, &profile, &certs, config.membership_tol)?;
            let slacks: Vec<String> = v
                .principals
                .iter()
                .map(|p| format!("{} {:.3e}", g.principals()[p.principal].id, p.slack))
                .collect();
            let mut r = with_solve_settings(base("membership", &g, config, seed), mode, &params);
            r.verdict = Some(v.status.as_str().into());
            r.value = v.principals.iter().map(|p| p.slack).reduce(f64::min);
            r.summary = format!("{} (slack {})", v.status.as_str(), slacks.join(", "));
            r.details = serde_json::to_value(&v).expect("serialisable");
            done(r, v.status == MembershipStatus::Member)
        }
        Command::BuildDrm {
            game,
            j,
            target,
            punishments,
            write,
            solve,
        } => build_drm(game, j, target, punishments, write.as_deref(), solve, config, seed),
        Command::CheckEq {
            game,
            candidate,
            notion,
        } => {
            let g = io::load_game(game)?;
            let file = CandidateFile::from_json(&io::read(candidate)?).map_err(|source| {
                CliError::Parse {
                    file: candidate.clone(),
                    source,
                }
            })?;
            let cand = file.to_candidate(&g).map_err(|source| CliError::Input {
                file: candidate.clone(),
                source,
            })?;
            let notion = match notion {
                NotionArg::Pbe => Notion::Pbe,
                NotionArg::Robust => Notion::Robust,
                NotionArg::StronglyRobust => Notion::StronglyRobust,
            };
            let caps = EnumerationCaps::default();
            let v = check_equilibrium_notion(&g, &cand, notion, &caps, config.value_tol)?;
            let mut r = base("check-eq", &g, config, seed)
                .setting("notion", notion.as_str())
                .setting("strategy_restriction", &v.strategy_restriction)
                .setting("caps", caps);
            r.verdict = Some(v.status.as_str().into());
            r.summary = format!(
                "{}: {} ({} verdict, {} deviation(s) checked)",
                notion.as_str(),
                v.status.as_str(),
                v.strategy_restriction,
                v.deviations.len()
            );
            let ok = v.status == NotionStatus::Holds;
            r.details = serde_json::to_value(&v).expect("serialisable");
            done(r, ok)
        }
        Command::Simulate {
            game,
            mechanisms,
            strategy,
            rounds,
        } => {
            let g = io::load_game(game)?;
            let mut mechs = Vec::new();
            for path in mechanisms {
                mechs.push(io::load_general(&g, path)?);
            }
            mechs.sort_by_key(|m| m.owner());
            let strategies = match strategy {
                Some(path) => io::load_strategies(&g, &mechs, path)?,
                None => PureStrategyProfile::truthful(&g, &mechs).to_mixed(&mechs),
            };
            let sim = simulate(&g, &mechs, &strategies, *rounds, seed)?;
            let mut r = base("simulate", &g, config, seed).setting("rounds", rounds);
            let means: Vec<String> = g
                .principals()
                .iter()
                .zip(&sim.principals)
                .map(|(p, e)| format!("{} {:.4}±{:.4}", p.id, e.mean, e.std_error))
                .collect();
            r.summary = format!("{} rounds: {}", rounds, means.join(", "));
            r.details = serde_json::to_value(&sim).expect("serialisable");
            done(r, true)
        }
        Command::SearchGap {
            family,
            budget,
            j,
            delta,
            dim_cap,
            grid_dim_cap,
            write,
        } => {
            let family = match family {
                FamilyArg::Gap3 => GapFamily::gap3(),
                FamilyArg::TwoPrincipal => GapFamily::TwoPrincipal,
                FamilyArg::ConstantPayoff => GapFamily::ConstantPayoff,
            };
            if *j == 0 {
                return Err(CliError::Usage("-j is 1-based".into()));
            }
            if !(*delta > 0.0 && *delta <= 0.5) {
                return Err(CliError::Usage(format!("--delta {delta} is outside (0, 0.5]")));
            }
            let params = GapSearchParams {
                family,
                budget: *budget,
                seed,
                delta: *delta,
                principal: j - 1,
                grid_dim_cap: *grid_dim_cap,
                dim_cap: *dim_cap,
            };
            let result = search_minmax_maxmin_gap(&params)?;
            let best_game = match &result.best {
                Some(b) => Some(b.game.clone().into_game().map_err(|source| CliError::Parse {
                    file: "<generated>".into(),
                    source,
                })?),
                None => None,
            };
            let hash = best_game.as_ref().map_or(0, FiniteGame::game_hash);
            let mut r = SolveReport::with_hash("search-gap", hash_hex(hash))
                .setting("membership_tol", config.membership_tol)
                .setting("value_tol", config.value_tol)
                .setting("family", result.family.clone())
                .setting("budget", budget)
                .setting("delta", delta)
                .setting("dim_cap", dim_cap)
                .setting("grid_dim_cap", grid_dim_cap);
            r.seed = Some(seed);
            if let (Some(path), Some(best)) = (write, &result.best) {
                io::write_json(path, &best.game)?;
            }
            let found = result.positive_gaps > 0;
            r.value = result.best.as_ref().map(|b| b.gap);
            r.verdict = Some(if found { "gap-found" } else { "no-gap" }.into());
            r.summary = match &result.best {
                Some(b) if found => format!(
                    "{} of {} instances show a gap; best #{}: minmax >= {:.6}, maxmin = {:.6}",
                    result.positive_gaps, result.evaluated, b.index, b.minmax_lower, b.maxmin
                ),
                _ => format!("no certified gap in {} instances", result.evaluated),
            };
            r.details = serde_json::to_value(&result).expect("serialisable");
            done(r, found)
        }
    }
}

fn validate(path: &Path, config: &RunConfig, seed: u64) -> Result<Outcome, CliError> {
    let g = io::parse_game(path)?;
    let v = g.validate();
    let mut r = base("validate", &g, config, seed);
    r.verdict = Some(if v.is_ok() { "valid" } else { "invalid" }.into());
    r.summary = match v.violations.first() {
        None => format!(
            "valid: {} principals, {} agents, {} warning(s)",
            g.num_principals(),
            g.num_agents(),
            v.warnings.len()
        ),
        Some(first) => {
            for issue in &v.violations {
                eprintln!("{}: {}: {}", path.display(), issue.path, issue.message);
            }
            format!(
                "invalid: {}: {} ({} violation(s))",
                first.path,
                first.message,
                v.violations.len()
            )
        }
    };
    let ok = v.is_ok();
    r.details = serde_json::to_value(&v).expect("serialisable");
    Ok(Outcome {
        report: r,
        exit: if ok { 0 } else { 2 },
    })
}

#[allow(clippy::too_many_arguments)]
fn build_drm(
    game: &Path,
    j: &str,
    target: &Path,
    punishments: &[String],
    write: Option<&Path>,
    solve: &SolveArgs,
    config: &RunConfig,
    seed: u64,
) -> Result<Outcome, CliError> {
    let g = io::load_game(game)?;
    let j = io::principal(&g, j)?;
    let target_m = io::load_direct(&g, target)?;
    if target_m.owner() != j {
        return Err(CliError::Usage(format!(
            "{}: target belongs to {}, not {}",
            target.display(),
            g.principals()[target_m.owner()].id,
            g.principals()[j].id
        )));
    }
    let mut given: Vec<Option<DirectMechanism>> = vec![None; g.num_principals()];
    for spec in punishments {
        let (who, file) = spec.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("--punishment {spec:?} is not DEVIATOR=FILE"))
        })?;
        let k = io::principal(&g, who)?;
        if k == j {
            return Err(CliError::Usage(format!("{who} cannot deviate from its own mechanism")));
        }
        given[k] = Some(io::load_direct(&g, Path::new(file))?);
    }
    let mode = minmax_mode(&g, solve.mode);
    let params = minmax_params(solve, seed)?;
    let mut pairs = Vec::new();
    let mut computed = Vec::new();
    for k in others(&g, j) {
        let m = match given[k].take() {
            Some(m) => m,
            None => {
                let p = punishment_profile(&g, k, mode, &params)?;
                computed.push(g.principals()[k].id.clone());
                p.others
                    .into_iter()
                    .find(|m| m.owner() == j)
                    .expect("punishment covers every other principal")
            }
        };
        pairs.push((k, m));
    }
    let gamma = build_deviator_reporting(&g, j, &target_m, &pairs)?;
    let file = MechanismFile::from_mechanism(&g, &gamma);
    if let Some(path) = write {
        io::write_json(path, &file)?;
    }
    let mut r = with_solve_settings(base("build-drm", &g, config, seed), mode, &params);
    r.principal = Some(g.principals()[j].id.clone());
    r.summary = format!(
        "deviator-reporting mechanism for {}: {} agent messages each, {} outcome rows",
        g.principals()[j].id,
        gamma.num_agent_messages(0),
        file.outcome_rows.len()
    );
    r.details = json!({
        "mechanism": file,
        "computed_punishments": computed,
    });
    done(r, true)
}
