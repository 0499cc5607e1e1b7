//! Learn, check, rank and repair, end to end.

use std::path::{Path, PathBuf};

use crate::abstraction::{build_state_space, fit_discretizers, MethodKind, Target, TargetSpec};
use crate::checker::{verify, Verdict, VerificationReport};
use crate::cli::config::{Resolved, RunConfig};
use crate::cli::dot::export_dot;
use crate::cli::report::{write_report, Report};
use crate::error::{Error, Result};
use crate::learner::{derive_eps_delta, learn_dtmc, Dtmc, LearnConfig};
use crate::model::{load_dataset, load_network, save_network, ActivationTrace, Network};
use crate::repair::{repair_network, EvalSet, PsoSettings, RepairTask};
use crate::sampler::{derive_seed, sample_range, InputDistribution};
use crate::sensitivity::{state_sensitivity, SensitivityEntry, SensitivityRanking};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FAIL: i32 = 2;
pub const EXIT_NON_PAC: i32 = 3;

// Sub-seeds drawn from the master seed.
const SEED_VERIFY: u64 = 0;
const SEED_VERIFY_FIT: u64 = 1;
const SEED_SENS: u64 = 2;
const SEED_SENS_FIT: u64 = 3;
const SEED_EVAL: u64 = 4;
const SEED_PSO: u64 = 5;
const SEED_REVERIFY: u64 = 6;
const SEED_REVERIFY_FIT: u64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Verify,
    Repair,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub report: Report,
    pub repaired: Option<Network>,
}

pub const REPORT_FILE: &str = "report.json";
pub const DTMC_FILE: &str = "dtmc.txt";
pub const DOT_FILE: &str = "dtmc.dot";
pub const SENSITIVITY_FILE: &str = "sensitivity.csv";
pub const REPAIRED_MODEL_FILE: &str = "repaired_model.json";
pub const REPAIRED_DTMC_FILE: &str = "repaired_dtmc.txt";

fn write(path: PathBuf, text: &str) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn needs_traces(specs: &[TargetSpec]) -> bool {
    specs
        .iter()
        .any(|s| !matches!((s.target, s.method), (Target::Feature(_), MethodKind::Bins)))
}

fn fit_traces(
    net: &Network,
    dist: &InputDistribution,
    n: usize,
    seed: u64,
) -> Result<Vec<ActivationTrace>> {
    sample_range(&dist.reseeded(seed), &net.features, 0, n as u64)?
        .iter()
        .map(|x| net.forward_trace(x))
        .collect()
}

/// Fits discretizers for `specs` and learns a chain over them. With
/// `skip_constant`, targets whose observed values never vary are dropped
/// instead of failing the run.
pub fn learn_chain(
    net: &Network,
    resolved: &Resolved,
    specs: &[TargetSpec],
    config: &LearnConfig,
    fit_samples: usize,
    (sample_seed, fit_seed): (u64, u64),
    skip_constant: bool,
) -> Result<Dtmc> {
    let traces = if needs_traces(specs) {
        fit_traces(net, &resolved.dist, fit_samples, fit_seed)?
    } else {
        Vec::new()
    };
    let kmeans_seed = derive_seed(fit_seed, 1);
    let discretizers = if skip_constant {
        let mut kept = Vec::new();
        for (i, spec) in specs.iter().enumerate() {
            match fit_discretizers(
                net,
                std::slice::from_ref(spec),
                &traces,
                derive_seed(kmeans_seed, i as u64),
            ) {
                Ok(mut d) => kept.append(&mut d),
                Err(Error::DegenerateRange { .. } | Error::TooFewPoints { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        kept
    } else {
        fit_discretizers(net, specs, &traces, kmeans_seed)?
    };
    let targets: Vec<Target> = discretizers.iter().map(|d| d.target).collect();
    let space = build_state_space(net, resolved.protected, &targets, discretizers)?;
    learn_dtmc(net, &resolved.dist.reseeded(sample_seed), &space, config)
}

/// Learns one chain per target (Start, protected values, the target's
/// states, outcomes) and ranks the targets by their sensitivity in it.
/// A single chain threading every target in turn would forget the protected
/// value after the first target, flattening the ranking.
pub fn rank_by_target_chains(
    net: &Network,
    resolved: &Resolved,
    specs: &[TargetSpec],
    config: &LearnConfig,
    fit_samples: usize,
    seeds: (u64, u64),
    skip_constant: bool,
) -> Result<SensitivityRanking> {
    let mut entries = Vec::new();
    for spec in specs {
        let dtmc = learn_chain(
            net,
            resolved,
            std::slice::from_ref(spec),
            config,
            fit_samples,
            seeds,
            skip_constant,
        )?;
        let Some(d) = dtmc.space.targets().first() else {
            continue;
        };
        entries.push(SensitivityEntry {
            target: d.target,
            id: dtmc.space.target_id(0).to_string(),
            sensitivity: state_sensitivity(&dtmc, d.target, resolved.label)?,
        });
    }
    Ok(SensitivityRanking::from_entries(entries, resolved.label))
}

pub fn run_verify_repair(config: &RunConfig, mode: Mode, out_dir: &Path) -> Result<RunOutcome> {
    let net = load_network(&config.model)?;
    let resolved = config.validate(&net)?;
    // loaded up front so a bad file fails before any sampling
    let dataset = match (mode, &config.dataset) {
        (Mode::Repair, Some(path)) => Some(load_dataset(path, &net)?),
        _ => None,
    };
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let (eps, delta) = derive_eps_delta(config.mu_eps, config.mu_delta)?;
    let learn_config = LearnConfig {
        epsilon: eps,
        delta,
        batch_size: config.batch_size,
        max_traces: config.max_traces,
    };
    let seed = |i| derive_seed(config.seed, i);
    let check = |net: &Network, seeds: (u64, u64)| -> Result<(Dtmc, VerificationReport)> {
        let dtmc = learn_chain(
            net,
            &resolved,
            &resolved.abstraction,
            &learn_config,
            config.fit_samples,
            seeds,
            false,
        )?;
        let report = verify(
            &dtmc,
            resolved.label,
            config.xi,
            config.mu_eps,
            config.mu_delta,
        )?;
        Ok((dtmc, report))
    };

    let (dtmc, initial) = check(&net, (seed(SEED_VERIFY), seed(SEED_VERIFY_FIT)))?;
    write(out_dir.join(DTMC_FILE), &dtmc.to_text())?;
    write(out_dir.join(DOT_FILE), &export_dot(&dtmc))?;
    let finish = |ranking: Option<&SensitivityRanking>, repair, code| -> Result<RunOutcome> {
        let report = write_report(&initial, ranking, repair, &out_dir.join(REPORT_FILE))?;
        Ok(RunOutcome {
            exit_code: code,
            report,
            repaired: None,
        })
    };
    if initial.non_pac {
        return finish(None, None, EXIT_NON_PAC);
    }
    if initial.verdict == Verdict::Pass {
        return finish(None, None, EXIT_PASS);
    }

    let ranking = rank_by_target_chains(
        &net,
        &resolved,
        &resolved.sensitivity,
        &learn_config,
        config.fit_samples,
        (seed(SEED_SENS), seed(SEED_SENS_FIT)),
        config.sensitivity.is_none(),
    )?;
    write(out_dir.join(SENSITIVITY_FILE), &ranking.to_csv())?;
    if mode == Mode::Verify {
        return finish(Some(&ranking), None, EXIT_FAIL);
    }
    let Some(dataset) = dataset else {
        return Err(Error::InvalidConfig(
            "repair needs a dataset to measure accuracy".into(),
        ));
    };

    let eval = EvalSet::sample(
        &net,
        &resolved.dist,
        resolved.protected,
        config.repair.n_eval,
        seed(SEED_EVAL),
    )?;
    let r = &config.repair;
    let task = RepairTask {
        k: r.k,
        xi: config.xi,
        alpha: r.alpha,
        label: resolved.label,
        dataset: &dataset,
        eval: &eval,
        settings: PsoSettings {
            swarm_size: r.swarm_size,
            omega: r.omega,
            c1: r.c1,
            c2: r.c2,
            max_iterations: r.max_iterations,
            stall_limit: r.stall_limit,
            stop_margin: r.stop_margin,
            seed: seed(SEED_PSO),
        },
    };
    let (repaired, result) = repair_network(&net, &ranking, &task)?;
    save_network(&repaired, out_dir.join(REPAIRED_MODEL_FILE))?;
    let (re_dtmc, after) = check(&repaired, (seed(SEED_REVERIFY), seed(SEED_REVERIFY_FIT)))?;
    write(out_dir.join(REPAIRED_DTMC_FILE), &re_dtmc.to_text())?;
    let code = if after.non_pac {
        EXIT_NON_PAC
    } else if after.verdict == Verdict::Pass {
        EXIT_PASS
    } else {
        EXIT_FAIL
    };
    let mut outcome = finish(Some(&ranking), Some((&result, &after)), code)?;
    outcome.repaired = Some(repaired);
    Ok(outcome)
}
