use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::dataset::{self, Sample};
use crate::domain::{satisfaction, validate_partition, PartitionVector};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorModel, TrainConfig, TrainReport};
use crate::netsim::{write_kpi_csv, KpiRecord, SimulatorState};
use crate::optimizer::TraceRow;
use crate::schemes::{
    slot_seed, CellContext, EqualSplit, Exploration, Idla, Oracle, Scheme, SchemeKind, Traffic,
};

use super::config::ExperimentConfig;
use super::metrics::{compute_metrics, MetricsTable, Phase, SlotLog};
use super::output::{emit_outputs, write_csv, write_slot_log};

/// Named sub-streams of the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub sim: u64,
    pub exploration: u64,
    pub augment: u64,
    pub split: u64,
    pub init: u64,
    pub train: u64,
    pub solver: u64,
}

impl Seeds {
    pub fn derive(master: u64) -> Self {
        let s = |k: u64| slot_seed(master, k, 0x5eed);
        Seeds {
            sim: s(1),
            exploration: s(2),
            augment: s(3),
            split: s(4),
            init: s(5),
            train: s(6),
            solver: s(7),
        }
    }
}

/// Result of the collection phase.
#[derive(Debug, Clone)]
pub struct Collected {
    /// Simulator state at the end of H0; every online scheme starts from a
    /// copy of it.
    pub state: SimulatorState,
    pub kpis: Vec<KpiRecord>,
    pub logs: Vec<SlotLog>,
    pub samples: Vec<Sample>,
    /// Raw samples before augmentation.
    pub raw_samples: usize,
    pub partitions_checked: u64,
}

/// One optimizer solve, for iteration statistics.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolveStat {
    pub scheme: String,
    pub slot: u64,
    pub cell_id: u32,
    pub best_start: usize,
    pub mean_iterations: f64,
    pub surrogate_utility: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TraceDump {
    pub slot: u64,
    pub cell_id: u32,
    pub start: usize,
    pub iteration: usize,
    pub share_sum: f64,
    pub lambda: f64,
    pub utility: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SchemeRun {
    pub logs: Vec<SlotLog>,
    pub solves: Vec<SolveStat>,
    pub traces: Vec<TraceDump>,
    pub partitions_checked: u64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub metrics: MetricsTable,
    pub logs: Vec<SlotLog>,
    pub solves: Vec<SolveStat>,
    pub model: EstimatorModel,
    pub train_report: TrainReport,
    pub dataset_len: usize,
    /// Partitions that passed the feasibility gate; a violation aborts the run.
    pub partitions_checked: u64,
}

fn phase_of(cfg: &ExperimentConfig, slot: u64) -> Phase {
    if slot < cfg.phases.collect {
        Phase::H0
    } else if slot < cfg.phases.change_slot() {
        Phase::H1
    } else {
        Phase::H2
    }
}

fn log_rows(
    state: &SimulatorState,
    scheme: &str,
    slot: u64,
    phase: Phase,
    records: &[KpiRecord],
) -> Result<Vec<SlotLog>> {
    records
        .iter()
        .map(|r| {
            let spec = state
                .config()
                .profile(r.slice_id)
                .map(|p| p.spec)
                .ok_or_else(|| Error::InvalidArgument(format!("slice {} missing from catalog", r.slice_id)))?;
            Ok(SlotLog {
                scheme: scheme.to_string(),
                slot,
                phase,
                t: r.t,
                cell_id: r.cell_id,
                slice_id: r.slice_id,
                share: r.share,
                prb_util: r.prb_utilization,
                users: r.active_users,
                cqi: r.channel_quality,
                throughput_mbps: r.throughput,
                delay_ms: r.delay,
                tput_req: spec.throughput_req,
                delay_req: spec.delay_req,
                satisfaction: satisfaction(r.outcome(), &spec)?.value(),
            })
        })
        .collect()
}

/// Asks `scheme` for one partition per cell and gates each through
/// `validate_partition`.
fn decide(
    state: &SimulatorState,
    scheme: &dyn Scheme,
    slot: u64,
    previous: &[Option<PartitionVector>],
) -> Result<Vec<crate::schemes::Allocation>> {
    (0..state.num_cells())
        .into_par_iter()
        .map(|ci| {
            let observations = state.observations(ci);
            let demands = state.upcoming_offered_load(ci);
            let ctx = CellContext {
                cell_id: state.cell_ids()[ci],
                slot,
                slices: state.active_slices(ci),
                observations: &observations,
                demands: &demands,
                previous: previous[ci].as_ref(),
            };
            let alloc = scheme.allocate(&ctx)?;
            validate_partition(alloc.partition.shares())?;
            if alloc.partition.len() != ctx.slices.len() {
                return Err(Error::Dimension {
                    expected: ctx.slices.len(),
                    actual: alloc.partition.len(),
                });
            }
            Ok(alloc)
        })
        .collect()
}

fn sim_config(cfg: &ExperimentConfig, seeds: &Seeds) -> crate::netsim::SimConfig {
    let mut sim = cfg.sim.clone();
    sim.seed = seeds.sim;
    sim.initial_slices = cfg.phases.h1_slices.clone();
    sim
}

/// H0: drives a fresh simulator with the exploration policy and builds the
/// (optionally augmented) training set.
pub fn collect(cfg: &ExperimentConfig) -> Result<Collected> {
    cfg.validate()?;
    let seeds = Seeds::derive(cfg.seed);
    let mut state = SimulatorState::init(sim_config(cfg, &seeds))?;
    let policy = Exploration::new(seeds.exploration);
    let none = vec![None; state.num_cells()];
    let mut kpis = Vec::new();
    let mut logs = Vec::new();
    let mut checked = 0;
    for slot in 0..cfg.phases.collect {
        let allocs = decide(&state, &policy, slot, &none)?;
        checked += allocs.len() as u64;
        let partitions: Vec<PartitionVector> = allocs.into_iter().map(|a| a.partition).collect();
        let records = state.step(&partitions)?;
        logs.extend(log_rows(&state, policy.name(), slot, Phase::H0, &records)?);
        kpis.extend(records);
    }
    let catalog: Vec<_> = cfg.sim.slice_catalog.iter().map(|p| p.spec).collect();
    let assembled = dataset::assemble_samples(
        &kpis,
        cfg.sim.history_len,
        &catalog,
        cfg.estimator.resource_input,
    )?;
    let raw_samples = assembled.samples.len();
    let samples = if cfg.estimator.augment {
        dataset::augment(&assembled.samples, seeds.augment)
    } else {
        assembled.samples
    };
    Ok(Collected {
        state,
        kpis,
        logs,
        samples,
        raw_samples,
        partitions_checked: checked,
    })
}

/// Splits, initialises and trains the estimator once.
pub fn train_estimator(
    cfg: &ExperimentConfig,
    samples: &[Sample],
    history_len: usize,
) -> Result<(EstimatorModel, TrainReport)> {
    let seeds = Seeds::derive(cfg.seed);
    let (train, test) = dataset::split(samples, cfg.estimator.train_fraction, seeds.split)?;
    let mut model = EstimatorModel::new(history_len, &cfg.estimator.hidden, seeds.init)?;
    let tc = TrainConfig {
        seed: seeds.train,
        ..cfg.estimator.train.clone()
    };
    let report = model.train(&train, &test, &tc)?;
    Ok((model, report))
}

fn build_scheme(cfg: &ExperimentConfig, kind: SchemeKind, model: &Arc<EstimatorModel>) -> Result<Box<dyn Scheme>> {
    let seeds = Seeds::derive(cfg.seed);
    Ok(match kind {
        SchemeKind::Idla => {
            let params = crate::optimizer::SolverParams {
                seed: seeds.solver,
                record_trace: cfg.trace,
                ..cfg.solver.clone()
            };
            Box::new(Idla::new(Arc::clone(model), params)?)
        }
        SchemeKind::Oracle => Box::new(Oracle::new(
            Arc::clone(model),
            cfg.oracle.grid_step,
            cfg.oracle.max_points,
        )?),
        SchemeKind::Traffic => Box::new(Traffic),
        SchemeKind::Equal => Box::new(EqualSplit),
    })
}

/// H1 and H2 for one scheme on its own replica of the post-H0 simulator.
pub fn run_scheme(
    cfg: &ExperimentConfig,
    kind: SchemeKind,
    start: &SimulatorState,
    model: &Arc<EstimatorModel>,
) -> Result<SchemeRun> {
    let scheme = build_scheme(cfg, kind, model)?;
    let name = scheme.name().to_string();
    let mut state = start.clone();
    let mut previous: Vec<Option<PartitionVector>> = vec![None; state.num_cells()];
    let mut run = SchemeRun::default();
    for slot in cfg.phases.collect..cfg.phases.total() {
        if slot == cfg.phases.change_slot() {
            for cell_id in state.cell_ids() {
                state.reconfigure_slices(cell_id, &cfg.phases.h2_slices)?;
            }
        }
        let allocs = decide(&state, scheme.as_ref(), slot, &previous)?;
        run.partitions_checked += allocs.len() as u64;
        let cell_ids = state.cell_ids();
        let mut partitions = Vec::with_capacity(allocs.len());
        for (ci, alloc) in allocs.into_iter().enumerate() {
            if let Some(solve) = &alloc.solve {
                run.solves.push(SolveStat {
                    scheme: name.clone(),
                    slot,
                    cell_id: cell_ids[ci],
                    best_start: solve.best_start,
                    mean_iterations: solve.mean_iterations(),
                    surrogate_utility: solve.utility,
                });
                run.traces.extend(solve.trace.iter().map(|r: &TraceRow| TraceDump {
                    slot,
                    cell_id: cell_ids[ci],
                    start: r.start,
                    iteration: r.iteration,
                    share_sum: r.share_sum,
                    lambda: r.lambda,
                    utility: r.utility,
                }));
            }
            partitions.push(alloc.partition);
        }
        let records = state.step(&partitions)?;
        run.logs
            .extend(log_rows(&state, &name, slot, phase_of(cfg, slot), &records)?);
        previous = partitions.into_iter().map(Some).collect();
    }
    Ok(run)
}

/// Runs every selected scheme on paired replicas.
pub fn run_online(
    cfg: &ExperimentConfig,
    start: &SimulatorState,
    model: &Arc<EstimatorModel>,
) -> Result<Vec<SchemeRun>> {
    cfg.schemes
        .par_iter()
        .map(|&kind| run_scheme(cfg, kind, start, model))
        .collect()
}

/// The full phased experiment. Artifacts are written to
/// `cfg.output_dir` as each stage completes.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let dir = cfg.output_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml()?).map_err(|e| Error::io(dir.join("config.toml"), e))?;

    let collected = collect(cfg).map_err(|e| Error::stage("collect", e))?;
    write_collected(&collected, cfg.sim.history_len, dir).map_err(|e| Error::stage("collect", e))?;

    let started = Instant::now();
    let (model, report) = train_estimator(cfg, &collected.samples, cfg.sim.history_len)
        .map_err(|e| Error::stage("train", e))?;
    write_model(&model, &report, dir).map_err(|e| Error::stage("train", e))?;
    log::info(&format!(
        "trained on {} samples in {:.1}s, test MAE {:.4}",
        collected.samples.len(),
        started.elapsed().as_secs_f64(),
        report.test_mae
    ));

    let model = Arc::new(model);
    let runs = run_online(cfg, &collected.state, &model).map_err(|e| Error::stage("online", e))?;

    let mut logs = collected.logs;
    let mut solves = Vec::new();
    let mut traces = Vec::new();
    let mut checked = collected.partitions_checked;
    for r in runs {
        logs.extend(r.logs);
        solves.extend(r.solves);
        traces.extend(r.traces);
        checked += r.partitions_checked;
    }
    let metrics = compute_metrics(&logs, cfg.convergence_fraction).map_err(|e| Error::stage("metrics", e))?;
    (|| -> Result<()> {
        write_slot_log(&logs, &dir.join("slot_log.csv"))?;
        write_csv(&dir.join("solver_stats.csv"), &solves)?;
        if cfg.trace {
            write_csv(&dir.join("trace_idla.csv"), &traces)?;
        }
        emit_outputs(&metrics, dir)?;
        Ok(())
    })()
    .map_err(|e| Error::stage("emit", e))?;

    Ok(ExperimentOutput {
        metrics,
        logs,
        solves,
        model: Arc::try_unwrap(model).unwrap_or_else(|m| (*m).clone()),
        train_report: report,
        dataset_len: collected.samples.len(),
        partitions_checked: checked,
    })
}

pub fn write_collected(c: &Collected, history_len: usize, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    dataset::save(&c.samples, history_len, &dir.join("dataset.csv"))?;
    let path = dir.join("kpi_h0.csv");
    let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_kpi_csv(std::io::BufWriter::new(f), &c.kpis)
}

pub fn write_model(model: &EstimatorModel, report: &TrainReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    model.save(&dir.join("model.json"))?;
    let path = dir.join("train_report.json");
    std::fs::write(&path, serde_json::to_string_pretty(report)?).map_err(|e| Error::io(&path, e))
}

mod log {
    pub fn info(msg: &str) {
        if std::env::var_os("NETSLICE_QUIET").is_none() {
            eprintln!("[netslice] {msg}");
        }
    }
}
