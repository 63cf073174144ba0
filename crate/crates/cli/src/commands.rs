use std::path::PathBuf;

use dkf_core::eval::{results_to_csv, run_experiment, tabulate, Method, MethodResult, Metric, ResultTable};
use dkf_core::preprocess::{preprocess_trial, ProcessedTrial, SpikeEvents, VelocitySeries};
use dkf_core::synth::{gen_cosine_tuning, TuningSpec};
use dkf_core::verify::{fast_suite, Check};

use crate::config::{RunConfig, Source};
use crate::error::{CliError, Result};
use crate::ingest::{
    processed_path, processed_to_csv, read_spikes, read_velocity, spikes_path, spikes_to_csv, velocity_path,
    velocity_to_csv, write_text,
};

pub fn trial_id(n: u32) -> String {
    format!("T{n}")
}

/// Raw spikes and velocities of trial `n`, simulated or read from CSV.
pub fn load_raw(cfg: &RunConfig, n: u32) -> Result<(SpikeEvents, VelocitySeries)> {
    match cfg.source {
        Source::Synthetic => {
            let spec = TuningSpec::random(
                cfg.synth_neurons,
                cfg.synth_length,
                cfg.synth_seed.wrapping_add(n as u64),
            );
            let data = gen_cosine_tuning(&spec)?;
            Ok((data.events, data.velocities))
        }
        Source::Csv => Ok((
            read_spikes(&spikes_path(&cfg.data_dir, n))?,
            read_velocity(&velocity_path(&cfg.data_dir, n))?,
        )),
    }
}

pub fn load_trial(cfg: &RunConfig, n: u32) -> Result<ProcessedTrial> {
    let (events, velocities) = load_raw(cfg, n)?;
    preprocess_trial(&trial_id(n), &events, &velocities, &cfg.preprocess).map_err(|e| match cfg.source {
        Source::Csv => CliError::in_file(spikes_path(&cfg.data_dir, n), e),
        Source::Synthetic => e.into(),
    })
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::config(format!("cannot start {jobs} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Write simulated trials as CSV into `data_dir`.
pub fn synth(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for &n in &cfg.trials {
        let spec = TuningSpec::random(
            cfg.synth_neurons,
            cfg.synth_length,
            cfg.synth_seed.wrapping_add(n as u64),
        );
        let data = gen_cosine_tuning(&spec)?;
        let (sp, vp) = (spikes_path(&cfg.data_dir, n), velocity_path(&cfg.data_dir, n));
        write_text(&sp, &spikes_to_csv(&data.events))?;
        write_text(&vp, &velocity_to_csv(&data.velocities))?;
        log::info!(
            "trial {n}: {} spikes from {} neurons",
            data.events.total_spikes(),
            data.events.neuron_count()
        );
        written.extend([sp, vp]);
    }
    Ok(written)
}

/// Write each trial's processed observations and latents into `output`.
pub fn preprocess(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let trials = with_pool(cfg.jobs, || {
        use rayon::prelude::*;
        cfg.trials
            .par_iter()
            .map(|&n| load_trial(cfg, n))
            .collect::<Result<Vec<_>>>()
    })??;
    let mut written = Vec::new();
    for (n, trial) in cfg.trials.iter().zip(&trials) {
        let path = processed_path(&cfg.output, *n);
        write_text(&path, &processed_to_csv(trial))?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub results: Vec<MethodResult>,
    /// Absent when Kalman is not among the methods.
    pub tables: Option<(ResultTable, ResultTable)>,
}

/// Results CSV plus nRMSE and MAAE tables, written into `output`.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    let output = with_pool(cfg.jobs, || -> Result<RunOutput> {
        let mut results = Vec::new();
        for &n in &cfg.trials {
            let trial = load_trial(cfg, n)?;
            log::info!("trial {n}: {} samples", trial.len());
            results.extend(run_experiment(&trial, &cfg.methods, &cfg.seeds, &cfg.experiment)?);
        }
        let tables = if cfg.methods.contains(&Method::Kalman) {
            Some((
                tabulate(&results, Metric::Nrmse, Method::Kalman.name())?,
                tabulate(&results, Metric::Maae, Method::Kalman.name())?,
            ))
        } else {
            log::warn!("Kalman is not among the methods; skipping the percent tables");
            None
        };
        Ok(RunOutput { results, tables })
    })??;
    write_text(
        &cfg.output.join("results.csv"),
        &results_to_csv(&output.results, cfg.record_runtime)?,
    )?;
    if let Some((nrmse, maae)) = &output.tables {
        for (name, table) in [("nrmse", nrmse), ("maae", maae)] {
            write_text(&cfg.output.join(format!("{name}.csv")), &table.to_csv()?)?;
            write_text(&cfg.output.join(format!("{name}.txt")), &table.render())?;
        }
    }
    Ok(output)
}

/// Run the quick oracle checks; fails with the number of failed checks.
pub fn verify() -> (Vec<Check>, Result<()>) {
    let checks = fast_suite();
    let failed = checks.iter().filter(|c| !c.passed).count();
    let status = if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Verification(failed))
    };
    (checks, status)
}
