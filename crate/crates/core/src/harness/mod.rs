//! Scenario configuration, end-to-end runs, replay and output files.
//!
//! Output layout of a scenario rooted at `output_dir`:
//!
//! ```text
//! output_dir/
//!   summary.json
//!   seed_<seed>/metrics.csv
//!   seed_<seed>/beliefs.csv        (with dump_beliefs)
//!   seed_<seed>/stream/...         (with export_stream; see `io`)
//! ```

pub mod config;
pub mod io;
pub mod scenario;

use std::path::{Path, PathBuf};

pub use config::{load_config, scenario_suite, ContactModelSource, Preset, ScenarioConfig, SUITE_NAMES};
pub use scenario::{
    evaluate, resolve_contact_model, run_scenario, run_seed, simulate, GroundTruth, RunRecord, RunSummary,
    ScenarioSummary,
};

use crate::error::{BetisError, Result};
use crate::exec::Exec;

#[derive(Debug, Clone, Copy, Default)]
pub struct OutputOptions {
    pub dump_beliefs: bool,
    pub export_stream: bool,
}

pub fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed_{seed}"))
}

/// Runs all seeds of `cfg` and writes the per-seed files plus
/// `summary.json` under `cfg.output_dir`.
pub fn run_and_write(cfg: &ScenarioConfig, exec: Exec, opts: OutputOptions) -> Result<ScenarioSummary> {
    cfg.validate()?;
    let records = exec
        .map_slice(&cfg.seeds, |_, &seed| -> Result<RunRecord> {
            let out = run_seed(cfg, seed, exec, opts.dump_beliefs)?;
            let dir = seed_dir(&cfg.output_dir, seed);
            io::write_metrics_csv(&dir.join(io::METRICS_FILE), &out.record.steps)?;
            if let Some(rows) = &out.beliefs {
                io::write_beliefs_csv(&dir.join(io::BELIEFS_FILE), rows)?;
            }
            if opts.export_stream {
                io::write_stream(&dir.join("stream"), &out.ground_truth, &out.contact_model, &out.record.config_hash)?;
            }
            Ok(out.record)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let summary = ScenarioSummary::new(cfg, &records);
    io::write_summary(&cfg.output_dir.join(io::SUMMARY_FILE), std::slice::from_ref(&summary))?;
    Ok(summary)
}

/// Simulates each seed and exports its observation stream to
/// `output_dir/seed_<seed>/`.
pub fn simulate_and_export(cfg: &ScenarioConfig, exec: Exec) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    exec.map_slice(&cfg.seeds, |_, &seed| {
        let gt = simulate(cfg, seed, exec)?;
        let f = resolve_contact_model(cfg, Some(&gt.snapshots), None)?;
        let dir = seed_dir(&cfg.output_dir, seed);
        io::write_stream(&dir, &gt, &f, &cfg.config_hash())?;
        Ok(dir)
    })
    .into_iter()
    .collect()
}

/// Filters an exported observation stream and scores it with the exported
/// truths. The filter itself only reads the observation files and the
/// contact model.
pub fn replay(cfg: &ScenarioConfig, stream_dir: &Path, exec: Exec, opts: OutputOptions) -> Result<RunRecord> {
    let started = std::time::Instant::now();
    let input = io::read_stream(stream_dir)?;
    if input.meta.n != cfg.n || input.meta.n_users != cfg.n_users() {
        return Err(BetisError::invalid(
            "n/c0",
            format!(
                "stream has n={} users={}, config has n={} users={}",
                input.meta.n,
                input.meta.n_users,
                cfg.n,
                cfg.n_users()
            ),
        ));
    }
    let truths = input.truths.as_ref().ok_or_else(|| BetisError::Malformed {
        path: stream_dir.join(io::TRUTH_FILE),
        reason: "truth file is required to score a replay".to_string(),
    })?;
    let f = resolve_contact_model(cfg, None, input.contact_model.as_ref())?;
    let mut beliefs = opts.dump_beliefs.then(Vec::new);
    let (steps, degenerate) = evaluate(cfg, &input.log, truths, &f, exec, beliefs.as_mut())?;
    let record = RunRecord {
        config_hash: cfg.config_hash(),
        seed: input.meta.seed,
        steps,
        degenerate_evidence: degenerate,
        duration_secs: started.elapsed().as_secs_f64(),
    };
    let dir = seed_dir(&cfg.output_dir, record.seed);
    io::write_metrics_csv(&dir.join(io::METRICS_FILE), &record.steps)?;
    if let Some(rows) = &beliefs {
        io::write_beliefs_csv(&dir.join(io::BELIEFS_FILE), rows)?;
    }
    let summary = ScenarioSummary::new(cfg, std::slice::from_ref(&record));
    io::write_summary(&dir.join(io::SUMMARY_FILE), std::slice::from_ref(&summary))?;
    Ok(record)
}
