use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BetisError, Result};
use crate::exec::Exec;
use crate::filter::{run_filter_with, Belief, NonUserContactModel};
use crate::harness::config::{ContactModelSource, ScenarioConfig};
use crate::harness::io;
use crate::metrics::{step_metrics, StepInputs, StepMetrics};
use crate::mobility::{compute_contacts, init_locations, move_step, nonuser_contact_distribution, ContactSnapshot};
use crate::model::{step_population, Compartment, PopulationState};
use crate::observation::{observe_step, ObservationLog};
use crate::rng::{Purpose, RngStreams};

/// Everything the simulator produced for one seed.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub n: usize,
    pub n_users: usize,
    pub seed: u64,
    /// Full contact snapshots, one per simulated step.
    pub snapshots: Vec<ContactSnapshot>,
    /// True compartments of all individuals, one vector per step.
    pub truths: Vec<Vec<Compartment>>,
    pub log: ObservationLog,
}

fn sample_initial_states(cfg: &ScenarioConfig, streams: &RngStreams, exec: Exec) -> Vec<Compartment> {
    let prior = *cfg.prior.belief().probs();
    exec.map_range(cfg.n, |i| {
        let u: f64 = streams.stream(Purpose::InitialState, 0, i as u32).random();
        let mut acc = 0.0;
        for c in Compartment::ALL {
            acc += prior[c.index()];
            if u < acc {
                return c;
            }
        }
        // Rounding in the cumulative sum: fall back to the last supported state.
        *Compartment::ALL.iter().rev().find(|c| prior[c.index()] > 0.0).unwrap_or(&Compartment::S)
    })
}

/// Runs the ground-truth epidemic and records the app's observations.
pub fn simulate(cfg: &ScenarioConfig, seed: u64, exec: Exec) -> Result<GroundTruth> {
    cfg.validate()?;
    let n_users = cfg.n_users();
    let streams = RngStreams::new(seed);
    let mut pop = PopulationState::new(sample_initial_states(cfg, &streams, exec), n_users, 1)?;
    let mut locs = init_locations(cfg.n, &streams, exec)?;
    let mut log = ObservationLog::new(n_users);
    let mut snapshots = Vec::with_capacity(cfg.horizon as usize);
    let mut truths = Vec::with_capacity(cfg.horizon as usize);

    for k in 1..=cfg.horizon {
        let contacts = compute_contacts(&locs, cfg.params.d_inf, n_users, k, exec)?;
        observe_step(&pop, &contacts, &cfg.params, &streams, exec, &mut log)?;
        truths.push(pop.states.clone());
        let extinct = pop.is_extinct();
        if k < cfg.horizon && !(cfg.early_stop && extinct) {
            pop = step_population(&pop, &contacts, &cfg.params, &streams, exec)?;
            locs = move_step(&locs, cfg.params.p_move, k, &streams, exec);
        }
        snapshots.push(contacts);
        if cfg.early_stop && extinct {
            break;
        }
    }
    Ok(GroundTruth {
        n: cfg.n,
        n_users,
        seed,
        snapshots,
        truths,
        log,
    })
}

/// Resolves `f(m)` for a run. The empirical source needs the run's contact
/// snapshots, or a previously exported pmf.
pub fn resolve_contact_model(
    cfg: &ScenarioConfig,
    snapshots: Option<&[ContactSnapshot]>,
    exported: Option<&NonUserContactModel>,
) -> Result<NonUserContactModel> {
    match &cfg.f_source {
        ContactModelSource::Empirical => match (snapshots, exported) {
            (Some(s), _) => nonuser_contact_distribution(s),
            (None, Some(f)) => Ok(f.clone()),
            (None, None) => Err(BetisError::invalid(
                "f_source",
                "empirical contact model needs ground-truth snapshots or an exported pmf",
            )),
        },
        ContactModelSource::Poisson { lambda } => {
            let lambda = lambda.unwrap_or_else(|| {
                (cfg.n - cfg.n_users()) as f64 * std::f64::consts::PI * cfg.params.d_inf * cfg.params.d_inf
            });
            NonUserContactModel::poisson(lambda)
        }
        ContactModelSource::File { path } => io::read_contact_model(path),
    }
}

/// One row of the optional beliefs dump.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefRow {
    pub k: u32,
    pub i: usize,
    pub belief: Belief,
}

/// Filters an observation log and scores every step against the truths.
pub fn evaluate(
    cfg: &ScenarioConfig,
    log: &ObservationLog,
    truths: &[Vec<Compartment>],
    f: &NonUserContactModel,
    exec: Exec,
    mut beliefs_out: Option<&mut Vec<BeliefRow>>,
) -> Result<(Vec<StepMetrics>, u64)> {
    if truths.len() != log.len() {
        return Err(BetisError::DimensionMismatch {
            what: "truth frames vs observation frames",
            expected: log.len(),
            actual: truths.len(),
        });
    }
    let mut steps = Vec::with_capacity(log.len());
    let degenerate = run_filter_with(log, &cfg.params, &cfg.prior, f, exec, |state| {
        let idx = steps.len();
        let frame = &log.frames()[idx];
        steps.push(step_metrics(&StepInputs {
            k: state.time,
            beliefs: &state.beliefs,
            reports: &frame.reports,
            truths: &truths[idx],
            n_test: cfg.n_test,
            policy: cfg.test_policy,
        })?);
        if let Some(rows) = beliefs_out.as_deref_mut() {
            rows.extend(state.beliefs.iter().enumerate().map(|(i, &belief)| BeliefRow {
                k: state.time,
                i,
                belief,
            }));
        }
        Ok(())
    })?;
    Ok((steps, degenerate))
}

/// Result of one `(config, seed)` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub seed: u64,
    pub steps: Vec<StepMetrics>,
    pub degenerate_evidence: u64,
    pub duration_secs: f64,
}

/// A run plus the artifacts needed to export it.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: RunRecord,
    pub ground_truth: GroundTruth,
    pub contact_model: NonUserContactModel,
    pub beliefs: Option<Vec<BeliefRow>>,
}

pub fn run_seed(cfg: &ScenarioConfig, seed: u64, exec: Exec, dump_beliefs: bool) -> Result<RunOutput> {
    let started = Instant::now();
    let gt = simulate(cfg, seed, exec)?;
    let f = resolve_contact_model(cfg, Some(&gt.snapshots), None)?;
    let mut beliefs = dump_beliefs.then(Vec::new);
    let (steps, degenerate) = evaluate(cfg, &gt.log, &gt.truths, &f, exec, beliefs.as_mut())?;
    Ok(RunOutput {
        record: RunRecord {
            config_hash: cfg.config_hash(),
            seed,
            steps,
            degenerate_evidence: degenerate,
            duration_secs: started.elapsed().as_secs_f64(),
        },
        ground_truth: gt,
        contact_model: f,
        beliefs,
    })
}

/// Runs every seed of the scenario (seeds in parallel under `Exec::Parallel`).
pub fn run_scenario(cfg: &ScenarioConfig, exec: Exec) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    exec.map_slice(&cfg.seeds, |_, &seed| run_seed(cfg, seed, exec, false).map(|o| o.record))
        .into_iter()
        .collect()
}

/// Per-run aggregates reported in `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub steps: usize,
    pub duration_secs: f64,
    pub degenerate_evidence: u64,
    pub peak_true_i: usize,
    pub mean_abs_error_i: f64,
    pub mean_abs_error_ia: f64,
    /// Share of steps with `true_I >= 10` where the estimate is not below it.
    pub overestimate_fraction_i: Option<f64>,
    pub overestimate_fraction_ia: Option<f64>,
    /// Mean of `tp_I / true_I_users` over steps with at least 20 such users.
    pub tp_fraction_i: Option<f64>,
    pub max_map_ia: usize,
    pub positives_in_window: usize,
    pub random_positives_in_window: f64,
}

/// Minimum number of truly symptomatic users for a step to count as part of
/// the epidemic window.
pub const EPIDEMIC_WINDOW_MIN_I: usize = 20;
/// Minimum true count for a step to enter the overestimation check.
pub const OVERESTIMATE_MIN_COUNT: usize = 10;

fn fraction(hits: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| hits as f64 / total as f64)
}

impl RunRecord {
    pub fn in_window(step: &StepMetrics) -> bool {
        step.true_i_users >= EPIDEMIC_WINDOW_MIN_I
    }

    pub fn summary(&self) -> RunSummary {
        let steps = &self.steps;
        let n = steps.len().max(1) as f64;
        let over = |sel: fn(&StepMetrics) -> (usize, f64)| {
            let eligible: Vec<_> = steps.iter().map(sel).filter(|&(t, _)| t >= OVERESTIMATE_MIN_COUNT).collect();
            fraction(eligible.iter().filter(|&&(t, e)| e >= t as f64).count(), eligible.len())
        };
        let window: Vec<&StepMetrics> = steps.iter().filter(|s| Self::in_window(s)).collect();
        let tp_fraction_i = (!window.is_empty()).then(|| {
            window.iter().map(|s| s.tp_i as f64 / s.true_i_users as f64).sum::<f64>() / window.len() as f64
        });
        RunSummary {
            seed: self.seed,
            steps: steps.len(),
            duration_secs: self.duration_secs,
            degenerate_evidence: self.degenerate_evidence,
            peak_true_i: steps.iter().map(|s| s.true_i).max().unwrap_or(0),
            mean_abs_error_i: steps.iter().map(|s| (s.est_i - s.true_i as f64).abs()).sum::<f64>() / n,
            mean_abs_error_ia: steps.iter().map(|s| (s.est_ia - s.true_ia as f64).abs()).sum::<f64>() / n,
            overestimate_fraction_i: over(|s| (s.true_i, s.est_i)),
            overestimate_fraction_ia: over(|s| (s.true_ia, s.est_ia)),
            tp_fraction_i,
            max_map_ia: steps.iter().map(|s| s.tp_ia + s.fp_ia).max().unwrap_or(0),
            positives_in_window: window.iter().map(|s| s.positives).sum(),
            random_positives_in_window: window.iter().map(|s| s.random_positives).sum(),
        }
    }
}

/// Mean and sample standard deviation across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    pub mean: f64,
    pub std: f64,
}

impl Dispersion {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Some(Dispersion { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub name: String,
    pub config_hash: String,
    pub config: ScenarioConfig,
    pub runs: Vec<RunSummary>,
    pub mean_abs_error_i: Option<Dispersion>,
    pub mean_abs_error_ia: Option<Dispersion>,
    pub tp_fraction_i: Option<Dispersion>,
    pub overestimate_fraction_i: Option<Dispersion>,
    pub overestimate_fraction_ia: Option<Dispersion>,
}

impl ScenarioSummary {
    pub fn new(cfg: &ScenarioConfig, records: &[RunRecord]) -> Self {
        let runs: Vec<RunSummary> = records.iter().map(RunRecord::summary).collect();
        let collect = |f: fn(&RunSummary) -> Option<f64>| Dispersion::of(&runs.iter().filter_map(f).collect::<Vec<_>>());
        ScenarioSummary {
            name: cfg.name.clone(),
            config_hash: cfg.config_hash(),
            config: cfg.clone(),
            mean_abs_error_i: collect(|r| Some(r.mean_abs_error_i)),
            mean_abs_error_ia: collect(|r| Some(r.mean_abs_error_ia)),
            tp_fraction_i: collect(|r| r.tp_fraction_i),
            overestimate_fraction_i: collect(|r| r.overestimate_fraction_i),
            overestimate_fraction_ia: collect(|r| r.overestimate_fraction_ia),
            runs,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Preset;

    fn small(n: usize, horizon: u32) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::defaults(Preset::Desk);
        cfg.n = n;
        cfg.horizon = horizon;
        cfg.params.d_inf = 0.007 * (1e4 / n as f64).sqrt();
        cfg.n_test = 5;
        cfg
    }

    #[test]
    fn single_step_run() {
        let mut cfg = small(300, 1);
        cfg.seeds = vec![42];
        let records = run_scenario(&cfg, Exec::default()).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].steps.len(), 1);
        assert_eq!(records[0].steps[0].k, 1);
    }

    #[test]
    fn runs_are_reproducible_across_modes() {
        let cfg = small(400, 40);
        let a = run_seed(&cfg, 7, Exec::Sequential, false).unwrap().record;
        let b = run_seed(&cfg, 7, Exec::Parallel, false).unwrap().record;
        assert_eq!(a.steps, b.steps);
        assert_eq!(a.config_hash, b.config_hash);
    }

    #[test]
    fn truth_and_log_align() {
        let cfg = small(300, 30);
        let gt = simulate(&cfg, 3, Exec::default()).unwrap();
        assert_eq!(gt.truths.len(), gt.log.len());
        assert_eq!(gt.snapshots.len(), gt.log.len());
        for (k, frame) in gt.log.frames().iter().enumerate() {
            assert_eq!(frame.time as usize, k + 1);
            assert_eq!(frame.reports.len(), cfg.n_users());
        }
    }

    #[test]
    fn no_individual_is_exposed_twice() {
        let cfg = small(1000, 120);
        let gt = simulate(&cfg, 5, Exec::default()).unwrap();
        let mut entries = vec![0u32; cfg.n];
        for w in gt.truths.windows(2) {
            for i in 0..cfg.n {
                if w[1][i] == Compartment::E && w[0][i] != Compartment::E {
                    entries[i] += 1;
                }
                assert!(!(w[0][i] == Compartment::R && w[1][i] != Compartment::R));
                assert!(!(matches!(w[0][i], Compartment::S | Compartment::Sfa) && w[1][i].is_infectious()));
            }
        }
        assert!(entries.iter().all(|&e| e <= 1));
        assert!(entries.contains(&1), "epidemic never started");
    }

    #[test]
    fn poisson_contact_model_default_rate() {
        let mut cfg = ScenarioConfig::defaults(Preset::Paper);
        cfg.f_source = ContactModelSource::Poisson { lambda: None };
        let f = resolve_contact_model(&cfg, None, None).unwrap();
        assert!((f.mean() - 4000.0 * std::f64::consts::PI * 0.007 * 0.007).abs() < 1e-6);
        cfg.f_source = ContactModelSource::Empirical;
        assert!(resolve_contact_model(&cfg, None, None).is_err());
    }

    #[test]
    fn dispersion() {
        let d = Dispersion::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(d.mean, 2.0);
        assert!((d.std - 1.0).abs() < 1e-15);
        assert!(Dispersion::of(&[]).is_none());
    }
}
