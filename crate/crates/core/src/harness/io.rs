//! On-disk formats.
//!
//! Observation stream (written by `simulate`, read by `filter`):
//!
//! | file                  | content                                          |
//! |-----------------------|--------------------------------------------------|
//! | `meta.json`           | population size, users, seed, frame count        |
//! | `observations.ndjson` | one `{"k","i","report"}` record per user and step |
//! | `user_contacts.csv`   | `k,i,j` user pairs with `i < j`                  |
//! | `nonuser_pmf.csv`     | `m,f` non-user contact distribution              |
//! | `truth.csv`           | `k,i,state` for every individual (scoring only)  |
//! | `contacts.csv`        | `k,i,j` all contact pairs with `i < j` (debug)   |
//!
//! Indices are 0-based; users are `0..n_users`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{BetisError, Result};
use crate::filter::NonUserContactModel;
use crate::harness::scenario::{BeliefRow, GroundTruth, ScenarioSummary};
use crate::metrics::StepMetrics;
use crate::model::Compartment;
use crate::observation::{ObservationFrame, ObservationLog, ReportSymbol, UserContacts};

pub const META_FILE: &str = "meta.json";
pub const OBSERVATIONS_FILE: &str = "observations.ndjson";
pub const USER_CONTACTS_FILE: &str = "user_contacts.csv";
pub const CONTACTS_FILE: &str = "contacts.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const NONUSER_PMF_FILE: &str = "nonuser_pmf.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const BELIEFS_FILE: &str = "beliefs.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMeta {
    pub n: usize,
    pub n_users: usize,
    pub seed: u64,
    pub frames: u32,
    pub config_hash: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportRecord {
    k: u32,
    i: usize,
    report: ReportSymbol,
}

#[derive(Debug, Serialize, Deserialize)]
struct PairRecord {
    k: u32,
    i: u32,
    j: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct TruthRecord {
    k: u32,
    i: usize,
    state: Compartment,
}

#[derive(Debug, Serialize, Deserialize)]
struct PmfRecord {
    m: usize,
    f: f64,
}

#[derive(Debug, Serialize)]
struct BeliefRecord {
    k: u32,
    i: usize,
    #[serde(rename = "P_S")]
    p_s: f64,
    #[serde(rename = "P_Sfa")]
    p_sfa: f64,
    #[serde(rename = "P_E")]
    p_e: f64,
    #[serde(rename = "P_I")]
    p_i: f64,
    #[serde(rename = "P_Ia")]
    p_ia: f64,
    #[serde(rename = "P_R")]
    p_r: f64,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| BetisError::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| BetisError::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| BetisError::io(path, e))
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| BetisError::io(path, e))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(open(path)?);
    r.deserialize().map(|row| row.map_err(BetisError::from)).collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| BetisError::io(path, e))
}

fn malformed(path: &Path, reason: impl Into<String>) -> BetisError {
    BetisError::Malformed {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn write_metrics_csv(path: &Path, steps: &[StepMetrics]) -> Result<()> {
    write_csv(path, steps)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<StepMetrics>> {
    read_csv(path)
}

pub fn write_beliefs_csv(path: &Path, rows: &[BeliefRow]) -> Result<()> {
    write_csv(
        path,
        rows.iter().map(|r| {
            let p = r.belief.probs();
            BeliefRecord {
                k: r.k,
                i: r.i,
                p_s: p[0],
                p_sfa: p[1],
                p_e: p[2],
                p_i: p[3],
                p_ia: p[4],
                p_r: p[5],
            }
        }),
    )
}

pub fn write_summary(path: &Path, summaries: &[ScenarioSummary]) -> Result<()> {
    write_json(path, &summaries)
}

pub fn write_contact_model(path: &Path, f: &NonUserContactModel) -> Result<()> {
    write_csv(path, f.pmf().iter().enumerate().map(|(m, &f)| PmfRecord { m, f }))
}

/// Reads an `m,f` table. Missing `m` values are zero; entries must sum to 1.
pub fn read_contact_model(path: &Path) -> Result<NonUserContactModel> {
    let rows: Vec<PmfRecord> = read_csv(path)?;
    let len = rows.iter().map(|r| r.m + 1).max().ok_or_else(|| malformed(path, "empty pmf"))?;
    let mut pmf = vec![0.0; len];
    for r in rows {
        pmf[r.m] += r.f;
    }
    NonUserContactModel::new(pmf).map_err(|e| malformed(path, e.to_string()))
}

/// Exports the observation stream of a simulated run to `dir`.
pub fn write_stream(dir: &Path, gt: &GroundTruth, f: &NonUserContactModel, config_hash: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| BetisError::io(dir, e))?;
    write_json(
        &dir.join(META_FILE),
        &StreamMeta {
            n: gt.n,
            n_users: gt.n_users,
            seed: gt.seed,
            frames: gt.log.len() as u32,
            config_hash: config_hash.to_string(),
        },
    )?;

    let obs_path = dir.join(OBSERVATIONS_FILE);
    let mut w = create(&obs_path)?;
    for frame in gt.log.frames() {
        for (i, &report) in frame.reports.iter().enumerate() {
            serde_json::to_writer(&mut w, &ReportRecord { k: frame.time, i, report })?;
            w.write_all(b"\n").map_err(|e| BetisError::io(&obs_path, e))?;
        }
    }
    w.flush().map_err(|e| BetisError::io(&obs_path, e))?;

    write_csv(
        &dir.join(USER_CONTACTS_FILE),
        gt.log
            .frames()
            .iter()
            .flat_map(|fr| fr.contacts.pairs().map(move |(i, j)| PairRecord { k: fr.time, i, j })),
    )?;
    write_csv(
        &dir.join(CONTACTS_FILE),
        gt.snapshots
            .iter()
            .flat_map(|s| s.pairs().map(move |(i, j)| PairRecord { k: s.time(), i, j })),
    )?;
    write_csv(
        &dir.join(TRUTH_FILE),
        gt.truths.iter().enumerate().flat_map(|(idx, states)| {
            states.iter().enumerate().map(move |(i, &state)| TruthRecord {
                k: idx as u32 + 1,
                i,
                state,
            })
        }),
    )?;
    write_contact_model(&dir.join(NONUSER_PMF_FILE), f)
}

/// Observation stream read back from disk.
#[derive(Debug, Clone)]
pub struct ReplayInput {
    pub dir: PathBuf,
    pub meta: StreamMeta,
    pub log: ObservationLog,
    /// Present when `truth.csv` exists.
    pub truths: Option<Vec<Vec<Compartment>>>,
    /// Present when `nonuser_pmf.csv` exists.
    pub contact_model: Option<NonUserContactModel>,
}

pub fn read_stream(dir: &Path) -> Result<ReplayInput> {
    let meta_path = dir.join(META_FILE);
    let meta: StreamMeta = serde_json::from_reader(open(&meta_path)?)?;
    let frames = meta.frames as usize;
    let n_users = meta.n_users;

    let obs_path = dir.join(OBSERVATIONS_FILE);
    let mut reports: Vec<Vec<Option<ReportSymbol>>> = vec![vec![None; n_users]; frames];
    for (line_no, line) in open(&obs_path)?.lines().enumerate() {
        let line = line.map_err(|e| BetisError::io(&obs_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ReportRecord = serde_json::from_str(&line)
            .map_err(|e| malformed(&obs_path, format!("line {}: {e}", line_no + 1)))?;
        if rec.k == 0 || rec.k as usize > frames || rec.i >= n_users {
            return Err(malformed(&obs_path, format!("line {}: (k={}, i={}) out of range", line_no + 1, rec.k, rec.i)));
        }
        let slot = &mut reports[rec.k as usize - 1][rec.i];
        if slot.replace(rec.report).is_some() {
            return Err(malformed(&obs_path, format!("duplicate report for k={}, i={}", rec.k, rec.i)));
        }
    }

    let contacts_path = dir.join(USER_CONTACTS_FILE);
    let mut pairs: BTreeMap<u32, Vec<(u32, u32)>> = BTreeMap::new();
    for rec in read_csv::<PairRecord>(&contacts_path)? {
        pairs.entry(rec.k).or_default().push((rec.i, rec.j));
    }

    let mut log = ObservationLog::new(n_users);
    for (idx, frame_reports) in reports.into_iter().enumerate() {
        let k = idx as u32 + 1;
        let reports = frame_reports
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.ok_or_else(|| malformed(&obs_path, format!("missing report for k={k}, i={i}"))))
            .collect::<Result<Vec<_>>>()?;
        let contacts = UserContacts::from_pairs(n_users, pairs.get(&k).map_or(&[][..], Vec::as_slice))
            .map_err(|e| malformed(&contacts_path, e.to_string()))?;
        log.push(ObservationFrame { time: k, reports, contacts })?;
    }

    let truth_path = dir.join(TRUTH_FILE);
    let truths = if truth_path.exists() {
        let mut truths = vec![vec![Compartment::S; meta.n]; frames];
        let mut seen = 0usize;
        for rec in read_csv::<TruthRecord>(&truth_path)? {
            if rec.k == 0 || rec.k as usize > frames || rec.i >= meta.n {
                return Err(malformed(&truth_path, format!("(k={}, i={}) out of range", rec.k, rec.i)));
            }
            truths[rec.k as usize - 1][rec.i] = rec.state;
            seen += 1;
        }
        if seen != frames * meta.n {
            return Err(malformed(&truth_path, format!("expected {} rows, found {seen}", frames * meta.n)));
        }
        Some(truths)
    } else {
        None
    };

    let pmf_path = dir.join(NONUSER_PMF_FILE);
    let contact_model = if pmf_path.exists() {
        Some(read_contact_model(&pmf_path)?)
    } else {
        None
    };

    Ok(ReplayInput {
        dir: dir.to_path_buf(),
        meta,
        log,
        truths,
        contact_model,
    })
}
