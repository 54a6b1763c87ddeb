//! What the app sees: one self-report per user per step and the contacts
//! between users. Nothing in this module's output refers to non-users.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BetisError, Result};
use crate::exec::Exec;
use crate::mobility::ContactSnapshot;
use crate::model::{Compartment, EpidemicParams, PopulationState};
use crate::rng::{Purpose, RngStreams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReportSymbol {
    /// Healthy, no symptoms.
    RepS,
    /// Symptoms classified as another disease.
    RepSfa,
    /// Symptoms classified as COVID-19.
    RepI,
}

impl ReportSymbol {
    pub const ALL: [ReportSymbol; 3] = [ReportSymbol::RepS, ReportSymbol::RepSfa, ReportSymbol::RepI];

    pub fn as_str(self) -> &'static str {
        match self {
            ReportSymbol::RepS => "RepS",
            ReportSymbol::RepSfa => "RepSfa",
            ReportSymbol::RepI => "RepI",
        }
    }
}

impl fmt::Display for ReportSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReportSymbol {
    type Err = BetisError;

    fn from_str(s: &str) -> Result<Self> {
        ReportSymbol::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| BetisError::invalid("report", format!("unknown report symbol `{s}`")))
    }
}

/// `Pr[report = r | state = c]`.
///
/// Symptomless states (S, E, I_a, R) always report healthy; S_fa and I report
/// symptoms that are classified as COVID-19 with probability `p_fa` and
/// `p_tp` respectively.
pub fn report_likelihood(r: ReportSymbol, c: Compartment, p_fa: f64, p_tp: f64) -> f64 {
    use Compartment::*;
    use ReportSymbol::*;
    let p_covid = match c {
        S | E | Ia | R => return if r == RepS { 1.0 } else { 0.0 },
        Sfa => p_fa,
        I => p_tp,
    };
    match r {
        RepS => 0.0,
        RepSfa => 1.0 - p_covid,
        RepI => p_covid,
    }
}

pub fn generate_report<R: Rng + ?Sized>(c: Compartment, p_fa: f64, p_tp: f64, rng: &mut R) -> ReportSymbol {
    let p_covid = match c {
        Compartment::Sfa => p_fa,
        Compartment::I => p_tp,
        _ => return ReportSymbol::RepS,
    };
    if rng.random::<f64>() < p_covid {
        ReportSymbol::RepI
    } else {
        ReportSymbol::RepSfa
    }
}

/// User-to-user contacts at one step, row-compressed over users `0..n_users`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct UserContacts {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl UserContacts {
    pub fn from_snapshot(snap: &ContactSnapshot) -> Self {
        let mut offsets = Vec::with_capacity(snap.n_users() + 1);
        offsets.push(0);
        let mut neighbors = Vec::new();
        for i in 0..snap.n_users() {
            neighbors.extend_from_slice(snap.user_neighbors(i));
            offsets.push(neighbors.len());
        }
        UserContacts { offsets, neighbors }
    }

    /// Builds the contact sets from undirected user pairs.
    pub fn from_pairs(n_users: usize, pairs: &[(u32, u32)]) -> Result<Self> {
        let mut rows = vec![Vec::new(); n_users];
        for &(a, b) in pairs {
            if a as usize >= n_users || b as usize >= n_users {
                return Err(BetisError::invalid(
                    "user_contacts",
                    format!("pair ({a}, {b}) references a non-user index (n_users = {n_users})"),
                ));
            }
            if a != b {
                rows[a as usize].push(b);
                rows[b as usize].push(a);
            }
        }
        let mut offsets = Vec::with_capacity(n_users + 1);
        offsets.push(0);
        let mut neighbors = Vec::new();
        for mut row in rows {
            row.sort_unstable();
            row.dedup();
            neighbors.extend(row);
            offsets.push(neighbors.len());
        }
        Ok(UserContacts { offsets, neighbors })
    }

    pub fn n_users(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.n_users()).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .filter(move |&&j| (j as usize) > i)
                .map(move |&j| (i as u32, j))
        })
    }

    pub fn max_index(&self) -> Option<u32> {
        self.neighbors.iter().copied().max()
    }
}

/// The measurement set of one time step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationFrame {
    pub time: u32,
    pub reports: Vec<ReportSymbol>,
    pub contacts: UserContacts,
}

/// Append-only measurement history `M[k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationLog {
    n_users: usize,
    frames: Vec<ObservationFrame>,
}

impl ObservationLog {
    pub fn new(n_users: usize) -> Self {
        ObservationLog {
            n_users,
            frames: Vec::new(),
        }
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn frames(&self) -> &[ObservationFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Time index the next frame must carry.
    pub fn next_time(&self) -> u32 {
        self.frames.last().map_or(1, |f| f.time + 1)
    }

    pub fn push(&mut self, frame: ObservationFrame) -> Result<()> {
        if frame.time != self.next_time() {
            return Err(BetisError::TimeMismatch {
                what: "observation frame",
                expected: self.next_time(),
                actual: frame.time,
            });
        }
        if frame.reports.len() != self.n_users {
            return Err(BetisError::DimensionMismatch {
                what: "reports per frame",
                expected: self.n_users,
                actual: frame.reports.len(),
            });
        }
        if frame.contacts.n_users() != self.n_users {
            return Err(BetisError::DimensionMismatch {
                what: "user contact rows per frame",
                expected: self.n_users,
                actual: frame.contacts.n_users(),
            });
        }
        if let Some(j) = frame.contacts.max_index() {
            if j as usize >= self.n_users {
                return Err(BetisError::invalid("user_contacts", format!("index {j} is not a user")));
            }
        }
        self.frames.push(frame);
        Ok(())
    }
}

/// Records the reports of all users and their user-to-user contacts at the
/// population's current time.
pub fn observe_step(
    pop: &PopulationState,
    contacts: &ContactSnapshot,
    params: &EpidemicParams,
    streams: &RngStreams,
    exec: Exec,
    log: &mut ObservationLog,
) -> Result<()> {
    if contacts.time() != pop.time {
        return Err(BetisError::TimeMismatch {
            what: "contact snapshot",
            expected: pop.time,
            actual: contacts.time(),
        });
    }
    if pop.n_users != log.n_users() || contacts.n_users() != log.n_users() {
        return Err(BetisError::DimensionMismatch {
            what: "users in observation log",
            expected: log.n_users(),
            actual: pop.n_users,
        });
    }
    let k = pop.time;
    let reports = exec.map_slice(pop.user_states(), |i, &c| {
        let mut rng = streams.stream(Purpose::Report, k, i as u32);
        generate_report(c, params.p_fa, params.p_tp, &mut rng)
    });
    log.push(ObservationFrame {
        time: k,
        reports,
        contacts: UserContacts::from_snapshot(contacts),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use Compartment::*;
    use ReportSymbol::*;

    #[test]
    fn likelihood_examples() {
        assert_eq!(report_likelihood(RepS, E, 0.1, 0.9), 1.0);
        assert_eq!(report_likelihood(RepI, Sfa, 0.1, 0.9), 0.1);
        assert_eq!(report_likelihood(RepI, I, 0.1, 0.9), 0.9);
        assert_eq!(report_likelihood(RepI, S, 0.1, 0.9), 0.0);
        assert_eq!(report_likelihood(RepSfa, I, 0.1, 0.9), 1.0 - 0.9);
    }

    #[test]
    fn likelihood_columns_sum_to_one() {
        for c in Compartment::ALL {
            for (p_fa, p_tp) in [(0.1, 0.9), (0.2, 0.75), (0.0, 1.0), (0.37, 0.11)] {
                let total: f64 = ReportSymbol::ALL.iter().map(|&r| report_likelihood(r, c, p_fa, p_tp)).sum();
                assert_eq!(total, 1.0);
            }
        }
    }

    #[test]
    fn generated_reports_follow_likelihood() {
        let n = 100_000;
        let (p_fa, p_tp) = (0.2, 0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for c in Compartment::ALL {
            let mut counts = [0usize; 3];
            for _ in 0..n {
                counts[generate_report(c, p_fa, p_tp, &mut rng) as usize] += 1;
            }
            for r in ReportSymbol::ALL {
                let p = report_likelihood(r, c, p_fa, p_tp);
                let freq = counts[r as usize] as f64 / n as f64;
                let se = (p * (1.0 - p) / n as f64).sqrt();
                assert!((freq - p).abs() <= 3.0 * se, "{c} {r}: {freq} vs {p}");
            }
        }
    }

    #[test]
    fn report_rate_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| generate_report(R, 0.1, 0.9, &mut rng) == RepS));
        let frac = |c, p_fa, p_tp, rng: &mut ChaCha8Rng| {
            (0..100_000).filter(|_| generate_report(c, p_fa, p_tp, rng) == RepI).count() as f64 / 1e5
        };
        assert!((0.89..=0.91).contains(&frac(I, 0.1, 0.9, &mut rng)));
        assert!((0.19..=0.21).contains(&frac(Sfa, 0.2, 0.9, &mut rng)));
    }

    #[test]
    fn observe_step_hides_non_users() {
        let n = 6;
        let pop = PopulationState::new(vec![I, S, Sfa, I, I, S], 3, 1).unwrap();
        let snap = ContactSnapshot::from_pairs(n, 3, 1, &[(0, 1), (0, 4), (2, 5), (1, 2)]);
        let mut log = ObservationLog::new(3);
        let streams = RngStreams::new(3);
        observe_step(&pop, &snap, &EpidemicParams::default(), &streams, Exec::default(), &mut log).unwrap();
        let frame = &log.frames()[0];
        assert_eq!(frame.reports.len(), 3);
        assert_eq!(frame.reports[1], RepS);
        assert_eq!(frame.contacts.neighbors(0), &[1]);
        assert_eq!(frame.contacts.neighbors(2), &[1]);
        assert!(frame.contacts.max_index().unwrap() < 3);

        let mut replay = ObservationLog::new(3);
        observe_step(&pop, &snap, &EpidemicParams::default(), &streams, Exec::Sequential, &mut replay).unwrap();
        assert_eq!(log, replay);
    }

    #[test]
    fn observe_step_edge_cases() {
        let pop = PopulationState::new(vec![S, I], 0, 1).unwrap();
        let snap = ContactSnapshot::from_pairs(2, 0, 1, &[(0, 1)]);
        let mut log = ObservationLog::new(0);
        observe_step(&pop, &snap, &EpidemicParams::default(), &RngStreams::new(0), Exec::default(), &mut log).unwrap();
        assert_eq!(log.len(), 1);
        assert!(log.frames()[0].reports.is_empty());

        let pop = PopulationState::new(vec![S; 4], 4, 1).unwrap();
        let snap = ContactSnapshot::from_pairs(4, 4, 1, &[]);
        let mut log = ObservationLog::new(4);
        observe_step(&pop, &snap, &EpidemicParams::default(), &RngStreams::new(0), Exec::default(), &mut log).unwrap();
        assert!(log.frames()[0].reports.iter().all(|&r| r == RepS));

        let stale = ContactSnapshot::from_pairs(4, 4, 2, &[]);
        let err = observe_step(&pop, &stale, &EpidemicParams::default(), &RngStreams::new(0), Exec::default(), &mut log);
        assert!(matches!(err, Err(BetisError::TimeMismatch { .. })));
    }

    #[test]
    fn log_is_append_only_in_time_order() {
        let mut log = ObservationLog::new(1);
        let frame = |t| ObservationFrame {
            time: t,
            reports: vec![RepS],
            contacts: UserContacts::from_pairs(1, &[]).unwrap(),
        };
        assert!(log.push(frame(2)).is_err());
        log.push(frame(1)).unwrap();
        assert!(log.push(frame(1)).is_err());
        log.push(frame(2)).unwrap();
        assert!(UserContacts::from_pairs(2, &[(0, 2)]).is_err());
    }
}
