//! Ground-truth viral-state dynamics over the six compartments.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BetisError, Result};
use crate::exec::Exec;
use crate::mobility::ContactSnapshot;
use crate::rng::{Purpose, RngStreams};

/// Health state of one individual. The declaration order is the fixed total
/// order used for iteration and tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Compartment {
    S,
    #[serde(rename = "S_fa")]
    Sfa,
    E,
    I,
    #[serde(rename = "I_a")]
    Ia,
    R,
}

impl Compartment {
    pub const ALL: [Compartment; 6] = [
        Compartment::S,
        Compartment::Sfa,
        Compartment::E,
        Compartment::I,
        Compartment::Ia,
        Compartment::R,
    ];
    pub const COUNT: usize = 6;

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Compartment> {
        Self::ALL.get(i).copied()
    }

    #[inline]
    pub fn is_infectious(self) -> bool {
        matches!(self, Compartment::I | Compartment::Ia)
    }

    /// Exposed or infectious: the epidemic is alive while anyone is here.
    #[inline]
    pub fn is_active_infection(self) -> bool {
        matches!(self, Compartment::E | Compartment::I | Compartment::Ia)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Compartment::S => "S",
            Compartment::Sfa => "S_fa",
            Compartment::E => "E",
            Compartment::I => "I",
            Compartment::Ia => "I_a",
            Compartment::R => "R",
        }
    }
}

impl fmt::Display for Compartment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Compartment {
    type Err = BetisError;

    fn from_str(s: &str) -> Result<Self> {
        Compartment::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| BetisError::invalid("compartment", format!("unknown compartment `{s}`")))
    }
}

/// A probability vector over [`Compartment`], indexed by `Compartment::index`.
pub type CompartmentDist = [f64; Compartment::COUNT];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpidemicParams {
    /// Per-contact, per-step infection probability.
    pub beta: f64,
    /// Removal probability of I and I_a; also the S_fa curing probability.
    pub delta: f64,
    /// Exit probability from E.
    pub gamma: f64,
    /// Probability that an exposed individual becomes asymptomatic.
    pub alpha: f64,
    /// Probability of contracting a look-alike disease (S -> S_fa).
    pub vartheta: f64,
    pub p_fa: f64,
    pub p_tp: f64,
    /// Contact radius in unit-square coordinates.
    pub d_inf: f64,
    pub p_move: f64,
}

impl Default for EpidemicParams {
    fn default() -> Self {
        EpidemicParams {
            beta: 0.5,
            delta: 0.25,
            gamma: 0.5,
            alpha: 0.1,
            vartheta: 0.05,
            p_fa: 0.1,
            p_tp: 0.9,
            d_inf: 0.007,
            p_move: 0.1,
        }
    }
}

impl EpidemicParams {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("beta", self.beta),
            ("delta", self.delta),
            ("gamma", self.gamma),
            ("alpha", self.alpha),
            ("vartheta", self.vartheta),
            ("p_fa", self.p_fa),
            ("p_tp", self.p_tp),
            ("p_move", self.p_move),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(BetisError::invalid(name, format!("{p} is not a probability in [0, 1]")));
            }
        }
        if !(self.d_inf > 0.0 && self.d_inf.is_finite()) {
            return Err(BetisError::invalid("d_inf", format!("{} must be a positive length", self.d_inf)));
        }
        Ok(())
    }
}

/// True compartments of all `N` individuals at time `time`. Individuals
/// `0..n_users` are app users.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    pub states: Vec<Compartment>,
    pub n_users: usize,
    pub time: u32,
}

impl PopulationState {
    pub fn new(states: Vec<Compartment>, n_users: usize, time: u32) -> Result<Self> {
        if n_users > states.len() {
            return Err(BetisError::invalid(
                "n_users",
                format!("{n_users} users exceed population size {}", states.len()),
            ));
        }
        if time < 1 {
            return Err(BetisError::invalid("time", "time index starts at 1"));
        }
        Ok(PopulationState { states, n_users, time })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn user_fraction(&self) -> f64 {
        self.n_users as f64 / self.states.len() as f64
    }

    pub fn user_states(&self) -> &[Compartment] {
        &self.states[..self.n_users]
    }

    pub fn count(&self, c: Compartment) -> usize {
        self.states.iter().filter(|&&s| s == c).count()
    }

    pub fn is_extinct(&self) -> bool {
        !self.states.iter().any(|s| s.is_active_infection())
    }
}

/// Probability that a susceptible with `m` infectious neighbours is infected
/// within one step: `1 - (1 - beta)^m`.
#[inline]
pub fn infection_probability(m: usize, beta: f64) -> f64 {
    1.0 - survival(m, beta)
}

#[inline]
fn survival(m: usize, beta: f64) -> f64 {
    (1.0 - beta).powi(m as i32)
}

/// One-step transition law from compartment `c`.
///
/// `m` counts infectious neighbours and `eps` is an extra, independent
/// infection hazard (zero for the ground-truth simulator). Infection is
/// resolved first; the look-alike disease branch (S) or its curing (S_fa)
/// applies to those who escaped infection.
pub fn transition_distribution(c: Compartment, m: usize, eps: f64, params: &EpidemicParams) -> CompartmentDist {
    use Compartment::*;
    let mut row = [0.0; Compartment::COUNT];
    match c {
        S | Sfa => {
            let escape = survival(m, params.beta) * (1.0 - eps);
            let q = 1.0 - escape;
            let leave = if c == S { params.vartheta } else { params.delta };
            let (stay, other) = if c == S { (S, Sfa) } else { (Sfa, S) };
            row[E.index()] = q;
            row[other.index()] = escape * leave;
            row[stay.index()] = escape * (1.0 - leave);
        }
        E => {
            row[Ia.index()] = params.gamma * params.alpha;
            row[I.index()] = params.gamma * (1.0 - params.alpha);
            row[E.index()] = 1.0 - params.gamma;
        }
        I | Ia => {
            row[R.index()] = params.delta;
            row[c.index()] = 1.0 - params.delta;
        }
        R => row[R.index()] = 1.0,
    }
    row
}

/// Samples the next compartment with the sequential branch sampler (one
/// Bernoulli per branch, infection first). This is deliberately a different
/// route from [`transition_distribution`] so the two can be cross-checked.
pub fn sample_transition<R: Rng + ?Sized>(c: Compartment, m: usize, params: &EpidemicParams, rng: &mut R) -> Compartment {
    use Compartment::*;
    match c {
        S | Sfa => {
            let infected = (0..m).any(|_| rng.random::<f64>() < params.beta);
            if infected {
                E
            } else if c == S {
                if rng.random::<f64>() < params.vartheta { Sfa } else { S }
            } else if rng.random::<f64>() < params.delta {
                S
            } else {
                Sfa
            }
        }
        E => {
            if rng.random::<f64>() < params.gamma {
                if rng.random::<f64>() < params.alpha { Ia } else { I }
            } else {
                E
            }
        }
        I | Ia => {
            if rng.random::<f64>() < params.delta { R } else { c }
        }
        R => R,
    }
}

/// Advances the whole population by one synchronous step.
pub fn step_population(
    pop: &PopulationState,
    contacts: &ContactSnapshot,
    params: &EpidemicParams,
    streams: &RngStreams,
    exec: Exec,
) -> Result<PopulationState> {
    if contacts.len() != pop.len() {
        return Err(BetisError::DimensionMismatch {
            what: "contact snapshot vs population",
            expected: pop.len(),
            actual: contacts.len(),
        });
    }
    if contacts.time() != pop.time {
        return Err(BetisError::TimeMismatch {
            what: "contact snapshot",
            expected: pop.time,
            actual: contacts.time(),
        });
    }
    let k = pop.time;
    let states = exec.map_slice(&pop.states, |i, &c| {
        let m = contacts
            .neighbors(i)
            .iter()
            .filter(|&&j| pop.states[j as usize].is_infectious())
            .count();
        let mut rng = streams.stream(Purpose::Transition, k, i as u32);
        sample_transition(c, m, params, &mut rng)
    });
    Ok(PopulationState {
        states,
        n_users: pop.n_users,
        time: k + 1,
    })
}

/// Samples `episodes` I-sojourn times (steps spent in I before removal) and
/// returns their mean, which should approach `1 / delta`.
pub fn sojourn_sampler_check<R: Rng + ?Sized>(delta: f64, episodes: usize, rng: &mut R) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(BetisError::invalid("delta", format!("{delta} must lie in (0, 1] for a finite sojourn")));
    }
    if episodes == 0 {
        return Err(BetisError::EmptyInput("sojourn episodes"));
    }
    let params = EpidemicParams {
        delta,
        ..EpidemicParams::default()
    };
    let mut total: u64 = 0;
    for _ in 0..episodes {
        let mut state = Compartment::I;
        while state == Compartment::I {
            state = sample_transition(state, 0, &params, rng);
            total += 1;
        }
    }
    Ok(total as f64 / episodes as f64)
}
