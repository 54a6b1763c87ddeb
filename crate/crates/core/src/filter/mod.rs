//! Recursive Bayesian filter over the per-user compartment marginals.
//!
//! The filter consumes an [`ObservationLog`] only. It never sees true
//! states, non-user data or full neighbourhoods; the module does not depend
//! on `PopulationState` at all.
//!
//! Per step `k`:
//! 1. measurement update: condition each user's predicted belief on its
//!    report (Bayes' rule);
//! 2. refresh the mean-field prevalence `p_inf[k]` and the non-user hazard
//!    `eps[k]` from the posterior beliefs;
//! 3. time update: for each user, the number of infectious user-neighbours is
//!    Poisson-binomial in their posterior infectious masses; mix the
//!    transition rows over that count with `eps[k]` as extra hazard.
//!
//! All users read the frozen beliefs of step `k`, so the order in which users
//! are processed (or the number of threads) does not change the result.

mod kernels;

pub use kernels::{nonuser_hazard, poisson_binomial, NonUserContactModel};

use serde::{Deserialize, Serialize};

use crate::error::{BetisError, Result};
use crate::exec::Exec;
use crate::model::{transition_distribution, Compartment, CompartmentDist, EpidemicParams};
use crate::observation::{report_likelihood, ObservationFrame, ObservationLog, ReportSymbol, UserContacts};

/// Entries below this are flushed to zero before normalizing.
const FLUSH_BELOW: f64 = 1e-300;
/// Largest tolerated negative rounding residue.
const NEGATIVE_TOLERANCE: f64 = -1e-15;

/// Marginal distribution of one user's compartment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Belief(CompartmentDist);

impl Belief {
    pub fn point_mass(c: Compartment) -> Self {
        let mut p = [0.0; Compartment::COUNT];
        p[c.index()] = 1.0;
        Belief(p)
    }

    pub fn uniform() -> Self {
        Belief([1.0 / Compartment::COUNT as f64; Compartment::COUNT])
    }

    /// Belief from `(compartment, mass)` pairs; unspecified compartments get
    /// zero mass. The masses must already sum to one.
    pub fn from_pairs(pairs: &[(Compartment, f64)]) -> Result<Self> {
        let mut p = [0.0; Compartment::COUNT];
        for &(c, m) in pairs {
            p[c.index()] += m;
        }
        Self::from_probs(p)
    }

    pub fn from_probs(p: CompartmentDist) -> Result<Self> {
        if let Some(c) = Compartment::ALL.into_iter().find(|c| !(p[c.index()] >= 0.0 && p[c.index()].is_finite())) {
            return Err(BetisError::invalid("belief", format!("mass on {c} is {}", p[c.index()])));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(BetisError::invalid("belief", format!("masses sum to {total}, not 1")));
        }
        Ok(Belief(p))
    }

    /// Normalizes unnormalized non-negative weights. `None` if all weights
    /// vanish.
    fn normalized(mut w: CompartmentDist) -> Option<Self> {
        for x in w.iter_mut() {
            debug_assert!(*x >= NEGATIVE_TOLERANCE, "negative belief mass {x}");
            if *x < FLUSH_BELOW {
                *x = 0.0;
            }
        }
        let total: f64 = w.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            return None;
        }
        w.iter_mut().for_each(|x| *x /= total);
        Some(Belief(w))
    }

    #[inline]
    pub fn get(&self, c: Compartment) -> f64 {
        self.0[c.index()]
    }

    pub fn probs(&self) -> &CompartmentDist {
        &self.0
    }

    /// Mass on I and I_a.
    #[inline]
    pub fn infectious_mass(&self) -> f64 {
        self.get(Compartment::I) + self.get(Compartment::Ia)
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Distribution of a user's compartment at the first step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prior(Belief);

impl Prior {
    pub fn new(belief: Belief) -> Self {
        Prior(belief)
    }

    pub fn from_probs(p: CompartmentDist) -> Result<Self> {
        Belief::from_probs(p).map(Prior)
    }

    /// Initial seeding used by the reference scenarios: I with probability
    /// 0.01, I_a with 0.01 * alpha, S otherwise.
    pub fn seeded(alpha: f64) -> Self {
        let mut p = [0.0; Compartment::COUNT];
        p[Compartment::S.index()] = 0.99 - 0.01 * alpha;
        p[Compartment::I.index()] = 0.01;
        p[Compartment::Ia.index()] = 0.01 * alpha;
        Prior(Belief(p))
    }

    pub fn belief(&self) -> &Belief {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub beliefs: Vec<Belief>,
    pub time: u32,
    /// Non-user infection hazard derived from the current beliefs.
    pub eps: f64,
    /// Mean-field prevalence of the current beliefs.
    pub p_inf: f64,
}

impl FilterState {
    fn refresh(&mut self, f: &NonUserContactModel, beta: f64) {
        self.p_inf = mean_field_prevalence(&self.beliefs);
        self.eps = nonuser_hazard(self.p_inf, f, beta);
    }
}

pub fn init_filter(n_users: usize, prior: &Prior, f: &NonUserContactModel, beta: f64) -> Result<FilterState> {
    if n_users == 0 {
        return Err(BetisError::EmptyInput("users to filter"));
    }
    let prior = Prior::from_probs(*prior.belief().probs())?;
    let mut state = FilterState {
        beliefs: vec![*prior.belief(); n_users],
        time: 1,
        eps: 0.0,
        p_inf: 0.0,
    };
    state.refresh(f, beta);
    Ok(state)
}

/// Bayes' rule for one report. Fails with
/// [`BetisError::DegenerateEvidence`] when the report is impossible under
/// `b`.
pub fn measurement_update(b: &Belief, r: ReportSymbol, p_fa: f64, p_tp: f64) -> Result<Belief> {
    let mut w = [0.0; Compartment::COUNT];
    for c in Compartment::ALL {
        w[c.index()] = report_likelihood(r, c, p_fa, p_tp) * b.get(c);
    }
    Belief::normalized(w).ok_or(BetisError::DegenerateEvidence { report: r.as_str() })
}

/// Average infectious mass over users, summed in index order.
pub fn mean_field_prevalence(beliefs: &[Belief]) -> f64 {
    if beliefs.is_empty() {
        return 0.0;
    }
    beliefs.iter().map(Belief::infectious_mass).sum::<f64>() / beliefs.len() as f64
}

/// Predicted belief of one user given the posterior beliefs of all users.
fn predict_user(belief: &Belief, neighbors: &[u32], frozen: &[Belief], eps: f64, params: &EpidemicParams) -> Belief {
    let exposed_mass = belief.get(Compartment::S) + belief.get(Compartment::Sfa);
    let pmf = if exposed_mass > 0.0 {
        let probs: Vec<f64> = neighbors.iter().map(|&j| frozen[j as usize].infectious_mass()).collect();
        poisson_binomial(&probs)
    } else {
        vec![1.0]
    };
    let mut out = [0.0; Compartment::COUNT];
    for c in Compartment::ALL {
        let bc = belief.get(c);
        if bc == 0.0 {
            continue;
        }
        let counts: &[f64] = if matches!(c, Compartment::S | Compartment::Sfa) { &pmf } else { &[1.0] };
        for (m, &pm) in counts.iter().enumerate() {
            if pm == 0.0 {
                continue;
            }
            let row = transition_distribution(c, m, eps, params);
            for (o, r) in out.iter_mut().zip(row) {
                *o += bc * pm * r;
            }
        }
    }
    // A stochastic mixture of a valid belief cannot vanish.
    Belief::normalized(out).unwrap_or(*belief)
}

/// Propagates posterior beliefs at `k` to predicted beliefs at `k + 1`,
/// using `fs.eps` as the non-user hazard. `eps` and `p_inf` of the returned
/// state describe the predicted beliefs.
pub fn time_update(
    fs: &FilterState,
    contacts: &UserContacts,
    params: &EpidemicParams,
    f: &NonUserContactModel,
    exec: Exec,
) -> Result<FilterState> {
    let n = fs.beliefs.len();
    if contacts.n_users() != n {
        return Err(BetisError::DimensionMismatch {
            what: "user contact rows vs beliefs",
            expected: n,
            actual: contacts.n_users(),
        });
    }
    if let Some(j) = contacts.max_index() {
        if j as usize >= n {
            return Err(BetisError::invalid("user_contacts", format!("index {j} is not a user")));
        }
    }
    let frozen = &fs.beliefs;
    let beliefs = exec.map_slice(frozen, |i, b| predict_user(b, contacts.neighbors(i), frozen, fs.eps, params));
    let mut next = FilterState {
        beliefs,
        time: fs.time + 1,
        eps: 0.0,
        p_inf: 0.0,
    };
    next.refresh(f, params.beta);
    Ok(next)
}

/// Stateful driver alternating measurement and time updates frame by frame.
#[derive(Debug, Clone)]
pub struct BetisFilter {
    params: EpidemicParams,
    f: NonUserContactModel,
    exec: Exec,
    state: FilterState,
    degenerate: u64,
}

impl BetisFilter {
    pub fn new(n_users: usize, prior: &Prior, params: EpidemicParams, f: NonUserContactModel, exec: Exec) -> Result<Self> {
        params.validate()?;
        let state = init_filter(n_users, prior, &f, params.beta)?;
        Ok(BetisFilter {
            params,
            f,
            exec,
            state,
            degenerate: 0,
        })
    }

    pub fn state(&self) -> &FilterState {
        &self.state
    }

    /// Number of (user, step) pairs whose report had zero evidence; those
    /// beliefs were kept unchanged.
    pub fn degenerate_evidence(&self) -> u64 {
        self.degenerate
    }

    /// Conditions the predicted beliefs on the frame's reports. Returns the
    /// posterior state `Pr[X_i[k] | M[k]]`.
    pub fn measure(&mut self, frame: &ObservationFrame) -> Result<&FilterState> {
        if frame.time != self.state.time {
            return Err(BetisError::TimeMismatch {
                what: "observation frame",
                expected: self.state.time,
                actual: frame.time,
            });
        }
        if frame.reports.len() != self.state.beliefs.len() {
            return Err(BetisError::DimensionMismatch {
                what: "reports vs beliefs",
                expected: self.state.beliefs.len(),
                actual: frame.reports.len(),
            });
        }
        let (p_fa, p_tp) = (self.params.p_fa, self.params.p_tp);
        let updated = self.exec.map_slice(&self.state.beliefs, |i, b| {
            measurement_update(b, frame.reports[i], p_fa, p_tp).ok()
        });
        for (slot, post) in self.state.beliefs.iter_mut().zip(updated) {
            match post {
                Some(b) => *slot = b,
                None => self.degenerate += 1,
            }
        }
        self.state.refresh(&self.f, self.params.beta);
        Ok(&self.state)
    }

    /// Advances the posterior at `k` to the prediction for `k + 1`.
    pub fn predict(&mut self, frame: &ObservationFrame) -> Result<()> {
        self.state = time_update(&self.state, &frame.contacts, &self.params, &self.f, self.exec)?;
        Ok(())
    }
}

/// Runs the filter over a whole log and hands each posterior state to
/// `visit`. Returns the number of degenerate-evidence events.
pub fn run_filter_with<F>(
    log: &ObservationLog,
    params: &EpidemicParams,
    prior: &Prior,
    f: &NonUserContactModel,
    exec: Exec,
    mut visit: F,
) -> Result<u64>
where
    F: FnMut(&FilterState) -> Result<()>,
{
    let mut filter = BetisFilter::new(log.n_users(), prior, *params, f.clone(), exec)?;
    for frame in log.frames() {
        visit(filter.measure(frame)?)?;
        filter.predict(frame)?;
    }
    if filter.degenerate_evidence() > 0 {
        log::warn!(
            "{} reports had zero evidence; the affected beliefs were left unchanged",
            filter.degenerate_evidence()
        );
    }
    Ok(filter.degenerate_evidence())
}

/// Posterior states for every frame of the log.
pub fn run_filter(
    log: &ObservationLog,
    params: &EpidemicParams,
    prior: &Prior,
    f: &NonUserContactModel,
    exec: Exec,
) -> Result<Vec<FilterState>> {
    let mut out = Vec::with_capacity(log.len());
    run_filter_with(log, params, prior, f, exec, |s| {
        out.push(s.clone());
        Ok(())
    })?;
    Ok(out)
}
