//! Prevalence estimates, MAP identification and test allocation computed
//! from posterior beliefs.

use serde::{Deserialize, Serialize};

use crate::error::{BetisError, Result};
use crate::filter::Belief;
use crate::model::Compartment;
use crate::observation::ReportSymbol;

/// Estimated number of individuals (users and non-users) in `target`:
/// `(N / N_u) * sum_i Pr[X_i = target]`.
pub fn prevalence_estimate(beliefs: &[Belief], n_total: usize, target: Compartment) -> f64 {
    if beliefs.is_empty() {
        return 0.0;
    }
    let mass: f64 = beliefs.iter().map(|b| b.get(target)).sum();
    n_total as f64 / beliefs.len() as f64 * mass
}

/// Most probable compartment; ties go to the earliest compartment.
pub fn map_estimate(b: &Belief) -> Compartment {
    let mut best = Compartment::S;
    for c in Compartment::ALL.into_iter().skip(1) {
        if b.get(c) > b.get(best) {
            best = c;
        }
    }
    best
}

/// True and false positive counts for `target`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IdentificationCounts {
    pub tp: usize,
    pub fp: usize,
}

pub fn classification_counts(
    estimates: &[Compartment],
    truths: &[Compartment],
    target: Compartment,
) -> Result<IdentificationCounts> {
    if estimates.len() != truths.len() {
        return Err(BetisError::DimensionMismatch {
            what: "estimates vs truths",
            expected: truths.len(),
            actual: estimates.len(),
        });
    }
    let mut counts = IdentificationCounts::default();
    for (&est, &truth) in estimates.iter().zip(truths) {
        if est == target {
            if truth == target {
                counts.tp += 1;
            } else {
                counts.fp += 1;
            }
        }
    }
    Ok(counts)
}

/// Users eligible for testing: those currently reporting no symptoms.
pub fn eligible_for_testing(reports: &[ReportSymbol]) -> Vec<usize> {
    reports
        .iter()
        .enumerate()
        .filter(|(_, &r)| r == ReportSymbol::RepS)
        .map(|(i, _)| i)
        .collect()
}

/// The `n_test` symptomless users with the largest asymptomatic-infection
/// mass, in descending order (smaller id first on ties).
pub fn select_for_testing(beliefs: &[Belief], current_reports: &[ReportSymbol], n_test: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = eligible_for_testing(current_reports)
        .into_iter()
        .filter(|&i| i < beliefs.len())
        .collect();
    pool.sort_by(|&a, &b| {
        beliefs[b]
            .get(Compartment::Ia)
            .total_cmp(&beliefs[a].get(Compartment::Ia))
            .then(a.cmp(&b))
    });
    pool.truncate(n_test);
    pool
}

/// How a test result is scored against the true state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TestPolicy {
    /// Also count exposed (E) users as positive.
    pub exposed_positive: bool,
}

impl TestPolicy {
    pub fn is_positive(&self, truth: Compartment) -> bool {
        truth == Compartment::Ia || (self.exposed_positive && truth == Compartment::E)
    }
}

/// Number of selected users that test positive (perfect test).
pub fn evaluate_tests(selected: &[usize], truths: &[Compartment], policy: TestPolicy) -> Result<usize> {
    let mut positives = 0;
    for &i in selected {
        let truth = truths.get(i).ok_or_else(|| {
            BetisError::invalid("selected", format!("user id {i} out of range ({} users)", truths.len()))
        })?;
        if policy.is_positive(*truth) {
            positives += 1;
        }
    }
    Ok(positives)
}

/// Expected positives when `n_test` users are drawn uniformly without
/// replacement from the eligible pool.
pub fn random_selection_expected_positives(
    current_reports: &[ReportSymbol],
    truths: &[Compartment],
    n_test: usize,
    policy: TestPolicy,
) -> f64 {
    let pool = eligible_for_testing(current_reports);
    if pool.is_empty() {
        return 0.0;
    }
    let hits = pool.iter().filter(|&&i| policy.is_positive(truths[i])).count();
    let drawn = n_test.min(pool.len());
    drawn as f64 * hits as f64 / pool.len() as f64
}

/// One row of the per-step metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub k: u32,
    #[serde(rename = "true_I")]
    pub true_i: usize,
    #[serde(rename = "est_I")]
    pub est_i: f64,
    #[serde(rename = "true_Ia")]
    pub true_ia: usize,
    #[serde(rename = "est_Ia")]
    pub est_ia: f64,
    #[serde(rename = "tp_I")]
    pub tp_i: usize,
    #[serde(rename = "fp_I")]
    pub fp_i: usize,
    #[serde(rename = "tp_Ia")]
    pub tp_ia: usize,
    #[serde(rename = "fp_Ia")]
    pub fp_ia: usize,
    pub n_tested: usize,
    pub positives: usize,
    #[serde(rename = "true_I_users")]
    pub true_i_users: usize,
    #[serde(rename = "true_Ia_users")]
    pub true_ia_users: usize,
    pub random_positives: f64,
}

/// Everything needed to score one step.
pub struct StepInputs<'a> {
    pub k: u32,
    pub beliefs: &'a [Belief],
    pub reports: &'a [ReportSymbol],
    /// True compartments of all `N` individuals; users come first.
    pub truths: &'a [Compartment],
    pub n_test: usize,
    pub policy: TestPolicy,
}

pub fn step_metrics(inputs: &StepInputs<'_>) -> Result<StepMetrics> {
    let n_total = inputs.truths.len();
    let n_users = inputs.beliefs.len();
    if n_users > n_total || inputs.reports.len() != n_users {
        return Err(BetisError::DimensionMismatch {
            what: "users in beliefs, reports and truths",
            expected: n_users,
            actual: inputs.reports.len(),
        });
    }
    let user_truths = &inputs.truths[..n_users];
    let estimates: Vec<Compartment> = inputs.beliefs.iter().map(map_estimate).collect();
    let ident_i = classification_counts(&estimates, user_truths, Compartment::I)?;
    let ident_ia = classification_counts(&estimates, user_truths, Compartment::Ia)?;
    let selected = select_for_testing(inputs.beliefs, inputs.reports, inputs.n_test);
    let count = |states: &[Compartment], c| states.iter().filter(|&&s| s == c).count();
    Ok(StepMetrics {
        k: inputs.k,
        true_i: count(inputs.truths, Compartment::I),
        est_i: prevalence_estimate(inputs.beliefs, n_total, Compartment::I),
        true_ia: count(inputs.truths, Compartment::Ia),
        est_ia: prevalence_estimate(inputs.beliefs, n_total, Compartment::Ia),
        tp_i: ident_i.tp,
        fp_i: ident_i.fp,
        tp_ia: ident_ia.tp,
        fp_ia: ident_ia.fp,
        n_tested: selected.len(),
        positives: evaluate_tests(&selected, user_truths, inputs.policy)?,
        true_i_users: count(user_truths, Compartment::I),
        true_ia_users: count(user_truths, Compartment::Ia),
        random_positives: random_selection_expected_positives(inputs.reports, user_truths, inputs.n_test, inputs.policy),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Compartment::*;
    use ReportSymbol::*;

    fn b(pairs: &[(Compartment, f64)]) -> Belief {
        Belief::from_pairs(pairs).unwrap()
    }

    #[test]
    fn prevalence_examples() {
        assert_eq!(prevalence_estimate(&[b(&[(S, 1.0)]); 4], 10, I), 0.0);
        let beliefs = vec![b(&[(I, 0.1), (S, 0.9)]); 50];
        assert!((prevalence_estimate(&beliefs, 100, I) - 10.0).abs() < 1e-12);

        let truth = [S, I, I, R, Ia, E, I];
        let beliefs: Vec<Belief> = truth.iter().map(|&c| Belief::point_mass(c)).collect();
        for c in Compartment::ALL {
            let count = truth.iter().filter(|&&t| t == c).count();
            assert_eq!(prevalence_estimate(&beliefs, truth.len(), c), count as f64);
        }
    }

    #[test]
    fn map_examples() {
        assert_eq!(map_estimate(&Belief::point_mass(S)), S);
        assert_eq!(map_estimate(&b(&[(S, 0.4), (I, 0.6)])), I);
        assert_eq!(map_estimate(&b(&[(S, 0.5), (I, 0.5)])), S);
        assert_eq!(map_estimate(&b(&[(E, 0.25), (R, 0.25), (Ia, 0.25), (Sfa, 0.25)])), Sfa);
    }

    proptest! {
        #[test]
        fn map_invariant_under_rescaling(w in proptest::array::uniform6(0.0f64..1.0), scale in 0.01f64..100.0) {
            prop_assume!(w.iter().sum::<f64>() > 1e-3);
            let norm = |v: [f64; 6]| {
                let t: f64 = v.iter().sum();
                Belief::from_probs(v.map(|x| x / t)).unwrap()
            };
            prop_assert_eq!(map_estimate(&norm(w)), map_estimate(&norm(w.map(|x| x * scale))));
        }

        #[test]
        fn counts_are_permutation_equivariant(
            pairs in proptest::collection::vec((0usize..6, 0usize..6), 1..40),
            rot in 0usize..40,
        ) {
            let est: Vec<_> = pairs.iter().map(|p| Compartment::ALL[p.0]).collect();
            let tru: Vec<_> = pairs.iter().map(|p| Compartment::ALL[p.1]).collect();
            let r = rot % est.len();
            let (mut est2, mut tru2) = (est.clone(), tru.clone());
            est2.rotate_left(r);
            tru2.rotate_left(r);
            for target in Compartment::ALL {
                let a = classification_counts(&est, &tru, target).unwrap();
                prop_assert_eq!(a, classification_counts(&est2, &tru2, target).unwrap());
                let fn_ = tru.iter().zip(&est).filter(|(&t, &e)| t == target && e != target).count();
                prop_assert_eq!(a.tp + fn_, tru.iter().filter(|&&t| t == target).count());
            }
        }
    }

    #[test]
    fn classification_examples() {
        let truths = [I, S, Ia, I];
        assert_eq!(classification_counts(&truths, &truths, I).unwrap(), IdentificationCounts { tp: 2, fp: 0 });
        assert_eq!(classification_counts(&[I; 3], &[S; 3], I).unwrap(), IdentificationCounts { tp: 0, fp: 3 });
        assert_eq!(classification_counts(&[I, I, S], &[I, S, I], I).unwrap(), IdentificationCounts { tp: 1, fp: 1 });
        assert!(classification_counts(&[I], &[I, S], I).is_err());
    }

    #[test]
    fn selection_examples() {
        let beliefs = [b(&[(Ia, 0.3), (S, 0.7)]), b(&[(Ia, 0.1), (S, 0.9)]), b(&[(Ia, 0.2), (S, 0.8)])];
        assert!(select_for_testing(&beliefs, &[RepS; 3], 0).is_empty());
        assert_eq!(select_for_testing(&beliefs, &[RepS; 3], 2), vec![0, 2]);
        assert_eq!(select_for_testing(&beliefs, &[RepI, RepS, RepS], 3), vec![2, 1]);
        assert_eq!(select_for_testing(&beliefs, &[RepSfa, RepI, RepS], 5), vec![2]);

        let tied = [b(&[(Ia, 0.2), (S, 0.8)]); 4];
        assert_eq!(select_for_testing(&tied, &[RepS; 4], 2), vec![0, 1]);
    }

    #[test]
    fn selection_is_stable_under_small_perturbations() {
        let masses = [0.31, 0.05, 0.22, 0.4, 0.18];
        let make = |d: f64| -> Vec<Belief> {
            masses
                .iter()
                .enumerate()
                .map(|(i, &m)| {
                    let m = m + if i % 2 == 0 { d } else { -d };
                    b(&[(Ia, m), (S, 1.0 - m)])
                })
                .collect()
        };
        let base = select_for_testing(&make(0.0), &[RepS; 5], 3);
        assert_eq!(base, vec![3, 0, 2]);
        assert_eq!(select_for_testing(&make(0.01), &[RepS; 5], 3), base);
    }

    #[test]
    fn test_evaluation() {
        let truths = [Ia, E, S, Ia];
        assert_eq!(evaluate_tests(&[], &truths, TestPolicy::default()).unwrap(), 0);
        assert_eq!(evaluate_tests(&[0, 3], &truths, TestPolicy::default()).unwrap(), 2);
        assert_eq!(evaluate_tests(&[0, 1, 2], &truths, TestPolicy::default()).unwrap(), 1);
        assert_eq!(evaluate_tests(&[0, 1, 2], &truths, TestPolicy { exposed_positive: true }).unwrap(), 2);
        assert!(evaluate_tests(&[9], &truths, TestPolicy::default()).is_err());
        let expected = random_selection_expected_positives(&[RepS, RepS, RepI, RepS], &truths, 2, TestPolicy::default());
        assert!((expected - 2.0 * 2.0 / 3.0).abs() < 1e-15);
    }
}
