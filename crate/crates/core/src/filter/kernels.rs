//! Counting kernels of the time update.

use serde::{Deserialize, Serialize};

use crate::error::{BetisError, Result};

/// Exact distribution of a sum of independent Bernoulli(`p_j`) variables, by
/// sequential convolution. Entry `m` of the result is `Pr[sum = m]`.
pub fn poisson_binomial(success_probs: &[f64]) -> Vec<f64> {
    let mut pmf = Vec::with_capacity(success_probs.len() + 1);
    pmf.push(1.0);
    for &p in success_probs {
        let q = 1.0 - p;
        pmf.push(0.0);
        for m in (1..pmf.len()).rev() {
            pmf[m] = pmf[m] * q + pmf[m - 1] * p;
        }
        pmf[0] *= q;
    }
    pmf
}

/// Distribution `f(m)` of the number of contacts a user has with non-users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonUserContactModel {
    pmf: Vec<f64>,
}

impl NonUserContactModel {
    pub fn new(pmf: Vec<f64>) -> Result<Self> {
        if pmf.is_empty() {
            return Err(BetisError::EmptyInput("non-user contact pmf"));
        }
        if let Some((m, &p)) = pmf.iter().enumerate().find(|(_, &p)| !(p >= 0.0 && p.is_finite())) {
            return Err(BetisError::invalid("nonuser_pmf", format!("f({m}) = {p} is not a probability")));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(BetisError::invalid("nonuser_pmf", format!("entries sum to {total}, not 1")));
        }
        Ok(NonUserContactModel { pmf })
    }

    /// `f(0) = 1`: no user ever meets a non-user.
    pub fn no_contacts() -> Self {
        NonUserContactModel { pmf: vec![1.0] }
    }

    /// Poisson(`lambda`) truncated at its 1 - 1e-9 quantile and renormalized.
    pub fn poisson(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(BetisError::invalid("lambda", format!("{lambda} must be a finite rate >= 0")));
        }
        let mut pmf = Vec::new();
        let mut term = (-lambda).exp();
        let mut cdf = 0.0;
        let mut m = 0u32;
        loop {
            pmf.push(term);
            cdf += term;
            if cdf >= 1.0 - 1e-9 || m > 10_000 {
                break;
            }
            m += 1;
            term *= lambda / f64::from(m);
        }
        let total: f64 = pmf.iter().sum();
        pmf.iter_mut().for_each(|p| *p /= total);
        Ok(NonUserContactModel { pmf })
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(m, p)| m as f64 * p).sum()
    }
}

/// Probability that a user is infected by some non-user within one step.
///
/// For `m` non-user contacts, the number of infectious ones is
/// Binomial(`m`, `p_inf`); each infects independently with probability
/// `beta`. The result averages that risk over `f(m)`.
pub fn nonuser_hazard(p_inf: f64, f: &NonUserContactModel, beta: f64) -> f64 {
    let mut eps = 0.0;
    for (m, &fm) in f.pmf().iter().enumerate() {
        if fm == 0.0 || m == 0 {
            continue;
        }
        let mut binom = 1.0;
        let mut eps_m = 0.0;
        for l in 0..=m {
            let p_l = binom * p_inf.powi(l as i32) * (1.0 - p_inf).powi((m - l) as i32);
            eps_m += p_l * (1.0 - (1.0 - beta).powi(l as i32));
            binom = binom * (m - l) as f64 / (l + 1) as f64;
        }
        eps += fm * eps_m;
    }
    eps.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn enumerate(ps: &[f64]) -> Vec<f64> {
        let mut pmf = vec![0.0; ps.len() + 1];
        for mask in 0u32..(1 << ps.len()) {
            let mut pr = 1.0;
            for (j, &p) in ps.iter().enumerate() {
                pr *= if mask >> j & 1 == 1 { p } else { 1.0 - p };
            }
            pmf[mask.count_ones() as usize] += pr;
        }
        pmf
    }

    fn closed_form(p_inf: f64, f: &NonUserContactModel, beta: f64) -> f64 {
        1.0 - f
            .pmf()
            .iter()
            .enumerate()
            .map(|(m, fm)| fm * (1.0 - beta * p_inf).powi(m as i32))
            .sum::<f64>()
    }

    fn random_model(rng: &mut impl Rng) -> NonUserContactModel {
        let len = rng.random_range(1..12);
        let raw: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let mut pmf: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let drift: f64 = 1.0 - pmf.iter().sum::<f64>();
        pmf[0] += drift;
        NonUserContactModel::new(pmf).unwrap()
    }

    #[test]
    fn poisson_binomial_examples() {
        assert_eq!(poisson_binomial(&[]), vec![1.0]);
        assert_eq!(poisson_binomial(&[0.5, 0.5]), vec![0.25, 0.5, 0.25]);
        let pmf = poisson_binomial(&[0.1, 0.2, 0.3]);
        for (a, b) in pmf.iter().zip(enumerate(&[0.1, 0.2, 0.3])) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn poisson_binomial_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..100 {
            let m = rng.random_range(0..=12);
            let ps: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
            let pmf = poisson_binomial(&ps);
            assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (a, b) in pmf.iter().zip(enumerate(&ps)) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn hazard_examples() {
        let f = NonUserContactModel::new(vec![0.2, 0.5, 0.3]).unwrap();
        assert_eq!(nonuser_hazard(0.0, &f, 0.5), 0.0);
        assert_eq!(nonuser_hazard(0.7, &NonUserContactModel::no_contacts(), 0.5), 0.0);
        let single = NonUserContactModel::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(nonuser_hazard(1.0, &single, 0.5), 0.5);
    }

    #[test]
    fn hazard_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..1000 {
            let f = random_model(&mut rng);
            let (p, beta) = (rng.random::<f64>(), rng.random::<f64>());
            assert!((nonuser_hazard(p, &f, beta) - closed_form(p, &f, beta)).abs() <= 1e-12);
        }
    }

    #[test]
    fn hazard_is_monotone_on_grid() {
        let f = NonUserContactModel::poisson(1.3).unwrap();
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        for &beta in &grid {
            for w in grid.windows(2) {
                assert!(nonuser_hazard(w[1], &f, beta) >= nonuser_hazard(w[0], &f, beta));
            }
        }
        for &p in &grid {
            for w in grid.windows(2) {
                assert!(nonuser_hazard(p, &f, w[1]) >= nonuser_hazard(p, &f, w[0]));
            }
        }
    }

    #[test]
    fn poisson_model_is_normalized_and_truncated() {
        let f = NonUserContactModel::poisson(0.616).unwrap();
        assert!((f.pmf().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((f.mean() - 0.616).abs() < 1e-6);
        assert!(f.pmf().len() < 20);
        assert_eq!(NonUserContactModel::poisson(0.0).unwrap().pmf(), &[1.0]);
        assert!(NonUserContactModel::poisson(-1.0).is_err());
        assert!(NonUserContactModel::new(vec![0.5, 0.4]).is_err());
        assert!(NonUserContactModel::new(vec![]).is_err());
    }

    proptest! {
        #[test]
        fn poisson_binomial_is_a_pmf(ps in proptest::collection::vec(0.0f64..=1.0, 0..40)) {
            let pmf = poisson_binomial(&ps);
            prop_assert_eq!(pmf.len(), ps.len() + 1);
            prop_assert!(pmf.iter().all(|&p| p >= 0.0));
            prop_assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let mean: f64 = pmf.iter().enumerate().map(|(m, p)| m as f64 * p).sum();
            prop_assert!((mean - ps.iter().sum::<f64>()).abs() < 1e-9);
        }
    }
}
