//! Score-function policy over a finite candidate set.
//!
//! Each candidate is described by a feature row `psi(c)`; the policy is a
//! softmax over `theta . psi(c) + prior(c)`. One training step samples a
//! candidate, observes its loss and moves `theta` along
//! `-(loss - baseline) * (psi(c) - E[psi])`, where the baseline is the
//! running mean of observed losses.

use rand::Rng;

use crate::error::{Error, Result};

/// Feature rows plus an additive log-prior per candidate.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CandidateFeatures {
    dim: usize,
    rows: Vec<f64>,
    prior: Vec<f64>,
}

impl CandidateFeatures {
    pub fn new(dim: usize) -> Self {
        CandidateFeatures {
            dim,
            rows: Vec::new(),
            prior: Vec::new(),
        }
    }

    pub fn push(&mut self, row: &[f64], prior: f64) {
        assert_eq!(row.len(), self.dim, "feature row width");
        self.rows.extend_from_slice(row);
        self.prior.push(prior);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.prior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prior.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn prior(&self, i: usize) -> f64 {
        self.prior[i]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InnerPolicy {
    weights: Vec<f64>,
    baseline: f64,
    observed: usize,
}

impl InnerPolicy {
    pub fn new(weights: Vec<f64>) -> Self {
        InnerPolicy {
            weights,
            baseline: 0.0,
            observed: 0,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(vec![0.0; dim])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn baseline(&self) -> Option<f64> {
        (self.observed > 0).then_some(self.baseline)
    }

    /// Restarts the running mean from `value` (counted as one observation),
    /// or from nothing.
    pub fn reset_baseline(&mut self, value: Option<f64>) {
        self.baseline = value.unwrap_or(0.0);
        self.observed = value.is_some() as usize;
    }

    fn logits(&self, c: &CandidateFeatures) -> Vec<f64> {
        (0..c.len())
            .map(|i| c.row(i).iter().zip(&self.weights).map(|(x, w)| x * w).sum::<f64>() + c.prior(i))
            .collect()
    }

    pub fn probabilities(&self, c: &CandidateFeatures) -> Vec<f64> {
        crate::model::softmax(&self.logits(c))
    }

    /// Highest-probability candidate; ties go to the lowest index.
    pub fn best(&self, c: &CandidateFeatures) -> Option<usize> {
        if c.is_empty() {
            return None;
        }
        Some(crate::model::argmax(&self.logits(c)))
    }

    /// Samples a candidate, evaluates it with `loss` and applies one
    /// update of size `learning_rate`. Returns the sampled index and loss.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        c: &CandidateFeatures,
        learning_rate: f64,
        rng: &mut R,
        mut loss: impl FnMut(usize) -> Result<f64>,
    ) -> Result<(usize, f64)> {
        if c.is_empty() {
            return Err(Error::NoCandidates);
        }
        if c.dim() != self.weights.len() {
            return Err(Error::validation(format!(
                "policy has {} weights but candidates have {} features",
                self.weights.len(),
                c.dim()
            )));
        }
        let probs = self.probabilities(c);
        let mut u: f64 = rng.gen();
        let mut pick = probs.len() - 1;
        for (i, p) in probs.iter().enumerate() {
            if u < *p {
                pick = i;
                break;
            }
            u -= p;
        }
        let value = loss(pick)?;
        if !value.is_finite() {
            return Err(Error::Evaluation(format!(
                "non-finite loss {value} for candidate {pick}"
            )));
        }
        let advantage = if self.observed == 0 { 0.0 } else { value - self.baseline };
        if learning_rate != 0.0 && advantage != 0.0 {
            let mut expected = vec![0.0; c.dim()];
            for (i, p) in probs.iter().enumerate() {
                for (e, x) in expected.iter_mut().zip(c.row(i)) {
                    *e += p * x;
                }
            }
            for ((w, x), e) in self.weights.iter_mut().zip(c.row(pick)).zip(&expected) {
                *w -= learning_rate * advantage * (x - e);
            }
        }
        self.observed += 1;
        self.baseline += (value - self.baseline) / self.observed as f64;
        Ok((pick, value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity(n: usize) -> CandidateFeatures {
        let mut c = CandidateFeatures::new(n);
        for i in 0..n {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            c.push(&row, 0.0);
        }
        c
    }

    #[test]
    fn zero_learning_rate_leaves_weights() {
        let c = identity(3);
        let mut p = InnerPolicy::zeros(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            p.step(&c, 0.0, &mut rng, |i| Ok(i as f64)).unwrap();
        }
        assert_eq!(p.weights(), &[0.0; 3]);
    }

    #[test]
    fn single_candidate_is_certain() {
        let c = identity(1);
        let mut p = InnerPolicy::zeros(1);
        assert_eq!(p.probabilities(&c), vec![1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(p.step(&c, 1.0, &mut rng, |_| Ok(3.0)).unwrap(), (0, 3.0));
        assert_eq!(p.best(&c), Some(0));
    }

    #[test]
    fn prior_shifts_probabilities() {
        let mut c = CandidateFeatures::new(1);
        c.push(&[0.0], 0.0);
        c.push(&[0.0], 2f64.ln());
        let p = InnerPolicy::zeros(1).probabilities(&c);
        assert!((p[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn baseline_is_running_mean() {
        let c = identity(2);
        let mut p = InnerPolicy::zeros(2);
        p.reset_baseline(Some(4.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        p.step(&c, 0.1, &mut rng, |_| Ok(2.0)).unwrap();
        assert_eq!(p.baseline(), Some(3.0));
        p.reset_baseline(None);
        assert_eq!(p.baseline(), None);
    }

    #[test]
    fn empty_and_mismatched_sets_error() {
        let mut p = InnerPolicy::zeros(2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(matches!(
            p.step(&CandidateFeatures::new(2), 1.0, &mut rng, |_| Ok(0.0)),
            Err(Error::NoCandidates)
        ));
        assert!(p.step(&identity(3), 1.0, &mut rng, |_| Ok(0.0)).is_err());
    }
}
