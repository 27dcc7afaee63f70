//! Probability-product ensembling and argmax decoding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{HsCategory, Task};
use crate::model::{ProbTriple, PROB_FLOOR};

/// Hard labels decoded from a (possibly combined) probability triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionTriple {
    pub offd: bool,
    pub hsd: bool,
    pub hsc: HsCategory,
    pub source_probs: ProbTriple,
}

impl PredictionTriple {
    pub fn class_of(&self, task: Task) -> usize {
        match task {
            Task::Offd => self.offd as usize,
            Task::Hsd => self.hsd as usize,
            Task::Hsc => self.hsc.index(),
        }
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate().skip(1) {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

/// Element-wise product of each head's distributions across models,
/// renormalized. Accumulated as a sum of clamped logs.
pub fn ensemble_combine(triples: &[ProbTriple]) -> Result<ProbTriple> {
    let first = triples.first().ok_or(Error::Empty("ensemble needs at least one model"))?;
    let mut combined = first.clone();
    for task in Task::ALL {
        let width = first.head(task).len();
        let mut log_sum = vec![0.0; width];
        for (m, t) in triples.iter().enumerate() {
            let p = t.head(task);
            if p.len() != width {
                return Err(Error::Shape {
                    context: format!("model {m} {task} probabilities"),
                    expected: width,
                    actual: p.len(),
                });
            }
            for (acc, v) in log_sum.iter_mut().zip(p) {
                *acc += v.max(PROB_FLOOR).ln();
            }
        }
        let max = log_sum.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = log_sum.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        *combined.head_mut(task) = exps.into_iter().map(|e| e / z).collect();
    }
    Ok(combined)
}

/// Per-head argmax with low-index tie-breaking.
pub fn predict(triple: &ProbTriple) -> PredictionTriple {
    PredictionTriple {
        offd: argmax(&triple.offd) == 1,
        hsd: argmax(&triple.hsd) == 1,
        hsc: HsCategory::from_index(argmax(&triple.hsc)).unwrap_or(HsCategory::None),
        source_probs: triple.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triple(offd: [f64; 2]) -> ProbTriple {
        ProbTriple {
            offd: offd.to_vec(),
            ..ProbTriple::uniform()
        }
    }

    #[test]
    fn single_model_is_identity() {
        let mut t = ProbTriple::uniform();
        t.hsc = vec![0.4, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1];
        t.offd = vec![0.25, 0.75];
        let c = ensemble_combine(std::slice::from_ref(&t)).unwrap();
        for task in Task::ALL {
            for (a, b) in c.head(task).iter().zip(t.head(task)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_model_product() {
        let c = ensemble_combine(&[triple([0.6, 0.4]), triple([0.3, 0.7])]).unwrap();
        // 0.18 : 0.28
        assert!((c.offd[0] - 0.18 / 0.46).abs() < 1e-12);
        assert!(predict(&c).offd);
    }

    #[test]
    fn errors() {
        assert!(ensemble_combine(&[]).is_err());
        let mut bad = ProbTriple::uniform();
        bad.hsc.pop();
        assert!(ensemble_combine(&[ProbTriple::uniform(), bad]).is_err());
    }

    #[test]
    fn tie_breaking() {
        let p = predict(&ProbTriple::uniform());
        assert!(!p.offd && !p.hsd);
        assert_eq!(p.hsc, HsCategory::None);
        let mut t = ProbTriple::uniform();
        t.hsc = vec![0.1, 0.4, 0.1, 0.1, 0.1, 0.1, 0.1];
        assert_eq!(predict(&t).hsc, HsCategory::Gender);
    }
}
