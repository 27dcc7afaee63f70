//! Self-consistency correction of the HSC head.
//!
//! Rule A: OFFD and HSD both positive but HSC says "not HS" → take the most
//! probable hate category instead. Rule B: OFFD and HSD both negative but HSC
//! names a category → HSC becomes `None`. OFFD and HSD are never changed.

use serde::{Deserialize, Serialize};

use crate::ensemble::{argmax, PredictionTriple};
use crate::labels::HsCategory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionRule {
    None,
    PromoteSecondBest,
    DemoteToNone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionOutcome {
    pub before: PredictionTriple,
    pub after: PredictionTriple,
    pub rule_applied: CorrectionRule,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionSummary {
    pub none: usize,
    pub promoted: usize,
    pub demoted: usize,
}

impl CorrectionSummary {
    pub fn total(&self) -> usize {
        self.none + self.promoted + self.demoted
    }
}

pub fn self_consistency_correct(pred: &PredictionTriple) -> CorrectionOutcome {
    let mut after = pred.clone();
    let rule = if pred.offd && pred.hsd && pred.hsc == HsCategory::None {
        // best non-None class; argmax over the tail keeps canonical tie order
        let tail = &pred.source_probs.hsc[1..];
        after.hsc = HsCategory::from_index(1 + argmax(tail)).expect("hsc width checked upstream");
        CorrectionRule::PromoteSecondBest
    } else if !pred.offd && !pred.hsd && pred.hsc != HsCategory::None {
        after.hsc = HsCategory::None;
        CorrectionRule::DemoteToNone
    } else {
        CorrectionRule::None
    };
    CorrectionOutcome {
        before: pred.clone(),
        after,
        rule_applied: rule,
    }
}

pub fn correct_batch(preds: &[PredictionTriple]) -> (Vec<CorrectionOutcome>, CorrectionSummary) {
    let mut summary = CorrectionSummary::default();
    let outcomes: Vec<CorrectionOutcome> = preds
        .iter()
        .map(|p| {
            let o = self_consistency_correct(p);
            match o.rule_applied {
                CorrectionRule::None => summary.none += 1,
                CorrectionRule::PromoteSecondBest => summary.promoted += 1,
                CorrectionRule::DemoteToNone => summary.demoted += 1,
            }
            o
        })
        .collect();
    (outcomes, summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ProbTriple;

    fn pred(offd: bool, hsd: bool, hsc: HsCategory, probs: Vec<f64>) -> PredictionTriple {
        PredictionTriple {
            offd,
            hsd,
            hsc,
            source_probs: ProbTriple {
                hsc: probs,
                ..ProbTriple::uniform()
            },
        }
    }

    #[test]
    fn promote_second_best() {
        let p = pred(true, true, HsCategory::None, vec![0.5, 0.3, 0.2, 0.0, 0.0, 0.0, 0.0]);
        let o = self_consistency_correct(&p);
        assert_eq!(o.after.hsc, HsCategory::Gender);
        assert_eq!(o.rule_applied, CorrectionRule::PromoteSecondBest);
        // tie among hate classes goes to canonical order
        let p = pred(true, true, HsCategory::None, vec![0.4, 0.0, 0.1, 0.1, 0.2, 0.2, 0.0]);
        assert_eq!(self_consistency_correct(&p).after.hsc, HsCategory::SocialClass);
    }

    #[test]
    fn demote_and_untouched() {
        let o = self_consistency_correct(&pred(false, false, HsCategory::Race, vec![1.0 / 7.0; 7]));
        assert_eq!(o.after.hsc, HsCategory::None);
        assert_eq!(o.rule_applied, CorrectionRule::DemoteToNone);
        let p = pred(true, false, HsCategory::None, vec![1.0 / 7.0; 7]);
        let o = self_consistency_correct(&p);
        assert_eq!(o.rule_applied, CorrectionRule::None);
        assert_eq!(o.before, o.after);
    }

    #[test]
    fn batch_counts() {
        let (out, s) = correct_batch(&[]);
        assert!(out.is_empty());
        assert_eq!(s, CorrectionSummary::default());
        let batch = vec![pred(false, false, HsCategory::Religion, vec![1.0 / 7.0; 7]); 5];
        let (_, s) = correct_batch(&batch);
        assert_eq!((s.promoted, s.demoted, s.total()), (0, 5, 5));
    }
}
