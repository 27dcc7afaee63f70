//! Probability and prediction files (JSONL).
//!
//! A row is `{"id", "offd": [p0, p1], "hsd": [p0, p1], "hsc": [7 floats]}`.
//! Corrected rows additionally carry `offd_label`, `hsd_label`, `hsc_label`
//! and `rule_applied`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::consistency::{correct_batch, CorrectionRule, CorrectionSummary};
use crate::corpus::Corpus;
use crate::ensemble::{ensemble_combine, predict, PredictionTriple};
use crate::error::{Error, Result};
use crate::labels::{HsCategory, LabelTriple};
use crate::model::ProbTriple;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub offd: Vec<f64>,
    pub hsd: Vec<f64>,
    pub hsc: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offd_label: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hsd_label: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hsc_label: Option<HsCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_applied: Option<CorrectionRule>,
}

impl PredictionRecord {
    pub fn from_probs(id: impl Into<String>, probs: ProbTriple) -> Self {
        PredictionRecord {
            id: id.into(),
            offd: probs.offd,
            hsd: probs.hsd,
            hsc: probs.hsc,
            offd_label: None,
            hsd_label: None,
            hsc_label: None,
            rule_applied: None,
        }
    }

    pub fn probs(&self) -> ProbTriple {
        ProbTriple {
            offd: self.offd.clone(),
            hsd: self.hsd.clone(),
            hsc: self.hsc.clone(),
        }
    }

    /// Argmax labels of the stored probabilities.
    pub fn prediction(&self) -> PredictionTriple {
        predict(&self.probs())
    }

    /// Stored corrected labels, if this is a corrected row.
    pub fn corrected(&self) -> Option<PredictionTriple> {
        Some(PredictionTriple {
            offd: self.offd_label?,
            hsd: self.hsd_label?,
            hsc: self.hsc_label?,
            source_probs: self.probs(),
        })
    }

    fn is_corrected(&self) -> bool {
        self.offd_label.is_some() || self.hsd_label.is_some() || self.hsc_label.is_some() || self.rule_applied.is_some()
    }
}

pub fn write_records(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<PredictionRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let rec: PredictionRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        rec.probs().validate().map_err(|e| parse_err(e.to_string()))?;
        if rec.is_corrected() && rec.corrected().is_none() {
            return Err(parse_err("corrected row is missing some label fields".into()));
        }
        if !seen.insert(rec.id.clone()) {
            return Err(parse_err(format!("duplicate id `{}`", rec.id)));
        }
        records.push(rec);
    }
    Ok(records)
}

/// Requires every file to list the same ids in the same order.
fn check_aligned(files: &[Vec<PredictionRecord>]) -> Result<()> {
    let first = files.first().ok_or(Error::Empty("no prediction files"))?;
    for (k, other) in files.iter().enumerate().skip(1) {
        if other.len() != first.len() {
            return Err(Error::Mismatch(format!(
                "prediction file {} has {} rows, file 1 has {}",
                k + 1,
                other.len(),
                first.len()
            )));
        }
        if let Some((a, b)) = first.iter().zip(other).find(|(a, b)| a.id != b.id) {
            return Err(Error::Mismatch(format!(
                "prediction file {} has id `{}` where file 1 has `{}`",
                k + 1,
                b.id,
                a.id
            )));
        }
    }
    Ok(())
}

/// Row-wise probability product over aligned files.
pub fn ensemble_records(files: &[Vec<PredictionRecord>]) -> Result<Vec<PredictionRecord>> {
    check_aligned(files)?;
    (0..files[0].len())
        .map(|row| {
            let triples: Vec<ProbTriple> = files.iter().map(|f| f[row].probs()).collect();
            Ok(PredictionRecord::from_probs(files[0][row].id.clone(), ensemble_combine(&triples)?))
        })
        .collect()
}

/// Decodes and corrects each row from its probabilities; existing labels are
/// ignored, so correcting a corrected file reproduces it.
pub fn correct_records(records: &[PredictionRecord]) -> (Vec<PredictionRecord>, CorrectionSummary) {
    let preds: Vec<PredictionTriple> = records.iter().map(|r| r.prediction()).collect();
    let (outcomes, summary) = correct_batch(&preds);
    let rows = records
        .iter()
        .zip(outcomes)
        .map(|(r, o)| PredictionRecord {
            offd_label: Some(o.after.offd),
            hsd_label: Some(o.after.hsd),
            hsc_label: Some(o.after.hsc),
            rule_applied: Some(o.rule_applied),
            ..PredictionRecord::from_probs(r.id.clone(), r.probs())
        })
        .collect();
    (rows, summary)
}

/// Predictions matched to a labeled corpus by id, in corpus order.
#[derive(Debug, Clone)]
pub struct AlignedPredictions {
    pub gold: Vec<LabelTriple>,
    pub predictions: Vec<PredictionTriple>,
    /// Present when every row carries corrected labels.
    pub corrected: Option<Vec<PredictionTriple>>,
}

pub fn align_with_gold(corpus: &Corpus, records: &[PredictionRecord]) -> Result<AlignedPredictions> {
    if records.len() != corpus.len() {
        return Err(Error::Mismatch(format!(
            "{} predictions for {} corpus samples",
            records.len(),
            corpus.len()
        )));
    }
    let by_id: BTreeMap<&str, &PredictionRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut gold = Vec::with_capacity(corpus.len());
    let mut predictions = Vec::with_capacity(corpus.len());
    let mut corrected = Some(Vec::with_capacity(corpus.len()));
    for s in corpus.samples() {
        let rec = by_id
            .get(s.id.as_str())
            .ok_or_else(|| Error::Mismatch(format!("no prediction for sample `{}`", s.id)))?;
        gold.push(s.gold()?);
        predictions.push(rec.prediction());
        corrected = corrected.and_then(|mut c: Vec<PredictionTriple>| {
            c.push(rec.corrected()?);
            Some(c)
        });
    }
    Ok(AlignedPredictions {
        gold,
        predictions,
        corrected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, off: f64) -> PredictionRecord {
        PredictionRecord::from_probs(
            id,
            ProbTriple {
                offd: vec![1.0 - off, off],
                hsd: vec![0.3, 0.7],
                hsc: vec![0.4, 0.3, 0.1, 0.05, 0.05, 0.05, 0.05],
            },
        )
    }

    #[test]
    fn round_trip_and_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        let rows = vec![rec("a", 0.9), rec("b", 0.2)];
        write_records(&path, &rows).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("{\"id\":\"a\",\"offd\":[0.09999999999999998,0.9],"));
        assert_eq!(read_records(&path).unwrap(), rows);
    }

    #[test]
    fn ensemble_single_file_is_identity_up_to_renormalization() {
        let rows = vec![rec("a", 0.9), rec("b", 0.2)];
        let out = ensemble_records(std::slice::from_ref(&rows)).unwrap();
        for (a, b) in rows.iter().zip(&out) {
            for (x, y) in a.hsc.iter().zip(&b.hsc) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ensemble_rejects_id_mismatch() {
        let a = vec![rec("a", 0.9), rec("b", 0.2)];
        let b = vec![rec("a", 0.9), rec("c", 0.2)];
        let err = ensemble_records(&[a, b]).unwrap_err().to_string();
        assert!(err.contains("`c`"), "{err}");
    }

    #[test]
    fn correction_is_idempotent() {
        // offd and hsd positive, hsc None on top → Rule A
        let rows = vec![rec("a", 0.9), rec("b", 0.2)];
        let (once, summary) = correct_records(&rows);
        assert_eq!(summary.promoted, 1);
        assert_eq!(once[0].hsc_label, Some(HsCategory::Gender));
        let (twice, _) = correct_records(&once);
        assert_eq!(once, twice);
    }
}
