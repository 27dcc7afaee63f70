//! Metrics, contradiction analysis, FP/FN rates and run comparison tables.
//!
//! All rates are fractions in `[0, 1]`; text renderings show percentages with
//! two decimals.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ensemble::PredictionTriple;
use crate::error::{Error, Result};
use crate::labels::{LabelTriple, Task};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Counts indexed by (gold class, predicted class).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn build(gold: &[usize], pred: &[usize], classes: usize) -> Result<Self> {
        if gold.len() != pred.len() {
            return Err(Error::Mismatch(format!(
                "gold has {} labels but predictions have {}",
                gold.len(),
                pred.len()
            )));
        }
        let mut counts = vec![vec![0; classes]; classes];
        for (&g, &p) in gold.iter().zip(pred) {
            if g >= classes || p >= classes {
                return Err(Error::Label(format!("class index out of range for {classes} classes")));
            }
            counts[g][p] += 1;
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn true_positives(&self, class: usize) -> usize {
        self.counts[class][class]
    }

    pub fn predicted(&self, class: usize) -> usize {
        self.counts.iter().map(|row| row[class]).sum()
    }

    pub fn actual(&self, class: usize) -> usize {
        self.counts[class].iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    pub fn values(&self) -> [f64; 4] {
        [self.accuracy, self.precision, self.recall, self.f1]
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy and macro-averaged precision, recall and F1 over all `classes`
/// (absent classes included; 0/0 is 0).
pub fn macro_metrics(gold: &[usize], pred: &[usize], classes: usize) -> Result<Metrics> {
    if gold.is_empty() {
        return Err(Error::Empty("no labels to score"));
    }
    let cm = ConfusionMatrix::build(gold, pred, classes)?;
    let mut p_sum = 0.0;
    let mut r_sum = 0.0;
    let mut f_sum = 0.0;
    let mut correct = 0;
    for c in 0..classes {
        let tp = cm.true_positives(c);
        correct += tp;
        let p = ratio(tp, cm.predicted(c));
        let r = ratio(tp, cm.actual(c));
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        p_sum += p;
        r_sum += r;
        f_sum += f;
    }
    let k = classes as f64;
    Ok(Metrics {
        accuracy: ratio(correct, cm.total()),
        precision: p_sum / k,
        recall: r_sum / k,
        f1: f_sum / k,
    })
}

/// Per-task metrics of predictions against gold triples.
pub fn task_metrics(gold: &[LabelTriple], preds: &[PredictionTriple], task: Task) -> Result<Metrics> {
    let g: Vec<usize> = gold.iter().map(|l| l.class_of(task)).collect();
    let p: Vec<usize> = preds.iter().map(|l| l.class_of(task)).collect();
    macro_metrics(&g, &p, task.num_classes())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContradictionRates {
    /// OFFD negative while HSD or HSC is positive.
    pub offd: f64,
    /// HSD and HSC disagree on "is hate speech", in either direction.
    pub hsd_hsc: f64,
}

pub fn contradiction_rates(preds: &[PredictionTriple]) -> Result<ContradictionRates> {
    if preds.is_empty() {
        return Err(Error::Empty("no predictions to analyze"));
    }
    let offd = preds
        .iter()
        .filter(|p| !p.offd && (p.hsd || p.hsc.is_hate()))
        .count();
    let hsd_hsc = preds.iter().filter(|p| p.hsd != p.hsc.is_hate()).count();
    let n = preds.len();
    Ok(ContradictionRates {
        offd: ratio(offd, n),
        hsd_hsc: ratio(hsd_hsc, n),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryErrorRates {
    pub false_positive: f64,
    pub false_negative: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    pub offd: BinaryErrorRates,
    pub hsd: BinaryErrorRates,
    /// HSC binarized as "category ≠ None".
    pub hsc: BinaryErrorRates,
}

fn binary_rates(pairs: impl Iterator<Item = (bool, bool)>, n: usize) -> BinaryErrorRates {
    let (mut fp, mut fn_) = (0, 0);
    for (gold, pred) in pairs {
        match (gold, pred) {
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            _ => {}
        }
    }
    BinaryErrorRates {
        false_positive: ratio(fp, n),
        false_negative: ratio(fn_, n),
    }
}

/// False-positive and false-negative counts as fractions of all samples.
pub fn fp_fn_rates(gold: &[LabelTriple], preds: &[PredictionTriple]) -> Result<ErrorRates> {
    if gold.len() != preds.len() {
        return Err(Error::Mismatch(format!(
            "gold has {} samples but predictions have {}",
            gold.len(),
            preds.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::Empty("no predictions to analyze"));
    }
    let n = gold.len();
    let pairs = gold.iter().zip(preds);
    Ok(ErrorRates {
        offd: binary_rates(pairs.clone().map(|(g, p)| (g.offensive, p.offd)), n),
        hsd: binary_rates(pairs.clone().map(|(g, p)| (g.hate, p.hsd)), n),
        hsc: binary_rates(pairs.map(|(g, p)| (g.category.is_hate(), p.hsc.is_hate())), n),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubtaskReport {
    pub metrics: Metrics,
    /// Metrics after self-consistency correction (HSC only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected: Option<Metrics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyAnalysis {
    pub contradiction: ContradictionRates,
    pub error_rates: ErrorRates,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected_contradiction: Option<ContradictionRates>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected_hsc_error_rates: Option<BinaryErrorRates>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub samples: usize,
    pub offd: SubtaskReport,
    pub hsd: SubtaskReport,
    pub hsc: SubtaskReport,
    /// Absent for composite reports whose rows come from different models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<ConsistencyAnalysis>,
}

impl EvaluationReport {
    pub fn subtask(&self, task: Task) -> &SubtaskReport {
        match task {
            Task::Offd => &self.offd,
            Task::Hsd => &self.hsd,
            Task::Hsc => &self.hsc,
        }
    }

    /// Report whose OFFD, HSD and HSC rows come from three different reports
    /// (used for single-task ablation arms).
    pub fn compose(offd: &EvaluationReport, hsd: &EvaluationReport, hsc: &EvaluationReport) -> Self {
        EvaluationReport {
            schema_version: REPORT_SCHEMA_VERSION,
            samples: offd.samples,
            offd: offd.offd,
            hsd: hsd.hsd,
            hsc: hsc.hsc,
            analysis: None,
        }
    }
}

/// Full evaluation of one prediction set, optionally with its corrected
/// counterpart. Only the HSC field may differ between `preds` and `corrected`.
pub fn evaluate(
    gold: &[LabelTriple],
    preds: &[PredictionTriple],
    corrected: Option<&[PredictionTriple]>,
) -> Result<EvaluationReport> {
    if gold.len() != preds.len() || corrected.is_some_and(|c| c.len() != preds.len()) {
        return Err(Error::Mismatch("gold and prediction counts differ".into()));
    }
    let corrected_hsc = corrected.map(|c| task_metrics(gold, c, Task::Hsc)).transpose()?;
    let analysis = ConsistencyAnalysis {
        contradiction: contradiction_rates(preds)?,
        error_rates: fp_fn_rates(gold, preds)?,
        corrected_contradiction: corrected.map(contradiction_rates).transpose()?,
        corrected_hsc_error_rates: corrected.map(|c| fp_fn_rates(gold, c).map(|r| r.hsc)).transpose()?,
    };
    Ok(EvaluationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        samples: gold.len(),
        offd: SubtaskReport {
            metrics: task_metrics(gold, preds, Task::Offd)?,
            corrected: None,
        },
        hsd: SubtaskReport {
            metrics: task_metrics(gold, preds, Task::Hsd)?,
            corrected: None,
        },
        hsc: SubtaskReport {
            metrics: task_metrics(gold, preds, Task::Hsc)?,
            corrected: corrected_hsc,
        },
        analysis: Some(analysis),
    })
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn dual(before: f64, after: Option<f64>) -> String {
    match after {
        Some(a) => format!("{}/{}%", pct(before), pct(a)),
        None => format!("{}%", pct(before)),
    }
}

const METRIC_NAMES: [&str; 4] = ["Accuracy", "Precision", "Recall", "F1 Macro"];

impl fmt::Display for EvaluationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "samples: {}", self.samples)?;
        writeln!(
            f,
            "{:<8} {:>15} {:>15} {:>15} {:>15}",
            "Subtask", METRIC_NAMES[0], METRIC_NAMES[1], METRIC_NAMES[2], METRIC_NAMES[3]
        )?;
        for task in Task::ALL {
            let r = self.subtask(task);
            let before = r.metrics.values();
            let after = r.corrected.map(|c| c.values());
            let cells: Vec<String> = (0..4).map(|i| dual(before[i], after.map(|a| a[i]))).collect();
            writeln!(
                f,
                "{:<8} {:>15} {:>15} {:>15} {:>15}",
                task.display_name(),
                cells[0],
                cells[1],
                cells[2],
                cells[3]
            )?;
        }
        if let Some(a) = &self.analysis {
            write!(f, "\n{}", AnalysisTables(a))?;
        }
        Ok(())
    }
}

/// Contradiction and FP/FN tables for one prediction set.
pub struct AnalysisTables<'a>(pub &'a ConsistencyAnalysis);

impl fmt::Display for AnalysisTables<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.0;
        writeln!(f, "{:<8} {:>20}", "Subtask", "Contradiction (%)")?;
        writeln!(f, "{:<8} {:>20}", "OFFD", dual(a.contradiction.offd, None))?;
        writeln!(f, "{:<8} {:>20}", "HSD", dual(a.contradiction.hsd_hsc, None))?;
        writeln!(
            f,
            "{:<8} {:>20}",
            "HSC",
            dual(a.contradiction.hsd_hsc, a.corrected_contradiction.map(|c| c.hsd_hsc))
        )?;
        writeln!(f)?;
        writeln!(f, "{:<8} {:>16} {:>16}", "", "False +ve (%)", "False -ve (%)")?;
        let e = &a.error_rates;
        for (name, r) in [("OFFD", e.offd), ("HSD", e.hsd)] {
            writeln!(f, "{:<8} {:>16} {:>16}", name, dual(r.false_positive, None), dual(r.false_negative, None))?;
        }
        let c = a.corrected_hsc_error_rates;
        write!(
            f,
            "{:<8} {:>16} {:>16}",
            "HSC",
            dual(e.hsc.false_positive, c.map(|c| c.false_positive)),
            dual(e.hsc.false_negative, c.map(|c| c.false_negative))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected: Option<f64>,
    pub best: bool,
}

impl ComparisonCell {
    /// The value used for ranking: the corrected one when present.
    fn key(&self) -> f64 {
        self.corrected.unwrap_or(self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub subtask: Task,
    pub model: String,
    pub cells: Vec<ComparisonCell>,
}

/// Side-by-side metrics of several runs, grouped by subtask. Best values per
/// subtask and metric are flagged (all tied entries are flagged).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub schema_version: u32,
    pub rows: Vec<ComparisonRow>,
}

pub fn compare_runs(reports: &[(String, EvaluationReport)]) -> Result<ComparisonTable> {
    if reports.len() < 2 {
        return Err(Error::Empty("comparison needs at least two reports"));
    }
    let mut rows = Vec::new();
    for task in Task::ALL {
        let start = rows.len();
        for (name, report) in reports {
            let r = report.subtask(task);
            let after = r.corrected.map(|c| c.values());
            let cells = r
                .metrics
                .values()
                .iter()
                .enumerate()
                .map(|(i, v)| ComparisonCell {
                    value: *v,
                    corrected: after.map(|a| a[i]),
                    best: false,
                })
                .collect();
            rows.push(ComparisonRow {
                subtask: task,
                model: name.clone(),
                cells,
            });
        }
        for metric in 0..4 {
            let best = rows[start..]
                .iter()
                .map(|r: &ComparisonRow| r.cells[metric].key())
                .fold(f64::NEG_INFINITY, f64::max);
            for row in &mut rows[start..] {
                let cell = &mut row.cells[metric];
                cell.best = cell.key() >= best - 1e-12;
            }
        }
    }
    Ok(ComparisonTable {
        schema_version: REPORT_SCHEMA_VERSION,
        rows,
    })
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.iter().map(|r| r.model.len()).max().unwrap_or(5).max(5);
        write!(f, "{:<8} {:<width$}", "Subtask", "Model")?;
        for name in METRIC_NAMES {
            write!(f, " {:>16}", name)?;
        }
        writeln!(f)?;
        let mut last = None;
        for row in &self.rows {
            let label = if last == Some(row.subtask) { "" } else { row.subtask.display_name() };
            last = Some(row.subtask);
            write!(f, "{:<8} {:<width$}", label, row.model)?;
            for cell in &row.cells {
                let mut text = dual(cell.value, cell.corrected);
                if cell.best {
                    text.push('*');
                }
                write!(f, " {:>16}", text)?;
            }
            writeln!(f)?;
        }
        write!(f, "(* best per subtask and metric)")
    }
}
