//! Prediction sources for `evaluate`: a single file, or one file per subtask.
//!
//! Syntax: `[NAME=]PATH` or `[NAME=]offd:PATH,hsd:PATH,hsc:PATH`.

use std::path::{Path, PathBuf};

use anyhow::Context;

use hsmtl::corpus::Corpus;
use hsmtl::evaluation::{evaluate, EvaluationReport};
use hsmtl::predictions::{align_with_gold, read_records};
use hsmtl::Task;

use crate::UsageError;

#[derive(Debug, Clone, PartialEq)]
pub enum SourceKind {
    Single(PathBuf),
    PerTask { offd: PathBuf, hsd: PathBuf, hsc: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSource {
    pub name: String,
    pub kind: SourceKind,
}

fn is_per_task(s: &str) -> bool {
    ["offd:", "hsd:", "hsc:"].iter().any(|p| s.starts_with(p))
}

impl PredictionSource {
    pub fn parse(spec: &str) -> Result<Self, UsageError> {
        let (name, rest) = match spec.split_once('=') {
            Some((n, r)) if !n.is_empty() && !n.contains(['/', '\\', ':']) => (Some(n.to_string()), r),
            _ => (None, spec),
        };
        if rest.is_empty() {
            return Err(UsageError(format!("empty prediction source `{spec}`")));
        }
        if !is_per_task(rest) {
            let path = PathBuf::from(rest);
            let name = name.unwrap_or_else(|| {
                path.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| rest.to_string())
            });
            return Ok(PredictionSource {
                name,
                kind: SourceKind::Single(path),
            });
        }
        let mut parts: [Option<PathBuf>; 3] = Default::default();
        for item in rest.split(',') {
            let (task, path) = item
                .split_once(':')
                .ok_or_else(|| UsageError(format!("expected TASK:PATH, got `{item}`")))?;
            let task: Task = task.parse().map_err(|e| UsageError(format!("{e}")))?;
            let slot = &mut parts[task as usize];
            if slot.is_some() {
                return Err(UsageError(format!("subtask {task} given twice in `{spec}`")));
            }
            *slot = Some(PathBuf::from(path));
        }
        let [Some(offd), Some(hsd), Some(hsc)] = parts else {
            return Err(UsageError(format!("`{spec}` must name files for offd, hsd and hsc")));
        };
        Ok(PredictionSource {
            name: name.unwrap_or_else(|| "composite".into()),
            kind: SourceKind::PerTask { offd, hsd, hsc },
        })
    }

    pub fn paths(&self) -> Vec<&Path> {
        match &self.kind {
            SourceKind::Single(p) => vec![p.as_path()],
            SourceKind::PerTask { offd, hsd, hsc } => vec![offd.as_path(), hsd.as_path(), hsc.as_path()],
        }
    }

    pub fn report(&self, gold: &Corpus) -> anyhow::Result<EvaluationReport> {
        match &self.kind {
            SourceKind::Single(p) => report_for_file(p, gold),
            SourceKind::PerTask { offd, hsd, hsc } => Ok(EvaluationReport::compose(
                &report_for_file(offd, gold)?,
                &report_for_file(hsd, gold)?,
                &report_for_file(hsc, gold)?,
            )),
        }
    }
}

pub fn report_for_file(path: &Path, gold: &Corpus) -> anyhow::Result<EvaluationReport> {
    let records = read_records(path)?;
    let aligned = align_with_gold(gold, &records).with_context(|| format!("aligning {} with gold", path.display()))?;
    Ok(evaluate(&aligned.gold, &aligned.predictions, aligned.corrected.as_deref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_plain_named_and_per_task() {
        let p = PredictionSource::parse("out/mtl.jsonl").unwrap();
        assert_eq!(p.name, "mtl");
        assert_eq!(p.kind, SourceKind::Single("out/mtl.jsonl".into()));

        let p = PredictionSource::parse("MTL=a/b.jsonl").unwrap();
        assert_eq!(p.name, "MTL");

        let p = PredictionSource::parse("single=hsc:c.jsonl,offd:a.jsonl,hsd:b.jsonl").unwrap();
        assert_eq!(p.name, "single");
        assert_eq!(
            p.kind,
            SourceKind::PerTask {
                offd: "a.jsonl".into(),
                hsd: "b.jsonl".into(),
                hsc: "c.jsonl".into()
            }
        );
    }

    #[test]
    fn rejects_incomplete_per_task() {
        assert!(PredictionSource::parse("offd:a.jsonl,hsd:b.jsonl").is_err());
        assert!(PredictionSource::parse("offd:a,offd:b,hsc:c").is_err());
        assert!(PredictionSource::parse("x=").is_err());
    }
}
