//! Corpus ingestion, normalization, splitting and class statistics.
//!
//! Two on-disk formats are accepted:
//!
//! ```text
//! TSV   id<TAB>text<TAB>offensive<TAB>hate<TAB>category   (header row required)
//! JSONL {"id": "...", "text": "...", "offensive": 0, "hate": 0, "category": "none"}
//! ```
//!
//! Label columns are optional; a row without them is loaded unlabeled.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{HsCategory, LabelTriple};

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:[A-Za-z][A-Za-z0-9+.\-]*://|www\.)\S+").unwrap())
}

fn mention_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"@\w+(?:\s+@\w+)*").unwrap())
}

fn line_break_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\r\n|\r|\n").unwrap())
}

fn whitespace_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\s+").unwrap())
}

/// Canonical text normalization.
///
/// URLs become `URL`, each run of whitespace-separated user mentions becomes a
/// single `@USER`, line breaks become `<LF>`, whitespace collapses to single
/// spaces and the result is trimmed. Idempotent.
pub fn normalize_text(raw: &str) -> String {
    let s = url_re().replace_all(raw, "URL");
    let s = mention_re().replace_all(&s, "@USER");
    let s = line_break_re().replace_all(&s, " <LF> ");
    let s = whitespace_re().replace_all(&s, " ");
    s.trim().to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub raw_text: String,
    pub text: String,
    pub gold: Option<LabelTriple>,
    /// Externally computed representation, used by the passthrough encoder.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

impl Sample {
    pub fn new(id: impl Into<String>, raw_text: impl Into<String>, gold: Option<LabelTriple>) -> Self {
        let raw_text = raw_text.into();
        Sample {
            id: id.into(),
            text: normalize_text(&raw_text),
            raw_text,
            gold,
            embedding: None,
        }
    }

    pub fn gold(&self) -> Result<LabelTriple> {
        self.gold
            .ok_or_else(|| Error::Label(format!("sample `{}` has no gold label", self.id)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Dev,
    Test,
    Unsplit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    samples: Vec<Sample>,
    pub split_tag: SplitTag,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate sample ids.
    pub fn new(samples: Vec<Sample>, split_tag: SplitTag) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Mismatch(format!("duplicate sample id `{}`", s.id)));
            }
        }
        Ok(Corpus { samples, split_tag })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.samples.iter().all(|s| s.gold.is_some())
    }

    pub fn golds(&self) -> Result<Vec<LabelTriple>> {
        self.samples.iter().map(Sample::gold).collect()
    }

    /// Attaches sidecar embeddings by id. Samples without an entry keep `None`.
    pub fn attach_embeddings(&mut self, embeddings: &BTreeMap<String, Vec<f64>>) {
        for s in &mut self.samples {
            if let Some(e) = embeddings.get(&s.id) {
                s.embedding = Some(e.clone());
            }
        }
    }

    /// Writes the corpus as TSV. Text is written normalized, so a reload is
    /// lossless for every field except `raw_text`.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("id\ttext\toffensive\thate\tcategory\n");
        for s in &self.samples {
            match s.gold {
                Some(g) => out.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\n",
                    s.id, s.text, g.offensive as u8, g.hate as u8, g.category
                )),
                None => out.push_str(&format!("{}\t{}\t\t\t\n", s.id, s.text)),
            }
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Tsv,
    Jsonl,
}

impl CorpusFormat {
    /// Guesses the format from the file extension (`.jsonl`/`.json` vs anything else).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => CorpusFormat::Jsonl,
            _ => CorpusFormat::Tsv,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(CorpusFormat::Tsv),
            "jsonl" => Ok(CorpusFormat::Jsonl),
            _ => Err(Error::Config(vec![format!("unknown corpus format `{s}`")])),
        }
    }
}

/// What to do with a row whose labels break the hierarchy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HierarchyPolicy {
    #[default]
    Reject,
    DropWithWarning,
}

pub fn load_corpus(path: &Path, format: CorpusFormat, policy: HierarchyPolicy) -> Result<Corpus> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows = match format {
        CorpusFormat::Tsv => parse_tsv(path, &content)?,
        CorpusFormat::Jsonl => parse_jsonl(path, &content)?,
    };
    let mut samples = Vec::with_capacity(rows.len());
    for row in rows {
        match row.labels {
            Some((off, hate, cat)) => match LabelTriple::new(off, hate, cat) {
                Ok(gold) => samples.push(Sample::new(row.id, row.text, Some(gold))),
                Err(Error::Label(msg)) => match policy {
                    HierarchyPolicy::Reject => {
                        return Err(Error::Hierarchy {
                            line: row.line,
                            message: msg,
                        })
                    }
                    HierarchyPolicy::DropWithWarning => {
                        log::warn!(
                            "{}: dropping row at line {} (hierarchy violation: {msg})",
                            path.display(),
                            row.line
                        );
                    }
                },
                Err(e) => return Err(e),
            },
            None => samples.push(Sample::new(row.id, row.text, None)),
        }
    }
    Corpus::new(samples, SplitTag::Unsplit)
}

struct RawRow {
    line: usize,
    id: String,
    text: String,
    labels: Option<(bool, bool, HsCategory)>,
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim() {
        "0" | "false" => Some(false),
        "1" | "true" => Some(true),
        _ => None,
    }
}

fn parse_tsv(path: &Path, content: &str) -> Result<Vec<RawRow>> {
    let mut lines = content.lines().enumerate();
    let header = match lines.next() {
        Some((_, h)) => h,
        None => return Ok(Vec::new()),
    };
    let columns: Vec<String> = header.split('\t').map(|c| c.trim().to_ascii_lowercase()).collect();
    let find = |name: &str| columns.iter().position(|c| c == name);
    let (id_col, text_col) = match (find("id"), find("text")) {
        (Some(i), Some(t)) => (i, t),
        _ => return Err(parse_error(path, 1, "header must name `id` and `text` columns")),
    };
    let label_cols = [find("offensive"), find("hate"), find("category")];

    let mut rows = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let get = |col: usize| fields.get(col).map(|f| f.trim());
        let id = get(id_col)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| parse_error(path, lineno, "missing id"))?;
        let text = get(text_col).ok_or_else(|| parse_error(path, lineno, "missing text column"))?;
        let label_fields: Vec<&str> = label_cols
            .iter()
            .map(|c| c.and_then(get).unwrap_or(""))
            .collect();
        let labels = parse_label_fields(path, lineno, &label_fields)?;
        rows.push(RawRow {
            line: lineno,
            id: id.to_string(),
            text: text.to_string(),
            labels,
        });
    }
    Ok(rows)
}

fn parse_label_fields(
    path: &Path,
    lineno: usize,
    fields: &[&str],
) -> Result<Option<(bool, bool, HsCategory)>> {
    if fields.iter().all(|f| f.is_empty()) {
        return Ok(None);
    }
    if fields.iter().any(|f| f.is_empty()) {
        return Err(parse_error(path, lineno, "partial labels: offensive, hate and category must all be present"));
    }
    let off = parse_flag(fields[0])
        .ok_or_else(|| parse_error(path, lineno, format!("bad offensive flag `{}`", fields[0])))?;
    let hate = parse_flag(fields[1])
        .ok_or_else(|| parse_error(path, lineno, format!("bad hate flag `{}`", fields[1])))?;
    let cat = fields[2]
        .parse::<HsCategory>()
        .map_err(|_| parse_error(path, lineno, format!("unknown category `{}`", fields[2])))?;
    Ok(Some((off, hate, cat)))
}

#[derive(Deserialize)]
struct JsonRow {
    id: serde_json::Value,
    text: String,
    #[serde(default)]
    offensive: Option<serde_json::Value>,
    #[serde(default)]
    hate: Option<serde_json::Value>,
    #[serde(default)]
    category: Option<String>,
}

fn json_flag(v: &Option<serde_json::Value>) -> Option<String> {
    v.as_ref().map(|v| match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    })
}

fn parse_jsonl(path: &Path, content: &str) -> Result<Vec<RawRow>> {
    let mut rows = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonRow = serde_json::from_str(line)
            .map_err(|e| parse_error(path, lineno, e.to_string()))?;
        let id = match row.id {
            serde_json::Value::String(s) => s,
            serde_json::Value::Number(n) => n.to_string(),
            _ => return Err(parse_error(path, lineno, "id must be a string or number")),
        };
        let off = json_flag(&row.offensive).unwrap_or_default();
        let hate = json_flag(&row.hate).unwrap_or_default();
        let cat = row.category.unwrap_or_default();
        let labels = parse_label_fields(path, lineno, &[&off, &hate, &cat])?;
        rows.push(RawRow {
            line: lineno,
            id,
            text: row.text,
            labels,
        });
    }
    Ok(rows)
}

/// Split fractions for (train, dev, test).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.7,
            dev: 0.1,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.dev, self.test];
        if all.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::Config(vec!["split fractions must be positive".into()]));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(vec!["split fractions must sum to 1".into()]));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitStrategy {
    #[default]
    Stratified,
    Uniform,
}

/// Stratum key: the category, and the offensive flag among non-hate samples.
fn stratum_key(gold: &LabelTriple) -> (HsCategory, bool) {
    match gold.category {
        HsCategory::None => (HsCategory::None, gold.offensive),
        c => (c, true),
    }
}

/// Per-stratum split sizes: largest-remainder rounding of the exact fractions,
/// then every split gets at least one sample when the stratum has three or more.
pub(crate) fn allocate(n: usize, fractions: &SplitFractions) -> [usize; 3] {
    let exact = [
        fractions.train * n as f64,
        fractions.dev * n as f64,
        fractions.test * n as f64,
    ];
    let mut sizes = exact.map(|e| e.floor() as usize);
    let mut remaining = n - sizes.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    // stable sort keeps train < dev < test on equal remainders
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap()
    });
    for &i in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        sizes[i] += 1;
        remaining -= 1;
    }
    if n >= 3 {
        for i in 0..3 {
            if sizes[i] == 0 {
                let donor = (0..3).max_by_key(|&j| (sizes[j], usize::MAX - j)).unwrap();
                sizes[donor] -= 1;
                sizes[i] += 1;
            }
        }
    }
    sizes
}

/// Deterministic stratified (or uniform) train/dev/test split.
///
/// Each split keeps the original corpus order.
pub fn split_corpus(
    corpus: &Corpus,
    fractions: SplitFractions,
    seed: u64,
    strategy: SplitStrategy,
) -> Result<(Corpus, Corpus, Corpus)> {
    if corpus.is_empty() {
        return Err(Error::Empty("cannot split an empty corpus"));
    }
    fractions.validate()?;

    let mut strata: BTreeMap<(HsCategory, bool), Vec<usize>> = BTreeMap::new();
    for (i, s) in corpus.samples().iter().enumerate() {
        let gold = s.gold()?;
        let key = match strategy {
            SplitStrategy::Stratified => stratum_key(&gold),
            SplitStrategy::Uniform => (HsCategory::None, false),
        };
        strata.entry(key).or_default().push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assigned: [Vec<usize>; 3] = Default::default();
    for (key, mut members) in strata {
        members.shuffle(&mut rng);
        let sizes = allocate(members.len(), &fractions);
        if members.len() < 3 {
            log::warn!(
                "stratum {:?}/offensive={} has {} sample(s); not every split will contain it",
                key.0,
                key.1,
                members.len()
            );
        }
        let mut it = members.into_iter();
        for (split, &size) in assigned.iter_mut().zip(sizes.iter()) {
            split.extend(it.by_ref().take(size));
        }
    }

    let build = |mut idx: Vec<usize>, tag: SplitTag| {
        idx.sort_unstable();
        Corpus::new(idx.into_iter().map(|i| corpus.samples[i].clone()).collect(), tag)
    };
    let [train, dev, test] = assigned;
    Ok((
        build(train, SplitTag::Train)?,
        build(dev, SplitTag::Dev)?,
        build(test, SplitTag::Test)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassCount {
    pub count: usize,
    pub percent: f64,
}

/// Per-class counts in the layout of a dataset-statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub total: usize,
    pub clean: ClassCount,
    pub offensive: ClassCount,
    pub hate: ClassCount,
    /// Hate-speech subclasses in canonical order (None excluded).
    pub categories: Vec<(HsCategory, ClassCount)>,
}

impl ClassStats {
    /// Builds statistics from raw counts; `categories` is indexed by canonical
    /// category index, with index 0 (`None`) ignored.
    pub fn from_counts(clean: usize, offensive: usize, hate: usize, categories: [usize; 7]) -> Result<Self> {
        let total = clean + offensive;
        if total == 0 {
            return Err(Error::Empty("no samples to summarize"));
        }
        let pct = |count: usize| ClassCount {
            count,
            percent: 100.0 * count as f64 / total as f64,
        };
        Ok(ClassStats {
            total,
            clean: pct(clean),
            offensive: pct(offensive),
            hate: pct(hate),
            categories: HsCategory::ALL[1..]
                .iter()
                .map(|c| (*c, pct(categories[c.index()])))
                .collect(),
        })
    }
}

pub fn compute_stats(corpus: &Corpus) -> Result<ClassStats> {
    let mut clean = 0;
    let mut offensive = 0;
    let mut hate = 0;
    let mut categories = [0usize; 7];
    for s in corpus.samples() {
        let g = s.gold()?;
        if g.offensive {
            offensive += 1;
        } else {
            clean += 1;
        }
        if g.hate {
            hate += 1;
        }
        categories[g.category.index()] += 1;
    }
    ClassStats::from_counts(clean, offensive, hate, categories)
}

impl fmt::Display for ClassStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<20} {:>12} {:>15}", "Class - Subclass", "# of Tweets", "Percentage (%)")?;
        let row = |f: &mut fmt::Formatter<'_>, name: &str, c: &ClassCount| {
            writeln!(f, "{:<20} {:>12} {:>14.2}%", name, c.count, c.percent)
        };
        row(f, "Clean", &self.clean)?;
        row(f, "Offensive", &self.offensive)?;
        row(f, "Hate Speech", &self.hate)?;
        for (cat, c) in &self.categories {
            row(f, &format!("HS - {}", cat.display_name()), c)?;
        }
        write!(f, "{:<20} {:>12}", "Total", self.total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp(content: &str, suffix: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_text("@a @b hello"), "@USER hello");
        assert_eq!(normalize_text(""), "");
        assert_eq!(normalize_text("see https://x.y/z now\nok"), "see URL now <LF> ok");
        assert_eq!(normalize_text("visit www.example.com\r\n\r\nbye"), "visit URL <LF> <LF> bye");
        assert_eq!(normalize_text("  hi \t there  "), "hi there");
        assert_eq!(normalize_text("@user1 said @user2"), "@USER said @USER");
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(s in "\\PC{0,40}|[@a-z \\n:/.w]{0,40}") {
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once.clone());
        }
    }

    #[test]
    fn tsv_rows() {
        let f = tmp("id\ttext\toffensive\thate\tcategory\nt1 \t hello \t 0 \t 0 \t none\nt2\tyou\t1\t1\trace\n", ".tsv");
        let c = load_corpus(f.path(), CorpusFormat::Tsv, HierarchyPolicy::Reject).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.samples()[0].id, "t1");
        assert_eq!(c.samples()[0].text, "hello");
        assert_eq!(c.samples()[0].gold, Some(LabelTriple::CLEAN));
        assert_eq!(c.samples()[1].gold.unwrap().category, HsCategory::Race);
    }

    #[test]
    fn tsv_hierarchy_violation_rejected_or_dropped() {
        let body = "id\ttext\toffensive\thate\tcategory\na\tok\t0\t0\tnone\nb\tbad\t0\t1\tnone\n";
        let f = tmp(body, ".tsv");
        let err = load_corpus(f.path(), CorpusFormat::Tsv, HierarchyPolicy::Reject).unwrap_err();
        assert!(err.to_string().contains("hierarchy violation at line 3"), "{err}");
        let c = load_corpus(f.path(), CorpusFormat::Tsv, HierarchyPolicy::DropWithWarning).unwrap();
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn tsv_malformed_row_names_line() {
        let f = tmp("id\ttext\toffensive\thate\tcategory\na\tok\t0\t0\tnone\nb\tx\t2\t0\tnone\n", ".tsv");
        let err = load_corpus(f.path(), CorpusFormat::Tsv, HierarchyPolicy::Reject).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
        let f = tmp("id\ttext\na\tok\na\tdup\n", ".tsv");
        assert!(load_corpus(f.path(), CorpusFormat::Tsv, HierarchyPolicy::Reject).is_err());
    }

    #[test]
    fn jsonl_rows() {
        let f = tmp("{\"id\":\"x\",\"text\":\"@u hi\"}\n{\"id\":7,\"text\":\"y\",\"offensive\":1,\"hate\":0,\"category\":\"none\"}\n", ".jsonl");
        let c = load_corpus(f.path(), CorpusFormat::Jsonl, HierarchyPolicy::Reject).unwrap();
        assert_eq!(c.samples()[0].text, "@USER hi");
        assert_eq!(c.samples()[0].gold, None);
        assert_eq!(c.samples()[1].id, "7");
        assert!(c.samples()[1].gold.unwrap().offensive);
        let f = tmp("{\"id\":\"x\"\n", ".jsonl");
        assert!(matches!(
            load_corpus(f.path(), CorpusFormat::Jsonl, HierarchyPolicy::Reject),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    fn labeled(n: usize, gold: LabelTriple, prefix: &str) -> Vec<Sample> {
        (0..n).map(|i| Sample::new(format!("{prefix}{i}"), "t", Some(gold))).collect()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let c = Corpus::new(labeled(10, LabelTriple::CLEAN, "s"), SplitTag::Unsplit).unwrap();
        let (a, b, t) = split_corpus(&c, SplitFractions::default(), 1, SplitStrategy::Stratified).unwrap();
        assert_eq!((a.len(), b.len(), t.len()), (7, 1, 2));
        let again = split_corpus(&c, SplitFractions::default(), 1, SplitStrategy::Stratified).unwrap();
        assert_eq!((a, b, t), again);
        let empty = Corpus::new(vec![], SplitTag::Unsplit).unwrap();
        assert!(split_corpus(&empty, SplitFractions::default(), 1, SplitStrategy::Stratified).is_err());
    }

    #[test]
    fn singleton_stratum_lands_in_train() {
        let rare = LabelTriple::new(true, true, HsCategory::Disability).unwrap();
        let mut samples = labeled(20, LabelTriple::CLEAN, "c");
        samples.extend(labeled(1, rare, "d"));
        let c = Corpus::new(samples, SplitTag::Unsplit).unwrap();
        // every seed must place it in train; enumerate a range of seeds
        for seed in 0..50 {
            let (train, dev, test) = split_corpus(&c, SplitFractions::default(), seed, SplitStrategy::Stratified).unwrap();
            assert!(train.samples().iter().any(|s| s.id == "d0"));
            assert!(!dev.samples().iter().chain(test.samples()).any(|s| s.id == "d0"));
        }
    }

    #[test]
    fn rare_strata_reach_every_split() {
        assert_eq!(allocate(3, &SplitFractions::default()), [1, 1, 1]);
        assert_eq!(allocate(1, &SplitFractions::default()), [1, 0, 0]);
        assert_eq!(allocate(10, &SplitFractions::default()), [7, 1, 2]);
        for n in 3..200 {
            let sizes = allocate(n, &SplitFractions::default());
            assert_eq!(sizes.iter().sum::<usize>(), n);
            assert!(sizes.iter().all(|&s| s >= 1));
            if n >= 10 {
                let exact = [0.7 * n as f64, 0.1 * n as f64, 0.2 * n as f64];
                for (s, e) in sizes.iter().zip(exact) {
                    assert!((*s as f64 - e).abs() <= 1.0, "n={n} {sizes:?}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n_clean in 0usize..40, n_off in 0usize..20, n_hs in 1usize..20, seed in 0u64..1000) {
            let hs = LabelTriple::new(true, true, HsCategory::Gender).unwrap();
            let off = LabelTriple::new(true, false, HsCategory::None).unwrap();
            let mut samples = labeled(n_clean, LabelTriple::CLEAN, "c");
            samples.extend(labeled(n_off, off, "o"));
            samples.extend(labeled(n_hs, hs, "h"));
            let c = Corpus::new(samples, SplitTag::Unsplit).unwrap();
            let (a, b, t) = split_corpus(&c, SplitFractions::default(), seed, SplitStrategy::Stratified).unwrap();
            let mut ids: Vec<&str> = a.samples().iter().chain(b.samples()).chain(t.samples()).map(|s| s.id.as_str()).collect();
            prop_assert_eq!(ids.len(), c.len());
            ids.sort();
            ids.dedup();
            prop_assert_eq!(ids.len(), c.len());
        }
    }

    #[test]
    fn stats_single_clean_sample() {
        let c = Corpus::new(labeled(1, LabelTriple::CLEAN, "a"), SplitTag::Unsplit).unwrap();
        let s = compute_stats(&c).unwrap();
        assert_eq!(s.clean.percent, 100.0);
        assert_eq!(s.offensive.percent, 0.0);
        assert!(s.categories.iter().all(|(_, c)| c.percent == 0.0));
        let unlabeled = Corpus::new(vec![Sample::new("u", "x", None)], SplitTag::Unsplit).unwrap();
        assert!(compute_stats(&unlabeled).is_err());
    }

    #[test]
    fn stats_percentages_sum() {
        let s = ClassStats::from_counts(8235, 4463, 1339, [0, 641, 366, 190, 101, 38, 3]).unwrap();
        assert_eq!(s.total, 12698);
        assert!((s.clean.percent + s.offensive.percent - 100.0).abs() < 0.01);
        assert!((s.offensive.percent - 35.15).abs() < 0.005);
        assert!((s.hate.percent - 10.54).abs() < 0.005);
    }
}
