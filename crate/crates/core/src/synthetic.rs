//! Keyword-driven toy corpus generator.
//!
//! Labels are drawn first and text is generated from them: offensive posts
//! contain an insult word, hate posts additionally name a target from their
//! category's keyword pool, and every post is padded with neutral filler.
//! Mentions, URLs and line breaks are sprinkled in so normalization is
//! exercised. All words are invented.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Sample, SplitTag};
use crate::error::{Error, Result};
use crate::labels::{HsCategory, LabelTriple};

const FILLER: &[&str] = &[
    "today", "weather", "coffee", "match", "game", "people", "friend", "city", "morning", "news", "music", "story",
    "market", "train", "school", "dinner", "holiday", "phone", "street", "garden", "movie", "season", "team",
    "weekend", "river", "bridge", "window", "letter", "paper", "winter", "summer", "road", "party", "office",
    "lunch", "happy", "really", "think", "going", "look",
];

const INSULTS: &[&str] = &["grobnak", "vilesnot", "krudgel", "muckwit", "dregface", "snarfle"];

fn category_words(c: HsCategory) -> &'static [&'static str] {
    match c {
        HsCategory::None => &[],
        HsCategory::Gender => &["femrix", "gendral", "wombar", "manlex"],
        HsCategory::Race => &["ethnarg", "raczen", "tribol", "skinvar"],
        HsCategory::Ideology => &["partisk", "doctrel", "votrix", "leftrum"],
        HsCategory::SocialClass => &["poorvex", "classim", "slumdar", "richlo"],
        HsCategory::Religion => &["fathex", "templor", "creedix", "prayven"],
        HsCategory::Disability => &["limpraz", "crutchel", "illvor", "deafmo"],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub samples: usize,
    pub seed: u64,
    pub clean_weight: f64,
    pub offensive_weight: f64,
    /// Weight of each of the six hate categories.
    pub hate_weight: f64,
    pub min_filler: usize,
    pub max_filler: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            samples: 2000,
            seed: 0,
            clean_weight: 0.45,
            offensive_weight: 0.2,
            hate_weight: 0.35 / 6.0,
            min_filler: 4,
            max_filler: 10,
        }
    }
}

fn class_label(k: usize) -> LabelTriple {
    match k {
        0 => LabelTriple::CLEAN,
        1 => LabelTriple {
            offensive: true,
            hate: false,
            category: HsCategory::None,
        },
        k => LabelTriple {
            offensive: true,
            hate: true,
            category: HsCategory::from_index(k - 1).expect("k in 2..8"),
        },
    }
}

fn draw_labels(cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let mut weights = vec![cfg.clean_weight, cfg.offensive_weight];
    weights.extend([cfg.hate_weight; 6]);
    let dist = WeightedIndex::new(&weights).map_err(|e| Error::Config(vec![format!("synthetic weights: {e}")]))?;
    let mut classes: Vec<usize> = (0..cfg.samples).map(|_| dist.sample(rng)).collect();
    if cfg.samples >= weights.len() && weights.iter().all(|&w| w > 0.0) {
        // every class appears at least once: overwrite samples of classes
        // that have spares
        let mut counts = vec![0usize; weights.len()];
        classes.iter().for_each(|&k| counts[k] += 1);
        for missing in 0..weights.len() {
            if counts[missing] > 0 {
                continue;
            }
            let slot = classes.iter().position(|&k| counts[k] > 1).expect("pigeonhole");
            counts[classes[slot]] -= 1;
            counts[missing] += 1;
            classes[slot] = missing;
        }
    }
    Ok(classes)
}

fn render(label: &LabelTriple, cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(cfg.min_filler..=cfg.max_filler);
    let mut words: Vec<String> = (0..n).map(|_| FILLER.choose(rng).unwrap().to_string()).collect();
    let insert = |w: &str, rng: &mut ChaCha8Rng, words: &mut Vec<String>| {
        let at = rng.random_range(0..=words.len());
        words.insert(at, w.to_string());
    };
    if label.offensive {
        for _ in 0..rng.random_range(1..=2) {
            insert(INSULTS.choose(rng).unwrap(), rng, &mut words);
        }
    }
    if label.hate {
        let pool = category_words(label.category);
        for _ in 0..rng.random_range(1..=2) {
            insert(pool.choose(rng).unwrap(), rng, &mut words);
        }
    }
    if rng.random_bool(0.4) {
        for _ in 0..rng.random_range(1..=3) {
            words.insert(0, format!("@user{}", rng.random_range(0..500)));
        }
    }
    if rng.random_bool(0.2) {
        words.push(format!("https://example.org/{}", rng.random_range(0..10_000)));
    }
    if rng.random_bool(0.15) {
        let at = rng.random_range(1..=words.len());
        words.insert(at, "\n".into());
    }
    words.join(" ")
}

/// Generates a labeled corpus with ids `s00000`, `s00001`, ...
pub fn generate(cfg: &SyntheticConfig) -> Result<Corpus> {
    if cfg.samples == 0 {
        return Err(Error::Empty("synthetic corpus size is zero"));
    }
    if cfg.min_filler > cfg.max_filler {
        return Err(Error::Config(vec!["synthetic min_filler exceeds max_filler".into()]));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let classes = draw_labels(cfg, &mut rng)?;
    let samples = classes
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let label = class_label(k);
            Sample::new(format!("s{i:05}"), render(&label, cfg, &mut rng), Some(label))
        })
        .collect();
    Corpus::new(samples, SplitTag::Unsplit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_classes_and_hierarchy() {
        let c = generate(&SyntheticConfig::default()).unwrap();
        assert_eq!(c.len(), 2000);
        let golds = c.golds().unwrap();
        for cat in HsCategory::ALL {
            assert!(golds.iter().any(|g| g.category == cat), "{cat:?} missing");
        }
        assert!(golds.iter().all(|g| g.validate().is_ok()));
        assert!(c.samples().iter().any(|s| s.text.contains("@USER")));
        assert!(c.samples().iter().any(|s| s.text.contains("<LF>")));
        assert!(c.samples().iter().any(|s| s.text.contains("URL")));
    }

    #[test]
    fn deterministic() {
        let cfg = SyntheticConfig {
            samples: 50,
            ..SyntheticConfig::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.samples(), b.samples());
    }

    #[test]
    fn tiny_corpus_still_has_every_class() {
        let cfg = SyntheticConfig {
            samples: 8,
            ..SyntheticConfig::default()
        };
        let golds = generate(&cfg).unwrap().golds().unwrap();
        for cat in HsCategory::ALL {
            assert!(golds.iter().any(|g| g.category == cat));
        }
    }
}
