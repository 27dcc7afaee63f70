//! Label space shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fine-grained hate-speech category. `None` means "not hate speech".
///
/// The declaration order is the canonical class order: it fixes the index
/// of each class in the HSC probability vector and breaks every tie.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HsCategory {
    None,
    Gender,
    Race,
    Ideology,
    SocialClass,
    Religion,
    Disability,
}

impl HsCategory {
    pub const COUNT: usize = 7;

    pub const ALL: [HsCategory; 7] = [
        HsCategory::None,
        HsCategory::Gender,
        HsCategory::Race,
        HsCategory::Ideology,
        HsCategory::SocialClass,
        HsCategory::Religion,
        HsCategory::Disability,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn is_hate(self) -> bool {
        self != HsCategory::None
    }

    pub fn as_str(self) -> &'static str {
        match self {
            HsCategory::None => "none",
            HsCategory::Gender => "gender",
            HsCategory::Race => "race",
            HsCategory::Ideology => "ideology",
            HsCategory::SocialClass => "social_class",
            HsCategory::Religion => "religion",
            HsCategory::Disability => "disability",
        }
    }

    /// Human-readable name used in the statistics table.
    pub fn display_name(self) -> &'static str {
        match self {
            HsCategory::None => "Not HS",
            HsCategory::Gender => "Gender",
            HsCategory::Race => "Race",
            HsCategory::Ideology => "Ideology",
            HsCategory::SocialClass => "Social Class",
            HsCategory::Religion => "Religion",
            HsCategory::Disability => "Disability",
        }
    }
}

impl fmt::Display for HsCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HsCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        HsCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == key)
            .ok_or_else(|| Error::Label(format!("unknown category `{s}`")))
    }
}

/// Gold or predicted labels for the three subtasks.
///
/// Invariants: `hate ⇒ offensive` and `category ≠ None ⇔ hate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelTriple {
    pub offensive: bool,
    pub hate: bool,
    pub category: HsCategory,
}

impl LabelTriple {
    pub fn new(offensive: bool, hate: bool, category: HsCategory) -> Result<Self> {
        let triple = LabelTriple {
            offensive,
            hate,
            category,
        };
        triple.validate()?;
        Ok(triple)
    }

    pub const CLEAN: LabelTriple = LabelTriple {
        offensive: false,
        hate: false,
        category: HsCategory::None,
    };

    pub fn validate(&self) -> Result<()> {
        if self.hate && !self.offensive {
            return Err(Error::Label("hate=1 requires offensive=1".into()));
        }
        if self.category.is_hate() != self.hate {
            return Err(Error::Label(format!(
                "category `{}` inconsistent with hate={}",
                self.category, self.hate as u8
            )));
        }
        Ok(())
    }

    /// Gold class index for a subtask head.
    pub fn class_of(&self, task: Task) -> usize {
        match task {
            Task::Offd => self.offensive as usize,
            Task::Hsd => self.hate as usize,
            Task::Hsc => self.category.index(),
        }
    }
}

/// One of the three subtasks, each served by its own classification head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Offd,
    Hsd,
    Hsc,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Offd, Task::Hsd, Task::Hsc];

    pub fn num_classes(self) -> usize {
        match self {
            Task::Offd | Task::Hsd => 2,
            Task::Hsc => HsCategory::COUNT,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Offd => "offd",
            Task::Hsd => "hsd",
            Task::Hsc => "hsc",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Task::Offd => "OFFD",
            Task::Hsd => "HSD",
            Task::Hsc => "HSC",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "offd" => Ok(Task::Offd),
            "hsd" => Ok(Task::Hsd),
            "hsc" => Ok(Task::Hsc),
            _ => Err(Error::Label(format!("unknown task `{s}`"))),
        }
    }
}

/// Which heads contribute to the loss (and receive updates). Serialized as
/// a list of task names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<Task>", into = "Vec<Task>")]
pub struct TaskMask {
    pub offd: bool,
    pub hsd: bool,
    pub hsc: bool,
}

impl Default for TaskMask {
    fn default() -> Self {
        TaskMask::ALL
    }
}

impl TaskMask {
    pub const ALL: TaskMask = TaskMask {
        offd: true,
        hsd: true,
        hsc: true,
    };

    pub fn only(task: Task) -> Self {
        let mut mask = TaskMask {
            offd: false,
            hsd: false,
            hsc: false,
        };
        mask.set(task, true);
        mask
    }

    pub fn contains(&self, task: Task) -> bool {
        match task {
            Task::Offd => self.offd,
            Task::Hsd => self.hsd,
            Task::Hsc => self.hsc,
        }
    }

    pub fn set(&mut self, task: Task, on: bool) {
        match task {
            Task::Offd => self.offd = on,
            Task::Hsd => self.hsd = on,
            Task::Hsc => self.hsc = on,
        }
    }

    pub fn tasks(&self) -> impl Iterator<Item = Task> + '_ {
        Task::ALL.into_iter().filter(|t| self.contains(*t))
    }

    pub fn is_empty(&self) -> bool {
        !(self.offd || self.hsd || self.hsc)
    }

    /// Parses a comma-separated list such as `offd,hsc`.
    pub fn parse_list(s: &str) -> Result<Self> {
        let mut mask = TaskMask {
            offd: false,
            hsd: false,
            hsc: false,
        };
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            if part.trim().eq_ignore_ascii_case("all") {
                return Ok(TaskMask::ALL);
            }
            mask.set(part.parse()?, true);
        }
        if mask.is_empty() {
            return Err(Error::Label("task mask selects no task".into()));
        }
        Ok(mask)
    }
}

impl From<Vec<Task>> for TaskMask {
    fn from(tasks: Vec<Task>) -> Self {
        let mut mask = TaskMask {
            offd: false,
            hsd: false,
            hsc: false,
        };
        for t in tasks {
            mask.set(t, true);
        }
        mask
    }
}

impl From<TaskMask> for Vec<Task> {
    fn from(mask: TaskMask) -> Self {
        mask.tasks().collect()
    }
}

impl fmt::Display for TaskMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.tasks().map(|t| t.as_str()).collect();
        f.write_str(&names.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_mask_serializes_as_list() {
        let mask = TaskMask::parse_list("hsc,offd").unwrap();
        let json = serde_json::to_string(&mask).unwrap();
        assert_eq!(json, r#"["offd","hsc"]"#);
        assert_eq!(serde_json::from_str::<TaskMask>(&json).unwrap(), mask);
        assert_eq!(mask.to_string(), "offd,hsc");
    }

    #[test]
    fn category_order_is_canonical() {
        for (i, c) in HsCategory::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(HsCategory::from_index(i), Some(*c));
            assert_eq!(c.as_str().parse::<HsCategory>().unwrap(), *c);
        }
        assert_eq!(HsCategory::from_index(7), None);
    }

    #[test]
    fn hierarchy_invariant() {
        assert!(LabelTriple::new(false, true, HsCategory::None).is_err());
        assert!(LabelTriple::new(true, true, HsCategory::None).is_err());
        assert!(LabelTriple::new(true, false, HsCategory::Race).is_err());
        assert!(LabelTriple::new(true, true, HsCategory::Race).is_ok());
        assert!(LabelTriple::new(true, false, HsCategory::None).is_ok());
        assert!(LabelTriple::CLEAN.validate().is_ok());
    }

    #[test]
    fn task_mask_parsing() {
        assert_eq!(TaskMask::parse_list("offd").unwrap(), TaskMask::only(Task::Offd));
        assert_eq!(TaskMask::parse_list("all").unwrap(), TaskMask::ALL);
        let m = TaskMask::parse_list("hsd, hsc").unwrap();
        assert!(!m.offd && m.hsd && m.hsc);
        assert!(TaskMask::parse_list("").is_err());
        assert!(TaskMask::parse_list("sentiment").is_err());
    }
}
