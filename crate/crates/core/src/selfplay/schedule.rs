use std::fmt;
use std::str::FromStr;

use super::PopulationSpec;
use crate::error::{Error, Result};
use crate::sim::AgentKind;

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    /// Tag of the snapshot emitted at the end of the stage. Agents of this
    /// kind in the stage's population run the live learner parameters.
    pub tag: AgentKind,
    pub population: PopulationSpec,
    pub updates: u64,
}

/// Ordered training stages, written one per line as
/// `stage tag=<T> pop=IDM:p,RL:p,SP1:p,SP2:p updates=<I>`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSchedule {
    pub stages: Vec<Stage>,
}

pub const DEFAULT_SCHEDULE: &str = include_str!("../../assets/default.schedule");

impl StageSchedule {
    pub fn new(stages: Vec<Stage>) -> Result<Self> {
        let s = Self { stages };
        s.validate(&[])?;
        Ok(s)
    }

    /// The shipped three-stage schedule.
    pub fn default_desk() -> Self {
        DEFAULT_SCHEDULE.parse().expect("shipped schedule is valid")
    }

    /// Same stages with every update budget replaced.
    pub fn with_updates(mut self, updates: u64) -> Self {
        for s in &mut self.stages {
            s.updates = updates;
        }
        self
    }

    /// Each stage may only draw from IDM, its own live tag, tags emitted by
    /// earlier stages, or tags already in the zoo (`existing`). Emitted tags
    /// must be new.
    pub fn validate(&self, existing: &[AgentKind]) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("schedule has no stages".into()));
        }
        let mut known: Vec<AgentKind> = existing.to_vec();
        for (i, st) in self.stages.iter().enumerate() {
            if !AgentKind::POPULATION.contains(&st.tag) || st.tag == AgentKind::Idm {
                return Err(Error::Config(format!("stage {}: {} cannot be emitted", i + 1, st.tag)));
            }
            if known.contains(&st.tag) {
                return Err(Error::Config(format!("stage {}: tag {} already exists", i + 1, st.tag)));
            }
            for k in st.population.active_kinds() {
                if k != AgentKind::Idm && k != st.tag && !known.contains(&k) {
                    return Err(Error::Config(format!("stage {}: population uses {k} before it exists", i + 1)));
                }
            }
            known.push(st.tag);
        }
        Ok(())
    }

    pub fn total_updates(&self) -> u64 {
        self.stages.iter().map(|s| s.updates).sum()
    }
}

impl FromStr for StageSchedule {
    type Err = Error;

    fn from_str(src: &str) -> Result<Self> {
        let mut stages = Vec::new();
        for (i, raw) in src.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut words = line.split_whitespace();
            if words.next() != Some("stage") {
                return Err(Error::parse(i + 1, "expected a `stage` line"));
            }
            let (mut tag, mut pop, mut updates) = (None, None, None);
            for w in words {
                let (k, v) = w.split_once('=').ok_or_else(|| Error::parse(i + 1, format!("expected key=value, got {w:?}")))?;
                let prior = match k {
                    "tag" => tag.replace(v.parse::<AgentKind>().map_err(|e| Error::parse(i + 1, e.to_string()))?).is_some(),
                    "pop" => pop.replace(v.parse::<PopulationSpec>().map_err(|e| Error::parse(i + 1, e.to_string()))?).is_some(),
                    "updates" => updates.replace(v.parse::<u64>().map_err(|_| Error::parse(i + 1, format!("bad update count {v:?}")))?).is_some(),
                    _ => return Err(Error::parse(i + 1, format!("unknown key {k:?}"))),
                };
                if prior {
                    return Err(Error::parse(i + 1, format!("{k} given twice")));
                }
            }
            let missing = |what: &str| Error::parse(i + 1, format!("stage lacks {what}"));
            stages.push(Stage {
                tag: tag.ok_or_else(|| missing("tag"))?,
                population: pop.ok_or_else(|| missing("pop"))?,
                updates: updates.ok_or_else(|| missing("updates"))?,
            });
        }
        Self::new(stages)
    }
}

impl fmt::Display for StageSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.stages {
            writeln!(f, "stage tag={} pop={} updates={}", s.tag, s.population, s.updates)?;
        }
        Ok(())
    }
}
