use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result, SnapshotError};
use crate::observation::OBS_LAYOUT_VERSION;
use crate::policy::{load_snapshot, save_snapshot, Snapshot};
use crate::sim::AgentKind;

pub const INDEX_FILE: &str = "index.txt";

#[derive(Debug, Clone)]
pub struct ZooEntry {
    pub tag: AgentKind,
    pub snapshot: Arc<Snapshot>,
    pub layout_version: u32,
    /// Backing file when the zoo lives on disk.
    pub path: Option<PathBuf>,
}

/// Append-only collection of frozen policy snapshots, keyed by stage tag.
///
/// On disk: one `<TAG>.zmp` file per entry and an `index.txt` listing
/// `tag file layout_version` lines in registration order.
#[derive(Debug, Clone, Default)]
pub struct AgentZoo {
    entries: Vec<ZooEntry>,
    dir: Option<PathBuf>,
}

impl AgentZoo {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a zoo directory and loads any indexed snapshots.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut zoo = Self { entries: Vec::new(), dir: Some(dir.clone()) };
        let index = dir.join(INDEX_FILE);
        if !index.exists() {
            return Ok(zoo);
        }
        let text = fs::read_to_string(&index)?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::parse(i + 1, format!("zoo index line {line:?}")));
            }
            let tag: AgentKind = f[0].parse()?;
            let layout: u32 = f[2].parse().map_err(|_| Error::parse(i + 1, "bad layout version"))?;
            if layout != OBS_LAYOUT_VERSION {
                return Err(SnapshotError::LayoutVersion { found: layout, expected: OBS_LAYOUT_VERSION }.into());
            }
            let path = dir.join(f[1]);
            let snap = load_snapshot(fs::File::open(&path)?)?;
            zoo.check_new(tag)?;
            zoo.entries.push(ZooEntry { tag, snapshot: Arc::new(snap), layout_version: layout, path: Some(path) });
        }
        Ok(zoo)
    }

    fn check_new(&self, tag: AgentKind) -> Result<()> {
        if !tag.is_policy() || tag == AgentKind::EgoLearner {
            return Err(Error::Config(format!("{tag} is not a zoo tag")));
        }
        if self.contains(tag) {
            return Err(Error::Config(format!("zoo already holds {tag}")));
        }
        Ok(())
    }

    /// Adds a snapshot. On disk the file is written, then read back to make
    /// sure it loads, before the index is extended.
    pub fn register(&mut self, tag: AgentKind, snapshot: Snapshot) -> Result<()> {
        self.check_new(tag)?;
        let (snapshot, path) = match &self.dir {
            None => (snapshot, None),
            Some(dir) => {
                let file = format!("{}.zmp", tag.tag());
                let path = dir.join(&file);
                {
                    let mut w = BufWriter::new(fs::File::create(&path)?);
                    save_snapshot(&snapshot.params, &snapshot.meta, &mut w)?;
                    w.flush()?;
                }
                let back = load_snapshot(fs::File::open(&path)?)?;
                let mut idx = fs::OpenOptions::new().create(true).append(true).open(dir.join(INDEX_FILE))?;
                writeln!(idx, "{} {file} {OBS_LAYOUT_VERSION}", tag.tag())?;
                (back, Some(path))
            }
        };
        self.entries.push(ZooEntry { tag, snapshot: Arc::new(snapshot), layout_version: OBS_LAYOUT_VERSION, path });
        Ok(())
    }

    pub fn get(&self, tag: AgentKind) -> Option<&ZooEntry> {
        self.entries.iter().find(|e| e.tag == tag)
    }

    pub fn contains(&self, tag: AgentKind) -> bool {
        self.get(tag).is_some()
    }

    /// Tags in registration order.
    pub fn tags(&self) -> Vec<AgentKind> {
        self.entries.iter().map(|e| e.tag).collect()
    }

    pub fn entries(&self) -> &[ZooEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }
}
