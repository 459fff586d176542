use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const INDEX: &str = "index.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes through a temporary sibling and a rename, so readers never see
/// a half-written file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandState {
    pub status: Status,
    /// Stages finished before the command ended.
    pub stages: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub version: String,
    pub commands: BTreeMap<String, CommandState>,
    pub artifacts: Vec<ArtifactEntry>,
}

/// One run directory, named by the content hash of its inputs. Every write
/// is recorded with its digest and the manifest is rewritten after each
/// stage, so an aborted command leaves an accurate record behind.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    manifest: Manifest,
    command: String,
}

impl RunDir {
    /// Opens (or creates) `out/<run_id>` for `command`, keeping artifacts
    /// recorded by earlier commands on the same inputs.
    pub fn open(out: &Path, run_id: &str, command: &str) -> Result<Self, CliError> {
        let root = out.join(run_id);
        fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        let mut manifest = match fs::read_to_string(root.join(MANIFEST)) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| CliError::Config(format!("corrupt manifest: {e}")))?,
            Err(_) => Manifest {
                run_id: run_id.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                commands: BTreeMap::new(),
                artifacts: Vec::new(),
            },
        };
        manifest.commands.insert(
            command.to_string(),
            CommandState {
                status: Status::Running,
                stages: Vec::new(),
                error: None,
            },
        );
        let dir = Self {
            root,
            manifest,
            command: command.to_string(),
        };
        dir.save_manifest()?;
        Ok(dir)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_id(&self) -> &str {
        &self.manifest.run_id
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn write(&mut self, rel: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.root.join(rel);
        write_atomic(&path, contents.as_bytes())?;
        let entry = ArtifactEntry {
            path: rel.to_string(),
            sha256: sha256_hex(contents.as_bytes()),
            bytes: contents.len(),
        };
        match self.manifest.artifacts.binary_search_by(|a| a.path.as_str().cmp(rel)) {
            Ok(i) => self.manifest.artifacts[i] = entry,
            Err(i) => self.manifest.artifacts.insert(i, entry),
        }
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("artifact types serialize");
        text.push('\n');
        self.write(rel, &text)
    }

    pub fn stage_done(&mut self, stage: &str) -> Result<(), CliError> {
        self.state().stages.push(stage.to_string());
        self.save_manifest()
    }

    pub fn finish(mut self, outcome: Result<(), &CliError>) -> Result<Manifest, CliError> {
        let state = self.state();
        match outcome {
            Ok(()) => state.status = Status::Complete,
            Err(e) => {
                state.status = Status::Failed;
                state.error = Some(e.to_string());
            }
        }
        self.save_manifest()?;
        Ok(self.manifest)
    }

    fn state(&mut self) -> &mut CommandState {
        self.manifest.commands.get_mut(&self.command).expect("inserted on open")
    }

    fn save_manifest(&self) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        write_atomic(&self.root.join(MANIFEST), text.as_bytes())
    }
}

/// A run as listed in `index.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub data: String,
    pub families: Vec<String>,
    pub status: Status,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunIndex {
    pub runs: Vec<IndexEntry>,
}

static INDEX_LOCK: Mutex<()> = Mutex::new(());

impl RunIndex {
    pub fn load(out: &Path) -> Result<Self, CliError> {
        match fs::read_to_string(out.join(INDEX)) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| CliError::Config(format!("corrupt run index: {e}"))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(CliError::io(&out.join(INDEX), e)),
        }
    }

    /// Inserts or replaces the entry for `entry.id`, keeping ids sorted.
    pub fn upsert(out: &Path, entry: IndexEntry) -> Result<(), CliError> {
        let _guard = INDEX_LOCK.lock().unwrap_or_else(|p| p.into_inner());
        let mut index = Self::load(out)?;
        match index.runs.binary_search_by(|r| r.id.cmp(&entry.id)) {
            Ok(i) => index.runs[i] = entry,
            Err(i) => index.runs.insert(i, entry),
        }
        let mut text = serde_json::to_string_pretty(&index).expect("index serializes");
        text.push('\n');
        write_atomic(&out.join(INDEX), text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_abc() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_tracks_artifacts_and_failure() {
        let tmp = tempfile::tempdir().unwrap();
        let mut d = RunDir::open(tmp.path(), "abc", "pipeline").unwrap();
        d.write("b/x.csv", "1\n").unwrap();
        d.write("a.csv", "2\n").unwrap();
        d.write("b/x.csv", "3\n").unwrap();
        d.stage_done("tune").unwrap();
        let m = d.finish(Err(&CliError::Config("boom".into()))).unwrap();
        assert_eq!(m.artifacts.iter().map(|a| a.path.as_str()).collect::<Vec<_>>(), ["a.csv", "b/x.csv"]);
        assert_eq!(m.artifacts[1].sha256, sha256_hex(b"3\n"));
        let state = &m.commands["pipeline"];
        assert_eq!(state.status, Status::Failed);
        assert_eq!(state.stages, ["tune"]);
        assert!(state.error.as_deref().unwrap().contains("boom"));
        let reopened = RunDir::open(tmp.path(), "abc", "converge").unwrap();
        assert_eq!(reopened.manifest().artifacts.len(), 2);
        assert_eq!(reopened.manifest().commands["pipeline"].status, Status::Failed);
    }

    #[test]
    fn index_upserts_sorted() {
        let tmp = tempfile::tempdir().unwrap();
        let e = |id: &str, status| IndexEntry {
            id: id.into(),
            data: "synthetic".into(),
            families: vec!["lstm".into()],
            status,
        };
        RunIndex::upsert(tmp.path(), e("b", Status::Running)).unwrap();
        RunIndex::upsert(tmp.path(), e("a", Status::Complete)).unwrap();
        RunIndex::upsert(tmp.path(), e("b", Status::Complete)).unwrap();
        let idx = RunIndex::load(tmp.path()).unwrap();
        assert_eq!(idx.runs.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(idx.runs[1].status, Status::Complete);
    }
}
