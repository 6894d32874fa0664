//! NDJSON record store keyed by repository, plus the ingest manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use prmerge_core::pr::{PullRequestRecord, Timestamp};
use serde::{Deserialize, Serialize};

use super::api::RepoRef;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// What to do when an incoming record shares a `pr_id` with a stored one
/// but differs from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Conflict {
    #[default]
    Reject,
    Replace,
}

/// Per-repository ingest progress.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoState {
    pub owner: String,
    pub name: String,
    #[serde(default)]
    pub packages: Vec<String>,
    /// Latest `created_at` among stored records.
    pub fetched_through: Option<Timestamp>,
    /// Next issue page to fetch, absent once the listing is exhausted.
    pub page_cursor: Option<u32>,
    pub complete: bool,
    pub records: u64,
}

impl RepoState {
    pub fn repo(&self) -> RepoRef {
        RepoRef {
            owner: self.owner.clone(),
            name: self.name.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestManifest {
    pub version: u32,
    pub repos: Vec<RepoState>,
}

impl Default for IngestManifest {
    fn default() -> Self {
        Self {
            version: MANIFEST_VERSION,
            repos: Vec::new(),
        }
    }
}

impl IngestManifest {
    pub fn get(&self, repo: &RepoRef) -> Option<&RepoState> {
        self.repos.iter().find(|r| r.owner == repo.owner && r.name == repo.name)
    }

    /// Entry for `repo`, created if absent; the list stays sorted.
    pub fn entry(&mut self, repo: &RepoRef) -> &mut RepoState {
        let pos = match self
            .repos
            .binary_search_by(|r| (r.owner.as_str(), r.name.as_str()).cmp(&(repo.owner.as_str(), repo.name.as_str())))
        {
            Ok(i) => i,
            Err(i) => {
                self.repos.insert(
                    i,
                    RepoState {
                        owner: repo.owner.clone(),
                        name: repo.name.clone(),
                        packages: Vec::new(),
                        fetched_through: None,
                        page_cursor: Some(1),
                        complete: false,
                        records: 0,
                    },
                );
                i
            }
        };
        &mut self.repos[pos]
    }
}

/// Directory of `<owner>__<name>.ndjson` files. One writer at a time per
/// store; any number of readers.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    write: Mutex<()>,
}

impl Store {
    /// Opens the store, creating the directory if needed.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self {
            root,
            write: Mutex::new(()),
        })
    }

    /// Opens an existing store for reading.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if !root.is_dir() {
            return Err(Error::MissingArtifact(root));
        }
        Ok(Self {
            root,
            write: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn repo_path(&self, repo: &RepoRef) -> PathBuf {
        self.root.join(format!("{}.ndjson", repo.file_stem()))
    }

    pub fn read_repo(&self, repo: &RepoRef) -> Result<Vec<PullRequestRecord>> {
        let path = self.repo_path(repo);
        if !path.exists() {
            return Ok(Vec::new());
        }
        read_ndjson(&path)
    }

    /// Every record in the store, file by file in name order.
    pub fn read_all(&self) -> Result<Vec<PullRequestRecord>> {
        let mut out = Vec::new();
        for path in self.repo_files()? {
            out.extend(read_ndjson(&path)?);
        }
        Ok(out)
    }

    pub fn repo_files(&self) -> Result<Vec<PathBuf>> {
        let mut files: Vec<PathBuf> = fs::read_dir(&self.root)
            .map_err(|e| Error::io(&self.root, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
            .collect();
        files.sort();
        Ok(files)
    }

    /// Merges records into their repository files. Returns how many records
    /// were new or changed.
    pub fn persist(&self, records: &[PullRequestRecord], conflict: Conflict) -> Result<usize> {
        let mut by_repo: BTreeMap<RepoRef, Vec<&PullRequestRecord>> = BTreeMap::new();
        for r in records {
            let repo = RepoRef::parse(&r.repo_id)
                .map_err(|_| Error::Integrity(format!("{}: repo_id `{}` is not owner/name", r.pr_id, r.repo_id)))?;
            by_repo.entry(repo).or_default().push(r);
        }
        let _guard = self.write.lock().expect("store lock poisoned");
        let mut written = 0;
        for (repo, incoming) in by_repo {
            let mut current: BTreeMap<String, PullRequestRecord> = self
                .read_repo(&repo)?
                .into_iter()
                .map(|r| (r.pr_id.clone(), r))
                .collect();
            let mut changed = 0;
            for r in incoming {
                r.validate()?;
                match current.get(&r.pr_id) {
                    Some(old) if old == r => {}
                    Some(_) if conflict == Conflict::Reject => {
                        return Err(Error::Integrity(format!("conflicting payloads for {}", r.pr_id)));
                    }
                    _ => {
                        current.insert(r.pr_id.clone(), r.clone());
                        changed += 1;
                    }
                }
            }
            if changed > 0 {
                let mut rows: Vec<PullRequestRecord> = current.into_values().collect();
                rows.sort_by(|a, b| (a.created_at, &a.pr_id).cmp(&(b.created_at, &b.pr_id)));
                write_ndjson(&self.repo_path(&repo), &rows)?;
                written += changed;
            }
        }
        Ok(written)
    }

    pub fn load_manifest(&self) -> Result<IngestManifest> {
        let path = self.root.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(IngestManifest::default());
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: IngestManifest = serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::SchemaMismatch(format!("manifest version {}", m.version)));
        }
        Ok(m)
    }

    pub fn save_manifest(&self, manifest: &IngestManifest) -> Result<()> {
        let _guard = self.write.lock().expect("store lock poisoned");
        let path = self.root.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(manifest).map_err(|e| Error::json("manifest", e))?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())
    }
}

/// Parses one record per line; blank lines are skipped.
pub fn read_ndjson(path: &Path) -> Result<Vec<PullRequestRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_ndjson(path: &Path, records: &[PullRequestRecord]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).map_err(|e| Error::json("record", e))?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
