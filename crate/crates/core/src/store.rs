//! Shared in-memory project store with optimistic concurrency, optionally
//! mirrored to a directory.
//!
//! Every project carries a version that increases with each committed
//! mutation. Writers name the version they read; a mismatch is rejected
//! and leaves the project untouched. Image blobs are addressed by the
//! SHA-256 of their bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::project::{from_document, to_document, write_atomic, Project, ProjectError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StoreError<E> {
    #[error("project {0:?} not found")]
    NotFound(String),
    #[error("stale version {given}, current is {current}")]
    Stale { given: u64, current: u64 },
    #[error(transparent)]
    Project(ProjectError),
    /// The mutation itself declined to proceed.
    #[error("{0}")]
    Rejected(E),
}

#[derive(Debug)]
struct Entry {
    project: Project,
    version: u64,
}

#[derive(Debug, Default)]
struct State {
    projects: BTreeMap<String, Entry>,
    blobs: BTreeMap<String, Vec<u8>>,
    next_id: u64,
}

#[derive(Debug, Default)]
pub struct ProjectStore {
    state: Mutex<State>,
    dir: Option<PathBuf>,
}

pub fn blob_id(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ProjectStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a store persisted under `dir`, loading
    /// the projects and blobs already there.
    pub fn open(dir: &Path) -> Result<Self, ProjectError> {
        let io = |e: std::io::Error| ProjectError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir.join("projects")).map_err(io)?;
        std::fs::create_dir_all(dir.join("blobs")).map_err(io)?;
        let mut state = State::default();
        for entry in std::fs::read_dir(dir.join("projects")).map_err(io)? {
            let path = entry.map_err(io)?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                let text = std::fs::read_to_string(&path).map_err(io)?;
                let project = from_document(&text)?;
                if let Some(n) = id.strip_prefix('p').and_then(|n| n.parse::<u64>().ok()) {
                    state.next_id = state.next_id.max(n);
                }
                state.projects.insert(id, Entry { project, version: 1 });
            }
        }
        for entry in std::fs::read_dir(dir.join("blobs")).map_err(io)? {
            let path = entry.map_err(io)?.path();
            if path.is_file() && !path.extension().is_some_and(|e| e == "tmp") {
                let id = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
                state.blobs.insert(id, std::fs::read(&path).map_err(io)?);
            }
        }
        Ok(Self { state: Mutex::new(state), dir: Some(dir.to_owned()) })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        // A panic while holding the lock cannot leave a half-applied
        // mutation: changes are made on a copy and swapped in whole.
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn persist(&self, id: &str, project: &Project) -> Result<(), ProjectError> {
        match &self.dir {
            Some(dir) => write_atomic(&dir.join("projects").join(format!("{id}.json")), to_document(project)?.as_bytes()),
            None => Ok(()),
        }
    }

    /// Adds a project under a fresh sequential id, returning the id and
    /// its first version.
    pub fn create(&self, project: Project) -> Result<(String, u64), ProjectError> {
        project.validate()?;
        let mut state = self.lock();
        let id = format!("p{}", state.next_id + 1);
        self.persist(&id, &project)?;
        state.next_id += 1;
        state.projects.insert(id.clone(), Entry { project, version: 1 });
        Ok((id, 1))
    }

    pub fn get(&self, id: &str) -> Option<(Project, u64)> {
        self.lock().projects.get(id).map(|e| (e.project.clone(), e.version))
    }

    /// Applies `f` to a copy of the project at version `expected` and
    /// commits the result if `f` succeeds, the outcome validates and no
    /// other write landed in the meantime. Returns `f`'s value and the new
    /// version. `f` runs without holding the store lock.
    pub fn update<R, E>(
        &self,
        id: &str,
        expected: u64,
        f: impl FnOnce(&mut Project) -> Result<R, E>,
    ) -> Result<(R, u64), StoreError<E>> {
        let mut draft = {
            let state = self.lock();
            let entry = state.projects.get(id).ok_or_else(|| StoreError::NotFound(id.to_owned()))?;
            if entry.version != expected {
                return Err(StoreError::Stale { given: expected, current: entry.version });
            }
            entry.project.clone()
        };
        let out = f(&mut draft).map_err(StoreError::Rejected)?;
        draft.validate().map_err(StoreError::Project)?;
        let mut state = self.lock();
        let entry = state.projects.get_mut(id).ok_or_else(|| StoreError::NotFound(id.to_owned()))?;
        if entry.version != expected {
            return Err(StoreError::Stale { given: expected, current: entry.version });
        }
        self.persist(id, &draft).map_err(StoreError::Project)?;
        entry.project = draft;
        entry.version += 1;
        Ok((out, entry.version))
    }

    pub fn put_blob(&self, bytes: Vec<u8>) -> Result<String, ProjectError> {
        let id = blob_id(&bytes);
        let mut state = self.lock();
        if !state.blobs.contains_key(&id) {
            if let Some(dir) = &self.dir {
                write_atomic(&dir.join("blobs").join(&id), &bytes)?;
            }
            state.blobs.insert(id.clone(), bytes);
        }
        Ok(id)
    }

    pub fn get_blob(&self, id: &str) -> Option<Vec<u8>> {
        self.lock().blobs.get(id).cloned()
    }

    pub fn has_blob(&self, id: &str) -> bool {
        self.lock().blobs.contains_key(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    #[test]
    fn stale_writes_are_rejected_without_change() {
        let store = ProjectStore::in_memory();
        let (id, v1) = store.create(Project::new("a")).unwrap();
        let (_, v2) = store
            .update::<_, Infallible>(&id, v1, |p| {
                p.name = "b".into();
                Ok(())
            })
            .unwrap();
        assert_eq!(v2, v1 + 1);
        let err = store
            .update::<_, Infallible>(&id, v1, |p| {
                p.name = "c".into();
                Ok(())
            })
            .unwrap_err();
        assert_eq!(err, StoreError::Stale { given: v1, current: v2 });
        assert_eq!(store.get(&id).unwrap(), (Project::new("b"), v2));
    }

    #[test]
    fn failed_mutations_leave_no_trace() {
        let store = ProjectStore::in_memory();
        let (id, v) = store.create(Project::new("a")).unwrap();
        let err = store.update(&id, v, |p| {
            p.name = "changed".into();
            Err::<(), _>("no")
        });
        assert_eq!(err.unwrap_err(), StoreError::Rejected("no"));
        assert_eq!(store.get(&id).unwrap(), (Project::new("a"), v));
    }

    #[test]
    fn only_one_concurrent_writer_wins() {
        let store = std::sync::Arc::new(ProjectStore::in_memory());
        let (id, v) = store.create(Project::new("a")).unwrap();
        let handles: Vec<_> = (0..8)
            .map(|i| {
                let (store, id) = (store.clone(), id.clone());
                std::thread::spawn(move || {
                    store
                        .update::<_, Infallible>(&id, v, |p| {
                            p.name = format!("w{i}");
                            Ok(())
                        })
                        .is_ok()
                })
            })
            .collect();
        let wins = handles.into_iter().map(|h| h.join().unwrap()).filter(|w| *w).count();
        assert_eq!(wins, 1);
        assert_eq!(store.get(&id).unwrap().1, v + 1);
    }

    #[test]
    fn persists_and_reopens() {
        let dir = tempfile::tempdir().unwrap();
        let store = ProjectStore::open(dir.path()).unwrap();
        let (id, _) = store.create(Project::new("kept")).unwrap();
        let blob = store.put_blob(b"pixels".to_vec()).unwrap();
        drop(store);
        let store = ProjectStore::open(dir.path()).unwrap();
        assert_eq!(store.get(&id).unwrap().0.name, "kept");
        assert_eq!(store.get_blob(&blob).unwrap(), b"pixels");
        assert_eq!(store.create(Project::new("next")).unwrap().0, "p2");
    }
}
