//! Author activity across version-control projects, queried as of a point in
//! time.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::pr::Timestamp;

/// One commit by an author in some project.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct AuthorActivityEvent {
    pub author_id: String,
    pub timestamp: Timestamp,
    pub project_id: String,
    /// Blobs first created by the author in this commit.
    pub blobs_authored: u64,
}

/// Aggregated activity of one author over all events strictly before `as_of`.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ActivitySnapshot {
    pub author_id: String,
    pub as_of: Timestamp,
    pub total_commits: u64,
    pub total_blobs: u64,
    pub total_projects: u64,
}

/// Source of point-in-time author activity.
pub trait ActivityProvider {
    fn snapshot(&self, author_id: &str, as_of: Timestamp) -> ActivitySnapshot;
}

#[derive(Debug, Clone, Default)]
struct AuthorHistory {
    timestamps: Vec<Timestamp>,
    // prefix sums, one longer than `timestamps`
    blobs: Vec<u64>,
    projects: Vec<u64>,
}

/// Immutable event store indexed by author and sorted by time.
#[derive(Debug, Clone, Default)]
pub struct ActivityStore {
    authors: BTreeMap<String, AuthorHistory>,
    n_events: usize,
}

impl ActivityStore {
    pub fn new(events: impl IntoIterator<Item = AuthorActivityEvent>) -> Self {
        let mut grouped: BTreeMap<String, Vec<(Timestamp, String, u64)>> = BTreeMap::new();
        let mut n_events = 0;
        for ev in events {
            n_events += 1;
            grouped
                .entry(ev.author_id)
                .or_default()
                .push((ev.timestamp, ev.project_id, ev.blobs_authored));
        }

        let authors = grouped
            .into_iter()
            .map(|(author, mut evs)| {
                evs.sort_by_key(|e| e.0);
                let mut history = AuthorHistory {
                    timestamps: Vec::with_capacity(evs.len()),
                    blobs: Vec::with_capacity(evs.len() + 1),
                    projects: Vec::with_capacity(evs.len() + 1),
                };
                history.blobs.push(0);
                history.projects.push(0);
                let mut seen = BTreeSet::new();
                let mut blobs = 0u64;
                for (ts, project, b) in &evs {
                    blobs += b;
                    seen.insert(project.as_str());
                    history.timestamps.push(*ts);
                    history.blobs.push(blobs);
                    history.projects.push(seen.len() as u64);
                }
                (author, history)
            })
            .collect();

        Self { authors, n_events }
    }

    pub fn n_authors(&self) -> usize {
        self.authors.len()
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    pub fn is_empty(&self) -> bool {
        self.n_events == 0
    }

    /// Number of events recorded for one author.
    pub fn n_events_for(&self, author_id: &str) -> usize {
        self.authors.get(author_id).map_or(0, |h| h.timestamps.len())
    }
}

impl ActivityProvider for ActivityStore {
    /// Unknown authors yield an all-zero snapshot.
    fn snapshot(&self, author_id: &str, as_of: Timestamp) -> ActivitySnapshot {
        let (commits, blobs, projects) = match self.authors.get(author_id) {
            None => (0, 0, 0),
            Some(h) => {
                let k = h.timestamps.partition_point(|&t| t < as_of);
                (k as u64, h.blobs[k], h.projects[k])
            }
        };
        ActivitySnapshot {
            author_id: String::from(author_id),
            as_of,
            total_commits: commits,
            total_blobs: blobs,
            total_projects: projects,
        }
    }
}
