//! Pull-request records and the acceptance label.

use alloc::string::String;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// UTC timestamp in whole seconds.
pub type Timestamp = i64;

/// Length of the acceptance window: 30 days.
pub const WINDOW_SECS: i64 = 30 * 24 * 3600;

/// One pull request as ingested from the hosting API.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PullRequestRecord {
    pub pr_id: String,
    pub repo_id: String,
    pub author_id: String,
    pub created_at: Timestamp,
    pub closed_at: Option<Timestamp>,
    pub merged_at: Option<Timestamp>,
    pub commits: u64,
    pub changed_files: u64,
    pub additions: u64,
    pub deletions: u64,
    pub comments: u64,
    pub review_comments: u64,
}

impl PullRequestRecord {
    /// Checks the timestamp invariants of the record.
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason| Error::InvalidRecord {
            pr_id: self.pr_id.clone(),
            reason,
        };
        if let Some(closed) = self.closed_at {
            if closed < self.created_at {
                return Err(invalid("closed_at precedes created_at"));
            }
        }
        if let Some(merged) = self.merged_at {
            match self.closed_at {
                None => return Err(invalid("merged_at without closed_at")),
                Some(closed) if merged > closed => return Err(invalid("merged_at after closed_at")),
                _ => {}
            }
            if merged < self.created_at {
                return Err(invalid("merged_at precedes created_at"));
            }
        }
        Ok(())
    }

    pub fn is_open(&self) -> bool {
        self.closed_at.is_none()
    }
}

/// Binary response: merged within [`WINDOW_SECS`] of creation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Label {
    pub accepted_within_window: bool,
}

/// Acceptance label of a PR. Depends only on `created_at` and `merged_at`.
pub fn label(pr: &PullRequestRecord) -> Label {
    let accepted_within_window = pr.merged_at.is_some_and(|merged| merged - pr.created_at <= WINDOW_SECS);
    Label { accepted_within_window }
}

/// Label of a PR as decidable at collection time `as_of`.
///
/// Open PRs younger than the window have an undecidable outcome and yield
/// `None`; open PRs older than the window are labeled negative.
pub fn label_at(pr: &PullRequestRecord, as_of: Timestamp) -> Option<Label> {
    if pr.merged_at.is_some() || pr.closed_at.is_some() {
        return Some(label(pr));
    }
    if as_of - pr.created_at >= WINDOW_SECS {
        Some(Label {
            accepted_within_window: false,
        })
    } else {
        None
    }
}

/// Seconds between creation and closure (or `as_of` for open PRs), capped at
/// the acceptance window.
pub fn age_seconds(pr: &PullRequestRecord, as_of: Timestamp) -> Result<i64> {
    if as_of < pr.created_at {
        return Err(Error::ClockSkew {
            created_at: pr.created_at,
            as_of,
        });
    }
    let effective_close = pr.closed_at.unwrap_or(as_of);
    Ok((effective_close - pr.created_at).clamp(0, WINDOW_SECS))
}
