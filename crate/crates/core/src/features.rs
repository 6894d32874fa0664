//! Leak-free construction of the fourteen acceptance predictors.
//!
//! Every history-derived value for a PR `p` uses only information knowable
//! strictly before `p.created_at`: earlier submissions, merges that happened
//! before `p` was opened, and author activity before that instant. PRs created
//! at the same second do not see each other.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::activity::ActivityProvider;
use crate::pr::{self, PullRequestRecord, Timestamp, WINDOW_SECS};
use crate::{Error, Matrix, Result};

/// Version tag of the column layout.
pub const SCHEMA_VERSION: &str = "prmerge-features/1";

/// The fourteen predictors, in canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Feature {
    Age,
    Commits,
    ChangedFiles,
    Comments,
    ReviewComments,
    Additions,
    Deletions,
    CreatorTotalCommits,
    CreatorTotalBlobs,
    CreatorTotalProjects,
    RepoSubmitted,
    RepoAccepted,
    CreatorSubmitted,
    CreatorAccepted,
}

impl Feature {
    pub const ALL: [Feature; 14] = [
        Feature::Age,
        Feature::Commits,
        Feature::ChangedFiles,
        Feature::Comments,
        Feature::ReviewComments,
        Feature::Additions,
        Feature::Deletions,
        Feature::CreatorTotalCommits,
        Feature::CreatorTotalBlobs,
        Feature::CreatorTotalProjects,
        Feature::RepoSubmitted,
        Feature::RepoAccepted,
        Feature::CreatorSubmitted,
        Feature::CreatorAccepted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Age => "age",
            Feature::Commits => "commits",
            Feature::ChangedFiles => "changed_files",
            Feature::Comments => "comments",
            Feature::ReviewComments => "review_comments",
            Feature::Additions => "additions",
            Feature::Deletions => "deletions",
            Feature::CreatorTotalCommits => "creator_total_commits",
            Feature::CreatorTotalBlobs => "creator_total_blobs",
            Feature::CreatorTotalProjects => "creator_total_projects",
            Feature::RepoSubmitted => "repo_submitted",
            Feature::RepoAccepted => "repo_accepted",
            Feature::CreatorSubmitted => "creator_submitted",
            Feature::CreatorAccepted => "creator_accepted",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    /// Values that keep changing after the PR is submitted.
    pub fn is_post_submission(self) -> bool {
        matches!(self, Feature::Age | Feature::Comments | Feature::ReviewComments)
    }

    /// Acceptance fractions are stored untransformed in `[0, 1]`.
    pub fn is_fraction(self) -> bool {
        matches!(self, Feature::RepoAccepted | Feature::CreatorAccepted)
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SchemaMode {
    /// All fourteen predictors.
    Full,
    /// Predictors known at submission: drops age, comments and review comments.
    SubmissionTime,
}

impl SchemaMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemaMode::Full => "full",
            SchemaMode::SubmissionTime => "submission_time",
        }
    }
}

/// Ordered column layout for one model family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    mode: SchemaMode,
    features: Vec<Feature>,
}

impl FeatureSchema {
    pub fn new(mode: SchemaMode) -> Self {
        let features = Feature::ALL
            .into_iter()
            .filter(|f| mode == SchemaMode::Full || !f.is_post_submission())
            .collect();
        Self { mode, features }
    }

    pub fn full() -> Self {
        Self::new(SchemaMode::Full)
    }

    pub fn submission_time() -> Self {
        Self::new(SchemaMode::SubmissionTime)
    }

    /// Recognizes a schema from its column names.
    pub fn from_columns<S: AsRef<str>>(columns: &[S]) -> Result<Self> {
        for mode in [SchemaMode::Full, SchemaMode::SubmissionTime] {
            let schema = Self::new(mode);
            if schema.len() == columns.len() && schema.features.iter().zip(columns).all(|(f, c)| f.name() == c.as_ref())
            {
                return Ok(schema);
            }
        }
        Err(Error::InvalidParams(alloc::format!(
            "columns do not match a known schema ({} columns)",
            columns.len()
        )))
    }

    pub fn mode(&self) -> SchemaMode {
        self.mode
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn columns(&self) -> Vec<&'static str> {
        self.features.iter().map(|f| f.name()).collect()
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.features
            .iter()
            .position(|f| f.name() == name)
            .ok_or_else(|| Error::UnknownFeature(String::from(name)))
    }

    pub fn project(&self, p: &Predictors) -> Vec<f64> {
        self.features.iter().map(|&f| p.get(f)).collect()
    }
}

/// `ln(1 + x)`; the shift admits the many zero counts.
pub fn log_transform(x: f64) -> Result<f64> {
    if x < 0.0 || x.is_nan() {
        return Err(Error::NegativeInput(x));
    }
    Ok(libm::log1p(x))
}

fn log_count(x: u64) -> f64 {
    libm::log1p(x as f64)
}

/// The fourteen predictors of one PR, counts already log-transformed.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Predictors {
    pub age: f64,
    pub commits: f64,
    pub changed_files: f64,
    pub comments: f64,
    pub review_comments: f64,
    pub additions: f64,
    pub deletions: f64,
    pub creator_total_commits: f64,
    pub creator_total_blobs: f64,
    pub creator_total_projects: f64,
    pub repo_submitted: f64,
    pub repo_accepted: f64,
    pub creator_submitted: f64,
    pub creator_accepted: f64,
}

impl Predictors {
    pub fn get(&self, feature: Feature) -> f64 {
        match feature {
            Feature::Age => self.age,
            Feature::Commits => self.commits,
            Feature::ChangedFiles => self.changed_files,
            Feature::Comments => self.comments,
            Feature::ReviewComments => self.review_comments,
            Feature::Additions => self.additions,
            Feature::Deletions => self.deletions,
            Feature::CreatorTotalCommits => self.creator_total_commits,
            Feature::CreatorTotalBlobs => self.creator_total_blobs,
            Feature::CreatorTotalProjects => self.creator_total_projects,
            Feature::RepoSubmitted => self.repo_submitted,
            Feature::RepoAccepted => self.repo_accepted,
            Feature::CreatorSubmitted => self.creator_submitted,
            Feature::CreatorAccepted => self.creator_accepted,
        }
    }
}

/// Predictors plus the label of one labelable PR.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FeatureVector {
    pub pr_id: String,
    pub created_at: Timestamp,
    pub predictors: Predictors,
    pub label: bool,
}

/// Predictors of a PR still open at scoring time.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenPr {
    pub pr_id: String,
    pub created_at: Timestamp,
    pub predictors: Predictors,
}

/// Prior submission history visible at a PR's creation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct History {
    pub repo_submitted: u64,
    pub repo_accepted: u64,
    pub creator_submitted: u64,
    pub creator_accepted: u64,
}

#[derive(Default, Clone, Copy)]
struct Tally {
    submitted: u64,
    accepted: u64,
}

fn fraction(accepted: u64, submitted: u64) -> f64 {
    if submitted == 0 {
        0.0
    } else {
        accepted as f64 / submitted as f64
    }
}

/// Visits PRs in `(created_at, pr_id)` order, handing each one the history
/// known strictly before its creation.
fn sweep<'a>(
    prs: &'a [PullRequestRecord],
    mut visit: impl FnMut(&'a PullRequestRecord, History) -> Result<()>,
) -> Result<()> {
    let mut ids = BTreeSet::new();
    for p in prs {
        p.validate()?;
        if !ids.insert(p.pr_id.as_str()) {
            return Err(Error::DuplicatePr(p.pr_id.clone()));
        }
    }

    let mut order: Vec<&PullRequestRecord> = prs.iter().collect();
    order.sort_by(|a, b| (a.created_at, &a.pr_id).cmp(&(b.created_at, &b.pr_id)));
    let mut merges: Vec<&PullRequestRecord> = prs.iter().filter(|p| p.merged_at.is_some()).collect();
    merges.sort_by(|a, b| (a.merged_at, &a.pr_id).cmp(&(b.merged_at, &b.pr_id)));

    let mut repos: BTreeMap<&str, Tally> = BTreeMap::new();
    let mut creators: BTreeMap<&str, Tally> = BTreeMap::new();
    let (mut submitted, mut merged) = (0, 0);

    let mut start = 0;
    while start < order.len() {
        let t = order[start].created_at;
        let end = start + order[start..].iter().take_while(|p| p.created_at == t).count();

        // everything created before this group is a known submission
        for q in &order[submitted..start] {
            repos.entry(&q.repo_id).or_default().submitted += 1;
            creators.entry(&q.author_id).or_default().submitted += 1;
        }
        submitted = start;
        // merges strictly before t; their PRs were necessarily created before t
        while merged < merges.len() && merges[merged].merged_at.is_some_and(|m| m < t) {
            let q = merges[merged];
            repos.entry(&q.repo_id).or_default().accepted += 1;
            creators.entry(&q.author_id).or_default().accepted += 1;
            merged += 1;
        }

        for p in &order[start..end] {
            let repo = repos.get(p.repo_id.as_str()).copied().unwrap_or_default();
            let creator = creators.get(p.author_id.as_str()).copied().unwrap_or_default();
            visit(
                p,
                History {
                    repo_submitted: repo.submitted,
                    repo_accepted: repo.accepted,
                    creator_submitted: creator.submitted,
                    creator_accepted: creator.accepted,
                },
            )?;
        }
        start = end;
    }
    Ok(())
}

fn predictors(p: &PullRequestRecord, history: History, activity: &impl ActivityProvider, age_secs: i64) -> Predictors {
    let snap = activity.snapshot(&p.author_id, p.created_at);
    Predictors {
        age: log_count(age_secs as u64),
        commits: log_count(p.commits),
        changed_files: log_count(p.changed_files),
        comments: log_count(p.comments),
        review_comments: log_count(p.review_comments),
        additions: log_count(p.additions),
        deletions: log_count(p.deletions),
        creator_total_commits: log_count(snap.total_commits),
        creator_total_blobs: log_count(snap.total_blobs),
        creator_total_projects: log_count(snap.total_projects),
        repo_submitted: log_count(history.repo_submitted),
        repo_accepted: fraction(history.repo_accepted, history.repo_submitted),
        creator_submitted: log_count(history.creator_submitted),
        creator_accepted: fraction(history.creator_accepted, history.creator_submitted),
    }
}

/// Builds one vector per PR whose label is decidable at collection time
/// `as_of`, in `(created_at, pr_id)` order.
///
/// PRs created after `as_of` are ignored. Open PRs younger than the window are
/// excluded from the output but still count as prior submissions.
pub fn build_dataset(
    prs: &[PullRequestRecord],
    activity: &impl ActivityProvider,
    as_of: Timestamp,
) -> Result<Vec<FeatureVector>> {
    let known: Vec<PullRequestRecord> = prs.iter().filter(|p| p.created_at <= as_of).cloned().collect();
    let mut out = Vec::new();
    sweep(&known, |p, history| {
        if let Some(label) = pr::label_at(p, as_of) {
            let age = pr::age_seconds(p, as_of)?;
            out.push(FeatureVector {
                pr_id: p.pr_id.clone(),
                created_at: p.created_at,
                predictors: predictors(p, history, activity, age),
                label: label.accepted_within_window,
            });
        }
        Ok(())
    })?;
    Ok(out)
}

/// Predictors for PRs still open at scoring time `as_of`, with age measured up
/// to `as_of`. Closures and merges after `as_of` are treated as unknown.
pub fn build_open(
    prs: &[PullRequestRecord],
    activity: &impl ActivityProvider,
    as_of: Timestamp,
) -> Result<Vec<OpenPr>> {
    // Rewind every record to what was visible at as_of.
    let known: Vec<PullRequestRecord> = prs
        .iter()
        .filter(|p| p.created_at <= as_of)
        .map(|p| {
            let mut p = p.clone();
            if p.closed_at.is_some_and(|c| c > as_of) {
                p.closed_at = None;
                p.merged_at = None;
            }
            p
        })
        .collect();
    let mut out = Vec::new();
    sweep(&known, |p, history| {
        if p.is_open() {
            let age = (as_of - p.created_at).min(WINDOW_SECS);
            out.push(OpenPr {
                pr_id: p.pr_id.clone(),
                created_at: p.created_at,
                predictors: predictors(p, history, activity, age),
            });
        }
        Ok(())
    })?;
    Ok(out)
}

/// Feature vectors projected onto a schema: the modeling matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub schema: FeatureSchema,
    pub pr_ids: Vec<String>,
    pub created_at: Vec<Timestamp>,
    pub x: Matrix,
    pub y: Vec<bool>,
}

impl FeatureTable {
    /// Rows are ordered by `(created_at, pr_id)`.
    pub fn from_vectors(vectors: &[FeatureVector], schema: &FeatureSchema) -> Self {
        let mut sorted: Vec<&FeatureVector> = vectors.iter().collect();
        sorted.sort_by(|a, b| (a.created_at, &a.pr_id).cmp(&(b.created_at, &b.pr_id)));
        let rows: Vec<Vec<f64>> = sorted.iter().map(|v| schema.project(&v.predictors)).collect();
        let x = if rows.is_empty() {
            Matrix::new(0, schema.len(), Vec::new()).expect("empty matrix")
        } else {
            Matrix::from_rows(&rows).expect("rows share the schema width")
        };
        Self {
            schema: schema.clone(),
            pr_ids: sorted.iter().map(|v| v.pr_id.clone()).collect(),
            created_at: sorted.iter().map(|v| v.created_at).collect(),
            x,
            y: sorted.iter().map(|v| v.label).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            schema: self.schema.clone(),
            pr_ids: rows.iter().map(|&i| self.pr_ids[i].clone()).collect(),
            created_at: rows.iter().map(|&i| self.created_at[i]).collect(),
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// Fraction of positive labels; 0 for an empty table.
    pub fn positive_rate(&self) -> f64 {
        fraction(self.y.iter().filter(|&&y| y).count() as u64, self.y.len() as u64)
    }
}
