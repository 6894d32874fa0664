//! Synthetic corpora with planted effects and known acceptance probabilities.

use std::fs;
use std::path::Path;

use prmerge_core::activity::{ActivityProvider, ActivityStore, AuthorActivityEvent};
use prmerge_core::pr::{PullRequestRecord, Timestamp, WINDOW_SECS};
use prmerge_core::seed;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{write_atomic, Conflict, IngestManifest, RepoRef, Store};

const DAY: i64 = 86_400;

/// Plateau on `ln(1 + additions)` between `ln(1 + lo)` and `ln(1 + hi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweetSpot {
    pub weight: f64,
    pub lo: f64,
    pub hi: f64,
    /// Edge width in log units.
    pub softness: f64,
}

impl SweetSpot {
    pub fn value(&self, additions: u64) -> f64 {
        let z = (additions as f64).ln_1p();
        let rise = sigmoid((z - self.lo.ln_1p()) / self.softness);
        let fall = sigmoid((self.hi.ln_1p() - z) / self.softness);
        self.weight * rise * fall
    }

    /// Bump region in transformed units.
    pub fn region(&self) -> (f64, f64) {
        (self.lo.ln_1p(), self.hi.ln_1p())
    }
}

/// Step effects on the creator's global activity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reputation {
    pub commits: u64,
    pub blobs: u64,
    pub projects: u64,
    pub weight_commits: f64,
    pub weight_blobs: f64,
    pub weight_projects: f64,
}

impl Reputation {
    pub fn value(&self, commits: u64, blobs: u64, projects: u64) -> f64 {
        let step = |v: u64, t: u64, w: f64| if v >= t { w } else { 0.0 };
        step(commits, self.commits, self.weight_commits)
            + step(blobs, self.blobs, self.weight_blobs)
            + step(projects, self.projects, self.weight_projects)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Coefficients {
    /// Weight of the latent per-author skill (standard normal).
    pub author_skill: f64,
    /// Weight of the latent per-repository leniency (standard normal).
    pub repo_leniency: f64,
    pub sweet_spot: SweetSpot,
    pub reputation: Reputation,
}

/// Base-rate shift at a point of the timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    /// Position of the shift as a fraction of the timeline.
    pub cutoff_fraction: f64,
    pub rate_before: f64,
    pub rate_after: f64,
}

/// How resolution times and discussion depend on the outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Outcomes {
    /// Median days to merge for accepted PRs.
    pub merge_days: f64,
    /// Median days to close for rejected PRs.
    pub close_days: f64,
    /// Log-scale spread of both resolution times.
    pub sigma: f64,
    /// Share of rejected PRs merged after the window.
    pub late_merge: f64,
    /// Share of rejected PRs never closed.
    pub left_open: f64,
    pub comments_accepted: f64,
    pub comments_rejected: f64,
}

/// Generator settings. Missing JSON keys take their default values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_repos: usize,
    pub n_authors: usize,
    pub n_prs: usize,
    pub seed: u64,
    /// First PR creation time.
    pub start: Timestamp,
    pub span_days: u32,
    /// Length of author activity before `start`.
    pub history_days: u32,
    pub coefficients: Coefficients,
    /// Scale of the logistic label noise; 0 makes labels a threshold rule.
    pub noise_scale: f64,
    pub base_rate: f64,
    pub drift: Option<Drift>,
    pub outcomes: Outcomes,
}

impl Default for Coefficients {
    fn default() -> Self {
        Self {
            author_skill: 0.7,
            repo_leniency: 1.0,
            sweet_spot: SweetSpot {
                weight: 1.5,
                lo: 5.0,
                hi: 100.0,
                softness: 0.15,
            },
            reputation: Reputation {
                commits: 1000,
                blobs: 3000,
                projects: 700,
                weight_commits: 1.5,
                weight_blobs: 1.5,
                weight_projects: 1.5,
            },
        }
    }
}

impl Default for Outcomes {
    fn default() -> Self {
        Self {
            merge_days: 1.5,
            close_days: 10.0,
            sigma: 1.3,
            late_merge: 0.1,
            left_open: 0.1,
            comments_accepted: 1.0,
            comments_rejected: 3.0,
        }
    }
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_repos: 40,
            n_authors: 2000,
            n_prs: 5000,
            seed: 1,
            start: 1_420_070_400,
            span_days: 730,
            history_days: 1460,
            coefficients: Coefficients::default(),
            noise_scale: 1.0,
            base_rate: 0.5,
            drift: None,
            outcomes: Outcomes::default(),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("infeasible synthetic spec: {m}")));
        if self.n_repos == 0 || self.n_authors == 0 || self.n_prs == 0 {
            return bad("n_repos, n_authors and n_prs must be positive");
        }
        if self.n_prs < self.n_repos {
            return bad("every repository needs at least one PR, so n_prs must be >= n_repos");
        }
        if self.span_days == 0 {
            return bad("span_days must be positive");
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad("noise_scale must be finite and >= 0");
        }
        let rate_ok = |r: f64| r > 0.0 && r < 1.0;
        if !rate_ok(self.base_rate) {
            return bad("base_rate must be in (0, 1)");
        }
        if let Some(d) = &self.drift {
            if !(rate_ok(d.rate_before) && rate_ok(d.rate_after) && d.cutoff_fraction > 0.0 && d.cutoff_fraction < 1.0)
            {
                return bad("drift rates must be in (0, 1) and the cutoff inside the timeline");
            }
        }
        let s = &self.coefficients.sweet_spot;
        if !(s.lo >= 0.0 && s.lo < s.hi && s.softness > 0.0) {
            return bad("sweet spot needs 0 <= lo < hi and softness > 0");
        }
        let o = &self.outcomes;
        if !(o.merge_days > 0.0 && o.close_days > 0.0 && o.sigma >= 0.0) {
            return bad("resolution medians must be positive");
        }
        if !(o.late_merge >= 0.0 && o.left_open >= 0.0 && o.late_merge + o.left_open <= 1.0) {
            return bad("late_merge + left_open must lie in [0, 1]");
        }
        if !(o.comments_accepted >= 0.0 && o.comments_rejected >= 0.0) {
            return bad("comment means must be >= 0");
        }
        Ok(())
    }

    pub fn end(&self) -> Timestamp {
        self.start + self.span_days as i64 * DAY
    }

    /// Collection time at which every generated PR is labelable.
    pub fn as_of(&self) -> Timestamp {
        self.end() + 95 * DAY
    }

    /// Time of the base-rate shift, if any.
    pub fn cutoff(&self) -> Option<Timestamp> {
        self.drift
            .as_ref()
            .map(|d| self.start + (d.cutoff_fraction * (self.end() - self.start) as f64) as i64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub pr_id: String,
    pub probability: f64,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRepo {
    pub repo: RepoRef,
    pub packages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub spec: SyntheticSpec,
    pub repos: Vec<SynthRepo>,
    /// Ordered by `(created_at, pr_id)`.
    pub prs: Vec<PullRequestRecord>,
    pub events: Vec<AuthorActivityEvent>,
    /// Parallel to `prs`.
    pub truth: Vec<GroundTruth>,
}

impl SyntheticCorpus {
    pub fn activity(&self) -> ActivityStore {
        ActivityStore::new(self.events.iter().cloned())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Geometric count on {0, 1, ...} with the given mean.
fn count(rng: &mut impl Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let p = 1.0 / (1.0 + mean);
    let u: f64 = rng.random();
    ((1.0 - u).ln() / (1.0 - p).ln()).floor() as u64
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// `ln(1 + x)` normal, rounded back to a count.
fn log_count(rng: &mut impl Rng, mu: f64, sigma: f64) -> u64 {
    let z: f64 = Normal::new(mu, sigma).expect("valid normal").sample(rng);
    (z.max(0.0).exp() - 1.0).round().max(0.0) as u64
}

struct Author {
    id: String,
    skill: f64,
}

fn authors(spec: &SyntheticSpec) -> (Vec<Author>, Vec<AuthorActivityEvent>) {
    let mut rng = seed::rng(spec.seed, "synth-authors", 0);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let history_start = spec.start - spec.history_days as i64 * DAY;
    let end = spec.end();
    let mut out = Vec::with_capacity(spec.n_authors);
    let mut events = Vec::new();
    for a in 0..spec.n_authors {
        let id = format!("dev-{a:05}");
        let skill = std_normal.sample(&mut rng);
        let commits = log_uniform(&mut rng, 3.0, 5000.0).round() as u64;
        let blobs = log_uniform(&mut rng, 5.0, 15000.0).round() as u64;
        let projects = ((commits as f64) * log_uniform(&mut rng, 0.05, 1.0)).round().max(1.0) as u64;
        let mut times: Vec<Timestamp> = (0..commits)
            .map(|_| {
                if rng.random_bool(0.85) {
                    rng.random_range(history_start..spec.start)
                } else {
                    rng.random_range(spec.start..end)
                }
            })
            .collect();
        times.sort_unstable();
        let mut project_of: Vec<u64> = (0..commits)
            .map(|k| if k < projects { k } else { rng.random_range(0..projects) })
            .collect();
        project_of.shuffle(&mut rng);
        let (per, extra) = (blobs / commits, blobs % commits);
        for (k, t) in times.into_iter().enumerate() {
            events.push(AuthorActivityEvent {
                author_id: id.clone(),
                timestamp: t,
                project_id: format!("p{a:05}-{}", project_of[k]),
                blobs_authored: per + u64::from((k as u64) < extra),
            });
        }
        out.push(Author { id, skill });
    }
    (out, events)
}

/// Generates a corpus from `spec`. Identical specs give identical corpora.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");

    let mut rng = seed::rng(spec.seed, "synth-repos", 0);
    let mut repos = Vec::with_capacity(spec.n_repos);
    let mut leniency = Vec::with_capacity(spec.n_repos);
    let mut next_package = 0;
    for r in 0..spec.n_repos {
        let n_packages = if rng.random_bool(0.2) { 2 } else { 1 };
        let packages = (0..n_packages)
            .map(|_| {
                next_package += 1;
                format!("pkg-{next_package:05}")
            })
            .collect();
        repos.push(SynthRepo {
            repo: RepoRef::new("synth", format!("repo-{r:04}"))?,
            packages,
        });
        leniency.push(std_normal.sample(&mut rng));
    }

    let (authors, events) = authors(spec);
    let activity = ActivityStore::new(events.iter().cloned());

    // Submissions, in creation order.
    let mut rng = seed::rng(spec.seed, "synth-prs", 0);
    let mut times: Vec<Timestamp> = (0..spec.n_prs)
        .map(|_| rng.random_range(spec.start..spec.end()))
        .collect();
    times.sort_unstable();
    let mut repo_of: Vec<usize> = (0..spec.n_prs)
        .map(|i| {
            if i < spec.n_repos {
                i
            } else {
                rng.random_range(0..spec.n_repos)
            }
        })
        .collect();
    repo_of.shuffle(&mut rng);

    struct Draft {
        repo: usize,
        author: usize,
        created_at: Timestamp,
        commits: u64,
        changed_files: u64,
        additions: u64,
        deletions: u64,
        review_comments: u64,
        signal: f64,
    }
    let c = &spec.coefficients;
    let mut drafts = Vec::with_capacity(spec.n_prs);
    for (i, &created_at) in times.iter().enumerate() {
        let author = rng.random_range(0..spec.n_authors);
        let repo = repo_of[i];
        let additions = log_count(&mut rng, 3.5, 2.0);
        let snap = activity.snapshot(&authors[author].id, created_at);
        let signal = c.author_skill * authors[author].skill
            + c.repo_leniency * leniency[repo]
            + c.sweet_spot.value(additions)
            + c.reputation
                .value(snap.total_commits, snap.total_blobs, snap.total_projects);
        drafts.push(Draft {
            repo,
            author,
            created_at,
            commits: 1 + count(&mut rng, 2.0),
            changed_files: 1 + count(&mut rng, 4.0),
            additions,
            deletions: log_count(&mut rng, 3.0, 2.0),
            review_comments: count(&mut rng, 1.5),
            signal,
        });
    }

    // Intercepts matching the target base rates.
    let cutoff = spec.cutoff();
    let group = |t: Timestamp| usize::from(cutoff.is_some_and(|c| t >= c));
    let targets = match &spec.drift {
        Some(d) => [d.rate_before, d.rate_after],
        None => [spec.base_rate, spec.base_rate],
    };
    let probability = |signal: f64, intercept: f64| {
        let z = signal + intercept;
        if spec.noise_scale == 0.0 {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            sigmoid(z / spec.noise_scale)
        }
    };
    let mut intercepts = [0.0; 2];
    for (g, intercept) in intercepts.iter_mut().enumerate() {
        let signals: Vec<f64> = drafts
            .iter()
            .filter(|d| group(d.created_at) == g)
            .map(|d| d.signal)
            .collect();
        if signals.is_empty() {
            continue;
        }
        let (mut lo, mut hi) = (-100.0, 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let mean = signals.iter().map(|&s| probability(s, mid)).sum::<f64>() / signals.len() as f64;
            if mean < targets[g] {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        *intercept = 0.5 * (lo + hi);
    }

    // Outcomes.
    let o = &spec.outcomes;
    let merge_time = LogNormal::new((o.merge_days * DAY as f64).ln(), o.sigma).expect("valid lognormal");
    let close_time = LogNormal::new((o.close_days * DAY as f64).ln(), o.sigma).expect("valid lognormal");
    let mut next_number = vec![0u64; spec.n_repos];
    let mut prs = Vec::with_capacity(spec.n_prs);
    let mut truth = Vec::with_capacity(spec.n_prs);
    for d in drafts {
        let p = probability(d.signal, intercepts[group(d.created_at)]);
        let u: f64 = rng.random();
        let label = if spec.noise_scale == 0.0 { p == 1.0 } else { u < p };
        let (closed_at, merged_at, comments) = if label {
            let dt = (merge_time.sample(&mut rng) as i64).clamp(60, WINDOW_SECS - 60);
            let t = d.created_at + dt;
            (Some(t), Some(t), count(&mut rng, o.comments_accepted))
        } else {
            let comments = count(&mut rng, o.comments_rejected);
            let v: f64 = rng.random();
            if v < o.late_merge {
                let t = d.created_at + rng.random_range(31 * DAY..90 * DAY);
                (Some(t), Some(t), comments)
            } else if v < o.late_merge + o.left_open {
                (None, None, comments)
            } else {
                let dt = (close_time.sample(&mut rng) as i64).clamp(60, 90 * DAY);
                (Some(d.created_at + dt), None, comments)
            }
        };
        next_number[d.repo] += 1;
        let repo = &repos[d.repo].repo;
        let pr_id = format!("{}#{}", repo.repo_id(), next_number[d.repo]);
        truth.push(GroundTruth {
            pr_id: pr_id.clone(),
            probability: p,
            label,
        });
        prs.push(PullRequestRecord {
            pr_id,
            repo_id: repo.repo_id(),
            author_id: authors[d.author].id.clone(),
            created_at: d.created_at,
            closed_at,
            merged_at,
            commits: d.commits,
            changed_files: d.changed_files,
            additions: d.additions,
            deletions: d.deletions,
            comments,
            review_comments: d.review_comments,
        });
    }

    let mut order: Vec<usize> = (0..prs.len()).collect();
    order.sort_by(|&a, &b| (prs[a].created_at, &prs[a].pr_id).cmp(&(prs[b].created_at, &prs[b].pr_id)));
    let prs: Vec<_> = order.iter().map(|&i| prs[i].clone()).collect();
    let truth: Vec<_> = order.iter().map(|&i| truth[i].clone()).collect();
    Ok(SyntheticCorpus {
        spec: spec.clone(),
        repos,
        prs,
        events,
        truth,
    })
}

/// Metadata written next to a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthMeta {
    pub spec: SyntheticSpec,
    pub as_of: Timestamp,
    pub cutoff: Option<Timestamp>,
    pub n_prs: usize,
    pub n_events: usize,
    pub positive_rate: f64,
    pub mean_probability: f64,
}

/// Writes `store/` (NDJSON plus manifest), `activity.csv`,
/// `ground_truth.csv` and `synth.json` under `out`.
pub fn write_corpus(corpus: &SyntheticCorpus, out: &Path) -> Result<SynthMeta> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let store_dir = out.join("store");
    if store_dir.exists() {
        fs::remove_dir_all(&store_dir).map_err(|e| Error::io(&store_dir, e))?;
    }
    let store = Store::create(&store_dir)?;
    store.persist(&corpus.prs, Conflict::Reject)?;
    let mut manifest = IngestManifest::default();
    for r in &corpus.repos {
        let through = corpus
            .prs
            .iter()
            .filter(|p| p.repo_id == r.repo.repo_id())
            .map(|p| p.created_at)
            .max();
        let state = manifest.entry(&r.repo);
        state.packages = r.packages.clone();
        state.fetched_through = through;
        state.page_cursor = None;
        state.complete = true;
        state.records = corpus.prs.iter().filter(|p| p.repo_id == r.repo.repo_id()).count() as u64;
    }
    store.save_manifest(&manifest)?;

    crate::activity_io::write_events(&out.join("activity.csv"), &corpus.events)?;

    let gt = out.join("ground_truth.csv");
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["pr_id", "probability", "label"])
            .map_err(|e| Error::io(&gt, e.into()))?;
        for t in &corpus.truth {
            w.write_record([
                t.pr_id.as_str(),
                &format!("{:?}", t.probability),
                if t.label { "1" } else { "0" },
            ])
            .map_err(|e| Error::io(&gt, e.into()))?;
        }
        w.flush().map_err(|e| Error::io(&gt, e))?;
    }
    write_atomic(&gt, &buf)?;

    let n = corpus.truth.len().max(1) as f64;
    let meta = SynthMeta {
        spec: corpus.spec.clone(),
        as_of: corpus.spec.as_of(),
        cutoff: corpus.spec.cutoff(),
        n_prs: corpus.prs.len(),
        n_events: corpus.events.len(),
        positive_rate: corpus.truth.iter().filter(|t| t.label).count() as f64 / n,
        mean_probability: corpus.truth.iter().map(|t| t.probability).sum::<f64>() / n,
    };
    let mut text = serde_json::to_string_pretty(&meta).map_err(|e| Error::json("synth meta", e))?;
    text.push('\n');
    write_atomic(&out.join("synth.json"), text.as_bytes())?;
    Ok(meta)
}

/// Matrix whose label depends only on its first `informative` columns,
/// followed by `noise` independent columns.
pub fn planted_matrix(
    n: usize,
    informative: usize,
    noise: usize,
    seed_value: u64,
) -> (prmerge_core::Matrix, Vec<bool>) {
    let mut rng = seed::rng(seed_value, "planted-matrix", 0);
    let p = informative + noise;
    let mut data = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z: f64 = row[..informative].iter().sum::<f64>() * 3.0 / (informative as f64).sqrt();
        y.push(rng.random::<f64>() < sigmoid(z));
        data.extend(row);
    }
    (prmerge_core::Matrix::new(n, p, data).expect("consistent shape"), y)
}
