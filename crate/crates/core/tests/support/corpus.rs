//! Random PR corpora and point-in-time mutations for the leakage checks.
//! Shared by the core tests and the acceptance suite.

#![allow(dead_code)]

use prmerge_core::activity::AuthorActivityEvent;
use prmerge_core::features::FeatureVector;
use prmerge_core::pr::PullRequestRecord;
use rand::Rng;

pub const DAY: i64 = 24 * 3600;
pub const SPAN: i64 = 120 * DAY;
pub const AS_OF: i64 = SPAN + 60 * DAY;

pub fn random_pr<R: Rng>(rng: &mut R, id: usize, min_created: i64) -> PullRequestRecord {
    let created = rng.random_range(min_created..=SPAN.max(min_created));
    // coarse timestamps so that ties happen
    let rounded = created - created % 3600;
    let created = if rounded >= min_created { rounded } else { created };
    let (closed, merged) = match rng.random_range(0..4) {
        0 => (None, None),
        1 => {
            let c = created + rng.random_range(0..40 * DAY);
            (Some(c), None)
        }
        _ => {
            let m = created + rng.random_range(0..40 * DAY);
            (Some(m), Some(m))
        }
    };
    PullRequestRecord {
        pr_id: format!("pr{id}"),
        repo_id: format!("r{}", rng.random_range(0..3)),
        author_id: format!("a{}", rng.random_range(0..5)),
        created_at: created,
        closed_at: closed,
        merged_at: merged,
        commits: rng.random_range(0..10),
        changed_files: rng.random_range(0..20),
        additions: rng.random_range(0..500),
        deletions: rng.random_range(0..200),
        comments: rng.random_range(0..8),
        review_comments: rng.random_range(0..5),
    }
}

pub fn random_event<R: Rng>(rng: &mut R, min_ts: i64) -> AuthorActivityEvent {
    AuthorActivityEvent {
        author_id: format!("a{}", rng.random_range(0..6)),
        timestamp: rng.random_range(min_ts - 30 * DAY..=SPAN),
        project_id: format!("p{}", rng.random_range(0..8)),
        blobs_authored: rng.random_range(0..6),
    }
}

pub fn random_corpus<R: Rng>(
    rng: &mut R,
    n_prs: usize,
    n_events: usize,
) -> (Vec<PullRequestRecord>, Vec<AuthorActivityEvent>) {
    let prs = (0..n_prs).map(|i| random_pr(rng, i, 0)).collect();
    let events = (0..n_events).map(|_| random_event(rng, 0)).collect();
    (prs, events)
}

/// Rewrites everything that happens at or after `cutoff`, leaving `keep`
/// untouched: later PRs are altered, dropped or added, merges and closures
/// at or after the cutoff move or vanish, and activity from the cutoff on is
/// rewritten.
pub fn mutate_future<R: Rng>(
    rng: &mut R,
    prs: &[PullRequestRecord],
    events: &[AuthorActivityEvent],
    keep: &str,
    cutoff: i64,
) -> (Vec<PullRequestRecord>, Vec<AuthorActivityEvent>) {
    let mut out = Vec::new();
    for (k, q) in prs.iter().enumerate() {
        if q.pr_id == keep {
            out.push(q.clone());
            continue;
        }
        if q.created_at >= cutoff {
            match rng.random_range(0..3) {
                0 => {}
                1 => {
                    let mut m = random_pr(rng, 10_000 + k, cutoff);
                    m.pr_id = q.pr_id.clone();
                    out.push(m);
                }
                _ => out.push(q.clone()),
            }
            continue;
        }
        let mut q = q.clone();
        if q.closed_at.is_some_and(|c| c >= cutoff) {
            match rng.random_range(0..3) {
                0 => {
                    q.closed_at = None;
                    q.merged_at = None;
                }
                1 => {
                    let c = cutoff + rng.random_range(0..20 * DAY);
                    q.closed_at = Some(c);
                    q.merged_at = None;
                }
                _ => {
                    let c = cutoff + rng.random_range(0..20 * DAY);
                    q.closed_at = Some(c);
                    q.merged_at = Some(c);
                }
            }
        }
        if q.closed_at.is_none() && rng.random_bool(0.3) {
            let c = cutoff + rng.random_range(0..20 * DAY);
            q.closed_at = Some(c);
            q.merged_at = rng.random_bool(0.5).then_some(c);
        }
        out.push(q);
    }
    for k in 0..rng.random_range(0..4) {
        out.push(random_pr(rng, 20_000 + k, cutoff));
    }

    let mut evs: Vec<AuthorActivityEvent> = Vec::new();
    for e in events {
        if e.timestamp < cutoff {
            evs.push(e.clone());
        } else if rng.random_bool(0.5) {
            let mut r = random_event(rng, cutoff);
            r.timestamp = r.timestamp.max(cutoff);
            evs.push(r);
        }
    }
    for _ in 0..rng.random_range(0..6) {
        let mut e = random_event(rng, cutoff);
        e.timestamp = e.timestamp.max(cutoff);
        evs.push(e);
    }
    (out, evs)
}

/// Every predictor, the label and the creation time as raw bits.
pub fn bits(v: &FeatureVector) -> Vec<u64> {
    let f = v.predictors;
    [
        f.age,
        f.commits,
        f.changed_files,
        f.comments,
        f.review_comments,
        f.additions,
        f.deletions,
        f.creator_total_commits,
        f.creator_total_blobs,
        f.creator_total_projects,
        f.repo_submitted,
        f.repo_accepted,
        f.creator_submitted,
        f.creator_accepted,
    ]
    .iter()
    .map(|x| x.to_bits())
    .chain([v.label as u64, v.created_at as u64])
    .collect()
}
