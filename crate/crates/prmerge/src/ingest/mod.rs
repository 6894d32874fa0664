//! Fetching pull requests from a hosting API into the record store.

mod api;
mod store;
mod transport;

use std::time::Duration;

pub use api::{
    check_status, fetch_pr_detail, identify_pull_requests, list_issues, next_page, parse_pr_detail, ApiConfig, Backoff,
    IssuePage, PrRef, RepoRef,
};
pub use store::{
    read_ndjson, write_atomic, write_ndjson, Conflict, IngestManifest, RepoState, Store, MANIFEST_FILE,
    MANIFEST_VERSION,
};
pub use transport::{
    FixtureEntry, FixtureRequest, FixtureResponse, FixtureTransport, HttpResponse, LiveTransport, Recorder, Transport,
    TOKEN_ENV,
};

use crate::error::Result;

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub api: ApiConfig,
    pub backoff: Backoff,
    /// Restart listings from page 1 and overwrite changed records.
    pub refresh: bool,
    /// Stop after this many pages in this run.
    pub max_pages: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct RepoSummary {
    pub repo: String,
    pub pages: u32,
    pub pull_requests: u64,
    pub written: u64,
    pub complete: bool,
}

/// Ingests one repository, resuming from the manifest cursor. The manifest
/// is saved after every page, so an interrupted run loses at most one page
/// of work and never duplicates records.
pub fn ingest_repo(
    transport: &dyn Transport,
    store: &Store,
    repo: &RepoRef,
    packages: &[String],
    opts: &IngestOptions,
    sleep: &mut dyn FnMut(Duration),
) -> Result<RepoSummary> {
    repo.validate()?;
    let mut manifest = store.load_manifest()?;
    let state = manifest.entry(repo);
    for p in packages {
        if !state.packages.contains(p) {
            state.packages.push(p.clone());
        }
    }
    state.packages.sort();
    if opts.refresh {
        state.page_cursor = Some(1);
        state.complete = false;
    }
    let mut cursor = match (state.complete, state.page_cursor) {
        (true, _) | (_, None) => None,
        (false, Some(page)) => Some(page),
    };
    store.save_manifest(&manifest)?;

    let conflict = if opts.refresh {
        Conflict::Replace
    } else {
        Conflict::Reject
    };
    let mut rng = rand::rng();
    let mut summary = RepoSummary {
        repo: repo.repo_id(),
        pages: 0,
        pull_requests: 0,
        written: 0,
        complete: cursor.is_none(),
    };
    while let Some(page) = cursor {
        if opts.max_pages.is_some_and(|m| summary.pages >= m) {
            break;
        }
        let listing = opts
            .backoff
            .run(&mut rng, sleep, || list_issues(transport, &opts.api, repo, page))?;
        let refs = identify_pull_requests(repo, &listing.issues)?;
        let mut records = Vec::with_capacity(refs.len());
        for r in &refs {
            records.push(
                opts.backoff
                    .run(&mut rng, sleep, || fetch_pr_detail(transport, &opts.api, r))?,
            );
        }
        let written = store.persist(&records, conflict)?;

        let state = manifest.entry(repo);
        if let Some(latest) = records.iter().map(|r| r.created_at).max() {
            state.fetched_through = Some(state.fetched_through.map_or(latest, |t| t.max(latest)));
        }
        state.page_cursor = listing.next;
        state.complete = listing.next.is_none();
        state.records = store.read_repo(repo)?.len() as u64;
        store.save_manifest(&manifest)?;

        summary.pages += 1;
        summary.pull_requests += refs.len() as u64;
        summary.written += written as u64;
        summary.complete = listing.next.is_none();
        cursor = listing.next;
    }
    let path = store.repo_path(repo);
    if summary.complete && !path.exists() {
        write_atomic(&path, b"")?;
    }
    Ok(summary)
}
