use std::cell::Cell;
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use prmerge::ingest::{
    fetch_pr_detail, identify_pull_requests, ingest_repo, list_issues, ApiConfig, Backoff, FixtureEntry,
    FixtureTransport, HttpResponse, IngestOptions, LiveTransport, PrRef, Recorder, RepoRef, Store, Transport,
};
use prmerge::Error;

fn fixtures(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn api_fixtures() -> FixtureTransport {
    FixtureTransport::load(&fixtures("api")).unwrap()
}

fn small_pages() -> ApiConfig {
    ApiConfig {
        per_page: 2,
        ..ApiConfig::default()
    }
}

fn repo(s: &str) -> RepoRef {
    RepoRef::parse(s).unwrap()
}

fn no_sleep() -> impl FnMut(Duration) {
    |_| {}
}

fn opts(api: ApiConfig) -> IngestOptions {
    IngestOptions {
        api,
        ..IngestOptions::default()
    }
}

#[test]
fn listing_paginates_three_issues_in_pages_of_two() {
    let t = api_fixtures();
    let first = list_issues(&t, &small_pages(), &repo("acme/widget"), 1).unwrap();
    assert_eq!(first.issues.len(), 2);
    assert_eq!(first.next, Some(2));
    let second = list_issues(&t, &small_pages(), &repo("acme/widget"), 2).unwrap();
    assert_eq!(second.issues.len(), 1);
    assert_eq!(second.next, None);
}

#[test]
fn empty_repository_lists_nothing() {
    let page = list_issues(&api_fixtures(), &small_pages(), &repo("acme/empty"), 1).unwrap();
    assert!(page.issues.is_empty());
    assert_eq!(page.next, None);
}

#[test]
fn recorded_rate_limit_carries_retry_after() {
    match list_issues(&api_fixtures(), &small_pages(), &repo("acme/limited"), 1) {
        Err(Error::RateLimited { retry_after }) => assert_eq!(retry_after, Duration::from_secs(30)),
        other => panic!("expected rate limit, got {other:?}"),
    }
}

#[test]
fn unknown_repository_is_not_found() {
    let err = list_issues(&api_fixtures(), &small_pages(), &repo("acme/renamed"), 1).unwrap_err();
    assert!(matches!(err, Error::NotFound(_)), "{err:?}");
}

#[test]
fn identifies_exactly_the_linked_issues() {
    let t = api_fixtures();
    let r = repo("acme/gadget");
    let mut issues = Vec::new();
    for page in 1..=3 {
        issues.extend(list_issues(&t, &small_pages(), &r, page).unwrap().issues);
    }
    assert_eq!(issues.len(), 5);
    let found: Vec<u64> = identify_pull_requests(&r, &issues)
        .unwrap()
        .into_iter()
        .map(|p| p.number)
        .collect();
    assert_eq!(found, [5, 4]);
    assert!(identify_pull_requests(&r, &issues[2..]).unwrap().is_empty());
    let err = identify_pull_requests(&r, &[issues[0].clone(), serde_json::json!("oops")]).unwrap_err();
    assert!(matches!(err, Error::MalformedDocument { index: 1, .. }), "{err:?}");
}

/// Counts pull-request links in the raw fixture text, without a JSON parser.
fn count_links_in_listings(dir: &Path) -> usize {
    let mut total = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "ndjson") {
            for line in fs::read_to_string(&path).unwrap().lines() {
                if line.contains("/issues?") {
                    total += line.matches("\"pull_request\":{").count();
                }
            }
        }
    }
    total
}

#[test]
fn corpus_fixture_pull_request_count_matches_independent_count() {
    let dir = fixtures("corpus");
    let expected = count_links_in_listings(&dir);
    assert_eq!(expected, 300);
    let store_dir = tempfile::tempdir().unwrap();
    let store = Store::create(store_dir.path()).unwrap();
    let t = FixtureTransport::load(&dir).unwrap();
    let api = ApiConfig {
        per_page: 50,
        ..ApiConfig::default()
    };
    let mut identified = 0;
    for name in ["synth/repo-0000", "synth/repo-0001", "synth/repo-0002"] {
        let s = ingest_repo(&t, &store, &repo(name), &[], &opts(api.clone()), &mut no_sleep()).unwrap();
        identified += s.pull_requests as usize;
    }
    assert_eq!(identified, expected);
    assert_eq!(store.read_all().unwrap().len(), expected);
}

#[test]
fn pr_details_are_read_from_the_detail_document() {
    let t = api_fixtures();
    let api = small_pages();
    let detail = |name: &str, number| {
        fetch_pr_detail(
            &t,
            &api,
            &PrRef {
                repo: repo(name),
                number,
            },
        )
    };

    let merged = detail("acme/widget", 1).unwrap();
    assert_eq!(merged.pr_id, "acme/widget#1");
    assert_eq!(merged.author_id, "alice");
    assert_eq!(merged.created_at, 1_614_592_800);
    assert_eq!(merged.merged_at, Some(1_614_688_200));
    assert_eq!(
        (merged.commits, merged.changed_files, merged.additions, merged.deletions),
        (2, 3, 40, 5)
    );

    let rejected = detail("acme/widget", 3).unwrap();
    assert_eq!(rejected.closed_at, Some(1_616_227_200));
    assert_eq!(rejected.merged_at, None);

    let offset = detail("acme/gadget", 5).unwrap();
    assert_eq!(offset.created_at, 1_617_314_400);
    assert_eq!(offset.review_comments, 0);

    let open = detail("acme/gadget", 4).unwrap();
    assert_eq!((open.closed_at, open.merged_at), (None, None));

    match detail("acme/broken", 1) {
        Err(Error::MissingField { field, .. }) => assert_eq!(field, "additions"),
        other => panic!("expected missing field, got {other:?}"),
    }
}

#[test]
fn ingest_writes_one_file_per_repository_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::create(dir.path()).unwrap();
    let t = api_fixtures();
    for name in ["acme/widget", "acme/empty"] {
        let s = ingest_repo(&t, &store, &repo(name), &[], &opts(small_pages()), &mut no_sleep()).unwrap();
        assert!(s.complete);
    }
    let files = store.repo_files().unwrap();
    let names: Vec<_> = files.iter().map(|p| p.file_name().unwrap().to_str().unwrap()).collect();
    assert_eq!(names, ["acme__empty.ndjson", "acme__widget.ndjson"]);
    assert_eq!(fs::read(dir.path().join("acme__empty.ndjson")).unwrap(), b"");

    let before = fs::read(dir.path().join("acme__widget.ndjson")).unwrap();
    let again = IngestOptions {
        refresh: true,
        ..opts(small_pages())
    };
    let s = ingest_repo(&t, &store, &repo("acme/widget"), &[], &again, &mut no_sleep()).unwrap();
    assert_eq!((s.pull_requests, s.written), (2, 0));
    assert_eq!(fs::read(dir.path().join("acme__widget.ndjson")).unwrap(), before);

    let records = store.read_repo(&repo("acme/widget")).unwrap();
    assert!(records.windows(2).all(|w| w[0].created_at <= w[1].created_at));
}

#[test]
fn packages_sharing_a_repository_are_kept_as_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::create(dir.path()).unwrap();
    let t = api_fixtures();
    let r = repo("acme/widget");
    ingest_repo(
        &t,
        &store,
        &r,
        &["widget".into()],
        &opts(small_pages()),
        &mut no_sleep(),
    )
    .unwrap();
    ingest_repo(
        &t,
        &store,
        &r,
        &["@types/widget".into()],
        &opts(small_pages()),
        &mut no_sleep(),
    )
    .unwrap();
    let manifest = store.load_manifest().unwrap();
    assert_eq!(manifest.get(&r).unwrap().packages, ["@types/widget", "widget"]);
    assert_eq!(store.repo_files().unwrap().len(), 1);
}

#[test]
fn rate_limited_ingest_backs_off_for_at_least_retry_after() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::create(dir.path()).unwrap();
    let mut slept = Vec::new();
    let o = IngestOptions {
        backoff: Backoff {
            max_retries: 3,
            ..Backoff::default()
        },
        ..opts(small_pages())
    };
    let err = ingest_repo(&api_fixtures(), &store, &repo("acme/limited"), &[], &o, &mut |d| {
        slept.push(d)
    })
    .unwrap_err();
    assert!(matches!(err, Error::RateLimited { .. }));
    assert_eq!(slept.len(), 3);
    assert!(slept.iter().all(|d| *d >= Duration::from_secs(30)));
}

#[test]
fn resume_after_page_limit_adds_no_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::create(dir.path()).unwrap();
    let t = api_fixtures();
    let r = repo("acme/gadget");
    let limited = IngestOptions {
        max_pages: Some(1),
        ..opts(small_pages())
    };
    let mut through = Vec::new();
    loop {
        let s = ingest_repo(&t, &store, &r, &[], &limited, &mut no_sleep()).unwrap();
        through.push(store.load_manifest().unwrap().get(&r).unwrap().fetched_through);
        if s.complete {
            break;
        }
    }
    assert_eq!(through.len(), 3);
    assert!(through.windows(2).all(|w| w[0] <= w[1]));
    let ids: Vec<_> = store.read_repo(&r).unwrap().into_iter().map(|p| p.pr_id).collect();
    assert_eq!(ids, ["acme/gadget#4", "acme/gadget#5"]);
}

/// Fails every request after the first `budget`.
struct Flaky<T> {
    inner: T,
    budget: Cell<usize>,
}

impl<T: Transport> Transport for Flaky<T> {
    fn get(&self, url: &str) -> prmerge::Result<HttpResponse> {
        if self.budget.get() == 0 {
            return Err(Error::Transport("connection reset".into()));
        }
        self.budget.set(self.budget.get() - 1);
        self.inner.get(url)
    }
}

#[test]
fn interrupted_ingest_resumes_to_the_uninterrupted_result() {
    let dir = fixtures("corpus");
    let api = ApiConfig {
        per_page: 50,
        ..ApiConfig::default()
    };
    let r = repo("synth/repo-0000");
    let once = tempfile::tempdir().unwrap();
    let store = Store::create(once.path()).unwrap();
    ingest_repo(
        &FixtureTransport::load(&dir).unwrap(),
        &store,
        &r,
        &[],
        &opts(api.clone()),
        &mut no_sleep(),
    )
    .unwrap();
    let want = fs::read(store.repo_path(&r)).unwrap();

    for budget in [1, 30, 60, 90] {
        let tmp = tempfile::tempdir().unwrap();
        let store = Store::create(tmp.path()).unwrap();
        let no_retry = IngestOptions {
            backoff: Backoff {
                max_retries: 0,
                ..Backoff::default()
            },
            ..opts(api.clone())
        };
        let flaky = Flaky {
            inner: FixtureTransport::load(&dir).unwrap(),
            budget: Cell::new(budget),
        };
        assert!(ingest_repo(&flaky, &store, &r, &[], &no_retry, &mut no_sleep()).is_err());
        let s = ingest_repo(
            &FixtureTransport::load(&dir).unwrap(),
            &store,
            &r,
            &[],
            &no_retry,
            &mut no_sleep(),
        )
        .unwrap();
        assert!(s.complete);
        assert_eq!(fs::read(store.repo_path(&r)).unwrap(), want, "budget {budget}");
    }
}

/// Minimal HTTP/1.1 server answering from fixture entries by path and query.
fn serve(entries: Vec<FixtureEntry>) -> (String, Arc<Mutex<Vec<String>>>) {
    let routes: BTreeMap<String, FixtureEntry> = entries
        .into_iter()
        .map(|e| {
            let path = e.request.url.trim_start_matches("https://api.github.com").to_string();
            (path, e)
        })
        .collect();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let auth = Arc::new(Mutex::new(Vec::new()));
    let seen = Arc::clone(&auth);
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line.trim().is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("authorization") {
                        seen.lock().unwrap().push(v.trim().to_string());
                    }
                }
            }
            let (status, headers, body) = match routes.get(&path) {
                Some(e) => (
                    e.response.status,
                    e.response.headers.clone(),
                    e.response.body.to_string(),
                ),
                None => (404, BTreeMap::new(), r#"{"message":"Not Found"}"#.to_string()),
            };
            let mut head = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n",
                body.len()
            );
            for (k, v) in headers {
                head.push_str(&format!("{k}: {v}\r\n"));
            }
            head.push_str("\r\n");
            let _ = stream.write_all(head.as_bytes());
            let _ = stream.write_all(body.as_bytes());
        }
    });
    (base, auth)
}

fn load_entries(dir: &Path) -> Vec<FixtureEntry> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "ndjson") {
            for line in fs::read_to_string(&path).unwrap().lines() {
                out.push(serde_json::from_str(line).unwrap());
            }
        }
    }
    out
}

#[test]
fn live_and_replay_persist_identical_bytes() {
    let dir = fixtures("api");
    let (base, auth) = serve(load_entries(&dir));
    let live_api = ApiConfig {
        base_url: base,
        ..small_pages()
    };
    let repos = ["acme/widget", "acme/gadget", "acme/empty"];

    let live_dir = tempfile::tempdir().unwrap();
    let live_store = Store::create(live_dir.path().join("store")).unwrap();
    let tape = live_dir.path().join("tape.ndjson");
    {
        let recorder = Recorder::new(LiveTransport::new("secret-token".into()), &tape).unwrap();
        for r in repos {
            ingest_repo(
                &recorder,
                &live_store,
                &repo(r),
                &[],
                &opts(live_api.clone()),
                &mut no_sleep(),
            )
            .unwrap();
        }
    }
    assert!(auth.lock().unwrap().iter().all(|a| a == "Bearer secret-token"));
    assert!(!fs::read_to_string(&tape).unwrap().contains("secret-token"));

    let replay_dir = tempfile::tempdir().unwrap();
    let replay_store = Store::create(replay_dir.path()).unwrap();
    for r in repos {
        ingest_repo(
            &api_fixtures(),
            &replay_store,
            &repo(r),
            &[],
            &opts(small_pages()),
            &mut no_sleep(),
        )
        .unwrap();
    }

    let rerun_dir = tempfile::tempdir().unwrap();
    let rerun_store = Store::create(rerun_dir.path()).unwrap();
    let taped = FixtureTransport::load(live_dir.path()).unwrap();
    for r in repos {
        ingest_repo(
            &taped,
            &rerun_store,
            &repo(r),
            &[],
            &opts(live_api.clone()),
            &mut no_sleep(),
        )
        .unwrap();
    }

    for r in repos {
        let r = repo(r);
        let live = fs::read(live_store.repo_path(&r)).unwrap();
        assert_eq!(live, fs::read(replay_store.repo_path(&r)).unwrap(), "{r}");
        assert_eq!(live, fs::read(rerun_store.repo_path(&r)).unwrap(), "{r}");
    }
}

#[test]
fn persisted_lines_round_trip_through_the_record_parser() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::create(dir.path()).unwrap();
    ingest_repo(
        &api_fixtures(),
        &store,
        &repo("acme/gadget"),
        &[],
        &opts(small_pages()),
        &mut no_sleep(),
    )
    .unwrap();
    let text = fs::read_to_string(store.repo_path(&repo("acme/gadget"))).unwrap();
    for line in text.lines() {
        let rec: prmerge::core::pr::PullRequestRecord = serde_json::from_str(line).unwrap();
        assert_eq!(serde_json::to_string(&rec).unwrap(), line);
    }
}
