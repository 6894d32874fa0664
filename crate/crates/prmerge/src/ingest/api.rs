//! Issue listing, pull-request detection and detail fetching.

use std::time::Duration;

use prmerge_core::pr::{PullRequestRecord, Timestamp};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::transport::{HttpResponse, Transport};
use crate::error::{Error, Result};

/// A repository on the hosting service.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RepoRef {
    pub owner: String,
    pub name: String,
}

impl RepoRef {
    pub fn new(owner: impl Into<String>, name: impl Into<String>) -> Result<Self> {
        let repo = Self {
            owner: owner.into(),
            name: name.into(),
        };
        repo.validate()?;
        Ok(repo)
    }

    /// Parses `owner/name`.
    pub fn parse(s: &str) -> Result<Self> {
        let (owner, name) = s
            .split_once('/')
            .ok_or_else(|| Error::Config(format!("repository `{s}` is not owner/name")))?;
        Self::new(owner, name)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |part: &str| !part.is_empty() && !part.contains(['/', '\\']) && part != "." && part != "..";
        if ok(&self.owner) && ok(&self.name) {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid repository `{}/{}`",
                self.owner, self.name
            )))
        }
    }

    /// `owner/name`, the `repo_id` of its records.
    pub fn repo_id(&self) -> String {
        format!("{}/{}", self.owner, self.name)
    }

    /// Store file stem `owner__name`.
    pub fn file_stem(&self) -> String {
        format!("{}__{}", self.owner, self.name)
    }
}

impl std::fmt::Display for RepoRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.owner, self.name)
    }
}

/// Endpoint templates. Placeholders: `{base}`, `{owner}`, `{name}`,
/// `{per_page}`, `{page}` and `{number}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApiConfig {
    pub base_url: String,
    pub issues_template: String,
    pub pull_template: String,
    pub per_page: u32,
}

impl Default for ApiConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.github.com".into(),
            issues_template: "{base}/repos/{owner}/{name}/issues?state=all&per_page={per_page}&page={page}".into(),
            pull_template: "{base}/repos/{owner}/{name}/pulls/{number}".into(),
            per_page: 100,
        }
    }
}

impl ApiConfig {
    pub fn issues_url(&self, repo: &RepoRef, page: u32) -> String {
        self.fill(&self.issues_template, repo)
            .replace("{per_page}", &self.per_page.to_string())
            .replace("{page}", &page.to_string())
    }

    pub fn pull_url(&self, repo: &RepoRef, number: u64) -> String {
        self.fill(&self.pull_template, repo)
            .replace("{number}", &number.to_string())
    }

    fn fill(&self, template: &str, repo: &RepoRef) -> String {
        template
            .replace("{base}", self.base_url.trim_end_matches('/'))
            .replace("{owner}", &repo.owner)
            .replace("{name}", &repo.name)
    }
}

/// Page of issue documents plus the next page number, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct IssuePage {
    pub issues: Vec<Value>,
    pub next: Option<u32>,
}

/// Fetches one page of issues in every state. Pages start at 1.
pub fn list_issues(transport: &dyn Transport, api: &ApiConfig, repo: &RepoRef, page: u32) -> Result<IssuePage> {
    let url = api.issues_url(repo, page);
    let resp = transport.get(&url)?;
    check_status(&resp, &url)?;
    let doc: Value = serde_json::from_str(&resp.body).map_err(|e| Error::json(url.clone(), e))?;
    let Value::Array(issues) = doc else {
        return Err(Error::MalformedDocument {
            index: 0,
            reason: format!("issue listing from {url} is not an array"),
        });
    };
    let next = match resp.header("link") {
        Some(link) => next_page(link)?,
        None => None,
    };
    Ok(IssuePage { issues, next })
}

/// Extracts the `page` parameter of the `rel="next"` entry of a Link header.
pub fn next_page(link: &str) -> Result<Option<u32>> {
    for part in link.split(',') {
        let mut pieces = part.split(';');
        let target = pieces.next().unwrap_or("").trim();
        if !pieces.any(|p| p.trim() == r#"rel="next""#) {
            continue;
        }
        let url = target.trim_start_matches('<').trim_end_matches('>');
        let query = url.split_once('?').map(|(_, q)| q).unwrap_or("");
        for kv in query.split('&') {
            if let Some(v) = kv.strip_prefix("page=") {
                return v
                    .parse()
                    .map(Some)
                    .map_err(|_| Error::Transport(format!("bad page in Link header: {link}")));
            }
        }
        return Err(Error::Transport(format!("next link without page: {link}")));
    }
    Ok(None)
}

/// Maps non-success statuses onto typed errors.
pub fn check_status(resp: &HttpResponse, url: &str) -> Result<()> {
    match resp.status {
        200..=299 => Ok(()),
        401 => Err(Error::Auth(format!("401 from {url}"))),
        403 | 429 if resp.status == 429 || is_rate_limited(resp) => Err(Error::RateLimited {
            retry_after: retry_after(resp),
        }),
        403 => Err(Error::Auth(format!("403 from {url}"))),
        404 | 410 => Err(Error::NotFound(url.to_string())),
        status => Err(Error::Http {
            status,
            url: url.to_string(),
        }),
    }
}

fn is_rate_limited(resp: &HttpResponse) -> bool {
    resp.header("x-ratelimit-remaining") == Some("0") || resp.header("retry-after").is_some()
}

fn retry_after(resp: &HttpResponse) -> Duration {
    if let Some(secs) = resp.header("retry-after").and_then(|v| v.trim().parse::<u64>().ok()) {
        return Duration::from_secs(secs);
    }
    if let Some(reset) = resp
        .header("x-ratelimit-reset")
        .and_then(|v| v.trim().parse::<i64>().ok())
    {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs() as i64);
        return Duration::from_secs((reset - now).max(1) as u64);
    }
    Duration::from_secs(60)
}

/// An issue that carries a pull-request link.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PrRef {
    pub repo: RepoRef,
    pub number: u64,
}

/// Keeps exactly the issues that have a `pull_request` field.
pub fn identify_pull_requests(repo: &RepoRef, issues: &[Value]) -> Result<Vec<PrRef>> {
    let mut out = Vec::new();
    for (index, doc) in issues.iter().enumerate() {
        let Value::Object(map) = doc else {
            return Err(Error::MalformedDocument {
                index,
                reason: "not a JSON object".into(),
            });
        };
        if matches!(map.get("pull_request"), None | Some(Value::Null)) {
            continue;
        }
        let number = map
            .get("number")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::MalformedDocument {
                index,
                reason: "missing numeric `number`".into(),
            })?;
        out.push(PrRef {
            repo: repo.clone(),
            number,
        });
    }
    Ok(out)
}

pub fn fetch_pr_detail(transport: &dyn Transport, api: &ApiConfig, pr: &PrRef) -> Result<PullRequestRecord> {
    let url = api.pull_url(&pr.repo, pr.number);
    let resp = transport.get(&url)?;
    check_status(&resp, &url)?;
    let doc: Value = serde_json::from_str(&resp.body).map_err(|e| Error::json(url.clone(), e))?;
    parse_pr_detail(&pr.repo, &doc)
}

/// Converts a PR detail document into a record. `pr_id` is `owner/name#number`.
pub fn parse_pr_detail(repo: &RepoRef, doc: &Value) -> Result<PullRequestRecord> {
    let number = doc.get("number").and_then(Value::as_u64);
    let context = match number {
        Some(n) => format!("{repo}#{n}"),
        None => format!("{repo} pull request"),
    };
    let number = number.ok_or_else(|| missing("number", &context))?;
    let count = |field: &'static str| {
        doc.get(field)
            .and_then(Value::as_u64)
            .ok_or_else(|| missing(field, &context))
    };
    let time = |field: &'static str| -> Result<Option<Timestamp>> {
        match doc.get(field) {
            None => Err(missing(field, &context)),
            Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => parse_time(s).map(Some).ok_or_else(|| Error::MalformedDocument {
                index: 0,
                reason: format!("{context}: `{field}` is not an RFC 3339 timestamp"),
            }),
            Some(_) => Err(missing(field, &context)),
        }
    };
    let author_id = doc
        .get("user")
        .and_then(|u| u.get("login"))
        .and_then(Value::as_str)
        .ok_or_else(|| missing("user.login", &context))?
        .to_string();
    let record = PullRequestRecord {
        pr_id: format!("{repo}#{number}"),
        repo_id: repo.repo_id(),
        author_id,
        created_at: time("created_at")?.ok_or_else(|| missing("created_at", &context))?,
        closed_at: time("closed_at")?,
        merged_at: time("merged_at")?,
        commits: count("commits")?,
        changed_files: count("changed_files")?,
        additions: count("additions")?,
        deletions: count("deletions")?,
        comments: count("comments")?,
        review_comments: count("review_comments")?,
    };
    record.validate()?;
    Ok(record)
}

fn missing(field: &'static str, context: &str) -> Error {
    Error::MissingField {
        field,
        context: context.to_string(),
    }
}

fn parse_time(s: &str) -> Option<Timestamp> {
    chrono::DateTime::parse_from_rfc3339(s).ok().map(|t| t.timestamp())
}

/// Retry policy for rate limits and transient server errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backoff {
    pub max_retries: u32,
    pub base: Duration,
    pub max: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            max_retries: 6,
            base: Duration::from_secs(1),
            max: Duration::from_secs(15 * 60),
        }
    }
}

impl Backoff {
    /// Delay before retry `attempt` (0-based): exponential with up to 50%
    /// jitter, never shorter than the server's requested wait.
    pub fn delay(&self, attempt: u32, server: Option<Duration>, jitter: f64) -> Duration {
        let exp = self.base.saturating_mul(1u32 << attempt.min(20)).min(self.max);
        let jittered = exp.mul_f64(1.0 + 0.5 * jitter.clamp(0.0, 1.0));
        jittered.max(server.unwrap_or_default())
    }

    /// Runs `op`, sleeping and retrying on retryable errors.
    pub fn run<T>(
        &self,
        rng: &mut impl rand::Rng,
        sleep: &mut dyn FnMut(Duration),
        mut op: impl FnMut() -> Result<T>,
    ) -> Result<T> {
        let mut attempt = 0;
        loop {
            let err = match op() {
                Ok(v) => return Ok(v),
                Err(e) => e,
            };
            let server = match &err {
                Error::RateLimited { retry_after } => Some(*retry_after),
                Error::Http { status, .. } if *status >= 500 => None,
                Error::Transport(_) => None,
                _ => return Err(err),
            };
            if attempt >= self.max_retries {
                return Err(err);
            }
            sleep(self.delay(attempt, server, rng.random()));
            attempt += 1;
        }
    }
}
