//! HTTP GET transports: the live API client and offline fixture replay.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable holding the API token. Never written to disk.
pub const TOKEN_ENV: &str = "PRMERGE_GITHUB_TOKEN";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    /// Header names are lower-cased.
    pub headers: BTreeMap<String, String>,
    pub body: String,
}

impl HttpResponse {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.get(&name.to_ascii_lowercase()).map(String::as_str)
    }
}

pub trait Transport {
    fn get(&self, url: &str) -> Result<HttpResponse>;
}

impl<T: Transport + ?Sized> Transport for &T {
    fn get(&self, url: &str) -> Result<HttpResponse> {
        (**self).get(url)
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn get(&self, url: &str) -> Result<HttpResponse> {
        (**self).get(url)
    }
}

/// Authenticated client for a GitHub-compatible REST API.
pub struct LiveTransport {
    agent: ureq::Agent,
    token: String,
}

impl LiveTransport {
    pub fn new(token: String) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .user_agent("prmerge")
            .build()
            .into();
        Self { agent, token }
    }

    /// Reads the token from [`TOKEN_ENV`].
    pub fn from_env() -> Result<Self> {
        match std::env::var(TOKEN_ENV) {
            Ok(token) if !token.trim().is_empty() => Ok(Self::new(token)),
            _ => Err(Error::Auth(format!("{TOKEN_ENV} is not set"))),
        }
    }
}

impl Transport for LiveTransport {
    fn get(&self, url: &str) -> Result<HttpResponse> {
        let mut resp = self
            .agent
            .get(url)
            .header("Authorization", &format!("Bearer {}", self.token))
            .header("Accept", "application/vnd.github+json")
            .call()
            .map_err(|e| Error::Transport(e.to_string()))?;
        let headers = resp
            .headers()
            .iter()
            .filter_map(|(k, v)| Some((k.as_str().to_ascii_lowercase(), v.to_str().ok()?.to_string())))
            .collect();
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(HttpResponse { status, headers, body })
    }
}

/// One recorded request/response pair; fixture files hold one per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub request: FixtureRequest,
    pub response: FixtureResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRequest {
    #[serde(default = "get_method")]
    pub method: String,
    pub url: String,
}

fn get_method() -> String {
    "GET".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureResponse {
    pub status: u16,
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    pub body: serde_json::Value,
}

/// Replays recorded responses keyed by URL. Unknown URLs answer 404.
#[derive(Debug, Default)]
pub struct FixtureTransport {
    responses: BTreeMap<String, HttpResponse>,
}

impl FixtureTransport {
    pub fn from_entries(entries: impl IntoIterator<Item = FixtureEntry>) -> Self {
        let responses = entries
            .into_iter()
            .map(|e| {
                let headers = e
                    .response
                    .headers
                    .into_iter()
                    .map(|(k, v)| (k.to_ascii_lowercase(), v))
                    .collect();
                let resp = HttpResponse {
                    status: e.response.status,
                    headers,
                    body: e.response.body.to_string(),
                };
                (e.request.url, resp)
            })
            .collect();
        Self { responses }
    }

    /// Loads every `*.ndjson` file in `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
            .collect();
        files.sort();
        let mut entries = Vec::new();
        for path in files {
            let reader = BufReader::new(File::open(&path).map_err(|e| Error::io(&path, e))?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry = serde_json::from_str(&line).map_err(|e| Error::Parse {
                    path: path.clone(),
                    line: i as u64 + 1,
                    message: e.to_string(),
                })?;
                entries.push(entry);
            }
        }
        Ok(Self::from_entries(entries))
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl Transport for FixtureTransport {
    fn get(&self, url: &str) -> Result<HttpResponse> {
        Ok(self.responses.get(url).cloned().unwrap_or(HttpResponse {
            status: 404,
            headers: BTreeMap::new(),
            body: r#"{"message":"Not Found"}"#.to_string(),
        }))
    }
}

/// Passes requests through and appends each exchange to a fixture file.
pub struct Recorder<T> {
    inner: T,
    out: Mutex<File>,
}

impl<T: Transport> Recorder<T> {
    pub fn new(inner: T, path: &Path) -> Result<Self> {
        let out = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            inner,
            out: Mutex::new(out),
        })
    }
}

impl<T: Transport> Transport for Recorder<T> {
    fn get(&self, url: &str) -> Result<HttpResponse> {
        let resp = self.inner.get(url)?;
        let body = serde_json::from_str(&resp.body).unwrap_or(serde_json::Value::String(resp.body.clone()));
        // only the headers replay needs
        let headers = resp
            .headers
            .iter()
            .filter(|(k, _)| {
                matches!(
                    k.as_str(),
                    "link" | "retry-after" | "x-ratelimit-remaining" | "x-ratelimit-reset"
                )
            })
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let entry = FixtureEntry {
            request: FixtureRequest {
                method: get_method(),
                url: url.to_string(),
            },
            response: FixtureResponse {
                status: resp.status,
                headers,
                body,
            },
        };
        let line = serde_json::to_string(&entry).map_err(|e| Error::json("fixture entry", e))?;
        let mut out = self.out.lock().expect("recorder lock poisoned");
        writeln!(out, "{line}").map_err(|e| Error::Transport(e.to_string()))?;
        Ok(resp)
    }
}
