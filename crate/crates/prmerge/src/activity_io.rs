//! Author activity events as CSV, optionally gzip-compressed.
//!
//! Columns: `author_id,timestamp,project_id,blobs_authored`.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use prmerge_core::activity::{ActivityStore, AuthorActivityEvent};

use crate::error::{Error, Result};

pub const HEADER: [&str; 4] = ["author_id", "timestamp", "project_id", "blobs_authored"];

/// Reads and indexes an event file.
pub fn load_events(path: &Path) -> Result<ActivityStore> {
    Ok(ActivityStore::new(read_events(path)?))
}

pub fn read_events(path: &Path) -> Result<Vec<AuthorActivityEvent>> {
    let mut file = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut plain = Vec::new();
        GzDecoder::new(bytes.as_slice())
            .read_to_end(&mut plain)
            .map_err(|e| Error::io(path, e))?;
        bytes = plain;
    }
    parse_events(&bytes, path)
}

fn parse_events(bytes: &[u8], path: &Path) -> Result<Vec<AuthorActivityEvent>> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(bytes);
    let mut out = Vec::new();
    let mut header_seen = false;
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if !header_seen {
            header_seen = true;
            if rec.iter().map(str::trim).ne(HEADER) {
                return Err(parse_err(line, format!("expected header {}", HEADER.join(","))));
            }
            continue;
        }
        if rec.len() != 4 {
            return Err(parse_err(line, format!("expected 4 fields, found {}", rec.len())));
        }
        let author_id = rec[0].trim();
        let project_id = rec[2].trim();
        if author_id.is_empty() || project_id.is_empty() {
            return Err(parse_err(line, "empty author_id or project_id".into()));
        }
        let timestamp = rec[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("bad timestamp `{}`", &rec[1])))?;
        let blobs_authored = rec[3]
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("bad blobs_authored `{}`", &rec[3])))?;
        out.push(AuthorActivityEvent {
            author_id: author_id.to_string(),
            timestamp,
            project_id: project_id.to_string(),
            blobs_authored,
        });
    }
    Ok(out)
}

/// Writes events in the given order; gzip when the path ends in `.gz`.
pub fn write_events(path: &Path, events: &[AuthorActivityEvent]) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(HEADER).map_err(|e| Error::io(path, e.into()))?;
        for e in events {
            w.write_record([
                e.author_id.as_str(),
                &e.timestamp.to_string(),
                &e.project_id,
                &e.blobs_authored.to_string(),
            ])
            .map_err(|e| Error::io(path, e.into()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    if path.extension().is_some_and(|x| x == "gz") {
        let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&buf).map_err(|e| Error::io(path, e))?;
        buf = enc.finish().map_err(|e| Error::io(path, e))?;
    }
    crate::ingest::write_atomic(path, &buf)
}
