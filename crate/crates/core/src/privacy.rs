//! Scan of persisted outputs for anything that could carry image content:
//! a field as large as a frame, base64 blobs, numeric arrays of pixel size,
//! image or fixture magic bytes, or unrecognised binary files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

/// Shortest run of base64 alphabet treated as an encoded blob.
pub const BASE64_MIN_LEN: usize = 128;

const MAGIC: [(&[u8], &str); 8] = [
    (b"\x89PNG", "PNG image"),
    (b"\xFF\xD8\xFF", "JPEG image"),
    (b"GIF8", "GIF image"),
    (b"BM", "BMP image"),
    (b"RIFF", "RIFF container"),
    (b"AMBF", "raw frame fixture"),
    (b"P6\n", "PPM image"),
    (b"P5\n", "PGM image"),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub file: PathBuf,
    /// Line, JSON path or CSV cell, when the finding is inside the file.
    pub location: String,
    pub reason: String,
}

fn is_base64_like(s: &str) -> bool {
    s.len() >= BASE64_MIN_LEN
        && s.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'+' | b'/' | b'=' | b'-' | b'_'))
}

fn check_str(s: &str, limit: usize, location: &str, out: &mut Vec<(String, String)>) {
    if s.len() >= limit {
        out.push((location.to_string(), format!("field of {} bytes, frame-sized limit {limit}", s.len())));
    } else if is_base64_like(s) {
        out.push((location.to_string(), format!("base64-like string of {} bytes", s.len())));
    }
}

fn walk_json(v: &Value, limit: usize, path: &str, out: &mut Vec<(String, String)>) {
    match v {
        Value::String(s) => check_str(s, limit, path, out),
        Value::Array(items) => {
            if items.len() >= limit && items.iter().all(Value::is_number) {
                out.push((path.to_string(), format!("numeric array of {} values", items.len())));
                return;
            }
            for (i, item) in items.iter().enumerate() {
                walk_json(item, limit, &format!("{path}[{i}]"), out);
            }
        }
        Value::Object(map) => {
            for (k, item) in map {
                check_str(k, limit, &format!("{path}.<key>"), out);
                walk_json(item, limit, &format!("{path}.{k}"), out);
            }
        }
        _ => {}
    }
}

/// Findings for one file's content. `limit` is the frame size in pixels.
pub fn scan_bytes(name: &Path, bytes: &[u8], limit: usize) -> Vec<Finding> {
    let mut raw = Vec::new();
    if let Some((_, what)) = MAGIC.iter().find(|(m, _)| bytes.starts_with(m)) {
        raw.push((String::new(), format!("{what} signature")));
    } else {
        match std::str::from_utf8(bytes) {
            Err(_) => raw.push((String::new(), "binary content".to_string())),
            Ok(text) => scan_text(name, text, limit, &mut raw),
        }
    }
    raw.into_iter()
        .map(|(location, reason)| Finding { file: name.to_path_buf(), location, reason })
        .collect()
}

fn scan_text(name: &Path, text: &str, limit: usize, out: &mut Vec<(String, String)>) {
    let ext = name.extension().and_then(|e| e.to_str()).unwrap_or("");
    match ext {
        "json" => match serde_json::from_str::<Value>(text) {
            Ok(v) => walk_json(&v, limit, "$", out),
            Err(e) => out.push((String::new(), format!("unparseable JSON: {e}"))),
        },
        "jsonl" => {
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                match serde_json::from_str::<Value>(line) {
                    Ok(v) => walk_json(&v, limit, &format!("line {}", i + 1), out),
                    Err(e) => out.push((format!("line {}", i + 1), format!("unparseable JSON: {e}"))),
                }
            }
        }
        "csv" => {
            let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
            for (i, rec) in rdr.records().enumerate() {
                match rec {
                    Ok(rec) => {
                        for (j, field) in rec.iter().enumerate() {
                            check_str(field, limit, &format!("row {} col {}", i + 1, j + 1), out);
                        }
                    }
                    Err(e) => out.push((format!("row {}", i + 1), format!("unparseable CSV: {e}"))),
                }
            }
        }
        _ => {
            for (i, line) in text.lines().enumerate() {
                for word in line.split_whitespace() {
                    check_str(word, limit, &format!("line {}", i + 1), out);
                }
                if line.len() >= limit {
                    out.push((format!("line {}", i + 1), format!("line of {} bytes", line.len())));
                }
            }
        }
    }
}

/// Scan every file under `dir`.
pub fn scan_dir(dir: &Path, width: u32, height: u32) -> std::io::Result<Vec<Finding>> {
    let limit = (width * height) as usize;
    let mut findings = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let mut entries: Vec<_> = fs::read_dir(&d)?.collect::<Result<_, _>>()?;
        entries.sort_by_key(|e| e.path());
        for e in entries {
            let path = e.path();
            if e.file_type()?.is_dir() {
                stack.push(path);
            } else {
                findings.extend(scan_bytes(&path, &fs::read(&path)?, limit));
            }
        }
    }
    Ok(findings)
}
