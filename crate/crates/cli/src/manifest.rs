//! Segment label manifest: tab-separated `file start end label kind`, one
//! segment per line after a header. `label` is `normal` or `anomaly`; `kind`
//! is `-` for normal segments.

use std::path::Path;

use crate::error::{CliError, Result};
use crate::persist::write_text;

pub const HEADER: &str = "file\tstart\tend\tlabel\tkind";

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub file: String,
    pub start: f64,
    pub end: f64,
    pub anomalous: bool,
    pub kind: Option<String>,
}

pub fn to_text(entries: &[ManifestEntry]) -> String {
    let mut s = String::from(HEADER);
    s.push('\n');
    for e in entries {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            e.file,
            e.start,
            e.end,
            if e.anomalous { "anomaly" } else { "normal" },
            e.kind.as_deref().unwrap_or("-")
        ));
    }
    s
}

pub fn parse(text: &str, origin: &str) -> Result<Vec<ManifestEntry>> {
    let bad = |n: usize, msg: &str| CliError::Data(format!("{origin}:{n}: {msg}"));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == HEADER => {}
        _ => return Err(bad(1, "missing manifest header")),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(bad(n, "expected 5 tab-separated fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(n, "bad time value"));
        let (start, end) = (num(fields[1])?, num(fields[2])?);
        if !(start >= 0.0 && end > start) {
            return Err(bad(n, "segment must satisfy 0 <= start < end"));
        }
        let anomalous = match fields[3] {
            "anomaly" => true,
            "normal" => false,
            _ => return Err(bad(n, "label must be 'normal' or 'anomaly'")),
        };
        let kind = (fields[4] != "-").then(|| fields[4].to_string());
        out.push(ManifestEntry {
            file: fields[0].to_string(),
            start,
            end,
            anomalous,
            kind,
        });
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(&text, &path.display().to_string())
}

pub fn write(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    write_text(path, &to_text(entries))
}
