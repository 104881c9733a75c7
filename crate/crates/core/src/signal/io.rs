//! Line-oriented text formats.
//!
//! Session file:
//!
//! ```text
//! label=HB rate_hz=25 id=HB-003
//! 0.0132 -0.0411 -2.87
//! ...
//! ```
//!
//! Window file: a sequence of blocks, each a header with `start=`, `width=`
//! and `origin=original|synthetic` tags followed by `width` sample lines.
//! A manifest lists one session file path per line, relative to itself.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::signal::{EventCategory, SessionRecording, SignalWindow, WindowOrigin, WindowedDataset, AXES};

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn header_tags(path: &Path, line_no: usize, line: &str) -> Result<BTreeMap<String, String>> {
    line.split(' ')
        .filter(|t| !t.is_empty())
        .map(|tok| {
            tok.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| parse_err(path, line_no, format!("malformed header tag `{tok}`")))
        })
        .collect()
}

fn tag<'a>(tags: &'a BTreeMap<String, String>, key: &str, path: &Path, line: usize) -> Result<&'a str> {
    tags.get(key)
        .map(String::as_str)
        .ok_or_else(|| parse_err(path, line, format!("header lacks `{key}=`")))
}

fn parse_sample(path: &Path, line_no: usize, line: &str) -> Result<[f64; AXES]> {
    let fields: Vec<&str> = line.split(' ').collect();
    if fields.len() != AXES {
        return Err(parse_err(
            path,
            line_no,
            format!("expected {AXES} space-separated values, got {}", fields.len()),
        ));
    }
    let mut out = [0.0; AXES];
    for (slot, f) in out.iter_mut().zip(fields) {
        *slot = f
            .parse::<f64>()
            .map_err(|e| parse_err(path, line_no, format!("`{f}`: {e}")))?;
        if !slot.is_finite() {
            return Err(parse_err(path, line_no, "non-finite sample"));
        }
    }
    Ok(out)
}

pub fn format_session(session: &SessionRecording) -> String {
    let mut out = format!(
        "label={} rate_hz={} id={}\n",
        session.label, session.sample_rate_hz, session.session_id
    );
    for s in &session.samples {
        let _ = writeln!(out, "{} {} {}", s[0], s[1], s[2]);
    }
    out
}

pub fn parse_session(text: &str, path: &Path) -> Result<SessionRecording> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty session file"))?;
    let tags = header_tags(path, 1, header)?;
    let label: EventCategory = tag(&tags, "label", path, 1)?
        .parse()
        .map_err(|e: Error| parse_err(path, 1, e.to_string()))?;
    let sample_rate_hz: u32 = tag(&tags, "rate_hz", path, 1)?
        .parse()
        .map_err(|_| parse_err(path, 1, "rate_hz is not an integer"))?;
    let session_id = tag(&tags, "id", path, 1)?.to_string();
    let samples = lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_sample(path, i + 1, l))
        .collect::<Result<Vec<_>>>()?;
    Ok(SessionRecording {
        session_id,
        label,
        sample_rate_hz,
        samples,
    })
}

pub fn write_session(session: &SessionRecording, path: &Path) -> Result<()> {
    fs::write(path, format_session(session)).map_err(|e| Error::io(path, e))
}

pub fn read_session(path: &Path) -> Result<SessionRecording> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_session(&text, path)
}

/// Writes one file per session into `dir` plus `manifest.txt`; returns the manifest path.
pub fn write_sessions(sessions: &[SessionRecording], dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::new();
    for s in sessions {
        let name = format!("{}.txt", s.session_id);
        write_session(s, &dir.join(&name))?;
        manifest.push_str(&name);
        manifest.push('\n');
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Reads every session listed in a manifest, in manifest order.
pub fn read_manifest(path: &Path) -> Result<Vec<SessionRecording>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let p = Path::new(l);
            read_session(&if p.is_absolute() { p.to_path_buf() } else { base.join(p) })
        })
        .collect()
}

pub fn format_windows(dataset: &WindowedDataset, sample_rate_hz: u32) -> String {
    let mut out = String::new();
    for w in &dataset.windows {
        let _ = writeln!(
            out,
            "label={} rate_hz={} id={} start={} width={} origin={}",
            w.label,
            sample_rate_hz,
            w.origin.session_id,
            w.origin.start,
            w.width,
            if w.origin.synthetic { "synthetic" } else { "original" }
        );
        for step in 0..w.width {
            let _ = writeln!(out, "{} {} {}", w.at(0, step), w.at(1, step), w.at(2, step));
        }
    }
    out
}

pub fn parse_windows(text: &str, path: &Path) -> Result<WindowedDataset> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    let mut windows = Vec::new();
    let mut pos = 0;
    while pos < lines.len() {
        let (line_no, header) = lines[pos];
        let tags = header_tags(path, line_no, header)?;
        let label: EventCategory = tag(&tags, "label", path, line_no)?
            .parse()
            .map_err(|e: Error| parse_err(path, line_no, e.to_string()))?;
        let width: usize = tag(&tags, "width", path, line_no)?
            .parse()
            .map_err(|_| parse_err(path, line_no, "width is not an integer"))?;
        let start: usize = tag(&tags, "start", path, line_no)?
            .parse()
            .map_err(|_| parse_err(path, line_no, "start is not an integer"))?;
        let synthetic = match tag(&tags, "origin", path, line_no)? {
            "synthetic" => true,
            "original" => false,
            other => return Err(parse_err(path, line_no, format!("unknown origin `{other}`"))),
        };
        let session_id = tag(&tags, "id", path, line_no)?.to_string();
        if width == 0 || pos + width >= lines.len() {
            return Err(parse_err(path, line_no, "truncated or empty window block"));
        }
        let mut values = vec![0.0; AXES * width];
        for step in 0..width {
            let (n, l) = lines[pos + 1 + step];
            let s = parse_sample(path, n, l)?;
            for axis in 0..AXES {
                values[axis * width + step] = s[axis];
            }
        }
        windows.push(
            SignalWindow::new(
                values,
                width,
                label,
                WindowOrigin {
                    session_id,
                    start,
                    synthetic,
                },
            )
            .map_err(|e| parse_err(path, line_no, e.to_string()))?,
        );
        pos += width + 1;
    }
    WindowedDataset::new(windows, 0)
}

pub fn write_windows(dataset: &WindowedDataset, sample_rate_hz: u32, path: &Path) -> Result<()> {
    fs::write(path, format_windows(dataset, sample_rate_hz)).map_err(|e| Error::io(path, e))
}

pub fn read_windows(path: &Path) -> Result<WindowedDataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_windows(&text, path)
}
