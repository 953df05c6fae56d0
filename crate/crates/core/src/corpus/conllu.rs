//! CoNLL-U directory reader: one `*.conllu` file per document, file stem = id.
//!
//! Document metadata comes from comment lines anywhere in the file:
//! `# eval_score = <number>` (required), `# domain = <str>` and
//! `# genre_tags = a, b`. A `# segment_id = <int>` comment tags the following
//! sentences; a change in value starts a new segment, and values must never
//! decrease. Only FORM, UPOS and DEPREL are consumed.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{Deprel, Document, Segment, Token, Upos};
use crate::error::{Error, Result};

pub(super) fn load_dir(dir: &Path) -> Result<Vec<Document>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "conllu"))
        .collect();
    files.sort();
    files.par_iter().map(|p| load_file(p)).collect()
}

fn record_err(file: &Path, line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Record {
        file: file.display().to_string(),
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

struct SegmentBuilder {
    tokens: Vec<Token>,
    text: Vec<String>,
}

impl SegmentBuilder {
    fn new() -> Self {
        SegmentBuilder {
            tokens: Vec::new(),
            text: Vec::new(),
        }
    }

    fn finish(self, index: usize) -> Segment {
        Segment {
            index,
            tokens: self.tokens,
            raw_text: (!self.text.is_empty()).then(|| self.text.join(" ")),
            time_start: None,
            time_end: None,
        }
    }
}

pub(crate) fn load_file(path: &Path) -> Result<Document> {
    let contents = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| record_err(path, 0, "id", "file name is not valid UTF-8"))?
        .to_string();

    let mut eval_score = None;
    let mut domain = String::new();
    let mut genre_tags = Vec::new();
    let mut segments: Vec<Segment> = Vec::new();
    let mut current = SegmentBuilder::new();
    let mut current_id: Option<i64> = None;

    for (i, line) in contents.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let Some((key, value)) = comment.split_once('=') else {
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "segment_id" => {
                    let sid: i64 = value.parse().map_err(|_| {
                        record_err(path, lineno, "segment_id", format!("not an integer: {value:?}"))
                    })?;
                    match current_id {
                        Some(prev) if sid < prev => {
                            return Err(record_err(
                                path,
                                lineno,
                                "segment_id",
                                format!("decreases from {prev} to {sid}"),
                            ))
                        }
                        Some(prev) if sid == prev => {}
                        _ => {
                            if !current.tokens.is_empty() || !current.text.is_empty() {
                                let done = std::mem::replace(&mut current, SegmentBuilder::new());
                                segments.push(done.finish(segments.len()));
                            }
                            current_id = Some(sid);
                        }
                    }
                }
                "eval_score" => {
                    let s: f64 = value.parse().map_err(|_| {
                        record_err(path, lineno, "eval_score", format!("not a number: {value:?}"))
                    })?;
                    if !s.is_finite() {
                        return Err(record_err(
                            path,
                            lineno,
                            "eval_score",
                            format!("record `{id}` has a non-finite score"),
                        ));
                    }
                    eval_score.get_or_insert(s);
                }
                "domain" => domain = value.to_string(),
                "genre_tags" => {
                    genre_tags = value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(str::to_string)
                        .collect()
                }
                "text" => current.text.push(value.to_string()),
                _ => {}
            }
            continue;
        }

        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(record_err(
                path,
                lineno,
                "columns",
                format!("expected 10 tab-separated columns, found {}", cols.len()),
            ));
        }
        // multiword ranges (1-2) and empty nodes (3.1) carry no syntactic word
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let upos = match cols[3] {
            "_" => None,
            tag => Some(
                Upos::parse(tag)
                    .ok_or_else(|| record_err(path, lineno, "upos", format!("unknown tag `{tag}`")))?,
            ),
        };
        let deprel = match cols[7] {
            "_" => None,
            label => Some(Deprel::parse(label).ok_or_else(|| {
                record_err(path, lineno, "deprel", format!("unknown label `{label}`"))
            })?),
        };
        current.tokens.push(Token {
            surface: cols[1].to_string(),
            upos,
            deprel,
            is_stopword: false,
        });
    }
    if !current.tokens.is_empty() {
        segments.push(current.finish(segments.len()));
    }

    let eval_score =
        eval_score.ok_or_else(|| record_err(path, 0, "eval_score", "missing `# eval_score = ` comment"))?;
    Ok(Document {
        id,
        domain,
        genre_tags,
        eval_score,
        segments,
        group: None,
    })
}
