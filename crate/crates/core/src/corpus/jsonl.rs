//! Line-delimited JSON corpus format.
//!
//! One document per line:
//! `{"id", "domain", "genre_tags", "eval_score", "segments": [{"text", "time_start"?, "time_end"?}]}`.
//! Two optional extensions make the format lossless for pipeline
//! intermediates: a document-level `"group"` and a per-segment `"tokens"`
//! array of `{"surface", "upos"?, "deprel"?}` that takes precedence over
//! re-tokenizing `"text"`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::Serialize;
use serde_json::{Map, Value};

use super::{tokenize, Corpus, CorpusMeta, Deprel, Document, Segment, Token, Upos};
use crate::error::{Error, Result};

static NON_FINITE_SCORE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#""eval_score"\s*:\s*"?[-+]?(NaN|nan|Infinity|inf)"#).unwrap()
});
static ID_FIELD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#""id"\s*:\s*"([^"]*)""#).unwrap());

struct LineCtx<'a> {
    file: &'a str,
    line: usize,
}

impl LineCtx<'_> {
    fn err(&self, field: impl Into<String>, message: impl Into<String>) -> Error {
        Error::Record {
            file: self.file.to_string(),
            line: self.line,
            field: field.into(),
            message: message.into(),
        }
    }
}

pub(super) fn load(path: &Path, subtitles: bool) -> Result<Vec<Document>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ctx = LineCtx {
            file: &name,
            line: i + 1,
        };
        docs.push(parse_record(&line, &ctx, subtitles)?);
    }
    Ok(docs)
}

fn parse_record(line: &str, ctx: &LineCtx, subtitles: bool) -> Result<Document> {
    let value: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => {
            if NON_FINITE_SCORE.is_match(line) {
                let id = ID_FIELD
                    .captures(line)
                    .map(|c| c[1].to_string())
                    .unwrap_or_else(|| "?".into());
                return Err(ctx.err(
                    "eval_score",
                    format!("record `{id}` has a non-finite score"),
                ));
            }
            return Err(ctx.err("<record>", format!("invalid JSON: {e}")));
        }
    };
    let obj = value
        .as_object()
        .ok_or_else(|| ctx.err("<record>", "expected a JSON object"))?;

    let id = req_str(obj, "id", ctx)?;
    if id.is_empty() {
        return Err(ctx.err("id", "must be non-empty"));
    }
    let domain = req_str(obj, "domain", ctx)?;
    let genre_tags = match obj.get("genre_tags") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| ctx.err("genre_tags", "expected an array of strings"))
            })
            .collect::<Result<_>>()?,
        Some(_) => return Err(ctx.err("genre_tags", "expected an array of strings")),
    };
    let eval_score = match obj.get("eval_score") {
        Some(Value::Number(n)) => n.as_f64().filter(|x| x.is_finite()),
        Some(Value::String(s)) => {
            return Err(ctx.err(
                "eval_score",
                format!("record `{id}`: expected a finite number, got string {s:?}"),
            ))
        }
        None => return Err(ctx.err("eval_score", format!("record `{id}`: missing"))),
        Some(_) => None,
    }
    .ok_or_else(|| ctx.err("eval_score", format!("record `{id}`: expected a finite number")))?;
    let group = match obj.get("group") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            v.as_u64()
                .ok_or_else(|| ctx.err("group", "expected a nonnegative integer"))?
                as usize,
        ),
    };

    let segs = obj
        .get("segments")
        .and_then(Value::as_array)
        .ok_or_else(|| ctx.err("segments", format!("record `{id}`: expected an array")))?;
    let mut segments = Vec::with_capacity(segs.len());
    let mut last_start = f64::NEG_INFINITY;
    for (si, seg) in segs.iter().enumerate() {
        let field = |f: &str| format!("segments[{si}].{f}");
        let seg = seg
            .as_object()
            .ok_or_else(|| ctx.err(format!("segments[{si}]"), "expected an object"))?;
        let raw_text = match seg.get("text") {
            Some(Value::String(s)) => Some(s.clone()),
            None | Some(Value::Null) => None,
            Some(_) => return Err(ctx.err(field("text"), "expected a string")),
        };
        let time_start = opt_f64(seg, "time_start", &field("time_start"), ctx)?;
        let time_end = opt_f64(seg, "time_end", &field("time_end"), ctx)?;
        if subtitles {
            let (Some(ts), Some(te)) = (time_start, time_end) else {
                return Err(ctx.err(
                    field(if time_start.is_none() { "time_start" } else { "time_end" }),
                    "subtitle cues require time_start and time_end",
                ));
            };
            if te < ts {
                return Err(ctx.err(field("time_end"), "precedes time_start"));
            }
            if ts < last_start {
                return Err(ctx.err(field("time_start"), "cues must be in ascending time order"));
            }
            last_start = ts;
        }
        let tokens = match seg.get("tokens") {
            None | Some(Value::Null) => match &raw_text {
                Some(t) => tokenize(t),
                None => return Err(ctx.err(field("text"), "missing (and no tokens given)")),
            },
            Some(Value::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(ti, t)| parse_token(t, &format!("segments[{si}].tokens[{ti}]"), ctx))
                .collect::<Result<_>>()?,
            Some(_) => return Err(ctx.err(field("tokens"), "expected an array")),
        };
        segments.push(Segment {
            index: si,
            tokens,
            raw_text,
            time_start,
            time_end,
        });
    }
    Ok(Document {
        id,
        domain,
        genre_tags,
        eval_score,
        segments,
        group,
    })
}

fn req_str(obj: &Map<String, Value>, key: &str, ctx: &LineCtx) -> Result<String> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(ctx.err(key, "expected a string")),
        None => Err(ctx.err(key, "missing")),
    }
}

fn opt_f64(
    obj: &Map<String, Value>,
    key: &str,
    field: &str,
    ctx: &LineCtx,
) -> Result<Option<f64>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_f64()
            .filter(|x| x.is_finite())
            .map(Some)
            .ok_or_else(|| ctx.err(field, "expected a finite number")),
    }
}

fn parse_token(v: &Value, field: &str, ctx: &LineCtx) -> Result<Token> {
    let obj = v
        .as_object()
        .ok_or_else(|| ctx.err(field, "expected an object"))?;
    let surface = obj
        .get("surface")
        .and_then(Value::as_str)
        .ok_or_else(|| ctx.err(format!("{field}.surface"), "expected a string"))?;
    let upos = match obj.get("upos").and_then(Value::as_str) {
        None => None,
        Some(s) => Some(
            Upos::parse(s)
                .ok_or_else(|| ctx.err(format!("{field}.upos"), format!("unknown tag `{s}`")))?,
        ),
    };
    let deprel = match obj.get("deprel").and_then(Value::as_str) {
        None => None,
        Some(s) => Some(Deprel::parse(s).ok_or_else(|| {
            ctx.err(format!("{field}.deprel"), format!("unknown label `{s}`"))
        })?),
    };
    Ok(Token {
        surface: surface.to_string(),
        upos,
        deprel,
        is_stopword: false,
    })
}

#[derive(Serialize)]
struct TokenOut<'a> {
    surface: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    upos: Option<Upos>,
    #[serde(skip_serializing_if = "Option::is_none")]
    deprel: Option<Deprel>,
}

#[derive(Serialize)]
struct SegmentOut<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    text: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    time_start: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    time_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<TokenOut<'a>>>,
}

#[derive(Serialize)]
struct DocumentOut<'a> {
    id: &'a str,
    domain: &'a str,
    genre_tags: &'a [String],
    eval_score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    group: Option<usize>,
    segments: Vec<SegmentOut<'a>>,
}

fn needs_tokens(seg: &Segment) -> bool {
    match &seg.raw_text {
        None => true,
        Some(text) => {
            seg.tokens.iter().any(Token::is_annotated)
                || super::tokenize_surfaces(text)
                    .into_iter()
                    .ne(seg.tokens.iter().map(|t| t.surface.as_str()))
        }
    }
}

/// Writes the corpus in the extended JSONL format, one document per line.
pub fn write_jsonl(corpus: &Corpus, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for d in &corpus.documents {
        let out = DocumentOut {
            id: &d.id,
            domain: &d.domain,
            genre_tags: &d.genre_tags,
            eval_score: d.eval_score,
            group: d.group,
            segments: d
                .segments
                .iter()
                .map(|s| SegmentOut {
                    text: s.raw_text.as_deref(),
                    time_start: s.time_start,
                    time_end: s.time_end,
                    tokens: needs_tokens(s).then(|| {
                        s.tokens
                            .iter()
                            .map(|t| TokenOut {
                                surface: &t.surface,
                                upos: t.upos,
                                deprel: t.deprel,
                            })
                            .collect()
                    }),
                })
                .collect(),
        };
        serde_json::to_writer(&mut w, &out).map_err(|e| Error::Internal(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a corpus written by [`write_jsonl`], keeping stored groups.
pub fn read_jsonl(path: &Path, meta: CorpusMeta) -> Result<Corpus> {
    Corpus::new(load(path, false)?, meta)
}
