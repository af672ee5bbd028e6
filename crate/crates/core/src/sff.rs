//! Recovery of structured pros/cons output from LLM text.
//!
//! [`parse_direct`] accepts only strict JSON (optionally wrapped in prose or
//! a code fence) whose keys are exactly the sketch fields. [`sff_recover`]
//! handles everything else in three steps:
//!
//! 1. **Sketch**: the expected fields and their shapes ([`SummarySketch`]).
//! 2. **Fetch**: quotes are normalized, commas and brackets repaired, and the
//!    result parsed as JSON. If that yields none of the fields, field anchors
//!    such as `Pros:` or `"cons":` are located with regular expressions and
//!    the text between them is read as quoted strings, bullet lists,
//!    numbered lists, or a bare line.
//! 3. **Fill**: fetched items are trimmed and placed into the sketch.
//!
//! Recovery never invents text: a string cut off by the end of the output
//! or by a line break is dropped rather than completed.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use regex::Regex;
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldShape {
    StringList,
    Scalar,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSpec {
    pub name: String,
    pub shape: FieldShape,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SketchError {
    #[error("sketch needs at least one field")]
    NoFields,
    #[error("empty field name")]
    EmptyName,
    #[error("duplicate field name {0:?}")]
    Duplicate(String),
}

/// Expected output structure: ordered, uniquely named fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummarySketch {
    fields: Vec<FieldSpec>,
}

impl SummarySketch {
    pub fn new(fields: Vec<FieldSpec>) -> Result<Self, SketchError> {
        if fields.is_empty() {
            return Err(SketchError::NoFields);
        }
        for (i, f) in fields.iter().enumerate() {
            if f.name.trim().is_empty() {
                return Err(SketchError::EmptyName);
            }
            if fields[..i].iter().any(|g| g.name.eq_ignore_ascii_case(&f.name)) {
                return Err(SketchError::Duplicate(f.name.clone()));
            }
        }
        Ok(SummarySketch { fields })
    }

    fn of(fields: &[(&str, FieldShape)]) -> Self {
        SummarySketch {
            fields: fields
                .iter()
                .map(|&(name, shape)| FieldSpec {
                    name: name.to_string(),
                    shape,
                })
                .collect(),
        }
    }

    /// `{"pros": [..], "cons": [..]}`
    pub fn pros_cons() -> Self {
        Self::of(&[("pros", FieldShape::StringList), ("cons", FieldShape::StringList)])
    }

    /// Reranker answer: `{"index": n, "sentence": ".."}`
    pub fn extractive_choice() -> Self {
        Self::of(&[("index", FieldShape::Scalar), ("sentence", FieldShape::Scalar)])
    }

    /// Abstractor answer: `{"sentence": ".."}`
    pub fn abstractive_sentence() -> Self {
        Self::of(&[("sentence", FieldShape::Scalar)])
    }

    pub fn fields(&self) -> &[FieldSpec] {
        &self.fields
    }
}

impl Default for SummarySketch {
    fn default() -> Self {
        Self::pros_cons()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMethod {
    Direct,
    Sff,
}

/// Field values recovered from one LLM output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecoveredSummary {
    pub fields: Vec<(String, Vec<String>)>,
    pub method: ParseMethod,
    /// True when every field holds at least one item.
    pub valid: bool,
}

impl RecoveredSummary {
    fn new(fields: Vec<(String, Vec<String>)>, method: ParseMethod) -> Self {
        let valid = fields.iter().all(|(_, items)| !items.is_empty());
        RecoveredSummary {
            fields,
            method,
            valid,
        }
    }

    pub fn get(&self, field: &str) -> &[String] {
        self.fields
            .iter()
            .find(|(name, _)| name == field)
            .map_or(&[], |(_, items)| items.as_slice())
    }

    pub fn first(&self, field: &str) -> Option<&str> {
        self.get(field).first().map(String::as_str)
    }

    pub fn pros(&self) -> &[String] {
        self.get("pros")
    }

    pub fn cons(&self) -> &[String] {
        self.get("cons")
    }

    /// The recovered fields as a clean JSON object.
    pub fn to_json(&self) -> Value {
        Value::Object(
            self.fields
                .iter()
                .map(|(k, v)| (k.clone(), Value::from(v.clone())))
                .collect(),
        )
    }
}

impl Serialize for RecoveredSummary {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.fields.len() + 2))?;
        for (k, v) in &self.fields {
            map.serialize_entry(k, v)?;
        }
        map.serialize_entry("method", &self.method)?;
        map.serialize_entry("valid", &self.valid)?;
        map.end()
    }
}

/// Strict parse. `None` means the caller should fall back to [`sff_recover`].
pub fn parse_direct(raw: &str, sketch: &SummarySketch) -> Option<RecoveredSummary> {
    let body = strip_fences(raw.trim()).trim();
    let value = serde_json::from_str::<Value>(body)
        .ok()
        .or_else(|| first_balanced_object(body).and_then(|s| serde_json::from_str(s).ok()))?;
    let obj = value.as_object()?;
    if obj.len() != sketch.fields.len() {
        return None;
    }
    let mut fields = Vec::with_capacity(sketch.fields.len());
    for spec in &sketch.fields {
        let items = match (spec.shape, obj.get(&spec.name)?) {
            (FieldShape::StringList, Value::Array(items)) => items
                .iter()
                .map(|v| v.as_str().map(str::trim))
                .collect::<Option<Vec<_>>>()?
                .into_iter()
                .filter(|s| !s.is_empty())
                .map(str::to_owned)
                .collect(),
            (FieldShape::Scalar, Value::String(s)) => non_empty(s.trim()),
            (FieldShape::Scalar, Value::Number(n)) => vec![n.to_string()],
            _ => return None,
        };
        fields.push((spec.name.clone(), items));
    }
    Some(RecoveredSummary::new(fields, ParseMethod::Direct))
}

/// Lenient recovery. `None` when no field of the sketch can be located.
pub fn sff_recover(raw: &str, sketch: &SummarySketch) -> Option<RecoveredSummary> {
    let normalized = normalize_quotes(strip_fences(raw));
    let fields = recover_json(&normalized, sketch).or_else(|| fetch_by_anchor(&normalized, sketch))?;
    Some(RecoveredSummary::new(fields, ParseMethod::Sff))
}

/// [`parse_direct`] first, then [`sff_recover`].
pub fn recover(raw: &str, sketch: &SummarySketch) -> Option<RecoveredSummary> {
    parse_direct(raw, sketch).or_else(|| sff_recover(raw, sketch))
}

fn non_empty(s: &str) -> Vec<String> {
    if s.is_empty() {
        Vec::new()
    } else {
        vec![s.to_string()]
    }
}

/// Content of the first fenced block, or the input when there is none.
fn strip_fences(s: &str) -> &str {
    let Some(open) = s.find("```") else {
        return s;
    };
    let after = &s[open + 3..];
    let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
    let body = &after[body_start..];
    match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    }
}

/// First `{...}` block whose brackets balance, honoring string literals.
fn first_balanced_object(s: &str) -> Option<&str> {
    let start = s.find('{')?;
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in s[start..].char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' | '[' => depth += 1,
            '}' | ']' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(&s[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

// ---------------------------------------------------------------------------
// quote normalization

fn is_open_quote(c: char) -> bool {
    matches!(c, '\'' | '`' | '\u{2018}' | '\u{201c}' | '"')
}

/// Rewrite single, back-tick and typographic quoted strings as double-quoted
/// JSON strings. A single quote only opens a string where a JSON value or key
/// may start, and only closes one when followed by a delimiter, so
/// apostrophes inside words are left alone.
pub fn normalize_quotes(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len() + 8);
    let mut i = 0;
    // last non-whitespace char emitted outside strings
    let mut prev: Option<char> = None;
    let mut line_start = true;

    while i < chars.len() {
        let c = chars[i];
        let at_value_start = line_start || matches!(prev, None | Some('{' | '[' | ',' | ':'));
        if c == '"' || c == '\u{201c}' || (is_open_quote(c) && at_value_start) {
            let single = matches!(c, '\'' | '`' | '\u{2018}');
            out.push('"');
            i += 1;
            let mut closed = false;
            while i < chars.len() {
                let d = chars[i];
                if d == '\n' {
                    break;
                }
                if !single && d == '\\' && i + 1 < chars.len() && chars[i + 1] != '\n' {
                    out.push(d);
                    out.push(chars[i + 1]);
                    i += 2;
                    continue;
                }
                let closes = if single {
                    matches!(d, '\'' | '\u{2019}') && closes_single(&chars, i + 1)
                } else {
                    matches!(d, '"' | '\u{201d}')
                };
                i += 1;
                if closes {
                    closed = true;
                    break;
                }
                if single && d == '"' {
                    out.push('\\');
                }
                if single && d == '\\' {
                    out.push('\\');
                }
                out.push(d);
            }
            if closed {
                out.push('"');
            }
            prev = Some('"');
            line_start = false;
            continue;
        }
        out.push(c);
        if c == '\n' {
            line_start = true;
        } else if !c.is_whitespace() {
            prev = Some(c);
            line_start = false;
        }
        i += 1;
    }
    out
}

fn closes_single(chars: &[char], from: usize) -> bool {
    for &c in &chars[from..] {
        match c {
            '\n' | ',' | ']' | '}' | ':' => return true,
            c if c.is_whitespace() => continue,
            _ => return false,
        }
    }
    true
}

// ---------------------------------------------------------------------------
// lexing and structural repair

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open(char),
    Close(char),
    Colon,
    Comma,
    /// Raw (still escaped) contents of a double-quoted string.
    Str { raw: String, closed: bool },
    Bare(String),
}

impl Tok {
    fn ends_value(&self) -> bool {
        matches!(self, Tok::Close(_) | Tok::Str { .. } | Tok::Bare(_))
    }

    fn starts_value(&self) -> bool {
        matches!(self, Tok::Open(_) | Tok::Str { .. } | Tok::Bare(_))
    }
}

fn lex(text: &str) -> Vec<Tok> {
    let mut toks = Vec::new();
    let mut it = text.chars().peekable();
    while let Some(c) = it.next() {
        match c {
            '{' | '[' => toks.push(Tok::Open(c)),
            '}' | ']' => toks.push(Tok::Close(c)),
            ':' => toks.push(Tok::Colon),
            ',' => toks.push(Tok::Comma),
            '"' => {
                let mut raw = String::new();
                let mut closed = false;
                while let Some(&d) = it.peek() {
                    if d == '\n' {
                        break;
                    }
                    it.next();
                    match d {
                        '"' => {
                            closed = true;
                            break;
                        }
                        '\\' => {
                            raw.push('\\');
                            if let Some(&e) = it.peek() {
                                if e != '\n' {
                                    raw.push(e);
                                    it.next();
                                }
                            }
                        }
                        _ => raw.push(d),
                    }
                }
                toks.push(Tok::Str { raw, closed });
            }
            c if c.is_whitespace() => {}
            c => {
                let mut word = String::from(c);
                while let Some(&d) = it.peek() {
                    if d.is_whitespace() || matches!(d, '{' | '}' | '[' | ']' | ':' | ',' | '"') {
                        break;
                    }
                    word.push(d);
                    it.next();
                }
                toks.push(Tok::Bare(word));
            }
        }
    }
    toks
}

fn is_json_literal(word: &str) -> bool {
    matches!(word, "true" | "false" | "null") || serde_json::from_str::<serde_json::Number>(word).is_ok()
}

/// Drop truncated strings and junk words, then fix duplicate, trailing,
/// leading and missing commas.
fn repair_commas(toks: Vec<Tok>) -> Vec<Tok> {
    let mut out: Vec<Tok> = Vec::with_capacity(toks.len());
    for tok in toks {
        match &tok {
            Tok::Str { closed: false, .. } => continue,
            Tok::Bare(w) if !is_json_literal(w) => continue,
            Tok::Comma => {
                if matches!(out.last(), None | Some(Tok::Comma | Tok::Open(_) | Tok::Colon)) {
                    continue;
                }
            }
            Tok::Close(_) => {
                if matches!(out.last(), Some(Tok::Comma)) {
                    out.pop();
                }
            }
            Tok::Colon => {
                if matches!(out.last(), None | Some(Tok::Colon)) {
                    continue;
                }
            }
            t if t.starts_value() && out.last().is_some_and(Tok::ends_value) => out.push(Tok::Comma),
            _ => {}
        }
        out.push(tok);
    }
    out
}

/// Insert missing closers, drop unmatched ones, and stop at the end of the
/// first top-level value.
fn balance_brackets(toks: Vec<Tok>) -> Vec<Tok> {
    let closer = |open: char| if open == '{' { '}' } else { ']' };
    let mut out = Vec::with_capacity(toks.len() + 2);
    let mut stack: Vec<char> = Vec::new();
    for tok in toks {
        match tok {
            Tok::Open(c) => {
                stack.push(c);
                out.push(Tok::Open(c));
            }
            Tok::Close(c) => {
                let Some(depth) = stack.iter().rposition(|&o| closer(o) == c) else {
                    continue;
                };
                if matches!(out.last(), Some(Tok::Comma)) {
                    out.pop();
                }
                while stack.len() > depth {
                    let o = stack.pop().expect("non-empty");
                    out.push(Tok::Close(closer(o)));
                }
                if stack.is_empty() {
                    return out;
                }
            }
            other => out.push(other),
        }
    }
    if matches!(out.last(), Some(Tok::Comma)) {
        out.pop();
    }
    while let Some(o) = stack.pop() {
        out.push(Tok::Close(closer(o)));
    }
    out
}

fn render(toks: &[Tok]) -> String {
    let mut s = String::new();
    for t in toks {
        match t {
            Tok::Open(c) | Tok::Close(c) => s.push(*c),
            Tok::Colon => s.push(':'),
            Tok::Comma => s.push(','),
            Tok::Str { raw, .. } => {
                s.push('"');
                s.push_str(&sanitize_escapes(raw));
                s.push('"');
            }
            Tok::Bare(w) => s.push_str(w),
        }
        s.push(' ');
    }
    s
}

/// Make string contents acceptable to a strict JSON parser: escape control
/// characters and neutralize escapes JSON does not define.
fn sanitize_escapes(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.peek() {
                Some(&e @ ('"' | '\\' | '/' | 'b' | 'f' | 'n' | 'r' | 't')) => {
                    out.push('\\');
                    out.push(e);
                    chars.next();
                }
                Some('u') => {
                    let hex: String = chars.clone().skip(1).take(4).collect();
                    if hex.len() == 4 && hex.chars().all(|h| h.is_ascii_hexdigit()) {
                        out.push('\\');
                    } else {
                        out.push_str("\\\\");
                    }
                }
                _ => out.push_str("\\\\"),
            },
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out
}

fn unescape(raw: &str) -> String {
    serde_json::from_str::<String>(&format!("\"{}\"", sanitize_escapes(raw))).unwrap_or_else(|_| raw.to_string())
}

/// A quoted value: only surrounding whitespace is removed.
fn quoted_item(s: &str) -> Option<String> {
    let s = s.trim();
    (!s.is_empty()).then(|| s.to_string())
}

/// Unquoted text: trailing list punctuation is dropped too.
fn clean_item(s: &str) -> Option<String> {
    quoted_item(s.trim().trim_end_matches([',', ';']))
}

fn value_items(value: &Value, shape: FieldShape) -> Vec<String> {
    let scalar = |v: &Value| match v {
        Value::String(s) => quoted_item(s),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    };
    let items: Vec<String> = match value {
        Value::Array(a) => a.iter().filter_map(scalar).collect(),
        other => scalar(other).into_iter().collect(),
    };
    match shape {
        FieldShape::StringList => items,
        FieldShape::Scalar => items.into_iter().take(1).collect(),
    }
}

fn recover_json(text: &str, sketch: &SummarySketch) -> Option<Vec<(String, Vec<String>)>> {
    let start = text.find('{')?;
    let toks = balance_brackets(repair_commas(lex(&text[start..])));
    let value: Value = serde_json::from_str(&render(&toks)).ok()?;
    let obj = value.as_object()?;
    let lookup = |name: &str| {
        obj.iter()
            .find(|(k, _)| k.trim().eq_ignore_ascii_case(name))
            .map(|(_, v)| v)
    };
    if sketch.fields.iter().all(|f| lookup(&f.name).is_none()) {
        return None;
    }
    Some(
        sketch
            .fields
            .iter()
            .map(|f| {
                let items = lookup(&f.name).map_or_else(Vec::new, |v| value_items(v, f.shape));
                (f.name.clone(), items)
            })
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// anchor-based fetching

fn list_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:[-*\u{2022}\u{2013}]|\d{1,3}[.)])\s+(.+?)\s*$").expect("valid regex"))
}

fn anchor_regex(sketch: &SummarySketch) -> Regex {
    static CACHE: OnceLock<Mutex<HashMap<String, Regex>>> = OnceLock::new();
    let names: Vec<String> = sketch.fields.iter().map(|f| regex::escape(&f.name)).collect();
    let alt = names.join("|");
    let mut cache = CACHE.get_or_init(Default::default).lock().unwrap_or_else(|e| e.into_inner());
    cache
        .entry(alt.clone())
        .or_insert_with(|| {
            // `"pros":`, `Pros:`, `**Cons**:` or a heading line holding only the name
            Regex::new(&format!(
                r#"(?im)\b({alt})\b["'*]*[ \t]*:|^[ \t#*]*({alt})[ \t*]*$"#
            ))
            .expect("valid regex")
        })
        .clone()
}

fn fetch_by_anchor(text: &str, sketch: &SummarySketch) -> Option<Vec<(String, Vec<String>)>> {
    let re = anchor_regex(sketch);
    // (field index, match end) of the first anchor per field, plus every anchor start
    let mut first: Vec<Option<(usize, usize)>> = vec![None; sketch.fields.len()];
    let mut boundaries = Vec::new();
    for caps in re.captures_iter(text) {
        let m = caps.get(0).expect("group 0");
        let name = caps.get(1).or_else(|| caps.get(2)).expect("one alternative matched").as_str();
        let Some(idx) = sketch.fields.iter().position(|f| f.name.eq_ignore_ascii_case(name)) else {
            continue;
        };
        boundaries.push(m.start());
        if first[idx].is_none() {
            first[idx] = Some((m.start(), m.end()));
        }
    }
    if first.iter().all(Option::is_none) {
        return None;
    }
    let fields = sketch
        .fields
        .iter()
        .zip(&first)
        .map(|(spec, anchor)| {
            let items = anchor.map_or_else(Vec::new, |(_, end)| {
                let stop = boundaries.iter().copied().filter(|&b| b >= end).min().unwrap_or(text.len());
                let items = segment_items(&text[end..stop]);
                match spec.shape {
                    FieldShape::StringList => items,
                    FieldShape::Scalar => items.into_iter().take(1).collect(),
                }
            });
            (spec.name.clone(), items)
        })
        .collect();
    Some(fields)
}

fn segment_items(segment: &str) -> Vec<String> {
    let marked: Vec<String> = segment
        .lines()
        .filter_map(|l| list_marker().captures(l))
        .filter_map(|c| clean_item(c.get(1).expect("group 1").as_str()))
        .collect();
    if !marked.is_empty() {
        return marked;
    }
    let quoted: Vec<String> = lex(segment)
        .into_iter()
        .filter_map(|t| match t {
            Tok::Str { raw, closed: true } => quoted_item(&unescape(&raw)),
            _ => None,
        })
        .collect();
    if !quoted.is_empty() {
        return quoted;
    }
    let line = segment.lines().next().unwrap_or("");
    let line = line.trim().trim_start_matches(['[', '"']).trim_end_matches([']', '}', '"', ',']);
    clean_item(line).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pc() -> SummarySketch {
        SummarySketch::pros_cons()
    }

    #[test]
    fn sketch_validation() {
        let f = |n: &str| FieldSpec { name: n.into(), shape: FieldShape::StringList };
        assert_eq!(SummarySketch::new(vec![]), Err(SketchError::NoFields));
        assert_eq!(SummarySketch::new(vec![f(" ")]), Err(SketchError::EmptyName));
        assert!(matches!(SummarySketch::new(vec![f("pros"), f("Pros")]), Err(SketchError::Duplicate(_))));
        assert!(SummarySketch::new(vec![f("pros"), f("cons")]).is_ok());
    }

    #[test]
    fn direct_rejects_prose_and_wrong_keys() {
        assert!(parse_direct("hello", &pc()).is_none());
        assert!(parse_direct(r#"{"advantages":["a"],"cons":["b"]}"#, &pc()).is_none());
        assert!(parse_direct(r#"{"pros":["a"],"cons":["b"],"extra":[]}"#, &pc()).is_none());
        assert!(parse_direct(r#"{"pros":["a", 3],"cons":["b"]}"#, &pc()).is_none());
    }

    #[test]
    fn direct_accepts_fenced_and_wrapped_json() {
        let raw = "Here you go:\n```json\n{\"pros\": [\"a\"], \"cons\": [\"b\"]}\n```\nThanks";
        let r = parse_direct(raw, &pc()).unwrap();
        assert_eq!(r.method, ParseMethod::Direct);
        assert_eq!(r.pros(), ["a"]);
        let raw = "Sure! {\"pros\": [\"a\"], \"cons\": []} hope it helps";
        let r = parse_direct(raw, &pc()).unwrap();
        assert!(!r.valid);
    }

    #[test]
    fn empty_object_is_not_recoverable() {
        assert!(parse_direct("{}", &pc()).is_none());
        assert!(sff_recover("{}", &pc()).is_none());
    }

    #[test]
    fn quote_normalization_keeps_apostrophes() {
        let n = normalize_quotes("{'pros': ['Guest's favourite bar', 'Say \"hi\"'], 'cons': []}");
        assert_eq!(n, r#"{"pros": ["Guest's favourite bar", "Say \"hi\""], "cons": []}"#);
        let n = normalize_quotes("{\u{2018}pros\u{2019}: [\u{201c}Nice\u{201d}]}");
        assert_eq!(n, r#"{"pros": ["Nice"]}"#);
    }

    #[test]
    fn curly_and_backtick_quotes_recover() {
        let raw = "{`pros': [`Clean rooms'], \u{2018}cons\u{2019}: [\u{2018}Noisy\u{2019}]}";
        let r = sff_recover(raw, &pc()).unwrap();
        assert_eq!(r.pros(), ["Clean rooms"]);
        assert_eq!(r.cons(), ["Noisy"]);
    }

    #[test]
    fn missing_field_gives_invalid_summary() {
        let r = sff_recover("{\"pros\": [\"a\", \"b\"]", &pc()).unwrap();
        assert_eq!(r.pros(), ["a", "b"]);
        assert!(r.cons().is_empty());
        assert!(!r.valid);
    }

    #[test]
    fn markdown_headings_and_bold_anchors() {
        let raw = "### Pros\n* Great pool\n* Quiet\n\n**Cons:**\n1) Pricey parking\n";
        let r = sff_recover(raw, &pc()).unwrap();
        assert_eq!(r.pros(), ["Great pool", "Quiet"]);
        assert_eq!(r.cons(), ["Pricey parking"]);
    }

    #[test]
    fn items_keep_internal_punctuation() {
        let raw = "Pros:\n- Close to the park. Also near the subway, which helps.\nCons:\n- None really";
        let r = sff_recover(raw, &pc()).unwrap();
        assert_eq!(r.pros(), ["Close to the park. Also near the subway, which helps."]);
    }

    #[test]
    fn scalar_sketches() {
        let r = recover("{\"index\": 2, \"sentence\": \"Pool is great.\"}", &SummarySketch::extractive_choice()).unwrap();
        assert_eq!(r.method, ParseMethod::Direct);
        assert_eq!(r.first("index"), Some("2"));
        let r = recover("index: 3\nsentence: \"Breakfast was fine.\"", &SummarySketch::extractive_choice()).unwrap();
        assert_eq!(r.method, ParseMethod::Sff);
        assert_eq!(r.first("index"), Some("3"));
        assert_eq!(r.first("sentence"), Some("Breakfast was fine."));
        let r = recover("{'sentence': 'Rooms are small.',}", &SummarySketch::abstractive_sentence()).unwrap();
        assert_eq!(r.first("sentence"), Some("Rooms are small."));
    }

    #[test]
    fn serializes_fields_method_and_validity() {
        let r = parse_direct(r#"{"pros":["a"],"cons":["b"]}"#, &pc()).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v, serde_json::json!({"pros":["a"],"cons":["b"],"method":"direct","valid":true}));
        assert_eq!(r.to_json(), serde_json::json!({"pros":["a"],"cons":["b"]}));
    }

    #[test]
    fn bracket_balancing_drops_stray_closers() {
        let r = sff_recover("{\"pros\": [\"a\"]]], \"cons\": [\"b\"}", &pc()).unwrap();
        assert_eq!(r.pros(), ["a"]);
        assert_eq!(r.cons(), ["b"]);
    }
}
