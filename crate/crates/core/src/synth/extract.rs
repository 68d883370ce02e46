//! Lexical extraction of label strings from generated rendering code.
//!
//! Each language has a small, string-literal aware scanner that recognizes a
//! fixed set of label-drawing constructs:
//!
//! * python-matplotlib: `text(x, y, s)` and `annotate(text, ...)` calls,
//!   whatever object they are invoked on, including keyword forms;
//! * latex-tikz: the brace group of `\node ... {label};`;
//! * svg: the character content of `<text>...</text>`, nested tags removed.
//!
//! Only literal text counts. A call whose text argument is a variable or an
//! interpolated f-string contributes nothing.

use super::RenderLanguage;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message} at byte {offset}")]
pub struct ExtractError {
    pub offset: usize,
    pub message: String,
}

impl ExtractError {
    fn new(offset: usize, message: impl Into<String>) -> Self {
        Self {
            offset,
            message: message.into(),
        }
    }
}

/// Label strings in source order, duplicates retained.
pub fn extract_label_calls(
    source: &str,
    language: RenderLanguage,
) -> Result<Vec<String>, ExtractError> {
    match language {
        RenderLanguage::PythonMatplotlib => python::extract(source),
        RenderLanguage::LatexTikz => tikz::extract(source),
        RenderLanguage::Svg => svg::extract(source),
    }
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

mod python {
    use super::ExtractError;

    #[derive(Debug, Clone, PartialEq)]
    enum Tok<'a> {
        Ident(&'a str),
        /// `None` for interpolated f-strings.
        Str(Option<String>),
        Punct(u8),
        Other,
    }

    fn lex(src: &str) -> Result<Vec<Tok<'_>>, ExtractError> {
        let b = src.as_bytes();
        let mut toks = Vec::new();
        let mut i = 0;
        while i < b.len() {
            let c = b[i];
            if c == b'#' {
                while i < b.len() && b[i] != b'\n' {
                    i += 1;
                }
            } else if c.is_ascii_whitespace() || c == b'\\' {
                i += 1;
            } else if c.is_ascii_alphabetic() || c == b'_' || c >= 0x80 {
                let start = i;
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_' || b[i] >= 0x80) {
                    i += 1;
                }
                let word = &src[start..i];
                if i < b.len() && (b[i] == b'"' || b[i] == b'\'') && is_string_prefix(word) {
                    let lower = word.to_ascii_lowercase();
                    let (tok, next) = string(src, i, lower.contains('r'), lower.contains('f'), start)?;
                    toks.push(tok);
                    i = next;
                } else {
                    toks.push(Tok::Ident(word));
                }
            } else if c == b'"' || c == b'\'' {
                let (tok, next) = string(src, i, false, false, i)?;
                toks.push(tok);
                i = next;
            } else if c.is_ascii_digit() {
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'.' || b[i] == b'_') {
                    i += 1;
                }
                toks.push(Tok::Other);
            } else {
                toks.push(Tok::Punct(c));
                i += 1;
            }
        }
        Ok(toks)
    }

    fn is_string_prefix(word: &str) -> bool {
        matches!(
            word.to_ascii_lowercase().as_str(),
            "r" | "u" | "b" | "f" | "rb" | "br" | "fr" | "rf"
        )
    }

    /// Lexes the literal whose opening quote is at `q`; `start` is where any
    /// prefix began and is the offset reported for unterminated literals.
    fn string(
        src: &str,
        q: usize,
        raw: bool,
        formatted: bool,
        start: usize,
    ) -> Result<(Tok<'static>, usize), ExtractError> {
        let b = src.as_bytes();
        let quote = b[q];
        let triple = b.len() >= q + 3 && b[q + 1] == quote && b[q + 2] == quote;
        let body_start = if triple { q + 3 } else { q + 1 };
        let mut i = body_start;
        loop {
            if i >= b.len() {
                return Err(ExtractError::new(start, "unterminated string literal"));
            }
            let c = b[i];
            if c == b'\\' {
                i += 2;
                continue;
            }
            if !triple && c == b'\n' {
                return Err(ExtractError::new(start, "unterminated string literal"));
            }
            if c == quote {
                if !triple {
                    break;
                }
                if b.len() >= i + 3 && b[i + 1] == quote && b[i + 2] == quote {
                    break;
                }
            }
            i += 1;
        }
        let body = &src[body_start..i];
        let end = if triple { i + 3 } else { i + 1 };
        let value = if formatted && body.contains('{') {
            None
        } else if raw {
            Some(body.to_string())
        } else {
            Some(unescape(body))
        };
        Ok((Tok::Str(value), end))
    }

    fn unescape(body: &str) -> String {
        let mut out = String::with_capacity(body.len());
        let mut chars = body.chars().peekable();
        while let Some(c) = chars.next() {
            if c != '\\' {
                out.push(c);
                continue;
            }
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('t') => out.push('\t'),
                Some('r') => out.push('\r'),
                Some('\\') => out.push('\\'),
                Some('\'') => out.push('\''),
                Some('"') => out.push('"'),
                Some('\n') => {}
                Some(h @ ('x' | 'u' | 'U')) => {
                    let len = match h {
                        'x' => 2,
                        'u' => 4,
                        _ => 8,
                    };
                    let hex: String = (0..len).filter_map(|_| chars.next()).collect();
                    match u32::from_str_radix(&hex, 16).ok().and_then(char::from_u32) {
                        Some(ch) => out.push(ch),
                        None => {
                            out.push('\\');
                            out.push(h);
                            out.push_str(&hex);
                        }
                    }
                }
                Some(other) => {
                    out.push('\\');
                    out.push(other);
                }
                None => out.push('\\'),
            }
        }
        out
    }

    /// Splits the argument list whose opening paren is token `open`.
    fn split_args<'t, 'a>(toks: &'t [Tok<'a>], open: usize) -> Vec<&'t [Tok<'a>]> {
        let mut depth = 0usize;
        let mut args = Vec::new();
        let mut arg_start = open + 1;
        let mut i = open + 1;
        while i < toks.len() {
            match toks[i] {
                Tok::Punct(b'(' | b'[' | b'{') => depth += 1,
                Tok::Punct(b')' | b']' | b'}') if depth > 0 => depth -= 1,
                Tok::Punct(b')') => {
                    if i > arg_start {
                        args.push(&toks[arg_start..i]);
                    }
                    return args;
                }
                Tok::Punct(b',') if depth == 0 => {
                    args.push(&toks[arg_start..i]);
                    arg_start = i + 1;
                }
                _ => {}
            }
            i += 1;
        }
        args
    }

    fn literal(arg: &[Tok<'_>]) -> Option<String> {
        if arg.is_empty() {
            return None;
        }
        let mut out = String::new();
        for t in arg {
            match t {
                Tok::Str(Some(s)) => out.push_str(s),
                _ => return None,
            }
        }
        Some(out)
    }

    fn keyword<'t, 'a>(arg: &'t [Tok<'a>]) -> Option<(&'a str, &'t [Tok<'a>])> {
        match arg {
            [Tok::Ident(name), Tok::Punct(b'='), rest @ ..]
                if !matches!(rest.first(), Some(Tok::Punct(b'='))) =>
            {
                Some((name, rest))
            }
            _ => None,
        }
    }

    pub(super) fn extract(src: &str) -> Result<Vec<String>, ExtractError> {
        let toks = lex(src)?;
        let mut labels = Vec::new();
        let mut i = 0;
        while i < toks.len() {
            let (name, is_call) = match (&toks[i], toks.get(i + 1)) {
                (Tok::Ident(n @ ("text" | "annotate")), Some(Tok::Punct(b'('))) => (*n, true),
                _ => ("", false),
            };
            let is_def = i > 0 && matches!(toks[i - 1], Tok::Ident("def"));
            if !is_call || is_def {
                i += 1;
                continue;
            }
            let args = split_args(&toks, i + 1);
            let (position, keywords): (usize, &[&str]) = if name == "text" {
                (2, &["s"])
            } else {
                (0, &["text", "s"])
            };
            let mut positional = 0;
            let mut chosen: Option<&[Tok<'_>]> = None;
            for arg in &args {
                if let Some((kw, value)) = keyword(arg) {
                    if keywords.contains(&kw) {
                        chosen = Some(value);
                    }
                } else {
                    if positional == position && chosen.is_none() {
                        chosen = Some(arg);
                    }
                    positional += 1;
                }
            }
            if let Some(label) = chosen.and_then(literal) {
                labels.push(label);
            }
            // Nested calls inside the argument list are scanned too.
            i += 2;
        }
        Ok(labels)
    }
}

mod tikz {
    use super::{collapse_ws, ExtractError};

    fn skip_comment(b: &[u8], mut i: usize) -> usize {
        while i < b.len() && b[i] != b'\n' {
            i += 1;
        }
        i
    }

    /// Returns the index just past the group closing the one opened at `open`.
    fn balanced(b: &[u8], open: usize, close_ch: u8) -> Result<usize, ExtractError> {
        let open_ch = b[open];
        let mut depth = 0usize;
        let mut i = open;
        while i < b.len() {
            match b[i] {
                b'\\' => {
                    i += 2;
                    continue;
                }
                b'%' => {
                    i = skip_comment(b, i);
                    continue;
                }
                c if c == open_ch => depth += 1,
                c if c == close_ch => {
                    depth -= 1;
                    if depth == 0 {
                        return Ok(i + 1);
                    }
                }
                _ => {}
            }
            i += 1;
        }
        Err(ExtractError::new(
            open,
            format!("unbalanced `{}`", open_ch as char),
        ))
    }

    fn clean(body: &str) -> String {
        collapse_ws(&body.replace("\\\\", " "))
    }

    pub(super) fn extract(src: &str) -> Result<Vec<String>, ExtractError> {
        let b = src.as_bytes();
        let mut labels = Vec::new();
        let mut i = 0;
        while i < b.len() {
            match b[i] {
                b'%' => {
                    i = skip_comment(b, i);
                    continue;
                }
                b'\\' if src[i..].starts_with("\\node")
                    && !b.get(i + 5).is_some_and(|c| c.is_ascii_alphabetic()) =>
                {
                    i += 5;
                    loop {
                        match b.get(i) {
                            None => return Ok(labels),
                            Some(b';') => {
                                i += 1;
                                break;
                            }
                            Some(b'%') => i = skip_comment(b, i),
                            Some(b'[') => i = balanced(b, i, b']')?,
                            Some(b'(') => i = balanced(b, i, b')')?,
                            Some(b'{') => {
                                let end = balanced(b, i, b'}')?;
                                let label = clean(&src[i + 1..end - 1]);
                                if !label.is_empty() {
                                    labels.push(label);
                                }
                                i = end;
                                break;
                            }
                            Some(b'\\') => i += 2,
                            Some(_) => i += 1,
                        }
                    }
                    continue;
                }
                b'\\' => i += 2,
                _ => i += 1,
            }
        }
        Ok(labels)
    }
}

mod svg {
    use super::{collapse_ws, ExtractError};

    fn decode_entities(s: &str) -> String {
        let mut out = String::with_capacity(s.len());
        let mut rest = s;
        while let Some(amp) = rest.find('&') {
            out.push_str(&rest[..amp]);
            let tail = &rest[amp..];
            let Some(semi) = tail.find(';').filter(|n| *n <= 10) else {
                out.push('&');
                rest = &tail[1..];
                continue;
            };
            let entity = &tail[1..semi];
            let decoded = match entity {
                "amp" => Some('&'),
                "lt" => Some('<'),
                "gt" => Some('>'),
                "quot" => Some('"'),
                "apos" => Some('\''),
                _ if entity.starts_with("#x") || entity.starts_with("#X") => {
                    u32::from_str_radix(&entity[2..], 16).ok().and_then(char::from_u32)
                }
                _ if entity.starts_with('#') => {
                    entity[1..].parse::<u32>().ok().and_then(char::from_u32)
                }
                _ => None,
            };
            match decoded {
                Some(c) => {
                    out.push(c);
                    rest = &tail[semi + 1..];
                }
                None => {
                    out.push('&');
                    rest = &tail[1..];
                }
            }
        }
        out.push_str(rest);
        out
    }

    /// Skips a tag starting at `lt`, honouring quoted attribute values.
    /// Returns the index after `>` and whether the tag self-closes.
    fn skip_tag(src: &str, lt: usize) -> Result<(usize, bool), ExtractError> {
        let b = src.as_bytes();
        let mut i = lt + 1;
        while i < b.len() {
            match b[i] {
                q @ (b'"' | b'\'') => {
                    let close = src[i + 1..]
                        .find(q as char)
                        .ok_or_else(|| ExtractError::new(i, "unterminated attribute value"))?;
                    i += close + 2;
                    continue;
                }
                b'>' => return Ok((i + 1, b[i - 1] == b'/')),
                _ => {}
            }
            i += 1;
        }
        Err(ExtractError::new(lt, "unterminated tag"))
    }

    fn is_text_open(src: &str, i: usize) -> bool {
        src[i..].starts_with("<text")
            && src.as_bytes().get(i + 5).is_some_and(|c| c.is_ascii_whitespace() || *c == b'>' || *c == b'/')
    }

    pub(super) fn extract(src: &str) -> Result<Vec<String>, ExtractError> {
        let mut labels = Vec::new();
        let mut i = 0;
        while let Some(off) = src[i..].find('<') {
            let lt = i + off;
            let rest = &src[lt..];
            if rest.starts_with("<!--") {
                let end = rest
                    .find("-->")
                    .ok_or_else(|| ExtractError::new(lt, "unterminated comment"))?;
                i = lt + end + 3;
            } else if rest.starts_with("<![CDATA[") {
                let end = rest
                    .find("]]>")
                    .ok_or_else(|| ExtractError::new(lt, "unterminated CDATA section"))?;
                i = lt + end + 3;
            } else if is_text_open(src, lt) {
                let (body_start, self_closing) = skip_tag(src, lt)?;
                if self_closing {
                    i = body_start;
                    continue;
                }
                let mut text = String::new();
                let mut j = body_start;
                loop {
                    let Some(next_lt) = src[j..].find('<').map(|n| j + n) else {
                        return Err(ExtractError::new(lt, "missing </text>"));
                    };
                    text.push_str(&src[j..next_lt]);
                    let tail = &src[next_lt..];
                    if tail.starts_with("</text") {
                        let (after, _) = skip_tag(src, next_lt)?;
                        j = after;
                        break;
                    } else if tail.starts_with("<![CDATA[") {
                        let end = tail
                            .find("]]>")
                            .ok_or_else(|| ExtractError::new(next_lt, "unterminated CDATA section"))?;
                        text.push_str(&tail[9..end]);
                        j = next_lt + end + 3;
                    } else if tail.starts_with("<!--") {
                        let end = tail
                            .find("-->")
                            .ok_or_else(|| ExtractError::new(next_lt, "unterminated comment"))?;
                        j = next_lt + end + 3;
                    } else if is_text_open(src, next_lt) {
                        return Err(ExtractError::new(next_lt, "nested <text> element"));
                    } else {
                        let (after, _) = skip_tag(src, next_lt)?;
                        j = after;
                    }
                }
                let label = collapse_ws(&decode_entities(&text));
                if !label.is_empty() {
                    labels.push(label);
                }
                i = j;
            } else {
                let (after, _) = skip_tag(src, lt)?;
                i = after;
            }
        }
        Ok(labels)
    }
}
