//! Lenient reader for agent replies.
//!
//! Agents are asked for a dictionary but answer in whatever mix of JSON and
//! Python literal syntax they like (`True`, single quotes, trailing commas,
//! a doubled `{{` opening). The reader finds the first balanced object that
//! yields a complete opinion and ignores everything around it.

use std::fmt;

use thiserror::Error;

use crate::model::{AgentOpinion, AgentRole, ErrorSeverity};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseFailure {
    #[error("no balanced {{...}} object in reply")]
    NoObject,
    #[error("malformed object: {0}")]
    Syntax(String),
    #[error("missing key \"{0}\"")]
    MissingKey(&'static str),
    #[error("\"opinion\" must be a non-empty string")]
    EmptyOpinion,
    #[error("\"factuality\" must be a boolean, got {0}")]
    NotBoolean(String),
    #[error("\"Error severity\" must be an integer, got {0}")]
    NotInteger(String),
    #[error("\"Error severity\" {0} is outside 0..=5")]
    SeverityOutOfRange(i64),
}

#[derive(Debug, Clone, PartialEq)]
enum Literal {
    Str(String),
    Bool(bool),
    Int(i64),
    Float(f64),
    Null,
    Word(String),
    Nested,
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Str(s) => write!(f, "string {s:?}"),
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Int(i) => write!(f, "{i}"),
            Literal::Float(x) => write!(f, "{x}"),
            Literal::Null => f.write_str("null"),
            Literal::Word(w) => write!(f, "`{w}`"),
            Literal::Nested => f.write_str("a nested value"),
        }
    }
}

/// Byte ranges of balanced `{...}` spans, in order of their opening brace.
fn balanced_spans(raw: &str) -> Vec<(usize, usize)> {
    let bytes = raw.as_bytes();
    let mut spans = Vec::new();
    for (start, _) in raw.match_indices('{') {
        let mut depth = 0usize;
        let mut quote: Option<u8> = None;
        let mut escaped = false;
        for (i, &b) in bytes.iter().enumerate().skip(start) {
            if let Some(q) = quote {
                if escaped {
                    escaped = false;
                } else if b == b'\\' {
                    escaped = true;
                } else if b == q {
                    quote = None;
                }
                continue;
            }
            match b {
                b'"' => quote = Some(b'"'),
                // An apostrophe only opens a string where a value or key may start.
                b'\'' if starts_value(bytes, i) => quote = Some(b'\''),
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        spans.push((start, i + 1));
                        break;
                    }
                }
                _ => {}
            }
        }
    }
    spans
}

fn starts_value(bytes: &[u8], i: usize) -> bool {
    bytes[..i]
        .iter()
        .rev()
        .find(|b| !b.is_ascii_whitespace())
        .is_some_and(|b| matches!(b, b'{' | b',' | b':' | b'['))
}

struct Reader<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn err<T>(&self, what: &str) -> Result<T, ParseFailure> {
        Err(ParseFailure::Syntax(format!("{what} at offset {}", self.pos)))
    }

    fn expect(&mut self, c: char) -> Result<(), ParseFailure> {
        self.skip_ws();
        if self.bump() == Some(c) {
            Ok(())
        } else {
            self.err(&format!("expected `{c}`"))
        }
    }

    fn string(&mut self, quote: char) -> Result<String, ParseFailure> {
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return self.err("unterminated string"),
                Some(c) if c == quote => return Ok(out),
                Some('\\') => match self.bump() {
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some('r') => out.push('\r'),
                    Some('b') => out.push('\u{8}'),
                    Some('f') => out.push('\u{c}'),
                    Some('u') => out.push(self.unicode_escape()?),
                    Some(c) => out.push(c),
                    None => return self.err("unterminated escape"),
                },
                Some(c) => out.push(c),
            }
        }
    }

    fn hex4(&mut self) -> Result<u32, ParseFailure> {
        let end = self.pos + 4;
        let digits = self
            .src
            .get(self.pos..end)
            .ok_or(ParseFailure::Syntax("short \\u escape".into()))?;
        let v = u32::from_str_radix(digits, 16).map_err(|_| ParseFailure::Syntax("bad \\u escape".into()))?;
        self.pos = end;
        Ok(v)
    }

    fn unicode_escape(&mut self) -> Result<char, ParseFailure> {
        let hi = self.hex4()?;
        let code = if (0xD800..0xDC00).contains(&hi) && self.src[self.pos..].starts_with("\\u") {
            self.pos += 2;
            let lo = self.hex4()?;
            0x10000 + ((hi - 0xD800) << 10) + (lo.wrapping_sub(0xDC00) & 0x3FF)
        } else {
            hi
        };
        Ok(char::from_u32(code).unwrap_or('\u{FFFD}'))
    }

    fn skip_nested(&mut self, open: char) -> Result<(), ParseFailure> {
        let close = if open == '{' { '}' } else { ']' };
        let mut depth = 1;
        while depth > 0 {
            match self.bump() {
                None => return self.err("unterminated nested value"),
                Some(c @ ('"' | '\'')) => {
                    self.string(c)?;
                }
                Some(c) if c == open => depth += 1,
                Some(c) if c == close => depth -= 1,
                _ => {}
            }
        }
        Ok(())
    }

    /// Bare text up to the next delimiter, trimmed.
    fn bare(&mut self, stops: &[char]) -> &'a str {
        let start = self.pos;
        while self.peek().is_some_and(|c| !stops.contains(&c)) {
            self.bump();
        }
        self.src[start..self.pos].trim()
    }

    fn key(&mut self) -> Result<String, ParseFailure> {
        self.skip_ws();
        match self.peek() {
            Some(q @ ('"' | '\'')) => {
                self.bump();
                self.string(q)
            }
            Some(_) => {
                let k = self.bare(&[':', ',', '}']);
                if k.is_empty() {
                    self.err("expected a key")
                } else {
                    Ok(k.to_string())
                }
            }
            None => self.err("unexpected end"),
        }
    }

    fn value(&mut self) -> Result<Literal, ParseFailure> {
        self.skip_ws();
        match self.peek() {
            Some(q @ ('"' | '\'')) => {
                self.bump();
                Ok(Literal::Str(self.string(q)?))
            }
            Some(c @ ('{' | '[')) => {
                self.bump();
                self.skip_nested(c)?;
                Ok(Literal::Nested)
            }
            Some(_) => {
                let word = self.bare(&[',', '}']);
                Ok(classify(word))
            }
            None => self.err("unexpected end"),
        }
    }

    fn object(&mut self) -> Result<Vec<(String, Literal)>, ParseFailure> {
        self.expect('{')?;
        let mut fields = Vec::new();
        loop {
            self.skip_ws();
            if self.peek() == Some('}') {
                self.bump();
                return Ok(fields);
            }
            let key = self.key()?;
            self.expect(':')?;
            let value = self.value()?;
            fields.push((key, value));
            self.skip_ws();
            match self.bump() {
                Some(',') => continue,
                Some('}') => return Ok(fields),
                _ => return self.err("expected `,` or `}`"),
            }
        }
    }
}

fn classify(word: &str) -> Literal {
    if word.eq_ignore_ascii_case("true") {
        Literal::Bool(true)
    } else if word.eq_ignore_ascii_case("false") {
        Literal::Bool(false)
    } else if word == "null" || word == "None" {
        Literal::Null
    } else if let Ok(i) = word.parse::<i64>() {
        Literal::Int(i)
    } else if let Ok(x) = word.parse::<f64>() {
        Literal::Float(x)
    } else {
        Literal::Word(word.to_string())
    }
}

fn normalize_key(k: &str) -> String {
    k.to_lowercase()
        .replace('_', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Exact key first, then the case- and separator-insensitive spelling.
fn lookup<'f>(fields: &'f [(String, Literal)], key: &'static str) -> Result<&'f Literal, ParseFailure> {
    if let Some((_, v)) = fields.iter().find(|(k, _)| k == key) {
        return Ok(v);
    }
    let wanted = normalize_key(key);
    fields
        .iter()
        .find(|(k, _)| normalize_key(k) == wanted)
        .map(|(_, v)| v)
        .ok_or(ParseFailure::MissingKey(key))
}

fn opinion_from_span(span: &str, role: AgentRole) -> Result<AgentOpinion, ParseFailure> {
    // `{{ ... }}`: the prompts ask for a doubled opening brace.
    let inner = span[1..span.len() - 1].trim();
    let body = if inner.starts_with('{') && inner.ends_with('}') {
        inner
    } else {
        span
    };
    let fields = Reader { src: body, pos: 0 }.object()?;

    let opinion = match lookup(&fields, "opinion")? {
        Literal::Str(s) if !s.trim().is_empty() => s.clone(),
        _ => return Err(ParseFailure::EmptyOpinion),
    };
    let factuality = match lookup(&fields, "factuality")? {
        Literal::Bool(b) => *b,
        Literal::Str(s) if s.trim().eq_ignore_ascii_case("true") => true,
        Literal::Str(s) if s.trim().eq_ignore_ascii_case("false") => false,
        other => return Err(ParseFailure::NotBoolean(other.to_string())),
    };
    let severity = match lookup(&fields, "Error severity")? {
        Literal::Int(i) => ErrorSeverity::new(*i).map_err(|_| ParseFailure::SeverityOutOfRange(*i))?,
        other => return Err(ParseFailure::NotInteger(other.to_string())),
    };
    Ok(AgentOpinion {
        role,
        opinion,
        factuality,
        severity,
    })
}

/// Reads the first balanced object in `raw` that holds a complete opinion.
///
/// When no object qualifies, the failure of the first balanced object is
/// returned.
pub fn parse_opinion(raw: &str, role: AgentRole) -> Result<AgentOpinion, ParseFailure> {
    let mut first_failure = None;
    for (start, end) in balanced_spans(raw) {
        match opinion_from_span(&raw[start..end], role) {
            Ok(op) => return Ok(op),
            Err(e) => {
                first_failure.get_or_insert(e);
            }
        }
    }
    Err(first_failure.unwrap_or(ParseFailure::NoObject))
}

/// Writes an opinion in the reply format the agents are asked for.
pub fn serialize_opinion(opinion: &AgentOpinion) -> String {
    format!(
        "{{\"opinion\": {}, \"factuality\": {}, \"Error severity\": {}}}",
        serde_json::to_string(&opinion.opinion).expect("strings serialize"),
        opinion.factuality,
        opinion.severity.grade()
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn python_literals_and_capitalised_keys() {
        let raw = "{\n \"Opinion\": \"Looks wrong.\",\n \"Factuality\": False,\n \"Error severity\": 4\n}";
        let op = parse_opinion(raw, AgentRole::Skeptic).unwrap();
        assert!(!op.factuality);
        assert_eq!(op.severity.grade(), 4);
        assert_eq!(op.opinion, "Looks wrong.");
    }

    #[test]
    fn severity_out_of_range() {
        let raw = "Sure! {\"opinion\":\"x\",\"factuality\":true,\"Error severity\":9}";
        assert_eq!(
            parse_opinion(raw, AgentRole::Trust),
            Err(ParseFailure::SeverityOutOfRange(9))
        );
    }

    #[test]
    fn missing_object_and_keys() {
        assert_eq!(
            parse_opinion("no braces here", AgentRole::Leader),
            Err(ParseFailure::NoObject)
        );
        assert_eq!(
            parse_opinion("{\"opinion\": \"x\"", AgentRole::Leader),
            Err(ParseFailure::NoObject)
        );
        assert_eq!(
            parse_opinion("{\"opinion\": \"x\", \"factuality\": true}", AgentRole::Leader),
            Err(ParseFailure::MissingKey("Error severity"))
        );
    }

    #[test]
    fn non_boolean_factuality() {
        let raw = "{\"opinion\": \"x\", \"factuality\": True if the given text is factual, \"Error severity\": 1}";
        assert!(matches!(
            parse_opinion(raw, AgentRole::Trust),
            Err(ParseFailure::NotBoolean(_))
        ));
        let raw = "{\"opinion\": \"x\", \"factuality\": 1, \"Error severity\": 1}";
        assert!(matches!(
            parse_opinion(raw, AgentRole::Trust),
            Err(ParseFailure::NotBoolean(_))
        ));
    }

    #[test]
    fn lenient_spellings() {
        let raw = "{'opinion': \"it's fine\", 'factuality': TRUE, 'error severity': 0,}";
        let op = parse_opinion(raw, AgentRole::Initial).unwrap();
        assert!(op.factuality);
        assert_eq!(op.opinion, "it's fine");
        let raw = "{{ \"opinion\": \"doubled\", \"factuality\": \"false\", \"Error severity\": 2 }}";
        let op = parse_opinion(raw, AgentRole::Leader).unwrap();
        assert!(!op.factuality);
        assert_eq!(op.severity.grade(), 2);
    }

    #[test]
    fn skips_noise_objects_before_the_opinion() {
        let raw = "Notes {draft} then {\"opinion\": \"ok {braces} inside\", \"factuality\": true, \"Error severity\": 0} bye }";
        let op = parse_opinion(raw, AgentRole::Trust).unwrap();
        assert_eq!(op.opinion, "ok {braces} inside");
    }

    #[test]
    fn empty_opinion_is_rejected() {
        let raw = "{\"opinion\": \"  \", \"factuality\": true, \"Error severity\": 0}";
        assert_eq!(parse_opinion(raw, AgentRole::Trust), Err(ParseFailure::EmptyOpinion));
    }

    fn arb_opinion() -> impl Strategy<Value = AgentOpinion> {
        (
            proptest::sample::select(AgentRole::ALL.to_vec()),
            "\\PC{0,60}[a-z]\\PC{0,20}",
            any::<bool>(),
            0i64..=5,
        )
            .prop_map(|(role, opinion, factuality, sev)| AgentOpinion {
                role,
                opinion,
                factuality,
                severity: ErrorSeverity::new(sev).unwrap(),
            })
    }

    proptest! {
        #[test]
        fn serialize_then_parse_is_identity(op in arb_opinion(), prefix in "[^{]{0,30}", suffix in "\\PC{0,30}") {
            let raw = format!("{prefix}{}{suffix}", serialize_opinion(&op));
            prop_assert_eq!(parse_opinion(&raw, op.role).unwrap(), op);
        }
    }
}
