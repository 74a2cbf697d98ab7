//! Lenient reader for the dictionary blocks language models reply with.
//!
//! Accepts JSON plus the usual Python-isms: single-quoted strings, trailing
//! commas, `True`/`False`/`None`, bare keys, surrounding prose and markdown
//! fences.

use serde_json::{Map, Number, Value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("could not parse response dictionary at byte {offset}: {message}")]
pub struct ParseFailure {
    pub offset: usize,
    pub message: String,
}

/// Parses the first brace block of `raw` that reads as a dictionary.
pub fn parse_response_dict(raw: &str) -> Result<Map<String, Value>, ParseFailure> {
    let mut first_err = None;
    for (start, _) in raw.match_indices('{') {
        let mut p = Parser { src: raw.as_bytes(), text: raw, pos: start };
        match p.object() {
            Ok(map) => return Ok(map),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    Err(first_err.unwrap_or(ParseFailure { offset: raw.len(), message: "no brace-delimited block".into() }))
}

struct Parser<'a> {
    src: &'a [u8],
    text: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn fail<T>(&self, message: impl Into<String>) -> Result<T, ParseFailure> {
        Err(ParseFailure { offset: self.pos, message: message.into() })
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_ascii_whitespace() {
                self.pos += 1;
            } else if c == b'#' {
                // Python comment to end of line.
                while let Some(c) = self.peek() {
                    if c == b'\n' {
                        break;
                    }
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseFailure> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(format!("expected `{}`", c as char))
        }
    }

    fn object(&mut self) -> Result<Map<String, Value>, ParseFailure> {
        self.expect(b'{')?;
        let mut map = Map::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'}') => {
                    self.pos += 1;
                    return Ok(map);
                }
                None => return self.fail("unterminated dictionary"),
                _ => {}
            }
            let key = self.key()?;
            self.expect(b':')?;
            let value = self.value()?;
            map.insert(key, value);
            self.skip_ws();
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b'}') => {}
                None => return self.fail("unterminated dictionary"),
                _ => return self.fail("expected `,` or `}`"),
            }
        }
    }

    fn array(&mut self, close: u8) -> Result<Vec<Value>, ParseFailure> {
        self.pos += 1;
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some(c) if c == close => {
                    self.pos += 1;
                    return Ok(items);
                }
                None => return self.fail("unterminated list"),
                _ => {}
            }
            items.push(self.value()?);
            self.skip_ws();
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(c) if c == close => {}
                None => return self.fail("unterminated list"),
                _ => return self.fail(format!("expected `,` or `{}`", close as char)),
            }
        }
    }

    fn key(&mut self) -> Result<String, ParseFailure> {
        self.skip_ws();
        match self.peek() {
            Some(b'"') | Some(b'\'') => self.string(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
                    self.pos += 1;
                }
                Ok(self.text[start..self.pos].to_string())
            }
            Some(c) if c.is_ascii_digit() || c == b'-' => match self.number()? {
                Value::Number(n) => Ok(n.to_string()),
                _ => unreachable!(),
            },
            _ => self.fail("expected a key"),
        }
    }

    fn value(&mut self) -> Result<Value, ParseFailure> {
        self.skip_ws();
        match self.peek() {
            Some(b'{') => self.object().map(Value::Object),
            Some(b'[') => self.array(b']').map(Value::Array),
            Some(b'(') => self.array(b')').map(Value::Array),
            Some(b'"') | Some(b'\'') => self.string().map(Value::String),
            Some(c) if c.is_ascii_digit() || c == b'-' || c == b'+' || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
                    self.pos += 1;
                }
                match &self.text[start..self.pos] {
                    "true" | "True" => Ok(Value::Bool(true)),
                    "false" | "False" => Ok(Value::Bool(false)),
                    "null" | "None" => Ok(Value::Null),
                    word => {
                        self.pos = start;
                        self.fail(format!("unexpected bare word `{word}`"))
                    }
                }
            }
            None => self.fail("unexpected end of input"),
            Some(c) => self.fail(format!("unexpected `{}`", c as char)),
        }
    }

    fn number(&mut self) -> Result<Value, ParseFailure> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || matches!(c, b'-' | b'+' | b'.' | b'e' | b'E')) {
            self.pos += 1;
        }
        let s = &self.text[start..self.pos];
        if let Ok(i) = s.parse::<i64>() {
            return Ok(Value::Number(i.into()));
        }
        match s.parse::<f64>().ok().and_then(Number::from_f64) {
            Some(n) => Ok(Value::Number(n)),
            None => {
                self.pos = start;
                self.fail(format!("bad number `{s}`"))
            }
        }
    }

    fn string(&mut self) -> Result<String, ParseFailure> {
        let quote = self.src[self.pos];
        self.pos += 1;
        let mut out = String::new();
        loop {
            let rest = &self.text[self.pos..];
            let Some(c) = rest.chars().next() else {
                return self.fail("unterminated string");
            };
            self.pos += c.len_utf8();
            match c {
                c if c as u32 == u32::from(quote) => return Ok(out),
                '\\' => {
                    let Some(e) = self.text[self.pos..].chars().next() else {
                        return self.fail("unterminated escape");
                    };
                    self.pos += e.len_utf8();
                    match e {
                        'n' => out.push('\n'),
                        't' => out.push('\t'),
                        'r' => out.push('\r'),
                        'b' => out.push('\u{8}'),
                        'f' => out.push('\u{c}'),
                        '0' => out.push('\0'),
                        'u' => {
                            let hex = self.text.get(self.pos..self.pos + 4).unwrap_or("");
                            let code = u32::from_str_radix(hex, 16).ok().and_then(char::from_u32);
                            match code {
                                Some(ch) => {
                                    out.push(ch);
                                    self.pos += 4;
                                }
                                None => return self.fail("bad \\u escape"),
                            }
                        }
                        other => out.push(other),
                    }
                }
                c => out.push(c),
            }
        }
    }
}

/// String view of a parsed value; lists are joined with `; `.
pub fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        Value::Array(items) => items.iter().map(value_text).collect::<Vec<_>>().join("; "),
        other => other.to_string(),
    }
}

/// List view of a parsed value; a lone string becomes a one-item list.
pub fn value_list(v: &Value) -> Vec<String> {
    match v {
        Value::Array(items) => items.iter().map(value_text).filter(|s| !s.trim().is_empty()).collect(),
        Value::Null => Vec::new(),
        Value::String(s) if s.trim().is_empty() => Vec::new(),
        other => vec![value_text(other)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn prose_prefix() {
        let m = parse_response_dict("Sure! {\"reason\": \"x\", \"plan\": [\"a\"]}").unwrap();
        assert_eq!(Value::Object(m), json!({"reason": "x", "plan": ["a"]}));
    }

    #[test]
    fn single_quotes() {
        let m = parse_response_dict("{'Alice': 'stay idle'}").unwrap();
        assert_eq!(m["Alice"], "stay idle");
    }

    #[test]
    fn fixture_cases() {
        let cases: Vec<Value> = serde_json::from_str(include_str!("../../fixtures/parse_cases.json")).unwrap();
        assert_eq!(cases.len(), 30);
        for case in &cases {
            let name = case["name"].as_str().unwrap();
            let got = parse_response_dict(case["input"].as_str().unwrap());
            match &case["expect"] {
                Value::Null => assert!(got.is_err(), "{name}: accepted {got:?}"),
                expect => assert_eq!(&Value::Object(got.unwrap_or_else(|e| panic!("{name}: {e}"))), expect, "{name}"),
            }
        }
    }

    #[test]
    fn no_dict() {
        let e = parse_response_dict("no dict here").unwrap_err();
        assert_eq!(e.offset, "no dict here".len());
    }

    #[test]
    fn offset_points_into_the_block() {
        let e = parse_response_dict("ok {'a': 'b' 'c'}").unwrap_err();
        assert_eq!(e.offset, 13);
    }

    #[test]
    fn skips_brace_in_prose() {
        let m = parse_response_dict("use {braces} like this: {\"a\": 1,}").unwrap();
        assert_eq!(m["a"], 1);
    }

    #[test]
    fn list_helpers() {
        assert_eq!(value_list(&json!(["a", "", "b"])), vec!["a", "b"]);
        assert_eq!(value_list(&json!("x")), vec!["x"]);
        assert!(value_list(&json!(null)).is_empty());
        assert_eq!(value_text(&json!(["a", "b"])), "a; b");
    }
}
