//! Scenario files: `key = value` lines, `#` comments, and function blocks
//! `name = { ... }` holding piecewise definitions.

use std::collections::BTreeMap;

use slowfast_core::fnspec::{parse_piecewise, FnSpecError, PiecewiseFn};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl ParseError {
    fn at(line: usize, col: usize, message: impl Into<String>) -> Self {
        ParseError {
            line,
            col,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
    col: usize,
}

#[derive(Debug, Clone)]
pub struct ScenarioFile {
    scalars: BTreeMap<String, Entry>,
    blocks: BTreeMap<String, Entry>,
}

const KNOWN: &[&str] = &[
    "name", "epsilon", "epsilons", "rho", "m", "origin", "t_max", "delta", "max_segments", "y0_over_m",
];
const KNOWN_BLOCKS: &[&str] = &["f", "r1", "r2"];

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("")
}

/// Byte offset of the first non-blank character, as a 1-based column.
fn col_of(line: &str, part: &str) -> usize {
    let start = part.as_ptr() as usize - line.as_ptr() as usize;
    start + (part.len() - part.trim_start().len()) + 1
}

impl ScenarioFile {
    pub fn parse(src: &str) -> Result<ScenarioFile, ParseError> {
        let mut scalars = BTreeMap::new();
        let mut blocks = BTreeMap::new();
        let lines: Vec<&str> = src.lines().collect();
        let mut i = 0;
        while i < lines.len() {
            let raw = lines[i];
            let line = strip_comment(raw);
            let lineno = i + 1;
            i += 1;
            if line.trim().is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ParseError::at(lineno, col_of(raw, line), "expected 'key = value'"));
            };
            let name = key.trim().to_string();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(ParseError::at(lineno, col_of(raw, key), format!("invalid key '{}'", key.trim())));
            }
            let vcol = col_of(raw, value);
            let v = value.trim();
            if let Some(rest) = v.strip_prefix('{') {
                if !KNOWN_BLOCKS.contains(&name.as_str()) {
                    return Err(ParseError::at(lineno, col_of(raw, key), format!("unknown block '{name}'")));
                }
                // block body runs to the matching '}'; the body keeps its
                // line structure so that errors can be located
                let mut body = String::new();
                let (start_line, start_col) = (lineno, vcol + 1);
                let mut chunk = rest;
                let mut closed = false;
                loop {
                    if let Some(pos) = chunk.find('}') {
                        body.push_str(&chunk[..pos]);
                        if !chunk[pos + 1..].trim().is_empty() {
                            return Err(ParseError::at(i, 1, "unexpected text after '}'"));
                        }
                        closed = true;
                        break;
                    }
                    body.push_str(chunk);
                    body.push('\n');
                    if i >= lines.len() {
                        break;
                    }
                    chunk = strip_comment(lines[i]);
                    i += 1;
                }
                if !closed {
                    return Err(ParseError::at(start_line, vcol, format!("block '{name}' is not closed")));
                }
                let entry = Entry {
                    value: body,
                    line: start_line,
                    col: start_col,
                };
                if blocks.insert(name.clone(), entry).is_some() {
                    return Err(ParseError::at(lineno, 1, format!("duplicate block '{name}'")));
                }
            } else {
                if !KNOWN.contains(&name.as_str()) {
                    return Err(ParseError::at(lineno, col_of(raw, key), format!("unknown key '{name}'")));
                }
                if v.is_empty() {
                    return Err(ParseError::at(lineno, vcol, format!("missing value for '{name}'")));
                }
                let entry = Entry {
                    value: v.to_string(),
                    line: lineno,
                    col: vcol,
                };
                if scalars.insert(name.clone(), entry).is_some() {
                    return Err(ParseError::at(lineno, 1, format!("duplicate key '{name}'")));
                }
            }
        }
        Ok(ScenarioFile { scalars, blocks })
    }

    fn entry(&self, key: &str) -> Result<&Entry, ParseError> {
        self.scalars
            .get(key)
            .ok_or_else(|| ParseError::at(0, 0, format!("missing key '{key}'")))
    }

    pub fn has(&self, key: &str) -> bool {
        self.scalars.contains_key(key) || self.blocks.contains_key(key)
    }

    pub fn text(&self, key: &str) -> Option<&str> {
        self.scalars.get(key).map(|e| e.value.as_str())
    }

    pub fn number(&self, key: &str) -> Result<f64, ParseError> {
        let e = self.entry(key)?;
        parse_number(&e.value).ok_or_else(|| ParseError::at(e.line, e.col, format!("'{key}' is not a number")))
    }

    pub fn number_or(&self, key: &str, default: f64) -> Result<f64, ParseError> {
        if self.scalars.contains_key(key) {
            self.number(key)
        } else {
            Ok(default)
        }
    }

    pub fn list(&self, key: &str) -> Result<Vec<f64>, ParseError> {
        let e = self.entry(key)?;
        e.value
            .split(',')
            .map(|p| {
                parse_number(p).ok_or_else(|| ParseError::at(e.line, e.col, format!("'{key}' has a non-numeric item '{}'", p.trim())))
            })
            .collect()
    }

    pub fn point(&self, key: &str) -> Result<(f64, f64), ParseError> {
        let v = self.list(key)?;
        match v[..] {
            [x, y] => Ok((x, y)),
            _ => {
                let e = self.entry(key)?;
                Err(ParseError::at(e.line, e.col, format!("'{key}' needs two numbers")))
            }
        }
    }

    pub fn function(&self, key: &str) -> Result<PiecewiseFn, ParseError> {
        let e = self
            .blocks
            .get(key)
            .ok_or_else(|| ParseError::at(0, 0, format!("missing block '{key} = {{ ... }}'")))?;
        parse_piecewise(&e.value).map_err(|err| {
            let (line, col) = match err {
                FnSpecError::Syntax { pos, .. } => {
                    let before = &e.value[..pos.min(e.value.len())];
                    let extra_lines = before.matches('\n').count();
                    let col = match before.rfind('\n') {
                        Some(nl) => pos - nl,
                        None => e.col + pos,
                    };
                    (e.line + extra_lines, col)
                }
                _ => (e.line, e.col),
            };
            ParseError::at(line, col, format!("in '{key}': {err}"))
        })
    }
}

/// Plain literals, or any constant expression of the fnspec grammar such as
/// `exp(-120)` or `2*pi`.
fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return Some(v);
    }
    let expr = slowfast_core::fnspec::parser::parse_expr(s).ok()?;
    expr.is_constant().then(|| expr.eval(0.0)).filter(|v| v.is_finite())
}
