//! Text formats for benchmark instances.
//!
//! * Taillard: `n m` header, an n x m duration matrix, then an n x m matrix of
//!   1-based machine indices.
//! * OR-Library: `n m` header, then one line per job of `machine duration`
//!   pairs with 0-based machines. Jobs may differ in length.
//! * FJSP (Brandimarte/Hurink): `n m [avg]` header, then one line per job:
//!   operation count, and per operation an option count followed by that many
//!   `machine duration` pairs with 1-based machines.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write};
use core::str::FromStr;

use thiserror::Error;

use super::{Instance, InstanceError};
use crate::Time;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Format {
    Taillard,
    Orlib,
    Fjsp,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "taillard" | "ta" => Ok(Format::Taillard),
            "orlib" | "jsp" => Ok(Format::Orlib),
            "fjsp" | "fjs" => Ok(Format::Fjsp),
            other => Err(alloc::format!("unknown instance format `{other}`")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Taillard => "taillard",
            Format::Orlib => "orlib",
            Format::Fjsp => "fjsp",
        })
    }
}

/// Parse failure with a 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{0}")]
    Invalid(#[from] InstanceError),
    #[error("cannot write {kind} instance as {format}: {reason}")]
    Unsupported { kind: super::ProblemKind, format: Format, reason: &'static str },
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax { line, column, message: message.into() }
}

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

impl Token<'_> {
    fn number<T: FromStr>(&self, what: &str) -> Result<T, ParseError> {
        self.text
            .parse()
            .map_err(|_| syntax(self.line, self.column, alloc::format!("expected {what}, found `{}`", self.text)))
    }
}

struct Line<'a> {
    number: usize,
    tokens: Vec<Token<'a>>,
}

impl<'a> Line<'a> {
    fn end_column(&self) -> usize {
        self.tokens.last().map_or(1, |t| t.column + t.text.len())
    }
}

fn tokenize(text: &str) -> Vec<Line<'_>> {
    text.lines()
        .enumerate()
        .map(|(i, raw)| {
            let mut tokens = Vec::new();
            let mut start = None;
            for (pos, ch) in raw.char_indices().chain(core::iter::once((raw.len(), ' '))) {
                match (ch.is_whitespace(), start) {
                    (true, Some(s)) => {
                        tokens.push(Token { text: &raw[s..pos], line: i + 1, column: s + 1 });
                        start = None;
                    }
                    (false, None) => start = Some(pos),
                    _ => {}
                }
            }
            Line { number: i + 1, tokens }
        })
        .collect()
}

/// Reads the `n m` header from the first non-blank line and returns the index
/// of the line after it.
fn header(lines: &[Line<'_>]) -> Result<(usize, usize, usize), ParseError> {
    let (pos, line) = lines
        .iter()
        .enumerate()
        .find(|(_, l)| !l.tokens.is_empty())
        .ok_or_else(|| syntax(1, 1, "missing `n m` header"))?;
    if line.tokens.len() < 2 {
        return Err(syntax(line.number, line.end_column(), "header needs job and machine counts"));
    }
    let n: usize = line.tokens[0].number("job count")?;
    let m: usize = line.tokens[1].number("machine count")?;
    if n == 0 {
        return Err(syntax(line.number, line.tokens[0].column, "job count must be positive"));
    }
    if m == 0 {
        return Err(syntax(line.number, line.tokens[1].column, "machine count must be positive"));
    }
    Ok((n, m, pos + 1))
}

fn machine_index(token: &Token<'_>, m: usize, one_based: bool) -> Result<usize, ParseError> {
    let raw: usize = token.number("machine index")?;
    let machine = if one_based {
        raw.checked_sub(1).ok_or_else(|| syntax(token.line, token.column, "machine indices are 1-based"))?
    } else {
        raw
    };
    if machine >= m {
        return Err(syntax(token.line, token.column, alloc::format!("machine {raw} out of range for {m} machines")));
    }
    Ok(machine)
}

fn duration(token: &Token<'_>) -> Result<Time, ParseError> {
    let d: Time = token.number("duration")?;
    if d == 0 {
        return Err(syntax(token.line, token.column, "duration must be positive"));
    }
    Ok(d)
}

/// Parses the Taillard matrix layout. Extra header tokens are ignored.
pub fn parse_taillard_jsp(text: &str) -> Result<Instance, ParseError> {
    let lines = tokenize(text);
    let (n, m, first) = header(&lines)?;
    let rows: Vec<&Line<'_>> = lines[first..].iter().filter(|l| !l.tokens.is_empty()).collect();
    if rows.len() < 2 * n {
        let at = rows.last().map_or(lines.len(), |l| l.number) + 1;
        return Err(syntax(at, 1, alloc::format!("expected {} matrix rows, found {}", 2 * n, rows.len())));
    }
    for row in &rows[..2 * n] {
        if row.tokens.len() != m {
            let column = row.tokens.get(m).map_or(row.end_column(), |t| t.column);
            return Err(syntax(row.number, column, alloc::format!("expected {m} entries, found {}", row.tokens.len())));
        }
    }
    if let Some(extra) = rows.get(2 * n) {
        return Err(syntax(extra.number, 1, "unexpected data after the machine matrix"));
    }
    let mut jobs = Vec::with_capacity(n);
    for j in 0..n {
        let durations = &rows[j].tokens;
        let machines = &rows[n + j].tokens;
        let mut seen = alloc::vec![false; m];
        let mut ops = Vec::with_capacity(m);
        for (d, mac) in durations.iter().zip(machines) {
            let machine = machine_index(mac, m, true)?;
            if core::mem::replace(&mut seen[machine], true) {
                return Err(syntax(mac.line, mac.column, alloc::format!("machine {} repeated in job", machine + 1)));
            }
            ops.push((machine, duration(d)?));
        }
        jobs.push(ops);
    }
    Ok(Instance::jsp(m, jobs)?)
}

/// Parses the OR-Library layout with 0-based machines; ragged jobs allowed.
pub fn parse_orlib_jsp(text: &str) -> Result<Instance, ParseError> {
    let lines = tokenize(text);
    let (n, m, first) = header(&lines)?;
    let mut jobs = Vec::with_capacity(n);
    for j in 0..n {
        let Some(line) = lines.get(first + j) else {
            return Err(syntax(first + j + 1, 1, alloc::format!("missing line for job {}", j + 1)));
        };
        if line.tokens.is_empty() {
            return Err(syntax(line.number, 1, "job has no operations"));
        }
        if line.tokens.len() % 2 != 0 {
            return Err(syntax(line.number, line.end_column(), "odd token count; expected `machine duration` pairs"));
        }
        let ops = line
            .tokens
            .chunks(2)
            .map(|pair| Ok((machine_index(&pair[0], m, false)?, duration(&pair[1])?)))
            .collect::<Result<Vec<_>, ParseError>>()?;
        jobs.push(ops);
    }
    if let Some(extra) = lines[(first + n).min(lines.len())..].iter().find(|l| !l.tokens.is_empty()) {
        return Err(syntax(extra.number, 1, "unexpected data after the last job"));
    }
    Ok(Instance::jsp(m, jobs)?)
}

/// Parses the FJSP layout (1-based machines). The average-options field on the
/// header is optional and ignored.
pub fn parse_fjsp(text: &str) -> Result<Instance, ParseError> {
    let lines = tokenize(text);
    let (n, m, first) = header(&lines)?;
    let job_lines: Vec<&Line<'_>> = lines[first..].iter().filter(|l| !l.tokens.is_empty()).collect();
    if job_lines.len() < n {
        let at = job_lines.last().map_or(lines.len(), |l| l.number) + 1;
        return Err(syntax(at, 1, alloc::format!("expected {n} job lines, found {}", job_lines.len())));
    }
    if let Some(extra) = job_lines.get(n) {
        return Err(syntax(extra.number, 1, "unexpected data after the last job"));
    }
    let mut jobs = Vec::with_capacity(n);
    for line in &job_lines[..n] {
        let mut cursor = line.tokens.iter();
        let mut next = |what: &str| {
            cursor
                .next()
                .copied()
                .ok_or_else(|| syntax(line.number, line.end_column(), alloc::format!("line ends before {what}")))
        };
        let k_token = next("operation count")?;
        let k: usize = k_token.number("operation count")?;
        if k == 0 {
            return Err(syntax(k_token.line, k_token.column, "job has no operations"));
        }
        let mut ops = Vec::with_capacity(k);
        for _ in 0..k {
            let c_token = next("option count")?;
            let c: usize = c_token.number("option count")?;
            if c == 0 {
                return Err(syntax(c_token.line, c_token.column, "operation has no machine options"));
            }
            let mut options = Vec::with_capacity(c);
            for _ in 0..c {
                let mac = next("machine index")?;
                let dur = next("duration")?;
                let machine = machine_index(&mac, m, true)?;
                if options.iter().any(|&(other, _)| other == machine) {
                    return Err(syntax(mac.line, mac.column, alloc::format!("machine {} listed twice", machine + 1)));
                }
                options.push((machine, duration(&dur)?));
            }
            ops.push(options);
        }
        if let Some(extra) = cursor.next() {
            return Err(syntax(extra.line, extra.column, "trailing tokens after the last operation"));
        }
        jobs.push(ops);
    }
    Ok(Instance::new(m, jobs)?)
}

pub fn parse(text: &str, format: Format) -> Result<Instance, ParseError> {
    match format {
        Format::Taillard => parse_taillard_jsp(text),
        Format::Orlib => parse_orlib_jsp(text),
        Format::Fjsp => parse_fjsp(text),
    }
}

/// Writes `instance` in `format`, single-space separated, newline-terminated.
pub fn serialize(instance: &Instance, format: Format) -> Result<String, ParseError> {
    let kind = instance.kind();
    let unsupported = |reason| ParseError::Unsupported { kind, format, reason };
    let mut out = String::new();
    let (n, m) = (instance.n_jobs(), instance.n_machines());
    match format {
        Format::Taillard => {
            if !instance.is_rectangular_permutation() {
                return Err(unsupported("needs every job to visit each machine exactly once"));
            }
            let _ = writeln!(out, "{n} {m}");
            for job in instance.jobs() {
                push_row(&mut out, job.iter().map(|op| op.options[0].duration as usize));
            }
            for job in instance.jobs() {
                push_row(&mut out, job.iter().map(|op| op.options[0].machine + 1));
            }
        }
        Format::Orlib => {
            if kind != super::ProblemKind::Jsp {
                return Err(unsupported("operations must have a single machine"));
            }
            let _ = writeln!(out, "{n} {m}");
            for job in instance.jobs() {
                push_row(&mut out, job.iter().flat_map(|op| [op.options[0].machine, op.options[0].duration as usize]));
            }
        }
        Format::Fjsp => {
            let options: usize = instance.operations().map(|op| op.options.len()).sum();
            let _ = writeln!(out, "{n} {m} {}", format_average(options, instance.n_ops()));
            for job in instance.jobs() {
                let mut row = alloc::vec![job.len()];
                for op in job {
                    row.push(op.options.len());
                    for o in &op.options {
                        row.push(o.machine + 1);
                        row.push(o.duration as usize);
                    }
                }
                push_row(&mut out, row);
            }
        }
    }
    Ok(out)
}

fn push_row(out: &mut String, values: impl IntoIterator<Item = usize>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

/// Average options per operation with at most two decimals, integral values
/// without a fraction (`2`, `1.14`).
fn format_average(options: usize, ops: usize) -> String {
    let hundredths = (options * 100 + ops / 2) / ops;
    match hundredths % 100 {
        0 => (hundredths / 100).to_string(),
        f if f % 10 == 0 => alloc::format!("{}.{}", hundredths / 100, f / 10),
        f => alloc::format!("{}.{:02}", hundredths / 100, f),
    }
}
