//! Structured view of an `#pragma omp` line.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DirectiveError {
    #[error("not an OpenMP pragma: {0:?}")]
    NotOmpPragma(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReductionOp {
    #[serde(rename = "+")]
    Add,
    #[serde(rename = "-")]
    Sub,
    #[serde(rename = "*")]
    Mul,
    #[serde(rename = "&")]
    BitAnd,
    #[serde(rename = "|")]
    BitOr,
    #[serde(rename = "^")]
    BitXor,
    #[serde(rename = "&&")]
    And,
    #[serde(rename = "||")]
    Or,
    #[serde(rename = "min")]
    Min,
    #[serde(rename = "max")]
    Max,
}

impl ReductionOp {
    pub const ALL: [ReductionOp; 10] = [
        ReductionOp::Add,
        ReductionOp::Sub,
        ReductionOp::Mul,
        ReductionOp::BitAnd,
        ReductionOp::BitOr,
        ReductionOp::BitXor,
        ReductionOp::And,
        ReductionOp::Or,
        ReductionOp::Min,
        ReductionOp::Max,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            ReductionOp::Add => "+",
            ReductionOp::Sub => "-",
            ReductionOp::Mul => "*",
            ReductionOp::BitAnd => "&",
            ReductionOp::BitOr => "|",
            ReductionOp::BitXor => "^",
            ReductionOp::And => "&&",
            ReductionOp::Or => "||",
            ReductionOp::Min => "min",
            ReductionOp::Max => "max",
        }
    }
}

impl FromStr for ReductionOp {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        ReductionOp::ALL.into_iter().find(|op| op.symbol() == s).ok_or(())
    }
}

impl fmt::Display for ReductionOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Static,
    Dynamic,
    Guided,
    Runtime,
    Auto,
}

impl FromStr for ScheduleKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "static" => ScheduleKind::Static,
            "dynamic" => ScheduleKind::Dynamic,
            "guided" => ScheduleKind::Guided,
            "runtime" => ScheduleKind::Runtime,
            "auto" => ScheduleKind::Auto,
            _ => return Err(()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionClause {
    pub operator: ReductionOp,
    pub vars: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub chunk: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectiveInfo {
    pub is_parallel_for: bool,
    pub private_vars: BTreeSet<String>,
    pub firstprivate_vars: BTreeSet<String>,
    pub reduction_clauses: Vec<ReductionClause>,
    pub schedule: Option<Schedule>,
    pub other_clauses: Vec<String>,
}

impl DirectiveInfo {
    pub fn has_private(&self) -> bool {
        !self.private_vars.is_empty()
    }

    pub fn has_reduction(&self) -> bool {
        !self.reduction_clauses.is_empty()
    }
}

/// Parses the clauses of an `#pragma omp ...` line. Clauses outside the
/// supported grammar are kept verbatim in `other_clauses`.
pub fn parse_directive(pragma_raw: &str) -> Result<DirectiveInfo, DirectiveError> {
    let trimmed = pragma_raw.trim();
    let body = trimmed
        .strip_prefix('#')
        .map(str::trim_start)
        .and_then(|s| s.strip_prefix("pragma"))
        .map(str::trim_start)
        .and_then(|s| s.strip_prefix("omp"))
        .filter(|s| s.is_empty() || s.starts_with(char::is_whitespace))
        .ok_or_else(|| DirectiveError::NotOmpPragma(pragma_raw.to_string()))?;

    let mut info = DirectiveInfo::default();
    let mut names = Vec::new();
    let mut in_name = true;
    for (name, args) in split_clauses(body) {
        if in_name && args.is_none() && name.chars().all(|c| c.is_ascii_alphabetic() || c == '_') {
            names.push(name.clone());
            continue;
        }
        in_name = false;
        apply_clause(&mut info, &name, args.as_deref());
    }
    info.is_parallel_for = names.iter().any(|n| n == "parallel") && names.iter().any(|n| n == "for");
    Ok(info)
}

fn apply_clause(info: &mut DirectiveInfo, name: &str, args: Option<&str>) {
    let raw = || match args {
        Some(a) => format!("{name}({a})"),
        None => name.to_string(),
    };
    let Some(args) = args else {
        info.other_clauses.push(raw());
        return;
    };
    match name {
        "private" | "firstprivate" => {
            let vars = var_list(args);
            if vars.is_empty() {
                info.other_clauses.push(raw());
            } else if name == "private" {
                info.private_vars.extend(vars);
            } else {
                info.firstprivate_vars.extend(vars);
            }
        }
        "reduction" => match parse_reduction(args) {
            Some(clause) => info.reduction_clauses.push(clause),
            None => info.other_clauses.push(raw()),
        },
        "schedule" => match parse_schedule(args) {
            Some(schedule) => info.schedule = Some(schedule),
            None => info.other_clauses.push(raw()),
        },
        _ => info.other_clauses.push(raw()),
    }
}

fn var_list(args: &str) -> BTreeSet<String> {
    split_top_level(args, ',').into_iter().map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect()
}

fn parse_reduction(args: &str) -> Option<ReductionClause> {
    let colon = top_level_colon(args)?;
    let (head, vars) = (&args[..colon], &args[colon + 1..]);
    // Optional modifier: `reduction(inscan, +: x)`.
    let op = head.rsplit(',').next()?.trim();
    let operator = op.parse().ok()?;
    let vars = var_list(vars);
    (!vars.is_empty()).then_some(ReductionClause { operator, vars })
}

fn parse_schedule(args: &str) -> Option<Schedule> {
    let parts = split_top_level(args, ',');
    let kind_text = parts.first()?.trim();
    // Optional modifier: `schedule(monotonic: dynamic, 4)`.
    let kind_text = kind_text.rsplit(':').next()?.trim();
    let kind = kind_text.parse().ok()?;
    let chunk = match parts.get(1) {
        Some(c) => c.trim().parse::<u64>().ok().filter(|&c| c > 0),
        None => None,
    };
    Some(Schedule { kind, chunk })
}

fn top_level_colon(s: &str) -> Option<usize> {
    let mut depth = 0i32;
    for (i, c) in s.char_indices() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            ':' if depth == 0 => return Some(i),
            _ => {}
        }
    }
    None
}

fn split_top_level(s: &str, sep: char) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            c if c == sep && depth == 0 => {
                out.push(&s[start..i]);
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

/// Splits `parallel for private(a, b) nowait` into (name, args) pairs.
fn split_clauses(body: &str) -> Vec<(String, Option<String>)> {
    let chars: Vec<char> = body.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < chars.len() {
        if chars[i].is_whitespace() || chars[i] == ',' {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() && chars[i] != '(' && chars[i] != ',' {
            i += 1;
        }
        let name: String = chars[start..i].iter().collect();
        let mut j = i;
        while j < chars.len() && chars[j].is_whitespace() {
            j += 1;
        }
        let mut args = None;
        if j < chars.len() && chars[j] == '(' {
            let mut depth = 0;
            let open = j;
            while j < chars.len() {
                match chars[j] {
                    '(' => depth += 1,
                    ')' => {
                        depth -= 1;
                        if depth == 0 {
                            break;
                        }
                    }
                    _ => {}
                }
                j += 1;
            }
            let inner: String = chars[open + 1..j.min(chars.len())].iter().collect();
            args = Some(inner.trim().to_string());
            i = (j + 1).min(chars.len());
        }
        if !name.is_empty() {
            out.push((name, args));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn private_clause() {
        let d = parse_directive("#pragma omp parallel for private(j)").unwrap();
        assert!(d.is_parallel_for);
        assert_eq!(d.private_vars, set(&["j"]));
        assert!(d.reduction_clauses.is_empty() && d.schedule.is_none() && d.other_clauses.is_empty());
    }

    #[test]
    fn dynamic_schedule_with_chunk() {
        let d = parse_directive("#pragma omp parallel for schedule(dynamic,4)").unwrap();
        assert_eq!(d.schedule, Some(Schedule { kind: ScheduleKind::Dynamic, chunk: Some(4) }));
    }

    #[test]
    fn bare_directive() {
        let d = parse_directive("#pragma omp parallel for").unwrap();
        assert_eq!(d, DirectiveInfo { is_parallel_for: true, ..Default::default() });
    }

    #[test]
    fn reduction_and_unknown_clause() {
        let d = parse_directive("#pragma omp parallel for reduction(+:sum) collapse(2)").unwrap();
        assert_eq!(d.reduction_clauses, vec![ReductionClause { operator: ReductionOp::Add, vars: set(&["sum"]) }]);
        assert_eq!(d.other_clauses, vec!["collapse(2)".to_string()]);
    }

    #[test]
    fn not_omp() {
        assert!(parse_directive("#pragma once").is_err());
        assert!(parse_directive("#pragma ompx parallel").is_err());
        assert!(parse_directive("for (;;)").is_err());
    }

    #[test]
    fn worksharing_only_is_not_parallel_for() {
        assert!(!parse_directive("#pragma omp for").unwrap().is_parallel_for);
        assert!(!parse_directive("#pragma omp parallel").unwrap().is_parallel_for);
        assert!(parse_directive("#pragma omp target teams distribute parallel for simd").unwrap().is_parallel_for);
    }

    #[test]
    fn unknown_reduction_operator_is_kept_verbatim() {
        let d = parse_directive("#pragma omp parallel for reduction(merge: v)").unwrap();
        assert!(d.reduction_clauses.is_empty());
        assert_eq!(d.other_clauses, vec!["reduction(merge: v)".to_string()]);
    }
}
