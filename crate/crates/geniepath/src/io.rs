//! Text formats for graphs, features, labels and splits.
//!
//! Every `parse_*` function has a `write_*` counterpart; writing a parsed
//! canonical file reproduces it byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use geniepath_core::{Labels, Matrix, Split, Task};

use crate::error::{read_to_string, Error, ParseError, Result};

fn with_path<T>(path: &Path, r: Result<T, ParseError>) -> Result<T> {
    r.map_err(|source| Error::Parse {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_id(s: &str, line: usize, what: &str) -> Result<usize, ParseError> {
    s.parse()
        .map_err(|_| ParseError::new(line, format!("{what} {s:?} is not a non-negative integer")))
}

/// Non-comment lines as `(1-based line number, tab-separated fields)`.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.is_empty())
        .map(|(i, l)| (i + 1, l.split('\t').collect()))
}

fn two_fields<'a>(line: usize, fields: &[&'a str], format: &str) -> Result<(&'a str, &'a str), ParseError> {
    match fields {
        [a, b] => Ok((a, b)),
        _ => Err(ParseError::new(line, format!("expected {format}"))),
    }
}

/// `src<TAB>dst` per line; `#` lines are comments.
pub fn parse_edge_list(text: &str) -> Result<Vec<(usize, usize)>, ParseError> {
    records(text)
        .map(|(line, fields)| {
            let (a, b) = two_fields(line, &fields, "\"src<TAB>dst\"")?;
            Ok((parse_id(a, line, "source id")?, parse_id(b, line, "destination id")?))
        })
        .collect()
}

pub fn write_edge_list(edges: &[(usize, usize)]) -> String {
    let mut out = String::new();
    for (s, d) in edges {
        writeln!(out, "{s}\t{d}").unwrap();
    }
    out
}

pub fn load_edge_list(path: &Path) -> Result<Vec<(usize, usize)>> {
    with_path(path, parse_edge_list(&read_to_string(path)?))
}

/// A header line `N P`, then `N` lines of `P` space-separated numbers.
pub fn parse_features(text: &str) -> Result<Matrix, ParseError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines
        .next()
        .ok_or_else(|| ParseError::new(1, "missing \"N P\" header"))?;
    let dims: Vec<&str> = header.split(' ').collect();
    let [n, p] = dims[..] else {
        return Err(ParseError::new(1, "expected header \"N P\""));
    };
    let (n, p) = (parse_id(n, 1, "row count")?, parse_id(p, 1, "column count")?);
    let mut data = Vec::with_capacity(n * p);
    let mut rows = 0;
    for (line, l) in lines {
        if rows == n {
            return Err(ParseError::new(
                line,
                format!("more than the {n} rows declared in the header"),
            ));
        }
        let before = data.len();
        for v in l.split(' ') {
            let x: f64 = v
                .parse()
                .map_err(|_| ParseError::new(line, format!("{v:?} is not a number")))?;
            if !x.is_finite() {
                return Err(ParseError::new(line, format!("{v:?} is not finite")));
            }
            data.push(x);
        }
        if data.len() - before != p {
            return Err(ParseError::new(
                line,
                format!("expected {p} values, found {}", data.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != n {
        return Err(ParseError::new(
            text.lines().count() + 1,
            format!("header declares {n} rows, file has {rows}"),
        ));
    }
    Ok(Matrix::from_vec(n, p, data).expect("counted"))
}

pub fn write_features(x: &Matrix) -> String {
    let mut out = format!("{} {}\n", x.rows(), x.cols());
    for i in 0..x.rows() {
        for (j, v) in x.row(i).iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            // Debug is the shortest exact form and switches to exponents at the extremes.
            write!(out, "{v:?}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn load_features(path: &Path) -> Result<Matrix> {
    with_path(path, parse_features(&read_to_string(path)?))
}

/// `node<TAB>class` (multi-class) or `node<TAB>0,1,0` (multi-label).
///
/// `num_classes` is inferred when absent: the largest class plus one, or the
/// length of the first bit-vector. Nodes without a line are unlabeled.
pub fn parse_labels(
    text: &str,
    task: Task,
    num_nodes: usize,
    num_classes: Option<usize>,
) -> Result<Labels, ParseError> {
    let mut rows: Vec<(usize, usize, &str)> = Vec::new();
    for (line, fields) in records(text) {
        let (node, value) = two_fields(line, &fields, "\"node<TAB>label\"")?;
        let node = parse_id(node, line, "node id")?;
        if node >= num_nodes {
            return Err(ParseError::new(
                line,
                format!("node {node} out of range for {num_nodes} nodes"),
            ));
        }
        rows.push((line, node, value));
    }
    let mut seen = vec![false; num_nodes];
    for &(line, node, _) in &rows {
        if std::mem::replace(&mut seen[node], true) {
            return Err(ParseError::new(line, format!("node {node} labeled twice")));
        }
    }
    match task {
        Task::MultiClass => {
            let mut parsed = Vec::with_capacity(rows.len());
            for &(line, node, value) in &rows {
                parsed.push((line, node, parse_id(value, line, "class")?));
            }
            let c = num_classes.unwrap_or_else(|| parsed.iter().map(|r| r.2 + 1).max().unwrap_or(0));
            let mut classes = vec![None; num_nodes];
            for (line, node, class) in parsed {
                if class >= c {
                    return Err(ParseError::new(
                        line,
                        format!("class {class} out of range for {c} classes"),
                    ));
                }
                classes[node] = Some(class);
            }
            Ok(Labels::MultiClass {
                num_classes: c,
                classes,
            })
        }
        Task::MultiLabel => {
            let c = num_classes
                .or_else(|| rows.first().map(|r| r.2.split(',').count()))
                .unwrap_or(0);
            let mut targets = vec![None; num_nodes];
            for &(line, node, value) in &rows {
                let bits = value
                    .split(',')
                    .map(|b| match b {
                        "0" => Ok(false),
                        "1" => Ok(true),
                        _ => Err(ParseError::new(line, format!("label bit {b:?} is not 0 or 1"))),
                    })
                    .collect::<Result<Vec<bool>, _>>()?;
                if bits.len() != c {
                    return Err(ParseError::new(
                        line,
                        format!("expected {c} label bits, found {}", bits.len()),
                    ));
                }
                targets[node] = Some(bits);
            }
            Ok(Labels::MultiLabel {
                num_classes: c,
                targets,
            })
        }
    }
}

pub fn write_labels(labels: &Labels) -> String {
    let mut out = String::new();
    match labels {
        Labels::MultiClass { classes, .. } => {
            for (node, c) in classes.iter().enumerate() {
                if let Some(c) = c {
                    writeln!(out, "{node}\t{c}").unwrap();
                }
            }
        }
        Labels::MultiLabel { targets, .. } => {
            for (node, t) in targets.iter().enumerate() {
                if let Some(bits) = t {
                    let bits: Vec<&str> = bits.iter().map(|&b| if b { "1" } else { "0" }).collect();
                    writeln!(out, "{node}\t{}", bits.join(",")).unwrap();
                }
            }
        }
    }
    out
}

pub fn load_labels(path: &Path, task: Task, num_nodes: usize, num_classes: Option<usize>) -> Result<Labels> {
    with_path(path, parse_labels(&read_to_string(path)?, task, num_nodes, num_classes))
}

/// `node<TAB>{train|val|test}`; unlisted nodes belong to no split.
pub fn parse_splits(text: &str, num_nodes: usize) -> Result<Vec<Option<Split>>, ParseError> {
    let mut splits = vec![None; num_nodes];
    for (line, fields) in records(text) {
        let (node, name) = two_fields(line, &fields, "\"node<TAB>split\"")?;
        let node = parse_id(node, line, "node id")?;
        if node >= num_nodes {
            return Err(ParseError::new(
                line,
                format!("node {node} out of range for {num_nodes} nodes"),
            ));
        }
        let split = Split::ALL
            .into_iter()
            .find(|s| s.as_str() == name)
            .ok_or_else(|| ParseError::new(line, format!("unknown split {name:?}")))?;
        if splits[node].replace(split).is_some() {
            return Err(ParseError::new(line, format!("node {node} listed twice")));
        }
    }
    Ok(splits)
}

pub fn write_splits(splits: &[Option<Split>]) -> String {
    let mut out = String::new();
    for (node, s) in splits.iter().enumerate() {
        if let Some(s) = s {
            writeln!(out, "{node}\t{}", s.as_str()).unwrap();
        }
    }
    out
}

pub fn load_splits(path: &Path, num_nodes: usize) -> Result<Vec<Option<Split>>> {
    with_path(path, parse_splits(&read_to_string(path)?, num_nodes))
}
