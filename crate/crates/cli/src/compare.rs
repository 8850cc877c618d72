//! `compare`: column-wise comparison of two artifacts of the same schema, or
//! the one-sided check of an mc-tail slope against a deviation bound.

use std::fs;
use std::path::Path;

use renewal_ldp::Error;
use serde::Serialize;
use serde_json::{json, Value};

use crate::output::{schema_id, Output};
use crate::CliError;

#[derive(Debug, Serialize)]
struct ColumnReport {
    column: String,
    max_abs_diff: f64,
    max_rel_diff: f64,
    failures: usize,
    pass: bool,
}

struct Table {
    schema: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Core(Error::io(path.display().to_string(), e)))
}

fn parse_err(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Core(Error::Parse(format!("{}: {msg}", path.display())))
}

fn read_table(path: &Path) -> Result<Table, CliError> {
    let text = read(path)?;
    let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
    let schema = first
        .strip_prefix("# schema=")
        .ok_or_else(|| parse_err(path, "missing \"# schema=\" line"))?
        .trim()
        .to_string();
    let mut reader = csv::ReaderBuilder::new().from_reader(rest.as_bytes());
    let header = reader.headers().map_err(|e| parse_err(path, e))?.iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| r.map(|r| r.iter().map(String::from).collect()))
        .collect::<Result<_, _>>()
        .map_err(|e| parse_err(path, e))?;
    Ok(Table { schema, header, rows })
}

fn parse_real(s: &str) -> Option<f64> {
    match s {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

struct Tolerance {
    abs: Option<f64>,
    rel: Option<f64>,
}

impl Tolerance {
    fn accepts(&self, a: f64, b: f64) -> bool {
        if a == b {
            return true;
        }
        let diff = (a - b).abs();
        if !diff.is_finite() {
            return false;
        }
        self.abs.is_some_and(|t| diff <= t) || self.rel.is_some_and(|t| diff <= t * a.abs().max(b.abs()))
    }
}

/// Accumulates cell comparisons for one column.
fn compare_cells<'a>(name: &str, cells: impl Iterator<Item = (&'a str, &'a str)>, tol: &Tolerance) -> ColumnReport {
    let mut rep = ColumnReport { column: name.to_string(), max_abs_diff: 0.0, max_rel_diff: 0.0, failures: 0, pass: true };
    for (a, b) in cells {
        let ok = match (parse_real(a), parse_real(b)) {
            (Some(x), Some(y)) => {
                if x != y {
                    let d = (x - y).abs();
                    rep.max_abs_diff = rep.max_abs_diff.max(d);
                    let scale = x.abs().max(y.abs());
                    if scale > 0.0 {
                        rep.max_rel_diff = rep.max_rel_diff.max(d / scale);
                    }
                }
                tol.accepts(x, y)
            }
            _ => a == b,
        };
        if !ok {
            rep.failures += 1;
            rep.pass = false;
        }
    }
    rep
}

fn compare_tables(a: &Path, b: &Path, columns: Option<&[String]>, tol: &Tolerance) -> Result<Vec<ColumnReport>, CliError> {
    let (ta, tb) = (read_table(a)?, read_table(b)?);
    if ta.schema != tb.schema {
        return Err(CliError::Usage(format!("schema mismatch: {} vs {}", ta.schema, tb.schema)));
    }
    if ta.rows.len() != tb.rows.len() {
        return Err(CliError::Usage(format!("row counts differ: {} vs {}", ta.rows.len(), tb.rows.len())));
    }
    let names: Vec<String> = match columns {
        Some(c) => c.to_vec(),
        None => ta.header.iter().filter(|h| tb.header.contains(h)).cloned().collect(),
    };
    names
        .iter()
        .map(|name| {
            let ia = ta.header.iter().position(|h| h == name);
            let ib = tb.header.iter().position(|h| h == name);
            let (Some(ia), Some(ib)) = (ia, ib) else {
                return Err(CliError::Usage(format!("column \"{name}\" is missing from one of the files")));
            };
            let cells = ta.rows.iter().zip(&tb.rows).map(|(ra, rb)| (ra[ia].as_str(), rb[ib].as_str()));
            Ok(compare_cells(name, cells, tol))
        })
        .collect()
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                flatten(&format!("{prefix}/{k}"), x, out);
            }
        }
        Value::Array(items) => {
            for (i, x) in items.iter().enumerate() {
                flatten(&format!("{prefix}/{i}"), x, out);
            }
        }
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    serde_json::from_str(&read(path)?).map_err(|e| parse_err(path, e))
}

fn schema_of(v: &Value) -> String {
    v["schema"].as_str().unwrap_or_default().to_string()
}

fn as_real(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => parse_real(s),
        _ => None,
    }
}

/// `slope <= -bound + 2 stderr`.
fn slope_against_bound(tail: &Value, bound: &Value) -> Result<(Value, bool), CliError> {
    let fit = &tail["data"]["report"]["slope_fit"];
    if fit.is_null() {
        return Err(CliError::Censored("the mc-tail report has no fitted slope".into()));
    }
    let (slope, stderr) = (as_real(&fit["slope"]), as_real(&fit["stderr"]));
    let b = as_real(&bound["data"]["bound"]["bound"]);
    let (Some(slope), Some(stderr), Some(b)) = (slope, stderr, b) else {
        return Err(CliError::Usage("cannot read slope, stderr or bound from the reports".into()));
    };
    let limit = -b + 2.0 * stderr;
    let pass = slope <= limit;
    Ok((json!({ "rule": "slope <= -bound + 2 stderr", "slope": slope, "stderr": stderr, "bound": b, "limit": limit, "pass": pass }), pass))
}

pub fn run(
    a: &Path,
    b: &Path,
    abs: Option<f64>,
    rel: Option<f64>,
    columns: Option<&[String]>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let tol = Tolerance { abs, rel };
    let is_json = |p: &Path| p.extension().is_some_and(|e| e == "json");
    let (report, pass) = if is_json(a) && is_json(b) {
        let (va, vb) = (read_json(a)?, read_json(b)?);
        let (sa, sb) = (schema_of(&va), schema_of(&vb));
        let (tail, bound) = (schema_id("mc-tail"), schema_id("deviation-bound"));
        if sa == tail && sb == bound {
            slope_against_bound(&va, &vb)?
        } else if sa == bound && sb == tail {
            slope_against_bound(&vb, &va)?
        } else {
            if sa != sb {
                return Err(CliError::Usage(format!("schema mismatch: {sa} vs {sb}")));
            }
            let (mut la, mut lb) = (Vec::new(), Vec::new());
            flatten("", &va, &mut la);
            flatten("", &vb, &mut lb);
            let keys: Vec<&String> = la.iter().map(|p| &p.0).collect();
            if keys != lb.iter().map(|p| &p.0).collect::<Vec<_>>() {
                return Err(CliError::Usage("JSON documents have different structure".into()));
            }
            let cols: Vec<ColumnReport> = la
                .iter()
                .zip(&lb)
                .filter(|(x, _)| columns.is_none_or(|c| c.iter().any(|name| x.0.ends_with(&format!("/{name}")))))
                .map(|(x, y)| compare_cells(&x.0, std::iter::once((x.1.as_str(), y.1.as_str())), &tol))
                .collect();
            let pass = cols.iter().all(|c| c.pass);
            (json!({ "columns": cols, "pass": pass }), pass)
        }
    } else {
        let cols = compare_tables(a, b, columns, &tol)?;
        for c in &cols {
            println!(
                "{} {}: max abs diff {:e}, max rel diff {:e}, {} failure(s)",
                if c.pass { "PASS" } else { "FAIL" },
                c.column,
                c.max_abs_diff,
                c.max_rel_diff,
                c.failures
            );
        }
        let pass = cols.iter().all(|c| c.pass);
        (json!({ "columns": cols, "pass": pass }), pass)
    };
    let doc = json!({ "a": a.display().to_string(), "b": b.display().to_string(), "abs": abs, "rel": rel, "result": report });
    if let Some(dir) = out {
        let mut o = Output::new(dir)?;
        o.json("comparison.json", "comparison", &doc)?;
    }
    println!("{}", if pass { "compare: pass" } else { "compare: FAIL" });
    if pass {
        Ok(())
    } else {
        Err(CliError::Mismatch("values outside tolerance".into()))
    }
}
