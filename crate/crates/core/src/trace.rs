//! Per-iteration trace records and their CSV serialization.
//!
//! ```text
//! # problem: bilinear:n=1,m=1,a=1
//! # schedule: anchored-new:gamma=2
//! # T: 100000
//! # K: 1
//! # gamma: 2
//! # seed: 0
//! # record_every: 100
//! t,grad_norm_sq,dist_opt_sq,diff_norm,dist_anchor
//! 0,2.0000000000000000e0,2.0000000000000000e0,1.4142135623730951e0,0.0000000000000000e0
//! ```
//!
//! Floats carry 17 significant digits so a parsed trace is bit-identical to
//! the one written. Absent values are empty fields.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "t,grad_norm_sq,dist_opt_sq,diff_norm,dist_anchor";

#[derive(Debug, Clone, PartialEq)]
pub struct TraceHeader {
    pub problem: String,
    pub schedule: String,
    pub steps: usize,
    pub lipschitz: f64,
    pub gamma: Option<f64>,
    pub seed: u64,
    pub record_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    /// `‖G(z_t)‖²`
    pub grad_norm_sq: f64,
    /// `‖z_t - z*‖²`
    pub dist_opt_sq: Option<f64>,
    /// `‖z_{t+1} - z_t‖`; absent on the final row.
    pub diff_norm: Option<f64>,
    /// `‖z_t - z_0‖`
    pub dist_anchor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub rows: Vec<TraceRow>,
    /// Full iterates at `t ∈ {0, 1, 2, T-1, T}`. Not serialized.
    pub snapshots: BTreeMap<usize, Vec<f64>>,
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

impl Trace {
    pub fn row(&self, t: usize) -> Option<&TraceRow> {
        self.rows
            .binary_search_by_key(&t, |r| r.t)
            .ok()
            .map(|i| &self.rows[i])
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// True when every `t` from 0 to the last recorded row is present.
    pub fn is_contiguous(&self) -> bool {
        self.rows.iter().enumerate().all(|(i, r)| r.t == i)
    }

    /// `‖z_0 - z*‖`, if the optimum distance was recorded.
    pub fn z0_dist(&self) -> Option<f64> {
        self.row(0).and_then(|r| r.dist_opt_sq).map(f64::sqrt)
    }

    /// `‖d_1‖ = ‖z_2 - z_1‖`.
    pub fn d1_norm(&self) -> Option<f64> {
        self.row(1).and_then(|r| r.diff_norm)
    }

    pub fn to_csv(&self) -> String {
        let h = &self.header;
        let mut out = String::new();
        let _ = writeln!(out, "# problem: {}", h.problem);
        let _ = writeln!(out, "# schedule: {}", h.schedule);
        let _ = writeln!(out, "# T: {}", h.steps);
        let _ = writeln!(out, "# K: {}", h.lipschitz);
        if let Some(g) = h.gamma {
            let _ = writeln!(out, "# gamma: {g}");
        }
        let _ = writeln!(out, "# seed: {}", h.seed);
        let _ = writeln!(out, "# record_every: {}", h.record_every);
        out.push_str(CSV_HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.t,
                fmt_f64(r.grad_norm_sq),
                opt(r.dist_opt_sq),
                opt(r.diff_norm),
                fmt_f64(r.dist_anchor)
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut meta: BTreeMap<String, String> = BTreeMap::new();
        let mut rows = Vec::new();
        let mut seen_header = false;
        let mut last_line = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            last_line = line_no;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some((k, v)) = comment.split_once(':') {
                    meta.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            if !seen_header {
                if line != CSV_HEADER {
                    return Err(parse_err(line_no, format!("expected header '{CSV_HEADER}'")));
                }
                seen_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(parse_err(
                    line_no,
                    format!("expected 5 fields, found {}", fields.len()),
                ));
            }
            let t: usize = fields[0]
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad iteration index '{}'", fields[0])))?;
            let num = |s: &str, name: &str| -> Result<f64> {
                let v: f64 = s
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad {name} value '{s}'")))?;
                if v.is_nan() || v < 0.0 {
                    return Err(parse_err(line_no, format!("{name} must be a non-negative number")));
                }
                Ok(v)
            };
            let opt = |s: &str, name: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    num(s, name).map(Some)
                }
            };
            if let Some(prev) = rows.last().map(|r: &TraceRow| r.t) {
                if t <= prev {
                    return Err(parse_err(line_no, "rows must be strictly increasing in t"));
                }
            }
            rows.push(TraceRow {
                t,
                grad_norm_sq: num(fields[1], "grad_norm_sq")?,
                dist_opt_sq: opt(fields[2], "dist_opt_sq")?,
                diff_norm: opt(fields[3], "diff_norm")?,
                dist_anchor: num(fields[4], "dist_anchor")?,
            });
        }
        if !seen_header {
            return Err(parse_err(last_line.max(1), "missing CSV header"));
        }

        let get = |key: &str| {
            meta.get(key)
                .ok_or_else(|| parse_err(last_line, format!("missing metadata '# {key}:'")))
        };
        let parse_meta = |key: &str| -> Result<f64> {
            get(key)?
                .parse()
                .map_err(|_| parse_err(last_line, format!("bad metadata value for '{key}'")))
        };
        let header = TraceHeader {
            problem: get("problem")?.clone(),
            schedule: get("schedule")?.clone(),
            steps: parse_meta("T")? as usize,
            lipschitz: parse_meta("K")?,
            gamma: meta.get("gamma").map(|_| parse_meta("gamma")).transpose()?,
            seed: meta.get("seed").map_or(Ok(0), |s| {
                s.parse()
                    .map_err(|_| parse_err(last_line, "bad metadata value for 'seed'"))
            })?,
            record_every: parse_meta("record_every").unwrap_or(1.0) as usize,
        };
        let trace = Trace {
            header,
            rows,
            snapshots: BTreeMap::new(),
        };
        // A complete trace ends at T with no successor difference.
        match trace.rows.last() {
            Some(r) if r.t == trace.header.steps && r.diff_norm.is_none() => Ok(trace),
            Some(r) if r.t > trace.header.steps => Err(parse_err(
                last_line,
                format!("row t={} beyond declared T={}", r.t, trace.header.steps),
            )),
            _ => Err(parse_err(
                last_line,
                format!("trace truncated: last row does not reach T={}", trace.header.steps),
            )),
        }
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trace {
        Trace {
            header: TraceHeader {
                problem: "bilinear:n=1,m=1,a=1".into(),
                schedule: "anchored-new:gamma=2".into(),
                steps: 2,
                lipschitz: 1.0,
                gamma: Some(2.0),
                seed: 3,
                record_every: 1,
            },
            rows: vec![
                TraceRow {
                    t: 0,
                    grad_norm_sq: 2.0,
                    dist_opt_sq: Some(2.0),
                    diff_norm: Some(std::f64::consts::SQRT_2),
                    dist_anchor: 0.0,
                },
                TraceRow {
                    t: 1,
                    grad_norm_sq: 0.1 + 0.2,
                    dist_opt_sq: None,
                    diff_norm: Some(1.0 / 3.0),
                    dist_anchor: 1e-300,
                },
                TraceRow {
                    t: 2,
                    grad_norm_sq: 1.0,
                    dist_opt_sq: Some(1.0),
                    diff_norm: None,
                    dist_anchor: 1.0,
                },
            ],
            snapshots: BTreeMap::new(),
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = sample();
        let text = t.to_csv();
        assert!(text.contains("\nt,grad_norm_sq,dist_opt_sq,diff_norm,dist_anchor\n"));
        let back = Trace::from_csv(&text).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(2.0), "2.0000000000000000e0");
    }

    #[test]
    fn truncated_file_reports_line() {
        let text = sample().to_csv();
        let cut: String = text.lines().take(9).collect::<Vec<_>>().join("\n");
        match Trace::from_csv(&cut) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 9);
                assert!(message.contains("truncated"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn half_written_row_reports_line() {
        let mut text = sample().to_csv();
        text.truncate(text.len() - 30);
        match Trace::from_csv(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 11),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_header_rejected() {
        assert!(Trace::from_csv("# problem: x\n0,1,1,1,0\n").is_err());
    }
}
