//! Plain-text dataset files.
//!
//! ```text
//! # bygars-dataset v1 kind=regression d=3 n=2 classes=0
//! 0.25,1.5,-2,0.125
//! ...
//! ```
//!
//! One header line, then one comma-separated row per example: the target
//! (real value or integer class label) followed by the `d` features. Floats
//! are written in Rust's shortest round-trip form, so reading a file back
//! reproduces the dataset bit for bit.

use std::io::{BufRead, Write};

use super::{Dataset, Targets, TaskKind};
use crate::error::{Error, Result};

const MAGIC: &str = "# bygars-dataset v1";

pub fn write_dataset<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    let kind = match ds.kind() {
        TaskKind::Regression => "regression",
        TaskKind::Classification => "classification",
    };
    writeln!(
        out,
        "{MAGIC} kind={kind} d={} n={} classes={}",
        ds.dim(),
        ds.len(),
        ds.classes()
    )?;
    let mut line = String::new();
    for i in 0..ds.len() {
        line.clear();
        match ds.targets() {
            Targets::Regression(y) => line.push_str(&y[i].to_string()),
            Targets::Classification { labels, .. } => line.push_str(&labels[i].to_string()),
        }
        for x in ds.x(i) {
            line.push(',');
            line.push_str(&x.to_string());
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(input: R) -> Result<Dataset> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty dataset file".into()))??;
    let fields = header
        .strip_prefix(MAGIC)
        .ok_or_else(|| Error::Parse(format!("bad dataset header: {header}")))?;

    let mut kind = None;
    let mut d = None;
    let mut n = None;
    let mut classes = None;
    for kv in fields.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad header field {kv}")))?;
        match k {
            "kind" => {
                kind = Some(match v {
                    "regression" => TaskKind::Regression,
                    "classification" => TaskKind::Classification,
                    _ => return Err(Error::Parse(format!("unknown kind {v}"))),
                })
            }
            "d" => d = Some(parse_usize(v)?),
            "n" => n = Some(parse_usize(v)?),
            "classes" => classes = Some(parse_usize(v)?),
            _ => return Err(Error::Parse(format!("unknown header field {k}"))),
        }
    }
    let missing = |f: &str| Error::Parse(format!("header missing {f}"));
    let kind = kind.ok_or_else(|| missing("kind"))?;
    let d = d.ok_or_else(|| missing("d"))?;
    let n = n.ok_or_else(|| missing("n"))?;
    let classes = classes.ok_or_else(|| missing("classes"))?;

    let mut features = Vec::with_capacity(n * d);
    let mut reals = Vec::new();
    let mut labels = Vec::new();
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let target = parts.next().unwrap_or_default();
        match kind {
            TaskKind::Regression => reals.push(parse_f64(target)?),
            TaskKind::Classification => labels.push(parse_usize(target)?),
        }
        let before = features.len();
        for p in parts {
            features.push(parse_f64(p)?);
        }
        if features.len() - before != d {
            return Err(Error::Parse(format!(
                "row {row}: expected {d} features, found {}",
                features.len() - before
            )));
        }
    }
    let rows = reals.len().max(labels.len());
    if rows != n {
        return Err(Error::Parse(format!("header says {n} rows, found {rows}")));
    }
    let targets = match kind {
        TaskKind::Regression => Targets::Regression(reals),
        TaskKind::Classification => Targets::Classification { labels, classes },
    };
    Dataset::new(features, d, targets)
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("expected integer, got {s:?}")))
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("expected number, got {s:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_classification, generate_regression, SyntheticSpec};
    use crate::rng::RngStream;

    #[test]
    fn regression_round_trip_is_bit_exact() {
        let spec = SyntheticSpec {
            n: 300,
            n_test: 50,
            n_aux: 50,
            ..SyntheticSpec::regression()
        };
        let (ds, _) = generate_regression(&spec, &mut RngStream::new(2, 1)).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice()).unwrap();
        let bits = |d: &Dataset| d.features().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&ds), bits(&back));
        assert_eq!(ds, back);
    }

    #[test]
    fn classification_round_trip() {
        let spec = SyntheticSpec {
            n: 200,
            n_test: 20,
            n_aux: 20,
            ..SyntheticSpec::classification()
        };
        let ds = generate_classification(&spec, &mut RngStream::new(2, 1)).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        assert_eq!(read_dataset(buf.as_slice()).unwrap(), ds);
    }

    #[test]
    fn rejects_malformed_files() {
        assert!(read_dataset("".as_bytes()).is_err());
        assert!(read_dataset("hello\n".as_bytes()).is_err());
        let short = format!("{MAGIC} kind=regression d=2 n=1 classes=0\n1.0,2.0\n");
        assert!(read_dataset(short.as_bytes()).is_err());
        let count = format!("{MAGIC} kind=regression d=1 n=2 classes=0\n1.0,2.0\n");
        assert!(read_dataset(count.as_bytes()).is_err());
    }
}
