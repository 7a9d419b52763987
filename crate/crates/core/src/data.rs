//! Quarterly datasets, transformations and CSV ingestion.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// A calendar quarter, rendered as `YYYY:Qn`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quarter {
    pub year: i32,
    pub q: u8,
}

impl Quarter {
    pub fn new(year: i32, q: u8) -> Result<Self> {
        if !(1..=4).contains(&q) {
            return Err(Error::InvalidParameter(format!("quarter {q}")));
        }
        Ok(Quarter { year, q })
    }

    pub fn next(self) -> Self {
        self.add(1)
    }

    pub fn add(self, n: i64) -> Self {
        let idx = self.year as i64 * 4 + (self.q as i64 - 1) + n;
        Quarter { year: idx.div_euclid(4) as i32, q: (idx.rem_euclid(4) + 1) as u8 }
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:Q{}", self.year, self.q)
    }
}

impl FromStr for Quarter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unparseable quarter `{s}` (expected YYYY:Qn)"));
        let (y, q) = s.trim().split_once(":Q").ok_or_else(bad)?;
        let year: i32 = y.parse().map_err(|_| bad())?;
        let q: u8 = q.parse().map_err(|_| bad())?;
        Quarter::new(year, q).map_err(|_| bad())
    }
}

impl Serialize for Quarter {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Quarter {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformCode {
    LogDifference,
    Level,
}

/// Observed (transformed) data with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: DMatrix<f64>,
    pub names: Vec<String>,
    pub dates: Vec<Quarter>,
    pub transforms: Vec<TransformCode>,
}

impl Dataset {
    pub fn new(y: DMatrix<f64>, names: Vec<String>, dates: Vec<Quarter>, transforms: Vec<TransformCode>) -> Result<Self> {
        if names.len() != y.ncols() || transforms.len() != y.ncols() {
            return Err(Error::Dimension(format!(
                "{} columns but {} names and {} transforms",
                y.ncols(),
                names.len(),
                transforms.len()
            )));
        }
        if dates.len() != y.nrows() {
            return Err(Error::Dimension(format!("{} rows but {} dates", y.nrows(), dates.len())));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset".into()));
        }
        Ok(Dataset { y, names, dates, transforms })
    }

    /// Unlabelled dataset with quarterly dates from 2000:Q1 and level transforms.
    pub fn from_matrix(y: DMatrix<f64>) -> Result<Self> {
        let m = y.ncols();
        let start = Quarter { year: 2000, q: 1 };
        let dates = (0..y.nrows()).map(|t| start.add(t as i64)).collect();
        let names = (0..m).map(|i| format!("y{}", i + 1)).collect();
        Dataset::new(y, names, dates, vec![TransformCode::Level; m])
    }

    pub fn nobs(&self) -> usize {
        self.y.nrows()
    }

    pub fn nvars(&self) -> usize {
        self.y.ncols()
    }

    /// Rows `0..=end` (inclusive index).
    pub fn truncate(&self, end: usize) -> Dataset {
        let n = (end + 1).min(self.nobs());
        Dataset {
            y: self.y.rows(0, n).into_owned(),
            names: self.names.clone(),
            dates: self.dates[..n].to_vec(),
            transforms: self.transforms.clone(),
        }
    }

    /// Column subset by name, in the requested order.
    pub fn select(&self, vars: &[String]) -> Result<Dataset> {
        let idx = self.indices_of(vars)?;
        let y = DMatrix::from_fn(self.nobs(), idx.len(), |t, j| self.y[(t, idx[j])]);
        Ok(Dataset {
            y,
            names: idx.iter().map(|&i| self.names[i].clone()).collect(),
            dates: self.dates.clone(),
            transforms: idx.iter().map(|&i| self.transforms[i]).collect(),
        })
    }

    pub fn indices_of(&self, vars: &[String]) -> Result<Vec<usize>> {
        vars.iter()
            .map(|v| {
                self.names
                    .iter()
                    .position(|n| n == v)
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown variable `{v}`")))
            })
            .collect()
    }

    pub fn date_index(&self, q: Quarter) -> Option<usize> {
        self.dates.iter().position(|d| *d == q)
    }
}

/// Raw (untransformed) table as read from CSV.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub dates: Vec<Quarter>,
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

pub fn read_raw_csv(path: &Path) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Parse { path: path.into(), line: 1, message: "need a date column and at least one series".into() });
    }
    let names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse { path: path.into(), line, message: e.to_string() })?;
        if rec.len() != header.len() {
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: format!("ragged row: {} fields, expected {}", rec.len(), header.len()),
            });
        }
        let d: Quarter = rec[0].parse().map_err(|e: Error| Error::Parse { path: path.into(), line, message: e.to_string() })?;
        let row = rec
            .iter()
            .skip(1)
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse { path: path.into(), line, message: format!("non-numeric value `{s}`") })
            })
            .collect::<Result<Vec<f64>>>()?;
        dates.push(d);
        values.push(row);
    }
    if values.is_empty() {
        return Err(Error::EmptyInput(format!("{}", path.display())));
    }
    Ok(RawTable { dates, names, values })
}

/// Apply per-series transforms. Log differences drop the first observation and the
/// whole table is aligned to the common sample.
pub fn transform(raw: &RawTable, codes: &[TransformCode]) -> Result<Dataset> {
    if codes.len() != raw.names.len() {
        return Err(Error::Dimension(format!("{} transforms for {} series", codes.len(), raw.names.len())));
    }
    let any_diff = codes.iter().any(|c| *c == TransformCode::LogDifference);
    let start = usize::from(any_diff);
    let n = raw.values.len();
    if n <= start {
        return Err(Error::EmptyInput("no observations left after differencing".into()));
    }
    let m = codes.len();
    let mut y = DMatrix::zeros(n - start, m);
    for (j, code) in codes.iter().enumerate() {
        for t in start..n {
            let v = match code {
                TransformCode::Level => raw.values[t][j],
                TransformCode::LogDifference => {
                    let (a, b) = (raw.values[t][j], raw.values[t - 1][j]);
                    if !(a > 0.0 && b > 0.0) {
                        return Err(Error::InvalidParameter(format!(
                            "series `{}` has a nonpositive value at {} under log-difference",
                            raw.names[j], raw.dates[if a > 0.0 { t - 1 } else { t }]
                        )));
                    }
                    a.ln() - b.ln()
                }
            };
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("series `{}` at {}", raw.names[j], raw.dates[t])));
            }
            y[(t - start, j)] = v;
        }
    }
    Dataset::new(y, raw.names.clone(), raw.dates[start..].to_vec(), codes.to_vec())
}

/// Load a CSV (first column `YYYY:Qn`, remaining numeric), pick variables and
/// apply transforms. Series without an override use `default`.
pub fn load_dataset(
    path: &Path,
    variables: Option<&[String]>,
    overrides: &HashMap<String, TransformCode>,
    default: TransformCode,
) -> Result<Dataset> {
    let raw = read_raw_csv(path)?;
    let raw = match variables {
        None => raw,
        Some(vars) => {
            let idx: Vec<usize> = vars
                .iter()
                .map(|v| {
                    raw.names
                        .iter()
                        .position(|n| n == v)
                        .ok_or_else(|| Error::config(format!("data.variables.{v}"), "variable not found in CSV header"))
                })
                .collect::<Result<_>>()?;
            RawTable {
                dates: raw.dates.clone(),
                names: idx.iter().map(|&i| raw.names[i].clone()).collect(),
                values: raw.values.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect(),
            }
        }
    };
    for k in overrides.keys() {
        if !raw.names.contains(k) {
            return Err(Error::config(format!("data.transforms.{k}"), "unknown variable"));
        }
    }
    let codes: Vec<TransformCode> = raw.names.iter().map(|n| overrides.get(n).copied().unwrap_or(default)).collect();
    transform(&raw, &codes)
}

/// Write a dataset as CSV with a date column.
pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["date".to_string()];
    header.extend(ds.names.iter().cloned());
    w.write_record(&header)?;
    for t in 0..ds.nobs() {
        let mut rec = vec![ds.dates[t].to_string()];
        rec.extend((0..ds.nvars()).map(|j| format!("{:.17e}", ds.y[(t, j)])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn raw(vals: &[f64]) -> RawTable {
        RawTable {
            dates: (0..vals.len()).map(|t| Quarter { year: 2000, q: 1 }.add(t as i64)).collect(),
            names: vec!["x".into()],
            values: vals.iter().map(|v| vec![*v]).collect(),
        }
    }

    #[test]
    fn quarter_roundtrip_and_arithmetic() {
        let q: Quarter = "1979:Q4".parse().unwrap();
        assert_eq!(q.to_string(), "1979:Q4");
        assert_eq!(q.next().to_string(), "1980:Q1");
        assert_eq!(q.add(-4).to_string(), "1978:Q4");
        assert!("1979Q4".parse::<Quarter>().is_err());
        assert!("1979:Q5".parse::<Quarter>().is_err());
    }

    #[test]
    fn log_difference_of_constant_is_zero() {
        let ds = transform(&raw(&[3.0, 3.0, 3.0, 3.0]), &[TransformCode::LogDifference]).unwrap();
        assert!(ds.y.iter().all(|v| *v == 0.0));
        assert_eq!(ds.nobs(), 3);
    }

    #[test]
    fn log_difference_of_exponentials() {
        let e = std::f64::consts::E;
        let ds = transform(&raw(&[1.0, e, e * e]), &[TransformCode::LogDifference]).unwrap();
        assert!((ds.y[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((ds.y[(1, 0)] - 1.0).abs() < 1e-15);
        assert_eq!(ds.dates[0].to_string(), "2000:Q2");
    }

    #[test]
    fn levels_pass_through_and_align() {
        let r = RawTable {
            dates: (0..3).map(|t| Quarter { year: 1990, q: 1 }.add(t)).collect(),
            names: vec!["gdp".into(), "ffr".into()],
            values: vec![vec![1.0, 5.0], vec![2.0, 5.5], vec![4.0, 6.0]],
        };
        let ds = transform(&r, &[TransformCode::LogDifference, TransformCode::Level]).unwrap();
        assert_eq!(ds.y.column(1).as_slice(), &[5.5, 6.0]);
    }

    #[test]
    fn nonpositive_under_log_difference_fails() {
        assert!(transform(&raw(&[1.0, 0.0, 2.0]), &[TransformCode::LogDifference]).is_err());
    }

    #[test]
    fn csv_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::File::create(&p).unwrap().write_all(b"date,a,b\n2000:Q1,1,2\n2000:Q2,1\n").unwrap();
        assert!(matches!(read_raw_csv(&p), Err(Error::Parse { line: 3, .. })));
        std::fs::File::create(&p).unwrap().write_all(b"date,a\n2000-01,1\n").unwrap();
        assert!(matches!(read_raw_csv(&p), Err(Error::Parse { line: 2, .. })));
        std::fs::File::create(&p).unwrap().write_all(b"date,a\n2000:Q1,1\n2000:Q2,2\n").unwrap();
        let ds = load_dataset(&p, None, &HashMap::new(), TransformCode::Level).unwrap();
        assert_eq!(ds.nobs(), 2);
    }
}
