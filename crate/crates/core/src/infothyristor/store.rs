//! Persisted per-parameter K increments.
//!
//! One record per line, tab separated, in this fixed field order:
//!
//! ```text
//! query <TAB> target <TAB> delta <TAB> param <TAB> k_increment
//! ```
//!
//! Numbers are written in Rust's shortest round-trip form, so a value read
//! back is bit-identical to the one written. Lines starting with `#` and
//! blank lines are ignored. The file is append-only; when a key occurs more
//! than once the last record wins.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::infothyristor::ComparisonResult;

pub const HEADER: &str = "# query\ttarget\tdelta\tparam\tk_increment";

#[derive(Debug, Clone, PartialEq)]
pub struct IncrementRecord {
    pub query: String,
    pub target: String,
    pub delta: f64,
    pub param: String,
    pub k_increment: f64,
}

impl IncrementRecord {
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.query, self.target, self.delta, self.param, self.k_increment
        )
    }

    pub fn parse_line(line: &str, line_no: usize) -> Result<IncrementRecord> {
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(err(format!(
                "expected 5 tab-separated fields, got {}",
                fields.len()
            )));
        }
        let number = |s: &str, what: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("invalid {what} {s:?}")))
        };
        Ok(IncrementRecord {
            query: fields[0].to_string(),
            target: fields[1].to_string(),
            delta: number(fields[2], "delta")?,
            param: fields[3].to_string(),
            k_increment: number(fields[4], "k_increment")?,
        })
    }

    fn validate(&self) -> Result<()> {
        for field in [&self.query, &self.target, &self.param] {
            if field.is_empty() || field.contains(['\t', '\n', '\r']) || field.starts_with('#') {
                return Err(Error::Schema(format!(
                    "store field {field:?} is empty, starts with '#', or contains a tab or line break"
                )));
            }
        }
        if !(self.delta.is_finite() && self.delta > 0.0 && self.k_increment.is_finite()) {
            return Err(Error::Schema(
                "store numbers must be finite, delta > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Key {
    query: String,
    target: String,
    delta_bits: u64,
    param: String,
}

impl Key {
    fn new(query: &str, target: &str, delta: f64, param: &str) -> Key {
        Key {
            query: query.to_string(),
            target: target.to_string(),
            delta_bits: delta.to_bits(),
            param: param.to_string(),
        }
    }
}

/// Increments keyed by `(query, target, delta, param)`, optionally backed by
/// an append-only file.
#[derive(Debug, Default)]
pub struct IncrementStore {
    values: HashMap<Key, f64>,
    order: Vec<Key>,
    file: Option<(PathBuf, File)>,
}

impl IncrementStore {
    /// An in-memory store.
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads `path` if it exists and appends future puts to it.
    pub fn open<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let mut store = if path.exists() {
            Self::read_from(BufReader::new(File::open(path)?))?
        } else {
            Self::new()
        };
        let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        if fresh {
            writeln!(file, "{HEADER}")?;
        }
        store.file = Some((path.to_path_buf(), file));
        Ok(store)
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self> {
        let mut store = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            store.insert(IncrementRecord::parse_line(trimmed, i + 1)?);
        }
        Ok(store)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{HEADER}")?;
        for record in self.records() {
            writeln!(out, "{}", record.to_line())?;
        }
        Ok(())
    }

    fn insert(&mut self, r: IncrementRecord) {
        let key = Key::new(&r.query, &r.target, r.delta, &r.param);
        if self.values.insert(key.clone(), r.k_increment).is_none() {
            self.order.push(key);
        }
    }

    pub fn put_record(&mut self, record: IncrementRecord) -> Result<()> {
        record.validate()?;
        if let Some((_, file)) = self.file.as_mut() {
            writeln!(file, "{}", record.to_line())?;
        }
        self.insert(record);
        Ok(())
    }

    /// Stores every increment of `result`.
    pub fn put(&mut self, result: &ComparisonResult) -> Result<()> {
        let records: Vec<IncrementRecord> = result
            .increments
            .iter()
            .map(|(param, k)| IncrementRecord {
                query: result.query.clone(),
                target: result.target.clone(),
                delta: result.delta,
                param: param.clone(),
                k_increment: *k,
            })
            .collect();
        for r in &records {
            r.validate()?;
        }
        if let Some((_, file)) = self.file.as_mut() {
            let mut block = String::new();
            for r in &records {
                block.push_str(&r.to_line());
                block.push('\n');
            }
            file.write_all(block.as_bytes())?;
        }
        for r in records {
            self.insert(r);
        }
        Ok(())
    }

    pub fn get(&self, query: &str, target: &str, delta: f64, param: &str) -> Option<f64> {
        self.values
            .get(&Key::new(query, target, delta, param))
            .copied()
    }

    /// Sum of the stored increments over `params`.
    pub fn combine<S: AsRef<str>>(
        &self,
        query: &str,
        target: &str,
        delta: f64,
        params: &[S],
    ) -> Result<f64> {
        params
            .iter()
            .map(|p| {
                self.get(query, target, delta, p.as_ref())
                    .ok_or_else(|| Error::MissingIncrement {
                        query: query.to_string(),
                        target: target.to_string(),
                        delta,
                        param: p.as_ref().to_string(),
                    })
            })
            .sum()
    }

    /// Stored parameters for a comparison, in first-insertion order.
    pub fn params(&self, query: &str, target: &str, delta: f64) -> Vec<String> {
        self.order
            .iter()
            .filter(|k| k.query == query && k.target == target && k.delta_bits == delta.to_bits())
            .map(|k| k.param.clone())
            .collect()
    }

    /// Sum over all stored parameters of a comparison.
    pub fn combine_all(&self, query: &str, target: &str, delta: f64) -> Result<f64> {
        let params = self.params(query, target, delta);
        if params.is_empty() {
            return Err(Error::NotFound(format!(
                "no increments stored for {query:?} -> {target:?} at delta {delta}"
            )));
        }
        self.combine(query, target, delta, &params)
    }

    pub fn records(&self) -> impl Iterator<Item = IncrementRecord> + '_ {
        self.order.iter().map(|k| IncrementRecord {
            query: k.query.clone(),
            target: k.target.clone(),
            delta: f64::from_bits(k.delta_bits),
            param: k.param.clone(),
            k_increment: self.values[k],
        })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}
