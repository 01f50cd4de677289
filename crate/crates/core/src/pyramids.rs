//! Population pyramids: 17 five-year cohorts (the last one 80+) for each sex,
//! stored as percentages of the whole population.
//!
//! Wide CSV layout, one country per row:
//!
//! ```text
//! name,m00,m05,...,m75,m80,f00,f05,...,f75,f80
//! ```
//!
//! Values may be raw counts or shares; every row is normalized to sum to 100.
//! The long layout `name,sex,cohort,value` (sex `m`/`f`, cohort `00`..`80`)
//! is accepted by [`ingest_long`].

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::similarity::ObjectRecord;

pub const COHORTS: usize = 17;
pub const PARAMS: usize = 2 * COHORTS;

/// Starting age of each cohort, as used in column names.
pub const COHORT_STARTS: [&str; COHORTS] = [
    "00", "05", "10", "15", "20", "25", "30", "35", "40", "45", "50", "55", "60", "65", "70", "75",
    "80",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sex {
    Male,
    Female,
}

impl Sex {
    pub fn prefix(self) -> char {
        match self {
            Sex::Male => 'm',
            Sex::Female => 'f',
        }
    }

    pub fn parse(s: &str) -> Option<Sex> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m" | "male" => Some(Sex::Male),
            "f" | "female" => Some(Sex::Female),
            _ => None,
        }
    }
}

/// Column names of one sex, youngest cohort first.
pub fn sex_param_names(sex: Sex) -> Vec<String> {
    COHORT_STARTS
        .iter()
        .map(|c| format!("{}{c}", sex.prefix()))
        .collect()
}

/// All 34 parameter names: male cohorts, then female cohorts.
pub fn param_names() -> Vec<String> {
    let mut names = sex_param_names(Sex::Male);
    names.extend(sex_param_names(Sex::Female));
    names
}

/// Rescales non-negative values to percentages summing to 100.
pub fn normalize(raw: &[f64]) -> Result<Vec<f64>> {
    if let Some(&v) = raw.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Domain(v));
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::Undefined(
            "cannot normalize values that sum to zero".into(),
        ));
    }
    Ok(raw.iter().map(|v| v * 100.0 / total).collect())
}

pub fn pyramid(name: &str, shares: &[f64]) -> Result<ObjectRecord> {
    if shares.len() != PARAMS {
        return Err(Error::Schema(format!(
            "a pyramid has {PARAMS} cohorts, got {}",
            shares.len()
        )));
    }
    ObjectRecord::from_parts(name, param_names(), shares.to_vec())
}

/// Every cohort at 1/34 of the population.
pub fn uniform_model() -> ObjectRecord {
    pyramid("UN", &[100.0 / PARAMS as f64; PARAMS]).expect("uniform model is valid")
}

/// Each cohort smaller than the previous one by `rate`, per sex, with equal
/// male and female halves.
pub fn exponential_model(rate: f64) -> Result<ObjectRecord> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidConfig(format!(
            "exponential model rate must be in [0, 1), got {rate}"
        )));
    }
    if rate == 0.0 {
        return Ok(uniform_model().renamed("E0"));
    }
    let q = 1.0 - rate;
    let norm = 50.0 * (1.0 - q) / (1.0 - q.powi(COHORTS as i32));
    let half: Vec<f64> = (0..COHORTS).map(|k| norm * q.powi(k as i32)).collect();
    let shares: Vec<f64> = half.iter().chain(half.iter()).copied().collect();
    pyramid(&model_name(rate), &shares)
}

fn model_name(rate: f64) -> String {
    let pct = rate * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("E{}", pct.round() as i64)
    } else {
        format!("E{pct}")
    }
}

/// Male plus female share of each cohort, youngest first.
pub fn combined_cohorts(p: &ObjectRecord) -> Result<Vec<f64>> {
    let male = sex_slice(p, Sex::Male)?;
    let female = sex_slice(p, Sex::Female)?;
    Ok(male
        .values()
        .iter()
        .zip(female.values())
        .map(|(m, f)| m + f)
        .collect())
}

/// The 17 cohorts of one sex, shares left as they are.
pub fn sex_slice(p: &ObjectRecord, sex: Sex) -> Result<ObjectRecord> {
    p.select(&sex_param_names(sex))
}

/// Normalized pyramids in input order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PyramidTable {
    rows: Vec<ObjectRecord>,
    index: HashMap<String, usize>,
}

impl PyramidTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a row of raw values, normalizing them.
    pub fn push_raw(&mut self, name: &str, raw: &[f64]) -> Result<()> {
        if raw.len() != PARAMS {
            return Err(Error::Schema(format!(
                "expected {PARAMS} values, got {}",
                raw.len()
            )));
        }
        self.push(pyramid(name, &normalize(raw)?)?)
    }

    pub fn push(&mut self, p: ObjectRecord) -> Result<()> {
        if p.param_names() != param_names().as_slice() {
            return Err(Error::Schema(format!(
                "{:?} is not a 34-cohort pyramid",
                p.name()
            )));
        }
        if self.index.contains_key(p.name()) {
            return Err(Error::Schema(format!("duplicate name {:?}", p.name())));
        }
        self.index.insert(p.name().to_string(), self.rows.len());
        self.rows.push(p);
        Ok(())
    }

    pub fn rows(&self) -> &[ObjectRecord] {
        &self.rows
    }

    pub fn get(&self, name: &str) -> Option<&ObjectRecord> {
        self.index.get(name).map(|&i| &self.rows[i])
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["name".to_string()];
        header.extend(param_names());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.name().to_string()];
            rec.extend(row.values().iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A row that failed to parse, with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRow {
    pub line: usize,
    pub message: String,
}

/// Result of a lenient ingest.
#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub table: PyramidTable,
    pub rejected: Vec<RejectedRow>,
}

fn parse_value(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("invalid number {s:?}"))?;
    if !v.is_finite() {
        return Err(format!("invalid number {s:?}"));
    }
    if v < 0.0 {
        return Err(format!("negative value {v}"));
    }
    Ok(v)
}

fn column_map(header: &csv::StringRecord, wanted: &[String]) -> Result<Vec<usize>> {
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    let missing: Vec<&str> = wanted
        .iter()
        .filter(|w| !cols.contains(&w.as_str()))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(Error::Schema(format!(
            "missing columns: {}",
            missing.join(",")
        )));
    }
    Ok(wanted
        .iter()
        .map(|w| cols.iter().position(|c| c == w).unwrap())
        .collect())
}

/// Reads a wide CSV, collecting malformed rows instead of failing on them.
pub fn ingest_lenient<R: Read>(input: R) -> Result<IngestReport> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let mut wanted = vec!["name".to_string()];
    wanted.extend(param_names());
    let cols = column_map(reader.headers()?, &wanted)?;

    let mut report = IngestReport::default();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or_default();
        let reject = |message: String| RejectedRow { line, message };
        let row = (|| {
            let name = rec
                .get(cols[0])
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| "missing name".to_string())?;
            let values = cols[1..]
                .iter()
                .zip(&wanted[1..])
                .map(|(&c, col)| {
                    let cell = rec
                        .get(c)
                        .ok_or_else(|| format!("missing value for {col}"))?;
                    parse_value(cell).map_err(|e| format!("{col}: {e}"))
                })
                .collect::<std::result::Result<Vec<f64>, String>>()?;
            if values.iter().all(|&v| v == 0.0) {
                return Err("all-zero row".to_string());
            }
            Ok::<_, String>((name.to_string(), values))
        })();
        match row {
            Ok((name, values)) => {
                if let Err(e) = report.table.push_raw(&name, &values) {
                    report.rejected.push(reject(format!("{name}: {e}")));
                }
            }
            Err(message) => report.rejected.push(reject(message)),
        }
    }
    Ok(report)
}

/// Reads a wide CSV; the first malformed row is an error naming its line.
pub fn ingest<R: Read>(input: R) -> Result<PyramidTable> {
    let report = ingest_lenient(input)?;
    match report.rejected.into_iter().next() {
        Some(r) => Err(Error::Parse {
            line: r.line,
            message: r.message,
        }),
        None => Ok(report.table),
    }
}

/// Reads the long layout `name,sex,cohort,value`. Every name needs all 34
/// cells; names keep the order of their first appearance.
pub fn ingest_long<R: Read>(input: R) -> Result<PyramidTable> {
    let mut reader = csv::Reader::from_reader(input);
    let wanted: Vec<String> = ["name", "sex", "cohort", "value"]
        .map(String::from)
        .to_vec();
    let cols = column_map(reader.headers()?, &wanted)?;
    let mut order: Vec<String> = Vec::new();
    let mut cells: HashMap<String, [Option<f64>; PARAMS]> = HashMap::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or_default();
        let err = |message: String| Error::Parse { line, message };
        let field = |i: usize| rec.get(cols[i]).map(str::trim).unwrap_or("");
        let name = field(0);
        if name.is_empty() {
            return Err(err("missing name".into()));
        }
        let sex = Sex::parse(field(1)).ok_or_else(|| err(format!("invalid sex {:?}", field(1))))?;
        let cohort_field = field(2);
        let cohort = COHORT_STARTS
            .iter()
            .position(|c| {
                *c == cohort_field
                    || c.trim_start_matches('0') == cohort_field.trim_start_matches('0')
            })
            .ok_or_else(|| err(format!("invalid cohort {cohort_field:?}")))?;
        let value = parse_value(field(3)).map_err(err)?;
        let slot = match sex {
            Sex::Male => cohort,
            Sex::Female => COHORTS + cohort,
        };
        let entry = cells.entry(name.to_string()).or_insert_with(|| {
            order.push(name.to_string());
            [None; PARAMS]
        });
        if entry[slot].replace(value).is_some() {
            return Err(err(format!(
                "duplicate cell for {name} {}{}",
                sex.prefix(),
                COHORT_STARTS[cohort]
            )));
        }
    }
    let mut table = PyramidTable::new();
    let names = param_names();
    for name in order {
        let row = &cells[&name];
        let values = row
            .iter()
            .zip(&names)
            .map(|(v, col)| v.ok_or_else(|| Error::Schema(format!("{name}: missing cell {col}"))))
            .collect::<Result<Vec<f64>>>()?;
        table.push_raw(&name, &values)?;
    }
    Ok(table)
}
