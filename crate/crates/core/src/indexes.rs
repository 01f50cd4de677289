//! Holistic indices built from K values.

use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::infothyristor::{compare, ComparisonResult, EgoConfig};
use crate::par;
use crate::pyramids::{exponential_model, sex_param_names, uniform_model, Sex};
use crate::similarity::ObjectRecord;

/// `100 * k_ut / (k_ut + k_mt)`: percent position between the exponential
/// pole (0) and the uniform pole (100).
pub fn mu_index(k_ut: f64, k_mt: f64) -> Result<f64> {
    if !(k_ut >= 0.0 && k_mt >= 0.0 && k_ut.is_finite() && k_mt.is_finite()) {
        return Err(Error::Domain(if k_ut >= 0.0 { k_mt } else { k_ut }));
    }
    let total = k_ut + k_mt;
    if total == 0.0 {
        return Err(Error::Undefined("MU index of two zero K values".into()));
    }
    Ok(100.0 * (k_ut / total))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PUniformVariant {
    /// `100 * (1 - d_un) / (d_un + d_e)`, exactly as the formula is printed.
    AsWritten,
    /// `100 * d_e / (d_un + d_e)`.
    #[default]
    Normalized,
}

impl FromStr for PUniformVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(PUniformVariant::Normalized),
            "as-written" | "as_written" => Ok(PUniformVariant::AsWritten),
            other => Err(Error::InvalidConfig(format!(
                "unknown variant {other:?} (expected normalized or as-written)"
            ))),
        }
    }
}

/// Share of the uniform component from the K values against the uniform
/// and exponential models.
pub fn p_uniform(d_un: f64, d_e: f64, variant: PUniformVariant) -> Result<f64> {
    let total = d_un + d_e;
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Undefined(format!(
            "uniform share needs d_un + d_e > 0, got {d_un} + {d_e}"
        )));
    }
    Ok(match variant {
        PUniformVariant::AsWritten => 100.0 * (1.0 - d_un) / total,
        PUniformVariant::Normalized => 100.0 * (d_e / total),
    })
}

/// Mean and population standard deviation of `k1 + k2` over all pairs.
pub fn sum_constancy(values: &[(f64, f64)]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::InsufficientData("no K pairs".into()));
    }
    let n = values.len() as f64;
    let sums: Vec<f64> = values.iter().map(|(a, b)| a + b).collect();
    let mean = sums.iter().sum::<f64>() / n;
    let var = sums.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Male and female parts of an existing comparison's `k_cont`.
pub fn sex_split(result: &ComparisonResult) -> Result<(f64, f64)> {
    Ok((
        result.partial_k(&sex_param_names(Sex::Male))?,
        result.partial_k(&sex_param_names(Sex::Female))?,
    ))
}

/// `(k_male, k_female)` of a pyramid comparison; the two add up to `k_cont`.
pub fn sex_split_k(
    query: &ObjectRecord,
    target: &ObjectRecord,
    cfg: &EgoConfig,
) -> Result<(f64, f64)> {
    sex_split(&compare(query, target, cfg)?)
}

pub const INDEX_HEADER: [&str; 9] = [
    "name",
    "k_mt",
    "k_ut",
    "k_m_male",
    "k_m_female",
    "mu",
    "d_un",
    "d_e30",
    "p_un",
];

/// One country's indices. `mu` and `p_un` are `None` when undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexRow {
    pub name: String,
    /// K against the uniform-like pole (Monaco role).
    pub k_mt: f64,
    /// K against the exponential-like pole (Uganda role).
    pub k_ut: f64,
    pub k_m_male: f64,
    pub k_m_female: f64,
    pub mu: Option<f64>,
    /// K against the uniform model.
    pub d_un: f64,
    /// K against the exponential model.
    pub d_e: f64,
    pub p_un: Option<f64>,
}

impl IndexRow {
    /// Value of a column of [`INDEX_HEADER`] (other than `name`).
    pub fn field(&self, column: &str) -> Option<f64> {
        match column {
            "k_mt" => Some(self.k_mt),
            "k_ut" => Some(self.k_ut),
            "k_m_male" => Some(self.k_m_male),
            "k_m_female" => Some(self.k_m_female),
            "mu" => self.mu,
            "d_un" => Some(self.d_un),
            "d_e30" | "d_e" => Some(self.d_e),
            "p_un" => self.p_un,
            _ => None,
        }
    }

    pub fn is_index_field(column: &str) -> bool {
        INDEX_HEADER[1..].contains(&column) || column == "d_e"
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexConfig {
    pub ego: EgoConfig,
    /// Rate of the exponential model (0.30 for E30).
    pub exp_rate: f64,
    pub variant: PUniformVariant,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig {
            ego: EgoConfig::default(),
            exp_rate: 0.30,
            variant: PUniformVariant::Normalized,
        }
    }
}

/// Fixed inputs shared by every row of an index table.
pub struct IndexPoles<'a> {
    pub uniform_pole: &'a ObjectRecord,
    pub exponential_pole: &'a ObjectRecord,
    uniform_model: ObjectRecord,
    exponential_model: ObjectRecord,
    cfg: IndexConfig,
}

impl<'a> IndexPoles<'a> {
    pub fn new(
        uniform_pole: &'a ObjectRecord,
        exponential_pole: &'a ObjectRecord,
        cfg: IndexConfig,
    ) -> Result<Self> {
        cfg.ego.validate()?;
        Ok(IndexPoles {
            uniform_pole,
            exponential_pole,
            uniform_model: uniform_model(),
            exponential_model: exponential_model(cfg.exp_rate)?,
            cfg,
        })
    }

    pub fn row(&self, target: &ObjectRecord) -> Result<IndexRow> {
        let ego = &self.cfg.ego;
        let m = compare(self.uniform_pole, target, ego)?;
        let (k_m_male, k_m_female) = sex_split(&m)?;
        let u = compare(self.exponential_pole, target, ego)?;
        let d_un = compare(&self.uniform_model, target, ego)?.k_cont;
        let d_e = compare(&self.exponential_model, target, ego)?.k_cont;
        Ok(IndexRow {
            name: target.name().to_string(),
            k_mt: m.k_cont,
            k_ut: u.k_cont,
            k_m_male,
            k_m_female,
            mu: mu_index(u.k_cont, m.k_cont).ok(),
            d_un,
            d_e,
            p_un: p_uniform(d_un, d_e, self.cfg.variant).ok(),
        })
    }

    /// Rows for every target, in order (parallel with the `parallel` feature).
    pub fn rows(&self, targets: &[ObjectRecord]) -> Vec<Result<IndexRow>> {
        par::map(targets, |t| self.row(t))
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| v.to_string())
}

pub fn write_index_csv<W: Write>(rows: &[IndexRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(INDEX_HEADER)?;
    for r in rows {
        w.write_record([
            r.name.clone(),
            r.k_mt.to_string(),
            r.k_ut.to_string(),
            r.k_m_male.to_string(),
            r.k_m_female.to_string(),
            opt(r.mu),
            r.d_un.to_string(),
            r.d_e.to_string(),
            opt(r.p_un),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_index_csv<R: Read>(input: R) -> Result<Vec<IndexRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header != INDEX_HEADER {
        return Err(Error::Schema(format!(
            "index header must be {}",
            INDEX_HEADER.join(",")
        )));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or_default();
        let num = |i: usize| -> Result<Option<f64>> {
            let s = rec.get(i).unwrap_or("").trim();
            if s == "undefined" {
                return Ok(None);
            }
            s.parse::<f64>().map(Some).map_err(|_| Error::Parse {
                line,
                message: format!("{}: invalid number {s:?}", INDEX_HEADER[i]),
            })
        };
        let req = |i: usize| -> Result<f64> {
            num(i)?.ok_or_else(|| Error::Parse {
                line,
                message: format!("{} is required", INDEX_HEADER[i]),
            })
        };
        rows.push(IndexRow {
            name: rec.get(0).unwrap_or("").trim().to_string(),
            k_mt: req(1)?,
            k_ut: req(2)?,
            k_m_male: req(3)?,
            k_m_female: req(4)?,
            mu: num(5)?,
            d_un: req(6)?,
            d_e: req(7)?,
            p_un: num(8)?,
        });
    }
    Ok(rows)
}
