//! R-metric similarities, monomer matrices and weighted hybridization.
//!
//! The R-metric of two non-negative values is the ratio of the lower to the
//! higher one. A *monomer* matrix applies it to a single parameter across a
//! set of objects; a *hybrid* matrix is the weighted entrywise mean of
//! monomer matrices.
//!
//! Matrices keep their entries as complements `1 - s`. Similarities close to
//! 1 (differences of order 1e-7 and below are routine in the ego search) keep
//! their full relative precision that way.

use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};

fn check_value(v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(v))
    }
}

/// `min(a, b) / max(a, b)`, with `r(0, 0) = 1`.
pub fn r_similarity(a: f64, b: f64) -> Result<f64> {
    check_value(a)?;
    check_value(b)?;
    if a == b {
        return Ok(1.0);
    }
    Ok(a.min(b) / a.max(b))
}

/// `1 - r_similarity(a, b)`, computed as `(max - min) / max` so that nearly
/// equal values do not cancel.
pub fn r_dissimilarity(a: f64, b: f64) -> Result<f64> {
    check_value(a)?;
    check_value(b)?;
    if a == b {
        return Ok(0.0);
    }
    let hi = a.max(b);
    Ok((hi - a.min(b)) / hi)
}

/// A named object with an ordered list of named non-negative values.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectRecord {
    name: String,
    param_names: Vec<String>,
    values: Vec<f64>,
}

impl ObjectRecord {
    pub fn new<N, I, S>(name: N, params: I) -> Result<Self>
    where
        N: Into<String>,
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let (param_names, values) = params.into_iter().map(|(n, v)| (n.into(), v)).unzip();
        Self::from_parts(name, param_names, values)
    }

    pub fn from_parts<N: Into<String>>(
        name: N,
        param_names: Vec<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if param_names.len() != values.len() {
            return Err(Error::Schema(format!(
                "{} parameter names for {} values",
                param_names.len(),
                values.len()
            )));
        }
        let mut seen = HashSet::with_capacity(param_names.len());
        for p in &param_names {
            if !seen.insert(p.as_str()) {
                return Err(Error::Schema(format!("duplicate parameter name {p:?}")));
            }
        }
        for &v in &values {
            check_value(v)?;
        }
        Ok(ObjectRecord {
            name: name.into(),
            param_names,
            values,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.param_names
            .iter()
            .map(String::as_str)
            .zip(self.values.iter().copied())
    }

    pub fn index_of(&self, param: &str) -> Option<usize> {
        self.param_names.iter().position(|p| p == param)
    }

    pub fn value(&self, param: &str) -> Option<f64> {
        self.index_of(param).map(|i| self.values[i])
    }

    /// True when both objects carry the same parameter names in the same order.
    pub fn same_schema(&self, other: &ObjectRecord) -> bool {
        self.param_names == other.param_names
    }

    pub fn renamed<N: Into<String>>(&self, name: N) -> ObjectRecord {
        ObjectRecord {
            name: name.into(),
            ..self.clone()
        }
    }

    /// Returns a copy with one more parameter appended.
    pub fn with_param<S: Into<String>>(&self, param: S, value: f64) -> Result<ObjectRecord> {
        let mut names = self.param_names.clone();
        let mut values = self.values.clone();
        names.push(param.into());
        values.push(value);
        ObjectRecord::from_parts(self.name.clone(), names, values)
    }

    /// Returns the sub-record with the given parameters, in the given order.
    pub fn select<S: AsRef<str>>(&self, params: &[S]) -> Result<ObjectRecord> {
        let mut names = Vec::with_capacity(params.len());
        let mut values = Vec::with_capacity(params.len());
        for p in params {
            let p = p.as_ref();
            let i = self.index_of(p).ok_or_else(|| {
                Error::Schema(format!("object {:?} has no parameter {p:?}", self.name))
            })?;
            names.push(p.to_string());
            values.push(self.values[i]);
        }
        ObjectRecord::from_parts(self.name.clone(), names, values)
    }
}

/// Symmetric matrix of pairwise similarities in `[0, 1]` with a unit diagonal.
#[derive(Clone, PartialEq)]
pub struct SimilarityMatrix {
    labels: Vec<String>,
    // row-major complements 1 - s
    dissim: Vec<f64>,
}

impl SimilarityMatrix {
    /// Builds a matrix from rows of similarities.
    pub fn from_similarities(labels: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = labels.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidMatrix(format!(
                "expected a {n}x{n} matrix for {n} labels"
            )));
        }
        let dissim = rows.iter().flatten().map(|s| 1.0 - s).collect();
        Self::from_dissimilarities(labels, dissim).map_err(|_| {
            Error::InvalidMatrix("entries must be symmetric, in [0, 1], with unit diagonal".into())
        })
    }

    /// Builds a matrix from row-major complements `1 - s`.
    pub fn from_dissimilarities(labels: Vec<String>, dissim: Vec<f64>) -> Result<Self> {
        let n = labels.len();
        if dissim.len() != n * n {
            return Err(Error::InvalidMatrix(format!(
                "{} entries for {n} labels",
                dissim.len()
            )));
        }
        for i in 0..n {
            if dissim[i * n + i] != 0.0 {
                return Err(Error::InvalidMatrix(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..n {
                let d = dissim[i * n + j];
                if !(0.0..=1.0).contains(&d) {
                    return Err(Error::InvalidMatrix(format!(
                        "entry ({i}, {j}) = {} outside [0, 1]",
                        1.0 - d
                    )));
                }
                if d != dissim[j * n + i] {
                    return Err(Error::InvalidMatrix(format!(
                        "entry ({i}, {j}) is not symmetric"
                    )));
                }
            }
        }
        Ok(SimilarityMatrix { labels, dissim })
    }

    pub(crate) fn from_dissim_unchecked(labels: Vec<String>, dissim: Vec<f64>) -> Self {
        debug_assert_eq!(dissim.len(), labels.len() * labels.len());
        SimilarityMatrix { labels, dissim }
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn similarity(&self, i: usize, j: usize) -> f64 {
        1.0 - self.dissim[i * self.n() + j]
    }

    pub fn dissimilarity(&self, i: usize, j: usize) -> f64 {
        self.dissim[i * self.n() + j]
    }

    pub(crate) fn dissim_slice(&self) -> &[f64] {
        &self.dissim
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        (0..n)
            .map(|i| (0..n).map(|j| self.similarity(i, j)).collect())
            .collect()
    }
}

impl fmt::Debug for SimilarityMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimilarityMatrix")
            .field("labels", &self.labels)
            .field("similarities", &self.to_rows())
            .finish()
    }
}

/// Parameters with positive weights; the weight of a parameter is read as a
/// (possibly fractional) number of copies of it.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedParameterSet {
    entries: Vec<(String, f64)>,
}

impl WeightedParameterSet {
    pub fn new<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let entries: Vec<(String, f64)> = entries.into_iter().map(|(n, w)| (n.into(), w)).collect();
        let mut seen = HashSet::new();
        for (name, w) in &entries {
            if !(w.is_finite() && *w > 0.0) {
                return Err(Error::InvalidWeight(*w));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate parameter name {name:?}")));
            }
        }
        Ok(WeightedParameterSet { entries })
    }

    /// Every parameter at weight 1.
    pub fn uniform<S: AsRef<str>>(names: &[S]) -> Self {
        WeightedParameterSet {
            entries: names
                .iter()
                .map(|n| (n.as_ref().to_string(), 1.0))
                .collect(),
        }
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn total_weight(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w).sum()
    }
}

/// Similarity matrix induced by a single parameter.
pub fn monomer_matrix(objects: &[ObjectRecord], param: &str) -> Result<SimilarityMatrix> {
    if objects.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "a monomer matrix needs at least 2 objects, got {}",
            objects.len()
        )));
    }
    let values = objects
        .iter()
        .map(|o| {
            o.value(param).ok_or_else(|| {
                Error::Schema(format!("object {:?} has no parameter {param:?}", o.name()))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = values.len();
    let mut dissim = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = r_dissimilarity(values[i], values[j])?;
            dissim[i * n + j] = d;
            dissim[j * n + i] = d;
        }
    }
    let labels = objects.iter().map(|o| o.name().to_string()).collect();
    Ok(SimilarityMatrix::from_dissim_unchecked(labels, dissim))
}

/// Weighted entrywise arithmetic mean of matrices over the same labels.
pub fn hybridize(matrices: &[SimilarityMatrix], weights: &[f64]) -> Result<SimilarityMatrix> {
    let first = matrices
        .first()
        .ok_or_else(|| Error::InsufficientData("no matrices to hybridize".into()))?;
    if weights.len() != matrices.len() {
        return Err(Error::Schema(format!(
            "{} weights for {} matrices",
            weights.len(),
            matrices.len()
        )));
    }
    if let Some(&w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::InvalidWeight(w));
    }
    if matrices.iter().any(|m| m.labels != first.labels) {
        return Err(Error::LabelMismatch);
    }
    let total: f64 = weights.iter().sum();
    let len = first.dissim.len();
    let dissim = (0..len)
        .map(|e| {
            let mut acc = 0.0;
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for (m, w) in matrices.iter().zip(weights) {
                let d = m.dissim[e];
                acc += w * d;
                lo = lo.min(d);
                hi = hi.max(d);
            }
            // rounding must not push the mean outside the inputs' hull
            (acc / total).clamp(lo, hi)
        })
        .collect();
    Ok(SimilarityMatrix::from_dissim_unchecked(
        first.labels.clone(),
        dissim,
    ))
}

/// Hybrid matrix of the monomer matrices of `params`, weighted as given.
pub fn hybrid_from_objects(
    objects: &[ObjectRecord],
    params: &WeightedParameterSet,
) -> Result<SimilarityMatrix> {
    if let Some(first) = objects.first() {
        if let Some(o) = objects.iter().find(|o| !o.same_schema(first)) {
            return Err(Error::Schema(format!(
                "object {:?} does not share the parameter list of {:?}",
                o.name(),
                first.name()
            )));
        }
    }
    let matrices = params
        .entries()
        .iter()
        .map(|(p, _)| monomer_matrix(objects, p))
        .collect::<Result<Vec<_>>>()?;
    let weights: Vec<f64> = params.entries().iter().map(|(_, w)| *w).collect();
    hybridize(&matrices, &weights)
}
