//! The computer ego and the switch search.
//!
//! A query `Q` is represented by two clones that differ only in an extra
//! hypothesis parameter (HP): `1` on the alpha clone, `1 + delta` on the beta
//! clone, `1` on the target `T`. All base parameters carry weight 1 in the
//! hybrid similarity matrix of the three objects; the HP carries weight `w`.
//! At small `w` the clones group together. Past a critical weight `w*` the
//! alpha clone joins `T`. The reported dissimilarity is `D = ceil(w*)`
//! (at least 1), with `K = D * delta` and the continuous `K_cont = w* * delta`.
//!
//! The switch predicate is monotone in `w`, so `w*` is found by exponential
//! bracketing and bisection instead of stepping through copies one by one.

pub mod store;

use std::fmt;

use crate::error::{Error, Result};
use crate::etsm::{self, EtsmConfig};
use crate::par;
use crate::similarity::{
    hybrid_from_objects, r_dissimilarity, r_similarity, ObjectRecord, SimilarityMatrix,
    WeightedParameterSet,
};

/// Name of the hypothesis parameter appended to the three ego objects.
pub const HP_PARAM: &str = "HP";

const ALPHA: &str = "alpha";
const BETA: &str = "beta";
const TARGET: &str = "target";

/// Below this weight a predicate that is still true is read as `w* = 0`.
const MIN_WEIGHT: f64 = 1e-200;
const BRACKET_FACTOR: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoConfig {
    /// HP difference between the two clones.
    pub delta: f64,
    /// Upper bound on the HP weight before giving up.
    pub max_weight: f64,
    /// Relative width at which bisection stops.
    pub weight_tol: f64,
    pub etsm: EtsmConfig,
}

impl Default for EgoConfig {
    fn default() -> Self {
        EgoConfig {
            delta: 1e-4,
            max_weight: 1e12,
            weight_tol: 1e-12,
            etsm: EtsmConfig::default(),
        }
    }
}

impl EgoConfig {
    pub fn with_delta(delta: f64) -> Self {
        EgoConfig {
            delta,
            ..Default::default()
        }
    }

    pub fn hp_alpha(&self) -> f64 {
        1.0
    }

    pub fn hp_beta(&self) -> f64 {
        1.0 + self.delta
    }

    pub fn hp_target(&self) -> f64 {
        1.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "delta must be > 0, got {}",
                self.delta
            )));
        }
        if !(self.max_weight.is_finite() && self.max_weight > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "max_weight must be > 0, got {}",
                self.max_weight
            )));
        }
        if !(self.weight_tol > 0.0 && self.weight_tol < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "weight_tol must be in (0, 1), got {}",
                self.weight_tol
            )));
        }
        self.etsm.validate()
    }
}

/// Output of one query/target comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonResult {
    pub query: String,
    pub target: String,
    pub delta: f64,
    /// Critical HP weight.
    pub w_star: f64,
    /// `max(1, ceil(w_star))`.
    pub d: u64,
    /// `d * delta`.
    pub k: f64,
    /// `w_star * delta`.
    pub k_cont: f64,
    /// Per-parameter shares of `k_cont`, in parameter order.
    pub increments: Vec<(String, f64)>,
}

impl ComparisonResult {
    pub fn increment(&self, param: &str) -> Option<f64> {
        self.increments
            .iter()
            .find(|(p, _)| p == param)
            .map(|(_, v)| *v)
    }

    /// Sum of the increments over `params`.
    pub fn partial_k<S: AsRef<str>>(&self, params: &[S]) -> Result<f64> {
        params
            .iter()
            .map(|p| {
                self.increment(p.as_ref()).ok_or_else(|| {
                    Error::Schema(format!("no increment for parameter {:?}", p.as_ref()))
                })
            })
            .sum()
    }
}

impl fmt::Display for ComparisonResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "query:   {}", self.query)?;
        writeln!(f, "target:  {}", self.target)?;
        writeln!(f, "delta:   {}", self.delta)?;
        writeln!(f, "w*:      {}", self.w_star)?;
        writeln!(f, "D:       {}", self.d)?;
        writeln!(f, "K:       {}", self.k)?;
        write!(f, "K_cont:  {}", self.k_cont)
    }
}

fn check_schema(query: &ObjectRecord, target: &ObjectRecord) -> Result<()> {
    if !query.same_schema(target) {
        return Err(Error::Schema(format!(
            "{:?} and {:?} do not share the same parameter list",
            query.name(),
            target.name()
        )));
    }
    if query.is_empty() {
        return Err(Error::Schema("objects have no parameters".into()));
    }
    if query.index_of(HP_PARAM).is_some() {
        return Err(Error::Schema(format!(
            "parameter name {HP_PARAM:?} is reserved for the hypothesis parameter"
        )));
    }
    Ok(())
}

/// The three ego objects: alpha clone, beta clone, target (with HP appended).
pub fn ego_objects(
    query: &ObjectRecord,
    target: &ObjectRecord,
    cfg: &EgoConfig,
) -> Result<[ObjectRecord; 3]> {
    check_schema(query, target)?;
    Ok([
        query.renamed(ALPHA).with_param(HP_PARAM, cfg.hp_alpha())?,
        query.renamed(BETA).with_param(HP_PARAM, cfg.hp_beta())?,
        target
            .renamed(TARGET)
            .with_param(HP_PARAM, cfg.hp_target())?,
    ])
}

/// Parameter weights of the ego matrix: base parameters at 1, HP at `weight`.
pub fn ego_weights(query: &ObjectRecord, weight: f64) -> Result<WeightedParameterSet> {
    WeightedParameterSet::new(
        query
            .param_names()
            .iter()
            .map(|p| (p.as_str(), 1.0))
            .chain(std::iter::once((HP_PARAM, weight))),
    )
}

/// Hybrid matrix of the three ego objects at a given HP weight.
pub fn ego_matrix(
    query: &ObjectRecord,
    target: &ObjectRecord,
    cfg: &EgoConfig,
    weight: f64,
) -> Result<SimilarityMatrix> {
    let objects = ego_objects(query, target, cfg)?;
    hybrid_from_objects(&objects, &ego_weights(query, weight)?)
}

/// The ego matrix with its base-parameter part summed once, so that only the
/// HP term changes between predicate evaluations. Produces the same floating
/// point values as [`ego_matrix`].
struct EgoFrame {
    // pair order: (alpha, beta), (alpha, target), (beta, target)
    base_sum: [f64; 3],
    base_lo: [f64; 3],
    base_hi: [f64; 3],
    base_weight: f64,
    hp: [f64; 3],
    etsm: EtsmConfig,
}

impl EgoFrame {
    fn new(query: &ObjectRecord, target: &ObjectRecord, cfg: &EgoConfig) -> Result<Self> {
        cfg.validate()?;
        check_schema(query, target)?;
        let mut base_sum = [0.0; 3];
        let mut base_lo = [f64::INFINITY; 3];
        let mut base_hi = [f64::NEG_INFINITY; 3];
        let mut base_weight = 0.0;
        for (&q, &t) in query.values().iter().zip(target.values()) {
            // alpha and beta share every base value
            let pair = [0.0, r_dissimilarity(q, t)?, r_dissimilarity(q, t)?];
            for k in 0..3 {
                base_sum[k] += pair[k];
                base_lo[k] = base_lo[k].min(pair[k]);
                base_hi[k] = base_hi[k].max(pair[k]);
            }
            base_weight += 1.0;
        }
        let (a, b, t) = (cfg.hp_alpha(), cfg.hp_beta(), cfg.hp_target());
        let hp = [
            r_dissimilarity(a, b)?,
            r_dissimilarity(a, t)?,
            r_dissimilarity(b, t)?,
        ];
        Ok(EgoFrame {
            base_sum,
            base_lo,
            base_hi,
            base_weight,
            hp,
            etsm: cfg.etsm,
        })
    }

    fn matrix(&self, weight: f64) -> SimilarityMatrix {
        let pair = |k: usize| {
            let mean = (self.base_sum[k] + weight * self.hp[k]) / (self.base_weight + weight);
            mean.clamp(
                self.base_lo[k].min(self.hp[k]),
                self.base_hi[k].max(self.hp[k]),
            )
        };
        let (ab, at, bt) = (pair(0), pair(1), pair(2));
        let labels = vec![ALPHA.to_string(), BETA.to_string(), TARGET.to_string()];
        SimilarityMatrix::from_dissim_unchecked(labels, vec![0.0, ab, at, ab, 0.0, bt, at, bt, 0.0])
    }

    fn grouped(&self, weight: f64) -> Result<bool> {
        match etsm::bipartition(&self.matrix(weight), &self.etsm) {
            Ok(split) => Ok(split.together(ALPHA, TARGET)),
            // the only tie the ego matrix admits is s(alpha, beta) = s(alpha, target);
            // the switch fires at equality
            Err(Error::DegenerateSymmetry) => Ok(true),
            Err(e) => Err(e),
        }
    }

    fn switch_weight(&self, max_weight: f64, weight_tol: f64) -> Result<f64> {
        let (mut lo, mut hi);
        if self.grouped(1.0)? {
            hi = 1.0;
            loop {
                lo = hi / BRACKET_FACTOR;
                if lo < MIN_WEIGHT {
                    return Ok(0.0);
                }
                if !self.grouped(lo)? {
                    break;
                }
                hi = lo;
            }
        } else {
            lo = 1.0;
            loop {
                hi = (lo * BRACKET_FACTOR).min(max_weight);
                if self.grouped(hi)? {
                    break;
                }
                if hi >= max_weight {
                    return Err(Error::NotSwitched { max_weight });
                }
                lo = hi;
            }
        }
        while hi - lo > weight_tol * hi {
            let mid = lo + 0.5 * (hi - lo);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.grouped(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}

/// True when, at HP weight `weight`, the alpha clone shares a group with the target.
pub fn grouped_with_target(
    query: &ObjectRecord,
    target: &ObjectRecord,
    cfg: &EgoConfig,
    weight: f64,
) -> Result<bool> {
    if !(weight.is_finite() && weight > 0.0) {
        return Err(Error::InvalidWeight(weight));
    }
    EgoFrame::new(query, target, cfg)?.grouped(weight)
}

/// Smallest HP weight at which the alpha clone joins the target.
pub fn switch_weight(query: &ObjectRecord, target: &ObjectRecord, cfg: &EgoConfig) -> Result<f64> {
    EgoFrame::new(query, target, cfg)?.switch_weight(cfg.max_weight, cfg.weight_tol)
}

/// Closed form of `K_cont` for the mean-hybridized three-object matrix:
/// `P * (1 - S) * (1 + delta)` where `S` is the mean per-parameter
/// R-similarity of query and target.
pub fn analytic_oracle_k(
    query: &ObjectRecord,
    target: &ObjectRecord,
    cfg: &EgoConfig,
) -> Result<f64> {
    cfg.validate()?;
    check_schema(query, target)?;
    let p = query.len() as f64;
    let mean_sim = query
        .values()
        .iter()
        .zip(target.values())
        .map(|(&q, &t)| r_similarity(q, t))
        .sum::<Result<f64>>()?
        / p;
    Ok(p * (1.0 - mean_sim) * (1.0 + cfg.delta))
}

pub fn compare(
    query: &ObjectRecord,
    target: &ObjectRecord,
    cfg: &EgoConfig,
) -> Result<ComparisonResult> {
    let frame = EgoFrame::new(query, target, cfg)?;
    let w_star = frame.switch_weight(cfg.max_weight, cfg.weight_tol)?;
    let d = w_star.ceil().max(1.0) as u64;
    let k_cont = w_star * cfg.delta;

    let per_param = query
        .values()
        .iter()
        .zip(target.values())
        .map(|(&q, &t)| r_dissimilarity(q, t))
        .collect::<Result<Vec<f64>>>()?;
    let total: f64 = per_param.iter().sum();
    let increments = query
        .param_names()
        .iter()
        .zip(&per_param)
        .map(|(p, &dp)| {
            let share = if total > 0.0 {
                k_cont * dp / total
            } else {
                0.0
            };
            (p.clone(), share)
        })
        .collect();

    Ok(ComparisonResult {
        query: query.name().to_string(),
        target: target.name().to_string(),
        delta: cfg.delta,
        w_star,
        d,
        k: d as f64 * cfg.delta,
        k_cont,
        increments,
    })
}

/// [`compare`] against every target, in target order. Runs in parallel with
/// the `parallel` feature; each entry equals the standalone comparison.
pub fn batch_compare(
    query: &ObjectRecord,
    targets: &[ObjectRecord],
    cfg: &EgoConfig,
) -> Vec<Result<ComparisonResult>> {
    par::map(targets, |t| compare(query, t, cfg))
}

pub fn batch_compare_sequential(
    query: &ObjectRecord,
    targets: &[ObjectRecord],
    cfg: &EgoConfig,
) -> Vec<Result<ComparisonResult>> {
    targets.iter().map(|t| compare(query, t, cfg)).collect()
}
