//! Pattern dissimilarity through a "computer ego".
//!
//! A query object is cloned twice, the clones are given a hypothesis
//! parameter (HP) of `1` and `1 + delta`, and the HP weight is grown until
//! the first clone regroups with a target object under iterative averaging
//! of the three-object similarity matrix. The critical weight times `delta`
//! is a dissimilarity coefficient `K` that is stable in `delta` and additive
//! over parameters.
//!
//! Layout:
//!
//! * [`similarity`]: R-metric, monomer matrices and their hybridization.
//! * [`etsm`]: iterative averaging of a similarity matrix and the two-group split.
//! * [`infothyristor`]: the clone construction, the HP weight search, and the
//!   increment store.
//! * [`pyramids`]: population pyramid ingestion and model pyramids.
//! * [`indexes`]: MU index, uniform share, sum constancy.
//! * [`report`]: joins with indicator tables, correlation, CSV/SVG emission.
//!
//! With the default `parallel` feature, batch operations run on the rayon
//! global pool (or whichever pool the caller installs). Without it every
//! operation runs sequentially; results are identical either way.

pub mod error;
pub mod etsm;
pub mod indexes;
pub mod infothyristor;
pub mod par;
pub mod pyramids;
pub mod report;
pub mod similarity;

pub use error::{Error, Result};
pub use etsm::{bipartition, iterate_once, pair_max_oracle, Bipartition, EtsmConfig};
pub use infothyristor::store::{IncrementRecord, IncrementStore};
pub use infothyristor::{
    analytic_oracle_k, batch_compare, batch_compare_sequential, compare, grouped_with_target,
    switch_weight, ComparisonResult, EgoConfig,
};
pub use similarity::{
    hybrid_from_objects, hybridize, monomer_matrix, r_dissimilarity, r_similarity, ObjectRecord,
    SimilarityMatrix, WeightedParameterSet,
};
