//! Iterative averaging of a similarity matrix until it polarizes into two
//! groups, and extraction of that division.
//!
//! One sweep replaces every off-diagonal entry by the ratio-of-sums
//! similarity of the two matrix rows,
//!
//! ```text
//! s'(i, j) = sum_k min(s(i,k), s(j,k)) / sum_k max(s(i,k), s(j,k))
//! ```
//!
//! which is the R-metric aggregated over whole rows. Rows of objects that
//! belong together become identical (entry 1) while entries between the two
//! emerging groups settle at a lower level. For three objects the sweep
//! keeps the strictly most similar pair strictly most similar, so repeated
//! sweeps always pull exactly that pair together.
//!
//! Entries are handled as complements `d = 1 - s`; in that form the sweep is
//! `d'(i, j) = sum_k |d(i,k) - d(j,k)| / (n - sum_k min(d(i,k), d(j,k)))`.

use crate::error::{Error, Result};
use crate::par;
use crate::similarity::SimilarityMatrix;

/// Row count from which a sweep is spread over the thread pool.
const PARALLEL_ROWS: usize = 64;

/// How the converged matrix is cut into groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitRule {
    /// Cut the sorted off-diagonal entries at their largest gap; the groups
    /// are the connected components of the pairs above the cut.
    #[default]
    LargestGap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtsmConfig {
    pub max_iterations: usize,
    /// Sweeps stop once no entry moves by more than this fraction of the
    /// largest off-diagonal dissimilarity.
    pub convergence_tol: f64,
    pub split: SplitRule,
}

impl Default for EtsmConfig {
    fn default() -> Self {
        EtsmConfig {
            max_iterations: 200,
            convergence_tol: 1e-9,
            split: SplitRule::LargestGap,
        }
    }
}

impl EtsmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::InvalidConfig("max_iterations must be >= 1".into()));
        }
        if !(self.convergence_tol.is_finite() && self.convergence_tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "convergence_tol must be > 0, got {}",
                self.convergence_tol
            )));
        }
        Ok(())
    }
}

/// Division of a matrix's objects into two non-empty disjoint groups.
#[derive(Debug, Clone, PartialEq)]
pub struct Bipartition {
    /// Always holds the first label of the matrix.
    pub group_a: Vec<String>,
    pub group_b: Vec<String>,
    pub iterations_used: usize,
    pub converged: bool,
}

impl Bipartition {
    fn from_assignment(
        labels: &[String],
        in_a: &[bool],
        iterations_used: usize,
        converged: bool,
    ) -> Self {
        let (mut group_a, mut group_b) = (Vec::new(), Vec::new());
        for (label, &a) in labels.iter().zip(in_a) {
            if a {
                group_a.push(label.clone());
            } else {
                group_b.push(label.clone());
            }
        }
        Bipartition {
            group_a,
            group_b,
            iterations_used,
            converged,
        }
    }

    /// True when both labels sit in the same group.
    pub fn together(&self, a: &str, b: &str) -> bool {
        let in_a = |x: &str| self.group_a.iter().any(|l| l == x);
        let in_b = |x: &str| self.group_b.iter().any(|l| l == x);
        (in_a(a) && in_a(b)) || (in_b(a) && in_b(b))
    }

    /// Same division, regardless of which side is called `a`.
    pub fn same_split(&self, other: &Bipartition) -> bool {
        let sorted = |v: &[String]| {
            let mut v = v.to_vec();
            v.sort();
            v
        };
        let (a, b) = (sorted(&self.group_a), sorted(&self.group_b));
        let (c, d) = (sorted(&other.group_a), sorted(&other.group_b));
        (a == c && b == d) || (a == d && b == c)
    }
}

fn sweep_row(d: &[f64], n: usize, i: usize) -> Vec<f64> {
    let row_i = &d[i * n..(i + 1) * n];
    (0..n)
        .map(|j| {
            if j == i {
                return 0.0;
            }
            let row_j = &d[j * n..(j + 1) * n];
            let mut diff = 0.0;
            let mut common = 0.0;
            for (a, b) in row_i.iter().zip(row_j) {
                diff += (a - b).abs();
                common += a.min(*b);
            }
            (diff / (n as f64 - common)).clamp(0.0, 1.0)
        })
        .collect()
}

fn sweep(d: &[f64], n: usize) -> Vec<f64> {
    let rows: Vec<Vec<f64>> = if n >= PARALLEL_ROWS {
        par::map_range(n, |i| sweep_row(d, n, i))
    } else {
        (0..n).map(|i| sweep_row(d, n, i)).collect()
    };
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            // evaluated once per pair so the result is exactly symmetric
            let v = rows[i][j];
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
    }
    out
}

/// One averaging sweep over the whole matrix.
pub fn iterate_once(m: &SimilarityMatrix) -> Result<SimilarityMatrix> {
    let n = m.n();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "iterative averaging needs at least 2 objects, got {n}"
        )));
    }
    let d = sweep(m.dissim_slice(), n);
    Ok(SimilarityMatrix::from_dissim_unchecked(
        m.labels().to_vec(),
        d,
    ))
}

fn off_diagonal(d: &[f64], n: usize) -> impl Iterator<Item = f64> + '_ {
    (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| d[i * n + j]))
}

fn spread(d: &[f64], n: usize) -> (f64, f64) {
    off_diagonal(d, n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

fn is_degenerate(d: &[f64], n: usize, tol: f64) -> bool {
    let (lo, hi) = spread(d, n);
    hi == 0.0 || hi - lo <= tol * hi
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Connected components of the pairs at or below the largest-gap cut.
fn split_components(d: &[f64], n: usize) -> Vec<usize> {
    let mut values: Vec<f64> = off_diagonal(d, n).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut cut = values[0];
    let mut best = f64::NEG_INFINITY;
    for w in values.windows(2) {
        let gap = w[1] - w[0];
        if gap > best {
            best = gap;
            cut = w[0];
        }
    }
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if d[i * n + j] <= cut {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    (0..n).map(|i| find(&mut parent, i)).collect()
}

/// Sweeps `m` until it stops moving (or `cfg.max_iterations`) and splits the
/// result into two groups.
pub fn bipartition(m: &SimilarityMatrix, cfg: &EtsmConfig) -> Result<Bipartition> {
    cfg.validate()?;
    let n = m.n();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "a bipartition needs at least 2 objects, got {n}"
        )));
    }
    if n == 2 {
        return Ok(Bipartition::from_assignment(
            m.labels(),
            &[true, false],
            0,
            true,
        ));
    }
    let mut d = m.dissim_slice().to_vec();
    if is_degenerate(&d, n, cfg.convergence_tol) {
        return Err(Error::DegenerateSymmetry);
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iterations {
        let next = sweep(&d, n);
        iterations += 1;
        let change = d
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let (_, scale) = spread(&next, n);
        d = next;
        if change <= cfg.convergence_tol * scale {
            converged = true;
            break;
        }
    }

    if is_degenerate(&d, n, cfg.convergence_tol) {
        return Err(Error::DegenerateSymmetry);
    }
    let roots = split_components(&d, n);
    let mut distinct = roots.clone();
    distinct.sort_unstable();
    distinct.dedup();
    match distinct.len() {
        1 => Err(Error::DegenerateSymmetry),
        2 => {
            let in_a: Vec<bool> = roots.iter().map(|&r| r == roots[0]).collect();
            Ok(Bipartition::from_assignment(
                m.labels(),
                &in_a,
                iterations,
                converged,
            ))
        }
        components => Err(Error::NonPolarized { components }),
    }
}

/// Reference split for three objects: the strictly most similar pair
/// against the third.
pub fn pair_max_oracle(m: &SimilarityMatrix) -> Result<Bipartition> {
    if m.n() != 3 {
        return Err(Error::InvalidMatrix(format!(
            "the pair-max oracle takes 3 objects, got {}",
            m.n()
        )));
    }
    let pairs = [(0, 1), (0, 2), (1, 2)];
    let d: Vec<f64> = pairs.iter().map(|&(i, j)| m.dissimilarity(i, j)).collect();
    let best = d.iter().copied().fold(f64::INFINITY, f64::min);
    let winners: Vec<usize> = (0..3).filter(|&k| d[k] == best).collect();
    if winners.len() != 1 {
        return Err(Error::DegenerateSymmetry);
    }
    let (i, j) = pairs[winners[0]];
    let mut in_a = [false; 3];
    in_a[i] = true;
    in_a[j] = true;
    if !in_a[0] {
        in_a.iter_mut().for_each(|x| *x = !*x);
    }
    Ok(Bipartition::from_assignment(m.labels(), &in_a, 0, true))
}
