//! Scaled cosine similarity between sparse binary rows and top-k neighbor
//! selection.
//!
//! Similarities are accumulated through an inverted index (the transposed
//! matrix), so a row only ever touches the rows it shares a column with.

use std::borrow::Cow;
use std::cmp::Ordering;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SparseBinaryMatrix;
use crate::error::{Error, Result};

/// Which matrix similarities are computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// Observed outcomes `Y` (method suffix `-O`).
    Outcomes,
    /// Treatment assignments `Z` (method suffix `-T`).
    Treatments,
}

impl Source {
    pub fn suffix(self) -> &'static str {
        match self {
            Source::Outcomes => "O",
            Source::Treatments => "T",
        }
    }
}

/// Whether neighborhoods are formed over users (rows) or items (columns).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    User,
    Item,
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::User => "user",
            Orientation::Item => "item",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    /// Neighbors per row, not counting the row itself.
    pub k: usize,
    /// Exponent applied to the cosine.
    pub alpha: f64,
    pub source: Source,
    pub orientation: Orientation,
}

impl SimilarityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// The matrix whose rows are compared: `Y` or `Z`, transposed for item
    /// orientation.
    pub fn source_matrix<'a>(
        &self,
        y: &'a SparseBinaryMatrix,
        z: &'a SparseBinaryMatrix,
    ) -> Cow<'a, SparseBinaryMatrix> {
        let m = match self.source {
            Source::Outcomes => y,
            Source::Treatments => z,
        };
        match self.orientation {
            Orientation::User => Cow::Borrowed(m),
            Orientation::Item => Cow::Owned(m.transpose()),
        }
    }
}

/// A borrowed sparse binary vector: its dimension and sorted support.
#[derive(Debug, Clone, Copy)]
pub struct BinaryVector<'a> {
    pub dim: usize,
    pub support: &'a [u32],
}

impl SparseBinaryMatrix {
    pub fn row_vector(&self, r: usize) -> BinaryVector<'_> {
        BinaryVector {
            dim: self.n_cols(),
            support: self.row(r),
        }
    }
}

fn intersection_size(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

#[inline]
fn cosine_from_counts(common: usize, nnz_a: usize, nnz_b: usize) -> f64 {
    if common == 0 {
        return 0.0;
    }
    common as f64 / ((nnz_a as f64) * (nnz_b as f64)).sqrt()
}

/// Cosine similarity of two binary vectors; 0 when either is all-zero.
pub fn cosine(a: BinaryVector<'_>, b: BinaryVector<'_>) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch(format!(
            "cosine of vectors with lengths {} and {}",
            a.dim, b.dim
        )));
    }
    let common = intersection_size(a.support, b.support);
    Ok(cosine_from_counts(common, a.support.len(), b.support.len()))
}

/// `sim^alpha`, the neighbor weight.
pub fn scaled_weight(sim: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    if !(0.0..=1.0).contains(&sim) {
        return Err(Error::InvalidParameter(format!(
            "similarity {sim} outside [0, 1]"
        )));
    }
    Ok(sim.powf(alpha))
}

/// Neighbors of one row, heaviest first.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub owner: usize,
    pub neighbors: Vec<(usize, f64)>,
    pub includes_self: bool,
}

impl NeighborSet {
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.neighbors.iter().map(|&(v, _)| v)
    }

    pub fn weight_sum(&self) -> f64 {
        self.neighbors.iter().map(|&(_, w)| w).sum()
    }
}

/// Descending similarity, ascending index on ties.
#[inline]
fn by_similarity(a: &(u32, f64), b: &(u32, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Unscaled top-`k_max` candidates per row.
///
/// Because `x -> x^alpha` is strictly increasing on `[0, 1]`, the ranking of
/// candidates does not depend on alpha, so one index serves every alpha and
/// every `k <= k_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityIndex {
    k_max: usize,
    rows: Vec<Vec<(u32, f64)>>,
}

impl SimilarityIndex {
    /// Computes, for every row of `matrix`, the `k_max` other rows with the
    /// largest positive cosine.
    pub fn build(matrix: &SparseBinaryMatrix, k_max: usize) -> Result<Self> {
        check_k(k_max, matrix.n_rows())?;
        let n_rows = matrix.n_rows();
        let inverted = matrix.transpose();
        let rows = (0..n_rows)
            .into_par_iter()
            .map_init(
                || (vec![0u32; n_rows], Vec::<u32>::new()),
                |(counts, touched), r| {
                    for &c in matrix.row(r) {
                        for &s in inverted.row(c as usize) {
                            let slot = &mut counts[s as usize];
                            if *slot == 0 {
                                touched.push(s);
                            }
                            *slot += 1;
                        }
                    }
                    let nnz_r = matrix.row_nnz(r);
                    let mut candidates: Vec<(u32, f64)> = touched
                        .iter()
                        .filter(|&&s| s as usize != r)
                        .map(|&s| {
                            let common = counts[s as usize] as usize;
                            (s, cosine_from_counts(common, nnz_r, matrix.row_nnz(s as usize)))
                        })
                        .collect();
                    for &s in touched.iter() {
                        counts[s as usize] = 0;
                    }
                    touched.clear();
                    if candidates.len() > k_max {
                        if k_max == 0 {
                            candidates.clear();
                        } else {
                            candidates.select_nth_unstable_by(k_max - 1, by_similarity);
                            candidates.truncate(k_max);
                        }
                    }
                    candidates.sort_unstable_by(by_similarity);
                    candidates
                },
            )
            .collect();
        Ok(Self { k_max, rows })
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Cosine candidates of row `r`, best first.
    pub fn candidates(&self, r: usize) -> &[(u32, f64)] {
        &self.rows[r]
    }

    /// Neighbor sets for `k <= k_max` with weights `cos^alpha`.
    pub fn neighbor_sets(&self, k: usize, alpha: f64, include_self: bool) -> Result<Vec<NeighborSet>> {
        if k > self.k_max {
            return Err(Error::InvalidParameter(format!(
                "k = {k} exceeds the index's k_max = {}",
                self.k_max
            )));
        }
        scaled_weight(1.0, alpha)?;
        Ok(self
            .rows
            .iter()
            .enumerate()
            .map(|(owner, cands)| {
                let mut neighbors = Vec::with_capacity(k.min(cands.len()) + include_self as usize);
                if include_self {
                    neighbors.push((owner, 1.0));
                }
                neighbors.extend(
                    cands
                        .iter()
                        .take(k)
                        .map(|&(v, cos)| (v as usize, cos.powf(alpha)))
                        .filter(|&(_, w)| w > 0.0),
                );
                NeighborSet {
                    owner,
                    neighbors,
                    includes_self: include_self,
                }
            })
            .collect())
    }

    /// Writes the index as `owner neighbor cosine` triplets under a
    /// `<n_rows> <k_max>` header.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(w, "{} {}", self.rows.len(), self.k_max).map_err(io)?;
        for (owner, cands) in self.rows.iter().enumerate() {
            for &(v, cos) in cands {
                writeln!(w, "{owner} {v} {cos}").map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::io(path, e))?
            .ok_or_else(|| Error::parse(path, 1, "empty neighbor cache"))?;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|s| s.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, 1, "header must be `<n_rows> <k_max>`"))?;
        let [n_rows, k_max] = head[..] else {
            return Err(Error::parse(path, 1, "header must be `<n_rows> <k_max>`"));
        };
        let mut rows = vec![Vec::new(); n_rows];
        for (idx, line) in lines.enumerate() {
            let line_no = idx + 2;
            let line = line.map_err(|e| Error::io(path, e))?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.is_empty() {
                continue;
            }
            let bad = || Error::parse(path, line_no, "expected `owner neighbor cosine`");
            if f.len() != 3 {
                return Err(bad());
            }
            let owner: usize = f[0].parse().map_err(|_| bad())?;
            let v: u32 = f[1].parse().map_err(|_| bad())?;
            let cos: f64 = f[2].parse().map_err(|_| bad())?;
            if owner >= n_rows || v as usize >= n_rows {
                return Err(Error::parse(path, line_no, "row index out of range"));
            }
            rows[owner].push((v, cos));
        }
        for cands in &mut rows {
            cands.sort_unstable_by(by_similarity);
        }
        Ok(Self { k_max, rows })
    }
}

fn check_k(k: usize, n_rows: usize) -> Result<()> {
    if k > n_rows.saturating_sub(1) {
        return Err(Error::InvalidParameter(format!(
            "k = {k} but only {} other rows exist",
            n_rows.saturating_sub(1)
        )));
    }
    Ok(())
}

/// Top-k neighbor sets for every row of `matrix`.
///
/// `matrix` is the already-oriented source (see
/// [`SimilarityConfig::source_matrix`]); only `k` and `alpha` are read from
/// `cfg`. Rows without positive similarity to anything get an empty set (or
/// just themselves with `include_self`).
pub fn top_k_neighbors(
    matrix: &SparseBinaryMatrix,
    cfg: &SimilarityConfig,
    include_self: bool,
) -> Result<Vec<NeighborSet>> {
    cfg.validate()?;
    SimilarityIndex::build(matrix, cfg.k)?.neighbor_sets(cfg.k, cfg.alpha, include_self)
}
