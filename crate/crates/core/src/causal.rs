//! Causality-aware neighborhood rankers (CUBN / CIBN).
//!
//! For every (user, item) the treated and untreated potential outcomes are
//! estimated from the neighborhood's observed outcomes, split by the
//! neighbors' treatment assignment:
//!
//! ```text
//! y_t_hat = sum_v w * Z_v * Y_v / (beta_t + sum_v w * Z_v)
//! y_c_hat = sum_v w * (1 - Z_v) * Y_v / (beta_c + sum_v w * (1 - Z_v))
//! ```
//!
//! With own-observation mixing the neighborhood contains the user (or item)
//! itself with weight 1 and `tau_hat = y_t_hat - y_c_hat`. Without mixing
//! (`-woM`) there is no shrinkage and the observed outcome stands in for its
//! own potential outcome: `tau_hat = Z (Y - y_c_hat) + (1 - Z)(y_t_hat - Y)`.
//! A zero denominator yields an estimate of 0.

use serde::{Deserialize, Serialize};

use crate::data::{DenseMatrix, SparseBinaryMatrix};
use crate::error::{Error, Result};
use crate::ranking::{order_by_score, rank_all, Rankings, UserScorer};
use crate::similarity::{top_k_neighbors, NeighborSet, Orientation, SimilarityConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankerConfig {
    pub sim: SimilarityConfig,
    pub beta_t: f64,
    pub beta_c: f64,
    /// Include the own observation in the neighborhood (false = `-woM`).
    pub mix_own: bool,
}

impl RankerConfig {
    /// Method name such as `CUBN-O` or `CIBN-T-woM`.
    pub fn name(&self) -> String {
        method_name(self.sim.orientation, self.sim.source, self.mix_own)
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        for (name, b) in [("beta_t", self.beta_t), ("beta_c", self.beta_c)] {
            if !(b >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {b}")));
            }
        }
        Ok(())
    }
}

pub(crate) fn method_name(
    orientation: Orientation,
    source: crate::similarity::Source,
    mix_own: bool,
) -> String {
    let o = match orientation {
        Orientation::User => 'U',
        Orientation::Item => 'I',
    };
    let suffix = if mix_own { "" } else { "-woM" };
    format!("C{o}BN-{}{suffix}", source.suffix())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectEstimates {
    pub tau_hat: DenseMatrix,
    pub y_t_hat: DenseMatrix,
    pub y_c_hat: DenseMatrix,
}

#[inline]
fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Weighted neighborhood sums for one user over all items.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodSums {
    /// `sum w Z Y`
    pub num_t: Vec<f64>,
    /// `sum w Z`
    pub den_t: Vec<f64>,
    /// `sum w (1 - Z) Y`
    pub num_c: Vec<f64>,
    /// `sum w (1 - Z)`
    pub den_c: Vec<f64>,
}

impl NeighborhoodSums {
    fn zeros(n: usize) -> Self {
        Self {
            num_t: vec![0.0; n],
            den_t: vec![0.0; n],
            num_c: vec![0.0; n],
            den_c: vec![0.0; n],
        }
    }

    #[inline]
    pub fn treated(&self, i: usize, beta_t: f64) -> f64 {
        ratio(self.num_t[i], beta_t + self.den_t[i])
    }

    #[inline]
    pub fn control(&self, i: usize, beta_c: f64) -> f64 {
        ratio(self.num_c[i], beta_c + self.den_c[i])
    }
}

/// Scores users by `tau_hat` for one neighborhood and any number of
/// `(beta_t, beta_c)` pairs, which share the neighborhood sums.
pub struct CausalScorer<'a> {
    y: &'a SparseBinaryMatrix,
    z: &'a SparseBinaryMatrix,
    treated_pos: SparseBinaryMatrix,
    control_pos: SparseBinaryMatrix,
    neighbors: &'a [NeighborSet],
    orientation: Orientation,
    mix_own: bool,
    betas: Vec<(f64, f64)>,
}

impl<'a> CausalScorer<'a> {
    /// `neighbors` holds one set per user (user orientation) or per item
    /// (item orientation). Without mixing, `betas` is ignored and a single
    /// variant is produced.
    pub fn new(
        y: &'a SparseBinaryMatrix,
        z: &'a SparseBinaryMatrix,
        neighbors: &'a [NeighborSet],
        orientation: Orientation,
        mix_own: bool,
        betas: Vec<(f64, f64)>,
    ) -> Result<Self> {
        y.check_same_shape(z)?;
        let expected = match orientation {
            Orientation::User => y.n_rows(),
            Orientation::Item => y.n_cols(),
        };
        if neighbors.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{} neighbor sets for {expected} {orientation}s",
                neighbors.len()
            )));
        }
        if let Some(set) = neighbors.iter().find(|s| s.includes_self != mix_own) {
            return Err(Error::InvalidParameter(format!(
                "neighbor set of {} has includes_self = {} but mixing is {}",
                set.owner, set.includes_self, mix_own
            )));
        }
        if let Some(&(bt, bc)) = betas.iter().find(|(bt, bc)| !(*bt >= 0.0 && *bc >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "shrinkage must be >= 0, got ({bt}, {bc})"
            )));
        }
        let betas = if mix_own {
            if betas.is_empty() {
                return Err(Error::InvalidParameter("no shrinkage values given".into()));
            }
            betas
        } else {
            vec![(0.0, 0.0)]
        };
        Ok(Self {
            y,
            z,
            treated_pos: z.and(y)?,
            control_pos: y.and_not(z)?,
            neighbors,
            orientation,
            mix_own,
            betas,
        })
    }

    pub fn betas(&self) -> &[(f64, f64)] {
        &self.betas
    }

    /// Neighborhood sums for `user` over all items.
    pub fn sums(&self, user: usize) -> NeighborhoodSums {
        let n_items = self.y.n_cols();
        let mut s = NeighborhoodSums::zeros(n_items);
        match self.orientation {
            Orientation::User => {
                for &(v, w) in &self.neighbors[user].neighbors {
                    for &i in self.treated_pos.row(v) {
                        s.num_t[i as usize] += w;
                    }
                    for &i in self.control_pos.row(v) {
                        s.num_c[i as usize] += w;
                    }
                    let mut next = 0usize;
                    for &i in self.z.row(v) {
                        let i = i as usize;
                        s.den_t[i] += w;
                        for d in &mut s.den_c[next..i] {
                            *d += w;
                        }
                        next = i + 1;
                    }
                    for d in &mut s.den_c[next..] {
                        *d += w;
                    }
                }
            }
            Orientation::Item => {
                let (treated, outcome) = self.own_flags(user);
                for (i, set) in self.neighbors.iter().enumerate() {
                    for &(j, w) in &set.neighbors {
                        if treated[j] {
                            s.den_t[i] += w;
                            if outcome[j] {
                                s.num_t[i] += w;
                            }
                        } else {
                            s.den_c[i] += w;
                            if outcome[j] {
                                s.num_c[i] += w;
                            }
                        }
                    }
                }
            }
        }
        s
    }

    fn own_flags(&self, user: usize) -> (Vec<bool>, Vec<bool>) {
        let n_items = self.y.n_cols();
        let mut treated = vec![false; n_items];
        let mut outcome = vec![false; n_items];
        for &i in self.z.row(user) {
            treated[i as usize] = true;
        }
        for &i in self.y.row(user) {
            outcome[i as usize] = true;
        }
        (treated, outcome)
    }

}

impl UserScorer for CausalScorer<'_> {
    fn n_users(&self) -> usize {
        self.y.n_rows()
    }

    fn n_items(&self) -> usize {
        self.y.n_cols()
    }

    fn n_variants(&self) -> usize {
        self.betas.len()
    }

    fn score_user(&self, user: usize, out: &mut [Vec<f64>]) {
        let sums = self.sums(user);
        let n_items = self.y.n_cols();
        if self.mix_own {
            for (buf, &(bt, bc)) in out.iter_mut().zip(&self.betas) {
                for (i, slot) in buf.iter_mut().enumerate().take(n_items) {
                    *slot = sums.treated(i, bt) - sums.control(i, bc);
                }
            }
        } else {
            let (treated, outcome) = self.own_flags(user);
            for (i, slot) in out[0].iter_mut().enumerate().take(n_items) {
                let y = outcome[i] as u8 as f64;
                *slot = if treated[i] {
                    y - sums.control(i, 0.0)
                } else {
                    sums.treated(i, 0.0) - y
                };
            }
        }
    }
}

fn potential_outcomes(
    y: &SparseBinaryMatrix,
    z: &SparseBinaryMatrix,
    neighbors: &[NeighborSet],
    cfg: &RankerConfig,
    betas: (f64, f64),
) -> Result<(DenseMatrix, DenseMatrix)> {
    cfg.validate()?;
    let scorer = CausalScorer::new(y, z, neighbors, cfg.sim.orientation, cfg.mix_own, vec![betas])?;
    let (n_users, n_items) = y.shape();
    let mut y_t = DenseMatrix::zeros(n_users, n_items);
    let mut y_c = DenseMatrix::zeros(n_users, n_items);
    let (bt, bc) = scorer.betas[0];
    for u in 0..n_users {
        let sums = scorer.sums(u);
        for (i, (t, c)) in y_t.row_mut(u).iter_mut().zip(y_c.row_mut(u)).enumerate() {
            *t = sums.treated(i, bt);
            *c = sums.control(i, bc);
        }
    }
    Ok((y_t, y_c))
}

/// Shrunk potential-outcome estimates over neighborhoods built with
/// `include_self = cfg.mix_own`.
pub fn potential_outcomes_shrunk(
    y: &SparseBinaryMatrix,
    z: &SparseBinaryMatrix,
    neighbors: &[NeighborSet],
    cfg: &RankerConfig,
) -> Result<(DenseMatrix, DenseMatrix)> {
    potential_outcomes(y, z, neighbors, cfg, (cfg.beta_t, cfg.beta_c))
}

/// Unshrunk estimates over neighborhoods that exclude self; `cfg`'s
/// shrinkage values are not used.
pub fn potential_outcomes_wom(
    y: &SparseBinaryMatrix,
    z: &SparseBinaryMatrix,
    neighbors: &[NeighborSet],
    cfg: &RankerConfig,
) -> Result<(DenseMatrix, DenseMatrix)> {
    if let Some(set) = neighbors.iter().find(|s| s.includes_self) {
        return Err(Error::InvalidParameter(format!(
            "neighbor set of {} includes itself",
            set.owner
        )));
    }
    let cfg = RankerConfig {
        mix_own: false,
        beta_t: 0.0,
        beta_c: 0.0,
        ..*cfg
    };
    // Mixing off means the scorer pins both shrinkage values to zero.
    potential_outcomes(y, z, neighbors, &cfg, (0.0, 0.0))
}

fn check_dense(a: &DenseMatrix, shape: (usize, usize), what: &str) -> Result<()> {
    if a.shape() != shape {
        return Err(Error::DimensionMismatch(format!(
            "{what} is {:?}, expected {shape:?}",
            a.shape()
        )));
    }
    Ok(())
}

/// `tau_hat = Z (Y - y_c_hat) + (1 - Z)(y_t_hat - Y)`.
pub fn effect_wom(
    y: &SparseBinaryMatrix,
    z: &SparseBinaryMatrix,
    y_t_hat: &DenseMatrix,
    y_c_hat: &DenseMatrix,
) -> Result<DenseMatrix> {
    y.check_same_shape(z)?;
    check_dense(y_t_hat, y.shape(), "y_t_hat")?;
    check_dense(y_c_hat, y.shape(), "y_c_hat")?;
    let mut tau = DenseMatrix::zeros(y.n_rows(), y.n_cols());
    for u in 0..y.n_rows() {
        let row = tau.row_mut(u);
        for (i, slot) in row.iter_mut().enumerate() {
            let obs = y.get(u, i) as u8 as f64;
            *slot = if z.get(u, i) {
                obs - y_c_hat.get(u, i)
            } else {
                y_t_hat.get(u, i) - obs
            };
        }
    }
    Ok(tau)
}

/// `tau_hat = y_t_hat - y_c_hat`.
pub fn effect_mixed(y_t_hat: &DenseMatrix, y_c_hat: &DenseMatrix) -> Result<DenseMatrix> {
    check_dense(y_c_hat, y_t_hat.shape(), "y_c_hat")?;
    let mut tau = y_t_hat.clone();
    for u in 0..tau.n_rows() {
        for (t, c) in tau.row_mut(u).iter_mut().zip(y_c_hat.row(u)) {
            *t -= c;
        }
    }
    Ok(tau)
}

/// Items of `user` by descending `tau_hat`, ties by ascending item index.
pub fn rank_items(tau_hat: &DenseMatrix, user: usize) -> Vec<u32> {
    let mut order = Vec::new();
    order_by_score(tau_hat.row(user), &mut order);
    order
}

/// Neighbor sets for `cfg`: similarities from `Y` or `Z`, over users or items.
pub fn build_neighbors(
    y: &SparseBinaryMatrix,
    z: &SparseBinaryMatrix,
    cfg: &RankerConfig,
) -> Result<Vec<NeighborSet>> {
    cfg.validate()?;
    y.check_same_shape(z)?;
    let source = cfg.sim.source_matrix(y, z);
    top_k_neighbors(&source, &cfg.sim, cfg.mix_own)
}

/// Dense `tau_hat` with its potential-outcome estimates.
pub fn estimate_effects(
    y: &SparseBinaryMatrix,
    z: &SparseBinaryMatrix,
    cfg: &RankerConfig,
) -> Result<EffectEstimates> {
    let neighbors = build_neighbors(y, z, cfg)?;
    if cfg.mix_own {
        let (y_t_hat, y_c_hat) = potential_outcomes_shrunk(y, z, &neighbors, cfg)?;
        Ok(EffectEstimates {
            tau_hat: effect_mixed(&y_t_hat, &y_c_hat)?,
            y_t_hat,
            y_c_hat,
        })
    } else {
        let (y_t_hat, y_c_hat) = potential_outcomes_wom(y, z, &neighbors, cfg)?;
        Ok(EffectEstimates {
            tau_hat: effect_wom(y, z, &y_t_hat, &y_c_hat)?,
            y_t_hat,
            y_c_hat,
        })
    }
}

/// Builds neighborhoods, then ranks every user's items by `tau_hat`.
/// Scores in the returned lists are the `tau_hat` values.
pub fn run_ranker(y: &SparseBinaryMatrix, z: &SparseBinaryMatrix, cfg: &RankerConfig) -> Result<Rankings> {
    let neighbors = build_neighbors(y, z, cfg)?;
    let scorer = CausalScorer::new(
        y,
        z,
        &neighbors,
        cfg.sim.orientation,
        cfg.mix_own,
        vec![(cfg.beta_t, cfg.beta_c)],
    )?;
    Ok(rank_all(&scorer, 0))
}
