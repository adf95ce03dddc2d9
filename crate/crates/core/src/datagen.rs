//! Semi-synthetic counterfactual data: outcome probabilities from rating and
//! observation priors, rank-based propensities with a calibrated scale, and
//! keyed Bernoulli sampling of potential outcomes and assignments.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetSplits, DenseMatrix, GeneratedDataset, PriorTables, SparseBinaryMatrix, Split};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    /// Shift subtracted from predicted ratings before the logistic link.
    pub epsilon: f64,
    /// Propensity scale. Overwritten by calibration when a target is set.
    pub a: f64,
    /// Propensity unevenness exponent.
    pub b: f64,
    /// Average number of recommended items per user; `a` is solved for it.
    pub target_recs_per_user: Option<f64>,
    /// Independent samples drawn for the validation split.
    pub n_validation: usize,
    /// Independent samples drawn for the test split.
    pub n_test: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            epsilon: 5.0,
            a: 1.0,
            b: 1.0,
            target_recs_per_user: Some(100.0),
            n_validation: 1,
            n_test: 1,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() {
            return Err(Error::InvalidParameter("epsilon must be finite".into()));
        }
        if !(self.a > 0.0) {
            return Err(Error::InvalidParameter(format!("a must be positive, got {}", self.a)));
        }
        if !(self.b >= 0.0) || !self.b.is_finite() {
            return Err(Error::InvalidParameter(format!("b must be >= 0, got {}", self.b)));
        }
        if let Some(t) = self.target_recs_per_user {
            if !(t > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "target_recs_per_user must be positive, got {t}"
                )));
            }
        }
        if self.n_validation == 0 || self.n_test == 0 {
            return Err(Error::InvalidParameter(
                "validation and test need at least one sample".into(),
            ));
        }
        Ok(())
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn same_shape(a: &DenseMatrix, b: &DenseMatrix, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// `mu_t = sigmoid(r_hat - epsilon)`, `mu_c = o_hat`.
pub fn outcome_probabilities(
    r_hat: &DenseMatrix,
    o_hat: &DenseMatrix,
    epsilon: f64,
) -> Result<(DenseMatrix, DenseMatrix)> {
    same_shape(r_hat, o_hat, "rating and observation priors")?;
    if let Some(v) = o_hat.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidParameter(format!(
            "observation probability {v} outside [0, 1]"
        )));
    }
    Ok((r_hat.map(|r| sigmoid(r - epsilon)), o_hat.clone()))
}

/// 1-based rank of every item for every user by `mu_t + mu_c` descending,
/// ties by ascending item index.
pub fn preference_ranks(mu_t: &DenseMatrix, mu_c: &DenseMatrix) -> Result<Vec<Vec<u32>>> {
    same_shape(mu_t, mu_c, "outcome probabilities")?;
    let n_items = mu_t.n_cols();
    Ok((0..mu_t.n_rows())
        .into_par_iter()
        .map(|u| {
            let (t, c) = (mu_t.row(u), mu_c.row(u));
            let pref: Vec<f64> = t.iter().zip(c).map(|(a, b)| a + b).collect();
            let mut order: Vec<u32> = (0..n_items as u32).collect();
            order.sort_unstable_by(|&i, &j| {
                pref[j as usize].total_cmp(&pref[i as usize]).then(i.cmp(&j))
            });
            let mut rank = vec![0u32; n_items];
            for (pos, &i) in order.iter().enumerate() {
                rank[i as usize] = pos as u32 + 1;
            }
            rank
        })
        .collect())
}

#[inline]
fn propensity_at(rank: u32, a: f64, b: f64) -> f64 {
    (a * (1.0 / rank as f64).powf(b)).min(1.0)
}

/// `P = min(1, a * (1/rank)^b)` with ranks from [`preference_ranks`].
pub fn propensities(mu_t: &DenseMatrix, mu_c: &DenseMatrix, a: f64, b: f64) -> Result<DenseMatrix> {
    if !(a > 0.0) || !(b >= 0.0) {
        return Err(Error::InvalidParameter(format!("need a > 0 and b >= 0, got a={a}, b={b}")));
    }
    let ranks = preference_ranks(mu_t, mu_c)?;
    Ok(DenseMatrix::from_fn(mu_t.n_rows(), mu_t.n_cols(), |u, i| {
        propensity_at(ranks[u][i], a, b)
    }))
}

/// Mean over users of `sum_i P_ui` as a function of `a`.
///
/// Each user's ranks are a permutation of `1..=n_items`, so every user has
/// the same expected count and it suffices to sum over ranks.
fn expected_recs(n_items: usize, a: f64, b: f64) -> f64 {
    (1..=n_items as u32).map(|r| propensity_at(r, a, b)).sum()
}

/// Solves for `a` so that users receive `target` recommendations on average.
pub fn calibrate_a(mu_t: &DenseMatrix, mu_c: &DenseMatrix, b: f64, target: f64) -> Result<f64> {
    same_shape(mu_t, mu_c, "outcome probabilities")?;
    let n_items = mu_t.n_cols();
    if !(b >= 0.0) {
        return Err(Error::InvalidParameter(format!("b must be >= 0, got {b}")));
    }
    if !(target > 0.0) {
        return Err(Error::InvalidParameter(format!("target must be positive, got {target}")));
    }
    if target > n_items as f64 {
        return Err(Error::InvalidParameter(format!(
            "target {target} exceeds the {n_items} available items"
        )));
    }
    // Smallest a with P == 1 everywhere: a * n^-b >= 1.
    let saturating = (n_items as f64).powf(b).max(1.0);
    if target == n_items as f64 {
        return Ok(saturating);
    }
    let (mut lo, mut hi) = (0.0f64, saturating);
    let tol = 1e-12 * target;
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let got = expected_recs(n_items, mid, b);
        if (got - target).abs() <= tol {
            break;
        }
        if got < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

const VAR_Y_T: u64 = 1;
const VAR_Y_C: u64 = 2;
const VAR_Z: u64 = 3;

/// Draws one sample of a split. Every cell's three draws are keyed by
/// `(seed, split, sample, user, item, variable)`.
pub fn sample_split(
    priors: &PriorTables,
    params: &GenParams,
    seed: u64,
    split: Split,
    sample: usize,
) -> Result<GeneratedDataset> {
    priors.validate()?;
    let (n_users, n_items) = priors.shape();
    let rows: Vec<[Vec<usize>; 3]> = (0..n_users)
        .into_par_iter()
        .map(|u| {
            let mut out: [Vec<usize>; 3] = Default::default();
            let key = |i: usize, var: u64| {
                [seed, split.stream_tag(), sample as u64, u as u64, i as u64, var]
            };
            for i in 0..n_items {
                if rng::bernoulli(priors.mu_t.get(u, i), &key(i, VAR_Y_T)) {
                    out[0].push(i);
                }
                if rng::bernoulli(priors.mu_c.get(u, i), &key(i, VAR_Y_C)) {
                    out[1].push(i);
                }
                if rng::bernoulli(priors.propensity.get(u, i), &key(i, VAR_Z)) {
                    out[2].push(i);
                }
            }
            out
        })
        .collect();
    let pick = |k: usize| -> Result<SparseBinaryMatrix> {
        let r: Vec<&[usize]> = rows.iter().map(|r| r[k].as_slice()).collect();
        SparseBinaryMatrix::from_rows(n_items, &r)
    };
    let mut ds = GeneratedDataset::from_potential_outcomes(
        pick(0)?,
        pick(1)?,
        pick(2)?,
        seed,
        split,
        params.clone(),
    )?;
    ds.sample = sample;
    Ok(ds)
}

/// Builds the prior tables from rating / observation predictions, solving
/// for `a` when a target is set. The returned params carry the `a` used.
pub fn build_priors(
    r_hat: &DenseMatrix,
    o_hat: &DenseMatrix,
    params: &GenParams,
) -> Result<(PriorTables, GenParams)> {
    params.validate()?;
    let (mu_t, mu_c) = outcome_probabilities(r_hat, o_hat, params.epsilon)?;
    let mut resolved = params.clone();
    if let Some(target) = params.target_recs_per_user {
        resolved.a = calibrate_a(&mu_t, &mu_c, params.b, target)?;
    }
    let propensity = propensities(&mu_t, &mu_c, resolved.a, resolved.b)?;
    Ok((PriorTables::new(mu_t, mu_c, propensity)?, resolved))
}

/// Samples one training split and the configured number of validation and
/// test samples, all sharing the same priors.
pub fn generate_splits(priors: &PriorTables, params: &GenParams, seed: u64) -> Result<DatasetSplits> {
    params.validate()?;
    let draw = |split: Split, n: usize| -> Result<Vec<GeneratedDataset>> {
        (0..n).map(|s| sample_split(priors, params, seed, split, s)).collect()
    };
    Ok(DatasetSplits {
        train: sample_split(priors, params, seed, Split::Train, 0)?,
        validation: draw(Split::Validation, params.n_validation)?,
        test: draw(Split::Test, params.n_test)?,
    })
}

/// Low-rank synthetic stand-ins for the rating predictions `r_hat` (in
/// [1, 5]) and observation probabilities `o_hat` (in [0, 1]).
///
/// Ratings and observations share part of their latent structure, the way
/// watched items tend to be liked ones, but observation probability carries
/// an extra popularity term that ratings do not, so popular items are not
/// always the ones a recommendation helps most.
pub fn synth_priors(n_users: usize, n_items: usize, seed: u64) -> (DenseMatrix, DenseMatrix) {
    const DIM: usize = 6;
    const SHARED: f64 = 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(rng::derive_seed(seed, "synth-priors", 0));
    let mut normal = |n: usize| -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    };
    let user_taste = normal(n_users * DIM);
    let item_taste = normal(n_items * DIM);
    let user_habit = normal(n_users * DIM);
    let item_habit_own = normal(n_items * DIM);
    let user_bias = normal(n_users);
    let item_quality = normal(n_items);
    let item_popularity = normal(n_items);
    let user_activity = normal(n_users);

    let other = (1.0 - SHARED * SHARED).sqrt();
    let item_habit: Vec<f64> = item_taste
        .iter()
        .zip(&item_habit_own)
        .map(|(t, o)| SHARED * t + other * o)
        .collect();
    let scale = 1.0 / (DIM as f64).sqrt();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * scale;

    let r_hat = DenseMatrix::from_fn(n_users, n_items, |u, i| {
        let s = 0.9
            + 1.6 * dot(&user_taste[u * DIM..][..DIM], &item_taste[i * DIM..][..DIM])
            + 0.3 * user_bias[u]
            + 0.4 * item_quality[i];
        1.0 + 4.0 * sigmoid(s)
    });
    let o_hat = DenseMatrix::from_fn(n_users, n_items, |u, i| {
        let s = -3.4
            + 0.9 * dot(&user_habit[u * DIM..][..DIM], &item_habit[i * DIM..][..DIM])
            + 0.9 * item_popularity[i]
            + 0.4 * user_activity[u];
        sigmoid(s)
    });
    (r_hat, o_hat)
}
