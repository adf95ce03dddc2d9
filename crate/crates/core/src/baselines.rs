//! Non-causal comparison rankers: random order, popularity and classical
//! user/item neighborhood prediction.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::SparseBinaryMatrix;
use crate::error::{Error, Result};
use crate::ranking::{rank_all, Rankings, UserScorer};
use crate::rng::derive_seed;
use crate::similarity::{top_k_neighbors, NeighborSet, Orientation, SimilarityConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    Random,
    Pop,
    Ubn,
    Ibn,
}

impl BaselineMethod {
    pub fn name(self) -> &'static str {
        match self {
            BaselineMethod::Random => "Random",
            BaselineMethod::Pop => "Pop",
            BaselineMethod::Ubn => "UBN",
            BaselineMethod::Ibn => "IBN",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    /// Neighborhood for UBN/IBN; the orientation is implied by the method.
    #[serde(default)]
    pub sim: Option<SimilarityConfig>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        match (self.method, self.seed) {
            (BaselineMethod::Random, None) => {
                return Err(Error::InvalidParameter("random ranking needs a seed".into()))
            }
            (BaselineMethod::Random, Some(_)) => {}
            (_, Some(_)) => {
                return Err(Error::InvalidParameter(format!(
                    "{} does not take a seed",
                    self.method.name()
                )))
            }
            _ => {}
        }
        if matches!(self.method, BaselineMethod::Ubn | BaselineMethod::Ibn) {
            match &self.sim {
                Some(sim) => sim.validate()?,
                None => {
                    return Err(Error::InvalidParameter(format!(
                        "{} needs a similarity config",
                        self.method.name()
                    )))
                }
            }
        }
        Ok(())
    }
}

/// One shuffled permutation per user; item at position `p` scores `n - p`.
pub struct RandomScorer {
    n_users: usize,
    n_items: usize,
    seed: u64,
}

impl RandomScorer {
    pub fn new(n_users: usize, n_items: usize, seed: u64) -> Self {
        Self { n_users, n_items, seed }
    }
}

impl UserScorer for RandomScorer {
    fn n_users(&self) -> usize {
        self.n_users
    }
    fn n_items(&self) -> usize {
        self.n_items
    }
    fn score_user(&self, user: usize, out: &mut [Vec<f64>]) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, "random-ranking", user as u64));
        let mut perm: Vec<u32> = (0..self.n_items as u32).collect();
        perm.shuffle(&mut rng);
        for (pos, &i) in perm.iter().enumerate() {
            out[0][i as usize] = (self.n_items - pos) as f64;
        }
    }
}

/// The same popularity score (column sum of `Y`) for every user.
pub struct PopScorer {
    n_users: usize,
    counts: Vec<f64>,
}

impl PopScorer {
    pub fn new(y: &SparseBinaryMatrix) -> Self {
        Self {
            n_users: y.n_rows(),
            counts: y.col_sums().into_iter().map(|c| c as f64).collect(),
        }
    }
}

impl UserScorer for PopScorer {
    fn n_users(&self) -> usize {
        self.n_users
    }
    fn n_items(&self) -> usize {
        self.counts.len()
    }
    fn score_user(&self, _user: usize, out: &mut [Vec<f64>]) {
        out[0].copy_from_slice(&self.counts);
    }
}

/// Weighted neighborhood average of observed outcomes, with neighborhoods
/// over users (UBN) or items (IBN). Neighbor sets must exclude self.
pub struct NeighborhoodScorer<'a> {
    y: &'a SparseBinaryMatrix,
    neighbors: &'a [NeighborSet],
    orientation: Orientation,
    weight_sums: Vec<f64>,
}

impl<'a> NeighborhoodScorer<'a> {
    pub fn new(y: &'a SparseBinaryMatrix, neighbors: &'a [NeighborSet], orientation: Orientation) -> Result<Self> {
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
        if let Some(set) = neighbors.iter().find(|s| s.includes_self) {
            return Err(Error::InvalidParameter(format!(
                "neighbor set of {} includes itself",
                set.owner
            )));
        }
        Ok(Self {
            y,
            neighbors,
            orientation,
            weight_sums: neighbors.iter().map(NeighborSet::weight_sum).collect(),
        })
    }
}

impl UserScorer for NeighborhoodScorer<'_> {
    fn n_users(&self) -> usize {
        self.y.n_rows()
    }
    fn n_items(&self) -> usize {
        self.y.n_cols()
    }
    fn score_user(&self, user: usize, out: &mut [Vec<f64>]) {
        let out = &mut out[0];
        out.fill(0.0);
        match self.orientation {
            Orientation::User => {
                let den = self.weight_sums[user];
                if den == 0.0 {
                    return;
                }
                for &(v, w) in &self.neighbors[user].neighbors {
                    for &i in self.y.row(v) {
                        out[i as usize] += w;
                    }
                }
                for s in out.iter_mut() {
                    *s /= den;
                }
            }
            Orientation::Item => {
                let mut adopted = vec![false; self.y.n_cols()];
                for &j in self.y.row(user) {
                    adopted[j as usize] = true;
                }
                for (i, set) in self.neighbors.iter().enumerate() {
                    let den = self.weight_sums[i];
                    if den == 0.0 {
                        continue;
                    }
                    let num: f64 = set.neighbors.iter().filter(|&&(j, _)| adopted[j]).map(|&(_, w)| w).sum();
                    out[i] = num / den;
                }
            }
        }
    }
}

/// Independent uniform permutation per user, reproducible from `seed`.
pub fn rank_random(n_users: usize, n_items: usize, seed: u64) -> Rankings {
    rank_all(&RandomScorer::new(n_users, n_items, seed), 0)
}

/// Items by descending number of positive outcomes, ties by index.
pub fn rank_pop(y: &SparseBinaryMatrix) -> Rankings {
    rank_all(&PopScorer::new(y), 0)
}

/// UBN or IBN depending on `sim.orientation`; similarity from `Y` (the
/// `source` field is not consulted).
pub fn rank_ubn_ibn(y: &SparseBinaryMatrix, sim: &SimilarityConfig) -> Result<Rankings> {
    sim.validate()?;
    let source = match sim.orientation {
        Orientation::User => std::borrow::Cow::Borrowed(y),
        Orientation::Item => std::borrow::Cow::Owned(y.transpose()),
    };
    let neighbors = top_k_neighbors(&source, sim, false)?;
    let scorer = NeighborhoodScorer::new(y, &neighbors, sim.orientation)?;
    Ok(rank_all(&scorer, 0))
}

/// Runs the configured baseline on the training outcomes `y`.
pub fn run_baseline(y: &SparseBinaryMatrix, cfg: &BaselineConfig) -> Result<Rankings> {
    cfg.validate()?;
    match cfg.method {
        BaselineMethod::Random => Ok(rank_random(y.n_rows(), y.n_cols(), cfg.seed.unwrap_or_default())),
        BaselineMethod::Pop => Ok(rank_pop(y)),
        BaselineMethod::Ubn | BaselineMethod::Ibn => {
            let mut sim = cfg.sim.expect("validated");
            sim.orientation = if cfg.method == BaselineMethod::Ubn {
                Orientation::User
            } else {
                Orientation::Item
            };
            rank_ubn_ibn(y, &sim)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::Source;

    fn sim(k: usize, orientation: Orientation) -> SimilarityConfig {
        SimilarityConfig {
            k,
            alpha: 1.0,
            source: Source::Outcomes,
            orientation,
        }
    }

    #[test]
    fn random_is_reproducible() {
        let a = rank_random(5, 100, 7);
        assert_eq!(a, rank_random(5, 100, 7));
        let b = rank_random(5, 100, 8);
        assert_ne!(a.lists[0].items, b.lists[0].items);
        assert_ne!(a.lists[0].items, a.lists[1].items);
        let one = rank_random(2, 1, 7);
        assert_eq!(one.lists[0].items, vec![0]);
        let mut sorted = a.lists[3].items.clone();
        sorted.sort();
        assert_eq!(sorted, (0..100).collect::<Vec<u32>>());
    }

    #[test]
    fn pop_examples() {
        let y = SparseBinaryMatrix::from_dense(&[[1u8, 0, 1], [1, 1, 0], [1, 0, 1]]).unwrap();
        let r = rank_pop(&y);
        for list in &r.lists {
            assert_eq!(list.items, vec![0, 2, 1]);
        }
        let r = rank_pop(&SparseBinaryMatrix::zeros(2, 4));
        assert_eq!(r.lists[1].items, vec![0, 1, 2, 3]);
        assert_eq!(rank_pop(&SparseBinaryMatrix::zeros(1, 1)).lists[0].items, vec![0]);
    }

    #[test]
    fn neighborhood_examples() {
        let y = SparseBinaryMatrix::from_dense(&[[0u8, 0], [1, 0], [0, 1]]).unwrap();
        let single = vec![
            NeighborSet { owner: 0, neighbors: vec![(1, 0.7)], includes_self: false },
            NeighborSet { owner: 1, neighbors: vec![], includes_self: false },
            NeighborSet { owner: 2, neighbors: vec![], includes_self: false },
        ];
        let s = NeighborhoodScorer::new(&y, &single, Orientation::User).unwrap();
        let mut out = vec![vec![0.0; 2]];
        s.score_user(0, &mut out);
        assert_eq!(out[0], vec![1.0, 0.0]);
        s.score_user(1, &mut out);
        assert_eq!(out[0], vec![0.0, 0.0]);

        let pair = vec![
            NeighborSet { owner: 0, neighbors: vec![(1, 0.4), (2, 0.4)], includes_self: false },
            single[1].clone(),
            single[2].clone(),
        ];
        let s = NeighborhoodScorer::new(&y, &pair, Orientation::User).unwrap();
        s.score_user(0, &mut out);
        assert_eq!(out[0], vec![0.5, 0.5]);

        let with_self = vec![NeighborSet { owner: 0, neighbors: vec![(0, 1.0)], includes_self: true }; 3];
        assert!(NeighborhoodScorer::new(&y, &with_self, Orientation::User).is_err());
    }

    fn dense_oracle(y: &SparseBinaryMatrix, k: usize, item: bool) -> Vec<Vec<f64>> {
        let (n, m) = y.shape();
        let cell = |r: usize, d: usize| -> f64 {
            (if item { y.get(d, r) } else { y.get(r, d) }) as u8 as f64
        };
        let (rows, dim) = if item { (m, n) } else { (n, m) };
        let cos = |a: usize, b: usize| {
            let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
            for d in 0..dim {
                ab += cell(a, d) * cell(b, d);
                aa += cell(a, d);
                bb += cell(b, d);
            }
            if aa * bb == 0.0 { 0.0 } else { ab / (aa * bb).sqrt() }
        };
        let mut scores = vec![vec![0.0; m]; n];
        for r in 0..rows {
            let mut others: Vec<(usize, f64)> = (0..rows).filter(|&o| o != r).map(|o| (o, cos(r, o))).collect();
            others.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let hood: Vec<(usize, f64)> = others.into_iter().take(k).filter(|p| p.1 > 0.0).collect();
            let den: f64 = hood.iter().map(|p| p.1).sum();
            for d in 0..dim {
                let num: f64 = hood.iter().map(|&(o, w)| w * cell(o, d)).sum();
                let s = if den == 0.0 { 0.0 } else { num / den };
                if item {
                    scores[d][r] = s;
                } else {
                    scores[r][d] = s;
                }
            }
        }
        scores
    }

    #[test]
    fn matches_dense_oracle() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let y = SparseBinaryMatrix::from_fn(8, 6, |_, _| rng.random_bool(0.4));
            for (item, k) in [(false, 3), (true, 2), (false, 7), (true, 5)] {
                let o = if item { Orientation::Item } else { Orientation::User };
                let source = if item { y.transpose() } else { y.clone() };
                let nb = top_k_neighbors(&source, &sim(k, o), false).unwrap();
                let scorer = NeighborhoodScorer::new(&y, &nb, o).unwrap();
                let expected = dense_oracle(&y, k, item);
                let mut out = vec![vec![0.0; 6]];
                for (u, row) in expected.iter().enumerate() {
                    scorer.score_user(u, &mut out);
                    for (a, b) in out[0].iter().zip(row) {
                        assert!((a - b).abs() < 1e-12);
                        assert!((0.0..=1.0).contains(a));
                    }
                }
                let ranked = rank_ubn_ibn(&y, &sim(k, o)).unwrap();
                assert_eq!(ranked.n_users(), 8);
            }
        }
    }

    #[test]
    fn config_validation() {
        let random = BaselineConfig { method: BaselineMethod::Random, sim: None, seed: None };
        assert!(random.validate().is_err());
        assert!(BaselineConfig { seed: Some(1), ..random }.validate().is_ok());
        let pop = BaselineConfig { method: BaselineMethod::Pop, sim: None, seed: Some(3) };
        assert!(pop.validate().is_err());
        let ubn = BaselineConfig { method: BaselineMethod::Ubn, sim: None, seed: None };
        assert!(ubn.validate().is_err());
        let y = SparseBinaryMatrix::from_fn(4, 3, |u, i| u == i);
        let ibn = BaselineConfig { method: BaselineMethod::Ibn, sim: Some(sim(1, Orientation::User)), seed: None };
        assert_eq!(run_baseline(&y, &ibn).unwrap().n_items, 3);
    }
}
