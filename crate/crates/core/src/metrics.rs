//! Causal ranking metrics against ground-truth effects.
//!
//! For a user with ranks `r_i` (1-based) and effects `tau_i`:
//!
//! ```text
//! CP@n = sum_{r_i <= n} tau_i / n
//! CDCG = sum_i tau_i / log2(1 + r_i)
//! CAR  = sum_i r_i * tau_i / I        (smaller is better)
//! ```
//!
//! Each is computed per user and averaged over all users, reducing in
//! ascending user order with compensated summation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{GeneratedDataset, TernaryMatrix};
use crate::error::{Error, Result};
use crate::ranking::{order_by_score, RankedList, Rankings, UserScorer};

/// Neumaier-compensated sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::default();
    let mut n = 0usize;
    for v in values {
        acc.add(v);
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        acc.value() / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MetricKind {
    CpAt(usize),
    Cdcg,
    Car,
}

impl MetricKind {
    pub fn higher_is_better(self) -> bool {
        !matches!(self, MetricKind::Car)
    }

    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        if self.higher_is_better() {
            a > b
        } else {
            a < b
        }
    }

    pub fn value(self, report: &MetricReport) -> Option<f64> {
        match self {
            MetricKind::CpAt(n) => report.cp_at.get(&n).copied(),
            MetricKind::Cdcg => Some(report.cdcg),
            MetricKind::Car => Some(report.car),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricKind::CpAt(n) => write!(f, "CP@{n}"),
            MetricKind::Cdcg => f.write_str("CDCG"),
            MetricKind::Car => f.write_str("CAR"),
        }
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "cdcg" => Ok(MetricKind::Cdcg),
            "car" => Ok(MetricKind::Car),
            _ => lower
                .strip_prefix("cp@")
                .and_then(|n| n.parse().ok())
                .filter(|&n| n >= 1)
                .map(MetricKind::CpAt)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown metric {s:?}"))),
        }
    }
}

impl Serialize for MetricKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MetricKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One user's metric values; `cp_at` follows the requested cutoffs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserMetrics {
    pub cp_at: Vec<f64>,
    pub cdcg: f64,
    pub car: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub cp_at: BTreeMap<usize, f64>,
    pub cdcg: f64,
    pub car: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_user: Option<Vec<UserMetrics>>,
}

impl MetricReport {
    fn from_users(cutoffs: &[usize], users: Vec<UserMetrics>, keep: bool) -> Self {
        let cp_at = cutoffs
            .iter()
            .enumerate()
            .map(|(j, &n)| (n, mean(users.iter().map(|m| m.cp_at[j]))))
            .collect();
        Self {
            cp_at,
            cdcg: mean(users.iter().map(|m| m.cdcg)),
            car: mean(users.iter().map(|m| m.car)),
            per_user: keep.then_some(users),
        }
    }

    /// Metric names and values in a fixed order: CP@n ascending, CDCG, CAR.
    pub fn values(&self) -> Vec<(MetricKind, f64)> {
        let mut out: Vec<_> = self.cp_at.iter().map(|(&n, &v)| (MetricKind::CpAt(n), v)).collect();
        out.push((MetricKind::Cdcg, self.cdcg));
        out.push((MetricKind::Car, self.car));
        out
    }

    /// `metric,value` rows, plus one row per user and metric when the
    /// breakdown is present.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["user", "metric", "value"])?;
        for (kind, v) in self.values() {
            w.write_record(["all".to_string(), kind.to_string(), v.to_string()])?;
        }
        if let Some(users) = &self.per_user {
            let cutoffs: Vec<usize> = self.cp_at.keys().copied().collect();
            for (u, m) in users.iter().enumerate() {
                for (n, v) in cutoffs.iter().zip(&m.cp_at) {
                    w.write_record([u.to_string(), format!("CP@{n}"), v.to_string()])?;
                }
                w.write_record([u.to_string(), "CDCG".into(), m.cdcg.to_string()])?;
                w.write_record([u.to_string(), "CAR".into(), m.car.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

fn check_cutoffs(cutoffs: &[usize], n_items: usize) -> Result<()> {
    if let Some(&n) = cutoffs.iter().find(|&&n| n == 0 || n > n_items) {
        return Err(Error::InvalidParameter(format!(
            "cutoff {n} outside 1..={n_items}"
        )));
    }
    Ok(())
}

/// Metrics of one user given each item's 1-based rank.
pub fn user_metrics(ranks: &[u32], tau: &TernaryMatrix, user: usize, cutoffs: &[usize]) -> UserMetrics {
    let n_items = ranks.len() as f64;
    let (cols, vals) = tau.row(user);
    let mut cp = vec![CompensatedSum::default(); cutoffs.len()];
    let mut cdcg = CompensatedSum::default();
    let mut car = CompensatedSum::default();
    for (&i, &t) in cols.iter().zip(vals) {
        let r = ranks[i as usize];
        let t = t as f64;
        for (acc, &n) in cp.iter_mut().zip(cutoffs) {
            if r as usize <= n {
                acc.add(t);
            }
        }
        cdcg.add(t / (1.0 + r as f64).log2());
        car.add(r as f64 * t);
    }
    UserMetrics {
        cp_at: cp.iter().zip(cutoffs).map(|(a, &n)| a.value() / n as f64).collect(),
        cdcg: cdcg.value(),
        car: car.value() / n_items,
    }
}

fn check_coverage(rankings: &Rankings, tau: &TernaryMatrix) -> Result<()> {
    let (n_users, n_items) = tau.shape();
    let mut missing_users: Vec<usize> = (rankings.n_users()..n_users).collect();
    let mut seen = vec![false; n_items];
    let mut missing_items = Vec::new();
    for (u, list) in rankings.lists.iter().enumerate().take(n_users) {
        seen.fill(false);
        let mut complete = list.items.len() == n_items;
        for &i in &list.items {
            match seen.get_mut(i as usize) {
                Some(s) if !*s => *s = true,
                _ => complete = false,
            }
        }
        if !complete {
            missing_users.push(u);
            missing_items.extend(seen.iter().enumerate().filter(|(_, s)| !**s).map(|(i, _)| i));
        }
    }
    if rankings.n_items != n_items || rankings.n_users() > n_users {
        return Err(Error::DimensionMismatch(format!(
            "rankings are {}x{}, effects are {n_users}x{n_items}",
            rankings.n_users(),
            rankings.n_items
        )));
    }
    if missing_users.is_empty() {
        return Ok(());
    }
    missing_users.sort_unstable();
    missing_items.sort_unstable();
    missing_items.dedup();
    Err(Error::Coverage {
        users: missing_users,
        items: missing_items,
    })
}

/// All metric families of `rankings` against `tau`.
pub fn evaluate_tau(rankings: &Rankings, tau: &TernaryMatrix, cutoffs: &[usize], per_user: bool) -> Result<MetricReport> {
    check_coverage(rankings, tau)?;
    check_cutoffs(cutoffs, tau.n_cols())?;
    let users: Vec<UserMetrics> = rankings
        .lists
        .par_iter()
        .enumerate()
        .map(|(u, list)| user_metrics(&list.ranks(), tau, u, cutoffs))
        .collect();
    Ok(MetricReport::from_users(cutoffs, users, per_user))
}

/// All metric families against the effects of `dataset`.
pub fn evaluate(rankings: &Rankings, dataset: &GeneratedDataset, cutoffs: &[usize]) -> Result<MetricReport> {
    evaluate_tau(rankings, &dataset.tau, cutoffs, false)
}

fn single(rankings: &Rankings, tau: &TernaryMatrix, kind: MetricKind) -> Result<f64> {
    let cutoffs: Vec<usize> = match kind {
        MetricKind::CpAt(n) => vec![n],
        _ => vec![],
    };
    let report = evaluate_tau(rankings, tau, &cutoffs, false)?;
    Ok(kind.value(&report).expect("requested cutoff"))
}

pub fn cp_at_n(rankings: &Rankings, tau: &TernaryMatrix, n: usize) -> Result<f64> {
    single(rankings, tau, MetricKind::CpAt(n))
}

pub fn cdcg(rankings: &Rankings, tau: &TernaryMatrix) -> Result<f64> {
    single(rankings, tau, MetricKind::Cdcg)
}

pub fn car(rankings: &Rankings, tau: &TernaryMatrix) -> Result<f64> {
    single(rankings, tau, MetricKind::Car)
}

/// Scores, ranks and evaluates user by user without materializing the
/// rankings. Returns `reports[variant][split]` for every scorer variant
/// against every effect matrix in `taus`.
pub fn evaluate_scorer(scorer: &dyn UserScorer, taus: &[&TernaryMatrix], cutoffs: &[usize]) -> Result<Vec<Vec<MetricReport>>> {
    let (n_users, n_items) = (scorer.n_users(), scorer.n_items());
    for tau in taus {
        if tau.shape() != (n_users, n_items) {
            return Err(Error::DimensionMismatch(format!(
                "scorer is {n_users}x{n_items}, effects are {:?}",
                tau.shape()
            )));
        }
    }
    check_cutoffs(cutoffs, n_items)?;
    let n_variants = scorer.n_variants();
    let per_user: Vec<Vec<Vec<UserMetrics>>> = (0..n_users)
        .into_par_iter()
        .map_init(
            || (vec![vec![0.0; n_items]; n_variants], Vec::new(), vec![0u32; n_items]),
            |(buf, order, ranks), u| {
                scorer.score_user(u, buf);
                buf.iter()
                    .map(|scores| {
                        order_by_score(scores, order);
                        for (pos, &i) in order.iter().enumerate() {
                            ranks[i as usize] = pos as u32 + 1;
                        }
                        taus.iter().map(|tau| user_metrics(ranks, tau, u, cutoffs)).collect()
                    })
                    .collect()
            },
        )
        .collect();
    let mut out: Vec<Vec<Vec<UserMetrics>>> = vec![vec![Vec::with_capacity(n_users); taus.len()]; n_variants];
    for user in per_user {
        for (v, splits) in user.into_iter().enumerate() {
            for (s, m) in splits.into_iter().enumerate() {
                out[v][s].push(m);
            }
        }
    }
    Ok(out
        .into_iter()
        .map(|splits| splits.into_iter().map(|users| MetricReport::from_users(cutoffs, users, false)).collect())
        .collect())
}

/// Ranking produced by sorting on the true effects, the per-user optimum
/// for CP@n.
pub fn oracle_rankings(tau: &TernaryMatrix) -> Rankings {
    let n_items = tau.n_cols();
    let lists = (0..tau.n_rows())
        .map(|u| {
            let mut scores = vec![0.0; n_items];
            let (cols, vals) = tau.row(u);
            for (&i, &t) in cols.iter().zip(vals) {
                scores[i as usize] = t as f64;
            }
            RankedList::from_scores(&scores)
        })
        .collect();
    Rankings { n_items, lists }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DenseMatrix;
    use proptest::prelude::*;

    fn rankings(orders: &[&[u32]]) -> Rankings {
        Rankings {
            n_items: orders[0].len(),
            lists: orders
                .iter()
                .map(|o| RankedList { items: o.to_vec(), scores: vec![0.0; o.len()] })
                .collect(),
        }
    }

    fn tau(rows: &[&[i8]]) -> TernaryMatrix {
        TernaryMatrix::from_dense(rows).unwrap()
    }

    #[test]
    fn cp_examples() {
        let r = rankings(&[&[0, 1, 2]]);
        assert_eq!(cp_at_n(&r, &tau(&[&[0, 0, 0]]), 2).unwrap(), 0.0);
        assert_eq!(cp_at_n(&r, &tau(&[&[1, -1, 1]]), 2).unwrap(), 0.0);
        assert_eq!(cp_at_n(&rankings(&[&[2, 0, 1]]), &tau(&[&[1, 1, 1]]), 3).unwrap(), 1.0);
        assert!(cp_at_n(&r, &tau(&[&[1, 1, 1]]), 0).is_err());
        assert!(cp_at_n(&r, &tau(&[&[1, 1, 1]]), 4).is_err());
    }

    #[test]
    fn cdcg_examples() {
        assert_eq!(cdcg(&rankings(&[&[0]]), &tau(&[&[1]])).unwrap(), 1.0);
        assert_eq!(cdcg(&rankings(&[&[1, 2, 0, 3]]), &tau(&[&[1, 0, 0, 0]])).unwrap(), 0.5);
        assert_eq!(cdcg(&rankings(&[&[1, 2, 0]]), &tau(&[&[0, 0, 0]])).unwrap(), 0.0);
    }

    #[test]
    fn car_examples() {
        assert_eq!(car(&rankings(&[&[2, 0, 1, 3]]), &tau(&[&[0, 0, 1, 0]])).unwrap(), 0.25);
        assert_eq!(car(&rankings(&[&[2, 0, 1]]), &tau(&[&[0, 0, 0]])).unwrap(), 0.0);
        assert_eq!(car(&rankings(&[&[0, 1, 2, 3]]), &tau(&[&[0, 0, 0, -1]])).unwrap(), -1.0);
    }

    #[test]
    fn averages_over_users() {
        let r = rankings(&[&[0, 1], &[1, 0]]);
        let t = tau(&[&[1, 0], &[1, 0]]);
        assert_eq!(cp_at_n(&r, &t, 1).unwrap(), 0.5);
    }

    #[test]
    fn coverage_errors_list_missing() {
        let t = tau(&[&[1, 0, 0], &[0, 0, 0]]);
        let partial = Rankings {
            n_items: 3,
            lists: vec![RankedList { items: vec![0, 1, 2], scores: vec![0.0; 3] }, RankedList { items: vec![2, 0], scores: vec![0.0; 2] }],
        };
        match evaluate_tau(&partial, &t, &[1], false) {
            Err(Error::Coverage { users, items }) => {
                assert_eq!(users, vec![1]);
                assert_eq!(items, vec![1]);
            }
            other => panic!("{other:?}"),
        }
        let short = rankings(&[&[0, 1, 2]]);
        match evaluate_tau(&short, &t, &[1], false) {
            Err(Error::Coverage { users, .. }) => assert_eq!(users, vec![1]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn oracle_maximizes_cp_over_all_permutations() {
        fn permutations(items: Vec<u32>) -> Vec<Vec<u32>> {
            if items.len() <= 1 {
                return vec![items];
            }
            let mut out = Vec::new();
            for k in 0..items.len() {
                let mut rest = items.clone();
                let head = rest.remove(k);
                for mut p in permutations(rest) {
                    p.insert(0, head);
                    out.push(p);
                }
            }
            out
        }
        let t = tau(&[&[-1, 1, 0, 1, -1]]);
        let best = oracle_rankings(&t);
        let perms = permutations((0..5).collect());
        assert_eq!(perms.len(), 120);
        for n in 1..=5 {
            let top = cp_at_n(&best, &t, n).unwrap();
            for p in &perms {
                assert!(cp_at_n(&rankings(&[p]), &t, n).unwrap() <= top);
            }
        }
    }

    #[test]
    fn reversal_lowers_cdcg_for_single_positive() {
        let t = tau(&[&[0, 0, 1, 0]]);
        let r = rankings(&[&[2, 0, 1, 3]]);
        let rev = rankings(&[&[3, 1, 0, 2]]);
        assert!(cdcg(&rev, &t).unwrap() < cdcg(&r, &t).unwrap());
    }

    #[test]
    fn zero_mean_effects_give_small_metrics() {
        use rand::{Rng, SeedableRng};
        let mut sums = [0.0; 3];
        for seed in 0..20 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<i8>> = (0..50).map(|_| (0..400).map(|_| rng.random_range(-1i8..=1)).collect()).collect();
            let t = TernaryMatrix::from_dense(&rows).unwrap();
            let r = crate::baselines::rank_random(50, 400, seed);
            let rep = evaluate_tau(&r, &t, &[10], false).unwrap();
            sums[0] += rep.cp_at[&10];
            sums[1] += rep.cdcg;
            sums[2] += rep.car;
        }
        for s in sums {
            assert!((s / 20.0).abs() < 0.5, "{s}");
        }
    }

    #[test]
    fn metric_kind_round_trip() {
        for s in ["CP@10", "CDCG", "CAR", "CP@1"] {
            assert_eq!(s.parse::<MetricKind>().unwrap().to_string(), s);
        }
        assert_eq!("cp@5".parse::<MetricKind>().unwrap(), MetricKind::CpAt(5));
        assert!("cp@0".parse::<MetricKind>().is_err());
        assert!("ndcg".parse::<MetricKind>().is_err());
        assert!(MetricKind::Car.better(1.0, 2.0));
        assert!(MetricKind::Cdcg.better(2.0, 1.0));
    }

    #[test]
    fn streaming_matches_materialized() {
        let scores = DenseMatrix::from_fn(6, 5, |u, i| ((u * 7 + i * 3) % 5) as f64);
        let t = TernaryMatrix::from_dense(&(0..6).map(|u| (0..5).map(|i| ((u + i) % 3) as i8 - 1).collect::<Vec<i8>>()).collect::<Vec<_>>()).unwrap();
        let table = crate::ranking::ScoreTable(&scores);
        let streamed = evaluate_scorer(&table, &[&t, &t], &[1, 3]).unwrap();
        let direct = evaluate_tau(&Rankings::from_score_matrix(&scores), &t, &[1, 3], false).unwrap();
        assert_eq!(streamed[0][0], direct);
        assert_eq!(streamed[0][1], direct);
    }

    /// Literal per-user evaluation over dense arrays.
    fn naive(orders: &[Vec<u32>], t: &[Vec<i8>], cutoffs: &[usize]) -> (Vec<f64>, f64, f64) {
        let n_items = t[0].len();
        let n_users = orders.len() as f64;
        let mut cp = vec![0.0; cutoffs.len()];
        let (mut dcg, mut ar) = (0.0, 0.0);
        for (u, order) in orders.iter().enumerate() {
            for (pos, &i) in order.iter().enumerate() {
                let rank = (pos + 1) as f64;
                let v = t[u][i as usize] as f64;
                for (j, &n) in cutoffs.iter().enumerate() {
                    if pos < n {
                        cp[j] += v / n as f64 / n_users;
                    }
                }
                dcg += v / (1.0 + rank).log2() / n_users;
                ar += rank * v / n_items as f64 / n_users;
            }
        }
        (cp, dcg, ar)
    }

    fn instance() -> impl Strategy<Value = (Vec<Vec<u32>>, Vec<Vec<i8>>)> {
        (1..=10usize, 1..=10usize).prop_flat_map(|(n, m)| {
            let order = Just((0..m as u32).collect::<Vec<u32>>()).prop_shuffle();
            (
                proptest::collection::vec(order, n),
                proptest::collection::vec(proptest::collection::vec(-1i8..=1, m), n),
            )
        })
    }

    proptest! {
        #[test]
        fn matches_naive_reference((orders, t) in instance()) {
            let m = t[0].len();
            let cutoffs: Vec<usize> = [1, 2, 5].into_iter().filter(|&n| n <= m).collect();
            let r = Rankings {
                n_items: m,
                lists: orders.iter().map(|o| RankedList { items: o.clone(), scores: vec![0.0; m] }).collect(),
            };
            let rep = evaluate_tau(&r, &TernaryMatrix::from_dense(&t).unwrap(), &cutoffs, false).unwrap();
            let (cp, dcg, ar) = naive(&orders, &t, &cutoffs);
            for (j, n) in cutoffs.iter().enumerate() {
                prop_assert!((rep.cp_at[n] - cp[j]).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&rep.cp_at[n]));
            }
            prop_assert!((rep.cdcg - dcg).abs() < 1e-12);
            prop_assert!((rep.car - ar).abs() < 1e-12);
        }

        #[test]
        fn promoting_a_positive_item_never_hurts((orders, t) in instance(), pick in any::<prop::sample::Index>()) {
            let m = t[0].len();
            let order = &orders[0];
            let positions: Vec<usize> = (1..m).filter(|&p| t[0][order[p] as usize] == 1).collect();
            prop_assume!(!positions.is_empty());
            let p = positions[pick.index(positions.len())];
            let mut moved = order.clone();
            moved.swap(p, p - 1);
            let tau1 = TernaryMatrix::from_dense(&t[..1]).unwrap();
            let before = evaluate_tau(&rankings(&[order]), &tau1, &(1..=m).collect::<Vec<_>>(), false).unwrap();
            let after = evaluate_tau(&rankings(&[&moved]), &tau1, &(1..=m).collect::<Vec<_>>(), false).unwrap();
            // the displaced item may itself be positive, so only weak monotonicity holds
            for n in 1..=m {
                prop_assert!(after.cp_at[&n] >= before.cp_at[&n] - 1e-12);
            }
            prop_assert!(after.cdcg >= before.cdcg - 1e-12);
            prop_assert!(after.car <= before.car + 1e-12);
        }

        #[test]
        fn monotone_score_transform_is_invariant(raw in proptest::collection::vec(-5i32..5, 1..10), t in proptest::collection::vec(-1i8..=1, 10)) {
            let m = raw.len();
            let a = DenseMatrix::from_vec(1, m, raw.iter().map(|&x| x as f64).collect()).unwrap();
            let b = a.map(|x| (x * 0.3).exp() + 2.0);
            let tau1 = TernaryMatrix::from_dense(&[&t[..m]]).unwrap();
            let ra = evaluate_tau(&Rankings::from_score_matrix(&a), &tau1, &[1], false).unwrap();
            let rb = evaluate_tau(&Rankings::from_score_matrix(&b), &tau1, &[1], false).unwrap();
            prop_assert_eq!(ra, rb);
        }
    }
}
