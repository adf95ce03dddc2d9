//! Per-user ranked lists and the scorer abstraction shared by every ranker.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::data::{DenseMatrix, IdMap};
use crate::error::{Error, Result};

/// Item order for `scores`: descending score, ascending item index on ties.
pub fn order_by_score(scores: &[f64], order: &mut Vec<u32>) {
    order.clear();
    order.extend(0..scores.len() as u32);
    order.sort_unstable_by(|&a, &b| {
        scores[b as usize]
            .total_cmp(&scores[a as usize])
            .then(a.cmp(&b))
    });
}

/// A user's full ranking; `items[0]` has rank 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub items: Vec<u32>,
    /// Score of `items[p]` at position `p`.
    pub scores: Vec<f64>,
}

impl RankedList {
    pub fn from_scores(scores: &[f64]) -> Self {
        let mut items = Vec::with_capacity(scores.len());
        order_by_score(scores, &mut items);
        let scores = items.iter().map(|&i| scores[i as usize]).collect();
        Self { items, scores }
    }

    /// 1-based rank of each item, indexed by item.
    pub fn ranks(&self) -> Vec<u32> {
        let mut ranks = vec![0u32; self.items.len()];
        for (pos, &i) in self.items.iter().enumerate() {
            ranks[i as usize] = pos as u32 + 1;
        }
        ranks
    }
}

/// Ranked lists for every user over the same item universe.
#[derive(Debug, Clone, PartialEq)]
pub struct Rankings {
    pub n_items: usize,
    pub lists: Vec<RankedList>,
}

impl Rankings {
    pub fn n_users(&self) -> usize {
        self.lists.len()
    }

    pub fn list(&self, user: usize) -> &RankedList {
        &self.lists[user]
    }

    /// Ranks every row of a dense score matrix.
    pub fn from_score_matrix(scores: &DenseMatrix) -> Self {
        Self {
            n_items: scores.n_cols(),
            lists: (0..scores.n_rows())
                .into_par_iter()
                .map(|u| RankedList::from_scores(scores.row(u)))
                .collect(),
        }
    }

    /// Writes `user,item,rank,<score_column>` rows, users ascending and items
    /// in rank order. External ids are used when dictionaries are given.
    pub fn write_csv(
        &self,
        path: impl AsRef<Path>,
        score_column: &str,
        users: Option<&IdMap>,
        items: Option<&IdMap>,
    ) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(w, "user,item,rank,{score_column}").map_err(io)?;
        for (u, list) in self.lists.iter().enumerate() {
            let user = users.map_or_else(|| u.to_string(), |m| m.id(u).to_owned());
            for (pos, (&i, &s)) in list.items.iter().zip(&list.scores).enumerate() {
                match items {
                    Some(m) => writeln!(w, "{user},{},{},{s}", m.id(i as usize), pos + 1),
                    None => writeln!(w, "{user},{i},{},{s}", pos + 1),
                }
                .map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    /// Reads a ranked-list CSV written by [`Rankings::write_csv`]. Each user's
    /// ranks must be a permutation of `1..=n_items`.
    pub fn read_csv(
        path: impl AsRef<Path>,
        n_users: usize,
        n_items: usize,
        users: Option<&IdMap>,
        items: Option<&IdMap>,
    ) -> Result<Self> {
        let path = path.as_ref();
        let rows = read_fourth_column(path, users, items, n_users, n_items, "rank")?;
        let mut slots: Vec<Vec<Option<(u32, f64)>>> = vec![vec![None; n_items]; n_users];
        for (line, u, i, rank, score) in rows {
            let rank: usize = rank
                .parse()
                .ok()
                .filter(|&r| (1..=n_items).contains(&r))
                .ok_or_else(|| Error::parse(path, line, format!("bad rank {rank:?}")))?;
            let score: f64 = score
                .parse()
                .map_err(|_| Error::parse(path, line, format!("bad score {score:?}")))?;
            let slot = &mut slots[u][rank - 1];
            if slot.is_some() {
                return Err(Error::parse(path, line, format!("rank {rank} repeated for user {u}")));
            }
            *slot = Some((i as u32, score));
        }
        let mut missing_users = Vec::new();
        let mut lists = Vec::with_capacity(n_users);
        for (u, row) in slots.into_iter().enumerate() {
            if row.iter().any(Option::is_none) {
                missing_users.push(u);
                continue;
            }
            let (items, scores): (Vec<u32>, Vec<f64>) = row.into_iter().flatten().unzip();
            let mut seen = vec![false; n_items];
            for &i in &items {
                if std::mem::replace(&mut seen[i as usize], true) {
                    return Err(Error::parse(path, 0, format!("item {i} ranked twice for user {u}")));
                }
            }
            lists.push(RankedList { items, scores });
        }
        if !missing_users.is_empty() {
            return Err(Error::Coverage {
                users: missing_users,
                items: Vec::new(),
            });
        }
        Ok(Self { n_items, lists })
    }
}

type Row = (usize, usize, usize, String, String);

/// Reads `user,item,<third>[,<fourth>]` rows, mapping ids to indices.
fn read_fourth_column(
    path: &Path,
    users: Option<&IdMap>,
    items: Option<&IdMap>,
    n_users: usize,
    n_items: usize,
    third: &str,
) -> Result<Vec<Row>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::parse(path, 1, format!("{other:?}")),
        })?;
    let headers = reader.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "user" || &headers[1] != "item" || &headers[2] != third {
        return Err(Error::parse(
            path,
            1,
            format!("header must start with user,item,{third}"),
        ));
    }
    let resolve = |map: Option<&IdMap>, raw: &str, bound: usize, line: usize, what: &str| {
        let idx = match map {
            Some(m) => m.get(raw),
            None => raw.parse::<usize>().ok(),
        };
        idx.filter(|&i| i < bound)
            .ok_or_else(|| Error::parse(path, line, format!("unknown {what} {raw:?}")))
    };
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != headers.len() {
            return Err(Error::parse(path, line, "wrong number of fields"));
        }
        let u = resolve(users, rec[0].trim(), n_users, line, "user")?;
        let i = resolve(items, rec[1].trim(), n_items, line, "item")?;
        let fourth = rec.get(3).unwrap_or("").trim().to_owned();
        out.push((line, u, i, rec[2].trim().to_owned(), fourth));
    }
    Ok(out)
}

/// Reads an external `user,item,score` file into a dense score matrix.
/// Every (user, item) pair must be scored exactly once.
pub fn read_score_file(
    path: impl AsRef<Path>,
    n_users: usize,
    n_items: usize,
    users: Option<&IdMap>,
    items: Option<&IdMap>,
) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let rows = read_fourth_column(path, users, items, n_users, n_items, "score")?;
    let mut scores = DenseMatrix::filled(n_users, n_items, f64::NAN);
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    for (line, u, i, raw, _) in rows {
        let s: f64 = raw
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| Error::parse(path, line, format!("bad score {raw:?}")))?;
        if seen.insert((u, i), line).is_some() {
            return Err(Error::parse(path, line, format!("pair ({u}, {i}) scored twice")));
        }
        scores.set(u, i, s);
    }
    let mut missing_users = Vec::new();
    let mut missing_items = Vec::new();
    for u in 0..n_users {
        let row = scores.row(u);
        if row.iter().any(|s| s.is_nan()) {
            missing_users.push(u);
            missing_items.extend(row.iter().enumerate().filter(|(_, s)| s.is_nan()).map(|(i, _)| i));
        }
    }
    if !missing_users.is_empty() {
        missing_items.sort_unstable();
        missing_items.dedup();
        return Err(Error::Coverage {
            users: missing_users,
            items: missing_items,
        });
    }
    Ok(scores)
}

/// Anything that can score every item for a user.
///
/// A scorer may produce several score variants per user from one shared
/// computation (for example one per shrinkage value); `out` holds one
/// `n_items`-long buffer per variant.
pub trait UserScorer: Sync {
    fn n_users(&self) -> usize;
    fn n_items(&self) -> usize;
    fn n_variants(&self) -> usize {
        1
    }
    fn score_user(&self, user: usize, out: &mut [Vec<f64>]);
}

/// Scores every user and ranks variant `variant`.
pub fn rank_all(scorer: &dyn UserScorer, variant: usize) -> Rankings {
    let n_items = scorer.n_items();
    let lists = (0..scorer.n_users())
        .into_par_iter()
        .map_init(
            || vec![vec![0.0; n_items]; scorer.n_variants()],
            |buf, u| {
                scorer.score_user(u, buf);
                RankedList::from_scores(&buf[variant])
            },
        )
        .collect();
    Rankings { n_items, lists }
}

/// A fixed score table, for example an external model's output.
pub struct ScoreTable<'a>(pub &'a DenseMatrix);

impl UserScorer for ScoreTable<'_> {
    fn n_users(&self) -> usize {
        self.0.n_rows()
    }
    fn n_items(&self) -> usize {
        self.0.n_cols()
    }
    fn score_user(&self, user: usize, out: &mut [Vec<f64>]) {
        out[0].copy_from_slice(self.0.row(user));
    }
}
