//! Plain matching estimator: match each subject to its nearest treated and
//! control subjects by covariate cosine, estimate the missing potential
//! outcome as the matched mean and average the per-subject effects.

use std::path::Path;

use serde::Serialize;

use crate::data::SparseBinaryMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectPanel {
    pub outcomes: Vec<bool>,
    pub treatments: Vec<bool>,
    /// One binary covariate row per subject.
    pub covariates: SparseBinaryMatrix,
}

impl SubjectPanel {
    pub fn new(outcomes: Vec<bool>, treatments: Vec<bool>, covariates: SparseBinaryMatrix) -> Result<Self> {
        if outcomes.len() != treatments.len() || covariates.n_rows() != outcomes.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} outcomes, {} treatments, {} covariate rows",
                outcomes.len(),
                treatments.len(),
                covariates.n_rows()
            )));
        }
        Ok(Self { outcomes, treatments, covariates })
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchedSets {
    pub treated: Vec<Vec<usize>>,
    pub control: Vec<Vec<usize>>,
}

fn cosine_rows(x: &SparseBinaryMatrix, a: usize, b: usize) -> f64 {
    let (ra, rb) = (x.row(a), x.row(b));
    if ra.is_empty() || rb.is_empty() {
        return 0.0;
    }
    let (mut p, mut q, mut common) = (0, 0, 0usize);
    while p < ra.len() && q < rb.len() {
        match ra[p].cmp(&rb[q]) {
            std::cmp::Ordering::Less => p += 1,
            std::cmp::Ordering::Greater => q += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                p += 1;
                q += 1;
            }
        }
    }
    common as f64 / ((ra.len() * rb.len()) as f64).sqrt()
}

fn nearest(panel: &SubjectPanel, n: usize, group: &[usize], m: usize) -> Vec<usize> {
    let mut scored: Vec<(usize, f64)> = group.iter().map(|&j| (j, cosine_rows(&panel.covariates, n, j))).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.into_iter().take(m).map(|(j, _)| j).collect()
}

/// The `m` most similar treated and control subjects of every subject, ties
/// by ascending index. A subject is a candidate within its own group.
pub fn match_subjects(panel: &SubjectPanel, m: usize) -> Result<MatchedSets> {
    if m == 0 {
        return Err(Error::InvalidParameter("matches per group must be >= 1".into()));
    }
    let treated: Vec<usize> = (0..panel.len()).filter(|&n| panel.treatments[n]).collect();
    let control: Vec<usize> = (0..panel.len()).filter(|&n| !panel.treatments[n]).collect();
    if treated.is_empty() {
        return Err(Error::EmptyGroup("treated"));
    }
    if control.is_empty() {
        return Err(Error::EmptyGroup("control"));
    }
    Ok(MatchedSets {
        treated: (0..panel.len()).map(|n| nearest(panel, n, &treated, m)).collect(),
        control: (0..panel.len()).map(|n| nearest(panel, n, &control, m)).collect(),
    })
}

/// Matched-mean estimates of both potential outcomes for every subject.
pub fn estimate_counterfactuals(panel: &SubjectPanel, matches: &MatchedSets) -> Result<(Vec<f64>, Vec<f64>)> {
    if matches.treated.len() != panel.len() || matches.control.len() != panel.len() {
        return Err(Error::DimensionMismatch(format!(
            "matched sets for {} subjects, panel has {}",
            matches.treated.len(),
            panel.len()
        )));
    }
    let mean = |set: &[usize], n: usize, group: &'static str| -> Result<f64> {
        if set.is_empty() {
            return Err(Error::InvalidParameter(format!("subject {n} has no {group} matches")));
        }
        if let Some(&j) = set.iter().find(|&&j| j >= panel.len()) {
            return Err(Error::InvalidParameter(format!("subject {n} matched to unknown subject {j}")));
        }
        Ok(set.iter().filter(|&&j| panel.outcomes[j]).count() as f64 / set.len() as f64)
    };
    let y_t = (0..panel.len()).map(|n| mean(&matches.treated[n], n, "treated")).collect::<Result<_>>()?;
    let y_c = (0..panel.len()).map(|n| mean(&matches.control[n], n, "control")).collect::<Result<_>>()?;
    Ok((y_t, y_c))
}

/// `tau_n = Z_n (Y_n - y_c_n) + (1 - Z_n)(y_t_n - Y_n)`.
pub fn per_subject_effect(panel: &SubjectPanel, y_t_hat: &[f64], y_c_hat: &[f64]) -> Result<Vec<f64>> {
    if y_t_hat.len() != panel.len() || y_c_hat.len() != panel.len() {
        return Err(Error::DimensionMismatch("estimates do not cover the panel".into()));
    }
    Ok((0..panel.len())
        .map(|n| {
            let y = panel.outcomes[n] as u8 as f64;
            if panel.treatments[n] {
                y - y_c_hat[n]
            } else {
                y_t_hat[n] - y
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Aggregate {
    Ate,
    Att,
}

pub fn aggregate(tau_hat: &[f64], mode: Aggregate, treatments: &[bool]) -> Result<f64> {
    if tau_hat.len() != treatments.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} effects for {} subjects",
            tau_hat.len(),
            treatments.len()
        )));
    }
    let picked: Vec<f64> = match mode {
        Aggregate::Ate => tau_hat.to_vec(),
        Aggregate::Att => tau_hat.iter().zip(treatments).filter(|(_, &z)| z).map(|(&t, _)| t).collect(),
    };
    if picked.is_empty() {
        return Err(match mode {
            Aggregate::Ate => Error::EmptyGroup("subjects"),
            Aggregate::Att => Error::EmptyGroup("treated"),
        });
    }
    Ok(picked.iter().sum::<f64>() / picked.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchingResult {
    pub y_t_hat: Vec<f64>,
    pub y_c_hat: Vec<f64>,
    pub tau_hat: Vec<f64>,
    pub ate: f64,
    pub att: f64,
}

/// Matching, estimation and both aggregates in one call.
pub fn estimate(panel: &SubjectPanel, m: usize) -> Result<MatchingResult> {
    let matches = match_subjects(panel, m)?;
    let (y_t_hat, y_c_hat) = estimate_counterfactuals(panel, &matches)?;
    let tau_hat = per_subject_effect(panel, &y_t_hat, &y_c_hat)?;
    Ok(MatchingResult {
        ate: aggregate(&tau_hat, Aggregate::Ate, &panel.treatments)?,
        att: aggregate(&tau_hat, Aggregate::Att, &panel.treatments)?,
        y_t_hat,
        y_c_hat,
        tau_hat,
    })
}

fn parse_flag(path: &Path, line: usize, field: &str, s: &str) -> Result<bool> {
    match s.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::parse(path, line, format!("{field} must be 0 or 1, got {other:?}"))),
    }
}

/// Reads a panel from CSV with header `id,z,y,<covariate columns...>`.
/// Returns subject ids alongside the panel.
pub fn read_panel(path: impl AsRef<Path>) -> Result<(Vec<String>, SubjectPanel)> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::parse(path, 1, format!("{other:?}")),
        })?;
    let header = reader.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(path, 1, format!("missing column {name:?}")))
    };
    let (id_col, z_col, y_col) = (col("id")?, col("z")?, col("y")?);
    let cov_cols: Vec<usize> = (0..header.len()).filter(|c| ![id_col, z_col, y_col].contains(c)).collect();
    let (mut ids, mut z, mut y, mut rows) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| Error::parse(path, line, e.to_string()))?;
        if record.len() != header.len() {
            return Err(Error::parse(path, line, format!("expected {} fields, got {}", header.len(), record.len())));
        }
        ids.push(record[id_col].to_string());
        z.push(parse_flag(path, line, "z", &record[z_col])?);
        y.push(parse_flag(path, line, "y", &record[y_col])?);
        let mut row: Vec<usize> = Vec::new();
        for (j, &c) in cov_cols.iter().enumerate() {
            if parse_flag(path, line, &header[c], &record[c])? {
                row.push(j);
            }
        }
        rows.push(row);
    }
    let covariates = SparseBinaryMatrix::from_rows(cov_cols.len(), &rows)?;
    Ok((ids, SubjectPanel::new(y, z, covariates)?))
}

/// Writes `subjects.csv` (per-subject estimates) and `summary.csv`
/// (ATE and ATT) into `dir`.
pub fn write_result(dir: impl AsRef<Path>, ids: &[String], panel: &SubjectPanel, result: &MatchingResult) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("subjects.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["id", "z", "y", "y_t_hat", "y_c_hat", "tau_hat"])?;
    for (n, id) in ids.iter().enumerate().take(panel.len()) {
        w.write_record([
            id.clone(),
            (panel.treatments[n] as u8).to_string(),
            (panel.outcomes[n] as u8).to_string(),
            result.y_t_hat[n].to_string(),
            result.y_c_hat[n].to_string(),
            result.tau_hat[n].to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["estimand", "value"])?;
    w.write_record(["ATE".to_string(), result.ate.to_string()])?;
    w.write_record(["ATT".to_string(), result.att.to_string()])?;
    w.flush().map_err(|e| Error::io(&path, e))
}
