//! Experiment driver: grid evaluation with validation-based selection,
//! sensitivity sweeps and result tables.
//!
//! Every ranker is fit on the training split. Each grid point is scored once
//! and evaluated against all validation and test effect matrices in the same
//! pass; the configuration chosen for a metric is the first grid point (in
//! declared order) with the best validation value, and its test value is
//! what gets reported.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineMethod, NeighborhoodScorer, PopScorer, RandomScorer};
use crate::causal::{method_name, CausalScorer};
use crate::data::{read_dense, DatasetSplits, DenseMatrix, TernaryMatrix};
use crate::datagen::{build_priors, generate_splits, synth_priors, GenParams};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_scorer, CompensatedSum, MetricKind, MetricReport};
use crate::ranking::{read_score_file, ScoreTable, UserScorer};
use crate::rng::derive_seed;
use crate::similarity::{Orientation, SimilarityConfig, SimilarityIndex, Source};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "CAUSAL_NBR_WORKERS";

/// Sizes the global thread pool from [`WORKERS_ENV`] when it is set.
pub fn configure_workers() -> Result<()> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| Error::InvalidParameter(format!("{WORKERS_ENV} must be a positive integer, got {raw:?}")))?;
    // a pool that is already initialized keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Causal {
        orientation: Orientation,
        source: Source,
        mix_own: bool,
    },
    Baseline(BaselineMethod),
}

impl Method {
    pub const CUBN_O: Method = Method::Causal {
        orientation: Orientation::User,
        source: Source::Outcomes,
        mix_own: true,
    };

    fn uses_neighbors(self) -> bool {
        matches!(
            self,
            Method::Causal { .. } | Method::Baseline(BaselineMethod::Ubn | BaselineMethod::Ibn)
        )
    }

    fn uses_shrinkage(self) -> bool {
        matches!(self, Method::Causal { mix_own: true, .. })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Method::Causal {
                orientation,
                source,
                mix_own,
            } => f.write_str(&method_name(orientation, source, mix_own)),
            Method::Baseline(b) => f.write_str(b.name()),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        let baseline = match upper.as_str() {
            "RANDOM" => Some(BaselineMethod::Random),
            "POP" => Some(BaselineMethod::Pop),
            "UBN" => Some(BaselineMethod::Ubn),
            "IBN" => Some(BaselineMethod::Ibn),
            _ => None,
        };
        if let Some(b) = baseline {
            return Ok(Method::Baseline(b));
        }
        let unknown = || Error::InvalidParameter(format!("unknown method {s:?}"));
        let (rest, mix_own) = match upper.strip_suffix("-WOM") {
            Some(r) => (r, false),
            None => (upper.as_str(), true),
        };
        let (orientation, source) = match rest {
            "CUBN-O" => (Orientation::User, Source::Outcomes),
            "CUBN-T" => (Orientation::User, Source::Treatments),
            "CIBN-O" => (Orientation::Item, Source::Outcomes),
            "CIBN-T" => (Orientation::Item, Source::Treatments),
            _ => return Err(unknown()),
        };
        Ok(Method::Causal {
            orientation,
            source,
            mix_own,
        })
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grids {
    /// Neighbor counts; values above the population minus one are dropped.
    pub k: Vec<usize>,
    pub alpha: Vec<f64>,
    /// Shrinkage, applied to both groups.
    pub beta: Vec<f64>,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            k: vec![10, 30, 100, 300, 1000, 3000, 10000],
            alpha: vec![0.33, 0.5, 1.0, 2.0, 3.0, 5.0],
            beta: vec![0.0, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0],
        }
    }
}

impl Grids {
    pub fn validate(&self) -> Result<()> {
        if self.k.is_empty() || self.alpha.is_empty() || self.beta.is_empty() {
            return Err(Error::InvalidParameter("grids must be nonempty".into()));
        }
        if let Some(a) = self.alpha.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidParameter(format!("alpha must be > 0, got {a}")));
        }
        if let Some(b) = self.beta.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
            return Err(Error::InvalidParameter(format!("beta must be >= 0, got {b}")));
        }
        Ok(())
    }

    /// Neighbor counts usable with `n_rows` rows, in declared order.
    pub fn usable_k(&self, n_rows: usize) -> Result<Vec<usize>> {
        let mut seen = BTreeSet::new();
        let ks: Vec<usize> = self
            .k
            .iter()
            .copied()
            .filter(|&k| k < n_rows && seen.insert(k))
            .collect();
        if ks.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "no neighbor count in {:?} fits {n_rows} rows",
                self.k
            )));
        }
        Ok(ks)
    }
}

/// Scores of an externally trained model, ranked and evaluated like any
/// other method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalScores {
    pub name: String,
    /// CSV with columns `user,item,score`.
    pub scores: PathBuf,
}

/// Semi-synthetic data source: rating and observation predictions from
/// files (dense triplet format) or from [`synth_priors`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(default)]
    pub n_users: usize,
    #[serde(default)]
    pub n_items: usize,
    #[serde(default)]
    pub r_hat: Option<PathBuf>,
    #[serde(default)]
    pub o_hat: Option<PathBuf>,
    #[serde(default)]
    pub params: GenParams,
}

impl GeneratorSpec {
    /// Rating and observation predictions, read or synthesized from `seed`.
    pub fn predictions(&self, seed: u64) -> Result<(DenseMatrix, DenseMatrix)> {
        match (&self.r_hat, &self.o_hat) {
            (Some(r), Some(o)) => Ok((read_dense(r)?, read_dense(o)?)),
            (None, None) => {
                if self.n_users == 0 || self.n_items == 0 {
                    return Err(Error::InvalidParameter("generator needs n_users and n_items".into()));
                }
                Ok(synth_priors(self.n_users, self.n_items, derive_seed(seed, "priors", 0)))
            }
            _ => Err(Error::InvalidParameter("r_hat and o_hat must be given together".into())),
        }
    }

    /// Priors and sampled splits under `params`.
    pub fn generate(&self, predictions: &(DenseMatrix, DenseMatrix), params: &GenParams, seed: u64) -> Result<DatasetSplits> {
        let (priors, resolved) = build_priors(&predictions.0, &predictions.1, params)?;
        generate_splits(&priors, &resolved, seed)
    }
}

fn default_methods() -> Vec<Method> {
    ["CUBN-O", "CUBN-T", "CIBN-O", "CIBN-T", "UBN", "IBN", "Random", "Pop"]
        .iter()
        .map(|m| m.parse().expect("known method"))
        .collect()
}

fn default_metrics() -> Vec<MetricKind> {
    vec![MetricKind::CpAt(10), MetricKind::CpAt(100), MetricKind::Cdcg, MetricKind::Car]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<MetricKind>,
    /// Directory written by [`DatasetSplits::save`].
    #[serde(default)]
    pub dataset_dir: Option<PathBuf>,
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
    #[serde(default)]
    pub external: Vec<ExternalScores>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            methods: default_methods(),
            grids: Grids::default(),
            metrics: default_metrics(),
            dataset_dir: None,
            generator: None,
            external: Vec::new(),
            seed: 0,
        }
    }
}

impl SweepSpec {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        crate::data::read_json(path.as_ref())
    }

    pub fn validate(&self) -> Result<()> {
        self.grids.validate()?;
        if self.metrics.is_empty() {
            return Err(Error::InvalidParameter("no metrics requested".into()));
        }
        if self.methods.is_empty() && self.external.is_empty() {
            return Err(Error::InvalidParameter("no methods requested".into()));
        }
        match (&self.dataset_dir, &self.generator) {
            (Some(_), Some(_)) => Err(Error::InvalidParameter(
                "give either dataset_dir or generator, not both".into(),
            )),
            (None, None) => Err(Error::InvalidParameter("no dataset_dir or generator given".into())),
            (_, Some(g)) => g.params.validate(),
            _ => Ok(()),
        }
    }

    /// The splits this spec evaluates on.
    pub fn load_data(&self) -> Result<DatasetSplits> {
        self.validate()?;
        match (&self.dataset_dir, &self.generator) {
            (Some(dir), _) => DatasetSplits::load(dir),
            (None, Some(g)) => g.generate(&g.predictions(self.seed)?, &g.params, self.seed),
            (None, None) => unreachable!("validated"),
        }
    }

    fn cutoffs(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self
            .metrics
            .iter()
            .filter_map(|m| match m {
                MetricKind::CpAt(n) => Some(*n),
                _ => None,
            })
            .collect();
        set.into_iter().collect()
    }
}

/// Hyperparameters of one grid point; absent values do not apply.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PointConfig {
    pub k: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

impl fmt::Display for PointConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(k) = self.k {
            parts.push(format!("k={k}"));
        }
        if let Some(a) = self.alpha {
            parts.push(format!("alpha={a}"));
        }
        if let Some(b) = self.beta {
            parts.push(format!("beta={b}"));
        }
        if parts.is_empty() {
            f.write_str("-")
        } else {
            f.write_str(&parts.join(" "))
        }
    }
}

/// Metrics of one grid point, averaged over the validation and test samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResult {
    pub config: PointConfig,
    pub validation: MetricReport,
    pub test: MetricReport,
}

fn average_reports(reports: &[MetricReport]) -> MetricReport {
    let mean = |f: &dyn Fn(&MetricReport) -> f64| {
        let mut acc = CompensatedSum::default();
        for r in reports {
            acc.add(f(r));
        }
        acc.value() / reports.len() as f64
    };
    MetricReport {
        cp_at: reports[0].cp_at.keys().map(|&n| (n, mean(&|r| r.cp_at[&n]))).collect(),
        cdcg: mean(&|r| r.cdcg),
        car: mean(&|r| r.car),
        per_user: None,
    }
}

struct Evaluation<'a> {
    taus: Vec<&'a TernaryMatrix>,
    n_validation: usize,
    cutoffs: &'a [usize],
}

impl<'a> Evaluation<'a> {
    fn new(splits: &'a DatasetSplits, cutoffs: &'a [usize]) -> Result<Self> {
        if splits.validation.is_empty() {
            return Err(Error::MissingSplit("validation".into()));
        }
        if splits.test.is_empty() {
            return Err(Error::MissingSplit("test".into()));
        }
        let shape = splits.train.y.shape();
        let taus: Vec<&TernaryMatrix> = splits.validation.iter().chain(&splits.test).map(|d| &d.tau).collect();
        if let Some(t) = taus.iter().find(|t| t.shape() != shape) {
            return Err(Error::DimensionMismatch(format!(
                "train split is {shape:?}, an evaluation split is {:?}",
                t.shape()
            )));
        }
        Ok(Self {
            taus,
            n_validation: splits.validation.len(),
            cutoffs,
        })
    }

    /// One result per scorer variant.
    fn run(&self, scorer: &dyn UserScorer) -> Result<Vec<(MetricReport, MetricReport)>> {
        Ok(evaluate_scorer(scorer, &self.taus, self.cutoffs)?
            .into_iter()
            .map(|r| {
                let (val, test) = r.split_at(self.n_validation);
                (average_reports(val), average_reports(test))
            })
            .collect())
    }
}

/// Evaluates `method` at every grid point, in declared grid order (k, then
/// alpha, then beta).
pub fn evaluate_grid(
    method: Method,
    splits: &DatasetSplits,
    grids: &Grids,
    cutoffs: &[usize],
    seed: u64,
) -> Result<Vec<GridResult>> {
    grids.validate()?;
    let eval = Evaluation::new(splits, cutoffs)?;
    let (y, z) = (&splits.train.y, &splits.train.z);
    let mut out = Vec::new();
    match method {
        Method::Baseline(BaselineMethod::Random) => {
            let scorer = RandomScorer::new(y.n_rows(), y.n_cols(), derive_seed(seed, "random", 0));
            push_single(&mut out, PointConfig::default(), eval.run(&scorer)?);
        }
        Method::Baseline(BaselineMethod::Pop) => {
            push_single(&mut out, PointConfig::default(), eval.run(&PopScorer::new(y))?);
        }
        _ => {
            let (orientation, source, mix_own) = match method {
                Method::Causal {
                    orientation,
                    source,
                    mix_own,
                } => (orientation, source, mix_own),
                Method::Baseline(BaselineMethod::Ubn) => (Orientation::User, Source::Outcomes, false),
                _ => (Orientation::Item, Source::Outcomes, false),
            };
            let sim = SimilarityConfig {
                k: 0,
                alpha: 1.0,
                source,
                orientation,
            };
            let matrix = sim.source_matrix(y, z);
            let ks = grids.usable_k(matrix.n_rows())?;
            let index = SimilarityIndex::build(&matrix, *ks.iter().max().expect("nonempty"))?;
            for &k in &ks {
                for &alpha in &grids.alpha {
                    let sets = index.neighbor_sets(k, alpha, mix_own)?;
                    let config = PointConfig {
                        k: Some(k),
                        alpha: Some(alpha),
                        beta: None,
                    };
                    if let Method::Causal { .. } = method {
                        let betas = if mix_own {
                            grids.beta.iter().map(|&b| (b, b)).collect()
                        } else {
                            vec![(0.0, 0.0)]
                        };
                        let scorer = CausalScorer::new(y, z, &sets, orientation, mix_own, betas)?;
                        for (j, (validation, test)) in eval.run(&scorer)?.into_iter().enumerate() {
                            let beta = mix_own.then(|| grids.beta[j]);
                            out.push(GridResult {
                                config: PointConfig { beta, ..config },
                                validation,
                                test,
                            });
                        }
                    } else {
                        let scorer = NeighborhoodScorer::new(y, &sets, orientation)?;
                        push_single(&mut out, config, eval.run(&scorer)?);
                    }
                }
            }
        }
    }
    Ok(out)
}

fn push_single(out: &mut Vec<GridResult>, config: PointConfig, mut reports: Vec<(MetricReport, MetricReport)>) {
    let (validation, test) = reports.remove(0);
    out.push(GridResult {
        config,
        validation,
        test,
    });
}

/// Evaluates externally produced scores (a single grid point).
pub fn evaluate_external(ext: &ExternalScores, splits: &DatasetSplits, cutoffs: &[usize]) -> Result<Vec<GridResult>> {
    let eval = Evaluation::new(splits, cutoffs)?;
    let train = &splits.train;
    let scores = read_score_file(
        &ext.scores,
        train.n_users(),
        train.n_items(),
        train.user_ids.as_ref(),
        train.item_ids.as_ref(),
    )?;
    let mut out = Vec::new();
    push_single(&mut out, PointConfig::default(), eval.run(&ScoreTable(&scores))?);
    Ok(out)
}

/// Index of the first grid point with the best validation value of `metric`
/// among `candidates`.
pub fn select(results: &[GridResult], candidates: impl IntoIterator<Item = usize>, metric: MetricKind) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in candidates {
        let v = metric
            .value(&results[i].validation)
            .ok_or_else(|| Error::InvalidParameter(format!("{metric} was not computed")))?;
        if best.is_none_or(|(_, b)| metric.better(v, b)) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::InvalidParameter("no grid points to select from".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub method: String,
    pub metric: MetricKind,
    pub config: PointConfig,
    /// Validation value that selected `config`.
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
    /// Time spent evaluating the method's grid; not written to output files.
    #[serde(skip)]
    pub wall_time: Duration,
}

fn records_for(
    name: &str,
    results: &[GridResult],
    metrics: &[MetricKind],
    seed: u64,
    wall_time: Duration,
) -> Result<Vec<RunRecord>> {
    metrics
        .iter()
        .map(|&metric| {
            let i = select(results, 0..results.len(), metric)?;
            let r = &results[i];
            Ok(RunRecord {
                method: name.to_string(),
                metric,
                config: r.config,
                validation: metric.value(&r.validation).expect("selected"),
                test: metric.value(&r.test).expect("computed"),
                seed,
                wall_time,
            })
        })
        .collect()
}

/// Runs every method of `spec` on `splits`: one record per method and
/// metric, methods in declared order followed by external score files.
pub fn run_on_splits(spec: &SweepSpec, splits: &DatasetSplits) -> Result<Vec<RunRecord>> {
    let cutoffs = spec.cutoffs();
    let mut records = Vec::new();
    for &method in &spec.methods {
        let start = Instant::now();
        let results = evaluate_grid(method, splits, &spec.grids, &cutoffs, spec.seed)?;
        let elapsed = start.elapsed();
        log::info!("{method}: {} grid points in {:.2?}", results.len(), elapsed);
        records.extend(records_for(&method.to_string(), &results, &spec.metrics, spec.seed, elapsed)?);
    }
    for ext in &spec.external {
        let start = Instant::now();
        let results = evaluate_external(ext, splits, &cutoffs)?;
        records.extend(records_for(&ext.name, &results, &spec.metrics, spec.seed, start.elapsed())?);
    }
    Ok(records)
}

/// Loads or generates the data of `spec`, then runs every method.
pub fn run_experiment(spec: &SweepSpec) -> Result<Vec<RunRecord>> {
    let splits = spec.load_data()?;
    run_on_splits(spec, &splits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sensitivity {
    /// Every neighbor count of the grid, other hyperparameters chosen per point.
    Neighbors,
    /// Every (alpha, beta) pair, neighbor count chosen per point; methods
    /// without shrinkage are skipped.
    AlphaBeta,
    /// Regenerates the data for each propensity exponent `b`.
    Unevenness { b: Vec<f64> },
    /// Regenerates the data for each mean number of logged recommendations.
    LogSize { targets: Vec<f64> },
}

impl Sensitivity {
    pub fn name(&self) -> &'static str {
        match self {
            Sensitivity::Neighbors => "neighbors",
            Sensitivity::AlphaBeta => "alpha_beta",
            Sensitivity::Unevenness { .. } => "unevenness",
            Sensitivity::LogSize { .. } => "log_size",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub metric: MetricKind,
    pub config: PointConfig,
    pub validation: f64,
    pub test: f64,
}

/// One sweep point of one method, with a cell per requested metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub sweep: String,
    pub point: String,
    pub method: String,
    /// Seed used to sample the point's data.
    pub seed: u64,
    pub cells: Vec<SweepCell>,
}

fn grouped_rows(
    kind: &Sensitivity,
    method: Method,
    results: &[GridResult],
    groups: Vec<(String, Vec<usize>)>,
    metrics: &[MetricKind],
    seed: u64,
) -> Result<Vec<SweepRow>> {
    groups
        .into_iter()
        .map(|(point, members)| {
            let cells = metrics
                .iter()
                .map(|&metric| {
                    let r = &results[select(results, members.iter().copied(), metric)?];
                    Ok(SweepCell {
                        metric,
                        config: r.config,
                        validation: metric.value(&r.validation).expect("computed"),
                        test: metric.value(&r.test).expect("computed"),
                    })
                })
                .collect::<Result<_>>()?;
            Ok(SweepRow {
                sweep: kind.name().into(),
                point,
                method: method.to_string(),
                seed,
                cells,
            })
        })
        .collect()
}

fn rows_from_records(kind: &Sensitivity, point: String, seed: u64, records: Vec<RunRecord>) -> Vec<SweepRow> {
    let mut rows: Vec<SweepRow> = Vec::new();
    for r in records {
        let cell = SweepCell {
            metric: r.metric,
            config: r.config,
            validation: r.validation,
            test: r.test,
        };
        match rows.last_mut() {
            Some(row) if row.method == r.method => row.cells.push(cell),
            _ => rows.push(SweepRow {
                sweep: kind.name().into(),
                point: point.clone(),
                method: r.method,
                seed,
                cells: vec![cell],
            }),
        }
    }
    rows
}

/// Runs one sensitivity experiment, producing a row per sweep point and
/// method.
pub fn sensitivity_sweep(kind: &Sensitivity, base: &SweepSpec) -> Result<Vec<SweepRow>> {
    base.validate()?;
    let cutoffs = base.cutoffs();
    match kind {
        Sensitivity::Neighbors | Sensitivity::AlphaBeta => {
            let splits = base.load_data()?;
            let mut rows = Vec::new();
            for &method in &base.methods {
                let eligible = match kind {
                    Sensitivity::Neighbors => method.uses_neighbors(),
                    _ => method.uses_shrinkage(),
                };
                if !eligible {
                    log::info!("{method} has no {} hyperparameters, skipped", kind.name());
                    continue;
                }
                let results = evaluate_grid(method, &splits, &base.grids, &cutoffs, base.seed)?;
                let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
                let key = |c: &PointConfig| match kind {
                    Sensitivity::Neighbors => format!("k={}", c.k.expect("neighbor method")),
                    _ => format!("alpha={} beta={}", c.alpha.expect("alpha"), c.beta.expect("beta")),
                };
                for (i, r) in results.iter().enumerate() {
                    let label = key(&r.config);
                    match groups.iter_mut().find(|(g, _)| *g == label) {
                        Some((_, members)) => members.push(i),
                        None => groups.push((label, vec![i])),
                    }
                }
                rows.extend(grouped_rows(kind, method, &results, groups, &base.metrics, base.seed)?);
            }
            Ok(rows)
        }
        Sensitivity::Unevenness { b: values } | Sensitivity::LogSize { targets: values } => {
            let generator = base.generator.as_ref().ok_or_else(|| {
                Error::InvalidParameter(format!("the {} sweep regenerates data and needs a generator", kind.name()))
            })?;
            if values.is_empty() {
                return Err(Error::InvalidParameter("no sweep points given".into()));
            }
            let predictions = generator.predictions(base.seed)?;
            let mut rows = Vec::new();
            for (j, &v) in values.iter().enumerate() {
                let mut params = generator.params.clone();
                let point = match kind {
                    Sensitivity::Unevenness { .. } => {
                        params.b = v;
                        format!("b={v}")
                    }
                    _ => {
                        params.target_recs_per_user = Some(v);
                        format!("target={v}")
                    }
                };
                let seed = derive_seed(base.seed, kind.name(), j as u64);
                let splits = generator.generate(&predictions, &params, seed)?;
                let spec = SweepSpec { seed, ..base.clone() };
                rows.extend(rows_from_records(kind, point, seed, run_on_splits(&spec, &splits)?));
            }
            Ok(rows)
        }
    }
}

fn metric_slug(m: MetricKind) -> String {
    m.to_string().to_ascii_lowercase().replace('@', "_at_")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}

fn aligned(rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row.iter().zip(&widths).map(|(cell, &w)| format!("{cell:<w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Writes `records.json` plus one CSV and one aligned-text table per metric
/// into `dir`, flagging the best test value (the minimum for CAR).
pub fn emit_tables(records: &[RunRecord], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::InvalidParameter("no records to tabulate".into()));
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let json = dir.join("records.json");
    write_file(&json, &(serde_json::to_string_pretty(records)? + "\n"))?;
    written.push(json);

    let mut metrics: Vec<MetricKind> = Vec::new();
    for r in records {
        if !metrics.contains(&r.metric) {
            metrics.push(r.metric);
        }
    }
    for metric in metrics {
        let rows: Vec<&RunRecord> = records.iter().filter(|r| r.metric == metric).collect();
        let best = rows
            .iter()
            .map(|r| r.test)
            .fold(None, |acc: Option<f64>, v| match acc {
                Some(b) if !metric.better(v, b) => Some(b),
                _ => Some(v),
            })
            .expect("nonempty");
        let slug = metric_slug(metric);

        let csv_path = dir.join(format!("table_{slug}.csv"));
        let mut w = csv::Writer::from_path(&csv_path)?;
        w.write_record(["method", "config", "validation", "test", "best"])?;
        for r in &rows {
            w.write_record([
                r.method.clone(),
                r.config.to_string(),
                r.validation.to_string(),
                r.test.to_string(),
                (r.test == best).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&csv_path, e))?;
        written.push(csv_path);

        let mut text = vec![vec![
            "method".to_string(),
            format!("{metric} (test)"),
            "validation".into(),
            "config".into(),
        ]];
        for r in &rows {
            let flag = if r.test == best { " *" } else { "" };
            text.push(vec![
                r.method.clone(),
                format!("{:.5}{flag}", r.test),
                format!("{:.5}", r.validation),
                r.config.to_string(),
            ]);
        }
        let txt_path = dir.join(format!("table_{slug}.txt"));
        write_file(&txt_path, &aligned(&text))?;
        written.push(txt_path);
    }
    Ok(written)
}

/// Writes sweep rows as CSV with one line per row and metric.
pub fn write_sweep_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sweep", "point", "method", "seed", "metric", "config", "validation", "test"])?;
    for row in rows {
        for c in &row.cells {
            w.write_record([
                row.sweep.clone(),
                row.point.clone(),
                row.method.clone(),
                row.seed.to_string(),
                c.metric.to_string(),
                c.config.to_string(),
                c.validation.to_string(),
                c.test.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(methods: &[&str], metrics: &[&str]) -> SweepSpec {
        SweepSpec {
            methods: methods.iter().map(|m| m.parse().unwrap()).collect(),
            grids: Grids {
                k: vec![5, 20, 1000],
                alpha: vec![0.5, 2.0],
                beta: vec![0.0, 3.0],
            },
            metrics: metrics.iter().map(|m| m.parse().unwrap()).collect(),
            generator: Some(GeneratorSpec {
                n_users: 40,
                n_items: 30,
                r_hat: None,
                o_hat: None,
                params: GenParams {
                    target_recs_per_user: Some(8.0),
                    ..GenParams::default()
                },
            }),
            seed: 3,
            ..SweepSpec::default()
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in ["CUBN-O", "CUBN-T", "CIBN-O", "CIBN-T-woM", "UBN", "IBN", "Random", "Pop"] {
            assert_eq!(m.parse::<Method>().unwrap().to_string(), m);
        }
        assert_eq!("cubn-o".parse::<Method>().unwrap(), Method::CUBN_O);
        assert!("CXBN-O".parse::<Method>().is_err());
    }

    #[test]
    fn k_grid_is_clamped() {
        let g = Grids::default();
        assert_eq!(g.usable_k(300).unwrap(), vec![10, 30, 100]);
        assert_eq!(g.usable_k(301).unwrap(), vec![10, 30, 100, 300]);
        assert!(g.usable_k(10).is_err());
    }

    #[test]
    fn spec_defaults_from_json() {
        let spec: SweepSpec = serde_json::from_str(r#"{"dataset_dir": "d"}"#).unwrap();
        assert_eq!(spec.grids, Grids::default());
        assert_eq!(spec.methods.len(), 8);
        assert_eq!(spec.metrics.len(), 4);
        assert!(spec.validate().is_ok());
        assert!(SweepSpec::default().validate().is_err());
    }

    #[test]
    fn selection_takes_first_best() {
        let report = |v: f64| MetricReport {
            cp_at: [(10, v)].into_iter().collect(),
            cdcg: v,
            car: v,
            per_user: None,
        };
        let rs: Vec<GridResult> = [0.1, 0.3, 0.3, 0.2]
            .iter()
            .map(|&v| GridResult {
                config: PointConfig::default(),
                validation: report(v),
                test: report(-v),
            })
            .collect();
        assert_eq!(select(&rs, 0..4, MetricKind::CpAt(10)).unwrap(), 1);
        assert_eq!(select(&rs, 0..4, MetricKind::Car).unwrap(), 0);
        assert_eq!(select(&rs, [3], MetricKind::Cdcg).unwrap(), 3);
        assert!(select(&rs, 0..4, MetricKind::CpAt(5)).is_err());
    }

    #[test]
    fn record_count_and_grid_sizes() {
        let spec = small_spec(&["CUBN-O", "UBN", "Pop"], &["CP@10", "CAR"]);
        let splits = spec.load_data().unwrap();
        let records = run_on_splits(&spec, &splits).unwrap();
        assert_eq!(records.len(), 6);
        let grid = evaluate_grid(Method::CUBN_O, &splits, &spec.grids, &[10], 0).unwrap();
        assert_eq!(grid.len(), 2 * 2 * 2);
        let wom = evaluate_grid("CIBN-T-woM".parse().unwrap(), &splits, &spec.grids, &[10], 0).unwrap();
        assert_eq!(wom.len(), 2 * 2);
        assert!(wom.iter().all(|r| r.config.beta.is_none()));
        for r in &records {
            let grid = evaluate_grid(r.method.parse().unwrap(), &splits, &spec.grids, &[10], spec.seed).unwrap();
            let found = grid.iter().find(|g| g.config == r.config).unwrap();
            assert_eq!(r.metric.value(&found.validation), Some(r.validation));
            for g in &grid {
                assert!(!r.metric.better(r.metric.value(&g.validation).unwrap(), r.validation));
            }
        }
    }

    #[test]
    fn sweeps_have_expected_shape() {
        let spec = small_spec(&["CUBN-O", "Pop"], &["CP@10"]);
        let rows = sensitivity_sweep(&Sensitivity::Neighbors, &spec).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].point, "k=5");
        let rows = sensitivity_sweep(&Sensitivity::AlphaBeta, &spec).unwrap();
        assert_eq!(rows.len(), 4);
        let rows = sensitivity_sweep(&Sensitivity::Unevenness { b: vec![0.5, 1.0, 2.0] }, &spec).unwrap();
        assert_eq!(rows.len(), 6);
        let seeds: BTreeSet<u64> = rows.iter().map(|r| r.seed).collect();
        assert_eq!(seeds.len(), 3);
        let again = sensitivity_sweep(&Sensitivity::Unevenness { b: vec![0.5, 1.0, 2.0] }, &spec).unwrap();
        assert_eq!(rows, again);
    }

    #[test]
    fn tables_flag_best() {
        let rec = |method: &str, metric: &str, test: f64| RunRecord {
            method: method.into(),
            metric: metric.parse().unwrap(),
            config: PointConfig::default(),
            validation: 0.0,
            test,
            seed: 0,
            wall_time: Duration::from_secs(1),
        };
        let dir = tempfile::tempdir().unwrap();
        let records = vec![rec("A", "CP@10", 0.1), rec("B", "CP@10", 0.3), rec("A", "CAR", 5.0), rec("B", "CAR", 2.0)];
        let files = emit_tables(&records, dir.path()).unwrap();
        assert_eq!(files.len(), 5);
        let cp = fs::read_to_string(dir.path().join("table_cp_at_10.csv")).unwrap();
        assert_eq!(cp, "method,config,validation,test,best\nA,-,0,0.1,false\nB,-,0,0.3,true\n");
        let car = fs::read_to_string(dir.path().join("table_car.csv")).unwrap();
        assert!(car.contains("B,-,0,2,true"));
        let txt = fs::read_to_string(dir.path().join("table_car.txt")).unwrap();
        assert!(txt.lines().nth(2).unwrap().contains("2.00000 *"));
        let single = tempfile::tempdir().unwrap();
        emit_tables(&records[..1], single.path()).unwrap();
        let one = fs::read_to_string(single.path().join("table_cp_at_10.csv")).unwrap();
        assert_eq!(one.lines().count(), 2);
        assert!(emit_tables(&[], single.path()).is_err());
    }
}
