//! Plain-text triplet files and dataset directories.
//!
//! Matrix files start with a `<n_rows> <n_cols>` line followed by one
//! `row col value` line per entry. Sparse matrices list only nonzero entries;
//! dense tables list every cell exactly once.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::log::IdMap;
use super::matrix::{DenseMatrix, SparseBinaryMatrix, TernaryMatrix};
use super::{GeneratedDataset, Split};
use crate::datagen::GenParams;
use crate::error::{Error, Result};

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

struct TripletReader {
    path: PathBuf,
    lines: std::iter::Enumerate<std::io::Lines<BufReader<File>>>,
    n_rows: usize,
    n_cols: usize,
}

impl TripletReader {
    fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let header = match lines.next() {
            Some((_, line)) => line.map_err(|e| Error::io(path, e))?,
            None => return Err(Error::parse(path, 1, "missing dimension header")),
        };
        let dims: Vec<&str> = header.split_whitespace().collect();
        let parse_dim = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::parse(path, 1, format!("bad dimension {s:?}")))
        };
        if dims.len() != 2 {
            return Err(Error::parse(path, 1, "header must be `<n_rows> <n_cols>`"));
        }
        Ok(Self {
            path: path.to_owned(),
            n_rows: parse_dim(dims[0])?,
            n_cols: parse_dim(dims[1])?,
            lines,
        })
    }

    /// Next `(line, row, col, raw value)`; blank lines are skipped.
    fn next_entry(&mut self) -> Result<Option<(usize, usize, usize, String)>> {
        for (idx, line) in self.lines.by_ref() {
            let line_no = idx + 1;
            let line = line.map_err(|e| Error::io(&self.path, e))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() != 3 {
                return Err(Error::parse(&self.path, line_no, "expected `row col value`"));
            }
            let index = |s: &str, bound: usize, what: &str| -> Result<usize> {
                let v: usize = s
                    .parse()
                    .map_err(|_| Error::parse(&self.path, line_no, format!("bad {what} {s:?}")))?;
                if v >= bound {
                    return Err(Error::parse(
                        &self.path,
                        line_no,
                        format!("{what} {v} out of range (< {bound})"),
                    ));
                }
                Ok(v)
            };
            let r = index(fields[0], self.n_rows, "row")?;
            let c = index(fields[1], self.n_cols, "column")?;
            return Ok(Some((line_no, r, c, fields[2].to_owned())));
        }
        Ok(None)
    }
}

pub fn write_binary(path: impl AsRef<Path>, m: &SparseBinaryMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{} {}", m.n_rows(), m.n_cols()).map_err(io)?;
    for (r, c) in m.iter() {
        writeln!(w, "{r} {c} 1").map_err(io)?;
    }
    finish(path, w)
}

pub fn read_binary(path: impl AsRef<Path>) -> Result<SparseBinaryMatrix> {
    let mut reader = TripletReader::open(path.as_ref())?;
    let mut rows = vec![Vec::new(); reader.n_rows];
    while let Some((line, r, c, v)) = reader.next_entry()? {
        match v.as_str() {
            "1" => rows[r].push(c),
            "0" => {}
            other => {
                return Err(Error::parse(&reader.path, line, format!("binary value {other:?}")))
            }
        }
    }
    SparseBinaryMatrix::from_rows(reader.n_cols, &rows)
        .map_err(|e| Error::parse(&reader.path, 0, e.to_string()))
}

pub fn write_ternary(path: impl AsRef<Path>, m: &TernaryMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{} {}", m.n_rows(), m.n_cols()).map_err(io)?;
    for (r, c, v) in m.iter() {
        writeln!(w, "{r} {c} {v}").map_err(io)?;
    }
    finish(path, w)
}

pub fn read_ternary(path: impl AsRef<Path>) -> Result<TernaryMatrix> {
    let mut reader = TripletReader::open(path.as_ref())?;
    let mut entries = Vec::new();
    while let Some((line, r, c, v)) = reader.next_entry()? {
        let v: i8 = match v.as_str() {
            "-1" => -1,
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::parse(&reader.path, line, format!("ternary value {other:?}")))
            }
        };
        entries.push((r, c, v));
    }
    TernaryMatrix::from_entries(reader.n_rows, reader.n_cols, entries)
        .map_err(|e| Error::parse(&reader.path, 0, e.to_string()))
}

pub fn write_dense(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{} {}", m.n_rows(), m.n_cols()).map_err(io)?;
    for r in 0..m.n_rows() {
        for (c, v) in m.row(r).iter().enumerate() {
            writeln!(w, "{r} {c} {v}").map_err(io)?;
        }
    }
    finish(path, w)
}

/// Reads a dense table; every cell must appear exactly once.
pub fn read_dense(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let mut reader = TripletReader::open(path.as_ref())?;
    let (n_rows, n_cols) = (reader.n_rows, reader.n_cols);
    let mut data = vec![f64::NAN; n_rows * n_cols];
    let mut seen = vec![false; n_rows * n_cols];
    while let Some((line, r, c, v)) = reader.next_entry()? {
        let value: f64 = v
            .parse()
            .map_err(|_| Error::parse(&reader.path, line, format!("bad value {v:?}")))?;
        let slot = r * n_cols + c;
        if seen[slot] {
            return Err(Error::parse(&reader.path, line, format!("cell ({r}, {c}) written twice")));
        }
        seen[slot] = true;
        data[slot] = value;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::parse(
            &reader.path,
            0,
            format!(
                "dense table is missing cell ({}, {})",
                missing / n_cols.max(1),
                missing % n_cols.max(1)
            ),
        ));
    }
    DenseMatrix::from_vec(n_rows, n_cols, data)
}

/// Per-split metadata written next to the matrix files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub n_users: usize,
    pub n_items: usize,
    pub split: Split,
    #[serde(default)]
    pub sample: usize,
    pub params: GenParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_ids: Option<IdMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_ids: Option<IdMap>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
const FILES: [&str; 5] = ["y_t.txt", "y_c.txt", "z.txt", "y.txt", "tau.txt"];

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    finish(path, w)
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// Writes one triplet file per matrix plus `manifest.json` into `dir`
/// (created if needed) and returns the manifest path.
pub fn save_dataset(ds: &GeneratedDataset, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    ds.check_invariants()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_binary(dir.join(FILES[0]), &ds.y_t)?;
    write_binary(dir.join(FILES[1]), &ds.y_c)?;
    write_binary(dir.join(FILES[2]), &ds.z)?;
    write_binary(dir.join(FILES[3]), &ds.y)?;
    write_ternary(dir.join(FILES[4]), &ds.tau)?;
    let manifest = Manifest {
        seed: ds.seed,
        n_users: ds.n_users(),
        n_items: ds.n_items(),
        split: ds.split,
        sample: ds.sample,
        params: ds.params.clone(),
        user_ids: ds.user_ids.clone(),
        item_ids: ds.item_ids.clone(),
    };
    let path = dir.join(MANIFEST_FILE);
    write_json(&path, &manifest)?;
    Ok(path)
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<GeneratedDataset> {
    let dir = dir.as_ref();
    let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
    let ds = GeneratedDataset {
        y_t: read_binary(dir.join(FILES[0]))?,
        y_c: read_binary(dir.join(FILES[1]))?,
        z: read_binary(dir.join(FILES[2]))?,
        y: read_binary(dir.join(FILES[3]))?,
        tau: read_ternary(dir.join(FILES[4]))?,
        seed: manifest.seed,
        split: manifest.split,
        sample: manifest.sample,
        params: manifest.params,
        user_ids: manifest.user_ids,
        item_ids: manifest.item_ids,
    };
    if ds.y.shape() != (manifest.n_users, manifest.n_items) {
        return Err(Error::DimensionMismatch(format!(
            "{}: manifest says {}x{}, matrices are {:?}",
            dir.display(),
            manifest.n_users,
            manifest.n_items,
            ds.y.shape()
        )));
    }
    ds.check_invariants()?;
    Ok(ds)
}

/// The three splits of one generated dataset. Validation and test may hold
/// several independent samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplits {
    pub train: GeneratedDataset,
    pub validation: Vec<GeneratedDataset>,
    pub test: Vec<GeneratedDataset>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitIndex {
    train: Vec<String>,
    validation: Vec<String>,
    test: Vec<String>,
}

pub const SPLIT_INDEX_FILE: &str = "splits.json";

fn sample_dir(split: Split, sample: usize) -> String {
    if sample == 0 {
        split.as_str().to_owned()
    } else {
        format!("{}-{sample}", split.as_str())
    }
}

impl DatasetSplits {
    /// Saves each split under its own subdirectory of `dir` and writes
    /// `splits.json` listing them.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        let mut index = SplitIndex {
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
        };
        for ds in std::iter::once(&self.train)
            .chain(&self.validation)
            .chain(&self.test)
        {
            let name = sample_dir(ds.split, ds.sample);
            save_dataset(ds, dir.join(&name))?;
            match ds.split {
                Split::Train => index.train.push(name),
                Split::Validation => index.validation.push(name),
                Split::Test => index.test.push(name),
            }
        }
        let path = dir.join(SPLIT_INDEX_FILE);
        write_json(&path, &index)?;
        Ok(path)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let index_path = dir.join(SPLIT_INDEX_FILE);
        let index: SplitIndex = if index_path.exists() {
            read_json(&index_path)?
        } else {
            SplitIndex {
                train: vec!["train".into()],
                validation: vec!["validation".into()],
                test: vec!["test".into()],
            }
        };
        let load_all = |names: &[String], split: Split| -> Result<Vec<GeneratedDataset>> {
            if names.is_empty() {
                return Err(Error::MissingSplit(split.as_str().into()));
            }
            names
                .iter()
                .map(|name| {
                    let sub = dir.join(name);
                    if !sub.join(MANIFEST_FILE).exists() {
                        return Err(Error::MissingSplit(format!(
                            "{} ({})",
                            split.as_str(),
                            sub.display()
                        )));
                    }
                    load_dataset(sub)
                })
                .collect()
        };
        let mut train = load_all(&index.train, Split::Train)?;
        Ok(Self {
            train: train.swap_remove(0),
            validation: load_all(&index.validation, Split::Validation)?,
            test: load_all(&index.test, Split::Test)?,
        })
    }
}
