//! Interaction/treatment logs in CSV or TSV form with a `user,item,y,z` header.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::SparseBinaryMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogFormat {
    Csv,
    Tsv,
}

impl LogFormat {
    /// Guesses the format from the file extension; anything but `.tsv` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("tsv") => LogFormat::Tsv,
            _ => LogFormat::Csv,
        }
    }

    fn delimiter(self) -> u8 {
        match self {
            LogFormat::Csv => b',',
            LogFormat::Tsv => b'\t',
        }
    }
}

/// Maps external string ids to dense indices in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct IdMap {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the index of `id`, assigning the next one if unseen.
    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_owned());
        self.index.insert(id.to_owned(), i);
        i
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

impl From<Vec<String>> for IdMap {
    fn from(ids: Vec<String>) -> Self {
        let index = ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Self { ids, index }
    }
}

impl From<IdMap> for Vec<String> {
    fn from(map: IdMap) -> Self {
        map.ids
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogRecord {
    pub user: usize,
    pub item: usize,
    pub y: bool,
    pub z: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InteractionLog {
    pub users: IdMap,
    pub items: IdMap,
    pub records: Vec<LogRecord>,
}

impl InteractionLog {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }
}

fn parse_flag(path: &Path, line: usize, column: &str, raw: &str) -> Result<bool> {
    match raw.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::parse(
            path,
            line,
            format!("column {column} must be 0 or 1, got {other:?}"),
        )),
    }
}

/// Reads a log file. Line numbers in errors are 1-based and count the header.
pub fn load_log(path: impl AsRef<Path>, format: LogFormat) -> Result<InteractionLog> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter())
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::parse(path, 1, format!("{other:?}")),
        })?;

    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::parse(path, 1, format!("header is missing column {name:?}")))
    };
    let (cu, ci, cy, cz) = (column("user")?, column("item")?, column("y")?, column("z")?);

    let mut log = InteractionLog::default();
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    for result in reader.records() {
        let record = result.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != headers.len() {
            return Err(Error::parse(
                path,
                line,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        let user_id = record[cu].trim();
        let item_id = record[ci].trim();
        if user_id.is_empty() || item_id.is_empty() {
            return Err(Error::parse(path, line, "empty user or item id"));
        }
        let y = parse_flag(path, line, "y", &record[cy])?;
        let z = parse_flag(path, line, "z", &record[cz])?;
        let user = log.users.intern(user_id);
        let item = log.items.intern(item_id);
        if seen.insert((user, item), line).is_some() {
            return Err(Error::DuplicatePair {
                line,
                user: user_id.to_owned(),
                item: item_id.to_owned(),
            });
        }
        log.records.push(LogRecord { user, item, y, z });
    }
    Ok(log)
}

/// Outcome matrix `Y` and treatment matrix `Z` over the log's id dictionaries.
pub fn to_matrices(log: &InteractionLog) -> (SparseBinaryMatrix, SparseBinaryMatrix) {
    let mut y_rows = vec![Vec::new(); log.n_users()];
    let mut z_rows = vec![Vec::new(); log.n_users()];
    for rec in &log.records {
        if rec.y {
            y_rows[rec.user].push(rec.item);
        }
        if rec.z {
            z_rows[rec.user].push(rec.item);
        }
    }
    // Pairs are unique per log, so rows cannot contain duplicates.
    let y = SparseBinaryMatrix::from_rows(log.n_items(), &y_rows).expect("validated log");
    let z = SparseBinaryMatrix::from_rows(log.n_items(), &z_rows).expect("validated log");
    (y, z)
}
