//! Data model: sparse outcome/treatment matrices, prior tables, generated
//! splits and their on-disk formats.

mod io;
pub(crate) use io::read_json;
mod log;
mod matrix;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use self::io::{
    load_dataset, read_binary, read_dense, read_ternary, save_dataset, write_binary, write_dense,
    write_ternary, DatasetSplits, Manifest, MANIFEST_FILE, SPLIT_INDEX_FILE,
};
pub use self::log::{load_log, to_matrices, IdMap, InteractionLog, LogFormat, LogRecord};
pub use self::matrix::{DenseMatrix, SparseBinaryMatrix, TernaryMatrix};

use crate::datagen::GenParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    /// Stable numeric tag mixed into random stream keys.
    pub(crate) fn stream_tag(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Validation => 2,
            Split::Test => 3,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidParameter(format!("unknown split {other:?}"))),
        }
    }
}

/// Per-pair generation probabilities: outcome with recommendation, outcome
/// without recommendation, and recommendation propensity.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorTables {
    pub mu_t: DenseMatrix,
    pub mu_c: DenseMatrix,
    pub propensity: DenseMatrix,
}

impl PriorTables {
    pub fn new(mu_t: DenseMatrix, mu_c: DenseMatrix, propensity: DenseMatrix) -> Result<Self> {
        let tables = Self {
            mu_t,
            mu_c,
            propensity,
        };
        tables.validate()?;
        Ok(tables)
    }

    pub fn validate(&self) -> Result<()> {
        let shape = self.mu_t.shape();
        if self.mu_c.shape() != shape || self.propensity.shape() != shape {
            return Err(Error::DimensionMismatch(format!(
                "prior tables {:?}, {:?}, {:?}",
                shape,
                self.mu_c.shape(),
                self.propensity.shape()
            )));
        }
        for (name, m) in [
            ("mu_t", &self.mu_t),
            ("mu_c", &self.mu_c),
            ("propensity", &self.propensity),
        ] {
            if let Some(v) = m.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidParameter(format!(
                    "{name} contains {v}, outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mu_t.shape()
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_dense(dir.join("mu_t.txt"), &self.mu_t)?;
        write_dense(dir.join("mu_c.txt"), &self.mu_c)?;
        write_dense(dir.join("propensity.txt"), &self.propensity)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        Self::new(
            read_dense(dir.join("mu_t.txt"))?,
            read_dense(dir.join("mu_c.txt"))?,
            read_dense(dir.join("propensity.txt"))?,
        )
    }
}

/// One sampled split: potential outcomes, assignments, observed outcomes and
/// the ground-truth effect.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDataset {
    pub y_t: SparseBinaryMatrix,
    pub y_c: SparseBinaryMatrix,
    pub z: SparseBinaryMatrix,
    pub y: SparseBinaryMatrix,
    pub tau: TernaryMatrix,
    pub seed: u64,
    pub split: Split,
    /// Index of this sample within its split (0 unless a split is sampled
    /// more than once).
    pub sample: usize,
    pub params: GenParams,
    pub user_ids: Option<IdMap>,
    pub item_ids: Option<IdMap>,
}

impl GeneratedDataset {
    /// Derives `y = z*y_t + (1-z)*y_c` and `tau = y_t - y_c`.
    pub fn from_potential_outcomes(
        y_t: SparseBinaryMatrix,
        y_c: SparseBinaryMatrix,
        z: SparseBinaryMatrix,
        seed: u64,
        split: Split,
        params: GenParams,
    ) -> Result<Self> {
        let y = z.and(&y_t)?.or(&y_c.and_not(&z)?)?;
        let tau = TernaryMatrix::difference(&y_t, &y_c)?;
        Ok(Self {
            y_t,
            y_c,
            z,
            y,
            tau,
            seed,
            split,
            sample: 0,
            params,
            user_ids: None,
            item_ids: None,
        })
    }

    pub fn n_users(&self) -> usize {
        self.y.n_rows()
    }

    pub fn n_items(&self) -> usize {
        self.y.n_cols()
    }

    /// Checks the observed-outcome identity and `tau = y_t - y_c`.
    pub fn check_invariants(&self) -> Result<()> {
        let shape = self.y.shape();
        for (name, m) in [("y_t", &self.y_t), ("y_c", &self.y_c), ("z", &self.z)] {
            if m.shape() != shape {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {:?}, y is {shape:?}",
                    m.shape()
                )));
            }
        }
        let expected_y = self.z.and(&self.y_t)?.or(&self.y_c.and_not(&self.z)?)?;
        if expected_y != self.y {
            return Err(Error::InvalidParameter(
                "observed outcomes violate y = z*y_t + (1-z)*y_c".into(),
            ));
        }
        if TernaryMatrix::difference(&self.y_t, &self.y_c)? != self.tau {
            return Err(Error::InvalidParameter("tau != y_t - y_c".into()));
        }
        Ok(())
    }
}
