//! Dataset assembly: CSV loading, leave-one-subset-out folds, and the
//! synthetic generator used for desk-scale verification.

mod load;
mod synth;

pub use load::{load_dataset, write_dataset_csvs, LoadOptions};
pub use synth::{feature_range, gen_synthetic, SynthConfig};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{FeatureSchema, LabeledSample};

/// A schema plus validated labeled samples, canonically sorted by
/// (subset, subject, label date).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Distinct subset tags in sorted order.
    pub fn subset_tags(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.samples.iter().map(|s| s.subset.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }
}

/// One leave-one-subset-out fold: the named subset is held out for testing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub name: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed csv at {path}: {detail}")]
    MalformedCsv { path: String, detail: String },
    #[error("feature column {column} is not in the schema")]
    UnknownFeatureColumn { column: String },
    #[error("label out of range at {path} row {row}: {detail}")]
    LabelOutOfRange { path: String, row: usize, detail: String },
    #[error("duplicate label row for subject {subject} on {date}")]
    DuplicateLabelRow { subject: String, date: String },
    #[error("dataset has a single subset; leave-one-subset-out needs at least two")]
    SingleSubset,
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv write error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Window(#[from] crate::schema::WindowError),
}

/// Splits a dataset into one fold per distinct subset tag.
///
/// Folds are test-disjoint and jointly cover the dataset; subsets are
/// subject-disjoint by construction, so no subject appears on both sides
/// of any fold.
pub fn split_loso(dataset: &Dataset) -> Result<Vec<Fold>, IngestError> {
    let tags = dataset.subset_tags();
    if tags.len() < 2 {
        return Err(IngestError::SingleSubset);
    }
    let mut folds = Vec::with_capacity(tags.len());
    for tag in tags {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, s) in dataset.samples.iter().enumerate() {
            if s.subset == tag {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        folds.push(Fold { name: tag, train, test });
    }
    Ok(folds)
}
