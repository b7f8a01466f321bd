//! Multi-class k-nearest-neighbour classifier over feature tables.
//!
//! Fitting stores the training rows verbatim; prediction is an exhaustive
//! scan (at 4488 rows x 16 features an index would cost more than it saves,
//! and the linear scan is the reference semantics). All tie-breaks are
//! deterministic so repeated runs produce identical reports:
//! neighbour ties go to the earlier stored row, vote ties to the class with
//! the smaller summed distance, then to the smaller class id.

use thiserror::Error;

use crate::zoning::{FeatureTable, ZoningError};

/// Trained (that is, stored) KNN model.
#[derive(Debug, Clone)]
pub struct KnnModel {
    table: FeatureTable,
}

/// One of the k nearest stored rows for a query.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    /// Index into the stored training table.
    pub row: usize,
    pub class_id: usize,
    /// Euclidean distance to the query.
    pub distance: f64,
}

#[derive(Debug, Error)]
pub enum KnnError {
    #[error("cannot fit on an empty feature table")]
    EmptyTable,
    #[error("k = {k} out of range, model stores {rows} rows")]
    KOutOfRange { k: usize, rows: usize },
    #[error("query has {got} features, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("bad model file: {0}")]
    BadModelFile(String),
    #[error(transparent)]
    Table(#[from] ZoningError),
}

impl KnnModel {
    /// Stores the training rows; no other computation happens.
    pub fn fit(train: FeatureTable) -> Result<Self, KnnError> {
        if train.rows.is_empty() {
            return Err(KnnError::EmptyTable);
        }
        Ok(Self { table: train })
    }

    /// The stored training rows.
    pub fn table(&self) -> &FeatureTable {
        &self.table
    }

    pub fn n_features(&self) -> usize {
        self.table.n_features()
    }

    /// Predicts the class of `query` by majority vote among its `k` nearest
    /// stored rows, and returns those neighbours nearest-first.
    pub fn predict(&self, query: &[f64], k: usize) -> Result<(usize, Vec<Neighbor>), KnnError> {
        let rows = self.table.rows.len();
        if k == 0 || k > rows {
            return Err(KnnError::KOutOfRange { k, rows });
        }
        if query.len() != self.n_features() {
            return Err(KnnError::DimensionMismatch {
                expected: self.n_features(),
                got: query.len(),
            });
        }

        // Squared distances order identically to Euclidean ones.
        let mut distances: Vec<(f64, usize)> = self
            .table
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let d2 = row
                    .features
                    .values()
                    .iter()
                    .zip(query)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                (d2, i)
            })
            .collect();
        distances.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));

        let neighbors: Vec<Neighbor> = distances[..k]
            .iter()
            .map(|&(d2, i)| Neighbor {
                row: i,
                class_id: self.table.rows[i].class_id,
                distance: d2.sqrt(),
            })
            .collect();

        let n_classes = self.table.classes.len().max(
            neighbors.iter().map(|n| n.class_id + 1).max().unwrap_or(0),
        );
        let mut votes = vec![0usize; n_classes];
        let mut summed = vec![0f64; n_classes];
        for n in &neighbors {
            votes[n.class_id] += 1;
            summed[n.class_id] += n.distance;
        }

        let mut winner = None;
        for class_id in 0..n_classes {
            if votes[class_id] == 0 {
                continue;
            }
            let candidate = (votes[class_id], summed[class_id], class_id);
            winner = match winner {
                None => Some(candidate),
                Some(best) => {
                    // More votes wins; then smaller summed distance; then
                    // smaller class id (the iteration order provides it).
                    if candidate.0 > best.0 || (candidate.0 == best.0 && candidate.1 < best.1) {
                        Some(candidate)
                    } else {
                        Some(best)
                    }
                }
            };
        }
        let (_, _, class_id) = winner.expect("k >= 1 yields at least one vote");
        Ok((class_id, neighbors))
    }

    /// Elementwise [`predict`](Self::predict) over a query table, preserving
    /// row order.
    pub fn predict_batch(&self, queries: &FeatureTable, k: usize) -> Result<Vec<usize>, KnnError> {
        queries
            .rows
            .iter()
            .map(|row| self.predict(row.features.values(), k).map(|(c, _)| c))
            .collect()
    }

    /// Serializes the model: a `metric=euclidean` header line followed by the
    /// stored table in feature-CSV form.
    pub fn to_file_string(&self) -> String {
        format!("metric=euclidean\n{}", self.table.to_csv())
    }

    /// Parses [`to_file_string`](Self::to_file_string) output.
    pub fn from_file_string(text: &str) -> Result<Self, KnnError> {
        let Some((header, rest)) = text.split_once('\n') else {
            return Err(KnnError::BadModelFile("missing header line".into()));
        };
        if header != "metric=euclidean" {
            return Err(KnnError::BadModelFile(format!(
                "unsupported metric header {header:?}"
            )));
        }
        Self::fit(FeatureTable::from_csv(rest)?)
    }
}
