//! Dataset representation, CSV ingestion, class balancing and fold
//! splitting.
//!
//! A [`Dataset`] holds an `n x p` feature matrix together with binary
//! labels, a binary protected-group column (0 = disadvantaged group),
//! and per-row positive sample weights (all 1.0 when unweighted). The
//! protected column also appears among the features, so models see it
//! as an ordinary explanatory variable.

use crate::error::{Error, Result};
use crate::rng::stream;
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<u8>,
    pub protected: Vec<u8>,
    pub weights: Vec<f64>,
    pub feature_names: Vec<String>,
    pub protected_name: String,
}

impl Dataset {
    /// Validating constructor; every other path funnels through here.
    pub fn new(
        features: Array2<f64>,
        labels: Vec<u8>,
        protected: Vec<u8>,
        weights: Vec<f64>,
        feature_names: Vec<String>,
        protected_name: String,
    ) -> Result<Self> {
        let n = features.nrows();
        let p = features.ncols();
        if n == 0 || p == 0 {
            return Err(Error::Config("dataset must have n >= 1 and p >= 1".into()));
        }
        if labels.len() != n || protected.len() != n || weights.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "features {n} rows vs labels {}, protected {}, weights {}",
                labels.len(),
                protected.len(),
                weights.len()
            )));
        }
        if feature_names.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "{p} feature columns vs {} names",
                feature_names.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix"));
        }
        if labels.iter().chain(protected.iter()).any(|&v| v > 1) {
            return Err(Error::Config("labels and protected must be in {0,1}".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::Config("weights must be positive and finite".into()));
        }
        Ok(Self {
            features,
            labels,
            protected,
            weights,
            feature_names,
            protected_name,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            protected: idx.iter().map(|&i| self.protected[i]).collect(),
            weights: idx.iter().map(|&i| self.weights[i]).collect(),
            feature_names: self.feature_names.clone(),
            protected_name: self.protected_name.clone(),
        }
    }

    /// Minority outcome-class fraction (unweighted row counts).
    pub fn minority_fraction(&self) -> f64 {
        let pos = self.labels.iter().filter(|&&y| y == 1).count();
        let neg = self.labels.len() - pos;
        pos.min(neg) as f64 / self.labels.len() as f64
    }
}

/// Column roles for CSV ingestion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    pub label_col: String,
    pub protected_col: String,
    pub weight_col: Option<String>,
    /// Explicit feature column list; `None` means all remaining numeric
    /// columns (the protected column is always appended as a feature if
    /// not already listed).
    pub feature_cols: Option<Vec<String>>,
}

fn parse_binary(cell: &str, row: usize, col: &str) -> Result<u8> {
    match cell.trim() {
        "0" | "0.0" => Ok(0),
        "1" | "1.0" => Ok(1),
        other => Err(Error::CsvParse {
            row,
            column: col.to_string(),
            message: format!("expected 0 or 1, got {other:?}"),
        }),
    }
}

fn parse_real(cell: &str, row: usize, col: &str) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|_| Error::CsvParse {
        row,
        column: col.to_string(),
        message: format!("non-numeric cell {cell:?}"),
    })
}

/// Load a dataset from a headered CSV file.
///
/// Labels and the protected column are coerced to {0,1}; a missing
/// weight column means unit weights. Rows are reported 1-based counting
/// the header as row 1.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();

    let col_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };

    let label_idx = col_index(&schema.label_col)?;
    let protected_idx = col_index(&schema.protected_col)?;
    let weight_idx = match &schema.weight_col {
        Some(c) => Some(col_index(c)?),
        None => None,
    };

    let feature_names: Vec<String> = match &schema.feature_cols {
        Some(cols) => {
            for c in cols {
                col_index(c)?;
            }
            let mut cols = cols.clone();
            if !cols.contains(&schema.protected_col) {
                cols.push(schema.protected_col.clone());
            }
            cols
        }
        None => headers
            .iter()
            .filter(|h| {
                **h != schema.label_col && Some(h.as_str()) != schema.weight_col.as_deref()
            })
            .cloned()
            .collect(),
    };
    let feature_idx: Vec<usize> = feature_names
        .iter()
        .map(|c| col_index(c))
        .collect::<Result<_>>()?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut protected = Vec::new();
    let mut weights = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 2; // header is row 1
        let record = record.map_err(|e| Error::CsvParse {
            row: row_no,
            column: String::new(),
            message: e.to_string(),
        })?;
        let get = |idx: usize, col: &str| -> Result<&str> {
            record.get(idx).ok_or_else(|| Error::CsvParse {
                row: row_no,
                column: col.to_string(),
                message: "missing cell".into(),
            })
        };
        labels.push(parse_binary(
            get(label_idx, &schema.label_col)?,
            row_no,
            &schema.label_col,
        )?);
        protected.push(parse_binary(
            get(protected_idx, &schema.protected_col)?,
            row_no,
            &schema.protected_col,
        )?);
        let w = match weight_idx {
            Some(idx) => {
                let col = schema.weight_col.as_deref().unwrap();
                let w = parse_real(get(idx, col)?, row_no, col)?;
                if w <= 0.0 {
                    return Err(Error::CsvParse {
                        row: row_no,
                        column: col.to_string(),
                        message: format!("non-positive weight {w}"),
                    });
                }
                w
            }
            None => 1.0,
        };
        weights.push(w);
        let mut row = Vec::with_capacity(feature_idx.len());
        for (&idx, name) in feature_idx.iter().zip(&feature_names) {
            row.push(parse_real(get(idx, name)?, row_no, name)?);
        }
        rows.push(row);
    }

    if rows.is_empty() {
        return Err(Error::Config(format!("{}: no data rows", path.display())));
    }
    let p = feature_names.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let n = flat.len() / p;
    let features = Array2::from_shape_vec((n, p), flat)
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    Dataset::new(
        features,
        labels,
        protected,
        weights,
        feature_names,
        schema.protected_col.clone(),
    )
}

/// Write a dataset as UTF-8 comma-separated CSV with a header row.
///
/// Column order: label, weight (when any weight differs from 1), then
/// the feature columns (which include the protected column).
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let weighted = dataset.weights.iter().any(|&w| w != 1.0);
    let mut header = dataset.feature_names.clone();
    header.push("y".to_string());
    if weighted {
        header.push("w".to_string());
    }
    writeln!(out, "{}", header.join(",")).map_err(|e| Error::io(path.display().to_string(), e))?;
    for i in 0..dataset.n_rows() {
        let mut fields: Vec<String> =
            dataset.features.row(i).iter().map(|v| format!("{v}")).collect();
        fields.push(dataset.labels[i].to_string());
        if weighted {
            fields.push(format!("{}", dataset.weights[i]));
        }
        writeln!(out, "{}", fields.join(","))
            .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

/// Downsample the majority outcome class to `floor(ratio * minority)`
/// rows (capped at what is available), keeping every minority row.
/// Row order is re-shuffled deterministically from `seed`.
pub fn downsample_majority(d: &Dataset, ratio: f64, seed: u64) -> Result<Dataset> {
    if ratio < 1.0 {
        return Err(Error::Config(format!("downsample ratio {ratio} must be >= 1")));
    }
    let pos: Vec<usize> = (0..d.n_rows()).filter(|&i| d.labels[i] == 1).collect();
    let neg: Vec<usize> = (0..d.n_rows()).filter(|&i| d.labels[i] == 0).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Config("both outcome classes must be nonempty".into()));
    }
    let (minority, majority) = if pos.len() <= neg.len() {
        (pos, neg)
    } else {
        (neg, pos)
    };
    let keep = ((ratio * minority.len() as f64).floor() as usize).min(majority.len());
    let mut rng = stream(seed);
    let mut majority = majority;
    majority.shuffle(&mut rng);
    majority.truncate(keep);
    let mut idx = minority;
    idx.extend(majority);
    idx.shuffle(&mut rng);
    Ok(d.select(&idx))
}

/// Reproducible assignment of rows to `k` cross-validation folds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

/// Build a fold plan stratified by outcome label so class ratios stay
/// stable across folds.
pub fn make_folds(labels: &[u8], k: usize, seed: u64) -> Result<FoldPlan> {
    let n = labels.len();
    if k < 2 || k > n {
        return Err(Error::Config(format!("fold count {k} must satisfy 2 <= k <= n ({n})")));
    }
    let mut rng = stream(seed);
    let mut assignments = vec![0usize; n];
    // Deal each label class round-robin after a shuffle; offset the
    // starting fold between classes so fold sizes stay within 1.
    let mut next_fold = 0usize;
    for class in [1u8, 0u8] {
        let mut idx: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            assignments[i] = next_fold;
            next_fold = (next_fold + 1) % k;
        }
    }
    Ok(FoldPlan { k, assignments, seed })
}

/// Split into (train, test) where the test set is fold `fold_index`.
pub fn split(d: &Dataset, plan: &FoldPlan, fold_index: usize) -> Result<(Dataset, Dataset)> {
    if plan.assignments.len() != d.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "fold plan covers {} rows, dataset has {}",
            plan.assignments.len(),
            d.n_rows()
        )));
    }
    if fold_index >= plan.k {
        return Err(Error::Config(format!(
            "fold index {fold_index} out of range for k = {}",
            plan.k
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, &f) in plan.assignments.iter().enumerate() {
        if f == fold_index {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    Ok((d.select(&train), d.select(&test)))
}

/// Per-column z-score statistics fit on a training split.
#[derive(Debug, Clone)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    /// Fit on the training fold. Constant columns (std = 0) are left
    /// unscaled so binary indicator columns survive untouched offsets.
    pub fn fit(train: &Dataset) -> Standardizer {
        let n = train.n_rows() as f64;
        let mut means = Vec::with_capacity(train.n_features());
        let mut stds = Vec::with_capacity(train.n_features());
        for col in train.features.columns() {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            means.push(mean);
            stds.push(var.sqrt());
        }
        Standardizer { means, stds }
    }

    pub fn apply(&self, d: &mut Dataset) {
        for (j, mut col) in d.features.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.means[j], self.stds[j]);
            if s > 0.0 {
                col.mapv_inplace(|v| (v - m) / s);
            }
        }
    }
}
