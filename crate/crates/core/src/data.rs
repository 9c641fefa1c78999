//! Datasets and CSV ingestion.

use crate::error::{Result, UqpeError};
use crate::matrix::ColMatrix;
use std::path::Path;

/// Outcome vector, covariate matrix and the position of the treatment
/// covariate within it.
#[derive(Debug, Clone)]
pub struct Dataset {
    outcome: Vec<f64>,
    covariates: ColMatrix,
    treatment_index: usize,
    column_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(outcome: Vec<f64>, covariates: ColMatrix, treatment_index: usize) -> Result<Self> {
        let n = outcome.len();
        if n < 2 {
            return Err(UqpeError::InvalidConfig(format!(
                "a dataset needs at least 2 observations, got {n}"
            )));
        }
        if covariates.nrows() != n {
            return Err(UqpeError::Dimension {
                expected: n,
                got: covariates.nrows(),
            });
        }
        if covariates.ncols() == 0 {
            return Err(UqpeError::InvalidConfig("no covariates".into()));
        }
        if treatment_index >= covariates.ncols() {
            return Err(UqpeError::InvalidConfig(format!(
                "treatment index {treatment_index} out of range for {} covariates",
                covariates.ncols()
            )));
        }
        if !outcome.iter().all(|v| v.is_finite()) {
            return Err(UqpeError::NonFinite("outcome"));
        }
        if !covariates.all_finite() {
            return Err(UqpeError::NonFinite("covariates"));
        }
        Ok(Self {
            outcome,
            covariates,
            treatment_index,
            column_names: None,
        })
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(UqpeError::Dimension {
                expected: self.p(),
                got: names.len(),
            });
        }
        self.column_names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn covariates(&self) -> &ColMatrix {
        &self.covariates
    }

    pub fn treatment_index(&self) -> usize {
        self.treatment_index
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    pub fn column_name(&self, j: usize) -> String {
        self.column_names
            .as_ref()
            .and_then(|n| n.get(j).cloned())
            .unwrap_or_else(|| format!("x{}", j + 1))
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.covariates.row(i)
    }

    /// Same covariates with a transformed outcome.
    pub fn map_outcome(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut d = Self::new(
            self.outcome.iter().map(|&y| f(y)).collect(),
            self.covariates.clone(),
            self.treatment_index,
        )?;
        d.column_names = self.column_names.clone();
        Ok(d)
    }
}

/// Result of reading a CSV file: the complete-case dataset plus the number
/// of rows removed by listwise deletion.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: Dataset,
    pub dropped: usize,
}

fn parse_cell(raw: &str) -> Option<f64> {
    let s = raw.trim();
    if s.is_empty() || s == "NA" {
        return None;
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads `path` and keeps the outcome, the treatment and the listed controls.
///
/// The treatment becomes covariate column 0. An empty `control_cols` selects
/// every column other than the outcome and the treatment. Rows with an empty,
/// `NA` or non-numeric cell in any selected column are dropped.
pub fn ingest_csv(
    path: impl AsRef<Path>,
    outcome_col: &str,
    treatment_col: &str,
    control_cols: &[String],
) -> Result<Ingested> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| UqpeError::Schema(format!("column `{name}` not found in header")))
    };
    let outcome_idx = find(outcome_col)?;
    let treatment_idx = find(treatment_col)?;
    let controls: Vec<String> = if control_cols.is_empty() {
        headers
            .iter()
            .filter(|h| *h != outcome_col && *h != treatment_col)
            .cloned()
            .collect()
    } else {
        control_cols.to_vec()
    };
    let mut cov_idx = vec![treatment_idx];
    for c in &controls {
        let j = find(c)?;
        if j == outcome_idx || j == treatment_idx {
            return Err(UqpeError::Schema(format!(
                "control `{c}` duplicates the outcome or treatment column"
            )));
        }
        cov_idx.push(j);
    }

    let mut outcome = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut dropped = 0;
    for record in reader.records() {
        let record = record?;
        let y = record.get(outcome_idx).and_then(parse_cell);
        let x: Option<Vec<f64>> = cov_idx.iter().map(|&j| record.get(j).and_then(parse_cell)).collect();
        match (y, x) {
            (Some(y), Some(x)) => {
                outcome.push(y);
                rows.push(x);
            }
            _ => dropped += 1,
        }
    }
    if outcome.is_empty() {
        return Err(UqpeError::EmptyData { dropped });
    }
    let mut names = vec![treatment_col.to_string()];
    names.extend(controls);
    let dataset = Dataset::new(outcome, ColMatrix::from_rows(&rows), 0)?.with_column_names(names)?;
    Ok(Ingested { dataset, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn drops_incomplete_rows() {
        let f = write_csv("y,d,c\n1.0,2.0,3.0\n,1.0,1.0\n2.5,0.5,NA\n3.0,1.5,2.0\n");
        let got = ingest_csv(f.path(), "y", "d", &["c".into()]).unwrap();
        assert_eq!(got.dataset.n(), 2);
        assert_eq!(got.dropped, 2);
        assert_eq!(got.dataset.outcome(), &[1.0, 3.0]);
        assert_eq!(got.dataset.row(1), vec![1.5, 2.0]);
        assert_eq!(got.dataset.column_name(0), "d");
    }

    #[test]
    fn three_rows_one_missing_outcome() {
        let f = write_csv("y,d\n1,2\n,3\n4,5\n");
        let got = ingest_csv(f.path(), "y", "d", &[]).unwrap();
        assert_eq!((got.dataset.n(), got.dropped), (2, 1));
    }

    #[test]
    fn missing_treatment_is_schema_error() {
        let f = write_csv("y,c\n1,2\n3,4\n");
        let err = ingest_csv(f.path(), "y", "d", &[]).unwrap_err();
        assert!(matches!(err, UqpeError::Schema(_)));
    }

    #[test]
    fn no_surviving_rows() {
        let f = write_csv("y,d\nNA,1\nx,2\n");
        let err = ingest_csv(f.path(), "y", "d", &[]).unwrap_err();
        assert!(matches!(err, UqpeError::EmptyData { dropped: 2 }));
    }

    #[test]
    fn default_controls_are_remaining_columns() {
        let mut s = String::from("wage,days");
        for k in 0..42 {
            s.push_str(&format!(",c{k}"));
        }
        s.push('\n');
        for i in 0..5 {
            s.push_str(&format!("{i}.5,{i}"));
            for k in 0..42 {
                s.push_str(&format!(",{}", i * k));
            }
            s.push('\n');
        }
        let f = write_csv(&s);
        let got = ingest_csv(f.path(), "wage", "days", &[]).unwrap();
        // treatment + 42 controls
        assert_eq!(got.dataset.p(), 43);
        assert_eq!(got.dataset.p() - 1, 42);
    }
}
