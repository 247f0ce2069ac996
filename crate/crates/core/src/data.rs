//! Aligned (context, predictors, outcome) datasets and their CSV form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Matrix;
use crate::error::{Error, Result};

/// Names of the columns that play each role.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnRoles {
    pub context: Vec<String>,
    pub predictors: Vec<String>,
    pub outcome: String,
}

impl ColumnRoles {
    /// `c0..c{m-1}`, `x0..x{p-1}`, `y`.
    pub fn default_names(m: usize, p: usize) -> Self {
        Self {
            context: (0..m).map(|j| format!("c{j}")).collect(),
            predictors: (0..p).map(|j| format!("x{j}")).collect(),
            outcome: "y".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub context: Matrix,
    pub predictors: Matrix,
    pub outcome: Vec<f64>,
    pub roles: ColumnRoles,
}

/// Formats with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl Dataset {
    pub fn new(context: Matrix, predictors: Matrix, outcome: Vec<f64>, roles: ColumnRoles) -> Result<Self> {
        let n = outcome.len();
        if context.rows() != n || predictors.rows() != n {
            return Err(Error::Data(format!(
                "misaligned dataset: {} context rows, {} predictor rows, {} outcomes",
                context.rows(),
                predictors.rows(),
                n
            )));
        }
        if roles.context.len() != context.cols() || roles.predictors.len() != predictors.cols() {
            return Err(Error::Data("column names do not match matrix widths".into()));
        }
        if !context.is_finite() || !predictors.is_finite() || outcome.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("dataset contains non-finite values".into()));
        }
        Ok(Self {
            context,
            predictors,
            outcome,
            roles,
        })
    }

    /// Dataset with default column names.
    pub fn from_parts(context: Matrix, predictors: Matrix, outcome: Vec<f64>) -> Result<Self> {
        let roles = ColumnRoles::default_names(context.cols(), predictors.cols());
        Self::new(context, predictors, outcome, roles)
    }

    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    pub fn context_dim(&self) -> usize {
        self.context.cols()
    }

    pub fn predictor_dim(&self) -> usize {
        self.predictors.cols()
    }

    /// Rows by index; duplicates allowed (bootstrap resamples).
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            context: self.context.select_rows(indices),
            predictors: self.predictors.select_rows(indices),
            outcome: indices.iter().map(|&i| self.outcome[i]).collect(),
            roles: self.roles.clone(),
        }
    }

    /// Replaces the context with `[context | extra]`.
    pub fn with_extra_context(&self, extra: &Matrix, names: Vec<String>) -> Result<Dataset> {
        let context = Matrix::concat_cols(&[&self.context, extra])?;
        let mut roles = self.roles.clone();
        roles.context.extend(names);
        Dataset::new(context, self.predictors.clone(), self.outcome.clone(), roles)
    }

    /// Loads a combined CSV, picking columns by role.
    pub fn from_csv(path: &Path, roles: &ColumnRoles) -> Result<Dataset> {
        let table = Table::read(path)?;
        let context = table.columns(&roles.context)?;
        let predictors = table.columns(&roles.predictors)?;
        let outcome = table.columns(std::slice::from_ref(&roles.outcome))?.into_data();
        Dataset::new(context, predictors, outcome, roles.clone())
    }

    /// Loads context and predictors only (for prediction); the outcome is zero-filled.
    pub fn inputs_from_csv(path: &Path, context: &[String], predictors: &[String]) -> Result<Dataset> {
        let table = Table::read(path)?;
        let c = table.columns(context)?;
        let x = table.columns(predictors)?;
        let n = c.rows();
        let roles = ColumnRoles {
            context: context.to_vec(),
            predictors: predictors.to_vec(),
            outcome: String::new(),
        };
        Dataset::new(c, x, vec![0.0; n], roles)
    }

    /// Loads the three-file layout: every column of the context and
    /// predictor files, and the first column of the outcome file.
    pub fn from_csv_triplet(context: &Path, predictors: &Path, outcome: &Path) -> Result<Dataset> {
        let c = Table::read(context)?;
        let x = Table::read(predictors)?;
        let y = Table::read(outcome)?;
        let outcome_name = y
            .headers
            .first()
            .cloned()
            .ok_or_else(|| Error::Data(format!("{} has no columns", outcome.display())))?;
        let roles = ColumnRoles {
            context: c.headers.clone(),
            predictors: x.headers.clone(),
            outcome: outcome_name.clone(),
        };
        Dataset::new(
            c.columns(&c.headers)?,
            x.columns(&x.headers)?,
            y.columns(&[outcome_name])?.into_data(),
            roles,
        )
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = self.roles.context.iter().map(String::as_str).collect();
        header.extend(self.roles.predictors.iter().map(String::as_str));
        header.push(&self.roles.outcome);
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.context.row(i).iter().map(|&v| fmt_f64(v)).collect();
            rec.extend(self.predictors.row(i).iter().map(|&v| fmt_f64(v)));
            rec.push(fmt_f64(self.outcome[i]));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A parsed CSV whose cells are validated lazily per requested column.
struct Table {
    source: String,
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Table> {
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.len() != headers.len() {
                return Err(Error::Data(format!(
                    "{}: row {} has {} fields, header has {}",
                    path.display(),
                    i + 1,
                    rec.len(),
                    headers.len()
                )));
            }
            rows.push(rec.iter().map(|s| s.trim().to_string()).collect());
        }
        Ok(Table {
            source: path.display().to_string(),
            headers,
            rows,
        })
    }

    fn columns(&self, names: &[String]) -> Result<Matrix> {
        let mut idx = Vec::with_capacity(names.len());
        for name in names {
            let i = self.headers.iter().position(|h| h == name).ok_or_else(|| {
                Error::Data(format!("{}: missing declared column `{name}`", self.source))
            })?;
            idx.push(i);
        }
        let mut data = Vec::with_capacity(self.rows.len() * idx.len());
        for (r, row) in self.rows.iter().enumerate() {
            for (&i, name) in idx.iter().zip(names) {
                let cell = &row[i];
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Data(format!(
                        "{}: row {}, column `{name}`: `{cell}` is not numeric",
                        self.source,
                        r + 1
                    ))
                })?;
                if !v.is_finite() {
                    return Err(Error::Data(format!(
                        "{}: row {}, column `{name}`: non-finite value",
                        self.source,
                        r + 1
                    )));
                }
                data.push(v);
            }
        }
        Matrix::new(self.rows.len(), idx.len(), data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    fn roles() -> ColumnRoles {
        ColumnRoles {
            context: vec!["age".into()],
            predictors: vec!["dose".into()],
            outcome: "resp".into(),
        }
    }

    #[test]
    fn csv_roundtrip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let d = Dataset::from_parts(
            Matrix::column_vector(&[0.1, 1.0 / 3.0]),
            Matrix::column_vector(&[std::f64::consts::PI, -2e-300]),
            vec![1e300, -0.0],
        )
        .unwrap();
        let p = dir.path().join("d.csv");
        d.write_csv(&p).unwrap();
        let back = Dataset::from_csv(&p, &d.roles).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "age,dose\n1,2\n");
        let msg = Dataset::from_csv(&p, &roles()).unwrap_err().to_string();
        assert!(msg.contains("resp"), "{msg}");
    }

    #[test]
    fn bad_cells_report_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "age,dose,resp\n1,2,3\n4,abc,6\n");
        let msg = Dataset::from_csv(&p, &roles()).unwrap_err().to_string();
        assert!(msg.contains("row 2") && msg.contains("dose"), "{msg}");

        let p = write(dir.path(), "b.csv", "age,dose,resp\n1,2,3\n4,5\n");
        let err = Dataset::from_csv(&p, &roles()).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
        assert!(err.to_string().contains("row 2"));
    }

    #[test]
    fn triplet_mode() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(dir.path(), "c.csv", "a,b\n1,2\n3,4\n");
        let x = write(dir.path(), "x.csv", "u\n5\n6\n");
        let y = write(dir.path(), "y.csv", "out\n7\n8\n");
        let d = Dataset::from_csv_triplet(&c, &x, &y).unwrap();
        assert_eq!(d.context_dim(), 2);
        assert_eq!(d.outcome, vec![7.0, 8.0]);
        assert_eq!(d.roles.outcome, "out");

        let y_short = write(dir.path(), "y2.csv", "out\n7\n");
        assert!(matches!(Dataset::from_csv_triplet(&c, &x, &y_short), Err(Error::Data(_))));
    }
}
