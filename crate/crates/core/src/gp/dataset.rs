use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, PlatoonError, Result};
use crate::numfmt;

/// Regression data: one input row per target.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: DMatrix<f64>,
    pub targets: DVector<f64>,
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, targets: DVector<f64>) -> Result<Self> {
        if inputs.nrows() != targets.len() {
            return Err(PlatoonError::DimensionMismatch {
                expected: inputs.nrows(),
                got: targets.len(),
            });
        }
        if targets.is_empty() {
            return invalid("dataset must contain at least one point");
        }
        if inputs.iter().chain(targets.iter()).any(|x| !x.is_finite()) {
            return invalid("dataset contains non-finite values");
        }
        Ok(Self { inputs, targets })
    }

    pub fn from_rows(rows: &[Vec<f64>], targets: &[f64]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return invalid("ragged input rows");
        }
        let inputs = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Self::new(inputs, DVector::from_column_slice(targets))
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn input(&self, i: usize) -> Vec<f64> {
        self.inputs.row(i).iter().copied().collect()
    }

    /// Rows selected by `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let inputs = DMatrix::from_fn(idx.len(), self.dim(), |i, j| self.inputs[(idx[i], j)]);
        let targets = DVector::from_fn(idx.len(), |i, _| self.targets[idx[i]]);
        Self::new(inputs, targets)
    }

    /// Concatenates datasets with equal input dimension.
    pub fn concat(parts: &[Dataset]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return invalid("nothing to concatenate");
        };
        let d = first.dim();
        if parts.iter().any(|p| p.dim() != d) {
            return invalid("input dimensions differ");
        }
        let n: usize = parts.iter().map(Dataset::len).sum();
        let mut inputs = DMatrix::zeros(n, d);
        let mut targets = DVector::zeros(n);
        let mut r = 0;
        for p in parts {
            for i in 0..p.len() {
                inputs.row_mut(r).copy_from(&p.inputs.row(i));
                targets[r] = p.targets[i];
                r += 1;
            }
        }
        Self::new(inputs, targets)
    }

    /// Writes `a1,..,ad,g` CSV.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let mut header: Vec<String> = (1..=self.dim()).map(|i| format!("a{i}")).collect();
        header.push("g".into());
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.inputs.row(i).iter().map(|&x| numfmt::sig(x, 17)).collect();
            rec.push(numfmt::sig(self.targets[i], 17));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let name = path.display().to_string();
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
        let header = r.headers().map_err(csv_err)?.clone();
        let d = header.len().saturating_sub(1);
        let expect: Vec<String> = (1..=d).map(|i| format!("a{i}")).chain(["g".to_string()]).collect();
        if d == 0 || header.iter().zip(&expect).any(|(h, e)| h != e) {
            return Err(PlatoonError::Parse {
                path: name,
                line: 1,
                message: format!("expected header `{}`", expect.join(",")),
            });
        }
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| PlatoonError::Parse {
                path: name.clone(),
                line,
                message: e.to_string(),
            })?;
            let vals = parse_record(&rec, d + 1, &name, line)?;
            targets.push(vals[d]);
            rows.push(vals[..d].to_vec());
        }
        Self::from_rows(&rows, &targets)
    }
}

pub(crate) fn parse_record(rec: &csv::StringRecord, width: usize, path: &str, line: usize) -> Result<Vec<f64>> {
    if rec.len() != width {
        return Err(PlatoonError::Parse {
            path: path.to_string(),
            line,
            message: format!("expected {width} fields, found {}", rec.len()),
        });
    }
    rec.iter()
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| PlatoonError::Parse {
                    path: path.to_string(),
                    line,
                    message: format!("not a finite number: `{f}`"),
                })
        })
        .collect()
}

pub(crate) fn csv_err(e: csv::Error) -> PlatoonError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => PlatoonError::Io(io),
        other => PlatoonError::Format(format!("{other:?}")),
    }
}
