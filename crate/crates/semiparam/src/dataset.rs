//! Datasets: row-major sample matrices with split tags and CSV I/O.

use std::fmt;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which split of an experiment scenario a dataset belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    InterpTest,
    ExtrapTest,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitTag::Train => write!(f, "train"),
            SplitTag::InterpTest => write!(f, "interp"),
            SplitTag::ExtrapTest => write!(f, "extrap"),
        }
    }
}

/// Immutable collection of input/target samples, one row per sample.
#[derive(Debug, Clone)]
pub struct Dataset {
    inputs: DMatrix<f64>,
    targets: DMatrix<f64>,
    tag: SplitTag,
    name: String,
}

impl Dataset {
    pub fn new(
        inputs: DMatrix<f64>,
        targets: DMatrix<f64>,
        tag: SplitTag,
        name: impl Into<String>,
    ) -> Result<Self> {
        let name = name.into();
        if inputs.nrows() != targets.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "dataset {name}: {} input rows vs {} target rows",
                inputs.nrows(),
                targets.nrows()
            )));
        }
        if inputs.nrows() == 0 {
            return Err(Error::EmptyDataset(name));
        }
        if inputs.ncols() == 0 || targets.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "dataset {name}: zero-width inputs or targets"
            )));
        }
        if inputs.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("dataset {name}")));
        }
        Ok(Self {
            inputs,
            targets,
            tag,
            name,
        })
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn targets(&self) -> &DMatrix<f64> {
        &self.targets
    }

    pub fn tag(&self) -> SplitTag {
        self.tag
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: N >= 1
    }

    pub fn dim_in(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn dim_out(&self) -> usize {
        self.targets.ncols()
    }

    /// Seeded row subsample without replacement, preserving row order.
    pub fn subsample(&self, max_rows: usize, seed: u64) -> Dataset {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        if max_rows >= self.len() {
            return self.clone();
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rng);
        idx.truncate(max_rows);
        idx.sort_unstable();
        let inputs = DMatrix::from_fn(max_rows, self.dim_in(), |r, c| self.inputs[(idx[r], c)]);
        let targets = DMatrix::from_fn(max_rows, self.dim_out(), |r, c| self.targets[(idx[r], c)]);
        Dataset {
            inputs,
            targets,
            tag: self.tag,
            name: format!("{}_sub{}", self.name, max_rows),
        }
    }

    /// Returns a copy with the given targets substituted (used for residual fitting).
    pub fn with_targets(&self, targets: DMatrix<f64>) -> Result<Dataset> {
        Dataset::new(self.inputs.clone(), targets, self.tag, self.name.clone())
    }

    /// Writes the dataset in the `x0,..,y0,..` CSV format.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header: Vec<String> = (0..self.dim_in())
            .map(|d| format!("x{d}"))
            .chain((0..self.dim_out()).map(|d| format!("y{d}")))
            .collect();
        writeln!(file, "{}", header.join(","))?;
        for r in 0..self.len() {
            let row: Vec<String> = (0..self.dim_in())
                .map(|c| format!("{:?}", self.inputs[(r, c)]))
                .chain((0..self.dim_out()).map(|c| format!("{:?}", self.targets[(r, c)])))
                .collect();
            writeln!(file, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads a dataset from the `x0,..,y0,..` CSV format.
    pub fn read_csv(path: &Path, tag: SplitTag, name: impl Into<String>) -> Result<Self> {
        let file = BufReader::new(std::fs::File::open(path)?);
        let mut lines = file.lines();
        let header = lines.next().ok_or(Error::CsvParse {
            line: 1,
            msg: "missing header".into(),
        })??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        let d_in = cols.iter().take_while(|c| c.starts_with('x')).count();
        let d_out = cols.len() - d_in;
        if d_in == 0 || d_out == 0 || !cols[d_in..].iter().all(|c| c.starts_with('y')) {
            return Err(Error::CsvParse {
                line: 1,
                msg: format!("bad header: {header}"),
            });
        }
        let mut values: Vec<Vec<f64>> = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> =
                line.trim().split(',').map(|v| v.parse::<f64>()).collect();
            let row = row.map_err(|e| Error::CsvParse {
                line: i + 2,
                msg: e.to_string(),
            })?;
            if row.len() != cols.len() {
                return Err(Error::CsvParse {
                    line: i + 2,
                    msg: format!("expected {} fields, got {}", cols.len(), row.len()),
                });
            }
            values.push(row);
        }
        let n = values.len();
        let inputs = DMatrix::from_fn(n, d_in, |r, c| values[r][c]);
        let targets = DMatrix::from_fn(n, d_out, |r, c| values[r][d_in + c]);
        Dataset::new(inputs, targets, tag, name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn rejects_row_mismatch() {
        let x = dmatrix![1.0; 2.0];
        let y = dmatrix![1.0];
        assert!(Dataset::new(x, y, SplitTag::Train, "t").is_err());
    }

    #[test]
    fn rejects_non_finite() {
        let x = dmatrix![1.0; f64::NAN];
        let y = dmatrix![1.0; 2.0];
        assert!(Dataset::new(x, y, SplitTag::Train, "t").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let x = dmatrix![1.0, 2.0; 3.0, 0.1];
        let y = dmatrix![0.5; -0.25];
        let ds = Dataset::new(x, y, SplitTag::Train, "rt").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        ds.write_csv(&path).unwrap();
        let back = Dataset::read_csv(&path, SplitTag::Train, "rt").unwrap();
        assert_eq!(back.inputs(), ds.inputs());
        assert_eq!(back.targets(), ds.targets());
    }

    #[test]
    fn subsample_is_deterministic() {
        let x = DMatrix::from_fn(20, 1, |r, _| r as f64);
        let y = x.clone();
        let ds = Dataset::new(x, y, SplitTag::Train, "s").unwrap();
        let a = ds.subsample(5, 3);
        let b = ds.subsample(5, 3);
        assert_eq!(a.inputs(), b.inputs());
        assert_eq!(a.len(), 5);
    }
}
