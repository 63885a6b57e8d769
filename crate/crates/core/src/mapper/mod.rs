//! Learning and applying a linear map from a source space into a target space.
//!
//! Weights are stored source-dim × target-dim, so a row vector `x` maps to
//! `x W`. Two objectives are available: closed-form ridge regression (with
//! an optional GCV search over the penalty) in [`ridge`], and a cosine
//! margin-ranking objective trained with Adagrad in [`margin`].

pub mod margin;
pub mod ridge;

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

pub use margin::{fit_margin, tune_margin, MarginConfig, MarginFit, MarginTuning};
pub use ridge::{default_lambda_grid, fit_ridge, select_lambda_gcv, GcvSelection, RidgeProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Ridge,
    Margin,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Ridge => "ridge",
            Objective::Margin => "margin",
        })
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ridge" => Ok(Objective::Ridge),
            "margin" => Ok(Objective::Margin),
            other => Err(Error::InvalidArgument(format!("unknown objective `{other}`"))),
        }
    }
}

/// How a map was trained. Margin-only fields are `None` for ridge maps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainMeta {
    pub train_size: usize,
    pub gamma: Option<f64>,
    pub negatives: Option<usize>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    weights: Array2<f64>,
    lambda: f64,
    objective: Objective,
    meta: TrainMeta,
}

impl LinearMap {
    pub fn new(weights: Array2<f64>, lambda: f64, objective: Objective, meta: TrainMeta) -> Result<Self> {
        if lambda.is_nan() || lambda < 0.0 || (objective == Objective::Margin && lambda != 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda {lambda} is not valid for a {objective} map"
            )));
        }
        Ok(LinearMap {
            weights,
            lambda,
            objective,
            meta,
        })
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn meta(&self) -> &TrainMeta {
        &self.meta
    }

    pub fn source_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn target_dim(&self) -> usize {
        self.weights.ncols()
    }

    /// Maps each row of `x`. Output rows are not normalized.
    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        apply_map(self, x)
    }

    /// Writes `u v lambda objective` followed by `u` rows of `v` values at
    /// 17 significant digits.
    pub fn write<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(
            w,
            "{} {} {:.16e} {}",
            self.source_dim(),
            self.target_dim(),
            self.lambda,
            self.objective
        )?;
        for row in self.weights.rows() {
            let mut first = true;
            for v in row {
                if !first {
                    w.write_all(b" ")?;
                }
                write!(w, "{v:.16e}")?;
                first = false;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let header = match lines.next() {
            Some(l) => l.map_err(|e| Error::io("<reader>", e))?,
            None => return Err(Error::Empty),
        };
        let fields: Vec<&str> = header.split_whitespace().collect();
        let bad_header = || Error::parse(1, "expected header `u v lambda objective`");
        if fields.len() != 4 {
            return Err(bad_header());
        }
        let u: usize = fields[0].parse().map_err(|_| bad_header())?;
        let v: usize = fields[1].parse().map_err(|_| bad_header())?;
        let lambda: f64 = fields[2].parse().map_err(|_| bad_header())?;
        let objective: Objective = fields[3].parse().map_err(|_| bad_header())?;

        let mut data = Vec::with_capacity(u * v);
        let mut rows = 0;
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let line = line.map_err(|e| Error::io("<reader>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let before = data.len();
            for f in line.split_whitespace() {
                data.push(
                    f.parse::<f64>()
                        .map_err(|_| Error::parse(lineno, format!("`{f}` is not a number")))?,
                );
            }
            if data.len() - before != v {
                return Err(Error::parse(lineno, format!("expected {v} values")));
            }
            rows += 1;
        }
        if rows != u {
            return Err(Error::parse(1, format!("header declares {u} rows, found {rows}")));
        }
        let weights = Array2::from_shape_vec((u, v), data).expect("row lengths were checked");
        LinearMap::new(weights, lambda, objective, TrainMeta::default())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(file)
    }
}

/// Computes `X W` for a batch of source row vectors.
pub fn apply_map(map: &LinearMap, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x.ncols() != map.source_dim() {
        return Err(Error::Shape(format!(
            "input has {} columns, map expects {}",
            x.ncols(),
            map.source_dim()
        )));
    }
    Ok(x.dot(&map.weights))
}

pub(crate) fn check_pairs(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::Shape(format!(
            "{} source rows but {} target rows",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::Shape("no training pairs".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn ridge_map(w: Array2<f64>) -> LinearMap {
        LinearMap::new(w, 0.0, Objective::Ridge, TrainMeta::default()).unwrap()
    }

    #[test]
    fn identity_map_is_noop() {
        let m = ridge_map(Array2::eye(3));
        let x = array![[1.0, -2.0, 0.5], [0.0, 3.0, 4.0]];
        assert_eq!(m.apply(x.view()).unwrap(), x);
    }

    #[test]
    fn empty_batch_keeps_target_width() {
        let m = ridge_map(Array2::zeros((3, 5)));
        let out = m.apply(Array2::zeros((0, 3)).view()).unwrap();
        assert_eq!(out.dim(), (0, 5));
    }

    #[test]
    fn shape_mismatch() {
        let m = ridge_map(Array2::eye(3));
        assert!(matches!(m.apply(Array2::zeros((2, 2)).view()), Err(Error::Shape(_))));
    }

    #[test]
    fn margin_maps_carry_no_penalty() {
        assert!(LinearMap::new(Array2::eye(2), 0.5, Objective::Margin, TrainMeta::default()).is_err());
        assert!(LinearMap::new(Array2::eye(2), -1.0, Objective::Ridge, TrainMeta::default()).is_err());
    }

    #[test]
    fn serialization_is_exact() {
        let w = array![[0.1, 1.0 / 3.0, -2.5e-300], [std::f64::consts::PI, 7.0, 1e300]];
        let m = LinearMap::new(w, 0.123456789, Objective::Ridge, TrainMeta::default()).unwrap();
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("2 3 1.2345678900000000e-1 ridge\n"));
        let back = LinearMap::read(buf.as_slice()).unwrap();
        assert_eq!(back.weights(), m.weights());
        assert_eq!(back.lambda().to_bits(), m.lambda().to_bits());
    }

    #[test]
    fn rejects_truncated_file() {
        let text = "2 2 0 ridge\n1 0\n";
        assert!(LinearMap::read(text.as_bytes()).is_err());
    }
}
