//! Tiled cosine similarity kernel.
//!
//! Rows are normalized in f64 and stored as f32; each tile of targets is
//! multiplied against all pivots with a single-precision GEMM and written
//! straight into its column block of the output. Apart from the output,
//! the only allocation proportional to the target count is one tile per
//! worker.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Targets per GEMM tile.
pub const DEFAULT_TILE: usize = 2048;

fn inverse_norms(m: ArrayView2<'_, f64>, what: &str) -> Result<Vec<f64>> {
    m.rows()
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let n = r.dot(&r).sqrt();
            if n == 0.0 {
                Err(Error::ZeroVector(format!("{what} row {i}")))
            } else {
                Ok(1.0 / n)
            }
        })
        .collect()
}

fn normalized_f32<'a>(rows: impl Iterator<Item = (ArrayView1<'a, f64>, f64)>, n: usize, d: usize) -> Array2<f32> {
    let mut out = Array2::<f32>::zeros((n, d));
    for (mut dst, (src, inv)) in out.rows_mut().into_iter().zip(rows) {
        for (o, &v) in dst.iter_mut().zip(src) {
            *o = (v * inv) as f32;
        }
    }
    out
}

/// `scores[i][j] = cos(pivots[i], targets[j])`.
pub fn cosine_scores(
    pivots: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
    tile: usize,
) -> Result<Array2<f32>> {
    let d = pivots.ncols();
    if targets.ncols() != d {
        return Err(Error::Shape(format!(
            "pivots have {d} columns, targets {}",
            targets.ncols()
        )));
    }
    let tile = tile.max(1);
    let p_inv = inverse_norms(pivots, "pivot")?;
    let t_inv = inverse_norms(targets, "target")?;
    let pn = normalized_f32(pivots.rows().into_iter().zip(p_inv.iter().copied()), pivots.nrows(), d);

    let mut out = Array2::<f32>::zeros((pivots.nrows(), targets.nrows()));
    if out.is_empty() {
        return Ok(out);
    }
    out.axis_chunks_iter_mut(Axis(1), tile)
        .into_par_iter()
        .enumerate()
        .for_each(|(b, mut block)| {
            let j0 = b * tile;
            let w = block.ncols();
            let slab = targets.slice(ndarray::s![j0..j0 + w, ..]);
            let rows = slab
                .rows()
                .into_iter()
                .zip(t_inv[j0..j0 + w].iter().copied());
            let tn = normalized_f32(rows, w, d);
            general_mat_mul(1.0, &pn, &tn.t(), 0.0, &mut block);
        });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn orthonormal_pair() {
        let s = cosine_scores(array![[1.0, 0.0]].view(), array![[1.0, 0.0], [0.0, 1.0]].view(), 1)
            .unwrap();
        assert_eq!(s, array![[1.0f32, 0.0]]);
    }

    #[test]
    fn diagonal() {
        let s = cosine_scores(array![[1.0, 1.0]].view(), array![[1.0, 0.0]].view(), 4).unwrap();
        assert!((s[[0, 0]] - std::f32::consts::FRAC_1_SQRT_2).abs() < 1e-6);
    }

    #[test]
    fn tile_size_does_not_change_values() {
        let p = array![[1.0, 2.0, -1.0], [0.5, 0.0, 3.0]];
        let t = array![[1.0, 0.0, 0.0], [2.0, 2.0, 1.0], [-1.0, 4.0, 0.5], [0.0, 0.0, 9.0], [1.0, 1.0, 1.0]];
        let a = cosine_scores(p.view(), t.view(), 1).unwrap();
        let b = cosine_scores(p.view(), t.view(), 2).unwrap();
        let c = cosine_scores(p.view(), t.view(), 100).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn zero_rows_are_named() {
        let err = cosine_scores(array![[1.0, 0.0]].view(), array![[1.0, 0.0], [0.0, 0.0]].view(), 8)
            .unwrap_err();
        assert!(matches!(err, Error::ZeroVector(ref s) if s == "target row 1"), "{err}");
        assert!(cosine_scores(array![[0.0, 0.0]].view(), array![[1.0, 0.0]].view(), 8).is_err());
        assert!(matches!(
            cosine_scores(array![[1.0]].view(), array![[1.0, 0.0]].view(), 8),
            Err(Error::Shape(_))
        ));
    }
}
