//! Reference implementations and fixtures shared by the integration tests.
//!
//! The oracles sort full rows and columns with explicit comparators, with
//! no bounded heaps, packed keys or blocking, so they share no code path
//! with the library beyond reading the scores.

#![allow(dead_code)]

use std::cmp::Ordering;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// Scores in [-1, 1]; with `coarse` they are rounded to one nonzero
/// decimal so ties are frequent. Zero is avoided so that no similarity
/// column vanishes.
pub fn random_scores(rng: &mut ChaCha8Rng, p: usize, t: usize, coarse: bool) -> Array2<f32> {
    Array2::from_shape_simple_fn((p, t), || {
        let v: f32 = rng.random_range(-1.0..=1.0);
        if coarse {
            let r = (v * 10.0).round() / 10.0;
            if r == 0.0 { 0.1 } else { r }
        } else {
            v
        }
    })
}

/// Larger score first, then smaller index.
fn by_score_desc(a: (f64, usize), b: (f64, usize)) -> Ordering {
    b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1))
}

/// Smaller key first, then smaller index.
fn by_key_asc(a: (f64, usize), b: (f64, usize)) -> Ordering {
    a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1))
}

/// `(target, score)` lists.
pub type Lists = Vec<Vec<(usize, f64)>>;

pub fn oracle_nn(s: &Array2<f32>, k: usize) -> Lists {
    s.rows()
        .into_iter()
        .map(|row| {
            let mut c: Vec<(f64, usize)> = row.iter().enumerate().map(|(j, &v)| (v as f64, j)).collect();
            c.sort_by(|a, b| by_score_desc(*a, *b));
            c.into_iter().take(k).map(|(v, j)| (j, v)).collect()
        })
        .collect()
}

pub fn oracle_nrm(s: &Array2<f32>, k: usize) -> Lists {
    let (p, t) = s.dim();
    let mut norms = vec![0.0f64; t];
    for (j, n) in norms.iter_mut().enumerate() {
        for i in 0..p {
            let v = s[[i, j]] as f64;
            *n += v * v;
        }
        *n = n.sqrt();
    }
    (0..p)
        .map(|i| {
            let mut c: Vec<(f64, usize)> = (0..t).map(|j| (s[[i, j]] as f64 / norms[j], j)).collect();
            c.sort_by(|a, b| by_score_desc(*a, *b));
            c.into_iter().take(k).map(|(v, j)| (j, v)).collect()
        })
        .collect()
}

/// `rank[i][j]`: 1-based position of pivot `i` in target `j`'s list of
/// pivots by decreasing similarity.
pub fn oracle_pivot_ranks(s: &Array2<f32>) -> Vec<Vec<usize>> {
    let (p, t) = s.dim();
    let mut rank = vec![vec![0; t]; p];
    for j in 0..t {
        let mut c: Vec<(f64, usize)> = (0..p).map(|i| (s[[i, j]] as f64, i)).collect();
        c.sort_by(|a, b| by_score_desc(*a, *b));
        for (r, (_, i)) in c.into_iter().enumerate() {
            rank[i][j] = r + 1;
        }
    }
    rank
}

pub fn oracle_gc(s: &Array2<f32>, k: usize) -> Lists {
    let (p, t) = s.dim();
    let rank = oracle_pivot_ranks(s);
    (0..p)
        .map(|i| {
            let mut c: Vec<(f64, usize)> = (0..t).map(|j| (rank[i][j] as f64 - s[[i, j]] as f64, j)).collect();
            c.sort_by(|a, b| by_key_asc(*a, *b));
            c.into_iter().take(k).map(|(v, j)| (j, v)).collect()
        })
        .collect()
}

pub fn lists_of(r: &zeroshot::NeighborResult) -> Lists {
    r.lists()
        .iter()
        .map(|l| l.iter().map(|n| (n.target, n.score)).collect())
        .collect()
}

pub fn targets_of(r: &zeroshot::NeighborResult) -> Vec<Vec<usize>> {
    r.lists().iter().map(|l| l.iter().map(|n| n.target).collect()).collect()
}

/// Minimizes `‖XW − Y‖² + λ‖W‖²` by plain gradient descent with step
/// `1/L`, `L` from power iteration on `XᵀX + λI`.
pub fn gd_ridge(x: &Array2<f64>, y: &Array2<f64>, lambda: f64, tol: f64) -> Array2<f64> {
    let xtx = x.t().dot(x);
    let xty = x.t().dot(y);
    let mut v = ndarray::Array1::from_elem(xtx.nrows(), 1.0);
    let mut top = 0.0;
    for _ in 0..500 {
        let w = xtx.dot(&v);
        top = w.dot(&w).sqrt();
        v = w / top;
    }
    let step = 1.0 / (1.05 * (top + lambda));
    let mut w = Array2::<f64>::zeros((x.ncols(), y.ncols()));
    for _ in 0..200_000 {
        let grad = xtx.dot(&w) - &xty + &(&w * lambda);
        let g = grad.mapv(|e| e * e).sum().sqrt();
        w = &w - &(grad * step);
        if g < tol {
            break;
        }
    }
    w
}

pub fn frobenius(a: &Array2<f64>) -> f64 {
    a.mapv(|e| e * e).sum().sqrt()
}

/// Peak resident set size of this process in bytes, if the platform
/// reports it.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}
