//! Pivot-to-target retrieval over a dense cosine similarity matrix.
//!
//! Three query methods share the same [`SimilarityMatrix`]:
//!
//! * [`nn_query`] ranks targets by raw cosine, independently per pivot.
//! * [`nrm_query`] first rescales every target's column of similarities to
//!   unit length over the whole pivot set, so targets that are close to
//!   everything are penalized.
//! * [`gc_query`] inverts the query. For pivot `x` and target `y` it looks
//!   up the position of `x` in `y`'s own ranking of all pivots, and orders
//!   targets by `rank_y(x) − cos(x, y)`. The cosine only separates targets
//!   with equal rank when cosines are non-negative; with mixed signs a
//!   difference of more than 1 between two cosines can outweigh one rank
//!   step, which is the formula applied literally.
//!
//! Exact score ties are broken by ascending index everywhere (target index
//! for per-pivot orderings, pivot index for per-target orderings), which
//! makes every result independent of thread count and scheduling.

mod kernel;
mod topk;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
pub use kernel::DEFAULT_TILE;
use topk::TopK;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Nn,
    Nrm,
    Gc,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Nn, Method::Nrm, Method::Gc];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Nn => "nn",
            Method::Nrm => "nn_nrm",
            Method::Gc => "gc",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nn" => Ok(Method::Nn),
            "nrm" | "nn_nrm" => Ok(Method::Nrm),
            "gc" => Ok(Method::Gc),
            other => Err(Error::InvalidArgument(format!("unknown retrieval method `{other}`"))),
        }
    }
}

/// Cosine scores, one row per pivot and one column per target.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    scores: Array2<f32>,
}

impl SimilarityMatrix {
    /// Wraps precomputed scores. Values must be finite; any memory layout
    /// is accepted and stored row-major.
    pub fn from_scores(scores: Array2<f32>) -> Result<Self> {
        if let Some(((i, j), v)) = scores.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("score ({i}, {j}) = {v} is not finite")));
        }
        let scores = if scores.is_standard_layout() {
            scores
        } else {
            scores.as_standard_layout().into_owned()
        };
        Ok(SimilarityMatrix { scores })
    }

    pub fn scores(&self) -> ArrayView2<'_, f32> {
        self.scores.view()
    }

    pub fn pivots(&self) -> usize {
        self.scores.nrows()
    }

    pub fn targets(&self) -> usize {
        self.scores.ncols()
    }

    pub fn into_scores(self) -> Array2<f32> {
        self.scores
    }
}

/// Cosine similarity of every pivot row with every target row.
pub fn cosine_matrix(pivots: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>) -> Result<SimilarityMatrix> {
    cosine_matrix_tiled(pivots, targets, DEFAULT_TILE)
}

/// [`cosine_matrix`] with an explicit number of targets per tile.
pub fn cosine_matrix_tiled(
    pivots: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
    tile: usize,
) -> Result<SimilarityMatrix> {
    Ok(SimilarityMatrix {
        scores: kernel::cosine_scores(pivots, targets, tile)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub target: usize,
    /// 1-based position in the list.
    pub rank: usize,
    /// The method's ordering score: cosine for `nn`, column-normalized
    /// cosine for `nrm`, `rank − cosine` for `gc`.
    pub score: f64,
    pub cosine: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborResult {
    method: Method,
    k: usize,
    lists: Vec<Vec<Neighbor>>,
}

impl NeighborResult {
    pub fn method(&self) -> Method {
        self.method
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn lists(&self) -> &[Vec<Neighbor>] {
        &self.lists
    }

    pub fn pivots(&self) -> usize {
        self.lists.len()
    }

    /// Top-ranked target of every pivot.
    pub fn top1(&self) -> Vec<usize> {
        self.lists.iter().map(|l| l[0].target).collect()
    }

    /// Keeps only the first `n` pivots, e.g. to drop auxiliary pivots that
    /// were appended after the evaluated ones.
    pub fn truncate_pivots(mut self, n: usize) -> Self {
        self.lists.truncate(n);
        self
    }

    /// Shortens every list to its first `k` entries.
    pub fn truncate_k(mut self, k: usize) -> Self {
        let k = k.min(self.k);
        for l in &mut self.lists {
            l.truncate(k);
        }
        self.k = k;
        self
    }

    /// Writes `pivot<TAB>rank<TAB>target<TAB>cosine<TAB>score` lines after a
    /// `#` header naming the method and `k`.
    pub fn write_tsv<W: Write>(
        &self,
        w: &mut W,
        pivot_names: &[String],
        target_names: &[String],
        extra_header: &str,
    ) -> Result<()> {
        let io = |e| Error::io("<output>", e);
        write!(w, "# method={} k={}", self.method, self.k).map_err(io)?;
        if !extra_header.is_empty() {
            write!(w, " {extra_header}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
        for (p, list) in self.lists.iter().enumerate() {
            let pname = pivot_names
                .get(p)
                .ok_or_else(|| Error::Shape(format!("no name for pivot {p}")))?;
            for n in list {
                let tname = target_names
                    .get(n.target)
                    .ok_or_else(|| Error::Shape(format!("no name for target {}", n.target)))?;
                writeln!(w, "{pname}\t{}\t{tname}\t{:.6}\t{:.6}", n.rank, n.cosine, n.score).map_err(io)?;
            }
        }
        Ok(())
    }
}

fn check_k(sim: &SimilarityMatrix, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if k > sim.targets() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {} available targets",
            sim.targets()
        )));
    }
    Ok(())
}

/// Sort key placing higher scores first and, among equal scores, lower
/// indices first. `-0.0` and `0.0` compare equal, as they do under `==`.
#[inline]
fn descending_key(score: f32, idx: usize) -> u64 {
    let bits = (score + 0.0).to_bits();
    let asc = if bits >> 31 == 1 { !bits } else { bits | 0x8000_0000 };
    ((!asc as u64) << 32) | idx as u64
}

/// 1-based rank of every target within its pivot's row, by decreasing
/// score.
pub fn rank_targets(sim: &SimilarityMatrix) -> Array2<u32> {
    let (p, t) = sim.scores.dim();
    let mut ranks = Array2::<u32>::zeros((p, t));
    ranks
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(sim.scores.axis_iter(Axis(0)).into_par_iter())
        .for_each(|(mut out, row)| {
            let mut keys: Vec<u64> = row.iter().enumerate().map(|(j, &s)| descending_key(s, j)).collect();
            keys.sort_unstable();
            for (r, key) in keys.iter().enumerate() {
                out[(key & 0xffff_ffff) as usize] = r as u32 + 1;
            }
        });
    ranks
}

fn finish(method: Method, k: usize, sim: &SimilarityMatrix, tops: Vec<TopK>, score: impl Fn(f64) -> f64) -> NeighborResult {
    let lists = tops
        .into_iter()
        .enumerate()
        .map(|(i, top)| {
            top.into_sorted()
                .into_iter()
                .enumerate()
                .map(|(r, (key, j))| Neighbor {
                    target: j,
                    rank: r + 1,
                    score: score(key),
                    cosine: sim.scores[[i, j]],
                })
                .collect()
        })
        .collect();
    NeighborResult { method, k, lists }
}

/// Standard nearest neighbours: the `k` most cosine-similar targets.
pub fn nn_query(sim: &SimilarityMatrix, k: usize) -> Result<NeighborResult> {
    check_k(sim, k)?;
    let tops: Vec<TopK> = sim
        .scores
        .axis_iter(Axis(0))
        .into_par_iter()
        .map(|row| {
            let mut top = TopK::new(k);
            for (j, &s) in row.iter().enumerate() {
                top.offer(-(s as f64), j);
            }
            top
        })
        .collect();
    Ok(finish(Method::Nn, k, sim, tops, |key| -key))
}

/// Euclidean norm of each target column over all pivots, accumulated in
/// pivot order.
fn column_norms(sim: &SimilarityMatrix) -> Result<Vec<f64>> {
    const CHUNK: usize = 4096;
    let mut norms = vec![0.0f64; sim.targets()];
    norms.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let j0 = c * CHUNK;
        for row in sim.scores.rows() {
            let row = row.as_slice().map(|s| &s[j0..j0 + chunk.len()]);
            match row {
                Some(r) => {
                    for (acc, &v) in chunk.iter_mut().zip(r) {
                        *acc += (v as f64) * (v as f64);
                    }
                }
                None => unreachable!("similarity rows are contiguous"),
            }
        }
    });
    for (j, n) in norms.iter_mut().enumerate() {
        *n = n.sqrt();
        if *n == 0.0 {
            return Err(Error::ZeroVector(format!("similarity column of target {j}")));
        }
    }
    Ok(norms)
}

/// Nearest neighbours after scaling each target's similarity column to
/// unit Euclidean norm over the pivot set.
pub fn nrm_query(sim: &SimilarityMatrix, k: usize) -> Result<NeighborResult> {
    check_k(sim, k)?;
    let norms = column_norms(sim)?;
    let tops: Vec<TopK> = sim
        .scores
        .axis_iter(Axis(0))
        .into_par_iter()
        .map(|row| {
            let mut top = TopK::new(k);
            for (j, &s) in row.iter().enumerate() {
                top.offer(-(s as f64 / norms[j]), j);
            }
            top
        })
        .collect();
    Ok(finish(Method::Nrm, k, sim, tops, |key| -key))
}

/// Tuning for [`gc_query_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GcConfig {
    /// Target columns ranked per pass. Working memory per worker is about
    /// `pivots × block × 12` bytes plus `pivots × k` candidates; no
    /// `pivots × targets` rank matrix is ever stored.
    pub block: usize,
}

impl Default for GcConfig {
    fn default() -> Self {
        GcConfig { block: 64 }
    }
}

/// Globally corrected retrieval with cosine tie-breaking.
pub fn gc_query(sim: &SimilarityMatrix, k: usize) -> Result<NeighborResult> {
    gc_query_with(sim, k, GcConfig::default())
}

pub fn gc_query_with(sim: &SimilarityMatrix, k: usize, config: GcConfig) -> Result<NeighborResult> {
    check_k(sim, k)?;
    let (p, t) = sim.scores.dim();
    if p == 0 {
        return Ok(NeighborResult {
            method: Method::Gc,
            k,
            lists: Vec::new(),
        });
    }
    let block = config.block.max(1);
    let n_blocks = t.div_ceil(block);
    let scores = &sim.scores;

    let tops = (0..n_blocks)
        .into_par_iter()
        .fold(
            || (vec![TopK::new(k); p], vec![0f32; 0], vec![0u64; p]),
            |(mut tops, mut colbuf, mut keys), b| {
                let j0 = b * block;
                let w = block.min(t - j0);
                // transpose the block so each target column is contiguous
                colbuf.resize(w * p, 0.0);
                for (i, row) in scores.rows().into_iter().enumerate() {
                    let row = row.as_slice().expect("similarity rows are contiguous");
                    for (jj, &v) in row[j0..j0 + w].iter().enumerate() {
                        colbuf[jj * p + i] = v;
                    }
                }
                for jj in 0..w {
                    let col = &colbuf[jj * p..(jj + 1) * p];
                    for (i, key) in keys.iter_mut().enumerate() {
                        *key = descending_key(col[i], i);
                    }
                    keys.sort_unstable();
                    for (r, key) in keys.iter().enumerate() {
                        let i = (key & 0xffff_ffff) as usize;
                        let gc_key = (r + 1) as f64 - col[i] as f64;
                        tops[i].offer(gc_key, j0 + jj);
                    }
                }
                (tops, colbuf, keys)
            },
        )
        .map(|(tops, _, _)| tops)
        .reduce(
            || vec![TopK::new(k); p],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    x.merge(y);
                }
                a
            },
        );
    Ok(finish(Method::Gc, k, sim, tops, |key| key))
}

/// Runs `method` with default settings.
pub fn query(sim: &SimilarityMatrix, method: Method, k: usize) -> Result<NeighborResult> {
    match method {
        Method::Nn => nn_query(sim, k),
        Method::Nrm => nrm_query(sim, k),
        Method::Gc => gc_query(sim, k),
    }
}
