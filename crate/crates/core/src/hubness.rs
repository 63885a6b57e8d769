//! Hubness diagnostics.
//!
//! `N_k(y)` counts the pivots whose `k`-neighbour list contains target `y`.
//! For a GC result the same count is taken over the GC lists. A heavily
//! right-skewed `N_k` distribution, with a few targets appearing in a large
//! share of all lists, is the signature of hubness.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use ndarray::{Array2, ArrayView2, Axis};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::embedding::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::retrieval::{Method, NeighborResult};

#[derive(Debug, Clone, PartialEq)]
pub struct HubnessReport {
    pub k: usize,
    pub method: Method,
    pub pivots: usize,
    pub targets: Vec<String>,
    /// Aligned with `targets`.
    pub n_k: Vec<u32>,
    pub histogram: BTreeMap<u32, usize>,
    pub max_nk: u32,
    pub skewness: f64,
}

impl HubnessReport {
    /// The `n` targets with the largest `N_k`, ties by ascending index.
    pub fn top_hubs(&self, n: usize) -> Vec<(String, u32)> {
        let mut idx: Vec<usize> = (0..self.n_k.len()).collect();
        idx.sort_by(|&a, &b| self.n_k[b].cmp(&self.n_k[a]).then(a.cmp(&b)));
        idx.into_iter()
            .take(n)
            .map(|i| (self.targets[i].clone(), self.n_k[i]))
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.n_k.iter().map(|&v| v as u64).sum()
    }

    /// `target,n_k` rows.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "target,n_k")?;
        for (t, n) in self.targets.iter().zip(&self.n_k) {
            writeln!(w, "{},{}", csv_field(t), n)?;
        }
        Ok(())
    }

    /// `value,count` rows of the `N_k` histogram.
    pub fn write_histogram_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "value,count")?;
        for (v, c) in &self.histogram {
            writeln!(w, "{v},{c}")?;
        }
        Ok(())
    }

    pub fn summary(&self, correlation: Option<&Correlation>, top: usize) -> HubnessSummary {
        HubnessSummary {
            k: self.k,
            method: self.method.to_string(),
            pivots: self.pivots,
            max: self.max_nk,
            skewness: self.skewness,
            rho: correlation.map(|c| c.rho),
            t_statistic: correlation.map(|c| c.t_statistic),
            p_approx: correlation.map(|c| c.p_approx),
            top_hubs: self.top_hubs(top),
        }
    }
}

/// The JSON sidecar written next to the per-target CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HubnessSummary {
    pub k: usize,
    pub method: String,
    pub pivots: usize,
    pub max: u32,
    pub skewness: f64,
    pub rho: Option<f64>,
    pub t_statistic: Option<f64>,
    pub p_approx: Option<f64>,
    pub top_hubs: Vec<(String, u32)>,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Counts, for every target, the pivot lists that contain it.
pub fn hub_scores(result: &NeighborResult, targets: &[String]) -> Result<HubnessReport> {
    let mut n_k = vec![0u32; targets.len()];
    for (p, list) in result.lists().iter().enumerate() {
        if list.len() != result.k() {
            return Err(Error::Shape(format!(
                "pivot {p} has {} neighbours, expected {}",
                list.len(),
                result.k()
            )));
        }
        for n in list {
            let slot = n_k.get_mut(n.target).ok_or_else(|| {
                Error::InvalidArgument(format!("target {} is not in the target list", n.target))
            })?;
            *slot += 1;
        }
    }
    let dist = hub_distribution(&n_k);
    Ok(HubnessReport {
        k: result.k(),
        method: result.method(),
        pivots: result.pivots(),
        targets: targets.to_vec(),
        n_k,
        histogram: dist.histogram,
        max_nk: dist.max,
        skewness: dist.skewness,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    pub histogram: BTreeMap<u32, usize>,
    pub max: u32,
    pub skewness: f64,
}

/// Histogram, maximum and population skewness `m₃ / m₂^{3/2}` of `N_k`
/// values. Skewness is 0 when all values are equal.
pub fn hub_distribution(n_k: &[u32]) -> Distribution {
    let mut histogram = BTreeMap::new();
    for &v in n_k {
        *histogram.entry(v).or_insert(0) += 1;
    }
    let max = n_k.iter().copied().max().unwrap_or(0);
    Distribution {
        histogram,
        max,
        skewness: skewness(n_k),
    }
}

fn skewness(values: &[u32]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut m2, mut m3) = (0.0, 0.0);
    for &v in values {
        let d = v as f64 - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= n;
    m3 /= n;
    if m2 == 0.0 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

/// Ranks starting at 1; tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman's rank correlation with average ranks for ties; 0 when either
/// side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "spearman inputs differ in length");
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub rho: f64,
    pub n: usize,
    /// `ρ √((n−2)/(1−ρ²))`.
    pub t_statistic: f64,
    /// Two-sided p-value of `t_statistic` under Student's t with `n − 2`
    /// degrees of freedom. A large-sample approximation.
    pub p_approx: f64,
}

/// Spearman correlation between `N_k` and each target's cosine to the
/// mean pivot vector. `subset` restricts the targets entering the
/// correlation.
pub fn cosine_to_mean_correlation(
    targets: ArrayView2<'_, f64>,
    pivots: ArrayView2<'_, f64>,
    n_k: &[u32],
    subset: Option<&[usize]>,
) -> Result<Correlation> {
    if n_k.len() != targets.nrows() {
        return Err(Error::Shape(format!(
            "{} hubness scores for {} targets",
            n_k.len(),
            targets.nrows()
        )));
    }
    if pivots.ncols() != targets.ncols() {
        return Err(Error::Shape("pivots and targets differ in dimensionality".into()));
    }
    let all: Vec<usize>;
    let rows = match subset {
        Some(s) => s,
        None => {
            all = (0..targets.nrows()).collect();
            &all
        }
    };
    if rows.len() < 3 {
        return Err(Error::InvalidArgument("correlation needs at least 3 targets".into()));
    }
    let mean = pivots
        .mean_axis(Axis(0))
        .ok_or_else(|| Error::InvalidArgument("no pivots".into()))?;
    let mean_norm = mean.dot(&mean).sqrt();
    if mean_norm == 0.0 {
        return Err(Error::ZeroVector("mean pivot vector".into()));
    }
    let mut cosines = Vec::with_capacity(rows.len());
    let mut counts = Vec::with_capacity(rows.len());
    for &i in rows {
        let t = targets.row(i);
        let tn = t.dot(&t).sqrt();
        if tn == 0.0 {
            return Err(Error::ZeroVector(format!("target row {i}")));
        }
        cosines.push(t.dot(&mean) / (tn * mean_norm));
        counts.push(n_k[i] as f64);
    }
    let rho = spearman(&cosines, &counts);
    let n = rows.len();
    let df = (n - 2) as f64;
    let (t_statistic, p_approx) = if rho.abs() >= 1.0 {
        (rho.signum() * f64::INFINITY, 0.0)
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
        (t, 2.0 * dist.sf(t.abs()))
    };
    Ok(Correlation {
        rho,
        n,
        t_statistic,
        p_approx,
    })
}

/// Averages the rows of `space` that share a group label, e.g. many image
/// vectors of the same object class. Groups appear in order of first
/// occurrence; tokens without a label are skipped.
pub fn group_average(space: &EmbeddingSpace, labels: &HashMap<String, String>) -> Result<EmbeddingSpace> {
    let mut order: Vec<String> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (i, tok) in space.vocab().iter().enumerate() {
        let Some(label) = labels.get(tok) else { continue };
        let g = *slot.entry(label.as_str()).or_insert_with(|| {
            order.push(label.clone());
            members.push(Vec::new());
            order.len() - 1
        });
        members[g].push(i);
    }
    if order.is_empty() {
        return Err(Error::Empty);
    }
    let mut out = Array2::zeros((order.len(), space.dim()));
    for (mut row, rows) in out.rows_mut().into_iter().zip(&members) {
        for &i in rows {
            row += &space.row(i);
        }
        row /= rows.len() as f64;
    }
    EmbeddingSpace::new(order, out)
}
