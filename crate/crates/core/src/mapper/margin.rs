//! Margin-ranking training of the linear map.
//!
//! For a training pair `(x_i, y_i)` with prediction `ŷ_i = x_i W` and a set
//! of sampled negative targets `y_j`, the loss is
//!
//! ```text
//! Σ_j max(0, γ + dist(ŷ_i, y_i) − dist(ŷ_i, y_j)),   dist(a, b) = 1 − cos(a, b)
//! ```
//!
//! Optimization is plain per-example SGD with Adagrad step sizes. Examples
//! are visited in a seeded shuffled order and negatives are resampled each
//! epoch, so a fixed seed gives bit-identical weights.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{check_pairs, LinearMap, Objective, TrainMeta};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MarginConfig {
    pub gamma: f64,
    pub negatives: usize,
    pub epochs: usize,
    /// Adagrad base learning rate.
    pub learning_rate: f64,
    /// When set, this fraction of the pairs is held out and its loss is
    /// tracked per epoch; the map is trained on the rest.
    pub heldout_frac: Option<f64>,
    pub seed: u64,
}

impl Default for MarginConfig {
    fn default() -> Self {
        MarginConfig {
            gamma: 0.3,
            negatives: 10,
            epochs: 10,
            learning_rate: 0.05,
            heldout_frac: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-example training loss during the epoch.
    pub train_loss: f64,
    /// Mean per-example loss on the held-out split after the epoch.
    pub heldout_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MarginFit {
    pub map: LinearMap,
    pub history: Vec<EpochStats>,
}

/// Hinge loss of one example and its gradient with respect to the
/// prediction `ŷ`. Terms sitting inside the margin contribute nothing.
pub fn hinge_loss_and_grad(
    pred: ArrayView1<'_, f64>,
    pos: ArrayView1<'_, f64>,
    negs: &[ArrayView1<'_, f64>],
    gamma: f64,
) -> (f64, ndarray::Array1<f64>) {
    let pn = pred.dot(&pred).sqrt();
    let cos_and_grad = |t: ArrayView1<'_, f64>| {
        let tn = t.dot(&t).sqrt();
        let c = pred.dot(&t) / (pn * tn);
        // d cos / d ŷ = (t/|t| − cos ŷ/|ŷ|) / |ŷ|
        let g = (&t / tn - &pred * (c / pn)) / pn;
        (c, g)
    };
    let (cp, gp) = cos_and_grad(pos);
    let mut grad = ndarray::Array1::zeros(pred.len());
    if !cp.is_finite() {
        return (f64::NAN, grad);
    }
    let mut loss = 0.0;
    for &neg in negs {
        let cn = pred.dot(&neg) / (pn * neg.dot(&neg).sqrt());
        let term = gamma - cp + cn;
        if term > 0.0 {
            loss += term;
            let (_, gn) = cos_and_grad(neg);
            grad = grad - &gp + gn;
        }
    }
    (loss, grad)
}

fn sample_negatives(rng: &mut ChaCha8Rng, n: usize, exclude: usize, k: usize) -> Vec<usize> {
    index::sample(rng, n - 1, k)
        .into_iter()
        .map(|j| if j >= exclude { j + 1 } else { j })
        .collect()
}

struct Split {
    train: Vec<usize>,
    heldout: Vec<usize>,
}

fn split(m: usize, frac: Option<f64>, rng: &mut ChaCha8Rng) -> Result<Split> {
    let Some(frac) = frac else {
        return Ok(Split {
            train: (0..m).collect(),
            heldout: Vec::new(),
        });
    };
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::InvalidArgument(format!("held-out fraction {frac} not in (0, 1)")));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);
    let n_held = ((m as f64 * frac).round() as usize).clamp(1, m - 1);
    let heldout = order[..n_held].to_vec();
    let mut train = order[n_held..].to_vec();
    train.sort_unstable();
    Ok(Split { train, heldout })
}

fn mean_loss(
    w: &Array2<f64>,
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    items: &[usize],
    negatives: &[Vec<usize>],
    gamma: f64,
) -> f64 {
    let mut total = 0.0;
    for (&i, negs) in items.iter().zip(negatives) {
        let pred = x.row(i).dot(w);
        let negs: Vec<_> = negs.iter().map(|&j| y.row(j)).collect();
        total += hinge_loss_and_grad(pred.view(), y.row(i), &negs, gamma).0;
    }
    total / items.len() as f64
}

/// Trains a map with the margin objective.
pub fn fit_margin(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    config: &MarginConfig,
) -> Result<MarginFit> {
    check_pairs(x, y)?;
    let m = x.nrows();
    if m < 2 {
        return Err(Error::InvalidArgument("margin training needs at least two pairs".into()));
    }
    if config.gamma.is_nan() || config.gamma <= 0.0 || config.epochs == 0 || config.negatives == 0 {
        return Err(Error::InvalidArgument(
            "gamma, negatives and epochs must all be positive".into(),
        ));
    }
    if config.learning_rate.is_nan() || config.learning_rate <= 0.0 {
        return Err(Error::InvalidArgument("learning rate must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let Split { train, heldout } = split(m, config.heldout_frac, &mut rng)?;
    if config.negatives >= train.len() {
        return Err(Error::InvalidArgument(format!(
            "{} negatives requested but only {} training pairs",
            config.negatives,
            train.len()
        )));
    }

    // fixed held-out negatives, drawn among held-out targets
    let held_negs: Vec<Vec<usize>> = heldout
        .iter()
        .enumerate()
        .map(|(pos, _)| {
            let k = config.negatives.min(heldout.len().saturating_sub(1));
            sample_negatives(&mut rng, heldout.len(), pos, k)
                .into_iter()
                .map(|j| heldout[j])
                .collect()
        })
        .collect();

    let (u, v) = (x.ncols(), y.ncols());
    let init_scale = 1.0 / (u as f64).sqrt();
    let mut w = Array2::from_shape_fn((u, v), |_| {
        init_scale * rng.sample::<f64, _>(StandardNormal)
    });
    let mut accum = Array2::<f64>::zeros((u, v));
    let mut history = Vec::with_capacity(config.epochs);
    let mut order = train.clone();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let slot = train.binary_search(&i).expect("order is a permutation of train");
            let negs: Vec<_> = sample_negatives(&mut rng, train.len(), slot, config.negatives)
                .into_iter()
                .map(|j| y.row(train[j]))
                .collect();
            let xi = x.row(i);
            let pred = xi.dot(&w);
            let (loss, g) = hinge_loss_and_grad(pred.view(), y.row(i), &negs, config.gamma);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            total += loss;
            if loss == 0.0 {
                continue;
            }
            // dL/dW = xᵢᵀ g
            for (a, (mut wrow, mut grow)) in xi
                .iter()
                .zip(w.axis_iter_mut(Axis(0)).zip(accum.axis_iter_mut(Axis(0))))
            {
                if *a == 0.0 {
                    continue;
                }
                for ((wk, gk), &dk) in wrow.iter_mut().zip(grow.iter_mut()).zip(g.iter()) {
                    let d = a * dk;
                    *gk += d * d;
                    *wk -= config.learning_rate * d / (gk.sqrt() + 1e-8);
                }
            }
        }
        let train_loss = total / order.len() as f64;
        if !train_loss.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        let heldout_loss = (!heldout.is_empty())
            .then(|| mean_loss(&w, x, y, &heldout, &held_negs, config.gamma));
        if heldout_loss.is_some_and(|l| !l.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            heldout_loss,
        });
    }

    let map = LinearMap::new(
        w,
        0.0,
        Objective::Margin,
        TrainMeta {
            train_size: train.len(),
            gamma: Some(config.gamma),
            negatives: Some(config.negatives),
            epochs: Some(config.epochs),
            seed: Some(config.seed),
        },
    )?;
    Ok(MarginFit { map, history })
}

#[derive(Debug, Clone)]
pub struct MarginTuning {
    /// Refit on all pairs with the winning `(γ, k)`.
    pub fit: MarginFit,
    /// `(γ, k, held-out precision@1 in percent)` per candidate.
    pub scores: Vec<(f64, usize, f64)>,
}

/// Picks `(γ, k)` by held-out precision@1, then refits on every pair.
///
/// Each candidate is trained on the same split; its held-out predictions
/// are matched against the held-out targets by cosine. Ties keep the
/// earlier candidate.
pub fn tune_margin(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    gammas: &[f64],
    negatives: &[usize],
    heldout_frac: f64,
    base: &MarginConfig,
) -> Result<MarginTuning> {
    check_pairs(x, y)?;
    let mut rng = ChaCha8Rng::seed_from_u64(base.seed);
    let Split { train, heldout } = split(x.nrows(), Some(heldout_frac), &mut rng)?;
    let xt = x.select(Axis(0), &train);
    let yt = y.select(Axis(0), &train);
    let xh = x.select(Axis(0), &heldout);
    let yh = y.select(Axis(0), &heldout);

    let mut scores = Vec::new();
    let mut best: Option<(f64, usize, f64)> = None;
    for &gamma in gammas {
        for &k in negatives {
            if k >= train.len() {
                continue;
            }
            let cfg = MarginConfig {
                gamma,
                negatives: k,
                heldout_frac: None,
                ..base.clone()
            };
            let fit = fit_margin(xt.view(), yt.view(), &cfg)?;
            let pred = fit.map.apply(xh.view())?;
            let acc = precision_at_1(pred.view(), yh.view());
            scores.push((gamma, k, acc));
            if best.is_none_or(|b| acc > b.2) {
                best = Some((gamma, k, acc));
            }
        }
    }
    let Some((gamma, k, _)) = best else {
        return Err(Error::InvalidArgument(
            "no (gamma, negatives) candidate fits the training size".into(),
        ));
    };
    let cfg = MarginConfig {
        gamma,
        negatives: k,
        heldout_frac: None,
        ..base.clone()
    };
    Ok(MarginTuning {
        fit: fit_margin(x, y, &cfg)?,
        scores,
    })
}

/// Percentage of rows of `pred` whose most cosine-similar row of `gold` is
/// the row with the same index. Ties go to the lower index.
fn precision_at_1(pred: ArrayView2<'_, f64>, gold: ArrayView2<'_, f64>) -> f64 {
    let norms: Vec<f64> = gold.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let mut hits = 0;
    for (i, p) in pred.rows().into_iter().enumerate() {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for (j, g) in gold.rows().into_iter().enumerate() {
            let c = p.dot(&g) / norms[j];
            if c > best.0 {
                best = (c, j);
            }
        }
        if best.1 == i {
            hits += 1;
        }
    }
    100.0 * hits as f64 / pred.nrows() as f64
}
