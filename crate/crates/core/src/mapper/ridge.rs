//! Ridge regression through a thin SVD of the design matrix.
//!
//! With `X = U diag(d) Vᵀ`, the minimizer of `‖XW − Y‖²_F + λ‖W‖²_F` is
//! `W = V diag(d / (d² + λ)) Uᵀ Y`, and the fitted values are
//! `U diag(d² / (d² + λ)) Uᵀ Y`. One factorization therefore serves every
//! penalty on a grid, which is what makes the GCV search cheap.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{check_pairs, LinearMap, Objective, TrainMeta};
use crate::error::{Error, Result};

/// `{0} ∪ {10^e : e = -4..=6}`.
pub fn default_lambda_grid() -> Vec<f64> {
    std::iter::once(0.0)
        .chain((-4..=6).map(|e| 10f64.powi(e)))
        .collect()
}

/// A factored regression problem, reusable across penalties.
#[derive(Debug, Clone)]
pub struct RidgeProblem {
    u: Array2<f64>,
    singular: Array1<f64>,
    vt: Array2<f64>,
    uty: Array2<f64>,
    y: Array2<f64>,
    rank: usize,
    cols: usize,
}

impl RidgeProblem {
    pub fn new(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<Self> {
        check_pairs(x, y)?;
        let (m, n) = x.dim();
        let xm = DMatrix::from_fn(m, n, |i, j| x[[i, j]]);
        let svd = xm.svd(true, true);
        let um = svd.u.expect("requested U");
        let vtm = svd.v_t.expect("requested Vᵀ");
        let r = svd.singular_values.len();

        let u = Array2::from_shape_fn((m, r), |(i, j)| um[(i, j)]);
        let vt = Array2::from_shape_fn((r, n), |(i, j)| vtm[(i, j)]);
        let singular = Array1::from_iter(svd.singular_values.iter().copied());
        let smax = singular.iter().copied().fold(0.0, f64::max);
        let tol = smax * m.max(n) as f64 * f64::EPSILON;
        let rank = singular.iter().filter(|&&s| s > tol).count();
        let uty = u.t().dot(&y);
        Ok(RidgeProblem {
            u,
            singular,
            vt,
            uty,
            y: y.to_owned(),
            rank,
            cols: n,
        })
    }

    pub fn rows(&self) -> usize {
        self.u.nrows()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn singular_values(&self) -> &Array1<f64> {
        &self.singular
    }

    fn tol(&self) -> f64 {
        let smax = self.singular.iter().copied().fold(0.0, f64::max);
        smax * self.rows().max(self.cols) as f64 * f64::EPSILON
    }

    /// Per-component factors `d / (d² + λ)`; zero for numerically null
    /// components when `λ = 0`.
    fn inverse_factors(&self, lambda: f64) -> Array1<f64> {
        let tol = self.tol();
        self.singular
            .mapv(|s| if lambda == 0.0 && s <= tol { 0.0 } else { s / (s * s + lambda) })
    }

    /// Per-component smoother factors `d² / (d² + λ)`.
    fn shrink_factors(&self, lambda: f64) -> Array1<f64> {
        let tol = self.tol();
        self.singular.mapv(|s| {
            if lambda == 0.0 {
                if s > tol {
                    1.0
                } else {
                    0.0
                }
            } else {
                s * s / (s * s + lambda)
            }
        })
    }

    /// Weights for penalty `lambda`.
    pub fn solve(&self, lambda: f64) -> Result<Array2<f64>> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
        }
        if lambda == 0.0 && self.rank < self.cols {
            return Err(Error::Singular {
                rank: self.rank,
                cols: self.cols,
            });
        }
        let f = self.inverse_factors(lambda);
        let scaled = &self.uty * &f.insert_axis(Axis(1));
        Ok(self.vt.t().dot(&scaled))
    }

    /// Effective degrees of freedom `Σ d²/(d²+λ)`.
    pub fn degrees_of_freedom(&self, lambda: f64) -> f64 {
        self.shrink_factors(lambda).sum()
    }

    /// Residual sum of squares of the fit at `lambda`, over all outputs.
    pub fn residual_ss(&self, lambda: f64) -> f64 {
        let f = self.shrink_factors(lambda);
        let fitted = self.u.dot(&(&self.uty * &f.insert_axis(Axis(1))));
        (&self.y - &fitted).mapv(|e| e * e).sum()
    }

    /// Generalized cross-validation score; `+∞` when `df(λ) = m`.
    pub fn gcv(&self, lambda: f64) -> f64 {
        let m = self.rows() as f64;
        let df = self.degrees_of_freedom(lambda);
        let denom = (1.0 - df / m).powi(2);
        if denom == 0.0 {
            return f64::INFINITY;
        }
        self.residual_ss(lambda) / m / denom
    }

    /// GCV selection over `grid`, reusing this decomposition.
    pub fn select_gcv(&self, grid: &[f64]) -> Result<GcvSelection> {
        select_on_problem(self, grid)
    }

    /// The ridge map at `lambda`.
    pub fn fit(&self, lambda: f64) -> Result<LinearMap> {
        LinearMap::new(
            self.solve(lambda)?,
            lambda,
            Objective::Ridge,
            TrainMeta {
                train_size: self.rows(),
                ..TrainMeta::default()
            },
        )
    }
}

/// Fits `W = argmin ‖XW − Y‖²_F + λ‖W‖²_F`.
pub fn fit_ridge(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, lambda: f64) -> Result<LinearMap> {
    RidgeProblem::new(x, y)?.fit(lambda)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcvSelection {
    pub lambda: f64,
    /// `(λ, GCV(λ))` in grid order.
    pub scores: Vec<(f64, f64)>,
}

/// Scores every grid penalty by GCV and returns the best; ties go to the
/// larger penalty.
pub fn select_lambda_gcv(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    grid: &[f64],
) -> Result<GcvSelection> {
    let problem = RidgeProblem::new(x, y)?;
    select_on_problem(&problem, grid)
}

fn select_on_problem(problem: &RidgeProblem, grid: &[f64]) -> Result<GcvSelection> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("lambda grid is empty".into()));
    }
    if problem.rows() < 2 {
        return Err(Error::InvalidArgument("GCV needs at least two training rows".into()));
    }
    if let Some(bad) = grid.iter().find(|l| !l.is_finite() || **l < 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {bad}")));
    }
    let scores: Vec<(f64, f64)> = grid.iter().map(|&l| (l, problem.gcv(l))).collect();
    let mut best = scores[0];
    for &(l, s) in &scores[1..] {
        if s < best.1 || (s == best.1 && l > best.0) {
            best = (l, s);
        }
    }
    Ok(GcvSelection {
        lambda: best.0,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, s, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.sample(StandardNormal))
    }

    /// Plain gradient descent on the ridge objective. Step size comes from
    /// power iteration on XᵀX, so nothing here touches the SVD path.
    fn gd_oracle(x: &Array2<f64>, y: &Array2<f64>, lambda: f64) -> Array2<f64> {
        let xtx = x.t().dot(x);
        let mut v = Array1::from_elem(xtx.nrows(), 1.0);
        let mut top = 0.0;
        for _ in 0..500 {
            let w = xtx.dot(&v);
            top = w.dot(&w).sqrt();
            v = w / top;
        }
        let step = 1.0 / (2.0 * (top * 1.01 + lambda));
        let xty = x.t().dot(y);
        let mut w = Array2::zeros((x.ncols(), y.ncols()));
        for _ in 0..200_000 {
            let grad = (xtx.dot(&w) - &xty) * 2.0 + &w * (2.0 * lambda);
            let gn = grad.mapv(|g| g * g).sum().sqrt();
            w = w - grad * step;
            if gn < 1e-12 {
                break;
            }
        }
        w
    }

    #[test]
    fn identity_design() {
        let x = Array2::eye(2);
        let y = array![[2.0, 0.0], [0.0, 3.0]];
        let m = fit_ridge(x.view(), y.view(), 0.0).unwrap();
        assert!((&m.weights() - &y).iter().all(|e| e.abs() < 1e-14));

        let y = array![[1.0, -4.0], [6.0, 0.5]];
        let m = fit_ridge(x.view(), y.view(), 1.0).unwrap();
        assert!((&m.weights() - &(&y / 2.0)).iter().all(|e| e.abs() < 1e-14));
    }

    #[test]
    fn matches_gradient_descent() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = gaussian(&mut rng, 10, 3);
        let y = gaussian(&mut rng, 10, 2);
        let w = fit_ridge(x.view(), y.view(), 0.5).unwrap();
        let oracle = gd_oracle(&x, &y, 0.5);
        for (a, b) in w.weights().iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn first_order_optimality_against_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = gaussian(&mut rng, 12, 4);
        let y = gaussian(&mut rng, 12, 3);
        let lambda = 0.3;
        let w = fit_ridge(x.view(), y.view(), lambda).unwrap().weights().to_owned();
        let objective = |w: &Array2<f64>| {
            (x.dot(w) - &y).mapv(|e| e * e).sum() + lambda * w.mapv(|e| e * e).sum()
        };
        let h = 1e-6;
        for i in 0..4 {
            for j in 0..3 {
                let mut wp = w.clone();
                wp[[i, j]] += h;
                let mut wm = w.clone();
                wm[[i, j]] -= h;
                let fd = (objective(&wp) - objective(&wm)) / (2.0 * h);
                assert!(fd.abs() < 1e-6, "d/dW[{i},{j}] = {fd}");
            }
        }
        let grad = x.t().dot(&(x.dot(&w) - &y)) * 2.0 + &w * (2.0 * lambda);
        let scale = (x.t().dot(&y) * 2.0).mapv(|e| e * e).sum().sqrt();
        assert!(grad.mapv(|e| e * e).sum().sqrt() / scale < 1e-10);
    }

    #[test]
    fn columns_solve_independently() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = gaussian(&mut rng, 30, 6);
        let y = gaussian(&mut rng, 30, 4);
        let joint = fit_ridge(x.view(), y.view(), 2.0).unwrap();
        for c in 0..4 {
            let col = y.slice(s![.., c..c + 1]);
            let single = fit_ridge(x.view(), col, 2.0).unwrap();
            for r in 0..6 {
                assert!((single.weights()[[r, 0]] - joint.weights()[[r, c]]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn norm_shrinks_with_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = gaussian(&mut rng, 20, 5);
        let y = gaussian(&mut rng, 20, 3);
        let p = RidgeProblem::new(x.view(), y.view()).unwrap();
        let norms: Vec<f64> = default_lambda_grid()
            .iter()
            .map(|&l| p.solve(l).unwrap().mapv(|e| e * e).sum())
            .collect();
        assert!(norms.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn singular_design_needs_penalty() {
        let x = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let y = array![[1.0], [2.0], [3.0]];
        assert!(matches!(
            fit_ridge(x.view(), y.view(), 0.0),
            Err(Error::Singular { rank: 1, cols: 2 })
        ));
        assert!(fit_ridge(x.view(), y.view(), 0.1).is_ok());
        // wide X is rank deficient too
        let x = array![[1.0, 0.0, 2.0]];
        assert!(fit_ridge(x.view(), array![[1.0]].view(), 0.0).is_err());
    }

    #[test]
    fn shape_errors() {
        let x = Array2::<f64>::zeros((3, 2));
        let y = Array2::<f64>::zeros((2, 2));
        assert!(matches!(fit_ridge(x.view(), y.view(), 1.0), Err(Error::Shape(_))));
    }

    #[test]
    fn gcv_prefers_zero_on_exact_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = gaussian(&mut rng, 200, 5);
        let w = gaussian(&mut rng, 5, 3);
        let y = x.dot(&w);
        let sel = select_lambda_gcv(x.view(), y.view(), &[0.0, 0.1, 1.0, 10.0]).unwrap();
        assert_eq!(sel.lambda, 0.0);
        assert_eq!(sel.scores.len(), 4);
    }

    #[test]
    fn gcv_singleton_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = gaussian(&mut rng, 10, 3);
        let y = gaussian(&mut rng, 10, 2);
        let sel = select_lambda_gcv(x.view(), y.view(), &[5.0]).unwrap();
        assert_eq!(sel.lambda, 5.0);
        assert!(sel.scores[0].1.is_finite());
        assert!(select_lambda_gcv(x.view(), y.view(), &[]).is_err());
    }

    #[test]
    fn gcv_interpolating_fit_scores_infinite() {
        // square, full-rank X: df(0) = m
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = gaussian(&mut rng, 4, 4);
        let y = gaussian(&mut rng, 4, 1);
        let sel = select_lambda_gcv(x.view(), y.view(), &[0.0, 1.0]).unwrap();
        assert_eq!(sel.scores[0].1, f64::INFINITY);
        assert_eq!(sel.lambda, 1.0);
    }

    #[test]
    fn gcv_ties_go_to_larger_lambda() {
        // Y = 0 gives zero residual everywhere
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = gaussian(&mut rng, 10, 2);
        let y = Array2::zeros((10, 1));
        let sel = select_lambda_gcv(x.view(), y.view(), &[0.0, 3.0, 1.0]).unwrap();
        assert_eq!(sel.lambda, 3.0);
    }

    #[test]
    fn gcv_matches_brute_force_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = gaussian(&mut rng, 15, 4);
        let y = gaussian(&mut rng, 15, 2);
        let lambda = 0.7;
        // hat matrix through the normal equations
        let xm = DMatrix::from_fn(15, 4, |i, j| x[[i, j]]);
        let inv = (xm.transpose() * &xm + DMatrix::identity(4, 4) * lambda)
            .try_inverse()
            .unwrap();
        let hat = &xm * inv * xm.transpose();
        let ym = DMatrix::from_fn(15, 2, |i, j| y[[i, j]]);
        let resid = &ym - &hat * &ym;
        let trace = hat.trace();
        let expected = resid.norm_squared() / 15.0 / (1.0 - trace / 15.0).powi(2);
        let p = RidgeProblem::new(x.view(), y.view()).unwrap();
        assert!((p.gcv(lambda) - expected).abs() < 1e-10 * expected);
    }
}
