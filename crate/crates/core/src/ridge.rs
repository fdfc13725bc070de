//! Multiclass ridge regression on one-hot targets, solved in closed form.
//!
//! Labels become +1/-1 one-hot columns, features are standardized and the
//! targets centered, and the weights come from a single eigendecomposition
//! of the smaller Gram matrix (samples x samples when features outnumber
//! samples, which they always do here). The same decomposition yields exact
//! leave-one-out residuals for every candidate regularizer via
//! `e_i = (y_i - yhat_i) / (1 - h_ii)`, so the alpha search costs almost
//! nothing beyond the one factorization.
//!
//! Scores are squashed through a softmax to give probability-shaped
//! outputs. Ridge scores are not calibrated log-odds, but the softmax
//! preserves the argmax and gives downstream consumers a stable [0, 1]
//! confidence scale.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Axis};

use crate::rocket::{FeatureVector, RocketParams};
use crate::{Error, Result, NUM_CLASSES};

/// LOO error measured for one candidate regularizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaScore {
    pub alpha: f64,
    pub loo_mse: f64,
}

/// A fitted classifier head plus the transform that feeds it.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub rocket: RocketParams,
    /// Per-feature training mean.
    pub feature_mean: Vec<f64>,
    /// Per-feature training standard deviation; constant features store 1.
    pub feature_std: Vec<f64>,
    /// Shape (num_features, NUM_CLASSES).
    pub weights: Array2<f64>,
    pub intercepts: Vec<f64>,
    /// The regularizer chosen by leave-one-out error.
    pub alpha: f64,
    /// The full grid that was searched, for diagnostics.
    pub alpha_path: Vec<AlphaScore>,
    pub class_names: Option<Vec<String>>,
}

/// The default search grid: ten values log-spaced over [1e-3, 1e3].
pub fn default_alpha_grid() -> Vec<f64> {
    (0..10)
        .map(|k| 10f64.powf(-3.0 + 6.0 * k as f64 / 9.0))
        .collect()
}

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn from_dmatrix(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Eigendecomposition of a symmetric PSD matrix; eigenvalues clamped at 0.
fn sym_eigen(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let eig = nalgebra::SymmetricEigen::new(to_dmatrix(a));
    let vals = Array1::from_iter(eig.eigenvalues.iter().map(|&v| v.max(0.0)));
    (vals, from_dmatrix(&eig.eigenvectors))
}

/// Direct primal solve `(X^T X + alpha I) W = X^T Y`. Reference path for
/// small p and for the tests.
pub fn ridge_solve_primal(x: &Array2<f64>, y: &Array2<f64>, alpha: f64) -> Array2<f64> {
    let p = x.ncols();
    let mut gram = x.t().dot(x);
    for i in 0..p {
        gram[[i, i]] += alpha;
    }
    let xty = x.t().dot(y);
    let chol = nalgebra::Cholesky::new(to_dmatrix(&gram))
        .unwrap_or_else(|| panic!("ridge normal matrix not positive definite (alpha={alpha})"));
    let sol = chol.solve(&to_dmatrix(&xty));
    from_dmatrix(&sol)
}

/// Dual solve `W = X^T (X X^T + alpha I)^{-1} Y`; identical result, cheaper
/// when features outnumber samples.
pub fn ridge_solve_dual(x: &Array2<f64>, y: &Array2<f64>, alpha: f64) -> Array2<f64> {
    let n = x.nrows();
    let mut gram = x.dot(&x.t());
    for i in 0..n {
        gram[[i, i]] += alpha;
    }
    let chol = nalgebra::Cholesky::new(to_dmatrix(&gram))
        .unwrap_or_else(|| panic!("ridge dual matrix not positive definite (alpha={alpha})"));
    let sol = chol.solve(&to_dmatrix(y));
    x.t().dot(&from_dmatrix(&sol))
}

struct Standardized {
    x: Array2<f64>,
    mean: Vec<f64>,
    std: Vec<f64>,
}

/// Column-standardize in place; constant columns get unit scale so they
/// simply vanish after centering.
fn standardize(x: &Array2<f64>) -> Standardized {
    let n = x.nrows() as f64;
    let mean: Vec<f64> = x.mean_axis(Axis(0)).unwrap().to_vec();
    let mut std = vec![0.0f64; x.ncols()];
    for (j, s) in std.iter_mut().enumerate() {
        let col = x.column(j);
        let m = mean[j];
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        let sd = var.sqrt();
        // Columns that are constant up to rounding get unit scale, so they
        // vanish after centering instead of amplifying noise.
        *s = if sd > 1e-12 * (1.0 + m.abs()) { sd } else { 1.0 };
    }
    let mut xs = x.clone();
    for (j, mut col) in xs.columns_mut().into_iter().enumerate() {
        let (m, s) = (mean[j], std[j]);
        col.mapv_inplace(|v| (v - m) / s);
    }
    Standardized { x: xs, mean, std }
}

/// Fit the classifier head: standardize, search the alpha grid by exact
/// LOO error, then solve once at the winner.
///
/// `rocket` is the transform the features came from; it is moved into the
/// model so the pair can never drift apart.
pub fn fit_ridge(
    features: &Array2<f64>,
    labels: &[i32],
    alpha_grid: &[f64],
    rocket: RocketParams,
) -> Result<RidgeModel> {
    let n = features.nrows();
    let p = features.ncols();
    if n != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{n} feature rows but {} labels",
            labels.len()
        )));
    }
    if n < 2 {
        return Err(Error::InvalidData("need at least two samples".into()));
    }
    if alpha_grid.is_empty() || alpha_grid.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
        return Err(Error::InvalidConfig(
            "alpha grid must be non-empty and strictly positive".into(),
        ));
    }
    let mut seen = [false; NUM_CLASSES];
    for &l in labels {
        if l < 0 || l as usize >= NUM_CLASSES {
            return Err(Error::InvalidData(format!("label {l} out of range")));
        }
        seen[l as usize] = true;
    }
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::DegenerateLabels(
            "training labels contain fewer than two classes".into(),
        ));
    }

    // +1/-1 one-hot targets, then centered.
    let mut y = Array2::from_elem((n, NUM_CLASSES), -1.0f64);
    for (i, &l) in labels.iter().enumerate() {
        y[[i, l as usize]] = 1.0;
    }
    let y_mean: Vec<f64> = y.mean_axis(Axis(0)).unwrap().to_vec();
    let mut yc = y;
    for (c, mut col) in yc.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|v| v - y_mean[c]);
    }

    let st = standardize(features);

    // Eigendecompose the smaller Gram matrix and build M with M M^T = X X^T,
    // which drives both the LOO shortcut and the final solve.
    let (lambda, eigvecs, m_mat) = if n <= p {
        let gram = st.x.dot(&st.x.t());
        let (lambda, e) = sym_eigen(&gram);
        let mut m = e.clone();
        for (k, mut col) in m.columns_mut().into_iter().enumerate() {
            let s = lambda[k].sqrt();
            col.mapv_inplace(|v| v * s);
        }
        (lambda, e, m)
    } else {
        let gram = st.x.t().dot(&st.x);
        let (lambda, e) = sym_eigen(&gram);
        let m = st.x.dot(&e);
        (lambda, e, m)
    };

    // h_ii(alpha) = sum_k M_ik^2 / (lambda_k + alpha) and
    // yhat = M diag(1/(lambda+alpha)) M^T Yc, so each alpha is just two
    // cheap matrix products.
    let m2 = &m_mat * &m_mat;
    let q = m_mat.t().dot(&yc);
    let mut alpha_path = Vec::with_capacity(alpha_grid.len());
    let mut best: Option<(f64, f64)> = None;
    for &alpha in alpha_grid {
        let inv: Array1<f64> = lambda.mapv(|l| 1.0 / (l + alpha));
        let mut qs = q.clone();
        for (k, mut row) in qs.rows_mut().into_iter().enumerate() {
            row.mapv_inplace(|v| v * inv[k]);
        }
        let yhat = m_mat.dot(&qs);
        let h = m2.dot(&inv);
        let mut sse = 0.0;
        for i in 0..n {
            let denom = (1.0 - h[i]).max(1e-10);
            for c in 0..NUM_CLASSES {
                let e = (yc[[i, c]] - yhat[[i, c]]) / denom;
                sse += e * e;
            }
        }
        let mse = sse / (n * NUM_CLASSES) as f64;
        alpha_path.push(AlphaScore { alpha, loo_mse: mse });
        if best.map_or(true, |(_, bm)| mse < bm) {
            best = Some((alpha, mse));
        }
    }
    let (alpha, _) = best.expect("non-empty grid");

    // Final solve at the chosen alpha, reusing the decomposition.
    let inv: Array1<f64> = lambda.mapv(|l| 1.0 / (l + alpha));
    let weights = if n <= p {
        // W = X^T E diag(1/(l+a)) E^T Yc
        let mut s = eigvecs.t().dot(&yc);
        for (k, mut row) in s.rows_mut().into_iter().enumerate() {
            row.mapv_inplace(|v| v * inv[k]);
        }
        st.x.t().dot(&eigvecs.dot(&s))
    } else {
        // W = E diag(1/(l+a)) E^T X^T Yc
        let mut s = eigvecs.t().dot(&st.x.t().dot(&yc));
        for (k, mut row) in s.rows_mut().into_iter().enumerate() {
            row.mapv_inplace(|v| v * inv[k]);
        }
        eigvecs.dot(&s)
    };

    Ok(RidgeModel {
        rocket,
        feature_mean: st.mean,
        feature_std: st.std,
        weights,
        intercepts: y_mean,
        alpha,
        alpha_path,
        class_names: None,
    })
}

impl RidgeModel {
    pub fn num_features(&self) -> usize {
        self.weights.nrows()
    }

    /// Raw per-class scores for one feature vector.
    pub fn decision_scores(&self, features: &FeatureVector) -> Result<Vec<f64>> {
        if features.len() != self.num_features() {
            return Err(Error::ShapeMismatch(format!(
                "feature vector has {} values, model expects {}",
                features.len(),
                self.num_features()
            )));
        }
        let mut scores = self.intercepts.clone();
        for (j, &v) in features.values.iter().enumerate() {
            let xs = (v - self.feature_mean[j]) / self.feature_std[j];
            if xs != 0.0 {
                for (c, s) in scores.iter_mut().enumerate() {
                    *s += xs * self.weights[[j, c]];
                }
            }
        }
        Ok(scores)
    }

    /// Class probabilities (softmax over decision scores).
    pub fn predict_proba(&self, features: &FeatureVector) -> Result<Vec<f64>> {
        Ok(softmax(&self.decision_scores(features)?))
    }

    /// Argmax class; probability ties break toward the lowest index.
    pub fn predict(&self, features: &FeatureVector) -> Result<(i32, Vec<f64>)> {
        let probs = self.predict_proba(features)?;
        Ok((argmax_tie_lowest(&probs) as i32, probs))
    }
}

/// Numerically safe softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the maximum; equal values resolve to the first.
pub fn argmax_tie_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
