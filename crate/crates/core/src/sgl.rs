//! Sparse group lasso with logistic loss, solved by block coordinate descent.
//!
//! The objective over a window-major design matrix `X` (groups = time
//! windows, each of size `P`) is
//!
//! ```text
//! (1/N) sum_i log(1 + exp(-y_i x_i' w))
//!     + (1 - alpha) * lambda * sqrt(P) * sum_j ||w_j||_2
//!     + alpha * lambda * ||w||_1
//! ```
//!
//! with labels `y_i` in {-1, +1}. At `alpha = 1` this is the lasso, at
//! `alpha = 0` the group lasso. The solver cycles over groups: a group is
//! set to zero when the soft-thresholded gradient at `w_j = 0` falls inside
//! the group threshold, otherwise the group subproblem is minimized by
//! proximal gradient steps with a majorizing step size.

use ndarray::{s, Array1, ArrayView1, ArrayView2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::{EventVocabulary, WindowGrid, WindowedCountMatrix};
use crate::scalar::{log1p_exp, sigmoid, Float};

/// Tuning parameters of the solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SglConfig<F: Float> {
    /// Blend between the l1 term (`alpha = 1`) and the group l2 term
    /// (`alpha = 0`).
    pub alpha: F,
    /// Overall penalty strength.
    pub lambda: F,
    /// Relative objective-change convergence threshold.
    pub tol: F,
    /// Cap on outer sweeps over all groups.
    pub max_outer: usize,
    /// Cap on proximal-gradient iterations per group per sweep.
    pub max_inner: usize,
    /// Fit an unpenalized intercept (off by default; the objective above
    /// has none).
    pub fit_intercept: bool,
}

impl<F: Float> SglConfig<F> {
    pub fn new(alpha: F, lambda: F) -> Self {
        SglConfig {
            alpha,
            lambda,
            tol: F::cast(1e-8),
            max_outer: 1000,
            max_inner: 100,
            fit_intercept: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= F::zero() && self.alpha <= F::one()) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.lambda < F::zero() || self.lambda.is_nan() {
            return Err(Error::InvalidConfig(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.tol <= F::zero() || self.tol.is_nan() {
            return Err(Error::InvalidConfig("tol must be > 0".into()));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::InvalidConfig("iteration caps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Labels encoded as -1/+1 as required by the logistic loss above.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVector<F: Float>(Array1<F>);

impl<F: Float> LabelVector<F> {
    /// Map external {0, 1} labels to {-1, +1}.
    pub fn from_binary(labels: &[u8]) -> Result<Self> {
        let mut v = Array1::<F>::zeros(labels.len());
        for (i, &l) in labels.iter().enumerate() {
            v[i] = match l {
                0 => -F::one(),
                1 => F::one(),
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "label must be 0 or 1, got {other}"
                    )))
                }
            };
        }
        Ok(LabelVector(v))
    }

    pub fn values(&self) -> ArrayView1<'_, F> {
        self.0.view()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn both_classes(&self) -> bool {
        self.0.iter().any(|&y| y > F::zero()) && self.0.iter().any(|&y| y < F::zero())
    }
}

/// A fitted model: coefficients, the grid/vocabulary that define the
/// feature space, the selected (window, event) pairs, and the objective
/// value after each outer sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SglModel<F: Float> {
    pub alpha: F,
    pub lambda: F,
    pub fit_intercept: bool,
    pub intercept: F,
    pub grid: WindowGrid,
    pub vocab: EventVocabulary,
    pub omega: Array1<F>,
    pub selected: Vec<(usize, usize)>,
    pub objective_trace: Vec<F>,
}

impl<F: Float> SglModel<F> {
    /// `sigma(x' w + b)` for one feature row.
    pub fn predict_proba(&self, x: ArrayView1<F>) -> Result<F> {
        if x.len() != self.omega.len() {
            return Err(Error::DimensionMismatch {
                expected: self.omega.len(),
                got: x.len(),
            });
        }
        Ok(sigmoid(x.dot(&self.omega) + self.intercept))
    }

    /// Probabilities for every row of a design matrix.
    pub fn predict_rows(&self, values: ArrayView2<F>) -> Result<Array1<F>> {
        if values.ncols() != self.omega.len() {
            return Err(Error::DimensionMismatch {
                expected: self.omega.len(),
                got: values.ncols(),
            });
        }
        let z = values.dot(&self.omega) + self.intercept;
        Ok(z.mapv(sigmoid))
    }

    /// The nonzero coordinates, each with the sign of its coefficient.
    pub fn selected_events(&self) -> Vec<(usize, usize, i8)> {
        let p = self.vocab.len();
        self.selected
            .iter()
            .map(|&(j, e)| {
                let w = self.omega[j * p + e];
                (j, e, if w > F::zero() { 1 } else { -1 })
            })
            .collect()
    }
}

fn check_dims<F: Float>(
    x: &WindowedCountMatrix<F>,
    y: &LabelVector<F>,
    omega: ArrayView1<F>,
) -> Result<()> {
    if y.len() != x.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            got: y.len(),
        });
    }
    if omega.len() != x.n_features() {
        return Err(Error::DimensionMismatch {
            expected: x.n_features(),
            got: omega.len(),
        });
    }
    Ok(())
}

/// Mean logistic loss `(1/N) sum_i log(1 + exp(-y_i (x_i' w + b)))`.
pub fn logistic_loss<F: Float>(
    x: &WindowedCountMatrix<F>,
    y: &LabelVector<F>,
    omega: ArrayView1<F>,
    intercept: F,
) -> Result<F> {
    check_dims(x, y, omega)?;
    let z = x.values.dot(&omega) + intercept;
    Ok(loss_from_margins(z.view(), y.values()))
}

fn loss_from_margins<F: Float>(z: ArrayView1<F>, y: ArrayView1<F>) -> F {
    let n = F::from_count(z.len());
    z.iter()
        .zip(y.iter())
        .map(|(&zi, &yi)| log1p_exp(-(yi * zi)))
        .sum::<F>()
        / n
}

/// Full objective: loss plus the blended group-l2 / l1 penalty. The
/// intercept is unpenalized.
pub fn objective<F: Float>(
    x: &WindowedCountMatrix<F>,
    y: &LabelVector<F>,
    omega: ArrayView1<F>,
    intercept: F,
    config: &SglConfig<F>,
) -> Result<F> {
    let loss = logistic_loss(x, y, omega, intercept)?;
    Ok(loss + penalty(omega, x.group_size(), config.alpha, config.lambda))
}

fn penalty<F: Float>(omega: ArrayView1<F>, group_size: usize, alpha: F, lambda: F) -> F {
    let sqrt_p = F::from_count(group_size).sqrt();
    let mut group_l2 = F::zero();
    for block in omega.exact_chunks(group_size) {
        group_l2 += block.dot(&block).sqrt();
    }
    let l1: F = omega.iter().map(|w| w.abs()).sum();
    (F::one() - alpha) * lambda * sqrt_p * group_l2 + alpha * lambda * l1
}

/// Analytic gradient of the logistic loss: the coefficient part and the
/// intercept component.
pub fn loss_gradient<F: Float>(
    x: &WindowedCountMatrix<F>,
    y: &LabelVector<F>,
    omega: ArrayView1<F>,
    intercept: F,
) -> Result<(Array1<F>, F)> {
    check_dims(x, y, omega)?;
    let z = x.values.dot(&omega) + intercept;
    let r = residuals(z.view(), y.values());
    Ok((x.values.t().dot(&r), r.sum()))
}

/// `r_i = -y_i sigma(-y_i z_i) / N`, so the loss gradient is `X' r`.
fn residuals<F: Float>(z: ArrayView1<F>, y: ArrayView1<F>) -> Array1<F> {
    let n = F::from_count(z.len());
    Array1::from_iter(
        z.iter()
            .zip(y.iter())
            .map(|(&zi, &yi)| -(yi * sigmoid(-(yi * zi))) / n),
    )
}

fn soft_threshold<F: Float>(v: F, t: F) -> F {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        F::zero()
    }
}

fn l2_norm<F: Float>(v: ArrayView1<F>) -> F {
    v.dot(&v).sqrt()
}

/// Smallest `lambda` for which `w = 0` is optimal: every group must satisfy
/// `||S(grad_j L(0), alpha*lambda)||_2 <= (1 - alpha) * lambda * sqrt(P)`.
/// Closed forms exist at `alpha` 0 and 1; otherwise the threshold is found
/// by bisection to relative precision 1e-10.
pub fn lambda_max<F: Float>(x: &WindowedCountMatrix<F>, y: &LabelVector<F>, alpha: F) -> Result<F> {
    let p = x.group_size();
    let sqrt_p = F::from_count(p).sqrt();
    let zero = Array1::<F>::zeros(x.n_features());
    let (grad, _) = loss_gradient(x, y, zero.view(), F::zero())?;
    let max_abs = grad.iter().fold(F::zero(), |m, g| m.max(g.abs()));
    if max_abs == F::zero() {
        return Ok(F::zero());
    }
    let group_norms: Vec<F> = grad
        .exact_chunks(p)
        .into_iter()
        .map(|block| l2_norm(block))
        .collect();
    if alpha == F::one() {
        return Ok(max_abs);
    }
    if alpha == F::zero() {
        return Ok(group_norms.iter().fold(F::zero(), |m, &g| m.max(g)) / sqrt_p);
    }

    let zero_ok = |lambda: F| {
        grad.exact_chunks(p).into_iter().all(|block| {
            let mut norm2 = F::zero();
            for &g in block {
                let s = soft_threshold(g, alpha * lambda);
                norm2 += s * s;
            }
            norm2.sqrt() <= (F::one() - alpha) * lambda * sqrt_p
        })
    };

    let mut hi = max_abs / alpha; // soft-threshold kills every coordinate
    let mut lo = F::zero();
    debug_assert!(zero_ok(hi));
    let rel = F::cast(1e-10);
    while hi - lo > rel * hi {
        let mid = (hi + lo) / F::cast(2.0);
        if zero_ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Maximum violation of the subgradient optimality conditions at
/// `(omega, intercept)`. Zero (up to solver tolerance) at an optimum.
pub fn kkt_violation<F: Float>(
    x: &WindowedCountMatrix<F>,
    y: &LabelVector<F>,
    omega: ArrayView1<F>,
    intercept: F,
    config: &SglConfig<F>,
) -> Result<F> {
    let p = x.group_size();
    let sqrt_p = F::from_count(p).sqrt();
    let (alpha, lambda) = (config.alpha, config.lambda);
    let (grad, grad_b) = loss_gradient(x, y, omega, intercept)?;
    let mut worst = if config.fit_intercept {
        grad_b.abs()
    } else {
        F::zero()
    };
    for j in 0..x.n_groups() {
        let cols = j * p..(j + 1) * p;
        let gj = grad.slice(s![cols.clone()]);
        let wj = omega.slice(s![cols]);
        let wj_norm = l2_norm(wj);
        if wj_norm == F::zero() {
            // Zero group: the soft-thresholded gradient must lie inside the
            // group-l2 ball of radius (1 - alpha) * lambda * sqrt(P).
            let mut norm2 = F::zero();
            for &g in gj {
                let s = soft_threshold(g, alpha * lambda);
                norm2 += s * s;
            }
            worst = worst.max(norm2.sqrt() - (F::one() - alpha) * lambda * sqrt_p);
        } else {
            for (&g, &w) in gj.iter().zip(wj.iter()) {
                let group_term = (F::one() - alpha) * lambda * sqrt_p * w / wj_norm;
                let v = if w != F::zero() {
                    (g + alpha * lambda * w.signum() + group_term).abs()
                } else {
                    (g.abs() - alpha * lambda).max(F::zero())
                };
                worst = worst.max(v);
            }
        }
    }
    Ok(worst.max(F::zero()))
}

/// Majorizing inverse step size for one group: an upper bound on the
/// group-restricted Lipschitz constant `sigma_max(X_j)^2 / (4N)`. The
/// spectral norm comes from 50 power-iteration steps; the 1.05 factor
/// covers truncation error (the Rayleigh quotient approaches the true value
/// from below), and a Frobenius bound covers the degenerate case where the
/// start vector is orthogonal to the leading eigenvector.
fn group_step_bound<F: Float>(xj: ArrayView2<F>, n: usize) -> F {
    let p = xj.ncols();
    let frob2: F = xj.iter().map(|&v| v * v).sum();
    if frob2 == F::zero() {
        return F::zero();
    }
    let mut v = Array1::<F>::from_elem(p, F::one() / F::from_count(p).sqrt());
    for _ in 0..50 {
        let u = xj.dot(&v);
        let w = xj.t().dot(&u);
        let norm = l2_norm(w.view());
        if norm == F::zero() {
            break;
        }
        v = w / norm;
    }
    let u = xj.dot(&v);
    let sigma2 = u.dot(&u);
    let bound = if sigma2 < F::cast(1e-12) * frob2 {
        frob2
    } else {
        F::cast(1.05) * sigma2
    };
    bound / (F::cast(4.0) * F::from_count(n))
}

/// Fit by cyclic block coordinate descent. See the module docs for the
/// update rule; convergence is declared when the relative objective change
/// over one sweep drops below `config.tol`.
pub fn fit<F: Float>(
    x: &WindowedCountMatrix<F>,
    y: &LabelVector<F>,
    config: &SglConfig<F>,
) -> Result<SglModel<F>> {
    config.validate()?;
    let n = x.n_rows();
    let t = x.n_groups();
    let p = x.group_size();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if n < 2 || !y.both_classes() {
        return Err(Error::DegenerateLabels);
    }
    if x.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design matrix"));
    }

    let sqrt_p = F::from_count(p).sqrt();
    let (alpha, lambda) = (config.alpha, config.lambda);
    let steps: Vec<F> = (0..t)
        .map(|j| group_step_bound(x.values.slice(s![.., j * p..(j + 1) * p]), n))
        .collect();

    let mut omega = Array1::<F>::zeros(t * p);
    let mut intercept = F::zero();
    let mut z = Array1::<F>::zeros(n); // X w + b, maintained incrementally
    let yv = y.values();

    let mut objective = loss_from_margins(z.view(), yv) + penalty(omega.view(), p, alpha, lambda);
    let mut trace = vec![objective];

    for _sweep in 0..config.max_outer {
        if config.fit_intercept {
            intercept = intercept_newton_step(&mut z, yv, intercept);
        }

        for (j, &tj) in steps.iter().enumerate() {
            let cols = j * p..(j + 1) * p;
            let xj = x.values.slice(s![.., cols.clone()]);
            let wj_current = omega.slice(s![cols.clone()]).to_owned();
            let active = wj_current.iter().any(|&w| w != F::zero());

            // Gradient with this group zeroed decides whether the whole
            // block stays at zero.
            let z_without = if active {
                let mut zw = z.clone();
                zw -= &xj.dot(&wj_current);
                zw
            } else {
                z.clone()
            };
            let g0 = xj.t().dot(&residuals(z_without.view(), yv));
            let mut thresh_norm2 = F::zero();
            for &g in &g0 {
                let s = soft_threshold(g, alpha * lambda);
                thresh_norm2 += s * s;
            }
            if thresh_norm2.sqrt() <= (F::one() - alpha) * lambda * sqrt_p {
                if active {
                    omega.slice_mut(s![cols]).fill(F::zero());
                    z = z_without;
                }
                continue;
            }

            // Proximal gradient on the group subproblem, warm-started from
            // the current block. tj > 0 here: an all-zero block would have
            // passed the zero check.
            let mut wj = wj_current;
            for _ in 0..config.max_inner {
                let g = xj.t().dot(&residuals(z.view(), yv));
                let mut u = &wj - &(g / tj);
                u.mapv_inplace(|v| soft_threshold(v, alpha * lambda / tj));
                let u_norm = l2_norm(u.view());
                let scale = if u_norm > F::zero() {
                    (F::one() - (F::one() - alpha) * lambda * sqrt_p / (tj * u_norm)).max(F::zero())
                } else {
                    F::zero()
                };
                let wj_new = u * scale;
                let delta = &wj_new - &wj;
                let delta_norm = l2_norm(delta.view());
                if delta_norm > F::zero() {
                    z += &xj.dot(&delta);
                }
                wj = wj_new;
                if delta_norm <= config.tol * l2_norm(wj.view()).max(F::one()) {
                    break;
                }
            }
            omega.slice_mut(s![cols]).assign(&wj);
        }

        // Re-derive the margins from scratch so every trace entry is the
        // exact objective of the current iterate, free of incremental drift.
        z = x.values.dot(&omega) + intercept;
        let new_objective =
            loss_from_margins(z.view(), yv) + penalty(omega.view(), p, alpha, lambda);
        trace.push(new_objective);
        let rel = (objective - new_objective).abs() / objective.abs().max(F::epsilon());
        objective = new_objective;
        if rel < config.tol {
            break;
        }
    }

    let selected = omega
        .iter()
        .enumerate()
        .filter(|(_, &w)| w != F::zero())
        .map(|(i, _)| (i / p, i % p))
        .collect();

    Ok(SglModel {
        alpha,
        lambda,
        fit_intercept: config.fit_intercept,
        intercept,
        grid: x.grid,
        vocab: x.vocab.clone(),
        omega,
        selected,
        objective_trace: trace,
    })
}

/// One guarded Newton step on the intercept. Backtracks until the loss does
/// not increase; returns the new intercept and leaves `z` consistent.
fn intercept_newton_step<F: Float>(z: &mut Array1<F>, y: ArrayView1<F>, intercept: F) -> F {
    let n = F::from_count(z.len());
    let mut grad = F::zero();
    let mut hess = F::zero();
    for (&zi, &yi) in z.iter().zip(y.iter()) {
        let s = sigmoid(-(yi * zi));
        grad -= yi * s;
        hess += s * (F::one() - s);
    }
    grad /= n;
    hess = (hess / n).max(F::cast(1e-10));
    let direction = -grad / hess;
    let base = loss_from_margins(z.view(), y);
    let mut step = F::one();
    for _ in 0..40 {
        let candidate = z.mapv(|zi| zi + step * direction);
        if loss_from_margins(candidate.view(), y) <= base {
            *z = candidate;
            return intercept + step * direction;
        }
        step /= F::cast(2.0);
    }
    intercept
}

// ---------------------------------------------------------------------------
// Model file
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct GridFile {
    #[serde(rename = "T")]
    t: usize,
    window_days: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: DeserializeOwned"))]
pub(crate) struct SglModelFile<F> {
    alpha: F,
    lambda: F,
    fit_intercept: bool,
    intercept: F,
    grid: GridFile,
    vocab: Vec<String>,
    omega: Vec<F>,
    selected: Vec<(usize, usize, i8)>,
    objective_trace: Vec<F>,
}

impl<F: Float + Serialize + DeserializeOwned> SglModel<F> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&SglModelFile::from_model(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SglModelFile<F> = serde_json::from_str(text)?;
        file.into_model()
    }
}

impl<F: Float> SglModelFile<F> {
    pub(crate) fn from_model(model: &SglModel<F>) -> Self {
        SglModelFile {
            alpha: model.alpha,
            lambda: model.lambda,
            fit_intercept: model.fit_intercept,
            intercept: model.intercept,
            grid: GridFile {
                t: model.grid.t_windows,
                window_days: model.grid.window_days,
            },
            vocab: model.vocab.codes().to_vec(),
            omega: model.omega.to_vec(),
            selected: model.selected_events(),
            objective_trace: model.objective_trace.clone(),
        }
    }

    pub(crate) fn into_model(self) -> Result<SglModel<F>> {
        let vocab = EventVocabulary::from_codes(self.vocab.clone());
        if vocab.len() != self.vocab.len() {
            return Err(Error::InvalidConfig(
                "model vocabulary has duplicate codes".into(),
            ));
        }
        let expected = self.grid.t * vocab.len();
        if self.omega.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: self.omega.len(),
            });
        }
        let omega = Array1::from_vec(self.omega);
        let selected = omega
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != F::zero())
            .map(|(i, _)| (i / vocab.len().max(1), i % vocab.len().max(1)))
            .collect();
        Ok(SglModel {
            alpha: self.alpha,
            lambda: self.lambda,
            fit_intercept: self.fit_intercept,
            intercept: self.intercept,
            grid: WindowGrid {
                t_windows: self.grid.t,
                window_days: self.grid.window_days,
            },
            vocab,
            omega,
            selected,
            objective_trace: self.objective_trace,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use ndarray::{array, Array2};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn matrix(values: Array2<f64>, t: usize) -> WindowedCountMatrix<f64> {
        WindowedCountMatrix::from_values(values, t, 30).unwrap()
    }

    /// Random small count-like instance with balanced labels.
    fn random_instance(
        seed: u64,
        n: usize,
        t: usize,
        p: usize,
    ) -> (WindowedCountMatrix<f64>, LabelVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Array2::<f64>::zeros((n, t * p));
        for v in values.iter_mut() {
            // sparse small counts
            if rng.random::<f64>() < 0.3 {
                *v = (1 + rng.random_range(0..3)) as f64;
            }
        }
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        (
            matrix(values, t),
            LabelVector::from_binary(&labels).unwrap(),
        )
    }

    #[test]
    fn loss_at_zero_is_ln2() {
        let (x, y) = random_instance(0, 20, 2, 3);
        let w = Array1::zeros(6);
        let loss = logistic_loss(&x, &y, w.view(), 0.0).unwrap();
        assert_relative_eq!(loss, std::f64::consts::LN_2, max_relative = 1e-12);
    }

    #[test]
    fn loss_vanishes_for_large_correct_margins() {
        // Single sample, x = [1], w = [10]: loss = log1p(exp(-10)) < 5e-5.
        let x = matrix(array![[1.0]], 1);
        let y = LabelVector::from_binary(&[1]).unwrap();
        // fit() requires two classes; loss itself does not.
        let w = array![10.0];
        let loss = logistic_loss(&x, &y, w.view(), 0.0).unwrap();
        assert!(loss < 5e-5, "loss {loss}");
        assert_relative_eq!(loss, (-10.0f64).exp().ln_1p(), max_relative = 1e-12);
    }

    #[test]
    fn label_flip_matches_coefficient_flip() {
        let (x, _) = random_instance(1, 30, 2, 4);
        let labels: Vec<u8> = (0..30).map(|i| ((i * 7) % 3 == 0) as u8).collect();
        let flipped: Vec<u8> = labels.iter().map(|&l| 1 - l).collect();
        let y = LabelVector::from_binary(&labels).unwrap();
        let yf = LabelVector::from_binary(&flipped).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = Array1::from_iter((0..8).map(|_| rng.random::<f64>() - 0.5));
        let neg = w.mapv(|v| -v);
        let a = logistic_loss(&x, &yf, w.view(), 0.0).unwrap();
        let b = logistic_loss(&x, &y, neg.view(), 0.0).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn objective_reduces_to_lasso_and_group_lasso() {
        let (x, y) = random_instance(3, 25, 2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = Array1::from_iter((0..6).map(|_| rng.random::<f64>() - 0.5));
        let lambda = 0.37;
        let loss = logistic_loss(&x, &y, w.view(), 0.0).unwrap();

        let cfg = SglConfig::new(1.0, lambda);
        let l1: f64 = w.iter().map(|v| v.abs()).sum();
        assert_relative_eq!(
            objective(&x, &y, w.view(), 0.0, &cfg).unwrap(),
            loss + lambda * l1,
            max_relative = 1e-12
        );

        let cfg = SglConfig::new(0.0, lambda);
        let g: f64 = w
            .exact_chunks(3)
            .into_iter()
            .map(|b| b.dot(&b).sqrt())
            .sum();
        assert_relative_eq!(
            objective(&x, &y, w.view(), 0.0, &cfg).unwrap(),
            loss + lambda * 3f64.sqrt() * g,
            max_relative = 1e-12
        );

        // w = 0: penalties vanish, objective = ln 2.
        let zero = Array1::zeros(6);
        assert_relative_eq!(
            objective(&x, &y, zero.view(), 0.0, &cfg).unwrap(),
            std::f64::consts::LN_2,
            max_relative = 1e-12
        );
    }

    #[test]
    fn gradient_hand_example() {
        // Single sample x = [2], y = +1, w = 0: gradient = -1 * 0.5 * 2 = -1,
        // intercept component -0.5.
        let x = matrix(array![[2.0]], 1);
        let y = LabelVector::from_binary(&[1]).unwrap();
        let w = array![0.0];
        let (g, gb) = loss_gradient(&x, &y, w.view(), 0.0).unwrap();
        assert_abs_diff_eq!(g[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(gb, -0.5, epsilon = 1e-15);
    }

    #[test]
    fn gradient_balance_at_zero() {
        // Balanced labels, both class-conditional means at zero: at w = 0
        // every sample has sigma = 1/2 and the class sums cancel exactly.
        let x = matrix(
            array![[1.0, -2.0], [-1.0, 2.0], [0.5, 3.0], [-0.5, -3.0]],
            1,
        );
        let y = LabelVector::from_binary(&[1, 1, 0, 0]).unwrap();
        let zero = array![0.0, 0.0];
        let (g0, gb) = loss_gradient(&x, &y, zero.view(), 0.0).unwrap();
        assert_abs_diff_eq!(gb, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g0[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g0[1], 0.0, epsilon = 1e-15);
    }

    fn finite_difference_gradient(
        x: &WindowedCountMatrix<f64>,
        y: &LabelVector<f64>,
        w: &Array1<f64>,
        b: f64,
        h: f64,
    ) -> Array1<f64> {
        let mut g = Array1::zeros(w.len());
        for k in 0..w.len() {
            let mut wp = w.clone();
            wp[k] += h;
            let mut wm = w.clone();
            wm[k] -= h;
            g[k] = (logistic_loss(x, y, wp.view(), b).unwrap()
                - logistic_loss(x, y, wm.view(), b).unwrap())
                / (2.0 * h);
        }
        g
    }

    #[test]
    fn gradient_matches_central_differences() {
        for seed in 0..5 {
            let (x, y) = random_instance(seed, 40, 3, 4);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let w = Array1::from_iter((0..12).map(|_| rng.random::<f64>() - 0.5));
            let (g, _) = loss_gradient(&x, &y, w.view(), 0.0).unwrap();
            let fd = finite_difference_gradient(&x, &y, &w, 0.0, 1e-6);
            let denom = fd.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
            let err = (&g - &fd).iter().fold(0.0f64, |m, v| m.max(v.abs())) / denom;
            assert!(err < 1e-5, "seed {seed}: relative error {err}");
        }
    }

    #[test]
    fn lambda_max_zeroes_the_fit() {
        for alpha in [0.0, 0.5, 0.7, 1.0] {
            let (x, y) = random_instance(7, 60, 3, 4);
            let lmax = lambda_max(&x, &y, alpha).unwrap();
            let config = SglConfig::new(alpha, lmax * 1.01);
            let model = fit(&x, &y, &config).unwrap();
            assert!(
                model.omega.iter().all(|&w| w == 0.0),
                "alpha {alpha}: expected empty model"
            );
            assert!(model.selected.is_empty());
            assert_relative_eq!(
                *model.objective_trace.last().unwrap(),
                std::f64::consts::LN_2,
                max_relative = 1e-12
            );

            let config = SglConfig::new(alpha, lmax * 0.5);
            let model = fit(&x, &y, &config).unwrap();
            assert!(
                model.omega.iter().any(|&w| w != 0.0),
                "alpha {alpha}: expected at least one active group"
            );
        }
    }

    #[test]
    fn lambda_max_alpha_one_closed_form() {
        let (x, y) = random_instance(8, 50, 2, 5);
        let zero = Array1::zeros(10);
        let (g, _) = loss_gradient(&x, &y, zero.view(), 0.0).unwrap();
        let closed = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert_relative_eq!(
            lambda_max(&x, &y, 1.0).unwrap(),
            closed,
            max_relative = 1e-12
        );
    }

    #[test]
    fn lambda_max_of_all_zero_design_is_zero() {
        let x = matrix(Array2::zeros((8, 6)), 2);
        let y = LabelVector::from_binary(&[0, 1, 0, 1, 0, 1, 0, 1]).unwrap();
        for alpha in [0.0, 0.5, 1.0] {
            assert_eq!(lambda_max(&x, &y, alpha).unwrap(), 0.0);
        }
    }

    #[test]
    fn fit_rejects_degenerate_inputs() {
        let x = matrix(array![[1.0], [2.0]], 1);
        let y = LabelVector::from_binary(&[1, 1]).unwrap();
        assert!(matches!(
            fit(&x, &y, &SglConfig::new(0.5, 0.1)),
            Err(Error::DegenerateLabels)
        ));

        let x = matrix(array![[f64::NAN], [2.0]], 1);
        let y = LabelVector::from_binary(&[1, 0]).unwrap();
        assert!(matches!(
            fit(&x, &y, &SglConfig::new(0.5, 0.1)),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn paper_settings_run() {
        let (x, y) = random_instance(9, 80, 3, 5);
        let config = SglConfig::new(0.7, 0.0005);
        let model = fit(&x, &y, &config).unwrap();
        assert!(model.objective_trace.len() > 1);
        assert_trace_monotone(&model);
    }

    #[test]
    fn predict_proba_basics() {
        let (x, y) = random_instance(10, 30, 2, 3);
        let model = fit(&x, &y, &SglConfig::new(0.5, 10.0)).unwrap(); // all-zero model
        let row = Array1::from_elem(6, 2.0);
        assert_relative_eq!(model.predict_proba(row.view()).unwrap(), 0.5);

        // x' w = ln 3 gives probability 3/4.
        let mut m = model.clone();
        m.omega = Array1::zeros(6);
        m.omega[0] = 3f64.ln();
        let mut row = Array1::zeros(6);
        row[0] = 1.0;
        assert_relative_eq!(
            m.predict_proba(row.view()).unwrap(),
            0.75,
            max_relative = 1e-12
        );

        // Monotone in a positively weighted count.
        let mut higher = row.clone();
        higher[0] = 2.0;
        assert!(m.predict_proba(higher.view()).unwrap() >= m.predict_proba(row.view()).unwrap());

        let bad = Array1::zeros(5);
        assert!(m.predict_proba(bad.view()).is_err());
    }

    #[test]
    fn selected_events_track_nonzeros() {
        let (x, y) = random_instance(11, 40, 3, 6);
        let model = fit(&x, &y, &SglConfig::new(0.5, 1e9)).unwrap();
        assert!(model.selected_events().is_empty());

        let mut m = model.clone();
        m.omega[2 * 6 + 5] = 0.4;
        m.selected = vec![(2, 5)];
        assert_eq!(m.selected_events(), vec![(2, 5, 1)]);

        let fitted = fit(&x, &y, &SglConfig::new(0.7, 0.01)).unwrap();
        let nonzeros = fitted.omega.iter().filter(|&&w| w != 0.0).count();
        assert_eq!(fitted.selected.len(), nonzeros);
        assert_eq!(fitted.selected_events().len(), nonzeros);
    }

    fn assert_trace_monotone(model: &SglModel<f64>) {
        for pair in model.objective_trace.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-12,
                "objective increased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn descent_is_monotone_across_settings() {
        for seed in 0..4 {
            for alpha in [0.0f64, 0.3, 0.7, 1.0] {
                let (x, y) = random_instance(seed, 50, 4, 5);
                let lmax = lambda_max(&x, &y, alpha.max(1e-12)).unwrap();
                for frac in [0.8, 0.3, 0.05] {
                    let config = SglConfig::new(alpha, lmax * frac);
                    let model = fit(&x, &y, &config).unwrap();
                    assert_trace_monotone(&model);
                }
            }
        }
    }

    #[test]
    fn intercept_fit_is_monotone_and_shifts_probability() {
        // Imbalanced labels: the intercept should move toward the majority.
        let mut values = Array2::<f64>::zeros((40, 4));
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for v in values.iter_mut() {
            *v = rng.random::<f64>();
        }
        let labels: Vec<u8> = (0..40).map(|i| (i % 4 != 0) as u8).collect();
        let x = matrix(values, 2);
        let y = LabelVector::from_binary(&labels).unwrap();
        let mut config = SglConfig::new(0.7, 0.5);
        config.fit_intercept = true;
        let model = fit(&x, &y, &config).unwrap();
        assert_trace_monotone(&model);
        assert!(model.intercept > 0.0, "intercept {}", model.intercept);
    }

    #[test]
    fn whole_groups_are_exactly_zero() {
        // With alpha < 1 and lasso-scale lambda, some groups must be zeroed
        // as complete blocks.
        let (x, y) = random_instance(13, 60, 4, 5);
        let lmax = lambda_max(&x, &y, 0.5).unwrap();
        let model = fit(&x, &y, &SglConfig::new(0.5, lmax * 0.7)).unwrap();
        let p = 5;
        let mut zero_groups = 0;
        for j in 0..4 {
            let block = model.omega.slice(s![j * p..(j + 1) * p]);
            if block.iter().all(|&w| w == 0.0) {
                zero_groups += 1;
            }
        }
        assert!(zero_groups > 0, "expected at least one exactly-zero block");
    }

    #[test]
    fn lasso_kkt_conditions_hold() {
        let (x, y) = random_instance(14, 80, 2, 5);
        let lmax = lambda_max(&x, &y, 1.0).unwrap();
        let lambda = lmax * 0.3;
        let mut config = SglConfig::new(1.0, lambda);
        config.tol = 1e-12;
        config.max_outer = 5000;
        let model = fit(&x, &y, &config).unwrap();
        let (g, _) = loss_gradient(&x, &y, model.omega.view(), 0.0).unwrap();
        for (k, (&w, &gk)) in model.omega.iter().zip(g.iter()).enumerate() {
            if w == 0.0 {
                assert!(
                    gk.abs() <= lambda + 1e-6,
                    "coord {k}: |g| = {} > lambda",
                    gk.abs()
                );
            } else {
                assert!(
                    (gk + lambda * w.signum()).abs() <= 1e-6,
                    "coord {k}: stationarity violated"
                );
            }
        }
        assert!(kkt_violation(&x, &y, model.omega.view(), 0.0, &config).unwrap() <= 1e-6);
    }

    #[test]
    fn group_lasso_kkt_conditions_hold() {
        let (x, y) = random_instance(15, 80, 4, 4);
        let lmax = lambda_max(&x, &y, 0.0).unwrap();
        let lambda = lmax * 0.4;
        let mut config = SglConfig::new(0.0, lambda);
        config.tol = 1e-12;
        config.max_outer = 5000;
        config.max_inner = 500;
        let model = fit(&x, &y, &config).unwrap();
        let (g, _) = loss_gradient(&x, &y, model.omega.view(), 0.0).unwrap();
        let sqrt_p = 2.0;
        for j in 0..4 {
            let gj = g.slice(s![j * 4..(j + 1) * 4]);
            let wj = model.omega.slice(s![j * 4..(j + 1) * 4]);
            let wn = wj.dot(&wj).sqrt();
            if wn == 0.0 {
                assert!(gj.dot(&gj).sqrt() <= lambda * sqrt_p + 1e-6, "group {j}");
            } else {
                let resid = &gj + &(wj.mapv(|w| lambda * sqrt_p * w / wn));
                assert!(resid.dot(&resid).sqrt() <= 1e-6, "group {j} stationarity");
            }
        }
        assert!(kkt_violation(&x, &y, model.omega.view(), 0.0, &config).unwrap() <= 1e-6);
    }

    #[test]
    fn permuting_events_permutes_omega() {
        let (x, y) = random_instance(16, 50, 3, 4);
        let mut config = SglConfig::new(0.6, 0.02);
        config.tol = 1e-10;
        let base = fit(&x, &y, &config).unwrap();

        // Reverse the event order within every window.
        let p = 4;
        let perm: Vec<usize> = (0..p).rev().collect();
        let mut values = Array2::<f64>::zeros((x.n_rows(), x.n_features()));
        for j in 0..3 {
            for (new_e, &old_e) in perm.iter().enumerate() {
                for i in 0..x.n_rows() {
                    values[(i, j * p + new_e)] = x.values[(i, j * p + old_e)];
                }
            }
        }
        let xp = matrix(values, 3);
        let permuted = fit(&xp, &y, &config).unwrap();
        for j in 0..3 {
            for (new_e, &old_e) in perm.iter().enumerate() {
                assert_abs_diff_eq!(
                    permuted.omega[j * p + new_e],
                    base.omega[j * p + old_e],
                    epsilon = 1e-9
                );
            }
        }
        assert_relative_eq!(
            permuted.objective_trace.last().unwrap(),
            base.objective_trace.last().unwrap(),
            max_relative = 1e-9
        );
    }

    #[test]
    fn huge_lambda_clears_everything() {
        let (x, y) = random_instance(17, 40, 3, 4);
        let model = fit(&x, &y, &SglConfig::new(0.7, 1e6)).unwrap();
        assert!(model.omega.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn all_zero_columns_stay_unselected() {
        let mut values = Array2::<f64>::zeros((30, 6));
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        for i in 0..30 {
            values[(i, 1)] = rng.random::<f64>();
            values[(i, 4)] = rng.random::<f64>();
        }
        let labels: Vec<u8> = (0..30).map(|i| (i % 2) as u8).collect();
        let x = matrix(values, 2);
        let y = LabelVector::from_binary(&labels).unwrap();
        let model = fit(&x, &y, &SglConfig::new(0.5, 1e-4)).unwrap();
        for &(j, e) in &model.selected {
            let col = j * 3 + e;
            assert!(col == 1 || col == 4, "selected an all-zero column {col}");
        }
    }

    #[test]
    fn model_json_roundtrip_is_stable() {
        let (x, y) = random_instance(19, 30, 2, 3);
        let model = fit(&x, &y, &SglConfig::new(0.7, 0.01)).unwrap();
        let json = model.to_json().unwrap();
        assert!(json.contains("\"T\":2"), "{json}");
        let back = SglModel::<f64>::from_json(&json).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_json().unwrap(), json);
    }

    #[test]
    fn f32_instantiation_compiles_and_fits() {
        let values = array![[1.0f32, 0.0], [0.0, 2.0], [2.0, 0.0], [0.0, 1.0]];
        let x = WindowedCountMatrix::from_values(values, 1, 30).unwrap();
        let y = LabelVector::<f32>::from_binary(&[1, 0, 1, 0]).unwrap();
        let mut config = SglConfig::new(0.5f32, 0.01f32);
        config.tol = 1e-5;
        let model = fit(&x, &y, &config).unwrap();
        assert_eq!(model.omega.len(), 2);
    }
}
