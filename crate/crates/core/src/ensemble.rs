//! Weighted bagging of SGL models.
//!
//! `B` bootstrap samples each get their own SGL fit. Aggregation weights
//! (one nonnegative weight per member) are then learned by minimizing the
//! negative log-likelihood of the out-of-bag predictions
//!
//! ```text
//! yhat_i(w) = (1 / |K_i|) * sum_{b in K_i} w_b * C_b(x_i),   K_i = {b : i oob for b}
//! ```
//!
//! with a projected truncated-Newton method (Newton-CG on the free
//! coordinates, backtracking line search, projection onto `w >= 0`). Final
//! predictions divide by the weight total so the output stays a
//! probability. A plain majority-vote baseline over the same members is
//! also provided.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::WindowedCountMatrix;
use crate::scalar::Float;
use crate::sgl::{self, LabelVector, SglConfig, SglModel};

/// One bootstrap draw: `n` indices sampled with replacement, plus the rows
/// left out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bootstrap {
    pub in_bag: Vec<usize>,
    pub oob: Vec<usize>,
}

impl Bootstrap {
    fn draw(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let in_bag: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let mut seen = vec![false; n];
        for &i in &in_bag {
            seen[i] = true;
        }
        let oob = (0..n).filter(|&i| !seen[i]).collect();
        Bootstrap { in_bag, oob }
    }
}

/// Deterministic bootstrap draws for an ensemble of `b_count` members.
pub fn draw_bootstraps(n: usize, b_count: usize, seed: u64) -> Result<Vec<Bootstrap>> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 samples, got {n}"
        )));
    }
    if b_count < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 bootstraps, got {b_count}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..b_count).map(|_| Bootstrap::draw(n, &mut rng)).collect())
}

/// A bootstrap together with the SGL model fitted on its in-bag rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMember<F: Float> {
    pub bootstrap: Bootstrap,
    pub model: SglModel<F>,
}

/// Fit one SGL model per bootstrap, in parallel, collecting in bootstrap
/// order. A bootstrap whose in-bag rows are single-class is redrawn
/// deterministically (up to 20 retries derived from `retry_seed`).
pub fn fit_members<F: Float>(
    x: &WindowedCountMatrix<F>,
    labels: &[u8],
    bootstraps: &[Bootstrap],
    config: &SglConfig<F>,
    retry_seed: u64,
) -> Result<Vec<EnsembleMember<F>>> {
    if labels.len() != x.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            got: labels.len(),
        });
    }
    bootstraps
        .par_iter()
        .enumerate()
        .map(|(b, bootstrap)| {
            let mut bootstrap = bootstrap.clone();
            let mut attempt = 0u64;
            loop {
                let in_bag_labels: Vec<u8> = bootstrap.in_bag.iter().map(|&i| labels[i]).collect();
                let has_both = in_bag_labels.contains(&0) && in_bag_labels.contains(&1);
                if has_both {
                    let xb = x.select_rows(&bootstrap.in_bag);
                    let yb = LabelVector::from_binary(&in_bag_labels)?;
                    let model = sgl::fit(&xb, &yb, config)?;
                    return Ok(EnsembleMember { bootstrap, model });
                }
                attempt += 1;
                if attempt > 20 {
                    return Err(Error::Numerical(format!(
                        "bootstrap {b} stayed single-class after 20 redraws"
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(
                    retry_seed
                        .wrapping_add((b as u64) << 32)
                        .wrapping_add(attempt),
                );
                bootstrap = Bootstrap::draw(x.n_rows(), &mut rng);
            }
        })
        .collect()
}

/// Nonnegative aggregation weights, one per member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationWeights<F: Float> {
    pub w: Vec<F>,
}

/// Out-of-bag scores for the covered rows.
#[derive(Debug, Clone, PartialEq)]
pub struct OobPrediction<F: Float> {
    /// Row indices with at least one member holding them out-of-bag.
    pub covered: Vec<usize>,
    /// `yhat_i(w)` aligned with `covered`.
    pub scores: Vec<F>,
}

/// Evaluate the OOB aggregation at the given weights. Rows no member holds
/// out-of-bag are excluded and reported through `covered`; it is an error
/// when that excludes everything.
pub fn oob_predict<F: Float>(
    members: &[EnsembleMember<F>],
    x: &WindowedCountMatrix<F>,
    weights: &AggregationWeights<F>,
) -> Result<OobPrediction<F>> {
    if weights.w.len() != members.len() {
        return Err(Error::DimensionMismatch {
            expected: members.len(),
            got: weights.w.len(),
        });
    }
    let design = OobDesign::build(members, x)?;
    let w = Array1::from_vec(weights.w.clone());
    let scores = design.matrix.dot(&w);
    Ok(OobPrediction {
        covered: design.covered,
        scores: scores.to_vec(),
    })
}

/// Dense matrix `A` with `yhat(w) = A w` over the covered rows.
struct OobDesign<F: Float> {
    covered: Vec<usize>,
    matrix: Array2<F>,
}

impl<F: Float> OobDesign<F> {
    fn build(members: &[EnsembleMember<F>], x: &WindowedCountMatrix<F>) -> Result<Self> {
        let n = x.n_rows();
        let mut coverage = vec![0usize; n];
        for member in members {
            for &i in &member.bootstrap.oob {
                if i >= n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: i + 1,
                    });
                }
                coverage[i] += 1;
            }
        }
        let covered: Vec<usize> = (0..n).filter(|&i| coverage[i] > 0).collect();
        if covered.is_empty() {
            return Err(Error::NoOobCoverage);
        }
        let row_of: Vec<Option<usize>> = {
            let mut map = vec![None; n];
            for (r, &i) in covered.iter().enumerate() {
                map[i] = Some(r);
            }
            map
        };
        let mut matrix = Array2::<F>::zeros((covered.len(), members.len()));
        for (b, member) in members.iter().enumerate() {
            if member.bootstrap.oob.is_empty() {
                continue;
            }
            let rows = x.select_rows(&member.bootstrap.oob);
            let probs = member.model.predict_rows(rows.values.view())?;
            for (k, &i) in member.bootstrap.oob.iter().enumerate() {
                let r = row_of[i].expect("oob row is covered");
                matrix[(r, b)] = probs[k] / F::from_count(coverage[i]);
            }
        }
        Ok(OobDesign { covered, matrix })
    }
}

const NLL_CLAMP: f64 = 1e-12;

fn clamp01<F: Float>(v: F) -> F {
    v.max(F::cast(NLL_CLAMP)).min(F::one() - F::cast(NLL_CLAMP))
}

fn saturated<F: Float>(s: F) -> bool {
    s <= F::cast(NLL_CLAMP) || s >= F::one() - F::cast(NLL_CLAMP)
}

/// OOB negative log-likelihood of weights `w` over the covered rows, with
/// predictions clamped away from 0 and 1 before the logarithm.
fn oob_nll<F: Float>(a: &Array2<F>, y: &[F], w: ArrayView1<F>) -> F {
    let s = a.dot(&w);
    s.iter()
        .zip(y.iter())
        .map(|(&si, &yi)| {
            let p = clamp01(si);
            -(yi * p.ln() + (F::one() - yi) * (F::one() - p).ln())
        })
        .sum()
}

/// Gradient of the clamped NLL. Rows whose prediction sits in a clamped
/// (flat) region contribute zero, consistent with the objective actually
/// being minimized.
fn oob_nll_gradient<F: Float>(a: &Array2<F>, y: &[F], w: ArrayView1<F>) -> Array1<F> {
    let s = a.dot(&w);
    let u = Array1::from_iter(s.iter().zip(y.iter()).map(|(&si, &yi)| {
        if saturated(si) {
            F::zero()
        } else {
            -yi / si + (F::one() - yi) / (F::one() - si)
        }
    }));
    a.t().dot(&u)
}

fn oob_nll_hess_vec<F: Float>(a: &Array2<F>, y: &[F], s: &Array1<F>, v: &Array1<F>) -> Array1<F> {
    let av = a.dot(v);
    let d = Array1::from_iter(s.iter().zip(y.iter()).map(|(&si, &yi)| {
        if saturated(si) {
            F::zero()
        } else {
            yi / (si * si) + (F::one() - yi) / ((F::one() - si) * (F::one() - si))
        }
    }));
    a.t().dot(&(av * d))
}

/// Learn nonnegative aggregation weights by minimizing the OOB NLL from the
/// all-ones start. Converges when the projected gradient infinity-norm
/// drops below 1e-6 (or after 500 iterations).
pub fn learn_weights<F: Float>(
    members: &[EnsembleMember<F>],
    x: &WindowedCountMatrix<F>,
    labels: &[u8],
) -> Result<AggregationWeights<F>> {
    if labels.len() != x.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            got: labels.len(),
        });
    }
    let design = OobDesign::build(members, x)?;
    let y: Vec<F> = design
        .covered
        .iter()
        .map(|&i| F::from_count(labels[i] as usize))
        .collect();
    let a = &design.matrix;
    let b_count = members.len();

    let mut w = Array1::<F>::ones(b_count);
    let mut f = oob_nll(a, &y, w.view());
    if !f.is_finite() {
        return Err(Error::Numerical(
            "OOB NLL not finite at initialization".into(),
        ));
    }
    let pg_tol = F::cast(1e-6);

    for _ in 0..500 {
        let g = oob_nll_gradient(a, &y, w.view());
        let pg_norm = (0..b_count)
            .map(|b| {
                if w[b] > F::zero() {
                    g[b].abs()
                } else {
                    (-g[b]).max(F::zero())
                }
            })
            .fold(F::zero(), F::max);
        if pg_norm < pg_tol {
            break;
        }

        let free: Vec<bool> = (0..b_count)
            .map(|b| w[b] > F::zero() || g[b] < F::zero())
            .collect();
        let s = a.dot(&w);
        let hessian = |v: &Array1<F>| {
            let mut masked = v.clone();
            for b in 0..b_count {
                if !free[b] {
                    masked[b] = F::zero();
                }
            }
            let mut hv = oob_nll_hess_vec(a, &y, &s, &masked);
            for b in 0..b_count {
                if !free[b] {
                    hv[b] = F::zero();
                }
            }
            hv
        };
        let mut rhs = g.mapv(|v| -v);
        for b in 0..b_count {
            if !free[b] {
                rhs[b] = F::zero();
            }
        }
        let mut d = conjugate_gradient(&hessian, &rhs, 2 * b_count);
        if g.dot(&d) >= F::zero() {
            // Singular or stalled curvature: fall back to projected steepest
            // descent.
            d = rhs;
        }

        let mut step = F::one();
        let mut accepted = false;
        for _ in 0..60 {
            let trial = (&w + &d.mapv(|v| v * step)).mapv(|v| v.max(F::zero()));
            let f_trial = oob_nll(a, &y, trial.view());
            let descent = g.dot(&(&trial - &w));
            if f_trial.is_finite() && f_trial <= f + F::cast(1e-4) * descent.min(F::zero()) {
                w = trial;
                f = f_trial;
                accepted = true;
                break;
            }
            step /= F::cast(2.0);
        }
        if !accepted {
            break;
        }
    }

    if !f.is_finite() {
        return Err(Error::Numerical("OOB NLL not finite at solution".into()));
    }
    Ok(AggregationWeights { w: w.to_vec() })
}

/// Clamped OOB NLL and its gradient at the given weights, for optimality
/// diagnostics (the projected-gradient conditions of the weight learner).
pub fn oob_objective<F: Float>(
    members: &[EnsembleMember<F>],
    x: &WindowedCountMatrix<F>,
    labels: &[u8],
    weights: &AggregationWeights<F>,
) -> Result<(F, Vec<F>)> {
    if weights.w.len() != members.len() {
        return Err(Error::DimensionMismatch {
            expected: members.len(),
            got: weights.w.len(),
        });
    }
    let design = OobDesign::build(members, x)?;
    let y: Vec<F> = design
        .covered
        .iter()
        .map(|&i| F::from_count(labels[i] as usize))
        .collect();
    let w = Array1::from_vec(weights.w.clone());
    let nll = oob_nll(&design.matrix, &y, w.view());
    let grad = oob_nll_gradient(&design.matrix, &y, w.view());
    Ok((nll, grad.to_vec()))
}

/// Truncated CG for `H d = rhs`; stops on relative residual, iteration cap,
/// or vanishing curvature.
fn conjugate_gradient<F: Float>(
    hess_vec: &impl Fn(&Array1<F>) -> Array1<F>,
    rhs: &Array1<F>,
    max_iter: usize,
) -> Array1<F> {
    let mut d = Array1::<F>::zeros(rhs.len());
    let mut r = rhs.clone();
    let mut p = rhs.clone();
    let rhs_norm = rhs.dot(rhs).sqrt();
    if rhs_norm == F::zero() {
        return d;
    }
    let tol = F::cast(1e-2).min(rhs_norm.sqrt()) * rhs_norm;
    let mut rr = r.dot(&r);
    for _ in 0..max_iter {
        let hp = hess_vec(&p);
        let php = p.dot(&hp);
        if php <= F::cast(1e-18) * p.dot(&p) {
            if d.iter().all(|&v| v == F::zero()) {
                return rhs.clone();
            }
            break;
        }
        let alpha = rr / php;
        d = d + p.mapv(|v| v * alpha);
        r = r - hp.mapv(|v| v * alpha);
        let rr_new = r.dot(&r);
        if rr_new.sqrt() <= tol {
            break;
        }
        p = &r + &p.mapv(|v| v * (rr_new / rr));
        rr = rr_new;
    }
    d
}

/// The full weighted-bagging ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct WbSlrModel<F: Float> {
    pub members: Vec<EnsembleMember<F>>,
    pub weights: AggregationWeights<F>,
    pub sgl_config: SglConfig<F>,
    pub seed: u64,
}

/// Ensemble-level knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WbSlrConfig {
    pub b_count: usize,
    pub seed: u64,
    /// Refit an unpenalized logistic model on each member's selected
    /// columns instead of reusing the penalized coefficients.
    pub refit: bool,
}

impl WbSlrConfig {
    pub fn new(seed: u64) -> Self {
        WbSlrConfig {
            b_count: 20,
            seed,
            refit: false,
        }
    }
}

/// Bootstrap, fit members, and learn the aggregation weights.
pub fn fit_wbslr<F: Float>(
    x: &WindowedCountMatrix<F>,
    labels: &[u8],
    ensemble: &WbSlrConfig,
    config: &SglConfig<F>,
) -> Result<WbSlrModel<F>> {
    let bootstraps = draw_bootstraps(x.n_rows(), ensemble.b_count, ensemble.seed)?;
    let mut members = fit_members(x, labels, &bootstraps, config, ensemble.seed)?;
    if ensemble.refit {
        for member in &mut members {
            refit_member(member, x, labels, config)?;
        }
    }
    let weights = learn_weights(&members, x, labels)?;
    if weights.w.iter().all(|&w| w == F::zero()) {
        return Err(Error::Numerical(
            "all aggregation weights collapsed to zero".into(),
        ));
    }
    Ok(WbSlrModel {
        members,
        weights,
        sgl_config: *config,
        seed: ensemble.seed,
    })
}

/// Replace a member's coefficients on its selected support with an
/// unpenalized logistic fit (single group, lambda = 0). Members with empty
/// support are left unchanged.
fn refit_member<F: Float>(
    member: &mut EnsembleMember<F>,
    x: &WindowedCountMatrix<F>,
    labels: &[u8],
    config: &SglConfig<F>,
) -> Result<()> {
    let p = x.group_size();
    let support: Vec<usize> = member.selected_columns(p);
    if support.is_empty() {
        return Ok(());
    }
    let in_bag = &member.bootstrap.in_bag;
    let mut values = Array2::<F>::zeros((in_bag.len(), support.len()));
    for (r, &i) in in_bag.iter().enumerate() {
        for (c, &col) in support.iter().enumerate() {
            values[(r, c)] = x.values[(i, col)];
        }
    }
    let sub = WindowedCountMatrix::from_values(values, 1, x.grid.window_days)?;
    let sub_labels: Vec<u8> = in_bag.iter().map(|&i| labels[i]).collect();
    let y = LabelVector::from_binary(&sub_labels)?;
    let refit_config = SglConfig {
        alpha: F::one(),
        lambda: F::zero(),
        tol: config.tol,
        max_outer: 200,
        max_inner: 50,
        fit_intercept: config.fit_intercept,
    };
    let refitted = sgl::fit(&sub, &y, &refit_config)?;
    member.model.omega.fill(F::zero());
    for (c, &col) in support.iter().enumerate() {
        member.model.omega[col] = refitted.omega[c];
    }
    member.model.intercept = refitted.intercept;
    member.model.selected = member
        .model
        .omega
        .iter()
        .enumerate()
        .filter(|(_, &w)| w != F::zero())
        .map(|(i, _)| (i / p, i % p))
        .collect();
    Ok(())
}

impl<F: Float> EnsembleMember<F> {
    fn selected_columns(&self, p: usize) -> Vec<usize> {
        self.model
            .selected
            .iter()
            .map(|&(j, e)| j * p + e)
            .collect()
    }
}

impl<F: Float> WbSlrModel<F> {
    /// Weighted-mean probability `sum_b w_b C_b(x) / sum_b w_b`, clamped to
    /// [0, 1]. Errors when the weights sum to zero.
    pub fn predict(&self, x: ArrayView1<F>) -> Result<F> {
        let total: F = self.weights.w.iter().copied().sum();
        if total == F::zero() {
            return Err(Error::Numerical("aggregation weights sum to zero".into()));
        }
        let mut acc = F::zero();
        for (member, &w) in self.members.iter().zip(self.weights.w.iter()) {
            acc += w * member.model.predict_proba(x)?;
        }
        Ok((acc / total).max(F::zero()).min(F::one()))
    }
}

/// Majority vote over the members: each votes 1 when its probability is at
/// least 1/2; ties predict positive.
pub fn bagged_slr_predict<F: Float>(members: &[EnsembleMember<F>], x: ArrayView1<F>) -> Result<u8> {
    let fraction = bagged_vote_fraction(members, x)?;
    Ok(if fraction >= F::cast(0.5) { 1 } else { 0 })
}

/// Fraction of members voting positive; serves as the vote-based score.
pub fn bagged_vote_fraction<F: Float>(
    members: &[EnsembleMember<F>],
    x: ArrayView1<F>,
) -> Result<F> {
    if members.is_empty() {
        return Err(Error::EmptyInput("ensemble members"));
    }
    let mut votes = 0usize;
    for member in members {
        if member.model.predict_proba(x)? >= F::cast(0.5) {
            votes += 1;
        }
    }
    Ok(F::from_count(votes) / F::from_count(members.len()))
}

// ---------------------------------------------------------------------------
// Model file
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: DeserializeOwned"))]
struct MemberFile<F> {
    #[serde(flatten)]
    model: crate::sgl::SglModelFile<F>,
    in_bag: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: DeserializeOwned"))]
struct WbSlrModelFile<F: Float> {
    seed: u64,
    #[serde(rename = "B")]
    b_count: usize,
    sgl_config: SglConfig<F>,
    weights: Vec<F>,
    members: Vec<MemberFile<F>>,
}

impl<F: Float + Serialize + DeserializeOwned> WbSlrModel<F> {
    pub fn to_json(&self) -> Result<String> {
        let file = WbSlrModelFile {
            seed: self.seed,
            b_count: self.members.len(),
            sgl_config: self.sgl_config,
            weights: self.weights.w.clone(),
            members: self
                .members
                .iter()
                .map(|m| MemberFile {
                    model: crate::sgl::SglModelFile::from_model(&m.model),
                    in_bag: m.bootstrap.in_bag.clone(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: WbSlrModelFile<F> = serde_json::from_str(text)?;
        if file.members.is_empty() {
            return Err(Error::EmptyInput("ensemble model has no members"));
        }
        if file.weights.len() != file.members.len() {
            return Err(Error::DimensionMismatch {
                expected: file.members.len(),
                got: file.weights.len(),
            });
        }
        let members = file
            .members
            .into_iter()
            .map(|m| {
                let n = m.in_bag.len();
                let mut seen = vec![false; n];
                for &i in &m.in_bag {
                    if i >= n {
                        return Err(Error::InvalidConfig(format!(
                            "in_bag index {i} out of range for n = {n}"
                        )));
                    }
                    seen[i] = true;
                }
                let oob = (0..n).filter(|&i| !seen[i]).collect();
                Ok(EnsembleMember {
                    bootstrap: Bootstrap {
                        in_bag: m.in_bag,
                        oob,
                    },
                    model: m.model.into_model()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(WbSlrModel {
            members,
            weights: AggregationWeights { w: file.weights },
            sgl_config: file.sgl_config,
            seed: file.seed,
        })
    }
}
