//! Independent oracles for the acceptance suite. These deliberately avoid
//! the library's solver paths: gradients are re-derived, containment is
//! backtracking instead of greedy, and the l1 solver is FISTA rather than
//! block coordinate descent.

#![allow(dead_code)]

use ndarray::{Array1, Array2};
use std::collections::BTreeSet;

use wbslr_core::seqmine::SequentialPattern;

// ---------------------------------------------------------------------------
// Logistic loss pieces, re-derived
// ---------------------------------------------------------------------------

/// Mean logistic loss with +-1 labels, written from the `1/(1+e^m)` form.
pub fn logistic_loss_oracle(x: &Array2<f64>, y: &Array1<f64>, w: &Array1<f64>) -> f64 {
    let n = x.nrows() as f64;
    let z = x.dot(w);
    z.iter()
        .zip(y.iter())
        .map(|(&zi, &yi)| {
            let m = yi * zi;
            if m > 0.0 {
                (-m).exp().ln_1p()
            } else {
                -m + m.exp().ln_1p()
            }
        })
        .sum::<f64>()
        / n
}

/// Gradient from the `-y x / (1 + exp(y x'w))` form.
pub fn logistic_grad_oracle(x: &Array2<f64>, y: &Array1<f64>, w: &Array1<f64>) -> Array1<f64> {
    let n = x.nrows() as f64;
    let z = x.dot(w);
    let coeff = Array1::from_iter(z.iter().zip(y.iter()).map(|(&zi, &yi)| {
        let m = yi * zi;
        let sigma_neg_m = if m > 0.0 {
            let e = (-m).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + m.exp())
        };
        -yi * sigma_neg_m / n
    }));
    x.t().dot(&coeff)
}

/// Central finite differences of the mean logistic loss.
pub fn fd_gradient(x: &Array2<f64>, y: &Array1<f64>, w: &Array1<f64>, h: f64) -> Array1<f64> {
    let mut g = Array1::zeros(w.len());
    for k in 0..w.len() {
        let mut wp = w.clone();
        wp[k] += h;
        let mut wm = w.clone();
        wm[k] -= h;
        g[k] = (logistic_loss_oracle(x, y, &wp) - logistic_loss_oracle(x, y, &wm)) / (2.0 * h);
    }
    g
}

fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn spectral_norm_sq(x: &Array2<f64>) -> f64 {
    let p = x.ncols();
    let mut v = Array1::from_elem(p, 1.0 / (p as f64).sqrt());
    for _ in 0..200 {
        let u = x.dot(&v);
        let w = x.t().dot(&u);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return x.iter().map(|&a| a * a).sum();
        }
        v = w / norm;
    }
    let u = x.dot(&v);
    u.dot(&u)
}

/// Max violation of the lasso-logistic KKT conditions.
pub fn lasso_kkt_residual(x: &Array2<f64>, y: &Array1<f64>, w: &Array1<f64>, lambda: f64) -> f64 {
    let g = logistic_grad_oracle(x, y, w);
    let mut worst = 0.0f64;
    for (&wk, &gk) in w.iter().zip(g.iter()) {
        let v = if wk == 0.0 {
            (gk.abs() - lambda).max(0.0)
        } else {
            (gk + lambda * wk.signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// FISTA on the l1-penalized mean logistic loss, run until its own KKT
/// residual drops below `kkt_tol`. Independent of the block-coordinate
/// solver under test.
pub fn l1_logistic_fista(
    x: &Array2<f64>,
    y: &Array1<f64>,
    lambda: f64,
    max_iter: usize,
    kkt_tol: f64,
) -> Array1<f64> {
    let n = x.nrows() as f64;
    let lipschitz = 1.1 * spectral_norm_sq(x) / (4.0 * n);
    let step = 1.0 / lipschitz;
    let dim = x.ncols();
    let mut w = Array1::<f64>::zeros(dim);
    let mut z = w.clone();
    let mut t = 1.0f64;
    let mut last_obj = f64::INFINITY;
    for it in 0..max_iter {
        let g = logistic_grad_oracle(x, y, &z);
        let mut w_new = &z - &(g * step);
        w_new.mapv_inplace(|v| soft(v, lambda * step));
        let obj = logistic_loss_oracle(x, y, &w_new)
            + lambda * w_new.iter().map(|v| v.abs()).sum::<f64>();
        let t_new = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        if obj > last_obj {
            // restart the momentum
            z = w_new.clone();
            t = 1.0;
        } else {
            z = &w_new + &((&w_new - &w) * ((t - 1.0) / t_new));
            t = t_new;
        }
        last_obj = obj;
        w = w_new;
        if it % 20 == 0 && lasso_kkt_residual(x, y, &w, lambda) < kkt_tol {
            break;
        }
    }
    w
}

// ---------------------------------------------------------------------------
// Unpenalized logistic by Newton, for the best-subset oracle
// ---------------------------------------------------------------------------

/// Newton iterations on the mean logistic loss restricted to `cols`.
/// Returns the final loss. Dense solve; meant for tiny subsets.
pub fn newton_logistic_loss(x: &Array2<f64>, y: &Array1<f64>, cols: &[usize], iters: usize) -> f64 {
    let n = x.nrows();
    let k = cols.len();
    let mut xs = Array2::<f64>::zeros((n, k));
    for (c, &col) in cols.iter().enumerate() {
        for r in 0..n {
            xs[(r, c)] = x[(r, col)];
        }
    }
    let mut w = Array1::<f64>::zeros(k);
    for _ in 0..iters {
        let z = xs.dot(&w);
        let mut g = Array1::<f64>::zeros(k);
        let mut h = vec![vec![0.0f64; k]; k];
        for r in 0..n {
            let m = y[r] * z[r];
            let s = 1.0 / (1.0 + m.exp()); // sigma(-m)
            let coeff = -y[r] * s / n as f64;
            let curv = s * (1.0 - s) / n as f64;
            for a in 0..k {
                g[a] += coeff * xs[(r, a)];
                for b in 0..k {
                    h[a][b] += curv * xs[(r, a)] * xs[(r, b)];
                }
            }
        }
        for (a, row) in h.iter_mut().enumerate() {
            row[a] += 1e-9;
        }
        let d = solve_dense(h, g.to_vec());
        let max_step = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for a in 0..k {
            w[a] -= d[a];
        }
        if max_step < 1e-10 {
            break;
        }
    }
    logistic_loss_oracle(&xs, y, &w)
}

/// Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let diag = a[col][col];
        if diag.abs() < 1e-300 {
            continue;
        }
        for row in col + 1..n {
            let factor = a[row][col] / diag;
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = if a[row][row].abs() < 1e-300 {
            0.0
        } else {
            acc / a[row][row]
        };
    }
    x
}

// ---------------------------------------------------------------------------
// AUC pair-counting oracle
// ---------------------------------------------------------------------------

pub fn auc_bruteforce(labels: &[u8], scores: &[f64]) -> f64 {
    let mut wins = 0.0f64;
    let mut pairs = 0.0f64;
    for (i, &li) in labels.iter().enumerate() {
        if li != 1 {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj != 0 {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

// ---------------------------------------------------------------------------
// Exhaustive sequential-pattern enumeration
// ---------------------------------------------------------------------------

/// Containment over all order-preserving injective mappings (backtracking,
/// not greedy).
pub fn contains_backtrack(
    seq: &[BTreeSet<String>],
    elems: &[BTreeSet<String>],
    from: usize,
) -> bool {
    let Some((head, rest)) = elems.split_first() else {
        return true;
    };
    (from..seq.len()).any(|i| head.is_subset(&seq[i]) && contains_backtrack(seq, rest, i + 1))
}

/// All frequent patterns up to `max_len` total items, by generate-and-count.
pub fn enumerate_patterns(
    data: &[Vec<BTreeSet<String>>],
    alphabet: &[&str],
    max_len: usize,
    min_count: usize,
) -> Vec<SequentialPattern> {
    let mut itemsets: Vec<BTreeSet<String>> = Vec::new();
    for mask in 1u32..(1 << alphabet.len()) {
        itemsets.push(
            alphabet
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, c)| c.to_string())
                .collect(),
        );
    }
    let mut stack: Vec<Vec<BTreeSet<String>>> = vec![vec![]];
    let mut out = Vec::new();
    while let Some(pattern) = stack.pop() {
        let len: usize = pattern.iter().map(|e| e.len()).sum();
        if !pattern.is_empty() {
            let support = data
                .iter()
                .filter(|s| contains_backtrack(s, &pattern, 0))
                .count();
            if support >= min_count {
                out.push(SequentialPattern {
                    elements: pattern.clone(),
                    support,
                });
            } else {
                // Anti-monotone: no extension can be frequent either.
                continue;
            }
        }
        for e in &itemsets {
            if len + e.len() <= max_len {
                let mut q = pattern.clone();
                q.push(e.clone());
                stack.push(q);
            }
        }
    }
    out.sort_by(|a, b| {
        a.len()
            .cmp(&b.len())
            .then_with(|| a.elements.cmp(&b.elements))
    });
    out
}
