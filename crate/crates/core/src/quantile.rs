//! Linear quantile regression on FPCA scores, the crossing-rate comparator.
//!
//! Solved by iteratively reweighted least squares on a smoothed check loss,
//! then finished exactly: the best-fitting observations are interpolated and
//! the resulting vertex is improved by edge exchanges until none descends.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve};
use crate::scalar::Scalar;

const MAX_ITERATIONS: usize = 200;
const EPS_START: f64 = 1e-2;
const EPS_END: f64 = 1e-8;
const STEP_TOL: f64 = 1e-9;
const MAX_EXCHANGES: usize = 500;

/// `ρ_τ(u) = u (τ − 1(u < 0))`.
#[inline]
pub fn check_loss<T: Scalar>(u: T, tau: T) -> T {
    if u < T::zero() {
        u * (tau - T::one())
    } else {
        u * tau
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileFit<T: Scalar> {
    pub tau: T,
    /// Zero when fitted without an intercept.
    pub intercept: T,
    pub coefficients: Vec<T>,
    pub converged: bool,
    /// Check loss summed over the training data.
    pub objective: T,
    pub has_intercept: bool,
}

impl<T: Scalar> QuantileFit<T> {
    pub fn predict(&self, scores: &[T]) -> Result<T> {
        if scores.len() != self.coefficients.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coefficients.len(),
                got: scores.len(),
            });
        }
        Ok(self.intercept
            + self
                .coefficients
                .iter()
                .zip(scores)
                .fold(T::zero(), |acc, (b, c)| acc + *b * *c))
    }
}

/// Fits with an intercept.
pub fn fit_quantile<T: Scalar>(scores: &[Vec<T>], responses: &[T], tau: T) -> Result<QuantileFit<T>> {
    fit_quantile_with(scores, responses, tau, true)
}

pub fn fit_quantile_with<T: Scalar>(
    scores: &[Vec<T>],
    responses: &[T],
    tau: T,
    intercept: bool,
) -> Result<QuantileFit<T>> {
    if !(tau > T::zero() && tau < T::one()) {
        return Err(Error::Domain(format!("quantile level {tau} outside (0, 1)")));
    }
    let n = responses.len();
    if scores.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: scores.len(),
        });
    }
    let k = scores.first().map(|r| r.len()).unwrap_or(0);
    if let Some(bad) = scores.iter().find(|r| r.len() != k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: bad.len(),
        });
    }
    if n <= k + 1 {
        return Err(Error::InsufficientSample { needed: k + 2, got: n });
    }
    if responses.iter().chain(scores.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite quantile regression input".into()));
    }
    let x: Vec<Vec<T>> = scores
        .iter()
        .map(|r| {
            let mut row = Vec::with_capacity(k + 1);
            if intercept {
                row.push(T::one());
            }
            row.extend_from_slice(r);
            row
        })
        .collect();
    let p = x[0].len();
    let objective = |beta: &[T]| -> T {
        x.iter()
            .zip(responses)
            .fold(T::zero(), |acc, (row, y)| acc + check_loss(*y - dot(row, beta), tau))
    };
    if p == 0 {
        return Ok(QuantileFit {
            tau,
            intercept: T::zero(),
            coefficients: Vec::new(),
            converged: true,
            objective: objective(&[]),
            has_intercept: intercept,
        });
    }

    let half = T::lit(0.5);
    let mut beta = least_squares(&x, responses, &vec![T::one(); n]).unwrap_or_else(|| vec![T::zero(); p]);
    let mut eps = T::lit(EPS_START);
    let eps_end = T::lit(EPS_END);
    let mut iterations = 0;
    let mut stage_converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        // majorize |r| by r²/(2a) + a/2 with a = max(|r|, ε)
        let w: Vec<T> = x
            .iter()
            .zip(responses)
            .map(|(row, y)| half / (*y - dot(row, &beta)).abs().max(eps))
            .collect();
        let target: Vec<T> = w
            .iter()
            .zip(responses)
            .map(|(wi, y)| *y + (tau - half) / *wi)
            .collect();
        let Some(next) = least_squares(&x, &target, &w) else {
            break;
        };
        let step = next
            .iter()
            .zip(&beta)
            .fold(T::zero(), |acc, (a, b)| acc.max((*a - *b).abs()));
        beta = next;
        if step < T::lit(STEP_TOL) {
            if eps <= eps_end {
                stage_converged = true;
                break;
            }
            eps = (eps * T::lit(0.1)).max(eps_end);
        }
    }

    let mut best_obj = objective(&beta);
    if let Some((rows, vertex)) = polish(&x, responses, &beta) {
        let (_, vertex) = exchange(&x, responses, tau, rows, vertex);
        let obj = objective(&vertex);
        if obj <= best_obj {
            best_obj = obj;
            beta = vertex;
        }
    }
    let converged = stage_converged || subgradient_optimal(&x, responses, &beta, tau);
    let (b0, coefficients) = if intercept {
        (beta[0], beta[1..].to_vec())
    } else {
        (T::zero(), beta)
    };
    Ok(QuantileFit {
        tau,
        intercept: b0,
        coefficients,
        converged,
        objective: best_obj,
        has_intercept: intercept,
    })
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

fn least_squares<T: Scalar>(x: &[Vec<T>], y: &[T], w: &[T]) -> Option<Vec<T>> {
    let p = x[0].len();
    let mut gram = vec![T::zero(); p * p];
    let mut rhs = vec![T::zero(); p];
    for ((row, yi), wi) in x.iter().zip(y).zip(w) {
        for a in 0..p {
            let wa = *wi * row[a];
            rhs[a] = rhs[a] + wa * *yi;
            for b in 0..p {
                gram[a * p + b] = gram[a * p + b] + wa * row[b];
            }
        }
    }
    let l = cholesky(&gram, p).or_else(|| {
        let trace = (0..p).fold(T::zero(), |acc, a| acc + gram[a * p + a]);
        let ridge = T::lit(1e-12) * trace / T::of_usize(p);
        for a in 0..p {
            gram[a * p + a] = gram[a * p + a] + ridge;
        }
        cholesky(&gram, p)
    })?;
    let beta = cholesky_solve(&l, p, &rhs);
    beta.iter().all(|b| b.is_finite()).then_some(beta)
}

/// Interpolates the `p` observations with the smallest residuals, skipping
/// any that would make the system singular.
fn polish<T: Scalar>(x: &[Vec<T>], y: &[T], beta: &[T]) -> Option<(Vec<usize>, Vec<T>)> {
    let p = beta.len();
    let mut order: Vec<usize> = (0..x.len()).collect();
    let resid: Vec<T> = x.iter().zip(y).map(|(r, yi)| (*yi - dot(r, beta)).abs()).collect();
    order.sort_by(|a, b| resid[*a].partial_cmp(&resid[*b]).expect("finite"));
    let mut rows: Vec<usize> = Vec::with_capacity(p);
    for &i in &order {
        rows.push(i);
        if rank_deficient(x, &rows) {
            rows.pop();
        }
        if rows.len() == p {
            break;
        }
    }
    if rows.len() < p {
        return None;
    }
    let a: Vec<Vec<T>> = rows.iter().map(|&i| x[i].clone()).collect();
    let b: Vec<T> = rows.iter().map(|&i| y[i]).collect();
    solve_square(a, b).map(|beta| (rows, beta))
}

/// Vertex descent on the check-loss linear program. At a vertex through rows
/// `B`, each edge frees one row of `B`; the objective is convex and piecewise
/// linear along the edge, so its minimum sits at a breakpoint where another
/// row is interpolated. The best such move over all edges is taken until
/// none lowers the objective.
fn exchange<T: Scalar>(
    x: &[Vec<T>],
    y: &[T],
    tau: T,
    mut rows: Vec<usize>,
    mut beta: Vec<T>,
) -> (Vec<usize>, Vec<T>) {
    let p = beta.len();
    let loss = |resid: &[T], a: &[T], t: T| -> T {
        resid
            .iter()
            .zip(a)
            .fold(T::zero(), |acc, (r, ai)| acc + check_loss(*r - t * *ai, tau))
    };
    for _ in 0..MAX_EXCHANGES {
        let resid: Vec<T> = x.iter().zip(y).map(|(r, yi)| *yi - dot(r, &beta)).collect();
        let current = loss(&resid, &vec![T::zero(); x.len()], T::zero());
        let tol = T::lit(1e-12) * current.max(T::one());
        let basis: Vec<Vec<T>> = rows.iter().map(|&i| x[i].clone()).collect();
        let mut best: Option<(T, usize, usize, Vec<T>)> = None;
        for j in 0..p {
            let mut e = vec![T::zero(); p];
            e[j] = T::one();
            let Some(d) = solve_square(basis.clone(), e) else {
                return (rows, beta);
            };
            let a: Vec<T> = x.iter().map(|r| dot(r, &d)).collect();
            let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
            for (i, ai) in a.iter().enumerate() {
                if rows.contains(&i) || !(ai.abs() > T::lit(1e-12) * scale) {
                    continue;
                }
                let t = resid[i] / *ai;
                let f = loss(&resid, &a, t);
                if f < current - tol && best.as_ref().is_none_or(|(bf, ..)| f < *bf) {
                    let step: Vec<T> = beta.iter().zip(&d).map(|(b, di)| *b + t * *di).collect();
                    best = Some((f, j, i, step));
                }
            }
        }
        match best {
            Some((_, j, i, next)) if next.iter().all(|v| v.is_finite()) => {
                rows[j] = i;
                beta = next;
            }
            _ => break,
        }
    }
    (rows, beta)
}

fn rank_deficient<T: Scalar>(x: &[Vec<T>], rows: &[usize]) -> bool {
    // Gram–Schmidt on the chosen rows
    let mut basis: Vec<Vec<T>> = Vec::new();
    for &i in rows {
        let mut v = x[i].clone();
        let scale = v.iter().fold(T::zero(), |m, a| m.max(a.abs()));
        for q in &basis {
            let c = dot(&v, q);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi = *vi - c * *qi;
            }
        }
        let norm = dot(&v, &v).sqrt();
        if !(norm > T::lit(1e-9) * scale.max(T::one())) {
            return true;
        }
        basis.push(v.into_iter().map(|a| a / norm).collect());
    }
    false
}

fn solve_square<T: Scalar>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Option<Vec<T>> {
    let p = b.len();
    for col in 0..p {
        let piv = (col..p).max_by(|i, j| a[*i][col].abs().partial_cmp(&a[*j][col].abs()).expect("finite"))?;
        if a[piv][col] == T::zero() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..p {
            let f = a[r][col] / a[col][col];
            for c in col..p {
                a[r][c] = a[r][c] - f * a[col][c];
            }
            b[r] = b[r] - f * b[col];
        }
    }
    let mut out = vec![T::zero(); p];
    for r in (0..p).rev() {
        let s = (r + 1..p).fold(b[r], |acc, c| acc - a[r][c] * out[c]);
        out[r] = s / a[r][r];
    }
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// Subgradient condition: for every column the signed residual sum over
/// nonzero residuals can be offset by the zero-residual observations.
fn subgradient_optimal<T: Scalar>(x: &[Vec<T>], y: &[T], beta: &[T], tau: T) -> bool {
    let n = x.len();
    let scale = y.iter().fold(T::zero(), |m, v| m.max(v.abs())).max(T::one());
    let zero_tol = T::lit(1e-9) * scale;
    let p = beta.len();
    let mut g = vec![T::zero(); p];
    let mut slack = vec![T::zero(); p];
    for (row, yi) in x.iter().zip(y) {
        let r = *yi - dot(row, beta);
        for j in 0..p {
            if r.abs() <= zero_tol {
                slack[j] = slack[j] + row[j].abs() * tau.max(T::one() - tau);
            } else if r > T::zero() {
                g[j] = g[j] + row[j] * tau;
            } else {
                g[j] = g[j] - row[j] * (T::one() - tau);
            }
        }
    }
    let tol = T::lit(1e-6) * T::of_usize(n);
    g.iter().zip(&slack).all(|(gj, sj)| gj.abs() <= *sj + tol)
}

/// Points × levels table of `intercept + scores · coefficients`.
pub fn predict_quantiles<T: Scalar>(fits: &[QuantileFit<T>], scores: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
    scores
        .iter()
        .map(|s| fits.iter().map(|f| f.predict(s)).collect())
        .collect()
}
