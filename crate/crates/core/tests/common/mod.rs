//! Random inputs and brute-force oracles shared by the integration targets.
#![allow(dead_code)]

use std::sync::Arc;

use extremile_fda::{check_loss, Curve, CurveSample, Grid, KernelSpec};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Random smooth curve `a + b sin(2πt) + c cos(2πt) + d t²`.
pub fn random_curve(rng: &mut ChaCha8Rng, grid: &Arc<Grid<f64>>) -> Curve<f64> {
    let c: [f64; 4] = [normal(rng), normal(rng), normal(rng), 0.5 * normal(rng)];
    Curve::from_fn(grid.clone(), |t| {
        let w = 2.0 * std::f64::consts::PI * t;
        c[0] + c[1] * w.sin() + c[2] * w.cos() + c[3] * t * t
    })
    .unwrap()
}

/// `n` random curves with responses linear in the curve plus heteroscedastic noise.
pub fn random_data(rng: &mut ChaCha8Rng, n: usize, m: usize) -> (CurveSample<f64>, Vec<f64>) {
    let grid = Arc::new(Grid::uniform(0.0, 1.0, m).unwrap());
    let curves: Vec<Curve<f64>> = (0..n).map(|_| random_curve(rng, &grid)).collect();
    let ys = curves
        .iter()
        .map(|c| c.integral() + (1.0 + c.norm().min(3.0)) * 0.3 * normal(rng))
        .collect();
    (CurveSample::new(curves).unwrap(), ys)
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let p = b.len();
    for col in 0..p {
        let piv = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..p {
            let f = a[r][col] / a[col][col];
            for c in col..p {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; p];
    for r in (0..p).rev() {
        let s: f64 = (r + 1..p).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Minimum of the check-loss linear program, found by enumerating its basic
/// solutions: every optimal vertex interpolates `p` observations.
pub fn lp_vertex_oracle(x: &[Vec<f64>], y: &[f64], tau: f64) -> f64 {
    let n = x.len();
    let p = x[0].len();
    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..p).collect();
    loop {
        let a = idx.iter().map(|&i| x[i].clone()).collect();
        let b = idx.iter().map(|&i| y[i]).collect();
        if let Some(beta) = solve_dense(a, b) {
            let obj: f64 = x
                .iter()
                .zip(y)
                .map(|(r, yi)| check_loss(yi - r.iter().zip(&beta).map(|(u, v)| u * v).sum::<f64>(), tau))
                .sum();
            best = best.min(obj);
        }
        let mut i = p;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < n - p + i {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..p {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Literal kernel-weighted empirical CDF, `None` when every weight vanishes.
fn naive_cdf(y: f64, d: &[f64], ys: &[f64], h: f64, kernel: KernelSpec) -> Option<f64> {
    let w: Vec<f64> = d.iter().map(|di| kernel.eval(di / h)).collect();
    let den: f64 = w.iter().sum();
    if den <= 0.0 {
        return None;
    }
    let num: f64 = w.iter().zip(ys).filter(|(_, yi)| **yi <= y).map(|(wi, _)| wi).sum();
    Some(num / den)
}

/// Exhaustive bandwidth search: evaluates `Â(h) + V̂(h)` for every grid value by
/// direct summation and returns the first minimiser.
pub fn hf_oracle(d: &[f64], ys: &[f64], grid: &[f64], kappa: f64, kernel: KernelSpec) -> Option<f64> {
    let n = ys.len() as f64;
    let mut knots = ys.to_vec();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let cdf_at = |h: f64| -> Option<Vec<f64>> { knots.iter().map(|y| naive_cdf(*y, d, ys, h, kernel)).collect() };
    let tabs: Vec<Option<Vec<f64>>> = grid.iter().map(|h| cdf_at(*h)).collect();
    let v: Vec<f64> = grid
        .iter()
        .map(|h| {
            let inside = d.iter().filter(|di| **di <= *h).count() as f64;
            if inside == 0.0 {
                f64::INFINITY
            } else {
                kappa * n.ln() / inside
            }
        })
        .collect();
    // F is constant on [y_(k), y_(k+1)), so the integral is a finite sum.
    let integral = |a: &[f64], b: &[f64]| -> f64 {
        (1..knots.len()).map(|k| (knots[k] - knots[k - 1]) * (a[k - 1] - b[k - 1]).powi(2)).sum()
    };
    let mut best: Option<(f64, f64)> = None;
    for (i, h) in grid.iter().enumerate() {
        let Some(_) = &tabs[i] else { continue };
        let mut a = 0.0f64;
        for j in 0..grid.len() {
            let (Some(fj), Some(fm)) = (&tabs[j], &tabs[i.max(j)]) else { continue };
            a = a.max(integral(fj, fm) - v[j]);
        }
        let crit = a + v[i];
        if best.is_none_or(|(c, _)| crit < c) {
            best = Some((crit, *h));
        }
    }
    best.map(|(_, h)| h)
}
