//! Functional principal component analysis on a quadrature grid.
//!
//! The covariance operator is discretized as `W^{1/2} C W^{1/2}` with `C` the
//! sample covariance of curve values and `W = diag(quad_weights)`. Eigenvectors
//! are mapped back through `W^{-1/2}`, which makes the eigenfunctions
//! orthonormal for the quadrature inner product on any grid.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::curves::{inner_product, Curve, CurveSample, Grid};
use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::scalar::Scalar;

/// Mean curve and the leading eigenfunctions of the empirical covariance operator.
#[derive(Debug, Clone)]
pub struct FpcaBasis<T: Scalar> {
    grid: Arc<Grid<T>>,
    mean: Curve<T>,
    eigenfunctions: Vec<Curve<T>>,
    eigenvalues: Vec<T>,
    total_variance: T,
    var_explained: T,
}

impl<T: Scalar> FpcaBasis<T> {
    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn mean(&self) -> &Curve<T> {
        &self.mean
    }

    pub fn eigenfunctions(&self) -> &[Curve<T>] {
        &self.eigenfunctions
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    /// Number of retained components `K`.
    pub fn n_components(&self) -> usize {
        self.eigenfunctions.len()
    }

    pub fn total_variance(&self) -> T {
        self.total_variance
    }

    /// Share of total variance carried by the retained components (1 when the
    /// sample has no variance).
    pub fn var_explained(&self) -> T {
        self.var_explained
    }

    /// `mean + Σ_k c_k φ_k`.
    pub fn reconstruct(&self, scores: &[T]) -> Result<Curve<T>> {
        if scores.len() != self.n_components() {
            return Err(Error::DimensionMismatch {
                expected: self.n_components(),
                got: scores.len(),
            });
        }
        let mut out = self.mean.clone();
        for (c, phi) in scores.iter().zip(&self.eigenfunctions) {
            out = out.axpy(*c, phi)?;
        }
        Ok(out)
    }

    /// Writes `component,eigenvalue,v_1,…,v_S`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(f, "component,eigenvalue")?;
        for j in 1..=self.grid.len() {
            write!(f, ",v_{j}")?;
        }
        writeln!(f)?;
        for (k, (phi, lambda)) in self.eigenfunctions.iter().zip(&self.eigenvalues).enumerate() {
            write!(f, "{},{}", k + 1, crate::curves::fmt_sig17(lambda.to_f64_lossy()))?;
            for v in phi.values() {
                write!(f, ",{}", crate::curves::fmt_sig17(v.to_f64_lossy()))?;
            }
            writeln!(f)?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Fits the mean and the smallest set of leading eigenfunctions whose
/// cumulative share of variance reaches `var_threshold`.
pub fn fit_fpca<T: Scalar>(sample: &CurveSample<T>, var_threshold: T) -> Result<FpcaBasis<T>> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::InsufficientSample { needed: 2, got: n });
    }
    if !(var_threshold > T::zero() && var_threshold <= T::one()) {
        return Err(Error::Domain(format!(
            "variance threshold must lie in (0, 1], got {var_threshold}"
        )));
    }
    let grid = sample.grid().clone();
    let s = grid.len();

    let mut mean = vec![T::zero(); s];
    for c in sample.curves() {
        for (m, v) in mean.iter_mut().zip(c.values()) {
            *m = *m + *v;
        }
    }
    let nt = T::of_usize(n);
    mean.iter_mut().for_each(|m| *m = *m / nt);
    // constant columns keep their exact value so identical curves centre to zero
    let first = sample.curves()[0].values();
    for (j, m) in mean.iter_mut().enumerate() {
        if sample.curves().iter().all(|c| c.values()[j] == first[j]) {
            *m = first[j];
        }
    }

    let sqrt_w: Vec<T> = grid.quad_weights().iter().map(|w| w.sqrt()).collect();
    let denom = T::of_usize(n - 1);
    // scaled centered data Z_ij = (X_ij - mean_j) sqrt(w_j)
    let z: Vec<Vec<T>> = sample
        .curves()
        .iter()
        .map(|c| {
            c.values()
                .iter()
                .zip(&mean)
                .zip(&sqrt_w)
                .map(|((v, m), sw)| (*v - *m) * *sw)
                .collect()
        })
        .collect();
    let mut cov = vec![T::zero(); s * s];
    for row in &z {
        for a in 0..s {
            let za = row[a];
            if za == T::zero() {
                continue;
            }
            for b in a..s {
                cov[a * s + b] = cov[a * s + b] + za * row[b];
            }
        }
    }
    for a in 0..s {
        for b in a..s {
            let v = cov[a * s + b] / denom;
            cov[a * s + b] = v;
            cov[b * s + a] = v;
        }
    }
    let total_variance = (0..s).fold(T::zero(), |acc, a| acc + cov[a * s + a]);
    let mean = Curve::new(grid.clone(), mean)?;

    let eig = symmetric_eigen(&cov, s);
    let values: Vec<T> = eig.values.iter().map(|v| v.max(T::zero())).collect();

    let mut k = 0;
    let mut explained = T::one();
    if total_variance > T::zero() {
        let tol = T::epsilon() * T::lit(64.0) * total_variance;
        let mut cum = T::zero();
        for (idx, lambda) in values.iter().enumerate() {
            if *lambda <= tol {
                break;
            }
            cum = cum + *lambda;
            k = idx + 1;
            if cum / total_variance >= var_threshold {
                break;
            }
        }
        explained = cum / total_variance;
    }

    let one = Curve::constant(grid.clone(), T::one())?;
    let mut eigenfunctions = Vec::with_capacity(k);
    for col in 0..k {
        let phi: Vec<T> = (0..s)
            .map(|r| eig.vectors[r * s + col] / sqrt_w[r])
            .collect();
        let mut phi = Curve::new(grid.clone(), phi)?;
        if inner_product(&phi, &one)? < T::zero() {
            phi = phi.scale(-T::one());
        }
        eigenfunctions.push(phi);
    }

    Ok(FpcaBasis {
        grid,
        mean,
        eigenfunctions,
        eigenvalues: values[..k].to_vec(),
        total_variance,
        var_explained: explained,
    })
}

/// Scores `c_k = ⟨φ_k, f − mean⟩`.
pub fn project_scores<T: Scalar>(basis: &FpcaBasis<T>, f: &Curve<T>) -> Result<Vec<T>> {
    let centered = f.sub(&basis.mean)?;
    basis
        .eigenfunctions
        .iter()
        .map(|phi| inner_product(phi, &centered))
        .collect()
}

/// Score matrix for a whole sample, one row per curve.
pub fn project_sample<T: Scalar>(basis: &FpcaBasis<T>, sample: &CurveSample<T>) -> Result<Vec<Vec<T>>> {
    sample
        .curves()
        .iter()
        .map(|c| project_scores(basis, c))
        .collect()
}
