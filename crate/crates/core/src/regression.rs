//! Extremile-weighted local linear scalar-on-function regression.
//!
//! At an evaluation curve `x0` the estimator solves the weighted least squares
//! problem with design rows `(1, ⟨φ_1, x0 − X_i⟩, …, ⟨φ_K, x0 − X_i⟩)` and
//! weights `L(‖x0 − X_i‖ / h) · J_τ(F̂(Y_i | X_i))`, where `h` is the
//! `k`-nearest-neighbour radius at `x0` rescaled by the level factor. The
//! intercept is the extremile estimate; the remaining coefficients describe
//! the projected functional derivative.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ccdf::{BandwidthGrid, CcdfConfig, CcdfModel};
use crate::curves::{distance_matrix, Curve, CurveSample};
use crate::error::{Error, Result};
use crate::extremile::{adaptive_factor, ExtremileLevel};
use crate::fpca::{fit_fpca, project_scores, FpcaBasis};
use crate::kernel::KernelSpec;
use crate::linalg::{cholesky, cholesky_solve, spd_condition};
use crate::scalar::Scalar;

/// Row-major `n × (K + 1)` local design; column 0 is all ones.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<T: Scalar> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DesignMatrix<T> {
    /// Builds a design from explicit rows; the leading column must be ones.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.is_empty() || cols == 0 {
            return Err(Error::Domain("design must have at least one row and column".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            if r[0] != T::one() || r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(
                    "design rows must start with 1 and be finite".into(),
                ));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> T {
        self.data[i * self.cols + k]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Design at `x0` with entries `⟨φ_k, x0 − X_i⟩`.
pub fn build_design<T: Scalar>(
    basis: &FpcaBasis<T>,
    x0: &Curve<T>,
    sample: &CurveSample<T>,
) -> Result<DesignMatrix<T>> {
    let scores = sample
        .curves()
        .iter()
        .map(|c| project_scores(basis, c))
        .collect::<Result<Vec<_>>>()?;
    design_from_scores(&project_scores(basis, x0)?, &scores)
}

/// `⟨φ_k, x0 − X_i⟩ = c_k(x0) − c_k(X_i)`, the mean cancelling.
fn design_from_scores<T: Scalar>(x0_scores: &[T], scores: &[Vec<T>]) -> Result<DesignMatrix<T>> {
    let cols = x0_scores.len() + 1;
    let mut data = Vec::with_capacity(scores.len() * cols);
    for s in scores {
        data.push(T::one());
        data.extend(x0_scores.iter().zip(s).map(|(a, b)| *a - *b));
    }
    Ok(DesignMatrix {
        rows: scores.len(),
        cols,
        data,
    })
}

/// Radius chosen by the nearest-neighbour rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnBandwidth<T: Scalar> {
    pub h: T,
    /// `false` when ties prevented an exact count of `k` and the smallest
    /// radius with at least `k` curves was used instead.
    pub exact: bool,
}

/// Default radius grid at an evaluation point: the distinct positive distances
/// plus one value 10% beyond the largest.
pub fn default_knn_grid<T: Scalar>(dists: &[T]) -> Result<BandwidthGrid<T>> {
    let mut v: Vec<T> = dists.iter().copied().filter(|d| *d > T::zero()).collect();
    let max = v.iter().copied().fold(T::zero(), T::max);
    v.push(if max > T::zero() { max * T::lit(1.1) } else { T::one() });
    BandwidthGrid::new(v)
}

fn knn_from_distances<T: Scalar>(
    dists: &[T],
    k: usize,
    grid: &BandwidthGrid<T>,
    exclude: Option<usize>,
) -> Result<KnnBandwidth<T>> {
    let available = dists.len() - usize::from(exclude.is_some_and(|e| e < dists.len()));
    if k == 0 || k > available {
        return Err(Error::Domain(format!(
            "k = {k} neighbours requested from {available} curves"
        )));
    }
    let mut sorted: Vec<T> = dists
        .iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != exclude)
        .map(|(_, d)| *d)
        .collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    // open ball: count of distances strictly below h
    let count = |h: T| sorted.partition_point(|d| *d < h);
    let mut fallback = None;
    for &h in grid.values() {
        let c = count(h);
        if c == k {
            return Ok(KnnBandwidth { h, exact: true });
        }
        if c > k && fallback.is_none() {
            fallback = Some(h);
        }
    }
    fallback
        .map(|h| KnnBandwidth { h, exact: false })
        .ok_or_else(|| Error::Selection {
            index: None,
            reason: format!("no grid radius captures {k} curves"),
        })
}

/// Smallest `h` in `grid` whose open ball around `x0` holds exactly `k` curves
/// (skipping `exclude`).
pub fn knn_bandwidth<T: Scalar>(
    x0: &Curve<T>,
    sample: &CurveSample<T>,
    k: usize,
    grid: &BandwidthGrid<T>,
    exclude: Option<usize>,
) -> Result<KnnBandwidth<T>> {
    let d = distance_matrix(sample, x0)?;
    knn_from_distances(&d, k, grid, exclude)
}

/// Level-adaptive bandwidth `h_k · [4τ(1−τ) V_τ J_τ(τ)²]^{1/5}`.
pub fn tau_bandwidth<T: Scalar>(h_k: T, tau: ExtremileLevel<T>) -> Result<T> {
    if !(h_k > T::zero()) {
        return Err(Error::Domain(format!("bandwidth must be positive, got {h_k}")));
    }
    Ok(h_k * adaptive_factor(tau))
}

/// Solution of the weighted normal equations.
#[derive(Debug, Clone, PartialEq)]
pub struct WlsSolution<T: Scalar> {
    pub alpha: T,
    pub b: Vec<T>,
    pub ridge_used: bool,
    pub effective_n: usize,
}

/// Default condition-number threshold beyond which a ridge is added.
pub const DEFAULT_RIDGE_TOL: f64 = 1e12;

/// Solves `(Φᵀ W Φ) θ = Φᵀ W Y` with `W = diag(kernel_weights · extremile_weights)`.
pub fn solve_wls<T: Scalar>(
    design: &DesignMatrix<T>,
    responses: &[T],
    kernel_weights: &[T],
    extremile_weights: &[T],
    ridge_tol: T,
) -> Result<WlsSolution<T>> {
    let n = design.rows;
    for len in [responses.len(), kernel_weights.len(), extremile_weights.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    let p = design.cols;
    let mut gram = vec![T::zero(); p * p];
    let mut rhs = vec![T::zero(); p];
    let mut effective_n = 0;
    for i in 0..n {
        let w = kernel_weights[i] * extremile_weights[i];
        if !(w >= T::zero()) || !w.is_finite() {
            return Err(Error::Domain(format!("invalid weight {w} at observation {i}")));
        }
        if w == T::zero() {
            continue;
        }
        effective_n += 1;
        let row = design.row(i);
        for a in 0..p {
            let wa = w * row[a];
            rhs[a] = rhs[a] + wa * responses[i];
            for b in a..p {
                gram[a * p + b] = gram[a * p + b] + wa * row[b];
            }
        }
    }
    if effective_n == 0 {
        return Err(Error::EmptyNeighborhood { bandwidth: f64::NAN });
    }
    for a in 0..p {
        for b in 0..a {
            gram[a * p + b] = gram[b * p + a];
        }
    }
    let mut ridge_used = false;
    let factor = if spd_condition(&gram, p) > ridge_tol {
        None
    } else {
        cholesky(&gram, p)
    };
    let factor = match factor {
        Some(l) => l,
        None => {
            ridge_used = true;
            let trace = (0..p).fold(T::zero(), |acc, a| acc + gram[a * p + a]);
            let ridge = T::lit(1e-8) * trace / T::of_usize(p);
            for a in 0..p {
                gram[a * p + a] = gram[a * p + a] + ridge;
            }
            cholesky(&gram, p).ok_or_else(|| {
                Error::Domain("weighted gram matrix is not positive definite".into())
            })?
        }
    };
    let theta = cholesky_solve(&factor, p, &rhs);
    Ok(WlsSolution {
        alpha: theta[0],
        b: theta[1..].to_vec(),
        ridge_used,
        effective_n,
    })
}

/// How the neighbour count is chosen when none is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KRule {
    /// Leave-one-out prediction error of the local linear mean, minimized over
    /// [`k_candidates`].
    #[default]
    Cv,
    /// `⌈n/5⌉`.
    Fifth,
}

impl fmt::Display for KRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KRule::Cv => "cv",
            KRule::Fifth => "fifth",
        })
    }
}

impl FromStr for KRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cv" => Ok(KRule::Cv),
            "fifth" | "n/5" => Ok(KRule::Fifth),
            other => Err(Error::Domain(format!("unknown neighbour rule {other:?}"))),
        }
    }
}

/// Estimator configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionConfig<T: Scalar> {
    /// Fixed neighbour count; `None` defers to `k_rule`.
    pub k_neighbors: Option<usize>,
    pub k_rule: KRule,
    pub kernel: KernelSpec,
    pub ccdf: CcdfConfig<T>,
    /// FPCA variance share used to choose `K`.
    pub var_threshold: T,
    pub ridge_tol: T,
}

impl<T: Scalar> Default for RegressionConfig<T> {
    fn default() -> Self {
        Self {
            k_neighbors: None,
            k_rule: KRule::Cv,
            kernel: KernelSpec::Epanechnikov,
            ccdf: CcdfConfig::default(),
            var_threshold: T::lit(0.95),
            ridge_tol: T::lit(DEFAULT_RIDGE_TOL),
        }
    }
}

/// Candidate neighbour counts for cross-validation: 5%, 10%, …, 100% of the
/// `n − 1` other curves, at least `min_k`.
pub fn k_candidates(n: usize, min_k: usize) -> Vec<usize> {
    let m = n.saturating_sub(1);
    let mut v: Vec<usize> = (1..=20)
        .map(|j| ((j * m) as f64 / 20.0).round() as usize)
        .map(|k| k.clamp(min_k.min(m), m))
        .filter(|k| *k >= 1)
        .collect();
    v.dedup();
    v
}

/// Neighbour count minimizing the leave-one-out squared error of the local
/// linear mean; ties go to the smaller count.
pub fn select_k_loo<T: Scalar>(
    sample: &CurveSample<T>,
    responses: &[T],
    basis: &FpcaBasis<T>,
    kernel: KernelSpec,
    candidates: &[usize],
) -> Result<usize> {
    let local = LocalLinear::new(sample, responses, basis.clone(), kernel, 1, T::lit(DEFAULT_RIDGE_TOL))?;
    local.select_k(candidates)
}
/// Result at one evaluation curve and level.
#[derive(Debug, Clone)]
pub struct ExtremileFit<T: Scalar> {
    pub x0: Curve<T>,
    pub tau: ExtremileLevel<T>,
    /// Estimated conditional extremile.
    pub alpha_hat: T,
    pub b_hat: Vec<T>,
    /// Bandwidth applied to each training observation.
    pub bandwidths_used: Vec<T>,
    pub effective_n: usize,
    pub ridge_used: bool,
    /// Whether the kNN radius captured exactly `k` curves.
    pub knn_exact: bool,
}

/// Training data, basis and scores shared by every local fit.
#[derive(Debug, Clone)]
struct LocalLinear<T: Scalar> {
    sample: CurveSample<T>,
    responses: Vec<T>,
    basis: FpcaBasis<T>,
    scores: Vec<Vec<T>>,
    kernel: KernelSpec,
    k: usize,
    ridge_tol: T,
}

impl<T: Scalar> LocalLinear<T> {
    fn new(
        sample: &CurveSample<T>,
        responses: &[T],
        basis: FpcaBasis<T>,
        kernel: KernelSpec,
        k: usize,
        ridge_tol: T,
    ) -> Result<Self> {
        if responses.len() != sample.len() {
            return Err(Error::DimensionMismatch {
                expected: sample.len(),
                got: responses.len(),
            });
        }
        if responses.iter().any(|y| !y.is_finite()) {
            return Err(Error::Data("non-finite response".into()));
        }
        let needed = basis.n_components() + 2;
        if sample.len() < needed {
            return Err(Error::InsufficientSample {
                needed,
                got: sample.len(),
            });
        }
        let scores = sample
            .curves()
            .iter()
            .map(|c| project_scores(&basis, c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            sample: sample.clone(),
            responses: responses.to_vec(),
            basis,
            scores,
            kernel,
            k,
            ridge_tol,
        })
    }

    fn select_k(&self, candidates: &[usize]) -> Result<usize> {
        let n = self.responses.len();
        if candidates.is_empty() {
            return Err(Error::Domain("no neighbour counts to choose from".into()));
        }
        let pairwise = self.sample.pairwise_distances();
        let ones = vec![T::one(); n];
        let errors: Vec<Vec<Option<T>>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let dists = &pairwise[i * n..(i + 1) * n];
                let mut design = design_from_scores(&self.scores[i], &self.scores).expect("consistent scores");
                // drop observation i from the fit
                let mut w_mask = ones.clone();
                w_mask[i] = T::zero();
                for k in 0..design.cols {
                    design.data[i * design.cols + k] = if k == 0 { T::one() } else { T::zero() };
                }
                let grid = default_knn_grid(dists).ok();
                candidates
                    .iter()
                    .map(|&k| {
                        let grid = grid.as_ref()?;
                        let knn = knn_from_distances(dists, k, grid, Some(i)).ok()?;
                        let kw: Vec<T> = dists.iter().map(|d| self.kernel.weight(*d, knn.h)).collect();
                        let sol = solve_wls(&design, &self.responses, &kw, &w_mask, self.ridge_tol).ok()?;
                        let e = self.responses[i] - sol.alpha;
                        Some(e * e)
                    })
                    .collect()
            })
            .collect();
        let mut best: Option<(usize, T)> = None;
        for (c, &k) in candidates.iter().enumerate() {
            let mut total = T::zero();
            let mut complete = true;
            for row in &errors {
                match row[c] {
                    Some(e) => total = total + e,
                    None => {
                        complete = false;
                        break;
                    }
                }
            }
            if complete && best.is_none_or(|(_, b)| total < b) {
                best = Some((k, total));
            }
        }
        best.map(|(k, _)| k).ok_or_else(|| Error::Selection {
            index: None,
            reason: "no neighbour count gives a complete leave-one-out fit".into(),
        })
    }

    /// Distances, design and kNN radius at `x0`, reusable across levels.
    fn prepare(&self, x0: &Curve<T>) -> Result<Prepared<T>> {
        let dists = distance_matrix(&self.sample, x0)?;
        let design = design_from_scores(&project_scores(&self.basis, x0)?, &self.scores)?;
        let grid = default_knn_grid(&dists)?;
        let knn = knn_from_distances(&dists, self.k, &grid, None)?;
        Ok(Prepared { dists, design, knn })
    }

    fn solve(
        &self,
        x0: &Curve<T>,
        prep: &Prepared<T>,
        tau: ExtremileLevel<T>,
        factor: T,
        extremile_weights: &[T],
    ) -> Result<ExtremileFit<T>> {
        let h = prep.knn.h * factor;
        let kernel_weights: Vec<T> = prep.dists.iter().map(|d| self.kernel.weight(*d, h)).collect();
        let sol = solve_wls(
            &prep.design,
            &self.responses,
            &kernel_weights,
            extremile_weights,
            self.ridge_tol,
        )
        .map_err(|e| match e {
            Error::EmptyNeighborhood { .. } => Error::EmptyNeighborhood {
                bandwidth: h.to_f64_lossy(),
            },
            other => other,
        })?;
        Ok(ExtremileFit {
            x0: x0.clone(),
            tau,
            alpha_hat: sol.alpha,
            b_hat: sol.b,
            bandwidths_used: vec![h; self.responses.len()],
            effective_n: sol.effective_n,
            ridge_used: sol.ridge_used,
            knn_exact: prep.knn.exact,
        })
    }
}

struct Prepared<T: Scalar> {
    dists: Vec<T>,
    design: DesignMatrix<T>,
    knn: KnnBandwidth<T>,
}

/// A fitted estimator: training data, FPCA basis and the conditional CDF
/// stage. Evaluate it at any curve on the training grid and any level.
#[derive(Debug, Clone)]
pub struct ExtremileModel<T: Scalar> {
    local: LocalLinear<T>,
    ccdf: CcdfModel<T>,
    config: RegressionConfig<T>,
}

impl<T: Scalar> ExtremileModel<T> {
    /// Fits FPCA (by `config.var_threshold`) and the CDF stage.
    pub fn fit(sample: &CurveSample<T>, responses: &[T], config: RegressionConfig<T>) -> Result<Self> {
        let basis = fit_fpca(sample, config.var_threshold)?;
        Self::with_basis(sample, responses, basis, config)
    }

    pub fn with_basis(
        sample: &CurveSample<T>,
        responses: &[T],
        basis: FpcaBasis<T>,
        config: RegressionConfig<T>,
    ) -> Result<Self> {
        let n = sample.len();
        let mut local = LocalLinear::new(sample, responses, basis, config.kernel, 1, config.ridge_tol)?;
        local.k = match (config.k_neighbors, config.k_rule) {
            (Some(k), _) => k,
            (None, KRule::Fifth) => n.div_ceil(5),
            (None, KRule::Cv) => {
                let min_k = local.basis.n_components() + 2;
                local.select_k(&k_candidates(n, min_k))?
            }
        };
        let ccdf = CcdfModel::fit(sample, responses, config.ccdf)?;
        Ok(Self {
            local,
            ccdf,
            config,
        })
    }

    pub fn basis(&self) -> &FpcaBasis<T> {
        &self.local.basis
    }

    pub fn ccdf(&self) -> &CcdfModel<T> {
        &self.ccdf
    }

    pub fn config(&self) -> &RegressionConfig<T> {
        &self.config
    }

    pub fn k_neighbors(&self) -> usize {
        self.local.k
    }

    /// Training scores on the model basis, one row per curve.
    pub fn training_scores(&self) -> &[Vec<T>] {
        &self.local.scores
    }

    pub fn fit_at(&self, x0: &Curve<T>, tau: ExtremileLevel<T>) -> Result<ExtremileFit<T>> {
        let prep = self.local.prepare(x0)?;
        let w = self.ccdf.weights(tau);
        self.local.solve(x0, &prep, tau, adaptive_factor(tau), &w)
    }

    /// Unweighted local linear mean at `x0` with the kNN radius.
    pub fn local_linear_mean_at(&self, x0: &Curve<T>) -> Result<ExtremileFit<T>> {
        let prep = self.local.prepare(x0)?;
        let ones = vec![T::one(); self.local.responses.len()];
        let half = ExtremileLevel::new(T::lit(0.5))?;
        self.local.solve(x0, &prep, half, T::one(), &ones)
    }

    /// Extremile estimates at every `(point, level)` pair. Cells whose fit fails
    /// are left empty and reported in `failures`.
    pub fn predict(&self, points: &[Curve<T>], taus: &[ExtremileLevel<T>]) -> ExtremilePredictions<T> {
        let factors: Vec<T> = taus.iter().map(|t| adaptive_factor(*t)).collect();
        let weights: Vec<Vec<T>> = taus.iter().map(|t| self.ccdf.weights(*t)).collect();
        let rows: Vec<(Vec<Option<T>>, Vec<(usize, usize, Error)>)> = points
            .par_iter()
            .enumerate()
            .map(|(i, x0)| {
                let mut row = vec![None; taus.len()];
                let mut errs = Vec::new();
                match self.local.prepare(x0) {
                    Ok(prep) => {
                        for (j, tau) in taus.iter().enumerate() {
                            match self.local.solve(x0, &prep, *tau, factors[j], &weights[j]) {
                                Ok(fit) => row[j] = Some(fit.alpha_hat),
                                Err(e) => errs.push((i, j, e)),
                            }
                        }
                    }
                    Err(e) => errs.extend((0..taus.len()).map(|j| (i, j, e.clone()))),
                }
                (row, errs)
            })
            .collect();
        let mut values = Vec::with_capacity(rows.len());
        let mut failures = Vec::new();
        for (row, errs) in rows {
            values.push(row);
            failures.extend(errs);
        }
        ExtremilePredictions {
            taus: taus.iter().map(|t| t.value()).collect(),
            values,
            failures,
        }
    }
}

/// Points × levels table of extremile estimates.
#[derive(Debug, Clone)]
pub struct ExtremilePredictions<T: Scalar> {
    pub taus: Vec<T>,
    pub values: Vec<Vec<Option<T>>>,
    pub failures: Vec<(usize, usize, Error)>,
}

impl<T: Scalar> ExtremilePredictions<T> {
    pub fn get(&self, point: usize, level: usize) -> Option<T> {
        self.values[point][level]
    }
}

/// One-shot fit at `x0` on a given basis.
#[allow(clippy::too_many_arguments)]
pub fn fit_extremile<T: Scalar>(
    x0: &Curve<T>,
    tau: ExtremileLevel<T>,
    sample: &CurveSample<T>,
    responses: &[T],
    basis: &FpcaBasis<T>,
    kernel: KernelSpec,
    k_neighbors: usize,
    ccdf_config: CcdfConfig<T>,
) -> Result<ExtremileFit<T>> {
    let config = RegressionConfig {
        k_neighbors: Some(k_neighbors),
        kernel,
        ccdf: ccdf_config,
        ..RegressionConfig::default()
    };
    ExtremileModel::with_basis(sample, responses, basis.clone(), config)?.fit_at(x0, tau)
}

/// Local linear mean regression at `x0` (all extremile weights equal to one).
pub fn local_linear_mean<T: Scalar>(
    x0: &Curve<T>,
    sample: &CurveSample<T>,
    responses: &[T],
    basis: &FpcaBasis<T>,
    kernel: KernelSpec,
    k_neighbors: usize,
) -> Result<ExtremileFit<T>> {
    let local = LocalLinear::new(
        sample,
        responses,
        basis.clone(),
        kernel,
        k_neighbors,
        T::lit(DEFAULT_RIDGE_TOL),
    )?;
    let prep = local.prepare(x0)?;
    let ones = vec![T::one(); responses.len()];
    local.solve(x0, &prep, ExtremileLevel::new(T::lit(0.5))?, T::one(), &ones)
}

/// Fits on the training data and evaluates at every point and level.
pub fn predict_extremiles<T: Scalar>(
    points: &CurveSample<T>,
    taus: &[ExtremileLevel<T>],
    sample: &CurveSample<T>,
    responses: &[T],
    config: RegressionConfig<T>,
) -> Result<ExtremilePredictions<T>> {
    let model = ExtremileModel::fit(sample, responses, config)?;
    Ok(model.predict(points.curves(), taus))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::{inner_product, Grid};
    use crate::fpca::fit_fpca;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::sync::Arc;

    fn synthetic(seed: u64, n: usize) -> (CurveSample<f64>, Vec<f64>) {
        let g = Arc::new(Grid::uniform(0.0, 1.0, 41).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ys = Vec::new();
        let curves = (0..n)
            .map(|_| {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                let e: f64 = rng.sample(StandardNormal);
                ys.push(a - 0.5 * b + 0.3 * a * a + 0.2 * e);
                Curve::from_fn(g.clone(), |s| a * s + 0.5 * b * (4.0 * s).cos()).unwrap()
            })
            .collect();
        (CurveSample::new(curves).unwrap(), ys)
    }

    #[test]
    fn design_examples() {
        let (sample, _) = synthetic(1, 15);
        let basis = fit_fpca(&sample, 0.99).unwrap();
        let x0 = sample.curve(3).clone();
        let single = CurveSample::new(vec![x0.clone()]).unwrap();
        let d = build_design(&basis, &x0, &single).unwrap();
        assert_eq!(d.row(0)[0], 1.0);
        assert!(d.row(0)[1..].iter().all(|v| v.abs() < 1e-12));

        let xi = x0.axpy(-1.0, &basis.eigenfunctions()[0]).unwrap();
        let d = build_design(&basis, &x0, &CurveSample::new(vec![xi]).unwrap()).unwrap();
        assert!((d.get(0, 1) - 1.0).abs() < 1e-8);
        assert!(d.row(0)[2..].iter().all(|v| v.abs() < 1e-8));

        // loop oracle with the direct inner product of the difference
        let d = build_design(&basis, &x0, &sample).unwrap();
        for i in 0..sample.len() {
            let diff = x0.sub(sample.curve(i)).unwrap();
            for (k, phi) in basis.eigenfunctions().iter().enumerate() {
                let direct = inner_product(phi, &diff).unwrap();
                assert!((d.get(i, k + 1) - direct).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn knn_examples() {
        let d = [0.1, 0.2, 0.3];
        let grid = BandwidthGrid::new(vec![0.15, 0.25, 0.35]).unwrap();
        assert_eq!(knn_from_distances(&d, 2, &grid, None).unwrap().h, 0.25);
        assert_eq!(knn_from_distances(&d, 3, &grid, None).unwrap().h, 0.35);
        let r = knn_from_distances(&d, 1, &grid, Some(0)).unwrap();
        assert_eq!(r.h, 0.25);
        assert!(r.exact);
        assert!(knn_from_distances(&d, 4, &grid, None).is_err());
        assert!(knn_from_distances(&d, 0, &grid, None).is_err());
    }

    #[test]
    fn knn_tie_fallback_is_flagged() {
        let d = [0.1, 0.2, 0.2, 0.3];
        let grid = default_knn_grid(&d).unwrap();
        let r = knn_from_distances(&d, 2, &grid, None).unwrap();
        assert!(!r.exact);
        assert_eq!(r.h, 0.3);
        let r = knn_from_distances(&d, 3, &grid, None).unwrap();
        assert!(r.exact);
        assert_eq!(r.h, 0.3);
    }

    #[test]
    fn tau_bandwidth_examples() {
        let half = ExtremileLevel::new(0.5f64).unwrap();
        assert_eq!(tau_bandwidth(0.3, half).unwrap(), 0.3);
        for t in [0.1f64, 0.3] {
            let a = tau_bandwidth(0.2, ExtremileLevel::new(t).unwrap()).unwrap();
            let b = tau_bandwidth(0.2, ExtremileLevel::new(1.0 - t).unwrap()).unwrap();
            assert!((a - b).abs() < 1e-6);
        }
        let v = tau_bandwidth(0.2, ExtremileLevel::new(0.9f64).unwrap()).unwrap();
        assert!((v - 0.2 * 1.140_526_753_93).abs() < 1e-8);
        assert!(tau_bandwidth(0.0, half).is_err());
    }

    fn random_problem(rng: &mut ChaCha8Rng, n: usize, p: usize) -> (DesignMatrix<f64>, Vec<f64>, Vec<f64>) {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut r = vec![1.0];
                r.extend((1..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
                r
            })
            .collect();
        let y = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let w = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        (DesignMatrix::from_rows(&rows).unwrap(), y, w)
    }

    #[test]
    fn wls_constant_responses_and_ols_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (d, _, w) = random_problem(&mut rng, 20, 3);
        let c = vec![2.5; 20];
        let ones = vec![1.0; 20];
        let s = solve_wls(&d, &c, &w, &ones, 1e12).unwrap();
        assert!((s.alpha - 2.5).abs() < 1e-10);
        assert!(s.b.iter().all(|b| b.abs() < 1e-10));
        assert!(!s.ridge_used);

        // OLS through an independent QR factorization
        let (d, y, _) = random_problem(&mut rng, 12, 4);
        let s = solve_wls(&d, &y, &ones[..12], &ones[..12], 1e12).unwrap();
        let x = nalgebra::DMatrix::from_fn(12, 4, |i, k| d.get(i, k));
        let qr = x.qr();
        let rhs = qr.q().transpose() * nalgebra::DVector::from_vec(y.clone());
        let theta = qr.r().solve_upper_triangular(&rhs).unwrap();
        assert!((s.alpha - theta[0]).abs() < 1e-10);
        for k in 0..3 {
            assert!((s.b[k] - theta[k + 1]).abs() < 1e-10);
        }
    }

    #[test]
    fn wls_errors_and_ridge() {
        let rows = vec![vec![1.0f64, 0.5], vec![1.0, 0.5], vec![1.0, 0.5]];
        let d = DesignMatrix::from_rows(&rows).unwrap();
        let y = [1.0f64, 2.0, 3.0];
        let zeros = [0.0; 3];
        let ones = [1.0; 3];
        assert!(matches!(
            solve_wls(&d, &y, &zeros, &ones, 1e12),
            Err(Error::EmptyNeighborhood { .. })
        ));
        let s = solve_wls(&d, &y, &ones, &ones, 1e12).unwrap();
        assert!(s.ridge_used);
        assert!(s.alpha.is_finite());
        assert!(DesignMatrix::from_rows(&[vec![2.0, 0.0]]).is_err());
    }

    #[test]
    fn wls_is_invariant_to_weight_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (d, y, w) = random_problem(&mut rng, 30, 4);
        let e: Vec<f64> = (0..30).map(|_| rng.random_range(0.1..3.0)).collect();
        let a = solve_wls(&d, &y, &w, &e, 1e12).unwrap();
        let scaled: Vec<f64> = w.iter().map(|v| v * 37.0).collect();
        let b = solve_wls(&d, &y, &scaled, &e, 1e12).unwrap();
        assert!((a.alpha - b.alpha).abs() < 1e-10);
        for (x, y) in a.b.iter().zip(&b.b) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn median_level_matches_local_linear_mean() {
        let (sample, y) = synthetic(21, 60);
        let basis = fit_fpca(&sample, 0.95).unwrap();
        let cfg = RegressionConfig::default();
        let model = ExtremileModel::with_basis(&sample, &y, basis.clone(), cfg).unwrap();
        let half = ExtremileLevel::new(0.5).unwrap();
        for i in [0, 7, 33] {
            let x0 = sample.curve(i);
            let a = model.fit_at(x0, half).unwrap();
            let b = model.local_linear_mean_at(x0).unwrap();
            let c = local_linear_mean(x0, &sample, &y, &basis, cfg.kernel, model.k_neighbors()).unwrap();
            assert_eq!(a.alpha_hat, b.alpha_hat);
            assert_eq!(a.alpha_hat, c.alpha_hat);
        }
    }

    #[test]
    fn constant_responses_reproduced_at_every_level() {
        let (sample, _) = synthetic(2, 40);
        let y = vec![-1.75; 40];
        let model = ExtremileModel::fit(&sample, &y, RegressionConfig::default()).unwrap();
        for t in [0.1, 0.5, 0.9] {
            let f = model.fit_at(sample.curve(5), ExtremileLevel::new(t).unwrap()).unwrap();
            assert!((f.alpha_hat + 1.75).abs() < 1e-10);
        }
    }

    #[test]
    fn predictions_match_cellwise_fits() {
        let (sample, y) = synthetic(8, 50);
        let model = ExtremileModel::fit(&sample, &y, RegressionConfig::default()).unwrap();
        let taus: Vec<_> = [0.2, 0.5, 0.8].iter().map(|t| ExtremileLevel::new(*t).unwrap()).collect();
        let points = vec![sample.curve(0).clone(), sample.curve(9).clone(), sample.curve(0).clone()];
        let pred = model.predict(&points, &taus);
        assert!(pred.failures.is_empty());
        for (i, x0) in points.iter().enumerate() {
            for (j, tau) in taus.iter().enumerate() {
                let cell = model.fit_at(x0, *tau).unwrap().alpha_hat;
                assert_eq!(pred.get(i, j), Some(cell));
            }
        }
        assert_eq!(pred.values[0], pred.values[2]);
        let one = model.predict(&points[..1], &taus[..1]);
        assert_eq!(one.values.len(), 1);
        assert_eq!(one.values[0].len(), 1);
    }

    #[test]
    fn rejects_too_small_samples() {
        let (sample, y) = synthetic(3, 3);
        let basis = fit_fpca(&sample, 0.99).unwrap();
        let cfg = RegressionConfig::default();
        assert!(matches!(
            ExtremileModel::with_basis(&sample, &y, basis, cfg),
            Err(Error::InsufficientSample { .. })
        ));
    }

    #[test]
    fn single_precision_model() {
        let g = Arc::new(Grid::<f32>::uniform(0.0, 1.0, 21).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut y = Vec::new();
        let curves = (0..40)
            .map(|_| {
                let a: f32 = rng.sample(StandardNormal);
                y.push(2.0 * a + 0.1 * rng.sample::<f32, _>(StandardNormal));
                Curve::from_fn(g.clone(), |s| a * s).unwrap()
            })
            .collect();
        let sample = CurveSample::new(curves).unwrap();
        let model = ExtremileModel::fit(&sample, &y, RegressionConfig::default()).unwrap();
        let f = model.fit_at(sample.curve(0), ExtremileLevel::new(0.7f32).unwrap()).unwrap();
        assert!(f.alpha_hat.is_finite());
    }
}
