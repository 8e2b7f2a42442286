//! Kernel conditional CDF estimation with functional covariates.
//!
//! `F̂_h(y | x) = Σ L(‖x − X_i‖/h) 1(Y_i ≤ y) / Σ L(‖x − X_i‖/h)`, with the
//! bandwidth chosen per evaluation curve from a finite grid by balancing an
//! estimated bias term `Â(h)` against a variance bound `V̂(h)`. Bandwidths at
//! the sample curves are selected leave-one-out.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::{distance_matrix, Curve, CurveSample};
use crate::error::{Error, Result};
use crate::extremile::{ExtremileLevel, WeightFn};
use crate::kernel::KernelSpec;
use crate::scalar::Scalar;

/// Which variance proxy to use in the bandwidth selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VhatForm {
    /// `κ ln n / (n π̂_x(h))`.
    #[default]
    Adopted,
    /// `κ ln n / (n ln π̂_x(h))`, kept for comparison; it is nonpositive for
    /// `π̂ < 1` and so does not behave as a variance bound.
    Printed,
}

impl fmt::Display for VhatForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VhatForm::Adopted => "adopted",
            VhatForm::Printed => "printed",
        })
    }
}

impl FromStr for VhatForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "adopted" => Ok(VhatForm::Adopted),
            "printed" => Ok(VhatForm::Printed),
            other => Err(Error::Domain(format!("unknown vhat form {other:?}"))),
        }
    }
}

/// Finite, strictly increasing set of positive bandwidths.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthGrid<T: Scalar> {
    values: Vec<T>,
}

impl<T: Scalar> BandwidthGrid<T> {
    /// Sorts and deduplicates `values`; rejects empty input and nonpositive or
    /// non-finite entries.
    pub fn new(mut values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("bandwidth grid is empty".into()));
        }
        if values.iter().any(|h| !(h.is_finite() && *h > T::zero())) {
            return Err(Error::Domain("bandwidths must be positive and finite".into()));
        }
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        values.dedup();
        Ok(Self { values })
    }

    /// `m` logarithmically spaced values on `[lo, hi]`.
    pub fn log_spaced(lo: T, hi: T, m: usize) -> Result<Self> {
        if m == 0 || !(lo > T::zero()) || hi < lo {
            return Err(Error::Domain(format!(
                "invalid log grid [{lo}, {hi}] with {m} points"
            )));
        }
        if m == 1 || lo == hi {
            return Self::new(vec![lo]);
        }
        let (a, b) = (lo.ln(), hi.ln());
        let step = (b - a) / T::of_usize(m - 1);
        let mut v: Vec<T> = (0..m).map(|i| (a + step * T::of_usize(i)).exp()).collect();
        v[0] = lo;
        v[m - 1] = hi;
        Self::new(v)
    }

    /// Default selector grid: `m` log-spaced values between the 5th and 95th
    /// percentiles of the positive pairwise distances of `sample`. Falls back to
    /// `{1}` when every curve coincides.
    pub fn for_sample(sample: &CurveSample<T>, m: usize) -> Result<Self> {
        let n = sample.len();
        let all = sample.pairwise_distances();
        let mut positive: Vec<T> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| all[i * n + j])
            .filter(|d| *d > T::zero())
            .collect();
        if positive.is_empty() {
            return Self::new(vec![T::one()]);
        }
        positive.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let lo = percentile_sorted(&positive, T::lit(0.05));
        let hi = percentile_sorted(&positive, T::lit(0.95));
        Self::log_spaced(lo, hi, m)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn contains(&self, h: T) -> bool {
        self.values.contains(&h)
    }
}

/// Linear-interpolation percentile of sorted data.
pub(crate) fn percentile_sorted<T: Scalar>(sorted: &[T], p: T) -> T {
    let pos = p * T::of_usize(sorted.len() - 1);
    let lo = pos.floor().to_usize().unwrap_or(0).min(sorted.len() - 1);
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - T::of_usize(lo);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Tuning of the conditional CDF stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcdfConfig<T: Scalar> {
    pub kappa: T,
    pub kernel: KernelSpec,
    pub vhat_form: VhatForm,
    /// Size of the default bandwidth grid `H_F`.
    pub grid_size: usize,
}

impl<T: Scalar> Default for CcdfConfig<T> {
    fn default() -> Self {
        Self {
            kappa: T::one(),
            kernel: KernelSpec::Epanechnikov,
            vhat_form: VhatForm::Adopted,
            grid_size: 20,
        }
    }
}

impl<T: Scalar> CcdfConfig<T> {
    fn validate(&self) -> Result<()> {
        if !(self.kappa > T::zero() && self.kappa.is_finite()) {
            return Err(Error::Domain(format!("kappa must be positive, got {}", self.kappa)));
        }
        if self.grid_size == 0 {
            return Err(Error::Domain("bandwidth grid size must be positive".into()));
        }
        Ok(())
    }
}

fn check_responses<T: Scalar>(sample: &CurveSample<T>, responses: &[T]) -> Result<()> {
    if responses.len() != sample.len() {
        return Err(Error::DimensionMismatch {
            expected: sample.len(),
            got: responses.len(),
        });
    }
    if responses.iter().any(|y| !y.is_finite()) {
        return Err(Error::Data("non-finite response".into()));
    }
    Ok(())
}

/// `F̂_h(y | x0)`.
pub fn eval_ccdf<T: Scalar>(
    y: T,
    x0: &Curve<T>,
    sample: &CurveSample<T>,
    responses: &[T],
    h_f: T,
    kernel: KernelSpec,
) -> Result<T> {
    check_responses(sample, responses)?;
    let d = distance_matrix(sample, x0)?;
    ccdf_from_distances(y, &d, responses, h_f, kernel)
}

pub(crate) fn ccdf_from_distances<T: Scalar>(
    y: T,
    dists: &[T],
    responses: &[T],
    h: T,
    kernel: KernelSpec,
) -> Result<T> {
    let mut num = T::zero();
    let mut den = T::zero();
    for (d, yi) in dists.iter().zip(responses) {
        let w = kernel.weight(*d, h);
        den = den + w;
        if *yi <= y {
            num = num + w;
        }
    }
    if den > T::zero() {
        Ok((num / den).min(T::one()))
    } else {
        Err(Error::EmptyNeighborhood {
            bandwidth: h.to_f64_lossy(),
        })
    }
}

/// Empirical small-ball probability `#{i : ‖X_i − x0‖ ≤ h} / n`.
pub fn small_ball_hat<T: Scalar>(x0: &Curve<T>, h: T, sample: &CurveSample<T>) -> Result<T> {
    if !(h > T::zero()) {
        return Err(Error::Domain(format!("bandwidth must be positive, got {h}")));
    }
    let d = distance_matrix(sample, x0)?;
    Ok(small_ball_from_distances(&d, h))
}

fn small_ball_from_distances<T: Scalar>(dists: &[T], h: T) -> T {
    let inside = dists.iter().filter(|d| **d <= h).count();
    T::of_usize(inside) / T::of_usize(dists.len())
}

fn v_from_pi<T: Scalar>(pi: T, n: usize, kappa: T, form: VhatForm) -> T {
    if pi == T::zero() {
        return T::infinity();
    }
    let n_t = T::of_usize(n);
    let num = kappa * n_t.ln();
    match form {
        VhatForm::Adopted => num / (n_t * pi),
        VhatForm::Printed => num / (n_t * pi.ln()),
    }
}

/// Variance proxy `V̂(h, x0)`; `+∞` when the ball of radius `h` is empty.
pub fn v_hat<T: Scalar>(
    h_f: T,
    x0: &Curve<T>,
    sample: &CurveSample<T>,
    kappa: T,
    form: VhatForm,
) -> Result<T> {
    if sample.len() < 2 {
        return Err(Error::InsufficientSample {
            needed: 2,
            got: sample.len(),
        });
    }
    let pi = small_ball_hat(x0, h_f, sample)?;
    Ok(v_from_pi(pi, sample.len(), kappa, form))
}

/// Per-centre tabulation of `F̂_h` for every grid bandwidth on a common `y` mesh.
struct LocalCdfTable<T: Scalar> {
    mesh: Vec<T>,
    /// `None` where every kernel weight vanishes.
    cdfs: Vec<Option<Vec<T>>>,
    v: Vec<T>,
}

/// Sorted distinct responses; every `F̂_h` is constant between neighbours.
fn integration_mesh<T: Scalar>(responses: &[T]) -> Vec<T> {
    let mut mesh: Vec<T> = responses.to_vec();
    mesh.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    mesh.dedup();
    mesh
}

impl<T: Scalar> LocalCdfTable<T> {
    fn build(
        dists: &[T],
        responses: &[T],
        grid: &BandwidthGrid<T>,
        kappa: T,
        kernel: KernelSpec,
        form: VhatForm,
    ) -> Self {
        let n = responses.len();
        let mesh = integration_mesh(responses);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| responses[a].partial_cmp(&responses[b]).expect("finite"));

        let cdfs = grid
            .values()
            .iter()
            .map(|&h| {
                let w: Vec<T> = order.iter().map(|&i| kernel.weight(dists[i], h)).collect();
                let total: T = w.iter().copied().sum();
                if !(total > T::zero()) {
                    return None;
                }
                let mut out = Vec::with_capacity(mesh.len());
                let mut cum = T::zero();
                let mut next = 0;
                for &y in &mesh {
                    while next < n && responses[order[next]] <= y {
                        cum = cum + w[next];
                        next += 1;
                    }
                    out.push((cum / total).min(T::one()));
                }
                Some(out)
            })
            .collect();
        let v = grid
            .values()
            .iter()
            .map(|&h| v_from_pi(small_ball_from_distances(dists, h), n, kappa, form))
            .collect();
        Self { mesh, cdfs, v }
    }

    /// Exact `∫(a − b)²` of two right-continuous step functions tabulated at
    /// their jump points.
    fn integrated_sq_diff(&self, a: &[T], b: &[T]) -> T {
        let mut acc = T::zero();
        for k in 1..self.mesh.len() {
            let d = a[k - 1] - b[k - 1];
            acc = acc + (self.mesh[k] - self.mesh[k - 1]) * d * d;
        }
        acc
    }

    /// `Â(h_idx)`, skipping comparison bandwidths whose estimate is undefined.
    fn a_hat(&self, idx: usize) -> T {
        let mut best = T::zero();
        for (j, cdf_j) in self.cdfs.iter().enumerate() {
            let Some(fj) = cdf_j else { continue };
            let Some(fmax) = &self.cdfs[idx.max(j)] else {
                continue;
            };
            let bracket = self.integrated_sq_diff(fj, fmax) - self.v[j];
            if bracket > best {
                best = bracket;
            }
        }
        best
    }

    /// Criterion `Â + V̂` per grid bandwidth; `+∞` when `F̂_h` is undefined.
    fn criteria(&self) -> Vec<T> {
        (0..self.cdfs.len())
            .map(|i| {
                if self.cdfs[i].is_none() {
                    T::infinity()
                } else {
                    self.a_hat(i) + self.v[i]
                }
            })
            .collect()
    }
}

/// Bias proxy `Â(h_F, x0)`.
#[allow(clippy::too_many_arguments)]
pub fn a_hat<T: Scalar>(
    h_f: T,
    x0: &Curve<T>,
    sample: &CurveSample<T>,
    responses: &[T],
    grid: &BandwidthGrid<T>,
    kappa: T,
    kernel: KernelSpec,
    form: VhatForm,
) -> Result<T> {
    check_responses(sample, responses)?;
    let idx = grid
        .values()
        .iter()
        .position(|h| *h == h_f)
        .ok_or_else(|| Error::Domain(format!("bandwidth {h_f} is not in the grid")))?;
    let d = distance_matrix(sample, x0)?;
    let table = LocalCdfTable::build(&d, responses, grid, kappa, kernel, form);
    Ok(table.a_hat(idx))
}

fn argmin_first<T: Scalar>(values: &[T]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if !(v.is_finite() || *v == T::neg_infinity()) {
            continue;
        }
        match best {
            Some(b) if values[b] <= *v => {}
            _ => best = Some(i),
        }
    }
    best
}

fn select_from_distances<T: Scalar>(
    dists: &[T],
    responses: &[T],
    grid: &BandwidthGrid<T>,
    config: &CcdfConfig<T>,
) -> Result<T> {
    let table = LocalCdfTable::build(
        dists,
        responses,
        grid,
        config.kappa,
        config.kernel,
        config.vhat_form,
    );
    let crit = table.criteria();
    argmin_first(&crit)
        .map(|i| grid.values()[i])
        .ok_or_else(|| Error::Selection {
            index: None,
            reason: "every bandwidth leaves an empty neighbourhood".into(),
        })
}

/// `h_F^opt(x0) = argmin_h Â(h) + V̂(h)`; ties go to the smallest bandwidth.
pub fn select_hf_opt<T: Scalar>(
    x0: &Curve<T>,
    sample: &CurveSample<T>,
    responses: &[T],
    grid: &BandwidthGrid<T>,
    config: &CcdfConfig<T>,
) -> Result<T> {
    config.validate()?;
    check_responses(sample, responses)?;
    let d = distance_matrix(sample, x0)?;
    select_from_distances(&d, responses, grid, config)
}

fn loo_parts<T: Scalar>(all: &[T], n: usize, i: usize, responses: &[T]) -> (Vec<T>, Vec<T>) {
    let d = (0..n).filter(|&j| j != i).map(|j| all[i * n + j]).collect();
    let y = (0..n).filter(|&j| j != i).map(|j| responses[j]).collect();
    (d, y)
}

/// Leave-one-out selected bandwidth at every sample curve.
pub fn loo_bandwidths<T: Scalar>(
    sample: &CurveSample<T>,
    responses: &[T],
    grid: &BandwidthGrid<T>,
    config: &CcdfConfig<T>,
) -> Result<Vec<T>> {
    config.validate()?;
    check_responses(sample, responses)?;
    let n = sample.len();
    if n < 3 {
        return Err(Error::InsufficientSample { needed: 3, got: n });
    }
    let all = sample.pairwise_distances();
    loo_from_pairwise(&all, n, responses, grid, config)
}

fn loo_from_pairwise<T: Scalar>(
    all: &[T],
    n: usize,
    responses: &[T],
    grid: &BandwidthGrid<T>,
    config: &CcdfConfig<T>,
) -> Result<Vec<T>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let (d, y) = loo_parts(all, n, i, responses);
            select_from_distances(&d, &y, grid, config).map_err(|e| match e {
                Error::Selection { reason, .. } => Error::Selection {
                    index: Some(i),
                    reason,
                },
                other => other,
            })
        })
        .collect()
}

fn loo_own_cdf<T: Scalar>(
    all: &[T],
    n: usize,
    responses: &[T],
    bandwidths: &[T],
    kernel: KernelSpec,
) -> Result<Vec<T>> {
    let eps = T::one() / (T::lit(2.0) * T::of_usize(n));
    (0..n)
        .map(|i| {
            let (d, y) = loo_parts(all, n, i, responses);
            let f = ccdf_from_distances(responses[i], &d, &y, bandwidths[i], kernel)?;
            Ok(f.max(eps).min(T::one() - eps))
        })
        .collect()
}

/// `J_τ(F̂_{-i}(Y_i | X_i))` with the leave-one-out estimate clamped to
/// `[1/(2n), 1 − 1/(2n)]`.
pub fn ccdf_weights_at_responses<T: Scalar>(
    sample: &CurveSample<T>,
    responses: &[T],
    loo_bw: &[T],
    kernel: KernelSpec,
    tau: ExtremileLevel<T>,
) -> Result<Vec<T>> {
    check_responses(sample, responses)?;
    if loo_bw.len() != sample.len() {
        return Err(Error::DimensionMismatch {
            expected: sample.len(),
            got: loo_bw.len(),
        });
    }
    let n = sample.len();
    let all = sample.pairwise_distances();
    let f = loo_own_cdf(&all, n, responses, loo_bw, kernel)?;
    let j = WeightFn::new(tau);
    Ok(f.into_iter().map(|v| j.eval(v)).collect())
}

/// Conditional CDF stage fitted on a training sample: leave-one-out bandwidths
/// and the clamped CDF value of every response at its own curve.
#[derive(Debug, Clone)]
pub struct CcdfModel<T: Scalar> {
    config: CcdfConfig<T>,
    grid: BandwidthGrid<T>,
    selected_bandwidths: Vec<T>,
    own_cdf: Vec<T>,
}

impl<T: Scalar> CcdfModel<T> {
    /// Fits with the default bandwidth grid for `sample`.
    pub fn fit(sample: &CurveSample<T>, responses: &[T], config: CcdfConfig<T>) -> Result<Self> {
        config.validate()?;
        let grid = BandwidthGrid::for_sample(sample, config.grid_size)?;
        Self::fit_with_grid(sample, responses, grid, config)
    }

    pub fn fit_with_grid(
        sample: &CurveSample<T>,
        responses: &[T],
        grid: BandwidthGrid<T>,
        config: CcdfConfig<T>,
    ) -> Result<Self> {
        config.validate()?;
        check_responses(sample, responses)?;
        let n = sample.len();
        if n < 3 {
            return Err(Error::InsufficientSample { needed: 3, got: n });
        }
        let all = sample.pairwise_distances();
        let selected_bandwidths = loo_from_pairwise(&all, n, responses, &grid, &config)?;
        let own_cdf = loo_own_cdf(&all, n, responses, &selected_bandwidths, config.kernel)?;
        Ok(Self {
            config,
            grid,
            selected_bandwidths,
            own_cdf,
        })
    }

    pub fn config(&self) -> &CcdfConfig<T> {
        &self.config
    }

    pub fn grid(&self) -> &BandwidthGrid<T> {
        &self.grid
    }

    pub fn selected_bandwidths(&self) -> &[T] {
        &self.selected_bandwidths
    }

    /// Clamped leave-one-out `F̂(Y_i | X_i)`.
    pub fn own_cdf(&self) -> &[T] {
        &self.own_cdf
    }

    /// Extremile weights `J_τ(F̂(Y_i | X_i))`; exactly one at `τ = 1/2`.
    pub fn weights(&self, tau: ExtremileLevel<T>) -> Vec<T> {
        let j = WeightFn::new(tau);
        self.own_cdf.iter().map(|f| j.eval(*f)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::Grid;
    use std::sync::Arc;

    fn grid() -> Arc<Grid<f64>> {
        Arc::new(Grid::uniform(0.0, 1.0, 11).unwrap())
    }

    /// Constant curves: the L² distance between constants a and b is |a − b|.
    fn constants(levels: &[f64]) -> CurveSample<f64> {
        let g = grid();
        CurveSample::new(
            levels
                .iter()
                .map(|c| Curve::constant(g.clone(), *c).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn eval_ccdf_examples() {
        let sample = constants(&[0.1, -0.1, 0.3]);
        let x0 = Curve::constant(grid(), 0.0).unwrap();
        let y = [1.0, 3.0, 10.0];
        let k = KernelSpec::Epanechnikov;
        assert_eq!(eval_ccdf(10.0, &x0, &sample, &y, 1.0, k).unwrap(), 1.0);
        assert_eq!(eval_ccdf(0.5, &x0, &sample, &y, 1.0, k).unwrap(), 0.0);
        // only the two equidistant neighbours fall inside h = 0.2
        let v = eval_ccdf(2.0, &x0, &sample, &y, 0.2, k).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        assert!(matches!(
            eval_ccdf(2.0, &x0, &sample, &y, 0.05, k),
            Err(Error::EmptyNeighborhood { .. })
        ));
    }

    #[test]
    fn small_ball_examples() {
        let sample = constants(&[0.1, 0.2, 0.3, 0.4]);
        let x0 = Curve::constant(grid(), 0.0).unwrap();
        assert!((small_ball_hat(&x0, 0.25, &sample).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(small_ball_hat(&x0, 1.0, &sample).unwrap(), 1.0);
        assert_eq!(small_ball_hat(&x0, 0.05, &sample).unwrap(), 0.0);
        assert!(small_ball_hat(&x0, 0.0, &sample).is_err());
    }

    #[test]
    fn v_hat_examples() {
        assert!(v_from_pi(0.0f64, 10, 1.0, VhatForm::Adopted).is_infinite());
        assert!(v_from_pi(0.0f64, 10, 1.0, VhatForm::Printed).is_infinite());
        assert!((v_from_pi(0.5, 100, 1.0, VhatForm::Adopted) - 100f64.ln() / 50.0).abs() < 1e-15);
        assert!((v_from_pi(0.5f64, 100, 1.0, VhatForm::Adopted) - 0.09210).abs() < 1e-5);
        let a = v_from_pi(0.3f64, 40, 0.7, VhatForm::Adopted);
        let b = v_from_pi(0.3f64, 40, 1.4, VhatForm::Adopted);
        assert!((b - 2.0 * a).abs() < 1e-15);
        assert!(v_from_pi(0.3, 40, 1.0, VhatForm::Printed) < 0.0);

        let sample = constants(&[0.1, 0.2, 0.3, 0.4]);
        let x0 = Curve::constant(grid(), 0.0).unwrap();
        let v1 = v_hat(0.15, &x0, &sample, 1.0, VhatForm::Adopted).unwrap();
        let v2 = v_hat(0.35, &x0, &sample, 1.0, VhatForm::Adopted).unwrap();
        assert!(v1 > v2);
    }

    #[test]
    fn a_hat_vanishes_for_singleton_grid_and_equidistant_curves() {
        let sample = constants(&[0.1, -0.1, 0.1, -0.1]);
        let x0 = Curve::constant(grid(), 0.0).unwrap();
        let y = [1.0, 2.0, 4.0, 3.0];
        let k = KernelSpec::Epanechnikov;
        let single = BandwidthGrid::new(vec![0.5]).unwrap();
        assert_eq!(
            a_hat(0.5, &x0, &sample, &y, &single, 1.0, k, VhatForm::Adopted).unwrap(),
            0.0
        );
        let multi = BandwidthGrid::new(vec![0.2, 0.5, 0.9]).unwrap();
        for h in multi.values() {
            assert_eq!(
                a_hat(*h, &x0, &sample, &y, &multi, 1.0, k, VhatForm::Adopted).unwrap(),
                0.0
            );
        }
        assert!(a_hat(0.3, &x0, &sample, &y, &multi, 1.0, k, VhatForm::Adopted).is_err());
    }

    #[test]
    fn selection_edge_cases() {
        let sample = constants(&[0.1, 0.2, 0.3, 0.4]);
        let x0 = Curve::constant(grid(), 0.0).unwrap();
        let y = [1.0, 2.0, 3.0, 4.0];
        let cfg = CcdfConfig::default();
        let single = BandwidthGrid::new(vec![0.35]).unwrap();
        assert_eq!(select_hf_opt(&x0, &sample, &y, &single, &cfg).unwrap(), 0.35);
        // only the largest bandwidth reaches any curve
        let g = BandwidthGrid::new(vec![0.01, 0.05, 0.5]).unwrap();
        assert_eq!(select_hf_opt(&x0, &sample, &y, &g, &cfg).unwrap(), 0.5);
        let empty = BandwidthGrid::new(vec![0.01, 0.05]).unwrap();
        assert!(matches!(
            select_hf_opt(&x0, &sample, &y, &empty, &cfg),
            Err(Error::Selection { .. })
        ));
    }

    #[test]
    fn grid_normalizes_duplicates_and_rejects_bad_values() {
        let a = BandwidthGrid::new(vec![0.3, 0.1, 0.3, 0.2]).unwrap();
        assert_eq!(a.values(), &[0.1, 0.2, 0.3]);
        assert!(BandwidthGrid::<f64>::new(vec![]).is_err());
        assert!(BandwidthGrid::new(vec![0.0, 1.0]).is_err());
        let l = BandwidthGrid::log_spaced(0.01f64, 1.0, 3).unwrap();
        assert!((l.values()[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn loo_on_identical_curves_is_symmetric() {
        let sample = constants(&[0.5, 0.5, 0.5]);
        let y = [1.0, 2.0, 3.0];
        let grid = BandwidthGrid::for_sample(&sample, 20).unwrap();
        assert_eq!(grid.values(), &[1.0]);
        let bw = loo_bandwidths(&sample, &y, &grid, &CcdfConfig::default()).unwrap();
        assert!(bw.iter().all(|h| *h == bw[0]));
    }

    #[test]
    fn weights_at_median_level_are_exactly_one() {
        let sample = constants(&[0.0, 0.1, 0.25, 0.3, 0.45, 0.6]);
        let y = [0.3, 1.0, -0.2, 0.8, 1.5, 0.1];
        let model = CcdfModel::fit(&sample, &y, CcdfConfig::default()).unwrap();
        let w = model.weights(ExtremileLevel::new(0.5).unwrap());
        assert!(w.iter().all(|v| *v == 1.0));
        let direct = ccdf_weights_at_responses(
            &sample,
            &y,
            model.selected_bandwidths(),
            KernelSpec::Epanechnikov,
            ExtremileLevel::new(0.5).unwrap(),
        )
        .unwrap();
        assert_eq!(direct, w);
    }

    #[test]
    fn exchangeable_pairs_get_equal_weights() {
        let sample = constants(&[0.2; 5]);
        let y = [1.0; 5];
        let model = CcdfModel::fit(&sample, &y, CcdfConfig::default()).unwrap();
        let w = model.weights(ExtremileLevel::new(0.9).unwrap());
        assert!(w.iter().all(|v| *v == w[0]));
    }
}
