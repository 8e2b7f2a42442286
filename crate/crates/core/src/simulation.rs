//! Monte Carlo harness: scenario generators, true conditional extremiles and
//! the AMSE, crossing-rate and PMSE metrics.
//!
//! Each replication draws from its own ChaCha stream selected by
//! `(seed, rep_index)`, so results do not depend on scheduling. Replications
//! run in parallel and are aggregated in index order.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ccdf::{CcdfConfig, VhatForm};
use crate::curves::{inner_product, Curve, CurveSample, Grid};
use crate::error::{Error, Result};
use crate::extremile::{gaussian_extremile, ExtremileLevel};
use crate::fpca::{fit_fpca, project_scores};
use crate::kernel::KernelSpec;
use crate::quantile::{fit_quantile_with, predict_quantiles};
use crate::regression::{ExtremileModel, KRule, RegressionConfig};

/// Share of failed replications beyond which a campaign is aborted.
pub const MAX_FAILURE_SHARE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// Central cubic B-spline functions.
    A,
    /// Constant and trigonometric functions.
    B,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::A => "A",
            Scenario::B => "B",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Scenario::A),
            "B" | "b" => Ok(Scenario::B),
            other => Err(Error::Domain(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub n: usize,
    /// Number of grid points on [0, 1].
    pub grid_size: usize,
    pub kappa: f64,
    pub sigma_eps: f64,
    pub beta0: f64,
    pub tau_grid: Vec<f64>,
    pub reps: usize,
    /// Kernel of the local linear step.
    pub kernel: KernelSpec,
    /// Kernel of the conditional CDF estimator.
    pub ccdf_kernel: KernelSpec,
    pub seed: u64,
    pub k_neighbors: Option<usize>,
    /// Rule for the neighbour count when `k_neighbors` is unset.
    pub k_rule: KRule,
    pub split_fraction: f64,
    pub vhat_form: VhatForm,
    pub qr_intercept: bool,
    pub var_threshold: f64,
    /// Multiplies every coefficient standard deviation; 0 gives `X ≡ 0`.
    pub coef_scale: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::A,
            n: 200,
            grid_size: 100,
            kappa: 1.0,
            sigma_eps: 0.25,
            beta0: 0.0,
            tau_grid: default_tau_grid(),
            reps: 50,
            kernel: KernelSpec::Epanechnikov,
            ccdf_kernel: KernelSpec::Epanechnikov,
            seed: 1,
            k_neighbors: None,
            k_rule: KRule::Cv,
            split_fraction: 0.8,
            vhat_form: VhatForm::Adopted,
            qr_intercept: true,
            var_threshold: 0.95,
            coef_scale: 1.0,
        }
    }
}

/// `{0.1, 0.2, …, 0.9}`.
pub fn default_tau_grid() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Domain(m));
        if self.n < 20 {
            return fail(format!("n must be at least 20, got {}", self.n));
        }
        if self.grid_size < 10 {
            return fail(format!("grid size must be at least 10, got {}", self.grid_size));
        }
        if self.reps == 0 {
            return fail("at least one replication is required".into());
        }
        if self.tau_grid.is_empty() {
            return fail("empty level grid".into());
        }
        if self.tau_grid.iter().any(|t| !(*t > 0.0 && *t < 1.0))
            || self.tau_grid.windows(2).any(|w| w[0] >= w[1])
        {
            return fail("levels must be strictly increasing inside (0, 1)".into());
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return fail(format!("kappa must be positive, got {}", self.kappa));
        }
        if !(self.sigma_eps > 0.0 && self.sigma_eps.is_finite()) {
            return fail(format!("sigma_eps must be positive, got {}", self.sigma_eps));
        }
        if !self.beta0.is_finite() {
            return fail("beta0 must be finite".into());
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return fail(format!("split fraction must lie in (0, 1), got {}", self.split_fraction));
        }
        if !(self.var_threshold > 0.0 && self.var_threshold <= 1.0) {
            return fail(format!("variance threshold must lie in (0, 1], got {}", self.var_threshold));
        }
        if !(self.coef_scale >= 0.0 && self.coef_scale.is_finite()) {
            return fail(format!("coefficient scale must be nonnegative, got {}", self.coef_scale));
        }
        if self.k_neighbors == Some(0) {
            return fail("k_neighbors must be positive".into());
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid<f64>> {
        Grid::uniform(0.0, 1.0, self.grid_size)
    }

    pub fn levels(&self) -> Result<Vec<ExtremileLevel<f64>>> {
        self.tau_grid.iter().map(|t| ExtremileLevel::new(*t)).collect()
    }

    pub fn regression_config(&self) -> RegressionConfig<f64> {
        RegressionConfig {
            k_neighbors: self.k_neighbors,
            k_rule: self.k_rule,
            kernel: self.kernel,
            ccdf: CcdfConfig {
                kappa: self.kappa,
                kernel: self.ccdf_kernel,
                vhat_form: self.vhat_form,
                ..CcdfConfig::default()
            },
            var_threshold: self.var_threshold,
            ..RegressionConfig::default()
        }
    }

    /// Training-set size of a prediction split.
    pub fn train_size(&self) -> usize {
        ((self.n as f64 * self.split_fraction).round() as usize).clamp(1, self.n - 1)
    }
}

/// Clamped cubic B-spline basis with `df` functions and equally spaced
/// interior knots on [0, 1].
pub fn bspline_basis(df: usize, grid: &Arc<Grid<f64>>) -> Result<Vec<Curve<f64>>> {
    if df < 4 {
        return Err(Error::Domain(format!("cubic B-splines need df >= 4, got {df}")));
    }
    let knots = clamped_knots(df);
    (0..df)
        .map(|j| Curve::from_fn(grid.clone(), |s| bspline_value(&knots, j, 3, s)))
        .collect()
}

fn clamped_knots(df: usize) -> Vec<f64> {
    let interior = df - 4;
    let mut k = vec![0.0; 4];
    k.extend((1..=interior).map(|i| i as f64 / (interior + 1) as f64));
    k.extend([1.0; 4]);
    k
}

/// Cox–de Boor recursion; the right end point belongs to the last span.
fn bspline_value(knots: &[f64], j: usize, degree: usize, s: f64) -> f64 {
    if degree == 0 {
        let (a, b) = (knots[j], knots[j + 1]);
        let last = *knots.last().expect("nonempty knots");
        return if (a <= s && s < b) || (s == last && b == last && a < b) {
            1.0
        } else {
            0.0
        };
    }
    let mut v = 0.0;
    let d1 = knots[j + degree] - knots[j];
    if d1 > 0.0 {
        v += (s - knots[j]) / d1 * bspline_value(knots, j, degree - 1, s);
    }
    let d2 = knots[j + degree + 1] - knots[j + 1];
    if d2 > 0.0 {
        v += (knots[j + degree + 1] - s) / d2 * bspline_value(knots, j + 1, degree - 1, s);
    }
    v
}

/// Generating functions and coefficient laws `(mean, sd)` of a scenario.
fn scenario_basis(scenario: Scenario, grid: &Arc<Grid<f64>>) -> Result<(Vec<Curve<f64>>, [(f64, f64); 5])> {
    use std::f64::consts::PI;
    match scenario {
        Scenario::A => {
            let mut b = bspline_basis(7, grid)?;
            b.truncate(6);
            b.remove(0);
            Ok((b, [(0.0, 0.5), (0.0, 0.5), (0.0, 0.25), (0.0, 0.05), (0.0, 0.05)]))
        }
        Scenario::B => {
            let fs: [fn(f64) -> f64; 5] = [
                |_| 1.0,
                |s| (PI * s).sin(),
                |s| (10.0 * PI * s).cos(),
                |s| (30.0 * PI * s).sin(),
                |s| (40.0 * PI * s).cos(),
            ];
            let b = fs
                .iter()
                .map(|f| Curve::from_fn(grid.clone(), f))
                .collect::<Result<Vec<_>>>()?;
            Ok((b, [(0.0, 0.25), (2.0, 1.0), (0.0, 0.5), (0.0, 0.05), (0.0, 0.05)]))
        }
    }
}

/// Slope function `β(s) = 2 cos(2πs)`.
pub fn beta_curve(grid: &Arc<Grid<f64>>) -> Result<Curve<f64>> {
    Curve::from_fn(grid.clone(), |s| 2.0 * (std::f64::consts::TAU * s).cos())
}

/// Heteroskedasticity `σ(x) = 1 + ∫|x|`.
pub fn sigma_of(x: &Curve<f64>) -> f64 {
    1.0 + x.abs_integral()
}

/// One simulated data set.
#[derive(Debug, Clone)]
pub struct ScenarioData {
    pub sample: CurveSample<f64>,
    pub responses: Vec<f64>,
    /// `σ(X_i)` per curve.
    pub sigma: Vec<f64>,
    /// Generating coefficients, one row per curve.
    pub coefficients: Vec<[f64; 5]>,
}

fn rep_rng(seed: u64, rep_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep_index as u64);
    rng
}

fn draw_scenario(config: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<ScenarioData> {
    let grid = Arc::new(config.grid()?);
    let (basis, laws) = scenario_basis(config.scenario, &grid)?;
    let beta = beta_curve(&grid)?;
    let mut curves = Vec::with_capacity(config.n);
    let mut responses = Vec::with_capacity(config.n);
    let mut sigma = Vec::with_capacity(config.n);
    let mut coefficients = Vec::with_capacity(config.n);
    for _ in 0..config.n {
        let mut c = [0.0; 5];
        for (ck, (mean, sd)) in c.iter_mut().zip(laws) {
            let z: f64 = rng.sample(StandardNormal);
            *ck = mean + sd * config.coef_scale * z;
        }
        let mut x = Curve::constant(grid.clone(), 0.0)?;
        for (ck, f) in c.iter().zip(&basis) {
            x = x.axpy(*ck, f)?;
        }
        let eps: f64 = rng.sample(StandardNormal);
        let sig = sigma_of(&x);
        responses.push(config.beta0 + inner_product(&beta, &x)? + sig * config.sigma_eps * eps);
        sigma.push(sig);
        coefficients.push(c);
        curves.push(x);
    }
    Ok(ScenarioData {
        sample: CurveSample::new(curves)?,
        responses,
        sigma,
        coefficients,
    })
}

/// Data set of replication `rep_index`; identical for identical inputs.
pub fn gen_scenario(config: &ScenarioConfig, rep_index: usize) -> Result<ScenarioData> {
    config.validate()?;
    draw_scenario(config, &mut rep_rng(config.seed, rep_index))
}

/// `β₀ + ∫βx + σ_ε σ(x) μ_τ` with `μ_τ` the standard Gaussian extremile.
pub fn true_extremile(x: &Curve<f64>, tau: ExtremileLevel<f64>, config: &ScenarioConfig) -> Result<f64> {
    if x.len() != config.grid_size {
        return Err(Error::GridMismatch(format!(
            "curve has {} points, scenario grid has {}",
            x.len(),
            config.grid_size
        )));
    }
    let beta = beta_curve(x.grid())?;
    Ok(config.beta0 + inner_product(&beta, x)? + config.sigma_eps * sigma_of(x) * gaussian_extremile(tau))
}

/// `true` when some row has `value(j) > value(k)` for a pair of columns
/// `j < k`. Missing cells are skipped.
pub fn has_crossing(estimates: &[Vec<Option<f64>>]) -> bool {
    estimates.iter().any(|row| {
        let mut running = f64::NEG_INFINITY;
        row.iter().flatten().any(|v| {
            let crossed = *v < running;
            running = running.max(*v);
            crossed
        })
    })
}

/// Share of replications with at least one crossing.
pub fn crossing_rate(per_rep: &[Vec<Vec<Option<f64>>>]) -> f64 {
    if per_rep.is_empty() {
        return 0.0;
    }
    per_rep.iter().filter(|m| has_crossing(m)).count() as f64 / per_rep.len() as f64
}

/// Source of the estimates scored against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Extremile,
    /// The true conditional extremiles; used to validate the harness.
    Truth,
}

/// Per-replication record kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub mse: Vec<f64>,
    pub failed_cells: usize,
    pub n_components: usize,
    pub extremile_crossing: bool,
    pub quantile_crossing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub taus: Vec<f64>,
    pub amse: Vec<f64>,
    pub sd: Vec<f64>,
    /// `false` when fewer than two replications succeeded; `sd` is then 0.
    pub sd_defined: bool,
    pub crossing_rate_extremile: f64,
    pub crossing_rate_quantile: f64,
    pub per_rep: Vec<RepRecord>,
    pub failed_reps: Vec<(usize, String)>,
}

impl McResult {
    /// Replication × level MSE matrix.
    pub fn per_rep_mse(&self) -> Vec<Vec<f64>> {
        self.per_rep.iter().map(|r| r.mse.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmseResult {
    pub taus: Vec<f64>,
    pub apmse: Vec<f64>,
    pub sd: Vec<f64>,
    pub sd_defined: bool,
    pub train_size: usize,
    pub test_size: usize,
    pub per_rep: Vec<RepRecord>,
    pub failed_reps: Vec<(usize, String)>,
}

/// Mean and `B − 1` standard deviation per column.
fn aggregate(rows: &[Vec<f64>], width: usize) -> (Vec<f64>, Vec<f64>, bool) {
    let b = rows.len();
    let mut mean = vec![0.0; width];
    let mut sd = vec![0.0; width];
    if b == 0 {
        return (mean, sd, false);
    }
    for j in 0..width {
        mean[j] = rows.iter().map(|r| r[j]).sum::<f64>() / b as f64;
        if b > 1 {
            let ss: f64 = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum();
            sd[j] = (ss / (b - 1) as f64).sqrt();
        }
    }
    (mean, sd, b > 1)
}

/// Mean squared error per column over the available cells.
fn column_mse(truth: &[Vec<f64>], est: &[Vec<Option<f64>>], width: usize) -> Result<Vec<f64>> {
    (0..width)
        .map(|j| {
            let (mut ss, mut m) = (0.0, 0usize);
            for (t, e) in truth.iter().zip(est) {
                if let Some(v) = e[j] {
                    ss += (t[j] - v).powi(2);
                    m += 1;
                }
            }
            if m == 0 {
                Err(Error::Campaign(format!("every cell failed at level index {j}")))
            } else {
                Ok(ss / m as f64)
            }
        })
        .collect()
}

fn check_failures(failed: usize, reps: usize) -> Result<()> {
    if failed as f64 > MAX_FAILURE_SHARE * reps as f64 {
        return Err(Error::Campaign(format!(
            "{failed} of {reps} replications failed"
        )));
    }
    Ok(())
}

/// Estimates at `points` for the configured levels.
fn estimate(
    estimator: Estimator,
    config: &ScenarioConfig,
    train: &ScenarioData,
    points: &[Curve<f64>],
    levels: &[ExtremileLevel<f64>],
    truth: &[Vec<f64>],
) -> Result<(Vec<Vec<Option<f64>>>, usize, ExtremileModel<f64>)> {
    let model = ExtremileModel::fit(&train.sample, &train.responses, config.regression_config())?;
    let est = match estimator {
        Estimator::Truth => truth.iter().map(|r| r.iter().map(|v| Some(*v)).collect()).collect(),
        Estimator::Extremile => {
            let p = model.predict(points, levels);
            for (i, j, e) in &p.failures {
                log::debug!("cell ({i}, {j}) failed: {e}");
            }
            p.values
        }
    };
    let failed = est.iter().flatten().filter(|v| v.is_none()).count();
    Ok((est, failed, model))
}

fn truth_matrix(points: &[Curve<f64>], levels: &[ExtremileLevel<f64>], config: &ScenarioConfig) -> Result<Vec<Vec<f64>>> {
    points
        .iter()
        .map(|x| levels.iter().map(|t| true_extremile(x, *t, config)).collect())
        .collect()
}

fn mc_rep(config: &ScenarioConfig, estimator: Estimator, rep: usize) -> Result<RepRecord> {
    let levels = config.levels()?;
    let data = gen_scenario(config, rep)?;
    let points = data.sample.curves();
    let truth = truth_matrix(points, &levels, config)?;
    let (est, failed_cells, model) = estimate(estimator, config, &data, points, &levels, &truth)?;
    let mse = column_mse(&truth, &est, levels.len())?;

    // quantile baseline on the same basis and data
    let scores = model.training_scores();
    let fits = config
        .tau_grid
        .iter()
        .map(|t| fit_quantile_with(scores, &data.responses, *t, config.qr_intercept))
        .collect::<Result<Vec<_>>>()?;
    let q = predict_quantiles(&fits, scores)?;
    let q: Vec<Vec<Option<f64>>> = q.into_iter().map(|r| r.into_iter().map(Some).collect()).collect();

    Ok(RepRecord {
        rep,
        mse,
        failed_cells,
        n_components: model.basis().n_components(),
        extremile_crossing: has_crossing(&est),
        quantile_crossing: has_crossing(&q),
    })
}

/// In-sample Monte Carlo campaign with the extremile estimator.
pub fn run_mc(config: &ScenarioConfig) -> Result<McResult> {
    run_mc_with(config, Estimator::Extremile)
}

pub fn run_mc_with(config: &ScenarioConfig, estimator: Estimator) -> Result<McResult> {
    run_mc_reps(config, estimator, 0..config.reps)
}

/// Campaign over an explicit range of replication indices.
pub fn run_mc_reps(
    config: &ScenarioConfig,
    estimator: Estimator,
    reps: std::ops::Range<usize>,
) -> Result<McResult> {
    config.validate()?;
    let outcomes: Vec<(usize, Result<RepRecord>)> = reps
        .clone()
        .into_par_iter()
        .map(|b| (b, mc_rep(config, estimator, b)))
        .collect();
    let (per_rep, failed_reps) = split_outcomes(outcomes);
    check_failures(failed_reps.len(), reps.len())?;
    let rows: Vec<Vec<f64>> = per_rep.iter().map(|r| r.mse.clone()).collect();
    let (amse, sd, sd_defined) = aggregate(&rows, config.tau_grid.len());
    let ok = per_rep.len().max(1) as f64;
    Ok(McResult {
        taus: config.tau_grid.clone(),
        amse,
        sd,
        sd_defined,
        crossing_rate_extremile: per_rep.iter().filter(|r| r.extremile_crossing).count() as f64 / ok,
        crossing_rate_quantile: per_rep.iter().filter(|r| r.quantile_crossing).count() as f64 / ok,
        per_rep,
        failed_reps,
    })
}

fn split_outcomes(outcomes: Vec<(usize, Result<RepRecord>)>) -> (Vec<RepRecord>, Vec<(usize, String)>) {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (b, r) in outcomes {
        match r {
            Ok(rec) => ok.push(rec),
            Err(e) => {
                log::warn!("replication {b} failed: {e}");
                failed.push((b, e.to_string()));
            }
        }
    }
    (ok, failed)
}

fn pmse_rep(config: &ScenarioConfig, estimator: Estimator, rep: usize) -> Result<RepRecord> {
    let levels = config.levels()?;
    let mut rng = rep_rng(config.seed, rep);
    let data = draw_scenario(config, &mut rng)?;
    let mut idx: Vec<usize> = (0..config.n).collect();
    idx.shuffle(&mut rng);
    let (train_idx, test_idx) = idx.split_at(config.train_size());
    let mut train_idx = train_idx.to_vec();
    let mut test_idx = test_idx.to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let train = ScenarioData {
        sample: data.sample.select(&train_idx)?,
        responses: train_idx.iter().map(|&i| data.responses[i]).collect(),
        sigma: train_idx.iter().map(|&i| data.sigma[i]).collect(),
        coefficients: train_idx.iter().map(|&i| data.coefficients[i]).collect(),
    };
    let points: Vec<Curve<f64>> = test_idx.iter().map(|&i| data.sample.curve(i).clone()).collect();
    let truth = truth_matrix(&points, &levels, config)?;
    let (est, failed_cells, model) = estimate(estimator, config, &train, &points, &levels, &truth)?;
    Ok(RepRecord {
        rep,
        mse: column_mse(&truth, &est, levels.len())?,
        failed_cells,
        n_components: model.basis().n_components(),
        extremile_crossing: has_crossing(&est),
        quantile_crossing: false,
    })
}

/// Out-of-sample campaign: fit on a random split, score on the held-out curves.
pub fn run_pmse(config: &ScenarioConfig) -> Result<PmseResult> {
    run_pmse_with(config, Estimator::Extremile)
}

pub fn run_pmse_with(config: &ScenarioConfig, estimator: Estimator) -> Result<PmseResult> {
    config.validate()?;
    let outcomes: Vec<(usize, Result<RepRecord>)> = (0..config.reps)
        .into_par_iter()
        .map(|b| (b, pmse_rep(config, estimator, b)))
        .collect();
    let (per_rep, failed_reps) = split_outcomes(outcomes);
    check_failures(failed_reps.len(), config.reps)?;
    let rows: Vec<Vec<f64>> = per_rep.iter().map(|r| r.mse.clone()).collect();
    let (apmse, sd, sd_defined) = aggregate(&rows, config.tau_grid.len());
    let train_size = config.train_size();
    Ok(PmseResult {
        taus: config.tau_grid.clone(),
        apmse,
        sd,
        sd_defined,
        train_size,
        test_size: config.n - train_size,
        per_rep,
        failed_reps,
    })
}

/// Scores of every curve on a basis fitted to the sample (95% rule by default).
pub fn sample_scores(sample: &CurveSample<f64>, var_threshold: f64) -> Result<Vec<Vec<f64>>> {
    let basis = fit_fpca(sample, var_threshold)?;
    sample.curves().iter().map(|c| project_scores(&basis, c)).collect()
}
