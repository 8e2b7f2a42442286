//! Command-line front end: `simulate`, `fit`, `predict` and `report`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod config;
mod svg;

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::ccdf::{CcdfConfig, VhatForm};
use crate::curves::{fmt_sig17, read_curves_csv, read_responses_csv, write_curves_csv, write_responses_csv, Curve, CurveSample};
use crate::error::Error;
use crate::extremile::ExtremileLevel;
use crate::kernel::KernelSpec;
use crate::regression::{ExtremileModel, ExtremilePredictions, KRule, RegressionConfig};
use crate::simulation::{default_tau_grid, gen_scenario, run_mc, run_pmse, RepRecord, Scenario, ScenarioConfig};

pub use config::Settings;
pub use svg::profile_chart;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "extremile", version, about = "Extremile scalar-on-function regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo campaign: AMSE, crossing rates and PMSE.
    Simulate(SimulateArgs),
    /// Fit on curve/response files and evaluate at profile curves.
    Fit(FitArgs),
    /// Fit on curve/response files and evaluate at new curves.
    Predict(PredictArgs),
    /// Render extremile tables as SVG charts.
    Report(ReportArgs),
}

#[derive(Debug, Args, Clone, Default)]
struct ModelArgs {
    /// Comma-separated levels in (0, 1).
    #[arg(long)]
    tau: Option<String>,
    /// Kernel of the local linear step.
    #[arg(long)]
    kernel: Option<KernelSpec>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Neighbour count, or `cv` / `fifth`.
    #[arg(long = "k-neighbors")]
    k_neighbors: Option<String>,
    #[arg(long = "vhat-form")]
    vhat_form: Option<VhatForm>,
    #[arg(long = "ridge-tol")]
    ridge_tol: Option<f64>,
    /// Flat `key = value` settings file or a run manifest.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    scenario: Option<Scenario>,
    #[arg(long)]
    n: Option<usize>,
    /// Grid size.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Training share of the prediction split.
    #[arg(long)]
    split: Option<f64>,
    #[arg(long = "qr-intercept")]
    qr_intercept: Option<bool>,
    #[arg(long = "sigma-eps")]
    sigma_eps: Option<f64>,
    #[arg(long)]
    beta0: Option<f64>,
    /// Also write the first replication's data as CSV.
    #[arg(long = "emit-data")]
    emit_data: bool,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    curves: Option<PathBuf>,
    #[arg(long)]
    responses: Option<PathBuf>,
    /// Evaluation curves; defaults to the mean and mean ± m·φ₁ profiles.
    #[arg(long)]
    eval: Option<PathBuf>,
    /// Multiplier `m` of the profile curves.
    #[arg(long = "profile-multiplier")]
    profile_multiplier: Option<f64>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    curves: Option<PathBuf>,
    #[arg(long)]
    responses: Option<PathBuf>,
    /// Curves at which to predict.
    #[arg(long)]
    points: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Table written by `fit` or `predict`.
    #[arg(long)]
    input: PathBuf,
    /// Restrict the chart to these levels.
    #[arg(long)]
    tau: Option<String>,
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Report(a) => cmd_report(a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(m)) => {
            eprintln!("usage error: {m}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            EXIT_RUNTIME
        }
    }
}

pub fn parse_tau_list(s: &str) -> CliResult<Vec<f64>> {
    let taus = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| CliError::Usage(format!("cannot parse level {t:?}")))
        })
        .collect::<CliResult<Vec<f64>>>()?;
    if taus.is_empty() {
        return Err(CliError::Usage("empty level list".into()));
    }
    if taus.iter().any(|t| !(*t > 0.0 && *t < 1.0)) || taus.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Usage("levels must be strictly increasing inside (0, 1)".into()));
    }
    Ok(taus)
}

fn parse_k(s: &str) -> CliResult<(Option<usize>, KRule)> {
    if let Ok(k) = s.trim().parse::<usize>() {
        if k == 0 {
            return Err(CliError::Usage("k-neighbors must be positive".into()));
        }
        return Ok((Some(k), KRule::Cv));
    }
    s.parse::<KRule>()
        .map(|r| (None, r))
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn fmt_level(t: f64) -> String {
    format!("{t}")
}

/// Model settings after applying flags over the settings file.
struct Resolved {
    taus: Vec<f64>,
    kernel: KernelSpec,
    kappa: f64,
    k: (Option<usize>, KRule),
    vhat_form: VhatForm,
    ridge_tol: f64,
}

fn resolve_model(m: &ModelArgs, settings: &mut Settings) -> CliResult<Resolved> {
    let taus = match m.tau.clone().or_else(|| settings.get("tau").map(str::to_string)) {
        Some(s) => parse_tau_list(&s)?,
        None => default_tau_grid(),
    };
    let kernel = settings.pick(m.kernel, "kernel", KernelSpec::Epanechnikov)?;
    let kappa = settings.pick(m.kappa, "kappa", 1.0)?;
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(CliError::Usage(format!("kappa must be positive, got {kappa}")));
    }
    let k_text = settings.pick(m.k_neighbors.clone(), "k-neighbors", "cv".to_string())?;
    let k = parse_k(&k_text)?;
    let vhat_form = settings.pick(m.vhat_form, "vhat-form", VhatForm::Adopted)?;
    let ridge_tol = settings.pick(m.ridge_tol, "ridge-tol", crate::regression::DEFAULT_RIDGE_TOL)?;
    if !(ridge_tol > 1.0) {
        return Err(CliError::Usage(format!("ridge-tol must exceed 1, got {ridge_tol}")));
    }

    settings.insert("tau", taus.iter().map(|t| fmt_level(*t)).collect::<Vec<_>>().join(","));
    settings.insert("kernel", kernel);
    settings.insert("kappa", kappa);
    settings.insert("k-neighbors", k_text);
    settings.insert("vhat-form", vhat_form);
    settings.insert("ridge-tol", ridge_tol);
    Ok(Resolved {
        taus,
        kernel,
        kappa,
        k,
        vhat_form,
        ridge_tol,
    })
}

impl Resolved {
    fn regression_config(&self) -> RegressionConfig<f64> {
        RegressionConfig {
            k_neighbors: self.k.0,
            k_rule: self.k.1,
            kernel: self.kernel,
            ccdf: CcdfConfig {
                kappa: self.kappa,
                vhat_form: self.vhat_form,
                ..CcdfConfig::default()
            },
            ridge_tol: self.ridge_tol,
            ..RegressionConfig::default()
        }
    }

    fn levels(&self) -> CliResult<Vec<ExtremileLevel<f64>>> {
        self.taus
            .iter()
            .map(|t| ExtremileLevel::new(*t).map_err(|e| CliError::Usage(e.to_string())))
            .collect()
    }
}

fn load_settings(path: &Option<PathBuf>) -> CliResult<Settings> {
    match path {
        Some(p) => Settings::load(p),
        None => Ok(Settings::default()),
    }
}

fn prepare_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    settings: &'a std::collections::BTreeMap<String, String>,
    config: C,
    outputs: Vec<&'a str>,
}

fn write_manifest<C: Serialize>(
    dir: &Path,
    command: &str,
    settings: &Settings,
    config: C,
    outputs: Vec<&str>,
) -> CliResult<()> {
    let m = Manifest {
        tool: "extremile",
        version: env!("CARGO_PKG_VERSION"),
        command,
        settings: settings.as_map(),
        config,
        outputs,
    };
    let text = serde_json::to_string_pretty(&m).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> CliResult<()> {
    let mut settings = load_settings(&a.model.config)?;
    let model = resolve_model(&a.model, &mut settings)?;
    let d = ScenarioConfig::default();
    let cfg = ScenarioConfig {
        scenario: settings.pick(a.scenario, "scenario", d.scenario)?,
        n: settings.pick(a.n, "n", d.n)?,
        grid_size: settings.pick(a.grid, "grid", d.grid_size)?,
        kappa: model.kappa,
        sigma_eps: settings.pick(a.sigma_eps, "sigma-eps", d.sigma_eps)?,
        beta0: settings.pick(a.beta0, "beta0", d.beta0)?,
        tau_grid: model.taus.clone(),
        reps: settings.pick(a.reps, "reps", d.reps)?,
        kernel: model.kernel,
        seed: settings.pick(a.seed, "seed", d.seed)?,
        k_neighbors: model.k.0,
        k_rule: model.k.1,
        split_fraction: settings.pick(a.split, "split", d.split_fraction)?,
        vhat_form: model.vhat_form,
        qr_intercept: settings.pick(a.qr_intercept, "qr-intercept", d.qr_intercept)?,
        ..d
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    for (k, v) in [
        ("scenario", cfg.scenario.to_string()),
        ("n", cfg.n.to_string()),
        ("grid", cfg.grid_size.to_string()),
        ("sigma-eps", cfg.sigma_eps.to_string()),
        ("beta0", cfg.beta0.to_string()),
        ("reps", cfg.reps.to_string()),
        ("seed", cfg.seed.to_string()),
        ("split", cfg.split_fraction.to_string()),
        ("qr-intercept", cfg.qr_intercept.to_string()),
    ] {
        settings.insert(k, v);
    }
    let out = &a.model.out;
    prepare_out(out)?;

    let mc = run_mc(&cfg)?;
    let pmse = run_pmse(&cfg)?;
    let label = format!(
        "{}:n={},S={},kappa={}",
        cfg.scenario, cfg.n, cfg.grid_size, cfg.kappa
    );
    write_metric_table(&out.join("amse.csv"), &label, &cfg.tau_grid, "amse", &mc.amse, &mc.sd)?;
    write_metric_table(&out.join("pmse.csv"), &label, &cfg.tau_grid, "apmse", &pmse.apmse, &pmse.sd)?;
    {
        let mut w = csv::Writer::from_path(out.join("crossing.csv"))?;
        w.write_record(["setting", "extremile", "quantile", "reps_used", "reps_failed"])?;
        w.write_record([
            label.clone(),
            fmt_sig17(mc.crossing_rate_extremile),
            fmt_sig17(mc.crossing_rate_quantile),
            mc.per_rep.len().to_string(),
            mc.failed_reps.len().to_string(),
        ])?;
        w.flush()?;
    }
    {
        let mut f = fs::File::create(out.join("audit.jsonl"))?;
        let line = |campaign: &str, r: &RepRecord| {
            serde_json::json!({ "campaign": campaign, "record": r }).to_string()
        };
        for r in &mc.per_rep {
            writeln!(f, "{}", line("mc", r))?;
        }
        for r in &pmse.per_rep {
            writeln!(f, "{}", line("pmse", r))?;
        }
        for (rep, e) in mc.failed_reps.iter().chain(&pmse.failed_reps) {
            writeln!(f, "{}", serde_json::json!({ "failed_rep": rep, "error": e }))?;
        }
    }
    let mut outputs = vec!["amse.csv", "pmse.csv", "crossing.csv", "audit.jsonl"];
    if a.emit_data {
        let data = gen_scenario(&cfg, 0)?;
        let ids: Vec<String> = (1..=cfg.n).map(|i| format!("x{i}")).collect();
        let sample = data.sample.with_ids(ids.clone())?;
        write_curves_csv(out.join("data_curves.csv"), &sample)?;
        write_responses_csv(out.join("data_responses.csv"), &ids, &data.responses)?;
        outputs.extend(["data_curves.csv", "data_responses.csv"]);
    }
    write_manifest(out, "simulate", &settings, &cfg, outputs)?;
    Ok(())
}

fn write_metric_table(
    path: &Path,
    label: &str,
    taus: &[f64],
    name: &str,
    mean: &[f64],
    sd: &[f64],
) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["setting".to_string(), "statistic".to_string()];
    header.extend(taus.iter().map(|t| fmt_level(*t)));
    w.write_record(&header)?;
    let rows: [(String, Vec<String>); 4] = [
        (name.to_string(), mean.iter().map(|v| fmt_sig17(*v)).collect()),
        ("sd".to_string(), sd.iter().map(|v| fmt_sig17(*v)).collect()),
        (format!("{name}_x1e3"), mean.iter().map(|v| format!("{:.0}", v * 1e3)).collect()),
        ("sd_x1e3".to_string(), sd.iter().map(|v| format!("{:.0}", v * 1e3)).collect()),
    ];
    for (stat, vals) in rows {
        let mut rec = vec![label.to_string(), stat];
        rec.extend(vals);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn read_training(
    curves: &Option<PathBuf>,
    responses: &Option<PathBuf>,
    settings: &mut Settings,
) -> CliResult<(CurveSample<f64>, Vec<f64>)> {
    let curves = curves
        .clone()
        .or_else(|| settings.get("curves").map(PathBuf::from))
        .ok_or_else(|| CliError::Usage("--curves is required".into()))?;
    let responses = responses
        .clone()
        .or_else(|| settings.get("responses").map(PathBuf::from))
        .ok_or_else(|| CliError::Usage("--responses is required".into()))?;
    let sample = read_curves_csv::<f64>(&curves)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", curves.display())))?;
    let ids = sample.ids().expect("csv samples carry ids").to_vec();
    let y = read_responses_csv::<f64>(&responses, &ids)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", responses.display())))?;
    settings.insert("curves", curves.display());
    settings.insert("responses", responses.display());
    Ok((sample, y))
}

fn write_extremile_table(path: &Path, ids: &[String], pred: &ExtremilePredictions<f64>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_string()];
    header.extend(pred.taus.iter().map(|t| fmt_level(*t)));
    w.write_record(&header)?;
    for (id, row) in ids.iter().zip(&pred.values) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|v| v.map(fmt_sig17).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and `mean ± m·φ₁` curves of the model basis.
pub fn profile_curves(model: &ExtremileModel<f64>, multiplier: f64) -> crate::error::Result<CurveSample<f64>> {
    let basis = model.basis();
    let mean = basis.mean().clone();
    let mut curves = vec![mean.clone()];
    let mut ids = vec!["mean".to_string()];
    if let Some(phi) = basis.eigenfunctions().first() {
        curves.push(mean.axpy(-multiplier, phi)?);
        curves.push(mean.axpy(multiplier, phi)?);
        ids.push("mean_minus".into());
        ids.push("mean_plus".into());
    }
    CurveSample::new(curves)?.with_ids(ids)
}

fn cmd_fit(a: FitArgs) -> CliResult<()> {
    let mut settings = load_settings(&a.model.config)?;
    let model_cfg = resolve_model(&a.model, &mut settings)?;
    let multiplier = settings.pick(a.profile_multiplier, "profile-multiplier", 5.0)?;
    let (sample, y) = read_training(&a.curves, &a.responses, &mut settings)?;
    let levels = model_cfg.levels()?;
    let model = ExtremileModel::fit(&sample, &y, model_cfg.regression_config())?;
    let out = &a.model.out;
    prepare_out(out)?;
    let mut outputs = vec!["extremiles.csv"];
    let eval_path = a.eval.clone().or_else(|| settings.get("eval").map(PathBuf::from));
    let points = match eval_path {
        Some(p) => {
            settings.insert("eval", p.display());
            read_curves_csv::<f64>(&p).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?
        }
        None => {
            settings.insert("profile-multiplier", multiplier);
            let prof = profile_curves(&model, multiplier)?;
            write_curves_csv(out.join("profiles.csv"), &prof)?;
            outputs.push("profiles.csv");
            prof
        }
    };
    let pred = model.predict(points.curves(), &levels);
    report_failures(&pred);
    let ids = point_ids(&points);
    write_extremile_table(&out.join("extremiles.csv"), &ids, &pred)?;
    write_manifest(out, "fit", &settings, model.config(), outputs)?;
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> CliResult<()> {
    let mut settings = load_settings(&a.model.config)?;
    let model_cfg = resolve_model(&a.model, &mut settings)?;
    let (sample, y) = read_training(&a.curves, &a.responses, &mut settings)?;
    let points_path = a
        .points
        .clone()
        .or_else(|| settings.get("points").map(PathBuf::from))
        .ok_or_else(|| CliError::Usage("--points is required".into()))?;
    settings.insert("points", points_path.display());
    let points = read_curves_csv::<f64>(&points_path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", points_path.display())))?;
    let levels = model_cfg.levels()?;
    let model = ExtremileModel::fit(&sample, &y, model_cfg.regression_config())?;
    let out = &a.model.out;
    prepare_out(out)?;
    let pred = model.predict(points.curves(), &levels);
    report_failures(&pred);
    write_extremile_table(&out.join("predictions.csv"), &point_ids(&points), &pred)?;
    write_manifest(out, "predict", &settings, model.config(), vec!["predictions.csv"])?;
    Ok(())
}

fn point_ids(points: &CurveSample<f64>) -> Vec<String> {
    points
        .ids()
        .map(<[String]>::to_vec)
        .unwrap_or_else(|| (0..points.len()).map(|i| i.to_string()).collect())
}

fn report_failures(pred: &ExtremilePredictions<f64>) {
    for (i, j, e) in &pred.failures {
        log::warn!("no estimate for point {i} at level {}: {e}", pred.taus[*j]);
    }
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn cmd_report(a: ReportArgs) -> CliResult<()> {
    let filter = a.tau.as_deref().map(parse_tau_list).transpose()?;
    if !a.input.exists() {
        return Err(CliError::Runtime(format!("missing input {}", a.input.display())));
    }
    let mut rdr = csv::Reader::from_path(&a.input)?;
    let header = rdr.headers()?.clone();
    let taus: Vec<f64> = header
        .iter()
        .skip(1)
        .map(|h| {
            h.parse::<f64>()
                .map_err(|_| CliError::Runtime(format!("column {h:?} is not a level")))
        })
        .collect::<CliResult<_>>()?;
    if taus.is_empty() {
        return Err(CliError::Runtime("input has no level columns".into()));
    }
    let keep: Vec<usize> = (0..taus.len())
        .filter(|&j| filter.as_ref().is_none_or(|f| f.contains(&taus[j])))
        .collect();
    prepare_out(&a.out)?;
    for rec in rdr.records() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or("").to_string();
        let mut lv = Vec::with_capacity(keep.len());
        let mut vals = Vec::with_capacity(keep.len());
        for &j in &keep {
            let field = rec.get(j + 1).unwrap_or("").trim();
            let v = if field.is_empty() {
                None
            } else {
                Some(field.parse::<f64>().map_err(|_| {
                    CliError::Runtime(format!("row {id:?}: cannot parse {field:?}"))
                })?)
            };
            lv.push(taus[j]);
            vals.push(v);
        }
        let svg = profile_chart(&id, &lv, &vals);
        fs::write(a.out.join(format!("profile_{}.svg", sanitize(&id))), svg)?;
    }
    Ok(())
}

/// Evaluates a fitted model at `points`; shared with tests of the CLI path.
pub fn predict_table(
    sample: &CurveSample<f64>,
    responses: &[f64],
    points: &[Curve<f64>],
    taus: &[f64],
    config: RegressionConfig<f64>,
) -> crate::error::Result<ExtremilePredictions<f64>> {
    let levels = taus.iter().map(|t| ExtremileLevel::new(*t)).collect::<crate::error::Result<Vec<_>>>()?;
    Ok(ExtremileModel::fit(sample, responses, config)?.predict(points, &levels))
}
