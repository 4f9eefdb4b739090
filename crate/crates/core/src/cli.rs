//! Command-line front end: configuration, experiment dispatch and report files.
//!
//! Every command writes a JSON document `{"meta":…,\n"result":…}` and/or a CSV
//! table whose first line is `# meta …`. The meta line carries the timestamp;
//! everything after it is a deterministic function of the configuration.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bounds::{run_suite, SuiteOptions, DEFAULT_BGRS_C};
use crate::counterex::{self, question1_probe, sweep, Family, ProbeOptions, SweepOptions, SWEEP_COLUMNS};
use crate::decompose::{theorem_dim, theorem_uncor, SampleOptions, UncorOptions};
use crate::error::{Error, Result};
use crate::estimate::BoundReport;
use crate::follmer::{
    dat_convergence, energy_identities, localization_checks, martingale_diagnostics, simulate_ensemble, GridKind,
    LocalizationOptions, SimOptions, TimeRow,
};
use crate::functionals::{Budget, Functionals};
use crate::gaussmix::{GaussianMixture, MixtureSpec};
use crate::rng::DEFAULT_SEED;
use crate::transport::{w2_sliced, wp_exact, EmpiricalMeasure};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;

/// Column order of every bound-report CSV.
pub const REPORT_COLUMNS: [&str; 5] = ["name", "lhs", "rhs", "slack", "holds"];

/// Column order of the per-time Föllmer diagnostics CSV.
pub const TIME_COLUMNS: [&str; 17] = [
    "t",
    "mean_v_dev",
    "mean_v_se",
    "ev2",
    "ev2_se",
    "ev2_step",
    "ev2_step_se",
    "q_resid",
    "q_resid_se",
    "ito_resid_rms",
    "qv_drift",
    "qv_drift_se",
    "dev2_dt",
    "e_tr_q2",
    "tr_m2",
    "comparison_gap",
    "comparison_se",
];

/// Column order of the transport CSV.
pub const TRANSPORT_COLUMNS: [&str; 4] = ["method", "p", "value", "abs_error"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Both,
}

impl Format {
    fn json(self) -> bool {
        self != Format::Csv
    }

    fn csv(self) -> bool {
        self != Format::Json
    }
}

#[derive(Debug, Parser)]
#[command(name = "lsi-lab", version, about = "Log-Sobolev deficit laboratory for Gaussian mixtures")]
pub struct Cli {
    /// Experiment configuration JSON; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Exit with status 2 when any applicable verdict fails.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Output stem; `.json`/`.csv` are appended. Without it documents go to stdout.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Every single-measure inequality check for one mixture.
    VerifyBounds(VerifyArgs),
    /// Simulate the Föllmer process and check its identities.
    SimulateFollmer(SimulateArgs),
    /// Pathwise decompositions of μ.
    Decompose(DecomposeArgs),
    /// Wasserstein distance between two measures or sample files.
    Transport(TransportArgs),
    /// Analytic (and optionally measured) columns of a counterexample family.
    CounterexampleSweep(SweepArgs),
    /// Fit a discrete measure p with p*γ close to μ (exploratory).
    ProbeQuestion1(ProbeArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::VerifyBounds(_) => "verify-bounds",
            Command::SimulateFollmer(_) => "simulate-follmer",
            Command::Decompose(_) => "decompose",
            Command::Transport(_) => "transport",
            Command::CounterexampleSweep(_) => "counterexample-sweep",
            Command::ProbeQuestion1(_) => "probe-question1",
        }
    }
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Mixture JSON (inline or file) or shorthand such as `isotropic:400`, `standard:2`, `gaussian`.
    #[arg(long)]
    pub measure: Option<String>,
    /// Monte Carlo samples for functionals above dimension 2.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub quad_tol: Option<f64>,
    /// Sample size for the W₂ distance to γ.
    #[arg(long, default_value_t = 1024)]
    pub w2_samples: usize,
    #[arg(long, default_value_t = DEFAULT_BGRS_C)]
    pub bgrs_c: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub measure: Option<String>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value_t = GridArg::Uniform)]
    pub grid: GridArg,
    /// Noise band, in standard errors, for the diagnostic verdicts.
    #[arg(long, default_value_t = 4.0)]
    pub z: f64,
    /// Also rerun at twice the steps and report the residual ratio.
    #[arg(long)]
    pub convergence: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GridArg {
    Uniform,
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Theorem {
    Dim,
    Uncor,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long, value_enum)]
    pub theorem: Theorem,
    #[arg(long)]
    pub measure: Option<String>,
    #[arg(long)]
    pub paths: Option<usize>,
    /// Default 512 for dim, 1024 for uncor.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    /// Points per block for the assignment distances.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub blocks: usize,
    /// Write the constructed samples to `<out>.samples.csv`.
    #[arg(long)]
    pub dump_samples: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum TransportMethod {
    /// Sorted coupling in 1D, exact assignment otherwise.
    Exact,
    /// Random-projection heuristic.
    Sliced,
}

#[derive(Debug, Args)]
pub struct TransportArgs {
    /// First measure: mixture spec/shorthand, or a CSV of sample rows.
    #[arg(long)]
    pub a: String,
    #[arg(long)]
    pub b: String,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// Points drawn from each mixture input.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, value_enum, default_value_t = TransportMethod::Exact)]
    pub method: TransportMethod,
    #[arg(long, default_value_t = 256)]
    pub projections: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub family: String,
    /// Comma-separated k values (default depends on the family).
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<f64>,
    /// Add the measured deficit and translate-infimum distance columns.
    #[arg(long)]
    pub monte_carlo: bool,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub measure: Option<String>,
    #[arg(long, default_value_t = 4)]
    pub support: usize,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 30)]
    pub iterations: usize,
}

/// Configuration file schema.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Option<String>,
    /// Mixture JSON object, family shorthand object, or shorthand string.
    pub measure: Option<Value>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    pub paths: Option<usize>,
    pub steps: Option<usize>,
    pub samples: Option<usize>,
    pub quad_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub format: Option<Format>,
    pub path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn validate(&self) -> Result<()> {
        let b = &self.budgets;
        for (field, v) in [("budgets.paths", b.paths), ("budgets.steps", b.steps), ("budgets.samples", b.samples)] {
            if v == Some(0) {
                return Err(Error::Config(format!("{field} must be positive")));
            }
        }
        if let Some(q) = b.quad_tol {
            if !(q > 0.0) {
                return Err(Error::Config(format!("budgets.quad_tol must be positive, got {q}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FamilySpec {
    family: String,
    k: f64,
}

/// Parse a measure given as inline JSON, a JSON file, or a shorthand.
pub fn parse_measure(text: &str) -> Result<GaussianMixture> {
    let t = text.trim();
    if t.starts_with('{') {
        return parse_measure_json(t, "measure");
    }
    if let Some(m) = parse_shorthand(t)? {
        return Ok(m);
    }
    let path = Path::new(t);
    let body = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("measure '{t}' is neither a shorthand nor a readable file: {e}"))
    })?;
    parse_measure_json(&body, &path.display().to_string())
}

fn parse_shorthand(t: &str) -> Result<Option<GaussianMixture>> {
    let (name, arg) = match t.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (t, None),
    };
    let number = |what: &str| -> Result<f64> {
        let a = arg.ok_or_else(|| Error::Config(format!("shorthand '{t}' needs {what} after ':'")))?;
        a.trim().parse::<f64>().map_err(|_| Error::Config(format!("shorthand '{t}': cannot parse '{a}' as {what}")))
    };
    match name {
        "gaussian" | "standard" => {
            let n = if arg.is_some() { number("a dimension")? } else { 1.0 };
            if n < 1.0 || n.fract() != 0.0 {
                return Err(Error::Config(format!("shorthand '{t}': dimension must be a positive integer")));
            }
            Ok(Some(GaussianMixture::standard(n as usize)))
        }
        "isotropic" | "variance_blowup" | "variance-blowup" => {
            let family: Family = name.parse()?;
            Ok(Some(counterex::family_member(family, number("k")?)?.mixture))
        }
        _ => Ok(None),
    }
}

fn parse_measure_json(body: &str, origin: &str) -> Result<GaussianMixture> {
    let value: Value = serde_json::from_str(body).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
    if value.get("family").is_some() {
        let f: FamilySpec = serde_json::from_str(body).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        let family: Family = f.family.parse()?;
        return counterex::family_member(family, f.k).map(|m| m.mixture);
    }
    let spec: MixtureSpec = serde_json::from_str(body).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
    spec.build().map_err(|e| Error::Config(format!("{origin}: {e}")))
}

fn measure_from_value(v: &Value) -> Result<GaussianMixture> {
    match v {
        Value::String(s) => parse_measure(s),
        other => parse_measure_json(&other.to_string(), "config field `measure`"),
    }
}

/// Settings resolved from flags, the config file and defaults.
struct Context {
    command: &'static str,
    seed: u64,
    strict: bool,
    format: Format,
    out: Option<PathBuf>,
    config: ExperimentConfig,
}

impl Context {
    fn measure(&self, flag: &Option<String>) -> Result<GaussianMixture> {
        match (flag, &self.config.measure) {
            (Some(s), _) => parse_measure(s),
            (None, Some(v)) => measure_from_value(v),
            (None, None) => Err(Error::Config("no measure given (use --measure or the config field `measure`)".into())),
        }
    }

    fn budget(&self, samples: Option<usize>, quad_tol: Option<f64>) -> Budget {
        let mut b = Budget::default().with_seed(self.seed);
        if let Some(s) = samples.or(self.config.budgets.samples) {
            b.samples = s;
        }
        if let Some(q) = quad_tol.or(self.config.budgets.quad_tol) {
            b.quad_tol = q;
        }
        b
    }

    fn pick(&self, flag: Option<usize>, budget: Option<usize>, default: usize, name: &str) -> Result<usize> {
        let v = flag.or(budget).unwrap_or(default);
        if v == 0 {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        Ok(v)
    }

    fn meta(&self) -> Value {
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        json!({
            "tool": "lsi-lab",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "seed": self.seed,
            "timestamp": stamp,
        })
    }
}

/// Outcome of one command: the JSON result, CSV tables and the summary line.
struct Output {
    result: Value,
    csv: Option<Table>,
    extra: Option<(String, Table)>,
    summary: String,
    violations: usize,
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn render(&self, meta: &Value) -> Result<Vec<u8>> {
        let mut buf = format!("# meta {meta}\n").into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(&self.header)?;
            for r in &self.rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        Ok(buf)
    }
}

fn num(x: f64) -> String {
    format!("{x:.12e}")
}

fn render_json(meta: &Value, result: &Value) -> Result<Vec<u8>> {
    Ok(format!("{{\"meta\":{meta},\n\"result\":{}}}\n", serde_json::to_string_pretty(result)?).into_bytes())
}

/// Write through a temporary file in the target directory, then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let stem = match stem.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("csv") => stem.with_extension(""),
        _ => stem.to_path_buf(),
    };
    let mut s: OsString = stem.into_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn report_table(reports: &[BoundReport]) -> Table {
    let mut t = Table::new(&REPORT_COLUMNS);
    for r in reports {
        t.rows.push(vec![r.name.clone(), num(r.lhs.value), num(r.rhs.value), num(r.slack), r.holds.to_string()]);
    }
    t
}

fn count_violations(reports: &[&BoundReport]) -> usize {
    reports.iter().filter(|r| r.violated()).count()
}

fn verify_bounds(ctx: &Context, a: &VerifyArgs) -> Result<Output> {
    let mix = ctx.measure(&a.measure)?;
    let budget = ctx.budget(a.samples, a.quad_tol);
    if a.w2_samples == 0 {
        return Err(Error::Config("--w2-samples must be positive".into()));
    }
    let opts = SuiteOptions { bgrs_c: a.bgrs_c, w2_samples: a.w2_samples, ..SuiteOptions::default() };
    let reports = run_suite(&mix, &budget, &opts)?;
    let violations = count_violations(&reports.iter().collect::<Vec<_>>());
    let held = reports.iter().filter(|r| r.holds).count();
    Ok(Output {
        result: json!({ "measure": mix.to_spec(), "reports": reports }),
        csv: Some(report_table(&reports)),
        extra: None,
        summary: format!("verify-bounds: {held}/{} reports hold, {violations} violation(s)", reports.len()),
        violations,
    })
}

fn sim_options(ctx: &Context, paths: Option<usize>, steps: Option<usize>, default_steps: usize, epsilon: f64) -> Result<SimOptions> {
    Ok(SimOptions {
        n_paths: ctx.pick(paths, ctx.config.budgets.paths, 10_000, "paths")?,
        n_steps: ctx.pick(steps, ctx.config.budgets.steps, default_steps, "steps")?,
        epsilon,
        seed: ctx.seed,
        ..SimOptions::default()
    })
}

fn time_row(r: &TimeRow) -> Vec<String> {
    [
        r.t,
        r.mean_v_dev,
        r.mean_v_se,
        r.ev2,
        r.ev2_se,
        r.ev2_step,
        r.ev2_step_se,
        r.q_resid,
        r.q_resid_se,
        r.ito_resid_rms,
        r.qv_drift,
        r.qv_drift_se,
        r.dev2_dt,
        r.e_tr_q2,
        r.tr_m2,
        r.comparison_gap,
        r.comparison_se,
    ]
    .iter()
    .map(|&x| num(x))
    .collect()
}

fn simulate_follmer(ctx: &Context, a: &SimulateArgs) -> Result<Output> {
    let mix = ctx.measure(&a.measure)?;
    let mut opts = sim_options(ctx, a.paths, a.steps, 512, a.epsilon)?;
    opts.grid = match a.grid {
        GridArg::Uniform => GridKind::Uniform,
        GridArg::Geometric => GridKind::Geometric,
    };
    let f = Functionals::compute(&mix, &ctx.budget(None, None))?;
    let ens = simulate_ensemble(&mix, &opts)?;
    let energy = energy_identities(&ens);
    let close = |path: &crate::Estimate, exact: &crate::Estimate| {
        (path.value - exact.value).abs() <= 3.0 * path.abs_error + exact.abs_error
    };
    let entropy_ok = close(&energy.entropy_path, &f.entropy_gauss);
    let deficit_ok = close(&energy.deficit_path, &f.deficit);
    let diagnostics = if ens.has_full_curvature() { Some(martingale_diagnostics(&ens, &mix, a.z)?) } else { None };
    let localization = localization_checks(&ens, &mix, f.deficit, &LocalizationOptions::default())?;
    drop(ens);
    let convergence = if a.convergence { Some(dat_convergence(&mix, &opts)?) } else { None };

    let mut violations = usize::from(!entropy_ok) + usize::from(!deficit_ok);
    let mut table = Table::new(&TIME_COLUMNS);
    let diag_json = match &diagnostics {
        Some(d) => {
            violations += usize::from(!d.mean_v_ok)
                + d.monotonicity_violations
                + usize::from(!d.q_identity_ok)
                + usize::from(!d.qv_martingale_ok)
                + usize::from(!d.comparison_ok);
            table.rows.extend(d.rows.iter().map(time_row));
            json!({
                "mean_v_ok": d.mean_v_ok,
                "monotonicity_violations": d.monotonicity_violations,
                "q_identity_ok": d.q_identity_ok,
                "qv_martingale_ok": d.qv_martingale_ok,
                "comparison_ok": d.comparison_ok,
                "ito_resid_terminal_rms": d.ito_resid_terminal_rms,
                "z": d.z,
            })
        }
        None => Value::Null,
    };
    let mut reports = vec![&localization.report];
    if let Some(r) = &localization.report_direct {
        reports.push(r);
    }
    violations += count_violations(&reports);
    let summary = format!(
        "simulate-follmer: entropy_path {:.6} (H {:.6}), deficit_path {:.6} (δ {:.6}), {violations} violation(s)",
        energy.entropy_path.value, f.entropy_gauss.value, energy.deficit_path.value, f.deficit.value
    );
    Ok(Output {
        result: json!({
            "measure": mix.to_spec(),
            "options": opts,
            "entropy": f.entropy_gauss,
            "deficit": f.deficit,
            "fisher_info": f.fisher_info_gauss,
            "energy": energy,
            "entropy_ok": entropy_ok,
            "deficit_ok": deficit_ok,
            "diagnostics": diag_json,
            "localization": localization,
            "convergence": convergence,
        }),
        csv: diagnostics.is_some().then_some(table),
        extra: None,
        summary,
        violations,
    })
}

fn samples_table(columns: &[(&str, &EmpiricalMeasure)]) -> Table {
    let mut header = vec!["index".to_string()];
    for (name, m) in columns {
        header.extend((0..m.dim()).map(|i| format!("{name}{i}")));
    }
    let count = columns.first().map_or(0, |c| c.1.count());
    let rows = (0..count)
        .map(|p| {
            let mut r = vec![p.to_string()];
            for (_, m) in columns {
                r.extend(m.points().row(p).iter().map(|&x| num(x)));
            }
            r
        })
        .collect();
    Table { header, rows }
}

fn decompose(ctx: &Context, a: &DecomposeArgs) -> Result<Output> {
    let mix = ctx.measure(&a.measure)?;
    let default_steps = if a.theorem == Theorem::Uncor { 1024 } else { 512 };
    let opts = sim_options(ctx, a.paths, a.steps, default_steps, a.epsilon)?;
    let samples = SampleOptions {
        sample_size: ctx.pick(a.samples, ctx.config.budgets.samples, 1024, "samples")?,
        blocks: ctx.pick(Some(a.blocks), None, 5, "blocks")?,
    };
    if a.dump_samples && ctx.out.is_none() {
        return Err(Error::Config("--dump-samples needs --out".into()));
    }
    let deficit = Functionals::compute(&mix, &ctx.budget(None, None))?.deficit;
    let ens = simulate_ensemble(&mix, &opts)?;
    let (result, reports, extra, summary) = match a.theorem {
        Theorem::Dim => {
            let d = theorem_dim(&mix, &ens, deficit, &samples)?;
            let reports = vec![d.bound_report.clone(), d.coupling_report.clone(), d.intermediate_report.clone()];
            let extra = a.dump_samples.then(|| ("samples".to_string(), samples_table(&[("nu", &d.nu_samples)])));
            let summary = format!(
                "decompose dim: t* {:.4}, W2 {:.6}, delta {:.6} vs rhs {:.6}",
                d.t_star, d.w2_estimate.value, deficit.value, d.bound_report.rhs.value
            );
            (serde_json::to_value(&d)?, reports, extra, summary)
        }
        Theorem::Uncor => {
            let d = theorem_uncor(&mix, &ens, deficit, &UncorOptions { samples, ..UncorOptions::default() })?;
            let reports = vec![d.report.clone(), d.coupling_report.clone(), d.deficit_lower_report.clone()];
            let extra = a.dump_samples.then(|| {
                ("samples".to_string(), samples_table(&[("y", &d.y_samples), ("w", &d.w_samples), ("z", &d.z_samples)]))
            });
            let summary = format!(
                "decompose uncor: E<Y,W> {:.6} ± {:.6}, qv residual {:.3e}, delta {:.6} vs ½W2² {:.6}",
                d.inner_product_check.value,
                d.inner_product_check.abs_error,
                d.qv_residual,
                deficit.value,
                d.report.rhs.value
            );
            (serde_json::to_value(&d)?, reports, extra, summary)
        }
    };
    let violations = count_violations(&reports.iter().collect::<Vec<_>>());
    Ok(Output {
        result: json!({ "measure": mix.to_spec(), "options": opts, "deficit": deficit, "decomposition": result }),
        csv: Some(report_table(&reports)),
        extra,
        summary: format!("{summary}, {violations} violation(s)"),
        violations,
    })
}

/// Sample rows from a CSV file (comment lines start with '#'; no header).
pub fn read_samples_csv(path: &Path) -> Result<EmpiricalMeasure> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).comment(Some(b'#')).trim(csv::Trim::All).from_path(path)?;
    let mut data = Vec::new();
    let mut dim = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, s)| {
                s.parse::<f64>().map_err(|_| {
                    Error::Config(format!("{}: record {}, field {}: cannot parse '{s}'", path.display(), i + 1, j + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(Error::Config(format!(
                    "{}: record {} has {} fields, expected {d}",
                    path.display(),
                    i + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        data.extend(row);
    }
    let dim = dim.ok_or_else(|| Error::Config(format!("{}: no sample rows", path.display())))?;
    EmpiricalMeasure::new(DMatrix::from_row_slice(data.len() / dim, dim, &data))
}

fn transport_input(spec: &str, count: usize, seed: u64, stream: u64) -> Result<EmpiricalMeasure> {
    if spec.trim().to_ascii_lowercase().ends_with(".csv") {
        read_samples_csv(Path::new(spec.trim()))
    } else {
        EmpiricalMeasure::sample(&parse_measure(spec)?, count, seed, stream)
    }
}

fn transport(ctx: &Context, a: &TransportArgs) -> Result<Output> {
    let count = ctx.pick(a.samples, ctx.config.budgets.samples, 1024, "samples")?;
    let x = transport_input(&a.a, count, ctx.seed, 0)?;
    let y = transport_input(&a.b, count, ctx.seed, 1)?;
    let (method, value, abs_error) = match a.method {
        TransportMethod::Exact => {
            let name = if x.dim() == 1 { "exact_1d" } else { "assignment" };
            (name, wp_exact(&x, &y, a.p)?, 0.0)
        }
        TransportMethod::Sliced => {
            if a.p != 2.0 {
                return Err(Error::Config("sliced estimate is only defined for p = 2".into()));
            }
            let e = w2_sliced(&x, &y, a.projections, ctx.seed)?;
            ("sliced", e.value, e.abs_error)
        }
    };
    let mut table = Table::new(&TRANSPORT_COLUMNS);
    table.rows.push(vec![method.to_string(), a.p.to_string(), num(value), num(abs_error)]);
    Ok(Output {
        result: json!({ "method": method, "p": a.p, "value": value, "abs_error": abs_error, "count": x.count(), "dim": x.dim() }),
        csv: Some(table),
        extra: None,
        summary: format!("transport: W{} = {value:.6} ({method}, {} points)", a.p, x.count()),
        violations: 0,
    })
}

fn counterexample_sweep(ctx: &Context, a: &SweepArgs) -> Result<Output> {
    let family: Family = a.family.parse()?;
    let ks = if a.k.is_empty() {
        match family {
            Family::VarianceBlowup => vec![4.0, 10.0, 100.0, 1000.0],
            Family::Isotropic => vec![400.0, 900.0, 1600.0, 2500.0],
        }
    } else {
        a.k.clone()
    };
    let opts = SweepOptions {
        monte_carlo: a.monte_carlo,
        samples: ctx.pick(a.samples, ctx.config.budgets.samples, 2048, "samples")?,
        reps: ctx.pick(Some(a.reps), None, 5, "reps")?,
        seed: ctx.seed,
    };
    let rows = sweep(family, &ks, &opts)?;
    let mut table = Table::new(&SWEEP_COLUMNS);
    table.rows.extend(rows.iter().map(|r| r.csv_record()));
    let violations = rows
        .iter()
        .filter_map(|r| r.measured.as_ref().map(|m| (r, m)))
        .filter(|(r, m)| m.deficit.value > r.deficit_upper + m.deficit.abs_error + 1e-8)
        .count();
    Ok(Output {
        summary: format!("counterexample-sweep: {} rows for {:?}, {violations} violation(s)", rows.len(), family),
        result: json!({ "family": family, "options": opts, "rows": rows }),
        csv: Some(table),
        extra: None,
        violations,
    })
}

fn probe_question1(ctx: &Context, a: &ProbeArgs) -> Result<Output> {
    let mix = ctx.measure(&a.measure)?;
    let opts = ProbeOptions {
        samples: ctx.pick(a.samples, ctx.config.budgets.samples, 2048, "samples")?,
        iterations: a.iterations,
        seed: ctx.seed,
    };
    let p = question1_probe(&mix, a.support, &opts)?;
    let mut header = vec!["index".to_string(), "weight".to_string()];
    header.extend((0..mix.dim()).map(|i| format!("x{i}")));
    let mut table = Table { header, rows: Vec::new() };
    for (i, (w, x)) in p.weights.iter().zip(&p.atoms).enumerate() {
        let mut r = vec![i.to_string(), num(*w)];
        r.extend(x.iter().map(|&v| num(v)));
        table.rows.push(r);
    }
    let constant = p.implied_constant.map_or("undefined".to_string(), |c| format!("{c:.4}"));
    Ok(Output {
        summary: format!(
            "probe-question1 (exploratory): S(p) {:.6}, W2² {:.6}, delta {:.6}, implied constant {constant}",
            p.shannon, p.w2_sq, p.deficit.value
        ),
        result: json!({ "measure": mix.to_spec(), "options": opts, "probe": p }),
        csv: Some(table),
        extra: None,
        violations: 0,
    })
}

fn emit(ctx: &Context, out: &Output) -> Result<()> {
    let meta = ctx.meta();
    match &ctx.out {
        Some(stem) => {
            if ctx.format.json() {
                write_atomic(&with_suffix(stem, ".json"), &render_json(&meta, &out.result)?)?;
            }
            if ctx.format.csv() {
                if let Some(t) = &out.csv {
                    write_atomic(&with_suffix(stem, ".csv"), &t.render(&meta)?)?;
                }
            }
            if let Some((name, t)) = &out.extra {
                write_atomic(&with_suffix(stem, &format!(".{name}.csv")), &t.render(&meta)?)?;
            }
            println!("{}", out.summary);
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            if ctx.format.json() {
                stdout.write_all(&render_json(&meta, &out.result)?)?;
            }
            if ctx.format.csv() {
                if let Some(t) = &out.csv {
                    stdout.write_all(&t.render(&meta)?)?;
                }
            }
            eprintln!("{}", out.summary);
        }
    }
    Ok(())
}

fn execute(cli: &Cli, config: ExperimentConfig) -> Result<i32> {
    let command = cli.command.as_ref().ok_or_else(|| Error::Config("no command given".into()))?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let ctx = Context {
        command: command.name(),
        seed: cli.seed.or(config.seed).unwrap_or(DEFAULT_SEED),
        strict: cli.strict,
        format: cli.format.or(config.output.format).unwrap_or(Format::Both),
        out: cli.out.clone().or_else(|| config.output.path.clone()),
        config,
    };
    let out = match command {
        Command::VerifyBounds(a) => verify_bounds(&ctx, a)?,
        Command::SimulateFollmer(a) => simulate_follmer(&ctx, a)?,
        Command::Decompose(a) => decompose(&ctx, a)?,
        Command::Transport(a) => transport(&ctx, a)?,
        Command::CounterexampleSweep(a) => counterexample_sweep(&ctx, a)?,
        Command::ProbeQuestion1(a) => probe_question1(&ctx, a)?,
    };
    emit(&ctx, &out)?;
    Ok(if ctx.strict && out.violations > 0 { EXIT_VIOLATION } else { EXIT_OK })
}

fn parse(args: &[OsString]) -> std::result::Result<Cli, i32> {
    Cli::try_parse_from(args).map_err(|e| {
        let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        let _ = e.print();
        code
    })
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    // The config may name the command, so it is read before clap sees the arguments.
    let config = match config_flag(&args) {
        Some(p) => match ExperimentConfig::load(&p).and_then(|c| c.validate().map(|_| c)) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
        },
        None => ExperimentConfig::default(),
    };
    if let Some(name) = &config.command {
        let known: Vec<String> = Cli::command().get_subcommands().map(|c| c.get_name().to_string()).collect();
        if !known.contains(name) {
            eprintln!("error: invalid configuration: unknown command '{name}' in config field `command`");
            return EXIT_CONFIG;
        }
        if !args.iter().skip(1).any(|a| a.to_str().is_some_and(|a| known.iter().any(|k| k == a))) {
            args.insert(1.min(args.len()), name.into());
        }
    }
    let cli = match parse(&args) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match execute(&cli, config) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

fn config_flag(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let a = a.to_string_lossy();
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}
