//! Command-line front end: problem files in, JSON or CSV out.
//!
//! Exit codes: 0 success, 1 usage or parse error, 2 validation error,
//! 3 numerical non-convergence.

use std::fs;
use std::io;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::barycenter::{self, BarycenterProblem};
use crate::cost::{self, ReferenceMeasure};
use crate::error::Error;
use crate::riccati::assemble_plan;
use crate::sinkhorn::{self, OracleSettings};
use crate::spd::Gaussian;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "geot", about = "Closed-form entropic optimal transport between Gaussians")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Entropic transport cost and its three-term breakdown
    Cost(CommonArgs),
    /// Optimal Gaussian coupling, Riccati solution and dual potentials
    Plan(CommonArgs),
    /// Lower bound on the entropic cost from first and second moments
    Bound(CommonArgs),
    /// Best entropic approximation of p and the minimal cost
    BestApprox(CommonArgs),
    /// Entropic barycenter of Gaussian components
    Barycenter(CommonArgs),
    /// Discretized Sinkhorn estimate of the cost between p and q
    Oracle(CommonArgs),
    /// CSV table of closed form vs oracle over a list of eps values
    Sweep(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long)]
    input: PathBuf,
    /// Overrides `epsilon` from the input file
    #[arg(long, allow_negative_numbers = true)]
    eps: Option<f64>,
    /// Comma-separated eps values for `sweep`
    #[arg(long, value_delimiter = ',')]
    eps_list: Option<Vec<f64>>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Grid points per axis for the oracle
    #[arg(long)]
    grid: Option<usize>,
    /// Grid half-width in standard deviations
    #[arg(long)]
    extent: Option<f64>,
    /// Reference variance for the relative-entropy regularizer
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Gaussian as it appears in problem files: mean plus row-major covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

impl GaussianSpec {
    pub fn from_gaussian(g: &Gaussian) -> Self {
        Self {
            mean: g.mean().iter().copied().collect(),
            cov: matrix_rows(g.cov().matrix()),
        }
    }

    pub fn to_gaussian(&self) -> Result<Gaussian, Error> {
        Gaussian::from_parts(&self.mean, &self.cov)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    pub points_per_axis: Option<usize>,
    pub extent_std: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub epsilon: Option<f64>,
    pub p: Option<GaussianSpec>,
    pub q: Option<GaussianSpec>,
    pub components: Option<Vec<GaussianSpec>>,
    pub weights: Option<Vec<f64>>,
    pub oracle: Option<OracleSpec>,
    pub lambda: Option<f64>,
    pub epsilons: Option<Vec<f64>>,
}

enum Shape<'a> {
    Pair(&'a GaussianSpec, &'a GaussianSpec),
    Barycenter(&'a [GaussianSpec], &'a [f64]),
}

impl ProblemFile {
    fn shape(&self) -> Result<Shape<'_>, CliError> {
        let pair = match (&self.p, &self.q) {
            (Some(p), Some(q)) => Some((p, q)),
            (None, None) => None,
            _ => return Err(CliError::Usage("pairwise problems need both `p` and `q`".into())),
        };
        let bary = match (&self.components, &self.weights) {
            (Some(c), Some(w)) => Some((c.as_slice(), w.as_slice())),
            (None, None) => None,
            _ => {
                return Err(CliError::Usage(
                    "barycenter problems need both `components` and `weights`".into(),
                ))
            }
        };
        match (pair, bary) {
            (Some((p, q)), None) => Ok(Shape::Pair(p, q)),
            (None, Some((c, w))) => Ok(Shape::Barycenter(c, w)),
            (Some(_), Some(_)) => Err(CliError::Usage(
                "file holds both a pairwise and a barycenter problem".into(),
            )),
            (None, None) => Err(CliError::Usage(
                "file holds neither a pairwise nor a barycenter problem".into(),
            )),
        }
    }

    fn pair(&self) -> Result<(Gaussian, Gaussian), CliError> {
        match self.shape()? {
            Shape::Pair(p, q) => Ok((p.to_gaussian()?, q.to_gaussian()?)),
            Shape::Barycenter(..) => Err(CliError::Usage(
                "this command needs a pairwise problem (`p`, `q`)".into(),
            )),
        }
    }
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Library(#[from] Error),
    #[error("{message}")]
    Numerical { message: String, output: String },
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Library(e) if e.is_validation() => EXIT_VALIDATION,
            CliError::Library(_) | CliError::Numerical { .. } => EXIT_NUMERICAL,
        }
    }
}

/// Result of one CLI invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    /// Result payload; empty when written to `--output` or on early failure.
    pub stdout: String,
    pub stderr: String,
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run_command<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            return if code == EXIT_OK {
                Outcome { code, stdout: text, stderr: String::new() }
            } else {
                Outcome { code, stdout: String::new(), stderr: text }
            };
        }
    };
    let common = match &cli.command {
        Command::Cost(a)
        | Command::Plan(a)
        | Command::Bound(a)
        | Command::BestApprox(a)
        | Command::Barycenter(a)
        | Command::Oracle(a)
        | Command::Sweep(a) => a,
    };
    let result = load(common).and_then(|file| dispatch(&cli.command, common, &file));
    let (code, payload, stderr) = match result {
        Ok(text) => (EXIT_OK, text, String::new()),
        Err(CliError::Numerical { message, output }) => (EXIT_NUMERICAL, output, message),
        Err(e) => (e.code(), String::new(), format!("error: {e}")),
    };
    if payload.is_empty() {
        return Outcome { code, stdout: String::new(), stderr };
    }
    match &common.output {
        Some(path) => match fs::write(path, &payload) {
            Ok(()) => Outcome { code, stdout: String::new(), stderr },
            Err(e) => Outcome {
                code: EXIT_USAGE,
                stdout: String::new(),
                stderr: format!("error: cannot write {}: {e}", path.display()),
            },
        },
        None => Outcome { code, stdout: payload, stderr },
    }
}

fn load(args: &CommonArgs) -> Result<ProblemFile, CliError> {
    let text = fs::read_to_string(&args.input)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.input.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("cannot parse {}: {e}", args.input.display())))
}

fn epsilon(args: &CommonArgs, file: &ProblemFile) -> Result<f64, CliError> {
    args.eps
        .or(file.epsilon)
        .ok_or_else(|| CliError::Usage("no epsilon given (file `epsilon` or --eps)".into()))
}

fn oracle_settings(args: &CommonArgs, file: &ProblemFile) -> OracleSettings {
    let spec = file.oracle.clone().unwrap_or_default();
    let defaults = OracleSettings::default();
    OracleSettings {
        points_per_axis: args.grid.or(spec.points_per_axis).unwrap_or(defaults.points_per_axis),
        extent_std: args.extent.or(spec.extent_std).unwrap_or(defaults.extent_std),
        tol: args.tol.unwrap_or(defaults.tol),
        max_iter: args.max_iter.unwrap_or(defaults.max_iter),
    }
}

fn dispatch(command: &Command, args: &CommonArgs, file: &ProblemFile) -> Result<String, CliError> {
    match command {
        Command::Cost(_) => {
            let (p, q) = file.pair()?;
            let eps = epsilon(args, file)?;
            let out = match args.lambda.or(file.lambda) {
                Some(lambda) => {
                    let c = cost::relative_entropic_cost(&p, &q, eps, ReferenceMeasure::new(lambda)?)?;
                    let mut v = breakdown_json(&c);
                    v["lambda"] = json!(lambda);
                    v
                }
                None => breakdown_json(&cost::entropic_cost(&p, &q, eps)?),
            };
            Ok(to_json(&out))
        }
        Command::Plan(_) => {
            let (p, q) = file.pair()?;
            let eps = epsilon(args, file)?;
            let plan = assemble_plan(&p, &q, eps)?;
            let out = json!({
                "epsilon": eps,
                "mean": vector(&plan.mean),
                "sigma_eps": matrix_rows(&plan.sigma_eps),
                "cross_covariance": matrix_rows(&plan.cross_covariance()),
                "x_eps": matrix_rows(plan.x_eps.matrix()),
                "riccati_residual": plan.riccati_residual,
                "log_det_sigma_eps": plan.log_det(),
                "f0": { "matrix": matrix_rows(&plan.f0.matrix), "constant": plan.f0.constant },
                "g0": { "matrix": matrix_rows(&plan.g0.matrix), "constant": plan.g0.constant },
            });
            Ok(to_json(&out))
        }
        Command::Bound(_) => {
            let (p, q) = file.pair()?;
            let eps = epsilon(args, file)?;
            let bound = cost::gelbrich_lower_bound(p.mean(), p.cov(), q.mean(), q.cov(), eps)?;
            Ok(to_json(&json!({ "epsilon": eps, "bound": bound })))
        }
        Command::BestApprox(_) => {
            let p = match file.shape()? {
                Shape::Pair(p, _) => p.to_gaussian()?,
                Shape::Barycenter(..) => {
                    return Err(CliError::Usage("best-approx needs `p`".into()))
                }
            };
            let eps = epsilon(args, file)?;
            let (best, value) = cost::best_approximation(&p, eps)?;
            Ok(to_json(&json!({
                "epsilon": eps,
                "gaussian": GaussianSpec::from_gaussian(&best),
                "value": value,
            })))
        }
        Command::Barycenter(_) => {
            let (specs, weights) = match file.shape()? {
                Shape::Barycenter(c, w) => (c, w),
                Shape::Pair(..) => {
                    return Err(CliError::Usage(
                        "barycenter needs `components` and `weights`".into(),
                    ))
                }
            };
            let eps = epsilon(args, file)?;
            let components = specs
                .iter()
                .map(GaussianSpec::to_gaussian)
                .collect::<Result<Vec<_>, _>>()?;
            let problem = BarycenterProblem::new(components, weights.to_vec(), eps)?;
            let sol = barycenter::solve_barycenter(
                &problem,
                args.tol.unwrap_or(barycenter::DEFAULT_TOL),
                args.max_iter.unwrap_or(barycenter::DEFAULT_MAX_ITER),
            )?;
            let text = to_json(&json!({
                "epsilon": eps,
                "barycenter": GaussianSpec::from_gaussian(&sol.barycenter),
                "residual": sol.residual,
                "iterations": sol.iterations,
                "converged": sol.converged,
            }));
            if !sol.converged {
                return Err(CliError::Numerical {
                    message: format!(
                        "error: barycenter iteration did not converge after {} iterations (residual {:e})",
                        sol.iterations, sol.residual
                    ),
                    output: text,
                });
            }
            Ok(text)
        }
        Command::Oracle(_) => {
            let (p, q) = file.pair()?;
            let eps = epsilon(args, file)?;
            let settings = oracle_settings(args, file);
            let res = sinkhorn::oracle_run(&p, &q, eps, &settings)?;
            let text = to_json(&json!({
                "epsilon": eps,
                "corrected_objective": res.corrected_objective,
                "discrete_objective": res.discrete_objective,
                "marginal_error": res.marginal_error,
                "iterations": res.iterations,
                "converged": res.converged,
                "points_per_axis": settings.points_per_axis,
                "extent_std": settings.extent_std,
            }));
            if !res.converged {
                return Err(CliError::Numerical {
                    message: format!(
                        "error: sinkhorn did not converge after {} iterations (marginal error {:e})",
                        res.iterations, res.marginal_error
                    ),
                    output: text,
                });
            }
            Ok(text)
        }
        Command::Sweep(_) => {
            let (p, q) = file.pair()?;
            let list = args
                .eps_list
                .clone()
                .or_else(|| file.epsilons.clone())
                .ok_or_else(|| CliError::Usage("sweep needs --eps-list or `epsilons`".into()))?;
            if list.is_empty() {
                return Err(CliError::Usage("empty eps list".into()));
            }
            sweep(&p, &q, &list, &oracle_settings(args, file))
        }
    }
}

struct SweepRow {
    eps: f64,
    closed_form: f64,
    oracle: f64,
}

fn sweep(p: &Gaussian, q: &Gaussian, list: &[f64], settings: &OracleSettings) -> Result<String, CliError> {
    let rows: Vec<Result<SweepRow, Error>> = std::thread::scope(|scope| {
        let handles: Vec<_> = list
            .iter()
            .map(|&eps| {
                scope.spawn(move || {
                    let closed_form = cost::entropic_cost(p, q, eps)?.total;
                    let res = sinkhorn::oracle_run(p, q, eps, settings)?;
                    if !res.converged {
                        return Err(Error::NotConverged {
                            what: "sinkhorn",
                            iterations: res.iterations,
                            residual: res.marginal_error,
                        });
                    }
                    Ok(SweepRow {
                        eps,
                        closed_form,
                        oracle: res.corrected_objective,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    let mut out = String::from("epsilon,closed_form,oracle,abs_gap\n");
    for row in rows {
        let row = row?;
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(row.eps),
            fmt_f64(row.closed_form),
            fmt_f64(row.oracle),
            fmt_f64((row.closed_form - row.oracle).abs())
        ));
    }
    Ok(out)
}

fn breakdown_json(c: &cost::CostBreakdown) -> Value {
    json!({
        "epsilon": c.eps,
        "total": c.total,
        "mean_term": c.mean_term,
        "transport_term": c.transport_term,
        "entropy_term": c.entropy_term,
    })
}

fn vector(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// 17 significant digits in scientific notation; re-parses to the identical `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

struct SigFigFormatter;

impl serde_json::ser::Formatter for SigFigFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            writer.write_all(fmt_f64(value).as_bytes())
        } else {
            writer.write_all(b"null")
        }
    }
}

fn to_json(value: &Value) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigFigFormatter);
    value.serialize(&mut ser).expect("serializing a JSON value cannot fail");
    let mut s = String::from_utf8(buf).expect("serde_json emits UTF-8");
    s.push('\n');
    s
}
