//! Command-line front end: fit transformation models from CSV data and
//! a model JSON, predict functionals on grids, sample, compute
//! simultaneous confidence bands, and run the built-in simulation
//! studies.
//!
//! Exit codes: 0 success, 1 usage or parse error, 2 numerical
//! non-convergence (the artifact is still written, flagged).

use clap::{Args, Parser, Subcommand};
use mlt_core::data::{CsvSchema, Dataset, ResponseSchema};
use mlt_core::inference::confidence_band_with_draws;
use mlt_core::models::{fit, FitArtifact, FitResult, ModelSpec};
use mlt_core::optim::OptimizerConfig;
use mlt_core::predict::{predict, sample, PredictWhat};
use mlt_core::sim::{cox_order_study, ph_generate, simmod_study, SIMMOD_TRUTH};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mlt", about = "Maximum likelihood for transformation models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to CSV data and write a fit artifact.
    Fit(FitArgs),
    /// Evaluate prediction functionals of a fitted model.
    Predict(PredictArgs),
    /// Draw responses from a fitted model.
    Sample(SampleArgs),
    /// Simultaneous confidence band for the transformation.
    Band(BandArgs),
    /// Run a built-in simulation study.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct SchemaArgs {
    /// Exact response column.
    #[arg(long)]
    response: Option<String>,
    /// Lower censoring-bound column (empty cells: unbounded).
    #[arg(long)]
    lower: Option<String>,
    /// Upper censoring-bound column.
    #[arg(long)]
    upper: Option<String>,
    /// Lower truncation-bound column.
    #[arg(long)]
    tlower: Option<String>,
    /// Upper truncation-bound column.
    #[arg(long)]
    tupper: Option<String>,
    /// Ordered factor levels for a categorical response.
    #[arg(long, value_delimiter = ',')]
    levels: Vec<String>,
    /// Covariate column names.
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,
}

impl SchemaArgs {
    fn schema(&self) -> Result<CsvSchema, String> {
        let response = if !self.levels.is_empty() {
            let column = self
                .response
                .clone()
                .ok_or("--levels requires --response")?;
            ResponseSchema::Factor {
                column,
                levels: self.levels.clone(),
            }
        } else if let (Some(lower), Some(upper)) = (self.lower.clone(), self.upper.clone()) {
            ResponseSchema::Bounds { lower, upper }
        } else if let Some(column) = self.response.clone() {
            ResponseSchema::Exact { column }
        } else {
            return Err("need --response or --lower/--upper".into());
        };
        let truncation = match (self.tlower.clone(), self.tupper.clone()) {
            (Some(l), Some(u)) => Some((l, u)),
            (None, None) => None,
            _ => return Err("--tlower and --tupper must be given together".into()),
        };
        Ok(CsvSchema {
            response,
            truncation,
            covariates: self.covariates.clone(),
        })
    }
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV.
    #[arg(long)]
    data: PathBuf,
    /// Model spec JSON.
    #[arg(long)]
    model: PathBuf,
    /// Output fit-artifact JSON.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    schema: SchemaArgs,
    /// Outer iteration cap.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Gradient (KKT stationarity) tolerance.
    #[arg(long)]
    gtol: Option<f64>,
}

#[derive(Args)]
struct PredictArgs {
    /// Fit artifact JSON from `mlt fit`.
    #[arg(long)]
    model: PathBuf,
    /// Output CSV (long format).
    #[arg(long)]
    out: PathBuf,
    /// Functional: trafo, distribution, density, quantile, hazard,
    /// cumhazard, odds.
    #[arg(long)]
    what: String,
    /// Response grid: comma list or lo:hi:n.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    /// Probabilities for --what quantile.
    #[arg(long, value_delimiter = ',')]
    p: Vec<f64>,
    /// Covariate row, comma separated; repeatable.
    #[arg(long, action = clap::ArgAction::Append, allow_hyphen_values = true)]
    x: Vec<String>,
    /// Optional newdata CSV providing covariate rows.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Covariate columns of the newdata CSV.
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,
}

#[derive(Args)]
struct SampleArgs {
    /// Fit artifact JSON.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Covariate row, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    /// Number of draws.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BandArgs {
    /// Fit artifact JSON.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Response grid: comma list or lo:hi:n.
    #[arg(long, allow_hyphen_values = true)]
    grid: String,
    /// Covariate row for the transformation rows.
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    /// Simultaneous coverage level.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo draws for the max-t multiplier.
    #[arg(long, default_value_t = 100_000)]
    draws: usize,
}

#[derive(Args)]
struct SimulateArgs {
    /// Study name: simmod or cox-order-m.
    #[arg(long)]
    study: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap help/version requests are success, not usage errors
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let code = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Band(a) => cmd_band(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match code {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn load_artifact(path: &PathBuf) -> Result<FitResult, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let artifact: FitArtifact =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    artifact.into_fit().map_err(|e| e.to_string())
}

fn parse_x(raw: &str) -> Result<Vec<f64>, String> {
    raw.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad covariate value {s:?}: {e}"))
        })
        .collect()
}

/// Comma list or `lo:hi:n` range.
fn parse_grid(raw: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = raw.split(':').collect();
    if parts.len() == 3 {
        let lo: f64 = parts[0].parse().map_err(|e| format!("grid lower: {e}"))?;
        let hi: f64 = parts[1].parse().map_err(|e| format!("grid upper: {e}"))?;
        let n: usize = parts[2].parse().map_err(|e| format!("grid count: {e}"))?;
        if n == 0 {
            return Err("grid count must be positive".into());
        }
        if n == 1 {
            return Ok(vec![lo]);
        }
        return Ok((0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect());
    }
    parse_x(raw)
}

fn covariate_rows(
    x: &[String],
    data: &Option<PathBuf>,
    covariates: &[String],
) -> Result<Vec<Vec<f64>>, String> {
    if let Some(path) = data {
        let mut reader = csv::ReaderBuilder::new()
            .from_path(path)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        let headers = reader
            .headers()
            .map_err(|e| e.to_string())?
            .clone();
        let idx: Vec<usize> = covariates
            .iter()
            .map(|c| {
                headers
                    .iter()
                    .position(|h| h == c)
                    .ok_or(format!("newdata is missing column {c:?}"))
            })
            .collect::<Result<_, _>>()?;
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| e.to_string())?;
            rows.push(
                idx.iter()
                    .map(|&i| {
                        rec[i]
                            .trim()
                            .parse::<f64>()
                            .map_err(|e| format!("newdata value {:?}: {e}", &rec[i]))
                    })
                    .collect::<Result<Vec<f64>, _>>()?,
            );
        }
        return Ok(rows);
    }
    if x.is_empty() {
        return Ok(vec![vec![]]);
    }
    x.iter().map(|r| parse_x(r)).collect()
}

fn family_name(spec: &ModelSpec) -> String {
    let v = serde_json::to_value(spec).expect("spec serializes");
    v.get("family")
        .and_then(|f| f.as_str())
        .unwrap_or("unknown")
        .to_string()
}

fn cmd_fit(args: FitArgs) -> Result<ExitCode, String> {
    let schema = args.schema.schema()?;
    let data =
        Dataset::load_csv(&args.data, &schema).map_err(|e| format!("{}: {e}", args.data.display()))?;
    let text = std::fs::read_to_string(&args.model)
        .map_err(|e| format!("{}: {e}", args.model.display()))?;
    let spec: ModelSpec =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", args.model.display()))?;
    let mut config = OptimizerConfig::default();
    if let Some(m) = args.max_iter {
        config.max_outer = m;
    }
    if let Some(g) = args.gtol {
        config.g_tol = g;
    }
    let result = fit(&spec, &data, &config).map_err(|e| e.to_string())?;
    let artifact = FitArtifact::from_fit(&result);
    let json = serde_json::to_string_pretty(&artifact).map_err(|e| e.to_string())?;
    std::fs::write(&args.out, json).map_err(|e| format!("{}: {e}", args.out.display()))?;

    println!("family      {}", family_name(&result.spec));
    println!("n           {}", result.n);
    println!("loglik      {:.6}", result.loglik);
    println!("converged   {}", result.converged);
    println!("kkt         {:.3e}", result.kkt_residual);
    let q = result.spec.shift_columns();
    if q > 0 {
        if let (betas, Some(ses)) = (
            result.shift_coefficients(),
            result.shift_standard_errors(),
        ) {
            println!("{:<12} {:>12} {:>12}", "coefficient", "estimate", "se");
            for (j, (b, s)) in betas.iter().zip(&ses).enumerate() {
                let name = data
                    .covariate_names
                    .get(data.covariate_names.len().saturating_sub(q) + j)
                    .cloned()
                    .unwrap_or_else(|| format!("beta{}", j + 1));
                println!("{name:<12} {b:>12.6} {s:>12.6}");
            }
        }
    }
    Ok(if result.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn parse_what(raw: &str, ps: &[f64]) -> Result<Vec<(String, PredictWhat)>, String> {
    match raw {
        "trafo" => Ok(vec![("trafo".into(), PredictWhat::Trafo)]),
        "distribution" => Ok(vec![("distribution".into(), PredictWhat::Distribution)]),
        "density" => Ok(vec![("density".into(), PredictWhat::Density)]),
        "hazard" => Ok(vec![("hazard".into(), PredictWhat::Hazard)]),
        "cumhazard" => Ok(vec![("cumhazard".into(), PredictWhat::CumHazard)]),
        "odds" => Ok(vec![("odds".into(), PredictWhat::Odds)]),
        "quantile" => {
            if ps.is_empty() {
                Err("--what quantile requires --p".into())
            } else {
                Ok(ps
                    .iter()
                    .map(|&p| ("quantile".to_string(), PredictWhat::Quantile(p)))
                    .collect())
            }
        }
        other => Err(format!("unknown functional {other:?}")),
    }
}

fn cmd_predict(args: PredictArgs) -> Result<ExitCode, String> {
    let result = load_artifact(&args.model)?;
    let whats = parse_what(&args.what, &args.p)?;
    let quantile_mode = args.what == "quantile";
    let ys = match (&args.grid, quantile_mode) {
        (_, true) => vec![0.0],
        (Some(g), false) => parse_grid(g)?,
        (None, false) => return Err("--grid required unless --what quantile".into()),
    };
    let rows = covariate_rows(&args.x, &args.data, &args.covariates)?;
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(&args.out).map_err(|e| format!("{}: {e}", args.out.display()))?,
    );
    let q = rows.first().map(|r| r.len()).unwrap_or(0);
    let mut header: Vec<String> = (1..=q).map(|i| format!("x{i}")).collect();
    header.push(if quantile_mode { "p".into() } else { "y".into() });
    header.push("value".into());
    writeln!(out, "{}", header.join(",")).map_err(|e| e.to_string())?;
    for x in &rows {
        for (label_idx, (_, what)) in whats.iter().enumerate() {
            for &y in &ys {
                let value = predict(&result.model, &result.theta, x, y, *what)
                    .map_err(|e| e.to_string())?;
                let mut fields: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
                if let PredictWhat::Quantile(p) = what {
                    fields.push(format!("{p}"));
                } else {
                    fields.push(format!("{y}"));
                }
                fields.push(format!("{value}"));
                let _ = label_idx;
                writeln!(out, "{}", fields.join(",")).map_err(|e| e.to_string())?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sample(args: SampleArgs) -> Result<ExitCode, String> {
    let result = load_artifact(&args.model)?;
    let x = match &args.x {
        Some(raw) => parse_x(raw)?,
        None => vec![],
    };
    let draws = sample(&result.model, &result.theta, &x, args.n, args.seed)
        .map_err(|e| e.to_string())?;
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(&args.out).map_err(|e| format!("{}: {e}", args.out.display()))?,
    );
    writeln!(out, "y").map_err(|e| e.to_string())?;
    for y in draws {
        writeln!(out, "{y}").map_err(|e| e.to_string())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_band(args: BandArgs) -> Result<ExitCode, String> {
    let result = load_artifact(&args.model)?;
    let ys = parse_grid(&args.grid)?;
    let x = match &args.x {
        Some(raw) => parse_x(raw)?,
        None => vec![],
    };
    let rows: Result<Vec<_>, _> = ys
        .iter()
        .map(|&y| result.model.basis.eval(y, &x, true))
        .collect();
    let rows = rows.map_err(|e| e.to_string())?;
    let band = confidence_band_with_draws(&result, &rows, args.level, args.seed, args.draws)
        .map_err(|e| e.to_string())?;
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(&args.out).map_err(|e| format!("{}: {e}", args.out.display()))?,
    );
    writeln!(out, "y,estimate,se,lower,upper,multiplier").map_err(|e| e.to_string())?;
    for (y, p) in ys.iter().zip(&band.points) {
        writeln!(
            out,
            "{y},{},{},{},{},{}",
            p.estimate, p.se, p.lower, p.upper, band.multiplier
        )
        .map_err(|e| e.to_string())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode, String> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(&args.out).map_err(|e| format!("{}: {e}", args.out.display()))?,
    );
    match args.study.as_str() {
        "simmod" => {
            let reps = simmod_study(args.n, args.reps, args.seed);
            let names: Vec<String> = (1..=SIMMOD_TRUTH.len())
                .map(|i| format!("theta{i}"))
                .collect();
            writeln!(
                out,
                "rep,converged,mad_min,mad_median,mad_max,{}",
                names.join(",")
            )
            .map_err(|e| e.to_string())?;
            let mut failures = 0usize;
            for (i, rep) in reps.iter().enumerate() {
                match rep {
                    Ok(r) => {
                        let thetas: Vec<String> =
                            r.theta.iter().map(|t| format!("{t}")).collect();
                        writeln!(
                            out,
                            "{i},{},{},{},{},{}",
                            r.converged,
                            r.mad.min,
                            r.mad.median,
                            r.mad.max,
                            thetas.join(",")
                        )
                        .map_err(|e| e.to_string())?;
                    }
                    Err(e) => {
                        failures += 1;
                        writeln!(out, "{i},failed:{e},,,,").map_err(|e| e.to_string())?;
                    }
                }
            }
            println!("simmod: {} reps, {failures} failures", args.reps);
        }
        "cox-order-m" => {
            let data = ph_generate(args.n, &[0.5], 6.0, args.seed);
            let mut orders: Vec<usize> = (1..=30).collect();
            orders.extend([35, 40, 45, 50]);
            let reps = cox_order_study(&data, &orders, 1);
            writeln!(out, "order,converged,beta,log_cumhazard_median")
                .map_err(|e| e.to_string())?;
            for rep in &reps {
                match rep {
                    Ok(r) => writeln!(
                        out,
                        "{},{},{},{}",
                        r.order, r.converged, r.beta[0], r.log_cumhazard_median
                    )
                    .map_err(|e| e.to_string())?,
                    Err(e) => writeln!(out, "failed:{e},,,").map_err(|e| e.to_string())?,
                }
            }
            println!("cox-order-m: {} orders", orders.len());
        }
        other => return Err(format!("unknown study {other:?}")),
    }
    Ok(ExitCode::SUCCESS)
}
