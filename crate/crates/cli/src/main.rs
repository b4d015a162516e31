//! `decilab`: generate instances, run the exact oracle and BP, inspect
//! structure, evaluate the phase diagram and run experiment specs.
//!
//! Exit codes: 0 on success, 2 on a bad spec or input, 3 when a resource
//! limit of the exact oracle is hit, 1 for anything else.

mod grid;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Parser, Subcommand, ValueEnum};
use decilab_core::bp::{bp_decimation, bp_marginals, compare_marginals, BpDecimation, MarginalComparison};
use decilab_core::dimacs::{emit_dimacs, emit_dimacs_with_sigma, parse_dimacs_with_sigma};
use decilab_core::generators::{decimate_under, generate, rng, GenConfig, GenError, ModelKind};
use decilab_core::harness::{self, ExperimentSpec, HarnessError};
use decilab_core::oracle::{
    count_solutions, distance_profile, enumerate_solutions, geometry_of, true_marginals, GeometryReport,
    OracleConfig, OracleError,
};
use decilab_core::phase::{phase_row, shatter_condensation_conditions, PhaseConfig, PhasePoint, PhaseRow, ShatterConditions};
use decilab_core::structure::{analyze, expansion_check, ExpansionReport, StructureReport};
use decilab_core::{ceil_ln, ceil_ln_ln, Assignment, Formula};
use serde::Serialize;

#[derive(Debug)]
enum Failure {
    Spec(anyhow::Error),
    Resource(anyhow::Error),
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Spec(_) => 2,
            Self::Resource(_) => 3,
            Self::Other(_) => 1,
        }
    }
}

fn spec_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Spec(e.into())
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::TooManyFreeVars { .. } | OracleError::TooManySolutions { .. } => Self::Resource(e.into()),
            _ => Self::Spec(e.into()),
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Spec(_) => Self::Spec(e.into()),
            HarnessError::ResourceLimit(_) => Self::Resource(e.into()),
            _ => Self::Other(e.into()),
        }
    }
}

impl From<GenError> for Failure {
    fn from(e: GenError) -> Self {
        Self::Spec(e.into())
    }
}

type Result<T> = std::result::Result<T, Failure>;

#[derive(Parser)]
#[command(name = "decilab", version, about = "Random k-SAT decimation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Uniform,
    Planted,
    PlantedBinomial,
}

impl From<Model> for ModelKind {
    fn from(m: Model) -> Self {
        match m {
            Model::Uniform => ModelKind::Uniform,
            Model::Planted => ModelKind::PlantedFixed,
            Model::PlantedBinomial => ModelKind::PlantedBinomial,
        }
    }
}

#[derive(clap::Args)]
struct OracleLimits {
    /// Largest number of free variables the exact oracle accepts.
    #[arg(long, default_value_t = OracleConfig::default().max_free_vars)]
    max_free_vars: usize,
    /// Largest number of solutions materialized.
    #[arg(long, default_value_t = OracleConfig::default().cap)]
    cap: usize,
}

impl OracleLimits {
    fn config(&self) -> OracleConfig {
        OracleConfig {
            max_free_vars: self.max_free_vars,
            cap: self.cap,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw a formula and write it as DIMACS.
    Gen {
        #[arg(long, value_enum)]
        model: Model,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        /// Number of clauses.
        #[arg(long, conflicts_with = "rho", required_unless_present = "rho")]
        m: Option<usize>,
        /// Rescaled density; `m = round(ρ 2^k n / k)`.
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Substitute the planted assignment into `x_1..x_t` before writing.
        #[arg(long)]
        decimate: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact counts, marginals, geometry and distance profiles.
    Oracle {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        marginals: bool,
        #[arg(long)]
        geometry: bool,
        /// Distance profile from this reference assignment (bitstring over `x_1..x_n`).
        #[arg(long)]
        profile_from: Option<String>,
        /// Pairs sampled for geometry once the solution set exceeds the cap.
        #[arg(long, default_value_t = 200)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        limits: OracleLimits,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// BP marginals after `ω` sweeps, optionally BP-guided decimation.
    Bp {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        omega: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        decimate: bool,
        /// Compare with the exact marginals.
        #[arg(long)]
        compare: bool,
        #[command(flatten)]
        limits: OracleLimits,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Structural classification of the variables under an assignment.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
        /// Satisfying assignment over `x_1..x_n`; defaults to the file's `c sigma` line.
        #[arg(long)]
        sigma: Option<String>,
        /// Enumerate solutions to get flip distances, looseness and rigidity.
        #[arg(long)]
        oracle: bool,
        /// ω for rigidity; defaults to `⌈ln n⌉ + 1`.
        #[arg(long)]
        omega: Option<usize>,
        /// χ for the expansion check.
        #[arg(long, default_value_t = 0.25)]
        chi: f64,
        #[command(flatten)]
        limits: OracleLimits,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Regime verdicts, moment constants and count bounds.
    Phase {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        /// Sweep, e.g. `rho=2:6:0.5,theta=0.1:1:0.1`.
        #[arg(long)]
        grid: Option<String>,
        /// Also evaluate the shattering and condensation conditions at `a = exp(2−ρ)`.
        #[arg(long)]
        conditions: bool,
        #[arg(long, default_value_t = PhaseConfig::default().k0)]
        k0: usize,
        #[arg(long, default_value_t = PhaseConfig::default().rho0)]
        rho0: f64,
        #[arg(long, default_value_t = PhaseConfig::default().c0)]
        c0: f64,
        #[arg(long, default_value_t = PhaseConfig::default().c)]
        c: f64,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run an experiment spec (JSON) and write its outputs.
    Experiment {
        #[arg(long)]
        spec: PathBuf,
        /// Also run the BP comparison and print it when no path is configured.
        #[arg(long)]
        bp: bool,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| spec_err(anyhow!("cannot read {}: {e}", path.display())))
}

fn load(path: &Path) -> Result<(Formula, Option<Assignment>)> {
    parse_dimacs_with_sigma(&read(path)?).map_err(|e| spec_err(anyhow!("{}: {e}", path.display())))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => harness::write_file(p, text).map_err(Failure::from),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Other(e.into()))?;
    text.push('\n');
    write_out(path, &text)
}

fn parse_sigma(bits: &str, n: usize) -> Result<Assignment> {
    Assignment::from_bitstring_n(bits, n).map_err(spec_err)
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen(
    model: Model,
    n: usize,
    k: usize,
    m: Option<usize>,
    rho: Option<f64>,
    seed: u64,
    t: Option<usize>,
    out: Option<&Path>,
) -> Result<()> {
    let m = m.unwrap_or_else(|| GenConfig::m_for_rho(n, k, rho.expect("clap requires m or rho")));
    let cfg = GenConfig::new(model.into(), n, k, m, seed);
    let (f, sigma) = generate(&cfg)?;
    let text = match (sigma, t) {
        (Some(s), Some(t)) => emit_dimacs_with_sigma(&decimate_under(&f, &s, t)?, &s),
        (Some(s), None) => emit_dimacs_with_sigma(&f, &s),
        (None, Some(_)) => return Err(spec_err(anyhow!("--decimate needs a planted model"))),
        (None, None) => emit_dimacs(&f),
    };
    write_out(out, &text)
}

#[derive(Serialize)]
struct MarginalEntry {
    var: u32,
    ones: u128,
    total: u128,
    value: f64,
}

#[derive(Serialize)]
struct OracleReport {
    n: usize,
    free_vars: usize,
    clauses: usize,
    count: u128,
    #[serde(skip_serializing_if = "Option::is_none")]
    marginals: Option<Vec<MarginalEntry>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    geometry: Option<GeometryReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    profile: Option<Vec<u128>>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_oracle(
    input: &Path,
    marginals: bool,
    geometry: bool,
    profile_from: Option<&str>,
    pairs: usize,
    seed: u64,
    oc: &OracleConfig,
    json: Option<&Path>,
) -> Result<()> {
    let (f, _) = load(input)?;
    let count = count_solutions(&f, oc)?;
    let mut report = OracleReport {
        n: f.n(),
        free_vars: f.num_free(),
        clauses: f.num_clauses(),
        count,
        marginals: None,
        geometry: None,
        profile: None,
    };
    if count > 0 {
        if marginals {
            let mv = true_marginals(&f, oc)?;
            report.marginals = Some(
                mv.vars
                    .iter()
                    .zip(&mv.ones)
                    .map(|(&var, &ones)| MarginalEntry {
                        var,
                        ones,
                        total: mv.total,
                        value: mv.get(var).unwrap(),
                    })
                    .collect(),
            );
        }
        if geometry {
            let mut r = rng::stream(seed, rng::PURPOSE_SAMPLING);
            report.geometry = Some(geometry_of(&f, oc, pairs, &mut r)?);
        }
        if let Some(bits) = profile_from {
            let sigma = parse_sigma(bits, f.n())?;
            let set = enumerate_solutions(&f, oc)?;
            report.profile = Some(distance_profile(&set, &sigma)?);
        }
    }
    write_json(json, &report)
}

#[derive(Serialize)]
struct BpReport {
    omega: usize,
    vars: Vec<u32>,
    marginals: Vec<f64>,
    zero_denominators: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<MarginalComparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    decimation: Option<BpDecimation>,
}

fn cmd_bp(
    input: &Path,
    omega: usize,
    seed: u64,
    decimate: bool,
    compare: bool,
    oc: &OracleConfig,
    json: Option<&Path>,
) -> Result<()> {
    let (f, _) = load(input)?;
    let r = bp_marginals(&f, omega);
    let comparison = if compare { Some(compare_marginals(&f, omega, oc)?) } else { None };
    let decimation = decimate.then(|| bp_decimation(&f, omega, &mut rng::stream(seed, rng::PURPOSE_BP)));
    write_json(
        json,
        &BpReport {
            omega,
            vars: r.vars,
            marginals: r.marginals,
            zero_denominators: r.zero_denominators,
            comparison,
            decimation,
        },
    )
}

#[derive(Serialize)]
struct Thresholds {
    /// `⌈ln n⌉`: loose flips, tame balls, Q0 degrees.
    ln_n: usize,
    /// `⌈ln ln n⌉`: Q0 redundant clauses.
    ln_ln_n: usize,
    rigid_omega: usize,
    chi: f64,
}

#[derive(Serialize)]
struct AnalyzeReport {
    thresholds: Thresholds,
    expansion: ExpansionReport,
    structure: StructureReport,
}

#[allow(clippy::too_many_arguments)]
fn cmd_analyze(
    input: &Path,
    sigma: Option<&str>,
    oracle: bool,
    omega: Option<usize>,
    chi: f64,
    oc: &OracleConfig,
    json: Option<&Path>,
) -> Result<()> {
    let (f, file_sigma) = load(input)?;
    let sigma = match sigma {
        Some(bits) => parse_sigma(bits, f.n())?,
        None => file_sigma.ok_or_else(|| spec_err(anyhow!("no --sigma given and no sigma line in the input")))?,
    };
    let n = f.n();
    let thresholds = Thresholds {
        ln_n: ceil_ln(n),
        ln_ln_n: ceil_ln_ln(n),
        rigid_omega: omega.unwrap_or(ceil_ln(n) + 1),
        chi,
    };
    eprintln!(
        "thresholds: n = {n}, ceil(ln n) = {}, ceil(ln ln n) = {}, rigid omega = {}, chi = {chi} (q_max = {})",
        thresholds.ln_n,
        thresholds.ln_ln_n,
        thresholds.rigid_omega,
        (chi * n as f64 + 1e-9).floor()
    );
    let set = if oracle { Some(enumerate_solutions(&f, oc)?) } else { None };
    let structure =
        analyze(&f, &sigma, set.as_ref(), thresholds.rigid_omega).map_err(|e| spec_err(anyhow!("{e}")))?;
    let expansion = expansion_check(&f, chi);
    write_json(
        json,
        &AnalyzeReport {
            thresholds,
            expansion,
            structure,
        },
    )
}

#[derive(Serialize)]
struct PhaseReport {
    #[serde(flatten)]
    row: PhaseRow,
    #[serde(skip_serializing_if = "Option::is_none")]
    conditions: Option<ShatterConditions>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_phase(
    k: usize,
    rho: Option<f64>,
    theta: Option<f64>,
    grid_arg: Option<&str>,
    conditions: bool,
    cfg: PhaseConfig,
    csv: Option<&Path>,
    json: Option<&Path>,
) -> Result<()> {
    let axes = match grid_arg {
        Some(g) => grid::parse(g).map_err(Failure::Spec)?,
        None => grid::Axes::default(),
    };
    let rhos = axes.rho.or(rho.map(|r| vec![r])).ok_or_else(|| spec_err(anyhow!("give --rho or a rho grid")))?;
    let thetas =
        axes.theta.or(theta.map(|t| vec![t])).ok_or_else(|| spec_err(anyhow!("give --theta or a theta grid")))?;
    let mut reports = Vec::new();
    for &r in &rhos {
        for &t in &thetas {
            let point = PhasePoint::new(k, r, t).map_err(spec_err)?;
            let row = phase_row(&point, &cfg);
            let conditions = if conditions {
                Some(shatter_condensation_conditions(k, r, t.max(f64::MIN_POSITIVE), (2.0 - r).exp()).map_err(spec_err)?)
            } else {
                None
            };
            reports.push(PhaseReport { row, conditions });
        }
    }
    for w in reports.first().map(|r| r.row.verdict.warnings.clone()).unwrap_or_default() {
        eprintln!("warning: {w}");
    }
    let single = grid_arg.is_none();
    if let Some(p) = csv {
        write_out(Some(p), &grid::to_csv(&reports.iter().map(|r| &r.row).collect::<Vec<_>>())?)?;
    }
    if json.is_some() || (csv.is_none() && single) {
        if single {
            write_json(json, &reports[0])?;
        } else {
            write_json(json, &reports)?;
        }
    } else if csv.is_none() {
        write_out(None, &grid::to_csv(&reports.iter().map(|r| &r.row).collect::<Vec<_>>())?)?;
    }
    Ok(())
}

fn cmd_experiment(spec_path: &Path, bp: bool) -> Result<()> {
    let spec = ExperimentSpec::from_json(&read(spec_path)?)?;
    let o = &spec.outputs;
    let wants_files = o.jsonl.is_some() || o.csv.is_some() || o.bp_jsonl.is_some() || o.bp_csv.is_some();
    if wants_files {
        let summary = harness::run_spec(&spec)?;
        eprintln!(
            "config {}: {} records ({} with errors), {} BP records",
            summary.config_hash, summary.records, summary.failed_records, summary.bp_records
        );
        for f in &summary.files {
            eprintln!("wrote {}", f.display());
        }
    } else {
        let records = harness::run_decimation_experiment(&spec)?;
        write_out(None, &harness::to_jsonl(&records)?)?;
    }
    if bp && o.bp_jsonl.is_none() && o.bp_csv.is_none() {
        let records = harness::run_bp_comparison(&spec)?;
        write_out(None, &harness::to_jsonl(&records)?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            model,
            n,
            k,
            m,
            rho,
            seed,
            decimate,
            out,
        } => cmd_gen(model, n, k, m, rho, seed, decimate, out.as_deref()),
        Command::Oracle {
            input,
            marginals,
            geometry,
            profile_from,
            pairs,
            seed,
            limits,
            json,
        } => cmd_oracle(
            &input,
            marginals,
            geometry,
            profile_from.as_deref(),
            pairs,
            seed,
            &limits.config(),
            json.as_deref(),
        ),
        Command::Bp {
            input,
            omega,
            seed,
            decimate,
            compare,
            limits,
            json,
        } => cmd_bp(&input, omega, seed, decimate, compare, &limits.config(), json.as_deref()),
        Command::Analyze {
            input,
            sigma,
            oracle,
            omega,
            chi,
            limits,
            json,
        } => cmd_analyze(&input, sigma.as_deref(), oracle, omega, chi, &limits.config(), json.as_deref()),
        Command::Phase {
            k,
            rho,
            theta,
            grid,
            conditions,
            k0,
            rho0,
            c0,
            c,
            csv,
            json,
        } => cmd_phase(
            k,
            rho,
            theta,
            grid.as_deref(),
            conditions,
            PhaseConfig { k0, rho0, c0, c },
            csv.as_deref(),
            json.as_deref(),
        ),
        Command::Experiment { spec, bp } => cmd_experiment(&spec, bp),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = f.code();
            let (Failure::Spec(e) | Failure::Resource(e) | Failure::Other(e)) = f;
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
