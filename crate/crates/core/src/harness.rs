//! Experiment orchestration and reproducible output.
//!
//! An [`ExperimentSpec`] names a model, a decimation schedule and the
//! analyses to run. Each repetition draws its own instance from independent
//! random streams, so repetitions run in parallel and the output only depends
//! on the spec. Records are emitted ordered by `(repetition, t)`.
//!
//! Modes:
//! * `U`: `Σ` uniform from `S(Φ)` (exact sampling), then `Φ_t` by substituting `Σ`.
//! * `D`: `Σ` from the decimation process on `Φ` run to completion, then truncated at `t`.
//! * `P`: `Σ` is the planted assignment of a planted model.
//!
//! Output schema version [`SCHEMA_VERSION`]: JSON lines and CSV share the
//! flat record layout; CSV columns follow the struct field order.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::assignment::Assignment;
use crate::bp::{bp_decimation, compare_marginals, in_bp_band, in_extreme_band};
use crate::formula::Formula;
use crate::generators::{decimate_under, generate_with, rng, GenConfig, GenError, ModelKind};
use crate::oracle::{
    count_solutions, decimation_process, enumerate_solutions, geometry_of, true_marginals,
    uniform_solution_sample, OracleConfig, OracleError,
};
use crate::phase::{classify_regime, PhaseConfig, PhasePoint};
use crate::structure::analyze;

pub const SCHEMA_VERSION: u32 = 1;

/// Attempts at drawing a satisfiable instance in `U`/`D` mode.
pub const MAX_GENERATION_ATTEMPTS: usize = 1000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error("resource limit: {0}")]
    ResourceLimit(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    U,
    D,
    P,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Analysis {
    /// Exact marginals and band counts.
    Marginals,
    /// BP marginals against exact marginals.
    Bp,
    /// A BP-guided decimation run on `Φ_t`.
    BpDecimation,
    /// Support, looseness, rigidity, self-contained sets, Q0.
    Structure,
    /// Average distance and diameter.
    Geometry,
    /// Solution count.
    Count,
    /// Regime label of `(k, ρ, θ)`.
    Regime,
}

impl Analysis {
    fn needs_oracle(self) -> bool {
        matches!(self, Self::Marginals | Self::Bp | Self::Geometry | Self::Count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub n: usize,
    pub k: usize,
    /// Clause count; alternatively give `rho` and `m = round(ρ 2^k n / k)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

impl ModelSpec {
    pub fn m(&self) -> Result<usize, HarnessError> {
        match (self.m, self.rho) {
            (Some(m), None) => Ok(m),
            (None, Some(rho)) => Ok(GenConfig::m_for_rho(self.n, self.k, rho)),
            _ => Err(HarnessError::Spec("model needs exactly one of m and rho".into())),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jsonl: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bp_jsonl: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bp_csv: Option<PathBuf>,
}

fn default_pairs() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub model: ModelSpec,
    pub mode: Mode,
    /// Decimation fractions `t/n`, sorted, in `[0, 1]`.
    pub t_schedule: Vec<f64>,
    pub omega: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub analyses: Vec<Analysis>,
    /// ω used for the rigidity fraction; defaults to `⌈ln n⌉ + 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rigid_radius: Option<usize>,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub phase: PhaseConfig,
    /// Sampled pairs when the solution set exceeds the materialization cap.
    #[serde(default = "default_pairs")]
    pub geometry_pairs: usize,
    #[serde(default)]
    pub outputs: Outputs,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Spec(e.to_string()))
    }

    pub fn gen_config(&self, seed: u64) -> Result<GenConfig, HarnessError> {
        Ok(GenConfig::new(self.model.kind, self.model.n, self.model.k, self.model.m()?, seed))
    }

    /// Decimation times `t = round(f·n)`.
    pub fn times(&self) -> Vec<usize> {
        self.t_schedule
            .iter()
            .map(|f| (f * self.model.n as f64).round() as usize)
            .collect()
    }

    pub fn rigid_omega(&self) -> usize {
        self.rigid_radius.unwrap_or(crate::ceil_ln(self.model.n) + 1)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let spec = |s: String| Err(HarnessError::Spec(s));
        let m = self.model.m()?;
        GenConfig::new(self.model.kind, self.model.n, self.model.k, m, 0)
            .validate()
            .map_err(|e| HarnessError::Spec(e.to_string()))?;
        if self.repetitions == 0 {
            return spec("repetitions must be at least 1".into());
        }
        if self.t_schedule.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return spec("t_schedule entries must lie in [0, 1]".into());
        }
        if self.t_schedule.windows(2).any(|w| w[0] > w[1]) {
            return spec("t_schedule must be sorted".into());
        }
        if self.mode == Mode::P && !self.model.kind.is_planted() {
            return spec("mode P needs a planted model".into());
        }
        if self.oracle.max_free_vars > 64 {
            return spec("oracle.max_free_vars is at most 64".into());
        }
        let n = self.model.n;
        let limit = self.oracle.max_free_vars;
        if matches!(self.mode, Mode::U | Mode::D) && n > limit {
            return Err(HarnessError::ResourceLimit(format!(
                "mode {:?} samples exactly from S(Phi); n = {n} exceeds the oracle limit {limit}",
                self.mode
            )));
        }
        if let Some(&t_min) = self.times().first() {
            if self.analyses.iter().any(|a| a.needs_oracle()) && n - t_min.min(n) > limit {
                return Err(HarnessError::ResourceLimit(format!(
                    "exact analyses at t = {t_min} need {} free variables, above the oracle limit {limit}",
                    n - t_min
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of the spec without output paths.
    pub fn config_hash(&self) -> String {
        let mut s = self.clone();
        s.outputs = Outputs::default();
        let json = serde_json::to_string(&s).expect("spec serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    fn wants(&self, a: Analysis) -> bool {
        self.analyses.contains(&a)
    }
}

/// One row per `(repetition, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub repetition: usize,
    pub model: String,
    pub mode: String,
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub rho: f64,
    pub t: usize,
    pub theta: f64,
    pub free_vars: usize,
    pub clauses: usize,
    pub generation_attempts: usize,
    pub error: Option<String>,
    pub solution_count: Option<u128>,
    pub log_count_per_n: Option<f64>,
    /// Exact marginals in `[0.01, 0.99]`.
    pub central_band: Option<usize>,
    /// Exact marginals within `2^{-k/2}` of 0 or 1.
    pub extreme_band: Option<usize>,
    pub frozen: Option<usize>,
    /// BP marginals in `[0.49, 0.51]`.
    pub bp_band: Option<usize>,
    /// Variables in both the BP band and the extreme band.
    pub bp_mismatch: Option<usize>,
    pub bp_max_discrepancy: Option<f64>,
    pub bp_mean_discrepancy: Option<f64>,
    pub bp_zero_denominators: Option<usize>,
    pub bp_decimation_success: Option<bool>,
    pub bp_decimation_failure_t: Option<u32>,
    pub forced_fraction: Option<f64>,
    pub one_loose_fraction: Option<f64>,
    pub two_loose_fraction: Option<f64>,
    pub tame_fraction: Option<f64>,
    pub self_contained_fraction: Option<f64>,
    pub loose_fraction: Option<f64>,
    pub rigid_fraction: Option<f64>,
    pub mean_support: Option<f64>,
    pub q0_pass: Option<bool>,
    pub average_distance: Option<f64>,
    pub average_distance_std_error: Option<f64>,
    /// `0.49·θn`.
    pub average_distance_threshold: Option<f64>,
    pub diameter: Option<usize>,
    /// `exp(2−ρ)·n/k`.
    pub condensation_radius: Option<f64>,
    pub condensed: Option<bool>,
    pub geometry_exact: Option<bool>,
    pub regime: Option<String>,
}

/// Per-`t` comparison of BP and exact marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpComparisonRecord {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub repetition: usize,
    pub model: String,
    pub mode: String,
    pub t: usize,
    pub theta: f64,
    pub omega: usize,
    pub free_vars: usize,
    pub error: Option<String>,
    pub max_discrepancy: Option<f64>,
    pub mean_discrepancy: Option<f64>,
    pub bp_band: Option<usize>,
    pub extreme_band: Option<usize>,
    pub mismatch: Option<usize>,
    /// `mismatch / free_vars`.
    pub mismatch_fraction: Option<f64>,
    /// Mismatches among variables in unit clauses.
    pub forced_mismatch: Option<usize>,
    pub zero_denominators: Option<usize>,
}

/// `Φ`, `Σ` and the number of generator attempts used.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub formula: Formula,
    pub sigma: Assignment,
    pub attempts: usize,
}

/// The instance of repetition `rep`, as used by every analysis of that repetition.
pub fn draw_instance(spec: &ExperimentSpec, rep: usize) -> Result<Instance, String> {
    let cfg = spec.gen_config(spec.seed).map_err(|e| e.to_string())?;
    let mut gen_rng = rng::substream(spec.seed, rep as u64, rng::PURPOSE_GENERATE);
    let mut sol_rng = rng::substream(spec.seed, rep as u64, rng::PURPOSE_SOLUTION);
    for attempt in 1..=MAX_GENERATION_ATTEMPTS {
        let (formula, planted) = generate_with(&cfg, &mut gen_rng).map_err(|e: GenError| e.to_string())?;
        let sigma = match spec.mode {
            Mode::P => planted.expect("planted model"),
            Mode::U => match uniform_solution_sample(&formula, &spec.oracle, &mut sol_rng) {
                Ok(s) => s,
                Err(OracleError::Unsatisfiable) => continue,
                Err(e) => return Err(e.to_string()),
            },
            Mode::D => match decimation_process(&formula, &spec.oracle, &mut sol_rng) {
                Ok(run) => run.sigma,
                Err(OracleError::Unsatisfiable) => continue,
                Err(e) => return Err(e.to_string()),
            },
        };
        return Ok(Instance {
            formula,
            sigma,
            attempts: attempt,
        });
    }
    Err(format!("no satisfiable instance in {MAX_GENERATION_ATTEMPTS} attempts"))
}

/// `Φ_t` for every scheduled `t`.
pub fn decimated_formulas(formula: &Formula, sigma: &Assignment, times: &[usize]) -> Vec<Formula> {
    times
        .iter()
        .map(|&t| decimate_under(formula, sigma, t).expect("sigma satisfies the formula"))
        .collect()
}

fn empty_record(spec: &ExperimentSpec, hash: &str, rep: usize, t: usize) -> ExperimentRecord {
    let n = spec.model.n;
    let m = spec.model.m().unwrap_or(0);
    ExperimentRecord {
        schema_version: SCHEMA_VERSION,
        config_hash: hash.to_string(),
        seed: spec.seed,
        repetition: rep,
        model: spec.model.kind.name().to_string(),
        mode: format!("{:?}", spec.mode),
        n,
        k: spec.model.k,
        m,
        rho: crate::phase::rho_from_r(spec.model.k, m as f64 / n as f64),
        t,
        theta: 1.0 - t as f64 / n as f64,
        free_vars: n - t.min(n),
        clauses: 0,
        generation_attempts: 0,
        error: None,
        solution_count: None,
        log_count_per_n: None,
        central_band: None,
        extreme_band: None,
        frozen: None,
        bp_band: None,
        bp_mismatch: None,
        bp_max_discrepancy: None,
        bp_mean_discrepancy: None,
        bp_zero_denominators: None,
        bp_decimation_success: None,
        bp_decimation_failure_t: None,
        forced_fraction: None,
        one_loose_fraction: None,
        two_loose_fraction: None,
        tame_fraction: None,
        self_contained_fraction: None,
        loose_fraction: None,
        rigid_fraction: None,
        mean_support: None,
        q0_pass: None,
        average_distance: None,
        average_distance_std_error: None,
        average_distance_threshold: None,
        diameter: None,
        condensation_radius: None,
        condensed: None,
        geometry_exact: None,
        regime: None,
    }
}

fn note_error(rec: &mut ExperimentRecord, e: impl std::fmt::Display) {
    let msg = e.to_string();
    rec.error = Some(match rec.error.take() {
        Some(prev) => format!("{prev}; {msg}"),
        None => msg,
    });
}

fn analyse(
    spec: &ExperimentSpec,
    inst: &Instance,
    ft: &Formula,
    rec: &mut ExperimentRecord,
    bp_rng: &mut rand_chacha::ChaCha20Rng,
    geo_rng: &mut rand_chacha::ChaCha20Rng,
) {
    let oc = &spec.oracle;
    let k = spec.model.k;
    rec.clauses = ft.num_clauses();
    rec.generation_attempts = inst.attempts;
    let oracle_ok = ft.num_free() <= oc.max_free_vars.min(64);
    if spec.wants(Analysis::Count) || spec.wants(Analysis::Marginals) {
        match count_solutions(ft, oc) {
            Ok(c) => {
                rec.solution_count = Some(c);
                rec.log_count_per_n = Some((c as f64).ln() / spec.model.n as f64);
            }
            Err(e) => note_error(rec, e),
        }
    }
    if spec.wants(Analysis::Marginals) {
        match true_marginals(ft, oc) {
            Ok(mv) => {
                let vals = mv.values();
                rec.central_band = Some(vals.iter().filter(|&&m| (0.01..=0.99).contains(&m)).count());
                rec.extreme_band = Some(vals.iter().filter(|&&m| in_extreme_band(m, k)).count());
                rec.frozen = Some(mv.vars.iter().filter(|&&v| mv.is_frozen(v)).count());
            }
            Err(e) => note_error(rec, e),
        }
    }
    if spec.wants(Analysis::Bp) {
        match compare_marginals(ft, spec.omega, oc) {
            Ok(c) => {
                rec.bp_band = Some(c.bp_band);
                rec.bp_mismatch = Some(c.mismatch);
                rec.bp_max_discrepancy = Some(c.max_discrepancy);
                rec.bp_mean_discrepancy = Some(c.mean_discrepancy);
                rec.bp_zero_denominators = Some(c.zero_denominators);
            }
            Err(e) => note_error(rec, e),
        }
    }
    if spec.wants(Analysis::BpDecimation) {
        let d = bp_decimation(ft, spec.omega, bp_rng);
        rec.bp_decimation_success = Some(d.succeeded());
        if let crate::bp::BpOutcome::Failure { t } = d.outcome {
            rec.bp_decimation_failure_t = Some(t);
        }
    }
    if spec.wants(Analysis::Structure) {
        let set = if oracle_ok {
            match count_solutions(ft, oc) {
                Ok(c) if c <= oc.cap as u128 => enumerate_solutions(ft, oc).ok(),
                _ => None,
            }
        } else {
            None
        };
        match analyze(ft, &inst.sigma, set.as_ref(), spec.rigid_omega()) {
            Ok(r) => {
                let s = r.summary;
                rec.forced_fraction = Some(s.forced_fraction);
                rec.one_loose_fraction = Some(s.one_loose_fraction);
                rec.two_loose_fraction = Some(s.two_loose_fraction);
                rec.tame_fraction = Some(s.tame_fraction);
                rec.self_contained_fraction = Some(s.self_contained_fraction);
                rec.loose_fraction = s.loose_fraction;
                rec.rigid_fraction = s.rigid_fraction;
                rec.mean_support = Some(s.mean_support);
                rec.q0_pass = Some(r.q0.passes);
            }
            Err(e) => note_error(rec, e),
        }
    }
    if spec.wants(Analysis::Geometry) {
        match geometry_of(ft, oc, spec.geometry_pairs, geo_rng) {
            Ok(g) => {
                let radius = (2.0 - rec.rho).exp() * spec.model.n as f64 / k as f64;
                rec.average_distance = Some(g.average_distance);
                rec.average_distance_std_error = Some(g.average_std_error);
                rec.average_distance_threshold = Some(0.49 * rec.free_vars as f64);
                rec.diameter = Some(g.diameter);
                rec.condensation_radius = Some(radius);
                rec.condensed = Some(g.diameter as f64 <= radius);
                rec.geometry_exact = Some(g.exact);
            }
            Err(e) => note_error(rec, e),
        }
    }
    if spec.wants(Analysis::Regime) {
        match PhasePoint::new(k, rec.rho, rec.theta) {
            Ok(p) => {
                let v = classify_regime(&p, &spec.phase);
                rec.regime = Some(v.labels.iter().map(|l| l.name()).collect::<Vec<_>>().join("|"));
            }
            Err(e) => note_error(rec, e),
        }
    }
}

fn repetition_records(spec: &ExperimentSpec, hash: &str, rep: usize) -> Vec<ExperimentRecord> {
    let times = spec.times();
    let inst = match draw_instance(spec, rep) {
        Ok(i) => i,
        Err(e) => {
            return times
                .iter()
                .map(|&t| {
                    let mut r = empty_record(spec, hash, rep, t);
                    note_error(&mut r, &e);
                    r
                })
                .collect()
        }
    };
    let mut bp_rng = rng::substream(spec.seed, rep as u64, rng::PURPOSE_BP);
    let mut geo_rng = rng::substream(spec.seed, rep as u64, rng::PURPOSE_SAMPLING);
    let formulas = decimated_formulas(&inst.formula, &inst.sigma, &times);
    times
        .iter()
        .zip(&formulas)
        .map(|(&t, ft)| {
            let mut rec = empty_record(spec, hash, rep, t);
            analyse(spec, &inst, ft, &mut rec, &mut bp_rng, &mut geo_rng);
            rec
        })
        .collect()
}

/// Run every repetition (in parallel) and return records ordered by `(repetition, t)`.
pub fn run_decimation_experiment(spec: &ExperimentSpec) -> Result<Vec<ExperimentRecord>, HarnessError> {
    spec.validate()?;
    let hash = spec.config_hash();
    let per_rep: Vec<Vec<ExperimentRecord>> = (0..spec.repetitions)
        .into_par_iter()
        .map(|rep| repetition_records(spec, &hash, rep))
        .collect();
    Ok(per_rep.into_iter().flatten().collect())
}

fn bp_record(spec: &ExperimentSpec, hash: &str, rep: usize, t: usize, ft: Option<&Formula>, err: Option<String>) -> BpComparisonRecord {
    let n = spec.model.n;
    let mut rec = BpComparisonRecord {
        schema_version: SCHEMA_VERSION,
        config_hash: hash.to_string(),
        seed: spec.seed,
        repetition: rep,
        model: spec.model.kind.name().to_string(),
        mode: format!("{:?}", spec.mode),
        t,
        theta: 1.0 - t as f64 / n as f64,
        omega: spec.omega,
        free_vars: n - t.min(n),
        error: err,
        max_discrepancy: None,
        mean_discrepancy: None,
        bp_band: None,
        extreme_band: None,
        mismatch: None,
        mismatch_fraction: None,
        forced_mismatch: None,
        zero_denominators: None,
    };
    let Some(ft) = ft else { return rec };
    match compare_marginals(ft, spec.omega, &spec.oracle) {
        Ok(c) => {
            let forced = crate::structure::classify_forced(ft);
            let forced_mismatch = c
                .vars
                .iter()
                .enumerate()
                .filter(|(i, v)| {
                    forced.binary_search(v).is_ok()
                        && in_bp_band(c.bp[*i])
                        && in_extreme_band(c.exact[*i], ft.k())
                })
                .count();
            rec.max_discrepancy = Some(c.max_discrepancy);
            rec.mean_discrepancy = Some(c.mean_discrepancy);
            rec.bp_band = Some(c.bp_band);
            rec.extreme_band = Some(c.extreme_band);
            rec.mismatch = Some(c.mismatch);
            rec.mismatch_fraction = Some(if c.vars.is_empty() {
                0.0
            } else {
                c.mismatch as f64 / c.vars.len() as f64
            });
            rec.forced_mismatch = Some(forced_mismatch);
            rec.zero_denominators = Some(c.zero_denominators);
        }
        Err(e) => rec.error = Some(e.to_string()),
    }
    rec
}

/// Discrepancy between BP and exact marginals along the schedule.
pub fn run_bp_comparison(spec: &ExperimentSpec) -> Result<Vec<BpComparisonRecord>, HarnessError> {
    spec.validate()?;
    let times = spec.times();
    let n = spec.model.n;
    if let Some(&t0) = times.first() {
        if n - t0.min(n) > spec.oracle.max_free_vars {
            return Err(HarnessError::ResourceLimit(format!(
                "BP comparison at t = {t0} needs {} free variables, above the oracle limit {}",
                n - t0,
                spec.oracle.max_free_vars
            )));
        }
    }
    let hash = spec.config_hash();
    let per_rep: Vec<Vec<BpComparisonRecord>> = (0..spec.repetitions)
        .into_par_iter()
        .map(|rep| match draw_instance(spec, rep) {
            Ok(inst) => {
                let fs = decimated_formulas(&inst.formula, &inst.sigma, &times);
                times
                    .iter()
                    .zip(&fs)
                    .map(|(&t, ft)| bp_record(spec, &hash, rep, t, Some(ft), None))
                    .collect()
            }
            Err(e) => times
                .iter()
                .map(|&t| bp_record(spec, &hash, rep, t, None, Some(e.clone())))
                .collect(),
        })
        .collect();
    Ok(per_rep.into_iter().flatten().collect())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> Result<String, HarnessError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn from_jsonl<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, HarnessError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(HarnessError::from))
        .collect()
}

pub fn to_csv<T: Serialize>(records: &[T]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(contents.as_bytes()).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub records: usize,
    pub bp_records: usize,
    pub failed_records: usize,
    pub files: Vec<PathBuf>,
}

/// Run the experiment and write every requested output. The BP comparison
/// runs when its outputs are requested.
pub fn run_spec(spec: &ExperimentSpec) -> Result<RunSummary, HarnessError> {
    let records = run_decimation_experiment(spec)?;
    let mut files = Vec::new();
    if let Some(p) = &spec.outputs.jsonl {
        write_file(p, &to_jsonl(&records)?)?;
        files.push(p.clone());
    }
    if let Some(p) = &spec.outputs.csv {
        write_file(p, &to_csv(&records)?)?;
        files.push(p.clone());
    }
    let mut bp_records = 0;
    if spec.outputs.bp_jsonl.is_some() || spec.outputs.bp_csv.is_some() {
        let bp = run_bp_comparison(spec)?;
        bp_records = bp.len();
        if let Some(p) = &spec.outputs.bp_jsonl {
            write_file(p, &to_jsonl(&bp)?)?;
            files.push(p.clone());
        }
        if let Some(p) = &spec.outputs.bp_csv {
            write_file(p, &to_csv(&bp)?)?;
            files.push(p.clone());
        }
    }
    Ok(RunSummary {
        config_hash: spec.config_hash(),
        failed_records: records.iter().filter(|r| r.error.is_some()).count(),
        records: records.len(),
        bp_records,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ExperimentSpec {
        ExperimentSpec::from_json(
            r#"{
                "model": {"kind": "planted-fixed", "n": 12, "k": 3, "m": 30},
                "mode": "P",
                "t_schedule": [0.0, 0.5, 1.0],
                "omega": 2,
                "repetitions": 3,
                "seed": 11,
                "analyses": ["count", "marginals", "bp", "structure", "geometry", "regime", "bp-decimation"]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn records_are_ordered_and_reproducible() {
        let s = spec();
        let a = run_decimation_experiment(&s).unwrap();
        let b = run_decimation_experiment(&s).unwrap();
        assert_eq!(a.len(), 9);
        assert_eq!(to_jsonl(&a).unwrap(), to_jsonl(&b).unwrap());
        assert_eq!(to_csv(&a).unwrap(), to_csv(&b).unwrap());
        let keys: Vec<(usize, usize)> = a.iter().map(|r| (r.repetition, r.t)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(a.iter().all(|r| r.error.is_none()));
        assert_eq!(a[2].solution_count, Some(1));
    }

    #[test]
    fn jsonl_round_trip() {
        let recs = run_decimation_experiment(&spec()).unwrap();
        let back: Vec<ExperimentRecord> = from_jsonl(&to_jsonl(&recs).unwrap()).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn empty_schedule_gives_no_records() {
        let mut s = spec();
        s.t_schedule.clear();
        assert!(run_decimation_experiment(&s).unwrap().is_empty());
    }

    #[test]
    fn validation() {
        let mut s = spec();
        s.t_schedule = vec![0.5, 0.2];
        assert!(matches!(s.validate(), Err(HarnessError::Spec(_))));
        let mut s = spec();
        s.model.kind = ModelKind::Uniform;
        assert!(matches!(s.validate(), Err(HarnessError::Spec(_))));
        let mut s = spec();
        s.mode = Mode::U;
        s.model.n = 40;
        assert!(matches!(s.validate(), Err(HarnessError::ResourceLimit(_))));
    }

    #[test]
    fn hash_ignores_outputs() {
        let a = spec();
        let mut b = spec();
        b.outputs.csv = Some("x.csv".into());
        assert_eq!(a.config_hash(), b.config_hash());
        let mut c = spec();
        c.seed = 12;
        assert_ne!(a.config_hash(), c.config_hash());
    }
}
