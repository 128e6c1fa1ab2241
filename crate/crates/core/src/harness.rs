//! Sweep orchestration, persistence, and report generation for frequency scans.
//!
//! Provides:
//! - [`SweepConfig`]: TOML-round-trippable scan description with a stable content hash
//! - [`run_sweep`] and [`run_sweep_observed`]: warm-started ascending frequency scans
//! - [`SweepRecord`] rows with exact CSV persistence via [`records_to_csv`] and [`records_from_csv`]
//! - [`report`]: fitted-versus-predicted exponent table plus an invariant summary
//! - [`RunManifest`]: config echo, content hashes, and artifact version for reproducibility

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::time::Instant;
use thiserror::Error;

use crate::asymptotics::{
    fit_rate, fit_rate_free_log, AsymptoticsError, FitModel, Observable, RateModel,
    RatePrediction,
};
use crate::problem::{PowerTerm, ProblemError, ProblemParams};
use crate::solver::{
    decay_profile, solve_ground_state, solve_ground_state_from, GroundState, SolverConfig,
    SolverError,
};

/// Errors raised by sweep orchestration, persistence, and reporting.
#[derive(Debug, Error)]
pub enum HarnessError {
    /// The sweep description violates a structural precondition.
    #[error("sweep configuration invalid: {detail}")]
    ConfigInvalid { detail: String },
    /// A sweep point failed to converge; earlier rows are retained.
    #[error("ground state at frequency {eps} did not converge; {} records retained", partial.len())]
    PointDidNotConverge { eps: f64, partial: Vec<SweepRecord> },
    /// Reporting needs a minimum number of converged rows.
    #[error("need at least {minimum} converged records, found {found}")]
    TooFewConverged { found: usize, minimum: usize },
    /// The CSV text does not carry the expected column layout.
    #[error("sweep CSV malformed: {detail}")]
    CsvShape { detail: String },
    /// A recorded configuration hash disagrees with the recomputed one.
    #[error("configuration hash mismatch: recorded {recorded}, computed {computed}")]
    HashMismatch { recorded: String, computed: String },
    /// TOML serialization failed.
    #[error("TOML serialization failed: {0}")]
    TomlSer(#[from] toml::ser::Error),
    /// TOML parsing failed.
    #[error("TOML parse failed: {0}")]
    TomlDe(#[from] toml::de::Error),
    /// CSV encoding or decoding failed.
    #[error("CSV processing failed: {0}")]
    Csv(#[from] csv::Error),
    /// An observer or file sink failed.
    #[error("I/O failed: {0}")]
    Io(#[from] std::io::Error),
    /// Problem parameters were rejected.
    #[error("problem parameters rejected: {0}")]
    Problem(#[from] ProblemError),
    /// A ground-state solve failed outright.
    #[error("solver failed: {0}")]
    Solver(#[from] SolverError),
    /// Rate prediction or fitting failed.
    #[error("rate analysis failed: {0}")]
    Asymptotics(#[from] AsymptoticsError),
}

/// One power term of the perturbation in plain serializable form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    /// Power exponent.
    pub q: f64,
    /// Positive coefficient.
    pub c: f64,
}

/// Full description of one frequency sweep.
///
/// Round-trips through TOML; [`SweepConfig::config_hash`] is the SHA-256 of
/// the canonical serialization, so any field change changes the hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Spatial dimension N.
    dimension: usize,
    /// Riesz order α.
    alpha: f64,
    /// Perturbation power terms.
    terms: Vec<TermSpec>,
    /// Smallest swept frequency.
    eps_min: f64,
    /// Largest swept frequency.
    eps_max: f64,
    /// Number of log-spaced frequencies.
    points: usize,
    /// Reuse each converged profile as the seed of the next frequency.
    warm_start: bool,
    /// Grid intervals per solve.
    intervals: usize,
    /// Truncation radius as a multiple of the screening length.
    truncation_coefficient: f64,
    /// Radius of the linearly spaced grid core.
    core_radius: f64,
    /// Fraction of intervals inside the core.
    core_fraction: f64,
    /// Iteration budget per solve.
    max_iters: usize,
    /// Relative preconditioned-gradient tolerance.
    tol_grad: f64,
    /// Relative constraint-residual tolerance.
    tol_constraint: f64,
}

impl SweepConfig {
    /// Builds a sweep description with production defaults over ε ∈ [10², 10⁴].
    pub fn new(dimension: usize, alpha: f64, terms: &[(f64, f64)]) -> Self {
        let solver = SolverConfig::new();
        SweepConfig {
            dimension,
            alpha,
            terms: terms.iter().map(|&(q, c)| TermSpec { q, c }).collect(),
            eps_min: 1e2,
            eps_max: 1e4,
            points: 9,
            warm_start: true,
            intervals: solver.intervals(),
            truncation_coefficient: solver.truncation_coefficient(),
            core_radius: solver.core_radius(),
            core_fraction: solver.core_fraction(),
            max_iters: solver.max_iters(),
            tol_grad: solver.tol_grad(),
            tol_constraint: solver.tol_constraint(),
        }
    }

    /// Replaces the frequency range and point count.
    pub fn with_eps_range(mut self, eps_min: f64, eps_max: f64, points: usize) -> Self {
        self.eps_min = eps_min;
        self.eps_max = eps_max;
        self.points = points;
        self
    }

    /// Enables or disables warm starting.
    pub fn with_warm_start(mut self, warm_start: bool) -> Self {
        self.warm_start = warm_start;
        self
    }

    /// Replaces the grid interval count.
    pub fn with_intervals(mut self, intervals: usize) -> Self {
        self.intervals = intervals;
        self
    }

    /// Replaces the per-solve iteration budget.
    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    /// Replaces both convergence tolerances.
    pub fn with_tolerances(mut self, tol_grad: f64, tol_constraint: f64) -> Self {
        self.tol_grad = tol_grad;
        self.tol_constraint = tol_constraint;
        self
    }

    /// Replaces the truncation coefficient.
    pub fn with_truncation_coefficient(mut self, coefficient: f64) -> Self {
        self.truncation_coefficient = coefficient;
        self
    }

    /// Replaces the linearly spaced core region.
    pub fn with_core(mut self, core_radius: f64, core_fraction: f64) -> Self {
        self.core_radius = core_radius;
        self.core_fraction = core_fraction;
        self
    }

    /// Spatial dimension N.
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Riesz order α.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Smallest swept frequency.
    pub fn eps_min(&self) -> f64 {
        self.eps_min
    }

    /// Largest swept frequency.
    pub fn eps_max(&self) -> f64 {
        self.eps_max
    }

    /// Number of swept frequencies.
    pub fn points(&self) -> usize {
        self.points
    }

    /// Whether each converged profile seeds the next frequency.
    pub fn warm_start(&self) -> bool {
        self.warm_start
    }

    /// Grid intervals per solve.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Validated problem parameters described by this sweep.
    pub fn problem_params(&self) -> Result<ProblemParams, HarnessError> {
        let terms = self
            .terms
            .iter()
            .map(|t| PowerTerm::new(t.q, t.c))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ProblemParams::new(self.dimension, self.alpha, terms)?)
    }

    /// Solver settings described by this sweep.
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig::new()
            .with_intervals(self.intervals)
            .with_truncation_coefficient(self.truncation_coefficient)
            .with_core(self.core_radius, self.core_fraction)
            .with_max_iters(self.max_iters)
            .with_tolerances(self.tol_grad, self.tol_constraint)
    }

    /// Log-spaced frequency grid with exact endpoints.
    pub fn eps_grid(&self) -> Vec<f64> {
        let ratio = self.eps_max / self.eps_min;
        let steps = (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                if i == self.points - 1 {
                    self.eps_max
                } else {
                    self.eps_min * ratio.powf(i as f64 / steps)
                }
            })
            .collect()
    }

    /// Checks the structural sweep preconditions and parameter admissibility.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.points < 6 {
            return Err(HarnessError::ConfigInvalid {
                detail: format!("need at least 6 sweep points, got {}", self.points),
            });
        }
        if !(self.eps_min.is_finite() && self.eps_min > 0.0 && self.eps_max.is_finite()) {
            return Err(HarnessError::ConfigInvalid {
                detail: format!(
                    "frequency range must be finite and positive, got [{}, {}]",
                    self.eps_min, self.eps_max
                ),
            });
        }
        let decades = (self.eps_max / self.eps_min).log10();
        if decades < 2.0 - 1e-9 {
            return Err(HarnessError::ConfigInvalid {
                detail: format!("frequency range must span at least 2 decades, got {decades:.3}"),
            });
        }
        let params = self.problem_params()?;
        let hypotheses = params.validate_hypotheses();
        if !hypotheses.admissible() {
            return Err(HarnessError::ConfigInvalid {
                detail: hypotheses.messages.join("; "),
            });
        }
        Ok(())
    }

    /// Canonical TOML serialization used for hashing and persistence.
    pub fn canonical_toml(&self) -> Result<String, HarnessError> {
        Ok(toml::to_string(self)?)
    }

    /// Parses a sweep description from TOML text.
    pub fn from_toml(text: &str) -> Result<SweepConfig, HarnessError> {
        Ok(toml::from_str(text)?)
    }

    /// SHA-256 hex digest of the canonical serialization.
    pub fn config_hash(&self) -> Result<String, HarnessError> {
        Ok(sha256_hex(self.canonical_toml()?.as_bytes()))
    }
}

/// Exact CSV header row emitted and required by the persistence functions.
pub const SWEEP_CSV_HEADER: &str = "eps,m_eps,gap,kinetic,dpp,mass_w,mass_wtilde,u0,xi_meas,tau_minus_1,nehari_res,pohozaev_res,decay_sup,iterations,wall_ms,converged";

/// One sweep row: the scalar observables of a single ground-state solve.
///
/// Field order matches [`SWEEP_CSV_HEADER`] exactly. Every field except
/// `wall_ms` is deterministic given the sweep configuration; the wall-clock
/// column measures the run, not the solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    /// Frequency ε.
    pub eps: f64,
    /// Least-energy level at this frequency.
    pub m_eps: f64,
    /// Limit level minus the level at this frequency.
    pub gap: f64,
    /// Squared gradient norm of the normalized profile.
    pub kinetic: f64,
    /// Critical pair energy of the normalized profile.
    pub dpp: f64,
    /// Squared L2 norm of the normalized profile.
    pub mass_w: f64,
    /// Squared L2 norm of the concentration-normalized profile.
    pub mass_wtilde: f64,
    /// Central amplitude of the original-scale solution.
    pub u0: f64,
    /// Measured total concentration scale.
    pub xi_meas: f64,
    /// Nehari balance diagnostic minus one.
    pub tau_minus_1: f64,
    /// Relative Nehari residual.
    pub nehari_res: f64,
    /// Relative dilation-identity residual.
    pub pohozaev_res: f64,
    /// Supremum of the algebraically weighted recentered profile.
    pub decay_sup: f64,
    /// Descent iterations used.
    pub iterations: u64,
    /// Wall-clock milliseconds for the solve.
    pub wall_ms: u64,
    /// Whether the solve met every convergence check.
    pub converged: bool,
}

impl SweepRecord {
    /// Extracts the row observables from one converged or attempted state.
    pub fn from_state(eps: f64, state: &GroundState, wall_ms: u64) -> Result<SweepRecord, HarnessError> {
        let decay = decay_profile(state, state.xi_stage())?;
        Ok(SweepRecord {
            eps,
            m_eps: state.m_eps(),
            gap: state.energy_gap(),
            kinetic: state.breakdown().kinetic,
            dpp: state.breakdown().dpp,
            mass_w: state.mass_w(),
            mass_wtilde: state.mass_wtilde(),
            u0: state.central_amplitude(),
            xi_meas: state.xi_measured(),
            tau_minus_1: state.tau() - 1.0,
            nehari_res: state.nehari().relative,
            pohozaev_res: state.pohozaev().relative,
            decay_sup: decay.sup_weighted(),
            iterations: state.iterations() as u64,
            wall_ms,
            converged: state.converged(),
        })
    }
}

/// Serializes records to CSV text with the exact header and lossless floats.
pub fn records_to_csv(records: &[SweepRecord]) -> Result<String, HarnessError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for record in records {
        writer.serialize(record)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| HarnessError::CsvShape {
            detail: format!("writer flush failed: {e}"),
        })?;
    String::from_utf8(bytes).map_err(|e| HarnessError::CsvShape {
        detail: format!("non-UTF-8 output: {e}"),
    })
}

/// Parses records from CSV text, requiring the exact header.
pub fn records_from_csv(text: &str) -> Result<Vec<SweepRecord>, HarnessError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != SWEEP_CSV_HEADER {
        return Err(HarnessError::CsvShape {
            detail: format!("unexpected header {header:?}"),
        });
    }
    let mut records = Vec::new();
    for row in reader.deserialize() {
        records.push(row?);
    }
    Ok(records)
}

/// Runs a sweep and discards per-point states.
///
/// Frequencies ascend so each converged profile can seed the next solve;
/// the scan is fully deterministic (no randomized stages). A non-converged
/// point aborts the sweep, and the error retains every computed row
/// including the failing one.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepRecord>, HarnessError> {
    run_sweep_observed(config, |_, _| Ok(()))
}

/// Runs a sweep, handing each row and its full state to an observer.
///
/// The observer fires after every solve, converged or not, so a file-backed
/// sink sees partial results even when the sweep aborts.
pub fn run_sweep_observed<F>(
    config: &SweepConfig,
    mut observer: F,
) -> Result<Vec<SweepRecord>, HarnessError>
where
    F: FnMut(&SweepRecord, &GroundState) -> Result<(), HarnessError>,
{
    config.validate()?;
    let params = config.problem_params()?;
    let solver_config = config.solver_config();
    let mut records: Vec<SweepRecord> = Vec::with_capacity(config.points);
    let mut previous: Option<GroundState> = None;
    for eps in config.eps_grid() {
        let start = Instant::now();
        let state = match (&previous, config.warm_start) {
            (Some(seed), true) => solve_ground_state_from(&params, eps, &solver_config, seed)?,
            _ => solve_ground_state(&params, eps, &solver_config)?,
        };
        let wall_ms = start.elapsed().as_millis() as u64;
        let record = SweepRecord::from_state(eps, &state, wall_ms)?;
        observer(&record, &state)?;
        records.push(record);
        if !state.converged() {
            return Err(HarnessError::PointDidNotConverge {
                eps,
                partial: records,
            });
        }
        previous = Some(state);
    }
    Ok(records)
}

/// One fitted-versus-predicted exponent row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitRow {
    /// Observable the row fits.
    pub observable: Observable,
    /// Regression base used.
    pub model: FitModel,
    /// Fitted exponent.
    pub fitted: f64,
    /// Predicted exponent.
    pub predicted: f64,
    /// Deviation, relative when the prediction is nonzero.
    pub deviation: f64,
    /// Gate the deviation is held to.
    pub tolerance: f64,
    /// Fit quality of the regression.
    pub r_squared: f64,
    /// Whether the deviation passes the gate.
    pub pass: bool,
}

/// One bounded-spread row for observables predicted to stay level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftRow {
    /// Observable the row tracks.
    pub observable: Observable,
    /// Compensation applied before measuring the spread.
    pub compensator: &'static str,
    /// Max-over-min spread minus one across converged rows.
    pub drift: f64,
    /// Gate the spread is held to.
    pub tolerance: f64,
    /// Whether the spread passes the gate.
    pub pass: bool,
}

/// One ungated two-exponent diagnostic row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FreeLogRow {
    /// Observable the row fits.
    pub observable: Observable,
    /// Fitted exponent on ε.
    pub eps_exponent: f64,
    /// Fitted exponent on ln ε.
    pub log_exponent: f64,
    /// Fit quality of the regression.
    pub r_squared: f64,
}

/// Record-level invariant results across one sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvariantSummary {
    /// Total rows inspected.
    pub records: usize,
    /// Rows flagged converged.
    pub converged: usize,
    /// Every row converged.
    pub all_converged: bool,
    /// Gap column strictly positive.
    pub gap_all_positive: bool,
    /// Gap column strictly decreasing in frequency.
    pub gap_strictly_decreasing: bool,
    /// Balance diagnostic never drops below one beyond tolerance.
    pub tau_floor_ok: bool,
    /// Constraint residuals stay below the acceptance threshold.
    pub residuals_ok: bool,
    /// Weighted decay supremum stays within three times its smallest-frequency value.
    pub decay_sup_uniform: bool,
    /// Conjunction of every check above.
    pub pass: bool,
}

/// Full sweep report: gated fits, gated drifts, diagnostics, and invariants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    dimension: usize,
    alpha: f64,
    q2: f64,
    sigma: f64,
    fit_rows: Vec<FitRow>,
    drift_rows: Vec<DriftRow>,
    free_log_rows: Vec<FreeLogRow>,
    invariants: InvariantSummary,
    all_pass: bool,
}

impl SweepReport {
    /// Spatial dimension N.
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Riesz order α.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Dominant perturbation exponent.
    pub fn q2(&self) -> f64 {
        self.q2
    }

    /// Balance exponent σ.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Gated exponent-fit rows.
    pub fn fit_rows(&self) -> &[FitRow] {
        &self.fit_rows
    }

    /// Gated bounded-spread rows.
    pub fn drift_rows(&self) -> &[DriftRow] {
        &self.drift_rows
    }

    /// Ungated two-exponent diagnostic rows.
    pub fn free_log_rows(&self) -> &[FreeLogRow] {
        &self.free_log_rows
    }

    /// Record-level invariant results.
    pub fn invariants(&self) -> &InvariantSummary {
        &self.invariants
    }

    /// Conjunction of every gated row and the invariant summary.
    pub fn all_pass(&self) -> bool {
        self.all_pass
    }

    /// Renders the report as an aligned plain-text table.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "sweep report: N={}, alpha={}, q2={}, sigma={:.6}\n",
            self.dimension, self.alpha, self.q2, self.sigma
        ));
        out.push_str(&format!(
            "{:<12} {:<14} {:>12} {:>12} {:>10} {:>10} {:>8}  verdict\n",
            "observable", "base", "fitted", "predicted", "deviation", "tolerance", "R2"
        ));
        for row in &self.fit_rows {
            out.push_str(&format!(
                "{:<12} {:<14} {:>12.6} {:>12.6} {:>10.4} {:>10.4} {:>8.5}  {}\n",
                row.observable.label(),
                base_label(row.model),
                row.fitted,
                row.predicted,
                row.deviation,
                row.tolerance,
                row.r_squared,
                verdict(row.pass)
            ));
        }
        for row in &self.drift_rows {
            out.push_str(&format!(
                "{:<12} {:<14} spread {:>8.4} within {:>6.4}  {}\n",
                row.observable.label(),
                row.compensator,
                row.drift,
                row.tolerance,
                verdict(row.pass)
            ));
        }
        if !self.free_log_rows.is_empty() {
            out.push_str("two-exponent diagnostics (ungated):\n");
            for row in &self.free_log_rows {
                out.push_str(&format!(
                    "{:<12} eps^{:.6} * (ln eps)^{:.6}  R2={:.5}\n",
                    row.observable.label(),
                    row.eps_exponent,
                    row.log_exponent,
                    row.r_squared
                ));
            }
        }
        let inv = &self.invariants;
        out.push_str(&format!(
            "invariants: records={} converged={} gap>0={} gap-decreasing={} tau-floor={} residuals={} decay-uniform={}  {}\n",
            inv.records,
            inv.converged,
            yes_no(inv.gap_all_positive),
            yes_no(inv.gap_strictly_decreasing),
            yes_no(inv.tau_floor_ok),
            yes_no(inv.residuals_ok),
            yes_no(inv.decay_sup_uniform),
            verdict(inv.pass)
        ));
        out.push_str(&format!("overall: {}\n", verdict(self.all_pass)));
        out
    }
}

fn base_label(model: FitModel) -> &'static str {
    match model {
        FitModel::PowerLaw => "eps",
        FitModel::LogCorrectedPowerLaw => "eps*ln(eps)",
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

fn yes_no(value: bool) -> &'static str {
    if value {
        "yes"
    } else {
        "no"
    }
}

/// Per-regime gates mirroring the stated desk-scale tolerances.
struct GateTable {
    gap: f64,
    u0: f64,
    xi: f64,
    mass: f64,
    tau: Option<f64>,
}

fn gates_for(dimension: usize) -> GateTable {
    match dimension {
        3 => GateTable {
            gap: 0.20,
            u0: 0.20,
            xi: 0.15,
            mass: 0.20,
            tau: None,
        },
        4 => GateTable {
            gap: 0.20,
            u0: 0.20,
            xi: 0.20,
            mass: 0.25,
            tau: None,
        },
        _ => GateTable {
            gap: 0.15,
            u0: 0.10,
            xi: 0.10,
            mass: 0.20,
            tau: Some(0.30),
        },
    }
}

fn exponent_deviation(fitted: f64, predicted: f64) -> f64 {
    if predicted.abs() > 1e-12 {
        ((fitted - predicted) / predicted).abs()
    } else {
        (fitted - predicted).abs()
    }
}

fn spread(values: &[f64]) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi / lo - 1.0
}

/// Builds the fit-versus-prediction report for one sweep.
///
/// Rows are fitted on converged records only, sorted by frequency, so the
/// report is independent of the input record order. Exponent rows gate the
/// gap, central amplitude, and measured scale in every regime; the mass law
/// enters as a fitted exponent in dimension three and as a bounded spread
/// otherwise; a balance-diagnostic slope row is gated in dimensions five
/// and up. Two-exponent diagnostic rows are reported without gates.
pub fn report(
    records: &[SweepRecord],
    prediction: &RatePrediction,
) -> Result<SweepReport, HarnessError> {
    let mut sorted: Vec<SweepRecord> = records.to_vec();
    sorted.sort_by(|a, b| a.eps.total_cmp(&b.eps));
    let converged: Vec<&SweepRecord> = sorted.iter().filter(|r| r.converged).collect();
    if converged.len() < 4 {
        return Err(HarnessError::TooFewConverged {
            found: converged.len(),
            minimum: 4,
        });
    }

    let dimension = prediction.dimension();
    let gates = gates_for(dimension);
    let samples = |column: fn(&SweepRecord) -> f64| -> Vec<(f64, f64)> {
        converged.iter().map(|r| (r.eps, column(r))).collect()
    };

    let mut fit_rows = Vec::new();
    let mut free_log_rows = Vec::new();
    let push_fit = |observable: Observable,
                        values: Vec<(f64, f64)>,
                        tolerance: f64,
                        fit_rows: &mut Vec<FitRow>,
                        free_log_rows: &mut Vec<FreeLogRow>|
     -> Result<(), HarnessError> {
        if values.iter().any(|&(_, v)| !(v > 0.0)) {
            return Ok(());
        }
        let entry = match prediction.entry(observable) {
            Some(entry) => *entry,
            None => return Ok(()),
        };
        let model = match entry.model {
            RateModel::Power => FitModel::PowerLaw,
            RateModel::EpsLogEps => FitModel::LogCorrectedPowerLaw,
            _ => return Ok(()),
        };
        let fit = fit_rate(&values, model)?;
        let deviation = exponent_deviation(fit.exponent, entry.eps_power);
        fit_rows.push(FitRow {
            observable,
            model,
            fitted: fit.exponent,
            predicted: entry.eps_power,
            deviation,
            tolerance,
            r_squared: fit.r_squared,
            pass: deviation <= tolerance,
        });
        if let Ok(diag) = fit_rate_free_log(&values) {
            free_log_rows.push(FreeLogRow {
                observable,
                eps_exponent: diag.eps_exponent,
                log_exponent: diag.log_exponent,
                r_squared: diag.r_squared,
            });
        }
        Ok(())
    };

    push_fit(
        Observable::EnergyGap,
        samples(|r| r.gap),
        gates.gap,
        &mut fit_rows,
        &mut free_log_rows,
    )?;
    push_fit(
        Observable::CentralAmplitude,
        samples(|r| r.u0),
        gates.u0,
        &mut fit_rows,
        &mut free_log_rows,
    )?;
    push_fit(
        Observable::XiTotal,
        samples(|r| r.xi_meas),
        gates.xi,
        &mut fit_rows,
        &mut free_log_rows,
    )?;
    if dimension == 3 {
        push_fit(
            Observable::MassWTilde,
            samples(|r| r.mass_wtilde),
            gates.mass,
            &mut fit_rows,
            &mut free_log_rows,
        )?;
    }
    if let Some(tau_gate) = gates.tau {
        let values = samples(|r| r.tau_minus_1);
        if values.iter().all(|&(_, v)| v > 0.0) {
            push_fit(
                Observable::TauMinusOne,
                values,
                tau_gate,
                &mut fit_rows,
                &mut free_log_rows,
            )?;
        }
    }

    let mut drift_rows = Vec::new();
    if dimension >= 5 {
        let values: Vec<f64> = converged.iter().map(|r| r.mass_w).collect();
        let drift = spread(&values);
        drift_rows.push(DriftRow {
            observable: Observable::MassW,
            compensator: "raw",
            drift,
            tolerance: gates.mass,
            pass: drift <= gates.mass,
        });
    } else if dimension == 4 {
        let values: Vec<f64> = converged
            .iter()
            .filter(|r| r.eps > 1.0)
            .map(|r| r.mass_wtilde / r.eps.ln())
            .collect();
        if values.len() == converged.len() {
            let drift = spread(&values);
            drift_rows.push(DriftRow {
                observable: Observable::MassWTilde,
                compensator: "per ln(eps)",
                drift,
                tolerance: gates.mass,
                pass: drift <= gates.mass,
            });
        }
    }

    let all_converged = converged.len() == sorted.len();
    let gap_all_positive = converged.iter().all(|r| r.gap > 0.0);
    let gap_strictly_decreasing = converged.windows(2).all(|w| w[1].gap < w[0].gap);
    let tau_floor_ok = converged.iter().all(|r| r.tau_minus_1 >= -1e-6);
    let residuals_ok = converged
        .iter()
        .all(|r| r.nehari_res.abs() <= 1e-6 && r.pohozaev_res.abs() <= 1e-6);
    let first_decay = converged[0].decay_sup;
    let decay_sup_uniform = first_decay > 0.0
        && converged.iter().all(|r| r.decay_sup <= 3.0 * first_decay);
    let invariants_pass = all_converged
        && gap_all_positive
        && gap_strictly_decreasing
        && tau_floor_ok
        && residuals_ok
        && decay_sup_uniform;
    let invariants = InvariantSummary {
        records: sorted.len(),
        converged: converged.len(),
        all_converged,
        gap_all_positive,
        gap_strictly_decreasing,
        tau_floor_ok,
        residuals_ok,
        decay_sup_uniform,
        pass: invariants_pass,
    };

    let all_pass = invariants.pass
        && fit_rows.iter().all(|r| r.pass)
        && drift_rows.iter().all(|r| r.pass);

    Ok(SweepReport {
        dimension,
        alpha: prediction.alpha(),
        q2: prediction.q2(),
        sigma: prediction.sigma(),
        fit_rows,
        drift_rows,
        free_log_rows,
        invariants,
        all_pass,
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Content stamp of one sweep point: discretization and kernel identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointStamp {
    /// Frequency ε.
    pub eps: f64,
    /// Content hash of the grid the reported state lives on.
    pub grid_hash: String,
    /// Digest of the kernel-defining inputs on that grid.
    pub kernel_hash: String,
}

impl PointStamp {
    /// Stamps one solved state.
    pub fn from_state(eps: f64, state: &GroundState) -> PointStamp {
        let grid_hash = state.grid().content_hash().to_string();
        let mut bytes = Vec::with_capacity(grid_hash.len() + 24);
        bytes.extend_from_slice(grid_hash.as_bytes());
        bytes.extend_from_slice(&state.params().alpha().to_bits().to_le_bytes());
        bytes.extend_from_slice(b"riesz-product-integration-v1");
        PointStamp {
            eps,
            grid_hash,
            kernel_hash: sha256_hex(&bytes),
        }
    }
}

/// Reproducibility manifest: config echo, content hash, and per-point stamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    artifact_version: String,
    config_hash: String,
    config: SweepConfig,
    points: Vec<PointStamp>,
}

impl RunManifest {
    /// Builds a manifest for one sweep run.
    pub fn new(config: &SweepConfig, points: Vec<PointStamp>) -> Result<RunManifest, HarnessError> {
        Ok(RunManifest {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.config_hash()?,
            config: config.clone(),
            points,
        })
    }

    /// Crate version that produced the run.
    pub fn artifact_version(&self) -> &str {
        &self.artifact_version
    }

    /// Recorded configuration hash.
    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    /// Echoed sweep configuration.
    pub fn config(&self) -> &SweepConfig {
        &self.config
    }

    /// Per-point content stamps.
    pub fn points(&self) -> &[PointStamp] {
        &self.points
    }

    /// Serializes the manifest as TOML text.
    pub fn to_toml(&self) -> Result<String, HarnessError> {
        Ok(toml::to_string(self)?)
    }

    /// Parses a manifest from TOML text.
    pub fn from_toml(text: &str) -> Result<RunManifest, HarnessError> {
        Ok(toml::from_str(text)?)
    }

    /// Checks that the embedded config still hashes to the recorded digest.
    pub fn verify(&self) -> Result<(), HarnessError> {
        let computed = self.config.config_hash()?;
        if computed != self.config_hash {
            return Err(HarnessError::HashMismatch {
                recorded: self.config_hash.clone(),
                computed,
            });
        }
        Ok(())
    }

    /// Checks that an external config matches the recorded digest.
    pub fn matches(&self, config: &SweepConfig) -> Result<(), HarnessError> {
        let computed = config.config_hash()?;
        if computed != self.config_hash {
            return Err(HarnessError::HashMismatch {
                recorded: self.config_hash.clone(),
                computed,
            });
        }
        Ok(())
    }
}
