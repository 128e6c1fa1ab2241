//! Scaling schedules and rate laws of the large-frequency limit.
//!
//! Everything downstream of a validated problem instance that can be stated
//! without solving the equation lives here:
//!
//! - the exact rescaling schedule (σ, ε₁, ε₂, δ) connecting the original
//!   equation to its normalized working form, together with the rescaled
//!   perturbation coefficients,
//! - predicted convergence exponents for every tracked observable, as a
//!   floating-point table and as exact rational pairs whose defining chain
//!   identities are verified in integer arithmetic,
//! - the limiting concentration scale ρ₀ in dimensions five and up,
//! - log-log least-squares rate fitting against plain, log-corrected, and
//!   free-logarithm power laws,
//! - cutoff test-function expansions exhibiting the variational competition
//!   that produces the rate laws.

use crate::closed_forms::{self, ClosedFormsError};
use crate::problem::{PowerTerm, ProblemError, ProblemParams};
use crate::quad::{adaptive_gk15, smoothstep01};
use crate::radial_core::{unit_sphere_area, RadialCoreError, RadialGrid};
use crate::riesz::{RieszError, RieszKernel};
use num_rational::Ratio;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// Errors from schedule construction, rate prediction, and fitting.
#[derive(Debug, Error)]
pub enum AsymptoticsError {
    /// Growth hypotheses fail for the supplied parameters.
    #[error("parameters are inadmissible: {details}")]
    Inadmissible { details: String },
    /// The balance exponent came out nonpositive.
    #[error("scaling exponent sigma = {sigma} is not positive")]
    SigmaNotPositive { sigma: f64 },
    /// Frequency outside (0, ∞).
    #[error("frequency eps = {eps} must be positive and finite")]
    InvalidFrequency { eps: f64 },
    /// A schedule was paired with parameters it was not built from.
    #[error("schedule balances q2 = {expected}, parameters have q2 = {found}")]
    ScheduleMismatch { expected: f64, found: f64 },
    /// The limit profile has infinite mass below dimension five.
    #[error("limit profile mass diverges in dimension {dimension}; need N >= 5")]
    MassDivergent { dimension: usize },
    /// Grid dimension disagrees with the parameters.
    #[error("grid has dimension {found}, parameters have dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    /// Kernel order disagrees with the parameters.
    #[error("kernel order alpha = {found} does not match parameters alpha = {expected}")]
    AlphaMismatch { expected: f64, found: f64 },
    /// Kernel and fields live on different grids.
    #[error("kernel grid {kernel_grid:#018x} does not match field grid {grid:#018x}")]
    GridMismatch { kernel_grid: u64, grid: u64 },
    /// Too few samples for a meaningful fit.
    #[error("need at least {minimum} samples, found {found}")]
    InsufficientSamples { found: usize, minimum: usize },
    /// Samples cover too small a frequency range.
    #[error("samples span {decades:.3} decades, need at least {minimum}")]
    SpanTooNarrow { decades: f64, minimum: f64 },
    /// A sample has a nonpositive frequency or value.
    #[error("sample {index} has nonpositive entry {value}")]
    NonpositiveSample { index: usize, value: f64 },
    /// Logarithmic bases need frequencies above one.
    #[error("logarithmic base needs eps > 1, found {eps}")]
    LogBaseOutOfRange { eps: f64 },
    /// The regression system is numerically singular.
    #[error("degenerate fit: {detail}")]
    DegenerateFit { detail: String },
    /// A cutoff scale falls outside what the grid resolves.
    #[error("scale {scale} is outside the resolvable range [{lower}, {upper}]")]
    ScaleOutOfRange { scale: f64, lower: f64, upper: f64 },
    /// The grid is too small to hold the cutoff support.
    #[error("truncation radius {rmax} is below the required {needed}")]
    TruncationTooSmall { rmax: f64, needed: f64 },
    /// No scales supplied to the expansion.
    #[error("no scales supplied")]
    EmptyScales,
    /// An exact-arithmetic chain identity failed.
    #[error("rate identity '{identity}' failed in exact arithmetic")]
    IdentityViolation { identity: String },
    /// Parameter validation failure.
    #[error(transparent)]
    Problem(#[from] ProblemError),
    /// Grid or field failure.
    #[error(transparent)]
    Field(#[from] RadialCoreError),
    /// Kernel failure.
    #[error(transparent)]
    Kernel(#[from] RieszError),
    /// Closed-form evaluation failure.
    #[error(transparent)]
    ClosedForms(#[from] ClosedFormsError),
}

/// Rescaling schedule at one frequency: u(x) = ε₂ · w(μ x).
///
/// The exponents balance the dominant perturbation power against the
/// frequency term, so the rescaled profile w solves the working equation
/// with unit critical coefficient and frequency coefficient δ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingSchedule {
    /// Frequency ε the schedule was built at.
    eps: f64,
    /// Balance exponent σ = ((N+α) − (N−2)q₂) / (4 + (N−2)q₂ − (N+α)).
    sigma: f64,
    /// Source amplitude ε₁ = ε^{(N+α)(1+σ)/4}.
    eps1: f64,
    /// Profile amplitude ε₂ = ε^{(N−2)(1+σ)/4}.
    eps2: f64,
    /// Rescaled frequency coefficient δ = ε^{−σ}.
    delta: f64,
    /// Spatial contraction μ = ε^{(1+σ)/2}; ε₂ = μ^{(N−2)/2}.
    mu: f64,
    /// Largest perturbation exponent the schedule balances against.
    q2: f64,
}

/// Builds the rescaling schedule for one problem instance and frequency.
pub fn scaling_schedule(
    params: &ProblemParams,
    eps: f64,
) -> Result<ScalingSchedule, AsymptoticsError> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(AsymptoticsError::InvalidFrequency { eps });
    }
    let n = params.dimension() as f64;
    let alpha = params.alpha();
    let q2 = params.q2();
    let numer = (n + alpha) - (n - 2.0) * q2;
    let denom = 4.0 + (n - 2.0) * q2 - (n + alpha);
    let sigma = numer / denom;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(AsymptoticsError::SigmaNotPositive { sigma });
    }
    let growth = (1.0 + sigma) / 4.0;
    Ok(ScalingSchedule {
        eps,
        sigma,
        eps1: eps.powf((n + alpha) * growth),
        eps2: eps.powf((n - 2.0) * growth),
        delta: eps.powf(-sigma),
        mu: eps.powf(2.0 * growth),
        q2,
    })
}

impl ScalingSchedule {
    /// Frequency ε.
    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Balance exponent σ.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Source amplitude ε₁.
    pub fn eps1(&self) -> f64 {
        self.eps1
    }

    /// Profile amplitude ε₂.
    pub fn eps2(&self) -> f64 {
        self.eps2
    }

    /// Rescaled frequency coefficient δ = ε^{−σ}.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Spatial contraction μ.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Largest perturbation exponent the schedule balances.
    pub fn q2(&self) -> f64 {
        self.q2
    }

    /// Perturbation coefficients of the rescaled nonlinearity,
    /// c̃_i = c_i ε₂^{q_i} / ε₁ = c_i δ ε₂^{q_i − q₂}.
    ///
    /// The second form is the one evaluated: the large common magnitudes
    /// cancel before exponentiation, and the dominant term reduces to b·δ
    /// without any roundoff beyond the product.
    pub fn working_terms(
        &self,
        params: &ProblemParams,
    ) -> Result<Vec<PowerTerm>, AsymptoticsError> {
        if params.q2() != self.q2 {
            return Err(AsymptoticsError::ScheduleMismatch {
                expected: self.q2,
                found: params.q2(),
            });
        }
        params
            .terms()
            .iter()
            .map(|term| {
                let c = term.c * self.delta * self.eps2.powf(term.q - self.q2);
                PowerTerm::new(term.q, c).map_err(AsymptoticsError::from)
            })
            .collect()
    }
}

/// Observable tracked by the rate table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Observable {
    /// Concentration scale of the original solution, measured from u(0).
    XiTotal,
    /// Concentration scale of the normalized profile w.
    XiStage,
    /// Energy gap m_∞ − m_ε.
    EnergyGap,
    /// Central amplitude u(0).
    CentralAmplitude,
    /// Squared L² mass of the original solution u.
    MassU,
    /// Squared L² mass of the normalized profile w.
    MassW,
    /// Squared L² mass of the concentration-normalized profile w̃.
    MassWTilde,
    /// Nehari balance diagnostic τ(w) − 1.
    TauMinusOne,
    /// Deviation of ‖∇·‖₂² from its limit value.
    GradientCorrection,
    /// Deviation of the critical pair energy from its limit value.
    PairEnergyCorrection,
}

impl Observable {
    /// Stable snake-case label used in reports and CSV headers.
    pub fn label(&self) -> &'static str {
        match self {
            Observable::XiTotal => "xi_total",
            Observable::XiStage => "xi_stage",
            Observable::EnergyGap => "gap",
            Observable::CentralAmplitude => "u0",
            Observable::MassU => "mass_u",
            Observable::MassW => "mass_w",
            Observable::MassWTilde => "mass_wtilde",
            Observable::TauMinusOne => "tau_minus_1",
            Observable::GradientCorrection => "grad_correction",
            Observable::PairEnergyCorrection => "dpp_correction",
        }
    }
}

impl std::fmt::Display for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Base the exponent pair multiplies out to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RateModel {
    /// value ∼ ε^{eps_power}.
    Power,
    /// value ∼ (ε ln ε)^{eps_power}, so eps_power = log_power.
    EpsLogEps,
    /// value ∼ (ln ε)^{log_power}.
    LogOnly,
    /// value ∼ ε^{eps_power} (ln ε)^{log_power} with distinct powers.
    Mixed,
}

/// One predicted rate, value ∼ ε^{eps_power} · (ln ε)^{log_power}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateEntry {
    /// Observable the law applies to.
    pub observable: Observable,
    /// Classification of the (eps_power, log_power) pair.
    pub model: RateModel,
    /// Exponent on ε.
    pub eps_power: f64,
    /// Exponent on ln ε.
    pub log_power: f64,
    /// Dimension regime whose law form the entry carries.
    pub regime: &'static str,
}

/// Predicted-exponent table for one problem instance.
#[derive(Debug, Clone, Serialize)]
pub struct RatePrediction {
    dimension: usize,
    alpha: f64,
    q2: f64,
    sigma: f64,
    entries: Vec<RateEntry>,
}

impl RatePrediction {
    /// Spatial dimension N.
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Riesz order α.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Dominant perturbation exponent q₂.
    pub fn q2(&self) -> f64 {
        self.q2
    }

    /// Balance exponent σ.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// All predicted entries.
    pub fn entries(&self) -> &[RateEntry] {
        &self.entries
    }

    /// Looks up the entry for one observable.
    pub fn entry(&self, observable: Observable) -> Option<&RateEntry> {
        self.entries.iter().find(|e| e.observable == observable)
    }
}

fn classified_entry(
    observable: Observable,
    regime: &'static str,
    eps_power: f64,
    log_power: f64,
) -> RateEntry {
    let model = if log_power == 0.0 {
        RateModel::Power
    } else if eps_power == log_power {
        RateModel::EpsLogEps
    } else if eps_power == 0.0 {
        RateModel::LogOnly
    } else {
        RateModel::Mixed
    };
    RateEntry {
        observable,
        model,
        eps_power,
        log_power,
        regime,
    }
}

/// Predicts the convergence exponent of every tracked observable.
///
/// Exponents come from the dimension-split laws: plain powers of ε for
/// N = 3 and N ≥ 5, composite (ε ln ε) and pure-logarithm bases for N = 4.
/// The energy-level corrections (gradient and critical pair energy) carry
/// the gap exponent, since they enter the least energy at fixed virial
/// balance.
pub fn predict_rates(params: &ProblemParams) -> Result<RatePrediction, AsymptoticsError> {
    let report = params.validate_hypotheses();
    if !report.admissible() {
        return Err(AsymptoticsError::Inadmissible {
            details: report.messages.join("; "),
        });
    }
    let dimension = params.dimension();
    let n = dimension as f64;
    let alpha = params.alpha();
    let q2 = params.q2();
    let a0 = (n + alpha) - (n - 2.0) * q2;
    let bb = 4.0 + (n - 2.0) * q2 - (n + alpha);
    let sigma = a0 / bb;
    let mut entries = Vec::with_capacity(10);
    match dimension {
        3 => {
            let regime = "N=3";
            let d = q2 - 1.0 - alpha;
            let stage = -a0 / (d * bb);
            entries.push(classified_entry(Observable::XiStage, regime, stage, 0.0));
            entries.push(classified_entry(Observable::XiTotal, regime, -1.0 / d, 0.0));
            entries.push(classified_entry(
                Observable::EnergyGap,
                regime,
                -a0 / (2.0 * d),
                0.0,
            ));
            entries.push(classified_entry(
                Observable::CentralAmplitude,
                regime,
                1.0 / (2.0 * d),
                0.0,
            ));
            entries.push(classified_entry(
                Observable::MassWTilde,
                regime,
                a0 / (2.0 * d),
                0.0,
            ));
            let mass_w = -a0 * a0 / (2.0 * d * bb);
            entries.push(classified_entry(Observable::MassW, regime, mass_w, 0.0));
            entries.push(classified_entry(
                Observable::MassU,
                regime,
                -4.0 / bb + mass_w,
                0.0,
            ));
            entries.push(classified_entry(
                Observable::TauMinusOne,
                regime,
                -sigma,
                0.0,
            ));
            entries.push(classified_entry(
                Observable::GradientCorrection,
                regime,
                -a0 / (2.0 * d),
                0.0,
            ));
            entries.push(classified_entry(
                Observable::PairEnergyCorrection,
                regime,
                -a0 / (2.0 * d),
                0.0,
            ));
        }
        4 => {
            let regime = "N=4";
            let lead = -2.0 / bb;
            entries.push(classified_entry(Observable::XiStage, regime, 0.0, lead));
            entries.push(classified_entry(Observable::XiTotal, regime, lead, lead));
            entries.push(classified_entry(
                Observable::EnergyGap,
                regime,
                -sigma,
                -sigma,
            ));
            entries.push(classified_entry(
                Observable::CentralAmplitude,
                regime,
                2.0 / bb,
                2.0 / bb,
            ));
            entries.push(classified_entry(Observable::MassWTilde, regime, 0.0, 1.0));
            entries.push(classified_entry(
                Observable::MassW,
                regime,
                0.0,
                1.0 - 4.0 / bb,
            ));
            entries.push(classified_entry(
                Observable::MassU,
                regime,
                -4.0 / bb,
                1.0 - 4.0 / bb,
            ));
            entries.push(classified_entry(
                Observable::TauMinusOne,
                regime,
                -sigma,
                -sigma,
            ));
            entries.push(classified_entry(
                Observable::GradientCorrection,
                regime,
                -sigma,
                -sigma,
            ));
            entries.push(classified_entry(
                Observable::PairEnergyCorrection,
                regime,
                -sigma,
                -sigma,
            ));
        }
        _ => {
            let regime = "N>=5";
            entries.push(classified_entry(Observable::XiStage, regime, 0.0, 0.0));
            entries.push(classified_entry(
                Observable::XiTotal,
                regime,
                -2.0 / bb,
                0.0,
            ));
            entries.push(classified_entry(Observable::EnergyGap, regime, -sigma, 0.0));
            entries.push(classified_entry(
                Observable::CentralAmplitude,
                regime,
                (n - 2.0) / bb,
                0.0,
            ));
            entries.push(classified_entry(Observable::MassWTilde, regime, 0.0, 0.0));
            entries.push(classified_entry(Observable::MassW, regime, 0.0, 0.0));
            entries.push(classified_entry(
                Observable::MassU,
                regime,
                -4.0 / bb,
                0.0,
            ));
            entries.push(classified_entry(
                Observable::TauMinusOne,
                regime,
                -sigma,
                0.0,
            ));
            entries.push(classified_entry(
                Observable::GradientCorrection,
                regime,
                -sigma,
                0.0,
            ));
            entries.push(classified_entry(
                Observable::PairEnergyCorrection,
                regime,
                -sigma,
                0.0,
            ));
        }
    }
    Ok(RatePrediction {
        dimension,
        alpha,
        q2,
        sigma,
        entries,
    })
}

/// Limiting concentration scale ρ₀ in dimensions five and up.
///
/// Realizes ρ₀ = (b·[(N+α)−(N−2)q₂]/2 · D(W₁^p, W₁^{q₂}) / ‖W₁‖₂²)^{2/B}
/// with B = 4+(N−2)q₂−(N+α), both integrals taken on the supplied grid.
pub fn rho0(
    params: &ProblemParams,
    grid: &RadialGrid,
    kernel: &RieszKernel,
) -> Result<f64, AsymptoticsError> {
    let dimension = params.dimension();
    if dimension < 5 {
        return Err(AsymptoticsError::MassDivergent { dimension });
    }
    check_instruments(params, grid, kernel)?;
    let w1 = closed_forms::extremal_w(grid, params.alpha(), 1.0)?;
    let p = params.p();
    let q2 = params.q2();
    let wp = grid.field_from_values(w1.values().iter().map(|&v| v.powf(p)).collect())?;
    let wq = grid.field_from_values(w1.values().iter().map(|&v| v.powf(q2)).collect())?;
    let pair = kernel.pair_energy(&wp, &wq)?;
    let mass = grid.l2_inner(&w1, &w1)?;
    let n = dimension as f64;
    let alpha = params.alpha();
    let a0 = (n + alpha) - (n - 2.0) * q2;
    let bb = 4.0 + (n - 2.0) * q2 - (n + alpha);
    Ok((params.b() * a0 / 2.0 * pair / mass).powf(2.0 / bb))
}

fn check_instruments(
    params: &ProblemParams,
    grid: &RadialGrid,
    kernel: &RieszKernel,
) -> Result<(), AsymptoticsError> {
    if grid.dimension() != params.dimension() {
        return Err(AsymptoticsError::DimensionMismatch {
            expected: params.dimension(),
            found: grid.dimension(),
        });
    }
    if kernel.grid().grid_id() != grid.grid_id() {
        return Err(AsymptoticsError::GridMismatch {
            kernel_grid: kernel.grid().grid_id(),
            grid: grid.grid_id(),
        });
    }
    if kernel.alpha() != params.alpha() {
        return Err(AsymptoticsError::AlphaMismatch {
            expected: params.alpha(),
            found: kernel.alpha(),
        });
    }
    Ok(())
}

/// Regression base for rate fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FitModel {
    /// Regress ln value on ln ε.
    PowerLaw,
    /// Regress ln value on ln(ε ln ε).
    LogCorrectedPowerLaw,
}

/// Least-squares rate fit, value ≈ prefactor · base^{exponent}.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateFit {
    /// Base the exponent applies to.
    pub model: FitModel,
    /// Fitted slope in log-log coordinates.
    pub exponent: f64,
    /// Multiplicative prefactor exp(intercept).
    pub prefactor: f64,
    /// Coefficient of determination of the log-log regression.
    pub r_squared: f64,
    /// Number of samples used.
    pub samples: usize,
}

/// Diagnostic fit value ≈ prefactor · ε^{eps_exponent} (ln ε)^{log_exponent}.
///
/// Separating the two powers is ill-conditioned on narrow spans; this fit
/// is reported alongside the composite-base fit, never gated on.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FreeLogFit {
    /// Fitted exponent on ε.
    pub eps_exponent: f64,
    /// Fitted exponent on ln ε.
    pub log_exponent: f64,
    /// Multiplicative prefactor exp(intercept).
    pub prefactor: f64,
    /// Coefficient of determination of the regression.
    pub r_squared: f64,
    /// Number of samples used.
    pub samples: usize,
}

const FIT_MIN_SAMPLES: usize = 4;
const FIT_MIN_DECADES: f64 = 1.5;

fn validate_fit_samples(
    samples: &[(f64, f64)],
    needs_log: bool,
) -> Result<(), AsymptoticsError> {
    if samples.len() < FIT_MIN_SAMPLES {
        return Err(AsymptoticsError::InsufficientSamples {
            found: samples.len(),
            minimum: FIT_MIN_SAMPLES,
        });
    }
    for (index, &(eps, value)) in samples.iter().enumerate() {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(AsymptoticsError::NonpositiveSample { index, value: eps });
        }
        if !(value.is_finite() && value > 0.0) {
            return Err(AsymptoticsError::NonpositiveSample { index, value });
        }
        if needs_log && eps <= 1.0 {
            return Err(AsymptoticsError::LogBaseOutOfRange { eps });
        }
    }
    let lo = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.0).fold(0.0_f64, f64::max);
    let decades = (hi / lo).log10();
    if decades < FIT_MIN_DECADES - 1e-12 {
        return Err(AsymptoticsError::SpanTooNarrow {
            decades,
            minimum: FIT_MIN_DECADES,
        });
    }
    Ok(())
}

fn simple_regression(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let fitted = intercept + slope * x;
        ss_res += (y - fitted) * (y - fitted);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    (slope, intercept, r_squared)
}

/// Fits a single-exponent rate law to (ε, value) samples.
pub fn fit_rate(samples: &[(f64, f64)], model: FitModel) -> Result<RateFit, AsymptoticsError> {
    validate_fit_samples(samples, model == FitModel::LogCorrectedPowerLaw)?;
    let xs: Vec<f64> = samples
        .iter()
        .map(|&(eps, _)| match model {
            FitModel::PowerLaw => eps.ln(),
            FitModel::LogCorrectedPowerLaw => (eps * eps.ln()).ln(),
        })
        .collect();
    let ys: Vec<f64> = samples.iter().map(|&(_, v)| v.ln()).collect();
    let (slope, intercept, r_squared) = simple_regression(&xs, &ys);
    Ok(RateFit {
        model,
        exponent: slope,
        prefactor: intercept.exp(),
        r_squared,
        samples: samples.len(),
    })
}

/// Fits separate powers of ε and ln ε to (ε, value) samples.
pub fn fit_rate_free_log(samples: &[(f64, f64)]) -> Result<FreeLogFit, AsymptoticsError> {
    validate_fit_samples(samples, true)?;
    let n = samples.len() as f64;
    let x1: Vec<f64> = samples.iter().map(|&(e, _)| e.ln()).collect();
    let x2: Vec<f64> = samples.iter().map(|&(e, _)| e.ln().ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|&(_, v)| v.ln()).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let (m1, m2, my) = (mean(&x1), mean(&x2), mean(&ys));
    let mut s11 = 0.0;
    let mut s12 = 0.0;
    let mut s22 = 0.0;
    let mut s1y = 0.0;
    let mut s2y = 0.0;
    for i in 0..samples.len() {
        let d1 = x1[i] - m1;
        let d2 = x2[i] - m2;
        let dy = ys[i] - my;
        s11 += d1 * d1;
        s12 += d1 * d2;
        s22 += d2 * d2;
        s1y += d1 * dy;
        s2y += d2 * dy;
    }
    let det = s11 * s22 - s12 * s12;
    if !(det.abs() > 1e-12 * s11.max(1e-300) * s22.max(1e-300)) {
        return Err(AsymptoticsError::DegenerateFit {
            detail: format!("collinear regressors, determinant {det:e}"),
        });
    }
    let eps_exponent = (s1y * s22 - s2y * s12) / det;
    let log_exponent = (s2y * s11 - s1y * s12) / det;
    let intercept = my - eps_exponent * m1 - log_exponent * m2;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for i in 0..samples.len() {
        let fitted = intercept + eps_exponent * x1[i] + log_exponent * x2[i];
        ss_res += (ys[i] - fitted) * (ys[i] - fitted);
        ss_tot += (ys[i] - my) * (ys[i] - my);
    }
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    Ok(FreeLogFit {
        eps_exponent,
        log_exponent,
        prefactor: intercept.exp(),
        r_squared,
        samples: samples.len(),
    })
}

/// Cutoff family driving a test-function expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExpansionFamily {
    /// φ·U_κ: fixed unit-radius cutoff times a concentrating bubble.
    CutoffBubble,
    /// η_l·W₁: widening cutoff times the fixed critical extremal.
    WindowedExtremal,
}

/// One expansion sample at a single scale.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExpansionRow {
    /// Concentration scale κ or window radius l.
    pub scale: f64,
    /// ‖∇v‖₂² minus the limit kinetic reference.
    pub gradient_term: f64,
    /// Squared L² mass of the cutoff profile.
    pub mass: f64,
    /// Critical-critical pair energy D(v^p, v^p); bubble family only.
    pub dpp: Option<f64>,
    /// Critical-perturbation pair energy D(v^p, v^{q₂}); bubble family only.
    pub dpq: Option<f64>,
    /// Perturbation-perturbation pair energy D(v^{q₂}, v^{q₂}); bubble family only.
    pub dqq: Option<f64>,
}

/// Expansion table for one cutoff family.
#[derive(Debug, Clone, Serialize)]
pub struct ExpansionTable {
    /// Cutoff family the rows sample.
    pub family: ExpansionFamily,
    /// Spatial dimension N.
    pub dimension: usize,
    /// Riesz order α.
    pub alpha: f64,
    /// Dominant perturbation exponent used for the D columns.
    pub q2: f64,
    /// Limit kinetic value the gradient column is measured against:
    /// ‖∇U₁‖₂² for the bubble family, ‖∇W₁‖₂² for the windowed family.
    pub reference_kinetic: f64,
    /// One row per requested scale, in input order.
    pub rows: Vec<ExpansionRow>,
}

/// Full-space squared gradient norm of the unit bubble, by adaptive
/// quadrature with an inversion substitution for the tail.
fn bubble_kinetic_reference(dimension: usize) -> f64 {
    let n = dimension as f64;
    let amp = (n * (n - 2.0)).powf((n - 2.0) / 4.0);
    let area = unit_sphere_area(dimension);
    let integrand = move |r: f64| {
        let du = -amp * (n - 2.0) * r * (1.0 + r * r).powf(-n / 2.0);
        du * du * area * r.powf(n - 1.0)
    };
    let head = adaptive_gk15(&mut |r| integrand(r), 0.0, 1.0, 1e-13);
    let tail = adaptive_gk15(&mut |s| integrand(1.0 / s) / (s * s), 0.0, 1.0, 1e-13);
    head + tail
}

/// Evaluates cutoff test functions at the requested scales and tabulates
/// the quantities entering the energy expansions.
///
/// The bubble family uses v = φ·U_κ with φ equal to one on the unit ball
/// and falling smoothly to zero at radius two; its gradient column is
/// measured against the full-space ‖∇U₁‖₂². The windowed family uses
/// v = η_l·W₁ with η_l equal to one inside radius l and vanishing beyond
/// 2l (slope bound 15/(8l)); its gradient column is measured against
/// ‖∇W₁‖₂². Gradients are integrated from the analytic derivative of the
/// cutoff profile, so the columns isolate the cutoff effect rather than
/// finite-difference error.
pub fn testfunction_expansion(
    params: &ProblemParams,
    grid: &RadialGrid,
    kernel: &RieszKernel,
    family: ExpansionFamily,
    scales: &[f64],
) -> Result<ExpansionTable, AsymptoticsError> {
    check_instruments(params, grid, kernel)?;
    if scales.is_empty() {
        return Err(AsymptoticsError::EmptyScales);
    }
    let dimension = grid.dimension();
    let n = dimension as f64;
    let alpha = params.alpha();
    let p = params.p();
    let q2 = params.q2();
    let half = (n - 2.0) / 2.0;
    match family {
        ExpansionFamily::CutoffBubble => {
            if grid.rmax() < 2.0 {
                return Err(AsymptoticsError::TruncationTooSmall {
                    rmax: grid.rmax(),
                    needed: 2.0,
                });
            }
            let lower = 10.0 * grid.spacings()[0];
            let upper = 0.5;
            for &kappa in scales {
                if !(kappa >= lower && kappa <= upper) {
                    return Err(AsymptoticsError::ScaleOutOfRange {
                        scale: kappa,
                        lower,
                        upper,
                    });
                }
            }
            let reference = bubble_kinetic_reference(dimension);
            let amp = (n * (n - 2.0)).powf((n - 2.0) / 4.0);
            let rows = scales
                .par_iter()
                .map(|&kappa| -> Result<ExpansionRow, AsymptoticsError> {
                    let value = |r: f64| {
                        let (s, _) = smoothstep01(r - 1.0);
                        let phi = 1.0 - s;
                        if phi == 0.0 {
                            0.0
                        } else {
                            phi * amp * (kappa / (kappa * kappa + r * r)).powf(half)
                        }
                    };
                    let derivative = |r: f64| {
                        let (s, ds) = smoothstep01(r - 1.0);
                        let phi = 1.0 - s;
                        if phi == 0.0 && ds == 0.0 {
                            return 0.0;
                        }
                        let base = amp * (kappa / (kappa * kappa + r * r)).powf(half);
                        let dbase = -amp
                            * (n - 2.0)
                            * r
                            * kappa.powf(half)
                            * (kappa * kappa + r * r).powf(-n / 2.0);
                        phi * dbase - ds * base
                    };
                    let grad_sq = grid.field_from_fn(|r| {
                        let d = derivative(r);
                        d * d
                    });
                    let grad = grid.integrate(&grad_sq)?;
                    let v = grid.field_from_fn(value);
                    let mass = grid.l2_inner(&v, &v)?;
                    let vp = grid
                        .field_from_values(v.values().iter().map(|&x| x.powf(p)).collect())?;
                    let vq = grid
                        .field_from_values(v.values().iter().map(|&x| x.powf(q2)).collect())?;
                    Ok(ExpansionRow {
                        scale: kappa,
                        gradient_term: grad - reference,
                        mass,
                        dpp: Some(kernel.pair_energy(&vp, &vp)?),
                        dpq: Some(kernel.pair_energy(&vp, &vq)?),
                        dqq: Some(kernel.pair_energy(&vq, &vq)?),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ExpansionTable {
                family,
                dimension,
                alpha,
                q2,
                reference_kinetic: reference,
                rows,
            })
        }
        ExpansionFamily::WindowedExtremal => {
            let lower = 4.0;
            let upper = grid.rmax() / 4.0;
            if upper < lower {
                return Err(AsymptoticsError::TruncationTooSmall {
                    rmax: grid.rmax(),
                    needed: 16.0,
                });
            }
            for &l in scales {
                if !(l >= lower && l <= upper) {
                    return Err(AsymptoticsError::ScaleOutOfRange {
                        scale: l,
                        lower,
                        upper,
                    });
                }
            }
            let ratio = closed_forms::extremal_amplitude_ratio(dimension, alpha);
            let c_amp = ratio * (n * (n - 2.0)).powf((n - 2.0) / 4.0);
            let reference = ratio * ratio * bubble_kinetic_reference(dimension);
            let rows = scales
                .par_iter()
                .map(|&l| -> Result<ExpansionRow, AsymptoticsError> {
                    let derivative = |r: f64| {
                        let (s, ds) = smoothstep01((r - l) / l);
                        let eta = 1.0 - s;
                        if eta == 0.0 && ds == 0.0 {
                            return 0.0;
                        }
                        let base = c_amp * (1.0 + r * r).powf(-half);
                        let dbase = -c_amp * (n - 2.0) * r * (1.0 + r * r).powf(-n / 2.0);
                        eta * dbase - ds / l * base
                    };
                    let grad_sq = grid.field_from_fn(|r| {
                        let d = derivative(r);
                        d * d
                    });
                    let grad = grid.integrate(&grad_sq)?;
                    let v = grid.field_from_fn(|r| {
                        let (s, _) = smoothstep01((r - l) / l);
                        (1.0 - s) * c_amp * (1.0 + r * r).powf(-half)
                    });
                    let mass = grid.l2_inner(&v, &v)?;
                    Ok(ExpansionRow {
                        scale: l,
                        gradient_term: grad - reference,
                        mass,
                        dpp: None,
                        dpq: None,
                        dqq: None,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ExpansionTable {
                family,
                dimension,
                alpha,
                q2,
                reference_kinetic: reference,
                rows,
            })
        }
    }
}

/// Exact rational scalar for exponent identities.
pub type ExactRatio = Ratio<i128>;

/// Exponent pair (power of ε, power of ln ε) in exact arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactPair {
    /// Exponent on ε.
    pub eps_power: ExactRatio,
    /// Exponent on ln ε.
    pub log_power: ExactRatio,
}

impl ExactPair {
    /// Converts both components to f64.
    pub fn as_f64(&self) -> (f64, f64) {
        (ratio_to_f64(self.eps_power), ratio_to_f64(self.log_power))
    }
}

/// Converts an exact rational to f64.
pub fn ratio_to_f64(r: ExactRatio) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Exact exponent table with the defining chain identities verified.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactRateTable {
    /// Balance exponent σ.
    pub sigma: ExactRatio,
    /// Stage concentration scale of the normalized profile.
    pub xi_stage: ExactPair,
    /// Total concentration scale of the original solution.
    pub xi_total: ExactPair,
    /// Energy gap m_∞ − m_ε.
    pub gap: ExactPair,
    /// Squared mass of the concentration-normalized profile.
    pub mass_wtilde: ExactPair,
    /// Squared mass of the normalized profile.
    pub mass_w: ExactPair,
    /// Squared mass of the original solution.
    pub mass_u: ExactPair,
    /// Central amplitude u(0).
    pub central_amplitude: ExactPair,
}

fn exact_int(v: i128) -> ExactRatio {
    ExactRatio::from_integer(v)
}

/// Builds the exact exponent table and verifies every chain identity in
/// integer arithmetic:
///
/// 1. the balance relation ε^{−σ} = ε₁^{−1} ε₂^{q₂},
/// 2. the stage decomposition ξ_total = ε^{−(1+σ)/2} · ξ_stage,
/// 3. the gap chain (gap exponent from ε^{−σ} · ξ_stage^{a₀/2}),
/// 4. the mass chain σ/2 + |stage| = a₀/(2d) in dimension three,
///
/// where a₀ = (N+α)−(N−2)q₂ and d = q₂−1−α. Any mismatch is reported as
/// an identity violation rather than silently returned.
pub fn exact_rate_table(
    dimension: usize,
    alpha: ExactRatio,
    q2: ExactRatio,
) -> Result<ExactRateTable, AsymptoticsError> {
    if dimension < 3 {
        return Err(AsymptoticsError::Inadmissible {
            details: format!("dimension {dimension} is below 3"),
        });
    }
    let zero = exact_int(0);
    let one = exact_int(1);
    let two = exact_int(2);
    let four = exact_int(4);
    let n = exact_int(dimension as i128);
    if !(alpha > zero && alpha < n) {
        return Err(AsymptoticsError::Inadmissible {
            details: format!("alpha {alpha} outside (0, {dimension})"),
        });
    }
    let lower = (n + alpha) / n;
    let upper = (n + alpha) / (n - two);
    let floor = match dimension {
        3 => lower.max(two).max(one + alpha),
        4 => lower.max(two),
        _ => lower,
    };
    if !(q2 > floor && q2 < upper) {
        return Err(AsymptoticsError::Inadmissible {
            details: format!("q2 {q2} outside the admissible interval ({floor}, {upper})"),
        });
    }
    let a0 = n + alpha - (n - two) * q2;
    let bb = four + (n - two) * q2 - (n + alpha);
    let sigma = a0 / bb;
    let half_growth = (one + sigma) / two;

    let violated = |name: &str| AsymptoticsError::IdentityViolation {
        identity: name.to_string(),
    };

    // Balance relation: the ε-exponent of ε₁^{-1} ε₂^{q₂} equals −σ.
    let relation_rhs = -(n + alpha) * (one + sigma) / four + q2 * (n - two) * (one + sigma) / four;
    if relation_rhs != -sigma {
        return Err(violated("balance relation"));
    }

    let d3 = q2 - one - alpha;
    let xi_stage = match dimension {
        3 => ExactPair {
            eps_power: -a0 / (d3 * bb),
            log_power: zero,
        },
        4 => ExactPair {
            eps_power: zero,
            log_power: -two / bb,
        },
        _ => ExactPair {
            eps_power: zero,
            log_power: zero,
        },
    };
    let xi_total = match dimension {
        3 => ExactPair {
            eps_power: -one / d3,
            log_power: zero,
        },
        4 => ExactPair {
            eps_power: -two / bb,
            log_power: -two / bb,
        },
        _ => ExactPair {
            eps_power: -two / bb,
            log_power: zero,
        },
    };
    let composed = ExactPair {
        eps_power: -half_growth + xi_stage.eps_power,
        log_power: xi_stage.log_power,
    };
    if composed != xi_total {
        return Err(violated("stage decomposition"));
    }

    let gap = match dimension {
        3 => ExactPair {
            eps_power: -a0 / (two * d3),
            log_power: zero,
        },
        4 => ExactPair {
            eps_power: -sigma,
            log_power: -sigma,
        },
        _ => ExactPair {
            eps_power: -sigma,
            log_power: zero,
        },
    };
    let gap_chain = ExactPair {
        eps_power: -sigma + xi_stage.eps_power * a0 / two,
        log_power: xi_stage.log_power * a0 / two,
    };
    if gap_chain != gap {
        return Err(violated("gap chain"));
    }

    let mass_wtilde = match dimension {
        3 => ExactPair {
            eps_power: a0 / (two * d3),
            log_power: zero,
        },
        4 => ExactPair {
            eps_power: zero,
            log_power: one,
        },
        _ => ExactPair {
            eps_power: zero,
            log_power: zero,
        },
    };
    if dimension == 3 && sigma / two - xi_stage.eps_power != mass_wtilde.eps_power {
        return Err(violated("mass chain"));
    }

    let mass_w = ExactPair {
        eps_power: two * xi_stage.eps_power + mass_wtilde.eps_power,
        log_power: two * xi_stage.log_power + mass_wtilde.log_power,
    };
    let mass_u = ExactPair {
        eps_power: -two * half_growth + mass_w.eps_power,
        log_power: mass_w.log_power,
    };
    let central_amplitude = ExactPair {
        eps_power: (n - two) * half_growth / two - (n - two) / two * xi_stage.eps_power,
        log_power: -(n - two) / two * xi_stage.log_power,
    };

    Ok(ExactRateTable {
        sigma,
        xi_stage,
        xi_total,
        gap,
        mass_wtilde,
        mass_w,
        mass_u,
        central_amplitude,
    })
}
