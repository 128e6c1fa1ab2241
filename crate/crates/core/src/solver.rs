//! Ground-state solver and stage diagnostics for the working-scale equation.
//!
//! Features:
//! - preconditioned descent that keeps every iterate on the scalar fibering manifold
//! - frequency-adapted truncated grids with a linearly resolved core
//! - stage rescaling among the four profile normalizations with algebraic tail extension
//! - Kelvin inversion, measured concentration scales, and weighted decay witnesses

use serde::Serialize;

use crate::asymptotics::{rho0, scaling_schedule, AsymptoticsError, ScalingSchedule};
use crate::closed_forms::{
    bubble_amplitude, extremal_amplitude_ratio, extremal_w, limit_action_level, ClosedFormsError,
};
use crate::functionals::{
    fibering_expansion, ConstraintResidual, EnergyBreakdown, FunctionalsError,
};
use crate::problem::{ProblemError, ProblemParams};
use crate::radial_core::{build_grid, GridLayout, RadialCoreError, RadialField, RadialGrid};
use crate::riesz::{build_kernel, RieszError};

/// Errors produced while solving for a ground state or moving between stages.
#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    /// The coefficient data violates the standing hypotheses.
    #[error("parameters are outside the admissible range: {details}")]
    Inadmissible { details: String },
    /// The requested frequency is not a positive finite number.
    #[error("frequency must be positive and finite, got {eps}")]
    InvalidFrequency { eps: f64 },
    /// A configuration field is outside its allowed range.
    #[error("configuration rejected: {detail}")]
    ConfigInvalid { detail: String },
    /// The descent iteration degenerated to the zero field.
    #[error("descent collapsed to the zero field at frequency {eps}")]
    CollapsedToZero { eps: f64 },
    /// A stage change involving the recentered profile needs an explicit scale.
    #[error("stage change involving the recentered profile needs an explicit scale factor")]
    XiRequired,
    /// A scale factor must be positive and finite.
    #[error("scale factor must be positive and finite, got {value}")]
    ScaleNotPositive { value: f64 },
    /// The central amplitude of the profile is not positive.
    #[error("central amplitude must be positive, got {value}")]
    AmplitudeNotPositive { value: f64 },
    /// Parameter validation failed.
    #[error("problem data rejected: {0}")]
    Problem(#[from] ProblemError),
    /// A grid or field operation failed.
    #[error("grid operation failed: {0}")]
    Field(#[from] RadialCoreError),
    /// A kernel operation failed.
    #[error("kernel operation failed: {0}")]
    Kernel(#[from] RieszError),
    /// A functional evaluation failed.
    #[error("functional evaluation failed: {0}")]
    Functionals(#[from] FunctionalsError),
    /// A schedule computation failed.
    #[error("schedule computation failed: {0}")]
    Asymptotics(#[from] AsymptoticsError),
    /// A closed-form evaluation failed.
    #[error("closed-form evaluation failed: {0}")]
    ClosedForms(#[from] ClosedFormsError),
}

/// Discretization and iteration settings for one ground-state solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    /// Number of grid intervals.
    intervals: usize,
    /// Truncation radius as a multiple of the screening length.
    truncation_coefficient: f64,
    /// Radius of the linearly spaced core region.
    core_radius: f64,
    /// Fraction of the intervals placed inside the core.
    core_fraction: f64,
    /// Iteration budget for the descent loop.
    max_iters: usize,
    /// Relative preconditioned-gradient threshold declaring convergence.
    tol_grad: f64,
    /// Relative constraint-residual threshold entering the converged flag.
    tol_constraint: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig::new()
    }
}

impl SolverConfig {
    /// Default settings sized for production sweeps.
    pub fn new() -> Self {
        SolverConfig {
            intervals: 1024,
            truncation_coefficient: 25.0,
            core_radius: 2.0,
            core_fraction: 0.55,
            max_iters: 2000,
            tol_grad: 1e-7,
            tol_constraint: 1e-6,
        }
    }

    /// Replaces the interval count.
    pub fn with_intervals(mut self, intervals: usize) -> Self {
        self.intervals = intervals;
        self
    }

    /// Replaces the truncation radius multiple of the screening length.
    pub fn with_truncation_coefficient(mut self, coefficient: f64) -> Self {
        self.truncation_coefficient = coefficient;
        self
    }

    /// Replaces the linear-core geometry.
    pub fn with_core(mut self, core_radius: f64, core_fraction: f64) -> Self {
        self.core_radius = core_radius;
        self.core_fraction = core_fraction;
        self
    }

    /// Replaces the iteration budget.
    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    /// Replaces both convergence thresholds.
    pub fn with_tolerances(mut self, tol_grad: f64, tol_constraint: f64) -> Self {
        self.tol_grad = tol_grad;
        self.tol_constraint = tol_constraint;
        self
    }

    /// Number of grid intervals.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Truncation radius multiple of the screening length.
    pub fn truncation_coefficient(&self) -> f64 {
        self.truncation_coefficient
    }

    /// Radius of the linearly spaced core region.
    pub fn core_radius(&self) -> f64 {
        self.core_radius
    }

    /// Fraction of the intervals placed inside the core.
    pub fn core_fraction(&self) -> f64 {
        self.core_fraction
    }

    /// Iteration budget for the descent loop.
    pub fn max_iters(&self) -> usize {
        self.max_iters
    }

    /// Relative preconditioned-gradient threshold.
    pub fn tol_grad(&self) -> f64 {
        self.tol_grad
    }

    /// Relative constraint-residual threshold.
    pub fn tol_constraint(&self) -> f64 {
        self.tol_constraint
    }

    fn validate(&self) -> Result<(), SolverError> {
        let tol_ok = |t: f64| t.is_finite() && t > 0.0 && t <= 1e-3;
        if !tol_ok(self.tol_grad) {
            return Err(SolverError::ConfigInvalid {
                detail: format!("tol_grad must lie in (0, 1e-3], got {}", self.tol_grad),
            });
        }
        if !tol_ok(self.tol_constraint) {
            return Err(SolverError::ConfigInvalid {
                detail: format!(
                    "tol_constraint must lie in (0, 1e-3], got {}",
                    self.tol_constraint
                ),
            });
        }
        if self.max_iters < 100 {
            return Err(SolverError::ConfigInvalid {
                detail: format!("max_iters must be at least 100, got {}", self.max_iters),
            });
        }
        if self.intervals < 64 {
            return Err(SolverError::ConfigInvalid {
                detail: format!("intervals must be at least 64, got {}", self.intervals),
            });
        }
        if !(self.truncation_coefficient.is_finite() && self.truncation_coefficient > 0.0) {
            return Err(SolverError::ConfigInvalid {
                detail: format!(
                    "truncation_coefficient must be positive, got {}",
                    self.truncation_coefficient
                ),
            });
        }
        if !(self.core_radius.is_finite() && self.core_radius > 0.0) {
            return Err(SolverError::ConfigInvalid {
                detail: format!("core_radius must be positive, got {}", self.core_radius),
            });
        }
        if !(self.core_fraction > 0.0 && self.core_fraction < 1.0) {
            return Err(SolverError::ConfigInvalid {
                detail: format!(
                    "core_fraction must lie in (0, 1), got {}",
                    self.core_fraction
                ),
            });
        }
        Ok(())
    }
}

/// The four profile normalizations linked by the concentration schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Original profile at the given frequency.
    U,
    /// Frequency-one profile reached by the square-root dilation.
    V,
    /// Working profile at the full concentration scale.
    W,
    /// Working profile recentered by an explicit scale factor.
    WTilde,
}

/// Amplitude and dilation factors placing a stage inside the original profile,
/// so that u(x) = amp * stage(dil * x).
fn stage_map(
    schedule: &ScalingSchedule,
    dimension: usize,
    stage: Stage,
    xi: Option<f64>,
) -> Result<(f64, f64), SolverError> {
    let half_dim = (dimension as f64 - 2.0) / 2.0;
    let pair = match stage {
        Stage::U => (1.0, 1.0),
        Stage::V => (
            schedule.eps().powf(half_dim / 2.0),
            schedule.eps().sqrt(),
        ),
        Stage::W => (schedule.eps2(), schedule.mu()),
        Stage::WTilde => {
            let xi = xi.ok_or(SolverError::XiRequired)?;
            if !(xi.is_finite() && xi > 0.0) {
                return Err(SolverError::ScaleNotPositive { value: xi });
            }
            (
                schedule.eps2() * xi.powf(-half_dim),
                schedule.mu() / xi,
            )
        }
    };
    Ok(pair)
}

/// Shape-preserving cubic interpolant with an algebraic extension past the last node.
struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
    /// Decay power of the algebraic tail used beyond the last node.
    tail_power: f64,
    /// Coefficient of the tail law value(r) = coefficient * r^(-tail_power).
    tail_coefficient: f64,
}

fn endpoint_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d * m0 <= 0.0 {
        0.0
    } else if m0 * m1 <= 0.0 && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

impl MonotoneCubic {
    /// Builds the interpolant; the tail anchors at the last strictly positive sample.
    fn build(xs: &[f64], ys: &[f64], tail_power: f64) -> MonotoneCubic {
        let n = xs.len();
        let mut slopes = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            slopes.push((ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]));
        }
        let mut ds = vec![0.0; n];
        if n == 2 {
            ds[0] = slopes[0];
            ds[1] = slopes[0];
        } else {
            ds[0] = endpoint_slope(xs[1] - xs[0], xs[2] - xs[1], slopes[0], slopes[1]);
            ds[n - 1] = endpoint_slope(
                xs[n - 1] - xs[n - 2],
                xs[n - 2] - xs[n - 3],
                slopes[n - 2],
                slopes[n - 3],
            );
            for i in 1..n - 1 {
                let m0 = slopes[i - 1];
                let m1 = slopes[i];
                if m0 * m1 <= 0.0 {
                    ds[i] = 0.0;
                } else {
                    let h0 = xs[i] - xs[i - 1];
                    let h1 = xs[i + 1] - xs[i];
                    let w1 = 2.0 * h1 + h0;
                    let w2 = h1 + 2.0 * h0;
                    ds[i] = (w1 + w2) / (w1 / m0 + w2 / m1);
                }
            }
        }
        let mut tail_coefficient = 0.0;
        for i in (0..n).rev() {
            if ys[i] > 0.0 {
                tail_coefficient = ys[i] * xs[i].powf(tail_power);
                break;
            }
        }
        MonotoneCubic {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            ds,
            tail_power,
            tail_coefficient,
        }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x > self.xs[n - 1] {
            if self.tail_coefficient == 0.0 {
                return 0.0;
            }
            return self.tail_coefficient * x.powf(-self.tail_power);
        }
        let mut k = self.xs.partition_point(|&v| v <= x);
        if k > 0 {
            k -= 1;
        }
        if k > n - 2 {
            k = n - 2;
        }
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let omt = 1.0 - t;
        let h00 = (1.0 + 2.0 * t) * omt * omt;
        let h10 = t * omt * omt;
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        self.ys[k] * h00 + h * self.ds[k] * h10 + self.ys[k + 1] * h01 + h * self.ds[k + 1] * h11
    }
}

fn scaled_field(grid: &RadialGrid, field: &RadialField, t: f64) -> Result<RadialField, SolverError> {
    let values = field.values().iter().map(|&v| t * v).collect();
    Ok(grid.field_from_values(values)?)
}

/// Critical point of the amplitude and dilation family through a fixed field.
///
/// Newton iteration in logarithmic variables drives both family derivatives,
/// the scalar identity and the virial balance, to zero simultaneously.
/// Returns None when the family Hessian is numerically singular.
fn symmetry_polish(
    n: f64,
    alpha: f64,
    kinetic: f64,
    delta_mass: f64,
    exponents: &[f64],
    coefficients: &[f64],
    pairs: &[Vec<f64>],
) -> Option<(f64, f64)> {
    let count = exponents.len();
    let mut u = 0.0f64;
    let mut v = 0.0f64;
    for _ in 0..80 {
        let s = u.exp();
        let t = v.exp();
        let quad_k = t.powf(n - 2.0) * kinetic * s * s;
        let quad_m = t.powf(n) * delta_mass * s * s;
        let t_na = t.powf(n + alpha);
        let mut sum0 = 0.0;
        let mut sum1 = 0.0;
        let mut sum2 = 0.0;
        for i in 0..count {
            for j in 0..count {
                let e = exponents[i] + exponents[j];
                let c = coefficients[i] * coefficients[j] * pairs[i][j] * s.powf(e) * t_na;
                sum0 += c;
                sum1 += 0.5 * e * c;
                sum2 += 0.5 * e * e * c;
            }
        }
        let n_res = (quad_k + quad_m) - sum1;
        let p_res = 0.5 * ((n - 2.0) * quad_k + n * quad_m) - 0.5 * (n + alpha) * sum0;
        let scale = quad_k.abs() + quad_m.abs() + sum0.abs();
        if scale <= 0.0 {
            return None;
        }
        if n_res.abs() <= 1e-15 * scale && p_res.abs() <= 1e-15 * scale {
            return Some((s, t));
        }
        let h_uu = 2.0 * (quad_k + quad_m) - sum2;
        let h_uv = (n - 2.0) * quad_k + n * quad_m - (n + alpha) * sum1;
        let h_vv = 0.5 * ((n - 2.0) * (n - 2.0) * quad_k + n * n * quad_m)
            - 0.5 * (n + alpha) * (n + alpha) * sum0;
        let det = h_uu * h_vv - h_uv * h_uv;
        if det.abs() <= 1e-12 * (h_uu.abs() * h_vv.abs() + h_uv * h_uv + f64::MIN_POSITIVE) {
            return None;
        }
        let du = (-(h_vv * n_res - h_uv * p_res) / det).clamp(-0.25, 0.25);
        let dv = ((h_uv * n_res - h_uu * p_res) / det).clamp(-0.25, 0.25);
        u += du;
        v += dv;
        if du.abs() < 1e-16 && dv.abs() < 1e-16 {
            return Some((u.exp(), v.exp()));
        }
    }
    None
}

/// Converged ground-state record at one frequency in the working normalization.
#[derive(Debug, Clone)]
pub struct GroundState {
    params: ProblemParams,
    schedule: ScalingSchedule,
    grid: RadialGrid,
    w: RadialField,
    breakdown: EnergyBreakdown,
    limit_level: f64,
    nehari: ConstraintResidual,
    pohozaev: ConstraintResidual,
    tau_value: f64,
    mass_w: f64,
    mass_v: f64,
    mass_u: f64,
    mass_wtilde: f64,
    u0: f64,
    xi_stage: f64,
    xi_total: f64,
    gradient_norm: f64,
    clamp_inactive: bool,
    iterations: usize,
    converged: bool,
    energy_history: Vec<f64>,
}

impl GroundState {
    /// Problem data used for the solve.
    pub fn params(&self) -> &ProblemParams {
        &self.params
    }

    /// Frequency of the solve.
    pub fn eps(&self) -> f64 {
        self.schedule.eps()
    }

    /// Concentration schedule at this frequency.
    pub fn schedule(&self) -> &ScalingSchedule {
        &self.schedule
    }

    /// Grid carrying the working profile.
    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    /// Working-scale profile.
    pub fn profile(&self) -> &RadialField {
        &self.w
    }

    /// Working-scale energy breakdown at the final iterate.
    pub fn breakdown(&self) -> &EnergyBreakdown {
        &self.breakdown
    }

    /// Working-scale action level of the final iterate.
    pub fn m_eps(&self) -> f64 {
        self.breakdown.total
    }

    /// Action level of the dilation-invariant limit problem on the same grid.
    pub fn limit_level(&self) -> f64 {
        self.limit_level
    }

    /// Distance from the limit level, positive when the state sits below it.
    pub fn energy_gap(&self) -> f64 {
        self.limit_level - self.breakdown.total
    }

    /// Stationarity residual of the scalar constraint.
    pub fn nehari(&self) -> &ConstraintResidual {
        &self.nehari
    }

    /// Stationarity residual of the dilation constraint.
    pub fn pohozaev(&self) -> &ConstraintResidual {
        &self.pohozaev
    }

    /// Kinetic-to-critical-pair balance ratio of the final iterate.
    pub fn tau(&self) -> f64 {
        self.tau_value
    }

    /// Squared L2 norm of the working profile.
    pub fn mass_w(&self) -> f64 {
        self.mass_w
    }

    /// Squared L2 norm of the frequency-one profile.
    pub fn mass_v(&self) -> f64 {
        self.mass_v
    }

    /// Squared L2 norm of the original profile.
    pub fn mass_u(&self) -> f64 {
        self.mass_u
    }

    /// Squared L2 norm of the recentered profile at the measured stage scale.
    pub fn mass_wtilde(&self) -> f64 {
        self.mass_wtilde
    }

    /// Central amplitude of the original profile.
    pub fn central_amplitude(&self) -> f64 {
        self.u0
    }

    /// Stage scale matching the working profile's center to the limit extremal.
    pub fn xi_stage(&self) -> f64 {
        self.xi_stage
    }

    /// Total concentration scale measured from the central amplitude.
    pub fn xi_measured(&self) -> f64 {
        self.xi_total
    }

    /// Final relative preconditioned-gradient norm.
    pub fn gradient_norm(&self) -> f64 {
        self.gradient_norm
    }

    /// Whether the positivity clamp was inactive at the final iterate.
    pub fn clamp_inactive(&self) -> bool {
        self.clamp_inactive
    }

    /// Number of accepted descent steps.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Whether gradient and constraint thresholds were met.
    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Action values of the accepted iterates in order.
    pub fn energy_history(&self) -> &[f64] {
        &self.energy_history
    }
}

/// Solves for the working-scale ground state at one frequency from a cold seed.
pub fn solve_ground_state(
    params: &ProblemParams,
    eps: f64,
    config: &SolverConfig,
) -> Result<GroundState, SolverError> {
    solve_impl(params, eps, config, None)
}

/// Solves at one frequency reusing a previously solved profile as the seed.
pub fn solve_ground_state_from(
    params: &ProblemParams,
    eps: f64,
    config: &SolverConfig,
    warm: &GroundState,
) -> Result<GroundState, SolverError> {
    solve_impl(params, eps, config, Some(warm))
}

fn solve_impl(
    params: &ProblemParams,
    eps: f64,
    config: &SolverConfig,
    warm: Option<&GroundState>,
) -> Result<GroundState, SolverError> {
    config.validate()?;
    let report = params.validate_hypotheses();
    if !report.admissible() {
        return Err(SolverError::Inadmissible {
            details: report.messages.join("; "),
        });
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(SolverError::InvalidFrequency { eps });
    }

    let dimension = params.dimension();
    let alpha = params.alpha();
    let n = dimension as f64;
    let schedule = scaling_schedule(params, eps)?;
    let delta = schedule.delta();
    let rmax = config.truncation_coefficient / delta.sqrt();
    let core_radius = config.core_radius.min(0.5 * rmax);
    let grid = build_grid(
        dimension,
        rmax,
        config.intervals,
        GridLayout::LogUniformWithLinearCore {
            core_radius,
            core_fraction: config.core_fraction,
        },
    )?;
    let kernel = build_kernel(&grid, alpha)?;
    let working = schedule.working_terms(params)?;
    let p = params.p();
    let m = grid.intervals();

    let mut w = match warm {
        Some(previous) => {
            let interp = MonotoneCubic::build(
                previous.grid().nodes(),
                previous.profile().values(),
                n - 2.0,
            );
            grid.field_from_fn(|r| interp.eval(r))
        }
        None => {
            let rho = if dimension >= 5 {
                rho0(params, &grid, &kernel)?
            } else {
                1.0
            };
            extremal_w(&grid, alpha, rho)?
        }
    };
    {
        let values = w.values_mut();
        for v in values.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        values[m] = 0.0;
    }

    let expansion = match fibering_expansion(params, eps, &kernel, &w) {
        Err(FunctionalsError::ZeroField) => {
            return Err(SolverError::CollapsedToZero { eps });
        }
        other => other?,
    };
    let (t0, mut j_current) = expansion.maximize_scalar()?;
    let mut w = scaled_field(&grid, &w, t0)?;

    let weights = grid.weights().to_vec();
    let volumes = grid.volumes().to_vec();
    let stiffness: Vec<f64> = (0..m)
        .map(|i| grid.faces()[i] / grid.spacings()[i])
        .collect();

    // Preconditioned gradient of the working action at a nonnegative field.
    let compute_direction = |field: &RadialField| -> Result<(RadialField, f64), SolverError> {
        let wv = field.values();
        let len = wv.len();
        let mut composite = vec![0.0; len];
        let mut composite_prime = vec![0.0; len];
        for (i, &s) in wv.iter().enumerate() {
            let mut f = s.powf(p);
            let mut fp = p * s.powf(p - 1.0);
            for term in &working {
                f += term.c * s.powf(term.q);
                fp += term.c * term.q * s.powf(term.q - 1.0);
            }
            composite[i] = f;
            composite_prime[i] = fp;
        }
        let composite_field = grid.field_from_values(composite)?;
        let potential = kernel.apply(&composite_field)?;
        let pv = potential.values();
        let mut strong = vec![0.0; len];
        for j in 0..len {
            let left = if j > 0 {
                stiffness[j - 1] * (wv[j] - wv[j - 1])
            } else {
                0.0
            };
            let right = if j < m {
                stiffness[j] * (wv[j + 1] - wv[j])
            } else {
                0.0
            };
            let weighted =
                (left - right) + delta * weights[j] * wv[j] - weights[j] * composite_prime[j] * pv[j];
            strong[j] = weighted / volumes[j];
        }
        let strong_field = grid.field_from_values(strong)?;
        let direction = grid.h1_solve(delta, &strong_field)?;
        let dn = (grid.kinetic_energy(&direction)?
            + delta * grid.l2_inner(&direction, &direction)?)
        .sqrt();
        let wn = (grid.kinetic_energy(field)? + delta * grid.l2_inner(field, field)?).sqrt();
        Ok((direction, dn / wn))
    };

    let mut history = Vec::with_capacity(128);
    history.push(j_current);
    let mut iterations = 0usize;
    let mut gradient_norm = f64::INFINITY;
    let mut step = 1.0f64;
    let mut final_direction: Option<RadialField> = None;

    for _ in 0..config.max_iters {
        let (direction, rel) = compute_direction(&w)?;
        gradient_norm = rel;
        if !rel.is_finite() {
            return Err(SolverError::CollapsedToZero { eps });
        }
        if rel < config.tol_grad {
            final_direction = Some(direction);
            break;
        }
        let dv = direction.values().to_vec();
        let mut s = step;
        let mut accepted = false;
        for _ in 0..50 {
            let wv = w.values();
            let mut candidate = vec![0.0; wv.len()];
            let mut nonzero = false;
            for i in 0..wv.len() {
                let c = wv[i] - s * dv[i];
                candidate[i] = if c > 0.0 { c } else { 0.0 };
                if candidate[i] > 0.0 {
                    nonzero = true;
                }
            }
            candidate[m] = 0.0;
            if !nonzero {
                s *= 0.5;
                continue;
            }
            let candidate_field = grid.field_from_values(candidate)?;
            let projected = match fibering_expansion(params, eps, &kernel, &candidate_field) {
                Ok(expansion) => match expansion.maximize_scalar() {
                    Ok(pair) => pair,
                    Err(FunctionalsError::NoInteriorMaximum { .. }) => {
                        s *= 0.5;
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                },
                Err(FunctionalsError::ZeroField) => {
                    s *= 0.5;
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            let (t, j_new) = projected;
            if j_new < j_current {
                w = scaled_field(&grid, &candidate_field, t)?;
                j_current = j_new;
                history.push(j_new);
                iterations += 1;
                step = (s * 1.5).min(8.0);
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if final_direction.is_none() {
        let (direction, rel) = compute_direction(&w)?;
        gradient_norm = rel;
        final_direction = Some(direction);
    }

    let w0 = w.values()[0];
    if !(w0 > 0.0) {
        return Err(SolverError::CollapsedToZero { eps });
    }

    // One unconstrained trial step checks that the positivity clamp is not active.
    let clamp_inactive = {
        let direction = final_direction.expect("direction computed above");
        let dv = direction.values();
        let wv = w.values();
        let floor = -1e-9 * w0;
        (0..m).all(|i| wv[i] - dv[i] >= floor)
    };

    // Action level of the limit problem, in closed gamma form. The gap
    // m_∞ − m_ε shrinks below the extremal's truncated-tail error on this
    // grid (the 1/r tail costs percent-level kinetic energy in dimension
    // three while the massive minimizer converges exponentially inside 25
    // screening lengths), so only the exact level keeps the difference clean.
    let limit_level = limit_action_level(dimension, alpha)?;

    // Exact pair-energy components of the final iterate, one entry per power pair.
    let exponents: Vec<f64> = std::iter::once(p)
        .chain(working.iter().map(|term| term.q))
        .collect();
    let coefficients: Vec<f64> = std::iter::once(1.0)
        .chain(working.iter().map(|term| term.c))
        .collect();
    let count = exponents.len();
    let mut pairs = vec![vec![0.0; count]; count];
    {
        let component_fields: Vec<RadialField> = exponents
            .iter()
            .map(|&e| {
                grid.field_from_values(w.values().iter().map(|&v| v.powf(e)).collect())
            })
            .collect::<Result<_, _>>()?;
        for a in 0..count {
            for b in a..count {
                let d = kernel.pair_energy(&component_fields[a], &component_fields[b])?;
                pairs[a][b] = d;
                pairs[b][a] = d;
            }
        }
    }
    let kinetic_raw = grid.kinetic_energy(&w)?;
    let mass_raw = grid.l2_inner(&w, &w)?;

    // The amplitude and dilation polish moves the iterate within its exact
    // symmetry family to the point where both scalar identities vanish; the
    // dilation acts as an exact grid relabel, so every reported quantity below
    // follows from the pair table by homogeneity.
    let (s_pol, t_pol) = symmetry_polish(
        n,
        alpha,
        kinetic_raw,
        delta * mass_raw,
        &exponents,
        &coefficients,
        &pairs,
    )
    .unwrap_or((1.0, 1.0));
    let grid = grid.scaled(t_pol)?;
    let w = {
        let values = w.values().iter().map(|&v| s_pol * v).collect();
        grid.field_from_values(values)?
    };
    let w0 = s_pol * w0;

    let t_na = t_pol.powf(n + alpha);
    let component = |a: usize, b: usize| -> f64 {
        coefficients[a]
            * coefficients[b]
            * pairs[a][b]
            * s_pol.powf(exponents[a] + exponents[b])
            * t_na
    };
    let kinetic = s_pol * s_pol * t_pol.powf(n - 2.0) * kinetic_raw;
    let mass_w = s_pol * s_pol * t_pol.powf(n) * mass_raw;
    let dpp = component(0, 0);
    let mut dpg = 0.0;
    let mut dgg = 0.0;
    let mut dpgu = 0.0;
    let mut dggu = 0.0;
    for i in 1..count {
        dpg += component(0, i);
        dpgu += exponents[i] * component(0, i);
        for j in 1..count {
            dgg += component(i, j);
            dggu += exponents[j] * component(i, j);
        }
    }
    let total = 0.5 * kinetic + 0.5 * delta * mass_w - 0.5 * (dpp + 2.0 * dpg + dgg);
    let breakdown = EnergyBreakdown {
        kinetic,
        mass: mass_w,
        dpp,
        dpg,
        dgg,
        dpgu,
        dggu,
        total,
    };
    let nehari_signed = kinetic + delta * mass_w - p * (dpp + dpg) - dpgu - dggu;
    let pohozaev_signed = 0.5 * (n - 2.0) * kinetic + 0.5 * n * delta * mass_w
        - 0.5 * (n + alpha) * (dpp + 2.0 * dpg + dgg);
    let nehari = ConstraintResidual {
        signed: nehari_signed,
        relative: nehari_signed / kinetic,
    };
    let pohozaev = ConstraintResidual {
        signed: pohozaev_signed,
        relative: pohozaev_signed / kinetic,
    };
    let tau_value = (n - 2.0) / (n + alpha) * kinetic / dpp;

    let sigma = schedule.sigma();
    let mass_v = eps.powf(-sigma) * mass_w;
    let mass_u = eps.powf(-(1.0 + sigma)) * mass_w;
    let u0 = schedule.eps2() * w0;
    let extremal_center = extremal_amplitude_ratio(dimension, alpha) * bubble_amplitude(dimension);
    let scale_exponent = 2.0 / (n - 2.0);
    let xi_stage = (extremal_center / w0).powf(scale_exponent);
    let xi_total = (extremal_center / u0).powf(scale_exponent);
    let mass_wtilde = mass_w / (xi_stage * xi_stage);

    let grad_ok = gradient_norm < config.tol_grad;
    let constraints_ok = nehari.relative.abs() <= config.tol_constraint
        && pohozaev.relative.abs() <= config.tol_constraint;
    let converged = grad_ok && constraints_ok && clamp_inactive;

    Ok(GroundState {
        params: params.clone(),
        schedule,
        grid,
        w,
        breakdown,
        limit_level,
        nehari,
        pohozaev,
        tau_value,
        mass_w,
        mass_v,
        mass_u,
        mass_wtilde,
        u0,
        xi_stage,
        xi_total,
        gradient_norm,
        clamp_inactive,
        iterations,
        converged,
        energy_history: history,
    })
}

/// Resamples a profile from one stage normalization into another on the same grid.
///
/// A scale factor is required whenever either endpoint is the recentered stage;
/// radii falling past the grid are extended by the algebraic decay law.
pub fn rescale(
    params: &ProblemParams,
    eps: f64,
    grid: &RadialGrid,
    field: &RadialField,
    from: Stage,
    to: Stage,
    xi: Option<f64>,
) -> Result<RadialField, SolverError> {
    grid.check_field(field)?;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(SolverError::InvalidFrequency { eps });
    }
    let schedule = scaling_schedule(params, eps)?;
    let (amp_from, dil_from) = stage_map(&schedule, params.dimension(), from, xi)?;
    let (amp_to, dil_to) = stage_map(&schedule, params.dimension(), to, xi)?;
    let amp = amp_from / amp_to;
    let dil = dil_from / dil_to;
    let interp = MonotoneCubic::build(grid.nodes(), field.values(), params.dimension() as f64 - 2.0);
    Ok(grid.field_from_fn(|r| amp * interp.eval(dil * r)))
}

/// Applies the Kelvin inversion f(r) -> r^(2-N) f(1/r) on the grid.
///
/// The origin node takes the limiting tail coefficient and radii inverting past
/// the grid use the algebraic decay law.
pub fn kelvin(grid: &RadialGrid, field: &RadialField) -> Result<RadialField, SolverError> {
    grid.check_field(field)?;
    let power = grid.dimension() as f64 - 2.0;
    let interp = MonotoneCubic::build(grid.nodes(), field.values(), power);
    Ok(grid.field_from_fn(|r| {
        if r == 0.0 {
            interp.tail_coefficient
        } else {
            r.powf(-power) * interp.eval(1.0 / r)
        }
    }))
}

/// Concentration scale measured from the central amplitude of the original profile.
pub fn measured_scale(state: &GroundState) -> Result<f64, SolverError> {
    let u0 = state.central_amplitude();
    if !(u0.is_finite() && u0 > 0.0) {
        return Err(SolverError::AmplitudeNotPositive { value: u0 });
    }
    let dimension = state.params().dimension();
    let extremal_center =
        extremal_amplitude_ratio(dimension, state.params().alpha()) * bubble_amplitude(dimension);
    Ok((extremal_center / u0).powf(2.0 / (dimension as f64 - 2.0)))
}

/// Weighted decay diagnostics of the recentered profile.
#[derive(Debug, Clone)]
pub struct DecayProfile {
    sup_weighted: f64,
    lower_witness: f64,
    witness_radius: f64,
    profile: RadialField,
}

impl DecayProfile {
    /// Largest value of the algebraically weighted recentered profile.
    pub fn sup_weighted(&self) -> f64 {
        self.sup_weighted
    }

    /// Smallest screened weighted value inside the witness window.
    pub fn lower_witness(&self) -> f64 {
        self.lower_witness
    }

    /// Outer radius of the witness window.
    pub fn witness_radius(&self) -> f64 {
        self.witness_radius
    }

    /// Recentered profile multiplied by the algebraic weight.
    pub fn profile(&self) -> &RadialField {
        &self.profile
    }
}

/// Measures the algebraic decay of the recentered profile at a given stage scale.
pub fn decay_profile(state: &GroundState, xi: f64) -> Result<DecayProfile, SolverError> {
    if !(xi.is_finite() && xi > 0.0) {
        return Err(SolverError::ScaleNotPositive { value: xi });
    }
    let grid = state.grid();
    let power = grid.dimension() as f64 - 2.0;
    let interp = MonotoneCubic::build(grid.nodes(), state.profile().values(), power);
    let amp = xi.powf(power / 2.0);
    let recentered: Vec<f64> = grid.nodes().iter().map(|&r| amp * interp.eval(xi * r)).collect();

    let mut sup_weighted = 0.0f64;
    for (i, &r) in grid.nodes().iter().enumerate() {
        let weighted = recentered[i] * (1.0 + r).powf(power);
        if weighted > sup_weighted {
            sup_weighted = weighted;
        }
    }

    let rate = state.schedule().delta().sqrt() * xi;
    let witness_radius = (1.0 / rate).min(0.8 * grid.rmax()).max(2.0);
    let mut lower_witness = f64::INFINITY;
    for (i, &r) in grid.nodes().iter().enumerate() {
        if r < 1.0 || r > witness_radius {
            continue;
        }
        let screened = recentered[i] * r.powf(power) * (rate * r).exp();
        if screened < lower_witness {
            lower_witness = screened;
        }
    }
    if !lower_witness.is_finite() {
        lower_witness = 0.0;
    }

    let weighted_values: Vec<f64> = grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &r)| recentered[i] * (1.0 + r).powf(power))
        .collect();
    let profile = grid.field_from_values(weighted_values)?;

    Ok(DecayProfile {
        sup_weighted,
        lower_witness,
        witness_radius,
        profile,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_forms::bubble;
    use crate::problem::PowerTerm;
    use crate::radial_core::unit_sphere_area;
    use std::sync::OnceLock;

    fn quintic_params() -> ProblemParams {
        ProblemParams::new(5, 1.0, vec![PowerTerm::new(1.8, 1.0).unwrap()]).unwrap()
    }

    fn fast_config() -> SolverConfig {
        SolverConfig::new()
            .with_intervals(384)
            .with_max_iters(6000)
    }

    fn solved_reference() -> &'static GroundState {
        static CACHE: OnceLock<GroundState> = OnceLock::new();
        CACHE.get_or_init(|| {
            solve_ground_state(&quintic_params(), 100.0, &fast_config())
                .expect("reference solve failed")
        })
    }

    #[test]
    fn converged_state_satisfies_constraints_and_sits_below_the_limit_level() {
        let state = solved_reference();
        assert!(state.converged());
        assert!(state.nehari().relative.abs() < 1e-12);
        assert!(state.pohozaev().relative.abs() < 1e-12);
        assert!(state.m_eps() > 0.0);
        assert!(state.m_eps() < state.limit_level());
        assert!(state.clamp_inactive());
        assert!(state.iterations() < fast_config().max_iters());

        let values = state.profile().values();
        let center = values[0];
        assert!(center > 0.0);
        assert!(values.iter().all(|&v| v >= 0.0));
        for i in 1..values.len() {
            assert!(
                values[i] <= values[i - 1] + 1e-9 * center,
                "profile increases at node {i}"
            );
        }

        let history = state.energy_history();
        assert!(history.len() >= 2);
        for k in 1..history.len() {
            assert!(
                history[k] <= history[k - 1] + 1e-12 * history[0].abs(),
                "energy record increases at step {k}"
            );
        }
    }

    #[test]
    fn warm_continuation_reuses_the_previous_profile() {
        let params = quintic_params();
        let config = fast_config();
        let cold = solve_ground_state(&params, 150.0, &config).unwrap();
        assert!(cold.converged());
        let warm = solve_ground_state_from(&params, 150.0, &config, solved_reference()).unwrap();
        assert!(warm.converged());
        assert!(warm.iterations() <= 3 * cold.iterations().max(1));
        let rel_gap = (warm.m_eps() - cold.m_eps()).abs() / cold.m_eps();
        assert!(rel_gap < 1e-6, "warm and cold levels differ by {rel_gap:e}");
    }

    #[test]
    fn three_dimensional_state_converges_at_moderate_frequency() {
        let params = ProblemParams::new(3, 0.5, vec![PowerTerm::new(2.6, 1.0).unwrap()]).unwrap();
        let state = solve_ground_state(&params, 10.0, &fast_config()).unwrap();
        assert!(state.converged());
        assert!(state.nehari().relative.abs() < 1e-6);
        assert!(state.pohozaev().relative.abs() < 1e-6);
        assert!(state.m_eps() > 0.0);
        assert!(state.m_eps() < state.limit_level());
    }

    #[test]
    fn radial_bounds_hold_for_the_converged_profile() {
        let state = solved_reference();
        let grid = state.grid();
        let values = state.profile().values();
        let dimension = grid.dimension();
        let n = dimension as f64;
        let mass = state.mass_w();
        let l2 = mass.sqrt();
        let ball_volume_unit = unit_sphere_area(dimension) / n;
        let h1 = (grid.kinetic_energy(state.profile()).unwrap() + mass).sqrt();
        let mut max_ratio = 0.0f64;
        for (i, &r) in grid.nodes().iter().enumerate() {
            if r < 1.0 {
                continue;
            }
            let ball_bound = l2 / (ball_volume_unit * r.powf(n)).sqrt();
            assert!(
                values[i] <= ball_bound * (1.0 + 1e-9),
                "ball bound fails at r = {r}"
            );
            let ratio = values[i] * r.powf((n - 1.0) / 2.0) / h1;
            assert!(ratio.is_finite());
            if ratio > max_ratio {
                max_ratio = ratio;
            }
        }
        assert!(max_ratio > 0.0);
        assert!(max_ratio < 10.0, "radial ratio {max_ratio} is unexpectedly large");
    }

    #[test]
    fn rescale_roundtrips_and_preserves_the_stage_identities() {
        let params = quintic_params();
        let eps = 4.0;
        let schedule = scaling_schedule(&params, eps).unwrap();
        let sigma = schedule.sigma();

        // A fine uniform core and a wide smooth field keep the interpolation
        // error below the roundtrip budget on the interior window.
        let fine = build_grid(
            5,
            30.0,
            2048,
            GridLayout::LogUniformWithLinearCore {
                core_radius: 24.0,
                core_fraction: 0.9,
            },
        )
        .unwrap();
        let wide = fine.field_from_fn(|r| (-r * r / 72.0).exp());
        let v_wide = rescale(&params, eps, &fine, &wide, Stage::W, Stage::V, None).unwrap();
        let u_wide = rescale(&params, eps, &fine, &v_wide, Stage::V, Stage::U, None).unwrap();
        let u_direct = rescale(&params, eps, &fine, &wide, Stage::W, Stage::U, None).unwrap();

        let sup_u = u_wide
            .values()
            .iter()
            .fold(0.0f64, |acc, &x| acc.max(x.abs()));
        let interior_limit = 13.0;
        let v_back = rescale(&params, eps, &fine, &u_wide, Stage::U, Stage::V, None).unwrap();
        let u_round = rescale(&params, eps, &fine, &v_back, Stage::V, Stage::U, None).unwrap();
        let mut max_direct_gap = 0.0f64;
        let mut max_roundtrip_gap = 0.0f64;
        for (i, &r) in fine.nodes().iter().enumerate() {
            if r > interior_limit {
                break;
            }
            let direct_gap = (u_wide.values()[i] - u_direct.values()[i]).abs();
            if direct_gap > max_direct_gap {
                max_direct_gap = direct_gap;
            }
            let roundtrip_gap = (u_round.values()[i] - u_wide.values()[i]).abs();
            if roundtrip_gap > max_roundtrip_gap {
                max_roundtrip_gap = roundtrip_gap;
            }
        }
        assert!(
            max_direct_gap <= 1e-8 * sup_u,
            "two-step and direct stage changes differ by {max_direct_gap:e}"
        );
        assert!(
            max_roundtrip_gap <= 1e-8 * sup_u,
            "roundtrip gap {max_roundtrip_gap:e} exceeds the interior budget"
        );

        // The quadrature identities use a narrow field so every rescaled copy
        // stays fully supported inside the truncated ball.
        let grid = &fine;
        let w = grid.field_from_fn(|r| (-r * r / 8.0).exp());
        let v = rescale(&params, eps, grid, &w, Stage::W, Stage::V, None).unwrap();
        let mass_w = grid.l2_inner(&w, &w).unwrap();
        let mass_v = grid.l2_inner(&v, &v).unwrap();
        assert!(
            (eps.powf(sigma) * mass_v / mass_w - 1.0).abs() < 1e-6,
            "frequency-one mass identity fails"
        );

        let xi = 0.7;
        let wt = rescale(&params, eps, grid, &w, Stage::W, Stage::WTilde, Some(xi)).unwrap();
        let mass_wt = grid.l2_inner(&wt, &wt).unwrap();
        assert!(
            (xi * xi * mass_wt / mass_w - 1.0).abs() < 1e-6,
            "recentered mass identity fails"
        );

        let kinetic_w = grid.kinetic_energy(&w).unwrap();
        let kinetic_v = grid.kinetic_energy(&v).unwrap();
        let kinetic_wt = grid.kinetic_energy(&wt).unwrap();
        let dev_v = (kinetic_v / kinetic_w - 1.0).abs();
        let dev_wt = (kinetic_wt / kinetic_w - 1.0).abs();
        assert!(dev_v < 1e-6, "frequency-one kinetic identity off by {dev_v:e}");
        assert!(dev_wt < 1e-6, "recentered kinetic identity off by {dev_wt:e}");
    }

    #[test]
    fn rescale_extends_algebraic_tails_by_the_decay_law() {
        let params = quintic_params();
        let eps = 4.0;
        let grid = build_grid(
            5,
            30.0,
            512,
            GridLayout::LogUniformWithLinearCore {
                core_radius: 2.0,
                core_fraction: 0.6,
            },
        )
        .unwrap();
        let w = extremal_w(&grid, 1.0, 1.0).unwrap();
        let v = rescale(&params, eps, &grid, &w, Stage::W, Stage::V, None).unwrap();

        let schedule = scaling_schedule(&params, eps).unwrap();
        let amp = schedule.eps2() / eps.powf(3.0 / 4.0);
        let dil = schedule.mu() / eps.sqrt();
        let center = w.values()[0];
        let outer = grid.intervals();
        let r_outer = grid.nodes()[outer];
        let exact = amp * center * (1.0 / (1.0 + (dil * r_outer).powi(2))).powf(1.5);
        let got = v.values()[outer];
        assert!(
            (got / exact - 1.0).abs() < 1e-3,
            "tail extension misses the decay law: got {got:e}, want {exact:e}"
        );
    }

    #[test]
    fn kelvin_inversion_fixes_the_bubble_and_inverts_itself() {
        let grid = build_grid(
            5,
            60.0,
            512,
            GridLayout::LogUniformWithLinearCore {
                core_radius: 2.0,
                core_fraction: 0.5,
            },
        )
        .unwrap();
        let u1 = bubble(&grid, 1.0).unwrap();
        let ku1 = kelvin(&grid, &u1).unwrap();
        let sup = u1.values().iter().fold(0.0f64, |a, &x| a.max(x));
        let mut global_gap = 0.0f64;
        let mut interior_gap = 0.0f64;
        for (i, &r) in grid.nodes().iter().enumerate() {
            let gap = (ku1.values()[i] - u1.values()[i]).abs() / sup;
            if gap > global_gap {
                global_gap = gap;
            }
            if (0.05..=5.0).contains(&r) && gap > interior_gap {
                interior_gap = gap;
            }
        }
        assert!(global_gap < 2e-3, "global bubble invariance gap {global_gap:e}");
        assert!(interior_gap < 1e-4, "interior bubble invariance gap {interior_gap:e}");

        let w1 = extremal_w(&grid, 1.0, 1.0).unwrap();
        let kk = kelvin(&grid, &kelvin(&grid, &w1).unwrap()).unwrap();
        let sup_w = w1.values().iter().fold(0.0f64, |a, &x| a.max(x));
        let mut involution_gap = 0.0f64;
        for (i, &r) in grid.nodes().iter().enumerate() {
            if !(0.1..=10.0).contains(&r) {
                continue;
            }
            let gap = (kk.values()[i] - w1.values()[i]).abs() / sup_w;
            if gap > involution_gap {
                involution_gap = gap;
            }
        }
        assert!(involution_gap < 1e-3, "involution gap {involution_gap:e}");

        let kw1 = kelvin(&grid, &w1).unwrap();
        let sup_inner = grid
            .nodes()
            .iter()
            .enumerate()
            .filter(|(_, &r)| r <= 1.0)
            .map(|(i, _)| kw1.values()[i])
            .fold(0.0f64, f64::max);
        let sup_weighted_tail = grid
            .nodes()
            .iter()
            .enumerate()
            .filter(|(_, &r)| r >= 1.0)
            .map(|(i, &r)| w1.values()[i] * r.powf(3.0))
            .fold(0.0f64, f64::max);
        assert!(
            (sup_inner / sup_weighted_tail - 1.0).abs() < 0.05,
            "inversion does not transfer the weighted tail bound"
        );
    }

    #[test]
    fn measured_scale_matches_the_central_amplitude_algebra() {
        let state = solved_reference();
        let xi = measured_scale(state).unwrap();
        assert!(xi > 0.0);
        assert!((xi / state.xi_measured() - 1.0).abs() < 1e-14);

        let extremal_center = extremal_amplitude_ratio(5, 1.0) * bubble_amplitude(5);
        let invariant = xi * state.central_amplitude().powf(2.0 / 3.0);
        let expected = extremal_center.powf(2.0 / 3.0);
        assert!(
            (invariant / expected - 1.0).abs() < 1e-12,
            "scale and amplitude do not compose to the extremal center"
        );

        let stage_ratio =
            state.xi_measured() / (state.xi_stage() * state.schedule().eps2().powf(-2.0 / 3.0));
        assert!((stage_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decay_profile_is_uniformly_bounded_with_a_positive_witness() {
        let state = solved_reference();
        let decay = decay_profile(state, state.xi_stage()).unwrap();
        assert!(decay.sup_weighted().is_finite());
        assert!(decay.sup_weighted() > 0.0);
        assert!(decay.sup_weighted() < 100.0);
        assert!(decay.lower_witness() > 0.0);
        assert!(decay.witness_radius() >= 2.0);
        assert!(decay
            .profile()
            .values()
            .iter()
            .all(|&v| v.is_finite() && v >= 0.0));
    }

    #[test]
    fn weighted_extremal_plateaus_under_the_algebraic_weight() {
        let grid = build_grid(
            5,
            60.0,
            512,
            GridLayout::LogUniformWithLinearCore {
                core_radius: 2.0,
                core_fraction: 0.5,
            },
        )
        .unwrap();
        let w1 = extremal_w(&grid, 1.0, 1.0).unwrap();
        let weighted_at = |target: f64| -> f64 {
            let mut best = f64::INFINITY;
            let mut value = 0.0;
            for (i, &r) in grid.nodes().iter().enumerate() {
                let gap = (r - target).abs();
                if gap < best {
                    best = gap;
                    value = w1.values()[i] * (1.0 + r).powf(3.0);
                }
            }
            value
        };
        let near = weighted_at(30.0);
        let far = weighted_at(58.0);
        assert!(
            (near / far - 1.0).abs() < 0.1,
            "weighted tail drifts between radii: {near} vs {far}"
        );
    }

    #[test]
    fn monotone_resampling_is_shape_preserving() {
        let grid = build_grid(
            5,
            40.0,
            256,
            GridLayout::LogUniformWithLinearCore {
                core_radius: 2.0,
                core_fraction: 0.5,
            },
        )
        .unwrap();
        let w1 = extremal_w(&grid, 1.0, 1.0).unwrap();
        let interp = MonotoneCubic::build(grid.nodes(), w1.values(), 3.0);

        for (i, &r) in grid.nodes().iter().enumerate() {
            let gap = (interp.eval(r) - w1.values()[i]).abs();
            assert!(gap <= 1e-13 * w1.values()[0], "node value not reproduced at r = {r}");
        }

        let samples = 4096;
        let mut previous = f64::INFINITY;
        for k in 0..=samples {
            let r = 40.0 * k as f64 / samples as f64;
            let value = interp.eval(r);
            assert!(
                value <= previous + 1e-13 * w1.values()[0],
                "resampled profile overshoots at r = {r}"
            );
            previous = value;
        }

        let outer = grid.nodes()[grid.intervals()];
        let coefficient = w1.values()[grid.intervals()] * outer.powf(3.0);
        let beyond = interp.eval(2.0 * outer);
        assert!(
            (beyond - coefficient * (2.0 * outer).powf(-3.0)).abs() <= 1e-15 * w1.values()[0],
            "tail extension does not follow the decay law"
        );
    }

    #[test]
    fn solver_flags_nonconvergence_on_a_tiny_budget() {
        let params = quintic_params();
        let config = SolverConfig::new()
            .with_intervals(256)
            .with_max_iters(100)
            .with_tolerances(1e-14, 1e-14);
        let state = solve_ground_state(&params, 100.0, &config).unwrap();
        assert!(!state.converged());
        assert!(state.gradient_norm().is_finite());
        assert!(state.m_eps() > 0.0);
    }

    #[test]
    fn config_builder_rejects_out_of_range_settings() {
        let params = quintic_params();
        let reject = |config: SolverConfig| {
            let err = solve_ground_state(&params, 100.0, &config).unwrap_err();
            assert!(
                matches!(err, SolverError::ConfigInvalid { .. }),
                "expected configuration rejection, got {err:?}"
            );
        };
        reject(SolverConfig::new().with_tolerances(0.0, 1e-6));
        reject(SolverConfig::new().with_tolerances(1e-8, 2e-3));
        reject(SolverConfig::new().with_max_iters(50));
        reject(SolverConfig::new().with_intervals(32));
        reject(SolverConfig::new().with_truncation_coefficient(-1.0));
        reject(SolverConfig::new().with_core(2.0, 1.2));
    }

    #[test]
    fn solver_rejects_bad_frequencies_and_inadmissible_parameters() {
        let params = quintic_params();
        let config = fast_config();
        for eps in [0.0, -3.0, f64::NAN, f64::INFINITY] {
            let err = solve_ground_state(&params, eps, &config).unwrap_err();
            assert!(matches!(err, SolverError::InvalidFrequency { .. }));
        }
        let low = ProblemParams::new(3, 0.5, vec![PowerTerm::new(1.9, 1.0).unwrap()]).unwrap();
        let err = solve_ground_state(&low, 100.0, &config).unwrap_err();
        assert!(matches!(err, SolverError::Inadmissible { .. }));
    }

    #[test]
    fn rescale_requires_an_explicit_scale_for_the_recentered_stage() {
        let params = quintic_params();
        let grid = build_grid(
            5,
            30.0,
            128,
            GridLayout::LogUniformWithLinearCore {
                core_radius: 2.0,
                core_fraction: 0.5,
            },
        )
        .unwrap();
        let w = grid.field_from_fn(|r| (-r * r).exp());
        let err = rescale(&params, 10.0, &grid, &w, Stage::W, Stage::WTilde, None).unwrap_err();
        assert!(matches!(err, SolverError::XiRequired));
        let err =
            rescale(&params, 10.0, &grid, &w, Stage::W, Stage::WTilde, Some(-0.5)).unwrap_err();
        assert!(matches!(err, SolverError::ScaleNotPositive { .. }));
        let err = rescale(&params, 0.0, &grid, &w, Stage::W, Stage::V, None).unwrap_err();
        assert!(matches!(err, SolverError::InvalidFrequency { .. }));
    }
}
