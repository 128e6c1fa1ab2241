//! Action functionals, constraint residuals, and fibering projections.
//!
//! Every energy quantity the solver and the sweep harness consume is
//! assembled here from grid quadrature and kernel pair energies:
//!
//! - the original-scale action ½‖∇u‖² + (ε/2)‖u‖² − ½∬(I_α∗F(u))F(u) and
//!   its working-scale counterpart with rescaled coefficients and
//!   frequency coefficient δ = ε^{−σ},
//! - the limit action ½‖∇w‖² − ½D(w^p, w^p),
//! - signed Nehari and virial-balance residuals, normalized by kinetic
//!   energy so convergence thresholds are scale free,
//! - the balance ratio τ(w) locating fields relative to the limit
//!   manifold,
//! - scalar and dilation fibering projections driven by a cached
//!   power-pair expansion that is exact in the fibering parameter.

use crate::asymptotics::{scaling_schedule, AsymptoticsError};
use crate::problem::{PowerTerm, ProblemError, ProblemParams};
use crate::radial_core::{RadialCoreError, RadialField};
use crate::riesz::{RieszError, RieszKernel};
use serde::Serialize;
use thiserror::Error;

/// Errors from functional evaluation and fibering projection.
#[derive(Debug, Error)]
pub enum FunctionalsError {
    /// An operation that needs a nontrivial field received zero.
    #[error("field is identically zero")]
    ZeroField,
    /// Frequency outside (0, ∞).
    #[error("frequency eps = {eps} must be positive and finite")]
    InvalidFrequency { eps: f64 },
    /// Kernel grid dimension disagrees with the parameters.
    #[error("kernel grid has dimension {found}, parameters have dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    /// Kernel order disagrees with the parameters.
    #[error("kernel order alpha = {found} does not match parameters alpha = {expected}")]
    AlphaMismatch { expected: f64, found: f64 },
    /// The scalar fibering value kept growing to the bracket edge.
    #[error("no interior fibering maximum in [{t_low:e}, {t_high:e}]")]
    NoInteriorMaximum { t_low: f64, t_high: f64 },
    /// The dilation balance never changes sign.
    #[error("dilation root not bracketed: {detail}")]
    RootNotBracketed { detail: String },
    /// Parameter validation failure.
    #[error(transparent)]
    Problem(#[from] ProblemError),
    /// Grid or field failure.
    #[error(transparent)]
    Field(#[from] RadialCoreError),
    /// Kernel failure.
    #[error(transparent)]
    Kernel(#[from] RieszError),
    /// Schedule construction failure.
    #[error(transparent)]
    Asymptotics(#[from] AsymptoticsError),
}

/// Every integral entering the action and both constraint functionals.
///
/// All nonlocal entries are nonnegative for nonnegative fields, and
/// `total` reproduces ½kinetic + (freq/2)·mass − ½(dpp + 2dpg + dgg)
/// with the frequency coefficient the action was assembled at.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyBreakdown {
    /// Squared gradient norm ‖∇v‖₂².
    pub kinetic: f64,
    /// Squared mass ‖v‖₂².
    pub mass: f64,
    /// Critical-critical pair energy D(v^p, v^p).
    pub dpp: f64,
    /// Critical-perturbation pair energy D(v^p, G(v)).
    pub dpg: f64,
    /// Perturbation-perturbation pair energy D(G(v), G(v)).
    pub dgg: f64,
    /// Derivative-weighted cross term D(v^p, g(v)·v).
    pub dpgu: f64,
    /// Derivative-weighted perturbation term D(G(v), g(v)·v).
    pub dggu: f64,
    /// Action value at the assembling frequency coefficient.
    pub total: f64,
}

/// Signed constraint value together with its kinetic-normalized form.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConstraintResidual {
    /// Raw constraint value.
    pub signed: f64,
    /// Signed value divided by the kinetic energy; zero for a zero field.
    pub relative: f64,
}

fn check_compat(params: &ProblemParams, kernel: &RieszKernel) -> Result<(), FunctionalsError> {
    if kernel.grid().dimension() != params.dimension() {
        return Err(FunctionalsError::DimensionMismatch {
            expected: params.dimension(),
            found: kernel.grid().dimension(),
        });
    }
    if kernel.alpha() != params.alpha() {
        return Err(FunctionalsError::AlphaMismatch {
            expected: params.alpha(),
            found: kernel.alpha(),
        });
    }
    Ok(())
}

/// Assembles every breakdown entry for the nonlinearity v^p + Σ c_i v^{q_i}
/// at frequency coefficient `freq`. Powers act on |v| so fields with
/// negative round-off stay in the real domain.
fn assemble(
    p: f64,
    terms: &[PowerTerm],
    freq: f64,
    kernel: &RieszKernel,
    v: &RadialField,
) -> Result<EnergyBreakdown, FunctionalsError> {
    let grid = kernel.grid();
    let kinetic = grid.kinetic_energy(v)?;
    let mass = grid.l2_inner(v, v)?;
    let values = v.values();
    let vp = grid.field_from_values(values.iter().map(|&x| x.abs().powf(p)).collect())?;
    let mut gsum = vec![0.0; values.len()];
    let mut gq = vec![0.0; values.len()];
    for term in terms {
        for (i, &x) in values.iter().enumerate() {
            let w = term.c * x.abs().powf(term.q);
            gsum[i] += w;
            gq[i] += term.q * w;
        }
    }
    let gsum = grid.field_from_values(gsum)?;
    let gq = grid.field_from_values(gq)?;
    let dpp = kernel.pair_energy(&vp, &vp)?;
    let dpg = kernel.pair_energy(&vp, &gsum)?;
    let dgg = kernel.pair_energy(&gsum, &gsum)?;
    let dpgu = kernel.pair_energy(&vp, &gq)?;
    let dggu = kernel.pair_energy(&gsum, &gq)?;
    let total = 0.5 * kinetic + 0.5 * freq * mass - 0.5 * (dpp + 2.0 * dpg + dgg);
    Ok(EnergyBreakdown {
        kinetic,
        mass,
        dpp,
        dpg,
        dgg,
        dpgu,
        dggu,
        total,
    })
}

/// Original-scale action ½‖∇u‖² + (ε/2)‖u‖² − ½D(F(u), F(u)).
pub fn action_u(
    params: &ProblemParams,
    eps: f64,
    kernel: &RieszKernel,
    u: &RadialField,
) -> Result<EnergyBreakdown, FunctionalsError> {
    check_compat(params, kernel)?;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(FunctionalsError::InvalidFrequency { eps });
    }
    assemble(params.p(), params.terms(), eps, kernel, u)
}

/// Working-scale action with rescaled coefficients and frequency δ.
///
/// The perturbation enters with the exactly reduced coefficients of the
/// rescaling schedule, so for a single power the working coefficient is
/// b·δ without cancellation error.
pub fn action_w(
    params: &ProblemParams,
    eps: f64,
    kernel: &RieszKernel,
    w: &RadialField,
) -> Result<EnergyBreakdown, FunctionalsError> {
    check_compat(params, kernel)?;
    let schedule = scaling_schedule(params, eps)?;
    let terms = schedule.working_terms(params)?;
    assemble(params.p(), &terms, schedule.delta(), kernel, w)
}

/// Limit action ½‖∇w‖² − ½D(w^p, w^p), with p read off the kernel's
/// dimension and order.
pub fn limit_action(kernel: &RieszKernel, w: &RadialField) -> Result<f64, FunctionalsError> {
    let grid = kernel.grid();
    let n = grid.dimension() as f64;
    let p = (n + kernel.alpha()) / (n - 2.0);
    let kinetic = grid.kinetic_energy(w)?;
    let wp = grid.field_from_values(w.values().iter().map(|&x| x.abs().powf(p)).collect())?;
    let dpp = kernel.pair_energy(&wp, &wp)?;
    Ok(0.5 * kinetic - 0.5 * dpp)
}

fn residual_from_breakdown(signed: f64, kinetic: f64) -> ConstraintResidual {
    let relative = if kinetic > 0.0 { signed / kinetic } else { 0.0 };
    ConstraintResidual { signed, relative }
}

/// Nehari constraint value of the working action,
/// K + δM − p(dpp + dpg) − dpgu − dggu, normalized by kinetic energy.
pub fn nehari_residual(
    params: &ProblemParams,
    eps: f64,
    kernel: &RieszKernel,
    w: &RadialField,
) -> Result<ConstraintResidual, FunctionalsError> {
    check_compat(params, kernel)?;
    let schedule = scaling_schedule(params, eps)?;
    let terms = schedule.working_terms(params)?;
    let b = assemble(params.p(), &terms, schedule.delta(), kernel, w)?;
    let p = params.p();
    let signed =
        b.kinetic + schedule.delta() * b.mass - p * (b.dpp + b.dpg) - b.dpgu - b.dggu;
    Ok(residual_from_breakdown(signed, b.kinetic))
}

/// Virial balance of the working action,
/// (N−2)/2·K + N/2·δM − (N+α)/2·D(F̃, F̃), normalized by kinetic energy.
pub fn pohozaev_residual(
    params: &ProblemParams,
    eps: f64,
    kernel: &RieszKernel,
    w: &RadialField,
) -> Result<ConstraintResidual, FunctionalsError> {
    check_compat(params, kernel)?;
    let schedule = scaling_schedule(params, eps)?;
    let terms = schedule.working_terms(params)?;
    let b = assemble(params.p(), &terms, schedule.delta(), kernel, w)?;
    let n = params.dimension() as f64;
    let alpha = params.alpha();
    let signed = (n - 2.0) / 2.0 * b.kinetic + n / 2.0 * schedule.delta() * b.mass
        - (n + alpha) / 2.0 * (b.dpp + 2.0 * b.dpg + b.dgg);
    Ok(residual_from_breakdown(signed, b.kinetic))
}

/// Balance ratio τ(w) = (N−2)/(N+α) · ‖∇w‖² / D(w^p, w^p).
///
/// Equal to one exactly on the limit manifold; the deviation τ−1 decays
/// at the gap rate along converged ground-state families.
pub fn tau(kernel: &RieszKernel, w: &RadialField) -> Result<f64, FunctionalsError> {
    let grid = kernel.grid();
    let n = grid.dimension() as f64;
    let p = (n + kernel.alpha()) / (n - 2.0);
    let kinetic = grid.kinetic_energy(w)?;
    let wp = grid.field_from_values(w.values().iter().map(|&x| x.abs().powf(p)).collect())?;
    let dpp = kernel.pair_energy(&wp, &wp)?;
    if !(kinetic > 0.0) || !(dpp > 0.0) {
        return Err(FunctionalsError::ZeroField);
    }
    Ok((n - 2.0) / (n + kernel.alpha()) * kinetic / dpp)
}

/// Cached fibering data for one field: the action restricted to the
/// two-parameter family s·u(·/t) is an exact finite sum in (s, t),
///
///   J(s·u_t) = s²t^{N−2}/2·K + s²t^N/2·Mδ − ½ Σ_k w_k s^{E_k} t^{N+α},
///
/// with K the kinetic energy, Mδ the frequency-weighted mass, and one
/// (E_k, w_k) pair per ordered power product in D(F(u), F(u)).
#[derive(Debug, Clone, Serialize)]
pub struct FiberingExpansion {
    /// Spatial dimension N.
    dimension: usize,
    /// Riesz order α.
    alpha: f64,
    /// Kinetic energy K of the underlying field.
    kinetic: f64,
    /// Frequency-weighted mass δ·‖u‖₂².
    mass_term: f64,
    /// Folded power-pair terms (E_k = e_a + e_b, w_k = ĉ_a ĉ_b D_ab),
    /// off-diagonal pairs carrying weight two.
    terms: Vec<(f64, f64)>,
}

impl FiberingExpansion {
    /// Assembles a fibering expansion from precomputed parts.
    ///
    /// Intended for rescaling updates and reduced diagnostics (dropping
    /// the perturbation or the mass term); the standard entry point is
    /// [`fibering_expansion`].
    pub fn from_parts(
        dimension: usize,
        alpha: f64,
        kinetic: f64,
        mass_term: f64,
        terms: Vec<(f64, f64)>,
    ) -> Result<Self, FunctionalsError> {
        if !(kinetic.is_finite() && kinetic >= 0.0 && mass_term.is_finite() && mass_term >= 0.0)
        {
            return Err(FunctionalsError::RootNotBracketed {
                detail: format!("nonfinite or negative parts K = {kinetic}, Mδ = {mass_term}"),
            });
        }
        Ok(Self {
            dimension,
            alpha,
            kinetic,
            mass_term,
            terms,
        })
    }

    /// Spatial dimension N.
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Riesz order α.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Kinetic energy of the underlying field.
    pub fn kinetic(&self) -> f64 {
        self.kinetic
    }

    /// Frequency-weighted mass δ·‖u‖₂².
    pub fn mass_term(&self) -> f64 {
        self.mass_term
    }

    /// Folded power-pair terms (summed exponent, weight).
    pub fn terms(&self) -> &[(f64, f64)] {
        &self.terms
    }

    /// Total nonlocal energy D(F(u), F(u)) = Σ_k w_k.
    pub fn nonlocal_total(&self) -> f64 {
        self.terms.iter().map(|&(_, w)| w).sum()
    }

    /// Action along the amplitude-dilation family, J(s·u(·/t)).
    pub fn action_st(&self, s: f64, t: f64) -> f64 {
        let n = self.dimension as f64;
        let quad = 0.5 * s * s * (t.powf(n - 2.0) * self.kinetic + t.powf(n) * self.mass_term);
        let nl: f64 = self
            .terms
            .iter()
            .map(|&(e, w)| w * s.powf(e))
            .sum::<f64>()
            * t.powf(n + self.alpha);
        quad - 0.5 * nl
    }

    /// Nehari value along the family, ⟨dJ(v), v⟩ at v = s·u(·/t).
    pub fn nehari_st(&self, s: f64, t: f64) -> f64 {
        let n = self.dimension as f64;
        let quad = s * s * (t.powf(n - 2.0) * self.kinetic + t.powf(n) * self.mass_term);
        let nl: f64 = self
            .terms
            .iter()
            .map(|&(e, w)| 0.5 * e * w * s.powf(e))
            .sum::<f64>()
            * t.powf(n + self.alpha);
        quad - nl
    }

    /// Virial balance along the family,
    /// (N−2)/2·K(v) + N/2·Mδ(v) − (N+α)/2·D(F(v), F(v)) at v = s·u(·/t).
    pub fn pohozaev_st(&self, s: f64, t: f64) -> f64 {
        let n = self.dimension as f64;
        let quad = 0.5
            * s
            * s
            * ((n - 2.0) * t.powf(n - 2.0) * self.kinetic
                + n * t.powf(n) * self.mass_term);
        let nl: f64 = self
            .terms
            .iter()
            .map(|&(e, w)| w * s.powf(e))
            .sum::<f64>()
            * t.powf(n + self.alpha);
        quad - 0.5 * (n + self.alpha) * nl
    }

    /// Scalar fibering value J(t·u).
    pub fn action(&self, t: f64) -> f64 {
        self.action_st(t, 1.0)
    }

    /// Scalar Nehari value ⟨dJ(t·u), t·u⟩.
    pub fn nehari(&self, t: f64) -> f64 {
        self.nehari_st(t, 1.0)
    }

    /// Locates the global maximum of t ↦ J(t·u) over (0, ∞).
    ///
    /// A 200-point logarithmic scan over [1e−6, 1e6] brackets the
    /// leftmost global maximizer, golden-section refinement tightens it
    /// to relative 1e−10, and a maximum on either scan edge is reported
    /// as an error rather than returned.
    pub fn maximize_scalar(&self) -> Result<(f64, f64), FunctionalsError> {
        if self.kinetic == 0.0 && self.mass_term == 0.0 {
            return Err(FunctionalsError::ZeroField);
        }
        const COUNT: usize = 200;
        const LOG_LO: f64 = -6.0;
        const LOG_HI: f64 = 6.0;
        let t_at = |i: usize| -> f64 {
            10.0_f64.powf(LOG_LO + (LOG_HI - LOG_LO) * i as f64 / (COUNT - 1) as f64)
        };
        let mut best_i = 0;
        let mut best_v = f64::NEG_INFINITY;
        for i in 0..COUNT {
            let v = self.action(t_at(i));
            if v > best_v {
                best_v = v;
                best_i = i;
            }
        }
        if best_i == 0 || best_i == COUNT - 1 {
            return Err(FunctionalsError::NoInteriorMaximum {
                t_low: t_at(0),
                t_high: t_at(COUNT - 1),
            });
        }
        let mut a = t_at(best_i - 1);
        let mut b = t_at(best_i + 1);
        let ratio = (5.0_f64.sqrt() - 1.0) / 2.0;
        let mut c = b - ratio * (b - a);
        let mut d = a + ratio * (b - a);
        let mut fc = self.action(c);
        let mut fd = self.action(d);
        while b - a > 1e-10 * b {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - ratio * (b - a);
                fc = self.action(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + ratio * (b - a);
                fd = self.action(d);
            }
        }
        // Golden section stalls near the square root of machine epsilon,
        // so polish the critical point of the fibering derivative by
        // Newton steps while the curvature stays negative.
        let mut t_star = 0.5 * (a + b);
        for _ in 0..60 {
            let quad = self.kinetic + self.mass_term;
            let d1 = quad * t_star
                - self
                    .terms
                    .iter()
                    .map(|&(e, w)| 0.5 * e * w * t_star.powf(e - 1.0))
                    .sum::<f64>();
            let d2 = quad
                - self
                    .terms
                    .iter()
                    .map(|&(e, w)| 0.5 * e * (e - 1.0) * w * t_star.powf(e - 2.0))
                    .sum::<f64>();
            if d2 >= 0.0 {
                break;
            }
            let step = d1 / d2;
            let next = t_star - step;
            if !(next.is_finite() && next > 0.0) {
                break;
            }
            t_star = next;
            if step.abs() <= 1e-14 * t_star {
                break;
            }
        }
        Ok((t_star, self.action(t_star)))
    }

    /// Solves the dilation balance: the unique positive root of
    /// (N−2)K + N·Mδ·t² − (N+α)·D(F, F)·t^{2+α} = 0, which is where the
    /// virial balance of u(·/t) vanishes.
    ///
    /// Safeguarded Newton inside a sign-change bracket, bisecting
    /// whenever the Newton step leaves the bracket.
    pub fn dilation_root(&self) -> Result<f64, FunctionalsError> {
        let n = self.dimension as f64;
        let dff = self.nonlocal_total();
        if !(self.kinetic > 0.0) {
            return Err(FunctionalsError::RootNotBracketed {
                detail: format!("kinetic energy {} is not positive", self.kinetic),
            });
        }
        if !(dff > 0.0) {
            return Err(FunctionalsError::RootNotBracketed {
                detail: format!("nonlocal energy {dff} is not positive"),
            });
        }
        let head = (n - 2.0) * self.kinetic;
        let g = |t: f64| -> f64 {
            head + n * self.mass_term * t * t
                - (n + self.alpha) * dff * t.powf(2.0 + self.alpha)
        };
        let dg = |t: f64| -> f64 {
            2.0 * n * self.mass_term * t
                - (2.0 + self.alpha) * (n + self.alpha) * dff * t.powf(1.0 + self.alpha)
        };
        let mut hi = 1.0;
        let mut guard = 0;
        while g(hi) > 0.0 {
            hi *= 2.0;
            guard += 1;
            if guard > 80 {
                return Err(FunctionalsError::RootNotBracketed {
                    detail: "balance stayed positive out to t = 2^80".to_string(),
                });
            }
        }
        let mut lo = 0.0;
        let mut x = 0.5 * hi;
        for _ in 0..200 {
            let gx = g(x);
            if gx > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            if hi - lo <= 1e-13 * hi {
                break;
            }
            let slope = dg(x);
            let newton = x - gx / slope;
            x = if slope != 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        Ok(x)
    }
}

/// Builds the working-scale fibering expansion of a field: kinetic and
/// frequency-weighted mass, plus the full power-pair matrix of the
/// nonlinearity with the critical term carrying unit coefficient.
pub fn fibering_expansion(
    params: &ProblemParams,
    eps: f64,
    kernel: &RieszKernel,
    u: &RadialField,
) -> Result<FiberingExpansion, FunctionalsError> {
    check_compat(params, kernel)?;
    let schedule = scaling_schedule(params, eps)?;
    let working = schedule.working_terms(params)?;
    let grid = kernel.grid();
    let kinetic = grid.kinetic_energy(u)?;
    let mass = grid.l2_inner(u, u)?;
    if kinetic == 0.0 && mass == 0.0 {
        return Err(FunctionalsError::ZeroField);
    }
    let mut exps = vec![params.p()];
    let mut coefs = vec![1.0];
    for term in &working {
        exps.push(term.q);
        coefs.push(term.c);
    }
    let fields: Vec<RadialField> = exps
        .iter()
        .map(|&e| {
            grid.field_from_values(u.values().iter().map(|&x| x.abs().powf(e)).collect())
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut terms = Vec::with_capacity(exps.len() * (exps.len() + 1) / 2);
    for a in 0..exps.len() {
        for b in a..exps.len() {
            let pair = kernel.pair_energy(&fields[a], &fields[b])?;
            let fold = if a == b { 1.0 } else { 2.0 };
            terms.push((exps[a] + exps[b], fold * coefs[a] * coefs[b] * pair));
        }
    }
    FiberingExpansion::from_parts(
        params.dimension(),
        params.alpha(),
        kinetic,
        schedule.delta() * mass,
        terms,
    )
}

/// Projects a field onto the Nehari manifold along its scalar ray,
/// returning the maximizing amplitude and the action value there.
pub fn project_fibering_scalar(
    params: &ProblemParams,
    eps: f64,
    kernel: &RieszKernel,
    u: &RadialField,
) -> Result<(f64, f64), FunctionalsError> {
    fibering_expansion(params, eps, kernel, u)?.maximize_scalar()
}

/// Projects a field onto the virial-balance manifold along its dilation
/// ray, returning the balancing dilation scale.
pub fn project_fibering_dilation(
    params: &ProblemParams,
    eps: f64,
    kernel: &RieszKernel,
    u: &RadialField,
) -> Result<f64, FunctionalsError> {
    fibering_expansion(params, eps, kernel, u)?.dilation_root()
}
