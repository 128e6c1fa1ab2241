//! Radial grids, quadrature, differential operators, and norms for radially
//! symmetric functions on R^N represented by their profiles on [0, Rmax].
//!
//! Features:
//! - uniform or core-refined graded grids with strictly increasing nodes
//! - product-integration quadrature weights that absorb the surface measure
//!   |S^{N-1}| r^{N-1}, exact on quintic interpolants of the integrand
//! - conservative finite-volume Laplacian with symmetric origin handling and
//!   Dirichlet truncation at Rmax
//! - tridiagonal solve for (-Δ + m)φ = rhs, the preconditioner workhorse
//! - two-column CSV persistence for radial fields
//!
//! The discrete kinetic form returned by [`RadialGrid::kinetic_energy`] pairs
//! exactly with the Laplacian under the cell-volume inner product, which the
//! descent solver relies on for monotone line searches.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::quad::gauss12;

/// Errors from grid construction, field algebra, and persistence.
#[derive(Debug, Error)]
pub enum RadialCoreError {
    #[error("grid needs at least {min} intervals, got {intervals}")]
    TooFewIntervals { intervals: usize, min: usize },
    #[error("truncation radius must be positive and finite, got {rmax}")]
    InvalidRadius { rmax: f64 },
    #[error("dimension must be at least 3, got {dimension}")]
    DimensionTooSmall { dimension: usize },
    #[error("core radius {core_radius} and fraction {core_fraction} do not fit inside Rmax = {rmax}")]
    InvalidCoreLayout {
        core_radius: f64,
        core_fraction: f64,
        rmax: f64,
    },
    #[error("quadrature weight at node {index} is not strictly positive: {weight}")]
    NonpositiveWeight { index: usize, weight: f64 },
    #[error("field length {found} does not match grid node count {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("field was built on grid {found:#018x}, expected grid {expected:#018x}")]
    GridMismatch { expected: u64, found: u64 },
    #[error("field value at node {index} is not finite")]
    NonFiniteValue { index: usize },
    #[error("norm exponent must be at least 1, got {p}")]
    InvalidNormExponent { p: f64 },
    #[error("csv header `{line}` does not describe this grid")]
    HeaderMismatch { line: String },
    #[error("csv line {line} is malformed: {reason}")]
    MalformedCsv { line: usize, reason: String },
    #[error("io failure: {source}")]
    Io {
        #[from]
        source: std::io::Error,
    },
}

/// Node placement strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GridLayout {
    /// Equal spacing from 0 to Rmax.
    Uniform,
    /// Equal spacing on [0, core_radius], then geometrically growing spacing
    /// to Rmax. `core_fraction` is the fraction of intervals spent on the
    /// core. Spacing is continuous across the junction.
    LogUniformWithLinearCore {
        /// Radius of the uniformly resolved core region.
        core_radius: f64,
        /// Fraction of all intervals placed inside the core, in (0, 1).
        core_fraction: f64,
    },
}

/// Samples of one radial function on a specific grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    values: Vec<f64>,
    grid_id: u64,
}

impl RadialField {
    /// Sampled values, indexed like the grid nodes.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access for in-place solver updates.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Consumes the field, returning the raw samples.
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Identifier of the grid the field was created on.
    pub fn grid_id(&self) -> u64 {
        self.grid_id
    }
}

/// Radial grid with quadrature weights and finite-volume geometry.
///
/// Nodes satisfy r_0 = 0 < r_1 < ... < r_M = Rmax. Quadrature weights absorb
/// the full surface measure, so `integrate` sums ω_i f_i directly.
#[derive(Debug, Clone)]
pub struct RadialGrid {
    dimension: usize,
    layout: GridLayout,
    nodes: Vec<f64>,
    spacings: Vec<f64>,
    weights: Vec<f64>,
    /// Areas |S^{N-1}| ρ_i^{N-1} of the cell faces at midpoints ρ_i; the last
    /// entry is the Dirichlet ghost face beyond Rmax.
    faces: Vec<f64>,
    /// Finite-volume cell volumes around each node.
    volumes: Vec<f64>,
    surface_area: f64,
    content_hash: String,
    grid_id: u64,
}

/// Surface area of the unit sphere S^{N-1}.
pub fn unit_sphere_area(dimension: usize) -> f64 {
    let half_n = dimension as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(half_n) / statrs::function::gamma::gamma(half_n)
}

/// Builds a radial grid with `intervals` cells on [0, rmax].
pub fn build_grid(
    dimension: usize,
    rmax: f64,
    intervals: usize,
    layout: GridLayout,
) -> Result<RadialGrid, RadialCoreError> {
    RadialGrid::build(dimension, rmax, intervals, layout)
}

impl RadialGrid {
    const MIN_INTERVALS: usize = 64;
    /// Nodes per interpolation stencil for the quadrature weights.
    const STENCIL: usize = 6;

    /// Builds a grid; see [`build_grid`].
    pub fn build(
        dimension: usize,
        rmax: f64,
        intervals: usize,
        layout: GridLayout,
    ) -> Result<Self, RadialCoreError> {
        if dimension < 3 {
            return Err(RadialCoreError::DimensionTooSmall { dimension });
        }
        if !(rmax.is_finite() && rmax > 0.0) {
            return Err(RadialCoreError::InvalidRadius { rmax });
        }
        if intervals < Self::MIN_INTERVALS {
            return Err(RadialCoreError::TooFewIntervals {
                intervals,
                min: Self::MIN_INTERVALS,
            });
        }
        let nodes = Self::place_nodes(rmax, intervals, layout)?;
        let spacings: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
        let surface_area = unit_sphere_area(dimension);
        let weights = Self::product_weights(dimension, &nodes, surface_area);
        for (index, &weight) in weights.iter().enumerate().skip(1) {
            if !(weight > 0.0) {
                return Err(RadialCoreError::NonpositiveWeight { index, weight });
            }
        }
        let m = intervals;
        let mut face_radii = Vec::with_capacity(m + 1);
        for i in 0..m {
            face_radii.push(0.5 * (nodes[i] + nodes[i + 1]));
        }
        face_radii.push(rmax + 0.5 * spacings[m - 1]);
        let faces: Vec<f64> = face_radii
            .iter()
            .map(|&rho| surface_area * rho.powi(dimension as i32 - 1))
            .collect();
        let n_exp = dimension as i32;
        let mut volumes = Vec::with_capacity(m + 1);
        volumes.push(surface_area * face_radii[0].powi(n_exp) / dimension as f64);
        for i in 1..=m {
            volumes.push(
                surface_area * (face_radii[i].powi(n_exp) - face_radii[i - 1].powi(n_exp))
                    / dimension as f64,
            );
        }
        let (content_hash, grid_id) = Self::hash_contents(dimension, &nodes);
        Ok(Self {
            dimension,
            layout,
            nodes,
            spacings,
            weights,
            faces,
            volumes,
            surface_area,
            content_hash,
            grid_id,
        })
    }

    /// Returns a copy of the grid with every radius multiplied by `factor`.
    ///
    /// Weights, faces, and volumes pick up the exact homogeneity powers of
    /// the radial measure, so a relabeled field integrates to `factor^N`
    /// times its original value without a quadrature rebuild.
    pub fn scaled(&self, factor: f64) -> Result<RadialGrid, RadialCoreError> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(RadialCoreError::InvalidRadius { rmax: factor });
        }
        let n = self.dimension as i32;
        let nodes: Vec<f64> = self.nodes.iter().map(|&r| r * factor).collect();
        let layout = match self.layout {
            GridLayout::Uniform => GridLayout::Uniform,
            GridLayout::LogUniformWithLinearCore {
                core_radius,
                core_fraction,
            } => GridLayout::LogUniformWithLinearCore {
                core_radius: core_radius * factor,
                core_fraction,
            },
        };
        let (content_hash, grid_id) = Self::hash_contents(self.dimension, &nodes);
        Ok(Self {
            dimension: self.dimension,
            layout,
            spacings: self.spacings.iter().map(|&h| h * factor).collect(),
            weights: self
                .weights
                .iter()
                .map(|&w| w * factor.powi(n))
                .collect(),
            faces: self
                .faces
                .iter()
                .map(|&f| f * factor.powi(n - 1))
                .collect(),
            volumes: self
                .volumes
                .iter()
                .map(|&v| v * factor.powi(n))
                .collect(),
            surface_area: self.surface_area,
            nodes,
            content_hash,
            grid_id,
        })
    }

    fn place_nodes(
        rmax: f64,
        intervals: usize,
        layout: GridLayout,
    ) -> Result<Vec<f64>, RadialCoreError> {
        match layout {
            GridLayout::Uniform => {
                let h = rmax / intervals as f64;
                let mut nodes: Vec<f64> = (0..=intervals).map(|i| i as f64 * h).collect();
                nodes[intervals] = rmax;
                Ok(nodes)
            }
            GridLayout::LogUniformWithLinearCore {
                core_radius,
                core_fraction,
            } => {
                let bad = || RadialCoreError::InvalidCoreLayout {
                    core_radius,
                    core_fraction,
                    rmax,
                };
                if !(core_radius.is_finite() && core_radius > 0.0 && core_radius < rmax) {
                    return Err(bad());
                }
                if !(core_fraction > 0.0 && core_fraction < 1.0) {
                    return Err(bad());
                }
                let m_core = ((intervals as f64 * core_fraction).round() as usize)
                    .clamp(8, intervals.saturating_sub(8));
                let m_tail = intervals - m_core;
                let h0 = core_radius / m_core as f64;
                let tail_len = rmax - core_radius;
                // Spacing of tail cell k is h0 * g^k; bisect the growth ratio
                // g so the tail spacings sum exactly to rmax - core_radius.
                let tail_sum = |g: f64| -> f64 {
                    let mut sum = 0.0;
                    let mut step = h0;
                    for _ in 0..m_tail {
                        step *= g;
                        sum += step;
                    }
                    sum
                };
                let (mut lo, mut hi) = (1e-3, 1e3);
                if tail_sum(lo) > tail_len || tail_sum(hi) < tail_len {
                    return Err(bad());
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if tail_sum(mid) < tail_len {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let g = 0.5 * (lo + hi);
                let mut nodes = Vec::with_capacity(intervals + 1);
                for i in 0..=m_core {
                    nodes.push(i as f64 * h0);
                }
                nodes[m_core] = core_radius;
                let mut step = h0;
                let mut r = core_radius;
                for _ in 0..m_tail {
                    step *= g;
                    r += step;
                    nodes.push(r);
                }
                nodes[intervals] = rmax;
                if nodes.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(bad());
                }
                Ok(nodes)
            }
        }
    }

    /// Composite product-integration weights: on every interval the integrand
    /// is replaced by its Lagrange interpolant on the six nearest nodes and
    /// integrated against |S^{N-1}| r^{N-1} with a 12-point Gauss rule, which
    /// is exact for the resulting polynomial up to dimension 19.
    fn product_weights(dimension: usize, nodes: &[f64], surface_area: f64) -> Vec<f64> {
        let m = nodes.len() - 1;
        let mut weights = vec![0.0; m + 1];
        let n_exp = dimension as i32 - 1;
        for j in 0..m {
            let base = j.saturating_sub(2).min(m + 1 - Self::STENCIL);
            let stencil = &nodes[base..base + Self::STENCIL];
            for k in 0..Self::STENCIL {
                let contribution = gauss12(
                    |s| {
                        let mut basis = 1.0;
                        for (idx, &x) in stencil.iter().enumerate() {
                            if idx != k {
                                basis *= (s - x) / (stencil[k] - x);
                            }
                        }
                        basis * surface_area * s.powi(n_exp)
                    },
                    nodes[j],
                    nodes[j + 1],
                );
                weights[base + k] += contribution;
            }
        }
        weights
    }

    fn hash_contents(dimension: usize, nodes: &[f64]) -> (String, u64) {
        let mut hasher = Sha256::new();
        hasher.update((dimension as u64).to_le_bytes());
        hasher.update((nodes.len() as u64).to_le_bytes());
        for &r in nodes {
            hasher.update(r.to_le_bytes());
        }
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in digest.iter() {
            let _ = write!(hex, "{byte:02x}");
        }
        let id = u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"));
        (hex, id)
    }

    /// Spatial dimension N.
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Node placement strategy used at construction.
    pub fn layout(&self) -> GridLayout {
        self.layout
    }

    /// Grid nodes r_0 = 0 < ... < r_M = Rmax.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Interval widths r_{i+1} - r_i.
    pub fn spacings(&self) -> &[f64] {
        &self.spacings
    }

    /// Surface measures of the interval midpoints between adjacent nodes.
    pub fn faces(&self) -> &[f64] {
        &self.faces
    }

    /// Quadrature weights absorbing the surface measure.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Finite-volume cell volumes around each node.
    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    /// Truncation radius Rmax.
    pub fn rmax(&self) -> f64 {
        *self.nodes.last().expect("grid has nodes")
    }

    /// Number of intervals M.
    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Number of nodes M + 1.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// True when the grid has no nodes; never holds for built grids.
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Surface area |S^{N-1}| of the unit sphere.
    pub fn surface_area(&self) -> f64 {
        self.surface_area
    }

    /// Hex digest identifying dimension and node placement.
    pub fn content_hash(&self) -> &str {
        &self.content_hash
    }

    /// Compact grid identifier used for field compatibility checks.
    pub fn grid_id(&self) -> u64 {
        self.grid_id
    }

    /// Verifies that a field belongs to this grid.
    pub fn check_field(&self, field: &RadialField) -> Result<(), RadialCoreError> {
        if field.grid_id != self.grid_id {
            return Err(RadialCoreError::GridMismatch {
                expected: self.grid_id,
                found: field.grid_id,
            });
        }
        if field.values.len() != self.nodes.len() {
            return Err(RadialCoreError::LengthMismatch {
                expected: self.nodes.len(),
                found: field.values.len(),
            });
        }
        Ok(())
    }

    /// Samples a function of r onto the grid.
    pub fn field_from_fn(&self, f: impl Fn(f64) -> f64) -> RadialField {
        RadialField {
            values: self.nodes.iter().map(|&r| f(r)).collect(),
            grid_id: self.grid_id,
        }
    }

    /// Wraps raw samples as a field after validating length and finiteness.
    pub fn field_from_values(&self, values: Vec<f64>) -> Result<RadialField, RadialCoreError> {
        if values.len() != self.nodes.len() {
            return Err(RadialCoreError::LengthMismatch {
                expected: self.nodes.len(),
                found: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(RadialCoreError::NonFiniteValue { index });
        }
        Ok(RadialField {
            values,
            grid_id: self.grid_id,
        })
    }

    /// The zero field.
    pub fn zero_field(&self) -> RadialField {
        RadialField {
            values: vec![0.0; self.nodes.len()],
            grid_id: self.grid_id,
        }
    }

    /// Integrates a field over R^N: Σ ω_i f_i.
    pub fn integrate(&self, field: &RadialField) -> Result<f64, RadialCoreError> {
        self.check_field(field)?;
        Ok(self
            .weights
            .iter()
            .zip(&field.values)
            .map(|(w, v)| w * v)
            .sum())
    }

    /// Weighted inner product ∫ f g dx.
    pub fn l2_inner(&self, f: &RadialField, g: &RadialField) -> Result<f64, RadialCoreError> {
        self.check_field(f)?;
        self.check_field(g)?;
        Ok(self
            .weights
            .iter()
            .zip(&f.values)
            .zip(&g.values)
            .map(|((w, a), b)| w * a * b)
            .sum())
    }

    /// L^p norm (∫ |f|^p dx)^{1/p} for p ≥ 1.
    pub fn lp_norm(&self, field: &RadialField, p: f64) -> Result<f64, RadialCoreError> {
        if !(p.is_finite() && p >= 1.0) {
            return Err(RadialCoreError::InvalidNormExponent { p });
        }
        self.check_field(field)?;
        let sum: f64 = self
            .weights
            .iter()
            .zip(&field.values)
            .map(|(w, v)| w * v.abs().powf(p))
            .sum();
        Ok(sum.powf(1.0 / p))
    }

    /// Conservative finite-volume Laplacian Δf = f'' + (N-1) f'/r.
    ///
    /// The origin uses the symmetric no-flux closure consistent with
    /// Δf(0) = N f''(0); the outer node copies the last interior slope into
    /// the ghost face, so slowly decaying truncated tails do not generate
    /// artificial boundary flux.
    pub fn radial_laplacian(&self, field: &RadialField) -> Result<RadialField, RadialCoreError> {
        self.check_field(field)?;
        let m = self.intervals();
        let f = &field.values;
        let mut out = vec![0.0; m + 1];
        out[0] = self.faces[0] * (f[1] - f[0]) / self.spacings[0] / self.volumes[0];
        for i in 1..m {
            let flux_out = self.faces[i] * (f[i + 1] - f[i]) / self.spacings[i];
            let flux_in = self.faces[i - 1] * (f[i] - f[i - 1]) / self.spacings[i - 1];
            out[i] = (flux_out - flux_in) / self.volumes[i];
        }
        let h_last = self.spacings[m - 1];
        let slope_last = (f[m] - f[m - 1]) / h_last;
        out[m] = (self.faces[m] - self.faces[m - 1]) * slope_last / self.volumes[m];
        Ok(RadialField {
            values: out,
            grid_id: self.grid_id,
        })
    }

    /// Discrete Dirichlet energy ∫ |∇f|² dx of the piecewise-linear profile,
    /// truncated naturally at Rmax (no artificial drop beyond the last node).
    ///
    /// Pairs exactly with the Laplacian, Σ V_i (-Δf)_i f_i, on every field
    /// that vanishes at the outer node.
    pub fn kinetic_energy(&self, field: &RadialField) -> Result<f64, RadialCoreError> {
        self.check_field(field)?;
        let m = self.intervals();
        let f = &field.values;
        let mut sum = 0.0;
        for i in 0..m {
            let slope = (f[i + 1] - f[i]) / self.spacings[i];
            sum += self.faces[i] * slope * slope * self.spacings[i];
        }
        Ok(sum)
    }

    /// Solves (-Δ + m_coef)φ = rhs with Dirichlet φ(Rmax) = 0.
    ///
    /// Tridiagonal Thomas elimination on the finite-volume operator; the rhs
    /// value at the last node is ignored because that row is the boundary
    /// condition.
    pub fn h1_solve(
        &self,
        m_coef: f64,
        rhs: &RadialField,
    ) -> Result<RadialField, RadialCoreError> {
        self.check_field(rhs)?;
        let m = self.intervals();
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        let mut lower = vec![0.0; m];
        for i in 0..m {
            let flux_right = self.faces[i] / self.spacings[i];
            let flux_left = if i > 0 {
                self.faces[i - 1] / self.spacings[i - 1]
            } else {
                0.0
            };
            diag[i] = (flux_right + flux_left) / self.volumes[i] + m_coef;
            upper[i] = -flux_right / self.volumes[i];
            if i > 0 {
                lower[i] = -flux_left / self.volumes[i];
            }
        }
        let mut c_star = vec![0.0; m];
        let mut d_star = vec![0.0; m];
        c_star[0] = upper[0] / diag[0];
        d_star[0] = rhs.values[0] / diag[0];
        for i in 1..m {
            let denom = diag[i] - lower[i] * c_star[i - 1];
            c_star[i] = upper[i] / denom;
            d_star[i] = (rhs.values[i] - lower[i] * d_star[i - 1]) / denom;
        }
        let mut phi = vec![0.0; m + 1];
        phi[m] = 0.0;
        phi[m - 1] = d_star[m - 1];
        for i in (0..m - 1).rev() {
            phi[i] = d_star[i] - c_star[i] * phi[i + 1];
        }
        Ok(RadialField {
            values: phi,
            grid_id: self.grid_id,
        })
    }

    /// Writes a field as two-column CSV with the grid-descriptor header.
    pub fn write_field_csv(
        &self,
        field: &RadialField,
        path: impl AsRef<Path>,
    ) -> Result<(), RadialCoreError> {
        self.check_field(field)?;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# N={} Rmax={} M={}",
            self.dimension,
            self.rmax(),
            self.intervals()
        );
        for (r, v) in self.nodes.iter().zip(&field.values) {
            let _ = writeln!(out, "{r},{v}");
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Reads a field written by [`RadialGrid::write_field_csv`], verifying
    /// that the header describes this grid.
    pub fn load_field_csv(&self, path: impl AsRef<Path>) -> Result<RadialField, RadialCoreError> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default().to_string();
        let expected = format!(
            "# N={} Rmax={} M={}",
            self.dimension,
            self.rmax(),
            self.intervals()
        );
        if header != expected {
            return Err(RadialCoreError::HeaderMismatch { line: header });
        }
        let mut values = Vec::with_capacity(self.nodes.len());
        for (idx, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let (r_txt, v_txt) = match (cols.next(), cols.next()) {
                (Some(r), Some(v)) => (r, v),
                _ => {
                    return Err(RadialCoreError::MalformedCsv {
                        line: idx + 2,
                        reason: "expected two comma-separated columns".to_string(),
                    })
                }
            };
            let r: f64 = r_txt.trim().parse().map_err(|_| RadialCoreError::MalformedCsv {
                line: idx + 2,
                reason: format!("bad radius `{r_txt}`"),
            })?;
            let v: f64 = v_txt.trim().parse().map_err(|_| RadialCoreError::MalformedCsv {
                line: idx + 2,
                reason: format!("bad value `{v_txt}`"),
            })?;
            let node = self.nodes.get(values.len()).copied().unwrap_or(f64::NAN);
            if (r - node).abs() > 1e-12 * node.abs().max(1.0) {
                return Err(RadialCoreError::MalformedCsv {
                    line: idx + 2,
                    reason: format!("radius {r} does not match grid node {node}"),
                });
            }
            values.push(v);
        }
        self.field_from_values(values)
    }
}
