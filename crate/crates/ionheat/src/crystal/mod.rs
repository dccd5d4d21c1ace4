//! Equilibrium structure of trapped-ion Coulomb crystals.
//!
//! An ion crystal in a cylindrically symmetric harmonic trap is described by
//! the dimensionless potential (units: m = 1, omega_z = 1, q^2 = 1)
//!
//! ```text
//! V = sum_i [ alpha^2 (x_i^2 + y_i^2) + z_i^2 ] / 2  +  sum_{i<j} q^2 / |r_i - r_j|
//! ```
//!
//! Equilibria are global minima of V, found by differential evolution followed
//! by a damped-Newton polish on the analytic gradient. The resulting structure
//! (linear chain, planar zig-zag, helix, or unordered) is classified from the
//! order parameters R (chain radius) and Delta (minimum axial pair gap).

mod de;
mod polish;
mod scan;

pub use de::OptimizerOpts;
pub use scan::{scan_transition, OrderParamSelector, ScanPoint, TransitionScan};

use crate::error::{Error, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Separation below which two ions are treated as coincident.
pub const COINCIDENCE_TOL: f64 = 1e-12;
/// Chain radius below which a structure is classified as linear.
pub const LINEAR_RADIUS_THRESHOLD: f64 = 1e-4;
/// Minimum axial gap below which a structure is classified as unordered.
pub const ORDERING_THRESHOLD: f64 = 1e-4;
/// Half-width of the zig-zag band around a mean azimuthal step of pi (rad).
pub const ZIGZAG_ANGLE_TOL: f64 = 0.2;

/// Trap parameters determining the crystal structure.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CrystalParams {
    /// Number of ions, N >= 2 for equilibrium searches.
    pub n_ions: usize,
    /// Transverse-to-axial aspect ratio alpha = omega_t / omega_z.
    pub alpha: f64,
    /// Charge-squared scale; 1 under the global unit convention.
    pub q_sq: f64,
}

impl CrystalParams {
    pub fn new(n_ions: usize, alpha: f64) -> Result<Self> {
        if n_ions < 1 {
            return Err(Error::Config("n_ions must be >= 1".into()));
        }
        if !(alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self { n_ions, alpha, q_sq: 1.0 })
    }

    /// Override q^2; only used to test scale covariance.
    pub fn with_q_sq(mut self, q_sq: f64) -> Self {
        self.q_sq = q_sq;
        self
    }
}

/// Gauge transformation applied to make equilibria reproducible: a rotation
/// about z, an optional y-reflection, then a sort by ascending z.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct GaugeRecord {
    pub rotation: f64,
    pub reflected: bool,
}

/// A gauge-fixed local minimum of the trap + Coulomb potential.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumConfiguration {
    pub positions: Vec<[f64; 3]>,
    pub energy: f64,
    pub residual_gradient_norm: f64,
    pub gauge: GaugeRecord,
}

impl EquilibriumConfiguration {
    pub fn n_ions(&self) -> usize {
        self.positions.len()
    }

    /// Axial extent z_max - z_min.
    pub fn length(&self) -> f64 {
        let zs = self.positions.iter().map(|p| p[2]);
        let zmax = zs.clone().fold(f64::NEG_INFINITY, f64::max);
        let zmin = zs.fold(f64::INFINITY, f64::min);
        zmax - zmin
    }
}

/// Structural phase labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Linear1D,
    ZigZag2D,
    Helical3D,
    Unordered,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Phase::Linear1D => "Linear1D",
            Phase::ZigZag2D => "ZigZag2D",
            Phase::Helical3D => "Helical3D",
            Phase::Unordered => "Unordered",
        };
        f.write_str(s)
    }
}

/// Order parameters and phase classification of a configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructureReport {
    /// Chain radius R = max_i sqrt(x_i^2 + y_i^2).
    pub radius: f64,
    /// Minimum axial pair gap Delta = min_{i<j} |z_i - z_j|.
    pub min_z_gap: f64,
    /// Mean |azimuthal angle difference| between z-adjacent off-axis ions, in [0, pi].
    pub mean_azimuthal_step: f64,
    pub phase: Phase,
}

/// Label for the built-in fixed-structure paths alpha = c * N^beta.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathDimension {
    OneD,
    TwoD,
    ThreeD,
}

/// A power-law path alpha(N) = c * N^beta through (alpha, N) parameter space
/// along which the crystal structure stays in one phase.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhasePath {
    pub dimension: PathDimension,
    pub c: f64,
    pub beta: f64,
}

impl PhasePath {
    /// The three built-in sub-critical paths.
    pub fn builtin(dimension: PathDimension) -> Self {
        let (c, beta) = match dimension {
            PathDimension::OneD => (0.67, 0.873),
            PathDimension::TwoD => (0.44, 0.861),
            PathDimension::ThreeD => (0.28, 0.811),
        };
        Self { dimension, c, beta }
    }
}

/// Aspect ratio on a power-law path at a given ion number.
pub fn path_alpha(path: PhasePath, n_ions: usize) -> f64 {
    path.c * (n_ions as f64).powf(path.beta)
}

fn check_separation(positions: &[[f64; 3]]) -> Result<()> {
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            let sep = dist(&positions[i], &positions[j]);
            if sep < COINCIDENCE_TOL {
                return Err(Error::DegenerateConfiguration { i, j, sep });
            }
        }
    }
    Ok(())
}

#[inline]
fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Trap + Coulomb potential. Pair terms counted once.
pub fn potential_energy(params: &CrystalParams, positions: &[[f64; 3]]) -> Result<f64> {
    check_separation(positions)?;
    Ok(potential_energy_unchecked(params, positions))
}

/// Energy without the coincidence check; coincident ions give +inf.
/// Used on the optimizer hot path where invalid candidates are simply rejected.
pub(crate) fn potential_energy_unchecked(params: &CrystalParams, positions: &[[f64; 3]]) -> f64 {
    let a2 = params.alpha * params.alpha;
    let mut v = 0.0;
    for p in positions {
        v += 0.5 * (a2 * (p[0] * p[0] + p[1] * p[1]) + p[2] * p[2]);
    }
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            let r = dist(&positions[i], &positions[j]);
            if r < COINCIDENCE_TOL {
                return f64::INFINITY;
            }
            v += params.q_sq / r;
        }
    }
    v
}

/// Analytic gradient of [`potential_energy`] with respect to all 3N coordinates.
pub fn potential_gradient(params: &CrystalParams, positions: &[[f64; 3]]) -> Result<Vec<[f64; 3]>> {
    check_separation(positions)?;
    let a2 = params.alpha * params.alpha;
    let n = positions.len();
    let mut grad = vec![[0.0; 3]; n];
    for (i, p) in positions.iter().enumerate() {
        grad[i][0] = a2 * p[0];
        grad[i][1] = a2 * p[1];
        grad[i][2] = p[2];
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let r = dist(&positions[i], &positions[j]);
            let c = params.q_sq / (r * r * r);
            for k in 0..3 {
                let u = positions[i][k] - positions[j][k];
                grad[i][k] -= c * u;
                grad[j][k] += c * u;
            }
        }
    }
    Ok(grad)
}

/// Max-norm of a gradient.
pub fn gradient_max_norm(grad: &[[f64; 3]]) -> f64 {
    grad.iter()
        .flat_map(|g| g.iter())
        .fold(0.0_f64, |m, &g| m.max(g.abs()))
}

/// Analytic Hessian of the potential in the axis-major coordinate layout
/// (rows/columns 0..N are x, N..2N are y, 2N..3N are z).
pub fn potential_hessian(params: &CrystalParams, positions: &[[f64; 3]]) -> Result<Array2<f64>> {
    check_separation(positions)?;
    let n = positions.len();
    let k = 3 * n;
    let a2 = params.alpha * params.alpha;
    let mut h = Array2::<f64>::zeros((k, k));
    for i in 0..n {
        h[[i, i]] = a2;
        h[[n + i, n + i]] = a2;
        h[[2 * n + i, 2 * n + i]] = 1.0;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let mut u = [0.0; 3];
            for k3 in 0..3 {
                u[k3] = positions[i][k3] - positions[j][k3];
            }
            let r2 = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
            let r = r2.sqrt();
            let c = params.q_sq / (r2 * r);
            // Hessian block of q^2/|u|: c * (3 u u^T / r^2 - I)
            for a in 0..3 {
                for b in 0..3 {
                    let mut blk = 3.0 * u[a] * u[b] / r2;
                    if a == b {
                        blk -= 1.0;
                    }
                    blk *= c;
                    h[[a * n + i, b * n + i]] += blk;
                    h[[a * n + j, b * n + j]] += blk;
                    h[[a * n + i, b * n + j]] -= blk;
                    h[[a * n + j, b * n + i]] -= blk;
                }
            }
        }
    }
    Ok(h)
}

/// Rotate/reflect about the trap axis and sort by z so equivalent equilibria
/// compare equal: the largest-radius ion is put at y = 0, x >= 0, and the
/// second-largest-radius off-axis ion gets azimuth in [0, pi).
pub fn gauge_fix(positions: &mut [[f64; 3]]) -> GaugeRecord {
    let mut record = GaugeRecord::default();
    let radii: Vec<f64> = positions.iter().map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt()).collect();
    let (imax, &rmax) = radii
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty configuration");
    if rmax > 1e-9 {
        let theta = positions[imax][1].atan2(positions[imax][0]);
        record.rotation = -theta;
        let (s, c) = (-theta).sin_cos();
        for p in positions.iter_mut() {
            let (x, y) = (p[0], p[1]);
            p[0] = c * x - s * y;
            p[1] = s * x + c * y;
        }
        // Second-largest-radius off-axis ion decides the handedness.
        let second = radii
            .iter()
            .enumerate()
            .filter(|&(i, &r)| i != imax && r > 1e-9)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i);
        if let Some(i2) = second {
            if positions[i2][1] < -1e-12 * radii[i2] {
                record.reflected = true;
                for p in positions.iter_mut() {
                    p[1] = -p[1];
                }
            }
        }
    }
    positions.sort_by(|a, b| a[2].total_cmp(&b[2]));
    record
}

/// Order parameters and phase classification.
pub fn order_parameters(config: &EquilibriumConfiguration) -> StructureReport {
    structure_report(&config.positions)
}

pub(crate) fn structure_report(positions: &[[f64; 3]]) -> StructureReport {
    let n = positions.len();
    let radii: Vec<f64> = positions.iter().map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt()).collect();
    let radius = radii.iter().fold(0.0_f64, |m, &r| m.max(r));

    let mut zs: Vec<f64> = positions.iter().map(|p| p[2]).collect();
    zs.sort_by(f64::total_cmp);
    let mut min_z_gap = f64::INFINITY;
    for w in zs.windows(2) {
        min_z_gap = min_z_gap.min((w[1] - w[0]).abs());
    }
    if n < 2 {
        min_z_gap = 0.0;
    }

    // Mean azimuthal step over z-adjacent pairs whose radii both exceed R/4;
    // near-axis end ions have ill-defined azimuth and are skipped.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| positions[a][2].total_cmp(&positions[b][2]));
    let rcut = radius / 4.0;
    let mut sum = 0.0;
    let mut count = 0usize;
    for w in order.windows(2) {
        let (i, j) = (w[0], w[1]);
        if radii[i] > rcut && radii[j] > rcut && radii[i] > 1e-12 && radii[j] > 1e-12 {
            let phi_i = positions[i][1].atan2(positions[i][0]);
            let phi_j = positions[j][1].atan2(positions[j][0]);
            let mut d = (phi_j - phi_i).abs() % (2.0 * std::f64::consts::PI);
            if d > std::f64::consts::PI {
                d = 2.0 * std::f64::consts::PI - d;
            }
            sum += d;
            count += 1;
        }
    }
    let mean_azimuthal_step = if count > 0 { sum / count as f64 } else { 0.0 };

    let phase = if radius < LINEAR_RADIUS_THRESHOLD {
        Phase::Linear1D
    } else if min_z_gap < ORDERING_THRESHOLD {
        Phase::Unordered
    } else if (mean_azimuthal_step - std::f64::consts::PI).abs() < ZIGZAG_ANGLE_TOL {
        Phase::ZigZag2D
    } else {
        Phase::Helical3D
    };

    StructureReport { radius, min_z_gap, mean_azimuthal_step, phase }
}

/// Global equilibrium search: differential evolution followed by a
/// damped-Newton polish to `opts.tolerance` on the gradient max-norm.
/// Deterministic given (params, seed, opts).
pub fn find_equilibrium(
    params: &CrystalParams,
    seed: u64,
    opts: &OptimizerOpts,
) -> Result<EquilibriumConfiguration> {
    if params.n_ions < 2 {
        return Err(Error::Config("find_equilibrium requires N >= 2".into()));
    }
    let best = de::differential_evolution(params, seed, opts);
    let polished = polish::polish(params, best, opts)?;
    finish(params, polished, opts)
}

/// Local refinement from a given starting configuration (used for warm starts).
pub fn refine_equilibrium(
    params: &CrystalParams,
    start: Vec<[f64; 3]>,
    opts: &OptimizerOpts,
) -> Result<EquilibriumConfiguration> {
    let polished = polish::polish(params, start, opts)?;
    finish(params, polished, opts)
}

fn finish(
    params: &CrystalParams,
    mut positions: Vec<[f64; 3]>,
    opts: &OptimizerOpts,
) -> Result<EquilibriumConfiguration> {
    let gauge = gauge_fix(&mut positions);
    let energy = potential_energy(params, &positions)?;
    let grad = potential_gradient(params, &positions)?;
    let residual = gradient_max_norm(&grad);
    if residual > opts.tolerance * 10.0 {
        return Err(Error::ConvergenceFailure {
            grad_norm: residual,
            generations: opts.max_generations,
            best: positions.iter().flat_map(|p| p.iter().copied()).collect(),
        });
    }
    Ok(EquilibriumConfiguration { positions, energy, residual_gradient_norm: residual, gauge })
}
