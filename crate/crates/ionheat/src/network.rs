//! Harmonic model around equilibrium: the 3N x 3N coupling matrix, bath
//! projectors, and the pinning-disorder transformation.
//!
//! Coordinates use an axis-major layout: rows/columns 0..N are x, N..2N are
//! y, 2N..3N are z, matching `crystal::potential_hessian`.

use crate::crystal::{potential_hessian, CrystalParams, EquilibriumConfiguration};
use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Coordinate axes in the axis-major layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X = 0,
    Y = 1,
    Z = 2,
}

/// Which diagonal entries the disorder rule multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DisorderAxes {
    /// Transverse x and y (default; transport and temperatures are transverse).
    Xy,
    /// x only.
    X,
    /// All three.
    Xyz,
}

impl DisorderAxes {
    fn axes(self) -> &'static [Axis] {
        match self {
            DisorderAxes::Xy => &[Axis::X, Axis::Y],
            DisorderAxes::X => &[Axis::X],
            DisorderAxes::Xyz => &[Axis::X, Axis::Y, Axis::Z],
        }
    }
}

/// Multiplicative pinning disorder: `floor(N/2)` ions drawn without
/// replacement, each with its own +-1 sign; the chosen diagonal entries are
/// multiplied by (1 + sign * d).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisorderSpec {
    pub d: f64,
    pub seed: u64,
    pub axes: DisorderAxes,
    /// Affected ion indices, ascending.
    pub affected_ions: Vec<usize>,
    /// +-1.0 per affected ion, aligned with `affected_ions`.
    pub signs: Vec<f64>,
}

impl DisorderSpec {
    /// Draw the affected set and signs deterministically from the seed.
    pub fn draw(d: f64, seed: u64, n_ions: usize, axes: DisorderAxes) -> Self {
        let count = n_ions / 2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut affected = rand::seq::index::sample(&mut rng, n_ions, count).into_vec();
        affected.sort_unstable();
        let signs = affected
            .iter()
            .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
            .collect();
        Self { d, seed, axes, affected_ions: affected, signs }
    }
}

/// The symmetric, positive-definite coupling matrix V of the harmonic model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingMatrix {
    v: Array2<f64>,
    n_ions: usize,
    pub disorder_applied: Option<DisorderSpec>,
}

impl CouplingMatrix {
    pub fn n_ions(&self) -> usize {
        self.n_ions
    }

    /// Number of degrees of freedom K = 3N.
    pub fn k(&self) -> usize {
        3 * self.n_ions
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.v
    }

    /// Row index of (ion, axis) in the axis-major layout.
    pub fn coordinate_index(&self, ion: usize, axis: Axis) -> usize {
        (axis as usize) * self.n_ions + ion
    }

    /// Construct directly from a symmetric matrix (used by tests and the
    /// scalar/oracle paths). Symmetry is enforced, positive definiteness is not.
    pub fn from_matrix(v: Array2<f64>) -> Result<Self> {
        let k = v.nrows();
        if k % 3 != 0 || v.ncols() != k {
            return Err(Error::Config(format!("coupling matrix must be square 3N x 3N, got {k}x{}", v.ncols())));
        }
        let v = symmetrize(v);
        Ok(Self { v, n_ions: k / 3, disorder_applied: None })
    }

    /// Smallest eigenvalue together with the overall spectral scale
    /// (largest absolute eigenvalue).
    fn eigen_extrema(&self) -> Result<(f64, f64)> {
        let (eigs, _) = self.v.eigh(UPLO::Lower)?;
        let min = eigs.iter().copied().fold(f64::INFINITY, f64::min);
        let scale = eigs.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        Ok((min, scale))
    }
}

fn symmetrize(mut v: Array2<f64>) -> Array2<f64> {
    let k = v.nrows();
    for i in 0..k {
        for j in (i + 1)..k {
            let s = 0.5 * (v[[i, j]] + v[[j, i]]);
            v[[i, j]] = s;
            v[[j, i]] = s;
        }
    }
    v
}

/// Second-order expansion of the trap + Coulomb potential at an equilibrium.
pub fn build_hessian(
    params: &CrystalParams,
    config: &EquilibriumConfiguration,
) -> Result<CouplingMatrix> {
    let h = potential_hessian(params, &config.positions)?;
    let cm = CouplingMatrix { v: symmetrize(h), n_ions: config.n_ions(), disorder_applied: None };
    // Zigzag and helical crystals carry an exact rotational zero mode, so the
    // smallest eigenvalue can land a hair below zero in floating point.
    let (min_eig, scale) = cm.eigen_extrema()?;
    if min_eig < -1e-10 * scale.max(1.0) {
        return Err(Error::UnstableEquilibrium { min_eigenvalue: min_eig });
    }
    Ok(cm)
}

/// Apply pinning disorder: the selected diagonal entries are multiplied by
/// (1 +- d); everything else is untouched. The input is not modified.
pub fn apply_disorder(v: &CouplingMatrix, spec: &DisorderSpec) -> Result<CouplingMatrix> {
    let (out, soft) = apply_disorder_tolerant(v, spec)?;
    if soft > 0 {
        let (min_eig, _) = out.eigen_extrema()?;
        return Err(Error::UnstableMatrix { d: spec.d, min_eigenvalue: min_eig });
    }
    Ok(out)
}

/// Like [`apply_disorder`], but tolerates a matrix pushed indefinite by the
/// pinning kicks. Planar and helical crystals sit on a rotational zero mode,
/// so any finite `d` tips a handful of soft transverse directions negative;
/// the transport layer excludes the corresponding unstable modes from the
/// steady state. Returns the matrix together with the number of non-positive
/// eigenvalue directions.
pub fn apply_disorder_tolerant(
    v: &CouplingMatrix,
    spec: &DisorderSpec,
) -> Result<(CouplingMatrix, usize)> {
    let mut out = v.clone();
    for (&ion, &sign) in spec.affected_ions.iter().zip(spec.signs.iter()) {
        for &axis in spec.axes.axes() {
            let idx = v.coordinate_index(ion, axis);
            out.v[[idx, idx]] *= 1.0 + sign * spec.d;
        }
    }
    out.disorder_applied = Some(spec.clone());
    if spec.d == 0.0 {
        return Ok((out, 0));
    }
    let (eigs, _) = out.v.eigh(UPLO::Lower)?;
    let soft = eigs.iter().filter(|&&e| e <= 0.0).count();
    Ok((out, soft))
}

/// How the bath regions are selected.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum BathRegion {
    /// The `ceil(fraction * N)` lowest-z ions on the left and highest-z on the
    /// right (configurations are z-sorted after gauge fixing).
    Fraction(f64),
    Explicit { left: Vec<usize>, right: Vec<usize> },
}

/// Reservoir temperatures, coupling rate, and the coupled ion sets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BathConfig {
    pub gamma0: f64,
    pub t_left: f64,
    pub t_right: f64,
    pub left_ions: Vec<usize>,
    pub right_ions: Vec<usize>,
    pub n_ions: usize,
    /// High-frequency cutoff; only the infinite-cutoff limit is supported
    /// end to end, the value is carried for reporting.
    pub cutoff: f64,
}

pub fn make_bath(
    gamma0: f64,
    t_left: f64,
    t_right: f64,
    region: BathRegion,
    n_ions: usize,
) -> Result<BathConfig> {
    if !(gamma0 > 0.0) {
        return Err(Error::Config(format!("gamma0 must be positive, got {gamma0}")));
    }
    if t_left < 0.0 || t_right < 0.0 {
        return Err(Error::Config("bath temperatures must be nonnegative".into()));
    }
    let (left_ions, right_ions) = match region {
        BathRegion::Fraction(f) => {
            if !(f > 0.0 && f <= 0.5) {
                return Err(Error::InvalidRegion(format!("fraction must be in (0, 0.5], got {f}")));
            }
            let count = ((f * n_ions as f64).ceil() as usize).max(1);
            if 2 * count > n_ions {
                return Err(Error::InvalidRegion(format!(
                    "regions of {count} ions overlap for N = {n_ions}"
                )));
            }
            ((0..count).collect(), ((n_ions - count)..n_ions).collect())
        }
        BathRegion::Explicit { left, right } => (left, right),
    };
    if left_ions.is_empty() || right_ions.is_empty() {
        return Err(Error::InvalidRegion("both bath regions must be nonempty".into()));
    }
    if left_ions.iter().any(|i| right_ions.contains(i)) {
        return Err(Error::InvalidRegion("bath regions overlap".into()));
    }
    if left_ions.iter().chain(right_ions.iter()).any(|&i| i >= n_ions) {
        return Err(Error::InvalidRegion("bath ion index out of range".into()));
    }
    Ok(BathConfig { gamma0, t_left, t_right, left_ions, right_ions, n_ions, cutoff: f64::INFINITY })
}

impl BathConfig {
    fn projector(&self, ions: &[usize]) -> Array1<f64> {
        let n = self.n_ions;
        let mut p = Array1::zeros(3 * n);
        for &i in ions {
            p[i] = 1.0; // x
            p[n + i] = 1.0; // y
        }
        p
    }

    /// Diagonal of P_L (x,y coordinates of the left ions).
    pub fn p_left(&self) -> Array1<f64> {
        self.projector(&self.left_ions)
    }

    /// Diagonal of P_R.
    pub fn p_right(&self) -> Array1<f64> {
        self.projector(&self.right_ions)
    }

    /// Diagonal of P_T = P_L + P_R.
    pub fn p_total(&self) -> Array1<f64> {
        self.p_left() + self.p_right()
    }

    /// Diagonal of A = 2 k_B sum_l T_l P_l (k_B = 1).
    pub fn a_matrix(&self) -> Array1<f64> {
        2.0 * (self.t_left * self.p_left() + self.t_right * self.p_right())
    }
}
