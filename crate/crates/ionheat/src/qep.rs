//! Quadratic eigenvalue problem for the Laplace-transformed Green's function.
//!
//! In the high-cutoff limit G^-1(s) = m s^2 + V_R + 2 s gamma0 P_T is a
//! quadratic matrix polynomial. Its 2K eigenpairs (s_alpha, r_alpha) give the
//! residue expansion
//!
//! ```text
//! G(s) = sum_alpha s_alpha / (s - s_alpha) r_alpha r_alpha^T
//! ```
//!
//! once each eigenvector is scaled so r^T (2 m s I + 2 gamma0 P_T) r = 1/s.
//! The pencil is solved by first-companion linearization, per connected
//! component of the coupling-matrix sparsity pattern. Solving per component
//! keeps the x/y blocks of a linear chain (which have identical spectra)
//! from mixing inside degenerate eigenspaces, and isolates the bath-decoupled
//! blocks whose modes are undamped.

use crate::error::{Error, Result};
use crate::network::{BathConfig, CouplingMatrix};
use ndarray::{Array1, Array2};
use ndarray_linalg::Eig;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Couplings below this magnitude are treated as zero when splitting the
/// coordinate graph into independent components. Equilibrium positions carry
/// residuals of order the gradient tolerance (1e-10), which leak couplings of
/// the same order between blocks that decouple exactly at the true minimum;
/// genuine structural couplings are bounded below by the transverse
/// displacement scale (> 1e-4 for anything classified off-axis). Dropping a
/// coupling of size eps perturbs results at O(eps^2).
const COMPONENT_TOL: f64 = 1e-8;

/// Options for the eigensolve.
#[derive(Debug, Clone)]
pub struct QepOpts {
    /// Two eigenvalues within this relative distance (inside one component)
    /// are reported as a degenerate spectrum.
    pub degeneracy_tol: f64,
    /// If set, retry once after perturbing the matrix diagonal by a seeded
    /// relative jitter of 100 x `degeneracy_tol` when a degenerate spectrum
    /// is detected.
    pub jitter_seed: Option<u64>,
    /// Keep modes with Re(s) > 0 instead of failing. Pinning disorder on a
    /// planar or helical crystal tips a few soft transverse directions
    /// unstable; the transport layer excludes those modes from the steady
    /// state, so the solve itself may carry them through.
    pub allow_unstable: bool,
}

impl Default for QepOpts {
    fn default() -> Self {
        Self { degeneracy_tol: 1e-9, jitter_seed: None, allow_unstable: false }
    }
}

/// One decoupled block of the pencil.
#[derive(Debug, Clone)]
pub struct ModeComponent {
    /// Global coordinate indices of this block, ascending.
    pub coords: Vec<usize>,
    /// Whether any coordinate of the block touches a bath.
    pub damped: bool,
    /// The 2k eigenvalues s_alpha of the block.
    pub eigenvalues: Vec<Complex64>,
    /// k x 2k matrix; column alpha is r_alpha on the block coordinates.
    pub vectors: Array2<Complex64>,
    /// Conjugate-pair map, local indices.
    pub pairing: Vec<usize>,
}

/// All 2K eigenpairs of the quadratic pencil, grouped by component.
#[derive(Debug, Clone)]
pub struct ModeSet {
    k: usize,
    gamma0: f64,
    components: Vec<ModeComponent>,
    /// Global mode order: (component, local index), sorted by complex
    /// frequency for deterministic output.
    index: Vec<(usize, usize)>,
}

impl ModeSet {
    /// Number of degrees of freedom K.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of modes, 2K.
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn components(&self) -> &[ModeComponent] {
        &self.components
    }

    pub fn eigenvalue(&self, alpha: usize) -> Complex64 {
        let (c, l) = self.index[alpha];
        self.components[c].eigenvalues[l]
    }

    /// Complex normal frequency omega_alpha = -i s_alpha.
    pub fn frequency(&self, alpha: usize) -> Complex64 {
        -Complex64::i() * self.eigenvalue(alpha)
    }

    /// Global conjugate-pair index map.
    pub fn pairing(&self, alpha: usize) -> usize {
        let (c, l) = self.index[alpha];
        let lp = self.components[c].pairing[l];
        self.index.iter().position(|&(ci, li)| ci == c && li == lp).expect("pairing closed")
    }

    /// Eigenvector embedded into the full K-dimensional coordinate space.
    pub fn eigenvector(&self, alpha: usize) -> Array1<Complex64> {
        let (c, l) = self.index[alpha];
        let comp = &self.components[c];
        let mut r = Array1::zeros(self.k);
        for (row, &coord) in comp.coords.iter().enumerate() {
            r[coord] = comp.vectors[[row, l]];
        }
        r
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    /// Global position of a component-local mode in the sorted order.
    pub fn global_of(&self, component: usize, local: usize) -> usize {
        self.index
            .iter()
            .position(|&(c, l)| c == component && l == local)
            .expect("local mode indexed")
    }
}

fn connected_components(v: &Array2<f64>) -> Vec<Vec<usize>> {
    let k = v.nrows();
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..k {
        for j in (i + 1)..k {
            if v[[i, j]].abs() > COMPONENT_TOL {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..k {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Solve the pencil with default options.
pub fn solve_qep(v_r: &CouplingMatrix, bath: &BathConfig) -> Result<ModeSet> {
    solve_qep_with(v_r, bath, &QepOpts::default())
}

pub fn solve_qep_with(v_r: &CouplingMatrix, bath: &BathConfig, opts: &QepOpts) -> Result<ModeSet> {
    let mut out = solve_inner(v_r.matrix(), bath, opts.degeneracy_tol, opts.allow_unstable);
    if let Some(seed) = opts.jitter_seed {
        // A jittered spectrum can still land an accidental pair inside the
        // tolerance, so retry with escalating amplitude (still tiny).
        for attempt in 0..4u64 {
            match out {
                Err(Error::DegenerateSpectrum { .. }) => {
                    let mut m = v_r.matrix().clone();
                    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
                    let amp = 100.0 * opts.degeneracy_tol * 10f64.powi(attempt as i32);
                    for d in 0..m.nrows() {
                        m[[d, d]] *= 1.0 + rng.gen_range(-amp..amp);
                    }
                    out = solve_inner(&m, bath, opts.degeneracy_tol, opts.allow_unstable);
                }
                other => return other,
            }
        }
    }
    out
}

fn solve_inner(
    v: &Array2<f64>,
    bath: &BathConfig,
    degeneracy_tol: f64,
    allow_unstable: bool,
) -> Result<ModeSet> {
    let k = v.nrows();
    let gamma0 = bath.gamma0;
    let pt = bath.p_total();
    let mut components = Vec::new();

    for coords in connected_components(v) {
        let kc = coords.len();
        let damped = coords.iter().any(|&i| pt[i] > 0.0);

        // First-companion linearization acting on (X, sX).
        let mut companion = Array2::<f64>::zeros((2 * kc, 2 * kc));
        for i in 0..kc {
            companion[[i, kc + i]] = 1.0;
            for j in 0..kc {
                companion[[kc + i, j]] = -v[[coords[i], coords[j]]];
            }
            companion[[kc + i, kc + i]] = -2.0 * gamma0 * pt[coords[i]];
        }
        let (vals, vecs) = companion.eig()?;

        // Degeneracy inside the block breaks the simple-pole residue formula.
        let scale = vals.iter().fold(0.0_f64, |m, s| m.max(s.norm()));
        for a in 0..2 * kc {
            for b in (a + 1)..2 * kc {
                let dist = (vals[a] - vals[b]).norm();
                if dist < degeneracy_tol * scale {
                    return Err(Error::DegenerateSpectrum { a, b, dist: dist / scale });
                }
            }
        }

        // Rescale to the residue normalization r^T (2 m s + 2 gamma0 P_T) r = 1/s.
        let mut rvecs = Array2::<Complex64>::zeros((kc, 2 * kc));
        let mut svals = Vec::with_capacity(2 * kc);
        for a in 0..2 * kc {
            let s = vals[a];
            let x = vecs.column(a);
            let mut xtx = Complex64::new(0.0, 0.0);
            let mut xtpx = Complex64::new(0.0, 0.0);
            for i in 0..kc {
                xtx += x[i] * x[i];
                xtpx += x[i] * x[i] * pt[coords[i]];
            }
            let c = 2.0 * s * xtx + 2.0 * gamma0 * xtpx;
            let cs = c * s;
            if cs.norm() < 1e-300 {
                return Err(Error::NumericConsistency(format!(
                    "defective eigenpair at s = {s}: residue normalization vanished"
                )));
            }
            let mu = Complex64::new(1.0, 0.0) / cs.sqrt();
            for i in 0..kc {
                rvecs[[i, a]] = mu * x[i];
            }
            svals.push(s);
        }

        // Canonicalize conjugate pairs: match each eigenvalue with Im > 0 to
        // its nearest conjugate and overwrite the partner exactly.
        let mut pairing = vec![usize::MAX; 2 * kc];
        let mut used = vec![false; 2 * kc];
        for a in 0..2 * kc {
            if used[a] || svals[a].im <= 0.0 {
                continue;
            }
            let target = svals[a].conj();
            let mut best = None;
            let mut best_d = f64::INFINITY;
            for b in 0..2 * kc {
                if b == a || used[b] || svals[b].im > 0.0 {
                    continue;
                }
                let d = (svals[b] - target).norm();
                if d < best_d {
                    best_d = d;
                    best = Some(b);
                }
            }
            let b = best.ok_or_else(|| {
                Error::NumericConsistency("unpaired complex eigenvalue".into())
            })?;
            svals[b] = svals[a].conj();
            for i in 0..kc {
                rvecs[[i, b]] = rvecs[[i, a]].conj();
            }
            pairing[a] = b;
            pairing[b] = a;
            used[a] = true;
            used[b] = true;
        }
        // Real eigenvalues are their own partners.
        for a in 0..2 * kc {
            if pairing[a] == usize::MAX {
                pairing[a] = a;
            }
        }

        // Dissipative stability; bath-decoupled modes may sit exactly on the axis.
        if !allow_unstable {
            for s in &svals {
                if s.re > 1e-10 * scale.max(1.0) {
                    return Err(Error::NumericConsistency(format!(
                        "unstable mode Re(s) = {} > 0",
                        s.re
                    )));
                }
            }
        }

        components.push(ModeComponent {
            coords,
            damped,
            eigenvalues: svals,
            vectors: rvecs,
            pairing,
        });
    }

    // Deterministic global order: by Re(omega) = Im(s), then damping.
    let mut index: Vec<(usize, usize)> = components
        .iter()
        .enumerate()
        .flat_map(|(c, comp)| (0..comp.eigenvalues.len()).map(move |l| (c, l)))
        .collect();
    index.sort_by(|&(ca, la), &(cb, lb)| {
        let sa = components[ca].eigenvalues[la];
        let sb = components[cb].eigenvalues[lb];
        (sa.im, sa.re, ca, la).partial_cmp(&(sb.im, sb.re, cb, lb)).unwrap()
    });

    Ok(ModeSet { k, gamma0, components, index })
}

/// Evaluate the residue expansion of G(s) at a regular point.
pub fn green_eval(modes: &ModeSet, s: Complex64) -> Result<Array2<Complex64>> {
    for comp in &modes.components {
        for &sa in &comp.eigenvalues {
            let dist = (s - sa).norm();
            if dist < 1e-12 {
                return Err(Error::NearPole { pole: sa, dist });
            }
        }
    }
    let k = modes.k;
    let mut g = Array2::<Complex64>::zeros((k, k));
    for comp in &modes.components {
        let kc = comp.coords.len();
        // W = R diag(s_a / (s - s_a)) R^T on the block.
        let mut scaled = comp.vectors.clone();
        for (a, &sa) in comp.eigenvalues.iter().enumerate() {
            let w = sa / (s - sa);
            for i in 0..kc {
                scaled[[i, a]] *= w;
            }
        }
        let block = scaled.dot(&comp.vectors.t());
        for (bi, &gi) in comp.coords.iter().enumerate() {
            for (bj, &gj) in comp.coords.iter().enumerate() {
                g[[gi, gj]] = block[[bi, bj]];
            }
        }
    }
    Ok(g)
}
