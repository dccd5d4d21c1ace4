//! Steady-state covariances, heat currents, and local temperatures.
//!
//! Everything here is built from the residue expansion of the Green's
//! function in the high-temperature, high-cutoff limit. All double sums over
//! modes run inside one decoupled component at a time: cross-component
//! residues vanish identically, and bath-decoupled blocks reach no steady
//! state and carry no heat, so they are skipped.

use crate::error::{Error, Result};
use crate::network::BathConfig;
use crate::qep::{ModeComponent, ModeSet};
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Steady-state second moments of the crystal coordinates.
#[derive(Debug, Clone)]
pub struct Covariance {
    /// Position-position block sigma^(0,0).
    pub xx: Array2<f64>,
    /// Position-momentum block sigma^(0,1).
    pub xp: Array2<f64>,
    /// Momentum-momentum block sigma^(1,1).
    pub pp: Array2<f64>,
}

/// How a local temperature is read off a momentum variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureMode {
    /// Classical equipartition: T_i = <p_i^2> / m.
    #[default]
    HighT,
    /// Invert the thermal occupation of an effective local oscillator with
    /// frequency sqrt(V_ii).
    Coth,
}

/// Relative tolerance on the imaginary residue of sums that must be real.
const IM_RESIDUE_TOL: f64 = 1e-8;
/// |omega_a + omega_b| below this (relative) is a vanishing denominator.
const PAIR_TOL: f64 = 1e-10;
/// Coefficients this small (relative) multiply a vanishing denominator to
/// give zero rather than a pole.
const COEFF_TOL: f64 = 1e-10;

/// Re(s) above this (relative to the spectral scale) marks a runaway mode.
const UNSTABLE_TOL: f64 = 1e-8;

fn frequencies(comp: &ModeComponent) -> Vec<Complex64> {
    comp.eigenvalues.iter().map(|s| -Complex64::i() * s).collect()
}

/// Modes with Re(s) > 0 grow without bound and reach no steady state, so they
/// are excluded from every stationary sum: the steady state is taken on the
/// stable subspace. This happens when pinning disorder tips the soft
/// transverse band of a planar or helical crystal slightly negative; for a
/// positive-definite coupling matrix every entry is true.
fn stable_mask(comp: &ModeComponent) -> Vec<bool> {
    let scale = comp.eigenvalues.iter().fold(0.0_f64, |m, s| m.max(s.norm()));
    comp.eigenvalues
        .iter()
        .map(|s| s.re <= UNSTABLE_TOL * scale.max(1.0))
        .collect()
}

/// B = R^T diag(d) R with the bilinear (unconjugated) transpose.
fn folded(comp: &ModeComponent, diag: &Array1<f64>) -> Array2<Complex64> {
    let kc = comp.coords.len();
    let nm = comp.eigenvalues.len();
    let mut scaled = comp.vectors.clone();
    for (row, &coord) in comp.coords.iter().enumerate() {
        let d = diag[coord];
        for a in 0..nm {
            scaled[[row, a]] *= d;
        }
    }
    let mut b = Array2::<Complex64>::zeros((nm, nm));
    for a in 0..nm {
        for bidx in 0..nm {
            let mut acc = Complex64::new(0.0, 0.0);
            for row in 0..kc {
                acc += comp.vectors[[row, a]] * scaled[[row, bidx]];
            }
            b[[a, bidx]] = acc;
        }
    }
    b
}

/// Pair weight w_a^pa w_b^pb / (w_a + w_b) with the vanishing-denominator
/// guard.
///
/// A mode and its own conjugate always have w_a + w_b = 2i Im(w_a): small for
/// weakly damped modes but exact and physical (the coefficient shrinks along
/// with it), so conjugate pairs bypass the degeneracy guard.
fn pair_weight(
    wa: Complex64,
    wb: Complex64,
    pa: u32,
    pb: u32,
    coeff: Complex64,
    coeff_scale: f64,
    freq_scale: f64,
    conjugate_pair: bool,
) -> Result<Complex64> {
    let den = wa + wb;
    if !conjugate_pair && den.norm() < PAIR_TOL * freq_scale {
        if coeff.norm() <= COEFF_TOL * coeff_scale {
            return Ok(Complex64::new(0.0, 0.0));
        }
        return Err(Error::DegeneratePair { sum: den.norm() });
    }
    if den.norm() == 0.0 {
        // A conjugate pair with an exactly zero sum is a mode whose damping
        // underflowed: its bath overlap is so small it never thermalizes, so
        // it contributes nothing to the stationary sums.
        if conjugate_pair {
            return Ok(Complex64::new(0.0, 0.0));
        }
        return Err(Error::DegeneratePair { sum: 0.0 });
    }
    Ok(wa.powu(pa) * wb.powu(pb) / den * coeff)
}

fn check_real(z: Complex64, scale: f64, what: &str) -> Result<f64> {
    if z.im.abs() > IM_RESIDUE_TOL * scale.max(1e-300) {
        return Err(Error::NumericConsistency(format!(
            "{what}: imaginary residue {} exceeds tolerance (scale {scale})",
            z.im
        )));
    }
    Ok(z.re)
}

/// One (j,k) covariance block over one component, as a complex matrix before
/// the prefactor and real part are applied.
fn covariance_block(
    comp: &ModeComponent,
    a_diag: &Array1<f64>,
    j: u32,
    k: u32,
) -> Result<Array2<Complex64>> {
    let nm = comp.eigenvalues.len();
    let kc = comp.coords.len();
    let w = frequencies(comp);
    let freq_scale = w.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    let b = folded(comp, a_diag);
    let coeff_scale = b.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    let stable = stable_mask(comp);
    // M_{ab} = w_a^{j+1} w_b^{k+1} / (w_a + w_b) B_{ab}; block = R M R^T.
    // These powers keep the double sum equal, term by term, to the converged
    // time integral of the driven dynamics, so it stays exact when unstable
    // modes are excluded; the collapsed w_a^{j+k+1} w_b variant agrees only
    // through sum rules over the complete mode set.
    let mut m = Array2::<Complex64>::zeros((nm, nm));
    for a in 0..nm {
        for bi in 0..nm {
            if !stable[a] || !stable[bi] {
                continue;
            }
            m[[a, bi]] = pair_weight(
                w[a],
                w[bi],
                j + 1,
                k + 1,
                b[[a, bi]],
                coeff_scale,
                freq_scale,
                comp.pairing[a] == bi,
            )?;
        }
    }
    let rm = comp.vectors.dot(&m);
    let mut block = Array2::<Complex64>::zeros((kc, kc));
    for i in 0..kc {
        for jj in 0..kc {
            let mut acc = Complex64::new(0.0, 0.0);
            for a in 0..nm {
                acc += rm[[i, a]] * comp.vectors[[jj, a]];
            }
            block[[i, jj]] = acc;
        }
    }
    Ok(block)
}

/// Steady-state covariance blocks sigma^(0,0), sigma^(0,1), sigma^(1,1).
pub fn covariance(modes: &ModeSet, bath: &BathConfig) -> Result<Covariance> {
    let k = modes.k();
    let a_diag = bath.a_matrix();
    let gamma0 = modes.gamma0();
    let mut xx = Array2::<f64>::zeros((k, k));
    let mut xp = Array2::<f64>::zeros((k, k));
    let mut pp = Array2::<f64>::zeros((k, k));

    for comp in modes.components() {
        if !comp.damped {
            continue;
        }
        // Scale the imaginary-residue check by the largest of the three
        // blocks: the xp block vanishes identically in equilibrium and would
        // otherwise be compared against its own roundoff.
        let blocks: Vec<(Array2<Complex64>, &mut Array2<f64>)> = vec![
            (covariance_block(comp, &a_diag, 0, 0)?, &mut xx),
            (covariance_block(comp, &a_diag, 0, 1)?, &mut xp),
            (covariance_block(comp, &a_diag, 1, 1)?, &mut pp),
        ];
        // Prefactor 2 gamma0 (-i^{j+k+1}) (m = 1): -i, 1, +i for the three
        // blocks.
        let prefs = [
            Complex64::new(0.0, -1.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
        ]
        .map(|p| 2.0 * gamma0 * p);
        let scale = blocks
            .iter()
            .zip(&prefs)
            .fold(0.0_f64, |m, ((b, _), pref)| {
                b.iter().fold(m, |m, z| m.max((pref * z).norm()))
            });
        for ((block, out), pref) in blocks.into_iter().zip(prefs) {
            for (bi, &gi) in comp.coords.iter().enumerate() {
                for (bj, &gj) in comp.coords.iter().enumerate() {
                    out[[gi, gj]] =
                        check_real(pref * block[[bi, bj]], scale, "covariance")?;
                }
            }
        }
    }
    // The xx and pp blocks are symmetric by construction; remove roundoff.
    for i in 0..k {
        for j in (i + 1)..k {
            let sxx = 0.5 * (xx[[i, j]] + xx[[j, i]]);
            xx[[i, j]] = sxx;
            xx[[j, i]] = sxx;
            let spp = 0.5 * (pp[[i, j]] + pp[[j, i]]);
            pp[[i, j]] = spp;
            pp[[j, i]] = spp;
        }
    }
    Ok(Covariance { xx, xp, pp })
}

fn current_sums(modes: &ModeSet, bath: &BathConfig) -> Result<Vec<(usize, Complex64)>> {
    current_sums_with(modes, &bath.p_left(), &bath.p_right())
}

fn current_sums_with(
    modes: &ModeSet,
    pl: &Array1<f64>,
    pr: &Array1<f64>,
) -> Result<Vec<(usize, Complex64)>> {
    // Per-mode partial sums: for each global mode a, the inner sum over b of
    // w_a^3 w_b / (w_a + w_b) (r_a^T P_L r_b)(r_b^T P_R r_a).
    let mut out = Vec::new();
    for (ci, comp) in modes.components().iter().enumerate() {
        if !comp.damped {
            continue;
        }
        let overlaps_l = comp.coords.iter().any(|&i| pl[i] > 0.0);
        let overlaps_r = comp.coords.iter().any(|&i| pr[i] > 0.0);
        if !overlaps_l || !overlaps_r {
            continue;
        }
        let w = frequencies(comp);
        let freq_scale = w.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
        let bl = folded(comp, pl);
        let br = folded(comp, pr);
        let coeff_scale = bl
            .iter()
            .zip(br.iter())
            .fold(0.0_f64, |m, (l, r)| m.max((l * r).norm()));
        let nm = comp.eigenvalues.len();
        let stable = stable_mask(comp);
        for a in 0..nm {
            let mut acc = Complex64::new(0.0, 0.0);
            for b in 0..nm {
                if !stable[a] || !stable[b] {
                    continue;
                }
                let coeff = bl[[a, b]] * br[[b, a]];
                acc += pair_weight(
                    w[a],
                    w[b],
                    3,
                    1,
                    coeff,
                    coeff_scale,
                    freq_scale,
                    comp.pairing[a] == b,
                )?;
            }
            out.push((modes.global_of(ci, a), acc));
        }
    }
    Ok(out)
}

/// Stationary heat current flowing from the left bath into the crystal.
/// Positive when the left bath is hotter.
pub fn heat_current(modes: &ModeSet, bath: &BathConfig) -> Result<f64> {
    let sums = current_sums(modes, bath)?;
    let total: Complex64 = sums.iter().map(|&(_, z)| z).sum();
    let gamma0 = modes.gamma0();
    let delta = Complex64::new(0.0, -2.0 * (bath.t_left - bath.t_right));
    let q = 4.0 * gamma0 * gamma0 * delta * total;
    let scale = sums
        .iter()
        .fold(0.0_f64, |m, &(_, z)| m.max((4.0 * gamma0 * gamma0 * delta * z).norm()));
    check_real(q, scale, "heat current")
}

/// Per-mode decomposition of the stationary heat current, in the global mode
/// order of `modes`. Modes of bath-decoupled blocks carry exactly zero.
pub fn mode_currents(modes: &ModeSet, bath: &BathConfig) -> Result<Vec<f64>> {
    let sums = current_sums(modes, bath)?;
    let gamma0 = modes.gamma0();
    let delta = Complex64::new(0.0, -2.0 * (bath.t_left - bath.t_right));
    let mut out = vec![0.0; modes.len()];
    // Individual terms need not be real; only conjugate pairs are. Assign
    // each pair's real total in equal halves so the decomposition sums to
    // the full current.
    for &(g, z) in &sums {
        let q = 4.0 * gamma0 * gamma0 * delta * z;
        let partner = modes.pairing(g);
        if partner == g {
            out[g] += q.re;
        } else {
            out[g] += 0.5 * q.re;
            out[partner] += 0.5 * q.re;
        }
    }
    Ok(out)
}

/// Per-mode currents with the same (left) bath projector in both inner
/// products. This printed form of the per-mode decomposition does not
/// partition the total current; it is exposed for comparison only.
pub fn mode_currents_literal(modes: &ModeSet, bath: &BathConfig) -> Result<Vec<f64>> {
    let pl = bath.p_left();
    let sums = current_sums_with(modes, &pl, &pl)?;
    let gamma0 = modes.gamma0();
    let delta = Complex64::new(0.0, -2.0 * (bath.t_left - bath.t_right));
    let mut out = vec![0.0; modes.len()];
    for &(g, z) in &sums {
        let q = 4.0 * gamma0 * gamma0 * delta * z;
        let partner = modes.pairing(g);
        if partner == g {
            out[g] += q.re;
        } else {
            out[g] += 0.5 * q.re;
            out[partner] += 0.5 * q.re;
        }
    }
    Ok(out)
}

/// Local temperature of each coordinate from its momentum variance.
pub fn coordinate_temperatures(
    pp_diag: &[f64],
    v_diag: &[f64],
    mode: TemperatureMode,
) -> Result<Vec<f64>> {
    pp_diag
        .iter()
        .zip(v_diag)
        .enumerate()
        .map(|(index, (&p2, &vii))| match mode {
            TemperatureMode::HighT => Ok(p2),
            TemperatureMode::Coth => {
                let w = vii.max(0.0).sqrt();
                if w == 0.0 {
                    return Ok(p2);
                }
                // <p^2> = (w/2) coth(w / 2T); invert by bisection.
                let rhs = 2.0 * p2 / w;
                if rhs <= 1.0 {
                    return Err(Error::UnphysicalDispersion { index });
                }
                let f = |t: f64| (w / (2.0 * t)).tanh().recip() - rhs;
                let mut lo = 1e-12;
                let mut hi = (rhs * w).max(1.0);
                while f(hi) < 0.0 {
                    hi *= 2.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok(0.5 * (lo + hi))
            }
        })
        .collect()
}

/// Per-ion transverse temperature: mean of the x and y coordinate readings.
pub fn transverse_ion_temperatures(coord_temps: &[f64], n_ions: usize) -> Vec<f64> {
    (0..n_ions)
        .map(|i| 0.5 * (coord_temps[i] + coord_temps[n_ions + i]))
        .collect()
}

/// Thermal conductivity kappa = |Qdot| L / |T_L - T_R|.
pub fn conductivity(q_dot: f64, length: f64, t_left: f64, t_right: f64) -> Result<f64> {
    let dt = t_left - t_right;
    if dt == 0.0 {
        return Err(Error::UndefinedConductivity);
    }
    Ok(q_dot.abs() * length / dt.abs())
}

/// Slope of the temperature profile over the central half of the chain,
/// normalized by the boundary-imposed gradient (t_right - t_left) / L.
pub fn central_gradient(
    temps: &[f64],
    zs: &[f64],
    t_left: f64,
    t_right: f64,
) -> Result<f64> {
    let n = temps.len();
    if n != zs.len() || n < 4 {
        return Err(Error::FitError(format!(
            "central gradient needs at least 4 ions, got {n}"
        )));
    }
    let lo = n / 4;
    let hi = n - n / 4;
    let z = &zs[lo..hi];
    let t = &temps[lo..hi];
    let m = z.len() as f64;
    let zbar = z.iter().sum::<f64>() / m;
    let tbar = t.iter().sum::<f64>() / m;
    let mut num = 0.0;
    let mut den = 0.0;
    for (zi, ti) in z.iter().zip(t) {
        num += (zi - zbar) * (ti - tbar);
        den += (zi - zbar) * (zi - zbar);
    }
    if den == 0.0 {
        return Err(Error::FitError("degenerate axial positions".into()));
    }
    let length = zs[n - 1] - zs[0];
    let imposed = (t_right - t_left) / length;
    if imposed == 0.0 {
        return Err(Error::UndefinedConductivity);
    }
    Ok((num / den) / imposed)
}
