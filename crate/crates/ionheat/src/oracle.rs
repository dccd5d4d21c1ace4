//! Brute-force frequency-domain evaluation of the steady-state integrals.
//!
//! Everything in this module works by direct numerical quadrature with one
//! matrix inversion per frequency point — the method the residue expansion
//! exists to avoid. It is deliberately independent of `qep`/`transport` so
//! the two paths can check each other.
//!
//! The integrands are sums of Lorentzian peaks of width ~gamma0 centered on
//! the normal-mode frequencies, so the quadrature uses panel breakpoints in
//! geometric ladders around each resonance plus a 1/omega-substituted tail
//! panel, with adaptive Simpson refinement inside each panel.

use crate::error::{Error, Result};
use crate::network::{BathConfig, CouplingMatrix};
use crate::transport::TemperatureMode;
use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, Inverse, UPLO};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureScheme {
    #[default]
    AdaptiveSimpson,
}

/// Controls for the frequency quadrature.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Upper integration limit; the remainder is handled by a substituted
    /// tail panel. Defaults to 3x the largest resonance.
    pub max_frequency: Option<f64>,
    /// Subintervals of the initial composite pass per panel.
    pub points: usize,
    /// Relative tolerance on the final estimate.
    pub rel_tol: f64,
    pub scheme: QuadratureScheme,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            max_frequency: None,
            points: 16,
            rel_tol: 1e-9,
            scheme: QuadratureScheme::AdaptiveSimpson,
        }
    }
}

/// Green's function at s = i omega by direct inversion of
/// (-omega^2 I + V_R + 2 i omega gamma0 P_T).
pub fn quad_green(
    v_r: &CouplingMatrix,
    bath: &BathConfig,
    omega: f64,
) -> Result<Array2<Complex64>> {
    let k = v_r.k();
    let pt = bath.p_total();
    let mut m = Array2::<Complex64>::zeros((k, k));
    for i in 0..k {
        for j in 0..k {
            m[[i, j]] = Complex64::new(v_r.matrix()[[i, j]], 0.0);
        }
        m[[i, i]] += Complex64::new(-omega * omega, 2.0 * omega * bath.gamma0 * pt[i]);
    }
    m.inv().map_err(|_| Error::Singularity { omega })
}

/// Resonance frequencies of V_R (positions of the integrand's peaks).
fn resonances(v_r: &CouplingMatrix) -> Result<Vec<f64>> {
    let (vals, _) = v_r.matrix().eigh(UPLO::Lower)?;
    Ok(vals.iter().map(|&l| l.max(0.0).sqrt()).collect())
}

/// Panel breakpoints: geometric ladders around every resonance, slightly
/// asymmetric so no Simpson evaluation point ever lands exactly on an
/// undamped resonance (where the inversion is singular).
fn breakpoints(res: &[f64], gamma0: f64, w_max: f64) -> Vec<f64> {
    let mut pts = vec![0.0, w_max];
    let width = gamma0.max(1e-12);
    for &w in res {
        for step in [1.0, 4.0, 16.0, 64.0, 256.0, 1024.0] {
            let lo = w - step * width;
            let hi = w + 1.5 * step * width;
            if lo > 0.0 && lo < w_max {
                pts.push(lo);
            }
            if hi > 0.0 && hi < w_max {
                pts.push(hi);
            }
        }
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-14 * w_max);
    pts
}

/// Integrands return their value plus a pointwise roundoff-noise estimate
/// (the pre-cancellation magnitude times machine epsilon); the quadrature
/// refuses to resolve structure below that noise.
fn simpson_pass<F>(f: &F, a: f64, b: f64, n: usize) -> Result<(Array2<f64>, f64)>
where
    F: Fn(f64) -> Result<(Array2<f64>, f64)>,
{
    let n = n.max(2) & !1;
    let h = (b - a) / n as f64;
    let mut acc: Option<Array2<f64>> = None;
    let mut noise = 0.0_f64;
    for i in 0..=n {
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let (v, nv) = f(a + i as f64 * h)?;
        noise = noise.max(nv);
        match &mut acc {
            None => acc = Some(v * w),
            Some(s) => *s = &*s + &(v * w),
        }
    }
    Ok((acc.unwrap() * (h / 3.0), noise))
}

fn max_abs(m: &Array2<f64>) -> f64 {
    m.iter().fold(0.0_f64, |s, &x| s.max(x.abs()))
}

fn refine<F>(
    f: &F,
    a: f64,
    b: f64,
    coarse: (Array2<f64>, f64),
    n: usize,
    tol: f64,
    depth: u32,
) -> Result<Array2<f64>>
where
    F: Fn(f64) -> Result<(Array2<f64>, f64)>,
{
    let mid = 0.5 * (a + b);
    let (left, nl) = simpson_pass(f, a, mid, n)?;
    let (right, nr) = simpson_pass(f, mid, b, n)?;
    let fine = &left + &right;
    let err = max_abs(&(&fine - &coarse.0));
    // A panel of pure roundoff noise disagrees with its halves by about
    // (pointwise noise amplitude) x (panel width) at every depth, so an
    // explicit floor at that level is the only thing that stops refinement
    // from recursing forever on integrands that vanish by cancellation.
    let noise = coarse.1.max(nl).max(nr);
    if err <= tol.max(noise * (b - a)) {
        return Ok(fine);
    }
    if depth == 0 {
        return Err(Error::QuadratureFailure { estimate: err });
    }
    let l = refine(f, a, mid, (left, nl), n, tol * 0.5, depth - 1)?;
    let r = refine(f, mid, b, (right, nr), n, tol * 0.5, depth - 1)?;
    Ok(&l + &r)
}

/// Integrate f over [0, w_max] with resonance panels, then add the tail
/// integral over [w_max, inf) via the substitution u = 1/omega.
fn integrate<F>(
    f: &F,
    res: &[f64],
    gamma0: f64,
    spec: &QuadratureSpec,
) -> Result<Array2<f64>>
where
    F: Fn(f64) -> Result<(Array2<f64>, f64)>,
{
    let w_top = res.iter().fold(0.0_f64, |m, &w| m.max(w));
    let w_max = spec.max_frequency.unwrap_or(3.0 * w_top.max(1.0));
    let pts = breakpoints(res, gamma0, w_max);

    // Coarse pass sets the absolute tolerance scale.
    let mut coarse: Vec<(Array2<f64>, f64)> = Vec::with_capacity(pts.len());
    for win in pts.windows(2) {
        coarse.push(simpson_pass(f, win[0], win[1], spec.points)?);
    }
    let tail = |u: f64| -> Result<(Array2<f64>, f64)> {
        let w = 1.0 / u;
        let (v, nv) = f(w)?;
        Ok((v * (w * w), nv * w * w))
    };
    // Truncate the substituted tail just short of u = 0; the remainder is
    // O(1e-8) of the (already small) tail.
    let u_lo = 1e-8 / w_max;
    let u_hi = 1.0 / w_max;
    let tail_coarse = simpson_pass(&tail, u_lo, u_hi, spec.points)?;

    let scale = coarse
        .iter()
        .chain(std::iter::once(&tail_coarse))
        .fold(0.0_f64, |m, c| m.max(max_abs(&c.0)));
    // Integrals that vanish by cancellation (e.g. the xp block in
    // equilibrium) would otherwise demand an impossible tolerance; floor the
    // scale by peak height x peak width of the integrand itself.
    let mut fscale = 0.0_f64;
    for win in pts.windows(2) {
        fscale = fscale.max(max_abs(&f(0.5 * (win[0] + win[1]))?.0));
    }
    let scale = scale.max(fscale * gamma0.max(1e-12));
    let tol = (spec.rel_tol * scale).max(1e-300) / (pts.len() as f64);

    let mut total: Option<Array2<f64>> = None;
    for (win, c) in pts.windows(2).zip(coarse) {
        let part = refine(f, win[0], win[1], c, spec.points, tol, 24)?;
        match &mut total {
            None => total = Some(part),
            Some(t) => *t = &*t + &part,
        }
    }
    let tail_part = refine(&tail, u_lo, u_hi, tail_coarse, spec.points, tol, 24)?;
    Ok(total.unwrap() + tail_part)
}

/// Transmission-like trace Tr(P_L G(i w) P_R conj(G(i w))); nonnegative.
fn transmission_trace(
    v_r: &CouplingMatrix,
    bath: &BathConfig,
    omega: f64,
) -> Result<f64> {
    let g = quad_green(v_r, bath, omega)?;
    let pl = bath.p_left();
    let pr = bath.p_right();
    let k = v_r.k();
    let mut tr = 0.0;
    for i in 0..k {
        if pl[i] == 0.0 {
            continue;
        }
        for j in 0..k {
            if pr[j] == 0.0 {
                continue;
            }
            // G is symmetric, so this is sum |G_ij|^2 weighted by the
            // projector entries — manifestly nonnegative.
            tr += pl[i] * pr[j] * (g[[i, j]] * g[[j, i]].conj()).re;
        }
    }
    if tr < -1e-12 {
        return Err(Error::NumericConsistency(format!(
            "negative transmission {tr} at omega = {omega}"
        )));
    }
    Ok(tr.max(0.0))
}

/// Heat current from the left bath by direct quadrature of the
/// transmission integral.
pub fn quad_heat_current(
    v_r: &CouplingMatrix,
    bath: &BathConfig,
    spec: &QuadratureSpec,
    model: TemperatureMode,
) -> Result<f64> {
    let gamma0 = bath.gamma0;
    let (tl, tr_temp) = (bath.t_left, bath.t_right);
    let res = resonances(v_r)?;
    let f = |omega: f64| -> Result<(Array2<f64>, f64)> {
        let tr = transmission_trace(v_r, bath, omega)?;
        let (weight, weight_mag) = match model {
            // coth(w/2T) -> 2T/w in the classical limit, so the thermal
            // factor w^3 [coth_L - coth_R] becomes 2 w^2 (T_L - T_R).
            TemperatureMode::HighT => {
                let w2 = 2.0 * omega * omega;
                (w2 * (tl - tr_temp), w2 * tl.abs().max(tr_temp.abs()))
            }
            TemperatureMode::Coth => {
                if omega == 0.0 {
                    (0.0, 2.0 * tl.abs().max(tr_temp.abs()))
                } else {
                    let coth = |t: f64| (omega / (2.0 * t)).tanh().recip();
                    let w3 = omega * omega * omega;
                    (
                        w3 * (coth(tl) - coth(tr_temp)),
                        w3 * coth(tl).abs().max(coth(tr_temp).abs()),
                    )
                }
            }
        };
        // The thermal factor is the one difference of large terms here; the
        // trace itself is a sum of nonnegative contributions.
        let noise = 1e-14 * tr * weight_mag;
        Ok((Array2::from_elem((1, 1), tr * weight), noise))
    };
    let out = integrate(&f, &res, gamma0, spec)?;
    Ok(4.0 / std::f64::consts::PI * gamma0 * gamma0 * out[[0, 0]])
}

/// Covariance block sigma^(j,k) by direct quadrature of the noise integral.
pub fn quad_covariance(
    v_r: &CouplingMatrix,
    bath: &BathConfig,
    spec: &QuadratureSpec,
    j: u32,
    k: u32,
) -> Result<Array2<f64>> {
    let kdim = v_r.k();
    let gamma0 = bath.gamma0;
    // Noise spectral weight (2/pi) gamma0 sum_l 2 T_l P_l on the diagonal.
    let nu: Array1<f64> =
        bath.a_matrix() * (2.0 / std::f64::consts::PI * gamma0);
    let phase = (-Complex64::i()).powu(k - j);
    let res = resonances(v_r)?;
    let f = |omega: f64| -> Result<(Array2<f64>, f64)> {
        let g = quad_green(v_r, bath, omega)?;
        let wpow = omega.powi((j + k) as i32);
        let mut out = Array2::<f64>::zeros((kdim, kdim));
        // The real part taken below can cancel exactly (the xp block at
        // equal bath temperatures does), so the noise estimate tracks the
        // pre-cancellation magnitude of the Green's-function products.
        let mut mag = 0.0_f64;
        for a in 0..kdim {
            for b in 0..kdim {
                let mut acc = Complex64::new(0.0, 0.0);
                let mut absacc = 0.0_f64;
                for l in 0..kdim {
                    if nu[l] == 0.0 {
                        continue;
                    }
                    acc += g[[a, l]] * nu[l] * g[[b, l]].conj();
                    absacc += g[[a, l]].norm() * nu[l].abs() * g[[b, l]].norm();
                }
                out[[a, b]] = (phase * acc).re * wpow;
                mag = mag.max(absacc);
            }
        }
        Ok((out, 1e-14 * mag * wpow))
    };
    integrate(&f, &res, gamma0, spec)
}
