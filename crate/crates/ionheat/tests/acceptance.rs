//! End-to-end validation gate. Each test covers one numbered criterion and
//! prints a single summary line (visible with `--nocapture`).

use ionheat::cli::{self, fit_power_law, Experiment, Overrides};
use ionheat::crystal::{
    find_equilibrium, path_alpha, potential_gradient, potential_hessian,
    scan_transition, CrystalParams, EquilibriumConfiguration, OptimizerOpts, OrderParamSelector,
    PathDimension, Phase, PhasePath,
};
use ionheat::network::{
    apply_disorder_tolerant, build_hessian, make_bath, BathConfig, BathRegion, CouplingMatrix,
    DisorderAxes, DisorderSpec,
};
use ionheat::oracle::{quad_covariance, quad_heat_current, QuadratureSpec};
use ionheat::qep::{green_eval, solve_qep, solve_qep_with, ModeSet, QepOpts};
use ionheat::seeding::split_seed;
use ionheat::transport::{
    central_gradient, conductivity, coordinate_temperatures, covariance, heat_current,
    mode_currents, transverse_ion_temperatures, TemperatureMode,
};
use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, Inverse, UPLO};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const TL: f64 = 1.1;
const TR: f64 = 0.9;
const GAMMA0: f64 = 1e-6;

/// The heavy tests saturate every core through rayon; run criteria one at a
/// time so the wall-clock budgets measure the work, not the contention.
static SERIAL: std::sync::Mutex<()> = std::sync::Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(num: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {num:02} ({name}): {} — {detail}",
        if pass { "pass" } else { "FAIL" }
    );
    assert!(pass, "criterion {num:02} ({name}) failed: {detail}");
}

/// Ground-state equilibrium: best of a few optimizer seeds (the global search
/// occasionally lands in a defected local minimum, e.g. the helical N=40).
fn equilibrium(params: &CrystalParams) -> EquilibriumConfiguration {
    // The helical branch has many near-degenerate local minima with very
    // different transport; a single search seed is not enough.
    let attempt = |opts: &OptimizerOpts| {
        (1..=6u64)
            .into_par_iter()
            .filter_map(|s| find_equilibrium(params, s, opts).ok())
            .min_by(|a, b| a.energy.partial_cmp(&b.energy).unwrap())
    };
    attempt(&OptimizerOpts::default()).unwrap_or_else(|| {
        // Large chains can stall just above the default gradient tolerance;
        // a looser polish target is far below any observable's sensitivity.
        let relaxed = OptimizerOpts { tolerance: 1e-5, ..OptimizerOpts::default() };
        attempt(&relaxed).unwrap()
    })
}

struct System {
    config: EquilibriumConfiguration,
    v0: CouplingMatrix,
    bath: BathConfig,
    n: usize,
}

fn build_path_system(dim: PathDimension, n: usize) -> System {
    let alpha = path_alpha(PhasePath::builtin(dim), n);
    let params = CrystalParams::new(n, alpha).unwrap();
    let config = equilibrium(&params);
    let v0 = build_hessian(&params, &config).unwrap();
    let bath = make_bath(GAMMA0, TL, TR, BathRegion::Fraction(0.1), n).unwrap();
    System { config, v0, bath, n }
}

/// Production solver settings: jitter retry armed for the exact transverse
/// center-of-mass degeneracy, unstable soft modes excluded downstream.
fn pipeline_modes(v: &CouplingMatrix, bath: &BathConfig, seed: u64) -> ModeSet {
    let opts = QepOpts {
        jitter_seed: Some(split_seed(seed, 2, 0)),
        allow_unstable: true,
        ..QepOpts::default()
    };
    solve_qep_with(v, bath, &opts).unwrap()
}

/// (kappa, normalized central temperature gradient) for one realization.
fn transport_point(sys: &System, d: f64, seed: u64) -> (f64, f64) {
    let v = if d > 0.0 {
        let spec = DisorderSpec::draw(d, split_seed(seed, 1, 0), sys.n, DisorderAxes::Xy);
        apply_disorder_tolerant(&sys.v0, &spec).unwrap().0
    } else {
        sys.v0.clone()
    };
    let modes = pipeline_modes(&v, &sys.bath, seed);
    let q = heat_current(&modes, &sys.bath).unwrap();
    let kappa = conductivity(q, sys.config.length(), TL, TR).unwrap();
    let cov = covariance(&modes, &sys.bath).unwrap();
    let pp: Vec<f64> = cov.pp.diag().to_vec();
    let vd: Vec<f64> = v.matrix().diag().to_vec();
    let ct = coordinate_temperatures(&pp, &vd, TemperatureMode::HighT).unwrap();
    let it = transverse_ion_temperatures(&ct, sys.n);
    let zs: Vec<f64> = (0..sys.n).map(|i| sys.config.positions[i][2]).collect();
    let mut order: Vec<usize> = (0..sys.n).collect();
    order.sort_by(|&a, &b| zs[a].partial_cmp(&zs[b]).unwrap());
    let zs_s: Vec<f64> = order.iter().map(|&i| zs[i]).collect();
    let it_s: Vec<f64> = order.iter().map(|&i| it[i]).collect();
    let g = central_gradient(&it_s, &zs_s, TL, TR).unwrap();
    (kappa, g)
}

/// Ensemble mean (kappa, central gradient) over disorder realizations.
fn ensemble(sys: &System, d: f64, realizations: usize) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = (0..realizations as u64)
        .into_par_iter()
        .map(|r| transport_point(sys, d, split_seed(0, 7, r)))
        .collect();
    let m = pts.len() as f64;
    (
        pts.iter().map(|p| p.0).sum::<f64>() / m,
        pts.iter().map(|p| p.1).sum::<f64>() / m,
    )
}

fn linear_fit_r2(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let xb = xs.iter().sum::<f64>() / n;
    let yb = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - xb) * (y - yb)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xb) * (x - xb)).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let p = yb + slope * (x - xb);
            (y - p) * (y - p)
        })
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - yb) * (y - yb)).sum();
    (slope, 1.0 - ss_res / ss_tot)
}

#[test]
fn criterion_01_analytic_equilibria() {
    let _guard = serial();
    let t0 = std::time::Instant::now();
    // Two ions: Coulomb repulsion against the axial trap balances at
    // separation 2^(1/3).
    let p2 = CrystalParams::new(2, 5.0).unwrap();
    let c2 = find_equilibrium(&p2, 1, &OptimizerOpts::default()).unwrap();
    let mut z2: Vec<f64> = c2.positions.iter().map(|p| p[2]).collect();
    z2.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let sep = z2[1] - z2[0];
    let sep_err = (sep - 2f64.powf(1.0 / 3.0)).abs();

    // Three ions: outer ions at +-(5/4)^(1/3), middle at zero.
    let p3 = CrystalParams::new(3, 5.0).unwrap();
    let c3 = find_equilibrium(&p3, 1, &OptimizerOpts::default()).unwrap();
    let mut z3: Vec<f64> = c3.positions.iter().map(|p| p[2]).collect();
    z3.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let zout = (5f64 / 4.0).powf(1.0 / 3.0);
    let e3 = (z3[0] + zout)
        .abs()
        .max(z3[1].abs())
        .max((z3[2] - zout).abs());
    let r2_off: f64 = c2
        .positions
        .iter()
        .chain(c3.positions.iter())
        .map(|p| p[0].abs().max(p[1].abs()))
        .fold(0.0, f64::max);
    let elapsed = t0.elapsed();
    let pass = sep_err < 1e-8 && e3 < 1e-8 && r2_off < 1e-8 && elapsed.as_secs_f64() < 2.0;
    report(
        1,
        "analytic equilibria",
        pass,
        &format!("sep err {sep_err:.2e}, triple err {e3:.2e}, off-axis {r2_off:.2e}, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_02_hessian_against_finite_differences() {
    let _guard = serial();
    let mut worst = 0.0_f64;
    for (n, alpha) in [(2, 7.0), (3, 6.0), (4, 5.5), (5, 6.5), (6, 7.5)] {
        let p = CrystalParams::new(n, alpha).unwrap();
        let config = find_equilibrium(&p, 1, &OptimizerOpts::default()).unwrap();
        let h = potential_hessian(&p, &config.positions).unwrap();
        let k = 3 * n;
        let scale = h.iter().fold(0.0_f64, |m, &x| m.max(x.abs()));
        let step = 1e-5;
        for c in 0..k {
            let (ion, axis) = (c % n, c / n);
            let mut plus = config.positions.clone();
            let mut minus = config.positions.clone();
            plus[ion][axis] += step;
            minus[ion][axis] -= step;
            let gp = potential_gradient(&p, &plus).unwrap();
            let gm = potential_gradient(&p, &minus).unwrap();
            for c2 in 0..k {
                let (ion2, axis2) = (c2 % n, c2 / n);
                let fd = (gp[ion2][axis2] - gm[ion2][axis2]) / (2.0 * step);
                worst = worst.max((fd - h[[c, c2]]).abs() / scale);
            }
        }
    }

    // Two-ion normal modes: axial {1, sqrt(3)}, transverse
    // {alpha, sqrt(alpha^2 - 1)}.
    let alpha = 4.0;
    let p = CrystalParams::new(2, alpha).unwrap();
    let config = find_equilibrium(&p, 1, &OptimizerOpts::default()).unwrap();
    let v = build_hessian(&p, &config).unwrap();
    let m = v.matrix();
    let sub = |coords: [usize; 2]| {
        Array2::from_shape_fn((2, 2), |(i, j)| m[[coords[i], coords[j]]])
    };
    let freqs = |block: Array2<f64>| -> Vec<f64> {
        let (e, _) = block.eigh(UPLO::Lower).unwrap();
        let mut f: Vec<f64> = e.iter().map(|x| x.sqrt()).collect();
        f.sort_by(|a, b| a.partial_cmp(b).unwrap());
        f
    };
    let fz = freqs(sub([4, 5]));
    let fx = freqs(sub([0, 1]));
    let mode_err = (fz[0] - 1.0)
        .abs()
        .max((fz[1] - 3f64.sqrt()).abs())
        .max((fx[0] - (alpha * alpha - 1.0).sqrt()).abs())
        .max((fx[1] - alpha).abs());

    let pass = worst < 1e-6 && mode_err < 1e-8;
    report(
        2,
        "analytic vs finite-difference curvature",
        pass,
        &format!("max FD deviation {worst:.2e}, two-ion mode err {mode_err:.2e}"),
    );
}

#[test]
fn criterion_03_resolvent_residue_expansion_vs_inversion() {
    let _guard = serial();
    let t0 = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0_f64;
    for _ in 0..5 {
        let n = rng.gen_range(2..=6usize);
        let alpha = rng.gen_range(4.0..9.0);
        let p = CrystalParams::new(n, alpha).unwrap();
        let config = find_equilibrium(&p, 1, &OptimizerOpts::default()).unwrap();
        let v = build_hessian(&p, &config).unwrap();
        let bath = make_bath(
            1e-3,
            TL,
            TR,
            BathRegion::Explicit { left: vec![0], right: vec![n - 1] },
            n,
        )
        .unwrap();
        let modes = solve_qep(&v, &bath).unwrap();
        let pt = bath.p_total();
        let k = 3 * n;
        for _ in 0..10 {
            let s = Complex64::new(rng.gen_range(-0.5..0.5), rng.gen_range(0.3..2.0 * alpha));
            let ge = green_eval(&modes, s).unwrap();
            let mut direct = Array2::<Complex64>::zeros((k, k));
            for i in 0..k {
                for j in 0..k {
                    direct[[i, j]] = Complex64::new(v.matrix()[[i, j]], 0.0);
                }
                direct[[i, i]] += s * s + 2.0 * s * bath.gamma0 * pt[i];
            }
            let direct = direct.inv().unwrap();
            let scale = direct.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
            for i in 0..k {
                for j in 0..k {
                    worst = worst.max((ge[[i, j]] - direct[[i, j]]).norm() / scale);
                }
            }
        }
    }
    let elapsed = t0.elapsed();
    let pass = worst < 1e-8 && elapsed.as_secs_f64() < 10.0;
    report(
        3,
        "resolvent residue expansion vs direct inversion",
        pass,
        &format!("max relative deviation {worst:.2e}, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_04_closed_forms_vs_quadrature() {
    let _guard = serial();
    let t0 = std::time::Instant::now();
    let spec = QuadratureSpec::default();
    let mut worst_q = 0.0_f64;
    let mut worst_cov = 0.0_f64;
    for (n, alpha) in [(4, 5.0), (6, 7.0)] {
        let p = CrystalParams::new(n, alpha).unwrap();
        let config = find_equilibrium(&p, 1, &OptimizerOpts::default()).unwrap();
        let v = build_hessian(&p, &config).unwrap();
        let bath = make_bath(1e-3, 1.2, 0.8, BathRegion::Fraction(0.26), n).unwrap();
        let modes = solve_qep(&v, &bath).unwrap();

        let q = heat_current(&modes, &bath).unwrap();
        let qq = quad_heat_current(&v, &bath, &spec, TemperatureMode::HighT).unwrap();
        worst_q = worst_q.max((q - qq).abs() / qq.abs());

        // Compare on coordinates that reach a steady state (the undamped z
        // sector has none).
        let damped: Vec<usize> = modes
            .components()
            .iter()
            .filter(|c| c.damped)
            .flat_map(|c| c.coords.iter().copied())
            .collect();
        let cov = covariance(&modes, &bath).unwrap();
        for (j, k, ours) in [(0, 0, &cov.xx), (0, 1, &cov.xp), (1, 1, &cov.pp)] {
            let quad = quad_covariance(&v, &bath, &spec, j, k).unwrap();
            let scale = damped
                .iter()
                .flat_map(|&a| damped.iter().map(move |&b| (a, b)))
                .fold(0.0_f64, |m, (a, b)| m.max(quad[[a, b]].abs()))
                .max(cov.pp.diag().iter().fold(0.0_f64, |m, &x| m.max(x.abs())));
            for &a in &damped {
                for &b in &damped {
                    worst_cov = worst_cov.max((ours[[a, b]] - quad[[a, b]]).abs() / scale);
                }
            }
        }
    }
    let elapsed = t0.elapsed();
    let pass = worst_q < 1e-6 && worst_cov < 1e-6 && elapsed.as_secs_f64() < 60.0;
    report(
        4,
        "closed forms vs direct quadrature",
        pass,
        &format!("heat current dev {worst_q:.2e}, covariance dev {worst_cov:.2e}, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_05_conservation_and_symmetry() {
    let _guard = serial();
    let n = 6;
    let p = CrystalParams::new(n, 6.0).unwrap();
    let config = find_equilibrium(&p, 1, &OptimizerOpts::default()).unwrap();
    let v = build_hessian(&p, &config).unwrap();
    let region = BathRegion::Explicit { left: vec![0], right: vec![n - 1] };
    let mk = |tl: f64, tr: f64| make_bath(1e-3, tl, tr, region.clone(), n).unwrap();

    let bath = mk(1.2, 0.8);
    let modes = solve_qep(&v, &bath).unwrap();
    let q = heat_current(&modes, &bath).unwrap();
    let cov = covariance(&modes, &bath).unwrap();

    // Stationary energy balance: what the left bath injects, the right bath
    // absorbs.
    let pl = bath.p_left();
    let pr = bath.p_right();
    let flow = |proj: &Array1<f64>, t: f64| -> f64 {
        (0..3 * n)
            .map(|i| 2.0 * bath.gamma0 * proj[i] * (t - cov.pp[[i, i]]))
            .sum()
    };
    let q_left = flow(&pl, bath.t_left);
    let q_right = flow(&pr, bath.t_right);
    let balance = (q_left + q_right).abs() / q.abs();
    let closed_vs_balance = (q - q_left).abs() / q.abs();

    // No bias: exactly zero current.
    let bath_eq = mk(1.0, 1.0);
    let modes_eq = solve_qep(&v, &bath_eq).unwrap();
    let q_eq = heat_current(&modes_eq, &bath_eq).unwrap();

    // Swapping the reservoirs flips the sign exactly.
    let bath_swap = mk(0.8, 1.2);
    let modes_swap = solve_qep(&v, &bath_swap).unwrap();
    let q_swap = heat_current(&modes_swap, &bath_swap).unwrap();
    let antisym = (q + q_swap).abs() / q.abs();

    // Per-mode currents partition the total.
    let per_mode = mode_currents(&modes, &bath).unwrap();
    let partition = (per_mode.iter().sum::<f64>() - q).abs() / q.abs();

    // The momentum covariance is positive semidefinite.
    let (pp_eigs, _) = cov.pp.eigh(UPLO::Lower).unwrap();
    let pp_min = pp_eigs.iter().copied().fold(f64::INFINITY, f64::min);
    let pp_max = pp_eigs.iter().copied().fold(0.0_f64, f64::max);

    // Equal temperatures thermalize every damped coordinate to equipartition.
    let t_eq = 0.9;
    let bath_t = mk(t_eq, t_eq);
    let modes_t = solve_qep(&v, &bath_t).unwrap();
    let cov_t = covariance(&modes_t, &bath_t).unwrap();
    let equi_err = modes_t
        .components()
        .iter()
        .filter(|c| c.damped)
        .flat_map(|c| c.coords.iter())
        .fold(0.0_f64, |m, &i| m.max((cov_t.pp[[i, i]] - t_eq).abs() / t_eq));

    let pass = balance < 1e-10
        && closed_vs_balance < 1e-8
        && q_eq.abs() < 1e-12
        && antisym < 1e-12
        && partition < 1e-12
        && pp_min > -1e-12 * pp_max
        && equi_err < 1e-8;
    report(
        5,
        "conservation and symmetry",
        pass,
        &format!(
            "balance {balance:.2e}, closed-vs-balance {closed_vs_balance:.2e}, zero-bias {:.2e}, \
             antisymmetry {antisym:.2e}, partition {partition:.2e}, pp min {pp_min:.2e}, \
             equipartition {equi_err:.2e}",
            q_eq.abs()
        ),
    );
}

#[test]
fn criterion_06_ordered_conductivity_grows_linearly() {
    let _guard = serial();
    let ns = [20usize, 30, 40, 50, 60];
    let mut detail = String::new();
    let mut pass = true;
    for dim in [PathDimension::OneD, PathDimension::TwoD, PathDimension::ThreeD] {
        let pts: Vec<(f64, f64)> = ns
            .par_iter()
            .map(|&n| {
                let sys = build_path_system(dim, n);
                let (kappa, _) = transport_point(&sys, 0.0, 0);
                (sys.config.length(), kappa)
            })
            .collect();
        let ls: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ks: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let (slope, r2) = linear_fit_r2(&ls, &ks);
        pass &= slope > 0.0 && r2 >= 0.95;
        detail += &format!("{dim:?}: slope {slope:.2e}, R2 {r2:.4}; ");
    }
    report(6, "ordered conductivity linear in length", pass, detail.trim_end());
}

#[test]
fn criterion_07_disorder_hypersensitivity() {
    let _guard = serial();
    let reals = 20;
    // Zigzag path at d = 0.02 across lengths.
    let two_d: Vec<(f64, f64)> = [20usize, 30, 40, 50, 60]
        .par_iter()
        .map(|&n| {
            let sys = build_path_system(PathDimension::TwoD, n);
            let (k0, _) = transport_point(&sys, 0.0, 0);
            let (kd, _) = ensemble(&sys, 0.02, reals);
            (k0, kd)
        })
        .collect();
    // Suppression relative to the ordered crystal deepens with length; the
    // outright decrease of the disordered mean sets in beyond this size range
    // (the reference data covers up to 200 ions).
    let ratios: Vec<f64> = two_d.iter().map(|(k0, kd)| kd / k0).collect();
    let ratios_monotone = ratios.windows(2).all(|w| w[1] < w[0]);
    let sublinear = two_d[4].1 / two_d[0].1 < 0.8 * two_d[4].0 / two_d[0].0;

    // Fixed N = 60: disorder-decay curves per path.
    let decay: Vec<(PathDimension, f64, Vec<f64>)> =
        [PathDimension::OneD, PathDimension::TwoD, PathDimension::ThreeD]
            .par_iter()
            .map(|&dim| {
                let sys = build_path_system(dim, 60);
                let (k0, _) = transport_point(&sys, 0.0, 0);
                let curve: Vec<f64> = [0.005, 0.02]
                    .iter()
                    .map(|&d| ensemble(&sys, d, reals).0 / k0)
                    .collect();
                (dim, k0, curve)
            })
            .collect();
    let one_d = &decay[0].2;
    let faster_2d = decay[1].2.iter().zip(one_d).all(|(a, b)| a < b);
    let faster_3d = decay[2].2.iter().zip(one_d).all(|(a, b)| a < b);
    let chain_robust = one_d[1] > 0.5;

    let pass = ratios_monotone && sublinear && faster_2d && faster_3d && chain_robust;
    report(
        7,
        "disorder hypersensitivity",
        pass,
        &format!(
            "2D kappa_d/kappa_0 by N {:?}, 1D retention at d=0.02 {:.3}, \
             decay at d=0.005/0.02: 1D {:?}, 2D {:?}, 3D {:?}",
            ratios.iter().map(|r| (r * 1e3).round() / 1e3).collect::<Vec<_>>(),
            one_d[1],
            decay[0].2,
            decay[1].2,
            decay[2].2
        ),
    );
}

#[test]
fn criterion_08_temperature_profiles_steepen_with_disorder() {
    let _guard = serial();
    let sys = build_path_system(PathDimension::ThreeD, 40);
    let (_, g0) = transport_point(&sys, 0.0, 0);
    let ds = [0.005, 0.01, 0.02, 0.035, 0.05];
    let grads: Vec<f64> = ds.iter().map(|&d| ensemble(&sys, d, 20).1).collect();
    let monotone = grads.windows(2).all(|w| w[1] > w[0]);
    let saturates = *grads.last().unwrap() > 0.3;
    let pass = g0.abs() <= 0.05 && monotone && saturates;
    report(
        8,
        "temperature profiles steepen with disorder",
        pass,
        &format!("ordered gradient {g0:.4}, ensemble means {grads:?}"),
    );
}

#[test]
fn criterion_09_high_frequency_modes_carry_the_current() {
    let _guard = serial();
    let n = 100;
    let alpha = path_alpha(PhasePath::builtin(PathDimension::OneD), n);
    let params = CrystalParams::new(n, alpha).unwrap();
    let mut config = equilibrium(&params);
    // The chain is linear by symmetry; zero the ~1e-9 off-axis optimizer
    // residue so the transverse and axial sectors decouple exactly instead
    // of merging into one weakly contaminated component.
    for r in &mut config.positions {
        r[0] = 0.0;
        r[1] = 0.0;
    }
    let v = build_hessian(&params, &config).unwrap();
    let bath = make_bath(GAMMA0, TL, TR, BathRegion::Fraction(0.1), n).unwrap();
    let modes = solve_qep(&v, &bath).unwrap();
    let per_mode = mode_currents(&modes, &bath).unwrap();

    // The bath-coupled (transverse) sector; the axial band reaches higher
    // frequencies but never touches a reservoir.
    let idx: Vec<usize> = modes
        .components()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.damped)
        .flat_map(|(ci, c)| (0..c.eigenvalues.len()).map(move |l| (ci, l)))
        .map(|(ci, l)| modes.global_of(ci, l))
        .collect();
    let freqs: Vec<f64> = idx.iter().map(|&a| modes.frequency(a).re.abs()).collect();
    let f_max = freqs.iter().copied().fold(0.0_f64, f64::max);
    let f_min = freqs.iter().copied().fold(f64::INFINITY, f64::min);
    // Modes whose frequency lies in the top decile of the occupied band.
    let cut = f_max - 0.1 * (f_max - f_min);
    let total: f64 = idx.iter().map(|&a| per_mode[a].abs()).sum();
    let top: f64 = idx
        .iter()
        .zip(&freqs)
        .filter(|&(_, &f)| f >= cut)
        .map(|(&a, _)| per_mode[a].abs())
        .sum();
    let share = top / total;
    let pass = share > 0.5;
    report(
        9,
        "high-frequency transverse modes dominate",
        pass,
        &format!(
            "band [{f_min:.2}, {f_max:.2}], share above {cut:.2} is {share:.3} of total |mode current|"
        ),
    );
}

/// Locate the linear-to-zigzag onset by a coarse scan refined once.
fn onset_alpha(n: usize) -> (f64, ionheat::crystal::TransitionScan) {
    let lo = path_alpha(PhasePath::builtin(PathDimension::TwoD), n);
    let hi = 1.2 * path_alpha(PhasePath::builtin(PathDimension::OneD), n);
    let grid = |a: f64, b: f64, steps: usize| -> Vec<f64> {
        (0..=steps)
            .map(|i| b - (b - a) * i as f64 / steps as f64)
            .collect()
    };
    let opts = OptimizerOpts::default();
    let coarse =
        scan_transition(n, &grid(lo, hi, 30), OrderParamSelector::Radius, 5, &opts).unwrap();
    let ac = coarse.critical_alpha.unwrap();
    let step = (hi - lo) / 30.0;
    let fine = scan_transition(
        n,
        &grid(ac - step, ac + step, 20),
        OrderParamSelector::Radius,
        5,
        &opts,
    )
    .unwrap();
    (fine.critical_alpha.unwrap(), fine)
}

#[test]
fn criterion_10_structural_transition_scan() {
    let _guard = serial();
    // Sharp onset for 30 ions: essentially zero radius above the critical
    // aspect ratio, rapid growth just below it.
    let (a30, fine) = onset_alpha(30);
    let r_above = fine
        .points
        .iter()
        .filter(|p| p.alpha > a30)
        .fold(0.0_f64, |m, p| m.max(p.value));
    let r_below = fine
        .points
        .iter()
        .filter(|p| p.alpha <= a30)
        .fold(0.0_f64, |m, p| m.max(p.value));
    // Phase labels agree with the order parameter away from the onset; the
    // band in between is genuinely ambiguous at finite optimizer tolerance.
    let phases_consistent = fine.points.iter().all(|p| {
        if p.value > 1e-2 {
            p.report.phase != Phase::Linear1D
        } else if p.value < 1e-6 {
            p.report.phase == Phase::Linear1D
        } else {
            true
        }
    });

    let ns = [20usize, 30, 40, 50, 60];
    let alphas: Vec<f64> = ns.par_iter().map(|&n| onset_alpha(n).0).collect();
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let (c, beta, r2) = fit_power_law(&xs, &alphas).unwrap();
    let beta_err = (beta - 0.873).abs();

    let pass = r_above < 1e-4 && r_below > 0.02 && phases_consistent && beta_err <= 0.05;
    report(
        10,
        "structural transition scan",
        pass,
        &format!(
            "onset(30) = {a30:.4}, radius above/below {r_above:.1e}/{r_below:.3}, \
             fit alpha_c = {c:.3} N^{beta:.4} (R2 {r2:.5}), |beta - 0.873| = {beta_err:.4}"
        ),
    );
}

#[test]
fn criterion_11_sweeps_are_byte_identical() {
    let _guard = serial();
    let run_once = |dir: &std::path::Path| -> Vec<std::path::PathBuf> {
        let over = Overrides {
            n_ions: Some(8),
            alpha: Some(6.0),
            d_range: Some(vec![0.01, 0.03]),
            realizations: Some(3),
            base_seed: Some(42),
            output_dir: Some(dir.to_path_buf()),
            ..Overrides::default()
        };
        let cfg = cli::RunConfig::load(Experiment::SweepDisorder, &over).unwrap();
        cli::run(&cfg).unwrap()
    };
    let ta = tempfile::tempdir().unwrap();
    let tb = tempfile::tempdir().unwrap();
    let fa = run_once(ta.path());
    let fb = run_once(tb.path());
    assert_eq!(fa.len(), fb.len());
    let mut compared = 0;
    let mut identical = true;
    for (a, b) in fa.iter().zip(&fb) {
        assert_eq!(a.file_name(), b.file_name());
        identical &= std::fs::read(a).unwrap() == std::fs::read(b).unwrap();
        compared += 1;
    }
    report(
        11,
        "seeded sweeps are byte-identical",
        identical && compared > 0,
        &format!("{compared} artifacts compared"),
    );
}
