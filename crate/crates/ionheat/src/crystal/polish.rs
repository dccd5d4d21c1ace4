//! Damped-Newton local refinement on the analytic gradient.
//!
//! The step is computed in the Hessian eigenbasis with eigenvalues replaced by
//! max(|lambda_i|, floor). This keeps the step a descent direction through
//! indefinite regions (the search crosses saddles when warm-started across a
//! structural transition) and is insensitive to the exact zero mode coming
//! from the rotational symmetry of the trap.

use super::de::OptimizerOpts;
use super::{
    gradient_max_norm, potential_energy_unchecked, potential_gradient, potential_hessian,
    CrystalParams,
};
use crate::error::{Error, Result};
use ndarray::Array1;
use ndarray_linalg::{Eigh, UPLO};

fn flatten_axis_major(positions: &[[f64; 3]]) -> Array1<f64> {
    let n = positions.len();
    let mut v = Array1::zeros(3 * n);
    for (i, p) in positions.iter().enumerate() {
        for a in 0..3 {
            v[a * n + i] = p[a];
        }
    }
    v
}

fn unflatten_axis_major(v: &Array1<f64>) -> Vec<[f64; 3]> {
    let n = v.len() / 3;
    (0..n).map(|i| [v[i], v[n + i], v[2 * n + i]]).collect()
}

pub(super) fn polish(
    params: &CrystalParams,
    start: Vec<[f64; 3]>,
    opts: &OptimizerOpts,
) -> Result<Vec<[f64; 3]>> {
    let n = start.len();
    let k = 3 * n;
    let mut x = flatten_axis_major(&start);
    let mut energy = potential_energy_unchecked(params, &unflatten_axis_major(&x));
    if !energy.is_finite() {
        return Err(Error::ConvergenceFailure {
            grad_norm: f64::INFINITY,
            generations: opts.max_generations,
            best: x.to_vec(),
        });
    }

    for _ in 0..opts.polish_max_iters {
        let positions = unflatten_axis_major(&x);
        let grad = potential_gradient(params, &positions)?;
        let grad_norm = gradient_max_norm(&grad);
        if grad_norm <= opts.tolerance {
            return Ok(positions);
        }
        let mut g = Array1::<f64>::zeros(k);
        for (i, gi) in grad.iter().enumerate() {
            for a in 0..3 {
                g[a * n + i] = gi[a];
            }
        }
        let h = potential_hessian(params, &positions)?;
        let (eigs, vecs) = h.eigh(UPLO::Lower)?;
        let scale = eigs.iter().fold(0.0_f64, |m, &e| m.max(e.abs()));
        let floor = 1e-8 * scale.max(1.0);
        let gproj = vecs.t().dot(&g);
        let coeffs: Array1<f64> = gproj
            .iter()
            .zip(eigs.iter())
            .map(|(&gp, &ev)| gp / ev.abs().max(floor))
            .collect();
        let mut step = vecs.dot(&coeffs);

        // Trust region: ion displacements beyond O(1) leave the quadratic model.
        let step_norm = step.iter().fold(0.0_f64, |m, &s| m.max(s.abs()));
        if step_norm > 0.5 {
            step *= 0.5 / step_norm;
        }

        // Line search. Far from the minimum, require energy decrease; once the
        // energy improvement per step drops below f64 resolution, switch to
        // requiring gradient-norm decrease, which stays meaningful to 1e-16.
        let endgame = grad_norm < 1e-6;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &x - &(t * &step);
            let trial_pos = unflatten_axis_major(&trial);
            if endgame {
                if let Ok(gt) = potential_gradient(params, &trial_pos) {
                    if gradient_max_norm(&gt) < grad_norm {
                        energy = potential_energy_unchecked(params, &trial_pos);
                        x = trial;
                        accepted = true;
                        break;
                    }
                }
            } else {
                let e = potential_energy_unchecked(params, &trial_pos);
                if e < energy {
                    x = trial;
                    energy = e;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    let positions = unflatten_axis_major(&x);
    let grad = potential_gradient(params, &positions)?;
    let norm = gradient_max_norm(&grad);
    if norm <= opts.tolerance {
        Ok(positions)
    } else {
        Err(Error::ConvergenceFailure {
            grad_norm: norm,
            generations: opts.max_generations,
            best: x.to_vec(),
        })
    }
}
