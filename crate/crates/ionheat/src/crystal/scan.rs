//! Structural-transition scans over the trap aspect ratio.

use super::{
    find_equilibrium, refine_equilibrium, structure_report, CrystalParams, OptimizerOpts, Phase,
    StructureReport,
};
use crate::error::Result;
use crate::seeding::split_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Which order parameter a scan records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrderParamSelector {
    Radius,
    MinZGap,
    AzimuthalStep,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanPoint {
    pub alpha: f64,
    pub value: f64,
    pub report: StructureReport,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionScan {
    pub points: Vec<ScanPoint>,
    /// First alpha (in scan order) whose phase differs from the starting phase.
    pub critical_alpha: Option<f64>,
}

fn select(report: &StructureReport, selector: OrderParamSelector) -> f64 {
    match selector {
        OrderParamSelector::Radius => report.radius,
        OrderParamSelector::MinZGap => report.min_z_gap,
        OrderParamSelector::AzimuthalStep => report.mean_azimuthal_step,
    }
}

/// Scan the aspect ratio, warm-starting each point from the previous solution
/// plus a small seeded jitter that lets the optimizer break symmetry across a
/// second-order transition. Convergence failures are recorded per point.
pub fn scan_transition(
    n_ions: usize,
    alphas: &[f64],
    selector: OrderParamSelector,
    seed: u64,
    opts: &OptimizerOpts,
) -> Result<TransitionScan> {
    let mut points = Vec::with_capacity(alphas.len());
    let mut previous: Option<Vec<[f64; 3]>> = None;
    let mut start_phase: Option<Phase> = None;
    let mut critical_alpha = None;

    for (idx, &alpha) in alphas.iter().enumerate() {
        let params = CrystalParams::new(n_ions, alpha)?;
        let result = match &previous {
            None => find_equilibrium(&params, split_seed(seed, idx as u64, 0), opts),
            Some(prev) => {
                let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, idx as u64, 1));
                let start: Vec<[f64; 3]> = prev
                    .iter()
                    .map(|p| {
                        let mut q = *p;
                        for c in q.iter_mut() {
                            *c += rng.gen_range(-1e-3..1e-3);
                        }
                        q
                    })
                    .collect();
                refine_equilibrium(&params, start, opts)
                    .or_else(|_| find_equilibrium(&params, split_seed(seed, idx as u64, 2), opts))
            }
        };

        match result {
            Ok(config) => {
                let report = structure_report(&config.positions);
                if alphas.len() >= 2 {
                    match start_phase {
                        None => start_phase = Some(report.phase),
                        Some(p0) => {
                            if critical_alpha.is_none() && report.phase != p0 {
                                critical_alpha = Some(alpha);
                            }
                        }
                    }
                }
                points.push(ScanPoint {
                    alpha,
                    value: select(&report, selector),
                    report,
                    converged: true,
                });
                previous = Some(config.positions);
            }
            Err(_) => {
                points.push(ScanPoint {
                    alpha,
                    value: f64::NAN,
                    report: StructureReport {
                        radius: f64::NAN,
                        min_z_gap: f64::NAN,
                        mean_azimuthal_step: f64::NAN,
                        phase: Phase::Unordered,
                    },
                    converged: false,
                });
            }
        }
    }

    Ok(TransitionScan { points, critical_alpha })
}
