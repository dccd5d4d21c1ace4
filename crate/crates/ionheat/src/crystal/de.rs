//! DE/rand/1/bin global search over ion coordinates.

use super::{potential_energy_unchecked, CrystalParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Settings for the global search and the subsequent gradient polish.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerOpts {
    /// Differential-evolution generation cap.
    pub max_generations: usize,
    /// Population size; default 15 * min(3N, 40).
    pub population: Option<usize>,
    /// Mutation factor F.
    pub mutation_factor: f64,
    /// Crossover rate CR.
    pub crossover_rate: f64,
    /// Convergence tolerance on the gradient max-norm after polish.
    pub tolerance: f64,
    /// Newton-polish iteration cap.
    pub polish_max_iters: usize,
    /// Stop DE early once the population energy spread falls below this
    /// relative level.
    pub early_stop: f64,
}

impl Default for OptimizerOpts {
    fn default() -> Self {
        Self {
            max_generations: 400,
            population: None,
            mutation_factor: 0.7,
            crossover_rate: 0.9,
            tolerance: 1e-10,
            polish_max_iters: 500,
            early_stop: 1e-10,
        }
    }
}

impl OptimizerOpts {
    pub fn population_for(&self, n_ions: usize) -> usize {
        self.population.unwrap_or(15 * (3 * n_ions).min(40))
    }
}

fn unflatten(x: &[f64]) -> Vec<[f64; 3]> {
    x.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}

/// Returns the best member found; the caller polishes it to a true minimum.
pub(super) fn differential_evolution(
    params: &CrystalParams,
    seed: u64,
    opts: &OptimizerOpts,
) -> Vec<[f64; 3]> {
    let n = params.n_ions;
    let dim = 3 * n;
    let np = opts.population_for(n).max(4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Initialization box: +-2 transversally, +-2 N^(2/3) axially (chain-length scaling).
    let axial_half = 2.0 * (n as f64).powf(2.0 / 3.0);
    let mut pop: Vec<Vec<f64>> = (0..np)
        .map(|_| {
            (0..dim)
                .map(|d| {
                    let half = if d % 3 == 2 { axial_half } else { 2.0 };
                    rng.gen_range(-half..half)
                })
                .collect()
        })
        .collect();
    let mut energies: Vec<f64> = pop
        .par_iter()
        .map(|x| potential_energy_unchecked(params, &unflatten(x)))
        .collect();

    for _gen in 0..opts.max_generations {
        // Draw all randomness serially so parallel evaluation cannot change results.
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let mut pick = || loop {
                    let r = rng.gen_range(0..np);
                    if r != i {
                        break r;
                    }
                };
                let (a, b, c) = {
                    let a = pick();
                    let b = loop {
                        let r = pick();
                        if r != a {
                            break r;
                        }
                    };
                    let c = loop {
                        let r = pick();
                        if r != a && r != b {
                            break r;
                        }
                    };
                    (a, b, c)
                };
                let j_rand = rng.gen_range(0..dim);
                let mut trial = pop[i].clone();
                for d in 0..dim {
                    if d == j_rand || rng.gen::<f64>() < opts.crossover_rate {
                        trial[d] = pop[a][d] + opts.mutation_factor * (pop[b][d] - pop[c][d]);
                    }
                }
                trial
            })
            .collect();

        let trial_energies: Vec<f64> = trials
            .par_iter()
            .map(|x| potential_energy_unchecked(params, &unflatten(x)))
            .collect();

        for i in 0..np {
            if trial_energies[i] <= energies[i] {
                pop[i] = trials[i].clone();
                energies[i] = trial_energies[i];
            }
        }

        let fmin = energies.iter().copied().fold(f64::INFINITY, f64::min);
        let fmax = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if fmax.is_finite() && (fmax - fmin) < opts.early_stop * (1.0 + fmin.abs()) {
            break;
        }
    }

    let best = energies
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    unflatten(&pop[best])
}
