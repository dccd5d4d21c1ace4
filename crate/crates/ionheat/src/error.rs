use thiserror::Error;

/// Error taxonomy shared by all modules.
#[derive(Error, Debug)]
pub enum Error {
    #[error("degenerate configuration: ions {i} and {j} coincide (separation {sep:.3e})")]
    DegenerateConfiguration { i: usize, j: usize, sep: f64 },

    #[error("equilibrium search did not converge: best gradient max-norm {grad_norm:.3e} after {generations} generations + polish")]
    ConvergenceFailure {
        grad_norm: f64,
        generations: usize,
        /// Best candidate positions found so far, flattened (x1,y1,z1,...).
        best: Vec<f64>,
    },

    #[error("unstable equilibrium: coupling matrix has non-positive eigenvalue {min_eigenvalue:.6e}")]
    UnstableEquilibrium { min_eigenvalue: f64 },

    #[error("disorder destroyed positive definiteness (d = {d}, min eigenvalue {min_eigenvalue:.6e})")]
    UnstableMatrix { d: f64, min_eigenvalue: f64 },

    #[error("invalid bath region: {0}")]
    InvalidRegion(String),

    #[error("degenerate spectrum: eigenvalues {a} and {b} within relative distance {dist:.3e}")]
    DegenerateSpectrum { a: usize, b: usize, dist: f64 },

    #[error("evaluation point within {dist:.3e} of pole s = {pole}")]
    NearPole { pole: num_complex::Complex64, dist: f64 },

    #[error("degenerate mode pair: omega_a + omega_b = {sum:.3e}")]
    DegeneratePair { sum: f64 },

    #[error("unphysical momentum dispersion at coordinate {index}: below zero-point bound")]
    UnphysicalDispersion { index: usize },

    #[error("undefined conductivity: t_left = t_right")]
    UndefinedConductivity,

    #[error("numeric consistency violation: {0}")]
    NumericConsistency(String),

    #[error("quadrature failed to converge: error estimate {estimate:.3e}")]
    QuadratureFailure { estimate: f64 },

    #[error("singular matrix at omega = {omega}")]
    Singularity { omega: f64 },

    #[error("linear algebra backend error: {0}")]
    Linalg(#[from] ndarray_linalg::error::LinalgError),

    #[error("power-law fit requires positive data: {0}")]
    FitError(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
