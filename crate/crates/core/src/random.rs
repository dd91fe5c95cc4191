//! Seeded smooth random fields for tests, calibration and experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::field::{Grid2, ScalarField2, SymMatrixField2};

pub type Rng64 = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sum of a few random low-frequency plane waves.
#[derive(Clone, Debug)]
pub struct Waves {
    terms: Vec<(f64, f64, f64, f64)>,
}

impl Waves {
    /// `modes` terms with wave numbers up to `kmax` (per unit length).
    pub fn random(rng: &mut Rng64, modes: usize, kmax: f64) -> Self {
        let terms = (0..modes)
            .map(|_| {
                let amp = rng.random_range(-1.0..1.0);
                let k1 = rng.random_range(-kmax..kmax);
                let k2 = rng.random_range(-kmax..kmax);
                let ph = rng.random_range(0.0..std::f64::consts::TAU);
                (amp, k1, k2, ph)
            })
            .collect();
        Waves { terms }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.terms.iter().map(|(a, k1, k2, p)| a * (k1 * x + k2 * y + p).sin()).sum()
    }
}

/// Random smooth scalar on the whole valid window.
pub fn smooth_scalar(grid: Grid2, rng: &mut Rng64, modes: usize, kmax: f64) -> ScalarField2 {
    let w = Waves::random(rng, modes, kmax);
    ScalarField2::from_fn(grid, |x, y| w.eval(x, y))
}

/// Random smooth scalar under a Gaussian window that is cut to zero at
/// `radius` from the grid centre (the window is below 1e-13 there).
pub fn compact_scalar(grid: Grid2, rng: &mut Rng64, modes: usize, kmax: f64, radius: f64) -> ScalarField2 {
    let w = Waves::random(rng, modes, kmax);
    let c = grid.center();
    ScalarField2::from_fn(grid, |x, y| {
        let r = ((x - c[0]).powi(2) + (y - c[1]).powi(2)).sqrt() / radius;
        w.eval(x, y) * window(r)
    })
}

/// exp(-(5.5 r)^2) for r < 1, zero beyond.
pub fn window(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        (-(5.5 * r).powi(2)).exp()
    }
}

/// Symmetric field with compactly supported entries.
pub fn compact_sym(grid: Grid2, rng: &mut Rng64, modes: usize, kmax: f64, radius: f64) -> SymMatrixField2 {
    let a = compact_scalar(grid, rng, modes, kmax, radius);
    let b = compact_scalar(grid, rng, modes, kmax, radius);
    let c = compact_scalar(grid, rng, modes, kmax, radius);
    SymMatrixField2::from_entries(&a, &b, &c).expect("shared grid")
}

/// Symmetric field with smooth entries everywhere.
pub fn smooth_sym(grid: Grid2, rng: &mut Rng64, modes: usize, kmax: f64) -> SymMatrixField2 {
    let a = smooth_scalar(grid, rng, modes, kmax);
    let b = smooth_scalar(grid, rng, modes, kmax);
    let c = smooth_scalar(grid, rng, modes, kmax);
    SymMatrixField2::from_entries(&a, &b, &c).expect("shared grid")
}
