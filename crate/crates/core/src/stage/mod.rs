//! Stages: one smoothing pass followed by an amplitude recursion and
//! high-frequency steps that trade the defect for a much smaller one.

pub mod chi;
pub mod kallen;

use serde::{Deserialize, Serialize};

use crate::decompose::{decompose_dirichlet, NewtonianSolver, Quadrature, Route};
use crate::error::{Error, Result};
use crate::field::{
    extend_by_zero, holder_norm, map_valid, sup, Field, Grid2, ScalarField2, SymMatrixField2, VectorField2,
};
use crate::random::{compact_sym, rng, smooth_sym};
use crate::jet::JetPair;

pub use chi::{cutoff_chain, plan_schedule, run_stage_chi, run_stage_chi_ledger, ChiLedger, FrequencySchedule};
pub use kallen::{calibrate_r0, kallen_iteration, run_stage_kallen, run_stage_kallen_ledger, KallenLedger};

/// Relative slack on the amplitude bands.
pub const BAND_TOL: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageParams {
    /// mollification scale
    pub l: f64,
    /// base frequency
    pub lambda: f64,
    pub gamma: f64,
    /// recursion depth
    pub n: usize,
    /// a priori C^2 bound; the measured one is used when absent
    pub m_bound: Option<f64>,
    pub sigma0: f64,
    pub r0: f64,
    /// Holder exponent of the target metric
    pub beta: f64,
}

impl StageParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.l > 0.0) {
            return bad(format!("l = {} must be positive", self.l));
        }
        if !(self.lambda > 0.0) {
            return bad(format!("lambda = {} must be positive", self.lambda));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma = {} outside (0,1)", self.gamma));
        }
        if self.n < 1 {
            return bad("N must be at least 1".into());
        }
        if !(self.sigma0 >= 1.0) {
            return bad(format!("sigma0 = {} below 1", self.sigma0));
        }
        if !(self.r0 > 0.0 && self.r0 < 1.0) {
            return bad(format!("r0 = {} outside (0,1)", self.r0));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad(format!("beta = {} outside (0,1]", self.beta));
        }
        if self.lambda.powf(1.0 - self.gamma) * self.l < self.sigma0 {
            return bad(format!(
                "lambda^(1-gamma) l = {} below sigma0 = {}",
                self.lambda.powf(1.0 - self.gamma) * self.l,
                self.sigma0
            ));
        }
        if let Some(m) = self.m_bound {
            if !(m >= 1.0) {
                return bad(format!("M = {m} below 1"));
            }
        }
        Ok(())
    }
}

/// One amplitude-recursion step as measured.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// codimension index (1-based; 0 for the spiral stage)
    pub codim: usize,
    pub r: usize,
    /// ||input - C Id||_{0,gamma}
    pub perturbation_norm: f64,
    /// r0 C
    pub perturbation_limit: f64,
    /// min and max of (amplitude^2)/C over the window
    pub band_min: f64,
    pub band_max: f64,
    pub in_band: bool,
    pub decomposition_residual: f64,
}

/// Per-codimension record of the two-corrugation stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodimRecord {
    pub i: usize,
    pub lambda: f64,
    pub lambda_bar: f64,
    pub c_tilde_prev: f64,
    /// min and max of b^2 / C_{i-1}
    pub b2_min: f64,
    pub b2_max: f64,
    pub b_in_band: bool,
    pub defect_sup: f64,
    /// sup of the defect after the first corrugation minus its predicted value
    pub transfer_residual: f64,
    /// sup of the defect after the second corrugation minus its predicted value
    pub final_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub method: String,
    pub params: StageParams,
    pub k: usize,
    pub m_used: f64,
    pub margin_in: usize,
    pub margin_out: usize,
    pub c_tilde: Vec<f64>,
    pub iterations: Vec<IterationRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub codims: Vec<CodimRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<FrequencySchedule>,
    pub defect_in_sup: f64,
    pub defect_in_min_eig: f64,
    pub defect_out_sup: f64,
    pub defect_out_min_eig: f64,
    /// sup of D_out - (A - A_smoothed)
    pub defect_out_error_sup: f64,
    /// sup of the stage's closing algebraic identity
    pub exactness_residual: f64,
    pub v_increment_c1: f64,
    pub w_increment_c1: f64,
    pub v_hessian_sup: f64,
    pub w_hessian_sup: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// max{||v||_2, ||w||_2, 1}
pub fn measured_m(p: &JetPair) -> Result<f64> {
    p.c2_bound()
}

fn resolve_m(p: &JetPair, params: &StageParams) -> Result<f64> {
    let m = measured_m(p)?;
    match params.m_bound {
        Some(b) if b < m * (1.0 - 1e-9) => {
            Err(Error::Config(format!("M = {b} is below the measured C^2 bound {m}")))
        }
        Some(b) => Ok(b),
        None => Ok(m),
    }
}

/// C Id + X
pub(crate) fn shift_id(x: &SymMatrixField2, c: f64) -> SymMatrixField2 {
    let g = *x.grid();
    let comps = (0..3).map(|e| map_valid(&g, |k| x.comp(e)[k] + if e == 1 { 0.0 } else { c })).collect();
    SymMatrixField2::from_parts(g, comps).expect("same shape")
}

pub(crate) fn band(values: &ScalarField2, scale: f64) -> (f64, f64) {
    (values.min() / scale, values.max() / scale)
}

/// Grid with the same physical valid window as `g` and about `n` nodes
/// along its longer side.
fn coarse_copy(g: &Grid2, n: usize) -> Result<Grid2> {
    let e = g.valid_extent();
    let h = e[0].max(e[1]) / (n - 1) as f64;
    let n1 = ((e[0] / h).round() as usize + 1).max(crate::field::MIN_NODES);
    let n2 = ((e[1] / h).round() as usize + 1).max(crate::field::MIN_NODES);
    Grid2::new(g.valid_origin(), n1, n2, h, 0)
}

/// Samples drawn by the r0 calibration.
pub const CALIBRATION_SAMPLES: usize = 32;
const CALIBRATION_NODES: usize = 96;

/// Largest rho with ||a(D) - 1||_0 <= 1/2 for all sampled D with
/// ||D - Id||_{0,gamma} = rho, halved. The map D -> a(D) is linear and
/// fixes Id, so for each sample the admissible rho is 1 / (2 ||a(E)||_0)
/// with E the normalised perturbation.
pub fn calibrate_r0_route(window: &Grid2, gamma: f64, route: Route, seed: u64) -> Result<f64> {
    let g = coarse_copy(window, CALIBRATION_NODES)?;
    let mut r = rng(seed);
    let ext = g.valid_extent();
    let kmax = 8.0 / ext[0].min(ext[1]);
    let mut rho = f64::INFINITY;
    let newton = NewtonianSolver::new(&g, Quadrature::Corrected);
    for _ in 0..CALIBRATION_SAMPLES {
        let (e, a) = match route {
            Route::Dirichlet => {
                let e = smooth_sym(g, &mut r, 6, kmax);
                let a = decompose_dirichlet(&e)?.a;
                (e, a)
            }
            Route::Newtonian => {
                let e = compact_sym(g, &mut r, 6, kmax, 0.4 * ext[0].min(ext[1]));
                let a = newton.decompose(&e, crate::decompose::default_band(&g))?.a;
                (e, a)
            }
        };
        let n = holder_norm(&e, gamma);
        if n == 0.0 {
            continue;
        }
        let s = sup(&a) / n;
        if s > 0.0 {
            rho = rho.min(0.5 / s);
        }
    }
    if !rho.is_finite() {
        return Err(Error::Precondition("calibration drew only trivial samples".into()));
    }
    Ok((0.5 * rho).min(0.99))
}

/// Newtonian decomposition of c Id + X for X supported away from the
/// array edge, carried out on the whole node array.
pub(crate) struct WideDecomposer {
    full: Grid2,
    solver: NewtonianSolver,
    band: usize,
}

impl WideDecomposer {
    pub fn new(g: &Grid2, band: usize) -> Self {
        let full = g.full_window();
        WideDecomposer { full, solver: NewtonianSolver::new(&full, Quadrature::Corrected), band }
    }

    /// (a, psi, residual) of c Id + x, returned on x's window.
    pub fn decompose(&self, x: &SymMatrixField2, c: f64) -> Result<(ScalarField2, VectorField2, f64)> {
        let wide = shift_id(&extend_by_zero(x, self.full)?, c);
        let d = self.solver.decompose(&wide, self.band)?;
        let g = *x.grid();
        Ok((crate::field::rewindow(&d.a, g)?, crate::field::rewindow(&d.psi, g)?, d.residual_sup))
    }
}
