//! Spiral stage for codimension k >= 4: N rounds of amplitude correction
//! through the rectangle decomposition, then a single spiral step.

use crate::decompose::{DirichletSolver, Route};
use crate::error::{Error, Result};
use crate::field::{
    holder_norm, rewindow, sub, sup, Field, Grid2, ScalarField2, SymMatrixField2, VectorField2,
};
use crate::mollify::Mollifier;
use crate::jet::JetPair;
use crate::steps::{hessians, spiral_error_with};

use super::{band, calibrate_r0_route, resolve_m, shift_id, IterationRecord, StageParams, StageReport, BAND_TOL};

/// Everything the recursion produced; index r runs over 0..=N with
/// `errors[0]` the zero field and `amplitudes[0]`, `correctors[0]` zero.
#[derive(Clone, Debug)]
pub struct KallenLedger {
    pub c_tilde: f64,
    pub amplitudes: Vec<ScalarField2>,
    pub correctors: Vec<VectorField2>,
    pub errors: Vec<SymMatrixField2>,
    pub wellposed: Vec<bool>,
}

/// r0 for the rectangle route on `window`.
pub fn calibrate_r0(window: &Grid2, gamma: f64, seed: u64) -> Result<f64> {
    calibrate_r0_route(window, gamma, Route::Dirichlet, seed)
}

/// Fixed data of one stage's recursion.
pub(crate) struct Recursion<'a> {
    pub solver: DirichletSolver,
    pub hess: &'a [VectorField2; 3],
    pub lambda: f64,
    pub gamma: f64,
    pub r0: f64,
}

impl Recursion<'_> {
    /// a_r, Psi_r and E_r from D0 and E_{r-1}.
    pub fn step(
        &self,
        d0: &SymMatrixField2,
        e_prev: &SymMatrixField2,
        c_tilde: f64,
        r: usize,
    ) -> Result<(ScalarField2, VectorField2, SymMatrixField2, IterationRecord)> {
        let pert = sub(d0, e_prev)?;
        let pn = holder_norm(&pert, self.gamma);
        let limit = self.r0 * c_tilde;
        if pn > limit {
            return Err(Error::StageAbort {
                i: 0,
                r,
                detail: format!("||D0 - E||_(0,gamma) = {pn:e} exceeds r0 C = {limit:e}"),
            });
        }
        let dec = self.solver.decompose(&shift_id(&pert, c_tilde))?;
        let twice = dec.a.values().iter().map(|x| 2.0 * x).collect::<Vec<_>>();
        let sq = ScalarField2::new(*dec.a.grid(), twice)?;
        let lo = sq.min();
        if lo < 0.0 {
            return Err(Error::Compensation { min: lo });
        }
        let a = crate::field::map_field(&sq, f64::sqrt);
        let (bmin, bmax) = band(&sq, c_tilde);
        let rec = IterationRecord {
            codim: 0,
            r,
            perturbation_norm: pn,
            perturbation_limit: limit,
            band_min: bmin,
            band_max: bmax,
            in_band: bmin >= 1.0 - BAND_TOL && bmax <= 3.0 * (1.0 + BAND_TOL),
            decomposition_residual: dec.residual_sup,
        };
        let e = spiral_error_with(self.hess, &a, self.lambda)?;
        Ok((a, dec.psi, e, rec))
    }
}

/// One round of the recursion on the rectangle window of `d0`.
pub fn kallen_iteration(
    d0: &SymMatrixField2,
    e_prev: &SymMatrixField2,
    c_tilde: f64,
    v0: &VectorField2,
    lambda: f64,
    gamma: f64,
    r0: f64,
) -> Result<(ScalarField2, VectorField2, SymMatrixField2)> {
    if v0.ncomp() < 4 {
        return Err(Error::Codimension { k: v0.ncomp(), need: 4 });
    }
    let g = d0.grid().common(e_prev.grid())?.common(v0.grid())?;
    let hess = hessians(&rewindow(v0, g)?)?;
    let rec = Recursion { solver: DirichletSolver::new(&g)?, hess: &hess, lambda, gamma, r0 };
    let (a, psi, e, _) = rec.step(&rewindow(d0, g)?, &rewindow(e_prev, g)?, c_tilde, 1)?;
    Ok((a, psi, e))
}

pub fn run_stage_kallen(
    p: &JetPair,
    target: &SymMatrixField2,
    params: &StageParams,
) -> Result<(JetPair, StageReport)> {
    run_stage_kallen_ledger(p, target, params).map(|(q, r, _)| (q, r))
}

pub fn run_stage_kallen_ledger(
    p: &JetPair,
    target: &SymMatrixField2,
    params: &StageParams,
) -> Result<(JetPair, StageReport, KallenLedger)> {
    params.validate()?;
    if p.k() < 4 {
        return Err(Error::Codimension { k: p.k(), need: 4 });
    }
    let g = p.grid().common(target.grid())?;
    let p = p.rewindow(g)?;
    let target = rewindow(target, g)?;
    let moll = Mollifier::new(params.l, g.h())?;
    if g.margin() < 2 * moll.radius {
        return Err(Error::InsufficientCollar { need: 2 * moll.radius, have: g.margin() });
    }
    let m_used = resolve_m(&p, params)?;
    let d_in = p.defect(&target)?;

    let p0 = p.mollify(&moll)?;
    let a0 = moll.apply(&target)?;
    let g1 = *p0.grid();
    g1.check_resolution(params.lambda)?;
    let d0 = sub(&a0, &p0.metric()?)?;

    let (gamma, l) = (params.gamma, params.l);
    let c_tilde = 2.0 / params.r0
        * (holder_norm(&d0, gamma) + l.powf(-gamma) * (d_in.sup + (l * m_used).powi(2)));

    let rec = Recursion { solver: DirichletSolver::new(&g1)?, hess: &p0.hv, lambda: params.lambda, gamma, r0: params.r0 };
    let mut ledger = KallenLedger {
        c_tilde,
        amplitudes: vec![ScalarField2::zeros(g1)],
        correctors: vec![VectorField2::zeros(g1, 2)],
        errors: vec![SymMatrixField2::zeros(g1)],
        wellposed: vec![],
    };
    let mut records = vec![];
    for r in 1..=params.n {
        let (a, psi, e, record) = rec.step(&d0, ledger.errors.last().unwrap(), c_tilde, r)?;
        ledger.wellposed.push(record.in_band);
        records.push(record);
        ledger.amplitudes.push(a);
        ledger.correctors.push(psi);
        ledger.errors.push(e);
    }

    let a_n = ledger.amplitudes.last().unwrap();
    let mut out = p0.spiral_step(a_n, params.lambda)?;
    out.add_to_w(ledger.correctors.last().unwrap())?;
    out.subtract_dilation(c_tilde);

    let a_out = rewindow(&target, g1)?;
    let d_out = out.defect(&a_out)?;
    let smoothing = sub(&a_out, &a0)?;
    let err_part = sub(&d_out.d, &smoothing)?;
    let n = params.n;
    let step_gap = sub(&ledger.errors[n], &ledger.errors[n - 1])?;
    let exact = sup(&crate::field::add(&err_part, &step_gap)?);

    let (v_inc, w_inc) = out.c1_distance(&p)?;
    let mut warnings = vec![];
    if records.iter().any(|r| !r.in_band) {
        warnings.push("amplitude left its band".into());
    }
    let report = StageReport {
        method: "kallen".into(),
        params: params.clone(),
        k: p.k(),
        m_used,
        margin_in: g.margin(),
        margin_out: g1.margin(),
        c_tilde: vec![c_tilde],
        iterations: records,
        codims: vec![],
        schedule: None,
        defect_in_sup: d_in.sup,
        defect_in_min_eig: d_in.min_eigenvalue,
        defect_out_sup: d_out.sup,
        defect_out_min_eig: d_out.min_eigenvalue,
        defect_out_error_sup: sup(&err_part),
        exactness_residual: exact,
        v_increment_c1: v_inc,
        w_increment_c1: w_inc,
        v_hessian_sup: out.v_hessian_sup(),
        w_hessian_sup: out.w_hessian_sup()?,
        warnings,
    };
    Ok((out, report, ledger))
}

/// a^2 / C - 2 (1 + c / C) over the window, for a constant multiple of Id.
#[cfg(test)]
fn band_offset(a: &ScalarField2, c_tilde: f64, c: f64) -> f64 {
    let g = *a.grid();
    let v = crate::field::map_valid(&g, |k| a.values()[k].powi(2) / c_tilde - 2.0 * (1.0 + c / c_tilde));
    sup(&ScalarField2::new(g, v).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{rng, smooth_sym};

    fn grid(n: usize, core: f64, collar: f64) -> Grid2 {
        Grid2::covering([0.5, 0.5], [core, core], collar, n).unwrap()
    }

    #[test]
    fn recursion_on_multiples_of_identity() {
        let g = grid(96, 1.0, 0.1);
        let v0 = VectorField2::zeros(g, 4);
        let z = SymMatrixField2::zeros(g);
        let (a, psi, e) = kallen_iteration(&z, &z, 3.0, &v0, 16.0, 0.05, 0.25).unwrap();
        assert!((a.min() - 6f64.sqrt()).abs() < 1e-12 && (a.max() - 6f64.sqrt()).abs() < 1e-12);
        assert!(sup(&psi) < 1e-12);
        assert!(sup(&e) < 1e-10);
        let d = SymMatrixField2::identity(g, 0.5);
        let (a, _, _) = kallen_iteration(&d, &z, 3.0, &v0, 16.0, 0.05, 0.25).unwrap();
        assert!(band_offset(&a, 3.0, 0.5) < 1e-12);
    }

    #[test]
    fn abort_outside_wellposed_band() {
        let g = grid(64, 1.0, 0.1);
        let v0 = VectorField2::zeros(g, 4);
        let z = SymMatrixField2::zeros(g);
        let d = SymMatrixField2::identity(g, 2.0);
        assert!(matches!(
            kallen_iteration(&d, &z, 1.0, &v0, 16.0, 0.05, 0.25),
            Err(Error::StageAbort { .. })
        ));
    }

    #[test]
    fn error_field_decays_with_frequency() {
        let g = grid(256, 1.0, 0.1);
        let v0 = VectorField2::from_fn(g, 4, |c, x, y| 0.2 * ((c + 1) as f64 * x).sin() * (2.0 * y).cos());
        let d0 = crate::field::scale(&smooth_sym(g, &mut rng(3), 4, 3.0), 0.1);
        let z = SymMatrixField2::zeros(g);
        let mut pts = vec![];
        for lam in [16.0, 32.0, 64.0, 128.0] {
            let (_, _, e) = kallen_iteration(&d0, &z, 2.0, &v0, lam, 0.05, 0.25).unwrap();
            pts.push((lam, sup(&e)));
        }
        let slope = (pts[3].1 / pts[0].1).ln() / (pts[3].0 / pts[0].0).ln();
        assert!(slope <= -0.8, "{slope}");
    }

    #[test]
    fn identity_target_improves() {
        let g = grid(256, 1.0, 0.25);
        let p = JetPair::zeros(g, 4).unwrap();
        let a = SymMatrixField2::identity(g, 1.0);
        let params = StageParams {
            l: 0.1,
            lambda: 32.0,
            gamma: 0.05,
            n: 1,
            m_bound: None,
            sigma0: 1.0,
            r0: calibrate_r0(&g, 0.05, 1).unwrap(),
            beta: 1.0,
        };
        let (q, rep, ledger) = run_stage_kallen_ledger(&p, &a, &params).unwrap();
        assert!(rep.defect_out_sup < 1.0, "{}", rep.defect_out_sup);
        let off = band_offset(&ledger.amplitudes[1], ledger.c_tilde, 1.0);
        assert!(off < 1e-7, "{off}");
        assert!(rep.iterations.iter().all(|r| r.in_band));
        assert_eq!(q.grid().margin(), rep.margin_out);
        assert_eq!(rep.margin_in - rep.margin_out, Mollifier::new(0.1, g.h()).unwrap().radius);
    }

    #[test]
    fn rejects_bad_parameters() {
        let g = grid(64, 1.0, 0.2);
        let p = JetPair::zeros(g, 4).unwrap();
        let a = SymMatrixField2::identity(g, 1.0);
        let mut params = StageParams {
            l: 0.1,
            lambda: 4.0,
            gamma: 0.05,
            n: 1,
            m_bound: None,
            sigma0: 1.0,
            r0: 0.25,
            beta: 1.0,
        };
        assert!(matches!(run_stage_kallen(&p, &a, &params), Err(Error::Config(_))));
        params.lambda = 32.0;
        let small = JetPair::zeros(g, 3).unwrap();
        assert!(matches!(run_stage_kallen(&small, &a, &params), Err(Error::Codimension { .. })));
    }
}
