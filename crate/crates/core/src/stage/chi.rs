//! Corrugation stage for any codimension: per codimension an amplitude
//! recursion through the potential decomposition, one corrugation along x1,
//! and a compensating corrugation along x2, with frequencies growing on a
//! geometric schedule.

use serde::{Deserialize, Serialize};

use crate::decompose::Route;
use crate::error::{Error, Result};
use crate::field::{
    add, derivative, holder_norm, map_field, map_valid, rewindow, sub, sup, Field, Grid2, ScalarField2,
    SymMatrixField2, VectorField2,
};
use crate::jet::JetPair;
use crate::mollify::Mollifier;
use crate::smooth::smoothstep;
use crate::steps::{corrugation_error_with, corrugation_gamma, Axis};

use super::{
    band, calibrate_r0_route, resolve_m, CodimRecord, IterationRecord, StageParams, StageReport, WideDecomposer,
    BAND_TOL,
};

/// Frequency pairs (lambda_i, lambda_bar_i), i = 0..=k.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencySchedule {
    pub n: usize,
    pub k: usize,
    pub l: f64,
    pub lambda1: f64,
    pub pairs: Vec<(f64, f64)>,
    /// exponents with lambda_bar_i l = (lambda_bar_1 l)^alpha_i; alphas[0] = 0
    pub alphas: Vec<f64>,
}

/// (N - 1) / (2 (N + 1))
pub fn schedule_ratio(n: usize) -> f64 {
    (n as f64 - 1.0) / (2.0 * (n as f64 + 1.0))
}

pub fn plan_schedule(l: f64, lambda1: f64, n: usize, k: usize) -> Result<FrequencySchedule> {
    if !(l > 0.0 && lambda1 * l > 1.0) {
        return Err(Error::Config(format!("need lambda1 l > 1, got {}", lambda1 * l)));
    }
    if n < 2 || k < 1 {
        return Err(Error::Config(format!("need N >= 2 and k >= 1, got N = {n}, k = {k}")));
    }
    let q = schedule_ratio(n);
    let alphas: Vec<f64> = (0..=k).map(|i| (1.0 - q.powi(i as i32)) / (1.0 - q)).collect();
    let top1 = (lambda1 * l).powi(n as i32 + 1);
    let bars: Vec<f64> = (0..=k).map(|i| if i == 0 { 1.0 / l } else { top1.powf(alphas[i]) / l }).collect();
    let mut pairs = vec![(1.0 / l, 1.0 / l)];
    for i in 1..=k {
        let lam = if i == 1 {
            lambda1
        } else {
            (bars[i] * bars[i - 1].powi(n as i32)).powf(1.0 / (n as f64 + 1.0))
        };
        pairs.push((lam, bars[i]));
    }
    Ok(FrequencySchedule { n, k, l, lambda1, pairs, alphas })
}

impl FrequencySchedule {
    /// Largest relative deviation from the defining identities.
    pub fn identity_residual(&self) -> f64 {
        let n = self.n as i32;
        let top1 = self.pairs[1].1 * self.l;
        let mut worst: f64 = 0.0;
        for i in 1..=self.k {
            let (lam, bar) = self.pairs[i];
            let prev = self.pairs[i - 1].1;
            let lhs = bar / lam;
            let rhs = (lam / prev).powi(n);
            worst = worst.max((lhs - rhs).abs() / rhs);
            let closed = top1.powf(self.alphas[i]);
            worst = worst.max((bar * self.l - closed).abs() / closed);
        }
        worst
    }

    pub fn is_monotone(&self) -> bool {
        let mut seq = vec![];
        for &(a, b) in &self.pairs[1..] {
            seq.push(a);
            seq.push(b);
        }
        seq.windows(2).all(|w| w[0] <= w[1] * (1.0 + 1e-12))
    }

    pub fn top(&self) -> f64 {
        self.pairs[self.k].1
    }

    /// Resolution error carrying the node count the top frequency needs.
    pub fn require_resolved(&self, g: &Grid2) -> Result<()> {
        g.check_resolution(self.top())
    }
}

/// Node count of the smoothing radius l/(2k), the unit of every collar.
pub fn collar_unit(g: &Grid2, l: f64, k: usize) -> Result<usize> {
    let q = Mollifier::new(l / (2.0 * k as f64), g.h())?.radius;
    if q < 2 {
        return Err(Error::Precondition(format!("l/(2k) = {} spans fewer than two nodes", l / (2.0 * k as f64))));
    }
    Ok(q)
}

/// Nodes between (i, j) and the core rectangle, per axis.
fn core_distance(g: &Grid2, i: usize, j: usize) -> (f64, f64) {
    let (c1, c2) = (g.core1(), g.core2());
    let d = |x: usize, r: &std::ops::Range<usize>| {
        if x < r.start {
            (r.start - x) as f64
        } else if x >= r.end {
            (x + 1 - r.end) as f64
        } else {
            0.0
        }
    };
    (d(i, &c1), d(j, &c2))
}

/// Cutoffs chi_0..chi_{k-1} on the window of `g`: chi_i is one within
/// m - 2(i+1)q nodes of the core and zero from m - (2i+1)q on, where m is
/// the collar of `g` and q the node count of l/(2k).
pub fn cutoff_chain(g: &Grid2, l: f64, k: usize) -> Result<Vec<ScalarField2>> {
    let q = collar_unit(g, l, k)?;
    let m0 = g.margin();
    if m0 < 4 * k * q {
        return Err(Error::InsufficientCollar { need: 4 * k * q, have: m0 });
    }
    let chain = (0..k)
        .map(|i| {
            let inner = (m0 - 2 * (i + 1) * q) as f64;
            let prof = |d: f64| 1.0 - smoothstep((d - inner) / q as f64);
            let v = map_valid(g, |idx| {
                let (d1, d2) = core_distance(g, idx % g.n1(), idx / g.n1());
                prof(d1) * prof(d2)
            });
            ScalarField2::new(*g, v).expect("shape")
        })
        .collect();
    Ok(chain)
}

/// Fields of one codimension's construction.
#[derive(Clone, Debug)]
pub struct CodimLedger {
    pub amplitudes: Vec<ScalarField2>,
    pub correctors: Vec<VectorField2>,
    /// errors[0] is zero
    pub errors: Vec<SymMatrixField2>,
    pub b: ScalarField2,
    /// defect after both corrugations
    pub defect: SymMatrixField2,
}

#[derive(Clone, Debug)]
pub struct ChiLedger {
    pub cutoffs: Vec<ScalarField2>,
    pub c_tilde: Vec<f64>,
    pub per_codim: Vec<CodimLedger>,
}

/// r0 for the potential route on `window`.
pub fn calibrate_r0_potential(window: &Grid2, gamma: f64, seed: u64) -> Result<f64> {
    calibrate_r0_route(window, gamma, Route::Newtonian, seed)
}

fn drop_22(e: SymMatrixField2) -> SymMatrixField2 {
    let g = *e.grid();
    let mut e = e;
    e.comp_mut(2).iter_mut().for_each(|x| *x = 0.0);
    SymMatrixField2::from_parts(g, (0..3).map(|c| e.comp(c).to_vec()).collect()).expect("shape")
}

struct CodimSetup<'a> {
    index: usize,
    lambda: f64,
    hess: [ScalarField2; 3],
    chi: &'a ScalarField2,
    gamma: f64,
    r0: f64,
    wide: &'a WideDecomposer,
}

impl CodimSetup<'_> {
    /// One round: a^2 = a(C Id + chi (D - E)), Psi, and the truncated error field.
    fn round(
        &self,
        d: &SymMatrixField2,
        e_prev: &SymMatrixField2,
        c_tilde: f64,
        r: usize,
    ) -> Result<(ScalarField2, VectorField2, SymMatrixField2, IterationRecord)> {
        let x = sub(d, e_prev)?.scale_by(self.chi)?;
        let pn = holder_norm(&x, self.gamma);
        let limit = self.r0 * c_tilde;
        if pn > limit {
            return Err(Error::StageAbort {
                i: self.index,
                r,
                detail: format!("||chi (D - E)||_(0,gamma) = {pn:e} exceeds r0 C = {limit:e}"),
            });
        }
        let (sq, psi, res) = self.wide.decompose(&x, c_tilde)?;
        let lo = sq.min();
        if lo < 0.0 {
            return Err(Error::Compensation { min: lo });
        }
        let (bmin, bmax) = band(&sq, c_tilde);
        let a = map_field(&sq, f64::sqrt);
        let e = drop_22(corrugation_error_with(&self.hess, &a, self.lambda, Axis::X1)?);
        let rec = IterationRecord {
            codim: self.index,
            r,
            perturbation_norm: pn,
            perturbation_limit: limit,
            band_min: bmin,
            band_max: bmax,
            in_band: bmin >= 0.5 * (1.0 - BAND_TOL) && bmax <= 1.5 * (1.0 + BAND_TOL),
            decomposition_residual: res,
        };
        Ok((a, psi, e, rec))
    }
}

/// One round of the recursion for codimension `i` (1-based) on the window of
/// `d`, with the cutoff `chi` and the smoothed first-stage field `v0`.
#[allow(clippy::too_many_arguments)]
pub fn chi_iteration(
    i: usize,
    d: &SymMatrixField2,
    e_prev: &SymMatrixField2,
    chi: &ScalarField2,
    c_tilde: f64,
    v0: &VectorField2,
    lambda: f64,
    gamma: f64,
    r0: f64,
    band_nodes: usize,
) -> Result<(ScalarField2, VectorField2, SymMatrixField2)> {
    if i == 0 || i > v0.ncomp() {
        return Err(Error::Precondition(format!("codimension index {i} outside 1..={}", v0.ncomp())));
    }
    let g = d.grid().common(e_prev.grid())?.common(chi.grid())?.common(v0.grid())?;
    let vi = rewindow(&v0.component(i - 1), g)?;
    let wide = WideDecomposer::new(&g, band_nodes);
    let hess = [derivative(&vi, 2, 0)?, derivative(&vi, 1, 1)?, derivative(&vi, 0, 2)?];
    let chi = rewindow(chi, g)?;
    let setup = CodimSetup { index: i, lambda, hess, chi: &chi, gamma, r0, wide: &wide };
    let (a, psi, e, _) = setup.round(&rewindow(d, g)?, &rewindow(e_prev, g)?, c_tilde, 1)?;
    Ok((a, psi, e))
}

/// Squares to at most this much below zero are treated as rounding noise.
const RADICAND_NOISE: f64 = 1e-12;

pub fn run_stage_chi(
    p: &JetPair,
    target: &SymMatrixField2,
    params: &StageParams,
    k: usize,
) -> Result<(JetPair, StageReport)> {
    chi_stage(p, target, params, k, false).map(|(q, r, _)| (q, r))
}

/// C_i from the cut-off defect, the smoothing slack and the previous constant.
fn next_constant(
    s: &FrequencySchedule,
    i: usize,
    cut_norm: f64,
    slack: f64,
    prev: Option<f64>,
    params: &StageParams,
) -> f64 {
    let (n, gamma, l) = (s.n as f64, params.gamma, params.l);
    let (lam, bar) = s.pairs[i];
    let mut c = 2.0 / params.r0 * cut_norm + bar.powf(gamma) * slack / (bar * l).powi(2);
    if let Some(prev) = prev {
        let prev_bar = s.pairs[i - 1].1;
        c += prev * bar.powf(gamma) * (lam.powf((n - 1.0) * gamma) / (lam / prev_bar).powf(n) + lam / bar);
    }
    c
}

pub fn run_stage_chi_ledger(
    p: &JetPair,
    target: &SymMatrixField2,
    params: &StageParams,
    k: usize,
) -> Result<(JetPair, StageReport, ChiLedger)> {
    chi_stage(p, target, params, k, true)
}

/// With `keep` unset only the last two errors and the last amplitude survive
/// each round and the ledger comes back empty; large grids need the memory.
fn chi_stage(
    p: &JetPair,
    target: &SymMatrixField2,
    params: &StageParams,
    k: usize,
    keep: bool,
) -> Result<(JetPair, StageReport, ChiLedger)> {
    params.validate()?;
    if k < 1 || p.k() < k {
        return Err(Error::Codimension { k: p.k(), need: k.max(1) });
    }
    let g = p.grid().common(target.grid())?;
    let p_narrow;
    let p = if *p.grid() == g {
        p
    } else {
        p_narrow = p.rewindow(g)?;
        &p_narrow
    };
    let target = rewindow(target, g)?;
    let (l, gamma, n) = (params.l, params.gamma, params.n);
    let schedule = plan_schedule(l, params.lambda, n, k)?;
    schedule.require_resolved(&g)?;
    let q = collar_unit(&g, l, k)?;
    let chain = cutoff_chain(&g, l, k)?;
    let m0 = g.margin();
    let window = |s: usize| g.with_margin(m0 - s * q);

    let m_used = resolve_m(p, params)?;
    let d_in = p.defect(&target)?;
    let moll = Mollifier::new(l / (2.0 * k as f64), g.h())?;
    let p0 = p.mollify(&moll)?;
    let a0 = moll.apply(&target)?;
    let wide = WideDecomposer::new(p0.grid(), q);
    let slack = d_in.sup + (l * m_used).powi(2);

    let mut d_cur = sub(&a0, &p0.metric()?)?;
    let hess0: Vec<[ScalarField2; 3]> = (0..k).map(|i| p0.hessian_of(i)).collect();
    let mut cur = p0;
    let mut c_tilde: Vec<f64> = vec![];
    let mut records = vec![];
    let mut codims = vec![];
    let mut per_codim = vec![];
    let mut warnings = vec![];
    for i in 0..k {
        let wi = *d_cur.grid();
        let chi = rewindow(&chain[i], wi)?;
        let c = next_constant(&schedule, i, holder_norm(&d_cur.scale_by(&chi)?, gamma), slack, c_tilde.last().copied(), params);
        c_tilde.push(c);

        let (lam, bar) = schedule.pairs[i + 1];
        let hess = [rewindow(&hess0[i][0], wi)?, rewindow(&hess0[i][1], wi)?, rewindow(&hess0[i][2], wi)?];
        let setup = CodimSetup { index: i + 1, lambda: lam, hess, chi: &chi, gamma, r0: params.r0, wide: &wide };
        let mut led = CodimLedger {
            amplitudes: vec![ScalarField2::zeros(wi)],
            correctors: vec![VectorField2::zeros(wi, 2)],
            errors: vec![SymMatrixField2::zeros(wi)],
            b: ScalarField2::zeros(wi),
            defect: SymMatrixField2::zeros(wi),
        };
        for r in 1..=n {
            let (a, psi, e, rec) = setup.round(&d_cur, led.errors.last().unwrap(), c, r)?;
            records.push(rec);
            led.amplitudes.push(a);
            led.correctors.push(psi);
            led.errors.push(e);
            if !keep {
                led.amplitudes.drain(..led.amplitudes.len() - 1);
                led.correctors.drain(..led.correctors.len() - 1);
                led.errors.drain(..led.errors.len() - 2);
            }
        }
        let (na, ne) = (led.amplitudes.len() - 1, led.errors.len() - 1);
        let a_n = &led.amplitudes[na];

        // first corrugation along x1 on component i
        cur.narrow(wi)?;
        let mut bar_p = cur.corrugation_step(a_n, lam, Axis::X1, i)?;
        drop(cur);
        bar_p.add_to_w(&led.correctors[na])?;
        bar_p.subtract_dilation(c);
        let wn = window(2 * (i + 1))?;
        bar_p.narrow(wn)?;

        // compensating amplitude for the e2 (x) e2 remainder
        let an = rewindow(a_n, wn)?;
        let d2a = derivative(&an, 0, 1)?;
        let d22v = rewindow(&setup.hess[2], wn)?;
        let b2 = ScalarField2::new(
            wn,
            map_valid(&wn, |idx| {
                let gm = corrugation_gamma(lam * wn.x1(idx % wn.n1()));
                let a = an.values()[idx];
                a * a + a / lam * gm * d22v.values()[idx] - gm * gm * d2a.values()[idx].powi(2) / (2.0 * lam * lam)
            }),
        )?;
        let lo = b2.min();
        if lo < -RADICAND_NOISE * c {
            return Err(Error::Compensation { min: lo });
        }
        let b = map_field(&b2, |x| x.max(0.0).sqrt());
        let (bmin, bmax) = band(&b2, c);
        let b_in_band = bmin >= (1.0 - BAND_TOL) / 3.0 && bmax <= 2.0 * (1.0 + BAND_TOL);
        if !b_in_band {
            warnings.push(format!("codimension {}: b^2/C outside [1/3, 2] ({bmin:.3}, {bmax:.3})", i + 1));
        }

        let a0n = rewindow(&a0, wn)?;
        let gap = sub(&rewindow(&led.errors[ne], wn)?, &rewindow(&led.errors[ne - 1], wn)?)?;
        let d_bar = sub(&a0n, &bar_p.metric()?)?;
        let e22 = SymMatrixField2::from_entries(&ScalarField2::zeros(wn), &ScalarField2::zeros(wn), &b2)?;
        let transfer = sup(&sub(&add(&d_bar, &gap)?, &e22)?);

        // second corrugation along x2 on the same component
        let next = bar_p.corrugation_step(&b, bar, Axis::X2, i)?;
        let f = corrugation_error_with(&bar_p.hessian_of(i), &b, bar, Axis::X2)?;
        drop(bar_p);
        let d_next = sub(&a0n, &next.metric()?)?;
        let fin = sup(&add(&add(&d_next, &gap)?, &f)?);

        codims.push(CodimRecord {
            i: i + 1,
            lambda: lam,
            lambda_bar: bar,
            c_tilde_prev: c,
            b2_min: bmin,
            b2_max: bmax,
            b_in_band,
            defect_sup: sup(&d_next),
            transfer_residual: transfer,
            final_residual: fin,
        });
        if keep {
            led.b = b;
            led.defect = d_next.clone();
            per_codim.push(led);
        }
        cur = next;
        d_cur = d_next;
    }
    // closing constant, with the cutoff taken as one
    c_tilde.push(next_constant(&schedule, k, holder_norm(&d_cur, gamma), slack, c_tilde.last().copied(), params));
    if records.iter().any(|r| !r.in_band) {
        warnings.push("amplitude left its band".into());
    }

    let gk = *cur.grid();
    let d_out = cur.defect(&target)?;
    let err_part = sub(&d_out.d, &sub(&rewindow(&target, gk)?, &rewindow(&a0, gk)?)?)?;
    let last = codims.last().map(|c| c.final_residual).unwrap_or(0.0);
    let (v_inc, w_inc) = cur.c1_distance(p)?;
    let report = StageReport {
        method: "chi".into(),
        params: params.clone(),
        k,
        m_used,
        margin_in: m0,
        margin_out: gk.margin(),
        c_tilde: c_tilde.clone(),
        iterations: records,
        codims,
        schedule: Some(schedule),
        defect_in_sup: d_in.sup,
        defect_in_min_eig: d_in.min_eigenvalue,
        defect_out_sup: d_out.sup,
        defect_out_min_eig: d_out.min_eigenvalue,
        defect_out_error_sup: sup(&err_part),
        exactness_residual: last,
        v_increment_c1: v_inc,
        w_increment_c1: w_inc,
        v_hessian_sup: cur.v_hessian_sup(),
        w_hessian_sup: cur.w_hessian_sup()?,
        warnings,
    };
    let cutoffs = if keep { chain } else { vec![] };
    Ok((cur, report, ChiLedger { cutoffs, c_tilde, per_codim }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_closed_form() {
        let s = plan_schedule(0.1, 40.0, 3, 2).unwrap();
        assert!((schedule_ratio(3) - 0.25).abs() < 1e-15);
        assert!((s.alphas[1] - 1.0).abs() < 1e-15);
        assert!((s.alphas[2] - 1.25).abs() < 1e-15);
        assert!(s.identity_residual() < 1e-12);
        assert!(s.is_monotone());
        let one = plan_schedule(0.1, 40.0, 3, 1).unwrap();
        assert_eq!(one.pairs.len(), 2);
        assert!((one.pairs[1].1 - 4f64.powi(4) / 0.1).abs() < 1e-9);
        assert!(plan_schedule(0.1, 5.0, 3, 1).is_err());
        assert!(plan_schedule(0.1, 40.0, 1, 1).is_err());
    }

    #[test]
    fn unresolved_schedule_reports_needed_nodes() {
        let g = Grid2::covering([0.0, 0.0], [1.0, 1.0], 0.2, 128).unwrap();
        let s = plan_schedule(0.1, 40.0, 2, 2).unwrap();
        match s.require_resolved(&g) {
            Err(Error::Resolution { needed_n, .. }) => assert!(needed_n > 128),
            other => panic!("{other:?}"),
        }
    }

    fn chain_grid() -> (Grid2, f64) {
        // h = 0.01, collar 0.2 = 20 nodes, l = 0.1, k = 2 -> q = 3 nodes (rounded up)
        let g = Grid2::new([0.0, 0.0], 81, 81, 0.01, 24).unwrap();
        (g, 0.1)
    }

    #[test]
    fn cutoffs_nest_and_stay_in_unit_interval() {
        let (g, l) = chain_grid();
        let k = 2;
        let chain = cutoff_chain(&g, l, k).unwrap();
        let q = collar_unit(&g, l, k).unwrap();
        for (i, chi) in chain.iter().enumerate() {
            assert!(chi.min() >= 0.0 && chi.max() <= 1.0);
            for jj in g.valid2() {
                for ii in g.valid1() {
                    let (d1, d2) = core_distance(&g, ii, jj);
                    let d = d1.max(d2) as usize;
                    let x = chi.at(ii, jj);
                    if d <= g.margin() - 2 * (i + 1) * q {
                        assert_eq!(x, 1.0);
                    }
                    if d >= g.margin() - (2 * i + 1) * q {
                        assert_eq!(x, 0.0);
                    }
                }
            }
            let grad = crate::field::gradient(chi).unwrap();
            let s = sup(&grad) * l / (2.0 * k as f64);
            assert!((1.0..=4.0).contains(&s), "{s}");
        }
        let inner = g.with_margin(g.margin() - 4 * q).unwrap();
        let prod = chain[0].mul(&chain[1]).unwrap();
        let diff = sub(&rewindow(&prod, inner).unwrap(), &rewindow(&chain[1], inner).unwrap()).unwrap();
        assert_eq!(sup(&diff), 0.0);
    }

    #[test]
    fn thin_collar_is_rejected() {
        let g = Grid2::new([0.0, 0.0], 81, 81, 0.01, 10).unwrap();
        assert!(matches!(cutoff_chain(&g, 0.1, 2), Err(Error::InsufficientCollar { .. })));
    }

    #[test]
    fn iteration_on_multiples_of_identity() {
        let (g, l) = chain_grid();
        let chi = &cutoff_chain(&g, l, 1).unwrap()[0];
        let v0 = VectorField2::zeros(g, 1);
        let z = SymMatrixField2::zeros(g);
        let (a, psi, _) = chi_iteration(1, &z, &z, chi, 2.0, &v0, 30.0, 0.05, 0.25, 4).unwrap();
        assert!((a.min() - 2f64.sqrt()).abs() < 1e-12 && (a.max() - 2f64.sqrt()).abs() < 1e-12);
        assert!(sup(&psi) < 1e-12);
        let d = SymMatrixField2::identity(g, 0.1);
        let (a, _, _) = chi_iteration(1, &d, &z, chi, 2.0, &v0, 30.0, 0.05, 0.25, 4).unwrap();
        let core = g.with_margin(g.margin() - 2 * collar_unit(&g, l, 1).unwrap()).unwrap();
        let a = rewindow(&a, core).unwrap();
        let dev = map_field(&a, |x| x * x - 2.1);
        assert!(sup(&dev) < 1e-6, "{}", sup(&dev));
    }
}
