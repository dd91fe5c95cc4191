//! The `verify` invariant suite: quick, fixed-size versions of the exact
//! identities the engine relies on. Only the seed varies between runs.

use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use serde_json::json;

use crate::decompose::{default_band, DirichletSolver, NewtonianSolver, Quadrature};
use crate::error::Result;
use crate::field::{cm_norm, read_macf1, sub, sup, write_macf1, Field, Grid2, ScalarField2, SymMatrixField2, VectorField2};
use crate::jet::JetPair;
use crate::mollify::mollify;
use crate::nk::{chi_ratio_limit, exponent_bound_exact, rate_budget_exact, Family};
use crate::random::{compact_sym, rng, smooth_scalar};
use crate::stage::{calibrate_r0, plan_schedule, run_stage_kallen, StageParams};
use crate::steps::{apply_step, step_identity_residual, Axis, ImmersionPair, StepKind, StepSpec};

use super::experiment::{Check, RunLedger};
use super::fit::fit_power_law;
use super::ma::{curl_curl_residual, subsolution_from_f};

fn unit(n: usize, margin: usize) -> Grid2 {
    Grid2::new([0.0, 0.0], n, n, 1.0 / (n - 1) as f64, margin).expect("fixed grid")
}

fn rat(a: i64, b: i64) -> BigRational {
    BigRational::new(a.into(), b.into())
}

pub(super) fn run(ledger: &mut RunLedger, seed: u64) -> Result<()> {
    let checks = &mut ledger.checks;
    let flag = |name: &str, ok: bool| Check { name: name.into(), value: ok as u8 as f64, bound: 1.0, pass: ok };

    // exact exponent arithmetic
    let one = BigRational::one();
    let table = [(1, rat(1, 3)), (2, rat(3, 7)), (3, rat(7, 15))];
    let ok = table.iter().all(|(k, v)| exponent_bound_exact(*k, &one, Family::Chi).ok().as_ref() == Some(v))
        && (4..=6).all(|k| exponent_bound_exact(k, &rat(1, 2), Family::Kallen).ok() == Some(rat(1, 4)));
    checks.push(flag("exponent table", ok));
    let mut worst: f64 = 0.0;
    for k in 1..=4u32 {
        let r = rate_budget_exact(1_000_000, k, Family::Chi)?;
        let got = r.j_over_s().to_f64().unwrap_or(f64::NAN);
        let want = chi_ratio_limit(k).to_f64().unwrap_or(f64::NAN);
        worst = worst.max((got / want - 1.0).abs());
    }
    checks.push(Check::below("J/S limit at N = 1e6", worst, 1e-4));
    let s = plan_schedule(0.1, 40.0, 3, 3)?;
    checks.push(Check::below("frequency schedule identities", s.identity_residual(), 1e-12));

    // step identities
    let mut r = rng(seed);
    let g = unit(513, 0);
    let amp = crate::field::map_field(&smooth_scalar(g, &mut r, 4, 3.0), |x| 1.0 + 0.25 * x);
    let a2 = cm_norm(&amp, 2)?;
    let v = VectorField2::from_fn(g, 4, |c, x, y| 0.3 * (c as f64 + 1.0) * x * x - 0.2 * x * y + 0.1 * y * y);
    let p = ImmersionPair::new(v, VectorField2::zeros(g, 2))?;
    for (name, kind) in [
        ("spiral step identity", StepKind::Spiral),
        ("corrugation step identity", StepKind::Corrugation { axis: Axis::X1, component: 2 }),
    ] {
        let spec = StepSpec { amplitude: amp.clone(), frequency: 16.0, kind };
        let q = apply_step(&p, &spec)?;
        checks.push(Check::below(name, step_identity_residual(&p, &q, &spec)? / (1.0 + a2 * a2), 1e-5));
    }

    // decompositions
    let g = unit(513, 0);
    let band = default_band(&g);
    let newton = NewtonianSolver::new(&g, Quadrature::Corrected);
    let dirichlet = DirichletSolver::new(&g)?;
    let (mut wn, mut wd): (f64, f64) = (0.0, 0.0);
    for _ in 0..3 {
        let d = compact_sym(g, &mut r, 4, 4.0, 0.4);
        let scale = 1.0 + sup(&d);
        wn = wn.max(newton.decompose(&d, band)?.residual_sup / scale);
        wd = wd.max(dirichlet.decompose(&d)?.residual_sup / scale);
    }
    checks.push(Check::below("potential-route reconstruction", wn, 1e-6));
    checks.push(Check::below("rectangle-route reconstruction", wd, 1e-6));
    let id = dirichlet.decompose(&SymMatrixField2::identity(g, 1.0))?;
    let gap = id.a.values().iter().map(|x| (x - 1.0).abs()).fold(sup(&id.psi), f64::max);
    checks.push(Check::below("a_bar(Id) = 1, psi_bar(Id) = 0", gap, 1e-10));

    // mollification keeps affine data
    let g = unit(96, 12);
    let x = ScalarField2::from_fn(g, |x, y| 2.0 * x - y + 0.5);
    let mx = mollify(&x, 8.0 * g.h())?;
    let ex = ScalarField2::from_fn(*mx.grid(), |x, y| 2.0 * x - y + 0.5);
    checks.push(Check::below("mollified affine field", sup(&sub(&mx, &ex)?), 1e-12));

    // one spiral stage and its closing identity
    let g = Grid2::covering([0.5, 0.5], [1.0, 1.0], 0.25, 192)?;
    let a = SymMatrixField2::identity(g, 1.0);
    let params = StageParams {
        l: 0.1,
        lambda: 32.0,
        gamma: 0.05,
        n: 1,
        m_bound: None,
        sigma0: 1.0,
        r0: calibrate_r0(&g, 0.05, seed)?,
        beta: 1.0,
    };
    let (_, rep) = run_stage_kallen(&JetPair::zeros(g, 4)?, &a, &params)?;
    checks.push(Check::below("spiral stage exactness", rep.exactness_residual, 1e-6));
    checks.push(flag("spiral stage amplitude band", rep.iterations.iter().all(|i| i.in_band)));
    checks.push(Check::below("spiral stage defect below input", rep.defect_out_sup, rep.defect_in_sup));

    // Monge-Ampere subsolution
    let g = unit(96, 0);
    let f = ScalarField2::constant(g, 1.0);
    let (_, a) = subsolution_from_f(&f, 1, 1.0)?;
    checks.push(Check::below("curl curl A + f", curl_curl_residual(&a, &f)?, 1e-6));

    // fitting and field I/O
    let xs = [1.0, 2.0, 4.0, 8.0];
    let fit = fit_power_law(&xs, &xs.map(|x| x * x))?;
    checks.push(Check::below("power fit of x^2", (fit.slope - 2.0).abs(), 1e-10));
    let mut buf = vec![];
    write_macf1(&a, &mut buf)?;
    let back: SymMatrixField2 = read_macf1(buf.as_slice())?;
    checks.push(flag("MACF1 round trip", back == a));

    let passed = checks.iter().filter(|c| c.pass).count();
    ledger.summary = json!({ "checks": checks.len(), "passed": passed });
    Ok(())
}
