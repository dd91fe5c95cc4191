//! Monge-Ampere side of the harness: subsolutions built from a right-hand
//! side, and strong or weak residuals of Det D^2 v = f.

use serde::{Deserialize, Serialize};

use crate::decompose::poisson_rectangle;
use crate::error::{Error, Result};
use crate::field::{derivative, sub, Field, Grid2, ScalarField2, SymMatrixField2, VectorField2};
use crate::jet::JetPair;
use crate::steps::{hessians, ImmersionPair};

/// Target metric A = mu Id + (c + max(0, -min mu)) Id with Lap mu = -f on
/// the node rectangle (mu = 0 on its boundary ring), and the zero pair.
pub fn subsolution_from_f(f: &ScalarField2, k: usize, c: f64) -> Result<(ImmersionPair, SymMatrixField2)> {
    if !(c > 0.0) {
        return Err(Error::Precondition(format!("c = {c} must be positive")));
    }
    if f.values().iter().any(|x| !x.is_finite()) {
        return Err(Error::Precondition("f has non-finite samples".into()));
    }
    let g = *f.grid();
    let rhs: Vec<f64> = f.values().iter().map(|x| -x).collect();
    let mu = poisson_rectangle(&rhs, g.n1(), g.n2(), g.h());
    if mu.iter().any(|x| !x.is_finite()) {
        return Err(Error::Precondition("Poisson solve produced non-finite values".into()));
    }
    let mu = ScalarField2::new(g, mu)?;
    let shift = c + (-mu.min()).max(0.0);
    let diag: Vec<f64> = mu.values().iter().map(|m| m + shift).collect();
    let a = SymMatrixField2::from_parts(g, vec![diag.clone(), vec![0.0; g.len()], diag])?;
    Ok((ImmersionPair::zeros(g, k)?, a))
}

/// d22 A11 - 2 d12 A12 + d11 A22
pub fn curl_curl(a: &SymMatrixField2) -> Result<ScalarField2> {
    let t = derivative(&a.m11(), 0, 2)?;
    let m = derivative(&a.m12(), 1, 1)?;
    let b = derivative(&a.m22(), 2, 0)?;
    let g = *a.grid();
    let vals = (0..g.len()).map(|i| t.values()[i] - 2.0 * m.values()[i] + b.values()[i]).collect();
    ScalarField2::new(g, vals)
}

/// Nodes this far from the array edge see only centred stencils.
pub const INTERIOR_OFFSET: usize = 2;

/// sup |curl curl A + f| over the nodes at least [`INTERIOR_OFFSET`] from
/// the array edge; the one-sided boundary stencils are not the operator
/// the Poisson solve inverts.
pub fn curl_curl_residual(a: &SymMatrixField2, f: &ScalarField2) -> Result<f64> {
    let g = *a.grid();
    if !g.same_layout(f.grid()) {
        return Err(Error::GridMismatch("curl curl residual".into()));
    }
    let cc = curl_curl(a)?;
    let s = INTERIOR_OFFSET.max(g.inset());
    let mut worst: f64 = 0.0;
    for j in s..g.n2() - s {
        for i in s..g.n1() - s {
            worst = worst.max((cc.at(i, j) + f.at(i, j)).abs());
        }
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualForm {
    Strong,
    Weak,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaResidual {
    pub form: ResidualForm,
    pub value: f64,
    /// test bank identifier, weak form only
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bank: Option<String>,
}

/// sum_c d11 v^c d22 v^c - (d12 v^c)^2
fn det_hessian(h: &[VectorField2; 3]) -> ScalarField2 {
    let g = *h[0].grid();
    let vals = (0..g.len())
        .map(|i| (0..h[0].ncomp()).map(|c| h[0].comp(c)[i] * h[2].comp(c)[i] - h[1].comp(c)[i].powi(2)).sum())
        .collect();
    ScalarField2::new(g, vals).expect("shape")
}

fn strong_from(h: &[VectorField2; 3], f: &ScalarField2) -> Result<f64> {
    let g = h[0].grid().common(f.grid())?;
    let det = det_hessian(h);
    let mut worst: f64 = 0.0;
    for j in g.valid2() {
        for i in g.valid1() {
            worst = worst.max((det.at(i, j) - f.at(i, j)).abs());
        }
    }
    Ok(worst)
}

/// Strong residual sup |Det D^2 v - f| with difference Hessians.
pub fn ma_residual(v: &VectorField2, f: &ScalarField2) -> Result<MaResidual> {
    Ok(MaResidual { form: ResidualForm::Strong, value: strong_from(&hessians(v)?, f)?, bank: None })
}

pub const WEAK_BANK: &str = "tp-bump-4x4-v1";
const BANK_SIDE: usize = 4;

/// (1 - t^2)^8 and its first two derivatives on |t| < 1.
fn bump(t: f64) -> [f64; 3] {
    if t.abs() >= 1.0 {
        return [0.0; 3];
    }
    let u = 1.0 - t * t;
    [u.powi(8), -16.0 * t * u.powi(7), -16.0 * u.powi(7) + 224.0 * t * t * u.powi(6)]
}

/// Test field j of the bank: a tensor-product bump on a 4x4 tiling of the
/// core rectangle, with radius half a tile.
struct TestField {
    center: [f64; 2],
    radius: [f64; 2],
}

fn bank(g: &Grid2) -> Vec<TestField> {
    let o = [g.x1(g.core1().start), g.x2(g.core2().start)];
    let e = [
        g.x1(g.core1().end - 1) - o[0],
        g.x2(g.core2().end - 1) - o[1],
    ];
    let tile = [e[0] / BANK_SIDE as f64, e[1] / BANK_SIDE as f64];
    let mut out = Vec::with_capacity(BANK_SIDE * BANK_SIDE);
    for b in 0..BANK_SIDE {
        for a in 0..BANK_SIDE {
            out.push(TestField {
                center: [o[0] + (a as f64 + 0.5) * tile[0], o[1] + (b as f64 + 0.5) * tile[1]],
                radius: [0.5 * tile[0], 0.5 * tile[1]],
            });
        }
    }
    out
}

/// Weak residual of a defect D = A - metric: the largest normalised pairing
/// |<D, cof D^2 phi>| / <1, phi> over the bank. For smooth v this is the
/// phi-average of |Det D^2 v + curl curl A|.
pub fn weak_residual(d: &SymMatrixField2) -> MaResidual {
    let g = *d.grid();
    let mut worst: f64 = 0.0;
    for t in bank(&g) {
        let (mut pair, mut mass) = (0.0, 0.0);
        for j in g.core2() {
            let y = bank_coord(g.x2(j), t.center[1], t.radius[1]);
            if y[0] == 0.0 && y[2] == 0.0 {
                continue;
            }
            for i in g.core1() {
                let x = bank_coord(g.x1(i), t.center[0], t.radius[0]);
                let k = g.idx(i, j);
                let p11 = x[2] * y[0];
                let p12 = x[1] * y[1];
                let p22 = x[0] * y[2];
                pair += d.comp(0)[k] * p22 - 2.0 * d.comp(1)[k] * p12 + d.comp(2)[k] * p11;
                mass += x[0] * y[0];
            }
        }
        if mass > 0.0 {
            worst = worst.max((pair / mass).abs());
        }
    }
    MaResidual { form: ResidualForm::Weak, value: worst, bank: Some(WEAK_BANK.into()) }
}

fn bank_coord(x: f64, c: f64, r: f64) -> [f64; 3] {
    let b = bump((x - c) / r);
    [b[0], b[1] / r, b[2] / (r * r)]
}

/// Relative agreement between carried and differenced Hessians below which
/// an iterate counts as resolved.
pub const RESOLVED_TOL: f64 = 1e-6;

/// Strong residual when the iterate is resolved on its grid, weak otherwise.
pub fn ma_residual_jet(p: &JetPair, a: &SymMatrixField2, f: &ScalarField2) -> Result<MaResidual> {
    let fd = hessians(p.v())?;
    let scale = p.v_hessian_sup().max(1.0);
    let gap = (0..3).map(|e| crate::field::sup(&sub(&fd[e], &p.hv[e]).expect("shape"))).fold(0.0, f64::max);
    if gap <= RESOLVED_TOL * scale {
        Ok(MaResidual { form: ResidualForm::Strong, value: strong_from(&p.hv, f)?, bank: None })
    } else {
        let d = p.defect(a)?;
        Ok(weak_residual(&d.d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompose::laplacian_rectangle;

    fn unit(n: usize) -> Grid2 {
        Grid2::new([0.0, 0.0], n, n, 1.0 / (n - 1) as f64, 0).unwrap()
    }

    /// Dense Gaussian elimination on the interior unknowns of the operator
    /// the solver claims to invert.
    fn dense_solve(f: &[f64], n: usize, h: f64) -> Vec<f64> {
        let m = n - 2;
        let unknowns = m * m;
        let mut mat = vec![vec![0.0; unknowns + 1]; unknowns];
        for col in 0..unknowns {
            let mut e = vec![0.0; n * n];
            e[(col / m + 1) * n + col % m + 1] = 1.0;
            let le = laplacian_rectangle(&e, n, n, h);
            for row in 0..unknowns {
                mat[row][col] = le[(row / m + 1) * n + row % m + 1];
            }
        }
        for row in 0..unknowns {
            mat[row][unknowns] = f[(row / m + 1) * n + row % m + 1];
        }
        for c in 0..unknowns {
            let p = (c..unknowns).max_by(|&a, &b| mat[a][c].abs().total_cmp(&mat[b][c].abs())).unwrap();
            mat.swap(c, p);
            for r in c + 1..unknowns {
                let q = mat[r][c] / mat[c][c];
                if q != 0.0 {
                    for k in c..=unknowns {
                        mat[r][k] -= q * mat[c][k];
                    }
                }
            }
        }
        let mut x = vec![0.0; unknowns];
        for r in (0..unknowns).rev() {
            let s: f64 = (r + 1..unknowns).map(|k| mat[r][k] * x[k]).sum();
            x[r] = (mat[r][unknowns] - s) / mat[r][r];
        }
        let mut u = vec![0.0; n * n];
        for r in 0..unknowns {
            u[(r / m + 1) * n + r % m + 1] = x[r];
        }
        u
    }

    #[test]
    fn zero_source_gives_constant_target() {
        let g = unit(33);
        let (p, a) = subsolution_from_f(&ScalarField2::zeros(g), 2, 1.0).unwrap();
        assert_eq!(p.k(), 2);
        assert!(a.m11().values().iter().all(|&x| (x - 1.0).abs() < 1e-15));
        assert!(a.min_eigenvalue() >= 1.0);
    }

    #[test]
    fn torsion_function_matches_dense_solve() {
        let n = 32;
        let g = unit(n);
        let f = ScalarField2::constant(g, 1.0);
        let (_, a) = subsolution_from_f(&f, 1, 0.5).unwrap();
        let shift = 0.5; // mu >= 0 for f >= 0
        let mu: Vec<f64> = a.m11().values().iter().map(|x| x - shift).collect();
        assert!(mu.iter().all(|&x| x >= -1e-14));
        let lap = laplacian_rectangle(&mu, n, n, g.h());
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                assert!((lap[j * n + i] + 1.0).abs() <= 1e-8);
            }
        }
        let minus_f = vec![-1.0; n * n];
        let dense = dense_solve(&minus_f, n, g.h());
        let gap = mu.iter().zip(&dense).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(gap <= 1e-8, "{gap}");
        // the continuum torsion function peaks at about 0.0737 on the unit square
        let peak = mu.iter().cloned().fold(0.0, f64::max);
        assert!((peak - 0.0737).abs() < 2e-3, "{peak}");
    }

    #[test]
    fn curl_curl_of_the_target_inverts_f() {
        let g = unit(96);
        let f = ScalarField2::from_fn(g, |x, y| 1.0 + 0.5 * (3.0 * x).sin() * y);
        let (_, a) = subsolution_from_f(&f, 1, 1.0).unwrap();
        assert!(curl_curl_residual(&a, &f).unwrap() <= 1e-6);
        assert!(a.min_eigenvalue() > 1.0 - 1e-6);
    }

    #[test]
    fn strong_residual_by_hand() {
        let g = unit(33);
        let v = VectorField2::from_fn(g, 2, |c, x, y| if c == 0 { x * y } else { 0.0 });
        let r = ma_residual(&v, &ScalarField2::constant(g, -1.0)).unwrap();
        assert_eq!(r.form, ResidualForm::Strong);
        assert!(r.value <= 1e-8, "{}", r.value);
        let z = ma_residual(&VectorField2::zeros(g, 1), &ScalarField2::zeros(g)).unwrap();
        assert_eq!(z.value, 0.0);
    }

    #[test]
    fn weak_pairing_recovers_the_determinant_average() {
        // v = (x^2/2 + y^2/2): Det = 1, so D = -metric pairs to -1 on every bump
        let g = Grid2::new([-0.25, -0.25], 201, 201, 1.5 / 200.0, 25).unwrap();
        let v = VectorField2::from_fn(g, 1, |_, x, y| 0.5 * (x * x + y * y));
        let p = JetPair::from_pair(&ImmersionPair::new(v, VectorField2::zeros(g, 2)).unwrap()).unwrap();
        let d = p.defect(&SymMatrixField2::zeros(g)).unwrap();
        let r = weak_residual(&d.d);
        assert_eq!(r.bank.as_deref(), Some(WEAK_BANK));
        assert!((r.value - 1.0).abs() < 1e-3, "{}", r.value);
        // adding sym grad w changes nothing
        let w = VectorField2::from_fn(g, 2, |c, x, y| if c == 0 { (2.0 * y).sin() * x } else { x * x * y });
        let p2 = JetPair::from_pair(&ImmersionPair::new(p.v().clone(), w).unwrap()).unwrap();
        let r2 = weak_residual(&p2.defect(&SymMatrixField2::zeros(g)).unwrap().d);
        assert!((r2.value - r.value).abs() < 1e-3, "{} {}", r.value, r2.value);
    }

    #[test]
    fn smooth_iterates_use_the_strong_form() {
        let g = unit(65);
        let v = VectorField2::from_fn(g, 1, |_, x, y| x * y);
        let p = JetPair::from_pair(&ImmersionPair::new(v, VectorField2::zeros(g, 2)).unwrap()).unwrap();
        let f = ScalarField2::constant(g, -1.0);
        let r = ma_residual_jet(&p, &SymMatrixField2::zeros(g), &f).unwrap();
        assert_eq!(r.form, ResidualForm::Strong);
        assert!(r.value < 1e-8);
    }
}
