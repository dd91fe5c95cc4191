//! Single high-frequency perturbations of a pair (v, w): the four-phase
//! spiral and the one-component corrugation, with their exact error fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{
    derivative, map_valid, rewindow, sup, sym_grad, Field, Grid2, ScalarField2, SymMatrixField2, VectorField2,
};

/// Out-of-plane displacement v (k components) and in-plane displacement w.
#[derive(Clone, Debug, PartialEq)]
pub struct ImmersionPair {
    pub v: VectorField2,
    pub w: VectorField2,
}

impl ImmersionPair {
    pub fn new(v: VectorField2, w: VectorField2) -> Result<Self> {
        if w.ncomp() != 2 {
            return Err(Error::ComponentCount { expected: 2, got: w.ncomp() });
        }
        if v.ncomp() == 0 {
            return Err(Error::Codimension { k: 0, need: 1 });
        }
        let g = v.grid().common(w.grid())?;
        Ok(ImmersionPair { v: rewindow(&v, g)?, w: rewindow(&w, g)? })
    }

    pub fn zeros(grid: Grid2, k: usize) -> Result<Self> {
        Self::new(VectorField2::zeros(grid, k), VectorField2::zeros(grid, 2))
    }

    pub fn grid(&self) -> &Grid2 {
        self.v.grid()
    }

    pub fn k(&self) -> usize {
        self.v.ncomp()
    }

    /// Both fields moved to a narrower window of the same layout.
    pub fn rewindow(&self, g: Grid2) -> Result<Self> {
        Ok(ImmersionPair { v: rewindow(&self.v, g)?, w: rewindow(&self.w, g)? })
    }
}

/// A - (1/2 (grad v)^T grad v + sym grad w) with its spectral summary.
#[derive(Clone, Debug)]
pub struct DefectField {
    pub d: SymMatrixField2,
    pub min_eigenvalue: f64,
    pub sup: f64,
}

/// 1/2 (grad v)^T grad v + sym grad w.
pub fn metric(p: &ImmersionPair) -> Result<SymMatrixField2> {
    let g = *p.grid();
    let d1 = derivative(&p.v, 1, 0)?;
    let d2 = derivative(&p.v, 0, 1)?;
    let sw = sym_grad(&p.w)?;
    let k = p.k();
    let quad = |a: &VectorField2, b: &VectorField2, idx: usize| (0..k).map(|j| a.comp(j)[idx] * b.comp(j)[idx]).sum::<f64>();
    let m = [
        map_valid(&g, |i| 0.5 * quad(&d1, &d1, i) + sw.comp(0)[i]),
        map_valid(&g, |i| 0.5 * quad(&d1, &d2, i) + sw.comp(1)[i]),
        map_valid(&g, |i| 0.5 * quad(&d2, &d2, i) + sw.comp(2)[i]),
    ];
    SymMatrixField2::from_parts(g, m.into())
}

pub fn defect(p: &ImmersionPair, a: &SymMatrixField2) -> Result<DefectField> {
    let m = metric(p)?;
    let d = crate::field::sub(a, &m)?;
    Ok(DefectField { min_eigenvalue: d.min_eigenvalue(), sup: sup(&d), d })
}

/// Coordinate direction of a corrugation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X1,
    X2,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X1 => 0,
            Axis::X2 => 1,
        }
    }
    fn coord(self, x: [f64; 2]) -> f64 {
        x[self.index()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum StepKind {
    Spiral,
    /// `component` is zero-based.
    Corrugation { axis: Axis, component: usize },
}

#[derive(Clone, Debug)]
pub struct StepSpec {
    pub amplitude: ScalarField2,
    pub frequency: f64,
    pub kind: StepKind,
}

/// Corrugation profile 2 sin t and its companion -1/2 sin 2t.
pub fn corrugation_gamma(t: f64) -> f64 {
    2.0 * t.sin()
}
pub fn corrugation_gamma_bar(t: f64) -> f64 {
    -0.5 * (2.0 * t).sin()
}

/// Spiral phases (sin, cos) along x1 then (sin, cos) along x2.
fn spiral_phases(lambda: f64, x: [f64; 2]) -> [f64; 4] {
    let (s1, c1) = (lambda * x[0]).sin_cos();
    let (s2, c2) = (lambda * x[1]).sin_cos();
    [s1, c1, s2, c2]
}

fn position(g: &Grid2, idx: usize) -> [f64; 2] {
    [g.x1(idx % g.n1()), g.x2(idx / g.n1())]
}

fn check_frequency(g: &Grid2, lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Precondition(format!("frequency {lambda} must be positive")));
    }
    g.check_resolution(lambda)
}

fn align(p: &ImmersionPair, a: &ScalarField2) -> Result<(ImmersionPair, ScalarField2, Grid2)> {
    let g = p.grid().common(a.grid())?;
    Ok((p.rewindow(g)?, rewindow(a, g)?, g))
}

pub fn spiral_step(p: &ImmersionPair, a: &ScalarField2, lambda: f64) -> Result<ImmersionPair> {
    if p.k() < 4 {
        return Err(Error::Codimension { k: p.k(), need: 4 });
    }
    let (p, a, g) = align(p, a)?;
    check_frequency(&g, lambda)?;
    if a.min() < -1e-12 {
        return Err(Error::Precondition(format!("spiral amplitude is negative ({:e})", a.min())));
    }
    let av = a.values();
    let d1 = derivative(&p.v, 1, 0)?;
    let d2 = derivative(&p.v, 0, 1)?;
    let mut v = p.v.clone();
    for j in 0..4 {
        let add = map_valid(&g, |i| av[i] / lambda * spiral_phases(lambda, position(&g, i))[j]);
        v.comp_mut(j).iter_mut().zip(&add).for_each(|(x, y)| *x += y);
    }
    let mut w = p.w.clone();
    for (c, dv) in [&d1, &d2].into_iter().enumerate() {
        let sub = map_valid(&g, |i| {
            let ph = spiral_phases(lambda, position(&g, i));
            av[i] / lambda * (0..4).map(|j| ph[j] * dv.comp(j)[i]).sum::<f64>()
        });
        w.comp_mut(c).iter_mut().zip(&sub).for_each(|(x, y)| *x -= y);
    }
    Ok(ImmersionPair { v, w })
}

pub fn corrugation_step(
    p: &ImmersionPair,
    a: &ScalarField2,
    lambda: f64,
    axis: Axis,
    component: usize,
) -> Result<ImmersionPair> {
    if component >= p.k() {
        return Err(Error::Precondition(format!("component {component} outside 0..{}", p.k())));
    }
    let (p, a, g) = align(p, a)?;
    check_frequency(&g, lambda)?;
    let av = a.values();
    let vj = p.v.component(component);
    let dv = [derivative(&vj, 1, 0)?, derivative(&vj, 0, 1)?];
    let t = |i: usize| lambda * axis.coord(position(&g, i));
    let mut v = p.v.clone();
    let add = map_valid(&g, |i| av[i] / lambda * corrugation_gamma(t(i)));
    v.comp_mut(component).iter_mut().zip(&add).for_each(|(x, y)| *x += y);
    let mut w = p.w.clone();
    for c in 0..2 {
        let dvc = dv[c].values();
        let delta = map_valid(&g, |i| {
            let mut s = -av[i] / lambda * corrugation_gamma(t(i)) * dvc[i];
            if c == axis.index() {
                s += av[i] * av[i] / lambda * corrugation_gamma_bar(t(i));
            }
            s
        });
        w.comp_mut(c).iter_mut().zip(&delta).for_each(|(x, y)| *x += y);
    }
    Ok(ImmersionPair { v, w })
}

/// Second derivatives (d11, d12, d22) of v, one field per entry.
pub fn hessians(v: &VectorField2) -> Result<[VectorField2; 3]> {
    Ok([derivative(v, 2, 0)?, derivative(v, 1, 1)?, derivative(v, 0, 2)?])
}

/// Metric change minus (a^2/2) Id produced by a spiral step:
/// -(a/lambda) sum_j phase_j hess v^j + (1/lambda^2) grad a (x) grad a.
pub fn spiral_error(v: &VectorField2, a: &ScalarField2, lambda: f64) -> Result<SymMatrixField2> {
    if v.ncomp() < 4 {
        return Err(Error::Codimension { k: v.ncomp(), need: 4 });
    }
    let hv = hessians(v)?;
    spiral_error_with(&hv, a, lambda)
}

/// As [`spiral_error`] with the Hessians of v precomputed.
pub fn spiral_error_with(hv: &[VectorField2; 3], a: &ScalarField2, lambda: f64) -> Result<SymMatrixField2> {
    let g = hv[0].grid().common(a.grid())?;
    let a = rewindow(a, g)?;
    let da = [derivative(&a, 1, 0)?, derivative(&a, 0, 1)?];
    let av = a.values();
    let (a1, a2) = (da[0].values(), da[1].values());
    let ent = |e: usize, gg: f64, i: usize| {
        let ph = spiral_phases(lambda, position(&g, i));
        -av[i] / lambda * (0..4).map(|j| ph[j] * hv[e].comp(j)[i]).sum::<f64>() + gg / (lambda * lambda)
    };
    let m = vec![
        map_valid(&g, |i| ent(0, a1[i] * a1[i], i)),
        map_valid(&g, |i| ent(1, a1[i] * a2[i], i)),
        map_valid(&g, |i| ent(2, a2[i] * a2[i], i)),
    ];
    SymMatrixField2::from_parts(g, m)
}

/// Metric change minus a^2 e_i (x) e_i produced by a corrugation step.
pub fn corrugation_error(
    v: &VectorField2,
    a: &ScalarField2,
    lambda: f64,
    axis: Axis,
    component: usize,
) -> Result<SymMatrixField2> {
    if component >= v.ncomp() {
        return Err(Error::Precondition(format!("component {component} outside 0..{}", v.ncomp())));
    }
    let vj = v.component(component);
    let hv = [derivative(&vj, 2, 0)?, derivative(&vj, 1, 1)?, derivative(&vj, 0, 2)?];
    corrugation_error_with(&hv, a, lambda, axis)
}

/// As [`corrugation_error`] with the Hessian of v^j precomputed.
pub fn corrugation_error_with(
    hv: &[ScalarField2; 3],
    a: &ScalarField2,
    lambda: f64,
    axis: Axis,
) -> Result<SymMatrixField2> {
    let g = hv[0].grid().common(a.grid())?;
    let a = rewindow(a, g)?;
    let da = [derivative(&a, 1, 0)?, derivative(&a, 0, 1)?];
    let av = a.values();
    let (a1, a2) = (da[0].values(), da[1].values());
    let t = |i: usize| lambda * axis.coord(position(&g, i));
    // sym(grad(a^2) (x) e_i) = a * (grad a (x) e_i + e_i (x) grad a)
    let sym_term = |e: usize, i: usize| {
        let ga = [a1[i], a2[i]];
        let r = match (e, axis) {
            (0, Axis::X1) => 2.0 * ga[0],
            (1, Axis::X1) => ga[1],
            (1, Axis::X2) => ga[0],
            (2, Axis::X2) => 2.0 * ga[1],
            _ => 0.0,
        };
        av[i] * r
    };
    let ent = |e: usize, gg: f64, i: usize| {
        let ti = t(i);
        let gm = corrugation_gamma(ti);
        -av[i] / lambda * gm * hv[e].values()[i] + gm * gm * gg / (2.0 * lambda * lambda)
            - corrugation_gamma_bar(ti) / lambda * sym_term(e, i)
    };
    let m = vec![
        map_valid(&g, |i| ent(0, a1[i] * a1[i], i)),
        map_valid(&g, |i| ent(1, a1[i] * a2[i], i)),
        map_valid(&g, |i| ent(2, a2[i] * a2[i], i)),
    ];
    SymMatrixField2::from_parts(g, m)
}

pub fn apply_step(p: &ImmersionPair, spec: &StepSpec) -> Result<ImmersionPair> {
    match spec.kind {
        StepKind::Spiral => spiral_step(p, &spec.amplitude, spec.frequency),
        StepKind::Corrugation { axis, component } => {
            corrugation_step(p, &spec.amplitude, spec.frequency, axis, component)
        }
    }
}

/// sup of (metric(after) - metric(before) - main term - error field), where
/// the main term is (a^2/2) Id for a spiral and a^2 e_i (x) e_i for a corrugation.
pub fn step_identity_residual(before: &ImmersionPair, after: &ImmersionPair, spec: &StepSpec) -> Result<f64> {
    if before.k() != after.k() {
        return Err(Error::Precondition("pairs differ in codimension".into()));
    }
    let change = crate::field::sub(&metric(after)?, &metric(before)?)?;
    let a = &spec.amplitude;
    let (err, main) = match spec.kind {
        StepKind::Spiral => {
            let e = spiral_error(&before.v, a, spec.frequency)?;
            let half = a.values().iter().map(|x| 0.5 * x * x).collect::<Vec<_>>();
            let m = SymMatrixField2::from_parts(*a.grid(), vec![half.clone(), vec![0.0; half.len()], half])?;
            (e, m)
        }
        StepKind::Corrugation { axis, component } => {
            let e = corrugation_error(&before.v, a, spec.frequency, axis, component)?;
            let sq = a.values().iter().map(|x| x * x).collect::<Vec<_>>();
            let z = vec![0.0; sq.len()];
            let m = match axis {
                Axis::X1 => vec![sq, z.clone(), z],
                Axis::X2 => vec![z.clone(), z, sq],
            };
            (e, SymMatrixField2::from_parts(*a.grid(), m)?)
        }
    };
    let r = crate::field::sub(&crate::field::sub(&change, &main)?, &err)?;
    Ok(sup(&r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{cm_norm, sub};
    use crate::random::{rng, smooth_scalar};

    fn unit(n: usize) -> Grid2 {
        Grid2::new([0.0, 0.0], n, n, 1.0 / (n - 1) as f64, 0).unwrap()
    }

    fn quadratic_pair(g: Grid2, k: usize) -> ImmersionPair {
        let v = VectorField2::from_fn(g, k, |c, x, y| {
            let c = c as f64;
            0.3 * (c + 1.0) * x * x - 0.2 * x * y + 0.1 * c * y * y + 0.05 * x
        });
        let w = VectorField2::from_fn(g, 2, |c, x, y| if c == 0 { x * y } else { 0.5 * y });
        ImmersionPair::new(v, w).unwrap()
    }

    fn amplitude(g: Grid2, seed: u64) -> ScalarField2 {
        let s = smooth_scalar(g, &mut rng(seed), 4, 3.0);
        crate::field::map_field(&s, |x| 1.0 + 0.3 * x)
    }

    #[test]
    fn defect_examples() {
        let g = unit(40);
        let id = SymMatrixField2::identity(g, 1.0);
        let z = ImmersionPair::zeros(g, 2).unwrap();
        let d = defect(&z, &id).unwrap();
        assert_eq!(d.min_eigenvalue, 1.0);
        let p = ImmersionPair::new(VectorField2::zeros(g, 1), VectorField2::identity(g)).unwrap();
        assert!(defect(&p, &id).unwrap().sup < 1e-12);
        let p = ImmersionPair::new(VectorField2::from_fn(g, 2, |c, x, _| if c == 0 { x * x } else { 0.0 }), VectorField2::zeros(g, 2)).unwrap();
        let d = defect(&p, &SymMatrixField2::zeros(g)).unwrap().d;
        let ex = SymMatrixField2::from_fn(g, |x, _| [-2.0 * x * x, 0.0, 0.0]);
        assert!(sup(&sub(&d, &ex).unwrap()) < 1e-10);
    }

    #[test]
    fn trivial_steps_are_exact() {
        // the only error left is the finite-difference error on the phases
        let g = unit(513);
        let v = VectorField2::from_fn(g, 4, |c, x, y| (c as f64 + 1.0) * x - 0.5 * y);
        let p = ImmersionPair::new(v, VectorField2::zeros(g, 2)).unwrap();
        let a = ScalarField2::constant(g, 0.7);
        for kind in [StepKind::Spiral, StepKind::Corrugation { axis: Axis::X1, component: 2 }] {
            let spec = StepSpec { amplitude: a.clone(), frequency: 4.0, kind };
            let q = apply_step(&p, &spec).unwrap();
            assert!(step_identity_residual(&p, &q, &spec).unwrap() < 1e-8);
        }
        let zero = StepSpec { amplitude: ScalarField2::zeros(g), frequency: 16.0, kind: StepKind::Spiral };
        assert_eq!(apply_step(&p, &zero).unwrap(), p);
    }

    #[test]
    fn guards() {
        let g = unit(64);
        let p = ImmersionPair::zeros(g, 3).unwrap();
        let a = ScalarField2::constant(g, 1.0);
        assert!(matches!(spiral_step(&p, &a, 8.0), Err(Error::Codimension { .. })));
        assert!(matches!(corrugation_step(&p, &a, 200.0, Axis::X2, 0), Err(Error::Resolution { .. })));
        assert!(corrugation_step(&p, &a, 8.0, Axis::X2, 3).is_err());
    }

    fn residuals(n: usize, kind: StepKind) -> (f64, f64) {
        let g = unit(n);
        let p = quadratic_pair(g, 4);
        let a = amplitude(g, 5);
        let spec = StepSpec { amplitude: a.clone(), frequency: 16.0, kind };
        let q = apply_step(&p, &spec).unwrap();
        (step_identity_residual(&p, &q, &spec).unwrap(), cm_norm(&a, 2).unwrap())
    }

    #[test]
    fn identities_converge_at_fourth_order() {
        for kind in [StepKind::Spiral, StepKind::Corrugation { axis: Axis::X2, component: 1 }] {
            let (r1, a2) = residuals(257, kind);
            let (r2, _) = residuals(513, kind);
            assert!(r2 <= 1e-5 * (1.0 + a2 * a2), "{kind:?}: {r2}");
            let ratio = r1 / r2;
            assert!((8.0..=24.0).contains(&ratio), "{kind:?}: ratio {ratio}");
        }
    }

    #[test]
    fn displacement_bounds() {
        let g = unit(128);
        let p = quadratic_pair(g, 4);
        let a = amplitude(g, 9);
        let lam = 20.0;
        let q = spiral_step(&p, &a, lam).unwrap();
        assert!(sup(&sub(&q.v, &p.v).unwrap()) <= 4.0 * sup(&a) / lam);
        let q = corrugation_step(&p, &a, lam, Axis::X1, 0).unwrap();
        assert!(sup(&sub(&q.v, &p.v).unwrap()) <= 2.0 * sup(&a) / lam + 1e-15);
        for c in 1..4 {
            assert_eq!(q.v.comp(c), p.v.comp(c));
        }
    }
}
