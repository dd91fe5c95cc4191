//! A pair (v, w) carried together with grad v, hess v and grad w. Steps
//! update these analytically in the phase and by finite differences only in
//! the slowly varying amplitude, so metrics of heavily corrugated pairs stay
//! accurate up to the resolution limit.

use crate::error::{Error, Result};
use crate::field::{
    derivative, map_valid, narrow, rewindow, sub, sup, Field, Grid2, ScalarField2, SymMatrixField2, VectorField2,
};
use crate::mollify::Mollifier;
use crate::steps::{corrugation_gamma, corrugation_gamma_bar, Axis, DefectField, ImmersionPair};

#[derive(Clone, Debug)]
pub struct JetPair {
    pub pair: ImmersionPair,
    /// d1 v, d2 v
    pub dv: [VectorField2; 2],
    /// d11 v, d12 v, d22 v
    pub hv: [VectorField2; 3],
    /// d1 w, d2 w
    pub dw: [VectorField2; 2],
}

/// One oscillating term (a/lambda) f(lambda x_axis) added to v^component.
struct Phase {
    component: usize,
    axis: usize,
    /// f, f', f'' at t
    profile: fn(f64) -> [f64; 3],
}

fn gamma3(t: f64) -> [f64; 3] {
    let (s, c) = t.sin_cos();
    [corrugation_gamma(t), 2.0 * c, -2.0 * s]
}
fn sin3(t: f64) -> [f64; 3] {
    let (s, c) = t.sin_cos();
    [s, c, -s]
}
fn cos3(t: f64) -> [f64; 3] {
    let (s, c) = t.sin_cos();
    [c, -s, -c]
}

fn pos(g: &Grid2, idx: usize) -> [f64; 2] {
    [g.x1(idx % g.n1()), g.x2(idx / g.n1())]
}

/// (c, d) for the Hessian slot e of (11, 12, 22).
const SLOTS: [(usize, usize); 3] = [(0, 0), (0, 1), (1, 1)];

fn field_add(dst: &mut VectorField2, c: usize, delta: &[f64]) {
    dst.comp_mut(c).iter_mut().zip(delta).for_each(|(x, y)| *x += y);
}

impl JetPair {
    /// Derivatives by finite differences.
    pub fn from_pair(p: &ImmersionPair) -> Result<Self> {
        let v = &p.v;
        Ok(JetPair {
            dv: [derivative(v, 1, 0)?, derivative(v, 0, 1)?],
            hv: [derivative(v, 2, 0)?, derivative(v, 1, 1)?, derivative(v, 0, 2)?],
            dw: [derivative(&p.w, 1, 0)?, derivative(&p.w, 0, 1)?],
            pair: p.clone(),
        })
    }

    pub fn zeros(g: Grid2, k: usize) -> Result<Self> {
        Self::from_pair(&ImmersionPair::zeros(g, k)?)
    }

    pub fn grid(&self) -> &Grid2 {
        self.pair.grid()
    }

    pub fn k(&self) -> usize {
        self.pair.k()
    }

    pub fn v(&self) -> &VectorField2 {
        &self.pair.v
    }

    pub fn w(&self) -> &VectorField2 {
        &self.pair.w
    }

    /// In-place [`JetPair::rewindow`].
    pub fn narrow(&mut self, g: Grid2) -> Result<()> {
        narrow(&mut self.pair.v, g)?;
        narrow(&mut self.pair.w, g)?;
        for f in self.dv.iter_mut().chain(self.hv.iter_mut()).chain(self.dw.iter_mut()) {
            narrow(f, g)?;
        }
        Ok(())
    }

    pub fn rewindow(&self, g: Grid2) -> Result<Self> {
        let r = |f: &VectorField2| rewindow(f, g);
        Ok(JetPair {
            pair: self.pair.rewindow(g)?,
            dv: [r(&self.dv[0])?, r(&self.dv[1])?],
            hv: [r(&self.hv[0])?, r(&self.hv[1])?, r(&self.hv[2])?],
            dw: [r(&self.dw[0])?, r(&self.dw[1])?],
        })
    }

    /// Convolves every carried field; derivatives commute with the kernel.
    pub fn mollify(&self, m: &Mollifier) -> Result<Self> {
        Ok(JetPair {
            pair: ImmersionPair::new(m.apply(&self.pair.v)?, m.apply(&self.pair.w)?)?,
            dv: [m.apply(&self.dv[0])?, m.apply(&self.dv[1])?],
            hv: [m.apply(&self.hv[0])?, m.apply(&self.hv[1])?, m.apply(&self.hv[2])?],
            dw: [m.apply(&self.dw[0])?, m.apply(&self.dw[1])?],
        })
    }

    /// Hessian of v^j as (d11, d12, d22).
    pub fn hessian_of(&self, j: usize) -> [ScalarField2; 3] {
        [self.hv[0].component(j), self.hv[1].component(j), self.hv[2].component(j)]
    }

    /// 1/2 (grad v)^T grad v + sym grad w from the carried derivatives.
    pub fn metric(&self) -> Result<SymMatrixField2> {
        let g = *self.grid();
        let k = self.k();
        let dv = &self.dv;
        let dw = &self.dw;
        let quad = |a: usize, b: usize, i: usize| (0..k).map(|j| dv[a].comp(j)[i] * dv[b].comp(j)[i]).sum::<f64>();
        let m = vec![
            map_valid(&g, |i| 0.5 * quad(0, 0, i) + dw[0].comp(0)[i]),
            map_valid(&g, |i| 0.5 * quad(0, 1, i) + 0.5 * (dw[1].comp(0)[i] + dw[0].comp(1)[i])),
            map_valid(&g, |i| 0.5 * quad(1, 1, i) + dw[1].comp(1)[i]),
        ];
        SymMatrixField2::from_parts(g, m)
    }

    pub fn defect(&self, a: &SymMatrixField2) -> Result<DefectField> {
        let d = sub(&rewindow(a, *self.grid())?, &self.metric()?)?;
        Ok(DefectField { min_eigenvalue: d.min_eigenvalue(), sup: sup(&d), d })
    }

    /// w += psi, with grad psi by finite differences.
    pub fn add_to_w(&mut self, psi: &VectorField2) -> Result<()> {
        let psi = rewindow(psi, *self.grid())?;
        let d = [derivative(&psi, 1, 0)?, derivative(&psi, 0, 1)?];
        for c in 0..2 {
            field_add(&mut self.pair.w, c, psi.comp(c));
            for (e, de) in d.iter().enumerate() {
                field_add(&mut self.dw[e], c, de.comp(c));
            }
        }
        Ok(())
    }

    /// w -= c (x - x_center).
    pub fn subtract_dilation(&mut self, c: f64) {
        let g = *self.grid();
        let xc = g.center();
        for comp in 0..2 {
            let d = map_valid(&g, |i| -c * (pos(&g, i)[comp] - xc[comp]));
            field_add(&mut self.pair.w, comp, &d);
            let s = map_valid(&g, |_| -c);
            field_add(&mut self.dw[comp], comp, &s);
        }
    }

    /// max over v, grad v, hess v.
    pub fn v_c2(&self) -> f64 {
        let mut m = sup(&self.pair.v);
        for f in self.dv.iter().chain(&self.hv) {
            m = m.max(sup(f));
        }
        m
    }

    /// sup of hess v.
    pub fn v_hessian_sup(&self) -> f64 {
        self.hv.iter().map(sup).fold(0.0, f64::max)
    }

    /// sup of hess w, differencing the carried gradient once.
    pub fn w_hessian_sup(&self) -> Result<f64> {
        let mut m: f64 = 0.0;
        for d in &self.dw {
            m = m.max(sup(&derivative(d, 1, 0)?)).max(sup(&derivative(d, 0, 1)?));
        }
        Ok(m)
    }

    pub fn w_c2(&self) -> Result<f64> {
        let mut m = sup(&self.pair.w);
        for d in &self.dw {
            m = m.max(sup(d));
        }
        Ok(m.max(self.w_hessian_sup()?))
    }

    /// max{||v||_2, ||w||_2, 1}
    pub fn c2_bound(&self) -> Result<f64> {
        Ok(self.v_c2().max(self.w_c2()?).max(1.0))
    }

    /// C^1 distances (v, w) to another jet on the common window.
    pub fn c1_distance(&self, o: &JetPair) -> Result<(f64, f64)> {
        let g = self.grid().common(o.grid())?;
        let gap = |a: &VectorField2, b: &VectorField2| -> Result<f64> { Ok(sup(&sub(&rewindow(a, g)?, &rewindow(b, g)?)?)) };
        let mut dv = gap(&self.pair.v, &o.pair.v)?;
        let mut dw = gap(&self.pair.w, &o.pair.w)?;
        for e in 0..2 {
            dv = dv.max(gap(&self.dv[e], &o.dv[e])?);
            dw = dw.max(gap(&self.dw[e], &o.dw[e])?);
        }
        Ok((dv, dw))
    }

    fn check(&self, a: &ScalarField2, lambda: f64) -> Result<(ScalarField2, Grid2)> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Precondition(format!("frequency {lambda} must be positive")));
        }
        let g = self.grid().common(a.grid())?;
        if g != *self.grid() {
            return Err(Error::GridMismatch("amplitude window is narrower than the pair".into()));
        }
        g.check_resolution(lambda)?;
        Ok((rewindow(a, g)?, g))
    }

    /// Adds sum_phases (a/lambda) f(lambda x_axis) to v^component and
    /// -(a/lambda) sum f grad v^component to w (old v), plus the optional
    /// companion (a^2/lambda) fbar(lambda x_axis) e_axis.
    fn apply(&self, a: &ScalarField2, lambda: f64, phases: &[Phase], companion: Option<usize>) -> Result<Self> {
        let (a, g) = self.check(a, lambda)?;
        let av = a.values();
        let da = [derivative(&a, 1, 0)?, derivative(&a, 0, 1)?];
        let ha = [derivative(&a, 2, 0)?, derivative(&a, 1, 1)?, derivative(&a, 0, 2)?];
        let (da, ha) = (da.map(|f| f.values().to_vec()), ha.map(|f| f.values().to_vec()));
        let prof = |ph: &Phase, i: usize| (ph.profile)(lambda * pos(&g, i)[ph.axis]);
        let delta = |c: usize, m: usize| if c == m { 1.0 } else { 0.0 };
        let mut out = self.clone();

        for ph in phases {
            let j = ph.component;
            field_add(&mut out.pair.v, j, &map_valid(&g, |i| av[i] / lambda * prof(ph, i)[0]));
            for c in 0..2 {
                let d = map_valid(&g, |i| {
                    let f = prof(ph, i);
                    da[c][i] / lambda * f[0] + av[i] * f[1] * delta(c, ph.axis)
                });
                field_add(&mut out.dv[c], j, &d);
            }
            for (e, &(c, d)) in SLOTS.iter().enumerate() {
                let h = map_valid(&g, |i| {
                    let f = prof(ph, i);
                    ha[e][i] / lambda * f[0]
                        + (da[c][i] * delta(d, ph.axis) + da[d][i] * delta(c, ph.axis)) * f[1]
                        + av[i] * lambda * f[2] * delta(c, ph.axis) * delta(d, ph.axis)
                });
                field_add(&mut out.hv[e], j, &h);
            }
            // w_c -= (a/lambda) f dc v^j, with the pre-step v
            let dvj = [self.dv[0].comp(j), self.dv[1].comp(j)];
            let slot = |c: usize, d: usize| if c + d == 0 { 0 } else if c + d == 1 { 1 } else { 2 };
            for c in 0..2 {
                let wdel = map_valid(&g, |i| -av[i] / lambda * prof(ph, i)[0] * dvj[c][i]);
                field_add(&mut out.pair.w, c, &wdel);
                for d in 0..2 {
                    let hcd = self.hv[slot(c, d)].comp(j);
                    let gd = map_valid(&g, |i| {
                        let f = prof(ph, i);
                        -(da[d][i] / lambda * f[0] * dvj[c][i]
                            + av[i] * f[1] * delta(d, ph.axis) * dvj[c][i]
                            + av[i] / lambda * f[0] * hcd[i])
                    });
                    field_add(&mut out.dw[d], c, &gd);
                }
            }
        }
        if let Some(m) = companion {
            let t = |i: usize| lambda * pos(&g, i)[m];
            field_add(&mut out.pair.w, m, &map_valid(&g, |i| av[i] * av[i] / lambda * corrugation_gamma_bar(t(i))));
            for d in 0..2 {
                let gd = map_valid(&g, |i| {
                    let ti = t(i);
                    2.0 * av[i] * da[d][i] / lambda * corrugation_gamma_bar(ti)
                        - av[i] * av[i] * (2.0 * ti).cos() * delta(d, m)
                });
                field_add(&mut out.dw[d], m, &gd);
            }
        }
        Ok(out)
    }

    /// Spiral step on the first four components.
    pub fn spiral_step(&self, a: &ScalarField2, lambda: f64) -> Result<Self> {
        if self.k() < 4 {
            return Err(Error::Codimension { k: self.k(), need: 4 });
        }
        if a.min() < -1e-12 {
            return Err(Error::Precondition(format!("spiral amplitude is negative ({:e})", a.min())));
        }
        let phases = [
            Phase { component: 0, axis: 0, profile: sin3 },
            Phase { component: 1, axis: 0, profile: cos3 },
            Phase { component: 2, axis: 1, profile: sin3 },
            Phase { component: 3, axis: 1, profile: cos3 },
        ];
        self.apply(a, lambda, &phases, None)
    }

    /// Corrugation along `axis` on the zero-based `component`.
    pub fn corrugation_step(&self, a: &ScalarField2, lambda: f64, axis: Axis, component: usize) -> Result<Self> {
        if component >= self.k() {
            return Err(Error::Precondition(format!("component {component} outside 0..{}", self.k())));
        }
        let ph = [Phase { component, axis: axis.index(), profile: gamma3 }];
        self.apply(a, lambda, &ph, Some(axis.index()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::steps::{corrugation_step, metric, spiral_step};

    fn setup(n: usize) -> (JetPair, ScalarField2) {
        let g = Grid2::new([0.0, 0.0], n, n, 1.0 / (n - 1) as f64, 16).unwrap();
        let v = VectorField2::from_fn(g, 4, |c, x, y| (0.3 + 0.1 * c as f64) * (x * x - x * y) + 0.2 * (2.0 * y).sin());
        let w = VectorField2::from_fn(g, 2, |c, x, y| 0.1 * (x + c as f64 * y).cos());
        let a = ScalarField2::from_fn(g, |x, y| 0.8 + 0.2 * (x - y).sin());
        (JetPair::from_pair(&ImmersionPair::new(v, w).unwrap()).unwrap(), a)
    }

    fn jet_gap(j: &JetPair) -> f64 {
        let fd = JetPair::from_pair(&j.pair).unwrap();
        let inner = j.grid().with_margin(8).unwrap();
        let r = |f: &VectorField2| rewindow(f, inner).unwrap();
        let mut m: f64 = 0.0;
        for e in 0..2 {
            m = m.max(sup(&sub(&r(&j.dv[e]), &r(&fd.dv[e])).unwrap()));
            m = m.max(sup(&sub(&r(&j.dw[e]), &r(&fd.dw[e])).unwrap()));
        }
        for e in 0..3 {
            m = m.max(sup(&sub(&r(&j.hv[e]), &r(&fd.hv[e])).unwrap()) / 16.0);
        }
        m
    }

    #[test]
    fn carried_derivatives_match_differences() {
        let (j, a) = setup(257);
        let mut gaps = vec![];
        for lambda in [8.0, 16.0] {
            let s = j.spiral_step(&a, lambda).unwrap();
            let c = s.corrugation_step(&a, 2.0 * lambda, Axis::X2, 1).unwrap();
            assert!(sup(&sub(&c.pair.v, &corrugation_step(&spiral_step(&j.pair, &a, lambda).unwrap(), &a, 2.0 * lambda, Axis::X2, 1).unwrap().v).unwrap()) < 1e-12);
            gaps.push(jet_gap(&c));
        }
        // pure finite-difference error: grows like lambda^4
        assert!(gaps[0] < 1e-4, "{gaps:?}");
        assert!(gaps[1] / gaps[0] > 8.0, "{gaps:?}");
    }

    #[test]
    fn jet_metric_obeys_step_identities_exactly() {
        let (j, a) = setup(129);
        let lambda = 24.0;
        let after = j.corrugation_step(&a, lambda, Axis::X1, 2).unwrap();
        let change = sub(&after.metric().unwrap(), &j.metric().unwrap()).unwrap();
        let hv = j.hessian_of(2);
        let e = crate::steps::corrugation_error_with(&hv, &a, lambda, Axis::X1).unwrap();
        let sq = crate::field::map_field(&a, |x| x * x);
        let main = SymMatrixField2::from_entries(&sq, &ScalarField2::zeros(*a.grid()), &ScalarField2::zeros(*a.grid())).unwrap();
        let r = sub(&sub(&change, &main).unwrap(), &e).unwrap();
        assert!(sup(&r) < 1e-12, "{}", sup(&r));

        let after = j.spiral_step(&a, lambda).unwrap();
        let change = sub(&after.metric().unwrap(), &j.metric().unwrap()).unwrap();
        let e = crate::steps::spiral_error_with(&j.hv, &a, lambda).unwrap();
        let half = crate::field::map_field(&a, |x| 0.5 * x * x);
        let main = SymMatrixField2::from_entries(&half, &ScalarField2::zeros(*a.grid()), &half).unwrap();
        let r = sub(&sub(&change, &main).unwrap(), &e).unwrap();
        assert!(sup(&r) < 1e-12, "{}", sup(&r));
    }

    #[test]
    fn fd_metric_agrees_for_smooth_pairs() {
        let (j, _) = setup(129);
        let d = sub(&j.metric().unwrap(), &metric(&j.pair).unwrap()).unwrap();
        assert!(sup(&d) < 1e-14);
    }

    #[test]
    fn dilation_and_corrector() {
        let (mut j, _) = setup(65);
        let before = j.metric().unwrap();
        j.subtract_dilation(0.5);
        let psi = VectorField2::from_fn(*j.grid(), 2, |c, x, y| 0.01 * (x * y + c as f64));
        j.add_to_w(&psi).unwrap();
        let fd = JetPair::from_pair(&j.pair).unwrap();
        assert!(sup(&sub(&j.metric().unwrap(), &fd.metric().unwrap()).unwrap()) < 1e-12);
        let m = sub(&before, &j.metric().unwrap()).unwrap();
        assert!((m.m11().max() - 0.5).abs() < 0.02);
    }
}
