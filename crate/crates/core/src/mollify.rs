//! Convolution with the standard bump at scale l.

use crate::error::{Error, Result};
use crate::fft::Conv2;
use crate::field::{map_valid, zip_fields, Field, Grid2, ScalarField2};

/// Kernel radius (in nodes) up to which convolution is summed directly.
pub const DIRECT_RADIUS: usize = 16;

/// exp(-1/(1-r^2)) on the unit ball, zero outside.
pub fn profile(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r * r)).exp()
    }
}

/// Sampled bump at scale `l` with weights renormalised to unit discrete mass.
#[derive(Clone, Debug)]
pub struct Mollifier {
    pub l: f64,
    pub h: f64,
    /// half-width of the weight stencil in nodes
    pub radius: usize,
    pub weights: Vec<f64>,
    pub discrete_mass: f64,
}

impl Mollifier {
    pub fn new(l: f64, h: f64) -> Result<Self> {
        if !(l >= 2.0 * h * (1.0 - 1e-12)) {
            return Err(Error::UnderResolvedKernel { l, two_h: 2.0 * h });
        }
        let radius = (l / h - 1e-9).ceil() as usize;
        let w = 2 * radius + 1;
        let mut weights = Vec::with_capacity(w * w);
        for b in 0..w {
            for a in 0..w {
                let (o1, o2) = (a as f64 - radius as f64, b as f64 - radius as f64);
                weights.push(profile(h * (o1 * o1 + o2 * o2).sqrt() / l));
            }
        }
        let z: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|x| *x /= z);
        let discrete_mass = weights.iter().sum();
        Ok(Mollifier { l, h, radius, weights, discrete_mass })
    }

    /// Weight at node offset (o1, o2).
    pub fn weight(&self, o1: i64, o2: i64) -> f64 {
        let r = self.radius as i64;
        if o1.abs() > r || o2.abs() > r {
            return 0.0;
        }
        self.weights[((o2 + r) * (2 * r + 1) + o1 + r) as usize]
    }

    /// Output grid of a convolution: the collar shrinks by the kernel radius.
    pub fn output_grid(&self, g: &Grid2) -> Result<Grid2> {
        if (g.h() - self.h).abs() > 1e-12 * self.h {
            return Err(Error::GridMismatch("mollifier spacing differs from grid".into()));
        }
        if g.margin() < self.radius {
            return Err(Error::InsufficientCollar { need: self.radius, have: g.margin() });
        }
        g.with_margin(g.margin() - self.radius)
    }

    pub fn apply<F: Field>(&self, f: &F) -> Result<F> {
        let g = *f.grid();
        let out = self.output_grid(&g)?;
        let comps = if self.radius <= DIRECT_RADIUS {
            (0..f.ncomp()).map(|c| self.direct(&g, &out, f.comp(c))).collect()
        } else {
            self.via_fft(&g, &out, f)
        };
        F::from_parts(out, comps)
    }

    pub fn apply_direct<F: Field>(&self, f: &F) -> Result<F> {
        let g = *f.grid();
        let out = self.output_grid(&g)?;
        F::from_parts(out, (0..f.ncomp()).map(|c| self.direct(&g, &out, f.comp(c))).collect())
    }

    pub fn apply_fft<F: Field>(&self, f: &F) -> Result<F> {
        let g = *f.grid();
        let out = self.output_grid(&g)?;
        let comps = self.via_fft(&g, &out, f);
        F::from_parts(out, comps)
    }

    fn direct(&self, g: &Grid2, out: &Grid2, v: &[f64]) -> Vec<f64> {
        let r = self.radius;
        let w = 2 * r + 1;
        let n1 = g.n1();
        map_valid(out, |k| {
            let (i, j) = (k % n1, k / n1);
            let mut s = 0.0;
            for b in 0..w {
                let row = (j + r - b) * n1;
                let wr = &self.weights[b * w..(b + 1) * w];
                for (a, wa) in wr.iter().enumerate() {
                    s += wa * v[row + i + r - a];
                }
            }
            s
        })
    }

    fn via_fft<F: Field>(&self, g: &Grid2, out: &Grid2, f: &F) -> Vec<Vec<f64>> {
        let [d1, d2] = g.valid_dims();
        let conv = Conv2::new(d1, d2, &self.weights, self.radius, self.radius);
        let (s1, s2) = (g.valid1().start, g.valid2().start);
        let pack = |v: &[f64]| {
            let mut p = Vec::with_capacity(d1 * d2);
            for j in g.valid2() {
                p.extend_from_slice(&v[j * g.n1() + s1..j * g.n1() + s1 + d1]);
            }
            p
        };
        let unpack = |p: &[f64]| {
            map_valid(out, |k| {
                let (i, j) = (k % g.n1(), k / g.n1());
                p[(j - s2) * d1 + i - s1]
            })
        };
        let mut comps = Vec::with_capacity(f.ncomp());
        let mut c = 0;
        while c < f.ncomp() {
            if c + 1 < f.ncomp() {
                let (a, b) = conv.apply_pair(&pack(f.comp(c)), &pack(f.comp(c + 1)));
                comps.push(unpack(&a));
                comps.push(unpack(&b));
                c += 2;
            } else {
                comps.push(unpack(&conv.apply(&pack(f.comp(c)))));
                c += 1;
            }
        }
        comps
    }
}

/// f * phi_l on a collar narrowed by l.
pub fn mollify<F: Field>(f: &F, l: f64) -> Result<F> {
    Mollifier::new(l, f.grid().h())?.apply(f)
}

/// (fg) * phi_l - (f * phi_l)(g * phi_l).
pub fn commutator(f: &ScalarField2, g: &ScalarField2, l: f64) -> Result<ScalarField2> {
    let m = Mollifier::new(l, f.grid().h())?;
    let fg = f.mul(g)?;
    let a = m.apply(&fg)?;
    let b = m.apply(f)?.mul(&m.apply(g)?)?;
    zip_fields(&a, &b, |x, y| x - y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{cm_norm, sup, sub, VectorField2};

    fn grid(n: usize, margin: usize) -> Grid2 {
        Grid2::new([0.0, 0.0], n, n, 1.0 / (n - 1) as f64, margin).unwrap()
    }

    #[test]
    fn reproduces_constants_and_linear_maps() {
        let g = grid(96, 12);
        let c = ScalarField2::constant(g, 3.25);
        let m = mollify(&c, 8.0 * g.h()).unwrap();
        assert_eq!(m.grid().margin(), 4);
        assert!(sub(&m, &ScalarField2::constant(*m.grid(), 3.25)).map(|d| sup(&d)).unwrap() < 1e-14);
        let x = ScalarField2::from_fn(g, |x, _| x);
        let mx = mollify(&x, 8.0 * g.h()).unwrap();
        let ex = ScalarField2::from_fn(*mx.grid(), |x, _| x);
        assert!(sup(&sub(&mx, &ex).unwrap()) < 1e-12);
    }

    #[test]
    fn kernel_mass_and_edge() {
        let k = Mollifier::new(0.05, 0.01).unwrap();
        assert!((k.discrete_mass - 1.0).abs() < 1e-14);
        assert_eq!(k.radius, 5);
        assert_eq!(k.weight(5, 0), 0.0);
        assert!(profile(1.0 - 1e-3) < 1e-12);
        assert!(Mollifier::new(0.015, 0.01).is_err());
    }

    #[test]
    fn collar_errors() {
        let g = grid(64, 3);
        let f = ScalarField2::constant(g, 1.0);
        assert!(matches!(mollify(&f, 4.0 * g.h()), Err(Error::InsufficientCollar { .. })));
        assert!(matches!(mollify(&f, g.h()), Err(Error::UnderResolvedKernel { .. })));
    }

    #[test]
    fn direct_and_fft_paths_agree() {
        let g = grid(80, 20);
        let f = VectorField2::from_fn(g, 3, |c, x, y| ((c + 2) as f64 * x).sin() * (5.0 * y * y).cos());
        for r in [6, 18] {
            let m = Mollifier::new(r as f64 * g.h(), g.h()).unwrap();
            let a = m.apply_direct(&f).unwrap();
            let b = m.apply_fft(&f).unwrap();
            assert!(sup(&sub(&a, &b).unwrap()) < 1e-10);
        }
    }

    #[test]
    fn second_moment_of_commutator() {
        let g = grid(101, 12);
        let l = 10.0 * g.h();
        let x = ScalarField2::from_fn(g, |x, _| x);
        let c = commutator(&x, &x, l).unwrap();
        let k = Mollifier::new(l, g.h()).unwrap();
        let r = k.radius as i64;
        let mut m2 = 0.0;
        for o2 in -r..=r {
            for o1 in -r..=r {
                m2 += k.weight(o1, o2) * (o1 as f64 * g.h()).powi(2);
            }
        }
        let gc = *c.grid();
        for j in gc.valid2() {
            for i in gc.valid1() {
                assert!((c.at(i, j) - m2).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn smoothing_lowers_c2_norm() {
        let g = grid(96, 24);
        let f = ScalarField2::from_fn(g, |x, y| (9.0 * x).sin() + (7.0 * y).cos() * x);
        let a = mollify(&f, 0.06).unwrap();
        let b = mollify(&a, 0.06).unwrap();
        assert!(cm_norm(&b, 2).unwrap() < cm_norm(&a, 2).unwrap());
    }
}
