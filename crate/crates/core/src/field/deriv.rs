use crate::error::{Error, Result};
use crate::field::types::{map_valid, Field};
use crate::field::{ScalarField2, SymMatrixField2, VectorField2};

/// Finite-difference weights for the `m`-th derivative at `x0` from nodes `xs`
/// (Fornberg's recursion).
pub fn fornberg(x0: f64, xs: &[f64], m: usize) -> Vec<f64> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c.swap_remove(m)
}

/// Fourth-order 1D operator for the `m`-th derivative on `n` nodes: centred
/// in the interior, shifted one-sided windows near the ends.
#[derive(Clone, Debug)]
pub struct Stencil1D {
    pub m: usize,
    pub n: usize,
    pub half: usize,
    pub centre: Vec<f64>,
    /// (first node, weights) for rows 0..half and n-half..n
    pub left: Vec<(usize, Vec<f64>)>,
    pub right: Vec<(usize, Vec<f64>)>,
}

impl Stencil1D {
    pub fn new(m: usize, n: usize, h: f64) -> Result<Self> {
        let half = (m + 1) / 2 + 1;
        let width = m + 4;
        let need = (2 * m + 1).max(width).max(2 * half + 1);
        if n < need {
            return Err(Error::GridTooSmall { axis: 0, need, have: n });
        }
        let scale = h.powi(m as i32);
        // Derivative weights annihilate constants; force the row sum to zero
        // so rounding in the recursion does not leak into d^m(const).
        let zero_sum = |mut w: Vec<f64>| {
            let k = (0..w.len()).max_by(|&a, &b| w[a].abs().total_cmp(&w[b].abs())).unwrap();
            let rest: f64 = w.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, x)| x).sum();
            w[k] = -rest;
            w
        };
        let offs: Vec<f64> = (-(half as i64)..=half as i64).map(|o| o as f64).collect();
        let centre = zero_sum(fornberg(0.0, &offs, m)).into_iter().map(|w| w / scale).collect();
        let side = |i: usize, start: usize| {
            let xs: Vec<f64> = (start..start + width).map(|k| k as f64).collect();
            let w = zero_sum(fornberg(i as f64, &xs, m)).into_iter().map(|w| w / scale).collect();
            (start, w)
        };
        let left = (0..half).map(|i| side(i, 0)).collect();
        let right = (n - half..n).map(|i| side(i, n - width)).collect();
        Ok(Stencil1D { m, n, half, centre, left, right })
    }

    /// Apply along a contiguous line.
    pub fn apply_line(&self, src: &[f64], dst: &mut [f64]) {
        let n = self.n;
        let p = self.half;
        for (i, (s, w)) in self.left.iter().enumerate() {
            dst[i] = dot(&src[*s..*s + w.len()], w);
        }
        for i in p..n - p {
            dst[i] = dot(&src[i - p..=i + p], &self.centre);
        }
        for (r, (s, w)) in self.right.iter().enumerate() {
            dst[n - p + r] = dot(&src[*s..*s + w.len()], w);
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn apply_axis1(grid: &crate::field::Grid2, st: &Stencil1D, src: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    let r1 = grid.valid1();
    for j in grid.valid2() {
        let row = j * grid.n1();
        let (a, b) = (row + r1.start, row + r1.end);
        st.apply_line(&src[a..b], &mut out[a..b]);
    }
    out
}

fn apply_axis2(grid: &crate::field::Grid2, st: &Stencil1D, src: &[f64]) -> Vec<f64> {
    let n1 = grid.n1();
    let r1 = grid.valid1();
    let r2 = grid.valid2();
    let mut out = vec![0.0; src.len()];
    let p = st.half;
    let nv = st.n;
    let emit = |jl: usize, start: usize, w: &[f64], out: &mut [f64]| {
        let drow = (r2.start + jl) * n1;
        for (q, wq) in w.iter().enumerate() {
            let srow = (r2.start + start + q) * n1;
            for i in r1.clone() {
                out[drow + i] += wq * src[srow + i];
            }
        }
    };
    for (jl, (s, w)) in st.left.iter().enumerate() {
        emit(jl, *s, w, &mut out);
    }
    for jl in p..nv - p {
        emit(jl, jl - p, &st.centre, &mut out);
    }
    for (r, (s, w)) in st.right.iter().enumerate() {
        emit(nv - p + r, *s, w, &mut out);
    }
    out
}

/// Fourth-order finite-difference derivative d1^t d2^s on the valid window.
pub fn derivative<F: Field>(f: &F, t: usize, s: usize) -> Result<F> {
    if t + s > 4 {
        return Err(Error::UnsupportedOrder { t, s });
    }
    let g = *f.grid();
    let dims = g.valid_dims();
    let st1 = if t > 0 {
        Some(Stencil1D::new(t, dims[0], g.h()).map_err(|e| axis_err(e, 1))?)
    } else {
        None
    };
    let st2 = if s > 0 {
        Some(Stencil1D::new(s, dims[1], g.h()).map_err(|e| axis_err(e, 2))?)
    } else {
        None
    };
    let comps = (0..f.ncomp())
        .map(|c| {
            let mut v = f.comp(c).to_vec();
            if let Some(st) = &st1 {
                v = apply_axis1(&g, st, &v);
            }
            if let Some(st) = &st2 {
                v = apply_axis2(&g, st, &v);
            }
            v
        })
        .collect();
    F::from_parts(g, comps)
}

fn axis_err(e: Error, axis: usize) -> Error {
    match e {
        Error::GridTooSmall { need, have, .. } => Error::GridTooSmall { axis, need, have },
        e => e,
    }
}

/// sym(grad w) for a two-component field.
pub fn sym_grad(w: &VectorField2) -> Result<SymMatrixField2> {
    if w.ncomp() != 2 {
        return Err(Error::ComponentCount { expected: 2, got: w.ncomp() });
    }
    let d1 = derivative(w, 1, 0)?;
    let d2 = derivative(w, 0, 1)?;
    let g = *w.grid();
    let m11 = map_valid(&g, |k| d1.comp(0)[k]);
    let m12 = map_valid(&g, |k| 0.5 * (d2.comp(0)[k] + d1.comp(1)[k]));
    let m22 = map_valid(&g, |k| d2.comp(1)[k]);
    SymMatrixField2::from_parts(g, vec![m11, m12, m22])
}

/// Gradient of a scalar field as a two-component field.
pub fn gradient(f: &ScalarField2) -> Result<VectorField2> {
    let d1 = derivative(f, 1, 0)?;
    let d2 = derivative(f, 0, 1)?;
    VectorField2::from_scalars(&[&d1, &d2])
}

/// Hessian of a scalar field.
pub fn hessian(f: &ScalarField2) -> Result<SymMatrixField2> {
    let d11 = derivative(f, 2, 0)?;
    let d12 = derivative(f, 1, 1)?;
    let d22 = derivative(f, 0, 2)?;
    SymMatrixField2::from_entries(&d11, &d12, &d22)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Grid2, ScalarField2};

    fn unit(n: usize) -> Grid2 {
        Grid2::new([0.0, 0.0], n, n, 1.0 / (n - 1) as f64, 0).unwrap()
    }

    fn sup_err(a: &ScalarField2, f: impl Fn(f64, f64) -> f64) -> f64 {
        let g = *a.grid();
        let mut e: f64 = 0.0;
        for j in g.valid2() {
            for i in g.valid1() {
                e = e.max((a.at(i, j) - f(g.x1(i), g.x2(j))).abs());
            }
        }
        e
    }

    #[test]
    fn fornberg_centred_first_derivative() {
        let w = fornberg(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0], 1);
        let want = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(want) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_has_zero_derivative() {
        let f = ScalarField2::constant(unit(32), 3.5);
        for (t, s) in [(1, 0), (0, 1), (2, 2), (4, 0), (1, 3)] {
            let d = derivative(&f, t, s).unwrap();
            assert!(sup_err(&d, |_, _| 0.0) < 1e-7, "({t},{s})");
        }
    }

    #[test]
    fn quadratic_exact() {
        let g = unit(129);
        let f = ScalarField2::from_fn(g, |x, _| x * x);
        let d = derivative(&f, 2, 0).unwrap();
        assert!(sup_err(&d, |_, _| 2.0) < 1e-10);
    }

    #[test]
    fn mixed_derivative_fourth_order() {
        let exact = |x: f64, y: f64| -6.0 * (3.0 * x).cos() * (2.0 * y).sin();
        let mut errs = vec![];
        for n in [65, 129, 257] {
            let g = unit(n);
            let f = ScalarField2::from_fn(g, |x, y| (3.0 * x).sin() * (2.0 * y).cos());
            let d = derivative(&f, 1, 1).unwrap();
            errs.push(sup_err(&d, exact) / 6.0);
        }
        let slope1 = (errs[0] / errs[1]).log2();
        let slope2 = (errs[1] / errs[2]).log2();
        let fitted = 0.5 * (slope1 + slope2);
        assert!((fitted - 4.0).abs() <= 0.3, "fitted order {fitted} from {errs:?}");
    }

    #[test]
    fn rejects_bad_orders_and_grids() {
        let f = ScalarField2::constant(unit(16), 1.0);
        assert!(matches!(derivative(&f, 3, 2), Err(Error::UnsupportedOrder { .. })));
        let g = Grid2::new([0.0, 0.0], 16, 16, 0.1, 0).unwrap().with_margin(0).unwrap();
        let small = ScalarField2::constant(
            Grid2::new([0.0, 0.0], 16, 16, 0.1, 6).unwrap().with_margin(0).unwrap(),
            1.0,
        );
        assert_eq!(g.valid_dims(), [16, 16]);
        assert!(matches!(derivative(&small, 4, 0), Err(Error::GridTooSmall { axis: 1, .. })));
    }

    #[test]
    fn sym_grad_examples() {
        let g = unit(33);
        let id = VectorField2::identity(g);
        let s = sym_grad(&id).unwrap();
        assert!(sup_err(&s.m11(), |_, _| 1.0) < 1e-12);
        assert!(sup_err(&s.m12(), |_, _| 0.0) < 1e-12);
        assert!(sup_err(&s.m22(), |_, _| 1.0) < 1e-12);
        let rot = VectorField2::from_fn(g, 2, |c, x, y| if c == 0 { y } else { -x });
        let s = sym_grad(&rot).unwrap();
        for e in [s.m11(), s.m12(), s.m22()] {
            assert!(sup_err(&e, |_, _| 0.0) < 1e-12);
        }
        let w = VectorField2::from_fn(g, 2, |c, x, y| if c == 0 { x * y } else { 0.0 });
        let s = sym_grad(&w).unwrap();
        assert!(sup_err(&s.m11(), |_, y| y) < 1e-12);
        assert!(sup_err(&s.m12(), |x, _| 0.5 * x) < 1e-12);
        assert!(sup_err(&s.m22(), |_, _| 0.0) < 1e-12);
        assert!(sym_grad(&VectorField2::zeros(g, 3)).is_err());
    }
}
