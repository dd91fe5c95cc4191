use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::deriv::derivative;
use crate::field::types::{clear_outside, Field};
use crate::field::Grid2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub sup: f64,
    /// cm[j] = max |d_I f| over |I| = j
    pub cm: Vec<f64>,
    pub holder_gamma: f64,
    pub holder_seminorm: f64,
}

impl NormReport {
    /// max_j cm[j], the C^m norm.
    pub fn cm_norm(&self) -> f64 {
        self.cm.iter().cloned().fold(0.0, f64::max)
    }
    /// sup + seminorm, the C^{0,gamma} norm.
    pub fn holder_norm(&self) -> f64 {
        self.sup + self.holder_seminorm
    }
}

/// Minimum pair count per separation scale.
pub const PAIRS_PER_SCALE: usize = 4096;
const ANCHOR_DIRECTIONS: usize = 64;
// additive recurrence constants from the plastic number (R3 sequence)
const R3: [f64; 3] = [0.819_172_513_396_164_4, 0.671_043_606_703_789_2, 0.549_700_477_901_970_9];

/// Largest absolute sample over the valid window and all components.
pub fn sup<F: Field>(f: &F) -> f64 {
    let g = f.grid();
    let mut m: f64 = 0.0;
    for c in 0..f.ncomp() {
        let v = f.comp(c);
        for j in g.valid2() {
            let row = &v[j * g.n1() + g.valid1().start..j * g.n1() + g.valid1().end];
            for x in row {
                m = m.max(x.abs());
            }
        }
    }
    m
}

/// max over |I| = j of sup |d_I f|, for j = 0..=m.
pub fn cm_norms<F: Field>(f: &F, m: usize) -> Result<Vec<f64>> {
    let mut cm = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let mut best: f64 = 0.0;
        for t in 0..=j {
            let d = if j == 0 { f.clone() } else { derivative(f, t, j - t)? };
            best = best.max(sup(&d));
        }
        cm.push(best);
    }
    Ok(cm)
}

/// ||f||_m = max_{j<=m} cm[j].
pub fn cm_norm<F: Field>(f: &F, m: usize) -> Result<f64> {
    Ok(cm_norms(f, m)?.into_iter().fold(0.0, f64::max))
}

pub fn norms<F: Field>(f: &F, m: usize, gamma: f64) -> Result<NormReport> {
    if m > 3 {
        return Err(Error::UnsupportedOrder { t: m, s: 0 });
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Precondition(format!("gamma = {gamma} outside (0,1]")));
    }
    let cm = cm_norms(f, m)?;
    Ok(NormReport { sup: cm[0], cm, holder_gamma: gamma, holder_seminorm: holder_seminorm(f, gamma) })
}

/// ||f||_{0,gamma} = sup + seminorm.
pub fn holder_norm<F: Field>(f: &F, gamma: f64) -> f64 {
    sup(f) + holder_seminorm(f, gamma)
}

fn frac(x: f64) -> f64 {
    x - x.floor()
}

/// Estimated Holder seminorm: max of |f(x)-f(y)|/|x-y|^gamma over node pairs at
/// dyadic separations h, 2h, ... up to a quarter of the valid extent. Pairs are
/// drawn from a low-discrepancy sequence, plus pairs anchored at the extremal
/// nodes of each component.
pub fn holder_seminorm<F: Field>(f: &F, gamma: f64) -> f64 {
    let g = *f.grid();
    let dims = g.valid_dims();
    let ve = g.valid_extent();
    let lim = 0.25 * ve[0].min(ve[1]);
    let mut scales = vec![];
    let mut s = g.h();
    while s <= lim * (1.0 + 1e-12) {
        scales.push(s);
        s *= 2.0;
    }
    if scales.is_empty() {
        scales.push(g.h());
    }
    let (lo1, lo2) = (g.valid1().start as i64, g.valid2().start as i64);
    let (d1n, d2n) = (dims[0] as i64, dims[1] as i64);
    let mut best: f64 = 0.0;
    for c in 0..f.ncomp() {
        let v = f.comp(c);
        let at = |i: i64, j: i64| v[(j as usize) * g.n1() + i as usize];
        let mut ratio = |a: (i64, i64), b: (i64, i64)| {
            let (di, dj) = ((b.0 - a.0) as f64, (b.1 - a.1) as f64);
            let dist = g.h() * (di * di + dj * dj).sqrt();
            if dist > 0.0 {
                let r = (at(a.0, a.1) - at(b.0, b.1)).abs() / dist.powf(gamma);
                best = best.max(r);
            }
        };
        let (amin, amax) = extremal_nodes(&g, v);
        for &s in &scales {
            let rad = s / g.h();
            for k in 0..PAIRS_PER_SCALE {
                let kf = k as f64;
                let th = 2.0 * std::f64::consts::PI * frac(kf * R3[2]);
                let o1 = (rad * th.cos()).round() as i64;
                let o2 = (rad * th.sin()).round() as i64;
                if o1.abs() >= d1n || o2.abs() >= d2n || (o1 == 0 && o2 == 0) {
                    continue;
                }
                let u = frac(0.5 + kf * R3[0]);
                let w = frac(0.5 + kf * R3[1]);
                let i = lo1 + (-o1).max(0) + (u * (d1n - o1.abs()) as f64) as i64;
                let j = lo2 + (-o2).max(0) + (w * (d2n - o2.abs()) as f64) as i64;
                ratio((i, j), (i + o1, j + o2));
            }
            for a in [amin, amax] {
                for q in 0..ANCHOR_DIRECTIONS {
                    let th = 2.0 * std::f64::consts::PI * q as f64 / ANCHOR_DIRECTIONS as f64;
                    let b = (a.0 + (rad * th.cos()).round() as i64, a.1 + (rad * th.sin()).round() as i64);
                    if b.0 >= lo1 && b.0 < lo1 + d1n && b.1 >= lo2 && b.1 < lo2 + d2n {
                        ratio(a, b);
                    }
                }
            }
        }
    }
    best
}

fn extremal_nodes(g: &Grid2, v: &[f64]) -> ((i64, i64), (i64, i64)) {
    let mut lo = (f64::INFINITY, (0, 0));
    let mut hi = (f64::NEG_INFINITY, (0, 0));
    for j in g.valid2() {
        for i in g.valid1() {
            let x = v[g.idx(i, j)];
            if x < lo.0 {
                lo = (x, (i as i64, j as i64));
            }
            if x > hi.0 {
                hi = (x, (i as i64, j as i64));
            }
        }
    }
    (lo.1, hi.1)
}

/// Keep the values on a smaller collar; the core stays fixed.
pub fn restrict<F: Field>(f: &F, new_margin: f64) -> Result<F> {
    let nodes = f.grid().nodes_exact(new_margin)?;
    restrict_nodes(f, nodes)
}

pub fn restrict_nodes<F: Field>(f: &F, margin: usize) -> Result<F> {
    let g = f.grid().with_margin(margin)?;
    let mut out = f.clone();
    out.set_grid_unchecked(g);
    for c in 0..out.ncomp() {
        clear_outside(&g, out.comp_mut(c));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ScalarField2, SymMatrixField2};

    fn unit(n: usize, margin: usize) -> Grid2 {
        Grid2::new([0.0, 0.0], n, n, 1.0 / (n - 1) as f64, margin).unwrap()
    }

    #[test]
    fn constant_field_norms() {
        let f = ScalarField2::constant(unit(32, 0), 5.0);
        let r = norms(&f, 3, 0.5).unwrap();
        assert_eq!(r.sup, 5.0);
        assert!(r.cm[1..].iter().all(|&c| c < 1e-8));
        assert_eq!(r.holder_seminorm, 0.0);
    }

    #[test]
    fn linear_lipschitz_constant() {
        let f = ScalarField2::from_fn(unit(64, 0), |x, _| x);
        let s = holder_seminorm(&f, 1.0);
        assert!((s - 1.0).abs() < 1e-6, "{s}");
    }

    #[test]
    fn square_root_cusp() {
        let g = unit(64, 0);
        let x0 = (g.x1(21), g.x2(40));
        let f = ScalarField2::from_fn(g, |x, y| ((x - x0.0).powi(2) + (y - x0.1).powi(2)).sqrt().sqrt());
        let s = holder_seminorm(&f, 0.5);
        assert!((0.9..=1.1).contains(&s), "{s}");
    }

    #[test]
    fn sup_matches_cm0_and_restrict_is_monotone() {
        let g = unit(48, 8);
        let d = SymMatrixField2::from_fn(g, |x, y| [(4.0 * x).sin(), x * y, (3.0 * y).cos()]);
        let a = norms(&d, 2, 0.3).unwrap();
        let r = restrict_nodes(&d, 3).unwrap();
        let b = norms(&r, 2, 0.3).unwrap();
        assert!((a.sup - a.cm[0]).abs() < 1e-15);
        assert!(b.sup <= a.sup);
    }

    #[test]
    fn restrict_examples() {
        let g = unit(40, 6);
        let f = ScalarField2::from_fn(g, |x, y| x + 2.0 * y);
        assert_eq!(restrict(&f, g.margin_len()).unwrap(), f);
        let a = restrict_nodes(&restrict_nodes(&f, 2).unwrap(), 1).unwrap();
        assert_eq!(a, restrict_nodes(&f, 1).unwrap());
        let core = restrict(&f, 0.0).unwrap();
        assert_eq!(core.grid().valid1(), g.core1());
        assert!(restrict_nodes(&f, 7).is_err());
        assert!(restrict(&f, 0.5 * g.h()).is_err());
    }
}
