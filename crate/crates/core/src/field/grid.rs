use serde::{Deserialize, Serialize};
use std::ops::Range;

use crate::error::{Error, Result};

/// Uniform rectangular sampling of a thickened planar domain.
///
/// The node array is fixed for the lifetime of a run. Only the valid window
/// changes: `inset` nodes are dropped on every side of the array, and the
/// valid window is the core plus a collar of `margin` nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2 {
    origin: [f64; 2],
    n1: usize,
    n2: usize,
    h: f64,
    inset: usize,
    margin: usize,
}

pub const MIN_NODES: usize = 16;

impl Grid2 {
    pub fn new(origin: [f64; 2], n1: usize, n2: usize, h: f64, margin: usize) -> Result<Self> {
        let g = Grid2 { origin, n1, n2, h, inset: 0, margin };
        g.check()?;
        Ok(g)
    }

    /// Grid whose core is centred at `center` with size close to `core`,
    /// surrounded by a collar of physical width `margin_len`. The spacing is
    /// fixed by `n1`; the collar is rounded to whole nodes.
    pub fn covering(center: [f64; 2], core: [f64; 2], margin_len: f64, n1: usize) -> Result<Self> {
        if n1 < MIN_NODES || core[0] <= 0.0 || core[1] <= 0.0 || margin_len < 0.0 {
            return Err(Error::InvalidGrid("bad covering request".into()));
        }
        let h = (core[0] + 2.0 * margin_len) / (n1 - 1) as f64;
        let m = (margin_len / h).round() as usize;
        let n2 = ((core[1] + 2.0 * margin_len) / h).round() as usize + 1;
        let origin = [
            center[0] - 0.5 * (n1 - 1) as f64 * h,
            center[1] - 0.5 * (n2 - 1) as f64 * h,
        ];
        Grid2::new(origin, n1, n2, h, m)
    }

    fn check(&self) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::InvalidGrid(format!("spacing {}", self.h)));
        }
        if self.n1 < MIN_NODES || self.n2 < MIN_NODES {
            return Err(Error::InvalidGrid(format!(
                "need at least {MIN_NODES} nodes per axis, got {}x{}",
                self.n1, self.n2
            )));
        }
        let c = self.inset + self.margin;
        if 2 * c >= self.n1 || 2 * c >= self.n2 {
            return Err(Error::InvalidGrid("core domain is empty".into()));
        }
        Ok(())
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }
    pub fn n1(&self) -> usize {
        self.n1
    }
    pub fn n2(&self) -> usize {
        self.n2
    }
    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn inset(&self) -> usize {
        self.inset
    }
    /// Collar width in nodes.
    pub fn margin(&self) -> usize {
        self.margin
    }
    /// Collar width in length units.
    pub fn margin_len(&self) -> f64 {
        self.margin as f64 * self.h
    }
    /// Nodes between the array edge and the core.
    pub fn core_offset(&self) -> usize {
        self.inset + self.margin
    }

    pub fn x1(&self, i: usize) -> f64 {
        self.origin[0] + i as f64 * self.h
    }
    pub fn x2(&self, j: usize) -> f64 {
        self.origin[1] + j as f64 * self.h
    }
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.n1 + i
    }

    pub fn valid1(&self) -> Range<usize> {
        self.inset..self.n1 - self.inset
    }
    pub fn valid2(&self) -> Range<usize> {
        self.inset..self.n2 - self.inset
    }
    pub fn valid_dims(&self) -> [usize; 2] {
        [self.n1 - 2 * self.inset, self.n2 - 2 * self.inset]
    }
    pub fn core1(&self) -> Range<usize> {
        let c = self.core_offset();
        c..self.n1 - c
    }
    pub fn core2(&self) -> Range<usize> {
        let c = self.core_offset();
        c..self.n2 - c
    }
    /// Physical side lengths of the whole node array.
    pub fn extent(&self) -> [f64; 2] {
        [(self.n1 - 1) as f64 * self.h, (self.n2 - 1) as f64 * self.h]
    }
    pub fn valid_extent(&self) -> [f64; 2] {
        let d = self.valid_dims();
        [(d[0] - 1) as f64 * self.h, (d[1] - 1) as f64 * self.h]
    }
    pub fn center(&self) -> [f64; 2] {
        let e = self.extent();
        [self.origin[0] + 0.5 * e[0], self.origin[1] + 0.5 * e[1]]
    }
    /// Lower-left corner of the valid window.
    pub fn valid_origin(&self) -> [f64; 2] {
        [self.x1(self.inset), self.x2(self.inset)]
    }

    pub fn in_valid(&self, i: usize, j: usize) -> bool {
        self.valid1().contains(&i) && self.valid2().contains(&j)
    }

    /// Same node array and same core.
    pub fn same_layout(&self, o: &Grid2) -> bool {
        self.n1 == o.n1
            && self.n2 == o.n2
            && self.h == o.h
            && self.origin == o.origin
            && self.core_offset() == o.core_offset()
    }

    /// The smaller of two valid windows on a shared layout.
    pub fn common(&self, o: &Grid2) -> Result<Grid2> {
        if !self.same_layout(o) {
            return Err(Error::GridMismatch(format!("{self:?} vs {o:?}")));
        }
        Ok(if self.inset >= o.inset { *self } else { *o })
    }

    /// Shrink the collar to `margin` nodes, keeping the core fixed.
    pub fn with_margin(&self, margin: usize) -> Result<Grid2> {
        if margin > self.margin {
            return Err(Error::MarginGrowth { current: self.margin, requested: margin });
        }
        Ok(Grid2 { inset: self.inset + self.margin - margin, margin, ..*self })
    }

    /// Widen the valid window to the whole array (for fields that are
    /// naturally defined everywhere, e.g. compactly supported data).
    pub fn full_window(&self) -> Grid2 {
        Grid2 { inset: 0, margin: self.inset + self.margin, ..*self }
    }

    /// Convert a physical length to whole nodes, requiring an exact multiple.
    pub fn nodes_exact(&self, len: f64) -> Result<usize> {
        let q = len / self.h;
        let r = q.round();
        if len < 0.0 || (q - r).abs() > 1e-6 {
            return Err(Error::MarginNotMultiple(len));
        }
        Ok(r as usize)
    }

    /// Whole nodes needed to cover a physical length.
    pub fn nodes_ceil(&self, len: f64) -> usize {
        (len / self.h - 1e-9).ceil().max(0.0) as usize
    }

    pub fn resolves(&self, lambda: f64) -> bool {
        lambda * self.h <= std::f64::consts::FRAC_PI_4 * (1.0 + 1e-12)
    }

    pub fn check_resolution(&self, lambda: f64) -> Result<()> {
        if self.resolves(lambda) {
            return Ok(());
        }
        let need_h = std::f64::consts::FRAC_PI_4 / lambda;
        let e = self.extent()[0].max(self.extent()[1]);
        Err(Error::Resolution {
            lambda,
            h: self.h,
            needed_n: (e / need_h).ceil() as usize + 1,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_tiny_or_empty() {
        assert!(Grid2::new([0.0, 0.0], 8, 32, 0.1, 0).is_err());
        assert!(Grid2::new([0.0, 0.0], 16, 16, 0.1, 8).is_err());
        assert!(Grid2::new([0.0, 0.0], 16, 16, -1.0, 0).is_err());
    }

    #[test]
    fn covering_keeps_core_centred() {
        let g = Grid2::covering([0.5, 0.5], [1.0, 1.0], 0.25, 129).unwrap();
        assert_eq!(g.n2(), 129);
        assert!((g.h() - 1.5 / 128.0).abs() < 1e-15);
        let c = g.center();
        assert!((c[0] - 0.5).abs() < 1e-12 && (c[1] - 0.5).abs() < 1e-12);
        assert_eq!(g.margin(), 21);
    }

    #[test]
    fn margin_bookkeeping() {
        let g = Grid2::new([0.0, 0.0], 64, 64, 0.01, 10).unwrap();
        let r = g.with_margin(4).unwrap();
        assert_eq!(r.inset(), 6);
        assert_eq!(r.core1(), g.core1());
        assert!(g.with_margin(11).is_err());
        assert_eq!(g.common(&r).unwrap(), r);
    }
}
