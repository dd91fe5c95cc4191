use crate::error::{Error, Result};
use crate::field::Grid2;

/// Common view over the sampled field variants. Samples outside the valid
/// window are kept at zero.
pub trait Field: Clone + Sized {
    fn grid(&self) -> &Grid2;
    fn ncomp(&self) -> usize;
    fn comp(&self, c: usize) -> &[f64];
    fn comp_mut(&mut self, c: usize) -> &mut [f64];
    fn from_parts(grid: Grid2, comps: Vec<Vec<f64>>) -> Result<Self>;
    #[doc(hidden)]
    fn set_grid_unchecked(&mut self, grid: Grid2);
}

fn check_len(grid: &Grid2, v: &[f64]) -> Result<()> {
    if v.len() != grid.len() {
        return Err(Error::InvalidGrid(format!(
            "sample count {} does not match grid {}",
            v.len(),
            grid.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Precondition("non-finite sample".into()));
    }
    Ok(())
}

/// Fill the valid window of `grid` from a closure of the node position.
pub(crate) fn sample(grid: &Grid2, mut f: impl FnMut(f64, f64) -> f64) -> Vec<f64> {
    let mut v = vec![0.0; grid.len()];
    for j in grid.valid2() {
        let x2 = grid.x2(j);
        for i in grid.valid1() {
            v[grid.idx(i, j)] = f(grid.x1(i), x2);
        }
    }
    v
}

/// Apply `op` over the valid window of `grid`, writing zeros elsewhere.
pub(crate) fn map_valid(grid: &Grid2, mut op: impl FnMut(usize) -> f64) -> Vec<f64> {
    let mut v = vec![0.0; grid.len()];
    for j in grid.valid2() {
        let row = j * grid.n1();
        for i in grid.valid1() {
            v[row + i] = op(row + i);
        }
    }
    v
}

/// Zero every sample outside the valid window.
pub(crate) fn clear_outside(grid: &Grid2, v: &mut [f64]) {
    let (r1, r2) = (grid.valid1(), grid.valid2());
    for j in 0..grid.n2() {
        let row = &mut v[j * grid.n1()..(j + 1) * grid.n1()];
        if !r2.contains(&j) {
            row.fill(0.0);
        } else {
            row[..r1.start].fill(0.0);
            row[r1.end..].fill(0.0);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField2 {
    grid: Grid2,
    values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorField2 {
    grid: Grid2,
    comps: Vec<Vec<f64>>,
}

/// Symmetric 2x2 matrix field, stored as (m11, m12, m22).
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrixField2 {
    grid: Grid2,
    m: [Vec<f64>; 3],
}

impl Field for ScalarField2 {
    fn grid(&self) -> &Grid2 {
        &self.grid
    }
    fn ncomp(&self) -> usize {
        1
    }
    fn comp(&self, _c: usize) -> &[f64] {
        &self.values
    }
    fn comp_mut(&mut self, _c: usize) -> &mut [f64] {
        &mut self.values
    }
    fn from_parts(grid: Grid2, mut comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != 1 {
            return Err(Error::ComponentCount { expected: 1, got: comps.len() });
        }
        let values = comps.pop().unwrap();
        check_len(&grid, &values)?;
        Ok(ScalarField2 { grid, values })
    }
    fn set_grid_unchecked(&mut self, grid: Grid2) {
        self.grid = grid;
    }
}

impl Field for VectorField2 {
    fn grid(&self) -> &Grid2 {
        &self.grid
    }
    fn ncomp(&self) -> usize {
        self.comps.len()
    }
    fn comp(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }
    fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.comps[c]
    }
    fn from_parts(grid: Grid2, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.is_empty() {
            return Err(Error::ComponentCount { expected: 1, got: 0 });
        }
        for c in &comps {
            check_len(&grid, c)?;
        }
        Ok(VectorField2 { grid, comps })
    }
    fn set_grid_unchecked(&mut self, grid: Grid2) {
        self.grid = grid;
    }
}

impl Field for SymMatrixField2 {
    fn grid(&self) -> &Grid2 {
        &self.grid
    }
    fn ncomp(&self) -> usize {
        3
    }
    fn comp(&self, c: usize) -> &[f64] {
        &self.m[c]
    }
    fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.m[c]
    }
    fn from_parts(grid: Grid2, comps: Vec<Vec<f64>>) -> Result<Self> {
        let n = comps.len();
        let m: [Vec<f64>; 3] = comps
            .try_into()
            .map_err(|_| Error::ComponentCount { expected: 3, got: n })?;
        for c in &m {
            check_len(&grid, c)?;
        }
        Ok(SymMatrixField2 { grid, m })
    }
    fn set_grid_unchecked(&mut self, grid: Grid2) {
        self.grid = grid;
    }
}

/// Componentwise combination of two fields of the same kind on the common window.
pub fn zip_fields<F: Field>(a: &F, b: &F, op: impl Fn(f64, f64) -> f64) -> Result<F> {
    if a.ncomp() != b.ncomp() {
        return Err(Error::ComponentCount { expected: a.ncomp(), got: b.ncomp() });
    }
    let g = a.grid().common(b.grid())?;
    let comps = (0..a.ncomp())
        .map(|c| {
            let (x, y) = (a.comp(c), b.comp(c));
            map_valid(&g, |k| op(x[k], y[k]))
        })
        .collect();
    F::from_parts(g, comps)
}

pub fn map_field<F: Field>(a: &F, op: impl Fn(f64) -> f64) -> F {
    let g = *a.grid();
    let comps = (0..a.ncomp()).map(|c| map_valid(&g, |k| op(a.comp(c)[k]))).collect();
    F::from_parts(g, comps).expect("map keeps shape")
}

pub fn add<F: Field>(a: &F, b: &F) -> Result<F> {
    zip_fields(a, b, |x, y| x + y)
}

pub fn sub<F: Field>(a: &F, b: &F) -> Result<F> {
    zip_fields(a, b, |x, y| x - y)
}

pub fn scale<F: Field>(a: &F, s: f64) -> F {
    map_field(a, |x| s * x)
}

/// Re-window a field onto `grid` (same layout, valid window not larger than
/// the source's), zeroing samples that fall outside.
pub fn rewindow<F: Field>(f: &F, grid: Grid2) -> Result<F> {
    let mut out = f.clone();
    narrow(&mut out, grid)?;
    Ok(out)
}

/// In-place [`rewindow`].
pub fn narrow<F: Field>(f: &mut F, grid: Grid2) -> Result<()> {
    if !grid.same_layout(f.grid()) || grid.inset() < f.grid().inset() {
        return Err(Error::GridMismatch("cannot widen a valid window".into()));
    }
    f.set_grid_unchecked(grid);
    for c in 0..f.ncomp() {
        clear_outside(&grid, f.comp_mut(c));
    }
    Ok(())
}

/// Widen the valid window to `grid`; the new samples are zero, which is the
/// natural extension of compactly supported data.
pub fn extend_by_zero<F: Field>(f: &F, grid: Grid2) -> Result<F> {
    if !grid.same_layout(f.grid()) || grid.inset() > f.grid().inset() {
        return Err(Error::GridMismatch("extension must not narrow the window".into()));
    }
    let mut out = f.clone();
    out.set_grid_unchecked(grid);
    Ok(out)
}

impl ScalarField2 {
    pub fn from_fn(grid: Grid2, f: impl FnMut(f64, f64) -> f64) -> Self {
        ScalarField2 { values: sample(&grid, f), grid }
    }
    pub fn constant(grid: Grid2, c: f64) -> Self {
        Self::from_fn(grid, |_, _| c)
    }
    pub fn zeros(grid: Grid2) -> Self {
        Self::constant(grid, 0.0)
    }
    pub fn new(grid: Grid2, values: Vec<f64>) -> Result<Self> {
        check_len(&grid, &values)?;
        let mut f = ScalarField2 { grid, values };
        clear_outside(&grid, &mut f.values);
        Ok(f)
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }
    pub fn mul(&self, o: &ScalarField2) -> Result<ScalarField2> {
        zip_fields(self, o, |x, y| x * y)
    }
    /// Pointwise minimum over the valid window.
    pub fn min(&self) -> f64 {
        let g = self.grid;
        let mut m = f64::INFINITY;
        for j in g.valid2() {
            for i in g.valid1() {
                m = m.min(self.values[g.idx(i, j)]);
            }
        }
        m
    }
    pub fn max(&self) -> f64 {
        -map_field(self, |x| -x).min()
    }
}

impl VectorField2 {
    pub fn from_fn(grid: Grid2, ncomp: usize, mut f: impl FnMut(usize, f64, f64) -> f64) -> Self {
        let comps = (0..ncomp).map(|c| sample(&grid, |x, y| f(c, x, y))).collect();
        VectorField2 { grid, comps }
    }
    pub fn zeros(grid: Grid2, ncomp: usize) -> Self {
        Self::from_fn(grid, ncomp, |_, _, _| 0.0)
    }
    /// The identity map x -> x (two components).
    pub fn identity(grid: Grid2) -> Self {
        Self::from_fn(grid, 2, |c, x, y| if c == 0 { x } else { y })
    }
    pub fn from_scalars(parts: &[&ScalarField2]) -> Result<Self> {
        let g = parts
            .iter()
            .skip(1)
            .try_fold(*parts[0].grid(), |g, p| g.common(p.grid()))?;
        let comps = parts
            .iter()
            .map(|p| rewindow(*p, g).map(|q| q.values))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(g, comps)
    }
    pub fn component(&self, c: usize) -> ScalarField2 {
        ScalarField2 { grid: self.grid, values: self.comps[c].clone() }
    }
    pub fn set_component(&mut self, c: usize, s: &ScalarField2) -> Result<()> {
        let g = self.grid.common(s.grid())?;
        let s = rewindow(s, g)?;
        *self = rewindow(self, g)?;
        self.comps[c] = s.values;
        Ok(())
    }
}

impl SymMatrixField2 {
    pub fn from_fn(grid: Grid2, mut f: impl FnMut(f64, f64) -> [f64; 3]) -> Self {
        let mut m = [vec![0.0; grid.len()], vec![0.0; grid.len()], vec![0.0; grid.len()]];
        for j in grid.valid2() {
            for i in grid.valid1() {
                let v = f(grid.x1(i), grid.x2(j));
                let k = grid.idx(i, j);
                for c in 0..3 {
                    m[c][k] = v[c];
                }
            }
        }
        SymMatrixField2 { grid, m }
    }
    /// c * Id.
    pub fn identity(grid: Grid2, c: f64) -> Self {
        Self::from_fn(grid, |_, _| [c, 0.0, c])
    }
    pub fn zeros(grid: Grid2) -> Self {
        Self::identity(grid, 0.0)
    }
    pub fn from_entries(m11: &ScalarField2, m12: &ScalarField2, m22: &ScalarField2) -> Result<Self> {
        let v = VectorField2::from_scalars(&[m11, m12, m22])?;
        Self::from_parts(v.grid, v.comps)
    }
    pub fn m11(&self) -> ScalarField2 {
        self.entry(0)
    }
    pub fn m12(&self) -> ScalarField2 {
        self.entry(1)
    }
    pub fn m22(&self) -> ScalarField2 {
        self.entry(2)
    }
    pub fn entry(&self, c: usize) -> ScalarField2 {
        ScalarField2 { grid: self.grid, values: self.m[c].clone() }
    }
    pub fn trace(&self) -> ScalarField2 {
        ScalarField2 { grid: self.grid, values: map_valid(&self.grid, |k| self.m[0][k] + self.m[2][k]) }
    }
    /// D - (tr D / 2) Id.
    pub fn traceless(&self) -> SymMatrixField2 {
        let g = self.grid;
        let d = map_valid(&g, |k| 0.5 * (self.m[0][k] - self.m[2][k]));
        let o = map_valid(&g, |k| self.m[1][k]);
        let nd = d.iter().map(|x| -x).collect();
        SymMatrixField2 { grid: g, m: [d, o, nd] }
    }
    /// Scalar multiple of Id added pointwise.
    pub fn add_scalar_id(&self, s: &ScalarField2) -> Result<SymMatrixField2> {
        let g = self.grid.common(s.grid())?;
        let m = [
            map_valid(&g, |k| self.m[0][k] + s.values[k]),
            map_valid(&g, |k| self.m[1][k]),
            map_valid(&g, |k| self.m[2][k] + s.values[k]),
        ];
        Ok(SymMatrixField2 { grid: g, m })
    }
    /// Pointwise product with a scalar field.
    pub fn scale_by(&self, s: &ScalarField2) -> Result<SymMatrixField2> {
        let g = self.grid.common(s.grid())?;
        let m = [0, 1, 2].map(|c| map_valid(&g, |k| self.m[c][k] * s.values[k]));
        Ok(SymMatrixField2 { grid: g, m })
    }
    /// Smallest eigenvalue per node, closed form for 2x2 symmetric matrices.
    pub fn min_eigenvalue_field(&self) -> ScalarField2 {
        let v = map_valid(&self.grid, |k| min_eig(self.m[0][k], self.m[1][k], self.m[2][k]));
        ScalarField2 { grid: self.grid, values: v }
    }
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue_field().min()
    }
}

pub fn min_eig(a: f64, b: f64, c: f64) -> f64 {
    let m = 0.5 * (a + c);
    let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    m - r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid2 {
        Grid2::new([0.0, 0.0], 20, 18, 0.1, 2).unwrap()
    }

    #[test]
    fn closed_form_eigenvalue() {
        assert!((min_eig(2.0, 0.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((min_eig(1.0, 1.0, 1.0) - 0.0).abs() < 1e-15);
        assert!((min_eig(0.0, 2.0, 0.0) + 2.0).abs() < 1e-15);
    }

    #[test]
    fn zip_uses_smaller_window() {
        let g = grid();
        let a = ScalarField2::constant(g, 1.0);
        let b = ScalarField2::constant(g.with_margin(1).unwrap(), 2.0);
        let c = add(&a, &b).unwrap();
        assert_eq!(c.grid().inset(), 1);
        assert_eq!(c.at(0, 5), 0.0);
        assert_eq!(c.at(1, 5), 3.0);
    }

    #[test]
    fn traceless_part() {
        let g = grid();
        let d = SymMatrixField2::from_fn(g, |x, _| [3.0 + x, 0.5, 1.0]);
        let t = d.traceless();
        let k = g.idx(5, 5);
        assert!((t.comp(0)[k] + t.comp(2)[k]).abs() < 1e-15);
        assert!((t.comp(0)[k] - 0.5 * (2.0 + g.x1(5))).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_finite() {
        let g = grid();
        let mut v = vec![0.0; g.len()];
        v[3] = f64::NAN;
        assert!(ScalarField2::new(g, v).is_err());
    }
}
