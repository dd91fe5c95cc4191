//! Zero-padded 2D convolution and the type-I sine transform, on top of rustfft.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Smallest n' >= n whose only prime factors are 2, 3, 5, 7.
pub fn good_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5, 7] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

struct Plan2 {
    p1: usize,
    p2: usize,
    f1: Arc<dyn Fft<f64>>,
    i1: Arc<dyn Fft<f64>>,
    f2: Arc<dyn Fft<f64>>,
    i2: Arc<dyn Fft<f64>>,
}

impl Plan2 {
    fn new(p1: usize, p2: usize) -> Self {
        let mut pl = FftPlanner::new();
        Plan2 {
            p1,
            p2,
            f1: pl.plan_fft_forward(p1),
            i1: pl.plan_fft_inverse(p1),
            f2: pl.plan_fft_forward(p2),
            i2: pl.plan_fft_inverse(p2),
        }
    }

    fn run(&self, buf: &mut [Complex64], inverse: bool) {
        let (a, b) = if inverse { (&self.i1, &self.i2) } else { (&self.f1, &self.f2) };
        a.process(buf);
        let mut t = transpose(buf, self.p1, self.p2);
        b.process(&mut t);
        let back = transpose(&t, self.p2, self.p1);
        buf.copy_from_slice(&back);
    }
}

/// Row-major `rows x cols` (rows of length `cols`) to its transpose.
fn transpose<T: Copy + Default>(src: &[T], cols: usize, rows: usize) -> Vec<T> {
    let mut out = vec![T::default(); src.len()];
    const B: usize = 32;
    for jb in (0..rows).step_by(B) {
        for ib in (0..cols).step_by(B) {
            for j in jb..(jb + B).min(rows) {
                for i in ib..(ib + B).min(cols) {
                    out[i * rows + j] = src[j * cols + i];
                }
            }
        }
    }
    out
}

/// Linear convolution `out[x] = sum_o K[o] a[x - o]` of a `d1 x d2` array with
/// a centred kernel of half-widths `(r1, r2)`, evaluated on the input window.
pub struct Conv2 {
    d1: usize,
    d2: usize,
    plan: Plan2,
    khat: Vec<Complex64>,
}

impl Conv2 {
    /// `kernel` is row-major `(2 r1 + 1) x (2 r2 + 1)` with offset (0,0) at its centre.
    pub fn new(d1: usize, d2: usize, kernel: &[f64], r1: usize, r2: usize) -> Self {
        let (w1, w2) = (2 * r1 + 1, 2 * r2 + 1);
        assert_eq!(kernel.len(), w1 * w2);
        let p1 = good_size(d1 + r1);
        let p2 = good_size(d2 + r2);
        let plan = Plan2::new(p1, p2);
        let mut khat = vec![Complex64::default(); p1 * p2];
        for b in 0..w2 {
            let o2 = b as i64 - r2 as i64;
            let q2 = o2.rem_euclid(p2 as i64) as usize;
            for a in 0..w1 {
                let o1 = a as i64 - r1 as i64;
                let q1 = o1.rem_euclid(p1 as i64) as usize;
                khat[q2 * p1 + q1].re += kernel[b * w1 + a];
            }
        }
        plan.run(&mut khat, false);
        let norm = 1.0 / (p1 * p2) as f64;
        khat.iter_mut().for_each(|z| *z *= norm);
        Conv2 { d1, d2, plan, khat }
    }

    fn convolve(&self, a: &[f64], b: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
        let (d1, p1) = (self.d1, self.plan.p1);
        let mut buf = vec![Complex64::default(); p1 * self.plan.p2];
        for j in 0..self.d2 {
            for i in 0..d1 {
                let im = b.map_or(0.0, |b| b[j * d1 + i]);
                buf[j * p1 + i] = Complex64::new(a[j * d1 + i], im);
            }
        }
        self.plan.run(&mut buf, false);
        buf.iter_mut().zip(&self.khat).for_each(|(z, k)| *z *= k);
        self.plan.run(&mut buf, true);
        let mut re = vec![0.0; d1 * self.d2];
        let mut im = if b.is_some() { vec![0.0; d1 * self.d2] } else { vec![] };
        for j in 0..self.d2 {
            for i in 0..d1 {
                let z = buf[j * p1 + i];
                re[j * d1 + i] = z.re;
                if b.is_some() {
                    im[j * d1 + i] = z.im;
                }
            }
        }
        (re, im)
    }

    pub fn apply(&self, a: &[f64]) -> Vec<f64> {
        self.convolve(a, None).0
    }

    /// Two real convolutions for the price of one complex transform.
    pub fn apply_pair(&self, a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
        self.convolve(a, Some(b))
    }
}

/// In-place unnormalised DST-I along both axes of a row-major `n1 x n2`
/// array: X[k] = sum_j x[j] sin(pi (j+1)(k+1)/(n+1)). Applying it twice
/// multiplies by (n1+1)(n2+1)/4.
pub fn dst1_2d(data: &mut [f64], n1: usize, n2: usize) {
    assert_eq!(data.len(), n1 * n2);
    let mut pl = FftPlanner::new();
    dst_rows(&mut pl, data, n1);
    let mut t = transpose(data, n1, n2);
    dst_rows(&mut pl, &mut t, n2);
    data.copy_from_slice(&transpose(&t, n2, n1));
}

fn dst_rows(pl: &mut FftPlanner<f64>, data: &mut [f64], n: usize) {
    let m = 2 * (n + 1);
    let fft = pl.plan_fft_forward(m);
    let rows = data.len() / n;
    let mut buf = vec![Complex64::default(); m * rows];
    for r in 0..rows {
        let (src, dst) = (&data[r * n..(r + 1) * n], &mut buf[r * m..(r + 1) * m]);
        for j in 0..n {
            dst[j + 1].re = src[j];
            dst[m - 1 - j].re = -src[j];
        }
    }
    fft.process(&mut buf);
    for r in 0..rows {
        for k in 0..n {
            // odd extension: FFT gives -2i * sum x_j sin(...)
            data[r * n + k] = -0.5 * buf[r * m + k + 1].im;
        }
    }
}
