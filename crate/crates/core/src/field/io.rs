//! MACF1 binary dumps and CSV export.
//!
//! Only the valid window is written; a reloaded field has inset zero.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::field::{Field, Grid2};

pub const MAGIC: &[u8; 5] = b"MACF1";

pub fn write_macf1<F: Field, W: Write>(f: &F, mut out: W) -> Result<()> {
    let g = f.grid();
    let [d1, d2] = g.valid_dims();
    out.write_all(MAGIC)?;
    for u in [f.ncomp(), d1, d2] {
        out.write_all(&(u as u32).to_le_bytes())?;
    }
    let o = g.valid_origin();
    for x in [o[0], o[1], g.h(), g.margin_len()] {
        out.write_all(&x.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(8 * d1 * d2);
    for c in 0..f.ncomp() {
        let v = f.comp(c);
        buf.clear();
        for j in g.valid2() {
            for i in g.valid1() {
                buf.extend_from_slice(&v[g.idx(i, j)].to_le_bytes());
            }
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_macf1<F: Field, R: Read>(mut inp: R) -> Result<F> {
    let mut magic = [0u8; 5];
    inp.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut u = [0u8; 4];
    let mut head = [0usize; 3];
    for h in head.iter_mut() {
        inp.read_exact(&mut u)?;
        *h = u32::from_le_bytes(u) as usize;
    }
    let mut b = [0u8; 8];
    let mut fl = [0.0; 4];
    for x in fl.iter_mut() {
        inp.read_exact(&mut b)?;
        *x = f64::from_le_bytes(b);
    }
    let [ncomp, n1, n2] = head;
    let [o1, o2, h, margin] = fl;
    let g = Grid2::new([o1, o2], n1, n2, h, 0)?;
    let g = Grid2::new([o1, o2], n1, n2, h, g.nodes_exact(margin)?)?;
    let mut comps = Vec::with_capacity(ncomp);
    let mut raw = vec![0u8; 8 * n1 * n2];
    for _ in 0..ncomp {
        inp.read_exact(&mut raw)?;
        comps.push(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect());
    }
    F::from_parts(g, comps)
}

/// `x1,x2,c0,...` rows over the valid window.
pub fn write_csv<F: Field, W: Write>(f: &F, mut out: W) -> Result<()> {
    let g = f.grid();
    let mut head = String::from("x1,x2");
    for c in 0..f.ncomp() {
        head.push_str(&format!(",c{c}"));
    }
    writeln!(out, "{head}")?;
    for j in g.valid2() {
        for i in g.valid1() {
            write!(out, "{},{}", g.x1(i), g.x2(j))?;
            for c in 0..f.ncomp() {
                write!(out, ",{}", f.comp(c)[g.idx(i, j)])?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

pub fn save_macf1<F: Field>(f: &F, path: &std::path::Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_macf1(f, std::io::BufWriter::new(file))
}

pub fn load_macf1<F: Field>(path: &std::path::Path) -> Result<F> {
    read_macf1(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{restrict_nodes, SymMatrixField2, VectorField2};

    #[test]
    fn round_trip_keeps_valid_window() {
        let g = Grid2::new([0.25, -1.0], 40, 36, 0.05, 6).unwrap();
        let f = SymMatrixField2::from_fn(g, |x, y| [x, x * y, y.sin()]);
        let f = restrict_nodes(&f, 4).unwrap();
        let mut buf = vec![];
        write_macf1(&f, &mut buf).unwrap();
        assert_eq!(&buf[..5], b"MACF1");
        assert_eq!(u32::from_le_bytes(buf[5..9].try_into().unwrap()), 3);
        assert_eq!(buf.len(), 5 + 12 + 32 + 3 * 8 * 36 * 32);
        let back: SymMatrixField2 = read_macf1(&buf[..]).unwrap();
        assert_eq!(back.grid().margin(), 4);
        assert_eq!(back.grid().valid_origin(), f.grid().valid_origin());
        assert_eq!(back.m12().at(0, 0), f.m12().at(2, 2));
        assert!(read_macf1::<SymMatrixField2, _>(&b"MACF2"[..]).is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let g = Grid2::new([0.0, 0.0], 16, 16, 0.1, 0).unwrap();
        let f = VectorField2::from_fn(g, 2, |c, x, _| c as f64 + x);
        let mut buf = vec![];
        write_csv(&f, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some("x1,x2,c0,c1"));
        assert_eq!(lines.next(), Some("0,0,0,1"));
        assert_eq!(s.lines().count(), 1 + 256);
    }
}
