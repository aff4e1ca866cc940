//! `QWF1` binary container for grid data.
//!
//! Layout (all little-endian):
//!
//! | field        | type      |
//! |--------------|-----------|
//! | magic        | `b"QWF1"` |
//! | version      | u32 = 1   |
//! | payload flag | u32 (0 = complex, 1 = real) |
//! | n_x n_y n_z  | 3 × u64   |
//! | x₀ dx y₀ dy z₀ dz time | 7 × f64 |
//! | payload      | f64 values in `(x, y, z)` order with `z` fastest; complex values as `re, im` |

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::qgrid::{SimGrid, Wavefunction};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"QWF1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 + 4 + 3 * 8 + 7 * 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QwfHeader {
    pub counts: [u64; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub time: f64,
}

impl QwfHeader {
    pub fn for_grid(grid: &SimGrid, time: f64) -> Self {
        Self {
            counts: grid.counts().map(|n| n as u64),
            origin: grid.origin(),
            spacing: grid.spacing(),
            time,
        }
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product::<u64>() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn write<W: Write>(&self, w: &mut W, flag: u32) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&flag.to_le_bytes())?;
        for n in self.counts {
            w.write_all(&n.to_le_bytes())?;
        }
        for a in 0..3 {
            w.write_all(&self.origin[a].to_le_bytes())?;
            w.write_all(&self.spacing[a].to_le_bytes())?;
        }
        w.write_all(&self.time.to_le_bytes())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Complex(Vec<Complex64>),
    Real(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QwfData {
    pub header: QwfHeader,
    pub payload: Payload,
}

pub fn write_complex<W: Write>(w: &mut W, header: &QwfHeader, data: &[Complex64]) -> Result<()> {
    if data.len() != header.len() {
        return Err(Error::Format(format!("{} values for header of {}", data.len(), header.len())));
    }
    header.write(w, 0)?;
    let mut buf = Vec::with_capacity(data.len() * 16);
    for c in data {
        buf.extend_from_slice(&c.re.to_le_bytes());
        buf.extend_from_slice(&c.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_real<W: Write>(w: &mut W, header: &QwfHeader, data: &[f64]) -> Result<()> {
    if data.len() != header.len() {
        return Err(Error::Format(format!("{} values for header of {}", data.len(), header.len())));
    }
    header.write(w, 1)?;
    let mut buf = Vec::with_capacity(data.len() * 8);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_wavefunction<W: Write>(w: &mut W, psi: &Wavefunction) -> Result<()> {
    write_complex(w, &QwfHeader::for_grid(psi.grid(), psi.time), psi.amplitudes())
}

pub fn read<R: Read>(r: &mut R) -> Result<QwfData> {
    let mut head = [0u8; HEADER_LEN];
    r.read_exact(&mut head).map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    if &head[0..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(head[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(head[o..o + 8].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(head[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let flag = u32_at(8);
    let counts = [u64_at(12), u64_at(20), u64_at(28)];
    let f = |i: usize| f64_at(36 + 8 * i);
    let header = QwfHeader { counts, origin: [f(0), f(2), f(4)], spacing: [f(1), f(3), f(5)], time: f(6) };
    let n = counts
        .iter()
        .try_fold(1u64, |acc, &c| acc.checked_mul(c))
        .ok_or_else(|| Error::Format("point count overflows".into()))? as usize;
    let width = match flag {
        0 => 16,
        1 => 8,
        other => return Err(Error::Format(format!("unknown payload flag {other}"))),
    };
    let mut bytes = vec![0u8; n * width];
    r.read_exact(&mut bytes).map_err(|e| Error::Format(format!("truncated payload: {e}")))?;
    let val = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let payload = if flag == 0 {
        Payload::Complex((0..n).map(|i| Complex64::new(val(16 * i), val(16 * i + 8))).collect())
    } else {
        Payload::Real((0..n).map(|i| val(8 * i)).collect())
    };
    Ok(QwfData { header, payload })
}

/// Reads a complex payload back into a [`Wavefunction`].
pub fn read_wavefunction<R: Read>(r: &mut R) -> Result<Wavefunction> {
    let data = read(r)?;
    let h = data.header;
    let counts = h.counts.map(|c| c as usize);
    let extents = [0, 1, 2].map(|a| h.spacing[a] * counts[a] as f64);
    let grid = SimGrid::new(counts, extents, h.origin)?;
    match data.payload {
        Payload::Complex(v) => Wavefunction::from_amplitudes(grid, v, h.time),
        Payload::Real(_) => Err(Error::Format("expected a complex payload".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_bytes() {
        let h = QwfHeader { counts: [1, 2, 3], origin: [0.5, 1.5, 2.5], spacing: [1.0, 2.0, 3.0], time: 9.0 };
        let mut out = Vec::new();
        write_real(&mut out, &h, &[1.0; 6]).unwrap();
        assert_eq!(out.len(), HEADER_LEN + 48);
        assert_eq!(&out[0..4], b"QWF1");
        assert_eq!(&out[4..8], &1u32.to_le_bytes());
        assert_eq!(&out[8..12], &1u32.to_le_bytes());
        assert_eq!(&out[12..20], &1u64.to_le_bytes());
        assert_eq!(&out[28..36], &3u64.to_le_bytes());
        // x0, dx, y0, dy, z0, dz, time
        assert_eq!(&out[36..44], &0.5f64.to_le_bytes());
        assert_eq!(&out[44..52], &1.0f64.to_le_bytes());
        assert_eq!(&out[52..60], &1.5f64.to_le_bytes());
        assert_eq!(&out[84..92], &9.0f64.to_le_bytes());
        assert_eq!(&out[92..100], &1.0f64.to_le_bytes());
    }

    #[test]
    fn rejects_corruption() {
        let h = QwfHeader { counts: [2, 1, 1], origin: [0.0; 3], spacing: [1.0; 3], time: 0.0 };
        let mut out = Vec::new();
        write_complex(&mut out, &h, &[Complex64::new(1.0, 2.0); 2]).unwrap();
        let mut bad = out.clone();
        bad[0] = b'X';
        assert!(read(&mut bad.as_slice()).is_err());
        let mut bad = out.clone();
        bad[8] = 7;
        assert!(read(&mut bad.as_slice()).is_err());
        assert!(read(&mut &out[..out.len() - 1]).is_err());
        assert!(write_real(&mut Vec::new(), &h, &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(vals in proptest::collection::vec(-1e3f64..1e3, 16), t in -1.0f64..1.0) {
            let h = QwfHeader { counts: [2, 2, 2], origin: [0.1, -0.2, 0.3], spacing: [1e-6, 2e-6, 3e-6], time: t };
            let c: Vec<Complex64> = vals.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect();
            let mut out = Vec::new();
            write_complex(&mut out, &h, &c).unwrap();
            let back = read(&mut out.as_slice()).unwrap();
            prop_assert_eq!(back.header, h);
            prop_assert_eq!(back.payload, Payload::Complex(c));
            let mut out = Vec::new();
            write_real(&mut out, &h, &vals[..8]).unwrap();
            prop_assert_eq!(read(&mut out.as_slice()).unwrap().payload, Payload::Real(vals[..8].to_vec()));
        }
    }
}
