//! Binary path archive.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "SLEP" | version: u32 | count: u64
//! per path:
//!   dt: f64 | n: u64 | complex: u8 (0/1) | has_limit: u8 (0/1)
//!   [limit: f64, or re: f64 im: f64 when complex]
//!   n samples: f64 each, or interleaved (re, im) pairs when complex
//! ```
//!
//! The lifetime is not stored. On read it is reconstructed on the grid: a
//! path with a terminal limit gets the finite lifetime `n·dt`, a path without
//! one is read back as truncated at horizon `n·dt`.

use std::io::{Read, Write};

use num_complex::Complex64;

use super::{Lifetime, PathValue, SampledPath};
use crate::error::{Error, Result};

pub const ARCHIVE_MAGIC: &[u8; 4] = b"SLEP";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum ArchivedPath {
    Real(SampledPath<f64>),
    Complex(SampledPath<Complex64>),
}

impl From<SampledPath<f64>> for ArchivedPath {
    fn from(p: SampledPath<f64>) -> Self {
        ArchivedPath::Real(p)
    }
}

impl From<SampledPath<Complex64>> for ArchivedPath {
    fn from(p: SampledPath<Complex64>) -> Self {
        ArchivedPath::Complex(p)
    }
}

impl ArchivedPath {
    pub fn len(&self) -> usize {
        match self {
            ArchivedPath::Real(p) => p.len(),
            ArchivedPath::Complex(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dt(&self) -> f64 {
        match self {
            ArchivedPath::Real(p) => p.dt(),
            ArchivedPath::Complex(p) => p.dt(),
        }
    }

    pub fn lifetime(&self) -> Lifetime {
        match self {
            ArchivedPath::Real(p) => p.lifetime(),
            ArchivedPath::Complex(p) => p.lifetime(),
        }
    }

    pub fn is_complex(&self) -> bool {
        matches!(self, ArchivedPath::Complex(_))
    }

    pub fn as_real(&self) -> Option<&SampledPath<f64>> {
        match self {
            ArchivedPath::Real(p) => Some(p),
            _ => None,
        }
    }
}

trait ArchiveScalar: PathValue {
    fn write_to(self, out: &mut Vec<u8>);
    fn read_from(r: &mut impl Read) -> Result<Self>;
}

impl ArchiveScalar for f64 {
    fn write_to(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_from(r: &mut impl Read) -> Result<Self> {
        read_f64(r)
    }
}

impl ArchiveScalar for Complex64 {
    fn write_to(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.re.to_le_bytes());
        out.extend_from_slice(&self.im.to_le_bytes());
    }
    fn read_from(r: &mut impl Read) -> Result<Self> {
        let re = read_f64(r)?;
        let im = read_f64(r)?;
        Ok(Complex64::new(re, im))
    }
}

fn encode_path<T: ArchiveScalar>(p: &SampledPath<T>, out: &mut Vec<u8>) {
    out.extend_from_slice(&p.dt().to_le_bytes());
    out.extend_from_slice(&(p.len() as u64).to_le_bytes());
    out.push(T::IS_COMPLEX as u8);
    match p.terminal_limit() {
        Some(lim) => {
            out.push(1);
            lim.write_to(out);
        }
        None => out.push(0),
    }
    for &v in p.values() {
        v.write_to(out);
    }
}

/// Serialises `paths` into `w`.
pub fn write_archive<W: Write>(w: &mut W, paths: &[ArchivedPath]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(ARCHIVE_MAGIC);
    buf.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(paths.len() as u64).to_le_bytes());
    for p in paths {
        match p {
            ArchivedPath::Real(p) => encode_path(p, &mut buf),
            ArchivedPath::Complex(p) => encode_path(p, &mut buf),
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("unexpected end of archive".into()),
        _ => Error::Io(e),
    })?;
    Ok(b)
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(read_exact::<8>(r)?))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_exact::<8>(r)?))
}

fn read_flag(r: &mut impl Read, what: &str) -> Result<bool> {
    match read_exact::<1>(r)?[0] {
        0 => Ok(false),
        1 => Ok(true),
        b => Err(Error::Format(format!("{what} flag must be 0 or 1, got {b}"))),
    }
}

fn decode_path<T: ArchiveScalar>(r: &mut impl Read, dt: f64, n: usize) -> Result<SampledPath<T>> {
    let limit = if read_flag(r, "terminal-limit")? {
        Some(T::read_from(r)?)
    } else {
        None
    };
    let mut values = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        values.push(T::read_from(r)?);
    }
    let covered = n as f64 * dt;
    let lifetime = if limit.is_some() {
        Lifetime::Finite(covered)
    } else {
        Lifetime::Truncated { horizon: covered }
    };
    SampledPath::new(dt, values, lifetime, limit).map_err(|e| Error::Format(e.to_string()))
}

/// Reads an archive written by [`write_archive`].
pub fn read_archive<R: Read>(r: &mut R) -> Result<Vec<ArchivedPath>> {
    let magic = read_exact::<4>(r)?;
    if &magic != ARCHIVE_MAGIC {
        return Err(Error::Format(format!("bad magic bytes {magic:?}")));
    }
    let version = u32::from_le_bytes(read_exact::<4>(r)?);
    if version != ARCHIVE_VERSION {
        return Err(Error::Format(format!("unsupported archive version {version}")));
    }
    let count = read_u64(r)?;
    let mut paths = Vec::new();
    for _ in 0..count {
        let dt = read_f64(r)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Format(format!("invalid dt {dt}")));
        }
        let n = read_u64(r)? as usize;
        if n == 0 {
            return Err(Error::Format("path with zero samples".into()));
        }
        let complex = read_flag(r, "complex")?;
        paths.push(if complex {
            ArchivedPath::Complex(decode_path(r, dt, n)?)
        } else {
            ArchivedPath::Real(decode_path(r, dt, n)?)
        });
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_exact() {
        let p = SampledPath::finite(0.5, vec![0.0, 1.5], 1.0, Some(2.0)).unwrap();
        let mut buf = Vec::new();
        write_archive(&mut buf, &[p.into()]).unwrap();
        assert_eq!(&buf[0..4], b"SLEP");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 1);
        assert_eq!(f64::from_le_bytes(buf[16..24].try_into().unwrap()), 0.5);
        assert_eq!(u64::from_le_bytes(buf[24..32].try_into().unwrap()), 2);
        assert_eq!(buf[32], 0);
        assert_eq!(buf[33], 1);
        assert_eq!(f64::from_le_bytes(buf[34..42].try_into().unwrap()), 2.0);
        assert_eq!(f64::from_le_bytes(buf[50..58].try_into().unwrap()), 1.5);
        assert_eq!(buf.len(), 58);
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let mut buf = Vec::new();
        write_archive(&mut buf, &[]).unwrap();
        buf[0] = b'X';
        assert!(matches!(read_archive(&mut buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_stream_is_rejected() {
        let p = SampledPath::truncated(0.1, vec![0.0, 1.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        write_archive(&mut buf, &[p.into()]).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_archive(&mut buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn empty_archive_reads_back_empty() {
        let mut buf = Vec::new();
        write_archive(&mut buf, &[]).unwrap();
        assert!(read_archive(&mut buf.as_slice()).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn round_trip_preserves_samples(
            dt in 1e-4f64..1.0,
            re in prop::collection::vec(-1e6f64..1e6, 1..50),
            lim in prop::option::of(-10.0f64..10.0),
            complex in any::<bool>(),
        ) {
            let n = re.len();
            let covered = n as f64 * dt;
            let lifetime = if lim.is_some() { Lifetime::Finite(covered) } else { Lifetime::Truncated { horizon: covered } };
            let path: ArchivedPath = if complex {
                let vals = re.iter().map(|&x| Complex64::new(x, -x * 0.5)).collect();
                SampledPath::new(dt, vals, lifetime, lim.map(|l| Complex64::new(l, 1.0))).unwrap().into()
            } else {
                SampledPath::new(dt, re.clone(), lifetime, lim).unwrap().into()
            };
            let mut buf = Vec::new();
            write_archive(&mut buf, std::slice::from_ref(&path)).unwrap();
            let back = read_archive(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(back.len(), 1);
            prop_assert_eq!(&back[0], &path);
        }
    }
}
