//! Two-dimensional fields of vectors and their file formats.
//!
//! Storage is column-major by `s`: every vertical scanline `s` holds the
//! vectors for `r = 0..=N` contiguously, so Hankel extraction over `r` is a
//! contiguous read.
//!
//! Text format: a header line `R2D1 n N M`, then `(N+1)(M+1)` lines
//! `r s v_0 … v_{n−1}` with `r` as the outer loop, values printed with 17
//! significant digits. Binary format: the magic bytes `R2DB`, then `n`, `N`,
//! `M` as little-endian `u64`, then the values as little-endian `f64` in the
//! same `r`-outer order.

use std::io::{BufRead, Read, Write};

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GridData {
    n: usize,
    big_n: usize,
    big_m: usize,
    data: Vec<f64>,
}

impl GridData {
    pub fn zeros(n: usize, big_n: usize, big_m: usize) -> Self {
        GridData { n, big_n, big_m, data: vec![0.0; n * (big_n + 1) * (big_m + 1)] }
    }

    pub fn from_fn(n: usize, big_n: usize, big_m: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut g = Self::zeros(n, big_n, big_m);
        for s in 0..=big_m {
            for r in 0..=big_n {
                for c in 0..n {
                    g.get_mut(r, s)[c] = f(r, s, c);
                }
            }
        }
        g
    }

    /// Vector dimension.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Largest row index `N`.
    pub fn rows(&self) -> usize {
        self.big_n
    }

    /// Largest column index `M`.
    pub fn cols(&self) -> usize {
        self.big_m
    }

    fn offset(&self, r: usize, s: usize) -> usize {
        debug_assert!(r <= self.big_n && s <= self.big_m);
        (s * (self.big_n + 1) + r) * self.n
    }

    pub fn get(&self, r: usize, s: usize) -> &[f64] {
        let o = self.offset(r, s);
        &self.data[o..o + self.n]
    }

    pub fn get_mut(&mut self, r: usize, s: usize) -> &mut [f64] {
        let o = self.offset(r, s);
        &mut self.data[o..o + self.n]
    }

    pub fn vector(&self, r: usize, s: usize) -> DVector<f64> {
        DVector::from_column_slice(self.get(r, s))
    }

    pub fn set(&mut self, r: usize, s: usize, v: &[f64]) {
        self.get_mut(r, s).copy_from_slice(v);
    }

    /// Contiguous scanline `s` (rows `0..=N`).
    pub fn column(&self, s: usize) -> &[f64] {
        let o = self.offset(0, s);
        &self.data[o..o + self.n * (self.big_n + 1)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// The field with `r` and `s` exchanged.
    pub fn transposed(&self) -> GridData {
        let mut t = GridData::zeros(self.n, self.big_m, self.big_n);
        for s in 0..=self.big_m {
            for r in 0..=self.big_n {
                t.set(s, r, self.get(r, s));
            }
        }
        t
    }

    /// Keeps rows `0..=n_max`.
    pub fn truncate_rows(&self, n_max: usize) -> GridData {
        let mut t = GridData::zeros(self.n, n_max, self.big_m);
        for s in 0..=self.big_m {
            for r in 0..=n_max {
                t.set(r, s, self.get(r, s));
            }
        }
        t
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "R2D1 {} {} {}", self.n, self.big_n, self.big_m)?;
        for r in 0..=self.big_n {
            for s in 0..=self.big_m {
                write!(w, "{r} {s}")?;
                for v in self.get(r, s) {
                    write!(w, " {v:.16e}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"R2DB")?;
        for x in [self.n, self.big_n, self.big_m] {
            w.write_all(&(x as u64).to_le_bytes())?;
        }
        for r in 0..=self.big_n {
            for s in 0..=self.big_m {
                for v in self.get(r, s) {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    /// Reads either format, detected from the first four bytes.
    pub fn read<R: Read>(mut rd: R) -> Result<GridData> {
        let mut bytes = Vec::new();
        rd.read_to_end(&mut bytes)?;
        if bytes.starts_with(b"R2DB") {
            Self::parse_binary(&bytes)
        } else {
            Self::parse_text(&bytes[..])
        }
    }

    fn parse_binary(bytes: &[u8]) -> Result<GridData> {
        let word = |k: usize| -> Result<[u8; 8]> {
            bytes
                .get(4 + 8 * k..12 + 8 * k)
                .and_then(|b| b.try_into().ok())
                .ok_or_else(|| Error::Input("truncated binary grid header".into()))
        };
        let n = u64::from_le_bytes(word(0)?) as usize;
        let big_n = u64::from_le_bytes(word(1)?) as usize;
        let big_m = u64::from_le_bytes(word(2)?) as usize;
        let count = n * (big_n + 1) * (big_m + 1);
        let payload = &bytes[28..];
        if payload.len() != count * 8 {
            return Err(Error::Input(format!(
                "binary grid payload has {} bytes, expected {}",
                payload.len(),
                count * 8
            )));
        }
        let mut g = GridData::zeros(n, big_n, big_m);
        let mut it = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        for r in 0..=big_n {
            for s in 0..=big_m {
                for c in 0..n {
                    g.get_mut(r, s)[c] = it.next().unwrap();
                }
            }
        }
        g.check_finite()
    }

    fn parse_text<R: BufRead>(rd: R) -> Result<GridData> {
        let mut lines = rd.lines();
        let header = lines.next().ok_or_else(|| Error::Input("empty grid file".into()))??;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 4 || h[0] != "R2D1" {
            return Err(Error::Input(format!("bad grid header {header:?}")));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Input(format!("bad header field {s:?}")));
        let (n, big_n, big_m) = (parse(h[1])?, parse(h[2])?, parse(h[3])?);
        let mut g = GridData::zeros(n, big_n, big_m);
        let mut seen = 0usize;
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != n + 2 {
                return Err(Error::Input(format!("grid line {}: expected {} fields", lineno + 2, n + 2)));
            }
            let r = parse(f[0])?;
            let s = parse(f[1])?;
            if r > big_n || s > big_m {
                return Err(Error::Input(format!("grid line {}: index ({r},{s}) out of range", lineno + 2)));
            }
            for c in 0..n {
                g.get_mut(r, s)[c] = f[c + 2]
                    .parse::<f64>()
                    .map_err(|_| Error::Input(format!("grid line {}: bad number", lineno + 2)))?;
            }
            seen += 1;
        }
        if seen != (big_n + 1) * (big_m + 1) {
            return Err(Error::Input(format!(
                "grid has {seen} data lines, expected {}",
                (big_n + 1) * (big_m + 1)
            )));
        }
        g.check_finite()
    }

    fn check_finite(self) -> Result<GridData> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::Input("grid contains non-finite values".into()))
        }
    }
}
