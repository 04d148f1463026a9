//! Binary formats.
//!
//! JDSP (spectrogram):
//! ```text
//! b"JDSP" | u32 D | u32 L | D*L f32, bin-major (row b holds frames 0..L)
//! ```
//! JDMP (model checkpoint):
//! ```text
//! b"JDMP" | u32 version | u32 kind_len | kind bytes | u32 n_tensors
//!         | n_tensors * (u32 name_len | name | u32 rows | u32 cols)
//!         | all parameters as f32, tensors in table order, row-major
//! ```
//! All integers and floats are little-endian.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::state::Spectrogram;

pub const JDSP_MAGIC: &[u8; 4] = b"JDSP";
pub const JDMP_MAGIC: &[u8; 4] = b"JDMP";
pub const JDMP_VERSION: u32 = 1;

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::invalid(what, format!("{v} does not fit in u32")))
}

pub fn write_jdsp(w: &mut impl Write, x: &Spectrogram) -> Result<()> {
    w.write_all(JDSP_MAGIC)?;
    w.write_all(&to_u32(x.bins(), "bins")?.to_le_bytes())?;
    w.write_all(&to_u32(x.frames(), "frames")?.to_le_bytes())?;
    let mut buf = Vec::with_capacity(x.bins() * x.frames() * 4);
    for v in x.to_bin_major() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_jdsp(r: &mut impl Read) -> Result<Spectrogram> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != JDSP_MAGIC {
        return Err(Error::format("JDSP", "bad magic"));
    }
    let bins = read_u32(r)? as usize;
    let frames = read_u32(r)? as usize;
    let data = read_f32s(r, bins * frames)?;
    Spectrogram::from_bin_major(bins, frames, &data)
}

pub fn save_jdsp(path: impl AsRef<std::path::Path>, x: &Spectrogram) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_jdsp(&mut f, x)?;
    f.flush()?;
    Ok(())
}

pub fn load_jdsp(path: impl AsRef<std::path::Path>) -> Result<Spectrogram> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_jdsp(&mut f)
}

/// Binary PGM (P5) of a row-major `height × width` grid, min-max normalised.
///
/// Row 0 is drawn at the top.
pub fn write_pgm(w: &mut impl Write, width: usize, height: usize, values: &[f64]) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::invalid(
            "pgm",
            "value count does not match dimensions",
        ));
    }
    let (lo, hi) = values
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = if hi > lo { hi - lo } else { 1.0 };
    write!(w, "P5\n{width} {height}\n255\n")?;
    let pixels: Vec<u8> = values
        .iter()
        .map(|&v| {
            if v.is_finite() {
                (((v - lo) / range) * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                255
            }
        })
        .collect();
    w.write_all(&pixels)?;
    Ok(())
}

/// Spectrogram as PGM: frequency on the vertical axis, low bins at the bottom.
pub fn spectrogram_pgm(w: &mut impl Write, x: &Spectrogram) -> Result<()> {
    let rows = x.to_bin_major();
    let mut flipped = Vec::with_capacity(rows.len());
    for b in (0..x.bins()).rev() {
        flipped.extend(
            rows[b * x.frames()..(b + 1) * x.frames()]
                .iter()
                .map(|&v| v as f64),
        );
    }
    write_pgm(w, x.frames(), x.bins(), &flipped)
}

/// One named parameter tensor in a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
}

/// Contents of a JDMP checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::format("JDMP", format!("missing tensor {name}")))
    }
}

pub fn write_jdmp(w: &mut impl Write, ckpt: &Checkpoint) -> Result<()> {
    w.write_all(JDMP_MAGIC)?;
    w.write_all(&JDMP_VERSION.to_le_bytes())?;
    w.write_all(&to_u32(ckpt.kind.len(), "kind")?.to_le_bytes())?;
    w.write_all(ckpt.kind.as_bytes())?;
    w.write_all(&to_u32(ckpt.tensors.len(), "tensors")?.to_le_bytes())?;
    for t in &ckpt.tensors {
        if t.values.len() != t.rows * t.cols {
            return Err(Error::invalid(
                "tensor",
                format!("{} has wrong value count", t.name),
            ));
        }
        w.write_all(&to_u32(t.name.len(), "name")?.to_le_bytes())?;
        w.write_all(t.name.as_bytes())?;
        w.write_all(&to_u32(t.rows, "rows")?.to_le_bytes())?;
        w.write_all(&to_u32(t.cols, "cols")?.to_le_bytes())?;
    }
    let mut buf = Vec::new();
    for t in &ckpt.tensors {
        for v in &t.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_string(r: &mut impl Read) -> Result<String> {
    let n = read_u32(r)? as usize;
    if n > 1 << 16 {
        return Err(Error::format("JDMP", "string too long"));
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| Error::format("JDMP", "string is not UTF-8"))
}

pub fn read_jdmp(r: &mut impl Read) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != JDMP_MAGIC {
        return Err(Error::format("JDMP", "bad magic"));
    }
    let version = read_u32(r)?;
    if version != JDMP_VERSION {
        return Err(Error::format(
            "JDMP",
            format!("unsupported version {version}"),
        ));
    }
    let kind = read_string(r)?;
    let n = read_u32(r)? as usize;
    let mut table = Vec::with_capacity(n);
    for _ in 0..n {
        let name = read_string(r)?;
        let rows = read_u32(r)? as usize;
        let cols = read_u32(r)? as usize;
        table.push((name, rows, cols));
    }
    let mut tensors = Vec::with_capacity(n);
    for (name, rows, cols) in table {
        let values = read_f32s(r, rows * cols)?;
        tensors.push(Tensor {
            name,
            rows,
            cols,
            values,
        });
    }
    Ok(Checkpoint { kind, tensors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn jdsp_layout_is_bin_major() {
        let x = Spectrogram::from_columns(2, &[[1.0f32, 2.0], [3.0, 4.0]]).unwrap();
        let mut buf = Vec::new();
        write_jdsp(&mut buf, &x).unwrap();
        assert_eq!(&buf[..4], b"JDSP");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 2);
        let vals: Vec<f32> = buf[12..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(vals, vec![1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn jdsp_rejects_bad_magic_and_truncation() {
        assert!(read_jdsp(&mut &b"XXXX\x01\0\0\0\x01\0\0\0\0\0\0\0"[..]).is_err());
        assert!(read_jdsp(&mut &b"JDSP\x01\0\0\0\x02\0\0\0\0\0\0\0"[..]).is_err());
    }

    #[test]
    fn jdmp_round_trip() {
        let ckpt = Checkpoint {
            kind: "location".into(),
            tensors: vec![
                Tensor {
                    name: "w".into(),
                    rows: 2,
                    cols: 3,
                    values: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
                },
                Tensor {
                    name: "b".into(),
                    rows: 1,
                    cols: 2,
                    values: vec![-1.0, 0.5],
                },
            ],
        };
        let mut buf = Vec::new();
        write_jdmp(&mut buf, &ckpt).unwrap();
        assert_eq!(&buf[..4], b"JDMP");
        assert_eq!(read_jdmp(&mut buf.as_slice()).unwrap(), ckpt);
    }

    #[test]
    fn pgm_header_and_normalisation() {
        let mut buf = Vec::new();
        write_pgm(&mut buf, 2, 1, &[0.0, 2.0]).unwrap();
        assert_eq!(&buf[..11], b"P5\n2 1\n255\n");
        assert_eq!(&buf[11..], &[0, 255]);
    }

    proptest! {
        #[test]
        fn jdsp_round_trip_is_bit_exact(
            (bins, data) in (1usize..5, 0usize..6).prop_flat_map(|(b, l)| {
                (Just(b), prop::collection::vec(-1e6f32..1e6, b * l))
            })
        ) {
            let x = Spectrogram::from_frame_major(bins, data).unwrap();
            let mut buf = Vec::new();
            write_jdsp(&mut buf, &x).unwrap();
            let y = read_jdsp(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(x, y);
        }
    }
}
