//! Binary raster container and PGM export.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic   8 bytes  "WFTRAST1"
//! dtype   1 byte   0 = f32, 1 = f64
//! rank    1 byte
//! dims    rank x u32
//! payload product(dims) values, row-major
//! ```
//!
//! Complex stacks are stored with an extra trailing dimension of size 2
//! (real, imaginary). Round trips are bit-exact for both dtypes.

use crate::error::{Error, Result};
use crate::maps::EchoSeries;
use crate::protocol::AcquisitionProtocol;
use ndarray::{Array2, Array3, ArrayD, IxDyn};
use num_complex::Complex64;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"WFTRAST1";
const MAX_RANK: usize = 4;

/// A rank-1..4 array of f32 or f64, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Raster {
    F32(ArrayD<f32>),
    F64(ArrayD<f64>),
}

impl Raster {
    pub fn dims(&self) -> &[usize] {
        match self {
            Raster::F32(a) => a.shape(),
            Raster::F64(a) => a.shape(),
        }
    }

    fn validate(&self) -> Result<()> {
        let rank = self.dims().len();
        if rank == 0 || rank > MAX_RANK {
            return Err(Error::validation(format!(
                "raster rank must be 1..={MAX_RANK}, got {rank}"
            )));
        }
        let finite = match self {
            Raster::F32(a) => a.iter().all(|v| v.is_finite()),
            Raster::F64(a) => a.iter().all(|v| v.is_finite()),
        };
        if !finite {
            return Err(Error::validation("raster contains non-finite values"));
        }
        Ok(())
    }
}

pub fn write_raster(path: impl AsRef<Path>, array: &Raster) -> Result<()> {
    let path = path.as_ref();
    array.validate()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);

    w.write_all(MAGIC).map_err(io_err)?;
    let dtype: u8 = match array {
        Raster::F32(_) => 0,
        Raster::F64(_) => 1,
    };
    w.write_all(&[dtype, array.dims().len() as u8]).map_err(io_err)?;
    for &d in array.dims() {
        w.write_all(&(d as u32).to_le_bytes()).map_err(io_err)?;
    }
    match array {
        Raster::F32(a) => {
            for v in a.iter() {
                w.write_all(&v.to_le_bytes()).map_err(io_err)?;
            }
        }
        Raster::F64(a) => {
            for v in a.iter() {
                w.write_all(&v.to_le_bytes()).map_err(io_err)?;
            }
        }
    }
    w.flush().map_err(io_err)
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 8];
    read_exact_or_truncated(&mut r, &mut magic, path, "header")?;
    if &magic != MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            expected: "WFTRAST1",
        });
    }

    let mut head = [0u8; 2];
    read_exact_or_truncated(&mut r, &mut head, path, "header")?;
    let (dtype, rank) = (head[0], head[1] as usize);
    if dtype > 1 {
        return Err(Error::UnknownDtype {
            path: path.into(),
            code: dtype,
        });
    }
    if rank == 0 || rank > MAX_RANK {
        return Err(Error::Parse {
            path: path.into(),
            reason: format!("rank {rank} outside 1..={MAX_RANK}"),
        });
    }

    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut b = [0u8; 4];
        read_exact_or_truncated(&mut r, &mut b, path, "dims")?;
        dims.push(u32::from_le_bytes(b) as usize);
    }
    let count: usize = dims.iter().product();
    let elem = if dtype == 0 { 4 } else { 8 };

    let mut payload = Vec::new();
    r.read_to_end(&mut payload).map_err(|e| Error::io(path, e))?;
    if payload.len() != count * elem {
        return Err(Error::Truncated {
            path: path.into(),
            expected: count * elem,
            got: payload.len(),
        });
    }

    let shape = IxDyn(&dims);
    Ok(if dtype == 0 {
        let values: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Raster::F32(ArrayD::from_shape_vec(shape, values).expect("length checked"))
    } else {
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Raster::F64(ArrayD::from_shape_vec(shape, values).expect("length checked"))
    })
}

fn read_exact_or_truncated(
    r: &mut impl Read,
    buf: &mut [u8],
    path: &Path,
    what: &str,
) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Parse {
                path: path.into(),
                reason: format!("truncated {what}"),
            }
        } else {
            Error::io(path, e)
        }
    })
}

/// Complex N×H×W stack → rank-4 f64 raster with trailing (re, im) pairs.
pub fn complex_stack_to_raster(data: &Array3<Complex64>) -> Raster {
    let (n, h, w) = data.dim();
    let mut out = ArrayD::zeros(IxDyn(&[n, h, w, 2]));
    for ((e, y, x), v) in data.indexed_iter() {
        out[[e, y, x, 0]] = v.re;
        out[[e, y, x, 1]] = v.im;
    }
    Raster::F64(out)
}

/// f32 variant used for bulk corpus storage.
pub fn complex_stack_to_raster_f32(data: &Array3<Complex64>) -> Raster {
    let (n, h, w) = data.dim();
    let mut out = ArrayD::zeros(IxDyn(&[n, h, w, 2]));
    for ((e, y, x), v) in data.indexed_iter() {
        out[[e, y, x, 0]] = v.re as f32;
        out[[e, y, x, 1]] = v.im as f32;
    }
    Raster::F32(out)
}

/// Inverse of the complex-stack encodings (accepts either dtype).
pub fn raster_to_complex_stack(raster: &Raster) -> Result<Array3<Complex64>> {
    let dims = raster.dims().to_vec();
    if dims.len() != 4 || dims[3] != 2 {
        return Err(Error::shape(format!(
            "complex stack raster must be N×H×W×2, got {dims:?}"
        )));
    }
    let (n, h, w) = (dims[0], dims[1], dims[2]);
    let mut out = Array3::zeros((n, h, w));
    match raster {
        Raster::F64(a) => {
            for ((e, y, x), v) in out.indexed_iter_mut() {
                *v = Complex64::new(a[[e, y, x, 0]], a[[e, y, x, 1]]);
            }
        }
        Raster::F32(a) => {
            for ((e, y, x), v) in out.indexed_iter_mut() {
                *v = Complex64::new(a[[e, y, x, 0]] as f64, a[[e, y, x, 1]] as f64);
            }
        }
    }
    Ok(out)
}

pub fn write_series(path: impl AsRef<Path>, series: &EchoSeries) -> Result<()> {
    write_raster(path, &complex_stack_to_raster_f32(&series.data))
}

pub fn read_series(path: impl AsRef<Path>, protocol: AcquisitionProtocol) -> Result<EchoSeries> {
    let data = raster_to_complex_stack(&read_raster(path)?)?;
    EchoSeries::new(data, protocol)
}

/// Export a real image as binary PGM (P5, 8-bit).
///
/// Window/level mapping: values are clipped to `[window.0, window.1]` and
/// mapped linearly onto 0..=255 (the window maps to full scale).
pub fn write_pgm(path: impl AsRef<Path>, image: &Array2<f64>, window: (f64, f64)) -> Result<()> {
    let path = path.as_ref();
    let (lo, hi) = window;
    if !(hi > lo) {
        return Err(Error::validation(format!(
            "pgm window must satisfy hi > lo, got ({lo}, {hi})"
        )));
    }
    let (h, w) = image.dim();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    write!(out, "P5\n{w} {h}\n255\n").map_err(io_err)?;
    let scale = 255.0 / (hi - lo);
    for row in image.rows() {
        for &v in row {
            let g = ((v - lo) * scale).round().clamp(0.0, 255.0) as u8;
            out.write_all(&[g]).map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}
