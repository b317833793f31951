//! Model checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic    8 bytes  "WFTUNET1"
//! version  u32      currently 1
//! config   in, out, levels, base, image_size as u32; dropout_rate f64
//! n_convs  u32
//! convs    per conv: 4×u32 kernel dims, kernel f64s, u32 bias len, bias f64s
//! moments  first and second moment arrays, same layout as convs
//! step     u64 optimizer step counter
//! ```
//!
//! Round trips are bit-exact, so a reloaded model continues training
//! step-for-step identically.

use super::unet::{ConvParam, OptimizerState, UNetConfig, UNetModel};
use crate::error::{Error, Result};
use ndarray::{Array1, Array4};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"WFTUNET1";
const VERSION: u32 = 1;

pub fn save_checkpoint(model: &UNetModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);

    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    let c = &model.config;
    for v in [
        c.in_channels,
        c.out_channels,
        c.levels,
        c.base_features,
        c.image_size,
    ] {
        w.write_all(&(v as u32).to_le_bytes()).map_err(io_err)?;
    }
    w.write_all(&c.dropout_rate.to_le_bytes()).map_err(io_err)?;

    w.write_all(&(model.convs.len() as u32).to_le_bytes()).map_err(io_err)?;
    let write_params = |w: &mut BufWriter<File>, params: &[ConvParam]| -> Result<()> {
        for p in params {
            let (a, b, kh, kw) = p.kernels.dim();
            for d in [a, b, kh, kw] {
                w.write_all(&(d as u32).to_le_bytes()).map_err(io_err)?;
            }
            for v in p.kernels.iter() {
                w.write_all(&v.to_le_bytes()).map_err(io_err)?;
            }
            w.write_all(&(p.bias.len() as u32).to_le_bytes()).map_err(io_err)?;
            for v in p.bias.iter() {
                w.write_all(&v.to_le_bytes()).map_err(io_err)?;
            }
        }
        Ok(())
    };
    write_params(&mut w, &model.convs)?;
    write_params(&mut w, &model.optimizer.first_moment)?;
    write_params(&mut w, &model.optimizer.second_moment)?;
    w.write_all(&model.optimizer.step.to_le_bytes()).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<UNetModel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);

    let truncated = |what: &str| Error::Parse {
        path: path.into(),
        reason: format!("truncated {what}"),
    };
    let mut read_exact = |buf: &mut [u8], what: &str| -> Result<()> {
        r.read_exact(buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                truncated(what)
            } else {
                Error::io(path, e)
            }
        })
    };

    let mut magic = [0u8; 8];
    read_exact(&mut magic, "header")?;
    if &magic != MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            expected: "WFTUNET1",
        });
    }
    let mut u32buf = [0u8; 4];
    let mut f64buf = [0u8; 8];
    macro_rules! read_u32 {
        ($what:expr) => {{
            read_exact(&mut u32buf, $what)?;
            u32::from_le_bytes(u32buf) as usize
        }};
    }
    macro_rules! read_f64 {
        ($what:expr) => {{
            read_exact(&mut f64buf, $what)?;
            f64::from_le_bytes(f64buf)
        }};
    }

    let version = read_u32!("version");
    if version != VERSION as usize {
        return Err(Error::Parse {
            path: path.into(),
            reason: format!("unsupported checkpoint version {version}"),
        });
    }
    let config = UNetConfig {
        in_channels: read_u32!("config"),
        out_channels: read_u32!("config"),
        levels: read_u32!("config"),
        base_features: read_u32!("config"),
        image_size: read_u32!("config"),
        dropout_rate: read_f64!("config"),
    };
    config.validate().map_err(|e| Error::Parse {
        path: path.into(),
        reason: format!("invalid config in checkpoint: {e}"),
    })?;

    let n_convs = read_u32!("conv count");
    if n_convs != 4 * config.levels + 3 {
        return Err(Error::Parse {
            path: path.into(),
            reason: format!("checkpoint lists {n_convs} convolutions, topology needs {}", 4 * config.levels + 3),
        });
    }
    let mut read_params = |count: usize, what: &str| -> Result<Vec<ConvParam>> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let dims = [
                read_u32!(what),
                read_u32!(what),
                read_u32!(what),
                read_u32!(what),
            ];
            let len = dims.iter().product::<usize>();
            let mut kernels = Vec::with_capacity(len);
            for _ in 0..len {
                kernels.push(read_f64!(what));
            }
            let bias_len = read_u32!(what);
            let mut bias = Vec::with_capacity(bias_len);
            for _ in 0..bias_len {
                bias.push(read_f64!(what));
            }
            out.push(ConvParam {
                kernels: Array4::from_shape_vec((dims[0], dims[1], dims[2], dims[3]), kernels)
                    .map_err(|e| Error::Parse {
                        path: path.into(),
                        reason: e.to_string(),
                    })?,
                bias: Array1::from_vec(bias),
            });
        }
        Ok(out)
    };

    let convs = read_params(n_convs, "weights")?;
    let first_moment = read_params(n_convs, "first moments")?;
    let second_moment = read_params(n_convs, "second moments")?;
    let mut step_buf = [0u8; 8];
    read_exact(&mut step_buf, "step counter")?;
    let step = u64::from_le_bytes(step_buf);

    Ok(UNetModel {
        config,
        convs,
        optimizer: OptimizerState {
            first_moment,
            second_moment,
            step,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::unet::{build_unet, infer};
    use crate::rng::SeededRng;
    use ndarray::Array;
    use tempfile::tempdir;

    fn tiny() -> UNetModel {
        build_unet(
            &UNetConfig {
                in_channels: 2,
                out_channels: 2,
                levels: 1,
                base_features: 2,
                dropout_rate: 0.1,
                image_size: 8,
            },
            9,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_preserves_forward_output() {
        let model = tiny();
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(model, loaded);

        let mut rng = SeededRng::new(4);
        let input = Array::from_shape_fn((2, 8, 8), |_| rng.normal());
        let a = infer(&model, &input).unwrap();
        let b = infer(&loaded, &input).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truncated_checkpoint_is_error() {
        let model = tiny();
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&model, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn wrong_magic_is_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        std::fs::write(&path, b"NOTUNET1aaaaaaaaaaaaaaaa").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::BadMagic { .. })));
    }
}
