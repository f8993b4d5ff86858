//! Checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | field                                   |
//! |-------|-----------------------------------------|
//! | 4     | magic `SEQF`                            |
//! | 4     | format version (`u32`, currently 1)     |
//! | 4     | `input_dim` (`u32`)                     |
//! | 4     | `hidden_dim` (`u32`)                    |
//! | 4     | `mlp_hidden_dim` (`u32`)                |
//! | 1     | `use_global_vector` (0 or 1)            |
//! | 4     | dropout numerator (`u32`)               |
//! | 4     | dropout denominator (`u32`, 1_000_000)  |
//! | 8·n   | parameters as `f64`                     |
//!
//! Parameters follow [`PARAM_ARRAY_NAMES`](super::PARAM_ARRAY_NAMES) order:
//! `lstm1.w lstm1.u lstm1.b lstm2.w lstm2.u lstm2.b mlp.w1 mlp.b1 mlp.w2
//! mlp.b2`, matrices row-major. `n` equals
//! [`param_count`](super::param_count); anything after the last parameter
//! is rejected.

use std::fs;
use std::path::Path;

use super::{param_count, FusionModelConfig, FusionModelParams};
use crate::binio::ByteReader;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SEQF";
pub const CHECKPOINT_VERSION: u32 = 1;
const DROPOUT_DEN: u32 = 1_000_000;

pub fn save_params(params: &FusionModelParams, config: &FusionModelConfig, path: &Path) -> Result<()> {
    params.check_shapes(config)?;
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::Config(format!("{what} {v} does not fit in u32")))
    };
    let mut buf = Vec::with_capacity(29 + 8 * param_count(config));
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&to_u32(config.input_dim, "input_dim")?.to_le_bytes());
    buf.extend_from_slice(&to_u32(config.hidden_dim, "hidden_dim")?.to_le_bytes());
    buf.extend_from_slice(&to_u32(config.mlp_hidden_dim, "mlp_hidden_dim")?.to_le_bytes());
    buf.push(config.use_global_vector as u8);
    let num = (config.dropout_rate * DROPOUT_DEN as f64).round() as u32;
    buf.extend_from_slice(&num.to_le_bytes());
    buf.extend_from_slice(&DROPOUT_DEN.to_le_bytes());
    for (_, arr) in params.arrays() {
        for v in arr {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint, returning the config stored in its header alongside
/// the parameters.
pub fn load_params(path: &Path) -> Result<(FusionModelConfig, FusionModelParams)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = ByteReader::new(path, &bytes);

    let magic = r.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(r.error(0, format!("bad magic {magic:?}, expected \"SEQF\"")));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(r.error(4, format!("unsupported checkpoint version {version}")));
    }
    let input_dim = r.u32("input_dim")? as usize;
    let hidden_dim = r.u32("hidden_dim")? as usize;
    let mlp_hidden_dim = r.u32("mlp_hidden_dim")? as usize;
    let flag_at = r.offset();
    let use_global_vector = match r.u8("use_global_vector")? {
        0 => false,
        1 => true,
        other => return Err(r.error(flag_at, format!("invalid global-vector flag {other}"))),
    };
    let den_at = r.offset() + 4;
    let num = r.u32("dropout numerator")?;
    let den = r.u32("dropout denominator")?;
    if den == 0 {
        return Err(r.error(den_at, "zero dropout denominator"));
    }
    let config = FusionModelConfig {
        input_dim,
        hidden_dim,
        mlp_hidden_dim,
        use_global_vector,
        dropout_rate: num as f64 / den as f64,
    };
    config
        .validate()
        .map_err(|e| r.error(8, format!("invalid config header: {e}")))?;

    let expected = param_count(&config);
    if r.remaining() != expected * 8 {
        return Err(r.error(
            r.offset(),
            format!(
                "payload is {} bytes, header implies {} parameters ({} bytes)",
                r.remaining(),
                expected,
                expected * 8
            ),
        ));
    }
    let mut params = FusionModelParams::zeros(&config);
    for (name, arr) in params.arrays_mut() {
        for v in arr.iter_mut() {
            *v = r.f64(name)?;
        }
    }
    r.expect_end()?;
    Ok((config, params))
}

/// Loads a checkpoint and requires its header to match `config`'s shapes.
pub fn load_params_for(path: &Path, config: &FusionModelConfig) -> Result<FusionModelParams> {
    let (stored, params) = load_params(path)?;
    if !stored.same_shapes(config) {
        return Err(Error::shape(
            "checkpoint header",
            format!(
                "input {} hidden {} mlp {} global {}",
                stored.input_dim, stored.hidden_dim, stored.mlp_hidden_dim, stored.use_global_vector
            ),
            format!(
                "input {} hidden {} mlp {} global {}",
                config.input_dim, config.hidden_dim, config.mlp_hidden_dim, config.use_global_vector
            ),
        ));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Rng;

    fn tiny() -> FusionModelConfig {
        FusionModelConfig {
            input_dim: 5,
            hidden_dim: 3,
            mlp_hidden_dim: 4,
            use_global_vector: true,
            dropout_rate: 0.1,
        }
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let cfg = tiny();
        let params = FusionModelParams::init(&cfg, &mut Rng::new(1)).unwrap();
        save_params(&params, &cfg, &path).unwrap();
        let (cfg2, loaded) = load_params(&path).unwrap();
        assert!(cfg2.same_shapes(&cfg));
        assert_eq!(cfg2.dropout_rate, 0.1);
        assert!(loaded.bit_eq(&params));

        let len = fs::metadata(&path).unwrap().len() as usize;
        assert_eq!(len, 29 + 8 * param_count(&cfg));
    }

    #[test]
    fn wrong_header_is_shape_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let cfg = tiny();
        let params = FusionModelParams::init(&cfg, &mut Rng::new(1)).unwrap();
        save_params(&params, &cfg, &path).unwrap();
        let other = FusionModelConfig {
            use_global_vector: false,
            ..cfg
        };
        assert!(matches!(load_params_for(&path, &other), Err(Error::Shape { .. })));
        assert!(load_params_for(&path, &cfg).is_ok());
    }

    #[test]
    fn truncated_and_corrupt_files_are_parse_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let cfg = tiny();
        let params = FusionModelParams::init(&cfg, &mut Rng::new(1)).unwrap();
        save_params(&params, &cfg, &path).unwrap();
        let bytes = fs::read(&path).unwrap();

        for cut in [0, 3, 10, 28, 29, bytes.len() - 1] {
            fs::write(&path, &bytes[..cut]).unwrap();
            assert!(matches!(load_params(&path), Err(Error::Parse { .. })), "cut {cut}");
        }

        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"XXXX");
        fs::write(&path, &bad).unwrap();
        let err = load_params(&path).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");

        let mut extra = bytes;
        extra.push(0);
        fs::write(&path, &extra).unwrap();
        assert!(matches!(load_params(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_params(Path::new("/nonexistent/x.ckpt")),
            Err(Error::Io { .. })
        ));
    }
}
