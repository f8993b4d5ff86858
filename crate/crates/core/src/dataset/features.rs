//! Per-sample feature files.
//!
//! ```text
//! offset  size   field
//! 0       4      magic "EMIF"
//! 4       4      version (u32 LE, 1)
//! 8       4      frame count T (u32 LE, >= 1)
//! 12      4      width (u32 LE)
//! 16      4·T·W  frames, row-major, f32 LE
//! ```
//!
//! Values are stored as `f32` and widened to `f64` on read.

use std::fs;
use std::path::Path;

use crate::binio::ByteReader;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const FEATURE_MAGIC: [u8; 4] = *b"EMIF";
pub const FEATURE_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

pub fn write_features(path: &Path, frames: &Matrix) -> Result<()> {
    if frames.rows() == 0 {
        return Err(Error::InvalidArgument(format!(
            "refusing to write zero-frame feature file {}",
            path.display()
        )));
    }
    let t = u32::try_from(frames.rows())
        .map_err(|_| Error::InvalidArgument("too many frames".into()))?;
    let w = u32::try_from(frames.cols())
        .map_err(|_| Error::InvalidArgument("feature width too large".into()))?;
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * frames.len());
    buf.extend_from_slice(&FEATURE_MAGIC);
    buf.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    buf.extend_from_slice(&t.to_le_bytes());
    buf.extend_from_slice(&w.to_le_bytes());
    for &v in frames.data() {
        let s = v as f32;
        if !s.is_finite() {
            return Err(Error::NonFinite {
                context: format!("feature value {v} for {}", path.display()),
            });
        }
        buf.extend_from_slice(&s.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<Matrix> {
    read_features_inner(path, None)
}

/// Reads a feature file and rejects any width other than `width`.
pub fn read_features_with_width(path: &Path, width: usize) -> Result<Matrix> {
    read_features_inner(path, Some(width))
}

fn read_features_inner(path: &Path, expected_width: Option<usize>) -> Result<Matrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = ByteReader::new(path, &bytes);
    let magic = r.take(4, "magic")?;
    if magic != FEATURE_MAGIC {
        return Err(r.error(0, format!("bad magic {magic:?}, expected \"EMIF\"")));
    }
    let version = r.u32("version")?;
    if version != FEATURE_VERSION {
        return Err(r.error(4, format!("unsupported feature file version {version}")));
    }
    let t = r.u32("frame count")? as usize;
    if t == 0 {
        return Err(r.error(8, "zero-frame feature file"));
    }
    let w = r.u32("width")? as usize;
    if let Some(exp) = expected_width {
        if w != exp {
            return Err(r.error(12, format!("width {w}, expected {exp}")));
        }
    }
    if w == 0 {
        return Err(r.error(12, "zero width"));
    }
    let n = t
        .checked_mul(w)
        .ok_or_else(|| r.error(8, "frame count × width overflows"))?;
    if r.remaining() != 4 * n {
        return Err(r.error(
            HEADER_LEN as u64,
            format!("payload is {} bytes, header implies {}", r.remaining(), 4 * n),
        ));
    }
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        let at = r.offset();
        let v = r.f32("frame data")?;
        if !v.is_finite() {
            return Err(r.error(at, "non-finite value"));
        }
        data.push(v as f64);
    }
    Matrix::from_vec(t, w, data)
}
