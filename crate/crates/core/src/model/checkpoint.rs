//! Binary checkpoint layout shared by models and deletion operators:
//!
//! ```text
//! "GNND" | version: u16 | count: u32 | count × (rows: u32, cols: u32) | f64 data, row-major
//! ```
//!
//! All integers and floats are little-endian. Each payload kind appends its
//! own trailing section after the matrices.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::model::GnnModel;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"GNND";
pub const FORMAT_VERSION: u16 = 1;

pub fn write_matrices<W: Write>(w: &mut W, matrices: &[&Tensor]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&u32_of(matrices.len())?.to_le_bytes())?;
    for m in matrices {
        w.write_all(&u32_of(m.rows())?.to_le_bytes())?;
        w.write_all(&u32_of(m.cols())?.to_le_bytes())?;
    }
    for m in matrices {
        for x in m.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_matrices<R: Read>(r: &mut R) -> Result<Vec<Tensor>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
    }
    let version = read_u16(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(r)? as usize;
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        shapes.push((read_u32(r)? as usize, read_u32(r)? as usize));
    }
    let mut out = Vec::with_capacity(count);
    for (rows, cols) in shapes {
        let mut data = vec![0.0; rows * cols];
        for x in &mut data {
            *x = read_f64(r)?;
        }
        out.push(Tensor::from_vec(rows, cols, data)?);
    }
    Ok(out)
}

fn u32_of(x: usize) -> Result<u32> {
    u32::try_from(x).map_err(|_| Error::Checkpoint(format!("{x} does not fit in u32")))
}

pub(crate) fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub(crate) fn write_u32<W: Write>(w: &mut W, x: usize) -> Result<()> {
    w.write_all(&u32_of(x)?.to_le_bytes())?;
    Ok(())
}

/// Model payload: the layer weights, then one flag byte; a set flag is
/// followed by the head as a second matrix block.
pub fn save_model<W: Write>(w: &mut W, model: &GnnModel) -> Result<()> {
    let weights: Vec<&Tensor> = model.weights().iter().collect();
    write_matrices(w, &weights)?;
    match model.cls_head() {
        Some(h) => {
            w.write_all(&[1])?;
            write_matrices(w, &[h])
        }
        None => {
            w.write_all(&[0])?;
            Ok(())
        }
    }
}

pub fn load_model<R: Read>(r: &mut R) -> Result<GnnModel> {
    let weights = read_matrices(r)?;
    let head = match read_u8(r)? {
        0 => None,
        1 => read_matrices(r)?.into_iter().next(),
        other => return Err(Error::Checkpoint(format!("bad head flag {other}"))),
    };
    GnnModel::from_weights(weights, head)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_round_trips_bit_exactly() {
        let mut m = GnnModel::init(&[5, 4, 3], 7).unwrap();
        m.set_cls_head(Tensor::from_vec(3, 2, vec![0.1, -0.2, 1e-300, f64::MIN_POSITIVE, 3.0, -0.0]).unwrap())
            .unwrap();
        let mut buf = Vec::new();
        save_model(&mut buf, &m).unwrap();
        assert_eq!(&buf[..4], b"GNND");
        assert_eq!(u16::from_le_bytes([buf[4], buf[5]]), 1);
        assert_eq!(u32::from_le_bytes(buf[6..10].try_into().unwrap()), 2);
        let back = load_model(&mut buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn header_layout_is_fixed() {
        let t = Tensor::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        write_matrices(&mut buf, &[&t]).unwrap();
        let mut expected = b"GNND".to_vec();
        expected.extend_from_slice(&1u16.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&1.0f64.to_le_bytes());
        expected.extend_from_slice(&2.0f64.to_le_bytes());
        assert_eq!(buf, expected);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(matches!(read_matrices(&mut &b"XXXX\x01\x00"[..]), Err(Error::Checkpoint(_))));
        let mut buf = Vec::new();
        write_matrices(&mut buf, &[&Tensor::identity(2)]).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_matrices(&mut buf.as_slice()).is_err());
    }
}
