//! Flat binary tensor container.
//!
//! A file is a sequence of records, each
//! `"TNSR" | u32 rank | rank × u32 dim | product(dims) × f64`, all little-endian.

use std::io::Write;

use nalgebra::DMatrix;
use thiserror::Error;

pub const TENSOR_MAGIC: &[u8; 4] = b"TNSR";
const MAX_RANK: u32 = 8;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("bad tensor record at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },
    #[error("expected a rank-{expected} tensor, got dims {got:?}")]
    Rank { expected: usize, got: Vec<u32> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u32>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<u32>, data: Vec<f64>) -> Option<Self> {
        let n = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))?;
        (n == data.len()).then_some(Self { dims, data })
    }

    /// Row-major rank-2 tensor from a matrix.
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            data.extend(m.row(r).iter());
        }
        Self {
            dims: vec![m.nrows() as u32, m.ncols() as u32],
            data,
        }
    }

    pub fn from_vector(v: &[f64]) -> Self {
        Self {
            dims: vec![v.len() as u32],
            data: v.to_vec(),
        }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>, TensorError> {
        match self.dims[..] {
            [r, c] => Ok(DMatrix::from_row_slice(r as usize, c as usize, &self.data)),
            _ => Err(TensorError::Rank {
                expected: 2,
                got: self.dims.clone(),
            }),
        }
    }

    pub fn to_vector(&self) -> Result<Vec<f64>, TensorError> {
        match self.dims[..] {
            [_] => Ok(self.data.clone()),
            _ => Err(TensorError::Rank {
                expected: 1,
                got: self.dims.clone(),
            }),
        }
    }

    /// Splits a rank-3 tensor along its first axis into row-major matrices.
    pub fn to_matrices(&self) -> Result<Vec<DMatrix<f64>>, TensorError> {
        let [n, r, c] = self.dims[..] else {
            return Err(TensorError::Rank {
                expected: 3,
                got: self.dims.clone(),
            });
        };
        let step = r as usize * c as usize;
        Ok((0..n as usize)
            .map(|i| DMatrix::from_row_slice(r as usize, c as usize, &self.data[i * step..(i + 1) * step]))
            .collect())
    }

    /// Stacks equally-shaped matrices into a rank-3 tensor.
    pub fn from_matrices(ms: &[DMatrix<f64>]) -> Self {
        let (r, c) = ms.first().map(|m| m.shape()).unwrap_or((0, 0));
        let mut data = Vec::with_capacity(ms.len() * r * c);
        for m in ms {
            data.extend(Tensor::from_matrix(m).data);
        }
        Self {
            dims: vec![ms.len() as u32, r as u32, c as u32],
            data,
        }
    }
}

pub fn read_tensors(bytes: &[u8]) -> Result<Vec<Tensor>, TensorError> {
    let mut out = Vec::new();
    let mut pos = 0usize;
    let fail = |offset: usize, reason: &str| TensorError::Format {
        offset,
        reason: reason.to_string(),
    };
    while pos < bytes.len() {
        let start = pos;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8], TensorError> {
            let end = pos
                .checked_add(n)
                .filter(|&e| e <= bytes.len())
                .ok_or_else(|| fail(start, "truncated"))?;
            let s = &bytes[*pos..end];
            *pos = end;
            Ok(s)
        };
        let u32_at = |pos: &mut usize| -> Result<u32, TensorError> {
            let b = take(pos, 4)?;
            Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        };
        if take(&mut pos, 4)? != TENSOR_MAGIC {
            return Err(fail(start, "missing TNSR magic"));
        }
        let rank = u32_at(&mut pos)?;
        if rank > MAX_RANK {
            return Err(fail(start, "rank too large"));
        }
        let dims = (0..rank).map(|_| u32_at(&mut pos)).collect::<Result<Vec<_>, _>>()?;
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
            .ok_or_else(|| fail(start, "element count overflows"))?;
        let payload = take(&mut pos, n.checked_mul(8).ok_or_else(|| fail(start, "payload overflows"))?)?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        out.push(Tensor { dims, data });
    }
    Ok(out)
}

pub fn write_tensor<W: Write>(mut w: W, t: &Tensor) -> std::io::Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&(t.dims.len() as u32).to_le_bytes())?;
    for d in &t.dims {
        w.write_all(&d.to_le_bytes())?;
    }
    for x in &t.data {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_tensors<'a, W: Write>(mut w: W, ts: impl IntoIterator<Item = &'a Tensor>) -> std::io::Result<()> {
    for t in ts {
        write_tensor(&mut w, t)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_bit_exact() {
        let t = Tensor::new(vec![1, 2], vec![1.0, -2.5]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        let mut expected = b"TNSR".to_vec();
        expected.extend(2u32.to_le_bytes());
        expected.extend(1u32.to_le_bytes());
        expected.extend(2u32.to_le_bytes());
        expected.extend(1.0f64.to_le_bytes());
        expected.extend((-2.5f64).to_le_bytes());
        assert_eq!(buf, expected);
        assert_eq!(read_tensors(&buf).unwrap(), vec![t]);
    }

    #[test]
    fn matrix_roundtrip_row_major() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let t = Tensor::from_matrix(&m);
        assert_eq!(t.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(t.to_matrix().unwrap(), m);
        let stack = Tensor::from_matrices(&[m.clone(), m.clone() * 2.0]);
        assert_eq!(stack.to_matrices().unwrap()[1], m * 2.0);
    }

    #[test]
    fn rejects_malformed() {
        assert!(read_tensors(b"TNSX\0\0\0\0").is_err());
        assert!(read_tensors(b"TNSR\x01\0\0\0\x02\0\0\0").is_err());
        let mut huge = b"TNSR\x02\0\0\0".to_vec();
        huge.extend(u32::MAX.to_le_bytes());
        huge.extend(u32::MAX.to_le_bytes());
        assert!(read_tensors(&huge).is_err());
        assert!(read_tensors(b"").unwrap().is_empty());
    }
}
