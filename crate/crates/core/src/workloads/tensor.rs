use std::io::{Read, Write};

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

use super::WorkloadError;
use crate::isa::Precision;

pub const TENSOR_MAGIC: [u8; 4] = *b"SPDT";
pub const TENSOR_HEADER_BYTES: usize = 16;

/// Dense CHW tensor of signed operands (N = 1).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tensor {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub precision: Precision,
    pub values: Vec<i16>,
}

impl Tensor {
    pub fn zeros(c: usize, h: usize, w: usize, precision: Precision) -> Self {
        Tensor {
            c,
            h,
            w,
            precision,
            values: vec![0; c * h * w],
        }
    }

    pub fn from_values(
        c: usize,
        h: usize,
        w: usize,
        precision: Precision,
        values: Vec<i16>,
    ) -> Result<Self, WorkloadError> {
        if values.len() != c * h * w {
            return Err(WorkloadError::ShapeMismatch(format!(
                "{} values for dims {c}x{h}x{w}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|&&v| !precision.contains(v as i32)) {
            return Err(WorkloadError::OutOfRange {
                value: *v as i32,
                precision,
            });
        }
        Ok(Tensor {
            c,
            h,
            w,
            precision,
            values,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.h + y) * self.w + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> i16 {
        self.values[self.idx(c, y, x)]
    }

    /// Value at a possibly out-of-bounds position; outside reads as 0.
    #[inline]
    pub fn get_padded(&self, c: usize, y: isize, x: isize) -> i16 {
        if y < 0 || x < 0 || y as usize >= self.h || x as usize >= self.w || c >= self.c {
            0
        } else {
            self.get(c, y as usize, x as usize)
        }
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: i16) {
        let i = self.idx(c, y, x);
        self.values[i] = v;
    }

    /// Index of the first differing value, if any.
    pub fn first_mismatch(&self, other: &Tensor) -> Option<usize> {
        if self.dims() != other.dims() {
            return Some(0);
        }
        self.values.iter().zip(&other.values).position(|(a, b)| a != b)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let eb = if self.precision == Precision::P16 { 2 } else { 1 };
        let mut out = Vec::with_capacity(TENSOR_HEADER_BYTES + self.values.len() * eb);
        out.extend_from_slice(&TENSOR_MAGIC);
        out.push(self.precision.bits() as u8);
        out.push(0);
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(self.c as u32).to_le_bytes());
        out.extend_from_slice(&(self.h as u16).to_le_bytes());
        out.extend_from_slice(&(self.w as u16).to_le_bytes());
        for &v in &self.values {
            if eb == 2 {
                out.extend_from_slice(&v.to_le_bytes());
            } else {
                out.push(v as i8 as u8);
            }
        }
        out
    }

    /// Parses the binary tensor format: a 16-byte header (`SPDT`, precision
    /// bits u8, two reserved zero fields, c u32, h u16, w u16, all
    /// little-endian) followed by c*h*w values as i8 (4/8-bit) or i16.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WorkloadError> {
        let bad = |m: &str| WorkloadError::Format(m.to_string());
        if bytes.len() < TENSOR_HEADER_BYTES {
            return Err(bad("truncated header"));
        }
        if bytes[0..4] != TENSOR_MAGIC {
            return Err(bad("bad magic"));
        }
        let precision = Precision::from_bits(bytes[4] as u32).ok_or_else(|| bad("bad precision code"))?;
        if bytes[5] != 0 || bytes[6] != 0 || bytes[7] != 0 {
            return Err(bad("reserved header bytes must be zero"));
        }
        let c = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let h = u16::from_le_bytes([bytes[12], bytes[13]]) as usize;
        let w = u16::from_le_bytes([bytes[14], bytes[15]]) as usize;
        let n = c
            .checked_mul(h)
            .and_then(|v| v.checked_mul(w))
            .ok_or_else(|| bad("dims overflow"))?;
        let body = &bytes[TENSOR_HEADER_BYTES..];
        let values: Vec<i16> = if precision == Precision::P16 {
            if body.len() != n.checked_mul(2).ok_or_else(|| bad("dims overflow"))? {
                return Err(bad("payload length does not match dims"));
            }
            body.chunks_exact(2).map(|b| i16::from_le_bytes([b[0], b[1]])).collect()
        } else {
            if body.len() != n {
                return Err(bad("payload length does not match dims"));
            }
            body.iter().map(|&b| b as i8 as i16).collect()
        };
        Tensor::from_values(c, h, w, precision, values)
    }

    pub fn dump<W: Write>(&self, mut w: W) -> Result<(), WorkloadError> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self, WorkloadError> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Tensor::from_bytes(&buf)
    }
}

/// Deterministic tensor: Xoshiro256** seeded through `seed_from_u64`; each
/// value is the top `bits` bits of one output word, read as two's complement.
pub fn gen_tensor(seed: u64, dims: (usize, usize, usize), precision: Precision) -> Tensor {
    let (c, h, w) = dims;
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let bits = precision.bits();
    let values = (0..c * h * w)
        .map(|_| ((rng.next_u64() as i64) >> (64 - bits)) as i16)
        .collect();
    Tensor {
        c,
        h,
        w,
        precision,
        values,
    }
}

/// `cout` kernels of shape `cin x k x k`, one seed per layer.
pub fn gen_weights(seed: u64, cout: usize, cin: usize, k: usize, precision: Precision) -> Vec<Tensor> {
    let all = gen_tensor(seed, (cout * cin, k, k), precision);
    all.values
        .chunks_exact(cin * k * k)
        .map(|v| Tensor {
            c: cin,
            h: k,
            w: k,
            precision,
            values: v.to_vec(),
        })
        .collect()
}
