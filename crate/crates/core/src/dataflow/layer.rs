use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::Precision;

#[derive(Debug, Error)]
pub enum LayerError {
    #[error("layer {name}: {reason}")]
    Invalid { name: String, reason: String },
    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One convolution layer: NCHW input with N = 1, square kernel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub precision: Precision,
}

impl LayerSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        cin: usize,
        cout: usize,
        h: usize,
        w: usize,
        k: usize,
        stride: usize,
        pad: usize,
        precision: Precision,
    ) -> Self {
        LayerSpec {
            name: name.into(),
            cin,
            cout,
            h,
            w,
            k,
            stride,
            pad,
            precision,
        }
    }

    /// Floor division: trailing inputs that do not fill a window are dropped.
    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.pad - self.k) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.pad - self.k) / self.stride + 1
    }

    /// Packed input channels (`cin` rounded up to `ic_par`).
    pub fn groups(&self) -> usize {
        self.cin.div_ceil(self.precision.ic_par())
    }

    /// Useful multiply-accumulates, excluding channel padding.
    pub fn macs(&self) -> u64 {
        (self.cout * self.out_h() * self.out_w() * self.cin * self.k * self.k) as u64
    }

    pub fn with_precision(&self, precision: Precision) -> Self {
        LayerSpec {
            precision,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), LayerError> {
        let bad = |reason: &str| {
            Err(LayerError::Invalid {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if self.cin == 0 || self.cout == 0 {
            return bad("channel counts must be positive");
        }
        if self.k == 0 || self.stride == 0 {
            return bad("kernel size and stride must be positive");
        }
        if self.h == 0 || self.w == 0 {
            return bad("input dims must be positive");
        }
        if self.pad >= self.k {
            return bad("padding must be smaller than the kernel");
        }
        if self.h + 2 * self.pad < self.k || self.w + 2 * self.pad < self.k {
            return bad("kernel larger than padded input");
        }
        if self.h > u16::MAX as usize || self.w > u16::MAX as usize || self.cin > 1 << 20 || self.cout > 1 << 20 {
            return bad("dimensions too large");
        }
        Ok(())
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}x{}x{} -> {} k{} s{} p{} {}b",
            self.name,
            self.cin,
            self.h,
            self.w,
            self.cout,
            self.k,
            self.stride,
            self.pad,
            self.precision.bits()
        )
    }
}

#[derive(Debug, Deserialize)]
struct Record {
    name: String,
    #[serde(default)]
    src: Option<String>,
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    #[serde(default)]
    precision: Option<u32>,
}

/// A parsed layer row plus its optional `src` column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerRecord {
    pub layer: LayerSpec,
    pub src: Option<String>,
}

/// Parses a layer table: CSV with a header naming the `LayerSpec` fields,
/// optional `src` and `precision` columns, `#` comment lines.
/// Rows without a precision take `default_precision`.
pub fn parse_layer_records(text: &str, default_precision: Precision) -> Result<Vec<LayerRecord>, LayerError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in rdr.deserialize::<Record>() {
        let r = row?;
        let precision = match r.precision {
            None => default_precision,
            Some(b) => Precision::from_bits(b).ok_or_else(|| LayerError::Parse {
                line: out.len() as u64 + 2,
                reason: format!("unsupported precision {b}"),
            })?,
        };
        let layer = LayerSpec::new(r.name, r.cin, r.cout, r.h, r.w, r.k, r.stride, r.pad, precision);
        layer.validate()?;
        out.push(LayerRecord {
            layer,
            src: r.src.filter(|s| !s.is_empty()),
        });
    }
    Ok(out)
}

pub fn parse_layers(text: &str, default_precision: Precision) -> Result<Vec<LayerSpec>, LayerError> {
    Ok(parse_layer_records(text, default_precision)?
        .into_iter()
        .map(|r| r.layer)
        .collect())
}

/// Arithmetic shift right, then saturate to `out`'s signed range.
pub fn requantize(acc: i32, out: Precision, shift: u32) -> i16 {
    debug_assert!(shift < 32);
    (acc >> shift.min(31)).clamp(out.min_value(), out.max_value()) as i16
}

/// Per-layer shift: scale a sum of `cin * k * k` products back to the
/// operand width, assuming random-sign terms (growth ~ sqrt of the count).
pub fn default_shift(layer: &LayerSpec) -> u32 {
    let n = (layer.cin * layer.k * layer.k) as u64;
    let bitlen = 64 - n.leading_zeros();
    ((layer.precision.bits() - 1) + bitlen.div_ceil(2)).min(31)
}
