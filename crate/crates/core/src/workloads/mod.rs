//! Benchmark layer tables, deterministic tensors and the reference
//! convolution every simulated result is checked against.

mod tensor;

pub use tensor::{gen_tensor, gen_weights, Tensor, TENSOR_HEADER_BYTES, TENSOR_MAGIC};

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::dataflow::{parse_layer_records, requantize, LayerError, LayerSpec};
use crate::isa::Precision;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("value {value} outside the {precision:?} range")]
    OutOfRange { value: i32, precision: Precision },
    #[error("tensor format: {0}")]
    Format(String),
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("model {model}: {reason}")]
    Chain { model: String, reason: String },
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn check_shapes(input: &Tensor, weights: &[Tensor], layer: &LayerSpec) -> Result<(), WorkloadError> {
    if input.dims() != (layer.cin, layer.h, layer.w) {
        return Err(WorkloadError::ShapeMismatch(format!(
            "input {:?} vs layer {}x{}x{}",
            input.dims(),
            layer.cin,
            layer.h,
            layer.w
        )));
    }
    if weights.len() != layer.cout {
        return Err(WorkloadError::ShapeMismatch(format!(
            "{} kernels for cout {}",
            weights.len(),
            layer.cout
        )));
    }
    if let Some(k) = weights.iter().find(|t| t.dims() != (layer.cin, layer.k, layer.k)) {
        return Err(WorkloadError::ShapeMismatch(format!("kernel dims {:?}", k.dims())));
    }
    Ok(())
}

/// Raw 32-bit accumulators (wrapping), laid out `[cout][oh][ow]`.
pub fn conv2d_acc(input: &Tensor, weights: &[Tensor], layer: &LayerSpec) -> Result<Vec<i32>, WorkloadError> {
    check_shapes(input, weights, layer)?;
    let (oh, ow) = (layer.out_h(), layer.out_w());
    let mut out = vec![0i32; layer.cout * oh * ow];
    for (oc, kern) in weights.iter().enumerate() {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0i32;
                for ic in 0..layer.cin {
                    for ky in 0..layer.k {
                        for kx in 0..layer.k {
                            let iy = (oy * layer.stride + ky) as isize - layer.pad as isize;
                            let ix = (ox * layer.stride + kx) as isize - layer.pad as isize;
                            let a = input.get_padded(ic, iy, ix) as i32;
                            let w = kern.get(ic, ky, kx) as i32;
                            acc = acc.wrapping_add(a.wrapping_mul(w));
                        }
                    }
                }
                out[(oc * oh + oy) * ow + ox] = acc;
            }
        }
    }
    Ok(out)
}

/// Naive convolution followed by [`requantize`] at the layer precision.
pub fn conv2d_ref(input: &Tensor, weights: &[Tensor], layer: &LayerSpec, shift: u32) -> Result<Tensor, WorkloadError> {
    let acc = conv2d_acc(input, weights, layer)?;
    Ok(Tensor {
        c: layer.cout,
        h: layer.out_h(),
        w: layer.out_w(),
        precision: layer.precision,
        values: acc.into_iter().map(|a| requantize(a, layer.precision, shift)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModelSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

pub const MODEL_NAMES: [&str; 4] = ["VGG16", "ResNet18", "GoogLeNet", "SqueezeNet"];

fn model_text(name: &str) -> Option<(&'static str, &'static str)> {
    let t = match name.to_ascii_lowercase().as_str() {
        "vgg16" => ("VGG16", include_str!("../../../../data/models/vgg16.csv")),
        "resnet18" => ("ResNet18", include_str!("../../../../data/models/resnet18.csv")),
        "googlenet" => ("GoogLeNet", include_str!("../../../../data/models/googlenet.csv")),
        "squeezenet" => ("SqueezeNet", include_str!("../../../../data/models/squeezenet.csv")),
        _ => return None,
    };
    Some(t)
}

/// Conv layers of a benchmark network, at `precision`.
pub fn model_layers(name: &str, precision: Precision) -> Result<ModelSpec, WorkloadError> {
    let (canon, text) = model_text(name).ok_or_else(|| WorkloadError::UnknownModel(name.to_string()))?;
    parse_model(canon, text, precision)
}

/// Parses a model table and checks that every layer's input shape follows
/// from its `src` column.
///
/// `src` is `input`, the name of an earlier layer, or `a+b+...` for a
/// channel concat. A `/p` suffix inserts a 3x3 stride-2 ceil-mode max pool.
pub fn parse_model(name: &str, text: &str, precision: Precision) -> Result<ModelSpec, WorkloadError> {
    let recs = parse_layer_records(text, precision)?;
    let chain = |reason: String| WorkloadError::Chain {
        model: name.to_string(),
        reason,
    };
    let mut shapes: HashMap<String, (usize, usize, usize)> = HashMap::new();
    for rec in &recs {
        let l = &rec.layer;
        let src = rec.src.as_deref().unwrap_or("input");
        let (src, pooled) = match src.strip_suffix("/p") {
            Some(s) => (s, true),
            None => (src, false),
        };
        if src != "input" {
            let mut c = 0;
            let mut hw = None;
            for part in src.split('+') {
                let &(pc, ph, pw) = shapes
                    .get(part)
                    .ok_or_else(|| chain(format!("{}: unknown source {part:?}", l.name)))?;
                if hw.is_some_and(|d| d != (ph, pw)) {
                    return Err(chain(format!("{}: concat of mismatched maps", l.name)));
                }
                hw = Some((ph, pw));
                c += pc;
            }
            let (mut h, mut w) = hw.unwrap();
            if pooled {
                let pool = |n: usize| if n < 3 { 1 } else { (n - 3).div_ceil(2) + 1 };
                h = pool(h);
                w = pool(w);
            }
            if (c, h, w) != (l.cin, l.h, l.w) {
                return Err(chain(format!(
                    "{}: declared input {}x{}x{}, source gives {c}x{h}x{w}",
                    l.name, l.cin, l.h, l.w
                )));
            }
        }
        if shapes.insert(l.name.clone(), (l.cout, l.out_h(), l.out_w())).is_some() {
            return Err(chain(format!("duplicate layer name {}", l.name)));
        }
    }
    Ok(ModelSpec {
        name: name.to_string(),
        layers: recs.into_iter().map(|r| r.layer).collect(),
    })
}
