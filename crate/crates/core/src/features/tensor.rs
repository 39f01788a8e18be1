use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Canonical axis order of a feature tensor.
pub const AXES: [&str; 6] = ["fold", "batch", "channel", "depth", "height", "width"];

/// One fold's activations, row-major over (batch, channel, depth, height, width).
#[derive(Debug, Clone, PartialEq)]
pub struct FoldTensor {
    pub shape: [usize; 5],
    pub data: Vec<f32>,
}

impl FoldTensor {
    pub fn new(shape: [usize; 5], data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n == 0 || data.len() != n {
            return Err(Error::InvalidArgument(format!(
                "fold tensor shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(FoldTensor { shape, data })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub scan_id: String,
    folds: Vec<FoldTensor>,
}

impl FeatureTensor {
    pub fn new(scan_id: impl Into<String>, folds: Vec<FoldTensor>) -> Result<Self> {
        let first = folds
            .first()
            .ok_or(Error::EmptyInput("feature tensor needs at least one fold"))?
            .shape;
        if let Some(bad) = folds.iter().find(|f| f.shape != first) {
            return Err(Error::InvalidArgument(format!(
                "inconsistent fold shapes: {first:?} vs {:?}",
                bad.shape
            )));
        }
        Ok(FeatureTensor {
            scan_id: scan_id.into(),
            folds,
        })
    }

    pub fn folds(&self) -> &[FoldTensor] {
        &self.folds
    }

    /// Shape without the fold axis.
    pub fn shape(&self) -> [usize; 5] {
        self.folds[0].shape
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub scan_id: String,
    pub values: Vec<f64>,
}

/// Averages over folds, then over the batch axis, and flattens the rest
/// channel-major (channel, depth, height, width).
pub fn reduce_tensor(t: &FeatureTensor) -> FeatureVector {
    let [batch, c, d, h, w] = t.shape();
    let len = c * d * h * w;
    let mut acc = vec![0f64; len];
    for fold in &t.folds {
        for b in 0..batch {
            for (a, &v) in acc.iter_mut().zip(&fold.data[b * len..(b + 1) * len]) {
                *a += v as f64;
            }
        }
    }
    let denom = (t.folds.len() * batch) as f64;
    acc.iter_mut().for_each(|a| *a /= denom);
    FeatureVector {
        scan_id: t.scan_id.clone(),
        values: acc,
    }
}

/// Sidecar JSON describing a raw little-endian float32 payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub scan_id: String,
    /// Axis names in storage order (last varies fastest); any subset of
    /// [`AXES`], missing axes have size 1.
    pub axes: Vec<String>,
    pub shape: Vec<usize>,
    /// Payload file relative to the descriptor; defaults to the descriptor
    /// name with `.json` replaced by `.f32`.
    #[serde(default)]
    pub data: Option<String>,
    #[serde(default = "default_dtype")]
    pub dtype: String,
}

fn default_dtype() -> String {
    "float32".into()
}

/// Loads a feature tensor from its JSON descriptor and payload.
pub fn load_feature_tensor(descriptor: impl AsRef<Path>) -> Result<FeatureTensor> {
    let path = descriptor.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let desc: FeatureDescriptor = serde_json::from_str(&text)?;
    let bad = |m: String| Error::schema(path, 0, m);
    if desc.dtype != "float32" {
        return Err(bad(format!("dtype {:?} unsupported, expected float32", desc.dtype)));
    }
    if desc.axes.len() != desc.shape.len() {
        return Err(bad("axes and shape lengths differ".into()));
    }
    // position of each stored axis in the canonical order
    let mut canon_of = Vec::with_capacity(desc.axes.len());
    let mut full = [1usize; 6];
    for (name, &size) in desc.axes.iter().zip(&desc.shape) {
        let k = AXES
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| bad(format!("unknown axis {name:?}")))?;
        if canon_of.contains(&k) {
            return Err(bad(format!("axis {name:?} repeated")));
        }
        if size == 0 {
            return Err(bad(format!("axis {name:?} has size 0")));
        }
        canon_of.push(k);
        full[k] = size;
    }
    let data_path = match &desc.data {
        Some(d) => path.parent().unwrap_or(Path::new(".")).join(d),
        None => path.with_extension("f32"),
    };
    let bytes = std::fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let n: usize = full.iter().product();
    if bytes.len() != 4 * n {
        return Err(Error::schema(
            &data_path,
            0,
            format!("payload has {} bytes, shape needs {}", bytes.len(), 4 * n),
        ));
    }
    let stored: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();

    // canonical strides (row-major over AXES)
    let mut strides = [0usize; 6];
    let mut s = 1;
    for k in (0..6).rev() {
        strides[k] = s;
        s *= full[k];
    }
    let mut canonical = vec![0f32; n];
    let mut idx = vec![0usize; desc.shape.len()];
    for &v in &stored {
        let dst: usize = idx.iter().zip(&canon_of).map(|(&i, &k)| i * strides[k]).sum();
        canonical[dst] = v;
        for a in (0..idx.len()).rev() {
            idx[a] += 1;
            if idx[a] < desc.shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }

    let fold_len = n / full[0];
    let shape = [full[1], full[2], full[3], full[4], full[5]];
    let folds = canonical
        .chunks_exact(fold_len)
        .map(|c| FoldTensor::new(shape, c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    FeatureTensor::new(desc.scan_id, folds)
}
