//! Model and softmax-field persistence.
//!
//! Models are JSON weight files with shape-tagged, little-endian base64
//! f64 arrays. Softmax fields are stored as PFM stacks, one grayscale PFM
//! per class plane.

use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{CueError, Result};
use crate::experts::mlp::{MlpModel, MlpSpec, SoftmaxField};
use crate::io::{read_pfm, write_pfm};
use crate::raster::{ColorSpace, RasterImage};

#[derive(Serialize, Deserialize)]
struct Tensor {
    rows: usize,
    cols: usize,
    /// Little-endian f64 values, base64 encoded.
    data: String,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    spec: MlpSpec,
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
}

fn encode(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    B64.encode(bytes)
}

fn decode(tensor: &Tensor) -> Result<Vec<f64>> {
    let bytes = B64
        .decode(&tensor.data)
        .map_err(|e| CueError::Schema(format!("bad base64 in model file: {e}")))?;
    if bytes.len() != tensor.rows * tensor.cols * 8 {
        return Err(CueError::Schema(format!(
            "tensor payload is {} bytes, expected {}x{} f64",
            bytes.len(),
            tensor.rows,
            tensor.cols
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    let file = ModelFile {
        spec: model.spec.clone(),
        weights: model
            .weights
            .iter()
            .enumerate()
            .map(|(l, w)| Tensor {
                rows: model.spec.layer_widths[l + 1],
                cols: model.spec.layer_widths[l],
                data: encode(w),
            })
            .collect(),
        biases: model
            .biases
            .iter()
            .enumerate()
            .map(|(l, b)| Tensor {
                rows: model.spec.layer_widths[l + 1],
                cols: 1,
                data: encode(b),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, json + "\n").map_err(|e| CueError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    if !path.exists() {
        return Err(CueError::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| CueError::io(path, e))?;
    let file: ModelFile = serde_json::from_str(&text)?;
    file.spec.validate()?;
    let n_layers = file.spec.layer_widths.len() - 1;
    if file.weights.len() != n_layers || file.biases.len() != n_layers {
        return Err(CueError::Schema(format!(
            "model file holds {} weight tensors for {} layers",
            file.weights.len(),
            n_layers
        )));
    }
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..n_layers {
        let (fan_in, fan_out) = (file.spec.layer_widths[l], file.spec.layer_widths[l + 1]);
        if file.weights[l].rows != fan_out || file.weights[l].cols != fan_in {
            return Err(CueError::Schema(format!(
                "layer {l} weight tensor is {}x{}, spec wants {}x{}",
                file.weights[l].rows, file.weights[l].cols, fan_out, fan_in
            )));
        }
        weights.push(decode(&file.weights[l])?);
        biases.push(decode(&file.biases[l])?);
    }
    Ok(MlpModel {
        spec: file.spec,
        weights,
        biases,
    })
}

/// File names of a softmax stack for an item stem: one PFM per class.
pub fn stack_paths(dir: &Path, stem: &str, k: usize) -> Vec<PathBuf> {
    (0..k)
        .map(|c| dir.join(format!("{stem}_softmax_c{c:02}.pfm")))
        .collect()
}

pub fn save_softmax_stack(field: &SoftmaxField, dir: &Path, stem: &str) -> Result<()> {
    let n = field.height * field.width;
    for (c, path) in stack_paths(dir, stem, field.k).into_iter().enumerate() {
        let plane: Vec<f64> = (0..n).map(|i| field.data[i * field.k + c]).collect();
        let img = RasterImage::new(ColorSpace::Gray, field.height, field.width, plane)?;
        write_pfm(&img, &path)?;
    }
    Ok(())
}

pub fn load_softmax_stack(dir: &Path, stem: &str, k: usize) -> Result<SoftmaxField> {
    let mut planes = Vec::with_capacity(k);
    for path in stack_paths(dir, stem, k) {
        planes.push(read_pfm(&path)?);
    }
    let (h, w) = (planes[0].height(), planes[0].width());
    let n = h * w;
    let mut data = vec![0.0; n * k];
    for (c, plane) in planes.iter().enumerate() {
        if plane.height() != h || plane.width() != w {
            return Err(CueError::ShapeMismatch(
                "softmax planes disagree on dimensions".into(),
            ));
        }
        for i in 0..n {
            data[i * k + c] = plane.plane(0)[i];
        }
    }
    Ok(SoftmaxField {
        height: h,
        width: w,
        k,
        data,
    })
}
