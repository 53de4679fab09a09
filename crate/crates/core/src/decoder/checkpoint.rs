use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layers::LayerSpec;
use super::model::{DecoderModel, RunningStats};
use crate::error::{Error, Result};
use crate::frst::{read_real, tensor_write};
use crate::tensor::DenseTensor;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    input_shape: Vec<usize>,
    momentum: f64,
    layers: Vec<LayerSpec>,
    /// Tensor files per layer, in parameter order.
    params: Vec<Vec<String>>,
    /// Running mean and variance files of batch-norm layers.
    running: Vec<Option<(String, String)>>,
}

const FORMAT: &str = "frscatter-decoder-1";

/// Writes `manifest.json` and one FRST file per tensor into `dir`.
pub fn save_checkpoint(model: &DecoderModel, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let mut params = Vec::new();
    for (i, (layer, ps)) in model.layers().iter().zip(model.params()).enumerate() {
        let mut names = Vec::new();
        for (j, (shape, p)) in layer.param_shapes().into_iter().zip(ps).enumerate() {
            let name = format!("layer{i:02}_p{j}.frst");
            tensor_write(&DenseTensor::new(shape, p.clone())?, dir.join(&name))?;
            names.push(name);
        }
        params.push(names);
    }
    let mut running = Vec::new();
    for (i, stats) in model.running_stats().iter().enumerate() {
        running.push(match stats {
            Some(s) => {
                let (m, v) = (format!("layer{i:02}_mean.frst"), format!("layer{i:02}_var.frst"));
                tensor_write(&DenseTensor::new(vec![s.mean.len()], s.mean.clone())?, dir.join(&m))?;
                tensor_write(&DenseTensor::new(vec![s.var.len()], s.var.clone())?, dir.join(&v))?;
                Some((m, v))
            }
            None => None,
        });
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        input_shape: model.input_shape().to_vec(),
        momentum: model.momentum,
        layers: model.layers().to_vec(),
        params,
        running,
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::file(&path, e))
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<DecoderModel> {
    let dir = dir.as_ref();
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::file(&path, e))?;
    let m: Manifest = serde_json::from_str(&text)?;
    if m.format != FORMAT {
        return Err(Error::Config(format!("unknown checkpoint format {:?}", m.format)));
    }
    let params = m
        .params
        .iter()
        .map(|names| names.iter().map(|n| Ok(read_real(dir.join(n))?.into_data())).collect())
        .collect::<Result<Vec<Vec<Vec<f64>>>>>()?;
    let mut model = DecoderModel::with_params(m.layers, m.input_shape, params)?;
    model.momentum = m.momentum;
    if m.running.len() != model.layers().len() {
        return Err(Error::shape("running statistics list does not match the layers"));
    }
    for (slot, files) in model.running_stats_mut().iter_mut().zip(m.running) {
        match (slot, files) {
            (Some(s), Some((mean, var))) => {
                let mean = read_real(dir.join(mean))?.into_data();
                let var = read_real(dir.join(var))?.into_data();
                if mean.len() != s.mean.len() || var.len() != s.var.len() {
                    return Err(Error::shape("running statistics have the wrong length"));
                }
                *s = RunningStats { mean, var };
            }
            (None, None) => {}
            _ => return Err(Error::shape("running statistics do not match the layers")),
        }
    }
    Ok(model)
}
