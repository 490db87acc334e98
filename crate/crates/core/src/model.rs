//! Model file format: one JSON header line describing the architecture,
//! followed by all parameters as a little-endian 32-bit float blob in
//! documented order (projection weight, projection bias, then per MLP layer
//! weight and bias).

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{DenseLayer, MlpParams, TrainedModel, TrainingStats};
use crate::error::{Error, Result};
use crate::featurizer::{FeatureStackConfig, LinearProjection};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelHeader {
    format_version: u32,
    feature: FeatureStackConfig,
    d_raw: usize,
    d_out: usize,
    hidden_widths: Vec<usize>,
    threshold: f64,
    seed: u64,
    stats: TrainingStats,
    param_count: usize,
}

fn push_params(blob: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        blob.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

/// Write a model file.
pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    let hidden_widths: Vec<usize> = model.mlp.layers[..model.mlp.layers.len() - 1]
        .iter()
        .map(|l| l.d_out)
        .collect();
    let param_count = model.projection.parameter_count() + model.mlp.parameter_count();
    let header = ModelHeader {
        format_version: MODEL_FORMAT_VERSION,
        feature: model.feature_cfg.clone(),
        d_raw: model.projection.d_in,
        d_out: model.projection.d_out,
        hidden_widths,
        threshold: model.threshold,
        seed: model.seed,
        stats: model.stats.clone(),
        param_count,
    };

    let mut blob = Vec::with_capacity(param_count * 4);
    push_params(&mut blob, &model.projection.weight);
    push_params(&mut blob, &model.projection.bias);
    for layer in &model.mlp.layers {
        push_params(&mut blob, &layer.weight);
        push_params(&mut blob, &layer.bias);
    }

    let mut file = std::fs::File::create(path)?;
    let header_json = serde_json::to_string(&header)?;
    file.write_all(header_json.as_bytes())?;
    file.write_all(b"\n")?;
    file.write_all(&blob)?;
    Ok(())
}

/// Read a model file written by [`save_model`].
pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let mut raw = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut raw)?;
    let newline = raw
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("model file has no header line".into()))?;
    let header: ModelHeader = serde_json::from_slice(&raw[..newline])?;
    if header.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported model format version {} (expected {})",
            header.format_version, MODEL_FORMAT_VERSION
        )));
    }
    let blob = &raw[newline + 1..];
    if blob.len() != header.param_count * 4 {
        return Err(Error::Format(format!(
            "parameter blob has {} bytes, header implies {}",
            blob.len(),
            header.param_count * 4
        )));
    }

    let mut offset = 0usize;
    let mut take = |count: usize| -> Vec<f64> {
        let out = blob[offset..offset + count * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        offset += count * 4;
        out
    };

    let projection = LinearProjection {
        d_in: header.d_raw,
        d_out: header.d_out,
        weight: take(header.d_out * header.d_raw),
        bias: take(header.d_out),
    };

    let mut layers = Vec::new();
    let mut d_in = header.d_out + 1;
    for &d_out in header.hidden_widths.iter().chain(std::iter::once(&1usize)) {
        layers.push(DenseLayer {
            d_in,
            d_out,
            weight: take(d_out * d_in),
            bias: take(d_out),
        });
        d_in = d_out;
    }
    debug_assert_eq!(offset, blob.len());

    Ok(TrainedModel {
        projection,
        mlp: MlpParams { layers },
        feature_cfg: header.feature,
        threshold: header.threshold,
        seed: header.seed,
        stats: header.stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{train, TrainConfig, TrainingSet};
    use rand::{Rng, SeedableRng};

    fn toy_model() -> TrainedModel {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut set = TrainingSet { d_raw: 5, ..Default::default() };
        for i in 0..40 {
            set.priors.push(rng.random());
            for _ in 0..5 {
                set.raw.push(rng.random_range(-1.0..1.0));
            }
            set.labels.push((i % 2) as u8);
        }
        let config = TrainConfig {
            epochs: 2,
            minibatch: 8,
            hidden_widths: vec![6, 4],
            d_out: 3,
            learning_rate: 0.05,
            ..Default::default()
        };
        train(&set, &config).unwrap()
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.spx");
        let model = toy_model();
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        // training quantizes parameters to f32, so the reload is lossless
        assert_eq!(loaded.projection, model.projection);
        assert_eq!(loaded.mlp, model.mlp);
        assert_eq!(loaded.threshold, model.threshold);
        assert_eq!(loaded.stats, model.stats);

        // classification outputs are bitwise identical
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<f64> = (0..6 * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = crate::classifier::mlp_forward(&model.mlp, &rows, 4).unwrap();
        let b = crate::classifier::mlp_forward(&loaded.mlp, &rows, 4).unwrap();
        assert_eq!(a, b);

        // and saving the loaded model reproduces the file byte for byte
        let path2 = dir.path().join("model2.spx");
        save_model(&loaded, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn load_rejects_truncated_blob() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.spx");
        let model = toy_model();
        save_model(&model, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format(_))));
    }

    #[test]
    fn load_rejects_wrong_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.spx");
        let model = toy_model();
        save_model(&model, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let newline = bytes.iter().position(|&b| b == b'\n').unwrap();
        let text = String::from_utf8(bytes[..newline].to_vec()).unwrap();
        let patched = text.replace("\"format_version\":1", "\"format_version\":99");
        let mut out = patched.into_bytes();
        out.push(b'\n');
        out.extend_from_slice(&bytes[newline + 1..]);
        std::fs::write(&path, out).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format(_))));
    }
}
