//! JSON checkpoints: `format_version`, `model_kind`, `config` and every
//! weight as a nested row-major list keyed by parameter name. Floats are
//! written in the shortest decimal form that parses back to the same bits.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    EmbeddingValues, ModelConfig, ModelError, ModelKind, TieredGae, TieredInput, TieredVgae,
};
use crate::numerics::{Matrix, ParamStore};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot access checkpoint: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("unsupported checkpoint format_version {found}, expected {FORMAT_VERSION}")]
    Version { found: u64 },
    #[error("weight `{name}` is {found:?} but the config implies {expected:?}")]
    Shape {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("checkpoint lacks weight `{0}`")]
    MissingWeight(String),
    #[error("checkpoint has weight `{0}` that the config does not define")]
    UnexpectedWeight(String),
    #[error(transparent)]
    Config(#[from] ModelError),
}

/// A trained model of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum TieredModel {
    Gae(TieredGae),
    Vgae(TieredVgae),
}

impl TieredModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TieredModel::Gae(_) => ModelKind::Gae,
            TieredModel::Vgae(_) => ModelKind::Vgae,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        match self {
            TieredModel::Gae(m) => m.config(),
            TieredModel::Vgae(m) => m.config(),
        }
    }

    pub fn store(&self) -> &ParamStore {
        match self {
            TieredModel::Gae(m) => m.store(),
            TieredModel::Vgae(m) => m.store(),
        }
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        match self {
            TieredModel::Gae(m) => m.store_mut(),
            TieredModel::Vgae(m) => m.store_mut(),
        }
    }

    /// Deterministic embeddings; a VGAE reports its posterior means.
    pub fn embed(&self, input: &TieredInput) -> Result<EmbeddingValues, ModelError> {
        match self {
            TieredModel::Gae(m) => m.embed(input),
            TieredModel::Vgae(m) => m.embed(input),
        }
    }

    /// `(Â, X̂)` decoded from the given embeddings.
    pub fn decode_values(&self, emb: &EmbeddingValues, m1: &Matrix) -> Result<(Matrix, Matrix), ModelError> {
        let decoder = match self {
            TieredModel::Gae(m) => m.decoder(),
            TieredModel::Vgae(m) => m.decoder(),
        };
        decoder.decode_values(self.store(), emb, m1)
    }
}

#[derive(Serialize, Deserialize)]
struct Document {
    format_version: u64,
    model_kind: ModelKind,
    config: ModelConfig,
    weights: BTreeMap<String, Vec<Vec<f64>>>,
}

pub fn checkpoint_to_string(model: &TieredModel) -> String {
    let weights = model
        .store()
        .iter()
        .map(|p| (p.name.clone(), p.value.row_vecs()))
        .collect();
    let doc = Document {
        format_version: FORMAT_VERSION,
        model_kind: model.kind(),
        config: model.config().clone(),
        weights,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("checkpoint serializes");
    s.push('\n');
    s
}

pub fn checkpoint_from_str(text: &str) -> Result<TieredModel, CheckpointError> {
    let raw: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    match raw.get("format_version").and_then(serde_json::Value::as_u64) {
        Some(FORMAT_VERSION) => {}
        Some(found) => return Err(CheckpointError::Version { found }),
        None => return Err(CheckpointError::Malformed("missing format_version".into())),
    }
    let mut doc: Document =
        serde_json::from_value(raw).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    let mut model = match doc.model_kind {
        ModelKind::Gae => TieredModel::Gae(TieredGae::new(doc.config, 0)?),
        ModelKind::Vgae => TieredModel::Vgae(TieredVgae::new(doc.config, 0)?),
    };
    for p in model.store_mut().iter_mut() {
        let rows = doc
            .weights
            .remove(&p.name)
            .ok_or_else(|| CheckpointError::MissingWeight(p.name.clone()))?;
        let value = Matrix::from_rows(&rows).map_err(|e| CheckpointError::Malformed(format!("{}: {e}", p.name)))?;
        if value.shape() != p.value.shape() {
            return Err(CheckpointError::Shape {
                name: p.name.clone(),
                expected: p.value.shape(),
                found: value.shape(),
            });
        }
        p.value = value;
    }
    if let Some(extra) = doc.weights.keys().next() {
        return Err(CheckpointError::UnexpectedWeight(extra.clone()));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &TieredModel, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    std::fs::write(path, checkpoint_to_string(model))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TieredModel, CheckpointError> {
    checkpoint_from_str(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::tests::input_for;
    use crate::models::{train_gae, TrainConfig};

    fn trained() -> TieredModel {
        let data = vec![input_for("CCO"), input_for("c1ccccc1")];
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        TieredModel::Gae(train_gae(&data, ModelConfig::new([3, 4, 5], 2), &cfg).unwrap().0)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = trained();
        let text = checkpoint_to_string(&m);
        let back = checkpoint_from_str(&text).unwrap();
        for (a, b) in m.store().iter().zip(back.store().iter()) {
            assert_eq!(a.name, b.name);
            let bits = |x: &Matrix| x.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.value), bits(&b.value));
        }
        assert_eq!(checkpoint_to_string(&back), text);
    }

    #[test]
    fn vgae_round_trip() {
        let m = TieredModel::Vgae(TieredVgae::new(ModelConfig::new([2, 2, 2], 2), 3).unwrap());
        let back = checkpoint_from_str(&checkpoint_to_string(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn header_fields() {
        let v: serde_json::Value = serde_json::from_str(&checkpoint_to_string(&trained())).unwrap();
        assert_eq!(v["format_version"], 1);
        assert_eq!(v["model_kind"], "gae");
        assert_eq!(v["config"]["dims"], serde_json::json!([3, 4, 5]));
        assert_eq!(v["config"]["layers"], 2);
        assert_eq!(v["config"]["d0"], 16);
        assert_eq!(v["weights"]["decoder.theta"].as_array().unwrap().len(), 12);
    }

    #[test]
    fn truncated_is_malformed() {
        let text = checkpoint_to_string(&trained());
        let cut = &text[..text.len() / 2];
        assert!(matches!(checkpoint_from_str(cut), Err(CheckpointError::Malformed(_))));
    }

    #[test]
    fn version_mismatch() {
        let text = checkpoint_to_string(&trained()).replacen("\"format_version\": 1", "\"format_version\": 2", 1);
        assert!(matches!(checkpoint_from_str(&text), Err(CheckpointError::Version { found: 2 })));
    }

    #[test]
    fn dims_mismatch_is_shape_error() {
        let mut v: serde_json::Value = serde_json::from_str(&checkpoint_to_string(&trained())).unwrap();
        v["config"]["dims"] = serde_json::json!([4, 4, 5]);
        let err = checkpoint_from_str(&v.to_string()).unwrap_err();
        assert!(matches!(err, CheckpointError::Shape { .. }), "{err}");
    }

    #[test]
    fn missing_and_extra_weights() {
        let mut v: serde_json::Value = serde_json::from_str(&checkpoint_to_string(&trained())).unwrap();
        let w = v["weights"].as_object_mut().unwrap();
        let theta = w.remove("decoder.theta").unwrap();
        w.insert("decoder.other".into(), theta.clone());
        assert!(matches!(checkpoint_from_str(&v.to_string()), Err(CheckpointError::MissingWeight(_))));
        v["weights"]["decoder.theta"] = theta;
        assert!(matches!(checkpoint_from_str(&v.to_string()), Err(CheckpointError::UnexpectedWeight(_))));
    }
}
