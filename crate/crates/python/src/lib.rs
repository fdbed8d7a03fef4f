//! Python bindings: parsing, partitioning, training and embedding.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use tiered_latent::grouping::{build_membership, partition as partition_graph};
use tiered_latent::models::{
    checkpoint_from_str, checkpoint_to_string, interpolate_latent as interp, train_gae, train_vgae, CheckpointError,
    ModelConfig, ModelKind, TieredInput, TieredModel, TrainConfig,
};
use tiered_latent::molgraph::{parse_smiles as parse, MolecularGraph};
use tiered_latent::numerics::OptimizerKind;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn graph(smiles: &str) -> PyResult<MolecularGraph> {
    parse(smiles).map_err(value_err)
}

fn input(smiles: &str) -> PyResult<TieredInput> {
    let g = graph(smiles)?;
    TieredInput::from_graph(&g, &partition_graph(&g)).map_err(value_err)
}

#[pyclass(frozen, get_all, name = "ParsedMolecule")]
pub struct ParsedMolecule {
    pub num_atoms: usize,
    pub num_bonds: usize,
    pub ring_count: usize,
    pub formula: String,
    pub elements: BTreeMap<String, usize>,
    pub adjacency: Vec<Vec<f64>>,
}

#[pyclass(frozen, get_all, name = "Group")]
pub struct Group {
    pub kind: String,
    pub atoms: Vec<usize>,
    pub formula: String,
}

#[pymethods]
impl Group {
    fn __repr__(&self) -> String {
        format!("Group(kind={:?}, atoms={:?}, formula={:?})", self.kind, self.atoms, self.formula)
    }
}

/// Atom counts, ring count and adjacency of a SMILES string with explicit H.
#[pyfunction]
fn parse_smiles(smiles: &str) -> PyResult<ParsedMolecule> {
    let g = graph(smiles)?;
    Ok(ParsedMolecule {
        num_atoms: g.num_atoms(),
        num_bonds: g.num_bonds(),
        ring_count: g.ring_count(),
        formula: g.formula(),
        elements: g.element_counts(),
        adjacency: g.adjacency().row_vecs(),
    })
}

/// Functional groups, aromatic rings and leftover components.
#[pyfunction]
fn partition(smiles: &str) -> PyResult<Vec<Group>> {
    let g = graph(smiles)?;
    Ok(partition_graph(&g)
        .groups()
        .iter()
        .map(|grp| Group {
            kind: grp.kind.as_str().to_string(),
            atoms: grp.atoms.clone(),
            formula: g.formula_of(grp.atoms.iter().copied()),
        })
        .collect())
}

/// Atom→group membership rows.
#[pyfunction]
fn membership(smiles: &str) -> PyResult<Vec<Vec<f64>>> {
    let g = graph(smiles)?;
    let m = build_membership(&partition_graph(&g), g.num_atoms()).map_err(value_err)?;
    Ok(m.matrix.row_vecs())
}

#[pyfunction]
fn interpolate_latent(za: Vec<f64>, zb: Vec<f64>, steps: usize) -> PyResult<Vec<Vec<f64>>> {
    interp(&za, &zb, steps).map_err(value_err)
}

/// A trained tiered GAE or VGAE.
#[pyclass(name = "Model")]
pub struct Model {
    inner: TieredModel,
    /// Rows of the training trace: `(epoch, loss)` or `(epoch, elbo, kl)`.
    #[pyo3(get)]
    trace: Vec<Vec<f64>>,
}

fn parse_kind(model: &str) -> PyResult<ModelKind> {
    match model {
        "gae" => Ok(ModelKind::Gae),
        "vgae" => Ok(ModelKind::Vgae),
        other => Err(value_err(format!("model must be 'gae' or 'vgae', got {other:?}"))),
    }
}

fn parse_optimizer(name: &str) -> PyResult<OptimizerKind> {
    match name {
        "adam" => Ok(OptimizerKind::Adam),
        "sgd" => Ok(OptimizerKind::Sgd),
        other => Err(value_err(format!("optimizer must be 'adam' or 'sgd', got {other:?}"))),
    }
}

fn checkpoint_err(e: CheckpointError) -> PyErr {
    match e {
        CheckpointError::Io(io) => PyIOError::new_err(io.to_string()),
        other => value_err(other),
    }
}

#[pymethods]
impl Model {
    #[staticmethod]
    #[pyo3(signature = (smiles, model="gae", dims=(16, 16, 16), layers=3, lr=0.01, epochs=200, seed=42, optimizer="adam", beta=1.0, lambda_x=0.1))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        py: Python<'_>,
        smiles: Vec<String>,
        model: &str,
        dims: (usize, usize, usize),
        layers: usize,
        lr: f64,
        epochs: usize,
        seed: u64,
        optimizer: &str,
        beta: f64,
        lambda_x: f64,
    ) -> PyResult<Model> {
        let kind = parse_kind(model)?;
        let data = smiles.iter().map(|s| input(s)).collect::<PyResult<Vec<_>>>()?;
        let config = ModelConfig {
            lambda_x,
            ..ModelConfig::new([dims.0, dims.1, dims.2], layers)
        };
        config.validate().map_err(value_err)?;
        let train = TrainConfig {
            epochs,
            learning_rate: lr,
            seed,
            optimizer: parse_optimizer(optimizer)?,
            beta,
            ..TrainConfig::default()
        };
        py.detach(|| match kind {
            ModelKind::Gae => train_gae(&data, config, &train).map(|(m, t)| Model {
                inner: TieredModel::Gae(m),
                trace: t.iter().map(|e| vec![e.epoch as f64, e.loss]).collect(),
            }),
            ModelKind::Vgae => train_vgae(&data, config, &train).map(|(m, t)| Model {
                inner: TieredModel::Vgae(m),
                trace: t.iter().map(|e| vec![e.epoch as f64, e.elbo, e.kl]).collect(),
            }),
        })
        .map_err(value_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Model> {
        Ok(Model {
            inner: checkpoint_from_str(text).map_err(checkpoint_err)?,
            trace: Vec::new(),
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Model> {
        let text = std::fs::read_to_string(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        Model::from_json(&text)
    }

    fn to_json(&self) -> String {
        checkpoint_to_string(&self.inner)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        std::fs::write(path, self.to_json()).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().as_str()
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        let d = self.inner.config().dims;
        (d[0], d[1], d[2])
    }

    /// Embedding rows of one tier: "node", "group" or "graph". A VGAE
    /// reports posterior means.
    #[pyo3(signature = (smiles, tier="graph"))]
    fn embed(&self, smiles: &str, tier: &str) -> PyResult<Vec<Vec<f64>>> {
        let emb = self.inner.embed(&input(smiles)?).map_err(value_err)?;
        let m = match tier {
            "node" => emb.z1,
            "group" => emb.z2,
            "graph" => emb.z3,
            other => return Err(value_err(format!("tier must be node, group or graph, got {other:?}"))),
        };
        Ok(m.row_vecs())
    }

    /// Decoded edge probabilities `Â`.
    fn reconstruct(&self, smiles: &str) -> PyResult<Vec<Vec<f64>>> {
        let inp = input(smiles)?;
        let emb = self.inner.embed(&inp).map_err(value_err)?;
        let (a_hat, _) = self.inner.decode_values(&emb, inp.m1()).map_err(value_err)?;
        Ok(a_hat.row_vecs())
    }

    fn __repr__(&self) -> String {
        format!("Model(kind={:?}, dims={:?}, layers={})", self.kind(), self.dims(), self.inner.config().layers)
    }
}

#[pymodule]
#[pyo3(name = "tiered_latent")]
fn tiered_latent_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(parse_smiles, m)?)?;
    m.add_function(wrap_pyfunction!(partition, m)?)?;
    m.add_function(wrap_pyfunction!(membership, m)?)?;
    m.add_function(wrap_pyfunction!(interpolate_latent, m)?)?;
    m.add_class::<Model>()?;
    m.add_class::<ParsedMolecule>()?;
    m.add_class::<Group>()?;
    Ok(())
}
