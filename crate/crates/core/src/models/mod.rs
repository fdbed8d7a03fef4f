//! Tiered graph autoencoders.
//!
//! Three GCN stacks (atoms, groups, molecule) are chained by DiffGroupPool.
//! The decoder broadcasts group and graph embeddings back to the atoms,
//! `Z* = [Z1 | M1·Z2 | 1·Z3]`, and reconstructs the adjacency through a
//! bilinear head `σ(Z* Θ Z*ᵀ)` and the node features through `Z* W_x`.

mod checkpoint;
mod gae;
mod interp;
mod train;
mod vgae;

pub use checkpoint::{
    checkpoint_from_str, checkpoint_to_string, load_checkpoint, save_checkpoint, CheckpointError,
    TieredModel, FORMAT_VERSION,
};
pub use gae::{encode_tiered, TieredGae};
pub use interp::{interpolate_latent, summarize_edges, EdgeSummary, InterpError};
pub use train::{
    beta_schedule, gae_trace_csv, train_gae, train_vgae, vgae_trace_csv, GaeEpoch, TrainConfig,
    TrainError, VgaeEpoch,
};
pub use vgae::{
    elbo, encode_tiered_variational, kl_standard_normal, reparameterize, ElboTerms, FixedNoise,
    GaussianNoise, NoiseSource, TieredVgae, VariationalEmbeddings, ZeroNoise,
};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnn::{GnnError, TierState, MAX_LAYERS, MIN_LAYERS};
use crate::grouping::{build_membership, graph_membership, GroupSet, GroupingError};
use crate::molgraph::{MolecularGraph, NODE_FEATURE_DIM};
use crate::numerics::{
    glorot_uniform, BoundParams, Matrix, NumericsError, ParamId, ParamStore, Tape, Var, LOG_EPS,
};
use crate::pooling::pool_tier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gae,
    Vgae,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gae => "gae",
            ModelKind::Vgae => "vgae",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding widths `(d1, d2, d3)` of the atom, group and graph tiers.
    pub dims: [usize; 3],
    /// GCN layers per tier.
    pub layers: usize,
    /// Node feature width.
    pub d0: usize,
    /// Weight of the feature-reconstruction MSE.
    pub lambda_x: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dims: [16, 16, 16],
            layers: 3,
            d0: NODE_FEATURE_DIM,
            lambda_x: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn new(dims: [usize; 3], layers: usize) -> Self {
        ModelConfig {
            dims,
            layers,
            ..Self::default()
        }
    }

    /// `d1 + d2 + d3`, the width of the broadcast concatenation.
    pub fn latent_width(&self) -> usize {
        self.dims.iter().sum()
    }

    /// Input width of each tier's GNN.
    pub fn tier_inputs(&self) -> [usize; 3] {
        [self.d0, self.dims[0], self.dims[1]]
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.dims.contains(&0) || self.d0 == 0 {
            return Err(ModelError::Config(format!(
                "dimensions must be at least 1 (dims {:?}, d0 {})",
                self.dims, self.d0
            )));
        }
        if !(MIN_LAYERS..=MAX_LAYERS).contains(&self.layers) {
            return Err(GnnError::Depth(self.layers).into());
        }
        if !(self.lambda_x.is_finite() && self.lambda_x >= 0.0) {
            return Err(ModelError::Config(format!(
                "lambda_x must be finite and non-negative, got {}",
                self.lambda_x
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Grouping(#[from] GroupingError),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("input does not fit the model: {0}")]
    Input(String),
}

/// Everything the encoder and the loss need from one molecule: `A`, `F^V`
/// and the two membership matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct TieredInput {
    adjacency: Matrix,
    features: Matrix,
    m1: Matrix,
    m2: Matrix,
}

impl TieredInput {
    pub fn from_graph(g: &MolecularGraph, gs: &GroupSet) -> Result<Self, ModelError> {
        let m1 = build_membership(gs, g.num_atoms())?.matrix;
        let m2 = graph_membership(gs.len())?.matrix;
        Ok(TieredInput {
            adjacency: g.adjacency().clone(),
            features: g.node_features().clone(),
            m1,
            m2,
        })
    }

    /// Builds an input from raw matrices; the group-to-graph membership is
    /// the ones column.
    pub fn from_parts(adjacency: Matrix, features: Matrix, m1: Matrix) -> Result<Self, ModelError> {
        let n = adjacency.rows();
        if adjacency.cols() != n || features.rows() != n || m1.rows() != n {
            return Err(ModelError::Input(format!(
                "adjacency {:?}, features {:?} and membership {:?} disagree on the atom count",
                adjacency.shape(),
                features.shape(),
                m1.shape()
            )));
        }
        if n == 0 || m1.cols() == 0 {
            return Err(ModelError::Input("empty molecule or group set".into()));
        }
        let m2 = Matrix::ones(m1.cols(), 1);
        Ok(TieredInput {
            adjacency,
            features,
            m1,
            m2,
        })
    }

    /// Relabels atoms so that new atom `k` is old atom `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        TieredInput {
            adjacency: self.adjacency.permute_symmetric(perm),
            features: self.features.permute_rows(perm),
            m1: self.m1.permute_rows(perm),
            m2: self.m2.clone(),
        }
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.adjacency
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn m1(&self) -> &Matrix {
        &self.m1
    }

    pub fn m2(&self) -> &Matrix {
        &self.m2
    }

    pub fn num_atoms(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn num_groups(&self) -> usize {
        self.m1.cols()
    }

    fn check(&self, config: &ModelConfig) -> Result<(), ModelError> {
        if self.features.cols() != config.d0 {
            return Err(ModelError::Input(format!(
                "{} feature columns, model expects d0 = {}",
                self.features.cols(),
                config.d0
            )));
        }
        Ok(())
    }
}

/// Atom, group and graph embeddings recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct TieredEmbeddings<'t> {
    pub z1: Var<'t>,
    pub z2: Var<'t>,
    pub z3: Var<'t>,
}

impl TieredEmbeddings<'_> {
    pub fn values(&self) -> EmbeddingValues {
        EmbeddingValues {
            z1: self.z1.value(),
            z2: self.z2.value(),
            z3: self.z3.value(),
        }
    }
}

/// Plain-matrix copy of [`TieredEmbeddings`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingValues {
    pub z1: Matrix,
    pub z2: Matrix,
    pub z3: Matrix,
}

/// Runs the GNN → DGP → GNN → DGP → GNN pipeline. `tier` maps `(t, A, X)`
/// to the embedding handed to the decoder and the one handed to the pool.
pub(crate) fn run_tiers<'t, F>(
    tape: &'t Tape,
    input: &TieredInput,
    mut tier: F,
) -> Result<TieredEmbeddings<'t>, ModelError>
where
    F: FnMut(usize, &Matrix, Var<'t>) -> Result<(Var<'t>, Var<'t>), ModelError>,
{
    let memberships = [Some(&input.m1), Some(&input.m2), None];
    let mut state = TierState::new(input.adjacency.clone(), tape.constant(input.features.clone()));
    let mut out = Vec::with_capacity(3);
    for (t, m) in memberships.into_iter().enumerate() {
        let (z, pooled) = tier(t, &state.adjacency, state.x)?;
        out.push(z);
        if let Some(m) = m {
            state.z = Some(pooled);
            state = pool_tier(&state, m)?;
        }
    }
    Ok(TieredEmbeddings {
        z1: out[0],
        z2: out[1],
        z3: out[2],
    })
}

/// Bilinear adjacency head `Θ` and linear feature head `W_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    pub theta: ParamId,
    pub feature_head: ParamId,
}

impl Decoder {
    /// `Θ` starts at the identity, so the head begins as `σ(Z* Z*ᵀ)`.
    pub(crate) fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        config: &ModelConfig,
        rng: &mut R,
    ) -> Self {
        let d = config.latent_width();
        let theta = store.add("decoder.theta", Matrix::identity(d));
        let feature_head = store.add("decoder.feature_head", glorot_uniform(d, config.d0, rng));
        Decoder {
            theta,
            feature_head,
        }
    }

    /// Replaces `Θ` by `(Θ + Θᵀ) / 2`.
    pub fn symmetrize(&self, store: &mut ParamStore) {
        let theta = &mut store.get_mut(self.theta).value;
        let t = theta.transpose();
        *theta = theta.add(&t).expect("square").scale(0.5);
    }

    /// Decodes plain embeddings on a scratch tape.
    pub fn decode_values(
        &self,
        store: &ParamStore,
        emb: &EmbeddingValues,
        m1: &Matrix,
    ) -> Result<(Matrix, Matrix), ModelError> {
        let tape = Tape::new();
        let p = store.bind(&tape);
        let e = TieredEmbeddings {
            z1: tape.constant(emb.z1.clone()),
            z2: tape.constant(emb.z2.clone()),
            z3: tape.constant(emb.z3.clone()),
        };
        let rec = decode(self, &p, &e, m1)?;
        Ok((rec.adjacency.value(), rec.features.value()))
    }
}

/// Decoder outputs: `Â` (N×N, diagonal meaningless) with its logits, and
/// `X̂` (N×d0).
#[derive(Debug, Clone, Copy)]
pub struct Reconstruction<'t> {
    pub logits: Var<'t>,
    pub adjacency: Var<'t>,
    pub features: Var<'t>,
}

impl<'t> Reconstruction<'t> {
    pub fn from_logits(logits: Var<'t>, features: Var<'t>) -> Self {
        Reconstruction {
            logits,
            adjacency: logits.sigmoid(),
            features,
        }
    }

    /// Wraps fixed probabilities; each is turned back into its logit.
    pub fn from_probabilities(tape: &'t Tape, a_hat: &Matrix, features: Matrix) -> Self {
        let logits = a_hat.map(|p| {
            let p = p.clamp(LOG_EPS, 1.0 - LOG_EPS);
            (p / (1.0 - p)).ln()
        });
        Reconstruction {
            logits: tape.constant(logits),
            adjacency: tape.constant(a_hat.clone()),
            features: tape.constant(features),
        }
    }
}

/// `[Z1 | M1·Z2 | 1_N·Z3]`.
pub fn broadcast_concat<'t>(emb: &TieredEmbeddings<'t>, m1: &Matrix) -> Result<Var<'t>, ModelError> {
    let tape = emb.z1.tape();
    let n = emb.z1.shape().0;
    if m1.rows() != n {
        return Err(NumericsError::Shape {
            op: "broadcast_concat",
            left: emb.z1.shape(),
            right: m1.shape(),
        }
        .into());
    }
    let group_ctx = tape.constant(m1.clone()).matmul(emb.z2)?;
    let graph_ctx = tape.constant(Matrix::ones(n, 1)).matmul(emb.z3)?;
    Ok(Var::hcat(&[emb.z1, group_ctx, graph_ctx])?)
}

pub fn decode<'t>(
    decoder: &Decoder,
    params: &BoundParams<'t>,
    emb: &TieredEmbeddings<'t>,
    m1: &Matrix,
) -> Result<Reconstruction<'t>, ModelError> {
    let z = broadcast_concat(emb, m1)?;
    let logits = z.matmul(params.var(decoder.theta))?.matmul(z.transpose())?;
    let features = z.matmul(params.var(decoder.feature_head))?;
    Ok(Reconstruction::from_logits(logits, features))
}

/// Loss value on the tape plus its two parts as plain numbers.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms<'t> {
    pub total: Var<'t>,
    pub edge: f64,
    pub feature: f64,
}

/// BCE weights over the strict upper triangle: edges weigh
/// `#non-edges / #edges`, non-edges 1, all divided by the number of pairs so
/// the loss is a mean over pairs. Returned split into the edge part and the
/// non-edge part.
pub fn edge_weights(a: &Matrix) -> (Matrix, Matrix) {
    let n = a.rows();
    let pairs = n * n.saturating_sub(1) / 2;
    let edges = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| a[(i, j)] > 0.0)
        .count();
    let mut pos = Matrix::zeros(n, n);
    let mut neg = Matrix::zeros(n, n);
    if pairs == 0 {
        return (pos, neg);
    }
    let non_edges = pairs - edges;
    let pos_weight = if edges == 0 || non_edges == 0 {
        1.0
    } else {
        non_edges as f64 / edges as f64
    };
    let pairs = pairs as f64;
    for i in 0..n {
        for j in i + 1..n {
            if a[(i, j)] > 0.0 {
                pos[(i, j)] = pos_weight / pairs;
            } else {
                neg[(i, j)] = 1.0 / pairs;
            }
        }
    }
    (pos, neg)
}

/// Weighted mean BCE of `Â` against `A` over pairs `i < j`, plus
/// `λ_x · MSE(X̂, F^V)`. The BCE is evaluated on the logits as
/// `softplus(l) − y·l`, which keeps a gradient where the sigmoid saturates.
pub fn reconstruction_loss<'t>(
    rec: &Reconstruction<'t>,
    a: &Matrix,
    f: &Matrix,
    lambda_x: f64,
) -> Result<LossTerms<'t>, ModelError> {
    let tape = rec.adjacency.tape();
    if rec.logits.shape() != a.shape() {
        return Err(NumericsError::Shape {
            op: "reconstruction_loss",
            left: rec.logits.shape(),
            right: a.shape(),
        }
        .into());
    }
    let (pos, neg) = edge_weights(a);
    let both = pos.add(&neg)?;
    let l = rec.logits;
    let bce = l
        .softplus()
        .mul(tape.constant(both))?
        .sum()
        .sub(l.mul(tape.constant(pos))?.sum())?;
    let mse = rec.features.sub(tape.constant(f.clone()))?.square().mean();
    let total = bce.add(mse.scale(lambda_x))?;
    Ok(LossTerms {
        total,
        edge: bce.scalar(),
        feature: mse.scalar(),
    })
}

/// Area under the ROC curve of `scores` for the bonds of `a`, by brute-force
/// ranking of every (edge, non-edge) pair with `i < j`; ties count half.
/// `None` when either class is empty.
pub fn edge_auc(scores: &Matrix, a: &Matrix) -> Option<f64> {
    let n = a.rows();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if a[(i, j)] > 0.0 {
                pos.push(scores[(i, j)]);
            } else {
                neg.push(scores[(i, j)]);
            }
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for &p in &pos {
        for &q in &neg {
            if p > q {
                wins += 1.0;
            } else if p == q {
                wins += 0.5;
            }
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}
