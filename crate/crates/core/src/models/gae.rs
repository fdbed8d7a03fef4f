use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    decode, reconstruction_loss, run_tiers, Decoder, EmbeddingValues, LossTerms, ModelConfig,
    ModelError, TieredEmbeddings, TieredInput,
};
use crate::gnn::{gnn_forward, GnnStack};
use crate::numerics::{BoundParams, Matrix, ParamStore, Tape};

/// Deterministic tiered graph autoencoder.
#[derive(Debug, Clone, PartialEq)]
pub struct TieredGae {
    config: ModelConfig,
    store: ParamStore,
    encoders: Vec<GnnStack>,
    decoder: Decoder,
}

impl TieredGae {
    /// Glorot-initialized weights drawn from a ChaCha8 stream seeded with `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let inputs = config.tier_inputs();
        let encoders = (0..3)
            .map(|t| {
                GnnStack::new(
                    &mut store,
                    &format!("tier{}", t + 1),
                    inputs[t],
                    config.dims[t],
                    config.layers,
                    &mut rng,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let decoder = Decoder::new(&mut store, &config, &mut rng);
        Ok(TieredGae {
            config,
            store,
            encoders,
            decoder,
        })
    }

    /// Assembles a model from parts that were registered in `store`.
    pub(crate) fn from_parts(
        config: ModelConfig,
        store: ParamStore,
        encoders: Vec<GnnStack>,
        decoder: Decoder,
    ) -> Self {
        TieredGae {
            config,
            store,
            encoders,
            decoder,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn encoders(&self) -> &[GnnStack] {
        &self.encoders
    }

    pub fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    pub fn encode<'t>(
        &self,
        params: &BoundParams<'t>,
        tape: &'t Tape,
        input: &TieredInput,
    ) -> Result<TieredEmbeddings<'t>, ModelError> {
        encode_tiered(self, params, tape, input)
    }

    pub fn loss<'t>(
        &self,
        params: &BoundParams<'t>,
        tape: &'t Tape,
        input: &TieredInput,
    ) -> Result<LossTerms<'t>, ModelError> {
        let emb = self.encode(params, tape, input)?;
        let rec = decode(&self.decoder, params, &emb, input.m1())?;
        reconstruction_loss(&rec, input.adjacency(), input.features(), self.config.lambda_x)
    }

    /// Loss value without gradients.
    pub fn loss_value(&self, input: &TieredInput) -> Result<f64, ModelError> {
        let tape = Tape::new();
        let p = self.store.bind(&tape);
        Ok(self.loss(&p, &tape, input)?.total.scalar())
    }

    pub fn embed(&self, input: &TieredInput) -> Result<EmbeddingValues, ModelError> {
        let tape = Tape::new();
        let p = self.store.bind(&tape);
        Ok(self.encode(&p, &tape, input)?.values())
    }

    /// `(Â, X̂)` for one molecule.
    pub fn reconstruct(&self, input: &TieredInput) -> Result<(Matrix, Matrix), ModelError> {
        let emb = self.embed(input)?;
        self.decoder.decode_values(&self.store, &emb, input.m1())
    }
}

/// Atom, group and graph embeddings of one molecule.
pub fn encode_tiered<'t>(
    model: &TieredGae,
    params: &BoundParams<'t>,
    tape: &'t Tape,
    input: &TieredInput,
) -> Result<TieredEmbeddings<'t>, ModelError> {
    input.check(&model.config)?;
    run_tiers(tape, input, |t, a, x| {
        let z = gnn_forward(&model.encoders[t], params, a, x)?;
        Ok((z, z))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::tests::input_for;
    use crate::numerics::grad_check_params;
    use crate::pooling::diff_group_pool;

    fn small() -> TieredGae {
        TieredGae::new(ModelConfig::new([4, 4, 4], 2), 7).unwrap()
    }

    #[test]
    fn vanillin_shapes() {
        let model = TieredGae::new(ModelConfig::new([5, 6, 7], 3), 1).unwrap();
        let emb = model.embed(&input_for("O=Cc1ccc(O)c(OC)c1")).unwrap();
        assert_eq!(emb.z1.shape(), (19, 5));
        assert_eq!(emb.z2.shape(), (4, 6));
        assert_eq!(emb.z3.shape(), (1, 7));
    }

    #[test]
    fn methane_single_group() {
        let model = small();
        let input = input_for("C");
        let emb = model.embed(&input).unwrap();
        assert_eq!(emb.z2.shape(), (1, 4));
        // the group tier sees the sum-pooled atoms on a 1x1 graph
        let tape = Tape::new();
        let p = model.store().bind(&tape);
        let pooled = diff_group_pool(input.adjacency(), tape.constant(emb.z1.clone()), input.m1()).unwrap();
        assert_eq!(pooled.x.value(), Matrix::from_rows(&[emb.z1.col_sums()]).unwrap());
        let z2 = gnn_forward(&model.encoders()[1], &p, &pooled.adjacency, pooled.x).unwrap();
        assert_eq!(z2.value(), emb.z2);
    }

    #[test]
    fn same_seed_same_weights() {
        assert_eq!(small(), small());
        assert_ne!(small(), TieredGae::new(ModelConfig::new([4, 4, 4], 2), 8).unwrap());
    }

    #[test]
    fn rejects_wrong_feature_width() {
        let model = TieredGae::new(
            ModelConfig {
                d0: 3,
                ..ModelConfig::new([4, 4, 4], 2)
            },
            0,
        )
        .unwrap();
        assert!(matches!(model.embed(&input_for("CO")), Err(ModelError::Input(_))));
    }

    #[test]
    fn decoded_path_is_continuous() {
        let model = small();
        let input = input_for("Oc1ccccc1C");
        let emb = model.embed(&input).unwrap();
        let other = model.embed(&input_for("CC(=O)O")).unwrap();
        let path = crate::models::interpolate_latent(emb.z3.row(0), other.z3.row(0), 6).unwrap();
        let decoded: Vec<Matrix> = path
            .into_iter()
            .map(|z| {
                let e = EmbeddingValues {
                    z3: Matrix::from_vec(1, z.len(), z).unwrap(),
                    ..emb.clone()
                };
                model.decoder().decode_values(model.store(), &e, input.m1()).unwrap().0
            })
            .collect();
        let across = decoded[0].max_abs_diff(&decoded[5]);
        assert!(across > 0.0);
        assert!(decoded.windows(2).all(|w| w[0].max_abs_diff(&w[1]) < across));
    }

    #[test]
    fn decoder_output_symmetric() {
        let model = small();
        let (a_hat, x_hat) = model.reconstruct(&input_for("OC(=O)c1ccccc1")).unwrap();
        assert!(a_hat.is_symmetric(1e-12));
        assert_eq!(x_hat.cols(), 16);
    }

    #[test]
    fn end_to_end_gradients() {
        let model = small();
        let input = input_for("CC=O");
        assert_eq!(input.num_atoms(), 7);
        let checks = grad_check_params(
            model.store(),
            |tape, p| Ok::<_, ModelError>(model.loss(p, tape, &input)?.total),
            1e-5,
        )
        .unwrap();
        assert_eq!(checks.len(), model.store().len());
        for c in checks {
            assert!(c.max_rel_err < 1e-4, "{c:?}");
        }
    }

    #[test]
    fn permutation_leaves_loss_and_graph_embedding() {
        let model = small();
        let input = input_for("Oc1ccccc1C");
        let n = input.num_atoms();
        let perm: Vec<usize> = (0..n).rev().collect();
        let moved = input.permuted(&perm);
        let (l0, l1) = (model.loss_value(&input).unwrap(), model.loss_value(&moved).unwrap());
        assert!((l0 - l1).abs() < 1e-9);
        let (e0, e1) = (model.embed(&input).unwrap(), model.embed(&moved).unwrap());
        assert!(e0.z3.max_abs_diff(&e1.z3) < 1e-9);
        assert!(e0.z1.permute_rows(&perm).max_abs_diff(&e1.z1) < 1e-9);
    }
}
