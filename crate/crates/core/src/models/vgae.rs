use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{
    decode, reconstruction_loss, run_tiers, Decoder, EmbeddingValues, ModelConfig, ModelError,
    TieredEmbeddings, TieredGae, TieredInput,
};
use crate::gnn::{gnn_forward_variational, GcnLayer, GnnStack, VariationalGnn};
use crate::numerics::{BoundParams, Matrix, NumericsError, ParamStore, Tape, Var};

/// Source of the standard-normal draws used by the reparameterization.
pub trait NoiseSource {
    fn sample(&mut self, rows: usize, cols: usize) -> Matrix;
}

/// Always zero: the sampled embeddings equal the means.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn sample(&mut self, rows: usize, cols: usize) -> Matrix {
        Matrix::zeros(rows, cols)
    }
}

/// Seeded standard-normal draws.
#[derive(Debug, Clone)]
pub struct GaussianNoise {
    rng: ChaCha8Rng,
}

impl GaussianNoise {
    pub fn new(seed: u64) -> Self {
        GaussianNoise {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl NoiseSource for GaussianNoise {
    fn sample(&mut self, rows: usize, cols: usize) -> Matrix {
        use rand::Rng;
        Matrix::from_fn(rows, cols, |_, _| self.rng.sample(StandardNormal))
    }
}

/// Replays a fixed list of matrices, cycling when exhausted.
#[derive(Debug, Clone)]
pub struct FixedNoise {
    draws: Vec<Matrix>,
    next: usize,
}

impl FixedNoise {
    pub fn new(draws: Vec<Matrix>) -> Self {
        assert!(!draws.is_empty(), "FixedNoise needs at least one draw");
        FixedNoise { draws, next: 0 }
    }

    /// Records `count` draws of `source` with the given shapes, so the same
    /// noise can be replayed across several forward passes.
    pub fn record(source: &mut dyn NoiseSource, shapes: &[(usize, usize)]) -> Self {
        FixedNoise::new(shapes.iter().map(|&(r, c)| source.sample(r, c)).collect())
    }
}

impl NoiseSource for FixedNoise {
    fn sample(&mut self, rows: usize, cols: usize) -> Matrix {
        let m = self.draws[self.next % self.draws.len()].clone();
        self.next += 1;
        assert_eq!(m.shape(), (rows, cols), "replayed noise has the wrong shape");
        m
    }
}

/// `μ + σ ⊙ ε`.
pub fn reparameterize<'t>(mu: Var<'t>, sigma: Var<'t>, noise: &Matrix) -> Result<Var<'t>, NumericsError> {
    if mu.shape() != sigma.shape() || mu.shape() != noise.shape() {
        return Err(NumericsError::Shape {
            op: "reparameterize",
            left: mu.shape(),
            right: noise.shape(),
        });
    }
    mu.add(sigma.mul(mu.tape().constant(noise.clone()))?)
}

/// `KL(N(μ, σ²) || N(0, I)) = Σ ½(μ² + σ² − 1 − ln σ²)`.
pub fn kl_standard_normal<'t>(mu: Var<'t>, sigma: Var<'t>) -> Result<Var<'t>, NumericsError> {
    let ln_var = sigma.log().scale(2.0);
    let inner = mu.square().add(sigma.square())?.add_scalar(-1.0).sub(ln_var)?;
    Ok(inner.sum().scale(0.5))
}

/// Variational tiered graph autoencoder.
#[derive(Debug, Clone, PartialEq)]
pub struct TieredVgae {
    config: ModelConfig,
    store: ParamStore,
    encoders: Vec<VariationalGnn>,
    decoder: Decoder,
}

/// Sampled embeddings plus the per-tier posterior statistics.
#[derive(Debug, Clone, Copy)]
pub struct VariationalEmbeddings<'t> {
    pub sampled: TieredEmbeddings<'t>,
    pub mu: [Var<'t>; 3],
    pub sigma: [Var<'t>; 3],
}

impl TieredVgae {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let inputs = config.tier_inputs();
        let encoders = (0..3)
            .map(|t| {
                VariationalGnn::new(
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
        Ok(TieredVgae {
            config,
            store,
            encoders,
            decoder,
        })
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

    pub fn encoders(&self) -> &[VariationalGnn] {
        &self.encoders
    }

    pub fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    /// The deterministic model given by the trunks and μ heads, with the
    /// same decoder.
    pub fn mean_model(&self) -> TieredGae {
        let mut store = ParamStore::new();
        let mut copy = |name: String, layer: &GcnLayer| GcnLayer {
            weight: store.add(name, self.store.value(layer.weight).clone()),
            ..layer.clone()
        };
        let encoders = self
            .encoders
            .iter()
            .enumerate()
            .map(|(t, enc)| {
                let layers = enc
                    .mean_stack()
                    .layers()
                    .iter()
                    .enumerate()
                    .map(|(k, l)| copy(format!("tier{}.gcn{k}", t + 1), l))
                    .collect();
                GnnStack::from_layers(layers).expect("depth already validated")
            })
            .collect();
        let decoder = Decoder {
            theta: store.add("decoder.theta", self.store.value(self.decoder.theta).clone()),
            feature_head: store.add(
                "decoder.feature_head",
                self.store.value(self.decoder.feature_head).clone(),
            ),
        };
        TieredGae::from_parts(self.config.clone(), store, encoders, decoder)
    }

    pub fn encode<'t>(
        &self,
        params: &BoundParams<'t>,
        tape: &'t Tape,
        input: &TieredInput,
        noise: &mut dyn NoiseSource,
    ) -> Result<VariationalEmbeddings<'t>, ModelError> {
        encode_tiered_variational(self, params, tape, input, noise)
    }

    /// Posterior means at every tier; no sampling.
    pub fn embed(&self, input: &TieredInput) -> Result<EmbeddingValues, ModelError> {
        let tape = Tape::new();
        let p = self.store.bind(&tape);
        Ok(self.encode(&p, &tape, input, &mut ZeroNoise)?.sampled.values())
    }

    /// `(Â, X̂)` decoded from the posterior means.
    pub fn reconstruct(&self, input: &TieredInput) -> Result<(Matrix, Matrix), ModelError> {
        let emb = self.embed(input)?;
        self.decoder.decode_values(&self.store, &emb, input.m1())
    }

    /// `(ELBO, KL)` as plain numbers at weight `beta`.
    pub fn elbo_value(
        &self,
        input: &TieredInput,
        noise: &mut dyn NoiseSource,
        beta: f64,
    ) -> Result<(f64, f64), ModelError> {
        let tape = Tape::new();
        let p = self.store.bind(&tape);
        let terms = elbo(self, &p, &tape, input, noise, beta)?;
        Ok((terms.elbo.scalar(), terms.kl))
    }
}

/// Per tier: `(μ, σ)` from the variational GNN, `Z = μ + σ ⊙ ε` for the
/// decoder, and `μ` passed on to the pool.
pub fn encode_tiered_variational<'t>(
    model: &TieredVgae,
    params: &BoundParams<'t>,
    tape: &'t Tape,
    input: &TieredInput,
    noise: &mut dyn NoiseSource,
) -> Result<VariationalEmbeddings<'t>, ModelError> {
    input.check(&model.config)?;
    let mut mus = Vec::with_capacity(3);
    let mut sigmas = Vec::with_capacity(3);
    let sampled = run_tiers(tape, input, |t, a, x| {
        let (mu, sigma) = gnn_forward_variational(&model.encoders[t], params, a, x)?;
        let (r, c) = mu.shape();
        let z = reparameterize(mu, sigma, &noise.sample(r, c))?;
        mus.push(mu);
        sigmas.push(sigma);
        Ok((z, mu))
    })?;
    Ok(VariationalEmbeddings {
        sampled,
        mu: [mus[0], mus[1], mus[2]],
        sigma: [sigmas[0], sigmas[1], sigmas[2]],
    })
}

#[derive(Debug, Clone, Copy)]
pub struct ElboTerms<'t> {
    /// Single-sample bound, to be maximized.
    pub elbo: Var<'t>,
    pub reconstruction: f64,
    /// `Σ_t KL(q(Z_t) || N(0, I))`.
    pub kl: f64,
}

/// `−reconstruction_loss − β · Σ_t KL_t` for one noise draw.
pub fn elbo<'t>(
    model: &TieredVgae,
    params: &BoundParams<'t>,
    tape: &'t Tape,
    input: &TieredInput,
    noise: &mut dyn NoiseSource,
    beta: f64,
) -> Result<ElboTerms<'t>, ModelError> {
    let enc = encode_tiered_variational(model, params, tape, input, noise)?;
    let rec = decode(&model.decoder, params, &enc.sampled, input.m1())?;
    let loss = reconstruction_loss(&rec, input.adjacency(), input.features(), model.config.lambda_x)?;
    let mut kl = kl_standard_normal(enc.mu[0], enc.sigma[0])?;
    for t in 1..3 {
        kl = kl.add(kl_standard_normal(enc.mu[t], enc.sigma[t])?)?;
    }
    let elbo = loss.total.add(kl.scale(beta))?.neg();
    Ok(ElboTerms {
        elbo,
        reconstruction: loss.total.scalar(),
        kl: kl.scalar(),
    })
}
