//! GCN message passing: `H_k = act(Ā · H_{k-1} · W_k)` with the
//! symmetrically normalized adjacency `Ā = D^-1/2 (A + I) D^-1/2`.

use rand::Rng;
use thiserror::Error;

use crate::numerics::{glorot_uniform, BoundParams, Matrix, NumericsError, ParamId, ParamStore, Var};

/// Allowed message-passing depth per stack.
pub const MIN_LAYERS: usize = 2;
pub const MAX_LAYERS: usize = 6;
/// `log σ` is clamped to this range before exponentiation.
pub const LOG_SIGMA_RANGE: (f64, f64) = (-10.0, 10.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GnnError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("a GNN stack needs between {MIN_LAYERS} and {MAX_LAYERS} layers, got {0}")]
    Depth(usize),
    #[error("input has {found} feature columns, the stack expects {expected}")]
    InputWidth { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    None,
}

/// `D^-1/2 (A + I) D^-1/2` with `D` the row sums of `A + I`.
pub fn normalize_adjacency(a: &Matrix) -> Matrix {
    assert_eq!(a.rows(), a.cols(), "adjacency must be square");
    let n = a.rows();
    let mut with_loops = a.clone();
    for i in 0..n {
        with_loops[(i, i)] += 1.0;
    }
    let deg = with_loops.row_sums();
    Matrix::from_fn(n, n, |i, j| with_loops[(i, j)] / (deg[i] * deg[j]).sqrt())
}

/// One propagation step with a trainable `d_in x d_out` weight.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnLayer {
    pub weight: ParamId,
    pub activation: Activation,
    pub d_in: usize,
    pub d_out: usize,
}

impl GcnLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let weight = store.add(name, glorot_uniform(d_in, d_out, rng));
        GcnLayer {
            weight,
            activation,
            d_in,
            d_out,
        }
    }

    /// `act(a_norm · h · W)`.
    pub fn forward<'t>(
        &self,
        params: &BoundParams<'t>,
        a_norm: Var<'t>,
        h: Var<'t>,
    ) -> Result<Var<'t>, NumericsError> {
        let out = a_norm.matmul(h.matmul(params.var(self.weight))?)?;
        Ok(match self.activation {
            Activation::Relu => out.relu(),
            Activation::None => out,
        })
    }
}

fn check_depth(k: usize) -> Result<(), GnnError> {
    if (MIN_LAYERS..=MAX_LAYERS).contains(&k) {
        Ok(())
    } else {
        Err(GnnError::Depth(k))
    }
}

/// K GCN layers: relu on the hidden ones, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnStack {
    layers: Vec<GcnLayer>,
}

impl GnnStack {
    /// Registers `k` layers `d_in -> d_out -> ... -> d_out` under `prefix`.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        d_in: usize,
        d_out: usize,
        k: usize,
        rng: &mut R,
    ) -> Result<Self, GnnError> {
        check_depth(k)?;
        let layers = (0..k)
            .map(|i| {
                let act = if i + 1 == k { Activation::None } else { Activation::Relu };
                let din = if i == 0 { d_in } else { d_out };
                GcnLayer::new(store, &format!("{prefix}.gcn{i}"), din, d_out, act, rng)
            })
            .collect();
        Ok(GnnStack { layers })
    }

    pub fn from_layers(layers: Vec<GcnLayer>) -> Result<Self, GnnError> {
        check_depth(layers.len())?;
        Ok(GnnStack { layers })
    }

    pub fn layers(&self) -> &[GcnLayer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].d_in
    }

    pub fn d_out(&self) -> usize {
        self.layers.last().unwrap().d_out
    }
}

/// Runs every layer of `stack` over `(A, X)`; returns `Z = H_K`.
pub fn gnn_forward<'t>(
    stack: &GnnStack,
    params: &BoundParams<'t>,
    a: &Matrix,
    x: Var<'t>,
) -> Result<Var<'t>, GnnError> {
    let a_norm = check_input(stack.d_in(), a, x)?;
    let mut h = x;
    for layer in &stack.layers {
        h = layer.forward(params, a_norm, h)?;
    }
    Ok(h)
}

fn check_input<'t>(d_in: usize, a: &Matrix, x: Var<'t>) -> Result<Var<'t>, GnnError> {
    let (rows, cols) = x.shape();
    if a.rows() != rows || a.cols() != rows {
        return Err(NumericsError::Shape {
            op: "gnn_forward",
            left: a.shape(),
            right: (rows, cols),
        }
        .into());
    }
    if cols != d_in {
        return Err(GnnError::InputWidth {
            expected: d_in,
            found: cols,
        });
    }
    Ok(x.tape().constant(normalize_adjacency(a)))
}

/// Shared trunk of `K - 1` relu layers, then a linear μ head and a linear
/// `log σ` head.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalGnn {
    trunk: Vec<GcnLayer>,
    mu: GcnLayer,
    log_sigma: GcnLayer,
}

impl VariationalGnn {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        d_in: usize,
        d_out: usize,
        k: usize,
        rng: &mut R,
    ) -> Result<Self, GnnError> {
        check_depth(k)?;
        let trunk = (0..k - 1)
            .map(|i| {
                let din = if i == 0 { d_in } else { d_out };
                GcnLayer::new(store, &format!("{prefix}.gcn{i}"), din, d_out, Activation::Relu, rng)
            })
            .collect();
        let head_in = if k == 1 { d_in } else { d_out };
        let mu = GcnLayer::new(store, &format!("{prefix}.mu"), head_in, d_out, Activation::None, rng);
        let log_sigma = GcnLayer::new(
            store,
            &format!("{prefix}.log_sigma"),
            head_in,
            d_out,
            Activation::None,
            rng,
        );
        Ok(VariationalGnn {
            trunk,
            mu,
            log_sigma,
        })
    }

    pub fn trunk(&self) -> &[GcnLayer] {
        &self.trunk
    }

    pub fn mu_head(&self) -> &GcnLayer {
        &self.mu
    }

    pub fn log_sigma_head(&self) -> &GcnLayer {
        &self.log_sigma
    }

    pub fn depth(&self) -> usize {
        self.trunk.len() + 1
    }

    pub fn d_in(&self) -> usize {
        self.trunk.first().unwrap_or(&self.mu).d_in
    }

    pub fn d_out(&self) -> usize {
        self.mu.d_out
    }

    /// The deterministic stack that shares this trunk and uses the μ head.
    pub fn mean_stack(&self) -> GnnStack {
        let mut layers = self.trunk.clone();
        layers.push(self.mu.clone());
        GnnStack { layers }
    }
}

/// `(μ, σ)` of the variational marginals at one tier; `σ = exp(clamp(log σ))`.
pub fn gnn_forward_variational<'t>(
    net: &VariationalGnn,
    params: &BoundParams<'t>,
    a: &Matrix,
    x: Var<'t>,
) -> Result<(Var<'t>, Var<'t>), GnnError> {
    let a_norm = check_input(net.d_in(), a, x)?;
    let mut h = x;
    for layer in &net.trunk {
        h = layer.forward(params, a_norm, h)?;
    }
    let mu = net.mu.forward(params, a_norm, h)?;
    let (lo, hi) = LOG_SIGMA_RANGE;
    let sigma = net.log_sigma.forward(params, a_norm, h)?.clamp(lo, hi).exp();
    Ok((mu, sigma))
}

/// Per-tier `(A, X, Z)`; `z` stays unset until the tier's GNN has run.
#[derive(Debug, Clone)]
pub struct TierState<'t> {
    pub adjacency: Matrix,
    pub x: Var<'t>,
    pub z: Option<Var<'t>>,
}

impl<'t> TierState<'t> {
    pub fn new(adjacency: Matrix, x: Var<'t>) -> Self {
        TierState {
            adjacency,
            x,
            z: None,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.rows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check_params, Tape};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(3)
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_adjacency(&Matrix::zeros(1, 1)), Matrix::ones(1, 1));
        let a = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let n = normalize_adjacency(&a);
        assert!(n.as_slice().iter().all(|&x| (x - 0.5).abs() < 1e-15));
        let path = Matrix::from_rows(&[[0.0, 1.0, 0.0], [1.0, 0.0, 2.0], [0.0, 2.0, 0.0]]).unwrap();
        assert!(normalize_adjacency(&path).is_symmetric(1e-15));
    }

    #[test]
    fn single_layer_identity_weight() {
        let mut store = ParamStore::new();
        let layer = GcnLayer::new(&mut store, "w", 3, 3, Activation::None, &mut rng());
        store.get_mut(layer.weight).value = Matrix::identity(3);
        let tape = Tape::new();
        let p = store.bind(&tape);

        // one node: Ā = [[1]] so Z = X
        let x1 = Matrix::from_rows(&[[0.2, -1.0, 3.0]]).unwrap();
        let a1 = tape.constant(normalize_adjacency(&Matrix::zeros(1, 1)));
        let z = layer.forward(&p, a1, tape.constant(x1.clone())).unwrap();
        assert_eq!(z.value(), x1);

        // two bonded nodes: every Ā entry is 0.5, so each row is the mean of both inputs
        let x2 = Matrix::from_rows(&[[1.0, 2.0, 3.0], [3.0, 0.0, -1.0]]).unwrap();
        let a2 = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let a2 = tape.constant(normalize_adjacency(&a2));
        let z = layer.forward(&p, a2, tape.constant(x2)).unwrap().value();
        for i in 0..2 {
            assert_eq!(z.row(i), &[2.0, 1.0, 1.0]);
        }
    }

    #[test]
    fn depth_bounds() {
        let mut store = ParamStore::new();
        assert_eq!(
            GnnStack::new(&mut store, "t", 4, 4, 0, &mut rng()).unwrap_err(),
            GnnError::Depth(0)
        );
        assert!(GnnStack::new(&mut store, "t", 4, 4, 1, &mut rng()).is_err());
        assert!(GnnStack::new(&mut store, "t", 4, 4, 7, &mut rng()).is_err());
        let s = GnnStack::new(&mut store, "t", 4, 8, 3, &mut rng()).unwrap();
        assert_eq!((s.depth(), s.d_in(), s.d_out()), (3, 4, 8));
        assert_eq!(s.layers()[2].activation, Activation::None);
        assert_eq!(s.layers()[0].activation, Activation::Relu);
    }

    fn triangle_with_tail() -> Matrix {
        Matrix::from_rows(&[
            [0.0, 1.0, 1.0, 0.0],
            [1.0, 0.0, 1.0, 0.0],
            [1.0, 1.0, 0.0, 1.0],
            [0.0, 0.0, 1.0, 0.0],
        ])
        .unwrap()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut store = ParamStore::new();
        let stack = GnnStack::new(&mut store, "t", 3, 4, 3, &mut rng()).unwrap();
        let a = triangle_with_tail();
        let x = Matrix::from_fn(4, 3, |i, j| ((i * 3 + j) as f64 * 0.37).sin());
        let checks = grad_check_params(
            &store,
            |tape, p| {
                let z = gnn_forward(&stack, p, &a, tape.constant(x.clone()))?;
                Ok::<_, GnnError>(z.square().sum())
            },
            1e-5,
        )
        .unwrap();
        for c in checks {
            assert!(c.max_rel_err < 1e-4, "{c:?}");
        }
    }

    #[test]
    fn input_shape_checked() {
        let mut store = ParamStore::new();
        let stack = GnnStack::new(&mut store, "t", 3, 4, 2, &mut rng()).unwrap();
        let tape = Tape::new();
        let p = store.bind(&tape);
        let a = triangle_with_tail();
        assert!(gnn_forward(&stack, &p, &a, tape.constant(Matrix::zeros(3, 3))).is_err());
        assert_eq!(
            gnn_forward(&stack, &p, &a, tape.constant(Matrix::zeros(4, 2))).unwrap_err(),
            GnnError::InputWidth { expected: 3, found: 2 }
        );
    }

    #[test]
    fn variational_heads() {
        let mut store = ParamStore::new();
        let net = VariationalGnn::new(&mut store, "v", 3, 5, 2, &mut rng()).unwrap();
        store.get_mut(net.log_sigma_head().weight).value = Matrix::zeros(5, 5);
        let a = triangle_with_tail();
        let x = Matrix::from_fn(4, 3, |i, j| (i + j) as f64 * 0.1 - 0.2);
        let tape = Tape::new();
        let p = store.bind(&tape);
        let (mu, sigma) = gnn_forward_variational(&net, &p, &a, tape.constant(x.clone())).unwrap();
        assert_eq!(mu.shape(), (4, 5));
        assert_eq!(sigma.value(), Matrix::ones(4, 5));
        let z = gnn_forward(&net.mean_stack(), &p, &a, tape.constant(x)).unwrap();
        assert_eq!(z.value(), mu.value());
    }

    #[test]
    fn sigma_is_clamped() {
        let mut store = ParamStore::new();
        let net = VariationalGnn::new(&mut store, "v", 2, 2, 2, &mut rng()).unwrap();
        store.get_mut(net.log_sigma_head().weight).value = Matrix::filled(2, 2, 1e4);
        let tape = Tape::new();
        let p = store.bind(&tape);
        let a = Matrix::zeros(1, 1);
        let x = tape.constant(Matrix::filled(1, 2, 1.0));
        let (_, sigma) = gnn_forward_variational(&net, &p, &a, x).unwrap();
        let s = sigma.value();
        assert!(s.as_slice().iter().all(|&v| v <= 10f64.exp() && v >= (-10f64).exp()));
    }
}
