//! DiffGroupPool: coarsening through a fixed membership matrix,
//! `X' = Mᵀ Z` and `A' = Mᵀ A M`.

use crate::gnn::TierState;
use crate::numerics::{Matrix, NumericsError, Var};

/// Next tier's weighted adjacency and input embeddings.
#[derive(Debug, Clone)]
pub struct CoarsenedGraph<'t> {
    pub adjacency: Matrix,
    pub x: Var<'t>,
}

/// `Mᵀ A M`. Membership is constant data, so this stays off the tape.
pub fn coarsen_adjacency(a: &Matrix, m: &Matrix) -> Result<Matrix, NumericsError> {
    m.transpose().matmul(a)?.matmul(m)
}

/// Pools `(A, Z)` through `M`. Gradients flow through `Z` only.
pub fn diff_group_pool<'t>(
    a: &Matrix,
    z: Var<'t>,
    m: &Matrix,
) -> Result<CoarsenedGraph<'t>, NumericsError> {
    if a.rows() != m.rows() || a.cols() != m.rows() {
        return Err(NumericsError::Shape {
            op: "diff_group_pool",
            left: a.shape(),
            right: m.shape(),
        });
    }
    let adjacency = coarsen_adjacency(a, m)?;
    let mt = z.tape().constant(m.transpose());
    let x = mt.matmul(z)?;
    Ok(CoarsenedGraph { adjacency, x })
}

/// Builds tier t+1 from a tier whose `z` has been computed.
pub fn pool_tier<'t>(state: &TierState<'t>, m: &Matrix) -> Result<TierState<'t>, NumericsError> {
    let z = state
        .z
        .expect("pool_tier needs the tier's embeddings; run its GNN first");
    let next = diff_group_pool(&state.adjacency, z, m)?;
    Ok(TierState::new(next.adjacency, next.x))
}
