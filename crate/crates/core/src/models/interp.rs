use serde::Serialize;
use thiserror::Error;

use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterpError {
    #[error("endpoint dimensions differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("interpolation needs at least 2 steps, got {0}")]
    TooFewSteps(usize),
}

/// `z_i = (1 − α_i) z_a + α_i z_b` with `α_i = i / (steps − 1)`.
pub fn interpolate_latent(za: &[f64], zb: &[f64], steps: usize) -> Result<Vec<Vec<f64>>, InterpError> {
    if za.len() != zb.len() {
        return Err(InterpError::DimMismatch(za.len(), zb.len()));
    }
    if steps < 2 {
        return Err(InterpError::TooFewSteps(steps));
    }
    Ok((0..steps)
        .map(|i| {
            let alpha = i as f64 / (steps - 1) as f64;
            if i + 1 == steps {
                return zb.to_vec();
            }
            za.iter()
                .zip(zb)
                .map(|(a, b)| (1.0 - alpha) * a + alpha * b)
                .collect()
        })
        .collect())
}

/// Mean off-diagonal edge probability and the most probable pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeSummary {
    pub mean_probability: f64,
    /// `(i, j, p)` with `i < j`, highest `p` first, ties by index.
    pub top_edges: Vec<(usize, usize, f64)>,
}

pub fn summarize_edges(a_hat: &Matrix, k: usize) -> EdgeSummary {
    let n = a_hat.rows();
    let mut pairs: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, a_hat[(i, j)]))
        .collect();
    let mean_probability = if pairs.is_empty() {
        0.0
    } else {
        pairs.iter().map(|p| p.2).sum::<f64>() / pairs.len() as f64
    };
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    pairs.truncate(k);
    EdgeSummary {
        mean_probability,
        top_edges: pairs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        let za = [1.0, -2.0, 0.25];
        let zb = [3.0, 4.0, 0.75];
        let path = interpolate_latent(&za, &zb, 3).unwrap();
        assert_eq!(path.len(), 3);
        assert_eq!(path[0], za);
        assert_eq!(path[2], zb);
        assert_eq!(path[1], vec![2.0, 1.0, 0.5]);
        assert_eq!(interpolate_latent(&za, &zb, 2).unwrap(), vec![za.to_vec(), zb.to_vec()]);
    }

    #[test]
    fn errors() {
        assert_eq!(interpolate_latent(&[1.0], &[1.0, 2.0], 3), Err(InterpError::DimMismatch(1, 2)));
        assert_eq!(interpolate_latent(&[1.0], &[2.0], 1), Err(InterpError::TooFewSteps(1)));
    }

    #[test]
    fn identical_endpoints() {
        let path = interpolate_latent(&[0.7, 0.1], &[0.7, 0.1], 5).unwrap();
        assert!(path.iter().all(|z| z == &[0.7, 0.1]));
    }

    #[test]
    fn edge_summary() {
        let a = Matrix::from_rows(&[[0.0, 0.9, 0.1], [0.9, 0.0, 0.5], [0.1, 0.5, 0.0]]).unwrap();
        let s = summarize_edges(&a, 2);
        assert!((s.mean_probability - 0.5).abs() < 1e-15);
        assert_eq!(s.top_edges, vec![(0, 1, 0.9), (1, 2, 0.5)]);
    }
}
