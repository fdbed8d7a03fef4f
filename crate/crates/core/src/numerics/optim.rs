use serde::{Deserialize, Serialize};

use super::{Matrix, NumericsError, ParamStore};

/// In-place first-order update of a [`ParamStore`].
///
/// Every parameter must carry a gradient; gradients are cleared after the
/// step, so the next step needs a fresh backward pass.
pub trait Optimizer {
    fn step(&mut self, params: &mut ParamStore) -> Result<(), NumericsError>;
    fn learning_rate(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn build(self, learning_rate: f64) -> Box<dyn Optimizer> {
        match self {
            OptimizerKind::Sgd => Box::new(Sgd::new(learning_rate)),
            OptimizerKind::Adam => Box::new(Adam::new(learning_rate)),
        }
    }
}

fn check_grads(params: &ParamStore) -> Result<(), NumericsError> {
    match params.iter().find(|p| p.grad.is_none()) {
        Some(p) => Err(NumericsError::MissingGrad(p.name.clone())),
        None => Ok(()),
    }
}

#[derive(Debug, Clone)]
pub struct Sgd {
    pub learning_rate: f64,
    pub step_count: u64,
}

impl Sgd {
    pub fn new(learning_rate: f64) -> Self {
        assert!(learning_rate > 0.0, "learning rate must be positive");
        Self {
            learning_rate,
            step_count: 0,
        }
    }
}

impl Optimizer for Sgd {
    fn step(&mut self, params: &mut ParamStore) -> Result<(), NumericsError> {
        check_grads(params)?;
        for p in params.iter_mut() {
            let g = p.grad.take().expect("checked above");
            for (w, g) in p.value.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *w -= self.learning_rate * g;
            }
        }
        self.step_count += 1;
        Ok(())
    }

    fn learning_rate(&self) -> f64 {
        self.learning_rate
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        assert!(learning_rate > 0.0, "learning rate must be positive");
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut ParamStore) -> Result<(), NumericsError> {
        check_grads(params)?;
        if self.first.is_empty() {
            self.first = params
                .iter()
                .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
                .collect();
            self.second = self.first.clone();
        }
        assert_eq!(self.first.len(), params.len(), "optimizer bound to another store");

        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params
            .iter_mut()
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            let g = p.grad.take().expect("checked above");
            if m.shape() != p.value.shape() {
                return Err(NumericsError::shape("adam", m.shape(), p.value.shape()));
            }
            let w = p.value.as_mut_slice();
            let (ms, vs) = (m.as_mut_slice(), v.as_mut_slice());
            for (k, &gk) in g.as_slice().iter().enumerate() {
                ms[k] = self.beta1 * ms[k] + (1.0 - self.beta1) * gk;
                vs[k] = self.beta2 * vs[k] + (1.0 - self.beta2) * gk * gk;
                let m_hat = ms[k] / c1;
                let v_hat = vs[k] / c2;
                w[k] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }

    fn learning_rate(&self) -> f64 {
        self.learning_rate
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(value: f64, grad: Option<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.add("w", Matrix::scalar(value));
        s.get_mut(id).grad = grad.map(Matrix::scalar);
        s
    }

    #[test]
    fn sgd_definition() {
        let mut s = store_with(1.0, Some(1.0));
        Sgd::new(0.1).step(&mut s).unwrap();
        let p = s.iter().next().unwrap();
        assert!((p.value[(0, 0)] - 0.9).abs() < 1e-15);
        assert!(p.grad.is_none());
    }

    #[test]
    fn zero_grad_leaves_params() {
        let mut s = store_with(1.5, Some(0.0));
        Sgd::new(0.1).step(&mut s).unwrap();
        assert_eq!(s.iter().next().unwrap().value[(0, 0)], 1.5);
        let mut s = store_with(1.5, Some(0.0));
        Adam::new(0.1).step(&mut s).unwrap();
        assert_eq!(s.iter().next().unwrap().value[(0, 0)], 1.5);
    }

    #[test]
    fn missing_grad_is_contract_error() {
        let mut s = store_with(1.0, None);
        assert_eq!(
            Sgd::new(0.1).step(&mut s).unwrap_err(),
            NumericsError::MissingGrad("w".into())
        );
        assert!(Adam::new(0.1).step(&mut s).is_err());
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        // m̂ = g and v̂ = g² after one step, so |Δw| = lr·|g|/(|g| + ε).
        for g in [3.0, -0.02, 250.0] {
            let mut s = store_with(0.0, Some(g));
            Adam::new(0.01).step(&mut s).unwrap();
            let w = s.iter().next().unwrap().value[(0, 0)];
            let expected = -0.01 * g / (f64::abs(g) + 1e-8);
            assert!((w - expected).abs() < 1e-15, "g={g}: {w} vs {expected}");
        }
    }

    #[test]
    fn steps_are_deterministic() {
        let run = || {
            let mut s = store_with(0.3, None);
            let mut opt = Adam::new(0.05);
            for k in 0..10 {
                s.iter_mut().next().unwrap().grad = Some(Matrix::scalar((k as f64).sin()));
                opt.step(&mut s).unwrap();
            }
            let w = s.iter().next().unwrap().value[(0, 0)];
            w
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }
}
