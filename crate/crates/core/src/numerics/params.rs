use super::{Gradients, Matrix, NumericsError, Tape, Var};

/// A trainable matrix and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub grad: Option<Matrix>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered, named collection of trainable parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

/// Parameters of a [`ParamStore`] recorded as leaves on one tape.
pub struct BoundParams<'t> {
    vars: Vec<Var<'t>>,
}

impl<'t> BoundParams<'t> {
    pub fn var(&self, id: ParamId) -> Var<'t> {
        self.vars[id.0]
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            value,
            grad: None,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    /// Records every parameter as a `requires_grad` leaf.
    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundParams<'t> {
        BoundParams {
            vars: self
                .params
                .iter()
                .map(|p| tape.leaf(p.value.clone(), true))
                .collect(),
        }
    }

    /// Adds the gradients of a backward pass into each parameter's `grad`.
    /// Parameters the loss did not reach receive a zero gradient.
    pub fn accumulate(
        &mut self,
        bound: &BoundParams<'_>,
        grads: &Gradients,
    ) -> Result<(), NumericsError> {
        for (p, v) in self.params.iter_mut().zip(&bound.vars) {
            let (r, c) = p.value.shape();
            let acc = p.grad.get_or_insert_with(|| Matrix::zeros(r, c));
            if let Some(g) = grads.get(v) {
                acc.add_assign(g)?;
            }
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }
}
