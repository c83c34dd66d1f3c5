use std::collections::HashMap;
use std::sync::Arc;

use super::{AutodiffError, Graph, Real, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Arc<Tensor<T>>,
}

/// Ordered, named parameter tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Registers a parameter and returns its slot.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<usize, AutodiffError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(AutodiffError::InvalidArgument(format!("duplicate parameter {name}")));
        }
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Param {
            name,
            value: Arc::new(value),
        });
        Ok(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn get(&self, slot: usize) -> &Tensor<T> {
        &self.params[slot].value
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.slot(name).map(|i| self.get(i))
    }

    pub fn name(&self, slot: usize) -> &str {
        &self.params[slot].name
    }

    /// Mutable access; copies the tensor if a graph still shares it.
    pub fn get_mut(&mut self, slot: usize) -> &mut Tensor<T> {
        Arc::make_mut(&mut self.params[slot].value)
    }

    /// Replaces a value, keeping its shape.
    pub fn set(&mut self, slot: usize, value: Tensor<T>) -> Result<(), AutodiffError> {
        let current = self.get(slot);
        if current.shape() != value.shape() {
            return Err(AutodiffError::Shape {
                op: "set_param",
                detail: format!("{}: {:?} -> {:?}", self.name(slot), current.shape(), value.shape()),
            });
        }
        self.params[slot].value = Arc::new(value);
        Ok(())
    }

    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Adds every parameter to `g` as a gradient-tracked leaf.
    pub fn bind(&self, g: &mut Graph<T>, requires_grad: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| g.shared(Arc::clone(&p.value), requires_grad))
            .collect()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: Arc::new(p.value.cast()),
                })
                .collect(),
            index: self.index.clone(),
        }
    }
}
