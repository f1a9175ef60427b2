use indexmap::IndexMap;

use crate::error::{shape_err, Error, Result};

use super::{Gradients, Graph, Scalar, Tensor, Var};

/// Ordered collection of named parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    entries: IndexMap<String, Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            entries: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.entries.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::Data(format!("missing parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::Data(format!("missing parameter `{name}`")))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(Tensor::numel).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    /// Checks that `other` has exactly the same names and shapes.
    pub fn check_layout<U: Scalar>(&self, other: &ParamStore<U>) -> Result<()> {
        if self.len() != other.len() {
            return Err(shape_err!(
                "parameter count {} vs {}",
                self.len(),
                other.len()
            ));
        }
        for ((na, ta), (nb, tb)) in self.iter().zip(other.iter()) {
            if na != nb || ta.shape() != tb.shape() {
                return Err(shape_err!(
                    "parameter `{na}` {:?} vs `{nb}` {:?}",
                    ta.shape(),
                    tb.shape()
                ));
            }
        }
        Ok(())
    }

    /// Records every parameter on `g`, as trainable leaves or as constants.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> BoundParams {
        let vars = self
            .entries
            .iter()
            .map(|(k, t)| {
                let v = if trainable {
                    g.leaf(t.clone())
                } else {
                    g.constant(t.clone())
                };
                (k.clone(), v)
            })
            .collect();
        BoundParams { vars }
    }

    pub fn bit_eq(&self, other: &Self) -> bool {
        self.len() == other.len()
            && self
                .iter()
                .zip(other.iter())
                .all(|((na, ta), (nb, tb))| na == nb && ta.bit_eq(tb))
    }
}

/// Graph handles for a bound [`ParamStore`], looked up by name.
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: IndexMap<String, Var>,
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Data(format!("parameter `{name}` not bound")))
    }

    /// Collects gradients in store order; parameters that did not influence
    /// the loss get zeros.
    pub fn gradients<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        grads: &Gradients<T>,
    ) -> ParamStore<T> {
        let mut out = ParamStore::new();
        for (name, t) in store.iter() {
            let g = self
                .vars
                .get(name)
                .and_then(|&v| grads.get(v))
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(t.shape()));
            out.insert(name, g);
        }
        out
    }
}
