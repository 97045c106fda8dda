use std::ops::{Deref, DerefMut};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AutodiffError, Gradient, Result, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named trainable tensors. Serializes as its [`Checkpoint`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "Checkpoint", try_from = "Checkpoint")]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Arc<Tensor>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.values.push(Arc::new(value));
        ParamId(self.values.len() - 1)
    }

    /// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)); vectors use
    /// their length for both fans.
    pub fn add_xavier<R: Rng>(&mut self, name: impl Into<String>, shape: &[usize], rng: &mut R) -> ParamId {
        let (fan_in, fan_out) = match shape {
            [r, c] => (*r, *c),
            [n] => (*n, *n),
            _ => (1, 1),
        };
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        self.add_uniform(name, shape, a, rng)
    }

    pub fn add_uniform<R: Rng>(&mut self, name: impl Into<String>, shape: &[usize], a: f64, rng: &mut R) -> ParamId {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-a..=a)).collect();
        self.add(name, Tensor::new(shape.to_vec(), data).expect("shape matches data"))
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub(crate) fn shared(&self, id: ParamId) -> Arc<Tensor> {
        Arc::clone(&self.values[id.0])
    }

    /// Mutable access; copies the tensor only if a tape still shares it.
    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        Arc::make_mut(&mut self.values[id.0])
    }

    pub fn num_values(&self) -> usize {
        self.values.iter().map(|t| t.len()).sum()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            tensors: self
                .names
                .iter()
                .zip(&self.values)
                .map(|(name, t)| NamedTensor {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    values: t.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let mut store = Self::new();
        for t in &ckpt.tensors {
            if store.find(&t.name).is_some() {
                return Err(AutodiffError::Checkpoint(format!("duplicate tensor `{}`", t.name)));
            }
            let tensor = Tensor::new(t.shape.clone(), t.values.clone())
                .map_err(|e| AutodiffError::Checkpoint(format!("tensor `{}`: {e}", t.name)))?;
            store.add(t.name.clone(), tensor);
        }
        Ok(store)
    }
}

impl From<ParamStore> for Checkpoint {
    fn from(store: ParamStore) -> Self {
        store.to_checkpoint()
    }
}

impl TryFrom<Checkpoint> for ParamStore {
    type Error = AutodiffError;

    fn try_from(ckpt: Checkpoint) -> Result<Self> {
        ParamStore::from_checkpoint(&ckpt)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Serializable container of named tensors. JSON numbers use the shortest
/// representation that parses back to the same `f64`, so a save/load round
/// trip is exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| AutodiffError::Checkpoint(e.to_string()))
    }
}

/// A tape bound to a parameter store. Parameters become leaves on first use
/// and share storage with the store.
pub struct Graph<'s> {
    tape: Tape,
    store: &'s ParamStore,
    bound: Vec<Option<Var>>,
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Self {
            tape: Tape::new(),
            store,
            bound: vec![None; store.len()],
        }
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.tape.leaf_shared(self.store.shared(id), true);
        self.bound[id.0] = Some(v);
        v
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    /// Gradients of every parameter used on this graph, after backward.
    pub fn param_grads(&self) -> Vec<(ParamId, Gradient)> {
        self.bound
            .iter()
            .enumerate()
            .filter_map(|(i, v)| {
                let v = (*v)?;
                self.tape.gradient(v).map(|g| (ParamId(i), g))
            })
            .collect()
    }
}

impl Deref for Graph<'_> {
    type Target = Tape;
    fn deref(&self) -> &Tape {
        &self.tape
    }
}

impl DerefMut for Graph<'_> {
    fn deref_mut(&mut self) -> &mut Tape {
        &mut self.tape
    }
}
