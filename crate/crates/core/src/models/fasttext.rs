//! Bag-of-n-grams classifier: hashed n-gram embeddings are averaged and fed
//! to a linear softmax layer.

use std::hash::Hasher;

use fnv::FnvHasher;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Result;
use crate::autodiff::{Gradient, Graph, ParamId, ParamStore, Var};
use crate::corpus::ImpactClass3;
use crate::features::tokenize;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FastTextConfig {
    pub buckets: usize,
    pub dim: usize,
    pub max_ngram: usize,
    pub lr: f64,
    pub epochs: usize,
}

impl Default for FastTextConfig {
    fn default() -> Self {
        Self {
            buckets: 20_000,
            dim: 300,
            max_ngram: 2,
            lr: 0.8,
            epochs: 15,
        }
    }
}

/// Bucket ids of every 1..=`max_ngram` gram of `tokens` under 64-bit
/// FNV-1a, in order of appearance.
pub fn hash_ngrams(tokens: &[String], max_ngram: usize, buckets: usize) -> Vec<usize> {
    let mut ids = Vec::new();
    for n in 1..=max_ngram {
        for w in tokens.windows(n) {
            let mut h = FnvHasher::default();
            h.write(w.join(" ").as_bytes());
            ids.push((h.finish() % buckets as u64) as usize);
        }
    }
    ids
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FastTextModel {
    pub config: FastTextConfig,
    pub store: ParamStore,
    pub embedding: ParamId,
    pub output: ParamId,
    /// Training label distribution, used for text without tokens.
    pub prior: [f64; 3],
}

impl FastTextModel {
    /// Embeddings uniform in ±1/dim, output layer zero.
    pub fn new<R: Rng>(config: FastTextConfig, labels: &[ImpactClass3], rng: &mut R) -> Self {
        let mut store = ParamStore::new();
        let a = 1.0 / config.dim as f64;
        let embedding = store.add_uniform("fasttext.embedding", &[config.buckets, config.dim], a, rng);
        let output = store.add_zeros("fasttext.output", &[config.dim, 3]);
        let mut prior = [0.0; 3];
        for l in labels {
            prior[l.index()] += 1.0;
        }
        let n = labels.len().max(1) as f64;
        prior.iter_mut().for_each(|p| *p /= n);
        Self {
            config,
            store,
            embedding,
            output,
            prior,
        }
    }

    pub fn ngram_ids(&self, text: &str) -> Vec<usize> {
        hash_ngrams(&tokenize(text), self.config.max_ngram, self.config.buckets)
    }

    /// Class distribution for non-empty `ids`.
    pub fn forward(&self, g: &mut Graph, ids: &[usize]) -> Result<Var> {
        let table = g.param(self.embedding);
        let rows = g.embedding_lookup(table, ids)?;
        let hidden = g.mean_pool(rows)?;
        let w = g.param(self.output);
        let logits = g.matmul(hidden, w)?;
        Ok(g.softmax(logits)?)
    }

    pub fn predict_proba(&self, text: &str) -> [f64; 3] {
        let ids = self.ngram_ids(text);
        if ids.is_empty() {
            return self.prior;
        }
        let mut g = Graph::new(&self.store);
        let p = self.forward(&mut g, &ids).expect("ids are in range");
        let d = g.value(p).data();
        [d[0], d[1], d[2]]
    }

    /// One SGD step on a single example; returns its loss. Only the looked
    /// up embedding rows change.
    pub fn sgd_step(&mut self, ids: &[usize], label: ImpactClass3, lr: f64) -> Result<f64> {
        if ids.is_empty() {
            return Ok(0.0);
        }
        let (loss, grads) = {
            let mut g = Graph::new(&self.store);
            let p = self.forward(&mut g, ids)?;
            let loss = g.cross_entropy(p, label.index())?;
            g.backward(loss)?;
            (g.scalar(loss), g.param_grads())
        };
        for (id, grad) in grads {
            match grad {
                Gradient::Rows { rows, .. } => {
                    let t = self.store.get_mut(id);
                    let cols = t.shape()[1];
                    for (r, gr) in rows {
                        let row = &mut t.data_mut()[r * cols..(r + 1) * cols];
                        row.iter_mut().zip(&gr).for_each(|(x, d)| *x -= lr * d);
                    }
                }
                Gradient::Dense(d) => {
                    let t = self.store.get_mut(id);
                    t.data_mut().iter_mut().zip(d.data()).for_each(|(x, d)| *x -= lr * d);
                }
            }
        }
        Ok(loss)
    }
}
