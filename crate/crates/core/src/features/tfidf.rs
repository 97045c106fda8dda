use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{tokenize, FeatureError, Result};

/// Sparse vector as (column, value) pairs sorted by column.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVec {
    pub entries: Vec<(usize, f64)>,
}

impl SparseVec {
    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&(_, v)| v == 0.0)
    }

    pub fn dot(&self, other: &SparseVec) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.entries.len() && j < other.entries.len() {
            let (a, b) = (self.entries[i], other.entries[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a.1 * b.1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn cosine(&self, other: &SparseVec) -> f64 {
        let d = self.norm() * other.norm();
        if d == 0.0 {
            0.0
        } else {
            self.dot(other) / d
        }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }
}

/// Unigram and bigram tf-idf with smoothed idf
/// `ln((1 + N) / (1 + df)) + 1` and L2-normalized output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TfIdfModel {
    vocabulary: BTreeMap<String, usize>,
    idf: Vec<f64>,
    fit_corpus_size: usize,
}

fn terms(text: &str) -> Vec<String> {
    let toks = tokenize(text);
    let mut out = toks.clone();
    out.extend(toks.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    out
}

impl TfIdfModel {
    /// Fits on `texts`. With `max_features`, only the terms with the highest
    /// document frequency are kept (ties broken by term order).
    pub fn fit<S: AsRef<str>>(texts: &[S], max_features: Option<usize>) -> Result<Self> {
        if texts.is_empty() {
            return Err(FeatureError::EmptyCorpus);
        }
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for t in texts {
            let unique: BTreeSet<String> = terms(t.as_ref()).into_iter().collect();
            for term in unique {
                *df.entry(term).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = df.into_iter().collect();
        if let Some(k) = max_features {
            kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            kept.truncate(k);
            kept.sort_by(|a, b| a.0.cmp(&b.0));
        }
        let n = texts.len() as f64;
        let idf = kept.iter().map(|(_, d)| ((1.0 + n) / (1.0 + *d as f64)).ln() + 1.0).collect();
        let vocabulary = kept.into_iter().enumerate().map(|(i, (t, _))| (t, i)).collect();
        Ok(Self {
            vocabulary,
            idf,
            fit_corpus_size: texts.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.idf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idf.is_empty()
    }

    pub fn fit_corpus_size(&self) -> usize {
        self.fit_corpus_size
    }

    pub fn index(&self, term: &str) -> Option<usize> {
        self.vocabulary.get(term).copied()
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.index(term).map(|i| self.idf[i])
    }

    /// Terms in column order.
    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.vocabulary.keys().map(String::as_str)
    }

    pub fn transform(&self, text: &str) -> SparseVec {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for term in terms(text) {
            if let Some(&i) = self.vocabulary.get(&term) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let mut entries: Vec<(usize, f64)> = counts.into_iter().map(|(i, tf)| (i, tf * self.idf[i])).collect();
        let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            entries.iter_mut().for_each(|(_, v)| *v /= norm);
        }
        SparseVec { entries }
    }
}
