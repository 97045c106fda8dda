//! Structural and linguistic features for the kernel baseline.
//!
//! Text is tokenized by lowercasing and splitting on every character that is
//! not alphanumeric. All extractors are pure functions of their input.

mod lexicon;
mod surface;
mod tfidf;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LabeledClaim;

pub use lexicon::{lexicon_features, Lexicon, Lexicons};
pub use surface::{
    count_syllables, readability, sentence_count, surface_features, Readability, MODALS, SURFACE_NAMES,
};
pub use tfidf::{SparseVec, TfIdfModel};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("cannot fit on an empty corpus")]
    EmptyCorpus,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("lexicon `{path}`: {source}")]
    Lexicon {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("non-finite value in feature `{0}`")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Named dense features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(names: Vec<String>, values: Vec<f64>) -> Self {
        debug_assert_eq!(names.len(), values.len());
        Self { names, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn extend(&mut self, other: FeatureVector) {
        self.names.extend(other.names);
        self.values.extend(other.values);
    }
}

/// u·v / (‖u‖‖v‖), or 0 when either norm is 0.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(FeatureError::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (nu * nv))
}

pub const TREE_NAMES: [&str; 8] = [
    "tree.depth",
    "tree.cos_parent",
    "tree.cos_thesis",
    "tree.parent_votes.no",
    "tree.parent_votes.low",
    "tree.parent_votes.medium",
    "tree.parent_votes.high",
    "tree.parent_votes.very_high",
];

/// Depth C_l, tf-idf cosine to parent and thesis, and the parent's vote
/// profile normalized by its total (zeros when the parent has no votes).
pub fn tree_features(claim: &LabeledClaim, tfidf: &TfIdfModel) -> FeatureVector {
    let target = tfidf.transform(&claim.claim.text);
    let cos = |text: Option<&str>| text.map_or(0.0, |t| target.cosine(&tfidf.transform(t)));
    let parent = claim.context.parent();
    let mut values = vec![
        claim.context_len() as f64,
        cos(parent.map(|p| p.text.as_str())),
        cos(claim.context.thesis().map(|t| t.text.as_str())),
    ];
    let votes = parent.map(|p| p.votes);
    let total = votes.map_or(0, |v| v.total());
    for i in 0..5 {
        values.push(match votes {
            Some(v) if total > 0 => v.counts[i] as f64 / total as f64,
            _ => 0.0,
        });
    }
    FeatureVector::new(TREE_NAMES.iter().map(|s| s.to_string()).collect(), values)
}

/// Selectable blocks of the kernel-model input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureGroup {
    Distance,
    Similarity,
    ParentQuality,
    TfIdf,
    Surface,
    Readability,
    Lexicon,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 7] = [
        FeatureGroup::Distance,
        FeatureGroup::Similarity,
        FeatureGroup::ParentQuality,
        FeatureGroup::TfIdf,
        FeatureGroup::Surface,
        FeatureGroup::Readability,
        FeatureGroup::Lexicon,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureGroup::Distance => "distance",
            FeatureGroup::Similarity => "similarity",
            FeatureGroup::ParentQuality => "parent_quality",
            FeatureGroup::TfIdf => "tfidf",
            FeatureGroup::Surface => "surface",
            FeatureGroup::Readability => "readability",
            FeatureGroup::Lexicon => "lexicon",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.name() == s)
    }

    /// The groups that together make up the linguistic features.
    pub fn linguistic() -> BTreeSet<FeatureGroup> {
        [
            FeatureGroup::TfIdf,
            FeatureGroup::Surface,
            FeatureGroup::Readability,
            FeatureGroup::Lexicon,
        ]
        .into_iter()
        .collect()
    }
}

/// Builds the concatenated vector
/// `[tree | tf-idf | surface | readability | lexicon]`, restricted to the
/// selected groups, with a tf-idf model fit on training claims only.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SvmFeaturizer {
    pub groups: BTreeSet<FeatureGroup>,
    pub tfidf: TfIdfModel,
    pub lexicons: Lexicons,
    schema: Vec<String>,
}

impl SvmFeaturizer {
    pub fn fit(
        train: &[LabeledClaim],
        groups: BTreeSet<FeatureGroup>,
        lexicons: Lexicons,
        max_tfidf_features: Option<usize>,
    ) -> Result<Self> {
        let texts: Vec<&str> = train.iter().map(|c| c.claim.text.as_str()).collect();
        let tfidf = TfIdfModel::fit(&texts, max_tfidf_features)?;
        let mut me = Self {
            groups,
            tfidf,
            lexicons,
            schema: Vec::new(),
        };
        me.schema = me.build_schema();
        Ok(me)
    }

    fn build_schema(&self) -> Vec<String> {
        let mut names = Vec::new();
        let has = |g| self.groups.contains(&g);
        if has(FeatureGroup::Distance) {
            names.push(TREE_NAMES[0].to_string());
        }
        if has(FeatureGroup::Similarity) {
            names.extend(TREE_NAMES[1..3].iter().map(|s| s.to_string()));
        }
        if has(FeatureGroup::ParentQuality) {
            names.extend(TREE_NAMES[3..].iter().map(|s| s.to_string()));
        }
        if has(FeatureGroup::TfIdf) {
            names.extend(self.tfidf.terms().map(|t| format!("tfidf.{t}")));
        }
        if has(FeatureGroup::Surface) {
            names.extend(SURFACE_NAMES.iter().map(|s| s.to_string()));
        }
        if has(FeatureGroup::Readability) {
            names.push("readability.coleman_liau".into());
            names.push("readability.flesch".into());
        }
        if has(FeatureGroup::Lexicon) {
            names.extend(self.lexicons.feature_names());
        }
        names
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn transform(&self, claim: &LabeledClaim) -> Result<Vec<f64>> {
        let has = |g| self.groups.contains(&g);
        let mut out = Vec::with_capacity(self.schema.len());
        if has(FeatureGroup::Distance) || has(FeatureGroup::Similarity) || has(FeatureGroup::ParentQuality) {
            let tree = tree_features(claim, &self.tfidf).values;
            if has(FeatureGroup::Distance) {
                out.push(tree[0]);
            }
            if has(FeatureGroup::Similarity) {
                out.extend_from_slice(&tree[1..3]);
            }
            if has(FeatureGroup::ParentQuality) {
                out.extend_from_slice(&tree[3..]);
            }
        }
        let text = &claim.claim.text;
        if has(FeatureGroup::TfIdf) {
            out.extend(self.tfidf.transform(text).to_dense(self.tfidf.len()));
        }
        if has(FeatureGroup::Surface) {
            out.extend(surface_features(text).values);
        }
        if has(FeatureGroup::Readability) {
            // undefined readability (no words) contributes zeros
            let r = readability(text);
            out.push(r.map_or(0.0, |r| r.coleman_liau));
            out.push(r.map_or(0.0, |r| r.flesch));
        }
        if has(FeatureGroup::Lexicon) {
            out.extend(lexicon_features(text, &self.lexicons).values);
        }
        if let Some(i) = out.iter().position(|x| !x.is_finite()) {
            return Err(FeatureError::NonFinite(self.schema[i].clone()));
        }
        Ok(out)
    }
}

/// Per-feature z-scoring with population statistics; constant features are
/// centred but not scaled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(FeatureError::EmptyCorpus)?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            if r.len() != d {
                return Err(FeatureError::DimensionMismatch {
                    left: d,
                    right: r.len(),
                });
            }
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn transform(&self, row: &mut [f64]) {
        for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
            *x = (*x - m) / s;
        }
    }
}
