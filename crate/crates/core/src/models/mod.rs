//! Classifier families and context-composition strategies.
//!
//! | family     | input                                   |
//! |------------|-----------------------------------------|
//! | majority   | nothing (modal training label)          |
//! | svm        | standardized [`crate::features`] vector |
//! | fasttext   | hashed uni/bigrams of the claim text    |
//! | bilstm     | claim tokens plus windowed ancestors    |

pub mod fasttext;
pub mod majority;
pub mod neural;
pub mod svm;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::corpus::{ImpactClass3, LabeledClaim};
use crate::features::FeatureError;

pub use fasttext::{FastTextConfig, FastTextModel};
pub use majority::MajorityModel;
pub use neural::{NeuralConfig, NeuralModel, Vocab};
pub use svm::{rbf_kernel, SvmConfig, SvmModel, SvmPipeline};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("empty training set")]
    EmptyTrain,
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("empty token list")]
    EmptyTokens,
    #[error("empty context set")]
    EmptyContext,
    #[error("invalid gamma {0}; must be > 0")]
    InvalidGamma(f64),
    #[error("invalid window {0}; must lie in 1..=4")]
    InvalidWindow(usize),
    #[error("unknown {kind} `{value}`")]
    Unknown { kind: &'static str, value: String },
    #[error("model `{family}` does not support context strategy `{strategy}`")]
    UnsupportedStrategy { family: ModelFamily, strategy: ContextStrategy },
    #[error("embeddings line {line}: {reason}")]
    Embeddings { line: usize, reason: String },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

pub const MAX_WINDOW: usize = 4;

/// How much of the ancestor path a model sees. Windows count ancestors
/// backwards from the parent; the effective context is `min(i, C_l)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContextStrategy {
    ClaimOnly,
    ClaimPlusParent,
    Flat(usize),
    Attention(usize),
    Gru(usize),
}

impl ContextStrategy {
    /// Parses the `--context` name; `window` is ignored for `none` and
    /// `parent`.
    pub fn parse(name: &str, window: usize) -> Result<Self> {
        let windowed = |f: fn(usize) -> ContextStrategy| {
            if (1..=MAX_WINDOW).contains(&window) {
                Ok(f(window))
            } else {
                Err(ModelError::InvalidWindow(window))
            }
        };
        match name {
            "none" => Ok(ContextStrategy::ClaimOnly),
            "parent" => Ok(ContextStrategy::ClaimPlusParent),
            "flat" => windowed(ContextStrategy::Flat),
            "attention" => windowed(ContextStrategy::Attention),
            "gru" => windowed(ContextStrategy::Gru),
            other => Err(ModelError::Unknown {
                kind: "context strategy",
                value: other.to_string(),
            }),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ContextStrategy::ClaimOnly => "none",
            ContextStrategy::ClaimPlusParent => "parent",
            ContextStrategy::Flat(_) => "flat",
            ContextStrategy::Attention(_) => "attention",
            ContextStrategy::Gru(_) => "gru",
        }
    }

    /// Number of ancestors requested (0 for claim-only).
    pub fn window(self) -> usize {
        match self {
            ContextStrategy::ClaimOnly => 0,
            ContextStrategy::ClaimPlusParent => 1,
            ContextStrategy::Flat(i) | ContextStrategy::Attention(i) | ContextStrategy::Gru(i) => i,
        }
    }
}

impl fmt::Display for ContextStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContextStrategy::ClaimOnly | ContextStrategy::ClaimPlusParent => f.write_str(self.name()),
            _ => write!(f, "{}({})", self.name(), self.window()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelFamily {
    Majority,
    Svm,
    FastText,
    BiLstm,
}

impl ModelFamily {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "majority" => Ok(ModelFamily::Majority),
            "svm" => Ok(ModelFamily::Svm),
            "fasttext" => Ok(ModelFamily::FastText),
            "bilstm" => Ok(ModelFamily::BiLstm),
            other => Err(ModelError::Unknown {
                kind: "model family",
                value: other.to_string(),
            }),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Majority => "majority",
            ModelFamily::Svm => "svm",
            ModelFamily::FastText => "fasttext",
            ModelFamily::BiLstm => "bilstm",
        }
    }

    /// Only the neural encoder composes context; the baselines are
    /// claim-only.
    pub fn supports(self, strategy: ContextStrategy) -> bool {
        self == ModelFamily::BiLstm || strategy == ContextStrategy::ClaimOnly
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > p[best] {
            best = i;
        }
    }
    best
}

/// A trained classifier of any family.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TrainedModel {
    Majority(MajorityModel),
    Svm(Box<SvmPipeline>),
    FastText(FastTextModel),
    Neural(Box<NeuralModel>),
}

impl TrainedModel {
    pub fn family(&self) -> ModelFamily {
        match self {
            TrainedModel::Majority(_) => ModelFamily::Majority,
            TrainedModel::Svm(_) => ModelFamily::Svm,
            TrainedModel::FastText(_) => ModelFamily::FastText,
            TrainedModel::Neural(_) => ModelFamily::BiLstm,
        }
    }

    /// Class distribution. For the SVM this is a softmax over the
    /// one-vs-rest decision values.
    pub fn predict_proba(&self, claim: &LabeledClaim) -> Result<[f64; 3]> {
        match self {
            TrainedModel::Majority(m) => Ok(m.predict_proba()),
            TrainedModel::Svm(m) => m.predict_proba(claim),
            TrainedModel::FastText(m) => Ok(m.predict_proba(&claim.claim.text)),
            TrainedModel::Neural(m) => m.predict_proba(claim),
        }
    }

    pub fn predict(&self, claim: &LabeledClaim) -> Result<ImpactClass3> {
        let p = self.predict_proba(claim)?;
        Ok(ImpactClass3::from_index(argmax(&p)).expect("three classes"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}
