use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{tokenize, FeatureError, FeatureVector, Result};

/// A named word list. Files are UTF-8, one entry per line; blank lines and
/// lines starting with `#` are ignored and entries are lowercased.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub words: BTreeSet<String>,
}

impl Lexicon {
    pub fn parse(content: &str) -> Self {
        let words = content
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Self { words }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|source| FeatureError::Lexicon {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::parse(&content))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }
}

/// Lexicons keyed by name; iteration order is by name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Lexicons(pub BTreeMap<String, Lexicon>);

impl Lexicons {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, lexicon: Lexicon) {
        self.0.insert(name.into(), lexicon);
    }

    /// The small permissive word lists bundled with the crate.
    pub fn shipped() -> Self {
        let mut l = Self::new();
        for (name, content) in [
            ("arguing", include_str!("../../data/lexicons/arguing.txt")),
            ("hedge", include_str!("../../data/lexicons/hedge.txt")),
            ("negative", include_str!("../../data/lexicons/negative.txt")),
            ("positive", include_str!("../../data/lexicons/positive.txt")),
            ("subjective", include_str!("../../data/lexicons/subjective.txt")),
        ] {
            l.insert(name, Lexicon::parse(content));
        }
        l
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn feature_names(&self) -> impl Iterator<Item = String> + '_ {
        self.0.keys().map(|k| format!("lexicon.{k}"))
    }
}

/// Share of tokens found in each lexicon (0 for text without tokens).
pub fn lexicon_features(text: &str, lexicons: &Lexicons) -> FeatureVector {
    let tokens = tokenize(text);
    let values = lexicons
        .0
        .values()
        .map(|lex| {
            if tokens.is_empty() {
                0.0
            } else {
                tokens.iter().filter(|t| lex.contains(t)).count() as f64 / tokens.len() as f64
            }
        })
        .collect();
    FeatureVector::new(lexicons.feature_names().collect(), values)
}
