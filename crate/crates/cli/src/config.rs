//! Optional JSON config file and flag > config > default resolution.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

/// Every key is optional and named like its flag, with `_` for `-`.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub min_votes: Option<u64>,
    pub min_agreement: Option<f64>,
    pub scheme: Option<String>,
    pub split_ratios: Option<String>,
    pub seed: Option<u64>,
    pub split_dir: Option<PathBuf>,
    pub model: Option<String>,
    pub context: Option<String>,
    pub window: Option<usize>,
    pub seeds: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub patience: Option<usize>,
    pub embed_dim: Option<usize>,
    pub hidden: Option<usize>,
    pub embeddings: Option<PathBuf>,
    pub lexicon: Option<BTreeMap<String, PathBuf>>,
    pub format: Option<String>,
    pub subset: Option<String>,
    pub min_f1: Option<f64>,
    pub trees: Option<usize>,
    pub min_depth: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_branching: Option<usize>,
    pub max_branching: Option<usize>,
    pub vocab_size: Option<usize>,
    pub signal: Option<f64>,
    pub noise: Option<f64>,
    pub signal_ancestor: Option<usize>,
    pub duplication: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Flag,
    Config,
    Default,
}

/// Records where each resolved value came from.
#[derive(Debug, Default)]
pub struct Resolver {
    pub sources: BTreeMap<String, Source>,
}

impl Resolver {
    pub fn pick<T>(&mut self, key: &str, flag: Option<T>, config: Option<T>, default: T) -> T {
        let (value, source) = match (flag, config) {
            (Some(v), _) => (v, Source::Flag),
            (None, Some(v)) => (v, Source::Config),
            (None, None) => (default, Source::Default),
        };
        self.sources.insert(key.to_string(), source);
        value
    }

    pub fn pick_opt<T>(&mut self, key: &str, flag: Option<T>, config: Option<T>) -> Option<T> {
        let (value, source) = match (flag, config) {
            (Some(v), _) => (Some(v), Source::Flag),
            (None, Some(v)) => (Some(v), Source::Config),
            (None, None) => (None, Source::Default),
        };
        self.sources.insert(key.to_string(), source);
        value
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_config_beats_default() {
        let mut r = Resolver::default();
        assert_eq!(r.pick("a", Some(1), Some(2), 3), 1);
        assert_eq!(r.pick("b", None, Some(2), 3), 2);
        assert_eq!(r.pick("c", None::<i32>, None, 3), 3);
        assert_eq!(r.sources["a"], Source::Flag);
        assert_eq!(r.sources["b"], Source::Config);
        assert_eq!(r.sources["c"], Source::Default);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<ConfigFile>(r#"{"min_votes": 3}"#).is_ok());
        assert!(serde_json::from_str::<ConfigFile>(r#"{"min_vote": 3}"#).is_err());
    }
}
