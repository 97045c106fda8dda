//! Synthetic argument trees with planted, context-dependent labels.
//!
//! Every claim carries one parent-signal marker word `P_k`. A non-thesis
//! claim is one of three kinds:
//!
//! - context-governed (probability `s`): label `k` of the governing
//!   ancestor's marker `P_k`. The governing ancestor is the parent, or the
//!   `signal_ancestor`-th ancestor capped at the thesis.
//! - noise (probability `η`): uniform label.
//! - claim-governed (the rest): uniform label `k`, announced by a self
//!   marker `S_k` in the claim's own text.
//!
//! The own `P` marker is drawn independently of the own label, so a reader
//! of the claim text alone recovers only the claim-governed labels.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{majority3, ArgumentTree, ClaimNode, CorpusError, ImpactClass3, LabeledClaim, Stance, VoteRecord};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible spec: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

pub type Result<T> = std::result::Result<T, SynthError>;

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const TOPIC_WORDS: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub trees: usize,
    /// Levels per tree including the thesis, drawn uniformly per tree.
    pub min_depth: usize,
    pub max_depth: usize,
    pub min_branching: usize,
    pub max_branching: usize,
    pub vocab_size: usize,
    pub signal_strength: f64,
    pub noise_rate: f64,
    pub signal_ancestor: usize,
    pub duplication_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            trees: 200,
            min_depth: 2,
            max_depth: 4,
            min_branching: 1,
            max_branching: 3,
            vocab_size: 200,
            signal_strength: 0.9,
            noise_rate: 0.05,
            signal_ancestor: 1,
            duplication_rate: 0.0,
            seed: 1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SynthError::Infeasible(m));
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.signal_strength) || !unit(self.noise_rate) {
            return bad("signal strength and noise rate must lie in [0, 1]".into());
        }
        if self.signal_strength + self.noise_rate > 1.0 + 1e-12 {
            return bad(format!(
                "s + eta = {} exceeds 1",
                self.signal_strength + self.noise_rate
            ));
        }
        if self.min_depth < 2 || self.max_depth < self.min_depth {
            return bad(format!("depth range {}..={} (need 2 <= min <= max)", self.min_depth, self.max_depth));
        }
        if self.min_branching < 1 || self.max_branching < self.min_branching {
            return bad(format!(
                "branching range {}..={} (need 1 <= min <= max)",
                self.min_branching, self.max_branching
            ));
        }
        if self.vocab_size < 20 {
            return bad(format!("vocabulary size {} is below 20", self.vocab_size));
        }
        if self.trees < 1 {
            return bad("at least one tree is required".into());
        }
        if self.signal_ancestor < 1 {
            return bad("signal ancestor must be >= 1".into());
        }
        if !unit(self.duplication_rate) {
            return bad("duplication rate must lie in [0, 1]".into());
        }
        Ok(())
    }

    /// Expected accuracy of the best predictor that reads only the claim.
    pub fn bayes_claim_only(&self) -> f64 {
        (1.0 - self.signal_strength - self.noise_rate) + (self.signal_strength + self.noise_rate) / 3.0
    }

    /// Expected accuracy of the best predictor that also reads the
    /// governing ancestor.
    pub fn bayes_context(&self) -> f64 {
        1.0 - 2.0 * self.noise_rate / 3.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlantKind {
    Context,
    Noise,
    Claim,
}

impl PlantKind {
    pub fn name(self) -> &'static str {
        match self {
            PlantKind::Context => "context",
            PlantKind::Noise => "noise",
            PlantKind::Claim => "claim",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClaimOracle {
    pub topic: String,
    pub id: String,
    pub kind: PlantKind,
    pub label: ImpactClass3,
    /// Class read off the governing ancestor's marker.
    pub context_signal: ImpactClass3,
    /// Set when the text was copied from an earlier claim.
    pub copied_from: Option<(String, String)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BayesRates {
    pub claim_only: f64,
    pub context: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Oracle {
    pub spec: SynthSpec,
    pub parent_markers: [String; 3],
    pub self_markers: [String; 3],
    pub claims: Vec<ClaimOracle>,
}

impl Oracle {
    pub fn analytic(&self) -> BayesRates {
        BayesRates {
            claim_only: self.spec.bayes_claim_only(),
            context: self.spec.bayes_context(),
        }
    }

    pub fn lookup(&self, topic: &str, id: &str) -> Option<&ClaimOracle> {
        self.claims.iter().find(|c| c.topic == topic && c.id == id)
    }

    /// Accuracy of the two ideal predictors on the given claims. Without a
    /// self marker, the claim-only predictor answers the most frequent label
    /// among those claims and the context predictor answers the ancestor's
    /// signal.
    pub fn realized<'a>(&self, claims: impl IntoIterator<Item = &'a ClaimOracle>) -> BayesRates {
        let mut n = 0usize;
        let mut marked = 0usize;
        let mut counts = [0usize; 3];
        let mut signal_hits = 0usize;
        for c in claims {
            n += 1;
            if c.kind == PlantKind::Claim {
                marked += 1;
            } else {
                counts[c.label.index()] += 1;
                if c.label == c.context_signal {
                    signal_hits += 1;
                }
            }
        }
        if n == 0 {
            return BayesRates {
                claim_only: 0.0,
                context: 0.0,
            };
        }
        let best = *counts.iter().max().expect("three classes");
        BayesRates {
            claim_only: (marked + best) as f64 / n as f64,
            context: (marked + signal_hits) as f64 / n as f64,
        }
    }

    /// Realized rates restricted to labeled claims, e.g. one split.
    pub fn realized_on(&self, claims: &[LabeledClaim]) -> BayesRates {
        let index: BTreeMap<(&str, &str), &ClaimOracle> =
            self.claims.iter().map(|c| ((c.topic.as_str(), c.id.as_str()), c)).collect();
        self.realized(claims.iter().filter_map(|c| index.get(&c.key()).copied()))
    }

    pub fn count(&self, kind: PlantKind) -> usize {
        self.claims.iter().filter(|c| c.kind == kind).count()
    }

    /// Key/value sidecar, one `key=value` per line.
    pub fn render(&self) -> String {
        let s = &self.spec;
        let a = self.analytic();
        let r = self.realized(&self.claims);
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("seed", s.seed.to_string());
        kv("trees", s.trees.to_string());
        kv("min_depth", s.min_depth.to_string());
        kv("max_depth", s.max_depth.to_string());
        kv("min_branching", s.min_branching.to_string());
        kv("max_branching", s.max_branching.to_string());
        kv("vocab_size", s.vocab_size.to_string());
        kv("signal_strength", s.signal_strength.to_string());
        kv("noise_rate", s.noise_rate.to_string());
        kv("signal_ancestor", s.signal_ancestor.to_string());
        kv("duplication_rate", s.duplication_rate.to_string());
        kv("markers.parent", self.parent_markers.join(","));
        kv("markers.self", self.self_markers.join(","));
        kv("claims", self.claims.len().to_string());
        for kind in [PlantKind::Context, PlantKind::Noise, PlantKind::Claim] {
            kv(&format!("claims.{}", kind.name()), self.count(kind).to_string());
        }
        kv("bayes.claim_only", a.claim_only.to_string());
        kv("bayes.context", a.context.to_string());
        kv("realized.claim_only", r.claim_only.to_string());
        kv("realized.context", r.context.to_string());
        for c in &self.claims {
            kv(
                &format!("claim.{}/{}", c.topic, c.id),
                format!("{},{},{}", c.kind.name(), c.label.name(), c.context_signal.name()),
            );
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub trees: Vec<ArgumentTree>,
    pub oracle: Oracle,
}

fn pseudo_words<R: Rng>(n: usize, rng: &mut R) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut words = Vec::with_capacity(n);
    while words.len() < n {
        let syllables = rng.gen_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
            w.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
        }
        if seen.insert(w.clone()) {
            words.push(w);
        }
    }
    words
}

/// Votes with `n` in 5..=15 and at least ⌈0.61·n⌉ of them inside the
/// label's group, so the claim survives a >60% agreement filter.
pub fn sample_votes<R: Rng>(label: ImpactClass3, rng: &mut R) -> VoteRecord {
    let group: &[usize] = match label {
        ImpactClass3::NotImpactful => &[0, 1],
        ImpactClass3::MediumImpact => &[2],
        ImpactClass3::Impactful => &[3, 4],
    };
    let others: Vec<usize> = (0..5).filter(|i| !group.contains(i)).collect();
    let n: u32 = rng.gen_range(5..=15);
    let m = rng.gen_range((61 * n).div_ceil(100)..=n);
    let mut counts = [0u32; 5];
    for _ in 0..m {
        counts[group[rng.gen_range(0..group.len())]] += 1;
    }
    for _ in m..n {
        counts[others[rng.gen_range(0..others.len())]] += 1;
    }
    VoteRecord::new(counts)
}

struct Draft {
    parent: Option<usize>,
    level: usize,
    signal: usize,
}

pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let words = pseudo_words(spec.vocab_size, &mut rng);
    let parent_markers = [words[0].clone(), words[1].clone(), words[2].clone()];
    let self_markers = [words[3].clone(), words[4].clone(), words[5].clone()];
    let pool = &words[6..];
    let class = |k: usize| ImpactClass3::from_index(k).expect("three classes");

    let mut trees = Vec::with_capacity(spec.trees);
    let mut claims: Vec<ClaimOracle> = Vec::new();
    // Earlier candidates for copying: (topic, id, parent id, label, text, signal).
    let mut copyable: Vec<(String, String, String, ImpactClass3, String, usize)> = Vec::new();

    for t in 0..spec.trees {
        let topic = format!("synth-{t:04}");
        let topic_words: Vec<&str> = sample(&mut rng, pool.len(), TOPIC_WORDS.min(pool.len()))
            .into_iter()
            .map(|i| pool[i].as_str())
            .collect();
        let depth = rng.gen_range(spec.min_depth..=spec.max_depth);

        let mut drafts = vec![Draft {
            parent: None,
            level: 0,
            signal: 0,
        }];
        let mut i = 0;
        while i < drafts.len() {
            let level = drafts[i].level;
            if level + 1 < depth {
                for _ in 0..rng.gen_range(spec.min_branching..=spec.max_branching) {
                    drafts.push(Draft {
                        parent: Some(i),
                        level: level + 1,
                        signal: 0,
                    });
                }
            }
            i += 1;
        }

        let id_of = |i: usize| format!("c{i:03}");
        let mut nodes = Vec::with_capacity(drafts.len());
        for i in 0..drafts.len() {
            let filler = |rng: &mut ChaCha8Rng| -> Vec<String> {
                (0..rng.gen_range(4..=7))
                    .map(|_| {
                        if rng.gen_bool(0.75) {
                            topic_words[rng.gen_range(0..topic_words.len())].to_string()
                        } else {
                            pool[rng.gen_range(0..pool.len())].clone()
                        }
                    })
                    .collect()
            };
            let insert = |rng: &mut ChaCha8Rng, words: &mut Vec<String>, w: &str| {
                let at = rng.gen_range(0..=words.len());
                words.insert(at, w.to_string());
            };

            let Some(parent) = drafts[i].parent else {
                let signal = rng.gen_range(0..3);
                drafts[i].signal = signal;
                let mut text = filler(&mut rng);
                insert(&mut rng, &mut text, &parent_markers[signal]);
                let label = class(rng.gen_range(0..3));
                nodes.push(ClaimNode {
                    id: id_of(i),
                    parent_id: None,
                    stance: Stance::Thesis,
                    text: text.join(" "),
                    votes: sample_votes(label, &mut rng),
                });
                continue;
            };

            let level = drafts[i].level;
            let mut governor = parent;
            for _ in 1..spec.signal_ancestor.min(level) {
                governor = drafts[governor].parent.expect("below the thesis");
            }
            let context_signal = class(drafts[governor].signal);

            let u: f64 = rng.gen();
            let kind = if u < spec.signal_strength {
                PlantKind::Context
            } else if u < spec.signal_strength + spec.noise_rate {
                PlantKind::Noise
            } else {
                PlantKind::Claim
            };
            let label = match kind {
                PlantKind::Context => context_signal,
                _ => class(rng.gen_range(0..3)),
            };
            let stance = if rng.gen_bool(0.5) {
                Stance::Support
            } else {
                Stance::Oppose
            };
            let parent_id = id_of(parent);

            let mut copied = None;
            if kind != PlantKind::Claim && spec.duplication_rate > 0.0 && rng.gen_bool(spec.duplication_rate) {
                let candidates: Vec<usize> = copyable
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.3 != label && !(c.0 == topic && c.2 == parent_id))
                    .map(|(k, _)| k)
                    .collect();
                if !candidates.is_empty() {
                    copied = Some(candidates[rng.gen_range(0..candidates.len())]);
                }
            }
            let (text, signal, copied_from) = match copied {
                Some(k) => {
                    let c = &copyable[k];
                    (c.4.clone(), c.5, Some((c.0.clone(), c.1.clone())))
                }
                None => {
                    let signal = rng.gen_range(0..3);
                    let mut text = filler(&mut rng);
                    insert(&mut rng, &mut text, &parent_markers[signal]);
                    if kind == PlantKind::Claim {
                        insert(&mut rng, &mut text, &self_markers[label.index()]);
                    }
                    (text.join(" "), signal, None)
                }
            };
            drafts[i].signal = signal;
            if kind != PlantKind::Claim {
                copyable.push((topic.clone(), id_of(i), parent_id.clone(), label, text.clone(), signal));
            }
            claims.push(ClaimOracle {
                topic: topic.clone(),
                id: id_of(i),
                kind,
                label,
                context_signal,
                copied_from,
            });
            nodes.push(ClaimNode {
                id: id_of(i),
                parent_id: Some(parent_id),
                stance,
                text,
                votes: sample_votes(label, &mut rng),
            });
        }
        trees.push(ArgumentTree::new(topic, nodes)?);
    }

    Ok(SynthCorpus {
        trees,
        oracle: Oracle {
            spec: spec.clone(),
            parent_markers,
            self_markers,
            claims,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProbeClaim {
    pub topic: String,
    pub id: String,
    pub parent_id: String,
    pub label: ImpactClass3,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProbePair {
    pub text: String,
    pub first: ProbeClaim,
    pub second: ProbeClaim,
}

/// Pairs of claims with identical text, different parents and different
/// majority labels, in corpus order.
pub fn duplicate_claim_probe(trees: &[ArgumentTree]) -> Vec<ProbePair> {
    let mut by_text: BTreeMap<&str, Vec<ProbeClaim>> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    for tree in trees {
        for c in tree.claims() {
            let (Some(parent_id), Ok(label)) = (&c.parent_id, majority3(&c.votes)) else {
                continue;
            };
            let entry = by_text.entry(c.text.as_str()).or_default();
            if entry.is_empty() {
                order.push(c.text.as_str());
            }
            entry.push(ProbeClaim {
                topic: tree.topic().to_string(),
                id: c.id.clone(),
                parent_id: parent_id.clone(),
                label,
            });
        }
    }
    let mut pairs = Vec::new();
    for text in order {
        let group = &by_text[text];
        for (i, a) in group.iter().enumerate() {
            for b in &group[i + 1..] {
                let same_parent = a.topic == b.topic && a.parent_id == b.parent_id;
                if !same_parent && a.label != b.label {
                    pairs.push(ProbePair {
                        text: text.to_string(),
                        first: a.clone(),
                        second: b.clone(),
                    });
                }
            }
        }
    }
    pairs
}
