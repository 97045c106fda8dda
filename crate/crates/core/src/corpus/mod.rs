//! Argument-tree corpora with per-claim impact votes.
//!
//! A corpus is a list of [`ArgumentTree`]s. Every non-thesis claim carries a
//! five-category [`VoteRecord`]; labels and agreement scores are derived from
//! those votes, and [`filter_claims`] turns the trees into prediction targets
//! ([`LabeledClaim`]) that remember their ancestor context.

mod format;
mod split;
mod stats;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use format::{escape_field, parse_corpus, parse_corpus_str, unescape_field, write_corpus};
pub use split::{split, Split, SplitRatios};
pub use stats::{corpus_stats, StatsFilters, StatsReport};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("tree `{topic}`: duplicate claim id `{id}`")]
    DuplicateId { topic: String, id: String },
    #[error("tree `{topic}`: claim `{id}` references missing parent `{parent}`")]
    DanglingParent {
        topic: String,
        id: String,
        parent: String,
    },
    #[error("tree `{topic}`: no thesis")]
    NoThesis { topic: String },
    #[error("tree `{topic}`: multiple theses ({ids})")]
    MultipleTheses { topic: String, ids: String },
    #[error("tree `{topic}`: cycle through claim `{id}`")]
    Cycle { topic: String, id: String },
    #[error("tree `{topic}`: claim `{id}` has stance {stance} inconsistent with its parent link")]
    StanceMismatch {
        topic: String,
        id: String,
        stance: Stance,
    },
    #[error("tree `{topic}`: claim `{id}` has empty text")]
    EmptyText { topic: String, id: String },
    #[error("vote record has zero total votes")]
    ZeroVotes,
    #[error("tree `{topic}`: unknown claim `{id}`")]
    UnknownClaim { topic: String, id: String },
    #[error("tree `{topic}`: claim `{id}` is the thesis and has no context")]
    ThesisNotTarget { topic: String, id: String },
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("split ratios must sum to 1, got {0}")]
    InvalidRatios(f64),
    #[error("need at least 3 claims to split, got {0}")]
    TooFewClaims(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// The five impact categories, in canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ImpactClass5 {
    NoImpact,
    LowImpact,
    MediumImpact,
    HighImpact,
    VeryHighImpact,
}

impl ImpactClass5 {
    pub const ALL: [ImpactClass5; 5] = [
        ImpactClass5::NoImpact,
        ImpactClass5::LowImpact,
        ImpactClass5::MediumImpact,
        ImpactClass5::HighImpact,
        ImpactClass5::VeryHighImpact,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn to_three(self) -> ImpactClass3 {
        match self {
            ImpactClass5::NoImpact | ImpactClass5::LowImpact => ImpactClass3::NotImpactful,
            ImpactClass5::MediumImpact => ImpactClass3::MediumImpact,
            ImpactClass5::HighImpact | ImpactClass5::VeryHighImpact => ImpactClass3::Impactful,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ImpactClass5::NoImpact => "no_impact",
            ImpactClass5::LowImpact => "low_impact",
            ImpactClass5::MediumImpact => "medium_impact",
            ImpactClass5::HighImpact => "high_impact",
            ImpactClass5::VeryHighImpact => "very_high_impact",
        }
    }
}

/// The three-way label used for prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ImpactClass3 {
    NotImpactful,
    MediumImpact,
    Impactful,
}

impl ImpactClass3 {
    pub const ALL: [ImpactClass3; 3] = [
        ImpactClass3::NotImpactful,
        ImpactClass3::MediumImpact,
        ImpactClass3::Impactful,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ImpactClass3::NotImpactful => "not_impactful",
            ImpactClass3::MediumImpact => "medium_impact",
            ImpactClass3::Impactful => "impactful",
        }
    }
}

impl fmt::Display for ImpactClass3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which label set agreement and majority are computed over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    FiveClass,
    ThreeClass,
}

impl Scheme {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "5" | "five" | "5-class" | "five-class" => Some(Scheme::FiveClass),
            "3" | "three" | "3-class" | "three-class" => Some(Scheme::ThreeClass),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::FiveClass => "five-class",
            Scheme::ThreeClass => "three-class",
        }
    }
}

/// Majority label under either scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Label {
    Five(ImpactClass5),
    Three(ImpactClass3),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VoteRecord {
    pub counts: [u32; 5],
}

impl VoteRecord {
    pub fn new(counts: [u32; 5]) -> Self {
        Self { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn count(&self, class: ImpactClass5) -> u32 {
        self.counts[class.index()]
    }

    /// Counts after merging {no, low} and {high, very high}.
    pub fn merged(&self) -> [u64; 3] {
        let c = self.counts.map(u64::from);
        [c[0] + c[1], c[2], c[3] + c[4]]
    }

    fn scheme_counts(&self, scheme: Scheme) -> Vec<u64> {
        match scheme {
            Scheme::FiveClass => self.counts.iter().map(|&c| u64::from(c)).collect(),
            Scheme::ThreeClass => self.merged().to_vec(),
        }
    }
}

/// Percentage of votes that agree with the majority class.
pub fn agreement_score(votes: &VoteRecord, scheme: Scheme) -> Result<f64> {
    let counts = votes.scheme_counts(scheme);
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(CorpusError::ZeroVotes);
    }
    let max = counts.iter().copied().max().unwrap_or(0);
    Ok(100.0 * max as f64 / total as f64)
}

/// Majority class; ties go to the lowest canonical index.
pub fn majority_label(votes: &VoteRecord, scheme: Scheme) -> Result<Label> {
    let counts = votes.scheme_counts(scheme);
    if counts.iter().sum::<u64>() == 0 {
        return Err(CorpusError::ZeroVotes);
    }
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    Ok(match scheme {
        Scheme::FiveClass => Label::Five(ImpactClass5::ALL[best]),
        Scheme::ThreeClass => Label::Three(ImpactClass3::ALL[best]),
    })
}

/// Three-class majority label, the prediction target.
pub fn majority3(votes: &VoteRecord) -> Result<ImpactClass3> {
    match majority_label(votes, Scheme::ThreeClass)? {
        Label::Three(c) => Ok(c),
        Label::Five(c) => Ok(c.to_three()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stance {
    Thesis,
    Support,
    Oppose,
}

impl Stance {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "thesis" => Some(Stance::Thesis),
            "support" => Some(Stance::Support),
            "oppose" => Some(Stance::Oppose),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stance::Thesis => "thesis",
            Stance::Support => "support",
            Stance::Oppose => "oppose",
        }
    }
}

impl fmt::Display for Stance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimNode {
    pub id: String,
    pub parent_id: Option<String>,
    pub stance: Stance,
    pub text: String,
    pub votes: VoteRecord,
}

impl ClaimNode {
    pub fn is_thesis(&self) -> bool {
        self.parent_id.is_none()
    }
}

/// A validated, rooted tree of claims. Nodes are kept sorted by id so that
/// iteration order does not depend on input order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArgumentTree {
    topic: String,
    nodes: BTreeMap<String, ClaimNode>,
    thesis_id: String,
}

impl ArgumentTree {
    pub fn new(topic: impl Into<String>, claims: Vec<ClaimNode>) -> Result<Self> {
        let topic = topic.into();
        let mut nodes = BTreeMap::new();
        for claim in claims {
            if claim.text.trim().is_empty() {
                return Err(CorpusError::EmptyText {
                    topic,
                    id: claim.id,
                });
            }
            if claim.parent_id.as_deref() == Some(claim.id.as_str()) {
                return Err(CorpusError::Cycle {
                    topic,
                    id: claim.id,
                });
            }
            if nodes.contains_key(&claim.id) {
                return Err(CorpusError::DuplicateId {
                    topic,
                    id: claim.id,
                });
            }
            nodes.insert(claim.id.clone(), claim);
        }

        let roots: Vec<&str> = nodes
            .values()
            .filter(|n| n.parent_id.is_none())
            .map(|n| n.id.as_str())
            .collect();
        let thesis_id = match roots.as_slice() {
            [] => return Err(CorpusError::NoThesis { topic }),
            [one] => one.to_string(),
            many => {
                return Err(CorpusError::MultipleTheses {
                    ids: many.join(","),
                    topic,
                })
            }
        };

        for node in nodes.values() {
            if (node.stance == Stance::Thesis) != node.parent_id.is_none() {
                return Err(CorpusError::StanceMismatch {
                    topic,
                    id: node.id.clone(),
                    stance: node.stance,
                });
            }
            if let Some(parent) = &node.parent_id {
                if !nodes.contains_key(parent) {
                    return Err(CorpusError::DanglingParent {
                        topic,
                        id: node.id.clone(),
                        parent: parent.clone(),
                    });
                }
            }
        }

        // every node must reach the thesis by following parent links
        let mut reaches: BTreeMap<&str, bool> = BTreeMap::new();
        reaches.insert(thesis_id.as_str(), true);
        for start in nodes.keys() {
            let mut trail = Vec::new();
            let mut cur = start.as_str();
            let ok = loop {
                if let Some(&known) = reaches.get(cur) {
                    break known;
                }
                if trail.contains(&cur) {
                    break false;
                }
                trail.push(cur);
                match nodes[cur].parent_id.as_deref() {
                    Some(p) => cur = p,
                    None => break false,
                }
            };
            if !ok {
                return Err(CorpusError::Cycle {
                    topic,
                    id: start.clone(),
                });
            }
            for t in trail {
                reaches.insert(t, true);
            }
        }

        Ok(Self {
            topic,
            nodes,
            thesis_id,
        })
    }

    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn thesis(&self) -> &ClaimNode {
        &self.nodes[&self.thesis_id]
    }

    pub fn get(&self, id: &str) -> Option<&ClaimNode> {
        self.nodes.get(id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Claims in id order.
    pub fn claims(&self) -> impl Iterator<Item = &ClaimNode> {
        self.nodes.values()
    }

    pub fn parent(&self, id: &str) -> Option<&ClaimNode> {
        self.nodes
            .get(id)
            .and_then(|n| n.parent_id.as_deref())
            .and_then(|p| self.nodes.get(p))
    }
}

/// Ancestors of a claim, thesis first and direct parent last.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextPath {
    pub claims: Vec<ClaimNode>,
}

impl ContextPath {
    /// Context length C_l.
    pub fn len(&self) -> usize {
        self.claims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.claims.is_empty()
    }

    pub fn thesis(&self) -> Option<&ClaimNode> {
        self.claims.first()
    }

    pub fn parent(&self) -> Option<&ClaimNode> {
        self.claims.last()
    }

    /// The `window` ancestors closest to the claim, still thesis-side first.
    pub fn window(&self, window: usize) -> &[ClaimNode] {
        let start = self.claims.len().saturating_sub(window);
        &self.claims[start..]
    }
}

pub fn context_path(tree: &ArgumentTree, claim_id: &str) -> Result<ContextPath> {
    let node = tree.get(claim_id).ok_or_else(|| CorpusError::UnknownClaim {
        topic: tree.topic().to_string(),
        id: claim_id.to_string(),
    })?;
    if node.is_thesis() {
        return Err(CorpusError::ThesisNotTarget {
            topic: tree.topic().to_string(),
            id: claim_id.to_string(),
        });
    }
    let mut claims = Vec::new();
    let mut cur = tree.parent(claim_id);
    while let Some(p) = cur {
        claims.push(p.clone());
        cur = tree.parent(&p.id);
    }
    claims.reverse();
    Ok(ContextPath { claims })
}

/// A prediction target: a non-thesis claim with a reliable label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledClaim {
    pub topic: String,
    pub claim: ClaimNode,
    pub label: ImpactClass3,
    /// Agreement under the scheme used for filtering.
    pub agreement: f64,
    pub context: ContextPath,
}

impl LabeledClaim {
    pub fn context_len(&self) -> usize {
        self.context.len()
    }

    pub fn key(&self) -> (&str, &str) {
        (&self.topic, &self.claim.id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub min_votes: u64,
    /// Strict lower bound on agreement, in percent.
    pub min_agreement: f64,
    pub scheme: Scheme,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_votes: 5,
            min_agreement: 60.0,
            scheme: Scheme::ThreeClass,
        }
    }
}

impl FilterConfig {
    pub fn new(min_votes: u64, min_agreement: f64, scheme: Scheme) -> Result<Self> {
        if min_votes < 1 {
            return Err(CorpusError::InvalidFilter("min_votes must be >= 1".into()));
        }
        if !(0.0..=100.0).contains(&min_agreement) {
            return Err(CorpusError::InvalidFilter(format!(
                "min_agreement must lie in [0, 100], got {min_agreement}"
            )));
        }
        Ok(Self {
            min_votes,
            min_agreement,
            scheme,
        })
    }

    fn accepts(&self, votes: &VoteRecord) -> Option<f64> {
        if votes.total() < self.min_votes {
            return None;
        }
        let agreement = agreement_score(votes, self.scheme).ok()?;
        (agreement > self.min_agreement).then_some(agreement)
    }
}

/// Non-thesis claims with enough votes and strictly more than the minimum
/// agreement, in tree order then claim-id order.
pub fn filter_claims(trees: &[ArgumentTree], filter: &FilterConfig) -> Vec<LabeledClaim> {
    let mut out = Vec::new();
    for tree in trees {
        for claim in tree.claims() {
            if claim.is_thesis() {
                continue;
            }
            let Some(agreement) = filter.accepts(&claim.votes) else {
                continue;
            };
            let label = majority3(&claim.votes).expect("accepted claims have votes");
            let context = context_path(tree, &claim.id).expect("non-thesis claim in its own tree");
            out.push(LabeledClaim {
                topic: tree.topic().to_string(),
                claim: claim.clone(),
                label,
                agreement,
                context,
            });
        }
    }
    out
}

/// Finds a claim by topic (optional) and id.
pub fn find_claim<'a>(
    trees: &'a [ArgumentTree],
    topic: Option<&str>,
    id: &str,
) -> Option<(&'a ArgumentTree, &'a ClaimNode)> {
    trees
        .iter()
        .filter(|t| topic.is_none_or(|topic| t.topic() == topic))
        .find_map(|t| t.get(id).map(|c| (t, c)))
}

/// Any non-thesis claim as a prediction target, whatever its votes. Label
/// and agreement come from the votes when there are any and are
/// `NotImpactful` and 0 otherwise.
pub fn prediction_target(tree: &ArgumentTree, id: &str) -> Result<LabeledClaim> {
    let claim = tree.get(id).ok_or_else(|| CorpusError::UnknownClaim {
        topic: tree.topic().to_string(),
        id: id.to_string(),
    })?;
    let context = context_path(tree, id)?;
    let label = majority3(&claim.votes).unwrap_or(ImpactClass3::NotImpactful);
    let agreement = agreement_score(&claim.votes, Scheme::ThreeClass).unwrap_or(0.0);
    Ok(LabeledClaim {
        topic: tree.topic().to_string(),
        claim: claim.clone(),
        label,
        agreement,
        context,
    })
}
