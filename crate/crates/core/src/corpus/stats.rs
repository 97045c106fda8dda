//! Corpus summary tables: vote-count histogram, votes per class, agreement
//! thresholds under both schemes, and context-length histogram.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{agreement_score, filter_claims, ArgumentTree, FilterConfig, ImpactClass5, Scheme};

const VOTE_BINS: [(u64, Option<u64>); 7] = [
    (3, Some(5)),
    (5, Some(10)),
    (10, Some(15)),
    (15, Some(20)),
    (20, Some(25)),
    (25, Some(50)),
    (50, None),
];

const AGREEMENT_THRESHOLDS: [f64; 4] = [50.0, 60.0, 70.0, 80.0];

const CONTEXT_BINS: [(&str, usize, Option<usize>); 6] = [
    ("1", 1, Some(1)),
    ("2", 2, Some(2)),
    ("3", 3, Some(3)),
    ("[4,5]", 4, Some(5)),
    ("(5,10]", 6, Some(10)),
    (">10", 11, None),
];

/// `min_votes` applies to the agreement table and, together with the other
/// fields, to the context-length table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsFilters {
    pub filter: FilterConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub trees: usize,
    pub claims: usize,
    /// (label, count) over claims with at least three votes.
    pub vote_histogram: Vec<(String, usize)>,
    pub claims_with_3_votes: usize,
    pub votes_per_class: [u64; 5],
    pub total_votes: u64,
    pub agreement_min_votes: u64,
    /// (threshold, three-class count, five-class count).
    pub agreement_table: Vec<(f64, usize, usize)>,
    pub context_histogram: Vec<(String, usize)>,
    pub filtered_claims: usize,
    pub filtered_by_label: [usize; 3],
}

fn bin_label(lo: u64, hi: Option<u64>) -> String {
    match hi {
        Some(hi) => format!("[{lo},{hi})"),
        None => format!("[{lo},inf)"),
    }
}

/// Summarizes non-thesis claims; theses are never prediction targets and
/// their votes are not counted.
pub fn corpus_stats(trees: &[ArgumentTree], filters: &StatsFilters) -> StatsReport {
    let claims: Vec<_> = trees
        .iter()
        .flat_map(|t| t.claims())
        .filter(|c| !c.is_thesis())
        .collect();

    let mut vote_histogram: Vec<(String, usize)> = VOTE_BINS
        .iter()
        .map(|&(lo, hi)| (bin_label(lo, hi), 0))
        .collect();
    let mut votes_per_class = [0u64; 5];
    let mut agreement_table: Vec<(f64, usize, usize)> =
        AGREEMENT_THRESHOLDS.iter().map(|&t| (t, 0, 0)).collect();

    for claim in &claims {
        let total = claim.votes.total();
        for (i, &(lo, hi)) in VOTE_BINS.iter().enumerate() {
            if total >= lo && hi.is_none_or(|hi| total < hi) {
                vote_histogram[i].1 += 1;
            }
        }
        for class in ImpactClass5::ALL {
            votes_per_class[class.index()] += u64::from(claim.votes.count(class));
        }
        if total >= filters.filter.min_votes && total > 0 {
            let a3 = agreement_score(&claim.votes, Scheme::ThreeClass).unwrap_or(0.0);
            let a5 = agreement_score(&claim.votes, Scheme::FiveClass).unwrap_or(0.0);
            for row in agreement_table.iter_mut() {
                if a3 > row.0 {
                    row.1 += 1;
                }
                if a5 > row.0 {
                    row.2 += 1;
                }
            }
        }
    }

    let filtered = filter_claims(trees, &filters.filter);
    let mut context_histogram: Vec<(String, usize)> = CONTEXT_BINS
        .iter()
        .map(|&(label, _, _)| (label.to_string(), 0))
        .collect();
    let mut filtered_by_label = [0usize; 3];
    for claim in &filtered {
        let len = claim.context_len();
        for (i, &(_, lo, hi)) in CONTEXT_BINS.iter().enumerate() {
            if len >= lo && hi.is_none_or(|hi| len <= hi) {
                context_histogram[i].1 += 1;
            }
        }
        filtered_by_label[claim.label.index()] += 1;
    }

    StatsReport {
        trees: trees.len(),
        claims: claims.len(),
        claims_with_3_votes: vote_histogram.iter().map(|(_, n)| n).sum(),
        vote_histogram,
        total_votes: votes_per_class.iter().sum(),
        votes_per_class,
        agreement_min_votes: filters.filter.min_votes,
        agreement_table,
        context_histogram,
        filtered_claims: filtered.len(),
        filtered_by_label,
    }
}

impl StatsReport {
    /// Aligned plain-text tables.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "trees: {}", self.trees);
        let _ = writeln!(s, "claims (non-thesis): {}", self.claims);
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<12} {:>10}", "# votes", "# claims");
        for (label, n) in &self.vote_histogram {
            let _ = writeln!(s, "{label:<12} {n:>10}");
        }
        let _ = writeln!(s, "{:<12} {:>10}", ">= 3 votes", self.claims_with_3_votes);
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<18} {:>10}", "impact label", "# votes");
        for class in ImpactClass5::ALL {
            let _ = writeln!(
                s,
                "{:<18} {:>10}",
                class.name(),
                self.votes_per_class[class.index()]
            );
        }
        let _ = writeln!(s, "{:<18} {:>10}", "total", self.total_votes);
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "agreement (claims with >= {} votes)",
            self.agreement_min_votes
        );
        let _ = writeln!(s, "{:<10} {:>10} {:>10}", "threshold", "3-class", "5-class");
        for (t, n3, n5) in &self.agreement_table {
            let _ = writeln!(s, "{:<10} {:>10} {:>10}", format!(">{t:.0}%"), n3, n5);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<12} {:>10}", "context len", "# claims");
        for (label, n) in &self.context_histogram {
            let _ = writeln!(s, "{label:<12} {n:>10}");
        }
        let _ = writeln!(s, "{:<12} {:>10}", "filtered", self.filtered_claims);
        for class in super::ImpactClass3::ALL {
            let _ = writeln!(
                s,
                "  {:<10} {:>10}",
                class.name(),
                self.filtered_by_label[class.index()]
            );
        }
        s
    }

    /// One `key=value` record per line.
    pub fn render_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "trees={}", self.trees);
        let _ = writeln!(s, "claims={}", self.claims);
        for (label, n) in &self.vote_histogram {
            let _ = writeln!(s, "votes_histogram.{label}={n}");
        }
        let _ = writeln!(s, "claims_with_3_votes={}", self.claims_with_3_votes);
        for class in ImpactClass5::ALL {
            let _ = writeln!(
                s,
                "votes.{}={}",
                class.name(),
                self.votes_per_class[class.index()]
            );
        }
        let _ = writeln!(s, "votes.total={}", self.total_votes);
        let _ = writeln!(s, "agreement.min_votes={}", self.agreement_min_votes);
        for (t, n3, n5) in &self.agreement_table {
            let _ = writeln!(s, "agreement.gt{t:.0}.three_class={n3}");
            let _ = writeln!(s, "agreement.gt{t:.0}.five_class={n5}");
        }
        for (label, n) in &self.context_histogram {
            let _ = writeln!(s, "context_length.{label}={n}");
        }
        let _ = writeln!(s, "filtered={}", self.filtered_claims);
        for class in super::ImpactClass3::ALL {
            let _ = writeln!(
                s,
                "filtered.{}={}",
                class.name(),
                self.filtered_by_label[class.index()]
            );
        }
        s
    }
}
