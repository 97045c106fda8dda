//! Seeded, label-stratified train/validation/test partition.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, LabeledClaim, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.70,
            validation: 0.15,
            test: 0.15,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self> {
        let r = Self {
            train,
            validation,
            test,
        };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<()> {
        let sum = self.train + self.validation + self.test;
        let parts_ok = [self.train, self.validation, self.test]
            .iter()
            .all(|p| p.is_finite() && *p >= 0.0);
        if !parts_ok || (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidRatios(sum));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<LabeledClaim>,
    pub validation: Vec<LabeledClaim>,
    pub test: Vec<LabeledClaim>,
}

/// Distributes `total` slots across classes proportionally to `sizes` using
/// largest remainders, never exceeding a class's remaining `capacity`.
fn allocate(total: usize, sizes: &[usize], capacity: &[usize]) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let ideal: Vec<f64> = sizes
        .iter()
        .map(|&s| if n == 0 { 0.0 } else { total as f64 * s as f64 / n as f64 })
        .collect();
    let mut quota: Vec<usize> = ideal
        .iter()
        .zip(capacity)
        .map(|(&x, &cap)| (x.floor() as usize).min(cap))
        .collect();
    while quota.iter().sum::<usize>() < total {
        let pick = (0..sizes.len())
            .filter(|&c| quota[c] < capacity[c])
            .max_by(|&a, &b| {
                let da = ideal[a] - quota[a] as f64;
                let db = ideal[b] - quota[b] as f64;
                // earlier class wins ties
                da.partial_cmp(&db).unwrap().then(b.cmp(&a))
            });
        match pick {
            Some(c) => quota[c] += 1,
            None => break,
        }
    }
    quota
}

/// Validation and test sizes are floored; the remainder goes to train. Each
/// label is shuffled independently and split with proportional quotas, and
/// every part keeps the input order.
pub fn split(claims: &[LabeledClaim], ratios: SplitRatios, seed: u64) -> Result<Split> {
    ratios.validate()?;
    let n = claims.len();
    if n < 3 {
        return Err(CorpusError::TooFewClaims(n));
    }
    let n_val = (ratios.validation * n as f64 + 1e-9).floor() as usize;
    let n_test = (ratios.test * n as f64 + 1e-9).floor() as usize;

    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); 3];
    for (i, c) in claims.iter().enumerate() {
        by_label[c.label.index()].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for group in by_label.iter_mut() {
        group.shuffle(&mut rng);
    }
    let sizes: Vec<usize> = by_label.iter().map(Vec::len).collect();
    let val_quota = allocate(n_val, &sizes, &sizes);
    let remaining: Vec<usize> = sizes.iter().zip(&val_quota).map(|(s, v)| s - v).collect();
    let test_quota = allocate(n_test, &sizes, &remaining);

    let mut part = vec![0u8; n];
    for (c, group) in by_label.iter().enumerate() {
        for &i in &group[..val_quota[c]] {
            part[i] = 1;
        }
        for &i in &group[val_quota[c]..val_quota[c] + test_quota[c]] {
            part[i] = 2;
        }
    }
    let mut out = Split {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (claim, p) in claims.iter().zip(part) {
        match p {
            0 => out.train.push(claim.clone()),
            1 => out.validation.push(claim.clone()),
            _ => out.test.push(claim.clone()),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ClaimNode, ContextPath, ImpactClass3, Stance, VoteRecord};

    fn claims(labels: &[ImpactClass3]) -> Vec<LabeledClaim> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &label)| LabeledClaim {
                topic: "t".into(),
                claim: ClaimNode {
                    id: format!("c{i}"),
                    parent_id: Some("T".into()),
                    stance: Stance::Support,
                    text: format!("claim {i}"),
                    votes: VoteRecord::new([0, 0, 5, 0, 0]),
                },
                label,
                agreement: 100.0,
                context: ContextPath { claims: vec![] },
            })
            .collect()
    }

    #[test]
    fn sizes_follow_ratios() {
        let labels: Vec<_> = (0..100).map(|i| ImpactClass3::ALL[i % 3]).collect();
        let s = split(&claims(&labels), SplitRatios::default(), 7).unwrap();
        assert_eq!(
            (s.train.len(), s.validation.len(), s.test.len()),
            (70, 15, 15)
        );
    }

    #[test]
    fn deterministic_for_a_seed() {
        let labels: Vec<_> = (0..50).map(|i| ImpactClass3::ALL[i % 3]).collect();
        let c = claims(&labels);
        assert_eq!(
            split(&c, SplitRatios::default(), 3).unwrap(),
            split(&c, SplitRatios::default(), 3).unwrap()
        );
        assert_ne!(
            split(&c, SplitRatios::default(), 3).unwrap(),
            split(&c, SplitRatios::default(), 4).unwrap()
        );
    }

    #[test]
    fn stratified_small_split() {
        use ImpactClass3::*;
        let labels = [
            Impactful, Impactful, Impactful, Impactful, Impactful, Impactful, MediumImpact,
            MediumImpact, NotImpactful, NotImpactful,
        ];
        let s = split(&claims(&labels), SplitRatios::default(), 11).unwrap();
        assert_eq!(
            (s.train.len(), s.validation.len(), s.test.len()),
            (8, 1, 1)
        );
        // hand enumeration: validation and test each get one Impactful claim,
        // train keeps 4/2/2
        for part in [&s.validation, &s.test] {
            assert_eq!(part[0].label, Impactful);
        }
        let mut train_counts = [0; 3];
        for c in &s.train {
            train_counts[c.label.index()] += 1;
        }
        assert_eq!(train_counts, [2, 2, 4]);
    }

    #[test]
    fn rejects_bad_ratios_and_tiny_input() {
        let c = claims(&[ImpactClass3::Impactful; 5]);
        let bad = SplitRatios {
            train: 0.7,
            validation: 0.2,
            test: 0.2,
        };
        assert!(matches!(
            split(&c, bad, 1),
            Err(CorpusError::InvalidRatios(_))
        ));
        assert!(matches!(
            split(&c[..2], SplitRatios::default(), 1),
            Err(CorpusError::TooFewClaims(2))
        ));
    }
}
