use std::collections::HashMap;
use std::hash::Hasher;

use fnv::FnvHasher;
use kairos::corpus::{
    filter_claims, majority3, parse_corpus_str, write_corpus, ArgumentTree, FilterConfig,
};
use kairos::synth::{duplicate_claim_probe, generate, PlantKind, SynthCorpus, SynthSpec};

fn corpus_bytes(c: &SynthCorpus) -> Vec<u8> {
    let mut out = Vec::new();
    write_corpus(&mut out, &c.trees).unwrap();
    out
}

fn fnv(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

fn marker_in(text: &str, markers: &[String; 3]) -> Vec<usize> {
    let words: Vec<&str> = text.split(' ').collect();
    (0..3).filter(|&k| words.contains(&markers[k].as_str())).collect()
}

/// Re-derives every claim's label from the texts alone and compares it with
/// the votes: the governing ancestor's parent marker for context claims,
/// the self marker otherwise.
fn check_planting(c: &SynthCorpus) {
    let o = &c.oracle;
    let trees: HashMap<&str, &ArgumentTree> = c.trees.iter().map(|t| (t.topic(), t)).collect();
    for co in &o.claims {
        let tree = trees[co.topic.as_str()];
        let node = tree.get(&co.id).unwrap();
        let gold = majority3(&node.votes).unwrap();
        assert_eq!(gold, co.label);
        assert_eq!(marker_in(&node.text, &o.parent_markers).len(), 1, "{}", node.text);

        let mut chain = vec![tree.parent(&node.id).unwrap()];
        while let Some(p) = tree.parent(&chain.last().unwrap().id) {
            chain.push(p);
        }
        let governor = chain[o.spec.signal_ancestor.min(chain.len()) - 1];
        let signal = marker_in(&governor.text, &o.parent_markers)[0];
        assert_eq!(co.context_signal.index(), signal);

        let own = marker_in(&node.text, &o.self_markers);
        match co.kind {
            PlantKind::Context => {
                assert_eq!(gold.index(), signal);
                assert!(own.is_empty());
            }
            PlantKind::Claim => assert_eq!(own, vec![gold.index()]),
            PlantKind::Noise => assert!(own.is_empty()),
        }
    }
}

#[test]
fn planting_rule_holds() {
    for ancestor in 1..=3 {
        let c = generate(&SynthSpec {
            trees: 80,
            max_depth: 5,
            signal_ancestor: ancestor,
            seed: 11,
            ..SynthSpec::default()
        })
        .unwrap();
        check_planting(&c);
    }
}

#[test]
fn corpus_round_trips_and_passes_filter() {
    let c = generate(&SynthSpec {
        trees: 50,
        duplication_rate: 0.2,
        ..SynthSpec::default()
    })
    .unwrap();
    let bytes = corpus_bytes(&c);
    let parsed = parse_corpus_str(std::str::from_utf8(&bytes).unwrap()).unwrap();
    assert_eq!(parsed, c.trees);
    let kept = filter_claims(&parsed, &FilterConfig::default());
    assert_eq!(kept.len(), c.oracle.claims.len());
    assert!(kept.iter().all(|k| k.agreement > 60.0 && k.claim.votes.total() >= 5));
}

#[test]
fn fixed_seed_is_byte_identical() {
    let spec = SynthSpec {
        trees: 40,
        duplication_rate: 0.1,
        ..SynthSpec::default()
    };
    let a = generate(&spec).unwrap();
    let b = generate(&spec).unwrap();
    assert_eq!(corpus_bytes(&a), corpus_bytes(&b));
    assert_eq!(a.oracle.render(), b.oracle.render());
    let c = generate(&SynthSpec { seed: 2, ..spec }).unwrap();
    assert_ne!(corpus_bytes(&a), corpus_bytes(&c));
}

#[test]
fn bayes_rates_match_the_rule() {
    for (s, eta) in [(0.9, 0.05), (0.5, 0.2), (1.0, 0.0), (0.0, 0.0), (0.3, 0.7)] {
        let spec = SynthSpec {
            signal_strength: s,
            noise_rate: eta,
            ..SynthSpec::default()
        };
        // A claim reader is right on self-marked claims and guesses among
        // three balanced labels otherwise; a context reader misses only the
        // noise claims whose label differs from the signal.
        let claim_only = (1.0 - s - eta) + (s + eta) / 3.0;
        let context = (1.0 - s - eta) + s + eta / 3.0;
        assert!((spec.bayes_claim_only() - claim_only).abs() < 1e-12);
        assert!((spec.bayes_context() - context).abs() < 1e-12);
        assert!((context - claim_only - 2.0 * s / 3.0).abs() < 1e-12);
    }
}

#[test]
fn realized_rates_track_analytic_rates() {
    let c = generate(&SynthSpec {
        trees: 600,
        seed: 3,
        ..SynthSpec::default()
    })
    .unwrap();
    let a = c.oracle.analytic();
    let r = c.oracle.realized(&c.oracle.claims);
    assert!((a.claim_only - r.claim_only).abs() < 0.03, "{a:?} {r:?}");
    assert!((a.context - r.context).abs() < 0.02, "{a:?} {r:?}");
}

#[test]
fn balanced_marker_hides_label_from_claim() {
    let c = generate(&SynthSpec {
        trees: 300,
        signal_strength: 1.0,
        noise_rate: 0.0,
        ..SynthSpec::default()
    })
    .unwrap();
    let mut counts = [0usize; 3];
    for co in &c.oracle.claims {
        counts[co.label.index()] += 1;
    }
    let max_prior = *counts.iter().max().unwrap() as f64 / c.oracle.claims.len() as f64;
    assert!(c.oracle.analytic().claim_only <= max_prior);
    assert_eq!(c.oracle.analytic().context, 1.0);
    assert!((c.oracle.realized(&c.oracle.claims).context - 1.0).abs() < 1e-12);
}

#[test]
fn duplication_probe() {
    let spec = SynthSpec {
        trees: 140,
        duplication_rate: 0.1,
        seed: 8,
        ..SynthSpec::default()
    };
    let c = generate(&spec).unwrap();
    let n = c.oracle.claims.len();
    assert!((900..=1300).contains(&n), "{n} claims");
    let copies = c.oracle.claims.iter().filter(|o| o.copied_from.is_some()).count();
    let expected = 0.1 * (spec.signal_strength + spec.noise_rate) * n as f64;
    assert!((copies as f64 - expected).abs() < 0.35 * expected, "{copies} vs {expected}");

    let pairs = duplicate_claim_probe(&c.trees);
    assert!(pairs.len() >= copies);
    assert!((pairs.len() as f64) < 1.6 * expected);
    for p in &pairs {
        assert_ne!(p.first.label, p.second.label);
        assert!(p.first.topic != p.second.topic || p.first.parent_id != p.second.parent_id);
        for side in [&p.first, &p.second] {
            let tree = c.trees.iter().find(|t| t.topic() == side.topic).unwrap();
            assert_eq!(tree.get(&side.id).unwrap().text, p.text);
        }
    }
    check_planting(&c);

    let none = generate(&SynthSpec {
        duplication_rate: 0.0,
        ..spec
    })
    .unwrap();
    assert!(duplicate_claim_probe(&none.trees).is_empty());
}

#[test]
fn reference_corpus_is_pinned() {
    let c = generate(&SynthSpec::default()).unwrap();
    let bytes = corpus_bytes(&c);
    let a = c.oracle.analytic();
    assert!((a.claim_only - (0.05 + 0.95 / 3.0)).abs() < 1e-12);
    assert!((a.context - (1.0 - 0.1 / 3.0)).abs() < 1e-12);
    assert_eq!(c.trees.len(), 200);
    assert_eq!(c.oracle.claims.len(), 1498);
    assert_eq!(fnv(&bytes), 5633198519898636328);
}
