//! Finite-difference checks through whole models: the hashed n-gram
//! classifier and the recurrent encoder under every composition.

#[path = "support/gradients.rs"]
#[allow(dead_code)]
mod gradients;

use gradients::{fasttext_model, neural_model, STRATEGIES, TOL};

#[test]
fn fasttext() {
    for seed in 0..10 {
        let (name, report) = fasttext_model(seed);
        assert!(report.passes(TOL), "{name}: {report:?}");
    }
}

#[test]
fn neural_model_every_strategy() {
    for strategy in STRATEGIES {
        for seed in 0..10 {
            let (name, report) = neural_model(strategy, seed);
            assert!(report.passes(TOL), "{name}: {report:?}");
        }
    }
}
