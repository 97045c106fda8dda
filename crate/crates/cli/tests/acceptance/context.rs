use kairos::corpus::{filter_claims, split, FilterConfig, SplitRatios};
use kairos::eval::welch;
use kairos::features::Lexicons;
use kairos::models::{ContextStrategy, ModelFamily};
use kairos::synth::{generate, SynthSpec};
use kairos::training::{multi_run, Resources, TrainConfig};

use crate::Outcome;

const MIN_GAIN: f64 = 10.0;
const MAX_P: f64 = 0.05;
const BAYES_SLACK: f64 = 3.0;

pub fn context_benefit() -> Outcome {
    let corpus = generate(&SynthSpec::default()).unwrap();
    let claims = filter_claims(&corpus.trees, &FilterConfig::default());
    let data = split(&claims, SplitRatios::default(), 1).unwrap();
    let resources = Resources {
        lexicons: Lexicons::shipped(),
        embeddings: None,
    };
    let run = |strategy| {
        let mut cfg = TrainConfig::new(ModelFamily::BiLstm, strategy);
        cfg.seeds = (1..=5).collect();
        multi_run(&cfg, &data, &resources).unwrap()
    };
    let base = run(ContextStrategy::ClaimOnly);
    let base_f1 = base.f1_values();
    let bayes = 100.0 * corpus.oracle.realized_on(&data.test).claim_only;
    let mut ok = base.summary.accuracy.mean <= bayes + BAYES_SLACK;
    let mut parts = vec![format!(
        "claim-only F1 {:.2} acc {:.2} (Bayes {:.2})",
        base.summary.f1.mean, base.summary.accuracy.mean, bayes
    )];
    for strategy in [ContextStrategy::Flat(1), ContextStrategy::Attention(1), ContextStrategy::Gru(1)] {
        let r = run(strategy);
        let gain = r.summary.f1.mean - base.summary.f1.mean;
        let p = welch(&r.f1_values(), &base_f1).unwrap().p_value;
        ok &= gain >= MIN_GAIN && p < MAX_P;
        parts.push(format!("{strategy} F1 {:.2} (+{gain:.2}, p {p:.1e})", r.summary.f1.mean));
    }
    crate::check(ok, parts.join("; "))
}
