//! Finite-difference cases shared by the gradient tests and the acceptance
//! suite. Each case yields a named report; callers decide how to judge it.

use kairos::autodiff::check::{check_gradients, GradCheckReport};
use kairos::autodiff::rnn::{bigru_final, gru_cell, lstm_cell, GruParams, LstmParams, LstmState};
use kairos::autodiff::{AutodiffError, Graph, ParamStore, Result, Tensor, Var};
use kairos::corpus::ImpactClass3;
use kairos::models::neural::{NeuralInput, NeuralModel, Vocab};
use kairos::models::{ContextStrategy, FastTextConfig, FastTextModel, ModelError, NeuralConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-4;
pub const TOL: f64 = 1e-4;

pub const STRATEGIES: [ContextStrategy; 5] = [
    ContextStrategy::ClaimOnly,
    ContextStrategy::ClaimPlusParent,
    ContextStrategy::Flat(3),
    ContextStrategy::Attention(3),
    ContextStrategy::Gru(3),
];

pub type Case = (String, GradCheckReport);

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Reduces any tensor to a scalar through a fixed random projection so that
/// every output entry contributes a distinct weight.
fn project(g: &mut Graph, v: Var, seed: u64) -> Result<Var> {
    let n = g.value(v).len();
    let shape = g.shape(v).to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let w = Tensor::new(shape.clone(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let w = g.constant(w);
    let prod = g.mul(v, w)?;
    if shape.len() == 2 {
        let pooled = g.mean_pool(prod)?;
        let ones = g.constant(Tensor::vector(vec![1.0; shape[1]]));
        g.dot(pooled, ones)
    } else if shape.is_empty() {
        Ok(prod)
    } else {
        let ones = g.constant(Tensor::vector(vec![1.0; n]));
        g.dot(prod, ones)
    }
}

fn run(out: &mut Vec<Case>, name: &str, store: &ParamStore, seed: u64, f: impl Fn(&mut Graph) -> Result<Var>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let report = check_gradients(store, f, H, 64, &mut rng).unwrap();
    out.push((format!("{name} seed {seed}"), report));
}

pub fn elementary_ops(seed: u64) -> Vec<Case> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new();
    let a = s.add("a", random(&mut rng, &[3, 4]));
    let b = s.add("b", random(&mut rng, &[4, 2]));
    let v = s.add("v", random(&mut rng, &[4]));
    let u = s.add("u", random(&mut rng, &[3]));
    let w = s.add("w", random(&mut rng, &[4]));

    run(&mut out, "matmul 2d", &s, seed, |g| {
        let (a, b) = (g.param(a), g.param(b));
        let m = g.matmul(a, b)?;
        project(g, m, seed)
    });
    run(&mut out, "matvec", &s, seed, |g| {
        let (a, v) = (g.param(a), g.param(v));
        let m = g.matmul(a, v)?;
        project(g, m, seed)
    });
    run(&mut out, "vecmat", &s, seed, |g| {
        let (u, a) = (g.param(u), g.param(a));
        let m = g.matmul(u, a)?;
        project(g, m, seed)
    });
    run(&mut out, "add/sub/mul/scale", &s, seed, |g| {
        let (v, w) = (g.param(v), g.param(w));
        let x = g.add(v, w)?;
        let y = g.sub(x, w)?;
        let z = g.mul(y, w)?;
        let z = g.scale(z, -1.7);
        project(g, z, seed)
    });
    run(&mut out, "dot", &s, seed, |g| {
        let (v, w) = (g.param(v), g.param(w));
        g.dot(v, w)
    });
    run(&mut out, "tanh/sigmoid", &s, seed, |g| {
        let v = g.param(v);
        let t = g.tanh(v);
        let sg = g.sigmoid(t);
        project(g, sg, seed)
    });
    run(&mut out, "softmax vector", &s, seed, |g| {
        let v = g.param(v);
        let p = g.softmax(v)?;
        project(g, p, seed)
    });
    run(&mut out, "softmax rows", &s, seed, |g| {
        let a = g.param(a);
        let p = g.softmax(a)?;
        project(g, p, seed)
    });
    run(&mut out, "concat/slice", &s, seed, |g| {
        let (v, u) = (g.param(v), g.param(u));
        let c = g.concat(&[v, u, v])?;
        let sl = g.slice(c, 2, 6)?;
        project(g, sl, seed)
    });
    run(&mut out, "row/stack/concat_cols", &s, seed, |g| {
        let a = g.param(a);
        let r0 = g.row(a, 0)?;
        let r2 = g.row(a, 2)?;
        let st = g.stack_rows(&[r2, r0, r2])?;
        let cc = g.concat_cols(st, a)?;
        project(g, cc, seed)
    });
    run(&mut out, "mean_pool", &s, seed, |g| {
        let a = g.param(a);
        let m = g.mean_pool(a)?;
        project(g, m, seed)
    });
    run(&mut out, "embedding_lookup", &s, seed, |g| {
        let b = g.param(b);
        let e = g.embedding_lookup(b, &[1, 3, 1, 0])?;
        project(g, e, seed)
    });
    run(&mut out, "softmax + cross_entropy + sum", &s, seed, |g| {
        let (a, v) = (g.param(a), g.param(v));
        let logits = g.matmul(a, v)?;
        let p = g.softmax(logits)?;
        let l1 = g.cross_entropy(p, (seed % 3) as usize)?;
        let l2 = g.cross_entropy(p, ((seed + 1) % 3) as usize)?;
        let s = g.sum(&[l1, l2])?;
        Ok(g.scale(s, 0.5))
    });
    out
}

/// LSTM and GRU cells unrolled three steps, plus the bidirectional GRU.
pub fn recurrent_cells(seed: u64) -> Vec<Case> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
    let mut s = ParamStore::new();
    let lstm = LstmParams::new(&mut s, "lstm", 3, 4, &mut rng);
    let gru = GruParams::new(&mut s, "gru", 3, 4, &mut rng);
    let gru_b = GruParams::new(&mut s, "gru_b", 3, 4, &mut rng);
    // non-zero biases so every gate path is exercised
    for id in [lstm.bias, gru.bias, gru_b.bias] {
        for x in s.get_mut(id).data_mut() {
            *x = rng.gen_range(-0.5..0.5);
        }
    }
    let xs = s.add("xs", random(&mut rng, &[3, 3]));

    run(&mut out, "lstm x3", &s, seed, |g| {
        let xs = g.param(xs);
        let mut st = LstmState::zeros(g, 4);
        for t in 0..3 {
            let x = g.row(xs, t)?;
            st = lstm_cell(g, &lstm, x, st)?;
        }
        let both = g.concat(&[st.h, st.c])?;
        project(g, both, seed)
    });
    run(&mut out, "gru x3", &s, seed, |g| {
        let xs = g.param(xs);
        let mut h = g.constant(Tensor::zeros(&[4]));
        for t in 0..3 {
            let x = g.row(xs, t)?;
            h = gru_cell(g, &gru, x, h)?;
        }
        project(g, h, seed)
    });
    run(&mut out, "bigru", &s, seed, |g| {
        let xs = g.param(xs);
        let rows = (0..3).map(|t| g.row(xs, t)).collect::<Result<Vec<_>>>()?;
        let h = bigru_final(g, &gru, &gru_b, &rows)?;
        project(g, h, seed)
    });
    out
}

fn unwrap_autodiff(e: ModelError) -> AutodiffError {
    match e {
        ModelError::Autodiff(a) => a,
        other => panic!("unexpected model error: {other}"),
    }
}

/// Shifts every parameter by uniform noise so that zero-initialized tensors
/// are exercised away from zero.
fn jitter(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for x in store.get_mut(id).data_mut() {
            *x += rng.gen_range(-0.3..0.3);
        }
    }
}

fn random_ids(rng: &mut ChaCha8Rng, vocab: usize) -> Vec<usize> {
    (0..rng.gen_range(1..=4)).map(|_| rng.gen_range(0..vocab)).collect()
}

pub fn fasttext_model(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = FastTextConfig {
        buckets: 12,
        dim: 5,
        ..FastTextConfig::default()
    };
    let mut m = FastTextModel::new(cfg, &[ImpactClass3::Impactful], &mut rng);
    jitter(&mut m.store, &mut rng);
    let ids: Vec<usize> = (0..rng.gen_range(1..=6)).map(|_| rng.gen_range(0..12)).collect();
    let label = rng.gen_range(0..3);
    let report = check_gradients(
        &m.store,
        |g: &mut Graph| {
            let p = m.forward(g, &ids).map_err(unwrap_autodiff)?;
            g.cross_entropy(p, label)
        },
        H,
        64,
        &mut rng,
    )
    .unwrap();
    (format!("fasttext seed {seed}"), report)
}

pub fn neural_model(strategy: ContextStrategy, seed: u64) -> Case {
    let vocab = Vocab::build(["alpha beta gamma delta epsilon zeta"]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = NeuralConfig {
        embed_dim: 4,
        hidden: 3,
        strategy,
    };
    let mut m = NeuralModel::new(cfg, vocab.clone(), &mut rng);
    jitter(&mut m.store, &mut rng);
    let n_ctx = rng.gen_range(1..=3);
    let input = NeuralInput {
        context: (0..n_ctx).map(|_| random_ids(&mut rng, vocab.len())).collect(),
        target: random_ids(&mut rng, vocab.len()),
    };
    let label = rng.gen_range(0..3);
    let report = check_gradients(
        &m.store,
        |g: &mut Graph| m.loss(g, &input, label).map_err(unwrap_autodiff),
        H,
        64,
        &mut rng,
    )
    .unwrap();
    (format!("bilstm {strategy} seed {seed}"), report)
}
