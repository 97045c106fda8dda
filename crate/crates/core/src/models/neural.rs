//! BiLSTM claim encoder with token attention, and the context
//! compositions built on top of it.
//!
//! Every token input is its embedding with one extra segment feature:
//! 0 for tokens of the target claim, 1 for context tokens and separators.
//! The same encoder embeds the target and, for the hierarchical
//! strategies, each context claim.

use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ContextStrategy, ModelError, Result};
use crate::autodiff::rnn::{bigru_final, bilstm, GruParams, LstmParams};
use crate::autodiff::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::corpus::LabeledClaim;
use crate::features::tokenize;

pub const UNK: usize = 0;
pub const SEP: usize = 1;
pub const SEGMENT_TARGET: f64 = 0.0;
pub const SEGMENT_CONTEXT: f64 = 1.0;

/// Token vocabulary with reserved `<unk>` and `<sep>` ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<String>", from = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let words: BTreeSet<String> = texts.into_iter().flat_map(tokenize).collect();
        let tokens: Vec<String> = ["<unk>".to_string(), "<sep>".to_string()].into_iter().chain(words).collect();
        Self::from(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    /// Token ids of `text`; text without tokens becomes a single `<unk>`.
    pub fn ids(&self, text: &str) -> Vec<usize> {
        let ids: Vec<usize> = tokenize(text).iter().map(|t| self.id(t)).collect();
        if ids.is_empty() {
            vec![UNK]
        } else {
            ids
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuralConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub strategy: ContextStrategy,
}

impl Default for NeuralConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            hidden: 16,
            strategy: ContextStrategy::ClaimOnly,
        }
    }
}

/// Embedding table, BiLSTM and learned token-attention query.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EncoderParams {
    pub embedding: ParamId,
    pub fwd: LstmParams,
    pub bwd: LstmParams,
    pub query: ParamId,
}

impl EncoderParams {
    pub fn new<R: Rng>(store: &mut ParamStore, vocab: usize, embed: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            embedding: store.add_xavier("encoder.embedding", &[vocab, embed], rng),
            fwd: LstmParams::new(store, "encoder.fwd", embed + 1, hidden, rng),
            bwd: LstmParams::new(store, "encoder.bwd", embed + 1, hidden, rng),
            query: store.add_xavier("encoder.query", &[2 * hidden], rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.fwd.hidden
    }
}

/// Encoder output: pooled vector `[2H]` and attention weights `[T]`.
#[derive(Clone, Copy, Debug)]
pub struct Encoded {
    pub vector: Var,
    pub attention: Var,
}

/// Encodes a token sequence with per-token segment features.
pub fn encode_sequence(g: &mut Graph, p: &EncoderParams, ids: &[usize], segments: &[f64]) -> Result<Encoded> {
    if ids.is_empty() {
        return Err(ModelError::EmptyTokens);
    }
    if ids.len() != segments.len() {
        return Err(ModelError::Dimension {
            expected: ids.len(),
            got: segments.len(),
        });
    }
    let table = g.param(p.embedding);
    let emb = g.embedding_lookup(table, ids)?;
    let seg = g.constant(Tensor::matrix(ids.len(), 1, segments.to_vec())?);
    let x = g.concat_cols(emb, seg)?;
    let states = bilstm(g, &p.fwd, &p.bwd, x)?;
    let q = g.param(p.query);
    let scores = g.matmul(states, q)?;
    let attention = g.softmax(scores)?;
    let vector = g.matmul(attention, states)?;
    Ok(Encoded { vector, attention })
}

/// Encodes one claim whose tokens all carry the same segment.
pub fn encode_claim(g: &mut Graph, p: &EncoderParams, ids: &[usize], segment: f64) -> Result<Encoded> {
    encode_sequence(g, p, ids, &vec![segment; ids.len()])
}

/// `[ctx_1, SEP, …, ctx_k, SEP, target]` with context claims thesis-side
/// first, keeping only the last `window` of them. Segments mark the target
/// with 0 and everything else with 1.
pub fn compose_flat(context: &[Vec<usize>], target: &[usize], window: usize) -> (Vec<usize>, Vec<f64>) {
    let start = context.len().saturating_sub(window);
    let mut ids = Vec::new();
    let mut segs = Vec::new();
    for claim in &context[start..] {
        ids.extend_from_slice(claim);
        ids.push(SEP);
    }
    segs.resize(ids.len(), SEGMENT_CONTEXT);
    ids.extend_from_slice(target);
    segs.resize(ids.len(), SEGMENT_TARGET);
    (ids, segs)
}

/// Dot-product attention of the learned query `V_l` over context vectors:
/// `α_c = softmax_c(V_cᵀ V_l)`, `V_d = Σ α_c V_c`. Returns `(V_d, α)`.
pub fn compose_attention(g: &mut Graph, context: &[Var], query: Var) -> Result<(Var, Var)> {
    if context.is_empty() {
        return Err(ModelError::EmptyContext);
    }
    let m = g.stack_rows(context)?;
    let scores = g.matmul(m, query)?;
    let alpha = g.softmax(scores)?;
    let vd = g.matmul(alpha, m)?;
    Ok((vd, alpha))
}

/// Final forward and backward BiGRU states over the context vectors,
/// thesis-side first.
pub fn compose_gru(g: &mut Graph, fwd: &GruParams, bwd: &GruParams, context: &[Var]) -> Result<Var> {
    if context.is_empty() {
        return Err(ModelError::EmptyContext);
    }
    Ok(bigru_final(g, fwd, bwd, context)?)
}

/// Linear layer and softmax.
pub fn classify(g: &mut Graph, weight: ParamId, bias: ParamId, x: Var) -> Result<Var> {
    let w = g.param(weight);
    let expected = g.value(w).shape()[0];
    let got = g.shape(x).iter().product::<usize>();
    if g.shape(x).len() != 1 || got != expected {
        return Err(ModelError::Dimension { expected, got });
    }
    let b = g.param(bias);
    let logits = g.matmul(x, w)?;
    let logits = g.add(logits, b)?;
    Ok(g.softmax(logits)?)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NeuralParams {
    pub encoder: EncoderParams,
    /// Learned query `V_l` of the attention composition.
    pub context_query: Option<ParamId>,
    pub context_gru: Option<(GruParams, GruParams)>,
    pub out_weight: ParamId,
    pub out_bias: ParamId,
}

/// Token ids of a target claim and of its windowed ancestors.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuralInput {
    pub context: Vec<Vec<usize>>,
    pub target: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NeuralModel {
    pub config: NeuralConfig,
    pub vocab: Vocab,
    pub store: ParamStore,
    pub params: NeuralParams,
}

impl NeuralModel {
    pub fn new<R: Rng>(config: NeuralConfig, vocab: Vocab, rng: &mut R) -> Self {
        let mut store = ParamStore::new();
        let h = config.hidden;
        let encoder = EncoderParams::new(&mut store, vocab.len(), config.embed_dim, h, rng);
        let d = encoder.output_dim();
        let (context_query, context_gru, input) = match config.strategy {
            ContextStrategy::ClaimOnly | ContextStrategy::ClaimPlusParent | ContextStrategy::Flat(_) => (None, None, d),
            ContextStrategy::Attention(_) => (Some(store.add_xavier("context.query", &[d], rng)), None, 2 * d),
            ContextStrategy::Gru(_) => {
                let f = GruParams::new(&mut store, "context.gru_fwd", d, h, rng);
                let b = GruParams::new(&mut store, "context.gru_bwd", d, h, rng);
                (None, Some((f, b)), d + 2 * h)
            }
        };
        let out_weight = store.add_xavier("classifier.weight", &[input, 3], rng);
        let out_bias = store.add_zeros("classifier.bias", &[3]);
        Self {
            config,
            vocab,
            store,
            params: NeuralParams {
                encoder,
                context_query,
                context_gru,
                out_weight,
                out_bias,
            },
        }
    }

    /// Vocabulary from the texts a model may read for these claims: the
    /// claims themselves and their ancestors.
    pub fn build_vocab(claims: &[LabeledClaim]) -> Vocab {
        Vocab::build(
            claims
                .iter()
                .flat_map(|c| std::iter::once(&c.claim).chain(c.context.claims.iter()))
                .map(|n| n.text.as_str()),
        )
    }

    pub fn prepare(&self, claim: &LabeledClaim) -> NeuralInput {
        let window = self.config.strategy.window();
        NeuralInput {
            context: claim.context.window(window).iter().map(|n| self.vocab.ids(&n.text)).collect(),
            target: self.vocab.ids(&claim.claim.text),
        }
    }

    /// Class distribution `[3]` for one input.
    pub fn forward(&self, g: &mut Graph, input: &NeuralInput) -> Result<Var> {
        let p = &self.params;
        let x = match self.config.strategy {
            ContextStrategy::ClaimOnly => encode_claim(g, &p.encoder, &input.target, SEGMENT_TARGET)?.vector,
            ContextStrategy::ClaimPlusParent | ContextStrategy::Flat(_) => {
                let (ids, segs) = compose_flat(&input.context, &input.target, self.config.strategy.window());
                encode_sequence(g, &p.encoder, &ids, &segs)?.vector
            }
            ContextStrategy::Attention(_) | ContextStrategy::Gru(_) => {
                let ctx = input
                    .context
                    .iter()
                    .map(|ids| encode_claim(g, &p.encoder, ids, SEGMENT_CONTEXT).map(|e| e.vector))
                    .collect::<Result<Vec<_>>>()?;
                let vr = encode_claim(g, &p.encoder, &input.target, SEGMENT_TARGET)?.vector;
                let vd = match (&p.context_query, &p.context_gru) {
                    (Some(q), _) => {
                        let q = g.param(*q);
                        compose_attention(g, &ctx, q)?.0
                    }
                    (None, Some((f, b))) => compose_gru(g, f, b, &ctx)?,
                    (None, None) => unreachable!("hierarchical strategy without context parameters"),
                };
                g.concat(&[vd, vr])?
            }
        };
        classify(g, p.out_weight, p.out_bias, x)
    }

    pub fn loss(&self, g: &mut Graph, input: &NeuralInput, label: usize) -> Result<Var> {
        let probs = self.forward(g, input)?;
        Ok(g.cross_entropy(probs, label)?)
    }

    pub fn predict_input(&self, input: &NeuralInput) -> Result<[f64; 3]> {
        let mut g = Graph::new(&self.store);
        let p = self.forward(&mut g, input)?;
        let d = g.value(p).data();
        Ok([d[0], d[1], d[2]])
    }

    pub fn predict_proba(&self, claim: &LabeledClaim) -> Result<[f64; 3]> {
        self.predict_input(&self.prepare(claim))
    }

    /// Copies vectors for known tokens from a word-vector file
    /// (`token v_1 … v_d` per line); returns how many rows were set.
    pub fn load_embeddings<R: BufRead>(&mut self, reader: R) -> Result<usize> {
        let dim = self.config.embed_dim;
        let mut hits = 0;
        let table = self.params.encoder.embedding;
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values: Vec<f64> = parts
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| ModelError::Embeddings {
                    line: n + 1,
                    reason: e.to_string(),
                })?;
            if values.len() != dim {
                return Err(ModelError::Embeddings {
                    line: n + 1,
                    reason: format!("expected {dim} values, found {}", values.len()),
                });
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::Embeddings {
                    line: n + 1,
                    reason: "non-finite value".into(),
                });
            }
            let id = self.vocab.id(&token.to_lowercase());
            if id == UNK || id == SEP {
                continue;
            }
            let t = self.store.get_mut(table);
            t.data_mut()[id * dim..(id + 1) * dim].copy_from_slice(&values);
            hits += 1;
        }
        Ok(hits)
    }
}
