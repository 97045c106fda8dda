//! Optimization, early stopping on validation macro-F1, and multi-seed
//! experiments.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Gradient, Graph, ParamId, ParamStore};
use crate::corpus::{ImpactClass3, LabeledClaim, Split};
use crate::eval::{macro_prf, sample_std, EvalError, EvalReport, Prf};
use crate::features::Lexicons;
use crate::models::neural::NeuralInput;
use crate::models::{
    ContextStrategy, FastTextConfig, FastTextModel, MajorityModel, ModelError, ModelFamily, NeuralConfig,
    NeuralModel, SvmConfig, SvmPipeline, TrainedModel,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },
    #[error("non-finite gradient for `{0}`")]
    NonFiniteGradient(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Adam with bias correction. Moment buffers are created on first use.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Option<Vec<f64>>>,
    v: Vec<Option<Vec<f64>>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn timestep(&self) -> i32 {
        self.t
    }

    /// Updates every parameter that has a gradient; the others are left
    /// untouched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[(ParamId, Gradient)]) -> Result<()> {
        if let Some((id, _)) = grads.iter().find(|(_, g)| !g.is_finite()) {
            return Err(TrainError::NonFiniteGradient(store.name(*id).to_string()));
        }
        if self.m.len() < store.len() {
            self.m.resize(store.len(), None);
            self.v.resize(store.len(), None);
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (id, grad) in grads {
            let g = grad.to_dense();
            let n = g.len();
            let m = self.m[id.0].get_or_insert_with(|| vec![0.0; n]);
            let v = self.v[id.0].get_or_insert_with(|| vec![0.0; n]);
            let x = store.get_mut(*id).data_mut();
            for k in 0..n {
                let gk = g.data()[k];
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                x[k] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Improved,
    Continue,
    Stop,
}

/// Tracks the best validation score; stops after `patience` epochs in a row
/// without strict improvement.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best_epoch: usize,
    pub best_score: f64,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best_epoch: 0,
            best_score: f64::NEG_INFINITY,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, score: f64) -> Decision {
        if score > self.best_score {
            self.best_score = score;
            self.best_epoch = epoch;
            self.stale = 0;
            Decision::Improved
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                Decision::Stop
            } else {
                Decision::Continue
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelFamily,
    pub strategy: ContextStrategy,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub seeds: Vec<u64>,
    pub embed_dim: usize,
    pub hidden: usize,
    pub fasttext: FastTextConfig,
    pub svm: SvmConfig,
    /// Also evaluate the test split after every epoch (diagnostics only).
    pub track_test: bool,
}

impl TrainConfig {
    /// Family defaults: Adam at 1e-3 for 40 epochs for the neural model,
    /// SGD at 0.8 for 15 epochs for FastText; batch 32 and patience 5.
    pub fn new(model: ModelFamily, strategy: ContextStrategy) -> Self {
        let ft = FastTextConfig::default();
        let (lr, epochs) = match model {
            ModelFamily::FastText => (ft.lr, ft.epochs),
            _ => (1e-3, 40),
        };
        Self {
            model,
            strategy,
            lr,
            epochs,
            batch_size: 32,
            patience: 5,
            seeds: vec![1, 2, 3, 4, 5],
            embed_dim: 32,
            hidden: 16,
            fasttext: ft,
            svm: SvmConfig::default(),
            track_test: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.epochs < 1 {
            return bad("epochs must be >= 1");
        }
        if self.patience < 1 {
            return bad("patience must be >= 1");
        }
        if self.batch_size < 1 {
            return bad("batch size must be >= 1");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be > 0");
        }
        if self.embed_dim < 1 || self.hidden < 1 {
            return bad("dimensions must be >= 1");
        }
        if !self.model.supports(self.strategy) {
            return Err(ModelError::UnsupportedStrategy {
                family: self.model,
                strategy: self.strategy,
            }
            .into());
        }
        Ok(())
    }
}

/// Optional inputs beyond the splits.
#[derive(Clone, Debug, Default)]
pub struct Resources {
    pub lexicons: Lexicons,
    /// Word-vector file content for the neural encoder.
    pub embeddings: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_f1: f64,
    pub test_f1: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub test: Prf,
    pub report: EvalReport,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub history: Vec<EpochRecord>,
    #[serde(skip)]
    pub model: Option<TrainedModel>,
}

fn labels(claims: &[LabeledClaim]) -> Vec<ImpactClass3> {
    claims.iter().map(|c| c.label).collect()
}

fn evaluate(model: &TrainedModel, claims: &[LabeledClaim]) -> Result<EvalReport> {
    let preds = claims.iter().map(|c| model.predict(c)).collect::<std::result::Result<Vec<_>, _>>()?;
    let lens: Vec<usize> = claims.iter().map(|c| c.context_len()).collect();
    Ok(EvalReport::new(&labels(claims), &preds, &lens)?)
}

fn f1_of(preds: &[ImpactClass3], golds: &[ImpactClass3]) -> Result<f64> {
    Ok(macro_prf(golds, preds)?.f1)
}

/// Trains one model with one seed and evaluates the best-validation
/// parameters on the test split.
pub fn train(config: &TrainConfig, splits: &Split, seed: u64, resources: &Resources) -> Result<RunResult> {
    config.validate()?;
    if splits.train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if splits.validation.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    if splits.test.is_empty() {
        return Err(TrainError::EmptySplit("test"));
    }
    let (model, best_epoch, history) = match config.model {
        ModelFamily::Majority => {
            let m = TrainedModel::Majority(MajorityModel::fit(&labels(&splits.train))?);
            (m, 1, Vec::new())
        }
        ModelFamily::Svm => {
            let m = SvmPipeline::fit(&splits.train, &splits.validation, &config.svm, resources.lexicons.clone())?;
            (TrainedModel::Svm(Box::new(m)), 1, Vec::new())
        }
        ModelFamily::FastText => train_fasttext(config, splits, seed)?,
        ModelFamily::BiLstm => train_neural(config, splits, seed, resources)?,
    };
    let report = evaluate(&model, &splits.test)?;
    Ok(RunResult {
        seed,
        test: report.macro_avg,
        report,
        best_epoch,
        epochs_run: history.len().max(1),
        history,
        model: Some(model),
    })
}

/// Shared epoch loop: runs `epoch_fn` until the cap or until early stopping
/// fires, calling `snapshot` whenever validation improves.
fn run_epochs<M: Clone>(
    config: &TrainConfig,
    max_epochs: usize,
    state: &mut M,
    mut epoch_fn: impl FnMut(&mut M, usize) -> Result<f64>,
    mut score: impl FnMut(&M) -> Result<(f64, Option<f64>)>,
) -> Result<(M, usize, Vec<EpochRecord>)> {
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = state.clone();
    let mut history = Vec::new();
    for epoch in 1..=max_epochs {
        let loss = epoch_fn(state, epoch)?;
        if !loss.is_finite() {
            return Err(TrainError::Diverged { epoch });
        }
        let (val, test) = score(state)?;
        history.push(EpochRecord {
            epoch,
            train_loss: loss,
            validation_f1: val,
            test_f1: test,
        });
        match stopper.observe(epoch, val) {
            Decision::Improved => best = state.clone(),
            Decision::Continue => {}
            Decision::Stop => break,
        }
    }
    Ok((best, stopper.best_epoch, history))
}

fn train_neural(
    config: &TrainConfig,
    splits: &Split,
    seed: u64,
    resources: &Resources,
) -> Result<(TrainedModel, usize, Vec<EpochRecord>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ncfg = NeuralConfig {
        embed_dim: config.embed_dim,
        hidden: config.hidden,
        strategy: config.strategy,
    };
    let vocab = NeuralModel::build_vocab(&splits.train);
    let mut model = NeuralModel::new(ncfg, vocab, &mut rng);
    if let Some(vectors) = &resources.embeddings {
        model.load_embeddings(vectors.as_bytes())?;
    }
    let prep = |m: &NeuralModel, cs: &[LabeledClaim]| -> Vec<NeuralInput> { cs.iter().map(|c| m.prepare(c)).collect() };
    let train_in = prep(&model, &splits.train);
    let train_y: Vec<usize> = splits.train.iter().map(|c| c.label.index()).collect();
    let val_in = prep(&model, &splits.validation);
    let val_y = labels(&splits.validation);
    let test_in = prep(&model, &splits.test);
    let test_y = labels(&splits.test);

    let predict_all = |m: &NeuralModel, inputs: &[NeuralInput]| -> Result<Vec<ImpactClass3>> {
        inputs
            .iter()
            .map(|x| {
                let p = m.predict_input(x)?;
                Ok(ImpactClass3::from_index(crate::models::argmax(&p)).expect("three classes"))
            })
            .collect()
    };

    let mut adam = Adam::new(config.lr);
    let mut order: Vec<usize> = (0..train_in.len()).collect();
    let (best, best_epoch, history) = run_epochs(
        config,
        config.epochs,
        &mut model,
        |m, epoch| {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for batch in order.chunks(config.batch_size) {
                let (loss, grads) = {
                    let mut g = Graph::new(&m.store);
                    let losses = batch
                        .iter()
                        .map(|&i| m.loss(&mut g, &train_in[i], train_y[i]))
                        .collect::<std::result::Result<Vec<_>, _>>()?;
                    let sum = g.sum(&losses).map_err(ModelError::from)?;
                    let mean = g.scale(sum, 1.0 / batch.len() as f64);
                    let value = g.scalar(sum);
                    if !value.is_finite() {
                        return Ok(f64::NAN);
                    }
                    g.backward(mean).map_err(ModelError::from)?;
                    (value, g.param_grads())
                };
                match adam.step(&mut m.store, &grads) {
                    Err(TrainError::NonFiniteGradient(_)) => return Err(TrainError::Diverged { epoch }),
                    other => other?,
                }
                total += loss;
            }
            Ok(total / train_in.len() as f64)
        },
        |m| {
            let val = f1_of(&predict_all(m, &val_in)?, &val_y)?;
            let test = if config.track_test {
                Some(f1_of(&predict_all(m, &test_in)?, &test_y)?)
            } else {
                None
            };
            Ok((val, test))
        },
    )?;
    Ok((TrainedModel::Neural(Box::new(best)), best_epoch, history))
}

fn train_fasttext(config: &TrainConfig, splits: &Split, seed: u64) -> Result<(TrainedModel, usize, Vec<EpochRecord>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ft = FastTextConfig {
        lr: config.lr,
        epochs: config.epochs,
        ..config.fasttext.clone()
    };
    let train_y = labels(&splits.train);
    let mut model = FastTextModel::new(ft, &train_y, &mut rng);
    let train_ids: Vec<Vec<usize>> = splits.train.iter().map(|c| model.ngram_ids(&c.claim.text)).collect();
    let val_y = labels(&splits.validation);
    let test_y = labels(&splits.test);
    let predict_all = |m: &FastTextModel, cs: &[LabeledClaim]| -> Vec<ImpactClass3> {
        cs.iter()
            .map(|c| ImpactClass3::from_index(crate::models::argmax(&m.predict_proba(&c.claim.text))).expect("three classes"))
            .collect()
    };
    let total_steps = (config.epochs * train_ids.len()).max(1) as f64;
    let mut step = 0usize;
    let mut order: Vec<usize> = (0..train_ids.len()).collect();
    let (best, best_epoch, history) = run_epochs(
        config,
        config.epochs,
        &mut model,
        |m, _epoch| {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for &i in &order {
                let lr = config.lr * (1.0 - step as f64 / total_steps);
                step += 1;
                total += m.sgd_step(&train_ids[i], train_y[i], lr)?;
            }
            Ok(total / train_ids.len() as f64)
        },
        |m| {
            let val = f1_of(&predict_all(m, &splits.validation), &val_y)?;
            let test = if config.track_test {
                Some(f1_of(&predict_all(m, &splits.test), &test_y)?)
            } else {
                None
            };
            Ok((val, test))
        },
    )?;
    Ok((TrainedModel::FastText(best), best_epoch, history))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        Self {
            mean: xs.iter().sum::<f64>() / xs.len() as f64,
            std: sample_std(xs),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
    pub accuracy: MeanStd,
}

impl Summary {
    pub fn of(runs: &[RunResult]) -> Self {
        let pick = |f: fn(&RunResult) -> f64| MeanStd::of(&runs.iter().map(f).collect::<Vec<_>>());
        Self {
            precision: pick(|r| r.test.precision),
            recall: pick(|r| r.test.recall),
            f1: pick(|r| r.test.f1),
            accuracy: pick(|r| r.report.accuracy),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MultiRun {
    pub runs: Vec<RunResult>,
    pub summary: Summary,
}

impl MultiRun {
    pub fn f1_values(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.test.f1).collect()
    }
}

/// One run per configured seed, in parallel; results keep seed order.
pub fn multi_run(config: &TrainConfig, splits: &Split, resources: &Resources) -> Result<MultiRun> {
    config.validate()?;
    let runs = config
        .seeds
        .par_iter()
        .map(|&seed| train(config, splits, seed, resources))
        .collect::<Result<Vec<_>>>()?;
    let summary = Summary::of(&runs);
    Ok(MultiRun { runs, summary })
}
