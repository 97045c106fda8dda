//! RBF-kernel SVM trained by sequential minimal optimization, combined
//! one-vs-rest.
//!
//! The binary solver minimizes `½ αᵀQα − eᵀα` with `Q_ij = y_i y_j K_ij`
//! subject to `0 ≤ α ≤ C` and `yᵀα = 0`. Each step picks the maximal
//! violating pair and solves the two-variable subproblem analytically.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{ModelError, Result};
use crate::corpus::{ImpactClass3, LabeledClaim};
use crate::eval::macro_prf;
use crate::features::{FeatureGroup, Lexicons, Standardizer, SvmFeaturizer};

const TAU: f64 = 1e-12;

pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(ModelError::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    if gamma <= 0.0 || !gamma.is_finite() {
        return Err(ModelError::InvalidGamma(gamma));
    }
    Ok((-gamma * sq_dist(x, y)).exp())
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Row-major `n × n` squared distances.
pub fn squared_distances(xs: &[Vec<f64>]) -> Vec<f64> {
    let n = xs.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = sq_dist(&xs[i], &xs[j]);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

pub fn rbf_gram(sq: &[f64], gamma: f64) -> Vec<f64> {
    sq.iter().map(|d| (-gamma * d).exp()).collect()
}

#[derive(Clone, Debug)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    /// Final maximal violation `m(α) − M(α)`.
    pub gap: f64,
    /// Dual objective `eᵀα − ½ αᵀQα` after every iteration.
    pub objective_trace: Vec<f64>,
    gradient: Vec<f64>,
    y: Vec<f64>,
    c: f64,
}

impl SmoSolution {
    pub fn dual_objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(0.0)
    }

    /// Largest violation of the KKT conditions `y_i f(x_i) ≥ 1` (α < C) and
    /// `y_i f(x_i) ≤ 1` (α > 0), using the solver's bias.
    pub fn kkt_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.alpha.len() {
            // y_i f(x_i) - 1 = G_i - y_i rho
            let margin = self.gradient[i] - self.y[i] * self.rho;
            if self.alpha[i] < self.c {
                worst = worst.max(-margin);
            }
            if self.alpha[i] > 0.0 {
                worst = worst.max(margin);
            }
        }
        worst
    }
}

fn dual_value(alpha: &[f64], grad: &[f64]) -> f64 {
    -0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>()
}

/// Solves the binary dual on a precomputed row-major Gram matrix. `y`
/// holds ±1 labels.
pub fn smo_solve(gram: &[f64], y: &[f64], c: f64, tol: f64, max_iter: usize) -> SmoSolution {
    let n = y.len();
    debug_assert_eq!(gram.len(), n * n);
    let q = |i: usize, j: usize| y[i] * y[j] * gram[i * n + j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut gap;
    loop {
        let mut i = usize::MAX;
        let mut m = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut big_m = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
            let low = (y[t] < 0.0 && alpha[t] < c) || (y[t] > 0.0 && alpha[t] > 0.0);
            if up && v > m {
                m = v;
                i = t;
            }
            if low && v < big_m {
                big_m = v;
                j = t;
            }
        }
        gap = m - big_m;
        if i == usize::MAX || j == usize::MAX || gap < tol || iterations >= max_iter {
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = q(i, j);
        if y[i] != y[j] {
            let quad = (q(i, i) + q(j, j) + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (k, gk) in grad.iter_mut().enumerate() {
            *gk += q(i, k) * di + q(j, k) * dj;
        }
        trace.push(dual_value(&alpha, &grad));
    }

    let rho = compute_rho(&alpha, &grad, y, c);
    SmoSolution {
        alpha,
        rho,
        iterations,
        gap,
        objective_trace: trace,
        gradient: grad,
        y: y.to_vec(),
        c,
    }
}

/// Average of `y_i G_i` over free vectors, or the midpoint of the feasible
/// interval when no vector is free.
fn compute_rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum, mut free) = (0.0, 0usize);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

/// One binary machine: `f(x) = Σ coef_i K(sv_i, x) − rho`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub support: Vec<Vec<f64>>,
    /// `α_i y_i` for each support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
}

impl BinarySvm {
    fn from_solution(xs: &[Vec<f64>], sol: &SmoSolution) -> Self {
        let mut support = Vec::new();
        let mut coef = Vec::new();
        for (i, &a) in sol.alpha.iter().enumerate() {
            if a > 0.0 {
                support.push(xs[i].clone());
                coef.push(a * sol.y[i]);
            }
        }
        Self {
            support,
            coef,
            rho: sol.rho,
        }
    }

    pub fn decision(&self, x: &[f64], gamma: f64) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(sv, c)| c * (-gamma * sq_dist(sv, x)).exp())
            .sum::<f64>()
            - self.rho
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub c: f64,
    pub gamma: f64,
    /// One machine per class; `None` for classes absent from training.
    pub machines: Vec<Option<BinarySvm>>,
}

/// Training diagnostics per one-vs-rest machine.
#[derive(Clone, Debug)]
pub struct SvmTrace {
    pub solutions: Vec<Option<SmoSolution>>,
}

pub const DEFAULT_TOL: f64 = 1e-3;

fn check_inputs(xs: &[Vec<f64>], labels: &[ImpactClass3]) -> Result<()> {
    if xs.is_empty() {
        return Err(ModelError::EmptyTrain);
    }
    if xs.len() != labels.len() {
        return Err(ModelError::Dimension {
            expected: xs.len(),
            got: labels.len(),
        });
    }
    let d = xs[0].len();
    for x in xs {
        if x.len() != d {
            return Err(ModelError::Dimension { expected: d, got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("feature value".into()));
        }
    }
    let distinct: BTreeSet<ImpactClass3> = labels.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(ModelError::SingleClass);
    }
    Ok(())
}

impl SvmModel {
    pub fn train(xs: &[Vec<f64>], labels: &[ImpactClass3], c: f64, gamma: f64) -> Result<Self> {
        check_inputs(xs, labels)?;
        if gamma <= 0.0 || !gamma.is_finite() {
            return Err(ModelError::InvalidGamma(gamma));
        }
        let gram = rbf_gram(&squared_distances(xs), gamma);
        Ok(Self::train_on_gram(xs, labels, &gram, c, gamma).0)
    }

    /// Trains with a precomputed Gram matrix and returns the solver traces.
    pub fn train_on_gram(
        xs: &[Vec<f64>],
        labels: &[ImpactClass3],
        gram: &[f64],
        c: f64,
        gamma: f64,
    ) -> (Self, SvmTrace) {
        let n = xs.len();
        let max_iter = (100 * n * n).max(1_000_000);
        let mut machines = Vec::new();
        let mut solutions = Vec::new();
        for class in ImpactClass3::ALL {
            if !labels.contains(&class) {
                machines.push(None);
                solutions.push(None);
                continue;
            }
            let y: Vec<f64> = labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
            let sol = smo_solve(gram, &y, c, DEFAULT_TOL, max_iter);
            machines.push(Some(BinarySvm::from_solution(xs, &sol)));
            solutions.push(Some(sol));
        }
        (Self { c, gamma, machines }, SvmTrace { solutions })
    }

    pub fn decision_values(&self, x: &[f64]) -> [f64; 3] {
        std::array::from_fn(|k| {
            self.machines[k]
                .as_ref()
                .map_or(f64::NEG_INFINITY, |m| m.decision(x, self.gamma))
        })
    }

    pub fn predict(&self, x: &[f64]) -> ImpactClass3 {
        let d = self.decision_values(x);
        ImpactClass3::from_index(super::argmax(&d)).expect("three classes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub groups: BTreeSet<FeatureGroup>,
    pub max_tfidf_features: Option<usize>,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c_grid: vec![0.1, 1.0, 10.0],
            gamma_grid: vec![0.001, 0.01, 0.1],
            groups: FeatureGroup::ALL.into_iter().collect(),
            max_tfidf_features: Some(300),
        }
    }
}

/// Featurizer, train-fitted scaler and the selected machine.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SvmPipeline {
    pub featurizer: SvmFeaturizer,
    pub scaler: Standardizer,
    pub model: SvmModel,
    /// Validation macro-F1 for every (C, gamma) tried.
    pub grid: Vec<(f64, f64, f64)>,
}

impl SvmPipeline {
    /// Fits the features on `train`, then picks (C, gamma) by validation
    /// macro-F1; the first grid point wins ties.
    pub fn fit(
        train: &[LabeledClaim],
        validation: &[LabeledClaim],
        config: &SvmConfig,
        lexicons: Lexicons,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(ModelError::EmptyTrain);
        }
        let featurizer = SvmFeaturizer::fit(train, config.groups.clone(), lexicons, config.max_tfidf_features)?;
        let mut xs = train.iter().map(|c| featurizer.transform(c)).collect::<std::result::Result<Vec<_>, _>>()?;
        let scaler = Standardizer::fit(&xs)?;
        xs.iter_mut().for_each(|x| scaler.transform(x));
        let labels: Vec<ImpactClass3> = train.iter().map(|c| c.label).collect();
        check_inputs(&xs, &labels)?;

        let mut vx = validation
            .iter()
            .map(|c| featurizer.transform(c))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        vx.iter_mut().for_each(|x| scaler.transform(x));
        let vy: Vec<ImpactClass3> = validation.iter().map(|c| c.label).collect();

        let sq = squared_distances(&xs);
        let mut best: Option<(f64, SvmModel)> = None;
        let mut grid = Vec::new();
        for &gamma in &config.gamma_grid {
            if gamma <= 0.0 || !gamma.is_finite() {
                return Err(ModelError::InvalidGamma(gamma));
            }
            let gram = rbf_gram(&sq, gamma);
            for &c in &config.c_grid {
                let (model, _) = SvmModel::train_on_gram(&xs, &labels, &gram, c, gamma);
                let f1 = if vx.is_empty() {
                    0.0
                } else {
                    let preds: Vec<ImpactClass3> = vx.iter().map(|x| model.predict(x)).collect();
                    macro_prf(&vy, &preds).map(|m| m.f1).unwrap_or(0.0)
                };
                grid.push((c, gamma, f1));
                if best.as_ref().is_none_or(|(b, _)| f1 > *b) {
                    best = Some((f1, model));
                }
            }
        }
        let (_, model) = best.ok_or(ModelError::Unknown {
            kind: "grid",
            value: "empty C or gamma grid".into(),
        })?;
        Ok(Self {
            featurizer,
            scaler,
            model,
            grid,
        })
    }

    pub fn features(&self, claim: &LabeledClaim) -> Result<Vec<f64>> {
        let mut x = self.featurizer.transform(claim)?;
        self.scaler.transform(&mut x);
        Ok(x)
    }

    pub fn predict(&self, claim: &LabeledClaim) -> Result<ImpactClass3> {
        Ok(self.model.predict(&self.features(claim)?))
    }

    pub fn predict_proba(&self, claim: &LabeledClaim) -> Result<[f64; 3]> {
        let mut d = self.model.decision_values(&self.features(claim)?);
        crate::autodiff::softmax_in_place(&mut d);
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        assert_eq!(rbf_kernel(&[1.0, 2.0], &[1.0, 2.0], 0.5).unwrap(), 1.0);
        let k = rbf_kernel(&[0.0, 0.0], &[1.0, 0.0], 1.0).unwrap();
        assert!((k - (-1.0f64).exp()).abs() < 1e-15);
        assert!(rbf_kernel(&[0.0], &[0.0, 1.0], 1.0).is_err());
        assert!(rbf_kernel(&[0.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn separable_points() {
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 10.0, if i < 10 { -1.0 } else { 1.0 }]).collect();
        let labels: Vec<ImpactClass3> = (0..20)
            .map(|i| if i < 10 { ImpactClass3::NotImpactful } else { ImpactClass3::Impactful })
            .collect();
        let m = SvmModel::train(&xs, &labels, 10.0, 0.5).unwrap();
        assert!(m.machines[1].is_none());
        for (x, l) in xs.iter().zip(&labels) {
            assert_eq!(m.predict(x), *l);
        }
    }

    #[test]
    fn single_class_rejected() {
        let xs = vec![vec![0.0], vec![1.0]];
        let err = SvmModel::train(&xs, &[ImpactClass3::Impactful; 2], 1.0, 1.0);
        assert!(matches!(err, Err(ModelError::SingleClass)));
        let bad = vec![vec![f64::NAN], vec![1.0]];
        let err = SvmModel::train(&bad, &[ImpactClass3::Impactful, ImpactClass3::MediumImpact], 1.0, 1.0);
        assert!(matches!(err, Err(ModelError::NonFinite(_))));
    }
}
