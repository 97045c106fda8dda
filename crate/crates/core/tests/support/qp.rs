//! Independent references for the SMO solver: a projected-gradient QP
//! solver, an exhaustive linear separator search and XOR data.

use kairos::corpus::ImpactClass3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn gram(xs: &[Vec<f64>], gamma: f64) -> Vec<f64> {
    let n = xs.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let d: f64 = xs[i].iter().zip(&xs[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            k[i * n + j] = (-gamma * d).exp();
        }
    }
    k
}

pub fn dual(alpha: &[f64], y: &[f64], k: &[f64]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k[i * n + j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Euclidean projection onto {0 ≤ α ≤ C, yᵀα = 0}: α(λ) = clip(v − λy)
/// with λ found by bisection, since yᵀα(λ) is non-increasing in λ.
pub fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lam: f64| -> Vec<f64> { v.iter().zip(y).map(|(vi, yi)| (vi - lam * yi).clamp(0.0, c)).collect() };
    let s = |a: &[f64]| a.iter().zip(y).map(|(a, y)| a * y).sum::<f64>();
    let bound = v.iter().map(|x| x.abs()).fold(0.0, f64::max) + c + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if s(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Projected gradient ascent with step 1/‖Q‖_F.
pub fn qp_oracle(y: &[f64], k: &[f64], c: f64) -> Vec<f64> {
    let n = y.len();
    let q = |i: usize, j: usize| y[i] * y[j] * k[i * n + j];
    let lip = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| q(i, j).powi(2)).sum::<f64>().sqrt();
    let step = 1.0 / lip;
    let mut a = vec![0.0; n];
    for _ in 0..20_000 {
        let grad: Vec<f64> = (0..n).map(|i| 1.0 - (0..n).map(|j| q(i, j) * a[j]).sum::<f64>()).collect();
        let v: Vec<f64> = a.iter().zip(&grad).map(|(a, g)| a + step * g).collect();
        a = project(&v, y, c);
    }
    a
}

pub fn random_problem(seed: u64) -> (Vec<Vec<f64>>, Vec<f64>, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(6..=20);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect()).collect();
    let w: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut y: Vec<f64> = xs
        .iter()
        .map(|x| {
            let s: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + rng.gen_range(-0.5..0.5);
            if s >= 0.0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    y[0] = 1.0;
    y[1] = -1.0;
    let c = [0.3, 1.0, 10.0][rng.gen_range(0..3)];
    let gamma = [0.3, 1.0, 3.0][rng.gen_range(0..3)];
    (xs, y, c, gamma)
}

pub fn xor_data(seed: u64) -> (Vec<Vec<f64>>, Vec<ImpactClass3>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (cx, cy) in [(1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)] {
        for _ in 0..20 {
            xs.push(vec![cx + rng.gen_range(-0.3..0.3), cy + rng.gen_range(-0.3..0.3)]);
            ys.push(if cx * cy > 0.0 {
                ImpactClass3::Impactful
            } else {
                ImpactClass3::NotImpactful
            });
        }
    }
    (xs, ys)
}

/// Best accuracy of any linear threshold, searched over 720 directions and
/// every cut between projected points.
pub fn best_linear_accuracy(xs: &[Vec<f64>], ys: &[ImpactClass3]) -> f64 {
    let pos: Vec<bool> = ys.iter().map(|&y| y == ImpactClass3::Impactful).collect();
    let mut best: f64 = 0.0;
    for a in 0..720 {
        let t = a as f64 * std::f64::consts::PI / 360.0;
        let mut proj: Vec<(f64, bool)> = xs.iter().zip(&pos).map(|(x, &p)| (x[0] * t.cos() + x[1] * t.sin(), p)).collect();
        proj.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total_pos = pos.iter().filter(|&&p| p).count();
        let mut below_pos = 0;
        for cut in 0..=proj.len() {
            if cut > 0 && proj[cut - 1].1 {
                below_pos += 1;
            }
            let below_neg = cut - below_pos;
            // positives above the cut, negatives below
            let correct = (total_pos - below_pos) + below_neg;
            best = best.max(correct as f64 / proj.len() as f64);
        }
    }
    best
}
