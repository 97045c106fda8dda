//! Central finite-difference gradient checking.
//!
//! The numeric side only ever evaluates the forward pass, so it stays
//! independent of the backward rules it checks.

use rand::seq::index::sample;
use rand::Rng;

use super::{Graph, ParamStore, Result, Var};

/// Denominator floor for the relative error, so that entries whose true
/// gradient is zero are compared in absolute terms.
pub const RELATIVE_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    /// (parameter, flat index, analytic, numeric) of the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_relative_error < tolerance
    }
}

fn loss_value<F>(store: &ParamStore, loss: &F) -> Result<f64>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let mut g = Graph::new(store);
    let l = loss(&mut g)?;
    Ok(g.scalar(l))
}

/// Compares backpropagated gradients with central differences of step `h`
/// for every parameter, visiting at most `max_entries` randomly chosen
/// entries per tensor.
pub fn check_gradients<F, R>(
    store: &ParamStore,
    loss: F,
    h: f64,
    max_entries: usize,
    rng: &mut R,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph) -> Result<Var>,
    R: Rng,
{
    let analytic: Vec<Option<Vec<f64>>> = {
        let mut g = Graph::new(store);
        let l = loss(&mut g)?;
        g.backward(l)?;
        let mut dense = vec![None; store.len()];
        for (id, grad) in g.param_grads() {
            dense[id.0] = Some(grad.to_dense().into_data());
        }
        dense
    };

    let mut report = GradCheckReport {
        checked: 0,
        max_relative_error: 0.0,
        worst: None,
    };
    let mut probe = store.clone();
    for id in store.ids() {
        let n = store.get(id).len();
        let entries: Vec<usize> = if n <= max_entries {
            (0..n).collect()
        } else {
            let mut picked = sample(rng, n, max_entries).into_vec();
            picked.sort_unstable();
            picked
        };
        for k in entries {
            let original = store.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = original + h;
            let plus = loss_value(&probe, &loss)?;
            probe.get_mut(id).data_mut()[k] = original - h;
            let minus = loss_value(&probe, &loss)?;
            probe.get_mut(id).data_mut()[k] = original;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[id.0].as_ref().map_or(0.0, |g| g[k]);
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = report.max_relative_error.max(err);
                if err >= report.max_relative_error {
                    report.worst = Some((store.name(id).to_string(), k, a, numeric));
                }
            }
        }
    }
    Ok(report)
}
