use serde::{Deserialize, Serialize};

use super::{ModelError, Result};
use crate::corpus::ImpactClass3;

/// Always predicts the most common training label (ties go to the lowest
/// class index).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MajorityModel {
    pub label: ImpactClass3,
}

impl MajorityModel {
    pub fn fit(labels: &[ImpactClass3]) -> Result<Self> {
        if labels.is_empty() {
            return Err(ModelError::EmptyTrain);
        }
        let mut counts = [0usize; 3];
        for l in labels {
            counts[l.index()] += 1;
        }
        let best = (0..3).fold(0, |b, k| if counts[k] > counts[b] { k } else { b });
        Ok(Self {
            label: ImpactClass3::from_index(best).expect("three classes"),
        })
    }

    pub fn predict(&self) -> ImpactClass3 {
        self.label
    }

    pub fn predict_proba(&self) -> [f64; 3] {
        let mut p = [0.0; 3];
        p[self.label.index()] = 1.0;
        p
    }
}
