//! Central finite differences of the training loss, for checking the
//! analytic gradients.

use crate::error::Result;
use crate::scalar::Scalar;

use super::loss::LossWeights;
use super::model::{GcbmModel, GcbmParams};
use super::train::{gradients, training_loss, PreparedBatch};

/// `(L(p + h e_i) - L(p - h e_i)) / 2h` for every parameter `i`.
pub fn numeric_gradients<T: Scalar>(
    model: &GcbmModel<T>,
    batch: &PreparedBatch<T>,
    weights: LossWeights,
    h: f64,
) -> Result<GcbmParams<T>> {
    let base = model.params.to_flat();
    let step = T::from_f64_lossy(h);
    let two_h = T::from_f64_lossy(2.0 * h);
    let mut numeric = base.clone();
    let mut probe = model.clone();
    let mut flat = base.clone();
    for i in 0..base.len() {
        flat[i] = base[i] + step;
        probe.params.assign_flat(&flat);
        let up = training_loss(&probe, batch, weights)?.total;
        flat[i] = base[i] - step;
        probe.params.assign_flat(&flat);
        let down = training_loss(&probe, batch, weights)?.total;
        flat[i] = base[i];
        numeric[i] = (up - down) / two_h;
    }
    let mut out = GcbmParams::zeros(&model.shape);
    out.assign_flat(&numeric);
    Ok(out)
}

/// Agreement of one parameter class, summed over layers.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: &'static str,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
    pub error_norm: f64,
}

impl TensorCheck {
    /// `||a - n|| / (||a|| + ||n||)`; zero when both vanish.
    pub fn relative_error(&self) -> f64 {
        let scale = self.analytic_norm + self.numeric_norm;
        if scale == 0.0 {
            0.0
        } else {
            self.error_norm / scale
        }
    }
}

/// Compares analytic and numeric gradients per parameter class, in the
/// order of [`GcbmParams::tensors`].
pub fn gradient_check<T: Scalar>(
    model: &GcbmModel<T>,
    batch: &PreparedBatch<T>,
    weights: LossWeights,
    h: f64,
) -> Result<Vec<TensorCheck>> {
    let (_, analytic) = gradients(model, batch, weights)?;
    let numeric = numeric_gradients(model, batch, weights, h)?;
    let mut sums: Vec<(&'static str, f64, f64, f64)> = Vec::new();
    for ((name, a), (_, n)) in analytic.tensors().into_iter().zip(numeric.tensors()) {
        let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(n) {
            let (x, y) = (x.as_f64(), y.as_f64());
            diff += (x - y) * (x - y);
            na += x * x;
            nn += y * y;
        }
        match sums.iter_mut().find(|s| s.0 == name) {
            Some(s) => {
                s.1 += diff;
                s.2 += na;
                s.3 += nn;
            }
            None => sums.push((name, diff, na, nn)),
        }
    }
    Ok(sums
        .into_iter()
        .map(|(name, diff, na, nn)| TensorCheck {
            name,
            analytic_norm: na.sqrt(),
            numeric_norm: nn.sqrt(),
            error_norm: diff.sqrt(),
        })
        .collect())
}
