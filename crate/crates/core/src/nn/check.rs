//! Central finite-difference verification of tape gradients.

use super::store::ParamStore;
use super::tape::GradMap;
use super::NnError;

/// One evaluation of a scalar objective over the parameters.
pub struct Evaluation {
    pub loss: f64,
    pub grads: Option<GradMap>,
}

/// Compares analytic gradients against central finite differences over
/// every parameter coordinate and returns the worst relative error
/// `|analytic - numeric| / max(1, |analytic|)`.
///
/// The closure receives the (possibly perturbed) parameters and whether
/// gradients are needed for that evaluation.
pub fn grad_check<F>(params: &ParamStore, step: f64, mut eval: F) -> Result<f64, NnError>
where
    F: FnMut(&ParamStore, bool) -> Result<Evaluation, NnError>,
{
    assert!(step > 0.0);
    let base = eval(params, true)?;
    if !base.loss.is_finite() {
        return Err(NnError::NonFinite("loss".into()));
    }
    let grads = base
        .grads
        .ok_or_else(|| NnError::ShapeMismatch("gradient evaluation returned none".into()))?;
    for (name, g) in &grads {
        if !g.is_finite() {
            return Err(NnError::NonFinite(format!("gradient of {name}")));
        }
    }

    let mut probe = params.clone();
    let names: Vec<String> = params.iter().map(|(n, _)| n.to_string()).collect();
    let mut worst = 0.0f64;
    for name in &names {
        let numel = params.get(name)?.numel();
        for e in 0..numel {
            let original = params.get(name)?.data()[e];
            probe.get_mut(name)?.data_mut()[e] = original + step;
            let up = eval(&probe, false)?.loss;
            probe.get_mut(name)?.data_mut()[e] = original - step;
            let down = eval(&probe, false)?.loss;
            probe.get_mut(name)?.data_mut()[e] = original;
            if !(up.is_finite() && down.is_finite()) {
                return Err(NnError::NonFinite(format!("perturbed loss at {name}[{e}]")));
            }
            let numeric = (up - down) / (2.0 * step);
            // Parameters the loss never touches have no gradient entry;
            // their analytic gradient is zero.
            let analytic = grads.get(name).map_or(0.0, |t| t.data()[e]);
            let rel = (analytic - numeric).abs() / analytic.abs().max(1.0);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}
