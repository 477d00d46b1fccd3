use super::{NumericError, ParamStore, Tape, Var};

/// Gradients smaller than this are compared absolutely rather than
/// relatively, so round-off in near-zero entries does not dominate.
pub const RELATIVE_FLOOR: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub entries_checked: usize,
}

/// Compares reverse-mode gradients of `forward` against central differences
/// `(f(θ+ε) − f(θ−ε)) / 2ε` for every entry of every parameter in `store`.
///
/// The relative error of one entry is `|a − n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn grad_check<F, E>(store: &ParamStore, eps: f64, mut forward: F) -> Result<GradCheckReport, E>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var, E>,
    E: From<NumericError>,
{
    let mut tape = Tape::new();
    let loss = forward(&mut tape, store)?;
    if !tape.value(loss).is_finite() {
        return Err(NumericError::NonFinite("loss").into());
    }
    let grads = tape.backward(loss)?;
    let analytic = tape.param_grads(&grads);

    let mut eval = |s: &ParamStore| -> Result<f64, E> {
        let mut t = Tape::new();
        let l = forward(&mut t, s)?;
        let v = t.scalar_value(l);
        if !v.is_finite() {
            return Err(NumericError::NonFinite("loss").into());
        }
        Ok(v)
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        entries_checked: 0,
    };
    let mut probe = store.clone();
    for (name, param) in store.iter() {
        let zeros;
        let grad = match analytic.get(name) {
            Some(g) => g,
            None => {
                zeros = super::Tensor::zeros(param.shape());
                &zeros
            }
        };
        for k in 0..param.len() {
            let orig = param.values()[k];
            probe.get_mut(name).expect("cloned store").values_mut()[k] = orig + eps;
            let plus = eval(&probe)?;
            probe.get_mut(name).expect("cloned store").values_mut()[k] = orig - eps;
            let minus = eval(&probe)?;
            probe.get_mut(name).expect("cloned store").values_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = grad.values()[k];
            let denom = a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
            let rel = (a - numeric).abs() / denom;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = name.clone();
                report.worst_index = k;
            }
            report.entries_checked += 1;
        }
    }
    Ok(report)
}
