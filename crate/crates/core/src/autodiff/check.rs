use super::{ParamStore, Tape, Var};
use crate::error::{Error, Result};

fn eval<F>(loss_fn: &mut F, params: &ParamStore) -> Result<f64>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = loss_fn(&mut tape, params)?;
    let v = tape.value(out);
    if v.shape() != (1, 1) {
        return Err(Error::Shape {
            op: "grad_check",
            left: format!("{}x{}", v.rows(), v.cols()),
            right: "1x1".into(),
        });
    }
    let v = v.get(0, 0);
    if !v.is_finite() {
        return Err(Error::Numeric(format!("loss is not finite ({v})")));
    }
    Ok(v)
}

/// Compares tape gradients against central finite differences.
///
/// Returns the largest `|g_tape - g_fd| / max(|g_tape|, |g_fd|, 1)` over
/// every scalar entry of every parameter. Parameter values are restored
/// before returning; gradients in `params` hold the tape result.
pub fn grad_check<F>(mut loss_fn: F, params: &mut ParamStore, eps: f64) -> Result<f64>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::Config(format!("grad_check eps must be > 0, got {eps}")));
    }
    let mut tape = Tape::new();
    let out = loss_fn(&mut tape, params)?;
    let v = tape.value(out).get(0, 0);
    if !v.is_finite() {
        return Err(Error::Numeric(format!("loss is not finite ({v})")));
    }
    tape.backward(out, params)?;

    let ids: Vec<_> = params.ids().collect();
    let mut worst = 0.0f64;
    for id in ids {
        let analytic = params.grad(id).clone();
        for k in 0..analytic.data().len() {
            let orig = params.value(id).data()[k];
            params.value_mut(id).data_mut()[k] = orig + eps;
            let up = eval(&mut loss_fn, params);
            params.value_mut(id).data_mut()[k] = orig - eps;
            let down = eval(&mut loss_fn, params);
            params.value_mut(id).data_mut()[k] = orig;
            let fd = (up? - down?) / (2.0 * eps);
            let a = analytic.data()[k];
            let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
