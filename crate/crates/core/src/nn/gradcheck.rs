//! Central finite differences against tape gradients.

use alloc::string::String;
use alloc::vec::Vec;

use super::tape::{Tape, Var};
use super::tensor::{ParamId, ParamStore};
use crate::error::Result;

/// Denominator floor for [`relative_error`]. At step `1e-5` a central
/// difference of O(1) intermediates resolves derivatives only to about
/// `1e-10`, so gradients below the floor are compared absolutely (a
/// `1e-4` relative tolerance then means `1e-9` absolute).
pub const REL_ERR_FLOOR: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    relative_error_with_floor(analytic, numeric, REL_ERR_FLOOR)
}

pub fn relative_error_with_floor(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = libm::fabs(analytic).max(libm::fabs(numeric)).max(floor);
    libm::fabs(analytic - numeric) / denom
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `(parameter name, max relative error over its entries)`.
    pub per_param: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.per_param.iter().fold(0.0, |m, (_, e)| m.max(*e))
    }
}

fn eval_loss<F>(store: &ParamStore, build: &F) -> Result<f64>
where
    F: Fn(&mut Tape<'_>) -> Result<Var>,
{
    let mut tape = Tape::new(store);
    let out = build(&mut tape)?;
    Ok(tape.scalar(out))
}

/// `(f(x + h) - f(x - h)) / 2h` for one scalar entry of a parameter.
pub fn central_difference<F>(store: &mut ParamStore, id: ParamId, index: usize, step: f64, build: &F) -> Result<f64>
where
    F: Fn(&mut Tape<'_>) -> Result<Var>,
{
    let original = store.tensor(id).data()[index];
    store.tensor_mut(id).data_mut()[index] = original + step;
    let plus = eval_loss(store, build);
    store.tensor_mut(id).data_mut()[index] = original - step;
    let minus = eval_loss(store, build);
    store.tensor_mut(id).data_mut()[index] = original;
    Ok((plus? - minus?) / (2.0 * step))
}

/// Compares backward gradients of the scalar built by `build` against
/// central differences for every entry of `params`.
pub fn check_gradients<F>(store: &mut ParamStore, params: &[ParamId], step: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_>) -> Result<Var>,
{
    let grads = {
        let mut tape = Tape::new(store);
        let out = build(&mut tape)?;
        tape.backward(out)?
    };
    let mut per_param = Vec::with_capacity(params.len());
    for &id in params {
        let n = store.tensor(id).len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let analytic = grads.get(id).map_or(0.0, |g| g[i]);
            let numeric = central_difference(store, id, i, step, &build)?;
            worst = worst.max(relative_error(analytic, numeric));
        }
        per_param.push((store.get(id).name.clone(), worst));
    }
    Ok(GradCheckReport { per_param })
}
