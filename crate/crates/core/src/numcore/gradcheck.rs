use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{Gradients, Graph, NodeId, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Denominator floor of the relative error, so that entries whose true
/// gradient is zero are compared on an absolute scale.
pub const REL_FLOOR: f64 = 1e-6;

/// Worst entry of one parameter array.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_err: f64,
    pub tol: f64,
    pub passed: bool,
}

impl GradCheckReport {
    /// Name of the parameter holding the worst entry.
    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params.iter().max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckOptions {
    /// Negative-control hook: perturbs the reverse-mode gradient of the named
    /// parameter before comparison, emulating a broken backward rule.
    pub corrupt: Option<String>,
    /// Restrict the check to these parameters (all reached ones when empty).
    pub only: Vec<String>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Compares reverse-mode gradients of the scalar built by `f` against
/// central differences, entry by entry, over every parameter the graph
/// reaches. `f` must be deterministic in the parameters.
pub fn gradient_check<F>(
    params: &mut ParamStore,
    tol: f64,
    opts: &GradCheckOptions,
    mut f: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph<'_>) -> Result<NodeId>,
{
    let mut grads = Gradients::zeros_like(params);
    {
        let mut g = Graph::new(params);
        let root = f(&mut g)?;
        finite(g.scalar(root), "loss at the unperturbed point")?;
        g.backward(root, 1.0, &mut grads)?;
    }
    if let Some(name) = &opts.corrupt {
        let id = params
            .id(name)
            .ok_or_else(|| Error::invalid("parameter name", format!("unknown `{name}`")))?;
        let gv = grads.get_mut(id);
        for v in gv.iter_mut() {
            *v = 2.0 * *v + 1e-2;
        }
    }

    let ids: Vec<ParamId> = params
        .ids()
        .filter(|&id| grads.touched(id))
        .filter(|&id| opts.only.is_empty() || opts.only.iter().any(|n| n == params.name(id)))
        .collect();

    let mut report = Vec::with_capacity(ids.len());
    for id in ids {
        let mut worst = ParamCheck {
            name: params.name(id).into(),
            entries: params.get(id).len(),
            max_rel_err: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in 0..params.get(id).len() {
            let orig = params.get(id).data()[i];
            params.get_mut(id).data_mut()[i] = orig + FD_STEP;
            let plus = eval(params, &mut f)?;
            params.get_mut(id).data_mut()[i] = orig - FD_STEP;
            let minus = eval(params, &mut f)?;
            params.get_mut(id).data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let analytic = grads.get(id)[i];
            let err = relative_error(analytic, numeric);
            if err > worst.max_rel_err || i == 0 {
                worst.max_rel_err = err;
                worst.worst_index = i;
                worst.analytic = analytic;
                worst.numeric = numeric;
            }
        }
        report.push(worst);
    }

    let max_rel_err = report.iter().map(|p| p.max_rel_err).fold(0.0, f64::max);
    Ok(GradCheckReport { params: report, max_rel_err, tol, passed: max_rel_err < tol })
}

fn eval<F>(params: &ParamStore, f: &mut F) -> Result<f64>
where
    F: FnMut(&mut Graph<'_>) -> Result<NodeId>,
{
    let mut g = Graph::new(params);
    let root = f(&mut g)?;
    let v = g.scalar(root);
    finite(v, "loss at a perturbed point")?;
    Ok(v)
}

fn finite(v: f64, context: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { context: context.into() })
    }
}
