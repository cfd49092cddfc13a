//! Central finite-difference checks of reverse-mode gradients.

use std::collections::BTreeMap;

use super::graph::{Graph, Var};
use super::optim::ParamSet;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Largest normwise relative error over all parameters.
    pub worst: f64,
    pub worst_param: String,
    /// Number of perturbed scalars.
    pub evaluated: usize,
}

/// Compares the gradient of a scalar graph with central differences of step
/// `step`, element by element. `build` receives a fresh graph and the bound
/// parameters and returns the scalar root; it is rebuilt for every
/// perturbation. The error of a parameter is `max |a - n| / max(|a|, |n|)`
/// over its elements, and an absolute difference when both gradients vanish.
pub fn check_gradients<F>(params: &ParamSet<f64>, step: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &BTreeMap<String, Var>) -> Result<Var>,
{
    let eval = |set: &ParamSet<f64>, with_grad: bool| -> Result<(f64, Option<ParamSet<f64>>)> {
        let mut g = Graph::new();
        let vars: BTreeMap<String, Var> = set.iter().map(|(k, t)| (k.clone(), g.param(t.clone()))).collect();
        let root = build(&mut g, &vars)?;
        let value = g.value(root);
        if value.len() != 1 {
            return Err(Error::ShapeMismatch(format!("gradient check needs a scalar, got {:?}", value.shape())));
        }
        let loss = value.data()[0];
        if !with_grad {
            return Ok((loss, None));
        }
        let mut grads = g.backward(root);
        let out = vars
            .iter()
            .map(|(k, &v)| {
                let t = grads.take(v).unwrap_or_else(|| super::Tensor::zeros(set[k].shape()));
                (k.clone(), t)
            })
            .collect();
        Ok((loss, Some(out)))
    };

    let (_, analytic) = eval(params, true)?;
    let analytic = analytic.expect("requested gradients");
    let mut report = GradCheckReport {
        worst: 0.0,
        worst_param: String::new(),
        evaluated: 0,
    };
    let mut work = params.clone();
    for (name, t) in params {
        let a = &analytic[name];
        let (mut max_diff, mut scale) = (0.0f64, 0.0f64);
        for i in 0..t.len() {
            let x = t.data()[i];
            work.get_mut(name).expect("same keys").data_mut()[i] = x + step;
            let (up, _) = eval(&work, false)?;
            work.get_mut(name).expect("same keys").data_mut()[i] = x - step;
            let (down, _) = eval(&work, false)?;
            work.get_mut(name).expect("same keys").data_mut()[i] = x;
            let numeric = (up - down) / (2.0 * step);
            max_diff = max_diff.max((a.data()[i] - numeric).abs());
            scale = scale.max(a.data()[i].abs()).max(numeric.abs());
            report.evaluated += 1;
        }
        let err = if scale > 1e-10 { max_diff / scale } else { max_diff };
        if err >= report.worst {
            report.worst = err;
            report.worst_param = name.clone();
        }
    }
    Ok(report)
}
