//! Second-order machinery for the critic's gradient penalty.

use super::graph::{Graph, Var};
use super::params::{GradMap, ParamStore};
use super::tensor::Tensor;
use crate::error::Result;

/// Graph node for `mean_i (‖∂D/∂z_i‖₂ − 1)²` plus the per-row gradient norms.
#[derive(Clone, Debug)]
pub struct PenaltyTerm {
    pub node: Var,
    pub norms: Vec<f64>,
}

/// Builds the unweighted penalty over the rows of `z` from per-row critic
/// `scores` (`[n, 1]`). Rows are independent so the gradient of the summed
/// score with respect to `z` yields every per-sample input gradient at once.
pub fn gradient_penalty(graph: &mut Graph, scores: Var, z: Var) -> Result<PenaltyTerm> {
    let total = graph.sum_all(scores)?;
    let grad = match graph.gradients(total, &[z])?[0] {
        Some(g) => g,
        None => {
            let zeros = Tensor::zeros(graph.value(z).shape());
            graph.constant(zeros)?
        }
    };
    let norms = graph.row_l2_norm(grad)?;
    let norm_values = graph.value(norms).values().to_vec();
    let dev = graph.add_scalar(norms, -1.0)?;
    let sq = graph.square(dev)?;
    let node = graph.mean(sq)?;
    Ok(PenaltyTerm {
        node,
        norms: norm_values,
    })
}

/// Value and parameter gradient of `lambda_gp · mean (‖∇_z D(z, t)‖ − 1)²`,
/// computed by differentiating the recorded input-gradient graph.
///
/// `critic` builds the score graph from `(z, t)` leaves using parameters of
/// `store`.
pub fn penalty_parameter_gradient<F>(
    store: &ParamStore,
    critic: F,
    z_tilde: &Tensor,
    t: &Tensor,
    lambda_gp: f64,
) -> Result<(f64, GradMap)>
where
    F: Fn(&mut Graph, Var, Var) -> Result<Var>,
{
    let mut graph = Graph::new();
    let z = graph.input(z_tilde.clone())?;
    let t = graph.constant(t.clone())?;
    let scores = critic(&mut graph, z, t)?;
    let term = gradient_penalty(&mut graph, scores, z)?;
    let weighted = graph.scale(term.node, lambda_gp)?;
    let value = graph.value(weighted).item()?;
    let grads = graph.param_gradients(weighted, store)?;
    Ok((value, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_critic(w: &[f64]) -> ParamStore {
        let mut s = ParamStore::new("d");
        s.insert("w", Tensor::matrix(1, w.len(), w.to_vec()).unwrap()).unwrap();
        s
    }

    #[test]
    fn unit_norm_linear_critic_has_no_penalty() {
        let store = linear_critic(&[0.6, 0.8]);
        let z = Tensor::matrix(1, 2, vec![0.3, -0.4]).unwrap();
        let t = Tensor::matrix(1, 1, vec![0.0]).unwrap();
        let (value, grads) = penalty_parameter_gradient(
            &store,
            |g, z, _t| {
                let w = g.param(&store, "w")?;
                g.affine(z, w, None)
            },
            &z,
            &t,
            10.0,
        )
        .unwrap();
        assert!(value.abs() < 1e-12);
        assert!(grads["w"].values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn closed_form_for_linear_critic() {
        let store = linear_critic(&[3.0, 0.0]);
        let z = Tensor::matrix(1, 2, vec![1.5, 2.0]).unwrap();
        let t = Tensor::matrix(1, 1, vec![0.0]).unwrap();
        let (value, grads) = penalty_parameter_gradient(
            &store,
            |g, z, _t| {
                let w = g.param(&store, "w")?;
                g.affine(z, w, None)
            },
            &z,
            &t,
            10.0,
        )
        .unwrap();
        assert!((value - 40.0).abs() < 1e-12);
        let gw = grads["w"].values();
        assert!((gw[0] - 40.0).abs() < 1e-12 && gw[1].abs() < 1e-12);
    }

    #[test]
    fn zero_input_gradient_uses_zero_subgradient() {
        let store = linear_critic(&[0.0, 0.0]);
        let z = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let t = Tensor::matrix(2, 1, vec![0.0, 0.0]).unwrap();
        let (value, grads) = penalty_parameter_gradient(
            &store,
            |g, z, _t| {
                let w = g.param(&store, "w")?;
                g.affine(z, w, None)
            },
            &z,
            &t,
            10.0,
        )
        .unwrap();
        assert!((value - 10.0).abs() < 1e-12);
        assert!(grads["w"].values().iter().all(|v| *v == 0.0));
    }
}
