//! The δ messages shared by all three QP solvers.
//!
//! `δ_{i→j}(x_j) = Σ_{x_i} p_i(x_i) θ_ij(x_i, x_j)` is the θ-weighted
//! expectation of the sender's beliefs. Each receiver stores its incoming
//! messages contiguously, one length-`k` block per incidence, in adjacency
//! order.

use crate::error::{MrfError, Result};
use crate::model::{Beliefs, PairwiseMrf};

/// Message from `i` to `j` given `i`'s current beliefs.
pub fn delta_message(mrf: &PairwiseMrf, i: usize, j: usize, p_i: &[f64]) -> Result<Vec<f64>> {
    if i >= mrf.num_nodes() || j >= mrf.num_nodes() {
        return Err(MrfError::Shape(format!("node pair ({i}, {j}) out of range")));
    }
    let view = mrf
        .theta(j, i)
        .ok_or_else(|| MrfError::Shape(format!("no edge between {i} and {j}")))?;
    if p_i.len() != mrf.domain_size(i) {
        return Err(MrfError::Shape(format!(
            "beliefs of node {i} have {} entries, domain is {}",
            p_i.len(),
            mrf.domain_size(i)
        )));
    }
    let mut out = vec![0.0; mrf.domain_size(j)];
    view.mul_vec_into(p_i, &mut out);
    Ok(out)
}

/// Writes every message into `node` from the current `beliefs`.
pub(crate) fn fill_incoming(mrf: &PairwiseMrf, beliefs: &Beliefs, node: usize, out: &mut [f64]) {
    let k = mrf.domain_size(node);
    for (t, inc) in mrf.neighbors(node).iter().enumerate() {
        let view = mrf.incidence_view(inc);
        view.mul_vec_into(beliefs.node(inc.neighbor), &mut out[t * k..(t + 1) * k]);
    }
}

/// `Σ_j δ_j(x)` over the stored incoming blocks, summed in adjacency order.
pub(crate) fn sum_incoming(incoming: &[f64], k: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for block in incoming.chunks(k) {
        for (o, &v) in out.iter_mut().zip(block) {
            *o += v;
        }
    }
}

/// `θ̂(x_i) = Σ_{j∈Ne(i)} Σ_{x_j} θ_ij(x_i, x_j)`.
pub fn theta_hat(mrf: &PairwiseMrf, node: usize) -> Vec<f64> {
    row_sums(mrf, node, |v| v)
}

/// `Σ_{j∈Ne(i)} Σ_{x_j} f(θ_ij(x_i, x_j))` for each label of `node`.
pub(crate) fn row_sums(mrf: &PairwiseMrf, node: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let k = mrf.domain_size(node);
    let mut out = vec![0.0; k];
    for inc in mrf.neighbors(node) {
        let view = mrf.incidence_view(inc);
        for (r, o) in out.iter_mut().enumerate() {
            *o += (0..view.cols()).map(|c| f(view.get(r, c))).sum::<f64>();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node() -> PairwiseMrf {
        let mut m = PairwiseMrf::new(vec![2, 2]).unwrap();
        m.add_edge(0, 1, vec![2.0, 0.0, 0.0, 1.0]).unwrap();
        m
    }

    #[test]
    fn delta_of_uniform_beliefs() {
        let m = two_node();
        assert_eq!(delta_message(&m, 0, 1, &[0.5, 0.5]).unwrap(), vec![1.0, 0.5]);
        assert_eq!(delta_message(&m, 1, 0, &[0.5, 0.5]).unwrap(), vec![1.0, 0.5]);
    }

    #[test]
    fn delta_of_indicator_selects_a_row() {
        let mut m = PairwiseMrf::new(vec![2, 3]).unwrap();
        m.add_edge(0, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        // i = 0 at label 0 selects row 0 of θ_01 as a message over node 1's labels.
        assert_eq!(delta_message(&m, 0, 1, &[1.0, 0.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        // i = 1 at label 2 selects column 2.
        assert_eq!(delta_message(&m, 1, 0, &[0.0, 0.0, 1.0]).unwrap(), vec![3.0, 6.0]);
    }

    #[test]
    fn delta_of_zero_table_is_zero() {
        let mut m = PairwiseMrf::new(vec![2, 2]).unwrap();
        m.add_edge(0, 1, vec![0.0; 4]).unwrap();
        assert_eq!(delta_message(&m, 0, 1, &[0.3, 0.7]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn delta_shape_errors() {
        let m = two_node();
        assert!(delta_message(&m, 0, 1, &[1.0]).is_err());
        let lonely = PairwiseMrf::new(vec![2, 2]).unwrap();
        assert!(delta_message(&lonely, 0, 1, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn theta_hat_is_row_sum() {
        let m = two_node();
        assert_eq!(theta_hat(&m, 0), vec![2.0, 1.0]);
        assert_eq!(theta_hat(&m, 1), vec![2.0, 1.0]);
    }
}
