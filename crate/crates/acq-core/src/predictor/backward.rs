//! Analytic gradients of the multi-task loss with respect to every net
//! parameter. The layout mirrors the net so the optimizer can walk both in
//! lockstep; correctness is pinned by central finite differences in the
//! test suites.

use super::compose::compose_vjp;
use super::linalg::{sigmoid, softplus, spectral_norm_uv, Matrix};
use super::{CostRecord, ForwardTrace, PropertyHeadNet};
use crate::error::{AcqError, Result};
use crate::learning::LossSpec;
use crate::tree::{Branch, UnbalancedCostTree};

/// Gradient (or optimizer-state) buffers shaped like a net's parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub embeddings: Vec<Matrix>,
    pub trunk_w: Vec<Matrix>,
    pub trunk_b: Vec<Vec<f64>>,
    pub classifier_w: Matrix,
    pub classifier_b: Vec<f64>,
    pub regression_w: Matrix,
    pub regression_b: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &PropertyHeadNet) -> Self {
        Gradients {
            embeddings: net
                .embeddings
                .iter()
                .map(|m| Matrix::zeros(m.rows, m.cols))
                .collect(),
            trunk_w: net
                .trunk
                .iter()
                .map(|l| Matrix::zeros(l.w.rows, l.w.cols))
                .collect(),
            trunk_b: net.trunk.iter().map(|l| vec![0.0; l.b.len()]).collect(),
            classifier_w: Matrix::zeros(net.classifier_head.w.rows, net.classifier_head.w.cols),
            classifier_b: vec![0.0; net.classifier_head.b.len()],
            regression_w: Matrix::zeros(net.regression_head.w.rows, net.regression_head.w.cols),
            regression_b: vec![0.0; net.regression_head.b.len()],
        }
    }

    /// All buffers in a fixed order (embeddings, trunk, heads) for the
    /// optimizer; the net exposes the same order.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for e in &self.embeddings {
            out.push(&e.data);
        }
        for (w, b) in self.trunk_w.iter().zip(&self.trunk_b) {
            out.push(&w.data);
            out.push(b);
        }
        out.push(&self.classifier_w.data);
        out.push(&self.classifier_b);
        out.push(&self.regression_w.data);
        out.push(&self.regression_b);
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = Vec::new();
        for e in &mut self.embeddings {
            out.push(&mut e.data);
        }
        for (w, b) in self.trunk_w.iter_mut().zip(self.trunk_b.iter_mut()) {
            out.push(&mut w.data);
            out.push(b);
        }
        out.push(&mut self.classifier_w.data);
        out.push(&mut self.classifier_b);
        out.push(&mut self.regression_w.data);
        out.push(&mut self.regression_b);
        out
    }

    pub fn scale(&mut self, s: f64) {
        for b in self.blocks_mut() {
            b.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.blocks()
            .iter()
            .map(|b| b.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }
}

impl PropertyHeadNet {
    /// Parameter buffers in the same fixed order as [`Gradients::blocks`].
    pub fn blocks_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = Vec::new();
        for e in &mut self.embeddings {
            out.push(&mut e.data);
        }
        for l in &mut self.trunk {
            out.push(&mut l.w.data);
            out.push(&mut l.b);
        }
        out.push(&mut self.classifier_head.w.data);
        out.push(&mut self.classifier_head.b);
        out.push(&mut self.regression_head.w.data);
        out.push(&mut self.regression_head.b);
        out
    }
}

/// Component values of one record's loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// Masked path cross-entropy over the record's tree path.
    pub l1: f64,
    /// Predicted-cost standard deviation (uncertainty).
    pub l2: f64,
    /// Squared error of the selected composed cost.
    pub l3: f64,
    /// Lipschitz product penalty (shared across a batch).
    pub penalty: f64,
    pub total: f64,
}

/// Accumulate the gradients of α1·l1 + α2·l2 + α3·l3 for one record into
/// `grads`, given its forward trace. Returns (l1, l2, l3). The Lipschitz
/// penalty is independent of records and handled once per batch by
/// [`penalty_and_gradient`].
pub fn record_gradients(
    net: &PropertyHeadNet,
    tree: &UnbalancedCostTree,
    record: &CostRecord,
    trace: &ForwardTrace,
    spec: &LossSpec,
    grads: &mut Gradients,
) -> Result<(f64, f64, f64)> {
    let n_cls = net.classifier_count();
    let leaf = tree.assign_leaf(record.cost)?;
    let path = tree.path_labels(leaf)?;

    // --- l1: masked path cross-entropy, computed in logit space.
    let mut l1 = 0.0;
    let mut dz_cls = vec![0.0; n_cls];
    for step in &path.steps {
        let z = trace.logits[step.classifier];
        let y = step.branch.label();
        l1 += softplus(z) - y * z;
        dz_cls[step.classifier] += spec.alpha1 * (sigmoid(z) - y);
    }

    // --- l2: std of the leaf-distribution cost.
    let leaf_probs = tree.leaf_distribution(&trace.probs)?;
    let values = tree.leaf_values();
    let values_sq = tree.leaf_values_sq();
    let mut e1 = 0.0;
    let mut e2 = 0.0;
    for ((&p, &m), &s) in leaf_probs.iter().zip(&values).zip(&values_sq) {
        e1 += p * m;
        e2 += p * s;
    }
    let var = e2 - e1 * e1;
    let l2 = var.max(0.0).sqrt();
    if var > 1e-12 && spec.alpha2 != 0.0 {
        // d l2 / d P_leaf, then chain through the path products into the
        // classifier probabilities without ever dividing by a factor.
        let mut dprob = vec![0.0; n_cls];
        for (path, ((&_p, &m), &s)) in tree
            .paths()
            .iter()
            .zip(leaf_probs.iter().zip(&values).zip(&values_sq))
        {
            let dl2_dp = (s - 2.0 * e1 * m) / (2.0 * l2);
            let steps = &path.steps;
            let factors: Vec<f64> = steps
                .iter()
                .map(|st| match st.branch {
                    Branch::Left => trace.probs[st.classifier],
                    Branch::Right => 1.0 - trace.probs[st.classifier],
                })
                .collect();
            let n = factors.len();
            let mut suffix = vec![1.0; n + 1];
            for i in (0..n).rev() {
                suffix[i] = suffix[i + 1] * factors[i];
            }
            let mut prefix = 1.0;
            for (i, st) in steps.iter().enumerate() {
                let others = prefix * suffix[i + 1];
                let sign = match st.branch {
                    Branch::Left => 1.0,
                    Branch::Right => -1.0,
                };
                dprob[st.classifier] += dl2_dp * sign * others;
                prefix *= factors[i];
            }
        }
        for i in 0..n_cls {
            let p = trace.probs[i];
            dz_cls[i] += spec.alpha2 * dprob[i] * p * (1.0 - p);
        }
    }

    // --- l3: squared error of the selected composed cost.
    let err = trace.selected - record.cost;
    let l3 = err * err;
    let mut dcomposed = vec![0.0; net.n_bins()];
    dcomposed[trace.bin] = spec.alpha3 * 2.0 * err;
    let draw = compose_vjp(net.variant, &trace.raw, &net.bins, &dcomposed);

    for (name, v) in [("l1", l1), ("l2", l2), ("l3", l3)] {
        if !v.is_finite() {
            return Err(AcqError::NonFinite(format!("loss term {name}")));
        }
    }

    // --- heads into the last activation.
    let h_last = trace.act.last().unwrap_or(&trace.x);
    grads.classifier_w.add_outer(&dz_cls, h_last, 1.0);
    for (g, d) in grads.classifier_b.iter_mut().zip(&dz_cls) {
        *g += d;
    }
    grads.regression_w.add_outer(&draw, h_last, 1.0);
    for (g, d) in grads.regression_b.iter_mut().zip(&draw) {
        *g += d;
    }
    let mut da = net.classifier_head.w.matvec_t(&dz_cls);
    for (a, r) in da.iter_mut().zip(net.regression_head.w.matvec_t(&draw)) {
        *a += r;
    }

    // --- trunk, in reverse.
    for layer in (0..net.trunk.len()).rev() {
        let mut dpre = da;
        for (i, d) in dpre.iter_mut().enumerate() {
            let alive = if trace.pre[layer][i] > 0.0 { 1.0 } else { 0.0 };
            *d *= trace.mask[layer][i] * alive;
        }
        let input: &[f64] = if layer == 0 {
            &trace.x
        } else {
            &trace.act[layer - 1]
        };
        grads.trunk_w[layer].add_outer(&dpre, input, 1.0);
        for (g, d) in grads.trunk_b[layer].iter_mut().zip(&dpre) {
            *g += d;
        }
        da = net.trunk[layer].w.matvec_t(&dpre);
    }

    // --- split the input gradient back into the embedding rows used.
    let dim = net.embedding_dim();
    for (slot, &row) in trace.rows.iter().enumerate() {
        let seg = &da[slot * dim..(slot + 1) * dim];
        for (g, d) in grads.embeddings[slot].row_mut(row).iter_mut().zip(seg) {
            *g += d;
        }
    }
    Ok((l1, l2, l3))
}

/// Lipschitz penalty value and its gradient contribution (scaled by
/// `weight`) added into `grads`.
pub fn penalty_and_gradient(net: &PropertyHeadNet, weight: f64, grads: &mut Gradients) -> f64 {
    let decomposed: Vec<(f64, Vec<f64>, Vec<f64>)> =
        net.trunk.iter().map(|l| spectral_norm_uv(&l.w)).collect();
    let softplus_vals: Vec<f64> = decomposed.iter().map(|(s, _, _)| softplus(*s)).collect();
    let penalty: f64 = softplus_vals.iter().product();
    if weight != 0.0 {
        for (j, (sig, u, v)) in decomposed.iter().enumerate() {
            let others: f64 = softplus_vals
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != j)
                .map(|(_, s)| s)
                .product();
            let coeff = weight * others * sigmoid(*sig);
            grads.trunk_w[j].add_outer(u, v, coeff);
        }
    }
    penalty
}

/// Loss values for one record in eval mode (no dropout), including the
/// penalty term. Used by finite-difference checks and reporting.
pub fn record_loss(
    net: &PropertyHeadNet,
    tree: &UnbalancedCostTree,
    record: &CostRecord,
    spec: &LossSpec,
) -> Result<LossBreakdown> {
    let trace = net.forward_trace(record, None)?;
    let leaf = tree.assign_leaf(record.cost)?;
    let path = tree.path_labels(leaf)?;
    let mut l1 = 0.0;
    for step in &path.steps {
        let z = trace.logits[step.classifier];
        l1 += softplus(z) - step.branch.label() * z;
    }
    let leaf_probs = tree.leaf_distribution(&trace.probs)?;
    let l2 = tree.expected_cost_std(&leaf_probs);
    let err = trace.selected - record.cost;
    let l3 = err * err;
    let penalty = net.lipschitz_penalty();
    let total =
        spec.alpha1 * l1 + spec.alpha2 * l2 + spec.alpha3 * l3 + spec.lipschitz_weight * penalty;
    if !total.is_finite() {
        return Err(AcqError::NonFinite("total loss".into()));
    }
    Ok(LossBreakdown {
        l1,
        l2,
        l3,
        penalty,
        total,
    })
}

/// Full analytic gradient of the per-record total loss (penalty included),
/// in eval mode. The training loop uses the batched pieces instead; this is
/// the reference entry point for gradient verification.
pub fn loss_and_gradients(
    net: &PropertyHeadNet,
    tree: &UnbalancedCostTree,
    record: &CostRecord,
    spec: &LossSpec,
) -> Result<(LossBreakdown, Gradients)> {
    let trace = net.forward_trace(record, None)?;
    let mut grads = Gradients::zeros_like(net);
    let (l1, l2, l3) = record_gradients(net, tree, record, &trace, spec, &mut grads)?;
    let penalty = penalty_and_gradient(net, spec.lipschitz_weight, &mut grads);
    let total =
        spec.alpha1 * l1 + spec.alpha2 * l2 + spec.alpha3 * l3 + spec.lipschitz_weight * penalty;
    if !total.is_finite() {
        return Err(AcqError::NonFinite("total loss".into()));
    }
    Ok((
        LossBreakdown {
            l1,
            l2,
            l3,
            penalty,
            total,
        },
        grads,
    ))
}
