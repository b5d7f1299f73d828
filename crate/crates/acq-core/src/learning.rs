//! Multi-task losses, the training loop, and ranking/regression metrics.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

use crate::error::{AcqError, Result};
use crate::predictor::{
    penalty_and_gradient, record_gradients, CostRecord, Gradients, PropertyHeadNet,
};
use crate::tree::UnbalancedCostTree;

/// Weights of the loss components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub lipschitz_weight: f64,
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec {
            alpha1: 1.0,
            alpha2: 1.0,
            alpha3: 0.2,
            lipschitz_weight: 0.0,
        }
    }
}

impl LossSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alpha3", self.alpha3),
            ("lipschitz_weight", self.lipschitz_weight),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(AcqError::InvalidArgument(format!(
                    "loss weight {name} must be finite and non-negative"
                )));
            }
        }
        Ok(())
    }
}

/// Optimizer and loop hyperparameters. The optimizer is adaptive-moment
/// gradient descent with global gradient-norm clipping.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub dropout_rate: f64,
    pub eval_batch_size: usize,
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 6,
            batch_size: 512,
            learning_rate: 3e-3,
            seed: 7,
            dropout_rate: 0.2,
            eval_batch_size: 8196,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.eval_batch_size == 0 {
            return Err(AcqError::InvalidArgument(
                "epochs and batch sizes must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(AcqError::InvalidArgument(
                "learning rate must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(AcqError::InvalidArgument(
                "dropout rate must lie in [0, 1)".into(),
            ));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(AcqError::InvalidArgument(
                "clip norm must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Cross-entropy between branch labels and classifier outputs along the
/// record's root path; classifiers off the path are masked out entirely.
pub fn masked_path_cross_entropy(
    tree: &UnbalancedCostTree,
    classifier_probs: &[f64],
    record: &CostRecord,
) -> Result<f64> {
    if classifier_probs.len() != tree.classifier_count() {
        return Err(AcqError::DimensionMismatch {
            what: "classifier probabilities",
            expected: tree.classifier_count(),
            got: classifier_probs.len(),
        });
    }
    for &p in classifier_probs {
        if !(0.0..=1.0).contains(&p) {
            return Err(AcqError::ProbabilityOutOfRange(p));
        }
    }
    let leaf = tree.assign_leaf(record.cost)?;
    let path = tree.path_labels(leaf)?;
    let mut loss = 0.0;
    for step in &path.steps {
        let p = classifier_probs[step.classifier];
        loss -= match step.branch {
            crate::tree::Branch::Left => p.ln(),
            crate::tree::Branch::Right => (1.0 - p).ln(),
        };
    }
    Ok(loss)
}

/// Standard deviation of the cost under the leaf distribution induced by
/// the classifier outputs.
pub fn uncertainty_loss(tree: &UnbalancedCostTree, classifier_probs: &[f64]) -> Result<f64> {
    let dist = tree.leaf_distribution(classifier_probs)?;
    Ok(tree.expected_cost_std(&dist))
}

/// Squared error of the selected regression output.
pub fn regression_loss(predicted: f64, actual: f64) -> f64 {
    let d = predicted - actual;
    d * d
}

/// Weighted sum of the loss components.
pub fn total_loss(l1: f64, l2: f64, l3: f64, penalty: f64, spec: &LossSpec) -> f64 {
    spec.alpha1 * l1 + spec.alpha2 * l2 + spec.alpha3 * l3 + spec.lipschitz_weight * penalty
}

/// Per-epoch mean training loss trace.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
}

struct Adam {
    m: Gradients,
    v: Gradients,
    t: u64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(net: &PropertyHeadNet) -> Self {
        Adam {
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
            t: 0,
        }
    }

    fn step(&mut self, net: &mut PropertyHeadNet, grads: &Gradients, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t as i32);
        let bc2 = 1.0 - Self::BETA2.powi(self.t as i32);
        let g_blocks = grads.blocks();
        let m_blocks = self.m.blocks_mut();
        let v_blocks = self.v.blocks_mut();
        let p_blocks = net.blocks_mut();
        for (((p, g), m), v) in p_blocks
            .into_iter()
            .zip(g_blocks)
            .zip(m_blocks)
            .zip(v_blocks)
        {
            for i in 0..p.len() {
                m[i] = Self::BETA1 * m[i] + (1.0 - Self::BETA1) * g[i];
                v[i] = Self::BETA2 * v[i] + (1.0 - Self::BETA2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= lr * mh / (vh.sqrt() + Self::EPS);
            }
        }
    }
}

fn zero_grads(g: &mut Gradients) {
    for b in g.blocks_mut() {
        b.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Train the net in place. Deterministic given the config seed. Returns
/// the per-epoch mean total loss trace; aborts on a non-finite loss.
pub fn train(
    net: &mut PropertyHeadNet,
    tree: &UnbalancedCostTree,
    records: &[CostRecord],
    cfg: &TrainConfig,
    spec: &LossSpec,
) -> Result<TrainReport> {
    if records.is_empty() {
        return Err(AcqError::EmptyInput("training records"));
    }
    cfg.validate()?;
    spec.validate()?;
    if net.classifier_count() != tree.classifier_count() {
        return Err(AcqError::DimensionMismatch {
            what: "net classifier heads vs tree",
            expected: tree.classifier_count(),
            got: net.classifier_count(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(net);
    let mut grads = Gradients::zeros_like(net);
    let mut indices: Vec<usize> = (0..records.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        indices.shuffle(&mut rng);
        let mut epoch_loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in indices.chunks(cfg.batch_size) {
            zero_grads(&mut grads);
            let mut sums = (0.0, 0.0, 0.0);
            for &i in chunk {
                let rec = &records[i];
                let trace = net.forward_trace(rec, Some((cfg.dropout_rate, &mut rng)))?;
                let (l1, l2, l3) = record_gradients(net, tree, rec, &trace, spec, &mut grads)?;
                sums.0 += l1;
                sums.1 += l2;
                sums.2 += l3;
            }
            let inv = 1.0 / chunk.len() as f64;
            grads.scale(inv);
            let penalty = penalty_and_gradient(net, spec.lipschitz_weight, &mut grads);
            let batch_loss = total_loss(sums.0 * inv, sums.1 * inv, sums.2 * inv, penalty, spec);
            if !batch_loss.is_finite() {
                return Err(AcqError::NonFinite(format!(
                    "batch loss at epoch {epoch}, batch {batches}"
                )));
            }
            let norm = grads.squared_norm().sqrt();
            if norm > cfg.clip_norm {
                grads.scale(cfg.clip_norm / norm);
            }
            adam.step(net, &grads, cfg.learning_rate);
            epoch_loss_sum += batch_loss;
            batches += 1;
        }
        let mean = epoch_loss_sum / batches as f64;
        log::debug!("epoch {epoch}: mean loss {mean}");
        epoch_losses.push(mean);
    }
    Ok(TrainReport { epoch_losses })
}

/// Model score per record: the expectation of the cost under the leaf
/// distribution. Chunked so the work parallelizes with a deterministic
/// ordered reduction.
pub fn score_expected_cost(
    net: &PropertyHeadNet,
    tree: &UnbalancedCostTree,
    records: &[CostRecord],
    eval_batch_size: usize,
) -> Result<Vec<f64>> {
    let chunk = eval_batch_size.max(1);
    let per_chunk: Vec<Result<Vec<f64>>> = records
        .par_chunks(chunk)
        .map(|batch| {
            batch
                .iter()
                .map(|rec| {
                    let out = net.forward(rec)?;
                    let dist = tree.leaf_distribution(&out.classifier_probs)?;
                    Ok(tree.expected_cost(&dist))
                })
                .collect()
        })
        .collect();
    let mut scores = Vec::with_capacity(records.len());
    for c in per_chunk {
        scores.extend(c?);
    }
    Ok(scores)
}

/// Selected composed cost per record (the regression-head prediction).
pub fn score_selected_cost(
    net: &PropertyHeadNet,
    records: &[CostRecord],
    eval_batch_size: usize,
) -> Result<Vec<f64>> {
    let chunk = eval_batch_size.max(1);
    let per_chunk: Vec<Result<Vec<f64>>> = records
        .par_chunks(chunk)
        .map(|batch| {
            batch
                .iter()
                .map(|rec| Ok(net.forward(rec)?.selected_cost))
                .collect()
        })
        .collect();
    let mut scores = Vec::with_capacity(records.len());
    for c in per_chunk {
        scores.extend(c?);
    }
    Ok(scores)
}

/// Probability that a random positive ranks above a random negative, with
/// ties counted one half. Computed from tied-average ranks.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(AcqError::DimensionMismatch {
            what: "scores vs labels",
            expected: labels.len(),
            got: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(AcqError::NonFinite("scores".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(AcqError::UndefinedSignal("auc needs both classes present"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    // Average ranks across ties (1-based).
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// AUC restricted to positive-cost samples, binarized at the median
/// positive cost.
pub fn pauc(scores: &[f64], costs: &[f64]) -> Result<f64> {
    if scores.len() != costs.len() {
        return Err(AcqError::DimensionMismatch {
            what: "scores vs costs",
            expected: costs.len(),
            got: scores.len(),
        });
    }
    let mut pos: Vec<(f64, f64)> = scores
        .iter()
        .zip(costs)
        .filter(|(_, &c)| c > 0.0)
        .map(|(&s, &c)| (s, c))
        .collect();
    if pos.len() < 2 {
        return Err(AcqError::UndefinedSignal(
            "pauc needs at least two positive-cost samples",
        ));
    }
    let mut sorted_costs: Vec<f64> = pos.iter().map(|(_, c)| *c).collect();
    sorted_costs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = sorted_costs.len() / 2;
    let median = if sorted_costs.len() % 2 == 1 {
        sorted_costs[mid]
    } else {
        (sorted_costs[mid - 1] + sorted_costs[mid]) / 2.0
    };
    let labels: Vec<bool> = pos.iter().map(|(_, c)| *c > median).collect();
    let s: Vec<f64> = pos.drain(..).map(|(s, _)| s).collect();
    auc(&s, &labels).map_err(|e| match e {
        AcqError::UndefinedSignal(_) => {
            AcqError::UndefinedSignal("pauc degenerate after median binarization")
        }
        other => other,
    })
}

/// Cost-weighted mean of per-account AUCs. Accounts with a single class or
/// zero total cost are skipped and the weights renormalized.
pub fn gauc(
    scores: &[f64],
    labels: &[bool],
    account_ids: &[u64],
    sample_costs: &[f64],
) -> Result<f64> {
    let n = scores.len();
    if labels.len() != n || account_ids.len() != n || sample_costs.len() != n {
        return Err(AcqError::DimensionMismatch {
            what: "gauc input lengths",
            expected: n,
            got: labels.len().min(account_ids.len()).min(sample_costs.len()),
        });
    }
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, &a) in account_ids.iter().enumerate() {
        groups.entry(a).or_default().push(i);
    }
    let mut weighted = 0.0;
    let mut total_weight = 0.0;
    for idx in groups.values() {
        let weight: f64 = idx.iter().map(|&i| sample_costs[i]).sum();
        if weight <= 0.0 {
            continue;
        }
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let l: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
        match auc(&s, &l) {
            Ok(a) => {
                weighted += weight * a;
                total_weight += weight;
            }
            Err(AcqError::UndefinedSignal(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    if total_weight <= 0.0 {
        return Err(AcqError::UndefinedSignal("gauc has no evaluable account"));
    }
    Ok(weighted / total_weight)
}

/// Mean squared error.
pub fn mse(preds: &[f64], actuals: &[f64]) -> Result<f64> {
    if preds.len() != actuals.len() {
        return Err(AcqError::DimensionMismatch {
            what: "predictions vs actuals",
            expected: actuals.len(),
            got: preds.len(),
        });
    }
    if preds.is_empty() {
        return Err(AcqError::EmptyInput("mse inputs"));
    }
    Ok(preds
        .iter()
        .zip(actuals)
        .map(|(p, a)| (p - a) * (p - a))
        .sum::<f64>()
        / preds.len() as f64)
}

/// One evaluation run's metrics; undefined metrics are reported as null.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MetricsReport {
    pub auc: Option<f64>,
    pub mse: Option<f64>,
    pub pauc: Option<f64>,
    pub gauc: Option<f64>,
    pub n: usize,
    pub n_pos: usize,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }
}

fn undefined_to_none(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(AcqError::UndefinedSignal(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Score a dataset with the expected-cost ranking and produce the standard
/// metric report (zero-vs-positive AUC, MSE of the expected cost, PAUC,
/// account-cost-weighted GAUC).
pub fn evaluate_net(
    net: &PropertyHeadNet,
    tree: &UnbalancedCostTree,
    records: &[CostRecord],
    eval_batch_size: usize,
) -> Result<MetricsReport> {
    if records.is_empty() {
        return Err(AcqError::EmptyInput("evaluation records"));
    }
    let scores = score_expected_cost(net, tree, records, eval_batch_size)?;
    let costs: Vec<f64> = records.iter().map(|r| r.cost).collect();
    let labels: Vec<bool> = costs.iter().map(|&c| c > 0.0).collect();
    let accounts: Vec<u64> = records.iter().map(|r| r.account_id).collect();
    let n_pos = labels.iter().filter(|&&l| l).count();
    Ok(MetricsReport {
        auc: undefined_to_none(auc(&scores, &labels))?,
        mse: Some(mse(&scores, &costs)?),
        pauc: undefined_to_none(pauc(&scores, &costs))?,
        gauc: undefined_to_none(gauc(&scores, &labels, &accounts, &costs))?,
        n: records.len(),
        n_pos,
    })
}
