//! Feedforward predictor: hashed embeddings and a dense rectifier trunk
//! feeding two head groups — one sigmoid classifier per internal tree node,
//! and one raw regression head per creative bin, composed into a cost curve
//! under the configured shape variant.

pub mod backward;
pub mod compose;
pub mod linalg;
mod serialize;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub use backward::{
    loss_and_gradients, penalty_and_gradient, record_gradients, record_loss, Gradients,
    LossBreakdown,
};
pub use compose::{compose, compose_vjp, monotonic_compose, submodular_compose, Variant};
pub use linalg::{sigmoid, softplus, spectral_norm, spectral_norm_uv, Matrix};

use crate::error::{AcqError, Result};
use crate::hash::fnv1a64;
use crate::tree::UnbalancedCostTree;

/// Canonical creative-count boundaries: nine right-closed bins over
/// [1, 200].
pub const DEFAULT_BOUNDARIES: [u32; 10] = [1, 2, 3, 5, 8, 15, 30, 60, 120, 200];

/// Discretization of the creative-count axis into right-closed bins.
/// Boundaries `[b_0, b_1, ..., b_K]` define bins `[b_0, b_1]`,
/// `(b_1, b_2]`, ..., `(b_{K-1}, b_K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CreativeBinning {
    boundaries: Vec<u32>,
    widths: Vec<f64>,
}

impl Default for CreativeBinning {
    fn default() -> Self {
        CreativeBinning::new(&DEFAULT_BOUNDARIES).unwrap()
    }
}

impl CreativeBinning {
    pub fn new(boundaries: &[u32]) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(AcqError::InvalidArgument(
                "binning needs at least 2 boundaries".into(),
            ));
        }
        if boundaries[0] != 1 {
            return Err(AcqError::InvalidArgument(
                "first bin must start at 1".into(),
            ));
        }
        for w in boundaries.windows(2) {
            if w[1] <= w[0] {
                return Err(AcqError::InvalidArgument(
                    "bin boundaries must be strictly ascending".into(),
                ));
            }
        }
        if *boundaries.last().unwrap() > 200 {
            return Err(AcqError::InvalidArgument(
                "bin boundaries must stay within [1, 200]".into(),
            ));
        }
        let widths = boundaries
            .windows(2)
            .map(|w| (w[1] - w[0]) as f64)
            .collect();
        Ok(CreativeBinning {
            boundaries: boundaries.to_vec(),
            widths,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn boundaries(&self) -> &[u32] {
        &self.boundaries
    }

    /// Bin widths, parallel to bin indices. The first entry is the width of
    /// the closed first bin; composition variants never use it.
    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn max_quota(&self) -> u32 {
        *self.boundaries.last().unwrap()
    }

    /// Index of the right-closed bin that owns a creative count: the first
    /// upper edge that is ≥ the count.
    pub fn bin_index(&self, creative_count: u32) -> Result<usize> {
        if creative_count < 1 || creative_count > self.max_quota() {
            return Err(AcqError::QuotaOutOfRange(creative_count));
        }
        Ok(self.boundaries[1..].partition_point(|&edge| edge < creative_count))
    }

    /// One candidate quota per bin: the smallest quota for the first bin
    /// and the right edge for every other bin — exactly the boundary set
    /// with the first bin's dominated interior values dropped.
    pub fn candidate_quotas(&self) -> Vec<u32> {
        let mut q = vec![self.boundaries[0]];
        q.extend_from_slice(&self.boundaries[2..]);
        q
    }
}

/// One training or scoring row: identity keys, the historical creative
/// count, the realized cost label, and the model features.
#[derive(Debug, Clone, PartialEq)]
pub struct CostRecord {
    pub account_id: u64,
    pub photo_id: u64,
    pub creative_count: u32,
    pub cost: f64,
    /// Categorical ids: product, first industry, second industry.
    pub sparse_features: Vec<u64>,
    pub dense_features: Vec<f64>,
}

/// One dense layer of the trunk or a head block.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl DenseLayer {
    fn affine(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.w.matvec(x);
        for (yi, bi) in y.iter_mut().zip(&self.b) {
            *yi += bi;
        }
        y
    }
}

/// Architecture hyperparameters for [`PropertyHeadNet::new`].
#[derive(Debug, Clone)]
pub struct NetConfig {
    pub sparse_slots: usize,
    pub embedding_dim: usize,
    pub hash_buckets: usize,
    pub dense_dim: usize,
    pub hidden: Vec<usize>,
    pub classifier_count: usize,
    pub variant: Variant,
    pub lipschitz_weight: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            sparse_slots: 3,
            embedding_dim: 8,
            hash_buckets: 10_009,
            dense_dim: 4,
            hidden: vec![64, 64],
            classifier_count: 0,
            variant: Variant::Monotonic,
            lipschitz_weight: 0.0,
        }
    }
}

/// The predictor network.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyHeadNet {
    pub embeddings: Vec<Matrix>,
    pub trunk: Vec<DenseLayer>,
    pub classifier_head: DenseLayer,
    pub regression_head: DenseLayer,
    pub variant: Variant,
    pub lipschitz_weight: f64,
    pub bins: CreativeBinning,
    sparse_slots: usize,
    embedding_dim: usize,
    hash_buckets: usize,
    dense_dim: usize,
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Concatenated embeddings + dense features.
    pub x: Vec<f64>,
    /// Embedding row used per sparse slot.
    pub rows: Vec<usize>,
    /// Pre-activations per trunk layer.
    pub pre: Vec<Vec<f64>>,
    /// Post-rectifier (and post-dropout) activations per trunk layer.
    pub act: Vec<Vec<f64>>,
    /// Dropout multiplier applied per unit (all 1.0 in eval mode).
    pub mask: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub raw: Vec<f64>,
    pub composed: Vec<f64>,
    pub bin: usize,
    pub selected: f64,
}

/// Inference output of [`PropertyHeadNet::forward`].
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub classifier_probs: Vec<f64>,
    pub composed_costs: Vec<f64>,
    pub selected_cost: f64,
    pub bin: usize,
}

impl PropertyHeadNet {
    /// Fresh net with uniform Xavier-style initialization, deterministic in
    /// the seed.
    pub fn new(cfg: &NetConfig, bins: CreativeBinning, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init_matrix = |rows: usize, cols: usize, limit: f64| -> Matrix {
            Matrix {
                rows,
                cols,
                data: (0..rows * cols)
                    .map(|_| rng.random_range(-limit..limit))
                    .collect(),
            }
        };
        let embeddings = (0..cfg.sparse_slots)
            .map(|_| init_matrix(cfg.hash_buckets, cfg.embedding_dim, 0.05))
            .collect();
        let mut trunk = Vec::new();
        let mut fan_in = cfg.sparse_slots * cfg.embedding_dim + cfg.dense_dim;
        for &h in &cfg.hidden {
            let limit = (6.0 / (fan_in + h) as f64).sqrt();
            trunk.push(DenseLayer {
                w: init_matrix(h, fan_in, limit),
                b: vec![0.0; h],
            });
            fan_in = h;
        }
        let n_bins = bins.n_bins();
        let cls_limit = (6.0 / (fan_in + cfg.classifier_count.max(1)) as f64).sqrt();
        let classifier_head = DenseLayer {
            w: init_matrix(cfg.classifier_count, fan_in, cls_limit),
            b: vec![0.0; cfg.classifier_count],
        };
        let reg_limit = (6.0 / (fan_in + n_bins) as f64).sqrt();
        let regression_head = DenseLayer {
            w: init_matrix(n_bins, fan_in, reg_limit),
            b: vec![0.0; n_bins],
        };
        PropertyHeadNet {
            embeddings,
            trunk,
            classifier_head,
            regression_head,
            variant: cfg.variant,
            lipschitz_weight: cfg.lipschitz_weight,
            bins,
            sparse_slots: cfg.sparse_slots,
            embedding_dim: cfg.embedding_dim,
            hash_buckets: cfg.hash_buckets,
            dense_dim: cfg.dense_dim,
        }
    }

    pub fn classifier_count(&self) -> usize {
        self.classifier_head.w.rows
    }

    pub fn n_bins(&self) -> usize {
        self.regression_head.w.rows
    }

    pub fn sparse_slots(&self) -> usize {
        self.sparse_slots
    }

    pub fn dense_dim(&self) -> usize {
        self.dense_dim
    }

    pub fn hash_buckets(&self) -> usize {
        self.hash_buckets
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    /// Embedding row for a sparse id, salted by slot so the same id in
    /// different slots maps independently.
    pub fn bucket(&self, slot: usize, id: u64) -> usize {
        let mut bytes = [0u8; 9];
        bytes[0] = slot as u8;
        bytes[1..].copy_from_slice(&id.to_le_bytes());
        (fnv1a64(&bytes) % self.hash_buckets as u64) as usize
    }

    fn validate_record(&self, record: &CostRecord) -> Result<()> {
        if record.sparse_features.len() != self.sparse_slots {
            return Err(AcqError::DimensionMismatch {
                what: "sparse features",
                expected: self.sparse_slots,
                got: record.sparse_features.len(),
            });
        }
        if record.dense_features.len() != self.dense_dim {
            return Err(AcqError::DimensionMismatch {
                what: "dense features",
                expected: self.dense_dim,
                got: record.dense_features.len(),
            });
        }
        Ok(())
    }

    /// Full forward evaluation with intermediates retained. `dropout`
    /// enables inverted dropout on the trunk activations (training mode).
    pub fn forward_trace(
        &self,
        record: &CostRecord,
        dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> Result<ForwardTrace> {
        self.validate_record(record)?;
        let bin = self.bins.bin_index(record.creative_count)?;

        let mut x = Vec::with_capacity(self.sparse_slots * self.embedding_dim + self.dense_dim);
        let mut rows = Vec::with_capacity(self.sparse_slots);
        for (slot, &id) in record.sparse_features.iter().enumerate() {
            let row = self.bucket(slot, id);
            rows.push(row);
            x.extend_from_slice(self.embeddings[slot].row(row));
        }
        x.extend_from_slice(&record.dense_features);

        let mut pre = Vec::with_capacity(self.trunk.len());
        let mut act = Vec::with_capacity(self.trunk.len());
        let mut mask = Vec::with_capacity(self.trunk.len());
        let mut dropout = dropout;
        let mut h = x.clone();
        for layer in &self.trunk {
            let z = layer.affine(&h);
            let mut a: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
            let m: Vec<f64> = match dropout.as_mut() {
                Some((rate, rng)) if *rate > 0.0 => {
                    let keep = 1.0 - *rate;
                    a.iter_mut()
                        .map(|v| {
                            if rng.random::<f64>() < keep {
                                *v /= keep;
                                1.0 / keep
                            } else {
                                *v = 0.0;
                                0.0
                            }
                        })
                        .collect()
                }
                _ => vec![1.0; a.len()],
            };
            pre.push(z);
            mask.push(m);
            h = a.clone();
            act.push(a);
        }

        let logits = self.classifier_head.affine(&h);
        let probs: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
        let raw = self.regression_head.affine(&h);
        let composed = compose(self.variant, &raw, &self.bins);
        let selected = composed[bin];
        Ok(ForwardTrace {
            x,
            rows,
            pre,
            act,
            mask,
            logits,
            probs,
            raw,
            composed,
            bin,
            selected,
        })
    }

    /// Inference forward pass (no dropout).
    pub fn forward(&self, record: &CostRecord) -> Result<ForwardOutput> {
        let t = self.forward_trace(record, None)?;
        Ok(ForwardOutput {
            classifier_probs: t.probs,
            composed_costs: t.composed,
            selected_cost: t.selected,
            bin: t.bin,
        })
    }

    /// Predicted cost of giving this photo `candidate_quota` creatives:
    /// the composed curve at the quota's bin, floored at zero. The tree is
    /// the one the net was trained against; passing an incompatible one is
    /// an error.
    pub fn predict_pvalue(
        &self,
        tree: &UnbalancedCostTree,
        features: &CostRecord,
        candidate_quota: u32,
    ) -> Result<f64> {
        if tree.classifier_count() != self.classifier_count() {
            return Err(AcqError::DimensionMismatch {
                what: "tree classifiers vs net heads",
                expected: self.classifier_count(),
                got: tree.classifier_count(),
            });
        }
        let bin = self.bins.bin_index(candidate_quota)?;
        let out = self.forward(features)?;
        Ok(out.composed_costs[bin].max(0.0))
    }

    /// Product over trunk layers of softplus(spectral norm of the weight
    /// matrix) — the Lipschitz surrogate used as a smoothness penalty.
    pub fn lipschitz_penalty(&self) -> f64 {
        self.trunk
            .iter()
            .map(|l| softplus(spectral_norm(&l.w)))
            .product()
    }

    pub fn parameter_count(&self) -> usize {
        let emb: usize = self.embeddings.iter().map(|m| m.data.len()).sum();
        let trunk: usize = self.trunk.iter().map(|l| l.w.data.len() + l.b.len()).sum();
        emb + trunk
            + self.classifier_head.w.data.len()
            + self.classifier_head.b.len()
            + self.regression_head.w.data.len()
            + self.regression_head.b.len()
    }
}
