//! Synthetic workload generator: a zero-inflated, long-tailed cost dataset
//! with known latent cost curves, plus helpers that turn those curves (or
//! model predictions) into allocation instances.
//!
//! Generative story, per photo:
//!
//! * a latent quality `s ~ N(0, 1)`;
//! * a saturation scale `A = curve_scale · exp(tail_mu + tail_sigma · z)`
//!   where `z` is a unit normal correlated with `s` (ρ = 0.75), so the
//!   feature channels derived from `s` carry signal about the scale;
//! * a saturation rate `τ` jittered uniformly around `curve_tau`;
//! * a zero probability `p_zero = σ(bias − 1.5·s)`, with `bias` calibrated
//!   by bisection so the mean of `p_zero` over all photos equals
//!   `zero_rate` exactly — higher-quality photos are less likely to stay
//!   at zero;
//! * one observed row: a creative count drawn log-normally (clamped to
//!   [1, 200]) and a cost that is 0 with probability `p_zero` and otherwise
//!   `A·(1 − e^{−count/τ})` plus additive Gaussian noise. The noise is
//!   truncated below at −half the curve value and the sum floored at 0, so
//!   a non-zero row keeps a strictly positive cost.
//!
//! With the default parameters a 100k-row dataset lands in these bands
//! (seed-to-seed): zero fraction `zero_rate ± 0.005`, overall mean cost in
//! [0.3, 2.5] with median 0, positive-row mean in [20, 80], and a maximum
//! in [1e3, 1e5].

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, Normal, StandardNormal};

use crate::allocator::{Candidate, Item, McKpInstance};
use crate::error::{AcqError, Result};
use crate::hash::fnv1a64;
use crate::predictor::{CostRecord, CreativeBinning};

/// Correlation between latent quality and the log saturation scale.
const QUALITY_SCALE_RHO: f64 = 0.75;
/// Slope of latent quality inside the zero-probability logit.
const ZERO_SLOPE: f64 = 1.5;
/// Log-normal parameters of the creative-count draw (median 6).
const COUNT_LN_MU: f64 = 1.791759469228055; // ln 6
const COUNT_LN_SIGMA: f64 = 0.8;
/// Relative jitter band applied to `curve_tau` per photo.
const TAU_JITTER: (f64, f64) = (0.75, 1.25);
/// Noise added to the informative dense feature channels.
const FEATURE_NOISE_STD: f64 = 0.25;
/// Cardinalities of the categorical id draws: product id per photo,
/// two industry ids shared by every photo of an account.
const PRODUCT_CARD: u64 = 25;
const INDUSTRY1_CARD: u64 = 40;
const INDUSTRY2_CARD: u64 = 150;

/// Parameters of the synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_accounts: usize,
    pub photos_per_account: usize,
    /// Target fraction of zero-cost rows, hit exactly in expectation.
    pub zero_rate: f64,
    /// Log-normal location of the positive saturation scale.
    pub tail_mu: f64,
    /// Log-normal shape of the positive saturation scale.
    pub tail_sigma: f64,
    /// Global multiplier on every saturation scale.
    pub curve_scale: f64,
    /// Central saturation rate of the latent curves.
    pub curve_tau: f64,
    /// Standard deviation of the additive cost noise.
    pub noise_std: f64,
    pub seed: u64,
    /// Number of dense feature channels per record.
    pub feature_dim: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_accounts: 5_000,
            photos_per_account: 10,
            zero_rate: 0.98,
            tail_mu: 1.6,
            tail_sigma: 2.0,
            curve_scale: 1.0,
            curve_tau: 40.0,
            noise_std: 1.0,
            seed: 7,
            feature_dim: 4,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_accounts == 0 || self.photos_per_account == 0 {
            return Err(AcqError::EmptyInput("synthetic account/photo counts"));
        }
        if !(0.0..1.0).contains(&self.zero_rate) {
            return Err(AcqError::InvalidArgument(
                "zero_rate must lie in [0, 1)".into(),
            ));
        }
        if !self.tail_mu.is_finite() {
            return Err(AcqError::InvalidArgument("tail_mu must be finite".into()));
        }
        for (name, v) in [
            ("tail_sigma", self.tail_sigma),
            ("curve_scale", self.curve_scale),
            ("curve_tau", self.curve_tau),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(AcqError::InvalidArgument(format!(
                    "{name} must be finite and positive"
                )));
            }
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(AcqError::InvalidArgument(
                "noise_std must be finite and non-negative".into(),
            ));
        }
        if self.feature_dim == 0 {
            return Err(AcqError::EmptyInput("dense feature dimension"));
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n_accounts * self.photos_per_account
    }
}

/// Ground truth behind one photo: the saturating cost curve and the zero
/// probability its rows were drawn with.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCurve {
    pub account_id: u64,
    pub photo_id: u64,
    /// Saturation scale of the positive branch.
    pub a: f64,
    /// Saturation rate of the positive branch.
    pub tau: f64,
    /// Probability that a row of this photo realizes zero cost.
    pub p_zero: f64,
}

impl LatentCurve {
    /// Expected cost at a quota: the zero branch contributes nothing, the
    /// positive branch follows the saturating curve.
    pub fn expected_value(&self, quota: u32) -> f64 {
        (1.0 - self.p_zero) * self.a * (1.0 - (-(quota as f64) / self.tau).exp())
    }
}

/// Deterministic per-account RNG stream; `phase` separates the latent
/// draws from the observation draws so the two passes stay independent.
fn shard_rng(seed: u64, account_index: u64, phase: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 24];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&account_index.to_le_bytes());
    bytes[16..].copy_from_slice(&phase.to_le_bytes());
    ChaCha8Rng::seed_from_u64(fnv1a64(&bytes))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Bias `b` such that mean_i σ(b − z_i) equals `target`. The mean is
/// continuous and strictly increasing in `b`, so bisection converges; the
/// bracket covers every target in (0, 1) for |z| up to ~50.
fn calibrate_zero_bias(z: &[f64], target: f64) -> f64 {
    let (mut lo, mut hi) = (-60.0f64, 60.0f64);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        let mean = z.iter().map(|&zi| sigmoid(mid - zi)).sum::<f64>() / z.len() as f64;
        if mean < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

struct Latent {
    account_id: u64,
    photo_id: u64,
    s: f64,
    a: f64,
    tau: f64,
    count: u32,
    sparse: Vec<u64>,
}

/// Generate the dataset and its ground truth. Rows are ordered by account
/// then photo; each photo contributes exactly one row. Determinism: the
/// same config always yields the same records and curves, and each
/// account's draws come from its own derived stream.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<(Vec<CostRecord>, Vec<LatentCurve>)> {
    cfg.validate()?;
    let scale_noise = (1.0 - QUALITY_SCALE_RHO * QUALITY_SCALE_RHO).sqrt();
    let count_dist = LogNormal::new(COUNT_LN_MU, COUNT_LN_SIGMA)
        .map_err(|e| AcqError::InvalidArgument(e.to_string()))?;

    // Pass 1: latent curves and identities.
    let mut latents: Vec<Latent> = Vec::with_capacity(cfg.n_rows());
    for a_idx in 0..cfg.n_accounts {
        let mut rng = shard_rng(cfg.seed, a_idx as u64, 1);
        let account_id = a_idx as u64 + 1;
        let industry1 = rng.random_range(0..INDUSTRY1_CARD);
        let industry2 = rng.random_range(0..INDUSTRY2_CARD);
        for p_idx in 0..cfg.photos_per_account {
            let s: f64 = rng.sample(StandardNormal);
            let eps: f64 = rng.sample(StandardNormal);
            let log_a = cfg.tail_mu + cfg.tail_sigma * (QUALITY_SCALE_RHO * s + scale_noise * eps);
            let tau = cfg.curve_tau * rng.random_range(TAU_JITTER.0..TAU_JITTER.1);
            let count = (rng.sample::<f64, _>(count_dist).round() as i64).clamp(1, 200) as u32;
            let product = rng.random_range(0..PRODUCT_CARD);
            latents.push(Latent {
                account_id,
                photo_id: (a_idx * cfg.photos_per_account + p_idx) as u64 + 1,
                s,
                a: cfg.curve_scale * log_a.exp(),
                tau,
                count,
                sparse: vec![product, industry1, industry2],
            });
        }
    }

    // Calibrate the zero-probability bias against the realized qualities.
    let bias = if cfg.zero_rate == 0.0 {
        f64::NEG_INFINITY
    } else {
        let z: Vec<f64> = latents.iter().map(|l| ZERO_SLOPE * l.s).collect();
        calibrate_zero_bias(&z, cfg.zero_rate)
    };

    // Pass 2: observations and features.
    let mut records = Vec::with_capacity(latents.len());
    let mut curves = Vec::with_capacity(latents.len());
    let mut it = latents.iter();
    for a_idx in 0..cfg.n_accounts {
        let mut rng = shard_rng(cfg.seed, a_idx as u64, 2);
        for _ in 0..cfg.photos_per_account {
            let lat = it.next().unwrap();
            let p_zero = if bias == f64::NEG_INFINITY {
                0.0
            } else {
                sigmoid(bias - ZERO_SLOPE * lat.s)
            };
            let curve_value = lat.a * (1.0 - (-(lat.count as f64) / lat.tau).exp());
            let u: f64 = rng.random();
            let noise: f64 = if cfg.noise_std > 0.0 {
                rng.sample::<f64, _>(
                    Normal::new(0.0, cfg.noise_std)
                        .map_err(|e| AcqError::InvalidArgument(e.to_string()))?,
                )
            } else {
                0.0
            };
            let cost = if u < p_zero {
                0.0
            } else {
                (curve_value + noise.max(-curve_value / 2.0)).max(0.0)
            };
            let mut dense = Vec::with_capacity(cfg.feature_dim);
            for j in 0..cfg.feature_dim {
                let nu: f64 = rng.sample(StandardNormal);
                let v = match j {
                    0 => lat.s + FEATURE_NOISE_STD * nu,
                    1 => {
                        ((lat.a / cfg.curve_scale).ln() - cfg.tail_mu) / cfg.tail_sigma
                            + FEATURE_NOISE_STD * nu
                    }
                    2 => (lat.tau / cfg.curve_tau).ln() / 0.25 + FEATURE_NOISE_STD * nu,
                    _ => nu,
                };
                dense.push(v);
            }
            records.push(CostRecord {
                account_id: lat.account_id,
                photo_id: lat.photo_id,
                creative_count: lat.count,
                cost,
                sparse_features: lat.sparse.clone(),
                dense_features: dense,
            });
            curves.push(LatentCurve {
                account_id: lat.account_id,
                photo_id: lat.photo_id,
                a: lat.a,
                tau: lat.tau,
                p_zero,
            });
        }
    }
    Ok((records, curves))
}

/// Build an allocation instance from per-item candidate lists, with the
/// capacity set to a fraction of the usage when every item takes its
/// largest quota.
pub fn instance_with_fraction(items: Vec<Item>, capacity_fraction: f64) -> Result<McKpInstance> {
    if items.is_empty() {
        return Err(AcqError::EmptyInput("instance items"));
    }
    if !(capacity_fraction.is_finite() && capacity_fraction > 0.0 && capacity_fraction <= 1.0) {
        return Err(AcqError::InvalidArgument(
            "capacity fraction must lie in (0, 1]".into(),
        ));
    }
    let mut instance = McKpInstance { items, capacity: 0 };
    instance.validate()?;
    instance.capacity = (capacity_fraction * instance.max_usage() as f64).round() as u64;
    Ok(instance)
}

/// Instance whose candidate rewards are the true expected costs of the
/// latent curves at each binning quota.
pub fn instance_from_curves(
    curves: &[LatentCurve],
    binning: &CreativeBinning,
    capacity_fraction: f64,
) -> Result<McKpInstance> {
    let quotas = binning.candidate_quotas();
    let items = curves
        .iter()
        .map(|c| Item {
            account_id: c.account_id,
            photo_id: c.photo_id,
            candidates: quotas
                .iter()
                .map(|&q| Candidate {
                    quota: q,
                    reward: c.expected_value(q),
                })
                .collect(),
        })
        .collect();
    instance_with_fraction(items, capacity_fraction)
}

/// Serialize records: a header carrying the schema and seed, then one row
/// per record with ids, count, cost, sparse ids, dense values.
pub fn dataset_to_string(records: &[CostRecord], seed: u64) -> String {
    let (n_sparse, n_dense) = records
        .first()
        .map(|r| (r.sparse_features.len(), r.dense_features.len()))
        .unwrap_or((0, 0));
    let mut out = format!("acq-dataset v1 seed {seed} sparse {n_sparse} dense {n_dense}\n");
    for r in records {
        out.push_str(&format!(
            "{} {} {} {}",
            r.account_id, r.photo_id, r.creative_count, r.cost
        ));
        for s in &r.sparse_features {
            out.push_str(&format!(" {s}"));
        }
        for d in &r.dense_features {
            out.push_str(&format!(" {d}"));
        }
        out.push('\n');
    }
    out
}

/// Parse the dataset format; returns the records and the seed recorded in
/// the header.
pub fn dataset_from_str(text: &str) -> Result<(Vec<CostRecord>, u64)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(AcqError::EmptyInput("dataset text"))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 8
        || h[0] != "acq-dataset"
        || h[1] != "v1"
        || h[2] != "seed"
        || h[4] != "sparse"
        || h[6] != "dense"
    {
        return Err(AcqError::Parse {
            line: 1,
            message: "expected header `acq-dataset v1 seed <n> sparse <k> dense <d>`".into(),
        });
    }
    let header_err = |message: &str| AcqError::Parse {
        line: 1,
        message: message.into(),
    };
    let seed: u64 = h[3].parse().map_err(|_| header_err("bad seed"))?;
    let n_sparse: usize = h[5].parse().map_err(|_| header_err("bad sparse count"))?;
    let n_dense: usize = h[7].parse().map_err(|_| header_err("bad dense count"))?;
    let mut records = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let p: Vec<&str> = line.split_whitespace().collect();
        let parse_err = |message: String| AcqError::Parse {
            line: i + 1,
            message,
        };
        if p.len() != 4 + n_sparse + n_dense {
            return Err(parse_err(format!(
                "expected {} fields, got {}",
                4 + n_sparse + n_dense,
                p.len()
            )));
        }
        let account_id: u64 = p[0]
            .parse()
            .map_err(|_| parse_err("bad account id".into()))?;
        let photo_id: u64 = p[1].parse().map_err(|_| parse_err("bad photo id".into()))?;
        let creative_count: u32 = p[2]
            .parse()
            .map_err(|_| parse_err("bad creative count".into()))?;
        let cost: f64 = p[3].parse().map_err(|_| parse_err("bad cost".into()))?;
        let mut sparse_features = Vec::with_capacity(n_sparse);
        for f in &p[4..4 + n_sparse] {
            sparse_features.push(f.parse().map_err(|_| parse_err("bad sparse id".into()))?);
        }
        let mut dense_features = Vec::with_capacity(n_dense);
        for f in &p[4 + n_sparse..] {
            dense_features.push(f.parse().map_err(|_| parse_err("bad dense value".into()))?);
        }
        records.push(CostRecord {
            account_id,
            photo_id,
            creative_count,
            cost,
            sparse_features,
            dense_features,
        });
    }
    Ok((records, seed))
}

/// Serialize latent curves, one per line.
pub fn curves_to_string(curves: &[LatentCurve]) -> String {
    let mut out = String::from("acq-curves v1\n");
    for c in curves {
        out.push_str(&format!(
            "{} {} {} {} {}\n",
            c.account_id, c.photo_id, c.a, c.tau, c.p_zero
        ));
    }
    out
}

/// Parse the curves format.
pub fn curves_from_str(text: &str) -> Result<Vec<LatentCurve>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(AcqError::EmptyInput("curves text"))?;
    if header.split_whitespace().collect::<Vec<_>>() != ["acq-curves", "v1"] {
        return Err(AcqError::Parse {
            line: 1,
            message: "expected header `acq-curves v1`".into(),
        });
    }
    let mut curves = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let p: Vec<&str> = line.split_whitespace().collect();
        let parse_err = |message: &str| AcqError::Parse {
            line: i + 1,
            message: message.into(),
        };
        if p.len() != 5 {
            return Err(parse_err("expected `account photo a tau p_zero`"));
        }
        curves.push(LatentCurve {
            account_id: p[0].parse().map_err(|_| parse_err("bad account id"))?,
            photo_id: p[1].parse().map_err(|_| parse_err("bad photo id"))?,
            a: p[2].parse().map_err(|_| parse_err("bad scale"))?,
            tau: p[3].parse().map_err(|_| parse_err("bad rate"))?,
            p_zero: p[4]
                .parse()
                .map_err(|_| parse_err("bad zero probability"))?,
        });
    }
    Ok(curves)
}
