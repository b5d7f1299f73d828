//! Shape-constrained composition of the raw regression heads into the
//! per-bin cost curve, plus the matching vector-Jacobian products used by
//! the backward pass.
//!
//! All variants take the first head as the base value. The monotonic
//! variant adds squared increments so the curve is non-decreasing for any
//! parameter values. The submodular variant accumulates squared slopes from
//! the tail so the per-unit slope is additionally non-increasing, then
//! scales each slope by the width of its bin.

use super::CreativeBinning;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Control,
    Monotonic,
    Submodular,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Control => "control",
            Variant::Monotonic => "monotonic",
            Variant::Submodular => "submodular",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        match s {
            "control" => Some(Variant::Control),
            "monotonic" => Some(Variant::Monotonic),
            "submodular" => Some(Variant::Submodular),
            _ => None,
        }
    }
}

/// Monotone curve: y_1 = raw_1, y_k = y_1 + Σ_{i=2..k} raw_i².
pub fn monotonic_compose(raw: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(raw.len());
    let mut acc = raw[0];
    out.push(acc);
    for &r in &raw[1..] {
        acc += r * r;
        out.push(acc);
    }
    out
}

/// Submodular curve: squared slopes accumulated from the tail
/// (s_k = Σ_{j=k..K} raw_j², non-increasing in k), increments s_k · δ_k,
/// cumulative from y_1 = raw_1.
pub fn submodular_compose(raw: &[f64], bins: &CreativeBinning) -> Vec<f64> {
    let k = raw.len();
    assert_eq!(k, bins.n_bins(), "raw head count vs bin count");
    let widths = bins.widths();
    // Suffix sums of squared raw heads over indices 1..k (0-based).
    let mut slope = vec![0.0; k];
    let mut acc = 0.0;
    for i in (1..k).rev() {
        acc += raw[i] * raw[i];
        slope[i] = acc;
    }
    let mut out = Vec::with_capacity(k);
    let mut y = raw[0];
    out.push(y);
    for i in 1..k {
        y += slope[i] * widths[i];
        out.push(y);
    }
    out
}

/// Compose `raw` under `variant`.
pub fn compose(variant: Variant, raw: &[f64], bins: &CreativeBinning) -> Vec<f64> {
    match variant {
        Variant::Control => raw.to_vec(),
        Variant::Monotonic => monotonic_compose(raw),
        Variant::Submodular => submodular_compose(raw, bins),
    }
}

/// Vector-Jacobian product of `compose`: given d(loss)/d(composed), return
/// d(loss)/d(raw).
pub fn compose_vjp(
    variant: Variant,
    raw: &[f64],
    bins: &CreativeBinning,
    grad_out: &[f64],
) -> Vec<f64> {
    let k = raw.len();
    assert_eq!(grad_out.len(), k, "grad length vs head count");
    match variant {
        Variant::Control => grad_out.to_vec(),
        Variant::Monotonic => {
            // y_k depends on raw_1 (coefficient 1) and raw_j, j ≤ k
            // (coefficient 2 raw_j): g_j = 2 raw_j Σ_{k ≥ j} grad_k.
            let mut g = vec![0.0; k];
            let mut tail = 0.0;
            for j in (0..k).rev() {
                tail += grad_out[j];
                g[j] = if j == 0 { tail } else { 2.0 * raw[j] * tail };
            }
            g
        }
        Variant::Submodular => {
            // y_k = raw_0 + Σ_{i=1..k} δ_i Σ_{j≥i} raw_j², so
            // g_j = 2 raw_j Σ_{i=1..j} δ_i G_i with G_i = Σ_{k≥i} grad_k.
            let widths = bins.widths();
            let mut suffix_grad = vec![0.0; k + 1];
            for i in (0..k).rev() {
                suffix_grad[i] = suffix_grad[i + 1] + grad_out[i];
            }
            let mut g = vec![0.0; k];
            g[0] = suffix_grad[0];
            let mut prefix = 0.0;
            for j in 1..k {
                prefix += widths[j] * suffix_grad[j];
                g[j] = 2.0 * raw[j] * prefix;
            }
            g
        }
    }
}
