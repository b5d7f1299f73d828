//! Quota allocation as a multiple-choice knapsack, solved by bisection on
//! the Lagrangian dual price, with capacity repair and a sampling mode for
//! large instances.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{AcqError, Result};

/// One quota option for an item: make `quota` creatives, earn `reward`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub quota: u32,
    pub reward: f64,
}

/// One (account, photo) product with its quota options.
#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub account_id: u64,
    pub photo_id: u64,
    pub candidates: Vec<Candidate>,
}

/// A full allocation problem: pick exactly one candidate per item subject
/// to the total creative budget.
#[derive(Debug, Clone, PartialEq)]
pub struct McKpInstance {
    pub items: Vec<Item>,
    pub capacity: u64,
}

pub const MAX_QUOTA: u32 = 200;

impl McKpInstance {
    pub fn validate(&self) -> Result<()> {
        for item in &self.items {
            if item.candidates.is_empty() {
                return Err(AcqError::EmptyInput("item candidate list"));
            }
            let mut prev = 0u32;
            for c in &item.candidates {
                if c.quota < 1 || c.quota > MAX_QUOTA {
                    return Err(AcqError::QuotaOutOfRange(c.quota));
                }
                if c.quota <= prev {
                    return Err(AcqError::InvalidArgument(format!(
                        "item ({}, {}) quotas must be strictly ascending",
                        item.account_id, item.photo_id
                    )));
                }
                if !c.reward.is_finite() {
                    return Err(AcqError::NonFinite(format!(
                        "reward for item ({}, {})",
                        item.account_id, item.photo_id
                    )));
                }
                prev = c.quota;
            }
        }
        Ok(())
    }

    /// Total creatives when every item takes its smallest quota.
    pub fn min_usage(&self) -> u64 {
        self.items
            .iter()
            .map(|i| i.candidates[0].quota as u64)
            .sum()
    }

    /// Total creatives when every item takes its largest quota.
    pub fn max_usage(&self) -> u64 {
        self.items
            .iter()
            .map(|i| i.candidates.last().unwrap().quota as u64)
            .sum()
    }
}

/// Weight of the exploration term when assembling rewards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardSpec {
    pub explore_weight: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        RewardSpec {
            explore_weight: 0.0,
        }
    }
}

impl RewardSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.explore_weight.is_finite() || self.explore_weight < 0.0 {
            return Err(AcqError::InvalidArgument(
                "explore weight must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Result of a solve: one candidate index per item (aligned with the
/// instance's item order), the dual price, and the realized totals.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationPlan {
    pub choices: Vec<usize>,
    pub dual_price: f64,
    pub objective: f64,
    pub used_capacity: u64,
    pub repair_applied: bool,
}

/// Reward of a candidate: predicted value plus weighted exploration score.
pub fn assemble_reward(pvalue: f64, explore_score: f64, spec: &RewardSpec) -> f64 {
    pvalue + spec.explore_weight * explore_score
}

/// Upper-confidence exploration score; play counts are floored so fresh
/// items stay finite.
pub fn ucb_explore_score(mean_reward: f64, total_plays: f64, item_plays: f64) -> f64 {
    let t = total_plays.max(std::f64::consts::E);
    let n = item_plays.max(1.0);
    mean_reward + (2.0 * t.ln() / n).sqrt()
}

/// The per-item decision at dual price `lambda`: the candidate maximizing
/// reward − lambda·quota, ties broken toward the smallest quota.
pub fn decide_item(candidates: &[Candidate], lambda: f64) -> usize {
    debug_assert!(!candidates.is_empty());
    let mut best = 0usize;
    let mut best_score = candidates[0].reward - lambda * candidates[0].quota as f64;
    for (k, c) in candidates.iter().enumerate().skip(1) {
        let score = c.reward - lambda * c.quota as f64;
        // Strict improvement only: on ties the earlier (smaller-quota)
        // candidate stands.
        if score > best_score {
            best = k;
            best_score = score;
        }
    }
    best
}

fn decide_all(instance: &McKpInstance, lambda: f64) -> Vec<usize> {
    instance
        .items
        .par_iter()
        .map(|item| decide_item(&item.candidates, lambda))
        .collect()
}

fn used_capacity(instance: &McKpInstance, choices: &[usize]) -> u64 {
    instance
        .items
        .iter()
        .zip(choices)
        .map(|(item, &k)| item.candidates[k].quota as u64)
        .sum()
}

fn objective(instance: &McKpInstance, choices: &[usize]) -> f64 {
    instance
        .items
        .iter()
        .zip(choices)
        .map(|(item, &k)| item.candidates[k].reward)
        .sum()
}

/// Excess demand at dual price `lambda`: total quota of the per-item
/// decisions minus the capacity. Monotone non-increasing in lambda.
pub fn g_of_lambda(instance: &McKpInstance, lambda: f64) -> i64 {
    let total: u64 = instance
        .items
        .par_iter()
        .map(|item| item.candidates[decide_item(&item.candidates, lambda)].quota as u64)
        .sum();
    total as i64 - instance.capacity as i64
}

/// Lagrangian dual function: sum of per-item maxima of reward − λ·quota,
/// plus λ·capacity. An upper bound on every feasible objective.
pub fn dual_value(instance: &McKpInstance, lambda: f64) -> f64 {
    let per_item: f64 = instance
        .items
        .iter()
        .map(|item| {
            item.candidates
                .iter()
                .map(|c| c.reward - lambda * c.quota as f64)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    per_item + lambda * instance.capacity as f64
}

/// Find the smallest dual price whose demand fits the capacity, by
/// bisection. Returns 0 when capacity is already slack at a zero price.
pub fn bisect_lambda(instance: &McKpInstance, tolerance: f64, max_iter: usize) -> Result<f64> {
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(AcqError::InvalidArgument(
            "bisection tolerance must be positive".into(),
        ));
    }
    if g_of_lambda(instance, 0.0) <= 0 {
        return Ok(0.0);
    }
    // Bracket: start at the largest reward-per-creative ratio and double
    // until demand fits. The ratio alone is not always a valid bracket —
    // an item can still prefer a large quota there when a cheap candidate
    // has a middling ratio — but at a high enough price every item takes
    // its smallest quota, so doubling terminates whenever the instance is
    // feasible at minimum quotas.
    let max_ratio = instance
        .items
        .iter()
        .flat_map(|i| i.candidates.iter())
        .map(|c| c.reward / c.quota as f64)
        .fold(0.0f64, f64::max);
    let mut hi = max_ratio.max(tolerance);
    let mut doublings = 0;
    while g_of_lambda(instance, hi) > 0 {
        hi *= 2.0;
        doublings += 1;
        if doublings > 64 {
            return Err(AcqError::MaxIterations(
                "no dual price satisfies the capacity (demand exceeds capacity at minimum quotas)",
            ));
        }
    }
    let mut lo = 0.0f64;
    for _ in 0..max_iter {
        if hi - lo <= tolerance {
            return Ok(hi);
        }
        let mid = 0.5 * (lo + hi);
        let g = g_of_lambda(instance, mid);
        if g == 0 {
            return Ok(mid);
        } else if g < 0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if hi - lo <= tolerance {
        Ok(hi)
    } else {
        Err(AcqError::MaxIterations("dual bisection did not converge"))
    }
}

/// Heap key ordered by a float ratio with deterministic tie-breaking.
#[derive(Debug, PartialEq)]
struct RatioKey {
    ratio: f64,
    item: usize,
    from: usize,
    to: usize,
}

impl Eq for RatioKey {}

impl Ord for RatioKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.ratio
            .total_cmp(&other.ratio)
            .then(self.item.cmp(&other.item))
            .then(self.from.cmp(&other.from))
            .then(self.to.cmp(&other.to))
    }
}

impl PartialOrd for RatioKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Downgrade items until the plan fits the capacity, always taking the
/// step losing the least reward per freed creative.
fn repair_overshoot(instance: &McKpInstance, choices: &mut [usize], used: &mut u64) -> bool {
    if *used <= instance.capacity {
        return false;
    }
    let mut heap: BinaryHeap<Reverse<RatioKey>> = BinaryHeap::new();
    let push = |heap: &mut BinaryHeap<Reverse<RatioKey>>, item: usize, from: usize| {
        if from == 0 {
            return;
        }
        let cs = &instance.items[item].candidates;
        let to = from - 1;
        let loss = cs[from].reward - cs[to].reward;
        let freed = (cs[from].quota - cs[to].quota) as f64;
        heap.push(Reverse(RatioKey {
            ratio: loss / freed,
            item,
            from,
            to,
        }));
    };
    for (i, &k) in choices.iter().enumerate() {
        push(&mut heap, i, k);
    }
    while *used > instance.capacity {
        let Reverse(key) = heap.pop().expect("repair heap exhausted before fitting");
        if choices[key.item] != key.from {
            continue; // stale entry
        }
        let cs = &instance.items[key.item].candidates;
        *used -= (cs[key.from].quota - cs[key.to].quota) as u64;
        choices[key.item] = key.to;
        push(&mut heap, key.item, key.to);
    }
    true
}

/// Spend remaining slack on the single-item moves with the best reward
/// gain per added creative; only strictly profitable moves are taken.
///
/// First pass: replace any dominated choice (a cheaper candidate with a
/// strictly higher reward exists) with the best such candidate. Dual
/// decisions never produce dominated choices, but the repair pass can;
/// fixing them gains reward and frees capacity. One jump per item
/// suffices because the replacement is the reward argmax over every
/// no-costlier candidate.
///
/// Second pass: after the first, every improving move strictly adds
/// usage, so slack only shrinks; moves that do not fit the slack seen at
/// push time can never become feasible and are dropped immediately, which
/// keeps the heap small when the plan is already nearly tight.
fn greedy_upgrade(instance: &McKpInstance, choices: &mut [usize], used: &mut u64) {
    for (i, item) in instance.items.iter().enumerate() {
        let cs = &item.candidates;
        let cur = choices[i];
        let mut best = cur;
        for t in 0..cur {
            if cs[t].reward > cs[best].reward {
                best = t;
            }
        }
        if best != cur {
            *used -= (cs[cur].quota - cs[best].quota) as u64;
            choices[i] = best;
        }
    }

    let mut heap: BinaryHeap<RatioKey> = BinaryHeap::new();
    let push = |heap: &mut BinaryHeap<RatioKey>, item: usize, from: usize, slack: u64| {
        let cs = &instance.items[item].candidates;
        for to in from + 1..cs.len() {
            let gain = cs[to].reward - cs[from].reward;
            if gain > 0.0 {
                let added = (cs[to].quota - cs[from].quota) as u64;
                if added <= slack {
                    heap.push(RatioKey {
                        ratio: gain / added as f64,
                        item,
                        from,
                        to,
                    });
                }
            }
        }
    };
    let slack = instance.capacity - *used;
    if slack == 0 {
        return;
    }
    for (i, &k) in choices.iter().enumerate() {
        push(&mut heap, i, k, slack);
    }
    while let Some(key) = heap.pop() {
        if choices[key.item] != key.from {
            continue; // stale entry
        }
        let cs = &instance.items[key.item].candidates;
        let added = (cs[key.to].quota - cs[key.from].quota) as u64;
        if *used + added > instance.capacity {
            continue;
        }
        *used += added;
        choices[key.item] = key.to;
        push(&mut heap, key.item, key.to, instance.capacity - *used);
    }
}

/// Instances with more candidates than this skip the exchange polish so
/// the large-instance path stays linear in candidate count.
const POLISH_CANDIDATE_LIMIT: usize = 4096;
/// How far total usage may transiently dip below its current value during
/// one repack round (four items' worth of maximal quota).
const POLISH_WINDOW: i64 = 4 * MAX_QUOTA as i64;
const POLISH_MAX_ROUNDS: usize = 50;

/// One repack round: a dynamic program over the net change in used
/// creatives (within a bounded window), where every item may move to any
/// of its candidates. Finds the reward-optimal combined move — including
/// exchanges where downgrades finance one or more blocked upgrades, which
/// no sequence of single-item improvements can reach. Returns whether the
/// plan changed.
fn window_repack(instance: &McKpInstance, choices: &mut [usize], used: &mut u64) -> bool {
    let n = instance.items.len();
    let slack = (instance.capacity - *used) as i64;
    // The delta states span the full window in both directions: partial
    // sums along item order are bookkeeping, not physical usage, so only
    // the final state is capacity-checked.
    let width = (2 * POLISH_WINDOW + 1) as usize;
    let offset = POLISH_WINDOW as usize;
    let neg = f64::NEG_INFINITY;
    let mut cur = vec![neg; width];
    cur[offset] = 0.0;
    let mut next = vec![neg; width];
    // parent[j * width + s]: candidate index item j takes at delta state s.
    let mut parent = vec![0u8; n * width];
    for (j, &k) in choices.iter().enumerate() {
        let cs = &instance.items[j].candidates;
        next.fill(neg);
        let prow = &mut parent[j * width..(j + 1) * width];
        for (to, cand) in cs.iter().enumerate() {
            let dq = cand.quota as i64 - cs[k].quota as i64;
            let dr = cand.reward - cs[k].reward;
            let lo = 0.max(dq) as usize;
            let hi = (width as i64).min(width as i64 + dq).max(0) as usize;
            for s_new in lo..hi {
                let base = cur[(s_new as i64 - dq) as usize];
                if base == neg {
                    continue;
                }
                let v = base + dr;
                if v > next[s_new] {
                    next[s_new] = v;
                    prow[s_new] = to as u8;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    let mut best_s = offset;
    let mut best_v = 0.0;
    let max_s = (offset as i64 + slack.min(POLISH_WINDOW)) as usize;
    for (s, &v) in cur.iter().enumerate().take(max_s.min(width - 1) + 1) {
        if v > best_v {
            best_v = v;
            best_s = s;
        }
    }
    if best_v <= 1e-12 {
        return false;
    }
    let mut s = best_s;
    for j in (0..n).rev() {
        let to = parent[j * width + s] as usize;
        let cs = &instance.items[j].candidates;
        let dq = cs[to].quota as i64 - cs[choices[j]].quota as i64;
        choices[j] = to;
        *used = (*used as i64 + dq) as u64;
        s = (s as i64 - dq) as usize;
    }
    debug_assert!(*used <= instance.capacity);
    true
}

/// Repack rounds until a fixed point (or the round cap). Skipped for
/// large instances, where single-item greedy moves already land within a
/// vanishing relative gap of the optimum.
fn exchange_polish(instance: &McKpInstance, choices: &mut [usize], used: &mut u64) {
    let total_candidates: usize = instance.items.iter().map(|i| i.candidates.len()).sum();
    if total_candidates > POLISH_CANDIDATE_LIMIT {
        return;
    }
    for _ in 0..POLISH_MAX_ROUNDS {
        if !window_repack(instance, choices, used) {
            return;
        }
    }
}

fn finish_plan(instance: &McKpInstance, lambda: f64) -> AllocationPlan {
    let mut choices = decide_all(instance, lambda);
    let mut used = used_capacity(instance, &choices);
    let repaired = repair_overshoot(instance, &mut choices, &mut used);
    greedy_upgrade(instance, &mut choices, &mut used);
    exchange_polish(instance, &mut choices, &mut used);
    debug_assert!(used <= instance.capacity);
    AllocationPlan {
        objective: objective(instance, &choices),
        used_capacity: used,
        dual_price: lambda,
        repair_applied: repaired,
        choices,
    }
}

/// Solve the allocation problem: bisect the dual price, decide every item,
/// then repair any discrete overshoot and spend leftover slack greedily.
pub fn solve(instance: &McKpInstance, tolerance: f64) -> Result<AllocationPlan> {
    instance.validate()?;
    let min_usage = instance.min_usage();
    if min_usage > instance.capacity {
        return Err(AcqError::Infeasible {
            min_usage,
            capacity: instance.capacity,
        });
    }
    let lambda = bisect_lambda(instance, tolerance, 200)?;
    Ok(finish_plan(instance, lambda))
}

/// Estimate the dual price from a uniform item sample with proportionally
/// scaled capacity. With a fraction of 1 this is exactly `bisect_lambda`.
pub fn estimate_lambda_by_sampling(
    instance: &McKpInstance,
    sample_fraction: f64,
    tolerance: f64,
    seed: u64,
) -> Result<f64> {
    if !(sample_fraction > 0.0 && sample_fraction <= 1.0) {
        return Err(AcqError::InvalidArgument(
            "sample fraction must lie in (0, 1]".into(),
        ));
    }
    let n = instance.items.len();
    let m = (n as f64 * sample_fraction).round() as usize;
    if m == 0 {
        return Err(AcqError::EmptyInput("sampled items"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..m {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    let sampled = McKpInstance {
        items: idx[..m]
            .iter()
            .map(|&i| instance.items[i].clone())
            .collect(),
        capacity: (instance.capacity as f64 * sample_fraction).round() as u64,
    };
    bisect_lambda(&sampled, tolerance, 200)
}

/// Large-instance solve: estimate the dual price on a sample, then apply
/// it to every item with the usual repair and upgrade passes.
pub fn solve_sampled(
    instance: &McKpInstance,
    sample_fraction: f64,
    tolerance: f64,
    seed: u64,
) -> Result<AllocationPlan> {
    instance.validate()?;
    let min_usage = instance.min_usage();
    if min_usage > instance.capacity {
        return Err(AcqError::Infeasible {
            min_usage,
            capacity: instance.capacity,
        });
    }
    let lambda = estimate_lambda_by_sampling(instance, sample_fraction, tolerance, seed)?;
    Ok(finish_plan(instance, lambda))
}

// ---------------------------------------------------------------------
// Text formats: instance rows under a capacity header, and plan rows with
// a trailing summary line.
// ---------------------------------------------------------------------

impl McKpInstance {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("acq-instance v1 capacity {}\n", self.capacity));
        for item in &self.items {
            for c in &item.candidates {
                out.push_str(&format!(
                    "{} {} {} {}\n",
                    item.account_id, item.photo_id, c.quota, c.reward
                ));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<McKpInstance> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(AcqError::EmptyInput("instance text"))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4
            || parts[0] != "acq-instance"
            || parts[1] != "v1"
            || parts[2] != "capacity"
        {
            return Err(AcqError::Parse {
                line: 1,
                message: "expected header `acq-instance v1 capacity <n>`".into(),
            });
        }
        let capacity: u64 = parts[3].parse().map_err(|_| AcqError::Parse {
            line: 1,
            message: "bad capacity".into(),
        })?;
        let mut items: Vec<Item> = Vec::new();
        let mut seen: std::collections::HashSet<(u64, u64)> = std::collections::HashSet::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let p: Vec<&str> = line.split_whitespace().collect();
            if p.len() != 4 {
                return Err(AcqError::Parse {
                    line: i + 1,
                    message: "expected `account photo quota reward`".into(),
                });
            }
            let parse_err = |message: &str| AcqError::Parse {
                line: i + 1,
                message: message.into(),
            };
            let account_id: u64 = p[0].parse().map_err(|_| parse_err("bad account id"))?;
            let photo_id: u64 = p[1].parse().map_err(|_| parse_err("bad photo id"))?;
            let quota: u32 = p[2].parse().map_err(|_| parse_err("bad quota"))?;
            let reward: f64 = p[3].parse().map_err(|_| parse_err("bad reward"))?;
            let key = (account_id, photo_id);
            let extends_last =
                matches!(items.last(), Some(last) if (last.account_id, last.photo_id) == key);
            if extends_last {
                items
                    .last_mut()
                    .unwrap()
                    .candidates
                    .push(Candidate { quota, reward });
            } else {
                if !seen.insert(key) {
                    return Err(AcqError::Parse {
                        line: i + 1,
                        message: format!(
                            "candidates for item ({account_id}, {photo_id}) are not contiguous"
                        ),
                    });
                }
                items.push(Item {
                    account_id,
                    photo_id,
                    candidates: vec![Candidate { quota, reward }],
                });
            }
        }
        let instance = McKpInstance { items, capacity };
        instance.validate()?;
        Ok(instance)
    }
}

impl AllocationPlan {
    /// Render the plan against its instance: one row per item with the
    /// chosen quota, then a summary line.
    pub fn to_text(&self, instance: &McKpInstance) -> Result<String> {
        if self.choices.len() != instance.items.len() {
            return Err(AcqError::DimensionMismatch {
                what: "plan choices vs instance items",
                expected: instance.items.len(),
                got: self.choices.len(),
            });
        }
        let mut out = String::new();
        out.push_str("acq-plan v1\n");
        for (item, &k) in instance.items.iter().zip(&self.choices) {
            out.push_str(&format!(
                "{} {} {}\n",
                item.account_id, item.photo_id, item.candidates[k].quota
            ));
        }
        out.push_str(&format!(
            "summary lambda {} objective {} used_capacity {} repair_applied {}\n",
            self.dual_price, self.objective, self.used_capacity, self.repair_applied
        ));
        Ok(out)
    }
}

/// Parsed form of a plan file: quota rows plus the summary fields.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanFile {
    pub rows: Vec<(u64, u64, u32)>,
    pub dual_price: f64,
    pub objective: f64,
    pub used_capacity: u64,
    pub repair_applied: bool,
}

impl PlanFile {
    pub fn from_text(text: &str) -> Result<PlanFile> {
        let mut rows = Vec::new();
        let mut summary: Option<(f64, f64, u64, bool)> = None;
        for (i, line) in text.lines().enumerate() {
            let parse_err = |message: String| AcqError::Parse {
                line: i + 1,
                message,
            };
            if i == 0 {
                if line.trim() != "acq-plan v1" {
                    return Err(parse_err("expected header `acq-plan v1`".into()));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let p: Vec<&str> = line.split_whitespace().collect();
            if p[0] == "summary" {
                if p.len() != 9
                    || p[1] != "lambda"
                    || p[3] != "objective"
                    || p[5] != "used_capacity"
                    || p[7] != "repair_applied"
                {
                    return Err(parse_err("malformed summary line".into()));
                }
                let lambda: f64 = p[2].parse().map_err(|_| parse_err("bad lambda".into()))?;
                let obj: f64 = p[4]
                    .parse()
                    .map_err(|_| parse_err("bad objective".into()))?;
                let used: u64 = p[6].parse().map_err(|_| parse_err("bad capacity".into()))?;
                let rep: bool = p[8].parse().map_err(|_| parse_err("bad flag".into()))?;
                summary = Some((lambda, obj, used, rep));
            } else {
                if p.len() != 3 {
                    return Err(parse_err("expected `account photo quota`".into()));
                }
                let a: u64 = p[0]
                    .parse()
                    .map_err(|_| parse_err("bad account id".into()))?;
                let ph: u64 = p[1].parse().map_err(|_| parse_err("bad photo id".into()))?;
                let q: u32 = p[2].parse().map_err(|_| parse_err("bad quota".into()))?;
                rows.push((a, ph, q));
            }
        }
        let (dual_price, objective, used_capacity, repair_applied) =
            summary.ok_or(AcqError::EmptyInput("plan summary line"))?;
        Ok(PlanFile {
            rows,
            dual_price,
            objective,
            used_capacity,
            repair_applied,
        })
    }
}

/// Random instance generator shared by tests and benches.
pub fn random_instance(
    n_items: usize,
    max_candidates: usize,
    capacity_fraction: f64,
    rng: &mut ChaCha8Rng,
) -> McKpInstance {
    let quota_pool: Vec<u32> = (1..=MAX_QUOTA).collect();
    let mut items = Vec::with_capacity(n_items);
    for i in 0..n_items {
        let k = rng.random_range(1..=max_candidates.max(1));
        let mut quotas: Vec<u32> = quota_pool.choose_multiple(rng, k).copied().collect();
        quotas.sort_unstable();
        let candidates = quotas
            .into_iter()
            .map(|quota| Candidate {
                quota,
                reward: rng.random_range(0.0..10.0),
            })
            .collect();
        items.push(Item {
            account_id: (i / 10) as u64,
            photo_id: i as u64,
            candidates,
        });
    }
    let instance = McKpInstance { items, capacity: 0 };
    let max = instance.max_usage();
    let min = instance.min_usage();
    let span = (max - min) as f64;
    McKpInstance {
        capacity: min + (span * capacity_fraction) as u64,
        ..instance
    }
}
