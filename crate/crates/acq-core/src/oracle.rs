//! Ground-truth solvers for small allocation instances. Test-side only:
//! exhaustive enumeration, an exact dynamic program, and the dual optimum
//! by breakpoint enumeration.

use crate::allocator::{dual_value, McKpInstance};
use crate::error::{AcqError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMethod {
    Exhaustive,
    Dp,
    LpBreakpoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub objective: f64,
    pub choices: Vec<usize>,
    pub method: OracleMethod,
}

/// True integer optimum by full enumeration of candidate combinations.
pub fn exhaustive_mckp(instance: &McKpInstance) -> Result<OracleResult> {
    instance.validate()?;
    let mut combos: u64 = 1;
    for item in &instance.items {
        combos = combos.saturating_mul(item.candidates.len() as u64);
        if combos > 10_000_000 {
            return Err(AcqError::SizeGuard(format!(
                "exhaustive search over {combos}+ combinations"
            )));
        }
    }
    let n = instance.items.len();
    let mut idx = vec![0usize; n];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let mut used: u64 = 0;
        let mut reward = 0.0;
        for (item, &k) in instance.items.iter().zip(&idx) {
            used += item.candidates[k].quota as u64;
            reward += item.candidates[k].reward;
        }
        if used <= instance.capacity && best.as_ref().is_none_or(|(b, _)| reward > *b) {
            best = Some((reward, idx.clone()));
        }
        // Odometer increment.
        let mut pos = n;
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < instance.items[pos].candidates.len() {
                break;
            }
            idx[pos] = 0;
        }
        if idx.iter().all(|&k| k == 0) {
            break;
        }
    }
    match best {
        Some((objective, choices)) => Ok(OracleResult {
            objective,
            choices,
            method: OracleMethod::Exhaustive,
        }),
        None => Err(AcqError::Infeasible {
            min_usage: instance.min_usage(),
            capacity: instance.capacity,
        }),
    }
}

/// Exact optimum by a capacity-indexed dynamic program. Requires integer
/// capacity within the size guards.
pub fn dp_mckp_exact(instance: &McKpInstance) -> Result<OracleResult> {
    instance.validate()?;
    let n = instance.items.len();
    let cap = instance.capacity;
    if cap > 100_000 {
        return Err(AcqError::SizeGuard(format!(
            "dp capacity {cap} exceeds 100000"
        )));
    }
    if n > 1_000 {
        return Err(AcqError::SizeGuard(format!(
            "dp item count {n} exceeds 1000"
        )));
    }
    let cap = cap as usize;
    const UNSET: u8 = u8::MAX;
    // value[c]: best reward over processed items with total quota <= c.
    let mut value = vec![0.0f64; cap + 1];
    let mut next = vec![f64::NEG_INFINITY; cap + 1];
    // parent[i][c]: candidate chosen for item i at budget c, UNSET if the
    // state is unreachable.
    let mut parents: Vec<Vec<u8>> = Vec::with_capacity(n);
    for item in &instance.items {
        if item.candidates.len() >= UNSET as usize {
            return Err(AcqError::SizeGuard(
                "dp candidate index exceeds the parent table width".into(),
            ));
        }
        let mut parent = vec![UNSET; cap + 1];
        for c in 0..=cap {
            let mut best = f64::NEG_INFINITY;
            let mut best_k = UNSET;
            for (k, cand) in item.candidates.iter().enumerate() {
                let q = cand.quota as usize;
                if q > c {
                    break; // quotas ascend
                }
                let below = value[c - q];
                if below == f64::NEG_INFINITY {
                    continue;
                }
                let v = below + cand.reward;
                if v > best {
                    best = v;
                    best_k = k as u8;
                }
            }
            next[c] = best;
            parent[c] = best_k;
        }
        std::mem::swap(&mut value, &mut next);
        parents.push(parent);
    }
    if n == 0 {
        return Ok(OracleResult {
            objective: 0.0,
            choices: vec![],
            method: OracleMethod::Dp,
        });
    }
    if value[cap] == f64::NEG_INFINITY {
        return Err(AcqError::Infeasible {
            min_usage: instance.min_usage(),
            capacity: instance.capacity,
        });
    }
    let objective = value[cap];
    let mut choices = vec![0usize; n];
    let mut c = cap;
    for i in (0..n).rev() {
        let k = parents[i][c];
        debug_assert_ne!(k, UNSET, "walkback hit an unreachable state");
        choices[i] = k as usize;
        c -= instance.items[i].candidates[k as usize].quota as usize;
    }
    Ok(OracleResult {
        objective,
        choices,
        method: OracleMethod::Dp,
    })
}

/// Exact minimum of the Lagrangian dual over non-negative prices. The dual
/// is convex and piecewise linear with kinks only where some item is
/// indifferent between two candidates, so evaluating zero plus every
/// pairwise indifference price is exact.
pub fn lp_breakpoint_optimum(instance: &McKpInstance) -> Result<f64> {
    instance.validate()?;
    let pair_count: usize = instance
        .items
        .iter()
        .map(|i| i.candidates.len() * (i.candidates.len() - 1) / 2)
        .sum();
    if pair_count > 10_000 {
        return Err(AcqError::SizeGuard(format!(
            "breakpoint enumeration over {pair_count} candidate pairs"
        )));
    }
    let mut breakpoints = vec![0.0f64];
    for item in &instance.items {
        let cs = &item.candidates;
        for a in 0..cs.len() {
            for b in 0..a {
                // Quotas ascend strictly, so the denominator is nonzero.
                let lambda = (cs[a].reward - cs[b].reward) / ((cs[a].quota - cs[b].quota) as f64);
                if lambda > 0.0 {
                    breakpoints.push(lambda);
                }
            }
        }
    }
    breakpoints.sort_by(|x, y| x.partial_cmp(y).unwrap());
    breakpoints.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    let mut best = f64::INFINITY;
    for &l in &breakpoints {
        best = best.min(dual_value(instance, l));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::{random_instance, solve, Candidate, Item};
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn two_item_instance() -> McKpInstance {
        McKpInstance {
            items: vec![
                Item {
                    account_id: 1,
                    photo_id: 10,
                    candidates: vec![
                        Candidate {
                            quota: 1,
                            reward: 3.0,
                        },
                        Candidate {
                            quota: 5,
                            reward: 10.0,
                        },
                    ],
                },
                Item {
                    account_id: 2,
                    photo_id: 20,
                    candidates: vec![
                        Candidate {
                            quota: 1,
                            reward: 2.0,
                        },
                        Candidate {
                            quota: 5,
                            reward: 9.0,
                        },
                    ],
                },
            ],
            capacity: 6,
        }
    }

    #[test]
    fn exhaustive_two_item_example() {
        let r = exhaustive_mckp(&two_item_instance()).unwrap();
        assert_eq!(r.objective, 12.0);
        // First optimum in enumeration order: quotas (1, 5).
        assert_eq!(r.choices, vec![0, 1]);
        assert_eq!(r.method, OracleMethod::Exhaustive);
    }

    #[test]
    fn exhaustive_single_item_picks_best_feasible() {
        let inst = McKpInstance {
            items: vec![Item {
                account_id: 0,
                photo_id: 0,
                candidates: vec![
                    Candidate {
                        quota: 2,
                        reward: 1.0,
                    },
                    Candidate {
                        quota: 4,
                        reward: 9.0,
                    },
                    Candidate {
                        quota: 9,
                        reward: 20.0,
                    },
                ],
            }],
            capacity: 5,
        };
        let r = exhaustive_mckp(&inst).unwrap();
        assert_eq!(r.choices, vec![1]);
        assert_eq!(r.objective, 9.0);
    }

    #[test]
    fn dp_two_item_example() {
        let r = dp_mckp_exact(&two_item_instance()).unwrap();
        assert_eq!(r.objective, 12.0);
        let used: u64 = two_item_instance()
            .items
            .iter()
            .zip(&r.choices)
            .map(|(it, &k)| it.candidates[k].quota as u64)
            .sum();
        assert!(used <= 6);
    }

    #[test]
    fn dp_signals_infeasibility() {
        let mut inst = two_item_instance();
        inst.capacity = 1;
        assert!(matches!(
            dp_mckp_exact(&inst),
            Err(AcqError::Infeasible {
                min_usage: 2,
                capacity: 1
            })
        ));
    }

    #[test]
    fn oracles_agree_on_random_tiny_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut checked = 0;
        while checked < 500 {
            let inst = random_instance(rng.random_range(1..7), 4, 0.35, &mut rng);
            let e = exhaustive_mckp(&inst).unwrap();
            let d = dp_mckp_exact(&inst).unwrap();
            assert_abs_diff_eq!(e.objective, d.objective, epsilon = 1e-9);
            checked += 1;
        }
    }

    #[test]
    fn lp_breakpoint_examples() {
        let inst = two_item_instance();
        // No duality gap on this instance; the optimum sits at 1.75.
        assert_abs_diff_eq!(lp_breakpoint_optimum(&inst).unwrap(), 12.0, epsilon = 1e-9);
        // Slack capacity: the dual optimum is the unconstrained reward sum.
        let mut slack = inst.clone();
        slack.capacity = 100;
        assert_abs_diff_eq!(lp_breakpoint_optimum(&slack).unwrap(), 19.0, epsilon = 1e-9);
    }

    #[test]
    fn lp_dominates_integer_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..300 {
            let inst = random_instance(rng.random_range(1..7), 4, 0.4, &mut rng);
            let e = exhaustive_mckp(&inst).unwrap();
            let lp = lp_breakpoint_optimum(&inst).unwrap();
            assert!(
                lp >= e.objective - 1e-9,
                "dual optimum {lp} below integer optimum {}",
                e.objective
            );
        }
    }

    #[test]
    fn sandwich_bounds_hold_for_the_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..200 {
            let inst = random_instance(rng.random_range(2..12), 5, 0.3, &mut rng);
            let dp = dp_mckp_exact(&inst).unwrap();
            let lp = lp_breakpoint_optimum(&inst).unwrap();
            let plan = solve(&inst, 1e-9).unwrap();
            assert!(dp.objective <= lp + 1e-9);
            assert!(
                plan.objective >= 0.995 * dp.objective - 1e-9,
                "solver fell below 99.5% of the exact optimum: {} vs {}",
                plan.objective,
                dp.objective
            );
            assert!(plan.objective <= lp + 1e-9);
        }
    }

    #[test]
    fn size_guards_fire() {
        let inst = McKpInstance {
            items: (0..30)
                .map(|i| Item {
                    account_id: i,
                    photo_id: i,
                    candidates: (1..=5)
                        .map(|q| Candidate {
                            quota: q,
                            reward: q as f64,
                        })
                        .collect(),
                })
                .collect(),
            capacity: 10,
        };
        assert!(matches!(
            exhaustive_mckp(&inst),
            Err(AcqError::SizeGuard(_))
        ));
        let mut big = two_item_instance();
        big.capacity = 200_000;
        assert!(matches!(dp_mckp_exact(&big), Err(AcqError::SizeGuard(_))));
    }
}
