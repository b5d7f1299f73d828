//! The seven pipeline subcommands. Each reads its inputs from the paths in
//! the config, writes its artifacts, and prints one `key=value` summary
//! line per result so runs are easy to grep. Everything except `bench`
//! is deterministic given the config and seeds: re-running a command
//! reproduces its artifact byte for byte.

use std::path::Path;
use std::time::Instant;

use acq_core::allocator::{
    assemble_reward, estimate_lambda_by_sampling, random_instance, solve, solve_sampled,
    ucb_explore_score, AllocationPlan, Candidate, Item, McKpInstance, RewardSpec,
};
use acq_core::datagen::{
    curves_to_string, dataset_from_str, dataset_to_string, generate_dataset,
    instance_with_fraction, LatentCurve,
};
use acq_core::learning::{evaluate_net, train, MetricsReport};
use acq_core::predictor::{CostRecord, CreativeBinning, NetConfig, PropertyHeadNet};
use acq_core::tree::UnbalancedCostTree;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::CliError;

/// Stream-separation constants for seeds derived from `train.seed`, so the
/// holdout shuffle and the weight init never share an RNG stream.
const SPLIT_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;

fn derived_seed(base: u64, stream: u64) -> u64 {
    base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

// ---------------------------------------------------------------------
// Shared I/O helpers.
// ---------------------------------------------------------------------

fn read_artifact(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_artifact(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn load_dataset(cfg: &PipelineConfig) -> Result<Vec<CostRecord>, CliError> {
    let text = read_artifact(&cfg.paths.dataset)?;
    let (records, _seed) = dataset_from_str(&text)?;
    if records.is_empty() {
        return Err(CliError::Data(format!(
            "{}: dataset has no rows",
            cfg.paths.dataset.display()
        )));
    }
    Ok(records)
}

fn load_tree(cfg: &PipelineConfig) -> Result<UnbalancedCostTree, CliError> {
    let text = read_artifact(&cfg.paths.tree)?;
    Ok(UnbalancedCostTree::from_text(&text)?)
}

fn load_model(
    cfg: &PipelineConfig,
    tree: &UnbalancedCostTree,
) -> Result<PropertyHeadNet, CliError> {
    let text = read_artifact(&cfg.paths.model)?;
    Ok(PropertyHeadNet::load_for_tree(&text, tree)?)
}

// ---------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------

pub fn cmd_synth(cfg: &PipelineConfig) -> Result<(), CliError> {
    let synth = cfg.synth.to_synth_config();
    let (records, curves) = generate_dataset(&synth)?;
    let zero_fraction =
        records.iter().filter(|r| r.cost == 0.0).count() as f64 / records.len() as f64;
    write_artifact(&cfg.paths.dataset, &dataset_to_string(&records, synth.seed))?;
    write_artifact(&cfg.paths.curves, &curves_to_string(&curves))?;
    println!(
        "synth rows={} zero_fraction={:.6} seed={} dataset={} curves={}",
        records.len(),
        zero_fraction,
        synth.seed,
        cfg.paths.dataset.display(),
        cfg.paths.curves.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------
// build-tree
// ---------------------------------------------------------------------

pub fn cmd_build_tree(cfg: &PipelineConfig) -> Result<(), CliError> {
    let records = load_dataset(cfg)?;
    let costs: Vec<f64> = records.iter().map(|r| r.cost).collect();
    let tree = UnbalancedCostTree::build(&costs, cfg.tree.positive_leaves)?;
    write_artifact(&cfg.paths.tree, &tree.to_text())?;
    println!(
        "build-tree rows={} leaves={} classifiers={} checksum={} tree={}",
        costs.len(),
        tree.leaf_count(),
        tree.classifier_count(),
        tree.checksum(),
        cfg.paths.tree.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------
// train
// ---------------------------------------------------------------------

#[derive(Serialize)]
struct TrainReportFile<'a> {
    n_train: usize,
    n_holdout: usize,
    epoch_losses: &'a [f64],
    validation: Option<&'a MetricsReport>,
}

pub fn cmd_train(cfg: &PipelineConfig) -> Result<(), CliError> {
    let records = load_dataset(cfg)?;
    let tree = load_tree(cfg)?;

    let mut idx: Vec<usize> = (0..records.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(cfg.train.seed, SPLIT_STREAM));
    idx.shuffle(&mut rng);
    let n_holdout = (records.len() as f64 * cfg.train.holdout_fraction).round() as usize;
    let holdout: Vec<CostRecord> = idx[..n_holdout]
        .iter()
        .map(|&i| records[i].clone())
        .collect();
    let train_rows: Vec<CostRecord> = idx[n_holdout..]
        .iter()
        .map(|&i| records[i].clone())
        .collect();
    if train_rows.is_empty() {
        return Err(CliError::Data(
            "no training rows after holdout split".into(),
        ));
    }

    let bins = CreativeBinning::new(&cfg.binning.boundaries)?;
    let net_cfg = NetConfig {
        sparse_slots: train_rows[0].sparse_features.len(),
        embedding_dim: cfg.model.embedding_dim,
        hash_buckets: cfg.model.hash_buckets,
        dense_dim: train_rows[0].dense_features.len(),
        hidden: cfg.model.hidden.clone(),
        classifier_count: tree.classifier_count(),
        variant: cfg.model.parse_variant()?,
        lipschitz_weight: cfg.loss.lipschitz_weight,
    };
    let mut net = PropertyHeadNet::new(&net_cfg, bins, derived_seed(cfg.train.seed, INIT_STREAM));

    let train_cfg = cfg.train.to_train_config();
    let spec = cfg.loss.to_loss_spec();
    let report = train(&mut net, &tree, &train_rows, &train_cfg, &spec)?;
    let metrics = if holdout.is_empty() {
        None
    } else {
        Some(evaluate_net(
            &net,
            &tree,
            &holdout,
            cfg.train.eval_batch_size,
        )?)
    };

    write_artifact(&cfg.paths.model, &net.to_text(&tree.checksum()))?;
    let report_file = TrainReportFile {
        n_train: train_rows.len(),
        n_holdout: holdout.len(),
        epoch_losses: &report.epoch_losses,
        validation: metrics.as_ref(),
    };
    write_artifact(
        &cfg.paths.train_report,
        &serde_json::to_string_pretty(&report_file).expect("report serialize"),
    )?;

    let fmt = |v: Option<f64>| match v {
        Some(x) => format!("{x:.6}"),
        None => "null".to_string(),
    };
    println!(
        "train rows={} holdout={} epochs={} final_loss={:.6} auc={} mse={} model={}",
        train_rows.len(),
        holdout.len(),
        report.epoch_losses.len(),
        report.epoch_losses.last().copied().unwrap_or(f64::NAN),
        fmt(metrics.as_ref().and_then(|m| m.auc)),
        fmt(metrics.as_ref().and_then(|m| m.mse)),
        cfg.paths.model.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------

/// One allocation item per record: the model's predicted cost at every
/// candidate quota, floored at zero exactly like
/// [`PropertyHeadNet::predict_pvalue`], but with a single trunk pass per
/// record instead of one per quota.
fn predicted_items(net: &PropertyHeadNet, records: &[CostRecord]) -> Result<Vec<Item>, CliError> {
    let quotas = net.bins.candidate_quotas();
    let mut items = Vec::with_capacity(records.len());
    for rec in records {
        let out = net.forward(rec)?;
        let mut candidates = Vec::with_capacity(quotas.len());
        for &q in &quotas {
            let bin = net.bins.bin_index(q)?;
            candidates.push(Candidate {
                quota: q,
                reward: out.composed_costs[bin].max(0.0),
            });
        }
        items.push(Item {
            account_id: rec.account_id,
            photo_id: rec.photo_id,
            candidates,
        });
    }
    Ok(items)
}

fn pvalues_to_text(items: &[Item]) -> String {
    let n_rows: usize = items.iter().map(|i| i.candidates.len()).sum();
    let mut out = String::new();
    out.push_str(&format!("acq-pvalues v1 rows {n_rows}\n"));
    for item in items {
        for c in &item.candidates {
            out.push_str(&format!(
                "{} {} {} {}\n",
                item.account_id, item.photo_id, c.quota, c.reward
            ));
        }
    }
    out
}

fn pvalues_from_text(text: &str) -> Result<Vec<Item>, CliError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::Data("pvalue file is empty".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "acq-pvalues" || fields[1] != "v1" || fields[2] != "rows" {
        return Err(CliError::Data(format!("bad pvalue header {header:?}")));
    }
    let expected: usize = fields[3]
        .parse()
        .map_err(|_| CliError::Data(format!("bad pvalue row count {:?}", fields[3])))?;
    let mut items: Vec<Item> = Vec::new();
    let mut n_rows = 0usize;
    for (lineno, line) in lines {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(CliError::Data(format!(
                "pvalue line {}: expected 4 fields, got {}",
                lineno + 1,
                parts.len()
            )));
        }
        let parse_err =
            |what: &str| CliError::Data(format!("pvalue line {}: bad {what}", lineno + 1));
        let account_id: u64 = parts[0].parse().map_err(|_| parse_err("account id"))?;
        let photo_id: u64 = parts[1].parse().map_err(|_| parse_err("photo id"))?;
        let quota: u32 = parts[2].parse().map_err(|_| parse_err("quota"))?;
        let pvalue: f64 = parts[3].parse().map_err(|_| parse_err("pvalue"))?;
        n_rows += 1;
        match items.last_mut() {
            Some(last) if last.account_id == account_id && last.photo_id == photo_id => {
                last.candidates.push(Candidate {
                    quota,
                    reward: pvalue,
                });
            }
            _ => items.push(Item {
                account_id,
                photo_id,
                candidates: vec![Candidate {
                    quota,
                    reward: pvalue,
                }],
            }),
        }
    }
    if n_rows != expected {
        return Err(CliError::Data(format!(
            "pvalue file declares {expected} rows but has {n_rows}"
        )));
    }
    if items.is_empty() {
        return Err(CliError::Data("pvalue file has no rows".into()));
    }
    Ok(items)
}

pub fn cmd_predict(cfg: &PipelineConfig) -> Result<(), CliError> {
    let records = load_dataset(cfg)?;
    let tree = load_tree(cfg)?;
    let net = load_model(cfg, &tree)?;
    let items = predicted_items(&net, &records)?;
    write_artifact(&cfg.paths.pvalues, &pvalues_to_text(&items))?;
    println!(
        "predict items={} quotas={} pvalues={}",
        items.len(),
        net.bins.candidate_quotas().len(),
        cfg.paths.pvalues.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------
// allocate
// ---------------------------------------------------------------------

/// Turn predicted values into allocation rewards. With no play history all
/// items share one exploration score, so a non-zero weight shifts every
/// reward equally and the chosen plan is unchanged; the hook exists so a
/// live system can feed real play counts through the same path.
fn reward_items(mut items: Vec<Item>, spec: &RewardSpec) -> Vec<Item> {
    let n = items.len() as f64;
    let explore = ucb_explore_score(0.0, n, 1.0);
    for item in &mut items {
        for c in &mut item.candidates {
            c.reward = assemble_reward(c.reward, explore, spec);
        }
    }
    items
}

fn solve_instance(
    cfg: &PipelineConfig,
    instance: &McKpInstance,
) -> Result<AllocationPlan, CliError> {
    let plan = if cfg.allocator.sample_fraction < 1.0 {
        solve_sampled(
            instance,
            cfg.allocator.sample_fraction,
            cfg.allocator.tolerance,
            cfg.allocator.sample_seed,
        )?
    } else {
        solve(instance, cfg.allocator.tolerance)?
    };
    Ok(plan)
}

pub fn cmd_allocate(cfg: &PipelineConfig) -> Result<(), CliError> {
    let spec = RewardSpec {
        explore_weight: cfg.reward.explore_weight,
    };
    spec.validate()?;
    let items = pvalues_from_text(&read_artifact(&cfg.paths.pvalues)?)?;
    let items = reward_items(items, &spec);
    let instance = instance_with_fraction(items, cfg.allocator.capacity_fraction)?;
    let plan = solve_instance(cfg, &instance)?;
    write_artifact(&cfg.paths.instance, &instance.to_text())?;
    write_artifact(&cfg.paths.plan, &plan.to_text(&instance)?)?;
    println!(
        "allocate items={} capacity={} used={} objective={:.6} dual_price={:.6} repair={} plan={}",
        instance.items.len(),
        instance.capacity,
        plan.used_capacity,
        plan.objective,
        plan.dual_price,
        plan.repair_applied,
        cfg.paths.plan.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------

#[derive(Serialize)]
struct DayRow {
    day: usize,
    items: usize,
    capacity: u64,
    acq_expected_cost: f64,
    rule_expected_cost: f64,
    lift_pct: f64,
    acq_creatives: u64,
    rule_quota: u32,
    rule_creatives: u64,
    creative_diff_pct: f64,
}

#[derive(Serialize)]
struct EvaluateReportFile {
    days: Vec<DayRow>,
    mean_lift_pct: f64,
    max_abs_creative_diff_pct: f64,
}

/// Uniform quota whose total creative count comes closest to the plan's
/// usage without breaking the capacity, clamped to the valid quota range.
fn matched_rule_quota(n_items: u64, used: u64, capacity: u64) -> u32 {
    let avg = used as f64 / n_items as f64;
    let max_q = acq_core::allocator::MAX_QUOTA as u64;
    let lo = (avg.floor() as u64).clamp(1, max_q);
    let hi = (avg.ceil() as u64).clamp(1, max_q);
    let fits = |q: u64| n_items.saturating_mul(q) <= capacity;
    let diff = |q: u64| n_items.saturating_mul(q).abs_diff(used);
    if fits(hi) && (!fits(lo) || diff(hi) < diff(lo)) {
        hi as u32
    } else {
        lo as u32
    }
}

fn curve_total(curves: &[LatentCurve], quota_of: impl Fn(usize) -> u32) -> f64 {
    curves
        .iter()
        .enumerate()
        .map(|(i, c)| c.expected_value(quota_of(i)))
        .sum()
}

pub fn cmd_evaluate(cfg: &PipelineConfig) -> Result<(), CliError> {
    let tree = load_tree(cfg)?;
    let net = load_model(cfg, &tree)?;
    let spec = RewardSpec {
        explore_weight: cfg.reward.explore_weight,
    };
    spec.validate()?;

    let mut rows = Vec::with_capacity(cfg.evaluate.days);
    for day in 1..=cfg.evaluate.days {
        let mut synth = cfg.synth.to_synth_config();
        synth.seed = synth
            .seed
            .wrapping_add(cfg.evaluate.day_seed_stride.wrapping_mul(day as u64));
        let (records, curves) = generate_dataset(&synth)?;

        let items = reward_items(predicted_items(&net, &records)?, &spec);
        for (item, curve) in items.iter().zip(&curves) {
            if item.account_id != curve.account_id || item.photo_id != curve.photo_id {
                return Err(CliError::Data(
                    "generated records and curves disagree on item order".into(),
                ));
            }
        }
        let instance = instance_with_fraction(items, cfg.allocator.capacity_fraction)?;
        let plan = solve_instance(cfg, &instance)?;

        let acq_expected_cost = curve_total(&curves, |i| {
            instance.items[i].candidates[plan.choices[i]].quota
        });
        let n_items = instance.items.len() as u64;
        let rule_quota = matched_rule_quota(n_items, plan.used_capacity, instance.capacity);
        let rule_expected_cost = curve_total(&curves, |_| rule_quota);
        let rule_creatives = n_items * rule_quota as u64;

        let lift_pct = 100.0 * (acq_expected_cost - rule_expected_cost) / rule_expected_cost;
        let creative_diff_pct =
            100.0 * (plan.used_capacity as f64 - rule_creatives as f64) / rule_creatives as f64;
        println!(
            "evaluate day={} items={} acq_cost={:.3} rule_cost={:.3} lift_pct={:.3} \
             acq_creatives={} rule_quota={} rule_creatives={} creative_diff_pct={:.3}",
            day,
            n_items,
            acq_expected_cost,
            rule_expected_cost,
            lift_pct,
            plan.used_capacity,
            rule_quota,
            rule_creatives,
            creative_diff_pct
        );
        rows.push(DayRow {
            day,
            items: instance.items.len(),
            capacity: instance.capacity,
            acq_expected_cost,
            rule_expected_cost,
            lift_pct,
            acq_creatives: plan.used_capacity,
            rule_quota,
            rule_creatives,
            creative_diff_pct,
        });
    }

    let mean_lift_pct = rows.iter().map(|r| r.lift_pct).sum::<f64>() / rows.len() as f64;
    let max_abs_creative_diff_pct = rows
        .iter()
        .map(|r| r.creative_diff_pct.abs())
        .fold(0.0, f64::max);
    println!(
        "evaluate days={} mean_lift_pct={:.3} max_abs_creative_diff_pct={:.3} report={}",
        rows.len(),
        mean_lift_pct,
        max_abs_creative_diff_pct,
        cfg.paths.report.display()
    );
    let report = EvaluateReportFile {
        days: rows,
        mean_lift_pct,
        max_abs_creative_diff_pct,
    };
    write_artifact(
        &cfg.paths.report,
        &serde_json::to_string_pretty(&report).expect("report serialize"),
    )?;
    Ok(())
}

// ---------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------

/// One instance size's timings. `lambda_ms` is the dual-price search on
/// the fixed-size sample — the phase whose cost sampling decouples from
/// the instance size. `solve_ms` is the whole sampled solve including the
/// unavoidable linear pass that materializes one choice per item, and
/// `full_solve_ms` is the reference solve that bisects on every item.
#[derive(Serialize)]
struct BenchRow {
    items: usize,
    sample_fraction: f64,
    lambda_ms: f64,
    solve_ms: f64,
    full_solve_ms: f64,
    objective: f64,
    used: u64,
    capacity: u64,
}

#[derive(Serialize)]
struct SampledCheck {
    items: usize,
    fraction: f64,
    full_objective: f64,
    sampled_objective: f64,
    gap_pct: f64,
}

#[derive(Serialize)]
struct BenchReportFile {
    rows: Vec<BenchRow>,
    lambda_time_ratio_max_over_min: f64,
    solve_time_ratio_max_over_min: f64,
    sampled_check: SampledCheck,
}

pub fn cmd_bench(cfg: &PipelineConfig) -> Result<(), CliError> {
    let b = &cfg.bench;
    let mut rows = Vec::with_capacity(b.sizes.len());
    let mut check_instance: Option<McKpInstance> = None;
    for &n in &b.sizes {
        let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(b.seed, n as u64));
        let instance = random_instance(n, b.max_candidates, b.capacity_fraction, &mut rng);
        let fraction = (b.sample_target as f64 / n as f64).min(1.0);

        let start = Instant::now();
        let _lambda =
            estimate_lambda_by_sampling(&instance, fraction, cfg.allocator.tolerance, b.seed)?;
        let lambda_ms = start.elapsed().as_secs_f64() * 1e3;

        let start = Instant::now();
        let plan = solve_sampled(&instance, fraction, cfg.allocator.tolerance, b.seed)?;
        let solve_ms = start.elapsed().as_secs_f64() * 1e3;

        let start = Instant::now();
        let full = solve(&instance, cfg.allocator.tolerance)?;
        let full_solve_ms = start.elapsed().as_secs_f64() * 1e3;
        debug_assert!(plan.objective <= full.objective * (1.0 + 1e-9));

        println!(
            "bench items={} sample_fraction={:.4} lambda_ms={:.1} solve_ms={:.1} \
             full_solve_ms={:.1} objective={:.3} used={} capacity={}",
            n,
            fraction,
            lambda_ms,
            solve_ms,
            full_solve_ms,
            plan.objective,
            plan.used_capacity,
            instance.capacity
        );
        rows.push(BenchRow {
            items: n,
            sample_fraction: fraction,
            lambda_ms,
            solve_ms,
            full_solve_ms,
            objective: plan.objective,
            used: plan.used_capacity,
            capacity: instance.capacity,
        });
        if check_instance.is_none() {
            check_instance = Some(instance);
        }
    }

    // Accuracy of the sampled dual price on the smallest instance: the
    // full bisection is the reference.
    let instance = check_instance.expect("bench.sizes validated non-empty");
    let full = solve(&instance, cfg.allocator.tolerance)?;
    let sampled = solve_sampled(&instance, b.check_fraction, cfg.allocator.tolerance, b.seed)?;
    let gap_pct = 100.0 * (full.objective - sampled.objective).abs() / full.objective;
    let check = SampledCheck {
        items: instance.items.len(),
        fraction: b.check_fraction,
        full_objective: full.objective,
        sampled_objective: sampled.objective,
        gap_pct,
    };

    let ratio = |f: fn(&BenchRow) -> f64| {
        let min = rows.iter().map(f).fold(f64::INFINITY, f64::min);
        let max = rows.iter().map(f).fold(0.0, f64::max);
        max / min
    };
    let lambda_ratio = ratio(|r| r.lambda_ms);
    let solve_ratio = ratio(|r| r.solve_ms);
    println!(
        "bench lambda_time_ratio_max_over_min={:.3} solve_time_ratio_max_over_min={:.3} \
         sampled_gap_pct={:.4} report={}",
        lambda_ratio,
        solve_ratio,
        gap_pct,
        cfg.paths.bench_report.display()
    );
    let report = BenchReportFile {
        rows,
        lambda_time_ratio_max_over_min: lambda_ratio,
        solve_time_ratio_max_over_min: solve_ratio,
        sampled_check: check,
    };
    write_artifact(
        &cfg.paths.bench_report,
        &serde_json::to_string_pretty(&report).expect("report serialize"),
    )?;
    Ok(())
}
