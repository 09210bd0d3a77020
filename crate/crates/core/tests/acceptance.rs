//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use mewm_core::actions::AttenuationLevel;
use mewm_core::actions::{check_rules, ActionBase, ActionKind, RuleScope, Vocabulary};
use mewm_core::cohort::{benchmark, generate_cohort, set_metrics_names, CohortConfig, Planner};
use mewm_core::dynamics::{
    attenuate, contrastive_loss_from_similarities, AttenuationParams, ContrastiveMode,
    EfficacyTable,
};
use mewm_core::explorer::{exhaustive_oracle, explore, ExplorationConfig, WorldModel};
use mewm_core::segmenter::{segment_post, SegmenterConfig};
use mewm_core::survival::{
    concordance_index, extract_features, fit_cox, kaplan_meier, logrank, nelson_aalen, risk_mse,
    synthetic_cox_cohort, CoxModel, CoxObjective, CoxOptions, SurvivalRecord, FEATURE_NAMES,
    VOLUME_CHANGE_RATIO,
};
use mewm_core::Error;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        ok,
        detail: detail.into(),
    }
}

fn volume_cox() -> CoxModel {
    let mut beta = vec![0.0; FEATURE_NAMES.len()];
    beta[VOLUME_CHANGE_RATIO] = 1.0;
    CoxModel::planted(beta)
}

fn random_table(rng: &mut ChaCha8Rng, vocab: &Vocabulary, noise: f64) -> EfficacyTable {
    let names: Vec<String> = vocab
        .drugs
        .iter()
        .chain(&vocab.embolics)
        .map(|e| e.name.clone())
        .collect();
    EfficacyTable::with_weights(names.into_iter().map(|n| (n, rng.random_range(0.2..1.2))))
        .with_noise(noise)
}

fn explorer_matches_oracle() -> Outcome {
    let vocab = Vocabulary::default();
    let start = Instant::now();
    let (mut compared, mut matched, mut dead_ends) = (0, 0, 0);
    let mut first_miss = String::new();
    let mut seed = 0u64;
    while compared < 100 {
        seed += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(1..=3);
        let e = rng.random_range(1..=2);
        let drugs: Vec<_> = vocab
            .units(ActionKind::Drug)
            .choose_multiple(&mut rng, d)
            .cloned()
            .collect();
        let embolics: Vec<_> = vocab
            .units(ActionKind::Embolic)
            .choose_multiple(&mut rng, e)
            .cloned()
            .collect();
        let base = ActionBase::new(drugs, embolics, vocab.rules.clone()).unwrap();
        let cfg = ExplorationConfig {
            beams: 1,
            drug_horizon: rng.random_range(1..=2usize).min(d),
            embolic_horizon: 1,
            replicas: 1,
            seed,
        };
        let world = WorldModel::new(random_table(&mut rng, &vocab, 0.0), volume_cox());
        let (pre, mask) = common::scan(seed, [44, 44, 40], [9.0, 11.0]);
        let plan = match explore(&pre, &mask, "", &base, &world, &cfg) {
            Ok(p) => p,
            Err(Error::DeadEnd { .. }) => {
                dead_ends += 1;
                continue;
            }
            Err(err) => return outcome(false, format!("instance {seed}: {err}")),
        };
        let oracle = exhaustive_oracle(&pre, &mask, &base, &world, &cfg).unwrap();
        compared += 1;
        if plan.combo == oracle.combo && (plan.score - oracle.score).abs() <= 1e-9 {
            matched += 1;
        } else if first_miss.is_empty() {
            first_miss = format!(
                "; first miss seed {seed}: explorer {:?} {} vs oracle {:?} {}",
                plan.combo, plan.score, oracle.combo, oracle.score
            );
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        matched == 100 && secs < 60.0,
        format!("{matched}/100 equal, {dead_ends} dead-end draws skipped, {secs:.1}s{first_miss}"),
    )
}

fn rule_safety() -> Outcome {
    let vocab = Vocabulary::default();
    let base = ActionBase::from_vocabulary(&vocab);
    let scans: Vec<_> = (0..20)
        .map(|s| common::scan(1000 + s, [30, 30, 28], [5.0, 6.0]))
        .collect();
    let seg = SegmenterConfig {
        min_component: 20,
        ..Default::default()
    };
    let (mut bad, mut dead) = (0, 0);
    for run in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(run);
        let cfg = ExplorationConfig {
            beams: rng.random_range(1..=2),
            drug_horizon: rng.random_range(1..=3),
            embolic_horizon: rng.random_range(1..=2),
            replicas: 1,
            seed: run,
        };
        let world = WorldModel {
            efficacy: random_table(&mut rng, &vocab, 0.05),
            segmenter: seg,
            cox: volume_cox(),
        };
        let (pre, mask) = &scans[run as usize % scans.len()];
        match explore(pre, mask, "", &base, &world, &cfg) {
            Ok(plan) => {
                let combo = vocab.resolve(&plan.combo).unwrap();
                let platinum = combo.drugs().filter(|u| u.has_tag("platinum")).count();
                if platinum > 1
                    || combo.n_drugs() == 0
                    || combo.n_embolics() == 0
                    || !check_rules(&combo, &vocab.rules, RuleScope::Complete).is_empty()
                {
                    bad += 1;
                }
            }
            Err(Error::DeadEnd { .. }) => dead += 1,
            Err(e) => return outcome(false, format!("run {run}: {e}")),
        }
    }
    outcome(
        bad == 0 && dead == 0,
        format!("1000 runs, {bad} unsafe plans, {dead} dead ends"),
    )
}

fn cox_recovery() -> Outcome {
    let truth = [1.0, -0.5];
    let opts = CoxOptions::default();
    let (mut within, mut slow, mut worst_grad, mut worst_fd) = (0, 0, 0.0f64, 0.0f64);
    for seed in 0..20u64 {
        let recs = synthetic_cox_cohort(500, &truth, 0.2, seed).unwrap();
        let start = Instant::now();
        let model = fit_cox(&recs, &opts).unwrap();
        if start.elapsed() >= Duration::from_secs(10) {
            slow += 1;
        }
        if model
            .beta
            .iter()
            .zip(&truth)
            .all(|(b, t)| (b - t).abs() <= 0.15)
        {
            within += 1;
        }
        let obj = CoxObjective::new(&recs, &opts).unwrap();
        let g = obj.gradient(&model.beta);
        worst_grad = worst_grad.max(g.iter().fold(0.0, |m, v| m.max(v.abs())));
        for point in [model.beta.clone(), vec![0.0, 0.0], vec![0.4, 0.3]] {
            let an = obj.gradient(&point);
            for k in 0..point.len() {
                let h = 1e-5;
                let (mut up, mut dn) = (point.clone(), point.clone());
                up[k] += h;
                dn[k] -= h;
                let fd = (obj.value(&up) - obj.value(&dn)) / (2.0 * h);
                worst_fd = worst_fd.max((fd - an[k]).abs() / an[k].abs().max(1.0));
            }
        }
    }
    outcome(
        within >= 19 && slow == 0 && worst_grad < 1e-6 && worst_fd < 1e-4,
        format!("{within}/20 within 0.15, {slow} slow fits, max |grad| {worst_grad:.2e}, max fd rel err {worst_fd:.2e}"),
    )
}

fn estimator_oracles() -> Outcome {
    let mut notes = Vec::new();
    let s = kaplan_meier(&common::recs(&[(1.0, true), (2.0, true), (3.0, true)])).unwrap();
    let hand_km =
        s.values == vec![2.0 / 3.0, 2.0 / 3.0 * 0.5, 0.0] && s.knots == vec![1.0, 2.0, 3.0];
    let c = kaplan_meier(&common::recs(&[(1.0, true), (2.0, false), (3.0, true)])).unwrap();
    let hand_cens = c.knots == vec![1.0, 3.0] && c.values == vec![2.0 / 3.0, 0.0];
    let h = nelson_aalen(&common::recs(&[(1.0, true), (2.0, true), (3.0, true)])).unwrap();
    let hand_na = h.values == vec![1.0 / 3.0, 1.0 / 3.0 + 0.5, 1.0 / 3.0 + 0.5 + 1.0];
    if !(hand_km && hand_cens && hand_na) {
        notes.push("hand examples differ".to_string());
    }

    let (mut worst, mut ineq) = (0.0f64, 0);
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(5..80);
        let recs: Vec<SurvivalRecord> = (0..n)
            .map(|_| {
                // integer times force ties
                let t = rng.random_range(1..20) as f64 * 0.5;
                SurvivalRecord::new(t, rng.random_bool(0.7), vec![])
            })
            .collect();
        let km = kaplan_meier(&recs).unwrap();
        let na = nelson_aalen(&recs).unwrap();
        for &t in km.knots.iter().chain([0.25, 3.3, 7.75, 100.0].iter()) {
            worst = worst.max((km.eval(t) - common::km_reference(&recs, t)).abs());
            worst = worst.max((na.eval(t) - common::na_reference(&recs, t)).abs());
        }
        for &t in &km.knots {
            if (-na.eval(t)).exp() < km.eval(t) - 1e-15 {
                ineq += 1;
            }
        }
    }
    if worst > 1e-9 {
        notes.push(format!("reference gap {worst:.2e}"));
    }
    if ineq > 0 {
        notes.push(format!("{ineq} knots with exp(-H) < S"));
    }
    outcome(
        notes.is_empty(),
        format!("hand examples exact, 50 datasets max gap {worst:.2e}, {ineq} inequality breaks"),
    )
}

fn cindex_and_logrank() -> Outcome {
    let recs: Vec<_> = (1..=10)
        .map(|t| SurvivalRecord::new(t as f64, true, vec![]))
        .collect();
    let perfect: Vec<f64> = (1..=10).map(|t| -(t as f64)).collect();
    let reversed: Vec<f64> = (1..=10).map(|t| t as f64).collect();
    let c1 = concordance_index(&perfect, &recs).unwrap();
    let c0 = concordance_index(&reversed, &recs).unwrap();

    let mut significant = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut group = |rate: f64| -> Vec<SurvivalRecord> {
            (0..50)
                .map(|_| {
                    SurvivalRecord::new(-(1.0 - rng.random::<f64>()).ln() / rate, true, vec![])
                })
                .collect()
        };
        let a = group(1.0);
        let b = group(3.0);
        if logrank(&a, &b).unwrap().p_value < 0.01 {
            significant += 1;
        }
    }
    outcome(
        c1 == 1.0 && c0 == 0.0 && significant >= 95,
        format!("c-index {c1}/{c0}, hazard ratio 3: {significant}/100 trials p < 0.01"),
    )
}

fn heuristic_mse() -> Outcome {
    let truth = [1.0, -0.5];
    let mut wins = 0;
    let mut gaps = Vec::new();
    for seed in 0..20u64 {
        let train = synthetic_cox_cohort(900, &truth, 0.2, seed).unwrap();
        let test = synthetic_cox_cohort(100, &truth, 0.2, 10_000 + seed).unwrap();
        let model = fit_cox(&train, &CoxOptions::default()).unwrap();
        let risks: Vec<f64> = test
            .iter()
            .map(|r| model.risk_score(&r.covariates).unwrap())
            .collect();
        let fitted = risk_mse(&risks, &test).unwrap();
        let baseline = risk_mse(&vec![0.0; test.len()], &test).unwrap();
        if fitted < baseline {
            wins += 1;
        }
        gaps.push(baseline - fitted);
    }
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    outcome(
        wins >= 18,
        format!("fitted beats intercept-only in {wins}/20 seeds, mean MSE gap {mean_gap:.4}"),
    )
}

fn attenuation_monotonicity() -> Outcome {
    let seg = SegmenterConfig::default();
    let mut viable = [0.0f64; 4];
    let mut hyper = [0.0f64; 4];
    let n = 50;
    for seed in 0..n {
        let (pre, mask) = common::scan(5000 + seed, [48, 48, 44], [5.0, 13.0]);
        for (k, level) in AttenuationLevel::all().enumerate() {
            let params = AttenuationParams::for_level(level, 0.1, 0.2, 0.05);
            let state = attenuate(&pre, &mask, &params, seed).unwrap();
            viable[k] += state.mask.count(mewm_core::voxel::TUMOR) as f64 / n as f64;
            let post_mask = segment_post(&state.volume, &mask, &seg).unwrap();
            let f = extract_features(&pre, &mask, &state.volume, &post_mask).unwrap();
            hyper[k] += f.hyperdense_fraction_post / n as f64;
        }
    }
    let monotone = viable.windows(2).all(|w| w[1] <= w[0]);
    outcome(
        monotone && hyper[3] > hyper[0],
        format!(
            "mean viable voxels by level {viable:.1?}, hyperdense fraction l1 {:.4} l4 {:.4}",
            hyper[0], hyper[3]
        ),
    )
}

fn set_metric_exactness() -> Outcome {
    let universe = ["a", "b", "c", "d", "e"];
    let pick = |bits: u32| -> Vec<String> {
        universe
            .iter()
            .enumerate()
            .filter(|(i, _)| bits >> i & 1 == 1)
            .map(|(_, s)| s.to_string())
            .collect()
    };
    let (mut worst, mut identity, mut pairs) = (0.0f64, 0.0f64, 0);
    for p in 0u32..32 {
        for g in 1u32..32 {
            let m = set_metrics_names(&pick(p), &pick(g)).unwrap();
            let inter = (p & g).count_ones() as f64;
            let union = (p | g).count_ones() as f64;
            let prec = if p == 0 {
                0.0
            } else {
                inter / p.count_ones() as f64
            };
            let rec = inter / g.count_ones() as f64;
            let f1 = if inter == 0.0 {
                0.0
            } else {
                2.0 * inter / (p.count_ones() + g.count_ones()) as f64
            };
            let jac = inter / union;
            for (a, b) in [
                (m.precision, prec),
                (m.recall, rec),
                (m.f1, f1),
                (m.jaccard, jac),
            ] {
                worst = worst.max((a - b).abs());
            }
            identity = identity.max((m.jaccard - m.f1 / (2.0 - m.f1)).abs());
            pairs += 1;
        }
    }
    let empty_gold = set_metrics_names(&pick(1), &[]).is_err();
    outcome(
        worst <= 1e-12 && identity <= 1e-12 && empty_gold,
        format!("{pairs} pairs, max error {worst:.1e}, identity error {identity:.1e}, empty gold rejected {empty_gold}"),
    )
}

fn contrastive_numerics() -> Outcome {
    let loss = |sp: f64, sn: &[f64]| {
        contrastive_loss_from_similarities(sp, sn, 1.0, ContrastiveMode::Infonce).unwrap()
    };
    let l1 = loss(0.9, &[0.1, 0.2]);
    let want1 = -(0.9f64.exp() / (0.9f64.exp() + 0.1f64.exp() + 0.2f64.exp())).ln();
    let l2 = loss(0.4, &[0.4]);
    let literal =
        contrastive_loss_from_similarities(0.9, &[0.1], 1.0, ContrastiveMode::PaperLiteral);
    let literal_err = matches!(literal, Err(Error::NonPositiveDenominator(_)));
    let mut decreasing = true;
    let h = 1e-6;
    for k in 0..=40 {
        let s = -1.0 + k as f64 * 0.05;
        let fd = (loss(s + h, &[0.1, -0.3, 0.7]) - loss(s - h, &[0.1, -0.3, 0.7])) / (2.0 * h);
        decreasing &= fd < 0.0;
    }
    let ok =
        (l1 - want1).abs() <= 1e-6 && (l1 - 0.666).abs() < 5e-4 && (l2 - 2f64.ln()).abs() <= 1e-6;
    outcome(
        ok && literal_err && decreasing,
        format!("example 1 {l1:.6}, example 2 {l2:.6}, literal error {literal_err}, decreasing in positive {decreasing}"),
    )
}

fn end_to_end_benchmark() -> Outcome {
    let start = Instant::now();
    let cohort = generate_cohort(50, &CohortConfig::default(), 2024).unwrap();
    let gen_secs = start.elapsed().as_secs_f64();
    let cox = volume_cox();
    let dir = tempfile::tempdir().unwrap();
    let explorer = benchmark(
        &cohort,
        &Planner::Explorer(ExplorationConfig {
            beams: 1,
            drug_horizon: 2,
            embolic_horizon: 1,
            replicas: 1,
            seed: 0,
        }),
        &cox,
        Some(&dir.path().join("explorer.json")),
    )
    .unwrap();
    let random = benchmark(
        &cohort,
        &Planner::Random {
            drug_horizon: 2,
            embolic_horizon: 1,
            seed: 7,
        },
        &cox,
        None,
    )
    .unwrap();
    let secs = start.elapsed().as_secs_f64();
    let written =
        dir.path().join("explorer.json").exists() && dir.path().join("explorer.csv").exists();
    outcome(
        explorer.f1 >= 0.9 && explorer.f1 - random.f1 >= 0.2 && explorer.failures.is_empty() && written && secs < 600.0,
        format!(
            "explorer F1 {:.3} vs random {:.3}, c-index {:?}, cohort {gen_secs:.1}s, total {secs:.1}s",
            explorer.f1, random.f1, explorer.c_index
        ),
    )
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("explorer-oracle equivalence", explorer_matches_oracle),
        ("rule safety", rule_safety),
        ("cox recovery", cox_recovery),
        ("estimator oracles", estimator_oracles),
        ("c-index and log-rank", cindex_and_logrank),
        ("heuristic mse", heuristic_mse),
        ("attenuation monotonicity", attenuation_monotonicity),
        ("set-metric exactness", set_metric_exactness),
        ("contrastive-loss numerics", contrastive_numerics),
        ("end-to-end benchmark", end_to_end_benchmark),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        let tag = if result.ok { "PASS" } else { "FAIL" };
        println!(
            "{tag} {name}: {} [{:.1}s]",
            result.detail,
            start.elapsed().as_secs_f64()
        );
        failed += !result.ok as usize;
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
