use mewm_core::actions::{check_rules, RuleScope};
use mewm_core::actions::{ActionBase, VocabEntry, Vocabulary};
use mewm_core::cohort::{
    benchmark, generate_cohort, load_cohort, planted_cox, save_cohort, CohortConfig, Planner,
};
use mewm_core::explorer::ExplorationConfig;
use mewm_core::segmenter::SegmenterConfig;
use mewm_core::Error;

fn small() -> CohortConfig {
    CohortConfig {
        dims: [36, 36, 32],
        tumor_radius: [5.0, 8.0],
        segmenter: SegmenterConfig {
            min_component: 1,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            r[k] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn generation_is_deterministic() {
    let a = generate_cohort(2, &small(), 17).unwrap();
    let b = generate_cohort(2, &small(), 17).unwrap();
    assert_eq!(a, b);
    assert_ne!(
        a.patients[0].pre,
        generate_cohort(2, &small(), 18).unwrap().patients[0].pre
    );
    assert!(matches!(
        generate_cohort(0, &small(), 1),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn gold_protocols_pass_the_rules() {
    let c = generate_cohort(6, &small(), 4).unwrap();
    let rules = &c.config.vocabulary.rules;
    for p in &c.patients {
        assert!(
            check_rules(&p.gold, rules, RuleScope::Complete).is_empty(),
            "{}",
            p.report
        );
        assert!(p.gold.n_drugs() <= 2 && p.gold.n_embolics() == 1);
    }
}

#[test]
fn survival_tracks_volume_change() {
    // default scan geometry; a narrower gold search keeps this quick
    let cfg = CohortConfig {
        hazard_k: 3.0,
        gold_search: ExplorationConfig {
            drug_horizon: 1,
            ..CohortConfig::default().gold_search
        },
        ..CohortConfig::default()
    };
    let c = generate_cohort(200, &cfg, 99).unwrap();
    let vcr: Vec<f64> = c
        .patients
        .iter()
        .map(|p| -p.gold_features.volume_change_ratio)
        .collect();
    let time: Vec<f64> = c.patients.iter().map(|p| p.survival.time).collect();
    let rho = spearman(&vcr, &time);
    assert!(rho > 0.3, "spearman {rho}");
    let censored = c.patients.iter().filter(|p| !p.survival.event).count() as f64 / 200.0;
    assert!((censored - 0.2).abs() < 0.1, "censored share {censored}");
}

#[test]
fn single_combo_vocabulary_fixes_gold() {
    let vocab = Vocabulary {
        drugs: vec![VocabEntry {
            name: "Epirubicin".into(),
            tags: vec!["anthracycline".into()],
        }],
        embolics: vec![VocabEntry {
            name: "Lipiodol".into(),
            tags: vec!["oil".into()],
        }],
        ..Vocabulary::default()
    };
    let c = generate_cohort(
        3,
        &CohortConfig {
            vocabulary: vocab,
            ..small()
        },
        2,
    )
    .unwrap();
    for p in &c.patients {
        assert_eq!(p.gold.names(), vec!["Epirubicin", "Lipiodol"]);
    }
}

#[test]
fn oracle_planner_scores_perfectly_and_random_does_not() {
    let c = generate_cohort(8, &small(), 21).unwrap();
    let oracle = benchmark(
        &c,
        &Planner::Oracle(small().gold_search),
        &planted_cox(),
        None,
    )
    .unwrap();
    assert_eq!(oracle.f1, 1.0);
    assert_eq!(oracle.jaccard, 1.0);
    assert!(oracle.failures.is_empty());
    let random = benchmark(
        &c,
        &Planner::Random {
            drug_horizon: 2,
            embolic_horizon: 1,
            seed: 3,
        },
        &planted_cox(),
        None,
    )
    .unwrap();
    assert!(random.f1 < oracle.f1);
    for r in random.rows.iter().chain(&oracle.rows) {
        assert!((r.jaccard - r.f1 / (2.0 - r.f1)).abs() < 1e-12);
    }
    assert_eq!(random.per_category.len(), 2);

    let empty = mewm_core::cohort::Cohort {
        patients: vec![],
        ..c
    };
    assert!(benchmark(
        &empty,
        &Planner::Oracle(small().gold_search),
        &planted_cox(),
        None
    )
    .is_err());
}

#[test]
fn reports_and_files_round_trip() {
    let c = generate_cohort(3, &small(), 8).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_cohort(dir.path(), &c).unwrap();
    let first = std::fs::read(dir.path().join("reports.csv")).unwrap();
    let back = load_cohort(dir.path()).unwrap();
    assert_eq!(back, c);

    let again = tempfile::tempdir().unwrap();
    save_cohort(again.path(), &generate_cohort(3, &small(), 8).unwrap()).unwrap();
    assert_eq!(
        std::fs::read(again.path().join("reports.csv")).unwrap(),
        first
    );
    assert_eq!(
        std::fs::read(again.path().join("survival.csv")).unwrap(),
        std::fs::read(dir.path().join("survival.csv")).unwrap()
    );

    let out = dir.path().join("metrics.json");
    let report = benchmark(
        &c,
        &Planner::Explorer(small().gold_search),
        &planted_cox(),
        Some(&out),
    )
    .unwrap();
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(json["planner"], report.planner);
    assert!(out.with_extension("csv").exists());
    assert!(ActionBase::from_vocabulary(&c.config.vocabulary)
        .validate()
        .is_ok());
}
