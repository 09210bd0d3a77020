#![allow(dead_code)]

use mewm_core::cohort::{synthesize_scan, CohortConfig};
use mewm_core::segmenter::SegmenterConfig;
use mewm_core::survival::SurvivalRecord;
use mewm_core::{Mask3, Volume3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Liver-with-tumor scan on a `dims` grid with tumor radius in `radius`.
pub fn scan(seed: u64, dims: [usize; 3], radius: [f64; 2]) -> (Volume3, Mask3) {
    let cfg = CohortConfig {
        dims,
        tumor_radius: radius,
        segmenter: SegmenterConfig {
            min_component: 1,
            ..Default::default()
        },
        ..Default::default()
    };
    synthesize_scan(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).expect("scan")
}

pub fn recs(times: &[(f64, bool)]) -> Vec<SurvivalRecord> {
    times
        .iter()
        .map(|&(t, e)| SurvivalRecord::new(t, e, vec![]))
        .collect()
}

/// Product-limit estimate at `t` by direct counting over the raw records.
pub fn km_reference(records: &[SurvivalRecord], t: f64) -> f64 {
    let mut times: Vec<f64> = records
        .iter()
        .filter(|r| r.event && r.time <= t)
        .map(|r| r.time)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
        .iter()
        .map(|&s| {
            let at_risk = records.iter().filter(|r| r.time >= s).count() as f64;
            let deaths = records.iter().filter(|r| r.event && r.time == s).count() as f64;
            1.0 - deaths / at_risk
        })
        .product()
}

/// Cumulative hazard at `t` by direct counting over the raw records.
pub fn na_reference(records: &[SurvivalRecord], t: f64) -> f64 {
    let mut times: Vec<f64> = records
        .iter()
        .filter(|r| r.event && r.time <= t)
        .map(|r| r.time)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
        .iter()
        .map(|&s| {
            let at_risk = records.iter().filter(|r| r.time >= s).count() as f64;
            let deaths = records.iter().filter(|r| r.event && r.time == s).count() as f64;
            deaths / at_risk
        })
        .sum()
}
