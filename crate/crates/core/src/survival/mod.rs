//! Survival heuristic: estimators, Cox regression, concordance, features
//! and risk scoring.

mod concordance;
mod cox;
mod estimators;
mod features;

pub use concordance::concordance_index;
pub use cox::{fit_cox, CoxModel, CoxObjective, CoxOptions, Standardization};
pub use estimators::{kaplan_meier, logrank, nelson_aalen, LogRankResult, StepFunction};
pub use features::{extract_features, FeatureVector, FEATURE_NAMES, VOLUME_CHANGE_RATIO};

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    /// Months, > 0.
    pub time: f64,
    /// true = death observed, false = censored.
    pub event: bool,
    pub covariates: Vec<f64>,
}

impl SurvivalRecord {
    pub fn new(time: f64, event: bool, covariates: Vec<f64>) -> Self {
        SurvivalRecord {
            time,
            event,
            covariates,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.time > 0.0 && self.time.is_finite()) {
            return Err(Error::invalid(format!(
                "survival time must be positive, got {}",
                self.time
            )));
        }
        if self.covariates.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("covariates must be finite"));
        }
        Ok(())
    }
}

/// Average ranks mapped to `[0, 1]` as `(rank - 1) / (n - 1)`; a single value
/// maps to 0.5.
pub fn rank_normalize(values: &[f64]) -> Result<Vec<f64>> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("cannot rank NaN"));
    }
    let n = values.len();
    if n == 1 {
        return Ok(vec![0.5]);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // ranks i+1..=j share their mean
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            out[k] = (avg - 1.0) / (n - 1) as f64;
        }
        i = j;
    }
    Ok(out)
}

/// Nelson-Aalen cumulative hazard at each subject's own time, rank-normalized.
pub fn true_risk(records: &[SurvivalRecord]) -> Result<Vec<f64>> {
    if !records.iter().any(|r| r.event) {
        return Err(Error::invalid("true risk needs at least one event"));
    }
    let h = nelson_aalen(records)?;
    rank_normalize(&records.iter().map(|r| h.eval(r.time)).collect::<Vec<_>>())
}

/// Mean squared error between rank-normalized predicted risk and the
/// rank-normalized true risk, with the true risk flipped onto the predicted
/// scale (`1 - true_risk`, larger = earlier failure).
pub fn risk_mse(risks: &[f64], records: &[SurvivalRecord]) -> Result<f64> {
    if risks.len() != records.len() || risks.is_empty() {
        return Err(Error::invalid(
            "risk and record counts must match and be non-zero",
        ));
    }
    let pred = rank_normalize(risks)?;
    let target = true_risk(records)?;
    Ok(pred
        .iter()
        .zip(&target)
        .map(|(p, t)| (p - (1.0 - t)).powi(2))
        .sum::<f64>()
        / risks.len() as f64)
}

/// Exponential survival with hazard `exp(beta . x)` on standard-normal
/// covariates, censored uniformly on `[0, tau]` with `tau` chosen so the
/// expected censored share is `censoring`.
pub fn synthetic_cox_cohort(
    n: usize,
    beta: &[f64],
    censoring: f64,
    seed: u64,
) -> Result<Vec<SurvivalRecord>> {
    if n == 0 || beta.is_empty() {
        return Err(Error::invalid("need n >= 1 and at least one coefficient"));
    }
    if !(0.0..1.0).contains(&censoring) {
        return Err(Error::invalid("censoring share must lie in [0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            beta.iter()
                .map(|_| StandardNormal.sample(&mut rng))
                .collect()
        })
        .collect();
    let rates: Vec<f64> = xs
        .iter()
        .map(|x| x.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>().exp())
        .collect();
    let times: Vec<f64> = rates
        .iter()
        .map(|&l| {
            let u: f64 = rng.random::<f64>();
            -(1.0 - u).ln() / l
        })
        .collect();
    let tau = censoring_horizon(&rates, censoring);
    Ok(xs
        .into_iter()
        .zip(times)
        .map(|(x, t)| {
            let c = if tau.is_finite() {
                rng.random::<f64>() * tau
            } else {
                f64::INFINITY
            };
            if c < t {
                SurvivalRecord::new(c.max(f64::MIN_POSITIVE), false, x)
            } else {
                SurvivalRecord::new(t.max(f64::MIN_POSITIVE), true, x)
            }
        })
        .collect())
}

/// Horizon `tau` of uniform censoring giving the target expected censored
/// share over exponential times with the given rates.
pub fn censoring_horizon(rates: &[f64], share: f64) -> f64 {
    if share <= 0.0 {
        return f64::INFINITY;
    }
    let censored = |tau: f64| {
        rates
            .iter()
            .map(|&l| (1.0 - (-l * tau).exp()) / (l * tau))
            .sum::<f64>()
            / rates.len() as f64
    };
    // censored(tau) decreases from 1 towards 0
    let (mut lo, mut hi) = (1e-9, 1.0);
    while censored(hi) > share {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if censored(mid) > share {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Survival table with `subject_id, time_months, event` then named covariate
/// columns.
pub fn write_survival_csv(
    path: &Path,
    ids: &[String],
    records: &[SurvivalRecord],
    names: &[&str],
) -> Result<()> {
    if ids.len() != records.len() {
        return Err(Error::invalid("one id per record required"));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["subject_id", "time_months", "event"];
    header.extend_from_slice(names);
    w.write_record(&header)?;
    for (id, r) in ids.iter().zip(records) {
        if r.covariates.len() != names.len() {
            return Err(Error::invalid("covariate count differs from column names"));
        }
        let mut row = vec![
            id.clone(),
            format!("{}", r.time),
            (r.event as u8).to_string(),
        ];
        row.extend(r.covariates.iter().map(|c| format!("{c}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalTable {
    pub ids: Vec<String>,
    pub columns: Vec<String>,
    pub records: Vec<SurvivalRecord>,
}

pub fn read_survival_csv(path: &Path) -> Result<SurvivalTable> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
    let header = r.headers()?.clone();
    if header.len() < 3
        || &header[0] != "subject_id"
        || &header[1] != "time_months"
        || &header[2] != "event"
    {
        return Err(Error::Format(
            "survival CSV must start with subject_id,time_months,event".into(),
        ));
    }
    let columns: Vec<String> = header.iter().skip(3).map(str::to_string).collect();
    let (mut ids, mut records) = (Vec::new(), Vec::new());
    for (line, row) in r.records().enumerate() {
        let row = row?;
        let num = |i: usize| -> Result<f64> {
            row.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| {
                    Error::Format(format!("row {}: bad number in column {}", line + 2, i + 1))
                })
        };
        let event = match row.get(2).map(str::trim) {
            Some("1") => true,
            Some("0") => false,
            other => {
                return Err(Error::Format(format!(
                    "row {}: event must be 0 or 1, got {other:?}",
                    line + 2
                )))
            }
        };
        let rec = SurvivalRecord::new(
            num(1)?,
            event,
            (3..row.len()).map(num).collect::<Result<_>>()?,
        );
        rec.validate()
            .map_err(|e| e.context(format!("row {}", line + 2)))?;
        ids.push(row[0].to_string());
        records.push(rec);
    }
    Ok(SurvivalTable {
        ids,
        columns,
        records,
    })
}
