use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::SurvivalRecord;
use crate::error::{Error, Result};

/// Right-continuous step function: `initial` before the first knot, then
/// `values[k]` on `[knots[k], knots[k+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    pub initial: f64,
}

impl StepFunction {
    pub fn new(knots: Vec<f64>, values: Vec<f64>, initial: f64) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(Error::invalid("step function needs one value per knot"));
        }
        if !knots.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid(
                "step function knots must be strictly increasing",
            ));
        }
        Ok(StepFunction {
            knots,
            values,
            initial,
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self.knots.partition_point(|&k| k <= t) {
            0 => self.initial,
            k => self.values[k - 1],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }
}

/// `(time, events at time, number at risk)` for each distinct event time.
pub(crate) fn event_table(records: &[SurvivalRecord]) -> Vec<(f64, usize, usize)> {
    let mut sorted: Vec<(f64, bool)> = records.iter().map(|r| (r.time, r.event)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = sorted.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let t = sorted[i].0;
        let mut j = i;
        let mut d = 0;
        while j < n && sorted[j].0 == t {
            d += sorted[j].1 as usize;
            j += 1;
        }
        if d > 0 {
            out.push((t, d, n - i));
        }
        i = j;
    }
    out
}

fn check_records(records: &[SurvivalRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::invalid("no survival records"));
    }
    records.iter().try_for_each(SurvivalRecord::validate)
}

/// Product-limit survival estimate.
pub fn kaplan_meier(records: &[SurvivalRecord]) -> Result<StepFunction> {
    check_records(records)?;
    let mut s = 1.0;
    let (mut knots, mut values) = (Vec::new(), Vec::new());
    for (t, d, n) in event_table(records) {
        s *= (n - d) as f64 / n as f64;
        knots.push(t);
        values.push(s);
    }
    StepFunction::new(knots, values, 1.0)
}

/// Cumulative hazard estimate `H(t) = sum d_i / n_i`.
pub fn nelson_aalen(records: &[SurvivalRecord]) -> Result<StepFunction> {
    check_records(records)?;
    let mut h = 0.0;
    let (mut knots, mut values) = (Vec::new(), Vec::new());
    for (t, d, n) in event_table(records) {
        h += d as f64 / n as f64;
        knots.push(t);
        values.push(h);
    }
    StepFunction::new(knots, values, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRankResult {
    pub chi2: f64,
    pub p_value: f64,
}

/// Two-sample log-rank test with one degree of freedom.
pub fn logrank(a: &[SurvivalRecord], b: &[SurvivalRecord]) -> Result<LogRankResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("log-rank needs two non-empty groups"));
    }
    check_records(a)?;
    check_records(b)?;
    let mut all: Vec<(f64, bool, bool)> = a
        .iter()
        .map(|r| (r.time, r.event, true))
        .chain(b.iter().map(|r| (r.time, r.event, false)))
        .collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));

    let n_total = all.len();
    let mut at_risk_a = a.len() as f64;
    let (mut observed_a, mut expected_a, mut var) = (0.0, 0.0, 0.0);
    let mut i = 0;
    while i < n_total {
        let t = all[i].0;
        let n = (n_total - i) as f64;
        let (mut d, mut d_a, mut leaving_a) = (0.0, 0.0, 0.0);
        let mut j = i;
        while j < n_total && all[j].0 == t {
            let (_, event, in_a) = all[j];
            if event {
                d += 1.0;
                if in_a {
                    d_a += 1.0;
                }
            }
            if in_a {
                leaving_a += 1.0;
            }
            j += 1;
        }
        if d > 0.0 {
            observed_a += d_a;
            expected_a += d * at_risk_a / n;
            if n > 1.0 {
                var += d * (at_risk_a / n) * (1.0 - at_risk_a / n) * (n - d) / (n - 1.0);
            }
        }
        at_risk_a -= leaving_a;
        i = j;
    }
    if var <= 0.0 {
        return Ok(LogRankResult {
            chi2: 0.0,
            p_value: 1.0,
        });
    }
    let chi2 = (observed_a - expected_a).powi(2) / var;
    let dist = ChiSquared::new(1.0).expect("valid dof");
    Ok(LogRankResult {
        chi2,
        p_value: dist.sf(chi2),
    })
}
