use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{rank_normalize, StepFunction, SurvivalRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoxOptions {
    pub ridge: f64,
    /// Weight of the squared-error term tying the linear predictor to the
    /// rank-normalized negative log time of each event. Zero is plain Cox.
    pub aux_time_weight: f64,
    pub max_iter: usize,
    /// Newton stops once the gradient max-norm is at or below this.
    pub tol: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        CoxOptions {
            ridge: 1e-4,
            aux_time_weight: 0.0,
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub sd: f64,
}

/// Penalized Breslow partial log-likelihood over standardized covariates,
/// with analytic gradient and Hessian. Only non-degenerate covariates enter.
#[derive(Debug, Clone)]
pub struct CoxObjective {
    /// Subjects sorted by descending time.
    z: Vec<DVector<f64>>,
    time: Vec<f64>,
    event: Vec<bool>,
    aux_target: Vec<f64>,
    ridge: f64,
    aux_weight: f64,
    pub standardization: Vec<Standardization>,
    /// Indices of covariates with positive spread.
    pub retained: Vec<usize>,
}

impl CoxObjective {
    pub fn new(records: &[SurvivalRecord], opts: &CoxOptions) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::invalid("no survival records"));
        }
        records.iter().try_for_each(SurvivalRecord::validate)?;
        let p = records[0].covariates.len();
        if p == 0 {
            return Err(Error::invalid("Cox model needs at least one covariate"));
        }
        if records.iter().any(|r| r.covariates.len() != p) {
            return Err(Error::invalid("records have differing covariate counts"));
        }
        let events = records.iter().filter(|r| r.event).count();
        if events < 2 {
            return Err(Error::InsufficientEvents(events));
        }
        if !(opts.ridge >= 0.0) || !(opts.aux_time_weight >= 0.0) {
            return Err(Error::invalid("ridge and aux_time_weight must be >= 0"));
        }

        let n = records.len() as f64;
        let standardization: Vec<Standardization> = (0..p)
            .map(|k| {
                let mean = records.iter().map(|r| r.covariates[k]).sum::<f64>() / n;
                let var = records
                    .iter()
                    .map(|r| (r.covariates[k] - mean).powi(2))
                    .sum::<f64>()
                    / n;
                Standardization {
                    mean,
                    sd: var.sqrt(),
                }
            })
            .collect();
        let retained: Vec<usize> = (0..p)
            .filter(|&k| {
                let s = standardization[k];
                s.sd > 1e-12 * s.mean.abs().max(1.0)
            })
            .collect();

        let mut order: Vec<usize> = (0..records.len()).collect();
        order.sort_by(|&a, &b| records[b].time.total_cmp(&records[a].time).then(a.cmp(&b)));

        let event_idx: Vec<usize> = (0..records.len()).filter(|&i| records[i].event).collect();
        let neg_log_t: Vec<f64> = event_idx.iter().map(|&i| -records[i].time.ln()).collect();
        let ranked = rank_normalize(&neg_log_t)?;
        let mut aux = vec![0.0; records.len()];
        for (&i, r) in event_idx.iter().zip(ranked) {
            aux[i] = r;
        }

        let z = order
            .iter()
            .map(|&i| {
                DVector::from_iterator(
                    retained.len(),
                    retained.iter().map(|&k| {
                        let s = standardization[k];
                        (records[i].covariates[k] - s.mean) / s.sd
                    }),
                )
            })
            .collect();
        Ok(CoxObjective {
            z,
            time: order.iter().map(|&i| records[i].time).collect(),
            event: order.iter().map(|&i| records[i].event).collect(),
            aux_target: order.iter().map(|&i| aux[i]).collect(),
            ridge: opts.ridge,
            aux_weight: opts.aux_time_weight,
            standardization,
            retained,
        })
    }

    /// Number of free coefficients.
    pub fn dim(&self) -> usize {
        self.retained.len()
    }

    fn eval(&self, beta: &DVector<f64>, want_hess: bool) -> (f64, DVector<f64>, DMatrix<f64>) {
        let q = self.dim();
        let mut value = 0.0;
        let mut grad = DVector::zeros(q);
        let mut hess = DMatrix::zeros(q, q);
        let eta: Vec<f64> = self.z.iter().map(|z| z.dot(beta)).collect();
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        let mut s0 = 0.0;
        let mut s1 = DVector::zeros(q);
        let mut s2 = DMatrix::zeros(q, q);
        let n = self.z.len();
        let mut i = 0;
        while i < n {
            let t = self.time[i];
            let mut j = i;
            while j < n && self.time[j] == t {
                let w = (eta[j] - shift).exp();
                s0 += w;
                s1.axpy(w, &self.z[j], 1.0);
                if want_hess {
                    s2.ger(w, &self.z[j], &self.z[j], 1.0);
                }
                j += 1;
            }
            let mean = &s1 / s0;
            for k in i..j {
                if self.event[k] {
                    value += eta[k] - (s0.ln() + shift);
                    grad += &self.z[k] - &mean;
                    if want_hess {
                        hess -= &s2 / s0 - &mean * mean.transpose();
                    }
                }
            }
            i = j;
        }

        value -= 0.5 * self.ridge * beta.norm_squared();
        grad.axpy(-self.ridge, beta, 1.0);
        if want_hess {
            for d in 0..q {
                hess[(d, d)] -= self.ridge;
            }
        }
        if self.aux_weight > 0.0 {
            for k in 0..n {
                if self.event[k] {
                    let r = eta[k] - self.aux_target[k];
                    value -= self.aux_weight * r * r;
                    grad.axpy(-2.0 * self.aux_weight * r, &self.z[k], 1.0);
                    if want_hess {
                        hess.ger(-2.0 * self.aux_weight, &self.z[k], &self.z[k], 1.0);
                    }
                }
            }
        }
        (value, grad, hess)
    }

    /// Penalized log partial likelihood (to be maximized).
    pub fn value(&self, beta: &[f64]) -> f64 {
        self.eval(&DVector::from_column_slice(beta), false).0
    }

    pub fn gradient(&self, beta: &[f64]) -> Vec<f64> {
        self.eval(&DVector::from_column_slice(beta), false)
            .1
            .as_slice()
            .to_vec()
    }

    /// Row-major Hessian.
    pub fn hessian(&self, beta: &[f64]) -> Vec<Vec<f64>> {
        let h = self.eval(&DVector::from_column_slice(beta), true).2;
        (0..h.nrows())
            .map(|r| h.row(r).iter().copied().collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    /// Coefficients on standardized covariates; zero for degenerate ones.
    pub beta: Vec<f64>,
    pub standardization: Vec<Standardization>,
    /// Breslow baseline cumulative hazard at the standardized origin.
    pub baseline_cumhaz: StepFunction,
    pub aux_time_weight: f64,
    #[serde(default)]
    pub covariate_names: Vec<String>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl CoxModel {
    /// Model with the given standardized coefficients and identity
    /// standardization.
    pub fn planted(beta: Vec<f64>) -> Self {
        let p = beta.len();
        CoxModel {
            beta,
            standardization: vec![Standardization { mean: 0.0, sd: 1.0 }; p],
            baseline_cumhaz: StepFunction {
                knots: vec![],
                values: vec![],
                initial: 0.0,
            },
            aux_time_weight: 0.0,
            covariate_names: vec![],
            log_likelihood: 0.0,
            iterations: 0,
            converged: true,
            warnings: vec![],
        }
    }

    pub fn with_names(mut self, names: &[&str]) -> Self {
        self.covariate_names = names.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    /// Coefficients on the raw covariate scale.
    pub fn unstandardized_beta(&self) -> Vec<f64> {
        self.beta
            .iter()
            .zip(&self.standardization)
            .map(|(b, s)| b / s.sd)
            .collect()
    }

    /// Linear predictor on standardized covariates; higher is worse.
    pub fn risk_score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "expected {} covariates, got {}",
                self.dim(),
                x.len()
            )));
        }
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite covariate {v}")));
        }
        Ok(self
            .beta
            .iter()
            .zip(&self.standardization)
            .zip(x)
            .filter(|((b, _), _)| **b != 0.0)
            .map(|((b, s), v)| b * (v - s.mean) / s.sd)
            .sum())
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
        let m: CoxModel = serde_json::from_str(&text)?;
        if m.standardization.len() != m.beta.len()
            || m.standardization.iter().any(|s| !(s.sd > 0.0))
        {
            return Err(Error::Format(
                "model standardization does not match coefficients".into(),
            ));
        }
        Ok(m)
    }
}

/// Newton-Raphson with step halving on the penalized partial likelihood.
pub fn fit_cox(records: &[SurvivalRecord], opts: &CoxOptions) -> Result<CoxModel> {
    let obj = CoxObjective::new(records, opts)?;
    let p = obj.standardization.len();
    let q = obj.dim();
    let mut warnings: Vec<String> = (0..p)
        .filter(|k| !obj.retained.contains(k))
        .map(|k| format!("covariate {k} is constant; coefficient fixed at 0"))
        .collect();

    let mut beta = DVector::zeros(q);
    let mut converged = q == 0;
    let mut iterations = 0;
    let (mut value, mut grad, mut hess) = obj.eval(&beta, true);
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let neg = -&hess;
        let step = match neg.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => neg.lu().solve(&grad).unwrap_or_else(|| grad.clone()),
        };
        let mut scale = 1.0;
        let mut next = &beta + &step;
        let mut next_eval = obj.eval(&next, true);
        // improvements below rounding of the objective count as progress
        let slack = 1e-12 * (1.0 + value.abs());
        while !(next_eval.0 >= value - slack) && scale > 1e-10 {
            scale *= 0.5;
            next = &beta + &step * scale;
            next_eval = obj.eval(&next, true);
        }
        let moved = (&next - &beta).amax();
        beta = next;
        (value, grad, hess) = next_eval;
        if grad.amax() <= opts.tol || moved == 0.0 {
            converged = true;
        }
    }
    if !converged {
        warnings.push(format!(
            "Newton-Raphson did not converge in {} iterations",
            opts.max_iter
        ));
        log::warn!("Cox fit did not converge in {} iterations", opts.max_iter);
    }

    let mut full = vec![0.0; p];
    for (j, &k) in obj.retained.iter().enumerate() {
        full[k] = beta[j];
    }

    // Breslow baseline over distinct event times
    let eta: Vec<f64> = obj.z.iter().map(|z| z.dot(&beta)).collect();
    let n = obj.z.len();
    let mut risk_sum = 0.0;
    let mut steps: Vec<(f64, f64)> = Vec::new();
    let mut i = 0;
    while i < n {
        let t = obj.time[i];
        let mut j = i;
        let mut d = 0.0;
        while j < n && obj.time[j] == t {
            risk_sum += eta[j].exp();
            d += obj.event[j] as u8 as f64;
            j += 1;
        }
        if d > 0.0 {
            steps.push((t, d / risk_sum));
        }
        i = j;
    }
    steps.reverse();
    let mut acc = 0.0;
    let (knots, values): (Vec<f64>, Vec<f64>) = steps
        .into_iter()
        .map(|(t, h)| {
            acc += h;
            (t, acc)
        })
        .unzip();

    Ok(CoxModel {
        beta: full,
        standardization: obj.standardization.clone(),
        baseline_cumhaz: StepFunction::new(knots, values, 0.0)?,
        aux_time_weight: opts.aux_time_weight,
        covariate_names: vec![],
        log_likelihood: value,
        iterations,
        converged,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: f64, e: bool, x: f64) -> SurvivalRecord {
        SurvivalRecord::new(t, e, vec![x])
    }

    #[test]
    fn insufficient_events() {
        let r = vec![rec(1.0, true, 0.0), rec(2.0, false, 1.0)];
        assert!(matches!(
            fit_cox(&r, &CoxOptions::default()),
            Err(Error::InsufficientEvents(1))
        ));
    }

    #[test]
    fn constant_covariate_gets_zero() {
        let r: Vec<_> = (0..10)
            .map(|i| SurvivalRecord::new(1.0 + i as f64, i % 3 != 0, vec![5.0, i as f64 % 4.0]))
            .collect();
        let m = fit_cox(&r, &CoxOptions::default()).unwrap();
        assert_eq!(m.beta[0], 0.0);
        assert!(m.converged);
        assert!(m.warnings.iter().any(|w| w.contains("constant")));
    }

    #[test]
    fn risk_at_means_is_zero() {
        let r: Vec<_> = (0..12)
            .map(|i| SurvivalRecord::new(1.0 + i as f64, true, vec![(i * 7 % 5) as f64]))
            .collect();
        let m = fit_cox(&r, &CoxOptions::default()).unwrap();
        let mean = m.standardization[0].mean;
        assert!(m.risk_score(&[mean]).unwrap().abs() < 1e-15);
        assert!(m.risk_score(&[f64::NAN]).is_err());
    }

    #[test]
    fn baseline_is_non_decreasing() {
        let r: Vec<_> = (0..15)
            .map(|i| SurvivalRecord::new(1.0 + (i % 6) as f64, i % 4 != 0, vec![(i % 3) as f64]))
            .collect();
        let m = fit_cox(&r, &CoxOptions::default()).unwrap();
        assert!(m.baseline_cumhaz.values.windows(2).all(|w| w[0] <= w[1]));
    }
}
