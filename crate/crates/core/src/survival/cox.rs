use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::numeric::{mean, population_sd};
use crate::weights::WeightSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoxOptions {
    pub ridge: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// A coefficient whose per-sd effect exceeds this is treated as
    /// diverging towards infinity.
    pub max_standardized_effect: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        Self {
            ridge: 1e-9,
            tolerance: 1e-8,
            max_iterations: 100,
            max_standardized_effect: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub log_partial_likelihood: f64,
}

/// Fitted proportional-hazards model. The baseline cumulative hazard is on
/// the centred covariate scale: `H(t | x) = H0(t) exp((x - mean)' beta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub covariate_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub covariate_means: Vec<f64>,
    /// `(t, H0(t))` at every distinct event time, increasing.
    pub baseline_cum_hazard: Vec<(f64, f64)>,
    pub fit_report: FitReport,
}

impl CoxModel {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.covariate_means)
            .zip(&self.coefficients)
            .map(|((x, m), b)| (x - m) * b)
            .sum()
    }

    /// Step value of the baseline; zero before the first event, last step
    /// carried forward beyond the last one.
    pub fn baseline_at(&self, t: f64) -> f64 {
        match self.baseline_cum_hazard.partition_point(|&(s, _)| s <= t) {
            0 => 0.0,
            k => self.baseline_cum_hazard[k - 1].1,
        }
    }

    pub fn predict_risk(&self, x: &[f64], t_star: f64) -> f64 {
        let h = self.baseline_at(t_star) * self.linear_predictor(x).exp();
        // largest double below 1: risk stays in [0, 1)
        (-(-h).exp_m1()).min(1.0 - f64::EPSILON / 2.0)
    }

    /// Covariate positions of `names` within this model.
    pub fn align(&self, names: &[String]) -> Result<Vec<usize>> {
        self.covariate_names
            .iter()
            .map(|n| {
                names
                    .iter()
                    .position(|m| m == n)
                    .ok_or_else(|| Error::MissingCoefficient(n.clone()))
            })
            .collect()
    }

    /// Horizon risks for every record of a cohort, matching covariates by name.
    pub fn predict_cohort(&self, cohort: &Cohort, t_star: f64) -> Result<Vec<f64>> {
        let pos = self.align(&cohort.covariate_names)?;
        Ok(cohort
            .records
            .iter()
            .map(|r| {
                let x: Vec<f64> = pos.iter().map(|&j| r.covariates[j]).collect();
                self.predict_risk(&x, t_star)
            })
            .collect())
    }
}

pub fn predict_risk(model: &CoxModel, x: &[f64], t_star: f64) -> f64 {
    model.predict_risk(x, t_star)
}

/// Centred design sorted by decreasing time, ready for repeated likelihood
/// evaluation.
#[derive(Debug, Clone)]
pub struct CoxData {
    x: Vec<DVector<f64>>,
    time: Vec<f64>,
    event: Vec<bool>,
    weight: Vec<f64>,
    means: Vec<f64>,
    sds: Vec<f64>,
    names: Vec<String>,
}

impl CoxData {
    pub fn new(cohort: &Cohort, weights: Option<&[f64]>) -> Result<Self> {
        let n = cohort.len();
        let d = cohort.dim();
        let weight: Vec<f64> = match weights {
            Some(w) => {
                if w.len() != n || w.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(Error::InvalidWeights {
                        expected: n,
                        found: w.len(),
                    });
                }
                w.to_vec()
            }
            None => vec![1.0; n],
        };
        if !cohort.records.iter().any(|r| r.event) {
            return Err(Error::NoEvents);
        }
        let mut means = Vec::with_capacity(d);
        let mut sds = Vec::with_capacity(d);
        for j in 0..d {
            let col: Vec<f64> = cohort.records.iter().map(|r| r.covariates[j]).collect();
            let sd = population_sd(&col);
            if !(sd > 0.0) {
                return Err(Error::ZeroVariance(cohort.covariate_names[j].clone()));
            }
            means.push(mean(&col));
            sds.push(sd);
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| cohort.records[b].time.total_cmp(&cohort.records[a].time));
        let x = order
            .iter()
            .map(|&i| {
                DVector::from_iterator(
                    d,
                    cohort.records[i].covariates.iter().zip(&means).map(|(v, m)| v - m),
                )
            })
            .collect();
        Ok(Self {
            x,
            time: order.iter().map(|&i| cohort.records[i].time).collect(),
            event: order.iter().map(|&i| cohort.records[i].event).collect(),
            weight: order.iter().map(|&i| weight[i]).collect(),
            means,
            sds,
            names: cohort.covariate_names.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    /// Distinct-time groups `[start, end)` in decreasing time order.
    fn groups(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < self.time.len() {
            let mut j = i + 1;
            while j < self.time.len() && self.time[j] == self.time[i] {
                j += 1;
            }
            out.push((i, j));
            i = j;
        }
        out
    }

    fn risk_scores(&self, beta: &DVector<f64>) -> (Vec<f64>, f64) {
        let eta: Vec<f64> = self.x.iter().map(|x| x.dot(beta)).collect();
        let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (eta.iter().map(|e| (e - shift).exp()).collect(), shift)
    }

    /// Weighted Breslow log partial likelihood, score and observed information.
    #[allow(clippy::needless_range_loop)]
    pub fn evaluate(&self, beta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let d = self.dim();
        let (r, shift) = self.risk_scores(beta);
        let mut s0 = 0.0;
        let mut s1 = DVector::zeros(d);
        let mut s2 = DMatrix::zeros(d, d);
        let mut ll = 0.0;
        let mut grad = DVector::zeros(d);
        let mut info = DMatrix::zeros(d, d);
        for (start, end) in self.groups() {
            for k in start..end {
                let wr = self.weight[k] * r[k];
                s0 += wr;
                s1.axpy(wr, &self.x[k], 1.0);
                s2.ger(wr, &self.x[k], &self.x[k], 1.0);
            }
            if !self.event[start..end].contains(&true) {
                continue;
            }
            let xbar = &s1 / s0;
            let cov = &s2 / s0 - &xbar * xbar.transpose();
            let log_s0 = s0.ln() + shift;
            for k in start..end {
                if self.event[k] {
                    let w = self.weight[k];
                    ll += w * (self.x[k].dot(beta) - log_s0);
                    grad.axpy(w, &(&self.x[k] - &xbar), 1.0);
                    info += &cov * w;
                }
            }
        }
        (ll, grad, info)
    }

    pub fn log_likelihood(&self, beta: &DVector<f64>) -> f64 {
        self.evaluate(beta).0
    }

    pub fn score(&self, beta: &DVector<f64>) -> DVector<f64> {
        self.evaluate(beta).1
    }

    /// Weighted Breslow cumulative baseline hazard on the centred scale.
    #[allow(clippy::needless_range_loop)]
    pub fn breslow(&self, beta: &DVector<f64>) -> Vec<(f64, f64)> {
        let (r, shift) = self.risk_scores(beta);
        let scale = (-shift).exp();
        let mut s0 = 0.0;
        let mut increments = Vec::new();
        for (start, end) in self.groups() {
            let mut dead = 0.0;
            for k in start..end {
                s0 += self.weight[k] * r[k];
                if self.event[k] {
                    dead += self.weight[k];
                }
            }
            if dead > 0.0 {
                // r is scaled by exp(-shift); undo it so H0 is on the centred scale
                increments.push((self.time[start], dead / s0 * scale));
            }
        }
        increments.reverse();
        let mut h = 0.0;
        increments
            .into_iter()
            .map(|(t, dh)| {
                h += dh;
                (t, h)
            })
            .collect()
    }
}

/// A vanishing per-sd information at the optimum means the likelihood is
/// still increasing towards an infinite coefficient.
fn information_collapsed(info: &DMatrix<f64>, data: &CoxData) -> bool {
    let total_events: f64 = data
        .event
        .iter()
        .zip(&data.weight)
        .filter(|(e, _)| **e)
        .map(|(_, w)| w)
        .sum();
    let d = data.dim();
    let scaled = DMatrix::from_fn(d, d, |i, j| info[(i, j)] * data.sds[i] * data.sds[j] / total_events);
    let min_eig = scaled.symmetric_eigenvalues().min();
    !(min_eig > 1e-6)
}

pub fn fit_cox(cohort: &Cohort, weights: Option<&WeightSet>) -> Result<CoxModel> {
    fit_cox_with(cohort, weights.map(|w| w.values.as_slice()), &CoxOptions::default())
}

/// Ridge-stabilised Newton–Raphson with step halving.
pub fn fit_cox_with(cohort: &Cohort, weights: Option<&[f64]>, options: &CoxOptions) -> Result<CoxModel> {
    let data = CoxData::new(cohort, weights)?;
    let d = data.dim();
    let penalized = |ll: f64, beta: &DVector<f64>| ll - 0.5 * options.ridge * beta.norm_squared();

    let mut beta = DVector::zeros(d);
    let (mut ll, mut grad, mut info) = data.evaluate(&beta);
    let mut objective = penalized(ll, &beta);
    let mut iterations = 0;
    loop {
        let g = &grad - &beta * options.ridge;
        let gnorm = g.amax();
        if gnorm < options.tolerance {
            if information_collapsed(&info, &data) {
                return Err(Error::Diverged { iterations });
            }
            return Ok(CoxModel {
                covariate_names: data.names.clone(),
                coefficients: beta.iter().copied().collect(),
                covariate_means: data.means.clone(),
                baseline_cum_hazard: data.breslow(&beta),
                fit_report: FitReport {
                    iterations,
                    gradient_norm: gnorm,
                    log_partial_likelihood: ll,
                },
            });
        }
        if iterations >= options.max_iterations {
            return Err(Error::NotConverged {
                iterations,
                gradient: gnorm,
            });
        }
        iterations += 1;
        let h = &info + DMatrix::identity(d, d) * options.ridge;
        let step = match h.clone().cholesky() {
            Some(c) => c.solve(&g),
            None => h
                .lu()
                .solve(&g)
                .ok_or(Error::Diverged { iterations })?,
        };
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let candidate = &beta + &step * scale;
            let (cll, cgrad, cinfo) = data.evaluate(&candidate);
            let cobj = penalized(cll, &candidate);
            if cobj.is_finite() && cobj >= objective - 1e-12 * objective.abs().max(1.0) {
                beta = candidate;
                ll = cll;
                grad = cgrad;
                info = cinfo;
                objective = cobj;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(Error::NotConverged {
                iterations,
                gradient: gnorm,
            });
        }
        if beta
            .iter()
            .zip(&data.sds)
            .any(|(b, s)| !b.is_finite() || (b * s).abs() > options.max_standardized_effect)
        {
            return Err(Error::Diverged { iterations });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::PatientRecord;
    use crate::rng;
    use rand::Rng;

    fn cohort(rows: Vec<(Vec<f64>, f64, bool)>) -> Cohort {
        let d = rows[0].0.len();
        Cohort {
            name: "c".into(),
            covariate_names: (0..d).map(|j| format!("x{j}")).collect(),
            records: rows
                .into_iter()
                .enumerate()
                .map(|(i, (covariates, time, event))| PatientRecord {
                    id: i.to_string(),
                    covariates,
                    time,
                    event,
                    treatment: false,
                })
                .collect(),
        }
    }

    fn random_cohort(n: usize, seed: u64) -> Cohort {
        let mut r = rng::stream(seed, "cox-test", 0);
        cohort(
            (0..n)
                .map(|_| {
                    let x = vec![r.random::<f64>() * 2.0 - 1.0, f64::from(r.random::<bool>())];
                    let rate = (0.7 * x[0] - 0.4 * x[1]).exp();
                    let t = -r.random::<f64>().ln() / rate;
                    // coarse rounding forces tied times
                    let t = (t * 20.0).ceil() / 20.0;
                    let c = r.random::<f64>() * 3.0;
                    (x, t.min(c).max(0.01), t <= c)
                })
                .collect(),
        )
    }

    #[test]
    fn zero_variance_rejected() {
        let c = cohort(vec![(vec![1.0], 1.0, true), (vec![1.0], 2.0, false)]);
        assert!(matches!(fit_cox(&c, None), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn no_events_rejected() {
        let c = cohort(vec![(vec![1.0], 1.0, false), (vec![2.0], 2.0, false)]);
        assert!(matches!(fit_cox(&c, None), Err(Error::NoEvents)));
    }

    #[test]
    fn monotone_likelihood_is_an_error() {
        // covariate perfectly separates early events from late censorings
        let rows = (0..20)
            .map(|i| {
                let hi = i < 10;
                (vec![f64::from(u8::from(hi))], if hi { 1.0 + i as f64 } else { 50.0 + i as f64 }, hi)
            })
            .collect();
        let err = fit_cox(&cohort(rows), None).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. } | Error::NotConverged { .. }), "{err}");
    }

    #[test]
    fn bad_weights_rejected() {
        let c = random_cohort(50, 1);
        let w = vec![1.0; 49];
        assert!(fit_cox_with(&c, Some(&w), &CoxOptions::default()).is_err());
        let mut w = vec![1.0; 50];
        w[3] = 0.0;
        assert!(fit_cox_with(&c, Some(&w), &CoxOptions::default()).is_err());
    }

    #[test]
    fn score_matches_central_differences() {
        let c = random_cohort(300, 3);
        let w: Vec<f64> = (0..300).map(|i| 0.5 + (i % 7) as f64 / 4.0).collect();
        let data = CoxData::new(&c, Some(&w)).unwrap();
        let mut r = rng::stream(4, "fd", 0);
        for _ in 0..10 {
            let beta = DVector::from_vec(vec![r.random::<f64>() * 2.0 - 1.0, r.random::<f64>() * 2.0 - 1.0]);
            let g = data.score(&beta);
            for j in 0..2 {
                let h = 1e-5;
                let mut up = beta.clone();
                up[j] += h;
                let mut dn = beta.clone();
                dn[j] -= h;
                let fd = (data.log_likelihood(&up) - data.log_likelihood(&dn)) / (2.0 * h);
                assert!((fd - g[j]).abs() / g[j].abs().max(1e-3) < 1e-4, "{fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn unit_weights_are_bitwise_identical_to_unweighted() {
        let c = random_cohort(200, 5);
        let a = fit_cox_with(&c, None, &CoxOptions::default()).unwrap();
        let b = fit_cox_with(&c, Some(&[1.0; 200]), &CoxOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn weight_scale_equivariance() {
        let c = random_cohort(200, 6);
        let w: Vec<f64> = (0..200).map(|i| 1.0 + (i % 3) as f64).collect();
        let w3: Vec<f64> = w.iter().map(|v| v * 3.0).collect();
        let a = fit_cox_with(&c, Some(&w), &CoxOptions::default()).unwrap();
        let b = fit_cox_with(&c, Some(&w3), &CoxOptions::default()).unwrap();
        for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
            assert!((x - y).abs() < 1e-7);
        }
    }

    #[test]
    fn prediction_edge_cases() {
        let mut m = fit_cox(&random_cohort(100, 7), None).unwrap();
        let first = m.baseline_cum_hazard[0].0;
        assert_eq!(m.predict_risk(&[0.3, 1.0], first * 0.5), 0.0);
        m.coefficients = vec![0.0, 0.0];
        let t = m.baseline_cum_hazard[3].0;
        let expected = 1.0 - (-m.baseline_at(t)).exp();
        assert!((m.predict_risk(&[5.0, 0.0], t) - expected).abs() < 1e-15);
        assert!((m.predict_risk(&[-5.0, 1.0], t) - expected).abs() < 1e-15);
        // beyond follow-up uses the last step
        let last = m.baseline_cum_hazard.last().unwrap().1;
        assert_eq!(m.baseline_at(1e9), last);
    }

    #[test]
    fn risk_monotone_in_linear_predictor() {
        let m = fit_cox(&random_cohort(150, 8), None).unwrap();
        let mut pts: Vec<Vec<f64>> = (0..50).map(|i| vec![-2.0 + i as f64 * 0.08, (i % 2) as f64]).collect();
        pts.sort_by(|a, b| m.linear_predictor(a).total_cmp(&m.linear_predictor(b)));
        let risks: Vec<f64> = pts.iter().map(|x| m.predict_risk(x, 1.0)).collect();
        assert!(risks.windows(2).all(|w| w[0] <= w[1]));
        assert!(risks.iter().all(|r| (0.0..1.0).contains(r)));
    }
}
