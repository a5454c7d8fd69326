use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;

/// Product-limit survival curve, one step per distinct event time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub n_at_risk: Vec<usize>,
}

impl KmCurve {
    pub fn from_data(times: &[f64], events: &[bool]) -> Self {
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        let mut curve = KmCurve {
            times: Vec::new(),
            survival: Vec::new(),
            n_at_risk: Vec::new(),
        };
        let mut s = 1.0;
        let mut at_risk = times.len();
        let mut i = 0;
        while i < order.len() {
            let t = times[order[i]];
            let mut j = i;
            let mut deaths = 0;
            while j < order.len() && times[order[j]] == t {
                deaths += usize::from(events[order[j]]);
                j += 1;
            }
            if deaths > 0 {
                s *= 1.0 - deaths as f64 / at_risk as f64;
                curve.times.push(t);
                curve.survival.push(s);
                curve.n_at_risk.push(at_risk);
            }
            at_risk -= j - i;
            i = j;
        }
        curve
    }

    /// Step value at `t`; 1 before the first event.
    pub fn survival_at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s <= t) {
            0 => 1.0,
            k => self.survival[k - 1],
        }
    }
}

pub fn km_estimate(cohort: &Cohort, t_star: f64) -> (KmCurve, f64) {
    let curve = KmCurve::from_data(&cohort.times(), &cohort.events());
    let s = curve.survival_at(t_star);
    (curve, s)
}
