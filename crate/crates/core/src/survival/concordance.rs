use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceReport {
    pub c_index: f64,
    pub concordant: u64,
    pub discordant: u64,
    pub tied_risk: u64,
    pub usable_pairs: u64,
}

/// Fenwick tree of counts over compressed risk ranks.
struct Counts(Vec<u64>);

impl Counts {
    fn new(n: usize) -> Self {
        Self(vec![0; n + 1])
    }

    fn add(&mut self, rank: usize) {
        let mut i = rank + 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Number of inserted ranks strictly below `rank`.
    fn below(&self, rank: usize) -> u64 {
        let mut i = rank;
        let mut acc = 0;
        while i > 0 {
            acc += self.0[i];
            i -= i & i.wrapping_neg();
        }
        acc
    }
}

/// Harrell's C in O(n log n).
///
/// A pair is usable when the shorter follow-up ends in an event: `t_i < t_j`
/// with an event at `t_i`, or equal times with exactly one event. The pair is
/// concordant when the patient with the earlier event has the strictly higher
/// risk; equal risks count one half.
pub fn harrell_c(risks: &[f64], cohort: &Cohort) -> Result<ConcordanceReport> {
    if risks.len() != cohort.len() {
        return Err(Error::LengthMismatch {
            expected: cohort.len(),
            found: risks.len(),
        });
    }
    if let Some(&r) = risks.iter().find(|r| !r.is_finite()) {
        return Err(Error::NonFiniteRisk(r));
    }
    let n = risks.len();
    let mut sorted = risks.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    // numeric `<`, not total_cmp: -0.0 and 0.0 must share a rank
    let rank: Vec<usize> = risks.iter().map(|r| sorted.partition_point(|s| s < r)).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cohort.records[b].time.total_cmp(&cohort.records[a].time));

    let mut counts = Counts::new(sorted.len());
    let mut inserted = 0u64;
    let (mut concordant, mut discordant, mut tied) = (0u64, 0u64, 0u64);
    let mut i = 0;
    while i < n {
        let t = cohort.records[order[i]].time;
        let mut j = i;
        while j < n && cohort.records[order[j]].time == t {
            j += 1;
        }
        let group = &order[i..j];
        // censored at the same time are still at risk after an event at t
        for &k in group.iter().filter(|&&k| !cohort.records[k].event) {
            counts.add(rank[k]);
            inserted += 1;
        }
        for &k in group.iter().filter(|&&k| cohort.records[k].event) {
            let below = counts.below(rank[k]);
            let at_or_below = counts.below(rank[k] + 1);
            concordant += below;
            tied += at_or_below - below;
            discordant += inserted - at_or_below;
        }
        for &k in group.iter().filter(|&&k| cohort.records[k].event) {
            counts.add(rank[k]);
            inserted += 1;
        }
        i = j;
    }
    let usable = concordant + discordant + tied;
    if usable == 0 {
        return Err(Error::NoUsablePairs);
    }
    Ok(ConcordanceReport {
        c_index: (concordant as f64 + 0.5 * tied as f64) / usable as f64,
        concordant,
        discordant,
        tied_risk: tied,
        usable_pairs: usable,
    })
}
