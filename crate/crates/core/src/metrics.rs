//! Scheduling-quality metrics, per slot and cumulative.
//!
//! A slot is judged by comparing the grant vector against the realized
//! activations: wrong allocations (granted but idle), missed allocations
//! (active but not granted), their minimum — the regret, i.e. the number of
//! devices a better allocation could have served — plus the running system
//! usage and per-device age of information.

use serde::{Deserialize, Serialize};

use crate::model::ActivationVector;
use crate::sched::GrantVector;

/// Number of granted-but-idle devices: `sum_k max(u_k - A_k, 0)`.
pub fn wrong_allocations(grants: &GrantVector, truth: &ActivationVector) -> usize {
    (0..truth.len())
        .filter(|&k| grants.is_granted(k) && !truth.is_active(k))
        .count()
}

/// Number of active-but-ungranted devices: `sum_k max(A_k - u_k, 0)`.
pub fn missed_allocations(grants: &GrantVector, truth: &ActivationVector) -> usize {
    (0..truth.len())
        .filter(|&k| truth.is_active(k) && !grants.is_granted(k))
        .count()
}

/// Slot regret: the smaller of wrong and missed allocations.
pub fn regret_slot(omega: usize, mu: usize) -> usize {
    omega.min(mu)
}

/// Time-averaged fraction of granted slots actually used up to slot `t`
/// (1-based): `(1 / (t L)) * sum_{tau <= t} (L - omega_tau)`.
pub fn system_usage(omegas: &[usize], n_slots: usize) -> f64 {
    let t = omegas.len();
    if t == 0 {
        return 0.0;
    }
    let used: usize = omegas.iter().map(|&w| n_slots - w).sum();
    used as f64 / (t * n_slots) as f64
}

/// Advances per-device ages one slot: a device that was granted while
/// active transmitted and resets to 0; everyone else ages by one.
pub fn update_aoi(ages: &mut [u64], grants: &GrantVector, truth: &ActivationVector) {
    for (k, age) in ages.iter_mut().enumerate() {
        if grants.is_granted(k) && truth.is_active(k) {
            *age = 0;
        } else {
            *age += 1;
        }
    }
}

/// Arithmetic mean age across devices.
pub fn average_aoi(ages: &[u64]) -> f64 {
    ages.iter().sum::<u64>() as f64 / ages.len() as f64
}

/// Largest age across devices.
pub fn peak_aoi(ages: &[u64]) -> u64 {
    ages.iter().copied().max().unwrap_or(0)
}

/// Tuning cost: average regret times average age.
pub fn cost(avg_regret: f64, avg_aoi: f64) -> f64 {
    avg_regret * avg_aoi
}

/// One slot's worth of recorded metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub omega: usize,
    pub mu: usize,
    pub regret: usize,
    pub regret_cum: u64,
    /// Usage up to and including this slot.
    pub usage: f64,
    pub aoi_mean: f64,
    pub aoi_peak: u64,
}

/// Per-slot metric series for one policy over one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTrace {
    n_slots: usize,
    records: Vec<SlotRecord>,
    used_sum: u64,
    regret_cum: u64,
    aoi_mean_sum: f64,
}

impl MetricsTrace {
    /// `n_slots` is the number of uplink slots per time step (`L`).
    pub fn new(n_slots: usize) -> Self {
        Self {
            n_slots,
            records: Vec::new(),
            used_sum: 0,
            regret_cum: 0,
            aoi_mean_sum: 0.0,
        }
    }

    /// Records one slot. `omega` and `mu` are the slot's wrong and missed
    /// allocation counts; `ages` is the age vector after this slot's
    /// update.
    pub fn push(&mut self, omega: usize, mu: usize, ages: &[u64]) {
        let regret = regret_slot(omega, mu);
        self.regret_cum += regret as u64;
        self.used_sum += (self.n_slots - omega) as u64;
        let t = self.records.len() as u64 + 1;
        let aoi_mean = average_aoi(ages);
        self.aoi_mean_sum += aoi_mean;
        self.records.push(SlotRecord {
            omega,
            mu,
            regret,
            regret_cum: self.regret_cum,
            usage: self.used_sum as f64 / (t * self.n_slots as u64) as f64,
            aoi_mean,
            aoi_peak: peak_aoi(ages),
        });
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[SlotRecord] {
        &self.records
    }

    pub fn cumulative_regret(&self) -> u64 {
        self.regret_cum
    }

    /// Mean slot regret over the recorded horizon.
    pub fn average_regret(&self) -> f64 {
        self.regret_cum as f64 / self.records.len() as f64
    }

    /// Mean over slots of the per-slot mean age (time-and-device average).
    pub fn average_aoi(&self) -> f64 {
        self.aoi_mean_sum / self.records.len() as f64
    }

    /// Usage after the final recorded slot.
    pub fn final_usage(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.usage)
    }

    /// Per-slot mean age at the final recorded slot.
    pub fn final_aoi_mean(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.aoi_mean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grants(bits: &[bool]) -> GrantVector {
        GrantVector::new(bits.to_vec())
    }

    fn truth(bits: &[bool]) -> ActivationVector {
        ActivationVector::new(bits.to_vec())
    }

    #[test]
    fn wrong_allocation_examples() {
        // Grants a subset of the active set.
        let g = grants(&[true, false, false]);
        let a = truth(&[true, true, false]);
        assert_eq!(wrong_allocations(&g, &a), 0);

        // Nothing active, every grant wasted.
        let g = grants(&[true, true, true]);
        let a = truth(&[false, false, false]);
        assert_eq!(wrong_allocations(&g, &a), 3);

        let g = grants(&[true, true, false]);
        let a = truth(&[false, true, true]);
        assert_eq!(wrong_allocations(&g, &a), 1);
    }

    #[test]
    fn missed_allocation_examples() {
        let g = grants(&[true, true, false]);
        let a = truth(&[true, true, false]);
        assert_eq!(missed_allocations(&g, &a), 0);

        // Five active, two grants, both on active devices.
        let g = grants(&[true, true, false, false, false]);
        let a = truth(&[true, true, true, true, true]);
        assert_eq!(missed_allocations(&g, &a), 3);
        assert_eq!(regret_slot(wrong_allocations(&g, &a), 3), 0);

        let g = grants(&[true, true, false]);
        let a = truth(&[false, true, true]);
        assert_eq!(missed_allocations(&g, &a), 1);
    }

    #[test]
    fn regret_examples() {
        // All grants wasted, nothing missed: zero regret.
        assert_eq!(regret_slot(10, 0), 0);
        // Half the grants wasted while as many devices starve.
        assert_eq!(regret_slot(7, 3), 3);
        assert_eq!(regret_slot(3, 3), 3);
    }

    #[test]
    fn usage_examples() {
        assert_eq!(system_usage(&[0, 0, 0], 10), 1.0);
        assert_eq!(system_usage(&[10, 10], 10), 0.0);
        assert!((system_usage(&[2, 4], 10) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn aoi_update_examples() {
        let mut ages = vec![0, 4, 2];
        let g = grants(&[true, true, false]);
        let a = truth(&[true, false, true]);
        update_aoi(&mut ages, &g, &a);
        assert_eq!(ages, vec![0, 5, 3]);

        let mut ages = vec![0, 0];
        let none_granted = grants(&[false, false]);
        let idle = truth(&[false, false]);
        for _ in 0..3 {
            update_aoi(&mut ages, &none_granted, &idle);
        }
        assert_eq!(ages, vec![3, 3]);
    }

    #[test]
    fn aoi_summary_examples() {
        assert_eq!(average_aoi(&[4, 4, 4]), 4.0);
        assert_eq!(peak_aoi(&[4, 4, 4]), 4);
        assert_eq!(average_aoi(&[0, 0, 6]), 2.0);
        assert_eq!(peak_aoi(&[0, 0, 6]), 6);
        assert_eq!(average_aoi(&[5]), peak_aoi(&[5]) as f64);
    }

    #[test]
    fn cost_examples() {
        assert_eq!(cost(0.0, 7.3), 0.0);
        assert_eq!(cost(2.0, 3.0), 6.0);
    }

    #[test]
    fn trace_accumulates() {
        let mut trace = MetricsTrace::new(10);
        trace.push(2, 5, &[1, 1]);
        trace.push(4, 1, &[2, 0]);
        let r = trace.records();
        assert_eq!(r[0].regret, 2);
        assert_eq!(r[1].regret, 1);
        assert_eq!(r[1].regret_cum, 3);
        assert!((r[1].usage - 0.7).abs() < 1e-15);
        assert_eq!(r[0].aoi_mean, 1.0);
        assert_eq!(r[1].aoi_peak, 2);
        assert_eq!(trace.cumulative_regret(), 3);
        assert!((trace.average_regret() - 1.5).abs() < 1e-15);
        assert!((trace.average_aoi() - 1.0).abs() < 1e-15);
        assert!((trace.final_usage() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn regret_is_min_of_omega_mu_and_counts_balance() {
        // For exact-L grant vectors, |omega - mu| equals
        // |#grants - #active|.
        let cases: &[(&[bool], &[bool])] = &[
            (&[true, true, false, false], &[false, true, true, true]),
            (&[true, false, true, false], &[false, false, false, false]),
            (&[true, true, false, false], &[true, true, true, true]),
        ];
        for (g_bits, a_bits) in cases {
            let g = grants(g_bits);
            let a = truth(a_bits);
            let omega = wrong_allocations(&g, &a);
            let mu = missed_allocations(&g, &a);
            assert_eq!(regret_slot(omega, mu), omega.min(mu));
            let grants_count = g_bits.iter().filter(|&&b| b).count() as i64;
            let active_count = a_bits.iter().filter(|&&b| b).count() as i64;
            assert_eq!(
                (omega as i64 - mu as i64).abs(),
                (grants_count - active_count).abs()
            );
        }
    }

    #[test]
    fn cumulative_regret_is_nondecreasing() {
        let mut trace = MetricsTrace::new(5);
        let mut prev = 0;
        for (omega, mu) in [(1, 0), (2, 2), (0, 4), (5, 1)] {
            trace.push(omega, mu, &[0]);
            let cur = trace.cumulative_regret();
            assert!(cur >= prev);
            prev = cur;
        }
    }
}
