//! Per-mobile rates, the three-part power ledger, and the slot reward.

use serde::{Deserialize, Serialize};

use crate::env::{FadingMatrix, ScenarioConfig};
use crate::error::{Error, Result};

/// Penalty reward for a slot whose mode decision cannot serve the mobiles.
pub const INFEASIBLE_PENALTY: f64 = -1000.0;

/// Per-station active/sleep decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeDecision {
    alpha: Vec<bool>,
}

impl ModeDecision {
    pub fn new(alpha: Vec<bool>) -> Self {
        ModeDecision { alpha }
    }

    pub fn all_on(m: usize) -> Self {
        ModeDecision {
            alpha: vec![true; m],
        }
    }

    pub fn all_off(m: usize) -> Self {
        ModeDecision {
            alpha: vec![false; m],
        }
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn is_active(&self, m: usize) -> bool {
        self.alpha[m]
    }

    pub fn set(&mut self, m: usize, active: bool) {
        self.alpha[m] = active;
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.alpha.iter().copied()
    }

    pub fn n_active(&self) -> usize {
        self.alpha.iter().filter(|a| **a).count()
    }

    /// Indices of active stations, ascending.
    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.alpha.len()).filter(|&m| self.alpha[m]).collect()
    }

    /// Number of stations whose mode differs from `other`.
    pub fn hamming(&self, other: &ModeDecision) -> usize {
        self.alpha
            .iter()
            .zip(&other.alpha)
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// M-by-K matrix of nonnegative power weights (W), row-major by station.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    m: usize,
    k: usize,
    p: Vec<f64>,
}

impl PowerAllocation {
    pub fn zeros(m: usize, k: usize) -> Self {
        PowerAllocation {
            m,
            k,
            p: vec![0.0; m * k],
        }
    }

    pub fn new(m: usize, k: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != m * k {
            return Err(Error::contract(format!(
                "allocation needs {} entries, got {}",
                m * k,
                p.len()
            )));
        }
        if p.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::contract("power weights must be finite and >= 0"));
        }
        Ok(PowerAllocation { m, k, p })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, m: usize, k: usize) -> f64 {
        self.p[m * self.k + k]
    }

    pub fn set(&mut self, m: usize, k: usize, v: f64) {
        self.p[m * self.k + k] = v;
    }

    /// Total power weight emitted by station `m`.
    pub fn row_sum(&self, m: usize) -> f64 {
        self.p[m * self.k..(m + 1) * self.k].iter().sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }
}

/// Network power totals for one slot (W). `p_tot` is always the sum of
/// the three components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBreakdown {
    pub p_tx: f64,
    pub p_mode: f64,
    pub p_trans: f64,
    pub p_tot: f64,
}

/// Per-station power parameters. The scenario carries scalars; this type
/// keeps one entry per station so heterogeneous hardware stays a config
/// change rather than an API change.
#[derive(Debug, Clone, PartialEq)]
pub struct BsPowerParams {
    pub eta: Vec<f64>,
    pub p_on: Vec<f64>,
    pub p_off: Vec<f64>,
    pub rho_trans: Vec<f64>,
}

impl BsPowerParams {
    pub fn homogeneous(cfg: &ScenarioConfig) -> Self {
        Self::homogeneous_sized(cfg, cfg.m)
    }

    /// Homogeneous parameters sized to an explicit station count (the
    /// gain matrix may be smaller than `cfg.m` in padded evaluations).
    pub fn homogeneous_sized(cfg: &ScenarioConfig, m: usize) -> Self {
        BsPowerParams {
            eta: vec![cfg.eta; m],
            p_on: vec![cfg.p_on; m],
            p_off: vec![cfg.p_off; m],
            rho_trans: vec![cfg.rho_trans; m],
        }
    }
}

/// Achieved rate (bps/Hz) of every mobile under allocation `p`.
///
/// Signal is the gain-weighted power aimed at the mobile; everything
/// aimed at other mobiles arrives as interference through the same gain
/// column.
pub fn compute_rates(p: &PowerAllocation, h: &FadingMatrix, sigma2: f64) -> Vec<f64> {
    let (m_cnt, k_cnt) = (h.m(), h.k());
    debug_assert_eq!(p.m(), m_cnt);
    debug_assert_eq!(p.k(), k_cnt);
    let mut rates = Vec::with_capacity(k_cnt);
    for k in 0..k_cnt {
        let mut signal = 0.0;
        let mut interference = 0.0;
        for j in 0..k_cnt {
            let mut received = 0.0;
            for m in 0..m_cnt {
                received += p.get(m, j) * h.get(m, k);
            }
            if j == k {
                signal = received;
            } else {
                interference += received;
            }
        }
        rates.push((1.0 + signal / (interference + sigma2)).log2());
    }
    rates
}

/// Splits one slot's network power into transmit, maintenance, and
/// transition parts.
///
/// Fails if a sleeping station carries nonzero power weight.
pub fn power_breakdown(
    p: &PowerAllocation,
    alpha: &ModeDecision,
    alpha_prev: &ModeDecision,
    cfg: &ScenarioConfig,
) -> Result<PowerBreakdown> {
    power_breakdown_with(p, alpha, alpha_prev, &BsPowerParams::homogeneous(cfg))
}

pub fn power_breakdown_with(
    p: &PowerAllocation,
    alpha: &ModeDecision,
    alpha_prev: &ModeDecision,
    params: &BsPowerParams,
) -> Result<PowerBreakdown> {
    let m_cnt = alpha.len();
    if p.m() != m_cnt || alpha_prev.len() != m_cnt || params.eta.len() != m_cnt {
        return Err(Error::contract("power breakdown dimensions disagree"));
    }
    let mut p_tx = 0.0;
    let mut p_mode = 0.0;
    let mut p_trans = 0.0;
    for m in 0..m_cnt {
        let row = p.row_sum(m);
        if !alpha.is_active(m) && row > 0.0 {
            return Err(Error::contract(format!(
                "sleeping station {m} carries {row} W of transmit weight"
            )));
        }
        p_tx += row / params.eta[m];
        p_mode += if alpha.is_active(m) {
            params.p_on[m]
        } else {
            params.p_off[m]
        };
        if alpha.is_active(m) != alpha_prev.is_active(m) {
            p_trans += params.rho_trans[m];
        }
    }
    Ok(PowerBreakdown {
        p_tx,
        p_mode,
        p_trans,
        p_tot: p_tx + p_mode + p_trans,
    })
}

/// Slot reward: saving against the all-on reference when the decision is
/// feasible, a fixed strong penalty otherwise.
pub fn reward(breakdown: &PowerBreakdown, p_all_on: f64, feasible: bool) -> f64 {
    if feasible {
        p_all_on - breakdown.p_tot
    } else {
        INFEASIBLE_PENALTY
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(m: usize, k: usize, v: f64) -> FadingMatrix {
        FadingMatrix::new(m, k, vec![v; m * k]).unwrap()
    }

    #[test]
    fn single_link_rate_is_one_bit() {
        let h = matrix(1, 1, 1.0);
        let p = PowerAllocation::new(1, 1, vec![1.0]).unwrap();
        let r = compute_rates(&p, &h, 1.0);
        assert!((r[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn one_interferer_halves_the_sinr() {
        let h = matrix(1, 2, 1.0);
        let p = PowerAllocation::new(1, 2, vec![1.0, 1.0]).unwrap();
        let r = compute_rates(&p, &h, 1.0);
        // log2(1 + 1/(1+1)) = log2(1.5)
        assert!((r[0] - 0.5849625007211562).abs() < 1e-15);
        assert!((r[1] - 0.5849625007211562).abs() < 1e-15);
    }

    #[test]
    fn zero_power_means_zero_rates() {
        let h = matrix(3, 2, 1e-9);
        let p = PowerAllocation::zeros(3, 2);
        assert!(compute_rates(&p, &h, 1e-11).iter().all(|r| *r == 0.0));
    }

    #[test]
    fn maintenance_power_of_ten_active_stations() {
        let mut cfg = ScenarioConfig::paper();
        cfg.r_min = vec![0.2; cfg.k];
        let p = PowerAllocation::zeros(10, 4);
        let alpha = ModeDecision::all_on(10);
        let b = power_breakdown(&p, &alpha, &alpha, &cfg).unwrap();
        assert!((b.p_mode - 68.0).abs() < 1e-12);
        assert_eq!(b.p_tx, 0.0);
        assert_eq!(b.p_trans, 0.0);
    }

    #[test]
    fn no_transition_power_when_modes_repeat() {
        let cfg = ScenarioConfig::desk();
        let p = PowerAllocation::zeros(6, 2);
        let alpha = ModeDecision::new(vec![true, false, true, true, false, true]);
        let b = power_breakdown(&p, &alpha, &alpha, &cfg).unwrap();
        assert_eq!(b.p_trans, 0.0);
    }

    #[test]
    fn single_flip_costs_rho() {
        let cfg = ScenarioConfig::desk();
        let p = PowerAllocation::zeros(6, 2);
        let prev = ModeDecision::all_on(6);
        let mut alpha = ModeDecision::all_on(6);
        alpha.set(3, false);
        let b = power_breakdown(&p, &alpha, &prev, &cfg).unwrap();
        assert!((b.p_trans - 3.0).abs() < 1e-12);
    }

    #[test]
    fn transition_power_is_rho_times_hamming() {
        let cfg = ScenarioConfig::desk();
        let p = PowerAllocation::zeros(6, 2);
        let prev = ModeDecision::new(vec![true, true, false, false, true, true]);
        let alpha = ModeDecision::new(vec![false, true, true, false, false, true]);
        let b = power_breakdown(&p, &alpha, &prev, &cfg).unwrap();
        let expected = cfg.rho_trans * alpha.hamming(&prev) as f64;
        assert!((b.p_trans - expected).abs() < 1e-12);
    }

    #[test]
    fn sleeping_station_with_power_is_rejected() {
        let cfg = ScenarioConfig::desk();
        let mut p = PowerAllocation::zeros(6, 2);
        p.set(2, 0, 0.1);
        let mut alpha = ModeDecision::all_on(6);
        alpha.set(2, false);
        let prev = ModeDecision::all_on(6);
        assert!(matches!(
            power_breakdown(&p, &alpha, &prev, &cfg),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn reward_cases() {
        let b = PowerBreakdown {
            p_tx: 1.0,
            p_mode: 40.0,
            p_trans: 0.0,
            p_tot: 41.0,
        };
        assert_eq!(reward(&b, 41.0, true), 0.0);
        assert_eq!(reward(&b, 46.0, true), 5.0);
        assert_eq!(reward(&b, 46.0, false), INFEASIBLE_PENALTY);
    }

    #[test]
    fn reward_plus_total_equals_reference_when_feasible() {
        let b = PowerBreakdown {
            p_tx: 2.5,
            p_mode: 30.8,
            p_trans: 3.0,
            p_tot: 36.3,
        };
        let p_ref = 43.2;
        assert!((reward(&b, p_ref, true) + b.p_tot - p_ref).abs() < 1e-12);
    }
}
