//! Dense two-phase simplex and the two problem builders used by the
//! control pipeline: the degree-of-infeasibility probe and the minimum
//! transmit-power allocator.
//!
//! The solver is deliberately small: dense tableau, Bland's anti-cycling
//! pivot rule, explicit iteration cap. Problems here have tens of
//! variables at most.

use crate::env::{FadingMatrix, ScenarioConfig};
use crate::error::{Error, Result};
use crate::powermodel::{BsPowerParams, ModeDecision, PowerAllocation};

/// Default pivot/feasibility tolerance.
pub const LP_TOL: f64 = 1e-9;

/// Outcome class of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Pivot budget exhausted before convergence.
    IterationLimit,
}

/// Minimize `c . x` subject to `a_ub . x <= b_ub` and per-variable lower
/// bounds (`Some(l)` for `x >= l`, `None` for a free variable). Free
/// variables are split into differences of two nonnegative ones
/// internally.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub c: Vec<f64>,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
    pub lower: Vec<Option<f64>>,
}

impl LpProblem {
    /// Problem with the default `x >= 0` bounds.
    pub fn new(c: Vec<f64>, a_ub: Vec<Vec<f64>>, b_ub: Vec<f64>) -> Self {
        let n = c.len();
        LpProblem {
            c,
            a_ub,
            b_ub,
            lower: vec![Some(0.0); n],
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.c.len();
        if self.lower.len() != n {
            return Err(Error::contract("lower bounds length != variable count"));
        }
        if self.a_ub.len() != self.b_ub.len() {
            return Err(Error::contract("constraint matrix/rhs row counts differ"));
        }
        for row in &self.a_ub {
            if row.len() != n {
                return Err(Error::contract("constraint row width != variable count"));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::contract("constraint coefficients must be finite"));
            }
        }
        if self.c.iter().any(|v| !v.is_finite())
            || self.b_ub.iter().any(|v| !v.is_finite())
            || self.lower.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(Error::contract("problem data must be finite"));
        }
        Ok(())
    }
}

/// Solution report. `x` and `objective` are only meaningful for
/// `Optimal`; other statuses carry an empty `x` and a NaN objective.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
}

impl LpSolution {
    fn non_optimal(status: LpStatus) -> Self {
        LpSolution {
            status,
            x: Vec::new(),
            objective: f64::NAN,
        }
    }
}

// Variable expansion bookkeeping: original variable -> tableau columns.
enum VarMap {
    /// Single column, value shifted by the lower bound.
    Shifted { col: usize, lower: f64 },
    /// Free variable split as plus - minus.
    Split { plus: usize, minus: usize },
}

/// Two-phase primal simplex with Bland's rule.
pub fn solve_lp(prob: &LpProblem, tol: f64) -> Result<LpSolution> {
    prob.validate()?;
    let n = prob.c.len();
    let m = prob.a_ub.len();

    // Expand variables to the nonnegative orthant.
    let mut maps = Vec::with_capacity(n);
    let mut n_e = 0usize;
    for lb in &prob.lower {
        match lb {
            Some(l) => {
                maps.push(VarMap::Shifted { col: n_e, lower: *l });
                n_e += 1;
            }
            None => {
                maps.push(VarMap::Split {
                    plus: n_e,
                    minus: n_e + 1,
                });
                n_e += 2;
            }
        }
    }

    let mut ec = vec![0.0; n_e];
    let mut ea = vec![vec![0.0; n_e]; m];
    let mut eb = prob.b_ub.clone();
    for (j, map) in maps.iter().enumerate() {
        match map {
            VarMap::Shifted { col, lower } => {
                ec[*col] = prob.c[j];
                for i in 0..m {
                    ea[i][*col] = prob.a_ub[i][j];
                    eb[i] -= prob.a_ub[i][j] * lower;
                }
            }
            VarMap::Split { plus, minus } => {
                ec[*plus] = prob.c[j];
                ec[*minus] = -prob.c[j];
                for i in 0..m {
                    ea[i][*plus] = prob.a_ub[i][j];
                    ea[i][*minus] = -prob.a_ub[i][j];
                }
            }
        }
    }

    // Slack per row; artificial for rows whose rhs was negative.
    let slack_start = n_e;
    let art_start = n_e + m;
    let mut n_art = 0usize;
    let mut art_col = vec![usize::MAX; m];
    for (i, b) in eb.iter().enumerate() {
        if *b < 0.0 {
            art_col[i] = art_start + n_art;
            n_art += 1;
        }
    }
    let n_cols = n_e + m + n_art;
    let width = n_cols + 1; // + rhs

    let mut tab: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut basic = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = vec![0.0; width];
        let negate = eb[i] < 0.0;
        let sign = if negate { -1.0 } else { 1.0 };
        for j in 0..n_e {
            row[j] = sign * ea[i][j];
        }
        row[slack_start + i] = sign;
        row[n_cols] = sign * eb[i];
        if negate {
            row[art_col[i]] = 1.0;
            basic.push(art_col[i]);
        } else {
            basic.push(slack_start + i);
        }
        tab.push(row);
    }

    // Phase-2 reduced costs (initial basis is all slack/artificial, cost 0,
    // so the raw costs are already reduced). Phase-1 costs: one per
    // artificial, priced out against the starting basis.
    let mut obj2 = vec![0.0; width];
    obj2[..n_e].copy_from_slice(&ec);
    let mut obj1 = vec![0.0; width];
    for c in art_start..n_cols {
        obj1[c] = 1.0;
    }
    for (i, row) in tab.iter().enumerate() {
        if basic[i] >= art_start {
            for j in 0..width {
                obj1[j] -= row[j];
            }
        }
    }

    let cap = 50 * (n_cols + m);
    let mut iters = 0usize;

    // Returns Some(status) on a terminal outcome, None when the phase
    // reaches its optimum.
    let mut pivot_loop = |tab: &mut Vec<Vec<f64>>,
                          basic: &mut Vec<usize>,
                          obj_a: &mut Vec<f64>,
                          obj_b: &mut Vec<f64>,
                          allow_artificial: bool|
     -> Option<LpStatus> {
        loop {
            if iters >= cap {
                return Some(LpStatus::IterationLimit);
            }
            // Bland: lowest-index column with a negative reduced cost.
            let limit = if allow_artificial { n_cols } else { art_start };
            let entering = (0..limit).find(|&j| obj_a[j] < -tol);
            let Some(j) = entering else {
                return None;
            };
            // Ratio test; ties broken by the lowest basic variable index.
            let mut pivot_row: Option<(usize, f64)> = None;
            for (i, row) in tab.iter().enumerate() {
                if row[j] > tol {
                    let ratio = row[n_cols].max(0.0) / row[j];
                    match pivot_row {
                        None => pivot_row = Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br || (ratio == br && basic[i] < basic[bi]) {
                                pivot_row = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((r, _)) = pivot_row else {
                return Some(LpStatus::Unbounded);
            };
            // Pivot on (r, j).
            let piv = tab[r][j];
            for v in tab[r].iter_mut() {
                *v /= piv;
            }
            let pivot_vals = tab[r].clone();
            for (i, row) in tab.iter_mut().enumerate() {
                if i != r && row[j] != 0.0 {
                    let factor = row[j];
                    for (v, pv) in row.iter_mut().zip(&pivot_vals) {
                        *v -= factor * pv;
                    }
                }
            }
            for obj in [&mut *obj_a, &mut *obj_b] {
                if obj[j] != 0.0 {
                    let factor = obj[j];
                    for (v, pv) in obj.iter_mut().zip(&pivot_vals) {
                        *v -= factor * pv;
                    }
                }
            }
            basic[r] = j;
            iters += 1;
        }
    };

    // Phase 1: drive the artificials to zero.
    if n_art > 0 {
        match pivot_loop(&mut tab, &mut basic, &mut obj1, &mut obj2, true) {
            Some(LpStatus::IterationLimit) => {
                return Ok(LpSolution::non_optimal(LpStatus::IterationLimit))
            }
            Some(LpStatus::Unbounded) => {
                // A sum of nonnegative variables cannot be unbounded below.
                return Err(Error::Solver("phase-1 reported unbounded".into()));
            }
            _ => {}
        }
        let phase1_value = -obj1[n_cols];
        if phase1_value > tol {
            return Ok(LpSolution::non_optimal(LpStatus::Infeasible));
        }
        // Remove artificials from the basis: pivot them out where
        // possible, drop redundant rows otherwise.
        let mut i = 0;
        while i < tab.len() {
            if basic[i] >= art_start {
                let col = (0..art_start).find(|&j| tab[i][j].abs() > tol);
                match col {
                    Some(j) => {
                        let piv = tab[i][j];
                        for v in tab[i].iter_mut() {
                            *v /= piv;
                        }
                        let pivot_vals = tab[i].clone();
                        for (r, row) in tab.iter_mut().enumerate() {
                            if r != i && row[j] != 0.0 {
                                let factor = row[j];
                                for (v, pv) in row.iter_mut().zip(&pivot_vals) {
                                    *v -= factor * pv;
                                }
                            }
                        }
                        for obj in [&mut obj1, &mut obj2] {
                            if obj[j] != 0.0 {
                                let factor = obj[j];
                                for (v, pv) in obj.iter_mut().zip(&pivot_vals) {
                                    *v -= factor * pv;
                                }
                            }
                        }
                        basic[i] = j;
                        i += 1;
                    }
                    None => {
                        // Row is all-zero over real columns: redundant.
                        tab.remove(i);
                        basic.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
    }

    // Phase 2 on the original objective, artificials barred.
    match pivot_loop(&mut tab, &mut basic, &mut obj2, &mut obj1, false) {
        Some(LpStatus::IterationLimit) => {
            return Ok(LpSolution::non_optimal(LpStatus::IterationLimit))
        }
        Some(LpStatus::Unbounded) => return Ok(LpSolution::non_optimal(LpStatus::Unbounded)),
        _ => {}
    }

    // Extract the expanded solution, then undo the variable mapping.
    let mut xe = vec![0.0; n_cols];
    for (i, row) in tab.iter().enumerate() {
        xe[basic[i]] = row[n_cols].max(0.0);
    }
    let mut x = vec![0.0; n];
    for (j, map) in maps.iter().enumerate() {
        x[j] = match map {
            VarMap::Shifted { col, lower } => xe[*col] + lower,
            VarMap::Split { plus, minus } => xe[*plus] - xe[*minus],
        };
    }
    let objective = prob.c.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        objective,
    })
}

/// Linearized rate-constraint coefficient of power variable `(m, j)` in
/// mobile `k`'s row: own-signal gain for `j == k`, interference scaled by
/// the SNR gap for `j != k`.
fn rate_row_coeff(h: &FadingMatrix, gap_k: f64, m: usize, j: usize, k: usize) -> f64 {
    if j == k {
        h.get(m, k)
    } else {
        -gap_k * h.get(m, k)
    }
}

/// Degree of infeasibility of mode vector `alpha`: the minimized worst
/// rate-constraint violation (in power units), together with the
/// violation-minimizing allocation.
///
/// Nonpositive value <=> the rate requirements are jointly satisfiable
/// under `alpha` within the per-station caps.
pub fn feasibility_value(
    h: &FadingMatrix,
    alpha: &ModeDecision,
    r_min: &[f64],
    sigma2: f64,
    cfg: &ScenarioConfig,
) -> Result<(f64, PowerAllocation)> {
    let (m_cnt, k_cnt) = (h.m(), h.k());
    if alpha.len() != m_cnt || r_min.len() != k_cnt {
        return Err(Error::contract("feasibility problem dimensions disagree"));
    }
    let params = BsPowerParams::homogeneous_sized(cfg, m_cnt);
    // Variables: p stacked mobile-major (idx = k * M + m), then the free
    // violation variable v. Rate rows are scaled by 1/sigma2 so the
    // tableau stays O(1) regardless of the physical noise floor; the
    // optimum is rescaled on return.
    let n_p = m_cnt * k_cnt;
    let n = n_p + 1;
    let mut c = vec![0.0; n];
    c[n_p] = 1.0;
    let mut a_ub = Vec::with_capacity(k_cnt + m_cnt);
    let mut b_ub = Vec::with_capacity(k_cnt + m_cnt);
    for k in 0..k_cnt {
        let gap = (2f64.powf(r_min[k]) - 1.0).max(0.0);
        let mut row = vec![0.0; n];
        for j in 0..k_cnt {
            for m in 0..m_cnt {
                row[j * m_cnt + m] = -rate_row_coeff(h, gap, m, j, k) / sigma2;
            }
        }
        row[n_p] = -1.0;
        a_ub.push(row);
        b_ub.push(-gap);
    }
    for m in 0..m_cnt {
        let mut row = vec![0.0; n];
        for k in 0..k_cnt {
            row[k * m_cnt + m] = 1.0;
        }
        a_ub.push(row);
        let cap = if alpha.is_active(m) {
            params.eta[m] * cfg.p_max
        } else {
            0.0
        };
        b_ub.push(cap);
    }
    let mut lower = vec![Some(0.0); n];
    lower[n_p] = None;
    let prob = LpProblem {
        c,
        a_ub,
        b_ub,
        lower,
    };
    let sol = solve_lp(&prob, LP_TOL)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Solver(format!(
            "feasibility probe ended with {:?}",
            sol.status
        )));
    }
    let mut p = PowerAllocation::zeros(m_cnt, k_cnt);
    for k in 0..k_cnt {
        for m in 0..m_cnt {
            let v = sol.x[k * m_cnt + m];
            if alpha.is_active(m) && v > LP_TOL {
                p.set(m, k, v);
            }
        }
    }
    Ok((sol.objective * sigma2, p))
}

/// Allocation status of the transmit-power problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocStatus {
    Optimal,
    Infeasible,
}

/// Result of the minimum transmit-power problem: sleeping stations carry
/// zero weight; `p_tx_total` is the amplifier-side objective value.
#[derive(Debug, Clone)]
pub struct Allocation {
    pub status: AllocStatus,
    pub p: PowerAllocation,
    pub p_tx_total: f64,
}

impl Allocation {
    pub fn is_feasible(&self) -> bool {
        self.status == AllocStatus::Optimal
    }
}

/// Minimizes total amplifier-side transmit power over the active set,
/// subject to the per-mobile rate requirements and the per-station caps.
pub fn allocate_power(
    h: &FadingMatrix,
    alpha: &ModeDecision,
    r_min: &[f64],
    sigma2: f64,
    cfg: &ScenarioConfig,
) -> Result<Allocation> {
    let (m_cnt, k_cnt) = (h.m(), h.k());
    if alpha.len() != m_cnt || r_min.len() != k_cnt {
        return Err(Error::contract("allocation problem dimensions disagree"));
    }
    let params = BsPowerParams::homogeneous_sized(cfg, m_cnt);
    let active = alpha.active_indices();
    let n_on = active.len();
    if n_on == 0 {
        // No transmitter: feasible only for vacuous requirements.
        let feasible = r_min.iter().all(|r| *r <= 0.0);
        return Ok(Allocation {
            status: if feasible {
                AllocStatus::Optimal
            } else {
                AllocStatus::Infeasible
            },
            p: PowerAllocation::zeros(m_cnt, k_cnt),
            p_tx_total: 0.0,
        });
    }
    // Variables restricted to active stations, mobile-major
    // (idx = k * n_on + i). Rate rows scaled by 1/sigma2 as above.
    let n = n_on * k_cnt;
    let mut c = vec![0.0; n];
    for k in 0..k_cnt {
        for (i, &m) in active.iter().enumerate() {
            c[k * n_on + i] = 1.0 / params.eta[m];
        }
    }
    let mut a_ub = Vec::with_capacity(k_cnt + n_on);
    let mut b_ub = Vec::with_capacity(k_cnt + n_on);
    for k in 0..k_cnt {
        let gap = (2f64.powf(r_min[k]) - 1.0).max(0.0);
        let mut row = vec![0.0; n];
        for j in 0..k_cnt {
            for (i, &m) in active.iter().enumerate() {
                row[j * n_on + i] = -rate_row_coeff(h, gap, m, j, k) / sigma2;
            }
        }
        a_ub.push(row);
        b_ub.push(-gap);
    }
    for (i, &m) in active.iter().enumerate() {
        let mut row = vec![0.0; n];
        for k in 0..k_cnt {
            row[k * n_on + i] = 1.0;
        }
        a_ub.push(row);
        b_ub.push(params.eta[m] * cfg.p_max);
    }
    let prob = LpProblem::new(c, a_ub, b_ub);
    let sol = solve_lp(&prob, LP_TOL)?;
    match sol.status {
        LpStatus::Optimal => {
            let mut p = PowerAllocation::zeros(m_cnt, k_cnt);
            for k in 0..k_cnt {
                for (i, &m) in active.iter().enumerate() {
                    let v = sol.x[k * n_on + i];
                    if v > LP_TOL {
                        p.set(m, k, v);
                    }
                }
            }
            Ok(Allocation {
                status: AllocStatus::Optimal,
                p,
                p_tx_total: sol.objective,
            })
        }
        LpStatus::Infeasible => Ok(Allocation {
            status: AllocStatus::Infeasible,
            p: PowerAllocation::zeros(m_cnt, k_cnt),
            p_tx_total: 0.0,
        }),
        other => Err(Error::Solver(format!(
            "power allocation ended with {other:?}"
        ))),
    }
}
