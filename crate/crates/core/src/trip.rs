//! Trust-region integer subproblem on a uniform grid.
//!
//! Minimize `Σ c_i (v_i − ṽ_i) + α Σ |v_i − v_{i−1}| − α TV(ṽ)` over level-valued
//! `v` with `h Σ |v_i − ṽ_i| ≤ Δ`. Since levels are integers the budget reduces to
//! an integer number of deviation units, and the problem becomes a shortest path
//! over states `(cell, level, units used)`.
//!
//! Ties are broken by: smaller budget used, then cell by cell from the right,
//! smaller `|v_i − ṽ_i|` and then smaller level index. Path costs are accumulated
//! left to right in the same order by both solvers, so they see identical floats.

use serde::{Deserialize, Serialize};

use crate::control::{Control, LevelSet};
use crate::error::{Error, Result};
use crate::model::ProblemInstance;

/// Largest number of candidate controls the exhaustive solver enumerates.
pub const BRUTEFORCE_LIMIT: u128 = 10_000_000;

const UNREACHABLE: u8 = u8::MAX;

/// Number of integer deviation units allowed by radius `delta` on cells of width `h`.
pub fn budget_units(delta: f64, h: f64) -> u64 {
    if !(delta > 0.0) || !(h > 0.0) {
        return 0;
    }
    let ratio = delta / h;
    let tol = 1e-12 * ratio.max(1.0);
    (ratio + tol).floor() as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripInstance {
    pub center: Control,
    pub coefficients: Vec<f64>,
    pub radius: f64,
    pub alpha: f64,
    pub levels: LevelSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripSolution {
    pub minimizer: Control,
    /// `Σ c_i (v*_i − ṽ_i) + α (TV(v*) − TV(ṽ))`.
    pub objective: f64,
    pub predicted_reduction: f64,
    /// `Σ |v*_i − ṽ_i|`.
    pub budget_used: u64,
}

impl TripInstance {
    pub fn new(
        center: Control,
        coefficients: Vec<f64>,
        radius: f64,
        alpha: f64,
        levels: LevelSet,
    ) -> Result<Self> {
        let inst = Self {
            center,
            coefficients,
            radius,
            alpha,
            levels,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if self.coefficients.len() != self.center.n_cells() {
            return Err(Error::InvalidSubproblem(format!(
                "{} coefficients for {} cells",
                self.coefficients.len(),
                self.center.n_cells()
            )));
        }
        if let Some(i) = self.coefficients.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidSubproblem(format!("coefficient {i} is not finite")));
        }
        if !(self.radius >= 0.0) || self.radius.is_nan() {
            return Err(Error::InvalidSubproblem(format!(
                "radius must be nonnegative, got {}",
                self.radius
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidSubproblem(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.levels.len() >= UNREACHABLE as usize {
            return Err(Error::InvalidSubproblem("too many levels".into()));
        }
        self.levels.validate(&self.center)
    }

    pub fn n_cells(&self) -> usize {
        self.center.n_cells()
    }

    /// Integer deviation budget, capped where the constraint stops binding.
    pub fn budget(&self) -> u64 {
        let cap = self.n_cells() as u64 * self.levels.span() as u64;
        budget_units(self.radius, self.center.grid().h()).min(cap)
    }

    fn step_cost(&self, cell: usize, previous: Option<i64>, value: i64) -> f64 {
        let dev = (value - self.center.values()[cell]) as f64;
        let jump = previous.map_or(0, |p| (value - p).abs()) as f64;
        self.alpha * jump + self.coefficients[cell] * dev
    }

    fn deviation(&self, cell: usize, value: i64) -> u64 {
        (value - self.center.values()[cell]).unsigned_abs()
    }

    /// Level indices ordered by closeness to the center value in `cell`, then index.
    fn preference(&self, cell: usize) -> Vec<usize> {
        let levels = self.levels.levels();
        let mut order: Vec<usize> = (0..levels.len()).collect();
        order.sort_by_key(|&m| (self.deviation(cell, levels[m]), m));
        order
    }

    fn finish(&self, values: Vec<i64>) -> Result<TripSolution> {
        let center = self.center.values();
        let linear: f64 = values
            .iter()
            .zip(center)
            .zip(&self.coefficients)
            .map(|((v, c), g)| g * (v - c) as f64)
            .sum();
        let minimizer = Control::new(*self.center.grid(), values)?;
        let tv_change = minimizer.total_variation() as i64 - self.center.total_variation() as i64;
        let objective = linear + self.alpha * tv_change as f64;
        if objective > 0.0 {
            // rounding can only lift a strictly better path above the center's zero
            return Ok(TripSolution {
                minimizer: self.center.clone(),
                objective: 0.0,
                predicted_reduction: 0.0,
                budget_used: 0,
            });
        }
        let budget_used = minimizer.l1_units(&self.center)?;
        Ok(TripSolution {
            minimizer,
            objective,
            predicted_reduction: -objective,
            budget_used,
        })
    }
}

/// Exact minimizer by dynamic programming in `O(N·M²·B)`.
pub fn solve_dp(inst: &TripInstance) -> Result<TripSolution> {
    inst.validate()?;
    let n = inst.n_cells();
    let levels = inst.levels.levels();
    let m_count = levels.len();
    let budget = inst.budget() as usize;
    let width = budget + 1;

    let mut cost = vec![f64::INFINITY; m_count * width];
    for m in 0..m_count {
        let dev = inst.deviation(0, levels[m]) as usize;
        if dev <= budget {
            cost[m * width + dev] = inst.step_cost(0, None, levels[m]);
        }
    }
    // predecessor level of each state, cells 1..n
    let mut pred = vec![UNREACHABLE; n.saturating_sub(1) * m_count * width];
    let mut next = vec![f64::INFINITY; m_count * width];
    for i in 1..n {
        let order = inst.preference(i - 1);
        let layer = &mut pred[(i - 1) * m_count * width..i * m_count * width];
        next.iter_mut().for_each(|c| *c = f64::INFINITY);
        for m in 0..m_count {
            let dev = inst.deviation(i, levels[m]) as usize;
            if dev > budget {
                continue;
            }
            let steps: Vec<f64> = (0..m_count)
                .map(|mp| inst.step_cost(i, Some(levels[mp]), levels[m]))
                .collect();
            for b in dev..width {
                let mut best = f64::INFINITY;
                let mut arg = UNREACHABLE;
                for &mp in &order {
                    let prev = cost[mp * width + b - dev];
                    if prev == f64::INFINITY {
                        continue;
                    }
                    let cand = prev + steps[mp];
                    if cand < best {
                        best = cand;
                        arg = mp as u8;
                    }
                }
                next[m * width + b] = best;
                layer[m * width + b] = arg;
            }
        }
        std::mem::swap(&mut cost, &mut next);
    }

    let order = inst.preference(n - 1);
    let mut best = (f64::INFINITY, 0usize, 0usize);
    for b in 0..width {
        for &m in &order {
            let c = cost[m * width + b];
            if c < best.0 {
                best = (c, m, b);
            }
        }
    }
    let (_, mut m, mut b) = best;
    let mut idx = vec![0usize; n];
    for i in (0..n).rev() {
        idx[i] = m;
        if i == 0 {
            break;
        }
        let prev = pred[(i - 1) * m_count * width + m * width + b];
        debug_assert_ne!(prev, UNREACHABLE);
        b -= inst.deviation(i, levels[m]) as usize;
        m = prev as usize;
    }
    inst.finish(idx.into_iter().map(|m| levels[m]).collect())
}

/// Exact minimizer by enumerating all `M^N` controls.
pub fn solve_bruteforce(inst: &TripInstance) -> Result<TripSolution> {
    inst.validate()?;
    let n = inst.n_cells();
    let levels = inst.levels.levels();
    let m_count = levels.len();
    let count = (m_count as u128)
        .checked_pow(n as u32)
        .filter(|&c| c <= BRUTEFORCE_LIMIT)
        .ok_or(Error::TooLarge {
            count: (m_count as u128).saturating_pow(n as u32),
            limit: BRUTEFORCE_LIMIT,
        })?;
    let budget = inst.budget();

    let mut best: Option<(f64, u64, Vec<usize>)> = None;
    let mut idx = vec![0usize; n];
    for _ in 0..count {
        let used: u64 = (0..n).map(|i| inst.deviation(i, levels[idx[i]])).sum();
        if used <= budget {
            let mut acc = 0.0;
            for i in 0..n {
                let previous = (i > 0).then(|| levels[idx[i - 1]]);
                acc += inst.step_cost(i, previous, levels[idx[i]]);
            }
            let better = match &best {
                None => true,
                Some((c, u, b)) => {
                    acc < *c || (acc == *c && (used, tail_key(inst, &idx)) < (*u, tail_key(inst, b)))
                }
            };
            if better {
                best = Some((acc, used, idx.clone()));
            }
        }
        // odometer increment
        for slot in idx.iter_mut() {
            *slot += 1;
            if *slot < m_count {
                break;
            }
            *slot = 0;
        }
    }
    let (_, _, idx) = best.expect("the center is always feasible");
    inst.finish(idx.into_iter().map(|m| levels[m]).collect())
}

fn tail_key(inst: &TripInstance, idx: &[usize]) -> Vec<(u64, usize)> {
    let levels = inst.levels.levels();
    idx.iter()
        .enumerate()
        .rev()
        .map(|(i, &m)| (inst.deviation(i, levels[m]), m))
        .collect()
}

/// Subproblem around `center` with coefficients `c_T = ∫_T ∇F(center)`.
pub fn assemble(center: &Control, model: &ProblemInstance, radius: f64) -> Result<TripInstance> {
    let eval = model.evaluate(center)?;
    let coefficients = model.gradient_cells(&eval, center.n_cells())?;
    TripInstance::new(
        center.clone(),
        coefficients,
        radius,
        model.alpha(),
        model.levels().clone(),
    )
}
