//! Stationarity at switching locations and exhaustive local optimality checks.
//!
//! The gradient of the tracking term is continuous here, so the point value at
//! each switch is the primary measure. One-sided window averages of the gradient
//! approximate the four Dini derivatives and are reported as diagnostics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::Control;
use crate::error::{Error, Result};
use crate::model::{Evaluation, ProblemInstance};

/// Largest neighborhood [`verify_r_optimality`] enumerates.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;

/// Window widths, as fractions of the finest cell width.
pub const WINDOW_FRACTIONS: [f64; 3] = [1.0, 0.5, 0.25];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchReport {
    pub time: f64,
    /// Value left of the switch and right of it.
    pub before: i64,
    pub after: i64,
    /// `∇F(v)(t_i)`.
    pub gradient: f64,
    /// `(1/w)∫_{t_i−w}^{t_i} ∇F(v)` for each window `w`.
    pub left_averages: Vec<f64>,
    /// `(1/w)∫_{t_i}^{t_i+w} ∇F(v)` for each window `w`.
    pub right_averages: Vec<f64>,
    pub upper_left: f64,
    pub lower_left: f64,
    pub upper_right: f64,
    pub lower_right: f64,
    /// Whether the window estimates satisfy the one-sided sign conditions.
    pub condition_holds: bool,
}

impl SwitchReport {
    /// All four window estimates share one strict sign, so they violate the
    /// sign conditions at every tested window.
    pub fn strictly_violated(&self) -> bool {
        let all = self.left_averages.iter().chain(&self.right_averages);
        all.clone().all(|&a| a > 0.0) || all.clone().all(|&a| a < 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub windows: Vec<f64>,
    pub switches: Vec<SwitchReport>,
    /// `ℓ2` norm of the gradient values at the switches.
    pub measure: f64,
}

/// `ℓ2` norm of `∇F(v)` at the switches of `control`, using a precomputed evaluation.
pub fn point_measure(model: &ProblemInstance, control: &Control, eval: &Evaluation) -> Result<f64> {
    let ratio = model.finest_cells() / control.n_cells();
    Ok(control
        .switch_boundaries()
        .into_iter()
        .map(|b| model.adjoint_at_boundary(&eval.residual, b * ratio).powi(2))
        .fold(0.0, |a, b| a + b)
        .sqrt())
}

/// Point values and Dini window estimates at every switch.
pub fn sl_measure(control: &Control, model: &ProblemInstance) -> Result<StationarityReport> {
    let eval = model.evaluate(control)?;
    let ratio = model.finest_cells() / control.n_cells();
    let hf = model.finest_grid().h();
    let windows: Vec<f64> = WINDOW_FRACTIONS.iter().map(|f| f * hf).collect();
    let quad = model.quadrature();
    let values = control.values();

    let mut switches = Vec::new();
    for b in control.switch_boundaries() {
        let t = control.grid().boundary(b);
        let gradient = model.adjoint_at_boundary(&eval.residual, b * ratio);
        let average = |a: f64, c: f64| -> Result<f64> {
            let mut acc = 0.0;
            for (&x, &w) in quad.unit_nodes().iter().zip(quad.unit_weights()) {
                acc += w * model.gradient_at(&eval, a + x * (c - a))?;
            }
            Ok(acc)
        };
        let left_averages = windows
            .iter()
            .map(|w| average(t - w, t))
            .collect::<Result<Vec<_>>>()?;
        let right_averages = windows
            .iter()
            .map(|w| average(t, t + w))
            .collect::<Result<Vec<_>>>()?;
        let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let (upper_left, lower_left) = (max(&left_averages), min(&left_averages));
        let (upper_right, lower_right) = (max(&right_averages), min(&right_averages));
        let (before, after) = (values[b - 1], values[b]);
        let condition_holds = if before < after {
            upper_left >= 0.0 && lower_right <= 0.0
        } else {
            lower_left <= 0.0 && upper_right >= 0.0
        };
        switches.push(SwitchReport {
            time: t,
            before,
            after,
            gradient,
            left_averages,
            right_averages,
            upper_left,
            lower_left,
            upper_right,
            lower_right,
            condition_holds,
        });
    }
    let measure = switches.iter().map(|s| s.gradient.powi(2)).fold(0.0, |a, b| a + b).sqrt();
    Ok(StationarityReport {
        windows,
        switches,
        measure,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodResult {
    pub optimal_in_neighborhood: bool,
    pub best_neighbor: Control,
    pub best_objective: f64,
    /// `J` of the tested control.
    pub objective: f64,
    /// `J(control) − best_objective`, never negative.
    pub gap: f64,
    pub neighborhood_size: u128,
}

/// Relative tolerance under which a neighbor does not count as an improvement.
pub const OPTIMALITY_RTOL: f64 = 1e-12;

/// Enumerates every level-valued control within `r_units` deviation units of
/// `control` and reports the best value of `J` among them.
pub fn verify_r_optimality(
    control: &Control,
    model: &ProblemInstance,
    r_units: u64,
) -> Result<NeighborhoodResult> {
    let eval = model.evaluate(control)?;
    let alpha = model.alpha();
    let objective = eval.objective + alpha * control.total_variation() as f64;
    let n = control.n_cells();
    let levels = model.levels().levels();
    let center = control.values();
    let budget = r_units as usize;

    // ways[i][b]: deviation vectors on cells i.. using at most b units
    let mut ways = vec![vec![1u128; budget + 1]; n + 1];
    for i in (0..n).rev() {
        for b in 0..=budget {
            let mut total: u128 = 0;
            for &l in levels {
                let d = (l - center[i]).unsigned_abs() as usize;
                if d <= b {
                    total = total.saturating_add(ways[i + 1][b - d]);
                }
            }
            ways[i][b] = total;
        }
    }
    let neighborhood_size = ways[0][budget];
    if neighborhood_size > ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            count: neighborhood_size,
            limit: ENUMERATION_LIMIT,
        });
    }

    let columns: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            model.apply_k(&e)
        })
        .collect::<Result<_>>()?;

    let search = Search {
        levels,
        center,
        columns: &columns,
        target: model.target_at_nodes(),
        weights: model.node_weights(),
        alpha,
        budget,
    };
    // first cell choices, in level order, split across threads
    let branches: Vec<(f64, Vec<i64>)> = levels
        .par_iter()
        .filter_map(|&l| {
            let d = (l - center[0]).unsigned_abs() as usize;
            (d <= budget).then(|| search.branch(&eval.state, l))
        })
        .collect();
    let mut best = (f64::INFINITY, Vec::new());
    for candidate in branches {
        if candidate.0 < best.0 {
            best = candidate;
        }
    }
    let (mut best_objective, best_values) = best;
    let mut best_neighbor = Control::new(*control.grid(), best_values)?;
    let mut gap = objective - best_objective;
    let optimal = gap <= OPTIMALITY_RTOL * objective.abs();
    if optimal {
        best_neighbor = control.clone();
        best_objective = objective.min(best_objective);
        gap = gap.max(0.0);
    }
    Ok(NeighborhoodResult {
        optimal_in_neighborhood: optimal,
        best_neighbor,
        best_objective,
        objective,
        gap,
        neighborhood_size,
    })
}

struct Search<'a> {
    levels: &'a [i64],
    center: &'a [i64],
    columns: &'a [Vec<f64>],
    target: &'a [f64],
    weights: &'a [f64],
    alpha: f64,
    budget: usize,
}

impl Search<'_> {
    fn branch(&self, base: &[f64], first: i64) -> (f64, Vec<i64>) {
        let n = self.center.len();
        let mut stack = vec![base.to_vec(); n + 1];
        let mut values = vec![0i64; n];
        let mut best = (f64::INFINITY, Vec::new());
        self.visit(0, first, self.budget, 0, &mut stack, &mut values, &mut best);
        best
    }

    #[allow(clippy::too_many_arguments)]
    fn visit(
        &self,
        cell: usize,
        value: i64,
        budget: usize,
        tv: u64,
        stack: &mut [Vec<f64>],
        values: &mut [i64],
        best: &mut (f64, Vec<i64>),
    ) {
        let d = value - self.center[cell];
        let budget = budget - d.unsigned_abs() as usize;
        let tv = if cell == 0 { tv } else { tv + (value - values[cell - 1]).unsigned_abs() };
        values[cell] = value;
        let (done, rest) = stack.split_at_mut(cell + 1);
        let state = &mut rest[0];
        if d == 0 {
            state.copy_from_slice(&done[cell]);
        } else {
            let df = d as f64;
            for ((s, p), c) in state.iter_mut().zip(&done[cell]).zip(&self.columns[cell]) {
                *s = p + df * c;
            }
        }
        if cell + 1 == values.len() {
            let f: f64 = state
                .iter()
                .zip(self.target)
                .zip(self.weights)
                .map(|((s, t), w)| w * (s - t) * (s - t))
                .sum::<f64>()
                * 0.5;
            let j = f + self.alpha * tv as f64;
            if j < best.0 {
                *best = (j, values.to_vec());
            }
            return;
        }
        for &l in self.levels {
            if (l - self.center[cell + 1]).unsigned_abs() as usize <= budget {
                self.visit(cell + 1, l, budget, tv, stack, values, best);
            }
        }
    }
}
