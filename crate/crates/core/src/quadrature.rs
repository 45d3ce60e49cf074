//! Composite Gauss–Legendre quadrature on the finest uniform decomposition.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

use crate::control::UniformGrid;
use crate::error::{Error, Result};

/// An `order`-point Gauss–Legendre rule replicated on every cell of a uniform grid.
///
/// Reference nodes live on `[0, 1]` and reference weights sum to one, so the
/// node `p` of cell `i` sits at `t0 + (i + x_p)·h` with weight `w_p·h`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    grid: UniformGrid,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn new(grid: UniformGrid, order: usize) -> Result<Self> {
        let (nodes, weights) = unit_rule(order)?;
        Ok(Self {
            grid,
            nodes,
            weights,
        })
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.grid.n_cells()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells() * self.order()
    }

    /// Reference nodes on `[0, 1]`, ascending.
    pub fn unit_nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Reference weights, summing to one.
    pub fn unit_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Position of node `p` in cell `i`.
    pub fn node(&self, cell: usize, p: usize) -> f64 {
        self.grid.t0() + (cell as f64 + self.nodes[p]) * self.grid.h()
    }

    /// Weight of node `p` in any cell.
    pub fn weight(&self, p: usize) -> f64 {
        self.weights[p] * self.grid.h()
    }

    /// All node positions, cell-major.
    pub fn all_nodes(&self) -> Vec<f64> {
        (0..self.n_cells())
            .flat_map(|i| (0..self.order()).map(move |p| (i, p)))
            .map(|(i, p)| self.node(i, p))
            .collect()
    }

    /// Node weights, cell-major; every cell carries the same weights.
    pub fn all_weights(&self) -> Vec<f64> {
        (0..self.n_cells())
            .flat_map(|_| (0..self.order()).map(|p| self.weight(p)))
            .collect()
    }

    /// Integrates `f` over `[a, b]` with the reference rule mapped onto that interval.
    pub fn integrate_interval(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let len = b - a;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(a + x * len))
            .sum::<f64>()
            * len
    }

    /// Composite integral of `f` over the whole grid.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        (0..self.n_cells())
            .map(|i| {
                (0..self.order())
                    .map(|p| self.weight(p) * f(self.node(i, p)))
                    .sum::<f64>()
            })
            .sum()
    }

    /// Lagrange basis values at the unit coordinate `x` for interpolation through the
    /// reference nodes of one cell.
    pub fn lagrange_basis(&self, x: f64) -> Vec<f64> {
        let n = &self.nodes;
        (0..n.len())
            .map(|j| {
                n.iter()
                    .enumerate()
                    .filter(|&(m, _)| m != j)
                    .map(|(_, &xm)| (x - xm) / (n[j] - xm))
                    .product()
            })
            .collect()
    }
}

/// Gauss–Legendre nodes and weights mapped to `[0, 1]`.
fn unit_rule(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let degree = NonZeroUsize::new(order)
        .ok_or_else(|| Error::InvalidModel("quadrature order must be positive".into()))?;
    let rule = GaussLegendre::new(degree);
    let mut pairs: Vec<(f64, f64)> = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}
