//! Tracking objective `F(v) = ½‖k ∗ v − f‖²` for a causal convolution and its gradient.
//!
//! Every integral is evaluated on a fixed finest decomposition with a composite
//! Gauss–Legendre rule. Working controls on coarser grids are broadcast onto that
//! decomposition first, so objective values are comparable across grids.
//!
//! The grid is uniform, so the influence of finest cell `j` on quadrature node
//! `p` of cell `i` only depends on `i − j` and `p`. Its running sums over `i − j`
//! are tabulated once per instance. A control is then applied as a sum of its
//! jumps times shifted copies of that table, and the discrete adjoint is a
//! corresponding sequence of dot products.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::control::{Control, LevelSet, UniformGrid};
use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Convolution kernel `k`, taken as zero outside `(0, support)`.
#[derive(Clone)]
pub struct ConvolutionKernel {
    support: f64,
    f: ScalarFn,
}

impl ConvolutionKernel {
    pub fn new(support: f64, f: ScalarFn) -> Self {
        Self { support, f }
    }

    /// Damped oscillator response
    /// `k(t) = −a·ω₀·e^{−ω₀(t−1)/√2}·(cos(ω₀(t−1)/√2 − π/4) + sin(ω₀(t−1)/√2 − π/4))`.
    pub fn damped_oscillator(amplitude: f64, omega0: f64, support: f64) -> Self {
        use std::f64::consts::{FRAC_PI_4, SQRT_2};
        let f = move |t: f64| {
            let arg = omega0 * (t - 1.0) / SQRT_2;
            let decay = (-arg).exp();
            -amplitude
                * omega0
                * (decay * (arg - FRAC_PI_4).cos() + decay * (arg - FRAC_PI_4).sin())
        };
        Self::new(support, Arc::new(f))
    }

    pub fn support(&self) -> f64 {
        self.support
    }

    pub fn eval(&self, s: f64) -> f64 {
        if s <= 0.0 || s >= self.support {
            0.0
        } else {
            (self.f)(s)
        }
    }
}

impl fmt::Debug for ConvolutionKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConvolutionKernel")
            .field("support", &self.support)
            .finish_non_exhaustive()
    }
}

/// Tracked signal `f`.
#[derive(Clone)]
pub struct TargetSignal {
    f: ScalarFn,
}

impl TargetSignal {
    pub fn new(f: ScalarFn) -> Self {
        Self { f }
    }

    /// `amplitude · cos(2π·frequency·t)`.
    pub fn cosine(amplitude: f64, frequency: f64) -> Self {
        let w = 2.0 * std::f64::consts::PI * frequency;
        Self::new(Arc::new(move |t| amplitude * (w * t).cos()))
    }

    pub fn zero() -> Self {
        Self::new(Arc::new(|_| 0.0))
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }
}

impl fmt::Debug for TargetSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetSignal").finish_non_exhaustive()
    }
}

/// Serializable description of the convolution tracking instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceConfig {
    pub t0: f64,
    pub tf: f64,
    pub levels: Vec<i64>,
    pub alpha: f64,
    pub omega0: f64,
    pub kernel_amplitude: f64,
    pub target_amplitude: f64,
    pub target_frequency: f64,
    pub finest_cells: usize,
    pub quad_order: usize,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        Self {
            t0: -1.0,
            tf: 1.0,
            levels: vec![-2, -1, 0, 1, 2],
            alpha: 1e-4,
            omega0: std::f64::consts::PI,
            kernel_amplitude: 0.1,
            target_amplitude: 0.4,
            target_frequency: 1.0,
            finest_cells: 2048,
            quad_order: 5,
        }
    }
}

impl InstanceConfig {
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_finest_cells(mut self, finest_cells: usize) -> Self {
        self.finest_cells = finest_cells;
        self
    }

    pub fn build(&self) -> Result<ProblemInstance> {
        let grid = UniformGrid::new(self.t0, self.tf, self.finest_cells)?;
        let kernel =
            ConvolutionKernel::damped_oscillator(self.kernel_amplitude, self.omega0, grid.length());
        let target = if self.target_amplitude == 0.0 {
            TargetSignal::zero()
        } else {
            TargetSignal::cosine(self.target_amplitude, self.target_frequency)
        };
        ProblemInstance::new(
            LevelSet::new(self.levels.clone())?,
            self.alpha,
            kernel,
            target,
            QuadratureRule::new(grid, self.quad_order)?,
        )
    }
}

/// State, residual and objective of one control.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// `(k ∗ v)` at every quadrature node, cell-major.
    pub state: Vec<f64>,
    /// `k ∗ v − f` at every quadrature node.
    pub residual: Vec<f64>,
    /// `F(v)`.
    pub objective: f64,
}

/// Everything that defines `min F(v) + α·TV(v)` over level-valued controls.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    levels: LevelSet,
    alpha: f64,
    kernel: ConvolutionKernel,
    target: TargetSignal,
    quad: QuadratureRule,
    target_nodes: Vec<f64>,
    node_weights: Vec<f64>,
    // [d * order + p]: ∫_0^{(d + x_p) h} k, accumulated cell by cell
    influence_prefix: Vec<f64>,
    // [d * order + p]: k((d + x_p) h)
    node_kernel: Vec<f64>,
}

impl ProblemInstance {
    pub fn new(
        levels: LevelSet,
        alpha: f64,
        kernel: ConvolutionKernel,
        target: TargetSignal,
        quad: QuadratureRule,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidModel(format!("alpha must be positive, got {alpha}")));
        }
        let order = quad.order();
        let n = quad.n_cells();
        let h = quad.grid().h();
        let x = quad.unit_nodes().to_vec();

        let mut influence_prefix = vec![0.0; n * order];
        let mut node_kernel = vec![0.0; n * order];
        for p in 0..order {
            let mut acc = 0.0;
            for d in 0..n {
                let upper = (d as f64 + x[p]) * h;
                let lower = if d == 0 { 0.0 } else { (d as f64 - 1.0 + x[p]) * h };
                acc += quad.integrate_interval(lower, upper, |s| kernel.eval(s));
                influence_prefix[d * order + p] = acc;
                node_kernel[d * order + p] = kernel.eval(upper);
            }
        }

        let target_nodes = quad.all_nodes().into_iter().map(|t| target.eval(t)).collect();
        let node_weights = quad.all_weights();
        Ok(Self {
            levels,
            alpha,
            kernel,
            target,
            quad,
            target_nodes,
            node_weights,
            influence_prefix,
            node_kernel,
        })
    }

    pub fn levels(&self) -> &LevelSet {
        &self.levels
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Same instance with a different regularization weight.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidModel(format!("alpha must be positive, got {alpha}")));
        }
        let mut out = self.clone();
        out.alpha = alpha;
        Ok(out)
    }

    pub fn kernel(&self) -> &ConvolutionKernel {
        &self.kernel
    }

    pub fn target(&self) -> &TargetSignal {
        &self.target
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.quad
    }

    pub fn finest_grid(&self) -> &UniformGrid {
        self.quad.grid()
    }

    pub fn finest_cells(&self) -> usize {
        self.quad.n_cells()
    }

    pub fn target_at_nodes(&self) -> &[f64] {
        &self.target_nodes
    }

    pub fn node_weights(&self) -> &[f64] {
        &self.node_weights
    }

    /// Working grid with `n_cells` cells on the instance domain.
    pub fn working_grid(&self, n_cells: usize) -> Result<UniformGrid> {
        self.ensure_divides(n_cells)?;
        self.finest_grid().with_cells(n_cells)
    }

    fn ensure_divides(&self, n_cells: usize) -> Result<usize> {
        let finest = self.finest_cells();
        if n_cells == 0 || !finest.is_multiple_of(n_cells) {
            return Err(Error::Incompatible {
                cells: n_cells,
                finest,
            });
        }
        Ok(finest / n_cells)
    }

    /// Checks level membership and compatibility with the instance domain.
    pub fn check(&self, control: &Control) -> Result<()> {
        let g = control.grid();
        let fg = self.finest_grid();
        if g.t0() != fg.t0() || g.tf() != fg.tf() {
            return Err(Error::GridMismatch {
                left: format!("({}, {})", g.t0(), g.tf()),
                right: format!("({}, {})", fg.t0(), fg.tf()),
            });
        }
        self.ensure_divides(g.n_cells())?;
        self.levels.validate(control)
    }

    /// `(k ∗ v)` at all quadrature nodes for cell values `values` on a grid whose
    /// cell count divides the finest one.
    pub fn apply_k(&self, values: &[f64]) -> Result<Vec<f64>> {
        let ratio = self.ensure_divides(values.len())?;
        let order = self.quad.order();
        let total = self.quad.n_nodes();
        let mut state = vec![0.0; total];
        let mut previous = 0.0;
        for (cell, &v) in values.iter().enumerate() {
            let jump = v - previous;
            previous = v;
            if jump == 0.0 {
                continue;
            }
            let offset = cell * ratio * order;
            for (s, &w) in state[offset..]
                .iter_mut()
                .zip(&self.influence_prefix[..total - offset])
            {
                *s += jump * w;
            }
        }
        Ok(state)
    }

    pub fn evaluate_values(&self, values: &[f64]) -> Result<Evaluation> {
        let state = self.apply_k(values)?;
        let residual: Vec<f64> = state
            .iter()
            .zip(&self.target_nodes)
            .map(|(s, f)| s - f)
            .collect();
        let objective = 0.5 * self.inner(&residual, &residual);
        Ok(Evaluation {
            state,
            residual,
            objective,
        })
    }

    pub fn evaluate(&self, control: &Control) -> Result<Evaluation> {
        self.check(control)?;
        self.evaluate_values(&as_real(control))
    }

    /// `F(v)`.
    pub fn objective(&self, control: &Control) -> Result<f64> {
        Ok(self.evaluate(control)?.objective)
    }

    /// `J(v) = F(v) + α·TV(v)`.
    pub fn total_objective(&self, control: &Control) -> Result<f64> {
        Ok(self.objective(control)? + self.alpha * control.total_variation() as f64)
    }

    /// Quadrature `L²` inner product of two node-sampled functions.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.node_weights)
            .map(|((x, y), w)| w * x * y)
            .sum()
    }

    /// Cell integrals `∫_T K*s` over the `n_cells` cells of a working grid, where `s`
    /// is sampled at all quadrature nodes. This is the exact transpose of [`Self::apply_k`]
    /// with respect to the quadrature inner product.
    pub fn adjoint_cells(&self, samples: &[f64], n_cells: usize) -> Result<Vec<f64>> {
        let ratio = self.ensure_divides(n_cells)?;
        let order = self.quad.order();
        let total = self.quad.n_nodes();
        if samples.len() != total {
            return Err(Error::InvalidModel(format!(
                "expected {total} node samples, got {}",
                samples.len()
            )));
        }
        let weighted: Vec<f64> = samples
            .iter()
            .zip(&self.node_weights)
            .map(|(s, w)| s * w)
            .collect();
        // tail[c] = ∫ over everything right of working boundary c
        let tail: Vec<f64> = (0..=n_cells)
            .map(|c| {
                let offset = c * ratio * order;
                weighted[offset..]
                    .iter()
                    .zip(&self.influence_prefix[..total - offset])
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        Ok(tail.windows(2).map(|w| w[0] - w[1]).collect())
    }

    /// Per-cell gradient integrals `c_T = ∫_T ∇F(v)` on a working grid.
    pub fn gradient_cells(&self, eval: &Evaluation, n_cells: usize) -> Result<Vec<f64>> {
        self.adjoint_cells(&eval.residual, n_cells)
    }

    /// `(K*s)(t)` for the finest-grid boundary `b`, using the tabulated kernel.
    pub fn adjoint_at_boundary(&self, samples: &[f64], boundary: usize) -> f64 {
        let order = self.quad.order();
        let total = self.quad.n_nodes();
        let offset = boundary * order;
        samples[offset..]
            .iter()
            .zip(&self.node_weights[offset..])
            .zip(&self.node_kernel[..total - offset])
            .map(|((s, w), k)| s * w * k)
            .sum()
    }

    /// `(K*s)(t) = ∫_t^{tf} k(τ − t) s(τ) dτ` at an arbitrary point. Inside the cell
    /// containing `t`, `s` is interpolated through that cell's nodes.
    pub fn adjoint_at(&self, samples: &[f64], t: f64) -> Result<f64> {
        let grid = self.finest_grid();
        if !(t >= grid.t0() && t <= grid.tf()) {
            return Err(Error::OutsideDomain {
                t,
                t0: grid.t0(),
                tf: grid.tf(),
            });
        }
        let n = grid.n_cells();
        let h = grid.h();
        let pos = (t - grid.t0()) / h;
        let nearest = pos.round();
        if (pos - nearest).abs() <= 1e-12 * pos.max(1.0) {
            let b = nearest as usize;
            return Ok(if b >= n { 0.0 } else { self.adjoint_at_boundary(samples, b) });
        }
        let cell = (pos.floor() as usize).min(n - 1);
        let order = self.quad.order();
        let (_, cell_end) = grid.cell_bounds(cell);
        let local = &samples[cell * order..(cell + 1) * order];
        let partial = self.quad.integrate_interval(t, cell_end, |tau| {
            let basis = self.quad.lagrange_basis((tau - grid.boundary(cell)) / h);
            let s: f64 = basis.iter().zip(local).map(|(l, s)| l * s).sum();
            self.kernel.eval(tau - t) * s
        });
        let rest: f64 = ((cell + 1) * order..self.quad.n_nodes())
            .map(|q| {
                let tau = self.quad.node(q / order, q % order);
                self.node_weights[q] * self.kernel.eval(tau - t) * samples[q]
            })
            .sum();
        Ok(partial + rest)
    }

    /// `∇F(v)(t)`.
    pub fn gradient_at(&self, eval: &Evaluation, t: f64) -> Result<f64> {
        self.adjoint_at(&eval.residual, t)
    }

    /// `(K*s)` at every quadrature node.
    pub fn adjoint_samples(&self, samples: &[f64]) -> Vec<f64> {
        let order = self.quad.order();
        let n = self.finest_cells();
        let h = self.finest_grid().h();
        let x = self.quad.unit_nodes();
        let weighted: Vec<f64> = samples
            .iter()
            .zip(&self.node_weights)
            .map(|(s, w)| s * w)
            .collect();
        let mut out = vec![0.0; samples.len()];
        for p in 0..order {
            // k((d + x_q − x_p) h) for d ≥ 1, per source node q
            let tables: Vec<Vec<f64>> = (0..order)
                .map(|q| {
                    (0..n)
                        .map(|d| self.kernel.eval((d as f64 + x[q] - x[p]) * h))
                        .collect()
                })
                .collect();
            // partial piece [x_p, 1] of the node's own cell
            let sub: Vec<(f64, Vec<f64>)> = x
                .iter()
                .zip(self.quad.unit_weights())
                .map(|(&y, &w)| {
                    let u = x[p] + y * (1.0 - x[p]);
                    let kw = w * (1.0 - x[p]) * h * self.kernel.eval((u - x[p]) * h);
                    (kw, self.quad.lagrange_basis(u))
                })
                .collect();
            for i in 0..n {
                let local = &samples[i * order..(i + 1) * order];
                let mut acc: f64 = sub
                    .iter()
                    .map(|(kw, basis)| {
                        kw * basis.iter().zip(local).map(|(l, s)| l * s).sum::<f64>()
                    })
                    .sum();
                for (q, table) in tables.iter().enumerate() {
                    acc += (1..n - i)
                        .map(|d| weighted[(i + d) * order + q] * table[d])
                        .sum::<f64>();
                }
                out[i * order + p] = acc;
            }
        }
        out
    }

    /// `∇F(v)` at every quadrature node.
    pub fn gradient_samples(&self, eval: &Evaluation) -> Vec<f64> {
        self.adjoint_samples(&eval.residual)
    }
}

/// Cell values of a control as reals.
pub fn as_real(control: &Control) -> Vec<f64> {
    control.values().iter().map(|&v| v as f64).collect()
}
