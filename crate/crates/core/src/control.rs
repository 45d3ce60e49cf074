//! Integer-valued piecewise-constant controls on uniform grids of an interval.
//!
//! A [`Control`] stores one integer level value per grid cell. Its total
//! variation only counts jumps across interior cell boundaries, so it is
//! always a nonnegative integer and differences of total variations between
//! feasible controls are integers as well.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The admissible control values, strictly ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<i64>", into = "Vec<i64>")]
pub struct LevelSet {
    levels: Vec<i64>,
}

impl LevelSet {
    pub fn new(levels: Vec<i64>) -> Result<Self> {
        if levels.len() < 2 || levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidLevels(levels));
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[i64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn min(&self) -> i64 {
        self.levels[0]
    }

    pub fn max(&self) -> i64 {
        self.levels[self.levels.len() - 1]
    }

    /// Largest possible jump `ν_M − ν_1`.
    pub fn span(&self) -> i64 {
        self.max() - self.min()
    }

    pub fn index_of(&self, value: i64) -> Option<usize> {
        self.levels.binary_search(&value).ok()
    }

    pub fn contains(&self, value: i64) -> bool {
        self.index_of(value).is_some()
    }

    /// Checks that every cell value of `control` is admissible.
    pub fn validate(&self, control: &Control) -> Result<()> {
        match control.values.iter().position(|&v| !self.contains(v)) {
            Some(cell) => Err(Error::Infeasible {
                cell,
                value: control.values[cell],
            }),
            None => Ok(()),
        }
    }
}

impl TryFrom<Vec<i64>> for LevelSet {
    type Error = Error;

    fn try_from(levels: Vec<i64>) -> Result<Self> {
        Self::new(levels)
    }
}

impl From<LevelSet> for Vec<i64> {
    fn from(set: LevelSet) -> Self {
        set.levels
    }
}

#[derive(Deserialize)]
struct GridData {
    t0: f64,
    tf: f64,
    n_cells: usize,
}

/// Equidistant partition of `(t0, tf)` into `n_cells` intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridData")]
pub struct UniformGrid {
    t0: f64,
    tf: f64,
    n_cells: usize,
}

impl TryFrom<GridData> for UniformGrid {
    type Error = Error;

    fn try_from(data: GridData) -> Result<Self> {
        Self::new(data.t0, data.tf, data.n_cells)
    }
}

impl UniformGrid {
    pub fn new(t0: f64, tf: f64, n_cells: usize) -> Result<Self> {
        if !(t0.is_finite() && tf.is_finite() && tf > t0) {
            return Err(Error::InvalidGrid(format!(
                "need finite t0 < tf, got ({t0}, {tf})"
            )));
        }
        if n_cells == 0 {
            return Err(Error::InvalidGrid("need at least one cell".into()));
        }
        Ok(Self { t0, tf, n_cells })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn tf(&self) -> f64 {
        self.tf
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn length(&self) -> f64 {
        self.tf - self.t0
    }

    /// Cell width `h`.
    pub fn h(&self) -> f64 {
        (self.tf - self.t0) / self.n_cells as f64
    }

    /// Boundary `b` for `b ∈ 0..=n_cells`; the last boundary is exactly `tf`.
    pub fn boundary(&self, b: usize) -> f64 {
        if b == self.n_cells {
            self.tf
        } else {
            self.t0 + b as f64 * self.h()
        }
    }

    /// Closed-open extent `[start, end)` of cell `i`.
    pub fn cell_bounds(&self, i: usize) -> (f64, f64) {
        (self.boundary(i), self.boundary(i + 1))
    }

    pub fn with_cells(&self, n_cells: usize) -> Result<Self> {
        Self::new(self.t0, self.tf, n_cells)
    }

    fn describe(&self) -> String {
        format!("({}, {}) with {} cells", self.t0, self.tf, self.n_cells)
    }

    fn ensure_same(&self, other: &Self) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left: self.describe(),
                right: other.describe(),
            })
        }
    }
}

#[derive(Deserialize)]
struct ControlData {
    #[serde(flatten)]
    grid: UniformGrid,
    values: Vec<i64>,
}

/// A piecewise-constant integer control, one value per grid cell.
///
/// Serialized as `{t0, tf, n_cells, values: [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ControlData")]
pub struct Control {
    #[serde(flatten)]
    grid: UniformGrid,
    values: Vec<i64>,
}

impl TryFrom<ControlData> for Control {
    type Error = Error;

    fn try_from(data: ControlData) -> Result<Self> {
        Self::new(data.grid, data.values)
    }
}

impl Control {
    pub fn new(grid: UniformGrid, values: Vec<i64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::InvalidGrid(format!(
                "{} values for a grid of {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: UniformGrid, value: i64) -> Self {
        Self {
            grid,
            values: vec![value; grid.n_cells()],
        }
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn n_cells(&self) -> usize {
        self.values.len()
    }

    /// Sum of absolute jumps across interior cell boundaries.
    pub fn total_variation(&self) -> u64 {
        self.values
            .windows(2)
            .map(|w| (w[1] - w[0]).unsigned_abs())
            .sum()
    }

    /// `h · Σ |a_i − b_i|`.
    pub fn l1_distance(&self, other: &Control) -> Result<f64> {
        Ok(self.l1_units(other)? as f64 * self.grid.h())
    }

    /// `Σ |a_i − b_i|`, the L¹ distance in units of the cell width.
    pub fn l1_units(&self, other: &Control) -> Result<u64> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).unsigned_abs())
            .sum())
    }

    /// Replicates every cell `factor` times. The represented function is unchanged.
    pub fn refine(&self, factor: usize) -> Result<Control> {
        if factor == 0 {
            return Err(Error::InvalidRefinement);
        }
        let grid = self.grid.with_cells(self.grid.n_cells() * factor)?;
        let values = self
            .values
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, factor))
            .collect();
        Ok(Control { grid, values })
    }

    /// Same function expressed on a grid with `n_cells` cells, a multiple of the current count.
    pub fn refine_to(&self, n_cells: usize) -> Result<Control> {
        if !n_cells.is_multiple_of(self.n_cells()) {
            return Err(Error::Incompatible {
                cells: self.n_cells(),
                finest: n_cells,
            });
        }
        self.refine(n_cells / self.n_cells())
    }

    /// Cell-boundary indices `b` (in `1..n_cells`) where the value changes.
    pub fn switch_boundaries(&self) -> Vec<usize> {
        (1..self.values.len())
            .filter(|&b| self.values[b] != self.values[b - 1])
            .collect()
    }

    pub fn to_step_representation(&self) -> StepRepresentation {
        let boundaries = self.switch_boundaries();
        let mut heights = Vec::with_capacity(boundaries.len() + 1);
        heights.push(self.values[0]);
        heights.extend(boundaries.iter().map(|&b| self.values[b]));
        StepRepresentation {
            switch_times: boundaries.iter().map(|&b| self.grid.boundary(b)).collect(),
            heights,
        }
    }

    /// Writes `cell_start,cell_end,value` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["cell_start", "cell_end", "value"])?;
        for (i, v) in self.values.iter().enumerate() {
            let (a, b) = self.grid.cell_bounds(i);
            out.write_record([a.to_string(), b.to_string(), v.to_string()])?;
        }
        out.flush().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(())
    }
}

/// Switch locations `t_1 < … < t_{K−1}` and heights `a_1, …, a_K` with `a_i ≠ a_{i+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRepresentation {
    pub switch_times: Vec<f64>,
    pub heights: Vec<i64>,
}

impl StepRepresentation {
    pub fn n_switches(&self) -> usize {
        self.switch_times.len()
    }

    /// `Σ |a_{i+1} − a_i|`.
    pub fn total_variation(&self) -> u64 {
        self.heights
            .windows(2)
            .map(|w| (w[1] - w[0]).unsigned_abs())
            .sum()
    }

    /// Samples the step function at every cell midpoint of `grid`.
    pub fn to_control(&self, grid: UniformGrid) -> Control {
        let h = grid.h();
        let values = (0..grid.n_cells())
            .map(|i| {
                let mid = grid.t0() + (i as f64 + 0.5) * h;
                let segment = self.switch_times.partition_point(|&t| t <= mid);
                self.heights[segment]
            })
            .collect();
        Control { grid, values }
    }
}
