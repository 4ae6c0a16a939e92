//! Empirical occupancy (visit-count) histograms over two state coordinates.

use serde::{Deserialize, Serialize};

use crate::env::{EnvSpec, Trajectory};
use crate::error::{Error, Result};

/// A regular `rows x cols` grid over coordinates `(x_coord, y_coord)`.
/// Columns index `x`, rows index `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_coord: usize,
    pub y_coord: usize,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub cols: usize,
    pub rows: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo < hi;
        if self.cols == 0 || self.rows == 0 || !ok(self.x_range) || !ok(self.y_range) {
            return Err(Error::Config(format!("invalid occupancy grid {self:?}")));
        }
        Ok(())
    }

    fn bin(v: f64, (lo, hi): (f64, f64), n: usize) -> usize {
        let t = ((v - lo) / (hi - lo) * n as f64).floor();
        if t.is_nan() || t < 0.0 {
            0
        } else {
            (t as usize).min(n - 1)
        }
    }

    /// `bins x bins` over the first two state coordinates: `[-2, 2]^2` for the
    /// double well, position by velocity for mountain car. A one-dimensional
    /// well gets a single row.
    pub fn for_env(env: &EnvSpec, bins: usize) -> Self {
        match env {
            EnvSpec::DoubleWell(c) if c.dim() == 1 => {
                Self { x_coord: 0, y_coord: 0, x_range: (-2.0, 2.0), y_range: (-2.0, 2.0), cols: bins, rows: 1 }
            }
            EnvSpec::DoubleWell(_) => {
                Self { x_coord: 0, y_coord: 1, x_range: (-2.0, 2.0), y_range: (-2.0, 2.0), cols: bins, rows: bins }
            }
            EnvSpec::MountainCar(_) => {
                Self { x_coord: 0, y_coord: 1, x_range: (-1.2, 0.6), y_range: (-0.07, 0.07), cols: bins, rows: bins }
            }
        }
    }

    /// Cell of a state; states outside the grid fall into the nearest border cell.
    pub fn cell(&self, s: &[f64]) -> (usize, usize) {
        (Self::bin(s[self.y_coord], self.y_range, self.rows), Self::bin(s[self.x_coord], self.x_range, self.cols))
    }
}

/// Visit counts per cell, terminal states included, so the total equals
/// `sum_k (N_k + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyHistogram {
    pub grid: GridSpec,
    /// Row-major counts.
    pub counts: Vec<u64>,
    pub total: u64,
}

impl OccupancyHistogram {
    pub fn new(grid: GridSpec) -> Result<Self> {
        grid.validate()?;
        let cells = grid.rows * grid.cols;
        Ok(Self { grid, counts: vec![0; cells], total: 0 })
    }

    pub fn from_batch(batch: &[Trajectory], grid: GridSpec) -> Result<Self> {
        let mut h = Self::new(grid)?;
        for traj in batch {
            h.add(traj)?;
        }
        Ok(h)
    }

    pub fn add(&mut self, traj: &Trajectory) -> Result<()> {
        let need = self.grid.x_coord.max(self.grid.y_coord) + 1;
        if traj.state_dim() < need {
            return Err(Error::DimensionMismatch { expected: need, got: traj.state_dim() });
        }
        for s in traj.states() {
            let (r, c) = self.grid.cell(s);
            self.counts[r * self.grid.cols + c] += 1;
            self.total += 1;
        }
        Ok(())
    }

    pub fn count(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.grid.cols + col]
    }

    /// Counts divided by the total; sums to one for a nonempty histogram.
    pub fn normalized(&self) -> Vec<f64> {
        let t = self.total.max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }

    /// CSV with header `row,col,count,normalized`, one line per cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,count,normalized\n");
        for (i, (&c, p)) in self.counts.iter().zip(self.normalized()).enumerate() {
            let (r, col) = (i / self.grid.cols, i % self.grid.cols);
            out.push_str(&format!("{r},{col},{c},{p}\n"));
        }
        out
    }
}

/// `occupancy_histogram(batch, coord_pair, grid)`.
pub fn occupancy_histogram(batch: &[Trajectory], grid: GridSpec) -> Result<OccupancyHistogram> {
    OccupancyHistogram::from_batch(batch, grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec { x_coord: 0, y_coord: 1, x_range: (-2.0, 2.0), y_range: (-2.0, 2.0), cols: 4, rows: 4 }
    }

    #[test]
    fn single_cell_trajectory() {
        let states = vec![vec![0.5, 0.5]; 5];
        let traj = Trajectory::from_parts(states, vec![vec![0.0, 0.0]; 5], vec![0.0; 5], vec![], false).unwrap();
        let h = occupancy_histogram(&[traj], grid()).unwrap();
        assert_eq!(h.count(2, 2), 5);
        assert_eq!(h.total, 5);
        assert_eq!(h.counts.iter().sum::<u64>(), 5);
        assert_eq!(h.normalized().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn outside_points_are_clamped() {
        let g = grid();
        assert_eq!(g.cell(&[-10.0, 10.0]), (3, 0));
        assert_eq!(g.cell(&[f64::NAN, 2.0]), (3, 0));
    }

    #[test]
    fn csv_header() {
        let h = OccupancyHistogram::new(grid()).unwrap();
        assert!(h.to_csv().starts_with("row,col,count,normalized\n"));
        assert_eq!(h.to_csv().lines().count(), 17);
    }
}
