//! Domain types shared by every other module.
//!
//! All geometry is expressed in grid-cell units with the origin at the
//! top-left corner, rows growing downwards. A cell `(i, j)` is sampled at
//! its center `(i + 0.5, j + 0.5)`; [`cell_center`] is the only place that
//! convention is written down.

use std::ops::Deref;

use crate::error::{Error, Result};

/// A continuous location on the grid, in cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub row: f64,
    pub col: f64,
}

impl Point2 {
    pub const fn new(row: f64, col: f64) -> Self {
        Self { row, col }
    }

    pub fn is_finite(&self) -> bool {
        self.row.is_finite() && self.col.is_finite()
    }

    pub fn dist_sq(&self, other: &Point2) -> f64 {
        let dr = self.row - other.row;
        let dc = self.col - other.col;
        dr * dr + dc * dc
    }

    pub fn dist(&self, other: &Point2) -> f64 {
        self.dist_sq(other).sqrt()
    }
}

/// Sampling location of grid cell `(i, j)`.
#[inline]
pub fn cell_center(i: usize, j: usize) -> Point2 {
    Point2::new(i as f64 + 0.5, j as f64 + 0.5)
}

/// Sampling location of the cell at row-major flat index `m`.
#[inline]
pub fn flat_cell_center(m: usize, width: usize) -> Point2 {
    cell_center(m / width, m % width)
}

/// An annotated image: grid extent plus head points in cell units.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    height: usize,
    width: usize,
    stride: usize,
    points: Vec<Point2>,
}

impl Scene {
    pub fn new(height: usize, width: usize, stride: usize, points: Vec<Point2>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Invalid(format!(
                "scene dimensions must be positive, got {height}x{width}"
            )));
        }
        if stride == 0 {
            return Err(Error::Invalid("stride must be positive".into()));
        }
        for (n, p) in points.iter().enumerate() {
            let inside = p.is_finite()
                && (0.0..=height as f64).contains(&p.row)
                && (0.0..=width as f64).contains(&p.col);
            if !inside {
                return Err(Error::Invalid(format!(
                    "point {n} at ({}, {}) lies outside the {height}x{width} grid",
                    p.row, p.col
                )));
            }
        }
        Ok(Self {
            height,
            width,
            stride,
            points,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    /// Number of annotated heads.
    pub fn count(&self) -> usize {
        self.points.len()
    }

    /// Number of grid cells.
    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn shorter_side(&self) -> usize {
        self.height.min(self.width)
    }

    /// Same extent, different annotations.
    pub fn with_points(&self, points: Vec<Point2>) -> Result<Self> {
        Scene::new(self.height, self.width, self.stride, points)
    }

    /// Index and distance of the nearest head; ties go to the lowest index.
    pub fn nearest_head(&self, x: &Point2) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (n, z) in self.points.iter().enumerate() {
            let d2 = x.dist_sq(z);
            match best {
                Some((_, b)) if d2 >= b => {}
                _ => best = Some((n, d2)),
            }
        }
        best.map(|(n, d2)| (n, d2.sqrt()))
    }
}

/// A dense row-major grid of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl Grid {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Invalid(format!(
                "grid dimensions must be positive, got {height}x{width}"
            )));
        }
        if values.len() != height * width {
            return Err(Error::Invalid(format!(
                "grid {height}x{width} needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        if let Some(m) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite value at cell {m}")));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "grid dimensions must be positive");
        Self {
            height,
            width,
            values: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.width + j]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn check_shape(&self, expected: (usize, usize)) -> Result<()> {
        if self.shape() != expected {
            return Err(Error::Shape {
                expected,
                actual: self.shape(),
            });
        }
        Ok(())
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// A nonnegative grid of count mass per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    grid: Grid,
    stride: usize,
}

impl DensityGrid {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        Self::from_grid(Grid::new(height, width, values)?, 1)
    }

    pub fn from_grid(grid: Grid, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Invalid("stride must be positive".into()));
        }
        if let Some(m) = grid.values().iter().position(|&v| v < 0.0) {
            return Err(Error::Invalid(format!(
                "density must be nonnegative, cell {m} holds {}",
                grid.values()[m]
            )));
        }
        Ok(Self { grid, stride })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            grid: Grid::zeros(height, width),
            stride: 1,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Invalid("stride must be positive".into()));
        }
        self.stride = stride;
        Ok(self)
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn into_grid(self) -> Grid {
        self.grid
    }
}

impl Deref for DensityGrid {
    type Target = Grid;

    fn deref(&self) -> &Grid {
        &self.grid
    }
}
