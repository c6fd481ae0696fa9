//! 2-D real-valued raster, row-major, the common currency of the pipeline.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ImageGrid {
    /// Builds a grid from row-major values, checking length and finiteness.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid dimensions must be positive, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "expected {} values for a {width}x{height} grid, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite value {} at index {bad}",
                values[bad]
            )));
        }
        Ok(ImageGrid {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        ImageGrid::new(width, height, vec![0.0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.width + col] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_shape(&self, other: &ImageGrid) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(self.shape(), other.shape()));
        }
        Ok(())
    }

    /// Elementwise sum; shapes must match.
    pub fn add(&self, other: &ImageGrid) -> Result<ImageGrid> {
        self.same_shape(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        ImageGrid::new(self.width, self.height, values)
    }

    /// Elementwise difference `self − other`; shapes must match.
    pub fn sub(&self, other: &ImageGrid) -> Result<ImageGrid> {
        self.same_shape(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        ImageGrid::new(self.width, self.height, values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}
