//! Real `d × h × w` tensors, stored channel-major (`index = (c·h + y)·w + x`).

use crate::error::{param, shape, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Latent {
    dim: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Latent {
    pub fn new(dim: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * height * width {
            return Err(shape(format!(
                "latent {dim}x{height}x{width} needs {} values, got {}",
                dim * height * width,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(param("latent values must be finite"));
        }
        Ok(Self { dim, height, width, data })
    }

    pub fn zeros(dim: usize, height: usize, width: usize) -> Self {
        Self {
            dim,
            height,
            width,
            data: vec![0.0; dim * height * width],
        }
    }

    pub fn filled(dim: usize, height: usize, width: usize, value: f64) -> Self {
        Self {
            dim,
            height,
            width,
            data: vec![value; dim * height * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.dim, self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = self.index(c, y, x);
        self.data[i] = v;
    }

    /// The `d`-vector at spatial cell `(y, x)`.
    pub fn cell(&self, y: usize, x: usize) -> Vec<f64> {
        (0..self.dim).map(|c| self.get(c, y, x)).collect()
    }

    pub fn set_cell(&mut self, y: usize, x: usize, v: &[f64]) {
        for (c, &val) in v.iter().enumerate().take(self.dim) {
            self.set(c, y, x, val);
        }
    }

    pub fn check_same_shape(&self, other: &Latent) -> Result<()> {
        if self.shape() == other.shape() {
            Ok(())
        } else {
            Err(shape(format!("latent shapes differ: {:?} vs {:?}", self.shape(), other.shape())))
        }
    }

    pub fn sub(&self, other: &Latent) -> Result<Latent> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Latent { data, ..*self })
    }

    pub fn add_assign(&mut self, other: &Latent) -> Result<()> {
        self.check_same_shape(other)?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn sub_assign(&mut self, other: &Latent) -> Result<()> {
        self.check_same_shape(other)?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a -= b);
        Ok(())
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn dot(&self, other: &Latent) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }
}
