//! Sampled multi-component fields on uniform grids. Storage is planar:
//! component 0's samples first (row-major over the grid), then component 1,
//! and so on — each plane feeds the spectral helpers directly.

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub shape: Vec<usize>,
    pub spacing: f64,
    pub components: usize,
    pub periodic: bool,
    pub data: Vec<f64>,
}

impl GridField {
    pub fn zeros(shape: Vec<usize>, spacing: f64, components: usize, periodic: bool) -> Self {
        let points: usize = shape.iter().product();
        Self {
            shape,
            spacing,
            components,
            periodic,
            data: vec![0.0; points * components],
        }
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn points(&self) -> usize {
        self.shape.iter().product()
    }

    /// Side lengths of the covered box.
    pub fn extent(&self) -> Vec<f64> {
        self.shape.iter().map(|&s| s as f64 * self.spacing).collect()
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let p = self.points();
        &self.data[c * p..(c + 1) * p]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        let p = self.points();
        &mut self.data[c * p..(c + 1) * p]
    }

    pub fn set_component(&mut self, c: usize, values: &[f64]) {
        self.component_mut(c).copy_from_slice(values);
    }

    /// Coordinates of a flat row-major grid index.
    pub fn coords(&self, mut flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        for a in (0..self.dim()).rev() {
            x[a] = (flat % self.shape[a]) as f64 * self.spacing;
            flat /= self.shape[a];
        }
        x
    }

    /// Samples each component of `f` at every grid point.
    pub fn from_fn(
        shape: Vec<usize>,
        spacing: f64,
        components: usize,
        periodic: bool,
        f: impl Fn(&[f64], usize) -> f64,
    ) -> Self {
        let mut field = Self::zeros(shape, spacing, components, periodic);
        let points = field.points();
        for flat in 0..points {
            let x = field.coords(flat);
            for c in 0..components {
                field.data[c * points + flat] = f(&x, c);
            }
        }
        field
    }

    pub fn validate(&self) -> Result<()> {
        let expect = self.points() * self.components;
        if self.data.len() != expect {
            return Err(Error::Format(format!(
                "sample count {} does not match shape/components ({expect})",
                self.data.len()
            )));
        }
        if !(self.spacing > 0.0) {
            return Err(Error::Format(format!("spacing {} not positive", self.spacing)));
        }
        if let Some(bad) = self.data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite sample {bad}")));
        }
        Ok(())
    }

    /// Multilinear interpolation of one component. Periodic fields wrap;
    /// compact fields return 0 outside the covered box.
    pub fn interpolate(&self, c: usize, x: &[f64]) -> f64 {
        let n = self.dim();
        let plane = self.component(c);
        let mut base = vec![0usize; n];
        let mut frac = vec![0.0; n];
        for a in 0..n {
            let t = x[a] / self.spacing;
            if self.periodic {
                let s = self.shape[a] as f64;
                let wrapped = t.rem_euclid(s);
                base[a] = wrapped.floor() as usize % self.shape[a];
                frac[a] = wrapped - wrapped.floor();
            } else {
                if t < 0.0 || t > (self.shape[a] - 1) as f64 {
                    return 0.0;
                }
                let fl = t.floor().min((self.shape[a] - 2).max(0) as f64);
                base[a] = fl as usize;
                frac[a] = t - fl;
            }
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut flat = 0usize;
            for a in 0..n {
                let up = (corner >> a) & 1 == 1;
                w *= if up { frac[a] } else { 1.0 - frac[a] };
                let mut ia = base[a] + up as usize;
                if self.periodic {
                    ia %= self.shape[a];
                } else {
                    ia = ia.min(self.shape[a] - 1);
                }
                flat = flat * self.shape[a] + ia;
            }
            acc += w * plane[flat];
        }
        acc
    }

    pub fn l2_norm(&self) -> f64 {
        let cell = self.spacing.powi(self.dim() as i32);
        (self.data.iter().map(|v| v * v).sum::<f64>() * cell).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// L² norm of the difference, requiring identical layout.
    pub fn l2_distance(&self, other: &Self) -> Result<f64> {
        if self.shape != other.shape || self.components != other.components {
            return Err(Error::InvalidInput("field layouts differ".into()));
        }
        let cell = self.spacing.powi(self.dim() as i32);
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok((sum * cell).sqrt())
    }
}
