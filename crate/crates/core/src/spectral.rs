//! Fourier helpers on periodic uniform grids: derivatives, inverse
//! Laplacian, divergence residuals. These back the torus subsolution factory
//! and every grid-based verification oracle.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::{Error, Result};

/// Uniform periodic grid: `size` points per axis in `dim` dimensions over a
/// cube of side `length`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusGrid {
    pub dim: usize,
    pub size: usize,
    pub length: f64,
}

impl TorusGrid {
    pub fn new(dim: usize, size: usize, length: f64) -> Result<Self> {
        if dim == 0 || size < 2 || !(length > 0.0) {
            return Err(Error::InvalidParams(format!(
                "degenerate torus grid {dim}d size {size} length {length}"
            )));
        }
        Ok(Self { dim, size, length })
    }

    pub fn points(&self) -> usize {
        self.size.pow(self.dim as u32)
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.size as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Grid point coordinates for a flat row-major index.
    pub fn coords(&self, mut flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        for a in (0..self.dim).rev() {
            x[a] = (flat % self.size) as f64 * self.spacing();
            flat /= self.size;
        }
        x
    }

    /// Samples a scalar function at every grid point (row-major).
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.points());
        let mut idx = vec![0usize; self.dim];
        let mut x = vec![0.0; self.dim];
        let h = self.spacing();
        loop {
            for (xa, ia) in x.iter_mut().zip(&idx) {
                *xa = *ia as f64 * h;
            }
            out.push(f(&x));
            let mut a = self.dim;
            loop {
                if a == 0 {
                    return out;
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] < self.size {
                    break;
                }
                idx[a] = 0;
            }
        }
    }

    /// Signed wavenumber for index i along one axis.
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i <= self.size / 2 {
            i as i64
        } else {
            i as i64 - self.size as i64
        }
    }

    /// Angular frequency 2πk/L for index i.
    fn omega(&self, i: usize) -> f64 {
        2.0 * std::f64::consts::PI * self.wavenumber(i) as f64 / self.length
    }

    pub fn l2_norm(&self, values: &[f64]) -> f64 {
        (values.iter().map(|v| v * v).sum::<f64>() * self.cell_volume()).sqrt()
    }

    pub fn mean(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

pub(crate) fn fft_axis(data: &mut [Complex64], grid: &TorusGrid, axis: usize, inverse: bool) {
    let s = grid.size;
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(s)
    } else {
        planner.plan_fft_forward(s)
    };
    // Row-major: stride of `axis` is size^(dim-1-axis).
    let stride = s.pow((grid.dim - 1 - axis) as u32);
    let block = stride * s;
    let lines = data.len() / s;
    let mut buf = vec![Complex64::default(); s];
    for line in 0..lines {
        let base = (line / stride) * block + (line % stride);
        for (j, b) in buf.iter_mut().enumerate() {
            *b = data[base + j * stride];
        }
        fft.process(&mut buf);
        for (j, b) in buf.iter().enumerate() {
            data[base + j * stride] = *b;
        }
    }
}

/// Forward transform of a real scalar field (row-major) to its spectrum.
pub fn to_spectral(grid: &TorusGrid, values: &[f64]) -> Vec<Complex64> {
    debug_assert_eq!(values.len(), grid.points());
    let mut hat: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    for a in 0..grid.dim {
        fft_axis(&mut hat, grid, a, false);
    }
    hat
}

/// Inverse transform back to a real field (imaginary parts discarded).
pub fn from_spectral(grid: &TorusGrid, hat: &[Complex64]) -> Vec<f64> {
    let mut work = hat.to_vec();
    for a in 0..grid.dim {
        fft_axis(&mut work, grid, a, true);
    }
    let scale = 1.0 / grid.points() as f64;
    work.iter().map(|c| c.re * scale).collect()
}

/// Multiplies a spectrum in place by (iω_axis), i.e. differentiates.
pub fn differentiate_spectrum(grid: &TorusGrid, hat: &mut [Complex64], axis: usize) {
    let s = grid.size;
    let stride = s.pow((grid.dim - 1 - axis) as u32);
    for (flat, c) in hat.iter_mut().enumerate() {
        let i = (flat / stride) % s;
        let mut w = grid.omega(i);
        // The Nyquist mode has no consistent odd-derivative representative.
        if s % 2 == 0 && i == s / 2 {
            w = 0.0;
        }
        *c *= Complex64::new(0.0, w);
    }
}

/// Spectral partial derivative of a real grid field.
pub fn derivative(grid: &TorusGrid, values: &[f64], axis: usize) -> Vec<f64> {
    let mut hat = to_spectral(grid, values);
    differentiate_spectrum(grid, &mut hat, axis);
    from_spectral(grid, &hat)
}

/// Solves Δu = f on the torus for mean-zero f; returns the mean-zero u.
pub fn inverse_laplacian(grid: &TorusGrid, f: &[f64]) -> Result<Vec<f64>> {
    let mean = grid.mean(f);
    let scale = f.iter().map(|v| v.abs()).sum::<f64>() / f.len() as f64;
    if mean.abs() > 1e-10 * (scale + 1e-300) {
        return Err(Error::CompatibilityViolated { residual: mean });
    }
    let mut hat = to_spectral(grid, f);
    let s = grid.size;
    for (flat, c) in hat.iter_mut().enumerate() {
        let mut k2 = 0.0;
        let mut rest = flat;
        for a in (0..grid.dim).rev() {
            let _ = a;
            let i = rest % s;
            rest /= s;
            let w = grid.omega(i);
            k2 += w * w;
        }
        if k2 == 0.0 {
            *c = Complex64::default();
        } else {
            *c /= Complex64::new(-k2, 0.0);
        }
    }
    Ok(from_spectral(grid, &hat))
}

/// Spectral divergence of a vector field given as per-component scalar grids.
pub fn divergence_field(grid: &TorusGrid, components: &[Vec<f64>]) -> Vec<f64> {
    debug_assert_eq!(components.len(), grid.dim);
    let mut out = vec![0.0; grid.points()];
    for (a, comp) in components.iter().enumerate() {
        let d = derivative(grid, comp, a);
        for (o, v) in out.iter_mut().zip(d) {
            *o += v;
        }
    }
    out
}

/// Relative L² divergence residual ‖div u − rhs‖₂ / ‖reference‖₂.
pub fn relative_residual(grid: &TorusGrid, residual: &[f64], reference_norm: f64) -> f64 {
    if reference_norm == 0.0 {
        return grid.l2_norm(residual);
    }
    grid.l2_norm(residual) / reference_norm
}

/// Max L² norm over the components of a multi-component field.
pub fn max_component_norm(grid: &TorusGrid, components: &[Vec<f64>]) -> f64 {
    components
        .iter()
        .map(|c| grid.l2_norm(c))
        .fold(0.0, f64::max)
}

/// A random band-limited real field with zero mean: modes with |k|∞ ≤ kmax,
/// deterministic in the seed. Returned in physical space.
pub fn random_band_limited(grid: &TorusGrid, kmax: i64, seed: u64) -> Vec<f64> {
    use rand::Rng;
    let mut r = crate::rng::stream(seed, &[0xba2d, kmax as u64]);
    let s = grid.size;
    // Accumulate a handful of cosine modes: exactly real and band-limited.
    let modes = 3 * grid.dim + 4;
    let mut field = vec![0.0; grid.points()];
    for _ in 0..modes {
        let k: Vec<i64> = (0..grid.dim)
            .map(|_| r.gen_range(-kmax..=kmax))
            .collect();
        if k.iter().all(|&v| v == 0) {
            continue;
        }
        let amp: f64 = r.gen_range(0.2..1.0);
        let phase: f64 = r.gen_range(0.0..std::f64::consts::TAU);
        let mut idx = vec![0usize; grid.dim];
        let h = grid.spacing();
        for (flat, f) in field.iter_mut().enumerate() {
            let mut rest = flat;
            for a in (0..grid.dim).rev() {
                idx[a] = rest % s;
                rest /= s;
            }
            let arg: f64 = idx
                .iter()
                .zip(&k)
                .map(|(&i, &kk)| 2.0 * std::f64::consts::PI * kk as f64 * (i as f64 * h) / grid.length)
                .sum();
            *f += amp * (arg + phase).cos();
        }
    }
    let mean = grid.mean(&field);
    for f in &mut field {
        *f -= mean;
    }
    field
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid3(size: usize) -> TorusGrid {
        TorusGrid::new(3, size, 1.0).unwrap()
    }

    #[test]
    fn roundtrip_is_identity() {
        let g = grid3(16);
        let f = random_band_limited(&g, 4, 7);
        let back = from_spectral(&g, &to_spectral(&g, &f));
        for (a, b) in f.iter().zip(&back) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_matches_analytic_mode() {
        let g = grid3(32);
        let tau = std::f64::consts::TAU;
        let f = g.sample(|x| (tau * 3.0 * x[0]).sin() * (tau * x[2]).cos());
        let d0 = derivative(&g, &f, 0);
        let expect = g.sample(|x| tau * 3.0 * (tau * 3.0 * x[0]).cos() * (tau * x[2]).cos());
        for (a, b) in d0.iter().zip(&expect) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        let d1 = derivative(&g, &f, 1);
        assert!(g.l2_norm(&d1) < 1e-10);
    }

    #[test]
    fn inverse_laplacian_solves_poisson() {
        let g = grid3(32);
        let f = random_band_limited(&g, 5, 11);
        let u = inverse_laplacian(&g, &f).unwrap();
        let mut lap = vec![0.0; g.points()];
        for a in 0..3 {
            let da = derivative(&g, &derivative(&g, &u, a), a);
            for (l, v) in lap.iter_mut().zip(da) {
                *l += v;
            }
        }
        let resid: Vec<f64> = lap.iter().zip(&f).map(|(a, b)| a - b).collect();
        assert!(g.l2_norm(&resid) <= 1e-9 * g.l2_norm(&f));
        assert!(g.mean(&u).abs() < 1e-12);
    }

    #[test]
    fn nonzero_mean_is_rejected() {
        let g = grid3(8);
        let f = vec![1.0; g.points()];
        assert!(inverse_laplacian(&g, &f).is_err());
    }

    #[test]
    fn anisotropic_grid_strides_are_consistent() {
        // 2-D check that axis identification is not transposed.
        let g = TorusGrid::new(2, 16, 2.0).unwrap();
        let tau = std::f64::consts::TAU;
        let f = g.sample(|x| (tau * x[1] / 2.0).sin());
        let d1 = derivative(&g, &f, 1);
        let expect = g.sample(|x| tau / 2.0 * (tau * x[1] / 2.0).cos());
        for (a, b) in d1.iter().zip(&expect) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
        let d0 = derivative(&g, &f, 0);
        assert!(g.l2_norm(&d0) < 1e-12);
    }
}
