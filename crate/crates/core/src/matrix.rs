//! Symmetric trace-free matrices in packed upper-triangular storage.
//!
//! Symmetry is exact by construction (only the upper triangle is stored);
//! trace-freeness is enforced at construction up to 1e-12 * (1 + ||A||_F).

use crate::{Error, Result};
use nalgebra::DMatrix;

const TRACE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SymTraceFree {
    n: usize,
    upper: Vec<f64>,
}

#[inline]
fn packed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < n);
    i * n - i * (i + 1) / 2 + j
}

impl SymTraceFree {
    pub fn zero(n: usize) -> Self {
        Self {
            n,
            upper: vec![0.0; n * (n + 1) / 2],
        }
    }

    /// Build from the packed upper triangle (row-major, diagonal included).
    pub fn from_upper_triangle(n: usize, upper: Vec<f64>) -> Result<Self> {
        if n < 1 || upper.len() != n * (n + 1) / 2 {
            return Err(Error::InvalidInput(format!(
                "packed upper triangle for n={n} needs {} entries, got {}",
                n * (n + 1) / 2,
                upper.len()
            )));
        }
        let a = Self { n, upper };
        let tr = a.raw_trace();
        if tr.abs() > TRACE_TOL * (1.0 + a.fro_norm()) {
            return Err(Error::InvalidInput(format!(
                "trace {tr:e} exceeds tolerance for a trace-free matrix"
            )));
        }
        Ok(a)
    }

    /// Build from an arbitrary symmetric-entry closure, subtracting the trace.
    pub fn deviatoric_from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut upper = vec![0.0; n * (n + 1) / 2];
        let mut tr = 0.0;
        for i in 0..n {
            tr += f(i, i);
        }
        let shift = tr / n as f64;
        for i in 0..n {
            for j in i..n {
                let v = f(i, j) - if i == j { shift } else { 0.0 };
                upper[packed_index(n, i, j)] = v;
            }
        }
        Self { n, upper }
    }

    /// Trace-free part of m (x) m / rho.
    pub fn deviatoric_outer(m: &[f64], inv_rho: f64) -> Self {
        let n = m.len();
        Self::deviatoric_from_fn(n, |i, j| m[i] * m[j] * inv_rho)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.upper[packed_index(self.n, i, j)]
    }

    pub fn upper_triangle(&self) -> &[f64] {
        &self.upper
    }

    fn raw_trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn fro_norm(&self) -> f64 {
        self.fro_norm_sq().sqrt()
    }

    pub fn fro_norm_sq(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in i..self.n {
                let v = self.upper[packed_index(self.n, i, j)];
                s += if i == j { v * v } else { 2.0 * v * v };
            }
        }
        s
    }

    pub fn add_scaled(&self, other: &Self, c: f64) -> Self {
        debug_assert_eq!(self.n, other.n);
        let upper = self
            .upper
            .iter()
            .zip(&other.upper)
            .map(|(a, b)| a + c * b)
            .collect();
        Self { n: self.n, upper }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            n: self.n,
            upper: self.upper.iter().map(|a| a * c).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add_scaled(other, -1.0)
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += self.get(i, j) * v[j];
            }
            out[i] = s;
        }
        out
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Independent coordinates: off-diagonals (i < j), then the first n-1
    /// diagonal entries. A linear bijection with the trace-free subspace,
    /// used by the decomposition feasibility solver.
    pub fn coords(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = Vec::with_capacity(n * (n + 1) / 2 - 1);
        for i in 0..n {
            for j in (i + 1)..n {
                out.push(self.get(i, j));
            }
        }
        for i in 0..n - 1 {
            out.push(self.get(i, i));
        }
        out
    }

    pub fn coord_len(n: usize) -> usize {
        n * (n + 1) / 2 - 1
    }

    pub fn from_coords(n: usize, c: &[f64]) -> Result<Self> {
        if c.len() != Self::coord_len(n) {
            return Err(Error::InvalidInput(format!(
                "expected {} coordinates, got {}",
                Self::coord_len(n),
                c.len()
            )));
        }
        let mut upper = vec![0.0; n * (n + 1) / 2];
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                upper[packed_index(n, i, j)] = c[k];
                k += 1;
            }
        }
        let mut head = 0.0;
        for i in 0..n - 1 {
            upper[packed_index(n, i, i)] = c[k];
            head += c[k];
            k += 1;
        }
        upper[packed_index(n, n - 1, n - 1)] = -head;
        Ok(Self { n, upper })
    }

    /// Largest eigenvalue. Closed-form trigonometric solution with a guarded
    /// Newton polish for n = 3, symmetric eigensolver otherwise. Accuracy
    /// within 1e-12 * (1 + ||A||) of the exact value.
    pub fn lambda_max(&self) -> f64 {
        let s = self.fro_norm();
        if s == 0.0 {
            return 0.0;
        }
        if self.n == 3 {
            return lambda_max_3(self, s);
        }
        let eig = self.to_dmatrix().symmetric_eigen();
        eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max)
    }

    /// Operator norm (largest absolute eigenvalue).
    pub fn op_norm(&self) -> f64 {
        if self.fro_norm() == 0.0 {
            return 0.0;
        }
        if self.n == 3 {
            let lo = -self.scale(-1.0).lambda_max();
            return self.lambda_max().max(-lo)
            ;
        }
        let eig = self.to_dmatrix().symmetric_eigen();
        eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs()))
    }
}

fn det3_scaled(a: &SymTraceFree, inv_s: f64) -> f64 {
    let g = |i, j| a.get(i, j) * inv_s;
    let (a00, a01, a02) = (g(0, 0), g(0, 1), g(0, 2));
    let (a11, a12, a22) = (g(1, 1), g(1, 2), g(2, 2));
    a00 * (a11 * a22 - a12 * a12) - a01 * (a01 * a22 - a12 * a02)
        + a02 * (a01 * a12 - a11 * a02)
}

/// Largest root of lambda^3 - p lambda - q, the characteristic polynomial of
/// a trace-free symmetric 3x3 matrix, scaled to unit Frobenius norm.
fn lambda_max_3(a: &SymTraceFree, s: f64) -> f64 {
    let inv_s = 1.0 / s;
    // tr(A'^2) = 1 after scaling, so p = 1/2 exactly.
    let p = 0.5f64;
    let q = det3_scaled(a, inv_s);
    let half_angle_arg = (q / 2.0) * (3.0 / p).powf(1.5);
    let theta = half_angle_arg.clamp(-1.0, 1.0).acos();
    let mut lam = 2.0 * (p / 3.0).sqrt() * (theta / 3.0).cos();
    // Guarded Newton polish on the characteristic cubic.
    let f = |x: f64| x * x * x - p * x - q;
    let mut fv = f(lam);
    for _ in 0..4 {
        let fp = 3.0 * lam * lam - p;
        if fp.abs() < 1e-14 {
            break;
        }
        let cand = lam - fv / fp;
        let fc = f(cand);
        if fc.abs() < fv.abs() {
            lam = cand;
            fv = fc;
        } else {
            break;
        }
    }
    lam * s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn diag(n: usize, d: &[f64]) -> SymTraceFree {
        SymTraceFree::deviatoric_from_fn(n, |i, j| if i == j { d[i] } else { 0.0 })
    }

    #[test]
    fn trace_enforced_at_construction() {
        assert!(SymTraceFree::from_upper_triangle(3, vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0]).is_err());
        let a =
            SymTraceFree::from_upper_triangle(3, vec![2.0, 0.0, 0.0, -1.0, 0.0, -1.0]).unwrap();
        assert_eq!(a.get(0, 0), 2.0);
    }

    #[test]
    fn lambda_max_known_values() {
        assert!((diag(3, &[2.0, -1.0, -1.0]).lambda_max() - 2.0).abs() < 1e-14);
        assert_eq!(SymTraceFree::zero(3).lambda_max(), 0.0);
        // e1 (x) e2 + e2 (x) e1 has eigenvalues {1, 0, -1}.
        let mut upper = vec![0.0; 6];
        upper[1] = 1.0;
        let a = SymTraceFree::from_upper_triangle(3, upper).unwrap();
        assert!((a.lambda_max() - 1.0).abs() < 1e-14);
        assert!((diag(4, &[3.0, -1.0, -1.0, -1.0]).lambda_max() - 3.0).abs() < 1e-13);
    }

    #[test]
    fn closed_form_matches_general_solver() {
        let mut r = rng::stream(42, &[3]);
        for _ in 0..500 {
            let c: Vec<f64> = (0..SymTraceFree::coord_len(3))
                .map(|_| r.gen_range(-5.0..5.0))
                .collect();
            let a = SymTraceFree::from_coords(3, &c).unwrap();
            let fast = a.lambda_max();
            let slow = a
                .to_dmatrix()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::MIN, f64::max);
            let tol = 1e-12 * (1.0 + a.fro_norm());
            assert!(
                (fast - slow).abs() <= tol,
                "fast {fast} vs solver {slow}, tol {tol}"
            );
        }
    }

    #[test]
    fn coords_roundtrip() {
        let mut r = rng::stream(9, &[1]);
        for n in [3usize, 4, 5] {
            let c: Vec<f64> = (0..SymTraceFree::coord_len(n))
                .map(|_| r.gen_range(-2.0..2.0))
                .collect();
            let a = SymTraceFree::from_coords(n, &c).unwrap();
            assert!(a.raw_trace().abs() < 1e-12 * (1.0 + a.fro_norm()));
            assert_eq!(a.coords(), c);
        }
    }
}
