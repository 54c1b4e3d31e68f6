//! Pointwise constraint-set geometry.
//!
//! A flow state w = (m, U) at parameters (rho, q) belongs to the constraint
//! set K exactly when m (x) m / rho - U = q I, equivalently |m|^2 = n rho q
//! together with U = dev(m (x) m / rho). The relaxation e(rho, m, U) is the
//! scaled largest eigenvalue whose sublevel set {e <= (n/2) q} is the convex
//! hull of K.

use crate::matrix::SymTraceFree;
use crate::rng;
use crate::{Error, Result};
use rand::Rng;

const RHO_MIN: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintParams {
    pub n: usize,
    pub rho: f64,
    pub q: f64,
}

impl ConstraintParams {
    pub fn new(n: usize, rho: f64, q: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput(format!("dimension {n} too small")));
        }
        if !(rho > RHO_MIN) {
            return Err(Error::InvalidDensity { rho });
        }
        if !(q > 0.0) {
            return Err(Error::InvalidInput(format!("q must be positive, got {q}")));
        }
        Ok(Self { n, rho, q })
    }

    /// Momentum radius sqrt(n rho q) of the constraint sphere.
    pub fn momentum_radius(&self) -> f64 {
        (self.n as f64 * self.rho * self.q).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub m: Vec<f64>,
    pub u: SymTraceFree,
}

impl FlowState {
    pub fn new(m: Vec<f64>, u: SymTraceFree) -> Result<Self> {
        if m.len() != u.dim() {
            return Err(Error::InvalidInput(format!(
                "momentum dimension {} does not match matrix dimension {}",
                m.len(),
                u.dim()
            )));
        }
        Ok(Self { m, u })
    }

    pub fn zero(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            u: SymTraceFree::zero(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    /// The constraint-set state with momentum a: (a, dev(a (x) a / rho)).
    pub fn on_constraint(a: Vec<f64>, rho: f64) -> Self {
        let u = SymTraceFree::deviatoric_outer(&a, 1.0 / rho);
        Self { m: a, u }
    }

    pub fn add_scaled(&self, other: &Self, c: f64) -> Self {
        Self {
            m: self
                .m
                .iter()
                .zip(&other.m)
                .map(|(a, b)| a + c * b)
                .collect(),
            u: self.u.add_scaled(&other.u, c),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add_scaled(other, -1.0)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            m: self.m.iter().map(|a| a * c).collect(),
            u: self.u.scale(c),
        }
    }

    /// Euclidean norm of (m, U) with the Frobenius norm on the matrix part.
    pub fn norm(&self) -> f64 {
        (self.m.iter().map(|x| x * x).sum::<f64>() + self.u.fro_norm_sq()).sqrt()
    }

    pub fn m_norm_sq(&self) -> f64 {
        self.m.iter().map(|x| x * x).sum()
    }
}

/// e(rho, m, U) = (n/2) lambda_max(m (x) m / rho - U).
///
/// Computed through the trace-free shift lambda_max(m (x) m/rho - U) =
/// lambda_max(dev(m (x) m/rho) - U) + |m|^2/(n rho), so the eigensolver only
/// ever sees trace-free matrices.
pub fn relaxation_e(n: usize, rho: f64, m: &[f64], u: &SymTraceFree) -> Result<f64> {
    if !(rho > RHO_MIN) {
        return Err(Error::InvalidDensity { rho });
    }
    if m.len() != n || u.dim() != n {
        return Err(Error::InvalidInput(format!(
            "state dimensions ({}, {}) do not match n={n}",
            m.len(),
            u.dim()
        )));
    }
    let dev = SymTraceFree::deviatoric_outer(m, 1.0 / rho);
    let shifted = dev.sub(u);
    let m2 = m.iter().map(|x| x * x).sum::<f64>();
    Ok(0.5 * n as f64 * shifted.lambda_max() + m2 / (2.0 * rho))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HullCertificate {
    pub e_value: f64,
    pub threshold: f64,
    pub margin: f64,
    pub member: bool,
    pub strict: bool,
    /// sqrt(2 rho e): radius of the smallest momentum ball containing the
    /// states that share this relaxation value.
    pub min_radius: f64,
}

/// Membership of w in the convex hull {e <= (n/2) q}.
pub fn hull_membership(p: &ConstraintParams, w: &FlowState) -> Result<HullCertificate> {
    let e_value = relaxation_e(p.n, p.rho, &w.m, &w.u)?;
    let threshold = 0.5 * p.n as f64 * p.q;
    let margin = threshold - e_value;
    Ok(HullCertificate {
        e_value,
        threshold,
        margin,
        member: margin >= 0.0,
        strict: margin > 0.0,
        min_radius: (2.0 * p.rho * e_value).sqrt(),
    })
}

/// Surrogate defect
/// D(w) = max(0, n rho q - |m|^2)/sqrt(n rho q) + ||U - dev(m (x) m/rho)||_F.
///
/// Vanishes exactly on K within the hull; comparable to the true distance on
/// bounded sets (two-sided, measured by the distance-ratio suite).
pub fn defect(p: &ConstraintParams, w: &FlowState) -> f64 {
    let nrq = p.n as f64 * p.rho * p.q;
    let m2 = w.m_norm_sq();
    let radial = (nrq - m2).max(0.0) / nrq.sqrt();
    let dev = SymTraceFree::deviatoric_outer(&w.m, 1.0 / p.rho);
    radial + w.u.sub(&dev).fro_norm()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceEstimate {
    pub value: f64,
    pub converged: bool,
}

fn distance_sq_to_sphere_point(p: &ConstraintParams, w: &FlowState, a: &[f64]) -> f64 {
    let dm: f64 = w.m.iter().zip(a).map(|(x, y)| (x - y) * (x - y)).sum();
    let dev = SymTraceFree::deviatoric_outer(a, 1.0 / p.rho);
    dm + w.u.sub(&dev).fro_norm_sq()
}

/// Exact Euclidean distance from w to K by multi-start projected gradient
/// over the momentum sphere |a| = sqrt(n rho q).
///
/// On the sphere the squared distance equals a constant minus
/// 2 (m . a + a^T (U + qI) a / rho), so the ascent runs on that quadratic.
#[allow(non_snake_case)]
pub fn exact_distance_to_K(
    p: &ConstraintParams,
    w: &FlowState,
    seed: u64,
    starts: usize,
) -> DistanceEstimate {
    let n = p.n;
    let r = p.momentum_radius();
    let tol = 1e-10;

    // Gradient of the objective f(a) = m.a + a^T W a / rho with W = U + q I:
    // m + 2 (U a)/rho + 2 q a / rho.
    let grad = |a: &[f64]| -> Vec<f64> {
        let ua = w.u.apply(a);
        (0..n)
            .map(|i| w.m[i] + 2.0 * (ua[i] + p.q * a[i]) / p.rho)
            .collect()
    };
    let fval = |a: &[f64]| -> f64 {
        let ua = w.u.apply(a);
        let quad: f64 = (0..n).map(|i| a[i] * (ua[i] + p.q * a[i])).sum();
        w.m.iter().zip(a).map(|(x, y)| x * y).sum::<f64>() + quad / p.rho
    };
    let project = |v: &[f64]| -> Option<Vec<f64>> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return None;
        }
        Some(v.iter().map(|x| x * r / norm).collect())
    };

    let mut rng = rng::stream(seed, &[0x6b_64_69_73, 0]);
    let mut best = f64::INFINITY;
    let mut converged = false;

    let mut initial: Vec<Vec<f64>> = Vec::with_capacity(starts.max(2));
    if let Some(a) = project(&w.m) {
        initial.push(a);
    }
    while initial.len() < starts.max(2) {
        let dir = rng::unit_vector(n, &mut rng);
        initial.push(dir.into_iter().map(|x| x * r).collect());
    }

    for a0 in initial {
        let mut a = a0;
        let mut f = fval(&a);
        let mut step = 0.5 * p.rho;
        let mut ok = false;
        for _ in 0..500 {
            let g = grad(&a);
            let cand: Vec<f64> = (0..n).map(|i| a[i] + step * g[i]).collect();
            let Some(cand) = project(&cand) else { break };
            let fc = fval(&cand);
            if fc > f + 1e-18 {
                let delta: f64 = cand
                    .iter()
                    .zip(&a)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                a = cand;
                f = fc;
                step *= 1.3;
                if delta < tol * (1.0 + r) {
                    ok = true;
                    break;
                }
            } else {
                step *= 0.4;
                if step < 1e-16 * (1.0 + r) {
                    ok = true;
                    break;
                }
            }
            // Also stop when the projected gradient vanishes.
            let ga = g.iter().zip(&a).map(|(x, y)| x * y).sum::<f64>() / (r * r);
            let pg: f64 = g
                .iter()
                .zip(&a)
                .map(|(gi, ai)| (gi - ga * ai) * (gi - ga * ai))
                .sum::<f64>()
                .sqrt();
            if pg < tol * (1.0 + g.iter().map(|x| x.abs()).fold(0.0, f64::max)) {
                ok = true;
                break;
            }
        }
        let d2 = distance_sq_to_sphere_point(p, w, &a);
        if d2 < best {
            best = d2;
            converged = ok;
        } else if (d2 - best).abs() <= 1e-12 * (1.0 + best) && ok {
            converged = true;
        }
    }
    // Random probes cannot beat the optimizer by more than roundoff.
    let _probe: f64 = rng.gen();
    DistanceEstimate {
        value: best.max(0.0).sqrt(),
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn p3() -> ConstraintParams {
        ConstraintParams::new(3, 1.0, 1.0).unwrap()
    }

    #[test]
    fn rejects_degenerate_density() {
        assert!(matches!(
            relaxation_e(3, 0.0, &[0.0; 3], &SymTraceFree::zero(3)),
            Err(Error::InvalidDensity { .. })
        ));
        assert!(ConstraintParams::new(3, -1.0, 1.0).is_err());
        assert!(ConstraintParams::new(3, 1.0, 0.0).is_err());
    }

    #[test]
    fn e_at_origin_is_zero() {
        let e = relaxation_e(3, 1.0, &[0.0; 3], &SymTraceFree::zero(3)).unwrap();
        assert_eq!(e, 0.0);
        let cert = hull_membership(&p3(), &FlowState::zero(3)).unwrap();
        assert!(cert.strict);
        assert_abs_diff_eq!(cert.margin, 1.5, epsilon = 1e-15);
        assert_eq!(cert.min_radius, 0.0);
    }

    #[test]
    fn constraint_states_sit_on_the_boundary() {
        let p = p3();
        let r = p.momentum_radius();
        let w = FlowState::on_constraint(vec![r, 0.0, 0.0], p.rho);
        let cert = hull_membership(&p, &w).unwrap();
        assert_abs_diff_eq!(cert.e_value, cert.threshold, epsilon = 1e-12);
        assert!(cert.member || cert.margin.abs() < 1e-12);
        assert_abs_diff_eq!(cert.min_radius, r, epsilon = 1e-9);
        assert!(defect(&p, &w) < 1e-12);
    }

    #[test]
    fn defect_of_origin_matches_hand_value() {
        // rho = q = 1, n = 3, w = 0: D = 3/sqrt(3) = sqrt(3).
        let d = defect(&p3(), &FlowState::zero(3));
        assert_abs_diff_eq!(d, 3f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn exact_distance_from_origin() {
        // From (0,0) every sphere point is equidistant:
        // d^2 = n rho q + ||dev(a (x) a)||_F^2 = 3 + 6 = 9.
        let est = exact_distance_to_K(&p3(), &FlowState::zero(3), 7, 32);
        assert!(est.converged);
        assert_abs_diff_eq!(est.value, 3.0, epsilon = 1e-8);
    }

    #[test]
    fn exact_distance_vanishes_on_k() {
        let p = p3();
        let a = {
            let v = [1.0f64, -2.0, 0.5];
            let norm = (v.iter().map(|x| x * x).sum::<f64>()).sqrt();
            let r = p.momentum_radius();
            v.iter().map(|x| x * r / norm).collect::<Vec<_>>()
        };
        let w = FlowState::on_constraint(a, p.rho);
        let est = exact_distance_to_K(&p, &w, 3, 32);
        assert!(est.value < 1e-7, "distance {}", est.value);
    }
}
