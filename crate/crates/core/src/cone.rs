//! Oscillation directions and convex decompositions.
//!
//! A state direction (n_bar, V_bar) supports localized plane waves exactly
//! when some wavevector xi annihilates both parts: n_bar . xi = 0 and
//! V_bar xi = 0. Differences of constraint-set states always admit such a
//! xi for n >= 3. Interior hull points are decomposed as convex combinations
//! of constraint-set states by a sampled feasibility LP, and the two largest
//! weights yield an admissible oscillation segment with a quantitative
//! length floor.

use crate::matrix::SymTraceFree;
use crate::rng;
use crate::state::{hull_membership, ConstraintParams, FlowState};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// An oscillation direction together with a certified wavevector.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaDirection {
    pub n_bar: Vec<f64>,
    pub v_bar: SymTraceFree,
    /// Unit wavevector annihilating both components.
    pub xi: Vec<f64>,
}

impl LambdaDirection {
    pub fn new(n_bar: Vec<f64>, v_bar: SymTraceFree, xi: Vec<f64>) -> Result<Self> {
        let n = n_bar.len();
        if v_bar.dim() != n || xi.len() != n {
            return Err(Error::InvalidInput(
                "direction component dimensions disagree".into(),
            ));
        }
        let xi_norm = norm(&xi);
        if (xi_norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "wavevector must be unit, |xi| = {xi_norm}"
            )));
        }
        let dot: f64 = n_bar.iter().zip(&xi).map(|(a, b)| a * b).sum();
        if dot.abs() > 1e-10 * (1.0 + norm(&n_bar)) {
            return Err(Error::InvalidInput(format!(
                "xi fails to annihilate the vector part: residual {dot:e}"
            )));
        }
        let vxi = norm(&v_bar.apply(&xi));
        if vxi > 1e-10 * (1.0 + v_bar.fro_norm()) {
            return Err(Error::InvalidInput(format!(
                "xi fails to annihilate the matrix part: residual {vxi:e}"
            )));
        }
        Ok(Self { n_bar, v_bar, xi })
    }

    /// The direction as a flow-state increment.
    pub fn as_state(&self) -> FlowState {
        FlowState {
            m: self.n_bar.clone(),
            u: self.v_bar.clone(),
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Searches for a unit xi with n_bar . xi = 0 and V_bar xi = 0 via the SVD
/// of the stacked (n+1) x n matrix. Absence is a valid answer.
pub fn wave_cone_test(n_bar: &[f64], v_bar: &SymTraceFree) -> Option<LambdaDirection> {
    let n = n_bar.len();
    assert_eq!(v_bar.dim(), n, "component dimensions disagree");
    let mut stacked = DMatrix::zeros(n + 1, n);
    for j in 0..n {
        stacked[(0, j)] = n_bar[j];
        for i in 0..n {
            stacked[(i + 1, j)] = v_bar.get(i, j);
        }
    }
    let scale = 1.0 + norm(n_bar).max(v_bar.fro_norm());
    let svd = stacked.svd(false, true);
    let v_t = svd.v_t.as_ref()?;
    let mut best = 0usize;
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s < svd.singular_values[best] {
            best = k;
        }
    }
    if svd.singular_values[best] > 1e-10 * scale {
        return None;
    }
    let mut xi: Vec<f64> = v_t.row(best).iter().copied().collect();
    let xn = norm(&xi);
    if xn < 1e-300 {
        return None;
    }
    for x in &mut xi {
        *x /= xn;
    }
    // Canonical sign: first component of significant size is positive.
    if let Some(lead) = xi.iter().find(|x| x.abs() > 1e-8) {
        if *lead < 0.0 {
            for x in &mut xi {
                *x = -*x;
            }
        }
    }
    LambdaDirection::new(n_bar.to_vec(), v_bar.clone(), xi).ok()
}

/// Convex decomposition of a hull point into constraint-set states.
#[derive(Debug, Clone, PartialEq)]
pub struct CaratheodoryDecomposition {
    /// Positive weights summing to 1.
    pub weights: Vec<f64>,
    /// Momenta on the sphere |a|^2 = n rho q, one per weight.
    pub momenta: Vec<Vec<f64>>,
    /// Euclidean norm of sum(weight_i z_i) - w.
    pub reconstruction_residual: f64,
}

impl CaratheodoryDecomposition {
    pub fn states(&self, rho: f64) -> Vec<FlowState> {
        self.momenta
            .iter()
            .map(|a| FlowState::on_constraint(a.clone(), rho))
            .collect()
    }
}

/// Ambient dimension of the (m, U) state space.
pub fn ambient_dim(n: usize) -> usize {
    n + n * (n + 1) / 2 - 1
}

fn state_coords(w: &FlowState) -> Vec<f64> {
    let mut c = w.m.clone();
    c.extend(w.u.coords());
    c
}

const TAG_DESIGN: u64 = 0x64657369_676e;
const TAG_ROTATION: u64 = 0x726f7461_7465;

/// Fixed direction design (seed-independent), later rotated per attempt.
fn base_design(n: usize, count: usize) -> Vec<Vec<f64>> {
    let mut r = rng::stream(0, &[TAG_DESIGN, n as u64]);
    (0..count).map(|_| rng::unit_vector(n, &mut r)).collect()
}

/// Decomposes a strictly interior hull point as a convex combination of
/// constraint-set states.
///
/// Candidate momenta are an antipodal design of 2(N+1) sphere points under a
/// seeded rotation; a feasibility LP finds nonnegative weights summing to 1.
/// On infeasibility the candidate count doubles with a fresh rotation, up to
/// six doublings, and the basic solution is pruned to at most N+1 points by
/// nullspace stepping.
pub fn caratheodory_decompose(
    p: &ConstraintParams,
    w: &FlowState,
    seed: u64,
) -> Result<CaratheodoryDecomposition> {
    let cert = hull_membership(p, w)?;
    if !(cert.margin > 0.0) {
        return Err(Error::InvalidInput(format!(
            "decomposition requires a strictly interior point (margin {})",
            cert.margin
        )));
    }
    let n = p.n;
    let nn = ambient_dim(n);
    let radius = p.momentum_radius();
    let target = state_coords(w);

    for round in 0..=6u32 {
        let dirs = (nn + 1) << round;
        let design = base_design(n, dirs);
        let rot = rng::rotation(n, &mut rng::stream(seed, &[TAG_ROTATION, round as u64]));

        let mut momenta: Vec<Vec<f64>> = Vec::with_capacity(2 * dirs);
        for d in &design {
            let v = DVector::from_column_slice(d);
            let rd = &rot * v;
            let a: Vec<f64> = rd.iter().map(|x| x * radius).collect();
            let neg: Vec<f64> = a.iter().map(|x| -x).collect();
            momenta.push(a);
            momenta.push(neg);
        }

        let cols = momenta.len();
        let mut a = DMatrix::zeros(nn + 1, cols);
        for (j, mj) in momenta.iter().enumerate() {
            let z = FlowState::on_constraint(mj.clone(), p.rho);
            for (i, c) in state_coords(&z).iter().enumerate() {
                a[(i, j)] = *c;
            }
            a[(nn, j)] = 1.0;
        }
        let mut b = DVector::zeros(nn + 1);
        for (i, c) in target.iter().enumerate() {
            b[i] = *c;
        }
        b[nn] = 1.0;

        if let Some(x) = phase1_feasible(&a, &b) {
            let mut weights = Vec::new();
            let mut kept = Vec::new();
            for (j, &xj) in x.iter().enumerate() {
                if xj > 1e-13 {
                    weights.push(xj);
                    kept.push(momenta[j].clone());
                }
            }
            prune_to_caratheodory(&mut weights, &mut kept, nn + 1, p.rho);
            let residual = reconstruction_residual(p, w, &weights, &kept);
            if residual <= 1e-9 * (1.0 + w.norm() + radius * radius / p.rho) {
                return Ok(CaratheodoryDecomposition {
                    weights,
                    momenta: kept,
                    reconstruction_residual: residual,
                });
            }
        }
    }
    Err(Error::DecompositionFailed(format!(
        "no feasible convex decomposition after 6 doubling rounds (hull margin {:.3e}); \
         shrink toward a known interior point first",
        cert.margin
    )))
}

fn reconstruction_residual(
    p: &ConstraintParams,
    w: &FlowState,
    weights: &[f64],
    momenta: &[Vec<f64>],
) -> f64 {
    let mut acc = FlowState::zero(p.n);
    for (wt, a) in weights.iter().zip(momenta) {
        acc = acc.add_scaled(&FlowState::on_constraint(a.clone(), p.rho), *wt);
    }
    acc.sub(w).norm()
}

/// Carathéodory reduction: while more than `max_points` remain, step along a
/// nullspace direction of the stacked (coords; 1) matrix until a weight hits
/// zero. Preserves the reconstruction and the weight sum exactly.
fn prune_to_caratheodory(
    weights: &mut Vec<f64>,
    momenta: &mut Vec<Vec<f64>>,
    max_points: usize,
    rho: f64,
) {
    while weights.len() > max_points {
        let k = weights.len();
        let rows = max_points; // nn + 1
        let mut z = DMatrix::zeros(rows, k);
        for (j, a) in momenta.iter().enumerate() {
            let st = FlowState::on_constraint(a.clone(), rho);
            for (i, c) in state_coords(&st).iter().enumerate() {
                z[(i, j)] = *c;
            }
            z[(rows - 1, j)] = 1.0;
        }
        let svd = z.svd(false, true);
        let v_t = match svd.v_t.as_ref() {
            Some(v) => v,
            None => return,
        };
        let mut best = 0usize;
        for (i, s) in svd.singular_values.iter().enumerate() {
            if *s < svd.singular_values[best] {
                best = i;
            }
        }
        let mut nu: Vec<f64> = v_t.row(best).iter().copied().collect();
        if !nu.iter().any(|x| *x > 1e-14) {
            for x in &mut nu {
                *x = -*x;
            }
        }
        let mut t = f64::INFINITY;
        let mut drop = usize::MAX;
        for (j, &nj) in nu.iter().enumerate() {
            if nj > 1e-14 {
                let tj = weights[j] / nj;
                if tj < t {
                    t = tj;
                    drop = j;
                }
            }
        }
        if drop == usize::MAX || !t.is_finite() {
            return; // defensive: no usable direction
        }
        for (j, wj) in weights.iter_mut().enumerate() {
            *wj -= t * nu[j];
        }
        weights[drop] = 0.0;
        let mut j = 0;
        while j < weights.len() {
            if weights[j] <= 1e-13 {
                weights.swap_remove(j);
                momenta.swap_remove(j);
            } else {
                j += 1;
            }
        }
    }
}

/// Phase-I simplex with Bland's rule: finds x >= 0 with A x = b, or None.
/// Returns a basic solution (at most `rows` nonzero entries).
fn phase1_feasible(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let m = a.nrows();
    let nv = a.ncols();
    let tol = 1e-11;

    // Tableau [A | I | b] with rows flipped so b >= 0; artificial basis.
    let mut t = DMatrix::zeros(m, nv + m + 1);
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..nv {
            t[(i, j)] = sign * a[(i, j)];
        }
        t[(i, nv + i)] = 1.0;
        t[(i, nv + m)] = sign * b[i];
    }
    // Phase-I objective row: reduced costs for minimizing the artificial sum.
    let mut obj = vec![0.0f64; nv + m + 1];
    for j in 0..nv {
        obj[j] = -(0..m).map(|i| t[(i, j)]).sum::<f64>();
    }
    obj[nv + m] = -(0..m).map(|i| t[(i, nv + m)]).sum::<f64>();
    let mut basis: Vec<usize> = (nv..nv + m).collect();

    for _ in 0..20_000 {
        // Bland: entering column = lowest index with negative reduced cost.
        let enter = (0..nv + m).find(|&j| obj[j] < -tol);
        let Some(enter) = enter else { break };
        // Ratio test; Bland tie-break on lowest basic variable index.
        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..m {
            let pivot = t[(i, enter)];
            if pivot > tol {
                let ratio = t[(i, nv + m)] / pivot;
                let better = ratio < best_ratio - 1e-15
                    || ((ratio - best_ratio).abs() <= 1e-15
                        && leave.is_some_and(|l| basis[i] < basis[l]));
                if leave.is_none() || better {
                    best_ratio = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(leave) = leave else {
            return None; // unbounded phase-I: cannot happen, bail out
        };
        // Pivot.
        let piv = t[(leave, enter)];
        for j in 0..nv + m + 1 {
            t[(leave, j)] /= piv;
        }
        for i in 0..m {
            if i != leave {
                let f = t[(i, enter)];
                if f != 0.0 {
                    for j in 0..nv + m + 1 {
                        t[(i, j)] -= f * t[(leave, j)];
                    }
                }
            }
        }
        let f = obj[enter];
        if f != 0.0 {
            for j in 0..nv + m + 1 {
                obj[j] -= f * t[(leave, j)];
            }
        }
        basis[leave] = enter;
    }

    let objective = -obj[nv + m];
    if objective.abs() > 1e-10 * (1.0 + b.amax()) {
        return None;
    }
    let mut x = DVector::zeros(nv);
    for (i, &bi) in basis.iter().enumerate() {
        if bi < nv {
            x[bi] = t[(i, nv + m)].max(0.0);
        }
    }
    Some(x)
}

/// An oscillation segment [center - dir, center + dir] staying well inside
/// the hull.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleSegment {
    pub center: FlowState,
    pub direction: LambdaDirection,
    /// |n_bar| of the (possibly shrunk) direction.
    pub half_length_m: f64,
    /// Minimum hull margin over both endpoints.
    pub interior_margin: f64,
    /// Applied shrink factor in (0, 1].
    pub shrink: f64,
    /// Momentum pair (a, b): the direction is parallel to
    /// (a - b, (a (x) a - b (x) b)/rho).
    pub momentum_pair: (Vec<f64>, Vec<f64>),
}

impl AdmissibleSegment {
    pub fn endpoints(&self) -> (FlowState, FlowState) {
        let d = self.direction.as_state();
        (
            self.center.add_scaled(&d, 1.0),
            self.center.add_scaled(&d, -1.0),
        )
    }
}

/// Builds an oscillation segment through w from its convex decomposition.
///
/// With weights sorted descending, picks j maximizing weight_j |m_j - m_1|
/// (lowest index on ties) and takes the direction (weight_j / 2)(z_j - z_1),
/// then shrinks until both endpoints keep at least half the center's hull
/// margin. The pre-shrink momentum half-length is certified against the
/// floor (n rho q - |m|^2) / (4 N sqrt(n rho q)).
pub fn admissible_segment(
    p: &ConstraintParams,
    w: &FlowState,
    seed: u64,
) -> Result<AdmissibleSegment> {
    let center_margin = hull_membership(p, w)?.margin;
    if !(center_margin > 0.0) {
        return Err(Error::InvalidInput(format!(
            "segment construction requires a strictly interior point (margin {center_margin})"
        )));
    }
    let decomp = caratheodory_decompose(p, w, seed)?;
    let mut order: Vec<usize> = (0..decomp.weights.len()).collect();
    order.sort_by(|&i, &j| decomp.weights[j].partial_cmp(&decomp.weights[i]).unwrap());

    let m1 = &decomp.momenta[order[0]];
    let mut best_j = None;
    let mut best_val = 0.0;
    for &oj in &order[1..] {
        let d: f64 = decomp.momenta[oj]
            .iter()
            .zip(m1)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let val = decomp.weights[oj] * d;
        if val > best_val + 1e-15 * (1.0 + best_val) {
            best_val = val;
            best_j = Some(oj);
        }
    }
    let Some(j) = best_j else {
        return Err(Error::DecompositionFailed(
            "decomposition produced no momentum spread to oscillate along".into(),
        ));
    };

    let z1 = FlowState::on_constraint(m1.clone(), p.rho);
    let zj = FlowState::on_constraint(decomp.momenta[j].clone(), p.rho);
    let half = decomp.weights[j] * 0.5;
    let dir_full = zj.sub(&z1).scale(half);

    let pre_len = norm(&dir_full.m);
    let nrq = p.n as f64 * p.rho * p.q;
    let floor = (nrq - w.m_norm_sq()) / (4.0 * ambient_dim(p.n) as f64 * nrq.sqrt());
    if pre_len < floor * (1.0 - 1e-9) {
        return Err(Error::DecompositionFailed(format!(
            "segment momentum half-length {pre_len:.6e} under the certified floor {floor:.6e}"
        )));
    }

    // Shrink (if needed) so both endpoints keep half the center margin.
    let endpoint_margin = |s: f64| -> f64 {
        let a = w.add_scaled(&dir_full, s);
        let b = w.add_scaled(&dir_full, -s);
        let ma = hull_membership(p, &a).map(|c| c.margin).unwrap_or(-1.0);
        let mb = hull_membership(p, &b).map(|c| c.margin).unwrap_or(-1.0);
        ma.min(mb)
    };
    let need = 0.5 * center_margin;
    let shrink = if endpoint_margin(1.0) >= need {
        1.0
    } else {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if endpoint_margin(mid) >= need {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let dir = dir_full.scale(shrink);
    let interior_margin = endpoint_margin(shrink);

    let lam = wave_cone_test(&dir.m, &dir.u).ok_or_else(|| {
        Error::DecompositionFailed(
            "constraint-set difference direction unexpectedly failed the cone test".into(),
        )
    })?;

    Ok(AdmissibleSegment {
        center: w.clone(),
        half_length_m: norm(&dir.m),
        direction: lam,
        interior_margin,
        shrink,
        momentum_pair: (decomp.momenta[j].clone(), m1.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn p3() -> ConstraintParams {
        ConstraintParams::new(3, 1.0, 1.0).unwrap()
    }

    fn random_k_momentum(p: &ConstraintParams, r: &mut impl Rng) -> Vec<f64> {
        let radius = p.momentum_radius();
        rng::unit_vector(p.n, r)
            .into_iter()
            .map(|x| x * radius)
            .collect()
    }

    #[test]
    fn cone_test_known_cases() {
        let mut upper = vec![0.0; 6];
        upper[1] = 1.0; // e1 (x) e2 + e2 (x) e1
        let v = SymTraceFree::from_upper_triangle(3, upper).unwrap();
        let found = wave_cone_test(&[1.0, 0.0, 0.0], &v).expect("e3 annihilates both");
        assert!((found.xi[2].abs() - 1.0).abs() < 1e-12);

        let nonsing =
            SymTraceFree::from_upper_triangle(3, vec![2.0, 0.0, 0.0, -1.0, 0.0, -1.0]).unwrap();
        assert!(wave_cone_test(&[1.0, 0.0, 0.0], &nonsing).is_none());
    }

    #[test]
    fn k_differences_lie_in_the_cone() {
        for n in [3usize, 4] {
            let p = ConstraintParams::new(n, 1.3, 0.7).unwrap();
            let mut r = rng::stream(11, &[n as u64]);
            for _ in 0..100 {
                let a = random_k_momentum(&p, &mut r);
                let b = random_k_momentum(&p, &mut r);
                let d = FlowState::on_constraint(a, p.rho)
                    .sub(&FlowState::on_constraint(b, p.rho));
                if d.norm() < 1e-8 {
                    continue;
                }
                let dir = wave_cone_test(&d.m, &d.u);
                assert!(dir.is_some(), "difference of constraint states left the cone");
            }
        }
    }

    #[test]
    fn decomposes_the_origin() {
        let p = p3();
        let d = caratheodory_decompose(&p, &FlowState::zero(3), 5).unwrap();
        let sum: f64 = d.weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(d.reconstruction_residual <= 1e-9);
        assert!(d.weights.len() <= ambient_dim(3) + 1);
        for (wt, m) in d.weights.iter().zip(&d.momenta) {
            assert!(*wt > 0.0 && *wt <= 1.0);
            let m2: f64 = m.iter().map(|x| x * x).sum();
            assert!((m2 - 3.0).abs() < 1e-10);
        }
    }

    #[test]
    fn decomposes_a_constructed_midpoint() {
        let p = p3();
        let mut r = rng::stream(21, &[0]);
        let z1 = FlowState::on_constraint(random_k_momentum(&p, &mut r), p.rho);
        let z2 = FlowState::on_constraint(random_k_momentum(&p, &mut r), p.rho);
        let mid = z1.add_scaled(&z2, 1.0).scale(0.5);
        if hull_membership(&p, &mid).unwrap().margin <= 1e-6 {
            return; // nearly parallel pair: midpoint not usefully interior
        }
        let d = caratheodory_decompose(&p, &mid, 9).unwrap();
        assert!(d.reconstruction_residual <= 1e-9);
    }

    #[test]
    fn decomposes_seeded_interior_points() {
        let p = p3();
        let mut r = rng::stream(31, &[0]);
        for trial in 0..30u64 {
            // Convex combination of constraint states, shrunk toward 0.
            let k = 3 + (trial as usize % 3);
            let mut acc = FlowState::zero(3);
            let mut total = 0.0;
            let mut wts = Vec::new();
            for _ in 0..k {
                let wt: f64 = r.gen_range(0.1..1.0);
                wts.push(wt);
                total += wt;
            }
            for wt in &wts {
                let z = FlowState::on_constraint(random_k_momentum(&p, &mut r), p.rho);
                acc = acc.add_scaled(&z, wt / total);
            }
            let w = acc.scale(0.85);
            let d = caratheodory_decompose(&p, &w, 1000 + trial).unwrap();
            assert!(
                d.reconstruction_residual <= 1e-9,
                "trial {trial}: residual {}",
                d.reconstruction_residual
            );
            assert!(d.weights.len() <= ambient_dim(3) + 1);
        }
    }

    #[test]
    fn decomposition_is_deterministic() {
        let p = p3();
        let w = FlowState::on_constraint(vec![0.4, -0.2, 0.1], p.rho).scale(0.6);
        let d1 = caratheodory_decompose(&p, &w, 77).unwrap();
        let d2 = caratheodory_decompose(&p, &w, 77).unwrap();
        assert_eq!(d1, d2);
        let d3 = caratheodory_decompose(&p, &w, 78).unwrap();
        assert!(d1.momenta != d3.momenta);
    }

    #[test]
    fn rejects_boundary_points() {
        let p = p3();
        let r = p.momentum_radius();
        let w = FlowState::on_constraint(vec![r, 0.0, 0.0], p.rho);
        assert!(caratheodory_decompose(&p, &w, 1).is_err());
    }

    #[test]
    fn segment_at_origin_certifies_length_floor() {
        let p = p3();
        let seg = admissible_segment(&p, &FlowState::zero(3), 13).unwrap();
        let floor = 3.0 / (4.0 * 8.0 * 3f64.sqrt());
        assert!(
            seg.half_length_m * (1.0 / seg.shrink) >= floor * (1.0 - 1e-9),
            "pre-shrink length {} under floor {floor}",
            seg.half_length_m / seg.shrink
        );
        assert!(seg.interior_margin >= 0.5 * 1.5 - 1e-12);
        let (a, b) = seg.endpoints();
        assert!(hull_membership(&p, &a).unwrap().margin > 0.0);
        assert!(hull_membership(&p, &b).unwrap().margin > 0.0);
    }

    #[test]
    fn segment_directions_pass_the_cone_test() {
        let p = p3();
        let mut r = rng::stream(55, &[0]);
        for trial in 0..20u64 {
            let z1 = FlowState::on_constraint(random_k_momentum(&p, &mut r), p.rho);
            let z2 = FlowState::on_constraint(random_k_momentum(&p, &mut r), p.rho);
            let w = z1.add_scaled(&z2, 1.0).scale(0.5).scale(0.8);
            let seg = admissible_segment(&p, &w, 400 + trial).unwrap();
            // Already validated inside the constructor; re-check the invariants.
            let d = seg.direction.as_state();
            assert!(wave_cone_test(&d.m, &d.u).is_some());
            let center_margin = hull_membership(&p, &w).unwrap().margin;
            assert!(seg.interior_margin >= 0.5 * center_margin - 1e-12);
        }
    }

    #[test]
    fn simplex_finds_and_rejects() {
        // x1 + x2 = 1, x1 - x2 = 0 -> x = (1/2, 1/2).
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]);
        let b = DVector::from_column_slice(&[1.0, 0.0]);
        let x = phase1_feasible(&a, &b).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-12 && (x[1] - 0.5).abs() < 1e-12);

        // x1 + x2 = -1 has no nonnegative solution.
        let b_bad = DVector::from_column_slice(&[-1.0, 0.0]);
        let a_one = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        assert!(phase1_feasible(&a_one, &b_bad).is_none());
    }
}
