//! Smooth cutoffs: tensor-product cube bumps and radial mollifiers.

use crate::profile1d::{ramp_down_pieces, ramp_up_pieces, Piece, PiecewisePoly};
use crate::{Error, Result};

/// 1-D plateau on [-1, 1]: 0 at the ends, exactly 1 on [-(1-margin), 1-margin],
/// polynomial smoothstep ramps of width `margin`.
pub fn plateau_profile(margin: f64, order: usize) -> Result<PiecewisePoly> {
    if !(margin > 0.0 && margin < 1.0) {
        return Err(Error::InvalidParams(format!(
            "plateau margin {margin} outside (0,1)"
        )));
    }
    let mut pieces = ramp_up_pieces(-1.0, margin, 0.0, order);
    pieces.push(Piece {
        start: -1.0 + margin,
        width: 2.0 - 2.0 * margin,
        coeffs: vec![1.0],
    });
    pieces.extend(ramp_down_pieces(1.0 - margin, margin, 1.0, order));
    PiecewisePoly::compact(pieces, -1.0, 1.0)
}

/// Smooth bump on a box: the product of one shared 1-D plateau per box axis.
/// Exactly 1 on the inner (1-margin)-scaled box, exactly 0 outside the cell;
/// all partial derivatives closed-form. The box may carry per-axis
/// half-widths and an orthonormal frame (rows = box axes); the default frame
/// is the coordinate one.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffBump {
    pub center: Vec<f64>,
    pub half_widths: Vec<f64>,
    /// Orthonormal box axes, one row per local coordinate; None = global axes.
    pub frame: Option<Vec<Vec<f64>>>,
    /// Ramp fraction of the half-width on each side.
    pub margin: f64,
    pub order: usize,
    pub profile: PiecewisePoly,
}

impl CutoffBump {
    /// Axis-aligned cube.
    pub fn new(center: Vec<f64>, half_width: f64, margin: f64, order: usize) -> Result<Self> {
        let hw = vec![half_width; center.len()];
        Self::boxed(center, hw, margin, order)
    }

    /// Axis-aligned box with per-axis half-widths.
    pub fn boxed(
        center: Vec<f64>,
        half_widths: Vec<f64>,
        margin: f64,
        order: usize,
    ) -> Result<Self> {
        if half_widths.len() != center.len() {
            return Err(Error::InvalidInput(format!(
                "{} half-widths for a {}-dimensional box",
                half_widths.len(),
                center.len()
            )));
        }
        if half_widths.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::InvalidParams(
                "box half-widths must be positive".into(),
            ));
        }
        Ok(Self {
            profile: plateau_profile(margin, order)?,
            center,
            half_widths,
            frame: None,
            margin,
            order,
        })
    }

    /// Box in a rotated orthonormal frame; `frame` rows are the box axes.
    pub fn framed(
        center: Vec<f64>,
        frame: Vec<Vec<f64>>,
        half_widths: Vec<f64>,
        margin: f64,
        order: usize,
    ) -> Result<Self> {
        let n = center.len();
        if frame.len() != n || frame.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput(format!("frame is not {n}x{n}")));
        }
        for i in 0..n {
            for j in i..n {
                let dot: f64 = frame[i].iter().zip(&frame[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > 1e-10 {
                    return Err(Error::InvalidInput(format!(
                        "frame rows {i},{j} not orthonormal: dot {dot}"
                    )));
                }
            }
        }
        let mut cut = Self::boxed(center, half_widths, margin, order)?;
        cut.frame = Some(frame);
        Ok(cut)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Component j of box axis k.
    pub fn axis_component(&self, k: usize, j: usize) -> f64 {
        match &self.frame {
            Some(f) => f[k][j],
            None => {
                if k == j {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Local coordinate along box axis k, scaled so the cell is [-1, 1].
    pub fn local_coord(&self, k: usize, x: &[f64]) -> f64 {
        let proj = match &self.frame {
            Some(f) => f[k]
                .iter()
                .zip(x.iter().zip(&self.center))
                .map(|(a, (xi, ci))| a * (xi - ci))
                .sum::<f64>(),
            None => x[k] - self.center[k],
        };
        proj / self.half_widths[k]
    }

    /// Global point for local coordinates u in [-1, 1]^n.
    pub fn point_at(&self, u: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = self.center.clone();
        for k in 0..n {
            let step = u[k] * self.half_widths[k];
            for (j, xj) in x.iter_mut().enumerate() {
                *xj += step * self.axis_component(k, j);
            }
        }
        x
    }

    /// Mixed derivative of the given per-box-axis orders (directional along
    /// each box axis; plain partials for the default frame).
    pub fn eval(&self, x: &[f64], orders: &[usize]) -> f64 {
        let mut prod = 1.0;
        for k in 0..self.center.len() {
            let u = self.local_coord(k, x);
            let v = self.profile.eval(u, orders[k]);
            if v == 0.0 {
                return 0.0;
            }
            prod *= v * self.half_widths[k].powi(-(orders[k] as i32));
        }
        prod
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut prod = 1.0;
        for k in 0..self.center.len() {
            let v = self.profile.eval(self.local_coord(k, x), 0);
            if v == 0.0 {
                return 0.0;
            }
            prod *= v;
        }
        prod
    }

    /// Fraction of the cell where the bump is not identically 1.
    pub fn nonplateau_fraction(&self) -> f64 {
        1.0 - (1.0 - self.margin).powi(self.center.len() as i32)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.dim()).all(|k| self.local_coord(k, x).abs() < 1.0)
    }

    pub fn volume(&self) -> f64 {
        self.half_widths.iter().map(|h| 2.0 * h).product()
    }
}

/// Spherically symmetric unit-mass mollifier: radial profile constant on
/// r < 1/2, smoothstep decay to zero at r = 1; scaled copies omega_eps have
/// support in the eps-ball and mass exactly preserved.
#[derive(Debug, Clone, PartialEq)]
pub struct Mollifier {
    pub n: usize,
    pub epsilon: f64,
    /// Radial profile g(r) on [0, 1] before epsilon scaling, normalized so
    /// the n-dimensional integral of g(|x|) equals 1.
    pub radial: PiecewisePoly,
}

pub(crate) fn sphere_area(n: usize) -> f64 {
    // Surface measure of S^{n-1}.
    match n {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI,
        4 => 2.0 * std::f64::consts::PI * std::f64::consts::PI,
        _ => {
            // sigma_{n-1} = 2 pi^{n/2} / Gamma(n/2) via recursion
            // sigma_{n-1} = 2 pi sigma_{n-3} / (n - 2).
            2.0 * std::f64::consts::PI * sphere_area(n - 2) / (n - 2) as f64
        }
    }
}

impl Mollifier {
    pub fn new(n: usize, epsilon: f64, order: usize) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParams(format!(
                "mollifier radius {epsilon} must be positive"
            )));
        }
        // Constant core, then descend from 1 to 0 over [1/2, 1].
        let mut pieces = vec![Piece {
            start: 0.0,
            width: 0.5,
            coeffs: vec![1.0],
        }];
        pieces.extend(ramp_down_pieces(0.5, 0.5, 1.0, order));
        let mut radial = PiecewisePoly::compact(pieces, 0.0, 1.0)?;
        // Normalize: integral over R^n of g(|x|) = sigma_{n-1} int r^{n-1} g(r) dr.
        let mut moment = 0.0;
        for p in &radial.pieces {
            // int over piece of r^{n-1} g: expand r = start + width u.
            let r_poly = {
                let mut c = vec![1.0];
                let lin = [p.start, p.width];
                for _ in 0..n - 1 {
                    c = crate::profile1d::poly_mul(&c, &lin);
                }
                c
            };
            let prod = crate::profile1d::poly_mul(&r_poly, &p.coeffs);
            moment += p.width * crate::profile1d::poly_integral01(&prod);
        }
        let mass = sphere_area(n) * moment;
        for p in &mut radial.pieces {
            for c in &mut p.coeffs {
                *c /= mass;
            }
        }
        Ok(Self { n, epsilon, radial })
    }

    /// omega_eps(x) = eps^{-n} g(|x|/eps).
    pub fn eval(&self, x: &[f64]) -> f64 {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt() / self.epsilon;
        self.radial.eval(r, 0) * self.epsilon.powi(-(self.n as i32))
    }

    pub fn eval_radial(&self, r: f64) -> f64 {
        self.radial.eval(r / self.epsilon, 0) * self.epsilon.powi(-(self.n as i32))
    }

    /// Exact total mass (should be 1 up to roundoff).
    pub fn mass(&self) -> f64 {
        let mut moment = 0.0;
        for p in &self.radial.pieces {
            let mut r_poly = vec![1.0];
            let lin = [p.start, p.width];
            for _ in 0..self.n - 1 {
                r_poly = crate::profile1d::poly_mul(&r_poly, &lin);
            }
            let prod = crate::profile1d::poly_mul(&r_poly, &p.coeffs);
            moment += p.width * crate::profile1d::poly_integral01(&prod);
        }
        sphere_area(self.n) * moment
    }
}

/// Compose a plateau restricted to [a, b] in an arbitrary coordinate: the
/// profile for slab-type cutoffs (thin direction of laminate bands).
pub fn plateau_on_interval(lo: f64, hi: f64, margin: f64, order: usize) -> Result<PiecewisePoly> {
    if !(hi > lo) {
        return Err(Error::InvalidParams(format!("empty interval [{lo}, {hi}]")));
    }
    let base = plateau_profile(margin, order)?;
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (lo + hi);
    let pieces = base
        .pieces
        .iter()
        .map(|p| Piece {
            start: mid + half * p.start,
            width: half * p.width,
            coeffs: p.coeffs.clone(),
        })
        .collect();
    PiecewisePoly::compact(pieces, lo, hi)
}
