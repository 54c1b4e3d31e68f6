//! Piecewise-polynomial 1-D profiles.
//!
//! Every smooth building block (staircase oscillation profiles, plateau
//! cutoffs, mollifier radials) is a piecewise polynomial stored in
//! normalized per-piece coordinates, so derivatives of any order,
//! antiderivatives, means, sup bounds, and products integrate exactly —
//! no quadrature error anywhere in the construction itself.

use crate::{Error, Result};

/// Evaluate sum c_k u^k by Horner.
pub fn poly_eval(coeffs: &[f64], u: f64) -> f64 {
    let mut r = 0.0;
    for &c in coeffs.iter().rev() {
        r = r * u + c;
    }
    r
}

/// Evaluate the `order`-th derivative with respect to u.
pub fn poly_eval_deriv(coeffs: &[f64], u: f64, order: usize) -> f64 {
    if order >= coeffs.len() {
        return 0.0;
    }
    let mut r = 0.0;
    for k in (order..coeffs.len()).rev() {
        // falling factorial k (k-1) ... (k-order+1)
        let mut fall = 1.0;
        for i in 0..order {
            fall *= (k - i) as f64;
        }
        r = r * u + coeffs[k] * fall;
    }
    r
}

pub fn poly_derivative(coeffs: &[f64]) -> Vec<f64> {
    if coeffs.len() <= 1 {
        return vec![0.0];
    }
    (1..coeffs.len()).map(|k| coeffs[k] * k as f64).collect()
}

/// Rigorous sup bound for |p| on [0,1]: the largest absolute Bernstein
/// coefficient. b_i = Σ_{j≤i} c_j·C(i,j)/C(d,j); the ratio is built
/// incrementally as Π(i−t)/(d−t) ≤ 1, so nothing overflows.
pub fn bernstein_bound(coeffs: &[f64]) -> f64 {
    let d = coeffs.len().saturating_sub(1);
    if d == 0 {
        return coeffs.first().map_or(0.0, |c| c.abs());
    }
    let mut worst = 0.0f64;
    for i in 0..=d {
        let mut b = 0.0;
        let mut ratio = 1.0;
        for (j, &c) in coeffs.iter().enumerate().take(i + 1) {
            if j > 0 {
                ratio *= (i - j + 1) as f64 / (d - j + 1) as f64;
            }
            b += c * ratio;
        }
        worst = worst.max(b.abs());
    }
    worst
}

pub fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Integral over u in [0,1].
pub fn poly_integral01(coeffs: &[f64]) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| c / (k + 1) as f64)
        .sum()
}

/// Coefficients of p(alpha + gamma v) as a polynomial in v.
pub fn poly_compose_affine(coeffs: &[f64], alpha: f64, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0];
    for &c in coeffs.iter().rev() {
        // out := out * (alpha + gamma v) + c
        let mut next = vec![0.0; out.len() + 1];
        for (k, &o) in out.iter().enumerate() {
            next[k] += o * alpha;
            next[k + 1] += o * gamma;
        }
        next[0] += c;
        out = next;
    }
    while out.len() > 1 && out.last() == Some(&0.0) {
        out.pop();
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    /// 1-periodic; pieces cover [0, 1].
    Periodic,
    /// Identically zero outside [lo, hi].
    Compact { lo: f64, hi: f64 },
}

/// One polynomial piece in the normalized coordinate u = (s - start)/width.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub start: f64,
    pub width: f64,
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePoly {
    pub pieces: Vec<Piece>,
    pub domain: Domain,
}

impl PiecewisePoly {
    pub fn periodic(pieces: Vec<Piece>) -> Result<Self> {
        validate_cover(&pieces, 0.0, 1.0)?;
        Ok(Self {
            pieces,
            domain: Domain::Periodic,
        })
    }

    pub fn compact(pieces: Vec<Piece>, lo: f64, hi: f64) -> Result<Self> {
        validate_cover(&pieces, lo, hi)?;
        Ok(Self {
            pieces,
            domain: Domain::Compact { lo, hi },
        })
    }

    pub fn constant_periodic(v: f64) -> Self {
        Self {
            pieces: vec![Piece {
                start: 0.0,
                width: 1.0,
                coeffs: vec![v],
            }],
            domain: Domain::Periodic,
        }
    }

    fn locate(&self, s: f64) -> usize {
        // Pieces are few (single digits); linear scan is deterministic & fast.
        let mut idx = 0;
        for (i, p) in self.pieces.iter().enumerate() {
            if s >= p.start {
                idx = i;
            } else {
                break;
            }
        }
        idx
    }

    /// Value of the `order`-th derivative at x. Exactly zero outside a
    /// compact domain, 1-periodic wrap otherwise.
    pub fn eval(&self, x: f64, order: usize) -> f64 {
        let s = match self.domain {
            Domain::Periodic => {
                let f = x - x.floor();
                if f >= 1.0 {
                    0.0
                } else {
                    f
                }
            }
            Domain::Compact { lo, hi } => {
                if x < lo || x >= hi {
                    return 0.0;
                }
                x
            }
        };
        let p = &self.pieces[self.locate(s)];
        let u = ((s - p.start) / p.width).clamp(0.0, 1.0);
        poly_eval_deriv(&p.coeffs, u, order) * p.width.powi(-(order as i32))
    }

    /// Maximal intervals on which the function is exactly a constant
    /// polynomial, as (start, end, value) triples in domain order.
    pub fn constant_runs(&self) -> Vec<(f64, f64, f64)> {
        let mut runs: Vec<(f64, f64, f64)> = Vec::new();
        for p in &self.pieces {
            if p.coeffs.iter().skip(1).any(|c| *c != 0.0) {
                continue;
            }
            let v = p.coeffs.first().copied().unwrap_or(0.0);
            let (s, e) = (p.start, p.start + p.width);
            match runs.last_mut() {
                Some((_, re, rv)) if *re == s && *rv == v => *re = e,
                _ => runs.push((s, e, v)),
            }
        }
        runs
    }

    /// Exact derivative as a new piecewise polynomial.
    pub fn derivative(&self) -> Self {
        Self {
            pieces: self
                .pieces
                .iter()
                .map(|p| Piece {
                    start: p.start,
                    width: p.width,
                    coeffs: poly_derivative(&p.coeffs)
                        .into_iter()
                        .map(|c| c / p.width)
                        .collect(),
                })
                .collect(),
            domain: self.domain.clone(),
        }
    }

    /// Mean over one period (periodic) or the integral over the support
    /// divided by nothing — for compact profiles this is the plain integral.
    pub fn integral(&self) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.width * poly_integral01(&p.coeffs))
            .sum()
    }

    /// Periodic antiderivative, re-centered to exact zero mean.
    /// Requires the input to have (numerically) zero integral.
    pub fn antiderivative_mean_zero(&self) -> Result<Self> {
        if !matches!(self.domain, Domain::Periodic) {
            return Err(Error::InvalidInput(
                "periodic antiderivative of a compact profile".into(),
            ));
        }
        let total = self.integral();
        if total.abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "antiderivative of a non-mean-zero profile (integral {total:e})"
            )));
        }
        let mut acc = 0.0;
        let mut pieces = Vec::with_capacity(self.pieces.len());
        for p in &self.pieces {
            let mut coeffs = vec![0.0; p.coeffs.len() + 1];
            coeffs[0] = acc;
            for (k, &c) in p.coeffs.iter().enumerate() {
                coeffs[k + 1] = p.width * c / (k + 1) as f64;
            }
            acc = poly_eval(&coeffs, 1.0);
            pieces.push(Piece {
                start: p.start,
                width: p.width,
                coeffs,
            });
        }
        let mut out = Self {
            pieces,
            domain: Domain::Periodic,
        };
        let mean = out.integral();
        for p in &mut out.pieces {
            p.coeffs[0] -= mean;
        }
        Ok(out)
    }

    /// Rigorous upper bound for sup |d^order/ds^order|. Per piece, the
    /// derivative polynomial is enclosed by the max absolute Bernstein
    /// coefficient on [0,1] (Bernstein polynomials are a positive partition
    /// of unity, so |p| ≤ max|b_i| pointwise) — far tighter than raw
    /// coefficient mass for the high-degree smoothstep pieces.
    pub fn sup_bound(&self, order: usize) -> f64 {
        self.pieces
            .iter()
            .map(|p| {
                let mut d = p.coeffs.clone();
                for _ in 0..order {
                    d = poly_derivative(&d);
                }
                bernstein_bound(&d) * p.width.powi(-(order as i32))
            })
            .fold(0.0, f64::max)
    }

    /// Pointwise product with identical piece structure (same breakpoints).
    pub fn product_same_breaks(&self, other: &Self) -> Result<Self> {
        if self.pieces.len() != other.pieces.len() || self.domain != other.domain {
            return Err(Error::InvalidInput("mismatched piece structures".into()));
        }
        let pieces = self
            .pieces
            .iter()
            .zip(&other.pieces)
            .map(|(a, b)| {
                if (a.start - b.start).abs() > 1e-14 || (a.width - b.width).abs() > 1e-14 {
                    return Err(Error::InvalidInput("mismatched piece structures".into()));
                }
                Ok(Piece {
                    start: a.start,
                    width: a.width,
                    coeffs: poly_mul(&a.coeffs, &b.coeffs),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            pieces,
            domain: self.domain.clone(),
        })
    }

    fn domain_bounds(&self) -> (f64, f64) {
        match self.domain {
            Domain::Periodic => (0.0, 1.0),
            Domain::Compact { lo, hi } => (lo, hi),
        }
    }
}

fn validate_cover(pieces: &[Piece], lo: f64, hi: f64) -> Result<()> {
    if pieces.is_empty() {
        return Err(Error::InvalidInput("empty piece list".into()));
    }
    let mut cursor = lo;
    for p in pieces {
        if (p.start - cursor).abs() > 1e-12 || p.width <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "pieces must tile the domain; gap at {cursor}"
            )));
        }
        cursor = p.start + p.width;
    }
    if (cursor - hi).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!(
            "pieces end at {cursor}, domain ends at {hi}"
        )));
    }
    Ok(())
}

/// Exact integral of per(scale x + shift) * com(x) over [lo, hi], where
/// `per` is 1-periodic and `com` is compact (or any piecewise poly whose
/// pieces cover [lo, hi]). Splits at every breakpoint of both functions and
/// integrates the polynomial product piece by piece.
pub fn integrate_periodic_against(
    per: &PiecewisePoly,
    scale: f64,
    shift: f64,
    com: &PiecewisePoly,
    lo: f64,
    hi: f64,
) -> f64 {
    assert!(matches!(per.domain, Domain::Periodic));
    assert!(scale != 0.0);
    let (clo, chi) = com.domain_bounds();
    let lo = lo.max(clo);
    let hi = hi.min(chi);
    if hi <= lo {
        return 0.0;
    }
    let mut cuts: Vec<f64> = vec![lo, hi];
    for p in &com.pieces {
        if p.start > lo && p.start < hi {
            cuts.push(p.start);
        }
    }
    // Pre-images of the periodic breakpoints: x = (b + k - shift)/scale.
    let s_lo = (scale * lo + shift).min(scale * hi + shift);
    let s_hi = (scale * lo + shift).max(scale * hi + shift);
    for p in &per.pieces {
        let b = p.start;
        let k_min = (s_lo - b).floor() as i64 - 1;
        let k_max = (s_hi - b).ceil() as i64 + 1;
        for k in k_min..=k_max {
            let x = (b + k as f64 - shift) / scale;
            if x > lo && x < hi {
                cuts.push(x);
            }
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15 * (1.0 + a.abs()));

    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        let dx = x1 - x0;
        if dx <= 0.0 {
            continue;
        }
        let xm = 0.5 * (x0 + x1);
        // Periodic factor on this slice, in v with x = x0 + dx v.
        let sm = scale * xm + shift;
        let sfrac = sm - sm.floor();
        let pp = &per.pieces[per.locate(sfrac)];
        let base = sm.floor() + pp.start; // absolute start of this period's piece
        // u_p = (scale x + shift - base)/width = alpha + gamma v
        let alpha_p = (scale * x0 + shift - base) / pp.width;
        let gamma_p = scale * dx / pp.width;
        let qp = poly_compose_affine(&pp.coeffs, alpha_p, gamma_p);
        // Compact factor on this slice.
        let cp = &com.pieces[com.locate(xm)];
        let alpha_c = (x0 - cp.start) / cp.width;
        let gamma_c = dx / cp.width;
        let qc = poly_compose_affine(&cp.coeffs, alpha_c, gamma_c);
        total += dx * poly_integral01(&poly_mul(&qp, &qc));
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Frac {
    num: i128,
    den: i128,
}

impl Frac {
    fn new(num: i128, den: i128) -> Self {
        debug_assert!(den != 0);
        let g = gcd(num.unsigned_abs(), den.unsigned_abs()) as i128;
        let sign = if den < 0 { -1 } else { 1 };
        Self {
            num: sign * num / g,
            den: sign * den / g,
        }
    }
    fn zero() -> Self {
        Self { num: 0, den: 1 }
    }
    fn add(self, o: Self) -> Self {
        Self::new(self.num * o.den + o.num * self.den, self.den * o.den)
    }
    fn mul(self, o: Self) -> Self {
        // Cross-reduce first to keep the products small.
        let g1 = gcd(self.num.unsigned_abs(), o.den.unsigned_abs()) as i128;
        let g2 = gcd(o.num.unsigned_abs(), self.den.unsigned_abs()) as i128;
        Self::new(
            (self.num / g1) * (o.num / g2),
            (self.den / g2) * (o.den / g1),
        )
    }
    fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    if a == 0 {
        return b.max(1);
    }
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

/// Exact rational coefficients of the smoothstep S_p (normalized
/// antiderivative of u^p (1-u)^p, degree 2p+1, S(0)=0, S(1)=1).
fn smoothstep_fracs(p: usize) -> Vec<Frac> {
    // S coefficients: C(p,k)(-1)^k/(p+k+1) * (2p+1)!/(p!)^2 at degree p+k+1.
    let mut binom: Vec<i128> = vec![1];
    for k in 1..=p {
        binom.push(binom[k - 1] * (p - k + 1) as i128 / k as i128);
    }
    // (2p+1)!/(p!)^2 = (p+1) C(2p+1, p)
    let mut c2p1p: i128 = 1;
    for i in 0..p {
        c2p1p = c2p1p * (2 * p + 1 - i) as i128 / (i + 1) as i128;
    }
    let norm_inv = (p + 1) as i128 * c2p1p;
    let mut coeffs = vec![Frac::zero(); 2 * p + 2];
    for k in 0..=p {
        let sign = if k % 2 == 0 { 1 } else { -1 };
        coeffs[p + k + 1] = Frac::new(sign * binom[k] * norm_inv, (p + k + 1) as i128);
    }
    coeffs
}

/// Smoothstep monomial coefficients (for diagnostics; evaluation of these
/// directly loses digits to cancellation — prefer `smoothstep_halves`).
pub fn smoothstep_coeffs(p: usize) -> Vec<f64> {
    smoothstep_fracs(p).into_iter().map(Frac::to_f64).collect()
}

/// The smoothstep split at 1/2 into well-conditioned halves: returns
/// (A, B) with A(v) = S(v/2) and B(v) = S(1/2 + v/2) for v in [0,1],
/// coefficients computed in exact rational arithmetic so each poly
/// evaluates to full double precision.
pub fn smoothstep_halves(p: usize) -> (Vec<f64>, Vec<f64>) {
    let s = smoothstep_fracs(p);
    let deg = s.len();
    // A_k = s_k / 2^k.
    let a: Vec<Frac> = s
        .iter()
        .enumerate()
        .map(|(k, &c)| c.mul(Frac::new(1, 1i128 << k)))
        .collect();
    // B(v) = 1 - A(1 - v): B_j = delta_{j0} - sum_k A_k C(k,j) (-1)^j.
    let mut binoms = vec![vec![0i128; deg]; deg];
    for k in 0..deg {
        binoms[k][0] = 1;
        for j in 1..=k {
            binoms[k][j] = binoms[k - 1][j - 1] + if j <= k - 1 { binoms[k - 1][j] } else { 0 };
        }
    }
    let mut b = vec![Frac::zero(); deg];
    for j in 0..deg {
        let mut acc = Frac::zero();
        for k in j..deg {
            acc = acc.add(a[k].mul(Frac::new(binoms[k][j], 1)));
        }
        let sign = if j % 2 == 0 { 1 } else { -1 };
        b[j] = acc.mul(Frac::new(-sign, 1));
    }
    b[0] = b[0].add(Frac::new(1, 1));
    (
        a.into_iter().map(Frac::to_f64).collect(),
        b.into_iter().map(Frac::to_f64).collect(),
    )
}

/// Pieces of a unit ramp 0 -> 1 over [start, start+width] split at the
/// midpoint for numerical conditioning, with a constant `base` added.
pub fn ramp_up_pieces(start: f64, width: f64, base: f64, p: usize) -> Vec<Piece> {
    let (a, b) = smoothstep_halves(p);
    let shift = |mut c: Vec<f64>, v: f64| {
        c[0] += v;
        c
    };
    vec![
        Piece {
            start,
            width: width / 2.0,
            coeffs: shift(a, base),
        },
        Piece {
            start: start + width / 2.0,
            width: width / 2.0,
            coeffs: shift(b, base),
        },
    ]
}

/// Pieces of a unit ramp dropping `top` -> `top - 1` over [start, start+width].
pub fn ramp_down_pieces(start: f64, width: f64, top: f64, p: usize) -> Vec<Piece> {
    let (a, b) = smoothstep_halves(p);
    let flip = |c: Vec<f64>, v: f64| {
        let mut c: Vec<f64> = c.into_iter().map(|x| -x).collect();
        c[0] += v;
        c
    };
    vec![
        Piece {
            start,
            width: width / 2.0,
            coeffs: flip(a, top),
        },
        Piece {
            start: start + width / 2.0,
            width: width / 2.0,
            coeffs: flip(b, top),
        },
    ]
}

/// The mean-zero smoothed two-level staircase and its six mean-zero
/// antiderivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct StaircaseProfile {
    pub mu1: f64,
    pub mu2: f64,
    pub delta: f64,
    pub order: usize,
    levels: Vec<PiecewisePoly>,
}

impl StaircaseProfile {
    /// h_j; level 0 is the smoothed staircase itself.
    pub fn level(&self, j: usize) -> &PiecewisePoly {
        &self.levels[j]
    }

    pub fn eval(&self, j: usize, s: f64, deriv: usize) -> f64 {
        self.levels[j].eval(s, deriv)
    }

    /// The ideal (unsmoothed) staircase.
    pub fn step(&self, s: f64) -> f64 {
        let f = s - s.floor();
        if f > 0.0 && f <= self.mu1 {
            -self.mu2
        } else {
            self.mu1
        }
    }
}

pub fn build_staircase(mu1: f64, delta: f64) -> Result<StaircaseProfile> {
    build_staircase_with_order(mu1, delta, 7)
}

/// Staircase with configurable smoothstep order (C^p joins).
pub fn build_staircase_with_order(mu1: f64, delta: f64, p: usize) -> Result<StaircaseProfile> {
    if !(mu1 > 0.0 && mu1 < 1.0) {
        return Err(Error::InvalidParams(format!("mu1 = {mu1} outside (0,1)")));
    }
    let mu2 = 1.0 - mu1;
    if !(delta > 0.0 && delta < mu1.min(mu2) / 4.0) {
        return Err(Error::InvalidParams(format!(
            "delta = {delta} must lie in (0, {})",
            mu1.min(mu2) / 4.0
        )));
    }
    if p < 1 || p > 9 {
        return Err(Error::InvalidParams(format!(
            "smoothstep order {p} outside [1, 9]"
        )));
    }
    let d2 = delta / 2.0;

    // Descent from mu1 to -mu2 centered at 0 (wrapped around the period),
    // ascent centered at mu1. Each ramp is two half-pieces.
    let descent = ramp_down_pieces(-d2, delta, mu1, p);
    let ascent = ramp_up_pieces(mu1 - d2, delta, -mu2, p);
    let mut pieces = Vec::with_capacity(6);
    pieces.push(Piece {
        start: 0.0,
        ..descent[1].clone()
    });
    pieces.push(Piece {
        start: d2,
        width: mu1 - delta,
        coeffs: vec![-mu2],
    });
    pieces.extend(ascent);
    pieces.push(Piece {
        start: mu1 + d2,
        width: mu2 - delta,
        coeffs: vec![mu1],
    });
    pieces.push(Piece {
        start: 1.0 - d2,
        ..descent[0].clone()
    });
    let mut h0 = PiecewisePoly::periodic(pieces)?;
    let mean = h0.integral();
    for piece in &mut h0.pieces {
        piece.coeffs[0] -= mean;
    }

    let mut levels = vec![h0];
    for _ in 0..6 {
        let next = levels.last().unwrap().antiderivative_mean_zero()?;
        levels.push(next);
    }
    Ok(StaircaseProfile {
        mu1,
        mu2,
        delta,
        order: p,
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// 8th-order central finite difference of f at x.
    fn fd8(f: impl Fn(f64) -> f64, x: f64, e: f64) -> f64 {
        let c = [
            (4.0, 1.0 / 280.0),
            (3.0, -4.0 / 105.0),
            (2.0, 1.0 / 5.0),
            (1.0, -4.0 / 5.0),
        ];
        let mut acc = 0.0;
        for (k, w) in c {
            acc += w * f(x - k * e) - w * f(x + k * e);
        }
        acc / e
    }

    #[test]
    fn smoothstep_endpoint_behavior() {
        let (a, b) = smoothstep_halves(7);
        assert_eq!(poly_eval(&a, 0.0), 0.0);
        assert_abs_diff_eq!(poly_eval(&a, 1.0), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(poly_eval(&b, 0.0), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(poly_eval(&b, 1.0), 1.0, epsilon = 1e-13);
        // Halves agree with the raw monomial form away from its bad end.
        let s = smoothstep_coeffs(7);
        assert_abs_diff_eq!(poly_eval(&a, 0.6), poly_eval(&s, 0.3), epsilon = 1e-11);
        for order in 1..=7 {
            assert_abs_diff_eq!(poly_eval_deriv(&a, 0.0, order), 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(poly_eval_deriv(&b, 1.0, order), 0.0, epsilon = 1e-10);
        }
        // Odd symmetry about the midpoint: A(1-v) + B(v) = 1.
        for i in 0..=40 {
            let v = i as f64 / 40.0;
            assert_abs_diff_eq!(
                poly_eval(&a, 1.0 - v) + poly_eval(&b, v),
                1.0,
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn staircase_bounds_and_means() {
        let st = build_staircase(0.35, 0.02).unwrap();
        for j in 0..=6 {
            assert!(st.level(j).integral().abs() < 1e-10, "level {j} mean");
        }
        let h0_sup = st.level(0).sup_bound(0);
        for i in 0..4000 {
            let s = i as f64 / 4000.0;
            let v = st.eval(0, s, 0);
            assert!(v >= -st.mu2 - 1e-12 && v <= st.mu1 + 1e-12, "h0({s}) = {v}");
        }
        for j in 1..=6 {
            let sup: f64 = (0..4000)
                .map(|i| st.eval(j, i as f64 / 4000.0, 0).abs())
                .fold(0.0, f64::max);
            assert!(sup <= h0_sup + 1e-12, "level {j} sup {sup} > {h0_sup}");
        }
    }

    #[test]
    fn staircase_matches_step_off_transitions() {
        let st = build_staircase(0.4, 0.015).unwrap();
        let samples = 5000;
        let mut mismatched = 0usize;
        for i in 0..samples {
            let s = (i as f64 + 0.5) / samples as f64;
            if (st.eval(0, s, 0) - st.step(s)).abs() > 1e-12 {
                mismatched += 1;
            }
        }
        let measure = mismatched as f64 / samples as f64;
        assert!(measure <= 4.0 * st.delta, "changed measure {measure}");
    }

    #[test]
    fn symmetric_staircase_is_odd() {
        let st = build_staircase(0.5, 0.03).unwrap();
        for i in 0..200 {
            let t = i as f64 / 200.0 * 0.49;
            let sum = st.eval(0, 0.5 + t, 0) + st.eval(0, 0.5 - t, 0);
            assert!(sum.abs() < 1e-12, "h0 not odd about 1/2 at t={t}");
        }
    }

    #[test]
    fn tower_derivatives_collapse() {
        let st = build_staircase(0.45, 0.025).unwrap();
        // d^j h6 / ds^j = h_{6-j}: exact through the coefficient route,
        // and via 8th-order finite differences on the evaluators.
        let mut d = st.level(6).clone();
        for j in (0..6).rev() {
            d = d.derivative();
            for i in 0..250 {
                let s = (i as f64 + 0.37) / 250.0;
                assert_abs_diff_eq!(d.eval(s, 0), st.eval(j, s, 0), epsilon = 1e-9);
            }
        }
        for j in 1..=6 {
            for i in 0..1000 {
                let s = (i as f64 + 0.5) / 1000.0;
                let fd = fd8(|x| st.eval(j, x, 0), s, 2e-4);
                assert!(
                    (fd - st.eval(j - 1, s, 0)).abs() < 1e-8,
                    "tower FD level {j} at {s}: {fd} vs {}",
                    st.eval(j - 1, s, 0)
                );
            }
        }
    }

    #[test]
    fn antiderivative_is_periodic() {
        let st = build_staircase(0.3, 0.02).unwrap();
        for j in 1..=6 {
            let a = st.eval(j, 1e-14, 0);
            let b = st.eval(j, 1.0 - 1e-14, 0);
            assert!((a - b).abs() < 1e-9, "level {j} period mismatch");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(build_staircase(0.0, 0.01).is_err());
        assert!(build_staircase(0.5, 0.2).is_err());
        assert!(build_staircase(0.5, 0.0).is_err());
    }

    #[test]
    fn product_integration_is_exact() {
        // integral over [0, 3/4] of sin-free polynomial data: compare the
        // exact splitter against dense Simpson quadrature.
        let st = build_staircase(0.5, 0.05).unwrap();
        // Compact factor vanishing at its support edges, so dense Simpson
        // over the full interval is a trustworthy reference.
        let com = PiecewisePoly::compact(
            vec![Piece {
                start: 0.1,
                width: 0.6,
                coeffs: vec![0.0, 1.3, -2.4, 1.1],
            }],
            0.1,
            0.7,
        )
        .unwrap();
        let scale = 17.0;
        let shift = 0.3;
        let exact = integrate_periodic_against(st.level(1), scale, shift, &com, 0.0, 1.0);
        let nq = 600_001;
        let h = 1.0 / (nq - 1) as f64;
        let f = |x: f64| st.eval(1, scale * x + shift, 0) * com.eval(x, 0);
        let mut simpson = f(0.0) + f(1.0);
        for i in 1..nq - 1 {
            simpson += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        simpson *= h / 3.0;
        assert_abs_diff_eq!(exact, simpson, epsilon = 1e-11);
    }

    #[test]
    fn eval_outside_compact_support_is_zero() {
        let com = PiecewisePoly::compact(
            vec![Piece {
                start: -1.0,
                width: 2.0,
                coeffs: vec![1.0, 0.0, -1.0],
            }],
            -1.0,
            1.0,
        )
        .unwrap();
        assert_eq!(com.eval(-1.0000001, 0), 0.0);
        assert_eq!(com.eval(1.0, 3), 0.0);
        assert_eq!(com.eval(55.0, 0), 0.0);
    }

    #[test]
    fn constant_runs_find_staircase_plateaus() {
        let st = build_staircase(0.35, 0.02).unwrap();
        let runs = st.level(0).constant_runs();
        assert_eq!(runs.len(), 2);
        let (s1, e1, v1) = runs[0];
        let (s2, e2, v2) = runs[1];
        assert_abs_diff_eq!(v1, -0.65, epsilon = 1e-12);
        assert_abs_diff_eq!(v2, 0.35, epsilon = 1e-12);
        assert_abs_diff_eq!(e1 - s1, 0.35 - 0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(e2 - s2, 0.65 - 0.02, epsilon = 1e-15);
        // Values on the runs match the evaluator.
        assert_eq!(st.eval(0, 0.5 * (s1 + e1), 0), v1);
        assert_eq!(st.eval(0, 0.5 * (s2 + e2), 0), v2);
        // Ramps are not runs: a plateau profile has a single unit run.
        let pl = crate::cutoff::plateau_profile(0.3, 7).unwrap();
        let pruns = pl.constant_runs();
        assert_eq!(pruns.len(), 1);
        assert_eq!(pruns[0].2, 1.0);
    }

    #[test]
    fn sup_bound_encloses_and_stays_tight() {
        let st = build_staircase(0.35, 0.02).unwrap();
        let pl = crate::cutoff::plateau_profile(0.3, 7).unwrap();
        for (profile, a, b) in [
            (st.level(0), 0.0, 1.0),
            (st.level(6), 0.0, 1.0),
            (&pl, -1.0, 1.0),
        ] {
            for order in 0..4 {
                let sampled: f64 = (0..20000)
                    .map(|i| {
                        let s = a + (b - a) * (i as f64 + 0.5) / 20000.0;
                        profile.eval(s, order).abs()
                    })
                    .fold(0.0, f64::max);
                let bound = profile.sup_bound(order);
                assert!(bound >= sampled * (1.0 - 1e-12), "order {order}: {bound} < {sampled}");
                assert!(bound <= sampled * 8.0 + 1e-12, "order {order}: {bound} ≫ {sampled}");
            }
        }
    }
}
