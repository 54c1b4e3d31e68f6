//! Closed-form localized oscillations compatible with the stationary linear
//! constraints (divergence-free momentum, matrix divergence matching the
//! source term).
//!
//! A field here is a finite sum of terms
//! `coeff · Π_i p_i^{(o_i)}(dir_i·x + offset_i)` over a fixed shared list of
//! one-dimensional piecewise-polynomial factors: one periodic oscillation
//! profile plus one compact plateau per axis. Differentiation is the exact
//! Leibniz rule on that representation, so compact support, vanishing means,
//! and the divergence identities are properties of the calculus rather than
//! of any grid. Grids appear only in verification oracles.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;

use crate::cone::LambdaDirection;
use crate::cutoff::CutoffBump;
use crate::matrix::SymTraceFree;
use crate::profile1d::{PiecewisePoly, StaircaseProfile};
use crate::state::FlowState;
use crate::{rng, Error, Result};

/// A one-dimensional analytic factor `x -> p(dir·x + offset)`.
#[derive(Debug, Clone)]
pub struct Factor {
    pub profile: Arc<PiecewisePoly>,
    pub dir: Vec<f64>,
    pub offset: f64,
}

impl Factor {
    pub fn argument(&self, x: &[f64]) -> f64 {
        self.offset + self.dir.iter().zip(x).map(|(d, v)| d * v).sum::<f64>()
    }

    pub fn eval(&self, x: &[f64], order: usize) -> f64 {
        self.profile.eval(self.argument(x), order)
    }
}

/// Per-point table of factor derivatives, shared by all components of a wave
/// so each profile lookup happens once.
pub struct FactorTable {
    values: Vec<Vec<f64>>,
    dead: bool,
}

impl FactorTable {
    pub fn build(factors: &[Factor], x: &[f64], max_orders: &[u8]) -> Self {
        let mut values = Vec::with_capacity(factors.len());
        for (f, &mo) in factors.iter().zip(max_orders) {
            let s = f.argument(x);
            let row: Vec<f64> = (0..=mo as usize).map(|o| f.profile.eval(s, o)).collect();
            if row.iter().all(|v| *v == 0.0) {
                // Every term references every factor (order 0 included), so a
                // fully vanished factor kills the whole sum. This is what
                // makes compact support exact rather than thresholded.
                return Self {
                    values,
                    dead: true,
                };
            }
            values.push(row);
        }
        Self {
            values,
            dead: false,
        }
    }

    pub fn is_dead(&self) -> bool {
        self.dead
    }
}

/// A sum of products of factor derivatives over a shared factor list, closed
/// under partial differentiation.
#[derive(Debug, Clone)]
pub struct TermSum {
    factors: Arc<Vec<Factor>>,
    terms: HashMap<Vec<u8>, f64>,
}

impl TermSum {
    pub fn zero(factors: Arc<Vec<Factor>>) -> Self {
        Self {
            factors,
            terms: HashMap::new(),
        }
    }

    pub fn monomial(factors: Arc<Vec<Factor>>, orders: Vec<u8>, coeff: f64) -> Self {
        debug_assert_eq!(orders.len(), factors.len());
        let mut t = Self::zero(factors);
        t.push(orders, coeff);
        t
    }

    pub fn factors(&self) -> &Arc<Vec<Factor>> {
        &self.factors
    }

    pub fn spatial_dim(&self) -> usize {
        self.factors[0].dir.len()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u8], f64)> {
        self.terms.iter().map(|(k, &c)| (k.as_slice(), c))
    }

    pub fn coeff(&self, orders: &[u8]) -> f64 {
        self.terms.get(orders).copied().unwrap_or(0.0)
    }

    fn push(&mut self, orders: Vec<u8>, coeff: f64) {
        if coeff == 0.0 {
            return;
        }
        match self.terms.entry(orders) {
            Entry::Occupied(mut o) => {
                *o.get_mut() += coeff;
                if *o.get() == 0.0 {
                    o.remove();
                }
            }
            Entry::Vacant(v) => {
                v.insert(coeff);
            }
        }
    }

    pub fn add_assign_scaled(&mut self, other: &Self, c: f64) {
        debug_assert!(Arc::ptr_eq(&self.factors, &other.factors));
        for (k, &v) in &other.terms {
            self.push(k.clone(), c * v);
        }
    }

    pub fn scaled(mut self, c: f64) -> Self {
        if c == 0.0 {
            self.terms.clear();
        } else {
            for v in self.terms.values_mut() {
                *v *= c;
            }
        }
        self
    }

    /// Exact partial derivative along a coordinate axis.
    pub fn partial(&self, axis: usize) -> Self {
        let mut out = Self::zero(self.factors.clone());
        for (k, &c) in &self.terms {
            for (fi, f) in self.factors.iter().enumerate() {
                let d = f.dir[axis];
                if d == 0.0 {
                    continue;
                }
                let mut k2 = k.clone();
                k2[fi] += 1;
                out.push(k2, c * d);
            }
        }
        out
    }

    pub fn laplacian(&self) -> Self {
        let n = self.spatial_dim();
        let mut out = Self::zero(self.factors.clone());
        for a in 0..n {
            out.add_assign_scaled(&self.partial(a).partial(a), 1.0);
        }
        out
    }

    /// Componentwise maximum derivative order per factor.
    pub fn max_orders(&self) -> Vec<u8> {
        let mut m = vec![0u8; self.factors.len()];
        for k in self.terms.keys() {
            for (a, b) in m.iter_mut().zip(k) {
                *a = (*a).max(*b);
            }
        }
        m
    }

    pub fn eval_with(&self, table: &FactorTable) -> f64 {
        if table.dead {
            return 0.0;
        }
        let mut acc = 0.0;
        for (k, &c) in &self.terms {
            let mut prod = c;
            for (fi, &o) in k.iter().enumerate() {
                prod *= table.values[fi][o as usize];
                if prod == 0.0 {
                    break;
                }
            }
            acc += prod;
        }
        acc
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let table = FactorTable::build(&self.factors, x, &self.max_orders());
        self.eval_with(&table)
    }

    /// Rigorous global sup bound: sum of |coeff| times the factor profiles'
    /// coefficient-mass bounds.
    pub fn sup_bound(&self) -> f64 {
        self.terms
            .iter()
            .map(|(k, c)| {
                let mut b = c.abs();
                for (fi, &o) in k.iter().enumerate() {
                    b *= self.factors[fi].profile.sup_bound(o as usize);
                }
                b
            })
            .sum()
    }

    /// Sum of |coeff| over terms (scale for coefficient-level certificates).
    pub fn coeff_mass(&self) -> f64 {
        self.terms.values().map(|c| c.abs()).sum()
    }
}

/// Divergence of a vector of term sums over a shared factor list.
pub fn divergence(fields: &[TermSum]) -> TermSum {
    let mut out = TermSum::zero(fields[0].factors().clone());
    for (i, f) in fields.iter().enumerate() {
        out.add_assign_scaled(&f.partial(i), 1.0);
    }
    out
}

/// The local third-order potential: maps a vector field f to a symmetric
/// trace-free matrix field M with div M = Δ²f identically. Coefficients:
/// M_ij = ∂_jΔf_i + ∂_iΔf_j − (n−2)/(n−1)·∂_i∂_j(div f) − δ_ij/(n−1)·Δ(div f).
#[allow(non_snake_case)]
pub fn potential_R_delta2(f: &[TermSum]) -> Result<Vec<Vec<TermSum>>> {
    let n = f.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "matrix potential needs dimension >= 2, got {n}"
        )));
    }
    if f[0].spatial_dim() != n {
        return Err(Error::InvalidInput(format!(
            "vector field has {n} components in dimension {}",
            f[0].spatial_dim()
        )));
    }
    let factors = f[0].factors().clone();
    let lap: Vec<TermSum> = f.iter().map(|fi| fi.laplacian()).collect();
    let div = divergence(f);
    let lap_div = div.laplacian();
    let grad_div: Vec<TermSum> = (0..n).map(|i| div.partial(i)).collect();
    let cn = (n as f64 - 2.0) / (n as f64 - 1.0);
    let dn = 1.0 / (n as f64 - 1.0);

    let mut out: Vec<Vec<TermSum>> = vec![vec![]; n];
    for i in 0..n {
        out[i] = (0..n).map(|_| TermSum::zero(factors.clone())).collect();
    }
    for i in 0..n {
        for j in i..n {
            let mut m = lap[i].partial(j);
            m.add_assign_scaled(&lap[j].partial(i), 1.0);
            m.add_assign_scaled(&grad_div[i].partial(j), -cn);
            if i == j {
                m.add_assign_scaled(&lap_div, -dn);
            }
            out[j][i] = m.clone();
            out[i][j] = m;
        }
    }
    Ok(out)
}

/// A compactly supported oscillatory perturbation with exact closed-form
/// evaluators for the momentum and stress components.
#[derive(Debug, Clone)]
pub struct LocalizedWave {
    pub w_bar: LambdaDirection,
    pub lambda_freq: f64,
    pub profile: StaircaseProfile,
    pub cutoff: CutoffBump,
    /// Constant source-term matrix of the stress-divergence constraint.
    pub b_matrix: DMatrix<f64>,
    factors: Arc<Vec<Factor>>,
    n_fields: Vec<TermSum>,
    v_fields: Vec<Vec<TermSum>>,
    div_m: TermSum,
    div_v_minus_bn: Vec<TermSum>,
    max_orders: Vec<u8>,
}

fn bump_orders(max: &mut [u8], t: &TermSum) {
    for (k, _) in t.terms() {
        for (a, b) in max.iter_mut().zip(k) {
            *a = (*a).max(*b);
        }
    }
}

/// Assembles the wave for an oscillation direction `dir` (interpreted as the
/// full two-state span: the field oscillates between −μ₂·dir and μ₁·dir),
/// frequency `lambda_freq`, an envelope, a staircase profile, and the
/// constant source matrix B.
pub fn build_localized_wave(
    dir: &LambdaDirection,
    lambda_freq: f64,
    cutoff: &CutoffBump,
    profile: &StaircaseProfile,
    b_matrix: &DMatrix<f64>,
) -> Result<LocalizedWave> {
    let n = dir.n_bar.len();
    if cutoff.dim() != n || b_matrix.nrows() != n || b_matrix.ncols() != n {
        return Err(Error::InvalidInput(
            "wave ingredient dimensions disagree".into(),
        ));
    }
    if !(lambda_freq >= 1.0) {
        return Err(Error::InvalidParams(format!(
            "oscillation frequency {lambda_freq} must be at least 1"
        )));
    }
    if cutoff.order < 6 {
        return Err(Error::InvalidParams(format!(
            "envelope smoothness order {} is below the 6 derivatives the correctors take",
            cutoff.order
        )));
    }
    let nf = n + 1;

    // Factor 0: 6th mean-zero antiderivative of the oscillation profile at
    // argument λξ·(x − center). Factors 1..=n: the plateau along each box
    // axis of the envelope. Derivative chain factors ride on the coefficients.
    let hdir: Vec<f64> = dir.xi.iter().map(|c| lambda_freq * c).collect();
    let hoff = -hdir
        .iter()
        .zip(&cutoff.center)
        .map(|(d, c)| d * c)
        .sum::<f64>();
    let mut factors = Vec::with_capacity(nf);
    factors.push(Factor {
        profile: Arc::new(profile.level(6).clone()),
        dir: hdir,
        offset: hoff,
    });
    let plateau = Arc::new(cutoff.profile.clone());
    for k in 0..n {
        let hw = cutoff.half_widths[k];
        let d: Vec<f64> = (0..n).map(|j| cutoff.axis_component(k, j) / hw).collect();
        let offset = -d
            .iter()
            .zip(&cutoff.center)
            .map(|(dj, cj)| dj * cj)
            .sum::<f64>();
        factors.push(Factor {
            profile: plateau.clone(),
            dir: d,
            offset,
        });
    }
    let factors = Arc::new(factors);
    let lam6 = lambda_freq.powi(-6);

    let g = TermSum::monomial(factors.clone(), vec![0; nf], 1.0);
    let lap_g = g.laplacian();
    let lap3_g = lap_g.laplacian().laplacian();

    // P_j = (∂_jφ)·h₆ and the scalar potential X = (n̄·∇φ)·h₆; the global
    // gradient of the envelope mixes box axes through the frame.
    let p: Vec<TermSum> = (0..n)
        .map(|j| {
            let mut t = TermSum::zero(factors.clone());
            for k in 0..n {
                let coef = cutoff.axis_component(k, j) / cutoff.half_widths[k];
                if coef != 0.0 {
                    let mut o = vec![0u8; nf];
                    o[k + 1] = 1;
                    t.add_assign_scaled(&TermSum::monomial(factors.clone(), o, 1.0), coef);
                }
            }
            t
        })
        .collect();
    let mut x_pot = TermSum::zero(factors.clone());
    for j in 0..n {
        x_pot.add_assign_scaled(&p[j], dir.n_bar[j]);
    }
    let lap2_x = x_pot.laplacian().laplacian();

    // ñ_i = λ⁻⁶ (n̄_i Δ³G − ∂_i Δ²X); the two leading parts cancel exactly
    // because n̄·ξ = 0.
    let n_fields: Vec<TermSum> = (0..n)
        .map(|i| {
            let mut t = lap3_g.clone().scaled(dir.n_bar[i]);
            t.add_assign_scaled(&lap2_x.partial(i), -1.0);
            t.scaled(lam6)
        })
        .collect();

    // f_i = Δ(Σ_j V̄_ij P_j) + Σ_j B_ij ∂_j X − (Bn̄)_i ΔG, chosen so the
    // third-order potential's divergence cancels everything the stress
    // constraint leaves over.
    let mut fvec = Vec::with_capacity(n);
    for i in 0..n {
        let mut vp = TermSum::zero(factors.clone());
        for j in 0..n {
            vp.add_assign_scaled(&p[j], dir.v_bar.get(i, j));
        }
        let mut fi = vp.laplacian();
        for j in 0..n {
            fi.add_assign_scaled(&x_pot.partial(j), b_matrix[(i, j)]);
        }
        let bn: f64 = (0..n).map(|j| b_matrix[(i, j)] * dir.n_bar[j]).sum();
        fi.add_assign_scaled(&lap_g, -bn);
        fvec.push(fi);
    }
    let r3 = potential_R_delta2(&fvec)?;

    let mut v_fields: Vec<Vec<TermSum>> = vec![vec![]; n];
    for i in 0..n {
        for j in 0..n {
            let mut t = lap3_g.clone().scaled(dir.v_bar.get(i, j));
            t.add_assign_scaled(&r3[i][j], -1.0);
            v_fields[i].push(t.scaled(lam6));
        }
    }

    let div_m = divergence(&n_fields);
    let div_v_minus_bn: Vec<TermSum> = (0..n)
        .map(|i| {
            let mut t = TermSum::zero(factors.clone());
            for j in 0..n {
                t.add_assign_scaled(&v_fields[i][j].partial(j), 1.0);
            }
            for j in 0..n {
                t.add_assign_scaled(&n_fields[j], -b_matrix[(i, j)]);
            }
            t
        })
        .collect();

    let mut max_orders = vec![0u8; nf];
    for t in &n_fields {
        bump_orders(&mut max_orders, t);
    }
    for row in &v_fields {
        for t in row {
            bump_orders(&mut max_orders, t);
        }
    }
    bump_orders(&mut max_orders, &div_m);
    for t in &div_v_minus_bn {
        bump_orders(&mut max_orders, t);
    }

    Ok(LocalizedWave {
        w_bar: dir.clone(),
        lambda_freq,
        profile: profile.clone(),
        cutoff: cutoff.clone(),
        b_matrix: b_matrix.clone(),
        factors,
        n_fields,
        v_fields,
        div_m,
        div_v_minus_bn,
        max_orders,
    })
}

impl LocalizedWave {
    pub fn dim(&self) -> usize {
        self.n_fields.len()
    }

    pub fn factors(&self) -> &Arc<Vec<Factor>> {
        &self.factors
    }

    pub fn momentum_fields(&self) -> &[TermSum] {
        &self.n_fields
    }

    pub fn stress_fields(&self) -> &[Vec<TermSum>] {
        &self.v_fields
    }

    fn table(&self, x: &[f64]) -> FactorTable {
        FactorTable::build(&self.factors, x, &self.max_orders)
    }

    /// Exact closed-form evaluation of (ñ, Ṽ) at a point.
    pub fn eval_state(&self, x: &[f64]) -> FlowState {
        let n = self.dim();
        let t = self.table(x);
        if t.is_dead() {
            return FlowState::zero(n);
        }
        let m: Vec<f64> = self.n_fields.iter().map(|f| f.eval_with(&t)).collect();
        // The stress components are trace-free up to coefficient roundoff;
        // the deviatoric projection removes that residue.
        let u = SymTraceFree::deviatoric_from_fn(n, |i, j| self.v_fields[i][j].eval_with(&t));
        FlowState { m, u }
    }

    /// The pure two-state oscillation w̄·h₀(λξ·(x−c))·φ(x) that the wave
    /// approximates to O(1/λ).
    pub fn leading_state(&self, x: &[f64]) -> FlowState {
        let n = self.dim();
        let env = self.cutoff.value(x);
        if env == 0.0 {
            return FlowState::zero(n);
        }
        let osc = self.factors[0]
            .profile
            .eval(self.factors[0].argument(x), 6);
        self.w_bar.as_state().scale(env * osc)
    }

    pub fn deviation(&self, x: &[f64]) -> f64 {
        self.eval_state(x).sub(&self.leading_state(x)).norm()
    }

    /// Sampled sup of the deviation from the pure oscillation; deterministic
    /// in the seed.
    pub fn sup_deviation_sampled(&self, samples: usize, seed: u64) -> f64 {
        let n = self.dim();
        let mut r = rng::stream(seed, &[0x57a7e, self.lambda_freq as u64]);
        let mut sup: f64 = 0.0;
        let mut u = vec![0.0; n];
        for _ in 0..samples {
            for ui in u.iter_mut() {
                *ui = 2.0 * r.gen::<f64>() - 1.0;
            }
            sup = sup.max(self.deviation(&self.cutoff.point_at(&u)));
        }
        sup
    }

    /// Pointwise residuals of the two linear constraints: (div ñ, div Ṽ − Bñ).
    pub fn residuals_at(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let t = self.table(x);
        let dm = self.div_m.eval_with(&t);
        let dv = self
            .div_v_minus_bn
            .iter()
            .map(|f| f.eval_with(&t))
            .collect();
        (dm, dv)
    }

    /// Rigorous global sup bounds on the constraint residuals, straight from
    /// the surviving coefficient mass of the exactly differentiated fields.
    pub fn residual_sup_bounds(&self) -> (f64, f64) {
        let dv = self
            .div_v_minus_bn
            .iter()
            .map(|f| f.sup_bound())
            .fold(0.0f64, f64::max);
        (self.div_m.sup_bound(), dv)
    }

    /// Rigorous upper bound on any field component's sup norm.
    pub fn field_sup_bound(&self) -> f64 {
        let mut b: f64 = 0.0;
        for t in &self.n_fields {
            b = b.max(t.sup_bound());
        }
        for row in &self.v_fields {
            for t in row {
                b = b.max(t.sup_bound());
            }
        }
        b
    }

    /// Rigorous sup bound on |w̃ − w̄·h₀(λξ·x)·φ(x)|: the pure-oscillation
    /// term is a single exact monomial in the representation, so dropping it
    /// and summing the remaining coefficient mass bounds the correctors.
    pub fn deviation_sup_bound(&self) -> f64 {
        let n = self.dim();
        let mut lead_key = vec![0u8; n + 1];
        lead_key[0] = 6;
        let mut total_sq = 0.0;
        for (i, f) in self.n_fields.iter().enumerate() {
            let mut d = f.clone();
            d.push(lead_key.clone(), -self.w_bar.n_bar[i]);
            total_sq += d.sup_bound().powi(2);
        }
        for i in 0..n {
            for j in 0..n {
                let mut d = self.v_fields[i][j].clone();
                d.push(lead_key.clone(), -self.w_bar.v_bar.get(i, j));
                total_sq += d.sup_bound().powi(2);
            }
        }
        total_sq.sqrt()
    }

    /// Every component equals div(potential) for a compactly supported
    /// potential vector; builds those potentials. Returns (component, its
    /// potential) pairs, momentum components first, then stress rows.
    fn divergence_potentials(&self) -> Vec<(&TermSum, Vec<TermSum>)> {
        let n = self.dim();
        let nf = n + 1;
        let lam6 = self.lambda_freq.powi(-6);
        let factors = &self.factors;

        let g = TermSum::monomial(factors.clone(), vec![0; nf], 1.0);
        let lap2_g = g.laplacian().laplacian();
        let p: Vec<TermSum> = (0..n)
            .map(|j| {
                let mut t = TermSum::zero(factors.clone());
                for k in 0..n {
                    let coef = self.cutoff.axis_component(k, j) / self.cutoff.half_widths[k];
                    if coef != 0.0 {
                        let mut o = vec![0u8; nf];
                        o[k + 1] = 1;
                        t.add_assign_scaled(&TermSum::monomial(factors.clone(), o, 1.0), coef);
                    }
                }
                t
            })
            .collect();
        let mut x_pot = TermSum::zero(factors.clone());
        for j in 0..n {
            x_pot.add_assign_scaled(&p[j], self.w_bar.n_bar[j]);
        }
        let lap2_x = x_pot.laplacian().laplacian();

        let mut out: Vec<(&TermSum, Vec<TermSum>)> = Vec::with_capacity(n + n * n);
        for (i, field) in self.n_fields.iter().enumerate() {
            // ñ_i = div(λ⁻⁶ (n̄_i ∇Δ²G − e_i Δ²X))
            let pot: Vec<TermSum> = (0..n)
                .map(|a| {
                    let mut t = lap2_g.partial(a).scaled(self.w_bar.n_bar[i]);
                    if a == i {
                        t.add_assign_scaled(&lap2_x, -1.0);
                    }
                    t.scaled(lam6)
                })
                .collect();
            out.push((field, pot));
        }

        // Rebuild f and express each stress component as a divergence:
        // Ṽ_ij = div(λ⁻⁶ (V̄_ij ∇Δ²G − T^{(ij)})) with
        // T^{(ij)}_a = δ_aj Δf_i + δ_ai Δf_j − c_n δ_ai ∂_j div f − d_n δ_ij ∂_a div f.
        let lap_g = g.laplacian();
        let mut fvec = Vec::with_capacity(n);
        for i in 0..n {
            let mut vp = TermSum::zero(factors.clone());
            for j in 0..n {
                vp.add_assign_scaled(&p[j], self.w_bar.v_bar.get(i, j));
            }
            let mut fi = vp.laplacian();
            for j in 0..n {
                fi.add_assign_scaled(&x_pot.partial(j), self.b_matrix[(i, j)]);
            }
            let bn: f64 = (0..n)
                .map(|j| self.b_matrix[(i, j)] * self.w_bar.n_bar[j])
                .sum();
            fi.add_assign_scaled(&lap_g, -bn);
            fvec.push(fi);
        }
        let lap_f: Vec<TermSum> = fvec.iter().map(|t| t.laplacian()).collect();
        let div_f = divergence(&fvec);
        let grad_div: Vec<TermSum> = (0..n).map(|i| div_f.partial(i)).collect();
        let cn = (n as f64 - 2.0) / (n as f64 - 1.0);
        let dn = 1.0 / (n as f64 - 1.0);
        for i in 0..n {
            for j in 0..n {
                let pot: Vec<TermSum> = (0..n)
                    .map(|a| {
                        let mut t = lap2_g.partial(a).scaled(self.w_bar.v_bar.get(i, j));
                        if a == j {
                            t.add_assign_scaled(&lap_f[i], -1.0);
                        }
                        if a == i {
                            t.add_assign_scaled(&lap_f[j], -1.0);
                            t.add_assign_scaled(&grad_div[j], cn);
                        }
                        if i == j {
                            t.add_assign_scaled(&grad_div[a], dn);
                        }
                        t.scaled(lam6)
                    })
                    .collect();
                out.push((&self.v_fields[i][j], pot));
            }
        }
        out
    }

    /// Certifies that every component integrates to exactly zero by
    /// re-deriving it as a divergence and bounding the coefficient mismatch;
    /// returns a rigorous bound on |∫ component| valid for every component.
    pub fn mean_bound_certificate(&self) -> f64 {
        let cell_vol = self.cutoff.volume();
        let mut worst: f64 = 0.0;
        for (field, pot) in self.divergence_potentials() {
            let mut diff = divergence(&pot);
            diff.add_assign_scaled(field, -1.0);
            worst = worst.max(diff.sup_bound() * cell_vol);
        }
        worst
    }

    /// Rigorous sup bound over all divergence-potential components; weak
    /// pairings against C¹ test functions are bounded by
    /// dim·(this)·sup|∇ψ|·|support|.
    pub fn potential_sup_bound(&self) -> f64 {
        let mut b: f64 = 0.0;
        for (_, pot) in self.divergence_potentials() {
            for p in &pot {
                b = b.max(p.sup_bound());
            }
        }
        b
    }

    /// Midpoint-rule mean of every component over the cell on an s³ grid
    /// (quadrature corroboration of the analytic zero mean; only meaningful
    /// when the grid resolves the oscillation).
    pub fn mean_quadrature(&self, s: usize) -> FlowState {
        let n = self.dim();
        let mut acc = FlowState::zero(n);
        let mut idx = vec![0usize; n];
        let count = (s as f64).powi(n as i32);
        loop {
            let u: Vec<f64> = idx
                .iter()
                .map(|&i| -1.0 + 2.0 * ((i as f64 + 0.5) / s as f64))
                .collect();
            acc = acc.add_scaled(&self.eval_state(&self.cutoff.point_at(&u)), 1.0);
            let mut axis = 0;
            loop {
                idx[axis] += 1;
                if idx[axis] < s {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
                if axis == n {
                    return acc.scale(self.cutoff.volume() / count);
                }
            }
        }
    }
}

/// Grid masks and measures of the two near-phase regions of a wave.
#[derive(Debug, Clone)]
pub struct TwoPhaseReport {
    pub grid: usize,
    pub mask1: Vec<bool>,
    pub mask2: Vec<bool>,
    pub measure1: f64,
    pub measure2: f64,
    pub cell_measure: f64,
    /// max_i |measure_i − μ_i·cell_measure|
    pub balance_gap: f64,
    pub disjoint: bool,
}

/// Classifies cell grid points by proximity of w + w̃(x) to the two segment
/// endpoints. `endpoints` orders (w₁, w₂) as w = μ₁w₁ + μ₂w₂.
pub fn two_phase_regions(
    wave: &LocalizedWave,
    w: &FlowState,
    endpoints: (&FlowState, &FlowState),
    eps: f64,
    grid: usize,
) -> TwoPhaseReport {
    let n = wave.dim();
    let cell_measure = wave.cutoff.volume();
    let total = grid.pow(n as u32);
    let mut mask1 = vec![false; total];
    let mut mask2 = vec![false; total];
    let (mut c1, mut c2, mut overlap) = (0usize, 0usize, 0usize);

    let mut idx = vec![0usize; n];
    for flat in 0..total {
        let u: Vec<f64> = idx
            .iter()
            .map(|&i| -1.0 + 2.0 * ((i as f64 + 0.5) / grid as f64))
            .collect();
        let x = wave.cutoff.point_at(&u);
        let state = w.add_scaled(&wave.eval_state(&x), 1.0);
        let d1 = state.sub(endpoints.0).norm();
        let d2 = state.sub(endpoints.1).norm();
        if d1 < eps {
            mask1[flat] = true;
            c1 += 1;
        }
        if d2 < eps {
            mask2[flat] = true;
            c2 += 1;
            if mask1[flat] {
                overlap += 1;
            }
        }
        let mut axis = 0;
        while axis < n {
            idx[axis] += 1;
            if idx[axis] < grid {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }

    let cell_frac = cell_measure / total as f64;
    let measure1 = c1 as f64 * cell_frac;
    let measure2 = c2 as f64 * cell_frac;
    let mu1 = wave.profile.mu1;
    let mu2 = wave.profile.mu2;
    let balance_gap = (measure1 - mu1 * cell_measure)
        .abs()
        .max((measure2 - mu2 * cell_measure).abs());
    TwoPhaseReport {
        grid,
        mask1,
        mask2,
        measure1,
        measure2,
        cell_measure,
        balance_gap,
        disjoint: overlap == 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutoff::CutoffBump;
    use crate::profile1d::build_staircase;
    use approx::assert_abs_diff_eq;

    /// A valid oscillation direction in dimension n: n̄ ⊥ ξ and
    /// V̄ = n̄⊗n̄ − |n̄|²/(n−1)·(I − ξ⊗ξ) has V̄ξ = 0 and zero trace.
    fn test_direction(n: usize) -> LambdaDirection {
        let raw: Vec<f64> = (0..n).map(|i| 0.3 + 0.7 * (i as f64 + 1.0).sqrt()).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        let xi: Vec<f64> = raw.iter().map(|v| v / norm).collect();
        // Project a generic vector orthogonal to xi.
        let probe: Vec<f64> = (0..n).map(|i| 1.0 - 0.5 * i as f64).collect();
        let dot: f64 = probe.iter().zip(&xi).map(|(a, b)| a * b).sum();
        let nb: Vec<f64> = probe.iter().zip(&xi).map(|(p, x)| p - dot * x).collect();
        let nb_sq: f64 = nb.iter().map(|v| v * v).sum();
        let c = nb_sq / (n as f64 - 1.0);
        let v = SymTraceFree::deviatoric_from_fn(n, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            nb[i] * nb[j] - c * (id - xi[i] * xi[j])
        });
        LambdaDirection::new(nb, v, xi).unwrap()
    }

    fn test_wave(n: usize, lambda: f64) -> LocalizedWave {
        let dir = test_direction(n);
        let cutoff = CutoffBump::new(vec![0.5; n], 0.4, 0.25, 7).unwrap();
        let profile = build_staircase(0.4, 0.02).unwrap();
        let b = DMatrix::from_fn(n, n, |i, j| 0.4 * (i as f64 - 0.3 * j as f64) + 0.2);
        build_localized_wave(&dir, lambda, &cutoff, &profile, &b).unwrap()
    }

    #[test]
    fn partial_matches_finite_differences() {
        let wave = test_wave(3, 2.0);
        let g = TermSum::monomial(wave.factors().clone(), vec![0; 4], 1.0);
        let lap = g.laplacian();
        for axis in 0..3 {
            let d = lap.partial(axis);
            for t in 0..5 {
                let x = [0.35 + 0.05 * t as f64, 0.52, 0.44 + 0.02 * t as f64];
                let e = 1e-4;
                let mut fd = 0.0;
                for (k, wgt) in [
                    (4.0, 1.0 / 280.0),
                    (3.0, -4.0 / 105.0),
                    (2.0, 1.0 / 5.0),
                    (1.0, -4.0 / 5.0),
                ] {
                    let mut xm = x;
                    xm[axis] -= k * e;
                    let mut xp = x;
                    xp[axis] += k * e;
                    fd += wgt * (lap.eval(&xm) - lap.eval(&xp));
                }
                fd /= e;
                let exact = d.eval(&x);
                assert_abs_diff_eq!(fd, exact, epsilon = 1e-5 * (1.0 + exact.abs()));
            }
        }
    }

    #[test]
    fn potential_divergence_identity_is_exact() {
        for n in [3usize, 4] {
            let wave = test_wave(n, 2.0);
            let factors = wave.factors().clone();
            // Generic compactly supported field: assorted low-order terms.
            let f: Vec<TermSum> = (0..n)
                .map(|i| {
                    let mut t = TermSum::zero(factors.clone());
                    let mut o1 = vec![0u8; n + 1];
                    o1[0] = 1;
                    o1[i + 1] = 1;
                    t.add_assign_scaled(&TermSum::monomial(factors.clone(), o1, 0.7), 1.0);
                    let mut o2 = vec![0u8; n + 1];
                    o2[(i + 1) % n + 1] = 2;
                    t.add_assign_scaled(
                        &TermSum::monomial(factors.clone(), o2, -0.4 + i as f64),
                        1.0,
                    );
                    t
                })
                .collect();
            let r = potential_R_delta2(&f).unwrap();
            // div R = Δ²f, symmetric, trace-free: all at coefficient level.
            let scale: f64 = r
                .iter()
                .flatten()
                .map(|t| t.sup_bound())
                .fold(0.0, f64::max);
            let mut trace = TermSum::zero(factors.clone());
            for i in 0..n {
                trace.add_assign_scaled(&r[i][i], 1.0);
            }
            assert!(trace.sup_bound() <= 1e-12 * scale, "trace leak");
            for j in 0..n {
                let col: Vec<TermSum> = (0..n).map(|i| r[i][j].clone()).collect();
                let mut resid = divergence(&col);
                resid.add_assign_scaled(&f[j].laplacian().laplacian(), -1.0);
                assert!(
                    resid.sup_bound() <= 1e-11 * (1.0 + scale),
                    "divergence identity leak {} at n={n}",
                    resid.sup_bound()
                );
            }
        }
    }

    #[test]
    fn constraint_residuals_vanish() {
        for n in [3usize, 4] {
            for lambda in [1.0, 8.0, 64.0] {
                let wave = test_wave(n, lambda);
                let field = wave.field_sup_bound();
                let (dm, dv) = wave.residual_sup_bounds();
                let tol = 1e-11 * lambda * (1.0 + field);
                assert!(dm <= tol, "div m bound {dm} vs field {field} at λ={lambda}");
                assert!(dv <= tol, "stress residual {dv} vs field {field} at λ={lambda}");
            }
        }
    }

    #[test]
    fn support_is_exact() {
        let wave = test_wave(3, 8.0);
        let outside = [
            [0.95, 0.5, 0.5],
            [0.5, 0.05, 0.5],
            [0.1, 0.99, 0.2],
            [-0.2, 0.5, 0.5],
        ];
        for x in outside {
            let s = wave.eval_state(&x);
            assert!(s.m.iter().all(|v| *v == 0.0));
            assert!(s.u.upper_triangle().iter().all(|v| *v == 0.0));
        }
        let s = wave.eval_state(&[0.5, 0.5, 0.5]);
        assert!(s.norm() > 0.0);
    }

    #[test]
    fn rotated_box_envelope_keeps_identities() {
        let dir = test_direction(3);
        // Box frame with the first axis along the wave vector, completed by
        // Gram-Schmidt; distinct half-widths.
        let mut frame = vec![dir.xi.clone()];
        for cand in [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] {
            let mut v = cand.to_vec();
            for row in &frame {
                let d: f64 = v.iter().zip(row).map(|(a, b)| a * b).sum();
                for (vi, ri) in v.iter_mut().zip(row) {
                    *vi -= d * ri;
                }
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            frame.push(v.iter().map(|a| a / norm).collect());
        }
        let cutoff = CutoffBump::framed(
            vec![0.5; 3],
            frame.clone(),
            vec![0.3, 0.2, 0.15],
            0.25,
            7,
        )
        .unwrap();
        let profile = build_staircase(0.4, 0.02).unwrap();
        let b = DMatrix::from_fn(3, 3, |i, j| 0.3 * (j as f64 - i as f64) + 0.1);
        let wave = build_localized_wave(&dir, 8.0, &cutoff, &profile, &b).unwrap();

        // Constraint identities survive the rotation at coefficient level.
        let field = wave.field_sup_bound();
        let (dm, dv) = wave.residual_sup_bounds();
        assert!(dm <= 1e-10 * (1.0 + field), "div m bound {dm}");
        assert!(dv <= 1e-10 * (1.0 + field), "stress residual {dv}");

        // Support is exactly the rotated box: a point past the thin axis is
        // dead even though it is well inside the circumscribed cube.
        let mut out = vec![0.5; 3];
        for (oi, fi) in out.iter_mut().zip(&frame[2]) {
            *oi += 0.16 * fi;
        }
        assert!(!cutoff.contains(&out));
        let s = wave.eval_state(&out);
        assert!(s.m.iter().all(|v| *v == 0.0));
        assert!(wave.eval_state(&[0.5; 3]).norm() > 0.0);

        // On the inner plateau the momentum is the pure oscillation.
        let x = cutoff.point_at(&[0.3, -0.2, 0.4]);
        let h0 = wave.profile.eval(0, wave.factors()[0].argument(&x), 0);
        let state = wave.eval_state(&x);
        for i in 0..3 {
            assert_abs_diff_eq!(
                state.m[i],
                wave.w_bar.n_bar[i] * h0,
                epsilon = 1e-9 * (1.0 + h0.abs())
            );
        }
        // Mean-zero certificate holds in the rotated geometry too.
        assert!(wave.mean_bound_certificate() <= 1e-9 * (1.0 + field));
    }

    #[test]
    fn plateau_momentum_is_pure_oscillation() {
        let wave = test_wave(3, 8.0);
        // Inner plateau: |x_i − c_i| < (1 − margin)·hw.
        for t in 0..50 {
            let u = t as f64 / 50.0;
            let x = [0.5 + 0.25 * (u - 0.5), 0.5 + 0.2 * u, 0.45];
            let s = wave.factors()[0].argument(&x);
            let h0 = wave.profile.eval(0, s, 0);
            let state = wave.eval_state(&x);
            for i in 0..3 {
                assert_abs_diff_eq!(
                    state.m[i],
                    wave.w_bar.n_bar[i] * h0,
                    epsilon = 1e-10 * (1.0 + h0.abs())
                );
            }
        }
    }

    #[test]
    fn deviation_scales_inversely_with_frequency() {
        // The k-th corrector term scales like (1/(margin·hw·λ))^k, so the
        // O(1/λ) regime needs the envelope's derivative scale well below the
        // smallest frequency tested; margin 0.95 at hw 0.5 puts it near 2.
        let dir = test_direction(3);
        let cutoff = CutoffBump::new(vec![0.5; 3], 0.5, 0.95, 7).unwrap();
        let profile = build_staircase(0.4, 0.02).unwrap();
        let b = DMatrix::from_fn(3, 3, |i, j| 0.4 * (i as f64 - 0.3 * j as f64) + 0.2);
        let sup = |lambda: f64| {
            build_localized_wave(&dir, lambda, &cutoff, &profile, &b)
                .unwrap()
                .sup_deviation_sampled(4000, 11)
        };
        let ratio = sup(8.0) / sup(32.0);
        assert!(
            (2.0..8.0).contains(&ratio),
            "deviation ratio {ratio} across a 4x frequency step"
        );
    }

    #[test]
    fn mean_certificate_is_tiny() {
        for lambda in [2.0, 64.0] {
            let wave = test_wave(3, lambda);
            let bound = wave.mean_bound_certificate();
            let scale = wave.field_sup_bound();
            assert!(
                bound <= 1e-10 * (1.0 + scale) * lambda,
                "mean bound {bound} at λ={lambda}, scale {scale}"
            );
        }
    }

    #[test]
    fn quadrature_mean_vanishes_at_resolvable_frequency() {
        let dir = test_direction(3);
        let cutoff = CutoffBump::new(vec![0.5; 3], 0.4, 0.5, 7).unwrap();
        let profile = build_staircase(0.5, 0.12).unwrap();
        let b = DMatrix::zeros(3, 3);
        let wave = build_localized_wave(&dir, 2.0, &cutoff, &profile, &b).unwrap();
        let mean = wave.mean_quadrature(96);
        let cell = (2.0f64 * 0.4).powi(3);
        // ‖w̃‖_∞ lower estimate from the plateau value.
        let scale = wave.w_bar.as_state().norm() * wave.profile.mu2 * cell;
        assert!(
            mean.norm() <= 1e-9 * scale,
            "quadrature mean {} vs scale {scale}",
            mean.norm()
        );
    }

    #[test]
    fn two_phase_measures_match_weights() {
        let dir = test_direction(3);
        let cutoff = CutoffBump::new(vec![0.5; 3], 0.4, 0.04, 7).unwrap();
        let profile = build_staircase(0.5, 0.01).unwrap();
        let b = DMatrix::zeros(3, 3);
        let wave = build_localized_wave(&dir, 24.0, &cutoff, &profile, &b).unwrap();
        let z = dir.as_state();
        let w = FlowState::zero(3);
        // w = μ₁w₁ + μ₂w₂ with w₂ − w₁ = z: w₁ = −μ₂z, w₂ = μ₁z... with
        // h₀ ∈ {−μ₂, μ₁}: the wave reaches w + μ₁z and w − μ₂z.
        let w1 = w.add_scaled(&z, -wave.profile.mu2);
        let w2 = w.add_scaled(&z, wave.profile.mu1);
        let eps = 0.2 * z.norm();
        let report = two_phase_regions(&wave, &w, (&w1, &w2), eps, 48);
        assert!(report.disjoint);
        let cell = report.cell_measure;
        assert!(
            report.balance_gap < 0.12 * cell,
            "balance gap {} of cell {cell}",
            report.balance_gap
        );
        assert!(report.measure1 > 0.3 * cell && report.measure2 > 0.3 * cell);
    }

    #[test]
    fn zero_direction_gives_zero_wave() {
        let n = 3;
        let base = test_direction(n);
        let dir = LambdaDirection::new(vec![0.0; n], SymTraceFree::zero(n), base.xi).unwrap();
        let cutoff = CutoffBump::new(vec![0.5; n], 0.4, 0.25, 7).unwrap();
        let profile = build_staircase(0.4, 0.02).unwrap();
        let wave =
            build_localized_wave(&dir, 8.0, &cutoff, &profile, &DMatrix::zeros(n, n)).unwrap();
        let s = wave.eval_state(&[0.5, 0.48, 0.52]);
        assert_eq!(s.norm(), 0.0);
    }

    #[test]
    fn rejects_bad_ingredients() {
        let dir = test_direction(3);
        let cutoff = CutoffBump::new(vec![0.5; 3], 0.4, 0.25, 7).unwrap();
        let profile = build_staircase(0.4, 0.02).unwrap();
        let b = DMatrix::zeros(3, 3);
        assert!(build_localized_wave(&dir, 0.5, &cutoff, &profile, &b).is_err());
        let rough = CutoffBump::new(vec![0.5; 3], 0.4, 0.25, 3).unwrap();
        assert!(build_localized_wave(&dir, 8.0, &rough, &profile, &b).is_err());
        let b4 = DMatrix::zeros(4, 4);
        assert!(build_localized_wave(&dir, 8.0, &cutoff, &profile, &b4).is_err());
    }
}

