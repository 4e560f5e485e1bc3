//! Blow-up profile `P = Q + Σ b^{2j} λ^{(k+1)α} P⁺_{jk} + i b^{2j+1} λ^{(k+1)α} P⁻_{jk}`.
//!
//! The coefficients are found by treating `P` as a bivariate series in
//! `B = b` and `L = λ^α`, substituting `b_s = θ - b²` and `λ_s = -bλ`, and
//! cancelling the profile equation monomial by monomial. Each `(j,k)` gives
//!
//! ```text
//! L₊ P⁺ = R⁺ + (β/4)|y|²Q,      L₋ P⁻ = R⁻ - (2j + α(k+1)) P⁺,
//! ```
//!
//! and `β = β_{jk}` is fixed by requiring the `L₋` right side to be
//! orthogonal to `Q`.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groundstate::{linear_fit, GroundStateData};
use crate::radial::{self, Decay, RadialFunction, RadialGrid};

pub const DEFAULT_K: usize = 2;
pub const MIN_ALPHA: f64 = 0.05;
const MAX_PARAM: f64 = 0.5;
const SOLVABILITY_TOL: f64 = 1e-8;

// ---------------------------------------------------------------------------
// nonlinearities

/// `|z|^e z`
pub fn power_nl(z: Complex64, e: f64) -> Complex64 {
    z * z.norm().powf(e)
}

/// `|z|^{e+2} / (e+2)`, the potential of [`power_nl`].
pub fn power_potential(z: Complex64, e: f64) -> f64 {
    z.norm().powf(e + 2.0) / (e + 2.0)
}

/// Directional derivative `d(|z|^e z)(w) = |z|^e w + e |z|^{e-2} Re(z w̄) z`.
pub fn power_nl_derivative(z: Complex64, w: Complex64, e: f64) -> Complex64 {
    let m = z.norm();
    if m == 0.0 {
        return Complex64::default();
    }
    w * m.powf(e) + z * (e * m.powf(e - 2.0) * (z * w.conj()).re)
}

// ---------------------------------------------------------------------------
// series in (B, L)

type Key = (usize, usize);

fn weight(k: Key) -> usize {
    k.0 + 2 * k.1
}

/// Truncated series `Σ c_{a,c}(y) B^a L^c` with `a + 2c ≤ wmax`.
#[derive(Debug, Clone)]
struct Series {
    wmax: usize,
    n: usize,
    terms: BTreeMap<Key, Vec<Complex64>>,
}

impl Series {
    fn new(wmax: usize, n: usize) -> Self {
        Self { wmax, n, terms: BTreeMap::new() }
    }

    fn constant(wmax: usize, v: Vec<Complex64>) -> Self {
        let mut s = Self::new(wmax, v.len());
        s.terms.insert((0, 0), v);
        s
    }

    fn add_term(&mut self, key: Key, v: &[Complex64], c: Complex64) {
        if weight(key) > self.wmax {
            return;
        }
        let n = self.n;
        let slot = self.terms.entry(key).or_insert_with(|| vec![Complex64::default(); n]);
        for (s, x) in slot.iter_mut().zip(v) {
            *s += c * x;
        }
    }

    fn add(&mut self, other: &Series, c: Complex64) {
        for (k, v) in &other.terms {
            self.add_term(*k, v, c);
        }
    }

    fn mul(&self, other: &Series) -> Series {
        let mut out = Series::new(self.wmax, self.n);
        for (k1, v1) in &self.terms {
            for (k2, v2) in &other.terms {
                let k = (k1.0 + k2.0, k1.1 + k2.1);
                if weight(k) > self.wmax {
                    continue;
                }
                let n = self.n;
                let slot = out.terms.entry(k).or_insert_with(|| vec![Complex64::default(); n]);
                for i in 0..n {
                    slot[i] += v1[i] * v2[i];
                }
            }
        }
        out
    }

    /// Multiplies every coefficient by a scalar series `Σ t_{a,c} B^a L^c`.
    fn mul_scalar_series(&self, t: &BTreeMap<Key, f64>) -> Series {
        let mut out = Series::new(self.wmax, self.n);
        for (k1, v) in &self.terms {
            for (k2, c) in t {
                out.add_term((k1.0 + k2.0, k1.1 + k2.1), v, (*c).into());
            }
        }
        out
    }

    fn map(&self, f: impl Fn(usize, Complex64) -> Complex64) -> Series {
        let terms = self
            .terms
            .iter()
            .map(|(k, v)| (*k, v.iter().enumerate().map(|(i, x)| f(i, *x)).collect()))
            .collect();
        Series { wmax: self.wmax, n: self.n, terms }
    }

    fn conj(&self) -> Series {
        self.map(|_, x| x.conj())
    }

    fn get(&self, k: Key) -> Option<&Vec<Complex64>> {
        self.terms.get(&k)
    }
}

/// Generalized binomial coefficient `C(a, n)`.
fn gbinom(a: f64, n: usize) -> f64 {
    (0..n).fold(1.0, |acc, i| acc * (a - i as f64) / (i as f64 + 1.0))
}

/// `|P|^e P` as a series, expanding `|P|^e = Q^e (1 + X)^{e/2}` with
/// `X = (|P|² - Q²)/Q²`.
fn power_series(p: &Series, q: &[f64], e: f64) -> Series {
    let wmax = p.wmax;
    let p2 = p.mul(&p.conj());
    let mut x = p2.map(|i, v| v / (q[i] * q[i]));
    x.terms.remove(&(0, 0));
    let ones = vec![Complex64::from(1.0); p.n];
    let mut sum = Series::constant(wmax, ones.clone());
    let mut xn = Series::constant(wmax, ones);
    for n in 1..=wmax / 2 {
        xn = xn.mul(&x);
        if xn.terms.is_empty() {
            break;
        }
        sum.add(&xn, gbinom(e / 2.0, n).into());
    }
    sum.map(|i, v| v * q[i].powf(e)).mul(p)
}

// ---------------------------------------------------------------------------
// expansion

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileTerm {
    pub j: usize,
    pub k: usize,
    pub beta: f64,
    /// `(R⁻ - c P⁺, Q)₂ / ‖Q‖₂²` left after β was fixed
    pub solvability: f64,
    pub decay_plus: f64,
    pub decay_minus: f64,
    #[serde(skip)]
    pub pplus: Vec<f64>,
    #[serde(skip)]
    pub pminus: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ProfileExpansion {
    pub dim: usize,
    pub p: f64,
    pub alpha: f64,
    pub order: usize,
    pub beta: f64,
    pub eps_prime: f64,
    pub terms: Vec<ProfileTerm>,
    gs: Arc<GroundStateData>,
}

/// Evaluated profile at one `(b, λ)`.
#[derive(Debug, Clone)]
pub struct ProfileEval {
    pub p: RadialFunction,
    pub theta: f64,
    pub psi_norm: f64,
    pub eps_prime: f64,
}

pub fn alpha_of(dim: usize, p: f64) -> f64 {
    2.0 - dim as f64 * (p - 1.0) / 2.0
}

/// `β` from its closed form `2N(p-1)/(p+1) ‖Q‖_{p+1}^{p+1} / ‖|y|Q‖₂²`.
pub fn beta_formula(gs: &GroundStateData, p: f64) -> f64 {
    let n = gs.dim as f64;
    2.0 * n * (p - 1.0) / (p + 1.0) * gs.lp_pow(p) / gs.norms.moment1
}

fn fitted_decay(grid: &RadialGrid, v: &[f64]) -> f64 {
    let rmax = grid.rmax();
    let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak == 0.0 {
        return f64::INFINITY;
    }
    let pts: Vec<(f64, f64)> = grid
        .nodes()
        .iter()
        .zip(v)
        .filter(|(r, x)| **r >= 0.25 * rmax && **r <= 0.75 * rmax && x.abs() > 1e-300)
        .map(|(r, x)| (*r, x.abs().ln()))
        .collect();
    if pts.len() < 4 {
        return f64::INFINITY;
    }
    -linear_fit(&pts).0
}

/// Builds the order-`K` expansion on the ground state's grid.
pub fn build_expansion(gs: Arc<GroundStateData>, p: f64, order: usize) -> Result<ProfileExpansion> {
    let dim = gs.dim;
    let crit = 1.0 + 4.0 / dim as f64;
    if !(p > 1.0 && p < crit) {
        return Err(Error::InvalidArgument(format!("p = {p} outside (1, {crit})")));
    }
    let alpha = alpha_of(dim, p);
    if alpha < MIN_ALPHA {
        return Err(Error::InvalidArgument(format!("α = {alpha:.4} < {MIN_ALPHA}: too close to critical")));
    }
    if order == 0 || order > 4 {
        return Err(Error::InvalidArgument(format!("expansion order {order} outside 1..=4")));
    }
    let grid = gs.grid().clone();
    let n = grid.len();
    let qv = gs.q_values().to_vec();
    let r2: Vec<f64> = grid.nodes().iter().map(|r| r * r).collect();
    let w = grid.weights();
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).zip(w).map(|((x, y), w)| x * y * w).sum() };
    let rho = gs.rho.re();
    let rho_q = dot(&rho, &qv);
    let qe = 4.0 / dim as f64;
    let wmax = 2 * order + 3;

    let mut coeffs: BTreeMap<Key, Vec<Complex64>> = BTreeMap::new();
    coeffs.insert((0, 0), qv.iter().map(|&v| v.into()).collect());
    let mut theta: BTreeMap<Key, f64> = BTreeMap::new();
    let mut terms = Vec::new();

    for level in 1..=order + 1 {
        for j in (0..level).rev() {
            let k = level - 1 - j;
            let pser = Series { wmax, n, terms: coeffs.clone() };
            let res = residual_series(&pser, &theta, &grid, &qv, &r2, alpha, qe, p - 1.0);
            let zero = vec![Complex64::default(); n];
            let rp: Vec<f64> = res.get((2 * j, k + 1)).unwrap_or(&zero).iter().map(|v| v.re).collect();
            let rm: Vec<f64> = res.get((2 * j + 1, k + 1)).unwrap_or(&zero).iter().map(|v| v.im).collect();
            let c = 2.0 * j as f64 + alpha * (k + 1) as f64;
            let a = gs.solve_lplus(&rp);
            let beta = 4.0 * (dot(&rm, &qv) / c - dot(&a, &qv)) / rho_q;
            let pplus: Vec<f64> = a.iter().zip(&rho).map(|(x, y)| x + 0.25 * beta * y).collect();
            let rhs: Vec<f64> = rm.iter().zip(&pplus).map(|(x, y)| x - c * y).collect();
            let (pminus, sigma) = gs.solve_lminus(&rhs)?;
            let scale = rhs.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
            if sigma.abs() > SOLVABILITY_TOL * scale {
                return Err(Error::Solvability { j, k, residual: sigma });
            }
            coeffs.insert((2 * j, k + 1), pplus.iter().map(|&v| v.into()).collect());
            coeffs.insert((2 * j + 1, k + 1), pminus.iter().map(|&v| Complex64::new(0.0, v)).collect());
            theta.insert((2 * j, k + 1), beta);
            terms.push(ProfileTerm {
                j,
                k,
                beta,
                solvability: sigma,
                decay_plus: fitted_decay(&grid, &pplus),
                decay_minus: fitted_decay(&grid, &pminus),
                pplus,
                pminus,
            });
        }
    }
    let beta = terms.iter().find(|t| t.j == 0 && t.k == 0).map(|t| t.beta).unwrap();
    let eps_prime = 0.5 * gs.report.decay_rate;
    Ok(ProfileExpansion { dim, p, alpha, order, beta, eps_prime, terms, gs })
}

/// The profile equation applied to the series `P` with `θ` given.
#[allow(clippy::too_many_arguments)]
fn residual_series(
    p: &Series,
    theta: &BTreeMap<Key, f64>,
    grid: &RadialGrid,
    q: &[f64],
    r2: &[f64],
    alpha: f64,
    qe: f64,
    pm1: f64,
) -> Series {
    let (wmax, n) = (p.wmax, p.n);
    let i = Complex64::i();
    let mut out = Series::new(wmax, n);
    // i ∂_s P
    for (&(a, c), v) in &p.terms {
        if a > 0 {
            for (&(ta, tc), &tv) in theta {
                out.add_term((a - 1 + ta, c + tc), v, i * (a as f64 * tv));
            }
        }
        out.add_term((a + 1, c), v, i * -(a as f64 + alpha * c as f64));
    }
    // ΔP - P
    for (&key, v) in &p.terms {
        let lap = grid.laplacian(v);
        out.add_term(key, &lap, 1.0.into());
        out.add_term(key, v, (-1.0).into());
    }
    out.add(&power_series(p, q, qe), 1.0.into());
    let g = power_series(p, q, pm1);
    for (&(a, c), v) in &g.terms {
        out.add_term((a, c + 1), v, 1.0.into());
    }
    let tp = p.mul_scalar_series(theta).map(|k, v| v * (0.25 * r2[k]));
    out.add(&tp, 1.0.into());
    out
}

impl ProfileExpansion {
    pub fn ground_state(&self) -> &Arc<GroundStateData> {
        &self.gs
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.gs.grid()
    }

    pub fn term(&self, j: usize, k: usize) -> Option<&ProfileTerm> {
        self.terms.iter().find(|t| t.j == j && t.k == k)
    }

    pub fn pplus(&self, j: usize, k: usize) -> Option<RadialFunction> {
        self.term(j, k)
            .map(|t| RadialFunction::from_real(self.grid().clone(), t.pplus.clone(), Decay::Exponential))
    }

    pub fn pminus(&self, j: usize, k: usize) -> Option<RadialFunction> {
        self.term(j, k)
            .map(|t| RadialFunction::from_real(self.grid().clone(), t.pminus.clone(), Decay::Exponential))
    }

    /// Every stored coefficient decays at a fitted exponential rate ≥ 1/2.
    pub fn all_decaying(&self) -> bool {
        self.terms.iter().all(|t| t.decay_plus >= 0.5 && t.decay_minus >= 0.5)
    }

    /// Truncated to a lower order (terms with `j + k ≤ order`).
    pub fn truncated(&self, order: usize) -> ProfileExpansion {
        let mut out = self.clone();
        out.order = order.min(self.order);
        out.terms.retain(|t| t.j + t.k <= out.order);
        out
    }

    fn check_params(b: f64, lambda: f64) -> Result<()> {
        if !(b.abs() <= MAX_PARAM && (0.0..=MAX_PARAM).contains(&lambda)) {
            return Err(Error::InvalidArgument(format!(
                "(b, λ) = ({b}, {lambda}) outside |b|, λ ≤ {MAX_PARAM}"
            )));
        }
        Ok(())
    }

    /// `θ(b, λ) = Σ b^{2j} λ^{(k+1)α} β_{jk}`.
    pub fn theta(&self, b: f64, lambda: f64) -> f64 {
        let l = lambda.powf(self.alpha);
        self.terms
            .iter()
            .map(|t| b.powi(2 * t.j as i32) * l.powi(t.k as i32 + 1) * t.beta)
            .sum()
    }

    pub(crate) fn p_values(&self, b: f64, lambda: f64) -> Vec<Complex64> {
        let l = lambda.powf(self.alpha);
        let mut v: Vec<Complex64> = self.gs.q_values().iter().map(|&x| x.into()).collect();
        for t in &self.terms {
            let cp = b.powi(2 * t.j as i32) * l.powi(t.k as i32 + 1);
            let cm = cp * b;
            if cp == 0.0 {
                continue;
            }
            for ((x, pp), pm) in v.iter_mut().zip(&t.pplus).zip(&t.pminus) {
                *x += Complex64::new(cp * pp, cm * pm);
            }
        }
        v
    }

    /// `(∂_b P, ∂_λ P)` on the reference grid.
    pub(crate) fn p_param_derivatives(&self, b: f64, lambda: f64) -> (Vec<Complex64>, Vec<Complex64>) {
        let l = lambda.powf(self.alpha);
        let n = self.grid().len();
        let (mut db, mut dl) = (vec![Complex64::default(); n], vec![Complex64::default(); n]);
        for t in &self.terms {
            let (a, c) = (2 * t.j as i32, t.k as i32 + 1);
            let lc = l.powi(c);
            let dbp = if a > 0 { a as f64 * b.powi(a - 1) * lc } else { 0.0 };
            let dbm = (a + 1) as f64 * b.powi(a) * lc;
            let dlp = self.alpha * c as f64 * b.powi(a) * lc / lambda;
            let dlm = dlp * b;
            for i in 0..n {
                let (pp, pm) = (t.pplus[i], t.pminus[i]);
                db[i] += Complex64::new(dbp * pp, dbm * pm);
                dl[i] += Complex64::new(dlp * pp, dlm * pm);
            }
        }
        (db, dl)
    }

    /// `P(b, λ)` on the reference grid.
    pub fn eval_p(&self, b: f64, lambda: f64) -> Result<RadialFunction> {
        Self::check_params(b, lambda)?;
        Ok(RadialFunction::from_complex(self.grid().clone(), self.p_values(b, lambda), Decay::Exponential))
    }

    /// `∂_s P` under `b_s = θ - b²`, `λ_s = -bλ`.
    pub(crate) fn ps_values(&self, b: f64, lambda: f64) -> Vec<Complex64> {
        let l = lambda.powf(self.alpha);
        let bs = self.theta(b, lambda) - b * b;
        // d/ds (b^a L^c) = a b^{a-1} b_s L^c - α c b^{a+1} L^c
        let d = |a: i32, c: i32| -> f64 {
            let first = if a > 0 { a as f64 * b.powi(a - 1) * bs * l.powi(c) } else { 0.0 };
            first - self.alpha * c as f64 * b.powi(a + 1) * l.powi(c)
        };
        let mut v = vec![Complex64::default(); self.grid().len()];
        for t in &self.terms {
            let (a, c) = (2 * t.j as i32, t.k as i32 + 1);
            let (dp, dm) = (d(a, c), d(a + 1, c));
            for ((x, pp), pm) in v.iter_mut().zip(&t.pplus).zip(&t.pminus) {
                *x += Complex64::new(dp * pp, dm * pm);
            }
        }
        v
    }

    /// `Ψ = i P_s + ΔP - P + f(P) + λ^α g(P) + θ |y|² P / 4`.
    pub fn psi(&self, b: f64, lambda: f64) -> Result<RadialFunction> {
        Self::check_params(b, lambda)?;
        let grid = self.grid();
        let p = self.p_values(b, lambda);
        let ps = self.ps_values(b, lambda);
        let lap = grid.laplacian(&p);
        let theta = self.theta(b, lambda);
        let l = lambda.powf(self.alpha);
        let qe = 4.0 / self.dim as f64;
        let values = grid
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, r)| {
                Complex64::i() * ps[i] + lap[i] - p[i]
                    + power_nl(p[i], qe)
                    + power_nl(p[i], self.p - 1.0) * l
                    + p[i] * (theta * r * r / 4.0)
            })
            .collect();
        Ok(RadialFunction::from_complex(grid.clone(), values, Decay::Exponential))
    }

    /// `‖e^{ε'|y|} Ψ‖_{H¹}`.
    pub fn residual_psi(&self, b: f64, lambda: f64) -> Result<f64> {
        let psi = self.psi(b, lambda)?;
        let ep = self.eps_prime;
        let weighted = psi.map(|r, v| v * (ep * r).exp());
        Ok(radial::h1_sq(&weighted).sqrt())
    }

    pub fn evaluate(&self, b: f64, lambda: f64) -> Result<ProfileEval> {
        Ok(ProfileEval {
            p: self.eval_p(b, lambda)?,
            theta: self.theta(b, lambda),
            psi_norm: self.residual_psi(b, lambda)?,
            eps_prime: self.eps_prime,
        })
    }

    /// `P_{λ,b,γ}(x) = λ^{-N/2} P(x/λ) e^{-ib|x|²/(4λ²) + iγ}` on `target`.
    pub fn rescale_profile(&self, lambda: f64, b: f64, gamma: f64, target: &Arc<RadialGrid>) -> Result<RadialFunction> {
        let p = self.p_values_checked(b, lambda)?;
        rescale_values(self.grid(), &p, lambda, b, gamma, target)
    }

    fn p_values_checked(&self, b: f64, lambda: f64) -> Result<Vec<Complex64>> {
        Self::check_params(b, lambda)?;
        if lambda <= 0.0 {
            return Err(Error::InvalidArgument("λ must be positive".into()));
        }
        Ok(self.p_values(b, lambda))
    }

    /// `‖P(b, λ)‖₂²`.
    pub fn profile_mass(&self, b: f64, lambda: f64) -> Result<f64> {
        Ok(radial::mass(&self.eval_p(b, lambda)?))
    }

    /// `E(P_{λ,b,γ})` with the focusing sign on both powers.
    pub fn profile_energy(&self, lambda: f64, b: f64) -> Result<f64> {
        let p = self.p_values_checked(b, lambda)?;
        Ok(self.reference_energy(&p, lambda, b) / (lambda * lambda))
    }

    /// `λ² E = ½‖∇(P e^{-ib|y|²/4})‖² - ∫F(P) - λ^α ∫G(P)`.
    fn reference_energy(&self, p: &[Complex64], lambda: f64, b: f64) -> f64 {
        let grid = self.grid();
        let v: Vec<Complex64> = p
            .iter()
            .zip(grid.nodes())
            .map(|(x, r)| x * Complex64::from_polar(1.0, -b * r * r / 4.0))
            .collect();
        let kv = grid.stiffness_apply(&v);
        let kinetic: f64 = v.iter().zip(&kv).map(|(a, c)| a.re * c.re + a.im * c.im).sum();
        let qe = 4.0 / self.dim as f64;
        let l = lambda.powf(self.alpha);
        let pot: f64 = p
            .iter()
            .zip(grid.weights())
            .map(|(x, w)| w * (power_potential(*x, qe) + l * power_potential(*x, self.p - 1.0)))
            .sum();
        0.5 * kinetic - pot
    }

    /// `|8E - ‖|y|Q‖²(b²/λ² - 2β/(2-α) λ^{α-2})| / (λ^α(b²+λ^α)/λ²)`.
    pub fn energy_expansion_ratio(&self, lambda: f64, b: f64) -> Result<f64> {
        let p = self.p_values_checked(b, lambda)?;
        let l = lambda.powf(self.alpha);
        // everything multiplied by λ² to avoid cancellation at small λ
        let e = self.reference_energy(&p, lambda, b);
        let lead = self.gs.norms.moment1 * (b * b - 2.0 * self.beta / (2.0 - self.alpha) * l);
        Ok((8.0 * e - lead).abs() / (l * (b * b + l)))
    }

    /// β of every stored term, keyed `"j,k"`.
    pub fn betas(&self) -> BTreeMap<String, f64> {
        self.terms.iter().map(|t| (format!("{},{}", t.j, t.k), t.beta)).collect()
    }
}

/// Rescales reference-grid values onto `target`; rejects grids that cannot
/// resolve the quadratic phase where the profile is significant.
pub(crate) fn rescale_values(
    reference: &Arc<RadialGrid>,
    p: &[Complex64],
    lambda: f64,
    b: f64,
    gamma: f64,
    target: &Arc<RadialGrid>,
) -> Result<RadialFunction> {
    if target.dim() != reference.dim() {
        return Err(Error::GridMismatch("dimension differs".into()));
    }
    let half_n = 0.5 * reference.dim() as f64;
    let amp = lambda.powf(-half_n);
    let peak = p.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    let nodes = target.nodes();
    let mut values = Vec::with_capacity(nodes.len());
    let mut prev: Option<(f64, f64)> = None;
    for &r in nodes {
        let y = r / lambda;
        let v = reference.interpolate(p, y);
        let phase = -b * r * r / (4.0 * lambda * lambda);
        if let Some((r0, a0)) = prev {
            let significant = a0.max(v.norm()) > 1e-8 * peak;
            let dphi = (b * (r * r - r0 * r0) / (4.0 * lambda * lambda)).abs();
            if significant && dphi > FRAC_PI_4 {
                return Err(Error::GridTooCoarse(format!(
                    "quadratic phase changes by {dphi:.3} > π/4 between r = {r0:.4e} and {r:.4e}"
                )));
            }
        }
        prev = Some((r, v.norm()));
        values.push(v * amp * Complex64::from_polar(1.0, phase + gamma));
    }
    Ok(RadialFunction::from_complex(target.clone(), values, Decay::Exponential))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_product_truncates_by_weight() {
        let n = 2;
        let one = vec![Complex64::from(1.0); n];
        let mut a = Series::new(3, n);
        a.add_term((1, 0), &one, 1.0.into());
        a.add_term((0, 1), &one, 2.0.into());
        let sq = a.mul(&a);
        assert_eq!(sq.get((2, 0)).unwrap()[0], Complex64::from(1.0));
        assert_eq!(sq.get((1, 1)).unwrap()[0], Complex64::from(4.0));
        assert!(sq.get((0, 2)).is_none());
    }

    #[test]
    fn binomial_coefficients() {
        assert_eq!(gbinom(2.0, 2), 1.0);
        assert!((gbinom(0.5, 2) + 0.125).abs() < 1e-15);
        assert_eq!(gbinom(3.0, 0), 1.0);
    }

    #[test]
    fn power_series_matches_direct_power() {
        // P = Q + B·i·u + L·v with scalar nodes; compare |P|^e P at small B, L
        let q = vec![1.3, 0.7];
        let n = q.len();
        let mut p = Series::new(7, n);
        p.add_term((0, 0), &q.iter().map(|&x| x.into()).collect::<Vec<_>>(), 1.0.into());
        p.add_term((0, 1), &[Complex64::from(0.4), Complex64::from(-0.2)], 1.0.into());
        p.add_term((1, 1), &[Complex64::new(0.0, 0.3), Complex64::new(0.0, 0.1)], 1.0.into());
        let e = 4.0 / 3.0;
        let s = power_series(&p, &q, e);
        let (bb, ll) = (0.03, 0.02);
        for i in 0..n {
            let z = Complex64::from(q[i]) + ll * p.get((0, 1)).unwrap()[i] + bb * ll * p.get((1, 1)).unwrap()[i];
            let direct = power_nl(z, e);
            let series: Complex64 = s
                .terms
                .iter()
                .map(|(&(a, c), v)| v[i] * bb.powi(a as i32) * ll.powi(c as i32))
                .sum();
            assert!((direct - series).norm() < 1e-8, "{direct} vs {series}");
        }
    }

    #[test]
    fn nonlinearity_calculus() {
        let e = 4.0 / 3.0;
        let z = Complex64::new(0.8, -0.3);
        let w = Complex64::new(-0.2, 0.5);
        let h = 1e-6;
        let fd = (power_potential(z + w * h, e) - power_potential(z - w * h, e)) / (2.0 * h);
        assert!((fd - (power_nl(z, e) * w.conj()).re).abs() < 1e-9);
        let w2 = Complex64::new(0.3, 0.1);
        let lhs = (power_nl_derivative(z, w, e) * w2.conj()).re;
        let rhs = (power_nl_derivative(z, w2, e) * w.conj()).re;
        assert!((lhs - rhs).abs() < 1e-14);
        let fd2 = (power_nl(z + w * h, e) - power_nl(z - w * h, e)) / (2.0 * h);
        assert!((fd2 - power_nl_derivative(z, w, e)).norm() < 1e-8);
    }
}
