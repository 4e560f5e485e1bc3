//! Approximate blow-up laws, the integral map `ℱ`, initial parameters and
//! the rescaled-time constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::ProfileExpansion;

pub const DEFAULT_MIN_S1: f64 = 50.0;
const LAMBDA0_CAP: f64 = 0.1;
const ROOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LawConstants {
    pub alpha: f64,
    pub beta: f64,
    pub e0: f64,
    /// `8E₀ / ‖|y|Q‖₂²`
    pub c0: f64,
    pub lambda0: f64,
    /// `‖|y|Q‖₂²`
    pub moment1: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "C_lambda")]
    pub c_lambda: f64,
    #[serde(rename = "C_b")]
    pub c_b: f64,
}

impl LawConstants {
    pub fn new(exp: &ProfileExpansion, e0: f64) -> Result<Self> {
        Self::from_parts(exp.alpha, exp.beta, exp.ground_state().norms.moment1, e0)
    }

    pub fn from_parts(alpha: f64, beta: f64, moment1: f64, e0: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) || !(beta > 0.0) || !(moment1 > 0.0) || !e0.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "need 0 < α < 2, β > 0, ‖|y|Q‖² > 0 (α={alpha}, β={beta}, E0={e0})"
            )));
        }
        let a = 2.0 * beta / (2.0 - alpha);
        let c0 = 8.0 * e0 / moment1;
        // keep the radicand above half of its C₀ = 0 value
        let lambda0 = if c0 < 0.0 {
            LAMBDA0_CAP.min((a / (2.0 * c0.abs())).powf(1.0 / (2.0 - alpha)))
        } else {
            LAMBDA0_CAP
        };
        let amp = 0.5 * alpha * a.sqrt();
        let c = alpha / (4.0 - alpha) * amp.powf(-4.0 / alpha);
        let c_lambda = c.powf(-2.0 / (4.0 - alpha)) * amp.powf(-2.0 / alpha);
        let c_b = 2.0 / alpha * c.powf(-alpha / (4.0 - alpha));
        Ok(Self { alpha, beta, e0, c0, lambda0, moment1, c, c_lambda, c_b })
    }

    /// `2β/(2-α)`
    pub fn a(&self) -> f64 {
        2.0 * self.beta / (2.0 - self.alpha)
    }

    /// `(α/2)√(2β/(2-α))`
    fn amp(&self) -> f64 {
        0.5 * self.alpha * self.a().sqrt()
    }

    /// Exponent of `λ(t) ~ |t|^{2/(4-α)}`.
    pub fn lambda_exponent(&self) -> f64 {
        2.0 / (4.0 - self.alpha)
    }

    /// Exponent of `b(t) ~ |t|^{α/(4-α)}`.
    pub fn b_exponent(&self) -> f64 {
        self.alpha / (4.0 - self.alpha)
    }

    /// `(λ_app(s), b_app(s))`.
    pub fn lambda_b_app(&self, s: f64) -> Result<(f64, f64)> {
        if !(s > 0.0) {
            return Err(Error::InvalidArgument(format!("rescaled time must be positive, got {s}")));
        }
        let lam = (self.amp() * s).powf(-2.0 / self.alpha);
        Ok((lam, 2.0 / (self.alpha * s)))
    }

    fn integrand_log(&self, x: f64) -> f64 {
        // μ = e^x: μ^{-α/2} (a + C₀ μ^{2-α})^{-1/2}
        let mu = x.exp();
        let rad = self.a() + self.c0 * mu.powf(2.0 - self.alpha);
        mu.powf(-0.5 * self.alpha) / rad.sqrt()
    }

    /// `ℱ(λ) = ∫_λ^{λ₀} μ^{-α/2-1} (2β/(2-α) + C₀ μ^{2-α})^{-1/2} dμ`.
    pub fn f_of_lambda(&self, lambda: f64) -> Result<f64> {
        // absorb round-off from log/exp round trips at the upper end
        let lambda = if lambda > self.lambda0 && lambda <= self.lambda0 * (1.0 + 1e-12) { self.lambda0 } else { lambda };
        if !(lambda > 0.0 && lambda <= self.lambda0) {
            return Err(Error::InvalidArgument(format!(
                "λ = {lambda} outside (0, λ₀ = {}]",
                self.lambda0
            )));
        }
        let rad_min = self.a() + self.c0.min(0.0) * self.lambda0.powf(2.0 - self.alpha);
        if rad_min <= 0.0 {
            return Err(Error::InvalidArgument("radicand of ℱ is nonpositive".into()));
        }
        Ok(adaptive_gauss(&|x| self.integrand_log(x), lambda.ln(), self.lambda0.ln(), 1e-14))
    }

    /// Closed form of `ℱ` when `C₀ = 0`.
    pub fn f_closed_form_c0_zero(&self, lambda: f64) -> f64 {
        2.0 / self.alpha * (lambda.powf(-0.5 * self.alpha) - self.lambda0.powf(-0.5 * self.alpha)) / self.a().sqrt()
    }

    /// Leading behaviour `2 / (α λ^{α/2} √(2β/(2-α)))`.
    pub fn f_leading(&self, lambda: f64) -> f64 {
        2.0 / (self.alpha * lambda.powf(0.5 * self.alpha) * self.a().sqrt())
    }

    /// `|ℱ(λ) - leading| / (λ^{-α/4} + λ^{2-3α/2})`.
    pub fn f_asymptotic_ratio(&self, lambda: f64) -> Result<f64> {
        let f = self.f_of_lambda(lambda)?;
        let scale = lambda.powf(-0.25 * self.alpha) + lambda.powf(2.0 - 1.5 * self.alpha);
        Ok((f - self.f_leading(lambda)).abs() / scale)
    }

    /// `λ` with `ℱ(λ) = s`.
    pub fn invert_f(&self, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::InvalidArgument(format!("ℱ target must be positive, got {s}")));
        }
        let g = |x: f64| -> Result<f64> { Ok(self.f_of_lambda(x.exp())? - s) };
        let hi = self.lambda0.ln();
        // ℱ → ∞ as λ → 0; walk down until the sign changes
        let mut lo = (self.lambda0 * 0.5).ln();
        while g(lo)? < 0.0 {
            lo -= 2.0;
            if lo < -700.0 {
                return Err(Error::NoRoot(format!("ℱ(λ) = {s} has no root above e^-700")));
            }
        }
        Ok(bracketed_root(g, lo, hi, ROOT_TOL)?.exp())
    }

    /// `s₁ = |t₁ / 𝒞|^{-α/(4-α)}`.
    pub fn s1_of_t1(&self, t1: f64) -> Result<f64> {
        if !(t1 < 0.0) {
            return Err(Error::InvalidArgument(format!("t1 must be negative, got {t1}")));
        }
        Ok((t1.abs() / self.c).powf(-self.alpha / (4.0 - self.alpha)))
    }

    /// Inverse of [`s1_of_t1`](Self::s1_of_t1): `t = -𝒞 s^{-(4-α)/α}`.
    pub fn t_of_s_app(&self, s: f64) -> f64 {
        -self.c * s.powf(-(4.0 - self.alpha) / self.alpha)
    }

    /// `(λ_app, b_app)` as functions of physical time via `s(t)`.
    pub fn rates(&self, t: f64) -> (f64, f64) {
        (self.c_lambda * t.abs().powf(self.lambda_exponent()), self.c_b * t.abs().powf(self.b_exponent()))
    }
}

/// Initial parameters `(λ₁, b₁)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct InitialParams {
    pub s1: f64,
    pub lambda1: f64,
    pub b1: f64,
    /// `|λ₁^{α/2}/λ_app(s₁)^{α/2} - 1| + |b₁/b_app(s₁) - 1|`
    pub closeness: f64,
}

/// Solves `ℱ(λ₁) = s₁` and `E(P_{λ₁,b₁}) = E₀` with `b₁ > 0`.
pub fn initial_params(s1: f64, law: &LawConstants, exp: &ProfileExpansion) -> Result<InitialParams> {
    initial_params_with_min(s1, law, exp, DEFAULT_MIN_S1)
}

pub fn initial_params_with_min(s1: f64, law: &LawConstants, exp: &ProfileExpansion, min_s1: f64) -> Result<InitialParams> {
    if !(s1 >= min_s1) {
        return Err(Error::InvalidArgument(format!("s1 = {s1} below the minimum {min_s1}")));
    }
    let lambda1 = law.invert_f(s1)?;
    let b1 = solve_b_for_energy(exp, lambda1, law.e0)?;
    let (lapp, bapp) = law.lambda_b_app(s1)?;
    let half = 0.5 * law.alpha;
    let closeness = ((lambda1 / lapp).powf(half) - 1.0).abs() + (b1 / bapp - 1.0).abs();
    Ok(InitialParams { s1, lambda1, b1, closeness })
}

const B_MAX: f64 = 0.5;

/// Positive root of `E(P_{λ,b}) = E₀` in `b ∈ [0, 0.5]`.
pub fn solve_b_for_energy(exp: &ProfileExpansion, lambda: f64, e0: f64) -> Result<f64> {
    let g = |b: f64| -> Result<f64> { Ok(exp.profile_energy(lambda, b)? - e0) };
    let (g0, g1) = (g(0.0)?, g(B_MAX)?);
    if g0 > 0.0 || g1 < 0.0 {
        return Err(Error::NoRoot(format!(
            "E₀ = {e0} outside the feasible energy interval [{:.6e}, {:.6e}] at λ = {lambda:.6e}",
            g0 + e0,
            g1 + e0
        )));
    }
    if g0 == 0.0 {
        return Ok(0.0);
    }
    bracketed_root(g, 0.0, B_MAX, ROOT_TOL)
}

/// Bisection-secured secant (Illinois variant) on a sign-changing bracket.
pub fn bracketed_root(f: impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, rtol: f64) -> Result<f64> {
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoRoot(format!("no sign change on [{a}, {b}]")));
    }
    let mut side = 0i32;
    for _ in 0..300 {
        let width = (b - a).abs();
        if width <= rtol * a.abs().max(b.abs()).max(1e-300) {
            break;
        }
        let mut c = (a * fb - b * fa) / (fb - fa);
        // fall back to bisection when the secant step is not well inside
        if !(c > a.min(b) + 0.01 * width && c < a.max(b) - 0.01 * width) {
            c = 0.5 * (a + b);
        }
        let fc = f(c)?;
        if fc == 0.0 {
            return Ok(c);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Ok(0.5 * (a + b))
}

const GL_NODES: [f64; 10] = [
    -0.973_906_528_517_171_7,
    -0.865_063_366_688_984_5,
    -0.679_409_568_299_024_4,
    -0.433_395_394_129_247_2,
    -0.148_874_338_981_631_2,
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL_WEIGHTS: [f64; 10] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_9,
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_35,
    0.219_086_362_515_982_04,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_14,
];

fn gauss10(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    GL_NODES.iter().zip(&GL_WEIGHTS).map(|(x, w)| w * f(m + h * x)).sum::<f64>() * h
}

/// Adaptive 10-point Gauss–Legendre with panel bisection.
pub fn adaptive_gauss(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rtol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: usize) -> f64 {
        let m = 0.5 * (a + b);
        let (l, r) = (gauss10(f, a, m), gauss10(f, m, b));
        if depth == 0 || (l + r - whole).abs() <= tol {
            l + r
        } else {
            rec(f, a, m, l, 0.5 * tol, depth - 1) + rec(f, m, b, r, 0.5 * tol, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let whole = gauss10(f, a, b);
    let tol = rtol * whole.abs().max(1e-300);
    rec(f, a, b, whole, tol, 40)
}

/// Cumulative `∫_{x₀}^{x_i} f` from samples, integrating local cubics through
/// four neighbouring points (trapezoid when fewer than four samples).
pub fn cumulative_integral(xs: &[f64], fs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut out = vec![0.0; n];
    if n < 4 {
        for i in 1..n {
            out[i] = out[i - 1] + 0.5 * (xs[i] - xs[i - 1]) * (fs[i] + fs[i - 1]);
        }
        return out;
    }
    // 3-point Gauss rule is exact for the cubic
    let g = [(-(0.6f64).sqrt(), 5.0 / 9.0), (0.0, 8.0 / 9.0), ((0.6f64).sqrt(), 5.0 / 9.0)];
    for i in 0..n - 1 {
        let lo = i.saturating_sub(1).min(n - 4);
        let (px, pf) = (&xs[lo..lo + 4], &fs[lo..lo + 4]);
        let (a, b) = (xs[i], xs[i + 1]);
        let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
        let mut acc = 0.0;
        for (x, w) in g {
            let x = m + h * x;
            let mut v = 0.0;
            for j in 0..4 {
                let mut l = 1.0;
                for k in 0..4 {
                    if k != j {
                        l *= (x - px[k]) / (px[j] - px[k]);
                    }
                }
                v += l * pf[j];
            }
            acc += w * v;
        }
        out[i + 1] = out[i] + acc * h;
    }
    out
}

/// Rescaled-time bookkeeping along a trajectory: `s(t) = s₁ + ∫_{t₁}^t λ̃^{-2}`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TimeMap {
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    lambda: Vec<f64>,
}

impl TimeMap {
    pub fn new(t1: f64, s1: f64, lambda1: f64) -> Self {
        Self { t: vec![t1], s: vec![s1], lambda: vec![lambda1] }
    }

    /// Appends a sample; `s` advances by the trapezoid rule in `τ`.
    pub fn push(&mut self, t: f64, lambda: f64) {
        let (&t0, &s0, &l0) = (self.t.last().unwrap(), self.s.last().unwrap(), self.lambda.last().unwrap());
        let ds = 0.5 * (t - t0) * (l0.powi(-2) + lambda.powi(-2));
        self.t.push(t);
        self.s.push(s0 + ds);
        self.lambda.push(lambda);
    }

    pub fn s_of_t(&self, t: f64) -> f64 {
        interp(&self.t, &self.s, t)
    }

    pub fn t_of_s(&self, s: f64) -> f64 {
        interp(&self.s, &self.t, s)
    }
}

/// Piecewise-linear interpolation on increasing `xs`, clamped at the ends.
fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= *xs.last().unwrap() {
        return *ys.last().unwrap();
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let f = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + f * (ys[i + 1] - ys[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(e0: f64) -> LawConstants {
        // 1-D, p = 2 reference values
        LawConstants::from_parts(1.5, 1.084918381272, 0.9237, e0).unwrap()
    }

    #[test]
    fn app_laws_solve_their_odes() {
        let l = law(0.0);
        let (_, b) = l.lambda_b_app(10.0).unwrap();
        assert!((b - 2.0 / 15.0).abs() < 1e-15);
        for s in [10.0, 100.0, 1000.0] {
            let h = 1e-4 * s;
            let (lam, b) = l.lambda_b_app(s).unwrap();
            let (lp, bp) = l.lambda_b_app(s + h).unwrap();
            let (lm, bm) = l.lambda_b_app(s - h).unwrap();
            let bs = (bp - bm) / (2.0 * h);
            let ls = (lp - lm) / (2.0 * h);
            assert!((bs + b * b - l.beta * lam.powf(l.alpha)).abs() < 1e-7 * b * b);
            assert!((b + ls / lam).abs() < 1e-6 * b);
            assert!((lam.powf(0.75) * l.amp() * s - 1.0).abs() < 1e-12);
        }
        assert!(l.lambda_b_app(0.0).is_err());
    }

    #[test]
    fn f_matches_closed_form_and_vanishes_at_lambda0() {
        let l = law(0.0);
        for lam in [1e-6, 1e-4, 1e-2, 0.05] {
            let f = l.f_of_lambda(lam).unwrap();
            let e = l.f_closed_form_c0_zero(lam);
            assert!((f - e).abs() <= 1e-10 * e, "{lam}: {f} vs {e}");
        }
        assert_eq!(l.f_of_lambda(l.lambda0).unwrap(), 0.0);
        assert!(l.f_of_lambda(0.2).is_err());
    }

    #[test]
    fn f_is_monotone_and_invertible() {
        let l = law(-0.3);
        let mut prev = -1.0;
        for i in 0..40 {
            let lam = l.lambda0 * 10f64.powf(-0.15 * i as f64);
            let f = l.f_of_lambda(lam).unwrap();
            assert!(f > prev || i == 0);
            prev = f;
        }
        let lam = l.invert_f(200.0).unwrap();
        assert!((l.f_of_lambda(lam).unwrap() / 200.0 - 1.0).abs() < 1e-11);
    }

    #[test]
    fn lambda0_keeps_radicand_positive() {
        let l = law(-5.0);
        let rad = l.a() + l.c0 * l.lambda0.powf(2.0 - l.alpha);
        assert!(rad >= 0.5 * l.a() - 1e-12);
    }

    #[test]
    fn exponent_identities() {
        for i in 0..20 {
            let n = 1 + i % 4;
            let p = 1.0 + (4.0 / n as f64) * (0.05 + 0.045 * i as f64);
            let alpha = 2.0 - n as f64 * (p - 1.0) / 2.0;
            let l = LawConstants::from_parts(alpha, 1.0, 1.0, 0.0).unwrap();
            let np = n as f64 * (p - 1.0);
            assert!((l.lambda_exponent() - 4.0 / (4.0 + np)).abs() < 1e-14);
            assert!((l.b_exponent() - (4.0 - np) / (4.0 + np)).abs() < 1e-14);
        }
        let l = law(0.0);
        assert!((l.lambda_exponent() - 0.8).abs() < 1e-15);
        assert!((l.b_exponent() - 0.6).abs() < 1e-15);
        let t1 = -1e-3;
        let s1 = l.s1_of_t1(t1).unwrap();
        assert!((s1 - (t1.abs() / l.c).powf(-0.6)).abs() < 1e-12 * s1);
        assert!((l.t_of_s_app(s1) - t1).abs() < 1e-15);
    }

    #[test]
    fn conversion_constants_are_consistent() {
        let l = law(0.0);
        let t = -1e-4;
        let s = l.s1_of_t1(t).unwrap();
        let (lam, b) = l.lambda_b_app(s).unwrap();
        let (rl, rb) = l.rates(t);
        assert!((lam / rl - 1.0).abs() < 1e-12);
        assert!((b / rb - 1.0).abs() < 1e-12);
    }

    #[test]
    fn time_map_roundtrip() {
        let mut m = TimeMap::new(-1.0, 10.0, 0.5);
        for i in 1..50 {
            let t = -1.0 + 0.01 * i as f64;
            m.push(t, 0.5 - 0.005 * i as f64);
        }
        for &t in &m.t.clone() {
            assert!((m.t_of_s(m.s_of_t(t)) - t).abs() < 1e-12);
        }
    }

    #[test]
    fn cumulative_integral_is_exact_for_cubics() {
        let xs: Vec<f64> = (0..12).map(|i| 0.1 * i as f64 + 0.02 * (i * i) as f64).collect();
        let fs: Vec<f64> = xs.iter().map(|x| 1.0 - x + 2.0 * x * x * x).collect();
        let c = cumulative_integral(&xs, &fs);
        for (x, v) in xs.iter().zip(&c) {
            let e = x - x * x / 2.0 + x.powi(4) / 2.0;
            assert!((v - e).abs() < 1e-12, "{x}: {v} vs {e}");
        }
    }

    #[test]
    fn root_finder_and_quadrature() {
        let r = bracketed_root(|x| Ok(x * x * x - 2.0), 0.0, 3.0, 1e-14).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-13);
        let q = adaptive_gauss(&|x: f64| x.exp(), 0.0, 5.0, 1e-14);
        assert!((q - (5f64.exp() - 1.0)).abs() < 1e-11);
    }
}
