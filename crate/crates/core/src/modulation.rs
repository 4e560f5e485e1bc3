//! Modulation decomposition `u = λ^{-N/2}(P+ε)(x/λ) e^{-ib|x|²/4λ² + iγ}`,
//! modulation defects and the diagnostic energies.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::law::LawConstants;
use crate::profile::{power_nl, power_potential, ProfileExpansion};
use crate::radial::{self, inner_slices, Decay, RadialFunction};

const NEWTON_MAX: usize = 40;
/// `‖ε‖_{H¹}` beyond which the decomposition is considered to have left the tube
pub const TUBE_RADIUS: f64 = 0.5;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ParamState {
    pub lambda: f64,
    pub b: f64,
    pub gamma: f64,
    pub s: f64,
    pub t: f64,
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub params: ParamState,
    /// `ε` on the profile's reference grid
    pub eps: RadialFunction,
    /// `((ε, iΛP), (ε, |y|²P), (ε, iρ))`
    pub ortho: [f64; 3],
    pub iterations: usize,
}

impl Decomposition {
    pub fn ortho_max(&self) -> f64 {
        self.ortho.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// `(v, ∂_λ v)` with `v(y) = λ^{N/2} u(λy) e^{i(b|y|²/4 - γ)}` on the reference nodes.
fn pullback(u: &RadialFunction, du: &[Complex64], ys: &[f64], dim: usize, lambda: f64, b: f64, gamma: f64) -> (Vec<Complex64>, Vec<Complex64>) {
    let grid = u.grid();
    let amp = lambda.powf(0.5 * dim as f64);
    let rs: Vec<f64> = ys.iter().map(|y| lambda * y).collect();
    let uv = grid.interpolate_many(u.values(), &rs);
    let dv = grid.interpolate_many(du, &rs);
    let half_n = 0.5 * dim as f64;
    let mut v = Vec::with_capacity(ys.len());
    let mut vl = Vec::with_capacity(ys.len());
    for i in 0..ys.len() {
        let ph = Complex64::from_polar(amp, b * ys[i] * ys[i] / 4.0 - gamma);
        let vi = uv[i] * ph;
        v.push(vi);
        vl.push((vi * half_n + dv[i] * rs[i] * ph) / lambda);
    }
    (v, vl)
}

fn lambda_values(grid: &radial::RadialGrid, f: &[Complex64]) -> Vec<Complex64> {
    let half_n = 0.5 * grid.dim() as f64;
    let d = grid.derivative(f);
    f.iter().zip(&d).zip(grid.nodes()).map(|((v, dv), r)| v * half_n + dv * *r).collect()
}

/// Newton solve of the three orthogonality conditions starting from `guess`.
pub fn decompose(u: &RadialFunction, exp: &ProfileExpansion, guess: &ParamState) -> Result<Decomposition> {
    let rgrid = exp.grid().clone();
    if u.grid().dim() != rgrid.dim() {
        return Err(Error::GridMismatch("field and profile dimensions differ".into()));
    }
    let dim = rgrid.dim();
    let ys = rgrid.nodes();
    let w = rgrid.weights();
    let y2: Vec<f64> = ys.iter().map(|y| y * y).collect();
    let i = Complex64::i();
    let rho: Vec<Complex64> = exp.ground_state().rho.values().iter().map(|v| v * i).collect();
    let du = u.grid().derivative(u.values());

    let (mut lambda, mut b, mut gamma) = (guess.lambda, guess.b, guess.gamma);
    let mut last = None;
    for it in 0..NEWTON_MAX {
        if !(lambda > 0.0) || !lambda.is_finite() || !b.is_finite() {
            break;
        }
        let (v, v_l) = pullback(u, &du, ys, dim, lambda, b, gamma);
        let p = exp.p_values(b, lambda);
        let (p_b, p_l) = exp.p_param_derivatives(b, lambda);
        let eps: Vec<Complex64> = v.iter().zip(&p).map(|(a, c)| a - c).collect();
        let phi1: Vec<Complex64> = lambda_values(&rgrid, &p).into_iter().map(|x| x * i).collect();
        let phi2: Vec<Complex64> = p.iter().zip(&y2).map(|(x, r)| x * r).collect();
        let res = Vector3::new(
            inner_slices(w, &eps, &phi1),
            inner_slices(w, &eps, &phi2),
            inner_slices(w, &eps, &rho),
        );
        // ∂ε along (λ, b, γ)
        let e_l: Vec<Complex64> = v_l.iter().zip(&p_l).map(|(a, c)| a - c).collect();
        let e_b: Vec<Complex64> = v.iter().zip(&y2).zip(&p_b).map(|((a, r), c)| a * i * (r / 4.0) - c).collect();
        let e_g: Vec<Complex64> = v.iter().map(|a| -a * i).collect();
        let dphi1 = |dp: &[Complex64]| -> Vec<Complex64> { lambda_values(&rgrid, dp).into_iter().map(|x| x * i).collect() };
        let dphi2 = |dp: &[Complex64]| -> Vec<Complex64> { dp.iter().zip(&y2).map(|(x, r)| x * r).collect() };
        let (d1l, d1b) = (dphi1(&p_l), dphi1(&p_b));
        let (d2l, d2b) = (dphi2(&p_l), dphi2(&p_b));
        let jac = Matrix3::new(
            inner_slices(w, &e_l, &phi1) + inner_slices(w, &eps, &d1l),
            inner_slices(w, &e_b, &phi1) + inner_slices(w, &eps, &d1b),
            inner_slices(w, &e_g, &phi1),
            inner_slices(w, &e_l, &phi2) + inner_slices(w, &eps, &d2l),
            inner_slices(w, &e_b, &phi2) + inner_slices(w, &eps, &d2b),
            inner_slices(w, &e_g, &phi2),
            inner_slices(w, &e_l, &rho),
            inner_slices(w, &e_b, &rho),
            inner_slices(w, &e_g, &rho),
        );
        let step = jac
            .lu()
            .solve(&res)
            .ok_or_else(|| Error::Decomposition("singular modulation Jacobian".into()))?;
        if !step.iter().all(|x| x.is_finite()) {
            return Err(Error::Decomposition("non-finite Newton step".into()));
        }
        let small = step[0].abs() <= 1e-14 * lambda && step[1].abs() <= 1e-14 * (b.abs() + lambda) && step[2].abs() <= 1e-13;
        last = Some((eps, [res[0], res[1], res[2]]));
        if small {
            // residuals belong to the current point: keep it
            let (eps, ortho) = last.take().unwrap();
            return finish(exp, eps, ortho, lambda, b, gamma, guess, it + 1);
        }
        lambda -= step[0];
        b -= step[1];
        gamma -= step[2];
        if lambda <= 0.0 || lambda > 10.0 * guess.lambda || (b - guess.b).abs() > 0.5 {
            return Err(Error::Decomposition(format!(
                "Newton left the tube (λ = {lambda:.3e}, b = {b:.3e} from guess λ = {:.3e}, b = {:.3e})",
                guess.lambda, guess.b
            )));
        }
    }
    // accept a stalled iteration if it is already at round-off level
    if let Some((eps, ortho)) = last {
        let scale = radial::inner_slices(w, &eps, &eps).sqrt().max(1e-300);
        if ortho.iter().all(|x| x.abs() <= 1e-9 * scale.max(1.0)) {
            return finish(exp, eps, ortho, lambda, b, gamma, guess, NEWTON_MAX);
        }
    }
    Err(Error::Decomposition("Newton iteration did not converge".into()))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    exp: &ProfileExpansion,
    eps: Vec<Complex64>,
    ortho: [f64; 3],
    lambda: f64,
    b: f64,
    gamma: f64,
    guess: &ParamState,
    iterations: usize,
) -> Result<Decomposition> {
    let eps = RadialFunction::from_complex(exp.grid().clone(), eps, Decay::Polynomial);
    let h1 = radial::h1_sq(&eps).sqrt();
    if h1 > TUBE_RADIUS {
        return Err(Error::Decomposition(format!("‖ε‖_H¹ = {h1:.3e} exceeds the tube radius {TUBE_RADIUS}")));
    }
    Ok(Decomposition {
        params: ParamState { lambda, b, gamma, s: guess.s, t: guess.t },
        eps,
        ortho,
        iterations,
    })
}

/// `u = λ^{-N/2}(P_{b,λ} + ε)(x/λ) e^{-ib|x|²/4λ² + iγ}` on `target`.
pub fn recompose(
    exp: &ProfileExpansion,
    params: &ParamState,
    eps: Option<&RadialFunction>,
    target: &std::sync::Arc<radial::RadialGrid>,
) -> Result<RadialFunction> {
    let mut p = exp.p_values(params.b, params.lambda);
    if let Some(e) = eps {
        if !e.grid().same(exp.grid()) {
            return Err(Error::GridMismatch("ε must live on the profile grid".into()));
        }
        for (x, y) in p.iter_mut().zip(e.values()) {
            *x += y;
        }
    }
    crate::profile::rescale_values(exp.grid(), &p, params.lambda, params.b, params.gamma, target)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct DiagnosticsConfig {
    /// exponent of `S = λ^{-m} H`
    pub m: f64,
    /// bootstrap exponent on `(λ, b)`, `0 < M < min(1/2, 4/α - 2)`
    #[serde(rename = "M")]
    pub big_m: f64,
    /// bootstrap exponent on `ε`
    #[serde(rename = "K")]
    pub k: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self { m: 10.0, big_m: 0.1, k: crate::profile::DEFAULT_K }
    }
}

impl DiagnosticsConfig {
    pub fn validate(&self, alpha: f64) -> Result<()> {
        let upper = 0.5f64.min(4.0 / alpha - 2.0);
        if !(self.big_m > 0.0 && self.big_m < upper) {
            return Err(Error::InvalidArgument(format!("M = {} outside (0, {upper})", self.big_m)));
        }
        if !(self.m > 0.0) {
            return Err(Error::InvalidArgument(format!("m = {} must be positive", self.m)));
        }
        Ok(())
    }
}

/// `F(P+ε) - F(P) - dF(P)(ε)` for `F(z) = |z|^{q+2}/(q+2)`, Taylor-expanded for tiny `ε`.
fn second_variation(p: Complex64, e: Complex64, q: f64) -> f64 {
    let (ap, ae) = (p.norm(), e.norm());
    if ae <= 1e-4 * ap {
        let pe = p.re * e.re + p.im * e.im;
        let a2 = ap * ap;
        let quad = 0.5 * ap.powf(q) * (ae * ae + q * pe * pe / a2);
        // third-order term keeps the error at O(|ε|⁴)
        let cubic = q / 2.0 * ap.powf(q - 2.0) * pe * (ae * ae + (q - 2.0) / 3.0 * pe * pe / a2);
        quad + cubic
    } else {
        let d = power_nl(p, q);
        power_potential(p + e, q) - power_potential(p, q) - (d.re * e.re + d.im * e.im)
    }
}

/// Modified energy `H(s, ε)`; `sign` is the sign of the subcritical power.
pub fn diag_h(eps: &RadialFunction, exp: &ProfileExpansion, b: f64, lambda: f64, sign: f64) -> Result<f64> {
    if !eps.grid().same(exp.grid()) {
        return Err(Error::GridMismatch("ε must live on the profile grid".into()));
    }
    let p = exp.p_values(b, lambda);
    let w = exp.grid().weights();
    let qc = 4.0 / exp.dim as f64;
    let qs = exp.p - 1.0;
    let l = lambda.powf(exp.alpha);
    let mut pot = 0.0;
    for ((pi, ei), wi) in p.iter().zip(eps.values()).zip(w) {
        pot += wi * (second_variation(*pi, *ei, qc) + sign * l * second_variation(*pi, *ei, qs));
    }
    Ok(0.5 * radial::h1_sq(eps) + b * b * radial::moment_sq(eps, 1.0) - pot)
}

pub fn diag_s(h: f64, lambda: f64, cfg: &DiagnosticsConfig) -> f64 {
    h * lambda.powf(-cfg.m)
}

/// One decomposed snapshot.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrackRow {
    pub t: f64,
    pub s: f64,
    pub lambda: f64,
    pub b: f64,
    pub gamma: f64,
    pub eps_h1: f64,
    pub eps_weighted: f64,
    pub mod1: f64,
    pub mod2: f64,
    pub mod3: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "S")]
    pub s_fn: f64,
    /// `(‖ε‖²_{H¹} + b²‖|y|ε‖²) / s^{-2K}`
    pub boot1: f64,
    /// `(|λ^{α/2}/λ_app^{α/2} - 1| + |b/b_app - 1|) / s^{-M}`
    pub boot2: f64,
    /// `(ε, Q)₂`
    pub eps_q: f64,
    pub ortho_max: f64,
}

impl TrackRow {
    /// `‖ε‖²_{H¹} + b²‖|y|ε‖²`
    pub fn eps_norm_sq(&self) -> f64 {
        self.eps_h1 * self.eps_h1 + self.b * self.b * self.eps_weighted * self.eps_weighted
    }
}

/// Snapshot row before the `s`-derivatives are known.
pub fn snapshot_row(dec: &Decomposition, exp: &ProfileExpansion, sign: f64, cfg: &DiagnosticsConfig) -> Result<TrackRow> {
    let ParamState { lambda, b, gamma, s, t } = dec.params;
    let h = diag_h(&dec.eps, exp, b, lambda, sign)?;
    let q = &exp.ground_state().q;
    Ok(TrackRow {
        t,
        s,
        lambda,
        b,
        gamma,
        eps_h1: radial::h1_sq(&dec.eps).sqrt(),
        eps_weighted: radial::moment_sq(&dec.eps, 1.0).sqrt(),
        mod1: f64::NAN,
        mod2: f64::NAN,
        mod3: f64::NAN,
        h,
        s_fn: diag_s(h, lambda, cfg),
        boot1: f64::NAN,
        boot2: f64::NAN,
        eps_q: radial::inner(&dec.eps, q)?,
        ortho_max: dec.ortho_max(),
    })
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ModulationTrack {
    pub rows: Vec<TrackRow>,
}

/// Fornberg weights for the first derivative at `x0` from nodes `xs`.
pub fn fd_weights(xs: &[f64], x0: f64) -> Vec<f64> {
    let n = xs.len();
    let mut c = vec![[0.0f64; 2]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(1);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] *= c4 / c3;
        }
        c1 = c2;
    }
    c.iter().map(|w| w[1]).collect()
}

/// Five-point derivative of `f` with respect to `x` at every sample.
pub fn derivative_5pt(x: &[f64], f: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(2).min(n.saturating_sub(5));
            let hi = (lo + 5).min(n);
            let w = fd_weights(&x[lo..hi], x[i]);
            w.iter().zip(&f[lo..hi]).map(|(a, b)| a * b).sum()
        })
        .collect()
}

impl ModulationTrack {
    /// Fills `mod1..3` by five-point differences in `s`.
    pub fn track_mod(&mut self, exp: &ProfileExpansion) {
        let n = self.rows.len();
        if n < 3 {
            return;
        }
        let s: Vec<f64> = self.rows.iter().map(|r| r.s).collect();
        let col = |f: fn(&TrackRow) -> f64| -> Vec<f64> { self.rows.iter().map(f).collect() };
        let ls = derivative_5pt(&s, &col(|r| r.lambda.ln()));
        let bs = derivative_5pt(&s, &col(|r| r.b));
        let gs = derivative_5pt(&s, &col(|r| r.gamma));
        for (i, r) in self.rows.iter_mut().enumerate() {
            r.mod1 = ls[i] + r.b;
            r.mod2 = bs[i] + r.b * r.b - exp.theta(r.b, r.lambda);
            r.mod3 = 1.0 - gs[i];
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,s,lambda,b,gamma,eps_H1,eps_weighted,mod1,mod2,mod3,H,S,boot1,boot2\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}",
                r.t, r.s, r.lambda, r.b, r.gamma, r.eps_h1, r.eps_weighted, r.mod1, r.mod2, r.mod3, r.h, r.s_fn, r.boot1, r.boot2
            );
        }
        out
    }
}

/// `|λ^{α/2}/λ_app(s)^{α/2} - 1| + |b/b_app(s) - 1|`.
pub fn closeness(law: &LawConstants, lambda: f64, b: f64, s: f64) -> Result<f64> {
    let (la, ba) = law.lambda_b_app(s)?;
    Ok(((lambda / la).powf(0.5 * law.alpha) - 1.0).abs() + (b / ba - 1.0).abs())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BootstrapReport {
    /// per row: `[bootstrap ε, bootstrap (λ,b), re-estimate ε, re-estimate (λ,b)]`
    pub checks: Vec<[bool; 4]>,
    pub first_violation: Option<usize>,
    pub first_violation_s: Option<f64>,
    pub violations: usize,
}

/// Evaluates both bootstrap inequalities and their sharpened versions; also
/// fills `boot1`, `boot2` on the track.
pub fn bootstrap_monitor(track: &mut ModulationTrack, law: &LawConstants, cfg: &DiagnosticsConfig) -> Result<BootstrapReport> {
    let k = cfg.k as f64;
    let mut checks = Vec::with_capacity(track.rows.len());
    let mut first = None;
    let mut violations = 0;
    for (i, r) in track.rows.iter_mut().enumerate() {
        let s = r.s;
        let e = r.eps_norm_sq();
        if !(s > 0.0) {
            // outside the rescaled-time domain: nothing can hold
            r.boot1 = f64::NAN;
            r.boot2 = f64::NAN;
            violations += 1;
            first.get_or_insert(i);
            checks.push([false; 4]);
            continue;
        }
        let c = closeness(law, r.lambda, r.b, s)?;
        r.boot1 = e / s.powf(-2.0 * k);
        r.boot2 = c / s.powf(-cfg.big_m);
        let sharp_e = e < s.powf(-(2.0 * k + 2.0));
        let sharp_c = c < s.powf(-0.5) + s.powf(2.0 - 4.0 / law.alpha);
        let row = [r.boot1 < 1.0, r.boot2 < 1.0, sharp_e, sharp_c];
        if row.iter().any(|ok| !ok) {
            violations += 1;
            first.get_or_insert(i);
        }
        checks.push(row);
    }
    Ok(BootstrapReport {
        first_violation_s: first.map(|i| track.rows[i].s),
        first_violation: first,
        checks,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fornberg_weights_are_exact_for_quartics() {
        let xs = [0.0, 0.3, 0.7, 1.2, 2.0];
        let w = fd_weights(&xs, 0.7);
        let d: f64 = w.iter().zip(&xs).map(|(a, x)| a * x.powi(4)).sum();
        assert!((d - 4.0 * 0.7f64.powi(3)).abs() < 1e-12);
        let s: f64 = w.iter().sum();
        assert!(s.abs() < 1e-12);
    }

    #[test]
    fn five_point_derivative_of_smooth_series() {
        let x: Vec<f64> = (0..30).map(|i| 1.0 + 0.1 * i as f64 + 0.01 * (i as f64).sin()).collect();
        let f: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        let d = derivative_5pt(&x, &f);
        for (xi, di) in x.iter().zip(&d) {
            assert!((di - 1.0 / xi).abs() < 1e-3, "{xi}: {di}");
        }
    }

    #[test]
    fn second_variation_branches_agree() {
        let p = Complex64::new(0.8, 0.3);
        for q in [1.0, 2.0, 4.0] {
            let e = Complex64::new(3e-5, -2e-5);
            let taylor = second_variation(p, e, q);
            let d = power_nl(p, q);
            let direct = power_potential(p + e, q) - power_potential(p, q) - (d.re * e.re + d.im * e.im);
            assert!((taylor - direct).abs() < 1e-6 * taylor.abs(), "{q}: {taylor} vs {direct}");
        }
        assert_eq!(second_variation(p, Complex64::default(), 2.0), 0.0);
    }

    #[test]
    fn m_interval_is_enforced() {
        let cfg = DiagnosticsConfig::default();
        assert!(cfg.validate(1.5).is_ok());
        assert!(DiagnosticsConfig { big_m: 0.6, ..cfg }.validate(1.5).is_err());
        assert!(DiagnosticsConfig { big_m: 0.4, ..cfg }.validate(1.9).is_err());
    }
}
