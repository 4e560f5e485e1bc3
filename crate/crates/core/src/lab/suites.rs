//! The verification suites: each returns its data plus named checks.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::fit::{self, RateFitResult};
use crate::error::{Error, Result};
use crate::evolution::{self, RunConfig, RunOutput, RunStatus};
use crate::groundstate::{self, GroundStateData, GroundStateOptions, StaticsReport};
use crate::law::{self, LawConstants};
use crate::modulation::{DiagnosticsConfig, ModulationTrack};
use crate::profile::{self, ProfileExpansion};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    /// `"<="` or `">="`
    pub relation: String,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, relation: "<=".into(), pass: value <= limit }
    }

    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, relation: ">=".into(), pass: value >= limit }
    }

    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self { name: name.into(), value: ok as u8 as f64, limit: 1.0, relation: ">=".into(), pass: ok }
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

/// The constants every report carries.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportConstants {
    pub dim: usize,
    pub p: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "C_lambda")]
    pub c_lambda: f64,
    #[serde(rename = "C_b")]
    pub c_b: f64,
    pub mu: Option<f64>,
    pub m: f64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub big_m: f64,
}

impl ReportConstants {
    pub fn new(exp: &ProfileExpansion, law: &LawConstants, diag: &DiagnosticsConfig) -> Self {
        Self {
            dim: exp.dim,
            p: exp.p,
            alpha: law.alpha,
            beta: law.beta,
            c: law.c,
            c_lambda: law.c_lambda,
            c_b: law.c_b,
            mu: exp.ground_state().mu,
            m: diag.m,
            k: exp.order,
            big_m: diag.big_m,
        }
    }
}

// ---------------------------------------------------------------- statics

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StaticsSuite {
    pub dim: usize,
    pub report: StaticsReport,
    /// max `|Q - 3^{1/4} sech^{1/2}(2r)|` (dimension 1 only)
    pub closed_form_error: Option<f64>,
    pub mu: Option<f64>,
    /// `μ` on the doubled grid
    pub mu_doubled: Option<f64>,
    pub checks: Vec<Check>,
}

pub fn statics_suite(gs: &GroundStateData, mu_doubling: bool) -> Result<StaticsSuite> {
    let r = &gs.report;
    let mut checks = vec![
        Check::at_most("ode_residual", r.ode_residual, 1e-10),
        Check::at_most("lminus_q", r.lminus_q, 1e-6),
        Check::at_most("lplus_lambda_q", r.lplus_lambda_q, 1e-6),
        Check::at_most("lminus_r2q", r.lminus_r2q, 1e-6),
        Check::at_most("lplus_rho", r.lplus_rho, 1e-6),
        Check::at_most("q_rho_identity", r.q_rho_identity, 1e-6),
        Check::at_most("pohozaev", r.pohozaev, 1e-8),
        Check::holds("positive_monotone", r.positive && r.monotone),
    ];
    let closed_form_error = (gs.dim == 1).then(|| {
        gs.grid()
            .nodes()
            .iter()
            .zip(gs.q_values())
            .map(|(r, v)| (v - 3f64.powf(0.25) / (2.0 * r).cosh().sqrt()).abs())
            .fold(0.0, f64::max)
    });
    if let Some(e) = closed_form_error {
        checks.push(Check::at_most("closed_form_error", e, 1e-8));
    }
    let mut mu_doubled = None;
    if let Some(mu) = gs.mu {
        checks.push(Check::at_least("mu_positive", mu, f64::MIN_POSITIVE));
        if mu_doubling {
            let m2 = groundstate::coercivity_mu_on_grid(gs.dim, groundstate::MU_RMAX, 2 * groundstate::MU_NODES)?;
            checks.push(Check::at_most("mu_grid_doubling", (m2 / mu - 1.0).abs(), 0.02));
            mu_doubled = Some(m2);
        }
    }
    Ok(StaticsSuite { dim: gs.dim, report: r.clone(), closed_form_error, mu: gs.mu, mu_doubled, checks })
}

// ---------------------------------------------------------------- profile

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ProfileRow {
    pub lambda: f64,
    pub b: f64,
    pub psi_norm: f64,
    pub energy: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileSuite {
    pub dim: usize,
    pub p: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub beta: f64,
    pub beta_formula: f64,
    pub betas: std::collections::BTreeMap<String, f64>,
    /// Ψ norms along `b² = λ^α`
    pub rows: Vec<ProfileRow>,
    pub psi_slope: f64,
    /// `(λ, ratio)` for the energy expansion, `b = λ^{α/2}`
    pub energy_ratio: Vec<(f64, f64)>,
    pub checks: Vec<Check>,
}

/// Points `λ^α` geometrically spaced over `[lo, hi]`.
fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1).max(1) as f64)).collect()
}

/// `psi_window`: range of `λ^α` (one decade by default) sampled with `sweep` points.
pub fn profile_suite(exp: &ProfileExpansion, sweep: usize, psi_window: (f64, f64)) -> Result<ProfileSuite> {
    let gs = exp.ground_state();
    let bf = profile::beta_formula(gs, exp.p);
    let mut rows = Vec::with_capacity(sweep);
    for l in geometric(psi_window.0, psi_window.1, sweep.max(2)) {
        let lambda = l.powf(1.0 / exp.alpha);
        let b = l.sqrt();
        rows.push(ProfileRow {
            lambda,
            b,
            psi_norm: exp.residual_psi(b, lambda)?,
            energy: exp.profile_energy(lambda, b)?,
            mass: exp.profile_mass(b, lambda)?,
        });
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| ((r.b * r.b + r.lambda.powf(exp.alpha)).ln(), r.psi_norm.ln())).collect();
    let psi_slope = groundstate::linear_fit(&pts).0;
    let mut energy_ratio = Vec::new();
    for lambda in geometric(1e-3, 1e-1, 13) {
        energy_ratio.push((lambda, exp.energy_expansion_ratio(lambda, lambda.powf(0.5 * exp.alpha))?));
    }
    let (emin, emax) = energy_ratio.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &(_, r)| (a.min(r), b.max(r)));
    let k = exp.order as f64;
    let checks = vec![
        Check::at_most("beta_cross_check", (exp.beta - bf).abs() / bf, 1e-8),
        Check::at_least("psi_slope", psi_slope, 0.9 * (k + 2.0)),
        Check::at_most("energy_ratio_band", emax / emin, 3.0),
        Check::holds("terms_decay", exp.all_decaying()),
    ];
    Ok(ProfileSuite { dim: exp.dim, p: exp.p, k: exp.order, beta: exp.beta, beta_formula: bf, betas: exp.betas(), rows, psi_slope, energy_ratio, checks })
}

// ---------------------------------------------------------------- law

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LawSuite {
    pub law: LawConstants,
    /// `(λ, normalized ℱ asymptotic ratio)` over `[1e-6, 1e-2]`
    pub f_ratio: Vec<(f64, f64)>,
    /// max relative error against the `C₀ = 0` closed form (when `E₀ = 0`)
    pub closed_form_error: Option<f64>,
    pub initial: Vec<law::InitialParams>,
    /// fitted `κ` in closeness `~ s₁^{-κ}`
    pub closeness_exponent: f64,
    pub closeness_target: f64,
    pub checks: Vec<Check>,
}

pub const CLOSENESS_S1: [f64; 3] = [100.0, 400.0, 1600.0];

pub fn law_suite(exp: &ProfileExpansion, e0: f64) -> Result<LawSuite> {
    let law = LawConstants::new(exp, e0)?;
    let mut f_ratio = Vec::new();
    for lambda in geometric(1e-6, 1e-2, 17) {
        f_ratio.push((lambda, law.f_asymptotic_ratio(lambda)?));
    }
    // the bound is one-sided: the ratio must not grow towards λ → 0
    let top = f_ratio.last().unwrap().1;
    let sup = f_ratio.iter().map(|p| p.1).fold(0.0, f64::max);
    let mut checks = vec![Check::at_most("f_ratio_band", sup / top, 3.0)];

    let closed_form_error = if law.c0 == 0.0 {
        let e = geometric(1e-8, law.lambda0 * 0.999, 25)
            .into_iter()
            .map(|l| Ok((law.f_of_lambda(l)? / law.f_closed_form_c0_zero(l) - 1.0).abs()))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        checks.push(Check::at_most("f_closed_form", e, 1e-10));
        Some(e)
    } else {
        None
    };

    let initial = CLOSENESS_S1
        .iter()
        .map(|&s1| law::initial_params(s1, &law, exp))
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = initial.iter().map(|ip| (ip.s1.ln(), ip.closeness.ln())).collect();
    let closeness_exponent = -groundstate::linear_fit(&pts).0;
    let closeness_target = 0.5f64.min(4.0 / law.alpha - 2.0);
    checks.push(Check::holds("closeness_decreasing", initial.windows(2).all(|w| w[1].closeness < w[0].closeness)));
    checks.push(Check::at_most("closeness_exponent", (closeness_exponent / closeness_target - 1.0).abs(), 0.25));
    Ok(LawSuite { law, f_ratio, closed_form_error, initial, closeness_exponent, closeness_target, checks })
}

// ---------------------------------------------------------------- runs

/// Drift and decomposition checks every run must pass.
pub fn run_checks(out: &RunOutput, cfg: &RunConfig) -> Vec<Check> {
    let s = &out.summary;
    let ortho = out.track.rows.iter().map(|r| r.ortho_max).fold(0.0, f64::max);
    vec![
        Check::at_most("mass_drift_rate", s.max_mass_rate, cfg.mass_tol),
        Check::at_most("energy_drift_rate", s.max_energy_rate, cfg.energy_tol),
        Check::at_most("orthogonality", ortho, 1e-9),
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateSuite {
    pub dim: usize,
    pub p: f64,
    pub status: RunStatus,
    pub lambda_fit: RateFitResult,
    pub b_fit: RateFitResult,
    /// prefactors with the exponents pinned at their predicted values
    pub lambda_constant: f64,
    pub b_constant: f64,
    pub checks: Vec<Check>,
}

/// Backward run from `s₁` (where `λ₁` sits just below the window) until
/// `λ̃` leaves the window at the top; the result is a solution that
/// collapses through the whole window forward in time.
pub fn rate_run_config(law: &LawConstants, dim: usize, p: f64, window: (f64, f64), base: &RunConfig) -> Result<RunConfig> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo && hi <= law.lambda0) {
        return Err(Error::InvalidArgument(format!("λ window ({lo}, {hi}) must satisfy 0 < lo < hi ≤ λ₀ = {}", law.lambda0)));
    }
    let s1 = law.f_of_lambda(0.8 * lo)?;
    let t1 = law.t_of_s_app(s1);
    Ok(RunConfig {
        dim,
        p,
        e0: law.e0,
        t1,
        t_end: 1e6 * t1,
        lambda_stop: None,
        lambda_max: Some(1.1 * hi),
        s_stop: None,
        min_s1: (0.5 * s1).min(base.min_s1),
        ..base.clone()
    })
}

pub fn rate_suite(exp: &ProfileExpansion, law: &LawConstants, out: &RunOutput, window: (f64, f64)) -> Result<RateSuite> {
    let rows: Vec<_> = out.track.rows.iter().filter(|r| r.lambda >= window.0 && r.lambda <= window.1).collect();
    let sl: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.lambda)).collect();
    let sb: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.b)).collect();
    let lambda_fit = fit::rate_fit_shifted(&sl, 10.0)?;
    let b_fit = fit::rate_fit_shifted(&sb, 10.0)?;
    let (kl, kb) = (law.lambda_exponent(), law.b_exponent());
    let lambda_constant = fit::pinned_constant(&sl, lambda_fit.t_star, kl);
    let b_constant = fit::pinned_constant(&sb, b_fit.t_star, kb);
    let checks = vec![
        Check::at_most("lambda_exponent", (lambda_fit.exponent / kl - 1.0).abs(), 0.05),
        Check::at_most("b_exponent", (b_fit.exponent / kb - 1.0).abs(), 0.10),
        Check::at_most("lambda_prefactor", (lambda_constant / law.c_lambda - 1.0).abs(), 0.10),
        Check::at_most("b_prefactor", (b_constant / law.c_b - 1.0).abs(), 0.10),
        Check::at_least("lambda_r2", lambda_fit.r2, 0.99),
        Check::at_least("b_r2", b_fit.r2, 0.99),
    ];
    Ok(RateSuite { dim: exp.dim, p: exp.p, status: out.summary.status.clone(), lambda_fit, b_fit, lambda_constant, b_constant, checks })
}

pub fn run_rate_experiment(exp: &ProfileExpansion, law: &LawConstants, window: (f64, f64), base: &RunConfig) -> Result<(RunOutput, RateSuite)> {
    let cfg = rate_run_config(law, exp.dim, exp.p, window, base)?;
    let out = evolution::run(&cfg, exp, law)?;
    let mut suite = rate_suite(exp, law, &out, window)?;
    suite.checks.extend(run_checks(&out, &cfg));
    Ok((out, suite))
}

// ---------------------------------------------------------------- modulation

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModulationSuite {
    pub s_window: (f64, f64),
    pub mod_slope: f64,
    pub eps_q_slope: f64,
    pub ortho_max: f64,
    /// least-squares `c` in `H ≈ c (‖ε‖²_{H¹} + b²‖|y|ε‖²)`
    pub coercivity_c: f64,
    /// smallest `C` with `H ≥ (c/2)(…) − C s^{-2(K+2)}` on every row
    pub coercivity_big_c: f64,
    pub min_h_ratio: f64,
    pub checks: Vec<Check>,
}

fn log_slope(pts: &[(f64, f64)]) -> f64 {
    let v: Vec<(f64, f64)> = pts.iter().filter(|p| p.1 > 0.0 && p.1.is_finite()).map(|p| (p.0.ln(), p.1.ln())).collect();
    if v.len() < 3 {
        return f64::NAN;
    }
    groundstate::linear_fit(&v).0
}

/// Slopes of `|Mod|` and `|(ε,Q)|` against `s` over `s_window`, plus the
/// coercivity fit over every tracked row.
pub fn modulation_suite(track: &ModulationTrack, k: usize, s_window: (f64, f64)) -> ModulationSuite {
    let inside: Vec<_> = track
        .rows
        .iter()
        .filter(|r| r.s >= s_window.0 && r.s <= s_window.1 && r.mod1.is_finite() && r.mod2.is_finite() && r.mod3.is_finite())
        .collect();
    let mods: Vec<(f64, f64)> = inside.iter().map(|r| (r.s, (r.mod1 * r.mod1 + r.mod2 * r.mod2 + r.mod3 * r.mod3).sqrt())).collect();
    let eq: Vec<(f64, f64)> = inside.iter().map(|r| (r.s, r.eps_q.abs())).collect();
    let mod_slope = log_slope(&mods);
    let eps_q_slope = log_slope(&eq);
    let ortho_max = track.rows.iter().map(|r| r.ortho_max).fold(0.0, f64::max);

    let sampled: Vec<(f64, f64, f64)> = track.rows.iter().filter(|r| r.s > 0.0).map(|r| (r.s, r.eps_norm_sq(), r.h)).filter(|x| x.1 > 0.0).collect();
    let (num, den) = sampled.iter().fold((0.0, 0.0), |(n, d), &(_, e, h)| (n + e * h, d + e * e));
    let c = if den > 0.0 { num / den } else { f64::NAN };
    let power = 2.0 * (k as f64 + 2.0);
    let big_c = sampled.iter().map(|&(s, e, h)| (0.5 * c * e - h).max(0.0) * s.powf(power)).fold(0.0, f64::max);
    let min_h_ratio = sampled.iter().map(|&(_, e, h)| h / e).fold(f64::INFINITY, f64::min);
    let kk = k as f64 + 1.0;
    let checks = vec![
        Check::at_most("orthogonality", ortho_max, 1e-9),
        Check::at_most("mod_slope", mod_slope, -kk),
        Check::at_most("eps_q_slope", eps_q_slope, -kk),
        Check::at_least("coercivity_c", c, f64::MIN_POSITIVE),
    ];
    ModulationSuite { s_window, mod_slope, eps_q_slope, ortho_max, coercivity_c: c, coercivity_big_c: big_c, min_h_ratio, checks }
}

// ---------------------------------------------------------------- helpers

/// Ground state with `‖Q‖_{p+1}` cached for `ps` and the default grids.
pub fn ground_state(dim: usize, ps: &[f64], with_mu: bool) -> Result<Arc<GroundStateData>> {
    let opts = GroundStateOptions {
        p_list: ps.to_vec(),
        mu_grid: with_mu.then_some((groundstate::MU_RMAX, groundstate::MU_NODES)),
        ..Default::default()
    };
    Ok(Arc::new(GroundStateData::compute(dim, &opts)?))
}
