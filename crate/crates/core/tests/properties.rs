use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use proptest::prelude::*;

use mmblow::evolution::{graded_grid, MeshOptions};
use mmblow::lab::fit::{rate_fit, rate_fit_shifted};
use mmblow::lab::suites;
use mmblow::law::{LawConstants, TimeMap};
use mmblow::modulation::{self, DiagnosticsConfig, ModulationTrack, ParamState, TrackRow};
use mmblow::profile::{self, ProfileExpansion};
use mmblow::radial::{self, RadialFunction};

fn setup() -> &'static (ProfileExpansion, LawConstants) {
    static CELL: OnceLock<(ProfileExpansion, LawConstants)> = OnceLock::new();
    CELL.get_or_init(|| {
        let gs = suites::ground_state(1, &[2.0], false).unwrap();
        let exp = profile::build_expansion(gs, 2.0, profile::DEFAULT_K).unwrap();
        let law = LawConstants::new(&exp, 0.0).unwrap();
        (exp, law)
    })
}

fn field(params: &ParamState) -> RadialFunction {
    let (exp, _) = setup();
    let grid = graded_grid(1, params.lambda, 8.0, &MeshOptions::default()).unwrap();
    modulation::recompose(exp, params, None, &grid).unwrap()
}

fn wrap(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

fn params(lambda: f64, b_frac: f64, gamma: f64) -> ParamState {
    // b on the law's curve, perturbed by ±20%
    let (_, law) = setup();
    let b = lambda.powf(0.5 * law.alpha) * b_frac;
    ParamState { lambda, b, gamma, s: 100.0, t: -1e-3 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Decomposing an exact profile returns its parameters and ε ≈ 0.
    #[test]
    fn decomposition_is_idempotent(lambda in 5e-3f64..5e-2, b_frac in 0.8f64..1.2, gamma in -3.0f64..3.0) {
        let (exp, _) = setup();
        let p = params(lambda, b_frac, gamma);
        let u = field(&p);
        let guess = ParamState { lambda: 1.03 * lambda, b: 0.97 * p.b, gamma: gamma + 0.05, ..p };
        let d = modulation::decompose(&u, exp, &guess).unwrap();
        prop_assert!((d.params.lambda / lambda - 1.0).abs() < 1e-7, "λ {} vs {}", d.params.lambda, lambda);
        prop_assert!((d.params.b / p.b - 1.0).abs() < 1e-6, "b {} vs {}", d.params.b, p.b);
        prop_assert!(wrap(d.params.gamma - gamma).abs() < 1e-7);
        prop_assert!(d.eps.sup_norm() < 1e-6);
        prop_assert!(d.ortho_max() < 1e-9);
    }

    /// A constant phase only moves γ.
    #[test]
    fn gauge_covariance(lambda in 5e-3f64..5e-2, theta in -3.0f64..3.0) {
        let (exp, _) = setup();
        let p = params(lambda, 1.0, 0.0);
        let u = field(&p);
        let rotated = u.scale(Complex64::from_polar(1.0, theta));
        let a = modulation::decompose(&u, exp, &p).unwrap();
        let b = modulation::decompose(&rotated, exp, &ParamState { gamma: theta, ..p }).unwrap();
        prop_assert!(wrap(b.params.gamma - a.params.gamma - theta).abs() < 1e-8);
        prop_assert!((b.params.lambda / a.params.lambda - 1.0).abs() < 1e-9);
        prop_assert!((b.params.b - a.params.b).abs() < 1e-9 * a.params.b.abs().max(1.0));
    }

    /// `u ↦ μ^{-N/2} u(·/μ)` preserves the mass and the gradient scales by
    /// `μ^{-2}`; the decomposition follows λ ↦ μλ up to the profile's own
    /// `O(λ^α)` dependence on λ.
    #[test]
    fn scaling_covariance(lambda in 1e-2f64..3e-2, mu in 0.5f64..2.0) {
        let (exp, law) = setup();
        let p = params(lambda, 1.0, 0.4);
        let u = field(&p);
        let scaled_grid = graded_grid(1, mu * lambda, 8.0 * mu, &MeshOptions::default()).unwrap();
        let scaled = RadialFunction::from_complex_fn(scaled_grid, |r| u.at(r / mu) * mu.powf(-0.5), u.decay());
        prop_assert!((radial::mass(&scaled) / radial::mass(&u) - 1.0).abs() < 1e-9);
        prop_assert!((radial::grad_sq(&scaled) * mu * mu / radial::grad_sq(&u) - 1.0).abs() < 1e-7);
        let d = modulation::decompose(&scaled, exp, &ParamState { lambda: mu * lambda, ..p }).unwrap();
        let band = lambda.max(mu * lambda).powf(law.alpha);
        prop_assert!((d.params.lambda / (mu * lambda) - 1.0).abs() < band, "{} vs {}", d.params.lambda, mu * lambda);
        prop_assert!((d.params.b / p.b - 1.0).abs() < 10.0 * band);
        prop_assert!(d.ortho_max() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rate_fit_recovers_power_laws(kappa in 0.2f64..1.5, c in 0.1f64..10.0, n in 20usize..80, decades in 1.0f64..4.0) {
        let series: Vec<(f64, f64)> = (0..n)
            .map(|i| -10f64.powf(-1.0 - decades * i as f64 / (n - 1) as f64))
            .map(|t| (t, c * t.abs().powf(kappa)))
            .collect();
        let f = rate_fit(&series).unwrap();
        prop_assert!((f.exponent - kappa).abs() < 1e-10);
        prop_assert!((f.constant / c - 1.0).abs() < 1e-9);
        prop_assert!(f.r2 > 1.0 - 1e-10);
    }

    #[test]
    fn shifted_fit_finds_blowup_time(kappa in 0.3f64..1.2, shift in 1e-4f64..1e-2) {
        let series: Vec<(f64, f64)> = (0..50)
            .map(|i| -10f64.powf(-2.5 + 2.0 * i as f64 / 49.0))
            .map(|t| (t, 2.0 * (shift - t).powf(kappa)))
            .collect();
        let f = rate_fit_shifted(&series, 10.0).unwrap();
        prop_assert!((f.exponent - kappa).abs() < 1e-5, "{} vs {kappa}", f.exponent);
        prop_assert!((f.t_star / shift - 1.0).abs() < 1e-3);
    }

    #[test]
    fn law_inverts(lambda in 1e-6f64..0.09) {
        let (_, law) = setup();
        let s = law.f_of_lambda(lambda).unwrap();
        let back = law.invert_f(s).unwrap();
        prop_assert!((back / lambda - 1.0).abs() < 1e-8, "{back} vs {lambda}");
    }

    #[test]
    fn time_map_round_trips(steps in 5usize..60, frac in 0.0f64..1.0) {
        let (_, law) = setup();
        let s1 = 60.0;
        let (l1, _) = law.lambda_b_app(s1).unwrap();
        let t1 = law.t_of_s_app(s1);
        let mut map = TimeMap::new(t1, s1, l1);
        for i in 1..=steps {
            let t = t1 * (1.0 - 0.5 * i as f64 / steps as f64);
            let s = law.s1_of_t1(t).unwrap();
            map.push(t, law.lambda_b_app(s).unwrap().0);
        }
        let s_mid = s1 + frac * (map.s.last().unwrap() - s1);
        prop_assert!((map.s_of_t(map.t_of_s(s_mid)) - s_mid).abs() < 1e-9 * s_mid);
    }
}

fn synthetic_track(law: &LawConstants, n: usize) -> ModulationTrack {
    let rows = (0..n)
        .map(|i| {
            let s = 50.0 + i as f64;
            let (lambda, b) = law.lambda_b_app(s).unwrap();
            TrackRow {
                t: law.t_of_s_app(s),
                s,
                lambda,
                b,
                gamma: 0.0,
                eps_h1: 0.1 * s.powi(-4),
                eps_weighted: 0.0,
                mod1: 0.0,
                mod2: 0.0,
                mod3: 0.0,
                h: 0.0,
                s_fn: 0.0,
                boot1: f64::NAN,
                boot2: f64::NAN,
                eps_q: 0.0,
                ortho_max: 0.0,
            }
        })
        .collect();
    ModulationTrack { rows }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// A clean law track has no violations; corrupting one row flags exactly it.
    #[test]
    fn bootstrap_flags_injected_corruption(at in 0usize..40, which in 0usize..3) {
        let (_, law) = setup();
        let cfg = DiagnosticsConfig::default();
        let mut track = synthetic_track(law, 40);
        let clean = modulation::bootstrap_monitor(&mut track, law, &cfg).unwrap();
        prop_assert_eq!(clean.violations, 0);
        let row = &mut track.rows[at];
        match which {
            0 => row.eps_h1 = 1.0,
            1 => row.lambda *= 2.0,
            _ => row.b *= 1.5,
        }
        let hit = modulation::bootstrap_monitor(&mut track, law, &cfg).unwrap();
        prop_assert_eq!(hit.first_violation, Some(at));
        prop_assert_eq!(hit.violations, 1);
    }
}

#[test]
fn reference_grid_is_shared() {
    let (exp, _) = setup();
    let u = field(&params(1e-2, 1.0, 0.0));
    let d = modulation::decompose(&u, exp, &params(1e-2, 1.0, 0.0)).unwrap();
    assert!(Arc::ptr_eq(d.eps.grid(), exp.grid()) || d.eps.grid().same(exp.grid()));
}
