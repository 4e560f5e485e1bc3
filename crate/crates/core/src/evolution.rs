//! Radial time integration of `i u_t + Δu + |u|^{4/N}u ± |u|^{p-1}u = 0`.
//!
//! Splitting: the nonlinear flow is an exact pointwise phase rotation, the
//! linear flow is Crank–Nicolson on the spectral-element grid,
//! `(W + i dt/2 K) u⁺ = (W - i dt/2 K) u`, which conserves the discrete mass
//! and kinetic energy exactly. The physical grid is graded around the origin
//! and rebuilt as the core width `λ̃` shrinks.

use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::banded::{BandLu, BandMatrix};
use crate::error::{Error, Result};
use crate::law::{self, InitialParams, LawConstants};
use crate::modulation::{self, DiagnosticsConfig, ModulationTrack, ParamState};
use crate::profile::{power_potential, ProfileExpansion};
use crate::radial::{RadialFunction, RadialGrid, DEFAULT_ORDER};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct MeshOptions {
    /// elements per core width `λ`
    pub elements_per_lambda: f64,
    /// radius, in units of `λ`, covered by the finest elements
    pub core_extent: f64,
    /// geometric growth of element size outside the core
    pub growth: f64,
    /// largest element size
    pub h_max: f64,
    pub order: usize,
}

impl Default for MeshOptions {
    fn default() -> Self {
        Self { elements_per_lambda: 8.0, core_extent: 24.0, growth: 1.08, h_max: 0.1, order: DEFAULT_ORDER }
    }
}

/// Physical grid resolving a core of width `lambda` on `[0, rmax]`.
pub fn graded_grid(dim: usize, lambda: f64, rmax: f64, opts: &MeshOptions) -> Result<Arc<RadialGrid>> {
    if !(lambda > 0.0 && rmax > lambda) {
        return Err(Error::InvalidArgument(format!("need 0 < λ < rmax (λ = {lambda}, rmax = {rmax})")));
    }
    if !(opts.elements_per_lambda >= 1.0 && opts.growth >= 1.0 && opts.h_max > 0.0 && opts.core_extent > 0.0) {
        return Err(Error::InvalidArgument(format!("bad mesh options {opts:?}")));
    }
    let h_core = lambda / opts.elements_per_lambda;
    let h_max = opts.h_max.max(h_core);
    let mut edges = vec![0.0];
    let mut e = 0.0;
    let mut h = h_core;
    while e < rmax {
        if e >= opts.core_extent * lambda {
            h = (h * opts.growth).min(h_max);
        }
        e += h;
        edges.push(e.min(rmax));
    }
    // avoid a sliver at rmax
    let k = edges.len();
    if k > 2 && edges[k - 1] - edges[k - 2] < 0.5 * h {
        edges.remove(k - 2);
    }
    *edges.last_mut().unwrap() = rmax;
    if edges.len() > 200_000 {
        return Err(Error::GridTooCoarse(format!("{} elements requested", edges.len())));
    }
    Ok(Arc::new(RadialGrid::from_edges(dim, edges, opts.order)?))
}

/// Number of grid nodes in `[0, r]`.
pub fn nodes_within(grid: &RadialGrid, r: f64) -> usize {
    grid.nodes().partition_point(|&x| x <= r)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// second-order Strang splitting
    #[default]
    Strang,
    /// fourth-order triple-jump composition of Strang steps
    Yoshida4,
    /// fourth-order five-stage composition with a smaller error constant
    Suzuki4,
}

impl Scheme {
    fn weights(self) -> Vec<f64> {
        match self {
            Scheme::Strang => vec![1.0],
            Scheme::Yoshida4 => {
                let w1 = 1.0 / (2.0 - 2f64.cbrt());
                vec![w1, 1.0 - 2.0 * w1, w1]
            }
            Scheme::Suzuki4 => {
                let w = 1.0 / (4.0 - 4f64.cbrt());
                vec![w, w, 1.0 - 4.0 * w, w, w]
            }
        }
    }

    pub fn order(self) -> u32 {
        match self {
            Scheme::Strang => 2,
            Scheme::Yoshida4 | Scheme::Suzuki4 => 4,
        }
    }
}

/// Equation data: `i u_t + Δu + |u|^{4/N}u + sign·|u|^{p-1}u = 0`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Equation {
    pub dim: usize,
    pub p: f64,
    /// `+1` for the focusing subcritical term, `-1` for the defocusing one
    pub sign: f64,
}

impl Equation {
    pub fn new(dim: usize, p: f64, sign: f64) -> Self {
        Self { dim, p, sign }
    }

    fn critical_exponent(&self) -> f64 {
        4.0 / self.dim as f64
    }

    /// `u ← u · exp(iτ(|u|^{4/N} + sign·|u|^{p-1}))`.
    pub fn rotate(&self, u: &mut [Complex64], tau: f64) {
        let qc = self.critical_exponent();
        let qs = self.p - 1.0;
        for v in u.iter_mut() {
            let a2 = v.norm_sqr();
            if a2 == 0.0 {
                continue;
            }
            let phase = tau * (pow_from_sq(a2, qc) + self.sign * pow_from_sq(a2, qs));
            *v *= Complex64::from_polar(1.0, phase);
        }
    }

    pub fn mass(&self, grid: &RadialGrid, u: &[Complex64]) -> f64 {
        u.iter().zip(grid.weights()).map(|(v, w)| w * v.norm_sqr()).sum()
    }

    pub fn grad_sq(&self, grid: &RadialGrid, u: &[Complex64]) -> f64 {
        let ku = grid.stiffness_apply(u);
        u.iter().zip(&ku).map(|(a, b)| a.re * b.re + a.im * b.im).sum()
    }

    /// `E(u) = ½‖∇u‖² - ∫F(u) - sign·∫G(u)`.
    pub fn energy(&self, grid: &RadialGrid, u: &[Complex64]) -> f64 {
        let qc = self.critical_exponent();
        let qs = self.p - 1.0;
        let pot: f64 = u
            .iter()
            .zip(grid.weights())
            .map(|(v, w)| w * (power_potential(*v, qc) + self.sign * power_potential(*v, qs)))
            .sum();
        0.5 * self.grad_sq(grid, u) - pot
    }
}

/// Split-step propagator with a fixed physical step on a fixed grid.
pub struct Integrator {
    grid: Arc<RadialGrid>,
    eq: Equation,
    scheme: Scheme,
    dt: f64,
    linear: Vec<(f64, BandLu<Complex64>)>,
}

impl Integrator {
    pub fn new(grid: Arc<RadialGrid>, eq: Equation, scheme: Scheme, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt != 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be finite and nonzero, got {dt}")));
        }
        let mut linear: Vec<(f64, BandLu<Complex64>)> = Vec::new();
        for w in scheme.weights() {
            let h = w * dt;
            if linear.iter().any(|(x, _)| *x == h) {
                continue;
            }
            let c = Complex64::new(0.0, 0.5 * h);
            let mut a: BandMatrix<Complex64> = grid.stiffness().map(|k| c * k);
            let wd: Vec<Complex64> = grid.weights().iter().map(|&x| x.into()).collect();
            a.add_diagonal(&wd);
            linear.push((h, a.factor()?));
        }
        Ok(Self { grid, eq, scheme, dt, linear })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    fn linear_step(&self, u: &mut [Complex64], h: f64) {
        let lu = &self.linear.iter().find(|(x, _)| *x == h).expect("factored step").1;
        let ku = self.grid.stiffness_apply(u);
        let c = Complex64::new(0.0, 0.5 * h);
        for ((v, k), w) in u.iter_mut().zip(&ku).zip(self.grid.weights()) {
            *v = *v * *w - c * k;
        }
        lu.solve_in_place(u);
    }

    /// One step of size `dt`.
    pub fn step(&self, u: &mut [Complex64]) {
        for w in self.scheme.weights() {
            let h = w * self.dt;
            self.eq.rotate(u, 0.5 * h);
            self.linear_step(u, h);
            self.eq.rotate(u, 0.5 * h);
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dim: usize,
    pub p: f64,
    #[serde(rename = "E0")]
    pub e0: f64,
    pub t1: f64,
    /// stop time; `t_end < t1` integrates backwards from `t1`
    pub t_end: f64,
    /// stop once `λ̃` falls below this
    pub lambda_stop: Option<f64>,
    /// stop once `λ̃` exceeds this (expanding runs)
    pub lambda_max: Option<f64>,
    /// stop once the rescaled time crosses this value
    pub s_stop: Option<f64>,
    pub rmax: f64,
    pub mesh: MeshOptions,
    /// step in rescaled time; the physical step is `ds·λ̃²`
    pub ds: f64,
    /// optional cap on the physical step
    pub dt0: Option<f64>,
    /// regrid once fewer than this many nodes lie in `[0, λ̃]`
    pub rescale_trigger: usize,
    /// decomposition cadence in rescaled time
    pub track_every: f64,
    /// field snapshot cadence in rescaled time (`None`: first and last only)
    pub snapshot_every: Option<f64>,
    #[serde(rename = "K")]
    pub k: usize,
    pub scheme: Scheme,
    /// defocusing subcritical term
    pub nls_minus: bool,
    /// start on the expanding branch `b₁ → -b₁`
    pub flip_b: bool,
    /// rescale the initial field to mass `‖Q‖₂²`
    pub critical_mass: bool,
    pub min_s1: f64,
    pub max_steps: usize,
    /// allowed relative mass drift per unit rescaled time
    pub mass_tol: f64,
    /// allowed relative energy drift per unit rescaled time
    pub energy_tol: f64,
    pub diagnostics: DiagnosticsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            p: 2.0,
            e0: 0.0,
            t1: -0.05,
            t_end: 0.0,
            lambda_stop: Some(1e-3),
            lambda_max: None,
            s_stop: None,
            rmax: 8.0,
            mesh: MeshOptions::default(),
            ds: 0.01,
            dt0: None,
            rescale_trigger: 32,
            track_every: 0.1,
            snapshot_every: None,
            k: crate::profile::DEFAULT_K,
            scheme: Scheme::Suzuki4,
            nls_minus: false,
            flip_b: false,
            critical_mass: false,
            min_s1: law::DEFAULT_MIN_S1,
            max_steps: 2_000_000,
            mass_tol: 1e-8,
            energy_tol: 1e-6,
            diagnostics: DiagnosticsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.t1 < 0.0 && self.t1 != self.t_end && self.t_end.is_finite()) {
            return bad(format!("need t1 < 0 and a finite t_end ≠ t1 (t1 = {}, t_end = {})", self.t1, self.t_end));
        }
        if !(self.ds > 0.0 && self.track_every >= self.ds) {
            return bad(format!("need 0 < ds ≤ track_every (ds = {}, track_every = {})", self.ds, self.track_every));
        }
        if self.dim == 0 || !(self.p > 1.0 && self.p < 1.0 + 4.0 / self.dim as f64) {
            return bad(format!("need dim ≥ 1 and 1 < p < 1 + 4/N (dim = {}, p = {})", self.dim, self.p));
        }
        if !(self.rmax > 0.0) || self.rescale_trigger == 0 {
            return bad("rmax and rescale_trigger must be positive".into());
        }
        Ok(())
    }

    /// `+1` towards the blow-up time, `-1` backwards.
    pub fn direction(&self) -> f64 {
        if self.t_end > self.t1 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn sign(&self) -> f64 {
        if self.nls_minus {
            -1.0
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionState {
    pub field: RadialFunction,
    pub t: f64,
    pub dt: f64,
    pub mass0: f64,
    pub energy0: f64,
    /// `|mass - mass0| / mass0`
    pub mass_drift: f64,
    /// accumulated `|ΔE| / max(|E0|, ‖∇u‖²)` over accepted intervals
    pub energy_drift: f64,
}

/// `u(t₁) = P_{λ₁,b₁,0}` on a graded grid around `λ₁`.
pub fn make_initial(exp: &ProfileExpansion, law: &LawConstants, cfg: &RunConfig) -> Result<(EvolutionState, InitialParams)> {
    let s1 = law.s1_of_t1(cfg.t1)?;
    let ip = law::initial_params_with_min(s1, law, exp, cfg.min_s1)?;
    let b = if cfg.flip_b { -ip.b1 } else { ip.b1 };
    let grid = graded_grid(exp.dim, ip.lambda1, cfg.rmax, &cfg.mesh)?;
    let mut field = exp.rescale_profile(ip.lambda1, b, 0.0, &grid)?;
    let eq = Equation::new(exp.dim, exp.p, cfg.sign());
    if cfg.critical_mass {
        let target = exp.ground_state().norms.mass;
        let m = eq.mass(&grid, field.values());
        field = field.scale(Complex64::from((target / m).sqrt()));
    }
    let mass0 = eq.mass(&grid, field.values());
    let energy0 = eq.energy(&grid, field.values());
    Ok((
        EvolutionState { field, t: cfg.t1, dt: 0.0, mass0, energy0, mass_drift: 0.0, energy_drift: 0.0 },
        InitialParams { b1: b, ..ip },
    ))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct LedgerRow {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub grad_norm: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum RunStatus {
    /// reached `t_end`
    Completed,
    LambdaStop,
    LambdaMax,
    SStop,
    ResolutionLimit { t: f64, reason: String },
    /// decomposition failed; evolution stopped
    TubeExit { t: f64, reason: String },
    MaxSteps,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub status: RunStatus,
    pub steps: usize,
    pub regrids: usize,
    pub halvings: usize,
    pub initial: InitialParams,
    pub mass0: f64,
    pub energy0: f64,
    pub final_t: f64,
    pub final_lambda: f64,
    /// largest relative mass drift per unit `s` over accepted intervals
    pub max_mass_rate: f64,
    /// largest relative energy drift per unit `s` over accepted intervals
    pub max_energy_rate: f64,
    pub total_mass_drift: f64,
    pub total_energy_drift: f64,
    pub s_span: f64,
}

pub struct RunOutput {
    pub summary: RunSummary,
    pub ledger: Vec<LedgerRow>,
    pub track: ModulationTrack,
    /// `(t, field)` snapshots
    pub snapshots: Vec<(f64, RadialFunction)>,
    pub state: EvolutionState,
    pub bootstrap: Option<modulation::BootstrapReport>,
}

impl RunOutput {
    pub fn ledger_csv(&self) -> String {
        let mut s = String::from("t,mass,energy,grad_norm,dt\n");
        for r in &self.ledger {
            let _ = writeln!(s, "{:.17e},{:.17e},{:.17e},{:.17e},{:.6e}", r.t, r.mass, r.energy, r.grad_norm, r.dt);
        }
        s
    }
}

fn ledger_row(eq: &Equation, grid: &RadialGrid, u: &[Complex64], t: f64, dt: f64) -> LedgerRow {
    LedgerRow {
        t,
        mass: eq.mass(grid, u),
        energy: eq.energy(grid, u),
        grad_norm: eq.grad_sq(grid, u).sqrt(),
        dt,
    }
}

/// Core width implied by the gradient norm, `‖∇Q‖ / ‖∇u‖`.
fn lambda_from_gradient(exp: &ProfileExpansion, grad_norm: f64) -> f64 {
    exp.ground_state().norms.grad_sq.sqrt() / grad_norm
}

/// Evolves from the modulated-profile initial data, tracking the modulation
/// parameters at the configured cadence.
pub fn run(cfg: &RunConfig, exp: &ProfileExpansion, law: &LawConstants) -> Result<RunOutput> {
    cfg.validate()?;
    cfg.diagnostics.validate(exp.alpha)?;
    if exp.dim != cfg.dim || (exp.p - cfg.p).abs() > 1e-14 {
        return Err(Error::InvalidArgument("expansion does not match the run's (dim, p)".into()));
    }
    let eq = Equation::new(cfg.dim, cfg.p, cfg.sign());
    let (mut state, initial) = make_initial(exp, law, cfg)?;
    let mut grid = state.field.grid().clone();
    let mut u = state.field.values().to_vec();

    let mut params = ParamState { lambda: initial.lambda1, b: initial.b1, gamma: 0.0, s: initial.s1, t: cfg.t1 };
    let mut track = ModulationTrack::default();
    let mut tracking = true;
    let mut status = None;
    match modulation::decompose(&state.field, exp, &params) {
        Ok(d) => {
            params = ParamState { s: initial.s1, t: cfg.t1, ..d.params };
            track.rows.push(modulation::snapshot_row(&d, exp, eq.sign, &cfg.diagnostics)?);
        }
        Err(e) => {
            tracking = false;
            if !cfg.nls_minus {
                status = Some(RunStatus::TubeExit { t: cfg.t1, reason: e.to_string() });
            }
        }
    }
    let mut ledger = vec![ledger_row(&eq, &grid, &u, state.t, 0.0)];
    let mut snapshots = vec![(state.t, state.field.clone())];
    let dir = cfg.direction();
    let mut next_snapshot = cfg.snapshot_every.map(|d| initial.s1 + dir * d);

    let mut lambda = params.lambda;
    let mut s = initial.s1;
    let mut ds = cfg.ds;
    let mut successes = 0usize;
    let (mut steps, mut regrids, mut halvings, mut consecutive_halvings) = (0usize, 0usize, 0usize, 0usize);
    let (mut max_mass_rate, mut max_energy_rate): (f64, f64) = (0.0, 0.0);
    let mut integrator: Option<Integrator> = None;
    let s_start = s;

    while status.is_none() {
        if dir * (cfg.t_end - state.t) <= 0.0 {
            status = Some(RunStatus::Completed);
            break;
        }
        if cfg.lambda_stop.is_some_and(|l| lambda <= l) {
            status = Some(RunStatus::LambdaStop);
            break;
        }
        if cfg.lambda_max.is_some_and(|l| lambda >= l) {
            status = Some(RunStatus::LambdaMax);
            break;
        }
        if cfg.s_stop.is_some_and(|v| dir * (s - v) >= 0.0) {
            status = Some(RunStatus::SStop);
            break;
        }
        if steps >= cfg.max_steps {
            status = Some(RunStatus::MaxSteps);
            break;
        }
        let mut dt = ds * lambda * lambda;
        if let Some(cap) = cfg.dt0 {
            dt = dt.min(cap);
        }
        dt *= dir;
        let mut nsteps = (cfg.track_every / ds).round().max(1.0) as usize;
        let remaining = cfg.t_end - state.t;
        if nsteps as f64 * dt.abs() > remaining.abs() {
            nsteps = (remaining / dt).ceil().max(1.0) as usize;
            dt = remaining / nsteps as f64;
        }
        // refactor only when the step changed appreciably
        let reuse = integrator
            .as_ref()
            .is_some_and(|it| Arc::ptr_eq(it.grid(), &grid) && (it.dt() / dt - 1.0).abs() < 0.05 && it.dt().abs() <= remaining.abs());
        if !reuse {
            integrator = Some(Integrator::new(grid.clone(), eq, cfg.scheme, dt)?);
        }
        let it = integrator.as_ref().unwrap();
        let dt = it.dt();
        let nsteps = nsteps.min(((remaining / dt).floor() as usize).max(1));

        let checkpoint = u.clone();
        let before = *ledger.last().unwrap();
        for _ in 0..nsteps {
            it.step(&mut u);
        }
        let t_new = state.t + nsteps as f64 * dt;
        let row = ledger_row(&eq, &grid, &u, t_new, dt);
        let ds_interval = nsteps as f64 * dt.abs() / (lambda * lambda);
        let mass_rate = (row.mass - before.mass).abs() / state.mass0 / ds_interval;
        let e_scale = state.energy0.abs().max(row.grad_norm * row.grad_norm);
        let energy_rate = (row.energy - before.energy).abs() / e_scale / ds_interval;
        let finite = u.iter().all(|v| v.re.is_finite() && v.im.is_finite());
        if !finite || mass_rate > cfg.mass_tol || energy_rate > cfg.energy_tol {
            u = checkpoint;
            ds *= 0.5;
            halvings += 1;
            consecutive_halvings += 1;
            successes = 0;
            if consecutive_halvings > 20 {
                status = Some(RunStatus::ResolutionLimit {
                    t: state.t,
                    reason: format!("drift rates mass {mass_rate:.2e}, energy {energy_rate:.2e} after 20 halvings"),
                });
            }
            continue;
        }
        consecutive_halvings = 0;
        successes += 1;
        if successes >= 10 && ds < cfg.ds {
            ds = (2.0 * ds).min(cfg.ds);
            successes = 0;
        }
        steps += nsteps;
        max_mass_rate = max_mass_rate.max(mass_rate);
        max_energy_rate = max_energy_rate.max(energy_rate);
        state.energy_drift += (row.energy - before.energy).abs() / e_scale;
        state.mass_drift = (row.mass - state.mass0).abs() / state.mass0;
        state.t = t_new;
        state.dt = dt;
        ledger.push(row);

        // advance s with the trapezoid rule; refined after the run
        let field = RadialFunction::from_complex(grid.clone(), u.clone(), crate::radial::Decay::Polynomial);
        let mut new_lambda = lambda_from_gradient(exp, row.grad_norm);
        if tracking {
            let guess = ParamState { t: t_new, ..params };
            match modulation::decompose(&field, exp, &guess) {
                Ok(d) => {
                    new_lambda = d.params.lambda;
                    s += 0.5 * (t_new - params.t) * (params.lambda.powi(-2) + new_lambda.powi(-2));
                    params = ParamState { s, t: t_new, ..d.params };
                    track.rows.push(modulation::snapshot_row(&d, exp, eq.sign, &cfg.diagnostics)?);
                }
                Err(e) => {
                    if cfg.nls_minus {
                        tracking = false;
                    } else {
                        status = Some(RunStatus::TubeExit { t: t_new, reason: e.to_string() });
                    }
                }
            }
        }
        if !tracking {
            s += 0.5 * (t_new - params.t) * (lambda.powi(-2) + new_lambda.powi(-2));
            params = ParamState { lambda: new_lambda, s, t: t_new, ..params };
        }
        lambda = new_lambda;
        if next_snapshot.is_some_and(|n| dir * (s - n) >= 0.0) {
            snapshots.push((t_new, field.clone()));
            next_snapshot = next_snapshot.map(|n| n + dir * cfg.snapshot_every.unwrap());
        }

        // regrid when the core is under-resolved or has outgrown the fine zone
        let fine_zone = grid.edges().windows(2).take_while(|w| w[1] - w[0] <= grid.edges()[1] * 1.0001).count() as f64
            * grid.edges()[1];
        let too_coarse = nodes_within(&grid, lambda) < cfg.rescale_trigger;
        let outgrown = lambda * cfg.mesh.core_extent > 1.5 * fine_zone && lambda * cfg.mesh.core_extent < cfg.rmax;
        if too_coarse || outgrown {
            let new_grid = graded_grid(cfg.dim, lambda, cfg.rmax, &cfg.mesh)?;
            let f = field.resample(new_grid.clone())?;
            u = f.values().to_vec();
            grid = new_grid;
            regrids += 1;
            ledger.push(ledger_row(&eq, &grid, &u, state.t, 0.0));
            let last = ledger.len() - 1;
            let (a, b) = (ledger[last - 1], ledger[last]);
            let e_scale = state.energy0.abs().max(b.grad_norm * b.grad_norm);
            state.energy_drift += (b.energy - a.energy).abs() / e_scale;
            state.mass_drift = (b.mass - state.mass0).abs() / state.mass0;
        }
    }

    state.field = RadialFunction::from_complex(grid.clone(), u, crate::radial::Decay::Polynomial);
    if snapshots.last().map(|(t, _)| *t) != Some(state.t) {
        snapshots.push((state.t, state.field.clone()));
    }

    // refine s(t) with a fourth-order rule and fill the derived columns
    if track.rows.len() >= 2 {
        let ts: Vec<f64> = track.rows.iter().map(|r| r.t).collect();
        let fs: Vec<f64> = track.rows.iter().map(|r| r.lambda.powi(-2)).collect();
        let cum = law::cumulative_integral(&ts, &fs);
        for (r, c) in track.rows.iter_mut().zip(cum) {
            r.s = initial.s1 + c;
        }
        track.track_mod(exp);
    }
    let bootstrap = if track.rows.len() >= 2 { Some(modulation::bootstrap_monitor(&mut track, law, &cfg.diagnostics)?) } else { None };
    let s_end = track.rows.last().map_or(s, |r| r.s);

    let summary = RunSummary {
        status: status.unwrap_or(RunStatus::Completed),
        steps,
        regrids,
        halvings,
        initial,
        mass0: state.mass0,
        energy0: state.energy0,
        final_t: state.t,
        final_lambda: lambda,
        max_mass_rate,
        max_energy_rate,
        total_mass_drift: state.mass_drift,
        total_energy_drift: state.energy_drift,
        s_span: s_end - s_start,
    };
    Ok(RunOutput { summary, ledger, track, snapshots, state, bootstrap })
}

/// `|v|^q` from `|v|²`, skipping `powf` for integer and half-integer `q`.
#[inline]
fn pow_from_sq(a2: f64, q: f64) -> f64 {
    let h = 0.5 * q;
    if h == h.trunc() && h.abs() < 16.0 {
        a2.powi(h as i32)
    } else if q == q.trunc() && q.abs() < 32.0 {
        a2.sqrt().powi(q as i32)
    } else {
        a2.powf(h)
    }
}
