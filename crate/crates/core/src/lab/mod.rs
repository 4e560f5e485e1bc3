//! Experiment orchestration: rate fits, canned verification suites, sweeps.

pub mod fit;
pub mod output;
pub mod suites;

use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use fit::{rate_fit, rate_fit_at, rate_fit_shifted, RateFitResult};
pub use output::{output_root, OutDir};
use suites::{Check, ReportConstants};

use crate::error::{Error, Result};
use crate::evolution::{self, RunConfig};
use crate::groundstate::{self, GroundStateData, GroundStateOptions};
use crate::law::{self, LawConstants};
use crate::profile::{self, ProfileExpansion};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    VerifyStatics,
    VerifyProfile,
    VerifyLaw,
    RateFit,
    Sweep,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::VerifyStatics => "verify-statics",
            Self::VerifyProfile => "verify-profile",
            Self::VerifyLaw => "verify-law",
            Self::RateFit => "rate-fit",
            Self::Sweep => "sweep",
        }
    }
}

/// Ground-state grid.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct GroundGrid {
    pub rmax: f64,
    pub n: usize,
}

impl Default for GroundGrid {
    fn default() -> Self {
        Self { rmax: groundstate::DEFAULT_RMAX, n: groundstate::DEFAULT_NODES }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub dims: Vec<usize>,
    pub ps: Vec<f64>,
    #[serde(rename = "E0")]
    pub e0: f64,
    /// rate-fit / sweep: integrate forward from this `t₁` instead of the
    /// backward construction; verify-law: also report `(s₁, λ₁, b₁)` there
    pub t1: Option<f64>,
    #[serde(rename = "K")]
    pub k: usize,
    pub grid: GroundGrid,
    /// subdirectory of the output root (default: the kind's name)
    pub out: Option<PathBuf>,
    /// `λ̃` window of the rate fits
    pub lambda_window: (f64, f64),
    /// `λ^α` window of the Ψ-residual slope
    pub psi_window: (f64, f64),
    /// profile sweep points
    pub sweep: usize,
    /// base evolution settings (dim, p, t1 and stop rules are overwritten)
    pub run: RunConfig,
    /// verify-statics: recompute `μ` on a doubled grid
    pub mu_doubling: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::VerifyStatics,
            dims: vec![1],
            ps: vec![2.0],
            e0: 0.0,
            t1: None,
            k: profile::DEFAULT_K,
            grid: GroundGrid::default(),
            out: None,
            lambda_window: (1e-3, 1e-1),
            psi_window: (3e-3, 3e-2),
            sweep: 9,
            run: RunConfig::default(),
            mu_doubling: true,
        }
    }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Pairs `(dim, p)` with `1 < p < 1 + 4/N` and `α` above the profile floor.
    pub fn pairs(&self) -> Vec<(usize, f64)> {
        self.dims.iter().flat_map(|&d| self.ps.iter().map(move |&p| (d, p))).filter(|&(d, p)| admissible(d, p)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.dims.is_empty() || self.dims.iter().any(|&d| d == 0) {
            return bad("dims must be a non-empty list of positive dimensions".into());
        }
        if !(self.grid.rmax > 0.0 && self.grid.n >= 16) {
            return bad(format!("ground-state grid needs rmax > 0 and n ≥ 16 (got {:?})", self.grid));
        }
        if self.kind != ExperimentKind::VerifyStatics {
            if self.ps.is_empty() {
                return bad("ps must not be empty".into());
            }
            if let Some(&(d, p)) = self.dims.iter().flat_map(|&d| self.ps.iter().map(move |p| (d, *p))).collect::<Vec<_>>().iter().find(|&&(d, p)| !admissible(d, p)) {
                return bad(format!("(dim, p) = ({d}, {p}) violates 1 < p < 1 + 4/N with α ≥ {}", profile::MIN_ALPHA));
            }
            if !(1..=4).contains(&self.k) {
                return bad(format!("K must lie in 1..=4 (got {})", self.k));
            }
        }
        let (lo, hi) = self.lambda_window;
        if !(lo > 0.0 && hi > lo) {
            return bad(format!("lambda_window must satisfy 0 < lo < hi (got {:?})", self.lambda_window));
        }
        let (a, b) = self.psi_window;
        if !(a > 0.0 && b >= 10.0 * a) {
            return bad(format!("psi_window must span at least one decade (got {:?})", self.psi_window));
        }
        if self.sweep < 3 {
            return bad("sweep needs at least 3 points".into());
        }
        if let Some(t1) = self.t1 {
            if !(t1 < 0.0) {
                return bad(format!("t1 must be negative (got {t1})"));
            }
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        output_root().join(self.out.clone().unwrap_or_else(|| PathBuf::from(self.kind.name())))
    }
}

fn admissible(dim: usize, p: f64) -> bool {
    dim > 0 && p > 1.0 && p < 1.0 + 4.0 / dim as f64 && profile::alpha_of(dim, p) >= profile::MIN_ALPHA
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub pass: bool,
    /// set when the experiment aborted; outputs written so far are kept
    pub failure: Option<String>,
    pub constants: Vec<ReportConstants>,
    pub checks: Vec<Check>,
    pub data: serde_json::Value,
    pub files: Vec<String>,
}

/// Runs the experiment, writing `report.json` plus CSV and `.dat` files into
/// [`ExperimentSpec::out_dir`]. An aborted run still writes its report, with
/// `failure` set, before the error is returned.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let mut out = OutDir::create(spec.out_dir())?;
    let mut report = ExperimentReport {
        kind: spec.kind,
        pass: false,
        failure: None,
        constants: Vec::new(),
        checks: Vec::new(),
        data: serde_json::Value::Null,
        files: Vec::new(),
    };
    let res = match spec.kind {
        ExperimentKind::VerifyStatics => verify_statics(spec, &mut out, &mut report),
        ExperimentKind::VerifyProfile => verify_profile(spec, &mut out, &mut report),
        ExperimentKind::VerifyLaw => verify_law(spec, &mut out, &mut report),
        ExperimentKind::RateFit | ExperimentKind::Sweep => rate_experiments(spec, &mut out, &mut report),
    };
    report.pass = res.is_ok() && !report.checks.is_empty() && suites::all_pass(&report.checks);
    if let Err(e) = &res {
        report.failure = Some(e.to_string());
    }
    let mut files = out.files().to_vec();
    files.append(&mut report.files);
    files.push("report.json".into());
    report.files = files;
    out.json("report.json", &report)?;
    res.map(|_| report)
}

fn ground_state(spec: &ExperimentSpec, dim: usize, with_mu: bool) -> Result<Arc<GroundStateData>> {
    let opts = GroundStateOptions {
        rmax: spec.grid.rmax,
        nodes: spec.grid.n,
        p_list: spec.ps.iter().copied().filter(|&p| admissible(dim, p)).collect(),
        mu_grid: with_mu.then_some((groundstate::MU_RMAX, groundstate::MU_NODES)),
    };
    Ok(Arc::new(GroundStateData::compute(dim, &opts)?))
}

fn tag(dim: usize, p: f64) -> String {
    format!("dim{dim}_p{p}")
}

fn prefixed(prefix: &str, checks: Vec<Check>) -> impl Iterator<Item = Check> + '_ {
    checks.into_iter().map(move |mut c| {
        c.name = format!("{prefix}/{}", c.name);
        c
    })
}

fn with_law(spec: &ExperimentSpec, gs: Arc<GroundStateData>, p: f64) -> Result<(ProfileExpansion, LawConstants)> {
    let exp = profile::build_expansion(gs, p, spec.k)?;
    let law = LawConstants::new(&exp, spec.e0)?;
    Ok((exp, law))
}

fn verify_statics(spec: &ExperimentSpec, out: &mut OutDir, report: &mut ExperimentReport) -> Result<()> {
    let mut data = Vec::new();
    for &dim in &spec.dims {
        let gs = ground_state(spec, dim, true)?;
        let suite = suites::statics_suite(&gs, spec.mu_doubling)?;
        let t = format!("dim{dim}");
        out.text(&format!("q_{t}.csv"), &gs.q.to_csv())?;
        out.plot(&format!("q_{t}.dat"), ("r", "Q"), gs.q.grid().nodes().iter().copied().zip(gs.q.re()))?;
        out.plot(&format!("rho_{t}.dat"), ("r", "rho"), gs.rho.grid().nodes().iter().copied().zip(gs.rho.re()))?;
        for &p in spec.ps.iter().filter(|&&p| admissible(dim, p)) {
            let (exp, law) = with_law(spec, gs.clone(), p)?;
            report.constants.push(ReportConstants::new(&exp, &law, &spec.run.diagnostics));
        }
        report.checks.extend(prefixed(&t, suite.checks.clone()));
        data.push(suite);
    }
    report.data = serde_json::to_value(data)?;
    Ok(())
}

fn verify_profile(spec: &ExperimentSpec, out: &mut OutDir, report: &mut ExperimentReport) -> Result<()> {
    let mut data = Vec::new();
    for &dim in &spec.dims {
        let gs = ground_state(spec, dim, true)?;
        for &p in &spec.ps {
            let (exp, law) = with_law(spec, gs.clone(), p)?;
            report.constants.push(ReportConstants::new(&exp, &law, &spec.run.diagnostics));
            let suite = suites::profile_suite(&exp, spec.sweep, spec.psi_window)?;
            let t = tag(dim, p);
            out.csv(
                &format!("profile_{t}.csv"),
                &["lambda", "b", "psi_norm", "energy", "mass"],
                suite.rows.iter().map(|r| vec![r.lambda, r.b, r.psi_norm, r.energy, r.mass]),
            )?;
            out.json(&format!("betas_{t}.json"), &suite.betas)?;
            let alpha = exp.alpha;
            out.plot(&format!("psi_{t}.dat"), ("lambda^alpha", "psi_norm"), suite.rows.iter().map(|r| (r.lambda.powf(alpha), r.psi_norm)))?;
            out.plot(&format!("energy_ratio_{t}.dat"), ("lambda", "ratio"), suite.energy_ratio.iter().copied())?;
            report.checks.extend(prefixed(&t, suite.checks.clone()));
            data.push(suite);
        }
    }
    report.data = serde_json::to_value(data)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LawData {
    dim: usize,
    p: f64,
    suite: suites::LawSuite,
    at_t1: Option<law::InitialParams>,
}

fn verify_law(spec: &ExperimentSpec, out: &mut OutDir, report: &mut ExperimentReport) -> Result<()> {
    let mut data = Vec::new();
    for &dim in &spec.dims {
        let gs = ground_state(spec, dim, true)?;
        for &p in &spec.ps {
            let (exp, law) = with_law(spec, gs.clone(), p)?;
            report.constants.push(ReportConstants::new(&exp, &law, &spec.run.diagnostics));
            let suite = suites::law_suite(&exp, spec.e0)?;
            let t = tag(dim, p);
            out.plot(&format!("f_ratio_{t}.dat"), ("lambda", "ratio"), suite.f_ratio.iter().copied())?;
            out.csv(
                &format!("initial_{t}.csv"),
                &["s1", "lambda1", "b1", "closeness"],
                suite.initial.iter().map(|ip| vec![ip.s1, ip.lambda1, ip.b1, ip.closeness]),
            )?;
            let at_t1 = match spec.t1 {
                Some(t1) => Some(law::initial_params(law.s1_of_t1(t1)?, &law, &exp)?),
                None => None,
            };
            report.checks.extend(prefixed(&t, suite.checks.clone()));
            data.push(LawData { dim, p, suite, at_t1 });
        }
    }
    report.data = serde_json::to_value(data)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RateData {
    dim: usize,
    p: f64,
    predicted_lambda_exponent: f64,
    predicted_b_exponent: f64,
    suite: suites::RateSuite,
    steps: usize,
}

fn rate_config(spec: &ExperimentSpec, law: &LawConstants, dim: usize, p: f64) -> Result<RunConfig> {
    match spec.t1 {
        Some(t1) => Ok(RunConfig {
            dim,
            p,
            e0: spec.e0,
            k: spec.k,
            t1,
            t_end: 0.0,
            lambda_stop: Some(0.9 * spec.lambda_window.0),
            lambda_max: None,
            s_stop: None,
            ..spec.run.clone()
        }),
        None => suites::rate_run_config(law, dim, p, spec.lambda_window, &RunConfig { k: spec.k, ..spec.run.clone() }),
    }
}

fn one_rate(spec: &ExperimentSpec, gs: Arc<GroundStateData>, dim: usize, p: f64, mut out: OutDir) -> Result<(ReportConstants, RateData, Vec<String>)> {
    let (exp, law) = with_law(spec, gs, p)?;
    let cfg = rate_config(spec, &law, dim, p)?;
    let run = evolution::run(&cfg, &exp, &law)?;
    out.json("run.json", &cfg)?;
    out.text("track.csv", &run.track.to_csv())?;
    out.text("ledger.csv", &run.ledger_csv())?;
    for (i, (_, f)) in run.snapshots.iter().enumerate() {
        out.text(&format!("snapshot_{i:03}.csv"), &f.to_csv())?;
        out.json(&format!("snapshot_{i:03}.grid.json"), &f.grid().spec())?;
    }
    out.csv("snapshots.csv", &["index", "t"], run.snapshots.iter().enumerate().map(|(i, (t, _))| vec![i as f64, *t]))?;
    out.plot("lambda.dat", ("t", "lambda"), run.track.rows.iter().map(|r| (r.t, r.lambda)))?;
    out.plot("b.dat", ("t", "b"), run.track.rows.iter().map(|r| (r.t, r.b)))?;
    let mut suite = suites::rate_suite(&exp, &law, &run, spec.lambda_window)?;
    suite.checks.extend(suites::run_checks(&run, &cfg));
    let data = RateData {
        dim,
        p,
        predicted_lambda_exponent: law.lambda_exponent(),
        predicted_b_exponent: law.b_exponent(),
        suite,
        steps: run.summary.steps,
    };
    let files = out.files().iter().map(|f| format!("{}/{f}", tag(dim, p))).collect();
    Ok((ReportConstants::new(&exp, &law, &cfg.diagnostics), data, files))
}

/// One rate run per admissible `(dim, p)`, fanned out over the rayon pool.
fn rate_experiments(spec: &ExperimentSpec, out: &mut OutDir, report: &mut ExperimentReport) -> Result<()> {
    let mut gs = Vec::new();
    for &dim in &spec.dims {
        gs.push((dim, ground_state(spec, dim, true)?));
    }
    let jobs: Vec<(usize, f64, Arc<GroundStateData>, OutDir)> = spec
        .pairs()
        .into_iter()
        .map(|(d, p)| {
            let g = gs.iter().find(|x| x.0 == d).map(|x| x.1.clone()).expect("ground state per dim");
            out.sub(&tag(d, p)).map(|o| (d, p, g, o))
        })
        .collect::<Result<_>>()?;
    let results: Vec<Result<(ReportConstants, RateData, Vec<String>)>> =
        jobs.into_par_iter().map(|(d, p, g, o)| one_rate(spec, g, d, p, o)).collect();

    let mut rows = Vec::new();
    let mut first_err = None;
    for r in results {
        match r {
            Ok((c, data, files)) => {
                report.constants.push(c);
                report.checks.extend(prefixed(&tag(data.dim, data.p), data.suite.checks.clone()));
                report.files.extend(files);
                rows.push(data);
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    out.csv(
        "rates.csv",
        &["dim", "p", "lambda_exponent", "lambda_predicted", "b_exponent", "b_predicted", "lambda_constant", "b_constant"],
        rows.iter().map(|r| {
            vec![
                r.dim as f64,
                r.p,
                r.suite.lambda_fit.exponent,
                r.predicted_lambda_exponent,
                r.suite.b_fit.exponent,
                r.predicted_b_exponent,
                r.suite.lambda_constant,
                r.suite.b_constant,
            ]
        }),
    )?;
    if spec.kind == ExperimentKind::Sweep {
        for &dim in &spec.dims {
            let mut line: Vec<(f64, f64)> = rows.iter().filter(|r| r.dim == dim).map(|r| (r.p, r.suite.lambda_fit.exponent)).collect();
            line.sort_by(|a, b| a.0.total_cmp(&b.0));
            out.plot(&format!("exponents_dim{dim}.dat"), ("p", "lambda_exponent"), line.iter().copied())?;
            // predicted exponents decrease in p; the fitted table must too
            let monotone = line.windows(2).all(|w| w[1].1 < w[0].1);
            report.checks.push(Check::holds(format!("dim{dim}/exponents_monotone"), monotone && line.len() >= 2));
        }
    }
    report.data = serde_json::to_value(&rows)?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_parses_with_defaults() {
        let s = ExperimentSpec::from_json(r#"{"kind": "sweep", "dims": [1], "ps": [1.5, 2, 2.5], "E0": 0}"#).unwrap();
        assert_eq!(s.kind, ExperimentKind::Sweep);
        assert_eq!(s.pairs().len(), 3);
        assert_eq!(s.k, profile::DEFAULT_K);
        s.validate().unwrap();
        assert!(ExperimentSpec::from_json(r#"{"kind": "bogus"}"#).is_err());
        assert!(ExperimentSpec::from_json(r#"{"kind": "sweep", "colour": 1}"#).is_err());
    }

    #[test]
    fn rejects_inadmissible_pairs() {
        let s = ExperimentSpec { kind: ExperimentKind::VerifyLaw, dims: vec![4], ps: vec![2.0], ..Default::default() };
        assert!(s.validate().is_err());
    }
}
