use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde_json::json;

use mmblow::evolution::{self, RunConfig};
use mmblow::groundstate::{self, GroundStateData, GroundStateOptions};
use mmblow::lab::output::{output_root, OutDir};
use mmblow::lab::suites::{self, Check, ReportConstants};
use mmblow::lab::{self, ExperimentSpec};
use mmblow::law::{self, LawConstants};
use mmblow::profile;
use mmblow::Error;

#[derive(Parser)]
#[command(name = "mmblow", version, about = "Minimal-mass blow-up laboratory for NLS with a subcritical perturbation")]
struct Cli {
    /// subdirectory of the output root ($MMBLOW_OUT, default ./mmblow-out)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ground state Q, generalized kernel ρ and their identities
    Groundstate {
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = groundstate::DEFAULT_RMAX)]
        rmax: f64,
        #[arg(long, default_value_t = groundstate::DEFAULT_NODES)]
        nodes: usize,
        /// exponents whose ‖Q‖_{p+1} to report
        #[arg(long, value_delimiter = ',')]
        p: Vec<f64>,
        /// also compute the coercivity constant μ
        #[arg(long)]
        mu: bool,
    },
    /// Approximate blow-up profile: β_{j,k} and a (λ, b) sweep
    Profile {
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long = "K", default_value_t = profile::DEFAULT_K)]
        k: usize,
        #[arg(long, default_value_t = 9)]
        sweep: usize,
    },
    /// Blow-up law constants and the initial parameters at t1
    Law {
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long = "E0", default_value_t = 0.0, allow_hyphen_values = true)]
        e0: f64,
        #[arg(long, default_value_t = -1e-4, allow_hyphen_values = true)]
        t1: f64,
        /// smallest admissible s₁
        #[arg(long, default_value_t = law::DEFAULT_MIN_S1)]
        min_s1: f64,
    },
    /// Evolve the modulated-profile initial datum
    Evolve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run an experiment spec (verify-statics, verify-profile, verify-law, rate-fit, sweep)
    Experiment {
        #[arg(long)]
        spec: PathBuf,
    },
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e.to_string())
    }
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn out_dir(cli_out: &Option<PathBuf>, default: &str) -> Result<OutDir, Failure> {
    let sub = cli_out.clone().unwrap_or_else(|| PathBuf::from(default));
    OutDir::create(output_root().join(sub)).map_err(Failure::from)
}

fn read_json(path: &PathBuf) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn print_checks(checks: &[Check]) {
    for c in checks {
        println!("{} {} = {:.3e} (limit {} {:.3e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.relation, c.limit);
    }
}

fn check_pair(dim: usize, p: f64) -> Result<(), Failure> {
    if dim == 0 || !(p > 1.0 && p < 1.0 + 4.0 / dim as f64) || profile::alpha_of(dim, p) < profile::MIN_ALPHA {
        return Err(config_err(format!("(dim, p) = ({dim}, {p}) needs 1 < p < 1 + 4/N and α ≥ {}", profile::MIN_ALPHA)));
    }
    Ok(())
}

fn ground_state(dim: usize, ps: &[f64], mu: bool) -> Result<Arc<GroundStateData>, Failure> {
    if dim == 0 {
        return Err(config_err("dim must be positive"));
    }
    Ok(suites::ground_state(dim, ps, mu)?)
}

fn groundstate_cmd(cli_out: &Option<PathBuf>, dim: usize, rmax: f64, nodes: usize, p: Vec<f64>, mu: bool) -> Result<bool, Failure> {
    if dim == 0 || !(rmax > 0.0) || nodes < 16 {
        return Err(config_err("need dim ≥ 1, rmax > 0, nodes ≥ 16"));
    }
    let opts = GroundStateOptions { rmax, nodes, p_list: p, mu_grid: mu.then_some((groundstate::MU_RMAX, groundstate::MU_NODES)) };
    let gs = GroundStateData::compute(dim, &opts)?;
    let suite = suites::statics_suite(&gs, false)?;
    let mut out = out_dir(cli_out, "groundstate")?;
    out.text("q.csv", &gs.q.to_csv())?;
    out.text("rho.csv", &gs.rho.to_csv())?;
    out.json(
        "groundstate.json",
        &json!({
            "grid": gs.q.grid().spec(),
            "norms": gs.norms,
            "mu": gs.mu,
            "report": gs.report,
            "closed_form_error": suite.closed_form_error,
            "checks": suite.checks,
        }),
    )?;
    print_checks(&suite.checks);
    Ok(suites::all_pass(&suite.checks))
}

fn profile_cmd(cli_out: &Option<PathBuf>, dim: usize, p: f64, k: usize, sweep: usize) -> Result<bool, Failure> {
    check_pair(dim, p)?;
    if !(1..=4).contains(&k) || sweep < 3 {
        return Err(config_err("need 1 ≤ K ≤ 4 and sweep ≥ 3"));
    }
    let gs = ground_state(dim, &[p], true)?;
    let exp = profile::build_expansion(gs, p, k)?;
    let law = LawConstants::new(&exp, 0.0)?;
    let suite = suites::profile_suite(&exp, sweep, ExperimentSpec::default().psi_window)?;
    let mut out = out_dir(cli_out, "profile")?;
    out.csv("profile.csv", &["lambda", "b", "psi_norm", "energy", "mass"], suite.rows.iter().map(|r| vec![r.lambda, r.b, r.psi_norm, r.energy, r.mass]))?;
    out.json("betas.json", &suite.betas)?;
    out.json(
        "profile.json",
        &json!({ "constants": ReportConstants::new(&exp, &law, &Default::default()), "psi_slope": suite.psi_slope, "checks": suite.checks }),
    )?;
    print_checks(&suite.checks);
    Ok(suites::all_pass(&suite.checks))
}

fn law_cmd(cli_out: &Option<PathBuf>, dim: usize, p: f64, e0: f64, t1: f64, min_s1: f64) -> Result<bool, Failure> {
    check_pair(dim, p)?;
    if !(t1 < 0.0) {
        return Err(config_err(format!("t1 must be negative (got {t1})")));
    }
    let gs = ground_state(dim, &[p], true)?;
    let exp = profile::build_expansion(gs, p, profile::DEFAULT_K)?;
    let law = LawConstants::new(&exp, e0)?;
    let ip = law::initial_params_with_min(law.s1_of_t1(t1)?, &law, &exp, min_s1)?;
    let body = json!({
        "alpha": law.alpha,
        "beta": law.beta,
        "C": law.c,
        "C_lambda": law.c_lambda,
        "C_b": law.c_b,
        "s1": ip.s1,
        "lambda1": ip.lambda1,
        "b1": ip.b1,
        "mu": exp.ground_state().mu,
    });
    let mut out = out_dir(cli_out, "law")?;
    out.json("law.json", &body)?;
    println!("{}", serde_json::to_string_pretty(&body).unwrap_or_default());
    Ok(true)
}

fn evolve_cmd(cli_out: &Option<PathBuf>, config: &PathBuf) -> Result<bool, Failure> {
    let cfg: RunConfig = serde_json::from_str(&read_json(config)?).map_err(config_err)?;
    cfg.validate().map_err(config_err)?;
    check_pair(cfg.dim, cfg.p)?;
    let gs = ground_state(cfg.dim, &[cfg.p], true)?;
    let exp = profile::build_expansion(gs, cfg.p, cfg.k)?;
    let law = LawConstants::new(&exp, cfg.e0)?;
    cfg.diagnostics.validate(law.alpha).map_err(config_err)?;
    let run = evolution::run(&cfg, &exp, &law)?;
    let mut out = out_dir(cli_out, "evolve")?;
    for (i, (_, f)) in run.snapshots.iter().enumerate() {
        out.text(&format!("snapshot_{i:03}.csv"), &f.to_csv())?;
        out.json(&format!("snapshot_{i:03}.grid.json"), &f.grid().spec())?;
    }
    out.csv("snapshots.csv", &["index", "t"], run.snapshots.iter().enumerate().map(|(i, (t, _))| vec![i as f64, *t]))?;
    out.text("ledger.csv", &run.ledger_csv())?;
    out.text("track.csv", &run.track.to_csv())?;
    let checks = suites::run_checks(&run, &cfg);
    out.json(
        "summary.json",
        &json!({
            "constants": ReportConstants::new(&exp, &law, &cfg.diagnostics),
            "config": cfg,
            "summary": run.summary,
            "bootstrap_violations": run.bootstrap.as_ref().map(|b| b.violations),
            "first_violation_s": run.bootstrap.as_ref().and_then(|b| b.first_violation_s),
            "checks": checks,
        }),
    )?;
    println!("status {:?}, {} steps, final λ̃ = {:.4e}", run.summary.status, run.summary.steps, run.summary.final_lambda);
    print_checks(&checks);
    Ok(suites::all_pass(&checks))
}

fn experiment_cmd(cli_out: &Option<PathBuf>, spec: &PathBuf) -> Result<bool, Failure> {
    let mut spec = ExperimentSpec::from_json(&read_json(spec)?).map_err(config_err)?;
    if cli_out.is_some() {
        spec.out = cli_out.clone();
    }
    spec.validate().map_err(config_err)?;
    let report = lab::run_experiment(&spec)?;
    print_checks(&report.checks);
    println!("{}: {}", spec.kind.name(), if report.pass { "PASS" } else { "FAIL" });
    Ok(report.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Command::Groundstate { dim, rmax, nodes, p, mu } => groundstate_cmd(&cli.out, *dim, *rmax, *nodes, p.clone(), *mu),
        Command::Profile { dim, p, k, sweep } => profile_cmd(&cli.out, *dim, *p, *k, *sweep),
        Command::Law { dim, p, e0, t1, min_s1 } => law_cmd(&cli.out, *dim, *p, *e0, *t1, *min_s1),
        Command::Evolve { config } => evolve_cmd(&cli.out, config),
        Command::Experiment { spec } => experiment_cmd(&cli.out, spec),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(2)
        }
    }
}
