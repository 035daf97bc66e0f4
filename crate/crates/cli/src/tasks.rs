//! Subcommands as trait objects, looked up by name.

use std::fmt;

use serde_json::json;

use seplab::acceptance::{self, Context};
use seplab::fluctuations::{bump, decay_fit, DecayTemplate, TestFunction};
use seplab::kmc::{run_replicas, sample_local_gibbs, simulate, ReplicaId, Snapshots};
use seplab::moments::{
    admissible_initial_profile, evolve_correlation, stationary_profile, CorrelationField, DensitySolver,
};
use seplab::oracle::{build_generator, exact_moments};
use seplab::spectral::robin_roots;
use seplab::walks::{occupation_closed_form_value, occupation_solve, TransitionKernel};
use seplab::ModelParams;

use crate::config::{ExperimentConfig, Initial, Spectrum, UsageError};
use crate::output::{Artifact, Table};

#[derive(Debug)]
pub enum CliError {
    Usage(UsageError),
    /// Criteria that failed, as `[id] name`.
    Acceptance(Vec<String>),
    Core(seplab::Error),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Acceptance(_) => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(e) => write!(f, "config error at {e}"),
            CliError::Acceptance(names) => write!(f, "acceptance failure: {}", names.join(", ")),
            CliError::Core(seplab::Error::Size { states, cap }) => {
                write!(f, "config error at task.state_cap: state space has {states} states, cap is {cap}; lower model.N or raise the cap")
            }
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<UsageError> for CliError {
    fn from(e: UsageError) -> Self {
        CliError::Usage(e)
    }
}

impl From<seplab::Error> for CliError {
    fn from(e: seplab::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub struct Run<'a> {
    pub cfg: &'a ExperimentConfig,
    pub params: ModelParams,
}

pub trait Task: Sync {
    fn name(&self) -> &'static str;
    fn about(&self) -> &'static str;
    /// Artifacts to write. Acceptance failures are reported after writing, via `verdict`.
    fn run(&self, r: &Run) -> CliResult<Vec<Artifact>>;
    fn verdict(&self, _artifacts: &[Artifact]) -> CliResult<()> {
        Ok(())
    }
}

pub fn registry() -> Vec<Box<dyn Task>> {
    vec![
        Box::new(Simulate),
        Box::new(Density),
        Box::new(Correlations),
        Box::new(Occupation),
        Box::new(Spectra),
        Box::new(FitDecay),
        Box::new(Verify),
        Box::new(Oracle),
    ]
}

pub fn find(name: &str) -> Option<Box<dyn Task>> {
    registry().into_iter().find(|t| t.name() == name)
}

/// Interior profile for the configured initial datum.
fn initial_profile(r: &Run) -> CliResult<Vec<f64>> {
    let p = &r.params;
    Ok(match &r.cfg.task.initial {
        Initial::Stationary => stationary_profile(p)?.profile,
        Initial::Constant { value } => vec![*value; p.sites()],
        Initial::Bump { amplitude, support: (a, b) } => {
            let (amp, a, b) = (*amplitude, *a, *b);
            let v = admissible_initial_profile(&|u| amp * bump(a, b, u), p)?;
            if let Some(x) = v.iter().position(|g| !(0.0..=p.a()).contains(g)) {
                return Err(UsageError::new(
                    "task.initial.amplitude",
                    format!("profile leaves [0, alpha] at site {}", x + 1),
                )
                .into());
            }
            v
        }
        Initial::Profile { values } => values.clone(),
    })
}

fn integrator<'a>(r: &Run<'a>) -> CliResult<Option<&'a str>> {
    let name = r.cfg.task.integrator.as_deref();
    if let Some(n) = name {
        if n != "auto" && seplab::ode::integrator(n).is_none() {
            let known = seplab::ode::integrator_names().join(", ");
            return Err(
                UsageError::new("task.integrator", format!("unknown integrator '{n}', known: auto, {known}")).into()
            );
        }
    }
    Ok(name)
}

fn field_rows(t: &mut Table, f: &CorrelationField) {
    for (&(x, y), &v) in f.lattice.points().iter().zip(&f.values) {
        t.push(vec![f.time.into(), x.into(), y.into(), v.into()]);
    }
}

struct Simulate;

impl Task for Simulate {
    fn name(&self) -> &'static str {
        "simulate"
    }
    fn about(&self) -> &'static str {
        "Kinetic Monte Carlo ensemble from local Gibbs initial data; snapshot CSV"
    }
    fn run(&self, r: &Run) -> CliResult<Vec<Artifact>> {
        let seed = r.cfg.seed(self.name())?;
        let p = &r.params;
        let profile = initial_profile(r)?;
        let grid = r.cfg.run.grid();
        let t_end = *grid.last().expect("non-empty grid");
        let runs = run_replicas(r.cfg.run.replicas, |replica| {
            let id = ReplicaId { seed, stream: 0, replica };
            let mut rng = id.rng();
            let cfg0 = sample_local_gibbs(&profile, p, &mut rng)?;
            let mut snaps = Snapshots::new(&grid);
            simulate(cfg0, t_end, p, &mut rng, id, false, &mut snaps)?;
            Ok::<_, seplab::Error>(snaps.taken)
        });
        let mut t = Table::new(&["replica", "time", "site", "count"]);
        for (replica, snaps) in runs.into_iter().enumerate() {
            for (cfg, &time) in snaps?.iter().zip(&grid) {
                for x in 1..p.n {
                    t.push(vec![replica.into(), time.into(), x.into(), (cfg.get(x) as u64).into()]);
                }
            }
        }
        Ok(vec![Artifact::table("simulate", t)])
    }
}

struct Density;

impl Task for Density {
    fn name(&self) -> &'static str {
        "density"
    }
    fn about(&self) -> &'static str {
        "Discrete density equation solved on the time grid; CSV time,x,value"
    }
    fn run(&self, r: &Run) -> CliResult<Vec<Artifact>> {
        let solver = DensitySolver::new(&r.params, &initial_profile(r)?)?;
        let mut t = Table::new(&["time", "x", "value"]);
        for time in r.cfg.run.grid() {
            for (i, v) in solver.at(time).into_iter().enumerate() {
                t.push(vec![time.into(), (i + 1).into(), v.into()]);
            }
        }
        Ok(vec![Artifact::table("density", t)])
    }
}

struct Correlations;

impl Task for Correlations {
    fn name(&self) -> &'static str {
        "correlations"
    }
    fn about(&self) -> &'static str {
        "Two-point correlations from product initial data; CSV time,x,y,value"
    }
    fn run(&self, r: &Run) -> CliResult<Vec<Artifact>> {
        let p = &r.params;
        let solver = DensitySolver::new(p, &initial_profile(r)?)?;
        let grid = r.cfg.run.grid();
        let positive: Vec<f64> = grid.iter().copied().filter(|&t| t > 0.0).collect();
        let zero = CorrelationField::zeros(p, 0.0);
        let mut fields = if positive.is_empty() {
            Vec::new()
        } else {
            evolve_correlation(&zero, &solver, &positive, integrator(r)?)?
        };
        if grid[0] == 0.0 {
            fields.insert(0, zero);
        }
        let mut t = Table::new(&["time", "x", "y", "value"]);
        for f in &fields {
            field_rows(&mut t, f);
        }
        Ok(vec![Artifact::table("correlations", t)])
    }
}

struct Occupation;

impl Task for Occupation {
    fn name(&self) -> &'static str {
        "occupation"
    }
    fn about(&self) -> &'static str {
        "Expected off-diagonal occupation time of the absorbed pair walk; CSV x,y,value,closed_form"
    }
    fn run(&self, r: &Run) -> CliResult<Vec<Artifact>> {
        let p = &r.params;
        let sol = occupation_solve(p)?;
        // the closed form covers uniform bonds only
        let uniform = p.theta == 0.0 && p.lambda_l == 1.0 && p.lambda_r == 1.0;
        let mut t = Table::new(&["x", "y", "value", "closed_form"]);
        for (&(x, y), &v) in sol.lattice.points().iter().zip(&sol.values) {
            let c = uniform.then(|| occupation_closed_form_value(p.n, p.alpha, x, y));
            t.push(vec![x.into(), y.into(), v.into(), c.into()]);
        }
        Ok(vec![Artifact::table("occupation", t)])
    }
}

struct Spectra;

impl Task for Spectra {
    fn name(&self) -> &'static str {
        "spectra"
    }
    fn about(&self) -> &'static str {
        "Continuum semigroup, lattice transition kernel or Robin eigenvalues; CSV"
    }
    fn run(&self, r: &Run) -> CliResult<Vec<Artifact>> {
        let p = &r.params;
        let task = &r.cfg.task;
        let table = match task.spectrum {
            Spectrum::Semigroup => {
                let e = TestFunction::for_params(p)?.semigroup(p, task.modes)?;
                let mut t = Table::new(&["time", "x", "value"]);
                for time in r.cfg.run.grid() {
                    for k in 0..task.points {
                        let u = k as f64 / (task.points - 1) as f64;
                        t.push(vec![time.into(), u.into(), e.eval(time, u).into()]);
                    }
                }
                t
            }
            Spectrum::Kernel => {
                let k = TransitionKernel::new(p);
                let mut t = Table::new(&["time", "x", "y", "value"]);
                for time in r.cfg.run.grid() {
                    for x in 1..p.n {
                        for y in 1..p.n {
                            t.push(vec![time.into(), x.into(), y.into(), k.at(x, y, time).into()]);
                        }
                    }
                }
                t
            }
            Spectrum::Roots => {
                let mut t = Table::new(&["k", "root", "eigenvalue"]);
                for (k, b) in robin_roots(p.lambda_l, p.lambda_r, task.modes)?.into_iter().enumerate() {
                    t.push(vec![(k + 1).into(), b.into(), (-p.a() * b * b).into()]);
                }
                t
            }
        };
        Ok(vec![Artifact::table("spectra", table)])
    }
}

struct FitDecay;

impl Task for FitDecay {
    fn name(&self) -> &'static str {
        "fit-decay"
    }
    fn about(&self) -> &'static str {
        "Log-log fits of the correlation maxima against N; JSON"
    }
    fn run(&self, r: &Run) -> CliResult<Vec<Artifact>> {
        let p = &r.params;
        if p.lambda_l != p.lambda_r {
            return Err(UsageError::new("model.lambda_r", "decay fits need lambda_l = lambda_r").into());
        }
        let base = DecayTemplate::default();
        let (amplitude, support) = match &r.cfg.task.initial {
            Initial::Stationary => (base.amplitude, base.support),
            Initial::Bump { amplitude, support } if *amplitude != 0.0 => (*amplitude, *support),
            _ => {
                return Err(UsageError::new("task.initial", "fit-decay needs a bump with non-zero amplitude").into());
            }
        };
        let template =
            DecayTemplate { params: p.clone(), amplitude, support, horizon: r.cfg.run.t_end, steps: r.cfg.run.steps };
        let fits = decay_fit(&r.cfg.task.thetas, &r.cfg.task.n_list, &template, integrator(r)?)?;
        Ok(vec![Artifact::document("fit_decay", json!({ "fits": fits }))])
    }
}

struct Verify;

impl Task for Verify {
    fn name(&self) -> &'static str {
        "verify"
    }
    fn about(&self) -> &'static str {
        "Runs the acceptance suite; exit 1 naming any failed criterion"
    }
    fn run(&self, r: &Run) -> CliResult<Vec<Artifact>> {
        let ctx = Context { seed: r.cfg.run.seed.unwrap_or(Context::default().seed) };
        let reports = acceptance::run_suite(&ctx, &r.cfg.task.criteria, |rep| println!("{}", rep.line()));
        let failed = reports.iter().filter(|rep| !rep.passed).count();
        println!("{} passed, {failed} failed", reports.len() - failed);
        // timings are left out so the file depends on the config alone
        let criteria: Vec<_> = reports
            .iter()
            .map(|rep| json!({ "id": rep.id, "name": rep.name, "passed": rep.passed, "detail": rep.detail }))
            .collect();
        Ok(vec![Artifact::document("verify", json!({ "seed": ctx.seed, "criteria": criteria }))])
    }
    fn verdict(&self, artifacts: &[Artifact]) -> CliResult<()> {
        let mut failed = Vec::new();
        for a in artifacts {
            if let Artifact::Document { body, .. } = a {
                for c in body["criteria"].as_array().into_iter().flatten() {
                    if c["passed"] == json!(false) {
                        failed.push(format!("[{}] {}", c["id"], c["name"].as_str().unwrap_or("")));
                    }
                }
            }
        }
        if failed.is_empty() {
            Ok(())
        } else {
            Err(CliError::Acceptance(failed))
        }
    }
}

struct Oracle;

impl Task for Oracle {
    fn name(&self) -> &'static str {
        "oracle"
    }
    fn about(&self) -> &'static str {
        "Exact density and correlations from the full generator (small N only)"
    }
    fn run(&self, r: &Run) -> CliResult<Vec<Artifact>> {
        let p = &r.params;
        let g = build_generator(p, r.cfg.task.state_cap)?;
        let p0 = g.space.product_measure(&initial_profile(r)?);
        let mut dens = Table::new(&["time", "x", "value"]);
        let mut corr = Table::new(&["time", "x", "y", "value"]);
        for time in r.cfg.run.grid() {
            let m = exact_moments(&g.space, &g.evolve_distribution(&p0, time)?)?;
            for (i, &v) in m.density.iter().enumerate() {
                dens.push(vec![time.into(), (i + 1).into(), v.into()]);
            }
            field_rows(&mut corr, &CorrelationField::from_moments(&m, p, time)?);
        }
        Ok(vec![Artifact::table("oracle_density", dens), Artifact::table("oracle_correlations", corr)])
    }
}
