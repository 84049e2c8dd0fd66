//! Command-line front end: run configuration, the `run`/`sweep`/`verify`
//! drivers, and CSV reporting.
//!
//! A config file is a flat TOML key-value table whose keys mirror
//! [`RunConfig`]; every default reproduces the constant-coefficient heat
//! benchmark at N = 2⁶, m = 63, so an empty file is a valid experiment.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{CheckReport, VerifyOptions};
use crate::discretization::AllAtOnceSystem;
use crate::error::{Error, Result};
use crate::krylov::{gmres_solve, residual_metrics, GmresConfig, LinearOp};
use crate::preconditioner::{choose_epsilon, BecOptions, BecPreconditioner, InnerSolverKind, MgSettings};
use crate::problems::{build_system, coarse_operators, exact_on_mesh, ProblemKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Bdf1,
    Bdf2,
}

impl Scheme {
    pub fn order(&self) -> usize {
        match self {
            Scheme::Bdf1 => 1,
            Scheme::Bdf2 => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Bdf1 => "bdf1",
            Scheme::Bdf2 => "bdf2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "bdf1" => Ok(Scheme::Bdf1),
            "bdf2" => Ok(Scheme::Bdf2),
            _ => Err(Error::Config(format!("unknown scheme '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrecondKind {
    Bec,
    Bc,
    None,
}

impl PrecondKind {
    pub fn name(&self) -> &'static str {
        match self {
            PrecondKind::Bec => "bec",
            PrecondKind::Bc => "bc",
            PrecondKind::None => "none",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "bec" => Ok(PrecondKind::Bec),
            "bc" => Ok(PrecondKind::Bc),
            "none" => Ok(PrecondKind::None),
            _ => Err(Error::Config(format!("unknown preconditioner '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerKind {
    Auto,
    Fst,
    Multigrid,
    Dense,
}

impl InnerKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(InnerKind::Auto),
            "fst" => Ok(InnerKind::Fst),
            "multigrid" => Ok(InnerKind::Multigrid),
            "dense" => Ok(InnerKind::Dense),
            _ => Err(Error::Config(format!("unknown inner solver '{s}'"))),
        }
    }

    fn to_solver(self) -> InnerSolverKind {
        match self {
            InnerKind::Auto => InnerSolverKind::Auto,
            InnerKind::Fst => InnerSolverKind::FstDirect,
            InnerKind::Multigrid => InnerSolverKind::Multigrid,
            InnerKind::Dense => InnerSolverKind::DenseDirect,
        }
    }
}

/// ε selection: the experiment rule `min{0.5, 0.5τ}` or an explicit value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonChoice {
    Auto,
    Fixed(f64),
}

impl EpsilonChoice {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(EpsilonChoice::Auto);
        }
        s.parse::<f64>()
            .map(EpsilonChoice::Fixed)
            .map_err(|_| Error::Config(format!("epsilon must be 'auto' or a number, got '{s}'")))
    }

    pub fn resolve(&self, tau: f64) -> f64 {
        match self {
            EpsilonChoice::Auto => choose_epsilon(tau),
            EpsilonChoice::Fixed(e) => *e,
        }
    }
}

impl Serialize for EpsilonChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            EpsilonChoice::Auto => s.serialize_str("auto"),
            EpsilonChoice::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for EpsilonChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(EpsilonChoice::Fixed(x)),
            Raw::Word(w) if w == "auto" => Ok(EpsilonChoice::Auto),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "epsilon must be 'auto' or a number, got '{w}'"
            ))),
        }
    }
}

/// One experiment description. Field names double as the config-file keys.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub scheme: Scheme,
    pub n: usize,
    pub m: usize,
    pub t_final: f64,
    pub preconditioner: PrecondKind,
    pub epsilon: EpsilonChoice,
    pub inner_solver: InnerKind,
    pub tol: f64,
    pub restart: usize,
    pub max_iters: usize,
    pub mg_cycles: usize,
    pub mg_omega: f64,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub field_dump: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::HeatConst,
            scheme: Scheme::Bdf1,
            n: 64,
            m: 63,
            t_final: 1.0,
            preconditioner: PrecondKind::Bec,
            epsilon: EpsilonChoice::Auto,
            inner_solver: InnerKind::Auto,
            tol: 1e-7,
            restart: 50,
            max_iters: 500,
            mg_cycles: 1,
            mg_omega: 0.8,
            seed: 0,
            output: None,
            field_dump: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::Config("n and m must be positive".into()));
        }
        if self.t_final <= 0.0 {
            return Err(Error::Config("t-final must be positive".into()));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::Config(format!("tol must lie in (0,1), got {}", self.tol)));
        }
        if self.restart == 0 {
            return Err(Error::Config("restart must be >= 1".into()));
        }
        if let EpsilonChoice::Fixed(e) = self.epsilon {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::Config(format!("epsilon must lie in (0, 1], got {e}")));
            }
        }
        if self.inner_solver == InnerKind::Fst && self.problem != ProblemKind::HeatConst {
            return Err(Error::Config(
                "the sine-transform inner solver needs the constant-coefficient heat problem".into(),
            ));
        }
        if self.mg_cycles == 0 {
            return Err(Error::Config("mg-cycles must be >= 1".into()));
        }
        if !(self.mg_omega > 0.0 && self.mg_omega < 2.0) {
            return Err(Error::Config(format!(
                "mg-omega must lie in (0, 2), got {}",
                self.mg_omega
            )));
        }
        Ok(())
    }

    fn gmres(&self) -> GmresConfig {
        GmresConfig {
            tol: self.tol,
            restart: self.restart,
            max_iters: self.max_iters,
            initial_guess: None,
        }
    }
}

/// One results row, matching the experiment tables: sizes, iteration count,
/// CPU seconds, unpreconditioned residual, and max-norm error when the
/// problem has an exact solution.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub problem: String,
    pub scheme: String,
    pub preconditioner: String,
    pub n: usize,
    pub m: usize,
    pub dofs: usize,
    pub iterations: usize,
    pub converged: bool,
    pub cpu_seconds: f64,
    pub res: f64,
    pub error_inf: Option<f64>,
}

impl RunRecord {
    pub fn csv_header() -> &'static str {
        "problem,scheme,preconditioner,n,m,dofs,iterations,converged,cpu_seconds,res,error_inf"
    }

    pub fn to_csv_row(&self) -> String {
        let err = self.error_inf.map(|e| e.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.problem,
            self.scheme,
            self.preconditioner,
            self.n,
            self.m,
            self.dofs,
            self.iterations,
            self.converged,
            self.cpu_seconds,
            self.res,
            err
        )
    }

    pub fn from_csv_row(row: &str) -> Result<Self> {
        let parts: Vec<&str> = row.split(',').collect();
        if parts.len() != 11 {
            return Err(Error::Config(format!(
                "results row needs 11 fields, got {}",
                parts.len()
            )));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Config(format!("bad float '{s}' in results row")))
        };
        let parse_u = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::Config(format!("bad integer '{s}' in results row")))
        };
        Ok(Self {
            problem: parts[0].to_string(),
            scheme: parts[1].to_string(),
            preconditioner: parts[2].to_string(),
            n: parse_u(parts[3])?,
            m: parse_u(parts[4])?,
            dofs: parse_u(parts[5])?,
            iterations: parse_u(parts[6])?,
            converged: parts[7] == "true",
            cpu_seconds: parse_f(parts[8])?,
            res: parse_f(parts[9])?,
            error_inf: if parts[10].is_empty() {
                None
            } else {
                Some(parse_f(parts[10])?)
            },
        })
    }
}

pub struct RunOutput {
    pub record: RunRecord,
    pub solution: Vec<f64>,
    pub system: AllAtOnceSystem,
}

fn build_preconditioner<'a>(
    config: &RunConfig,
    system: &'a AllAtOnceSystem,
) -> Result<Option<BecPreconditioner<'a>>> {
    let epsilon = match config.preconditioner {
        PrecondKind::None => return Ok(None),
        PrecondKind::Bc => 1.0,
        PrecondKind::Bec => config.epsilon.resolve(system.tau()),
    };
    let opts = BecOptions {
        epsilon,
        inner: config.inner_solver.to_solver(),
        reduction: true,
        mg: MgSettings {
            cycles: config.mg_cycles,
            omega: config.mg_omega,
            coarsest_max_m: 7,
        },
        coarse: coarse_operators(config.problem),
        dense_cap: 4096,
    };
    Ok(Some(BecPreconditioner::new(
        &system.pair,
        &system.stencil,
        system.n_steps(),
        system.tau(),
        opts,
    )?))
}

/// Assemble, solve, and measure one configuration.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let start = Instant::now();
    let system = build_system(
        config.problem,
        config.scheme.order(),
        config.m,
        config.n,
        config.t_final,
    )?;
    let precond = build_preconditioner(config, &system)?;
    let (solution, report) = gmres_solve(
        &system,
        precond.as_ref().map(|p| p as &dyn LinearOp),
        &system.rhs,
        &config.gmres(),
    )?;
    let exact = exact_on_mesh(config.problem, &system);
    let (res, error_inf) = residual_metrics(&system, &solution, exact.as_deref())?;
    let record = RunRecord {
        problem: config.problem.name().to_string(),
        scheme: config.scheme.name().to_string(),
        preconditioner: config.preconditioner.name().to_string(),
        n: config.n,
        m: config.m,
        dofs: system.dofs(),
        iterations: report.iterations,
        converged: report.converged,
        cpu_seconds: start.elapsed().as_secs_f64(),
        res,
        error_inf,
    };
    Ok(RunOutput {
        record,
        solution,
        system,
    })
}

/// Final-time solution block as an `x,y,u` CSV.
pub fn write_field_dump(out: &RunOutput, path: &Path) -> Result<()> {
    let j = out.system.j();
    let n = out.system.n_steps();
    let last = &out.solution[(n - 1) * j..n * j];
    let mut text = String::from("x,y,u\n");
    for (idx, &u) in last.iter().enumerate() {
        let (x, y) = out.system.pair.grid.coords(idx);
        let _ = writeln!(text, "{x},{y},{u}");
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_records_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut text = String::from(RunRecord::csv_header());
    text.push('\n');
    for r in records {
        text.push_str(&r.to_csv_row());
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_records_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == RunRecord::csv_header() => {}
        _ => return Err(Error::Config("results file missing expected header".into())),
    }
    lines.map(RunRecord::from_csv_row).collect()
}

/// One sweep cell: BEC and BC side by side.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub n: usize,
    pub m: usize,
    pub dofs: usize,
    pub bec: RunRecord,
    pub bc: RunRecord,
}

/// Run the BEC/BC comparison over the Cartesian product of the axis lists;
/// an empty axis reuses the base value.
pub fn sweep(base: &RunConfig, n_list: &[usize], m_list: &[usize]) -> Result<Vec<SweepRow>> {
    let ns: Vec<usize> = if n_list.is_empty() { vec![base.n] } else { n_list.to_vec() };
    let ms: Vec<usize> = if m_list.is_empty() { vec![base.m] } else { m_list.to_vec() };
    let mut rows = Vec::new();
    for &n in &ns {
        for &m in &ms {
            let mut bec_cfg = base.clone();
            bec_cfg.n = n;
            bec_cfg.m = m;
            bec_cfg.preconditioner = PrecondKind::Bec;
            let bec = run(&bec_cfg)?.record;
            let mut bc_cfg = bec_cfg.clone();
            bc_cfg.preconditioner = PrecondKind::Bc;
            let bc = run(&bc_cfg)?.record;
            rows.push(SweepRow {
                n,
                m,
                dofs: bec.dofs,
                bec,
                bc,
            });
        }
    }
    Ok(rows)
}

pub fn format_sweep_table(rows: &[SweepRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>6} {:>5} {:>10} | {:>8} {:>9} {:>10} | {:>8} {:>9} {:>10}",
        "N", "m", "DoF", "BEC-Iter", "BEC-CPU", "BEC-RES", "BC-Iter", "BC-CPU", "BC-RES"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>6} {:>5} {:>10} | {:>8} {:>9.2} {:>10.2e} | {:>8} {:>9.2} {:>10.2e}",
            r.n,
            r.m,
            r.dofs,
            r.bec.iterations,
            r.bec.cpu_seconds,
            r.bec.res,
            r.bc.iterations,
            r.bc.cpu_seconds,
            r.bc.res
        );
    }
    s
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(
        "n,m,dofs,bec_iterations,bec_cpu_seconds,bec_res,bec_error_inf,bc_iterations,bc_cpu_seconds,bc_res,bc_error_inf\n",
    );
    for r in rows {
        let bec_err = r.bec.error_inf.map(|e| e.to_string()).unwrap_or_default();
        let bc_err = r.bc.error_inf.map(|e| e.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.n,
            r.m,
            r.dofs,
            r.bec.iterations,
            r.bec.cpu_seconds,
            r.bec.res,
            bec_err,
            r.bc.iterations,
            r.bc.cpu_seconds,
            r.bc.res,
            bc_err
        );
    }
    s
}

pub fn format_check_table(rows: &[CheckReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<22} {:<34} {:>12} {:>12} {:>7}",
        "check", "config", "measured", "bound", "status"
    );
    for r in rows {
        let status = if r.skipped {
            "skip"
        } else if r.pass {
            "pass"
        } else {
            "FAIL"
        };
        let _ = writeln!(
            s,
            "{:<22} {:<34} {:>12.4e} {:>12.4e} {:>7}{}",
            r.name,
            r.config,
            r.measured,
            r.bound,
            status,
            if r.note.is_empty() {
                String::new()
            } else {
                format!("  ({})", r.note)
            }
        );
    }
    s
}

pub fn checks_csv(rows: &[CheckReport]) -> String {
    let mut s = String::from("check,config,measured,bound,pass,skipped,note\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.name,
            r.config.replace(',', ";"),
            r.measured,
            r.bound,
            r.pass,
            r.skipped,
            r.note.replace(',', ";")
        );
    }
    s
}

/// Run the verification sweep, print the table, optionally write the CSV,
/// and report overall success.
pub fn verify(opts: &VerifyOptions, csv_path: Option<&Path>) -> Result<bool> {
    let rows = crate::analysis::run_verification(opts)?;
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(format_check_table(&rows).as_bytes());
    if let Some(path) = csv_path {
        std::fs::write(path, checks_csv(&rows))?;
    }
    let failed = rows.iter().filter(|r| !r.pass).count();
    let skipped = rows.iter().filter(|r| r.skipped).count();
    let _ = writeln!(
        stdout,
        "\n{} checks, {} failed, {} skipped",
        rows.len(),
        failed,
        skipped
    );
    Ok(failed == 0)
}
