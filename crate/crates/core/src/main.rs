use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use becsolve::analysis::VerifyOptions;
use becsolve::cli::{
    format_sweep_table, run, sweep, sweep_csv, verify, write_field_dump, write_records_csv,
    EpsilonChoice, InnerKind, PrecondKind, RunConfig, RunRecord, Scheme,
};
use becsolve::problems::ProblemKind;
use becsolve::Error;

#[derive(Parser)]
#[command(
    name = "becsolve",
    about = "All-at-once space-time solver with block epsilon-circulant preconditioning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configuration and print a results row.
    Run(RunArgs),
    /// BEC/BC comparison table over N and m axis lists.
    Sweep(SweepArgs),
    /// Dense-oracle verification sweep; nonzero exit on any failed check.
    Verify(VerifyArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// heat-const | heat-var | convdiff
    #[arg(long)]
    problem: Option<String>,
    /// bdf1 | bdf2
    #[arg(long)]
    scheme: Option<String>,
    /// Time steps N.
    #[arg(long)]
    n: Option<usize>,
    /// Interior mesh points per dimension (J = m²).
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    t_final: Option<f64>,
    /// bec | bc | none
    #[arg(long)]
    preconditioner: Option<String>,
    /// "auto" (= min{0.5, 0.5τ}) or a value in (0, 1].
    #[arg(long)]
    epsilon: Option<String>,
    /// auto | fst | multigrid | dense
    #[arg(long)]
    inner_solver: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    restart: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    mg_cycles: Option<usize>,
    #[arg(long)]
    mg_omega: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Append the results row(s) to this CSV file.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Write the final-time field as x,y,u CSV.
    #[arg(long)]
    field_dump: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated N values, e.g. 16,32,64.
    #[arg(long)]
    n_list: Option<String>,
    /// Comma-separated m values, e.g. 15,31,63.
    #[arg(long)]
    m_list: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Comma-separated N values (default 3,4,8).
    #[arg(long)]
    n_list: Option<String>,
    /// Comma-separated m values (default 2,3,7).
    #[arg(long)]
    m_list: Option<String>,
    /// Comma-separated epsilon values (default 1,0.5,0.1,0.01).
    #[arg(long)]
    epsilon_list: Option<String>,
    /// Comma-separated scheme orders (default 1,2).
    #[arg(long)]
    schemes: Option<String>,
    /// Dense-probe size cap on N·J.
    #[arg(long)]
    nj_cap: Option<usize>,
    /// Skip the bilinear-element slice of the sweep.
    #[arg(long)]
    skip_q1: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the check table as CSV.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, Error> {
    s.split(',')
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|_| Error::Config(format!("bad {what} entry '{p}'")))
        })
        .collect()
}

fn build_config(args: &CommonArgs) -> Result<RunConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_toml(&std::fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &args.problem {
        cfg.problem = ProblemKind::parse(p)?;
    }
    if let Some(s) = &args.scheme {
        cfg.scheme = Scheme::parse(s)?;
    }
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(m) = args.m {
        cfg.m = m;
    }
    if let Some(t) = args.t_final {
        cfg.t_final = t;
    }
    if let Some(p) = &args.preconditioner {
        cfg.preconditioner = PrecondKind::parse(p)?;
    }
    if let Some(e) = &args.epsilon {
        cfg.epsilon = EpsilonChoice::parse(e)?;
    }
    if let Some(i) = &args.inner_solver {
        cfg.inner_solver = InnerKind::parse(i)?;
    }
    if let Some(t) = args.tol {
        cfg.tol = t;
    }
    if let Some(r) = args.restart {
        cfg.restart = r;
    }
    if let Some(x) = args.max_iters {
        cfg.max_iters = x;
    }
    if let Some(c) = args.mg_cycles {
        cfg.mg_cycles = c;
    }
    if let Some(w) = args.mg_omega {
        cfg.mg_omega = w;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.output {
        cfg.output = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_record(record: &RunRecord) {
    println!(
        "{:>10} {:>5} {:>5} {:>10} | {:>5} {:>9} {:>10} {}",
        "problem", "N", "m", "DoF", "Iter", "CPU", "RES", "E_inf"
    );
    println!(
        "{:>10} {:>5} {:>5} {:>10} | {:>5} {:>9.2} {:>10.2e} {}",
        record.problem,
        record.n,
        record.m,
        record.dofs,
        record.iterations,
        record.cpu_seconds,
        record.res,
        record
            .error_inf
            .map(|e| format!("{e:.2e}"))
            .unwrap_or_else(|| "-".into()),
    );
}

fn cmd_run(args: &RunArgs) -> Result<bool, Error> {
    let mut cfg = build_config(&args.common)?;
    if let Some(fd) = &args.field_dump {
        cfg.field_dump = Some(fd.clone());
    }
    let out = run(&cfg)?;
    print_record(&out.record);
    if let Some(path) = &cfg.output {
        write_records_csv(std::slice::from_ref(&out.record), path)?;
    }
    if let Some(path) = &cfg.field_dump {
        write_field_dump(&out, path)?;
    }
    if !out.record.converged {
        eprintln!(
            "solver stopped at {} iterations without reaching tol = {:e}",
            out.record.iterations, cfg.tol
        );
    }
    Ok(out.record.converged)
}

fn cmd_sweep(args: &SweepArgs) -> Result<bool, Error> {
    let cfg = build_config(&args.common)?;
    let ns: Vec<usize> = match &args.n_list {
        Some(s) => parse_list(s, "n-list")?,
        None => vec![],
    };
    let ms: Vec<usize> = match &args.m_list {
        Some(s) => parse_list(s, "m-list")?,
        None => vec![],
    };
    let rows = sweep(&cfg, &ns, &ms)?;
    print!("{}", format_sweep_table(&rows));
    if let Some(path) = &cfg.output {
        std::fs::write(path, sweep_csv(&rows))?;
    }
    Ok(rows.iter().all(|r| r.bec.converged && r.bc.converged))
}

fn cmd_verify(args: &VerifyArgs) -> Result<bool, Error> {
    let mut opts = VerifyOptions::default();
    if let Some(s) = &args.n_list {
        opts.n_list = parse_list(s, "n-list")?;
    }
    if let Some(s) = &args.m_list {
        opts.m_list = parse_list(s, "m-list")?;
    }
    if let Some(s) = &args.epsilon_list {
        opts.eps_list = parse_list(s, "epsilon-list")?;
    }
    if let Some(s) = &args.schemes {
        opts.scheme_orders = parse_list(s, "schemes")?;
    }
    if let Some(c) = args.nj_cap {
        opts.nj_cap = c;
    }
    if args.skip_q1 {
        opts.include_q1 = false;
    }
    if let Some(s) = args.seed {
        opts.seed = s;
    }
    opts.validate()?;
    verify(&opts, args.output.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
