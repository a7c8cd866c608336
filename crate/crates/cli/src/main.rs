use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slowvar::experiments::ConfigOverrides;
use slowvar::ssa::{simulate, Recorder};
use slowvar::{
    build_table, load_network, marginalize_slow, parse_network, project_to_pmf, solve_stationary,
    solve_truncated_cme, validate_network, DriftDiffusionTable, Error, Estimator, ExperimentConfig,
    ExperimentId, Method, NetworkFile, NmaClosure, RandomStream, SimOptions, SolverOptions, StateVector,
    StoppingRule, TruncatedDomain,
};

const DEFAULT_NETWORK: &str = include_str!("../../../networks/linear.toml");

#[derive(Parser)]
#[command(name = "slowvar", version, about = "Slow-variable approximations for multiscale reaction networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a network file and print a report.
    Validate {
        network: PathBuf,
    },
    /// Run the SSA and write a trajectory on a uniform time mesh.
    Simulate(SimulateArgs),
    /// Build a drift/diffusion table on a slow-variable grid.
    Estimate(EstimateArgs),
    /// Solve the stationary Fokker-Planck equation for a table.
    SolveFpe(SolveFpeArgs),
    /// Solve a truncated chemical master equation.
    SolveCme(SolveCmeArgs),
    /// Run one of the reference experiments.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct Workers {
    /// Worker threads (outputs do not depend on this).
    #[arg(long, env = "SLOWVAR_WORKERS", value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
}

impl Workers {
    fn get(&self) -> usize {
        match self.workers {
            Some(w) => w as usize,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Network file (defaults to the built-in linear system).
    network: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 5.0)]
    t_end: f64,
    #[arg(long, default_value_t = 0.01)]
    mesh: f64,
    /// Start state, e.g. `100,100`; overrides the file's `initial`.
    #[arg(long, value_delimiter = ',')]
    initial: Option<Vec<i64>>,
    /// Output CSV (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Network file (defaults to the built-in linear system).
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long)]
    method: Method,
    /// Inclusive grid `lo:hi` (defaults to the file's projection grid).
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(i64, i64)>,
    /// Slow events (CMA) or fast events (NMA) per grid point.
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = NmaClosure::default())]
    closure: NmaClosure,
    #[command(flatten)]
    workers: Workers,
    /// Output CSV (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveFpeArgs {
    /// Table CSV written by `estimate`.
    table: PathBuf,
    /// Projected probability mass function CSV (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the continuous density.
    #[arg(long)]
    density: Option<PathBuf>,
}

#[derive(Args)]
struct SolveCmeArgs {
    network: PathBuf,
    /// Upper copy-number bound per species, e.g. `1000,1500`.
    #[arg(long, value_delimiter = ',', required = true)]
    domain: Vec<i64>,
    #[arg(long, default_value_t = SolverOptions::default().tol)]
    tol: f64,
    /// Lattice entries at or below this are left out of the lattice CSV.
    #[arg(long, default_value_t = 1e-12)]
    threshold: f64,
    /// Output directory for `cme_lattice.csv` and `cme_marginal.csv`.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// fig1a, fig1b, fig2, fig3, fig4 or custom; may come from `--config`.
    id: Option<ExperimentId>,
    /// TOML experiment config; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<Method>>,
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(i64, i64)>,
    /// Per-point budgets for every method, comma-separated.
    #[arg(long, value_delimiter = ',')]
    budget: Option<Vec<u64>>,
    /// K or λ values, comma-separated.
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<u64>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    closure: Option<NmaClosure>,
    /// Allow budgets above the per-point cap.
    #[arg(long)]
    full_sweep: bool,
    #[command(flatten)]
    workers: Workers,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_grid(s: &str) -> Result<(i64, i64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected lo:hi")?;
    let lo: i64 = lo.trim().parse().map_err(|_| format!("invalid lower bound `{lo}`"))?;
    let hi: i64 = hi.trim().parse().map_err(|_| format!("invalid upper bound `{hi}`"))?;
    if lo > hi {
        return Err(format!("empty grid {lo}:{hi}"));
    }
    Ok((lo, hi))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            if e.use_stderr() {
                report_error("usage", &e.kind().to_string());
            }
            return ExitCode::from(code as u8);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(e.kind(), &e.to_string());
            // Bad arguments that clap could not see are usage errors too.
            if matches!(e, Error::InvalidArgument(_)) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn report_error(kind: &str, message: &str) {
    let line = serde_json::json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{line}");
}

fn run(command: Command) -> slowvar::Result<()> {
    match command {
        Command::Validate { network } => validate(&network),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Estimate(a) => estimate(a),
        Command::SolveFpe(a) => solve_fpe(a),
        Command::SolveCme(a) => solve_cme(a),
        Command::Experiment(a) => experiment(a),
    }
}

fn network_or_default(path: Option<&Path>) -> slowvar::Result<NetworkFile> {
    match path {
        Some(p) => load_network(p),
        None => parse_network(DEFAULT_NETWORK, Path::new("linear.toml")),
    }
}

fn output(path: Option<&Path>) -> slowvar::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            Box::new(BufWriter::new(File::create(p)?))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn validate(path: &Path) -> slowvar::Result<()> {
    let file = load_network(path)?;
    let net = &file.network;
    let proj = &file.projection;
    let report = validate_network(net, proj);
    println!("network: {}", file.name);
    println!("species: {}", net.species().join(", "));
    println!("volume: {}", net.volume());
    for (j, r) in net.reactions().iter().enumerate() {
        let speed = if net.is_fast(j) { "fast" } else { "slow" };
        println!(
            "reaction {}: {speed}, order {}, slow change {}",
            r.name,
            r.order(),
            proj.slow_change(net.net(j))
        );
    }
    println!(
        "projection: coefficients {:?}, grid [{}, {}], adjust {}",
        proj.coefficients,
        proj.s_min,
        proj.s_max,
        net.species().get(proj.adjustment_species).map_or("?", String::as_str)
    );
    println!("qssma closure: {}", if file.qssma.is_some() { "yes" } else { "no" });
    for v in &report.violations {
        println!("violation: {v}");
    }
    println!("status: {}", if report.is_valid() { "valid" } else { "invalid" });
    report.into_result()
}

fn simulate_cmd(a: SimulateArgs) -> slowvar::Result<()> {
    let file = network_or_default(a.network.as_deref())?;
    let net = &file.network;
    let x0 = a
        .initial
        .or(file.initial)
        .ok_or_else(|| Error::InvalidArgument("no initial state: pass --initial".into()))?;
    let mut rng = RandomStream::new(a.seed, 0);
    let traj = simulate(net, &StateVector::new(x0), a.t_end, &mut rng, Recorder::Mesh(a.mesh))?;
    let mut w = output(a.out.as_deref())?;
    let names: Vec<&str> = net
        .species()
        .iter()
        .map(String::as_str)
        .chain(net.reactions().iter().map(|r| r.name.as_str()))
        .collect();
    writeln!(w, "t,{}", names.join(","))?;
    for ((t, x), c) in traj.times.iter().zip(&traj.states).zip(&traj.counts) {
        write!(w, "{t:.16e}")?;
        for v in &x.0 {
            write!(w, ",{v}")?;
        }
        for v in c {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn estimate(a: EstimateArgs) -> slowvar::Result<()> {
    let file = network_or_default(a.network.as_deref())?;
    validate_network(&file.network, &file.projection).into_result()?;
    let (lo, hi) = a.grid.unwrap_or((file.projection.s_min, file.projection.s_max));
    let grid: Vec<i64> = (lo..=hi).collect();
    let need_budget = || {
        a.budget
            .filter(|&b| b > 0)
            .ok_or_else(|| Error::InvalidArgument(format!("{} needs a positive --budget", a.method)))
    };
    let estimator = match a.method {
        Method::Cma => Estimator::Cma(StoppingRule::SlowEvents(need_budget()?)),
        Method::Nma => Estimator::Nma(need_budget()?, a.closure),
        Method::Qssma => Estimator::Qssma(
            file.qssma
                .ok_or_else(|| Error::InvalidArgument("network file has no [qssma] closure".into()))?,
        ),
    };
    let table = build_table(
        &file.network,
        &file.projection,
        &grid,
        &estimator,
        a.seed,
        a.workers.get(),
        &SimOptions::default(),
    )?;
    for row in table.failures() {
        eprintln!(
            "warning: s = {}: {}",
            row.s,
            row.failure.as_deref().unwrap_or("failed")
        );
    }
    let mut w = output(a.out.as_deref())?;
    table.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn solve_fpe(a: SolveFpeArgs) -> slowvar::Result<()> {
    let table = DriftDiffusionTable::read_csv(File::open(&a.table)?).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            path: a.table.clone(),
            message,
        },
        other => other,
    })?;
    let density = solve_stationary(&table)?;
    if let Some(path) = &a.density {
        let mut w = output(Some(path))?;
        density.write_csv(&mut w)?;
        w.flush()?;
    }
    let projection = project_to_pmf(&density)?;
    let mut w = output(a.out.as_deref())?;
    projection.distribution.write_csv(&mut w, "n")?;
    w.flush()?;
    Ok(())
}

fn solve_cme(a: SolveCmeArgs) -> slowvar::Result<()> {
    let file = load_network(&a.network)?;
    let domain = TruncatedDomain::new(a.domain)?;
    let opts = SolverOptions {
        tol: a.tol,
        ..SolverOptions::default()
    };
    let lattice = solve_truncated_cme(&file.network, &domain, Some(&file.projection), &opts)?;
    let marginal = marginalize_slow(&lattice, &file.projection)?;
    fs::create_dir_all(&a.out)?;
    let lattice_path = a.out.join("cme_lattice.csv");
    let marginal_path = a.out.join("cme_marginal.csv");
    let mut w = output(Some(&lattice_path))?;
    lattice.write_csv(&mut w, a.threshold)?;
    w.flush()?;
    let mut w = output(Some(&marginal_path))?;
    marginal.write_csv(&mut w, "s")?;
    w.flush()?;
    println!("states: {}", domain.len());
    println!("iterations: {}", lattice.iterations);
    println!("residual: {:e}", lattice.residual);
    println!("peaks: {:?}", marginal.interior_local_maxima());
    println!("wrote {}", lattice_path.display());
    println!("wrote {}", marginal_path.display());
    Ok(())
}

fn experiment(a: ExperimentArgs) -> slowvar::Result<()> {
    let mut cfg = match (&a.config, a.id) {
        (Some(path), id) => {
            let cfg = ExperimentConfig::load(path)?;
            if let Some(id) = id.filter(|&id| id != cfg.experiment) {
                return Err(Error::InvalidArgument(format!(
                    "config names experiment {} but {id} was requested",
                    cfg.experiment
                )));
            }
            cfg
        }
        (None, Some(id)) => ExperimentConfig::new(id),
        (None, None) => {
            return Err(Error::InvalidArgument("name an experiment or pass --config".into()));
        }
    };
    cfg.workers = a.workers.get();
    if a.budget.is_some() {
        cfg.cma_budgets = None;
        cfg.nma_budgets = None;
    }
    cfg.apply(ConfigOverrides {
        network: a.network,
        methods: a.method,
        grid: a.grid,
        budgets: a.budget,
        sweep: a.sweep,
        seed: a.seed,
        replicates: a.replicates,
        out: a.out,
        scale: a.scale,
        nma_closure: a.closure,
        full_sweep: a.full_sweep.then_some(true),
        ..ConfigOverrides::default()
    });
    let report = slowvar::run_experiment(&cfg)?;
    for p in &report.outputs {
        println!("wrote {}", p.display());
    }
    Ok(())
}
