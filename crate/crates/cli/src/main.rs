use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use abcd_core::harness::{
    emit_plot_data, generate_problem, run_experiment, sign_test, CoefficientSpec, ExperimentPlan, ExperimentResult, PlotAxis,
    Topology, TopologyConfig,
};
use abcd_core::oracle::{grid_search, GridSpec};
use abcd_core::problem_file::{read_problem, write_problem};
use abcd_core::{DistributedSolver, IntervalDomain, SolverConfig, Variant};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

/// Distributed continuous-DCOP solver on a simulated message-passing network.
#[derive(Parser)]
#[command(name = "abcd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem file and write the anytime trace.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, default_value = "abcd-e")]
        algo: Variant,
        /// Population size.
        #[arg(long = "S", default_value_t = 100)]
        s: usize,
        /// Elite size.
        #[arg(long = "M", default_value_t = 10)]
        m: usize,
        #[arg(long, default_value_t = 200)]
        iters: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trace CSV; printed to stdout when omitted.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// abcd-c only: update requests without improvement before a re-draw.
        /// Defaults to the number of agents.
        #[arg(long)]
        trial_limit: Option<usize>,
    },
    /// Generate a random problem file.
    Gen {
        #[arg(long)]
        topology: TopologyKind,
        #[arg(long)]
        n: usize,
        /// Erdős–Rényi edge probability.
        #[arg(long)]
        p: Option<f64>,
        /// Barabási–Albert edges per new node.
        #[arg(long)]
        m: Option<usize>,
        /// Watts–Strogatz ring degree; odd values are rounded up.
        #[arg(long)]
        k: Option<usize>,
        /// Watts–Strogatz rewiring probability.
        #[arg(long)]
        rewire: Option<f64>,
        #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
        coeff_lo: f64,
        #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
        coeff_hi: f64,
        #[arg(long, default_value_t = -10.0, allow_hyphen_values = true)]
        lb: f64,
        #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
        ub: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment plan and write traces, aggregates and plot data.
    Bench {
        #[arg(long)]
        plan: PathBuf,
        /// Output directory; overrides the plan's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Brute-force grid optimum of a small problem.
    Oracle {
        #[arg(long)]
        problem: PathBuf,
        /// Grid points per agent, endpoints included.
        #[arg(long, default_value_t = 201)]
        resolution: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TopologyKind {
    Er,
    Ba,
    Ws,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            eprintln!("{}", e.to_string().lines().next().unwrap_or("error: invalid arguments"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve { problem, algo, s, m, iters, seed, trace, trial_limit } => {
            solve(&problem, algo, s, m, iters, seed, trace.as_deref(), trial_limit)
        }
        Command::Gen { topology, n, p, m, k, rewire, coeff_lo, coeff_hi, lb, ub, seed, out } => {
            let kind = match topology {
                TopologyKind::Er => Topology::ErdosRenyi { p: p.context("--p is required for er")? },
                TopologyKind::Ba => Topology::BarabasiAlbert { m_edges: m.context("--m is required for ba")? },
                TopologyKind::Ws => Topology::WattsStrogatz {
                    k: k.context("--k is required for ws")?,
                    rewire: rewire.context("--rewire is required for ws")?,
                },
            };
            let topo = TopologyConfig { kind, n, seed };
            let coeff = CoefficientSpec { lo: coeff_lo, hi: coeff_hi };
            let domain = IntervalDomain::new(lb, ub)?;
            let inst = generate_problem(&topo, coeff, domain)?;
            let header = vec![
                format!("abcd gen {topo}"),
                format!("coefficients=uniform[{coeff_lo}, {coeff_hi}] domain=[{lb}, {ub}]"),
            ];
            write_problem(&out, &inst, &header)?;
            println!("wrote {} agents, {} constraints to {}", inst.n(), inst.constraints().len(), out.display());
            Ok(())
        }
        Command::Bench { plan, out } => bench(&plan, out),
        Command::Oracle { problem, resolution } => {
            let inst = read_problem(&problem)?;
            let (x, u) = grid_search(&inst, GridSpec::new(resolution))?;
            println!("# abcd oracle problem={} resolution={resolution}", problem.display());
            println!("utility={u}");
            println!("assignment={}", join(x.values()));
            Ok(())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn solve(
    problem: &Path,
    algo: Variant,
    s: usize,
    m: usize,
    iters: u64,
    seed: u64,
    trace: Option<&Path>,
    trial_limit: Option<usize>,
) -> Result<()> {
    let inst = read_problem(problem)?;
    let cfg = SolverConfig { trial_limit, ..SolverConfig::new(s, m, iters, seed) }.with_variant(algo);
    let header = vec![
        format!("abcd solve problem={} n={} constraints={}", problem.display(), inst.n(), inst.constraints().len()),
        format!(
            "algo={algo} S={s} M={m} iters={iters} seed={seed} phi={:?} cap_phi={:?} root={:?} trial_limit={}",
            cfg.phi_range,
            cfg.cap_phi_range,
            cfg.root,
            trial_limit.map_or_else(|| format!("n={}", inst.n()), |t| t.to_string())
        ),
    ];
    let out = DistributedSolver::solve(&inst, cfg)?;
    match trace {
        Some(path) => {
            out.trace.write_csv(path, &header).with_context(|| format!("writing {}", path.display()))?;
            println!("utility={}", out.utility);
            println!("assignment={}", join(out.assignment.values()));
            println!("messages={} rounds={}", out.counters.sent, out.rounds);
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(out.trace.to_csv(&header).as_bytes())?;
        }
    }
    Ok(())
}

fn bench(plan_path: &Path, out: Option<PathBuf>) -> Result<()> {
    let plan = ExperimentPlan::read(plan_path)?;
    let Some(dir) = out.or_else(|| plan.output.clone()) else {
        bail!("no output directory: pass --out or set \"output\" in the plan");
    };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let res = run_experiment(&plan, Some(&dir))?;
    write_plots(&res, &dir)?;
    println!("{} runs written to {}", res.runs.len(), dir.display());
    if plan.variants.contains(&Variant::AbcdE) && plan.variants.contains(&Variant::AbcdC) {
        for &s in &plan.population_sizes {
            for &m in &plan.elite_sizes {
                let e = res.instance_means(Variant::AbcdE, s, m);
                let c = res.instance_means(Variant::AbcdC, s, m);
                let t = sign_test(&e, &c);
                println!(
                    "S={s} M={m}: abcd-e better on {} instances, worse on {}, tied on {}; one-sided sign test p={:.3e}",
                    t.wins, t.losses, t.ties, t.p_value
                );
            }
        }
    }
    Ok(())
}

fn write_plots(res: &ExperimentResult, dir: &Path) -> Result<()> {
    let plan = &res.plan;
    let mut axes = vec![("iteration-vs-utility", PlotAxis::Iteration)];
    if plan.population_sizes.len() > 1 {
        axes.push(("S-vs-utility", PlotAxis::PopulationSize));
    }
    if plan.elite_sizes.len() > 1 {
        axes.push(("M-vs-utility", PlotAxis::EliteSize));
    }
    for &variant in &plan.variants {
        for &(name, axis) in &axes {
            emit_plot_data(res, axis, variant, &dir.join(format!("plot_{variant}_{name}.csv")))?;
        }
    }
    Ok(())
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

/// The error chain on one line, skipping causes already quoted by their parent.
fn one_line(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg.replace('\n', " ")
}
