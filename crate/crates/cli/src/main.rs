use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use grouse::harness::{self, ProblemSpec, SampleSize, SweepGrid, SweepOptions};
use grouse::{io, lab, Basis, Error};

/// Seeded GROUSE runs, phase sweeps and Monte-Carlo validation reports.
#[derive(Parser, Debug)]
#[command(name = "grouse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full-data run; writes the ε trajectory.
    Full(RunArgs),
    /// Partial-data run on q sampled coordinates per step; writes the ε trajectory.
    Partial(RunArgs),
    /// Mean convergence factor X over an (n, d, q) grid.
    Sweep(SweepArgs),
    /// Eigenvalue window of sampled Gram matrices (with-replacement Ω).
    ValidateConcentration(ConcentrationArgs),
    /// Lower bound on the sampled residual (with-replacement Ω).
    ValidateResidual(ResidualArgs),
    /// Mean of sin²θ against ε/d.
    ValidateExpectation(ExpectationArgs),
    /// Fraction of sampled Ω failing the eigenvalue gate on a generated start.
    SkipRate(SkipArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long, required_unless_present = "spec")]
    n: Option<usize>,
    #[arg(long, required_unless_present = "spec")]
    d: Option<usize>,
    /// Coordinates per step, or "full" (ignored by `full`).
    #[arg(long)]
    q: Option<SampleSize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, required_unless_present = "spec")]
    iters: Option<usize>,
    #[arg(long, required_unless_present = "spec")]
    seed: Option<u64>,
    #[arg(long)]
    init_noise_std: Option<f64>,
    #[arg(long)]
    bypass_gate: bool,
    /// Read the problem from a TOML run-spec; other problem flags override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Write the effective run-spec as TOML.
    #[arg(long)]
    spec_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    d: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    q: Vec<usize>,
    #[arg(long, default_value_t = harness::DEFAULT_TRIALS_PER_CELL)]
    trials: usize,
    #[arg(long, default_value_t = harness::DEFAULT_ITERS)]
    iters: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    init_noise_std: f64,
    #[arg(long)]
    bypass_gate: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ConcentrationArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    /// Multiset size; defaults to the smallest size meeting the hypothesis.
    #[arg(long)]
    omega_size: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 2000)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ResidualArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    /// Subspace error of the tested basis.
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    omega_size: usize,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 2000)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ExpectationArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 50_000)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SkipArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    /// Defaults to ⌈d ln d ln n⌉.
    #[arg(long)]
    q: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    init_noise_std: f64,
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::Csv(_) => 1,
        Error::InvalidParameter(_) | Error::Parse(_) | Error::Shape(_) | Error::InvalidObservation(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error[{}]: {err}", err.name());
            ExitCode::from(exit_code(&err))
        }
    }
}

fn execute(command: Command) -> grouse::Result<String> {
    match command {
        Command::Full(args) => run(args, true),
        Command::Partial(args) => run(args, false),
        Command::Sweep(args) => sweep(args),
        Command::ValidateConcentration(args) => concentration(args),
        Command::ValidateResidual(args) => residual(args),
        Command::ValidateExpectation(args) => expectation(args),
        Command::SkipRate(args) => skip_rate(args),
    }
}

fn create(path: &Path) -> grouse::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn problem_spec(args: &RunArgs, full: bool) -> grouse::Result<ProblemSpec> {
    let mut spec = match &args.spec {
        Some(path) => ProblemSpec::from_toml(&fs::read_to_string(path)?)?,
        None => {
            let q = match (full, args.q) {
                (true, _) => SampleSize::Full,
                (false, Some(q)) => q,
                (false, None) => return Err(Error::InvalidParameter("--q is required".into())),
            };
            // clap guarantees these without --spec.
            ProblemSpec::new(
                args.n.unwrap_or_default(),
                args.d.unwrap_or_default(),
                q,
                args.iters.unwrap_or_default(),
                args.seed.unwrap_or_default(),
            )
        }
    };
    if let Some(n) = args.n {
        spec.n = n;
    }
    if let Some(d) = args.d {
        spec.d = d;
    }
    if let Some(q) = args.q {
        spec.q = q;
    }
    if full {
        spec.q = SampleSize::Full;
    }
    if let Some(iters) = args.iters {
        spec.iters = iters;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(alpha) = args.alpha {
        spec.alpha = alpha;
    }
    if let Some(std) = args.init_noise_std {
        spec.init_noise_std = std;
    }
    spec.bypass_gate |= args.bypass_gate;
    spec.validate()?;
    Ok(spec)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_owned(), |v| format!("{v:e}"))
}

fn run(args: RunArgs, full: bool) -> grouse::Result<String> {
    let spec = problem_spec(&args, full)?;
    if let Some(path) = &args.spec_out {
        fs::write(path, spec.to_toml()?)?;
    }
    let result = if full {
        harness::run_full_trial(&spec)?
    } else {
        harness::run_partial_trial(&spec)?
    };
    let mut out = create(&args.out)?;
    io::write_trajectory(&mut out, &result)?;
    out.flush()?;
    let mut line = format!(
        "{} n={} d={} q={} iters={} final_epsilon={} X={}",
        if full { "full" } else { "partial" },
        spec.n,
        spec.d,
        spec.q,
        spec.iters,
        fmt_opt(result.final_epsilon()),
        fmt_opt(result.x_factor),
    );
    if full {
        line += &format!(" tail_slope={}", fmt_opt(result.tail_slope));
    } else {
        line += &format!(" gate_skips={}", result.gate_skips);
    }
    Ok(line)
}

fn sweep(args: SweepArgs) -> grouse::Result<String> {
    if args.trials == 0 || args.iters == 0 {
        return Err(Error::InvalidParameter("trials and iters must be ≥ 1".into()));
    }
    if !(args.alpha > 0.0 && args.alpha < 2.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 2), got {}", args.alpha)));
    }
    let grid = SweepGrid {
        ns: args.n,
        ds: args.d,
        qs: args.q,
    };
    let options = SweepOptions {
        alpha: args.alpha,
        init_noise_std: args.init_noise_std,
        bypass_gate: args.bypass_gate,
    };
    let cells = harness::sweep_phase(&grid, args.trials, args.iters, args.seed, &options)?;
    let mut out = create(&args.out)?;
    io::write_sweep(&mut out, &cells)?;
    out.flush()?;
    let populated: Vec<f64> = cells.iter().filter_map(|c| c.mean_x).collect();
    let skipped = cells.iter().filter(|c| c.trials == 0).count();
    let max_x = populated.iter().copied().fold(f64::NAN, f64::max);
    Ok(format!(
        "sweep cells={} skipped={} max_mean_X={}",
        cells.len(),
        skipped,
        fmt_opt(Some(max_x).filter(|x| x.is_finite()))
    ))
}

fn check_dims(n: usize, d: usize) -> grouse::Result<()> {
    if d == 0 || d >= n {
        return Err(Error::InvalidParameter(format!("need 0 < d < n, got n = {n}, d = {d}")));
    }
    Ok(())
}

fn concentration(args: ConcentrationArgs) -> grouse::Result<String> {
    check_dims(args.n, args.d)?;
    let (_, u) = harness::generate_pair(args.n, args.d, 0.0, args.seed)?;
    let omega_size = match args.omega_size {
        Some(m) => m,
        None => {
            if !(args.delta > 0.0 && args.delta < 1.0) {
                return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {}", args.delta)));
            }
            let mu = grouse::metrics::coherence_basis(&u);
            lab::gram_hypothesis_size(args.d, mu, args.delta).floor() as usize + 1
        }
    };
    let report = lab::validate_gram_concentration(&u, omega_size, args.delta, args.trials, args.seed)?;
    let mut out = create(&args.out)?;
    io::write_concentration(&mut out, &report.rows)?;
    out.flush()?;
    Ok(format!(
        "validate-concentration omega_size={} gamma={:.6} failure_rate={} allowed={:.6} hypothesis_met={}",
        report.omega_size,
        report.gamma,
        report.failure_rate,
        report.allowed_rate(),
        report.hypothesis_met
    ))
}

fn residual(args: ResidualArgs) -> grouse::Result<String> {
    check_dims(args.n, args.d)?;
    let (ubar, u) = harness::generate_pair(args.n, args.d, args.epsilon, args.seed)?;
    let report = lab::validate_residual_bound(&u, &ubar, args.omega_size, args.delta, args.trials, args.seed)?;
    let mut out = create(&args.out)?;
    io::write_residual(&mut out, &report.rows)?;
    out.flush()?;
    Ok(format!(
        "validate-residual asserted={} violation_rate={} allowed={:.6} median_xi={:.6} median_beta={:.6}",
        report.asserted,
        report.violation_rate,
        report.allowed_rate(),
        report.xi,
        report.beta
    ))
}

fn expectation(args: ExpectationArgs) -> grouse::Result<String> {
    check_dims(args.n, args.d)?;
    let (ubar, u) = harness::generate_pair(args.n, args.d, args.epsilon, args.seed)?;
    let eps = grouse::metrics::epsilon(&u, &ubar)?;
    let (mean, stderr) = lab::validate_sin_sq_expectation(&u, &ubar, args.trials, args.seed)?;
    let expected = eps / args.d as f64;
    let mut out = create(&args.out)?;
    writeln!(out, "epsilon,d,trials,mean,stderr,expected")?;
    writeln!(out, "{eps:?},{},{},{mean:?},{stderr:?},{expected:?}", args.d, args.trials)?;
    out.flush()?;
    Ok(format!(
        "validate-expectation mean={mean:e} stderr={stderr:e} expected={expected:e}"
    ))
}

fn skip_rate(args: SkipArgs) -> grouse::Result<String> {
    let q = args.q.unwrap_or_else(|| harness::q_log(args.n, args.d));
    let spec = ProblemSpec {
        init_noise_std: args.init_noise_std,
        ..ProblemSpec::new(args.n, args.d, SampleSize::Entries(q), 1, args.seed)
    };
    spec.validate()?;
    let (_, u0): (Basis, Basis) = harness::generate_problem(&spec)?;
    let rate = lab::estimate_skip_rate(&u0, q, args.trials, args.seed)?;
    let mut out = create(&args.out)?;
    writeln!(out, "n,d,q,trials,skip_rate")?;
    writeln!(out, "{},{},{q},{},{rate:?}", args.n, args.d, args.trials)?;
    out.flush()?;
    Ok(format!("skip-rate q={q} skip_rate={rate}"))
}
