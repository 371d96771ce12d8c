//! `ibnr`: simulate, fit, nowcast, compare and reserve from the command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ibnr_core::eval::{backtest, format_table, BacktestConfig, ModelTag};
use ibnr_core::io::{self, TruthRecord};
use ibnr_core::mcmc::{convergence, run_chains, summarize};
use ibnr_core::nowcast::{nowcast_totals, svg_chart};
use ibnr_core::reserve::{format_currency, format_rate, reserve_table, CostModel, ReserveInput, ReserveTable};
use ibnr_core::synth::{generate, SynthConfig};
use ibnr_core::triangle::ingest_incidents;
use ibnr_core::{ChainConfig, Coefficients, MaskedTriangle, YearMonth};

const PSRF_THRESHOLD: f64 = 1.1;

#[derive(Debug, Parser)]
#[command(
    name = "ibnr",
    version,
    about = "Bayesian nowcasting of incurred-but-not-reported incident counts"
)]
struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a synthetic, fully observed triangle and its truth sidecar.
    Simulate(SimulateArgs),
    /// Sample the model posterior for a triangle or incident list.
    Fit(FitArgs),
    /// Nowcast the partially observed rows from posterior draws.
    Nowcast(NowcastArgs),
    /// Backtest the Bayesian model against the reserving baselines.
    Compare(CompareArgs),
    /// Turn a nowcast into a monetary reserve table.
    Reserve(ReserveArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long, default_value_t = 72)]
    rows: usize,
    #[arg(long, default_value_t = 12)]
    delays: usize,
    /// Coefficients a0,a1,a2,b0,b1,b2.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    params: Option<Vec<f64>>,
    #[arg(long, default_value = "2018-01")]
    origin: YearMonth,
    #[arg(long)]
    out: PathBuf,
    /// Truth sidecar path (default: `<out stem>.truth.csv`).
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Incident CSV (`id,breach_date,report_date`) or triangle CSV (`t,d1..dD`).
    #[arg(long)]
    data: PathBuf,
    /// Present time T (1-based month index); cuts a triangle back, or sets
    /// the binning cutoff for incidents. For fit and nowcast a fully
    /// developed triangle defaults to rows + 1.
    #[arg(long)]
    present: Option<usize>,
    /// First origin month (default: 2018-01 for triangles, earliest breach
    /// month for incidents).
    #[arg(long)]
    origin: Option<YearMonth>,
    /// Maximum delay D when binning incidents.
    #[arg(long, default_value_t = 12)]
    delays: usize,
}

#[derive(Debug, Args)]
struct ChainArgs {
    /// Named preset: desk, paper-scale or paper-empirical.
    #[arg(long, default_value = "desk")]
    preset: String,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    /// Total iterations per chain, burn-in included.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
}

impl ChainArgs {
    fn config(&self, seed: u64) -> Result<ChainConfig, CliError> {
        let mut c = ChainConfig::preset(&self.preset, seed)?;
        if let Some(v) = self.chains {
            c.n_chains = v;
        }
        if let Some(v) = self.burnin {
            c.burn_in = v;
        }
        if let Some(v) = self.iters {
            c.total_iterations = v;
        }
        if let Some(v) = self.thin {
            c.thin = v;
        }
        c.validate()?;
        if c.n_chains < 2 {
            return Err(CliError::Input(format!(
                "convergence diagnostics need at least 2 chains, got {}",
                c.n_chains
            )));
        }
        Ok(c)
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    chains: ChainArgs,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Write outputs and exit 0 even when some PSRF exceeds 1.1.
    #[arg(long)]
    allow_nonconverged: bool,
}

#[derive(Debug, Args)]
struct NowcastArgs {
    #[arg(long)]
    posterior: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Months to move the present back (default: D − 1, the latest cut with
    /// complete held-out totals).
    #[arg(long)]
    holdout: Option<usize>,
    #[arg(long, default_value = "m0,m1,m2,m3,m4")]
    models: String,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[command(flatten)]
    chains: ChainArgs,
    /// Bootstrap resamples for M3.
    #[arg(long, default_value_t = 1000)]
    replicates: usize,
    /// Table CSV `model,rmse,mae`.
    #[arg(long)]
    out: PathBuf,
    /// Per-row predictions CSV `model,t,point,realized`.
    #[arg(long)]
    points: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReserveArgs {
    #[arg(long)]
    nowcast: PathBuf,
    /// Cost per incident, in millions.
    #[arg(long, default_value_t = CostModel::DEFAULT_COST, allow_hyphen_values = true)]
    cost: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Numerical(String),
    Convergence(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Convergence(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Convergence(m) => write!(f, "not converged: {m}"),
        }
    }
}

impl From<ibnr_core::Error> for CliError {
    fn from(e: ibnr_core::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn default_origin() -> YearMonth {
    YearMonth::new(2018, 1).expect("valid month")
}

fn is_incident_file(path: &Path) -> CliResult<bool> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let first = text.lines().next().unwrap_or("");
    Ok(first.split(',').next().map(str::trim) == Some("id"))
}

/// Loads the data file and cuts it to `--present`, keeping held-out cells.
fn load(args: &DataArgs) -> CliResult<MaskedTriangle> {
    load_with(args, true)
}

fn load_with(args: &DataArgs, cut_developed: bool) -> CliResult<MaskedTriangle> {
    if is_incident_file(&args.data)? {
        let records = io::read_path(&args.data, io::read_incidents)?;
        let origin = match args.origin {
            Some(o) => o,
            None => records
                .iter()
                .map(|r| YearMonth::of_date(r.breach_date()))
                .min()
                .ok_or_else(|| CliError::Input("incident file has no records".into()))?,
        };
        let present = match args.present {
            Some(p) => p,
            None => {
                let last = records
                    .iter()
                    .map(|r| YearMonth::of_date(r.report_date()).index())
                    .max()
                    .expect("records are nonempty");
                usize::try_from(last - origin.index() + 2)
                    .map_err(|_| CliError::Input("all reports precede the origin month".into()))?
            }
        };
        let tri = ingest_incidents(&records, origin, present, args.delays)?;
        log::info!(
            "binned {} incidents into {} rows (T = {present})",
            records.len(),
            tri.rows()
        );
        return Ok(MaskedTriangle::without_truth(tri));
    }
    let origin = args.origin.unwrap_or_else(default_origin);
    let tri = io::read_path(&args.data, |r| io::read_triangle(r, origin))?;
    let present = match args.present {
        Some(p) => p,
        // a fully developed grid (as written by `simulate`) is viewed from
        // the month after its last origin
        None if cut_developed && (1..=tri.rows()).all(|t| tri.is_row_complete(t)) => {
            log::info!("triangle is fully developed; using T = {}", tri.rows() + 1);
            tri.rows() + 1
        }
        None => tri.present(),
    };
    Ok(tri.mask_to_present(present)?)
}

fn sidecar_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map_or_else(|| "triangle".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.truth.csv"))
}

fn simulate(a: SimulateArgs) -> CliResult {
    let truth = match a.params.as_deref() {
        Some(&[a0, a1, a2, b0, b1, b2]) => Coefficients::from_array([a0, a1, a2, b0, b1, b2]),
        Some(v) => return Err(CliError::Input(format!("--params needs 6 values, got {}", v.len()))),
        None => Coefficients::REFERENCE,
    };
    if a.rows == 0 || a.delays == 0 {
        return Err(CliError::Input("rows and delays must be positive".into()));
    }
    let cfg = SynthConfig {
        rows: a.rows,
        max_delay: a.delays,
        truth,
        seed: a.seed,
        origin: a.origin,
    };
    let s = generate(&cfg)?;
    io::write_path(&a.out, |w| io::write_triangle(w, &s.triangle))?;
    let record = TruthRecord {
        coef: truth,
        seed: a.seed,
        rows: a.rows,
        max_delay: a.delays,
        origin: a.origin,
    };
    let truth_path = a.truth.unwrap_or_else(|| sidecar_path(&a.out));
    io::write_path(&truth_path, |w| io::write_truth(w, &record))?;
    eprintln!(
        "wrote {}×{} triangle to {} and truth to {}",
        a.rows,
        a.delays,
        a.out.display(),
        truth_path.display()
    );
    Ok(())
}

fn fit(a: FitArgs) -> CliResult {
    let cfg = a.chains.config(a.seed)?;
    let masked = load(&a.data)?;
    let tri = &masked.triangle;
    eprintln!(
        "fitting {} rows × {} delays (T = {}), {} chains × {} iterations",
        tri.rows(),
        tri.max_delay(),
        tri.present(),
        cfg.n_chains,
        cfg.total_iterations
    );
    let samples = run_chains(tri, &cfg)?;
    let summary = summarize(&samples)?;
    let report = convergence(&samples)?;
    fs::create_dir_all(&a.out_dir)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", a.out_dir.display())))?;
    io::write_path(&a.out_dir.join("posterior.csv"), |w| io::write_posterior(w, &samples))?;
    io::write_path(&a.out_dir.join("summary.csv"), |w| io::write_summary(w, &summary))?;
    io::write_path(&a.out_dir.join("convergence.csv"), |w| {
        io::write_convergence(w, &report)
    })?;

    println!("{:<9} {:>9} {:>22} {:>7}", "param", "mean", "95% interval", "psrf");
    for (j, name) in ibnr_core::ModelParams::NAMES.iter().enumerate() {
        let s = summary[j];
        println!(
            "{name:<9} {:>9.4} ({:>9.4}, {:>9.4}) {:>7.4}",
            s.mean, s.q025, s.q975, report.psrf[j]
        );
    }
    println!("mpsrf {:.4}", report.mpsrf);

    if !report.converged(PSRF_THRESHOLD) {
        let bad: Vec<String> = ibnr_core::ModelParams::NAMES
            .iter()
            .zip(&report.psrf)
            .filter(|(_, &r)| !(r < PSRF_THRESHOLD))
            .map(|(n, r)| format!("{n}={r:.3}"))
            .collect();
        let msg = format!("PSRF above {PSRF_THRESHOLD} for {}", bad.join(", "));
        if a.allow_nonconverged {
            eprintln!("warning: {msg}");
        } else {
            return Err(CliError::Convergence(msg));
        }
    }
    Ok(())
}

fn nowcast(a: NowcastArgs) -> CliResult {
    let samples = io::read_path(&a.posterior, io::read_posterior)?;
    let masked = load(&a.data)?;
    let mut result = nowcast_totals(&samples, &masked.triangle, a.seed)?;
    result.attach_realized(&masked);
    io::write_path(&a.out, |w| io::write_nowcast(w, &result))?;
    if let Some(svg) = &a.svg {
        fs::write(svg, svg_chart(&result))
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", svg.display())))?;
    }
    println!(
        "{:>4} {:>8} {:>9} {:>8} {:>17} {:>9}",
        "t", "month", "observed", "nowcast", "95% interval", "realized"
    );
    for r in &result.rows {
        println!(
            "{:>4} {:>8} {:>9} {:>8.1} ({:>7.1}, {:>7.1}) {:>9}",
            r.t,
            r.origin_month.to_string(),
            r.observed_partial,
            r.point,
            r.lo95,
            r.hi95,
            r.realized.map_or_else(|| "--".to_string(), |v| v.to_string())
        );
    }
    Ok(())
}

fn compare(a: CompareArgs) -> CliResult {
    let models = ModelTag::parse_list(&a.models)?;
    let chains = a.chains.config(a.seed)?;
    let full = load_with(&a.data, false)?.triangle;
    let holdout = a.holdout.unwrap_or(full.max_delay().saturating_sub(1));
    let cut = full
        .present()
        .checked_sub(holdout)
        .ok_or_else(|| CliError::Input(format!("holdout {holdout} exceeds the present time {}", full.present())))?;
    let masked = full.mask_to_present(cut)?;
    let cfg = BacktestConfig {
        chains,
        seed: a.seed,
        bootstrap_replicates: a.replicates,
    };
    let bt = backtest(&masked, &models, &cfg)?;
    io::write_path(&a.out, |w| io::write_comparison_table(w, &bt.scores))?;
    if let Some(p) = &a.points {
        io::write_path(p, |w| io::write_comparison_points(w, &bt))?;
    }
    print!("{}", format_table(&bt.scores));
    Ok(())
}

fn print_reserve(table: &ReserveTable) {
    println!(
        "{:<7} {:>10} {:>10} {:>9} {:>10} {:>8}",
        "month", "estimated", "paid", "IBNR", "ultimate", "IBNR(%)"
    );
    for r in &table.rows {
        println!(
            "{:<7} {:>10} {:>10} {:>9} {:>10} {:>8}",
            r.month.short_label(),
            format_currency(r.estimated),
            format_currency(r.paid),
            format_currency(r.ibnr),
            r.ultimate.map_or_else(|| "--".to_string(), format_currency),
            format_rate(r.ibnr_change_pct)
        );
    }
    println!(
        "{:<7} {:>10} {:>10} {:>9} {:>10}",
        "total",
        format_currency(table.total_estimated),
        format_currency(table.total_paid),
        format_currency(table.total_ibnr),
        table.total_ultimate.map_or_else(|| "--".to_string(), format_currency)
    );
}

fn reserve(a: ReserveArgs) -> CliResult {
    let cost = CostModel::new(a.cost)?;
    let nc = io::read_path(&a.nowcast, io::read_nowcast)?;
    let inputs: Vec<ReserveInput> = nc.rows.iter().map(ReserveInput::from).collect();
    let table = reserve_table(&inputs, cost)?;
    io::write_path(&a.out, |w| io::write_reserve(w, &table))?;
    print_reserve(&table);
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Input(format!("cannot size the thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Nowcast(a) => nowcast(a),
        Command::Compare(a) => compare(a),
        Command::Reserve(a) => reserve(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
