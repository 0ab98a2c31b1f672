//! aggrisk: generate, validate, run, and benchmark aggregate risk
//! analyses from the command line.
//!
//! Exit codes are a stable contract: 0 success, 2 usage error, 3 I/O
//! failure, 4 invalid data. Every subcommand prints its resolved
//! configuration (including the seed) before doing work, so any output
//! can be replayed from its log.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use aggrisk::io::{
    read_elt_csv, read_portfolio_config, read_yet, read_ylt_csv, write_elt_csv,
    write_portfolio_config, write_yet, write_ylt_csv, EltSource, IoError, PortfolioConfig,
};
use aggrisk::{
    bench_chunk_sweep, bench_layouts, bench_oversubscription, bench_scaling, exceedance_curve,
    generate_portfolio, generate_yet, rpl_report, run_analysis, tvar, var, BenchError, BenchReport,
    EngineError, EventLossTable, GenError, GenSpec, LayoutKind, MetricsError, Precision,
    RunConfig, Workload, YearLossTable, YltScope,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "aggrisk",
    version,
    about = "Aggregate risk analysis: simulate portfolio losses over simulated years"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded workload: year event table, ELT files, portfolio config
    Gen(GenArgs),
    /// Check input files against the format and model invariants
    Validate(ValidateArgs),
    /// Run the analysis and write year loss tables
    Run(RunArgs),
    /// Derive EP curve, return-period losses, and VaR/TVaR from a YLT
    Metrics(MetricsArgs),
    /// Run a benchmark experiment and report timings
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    /// Fewest events per trial
    #[arg(long, default_value_t = 800)]
    events_min: u32,
    /// Most events per trial
    #[arg(long, default_value_t = 1500)]
    events_max: u32,
    /// Event catalog size; event ids run 1..=catalog
    #[arg(long, default_value_t = 1_000_000)]
    catalog: u32,
    /// Number of event loss tables (one layer covers them all)
    #[arg(long, default_value_t = 16)]
    elts: u32,
    /// Entries per event loss table
    #[arg(long, default_value_t = 10_000)]
    elt_entries: u32,
    /// Directory to write yet.bin, elt_<k>.csv, and portfolio.toml into
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Year event table binary to check
    #[arg(long)]
    yet: PathBuf,
    /// Portfolio config to check, including its ELT files
    #[arg(long)]
    portfolio: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    yet: PathBuf,
    #[arg(long)]
    portfolio: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Threads per worker slot; values above 1 oversubscribe on purpose
    #[arg(long, default_value_t = 1)]
    threads_per_slot: usize,
    /// Events staged per chunk during a trial
    #[arg(long, default_value_t = 256)]
    chunk: usize,
    /// Loss arithmetic precision: wide (f64) or narrow (f32)
    #[arg(long, default_value = "wide")]
    precision: String,
    /// Lookup layout: direct, combined, sorted, or hash
    #[arg(long, default_value = "direct")]
    layout: String,
    /// Directory for ylt_total.csv and per-layer YLT files
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    /// Year loss table CSV
    #[arg(long)]
    ylt: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = vec![2.0, 5.0, 10.0, 25.0, 50.0, 100.0, 250.0, 500.0, 1000.0])]
    return_periods: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.9, 0.95, 0.99, 0.995])]
    alphas: Vec<f64>,
    /// Directory for ep_curve.csv, rpl.csv, var_tvar.csv; omitted = stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Experiment {
    Scaling,
    Oversubscription,
    Layouts,
    Chunks,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum)]
    experiment: Experiment,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 5000)]
    trials: u64,
    #[arg(long, default_value_t = 80)]
    events_min: u32,
    #[arg(long, default_value_t = 120)]
    events_max: u32,
    #[arg(long, default_value_t = 50_000)]
    catalog: u32,
    #[arg(long, default_value_t = 8)]
    elts: u32,
    #[arg(long, default_value_t = 2_000)]
    elt_entries: u32,
    /// Timed repetitions per configuration (after one discarded warm-up)
    #[arg(long, default_value_t = 3)]
    reps: usize,
    /// Worker counts for the scaling experiment
    #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 2, 4, 8])]
    workers: Vec<usize>,
    /// Threads-per-slot values for the oversubscription experiment
    #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 2, 4])]
    slots: Vec<usize>,
    /// Layout names for the layouts experiment
    #[arg(long, value_delimiter = ',', default_values_t = vec!["direct".to_string(), "combined".to_string(), "sorted".to_string(), "hash".to_string()])]
    kinds: Vec<String>,
    /// Chunk sizes for the chunks experiment
    #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 16, 64, 256, 1024])]
    chunks: Vec<usize>,
    /// File for the CSV report; the table always goes to stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure carrying its exit code class.
enum CliError {
    Usage(String),
    Io(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Io(_) => 3,
            Self::Data(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Usage(msg) | Self::Io(msg) | Self::Data(msg) => msg,
        }
    }
}

impl From<IoError> for CliError {
    fn from(err: IoError) -> Self {
        match err {
            IoError::Io(_) => Self::Io(err.to_string()),
            _ => Self::Data(err.to_string()),
        }
    }
}

impl From<GenError> for CliError {
    fn from(err: GenError) -> Self {
        match err {
            GenError::InvalidSpec(_) => Self::Usage(err.to_string()),
            GenError::Model(_) => Self::Data(err.to_string()),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(err: EngineError) -> Self {
        match err {
            EngineError::InvalidConfig(_) => Self::Usage(err.to_string()),
            _ => Self::Data(err.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(err: MetricsError) -> Self {
        Self::Data(err.to_string())
    }
}

impl From<BenchError> for CliError {
    fn from(err: BenchError) -> Self {
        match err {
            BenchError::InvalidParams(_) => Self::Usage(err.to_string()),
            BenchError::Gen(inner) => inner.into(),
            BenchError::Engine(inner) => inner.into(),
            BenchError::ChecksumMismatch { .. } => Self::Data(err.to_string()),
        }
    }
}

/// Tags raw OS errors (missing file, permissions) with the path involved.
fn io_at(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |err| CliError::Io(format!("{}: {err}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Run(args) => cmd_run(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Bench(args) => cmd_bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.code())
        }
    }
}

fn cmd_gen(args: GenArgs) -> Result<(), CliError> {
    println!(
        "config: gen seed={} trials={} events={}..{} catalog={} elts={} elt-entries={} out-dir={}",
        args.seed,
        args.trials,
        args.events_min,
        args.events_max,
        args.catalog,
        args.elts,
        args.elt_entries,
        args.out_dir.display()
    );
    if args.elts == 0 || args.elts > 30 {
        return Err(CliError::Usage(format!(
            "--elts {} out of range: one layer covers 1 to 30 ELTs",
            args.elts
        )));
    }

    let spec = GenSpec::new(
        args.seed,
        args.trials,
        (args.events_min, args.events_max),
        args.catalog,
        args.elt_entries,
    );
    let yet = generate_yet(&spec)?;
    let (portfolio, elts) = generate_portfolio(&spec, 1, 1, args.elts)?;

    std::fs::create_dir_all(&args.out_dir).map_err(io_at(&args.out_dir))?;
    let yet_path = args.out_dir.join("yet.bin");
    let mut yet_file = BufWriter::new(File::create(&yet_path).map_err(io_at(&yet_path))?);
    let yet_bytes = write_yet(&yet, &mut yet_file)?;
    yet_file.flush().map_err(io_at(&yet_path))?;

    let mut sources = Vec::with_capacity(elts.len());
    for elt in &elts {
        let name = format!("elt_{}.csv", elt.elt_id);
        let path = args.out_dir.join(&name);
        let mut file = BufWriter::new(File::create(&path).map_err(io_at(&path))?);
        write_elt_csv(elt, &mut file)?;
        file.flush().map_err(io_at(&path))?;
        sources.push(EltSource { elt_id: elt.elt_id, path: name, terms: elt.terms });
    }
    let config_path = args.out_dir.join("portfolio.toml");
    let config_text = write_portfolio_config(&portfolio, &sources)?;
    std::fs::write(&config_path, config_text).map_err(io_at(&config_path))?;

    println!(
        "wrote {}: {} trials, {} events, {} bytes",
        yet_path.display(),
        yet.trials.len(),
        yet.total_events(),
        yet_bytes
    );
    println!(
        "wrote {} ELT files ({} entries each) and {}",
        elts.len(),
        args.elt_entries,
        config_path.display()
    );
    Ok(())
}

/// Reads a portfolio config and the ELT files it references, resolving
/// relative paths against the config file's directory.
fn load_portfolio(
    path: &Path,
) -> Result<(PortfolioConfig, Vec<EventLossTable>), CliError> {
    let text = std::fs::read_to_string(path).map_err(io_at(path))?;
    let config = read_portfolio_config(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut elts = Vec::with_capacity(config.elt_sources.len());
    for source in &config.elt_sources {
        let elt_path = base.join(&source.path);
        let file = File::open(&elt_path).map_err(io_at(&elt_path))?;
        let elt = read_elt_csv(&mut BufReader::new(file), source.elt_id, source.terms)
            .map_err(|err| CliError::Data(format!("{}: {err}", elt_path.display())))?;
        elts.push(elt);
    }
    Ok((config, elts))
}

fn load_yet(path: &Path) -> Result<aggrisk::model::YearEventTable, CliError> {
    let file = File::open(path).map_err(io_at(path))?;
    read_yet(&mut BufReader::new(file))
        .map_err(|err| match CliError::from(err) {
            CliError::Data(msg) => CliError::Data(format!("{}: {msg}", path.display())),
            other => other,
        })
}

fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    println!(
        "config: validate yet={} portfolio={}",
        args.yet.display(),
        args.portfolio.as_ref().map_or("-".to_string(), |p| p.display().to_string())
    );
    let yet = load_yet(&args.yet)?;
    println!(
        "yet ok: {} trials, {} events, catalog {}",
        yet.trials.len(),
        yet.total_events(),
        yet.catalog_size
    );
    if let Some(portfolio_path) = &args.portfolio {
        let (config, elts) = load_portfolio(portfolio_path)?;
        for elt in &elts {
            if elt.max_event_id() > yet.catalog_size {
                return Err(CliError::Data(format!(
                    "ELT {} references event {} beyond the table's catalog size {}",
                    elt.elt_id,
                    elt.max_event_id(),
                    yet.catalog_size
                )));
            }
        }
        let layers = config.portfolio.layers().count();
        let entries: usize = elts.iter().map(|e| e.entries().len()).sum();
        println!(
            "portfolio ok: {} programs, {} layers, {} ELT files, {} entries",
            config.portfolio.programs.len(),
            layers,
            elts.len(),
            entries
        );
    }
    Ok(())
}

/// File name for one scope's year loss table.
fn ylt_file_name(scope: &YltScope) -> String {
    match scope {
        YltScope::Layer { program_id, layer_id } => format!("ylt_p{program_id}_l{layer_id}.csv"),
        YltScope::PortfolioTotal => "ylt_total.csv".to_string(),
    }
}

fn write_ylt_file(dir: &Path, table: &YearLossTable<f64>) -> Result<PathBuf, CliError> {
    let path = dir.join(ylt_file_name(&table.scope));
    let mut file = BufWriter::new(File::create(&path).map_err(io_at(&path))?);
    write_ylt_csv(table, &mut file)?;
    file.flush().map_err(io_at(&path))?;
    Ok(path)
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let precision = Precision::parse(&args.precision).ok_or_else(|| {
        CliError::Usage(format!("--precision {}: expected wide or narrow", args.precision))
    })?;
    let layout = LayoutKind::parse(&args.layout).ok_or_else(|| {
        CliError::Usage(format!(
            "--layout {}: expected direct, combined, sorted, or hash",
            args.layout
        ))
    })?;
    println!(
        "config: run yet={} portfolio={} workers={} threads-per-slot={} chunk={} precision={} layout={} out={}",
        args.yet.display(),
        args.portfolio.display(),
        args.workers,
        args.threads_per_slot,
        args.chunk,
        precision,
        layout,
        args.out.display()
    );

    let started = Instant::now();
    let yet = load_yet(&args.yet)?;
    let (config, elts) = load_portfolio(&args.portfolio)?;
    let file_seconds = started.elapsed().as_secs_f64();

    let run_config = RunConfig {
        workers: args.workers,
        threads_per_worker_slot: args.threads_per_slot,
        chunk_size: args.chunk,
        precision,
        layout,
    };
    let result = run_analysis(&config.portfolio, &yet, &elts, &run_config)?;

    std::fs::create_dir_all(&args.out).map_err(io_at(&args.out))?;
    let mut written = vec![write_ylt_file(&args.out, &result.portfolio_ylt)?];
    for table in &result.layer_ylts {
        written.push(write_ylt_file(&args.out, table)?);
    }

    println!(
        "load: {:.3}s files + {:.3}s lookup build",
        file_seconds, result.timing.load_seconds
    );
    println!(
        "compute: {:.3}s, {:.0} event-layer visits/s",
        result.timing.compute_seconds, result.timing.trial_events_per_sec
    );
    for path in &written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn metrics_sections(
    ylt: &YearLossTable<f64>,
    return_periods: &[f64],
    alphas: &[f64],
) -> Result<(String, String, String), CliError> {
    let curve = exceedance_curve(ylt)?;
    let mut ep = String::from("loss,exceedance_probability\n");
    for &(loss, probability) in &curve.points {
        writeln!(ep, "{loss},{probability}").expect("string write");
    }

    let mut rpl = String::from("return_period,pml\n");
    for (period, loss) in rpl_report(ylt, return_periods)? {
        writeln!(rpl, "{period},{loss}").expect("string write");
    }

    let mut vt = String::from("alpha,var,tvar\n");
    for &alpha in alphas {
        writeln!(vt, "{alpha},{},{}", var(ylt, alpha)?, tvar(ylt, alpha)?).expect("string write");
    }
    Ok((ep, rpl, vt))
}

fn cmd_metrics(args: MetricsArgs) -> Result<(), CliError> {
    let periods: Vec<String> = args.return_periods.iter().map(f64::to_string).collect();
    let alphas: Vec<String> = args.alphas.iter().map(f64::to_string).collect();
    println!(
        "config: metrics ylt={} return-periods={} alphas={} out={}",
        args.ylt.display(),
        periods.join(","),
        alphas.join(","),
        args.out.as_ref().map_or("-".to_string(), |p| p.display().to_string())
    );

    let file = File::open(&args.ylt).map_err(io_at(&args.ylt))?;
    let ylt = read_ylt_csv(&mut BufReader::new(file), YltScope::PortfolioTotal)?;
    let (ep, rpl, vt) = metrics_sections(&ylt, &args.return_periods, &args.alphas)?;

    match &args.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(io_at(dir))?;
            for (name, text) in
                [("ep_curve.csv", &ep), ("rpl.csv", &rpl), ("var_tvar.csv", &vt)]
            {
                let path = dir.join(name);
                std::fs::write(&path, text).map_err(io_at(&path))?;
                println!("wrote {}", path.display());
            }
        }
        None => {
            println!("# exceedance curve\n{ep}");
            println!("# return period losses\n{rpl}");
            println!("# var/tvar\n{vt}");
        }
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    let experiment = match args.experiment {
        Experiment::Scaling => "scaling",
        Experiment::Oversubscription => "oversubscription",
        Experiment::Layouts => "layouts",
        Experiment::Chunks => "chunks",
    };
    println!(
        "config: bench experiment={experiment} seed={} trials={} events={}..{} catalog={} \
         elts={} elt-entries={} reps={}",
        args.seed,
        args.trials,
        args.events_min,
        args.events_max,
        args.catalog,
        args.elts,
        args.elt_entries,
        args.reps
    );

    let spec = GenSpec::new(
        args.seed,
        args.trials,
        (args.events_min, args.events_max),
        args.catalog,
        args.elt_entries,
    );
    let workload = Workload::generate(format!("cli-seed{}", args.seed), &spec, 1, 1, args.elts)?;

    let report: BenchReport = match args.experiment {
        Experiment::Scaling => bench_scaling(&workload, &args.workers, args.reps)?,
        Experiment::Oversubscription => {
            bench_oversubscription(&workload, &args.slots, args.reps)?
        }
        Experiment::Layouts => {
            let kinds = args
                .kinds
                .iter()
                .map(|name| {
                    LayoutKind::parse(name).ok_or_else(|| {
                        CliError::Usage(format!(
                            "--kinds {name}: expected direct, combined, sorted, or hash"
                        ))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            bench_layouts(&workload, &kinds, args.reps)?
        }
        Experiment::Chunks => bench_chunk_sweep(&workload, &args.chunks, args.reps)?,
    };

    print!("{}", report.render_table());
    if let Some(path) = &args.out {
        std::fs::write(path, report.to_csv()).map_err(io_at(path))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
