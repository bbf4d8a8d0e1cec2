use clap::{Parser, Subcommand, ValueEnum};
use photonlab::analysis::{AnalysisError, AnalysisReport, InputProvenance, RunSummary};
use photonlab::config::{ConfigError, ExperimentConfig};
use photonlab::detection::{DetectionError, Simulation};
use photonlab::reproduce::{reproduce, ReproduceError, ReproduceOptions};
use photonlab::timetag::{
    read_tags_csv, write_tags_csv, Channel, RunKind, TagError, TagReader, TagWriter, TimeTagDataset,
};
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  invalid command line
  3  configuration or schema error
  4  file I/O error
  5  malformed tag file
  6  runs do not share a configuration
  7  simulation or solver failure
  8  analysis or fit failure
  9  unknown figure

Set PHOTONLAB_THREADS to cap the number of worker threads.";

#[derive(Parser)]
#[command(name = "photonlab", version, about = "Single-photon source and Raman memory simulator", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Qtt,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one run and write its time tags.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `run.master_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `run.n_trials`.
        #[arg(long)]
        trials: Option<u64>,
        /// Overrides `run.kind` (input_only, storage, noise_only).
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "qtt")]
        format: Format,
    },
    /// Compute memory figures and g² from an input, storage and noise run.
    Analyze {
        /// Supplies the analysis windows; defaults apply otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        storage: PathBuf,
        #[arg(long)]
        noise: PathBuf,
        /// Largest trial separation for g²(n).
        #[arg(long, default_value_t = 5)]
        max_lag: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Regenerate the CSV bundle of one figure (2 to 6).
    Reproduce {
        figure: u8,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Trials per simulated run (figure 3).
        #[arg(long)]
        trials: Option<u64>,
    },
}

enum Failure {
    Config(String),
    Io(String),
    Format(String),
    Lineage(String),
    Simulation(String),
    Analysis(String),
    Figure(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 3,
            Failure::Io(_) => 4,
            Failure::Format(_) => 5,
            Failure::Lineage(_) => 6,
            Failure::Simulation(_) => 7,
            Failure::Analysis(_) => 8,
            Failure::Figure(_) => 9,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m)
            | Failure::Io(m)
            | Failure::Format(m)
            | Failure::Lineage(m)
            | Failure::Simulation(m)
            | Failure::Analysis(m)
            | Failure::Figure(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io(e) => Failure::Io(format!("config: {e}")),
            e => Failure::Config(e.to_string()),
        }
    }
}

impl From<TagError> for Failure {
    fn from(e: TagError) -> Self {
        match e {
            TagError::Io(e) => Failure::Io(e.to_string()),
            e => Failure::Format(e.to_string()),
        }
    }
}

impl From<DetectionError> for Failure {
    fn from(e: DetectionError) -> Self {
        match e {
            DetectionError::Config(m) => Failure::Config(m),
            e => Failure::Simulation(e.to_string()),
        }
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Lineage(m) => Failure::Lineage(m),
            AnalysisError::Tags(e) => e.into(),
            AnalysisError::Io(e) => Failure::Io(e.to_string()),
            e => Failure::Analysis(e.to_string()),
        }
    }
}

impl From<ReproduceError> for Failure {
    fn from(e: ReproduceError) -> Self {
        match e {
            ReproduceError::UnknownFigure(_) => Failure::Figure(e.to_string()),
            ReproduceError::Io(e) => Failure::Io(e.to_string()),
            ReproduceError::Csv(e) => Failure::Io(e.to_string()),
            ReproduceError::Analysis(e) => e.into(),
            ReproduceError::Detection(e) => e.into(),
            e => Failure::Simulation(e.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    match path {
        Some(p) => Ok(ExperimentConfig::load(p)?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn simulate(
    config: Option<&Path>,
    seed: Option<u64>,
    trials: Option<u64>,
    kind: Option<&str>,
    out: &Path,
    format: Format,
) -> Result<String, Failure> {
    let start = Instant::now();
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.run.master_seed = s;
    }
    if let Some(n) = trials {
        cfg.run.n_trials = n;
    }
    if let Some(k) = kind {
        cfg.run.kind = RunKind::from_name(k).ok_or_else(|| Failure::Config(format!("unknown run kind {k:?}")))?;
    }
    if cfg.run.n_trials > u32::MAX as u64 + 1 {
        return Err(Failure::Config("n_trials must fit the 32-bit trial index".into()));
    }
    let sim = Simulation::new(&cfg, cfg.run.kind)?;
    let (n, seed) = (cfg.run.n_trials, cfg.run.master_seed);
    let mut clicks = 0u64;
    match format {
        Format::Qtt => {
            let file = File::create(out).map_err(io_err(out))?;
            let mut w = TagWriter::new(file, sim.info)?;
            sim.stream(n, seed, |batch| {
                for r in batch {
                    clicks += (r.channel != Channel::Trigger) as u64;
                    w.push(r)?;
                }
                Ok::<(), TagError>(())
            })?;
            w.finish()?;
        }
        Format::Csv => {
            let ds = sim.run(n, seed);
            clicks = ds.records.iter().filter(|r| r.channel != Channel::Trigger).count() as u64;
            write_tags_csv(&ds, File::create(out).map_err(io_err(out))?)?;
        }
    }
    let bytes = std::fs::metadata(out).map_err(io_err(out))?.len();
    Ok(format!(
        "simulated {} run: {n} trials, {clicks} clicks, {bytes} bytes to {} in {:.2} s",
        cfg.run.kind.name(),
        out.display(),
        start.elapsed().as_secs_f64()
    ))
}

/// Hashes everything read through it.
struct Hashing<R> {
    inner: R,
    hash: Sha256,
}

impl<R: Read> Read for Hashing<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hash.update(&buf[..n]);
        Ok(n)
    }
}

fn summarize(path: &Path, cfg: &ExperimentConfig, max_lag: u32) -> Result<(RunSummary, InputProvenance), Failure> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut input = Hashing { inner: BufReader::with_capacity(1 << 20, file), hash: Sha256::new() };
    let with_path = |e: Failure| match e {
        Failure::Format(m) => Failure::Format(format!("{}: {m}", path.display())),
        e => e,
    };
    let summary = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let ds: TimeTagDataset = read_tags_csv(&mut input).map_err(|e| with_path(e.into()))?;
        RunSummary::from_dataset(&ds, &cfg.windows, max_lag).map_err(|e| with_path(e.into()))?
    } else {
        let reader = TagReader::new(&mut input).map_err(|e| with_path(e.into()))?;
        RunSummary::from_reader(reader, &cfg.windows, max_lag).map_err(|e| with_path(e.into()))?
    };
    // Anything the parser did not consume still belongs to the file hash.
    std::io::copy(&mut input, &mut std::io::sink()).map_err(io_err(path))?;
    let prov = InputProvenance {
        path: path.display().to_string(),
        sha256: hex::encode(input.hash.finalize()),
        kind: summary.info.kind,
        n_trials: summary.input.n_trials,
        config_hash: hex::encode(summary.info.config_hash),
    };
    Ok((summary, prov))
}

fn analyze(
    config: Option<&Path>,
    paths: [&Path; 3],
    max_lag: u32,
    out: &Path,
) -> Result<String, Failure> {
    let cfg = load_config(config)?;
    let mut summaries = Vec::new();
    let mut inputs = Vec::new();
    for p in paths {
        let (s, prov) = summarize(p, &cfg, max_lag)?;
        summaries.push(s);
        inputs.push(prov);
    }
    let report = AnalysisReport::build(&summaries[0], &summaries[1], &summaries[2], inputs)?;
    std::fs::write(out, report.to_json() + "\n").map_err(io_err(out))?;
    let f = &report.figures;
    let mut line = format!(
        "eta_wr {:.4}({:.4}) eta_w {:.4} eta_r {:.4} snr {:.1}({:.1}) mu1 {:.3e} -> {}",
        f.eta_wr.value,
        f.eta_wr.error,
        f.eta_w.value,
        f.eta_r.value,
        f.snr.value,
        f.snr.error,
        f.mu1.value,
        out.display()
    );
    if f.degenerate {
        eprintln!("warning: runs are degenerate; efficiencies are not meaningful");
        line.push_str(" [degenerate]");
    }
    if !f.clamped.is_empty() {
        eprintln!("warning: negative background-subtracted probabilities set to zero: {}", f.clamped.join(", "));
    }
    Ok(line)
}

fn run(cli: Cli) -> Result<String, Failure> {
    match cli.command {
        Command::Simulate { config, seed, trials, kind, out, format } => {
            simulate(config.as_deref(), seed, trials, kind.as_deref(), &out, format)
        }
        Command::Analyze { config, input, storage, noise, max_lag, out } => {
            analyze(config.as_deref(), [&input, &storage, &noise], max_lag, &out)
        }
        Command::Reproduce { figure, out, seed, trials } => {
            let start = Instant::now();
            let mut opts = ReproduceOptions { seed, ..ReproduceOptions::default() };
            if let Some(n) = trials {
                opts.trials = n;
            }
            let files = reproduce(figure, &out, &opts)?;
            Ok(format!(
                "figure {figure}: {} files in {} in {:.2} s",
                files.len(),
                out.display(),
                start.elapsed().as_secs_f64()
            ))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("PHOTONLAB_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
            }
            _ => eprintln!("warning: ignoring PHOTONLAB_THREADS={v:?}"),
        }
    }
    match run(cli) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
