use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use freeconv::harness::{self, DensityConfig, ExperimentConfig, Format, TransformConfig};
use freeconv::Error;

#[derive(Parser)]
#[command(name = "freeconv", version, about = "Free convolution densities of triangular-array rows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Density of one row as a CSV curve.
    Density(Common),
    /// Superconvergence experiment over an n-schedule.
    Superconv(Common),
    /// Evaluate G, F, Psi, Eta, Phi or Sigma of a measure at points.
    Transform(Common),
    /// Run the built-in invariant suite.
    Selftest(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum)]
    format: Option<OutFormat>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    verbose: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
    Svg,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Csv => Format::Csv,
            OutFormat::Json => Format::Json,
            OutFormat::Svg => Format::Svg,
        }
    }
}

const EXIT_CONFIG: u8 = 2;
const EXIT_PIPELINE: u8 = 3;
const EXIT_SELFTEST: u8 = 4;

enum Failure {
    Config(String),
    Pipeline(String),
    Selftest,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Io(_) => Failure::Config(e.to_string()),
            e => Failure::Pipeline(e.to_string()),
        }
    }
}

fn read_config(c: &Common) -> Result<String, Failure> {
    let path = c.config.as_ref().ok_or_else(|| Failure::Config("config error: --config is required".into()))?;
    std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("config error: {}: {e}", path.display())))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Pipeline(e.to_string()))?;
    std::fs::write(dir.join(name), text).map_err(|e| Failure::Pipeline(e.to_string()))
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| Failure::Pipeline(e.to_string()))
}

fn density(c: &Common) -> Result<(), Failure> {
    let mut cfg = DensityConfig::from_json(&read_config(c)?)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    let curve = cfg.run()?;
    if c.verbose {
        eprintln!("n = {}: {} points, {} excluded", cfg.n, curve.len(), curve.excluded);
    }
    match c.format.map(Format::from).unwrap_or(Format::Csv) {
        Format::Csv => write(&c.out, "density.csv", &harness::density_csv(&curve)),
        Format::Json => write(&c.out, "density.json", &to_json(&curve)?),
        Format::Svg => {
            let sample = harness::CurveSample {
                label: format!("n={}", cfg.n),
                x: curve.x.clone(),
                p: curve.p.clone(),
            };
            write(&c.out, "density.svg", &harness::curves_svg(&[sample]))
        }
    }
}

fn superconv(c: &Common) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::from_json(&read_config(c)?)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    let report = harness::run_experiment(&cfg)?;
    if c.verbose {
        for e in &report.entries {
            match &e.error {
                None => eprintln!("n = {}: sup_err {:?}", e.n, e.sup_err),
                Some(msg) => eprintln!("n = {}: {msg}", e.n),
            }
        }
    }
    let formats = match c.format {
        Some(f) => vec![f.into()],
        None => cfg.outputs.formats.clone(),
    };
    std::fs::create_dir_all(&c.out).map_err(|e| Failure::Pipeline(e.to_string()))?;
    for f in formats {
        let path = c.out.join(format!("{}.{}", cfg.outputs.stem, f.extension()));
        harness::emit(&report, f, &path).map_err(|e| Failure::Pipeline(e.to_string()))?;
    }
    if report.all_failed() {
        return Err(Failure::Pipeline("every n of the schedule failed".into()));
    }
    Ok(())
}

fn transform(c: &Common) -> Result<(), Failure> {
    let cfg = TransformConfig::from_json(&read_config(c)?)?;
    let values = cfg.run();
    if c.verbose {
        for v in values.iter().filter(|v| v.error.is_some()) {
            eprintln!("{:?}: {}", v.z, v.error.as_deref().unwrap_or_default());
        }
    }
    match c.format.map(Format::from).unwrap_or(Format::Csv) {
        Format::Csv => write(&c.out, "transform.csv", &harness::transform_csv(&values)),
        Format::Json => write(&c.out, "transform.json", &to_json(&values)?),
        Format::Svg => Err(Failure::Config("config error: transform output is csv or json".into())),
    }
}

fn selftest(c: &Common) -> Result<(), Failure> {
    let checks = harness::selftest();
    let mut ok = true;
    for k in &checks {
        ok &= k.passed;
        if c.verbose || !k.passed {
            println!("{} {}: {}", if k.passed { "PASS" } else { "FAIL" }, k.name, k.detail);
        }
    }
    println!("{}/{} checks passed", checks.iter().filter(|k| k.passed).count(), checks.len());
    if ok {
        Ok(())
    } else {
        Err(Failure::Selftest)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Density(c) => density(c),
        Command::Superconv(c) => superconv(c),
        Command::Transform(c) => transform(c),
        Command::Selftest(c) => selftest(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Pipeline(msg)) => {
            eprintln!("pipeline error: {msg}");
            ExitCode::from(EXIT_PIPELINE)
        }
        Err(Failure::Selftest) => ExitCode::from(EXIT_SELFTEST),
    }
}
