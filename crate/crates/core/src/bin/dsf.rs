use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dsf::experiment::{
    run_experiment, ConfigOverrides, ExperimentConfig, ExperimentKind, OutputTarget,
};
use dsf::Error;

/// Directed spanning forest experiments.
#[derive(Parser, Debug)]
#[command(name = "dsf", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Class counts of paths started near the west edge of a long strip.
    DsfCoalescence(Flags),
    /// Exit-edge counts of growing rectangles and their log-log slope.
    EtaScaling(Flags),
    /// Edge lengths from cells with at least two east exits.
    EdgeBound(Flags),
    /// Class counts with Boolean holes removed from the point process.
    BooleanCoalescence(Flags),
    /// Crossings of a vertical segment lying on long backward chains.
    BiInfiniteCensus(Flags),
    /// Lattice forest, its dual, and meeting probabilities of coalescing walks.
    LatticeSuite(Flags),
    /// SVG snapshot of a forest with highlighted paths.
    Render(Flags),
}

#[derive(Args, Debug)]
struct Flags {
    /// JSON file with configuration values; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<u64>,
    /// x_min,x_max,y_min,y_max
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    window: Option<Vec<f64>>,
    #[arg(long)]
    intensity: Option<f64>,
    /// Intensity of the Boolean germs.
    #[arg(long)]
    lambda: Option<f64>,
    /// Radius of the Boolean grains.
    #[arg(long)]
    r: Option<f64>,
    /// Rectangle sizes for eta-scaling.
    #[arg(long = "L", value_delimiter = ',')]
    ls: Option<Vec<u32>>,
    /// Cell half-width.
    #[arg(long)]
    m: Option<u32>,
    /// Cell half-height.
    #[arg(long = "M")]
    big_m: Option<u32>,
    /// x,y_lo,y_hi of the census segment.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    segment: Option<Vec<f64>>,
    /// Depth thresholds for the census.
    #[arg(long = "D", value_delimiter = ',')]
    depths: Option<Vec<usize>>,
    /// Abscissae at which classes are counted.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x_lines: Option<Vec<f64>>,
    /// Paths start at points with abscissa at most this value.
    #[arg(long, allow_hyphen_values = true)]
    start_x_max: Option<f64>,
    /// Paths start at points with |ordinate| at most this value.
    #[arg(long)]
    start_abs_y: Option<f64>,
    /// Lattice width.
    #[arg(long = "W")]
    lattice_w: Option<u32>,
    /// Lattice half-height.
    #[arg(long = "H")]
    lattice_h: Option<u32>,
    /// Initial distance between the two walks.
    #[arg(long)]
    separation: Option<u64>,
    /// Walk horizon.
    #[arg(long = "T")]
    horizon: Option<u64>,
    /// Number of lattice forests checked structurally.
    #[arg(long)]
    instances: Option<u64>,
    /// lo,hi abscissa band of highlighted path starts.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    highlight_x: Option<Vec<f64>>,
    /// SVG width in pixels.
    #[arg(long)]
    width_px: Option<f64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output root; defaults to $DSF_OUT_DIR or ./out.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Run directory name; defaults to a timestamp.
    #[arg(long)]
    tag: Option<String>,
    /// Output file for render.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Flags {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            seed: self.seed,
            replicates: self.replicates,
            window: self.window.clone(),
            intensity: self.intensity,
            lambda: self.lambda,
            r: self.r,
            ls: self.ls.clone(),
            m: self.m,
            big_m: self.big_m,
            segment: self.segment.clone(),
            depths: self.depths.clone(),
            x_lines: self.x_lines.clone(),
            start_x_max: self.start_x_max,
            start_abs_y: self.start_abs_y,
            lattice_w: self.lattice_w,
            lattice_h: self.lattice_h,
            separation: self.separation,
            horizon: self.horizon,
            instances: self.instances,
            highlight_x: self.highlight_x.clone(),
            width_px: self.width_px,
        }
    }
}

const EXIT_VIOLATION: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn run(kind: ExperimentKind, flags: Flags) -> Result<bool, Error> {
    let file = match &flags.config {
        Some(path) => ConfigOverrides::from_json_file(path)?,
        None => ConfigOverrides::default(),
    };
    let cfg = ExperimentConfig::resolve(kind, flags.overrides().over(file))?;
    let jobs = flags.jobs.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    let out = OutputTarget {
        root: flags
            .out_dir
            .clone()
            .unwrap_or_else(OutputTarget::default_root),
        tag: flags.tag.clone(),
        file: flags.out.clone(),
    };
    let outcome = run_experiment(&cfg, jobs, &out, &mut std::io::stdout().lock())?;
    for inv in outcome.invariants.iter().filter(|i| !i.passed) {
        eprintln!("invariant violated: {}: {}", inv.name, inv.detail);
    }
    println!("output: {}", outcome.output.display());
    Ok(outcome.all_passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, flags) = match cli.command {
        Command::DsfCoalescence(f) => (ExperimentKind::DsfCoalescence, f),
        Command::EtaScaling(f) => (ExperimentKind::EtaScaling, f),
        Command::EdgeBound(f) => (ExperimentKind::EdgeBound, f),
        Command::BooleanCoalescence(f) => (ExperimentKind::BooleanCoalescence, f),
        Command::BiInfiniteCensus(f) => (ExperimentKind::BiInfiniteCensus, f),
        Command::LatticeSuite(f) => (ExperimentKind::LatticeSuite, f),
        Command::Render(f) => (ExperimentKind::Render, f),
    };
    match run(kind, flags) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VIOLATION),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
