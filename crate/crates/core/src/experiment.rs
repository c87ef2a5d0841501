//! Seeded experiment runner.
//!
//! Replicate `r` of a run with master seed `s` uses the seed `derive_seed(s, r)`; inside a
//! replicate the point process uses `derive_seed(seed, 0)` and the Boolean germs
//! `derive_seed(seed, 1)`. Replicates run on a bounded pool and are merged in index
//! order, so reports do not depend on the number of workers.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsf::{build_dsf, class_count_profile, Cell, ClassCount};
use crate::error::{Error, Result};
use crate::io::{format_real, write_depth_census_csv, write_eta_reports_csv, write_json, DpReport};
use crate::lattice::{
    build_dual, check_no_crossing, lattice_coalescence_probability_dp,
    lattice_coalescence_simulate, sample_lattice, CoalescenceEstimate, EnsembleParams, Orientation,
};
use crate::point_process::{remove_covered, sample_boolean, sample_ppp, BooleanModel, Window};
use crate::render::{render_forest, RenderSpec};
use crate::rng::derive_seed;
use crate::statistics::{
    census_depth_profile, check_edge_length_bound, count_exit_edges, fit_scaling, DepthCensus,
    EdgeBoundCheck, EtaReport, VerticalSegment,
};

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "DSF_OUT_DIR";
/// Free space around the exit rectangle so that every edge leaving it is certified.
pub const ETA_WINDOW_PAD: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    DsfCoalescence,
    EtaScaling,
    EdgeBound,
    BooleanCoalescence,
    BiInfiniteCensus,
    LatticeSuite,
    Render,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::DsfCoalescence => "dsf-coalescence",
            ExperimentKind::EtaScaling => "eta-scaling",
            ExperimentKind::EdgeBound => "edge-bound",
            ExperimentKind::BooleanCoalescence => "boolean-coalescence",
            ExperimentKind::BiInfiniteCensus => "bi-infinite-census",
            ExperimentKind::LatticeSuite => "lattice-suite",
            ExperimentKind::Render => "render",
        }
    }
}

/// Partial configuration, as read from a JSON file or from command-line flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub seed: Option<u64>,
    pub replicates: Option<u64>,
    pub window: Option<Vec<f64>>,
    pub intensity: Option<f64>,
    pub lambda: Option<f64>,
    pub r: Option<f64>,
    #[serde(rename = "L")]
    pub ls: Option<Vec<u32>>,
    pub m: Option<u32>,
    #[serde(rename = "M")]
    pub big_m: Option<u32>,
    pub segment: Option<Vec<f64>>,
    #[serde(rename = "D")]
    pub depths: Option<Vec<usize>>,
    pub x_lines: Option<Vec<f64>>,
    pub start_x_max: Option<f64>,
    pub start_abs_y: Option<f64>,
    #[serde(rename = "W")]
    pub lattice_w: Option<u32>,
    #[serde(rename = "H")]
    pub lattice_h: Option<u32>,
    pub separation: Option<u64>,
    #[serde(rename = "T")]
    pub horizon: Option<u64>,
    pub instances: Option<u64>,
    pub highlight_x: Option<Vec<f64>>,
    pub width_px: Option<f64>,
}

impl ConfigOverrides {
    /// Values set here win over values set in `base`.
    pub fn over(self, base: ConfigOverrides) -> ConfigOverrides {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigOverrides { $($f: self.$f.or(base.$f)),* } };
        }
        pick!(
            seed,
            replicates,
            window,
            intensity,
            lambda,
            r,
            ls,
            m,
            big_m,
            segment,
            depths,
            x_lines,
            start_x_max,
            start_abs_y,
            lattice_w,
            lattice_h,
            separation,
            horizon,
            instances,
            highlight_x,
            width_px
        )
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Usage(format!("config file {}: {e}", path.display())))
    }
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub replicates: u64,
    pub window: Option<Window>,
    pub intensity: f64,
    pub lambda: Option<f64>,
    pub r: Option<f64>,
    #[serde(rename = "L")]
    pub ls: Vec<u32>,
    pub m: u32,
    #[serde(rename = "M")]
    pub big_m: u32,
    pub segment: Option<VerticalSegment>,
    #[serde(rename = "D")]
    pub depths: Vec<usize>,
    pub x_lines: Vec<f64>,
    pub start_x_max: f64,
    pub start_abs_y: f64,
    #[serde(rename = "W")]
    pub lattice_w: u32,
    #[serde(rename = "H")]
    pub lattice_h: u32,
    pub separation: u64,
    #[serde(rename = "T")]
    pub horizon: u64,
    pub instances: u64,
    pub highlight_x: Option<(f64, f64)>,
    pub width_px: f64,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

fn parse_window(v: &[f64]) -> Result<Window> {
    if v.len() != 4 {
        return Err(usage(format!(
            "window needs 4 values x_min,x_max,y_min,y_max, got {}",
            v.len()
        )));
    }
    Window::new(v[0], v[1], v[2], v[3]).map_err(|e| usage(e.to_string()))
}

impl ExperimentConfig {
    /// Applies per-kind defaults to the given overrides and validates the result.
    pub fn resolve(kind: ExperimentKind, o: ConfigOverrides) -> Result<Self> {
        use ExperimentKind::*;
        let coalescence = matches!(kind, DsfCoalescence | BooleanCoalescence);
        let default_window = match kind {
            DsfCoalescence | BooleanCoalescence => Some([0.0, 2000.0, -150.0, 150.0]),
            EdgeBound => Some([-6.0, 6.0, -6.0, 6.0]),
            BiInfiniteCensus => Some([-500.0, 500.0, -100.0, 100.0]),
            Render => Some([0.0, 100.0, 0.0, 100.0]),
            EtaScaling | LatticeSuite => None,
        };
        let window = match (&o.window, default_window) {
            (Some(v), _) => Some(parse_window(v)?),
            (None, Some(d)) => Some(parse_window(&d)?),
            (None, None) => None,
        };
        let default_replicates = match kind {
            DsfCoalescence | BooleanCoalescence => 50,
            EtaScaling | BiInfiniteCensus => 30,
            EdgeBound => 20_000,
            LatticeSuite => 2000,
            Render => 1,
        };
        let (lambda, r) = match kind {
            BooleanCoalescence => (Some(o.lambda.unwrap_or(0.2)), Some(o.r.unwrap_or(1.0))),
            _ => match (o.lambda, o.r) {
                (Some(l), Some(r)) => (Some(l), Some(r)),
                (None, None) => (None, None),
                _ => return Err(usage("--lambda and --r must be given together")),
            },
        };
        if lambda.is_some() && !matches!(kind, DsfCoalescence | BooleanCoalescence | Render) {
            return Err(usage(format!(
                "{} does not use a Boolean model",
                kind.name()
            )));
        }
        let segment = match (&o.segment, kind) {
            (Some(v), _) => {
                if v.len() != 3 {
                    return Err(usage("segment needs 3 values x,y_lo,y_hi"));
                }
                Some(VerticalSegment::new(v[0], v[1], v[2]).map_err(|e| usage(e.to_string()))?)
            }
            (None, BiInfiniteCensus) => Some(VerticalSegment::new(0.0, 0.0, 100.0)?),
            (None, _) => None,
        };
        let highlight_x = match (&o.highlight_x, kind) {
            (Some(v), _) => {
                if v.len() != 2 || !(v[0] <= v[1]) {
                    return Err(usage("highlight-x needs 2 values lo,hi with lo <= hi"));
                }
                Some((v[0], v[1]))
            }
            (None, Render) => Some((0.0, 5.0)),
            (None, _) => None,
        };
        let cfg = ExperimentConfig {
            kind,
            seed: o.seed.unwrap_or(0),
            replicates: o.replicates.unwrap_or(default_replicates),
            window,
            intensity: o.intensity.unwrap_or(1.0),
            lambda,
            r,
            ls: o.ls.unwrap_or_else(|| vec![8, 16, 32, 64]),
            m: o.m.unwrap_or(1),
            big_m: o.big_m.unwrap_or(1),
            segment,
            depths: o.depths.unwrap_or_else(|| vec![0, 5, 10, 20, 40, 80]),
            x_lines: o.x_lines.unwrap_or_else(|| {
                if coalescence {
                    vec![100.0, 250.0, 500.0, 1000.0, 1500.0]
                } else {
                    Vec::new()
                }
            }),
            start_x_max: o.start_x_max.unwrap_or(5.0),
            start_abs_y: o.start_abs_y.unwrap_or(100.0),
            lattice_w: o.lattice_w.unwrap_or(2000),
            lattice_h: o.lattice_h.unwrap_or(400),
            separation: o.separation.unwrap_or(2),
            horizon: o.horizon.unwrap_or(10_000),
            instances: o.instances.unwrap_or(1),
            highlight_x,
            width_px: o.width_px.unwrap_or(800.0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(usage("replicates must be positive"));
        }
        if !(self.intensity.is_finite() && self.intensity > 0.0) {
            return Err(usage(format!(
                "intensity must be positive, got {}",
                self.intensity
            )));
        }
        if let (Some(l), Some(r)) = (self.lambda, self.r) {
            if !(l.is_finite() && l > 0.0 && r.is_finite() && r > 0.0) {
                return Err(usage("lambda and r must be positive"));
            }
        }
        match self.kind {
            ExperimentKind::DsfCoalescence | ExperimentKind::BooleanCoalescence => {
                let w = self.window.expect("coalescence has a window");
                if self.x_lines.is_empty() || self.x_lines.windows(2).any(|p| p[0] >= p[1]) {
                    return Err(usage("x-lines must be non-empty and strictly increasing"));
                }
                if self.x_lines.iter().any(|&x| x < w.x_min || x >= w.x_max) {
                    return Err(usage("every x-line must lie in [x_min, x_max)"));
                }
            }
            ExperimentKind::EtaScaling => {
                if self.ls.is_empty() || self.ls.contains(&0) || self.m == 0 || self.big_m == 0 {
                    return Err(usage("L values, m and M must be positive"));
                }
            }
            ExperimentKind::EdgeBound => {
                if self.m == 0 || self.big_m == 0 {
                    return Err(usage("m and M must be positive"));
                }
            }
            ExperimentKind::BiInfiniteCensus => {
                if self.depths.is_empty() {
                    return Err(usage("at least one depth threshold is required"));
                }
            }
            ExperimentKind::LatticeSuite => {
                if self.lattice_w < 2 || self.lattice_h < 1 || self.horizon == 0 {
                    return Err(usage("W >= 2, H >= 1 and T >= 1 are required"));
                }
                if !self.separation.is_multiple_of(2) || self.separation > self.lattice_h as u64 {
                    return Err(usage("separation must be even and at most H"));
                }
            }
            ExperimentKind::Render => {
                if !(self.width_px.is_finite() && self.width_px > 0.0) {
                    return Err(usage("width-px must be positive"));
                }
            }
        }
        Ok(())
    }

    fn window(&self) -> Window {
        self.window.expect("kind has a window")
    }
}

/// One replicate's seed.
pub fn replicate_seed(master: u64, replicate: u64) -> u64 {
    derive_seed(master, replicate)
}

fn boolean_model(cfg: &ExperimentConfig, seed: u64) -> Result<Option<BooleanModel>> {
    match (cfg.lambda, cfg.r) {
        (Some(l), Some(r)) => Ok(Some(sample_boolean(
            cfg.window(),
            l,
            r,
            derive_seed(seed, 1),
        )?)),
        _ => Ok(None),
    }
}

/// Class counts of one coalescence replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalescenceReplicate {
    pub replicate: u64,
    pub seed: u64,
    pub points: usize,
    pub starts: usize,
    pub counts: Vec<ClassCount>,
}

impl CoalescenceReplicate {
    pub fn is_monotone(&self) -> bool {
        self.counts.windows(2).all(|w| w[1].classes <= w[0].classes)
    }

    pub fn final_classes(&self) -> usize {
        self.counts.last().map_or(0, |c| c.classes)
    }
}

pub fn coalescence_replicate(
    cfg: &ExperimentConfig,
    replicate: u64,
) -> Result<CoalescenceReplicate> {
    let seed = replicate_seed(cfg.seed, replicate);
    let mut points = sample_ppp(cfg.window(), cfg.intensity, derive_seed(seed, 0))?;
    if let Some(holes) = boolean_model(cfg, seed)? {
        points = remove_covered(&points, &holes);
    }
    let forest = build_dsf(points);
    forest.check_invariants()?;
    let starts: Vec<usize> = forest
        .points()
        .iter()
        .enumerate()
        .filter(|(_, p)| p.x <= cfg.start_x_max && p.y.abs() <= cfg.start_abs_y)
        .map(|(i, _)| i)
        .collect();
    let counts = class_count_profile(&forest, &starts, &cfg.x_lines)?;
    Ok(CoalescenceReplicate {
        replicate,
        seed,
        points: forest.len(),
        starts: starts.len(),
        counts,
    })
}

/// Centred window leaving room for every edge that leaves the exit rectangle.
pub fn eta_window(l: u32, m: u32, big_m: u32) -> Window {
    let hx = (2 * l + 1) as f64 * m as f64 + (l as f64).sqrt() + ETA_WINDOW_PAD;
    let hy = (2 * l + 1) as f64 * big_m as f64 + (l as f64).sqrt() + ETA_WINDOW_PAD;
    Window {
        x_min: -hx,
        x_max: hx,
        y_min: -hy,
        y_max: hy,
    }
}

/// Exit counts for every `L` of one replicate; each `L` uses its own sample.
pub fn eta_replicate(cfg: &ExperimentConfig, replicate: u64) -> Result<Vec<EtaReport>> {
    let seed = replicate_seed(cfg.seed, replicate);
    cfg.ls
        .iter()
        .map(|&l| {
            let window = cfg
                .window
                .unwrap_or_else(|| eta_window(l, cfg.m, cfg.big_m));
            let sample_seed = derive_seed(seed, l as u64);
            let forest = build_dsf(sample_ppp(window, cfg.intensity, sample_seed)?);
            let mut report = count_exit_edges(&forest, l, cfg.m, cfg.big_m)?;
            report.seed = sample_seed;
            Ok(report)
        })
        .collect()
}

pub fn edge_bound_replicate(
    cfg: &ExperimentConfig,
    replicate: u64,
) -> Result<(u64, EdgeBoundCheck)> {
    let seed = replicate_seed(cfg.seed, replicate);
    let forest = build_dsf(sample_ppp(
        cfg.window(),
        cfg.intensity,
        derive_seed(seed, 0),
    )?);
    Ok((
        seed,
        check_edge_length_bound(&forest, Cell::new(cfg.m, cfg.big_m)?),
    ))
}

pub fn census_replicate(cfg: &ExperimentConfig, replicate: u64) -> Result<Vec<DepthCensus>> {
    let seed = replicate_seed(cfg.seed, replicate);
    let forest = build_dsf(sample_ppp(
        cfg.window(),
        cfg.intensity,
        derive_seed(seed, 0),
    )?);
    let mut rows = census_depth_profile(
        &forest,
        cfg.segment.expect("census has a segment"),
        &cfg.depths,
    )?;
    for row in &mut rows {
        row.seed = seed;
    }
    Ok(rows)
}

/// Structural checks on explicitly sampled lattice forests.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeStructure {
    pub instances: u64,
    pub out_degree_violations: usize,
    pub dual_out_degree_violations: usize,
    pub crossings: usize,
    pub round_trip_failures: usize,
    pub dual_up_bits: u64,
    pub dual_bits: u64,
    pub dual_up_fraction: f64,
    /// Distance of the up fraction from one half in standard errors.
    pub dual_up_z: f64,
}

pub fn lattice_structure(w: u32, h: u32, master: u64, instances: u64) -> Result<LatticeStructure> {
    let mut s = LatticeStructure {
        instances,
        out_degree_violations: 0,
        dual_out_degree_violations: 0,
        crossings: 0,
        round_trip_failures: 0,
        dual_up_bits: 0,
        dual_bits: 0,
        dual_up_fraction: f64::NAN,
        dual_up_z: f64::NAN,
    };
    for k in 0..instances {
        let seed = replicate_seed(master, k);
        let primal = sample_lattice(w, h, seed)?;
        let dual = build_dual(&primal);
        s.out_degree_violations += primal.out_degree_violations().len();
        s.dual_out_degree_violations += dual.out_degree_violations().len();
        s.crossings += check_no_crossing(&primal, &dual).len();
        s.round_trip_failures += (dual.reconstruct_primal(seed) != primal) as usize;
        for (i, j) in dual.vertices() {
            if let Some(o) = dual.orientation(i, j) {
                s.dual_bits += 1;
                s.dual_up_bits += (o == Orientation::Up) as u64;
            }
        }
    }
    if s.dual_bits > 0 {
        let n = s.dual_bits as f64;
        s.dual_up_fraction = s.dual_up_bits as f64 / n;
        s.dual_up_z = (s.dual_up_fraction - 0.5) / (0.25 / n).sqrt();
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeSuiteReport {
    pub dp: DpReport,
    pub simulation: CoalescenceEstimate,
    /// `(simulated - exact) / standard error`.
    pub z_score: f64,
    pub structure: LatticeStructure,
}

pub fn lattice_suite(cfg: &ExperimentConfig) -> Result<LatticeSuiteReport> {
    let exact = lattice_coalescence_probability_dp(cfg.separation, cfg.horizon)?;
    let params = EnsembleParams {
        seed: cfg.seed,
        height: cfg.lattice_h,
        replicates: cfg.replicates,
    };
    let simulation = lattice_coalescence_simulate(params, cfg.separation, cfg.horizon)?;
    let z_score = if simulation.std_error > 0.0 {
        (simulation.probability - exact) / simulation.std_error
    } else if simulation.probability == exact {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(LatticeSuiteReport {
        dp: DpReport {
            separation: cfg.separation,
            steps: cfg.horizon,
            probability: exact,
        },
        simulation,
        z_score,
        structure: lattice_structure(cfg.lattice_w, cfg.lattice_h, cfg.seed, cfg.instances)?,
    })
}

/// SVG of one sampled forest over the configured window.
pub fn render_figure(cfg: &ExperimentConfig) -> Result<String> {
    let seed = replicate_seed(cfg.seed, 0);
    let mut points = sample_ppp(cfg.window(), cfg.intensity, derive_seed(seed, 0))?;
    let holes = boolean_model(cfg, seed)?;
    if let Some(h) = &holes {
        points = remove_covered(&points, h);
    }
    let forest = build_dsf(points);
    let spec = RenderSpec {
        highlight_x: cfg.highlight_x,
        width_px: cfg.width_px,
        ..RenderSpec::default()
    };
    render_forest(&forest, &spec, holes.as_ref())
}

/// Runs `f` for every replicate on a pool of `jobs` workers, preserving index order.
pub fn run_replicates<T, F>(replicates: u64, jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..replicates).into_par_iter().map(&f).collect())
}

/// Where a run writes its files.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputTarget {
    /// Root directory; the run goes to `<root>/<experiment>/<tag>/`.
    pub root: PathBuf,
    pub tag: Option<String>,
    /// Explicit output file, used by `render`.
    pub file: Option<PathBuf>,
}

impl OutputTarget {
    pub fn default_root() -> PathBuf {
        std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    fn run_dir(&self, kind: ExperimentKind) -> PathBuf {
        let tag = self.tag.clone().unwrap_or_else(|| {
            let secs = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            format!("run-{secs}")
        });
        self.root.join(kind.name()).join(tag)
    }
}

/// A named deterministic check and whether it held.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl InvariantResult {
    fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        InvariantResult {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// Directory or file written.
    pub output: PathBuf,
    pub invariants: Vec<InvariantResult>,
}

impl RunOutcome {
    pub fn all_passed(&self) -> bool {
        self.invariants.iter().all(|i| i.passed)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Executes the configured experiment, writing reports and logging one line per
/// replicate plus an aggregate line to `log`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    jobs: usize,
    out: &OutputTarget,
    log: &mut dyn Write,
) -> Result<RunOutcome> {
    if jobs == 0 {
        return Err(usage("jobs must be positive"));
    }
    if cfg.kind == ExperimentKind::Render {
        let path = out
            .file
            .clone()
            .ok_or_else(|| usage("render needs --out <file.svg>"))?;
        let svg = render_figure(cfg)?;
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, &svg)?;
        writeln!(
            log,
            "render: wrote {} ({} bytes)",
            path.display(),
            svg.len()
        )?;
        return Ok(RunOutcome {
            output: path,
            invariants: Vec::new(),
        });
    }

    let dir = out.run_dir(cfg.kind);
    fs::create_dir_all(&dir)?;
    write_json(create(&dir.join("config.json"))?, cfg)?;
    let invariants = match cfg.kind {
        ExperimentKind::DsfCoalescence | ExperimentKind::BooleanCoalescence => {
            run_coalescence(cfg, jobs, &dir, log)?
        }
        ExperimentKind::EtaScaling => run_eta(cfg, jobs, &dir, log)?,
        ExperimentKind::EdgeBound => run_edge_bound(cfg, jobs, &dir, log)?,
        ExperimentKind::BiInfiniteCensus => run_census(cfg, jobs, &dir, log)?,
        ExperimentKind::LatticeSuite => run_lattice(cfg, &dir, log)?,
        ExperimentKind::Render => unreachable!("handled above"),
    };
    let mut inv = create(&dir.join("invariants.txt"))?;
    for i in &invariants {
        let status = if i.passed { "PASS" } else { "FAIL" };
        writeln!(inv, "{status} {}: {}", i.name, i.detail)?;
    }
    inv.flush()?;
    Ok(RunOutcome {
        output: dir,
        invariants,
    })
}

#[derive(Serialize)]
struct CoalescenceSummary {
    replicates: u64,
    x_lines: Vec<f64>,
    mean_classes: Vec<f64>,
    single_class_fraction: Vec<f64>,
    monotone_replicates: u64,
}

fn run_coalescence(
    cfg: &ExperimentConfig,
    jobs: usize,
    dir: &Path,
    log: &mut dyn Write,
) -> Result<Vec<InvariantResult>> {
    let reps = run_replicates(cfg.replicates, jobs, |r| coalescence_replicate(cfg, r))?;
    let mut w = csv::Writer::from_writer(create(&dir.join("class_counts.csv"))?);
    w.write_record([
        "replicate",
        "seed",
        "x_line",
        "classes",
        "included",
        "excluded",
    ])?;
    for rep in &reps {
        for c in &rep.counts {
            w.write_record([
                rep.replicate.to_string(),
                rep.seed.to_string(),
                format_real(c.x_line),
                c.classes.to_string(),
                c.included.to_string(),
                c.excluded.to_string(),
            ])?;
        }
        let counts: Vec<String> = rep.counts.iter().map(|c| c.classes.to_string()).collect();
        writeln!(
            log,
            "replicate {}: {} points, {} starts, classes [{}]",
            rep.replicate,
            rep.points,
            rep.starts,
            counts.join(", ")
        )?;
    }
    w.flush()?;
    let n = reps.len() as f64;
    let summary = CoalescenceSummary {
        replicates: cfg.replicates,
        x_lines: cfg.x_lines.clone(),
        mean_classes: (0..cfg.x_lines.len())
            .map(|k| reps.iter().map(|r| r.counts[k].classes as f64).sum::<f64>() / n)
            .collect(),
        single_class_fraction: (0..cfg.x_lines.len())
            .map(|k| reps.iter().filter(|r| r.counts[k].classes == 1).count() as f64 / n)
            .collect(),
        monotone_replicates: reps.iter().filter(|r| r.is_monotone()).count() as u64,
    };
    write_json(create(&dir.join("summary.json"))?, &summary)?;
    writeln!(
        log,
        "aggregate: single-class fraction at x = {} is {}; {}/{} replicates monotone",
        format_real(*cfg.x_lines.last().expect("validated")),
        format_real(*summary.single_class_fraction.last().expect("validated")),
        summary.monotone_replicates,
        cfg.replicates
    )?;
    Ok(vec![InvariantResult::new(
        "class count non-increasing in x_line",
        summary.monotone_replicates == cfg.replicates,
        format!(
            "{}/{} replicates",
            summary.monotone_replicates, cfg.replicates
        ),
    )])
}

fn run_eta(
    cfg: &ExperimentConfig,
    jobs: usize,
    dir: &Path,
    log: &mut dyn Write,
) -> Result<Vec<InvariantResult>> {
    let per_rep = run_replicates(cfg.replicates, jobs, |r| eta_replicate(cfg, r))?;
    for (r, reports) in per_rep.iter().enumerate() {
        let etas: Vec<String> = reports
            .iter()
            .map(|e| format!("L={}: {}", e.l, e.eta_total))
            .collect();
        writeln!(log, "replicate {r}: {}", etas.join(", "))?;
    }
    // Grouped by L, replicates in index order.
    let reports: Vec<EtaReport> = (0..cfg.ls.len())
        .flat_map(|k| per_rep.iter().map(move |rep| rep[k]))
        .collect();
    write_eta_reports_csv(create(&dir.join("eta_reports.csv"))?, &reports)?;
    let consistent = reports
        .iter()
        .all(|r| r.eta_short + r.eta_long == r.eta_total);
    let mut invariants = vec![InvariantResult::new(
        "eta_total = eta_short + eta_long",
        consistent,
        format!("{} reports", reports.len()),
    )];
    match fit_scaling(&reports) {
        Ok(fit) => {
            write_json(create(&dir.join("scaling_fit.json"))?, &fit)?;
            writeln!(
                log,
                "aggregate: log-log slope {:.4}, intercept {:.4}",
                fit.slope, fit.intercept
            )?;
        }
        Err(e @ Error::Precondition(_)) => {
            writeln!(log, "aggregate: no scaling fit ({e})")?;
            invariants.push(InvariantResult::new(
                "scaling fit",
                true,
                format!("skipped: {e}"),
            ));
        }
        Err(e) => return Err(e),
    }
    Ok(invariants)
}

fn run_edge_bound(
    cfg: &ExperimentConfig,
    jobs: usize,
    dir: &Path,
    log: &mut dyn Write,
) -> Result<Vec<InvariantResult>> {
    let checks = run_replicates(cfg.replicates, jobs, |r| edge_bound_replicate(cfg, r))?;
    let mut w = csv::Writer::from_writer(create(&dir.join("edge_bound.csv"))?);
    w.write_record([
        "replicate",
        "seed",
        "east_exits",
        "hypothesis_met",
        "max_edge_length",
        "bound",
        "violated",
    ])?;
    for (r, (seed, c)) in checks.iter().enumerate() {
        w.write_record([
            r.to_string(),
            seed.to_string(),
            c.east_exits.to_string(),
            (c.hypothesis_met as u8).to_string(),
            format_real(c.max_edge_length),
            format_real(c.bound),
            (c.violated as u8).to_string(),
        ])?;
        writeln!(
            log,
            "replicate {r}: {} east exits, max edge {:.4}, bound {:.4}",
            c.east_exits, c.max_edge_length, c.bound
        )?;
    }
    w.flush()?;
    let met = checks.iter().filter(|(_, c)| c.hypothesis_met).count();
    let violated = checks.iter().filter(|(_, c)| c.violated).count();
    writeln!(
        log,
        "aggregate: hypothesis met in {met}/{} instances, {violated} violations",
        cfg.replicates
    )?;
    Ok(vec![InvariantResult::new(
        "edge length bound under two east exits",
        violated == 0,
        format!("{violated} violations in {met} qualifying instances"),
    )])
}

fn run_census(
    cfg: &ExperimentConfig,
    jobs: usize,
    dir: &Path,
    log: &mut dyn Write,
) -> Result<Vec<InvariantResult>> {
    let per_rep = run_replicates(cfg.replicates, jobs, |r| census_replicate(cfg, r))?;
    let mut monotone = 0;
    for (r, rows) in per_rep.iter().enumerate() {
        let deep: Vec<String> = rows
            .iter()
            .map(|c| format!("D={}: {}", c.depth_threshold, c.deep_count))
            .collect();
        writeln!(
            log,
            "replicate {r}: crossings {}, {}",
            rows[0].crossing_count,
            deep.join(", ")
        )?;
        let mut sorted: Vec<&DepthCensus> = rows.iter().collect();
        sorted.sort_by_key(|c| c.depth_threshold);
        monotone += sorted
            .windows(2)
            .all(|w| w[1].deep_count <= w[0].deep_count) as u64;
    }
    let rows: Vec<DepthCensus> = per_rep.into_iter().flatten().collect();
    write_depth_census_csv(create(&dir.join("depth_census.csv"))?, &rows)?;
    let n = cfg.replicates as f64;
    let means: Vec<String> = cfg
        .depths
        .iter()
        .map(|&d| {
            let total: usize = rows
                .iter()
                .filter(|c| c.depth_threshold == d)
                .map(|c| c.deep_count)
                .sum();
            format!("D={d}: {:.3}", total as f64 / n)
        })
        .collect();
    writeln!(log, "aggregate: mean deep counts {}", means.join(", "))?;
    Ok(vec![InvariantResult::new(
        "deep count non-increasing in D",
        monotone == cfg.replicates,
        format!("{monotone}/{} replicates", cfg.replicates),
    )])
}

fn run_lattice(
    cfg: &ExperimentConfig,
    dir: &Path,
    log: &mut dyn Write,
) -> Result<Vec<InvariantResult>> {
    let report = lattice_suite(cfg)?;
    write_json(create(&dir.join("lattice_suite.json"))?, &report)?;
    write_json(create(&dir.join("dp.json"))?, &report.dp)?;
    let s = &report.structure;
    writeln!(
        log,
        "structure: {} instances, {} out-degree violations, {} dual out-degree violations, {} crossings, dual up fraction {:.5}",
        s.instances, s.out_degree_violations, s.dual_out_degree_violations, s.crossings, s.dual_up_fraction
    )?;
    writeln!(
        log,
        "aggregate: exact {:.6}, simulated {:.6} +/- {:.6} (z = {:.3}), censored {}",
        report.dp.probability,
        report.simulation.probability,
        report.simulation.std_error,
        report.z_score,
        report.simulation.censored
    )?;
    Ok(vec![
        InvariantResult::new(
            "primal out-degree",
            s.out_degree_violations == 0,
            format!("{} violations", s.out_degree_violations),
        ),
        InvariantResult::new(
            "dual out-degree",
            s.dual_out_degree_violations == 0,
            format!("{} violations", s.dual_out_degree_violations),
        ),
        InvariantResult::new(
            "no primal/dual crossing",
            s.crossings == 0,
            format!("{} crossings", s.crossings),
        ),
        InvariantResult::new(
            "dual determines primal",
            s.round_trip_failures == 0,
            format!("{} failures", s.round_trip_failures),
        ),
    ])
}
