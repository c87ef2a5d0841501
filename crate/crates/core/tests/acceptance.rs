//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use dsf::dsf::build_dsf;
use dsf::experiment::{
    census_replicate, coalescence_replicate, edge_bound_replicate, eta_replicate,
    lattice_structure, run_experiment, ConfigOverrides, ExperimentConfig, ExperimentKind,
    OutputTarget,
};
use dsf::lattice::{
    lattice_coalescence_probability_dp, lattice_coalescence_simulate, EnsembleParams,
};
use dsf::point_process::{sample_ppp, Window};
use dsf::rng::derive_seed;
use dsf::spatial_index::{build_index, nearest_right_naive};
use dsf::statistics::fit_scaling;
use dsf::Result;

const ORACLE_INSTANCES: u64 = 200;
const HALF_DISC_INSTANCES: u64 = 100;

const COALESCENCE_REPLICATES: u64 = 50;
const COALESCENCE_X_LINE: f64 = 1500.0;
const COALESCENCE_MIN_FRACTION: f64 = 0.9;

const ETA_REPLICATES: u64 = 30;
const ETA_MAX_SLOPE: f64 = 1.6;
const ETA_MAX_RATIO: f64 = 64.0;

const EDGE_BOUND_REPLICATES: u64 = 20_000;
const EDGE_BOUND_MIN_QUALIFYING: usize = 1000;

const CENSUS_REPLICATES: u64 = 30;
const CENSUS_DEEP: usize = 40;
const CENSUS_MAX_RATIO: f64 = 0.10;

const LATTICE_INSTANCES: u64 = 100;
const LATTICE_SIZE: u32 = 50;
const LATTICE_MIN_BITS: u64 = 100_000;
const LATTICE_SIGMAS: f64 = 4.0;
const LATTICE_WALK_REPLICATES: u64 = 20_000;
const LATTICE_WALK_HEIGHT: u32 = 1000;
const LATTICE_HORIZONS: [u64; 3] = [1, 100, 10_000];

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Result<Verdict> {
    Ok(Verdict {
        passed,
        detail: detail.into(),
    })
}

fn config(kind: ExperimentKind, o: ConfigOverrides) -> ExperimentConfig {
    ExperimentConfig::resolve(kind, o).expect("valid acceptance config")
}

fn index_matches_oracle() -> Result<Verdict> {
    let w = Window::new(0.0, 40.0, 0.0, 25.0)?;
    let mut mismatches = 0;
    let mut sites = 0;
    for k in 0..ORACLE_INSTANCES {
        let pts = sample_ppp(w, 1.0, derive_seed(1, k))?;
        let index = build_index(&pts);
        for i in 0..pts.len() {
            sites += 1;
            if index.nearest_right(i)? != nearest_right_naive(&pts, i)? {
                mismatches += 1;
            }
        }
    }
    verdict(
        mismatches == 0,
        format!("{mismatches} mismatches over {sites} sites in {ORACLE_INSTANCES} instances"),
    )
}

fn certified_half_discs_are_empty() -> Result<Verdict> {
    let w = Window::new(0.0, 80.0, 0.0, 25.0)?;
    let (mut violations, mut edges, mut points) = (0, 0, 0);
    for k in 0..HALF_DISC_INSTANCES {
        let f = build_dsf(sample_ppp(w, 1.0, derive_seed(2, k))?);
        let pts = f.points();
        points += pts.len();
        for i in 0..f.len() {
            let Some(p) = f.parent(i) else { continue };
            if !f.is_certified(i) {
                continue;
            }
            edges += 1;
            let d2 = pts[i].dist2(&pts[p]);
            let within = |x: f64| x >= w.x_min && x < w.x_max;
            let r = d2.sqrt();
            let inside = within(pts[i].x + r) && pts[i].y - r >= w.y_min && pts[i].y + r < w.y_max;
            let closer = pts.iter().any(|q| q.x > pts[i].x && pts[i].dist2(q) < d2);
            if closer || !inside {
                violations += 1;
            }
        }
    }
    verdict(
        violations == 0,
        format!("{violations} violations over {edges} certified edges ({} points per instance on average)", points as u64 / HALF_DISC_INSTANCES),
    )
}

fn coalescence(kind: ExperimentKind, seed: u64) -> Result<Verdict> {
    let cfg = config(
        kind,
        ConfigOverrides {
            seed: Some(seed),
            replicates: Some(COALESCENCE_REPLICATES),
            window: Some(vec![0.0, 2000.0, -150.0, 150.0]),
            intensity: Some(1.0),
            x_lines: Some(vec![100.0, 250.0, 500.0, 1000.0, COALESCENCE_X_LINE]),
            start_x_max: Some(5.0),
            start_abs_y: Some(100.0),
            ..Default::default()
        },
    );
    let mut monotone = 0;
    let mut single = 0;
    let mut finals = Vec::new();
    for r in 0..cfg.replicates {
        let rep = coalescence_replicate(&cfg, r)?;
        monotone += rep.is_monotone() as u64;
        single += (rep.final_classes() == 1) as u64;
        finals.push(rep.final_classes());
    }
    let fraction = single as f64 / cfg.replicates as f64;
    let mean = finals.iter().sum::<usize>() as f64 / finals.len() as f64;
    verdict(
        monotone == cfg.replicates && fraction >= COALESCENCE_MIN_FRACTION,
        format!(
            "monotone {monotone}/{}; single class at x = {COALESCENCE_X_LINE} in {single}/{} (fraction {fraction:.2}, need >= {COALESCENCE_MIN_FRACTION}); mean classes {mean:.2}",
            cfg.replicates, cfg.replicates
        ),
    )
}

fn eta_scaling() -> Result<Verdict> {
    let cfg = config(
        ExperimentKind::EtaScaling,
        ConfigOverrides {
            seed: Some(7),
            replicates: Some(ETA_REPLICATES),
            m: Some(1),
            big_m: Some(1),
            ls: Some(vec![8, 16, 32, 64]),
            ..Default::default()
        },
    );
    let mut reports = Vec::new();
    for r in 0..cfg.replicates {
        reports.extend(eta_replicate(&cfg, r)?);
    }
    let fit = fit_scaling(&reports)?;
    let ratio = fit.means[fit.means.len() - 1] / fit.means[0];
    verdict(
        fit.slope <= ETA_MAX_SLOPE && ratio < ETA_MAX_RATIO,
        format!("slope {:.3} (<= {ETA_MAX_SLOPE}), mean ratio L=64/L=8 {ratio:.2} (< {ETA_MAX_RATIO}); means {:.1?}", fit.slope, fit.means),
    )
}

fn edge_length_bound() -> Result<Verdict> {
    let cfg = config(
        ExperimentKind::EdgeBound,
        ConfigOverrides {
            seed: Some(5),
            replicates: Some(EDGE_BOUND_REPLICATES),
            m: Some(1),
            big_m: Some(1),
            ..Default::default()
        },
    );
    let (mut qualifying, mut violations, mut longest) = (0, 0, 0.0f64);
    for r in 0..cfg.replicates {
        let (_, check) = edge_bound_replicate(&cfg, r)?;
        if check.hypothesis_met {
            qualifying += 1;
            longest = longest.max(check.max_edge_length);
        }
        violations += check.violated as usize;
    }
    verdict(
        qualifying >= EDGE_BOUND_MIN_QUALIFYING && violations == 0,
        format!(
            "{violations} violations in {qualifying} qualifying instances (need >= {EDGE_BOUND_MIN_QUALIFYING}); longest edge {longest:.3} vs bound {:.3}",
            4.0 * 2f64.sqrt()
        ),
    )
}

fn bi_infinite_census() -> Result<Verdict> {
    let cfg = config(
        ExperimentKind::BiInfiniteCensus,
        ConfigOverrides {
            seed: Some(9),
            replicates: Some(CENSUS_REPLICATES),
            window: Some(vec![-500.0, 500.0, -100.0, 100.0]),
            segment: Some(vec![0.0, 0.0, 100.0]),
            depths: Some(vec![0, 5, 10, 20, CENSUS_DEEP]),
            ..Default::default()
        },
    );
    let (mut monotone, mut at_zero, mut at_deep) = (0, 0usize, 0usize);
    for r in 0..cfg.replicates {
        let rows = census_replicate(&cfg, r)?;
        monotone += rows.windows(2).all(|w| w[1].deep_count <= w[0].deep_count) as u64;
        at_zero += rows[0].deep_count;
        at_deep += rows[rows.len() - 1].deep_count;
    }
    let n = cfg.replicates as f64;
    let ratio = at_deep as f64 / at_zero as f64;
    verdict(
        monotone == cfg.replicates && ratio < CENSUS_MAX_RATIO,
        format!(
            "monotone {monotone}/{}; mean deep count D=0 {:.2}, D={CENSUS_DEEP} {:.2}, ratio {ratio:.3} (need < {CENSUS_MAX_RATIO})",
            cfg.replicates,
            at_zero as f64 / n,
            at_deep as f64 / n
        ),
    )
}

fn lattice_suite() -> Result<Verdict> {
    let s = lattice_structure(LATTICE_SIZE, LATTICE_SIZE, 13, LATTICE_INSTANCES)?;
    let structure_ok =
        s.out_degree_violations == 0 && s.dual_out_degree_violations == 0 && s.crossings == 0;
    let bits_ok = s.dual_bits >= LATTICE_MIN_BITS && s.dual_up_z.abs() <= LATTICE_SIGMAS;

    let mut walk_ok = lattice_coalescence_probability_dp(2, 1)? == 0.25;
    let mut walks = Vec::new();
    for t in LATTICE_HORIZONS {
        let exact = lattice_coalescence_probability_dp(2, t)?;
        let params = EnsembleParams {
            seed: derive_seed(14, t),
            height: LATTICE_WALK_HEIGHT,
            replicates: LATTICE_WALK_REPLICATES,
        };
        let est = lattice_coalescence_simulate(params, 2, t)?;
        let n = (est.met + est.not_met) as f64;
        let se = (exact * (1.0 - exact) / n).sqrt();
        let z = (est.probability - exact) / se;
        walk_ok &= z.abs() <= LATTICE_SIGMAS;
        walks.push(format!(
            "T={t}: exact {exact:.5} sim {:.5} z {z:+.2} censored {}",
            est.probability, est.censored
        ));
    }
    verdict(
        structure_ok && bits_ok && walk_ok,
        format!(
            "(a) {} instances: {} primal and {} dual out-degree violations, {} crossings; (b) {} dual bits, up fraction {:.5}, z {:+.2}; (c) {}",
            s.instances,
            s.out_degree_violations,
            s.dual_out_degree_violations,
            s.crossings,
            s.dual_bits,
            s.dual_up_fraction,
            s.dual_up_z,
            walks.join("; ")
        ),
    )
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .expect("run directory exists")
        .map(|e| {
            let p = e.expect("entry").path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).expect("readable"),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Result<Verdict> {
    let root = tempfile::tempdir()?;
    let runs: Vec<(ExperimentKind, ConfigOverrides)> = vec![
        (
            ExperimentKind::DsfCoalescence,
            ConfigOverrides {
                replicates: Some(4),
                window: Some(vec![0.0, 300.0, -40.0, 40.0]),
                x_lines: Some(vec![50.0, 150.0, 250.0]),
                start_abs_y: Some(30.0),
                ..Default::default()
            },
        ),
        (
            ExperimentKind::BooleanCoalescence,
            ConfigOverrides {
                replicates: Some(4),
                window: Some(vec![0.0, 300.0, -40.0, 40.0]),
                x_lines: Some(vec![50.0, 150.0, 250.0]),
                start_abs_y: Some(30.0),
                ..Default::default()
            },
        ),
        (
            ExperimentKind::EtaScaling,
            ConfigOverrides {
                replicates: Some(10),
                ls: Some(vec![4, 8, 16]),
                ..Default::default()
            },
        ),
        (
            ExperimentKind::EdgeBound,
            ConfigOverrides {
                replicates: Some(500),
                ..Default::default()
            },
        ),
        (
            ExperimentKind::BiInfiniteCensus,
            ConfigOverrides {
                replicates: Some(4),
                ..Default::default()
            },
        ),
        (
            ExperimentKind::LatticeSuite,
            ConfigOverrides {
                lattice_w: Some(200),
                lattice_h: Some(50),
                horizon: Some(500),
                replicates: Some(500),
                ..Default::default()
            },
        ),
    ];
    let mut identical = 0;
    let mut differing = Vec::new();
    for (kind, o) in &runs {
        let cfg = config(
            *kind,
            ConfigOverrides {
                seed: Some(21),
                ..o.clone()
            },
        );
        let mut snapshots = Vec::new();
        for (tag, jobs) in [("first", 1), ("second", 2)] {
            let out = OutputTarget {
                root: root.path().into(),
                tag: Some(tag.into()),
                file: None,
            };
            let outcome = run_experiment(&cfg, jobs, &out, &mut std::io::sink())?;
            snapshots.push(read_dir_bytes(&outcome.output));
        }
        if snapshots[0] == snapshots[1] {
            identical += 1;
        } else {
            differing.push(kind.name());
        }
    }
    let mut svgs = Vec::new();
    for name in ["a.svg", "b.svg"] {
        let cfg = config(
            ExperimentKind::Render,
            ConfigOverrides {
                seed: Some(21),
                ..Default::default()
            },
        );
        let out = OutputTarget {
            root: root.path().into(),
            tag: None,
            file: Some(root.path().join(name)),
        };
        run_experiment(&cfg, 1, &out, &mut std::io::sink())?;
        svgs.push(fs::read(root.path().join(name))?);
    }
    let svg_same = svgs[0] == svgs[1];
    verdict(
        differing.is_empty() && svg_same,
        format!("{identical}/{} experiments byte-identical across reruns; svg identical: {svg_same}; differing: {differing:?}", runs.len()),
    )
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Result<Verdict>);
    let criteria: [Criterion; 9] = [
        ("1 index equals oracle", index_matches_oracle),
        (
            "2 certified half-discs empty",
            certified_half_discs_are_empty,
        ),
        ("3 coalescence", || {
            coalescence(ExperimentKind::DsfCoalescence, 3)
        }),
        ("4 eta scaling", eta_scaling),
        ("5 edge-length bound", edge_length_bound),
        ("6 coalescence with Boolean holes", || {
            coalescence(ExperimentKind::BooleanCoalescence, 6)
        }),
        ("7 bi-infinite census", bi_infinite_census),
        ("8 lattice suite", lattice_suite),
        ("9 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let (status, detail) = match check() {
            Ok(v) => (if v.passed { "PASS" } else { "FAIL" }, v.detail),
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        failed += (status == "FAIL") as usize;
        println!(
            "{status} [{name}] {detail} ({:.1}s)",
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
