//! Report and data file formats.
//!
//! Reals are written with 17 significant digits so every value round-trips exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsf::Forest;
use crate::error::{Error, Result};
use crate::lattice::{LatticeForest, Orientation};
use crate::point_process::{Point, PointSet, Window};
use crate::statistics::{DepthCensus, EtaReport};

/// Formats a real like C's `%.17g`.
pub fn format_real(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        trim_fraction(format!("{:.*}", (16 - exp) as usize, v))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!(
            "{}e{}{:02}",
            trim_fraction(mantissa.to_string()),
            sign,
            exp.abs()
        )
    }
}

fn trim_fraction(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn parse_real(field: &str, what: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("{what}: not a real: {field:?}")))
}

/// Metadata written next to a point CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointSetMeta {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub intensity: f64,
    pub seed: u64,
}

impl PointSetMeta {
    pub fn of(points: &PointSet) -> Self {
        let w = points.window();
        PointSetMeta {
            x_min: w.x_min,
            x_max: w.x_max,
            y_min: w.y_min,
            y_max: w.y_max,
            intensity: points.intensity(),
            seed: points.seed(),
        }
    }
}

/// Sidecar path for a point CSV: same stem, `.json` extension.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn write_points_csv<W: Write>(out: W, points: &PointSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y"])?;
    for p in points.points() {
        w.write_record([format_real(p.x), format_real(p.y)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_points_csv<R: Read>(input: R) -> Result<Vec<Point>> {
    let mut r = csv::Reader::from_reader(input);
    expect_header(r.headers()?, CsvSchema::PointSet.header())?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push(Point::new(
            parse_real(&rec[0], "x")?,
            parse_real(&rec[1], "y")?,
        ));
    }
    Ok(out)
}

/// Writes `csv_path` and its JSON sidecar.
pub fn save_point_set(csv_path: &Path, points: &PointSet) -> Result<()> {
    write_points_csv(BufWriter::new(File::create(csv_path)?), points)?;
    write_json(
        BufWriter::new(File::create(sidecar_path(csv_path))?),
        &PointSetMeta::of(points),
    )
}

/// Reads a point CSV and its sidecar; the result is re-validated and re-sorted.
pub fn load_point_set(csv_path: &Path) -> Result<PointSet> {
    let meta: PointSetMeta = serde_json::from_reader(File::open(sidecar_path(csv_path))?)?;
    let points = read_points_csv(File::open(csv_path)?)?;
    let window = Window::new(meta.x_min, meta.x_max, meta.y_min, meta.y_max)?;
    PointSet::new(window, points, meta.intensity, meta.seed)
}

pub fn write_forest_csv<W: Write>(out: W, forest: &Forest) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CsvSchema::Forest.header())?;
    for i in 0..forest.len() {
        let parent = forest.parent(i).map(|p| p.to_string()).unwrap_or_default();
        let certified = if forest.is_certified(i) { "1" } else { "0" };
        w.write_record([i.to_string(), parent, certified.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_eta_reports_csv<W: Write>(out: W, reports: &[EtaReport]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(CsvSchema::EtaReport.header())?;
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_depth_census_csv<W: Write>(out: W, rows: &[DepthCensus]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CsvSchema::DepthCensus.header())?;
    for c in rows {
        w.write_record([
            c.seed.to_string(),
            format_real(c.segment.x),
            format_real(c.segment.y_lo),
            format_real(c.segment.y_hi),
            c.depth_threshold.to_string(),
            c.crossing_count.to_string(),
            c.deep_count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per even vertex; `bit` is 1 for an upward edge, 0 for a downward edge and
/// empty in the last column, which has no edges.
pub fn write_lattice_csv<W: Write>(out: W, forest: &LatticeForest) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CsvSchema::Lattice.header())?;
    for (i, j) in forest.vertices() {
        let bit = match forest.orientation(i, j) {
            Some(Orientation::Up) => "1",
            Some(Orientation::Down) => "0",
            None => "",
        };
        w.write_record([i.to_string(), j.to_string(), bit.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Exact meeting probability from the DP oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpReport {
    pub separation: u64,
    #[serde(rename = "T")]
    pub steps: u64,
    pub probability: f64,
}

/// Pretty JSON with a trailing newline.
pub fn write_json<W: Write, T: Serialize + ?Sized>(mut out: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// CSV layouts produced by this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvSchema {
    PointSet,
    Forest,
    EtaReport,
    DepthCensus,
    Lattice,
}

#[derive(Clone, Copy)]
enum Kind {
    Real,
    Unsigned,
    Integer,
    OptionalUnsigned,
    Flag,
    OptionalFlag,
}

impl CsvSchema {
    pub fn header(self) -> &'static [&'static str] {
        match self {
            CsvSchema::PointSet => &["x", "y"],
            CsvSchema::Forest => &["child_index", "parent_index", "certified"],
            CsvSchema::EtaReport => &["seed", "L", "m", "M", "eta_short", "eta_long", "eta_total"],
            CsvSchema::DepthCensus => &["seed", "x", "y_lo", "y_hi", "D", "crossings", "deep"],
            CsvSchema::Lattice => &["i", "j", "bit"],
        }
    }

    fn kinds(self) -> &'static [Kind] {
        use Kind::*;
        match self {
            CsvSchema::PointSet => &[Real, Real],
            CsvSchema::Forest => &[Unsigned, OptionalUnsigned, Flag],
            CsvSchema::EtaReport => &[Unsigned; 7],
            CsvSchema::DepthCensus => &[Unsigned, Real, Real, Real, Unsigned, Unsigned, Unsigned],
            CsvSchema::Lattice => &[Integer, Integer, OptionalFlag],
        }
    }

    /// Checks the header and every field type; returns the number of data rows.
    pub fn check<R: Read>(self, input: R) -> Result<usize> {
        let mut r = csv::Reader::from_reader(input);
        expect_header(r.headers()?, self.header())?;
        let mut rows = 0;
        for (n, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != self.header().len() {
                return Err(Error::Format(format!(
                    "row {}: {} fields",
                    n + 1,
                    rec.len()
                )));
            }
            for ((field, kind), name) in rec.iter().zip(self.kinds()).zip(self.header()) {
                let ok = match kind {
                    Kind::Real => field.parse::<f64>().is_ok_and(f64::is_finite),
                    Kind::Unsigned => field.parse::<u64>().is_ok(),
                    Kind::Integer => field.parse::<i64>().is_ok(),
                    Kind::OptionalUnsigned => field.is_empty() || field.parse::<u64>().is_ok(),
                    Kind::Flag => field == "0" || field == "1",
                    Kind::OptionalFlag => field.is_empty() || field == "0" || field == "1",
                };
                if !ok {
                    return Err(Error::Format(format!(
                        "row {}: bad {name} value {field:?}",
                        n + 1
                    )));
                }
            }
            rows += 1;
        }
        Ok(rows)
    }
}

fn expect_header(found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    if found.iter().ne(expected.iter().copied()) {
        return Err(Error::Format(format!(
            "header {found:?}, expected {expected:?}"
        )));
    }
    Ok(())
}
