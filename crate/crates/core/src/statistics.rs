//! Measurable quantities on a forest: exit-edge counts of large rectangles and their
//! growth exponent, the edge-length bound for cells with two east exits, and censuses of
//! vertical-segment crossings lying on long backward chains.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dsf::{Cell, Forest};
use crate::error::{Error, Result};
use crate::point_process::Point;

/// Counts of edges leaving the rectangle made of `(2L + 1)^2` translated cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EtaReport {
    pub seed: u64,
    #[serde(rename = "L")]
    pub l: u32,
    pub m: u32,
    #[serde(rename = "M")]
    pub big_m: u32,
    pub eta_short: u64,
    pub eta_long: u64,
    pub eta_total: u64,
}

/// One edge leaving the rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitEdge {
    pub child: usize,
    pub parent: usize,
    pub length: f64,
}

/// The rectangle `[-(2L+1)m, (2L+1)m) x [-(2L+1)M, (2L+1)M)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitRectangle {
    pub half_width: f64,
    pub half_height: f64,
}

impl ExitRectangle {
    pub fn new(l: u32, m: u32, big_m: u32) -> Result<Self> {
        if l == 0 || m == 0 || big_m == 0 {
            return Err(Error::Parameter("L, m and M must be positive".into()));
        }
        let k = 2.0 * l as f64 + 1.0;
        Ok(ExitRectangle {
            half_width: k * m as f64,
            half_height: k * big_m as f64,
        })
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= -self.half_width
            && p.x < self.half_width
            && p.y >= -self.half_height
            && p.y < self.half_height
    }

    /// Euclidean distance from an interior point to the rectangle boundary.
    pub fn depth_inside(&self, p: Point) -> f64 {
        (p.x + self.half_width)
            .min(self.half_width - p.x)
            .min(p.y + self.half_height)
            .min(self.half_height - p.y)
    }
}

/// Edges with west endpoint in the rectangle and east endpoint outside it.
///
/// The window must contain the rectangle with a margin of at least `sqrt(L)`, and every
/// edge leaving a point of the rectangle must be certified.
pub fn exit_edges(forest: &Forest, l: u32, m: u32, big_m: u32) -> Result<Vec<ExitEdge>> {
    let rect = ExitRectangle::new(l, m, big_m)?;
    let margin = (l as f64).sqrt();
    let w = forest.source().window();
    if w.x_min > -rect.half_width - margin
        || w.x_max < rect.half_width + margin
        || w.y_min > -rect.half_height - margin
        || w.y_max < rect.half_height + margin
    {
        return Err(Error::Precondition(format!(
            "window {w:?} does not contain the rectangle of half-sides ({}, {}) with margin {margin}",
            rect.half_width, rect.half_height
        )));
    }
    let pts = forest.points();
    let mut out = Vec::new();
    for (i, p) in pts.iter().enumerate() {
        if !rect.contains(*p) {
            continue;
        }
        let q = match (forest.parent(i), forest.is_certified(i)) {
            (Some(q), true) => q,
            _ => {
                return Err(Error::Precondition(format!(
                    "edge from ({}, {}) inside the rectangle is not certified",
                    p.x, p.y
                )))
            }
        };
        if !rect.contains(pts[q]) {
            out.push(ExitEdge {
                child: i,
                parent: q,
                length: forest.edge_length(i).expect("edge exists"),
            });
        }
    }
    Ok(out)
}

/// Number of edges leaving the rectangle, split at length `sqrt(L)` (short is `<=`).
pub fn count_exit_edges(forest: &Forest, l: u32, m: u32, big_m: u32) -> Result<EtaReport> {
    let edges = exit_edges(forest, l, m, big_m)?;
    let threshold = (l as f64).sqrt();
    let eta_short = edges.iter().filter(|e| e.length <= threshold).count() as u64;
    let eta_total = edges.len() as u64;
    Ok(EtaReport {
        seed: forest.source().seed(),
        l,
        m,
        big_m,
        eta_short,
        eta_long: eta_total - eta_short,
        eta_total,
    })
}

/// Least-squares fit of `log(mean eta_total)` against `log L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    #[serde(rename = "Ls")]
    pub ls: Vec<u32>,
    pub means: Vec<f64>,
    pub replicates: Vec<usize>,
}

pub const MIN_SCALING_LS: usize = 3;
pub const MIN_SCALING_REPLICATES: usize = 10;

pub fn fit_scaling(reports: &[EtaReport]) -> Result<ScalingFit> {
    let mut groups: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
    for r in reports {
        groups.entry(r.l).or_default().push(r.eta_total);
    }
    if groups.len() < MIN_SCALING_LS {
        return Err(Error::Precondition(format!(
            "need at least {MIN_SCALING_LS} distinct L values, got {}",
            groups.len()
        )));
    }
    if let Some((l, v)) = groups
        .iter()
        .find(|(_, v)| v.len() < MIN_SCALING_REPLICATES)
    {
        return Err(Error::Precondition(format!(
            "L = {l} has {} replicates, need {MIN_SCALING_REPLICATES}",
            v.len()
        )));
    }
    let ls: Vec<u32> = groups.keys().copied().collect();
    let replicates: Vec<usize> = groups.values().map(Vec::len).collect();
    let means: Vec<f64> = groups
        .values()
        .map(|v| v.iter().sum::<u64>() as f64 / v.len() as f64)
        .collect();
    if means.iter().any(|&m| m <= 0.0) {
        return Err(Error::Precondition("mean eta is zero for some L".into()));
    }
    let xs: Vec<f64> = ls.iter().map(|&l| (l as f64).ln()).collect();
    let ys: Vec<f64> = means.iter().map(|m| m.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    Ok(ScalingFit {
        slope,
        intercept: my - slope * mx,
        ls,
        means,
        replicates,
    })
}

/// Outcome of checking the edge-length bound on one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeBoundCheck {
    pub cell: Cell,
    /// Number of edges starting in the cell and crossing its east side.
    pub east_exits: usize,
    /// At least two east exits.
    pub hypothesis_met: bool,
    /// Longest edge whose west vertex is in the cell (0 when there is none).
    pub max_edge_length: f64,
    /// `2 sqrt((2m)^2 + (2M)^2)`.
    pub bound: f64,
    pub violated: bool,
}

/// Abscissa-parametrised ordinate of segment `a -> b` at `x`, for `a.x <= x <= b.x`.
#[inline]
fn ordinate_at(a: Point, b: Point, x: f64) -> f64 {
    if x == a.x {
        a.y
    } else if x == b.x {
        b.y
    } else {
        a.y + (x - a.x) / (b.x - a.x) * (b.y - a.y)
    }
}

pub fn check_edge_length_bound(forest: &Forest, cell: Cell) -> EdgeBoundCheck {
    let pts = forest.points();
    let east = cell.x_max();
    let mut east_exits = 0;
    let mut max_edge_length: f64 = 0.0;
    let lo = pts.partition_point(|p| p.x < cell.x_min());
    for i in lo..pts.len() {
        let p = pts[i];
        if p.x >= east {
            break;
        }
        if !cell.contains(p) {
            continue;
        }
        let Some(q) = forest.parent(i) else { continue };
        max_edge_length = max_edge_length.max(forest.edge_length(i).expect("edge exists"));
        if pts[q].x >= east {
            let y = ordinate_at(p, pts[q], east);
            if y >= cell.y_min() && y < cell.y_max() {
                east_exits += 1;
            }
        }
    }
    let hypothesis_met = east_exits >= 2;
    let bound = 2.0 * cell.diagonal();
    EdgeBoundCheck {
        cell,
        east_exits,
        hypothesis_met,
        max_edge_length,
        bound,
        violated: hypothesis_met && max_edge_length > bound,
    }
}

/// Longest descendant chain ending at each point.
///
/// A child always has a smaller index than its parent, so one ascending pass suffices.
pub fn backward_depths(forest: &Forest) -> Vec<usize> {
    let mut depth = vec![0usize; forest.len()];
    for (i, q) in forest.edges() {
        depth[q] = depth[q].max(depth[i] + 1);
    }
    depth
}

pub fn backward_depth(forest: &Forest, i: usize) -> Result<usize> {
    if i >= forest.len() {
        return Err(Error::Usage(format!("point index {i} out of range")));
    }
    // Only descendants (indices below i) matter.
    let mut depth = vec![0usize; i + 1];
    for k in 0..i {
        if let Some(q) = forest.parent(k) {
            if q <= i {
                depth[q] = depth[q].max(depth[k] + 1);
            }
        }
    }
    Ok(depth[i])
}

/// Vertical segment `{x} x [y_lo, y_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerticalSegment {
    pub x: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl VerticalSegment {
    pub fn new(x: f64, y_lo: f64, y_hi: f64) -> Result<Self> {
        if !(x.is_finite() && y_lo.is_finite() && y_hi.is_finite()) || y_lo > y_hi {
            return Err(Error::Parameter(format!(
                "invalid segment x={x} [{y_lo}, {y_hi}]"
            )));
        }
        Ok(VerticalSegment { x, y_lo, y_hi })
    }

    /// True when the closed edge `a -> b` (with `a.x < b.x`) meets the segment.
    pub fn crossed_by(&self, a: Point, b: Point) -> bool {
        if a.x > self.x || b.x < self.x {
            return false;
        }
        let y = ordinate_at(a, b, self.x);
        y >= self.y_lo && y <= self.y_hi
    }
}

/// Crossings of a vertical segment, with those on long backward chains singled out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthCensus {
    pub seed: u64,
    pub segment: VerticalSegment,
    pub depth_threshold: usize,
    pub crossing_count: usize,
    pub deep_count: usize,
}

fn check_segment_in_window(forest: &Forest, s: &VerticalSegment) -> Result<()> {
    let w = forest.source().window();
    if s.x < w.x_min || s.x >= w.x_max || s.y_lo < w.y_min || s.y_hi > w.y_max {
        return Err(Error::Precondition(format!(
            "segment {s:?} outside window {w:?}"
        )));
    }
    Ok(())
}

/// West endpoints of the edges meeting `segment`.
pub fn crossing_edges(forest: &Forest, segment: &VerticalSegment) -> Vec<usize> {
    let pts = forest.points();
    let hi = pts.partition_point(|p| p.x <= segment.x);
    (0..hi)
        .filter(|&i| {
            forest
                .parent(i)
                .is_some_and(|q| segment.crossed_by(pts[i], pts[q]))
        })
        .collect()
}

/// Census for several depth thresholds sharing one crossing scan.
pub fn census_depth_profile(
    forest: &Forest,
    segment: VerticalSegment,
    thresholds: &[usize],
) -> Result<Vec<DepthCensus>> {
    check_segment_in_window(forest, &segment)?;
    let depth = backward_depths(forest);
    let crossing = crossing_edges(forest, &segment);
    Ok(thresholds
        .iter()
        .map(|&d| DepthCensus {
            seed: forest.source().seed(),
            segment,
            depth_threshold: d,
            crossing_count: crossing.len(),
            deep_count: crossing.iter().filter(|&&i| depth[i] >= d).count(),
        })
        .collect())
}

/// Crossings of `segment`, and those whose west endpoint has backward depth `>= d`.
pub fn census_bi_infinite(
    forest: &Forest,
    segment: VerticalSegment,
    d: usize,
) -> Result<DepthCensus> {
    Ok(census_depth_profile(forest, segment, &[d])?[0])
}

/// Crossings of `j` by edges whose backward subtree contains an edge crossing `i`.
///
/// `crossing_count` counts those crossings, `deep_count` the ones whose west endpoint
/// also has backward depth `>= d`.
pub fn census_r_tilde(
    forest: &Forest,
    i: VerticalSegment,
    j: VerticalSegment,
    d: usize,
) -> Result<DepthCensus> {
    if !(i.x < j.x) {
        return Err(Error::Precondition(format!(
            "interval I (x = {}) must lie strictly left of J (x = {})",
            i.x, j.x
        )));
    }
    check_segment_in_window(forest, &i)?;
    check_segment_in_window(forest, &j)?;
    let pts = forest.points();
    let mut reaches_i = vec![false; forest.len()];
    for v in crossing_edges(forest, &i) {
        reaches_i[v] = true;
    }
    for (c, q) in forest.edges() {
        if reaches_i[c] {
            reaches_i[q] = true;
        }
    }
    let depth = backward_depths(forest);
    let hits: Vec<usize> = crossing_edges(forest, &j)
        .into_iter()
        .filter(|&v| reaches_i[v])
        .collect();
    debug_assert!(hits.iter().all(|&v| pts[v].x <= j.x));
    Ok(DepthCensus {
        seed: forest.source().seed(),
        segment: j,
        depth_threshold: d,
        crossing_count: hits.len(),
        deep_count: hits.iter().filter(|&&v| depth[v] >= d).count(),
    })
}
