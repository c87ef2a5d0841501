//! The directed spanning forest: every point is joined to the nearest point with a
//! strictly larger abscissa.
//!
//! A finite sample only approximates the planar process near the window boundary: a point
//! outside the window could be closer than the ancestor found inside it. An edge is
//! *certified* when its closed right half-disc lies inside the window, in which case the
//! edge is the same as in any extension of the configuration beyond the window.
//! Path tracing, coalescence and class counting follow certified edges only.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::point_process::{Point, PointSet};
use crate::spatial_index::HalfPlaneIndex;

/// Default cap on the number of edges followed by a path.
pub const DEFAULT_MAX_STEPS: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct Forest {
    source: PointSet,
    parent: Vec<Option<usize>>,
    length: Vec<f64>,
    certified: Vec<bool>,
    child_start: Vec<usize>,
    child_items: Vec<usize>,
}

/// Builds the forest on `points`.
pub fn build_dsf(points: PointSet) -> Forest {
    let n = points.len();
    let (parent, length) = {
        let index = HalfPlaneIndex::build(&points);
        let mut parent = Vec::with_capacity(n);
        let mut length = Vec::with_capacity(n);
        for i in 0..n {
            match index.nearest_right(i).expect("index in range") {
                Some(nb) => {
                    parent.push(Some(nb.index));
                    length.push(nb.distance);
                }
                None => {
                    parent.push(None);
                    length.push(f64::NAN);
                }
            }
        }
        (parent, length)
    };
    let w = *points.window();
    let certified = points
        .points()
        .iter()
        .zip(&length)
        .map(|(p, &d)| !d.is_nan() && p.x + d < w.x_max && p.y - d >= w.y_min && p.y + d < w.y_max)
        .collect();

    let mut child_start = vec![0usize; n + 1];
    for &q in parent.iter().flatten() {
        child_start[q + 1] += 1;
    }
    for i in 1..=n {
        child_start[i] += child_start[i - 1];
    }
    let mut fill = child_start.clone();
    let mut child_items = vec![0usize; child_start[n]];
    for (i, q) in parent.iter().enumerate() {
        if let Some(q) = *q {
            child_items[fill[q]] = i;
            fill[q] += 1;
        }
    }

    Forest {
        source: points,
        parent,
        length,
        certified,
        child_start,
        child_items,
    }
}

impl Forest {
    pub fn source(&self) -> &PointSet {
        &self.source
    }

    pub fn points(&self) -> &[Point] {
        self.source.points()
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parent[i]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    /// Length of the edge leaving `i`, if any.
    pub fn edge_length(&self, i: usize) -> Option<f64> {
        self.parent[i].map(|_| self.length[i])
    }

    pub fn is_certified(&self, i: usize) -> bool {
        self.certified[i]
    }

    pub fn certified(&self) -> &[bool] {
        &self.certified
    }

    /// Children of `i` in ascending index order.
    pub fn children(&self, i: usize) -> &[usize] {
        &self.child_items[self.child_start[i]..self.child_start[i + 1]]
    }

    /// Iterator over `(child, parent)` pairs.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parent
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|q| (i, q)))
    }

    /// Parent of `i` when the edge leaving `i` is certified.
    #[inline]
    pub fn certified_parent(&self, i: usize) -> Option<usize> {
        if self.certified[i] {
            self.parent[i]
        } else {
            None
        }
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            return Err(Error::Usage(format!(
                "point index {i} out of range for {} points",
                self.len()
            )));
        }
        Ok(())
    }

    /// Checks the structural invariants: abscissae increase along edges, certified edges
    /// have their half-disc inside the window and the children table inverts `parent`.
    pub fn check_invariants(&self) -> Result<()> {
        let pts = self.points();
        let w = self.source.window();
        for (i, q) in self.edges() {
            if !(pts[q].x > pts[i].x) {
                return Err(Error::Precondition(format!(
                    "edge {i} -> {q} does not move right"
                )));
            }
            let d = self.length[i];
            if self.certified[i]
                && !(pts[i].x + d < w.x_max && pts[i].y - d >= w.y_min && pts[i].y + d < w.y_max)
            {
                return Err(Error::Precondition(format!(
                    "edge {i} certified outside window"
                )));
            }
            if !self.children(q).contains(&i) {
                return Err(Error::Precondition(format!("child {i} missing under {q}")));
            }
        }
        let listed: usize = (0..self.len()).map(|q| self.children(q).len()).sum();
        if listed != self.edges().count() {
            return Err(Error::Precondition(
                "children table has extra entries".into(),
            ));
        }
        if self
            .parent
            .iter()
            .zip(&self.certified)
            .any(|(p, &c)| p.is_none() && c)
        {
            return Err(Error::Precondition(
                "parentless point marked certified".into(),
            ));
        }
        Ok(())
    }
}

/// A path of iterated ancestors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub vertices: Vec<usize>,
    /// False when tracing stopped in front of an uncertified edge.
    pub fully_certified: bool,
    /// True when tracing stopped at a point without ancestor or at the step limit.
    pub truncated: bool,
}

impl Path {
    pub fn last(&self) -> usize {
        *self.vertices.last().expect("paths are never empty")
    }
}

/// Follows ancestors from `start` for at most `max_steps` edges.
///
/// Stops at the first point without ancestor (`truncated`), before the first uncertified
/// edge (`fully_certified = false`), or after `max_steps` edges (`truncated`).
pub fn trace_path(forest: &Forest, start: usize, max_steps: usize) -> Result<Path> {
    forest.check_index(start)?;
    if max_steps == 0 {
        return Err(Error::Usage("max_steps must be positive".into()));
    }
    let mut vertices = vec![start];
    let mut v = start;
    let mut fully_certified = true;
    let mut truncated = false;
    loop {
        if vertices.len() > max_steps {
            truncated = true;
            break;
        }
        match forest.parent[v] {
            None => {
                truncated = true;
                break;
            }
            Some(_) if !forest.certified[v] => {
                fully_certified = false;
                break;
            }
            Some(q) => {
                vertices.push(q);
                v = q;
            }
        }
    }
    Ok(Path {
        vertices,
        fully_certified,
        truncated,
    })
}

/// First common vertex of the certified paths from `i` and `j`.
///
/// Indices increase strictly along every path, so the two walks advance the smaller
/// index until they meet or one of them ends.
pub fn coalescence_point(forest: &Forest, i: usize, j: usize) -> Result<Option<usize>> {
    forest.check_index(i)?;
    forest.check_index(j)?;
    let (mut a, mut b) = (i, j);
    loop {
        if a == b {
            return Ok(Some(a));
        }
        let next = if a < b {
            forest.certified_parent(a).map(|q| a = q)
        } else {
            forest.certified_parent(b).map(|q| b = q)
        };
        if next.is_none() {
            return Ok(None);
        }
    }
}

/// Result of partitioning path starts into coalescence classes at one abscissa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassCount {
    pub x_line: f64,
    /// Number of distinct classes among included starts.
    pub classes: usize,
    /// Starts whose certified path reaches abscissa `x_line`.
    pub included: usize,
    /// Starts whose certified path ends before `x_line`.
    pub excluded: usize,
}

#[derive(Debug)]
struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Class counts for several abscissae at once.
///
/// Each start's certified path is walked until it ends or reaches a vertex already
/// claimed by an earlier start; the claimed vertex is where the two paths first meet.
/// Two starts belong to the same class at `x_line` when they are connected by meetings
/// at abscissa `<= x_line`. Starts whose certified path ends before `x_line` are
/// excluded. Results are returned in the order of `x_lines`.
pub fn class_count_profile(
    forest: &Forest,
    starts: &[usize],
    x_lines: &[f64],
) -> Result<Vec<ClassCount>> {
    let w = forest.source.window();
    for &x in x_lines {
        if !(x >= w.x_min && x < w.x_max) {
            return Err(Error::Precondition(format!(
                "x_line {x} outside window abscissae [{}, {})",
                w.x_min, w.x_max
            )));
        }
    }
    for &s in starts {
        forest.check_index(s)?;
    }
    let pts = forest.points();
    const FREE: u32 = u32::MAX;
    let mut owner = vec![FREE; forest.len()];
    let mut reach = vec![f64::NEG_INFINITY; starts.len()];
    // (abscissa of meeting vertex, later start, earlier start)
    let mut meetings: Vec<(f64, usize, usize)> = Vec::new();

    for (slot, &start) in starts.iter().enumerate() {
        let mut v = start;
        let mut steps = 0usize;
        loop {
            let o = owner[v];
            if o != FREE {
                let o = o as usize;
                meetings.push((pts[v].x, slot, o));
                reach[slot] = reach[o];
                break;
            }
            owner[v] = slot as u32;
            match forest.certified_parent(v) {
                Some(q) if steps < DEFAULT_MAX_STEPS => {
                    v = q;
                    steps += 1;
                }
                _ => {
                    reach[slot] = pts[v].x;
                    break;
                }
            }
        }
    }
    meetings.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut order: Vec<usize> = (0..x_lines.len()).collect();
    order.sort_by(|&a, &b| x_lines[a].total_cmp(&x_lines[b]));
    let mut uf = UnionFind::new(starts.len());
    let mut applied = 0;
    let mut out = vec![None; x_lines.len()];
    for k in order {
        let x_line = x_lines[k];
        while applied < meetings.len() && meetings[applied].0 <= x_line {
            uf.union(meetings[applied].1, meetings[applied].2);
            applied += 1;
        }
        let mut roots = BTreeSet::new();
        let mut included = 0;
        for s in 0..starts.len() {
            if reach[s] >= x_line {
                included += 1;
                roots.insert(uf.find(s));
            }
        }
        out[k] = Some(ClassCount {
            x_line,
            classes: roots.len(),
            included,
            excluded: starts.len() - included,
        });
    }
    Ok(out
        .into_iter()
        .map(|c| c.expect("every x_line visited"))
        .collect())
}

/// Number of coalescence classes among `starts` at abscissa `x_line`.
pub fn count_disjoint_classes(
    forest: &Forest,
    starts: &[usize],
    x_line: f64,
) -> Result<ClassCount> {
    Ok(class_count_profile(forest, starts, &[x_line])?[0])
}

/// Axis-aligned cell `[cx - m, cx + m) x [cy - M, cy + M)` with integer half-sides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub m: u32,
    pub big_m: u32,
    pub center: Point,
}

impl Cell {
    pub fn new(m: u32, big_m: u32) -> Result<Self> {
        Self::translated(m, big_m, Point::new(0.0, 0.0))
    }

    pub fn translated(m: u32, big_m: u32, center: Point) -> Result<Self> {
        if m == 0 || big_m == 0 {
            return Err(Error::Parameter(
                "cell half-sides must be at least 1".into(),
            ));
        }
        Ok(Cell { m, big_m, center })
    }

    pub fn x_min(&self) -> f64 {
        self.center.x - self.m as f64
    }

    /// Abscissa of the east side.
    pub fn x_max(&self) -> f64 {
        self.center.x + self.m as f64
    }

    pub fn y_min(&self) -> f64 {
        self.center.y - self.big_m as f64
    }

    pub fn y_max(&self) -> f64 {
        self.center.y + self.big_m as f64
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x_min() && p.x < self.x_max() && p.y >= self.y_min() && p.y < self.y_max()
    }

    /// Length of the cell diagonal, `sqrt((2m)^2 + (2M)^2)`.
    pub fn diagonal(&self) -> f64 {
        let (w, h) = (2.0 * self.m as f64, 2.0 * self.big_m as f64);
        (w * w + h * h).sqrt()
    }
}
