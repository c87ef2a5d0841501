//! Exact "nearest point with strictly larger abscissa" queries.
//!
//! [`HalfPlaneIndex`] buckets the points on a uniform grid with about one point per cell
//! and answers a query by visiting rings of cells of growing Chebyshev radius, restricted
//! to the columns at or right of the query cell. The search stops as soon as the best
//! squared distance is below the squared distance to the nearest unvisited ring, so a
//! unit-intensity process needs O(1) expected work per query.
//!
//! Candidates are ranked by `(squared distance, ordinate, index)`, the same key used by
//! [`nearest_right_naive`], so both return identical answers including ties.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::point_process::{Point, PointSet};

/// Answer to a half-plane nearest-neighbour query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Clone, Copy)]
struct Candidate {
    d2: f64,
    y: f64,
    index: usize,
}

impl Candidate {
    fn cmp(&self, other: &Candidate) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.y.total_cmp(&other.y))
            .then(self.index.cmp(&other.index))
    }

    fn offer(best: &mut Option<Candidate>, c: Candidate) {
        match best {
            Some(b) if b.cmp(&c) != Ordering::Greater => {}
            _ => *best = Some(c),
        }
    }

    fn into_neighbor(self) -> Neighbor {
        Neighbor {
            index: self.index,
            distance: self.d2.sqrt(),
        }
    }
}

#[inline]
fn candidate(site: &Point, points: &[Point], j: usize) -> Option<Candidate> {
    let p = &points[j];
    (p.x > site.x).then(|| Candidate {
        d2: site.dist2(p),
        y: p.y,
        index: j,
    })
}

fn check_site(points: &PointSet, site: usize) -> Result<()> {
    if site >= points.len() {
        return Err(Error::Usage(format!(
            "site index {site} out of range for {} points",
            points.len()
        )));
    }
    Ok(())
}

/// Linear-scan reference: nearest point with strictly larger abscissa.
pub fn nearest_right_naive(points: &PointSet, site: usize) -> Result<Option<Neighbor>> {
    check_site(points, site)?;
    let pts = points.points();
    let s = pts[site];
    let mut best = None;
    for j in 0..pts.len() {
        if let Some(c) = candidate(&s, pts, j) {
            Candidate::offer(&mut best, c);
        }
    }
    Ok(best.map(Candidate::into_neighbor))
}

/// Immutable grid index over a [`PointSet`].
#[derive(Debug, Clone)]
pub struct HalfPlaneIndex<'a> {
    points: &'a PointSet,
    x0: f64,
    y0: f64,
    cell: f64,
    cols: usize,
    rows: usize,
    /// CSR offsets into `items`, one slot per cell plus a sentinel.
    start: Vec<u32>,
    items: Vec<u32>,
    /// Absolute slack absorbing floating-point error in cell assignment.
    margin: f64,
}

impl<'a> HalfPlaneIndex<'a> {
    pub fn build(points: &'a PointSet) -> Self {
        let w = points.window();
        let n = points.len();
        let cell = (w.area() / n.max(1) as f64).sqrt();
        let cols = ((w.width() / cell).ceil() as usize).clamp(1, 2 * n + 1);
        let rows = ((w.height() / cell).ceil() as usize).clamp(1, 2 * n + 1);
        let cell = (w.width() / cols as f64).max(w.height() / rows as f64);
        let scale = [w.x_min, w.x_max, w.y_min, w.y_max]
            .iter()
            .fold(1.0f64, |m, v| m.max(v.abs()));
        let margin = 1e-9 * scale + 1e-9 * cell;

        let mut index = HalfPlaneIndex {
            points,
            x0: w.x_min,
            y0: w.y_min,
            cell,
            cols,
            rows,
            start: Vec::new(),
            items: Vec::new(),
            margin,
        };
        let keys: Vec<usize> = points
            .points()
            .iter()
            .map(|p| {
                let (c, r) = index.locate(p);
                r * cols + c
            })
            .collect();
        let mut start = vec![0u32; cols * rows + 1];
        for &k in &keys {
            start[k + 1] += 1;
        }
        for i in 1..start.len() {
            start[i] += start[i - 1];
        }
        let mut fill = start.clone();
        let mut items = vec![0u32; n];
        for (j, &k) in keys.iter().enumerate() {
            items[fill[k] as usize] = j as u32;
            fill[k] += 1;
        }
        index.start = start;
        index.items = items;
        index
    }

    pub fn points(&self) -> &'a PointSet {
        self.points
    }

    #[inline]
    fn locate(&self, p: &Point) -> (usize, usize) {
        let c = ((p.x - self.x0) / self.cell)
            .floor()
            .clamp(0.0, (self.cols - 1) as f64) as usize;
        let r = ((p.y - self.y0) / self.cell)
            .floor()
            .clamp(0.0, (self.rows - 1) as f64) as usize;
        (c, r)
    }

    #[inline]
    fn scan_cell(&self, col: usize, row: usize, site: &Point, best: &mut Option<Candidate>) {
        let k = row * self.cols + col;
        let pts = self.points.points();
        for &j in &self.items[self.start[k] as usize..self.start[k + 1] as usize] {
            if let Some(c) = candidate(site, pts, j as usize) {
                Candidate::offer(best, c);
            }
        }
    }

    /// Nearest point with strictly larger abscissa than point `site`.
    pub fn nearest_right(&self, site: usize) -> Result<Option<Neighbor>> {
        check_site(self.points, site)?;
        let s = self.points.points()[site];
        let (cx, cy) = self.locate(&s);
        let (cols, rows) = (self.cols as i64, self.rows as i64);
        let (cx, cy) = (cx as i64, cy as i64);
        let col_lo = (cx - 1).max(0);
        let mut best: Option<Candidate> = None;

        for k in 0i64.. {
            if let Some(b) = best {
                // Points in rings >= k are farther than (k - 1) cells from the site.
                let bound = (k - 1) as f64 * self.cell - self.margin;
                if bound > 0.0 && b.d2 < bound * bound {
                    break;
                }
            }
            let right = cx + k;
            let (top, bottom) = (cy + k, cy - k);
            if right >= cols && bottom < 0 && top >= rows {
                break;
            }
            let col_hi = right.min(cols - 1);
            for row in [bottom, top] {
                if (0..rows).contains(&row) {
                    for col in col_lo..=col_hi {
                        self.scan_cell(col as usize, row as usize, &s, &mut best);
                    }
                }
                if k == 0 {
                    break;
                }
            }
            if right < cols {
                for row in (bottom + 1).max(0)..=(top - 1).min(rows - 1) {
                    self.scan_cell(right as usize, row as usize, &s, &mut best);
                }
            }
        }
        Ok(best.map(Candidate::into_neighbor))
    }
}

/// Builds the index for `points`.
pub fn build_index(points: &PointSet) -> HalfPlaneIndex<'_> {
    HalfPlaneIndex::build(points)
}
