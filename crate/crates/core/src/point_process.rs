//! Seeded sampling of homogeneous Poisson point processes and Boolean hole models.

use std::cmp::Ordering;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Means below this are sampled by sequential inversion; larger ones by rejection.
const INVERSION_LIMIT: f64 = 30.0;

/// Axis-aligned half-open rectangle `[x_min, x_max) x [y_min, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Window {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let w = Window {
            x_min,
            x_max,
            y_min,
            y_max,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.x_min < self.x_max) || !(self.y_min < self.y_max) {
            return Err(Error::Parameter(format!("degenerate window {self:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Half-open membership test.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x_min && p.x < self.x_max && p.y >= self.y_min && p.y < self.y_max
    }

    /// The window grown by `r` on every side.
    pub fn dilate(&self, r: f64) -> Window {
        Window {
            x_min: self.x_min - r,
            x_max: self.x_max + r,
            y_min: self.y_min - r,
            y_max: self.y_max + r,
        }
    }

    /// True when `inner` is a subset of `self`.
    pub fn contains_window(&self, inner: &Window) -> bool {
        inner.x_min >= self.x_min
            && inner.x_max <= self.x_max
            && inner.y_min >= self.y_min
            && inner.y_max <= self.y_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    #[inline]
    pub fn dist2(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    #[inline]
    pub fn dist(&self, other: &Point) -> f64 {
        self.dist2(other).sqrt()
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point { x, y }
    }
}

/// Abscissa first, then ordinate.
#[inline]
pub(crate) fn lex_cmp(a: &Point, b: &Point) -> Ordering {
    a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y))
}

/// A finite point configuration inside a window.
///
/// Points are kept sorted by ascending abscissa (ties by ordinate), are all inside the
/// window and are pairwise distinct. Point indices used throughout the crate refer to
/// this sorted order, so an index comparison is an abscissa comparison for points with
/// distinct abscissae.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    window: Window,
    points: Vec<Point>,
    intensity: f64,
    seed: u64,
}

impl PointSet {
    /// Builds a point set from arbitrary input points.
    ///
    /// Points are stably sorted, so equal abscissae keep ordinate order and then
    /// insertion order. Points outside the window, non-finite coordinates and exact
    /// duplicates are rejected.
    pub fn new(window: Window, points: Vec<Point>, intensity: f64, seed: u64) -> Result<Self> {
        window.validate()?;
        check_intensity(intensity)?;
        if let Some(p) = points.iter().find(|p| !window.contains(**p)) {
            return Err(Error::Parameter(format!(
                "point ({}, {}) lies outside window {window:?}",
                p.x, p.y
            )));
        }
        let mut points = points;
        points.sort_by(lex_cmp);
        if let Some(w) = points.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Parameter(format!(
                "duplicate point ({}, {})",
                w[0].x, w[0].y
            )));
        }
        Ok(PointSet {
            window,
            points,
            intensity,
            seed,
        })
    }

    /// Point set with an intensity of 1 and seed 0, for hand-built configurations.
    pub fn from_points(window: Window, points: &[(f64, f64)]) -> Result<Self> {
        Self::new(window, points.iter().map(|&p| p.into()).collect(), 1.0, 0)
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<Point> {
        self.points.get(i).copied()
    }

    /// Checks the sortedness, distinctness and in-window invariants.
    pub fn check_invariants(&self) -> Result<()> {
        if let Some(p) = self.points.iter().find(|p| !self.window.contains(**p)) {
            return Err(Error::Precondition(format!(
                "point ({}, {}) outside window",
                p.x, p.y
            )));
        }
        if self
            .points
            .windows(2)
            .any(|w| lex_cmp(&w[0], &w[1]) != Ordering::Less)
        {
            return Err(Error::Precondition(
                "points not strictly sorted by (x, y)".into(),
            ));
        }
        Ok(())
    }

    /// Keeps the points for which `keep` returns true, preserving order.
    pub(crate) fn filtered(&self, mut keep: impl FnMut(&Point) -> bool) -> PointSet {
        PointSet {
            window: self.window,
            points: self.points.iter().copied().filter(|p| keep(p)).collect(),
            intensity: self.intensity,
            seed: self.seed,
        }
    }
}

/// Germs of a Boolean model with fixed-radius grains.
#[derive(Debug, Clone, PartialEq)]
pub struct BooleanModel {
    /// Sampling region: the observation window dilated by `radius`.
    pub window: Window,
    pub germs: Vec<Point>,
    pub lambda: f64,
    pub radius: f64,
    pub seed: u64,
}

impl BooleanModel {
    /// Builds a model from explicit germs; germs outside `window` are rejected.
    pub fn new(
        window: Window,
        germs: Vec<Point>,
        lambda: f64,
        radius: f64,
        seed: u64,
    ) -> Result<Self> {
        window.validate()?;
        check_intensity(lambda)?;
        check_radius(radius)?;
        if germs.iter().any(|g| !window.contains(*g)) {
            return Err(Error::Parameter("germ outside sampling window".into()));
        }
        Ok(BooleanModel {
            window,
            germs,
            lambda,
            radius,
            seed,
        })
    }

    /// True when `p` lies in a closed grain.
    pub fn covers(&self, p: Point) -> bool {
        let r2 = self.radius * self.radius;
        self.germs.iter().any(|g| g.dist2(&p) <= r2)
    }
}

fn check_intensity(intensity: f64) -> Result<()> {
    if !(intensity.is_finite() && intensity > 0.0) {
        return Err(Error::Parameter(format!(
            "intensity must be positive and finite, got {intensity}"
        )));
    }
    Ok(())
}

fn check_radius(r: f64) -> Result<()> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::Parameter(format!(
            "radius must be positive and finite, got {r}"
        )));
    }
    Ok(())
}

/// Poisson variate with the given mean.
///
/// Sequential-search inversion below a mean of 30, the `rand_distr` rejection sampler above.
pub fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    if !(mean.is_finite() && mean >= 0.0) {
        return Err(Error::Parameter(format!("invalid Poisson mean {mean}")));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    if mean < INVERSION_LIMIT {
        let u: f64 = rng.random();
        let mut k = 0u64;
        let mut p = (-mean).exp();
        let mut cdf = p;
        while u > cdf {
            k += 1;
            p *= mean / k as f64;
            if p == 0.0 {
                break;
            }
            cdf += p;
        }
        return Ok(k);
    }
    let dist = Poisson::new(mean).map_err(|e| Error::Parameter(e.to_string()))?;
    Ok(dist.sample(rng) as u64)
}

fn uniform_in<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    loop {
        let v = lo + rng.random::<f64>() * (hi - lo);
        if v < hi {
            return v;
        }
    }
}

fn sample_uniform_points<R: Rng + ?Sized>(window: &Window, count: u64, rng: &mut R) -> Vec<Point> {
    (0..count)
        .map(|_| {
            let x = uniform_in(window.x_min, window.x_max, rng);
            let y = uniform_in(window.y_min, window.y_max, rng);
            Point { x, y }
        })
        .collect()
}

/// Samples a homogeneous Poisson point process on `window`.
///
/// The output depends only on `(window, intensity, seed)`.
pub fn sample_ppp(window: Window, intensity: f64, seed: u64) -> Result<PointSet> {
    window.validate()?;
    check_intensity(intensity)?;
    let mut rng = rng::stream(seed);
    let count = poisson_count(intensity * window.area(), &mut rng)?;
    let mut points = sample_uniform_points(&window, count, &mut rng);
    points.sort_by(lex_cmp);
    // Exact coincidences have probability zero; drop them rather than fail.
    points.dedup();
    Ok(PointSet {
        window,
        points,
        intensity,
        seed,
    })
}

/// Samples the germs of a Boolean model with intensity `lambda` and grain radius `r`.
///
/// Germs are drawn on the observation window dilated by `r`, which is exactly the set of
/// centres whose grains can reach the window.
pub fn sample_boolean(window: Window, lambda: f64, r: f64, seed: u64) -> Result<BooleanModel> {
    window.validate()?;
    check_intensity(lambda)?;
    check_radius(r)?;
    let dilated = window.dilate(r);
    let mut rng = rng::stream(seed);
    let count = poisson_count(lambda * dilated.area(), &mut rng)?;
    let germs = sample_uniform_points(&dilated, count, &mut rng);
    Ok(BooleanModel {
        window: dilated,
        germs,
        lambda,
        radius: r,
        seed,
    })
}

/// Removes every point at distance `<= r` from some germ (closed grains).
pub fn remove_covered(points: &PointSet, holes: &BooleanModel) -> PointSet {
    if holes.germs.is_empty() || points.is_empty() {
        return points.clone();
    }
    let grid = GermGrid::new(holes);
    points.filtered(|p| !grid.covers(*p))
}

/// Uniform bucket grid over germs with cells at least one radius wide, so a covering
/// germ is always in the 3x3 block around the query cell.
struct GermGrid<'a> {
    model: &'a BooleanModel,
    cell: f64,
    cols: usize,
    rows: usize,
    start: Vec<usize>,
    items: Vec<usize>,
}

impl<'a> GermGrid<'a> {
    fn new(model: &'a BooleanModel) -> Self {
        let w = &model.window;
        let n = model.germs.len();
        let by_count = (w.area() / (n as f64 + 1.0)).sqrt();
        let cell = model.radius.max(by_count) * (1.0 + 1e-9);
        let cols = ((w.width() / cell).ceil() as usize).max(1);
        let rows = ((w.height() / cell).ceil() as usize).max(1);
        let mut counts = vec![0usize; cols * rows + 1];
        let keys: Vec<usize> = model
            .germs
            .iter()
            .map(|g| {
                let (c, r) = Self::locate(w, cell, cols, rows, *g);
                r * cols + c
            })
            .collect();
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let start = counts.clone();
        let mut fill = counts;
        let mut items = vec![0usize; n];
        for (gi, &k) in keys.iter().enumerate() {
            items[fill[k]] = gi;
            fill[k] += 1;
        }
        GermGrid {
            model,
            cell,
            cols,
            rows,
            start,
            items,
        }
    }

    fn locate(w: &Window, cell: f64, cols: usize, rows: usize, p: Point) -> (usize, usize) {
        let c = ((p.x - w.x_min) / cell)
            .floor()
            .clamp(0.0, (cols - 1) as f64) as usize;
        let r = ((p.y - w.y_min) / cell)
            .floor()
            .clamp(0.0, (rows - 1) as f64) as usize;
        (c, r)
    }

    fn covers(&self, p: Point) -> bool {
        let r2 = self.model.radius * self.model.radius;
        let (c, r) = Self::locate(&self.model.window, self.cell, self.cols, self.rows, p);
        for row in r.saturating_sub(1)..=(r + 1).min(self.rows - 1) {
            for col in c.saturating_sub(1)..=(c + 1).min(self.cols - 1) {
                let k = row * self.cols + col;
                let hit = self.items[self.start[k]..self.start[k + 1]]
                    .iter()
                    .any(|&g| self.model.germs[g].dist2(&p) <= r2);
                if hit {
                    return true;
                }
            }
        }
        false
    }
}
