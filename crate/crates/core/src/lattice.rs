//! Coalescing walks on the even sublattice and their dual forest on the odd sublattice.
//!
//! Every even vertex `(i, j)` (`i + j` even) points to `(i + 1, j + 1)` or `(i + 1, j - 1)`
//! with probability one half. The dual forest lives on odd vertices and points left:
//! `(i, j) -> (i - 1, j + 1)` exactly when `(i - 1, j) -> (i, j - 1)`, and
//! `(i, j) -> (i - 1, j - 1)` exactly when `(i - 1, j) -> (i, j + 1)`.
//!
//! Orientation bits are a counter-based function of `(seed, i, j)`, so a sampled
//! rectangle is a window into one infinite random field and walks can be simulated
//! beyond it without materialising the grid.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, splitmix64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    /// Ordinate increases by one along the edge.
    Up,
    /// Ordinate decreases by one along the edge.
    Down,
}

impl Orientation {
    pub fn dy(self) -> i64 {
        match self {
            Orientation::Up => 1,
            Orientation::Down => -1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Orientation::Up => Orientation::Down,
            Orientation::Down => Orientation::Up,
        }
    }

    fn from_bit(up: bool) -> Self {
        if up {
            Orientation::Up
        } else {
            Orientation::Down
        }
    }
}

/// Fair orientation of vertex `(i, j)` in the field with the given seed.
#[inline]
pub fn orientation_bit(seed: u64, i: i64, j: i64) -> Orientation {
    let h = splitmix64(derive_seed(seed, i as u64) ^ splitmix64(j as u64 ^ 0x5bd1_e995));
    Orientation::from_bit(h >> 63 == 1)
}

#[inline]
fn is_even(i: i64, j: i64) -> bool {
    (i + j).rem_euclid(2) == 0
}

/// Dense storage over columns `0..cols` and ordinates `-H..=H`.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Grid {
    first_col: i64,
    cols: i64,
    height: i64,
    bits: Vec<Option<Orientation>>,
}

impl Grid {
    fn slot(&self, i: i64, j: i64) -> Option<usize> {
        let c = i - self.first_col;
        if c < 0 || c >= self.cols || j.abs() > self.height {
            return None;
        }
        Some((c * (2 * self.height + 1) + j + self.height) as usize)
    }

    fn get(&self, i: i64, j: i64) -> Option<Orientation> {
        self.slot(i, j).and_then(|s| self.bits[s])
    }
}

/// Primal forest on even vertices of `[0, W) x [-H, H]`; column `W - 1` has no edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeForest {
    width: i64,
    height: i64,
    seed: u64,
    grid: Grid,
}

pub fn sample_lattice(width: u32, height: u32, seed: u64) -> Result<LatticeForest> {
    if width < 2 || height < 1 {
        return Err(Error::Parameter(format!(
            "lattice needs W >= 2 and H >= 1, got W = {width}, H = {height}"
        )));
    }
    let (w, h) = (width as i64, height as i64);
    let mut bits = Vec::with_capacity(((w - 1) * (2 * h + 1)) as usize);
    for i in 0..w - 1 {
        for j in -h..=h {
            bits.push(is_even(i, j).then(|| orientation_bit(seed, i, j)));
        }
    }
    Ok(LatticeForest {
        width: w,
        height: h,
        seed,
        grid: Grid {
            first_col: 0,
            cols: w - 1,
            height: h,
            bits,
        },
    })
}

impl LatticeForest {
    pub fn width(&self) -> i64 {
        self.width
    }

    pub fn height(&self) -> i64 {
        self.height
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Orientation of the edge leaving even vertex `(i, j)`, if it has one.
    pub fn orientation(&self, i: i64, j: i64) -> Option<Orientation> {
        self.grid.get(i, j)
    }

    pub fn target(&self, i: i64, j: i64) -> Option<(i64, i64)> {
        self.orientation(i, j).map(|o| (i + 1, j + o.dy()))
    }

    /// Even vertices of the rectangle, column by column.
    pub fn vertices(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        let h = self.height;
        (0..self.width).flat_map(move |i| {
            (-h..=h)
                .filter(move |&j| is_even(i, j))
                .map(move |j| (i, j))
        })
    }

    /// Every edge as `(from, to)`.
    pub fn edges(&self) -> Vec<((i64, i64), (i64, i64))> {
        self.vertices()
            .filter_map(|(i, j)| self.target(i, j).map(|t| ((i, j), t)))
            .collect()
    }

    /// Vertices violating "one outgoing edge before the last column, none in it".
    pub fn out_degree_violations(&self) -> Vec<(i64, i64)> {
        self.vertices()
            .filter(|&(i, j)| {
                let has = self.orientation(i, j).is_some();
                has != (i < self.width - 1)
            })
            .collect()
    }

    /// Rebuilds the orientation table with one bit replaced.
    pub fn with_orientation(&self, i: i64, j: i64, o: Orientation) -> Result<Self> {
        let mut out = self.clone();
        match out.grid.slot(i, j) {
            Some(s) if out.grid.bits[s].is_some() => out.grid.bits[s] = Some(o),
            _ => {
                return Err(Error::Usage(format!(
                    "({i}, {j}) is not an interior even vertex"
                )))
            }
        }
        Ok(out)
    }

    pub(crate) fn from_parts(
        width: i64,
        height: i64,
        seed: u64,
        bits: Vec<Option<Orientation>>,
    ) -> Result<Self> {
        if width < 2 || height < 1 || bits.len() != ((width - 1) * (2 * height + 1)) as usize {
            return Err(Error::Format("lattice table has the wrong shape".into()));
        }
        Ok(LatticeForest {
            width,
            height,
            seed,
            grid: Grid {
                first_col: 0,
                cols: width - 1,
                height,
                bits,
            },
        })
    }
}

/// Dual forest on odd vertices of `[1, W) x [-H, H]`, edges pointing left.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DualForest {
    width: i64,
    height: i64,
    grid: Grid,
}

pub fn build_dual(forest: &LatticeForest) -> DualForest {
    let (w, h) = (forest.width, forest.height);
    let mut bits = Vec::with_capacity(((w - 1) * (2 * h + 1)) as usize);
    for i in 1..w {
        for j in -h..=h {
            bits.push(if is_even(i, j) {
                None
            } else {
                // (i - 1, j) Down => dual Up; (i - 1, j) Up => dual Down.
                forest.orientation(i - 1, j).map(Orientation::flipped)
            });
        }
    }
    DualForest {
        width: w,
        height: h,
        grid: Grid {
            first_col: 1,
            cols: w - 1,
            height: h,
            bits,
        },
    }
}

impl DualForest {
    pub fn width(&self) -> i64 {
        self.width
    }

    pub fn height(&self) -> i64 {
        self.height
    }

    /// Orientation of the leftward edge leaving odd vertex `(i, j)`.
    pub fn orientation(&self, i: i64, j: i64) -> Option<Orientation> {
        self.grid.get(i, j)
    }

    pub fn target(&self, i: i64, j: i64) -> Option<(i64, i64)> {
        self.orientation(i, j).map(|o| (i - 1, j + o.dy()))
    }

    pub fn vertices(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        let h = self.height;
        (0..self.width).flat_map(move |i| {
            (-h..=h)
                .filter(move |&j| !is_even(i, j))
                .map(move |j| (i, j))
        })
    }

    pub fn edges(&self) -> Vec<((i64, i64), (i64, i64))> {
        self.vertices()
            .filter_map(|(i, j)| self.target(i, j).map(|t| ((i, j), t)))
            .collect()
    }

    /// Odd vertices violating "one outgoing edge after column 0, none in it".
    pub fn out_degree_violations(&self) -> Vec<(i64, i64)> {
        self.vertices()
            .filter(|&(i, j)| self.orientation(i, j).is_some() != (i >= 1))
            .collect()
    }

    /// Reverses the dual edge at `(i, j)`; used for fault injection.
    pub fn flip(&mut self, i: i64, j: i64) -> Result<()> {
        match self.grid.slot(i, j) {
            Some(s) if self.grid.bits[s].is_some() => {
                self.grid.bits[s] = self.grid.bits[s].map(Orientation::flipped);
                Ok(())
            }
            _ => Err(Error::Usage(format!(
                "({i}, {j}) is not an interior odd vertex"
            ))),
        }
    }

    /// Applies the dual rule in the mirrored direction: even `(i, j)` points to
    /// `(i + 1, j - 1)` exactly when odd `(i + 1, j)` points to `(i, j + 1)`.
    pub fn reconstruct_primal(&self, seed: u64) -> LatticeForest {
        let (w, h) = (self.width, self.height);
        let mut bits = Vec::with_capacity(((w - 1) * (2 * h + 1)) as usize);
        for i in 0..w - 1 {
            for j in -h..=h {
                bits.push(if is_even(i, j) {
                    self.orientation(i + 1, j).map(Orientation::flipped)
                } else {
                    None
                });
            }
        }
        LatticeForest::from_parts(w, h, seed, bits).expect("shape matches")
    }
}

/// A primal edge and a dual edge whose open segments intersect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Crossing {
    pub primal: ((i64, i64), (i64, i64)),
    pub dual: ((i64, i64), (i64, i64)),
}

fn orient(a: (i64, i64), b: (i64, i64), c: (i64, i64)) -> i64 {
    ((b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)).signum()
}

/// True when the open segments `(a, b)` and `(c, d)` share a point.
pub fn interiors_intersect(a: (i64, i64), b: (i64, i64), c: (i64, i64), d: (i64, i64)) -> bool {
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    if o1 == 0 && o2 == 0 {
        // Collinear: overlap of positive length along the dominant axis.
        let key = |p: (i64, i64)| if a.0 != b.0 { p.0 } else { p.1 };
        let (lo1, hi1) = (key(a).min(key(b)), key(a).max(key(b)));
        let (lo2, hi2) = (key(c).min(key(d)), key(c).max(key(d)));
        return lo1.max(lo2) < hi1.min(hi2);
    }
    o1 * o2 < 0 && o3 * o4 < 0
}

/// Lower-left corner of the unit square containing a diagonal edge.
fn square_of(a: (i64, i64), b: (i64, i64)) -> (i64, i64) {
    (a.0.min(b.0), a.1.min(b.1))
}

/// Every primal/dual pair of edges whose interiors intersect.
///
/// Edges are unit-square diagonals, so interiors can only meet inside a shared square.
pub fn check_no_crossing(forest: &LatticeForest, dual: &DualForest) -> Vec<Crossing> {
    type Edge = ((i64, i64), (i64, i64));
    let mut squares: HashMap<(i64, i64), (Vec<Edge>, Vec<Edge>)> = HashMap::new();
    for e in forest.edges() {
        squares.entry(square_of(e.0, e.1)).or_default().0.push(e);
    }
    for e in dual.edges() {
        squares.entry(square_of(e.0, e.1)).or_default().1.push(e);
    }
    let mut out = Vec::new();
    let mut keys: Vec<_> = squares.keys().copied().collect();
    keys.sort_unstable();
    for k in keys {
        let (primal, duals) = &squares[&k];
        for p in primal {
            for d in duals {
                if interiors_intersect(p.0, p.1, d.0, d.1) {
                    out.push(Crossing {
                        primal: *p,
                        dual: *d,
                    });
                }
            }
        }
    }
    out
}

/// Probability that two coalescing walks started `separation` apart in the same column
/// have met after at most `steps` steps.
///
/// The half-difference of the walks moves by -1, 0, +1 with probabilities 1/4, 1/2, 1/4
/// and is absorbed at 0; the distribution is propagated exactly step by step.
pub fn lattice_coalescence_probability_dp(separation: u64, steps: u64) -> Result<f64> {
    if !separation.is_multiple_of(2) {
        return Err(Error::Parameter(format!(
            "separation must be even, got {separation}"
        )));
    }
    if steps == 0 {
        return Err(Error::Parameter("horizon must be at least 1".into()));
    }
    if separation == 0 {
        return Ok(1.0);
    }
    let k0 = (separation / 2) as usize;
    let top = k0 + steps as usize;
    let mut mass = vec![0.0f64; top + 2];
    let mut next = vec![0.0f64; top + 2];
    mass[k0] = 1.0;
    let mut absorbed = 0.0;
    // mass[0] stays zero: absorbed mass is accumulated separately.
    for t in 0..steps as usize {
        absorbed += 0.25 * mass[1];
        for x in 1..=(k0 + t + 1).min(top) {
            next[x] = 0.25 * mass[x - 1] + 0.5 * mass[x] + 0.25 * mass[x + 1];
        }
        std::mem::swap(&mut mass, &mut next);
    }
    Ok(absorbed)
}

/// Outcome of one pair of walks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WalkOutcome {
    /// Met after this many steps.
    Met(u64),
    NotMet,
    /// A walk left the ordinate range `|j| <= H` before meeting.
    Censored,
}

/// Runs walks from `(0, 0)` and `(0, separation)` for at most `steps` steps in the field
/// with the given seed, censoring at `|j| > height`.
pub fn coalescing_walks(seed: u64, height: i64, separation: u64, steps: u64) -> WalkOutcome {
    let (mut a, mut b) = (0i64, separation as i64);
    if a == b {
        return WalkOutcome::Met(0);
    }
    for t in 0..steps {
        let i = t as i64;
        a += orientation_bit(seed, i, a).dy();
        b += orientation_bit(seed, i, b).dy();
        if a.abs() > height || b.abs() > height {
            return WalkOutcome::Censored;
        }
        if a == b {
            return WalkOutcome::Met(t + 1);
        }
    }
    WalkOutcome::NotMet
}

/// Same walks, read off an explicitly sampled forest.
pub fn coalescing_walks_in(
    forest: &LatticeForest,
    separation: u64,
    steps: u64,
) -> Result<WalkOutcome> {
    if steps as i64 > forest.width - 1 {
        return Err(Error::Precondition(format!(
            "{steps} steps do not fit in a forest of width {}",
            forest.width
        )));
    }
    let (mut a, mut b) = (0i64, separation as i64);
    if b > forest.height {
        return Err(Error::Precondition(
            "separation exceeds the ordinate range".into(),
        ));
    }
    if a == b {
        return Ok(WalkOutcome::Met(0));
    }
    for t in 0..steps {
        let i = t as i64;
        let step = |j: i64| forest.orientation(i, j).expect("walk stays inside").dy();
        a += step(a);
        b += step(b);
        if a.abs() > forest.height || b.abs() > forest.height {
            return Ok(WalkOutcome::Censored);
        }
        if a == b {
            return Ok(WalkOutcome::Met(t + 1));
        }
    }
    Ok(WalkOutcome::NotMet)
}

/// Parameters of the forest ensemble used by the Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub seed: u64,
    /// Ordinate range `|j| <= height`; walks leaving it are censored.
    pub height: u32,
    pub replicates: u64,
}

/// Monte Carlo estimate of the meeting probability with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoalescenceEstimate {
    pub separation: u64,
    #[serde(rename = "T")]
    pub steps: u64,
    pub met: u64,
    pub not_met: u64,
    pub censored: u64,
    pub probability: f64,
    pub std_error: f64,
    pub censoring_rate: f64,
}

/// Replicate `r` uses the forest with seed `derive_seed(params.seed, r)`. Censored
/// replicates are excluded from the estimate and reported separately.
pub fn lattice_coalescence_simulate(
    params: EnsembleParams,
    separation: u64,
    steps: u64,
) -> Result<CoalescenceEstimate> {
    if !separation.is_multiple_of(2) {
        return Err(Error::Parameter(format!(
            "separation must be even, got {separation}"
        )));
    }
    if steps == 0 || params.replicates == 0 || params.height == 0 {
        return Err(Error::Parameter(
            "T, H and the replicate count must be positive".into(),
        ));
    }
    if separation > params.height as u64 {
        return Err(Error::Parameter(
            "separation exceeds the ordinate range".into(),
        ));
    }
    let (mut met, mut not_met, mut censored) = (0u64, 0u64, 0u64);
    for r in 0..params.replicates {
        match coalescing_walks(
            derive_seed(params.seed, r),
            params.height as i64,
            separation,
            steps,
        ) {
            WalkOutcome::Met(_) => met += 1,
            WalkOutcome::NotMet => not_met += 1,
            WalkOutcome::Censored => censored += 1,
        }
    }
    let n = met + not_met;
    let probability = if n == 0 {
        f64::NAN
    } else {
        met as f64 / n as f64
    };
    let std_error = (probability * (1.0 - probability) / n as f64).sqrt();
    Ok(CoalescenceEstimate {
        separation,
        steps,
        met,
        not_met,
        censored,
        probability,
        std_error,
        censoring_rate: censored as f64 / params.replicates as f64,
    })
}

/// Number of even vertices in `column` whose backward depth is at least `d`.
pub fn lattice_backward_depth_census(
    forest: &LatticeForest,
    column: i64,
    d: usize,
) -> Result<usize> {
    Ok(lattice_depth_profile(forest, column, &[d])?[0])
}

/// Census for several thresholds at once.
pub fn lattice_depth_profile(
    forest: &LatticeForest,
    column: i64,
    thresholds: &[usize],
) -> Result<Vec<usize>> {
    if column < 0 || column >= forest.width {
        return Err(Error::Usage(format!(
            "column {column} outside 0..{}",
            forest.width
        )));
    }
    let column_depths = backward_depths_in_column(forest, column);
    Ok(thresholds
        .iter()
        .map(|&d| column_depths.iter().filter(|&&x| x >= d).count())
        .collect())
}

/// Backward depths of the even vertices of one column, bottom to top.
pub fn backward_depths_in_column(forest: &LatticeForest, column: i64) -> Vec<usize> {
    let h = forest.height;
    let rows = (2 * h + 1) as usize;
    let mut prev = vec![0usize; rows];
    let mut cur = vec![0usize; rows];
    for i in 1..=column {
        for j in -h..=h {
            let r = (j + h) as usize;
            cur[r] = 0;
            if !is_even(i, j) {
                continue;
            }
            let mut best: Option<usize> = None;
            for (cj, o) in [(j - 1, Orientation::Up), (j + 1, Orientation::Down)] {
                if forest.orientation(i - 1, cj) == Some(o) {
                    let d = prev[(cj + h) as usize];
                    best = Some(best.map_or(d, |b| b.max(d)));
                }
            }
            cur[r] = best.map_or(0, |b| b + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    (-h..=h)
        .filter(|&j| is_even(column, j))
        .map(|j| prev[(j + h) as usize])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// All pairs of primal and dual edges, no bucketing.
    fn crossings_exhaustive(forest: &LatticeForest, dual: &DualForest) -> Vec<Crossing> {
        let mut out = Vec::new();
        for p in forest.edges() {
            for d in dual.edges() {
                if interiors_intersect(p.0, p.1, d.0, d.1) {
                    out.push(Crossing { primal: p, dual: d });
                }
            }
        }
        out
    }

    fn sorted(mut v: Vec<Crossing>) -> Vec<Crossing> {
        v.sort_by_key(|c| (c.primal, c.dual));
        v
    }

    #[test]
    fn rejects_degenerate_sizes() {
        assert!(sample_lattice(1, 5, 0).is_err());
        assert!(sample_lattice(5, 0, 0).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_lazy_consistent() {
        let a = sample_lattice(30, 10, 9).unwrap();
        let b = sample_lattice(30, 10, 9).unwrap();
        assert_eq!(a, b);
        for (i, j) in a.vertices().filter(|&(i, _)| i < 29) {
            assert_eq!(a.orientation(i, j), Some(orientation_bit(9, i, j)));
        }
        assert_ne!(a, sample_lattice(30, 10, 10).unwrap());
    }

    #[test]
    fn out_degrees() {
        let f = sample_lattice(40, 12, 3).unwrap();
        assert!(f.out_degree_violations().is_empty());
        let d = build_dual(&f);
        assert!(d.out_degree_violations().is_empty());
        assert!(f.orientation(39, 1).is_none());
        assert!(d.orientation(0, 1).is_none());
        assert!(f.orientation(0, 1).is_none());
        assert!(d.orientation(1, 1).is_none());
    }

    #[test]
    fn dual_rule_matches_definition() {
        let f = sample_lattice(25, 8, 4).unwrap();
        let d = build_dual(&f);
        for (i, j) in d.vertices().filter(|&(i, _)| i >= 1) {
            let expected = match f.orientation(i - 1, j).unwrap() {
                Orientation::Down => (i - 1, j + 1),
                Orientation::Up => (i - 1, j - 1),
            };
            assert_eq!(d.target(i, j), Some(expected));
        }
    }

    #[test]
    fn one_diagonal_per_unit_square() {
        let f = sample_lattice(20, 6, 5).unwrap();
        let d = build_dual(&f);
        let mut count: HashMap<(i64, i64), usize> = HashMap::new();
        for e in f.edges().into_iter().chain(d.edges()) {
            *count.entry(square_of(e.0, e.1)).or_default() += 1;
        }
        for i in 0..19 {
            for j in -6..6 {
                assert_eq!(count.get(&(i, j)), Some(&1), "square ({i}, {j})");
            }
        }
    }

    #[test]
    fn dual_round_trip() {
        let f = sample_lattice(50, 15, 6).unwrap();
        assert_eq!(build_dual(&f).reconstruct_primal(6), f);
    }

    #[test]
    fn no_crossings_and_fault_injection_is_caught() {
        let f = sample_lattice(20, 10, 7).unwrap();
        let mut d = build_dual(&f);
        assert!(check_no_crossing(&f, &d).is_empty());
        assert!(crossings_exhaustive(&f, &d).is_empty());
        d.flip(5, 2).unwrap();
        let found = check_no_crossing(&f, &d);
        assert!(!found.is_empty());
        assert_eq!(sorted(found), sorted(crossings_exhaustive(&f, &d)));
        assert!(d.flip(4, 2).is_err());
        assert!(d.flip(0, 1).is_err());
    }

    #[test]
    fn segment_intersection_cases() {
        assert!(interiors_intersect((0, 0), (1, 1), (0, 1), (1, 0)));
        // Shared endpoint only.
        assert!(!interiors_intersect((0, 0), (1, 1), (1, 1), (2, 0)));
        // Collinear overlap and collinear touching.
        assert!(interiors_intersect((0, 0), (2, 2), (1, 1), (3, 3)));
        assert!(!interiors_intersect((0, 0), (1, 1), (1, 1), (2, 2)));
        // T-junction: an endpoint on the other interior.
        assert!(!interiors_intersect((0, 0), (2, 0), (1, 0), (1, 1)));
        assert!(!interiors_intersect((0, 0), (1, 0), (0, 1), (1, 1)));
    }

    #[test]
    fn dual_bits_are_fair() {
        let f = sample_lattice(400, 100, 8).unwrap();
        let d = build_dual(&f);
        let (mut up, mut n) = (0u64, 0u64);
        for (i, j) in d.vertices() {
            if let Some(o) = d.orientation(i, j) {
                n += 1;
                up += (o == Orientation::Up) as u64;
            }
        }
        let p = up as f64 / n as f64;
        let se = (0.25 / n as f64).sqrt();
        assert!((p - 0.5).abs() < 4.0 * se, "p = {p}, n = {n}");
    }

    #[test]
    fn dp_small_cases() {
        assert_eq!(lattice_coalescence_probability_dp(2, 1).unwrap(), 0.25);
        // Two steps: 1/4 + (1/2)(1/4).
        assert!((lattice_coalescence_probability_dp(2, 2).unwrap() - 0.375).abs() < 1e-15);
        assert_eq!(lattice_coalescence_probability_dp(4, 1).unwrap(), 0.0);
        assert_eq!(lattice_coalescence_probability_dp(0, 5).unwrap(), 1.0);
        assert!(lattice_coalescence_probability_dp(3, 5).is_err());
        assert!(lattice_coalescence_probability_dp(2, 0).is_err());
    }

    #[test]
    fn dp_matches_enumeration() {
        // Enumerate all 4^T joint step sequences of the two walks.
        for sep in [2i64, 4, 6] {
            for t in 1..=7u32 {
                let mut met = 0u64;
                for code in 0..(1u64 << (2 * t)) {
                    let mut diff = sep;
                    for s in 0..t {
                        let a = if code >> (2 * s) & 1 == 1 { 1 } else { -1 };
                        let b = if code >> (2 * s + 1) & 1 == 1 { 1 } else { -1 };
                        diff += b - a;
                        if diff == 0 {
                            met += 1;
                            break;
                        }
                    }
                }
                let exact = met as f64 / (1u64 << (2 * t)) as f64;
                let dp = lattice_coalescence_probability_dp(sep as u64, t as u64).unwrap();
                assert!(
                    (dp - exact).abs() < 1e-12,
                    "sep {sep} T {t}: {dp} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn dp_is_monotone_and_bounded() {
        let mut last = 0.0;
        for t in [1, 2, 5, 10, 100, 1000] {
            let p = lattice_coalescence_probability_dp(2, t).unwrap();
            assert!(p >= last && p <= 1.0);
            last = p;
        }
        assert!(
            lattice_coalescence_probability_dp(2, 1000).unwrap()
                > lattice_coalescence_probability_dp(10, 1000).unwrap()
        );
    }

    #[test]
    fn explicit_and_lazy_walks_agree() {
        for seed in 0..50 {
            let f = sample_lattice(60, 20, seed).unwrap();
            for sep in [2, 4, 8] {
                assert_eq!(
                    coalescing_walks_in(&f, sep, 59).unwrap(),
                    coalescing_walks(seed, 20, sep, 59)
                );
            }
        }
    }

    #[test]
    fn simulation_basics() {
        let params = EnsembleParams {
            seed: 1,
            height: 50,
            replicates: 200,
        };
        let zero = lattice_coalescence_simulate(params, 0, 10).unwrap();
        assert_eq!(zero.probability, 1.0);
        assert!(lattice_coalescence_simulate(params, 3, 10).is_err());
        let short = lattice_coalescence_simulate(params, 2, 20).unwrap();
        let long = lattice_coalescence_simulate(params, 2, 40).unwrap();
        // Same forests: meeting by 20 implies meeting by 40.
        assert!(long.met >= short.met);
        assert_eq!(short.met + short.not_met + short.censored, 200);
    }

    #[test]
    fn simulation_agrees_with_dp() {
        let params = EnsembleParams {
            seed: 2,
            height: 400,
            replicates: 4000,
        };
        let est = lattice_coalescence_simulate(params, 2, 100).unwrap();
        let exact = lattice_coalescence_probability_dp(2, 100).unwrap();
        assert_eq!(est.censored, 0);
        assert!((est.probability - exact).abs() < 4.0 * est.std_error.max(1e-3));
    }

    /// Depths by recursion over children, for comparison.
    fn depth_recursive(f: &LatticeForest, i: i64, j: i64) -> usize {
        if i == 0 {
            return 0;
        }
        let mut best = None;
        for (cj, o) in [(j - 1, Orientation::Up), (j + 1, Orientation::Down)] {
            if f.orientation(i - 1, cj) == Some(o) {
                let d = depth_recursive(f, i - 1, cj);
                best = Some(best.map_or(d, |b: usize| b.max(d)));
            }
        }
        best.map_or(0, |b| b + 1)
    }

    #[test]
    fn depth_census_matches_recursion() {
        let f = sample_lattice(14, 8, 11).unwrap();
        for column in [0, 1, 6, 13] {
            let fast = backward_depths_in_column(&f, column);
            let slow: Vec<usize> = (-8..=8)
                .filter(|&j| is_even(column, j))
                .map(|j| depth_recursive(&f, column, j))
                .collect();
            assert_eq!(fast, slow, "column {column}");
        }
        let counts = lattice_depth_profile(&f, 13, &[0, 1, 5, 13, 14]).unwrap();
        assert!(counts.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(counts[4], 0);
        assert!(lattice_backward_depth_census(&f, 14, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn bucketed_check_equals_exhaustive(
            w in 2u32..=20, h in 1u32..=10, seed in any::<u64>(),
            flips in proptest::collection::vec((1i64..20, -10i64..=10), 0..4)
        ) {
            let f = sample_lattice(w, h, seed).unwrap();
            let mut d = build_dual(&f);
            prop_assert!(check_no_crossing(&f, &d).is_empty());
            prop_assert_eq!(d.reconstruct_primal(seed), f.clone());
            for (i, j) in flips {
                let _ = d.flip(i, j);
            }
            prop_assert_eq!(sorted(check_no_crossing(&f, &d)), sorted(crossings_exhaustive(&f, &d)));
        }
    }
}
