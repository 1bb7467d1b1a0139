//! Points, Euclidean distances, k-means cost, centroids and l-fold diameters.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used by equality-style checks across the crate.
pub const REL_TOL: f64 = 1e-9;

/// Largest set for which [`l_fold_diameter`] runs the exhaustive search in
/// dimension > 1.
pub const DIAMETER_EXACT_LIMIT: usize = 12;

/// One-dimensional inputs are solved exactly up to this size by a sorted sweep.
const DIAMETER_EXACT_LIMIT_1D: usize = 4096;

/// A finite point in R^d, d >= 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::ZeroDimension);
        }
        if let Some((index, &value)) = coords.iter().enumerate().find(|(_, c)| !c.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        Ok(Self(coords))
    }

    /// A one-dimensional point.
    pub fn scalar(x: f64) -> Result<Self> {
        Self::new(vec![x])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;

    fn try_from(coords: Vec<f64>) -> Result<Self> {
        Self::new(coords)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.0
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// An ordered collection of points sharing one dimension. Indices are stable
/// 0-based positions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    points: Vec<Point>,
}

impl PointSet {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if let Some(first) = points.first() {
            let expected = first.dim();
            for p in &points[1..] {
                if p.dim() != expected {
                    return Err(Error::DimensionMismatch { expected, got: p.dim() });
                }
            }
        }
        Ok(Self { points })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows.into_iter().map(Point::new).collect::<Result<_>>()?)
    }

    /// One-dimensional points from plain values.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| Point::scalar(v)).collect::<Result<_>>()?)
    }

    pub fn push(&mut self, p: Point) -> Result<()> {
        if let Some(expected) = self.dim() {
            if p.dim() != expected {
                return Err(Error::DimensionMismatch { expected, got: p.dim() });
            }
        }
        self.points.push(p);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Shared dimension, `None` when empty.
    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(Point::dim)
    }

    pub fn get(&self, i: usize) -> Option<&Point> {
        self.points.get(i)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.points.iter()
    }

    pub fn as_slice(&self) -> &[Point] {
        &self.points
    }

    pub fn into_vec(self) -> Vec<Point> {
        self.points
    }

    /// The points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<PointSet> {
        let mut out = Vec::with_capacity(indices.len());
        for &i in indices {
            let p = self
                .points
                .get(i)
                .ok_or(Error::IndexOutOfRange { index: i, len: self.len() })?;
            out.push(p.clone());
        }
        Ok(PointSet { points: out })
    }
}

impl std::ops::Index<usize> for PointSet {
    type Output = Point;

    fn index(&self, i: usize) -> &Point {
        &self.points[i]
    }
}

impl<'a> IntoIterator for &'a PointSet {
    type Item = &'a Point;
    type IntoIter = std::slice::Iter<'a, Point>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

impl FromIterator<Point> for Result<PointSet> {
    fn from_iter<I: IntoIterator<Item = Point>>(iter: I) -> Self {
        PointSet::new(iter.into_iter().collect())
    }
}

#[inline]
pub(crate) fn sq_dist_slices(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared Euclidean distance; callers guarantee equal dimension.
#[inline]
pub(crate) fn sq_dist_unchecked(a: &Point, b: &Point) -> f64 {
    sq_dist_slices(&a.0, &b.0)
}

#[inline]
pub(crate) fn dist_unchecked(a: &Point, b: &Point) -> f64 {
    sq_dist_unchecked(a, b).sqrt()
}

fn check_dims(a: &Point, b: &Point) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    Ok(())
}

fn check_set_dims(x: &PointSet, y: &PointSet) -> Result<()> {
    if let (Some(expected), Some(got)) = (x.dim(), y.dim()) {
        if expected != got {
            return Err(Error::DimensionMismatch { expected, got });
        }
    }
    Ok(())
}

/// Euclidean distance between two points of equal dimension.
pub fn dist(a: &Point, b: &Point) -> Result<f64> {
    check_dims(a, b)?;
    Ok(dist_unchecked(a, b))
}

/// Index and squared distance of the nearest element of `centers`, lowest index
/// on ties. `centers` must be nonempty.
pub(crate) fn nearest_sq(x: &Point, centers: &[Point]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = sq_dist_unchecked(x, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Sum over `x` of the squared distance to the nearest element of `centers`.
pub fn kmeans_cost(x: &PointSet, centers: &PointSet) -> Result<f64> {
    if centers.is_empty() {
        return Err(Error::Empty("center set"));
    }
    check_set_dims(x, centers)?;
    Ok(cost_unchecked(x.as_slice(), centers.as_slice()))
}

pub(crate) fn cost_unchecked(x: &[Point], centers: &[Point]) -> f64 {
    x.iter().map(|p| nearest_sq(p, centers).1).sum()
}

pub(crate) fn centroid_of<'a, I>(points: I, dim: usize) -> Option<Point>
where
    I: IntoIterator<Item = &'a Point>,
{
    let mut acc = vec![0.0; dim];
    let mut n = 0usize;
    for p in points {
        for (a, c) in acc.iter_mut().zip(p.coords()) {
            *a += c;
        }
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let inv = n as f64;
    acc.iter_mut().for_each(|a| *a /= inv);
    Some(Point(acc))
}

/// Coordinatewise mean.
pub fn centroid(x: &PointSet) -> Result<Point> {
    let dim = x.dim().ok_or(Error::Empty("centroid of an empty set"))?;
    Ok(centroid_of(x, dim).expect("nonempty"))
}

/// Residual of the center shifting identity
/// `L(X,{s}) = L(X,{mu}) + |X| d(s,mu)^2`; zero up to rounding.
pub fn center_shift_residual(x: &PointSet, s: &Point) -> Result<f64> {
    let mu = centroid(x)?;
    check_dims(&mu, s)?;
    let around_s: f64 = x.iter().map(|p| sq_dist_unchecked(p, s)).sum();
    let around_mu: f64 = x.iter().map(|p| sq_dist_unchecked(p, &mu)).sum();
    Ok(around_s - around_mu - x.len() as f64 * sq_dist_unchecked(s, &mu))
}

/// Result of an l-fold diameter computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diameter {
    pub value: f64,
    /// `false` when `value` is only an upper bound.
    pub exact: bool,
}

/// Smallest D such that `x` splits into `l` parts of diameter at most D.
///
/// Exact for one-dimensional inputs (sorted sweep) and for up to
/// [`DIAMETER_EXACT_LIMIT`] points otherwise; larger inputs get a greedy
/// farthest-point partition whose diameter is an upper bound.
pub fn l_fold_diameter(x: &PointSet, l: usize) -> Result<Diameter> {
    l_fold_diameter_with_limit(x, l, DIAMETER_EXACT_LIMIT)
}

pub fn l_fold_diameter_with_limit(x: &PointSet, l: usize, exact_limit: usize) -> Result<Diameter> {
    if x.is_empty() {
        return Err(Error::Empty("l-fold diameter of an empty set"));
    }
    if l == 0 {
        return Err(Error::InvalidParameter("l-fold diameter needs l >= 1".into()));
    }
    let pts: Vec<&Point> = x.iter().collect();
    Ok(diameter_of_refs(&pts, l, exact_limit))
}

pub(crate) fn diameter_of_refs(pts: &[&Point], l: usize, exact_limit: usize) -> Diameter {
    debug_assert!(l >= 1 && !pts.is_empty());
    let n = pts.len();
    if n <= l {
        return Diameter { value: 0.0, exact: true };
    }
    if l == 1 {
        return Diameter { value: max_pairwise(pts), exact: true };
    }
    if pts[0].dim() == 1 && n <= DIAMETER_EXACT_LIMIT_1D {
        return Diameter { value: diameter_1d(pts, l), exact: true };
    }
    if n <= exact_limit {
        return Diameter { value: diameter_exact(pts, l), exact: true };
    }
    Diameter { value: diameter_greedy(pts, l), exact: false }
}

fn max_pairwise(pts: &[&Point]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            best = best.max(dist_unchecked(pts[i], pts[j]));
        }
    }
    best
}

/// Sorted sweep: the optimum is some gap `v[j] - v[i]`, and feasibility of a
/// candidate is checked by greedily covering left to right.
fn diameter_1d(pts: &[&Point], l: usize) -> f64 {
    let mut v: Vec<f64> = pts.iter().map(|p| p.coords()[0]).collect();
    v.sort_by(f64::total_cmp);
    let feasible = |d: f64| {
        let mut parts = 1;
        let mut start = v[0];
        for &x in &v[1..] {
            if x - start > d {
                parts += 1;
                start = x;
                if parts > l {
                    return false;
                }
            }
        }
        true
    };
    let mut cands: Vec<f64> = Vec::with_capacity(v.len() * (v.len() - 1) / 2 + 1);
    cands.push(0.0);
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            cands.push(v[j] - v[i]);
        }
    }
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    smallest_feasible(&cands, feasible)
}

fn smallest_feasible(cands: &[f64], feasible: impl Fn(f64) -> bool) -> f64 {
    // the largest candidate (the full diameter) is always feasible
    let (mut lo, mut hi) = (0usize, cands.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if feasible(cands[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    cands[lo]
}

/// Exhaustive search: X splits into l parts of diameter <= D iff the graph
/// joining pairs farther than D apart is l-colourable.
fn diameter_exact(pts: &[&Point], l: usize) -> f64 {
    let n = pts.len();
    let mut d = vec![vec![0.0; n]; n];
    let mut cands = vec![0.0];
    for i in 0..n {
        for j in i + 1..n {
            let dij = dist_unchecked(pts[i], pts[j]);
            d[i][j] = dij;
            d[j][i] = dij;
            cands.push(dij);
        }
    }
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    smallest_feasible(&cands, |bound| colourable(&d, bound, l))
}

fn colourable(d: &[Vec<f64>], bound: f64, l: usize) -> bool {
    let n = d.len();
    let conflicts: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i && d[i][j] > bound).collect())
        .collect();
    // most constrained first
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(conflicts[i].len()));
    let mut colour = vec![usize::MAX; n];

    fn go(
        pos: usize,
        used: usize,
        order: &[usize],
        conflicts: &[Vec<usize>],
        colour: &mut [usize],
        l: usize,
    ) -> bool {
        if pos == order.len() {
            return true;
        }
        let v = order[pos];
        // a fresh colour is interchangeable with any other fresh colour
        for c in 0..(used + 1).min(l) {
            if conflicts[v].iter().all(|&u| colour[u] != c) {
                colour[v] = c;
                if go(pos + 1, used.max(c + 1), order, conflicts, colour, l) {
                    return true;
                }
                colour[v] = usize::MAX;
            }
        }
        false
    }

    go(0, 0, &order, &conflicts, &mut colour, l)
}

/// Farthest-first traversal picks l seeds; every point joins its nearest seed
/// and the largest part diameter is returned.
fn diameter_greedy(pts: &[&Point], l: usize) -> f64 {
    let n = pts.len();
    let mut seeds = vec![0usize];
    let mut near: Vec<f64> = pts.iter().map(|p| sq_dist_unchecked(p, pts[0])).collect();
    while seeds.len() < l {
        let (far, &fd) = near
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("nonempty");
        if fd == 0.0 {
            break;
        }
        seeds.push(far);
        for (i, p) in pts.iter().enumerate() {
            near[i] = near[i].min(sq_dist_unchecked(p, pts[far]));
        }
    }
    let seed_pts: Vec<Point> = seeds.iter().map(|&s| pts[s].clone()).collect();
    let mut parts: Vec<Vec<&Point>> = vec![Vec::new(); seeds.len()];
    for p in pts.iter().take(n) {
        parts[nearest_sq(p, &seed_pts).0].push(p);
    }
    parts.iter().map(|part| max_pairwise(part)).fold(0.0, f64::max)
}

/// `|a - b| <= REL_TOL * max(|a|, |b|)`, with exact zero handled.
pub fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= REL_TOL * a.abs().max(b.abs())
}
