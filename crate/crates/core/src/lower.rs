//! (alpha, k)-sequences: verification, exact and greedy longest-sequence
//! search, worst-case stream ordering and a constructive generator.
//!
//! A sequence y_1..y_r is an (alpha, k)-sequence when every y_i (i >= 2) is
//! strictly farther from all of its predecessors than
//! `sqrt(i * alpha) * diam_{k-1}(predecessors)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{diameter_of_refs, dist_unchecked, Point, PointSet, DIAMETER_EXACT_LIMIT};

/// Largest input [`lower_exact`] accepts by default.
pub const LOWER_EXACT_LIMIT: usize = 10;

/// Hard ceiling for the subset dynamic program.
const LOWER_EXACT_CEILING: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaKSequence {
    pub alpha: f64,
    pub k: usize,
    /// Point indices in sequence order.
    pub indices: Vec<usize>,
    pub certified: bool,
    /// Whether `indices.len()` is the exact maximum for the input.
    pub exact: bool,
}

impl AlphaKSequence {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn check_alpha_k(alpha: f64, k: usize) -> Result<()> {
    if !(alpha.is_finite() && alpha > 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must exceed 1, got {alpha}")));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    Ok(())
}

/// `diam_{k-1}` of the given prefix. With k = 1 no partition into zero parts
/// exists, so the diameter is infinite and nothing can follow the first point.
fn prefix_diameter(prefix: &[&Point], k: usize) -> f64 {
    if prefix.is_empty() {
        return 0.0;
    }
    if k == 1 {
        return f64::INFINITY;
    }
    diameter_of_refs(prefix, k - 1, DIAMETER_EXACT_LIMIT).value
}

/// Admission bound for the point at 1-based position `position`.
fn admission_bound(position: usize, alpha: f64, diam: f64) -> f64 {
    if diam == 0.0 {
        0.0
    } else {
        (position as f64 * alpha).sqrt() * diam
    }
}

fn min_dist_to(x: &Point, prefix: &[&Point]) -> f64 {
    prefix.iter().map(|p| dist_unchecked(x, p)).fold(f64::INFINITY, f64::min)
}

/// Checks the (alpha, k)-sequence condition for `order` over `points`.
pub fn is_alpha_k_sequence(points: &PointSet, order: &[usize], alpha: f64, k: usize) -> Result<bool> {
    check_alpha_k(alpha, k)?;
    let mut seen = vec![false; points.len()];
    for &i in order {
        if i >= points.len() {
            return Err(Error::IndexOutOfRange { index: i, len: points.len() });
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::RepeatedIndex(i));
        }
    }
    let mut prefix: Vec<&Point> = Vec::with_capacity(order.len());
    for (pos, &i) in order.iter().enumerate() {
        let y = &points[i];
        if pos > 0 {
            let bound = admission_bound(pos + 1, alpha, prefix_diameter(&prefix, k));
            if min_dist_to(y, &prefix) <= bound {
                return Ok(false);
            }
        }
        prefix.push(y);
    }
    Ok(true)
}

/// The longest (alpha, k)-sequence drawn from `points`; its length is
/// Lower_{alpha,k}. Up to [`LOWER_EXACT_LIMIT`] points.
pub fn lower_exact(points: &PointSet, alpha: f64, k: usize) -> Result<AlphaKSequence> {
    lower_exact_with_limit(points, alpha, k, LOWER_EXACT_LIMIT)
}

/// Whether a sequence may end with a given point depends only on the set of
/// its predecessors, so reachability is a dynamic program over subsets.
pub fn lower_exact_with_limit(
    points: &PointSet,
    alpha: f64,
    k: usize,
    limit: usize,
) -> Result<AlphaKSequence> {
    check_alpha_k(alpha, k)?;
    let n = points.len();
    let limit = limit.min(LOWER_EXACT_CEILING);
    if n > limit {
        return Err(Error::OverExactLimit { n, k, limit, fallback: "lower_greedy" });
    }
    if n == 0 {
        return Ok(AlphaKSequence { alpha, k, indices: vec![], certified: true, exact: true });
    }
    let full = 1usize << n;
    // parent[mask] = last element of some valid ordering of `mask`
    let mut parent: Vec<Option<usize>> = vec![None; full];
    let mut reachable = vec![false; full];
    reachable[0] = true;
    let mut best = 0usize;
    for mask in 0..full {
        if !reachable[mask] {
            continue;
        }
        if mask.count_ones() > best.count_ones() {
            best = mask;
        }
        let prefix: Vec<&Point> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| &points[i]).collect();
        let bound = admission_bound(prefix.len() + 1, alpha, prefix_diameter(&prefix, k));
        for y in 0..n {
            let next = mask | 1 << y;
            if mask >> y & 1 == 1 || reachable[next] {
                continue;
            }
            if prefix.is_empty() || min_dist_to(&points[y], &prefix) > bound {
                reachable[next] = true;
                parent[next] = Some(y);
            }
        }
    }
    let mut indices = Vec::with_capacity(best.count_ones() as usize);
    let mut mask = best;
    while mask != 0 {
        let y = parent[mask].expect("reachable masks have a parent");
        indices.push(y);
        mask &= !(1 << y);
    }
    indices.reverse();
    let certified = is_alpha_k_sequence(points, &indices, alpha, k)?;
    Ok(AlphaKSequence { alpha, k, indices, certified, exact: true })
}

/// Farthest-first extension: among the points admissible after the current
/// prefix, append the one farthest from it (lowest index on ties).
pub fn lower_greedy(points: &PointSet, alpha: f64, k: usize) -> Result<AlphaKSequence> {
    check_alpha_k(alpha, k)?;
    let n = points.len();
    let mut used = vec![false; n];
    let mut indices: Vec<usize> = Vec::new();
    let mut prefix: Vec<&Point> = Vec::new();
    // running distance from each point to the prefix
    let mut gap = vec![f64::INFINITY; n];
    loop {
        let bound = admission_bound(prefix.len() + 1, alpha, prefix_diameter(&prefix, k));
        let mut pick: Option<usize> = None;
        for i in 0..n {
            if used[i] || !(prefix.is_empty() || gap[i] > bound) {
                continue;
            }
            if pick.is_none_or(|p| gap[i] > gap[p]) {
                pick = Some(i);
            }
        }
        let Some(i) = pick else { break };
        used[i] = true;
        indices.push(i);
        prefix.push(&points[i]);
        for (j, g) in gap.iter_mut().enumerate() {
            *g = g.min(dist_unchecked(&points[j], &points[i]));
        }
    }
    let certified = is_alpha_k_sequence(points, &indices, alpha, k)?;
    Ok(AlphaKSequence { alpha, k, indices, certified, exact: false })
}

/// Exact search when the input fits the limit, greedy otherwise.
pub fn lower_best_effort(points: &PointSet, alpha: f64, k: usize) -> Result<AlphaKSequence> {
    if points.len() <= LOWER_EXACT_LIMIT {
        lower_exact(points, alpha, k)
    } else {
        lower_greedy(points, alpha, k)
    }
}

/// Stream order placing `sequence` first, then the remaining points in their
/// original order.
pub fn adversarial_order(n: usize, sequence: &AlphaKSequence) -> Result<Vec<usize>> {
    let mut taken = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for &i in &sequence.indices {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        if std::mem::replace(&mut taken[i], true) {
            return Err(Error::RepeatedIndex(i));
        }
        order.push(i);
    }
    order.extend((0..n).filter(|&i| !taken[i]));
    Ok(order)
}

/// One-dimensional (alpha, k)-sequence: k points at unit spacing, then each
/// new point placed `margin * sqrt(i alpha) * diam_{k-1}(prefix)` beyond the
/// current extent, on a side chosen by `seed`.
pub fn gen_alpha_k_sequence(
    k: usize,
    alpha: f64,
    length: usize,
    margin: f64,
    seed: u64,
) -> Result<PointSet> {
    check_alpha_k(alpha, k)?;
    if length < k {
        return Err(Error::InvalidParameter(format!("length {length} must be >= k {k}")));
    }
    if !(margin.is_finite() && margin > 1.0) {
        return Err(Error::InvalidParameter(format!("margin must exceed 1, got {margin}")));
    }
    if k == 1 && length > 1 {
        return Err(Error::InvalidParameter(
            "with k = 1 no (alpha, 1)-sequence is longer than one point".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values: Vec<f64> = (0..k).map(|i| i as f64).collect();
    let (mut lo, mut hi) = (0.0f64, (k - 1) as f64);
    while values.len() < length {
        let pts = PointSet::from_scalars(&values)?;
        let refs: Vec<&Point> = pts.iter().collect();
        let diam = prefix_diameter(&refs, k);
        let step = margin * admission_bound(values.len() + 1, alpha, diam);
        let next = if rng.random_bool(0.5) { hi + step } else { lo - step };
        if !next.is_finite() || !(next - hi).is_finite() || !(lo - next).is_finite() {
            return Err(Error::Overflow { achieved: values.len(), requested: length });
        }
        lo = lo.min(next);
        hi = hi.max(next);
        values.push(next);
    }
    let out = PointSet::from_scalars(&values)?;
    let order: Vec<usize> = (0..out.len()).collect();
    if !is_alpha_k_sequence(&out, &order, alpha, k)? {
        // rounding at extreme magnitudes
        return Err(Error::Overflow { achieved: values.len() - 1, requested: length });
    }
    Ok(out)
}
