//! Ground-truth k-means costs: exhaustive search on small instances, seeded
//! Lloyd iteration on larger ones, and the good-point diagnostic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{centroid_of, cost_unchecked, sq_dist_unchecked, Point, PointSet};

const LLOYD_MAX_ITERS: usize = 1000;

/// A partition of a point set with each part represented by its centroid.
///
/// Labels are contiguous: every id in `0..centers.len()` has at least one
/// point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub assignment: Vec<usize>,
    pub centers: Vec<Point>,
    pub cost: f64,
}

impl Clustering {
    fn from_labels(x: &PointSet, labels: Vec<usize>) -> Self {
        let parts = labels.iter().copied().max().map_or(0, |m| m + 1);
        let dim = x.dim().unwrap_or(1);
        let centers: Vec<Point> = (0..parts)
            .map(|c| {
                centroid_of(x.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| p), dim)
                    .expect("labels are contiguous")
            })
            .collect();
        let cost = x
            .iter()
            .zip(&labels)
            .map(|(p, &l)| sq_dist_unchecked(p, &centers[l]))
            .sum();
        Self { assignment: labels, centers, cost }
    }

    /// Number of points carrying each label.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centers.len()];
        for &l in &self.assignment {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Largest instance [`optimal_kmeans`] accepts for a given k.
pub fn default_exact_limit(k: usize) -> usize {
    match k {
        0 | 1 => usize::MAX,
        2 => 14,
        3 => 11,
        _ => 10,
    }
}

/// Globally optimal k-means clustering (centers anywhere in R^d) by exhaustive
/// enumeration of partitions into at most k parts.
///
/// Partitions are enumerated as restricted growth strings in lexicographic
/// order and only a strictly smaller cost replaces the incumbent, so ties go
/// to the lexicographically smallest assignment vector.
pub fn optimal_kmeans(x: &PointSet, k: usize) -> Result<Clustering> {
    optimal_kmeans_with_limit(x, k, default_exact_limit(k))
}

pub fn optimal_kmeans_with_limit(x: &PointSet, k: usize, limit: usize) -> Result<Clustering> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    if x.is_empty() {
        return Err(Error::Empty("optimal k-means of an empty set"));
    }
    let n = x.len();
    if n > limit {
        return Err(Error::OverExactLimit { n, k, limit, fallback: "lloyd_kmeans" });
    }
    if k == 1 {
        return Ok(Clustering::from_labels(x, vec![0; n]));
    }

    let pts = x.as_slice();
    let dim = pts[0].dim();
    let mut search = PartitionSearch {
        pts,
        k,
        dim,
        labels: vec![0; n],
        best_cost: f64::INFINITY,
        best: vec![0; n],
    };
    search.descend(1, 1);
    let best = search.best;
    Ok(Clustering::from_labels(x, best))
}

struct PartitionSearch<'a> {
    pts: &'a [Point],
    k: usize,
    dim: usize,
    labels: Vec<usize>,
    best_cost: f64,
    best: Vec<usize>,
}

impl PartitionSearch<'_> {
    fn descend(&mut self, pos: usize, used: usize) {
        if pos == self.pts.len() {
            let cost = self.leaf_cost(used);
            if cost < self.best_cost {
                self.best_cost = cost;
                self.best.copy_from_slice(&self.labels);
            }
            return;
        }
        let top = if used < self.k { used + 1 } else { used };
        for label in 0..top {
            self.labels[pos] = label;
            self.descend(pos + 1, used.max(label + 1));
        }
    }

    fn leaf_cost(&self, parts: usize) -> f64 {
        let mut total = 0.0;
        for c in 0..parts {
            let members = self.pts.iter().zip(&self.labels).filter(|(_, &l)| l == c).map(|(p, _)| p);
            let mu = centroid_of(members.clone(), self.dim).expect("contiguous labels");
            total += members.map(|p| sq_dist_unchecked(p, &mu)).sum::<f64>();
        }
        total
    }
}

/// Best of `restarts` runs of Lloyd's iteration from D^2-weighted seeding.
/// Deterministic given `seed`; equidistant points go to the lower cluster id.
pub fn lloyd_kmeans(x: &PointSet, k: usize, restarts: usize, seed: u64) -> Result<Clustering> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    if restarts == 0 {
        return Err(Error::InvalidParameter("restarts must be >= 1".into()));
    }
    if x.len() < k {
        return Err(Error::InvalidParameter(format!(
            "lloyd needs at least k={k} points, got {}",
            x.len()
        )));
    }
    if k == 1 {
        return Ok(Clustering::from_labels(x, vec![0; x.len()]));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Clustering> = None;
    for _ in 0..restarts {
        let seeds = plus_plus_seeds(x.as_slice(), k, &mut rng);
        let labels = lloyd_from(x.as_slice(), seeds);
        let candidate = Clustering::from_labels(x, compact(labels));
        if best.as_ref().is_none_or(|b| candidate.cost < b.cost) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

fn plus_plus_seeds(pts: &[Point], k: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let n = pts.len();
    let mut seeds = vec![pts[rng.random_range(0..n)].clone()];
    let mut near: Vec<f64> = pts.iter().map(|p| sq_dist_unchecked(p, &seeds[0])).collect();
    while seeds.len() < k {
        let total: f64 = near.iter().sum();
        if total <= 0.0 {
            // fewer than k distinct points; extra seeds would stay empty
            break;
        }
        let mut r = rng.random_range(0.0..total);
        let mut pick = n - 1;
        for (i, &d) in near.iter().enumerate() {
            if r < d {
                pick = i;
                break;
            }
            r -= d;
        }
        seeds.push(pts[pick].clone());
        for (i, p) in pts.iter().enumerate() {
            near[i] = near[i].min(sq_dist_unchecked(p, &seeds[seeds.len() - 1]));
        }
    }
    seeds
}

fn lloyd_from(pts: &[Point], mut centers: Vec<Point>) -> Vec<usize> {
    let dim = pts[0].dim();
    let mut labels = vec![usize::MAX; pts.len()];
    for _ in 0..LLOYD_MAX_ITERS {
        let mut changed = false;
        for (i, p) in pts.iter().enumerate() {
            let (c, _) = crate::geometry::nearest_sq(p, &centers);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members = pts.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| p);
            // empty clusters keep their previous position
            if let Some(mu) = centroid_of(members, dim) {
                *center = mu;
            }
        }
    }
    labels
}

/// Relabels so ids are contiguous in order of first appearance.
fn compact(labels: Vec<usize>) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .into_iter()
        .map(|l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// `g` is good for `c` when clustering `c` around `g` costs at most three
/// times clustering it around its centroid. `g` is expected to be a member.
pub fn is_good_point(c: &PointSet, g: &Point) -> Result<bool> {
    let dim = c.dim().ok_or(Error::Empty("good point of an empty set"))?;
    if g.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: g.dim() });
    }
    let mu = centroid_of(c, dim).expect("nonempty");
    let at_g = cost_unchecked(c.as_slice(), std::slice::from_ref(g));
    let at_mu = cost_unchecked(c.as_slice(), std::slice::from_ref(&mu));
    Ok(at_g <= 3.0 * at_mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{approx_eq, centroid, kmeans_cost};

    fn s(v: &[f64]) -> PointSet {
        PointSet::from_scalars(v).unwrap()
    }

    fn random_set(rng: &mut ChaCha8Rng, n: usize, d: usize) -> PointSet {
        PointSet::from_rows(
            (0..n)
                .map(|_| (0..d).map(|_| rng.random_range(-10.0..10.0)).collect())
                .collect(),
        )
        .unwrap()
    }

    /// Every labelling in {0..k}^n scored at its centroids.
    fn brute_assignments(x: &PointSet, k: usize) -> f64 {
        let n = x.len();
        let mut best = f64::INFINITY;
        for code in 0..k.pow(n as u32) {
            let mut c = code;
            let mut cost = 0.0;
            let labels: Vec<usize> = (0..n)
                .map(|_| {
                    let v = c % k;
                    c /= k;
                    v
                })
                .collect();
            for cl in 0..k {
                let idx: Vec<usize> = (0..n).filter(|&i| labels[i] == cl).collect();
                if idx.is_empty() {
                    continue;
                }
                let part = x.select(&idx).unwrap();
                let mu = centroid(&part).unwrap();
                cost += kmeans_cost(&part, &PointSet::new(vec![mu]).unwrap()).unwrap();
            }
            best = best.min(cost);
        }
        best
    }

    #[test]
    fn optimal_small_example() {
        let c = optimal_kmeans(&s(&[0.0, 1.0, 5.0]), 2).unwrap();
        assert_eq!(c.cost, 0.5);
        assert_eq!(c.assignment, vec![0, 0, 1]);
        assert_eq!(c.sizes(), vec![2, 1]);
    }

    #[test]
    fn optimal_zero_when_k_covers_distinct_values() {
        assert_eq!(optimal_kmeans(&s(&[3.0, 3.0, 8.0, 8.0, 1.0]), 3).unwrap().cost, 0.0);
        assert_eq!(optimal_kmeans(&s(&[3.0, 4.0]), 5).unwrap().cost, 0.0);
    }

    #[test]
    fn optimal_rejects_large_instances() {
        let x = s(&(0..15).map(f64::from).collect::<Vec<_>>());
        assert!(matches!(optimal_kmeans(&x, 2), Err(Error::OverExactLimit { n: 15, .. })));
        assert!(optimal_kmeans(&x, 0).is_err());
        assert!(optimal_kmeans(&PointSet::default(), 2).is_err());
        assert!(optimal_kmeans_with_limit(&x, 2, 15).is_ok());
    }

    #[test]
    fn optimal_matches_assignment_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..40 {
            let x = random_set(&mut rng, 8, 2);
            let got = optimal_kmeans(&x, 2).unwrap();
            let want = brute_assignments(&x, 2);
            assert!(approx_eq(got.cost, want), "{} vs {want}", got.cost);
        }
        for _ in 0..10 {
            let x = random_set(&mut rng, 7, 1);
            let got = optimal_kmeans(&x, 3).unwrap();
            assert!(approx_eq(got.cost, brute_assignments(&x, 3)));
        }
    }

    #[test]
    fn clustering_invariants_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..20 {
            let x = random_set(&mut rng, 9, 2);
            let c = optimal_kmeans(&x, 3).unwrap();
            let mut total = 0.0;
            for (id, center) in c.centers.iter().enumerate() {
                let idx: Vec<usize> = (0..x.len()).filter(|&i| c.assignment[i] == id).collect();
                let part = x.select(&idx).unwrap();
                assert_eq!(&centroid(&part).unwrap(), center);
                total += kmeans_cost(&part, &PointSet::new(vec![center.clone()]).unwrap()).unwrap();
            }
            assert!(approx_eq(total, c.cost));
        }
    }

    #[test]
    fn optimal_monotone_in_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let x = random_set(&mut rng, 9, 2);
            let costs: Vec<f64> = (1..=5).map(|k| optimal_kmeans(&x, k).unwrap().cost).collect();
            assert!(costs.windows(2).all(|w| w[1] <= w[0]), "{costs:?}");
        }
    }

    #[test]
    fn lloyd_k1_is_centroid_cost() {
        let x = s(&[0.0, 1.0, 5.0, 9.0]);
        let c = lloyd_kmeans(&x, 1, 3, 0).unwrap();
        let mu = centroid(&x).unwrap();
        assert_eq!(c.cost, kmeans_cost(&x, &PointSet::new(vec![mu]).unwrap()).unwrap());
    }

    #[test]
    fn lloyd_duplicate_groups_cost_zero() {
        let x = s(&[2.0, 2.0, 7.0, 7.0, 7.0, -4.0]);
        let c = lloyd_kmeans(&x, 3, 5, 1).unwrap();
        assert_eq!(c.cost, 0.0);
        // fewer distinct values than k still works
        assert_eq!(lloyd_kmeans(&s(&[1.0, 1.0, 1.0]), 2, 2, 1).unwrap().cost, 0.0);
    }

    #[test]
    fn lloyd_errors() {
        assert!(lloyd_kmeans(&s(&[1.0]), 2, 1, 0).is_err());
        assert!(lloyd_kmeans(&s(&[1.0, 2.0]), 2, 0, 0).is_err());
    }

    #[test]
    fn lloyd_is_deterministic_and_close_to_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let mut matches = 0;
        for i in 0..100 {
            let x = random_set(&mut rng, 10, 2);
            let opt = optimal_kmeans(&x, 2).unwrap().cost;
            let l = lloyd_kmeans(&x, 2, 20, i).unwrap();
            assert_eq!(l, lloyd_kmeans(&x, 2, 20, i).unwrap());
            assert!(l.cost >= opt * (1.0 - 1e-9));
            if approx_eq(l.cost, opt) {
                matches += 1;
            }
        }
        assert!(matches >= 90, "lloyd matched the optimum on {matches}/100");
    }

    #[test]
    fn good_point_examples() {
        assert!(is_good_point(&s(&[0.0, 2.0]), &Point::scalar(0.0).unwrap()).unwrap());
        assert!(is_good_point(&s(&[4.0]), &Point::scalar(4.0).unwrap()).unwrap());
        // far outlier is not good for its cluster
        assert!(!is_good_point(&s(&[0.0, 0.0, 0.0, 0.0, 10.0]), &Point::scalar(10.0).unwrap()).unwrap());
    }

    #[test]
    fn at_least_half_are_good() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        for _ in 0..100 {
            let c = random_set(&mut rng, 20, 3);
            let good = c.iter().filter(|g| is_good_point(&c, g).unwrap()).count();
            assert!(2 * good >= c.len(), "{good} of {}", c.len());
        }
    }
}
