//! Count-augmented online k-center sketch.
//!
//! The sketch keeps at most k centers, each tagged with the number of arrivals
//! folded into it, and a radius estimate `P`. Arrivals within `2P` of their
//! nearest center are absorbed; anything farther opens a new center, and when
//! that overflows k the centers are merged greedily at distance `2P` with
//! counts added together.
//!
//! Two radius schedules are available. [`RadiusSchedule::Doubling`] seeds `P`
//! with the smallest gap among the first k points and doubles it after every
//! merge pass. [`RadiusSchedule::Certified`] keeps `P = 0` until k+1 distinct
//! values have been seen and on every overflow sets `P` to the smallest gap
//! among the k+1 competing centers, so that k+1 arrivals pairwise at least
//! `P` apart always exist. That witness is what makes `P^2 / 2` a lower bound
//! on the optimal k-means cost, which the doubling schedule does not provide.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist_unchecked, Point, PointSet};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusSchedule {
    #[default]
    Certified,
    Doubling,
}

impl std::str::FromStr for RadiusSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "certified" => Ok(Self::Certified),
            "doubling" => Ok(Self::Doubling),
            other => Err(Error::InvalidParameter(format!("unknown radius schedule '{other}'"))),
        }
    }
}

/// A stored center and the number of arrivals it represents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedCenter {
    pub center: Point,
    pub count: u64,
    /// 1-based arrival index of the point that opened this center.
    pub birth: u64,
}

/// What an insert did to the sketch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    /// Counted against the center at this position.
    Absorbed(usize),
    /// Opened a new center; `passes` merge passes ran (0 when no overflow).
    Opened { passes: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KCenterState {
    /// Kept in birth order.
    centers: Vec<AugmentedCenter>,
    radius: f64,
    k: usize,
    arrivals: u64,
    dim: usize,
    schedule: RadiusSchedule,
}

impl KCenterState {
    /// Builds the sketch from exactly k initial points.
    pub fn new(first: &PointSet, k: usize, schedule: RadiusSchedule) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        if first.len() != k {
            return Err(Error::InvalidParameter(format!(
                "sketch initialisation needs exactly k={k} points, got {}",
                first.len()
            )));
        }
        let dim = first.dim().expect("k >= 1");
        let mut state = Self {
            centers: Vec::with_capacity(k + 1),
            radius: 0.0,
            k,
            arrivals: 0,
            dim,
            schedule,
        };
        match schedule {
            RadiusSchedule::Doubling => {
                for p in first {
                    state.arrivals += 1;
                    state.centers.push(AugmentedCenter {
                        center: p.clone(),
                        count: 1,
                        birth: state.arrivals,
                    });
                }
                let mut gap = f64::INFINITY;
                for (i, a) in state.centers.iter().enumerate() {
                    for b in &state.centers[i + 1..] {
                        let d = dist_unchecked(&a.center, &b.center);
                        if d > 0.0 {
                            gap = gap.min(d);
                        }
                    }
                }
                state.radius = if gap.is_finite() { gap } else { 0.0 };
            }
            RadiusSchedule::Certified => {
                // with P = 0 only exact duplicates are absorbed
                for p in first {
                    state.insert_certified(p);
                }
            }
        }
        Ok(state)
    }

    pub fn insert(&mut self, x: &Point) -> Result<InsertOutcome> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.dim() });
        }
        Ok(match self.schedule {
            RadiusSchedule::Doubling => self.insert_doubling(x),
            RadiusSchedule::Certified => self.insert_certified(x),
        })
    }

    fn insert_doubling(&mut self, x: &Point) -> InsertOutcome {
        self.arrivals += 1;
        let (idx, d) = self.nearest_index(x);
        if self.radius == 0.0 && d > 0.0 {
            // every stored center coincides; the first distinct arrival sets the scale
            self.radius = d;
        }
        if d <= 2.0 * self.radius {
            self.centers[idx].count += 1;
            return InsertOutcome::Absorbed(idx);
        }
        self.open(x);
        let mut passes = 0;
        while self.centers.len() > self.k {
            self.merge_pass(2.0 * self.radius);
            self.radius *= 2.0;
            passes += 1;
        }
        InsertOutcome::Opened { passes }
    }

    fn insert_certified(&mut self, x: &Point) -> InsertOutcome {
        self.arrivals += 1;
        if let Some((idx, d)) = (!self.centers.is_empty()).then(|| self.nearest_index(x)) {
            if d <= 2.0 * self.radius {
                self.centers[idx].count += 1;
                return InsertOutcome::Absorbed(idx);
            }
        }
        self.open(x);
        if self.centers.len() <= self.k {
            return InsertOutcome::Opened { passes: 0 };
        }
        // the k+1 centers are pairwise farther than 2P apart, so this never
        // lowers P; they witness the new radius
        self.radius = self.radius.max(self.min_center_gap());
        let mut passes = 0;
        loop {
            self.merge_pass(2.0 * self.radius);
            passes += 1;
            if self.centers.len() <= self.k {
                break;
            }
            self.radius *= 2.0;
        }
        InsertOutcome::Opened { passes }
    }

    fn open(&mut self, x: &Point) {
        self.centers.push(AugmentedCenter { center: x.clone(), count: 1, birth: self.arrivals });
    }

    /// One greedy pass in birth order: a center survives if it is farther than
    /// `threshold` from every survivor so far, otherwise its count is folded
    /// into the nearest survivor.
    fn merge_pass(&mut self, threshold: f64) {
        let old = std::mem::take(&mut self.centers);
        let mut kept: Vec<AugmentedCenter> = Vec::with_capacity(old.len());
        for c in old {
            let nearest = kept
                .iter()
                .enumerate()
                .map(|(i, s)| (i, dist_unchecked(&c.center, &s.center)))
                .fold(None, |best: Option<(usize, f64)>, cur| match best {
                    Some(b) if b.1 <= cur.1 => Some(b),
                    _ => Some(cur),
                });
            match nearest {
                Some((i, d)) if d <= threshold => kept[i].count += c.count,
                _ => kept.push(c),
            }
        }
        self.centers = kept;
    }

    fn nearest_index(&self, x: &Point) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.centers.iter().enumerate() {
            let d = dist_unchecked(x, &c.center);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    /// Nearest stored center, earliest-born on ties.
    pub fn nearest_center(&self, x: &Point) -> Result<(&AugmentedCenter, f64)> {
        if self.centers.is_empty() {
            return Err(Error::Empty("k-center sketch has no centers"));
        }
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.dim() });
        }
        let (i, d) = self.nearest_index(x);
        Ok((&self.centers[i], d))
    }

    /// Smallest pairwise distance among stored centers; `+inf` with fewer than two.
    pub fn min_center_gap(&self) -> f64 {
        let mut gap = f64::INFINITY;
        for (i, a) in self.centers.iter().enumerate() {
            for b in &self.centers[i + 1..] {
                gap = gap.min(dist_unchecked(&a.center, &b.center));
            }
        }
        gap
    }

    pub fn centers(&self) -> &[AugmentedCenter] {
        &self.centers
    }

    pub fn center_points(&self) -> PointSet {
        PointSet::new(self.centers.iter().map(|c| c.center.clone()).collect())
            .expect("centers share the sketch dimension")
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn arrivals(&self) -> u64 {
        self.arrivals
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn schedule(&self) -> RadiusSchedule {
        self.schedule
    }

    /// `P = 0`: every arrival so far coincides with a stored center.
    pub fn is_degenerate(&self) -> bool {
        self.radius == 0.0
    }

    pub fn total_count(&self) -> u64 {
        self.centers.iter().map(|c| c.count).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::dist;

    fn pt(x: f64) -> Point {
        Point::scalar(x).unwrap()
    }

    fn sketch(init: &[f64], k: usize, schedule: RadiusSchedule) -> KCenterState {
        KCenterState::new(&PointSet::from_scalars(init).unwrap(), k, schedule).unwrap()
    }

    fn summary(s: &KCenterState) -> Vec<(f64, u64)> {
        s.centers().iter().map(|c| (c.center.coords()[0], c.count)).collect()
    }

    /// Straight-line transcription of the doubling merge loop, written
    /// independently of the sketch type.
    fn reference_doubling(init: &[f64], k: usize, stream: &[f64]) -> (Vec<(f64, u64)>, f64) {
        let mut z: Vec<(f64, u64)> = init.iter().map(|&x| (x, 1)).collect();
        let mut p = f64::INFINITY;
        for i in 0..z.len() {
            for j in i + 1..z.len() {
                let d = (z[i].0 - z[j].0).abs();
                if d > 0.0 && d < p {
                    p = d;
                }
            }
        }
        if !p.is_finite() {
            p = 0.0;
        }
        for &x in stream {
            let mut best = 0;
            for i in 1..z.len() {
                if (z[i].0 - x).abs() < (z[best].0 - x).abs() {
                    best = i;
                }
            }
            let d = (z[best].0 - x).abs();
            if p == 0.0 && d > 0.0 {
                p = d;
            }
            if d <= 2.0 * p {
                z[best].1 += 1;
                continue;
            }
            z.push((x, 1));
            while z.len() > k {
                let mut next: Vec<(f64, u64)> = Vec::new();
                for &(c, m) in &z {
                    let mut near: Option<usize> = None;
                    for (j, &(q, _)) in next.iter().enumerate() {
                        if near.is_none_or(|n| (q - c).abs() < (next[n].0 - c).abs()) {
                            near = Some(j);
                        }
                    }
                    match near {
                        Some(j) if (next[j].0 - c).abs() <= 2.0 * p => next[j].1 += m,
                        _ => next.push((c, m)),
                    }
                }
                z = next;
                p *= 2.0;
            }
        }
        (z, p)
    }

    #[test]
    fn init_examples_doubling() {
        let s = sketch(&[0.0, 10.0], 2, RadiusSchedule::Doubling);
        assert_eq!(summary(&s), vec![(0.0, 1), (10.0, 1)]);
        assert_eq!(s.radius(), 10.0);
        assert!(!s.is_degenerate());

        let s = sketch(&[0.0, 0.0, 5.0], 3, RadiusSchedule::Doubling);
        assert_eq!(s.radius(), 5.0);
        assert_eq!(s.centers().len(), 3);

        let s = sketch(&[7.0, 7.0], 2, RadiusSchedule::Doubling);
        assert_eq!(s.radius(), 0.0);
        assert!(s.is_degenerate());
    }

    #[test]
    fn init_rejects_wrong_size() {
        let two = PointSet::from_scalars(&[1.0, 2.0]).unwrap();
        assert!(KCenterState::new(&two, 3, RadiusSchedule::Doubling).is_err());
        assert!(KCenterState::new(&two, 0, RadiusSchedule::Certified).is_err());
    }

    #[test]
    fn init_certified_deduplicates() {
        let s = sketch(&[0.0, 10.0], 2, RadiusSchedule::Certified);
        assert_eq!(summary(&s), vec![(0.0, 1), (10.0, 1)]);
        assert_eq!(s.radius(), 0.0);

        let s = sketch(&[0.0, 0.0, 5.0], 3, RadiusSchedule::Certified);
        assert_eq!(summary(&s), vec![(0.0, 2), (5.0, 1)]);
        assert_eq!(s.total_count(), 3);
    }

    #[test]
    fn insert_trace_doubling() {
        let mut s = sketch(&[0.0, 10.0], 2, RadiusSchedule::Doubling);
        assert_eq!(s.insert(&pt(1.0)).unwrap(), InsertOutcome::Absorbed(0));
        assert_eq!(summary(&s), vec![(0.0, 2), (10.0, 1)]);
        s.insert(&pt(11.0)).unwrap();
        assert_eq!(summary(&s), vec![(0.0, 2), (10.0, 2)]);
        assert_eq!(s.insert(&pt(100.0)).unwrap(), InsertOutcome::Opened { passes: 1 });
        assert_eq!(summary(&s), vec![(0.0, 4), (100.0, 1)]);
        assert_eq!(s.radius(), 20.0);
        assert_eq!(s.arrivals(), 5);

        let (z, p) = reference_doubling(&[0.0, 10.0], 2, &[1.0, 11.0, 100.0]);
        assert_eq!(summary(&s), z);
        assert_eq!(s.radius(), p);
    }

    #[test]
    fn insert_trace_certified() {
        let mut s = sketch(&[0.0, 10.0], 2, RadiusSchedule::Certified);
        // overflow with {0, 10, 1}: P becomes the smallest gap, 1 folds into 0
        assert_eq!(s.insert(&pt(1.0)).unwrap(), InsertOutcome::Opened { passes: 1 });
        assert_eq!(summary(&s), vec![(0.0, 2), (10.0, 1)]);
        assert_eq!(s.radius(), 1.0);
        assert_eq!(s.insert(&pt(11.0)).unwrap(), InsertOutcome::Absorbed(1));
        s.insert(&pt(100.0)).unwrap();
        assert_eq!(summary(&s), vec![(0.0, 4), (100.0, 1)]);
        assert_eq!(s.radius(), 10.0);
    }

    #[test]
    fn duplicate_of_center_is_absorbed() {
        for schedule in [RadiusSchedule::Doubling, RadiusSchedule::Certified] {
            let mut s = sketch(&[0.0, 10.0], 2, schedule);
            let before = s.radius();
            assert_eq!(s.insert(&pt(10.0)).unwrap(), InsertOutcome::Absorbed(1));
            assert_eq!(s.centers()[1].count, 2);
            assert_eq!(s.radius(), before);
        }
    }

    #[test]
    fn degenerate_start_recovers() {
        let mut s = sketch(&[7.0, 7.0], 2, RadiusSchedule::Doubling);
        s.insert(&pt(7.0)).unwrap();
        assert!(s.is_degenerate());
        s.insert(&pt(9.0)).unwrap();
        assert_eq!(s.radius(), 2.0);
        assert_eq!(s.total_count(), 4);
        s.insert(&pt(100.0)).unwrap();
        assert!(s.centers().len() <= 2);
        assert_eq!(s.total_count(), 5);

        let mut c = sketch(&[7.0, 7.0], 2, RadiusSchedule::Certified);
        assert_eq!(summary(&c), vec![(7.0, 2)]);
        c.insert(&pt(9.0)).unwrap();
        assert_eq!(summary(&c), vec![(7.0, 2), (9.0, 1)]);
        assert!(c.is_degenerate());
    }

    #[test]
    fn gap_and_nearest() {
        let s = sketch(&[0.0, 10.0], 2, RadiusSchedule::Doubling);
        assert_eq!(s.min_center_gap(), 10.0);
        let s1 = sketch(&[3.0], 1, RadiusSchedule::Doubling);
        assert_eq!(s1.min_center_gap(), f64::INFINITY);
        let s3 = sketch(&[0.0, 4.0, 100.0], 3, RadiusSchedule::Doubling);
        assert_eq!(s3.min_center_gap(), 4.0);

        let (c, d) = s.nearest_center(&pt(3.0)).unwrap();
        assert_eq!((c.center.coords()[0], d), (0.0, 3.0));
        let (c, _) = s.nearest_center(&pt(5.0)).unwrap();
        assert_eq!(c.birth, 1);
        let (c, d) = s.nearest_center(&pt(10.0)).unwrap();
        assert_eq!((c.birth, d), (2, 0.0));
        assert!(s.nearest_center(&Point::new(vec![1.0, 2.0]).unwrap()).is_err());
    }

    #[test]
    fn doubling_matches_reference_on_random_streams() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..300 {
            let k = rng.random_range(1..=4);
            let init: Vec<f64> = (0..k).map(|_| rng.random_range(-50.0..50.0)).collect();
            let stream: Vec<f64> = (0..40).map(|_| rng.random_range(-50.0..50.0)).collect();
            let mut s = sketch(&init, k, RadiusSchedule::Doubling);
            for &x in &stream {
                s.insert(&pt(x)).unwrap();
            }
            let (z, p) = reference_doubling(&init, k, &stream);
            assert_eq!(summary(&s), z);
            assert_eq!(s.radius(), p);
        }
    }

    #[test]
    fn certified_overflow_witnesses_radius() {
        // after each overflow the k+1 pre-merge centers are pairwise >= P
        let mut s = sketch(&[0.0, 3.0], 2, RadiusSchedule::Certified);
        s.insert(&pt(20.0)).unwrap();
        assert_eq!(s.radius(), 3.0);
        let witnesses = [0.0, 3.0, 20.0];
        for (i, a) in witnesses.iter().enumerate() {
            for b in &witnesses[i + 1..] {
                assert!(dist(&pt(*a), &pt(*b)).unwrap() >= s.radius());
            }
        }
    }
}
