//! The online no-substitution clustering state machine.
//!
//! Each arrival after the bootstrap prefix is routed by the k-center sketch:
//! when the sketch centers are well separated relative to its radius
//! (`Q > 4(t+2)P` with all k centers present) the point is kept with
//! probability inversely proportional to the estimated size of its sketch
//! cluster; otherwise it is kept with probability `d(x,S)^2 / R` under a
//! threshold `R` that is raised from the sketch radius and doubled whenever too
//! many selections accumulate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{nearest_sq, Point, PointSet};
use crate::kcenter::{KCenterState, RadiusSchedule};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Both processing types, routed by the sketch.
    #[default]
    Full,
    /// Threshold selection only; the sketch still supplies the radius.
    Type1Only,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "type1_only" | "type1-only" => Ok(Self::Type1Only),
            other => Err(Error::InvalidParameter(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub k: usize,
    /// Leading arrivals taken unconditionally; at least k.
    pub bootstrap: usize,
    /// Denominator constant of the threshold raise `P^2 / (c k ln(k+10))`.
    pub c_raise: f64,
    /// Doubling fires once the selection counter exceeds `c k ln(k+10) log t`.
    pub c_double: f64,
    /// Numerator constant of the size-based probability `c ln(k+10) / m`.
    pub c_type2: f64,
    pub log_base: f64,
    pub mode: Mode,
    pub schedule: RadiusSchedule,
    pub seed: u64,
}

impl ClusterConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            bootstrap: k,
            c_raise: 24.0,
            c_double: 289.0,
            c_type2: 12.0,
            log_base: 2.0,
            mode: Mode::Full,
            schedule: RadiusSchedule::Certified,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_bootstrap(mut self, bootstrap: usize) -> Self {
        self.bootstrap = bootstrap;
        self
    }

    pub fn with_schedule(mut self, schedule: RadiusSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        if self.bootstrap < self.k {
            return Err(Error::InvalidParameter(format!(
                "bootstrap {} must be >= k {}",
                self.bootstrap, self.k
            )));
        }
        for (name, v) in [
            ("c_raise", self.c_raise),
            ("c_double", self.c_double),
            ("c_type2", self.c_type2),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.log_base.is_finite() && self.log_base > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "log_base must exceed 1, got {}",
                self.log_base
            )));
        }
        Ok(())
    }

    fn ln_k10(&self) -> f64 {
        (self.k as f64 + 10.0).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Processing {
    Bootstrap,
    Type1,
    Type2,
}

/// The record of one streaming decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// 1-based arrival index.
    pub t: u64,
    pub processing: Processing,
    pub selected: bool,
    pub probability: f64,
    pub r_after: f64,
    pub aux_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    config: ClusterConfig,
    selected: Vec<Point>,
    selected_at: Vec<u64>,
    threshold: f64,
    counter: u64,
    sketch: Option<KCenterState>,
    arrivals: u64,
    dim: Option<usize>,
    raises: u64,
    doublings: u64,
}

impl ClusterState {
    pub fn new(config: ClusterConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            selected: Vec::new(),
            selected_at: Vec::new(),
            threshold: 0.0,
            counter: 0,
            sketch: None,
            arrivals: 0,
            dim: None,
            raises: 0,
            doublings: 0,
        })
    }

    pub fn process(&mut self, x: &Point) -> Result<Decision> {
        match self.dim {
            Some(expected) if expected != x.dim() => {
                return Err(Error::DimensionMismatch { expected, got: x.dim() });
            }
            _ => self.dim = Some(x.dim()),
        }
        self.arrivals += 1;
        let t = self.arrivals;
        let k = self.config.k;

        if t <= self.config.bootstrap as u64 {
            self.take(x);
            if t == k as u64 {
                let first = PointSet::new(self.selected.clone())?;
                self.sketch = Some(KCenterState::new(&first, k, self.config.schedule)?);
            } else if let Some(sketch) = self.sketch.as_mut() {
                sketch.insert(x)?;
            }
            return Ok(self.decision(t, Processing::Bootstrap, true, 1.0));
        }

        let sketch = self.sketch.as_mut().expect("initialised once k points arrived");
        sketch.insert(x)?;
        let radius = sketch.radius();
        let well_separated = sketch.centers().len() == k
            && sketch.min_center_gap() > 4.0 * (t as f64 + 2.0) * radius;

        if self.config.mode == Mode::Full && well_separated {
            let (center, _) = sketch.nearest_center(x)?;
            let p = (self.config.c_type2 * self.config.ln_k10() / center.count as f64).min(1.0);
            let selected = self.draw(t) < p;
            if selected {
                self.take(x);
            }
            return Ok(self.decision(t, Processing::Type2, selected, p));
        }

        let raised = radius * radius / (self.config.c_raise * k as f64 * self.config.ln_k10());
        if raised > self.threshold {
            self.threshold = raised;
            self.counter = 0;
            self.raises += 1;
        }
        let d2 = nearest_sq(x, &self.selected).1;
        let p = if self.threshold == 0.0 {
            if d2 > 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            (d2 / self.threshold).min(1.0)
        };
        let selected = self.draw(t) < p;
        if selected {
            self.take(x);
            self.counter += 1;
        }
        let limit = self.config.c_double
            * k as f64
            * self.config.ln_k10()
            * (t as f64).log(self.config.log_base);
        if self.counter as f64 > limit {
            self.threshold *= 2.0;
            self.counter = 0;
            self.doublings += 1;
        }
        Ok(self.decision(t, Processing::Type1, selected, p))
    }

    fn take(&mut self, x: &Point) {
        self.selected.push(x.clone());
        self.selected_at.push(self.arrivals);
    }

    /// Uniform [0,1) draw keyed by (seed, t), independent of call history.
    fn draw(&self, t: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(t);
        rng.random::<f64>()
    }

    fn decision(&self, t: u64, processing: Processing, selected: bool, probability: f64) -> Decision {
        Decision {
            t,
            processing,
            selected,
            probability,
            r_after: self.threshold,
            aux_points: self.aux_memory(),
        }
    }

    /// The selected centers in arrival order.
    pub fn finalize(&self) -> PointSet {
        PointSet::new(self.selected.clone()).expect("selected points share a dimension")
    }

    /// 1-based arrival indices of the selected centers.
    pub fn selected_arrivals(&self) -> &[u64] {
        &self.selected_at
    }

    pub fn selected_len(&self) -> usize {
        self.selected.len()
    }

    /// Points held outside the selected set (the sketch centers).
    pub fn aux_memory(&self) -> usize {
        self.sketch.as_ref().map_or(0, |s| s.centers().len())
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn selection_counter(&self) -> u64 {
        self.counter
    }

    pub fn raises(&self) -> u64 {
        self.raises
    }

    pub fn doublings(&self) -> u64 {
        self.doublings
    }

    pub fn arrivals(&self) -> u64 {
        self.arrivals
    }

    pub fn sketch(&self) -> Option<&KCenterState> {
        self.sketch.as_ref()
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }
}

/// Streams every point through a fresh state.
pub fn run_stream(config: ClusterConfig, points: &PointSet) -> Result<(ClusterState, Vec<Decision>)> {
    let mut state = ClusterState::new(config)?;
    let decisions = points.iter().map(|p| state.process(p)).collect::<Result<Vec<_>>>()?;
    Ok((state, decisions))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[f64]) -> PointSet {
        PointSet::from_scalars(v).unwrap()
    }

    fn pt(x: f64) -> Point {
        Point::scalar(x).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(ClusterConfig::new(0).validate().is_err());
        assert!(ClusterConfig::new(3).with_bootstrap(2).validate().is_err());
        let mut c = ClusterConfig::new(2);
        c.c_type2 = 0.0;
        assert!(c.validate().is_err());
        let mut c = ClusterConfig::new(2);
        c.log_base = 1.0;
        assert!(ClusterState::new(c).is_err());
        assert!(ClusterConfig::new(2).validate().is_ok());
    }

    #[test]
    fn bootstrap_selects_first_k() {
        let mut s = ClusterState::new(ClusterConfig::new(3)).unwrap();
        assert_eq!(s.aux_memory(), 0);
        for (i, x) in [4.0, -1.0, 9.0].into_iter().enumerate() {
            let d = s.process(&pt(x)).unwrap();
            assert_eq!(d.t, i as u64 + 1);
            assert!(d.selected);
            assert_eq!(d.processing, Processing::Bootstrap);
        }
        assert_eq!(s.finalize(), pts(&[4.0, -1.0, 9.0]));
        assert!(s.sketch().is_some());
    }

    #[test]
    fn long_bootstrap() {
        let cfg = ClusterConfig::new(2).with_bootstrap(36).with_seed(4);
        let stream: Vec<f64> = (0..50).map(|i| (i * 7 % 13) as f64).collect();
        let (state, decisions) = run_stream(cfg, &pts(&stream)).unwrap();
        assert!(decisions[..36].iter().all(|d| d.selected && d.processing == Processing::Bootstrap));
        assert!(decisions[36..].iter().all(|d| d.processing != Processing::Bootstrap));
        assert_eq!(state.sketch().unwrap().arrivals(), 50);
    }

    #[test]
    fn first_type1_raises_threshold() {
        // certified sketch: overflow on {0, 10, 1} sets P = 1; Q = 10 <= 4*5*1
        let (state, d) = run_stream(ClusterConfig::new(2).with_seed(1), &pts(&[0.0, 10.0, 1.0])).unwrap();
        let expect = 1.0 / (24.0 * 2.0 * 12f64.ln());
        assert_eq!(d[2].processing, Processing::Type1);
        assert_eq!(d[2].r_after, expect);
        assert_eq!(state.raises(), 1);
        assert_eq!(d[2].probability, (1.0 / expect).min(1.0));
    }

    #[test]
    fn duplicate_of_center_never_selected_by_type1() {
        for seed in 0..20 {
            let (_, d) =
                run_stream(ClusterConfig::new(2).with_seed(seed), &pts(&[0.0, 10.0, 1.0, 10.0, 0.0])).unwrap();
            assert_eq!(d[3].processing, Processing::Type1);
            assert_eq!(d[3].probability, 0.0);
            assert!(!d[3].selected && !d[4].selected);
        }
    }

    #[test]
    fn zero_threshold_selects_novel_points() {
        // identical bootstrap: the sketch holds fewer than k centers and P = 0
        let (state, d) = run_stream(ClusterConfig::new(3), &pts(&[0.0, 0.0, 0.0, 8.0, 8.0])).unwrap();
        assert_eq!(d[3].processing, Processing::Type1);
        assert_eq!((d[3].probability, d[3].selected, d[3].r_after), (1.0, true, 0.0));
        // the repeat of 8 now sits in S and in the sketch
        assert_eq!(d[4].probability, 0.0);
        assert_eq!(state.selected_len(), 4);
    }

    #[test]
    fn far_point_takes_type2_branch() {
        // sketch after {0,1,D}: Z = {(0,2),(D,1)}, P = 1, Q = D > 4*(3+2)*1
        for seed in 0..10 {
            let (_, d) = run_stream(ClusterConfig::new(2).with_seed(seed), &pts(&[0.0, 1.0, 25.0])).unwrap();
            assert_eq!(d[2].processing, Processing::Type2);
            assert_eq!(d[2].probability, 1.0);
            assert!(d[2].selected);
        }
        // not separated enough
        let (_, d) = run_stream(ClusterConfig::new(2), &pts(&[0.0, 1.0, 19.0])).unwrap();
        assert_eq!(d[2].processing, Processing::Type1);
        // the doubling schedule needs Q > 4*(3+2)*2
        let cfg = ClusterConfig::new(2).with_schedule(RadiusSchedule::Doubling);
        let (_, d) = run_stream(cfg.clone(), &pts(&[0.0, 1.0, 41.0])).unwrap();
        assert_eq!(d[2].processing, Processing::Type2);
        let (_, d) = run_stream(cfg, &pts(&[0.0, 1.0, 39.0])).unwrap();
        assert_eq!(d[2].processing, Processing::Type1);
    }

    #[test]
    fn type2_probability_uses_cluster_size() {
        // cluster A = 30 copies-ish near 0, cluster B at 1e6
        let mut stream = vec![0.0, 1e6];
        stream.extend((0..40).map(|i| (i % 4) as f64 * 0.25));
        let (state, d) = run_stream(ClusterConfig::new(2).with_seed(3), &pts(&stream)).unwrap();
        let last = d.last().unwrap();
        assert_eq!(last.processing, Processing::Type2);
        let m = state.sketch().unwrap().nearest_center(&pt(0.75)).unwrap().0.count;
        assert_eq!(m, 41);
        assert_eq!(last.probability, 12.0 * 12f64.ln() / 41.0);
    }

    #[test]
    fn type1_only_never_routes_to_type2() {
        let cfg = ClusterConfig::new(2).with_mode(Mode::Type1Only);
        let (_, d) = run_stream(cfg, &pts(&[0.0, 1.0, 25.0, 1e5, 3.0])).unwrap();
        assert!(d.iter().all(|d| d.processing != Processing::Type2));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut s = ClusterState::new(ClusterConfig::new(1)).unwrap();
        s.process(&pt(1.0)).unwrap();
        assert!(matches!(
            s.process(&Point::new(vec![1.0, 2.0]).unwrap()),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn finalize_is_idempotent_and_matches_decisions() {
        let stream: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 / 3.0).collect();
        let (state, d) = run_stream(ClusterConfig::new(3).with_seed(8), &pts(&stream)).unwrap();
        assert_eq!(state.finalize(), state.finalize());
        assert_eq!(state.finalize().len(), d.iter().filter(|d| d.selected).count());
        assert!(d.iter().all(|d| d.aux_points <= 3));
    }

    #[test]
    fn doubling_fires_when_counter_exceeds_limit() {
        // tiny doubling constant so that every selection triggers it
        let mut cfg = ClusterConfig::new(1).with_seed(2);
        cfg.c_double = 1e-9;
        cfg.mode = Mode::Type1Only;
        let stream: Vec<f64> = (0..30).map(|i| (i as f64).powi(2)).collect();
        let (state, d) = run_stream(cfg, &pts(&stream)).unwrap();
        assert!(state.doublings() > 0);
        assert!(d.windows(2).all(|w| w[1].r_after >= w[0].r_after));
    }
}
