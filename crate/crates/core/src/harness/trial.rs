//! Seeded trials and multi-trial experiments with JSON/CSV reports.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use super::data::{load_points, GenSpec};
use crate::cluster::{ClusterConfig, ClusterState, Decision, Mode, Processing};
use crate::error::{Error, Result};
use crate::geometry::{kmeans_cost, PointSet};
use crate::kcenter::RadiusSchedule;
use crate::lower::{adversarial_order, lower_best_effort};
use crate::oracle::{default_exact_limit, lloyd_kmeans, optimal_kmeans};

/// Approximation factor a trial must meet to count as a success.
pub const TARGET_RATIO: f64 = 9.0;

/// alpha used for the reported lower-bound estimate.
pub const LOWER_ALPHA: f64 = 9.0;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    File(PathBuf),
    Generated(GenSpec),
    Inline(PointSet),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum StreamOrder {
    Given,
    Shuffled,
    /// Longest certified (alpha, k)-sequence first.
    Adversarial { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum OraclePolicy {
    Exact,
    Lloyd { restarts: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpec {
    pub source: DataSource,
    pub k: usize,
    pub order: StreamOrder,
    pub mode: Mode,
    pub schedule: RadiusSchedule,
    /// Defaults to k.
    pub bootstrap: Option<usize>,
    pub seed: u64,
    pub oracle: OraclePolicy,
    /// Record wall time in the report; breaks byte-for-byte reproducibility.
    pub timing: bool,
}

impl TrialSpec {
    pub fn new(source: DataSource, k: usize) -> Self {
        Self {
            source,
            k,
            order: StreamOrder::Given,
            mode: Mode::Full,
            schedule: RadiusSchedule::Certified,
            bootstrap: None,
            seed: 0,
            oracle: OraclePolicy::Exact,
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        if let StreamOrder::Adversarial { alpha } = self.order {
            if !(alpha.is_finite() && alpha > 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "adversarial ordering needs alpha > 1, got {alpha}"
                )));
            }
        }
        if let OraclePolicy::Lloyd { restarts: 0 } = self.oracle {
            return Err(Error::InvalidParameter("lloyd oracle needs restarts >= 1".into()));
        }
        Ok(())
    }

    fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Trial approximation ratio; undefined ratios get a labelled sentinel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Finite(f64),
    /// Oracle and achieved cost are both zero.
    ZeroCost,
    /// Oracle cost zero but achieved cost positive.
    Unbounded,
}

impl Ratio {
    fn new(achieved: f64, oracle: f64) -> Self {
        match (achieved > 0.0, oracle > 0.0) {
            (_, true) => Ratio::Finite(achieved / oracle),
            (false, false) => Ratio::ZeroCost,
            (true, false) => Ratio::Unbounded,
        }
    }

    pub fn within(&self, target: f64) -> bool {
        match *self {
            Ratio::Finite(r) => r <= target,
            Ratio::ZeroCost => true,
            Ratio::Unbounded => false,
        }
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            Ratio::Finite(r) => Some(r),
            _ => None,
        }
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            Ratio::Finite(r) => s.serialize_f64(r),
            Ratio::ZeroCost => s.serialize_str("zero-cost"),
            Ratio::Unbounded => s.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(r) => Ok(Ratio::Finite(r)),
            Raw::Text(t) if t == "zero-cost" => Ok(Ratio::ZeroCost),
            Raw::Text(t) if t == "unbounded" => Ok(Ratio::Unbounded),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("bad ratio '{t}'"))),
        }
    }
}

/// One trial's metrics, flat so it serialises as a JSON object or a CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub n: usize,
    pub k: usize,
    pub centers_selected: usize,
    pub bootstrap_selected: usize,
    pub type1_selected: usize,
    pub type2_selected: usize,
    pub type1_steps: usize,
    pub type2_steps: usize,
    pub peak_aux_points: usize,
    pub achieved_cost: f64,
    pub oracle_cost: f64,
    pub oracle_exact: bool,
    pub ratio: Ratio,
    pub within_nine: bool,
    pub lower_estimate: usize,
    pub lower_exact: bool,
    pub final_r: f64,
    pub r_doublings: u64,
    pub r_raises: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

/// A trial together with the ordered stream and its decision log.
#[derive(Debug, Clone)]
pub struct TrialRun {
    pub report: RunReport,
    pub stream: PointSet,
    pub decisions: Vec<Decision>,
    pub state: ClusterState,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent sub-seed for `purpose` derived from `seed`.
pub fn derive_seed(seed: u64, purpose: u64) -> u64 {
    splitmix(splitmix(seed) ^ purpose.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

const DATA_STREAM: u64 = 1;
const ORDER_STREAM: u64 = 2;
const ALGO_STREAM: u64 = 3;
const LLOYD_STREAM: u64 = 4;
const TRIAL_STREAM: u64 = 5;

/// Seed of trial `index` in an experiment.
pub fn trial_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, TRIAL_STREAM.wrapping_add((index as u64) << 8))
}

/// Materialises the dataset of `spec` in stream order.
pub fn ordered_stream(spec: &TrialSpec) -> Result<PointSet> {
    let points = match &spec.source {
        DataSource::File(path) => load_points(path)?,
        DataSource::Generated(g) => g.generate(derive_seed(spec.seed, DATA_STREAM))?,
        DataSource::Inline(p) => p.clone(),
    };
    if points.is_empty() {
        return Err(Error::Empty("trial dataset"));
    }
    let order: Vec<usize> = match spec.order {
        StreamOrder::Given => (0..points.len()).collect(),
        StreamOrder::Shuffled => {
            let mut idx: Vec<usize> = (0..points.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, ORDER_STREAM)));
            idx
        }
        StreamOrder::Adversarial { alpha } => {
            let seq = lower_best_effort(&points, alpha, spec.k)?;
            adversarial_order(points.len(), &seq)?
        }
    };
    points.select(&order)
}

pub fn run_trial(spec: &TrialSpec) -> Result<RunReport> {
    Ok(run_trial_detailed(spec)?.report)
}

pub fn run_trial_detailed(spec: &TrialSpec) -> Result<TrialRun> {
    spec.validate()?;
    let started = Instant::now();
    let stream = ordered_stream(spec)?;
    let n = stream.len();
    let k = spec.k;

    if spec.oracle == OraclePolicy::Exact && n > default_exact_limit(k) {
        return Err(Error::OverExactLimit { n, k, limit: default_exact_limit(k), fallback: "the lloyd oracle" });
    }

    let config = ClusterConfig::new(k)
        .with_bootstrap(spec.bootstrap.unwrap_or(k))
        .with_mode(spec.mode)
        .with_schedule(spec.schedule)
        .with_seed(derive_seed(spec.seed, ALGO_STREAM));
    let mut state = ClusterState::new(config)?;
    let mut decisions = Vec::with_capacity(n);
    for p in &stream {
        decisions.push(state.process(p)?);
    }

    let centers = state.finalize();
    let achieved_cost = kmeans_cost(&stream, &centers)?;
    let (oracle_cost, oracle_exact) = match spec.oracle {
        OraclePolicy::Exact => (optimal_kmeans(&stream, k)?.cost, true),
        OraclePolicy::Lloyd { restarts } => {
            if n <= k {
                (0.0, true)
            } else {
                (lloyd_kmeans(&stream, k, restarts, derive_seed(spec.seed, LLOYD_STREAM))?.cost, false)
            }
        }
    };
    let ratio = Ratio::new(achieved_cost, oracle_cost);
    let lower = lower_best_effort(&stream, LOWER_ALPHA, k)?;

    let count = |kind: Processing| decisions.iter().filter(|d| d.selected && d.processing == kind).count();
    let steps = |kind: Processing| decisions.iter().filter(|d| d.processing == kind).count();
    let report = RunReport {
        n,
        k,
        centers_selected: centers.len(),
        bootstrap_selected: count(Processing::Bootstrap),
        type1_selected: count(Processing::Type1),
        type2_selected: count(Processing::Type2),
        type1_steps: steps(Processing::Type1),
        type2_steps: steps(Processing::Type2),
        peak_aux_points: decisions.iter().map(|d| d.aux_points).max().unwrap_or(0),
        achieved_cost,
        oracle_cost,
        oracle_exact,
        ratio,
        within_nine: ratio.within(TARGET_RATIO),
        lower_estimate: lower.len(),
        lower_exact: lower.exact,
        final_r: state.threshold(),
        r_doublings: state.doublings(),
        r_raises: state.raises(),
        seed: spec.seed,
        wall_time_ms: spec.timing.then(|| started.elapsed().as_secs_f64() * 1e3),
    };
    Ok(TrialRun { report, stream, decisions, state })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Csv,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(Error::InvalidParameter(format!("unknown output format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trials: usize,
    pub mean_ratio: Option<f64>,
    pub median_ratio: Option<f64>,
    pub p90_ratio: Option<f64>,
    pub max_ratio: Option<f64>,
    pub zero_cost_trials: usize,
    pub fraction_within_nine: f64,
    pub mean_centers: f64,
    pub max_aux_points: usize,
    /// Mean of centers_selected / lower_estimate; reported, not asserted.
    pub mean_centers_over_lower: f64,
}

impl Summary {
    pub fn from_reports(reports: &[RunReport]) -> Self {
        let trials = reports.len();
        let mut ratios: Vec<f64> = reports.iter().filter_map(|r| r.ratio.finite()).collect();
        ratios.sort_by(f64::total_cmp);
        let quantile = |q: f64| -> Option<f64> {
            if ratios.is_empty() {
                return None;
            }
            let pos = ((ratios.len() - 1) as f64 * q).round() as usize;
            Some(ratios[pos])
        };
        let mean = |xs: &mut dyn Iterator<Item = f64>| -> f64 {
            let (sum, count) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
            if count == 0 {
                0.0
            } else {
                sum / count as f64
            }
        };
        Summary {
            trials,
            mean_ratio: (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64),
            median_ratio: quantile(0.5),
            p90_ratio: quantile(0.9),
            max_ratio: ratios.last().copied(),
            zero_cost_trials: reports.iter().filter(|r| r.ratio == Ratio::ZeroCost).count(),
            fraction_within_nine: if trials == 0 {
                0.0
            } else {
                reports.iter().filter(|r| r.within_nine).count() as f64 / trials as f64
            },
            mean_centers: mean(&mut reports.iter().map(|r| r.centers_selected as f64)),
            max_aux_points: reports.iter().map(|r| r.peak_aux_points).max().unwrap_or(0),
            mean_centers_over_lower: mean(
                &mut reports.iter().map(|r| r.centers_selected as f64 / r.lower_estimate.max(1) as f64),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub trials: Vec<RunReport>,
    pub aggregate: Summary,
}

/// Runs `trials` independent trials (in parallel) with seeds derived from
/// `spec.seed`. Results are ordered by trial index.
pub fn run_experiment(spec: &TrialSpec, trials: usize) -> Result<ExperimentOutput> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    spec.validate()?;
    let reports = (0..trials)
        .into_par_iter()
        .map(|i| run_trial(&spec.with_seed(trial_seed(spec.seed, i))))
        .collect::<Result<Vec<_>>>()?;
    let aggregate = Summary::from_reports(&reports);
    Ok(ExperimentOutput { trials: reports, aggregate })
}

/// Writes a report. JSON holds trials and aggregate in one document; CSV
/// holds one row per trial and the aggregate goes to `<out>.aggregate.json`.
pub fn write_output(output: &ExperimentOutput, path: &Path, format: OutputFormat) -> Result<()> {
    let io_err = |source| Error::Io { path: path.into(), source };
    match format {
        OutputFormat::Json => {
            let mut text = serde_json::to_string_pretty(output)?;
            text.push('\n');
            std::fs::write(path, text).map_err(io_err)?;
        }
        OutputFormat::Csv => {
            let file = std::fs::File::create(path).map_err(io_err)?;
            let mut w = csv::Writer::from_writer(file);
            for r in &output.trials {
                w.serialize(r)?;
            }
            w.flush().map_err(io_err)?;
            let agg_path = aggregate_path(path);
            let mut text = serde_json::to_string_pretty(&output.aggregate)?;
            text.push('\n');
            std::fs::write(&agg_path, text).map_err(|source| Error::Io { path: agg_path, source })?;
        }
    }
    Ok(())
}

pub fn aggregate_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path.as_os_str().to_owned();
    name.push(".aggregate.json");
    PathBuf::from(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inline(v: &[f64], k: usize) -> TrialSpec {
        TrialSpec::new(DataSource::Inline(PointSet::from_scalars(v).unwrap()), k)
    }

    #[test]
    fn bootstrap_only_trial_is_zero_cost() {
        let r = run_trial(&inline(&[3.0, -1.0], 2)).unwrap();
        assert_eq!(r.ratio, Ratio::ZeroCost);
        assert_eq!((r.centers_selected, r.bootstrap_selected), (2, 2));
        assert!(r.within_nine);
    }

    #[test]
    fn report_bookkeeping() {
        let mut spec = TrialSpec::new(
            DataSource::Generated(GenSpec::UniformBox { n: 10, d: 2, side: 1.0 }),
            2,
        );
        spec.order = StreamOrder::Shuffled;
        for seed in 0..30 {
            let run = run_trial_detailed(&spec.with_seed(seed)).unwrap();
            let r = &run.report;
            assert_eq!(r.centers_selected, r.bootstrap_selected + r.type1_selected + r.type2_selected);
            assert_eq!(r.centers_selected, run.decisions.iter().filter(|d| d.selected).count());
            assert!(r.peak_aux_points <= 2);
            assert!(r.oracle_exact && r.lower_exact);
            assert_eq!(r.ratio.finite().unwrap(), r.achieved_cost / r.oracle_cost);
        }
    }

    #[test]
    fn identical_specs_give_identical_reports() {
        let mut spec = TrialSpec::new(
            DataSource::Generated(GenSpec::GaussianMixture { k: 2, n: 12, d: 2, spread: 1.0, separation: 5.0 }),
            2,
        );
        spec.order = StreamOrder::Adversarial { alpha: 9.0 };
        spec.seed = 77;
        let a = serde_json::to_string(&run_trial(&spec).unwrap()).unwrap();
        let b = serde_json::to_string(&run_trial(&spec).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exact_oracle_refuses_large_instances() {
        let spec = TrialSpec::new(DataSource::Generated(GenSpec::UniformBox { n: 40, d: 2, side: 1.0 }), 2);
        assert!(matches!(run_trial(&spec), Err(Error::OverExactLimit { .. })));
        let lloyd = TrialSpec { oracle: OraclePolicy::Lloyd { restarts: 5 }, ..spec };
        let r = run_trial(&lloyd).unwrap();
        assert!(!r.oracle_exact && !r.lower_exact);
    }

    #[test]
    fn invalid_specs() {
        let mut spec = inline(&[1.0, 2.0], 2);
        spec.order = StreamOrder::Adversarial { alpha: 1.0 };
        assert!(run_trial(&spec).is_err());
        assert!(run_trial(&inline(&[1.0], 0)).is_err());
        assert!(run_experiment(&inline(&[1.0, 2.0], 1), 0).is_err());
    }

    #[test]
    fn single_trial_aggregate() {
        let spec = TrialSpec::new(DataSource::Generated(GenSpec::UniformBox { n: 10, d: 1, side: 5.0 }), 2);
        let out = run_experiment(&spec, 1).unwrap();
        let r = &out.trials[0];
        let a = &out.aggregate;
        assert_eq!(a.trials, 1);
        assert_eq!(a.mean_ratio, r.ratio.finite());
        assert_eq!(a.median_ratio, r.ratio.finite());
        assert_eq!(a.mean_centers, r.centers_selected as f64);
        assert_eq!(a.max_aux_points, r.peak_aux_points);
        assert!((0.0..=1.0).contains(&a.fraction_within_nine));
    }

    #[test]
    fn ratio_sentinels() {
        assert_eq!(Ratio::new(0.0, 0.0), Ratio::ZeroCost);
        assert_eq!(Ratio::new(1.0, 0.0), Ratio::Unbounded);
        assert!(!Ratio::Unbounded.within(9.0));
        assert_eq!(serde_json::to_string(&Ratio::ZeroCost).unwrap(), "\"zero-cost\"");
        let back: Ratio = serde_json::from_str("2.5").unwrap();
        assert_eq!(back, Ratio::Finite(2.5));
    }

    #[test]
    fn timing_is_opt_in() {
        let mut spec = inline(&[1.0, 2.0, 3.0], 2);
        assert!(run_trial(&spec).unwrap().wall_time_ms.is_none());
        spec.timing = true;
        assert!(run_trial(&spec).unwrap().wall_time_ms.is_some());
    }
}
