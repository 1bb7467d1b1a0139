//! Invariant suites run by the `check` subcommand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::data::GenSpec;
use super::trial::{derive_seed, run_trial_detailed, DataSource, StreamOrder, TrialRun, TrialSpec};
use crate::cluster::{Mode, Processing};
use crate::error::Result;
use crate::geometry::{dist, PointSet};
use crate::kcenter::{KCenterState, RadiusSchedule};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_failure: Option<String>,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Replays a trial's decision log against its stream and final state.
pub fn replay_check(run: &TrialRun, k: usize, bootstrap: usize) -> std::result::Result<(), String> {
    let n = run.stream.len();
    if run.decisions.len() != n {
        return Err(format!("{} decisions for {n} arrivals", run.decisions.len()));
    }
    let mut chosen = Vec::new();
    for (i, d) in run.decisions.iter().enumerate() {
        if d.t != i as u64 + 1 {
            return Err(format!("decision {i} has t = {}", d.t));
        }
        if !(0.0..=1.0).contains(&d.probability) {
            return Err(format!("t={}: probability {}", d.t, d.probability));
        }
        if d.selected && d.probability == 0.0 {
            return Err(format!("t={}: selected with probability 0", d.t));
        }
        if d.aux_points > k {
            return Err(format!("t={}: {} aux points > k = {k}", d.t, d.aux_points));
        }
        if (i < bootstrap) != (d.processing == Processing::Bootstrap) {
            return Err(format!("t={}: unexpected {:?} processing", d.t, d.processing));
        }
        if d.processing == Processing::Bootstrap && !d.selected {
            return Err(format!("t={}: bootstrap arrival not selected", d.t));
        }
        if d.selected {
            chosen.push(d.t);
        }
    }
    if chosen != run.state.selected_arrivals() {
        return Err("selected arrivals disagree with the decision log".into());
    }
    let centers = run.state.finalize();
    for (c, &t) in centers.iter().zip(&chosen) {
        if *c != run.stream[t as usize - 1] {
            return Err(format!("center for t={t} is not the point that arrived then"));
        }
    }
    if centers.len() != run.report.centers_selected {
        return Err("centers_selected disagrees with the final state".into());
    }
    Ok(())
}

/// Streams `points` through a fresh sketch, checking after every insert that
/// |Z| <= k, every prefix point is within 4P of Z, counts sum to t and P never
/// decreases.
pub fn sketch_check(points: &PointSet, k: usize, schedule: RadiusSchedule) -> std::result::Result<(), String> {
    if points.len() < k {
        return Ok(());
    }
    let head = points.select(&(0..k).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
    let mut z = KCenterState::new(&head, k, schedule).map_err(|e| e.to_string())?;
    let mut last_p = z.radius();
    for t in k..=points.len() {
        if t > k {
            z.insert(&points[t - 1]).map_err(|e| e.to_string())?;
        }
        if z.centers().len() > k {
            return Err(format!("t={t}: {} centers", z.centers().len()));
        }
        if z.total_count() != t as u64 {
            return Err(format!("t={t}: counts sum to {}", z.total_count()));
        }
        let p = z.radius();
        if p < last_p {
            return Err(format!("t={t}: radius fell from {last_p} to {p}"));
        }
        last_p = p;
        for x in &points.as_slice()[..t] {
            let (_, d) = z.nearest_center(x).map_err(|e| e.to_string())?;
            if d > 4.0 * p {
                return Err(format!("t={t}: point {x} is {d} from Z but 4P = {}", 4.0 * p));
            }
        }
    }
    Ok(())
}

fn record(result: &mut SuiteResult, outcome: std::result::Result<(), String>) {
    result.cases += 1;
    if let Err(msg) = outcome {
        result.failures += 1;
        result.first_failure.get_or_insert(msg);
    }
}

fn suite(name: &'static str) -> SuiteResult {
    SuiteResult { name, cases: 0, failures: 0, first_failure: None }
}

/// Runs every suite on `cases` random instances per suite.
pub fn run_checks(seed: u64, cases: usize) -> Result<Vec<SuiteResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut sketch = suite("sketch");
    for case in 0..cases {
        let k = [2, 5, 10][case % 3];
        let d = [1, 2, 5][(case / 3) % 3];
        let schedule = if case % 2 == 0 { RadiusSchedule::Certified } else { RadiusSchedule::Doubling };
        let points = GenSpec::UniformBox { n: 120, d, side: 10.0 }.generate(rng.random())?;
        record(&mut sketch, sketch_check(&points, k, schedule));
    }

    let mut replay = suite("replay");
    let mut determinism = suite("determinism");
    let mut accounting = suite("accounting");
    for case in 0..cases {
        let k = 1 + case % 3;
        let source = if case % 2 == 0 {
            GenSpec::GaussianMixture { k, n: 10, d: 2, spread: 1.0, separation: 8.0 }
        } else {
            GenSpec::UniformBox { n: 10, d: 1, side: 5.0 }
        };
        let mut spec = TrialSpec::new(DataSource::Generated(source), k);
        spec.seed = derive_seed(rng.random(), case as u64);
        spec.order = [StreamOrder::Given, StreamOrder::Shuffled, StreamOrder::Adversarial { alpha: 9.0 }][case % 3];
        spec.mode = if case % 4 == 3 { Mode::Type1Only } else { Mode::Full };
        let run = run_trial_detailed(&spec)?;
        record(&mut replay, replay_check(&run, k, k));
        let again = run_trial_detailed(&spec)?;
        record(
            &mut determinism,
            if again.report == run.report && again.decisions == run.decisions {
                Ok(())
            } else {
                Err(format!("seed {} not reproducible", spec.seed))
            },
        );
        let r = &run.report;
        let sum = r.bootstrap_selected + r.type1_selected + r.type2_selected;
        let cost_ok = dist_check(&run);
        record(
            &mut accounting,
            if sum != r.centers_selected {
                Err(format!("seed {}: selection counts sum to {sum}, not {}", spec.seed, r.centers_selected))
            } else if r.peak_aux_points > k {
                Err(format!("seed {}: peak aux points {}", spec.seed, r.peak_aux_points))
            } else {
                cost_ok
            },
        );
    }
    Ok(vec![sketch, replay, determinism, accounting])
}

fn dist_check(run: &TrialRun) -> std::result::Result<(), String> {
    let centers = run.state.finalize();
    let mut total = 0.0;
    for x in &run.stream {
        let best = centers
            .iter()
            .map(|c| dist(x, c).map(|d| d * d))
            .collect::<Result<Vec<f64>>>()
            .map_err(|e| e.to_string())?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        total += best;
    }
    let reported = run.report.achieved_cost;
    if (total - reported).abs() <= 1e-9 * total.max(1.0) {
        Ok(())
    } else {
        Err(format!("achieved cost {reported} but recomputed {total}"))
    }
}
