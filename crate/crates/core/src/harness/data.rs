//! Dataset ingestion and synthetic generators.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, PointSet};
use crate::lower::gen_alpha_k_sequence;

/// Reads a headerless CSV file, one point per row.
pub fn load_points(path: &Path) -> Result<PointSet> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io { path: path.into(), source })?;
    read_points(std::io::BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::Io { path: path.into(), source },
        other => other,
    })
}

pub fn parse_points(text: &str) -> Result<PointSet> {
    read_points(text.as_bytes())
}

fn read_points<R: BufRead>(reader: R) -> Result<PointSet> {
    let mut points = Vec::new();
    let mut dim: Option<usize> = None;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|source| Error::Io { path: "<input>".into(), source })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let coords = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("not a number: '{}'", cell.trim()),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        match dim {
            Some(d) if d != coords.len() => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected {d} columns, found {}", coords.len()),
                });
            }
            _ => dim = Some(coords.len()),
        }
        let p = Point::new(coords).map_err(|e| Error::Parse { line: lineno, message: e.to_string() })?;
        points.push(p);
    }
    if points.is_empty() {
        return Err(Error::Parse { line: 1, message: "no points in input".into() });
    }
    PointSet::new(points)
}

pub fn write_points<W: Write>(points: &PointSet, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for p in points {
        w.write_record(p.coords().iter().map(|c| c.to_string()))?;
    }
    w.flush().map_err(|source| Error::Io { path: "<output>".into(), source })?;
    Ok(())
}

/// Synthetic dataset recipes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GenSpec {
    /// `k` Gaussian blobs whose centers sit `separation` apart along the first
    /// axis; points are dealt round-robin across blobs.
    GaussianMixture { k: usize, n: usize, d: usize, spread: f64, separation: f64 },
    /// `n` points uniform in `[0, side]^d`.
    UniformBox { n: usize, d: usize, side: f64 },
    /// A one-dimensional (alpha, k)-sequence in sequence order.
    AlphaKSequence { k: usize, alpha: f64, length: usize, margin: f64 },
}

impl GenSpec {
    /// Builds a recipe from a kind name and `key=value,...` parameters;
    /// missing keys take defaults.
    pub fn parse(kind: &str, params: &str) -> Result<Self> {
        let mut kv: BTreeMap<&str, &str> = BTreeMap::new();
        for item in params.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("expected key=value, got '{item}'")))?;
            kv.insert(key.trim(), value.trim());
        }
        let mut take = |key: &str, default: f64| -> Result<f64> {
            match kv.remove(key) {
                None => Ok(default),
                Some(v) => v
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidParameter(format!("{key}: not a number: '{v}'"))),
            }
        };
        let spec = match kind {
            "gaussian_mixture" => GenSpec::GaussianMixture {
                k: take("k", 3.0)? as usize,
                n: take("n", 60.0)? as usize,
                d: take("d", 2.0)? as usize,
                spread: take("spread", 1.0)?,
                separation: take("separation", 20.0)?,
            },
            "uniform_box" => GenSpec::UniformBox {
                n: take("n", 100.0)? as usize,
                d: take("d", 2.0)? as usize,
                side: take("side", 1.0)?,
            },
            "alpha_k_sequence" => GenSpec::AlphaKSequence {
                k: take("k", 2.0)? as usize,
                alpha: take("alpha", 9.0)?,
                length: take("length", 8.0)? as usize,
                margin: take("margin", 1.05)?,
            },
            other => return Err(Error::InvalidParameter(format!("unknown generator '{other}'"))),
        };
        if let Some(key) = kv.keys().next() {
            return Err(Error::InvalidParameter(format!("unknown parameter '{key}' for {kind}")));
        }
        Ok(spec)
    }

    pub fn generate(&self, seed: u64) -> Result<PointSet> {
        gen_dataset(self, seed)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

fn nonzero(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        Err(Error::InvalidParameter(format!("{name} must be >= 1")))
    } else {
        Ok(())
    }
}

/// Deterministic given `seed`.
pub fn gen_dataset(spec: &GenSpec, seed: u64) -> Result<PointSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match *spec {
        GenSpec::GaussianMixture { k, n, d, spread, separation } => {
            nonzero("k", k)?;
            nonzero("n", n)?;
            nonzero("d", d)?;
            positive("spread", spread)?;
            positive("separation", separation)?;
            let noise = Normal::new(0.0, spread).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let centers: Vec<Vec<f64>> = (0..k)
                .map(|j| {
                    (0..d)
                        .map(|axis| {
                            if axis == 0 {
                                j as f64 * separation
                            } else {
                                rng.random_range(0.0..separation)
                            }
                        })
                        .collect()
                })
                .collect();
            let rows = (0..n)
                .map(|i| centers[i % k].iter().map(|c| c + noise.sample(&mut rng)).collect())
                .collect();
            PointSet::from_rows(rows)
        }
        GenSpec::UniformBox { n, d, side } => {
            nonzero("n", n)?;
            nonzero("d", d)?;
            positive("side", side)?;
            let rows = (0..n).map(|_| (0..d).map(|_| rng.random_range(0.0..=side)).collect()).collect();
            PointSet::from_rows(rows)
        }
        GenSpec::AlphaKSequence { k, alpha, length, margin } => {
            gen_alpha_k_sequence(k, alpha, length, margin, seed)
        }
    }
}
