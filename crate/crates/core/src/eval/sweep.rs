use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use super::metrics::{direct_accuracy, neighbor_accuracy_masked};
use super::report::{EvalRecord, EvalReport};
use super::solvers::Solver;
use crate::error::{Error, Result};
use crate::puzzle::PuzzleInstance;
use crate::rng::derive_seed;

/// Condition a puzzle is evaluated under.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Regime {
    Clean,
    /// Fraction of pieces removed.
    Missing(f64),
    /// Gaussian noise standard deviation.
    Noise(f64),
    /// Border ring zeroed, in pixels.
    Erode(usize),
}

impl Regime {
    /// Missing 10/20/30 %, noise 0.05/0.1/0.2, erosion 1/2/5 px.
    pub fn standard() -> Vec<Regime> {
        vec![
            Regime::Missing(0.1),
            Regime::Missing(0.2),
            Regime::Missing(0.3),
            Regime::Noise(0.05),
            Regime::Noise(0.1),
            Regime::Noise(0.2),
            Regime::Erode(1),
            Regime::Erode(2),
            Regime::Erode(5),
        ]
    }

    pub fn apply(&self, puzzle: &PuzzleInstance, seed: u64) -> Result<PuzzleInstance> {
        match *self {
            Regime::Clean => Ok(puzzle.clone()),
            Regime::Missing(f) => puzzle.perturb_missing(f, seed),
            Regime::Noise(s) => puzzle.perturb_noise(s, seed),
            Regime::Erode(b) => puzzle.perturb_erode(b),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Clean => write!(f, "clean"),
            Regime::Missing(v) => write!(f, "missing:{v}"),
            Regime::Noise(v) => write!(f, "noise:{v}"),
            Regime::Erode(v) => write!(f, "erode:{v}"),
        }
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown regime {s:?}"));
        if s == "clean" {
            return Ok(Regime::Clean);
        }
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "missing" => value.parse().map(Regime::Missing).map_err(|_| bad()),
            "noise" => value.parse().map(Regime::Noise).map_err(|_| bad()),
            "erode" => value.parse().map(Regime::Erode).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

/// Perturbation seed of one puzzle under one regime.
pub fn regime_seed(seed: u64, puzzle_id: &str, regime: &Regime) -> u64 {
    derive_seed(seed, &[puzzle_id, &regime.to_string()])
}

/// Scores one solved puzzle.
pub fn evaluate_one(puzzle: &PuzzleInstance, solver: &dyn Solver, label: &str) -> Result<EvalRecord> {
    let start = Instant::now();
    let pred = solver.solve(&puzzle.anonymized())?;
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    let present = puzzle.present_mask();
    let gt = puzzle.gt_permutation();
    Ok(EvalRecord {
        puzzle_id: puzzle.id(),
        solver: solver.tag(),
        rows: puzzle.rows(),
        cols: puzzle.cols(),
        perturbation: label.to_string(),
        direct_accuracy: direct_accuracy(&pred, gt, &present)?,
        neighbor_accuracy: neighbor_accuracy_masked(&pred, gt, puzzle.rows(), puzzle.cols(), &present)?,
        wall_time_ms,
    })
}

/// Evaluates every puzzle clean and under every regime. Perturbation seeds
/// come from [`regime_seed`]; `jobs` threads solve in parallel (0 = all
/// cores). Records are sorted canonically regardless of completion order.
pub fn robustness_sweep(
    puzzles: &[PuzzleInstance],
    solver: &dyn Solver,
    regimes: &[Regime],
    seed: u64,
    jobs: usize,
) -> Result<EvalReport> {
    let mut all = vec![Regime::Clean];
    all.extend(regimes.iter().copied().filter(|r| *r != Regime::Clean));
    let tasks: Vec<(&PuzzleInstance, Regime)> = puzzles
        .iter()
        .flat_map(|p| all.iter().map(move |r| (p, *r)))
        .collect();
    let run = || {
        tasks
            .par_iter()
            .map(|(p, r)| {
                let perturbed = r.apply(p, regime_seed(seed, &p.id(), r))?;
                evaluate_one(&perturbed, solver, &r.to_string())
            })
            .collect::<Result<Vec<_>>>()
    };
    let records = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
        .install(run)?;
    let metadata = BTreeMap::from([
        ("seed".to_string(), seed.to_string()),
        ("solver".to_string(), solver.tag()),
        (
            "regimes".to_string(),
            all.iter().map(ToString::to_string).collect::<Vec<_>>().join(","),
        ),
    ]);
    Ok(EvalReport::new(records, metadata))
}
