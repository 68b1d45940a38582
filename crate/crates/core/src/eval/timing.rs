use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::solvers::Solver;
use crate::error::{Error, Result};
use crate::puzzle::PuzzleInstance;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub solver: String,
    pub samples_ms: Vec<f64>,
    pub mean_ms: f64,
    /// Sample standard deviation.
    pub std_ms: f64,
}

impl TimingReport {
    pub fn from_samples(solver: String, samples_ms: Vec<f64>) -> Result<Self> {
        if samples_ms.len() < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                got: samples_ms.len(),
            });
        }
        let n = samples_ms.len() as f64;
        let mean_ms = samples_ms.iter().sum::<f64>() / n;
        let var = samples_ms.iter().map(|v| (v - mean_ms).powi(2)).sum::<f64>() / (n - 1.0);
        Ok(Self {
            solver,
            samples_ms,
            mean_ms,
            std_ms: var.sqrt(),
        })
    }

    /// `"<mean> ± <std>"` with two decimals, in milliseconds.
    pub fn formatted(&self) -> String {
        format!("{:.2} ± {:.2}", self.mean_ms, self.std_ms)
    }

    pub fn coefficient_of_variation(&self) -> f64 {
        self.std_ms / self.mean_ms
    }

    pub fn std_error(&self) -> f64 {
        self.std_ms / (self.samples_ms.len() as f64).sqrt()
    }
}

/// Wall-clock time of one solve per puzzle, serialized on the calling
/// thread. The first `warmup` solves (cycling through `puzzles`) are not
/// timed. Puzzles are already decoded, so image I/O is excluded.
pub fn time_solver(puzzles: &[PuzzleInstance], solver: &dyn Solver, warmup: usize) -> Result<TimingReport> {
    if puzzles.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: puzzles.len(),
        });
    }
    let inputs: Vec<PuzzleInstance> = puzzles.iter().map(PuzzleInstance::anonymized).collect();
    for p in inputs.iter().cycle().take(warmup) {
        solver.solve(p)?;
    }
    let mut samples = Vec::with_capacity(inputs.len());
    for p in &inputs {
        let start = Instant::now();
        let out = solver.solve(p)?;
        samples.push(start.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(out);
    }
    TimingReport::from_samples(solver.tag(), samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::IdentitySolver;
    use crate::raster::Raster;

    #[test]
    fn identity_stub_is_fast() {
        let img = Raster::filled(8, 8, 3, 0.5);
        let puzzles: Vec<_> = (0..4)
            .map(|s| PuzzleInstance::from_image(&img, 2, 2, s, "c").unwrap())
            .collect();
        let t = time_solver(&puzzles, &IdentitySolver, 2).unwrap();
        assert_eq!(t.samples_ms.len(), 4);
        assert!(t.mean_ms < 1.0);
        assert!(matches!(
            time_solver(&puzzles[..1], &IdentitySolver, 0),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn format_matches_table_style() {
        let t = TimingReport::from_samples("x".into(), vec![24.06, 26.26]).unwrap();
        assert_eq!(t.formatted(), "25.16 ± 1.56");
    }
}
