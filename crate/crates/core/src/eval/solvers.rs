use std::collections::BTreeMap;

use crate::baselines::{solve_greedy, solve_hung_perm, HungPermNet};
use crate::error::{Error, Result};
use crate::matcher::{solve_puzzle, Embedder, MentalImageProvider, SolveConfig};
use crate::puzzle::{Permutation, PuzzleInstance};

/// Anything that maps a puzzle to a slot assignment.
pub trait Solver: Sync {
    fn tag(&self) -> String;
    fn solve(&self, puzzle: &PuzzleInstance) -> Result<Permutation>;
}

pub struct MatcherSolver<P, E> {
    pub provider: P,
    pub embedder: E,
    pub config: SolveConfig,
}

impl<P: MentalImageProvider, E: Embedder> MatcherSolver<P, E> {
    pub fn new(provider: P, embedder: E, config: SolveConfig) -> Self {
        Self {
            provider,
            embedder,
            config,
        }
    }
}

impl<P: MentalImageProvider, E: Embedder> Solver for MatcherSolver<P, E> {
    fn tag(&self) -> String {
        format!("matcher[{}/{}]", self.provider.tag(), self.embedder.tag())
    }

    fn solve(&self, puzzle: &PuzzleInstance) -> Result<Permutation> {
        solve_puzzle(puzzle, &self.provider, &self.embedder, &self.config)
    }
}

impl<T: Solver + ?Sized> Solver for Box<T> {
    fn tag(&self) -> String {
        (**self).tag()
    }

    fn solve(&self, puzzle: &PuzzleInstance) -> Result<Permutation> {
        (**self).solve(puzzle)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct GreedySolver;

impl Solver for GreedySolver {
    fn tag(&self) -> String {
        "greedy".into()
    }

    fn solve(&self, puzzle: &PuzzleInstance) -> Result<Permutation> {
        solve_greedy(puzzle)
    }
}

/// One hung-perm model per grid size.
#[derive(Clone, Debug, Default)]
pub struct HungPermSolver {
    pub models: BTreeMap<(usize, usize), HungPermNet>,
    pub config: SolveConfig,
}

impl HungPermSolver {
    pub fn new(models: impl IntoIterator<Item = HungPermNet>, config: SolveConfig) -> Self {
        Self {
            models: models.into_iter().map(|m| ((m.rows, m.cols), m)).collect(),
            config,
        }
    }
}

impl Solver for HungPermSolver {
    fn tag(&self) -> String {
        "hung-perm".into()
    }

    fn solve(&self, puzzle: &PuzzleInstance) -> Result<Permutation> {
        let net = self.models.get(&(puzzle.rows(), puzzle.cols())).ok_or_else(|| {
            Error::SizeMismatch(format!(
                "no hung-perm model for {}x{} puzzles",
                puzzle.rows(),
                puzzle.cols()
            ))
        })?;
        solve_hung_perm(puzzle, net, &self.config)
    }
}

/// Returns the identity assignment; a lower bound for timing.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentitySolver;

impl Solver for IdentitySolver {
    fn tag(&self) -> String {
        "identity".into()
    }

    fn solve(&self, puzzle: &PuzzleInstance) -> Result<Permutation> {
        Ok(Permutation::identity(puzzle.len()))
    }
}
