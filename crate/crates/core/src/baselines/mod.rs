//! Reference solvers: an edge-compatibility greedy placer and a learned
//! matcher that works without a mental image.

mod greedy;
mod hung_perm;

pub use greedy::{
    best_buddies, boundary_dissimilarity, greedy_place, seed_piece, solve_greedy,
    CompatibilityTable, Relation,
};
pub use hung_perm::{
    solve_hung_perm, train_hung_perm, HungPermGrads, HungPermNet, HungPermOutcome,
    HUNG_PERM_MAGIC, HUNG_PERM_VERSION,
};
