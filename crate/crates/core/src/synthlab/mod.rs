//! Planted-margin problems, separability checks and mistake-bound checks.

pub mod bounds;
pub mod checks;
pub mod generators;

pub use bounds::{
    verify_bounds, BoundCheck, BoundKind, BoundLedger, BoundReport, Learner, LedgerRow, Quantity, VerifyOptions,
};
pub use checks::{
    check_loss_augmented, check_prank_margin, check_rank_separable, prank_grid_search, rank_grid_search,
    symmetric_grid, LossAugmentedReport, SeparabilityReport, Witness,
};
pub use generators::{
    generate_loss_augmented, generate_prank_separable, generate_rank_separable, Family, PlantedProblem, Separator,
};
