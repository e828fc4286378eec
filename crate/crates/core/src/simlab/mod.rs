//! Simulation engine: design grid, data generation, replication and metrics.

mod grid;
mod metrics;
mod run;

pub use grid::{
    expand_grid, split_arms, study_sizes, unequal_set, GridConfig, SimCell, SizePattern, DELTAS,
    EQUAL_NS, KS, QS, TAU2S, UNEQUAL_NBARS,
};
pub use metrics::{bias, coverage, mse, mse_ratio, proportion, Metric};
pub use run::{run_cell, run_cells, simulate_input, summarize, CellReport, MetricRow, Replicate};
