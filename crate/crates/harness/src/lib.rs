//! Experiment orchestration and statistics.
