//! Campaign harness: scenario files, seeded instance generation, and the
//! drivers behind the CLI subcommands.

pub mod campaigns;
pub mod gen;
pub mod scenario;

pub use campaigns::{
    counters_csv, feasibility_check, loglog_slope, oracle_outcome, run_equivalence, run_game,
    run_overhead, run_single, run_truthfulness, secrecy_scan, EquivalenceReport, GameReport,
    OverheadReport, RunArtifacts, TruthfulnessReport,
};
pub use scenario::{parse_ratio, ratio_str, ScenarioSpec};
