//! Aggregate risk analysis: a trial-parallel portfolio loss simulation.
//!
//! The pipeline maps a year event table (simulated years of event
//! occurrences) through event loss tables and three levels of financial
//! terms to year loss tables, then derives risk metrics from those losses:
//!
//! 1. [`datagen`] produces seeded synthetic inputs at realistic shapes.
//! 2. [`io`] moves them through files: a binary year event table format
//!    and CSV/TOML for the small data.
//! 3. [`lookup`] builds the per-layer event-loss lookup structures.
//! 4. [`engine`] runs the simulation over trials, in parallel, against a
//!    brute-force oracle that shares none of its lookup code.
//! 5. [`metrics`] turns year loss tables into exceedance curves, PML,
//!    VaR/TVaR, and return-period reports.
//! 6. [`bench`] measures scaling, oversubscription, layout, and chunking
//!    behaviour with checksummed results.
//!
//! All loss arithmetic is generic over [`Scalar`]; [`Wide`] (f64) is the
//! default precision and [`Narrow`] (f32) exists for the precision
//! experiment.

// Validation uses `!(x > 0.0)` instead of `x <= 0.0` so that NaN fails the
// check rather than slipping through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod datagen;
pub mod engine;
pub mod io;
pub mod lookup;
pub mod metrics;
pub mod model;
pub mod scalar;

pub use scalar::Scalar;

/// Default monetary precision (f64).
pub type Wide = f64;
/// Reduced monetary precision (f32) for the precision experiment.
pub type Narrow = f32;

pub use bench::{
    bench_chunk_sweep, bench_dense_lookup_latency, bench_layouts, bench_oversubscription,
    bench_scaling, result_checksum, BenchError, BenchReport, BenchRow, LatencyPoint, MachineInfo,
    Workload,
};
pub use datagen::{generate_elt, generate_portfolio, generate_yet, GenError, GenSpec, TermRange};
pub use engine::{
    analyze_trial, oracle_analyze, run_analysis, run_precision_comparison, AnalysisResult,
    EngineError, Precision, PrecisionComparison, RunConfig, Timing,
};
pub use lookup::{build_layout, LayoutKind, LossLookup};
pub use metrics::{exceedance_curve, pml, rpl_report, tvar, var, EpCurve, MetricsError};
pub use model::{
    apply_aggregate_terms, apply_elt_terms, apply_occurrence_terms, validate_yet, AggregateTerms,
    EltTerms, EventId, EventLossTable, Layer, ModelError, OccurrenceTerms, Portfolio, Program,
    Trial, TrialEvent, Violation, YearEventTable, YearLossTable, YltScope,
};
