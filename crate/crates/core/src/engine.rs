//! The simulation core: maps a year event table through a portfolio's
//! layers to year loss tables, sequentially or in parallel over trials.
//!
//! Per trial and layer the loss is: for each event E, the combined loss
//! l_E sums apply_elt_terms over the layer's ELTs (in elt_refs order);
//! occurrence terms apply to each l_E; aggregate terms apply once to the
//! trial's sum of occurrence-net losses.
//!
//! The per-trial accumulation order is fixed as event order times
//! elt_refs order, so results are bitwise identical for any worker count
//! and chunk size at a given precision. Trials are partitioned into
//! static contiguous blocks, one thread each, writing disjoint output
//! slots; the compute path takes no locks.
//!
//! [`oracle_analyze`] is the brute-force reference: sequential, linear
//! scans of the ELT entry lists, clamps written out inline. It shares no
//! lookup code with the engine and exists to check it.

use std::collections::HashMap;
use std::fmt;
use std::time::Instant;

use crate::lookup::{build_layout, LayoutKind, LookupError, LossLookup};
use crate::model::{
    apply_aggregate_terms, apply_elt_terms, apply_occurrence_terms, AggregateTerms,
    EventLossTable, Layer, OccurrenceTerms, Portfolio, Trial, YearEventTable, YearLossTable,
    YltScope,
};
use crate::scalar::Scalar;
use crate::{Narrow, Wide};

/// Events staged per processing block by default.
pub const DEFAULT_CHUNK_SIZE: usize = 256;

/// Monetary precision of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Wide,
    Narrow,
}

impl Precision {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "wide" => Some(Self::Wide),
            "narrow" => Some(Self::Narrow),
            _ => None,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            Self::Wide => "wide",
            Self::Narrow => "narrow",
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Execution parameters of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    /// Parallel workers; 1 runs inline on the calling thread.
    pub workers: usize,
    /// Threads spawned per worker slot. Values above 1 deliberately
    /// oversubscribe cores for the oversubscription experiment.
    pub threads_per_worker_slot: usize,
    /// Events staged per processing block; a traversal detail that never
    /// changes results.
    pub chunk_size: usize,
    pub precision: Precision,
    /// Lookup structure the engine builds per layer.
    pub layout: LayoutKind,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            workers: 1,
            threads_per_worker_slot: 1,
            chunk_size: DEFAULT_CHUNK_SIZE,
            precision: Precision::Wide,
            layout: LayoutKind::Direct,
        }
    }
}

impl RunConfig {
    fn validate(&self) -> Result<(), EngineError> {
        if self.workers == 0 {
            return Err(EngineError::InvalidConfig("workers must be at least 1"));
        }
        if self.threads_per_worker_slot == 0 {
            return Err(EngineError::InvalidConfig(
                "threads_per_worker_slot must be at least 1",
            ));
        }
        if self.chunk_size == 0 {
            return Err(EngineError::InvalidConfig("chunk_size must be at least 1"));
        }
        Ok(())
    }
}

/// Wall-clock breakdown of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    /// Lookup construction time (file reading is the caller's business).
    pub load_seconds: f64,
    pub compute_seconds: f64,
    /// Event-layer visits per second of compute: total events times the
    /// number of layers, over compute_seconds.
    pub trial_events_per_sec: f64,
}

/// Output of one run: a loss table per layer plus the portfolio total
/// (per trial, the sum of that trial's layer losses). Narrow-precision
/// losses are widened exactly on the way out.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisResult {
    pub layer_ylts: Vec<YearLossTable<Wide>>,
    pub portfolio_ylt: YearLossTable<Wide>,
    pub timing: Timing,
}

/// Both precisions of the same run plus their elementwise distance.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionComparison {
    pub wide: AnalysisResult,
    pub narrow: AnalysisResult,
    /// Max over all layer and total losses of |wide - narrow| / |wide|,
    /// with absolute difference where |wide| < 1 monetary unit.
    pub max_relative_diff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EngineError {
    InvalidConfig(&'static str),
    DuplicateEltId { elt_id: u32 },
    UnresolvedEltRef { program_id: u32, layer_id: u32, elt_id: u32 },
    Lookup(LookupError),
    /// A worker died; the block index and its trial-id range identify the
    /// work that failed.
    WorkerPanic { block: usize, first_trial: u64, last_trial: u64, message: String },
}

impl fmt::Display for EngineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidConfig(msg) => write!(f, "invalid run config: {msg}"),
            Self::DuplicateEltId { elt_id } => {
                write!(f, "event loss table id {elt_id} appears more than once")
            }
            Self::UnresolvedEltRef { program_id, layer_id, elt_id } => write!(
                f,
                "program {program_id} layer {layer_id} references unknown elt {elt_id}"
            ),
            Self::Lookup(err) => write!(f, "lookup build failed: {err}"),
            Self::WorkerPanic { block, first_trial, last_trial, message } => write!(
                f,
                "worker for block {block} (trials {first_trial}..={last_trial}) panicked: {message}"
            ),
        }
    }
}

impl std::error::Error for EngineError {}

impl From<LookupError> for EngineError {
    fn from(err: LookupError) -> Self {
        Self::Lookup(err)
    }
}

/// One layer resolved for execution at precision S.
struct LayerCtx<S: Scalar> {
    program_id: u32,
    layer_id: u32,
    lookup: LossLookup<S>,
    occurrence: OccurrenceTerms<S>,
    aggregate: AggregateTerms<S>,
}

/// Loss of one trial under one layer, using the given lookup.
///
/// The lookup must have been built from exactly `layer.elt_refs` in order.
/// This is the reference entry point; [`run_analysis`] uses the same inner
/// routine with a reused staging buffer.
pub fn analyze_trial<S: Scalar>(trial: &Trial, layer: &Layer, lookup: &LossLookup<S>) -> S {
    let mut combined = Vec::new();
    analyze_trial_with(
        trial,
        lookup,
        &layer.occurrence.cast(),
        &layer.aggregate.cast(),
        DEFAULT_CHUNK_SIZE,
        &mut combined,
    )
}

/// Core per-trial loop: stage each chunk's combined event losses, then
/// apply occurrence terms and accumulate. The staging buffer is caller
/// scratch so the hot loop never allocates.
fn analyze_trial_with<S: Scalar>(
    trial: &Trial,
    lookup: &LossLookup<S>,
    occurrence: &OccurrenceTerms<S>,
    aggregate: &AggregateTerms<S>,
    chunk_size: usize,
    combined: &mut Vec<S>,
) -> S {
    let terms = lookup.terms();
    let num_elts = lookup.num_elts();
    let mut trial_sum = S::zero();
    for chunk in trial.events.chunks(chunk_size) {
        combined.clear();
        for ev in chunk {
            let mut event_loss = S::zero();
            for (j, elt_terms) in terms.iter().enumerate().take(num_elts) {
                event_loss = event_loss + apply_elt_terms(lookup.loss(ev.event, j), elt_terms);
            }
            combined.push(event_loss);
        }
        for &event_loss in combined.iter() {
            let net = apply_occurrence_terms(event_loss, occurrence);
            debug_assert!(net >= S::zero() && net <= occurrence.limit);
            trial_sum = trial_sum + net;
        }
    }
    let loss = apply_aggregate_terms(trial_sum, aggregate);
    debug_assert!(loss >= S::zero() && loss <= aggregate.limit);
    loss
}

/// Computes all layer and total losses for one contiguous trial block.
/// `outs` holds one output slice per layer plus the total slice last, all
/// of the block's length.
fn process_block<S: Scalar>(
    trials: &[Trial],
    layers: &[LayerCtx<S>],
    outs: &mut [&mut [S]],
    chunk_size: usize,
) {
    let mut combined: Vec<S> = Vec::new();
    for (i, trial) in trials.iter().enumerate() {
        let mut total = S::zero();
        for (l, ctx) in layers.iter().enumerate() {
            let loss = analyze_trial_with(
                trial,
                &ctx.lookup,
                &ctx.occurrence,
                &ctx.aggregate,
                chunk_size,
                &mut combined,
            );
            outs[l][i] = loss;
            total = total + loss;
        }
        outs[layers.len()][i] = total;
    }
}

fn resolve_layers<S: Scalar>(
    portfolio: &Portfolio,
    elts: &[EventLossTable],
    catalog_size: u32,
    layout: LayoutKind,
) -> Result<Vec<LayerCtx<S>>, EngineError> {
    let mut by_id: HashMap<u32, &EventLossTable> = HashMap::with_capacity(elts.len());
    for elt in elts {
        if by_id.insert(elt.elt_id, elt).is_some() {
            return Err(EngineError::DuplicateEltId { elt_id: elt.elt_id });
        }
    }
    let mut contexts = Vec::new();
    for (program_id, layer) in portfolio.layers() {
        let mut layer_elts = Vec::with_capacity(layer.elt_refs.len());
        for &elt_id in &layer.elt_refs {
            let elt = by_id.get(&elt_id).ok_or(EngineError::UnresolvedEltRef {
                program_id,
                layer_id: layer.layer_id,
                elt_id,
            })?;
            layer_elts.push(*elt);
        }
        let lookup = build_layout::<S>(&layer_elts, catalog_size, layout)?;
        contexts.push(LayerCtx {
            program_id,
            layer_id: layer.layer_id,
            lookup,
            occurrence: layer.occurrence.cast(),
            aggregate: layer.aggregate.cast(),
        });
    }
    Ok(contexts)
}

fn collect_result<S: Scalar>(
    yet: &YearEventTable,
    layers: &[LayerCtx<S>],
    bufs: Vec<Vec<S>>,
    load_seconds: f64,
    compute_seconds: f64,
) -> AnalysisResult {
    let ids: Vec<u64> = yet.trials.iter().map(|t| t.trial_id).collect();
    let table = |scope: YltScope, losses: &Vec<S>| YearLossTable::<S> {
        scope,
        losses: ids.iter().copied().zip(losses.iter().copied()).collect(),
    }
    .to_wide();

    let mut bufs = bufs;
    let total = bufs.pop().expect("total buffer");
    let layer_ylts: Vec<YearLossTable<Wide>> = layers
        .iter()
        .zip(bufs.iter())
        .map(|(ctx, losses)| {
            table(
                YltScope::Layer { program_id: ctx.program_id, layer_id: ctx.layer_id },
                losses,
            )
        })
        .collect();
    let portfolio_ylt = table(YltScope::PortfolioTotal, &total);

    let event_layer_visits = yet.total_events() as f64 * layers.len() as f64;
    let trial_events_per_sec =
        if compute_seconds > 0.0 { event_layer_visits / compute_seconds } else { 0.0 };
    AnalysisResult {
        layer_ylts,
        portfolio_ylt,
        timing: Timing { load_seconds, compute_seconds, trial_events_per_sec },
    }
}

fn run_typed<S: Scalar>(
    portfolio: &Portfolio,
    yet: &YearEventTable,
    elts: &[EventLossTable],
    config: &RunConfig,
) -> Result<AnalysisResult, EngineError> {
    let load_start = Instant::now();
    let layers = resolve_layers::<S>(portfolio, elts, yet.catalog_size, config.layout)?;
    let load_seconds = load_start.elapsed().as_secs_f64();

    let n = yet.trials.len();
    let num_threads = config.workers * config.threads_per_worker_slot;
    let mut bufs: Vec<Vec<S>> = vec![vec![S::zero(); n]; layers.len() + 1];

    let compute_start = Instant::now();
    if num_threads == 1 {
        let mut outs: Vec<&mut [S]> = bufs.iter_mut().map(|b| b.as_mut_slice()).collect();
        process_block(&yet.trials, &layers, &mut outs, config.chunk_size);
    } else {
        // Static contiguous partition; at most one block per trial.
        let block = n.div_ceil(num_threads).max(1);
        let num_blocks = n.div_ceil(block);
        let mut per_thread: Vec<Vec<&mut [S]>> =
            (0..num_blocks).map(|_| Vec::with_capacity(layers.len() + 1)).collect();
        for buf in bufs.iter_mut() {
            for (t, slot) in buf.chunks_mut(block).enumerate() {
                per_thread[t].push(slot);
            }
        }
        let layers_ref = &layers;
        let mut failure: Option<(usize, String)> = None;
        std::thread::scope(|scope| {
            let mut handles = Vec::with_capacity(num_blocks);
            for (t, mut outs) in per_thread.into_iter().enumerate() {
                let trials = &yet.trials[t * block..((t + 1) * block).min(n)];
                let chunk_size = config.chunk_size;
                handles.push(scope.spawn(move || {
                    process_block(trials, layers_ref, &mut outs, chunk_size);
                }));
            }
            for (t, handle) in handles.into_iter().enumerate() {
                if let Err(payload) = handle.join() {
                    let message = payload
                        .downcast_ref::<&str>()
                        .map(|s| s.to_string())
                        .or_else(|| payload.downcast_ref::<String>().cloned())
                        .unwrap_or_else(|| "unknown panic".to_string());
                    failure.get_or_insert((t, message));
                }
            }
        });
        if let Some((t, message)) = failure {
            let first = t * block;
            let last = ((t + 1) * block).min(n) - 1;
            return Err(EngineError::WorkerPanic {
                block: t,
                first_trial: yet.trials[first].trial_id,
                last_trial: yet.trials[last].trial_id,
                message,
            });
        }
    }
    let compute_seconds = compute_start.elapsed().as_secs_f64();
    Ok(collect_result(yet, &layers, bufs, load_seconds, compute_seconds))
}

/// Runs the full analysis under `config`.
///
/// The year event table is assumed valid (see
/// [`crate::model::validate_yet`]); callers own that check so they can
/// report violations properly.
pub fn run_analysis(
    portfolio: &Portfolio,
    yet: &YearEventTable,
    elts: &[EventLossTable],
    config: &RunConfig,
) -> Result<AnalysisResult, EngineError> {
    config.validate()?;
    match config.precision {
        Precision::Wide => run_typed::<Wide>(portfolio, yet, elts, config),
        Precision::Narrow => run_typed::<Narrow>(portfolio, yet, elts, config),
    }
}

/// Runs the same workload in both precisions with identical traversal
/// order and reports the guarded elementwise max relative difference.
pub fn run_precision_comparison(
    portfolio: &Portfolio,
    yet: &YearEventTable,
    elts: &[EventLossTable],
    config: &RunConfig,
) -> Result<PrecisionComparison, EngineError> {
    config.validate()?;
    let wide = run_typed::<Wide>(portfolio, yet, elts, config)?;
    let narrow = run_typed::<Narrow>(portfolio, yet, elts, config)?;
    let mut max_relative_diff = 0.0f64;
    let tables = |result: &AnalysisResult| {
        let mut all: Vec<YearLossTable<Wide>> = result.layer_ylts.clone();
        all.push(result.portfolio_ylt.clone());
        all
    };
    for (w_table, n_table) in tables(&wide).iter().zip(tables(&narrow).iter()) {
        for (&(_, w), &(_, n)) in w_table.losses.iter().zip(n_table.losses.iter()) {
            max_relative_diff = max_relative_diff.max(guarded_diff(w, n));
        }
    }
    Ok(PrecisionComparison { wide, narrow, max_relative_diff })
}

/// |wide - narrow| relative to |wide|, absolute where |wide| < 1.
fn guarded_diff(wide: f64, narrow: f64) -> f64 {
    let diff = (wide - narrow).abs();
    if wide.abs() < 1.0 {
        diff
    } else {
        diff / wide.abs()
    }
}

/// Brute-force reference implementation: sequential, no lookup tables, no
/// chunking. Every clamp is written out inline and event losses come from
/// a bounded forward scan of the sorted entry list, so none of the
/// engine's machinery is exercised here.
pub fn oracle_analyze(
    portfolio: &Portfolio,
    yet: &YearEventTable,
    elts: &[EventLossTable],
) -> Result<AnalysisResult, EngineError> {
    oracle_typed::<Wide>(portfolio, yet, elts)
}

fn oracle_typed<S: Scalar>(
    portfolio: &Portfolio,
    yet: &YearEventTable,
    elts: &[EventLossTable],
) -> Result<AnalysisResult, EngineError> {
    struct OracleLayer<'a, S: Scalar> {
        program_id: u32,
        layer_id: u32,
        elts: Vec<(&'a EventLossTable, S, S)>,
        occ_retention: S,
        occ_limit: S,
        agg_retention: S,
        agg_limit: S,
    }

    let load_start = Instant::now();
    let mut by_id: HashMap<u32, &EventLossTable> = HashMap::with_capacity(elts.len());
    for elt in elts {
        if by_id.insert(elt.elt_id, elt).is_some() {
            return Err(EngineError::DuplicateEltId { elt_id: elt.elt_id });
        }
    }
    let mut layers: Vec<OracleLayer<'_, S>> = Vec::new();
    for (program_id, layer) in portfolio.layers() {
        let mut layer_elts = Vec::with_capacity(layer.elt_refs.len());
        for &elt_id in &layer.elt_refs {
            let elt = *by_id.get(&elt_id).ok_or(EngineError::UnresolvedEltRef {
                program_id,
                layer_id: layer.layer_id,
                elt_id,
            })?;
            layer_elts.push((
                elt,
                S::from_wide(elt.terms.retention),
                S::from_wide(elt.terms.limit),
            ));
        }
        layers.push(OracleLayer {
            program_id,
            layer_id: layer.layer_id,
            elts: layer_elts,
            occ_retention: S::from_wide(layer.occurrence.retention),
            occ_limit: S::from_wide(layer.occurrence.limit),
            agg_retention: S::from_wide(layer.aggregate.retention),
            agg_limit: S::from_wide(layer.aggregate.limit),
        });
    }
    let load_seconds = load_start.elapsed().as_secs_f64();

    let compute_start = Instant::now();
    let n = yet.trials.len();
    let mut bufs: Vec<Vec<S>> = vec![vec![S::zero(); n]; layers.len() + 1];
    for (i, trial) in yet.trials.iter().enumerate() {
        let mut total = S::zero();
        for (l, layer) in layers.iter().enumerate() {
            let mut trial_sum = S::zero();
            for ev in &trial.events {
                let mut event_loss = S::zero();
                for &(elt, retention, limit) in &layer.elts {
                    let mut raw = S::zero();
                    for &(id, loss) in elt.entries() {
                        if id.0 >= ev.event.0 {
                            if id == ev.event {
                                raw = S::from_wide(loss);
                            }
                            break;
                        }
                    }
                    let mut net = raw - retention;
                    if net < S::zero() {
                        net = S::zero();
                    }
                    if net > limit {
                        net = limit;
                    }
                    event_loss = event_loss + net;
                }
                let mut net = event_loss - layer.occ_retention;
                if net < S::zero() {
                    net = S::zero();
                }
                if net > layer.occ_limit {
                    net = layer.occ_limit;
                }
                trial_sum = trial_sum + net;
            }
            let mut loss = trial_sum - layer.agg_retention;
            if loss < S::zero() {
                loss = S::zero();
            }
            if loss > layer.agg_limit {
                loss = layer.agg_limit;
            }
            bufs[l][i] = loss;
            total = total + loss;
        }
        bufs[layers.len()][i] = total;
    }
    let compute_seconds = compute_start.elapsed().as_secs_f64();

    let contexts: Vec<(u32, u32)> =
        layers.iter().map(|l| (l.program_id, l.layer_id)).collect();
    let ids: Vec<u64> = yet.trials.iter().map(|t| t.trial_id).collect();
    let total = bufs.pop().expect("total buffer");
    let to_table = |scope: YltScope, losses: &Vec<S>| YearLossTable::<S> {
        scope,
        losses: ids.iter().copied().zip(losses.iter().copied()).collect(),
    }
    .to_wide();
    let layer_ylts = contexts
        .iter()
        .zip(bufs.iter())
        .map(|(&(program_id, layer_id), losses)| {
            to_table(YltScope::Layer { program_id, layer_id }, losses)
        })
        .collect();
    let portfolio_ylt = to_table(YltScope::PortfolioTotal, &total);
    let event_layer_visits = yet.total_events() as f64 * contexts.len() as f64;
    let trial_events_per_sec =
        if compute_seconds > 0.0 { event_layer_visits / compute_seconds } else { 0.0 };
    Ok(AnalysisResult {
        layer_ylts,
        portfolio_ylt,
        timing: Timing { load_seconds, compute_seconds, trial_events_per_sec },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_portfolio, generate_yet, GenSpec};
    use crate::model::{EltTerms, EventId, TrialEvent};
    use proptest::prelude::*;

    fn worked_example() -> (Portfolio, YearEventTable, Vec<EventLossTable>) {
        let elt1 = EventLossTable::new(
            1,
            vec![(EventId(1), 100.0)],
            EltTerms::new(10.0, 1000.0).unwrap(),
        )
        .unwrap();
        let elt2 = EventLossTable::new(
            2,
            vec![(EventId(2), 200.0)],
            EltTerms::new(0.0, 150.0).unwrap(),
        )
        .unwrap();
        let layer = Layer::new(
            1,
            vec![1, 2],
            OccurrenceTerms::new(20.0, 120.0).unwrap(),
            AggregateTerms::new(50.0, 200.0).unwrap(),
        )
        .unwrap();
        let portfolio =
            Portfolio::new(1, vec![crate::model::Program::new(1, vec![layer]).unwrap()]).unwrap();
        let yet = YearEventTable::new(
            vec![Trial {
                trial_id: 1,
                events: vec![
                    TrialEvent { event: EventId(1), timestamp: 0.1 },
                    TrialEvent { event: EventId(2), timestamp: 0.6 },
                ],
            }],
            10,
        )
        .unwrap();
        (portfolio, yet, vec![elt1, elt2])
    }

    #[test]
    fn worked_example_is_140_everywhere() {
        let (portfolio, yet, elts) = worked_example();
        let layer = &portfolio.programs[0].layers[0];
        for kind in LayoutKind::ALL {
            let refs: Vec<&EventLossTable> = elts.iter().collect();
            let lookup = build_layout::<Wide>(&refs, yet.catalog_size, kind).unwrap();
            assert_eq!(analyze_trial(&yet.trials[0], layer, &lookup), 140.0, "{kind}");
        }
        let result = run_analysis(&portfolio, &yet, &elts, &RunConfig::default()).unwrap();
        assert_eq!(result.portfolio_ylt.losses, vec![(1, 140.0)]);
        assert_eq!(result.layer_ylts[0].losses, vec![(1, 140.0)]);
        assert_eq!(
            result.layer_ylts[0].scope,
            YltScope::Layer { program_id: 1, layer_id: 1 }
        );
        let oracle = oracle_analyze(&portfolio, &yet, &elts).unwrap();
        assert_eq!(oracle.portfolio_ylt.losses, vec![(1, 140.0)]);
    }

    #[test]
    fn unmatched_events_contribute_zero() {
        let (portfolio, mut yet, elts) = worked_example();
        yet.trials[0].events = vec![TrialEvent { event: EventId(9), timestamp: 0.5 }];
        let result = run_analysis(&portfolio, &yet, &elts, &RunConfig::default()).unwrap();
        assert_eq!(result.portfolio_ylt.losses, vec![(1, 0.0)]);
    }

    #[test]
    fn identity_terms_collapse_to_a_sum() {
        let elt = EventLossTable::new(
            1,
            vec![(EventId(1), 25.0), (EventId(2), 75.0), (EventId(3), 10.0)],
            EltTerms::identity(),
        )
        .unwrap();
        let layer = Layer::new(
            1,
            vec![1],
            OccurrenceTerms::identity(),
            AggregateTerms::identity(),
        )
        .unwrap();
        let portfolio =
            Portfolio::new(1, vec![crate::model::Program::new(1, vec![layer]).unwrap()]).unwrap();
        let yet = YearEventTable::new(
            vec![Trial {
                trial_id: 1,
                events: vec![
                    TrialEvent { event: EventId(2), timestamp: 0.1 },
                    TrialEvent { event: EventId(3), timestamp: 0.2 },
                    TrialEvent { event: EventId(2), timestamp: 0.9 },
                ],
            }],
            5,
        )
        .unwrap();
        let result = run_analysis(&portfolio, &yet, &[elt], &RunConfig::default()).unwrap();
        assert_eq!(result.portfolio_ylt.losses, vec![(1, 75.0 + 10.0 + 75.0)]);
    }

    fn desk_instance() -> (Portfolio, YearEventTable, Vec<EventLossTable>) {
        let spec = GenSpec::new(7, 200, (5, 15), 2000, 100);
        let yet = generate_yet(&spec).unwrap();
        let (portfolio, elts) = generate_portfolio(&spec, 2, 1, 3).unwrap();
        (portfolio, yet, elts)
    }

    fn exact_bits(a: &AnalysisResult, b: &AnalysisResult) {
        assert_eq!(a.layer_ylts.len(), b.layer_ylts.len());
        let pairs = a
            .layer_ylts
            .iter()
            .zip(b.layer_ylts.iter())
            .chain(std::iter::once((&a.portfolio_ylt, &b.portfolio_ylt)));
        for (x, y) in pairs {
            assert_eq!(x.scope, y.scope);
            assert_eq!(x.losses.len(), y.losses.len());
            for (&(t1, l1), &(t2, l2)) in x.losses.iter().zip(y.losses.iter()) {
                assert_eq!(t1, t2);
                assert_eq!(l1.to_bits(), l2.to_bits(), "trial {t1} in {}", x.scope);
            }
        }
    }

    #[test]
    fn engine_matches_oracle_exactly_on_generated_data() {
        let (portfolio, yet, elts) = desk_instance();
        let oracle = oracle_analyze(&portfolio, &yet, &elts).unwrap();
        for kind in LayoutKind::ALL {
            let config = RunConfig { layout: kind, workers: 3, ..RunConfig::default() };
            let result = run_analysis(&portfolio, &yet, &elts, &config).unwrap();
            exact_bits(&result, &oracle);
        }
    }

    #[test]
    fn losses_respect_layer_bounds() {
        let (portfolio, yet, elts) = desk_instance();
        let result = run_analysis(&portfolio, &yet, &elts, &RunConfig::default()).unwrap();
        for (ylt, (_, layer)) in result.layer_ylts.iter().zip(portfolio.layers()) {
            for &(_, loss) in &ylt.losses {
                assert!(loss >= 0.0 && loss <= layer.aggregate.limit);
            }
        }
        for (i, &(_, total)) in result.portfolio_ylt.losses.iter().enumerate() {
            let sum: f64 = result.layer_ylts.iter().map(|ylt| ylt.losses[i].1).sum();
            assert_eq!(total, sum);
        }
    }

    #[test]
    fn unresolved_elt_ref_is_reported() {
        let (portfolio, yet, mut elts) = worked_example();
        elts.pop();
        assert_eq!(
            run_analysis(&portfolio, &yet, &elts, &RunConfig::default()).unwrap_err(),
            EngineError::UnresolvedEltRef { program_id: 1, layer_id: 1, elt_id: 2 }
        );
    }

    #[test]
    fn duplicate_elt_ids_are_reported() {
        let (portfolio, yet, mut elts) = worked_example();
        let dup = elts[0].clone();
        elts.push(dup);
        assert_eq!(
            run_analysis(&portfolio, &yet, &elts, &RunConfig::default()).unwrap_err(),
            EngineError::DuplicateEltId { elt_id: 1 }
        );
    }

    #[test]
    fn bad_config_is_rejected() {
        let (portfolio, yet, elts) = worked_example();
        for config in [
            RunConfig { workers: 0, ..RunConfig::default() },
            RunConfig { chunk_size: 0, ..RunConfig::default() },
            RunConfig { threads_per_worker_slot: 0, ..RunConfig::default() },
        ] {
            assert!(matches!(
                run_analysis(&portfolio, &yet, &elts, &config),
                Err(EngineError::InvalidConfig(_))
            ));
        }
    }

    #[test]
    fn worker_panic_names_the_trial_block() {
        // Event id beyond the catalog the lookup was built for; the dense
        // layout panics in the worker.
        let (portfolio, mut yet, elts) = worked_example();
        yet.trials[0].events[0].event = EventId(5000);
        let config = RunConfig { workers: 2, ..RunConfig::default() };
        match run_analysis(&portfolio, &yet, &elts, &config) {
            Err(EngineError::WorkerPanic { block, first_trial, last_trial, .. }) => {
                assert_eq!(block, 0);
                assert_eq!(first_trial, 1);
                assert_eq!(last_trial, 1);
            }
            other => panic!("expected worker panic, got {other:?}"),
        }
    }

    #[test]
    fn zero_loss_workload_has_zero_precision_diff() {
        let (portfolio, mut yet, elts) = worked_example();
        yet.trials[0].events = vec![TrialEvent { event: EventId(7), timestamp: 0.3 }];
        let cmp =
            run_precision_comparison(&portfolio, &yet, &elts, &RunConfig::default()).unwrap();
        assert_eq!(cmp.max_relative_diff, 0.0);
        assert_eq!(cmp.narrow.portfolio_ylt.losses, vec![(1, 0.0)]);
    }

    #[test]
    fn narrow_run_matches_narrow_summed_oracle() {
        let (portfolio, yet, elts) = desk_instance();
        let config = RunConfig { precision: Precision::Narrow, ..RunConfig::default() };
        let narrow = run_analysis(&portfolio, &yet, &elts, &config).unwrap();
        let oracle = oracle_typed::<Narrow>(&portfolio, &yet, &elts).unwrap();
        exact_bits(&narrow, &oracle);
    }

    #[test]
    fn precision_diff_is_small_but_measured() {
        let (portfolio, yet, elts) = desk_instance();
        let cmp =
            run_precision_comparison(&portfolio, &yet, &elts, &RunConfig::default()).unwrap();
        assert!(cmp.max_relative_diff < 1e-3, "diff {}", cmp.max_relative_diff);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        /// Worker count, oversubscription, chunk size, and layout are all
        /// traversal details: the YLTs never change by a single bit.
        #[test]
        fn traversal_details_never_change_results(
            workers in 1usize..9,
            slots in 1usize..4,
            chunk in prop_oneof![Just(1usize), Just(3), Just(64), Just(1024)],
            kind in proptest::sample::select(&LayoutKind::ALL[..]),
        ) {
            let (portfolio, yet, elts) = desk_instance();
            let baseline =
                run_analysis(&portfolio, &yet, &elts, &RunConfig::default()).unwrap();
            let config = RunConfig {
                workers,
                threads_per_worker_slot: slots,
                chunk_size: chunk,
                precision: Precision::Wide,
                layout: kind,
            };
            let result = run_analysis(&portfolio, &yet, &elts, &config).unwrap();
            prop_assert_eq!(&result.layer_ylts, &baseline.layer_ylts);
            prop_assert_eq!(&result.portfolio_ylt, &baseline.portfolio_ylt);
        }

        /// Scaling every stored loss up never lowers any trial loss.
        #[test]
        fn loss_scaling_is_monotone(scale in 1.0f64..4.0) {
            let spec = GenSpec::new(11, 60, (3, 10), 500, 60);
            let yet = generate_yet(&spec).unwrap();
            let (portfolio, elts) = generate_portfolio(&spec, 1, 1, 2).unwrap();
            let scaled: Vec<EventLossTable> = elts
                .iter()
                .map(|elt| {
                    let entries =
                        elt.entries().iter().map(|&(id, l)| (id, l * scale)).collect();
                    EventLossTable::new(elt.elt_id, entries, elt.terms).unwrap()
                })
                .collect();
            let base =
                run_analysis(&portfolio, &yet, &elts, &RunConfig::default()).unwrap();
            let up =
                run_analysis(&portfolio, &yet, &scaled, &RunConfig::default()).unwrap();
            for (&(_, a), &(_, b)) in base
                .portfolio_ylt
                .losses
                .iter()
                .zip(up.portfolio_ylt.losses.iter())
            {
                prop_assert!(b >= a, "scaled loss {b} below base {a}");
            }
        }
    }
}
