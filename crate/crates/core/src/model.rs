//! Domain types and the pure financial-term transformations the simulation
//! composes.
//!
//! The data model is a tree: a [`Portfolio`] groups [`Program`]s, each
//! program covers [`Layer`]s, and each layer references a set of
//! [`EventLossTable`]s under occurrence and aggregate terms. The large
//! input is the [`YearEventTable`], whose rows ([`Trial`]) are time-ordered
//! event sequences for one simulated year. The output is a
//! [`YearLossTable`]: one loss per trial.
//!
//! All types are immutable after construction and safe to share read-only
//! across workers. The term applications are pure functions.

use std::fmt;

use crate::scalar::Scalar;
use crate::Wide;

/// Maximum number of programs in a portfolio.
pub const MAX_PROGRAMS: usize = 10;
/// Maximum number of ELT references in a layer.
pub const MAX_ELTS_PER_LAYER: usize = 30;

/// Identifier of a catastrophic event, valid in `[1, catalog_size]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(pub u32);

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One event occurrence inside a trial: which event, and when in the year.
///
/// Timestamps are fractional years stored at f32 precision; they order the
/// sequence but never enter loss arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialEvent {
    pub event: EventId,
    pub timestamp: f32,
}

/// One simulated year: a non-empty event sequence ordered by timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub trial_id: u64,
    pub events: Vec<TrialEvent>,
}

/// The large simulation input: one trial per alternate view of a year.
#[derive(Debug, Clone, PartialEq)]
pub struct YearEventTable {
    pub trials: Vec<Trial>,
    /// Largest valid event id; every `EventId` must be in `[1, catalog_size]`.
    pub catalog_size: u32,
}

impl YearEventTable {
    pub fn new(trials: Vec<Trial>, catalog_size: u32) -> Result<Self, ModelError> {
        if trials.is_empty() {
            return Err(ModelError::EmptyTable("year event table"));
        }
        if catalog_size == 0 {
            return Err(ModelError::ZeroCatalog);
        }
        Ok(Self { trials, catalog_size })
    }

    /// Total number of event occurrences across all trials.
    pub fn total_events(&self) -> u64 {
        self.trials.iter().map(|t| t.events.len() as u64).sum()
    }
}

/// Retention/limit pair applied per event-loss before accumulation (FT1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EltTerms<S: Scalar = Wide> {
    pub retention: S,
    pub limit: S,
}

/// Retention/limit pair applied to each event's combined loss (FT2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccurrenceTerms<S: Scalar = Wide> {
    pub retention: S,
    pub limit: S,
}

/// Retention/limit pair applied to a trial's cumulative loss (FT3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateTerms<S: Scalar = Wide> {
    pub retention: S,
    pub limit: S,
}

macro_rules! impl_terms {
    ($name:ident) => {
        impl<S: Scalar> $name<S> {
            /// Validates `retention >= 0` and `limit > 0` (`+inf` allowed).
            pub fn new(retention: S, limit: S) -> Result<Self, ModelError> {
                if !(retention >= S::zero()) || retention.is_infinite() {
                    return Err(ModelError::NegativeRetention);
                }
                if !(limit > S::zero()) {
                    return Err(ModelError::NonPositiveLimit);
                }
                Ok(Self { retention, limit })
            }

            /// Identity terms: zero retention, unlimited cover.
            pub fn identity() -> Self {
                Self { retention: S::zero(), limit: S::infinity() }
            }

            /// Converts the terms to another scalar precision.
            pub fn cast<T: Scalar>(&self) -> $name<T> {
                $name {
                    retention: T::from_wide(self.retention.to_wide()),
                    limit: T::from_wide(self.limit.to_wide()),
                }
            }
        }
    };
}

impl_terms!(EltTerms);
impl_terms!(OccurrenceTerms);
impl_terms!(AggregateTerms);

/// Event-id to loss dictionary for one exposure set, with its FT1 terms.
///
/// Entries are kept sorted by event id; zero-loss events are absent by
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLossTable {
    pub elt_id: u32,
    entries: Vec<(EventId, Wide)>,
    pub terms: EltTerms,
}

impl EventLossTable {
    /// Builds a table from `(event, loss)` pairs. Sorts by event id and
    /// rejects duplicates, zero ids, and non-positive losses.
    pub fn new(
        elt_id: u32,
        mut entries: Vec<(EventId, Wide)>,
        terms: EltTerms,
    ) -> Result<Self, ModelError> {
        entries.sort_by_key(|(event, _)| *event);
        for window in entries.windows(2) {
            if window[0].0 == window[1].0 {
                return Err(ModelError::DuplicateEvent { elt_id, event: window[0].0 });
            }
        }
        for &(event, loss) in &entries {
            if event.0 == 0 {
                return Err(ModelError::ZeroEventId { elt_id });
            }
            if !(loss > 0.0) {
                return Err(ModelError::NonPositiveLoss { elt_id, event });
            }
        }
        Ok(Self { elt_id, entries, terms })
    }

    /// Sorted `(event, loss)` pairs.
    pub fn entries(&self) -> &[(EventId, Wide)] {
        &self.entries
    }

    /// Largest event id present, 0 for an empty table.
    pub fn max_event_id(&self) -> u32 {
        self.entries.last().map_or(0, |(event, _)| event.0)
    }
}

/// A reinsurance contract slice: ELT references plus FT2/FT3 terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub layer_id: u32,
    pub elt_refs: Vec<u32>,
    pub occurrence: OccurrenceTerms,
    pub aggregate: AggregateTerms,
}

impl Layer {
    pub fn new(
        layer_id: u32,
        elt_refs: Vec<u32>,
        occurrence: OccurrenceTerms,
        aggregate: AggregateTerms,
    ) -> Result<Self, ModelError> {
        if elt_refs.is_empty() || elt_refs.len() > MAX_ELTS_PER_LAYER {
            return Err(ModelError::EltRefCount { layer_id, count: elt_refs.len() });
        }
        let mut seen = elt_refs.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(ModelError::DuplicateEltRef { layer_id });
        }
        Ok(Self { layer_id, elt_refs, occurrence, aggregate })
    }
}

/// A group of layers under one program id.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub program_id: u32,
    pub layers: Vec<Layer>,
}

impl Program {
    pub fn new(program_id: u32, layers: Vec<Layer>) -> Result<Self, ModelError> {
        if layers.is_empty() {
            return Err(ModelError::EmptyTable("program"));
        }
        if has_duplicate_ids(layers.iter().map(|l| l.layer_id)) {
            return Err(ModelError::DuplicateChildId { parent: "program", id: program_id });
        }
        Ok(Self { program_id, layers })
    }
}

/// The metadata root: 1 to 10 programs.
#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    pub portfolio_id: u32,
    pub programs: Vec<Program>,
}

impl Portfolio {
    pub fn new(portfolio_id: u32, programs: Vec<Program>) -> Result<Self, ModelError> {
        if programs.is_empty() || programs.len() > MAX_PROGRAMS {
            return Err(ModelError::ProgramCount { count: programs.len() });
        }
        if has_duplicate_ids(programs.iter().map(|p| p.program_id)) {
            return Err(ModelError::DuplicateChildId { parent: "portfolio", id: portfolio_id });
        }
        Ok(Self { portfolio_id, programs })
    }

    /// Layers in traversal order, each with its owning program id.
    pub fn layers(&self) -> impl Iterator<Item = (u32, &Layer)> {
        self.programs
            .iter()
            .flat_map(|p| p.layers.iter().map(move |l| (p.program_id, l)))
    }
}

fn has_duplicate_ids(ids: impl Iterator<Item = u32>) -> bool {
    let mut collected: Vec<u32> = ids.collect();
    collected.sort_unstable();
    collected.windows(2).any(|w| w[0] == w[1])
}

/// Which slice of the portfolio a [`YearLossTable`] covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YltScope {
    Layer { program_id: u32, layer_id: u32 },
    PortfolioTotal,
}

impl fmt::Display for YltScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            YltScope::Layer { program_id, layer_id } => {
                write!(f, "program-{program_id}/layer-{layer_id}")
            }
            YltScope::PortfolioTotal => write!(f, "portfolio-total"),
        }
    }
}

/// Per-trial loss output; the substrate for every risk metric.
#[derive(Debug, Clone, PartialEq)]
pub struct YearLossTable<S: Scalar = Wide> {
    pub scope: YltScope,
    /// `(trial_id, loss)` in source trial order, one entry per trial.
    pub losses: Vec<(u64, S)>,
}

impl<S: Scalar> YearLossTable<S> {
    /// Widens the table to f64 losses. Exact for f32 inputs.
    pub fn to_wide(&self) -> YearLossTable<Wide> {
        YearLossTable {
            scope: self.scope,
            losses: self.losses.iter().map(|&(t, l)| (t, l.to_wide())).collect(),
        }
    }

    pub fn loss_values(&self) -> impl Iterator<Item = S> + '_ {
        self.losses.iter().map(|&(_, l)| l)
    }
}

/// Construction-time invariant failures of the domain types.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    EmptyTable(&'static str),
    ZeroCatalog,
    NegativeRetention,
    NonPositiveLimit,
    DuplicateEvent { elt_id: u32, event: EventId },
    ZeroEventId { elt_id: u32 },
    NonPositiveLoss { elt_id: u32, event: EventId },
    EltRefCount { layer_id: u32, count: usize },
    DuplicateEltRef { layer_id: u32 },
    ProgramCount { count: usize },
    DuplicateChildId { parent: &'static str, id: u32 },
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyTable(what) => write!(f, "{what} must not be empty"),
            Self::ZeroCatalog => write!(f, "catalog size must be at least 1"),
            Self::NegativeRetention => write!(f, "retention must be finite and non-negative"),
            Self::NonPositiveLimit => write!(f, "limit must be positive"),
            Self::DuplicateEvent { elt_id, event } => {
                write!(f, "elt {elt_id}: duplicate event id {event}")
            }
            Self::ZeroEventId { elt_id } => write!(f, "elt {elt_id}: event id 0 is invalid"),
            Self::NonPositiveLoss { elt_id, event } => {
                write!(f, "elt {elt_id}: event {event} has non-positive loss")
            }
            Self::EltRefCount { layer_id, count } => write!(
                f,
                "layer {layer_id}: {count} elt refs outside [1, {MAX_ELTS_PER_LAYER}]"
            ),
            Self::DuplicateEltRef { layer_id } => {
                write!(f, "layer {layer_id}: duplicate elt reference")
            }
            Self::ProgramCount { count } => {
                write!(f, "portfolio has {count} programs, outside [1, {MAX_PROGRAMS}]")
            }
            Self::DuplicateChildId { parent, id } => {
                write!(f, "{parent} {id}: duplicate child id")
            }
        }
    }
}

impl std::error::Error for ModelError {}

// ---------------------------------------------------------------------------
// Financial term application
// ---------------------------------------------------------------------------

#[inline]
fn excess_of_loss<S: Scalar>(loss: S, retention: S, limit: S) -> S {
    (loss - retention).max(S::zero()).min(limit)
}

/// Applies per-event-loss terms FT1: `min(max(loss - retention, 0), limit)`.
#[inline]
pub fn apply_elt_terms<S: Scalar>(raw_loss: S, terms: &EltTerms<S>) -> S {
    excess_of_loss(raw_loss, terms.retention, terms.limit)
}

/// Applies occurrence terms FT2 to one event's combined loss.
#[inline]
pub fn apply_occurrence_terms<S: Scalar>(event_loss: S, terms: &OccurrenceTerms<S>) -> S {
    excess_of_loss(event_loss, terms.retention, terms.limit)
}

/// Applies aggregate terms FT3 to a trial's cumulative occurrence-net loss.
#[inline]
pub fn apply_aggregate_terms<S: Scalar>(trial_sum: S, terms: &AggregateTerms<S>) -> S {
    excess_of_loss(trial_sum, terms.retention, terms.limit)
}

// ---------------------------------------------------------------------------
// Year event table validation
// ---------------------------------------------------------------------------

/// A single invariant failure found by [`validate_yet`]. Violations are
/// data, not errors: validation itself always succeeds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyTrial { trial_id: u64 },
    OutOfOrder { trial_id: u64, position: usize },
    IdRange { trial_id: u64, event_id: u32 },
    NonContiguousTrialId { position: usize, expected: u64, found: u64 },
}

impl Violation {
    pub fn trial_id(&self) -> u64 {
        match *self {
            Self::EmptyTrial { trial_id }
            | Self::OutOfOrder { trial_id, .. }
            | Self::IdRange { trial_id, .. } => trial_id,
            Self::NonContiguousTrialId { found, .. } => found,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyTrial { trial_id } => write!(f, "trial {trial_id}: no events"),
            Self::OutOfOrder { trial_id, position } => {
                write!(f, "trial {trial_id}: timestamps out of order at event {position}")
            }
            Self::IdRange { trial_id, event_id } => {
                write!(f, "trial {trial_id}: event id {event_id} outside catalog")
            }
            Self::NonContiguousTrialId { position, expected, found } => write!(
                f,
                "trial at position {position}: id {found}, expected contiguous id {expected}"
            ),
        }
    }
}

/// Checks every trial for the ordering, id-range, and trial-id invariants.
/// Returns an empty list iff the table is well formed.
pub fn validate_yet(yet: &YearEventTable) -> Vec<Violation> {
    let mut violations = Vec::new();
    for (position, trial) in yet.trials.iter().enumerate() {
        let expected = position as u64 + 1;
        if trial.trial_id != expected {
            violations.push(Violation::NonContiguousTrialId {
                position,
                expected,
                found: trial.trial_id,
            });
        }
        if trial.events.is_empty() {
            violations.push(Violation::EmptyTrial { trial_id: trial.trial_id });
        }
        let mut prev = f32::NEG_INFINITY;
        for (i, ev) in trial.events.iter().enumerate() {
            // NaN timestamps fail the comparison and are reported as ordering breaks.
            if !(ev.timestamp >= prev) {
                violations.push(Violation::OutOfOrder { trial_id: trial.trial_id, position: i });
                prev = ev.timestamp.max(prev);
            } else {
                prev = ev.timestamp;
            }
            if ev.event.0 == 0 || ev.event.0 > yet.catalog_size {
                violations.push(Violation::IdRange {
                    trial_id: trial.trial_id,
                    event_id: ev.event.0,
                });
            }
        }
    }
    violations
}
