//! Event-loss lookup layouts for one layer's ELT set.
//!
//! Four layouts answer the same query, raw loss of `(event, elt_index)`
//! with 0 for absent:
//!
//! * [`DirectAccessTable`]: one dense array per ELT, indexed by event id.
//!   One memory access per lookup, `catalog_size + 1` slots per ELT.
//! * [`CombinedTable`]: all ELTs in a single row-major matrix, one row per
//!   event id, so the losses one event touches are contiguous.
//! * [`SortedTable`]: per-ELT sorted key/loss arrays with binary search.
//! * [`HashTable`]: per-ELT open-addressing hash map.
//!
//! Index 0 of the dense layouts is unused so event ids index directly.
//! A stored zero means absent, which is sound because event loss tables
//! forbid zero losses.

use std::fmt;

use crate::model::{EltTerms, EventId, EventLossTable};
use crate::scalar::Scalar;

/// Selects which lookup structure [`build_layout`] constructs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayoutKind {
    Direct,
    Combined,
    Sorted,
    Hash,
}

impl LayoutKind {
    pub const ALL: [LayoutKind; 4] =
        [LayoutKind::Direct, LayoutKind::Combined, LayoutKind::Sorted, LayoutKind::Hash];

    /// Parses the lowercase layout name used by CLI flags and reports.
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "direct" => Some(Self::Direct),
            "combined" => Some(Self::Combined),
            "sorted" => Some(Self::Sorted),
            "hash" => Some(Self::Hash),
            _ => None,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            Self::Direct => "direct",
            Self::Combined => "combined",
            Self::Sorted => "sorted",
            Self::Hash => "hash",
        }
    }
}

impl fmt::Display for LayoutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LookupError {
    ZeroCatalog,
    NoElts,
    EventPastCatalog { elt_id: u32, event: EventId },
}

impl fmt::Display for LookupError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ZeroCatalog => write!(f, "catalog size must be at least 1"),
            Self::NoElts => write!(f, "a layout needs at least one event loss table"),
            Self::EventPastCatalog { elt_id, event } => {
                write!(f, "elt {elt_id}: event id {event} exceeds the catalog size")
            }
        }
    }
}

impl std::error::Error for LookupError {}

/// One dense array of `catalog_size + 1` losses per ELT; slot 0 unused.
#[derive(Debug, Clone)]
pub struct DirectAccessTable<S: Scalar> {
    arrays: Vec<Vec<S>>,
}

impl<S: Scalar> DirectAccessTable<S> {
    fn build(elts: &[&EventLossTable], catalog_size: u32) -> Self {
        let slots = catalog_size as usize + 1;
        let arrays = elts
            .iter()
            .map(|elt| {
                let mut array = vec![S::zero(); slots];
                for &(event, loss) in elt.entries() {
                    array[event.0 as usize] = S::from_wide(loss);
                }
                array
            })
            .collect();
        Self { arrays }
    }

    #[inline]
    pub fn loss(&self, event: EventId, elt_index: usize) -> S {
        self.arrays[elt_index][event.0 as usize]
    }

    /// `num_elts * (catalog_size + 1) * sizeof(scalar)` bytes.
    pub fn memory_footprint(&self) -> u64 {
        self.arrays.iter().map(|a| a.len() as u64 * S::BYTES).sum()
    }

    /// Zeros actually stored in valid event slots (index 0 excluded).
    pub fn zero_entries(&self) -> u64 {
        self.arrays
            .iter()
            .map(|a| a[1..].iter().filter(|loss| **loss == S::zero()).count() as u64)
            .sum()
    }
}

/// Row-major `[catalog_size + 1] x [num_elts]` matrix; row e holds event
/// e's loss in every ELT, so `(e, j)` lives at `e * num_elts + j`.
#[derive(Debug, Clone)]
pub struct CombinedTable<S: Scalar> {
    cells: Vec<S>,
    num_elts: usize,
}

impl<S: Scalar> CombinedTable<S> {
    fn build(elts: &[&EventLossTable], catalog_size: u32) -> Self {
        let num_elts = elts.len();
        let mut cells = vec![S::zero(); (catalog_size as usize + 1) * num_elts];
        for (elt_index, elt) in elts.iter().enumerate() {
            for &(event, loss) in elt.entries() {
                cells[event.0 as usize * num_elts + elt_index] = S::from_wide(loss);
            }
        }
        Self { cells, num_elts }
    }

    #[inline]
    pub fn loss(&self, event: EventId, elt_index: usize) -> S {
        debug_assert!(elt_index < self.num_elts);
        self.cells[event.0 as usize * self.num_elts + elt_index]
    }

    /// Same element count as the per-ELT direct arrays.
    pub fn memory_footprint(&self) -> u64 {
        self.cells.len() as u64 * S::BYTES
    }

    /// Zeros stored in valid event rows (row 0 excluded).
    pub fn zero_entries(&self) -> u64 {
        self.cells[self.num_elts..].iter().filter(|loss| **loss == S::zero()).count() as u64
    }
}

/// Per-ELT parallel arrays sorted by event id, answered by binary search.
#[derive(Debug, Clone)]
pub struct SortedTable<S: Scalar> {
    keys: Vec<Vec<u32>>,
    losses: Vec<Vec<S>>,
}

impl<S: Scalar> SortedTable<S> {
    fn build(elts: &[&EventLossTable]) -> Self {
        let keys = elts
            .iter()
            .map(|elt| elt.entries().iter().map(|&(event, _)| event.0).collect())
            .collect();
        let losses = elts
            .iter()
            .map(|elt| elt.entries().iter().map(|&(_, loss)| S::from_wide(loss)).collect())
            .collect();
        Self { keys, losses }
    }

    #[inline]
    pub fn loss(&self, event: EventId, elt_index: usize) -> S {
        match self.keys[elt_index].binary_search(&event.0) {
            Ok(pos) => self.losses[elt_index][pos],
            Err(_) => S::zero(),
        }
    }

    /// `sum over ELTs of entries * (sizeof(key) + sizeof(scalar))` bytes.
    pub fn memory_footprint(&self) -> u64 {
        self.keys.iter().map(|k| k.len() as u64 * (4 + S::BYTES)).sum()
    }
}

/// Per-ELT open-addressing hash maps with linear probing.
///
/// Capacity is a power of two holding entries at load factor <= 0.7, the
/// hash is the multiply-shift `key * 0x9E3779B97F4A7C15 >> (64 - log2(cap))`,
/// and key 0 marks an empty slot (event ids start at 1). Build inserts in
/// ascending event-id order, so the slot assignment is deterministic.
#[derive(Debug, Clone)]
pub struct HashTable<S: Scalar> {
    keys: Vec<Vec<u32>>,
    losses: Vec<Vec<S>>,
    masks: Vec<u64>,
    shifts: Vec<u32>,
}

const HASH_MULTIPLIER: u64 = 0x9E3779B97F4A7C15;

impl<S: Scalar> HashTable<S> {
    fn build(elts: &[&EventLossTable]) -> Self {
        let mut keys = Vec::with_capacity(elts.len());
        let mut losses = Vec::with_capacity(elts.len());
        let mut masks = Vec::with_capacity(elts.len());
        let mut shifts = Vec::with_capacity(elts.len());
        for elt in elts {
            let entries = elt.entries();
            let mut capacity: u64 = 8;
            while capacity * 7 < entries.len() as u64 * 10 {
                capacity <<= 1;
            }
            let shift = 64 - capacity.trailing_zeros();
            let mask = capacity - 1;
            let mut slot_keys = vec![0u32; capacity as usize];
            let mut slot_losses = vec![S::zero(); capacity as usize];
            for &(event, loss) in entries {
                let mut slot = ((event.0 as u64).wrapping_mul(HASH_MULTIPLIER) >> shift) as usize;
                while slot_keys[slot] != 0 {
                    slot = (slot + 1) & mask as usize;
                }
                slot_keys[slot] = event.0;
                slot_losses[slot] = S::from_wide(loss);
            }
            keys.push(slot_keys);
            losses.push(slot_losses);
            masks.push(mask);
            shifts.push(shift);
        }
        Self { keys, losses, masks, shifts }
    }

    #[inline]
    pub fn loss(&self, event: EventId, elt_index: usize) -> S {
        let keys = &self.keys[elt_index];
        let mask = self.masks[elt_index] as usize;
        let mut slot = ((event.0 as u64).wrapping_mul(HASH_MULTIPLIER)
            >> self.shifts[elt_index]) as usize;
        loop {
            let key = keys[slot];
            if key == event.0 {
                return self.losses[elt_index][slot];
            }
            if key == 0 {
                return S::zero();
            }
            slot = (slot + 1) & mask;
        }
    }

    /// `sum over ELTs of capacity * (sizeof(key) + sizeof(scalar))` bytes.
    pub fn memory_footprint(&self) -> u64 {
        self.keys.iter().map(|k| k.len() as u64 * (4 + S::BYTES)).sum()
    }
}

#[derive(Debug, Clone)]
enum Layout<S: Scalar> {
    Direct(DirectAccessTable<S>),
    Combined(CombinedTable<S>),
    Sorted(SortedTable<S>),
    Hash(HashTable<S>),
}

/// A built lookup over one layer's ELTs: raw losses in the chosen layout
/// plus the per-ELT FT1 terms, catalog bound, and entry accounting.
#[derive(Debug, Clone)]
pub struct LossLookup<S: Scalar> {
    layout: Layout<S>,
    terms: Vec<EltTerms<S>>,
    catalog_size: u32,
    total_entries: u64,
}

impl<S: Scalar> LossLookup<S> {
    /// Raw loss of `event` in the ELT at `elt_index`, 0 if absent.
    ///
    /// `event` must be within the catalog and `elt_index` within the ELT
    /// count; dense layouts panic on out-of-bounds indices.
    #[inline]
    pub fn loss(&self, event: EventId, elt_index: usize) -> S {
        match &self.layout {
            Layout::Direct(t) => t.loss(event, elt_index),
            Layout::Combined(t) => t.loss(event, elt_index),
            Layout::Sorted(t) => t.loss(event, elt_index),
            Layout::Hash(t) => t.loss(event, elt_index),
        }
    }

    /// FT1 terms per ELT, in build order.
    pub fn terms(&self) -> &[EltTerms<S>] {
        &self.terms
    }

    pub fn num_elts(&self) -> usize {
        self.terms.len()
    }

    pub fn catalog_size(&self) -> u32 {
        self.catalog_size
    }

    pub fn kind(&self) -> LayoutKind {
        match self.layout {
            Layout::Direct(_) => LayoutKind::Direct,
            Layout::Combined(_) => LayoutKind::Combined,
            Layout::Sorted(_) => LayoutKind::Sorted,
            Layout::Hash(_) => LayoutKind::Hash,
        }
    }

    /// Exact byte count of the payload arrays, excluding fixed overhead.
    pub fn memory_footprint(&self) -> u64 {
        match &self.layout {
            Layout::Direct(t) => t.memory_footprint(),
            Layout::Combined(t) => t.memory_footprint(),
            Layout::Sorted(t) => t.memory_footprint(),
            Layout::Hash(t) => t.memory_footprint(),
        }
    }

    /// Number of (event, elt) positions holding no loss. Dense layouts
    /// count the zeros actually stored; compact layouts derive the count
    /// from the catalog size and their entry totals.
    pub fn zero_entries(&self) -> u64 {
        match &self.layout {
            Layout::Direct(t) => t.zero_entries(),
            Layout::Combined(t) => t.zero_entries(),
            Layout::Sorted(_) | Layout::Hash(_) => {
                self.catalog_size as u64 * self.terms.len() as u64 - self.total_entries
            }
        }
    }
}

/// Builds the lookup for `elts` (in reference order) under `kind`.
pub fn build_layout<S: Scalar>(
    elts: &[&EventLossTable],
    catalog_size: u32,
    kind: LayoutKind,
) -> Result<LossLookup<S>, LookupError> {
    if catalog_size == 0 {
        return Err(LookupError::ZeroCatalog);
    }
    if elts.is_empty() {
        return Err(LookupError::NoElts);
    }
    for elt in elts {
        if elt.max_event_id() > catalog_size {
            return Err(LookupError::EventPastCatalog {
                elt_id: elt.elt_id,
                event: EventId(elt.max_event_id()),
            });
        }
    }
    let layout = match kind {
        LayoutKind::Direct => Layout::Direct(DirectAccessTable::build(elts, catalog_size)),
        LayoutKind::Combined => Layout::Combined(CombinedTable::build(elts, catalog_size)),
        LayoutKind::Sorted => Layout::Sorted(SortedTable::build(elts)),
        LayoutKind::Hash => Layout::Hash(HashTable::build(elts)),
    };
    Ok(LossLookup {
        layout,
        terms: elts.iter().map(|elt| elt.terms.cast()).collect(),
        catalog_size,
        total_entries: elts.iter().map(|elt| elt.entries().len() as u64).sum(),
    })
}
