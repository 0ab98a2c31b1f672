//! Seeded synthetic generation of year event tables, event loss tables,
//! and portfolios at realistic shapes.
//!
//! Every random draw goes through ChaCha8 streams keyed by
//! `(seed, domain, unit)`, so each trial, ELT, and layer has an independent
//! stream and generation order never affects the output. The bit-level
//! derivations (uniform doubles, range reduction, log-normal losses,
//! distinct-id sampling) are spelled out next to each sampler so the byte
//! streams can be reproduced outside this crate.

use std::collections::HashSet;
use std::f64::consts::TAU;
use std::fmt;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{
    AggregateTerms, EltTerms, EventId, EventLossTable, Layer, ModelError, OccurrenceTerms,
    Portfolio, Program, Trial, TrialEvent, YearEventTable, MAX_ELTS_PER_LAYER, MAX_PROGRAMS,
};

/// Stream domain for per-trial event sequences.
const DOMAIN_TRIAL: u64 = 1;
/// Stream domain for per-ELT terms, ids, and losses.
const DOMAIN_ELT: u64 = 2;
/// Stream domain for per-layer occurrence/aggregate terms.
const DOMAIN_LAYER: u64 = 3;

/// Shape of the log-normal loss distribution (sigma of the underlying normal).
const LOSS_SIGMA: f64 = 1.0;

/// Inclusive sampling ranges for one retention/limit pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermRange {
    pub retention: (f64, f64),
    pub limit: (f64, f64),
}

impl TermRange {
    fn validate(&self, name: &str) -> Result<(), GenError> {
        let (rlo, rhi) = self.retention;
        if !(rlo >= 0.0 && rlo <= rhi) || !rhi.is_finite() {
            return Err(GenError::InvalidSpec(format!(
                "{name} retention range ({rlo}, {rhi}) is not a finite non-negative range"
            )));
        }
        let (llo, lhi) = self.limit;
        // An unlimited cover is expressed as the degenerate range (inf, inf);
        // a half-infinite range has no uniform distribution to sample.
        let unlimited = llo == f64::INFINITY && lhi == f64::INFINITY;
        if !unlimited && (!(llo > 0.0 && llo <= lhi) || !lhi.is_finite()) {
            return Err(GenError::InvalidSpec(format!(
                "{name} limit range ({llo}, {lhi}) must be positive finite or (inf, inf)"
            )));
        }
        Ok(())
    }
}

/// Full description of a synthetic workload; equal specs generate equal data.
#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub seed: u64,
    pub num_trials: u64,
    /// Inclusive (min, max) bounds on events per trial.
    pub events_per_trial: (u32, u32),
    pub catalog_size: u32,
    /// Distinct event ids per generated ELT.
    pub elt_entry_count: u32,
    /// Mean of the log-normal event-loss distribution.
    pub loss_scale: f64,
    pub ft1: TermRange,
    pub ft2: TermRange,
    pub ft3: TermRange,
}

impl GenSpec {
    /// Spec with the given shape and the default loss scale and term ranges.
    pub fn new(
        seed: u64,
        num_trials: u64,
        events_per_trial: (u32, u32),
        catalog_size: u32,
        elt_entry_count: u32,
    ) -> Self {
        Self {
            seed,
            num_trials,
            events_per_trial,
            catalog_size,
            elt_entry_count,
            loss_scale: 1000.0,
            ft1: TermRange { retention: (0.0, 100.0), limit: (5_000.0, 20_000.0) },
            ft2: TermRange { retention: (0.0, 500.0), limit: (20_000.0, 100_000.0) },
            ft3: TermRange { retention: (0.0, 2_000.0), limit: (200_000.0, 2_000_000.0) },
        }
    }

    /// The full experimental shape: 100,000 trials of 800 to 1500 events
    /// over a million-event catalog, ELTs of 10,000 entries.
    pub fn full_shape(seed: u64) -> Self {
        Self::new(seed, 100_000, (800, 1500), 1_000_000, 10_000)
    }

    /// A scaled-down shape that keeps the same density profile but runs in
    /// seconds; used by benchmarks and tests.
    pub fn desk_shape(seed: u64) -> Self {
        Self::new(seed, 5_000, (80, 120), 50_000, 2_000)
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if self.num_trials == 0 {
            return Err(GenError::InvalidSpec("num_trials must be at least 1".into()));
        }
        let (lo, hi) = self.events_per_trial;
        if lo == 0 || lo > hi {
            return Err(GenError::InvalidSpec(format!(
                "events_per_trial range ({lo}, {hi}) must satisfy 1 <= min <= max"
            )));
        }
        if self.catalog_size == 0 {
            return Err(GenError::InvalidSpec("catalog_size must be at least 1".into()));
        }
        if self.elt_entry_count == 0 || self.elt_entry_count > self.catalog_size {
            return Err(GenError::InvalidSpec(format!(
                "elt_entry_count {} outside [1, catalog_size {}]",
                self.elt_entry_count, self.catalog_size
            )));
        }
        if !(self.loss_scale > 0.0) || !self.loss_scale.is_finite() {
            return Err(GenError::InvalidSpec("loss_scale must be positive and finite".into()));
        }
        self.ft1.validate("ft1")?;
        self.ft2.validate("ft2")?;
        self.ft3.validate("ft3")
    }
}

/// Generation failure: an invalid spec, or a generated artifact that broke
/// a model invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum GenError {
    InvalidSpec(String),
    Model(ModelError),
}

impl fmt::Display for GenError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidSpec(msg) => write!(f, "invalid generation spec: {msg}"),
            Self::Model(err) => write!(f, "generated data violates model invariant: {err}"),
        }
    }
}

impl std::error::Error for GenError {}

impl From<ModelError> for GenError {
    fn from(err: ModelError) -> Self {
        Self::Model(err)
    }
}

// ---------------------------------------------------------------------------
// Samplers
// ---------------------------------------------------------------------------

/// ChaCha8 stream for one generation unit. The 32-byte key is, in order,
/// the little-endian bytes of `seed`, `domain`, and `unit`; the last eight
/// bytes stay zero.
fn unit_rng(seed: u64, domain: u64, unit: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    key[16..24].copy_from_slice(&unit.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Uniform double in [0, 1): the top 53 bits of one `next_u64` scaled by
/// 2^-53.
fn unit_uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Unbiased integer in [0, n), n >= 1: 128-bit multiply of one `next_u64`
/// by n, keeping the high word, with Lemire's rejection of the biased low
/// fraction.
fn uniform_below(rng: &mut ChaCha8Rng, n: u64) -> u64 {
    debug_assert!(n >= 1);
    let mut m = (rng.next_u64() as u128) * (n as u128);
    if (m as u64) < n {
        let threshold = n.wrapping_neg() % n;
        while (m as u64) < threshold {
            m = (rng.next_u64() as u128) * (n as u128);
        }
    }
    (m >> 64) as u64
}

/// Uniform in [lo, hi]; a degenerate range returns lo without drawing.
fn uniform_in(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        lo + (hi - lo) * unit_uniform(rng)
    }
}

/// Log-normal with mean `mean`: one Box-Muller normal draw
/// z = sqrt(-2 ln u1) * cos(tau * u2) with u1 in (0, 1], exponentiated
/// around mu = ln(mean) - sigma^2 / 2 so the distribution mean is `mean`.
fn log_normal(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    let u1 = 1.0 - unit_uniform(rng);
    let u2 = unit_uniform(rng);
    let z = (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos();
    (mean.ln() - 0.5 * LOSS_SIGMA * LOSS_SIGMA + LOSS_SIGMA * z).exp()
}

/// Floyd's algorithm: k distinct ids uniform over [1, n], returned sorted.
/// Exactly k `uniform_below` draws regardless of collisions.
fn sample_distinct_ids(rng: &mut ChaCha8Rng, k: u32, n: u32) -> Vec<u32> {
    debug_assert!(k >= 1 && k <= n);
    let mut chosen: HashSet<u32> = HashSet::with_capacity(k as usize);
    for j in (n - k + 1)..=n {
        let candidate = 1 + uniform_below(rng, j as u64) as u32;
        if !chosen.insert(candidate) {
            chosen.insert(j);
        }
    }
    let mut ids: Vec<u32> = chosen.into_iter().collect();
    ids.sort_unstable();
    ids
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// Generates the year event table: per trial, the event count is drawn
/// first, then (event id, timestamp) pairs in that order, then the pair
/// list is stably sorted by timestamp.
pub fn generate_yet(spec: &GenSpec) -> Result<YearEventTable, GenError> {
    spec.validate()?;
    let (lo, hi) = spec.events_per_trial;
    let mut trials = Vec::with_capacity(spec.num_trials as usize);
    for index in 0..spec.num_trials {
        let mut rng = unit_rng(spec.seed, DOMAIN_TRIAL, index);
        let count = lo as u64 + uniform_below(&mut rng, (hi - lo) as u64 + 1);
        let mut events = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let event = EventId(1 + uniform_below(&mut rng, spec.catalog_size as u64) as u32);
            let timestamp = unit_uniform(&mut rng) as f32;
            events.push(TrialEvent { event, timestamp });
        }
        events.sort_by(|a, b| a.timestamp.partial_cmp(&b.timestamp).expect("finite timestamps"));
        trials.push(Trial { trial_id: index + 1, events });
    }
    Ok(YearEventTable::new(trials, spec.catalog_size)?)
}

/// Generates one ELT. Stream order: FT1 retention, FT1 limit, the distinct
/// event ids, then one loss per id in ascending id order.
pub fn generate_elt(spec: &GenSpec, elt_id: u32) -> Result<EventLossTable, GenError> {
    spec.validate()?;
    let mut rng = unit_rng(spec.seed, DOMAIN_ELT, elt_id as u64);
    let terms = EltTerms::new(
        uniform_in(&mut rng, spec.ft1.retention),
        uniform_in(&mut rng, spec.ft1.limit),
    )?;
    let ids = sample_distinct_ids(&mut rng, spec.elt_entry_count, spec.catalog_size);
    let entries = ids
        .into_iter()
        .map(|id| (EventId(id), log_normal(&mut rng, spec.loss_scale)))
        .collect();
    Ok(EventLossTable::new(elt_id, entries, terms)?)
}

/// Generates the portfolio tree and all its ELTs. ELT ids run from 1 in
/// traversal order; each layer references its own ELTs. Layer terms come
/// from the layer's stream (FT2 retention, FT2 limit, FT3 retention, FT3
/// limit, in that order).
pub fn generate_portfolio(
    spec: &GenSpec,
    num_programs: u32,
    layers_per_program: u32,
    elts_per_layer: u32,
) -> Result<(Portfolio, Vec<EventLossTable>), GenError> {
    spec.validate()?;
    if num_programs == 0 || num_programs as usize > MAX_PROGRAMS {
        return Err(GenError::InvalidSpec(format!(
            "num_programs {num_programs} outside [1, {MAX_PROGRAMS}]"
        )));
    }
    if layers_per_program == 0 {
        return Err(GenError::InvalidSpec("layers_per_program must be at least 1".into()));
    }
    if elts_per_layer == 0 || elts_per_layer as usize > MAX_ELTS_PER_LAYER {
        return Err(GenError::InvalidSpec(format!(
            "elts_per_layer {elts_per_layer} outside [1, {MAX_ELTS_PER_LAYER}]"
        )));
    }

    let mut elts = Vec::new();
    let mut programs = Vec::with_capacity(num_programs as usize);
    let mut next_elt_id = 1u32;
    let mut layer_unit = 0u64;
    for program_id in 1..=num_programs {
        let mut layers = Vec::with_capacity(layers_per_program as usize);
        for layer_id in 1..=layers_per_program {
            let mut rng = unit_rng(spec.seed, DOMAIN_LAYER, layer_unit);
            layer_unit += 1;
            let occurrence = OccurrenceTerms::new(
                uniform_in(&mut rng, spec.ft2.retention),
                uniform_in(&mut rng, spec.ft2.limit),
            )?;
            let aggregate = AggregateTerms::new(
                uniform_in(&mut rng, spec.ft3.retention),
                uniform_in(&mut rng, spec.ft3.limit),
            )?;
            let refs: Vec<u32> = (0..elts_per_layer)
                .map(|offset| next_elt_id + offset)
                .collect();
            next_elt_id += elts_per_layer;
            for &elt_id in &refs {
                elts.push(generate_elt(spec, elt_id)?);
            }
            layers.push(Layer::new(layer_id, refs, occurrence, aggregate)?);
        }
        programs.push(Program::new(program_id, layers)?);
    }
    let portfolio = Portfolio::new(1, programs)?;
    Ok((portfolio, elts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_yet;

    #[test]
    fn yet_matches_spec_shape_and_validates() {
        let spec = GenSpec::new(7, 1000, (800, 1500), 100_000, 100);
        let yet = generate_yet(&spec).unwrap();
        assert_eq!(yet.trials.len(), 1000);
        assert!(yet
            .trials
            .iter()
            .all(|t| (800..=1500).contains(&(t.events.len() as u32))));
        assert_eq!(validate_yet(&yet), Vec::new());
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = GenSpec::new(7, 50, (5, 20), 1000, 100);
        assert_eq!(generate_yet(&spec).unwrap(), generate_yet(&spec).unwrap());
        assert_eq!(generate_elt(&spec, 3).unwrap(), generate_elt(&spec, 3).unwrap());
        assert_eq!(
            generate_portfolio(&spec, 2, 2, 3).unwrap(),
            generate_portfolio(&spec, 2, 2, 3).unwrap()
        );
    }

    #[test]
    fn different_seeds_differ() {
        let a = GenSpec::new(7, 10, (5, 20), 1000, 100);
        let b = GenSpec::new(8, 10, (5, 20), 1000, 100);
        assert_ne!(generate_yet(&a).unwrap(), generate_yet(&b).unwrap());
    }

    #[test]
    fn degenerate_bounds_give_single_event_trial() {
        let spec = GenSpec::new(7, 1, (1, 1), 1000, 100);
        let yet = generate_yet(&spec).unwrap();
        assert_eq!(yet.trials.len(), 1);
        assert_eq!(yet.trials[0].events.len(), 1);
    }

    #[test]
    fn elt_ids_are_distinct_sorted_in_range() {
        let spec = GenSpec::new(7, 1, (1, 1), 1000, 500);
        let elt = generate_elt(&spec, 1).unwrap();
        let entries = elt.entries();
        assert_eq!(entries.len(), 500);
        assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(entries.iter().all(|&(id, loss)| id.0 >= 1 && id.0 <= 1000 && loss > 0.0));
    }

    #[test]
    fn elt_saturates_catalog() {
        let spec = GenSpec::new(7, 1, (1, 1), 64, 64);
        let elt = generate_elt(&spec, 1).unwrap();
        let ids: Vec<u32> = elt.entries().iter().map(|&(id, _)| id.0).collect();
        assert_eq!(ids, (1..=64).collect::<Vec<u32>>());
    }

    #[test]
    fn loss_mean_tracks_loss_scale() {
        let mut spec = GenSpec::new(7, 1, (1, 1), 30_000, 20_000);
        spec.loss_scale = 1000.0;
        let elt = generate_elt(&spec, 1).unwrap();
        let mean: f64 =
            elt.entries().iter().map(|&(_, l)| l).sum::<f64>() / elt.entries().len() as f64;
        assert!((mean - 1000.0).abs() < 100.0, "sample mean {mean} far from 1000");
    }

    #[test]
    fn portfolio_matches_requested_counts() {
        let spec = GenSpec::new(7, 1, (1, 1), 10_000, 50);
        let (portfolio, elts) = generate_portfolio(&spec, 1, 1, 16).unwrap();
        assert_eq!(portfolio.programs.len(), 1);
        assert_eq!(portfolio.programs[0].layers.len(), 1);
        assert_eq!(portfolio.programs[0].layers[0].elt_refs.len(), 16);
        assert_eq!(elts.len(), 16);
        assert_eq!(elts.iter().map(|e| e.elt_id).collect::<Vec<_>>(), (1..=16).collect::<Vec<_>>());

        let (minimal, elts) = generate_portfolio(&spec, 1, 1, 1).unwrap();
        assert_eq!(minimal.programs[0].layers[0].elt_refs, vec![1]);
        assert_eq!(elts.len(), 1);
    }

    #[test]
    fn bounds_are_rejected() {
        let spec = GenSpec::new(7, 1, (1, 1), 1000, 100);
        assert!(matches!(
            generate_portfolio(&spec, 11, 1, 1),
            Err(GenError::InvalidSpec(_))
        ));
        assert!(matches!(
            generate_portfolio(&spec, 1, 1, 31),
            Err(GenError::InvalidSpec(_))
        ));
        assert!(matches!(
            generate_portfolio(&spec, 0, 1, 1),
            Err(GenError::InvalidSpec(_))
        ));

        let mut bad = spec.clone();
        bad.elt_entry_count = 2000;
        assert!(matches!(generate_elt(&bad, 1), Err(GenError::InvalidSpec(_))));

        let mut bad = spec.clone();
        bad.num_trials = 0;
        assert!(matches!(generate_yet(&bad), Err(GenError::InvalidSpec(_))));

        let mut bad = spec.clone();
        bad.events_per_trial = (10, 5);
        assert!(matches!(generate_yet(&bad), Err(GenError::InvalidSpec(_))));

        let mut bad = spec;
        bad.ft2.limit = (0.0, 10.0);
        assert!(matches!(generate_portfolio(&bad, 1, 1, 1), Err(GenError::InvalidSpec(_))));
    }

    #[test]
    fn unlimited_limit_range_is_supported() {
        let mut spec = GenSpec::new(7, 1, (1, 1), 1000, 10);
        spec.ft3.limit = (f64::INFINITY, f64::INFINITY);
        let (portfolio, _) = generate_portfolio(&spec, 1, 1, 1).unwrap();
        assert_eq!(
            portfolio.programs[0].layers[0].aggregate.limit,
            f64::INFINITY
        );
    }
}
