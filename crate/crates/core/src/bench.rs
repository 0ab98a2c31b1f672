//! Benchmark harness: thread scaling, oversubscription, lookup layouts,
//! and chunk-size sweeps over seeded workloads, with a correctness gate.
//!
//! Every timed run's year-loss-table checksum must equal the baseline
//! row's checksum; a mismatch aborts the whole report, so performance
//! numbers are never produced from wrong answers. Rows report the median
//! and minimum of `reps` timed runs after one discarded warm-up run. Row
//! time is the engine's compute phase; lookup construction is identical
//! across the configs an experiment compares.

use std::fmt;
use std::time::Instant;

use crate::datagen::{generate_portfolio, generate_yet, GenError, GenSpec};
use crate::engine::{run_analysis, AnalysisResult, EngineError, Precision, RunConfig};
use crate::lookup::{build_layout, LayoutKind};
use crate::model::{EventLossTable, Portfolio, YearEventTable};
use crate::Wide;

/// Fewest timed repetitions a report may be built from.
pub const MIN_REPS: usize = 3;

#[derive(Debug)]
pub enum BenchError {
    InvalidParams(&'static str),
    Gen(GenError),
    Engine(EngineError),
    /// A run under `label` produced a different YLT than the baseline.
    ChecksumMismatch { label: String, expected: u64, found: u64 },
}

impl fmt::Display for BenchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidParams(msg) => write!(f, "invalid benchmark parameters: {msg}"),
            Self::Gen(err) => write!(f, "workload generation failed: {err}"),
            Self::Engine(err) => write!(f, "benchmark run failed: {err}"),
            Self::ChecksumMismatch { label, expected, found } => write!(
                f,
                "run '{label}' returned checksum {found:#018x}, baseline {expected:#018x}: \
                 refusing to report timings for wrong results"
            ),
        }
    }
}

impl std::error::Error for BenchError {}

impl From<GenError> for BenchError {
    fn from(err: GenError) -> Self {
        Self::Gen(err)
    }
}

impl From<EngineError> for BenchError {
    fn from(err: EngineError) -> Self {
        Self::Engine(err)
    }
}

/// What the benchmark is running on.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineInfo {
    pub logical_cpus: usize,
    pub physical_cores: usize,
    pub cpu_model: String,
    /// Reported clock, 0.0 when the kernel does not expose one.
    pub clock_mhz: f64,
}

impl MachineInfo {
    /// Reads /proc/cpuinfo; falls back to the scheduler's parallelism if
    /// the topology fields are missing.
    pub fn detect() -> Self {
        let logical_cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
        let mut physical: std::collections::HashSet<(u32, u32)> = std::collections::HashSet::new();
        let mut cpu_model = String::from("unknown");
        let mut clock_mhz = 0.0f64;
        let mut physical_id = 0u32;
        if let Ok(text) = std::fs::read_to_string("/proc/cpuinfo") {
            for line in text.lines() {
                let mut parts = line.splitn(2, ':');
                let key = parts.next().unwrap_or("").trim();
                let value = parts.next().unwrap_or("").trim();
                match key {
                    "model name" if cpu_model == "unknown" => cpu_model = value.to_string(),
                    "cpu MHz" if clock_mhz == 0.0 => clock_mhz = value.parse().unwrap_or(0.0),
                    "physical id" => physical_id = value.parse().unwrap_or(0),
                    "core id" => {
                        physical.insert((physical_id, value.parse().unwrap_or(0)));
                    }
                    _ => {}
                }
            }
        }
        let physical_cores = if physical.is_empty() { logical_cpus } else { physical.len() };
        Self { logical_cpus, physical_cores, cpu_model, clock_mhz }
    }
}

/// A generated simulation input bundle with a label for reports.
#[derive(Debug, Clone)]
pub struct Workload {
    pub name: String,
    pub yet: YearEventTable,
    pub portfolio: Portfolio,
    pub elts: Vec<EventLossTable>,
}

impl Workload {
    pub fn generate(
        name: impl Into<String>,
        spec: &GenSpec,
        num_programs: u32,
        layers_per_program: u32,
        elts_per_layer: u32,
    ) -> Result<Self, BenchError> {
        let yet = generate_yet(spec)?;
        let (portfolio, elts) =
            generate_portfolio(spec, num_programs, layers_per_program, elts_per_layer)?;
        Ok(Self { name: name.into(), yet, portfolio, elts })
    }

    /// The benchmark default: 5,000 trials of 80 to 120 events over a
    /// 50,000-event catalog, one layer of 8 ELTs with 2,000 entries each.
    pub fn desk(seed: u64) -> Result<Self, BenchError> {
        Self::generate(format!("desk-seed{seed}"), &GenSpec::desk_shape(seed), 1, 1, 8)
    }

    /// The full experimental shape: 100,000 trials of exactly 1,000
    /// events, one layer covering 16 ELTs of 10,000 entries, catalog one
    /// million. Minutes of compute; meant for real scaling measurements.
    pub fn full_scale(seed: u64) -> Result<Self, BenchError> {
        let spec = GenSpec::new(seed, 100_000, (1000, 1000), 1_000_000, 10_000);
        Self::generate(format!("full-seed{seed}"), &spec, 1, 1, 16)
    }

    fn layer_count(&self) -> usize {
        self.portfolio.layers().count()
    }

    /// Work per run: every event visits every layer.
    pub fn event_layer_visits(&self) -> u64 {
        self.yet.total_events() * self.layer_count() as u64
    }
}

/// One measured configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub label: String,
    pub workers: usize,
    pub threads_per_worker_slot: usize,
    pub chunk_size: usize,
    pub layout: LayoutKind,
    pub precision: Precision,
    pub min_seconds: f64,
    pub median_seconds: f64,
    /// Baseline median over this row's median.
    pub speedup: f64,
    /// Speedup scaled by baseline threads over this row's threads; 1.0
    /// means perfect scaling.
    pub efficiency: f64,
    /// Event-layer visits per second at the median time.
    pub throughput: f64,
    pub checksum: u64,
    /// Total lookup bytes per layer set (layouts experiment only).
    pub memory_bytes: Option<u64>,
    /// Whether this row beat the baseline median by more than 5%
    /// (oversubscription experiment only).
    pub beats_baseline: Option<bool>,
}

/// A full experiment: machine, workload, and one row per configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub experiment: String,
    pub machine: MachineInfo,
    pub workload: String,
    pub reps: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    /// Machine-readable form, one row per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "experiment,label,workers,threads_per_slot,chunk_size,layout,precision,reps,\
             min_seconds,median_seconds,speedup,efficiency,throughput,checksum,\
             memory_bytes,beats_baseline\n",
        );
        for row in &self.rows {
            let memory = row.memory_bytes.map_or(String::new(), |b| b.to_string());
            let beats = row.beats_baseline.map_or(String::new(), |b| b.to_string());
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{:#018x},{},{}\n",
                self.experiment,
                row.label,
                row.workers,
                row.threads_per_worker_slot,
                row.chunk_size,
                row.layout,
                row.precision,
                self.reps,
                row.min_seconds,
                row.median_seconds,
                row.speedup,
                row.efficiency,
                row.throughput,
                row.checksum,
                memory,
                beats,
            ));
        }
        out
    }

    /// Aligned human-readable table.
    pub fn render_table(&self) -> String {
        let clock = if self.machine.clock_mhz > 0.0 {
            format!(", {:.0} MHz", self.machine.clock_mhz)
        } else {
            String::new()
        };
        let mut out = format!(
            "experiment: {}\nworkload:   {}\nmachine:    {} ({} physical / {} logical{clock})\n\
             reps:       {} (+1 warm-up, discarded)\n\n",
            self.experiment,
            self.workload,
            self.machine.cpu_model,
            self.machine.physical_cores,
            self.machine.logical_cpus,
            self.reps,
        );
        out.push_str(&format!(
            "{:<24} {:>12} {:>12} {:>8} {:>10} {:>14}  {}\n",
            "config", "median (s)", "min (s)", "speedup", "efficiency", "throughput", "notes"
        ));
        for row in &self.rows {
            let mut notes = String::new();
            if let Some(bytes) = row.memory_bytes {
                notes.push_str(&format!("{} bytes", bytes));
            }
            if let Some(beats) = row.beats_baseline {
                if !notes.is_empty() {
                    notes.push_str(", ");
                }
                notes.push_str(if beats { "beats baseline >5%" } else { "no gain over baseline" });
            }
            out.push_str(&format!(
                "{:<24} {:>12.6} {:>12.6} {:>8.3} {:>10.3} {:>14.0}  {}\n",
                row.label,
                row.median_seconds,
                row.min_seconds,
                row.speedup,
                row.efficiency,
                row.throughput,
                notes
            ));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Checksums
// ---------------------------------------------------------------------------

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

/// FNV-1a 64 over a byte stream.
fn fnv1a64(hash: u64, bytes: &[u8]) -> u64 {
    let mut hash = hash;
    for &byte in bytes {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Order-sensitive checksum of every loss table in a result: trial ids
/// and exact loss bits, layer tables first, portfolio total last.
pub fn result_checksum(result: &AnalysisResult) -> u64 {
    let mut hash = FNV_OFFSET;
    for table in result.layer_ylts.iter().chain(std::iter::once(&result.portfolio_ylt)) {
        for &(trial_id, loss) in &table.losses {
            hash = fnv1a64(hash, &trial_id.to_le_bytes());
            hash = fnv1a64(hash, &loss.to_bits().to_le_bytes());
        }
    }
    hash
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2.0
    }
}

/// Runs one config `reps` times after a discarded warm-up; returns
/// (min, median, checksum).
fn measure(
    workload: &Workload,
    config: &RunConfig,
    reps: usize,
) -> Result<(f64, f64, u64), BenchError> {
    let warm_up = run_analysis(&workload.portfolio, &workload.yet, &workload.elts, config)?;
    let checksum = result_checksum(&warm_up);
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let result = run_analysis(&workload.portfolio, &workload.yet, &workload.elts, config)?;
        let run_checksum = result_checksum(&result);
        if run_checksum != checksum {
            return Err(BenchError::ChecksumMismatch {
                label: format!("workers={} repeat", config.workers),
                expected: checksum,
                found: run_checksum,
            });
        }
        times.push(result.timing.compute_seconds);
    }
    let min_seconds = times.iter().copied().fold(f64::INFINITY, f64::min);
    let median_seconds = median(&mut times);
    Ok((min_seconds, median_seconds, checksum))
}

struct RowSpec {
    label: String,
    config: RunConfig,
    memory_bytes: Option<u64>,
}

/// Shared experiment driver: measures every row, gates checksums against
/// the first row, fills in speedup/efficiency/throughput.
fn run_experiment(
    experiment: &str,
    workload: &Workload,
    specs: Vec<RowSpec>,
    reps: usize,
    mark_beats_baseline: bool,
) -> Result<BenchReport, BenchError> {
    if specs.is_empty() {
        return Err(BenchError::InvalidParams("experiment needs at least one configuration"));
    }
    if reps < MIN_REPS {
        return Err(BenchError::InvalidParams("reps below the minimum of 3"));
    }
    let visits = workload.event_layer_visits() as f64;
    let mut rows: Vec<BenchRow> = Vec::with_capacity(specs.len());
    let mut baseline: Option<(f64, u64, usize)> = None;
    for spec in specs {
        let (min_seconds, median_seconds, checksum) = measure(workload, &spec.config, reps)?;
        let threads = spec.config.workers * spec.config.threads_per_worker_slot;
        let (speedup, efficiency, beats) = match baseline {
            None => {
                baseline = Some((median_seconds, checksum, threads));
                (1.0, 1.0, false)
            }
            Some((base_median, base_checksum, base_threads)) => {
                if checksum != base_checksum {
                    return Err(BenchError::ChecksumMismatch {
                        label: spec.label,
                        expected: base_checksum,
                        found: checksum,
                    });
                }
                let speedup = base_median / median_seconds;
                (
                    speedup,
                    speedup * base_threads as f64 / threads as f64,
                    median_seconds < base_median * 0.95,
                )
            }
        };
        rows.push(BenchRow {
            label: spec.label,
            workers: spec.config.workers,
            threads_per_worker_slot: spec.config.threads_per_worker_slot,
            chunk_size: spec.config.chunk_size,
            layout: spec.config.layout,
            precision: spec.config.precision,
            min_seconds,
            median_seconds,
            speedup,
            efficiency,
            throughput: if median_seconds > 0.0 { visits / median_seconds } else { 0.0 },
            checksum,
            memory_bytes: spec.memory_bytes,
            beats_baseline: mark_beats_baseline.then_some(beats),
        });
    }
    Ok(BenchReport {
        experiment: experiment.to_string(),
        machine: MachineInfo::detect(),
        workload: workload.name.clone(),
        reps,
        rows,
    })
}

/// One row per worker count, single thread per slot, baseline first.
pub fn bench_scaling(
    workload: &Workload,
    worker_counts: &[usize],
    reps: usize,
) -> Result<BenchReport, BenchError> {
    if worker_counts.contains(&0) {
        return Err(BenchError::InvalidParams("worker counts must be at least 1"));
    }
    let specs = worker_counts
        .iter()
        .map(|&workers| RowSpec {
            label: format!("workers={workers}"),
            config: RunConfig { workers, ..RunConfig::default() },
            memory_bytes: None,
        })
        .collect();
    run_experiment("scaling", workload, specs, reps, false)
}

/// Workers pinned to the physical core count; one row per
/// threads-per-slot value. Slot 1 leads as the baseline (inserted if
/// missing) and each other row records whether it beat slot 1 by >5%.
pub fn bench_oversubscription(
    workload: &Workload,
    threads_per_slot: &[usize],
    reps: usize,
) -> Result<BenchReport, BenchError> {
    if threads_per_slot.contains(&0) {
        return Err(BenchError::InvalidParams("threads per slot must be at least 1"));
    }
    let workers = MachineInfo::detect().physical_cores;
    let mut slots: Vec<usize> = threads_per_slot.to_vec();
    slots.sort_unstable();
    slots.dedup();
    if slots.first() != Some(&1) {
        slots.insert(0, 1);
    }
    let specs = slots
        .into_iter()
        .map(|slot| RowSpec {
            label: format!("workers={workers} slots={slot}"),
            config: RunConfig {
                workers,
                threads_per_worker_slot: slot,
                ..RunConfig::default()
            },
            memory_bytes: None,
        })
        .collect();
    run_experiment("oversubscription", workload, specs, reps, true)
}

/// One row per lookup layout, sequential engine, with the layer set's
/// lookup byte size alongside the timings.
pub fn bench_layouts(
    workload: &Workload,
    kinds: &[LayoutKind],
    reps: usize,
) -> Result<BenchReport, BenchError> {
    if kinds.is_empty() {
        return Err(BenchError::InvalidParams("layouts experiment needs at least one kind"));
    }
    let mut specs = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let mut memory = 0u64;
        for (_, layer) in workload.portfolio.layers() {
            let layer_elts: Vec<&EventLossTable> = layer
                .elt_refs
                .iter()
                .map(|&id| {
                    workload
                        .elts
                        .iter()
                        .find(|e| e.elt_id == id)
                        .expect("workload elts resolve")
                })
                .collect();
            let lookup = build_layout::<Wide>(&layer_elts, workload.yet.catalog_size, kind)
                .map_err(EngineError::from)?;
            memory += lookup.memory_footprint();
        }
        specs.push(RowSpec {
            label: format!("layout={kind}"),
            config: RunConfig { layout: kind, ..RunConfig::default() },
            memory_bytes: Some(memory),
        });
    }
    run_experiment("layouts", workload, specs, reps, false)
}

/// One row per chunk size, sequential engine.
pub fn bench_chunk_sweep(
    workload: &Workload,
    chunk_sizes: &[usize],
    reps: usize,
) -> Result<BenchReport, BenchError> {
    if chunk_sizes.contains(&0) {
        return Err(BenchError::InvalidParams("chunk sizes must be at least 1"));
    }
    let specs = chunk_sizes
        .iter()
        .map(|&chunk_size| RowSpec {
            label: format!("chunk={chunk_size}"),
            config: RunConfig { chunk_size, ..RunConfig::default() },
            memory_bytes: None,
        })
        .collect();
    run_experiment("chunks", workload, specs, reps, false)
}

// ---------------------------------------------------------------------------
// Dense-lookup latency probe
// ---------------------------------------------------------------------------

/// Latency of the direct layout at one ELT entry count.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyPoint {
    pub entry_count: u32,
    pub median_nanos: f64,
    pub min_nanos: f64,
}

/// Measures direct-layout lookup latency across ELT entry counts with the
/// identical probe sequence. Passes are interleaved round-robin across the
/// entry counts, `reps` per count after one discarded warm-up round, so
/// machine-wide drift (frequency, background load) biases every count
/// alike. Dense lookup cost must not depend on how full the table is.
pub fn bench_dense_lookup_latency(
    catalog_size: u32,
    entry_counts: &[u32],
    probes: u32,
    reps: usize,
    seed: u64,
) -> Result<Vec<LatencyPoint>, BenchError> {
    if probes == 0 || reps == 0 {
        return Err(BenchError::InvalidParams("probes and reps must be at least 1"));
    }
    // One trial's uniform event ids double as the shared probe sequence.
    let probe_spec = GenSpec::new(seed, 1, (probes, probes), catalog_size, 1);
    let probe_ids: Vec<crate::model::EventId> = generate_yet(&probe_spec)?.trials[0]
        .events
        .iter()
        .map(|ev| ev.event)
        .collect();

    let mut lookups = Vec::with_capacity(entry_counts.len());
    for &entry_count in entry_counts {
        let spec = GenSpec::new(seed, 1, (1, 1), catalog_size, entry_count);
        let elt = crate::datagen::generate_elt(&spec, 1)?;
        let lookup = build_layout::<Wide>(&[&elt], catalog_size, LayoutKind::Direct)
            .map_err(EngineError::from)?;
        lookups.push(lookup);
    }

    let mut samples = vec![Vec::with_capacity(reps); lookups.len()];
    for rep in 0..=reps {
        for (index, lookup) in lookups.iter().enumerate() {
            let start = Instant::now();
            let mut acc = 0.0f64;
            for &event in &probe_ids {
                acc += std::hint::black_box(lookup.loss(event, 0));
            }
            std::hint::black_box(acc);
            let elapsed = start.elapsed().as_nanos() as f64 / probes as f64;
            // The first round warms caches and pages and is discarded.
            if rep > 0 {
                samples[index].push(elapsed);
            }
        }
    }

    let points = entry_counts
        .iter()
        .zip(&mut samples)
        .map(|(&entry_count, nanos)| LatencyPoint {
            entry_count,
            min_nanos: nanos.iter().copied().fold(f64::INFINITY, f64::min),
            median_nanos: median(nanos),
        })
        .collect();
    Ok(points)
}
