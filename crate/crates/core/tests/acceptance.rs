//! Acceptance checks: one test per release criterion, each printing a
//! single `ACCEPTANCE Cx PASS`/`SKIP` line (visible with --nocapture).
//!
//! Timed or heavyweight criteria share a lock so they never run
//! concurrently with each other; cargo's parallel test runner would skew
//! their measurements otherwise.

use std::io::BufReader;
use std::sync::{Mutex, MutexGuard};

use aggrisk::io::{
    read_elt_csv, read_portfolio_config, read_yet, read_ylt_csv, write_elt_csv,
    write_portfolio_config, write_yet, write_ylt_csv, EltSource,
};
use aggrisk::{
    bench_dense_lookup_latency, bench_layouts, bench_oversubscription, bench_scaling,
    build_layout, exceedance_curve, generate_elt, generate_portfolio, generate_yet, oracle_analyze,
    pml, run_analysis, run_precision_comparison, tvar, var, AnalysisResult, EventLossTable,
    GenSpec, LayoutKind, MachineInfo, Precision, RunConfig, Wide, Workload, YearLossTable,
};

static BENCH_LOCK: Mutex<()> = Mutex::new(());

/// Serializes the timed criteria; a poisoned lock (an earlier criterion
/// panicked) must not mask this one's own result.
fn timed_section() -> MutexGuard<'static, ()> {
    BENCH_LOCK.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

fn assert_bitwise_equal(left: &AnalysisResult, right: &AnalysisResult, context: &str) {
    assert_eq!(left.layer_ylts.len(), right.layer_ylts.len(), "{context}: layer count");
    let left_tables = left.layer_ylts.iter().chain([&left.portfolio_ylt]);
    let right_tables = right.layer_ylts.iter().chain([&right.portfolio_ylt]);
    for (a, b) in left_tables.zip(right_tables) {
        assert_eq!(a.scope, b.scope, "{context}");
        assert_eq!(a.losses.len(), b.losses.len(), "{context}: {} rows", a.scope);
        for (&(trial_a, loss_a), &(trial_b, loss_b)) in a.losses.iter().zip(&b.losses) {
            assert_eq!(trial_a, trial_b, "{context}: {}", a.scope);
            assert_eq!(
                loss_a.to_bits(),
                loss_b.to_bits(),
                "{context}: {} trial {trial_a}: {loss_a} vs {loss_b}",
                a.scope
            );
        }
    }
}

#[test]
fn c01_engine_matches_oracle_bitwise() {
    let _guard = timed_section();
    for seed in 0..20u64 {
        let spec = GenSpec::new(1000 + seed, 1000, (100, 100), 2000, 100);
        let yet = generate_yet(&spec).unwrap();
        let (portfolio, elts) = generate_portfolio(&spec, 1, 1, 4).unwrap();
        let engine = run_analysis(&portfolio, &yet, &elts, &RunConfig::default()).unwrap();
        let oracle = oracle_analyze(&portfolio, &yet, &elts).unwrap();
        assert_bitwise_equal(&engine, &oracle, &format!("seed {seed}"));
    }
    let spec = GenSpec::new(4242, 10_000, (1000, 1000), 1024, 32);
    let yet = generate_yet(&spec).unwrap();
    let (portfolio, elts) = generate_portfolio(&spec, 1, 1, 16).unwrap();
    let engine = run_analysis(&portfolio, &yet, &elts, &RunConfig::default()).unwrap();
    let oracle = oracle_analyze(&portfolio, &yet, &elts).unwrap();
    assert_bitwise_equal(&engine, &oracle, "10k x 1000 x 16");
    println!("ACCEPTANCE C1 PASS: engine matches oracle bitwise on 21 instances");
}

#[test]
fn c02_output_invariant_across_workers_and_chunks() {
    let _guard = timed_section();
    let workload = Workload::desk(7).unwrap();
    let out_dir = tempfile::tempdir().unwrap();

    let write_run = |label: &str, config: &RunConfig| -> Vec<std::path::PathBuf> {
        let result =
            run_analysis(&workload.portfolio, &workload.yet, &workload.elts, config).unwrap();
        let mut paths = Vec::new();
        let tables = result.layer_ylts.iter().chain([&result.portfolio_ylt]);
        for (index, table) in tables.enumerate() {
            let path = out_dir.path().join(format!("{label}_ylt{index}.csv"));
            let mut file = std::fs::File::create(&path).unwrap();
            write_ylt_csv(table, &mut file).unwrap();
            paths.push(path);
        }
        paths
    };

    let baseline_config = RunConfig { workers: 1, chunk_size: 1, ..RunConfig::default() };
    let baseline = write_run("base", &baseline_config);
    let baseline_bytes: Vec<Vec<u8>> =
        baseline.iter().map(|p| std::fs::read(p).unwrap()).collect();

    let mut configs_checked = 0;
    for workers in [1, 2, 4, 8] {
        for chunk_size in [1, 64, 256, 1024] {
            let config = RunConfig { workers, chunk_size, ..RunConfig::default() };
            let label = format!("w{workers}c{chunk_size}");
            let paths = write_run(&label, &config);
            assert_eq!(paths.len(), baseline.len());
            for (path, expected) in paths.iter().zip(&baseline_bytes) {
                let bytes = std::fs::read(path).unwrap();
                assert_eq!(&bytes, expected, "{label}: {} differs", path.display());
            }
            configs_checked += 1;
        }
    }
    println!("ACCEPTANCE C2 PASS: YLT files byte-identical across {configs_checked} configs");
}

#[test]
fn c03_worked_example_is_exactly_140() {
    use aggrisk::{AggregateTerms, EltTerms, EventId, Layer, OccurrenceTerms, Portfolio, Program};
    use aggrisk::model::{Trial, TrialEvent, YearEventTable};

    let elts = vec![
        EventLossTable::new(1, vec![(EventId(1), 100.0)], EltTerms::new(10.0, 1000.0).unwrap())
            .unwrap(),
        EventLossTable::new(2, vec![(EventId(2), 200.0)], EltTerms::new(0.0, 150.0).unwrap())
            .unwrap(),
    ];
    let layer = Layer::new(
        1,
        vec![1, 2],
        OccurrenceTerms::new(20.0, 120.0).unwrap(),
        AggregateTerms::new(50.0, 200.0).unwrap(),
    )
    .unwrap();
    let portfolio = Portfolio::new(1, vec![Program::new(1, vec![layer]).unwrap()]).unwrap();
    let yet = YearEventTable::new(
        vec![Trial {
            trial_id: 1,
            events: vec![
                TrialEvent { event: EventId(1), timestamp: 0.25 },
                TrialEvent { event: EventId(2), timestamp: 0.75 },
            ],
        }],
        10,
    )
    .unwrap();

    let result = run_analysis(&portfolio, &yet, &elts, &RunConfig::default()).unwrap();
    assert_eq!(result.portfolio_ylt.losses, vec![(1, 140.0)]);
    assert_eq!(result.layer_ylts[0].losses, vec![(1, 140.0)]);
    println!("ACCEPTANCE C3 PASS: worked example yields exactly 140.0");
}

#[test]
fn c04_four_worker_speedup_on_capable_machines() {
    let _guard = timed_section();
    let machine = MachineInfo::detect();
    if machine.physical_cores < 4 {
        println!(
            "ACCEPTANCE C4 SKIP: requires >= 4 physical cores, this machine has {}",
            machine.physical_cores
        );
        return;
    }
    let workload = Workload::full_scale(7).unwrap();
    let report = bench_scaling(&workload, &[1, 2, 4], 3).unwrap();
    for pair in report.rows.windows(2) {
        assert!(
            pair[1].median_seconds <= pair[0].median_seconds * 1.10,
            "median time rose from {} ({:.3}s) to {} ({:.3}s)",
            pair[0].label,
            pair[0].median_seconds,
            pair[1].label,
            pair[1].median_seconds
        );
    }
    let four = &report.rows[2];
    assert!(
        four.speedup >= 3.0,
        "speedup at 4 workers was {:.2}, expected >= 3.0 \
         (sequential median {:.3}s, parallel median {:.3}s)",
        four.speedup,
        report.rows[0].median_seconds,
        four.median_seconds
    );
    println!(
        "ACCEPTANCE C4 PASS: 4-worker speedup {:.2} (efficiency {:.2})",
        four.speedup, four.efficiency
    );
}

#[test]
fn c05_oversubscription_gains_nothing() {
    let _guard = timed_section();
    let workload = Workload::desk(7).unwrap();
    let report = bench_oversubscription(&workload, &[2, 4], 3).unwrap();
    let winners: Vec<&str> = report
        .rows
        .iter()
        .filter(|row| row.beats_baseline == Some(true))
        .map(|row| row.label.as_str())
        .collect();
    let medians: Vec<String> = report
        .rows
        .iter()
        .map(|row| format!("{} {:.4}s", row.label, row.median_seconds))
        .collect();
    // Soft criterion: a hardware where extra threads per slot do help is
    // reported, not failed.
    if winners.is_empty() {
        println!(
            "ACCEPTANCE C5 PASS: no threads-per-slot config beat 1 by >5% ({})",
            medians.join(", ")
        );
    } else {
        println!(
            "ACCEPTANCE C5 SOFT FAIL: {} beat 1 thread/slot by >5% ({})",
            winners.join(", "),
            medians.join(", ")
        );
    }
}

#[test]
fn c06_layout_equivalence_and_flat_dense_latency() {
    let _guard = timed_section();
    let workload = Workload::desk(7).unwrap();
    let report = bench_layouts(&workload, &LayoutKind::ALL, 3).unwrap();
    let baseline = report.rows[0].checksum;
    for row in &report.rows {
        assert_eq!(row.checksum, baseline, "{} diverged", row.label);
    }

    let points = bench_dense_lookup_latency(1_000_000, &[1_000, 10_000, 100_000], 2_000_000, 11, 7)
        .unwrap();
    let fastest = points.iter().map(|p| p.min_nanos).fold(f64::INFINITY, f64::min);
    let slowest = points.iter().map(|p| p.min_nanos).fold(0.0, f64::max);
    let variation = (slowest - fastest) / fastest;
    let summary: Vec<String> = points
        .iter()
        .map(|p| format!("{} entries: {:.2}ns", p.entry_count, p.min_nanos))
        .collect();
    assert!(
        variation <= 0.10,
        "dense lookup latency varied {:.1}% across entry counts ({})",
        variation * 100.0,
        summary.join(", ")
    );
    println!(
        "ACCEPTANCE C6 PASS: 4 layouts checksum-equal; dense latency varies {:.1}% ({})",
        variation * 100.0,
        summary.join(", ")
    );
}

#[test]
fn c07_memory_accounting_is_exact() {
    let _guard = timed_section();
    let spec = GenSpec::new(11, 1, (1, 1), 1_000_000, 10_000);
    {
        let elts: Vec<EventLossTable> =
            (1..=16).map(|id| generate_elt(&spec, id).unwrap()).collect();
        let refs: Vec<&EventLossTable> = elts.iter().collect();
        let wide = build_layout::<Wide>(&refs, spec.catalog_size, LayoutKind::Direct).unwrap();
        assert_eq!(wide.memory_footprint(), 16 * 1_000_001 * 8);
        let narrow =
            build_layout::<aggrisk::Narrow>(&refs, spec.catalog_size, LayoutKind::Direct).unwrap();
        assert_eq!(narrow.memory_footprint(), 16 * 1_000_001 * 4);
    }
    let elts: Vec<EventLossTable> = (1..=15).map(|id| generate_elt(&spec, id).unwrap()).collect();
    let refs: Vec<&EventLossTable> = elts.iter().collect();
    let lookup = build_layout::<Wide>(&refs, spec.catalog_size, LayoutKind::Direct).unwrap();
    assert_eq!(lookup.zero_entries(), 14_850_000);
    println!(
        "ACCEPTANCE C7 PASS: direct footprint 16 x 1,000,001 x element size; \
         15-ELT zero count 14,850,000"
    );
}

/// First measurement on the desk workload was 3.83e-7; the computation is
/// seeded and deterministic, so any growth past this pin is a regression.
/// The release criterion itself is the looser 1e-3.
const PINNED_MAX_REL_DIFF: f64 = 5e-7;

#[test]
fn c08_narrow_precision_stays_within_tolerance() {
    let _guard = timed_section();
    let workload = Workload::desk(7).unwrap();
    let comparison = run_precision_comparison(
        &workload.portfolio,
        &workload.yet,
        &workload.elts,
        &RunConfig::default(),
    )
    .unwrap();
    assert!(
        comparison.max_relative_diff <= 1e-3,
        "narrow YLT deviates {} from wide",
        comparison.max_relative_diff
    );
    assert!(
        comparison.max_relative_diff <= PINNED_MAX_REL_DIFF,
        "narrow deviation {} regressed past the pinned bound {PINNED_MAX_REL_DIFF}",
        comparison.max_relative_diff
    );

    let wide_ylt = &comparison.wide.portfolio_ylt;
    let narrow_ylt = comparison.narrow.portfolio_ylt.to_wide();
    let relative = |a: f64, b: f64| (a - b).abs() / a.abs().max(1.0);
    let mut worst_metric_diff = 0.0f64;
    for rp in [2.0, 5.0, 10.0, 25.0, 100.0] {
        let diff = relative(pml(wide_ylt, rp).unwrap(), pml(&narrow_ylt, rp).unwrap());
        worst_metric_diff = worst_metric_diff.max(diff);
    }
    for alpha in [0.9, 0.99, 0.999] {
        let diff = relative(tvar(wide_ylt, alpha).unwrap(), tvar(&narrow_ylt, alpha).unwrap());
        worst_metric_diff = worst_metric_diff.max(diff);
    }
    assert!(worst_metric_diff <= 1e-3, "PML/TVaR diverge by {worst_metric_diff}");
    println!(
        "ACCEPTANCE C8 PASS: narrow YLT within {:.2e} of wide, metrics within {:.2e}",
        comparison.max_relative_diff, worst_metric_diff
    );
}

/// Splitmix-style generator, deliberately unrelated to the library's RNG.
struct TestRng(u64);

impl TestRng {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    fn loss(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64 * 1.0e6
    }
}

fn sorted_losses(ylt: &YearLossTable<Wide>) -> Vec<f64> {
    let mut losses: Vec<f64> = ylt.losses.iter().map(|&(_, loss)| loss).collect();
    losses.sort_by(|a, b| a.partial_cmp(b).unwrap());
    losses
}

#[test]
fn c09_metrics_match_sort_and_count_oracles() {
    use aggrisk::model::YltScope;

    let _guard = timed_section();
    let mut rng = TestRng(0x5EED);
    for case in 0..100u64 {
        let n = match case {
            0 => 1,
            99 => 10_000,
            _ => 1 + (rng.next() % 10_000) as usize,
        };
        let ylt = YearLossTable::<Wide> {
            scope: YltScope::PortfolioTotal,
            losses: (0..n).map(|i| (i as u64 + 1, rng.loss())).collect(),
        };
        let sorted = sorted_losses(&ylt);

        // Exceedance: probability that a loss is >= each distinct value.
        let curve = exceedance_curve(&ylt).unwrap();
        let mut expected = Vec::new();
        for &value in &sorted {
            if expected.last().map(|&(v, _)| v) != Some(value) {
                let at_least = sorted.iter().filter(|&&l| l >= value).count();
                expected.push((value, at_least as f64 / n as f64));
            }
        }
        assert_eq!(curve.points, expected, "case {case} curve");
        assert!(
            curve.points.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 > w[1].1),
            "case {case}: curve must rise in loss and fall in probability"
        );

        let mut previous_pml = f64::NEG_INFINITY;
        for rp in [2.0, 5.0, 10.0, 20.0, 100.0, 1000.0, 10_000.0] {
            if rp > n as f64 {
                continue;
            }
            let rank = (n as f64 / rp).ceil() as usize;
            let expected_pml = sorted[n - rank];
            let got = pml(&ylt, rp).unwrap();
            assert_eq!(got, expected_pml, "case {case} pml rp={rp}");
            assert!(got >= previous_pml, "case {case}: PML fell as rp rose");
            previous_pml = got;
        }

        for alpha in [0.5, 0.9, 0.95, 0.99, 0.999] {
            let rank = ((alpha * n as f64).ceil() as usize).max(1);
            let expected_var = sorted[rank - 1];
            let got_var = var(&ylt, alpha).unwrap();
            assert_eq!(got_var, expected_var, "case {case} var alpha={alpha}");

            let tail = ((1.0 - alpha) * n as f64).ceil() as usize;
            let expected_tvar = sorted[n - tail..].iter().sum::<f64>() / tail as f64;
            let got_tvar = tvar(&ylt, alpha).unwrap();
            assert_eq!(got_tvar, expected_tvar, "case {case} tvar alpha={alpha}");
            assert!(got_tvar >= got_var, "case {case}: TVaR below VaR");
        }
    }
    println!("ACCEPTANCE C9 PASS: metrics match oracles on 100 tables, invariants hold");
}

#[test]
fn c10_formats_round_trip() {
    let _guard = timed_section();
    for seed in 0..50u64 {
        let spec = GenSpec::new(
            seed,
            20 + seed % 30,
            (1, 6),
            300 + (seed % 7) as u32 * 50,
            30,
        );
        let yet = generate_yet(&spec).unwrap();
        let programs = 1 + (seed % 2) as u32;
        let (portfolio, elts) = generate_portfolio(&spec, programs, 1 + (seed % 2) as u32, 3)
            .unwrap();

        let mut yet_bytes = Vec::new();
        write_yet(&yet, &mut yet_bytes).unwrap();
        let read_back = read_yet(&mut yet_bytes.as_slice()).unwrap();
        assert_eq!(read_back, yet, "seed {seed}: YET binary");

        for elt in &elts {
            let mut csv = Vec::new();
            write_elt_csv(elt, &mut csv).unwrap();
            let parsed =
                read_elt_csv(&mut BufReader::new(csv.as_slice()), elt.elt_id, elt.terms)
                    .unwrap();
            assert_eq!(&parsed, elt, "seed {seed}: ELT {} csv", elt.elt_id);
        }

        let result = run_analysis(&portfolio, &yet, &elts, &RunConfig::default()).unwrap();
        for table in result.layer_ylts.iter().chain([&result.portfolio_ylt]) {
            let mut csv = Vec::new();
            write_ylt_csv(table, &mut csv).unwrap();
            let parsed =
                read_ylt_csv(&mut BufReader::new(csv.as_slice()), table.scope).unwrap();
            assert_eq!(&parsed, table, "seed {seed}: YLT csv {}", table.scope);
        }
        let narrow_config = RunConfig { precision: Precision::Narrow, ..RunConfig::default() };
        let narrow = run_analysis(&portfolio, &yet, &elts, &narrow_config).unwrap();
        let mut csv = Vec::new();
        write_ylt_csv(&narrow.portfolio_ylt, &mut csv).unwrap();
        let parsed =
            read_ylt_csv(&mut BufReader::new(csv.as_slice()), narrow.portfolio_ylt.scope)
                .unwrap();
        assert_eq!(&parsed, &narrow.portfolio_ylt, "seed {seed}: narrow YLT csv");

        let sources: Vec<EltSource> = elts
            .iter()
            .map(|elt| EltSource {
                elt_id: elt.elt_id,
                path: format!("elt_{}.csv", elt.elt_id),
                terms: elt.terms,
            })
            .collect();
        let toml_text = write_portfolio_config(&portfolio, &sources).unwrap();
        let config = read_portfolio_config(&toml_text).unwrap();
        assert_eq!(config.portfolio, portfolio, "seed {seed}: portfolio toml");
        assert_eq!(config.elt_sources.len(), sources.len(), "seed {seed}: source count");
        for (parsed, original) in config.elt_sources.iter().zip(&sources) {
            assert_eq!(parsed.elt_id, original.elt_id, "seed {seed}");
            assert_eq!(parsed.path, original.path, "seed {seed}");
            assert_eq!(parsed.terms, original.terms, "seed {seed}");
        }
    }
    println!("ACCEPTANCE C10 PASS: 50 seeded instances round-trip through every format");
}
