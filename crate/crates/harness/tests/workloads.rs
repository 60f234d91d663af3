use kanva::IndexConfig;
use kanva_harness::dataset::{generate_dataset, DatasetSpec, Source};
use kanva_harness::workload::{build_prefilled, hot_span, prefill_keys, run_workload, Preset, Stop, WorkloadSpec};

fn dataset() -> Vec<u64> {
    generate_dataset(&DatasetSpec { source: Source::uniform(), size: 50_000, seed: 9 }).unwrap()
}

#[test]
fn presets_realize_their_mix() {
    let keys = dataset();
    for preset in [Preset::ReadHeavy, Preset::UpdateHeavy, Preset::YcsbA, Preset::YcsbB, Preset::YcsbC] {
        let spec = WorkloadSpec::preset(preset, 3, 20_000, Stop::Ops(200_000), 4);
        let loaded = prefill_keys(&keys, spec.prefill, spec.seed);
        let idx = build_prefilled(&loaded, IndexConfig::default());
        let pool = if spec.updates_only { &loaded } else { &keys };
        let c = run_workload(&idx, pool, &spec).counts;
        let n = c.total() as f64;
        assert_eq!(c.total(), 200_000);
        for (got, want) in [(c.search, spec.mix.search), (c.insert, spec.mix.insert), (c.delete, spec.mix.delete)] {
            assert!((got as f64 / n - want).abs() <= 0.005, "{preset:?}: {got} vs {want}");
        }
        if spec.updates_only {
            // Updates never grow the key set, so every search hits.
            assert_eq!(c.search_hits, c.search);
        }
    }
}

#[test]
fn ranges_replace_a_fraction_of_searches() {
    let keys = dataset();
    let mut spec = WorkloadSpec::preset(Preset::YcsbC, 1, 10_000, Stop::Ops(100_000), 5);
    spec.range_frac = 0.25;
    let idx = build_prefilled(&prefill_keys(&keys, spec.prefill, spec.seed), IndexConfig::default());
    let c = run_workload(&idx, &keys, &spec).counts;
    assert!((c.range as f64 / 100_000.0 - 0.25).abs() < 0.01);
    assert_eq!(c.search + c.range, 100_000);
}

#[test]
fn duration_bounded_run_stops() {
    let keys = dataset();
    let spec = WorkloadSpec::preset(Preset::ReadHeavy, 2, 10_000, Stop::Duration(std::time::Duration::from_millis(200)), 6);
    let idx = build_prefilled(&prefill_keys(&keys, spec.prefill, spec.seed), IndexConfig::default());
    let r = run_workload(&idx, &keys, &spec);
    assert!(r.elapsed.as_secs_f64() < 2.0);
    assert!(r.counts.total() > 0 && r.mops() > 0.0);
}

#[test]
fn prefill_and_span_are_deterministic() {
    let keys = dataset();
    assert_eq!(prefill_keys(&keys, 1000, 1), prefill_keys(&keys, 1000, 1));
    assert_ne!(prefill_keys(&keys, 1000, 1), prefill_keys(&keys, 1000, 2));
    let span = hot_span(&keys, 0.01, 3);
    assert_eq!(span.len(), 500);
    assert_eq!(span, hot_span(&keys, 0.01, 3));
    assert_eq!(hot_span(&keys, 1.0, 3), &keys[..]);
}
