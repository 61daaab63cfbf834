use icabench_core::decompositions::{amari_index, Algorithm, PicardParams};
use icabench_core::harness::{BenchConfig, DatasetSource, Metric};
use icabench_core::signals::{DataFormat, Mixing, SourceKind};
use icabench_core::{load_dataset, mir, remnant_pmi, run_benchmark, save_dataset, synth_dataset, Binning, SynthSpec};

fn spec(seed: u64) -> SynthSpec {
    SynthSpec::new(5, 20_000, SourceKind::Laplacian, seed).with_mixing(Mixing::RandomGeneral)
}

#[test]
fn saved_recording_and_exported_unmixing_reproduce_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (ds, truth) = synth_dataset(&spec(1)).unwrap();
    let path = dir.path().join("rec.bin");
    save_dataset(&ds, &path, DataFormat::Binary).unwrap();
    let loaded = load_dataset(&path, DataFormat::Binary).unwrap();
    assert_eq!(loaded.data(), ds.data());

    let dec = Algorithm::Picard(PicardParams::default()).run(&ds).unwrap();
    assert!(amari_index(&dec.w, &truth.mixing).unwrap() < 0.05);
    let w_path = dir.path().join("w.csv");
    dec.export_unmixing(&w_path).unwrap();
    let imported = Algorithm::Import { path: w_path.to_string_lossy().into_owned() }.run(&loaded).unwrap();
    assert_eq!(imported.w, dec.w);

    let binning = Binning::default();
    let direct = mir(&ds, &dec.w, binning).unwrap();
    let again = mir(&loaded, &imported.w, binning).unwrap();
    assert_eq!(direct.mir_bits_per_sample, again.mir_bits_per_sample);
    let remnant = remnant_pmi(&ds, &dec.w, binning).unwrap();
    assert!(remnant.percent > 0.0 && remnant.percent < 100.0);
}

#[test]
fn benchmark_report_round_trips_and_summarizes_cells() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = BenchConfig::new(
        vec![DatasetSource::Synth(spec(2)), DatasetSource::Synth(spec(3))],
        vec![Algorithm::Pca { k: None }, Algorithm::Picard(PicardParams::default())],
    );
    cfg.metrics = [Metric::Mir].into_iter().collect();
    cfg.output_dir = Some(dir.path().to_path_buf());
    let report = run_benchmark(&cfg).unwrap();
    assert_eq!(report.n_errors, 0);
    let saved = icabench_core::harness::BenchReport::load(&icabench_core::harness::report_path(dir.path())).unwrap();
    assert_eq!(saved, report);
    for s in &report.summary {
        let values: Vec<f64> = report.cells_of(&s.algorithm).map(|c| c.mir().unwrap().mir_bits_per_sample).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        assert!((s.mir_bits_per_sample.unwrap().mean - mean).abs() < 1e-12);
    }
    let picard = report.summary_of("picard").unwrap().mir_bits_per_sample.unwrap().mean;
    let pca = report.summary_of("pca").unwrap().mir_bits_per_sample.unwrap().mean;
    assert!(picard > pca);
}
