use whfemd::features::{extract_matrix, read_feature_csv, write_feature_csv, FeatureSet, PipelineConfig, Standardize};
use whfemd::learn::{evaluate, predict, stratified_split, train_forest, TrainedModel};
use whfemd::signal_io::load_manifest;
use whfemd::synth::{synth_corpus, ClassTemplate};

fn close_templates() -> [ClassTemplate; 2] {
    let mut mild = ClassTemplate::typical();
    mild.label = "mild".into();
    mild.spec.jitter = 0.02;
    mild.spec.shimmer = 0.06;
    mild.spec.noise_snr_db = Some(24.0);
    [ClassTemplate::typical(), mild]
}

#[test]
fn worker_count_does_not_change_the_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let templates = [ClassTemplate::typical(), ClassTemplate::disordered()];
    synth_corpus(4, &templates, dir.path(), 1).unwrap();
    let manifest = load_manifest(dir.path().join("manifest.csv")).unwrap();
    let cfg = PipelineConfig::default();
    let one = extract_matrix(&manifest, FeatureSet::Wh2fepsd, &cfg, &Standardize::Corpus, Some(1)).unwrap();
    let four = extract_matrix(&manifest, FeatureSet::Wh2fepsd, &cfg, &Standardize::Corpus, Some(4)).unwrap();
    assert_eq!(one, four);
    assert_eq!(one.failures(), 0);
    let paths: Vec<&str> = manifest.entries().iter().map(|e| e.path.as_str()).collect();
    assert_eq!(one.dataset.source_ids, paths);
}

#[test]
fn feature_csv_and_model_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    synth_corpus(6, &close_templates(), dir.path().join("c"), 2).unwrap();
    let manifest = load_manifest(dir.path().join("c/manifest.csv")).unwrap();
    let mx = extract_matrix(
        &manifest,
        FeatureSet::Whfesf,
        &PipelineConfig::default(),
        &Standardize::Corpus,
        None,
    )
    .unwrap();
    let csv = dir.path().join("f.csv");
    write_feature_csv(&mx.dataset, &csv).unwrap();
    let back = read_feature_csv(&csv).unwrap();
    assert_eq!(back.rows, mx.dataset.rows);
    assert_eq!(back.label_set, mx.dataset.label_set);

    let model = train_forest(&back, 15, None, 4).unwrap();
    let path = dir.path().join("m.json");
    model.save(&path).unwrap();
    let loaded = TrainedModel::load(&path).unwrap();
    assert_eq!(
        predict(&loaded, &back.rows).unwrap(),
        predict(&model, &back.rows).unwrap()
    );
}

#[test]
fn larger_forests_are_more_stable_across_seeds() {
    let dir = tempfile::tempdir().unwrap();
    synth_corpus(30, &close_templates(), dir.path(), 5).unwrap();
    let manifest = load_manifest(dir.path().join("manifest.csv")).unwrap();
    let mx = extract_matrix(
        &manifest,
        FeatureSet::Whfesf,
        &PipelineConfig::default(),
        &Standardize::Corpus,
        None,
    )
    .unwrap();
    let (tr, te) = stratified_split(&mx.dataset, 0.7, 0).unwrap();
    let variance = |n_trees: usize| {
        let accs: Vec<f64> = (0..10)
            .map(|seed| {
                let m = train_forest(&tr, n_trees, None, seed).unwrap();
                evaluate(&m, &te).unwrap().accuracy.unwrap()
            })
            .collect();
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (accs.len() as f64 - 1.0)
    };
    let (v1, v100) = (variance(1), variance(100));
    assert!(v100 < v1, "1 tree {v1:.5}, 100 trees {v100:.5}");
}
