use hep2_gss::config::{Framework, RunConfig};
use hep2_gss::pipeline::{run_loso_images, Dataset};
use hep2_gss::synth::{generate, SynthConfig};

#[test]
fn noise_free_corpus_is_separated_by_bow() {
    let (images, ds) = Dataset::from_samples(
        generate(&SynthConfig {
            noise: 0.0,
            ..SynthConfig::default()
        })
        .unwrap(),
    );
    let report = run_loso_images(&images, &ds, &RunConfig::desk_scale(Framework::Bow)).unwrap();
    assert_eq!(report.per_fold.len(), 30);
    assert_eq!(report.skipped_folds, 0);
    let m = report.mca_counts.unwrap();
    assert!(m >= 0.98, "{m}");
    let counts = report.aggregate_confusion.row_sums();
    assert!(counts.iter().all(|&c| c == 50));
}

#[test]
fn one_specimen_per_class_skips_every_fold() {
    let (images, ds) = Dataset::from_samples(
        generate(&SynthConfig {
            per_class: 3,
            specimens_per_class: 1,
            ..SynthConfig::default()
        })
        .unwrap(),
    );
    let report = run_loso_images(&images, &ds, &RunConfig::desk_scale(Framework::Lbp)).unwrap();
    assert_eq!(report.per_fold.len(), 6);
    assert_eq!(report.skipped_folds, 6);
    assert!(report.per_fold.iter().all(|f| f.skipped.is_some() && f.confusion.is_none()));
    assert_eq!(report.mca_counts, None);
}
