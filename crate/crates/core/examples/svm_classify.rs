//! Trains the one-vs-rest linear SVM on GSS-LBP vectors from four specimens
//! per class and tests on the held-out fifth.
//!
//! cargo run --release --example svm_classify

use hep2_gss::classifier::FeatureMatrix;
use hep2_gss::config::{Framework, RunConfig};
use hep2_gss::evaluation::{confusion_matrix, mca};
use hep2_gss::pipeline::{lbp_features, Dataset, TrainedClassifier};
use hep2_gss::synth::{generate, SynthConfig};

fn main() -> hep2_gss::Result<()> {
    let (images, ds) = Dataset::from_samples(generate(&SynthConfig::default())?);
    let cfg = RunConfig::desk_scale(Framework::Lbp);
    let all = lbp_features(&images, &ds, &cfg)?;

    let held_out = |i: usize| ds.specimens[i].ends_with("s4");
    let train_idx: Vec<usize> = (0..ds.len()).filter(|&i| !held_out(i)).collect();
    let test_idx: Vec<usize> = (0..ds.len()).filter(|&i| held_out(i)).collect();
    let train: FeatureMatrix = all.select(&train_idx);
    let test: FeatureMatrix = all.select(&test_idx);

    let clf = TrainedClassifier::train(&train, &cfg)?;
    let pred: Vec<usize> = clf.predict(&test)?.into_iter().map(|(p, _)| p).collect();
    let cm = confusion_matrix(test.labels(), &pred, ds.classes.len())?;

    println!("train {} rows, test {} rows, dim {}", train.rows(), test.rows(), all.dim());
    for (name, row) in ds.classes.iter().zip(cm.percentages()) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:5.1}")).collect();
        println!("{name:<17}{}", cells.join(" "));
    }
    println!("mean class accuracy {:.3}", mca(&cm)?);
    Ok(())
}
