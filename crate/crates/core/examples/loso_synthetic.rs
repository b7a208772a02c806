//! Leave-one-specimen-out evaluation on the synthetic corpus.
//!
//! cargo run --release --example loso_synthetic -- [lbp|bow] [noise]

use hep2_gss::config::{Framework, RunConfig};
use hep2_gss::pipeline::{run_loso_images, Dataset};
use hep2_gss::synth::{generate, SynthConfig};

fn main() -> hep2_gss::Result<()> {
    let mut args = std::env::args().skip(1);
    let framework = match args.next().as_deref() {
        Some("bow") => Framework::Bow,
        _ => Framework::Lbp,
    };
    let noise = args.next().and_then(|s| s.parse().ok()).unwrap_or(1.0);

    let (images, ds) = Dataset::from_samples(generate(&SynthConfig {
        noise,
        ..SynthConfig::default()
    })?);
    let cfg = RunConfig::desk_scale(framework);
    let t = std::time::Instant::now();
    let report = run_loso_images(&images, &ds, &cfg)?;

    println!("{framework}, noise {noise}, {} folds in {:?}", report.per_fold.len(), t.elapsed());
    for f in &report.per_fold {
        println!("  {:<6} test {:>3}  mca {:?}", f.specimen, f.test_rows, f.mca);
    }
    for (name, row) in report.classes.iter().zip(report.aggregate_confusion.percentages()) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:5.1}")).collect();
        println!("{name:<17}{}", cells.join(" "));
    }
    println!("mca {:?}, fold mean {:?}", report.mca_counts, report.mca_foldmean);
    Ok(())
}
