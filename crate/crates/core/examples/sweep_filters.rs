//! MCA as a function of the number of Gaussian filters.
//!
//! cargo run --release --example sweep_filters -- [lbp|bow] [filters=0,1,7]

use hep2_gss::config::{Framework, RunConfig};
use hep2_gss::pipeline::{sweep, Dataset, SweepAxis};
use hep2_gss::synth::{generate, SynthConfig};

fn main() -> hep2_gss::Result<()> {
    let mut args = std::env::args().skip(1);
    let framework = match args.next().as_deref() {
        Some("bow") => Framework::Bow,
        _ => Framework::Lbp,
    };
    let axis = SweepAxis::parse(&args.next().unwrap_or_else(|| "filters=0..7".into()))?;

    let (images, ds) = Dataset::from_samples(generate(&SynthConfig::default())?);
    let cfg = RunConfig::desk_scale(framework);
    println!("{:<10} {:>8} {:>10}", "setting", "mca", "fold mean");
    for row in sweep(&images, &ds, &cfg, &axis)? {
        println!(
            "{:<10} {:>8.3} {:>10.3}",
            format!("{}={}", row.axis, row.setting),
            row.mca_counts.unwrap_or(f64::NAN),
            row.mca_foldmean.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
