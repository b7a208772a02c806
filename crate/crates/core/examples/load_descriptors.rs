//! Dense LOAD descriptors over every level of a scale stack.
//!
//! cargo run --release --example load_descriptors

use hep2_gss::load::{dense_sample, estimate_orientation, extract_all, SamplingGrid, LOAD_DIM};
use hep2_gss::scalespace::{build_scale_stack, ScaleStackConfig};
use hep2_gss::synth::{generate, SynthConfig};

fn main() -> hep2_gss::Result<()> {
    let samples = generate(&SynthConfig {
        per_class: 1,
        specimens_per_class: 1,
        size: 70,
        ..SynthConfig::default()
    })?;
    let img = &samples[0].image;
    let grid = SamplingGrid::default();
    let stack = build_scale_stack(img, &ScaleStackConfig::default())?;

    let centers = dense_sample(img, &grid);
    println!("{} centers per level, {} levels", centers.len(), stack.len());
    let (cx, cy) = centers[centers.len() / 2];
    println!(
        "orientation at ({cx}, {cy}): {:.3} rad",
        estimate_orientation(img, cx, cy, grid.radius)?
    );

    let t = std::time::Instant::now();
    let set = extract_all(&stack, &grid)?;
    println!("{} descriptors of dimension {} in {:?}", set.len(), set.dim(), t.elapsed());
    assert_eq!(set.dim(), LOAD_DIM);

    let first = set.row(0);
    let mass: f32 = first.iter().sum();
    let origin = set.provenance()[0];
    println!("first descriptor from level {} at ({}, {}), total mass {mass:.3}", origin.level, origin.x, origin.y);
    Ok(())
}
