//! Builds the Gaussian scale stack of one synthetic texture and prints level
//! statistics. Pass a directory to also write each level as a 16-bit PGM.
//!
//! cargo run --release --example scale_space -- [out_dir]

use hep2_gss::raster::{enhance, save_image, BitDepth, SampleScale};
use hep2_gss::scalespace::{build_scale_stack, truncation_radius, ScaleStackConfig};
use hep2_gss::synth::{generate, SynthConfig};

fn main() -> hep2_gss::Result<()> {
    let out = std::env::args().nth(1);
    let samples = generate(&SynthConfig {
        per_class: 1,
        specimens_per_class: 1,
        size: 70,
        ..SynthConfig::default()
    })?;
    let img = &samples[0].image;
    let stack = build_scale_stack(img, &ScaleStackConfig::default())?;

    println!("level  sigma    radius  mean      variance");
    for (l, (level, &s)) in stack.levels().iter().zip(stack.sigmas()).enumerate() {
        let r = if s == 0.0 { 0 } else { truncation_radius(s) };
        println!("{l:<6} {s:<8.4} {r:<7} {:<9.3} {:.3}", level.mean(), level.variance());
        if let Some(dir) = &out {
            std::fs::create_dir_all(dir)?;
            let path = std::path::Path::new(dir).join(format!("level_{l}.pgm"));
            save_image(&enhance(level), path, BitDepth::Sixteen, SampleScale::Unit)?;
        }
    }
    Ok(())
}
