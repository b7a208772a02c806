//! Rotation-invariant uniform LBP histograms at three scales, and the
//! concatenated representation over a scale stack.
//!
//! cargo run --release --example lbp_histogram

use hep2_gss::lbp::{gss_lbp_representation, lbp_histogram, LbpConfig};
use hep2_gss::scalespace::{build_scale_stack, ScaleStackConfig};
use hep2_gss::synth::{generate, SynthConfig};

fn main() -> hep2_gss::Result<()> {
    let samples = generate(&SynthConfig {
        per_class: 1,
        specimens_per_class: 1,
        noise: 0.2,
        ..SynthConfig::default()
    })?;
    let cfg = LbpConfig::default();

    for s in &samples {
        let h = lbp_histogram(&s.image, &cfg)?;
        println!("{}:", s.label);
        for (scale, block) in cfg.scales.iter().zip(h.blocks()) {
            let bins: Vec<String> = block.iter().map(|v| format!("{v:.2}")).collect();
            println!("  P={:<2} R={} [{}]", scale.neighbors, scale.radius, bins.join(" "));
        }
    }

    let stack = build_scale_stack(&samples[0].image, &ScaleStackConfig::default())?;
    let v = gss_lbp_representation(&stack, &cfg)?;
    println!("stack of {} levels -> vector of {} values", stack.len(), v.len());
    Ok(())
}
