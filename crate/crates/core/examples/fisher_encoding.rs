//! Fits PCA and a diagonal GMM on pooled LOAD descriptors, then encodes each
//! image as a Fisher vector.
//!
//! cargo run --release --example fisher_encoding

use hep2_gss::config::{Framework, RunConfig};
use hep2_gss::encoding::EncoderModel;
use hep2_gss::load::DescriptorSet;
use hep2_gss::pipeline::descriptor_sets;
use hep2_gss::synth::{generate, SynthConfig};

fn main() -> hep2_gss::Result<()> {
    let samples = generate(&SynthConfig {
        per_class: 4,
        specimens_per_class: 2,
        ..SynthConfig::default()
    })?;
    let images: Vec<_> = samples.iter().map(|s| s.image.clone()).collect();
    let cfg = RunConfig::desk_scale(Framework::Bow);

    let sets = descriptor_sets(&images, &cfg)?;
    let refs: Vec<&DescriptorSet> = sets.iter().collect();
    let total: usize = sets.iter().map(DescriptorSet::len).sum();
    println!("{} images, {total} descriptors", sets.len());

    let enc = EncoderModel::fit(&refs, &cfg.encode, cfg.seed)?;
    let pca = enc.pca();
    let kept: f64 = pca.eigenvalues().iter().sum();
    println!("PCA {} -> {}, eigenvalue sum {kept:.4}", pca.in_dim(), pca.out_dim());
    println!("GMM weights: {:?}", enc.gmms()[0].weights().iter().map(|w| (w * 1000.0).round() / 1000.0).collect::<Vec<_>>());

    for (s, set) in samples.iter().zip(&sets).step_by(4) {
        let fv = enc.encode(set)?;
        let nz = fv.values.iter().filter(|v| **v != 0.0).count();
        println!("{:<17} length {} norm {:.6} nonzero {nz}", s.label, fv.len(), fv.norm());
    }
    Ok(())
}
