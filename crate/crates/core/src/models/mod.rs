//! U-Net generator and PatchGAN discriminator built on the autograd graph.

mod discriminator;
mod generator;

use std::io::Read;
use std::path::{Path, PathBuf};

pub use discriminator::{build_discriminator, build_discriminator_with, DiscriminatorConfig, PatchDiscriminator};
pub use generator::{build_generator, dependency_span, receptive_field, GeneratorConfig, UNetGenerator};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{read_checkpoint, write_checkpoint, ParamSet, Parameter};
use crate::error::{Error, Result};
use crate::tensor::Shape;

/// Per-parameter RNG stream so that a parameter's initial value depends
/// only on the seed and its name. Pruned variants therefore share the
/// initialization of every parameter they have in common.
fn init_rng(seed: u64, name: &str) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(h);
    rng
}

pub(crate) const INIT_STD: f32 = 0.02;

pub(crate) fn push_weight(params: &mut ParamSet, seed: u64, name: String, shape: Shape) -> usize {
    let mut rng = init_rng(seed, &name);
    params.push(name, Parameter::gaussian(shape, INIT_STD, &mut rng))
}

pub(crate) fn push_bias(params: &mut ParamSet, name: String, channels: usize) -> usize {
    params.push(name, Parameter::zeros([1, channels, 1, 1]))
}

/// Overwrites parameter values from checkpoint entries, matching by name
/// and requiring identical shapes. Every parameter must be present.
pub fn load_params(params: &mut ParamSet, entries: Vec<(String, crate::Tensor)>) -> Result<()> {
    let mut by_name: std::collections::HashMap<String, crate::Tensor> = entries.into_iter().collect();
    for (name, p) in params.iter_mut() {
        let t = by_name
            .remove(name)
            .ok_or_else(|| Error::parse("checkpoint", format!("missing parameter {name}")))?;
        if t.shape() != p.value.shape() {
            return Err(Error::parse(
                "checkpoint",
                format!("{name}: shape {} does not match model {}", t.shape(), p.value.shape()),
            ));
        }
        p.value = t;
    }
    if let Some(extra) = by_name.keys().next() {
        return Err(Error::parse("checkpoint", format!("unexpected parameter {extra}")));
    }
    Ok(())
}

/// Path of the architecture manifest stored next to a weights file.
pub fn manifest_path(weights: &Path) -> PathBuf {
    weights.with_extension("arch")
}

pub(crate) fn save_params(params: &ParamSet, manifest: &str, weights: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, params.iter().map(|(n, p)| (n, &p.value)))?;
    std::fs::write(weights, buf)?;
    std::fs::write(manifest_path(weights), manifest)?;
    Ok(())
}

pub(crate) fn read_weights(weights: &Path) -> Result<Vec<(String, crate::Tensor)>> {
    let mut bytes = Vec::new();
    std::fs::File::open(weights)?.read_to_end(&mut bytes)?;
    read_checkpoint(bytes.as_slice())
}
