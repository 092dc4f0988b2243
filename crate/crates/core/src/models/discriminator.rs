use std::path::Path;

use super::{load_params, manifest_path, push_bias, push_weight, read_weights, save_params};
use crate::autograd::{ConvSpec, Graph, ParamSet, Var};
use crate::error::{Error, Result};
use crate::kv;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorConfig {
    pub rgb_channels: usize,
    pub hs_channels: usize,
    /// Width of the first block; each further block doubles it.
    pub base_filters: usize,
    pub blocks: usize,
    pub leaky_slope: f32,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            rgb_channels: 3,
            hs_channels: 31,
            base_filters: 64,
            blocks: 4,
            leaky_slope: 0.2,
        }
    }
}

impl DiscriminatorConfig {
    pub fn in_channels(&self) -> usize {
        self.rgb_channels + self.hs_channels
    }

    pub fn widths(&self) -> Vec<usize> {
        (0..self.blocks).map(|i| self.base_filters << i).collect()
    }

    /// Side of the realism map for a square input of side `n`.
    pub fn output_size(&self, n: usize) -> usize {
        // Each 3x3 stride-2 layer with padding 1 maps n to ceil(n / 2).
        (0..=self.blocks).fold(n, |n, _| n.div_ceil(2))
    }

    pub fn validate(&self) -> Result<()> {
        if self.rgb_channels == 0 || self.hs_channels == 0 || self.base_filters == 0 || self.blocks == 0 {
            return Err(Error::Config(
                "discriminator widths and block count must be positive".into(),
            ));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::Config(format!(
                "leaky_slope {} outside (0, 1)",
                self.leaky_slope
            )));
        }
        Ok(())
    }

    pub fn to_manifest(&self) -> String {
        format!(
            "kind=discriminator\nrgb_channels={}\nhs_channels={}\nbase_filters={}\nblocks={}\nleaky_slope={}\n",
            self.rgb_channels, self.hs_channels, self.base_filters, self.blocks, self.leaky_slope
        )
    }

    /// Applies one setting; `false` for unknown keys.
    pub fn set(&mut self, key: &str, v: &str) -> Result<bool> {
        match key {
            "rgb_channels" => self.rgb_channels = kv::value(key, v)?,
            "hs_channels" => self.hs_channels = kv::value(key, v)?,
            "base_filters" => self.base_filters = kv::value(key, v)?,
            "blocks" => self.blocks = kv::value(key, v)?,
            "leaky_slope" => self.leaky_slope = kv::value(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn from_manifest(text: &str) -> Result<Self> {
        let mut c = DiscriminatorConfig::default();
        let mut kind = None;
        for (k, v) in kv::parse(text)? {
            if k == "kind" {
                kind = Some(v);
            } else if !c.set(&k, &v)? {
                return Err(Error::Config(format!("unknown discriminator manifest key {k:?}")));
            }
        }
        if kind.as_deref() != Some("discriminator") {
            return Err(Error::Config(format!("manifest kind {kind:?}, expected discriminator")));
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone)]
pub struct PatchDiscriminator {
    config: DiscriminatorConfig,
    params: ParamSet,
    /// `(weight, bias, spec)`; the last layer is the sigmoid head.
    layers: Vec<(usize, usize, ConvSpec)>,
}

pub fn build_discriminator(seed: u64) -> PatchDiscriminator {
    build_discriminator_with(&DiscriminatorConfig::default(), seed).expect("default config is valid")
}

pub fn build_discriminator_with(config: &DiscriminatorConfig, seed: u64) -> Result<PatchDiscriminator> {
    config.validate()?;
    let mut params = ParamSet::new();
    let mut layers = Vec::new();
    let mut cin = config.in_channels();
    let widths = config.widths();
    for (i, &cout) in widths.iter().chain(std::iter::once(&1)).enumerate() {
        let spec = ConvSpec::new(cin, cout, 3, 2, 1);
        let w = push_weight(
            &mut params,
            seed,
            format!("disc{}.weight", i + 1),
            spec.conv_weight_shape(),
        );
        let b = push_bias(&mut params, format!("disc{}.bias", i + 1), cout);
        layers.push((w, b, spec));
        cin = cout;
    }
    Ok(PatchDiscriminator {
        config: config.clone(),
        params,
        layers,
    })
}

impl PatchDiscriminator {
    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// Realism map in (0, 1) for an aligned `(rgb, hs)` pair.
    pub fn forward(&self, graph: &mut Graph, vars: &[Var], rgb: Var, hs: Var) -> Result<Var> {
        if vars.len() != self.params.len() {
            return Err(Error::Contract(format!(
                "discriminator forward: {} handles for {} parameters",
                vars.len(),
                self.params.len()
            )));
        }
        for (v, axis, expected) in [
            (rgb, "rgb channels", self.config.rgb_channels),
            (hs, "hs channels", self.config.hs_channels),
        ] {
            let found = graph.value(v).shape().channels;
            if found != expected {
                return Err(Error::Dimension {
                    op: "discriminator_forward",
                    axis,
                    expected,
                    found,
                });
            }
        }
        let mut x = graph.concat_channels(rgb, hs)?;
        let last = self.layers.len() - 1;
        for (i, &(w, b, spec)) in self.layers.iter().enumerate() {
            x = graph.conv2d(x, vars[w], Some(vars[b]), &spec)?;
            x = if i < last {
                graph.leaky_relu(x, self.config.leaky_slope)?
            } else {
                graph.sigmoid(x)
            };
        }
        Ok(x)
    }

    pub fn save(&self, weights: impl AsRef<Path>) -> Result<()> {
        save_params(&self.params, &self.config.to_manifest(), weights.as_ref())
    }

    pub fn load(weights: impl AsRef<Path>) -> Result<Self> {
        let weights = weights.as_ref();
        let config = DiscriminatorConfig::from_manifest(&std::fs::read_to_string(manifest_path(weights))?)?;
        let mut d = build_discriminator_with(&config, 0)?;
        load_params(&mut d.params, read_weights(weights)?)?;
        Ok(d)
    }
}
