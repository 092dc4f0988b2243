use std::path::Path;

use rand::Rng;

use super::{load_params, manifest_path, push_bias, push_weight, read_weights, save_params};
use crate::autograd::{ConvSpec, Graph, ParamSet, Var};
use crate::error::{Error, Result};
use crate::kv;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub input_size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub base_filters: usize,
    pub filter_cap: usize,
    pub depth: usize,
    pub dropout_rate: f32,
    pub leaky_slope: f32,
    /// `skip_mask[m]` feeds level `m` (size `input_size / 2^m`; level 0 is
    /// the raw input) into the decoder.
    pub skip_mask: Vec<bool>,
    /// The 1x1 bottleneck path through every level.
    pub main_branch_enabled: bool,
    /// Transposed-convolution kernel of the decoder (stride 2).
    pub decoder_kernel: usize,
    /// Width of the first of the two closing 1x1 convolutions.
    pub final_hidden: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig::full(256)
    }
}

impl GeneratorConfig {
    /// Every skip and the main branch enabled.
    pub fn full(input_size: usize) -> Self {
        let depth = input_size.max(1).trailing_zeros() as usize;
        GeneratorConfig {
            input_size,
            in_channels: 3,
            out_channels: 31,
            base_filters: 64,
            filter_cap: 512,
            depth,
            dropout_rate: 0.1,
            leaky_slope: 0.2,
            skip_mask: vec![true; depth],
            main_branch_enabled: true,
            decoder_kernel: 2,
            final_hidden: 64,
        }
    }

    /// The `k` shallowest skips only, main branch off.
    pub fn with_skips(input_size: usize, k: usize) -> Self {
        let mut c = GeneratorConfig::full(input_size);
        c.skip_mask = (0..c.depth).map(|m| m < k).collect();
        c.main_branch_enabled = false;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !self.input_size.is_power_of_two() || self.input_size < 2 {
            return fail(format!("input_size {} is not a power of two >= 2", self.input_size));
        }
        if 1usize << self.depth != self.input_size {
            return fail(format!(
                "depth {} does not reduce input_size {} to 1x1",
                self.depth, self.input_size
            ));
        }
        if self.skip_mask.len() != self.depth {
            return fail(format!(
                "skip_mask has {} entries, depth is {}",
                self.skip_mask.len(),
                self.depth
            ));
        }
        if !self.main_branch_enabled && !self.skip_mask.iter().any(|&s| s) {
            return fail("no skip and no main branch: nothing reaches the output".into());
        }
        for (name, v) in [
            ("in_channels", self.in_channels),
            ("out_channels", self.out_channels),
            ("base_filters", self.base_filters),
            ("filter_cap", self.filter_cap),
            ("final_hidden", self.final_hidden),
        ] {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        if self.decoder_kernel < 2 {
            return fail(format!("decoder_kernel {} must be at least 2", self.decoder_kernel));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return fail(format!("leaky_slope {} outside (0, 1)", self.leaky_slope));
        }
        Ok(())
    }

    /// Whether the enabled skips are a prefix of the levels.
    pub fn is_contiguous(&self) -> bool {
        let k = self.skip_mask.iter().take_while(|&&s| s).count();
        self.skip_mask[k..].iter().all(|&s| !s) && (!self.main_branch_enabled || k == self.depth)
    }

    pub fn level_enabled(&self, m: usize) -> bool {
        if m < self.depth {
            self.skip_mask[m]
        } else {
            m == self.depth && self.main_branch_enabled
        }
    }

    /// Deepest level that reaches the decoder.
    pub fn deepest_level(&self) -> usize {
        (0..=self.depth).rev().find(|&m| self.level_enabled(m)).unwrap_or(0)
    }

    /// Encoder output width at level `m >= 1`; level 0 is the input.
    pub fn encoder_channels(&self, m: usize) -> usize {
        if m == 0 {
            self.in_channels
        } else {
            (self.base_filters << (m - 1).min(31)).min(self.filter_cap)
        }
    }

    /// Decoder output width at level `m < depth`.
    pub fn decoder_channels(&self, m: usize) -> usize {
        if m == 0 {
            self.base_filters
        } else {
            self.encoder_channels(m)
        }
    }

    /// Encoder widths for levels `1..=depth` of the unpruned network.
    pub fn encoder_widths(&self) -> Vec<usize> {
        (1..=self.depth).map(|m| self.encoder_channels(m)).collect()
    }

    pub fn decoder_spec(&self, cin: usize, cout: usize) -> ConvSpec {
        let k = self.decoder_kernel;
        if k.is_multiple_of(2) {
            ConvSpec::new(cin, cout, k, 2, (k - 2) / 2)
        } else {
            ConvSpec::new(cin, cout, k, 2, (k - 1) / 2).with_output_padding(1)
        }
    }

    /// Label in the `k/RFxRF` scheme for contiguous configurations.
    pub fn label(&self) -> String {
        let rf = receptive_field(self);
        if self.main_branch_enabled && self.skip_mask.iter().all(|&s| s) {
            format!("full/{rf}x{rf}")
        } else {
            let k = self.skip_mask.iter().filter(|&&s| s).count();
            format!("{k}/{rf}x{rf}")
        }
    }

    pub fn to_manifest(&self) -> String {
        format!(
            "kind=generator\ninput_size={}\nin_channels={}\nout_channels={}\nbase_filters={}\nfilter_cap={}\n\
             depth={}\ndropout_rate={}\nleaky_slope={}\nskip_mask={}\nmain_branch_enabled={}\n\
             decoder_kernel={}\nfinal_hidden={}\n",
            self.input_size,
            self.in_channels,
            self.out_channels,
            self.base_filters,
            self.filter_cap,
            self.depth,
            self.dropout_rate,
            self.leaky_slope,
            kv::format_mask(&self.skip_mask),
            self.main_branch_enabled,
            self.decoder_kernel,
            self.final_hidden
        )
    }

    /// Applies one `key=value` setting. Returns `false` for keys that are
    /// not generator fields. Changing `input_size` resets `depth` and a
    /// mask of the wrong length.
    pub fn set(&mut self, key: &str, v: &str) -> Result<bool> {
        match key {
            "input_size" => {
                self.input_size = kv::value(key, v)?;
                self.depth = self.input_size.max(1).trailing_zeros() as usize;
                if self.skip_mask.len() != self.depth {
                    self.skip_mask = vec![true; self.depth];
                }
            }
            "in_channels" => self.in_channels = kv::value(key, v)?,
            "out_channels" => self.out_channels = kv::value(key, v)?,
            "base_filters" => self.base_filters = kv::value(key, v)?,
            "filter_cap" => self.filter_cap = kv::value(key, v)?,
            "depth" => self.depth = kv::value(key, v)?,
            "dropout_rate" => self.dropout_rate = kv::value(key, v)?,
            "leaky_slope" => self.leaky_slope = kv::value(key, v)?,
            "skip_mask" => self.skip_mask = kv::mask(key, v)?,
            "skips" => {
                let k: usize = kv::value(key, v)?;
                self.skip_mask = (0..self.depth).map(|m| m < k).collect();
            }
            "main_branch_enabled" => self.main_branch_enabled = kv::flag(key, v)?,
            "decoder_kernel" => self.decoder_kernel = kv::value(key, v)?,
            "final_hidden" => self.final_hidden = kv::value(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn from_manifest(text: &str) -> Result<Self> {
        let mut c = GeneratorConfig::default();
        let mut kind = None;
        for (k, v) in kv::parse(text)? {
            if k == "kind" {
                kind = Some(v);
            } else if !c.set(&k, &v)? {
                return Err(Error::Config(format!("unknown generator manifest key {k:?}")));
            }
        }
        if kind.as_deref() != Some("generator") {
            return Err(Error::Config(format!("manifest kind {kind:?}, expected generator")));
        }
        c.validate()?;
        Ok(c)
    }
}

/// Pieces of the concatenated activation at one level, each with its own
/// weight slice. Concat-then-convolve is evaluated as a sum of per-piece
/// convolutions, so adding a piece never reshapes existing weights.
#[derive(Debug, Clone)]
struct Fused {
    up: Option<(usize, ConvSpec)>,
    skip: Option<(usize, ConvSpec)>,
    bias: usize,
}

impl Fused {
    fn apply(
        &self,
        graph: &mut Graph,
        vars: &[Var],
        up: Option<Var>,
        skip: Option<Var>,
        transpose: bool,
    ) -> Result<Var> {
        let mut acc: Option<Var> = None;
        for (piece, input) in [(self.up, up), (self.skip, skip)] {
            let (Some((w, spec)), Some(x)) = (piece, input) else {
                continue;
            };
            let bias = acc.is_none().then_some(vars[self.bias]);
            let y = if transpose {
                graph.conv_transpose2d(x, vars[w], bias, &spec)?
            } else {
                graph.conv2d(x, vars[w], bias, &spec)?
            };
            acc = Some(match acc {
                Some(a) => graph.add(a, y)?,
                None => y,
            });
        }
        acc.ok_or_else(|| Error::Contract("fused layer received no input".into()))
    }
}

#[derive(Debug, Clone)]
pub struct UNetGenerator {
    config: GeneratorConfig,
    params: ParamSet,
    /// `(weight, bias, spec)` for levels `1..=L`.
    encoder: Vec<(usize, usize, ConvSpec)>,
    /// Indexed by source level `m` in `1..=L`; `decoder[m - 1]`.
    decoder: Vec<Fused>,
    hidden: Fused,
    out: (usize, usize, ConvSpec),
}

pub fn build_generator(config: &GeneratorConfig, seed: u64) -> Result<UNetGenerator> {
    config.validate()?;
    if !config.is_contiguous() {
        log::warn!("skip configuration {} is not a contiguous prefix", config.label());
    }
    let c = config;
    let deepest = c.deepest_level();
    let mut params = ParamSet::new();
    let mut encoder = Vec::new();
    for m in 1..=deepest {
        let spec = ConvSpec::new(c.encoder_channels(m - 1), c.encoder_channels(m), 3, 2, 1);
        let w = push_weight(&mut params, seed, format!("enc{m}.weight"), spec.conv_weight_shape());
        let b = push_bias(&mut params, format!("enc{m}.bias"), spec.out_channels);
        encoder.push((w, b, spec));
    }
    let mut decoder = Vec::new();
    for m in 1..=deepest {
        let cout = c.decoder_channels(m - 1);
        let up = (m < deepest).then(|| {
            let spec = c.decoder_spec(c.decoder_channels(m), cout);
            (
                push_weight(
                    &mut params,
                    seed,
                    format!("dec{m}.up_in"),
                    spec.transpose_weight_shape(),
                ),
                spec,
            )
        });
        let skip = c.level_enabled(m).then(|| {
            let spec = c.decoder_spec(c.encoder_channels(m), cout);
            (
                push_weight(
                    &mut params,
                    seed,
                    format!("dec{m}.skip_in"),
                    spec.transpose_weight_shape(),
                ),
                spec,
            )
        });
        let bias = push_bias(&mut params, format!("dec{m}.bias"), cout);
        decoder.push(Fused { up, skip, bias });
    }
    let up = (deepest > 0).then(|| {
        let spec = ConvSpec::new(c.decoder_channels(0), c.final_hidden, 1, 1, 0);
        (
            push_weight(&mut params, seed, "head.hidden.up_in".into(), spec.conv_weight_shape()),
            spec,
        )
    });
    let skip = c.level_enabled(0).then(|| {
        let spec = ConvSpec::new(c.in_channels, c.final_hidden, 1, 1, 0);
        (
            push_weight(
                &mut params,
                seed,
                "head.hidden.skip_in".into(),
                spec.conv_weight_shape(),
            ),
            spec,
        )
    });
    let bias = push_bias(&mut params, "head.hidden.bias".into(), c.final_hidden);
    let hidden = Fused { up, skip, bias };
    let spec = ConvSpec::new(c.final_hidden, c.out_channels, 1, 1, 0);
    let w = push_weight(&mut params, seed, "head.out.weight".into(), spec.conv_weight_shape());
    let b = push_bias(&mut params, "head.out.bias".into(), c.out_channels);
    Ok(UNetGenerator {
        config: config.clone(),
        params,
        encoder,
        decoder,
        hidden,
        out: (w, b, spec),
    })
}

impl UNetGenerator {
    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Encoder widths actually built (levels `1..=L`).
    pub fn encoder_widths(&self) -> Vec<usize> {
        self.encoder.iter().map(|(_, _, s)| s.out_channels).collect()
    }

    /// Forward pass on a graph where this model's parameters were bound as
    /// `vars` (see [`ParamSet::bind`]). `rng = None` is inference mode.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        graph: &mut Graph,
        vars: &[Var],
        rgb: Var,
        mut rng: Option<&mut R>,
    ) -> Result<Var> {
        let c = &self.config;
        if vars.len() != self.params.len() {
            return Err(Error::Contract(format!(
                "generator forward: {} handles for {} parameters",
                vars.len(),
                self.params.len()
            )));
        }
        let s = graph.value(rgb).shape();
        for (axis, expected, found) in [
            ("channels", c.in_channels, s.channels),
            ("height", c.input_size, s.height),
            ("width", c.input_size, s.width),
        ] {
            if expected != found {
                return Err(Error::Dimension {
                    op: "generator_forward",
                    axis,
                    expected,
                    found,
                });
            }
        }
        let mut levels = vec![rgb];
        for &(w, b, spec) in &self.encoder {
            let prev = *levels.last().unwrap();
            let y = graph.conv2d(prev, vars[w], Some(vars[b]), &spec)?;
            levels.push(graph.leaky_relu(y, c.leaky_slope)?);
        }
        let mut up: Option<Var> = None;
        for m in (1..levels.len()).rev() {
            let skip = c.level_enabled(m).then_some(levels[m]);
            let y = self.decoder[m - 1].apply(graph, vars, up, skip, true)?;
            let y = graph.dropout(y, c.dropout_rate, rng.as_deref_mut())?;
            up = Some(graph.leaky_relu(y, c.leaky_slope)?);
        }
        let skip = c.level_enabled(0).then_some(rgb);
        let h = self.hidden.apply(graph, vars, up, skip, false)?;
        let h = graph.leaky_relu(h, c.leaky_slope)?;
        let (w, b, spec) = self.out;
        let y = graph.conv2d(h, vars[w], Some(vars[b]), &spec)?;
        Ok(graph.tanh(y))
    }

    /// Inference-mode prediction for a model-range input tensor.
    pub fn predict(&self, rgb: &crate::Tensor) -> Result<crate::Tensor> {
        let mut g = Graph::new();
        let vars = self.params.bind(&mut g, false);
        let x = g.constant(rgb.clone());
        let y = self.forward::<rand_chacha::ChaCha8Rng>(&mut g, &vars, x, None)?;
        Ok(g.value(y).clone())
    }

    /// Writes ADVW weights plus the architecture manifest beside them.
    pub fn save(&self, weights: impl AsRef<Path>) -> Result<()> {
        save_params(&self.params, &self.config.to_manifest(), weights.as_ref())
    }

    pub fn load(weights: impl AsRef<Path>) -> Result<Self> {
        let weights = weights.as_ref();
        let config = GeneratorConfig::from_manifest(&std::fs::read_to_string(manifest_path(weights))?)?;
        let mut g = build_generator(&config, 0)?;
        load_params(&mut g.params, read_weights(weights)?)?;
        Ok(g)
    }
}

/// Dependency interval `[lo, hi]` along one axis.
type Span = (i64, i64);

fn hull(a: Option<Span>, b: Span) -> Span {
    match a {
        Some((lo, hi)) => (lo.min(b.0), hi.max(b.1)),
        None => b,
    }
}

/// Input positions reaching encoder position `q` at level `m`.
fn encoder_span(m: usize, q: i64) -> Span {
    if m == 0 {
        return (q, q);
    }
    // conv 3x3, stride 2, padding 1: inputs 2q-1 ..= 2q+1.
    let lo = encoder_span(m - 1, 2 * q - 1).0;
    let hi = encoder_span(m - 1, 2 * q + 1).1;
    (lo, hi)
}

/// Input positions reaching decoder activation `o` at level `m` (the
/// concatenated activation `h_m`).
fn decoder_span(c: &GeneratorConfig, deepest: usize, m: usize, o: i64) -> Span {
    let mut span: Option<Span> = None;
    if c.level_enabled(m) {
        span = Some(encoder_span(m, o));
    }
    if m < deepest {
        let spec = c.decoder_spec(1, 1);
        let (k, p) = (spec.kernel.0 as i64, spec.padding as i64);
        // Transposed conv: out[o] += in[i] * w[t] with o = 2i + t - p.
        for t in 0..k {
            let num = o + p - t;
            if num.rem_euclid(2) == 0 {
                span = Some(hull(span, decoder_span(c, deepest, m + 1, num.div_euclid(2))));
            }
        }
    }
    span.expect("an enabled level or a deeper path always exists")
}

/// Width of the input window that can influence one output pixel,
/// measured by propagating dependency intervals through the layers and
/// capped at the input size.
pub fn receptive_field(config: &GeneratorConfig) -> usize {
    let deepest = config.deepest_level();
    let period = 1i64 << deepest.min(40);
    // Far from any border, one full period of output positions covers every
    // alignment of the stride-2 stages.
    let base = 4 * period;
    let widest = (base..base + period)
        .map(|o| {
            let (lo, hi) = decoder_span(config, deepest, 0, o);
            (hi - lo + 1) as usize
        })
        .max()
        .unwrap();
    widest.min(config.input_size)
}

/// Output-to-input dependency interval for one position, exposed for the
/// locality tests.
pub fn dependency_span(config: &GeneratorConfig, o: i64) -> (i64, i64) {
    decoder_span(config, config.deepest_level(), 0, o)
}
