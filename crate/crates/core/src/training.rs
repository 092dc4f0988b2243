//! Alternating adversarial training: the discriminator learns to separate
//! real from generated spectra, the generator minimizes a non-saturating
//! adversarial term plus a weighted L1 reconstruction term.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{adam_step, read_checkpoint, write_checkpoint, AdamConfig, Graph, ParamSet};
use crate::colorimetry::{compute_stats, render_pair, CmfTable, SpectralImage, SrgbImage};
use crate::dataset_io::synth_dataset;
use crate::error::{Error, Result};
use crate::kv;
use crate::models::{
    build_discriminator_with, build_generator, DiscriminatorConfig, GeneratorConfig, PatchDiscriminator, UNetGenerator,
};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub lambda_l1: f64,
    pub d_iters_per_cycle: usize,
    pub g_iters_per_cycle: usize,
    pub crop_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            batch_size: 1,
            lambda_l1: 100.0,
            d_iters_per_cycle: 50,
            g_iters_per_cycle: 25,
            crop_size: 256,
            epochs: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Both models share one set of Adam hyperparameters.
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr as f32,
            beta1: self.beta1 as f32,
            beta2: self.beta2 as f32,
            ..AdamConfig::default()
        }
    }

    pub fn cycle_len(&self) -> usize {
        self.d_iters_per_cycle + self.g_iters_per_cycle
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail(format!(
                "invalid Adam settings lr={} beta1={} beta2={}",
                self.lr, self.beta1, self.beta2
            ));
        }
        if self.batch_size != 1 {
            return fail(format!(
                "batch_size {} unsupported; minibatches hold one crop",
                self.batch_size
            ));
        }
        if !(self.lambda_l1 >= 0.0) {
            return fail(format!("lambda_l1 {} must be non-negative", self.lambda_l1));
        }
        if self.cycle_len() == 0 || self.crop_size == 0 {
            return fail("cycle length and crop size must be positive".into());
        }
        Ok(())
    }

    /// Applies one `key=value` setting; `false` for unknown keys.
    pub fn set(&mut self, key: &str, v: &str) -> Result<bool> {
        match key {
            "lr" => self.lr = kv::value(key, v)?,
            "beta1" => self.beta1 = kv::value(key, v)?,
            "beta2" => self.beta2 = kv::value(key, v)?,
            "batch_size" => self.batch_size = kv::value(key, v)?,
            "lambda_l1" => self.lambda_l1 = kv::value(key, v)?,
            "d_iters_per_cycle" => self.d_iters_per_cycle = kv::value(key, v)?,
            "g_iters_per_cycle" => self.g_iters_per_cycle = kv::value(key, v)?,
            "crop_size" => self.crop_size = kv::value(key, v)?,
            "epochs" => self.epochs = kv::value(key, v)?,
            "seed" => self.seed = kv::value(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_kv(&self) -> String {
        format!(
            "lr={}\nbeta1={}\nbeta2={}\nbatch_size={}\nlambda_l1={}\nd_iters_per_cycle={}\ng_iters_per_cycle={}\n\
             crop_size={}\nepochs={}\nseed={}\n",
            self.lr,
            self.beta1,
            self.beta2,
            self.batch_size,
            self.lambda_l1,
            self.d_iters_per_cycle,
            self.g_iters_per_cycle,
            self.crop_size,
            self.epochs,
            self.seed
        )
    }
}

/// Losses of one minibatch. Terms not computed in the step's phase are 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub d_loss_real: f64,
    pub d_loss_fake: f64,
    pub g_adv_loss: f64,
    pub g_l1_loss: f64,
    /// `g_adv_loss + lambda_l1 * g_l1_loss`.
    pub g_total: f64,
}

impl LossTerms {
    pub fn d_total(&self) -> f64 {
        self.d_loss_real + self.d_loss_fake
    }

    fn all_finite(&self) -> bool {
        [
            self.d_loss_real,
            self.d_loss_fake,
            self.g_adv_loss,
            self.g_l1_loss,
            self.g_total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Discriminator,
    Generator,
}

impl Phase {
    pub fn tag(self) -> &'static str {
        match self {
            Phase::Discriminator => "d",
            Phase::Generator => "g",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub step: u64,
    pub cycle: u64,
    pub phase: Phase,
    pub terms: LossTerms,
}

pub const LOSS_CSV_HEADER: &str = "step,cycle,phase,d_loss_real,d_loss_fake,g_adv,g_l1,g_total";

impl LogRecord {
    /// One CSV row; the other phase's columns are left empty.
    pub fn csv_row(&self) -> String {
        let t = &self.terms;
        match self.phase {
            Phase::Discriminator => format!("{},{},d,{},{},,,", self.step, self.cycle, t.d_loss_real, t.d_loss_fake),
            Phase::Generator => format!(
                "{},{},g,,,{},{},{}",
                self.step, self.cycle, t.g_adv_loss, t.g_l1_loss, t.g_total
            ),
        }
    }
}

/// An aligned training example: the sRGB render and its normalized cube.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub id: String,
    pub rgb: SrgbImage,
    pub hs: SpectralImage,
}

/// Uniform top-left corner of a `size x size` window.
pub fn crop_origin<R: Rng + ?Sized>(height: usize, width: usize, size: usize, rng: &mut R) -> Result<(usize, usize)> {
    if size == 0 || height < size || width < size {
        return Err(Error::Geometry {
            op: "random_crop",
            reason: format!("cannot take a {size}x{size} crop from {height}x{width}"),
        });
    }
    Ok((rng.random_range(0..=height - size), rng.random_range(0..=width - size)))
}

/// The same random window of both images, as model-range tensors.
pub fn random_crop<R: Rng + ?Sized>(pair: &TrainingPair, size: usize, rng: &mut R) -> Result<(Tensor, Tensor)> {
    let (h, w) = (pair.hs.height(), pair.hs.width());
    if pair.rgb.height() != h || pair.rgb.width() != w {
        return Err(Error::Contract(format!(
            "pair {} is misaligned: rgb {}x{}, hs {h}x{w}",
            pair.id,
            pair.rgb.height(),
            pair.rgb.width()
        )));
    }
    let (y0, x0) = crop_origin(h, w, size, rng)?;
    Ok((
        pair.rgb.crop(y0, x0, size, size)?.to_model_tensor(),
        pair.hs.crop(y0, x0, size, size)?.to_model_tensor(),
    ))
}

/// One discriminator update; the generator only supplies a constant fake.
pub fn d_step<R: Rng + ?Sized>(
    disc: &mut PatchDiscriminator,
    gen: &UNetGenerator,
    rgb: &Tensor,
    hs: &Tensor,
    adam: &AdamConfig,
    rng: &mut R,
) -> Result<LossTerms> {
    let fake = {
        let mut g = Graph::new();
        let gv = gen.params().bind(&mut g, false);
        let x = g.constant(rgb.clone());
        let y = gen.forward(&mut g, &gv, x, Some(rng))?;
        g.value(y).clone()
    };
    let mut g = Graph::new();
    let dv = disc.params().bind(&mut g, true);
    let x = g.constant(rgb.clone());
    let real = g.constant(hs.clone());
    let fake = g.constant(fake);
    let p_real = disc.forward(&mut g, &dv, x, real)?;
    let p_fake = disc.forward(&mut g, &dv, x, fake)?;
    let l_real = g.bce_loss(p_real, true)?;
    let l_fake = g.bce_loss(p_fake, false)?;
    let total = g.add(l_real, l_fake)?;
    let terms = LossTerms {
        d_loss_real: g.scalar_f64(l_real),
        d_loss_fake: g.scalar_f64(l_fake),
        ..LossTerms::default()
    };
    check_terms(&terms, "discriminator")?;
    g.backward(total)?;
    disc.params_mut().collect_grads(&mut g, &dv)?;
    adam_step(disc.params_mut(), adam)?;
    Ok(terms)
}

fn generator_losses<R: Rng + ?Sized>(
    g: &mut Graph,
    gv: &[crate::autograd::Var],
    disc: &PatchDiscriminator,
    gen: &UNetGenerator,
    rgb: &Tensor,
    hs: &Tensor,
    lambda_l1: f64,
    rng: Option<&mut R>,
) -> Result<(crate::autograd::Var, LossTerms)> {
    let dv = disc.params().bind(g, false);
    let x = g.constant(rgb.clone());
    let target = g.constant(hs.clone());
    let fake = gen.forward(g, gv, x, rng)?;
    let p = disc.forward(g, &dv, x, fake)?;
    let adv = g.bce_loss(p, true)?;
    let l1 = g.l1_loss(fake, target)?;
    let weighted = g.scale(l1, lambda_l1 as f32);
    let total = g.add(adv, weighted)?;
    let (a, l) = (g.scalar_f64(adv), g.scalar_f64(l1));
    Ok((
        total,
        LossTerms {
            g_adv_loss: a,
            g_l1_loss: l,
            g_total: a + lambda_l1 * l,
            ..LossTerms::default()
        },
    ))
}

/// One generator update against a frozen discriminator.
pub fn g_step<R: Rng + ?Sized>(
    disc: &PatchDiscriminator,
    gen: &mut UNetGenerator,
    rgb: &Tensor,
    hs: &Tensor,
    adam: &AdamConfig,
    lambda_l1: f64,
    rng: &mut R,
) -> Result<LossTerms> {
    let mut g = Graph::new();
    let gv = gen.params().bind(&mut g, true);
    let (total, terms) = generator_losses(&mut g, &gv, disc, gen, rgb, hs, lambda_l1, Some(rng))?;
    check_terms(&terms, "generator")?;
    g.backward(total)?;
    gen.params_mut().collect_grads(&mut g, &gv)?;
    adam_step(gen.params_mut(), adam)?;
    Ok(terms)
}

/// Generator losses in inference mode, without updating anything.
pub fn evaluate_generator(
    disc: &PatchDiscriminator,
    gen: &UNetGenerator,
    rgb: &Tensor,
    hs: &Tensor,
    lambda_l1: f64,
) -> Result<LossTerms> {
    let mut g = Graph::new();
    let gv = gen.params().bind(&mut g, false);
    Ok(generator_losses::<ChaCha8Rng>(&mut g, &gv, disc, gen, rgb, hs, lambda_l1, None)?.1)
}

/// Discriminator losses on a fixed fake, without updating anything.
pub fn evaluate_discriminator(
    disc: &PatchDiscriminator,
    rgb: &Tensor,
    hs: &Tensor,
    fake: &Tensor,
) -> Result<LossTerms> {
    let mut g = Graph::new();
    let dv = disc.params().bind(&mut g, false);
    let x = g.constant(rgb.clone());
    let real = g.constant(hs.clone());
    let fake = g.constant(fake.clone());
    let p_real = disc.forward(&mut g, &dv, x, real)?;
    let p_fake = disc.forward(&mut g, &dv, x, fake)?;
    let l_real = g.bce_loss(p_real, true)?;
    let l_fake = g.bce_loss(p_fake, false)?;
    Ok(LossTerms {
        d_loss_real: g.scalar_f64(l_real),
        d_loss_fake: g.scalar_f64(l_fake),
        ..LossTerms::default()
    })
}

fn check_terms(t: &LossTerms, who: &str) -> Result<()> {
    if t.all_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{who} loss is not finite: {t:?}")))
    }
}

/// Hooks invoked by the training loop.
pub trait TrainObserver {
    fn on_step(&mut self, _record: &LogRecord) -> Result<()> {
        Ok(())
    }

    /// Called after each completed epoch (1-based count).
    fn on_epoch_end(&mut self, _trainer: &Trainer) -> Result<()> {
        Ok(())
    }
}

/// Observer that only records the loss history.
#[derive(Debug, Default)]
pub struct History {
    pub records: Vec<LogRecord>,
}

impl TrainObserver for History {
    fn on_step(&mut self, record: &LogRecord) -> Result<()> {
        self.records.push(*record);
        Ok(())
    }
}

/// Models, optimizer moments and schedule position of a run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub gen: UNetGenerator,
    pub disc: PatchDiscriminator,
    config: TrainConfig,
    rng: ChaCha8Rng,
    step: u64,
    epochs_done: usize,
}

fn trainer_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Separate from the parameter-initialization streams.
    rng.set_stream(u64::MAX);
    rng
}

impl Trainer {
    pub fn new(gen: UNetGenerator, disc: PatchDiscriminator, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if config.crop_size != gen.config().input_size {
            return Err(Error::Config(format!(
                "crop_size {} must equal the generator input_size {}",
                config.crop_size,
                gen.config().input_size
            )));
        }
        Ok(Trainer {
            gen,
            disc,
            rng: trainer_rng(config.seed),
            config,
            step: 0,
            epochs_done: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Minibatches processed so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    /// Extends or shortens the planned run, e.g. before resuming.
    pub fn set_epochs(&mut self, epochs: usize) {
        self.config.epochs = epochs;
    }

    fn phase_of(&self, step: u64) -> (u64, Phase) {
        let len = self.config.cycle_len() as u64;
        let pos = step % len;
        let phase = if pos < self.config.d_iters_per_cycle as u64 {
            Phase::Discriminator
        } else {
            Phase::Generator
        };
        (step / len, phase)
    }

    /// One minibatch on a fresh crop of `pair`.
    pub fn step_on(&mut self, pair: &TrainingPair) -> Result<LogRecord> {
        let (rgb, hs) = random_crop(pair, self.config.crop_size, &mut self.rng)?;
        let (cycle, phase) = self.phase_of(self.step);
        let adam = self.config.adam();
        let terms = match phase {
            Phase::Discriminator => d_step(&mut self.disc, &self.gen, &rgb, &hs, &adam, &mut self.rng),
            Phase::Generator => g_step(
                &self.disc,
                &mut self.gen,
                &rgb,
                &hs,
                &adam,
                self.config.lambda_l1,
                &mut self.rng,
            ),
        }
        .map_err(|e| match e {
            Error::NonFinite(m) => Error::NonFinite(format!("step {} ({}): {m}", self.step, phase.tag())),
            other => other,
        })?;
        let record = LogRecord {
            step: self.step,
            cycle,
            phase,
            terms,
        };
        self.step += 1;
        Ok(record)
    }

    /// One crop per image, in a freshly shuffled order.
    pub fn run_epoch(&mut self, data: &[TrainingPair], observer: &mut dyn TrainObserver) -> Result<()> {
        if data.is_empty() {
            return Err(Error::Empty("training set is empty"));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        for i in order {
            let record = self.step_on(&data[i])?;
            observer.on_step(&record)?;
        }
        self.epochs_done += 1;
        observer.on_epoch_end(self)
    }

    /// Runs the remaining epochs up to `config.epochs`.
    pub fn run(&mut self, data: &[TrainingPair], observer: &mut dyn TrainObserver) -> Result<()> {
        if data.is_empty() {
            return Err(Error::Empty("training set is empty"));
        }
        for pair in data {
            let s = self.config.crop_size;
            if pair.hs.height() < s || pair.hs.width() < s {
                return Err(Error::Config(format!(
                    "crop_size {s} exceeds image {} ({}x{})",
                    pair.id,
                    pair.hs.height(),
                    pair.hs.width()
                )));
            }
        }
        while self.epochs_done < self.config.epochs {
            self.run_epoch(data, observer)?;
        }
        Ok(())
    }

    /// Writes everything needed to resume into `dir`.
    pub fn save_state(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.gen.save(dir.join("gen.advw"))?;
        self.disc.save(dir.join("disc.advw"))?;
        write_moments(self.gen.params(), &dir.join("gen_moments.advw"))?;
        write_moments(self.disc.params(), &dir.join("disc_moments.advw"))?;
        let text = format!(
            "step={}\nepochs_done={}\nrng_word_pos={}\ngen_adam_steps={}\ndisc_adam_steps={}\n{}",
            self.step,
            self.epochs_done,
            self.rng.get_word_pos(),
            adam_steps(self.gen.params()),
            adam_steps(self.disc.params()),
            self.config.to_kv()
        );
        fs::write(dir.join("state.txt"), text)?;
        Ok(())
    }

    /// Restores a run written by [`Trainer::save_state`].
    pub fn load_state(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut gen = UNetGenerator::load(dir.join("gen.advw"))?;
        let mut disc = PatchDiscriminator::load(dir.join("disc.advw"))?;
        let mut config = TrainConfig::default();
        let (mut step, mut epochs_done, mut word_pos, mut gs, mut ds) = (0u64, 0usize, 0u128, 0u64, 0u64);
        for (k, v) in kv::parse(&fs::read_to_string(dir.join("state.txt"))?)? {
            match k.as_str() {
                "step" => step = kv::value(&k, &v)?,
                "epochs_done" => epochs_done = kv::value(&k, &v)?,
                "rng_word_pos" => word_pos = kv::value(&k, &v)?,
                "gen_adam_steps" => gs = kv::value(&k, &v)?,
                "disc_adam_steps" => ds = kv::value(&k, &v)?,
                _ => {
                    if !config.set(&k, &v)? {
                        return Err(Error::parse("training state", format!("unknown key {k:?}")));
                    }
                }
            }
        }
        read_moments(gen.params_mut(), &dir.join("gen_moments.advw"), gs)?;
        read_moments(disc.params_mut(), &dir.join("disc_moments.advw"), ds)?;
        let mut t = Trainer::new(gen, disc, config)?;
        t.rng.set_word_pos(word_pos);
        t.step = step;
        t.epochs_done = epochs_done;
        Ok(t)
    }
}

fn adam_steps(params: &ParamSet) -> u64 {
    params.iter().map(|(_, p)| p.step_count).max().unwrap_or(0)
}

fn write_moments(params: &ParamSet, path: &Path) -> Result<()> {
    let names: Vec<(String, String)> = params
        .iter()
        .map(|(n, _)| (format!("m1.{n}"), format!("m2.{n}")))
        .collect();
    let mut entries = Vec::new();
    for ((_, p), (a, b)) in params.iter().zip(&names) {
        entries.push((a.as_str(), &p.first_moment));
        entries.push((b.as_str(), &p.second_moment));
    }
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, entries)?;
    fs::write(path, buf)?;
    Ok(())
}

fn read_moments(params: &mut ParamSet, path: &Path, steps: u64) -> Result<()> {
    let bytes = fs::read(path)?;
    let mut map: std::collections::HashMap<String, Tensor> = read_checkpoint(bytes.as_slice())?.into_iter().collect();
    for (name, p) in params.iter_mut() {
        for (prefix, slot) in [("m1", &mut p.first_moment), ("m2", &mut p.second_moment)] {
            let t = map
                .remove(&format!("{prefix}.{name}"))
                .ok_or_else(|| Error::parse("optimizer state", format!("missing {prefix}.{name}")))?;
            if t.shape() != slot.shape() {
                return Err(Error::parse(
                    "optimizer state",
                    format!("{prefix}.{name} has shape {}", t.shape()),
                ));
            }
            *slot = t;
        }
        p.step_count = steps;
    }
    Ok(())
}

/// Run directory layout: `loss.csv`, `checkpoints/epoch_NNNN_{gen,disc}.advw`
/// (with `.arch` manifests) and `state/` for resuming.
pub struct RunWriter {
    dir: PathBuf,
    csv: fs::File,
}

impl RunWriter {
    /// Opens `dir/loss.csv`, appending when `resume` is set.
    pub fn new(dir: impl AsRef<Path>, resume: bool) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join("checkpoints"))?;
        let path = dir.join("loss.csv");
        let csv = if resume && path.exists() {
            fs::OpenOptions::new().append(true).open(&path)?
        } else {
            let mut f = fs::File::create(&path)?;
            writeln!(f, "{LOSS_CSV_HEADER}")?;
            f
        };
        Ok(RunWriter { dir, csv })
    }

    pub fn checkpoint_path(&self, epoch: usize, model: &str) -> PathBuf {
        self.dir
            .join("checkpoints")
            .join(format!("epoch_{epoch:04}_{model}.advw"))
    }

    /// Saves the models as epoch `epoch` plus the resumable state.
    pub fn write_checkpoint(&self, trainer: &Trainer, epoch: usize) -> Result<()> {
        trainer.gen.save(self.checkpoint_path(epoch, "gen"))?;
        trainer.disc.save(self.checkpoint_path(epoch, "disc"))?;
        trainer.save_state(self.dir.join("state"))
    }
}

impl TrainObserver for RunWriter {
    fn on_step(&mut self, record: &LogRecord) -> Result<()> {
        writeln!(self.csv, "{}", record.csv_row())?;
        Ok(())
    }

    fn on_epoch_end(&mut self, trainer: &Trainer) -> Result<()> {
        self.csv.flush()?;
        self.write_checkpoint(trainer, trainer.epochs_done())
    }
}

/// Renders cubes into training pairs, normalizing with statistics of
/// `cubes` themselves.
pub fn make_pairs(cubes: &[(String, SpectralImage)], cmf: &CmfTable) -> Result<Vec<TrainingPair>> {
    let images: Vec<SpectralImage> = cubes.iter().map(|(_, c)| c.clone()).collect();
    let stats = compute_stats(&images)?;
    Ok(cubes
        .iter()
        .map(|(id, c)| {
            let (rgb, hs) = render_pair(c, &stats, cmf);
            TrainingPair {
                id: id.clone(),
                rgb,
                hs,
            }
        })
        .collect())
}

/// Trains the default-width generator at reduced depth (`log2(size)`
/// levels) on a single synthetic pair, with one crop covering the whole
/// image and the standard 50/25 schedule. Returns the L1 loss after
/// `steps` generator updates, evaluated in inference mode.
pub fn overfit_smoke(size: usize, steps: usize, seed: u64) -> Result<f64> {
    if ![16, 32, 64].contains(&size) {
        return Err(Error::Config(format!(
            "overfit smoke size {size} not in {{16, 32, 64}}"
        )));
    }
    let cube = synth_dataset(1, size, seed).remove(0);
    let pairs = make_pairs(&[("smoke".into(), cube)], CmfTable::cie1964_10deg())?;
    let gen = build_generator(&GeneratorConfig::full(size), seed)?;
    let disc = build_discriminator_with(&DiscriminatorConfig::default(), seed)?;
    let config = TrainConfig {
        crop_size: size,
        epochs: 0,
        seed,
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(gen, disc, config)?;
    let pair = &pairs[0];
    let mut done = 0;
    while done < steps {
        if t.step_on(pair)?.phase == Phase::Generator {
            done += 1;
        }
    }
    let rgb = pair.rgb.to_model_tensor();
    let hs = pair.hs.to_model_tensor();
    Ok(evaluate_generator(&t.disc, &t.gen, &rgb, &hs, 1.0)?.g_l1_loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rows_have_header_arity() {
        let n = LOSS_CSV_HEADER.split(',').count();
        for phase in [Phase::Discriminator, Phase::Generator] {
            let r = LogRecord {
                step: 3,
                cycle: 0,
                phase,
                terms: LossTerms::default(),
            };
            assert_eq!(r.csv_row().split(',').count(), n);
        }
    }

    #[test]
    fn config_round_trip() {
        let mut c = TrainConfig {
            epochs: 7,
            seed: 99,
            ..Default::default()
        };
        let mut back = TrainConfig::default();
        for (k, v) in kv::parse(&c.to_kv()).unwrap() {
            assert!(back.set(&k, &v).unwrap());
        }
        assert_eq!(back, c);
        assert!(!back.set("bogus", "1").unwrap());
        c.batch_size = 2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn crop_origin_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(crop_origin(8, 8, 8, &mut rng).unwrap(), (0, 0));
        assert!(crop_origin(7, 8, 8, &mut rng).is_err());
        for _ in 0..100 {
            let (y, x) = crop_origin(10, 12, 4, &mut rng).unwrap();
            assert!(y <= 6 && x <= 8);
        }
    }
}
