//! Branch-pruning experiment: train the skip ladder (k = 1..depth shallow
//! skips, then the full network) and compare test metrics.

use crate::colorimetry::{compute_stats, render_pair, CmfTable, DatasetStats, SpectralImage};
use crate::dataset_io::synth_dataset;
use crate::error::{Error, Result};
use crate::metrics::{aggregate, evaluate_image, MetricReport};
use crate::models::{build_discriminator_with, build_generator, receptive_field, DiscriminatorConfig, GeneratorConfig};
use crate::tiling::reconstruct;
use crate::training::{History, TrainConfig, Trainer, TrainingPair};

/// Renders both splits with statistics of the training split only.
pub fn render_split(
    train: &[(String, SpectralImage)],
    test: &[(String, SpectralImage)],
    cmf: &CmfTable,
) -> Result<(Vec<TrainingPair>, Vec<TrainingPair>, DatasetStats)> {
    let images: Vec<SpectralImage> = train.iter().map(|(_, c)| c.clone()).collect();
    let stats = compute_stats(&images)?;
    let render = |set: &[(String, SpectralImage)]| {
        set.iter()
            .map(|(id, c)| {
                let (rgb, hs) = render_pair(c, &stats, cmf);
                TrainingPair {
                    id: id.clone(),
                    rgb,
                    hs,
                }
            })
            .collect::<Vec<_>>()
    };
    Ok((render(train), render(test), stats))
}

/// `k = 1..=depth` prefix-skip configurations followed by the full net.
pub fn skip_ladder(base: &GeneratorConfig) -> Vec<GeneratorConfig> {
    let mut out: Vec<GeneratorConfig> = (1..=base.depth)
        .map(|k| {
            let mut c = base.clone();
            c.skip_mask = (0..c.depth).map(|m| m < k).collect();
            c.main_branch_enabled = false;
            c
        })
        .collect();
    let mut full = base.clone();
    full.skip_mask = vec![true; full.depth];
    full.main_branch_enabled = true;
    out.push(full);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneRow {
    pub label: String,
    pub receptive_field: usize,
    pub report: MetricReport,
}

pub const PRUNE_CSV_HEADER: &str = "config,rf,rmse,rmse_rel,gfc,de00";

impl PruneRow {
    pub fn csv_row(&self) -> String {
        let r = &self.report;
        format!(
            "{},{},{},{},{},{}",
            self.label, self.receptive_field, r.rmse, r.rmse_rel, r.gfc, r.delta_e00
        )
    }
}

/// Trains one configuration and evaluates it on the test pairs by tiled
/// reconstruction.
pub fn train_and_evaluate(
    gen_config: &GeneratorConfig,
    disc_config: &DiscriminatorConfig,
    train_config: &TrainConfig,
    train: &[TrainingPair],
    test: &[TrainingPair],
    cmf: &CmfTable,
) -> Result<PruneRow> {
    let gen = build_generator(gen_config, train_config.seed)?;
    let disc = build_discriminator_with(disc_config, train_config.seed)?;
    let mut trainer = Trainer::new(gen, disc, train_config.clone())?;
    trainer.run(train, &mut History::default())?;
    let mut reports = Vec::new();
    for pair in test {
        let est = reconstruct(&trainer.gen, &pair.rgb)?;
        let reference = pair.hs.crop(0, 0, est.height(), est.width())?;
        reports.push(evaluate_image(&reference, &est, cmf)?);
    }
    Ok(PruneRow {
        label: gen_config.label(),
        receptive_field: receptive_field(gen_config),
        report: aggregate(&reports)?,
    })
}

/// Desk-scale setup: synthetic images split in two equal halves.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneSetup {
    pub n_images: usize,
    pub image_size: usize,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub train: TrainConfig,
}

impl Default for PruneSetup {
    fn default() -> Self {
        let generator = GeneratorConfig::full(32);
        PruneSetup {
            n_images: 20,
            image_size: 64,
            discriminator: DiscriminatorConfig {
                base_filters: 16,
                ..DiscriminatorConfig::default()
            },
            train: TrainConfig {
                crop_size: generator.input_size,
                epochs: 60,
                ..TrainConfig::default()
            },
            generator,
        }
    }
}

/// Synthetic train/test halves for `seed`: even indices train, odd test.
pub fn synthetic_split(
    setup: &PruneSetup,
    seed: u64,
) -> Result<(Vec<(String, SpectralImage)>, Vec<(String, SpectralImage)>)> {
    if setup.n_images < 2 {
        return Err(Error::Config("the pruning experiment needs at least two images".into()));
    }
    let cubes = synth_dataset(setup.n_images, setup.image_size, seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, c) in cubes.into_iter().enumerate() {
        let id = format!("synth_{i:03}");
        if i % 2 == 0 {
            train.push((id, c));
        } else {
            test.push((id, c));
        }
    }
    Ok((train, test))
}

/// Runs the given configurations on one seed's synthetic split.
pub fn run_synthetic(setup: &PruneSetup, configs: &[GeneratorConfig], seed: u64) -> Result<Vec<PruneRow>> {
    let (train, test) = synthetic_split(setup, seed)?;
    run_split(setup, configs, &train, &test, seed)
}

/// Runs the given configurations on raw (unnormalized) train/test cubes.
pub fn run_split(
    setup: &PruneSetup,
    configs: &[GeneratorConfig],
    train: &[(String, SpectralImage)],
    test: &[(String, SpectralImage)],
    seed: u64,
) -> Result<Vec<PruneRow>> {
    let cmf = CmfTable::cie1964_10deg();
    let (train, test, _) = render_split(train, test, cmf)?;
    let tc = TrainConfig {
        seed,
        ..setup.train.clone()
    };
    configs
        .iter()
        .map(|c| {
            let row = train_and_evaluate(c, &setup.discriminator, &tc, &train, &test, cmf)?;
            log::info!("{}: rmse {:.3}", row.label, row.report.rmse);
            Ok(row)
        })
        .collect()
}
