//! The `rgb2hs` command line.

use std::collections::HashSet;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::colorimetry::{compute_stats, render_pair, CmfTable, SpectralImage};
use crate::dataset_io::{load_split, read_hsi, read_ppm, scan_dir, write_hsi, write_ppm};
use crate::error::{Error, Result};
use crate::experiment::{run_split, run_synthetic, skip_ladder, PruneSetup, PRUNE_CSV_HEADER};
use crate::gradsuite::{layer_suite, model_suite};
use crate::kv;
use crate::metrics::{aggregate, evaluate_image, CSV_HEADER};
use crate::models::{build_discriminator_with, build_generator, DiscriminatorConfig, GeneratorConfig, UNetGenerator};
use crate::tiling::reconstruct;
use crate::training::{RunWriter, TrainConfig, Trainer, TrainingPair};

/// Name of the reproducibility header written next to every output.
pub const RUN_HEADER: &str = "run.txt";

#[derive(Debug, Parser)]
#[command(name = "rgb2hs", version, about = "Hyperspectral reconstruction from RGB images")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render sRGB inputs and normalized targets from raw HSI1 cubes.
    Render {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        stats_out: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Compute the normalization statistics over these ids only.
        #[arg(long)]
        split: Option<PathBuf>,
    },
    /// Train a generator/discriminator pair on rendered data.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// File listing the training ids, one per line.
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides a config entry, e.g. `--set lambda_l1=50`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Continue the run stored in `--out`.
        #[arg(long)]
        resume: bool,
    },
    /// Reconstruct spectra for one PPM file or a directory of them.
    Reconstruct {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score estimated cubes against references with matching names.
    Evaluate {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and score the skip-connection ladder.
    PruneExperiment {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Raw HSI1 cubes; a synthetic set is generated when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Finite-difference gradient checks.
    Gradcheck {
        #[arg(long, value_enum, default_value_t = Scope::Layer)]
        scope: Scope,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scope {
    Layer,
    Model,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Render {
            input,
            stats_out,
            out,
            split,
        } => cmd_render(input, stats_out, out, split.as_deref()),
        Command::Train {
            config,
            data,
            split,
            out,
            sets,
            seed,
            epochs,
            resume,
        } => {
            let mut cfg = RunConfig::load(config.as_deref(), sets)?;
            if let Some(s) = seed {
                cfg.train.seed = *s;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
            cmd_train(&cfg, data, split, out, *resume)
        }
        Command::Reconstruct { model, input, out } => cmd_reconstruct(model, input, out),
        Command::Evaluate { reference, est, out } => cmd_evaluate(reference, est, out),
        Command::PruneExperiment {
            config,
            data,
            out,
            sets,
            seed,
        } => {
            let setup = prune_setup(config.as_deref(), sets)?;
            cmd_prune_experiment(&setup, data.as_deref(), out, *seed)
        }
        Command::Gradcheck { scope, inject_fault } => cmd_gradcheck(*scope, *inject_fault),
    }
}

/// Generator, discriminator and training settings of one run. Keys are
/// the field names; discriminator keys carry a `disc.` prefix. When only
/// one of `crop_size` and `input_size` is given the other follows it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut c = RunConfig::default();
        // Size first, so depth-dependent keys such as `skips` see it.
        let last = |key: &str| pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        if let Some(size) = last("input_size").or(last("crop_size")) {
            c.generator.set("input_size", size)?;
            c.train.set("crop_size", size)?;
        }
        for (k, v) in pairs {
            let known = if let Some(dk) = k.strip_prefix("disc.") {
                c.discriminator.set(dk, v)?
            } else {
                c.train.set(k, v)? || c.generator.set(k, v)?
            };
            if !known {
                return Err(Error::Config(format!("unknown config key {k:?}")));
            }
        }
        c.generator.validate()?;
        c.discriminator.validate()?;
        c.train.validate()?;
        Ok(c)
    }

    /// Reads the optional config file and applies `--set` overrides.
    pub fn load(path: Option<&Path>, sets: &[String]) -> Result<Self> {
        RunConfig::from_pairs(&config_pairs(path, sets)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = self.generator.to_manifest();
        for line in self.discriminator.to_manifest().lines() {
            if !line.starts_with("kind=") {
                s.push_str(&format!("disc.{line}\n"));
            }
        }
        s.push_str(&self.train.to_kv());
        s
    }
}

fn config_pairs(path: Option<&Path>, sets: &[String]) -> Result<Vec<(String, String)>> {
    let mut pairs = match path {
        Some(p) => kv::parse(&fs::read_to_string(p)?)?,
        None => Vec::new(),
    };
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, found {s:?}")))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    // Manifest lines are informational here.
    pairs.retain(|(k, _)| k != "kind");
    Ok(pairs)
}

/// Parses the experiment config: `n_images`, `image_size` plus any run
/// config key. Unset fields keep the desk-scale defaults.
pub fn prune_setup(path: Option<&Path>, sets: &[String]) -> Result<PruneSetup> {
    let mut setup = PruneSetup::default();
    let mut rest = vec![("epochs".to_string(), setup.train.epochs.to_string())];
    for line in setup
        .discriminator
        .to_manifest()
        .lines()
        .filter(|l| !l.starts_with("kind="))
    {
        if let Some((k, v)) = line.split_once('=') {
            rest.push((format!("disc.{k}"), v.to_string()));
        }
    }
    for (k, v) in config_pairs(path, sets)? {
        match k.as_str() {
            "n_images" => setup.n_images = kv::value(&k, &v)?,
            "image_size" => setup.image_size = kv::value(&k, &v)?,
            _ => rest.push((k, v)),
        }
    }
    if !rest.iter().any(|(k, _)| k == "input_size" || k == "crop_size") {
        rest.insert(0, ("input_size".to_string(), setup.generator.input_size.to_string()));
    }
    let rc = RunConfig::from_pairs(&rest)?;
    setup.generator = rc.generator;
    setup.discriminator = rc.discriminator;
    setup.train = rc.train;
    Ok(setup)
}

/// Writes `dir/run.txt`: tool version, seed and a hash of the resolved
/// configuration. The content is a pure function of the inputs.
pub fn write_run_header(dir: &Path, command: &str, seed: Option<u64>, config: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let hash: String = Sha256::digest(config.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    let mut text = format!(
        "tool=rgb2hs\nversion={}\ncommand={command}\n",
        env!("CARGO_PKG_VERSION")
    );
    if let Some(s) = seed {
        text.push_str(&format!("seed={s}\n"));
    }
    text.push_str(&format!("config_sha256={hash}\n"));
    fs::write(dir.join(RUN_HEADER), text)?;
    Ok(())
}

/// Header location for commands whose output is a single file.
fn sibling_dir(out: &Path) -> PathBuf {
    match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

pub fn cmd_render(input: &Path, stats_out: &Path, out: &Path, split: Option<&Path>) -> Result<()> {
    let files = scan_dir(input, "hsi")?;
    if files.is_empty() {
        return Err(Error::Empty("no .hsi files in the input directory"));
    }
    let cubes: Vec<(String, SpectralImage)> = files
        .iter()
        .map(|(id, p)| Ok((id.clone(), read_hsi(p)?)))
        .collect::<Result<_>>()?;
    let stats_ids: Option<HashSet<String>> = match split {
        Some(p) => Some(load_split(p)?.ids.into_iter().collect()),
        None => None,
    };
    let stats_images: Vec<SpectralImage> = cubes
        .iter()
        .filter(|(id, _)| stats_ids.as_ref().is_none_or(|s| s.contains(id)))
        .map(|(_, c)| c.clone())
        .collect();
    let stats = compute_stats(&stats_images)?;
    if let Some(parent) = stats_out.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(stats_out, stats.to_text())?;
    fs::create_dir_all(out)?;
    let cmf = CmfTable::cie1964_10deg();
    for (id, cube) in &cubes {
        let (rgb, hs) = render_pair(cube, &stats, cmf);
        write_ppm(&rgb, out.join(format!("{id}.ppm")))?;
        write_hsi(&hs, out.join(format!("{id}.hsi")))?;
    }
    log::info!("rendered {} images", cubes.len());
    write_run_header(out, "render", None, &stats.to_text())
}

/// Loads `data/{id}.ppm` and `data/{id}.hsi` for every id of the split.
pub fn load_pairs(data: &Path, ids: &[String]) -> Result<Vec<TrainingPair>> {
    ids.iter()
        .map(|id| {
            let rgb = read_ppm(data.join(format!("{id}.ppm")))?;
            let hs = read_hsi(data.join(format!("{id}.hsi")))?;
            if (rgb.height(), rgb.width()) != (hs.height(), hs.width()) {
                return Err(Error::parse(id.clone(), "RGB and spectral sizes differ"));
            }
            Ok(TrainingPair {
                id: id.clone(),
                rgb,
                hs,
            })
        })
        .collect()
}

pub fn cmd_train(cfg: &RunConfig, data: &Path, split: &Path, out: &Path, resume: bool) -> Result<()> {
    let pairs = load_pairs(data, &load_split(split)?.ids)?;
    let (mut trainer, mut writer) = if resume {
        let mut t = Trainer::load_state(out.join("state"))?;
        t.set_epochs(cfg.train.epochs);
        log::info!("resuming at step {} (epoch {})", t.step_count(), t.epochs_done());
        (t, RunWriter::new(out, true)?)
    } else {
        let gen = build_generator(&cfg.generator, cfg.train.seed)?;
        let disc = build_discriminator_with(&cfg.discriminator, cfg.train.seed)?;
        let t = Trainer::new(gen, disc, cfg.train.clone())?;
        let w = RunWriter::new(out, false)?;
        w.write_checkpoint(&t, 0)?;
        (t, w)
    };
    write_run_header(out, "train", Some(cfg.train.seed), &cfg.to_text())?;
    trainer.run(&pairs, &mut writer)?;
    log::info!("finished after {} steps", trainer.step_count());
    Ok(())
}

pub fn cmd_reconstruct(model: &Path, input: &Path, out: &Path) -> Result<()> {
    let gen = UNetGenerator::load(model)?;
    let config = gen.config().to_manifest();
    if input.is_dir() {
        fs::create_dir_all(out)?;
        for (id, p) in scan_dir(input, "ppm")? {
            write_hsi(&reconstruct(&gen, &read_ppm(p)?)?, out.join(format!("{id}.hsi")))?;
        }
        write_run_header(out, "reconstruct", None, &config)
    } else {
        write_hsi(&reconstruct(&gen, &read_ppm(input)?)?, out)?;
        write_run_header(&sibling_dir(out), "reconstruct", None, &config)
    }
}

pub fn cmd_evaluate(reference: &Path, est: &Path, out: &Path) -> Result<()> {
    let refs = scan_dir(reference, "hsi")?;
    let ests = scan_dir(est, "hsi")?;
    let ref_ids: Vec<&String> = refs.iter().map(|(id, _)| id).collect();
    let est_ids: Vec<&String> = ests.iter().map(|(id, _)| id).collect();
    if ref_ids != est_ids {
        let a: HashSet<_> = ref_ids.iter().collect();
        let b: HashSet<_> = est_ids.iter().collect();
        let mut odd: Vec<String> = a.symmetric_difference(&b).map(|s| s.to_string()).collect();
        odd.sort();
        return Err(Error::parse("evaluate", format!("unpaired images: {}", odd.join(", "))));
    }
    if refs.is_empty() {
        return Err(Error::Empty("no .hsi files to evaluate"));
    }
    let cmf = CmfTable::cie1964_10deg();
    let mut csv = format!("{CSV_HEADER}\n");
    let mut reports = Vec::new();
    for ((id, rp), (_, ep)) in refs.iter().zip(&ests) {
        let e = read_hsi(ep)?;
        let mut r = read_hsi(rp)?;
        // Tiled estimates cover the top-left effective region.
        if (r.height(), r.width()) != (e.height(), e.width()) {
            r = r.crop(0, 0, e.height(), e.width())?;
        }
        let report = evaluate_image(&r, &e, cmf)?;
        csv.push_str(&report.csv_row(id));
        csv.push('\n');
        reports.push(report);
    }
    csv.push_str(&aggregate(&reports)?.csv_row("aggregate"));
    csv.push('\n');
    let dir = sibling_dir(out);
    fs::create_dir_all(&dir)?;
    fs::write(out, &csv)?;
    write_run_header(&dir, "evaluate", None, &csv)
}

pub fn cmd_prune_experiment(setup: &PruneSetup, data: Option<&Path>, out: &Path, seed: u64) -> Result<()> {
    let configs = skip_ladder(&setup.generator);
    let rows = match data {
        None => run_synthetic(setup, &configs, seed)?,
        Some(dir) => {
            let mut train = Vec::new();
            let mut test = Vec::new();
            for (i, (id, p)) in scan_dir(dir, "hsi")?.into_iter().enumerate() {
                let cube = read_hsi(p)?;
                if i % 2 == 0 {
                    train.push((id, cube));
                } else {
                    test.push((id, cube));
                }
            }
            if test.is_empty() {
                return Err(Error::Empty("the pruning experiment needs at least two images"));
            }
            run_split(setup, &configs, &train, &test, seed)?
        }
    };
    fs::create_dir_all(out)?;
    let mut csv = fs::File::create(out.join("prune.csv"))?;
    writeln!(csv, "{PRUNE_CSV_HEADER}")?;
    let mut bars = fs::File::create(out.join("bars.dat"))?;
    writeln!(bars, "# config\trf\trmse\trmse_rel\tgfc\tde00")?;
    for r in &rows {
        writeln!(csv, "{}", r.csv_row())?;
        let m = &r.report;
        writeln!(
            bars,
            "{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            r.label, r.receptive_field, m.rmse, m.rmse_rel, m.gfc, m.delta_e00
        )?;
    }
    let config = format!(
        "n_images={}\nimage_size={}\n{}",
        setup.n_images,
        setup.image_size,
        RunConfig {
            generator: setup.generator.clone(),
            discriminator: setup.discriminator.clone(),
            train: setup.train.clone(),
        }
        .to_text()
    );
    write_run_header(out, "prune-experiment", Some(seed), &config)
}

pub fn cmd_gradcheck(scope: Scope, inject_fault: bool) -> Result<()> {
    let results = match scope {
        Scope::Layer => layer_suite(inject_fault)?,
        Scope::Model => {
            let mut r = model_suite()?;
            if inject_fault {
                r.extend(layer_suite(true)?.into_iter().filter(|x| x.name == "faulty_leaky"));
            }
            r
        }
    };
    let mut failed = Vec::new();
    for r in &results {
        println!("{}", r.line());
        if !r.passed() {
            failed.push(r.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Check(format!("gradient mismatch in {}", failed.join(", "))))
    }
}
