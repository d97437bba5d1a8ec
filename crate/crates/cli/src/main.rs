use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use synthdefect::augment::augment_online;
use synthdefect::image::{ImageBuf, MaskBuf, PairSample, Provenance};
use synthdefect::labelgen::generate_label_detailed;
use synthdefect::metrics::{evaluate_set, report_csv, report_table, Aggregation};
use synthdefect::pairs::{ingest_external, mask_file, read_json, sidecar_file, write_json, write_pair, PairSidecar};
use synthdefect::pipeline::{
    assemble_dataset, gen_corpus, run_experiment, AssembleConfig, DatasetManifest, DatasetSources, ExperimentConfig,
    ManifestEntry,
};
use synthdefect::render::procedural_render;
use synthdefect::segnet::{self, predict_all, train_segmenter, SegModel};
use synthdefect::translator::{self, train_translator, translate, TranslatorModel};
use synthdefect::wgan::{self, sample_labels, train_wgan, WganModel};
use synthdefect::{par, Error, ErrorKind, SeededRng};

/// Synthetic defect data generation, augmentation and segmentation experiments.
#[derive(Parser, Debug)]
#[command(name = "synthdefect", version)]
struct Cli {
    /// Master seed (default: the config file's seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON experiment configuration; every command reads its own section.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory or file, depending on the command.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Run item-parallel work on a single thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum LabelMode {
    Trig,
    Wgan,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate procedural image/mask pairs.
    GenCorpus {
        /// Number of pairs.
        #[arg(long)]
        n: usize,
    },
    /// Generate label masks from the curve model or a trained WGAN.
    GenLabels {
        #[arg(long, value_enum)]
        mode: LabelMode,
        /// Number of masks.
        #[arg(long)]
        n: usize,
        /// WGAN checkpoint (required with `--mode wgan`).
        #[arg(long, required_if_eq("mode", "wgan"))]
        model: Option<PathBuf>,
        /// Binarization threshold for WGAN samples.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Train a WGAN on a directory of masks.
    TrainWgan {
        /// Directory of mask PNGs.
        #[arg(long)]
        masks: PathBuf,
        /// Per-step CSV log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Train the mask-to-image translator on a pair directory.
    TrainTranslator {
        /// Directory of `<id>_img.png` / `<id>_mask.png` pairs.
        #[arg(long)]
        pairs: PathBuf,
        /// Per-epoch CSV log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Translate masks into images with a trained translator.
    Translate {
        /// Translator checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Directory of mask PNGs.
        #[arg(long)]
        masks: PathBuf,
    },
    /// Render masks into procedural fiber-carpet images.
    Render {
        /// Directory of mask PNGs.
        #[arg(long)]
        masks: PathBuf,
    },
    /// Validate and list externally produced pairs.
    Ingest {
        /// Directory of pairs with JSON sidecars.
        #[arg(long)]
        dir: PathBuf,
    },
    /// Write augmented copies of every pair in a directory.
    Augment {
        /// Directory of pairs.
        #[arg(long)]
        pairs: PathBuf,
        /// Augmented copies per pair.
        #[arg(long, default_value_t = 1)]
        copies: usize,
    },
    /// Build a dataset manifest for one of the six variants.
    Assemble {
        /// Dataset variant, 1 to 6.
        #[arg(long)]
        variant: u8,
        /// Directory of real pairs.
        #[arg(long)]
        real: PathBuf,
        /// Directory of synthetic pairs (variants 3 to 6).
        #[arg(long)]
        synthetic: Option<PathBuf>,
        /// Real pairs to take (default: all).
        #[arg(long)]
        real_count: Option<usize>,
        /// Synthetic pairs to take (default: nine per real pair).
        #[arg(long)]
        synthetic_count: Option<usize>,
    },
    /// Train a segmenter on a manifest.
    TrainSegnet {
        /// Dataset manifest JSON.
        #[arg(long)]
        manifest: PathBuf,
        /// Per-epoch CSV log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Predict masks for every image in a directory.
    Predict {
        /// Segmenter checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Directory of `<id>_img.png` images.
        #[arg(long)]
        images: PathBuf,
        /// Probability threshold (default: the checkpoint's).
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Score predicted masks against ground truth.
    Evaluate {
        /// Directory of predicted `<id>_mask.png`.
        #[arg(long)]
        pred: PathBuf,
        /// Directory of ground-truth `<id>_mask.png`.
        #[arg(long)]
        gt: PathBuf,
        /// `micro` (summed counts) or `macro` (mean of per-image scores).
        #[arg(long, default_value = "micro")]
        mode: String,
    },
    /// Run the full six-variant experiment.
    RunExperiment {
        /// Comma-separated subset of variants, e.g. `1,2,3`.
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<u8>>,
    },
}

struct Ctx {
    cfg: ExperimentConfig,
    seed: u64,
    out: Option<PathBuf>,
}

impl Ctx {
    fn out(&self) -> anyhow::Result<&Path> {
        self.out.as_deref().context("--out is required for this command")
    }

    fn rng(&self) -> SeededRng {
        SeededRng::new(self.seed)
    }
}

fn mkdir(p: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

fn sorted_files(dir: &Path, suffix: &str) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for e in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let p = e?.path();
        if p.is_file() && p.file_name().is_some_and(|n| n.to_string_lossy().ends_with(suffix)) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

fn stem_without(p: &Path, suffix: &str) -> String {
    let name = p.file_name().unwrap_or_default().to_string_lossy();
    name.strip_suffix(suffix).unwrap_or(&name).to_string()
}

/// Masks in `dir`: `<id>_mask.png` files if any exist, otherwise every
/// `.png` that is not a `_img.png`.
fn load_masks(dir: &Path) -> anyhow::Result<Vec<(String, MaskBuf)>> {
    let mut files = sorted_files(dir, "_mask.png")?;
    let suffix = if files.is_empty() {
        files = sorted_files(dir, ".png")?
            .into_iter()
            .filter(|p| !p.to_string_lossy().ends_with("_img.png"))
            .collect();
        ".png"
    } else {
        "_mask.png"
    };
    files
        .into_iter()
        .map(|p| Ok((stem_without(&p, suffix), MaskBuf::load_png(&p)?)))
        .collect()
}

fn load_pairs(dir: &Path) -> anyhow::Result<Vec<(String, PairSample)>> {
    let (pairs, report) = ingest_external(dir)?;
    if pairs.is_empty() {
        return Err(Error::Data(format!("no valid pairs in {}\n{report}", dir.display())).into());
    }
    if !report.is_empty() {
        eprint!("skipped:\n{report}");
    }
    Ok(pairs.into_iter().map(|p| (p.id, p.pair)).collect())
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        mkdir(parent)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// `path` relative to `base` when it lies below it, otherwise absolute.
fn relative_to(path: &Path, base: &Path) -> anyhow::Result<PathBuf> {
    let path = path
        .canonicalize()
        .with_context(|| format!("resolving {}", path.display()))?;
    let base = base
        .canonicalize()
        .with_context(|| format!("resolving {}", base.display()))?;
    Ok(path.strip_prefix(&base).map(Path::to_path_buf).unwrap_or(path))
}

fn entries_from(dir: &Path, manifest_dir: &Path, only: Option<Provenance>) -> anyhow::Result<Vec<ManifestEntry>> {
    let rel = relative_to(dir, manifest_dir)?;
    let mut entries = Vec::new();
    for p in sorted_files(dir, ".json")? {
        let id = stem_without(&p, ".json");
        let sidecar: PairSidecar = read_json(&p)?;
        if only.is_none_or(|want| want == sidecar.provenance) {
            entries.push(ManifestEntry::in_dir(&rel, &id, sidecar.provenance));
        }
    }
    Ok(entries)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.sequential {
        par::set_parallel(false);
    }
    let cfg: ExperimentConfig = match &cli.config {
        Some(p) => read_json(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => ExperimentConfig::default(),
    };
    let seed = cli.seed.unwrap_or(cfg.seed);
    let ctx = Ctx {
        cfg,
        seed,
        out: cli.out,
    };
    let cfg = &ctx.cfg;

    match cli.command {
        Command::GenCorpus { n } => {
            let out = ctx.out()?;
            let pairs = gen_corpus(n, &cfg.labels, &cfg.style, &ctx.rng())?;
            for (i, pair) in pairs.iter().enumerate() {
                let sidecar = PairSidecar {
                    provenance: Provenance::Real,
                    seed: Some(seed),
                    generator: serde_json::json!({ "index": i, "labels": cfg.labels, "style": cfg.style }),
                };
                write_pair(out, &format!("real_{i:04}"), pair, &sidecar)?;
            }
            println!("wrote {n} pairs to {}", out.display());
        }
        Command::GenLabels {
            mode,
            n,
            model,
            threshold,
        } => {
            let out = ctx.out()?;
            mkdir(out)?;
            let rng = ctx.rng();
            let (prefix, prov, items): (&str, Provenance, Vec<(MaskBuf, serde_json::Value)>) = match mode {
                LabelMode::Trig => {
                    let labels =
                        par::map_indexed(n, |i| generate_label_detailed(&mut rng.derive(i as u64), &cfg.labels))
                            .into_iter()
                            .collect::<Result<Vec<_>, _>>()?;
                    let items = labels
                        .into_iter()
                        .enumerate()
                        .map(|(i, g)| {
                            let meta = serde_json::json!({ "index": i, "curves": g.curves, "attempts": g.attempts, "config": cfg.labels });
                            (g.mask, meta)
                        })
                        .collect();
                    ("trig", Provenance::SyntheticTrig, items)
                }
                LabelMode::Wgan => {
                    let path = model.context("--model is required for --mode wgan")?;
                    let model = WganModel::load(&path)?;
                    let t = threshold.unwrap_or(model.config().binarize_threshold);
                    let masks = sample_labels(&model, n, &mut rng.clone(), t)?;
                    let items = masks
                        .into_iter()
                        .enumerate()
                        .map(|(i, m)| (m, serde_json::json!({ "index": i, "model": path, "threshold": t })))
                        .collect();
                    ("wgan", Provenance::SyntheticWgan, items)
                }
            };
            for (i, (mask, meta)) in items.iter().enumerate() {
                let id = format!("{prefix}_{i:04}");
                mask.save_png(&out.join(format!("{id}.png")))?;
                let sidecar = PairSidecar {
                    provenance: prov,
                    seed: Some(seed),
                    generator: meta.clone(),
                };
                write_json(&out.join(sidecar_file(&id)), &sidecar)?;
            }
            println!("wrote {n} labels to {}", out.display());
        }
        Command::TrainWgan { masks, log } => {
            let out = ctx.out()?;
            let masks: Vec<MaskBuf> = load_masks(&masks)?.into_iter().map(|(_, m)| m).collect();
            let (model, rows) = train_wgan(&masks, &cfg.wgan, &ctx.rng())?;
            model.save(out)?;
            if let Some(log) = log {
                write_text(&log, &wgan::log_to_csv(&rows))?;
            }
            println!("trained WGAN for {} steps -> {}", rows.len(), out.display());
        }
        Command::TrainTranslator { pairs, log } => {
            let out = ctx.out()?;
            let pairs: Vec<PairSample> = load_pairs(&pairs)?.into_iter().map(|(_, p)| p).collect();
            let (model, rows) = train_translator(&pairs, &cfg.translator, &ctx.rng())?;
            model.save(out)?;
            if let Some(log) = log {
                write_text(&log, &translator::log_to_csv(&rows))?;
            }
            println!("trained translator for {} epochs -> {}", rows.len(), out.display());
        }
        Command::Translate { model, masks } => {
            let out = ctx.out()?;
            let model = TranslatorModel::load(&model)?;
            let dir = masks;
            let masks = load_masks(&dir)?;
            for (id, mask) in &masks {
                // Label sidecars carry the label source; default to the curve model.
                let prov = read_json::<PairSidecar>(&dir.join(sidecar_file(id)))
                    .map(|s| s.provenance)
                    .unwrap_or(Provenance::SyntheticTrig);
                let pair = PairSample::new(translate(&model, mask)?, mask.clone(), prov)?;
                let sidecar = PairSidecar {
                    provenance: pair.provenance(),
                    seed: None,
                    generator: serde_json::json!({ "translator": model.config() }),
                };
                write_pair(out, id, &pair, &sidecar)?;
            }
            println!("translated {} masks into {}", masks.len(), out.display());
        }
        Command::Render { masks } => {
            let out = ctx.out()?;
            let masks = load_masks(&masks)?;
            let rng = ctx.rng();
            for (i, (id, mask)) in masks.iter().enumerate() {
                let image = procedural_render(mask, &cfg.style, &mut rng.derive(i as u64))?;
                let sidecar = PairSidecar {
                    provenance: Provenance::Real,
                    seed: Some(seed),
                    generator: serde_json::json!({ "index": i, "style": cfg.style }),
                };
                write_pair(
                    out,
                    id,
                    &PairSample::new(image, mask.clone(), Provenance::Real)?,
                    &sidecar,
                )?;
            }
            println!("rendered {} masks into {}", masks.len(), out.display());
        }
        Command::Ingest { dir } => {
            let (pairs, report) = ingest_external(&dir)?;
            for p in &pairs {
                println!("ok {} ({:?})", p.id, p.pair.provenance());
            }
            for issue in &report.issues {
                println!("skipped {}: {}", issue.id, issue.problem);
            }
            println!("{} pairs accepted, {} issues", pairs.len(), report.issues.len());
            if let Some(out) = &ctx.out {
                write_text(out, &report.to_string())?;
            }
        }
        Command::Augment { pairs, copies } => {
            let out = ctx.out()?;
            let pairs = load_pairs(&pairs)?;
            let rng = ctx.rng();
            for (i, (id, pair)) in pairs.iter().enumerate() {
                for k in 0..copies {
                    let aug = augment_online(&mut rng.derive(i as u64).derive(k as u64), pair, &cfg.augment)?;
                    let sidecar = PairSidecar {
                        provenance: pair.provenance(),
                        seed: Some(seed),
                        generator: serde_json::json!({ "source": id, "copy": k, "augment": cfg.augment }),
                    };
                    write_pair(out, &format!("{id}_aug{k}"), &aug, &sidecar)?;
                }
            }
            println!("wrote {} augmented pairs to {}", pairs.len() * copies, out.display());
        }
        Command::Assemble {
            variant,
            real,
            synthetic,
            real_count,
            synthetic_count,
        } => {
            let out = ctx.out()?;
            let manifest_dir = out
                .parent()
                .filter(|p| !p.as_os_str().is_empty())
                .unwrap_or(Path::new("."));
            mkdir(manifest_dir)?;
            let real = entries_from(&real, manifest_dir, Some(Provenance::Real))?;
            let (trig, wgan) = match &synthetic {
                Some(dir) => (
                    entries_from(dir, manifest_dir, Some(Provenance::SyntheticTrig))?,
                    entries_from(dir, manifest_dir, Some(Provenance::SyntheticWgan))?,
                ),
                None => (Vec::new(), Vec::new()),
            };
            let real_count = real_count.unwrap_or(real.len());
            let acfg = AssembleConfig {
                real_count,
                synthetic_count: synthetic_count.unwrap_or(9 * real_count),
                augment: cfg.augment.clone(),
                seed,
            };
            let manifest = assemble_dataset(variant, &DatasetSources { real, trig, wgan }, &acfg)?;
            manifest.save(out)?;
            println!(
                "dataset {variant}: {} real + {} synthetic -> {}",
                manifest.counts.real,
                manifest.counts.synthetic,
                out.display()
            );
        }
        Command::TrainSegnet { manifest, log } => {
            let out = ctx.out()?;
            let m = DatasetManifest::load(&manifest)?;
            let base = manifest
                .parent()
                .filter(|p| !p.as_os_str().is_empty())
                .unwrap_or(Path::new("."));
            let (model, rows) = train_segmenter(&m, base, &cfg.segnet, &ctx.rng())?;
            model.save(out)?;
            if let Some(log) = log {
                write_text(&log, &segnet::log_to_csv(&rows))?;
            }
            if let Some(last) = rows.last() {
                println!(
                    "epoch {}: train IoU {:.6}, val IoU {:.6}",
                    last.epoch, last.train_iou, last.val_iou
                );
            }
            println!("saved segmenter -> {}", out.display());
        }
        Command::Predict {
            model,
            images,
            threshold,
        } => {
            let out = ctx.out()?;
            mkdir(out)?;
            let model = SegModel::load(&model)?;
            let mut files = sorted_files(&images, "_img.png")?;
            let suffix = if files.is_empty() {
                files = sorted_files(&images, ".png")?;
                ".png"
            } else {
                "_img.png"
            };
            let imgs: Vec<ImageBuf> = files.iter().map(|p| ImageBuf::load_png(p)).collect::<Result<_, _>>()?;
            let refs: Vec<&ImageBuf> = imgs.iter().collect();
            let preds = predict_all(&model, &refs, threshold.unwrap_or(model.config().threshold))?;
            for (p, mask) in files.iter().zip(&preds) {
                mask.save_png(&out.join(mask_file(&stem_without(p, suffix))))?;
            }
            println!("wrote {} predictions to {}", preds.len(), out.display());
        }
        Command::Evaluate { pred, gt, mode } => {
            let mode: Aggregation = mode.parse()?;
            let pred_files = sorted_files(&pred, "_mask.png")?;
            if pred_files.is_empty() {
                return Err(Error::Data(format!("no *_mask.png predictions in {}", pred.display())).into());
            }
            let mut preds = Vec::new();
            let mut gts = Vec::new();
            for p in &pred_files {
                let name = p.file_name().unwrap_or_default();
                let g = gt.join(name);
                if !g.exists() {
                    return Err(Error::Data(format!("no ground truth for {}", name.to_string_lossy())).into());
                }
                preds.push(MaskBuf::load_png(p)?);
                gts.push(MaskBuf::load_png(&g)?);
            }
            let row = evaluate_set(&preds, &gts, mode)?;
            let label = format!("{mode:?}").to_lowercase();
            let rows = vec![(label, row)];
            let table = report_table(&rows);
            print!("{table}");
            if let Some(out) = &ctx.out {
                write_text(out, &table)?;
                write_text(&out.with_extension("csv"), &report_csv(&rows))?;
            }
        }
        Command::RunExperiment { variants } => {
            let out = ctx.out()?;
            let mut cfg = ctx.cfg.clone();
            cfg.seed = ctx.seed;
            if let Some(v) = variants {
                cfg.variants = v;
            }
            let report = run_experiment(&cfg, out)?;
            print!("{}", report.table);
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()).map(Error::kind) {
        Some(ErrorKind::Config) => 2,
        Some(ErrorKind::Divergence) => 4,
        Some(ErrorKind::Data) => 3,
        None if err.chain().any(|e| e.is::<std::io::Error>()) => 3,
        None => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(exit_code(&Error::Config("x".into()).into()), 2);
        assert_eq!(exit_code(&Error::Data("x".into()).into()), 3);
        let div = Error::Divergence {
            step: 1,
            reason: "nan".into(),
        };
        assert_eq!(exit_code(&div.in_stage("wgan", 1).into()), 4);
        assert_eq!(exit_code(&anyhow::anyhow!("usage")), 2);
    }

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
