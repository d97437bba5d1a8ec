//! Corpus generation, the six dataset variants, and end-to-end experiment
//! orchestration.
//!
//! Variants: 1 real only; 2 real with online augmentation; 3 real plus
//! trig-label synthetic pairs; 4 as 3 with online augmentation; 5 real plus
//! WGAN-label synthetic pairs; 6 as 5 with online augmentation. Synthetic
//! pairs are produced by translating generated labels into images.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::AugmentPolicy;
use crate::error::{Error, Result};
use crate::image::{ImageBuf, MaskBuf, PairSample, Provenance};
use crate::labelgen::{generate_label_detailed, LabelGenConfig};
use crate::metrics::{dataset_label, evaluate_set, report_csv, report_table, Aggregation, MetricRow};
use crate::pairs::{image_file, mask_file, read_json, sidecar_file, write_json, write_pair, PairSidecar};
use crate::par;
use crate::render::{procedural_render, RenderStyle};
use crate::rng::SeededRng;
use crate::segnet::{self, predict_all, train_segmenter, SegConfig, SegLogRow};
use crate::translator::{self, train_translator, translate_all, TranslatorConfig, TranslatorModel};
use crate::wgan::{self, sample_labels, train_wgan, WganConfig};

pub const VARIANTS: [u8; 6] = [1, 2, 3, 4, 5, 6];

/// Where a variant's synthetic pairs come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticSource {
    Trig,
    Wgan,
}

impl SyntheticSource {
    pub fn provenance(self) -> Provenance {
        match self {
            SyntheticSource::Trig => Provenance::SyntheticTrig,
            SyntheticSource::Wgan => Provenance::SyntheticWgan,
        }
    }
}

pub fn check_variant(variant: u8) -> Result<()> {
    if VARIANTS.contains(&variant) {
        Ok(())
    } else {
        Err(Error::Config(format!("dataset variant must be 1..=6, got {variant}")))
    }
}

pub fn synthetic_source(variant: u8) -> Option<SyntheticSource> {
    match variant {
        3 | 4 => Some(SyntheticSource::Trig),
        5 | 6 => Some(SyntheticSource::Wgan),
        _ => None,
    }
}

pub fn uses_online_da(variant: u8) -> bool {
    matches!(variant, 2 | 4 | 6)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the directory holding the manifest.
    pub image: PathBuf,
    pub mask: PathBuf,
    pub provenance: Provenance,
}

impl ManifestEntry {
    /// Entry for pair `id` stored in `dir`, given relative to the manifest directory.
    pub fn in_dir(dir: &Path, id: &str, provenance: Provenance) -> Self {
        Self {
            id: id.to_string(),
            image: dir.join(image_file(id)),
            mask: dir.join(mask_file(id)),
            provenance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub real: usize,
    pub synthetic: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub variant: u8,
    pub entries: Vec<ManifestEntry>,
    pub online_da: Option<AugmentPolicy>,
    pub seed: u64,
    pub counts: ManifestCounts,
}

impl DatasetManifest {
    /// Checks the per-variant invariants.
    pub fn validate(&self) -> Result<()> {
        check_variant(self.variant)?;
        let v = self.variant;
        let bad = |m: String| Err(Error::Data(format!("dataset {v} manifest: {m}")));
        let real = self.entries.iter().filter(|e| e.provenance == Provenance::Real).count();
        let synthetic = self.entries.len() - real;
        if (ManifestCounts { real, synthetic }) != self.counts {
            return bad(format!(
                "counts {:?} disagree with entries ({real} real, {synthetic} synthetic)",
                self.counts
            ));
        }
        match synthetic_source(v) {
            None if synthetic > 0 => return bad("real-only variant lists synthetic pairs".into()),
            Some(src) => {
                if synthetic == 0 {
                    return bad("synthetic variant lists no synthetic pairs".into());
                }
                if let Some(e) = self
                    .entries
                    .iter()
                    .find(|e| e.provenance != Provenance::Real && e.provenance != src.provenance())
                {
                    return bad(format!("entry {} has provenance {:?}", e.id, e.provenance));
                }
            }
            None => {}
        }
        if self.online_da.is_some() != uses_online_da(v) {
            return bad("online augmentation flag does not match the variant".into());
        }
        let ids: BTreeSet<&str> = self.entries.iter().map(|e| e.id.as_str()).collect();
        if ids.len() != self.entries.len() {
            return bad("duplicate entry ids".into());
        }
        Ok(())
    }

    pub fn ids(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.id.as_str()).collect()
    }

    /// Loads every entry, resolving paths against `base`.
    pub fn resolve(&self, base: &Path) -> Result<Vec<PairSample>> {
        par::map_slice(&self.entries, |e| {
            let image = ImageBuf::load_png(&base.join(&e.image))?;
            let mask = MaskBuf::load_png(&base.join(&e.mask))?;
            PairSample::new(image, mask, e.provenance)
        })
        .into_iter()
        .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = read_json(path)?;
        m.validate()?;
        Ok(m)
    }
}

/// Candidate entries for dataset assembly.
#[derive(Debug, Clone, Default)]
pub struct DatasetSources {
    pub real: Vec<ManifestEntry>,
    pub trig: Vec<ManifestEntry>,
    pub wgan: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssembleConfig {
    pub real_count: usize,
    pub synthetic_count: usize,
    pub augment: AugmentPolicy,
    pub seed: u64,
}

/// Builds the manifest of one dataset variant from the first
/// `real_count` real and `synthetic_count` synthetic source entries.
pub fn assemble_dataset(variant: u8, sources: &DatasetSources, cfg: &AssembleConfig) -> Result<DatasetManifest> {
    check_variant(variant)?;
    if sources.real.len() < cfg.real_count || cfg.real_count == 0 {
        return Err(Error::Data(format!(
            "dataset {variant} needs {} real pairs, {} available",
            cfg.real_count.max(1),
            sources.real.len()
        )));
    }
    let mut entries: Vec<ManifestEntry> = sources.real[..cfg.real_count].to_vec();
    let mut synthetic = 0;
    if let Some(src) = synthetic_source(variant) {
        let pool = match src {
            SyntheticSource::Trig => &sources.trig,
            SyntheticSource::Wgan => &sources.wgan,
        };
        if pool.len() < cfg.synthetic_count || cfg.synthetic_count == 0 {
            return Err(Error::Data(format!(
                "dataset {variant} needs {} {:?}-label synthetic pairs, {} available (missing translator or label model?)",
                cfg.synthetic_count.max(1),
                src,
                pool.len()
            )));
        }
        entries.extend_from_slice(&pool[..cfg.synthetic_count]);
        synthetic = cfg.synthetic_count;
    }
    let manifest = DatasetManifest {
        variant,
        entries,
        online_da: uses_online_da(variant).then(|| cfg.augment.clone()),
        seed: cfg.seed,
        counts: ManifestCounts {
            real: cfg.real_count,
            synthetic,
        },
    };
    manifest.validate()?;
    Ok(manifest)
}

/// `n` procedural pairs: pair `i` takes its label from stream `(i, 0)` and
/// its rendering noise from stream `(i, 1)`.
pub fn gen_corpus(
    n: usize,
    label_cfg: &LabelGenConfig,
    style: &RenderStyle,
    rng: &SeededRng,
) -> Result<Vec<PairSample>> {
    if n == 0 {
        return Err(Error::InvalidArgument("corpus size must be >= 1".into()));
    }
    label_cfg.validate()?;
    style.validate()?;
    par::map_indexed(n, |i| {
        let item = rng.derive(i as u64);
        let mask = generate_label_detailed(&mut item.derive(0), label_cfg)?.mask;
        let image = procedural_render(&mask, style, &mut item.derive(1))?;
        PairSample::new(image, mask, Provenance::Real)
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentScale {
    pub image_size: usize,
    pub real: usize,
    pub synthetic: usize,
    pub test: usize,
}

impl Default for ExperimentScale {
    fn default() -> Self {
        Self {
            image_size: 64,
            real: 30,
            synthetic: 270,
            test: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub scale: ExperimentScale,
    pub labels: LabelGenConfig,
    pub style: RenderStyle,
    pub wgan: WganConfig,
    pub translator: TranslatorConfig,
    pub segnet: SegConfig,
    pub augment: AugmentPolicy,
    pub aggregation: Aggregation,
    pub variants: Vec<u8>,
}

pub const REFERENCE_SEED: u64 = 20_240_601;

impl Default for ExperimentConfig {
    fn default() -> Self {
        let scale = ExperimentScale::default();
        Self {
            seed: REFERENCE_SEED,
            scale,
            labels: LabelGenConfig::sized(scale.image_size, scale.image_size),
            style: RenderStyle::default(),
            wgan: WganConfig {
                batch_size: 16,
                ..WganConfig::default()
            },
            translator: TranslatorConfig::default(),
            segnet: SegConfig::default(),
            augment: AugmentPolicy::scaled_to(scale.image_size),
            aggregation: Aggregation::Micro,
            variants: VARIANTS.to_vec(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let s = self.scale;
        if s.real == 0 || s.test == 0 {
            return Err(Error::Config(
                "experiment needs at least one real and one test pair".into(),
            ));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("no dataset variants selected".into()));
        }
        for &v in &self.variants {
            check_variant(v)?;
            if synthetic_source(v).is_some() && s.synthetic == 0 {
                return Err(Error::Config(format!("dataset {v} needs a positive synthetic count")));
            }
        }
        let size = s.image_size;
        if (self.labels.width, self.labels.height) != (size, size) {
            return Err(Error::Config("label size must equal the experiment image size".into()));
        }
        if self.translator.image_size != size || self.segnet.input_size != size || self.wgan.mask_size != size {
            return Err(Error::Config(
                "stage image sizes must equal the experiment image size".into(),
            ));
        }
        self.labels.validate()?;
        self.style.validate()?;
        self.translator.validate()?;
        self.segnet.validate()?;
        self.augment.validate()?;
        if self
            .variants
            .iter()
            .any(|&v| synthetic_source(v) == Some(SyntheticSource::Wgan))
        {
            self.wgan.validate()?;
        }
        Ok(())
    }
}

/// Fixed sub-stream ids of the master seed.
mod stream {
    pub const CORPUS: u64 = 1;
    pub const TRANSLATOR: u64 = 2;
    pub const TRIG_LABELS: u64 = 3;
    pub const WGAN_TRAIN: u64 = 4;
    pub const WGAN_SAMPLE: u64 = 5;
    pub const SEGNET: u64 = 10;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<(String, MetricRow)>,
    pub logs: BTreeMap<u8, Vec<SegLogRow>>,
    pub table: String,
    pub csv: String,
}

impl ExperimentReport {
    pub fn row(&self, variant: u8) -> Option<&MetricRow> {
        let label = dataset_label(variant as usize);
        self.rows.iter().find(|(l, _)| *l == label).map(|(_, r)| r)
    }
}

fn mkdir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_text(p: &Path, text: &str) -> Result<()> {
    fs::write(p, text).map_err(|e| Error::io(p, e))
}

fn pair_id(prefix: &str, i: usize) -> String {
    format!("{prefix}_{i:04}")
}

fn write_labels(dir: &Path, prefix: &str, masks: &[MaskBuf], sidecars: &[serde_json::Value]) -> Result<Vec<String>> {
    mkdir(dir)?;
    let ids: Vec<String> = (0..masks.len()).map(|i| pair_id(prefix, i)).collect();
    for ((id, m), meta) in ids.iter().zip(masks).zip(sidecars) {
        m.save_png(&dir.join(format!("{id}.png")))?;
        write_json(&dir.join(sidecar_file(id)), meta)?;
    }
    Ok(ids)
}

/// Runs the full experiment under `out`, producing `corpus/`,
/// `labels/{trig,wgan}/`, `synthetic/`, `manifests/`, `models/` and
/// `reports/`. Failures name the stage and the master seed.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentReport> {
    cfg.validate()?;
    let seed = cfg.seed;
    let master = SeededRng::new(seed);
    let s = cfg.scale;
    let dirs = [
        "corpus",
        "labels/trig",
        "labels/wgan",
        "synthetic",
        "manifests",
        "models",
        "reports",
    ];
    for d in dirs {
        mkdir(&out.join(d))?;
    }
    let stage = |name: &str| {
        let name = name.to_string();
        move |e: Error| e.in_stage(name, seed)
    };
    write_json(&out.join("reports/experiment_config.json"), cfg).map_err(stage("setup"))?;

    // Corpus: real training pairs and the shared held-out test set.
    let corpus_rng = master.derive(stream::CORPUS);
    let corpus = gen_corpus(s.real + s.test, &cfg.labels, &cfg.style, &corpus_rng).map_err(stage("corpus"))?;
    let corpus_dir = out.join("corpus");
    let mut real_ids = Vec::new();
    let mut test_ids = Vec::new();
    for (i, pair) in corpus.iter().enumerate() {
        let (id, list) = if i < s.real {
            (pair_id("real", i), &mut real_ids)
        } else {
            (pair_id("test", i - s.real), &mut test_ids)
        };
        let sidecar = PairSidecar {
            provenance: Provenance::Real,
            seed: Some(seed),
            generator: serde_json::json!({ "stage": "corpus", "index": i, "style": cfg.style }),
        };
        write_pair(&corpus_dir, &id, pair, &sidecar).map_err(stage("corpus"))?;
        list.push(id);
    }
    // Everything downstream reads the stored (quantized) pairs.
    let load = |dir: &Path, id: &str, prov| -> Result<PairSample> {
        PairSample::new(
            ImageBuf::load_png(&dir.join(image_file(id)))?,
            MaskBuf::load_png(&dir.join(mask_file(id)))?,
            prov,
        )
    };
    let real_pairs: Vec<PairSample> = real_ids
        .iter()
        .map(|id| load(&corpus_dir, id, Provenance::Real))
        .collect::<Result<_>>()
        .map_err(stage("corpus"))?;
    let test_pairs: Vec<PairSample> = test_ids
        .iter()
        .map(|id| load(&corpus_dir, id, Provenance::Real))
        .collect::<Result<_>>()
        .map_err(stage("corpus"))?;

    let need_trig = cfg
        .variants
        .iter()
        .any(|&v| synthetic_source(v) == Some(SyntheticSource::Trig));
    let need_wgan = cfg
        .variants
        .iter()
        .any(|&v| synthetic_source(v) == Some(SyntheticSource::Wgan));

    let translator_model: Option<TranslatorModel> = if need_trig || need_wgan {
        let (model, log) = train_translator(&real_pairs, &cfg.translator, &master.derive(stream::TRANSLATOR))
            .map_err(stage("translator"))?;
        model
            .save(&out.join("models/translator.ckpt"))
            .map_err(stage("translator"))?;
        write_text(&out.join("reports/translator_log.csv"), &translator::log_to_csv(&log))
            .map_err(stage("translator"))?;
        Some(model)
    } else {
        None
    };

    let synth_dir = out.join("synthetic");
    let mut sources = DatasetSources {
        real: real_ids
            .iter()
            .map(|id| ManifestEntry::in_dir(Path::new("../corpus"), id, Provenance::Real))
            .collect(),
        ..DatasetSources::default()
    };
    let synthesize = |name: &str,
                      masks: Vec<MaskBuf>,
                      metas: Vec<serde_json::Value>,
                      src: SyntheticSource|
     -> Result<Vec<ManifestEntry>> {
        let prefix = match src {
            SyntheticSource::Trig => "trig",
            SyntheticSource::Wgan => "wgan",
        };
        let ids = write_labels(&out.join("labels").join(prefix), prefix, &masks, &metas)?;
        let model = translator_model
            .as_ref()
            .expect("translator trained for synthetic variants");
        let images = translate_all(model, &masks)?;
        let mut entries = Vec::with_capacity(ids.len());
        for ((id, mask), (image, meta)) in ids.iter().zip(masks).zip(images.into_iter().zip(metas)) {
            let pair = PairSample::new(image, mask, src.provenance())?;
            let sidecar = PairSidecar {
                provenance: src.provenance(),
                seed: Some(seed),
                generator: serde_json::json!({ "stage": name, "label": meta }),
            };
            write_pair(&synth_dir, id, &pair, &sidecar)?;
            entries.push(ManifestEntry::in_dir(Path::new("../synthetic"), id, src.provenance()));
        }
        Ok(entries)
    };

    if need_trig {
        let rng = master.derive(stream::TRIG_LABELS);
        let labels: Vec<_> = par::map_indexed(s.synthetic, |i| {
            generate_label_detailed(&mut rng.derive(i as u64), &cfg.labels)
        })
        .into_iter()
        .collect::<Result<_>>()
        .map_err(stage("trig-labels"))?;
        let metas = labels
            .iter()
            .map(|g| serde_json::json!({ "curves": g.curves, "attempts": g.attempts }))
            .collect();
        let masks = labels.into_iter().map(|g| g.mask).collect();
        sources.trig =
            synthesize("trig-labels", masks, metas, SyntheticSource::Trig).map_err(stage("trig-synthesis"))?;
    }
    if need_wgan {
        let masks: Vec<MaskBuf> = real_pairs.iter().map(|p| p.mask().clone()).collect();
        let (model, log) = train_wgan(&masks, &cfg.wgan, &master.derive(stream::WGAN_TRAIN)).map_err(stage("wgan"))?;
        model.save(&out.join("models/wgan.ckpt")).map_err(stage("wgan"))?;
        write_text(&out.join("reports/wgan_log.csv"), &wgan::log_to_csv(&log)).map_err(stage("wgan"))?;
        let sampled = sample_labels(
            &model,
            s.synthetic,
            &mut master.derive(stream::WGAN_SAMPLE),
            cfg.wgan.binarize_threshold,
        )
        .map_err(stage("wgan-labels"))?;
        let metas = (0..sampled.len()).map(|i| serde_json::json!({ "sample": i })).collect();
        sources.wgan =
            synthesize("wgan-labels", sampled, metas, SyntheticSource::Wgan).map_err(stage("wgan-synthesis"))?;
    }

    let manifest_dir = out.join("manifests");
    let test_set: BTreeSet<&str> = test_ids.iter().map(String::as_str).collect();
    let test_images: Vec<&ImageBuf> = test_pairs.iter().map(|p| p.image()).collect();
    let test_masks: Vec<MaskBuf> = test_pairs.iter().map(|p| p.mask().clone()).collect();
    let mut rows = Vec::new();
    let mut logs = BTreeMap::new();
    for &v in &cfg.variants {
        let assemble = AssembleConfig {
            real_count: s.real,
            synthetic_count: s.synthetic,
            augment: cfg.augment.clone(),
            seed: master.derive(stream::SEGNET + v as u64).seed(),
        };
        let tag = format!("dataset-{v}");
        let manifest = assemble_dataset(v, &sources, &assemble).map_err(stage(&tag))?;
        if manifest.ids().iter().any(|id| test_set.contains(id)) {
            return Err(Error::Data(format!("dataset {v} overlaps the test set")).in_stage(tag, seed));
        }
        let manifest_path = manifest_dir.join(format!("dataset_{v}.json"));
        manifest.save(&manifest_path).map_err(stage(&tag))?;

        let seg_tag = format!("segnet-{v}");
        let (model, log) = train_segmenter(&manifest, &manifest_dir, &cfg.segnet, &SeededRng::new(manifest.seed))
            .map_err(stage(&seg_tag))?;
        model
            .save(&out.join(format!("models/segnet_{v}.ckpt")))
            .map_err(stage(&seg_tag))?;
        write_text(
            &out.join(format!("reports/segnet_{v}_log.csv")),
            &segnet::log_to_csv(&log),
        )
        .map_err(stage(&seg_tag))?;

        let eval_tag = format!("evaluate-{v}");
        let preds = predict_all(&model, &test_images, cfg.segnet.threshold).map_err(stage(&eval_tag))?;
        let row = evaluate_set(&preds, &test_masks, cfg.aggregation).map_err(stage(&eval_tag))?;
        rows.push((dataset_label(v as usize), row));
        logs.insert(v, log);
    }

    let table = report_table(&rows);
    let csv = report_csv(&rows);
    write_text(&out.join("reports/results.txt"), &table).map_err(stage("report"))?;
    write_text(&out.join("reports/results.csv"), &csv).map_err(stage("report"))?;
    Ok(ExperimentReport { rows, logs, table, csv })
}
