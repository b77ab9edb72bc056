use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fmdl::image_io::{load_gray, load_rgb, save_unit_gray, write_raw};
use fmdl::locfuse::{fuse_maps, FusionWeights};
use fmdl::maskgen::{align_mask, pair_to_mask, BinaryMask, ThresholdConfig};
use fmdl::metrics::{pr_curve, roc_curve, ScoredSample};
use fmdl::net::checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};
use fmdl::net::{normalize_input, Model, ModelConfig, Network};
use fmdl::residual::{residual_stats, NoiseFilter};
use fmdl::synthbench::{generate, SpliceSpec};
use fmdl::trainer::{
    evaluate, load_samples, read_manifest, train_stage, write_manifest, DataOptions, ManifestRecord, Split, Stage,
};
use fmdl::{resize, Scalar};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{write_snapshot, Precision, Settings};
use crate::failure::{CliResult, Failure};
use crate::report::{read_report, render_text, row, write_csv};
use crate::{
    EvalArgs, ExtractNoiseArgs, FilterArg, LocalizeArgs, MakeMasksArgs, ReportArgs, SplitArg, StepArg, SynthArgs,
    TrainArgs,
};

fn create_dir(dir: &Path) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    dir.canonicalize().map_err(|e| Failure::io(dir, e))
}

fn canonical(path: &Path) -> CliResult<PathBuf> {
    path.canonicalize().map_err(|e| Failure::io(path, e))
}

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
}

/// Expand directories into their image files, sorted by name.
fn image_files(inputs: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Failure::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| is_image(f))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

/// Output file stems, rejecting collisions.
fn unique_stems(paths: &[PathBuf]) -> CliResult<Vec<String>> {
    let stems: Vec<String> = paths.iter().map(|p| stem(p)).collect();
    let mut seen = HashSet::new();
    for s in &stems {
        if !seen.insert(s) {
            return Err(Failure::data(format!("two inputs share the file name '{s}'")));
        }
    }
    Ok(stems)
}

fn write_lines(path: &Path, lines: &[serde_json::Value]) -> CliResult<()> {
    let file = File::create(path).map_err(|e| Failure::io(path, e))?;
    let mut w = BufWriter::new(file);
    for l in lines {
        writeln!(w, "{l}").map_err(|e| Failure::io(path, e))?;
    }
    w.flush().map_err(|e| Failure::io(path, e))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Failure::io(path, e))
}

fn in_split(r: &ManifestRecord, split: SplitArg) -> bool {
    match split {
        SplitArg::All => true,
        SplitArg::Train => r.split == Split::Train,
        SplitArg::Val => r.split == Split::Val,
        SplitArg::Test => r.split == Split::Test,
    }
}

fn split_name(split: SplitArg) -> &'static str {
    match split {
        SplitArg::Train => "train",
        SplitArg::Val => "val",
        SplitArg::Test => "test",
        SplitArg::All => "all",
    }
}

fn manifest_path(flag: Option<PathBuf>, settings: &mut Settings) -> CliResult<PathBuf> {
    if let Some(m) = flag {
        settings.manifest = Some(m);
    }
    let m = settings
        .manifest
        .clone()
        .ok_or_else(|| Failure::usage("no manifest: pass --manifest or set the manifest key"))?;
    let abs = canonical(&m)?;
    settings.manifest = Some(abs.clone());
    Ok(abs)
}

fn parse_gamma(text: &str) -> CliResult<FusionWeights> {
    Ok(text.parse::<FusionWeights>()?)
}

pub fn extract_noise(a: ExtractNoiseArgs) -> CliResult<()> {
    if !(0.0..=50.0).contains(&a.sigma) {
        return Err(Failure::usage(format!("--sigma {} outside [0, 50]", a.sigma)));
    }
    let filter = match a.filter {
        FilterArg::Wavelet => NoiseFilter::Wavelet,
        FilterArg::Srm => NoiseFilter::Srm,
    };
    let files = image_files(&a.input)?;
    if files.is_empty() {
        return Err(Failure::data("no input images"));
    }
    let stems = unique_stems(&files)?;
    let out = create_dir(&a.out)?;

    #[derive(Serialize)]
    struct Snapshot<'a> {
        sigma: f64,
        filter: NoiseFilter,
        input: &'a [PathBuf],
    }
    write_snapshot(
        &out,
        &Snapshot {
            sigma: a.sigma,
            filter,
            input: &files,
        },
    )?;

    let stats: Vec<serde_json::Value> = files
        .par_iter()
        .zip(&stems)
        .map(|(f, s)| {
            let img = load_rgb::<f64>(f)?;
            let map = filter.apply(&img, a.sigma)?;
            write_raw(&out.join(format!("{s}.f32")), &map.residual, map.sigma)?;
            let st = residual_stats(&map)?;
            Ok(json!({"image": f, "mean": st.mean, "variance": st.variance}))
        })
        .collect::<fmdl::Result<_>>()?;
    write_lines(&out.join("stats.jsonl"), &stats)?;
    eprintln!("wrote {} residuals to {}", stats.len(), out.display());
    Ok(())
}

pub fn make_masks(a: MakeMasksArgs) -> CliResult<()> {
    let cfg = ThresholdConfig {
        threshold: a.threshold,
        morph_cleanup: !a.no_cleanup,
    };
    cfg.validate()?;
    let model_cfg = ModelConfig {
        input_size: a.input_size,
        ..ModelConfig::default()
    };
    let net = Network::new(model_cfg)?;
    let sizes = net.map_sizes(a.input_size, a.input_size);
    let manifest = canonical(&a.manifest)?;
    let records = read_manifest(&manifest)?;
    let images: Vec<PathBuf> = records.iter().map(|r| r.image_path.clone()).collect();
    let stems = unique_stems(&images)?;
    let out = create_dir(&a.out)?;
    let mask_dir = create_dir(&out.join("masks"))?;

    #[derive(Serialize)]
    struct Snapshot<'a> {
        manifest: &'a Path,
        threshold: f64,
        morph_cleanup: bool,
        input_size: usize,
    }
    write_snapshot(
        &out,
        &Snapshot {
            manifest: &manifest,
            threshold: cfg.threshold,
            morph_cleanup: cfg.morph_cleanup,
            input_size: a.input_size,
        },
    )?;

    let updated: Vec<ManifestRecord> = records
        .par_iter()
        .zip(&stems)
        .map(|(r, s)| -> CliResult<ManifestRecord> {
            let mask: BinaryMask<f64> = if !r.label.is_fake() {
                let img = load_rgb::<f64>(&r.image_path)?;
                BinaryMask::zeros(img.height(), img.width())
            } else if let Some(pair) = &r.pair_path {
                pair_to_mask(&load_rgb(pair)?, &load_rgb(&r.image_path)?, &cfg)?
            } else if let Some(m) = &r.mask_path {
                BinaryMask::from_intensity(&load_gray(m)?)?
            } else {
                return Err(Failure::data(format!(
                    "{}: fake sample has neither pair_path nor mask_path",
                    r.image_path.display()
                )));
            };
            let png = mask_dir.join(format!("{s}.png"));
            save_unit_gray(&png, mask.values())?;
            for (j, (h, w)) in sizes.iter().enumerate() {
                let scaled = align_mask(&mask, *h, *w)?;
                write_raw(&mask_dir.join(format!("{s}_s{}.f32", j + 1)), scaled.values(), None)?;
            }
            Ok(ManifestRecord {
                mask_path: Some(png),
                ..r.clone()
            })
        })
        .collect::<CliResult<_>>()?;
    write_manifest(&out.join("manifest.jsonl"), &updated)?;
    let fakes = updated.iter().filter(|r| r.label.is_fake()).count();
    eprintln!("wrote masks for {fakes} fakes and {} reals", updated.len() - fakes);
    Ok(())
}

pub fn synth(a: SynthArgs) -> CliResult<()> {
    let spec = SpliceSpec {
        base_dir: a.base_dir,
        size: a.size,
        count: a.count,
        val_count: a.val_count,
        test_count: a.test_count,
        seed: a.seed,
        ..SpliceSpec::default()
    };
    spec.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let out = create_dir(&a.out)?;
    let records = generate(&spec, &out)?;
    write_snapshot(&out, &spec)?;
    eprintln!("wrote {} images to {}", records.len(), out.display());
    Ok(())
}

pub fn train(a: TrainArgs) -> CliResult<()> {
    let mut settings = Settings::load(a.config.config.as_deref(), &a.config.overrides)?;
    let manifest = manifest_path(a.manifest, &mut settings)?;
    let init = a.init.as_deref().map(canonical).transpose()?;
    let out = create_dir(&a.out)?;
    write_snapshot(&out, &settings)?;
    let stages: &[Stage] = match a.step {
        StepArg::One => &[Stage::Step1],
        StepArg::Two => &[Stage::Step2],
        StepArg::All => &[Stage::Step1, Stage::Step2],
    };
    match settings.precision {
        Precision::F32 => train_as::<f32>(&settings, &manifest, init.as_deref(), &out, stages),
        Precision::F64 => train_as::<f64>(&settings, &manifest, init.as_deref(), &out, stages),
    }
}

fn train_as<T: Scalar>(
    settings: &Settings,
    manifest: &Path,
    init: Option<&Path>,
    out: &Path,
    stages: &[Stage],
) -> CliResult<()> {
    let cfg = settings.train_config();
    let model_cfg = settings.model_config();
    let mut model = match init {
        Some(p) => {
            let (m, header) = load_checkpoint::<T>(p)?;
            if header.config != model_cfg {
                return Err(Failure::usage(format!(
                    "{} was trained with a different model configuration",
                    p.display()
                )));
            }
            m
        }
        None => Model::<T>::new(model_cfg.clone(), cfg.seed)?,
    };
    let records = read_manifest(manifest)?;
    let pick = |s: Split| records.iter().filter(|r| r.split == s).cloned().collect::<Vec<_>>();
    let (train_recs, val_recs) = (pick(Split::Train), pick(Split::Val));
    if train_recs.is_empty() {
        return Err(Failure::data(format!("{}: no train samples", manifest.display())));
    }
    let mut opts = DataOptions::for_network(&model.network, cfg.sigma, cfg.noise_filter);
    opts.threshold = settings.threshold();
    let train = load_samples::<T>(&train_recs, &opts)?;
    let val = load_samples::<T>(&val_recs, &opts)?;
    eprintln!(
        "training {} parameters on {} samples ({} validation)",
        model.network.num_params(),
        train.len(),
        val.len()
    );

    let log_path = out.join("train_log.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| Failure::io(&log_path, e))?);
    let mut summary = Vec::new();
    let mut header = None;
    for &stage in stages {
        let outcome = train_stage(&mut model, &train, &val, &cfg, stage, &mut log)?;
        log.flush().map_err(|e| Failure::io(&log_path, e))?;
        let n = stage.number();
        let h = CheckpointHeader {
            config: model_cfg.clone(),
            param_count: model.params.len(),
            epoch: (outcome.selected.epoch > 0).then_some(outcome.selected.epoch),
            val_auc: outcome.selected.val_auc,
            stage: Some(format!("step{n}")),
        };
        save_checkpoint(&out.join(format!("step{n}.ckpt")), &model, &h)?;
        match outcome.selected.val_auc {
            Some(auc) => eprintln!("step {n}: kept epoch {} (validation AUC {auc:.4})", outcome.selected.epoch),
            None => eprintln!("step {n}: kept epoch {} (no validation scores)", outcome.selected.epoch),
        }
        summary.push(json!({
            "stage": n,
            "selected_epoch": outcome.selected.epoch,
            "val_auc": outcome.selected.val_auc,
            "epochs": outcome.epochs,
        }));
        header = Some(h);
    }
    if let Some(h) = header {
        save_checkpoint(&out.join("model.ckpt"), &model, &h)?;
    }
    write_json(&out.join("summary.json"), &summary)
}

#[derive(Serialize)]
struct EvalSnapshot<'a> {
    checkpoint: &'a Path,
    split: &'a str,
    gamma: [f64; 3],
    threshold: f64,
    name: &'a str,
    settings: &'a Settings,
}

pub fn eval(a: EvalArgs) -> CliResult<()> {
    let mut settings = Settings::load(a.config.config.as_deref(), &a.config.overrides)?;
    let manifest = manifest_path(a.manifest, &mut settings)?;
    let weights = parse_gamma(&a.gamma)?;
    if !(a.threshold > 0.0 && a.threshold < 1.0) {
        return Err(Failure::usage(format!("--threshold {} must lie in (0, 1)", a.threshold)));
    }
    let checkpoint = canonical(&a.checkpoint)?;
    let name = a.name.unwrap_or_else(|| {
        checkpoint
            .parent()
            .and_then(|p| p.file_name())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "eval".into())
    });
    let out = create_dir(&a.out)?;
    write_snapshot(
        &out,
        &EvalSnapshot {
            checkpoint: &checkpoint,
            split: split_name(a.split),
            gamma: weights.as_array(),
            threshold: a.threshold,
            name: &name,
            settings: &settings,
        },
    )?;
    let job = EvalJob {
        settings: &settings,
        manifest: &manifest,
        checkpoint: &checkpoint,
        split: a.split,
        weights,
        threshold: a.threshold,
        name: &name,
        curves: a.curves,
        out: &out,
    };
    match settings.precision {
        Precision::F32 => eval_as::<f32>(&job),
        Precision::F64 => eval_as::<f64>(&job),
    }
}

struct EvalJob<'a> {
    settings: &'a Settings,
    manifest: &'a Path,
    checkpoint: &'a Path,
    split: SplitArg,
    weights: FusionWeights,
    threshold: f64,
    name: &'a str,
    curves: bool,
    out: &'a Path,
}

fn eval_as<T: Scalar>(job: &EvalJob) -> CliResult<()> {
    let (model, _) = load_checkpoint::<T>(job.checkpoint)?;
    let records: Vec<ManifestRecord> = read_manifest(job.manifest)?
        .into_iter()
        .filter(|r| in_split(r, job.split))
        .collect();
    if records.is_empty() {
        return Err(Failure::data(format!(
            "{}: no samples in split '{}'",
            job.manifest.display(),
            split_name(job.split)
        )));
    }
    let mut opts = DataOptions::for_network(&model.network, job.settings.sigma, job.settings.noise_filter);
    opts.threshold = job.settings.threshold();
    opts.require_masks = false;
    let samples = load_samples::<T>(&records, &opts)?;
    let ev = evaluate(&model, &samples, &job.weights, job.threshold, job.name)?;
    write_json(&job.out.join("report.json"), &ev.report)?;

    let scores: Vec<serde_json::Value> = samples
        .iter()
        .zip(&ev.predictions)
        .map(|(s, p)| json!({"image": s.image_path, "label": s.label, "score": p.score.as_f64()}))
        .collect();
    write_lines(&job.out.join("scores.jsonl"), &scores)?;

    if job.curves {
        let scored: Vec<ScoredSample<T>> = samples
            .iter()
            .zip(&ev.predictions)
            .map(|(s, p)| ScoredSample::new(p.score, u8::from(s.label.is_fake())))
            .collect();
        let roc = roc_curve(&scored)?;
        let path = job.out.join("roc.csv");
        let mut text = String::from("threshold,fpr,tpr\n");
        for p in roc {
            text.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.tpr));
        }
        std::fs::write(&path, text).map_err(|e| Failure::io(&path, e))?;
        let pr = pr_curve(&scored)?;
        let path = job.out.join("pr.csv");
        let mut text = String::from("threshold,recall,precision\n");
        for p in pr {
            text.push_str(&format!("{},{},{}\n", p.threshold, p.recall, p.precision));
        }
        std::fs::write(&path, text).map_err(|e| Failure::io(&path, e))?;
    }

    let d = &ev.report.detection;
    eprint!("{}: AUC {:.4}, ACC {:.4}, EER {:.4}", job.name, d.auc, d.acc, d.eer);
    match &ev.report.localization {
        Some(l) => eprintln!(", IoU {:.4} over {} masks", l.iou, l.masks),
        None => eprintln!(),
    }
    Ok(())
}

pub fn localize(a: LocalizeArgs) -> CliResult<()> {
    let mut settings = Settings::load(a.config.config.as_deref(), &a.config.overrides)?;
    let weights = parse_gamma(&a.gamma)?;
    let checkpoint = canonical(&a.checkpoint)?;
    let images = match a.manifest {
        Some(m) => {
            let manifest = manifest_path(Some(m), &mut settings)?;
            read_manifest(&manifest)?
                .into_iter()
                .filter(|r| in_split(r, a.split))
                .map(|r| r.image_path)
                .collect()
        }
        None => image_files(&a.input)?,
    };
    if images.is_empty() {
        return Err(Failure::usage("nothing to localize: pass --input or --manifest"));
    }
    let stems = unique_stems(&images)?;
    let out = create_dir(&a.out)?;

    #[derive(Serialize)]
    struct Snapshot<'a> {
        checkpoint: &'a Path,
        gamma: [f64; 3],
        debug: bool,
        images: &'a [PathBuf],
        settings: &'a Settings,
    }
    write_snapshot(
        &out,
        &Snapshot {
            checkpoint: &checkpoint,
            gamma: weights.as_array(),
            debug: a.debug,
            images: &images,
            settings: &settings,
        },
    )?;
    match settings.precision {
        Precision::F32 => localize_as::<f32>(&checkpoint, &images, &stems, &weights, a.debug, &out),
        Precision::F64 => localize_as::<f64>(&checkpoint, &images, &stems, &weights, a.debug, &out),
    }
}

fn localize_as<T: Scalar>(
    checkpoint: &Path,
    images: &[PathBuf],
    stems: &[String],
    weights: &FusionWeights,
    debug: bool,
    out: &Path,
) -> CliResult<()> {
    let (model, _) = load_checkpoint::<T>(checkpoint)?;
    let size = model.config().input_size;
    let lines: Vec<serde_json::Value> = images
        .par_iter()
        .zip(stems)
        .map(|(p, s)| {
            let img = load_rgb::<T>(p)?;
            let (h, w) = (img.height(), img.width());
            let resized = if (h, w) == (size, size) { img } else { resize::resize(&img, size, size) };
            let trace = model.trace(&normalize_input(&resized), None)?;
            let fused = fuse_maps(&trace.seg_maps(), h, w, weights)?;
            save_unit_gray(&out.join(format!("{s}.png")), &fused)?;
            write_raw(&out.join(format!("{s}.f32")), &fused, None)?;
            if debug {
                trace.export_debug(&out.join("debug"), s)?;
            }
            let probs: Vec<f64> = trace.probs().iter().map(|v| v.as_f64()).collect();
            Ok(json!({"image": p, "score": trace.fake_score().as_f64(), "probs": probs}))
        })
        .collect::<fmdl::Result<_>>()?;
    write_lines(&out.join("scores.jsonl"), &lines)?;
    eprintln!("wrote {} localization maps to {}", lines.len(), out.display());
    Ok(())
}

pub fn report(a: ReportArgs) -> CliResult<()> {
    let rows: Vec<Vec<String>> = a
        .reports
        .iter()
        .map(|p| read_report(p).map(|r| row(&r)))
        .collect::<CliResult<_>>()?;
    let out = create_dir(&a.out)?;

    #[derive(Serialize)]
    struct Snapshot<'a> {
        reports: &'a [PathBuf],
    }
    write_snapshot(&out, &Snapshot { reports: &a.reports })?;
    write_csv(&out.join("report.csv"), &rows)?;
    let text = render_text(&rows);
    let path = out.join("report.txt");
    std::fs::write(&path, &text).map_err(|e| Failure::io(&path, e))?;
    print!("{text}");
    Ok(())
}
