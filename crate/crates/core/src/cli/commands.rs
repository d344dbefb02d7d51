use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::args::{FidArgs, FitArgs, FitMethod, NormalizeArgs, NormalizeMethod, SsimArgs, TilesArgs, TrainArgs};
use super::{list_pngs, pretty, sidecar, write_file, CliError, Context, Outcome};
use crate::imaging::io::{read_png, write_png};
use crate::imaging::ImageTile;
use crate::metrics::{fid_between_sets, ssim, EncoderSpec};
use crate::msgan::{checkpoint, normalize_inference, train_epoch, Direction, GanWeights};
use crate::stainsep::{
    macenko_apply, macenko_fit, reinhard_apply, reinhard_fit, vahadane_apply, vahadane_fit, MacenkoParams, ModelDocument,
    NormalizerMethod, StainModel, TemplateStats, VahadaneParams,
};
use crate::tiling::{build_manifest, SourceSpec};

const RESOLVED: &str = "resolved_config.json";

fn report_failure(path: &Path, e: &CliError) {
    eprintln!("{}", json!({ "error": e.kind, "message": e.message, "path": path.display().to_string() }));
}

pub(crate) fn fit(ctx: &Context, a: &FitArgs) -> Result<Outcome, CliError> {
    ctx.write_resolved(&sidecar(&a.out), "fit", a, &ctx.resolved())?;
    let tile = read_png(&a.template)?;
    let (doc, note) = match a.method {
        FitMethod::Reinhard => (ModelDocument::reinhard(reinhard_fit(&tile)?), String::new()),
        FitMethod::Macenko => {
            (ModelDocument::stain(NormalizerMethod::Macenko, macenko_fit(&tile, &ctx.config.macenko)?), String::new())
        }
        FitMethod::Vahadane => {
            let fit = vahadane_fit(&tile, &ctx.config.vahadane)?;
            let note = if fit.converged { String::new() } else { format!(" (not converged after {} iterations)", fit.iterations) };
            (ModelDocument::stain(NormalizerMethod::Vahadane, fit.model), note)
        }
    };
    write_file(&a.out, doc.to_json().as_bytes())?;
    ctx.say(&format!("fit {}: {} -> {}{note}", doc.method.name(), a.template.display(), a.out.display()));
    Ok(Outcome::Success)
}

enum Normalizer {
    Reinhard(TemplateStats),
    Macenko(StainModel, MacenkoParams),
    Vahadane(StainModel, VahadaneParams),
    Gan(Box<GanWeights>, Direction),
}

impl Normalizer {
    fn load(ctx: &Context, a: &NormalizeArgs) -> Result<Self, CliError> {
        if a.method == NormalizeMethod::Msgan {
            let ck = checkpoint::load(&a.model)?;
            let dir = a.direction.map(Direction::from).unwrap_or(Direction::ToX);
            return Ok(Self::Gan(Box::new(ck.weights), dir));
        }
        let text = std::fs::read_to_string(&a.model).map_err(|e| CliError::io(&a.model, e))?;
        let doc = ModelDocument::from_json(&text)?;
        let want = match a.method {
            NormalizeMethod::Reinhard => NormalizerMethod::Reinhard,
            NormalizeMethod::Macenko => NormalizerMethod::Macenko,
            _ => NormalizerMethod::Vahadane,
        };
        if doc.method != want {
            return Err(CliError::new(
                "MethodMismatch",
                format!("{} holds a {} model, not {}", a.model.display(), doc.method.name(), want.name()),
            ));
        }
        Ok(match (doc.template_stats, doc.stain_model) {
            (Some(stats), _) => Self::Reinhard(stats),
            (_, Some(m)) if want == NormalizerMethod::Macenko => Self::Macenko(m, ctx.config.macenko),
            (_, Some(m)) => Self::Vahadane(m, ctx.config.vahadane),
            _ => unreachable!("validated by from_json"),
        })
    }

    /// Fits the source side on `tile` itself, then transfers to the template.
    fn apply(&self, tile: &ImageTile) -> Result<ImageTile, CliError> {
        Ok(match self {
            Self::Reinhard(stats) => reinhard_apply(tile, stats),
            Self::Macenko(template, p) => macenko_apply(tile, &macenko_fit(tile, p)?, template)?,
            Self::Vahadane(template, p) => {
                let source = vahadane_fit(tile, p)?.model;
                vahadane_apply(tile, &source, template, p.concentration_lambda)?
            }
            Self::Gan(w, dir) => normalize_inference(w, tile, *dir)?,
        })
    }
}

pub(crate) fn normalize(ctx: &Context, a: &NormalizeArgs) -> Result<Outcome, CliError> {
    if a.output.starts_with(&a.input) {
        return Err(CliError::new("InvalidConfig", "the output directory must not lie inside the input directory"));
    }
    ctx.write_resolved(&a.output.join(RESOLVED), "normalize", a, &ctx.resolved())?;
    let normalizer = Normalizer::load(ctx, a)?;
    let files = list_pngs(&a.input, true)?;
    let results: Vec<Result<(), CliError>> = files
        .par_iter()
        .map(|path| {
            let rel = path.strip_prefix(&a.input).expect("listed under the input");
            let out = a.output.join(rel);
            let tile = read_png(path)?;
            let normalized = normalizer.apply(&tile)?;
            if let Some(dir) = out.parent() {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            }
            write_png(&normalized, &out)?;
            Ok(())
        })
        .collect();
    let mut failures = Vec::new();
    for (path, r) in files.iter().zip(&results) {
        if let Err(e) = r {
            report_failure(path, e);
            let rel = path.strip_prefix(&a.input).expect("listed under the input");
            failures.push(json!({ "path": rel.display().to_string(), "error": e.kind, "message": e.message }));
        }
    }
    let summary = json!({
        "kind": "normalize_summary",
        "method": a.method,
        "total": files.len(),
        "succeeded": files.len() - failures.len(),
        "failed": failures.len(),
        "failures": failures,
    });
    write_file(&a.output.join("summary.json"), pretty(&summary).as_bytes())?;
    ctx.say(&format!(
        "normalized {}/{} tiles -> {}",
        files.len() - failures.len(),
        files.len(),
        a.output.display()
    ));
    Ok(if failures.is_empty() { Outcome::Success } else { Outcome::Partial })
}

fn read_tiles(dir: &Path) -> Result<Vec<ImageTile>, CliError> {
    let files = list_pngs(dir, true)?;
    files.par_iter().map(|p| read_png(p).map_err(CliError::from)).collect()
}

fn read_training_set(dir: &Path, size: usize) -> Result<Vec<ImageTile>, CliError> {
    let tiles = read_tiles(dir)?;
    if tiles.is_empty() {
        return Err(CliError::new("InvalidData", format!("no PNG tiles in {}", dir.display())));
    }
    if let Some(t) = tiles.iter().find(|t| t.width() != size || t.height() != size) {
        return Err(CliError::new(
            "InvalidData",
            format!("{}: tiles must be {size}x{size}, found {}x{}", dir.display(), t.width(), t.height()),
        ));
    }
    Ok(tiles)
}

pub(crate) fn train(ctx: &Context, a: &TrainArgs) -> Result<Outcome, CliError> {
    let resumed = a.resume.as_deref().map(checkpoint::load).transpose()?;
    let stored = resumed.as_ref().and_then(|c| c.train);
    let mut cfg = ctx.config.train.or(stored).unwrap_or_default();
    match (a.epochs, a.decay_epochs) {
        (Some(e), d) => {
            cfg.total_epochs = e;
            cfg.decay_epochs = d.unwrap_or(e / 2);
        }
        (None, Some(d)) => cfg.decay_epochs = d,
        (None, None) => {}
    }
    if let Some(b) = a.batch_size {
        cfg.batch_size = b;
    }
    cfg.rng_seed = ctx.seed.or(stored.map(|t| t.rng_seed)).unwrap_or(0);
    cfg.validate()?;

    let mut weights = match resumed {
        Some(ck) => {
            if ck.weights.buffer_x.capacity() != cfg.buffer_size {
                return Err(CliError::new("InvalidConfig", "buffer_size differs from the checkpoint's"));
            }
            ck.weights
        }
        None => GanWeights::init(ctx.config.generator, ctx.config.discriminator, cfg.buffer_size, cfg.adam, cfg.rng_seed)?,
    };
    let mut resolved = ctx.resolved();
    resolved.seed = Some(cfg.rng_seed);
    resolved.generator = weights.generator;
    resolved.discriminator = weights.discriminator;
    resolved.train = Some(cfg);
    ctx.write_resolved(&a.out.join(RESOLVED), "train", a, &resolved)?;

    let size = weights.generator.input_size;
    let data_x = read_training_set(&a.data_x, size)?;
    let data_y = read_training_set(&a.data_y, size)?;
    let log_path = a.out.join("epochs.jsonl");
    let ckpt_path = a.out.join("checkpoint.msgan");
    let mut lines: Vec<String> = Vec::new();
    if a.resume.is_some() {
        if let Ok(text) = std::fs::read_to_string(&log_path) {
            lines = text
                .lines()
                .filter(|l| {
                    serde_json::from_str::<serde_json::Value>(l)
                        .ok()
                        .and_then(|v| v["epoch"].as_u64())
                        .is_some_and(|e| (e as usize) < weights.epoch)
                })
                .map(str::to_string)
                .collect();
        }
    }
    let mut ran = false;
    while weights.epoch < cfg.total_epochs {
        let report = train_epoch(&mut weights, &data_x, &data_y, &cfg)?;
        let line = serde_json::to_string(&report).expect("report serializes");
        ctx.say(&line);
        lines.push(line);
        checkpoint::save(&ckpt_path, &weights, Some(&cfg))?;
        write_file(&log_path, (lines.join("\n") + "\n").as_bytes())?;
        ran = true;
    }
    if !ran {
        checkpoint::save(&ckpt_path, &weights, Some(&cfg))?;
    }
    Ok(Outcome::Success)
}

/// Mean and sample standard deviation (0 for a single value).
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn default_label(label: &Option<String>, out: &Path) -> String {
    label.clone().unwrap_or_else(|| out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
}

#[derive(Serialize)]
struct SsimRow<'a> {
    label: &'a str,
    reference: &'a str,
    candidate: &'a str,
    ssim: f64,
}

pub(crate) fn eval_ssim(ctx: &Context, a: &SsimArgs) -> Result<Outcome, CliError> {
    ctx.write_resolved(&sidecar(&a.out), "eval ssim", a, &ctx.resolved())?;
    let label = default_label(&a.label, &a.out);
    let base = a.pairs.parent().map(Path::to_path_buf).unwrap_or_default();
    let bad = |m: String| CliError::new("BadPairs", format!("{}: {m}", a.pairs.display()));
    let mut reader = csv::Reader::from_path(&a.pairs).map_err(|e| bad(e.to_string()))?;
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| bad(format!("missing column {name}")));
    let (ri, ci) = (col("reference")?, col("candidate")?);
    let mut pairs = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        pairs.push((rec[ri].to_string(), rec[ci].to_string()));
    }
    let scores: Vec<Result<f64, CliError>> = pairs
        .par_iter()
        .map(|(r, c)| {
            let x = read_png(&base.join(r))?;
            let y = read_png(&base.join(c))?;
            Ok(ssim(&x, &y, 1.0)?)
        })
        .collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut values = Vec::new();
    for ((r, c), s) in pairs.iter().zip(&scores) {
        match s {
            Ok(v) => {
                w.serialize(SsimRow { label: &label, reference: r, candidate: c, ssim: *v }).expect("in-memory csv");
                values.push(*v);
            }
            Err(e) => report_failure(&base.join(c), e),
        }
    }
    write_file(&a.out, &w.into_inner().expect("in-memory csv"))?;
    let (mean, std) = if values.is_empty() { (f64::NAN, f64::NAN) } else { mean_std(&values) };
    let failed = pairs.len() - values.len();
    let summary = json!({ "kind": "ssim_summary", "label": label, "n": values.len(), "mean": mean, "std": std, "failed": failed });
    let stem = a.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    write_file(&a.out.with_file_name(format!("{stem}.summary.json")), pretty(&summary).as_bytes())?;
    ctx.say(&summary.to_string());
    Ok(if failed == 0 { Outcome::Success } else { Outcome::Partial })
}

pub(crate) fn eval_fid(ctx: &Context, a: &FidArgs) -> Result<Outcome, CliError> {
    ctx.write_resolved(&sidecar(&a.out), "eval fid", a, &ctx.resolved())?;
    let text = std::fs::read_to_string(&a.encoder).map_err(|e| CliError::io(&a.encoder, e))?;
    let mut spec: EncoderSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::new("InvalidConfig", format!("{}: {e}", a.encoder.display())))?;
    if let EncoderSpec::FileWeights { path, .. } = &mut spec {
        if path.is_relative() {
            *path = a.encoder.parent().map(|p| p.join(&*path)).unwrap_or_else(|| path.clone());
        }
    }
    let reference = read_tiles(&a.reference)?;
    let candidate = read_tiles(&a.candidate)?;
    let r = fid_between_sets(&spec, &reference, &candidate)?;
    let doc = json!({
        "kind": "fid",
        "label": default_label(&a.label, &a.out),
        "fid": r.fid,
        "n_ref": r.n_ref,
        "n_cand": r.n_cand,
        "feature_dim": r.feature_dim,
        "rank_deficient": r.rank_deficient,
    });
    write_file(&a.out, pretty(&doc).as_bytes())?;
    ctx.say(&doc.to_string());
    Ok(Outcome::Success)
}

pub(crate) fn tiles(ctx: &Context, a: &TilesArgs) -> Result<Outcome, CliError> {
    let mut spec = ctx.config.tiles;
    spec.tile_px = a.tile.unwrap_or(spec.tile_px);
    spec.overlap_fraction = a.overlap.unwrap_or(spec.overlap_fraction);
    spec.annotated_overlap_fraction = a.annotated_overlap.unwrap_or(spec.annotated_overlap_fraction);
    spec.tissue_threshold = a.tissue.unwrap_or(spec.tissue_threshold);
    spec.validate()?;
    let resolved = crate::cli::RunConfig { tiles: spec, ..ctx.resolved() };
    ctx.write_resolved(&a.output.join(RESOLVED), "tiles", a, &resolved)?;
    let paths: Vec<PathBuf> = list_pngs(&a.input, false)?;
    let sources: Vec<SourceSpec> = paths
        .into_iter()
        .map(|path| SourceSpec { path, domain_label: a.label.clone(), annotated: a.annotated })
        .collect();
    let outcome = build_manifest(&sources, &spec, &a.output)?;
    for (path, e) in &outcome.failures {
        report_failure(path, &CliError::from_tiling(e));
    }
    ctx.say(&format!(
        "tiled {} of {} sources into {} tiles -> {}",
        sources.len() - outcome.failures.len(),
        sources.len(),
        outcome.manifest.rows.len(),
        outcome.manifest_path.display()
    ));
    Ok(if outcome.failures.is_empty() { Outcome::Success } else { Outcome::Partial })
}

impl CliError {
    fn from_tiling(e: &crate::tiling::TilingError) -> Self {
        Self::new(e.kind(), e.to_string())
    }
}
