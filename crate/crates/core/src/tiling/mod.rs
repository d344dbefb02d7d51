//! Tile extraction from large source images, tissue filtering and CSV
//! manifests.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::io::{read_png, write_png};
use crate::imaging::{ImageTile, ImagingError};

#[derive(Debug, Error)]
pub enum TilingError {
    #[error("source of {width}x{height} is smaller than a {tile}-pixel tile")]
    SourceTooSmall { width: usize, height: usize, tile: usize },
    #[error("invalid tile spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl TilingError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::SourceTooSmall { .. } => "SourceTooSmall",
            Self::InvalidSpec(_) => "InvalidSpec",
            Self::Imaging(_) => "ImagingError",
            Self::Io { .. } => "IoError",
        }
    }
}

/// Tile geometry and filtering.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TileSpec {
    pub tile_px: usize,
    /// Physical extent of a tile; carried as metadata only.
    pub microns: f64,
    /// Overlap between neighbouring tiles of non-annotated sources.
    pub overlap_fraction: f64,
    /// Overlap used for annotated sources.
    pub annotated_overlap_fraction: f64,
    /// Minimum tissue fraction for a tile to be kept.
    pub tissue_threshold: f64,
}

impl Default for TileSpec {
    fn default() -> Self {
        Self { tile_px: 256, microns: 64.0, overlap_fraction: 0.25, annotated_overlap_fraction: 0.5, tissue_threshold: 0.5 }
    }
}

impl TileSpec {
    pub fn validate(&self) -> Result<(), TilingError> {
        let bad = |m: &str| Err(TilingError::InvalidSpec(m.into()));
        if self.tile_px < 32 {
            return bad("tile_px must be at least 32");
        }
        for o in [self.overlap_fraction, self.annotated_overlap_fraction] {
            if !(0.0..1.0).contains(&o) {
                return bad("overlap fractions must lie in [0, 1)");
            }
        }
        if !(0.0..=1.0).contains(&self.tissue_threshold) {
            return bad("tissue_threshold must lie in [0, 1]");
        }
        if !(self.microns.is_finite() && self.microns > 0.0) {
            return bad("microns must be positive");
        }
        if self.stride(false) == 0 || self.stride(true) == 0 {
            return bad("stride rounds to zero");
        }
        Ok(())
    }

    /// `round(tile_px · (1 − overlap))`.
    pub fn stride(&self, annotated: bool) -> usize {
        let o = if annotated { self.annotated_overlap_fraction } else { self.overlap_fraction };
        (self.tile_px as f64 * (1.0 - o)).round() as usize
    }
}

/// Tile origins along one axis: multiples of the stride, plus a final tile
/// shifted inward to end at the border when the grid does not reach it.
pub fn grid_positions(len: usize, tile: usize, stride: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..).map(|k| k * stride).take_while(|p| p + tile <= len).collect();
    if let Some(last) = out.last() {
        if last + tile < len {
            out.push(len - tile);
        }
    }
    out
}

/// A tile with its top-left corner in the source.
#[derive(Clone, Debug, PartialEq)]
pub struct PlacedTile {
    pub tile: ImageTile,
    pub x: usize,
    pub y: usize,
}

/// Cuts `source` into `spec.tile_px` tiles at the given overlap, row-major.
pub fn extract_tiles_with_overlap(source: &ImageTile, tile_px: usize, overlap: f64) -> Result<Vec<PlacedTile>, TilingError> {
    let (w, h) = (source.width(), source.height());
    if w < tile_px || h < tile_px {
        return Err(TilingError::SourceTooSmall { width: w, height: h, tile: tile_px });
    }
    let stride = (tile_px as f64 * (1.0 - overlap)).round() as usize;
    if stride == 0 {
        return Err(TilingError::InvalidSpec("stride rounds to zero".into()));
    }
    let xs = grid_positions(w, tile_px, stride);
    let ys = grid_positions(h, tile_px, stride);
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            let mut tile = source.crop(x, y, tile_px, tile_px)?;
            tile.meta.origin_xy = Some((x as u32, y as u32));
            out.push(PlacedTile { tile, x, y });
        }
    }
    Ok(out)
}

/// Cuts a non-annotated source with the spec's default overlap.
pub fn extract_tiles(source: &ImageTile, spec: &TileSpec) -> Result<Vec<PlacedTile>, TilingError> {
    spec.validate()?;
    extract_tiles_with_overlap(source, spec.tile_px, spec.overlap_fraction)
}

/// Lower bound on the saturation threshold, so that nearly achromatic tiles
/// (whose Otsu split lands inside sensor noise) count as background.
pub const MIN_SATURATION: f64 = 0.05;

const BINS: usize = 256;

/// Threshold maximizing the between-class variance of `values` in `[0, 1]`,
/// as the upper edge of the last background bin.
pub fn otsu_threshold(values: &[f64]) -> f64 {
    let mut hist = [0usize; BINS];
    for v in values {
        hist[((v.clamp(0.0, 1.0) * BINS as f64) as usize).min(BINS - 1)] += 1;
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, c)| i as f64 * *c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_t) = (-1.0, 0usize);
    for (t, c) in hist.iter().enumerate() {
        w0 += *c as f64;
        sum0 += t as f64 * *c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best {
            best = between;
            best_t = t;
        }
    }
    (best_t + 1) as f64 / BINS as f64
}

fn saturation(p: [f32; 3]) -> f64 {
    let max = p[0].max(p[1]).max(p[2]) as f64;
    let min = p[0].min(p[1]).min(p[2]) as f64;
    if max <= 0.0 {
        0.0
    } else {
        (max - min) / max
    }
}

/// Fraction of pixels whose HSV saturation exceeds the Otsu threshold of the
/// tile (never below [`MIN_SATURATION`]).
pub fn tissue_fraction(tile: &ImageTile) -> f64 {
    let s: Vec<f64> = tile.iter_rgb().map(saturation).collect();
    let t = otsu_threshold(&s).max(MIN_SATURATION);
    s.iter().filter(|v| **v > t).count() as f64 / s.len() as f64
}

/// One source image to be tiled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub path: PathBuf,
    pub domain_label: String,
    pub annotated: bool,
}

/// A manifest row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub source_id: String,
    pub x: usize,
    pub y: usize,
    /// Relative to the manifest's directory.
    pub tile_path: String,
    pub domain_label: String,
    pub annotated: bool,
    pub tissue_fraction: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TileManifest {
    pub rows: Vec<ManifestRow>,
}

pub const MANIFEST_HEADER: &str = "source_id,x,y,tile_path,domain_label,annotated,tissue_fraction";

impl TileManifest {
    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).expect("rows serialize");
        }
        let body = w.into_inner().expect("in-memory writer");
        let mut out = format!("{MANIFEST_HEADER}\n").into_bytes();
        out.extend(body);
        out
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self, TilingError> {
        let mut r = csv::Reader::from_reader(bytes);
        let header = r.headers().map_err(|e| TilingError::InvalidSpec(e.to_string()))?;
        if header.iter().collect::<Vec<_>>().join(",") != MANIFEST_HEADER {
            return Err(TilingError::InvalidSpec("unexpected manifest header".into()));
        }
        let rows = r
            .deserialize()
            .collect::<Result<Vec<ManifestRow>, _>>()
            .map_err(|e| TilingError::InvalidSpec(e.to_string()))?;
        Ok(Self { rows })
    }
}

/// Result of [`build_manifest`]: the manifest of every readable source and
/// one error per failed source.
#[derive(Debug)]
pub struct ManifestOutcome {
    pub manifest: TileManifest,
    pub manifest_path: PathBuf,
    pub failures: Vec<(PathBuf, TilingError)>,
}

fn source_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "source".into())
}

fn tile_source(src: &SourceSpec, spec: &TileSpec, out_dir: &Path) -> Result<Vec<ManifestRow>, TilingError> {
    let image = read_png(&src.path)?;
    let overlap = if src.annotated { spec.annotated_overlap_fraction } else { spec.overlap_fraction };
    let id = source_id(&src.path);
    let mut rows = Vec::new();
    for placed in extract_tiles_with_overlap(&image, spec.tile_px, overlap)? {
        let fraction = tissue_fraction(&placed.tile);
        if fraction < spec.tissue_threshold {
            continue;
        }
        let rel = format!("tiles/{id}/{id}_x{}_y{}.png", placed.x, placed.y);
        let abs = out_dir.join(&rel);
        let io_err = |e: std::io::Error| TilingError::Io { path: abs.display().to_string(), message: e.to_string() };
        std::fs::create_dir_all(abs.parent().expect("has a parent")).map_err(io_err)?;
        write_png(&placed.tile, &abs)?;
        rows.push(ManifestRow {
            source_id: id.clone(),
            x: placed.x,
            y: placed.y,
            tile_path: rel,
            domain_label: src.domain_label.clone(),
            annotated: src.annotated,
            tissue_fraction: fraction,
        });
    }
    Ok(rows)
}

/// Tiles every source in parallel, keeps tiles whose tissue fraction reaches
/// the threshold, writes them as PNG under `out_dir/tiles/` and writes
/// `out_dir/manifest.csv` atomically. Rows are sorted by `(source_id, y, x)`.
pub fn build_manifest(sources: &[SourceSpec], spec: &TileSpec, out_dir: &Path) -> Result<ManifestOutcome, TilingError> {
    spec.validate()?;
    let results: Vec<Result<Vec<ManifestRow>, TilingError>> =
        sources.par_iter().map(|s| tile_source(s, spec, out_dir)).collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (src, r) in sources.iter().zip(results) {
        match r {
            Ok(mut v) => rows.append(&mut v),
            Err(e) => failures.push((src.path.clone(), e)),
        }
    }
    rows.sort_by(|a, b| (&a.source_id, a.y, a.x).cmp(&(&b.source_id, b.y, b.x)));
    let manifest = TileManifest { rows };
    let manifest_path = out_dir.join("manifest.csv");
    crate::io_util::write_atomic(&manifest_path, &manifest.to_csv())
        .map_err(|e| TilingError::Io { path: manifest_path.display().to_string(), message: e.to_string() })?;
    Ok(ManifestOutcome { manifest, manifest_path, failures })
}
