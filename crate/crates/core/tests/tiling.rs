use std::path::Path;

use multistain::imaging::io::write_png;
use multistain::imaging::ImageTile;
use multistain::synthetic::{Palette, TissueField};
use multistain::tiling::{
    build_manifest, extract_tiles, extract_tiles_with_overlap, grid_positions, tissue_fraction, SourceSpec,
    TileManifest, TileSpec, MANIFEST_HEADER,
};
use proptest::prelude::*;

/// Positions per axis: one per full stride, plus one flush with the border
/// when the strides do not land on it.
fn expected_count(len: usize, tile: usize, stride: usize) -> usize {
    (len - tile).div_ceil(stride) + 1
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

proptest! {
    #[test]
    fn positions_follow_the_count_formula(len in 32usize..600, tile in 32usize..64, stride in 1usize..64) {
        prop_assume!(len >= tile);
        let p = grid_positions(len, tile, stride);
        prop_assert_eq!(p.len(), expected_count(len, tile, stride));
        prop_assert_eq!(p[0], 0);
        prop_assert_eq!(*p.last().unwrap(), len - tile);
        prop_assert!(p.windows(2).all(|w| w[0] < w[1] && w[1] - w[0] <= stride));
    }

    #[test]
    fn zero_overlap_covers_every_pixel(w in 32usize..90, h in 32usize..90) {
        let source = ImageTile::filled(w, h, [1.0; 3]).unwrap();
        let tiles = extract_tiles_with_overlap(&source, 32, 0.0).unwrap();
        let mut hits = vec![0u32; w * h];
        for t in &tiles {
            for y in t.y..t.y + 32 {
                for x in t.x..t.x + 32 {
                    hits[y * w + x] += 1;
                }
            }
        }
        prop_assert!(hits.iter().all(|c| *c >= 1));
        // Only the clipped last row or column can be covered twice.
        let interior_w = w - w % 32;
        let interior_h = h - h % 32;
        let clipped_x = if w % 32 == 0 { w } else { w - 32 };
        let clipped_y = if h % 32 == 0 { h } else { h - 32 };
        for y in 0..interior_h.min(clipped_y) {
            for x in 0..interior_w.min(clipped_x) {
                prop_assert_eq!(hits[y * w + x], 1);
            }
        }
    }

    #[test]
    fn tissue_fraction_is_rotation_invariant(seed in 0u64..500) {
        let t = TissueField::generate(32, 32, seed).render(&Palette::source());
        let f = tissue_fraction(&t);
        prop_assert!((0.0..=1.0).contains(&f));
        let mut r = t.clone();
        for _ in 0..3 {
            r = r.rotate90();
            prop_assert_eq!(tissue_fraction(&r), f);
        }
    }
}

#[test]
fn grid_examples() {
    let blank = |n| ImageTile::filled(n, n, [1.0; 3]).unwrap();
    let half = TileSpec { overlap_fraction: 0.5, ..Default::default() };
    let tiles = extract_tiles(&blank(512), &half).unwrap();
    assert_eq!(tiles.len(), 9);
    assert_eq!(tiles.iter().map(|t| (t.x, t.y)).take(3).collect::<Vec<_>>(), [(0, 0), (128, 0), (256, 0)]);
    assert_eq!(extract_tiles(&blank(256), &TileSpec::default()).unwrap().len(), 1);
    let quarter = extract_tiles(&blank(448), &TileSpec::default()).unwrap();
    assert_eq!(quarter.iter().map(|t| (t.x, t.y)).collect::<Vec<_>>(), [(0, 0), (192, 0), (0, 192), (192, 192)]);
}

fn quadrant_source() -> ImageTile {
    ImageTile::from_fn(128, 128, |x, y| if x < 64 && y < 64 { [0.8, 0.35, 0.6] } else { [1.0; 3] }).unwrap()
}

fn spec32() -> TileSpec {
    TileSpec { tile_px: 32, overlap_fraction: 0.0, annotated_overlap_fraction: 0.5, ..Default::default() }
}

#[test]
fn manifest_keeps_only_tissue_tiles_and_reruns_identically() {
    let root = tempfile::tempdir().unwrap();
    let src = root.path().join("src");
    std::fs::create_dir(&src).unwrap();
    write_png(&quadrant_source(), &src.join("quad.png")).unwrap();
    write_png(&ImageTile::filled(64, 64, [1.0; 3]).unwrap(), &src.join("white.png")).unwrap();
    let sources = vec![
        SourceSpec { path: src.join("white.png"), domain_label: "B".into(), annotated: false },
        SourceSpec { path: src.join("quad.png"), domain_label: "A".into(), annotated: false },
    ];

    let out_a = root.path().join("a");
    let outcome = build_manifest(&sources, &spec32(), &out_a).unwrap();
    assert!(outcome.failures.is_empty());
    let kept: Vec<(usize, usize)> = outcome.manifest.rows.iter().map(|r| (r.x, r.y)).collect();
    assert_eq!(kept, [(0, 0), (32, 0), (0, 32), (32, 32)]);
    for r in &outcome.manifest.rows {
        assert_eq!((r.source_id.as_str(), r.domain_label.as_str()), ("quad", "A"));
        assert!(out_a.join(&r.tile_path).is_file());
        assert_eq!(r.tissue_fraction, 1.0);
    }
    let text = std::fs::read(&outcome.manifest_path).unwrap();
    assert!(text.starts_with(MANIFEST_HEADER.as_bytes()));
    assert_eq!(TileManifest::from_csv(&text).unwrap(), outcome.manifest);

    let out_b = root.path().join("b");
    build_manifest(&sources, &spec32(), &out_b).unwrap();
    assert_eq!(read_tree(&out_a), read_tree(&out_b));
}

#[test]
fn annotated_sources_use_the_denser_grid() {
    let root = tempfile::tempdir().unwrap();
    let path = root.path().join("q.png");
    write_png(&quadrant_source(), &path).unwrap();
    let sources = vec![SourceSpec { path, domain_label: "A".into(), annotated: true }];
    let outcome = build_manifest(&sources, &spec32(), &root.path().join("out")).unwrap();
    // Stride 16: nine tiles lie inside the 64×64 quadrant and six more
    // straddle its edge with exactly half tissue, which meets the threshold.
    assert_eq!(outcome.manifest.rows.len(), 15);
    let strict = TileSpec { tissue_threshold: 0.6, ..spec32() };
    let outcome = build_manifest(&sources, &strict, &root.path().join("strict")).unwrap();
    assert_eq!(outcome.manifest.rows.len(), 9);
    assert!(outcome.manifest.rows.iter().all(|r| r.annotated));
}

#[test]
fn unreadable_sources_are_collected_not_fatal() {
    let root = tempfile::tempdir().unwrap();
    let good = root.path().join("good.png");
    let bad = root.path().join("bad.png");
    write_png(&quadrant_source(), &good).unwrap();
    std::fs::write(&bad, b"garbage").unwrap();
    let small = root.path().join("small.png");
    write_png(&ImageTile::filled(8, 8, [0.5; 3]).unwrap(), &small).unwrap();
    let sources = [&bad, &good, &small]
        .map(|p| SourceSpec { path: p.clone(), domain_label: "A".into(), annotated: false })
        .to_vec();
    let outcome = build_manifest(&sources, &spec32(), &root.path().join("out")).unwrap();
    assert_eq!(outcome.manifest.rows.len(), 4);
    let kinds: Vec<&str> = outcome.failures.iter().map(|(_, e)| e.kind()).collect();
    assert_eq!(kinds.len(), 2);
    assert!(kinds.contains(&"SourceTooSmall"));
}

#[test]
fn invalid_specs_are_rejected() {
    for spec in [
        TileSpec { tile_px: 16, ..Default::default() },
        TileSpec { overlap_fraction: 1.0, ..Default::default() },
        TileSpec { tissue_threshold: 1.5, ..Default::default() },
    ] {
        assert!(spec.validate().is_err(), "{spec:?}");
    }
}
