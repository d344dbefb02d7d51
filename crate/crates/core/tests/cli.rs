mod common;

use common::{read_tree, run_cli, run_pipeline, write_pipeline_inputs};
use multistain::imaging::io::{read_png, write_png};
use multistain::imaging::ImageTile;
use multistain::synthetic::{Palette, TissueField};
use serde_json::Value;

fn json(path: &std::path::Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn error_kind(stderr: &str) -> String {
    let line = stderr.lines().rev().find(|l| l.starts_with('{')).expect("JSON error line");
    serde_json::from_str::<Value>(line).unwrap()["error"].as_str().unwrap().to_string()
}

#[test]
fn constant_template_fails_with_a_machine_readable_error() {
    let dir = tempfile::tempdir().unwrap();
    write_png(&ImageTile::filled(32, 32, [0.7, 0.4, 0.6]).unwrap(), &dir.path().join("flat.png")).unwrap();
    let (code, _, err) = run_cli(dir.path(), &["fit", "--method", "reinhard", "--template", "flat.png", "--out", "m.json"]);
    assert_eq!(code, 2);
    assert_eq!(error_kind(&err), "DegenerateTemplate");
    assert!(!dir.path().join("m.json").exists());
}

#[test]
fn macenko_fit_writes_unit_columns_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    write_png(&TissueField::generate(64, 64, 2).render(&Palette::target()), &dir.path().join("t.png")).unwrap();
    for out in ["a.json", "b.json"] {
        let (code, stdout, _) = run_cli(dir.path(), &["fit", "--method", "macenko", "--template", "t.png", "--out", out]);
        assert_eq!(code, 0);
        assert_eq!(stdout.lines().count(), 1);
    }
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.json")).unwrap());
    let doc = json(&dir.path().join("a.json"));
    let m = &doc["stain_model"]["stain_matrix"];
    for k in 0..2 {
        let norm: f64 = (0..3).map(|r| m[r][k].as_f64().unwrap().powi(2)).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }
    assert!(dir.path().join("a.resolved_config.json").is_file());
}

#[test]
fn normalizing_an_empty_directory_succeeds_with_zero_counts() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("empty")).unwrap();
    write_png(&TissueField::generate(64, 64, 2).render(&Palette::target()), &dir.path().join("t.png")).unwrap();
    assert_eq!(run_cli(dir.path(), &["fit", "--method", "reinhard", "--template", "t.png", "--out", "r.json"]).0, 0);
    let (code, _, _) =
        run_cli(dir.path(), &["normalize", "--method", "reinhard", "--model", "r.json", "--in", "empty", "--out", "out"]);
    assert_eq!(code, 0);
    let s = json(&dir.path().join("out/summary.json"));
    assert_eq!((s["total"].as_u64(), s["succeeded"].as_u64(), s["failed"].as_u64()), (Some(0), Some(0), Some(0)));
}

#[test]
fn macenko_self_transfer_reruns_and_partial_failures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let tile = TissueField::generate(64, 64, 9).render(&Palette::target());
    std::fs::create_dir_all(d.join("in/sub")).unwrap();
    write_png(&tile, &d.join("in/sub/a.png")).unwrap();
    write_png(&tile, &d.join("t.png")).unwrap();
    assert_eq!(run_cli(d, &["fit", "--method", "macenko", "--template", "t.png", "--out", "m.json"]).0, 0);
    let args = |out: &'static str| ["normalize", "--method", "macenko", "--model", "m.json", "--in", "in", "--out", out];
    assert_eq!(run_cli(d, &args("o1")).0, 0);
    assert_eq!(run_cli(d, &args("o2")).0, 0);
    // The resolved config records the differing output path; everything else matches.
    let images = |o: &str| read_tree(&d.join(o)).into_iter().filter(|(p, _)| p != "resolved_config.json").collect::<Vec<_>>();
    assert_eq!(images("o1"), images("o2"));

    let before = read_png(&d.join("in/sub/a.png")).unwrap();
    let after = read_png(&d.join("o1/sub/a.png")).unwrap();
    assert!(before.mean_abs_diff(&after) < 2.0 / 255.0);

    std::fs::write(d.join("in/broken.png"), b"not an image").unwrap();
    let (code, _, err) = run_cli(d, &args("o3"));
    assert_eq!(code, 1);
    assert_eq!(error_kind(&err), "DecodeError");
    let s = json(&d.join("o3/summary.json"));
    assert_eq!((s["succeeded"].as_u64(), s["failed"].as_u64()), (Some(1), Some(1)));
    assert!(d.join("o3/sub/a.png").is_file());
}

#[test]
fn config_precedence_and_rejection() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::create_dir(d.join("slides")).unwrap();
    write_png(&TissueField::generate(96, 96, 4).render(&Palette::source()), &d.join("slides/s.png")).unwrap();

    std::fs::write(d.join("bad.json"), r#"{"tiles":{"tile_px":32,"colour":1}}"#).unwrap();
    let (code, _, err) = run_cli(d, &["--config", "bad.json", "tiles", "--in", "slides", "--out", "t0", "--label", "B"]);
    assert_eq!((code, error_kind(&err).as_str()), (2, "InvalidConfig"));

    std::fs::write(d.join("cfg.json"), r#"{"seed":11,"tiles":{"tile_px":48,"tissue_threshold":0.0}}"#).unwrap();
    assert_eq!(run_cli(d, &["--config", "cfg.json", "tiles", "--in", "slides", "--out", "t1", "--label", "B"]).0, 0);
    let r = json(&d.join("t1/resolved_config.json"));
    assert_eq!(r["config"]["tiles"]["tile_px"], 48);
    assert_eq!(r["config"]["seed"], 11);

    assert_eq!(run_cli(d, &["--config", "cfg.json", "--seed", "5", "tiles", "--in", "slides", "--out", "t2", "--tile", "32", "--label", "B"]).0, 0);
    let r = json(&d.join("t2/resolved_config.json"));
    assert_eq!(r["config"]["tiles"]["tile_px"], 32);
    assert_eq!(r["config"]["tiles"]["tissue_threshold"], 0.0);
    assert_eq!(r["config"]["seed"], 5);
    let first = std::fs::read_to_string(d.join("t2/manifest.csv")).unwrap();
    assert!(first.lines().nth(1).unwrap().contains("_x0_y0.png"));
}

#[test]
fn usage_errors_and_version() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = run_cli(dir.path(), &["--version"]);
    assert_eq!(code, 0);
    assert!(out.contains(env!("CARGO_PKG_VERSION")));
    let (code, _, err) = run_cli(dir.path(), &["fit", "--method", "bogus"]);
    assert_eq!((code, error_kind(&err).as_str()), (2, "UsageError"));
    let (code, _, _) = run_cli(dir.path(), &["--threads", "0", "report", "x.json", "--out", "r"]);
    assert_eq!(code, 2);
}

#[test]
fn training_streams_epochs_and_the_checkpoint_normalizes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (name, pal, seed) in [("x", Palette::target(), 0), ("y", Palette::source(), 100)] {
        std::fs::create_dir(d.join(name)).unwrap();
        for (i, t) in pal.tiles(16, 3, seed).iter().enumerate() {
            write_png(t, &d.join(format!("{name}/{i}.png"))).unwrap();
        }
    }
    std::fs::write(
        d.join("cfg.json"),
        r#"{"generator":{"depth":2,"innermost_filters":8,"input_size":16},
            "discriminator":{"blocks":2,"base_filters":4},
            "train":{"learning_rate":0.0002,"total_epochs":2,"decay_epochs":1,"buffer_size":3}}"#,
    )
    .unwrap();
    let (code, out, err) = run_cli(d, &["--config", "cfg.json", "--seed", "1", "train", "--data-x", "x", "--data-y", "y", "--out", "run"]);
    assert_eq!(code, 0, "{err}");
    let lines: Vec<Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1]["epoch"], 1);
    assert_eq!(std::fs::read_to_string(d.join("run/epochs.jsonl")).unwrap().lines().count(), 2);
    assert!(d.join("run/resolved_config.json").is_file());

    let (code, _, err) = run_cli(d, &["normalize", "--method", "msgan", "--model", "run/checkpoint.msgan", "--in", "y", "--out", "n"]);
    assert_eq!(code, 0, "{err}");
    let t = read_png(&d.join("n/0.png")).unwrap();
    assert_eq!((t.width(), t.height()), (16, 16));
}

#[test]
fn report_outputs_roundtrip_and_missing_fid_is_na() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("s.json"), r#"{"kind":"ssim_summary","label":"macenko","n":4,"mean":0.9,"std":0.1,"failed":0}"#).unwrap();
    let (code, _, err) = run_cli(d, &["report", "s.json", "--out", "r"]);
    assert_eq!(code, 0, "{err}");
    let table = std::fs::read_to_string(d.join("r/table.csv")).unwrap();
    assert_eq!(table.lines().count(), 2);
    let row: Vec<&str> = table.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "macenko");
    assert_eq!(*row.last().unwrap(), "n/a");
    assert!(std::fs::read_to_string(d.join("r/table.md")).unwrap().contains("0.900 ± 0.100"));

    std::fs::write(d.join("broken.json"), "{not json").unwrap();
    let (code, _, err) = run_cli(d, &["report", "broken.json", "--out", "r2"]);
    assert_eq!((code, error_kind(&err).as_str()), (2, "MalformedInput"));
}

#[test]
fn pipeline_artifacts_feed_the_report() {
    let dir = tempfile::tempdir().unwrap();
    write_pipeline_inputs(dir.path());
    run_pipeline(dir.path());
    let d = dir.path();
    let table = std::fs::read_to_string(d.join("report/table.csv")).unwrap();
    let labels: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["macenko", "unnormalized"]);

    // Every machine-readable artifact is accepted by the report command.
    let all = [
        "fid.json", "ssim.csv", "ssim.summary.json", "macenko.json", "normalized/summary.json", "tiles/manifest.csv",
        "report/table.csv", "report/scatter_ssim.csv", "report/scatter_fid.csv", "report/scatter_domain.csv",
        "report/resolved_config.json", "tiles/resolved_config.json", "macenko.resolved_config.json",
    ];
    let mut args = vec!["report"];
    args.extend(all);
    args.extend(["--out", "again"]);
    let (code, _, err) = run_cli(d, &args);
    assert_eq!(code, 0, "{err}");
    assert_eq!(std::fs::read_to_string(d.join("again/table.csv")).unwrap().lines().nth(1).unwrap().split(',').next(), Some("macenko"));
}
