mod common;

use common::small_setup;
use multistain::msgan::{checkpoint, train_epoch, MsganError};

#[test]
fn save_load_save_is_byte_identical() {
    let (mut w, cfg, xs, ys) = small_setup(11, 4);
    train_epoch(&mut w, &xs, &ys, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.msgan");
    checkpoint::save(&path, &w, Some(&cfg)).unwrap();
    let loaded = checkpoint::load(&path).unwrap();
    assert_eq!(loaded.weights, w);
    assert_eq!(loaded.train, Some(cfg));
    let again = dir.path().join("b.msgan");
    checkpoint::save(&again, &loaded.weights, loaded.train.as_ref()).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    assert_eq!(&std::fs::read(&path).unwrap()[..6], b"MSGAN1");
}

#[test]
fn resuming_matches_an_uninterrupted_run() {
    let (mut straight, cfg, xs, ys) = small_setup(12, 4);
    let mut resumed = straight.clone();
    for _ in 0..2 {
        train_epoch(&mut straight, &xs, &ys, &cfg).unwrap();
    }
    train_epoch(&mut resumed, &xs, &ys, &cfg).unwrap();
    let mut resumed = checkpoint::from_bytes(&checkpoint::to_bytes(&resumed, Some(&cfg))).unwrap().weights;
    train_epoch(&mut resumed, &xs, &ys, &cfg).unwrap();
    assert_eq!(checkpoint::to_bytes(&straight, None), checkpoint::to_bytes(&resumed, None));
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let (w, cfg, _, _) = small_setup(13, 1);
    let bytes = checkpoint::to_bytes(&w, Some(&cfg));
    for cut in [0, 5, 20, bytes.len() - 1] {
        assert!(checkpoint::from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
    }
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert_eq!(checkpoint::from_bytes(&bad).unwrap_err().kind(), "BadCheckpoint");
    let mut nan = bytes.clone();
    let n = nan.len();
    nan[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
    assert!(matches!(checkpoint::from_bytes(&nan), Err(MsganError::Checkpoint(_))));
}
