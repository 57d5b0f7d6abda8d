//! Frames and overlaps survive a trip through files on disk.

use blochframe::frames::{frame_2d, FrameOptions};
use blochframe::homotopy::contract_columns_1d;
use blochframe::io::{
    emit_field, parse_mmn, provider_from_mmn, read_field, write_mmn, FieldData, FieldKind, MmnData,
    RunConfig, Window,
};
use blochframe::matcore::max_diff;
use blochframe::models::{kane_mele, KaneMeleParams};
use blochframe::{KGrid, ModelProvider, Tolerances};

#[test]
fn frame_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let tol = Tolerances::default();
    let model = kane_mele(KaneMeleParams::new(0.0, 1.0)).unwrap();
    let p = ModelProvider::new(&model, &KGrid::square(16).unwrap(), &tol).unwrap();
    let f = frame_2d(&p, &FrameOptions::default()).unwrap();
    let path = dir.path().join("frame.field");
    emit_field(&FieldData::frame(&f, &tol).unwrap(), &path).unwrap();
    let back = read_field(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back.header.kind, FieldKind::Frame);
    assert_eq!(back.values, f.coeffs());
    let meta: serde_json::Value = serde_json::from_str(&back.header.meta).unwrap();
    assert_eq!(meta["frame"]["seed"], 0);
}

#[test]
fn homotopy_file_keeps_every_slice() {
    let dir = tempfile::tempdir().unwrap();
    let tol = Tolerances::default();
    let model = kane_mele(KaneMeleParams::new(0.0, 1.0)).unwrap();
    let p = ModelProvider::new(&model, &KGrid::square(12).unwrap(), &tol).unwrap();
    let lp = blochframe::frames::obstruction_2d(&p, &tol).unwrap();
    assert_eq!(lp.grid().dim(), 1);
    let h = contract_columns_1d(&lp, 9, 0, &tol).unwrap();
    let path = dir.path().join("h.field");
    emit_field(&FieldData::homotopy(&h, &tol).unwrap(), &path).unwrap();
    let back = read_field(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back.header.t_points, 9);
    assert_eq!(back.values.len(), 9 * 12);
}

#[test]
fn mmn_file_and_config_drive_the_same_frame() {
    let dir = tempfile::tempdir().unwrap();
    let tol = Tolerances::default();
    let grid = KGrid::square(10).unwrap();
    let model = kane_mele(KaneMeleParams::new(6.0, 1.0)).unwrap();
    let all = ModelProvider::new(&model.clone().with_occupation(4).unwrap(), &grid, &tol).unwrap();
    let offsets = vec![vec![1, 0], vec![0, 1], vec![-1, 0], vec![0, -1]];
    let mmn = dir.path().join("km.mmn");
    std::fs::write(
        &mmn,
        write_mmn(&MmnData::from_provider(&all, &offsets, "km").unwrap()),
    )
    .unwrap();

    let conf = dir.path().join("run.conf");
    std::fs::write(
        &conf,
        format!("mmn = {}\nwindow = 1-2\ngrid = 10x10\n", mmn.display()),
    )
    .unwrap();
    let cfg = RunConfig::from_path(&conf).unwrap();
    assert_eq!(cfg.window().unwrap(), Window { start: 0, end: 2 });
    let data = parse_mmn(&std::fs::read_to_string(cfg.mmn.as_ref().unwrap()).unwrap()).unwrap();
    let ingested = provider_from_mmn(
        &data,
        cfg.window().unwrap(),
        &cfg.grid().unwrap(),
        cfg.strict,
    )
    .unwrap();

    let direct = ModelProvider::new(&model, &grid, &tol).unwrap();
    let a = frame_2d(&direct, &FrameOptions::default()).unwrap();
    let b = frame_2d(&ingested, &FrameOptions::default()).unwrap();
    let diff = (0..grid.len())
        .map(|k| max_diff(a.at(k), b.at(k)))
        .fold(0.0, f64::max);
    assert!(diff < 1e-8, "{diff}");
}
