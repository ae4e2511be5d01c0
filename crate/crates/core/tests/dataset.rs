use mammo_core::cnn::{ABNORMAL, NORMAL};
use mammo_core::dataset::{
    ground_truth_mask, ground_truth_union, load_dataset, parse_info, MiasRecord,
};
use mammo_core::image::GrayImage;
use mammo_core::pnm::save;
use mammo_core::Error;

fn record(line: &str) -> MiasRecord {
    parse_info(line).unwrap().remove(0)
}

#[test]
fn circle_area_close_to_analytic() {
    let m = ground_truth_mask(&record("mdb010 F CIRC B 300 500 50"), 1024, 1024).unwrap();
    let area = std::f64::consts::PI * 2500.0;
    assert!((m.count() as f64 - area).abs() / area < 0.02);
}

#[test]
fn radius_zero_is_one_pixel_at_flipped_row() {
    let m = ground_truth_mask(&record("mdb010 F CIRC B 30 10 0"), 64, 64).unwrap();
    assert_eq!(m.count(), 1);
    assert!(m.get(54, 30));
}

#[test]
fn circle_centre_uses_bottom_left_origin() {
    let m = ground_truth_mask(&record("mdb010 F SPIC M 20 15 4"), 64, 48).unwrap();
    assert!(m.get(33, 20));
    assert!(!m.get(15, 20));
}

#[test]
fn border_circles_are_clipped_but_nonempty() {
    for line in [
        "mdb1 F CIRC B 0 0 6",
        "mdb1 F CIRC B 1024 1024 6",
        "mdb1 F CIRC B 0 1024 3",
    ] {
        let m = ground_truth_mask(&record(line), 1024, 1024).unwrap();
        assert!(m.count() > 0, "{line}");
    }
}

#[test]
fn normal_record_has_no_mask() {
    assert!(matches!(
        ground_truth_mask(&record("mdb003 D NORM"), 64, 64),
        Err(Error::Argument(_))
    ));
}

#[test]
fn multi_lesion_union() {
    let recs = parse_info("mdb005 F CIRC B 10 50 4\nmdb005 F CIRC B 50 10 4\n").unwrap();
    let u = ground_truth_union(&recs, 64, 64).unwrap().unwrap();
    let a = ground_truth_mask(&recs[0], 64, 64).unwrap();
    let b = ground_truth_mask(&recs[1], 64, 64).unwrap();
    assert_eq!(u.count(), a.count() + b.count());
    assert!(
        ground_truth_union(&parse_info("mdb003 D NORM").unwrap(), 64, 64)
            .unwrap()
            .is_none()
    );
}

#[test]
fn loads_directory_and_names_missing_ids() {
    let dir = tempfile::tempdir().unwrap();
    let info = dir.path().join("info.txt");
    std::fs::write(
        &info,
        "mdb001 G CIRC B 10 20 5\nmdb001 G CIRC B 30 20 5\nmdb002 D NORM\n",
    )
    .unwrap();
    for id in ["mdb001", "mdb002"] {
        save(
            &GrayImage::filled(32, 32, 0.5f64),
            dir.path().join(format!("{id}.pgm")),
        )
        .unwrap();
    }
    let set = load_dataset::<f64>(dir.path(), &info).unwrap();
    assert_eq!(set.len(), 2);
    assert_eq!(set[0].label, ABNORMAL);
    assert_eq!(set[0].records.len(), 2);
    assert_eq!(set[1].label, NORMAL);
    assert_eq!(set[1].id(), "mdb002");

    std::fs::write(&info, "mdb001 G CIRC B 10 20 5\nmdb404 D NORM\n").unwrap();
    let err = load_dataset::<f64>(dir.path(), &info).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("mdb404"));
}
