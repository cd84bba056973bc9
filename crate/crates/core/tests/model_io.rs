mod common;

use bayernet::io::{decode_rgb, encode_ppm};
use bayernet::report::ingest_dataset;
use bayernet::{DemosaicModel, Error, RgbImage};
use common::{random_image, rng, small_specs};
use proptest::prelude::*;

#[test]
fn write_read_write_is_byte_identical() {
    for m in [DemosaicModel::zeros_default(), DemosaicModel::he_init(small_specs(5), 3).unwrap()] {
        let bytes = m.to_bytes().unwrap();
        let back = DemosaicModel::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes().unwrap(), bytes);
        // Weights are stored as f32; once rounded they survive unchanged.
        assert_eq!(DemosaicModel::from_bytes(&back.to_bytes().unwrap()).unwrap(), back);
        assert_eq!(back.g.spec, m.g.spec);
    }
}

#[test]
fn file_round_trip_and_errors_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bnm");
    let m = DemosaicModel::he_init(small_specs(3), 1).unwrap();
    m.save(&path).unwrap();
    assert_eq!(DemosaicModel::load(&path).unwrap(), DemosaicModel::from_bytes(&m.to_bytes().unwrap()).unwrap());
    std::fs::write(&path, b"garbage").unwrap();
    let e = DemosaicModel::load(&path).unwrap_err();
    assert!(matches!(e, Error::Format(_)));
    assert!(e.to_string().contains("m.bnm"));
}

#[test]
fn ingest_orders_and_skips() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(51);
    let a = random_image(6, 7, &mut r);
    let b = random_image(8, 5, &mut r);
    bayernet::io::write_rgb(&dir.path().join("b.png"), &a).unwrap();
    bayernet::io::write_rgb(&dir.path().join("a.ppm"), &b).unwrap();
    bayernet::io::write_rgb(&dir.path().join("c.png"), &random_image(4, 9, &mut r)).unwrap();
    std::fs::write(dir.path().join("d.ppm"), b"P6\n9 9\n255\n").unwrap();
    std::fs::write(dir.path().join("notes.txt"), b"ignored").unwrap();
    let got = ingest_dataset(dir.path()).unwrap();
    assert_eq!(got.names, ["a.ppm", "b.png"]);
    assert_eq!(got.images, [b, a]);
    let skipped: Vec<&str> = got.skipped.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(skipped, ["c.png", "d.ppm"]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn truncated_models_fail_cleanly(cut in 0usize..4000) {
        let bytes = DemosaicModel::he_init(small_specs(3), 2).unwrap().to_bytes().unwrap();
        let cut = cut % bytes.len();
        prop_assert!(DemosaicModel::from_bytes(&bytes[..cut]).is_err());
    }

    #[test]
    fn ppm_round_trips(h in 1usize..9, w in 1usize..9, seed in any::<u64>()) {
        let img: RgbImage = random_image(h.max(2), w.max(2), &mut rng(seed));
        prop_assert_eq!(decode_rgb(&encode_ppm(&img)).unwrap(), img);
    }
}
