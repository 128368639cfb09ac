//! The fuzz-target properties on stable: corpus seeds and random rows must
//! survive write, read, write unchanged.

use std::fs;
use std::path::PathBuf;

use msceqf_cli::config::Config;
use msceqf_cli::io;
use proptest::prelude::*;

fn corpus(target: &str) -> Vec<String> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<String> =
        fs::read_dir(&dir).unwrap().map(|e| fs::read_to_string(e.unwrap().path()).unwrap()).collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

macro_rules! stable_roundtrip {
    ($read:path, $write:path, $text:expr) => {{
        let parsed = $read("seed", $text);
        parsed.map(|p| {
            let once = $write(&p);
            let twice = $write(&$read("seed", &once).expect("written file parses"));
            assert_eq!(once, twice);
            once
        })
    }};
}

#[test]
fn corpus_seeds_parse_and_roundtrip() {
    for s in corpus("imu_csv") {
        assert_eq!(stable_roundtrip!(io::read_imu, io::write_imu, &s).unwrap().is_empty(), false);
    }
    for s in corpus("tracks_csv") {
        stable_roundtrip!(io::read_tracks, io::write_tracks, &s).unwrap();
    }
    for s in corpus("groundtruth_csv") {
        stable_roundtrip!(io::read_groundtruth, io::write_groundtruth, &s).unwrap();
    }
    for s in corpus("calib_txt") {
        assert_eq!(stable_roundtrip!(io::read_calib, io::write_calib, &s).unwrap(), s);
    }
    for s in corpus("estimate_csv") {
        assert_eq!(stable_roundtrip!(io::read_estimate, io::write_estimate, &s).unwrap(), s);
    }
    for s in corpus("config") {
        let c = Config::parse(&s).unwrap();
        assert_eq!(Config::parse(&c.to_toml()).unwrap(), c);
    }
}

fn num() -> impl Strategy<Value = f64> {
    prop_oneof![
        any::<f64>().prop_filter("finite", |x| x.is_finite()),
        -1e3f64..1e3,
        Just(0.0),
        Just(-0.0),
    ]
}

proptest! {
    #[test]
    fn imu_rows_roundtrip_bitwise(rows in prop::collection::vec(prop::array::uniform7(num()), 0..20)) {
        let mut text = format!("{}\n", io::IMU_HEADER);
        let mut t = 0.0;
        for r in &rows {
            t += 1.0 + r[0].abs().min(1e3);
            text.push_str(&io::fmt_f64(t));
            for v in &r[1..] {
                text.push(',');
                text.push_str(&io::fmt_f64(*v));
            }
            text.push('\n');
        }
        let parsed = io::read_imu("p", &text).unwrap();
        prop_assert_eq!(parsed.len(), rows.len());
        prop_assert_eq!(io::write_imu(&parsed), text);
    }

    #[test]
    fn arbitrary_text_never_panics(text in "[0-9eE.,+\\-#a-z \n]{0,300}") {
        let _ = stable_roundtrip!(io::read_imu, io::write_imu, &text);
        let _ = stable_roundtrip!(io::read_tracks, io::write_tracks, &text);
        let _ = stable_roundtrip!(io::read_groundtruth, io::write_groundtruth, &text);
        let _ = stable_roundtrip!(io::read_calib, io::write_calib, &text);
        let _ = stable_roundtrip!(io::read_estimate, io::write_estimate, &text);
    }

    #[test]
    fn track_rows_roundtrip(obs in prop::collection::btree_set((0u32..50, 0u64..8), 0..40), uv in prop::array::uniform2(num())) {
        let mut text = format!("{}\n", io::TRACKS_HEADER);
        for (k, id) in &obs {
            text.push_str(&format!("{},{id},{},{}\n", io::fmt_f64(*k as f64 * 0.1), io::fmt_f64(uv[0]), io::fmt_f64(uv[1])));
        }
        let tr = io::read_tracks("p", &text).unwrap();
        prop_assert_eq!(tr.iter().map(|t| t.obs.len()).sum::<usize>(), obs.len());
        prop_assert_eq!(io::write_tracks(&tr), text);
    }
}
