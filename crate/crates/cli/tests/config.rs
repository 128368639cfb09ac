use msceqf_cli::config::Config;
use msceqf_cli::CliError;
use proptest::prelude::*;

#[test]
fn serialized_config_parses_back() {
    let mut c = Config::default();
    c.seed = 17;
    c.experiment.extrinsic_error = Some([10.0, 0.05]);
    c.filter.q_scale = 100.0;
    let text = c.to_toml();
    assert_eq!(Config::parse(&text).unwrap(), c);
    assert_eq!(Config::parse(&text).unwrap().to_toml(), text);
}

#[test]
fn unknown_keys_and_sections_are_rejected() {
    for text in ["speed = 1\n", "[camera]\nk1 = 0.1\n", "[distortion]\nk1 = 0.1\n"] {
        assert!(matches!(Config::parse(text), Err(CliError::Config(_))), "{text}");
    }
}

#[test]
fn every_std_dev_must_be_positive() {
    let keys = [
        ("attitude_deg", "deg"),
        ("velocity", "m/s"),
        ("position", "m"),
        ("gyro_bias", "rad/s"),
        ("accel_bias", "m/s²"),
        ("extrinsic_rot_deg", "deg"),
        ("extrinsic_trans", "m"),
        ("focal", "px"),
        ("center", "px"),
    ];
    for (k, unit) in keys {
        for v in ["0.0", "-1.0", "nan"] {
            let e = Config::parse(&format!("[initial_std]\n{k} = {v}\n")).unwrap_err().to_string();
            assert!(e.contains(&format!("initial_std.{k}: must be > 0 {unit}")), "{e}");
        }
    }
}

#[test]
fn window_and_triangulation_gates_are_checked() {
    let cases = [
        ("[filter]\nwindow = 0\n", "filter.window"),
        ("[filter]\nmin_obs = 1\n", "filter.min_obs"),
        ("[filter]\nmin_depth = 5.0\nmax_depth = 1.0\n", "filter.max_depth"),
        ("[filter]\nq_scale = 0.0\n", "filter.q_scale"),
        ("[camera]\nrotation = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0]\n", "camera.rotation"),
        ("[imu]\nrate = 5.0\n", "imu.rate"),
        ("[trajectory]\nduration = 0.0\n", "trajectory.duration: must be > 0 s"),
        ("[sweep]\npriors = [[0.0, 0.1]]\n", "sweep.priors"),
        ("[experiment]\ninit = \"perfect\"\n", "unknown variant"),
    ];
    for (text, key) in cases {
        let e = Config::parse(text).unwrap_err().to_string();
        assert!(e.contains(key), "{text}: {e}");
    }
}

proptest! {
    #[test]
    fn parse_never_panics(text in "\\PC{0,200}") {
        let _ = Config::parse(&text);
    }

    #[test]
    fn positive_std_devs_are_accepted(v in 1e-6f64..1e3) {
        let text = format!("[initial_std]\nposition = {v:?}\nfocal = {v:?}\n");
        let c = Config::parse(&text).unwrap();
        prop_assert_eq!(c.initial_std.position, v);
    }
}

#[test]
fn example_config_is_the_default() {
    let text = include_str!("../../../config.example.toml");
    assert_eq!(Config::parse(text).unwrap(), Config::default());
}
