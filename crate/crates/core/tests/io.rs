use cmps_core::correlators::{self, CorrelationTensor};
use cmps_core::io::{self, CmpsFile, FileKind};
use cmps_core::linalg::c;
use cmps_core::model::build_transfer;
use cmps_core::reconstruction::MdModel;
use cmps_core::simulation::{self, EnsembleSpec};
use cmps_core::Error;
use proptest::prelude::*;
use serde_json::json;

fn temp_path(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("cmps-io-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn corrupted_json_reports_its_position() {
    let path = temp_path("broken.json");
    std::fs::write(&path, "{\n  \"d\": 2,\n  \"Q\": [1, 2\n").unwrap();
    let err = io::read_cmps(&path).unwrap_err();
    assert!(err.is_io());
    let text = err.to_string();
    assert!(text.contains("line") && text.contains("column"), "{text}");
}

#[test]
fn missing_file_is_an_io_error() {
    let err = io::read_tensor(&temp_path("nope.json")).unwrap_err();
    assert!(err.is_io());
}

#[test]
fn tensor_json_and_csv_agree() {
    let values = vec![c(1.0, 0.0), c(0.5, 0.0), c(0.25, -0.125)];
    let ct = CorrelationTensor::new(2, 3, 0.2, false, values).unwrap();
    let (js, cs) = (temp_path("t.json"), temp_path("t.csv"));
    io::write_tensor(&js, &ct).unwrap();
    io::write_tensor(&cs, &ct).unwrap();
    assert_eq!(io::read_tensor(&js).unwrap(), ct);
    let back = io::read_tensor(&cs).unwrap();
    assert_eq!(back.values, ct.values);
    assert!((back.delta_tau - 0.2).abs() < 1e-15);
    let amputated = CorrelationTensor { amputated: true, ..ct };
    assert!(io::tensor_to_csv(&amputated).is_err());
}

#[test]
fn malformed_csv_is_rejected() {
    assert!(matches!(io::tensor_from_csv("t,x\n0,1,0\n"), Err(Error::Format(_))));
    assert!(io::tensor_from_csv("tau,re,im\n0,1,0\n0.1,1\n").is_err());
    assert!(io::tensor_from_csv("tau,re,im\n0,1,0\n0.1,1,0\n0.3,1,0\n").is_err());
}

#[test]
fn tensor_shape_is_checked_on_load() {
    let path = temp_path("short.json");
    std::fs::write(&path, json!({"n": 3, "N": 2, "delta_tau": 0.1, "amputated": false, "values": [[1.0, 0.0]]}).to_string()).unwrap();
    assert!(io::read_tensor(&path).is_err());
}

#[test]
fn md_model_round_trip() {
    let state = simulation::random_cmps(&EnsembleSpec::refined(2, 0.01, 0.1, 3)).unwrap();
    let sd = correlators::spectral_decompose(&build_transfer(&state), state.r()).unwrap();
    let md = MdModel::from_spectral(&sd).unwrap();
    let path = temp_path("md.json");
    io::write_md(&path, &md).unwrap();
    assert_eq!(io::read_md(&path).unwrap(), md);
    assert_eq!(io::validate_file(&path).unwrap(), FileKind::MdModel);
}

#[test]
fn validation_recognizes_file_kinds() {
    let state = simulation::random_cmps(&EnsembleSpec::naive(2, 1.0, 1)).unwrap();
    let cmps_path = temp_path("s.json");
    io::write_json(&cmps_path, &CmpsFile::from_state(&state, None, json!({}))).unwrap();
    assert_eq!(io::validate_file(&cmps_path).unwrap(), FileKind::Cmps);
    let other = temp_path("other.json");
    std::fs::write(&other, "{\"hello\": 1}").unwrap();
    assert!(io::validate_file(&other).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cmps_files_round_trip_bitwise(seed in any::<u64>(), d in 1usize..5) {
        let state = simulation::random_cmps(&EnsembleSpec::naive(d, 1.0, seed)).unwrap();
        let text = serde_json::to_string(&CmpsFile::from_state(&state, None, json!({"seed": seed}))).unwrap();
        let back: CmpsFile = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back.to_state().unwrap(), state);
    }
}
