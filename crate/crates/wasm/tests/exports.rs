use latbeam_wasm::{demo_json, search_json, sweep};

#[test]
fn demo_lists_eight_sequences() {
    let v: serde_json::Value = serde_json::from_str(&demo_json().unwrap()).unwrap();
    assert_eq!(v["path_count"], "8");
    assert_eq!(v["sequences"].as_array().unwrap().len(), 8);
    assert!(v["lattice_text"].as_str().unwrap().starts_with("LATBEAM v1\n"));
}

#[test]
fn search_accepts_k_and_beam() {
    let v: serde_json::Value = serde_json::from_str(&search_json("max_length = 5\n", "inf", 3).unwrap()).unwrap();
    assert_eq!(v["report"]["k"], "inf");
    assert_eq!(v["report"]["b"], 3);
    assert_eq!(v["report"]["stats"]["num_recombinations"], 0);
    let k1: serde_json::Value = serde_json::from_str(&search_json("", "1", 3).unwrap()).unwrap();
    assert_eq!(k1["report"]["k"], "1");
    assert!(k1["nodes"].as_u64().unwrap() >= 1);
}

#[test]
fn bad_input_is_an_error_message() {
    assert!(search_json("", "zero", 3).is_err());
    assert!(search_json("", "1", 0).is_err());
    let err = sweep("nonsense = 1\n").unwrap_err();
    assert!(err.contains("nonsense"), "{err}");
}

#[test]
fn sweep_returns_csv() {
    let csv = sweep("instances = 2\nmax_length = 5\nk_values = [1, \"inf\"]\n").unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("inf,8,"));
}
