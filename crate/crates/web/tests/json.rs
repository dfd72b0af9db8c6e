use safetynet_web::{cost_curves_json, presets_json, simulate_json};
use serde_json::Value;

#[test]
fn presets_list_every_bundled_scenario() {
    let v: Vec<String> = serde_json::from_str(&presets_json()).unwrap();
    assert!(v.contains(&"fig4_udp".to_string()) && v.contains(&"fig5_tcp".to_string()));
}

#[test]
fn cost_curves_cover_all_protocols_over_the_grid() {
    let rows: Vec<Value> = serde_json::from_str(&cost_curves_json(3.75e6, 5.0, 500.0, 100.0, 1).unwrap()).unwrap();
    assert_eq!(rows.len(), 4 * 6);
    let first = &rows[0];
    assert_eq!(first["protocol"], "safety_net");
    assert_eq!(first["ota_signaling"], 584);
}

#[test]
fn cost_curves_reject_degenerate_grids() {
    assert!(cost_curves_json(1e5, 5.0, 500.0, 0.0, 1).is_err());
    assert!(cost_curves_json(1e5, 5.0, 1e9, 1.0, 1).is_err());
}

#[test]
fn tcp_run_carries_sequence_series() {
    let v: Value = serde_json::from_str(&simulate_json("fig5_tcp", "fmipv6", 1, 20).unwrap()).unwrap();
    assert_eq!(v["summary"]["protocol"], "fmipv6_predictive");
    let sent = v["tcp"]["sent"].as_array().unwrap();
    assert!(sent.len() > 50);
    assert!(!v["markers"].as_array().unwrap().is_empty());
}

#[test]
fn udp_run_has_rates_but_no_sequence() {
    let v: Value = serde_json::from_str(&simulate_json("fig4_udp", "safety_net", 1, 1).unwrap()).unwrap();
    assert!(v["tcp"].is_null());
    let rate = v["rate"].as_array().unwrap();
    assert_eq!(rate.len(), 100);
    assert_eq!(v["summary"]["app_losses"], 0);
}

#[test]
fn bad_inputs_are_reported() {
    assert!(simulate_json("nope", "safety_net", 1, 1).unwrap_err().contains("nope"));
    assert!(simulate_json("fig4_udp", "carrier_pigeon", 1, 1).is_err());
}
